//! Dataset loading: graph/feature/label files, augmentation, structural
//! views, normalization coefficients, and train/val/test splits.

use std::path::Path;

use qgnn::graph::{augment, gcn_norm, load_edge_list, load_features, load_labels, GraphError, GraphViews};
use qgnn::rng::RngState;
use qgnn::sparse::EdgeFeatures;
use qgnn::tensor::DenseTensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("feature rows ({features}) do not match node count ({nodes})")]
    FeatureRows { features: usize, nodes: usize },
    #[error("label count ({labels}) does not match node count ({nodes})")]
    LabelRows { labels: usize, nodes: usize },
    #[error("split line {line}: expected 0 (train), 1 (val), or 2 (test)")]
    BadSplit { line: usize },
    #[error("split rows ({rows}) do not match node count ({nodes})")]
    SplitRows { rows: usize, nodes: usize },
    #[error("split leaves the {which} set empty")]
    EmptySplit { which: &'static str },
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// A loaded dataset: the augmented graph with all structural views, its
/// normalization coefficients, features, labels, and node splits.
pub struct LoadedData {
    pub views: GraphViews,
    pub norm: EdgeFeatures,
    pub features: DenseTensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub splits: Splits,
}

/// Random 60/20/20 node split drawn from the given seed.
pub fn random_splits(num_nodes: usize, seed: u64) -> Splits {
    let mut order: Vec<usize> = (0..num_nodes).collect();
    let mut rng = RngState::from_seed(seed ^ 0x5eed_0451);
    for i in (1..order.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    let n_train = (num_nodes * 6) / 10;
    let n_val = (num_nodes * 2) / 10;
    Splits {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    }
}

/// Split file: one line per node, 0 = train, 1 = val, 2 = test.
pub fn load_splits(path: impl AsRef<Path>, num_nodes: usize) -> Result<Splits, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut splits = Splits {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let mut rows = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let node = rows;
        rows += 1;
        match line {
            "0" => splits.train.push(node),
            "1" => splits.val.push(node),
            "2" => splits.test.push(node),
            _ => return Err(DataError::BadSplit { line: i + 1 }),
        }
    }
    if rows != num_nodes {
        return Err(DataError::SplitRows {
            rows,
            nodes: num_nodes,
        });
    }
    for (which, set) in [
        ("train", &splits.train),
        ("val", &splits.val),
        ("test", &splits.test),
    ] {
        if set.is_empty() {
            return Err(DataError::EmptySplit { which });
        }
    }
    Ok(splits)
}

/// Validates raw dataset pieces, augments the graph with reverse edges
/// and self-loops, and builds every structural view.
pub fn prepare(
    edges: qgnn::graph::EdgeList,
    features: DenseTensor,
    labels: Vec<usize>,
    splits: Option<Splits>,
    seed: u64,
) -> Result<LoadedData, DataError> {
    if features.rows() != edges.num_nodes {
        return Err(DataError::FeatureRows {
            features: features.rows(),
            nodes: edges.num_nodes,
        });
    }
    if labels.len() != edges.num_nodes {
        return Err(DataError::LabelRows {
            labels: labels.len(),
            nodes: edges.num_nodes,
        });
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let augmented = augment(&edges, true, true);
    let norm_coeff = gcn_norm(&augmented)?;
    let norm = EdgeFeatures::from_vec(augmented.num_edges(), 1, 1, norm_coeff)
        .expect("coefficient count matches edges");
    let views = GraphViews::build(&augmented);
    let splits = splits.unwrap_or_else(|| random_splits(edges.num_nodes, seed));
    Ok(LoadedData {
        views,
        norm,
        features,
        labels,
        classes,
        splits,
    })
}

/// Prepares an in-memory synthetic dataset with a random split.
pub fn from_dataset(data: &crate::synth::Dataset, seed: u64) -> LoadedData {
    prepare(
        data.edges.clone(),
        data.features.clone(),
        data.labels.clone(),
        None,
        seed,
    )
    .expect("generated datasets are consistent")
}

/// Loads and validates a dataset from the text formats.
pub fn load_dataset(
    graph: impl AsRef<Path>,
    features: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    split: Option<&Path>,
    seed: u64,
) -> Result<LoadedData, DataError> {
    let edges = load_edge_list(graph)?;
    let features = load_features(features)?;
    let labels = load_labels(labels)?;
    let splits = match split {
        Some(path) => Some(load_splits(path, edges.num_nodes)?),
        None => None,
    };
    prepare(edges, features, labels, splits, seed)
}
