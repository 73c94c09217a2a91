//! Graph ingestion and the structural views the sparse primitives need:
//! CSR over out-edges, reverse CSR over in-edges, and node-by-edge
//! incidence lists. Edge ids are positions in the original edge list and
//! stay stable across every derived view.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::tensor::DenseTensor;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: node id {id} out of range (num_nodes = {num_nodes})")]
    IdOutOfRange {
        line: usize,
        id: usize,
        num_nodes: usize,
    },
    #[error("empty file")]
    Empty,
    #[error("node {node} has degree zero; gcn normalization requires self-loops")]
    ZeroDegree { node: usize },
}

/// Ordered edge list; edge ids are list positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl EdgeList {
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Self {
        debug_assert!(edges.iter().all(|&(s, d)| s < num_nodes && d < num_nodes));
        EdgeList { num_nodes, edges }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Same ids, swapped endpoints.
    pub fn transposed(&self) -> EdgeList {
        EdgeList {
            num_nodes: self.num_nodes,
            edges: self.edges.iter().map(|&(s, d)| (d, s)).collect(),
        }
    }
}

/// Compressed sparse rows with per-slot original edge ids. Within a row,
/// slots are sorted by column then edge id (canonical order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphCsr {
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub edge_ids: Vec<usize>,
}

impl GraphCsr {
    pub fn num_rows(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.col_indices.len()
    }

    /// `(column, edge id)` slots of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        range.map(move |slot| (self.col_indices[slot], self.edge_ids[slot]))
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }
}

/// Node-by-edge incidence: row v lists the ids of edges whose destination
/// is v, ascending. Pairs node-to-edge aggregation down to two operands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceCsr {
    pub row_offsets: Vec<usize>,
    pub incident_edge_ids: Vec<usize>,
}

impl IncidenceCsr {
    pub fn num_rows(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.incident_edge_ids[self.row_offsets[r]..self.row_offsets[r + 1]]
    }
}

fn build_grouped(
    num_nodes: usize,
    slots: impl Iterator<Item = (usize, usize, usize)>, // (row, col, edge id)
) -> GraphCsr {
    let mut rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_nodes];
    let mut count = 0usize;
    for (r, c, e) in slots {
        rows[r].push((c, e));
        count += 1;
    }
    let mut row_offsets = Vec::with_capacity(num_nodes + 1);
    let mut col_indices = Vec::with_capacity(count);
    let mut edge_ids = Vec::with_capacity(count);
    row_offsets.push(0);
    for row in &mut rows {
        row.sort_unstable();
        for &(c, e) in row.iter() {
            col_indices.push(c);
            edge_ids.push(e);
        }
        row_offsets.push(col_indices.len());
    }
    GraphCsr {
        row_offsets,
        col_indices,
        edge_ids,
    }
}

/// CSR over out-edges: row u lists (dst, edge id) for each edge u -> dst.
pub fn build_csr(el: &EdgeList) -> GraphCsr {
    build_grouped(
        el.num_nodes,
        el.edges.iter().enumerate().map(|(e, &(s, d))| (s, d, e)),
    )
}

/// CSR of the transposed edge set with preserved edge ids: row v lists
/// (src, edge id) for each edge src -> v.
pub fn build_reverse_csr(el: &EdgeList) -> GraphCsr {
    build_grouped(
        el.num_nodes,
        el.edges.iter().enumerate().map(|(e, &(s, d))| (d, s, e)),
    )
}

/// Incidence rows over incoming edges: row v holds ids of edges with
/// destination v, ascending.
pub fn build_incidence(el: &EdgeList) -> IncidenceCsr {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); el.num_nodes];
    for (e, &(_, d)) in el.edges.iter().enumerate() {
        rows[d].push(e);
    }
    let mut row_offsets = vec![0usize];
    let mut incident_edge_ids = Vec::with_capacity(el.num_edges());
    for row in rows {
        // already ascending: edges visited in id order
        incident_edge_ids.extend(row);
        row_offsets.push(incident_edge_ids.len());
    }
    IncidenceCsr {
        row_offsets,
        incident_edge_ids,
    }
}

/// Appends reverse edges (skipping pairs already present) and one self-loop
/// per node that lacks one. New edges get fresh ids at the end: reverses in
/// original edge order first, then self-loops in node order.
pub fn augment(el: &EdgeList, add_reverse: bool, add_self_loops: bool) -> EdgeList {
    let mut present: HashSet<(usize, usize)> = el.edges.iter().copied().collect();
    let mut edges = el.edges.clone();
    if add_reverse {
        for &(s, d) in &el.edges {
            if s != d && !present.contains(&(d, s)) {
                present.insert((d, s));
                edges.push((d, s));
            }
        }
    }
    if add_self_loops {
        for v in 0..el.num_nodes {
            if !present.contains(&(v, v)) {
                present.insert((v, v));
                edges.push((v, v));
            }
        }
    }
    EdgeList {
        num_nodes: el.num_nodes,
        edges,
    }
}

/// Per-edge symmetric normalization coefficients
/// `1 / sqrt(deg(src) * deg(dst))`, with deg the in-degree of the
/// (self-loop augmented) graph. Matches the dense row-normalized
/// `D^(-1/2) A D^(-1/2)` formulation.
pub fn gcn_norm(el: &EdgeList) -> Result<Vec<f32>, GraphError> {
    let mut in_deg = vec![0usize; el.num_nodes];
    for &(_, d) in &el.edges {
        in_deg[d] += 1;
    }
    el.edges
        .iter()
        .map(|&(s, d)| {
            if in_deg[s] == 0 {
                return Err(GraphError::ZeroDegree { node: s });
            }
            if in_deg[d] == 0 {
                return Err(GraphError::ZeroDegree { node: d });
            }
            Ok(1.0 / ((in_deg[s] * in_deg[d]) as f32).sqrt())
        })
        .collect()
}

/// All structural views of one graph, built once and shared.
#[derive(Debug, Clone)]
pub struct GraphViews {
    pub edges: EdgeList,
    /// Out-edges of G: row u -> (dst, eid).
    pub csr: GraphCsr,
    /// In-edges of G: row v -> (src, eid).
    pub rev_csr: GraphCsr,
    /// Incoming incidence: row v -> ids of edges into v.
    pub incidence: IncidenceCsr,
    /// Outgoing incidence: row u -> ids of edges out of u.
    pub rev_incidence: IncidenceCsr,
}

impl GraphViews {
    pub fn build(el: &EdgeList) -> Self {
        GraphViews {
            csr: build_csr(el),
            rev_csr: build_reverse_csr(el),
            incidence: build_incidence(el),
            rev_incidence: build_incidence(&el.transposed()),
            edges: el.clone(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.edges.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.num_edges()
    }
}

fn parse_counts(line: &str, lineno: usize, what: &str) -> Result<(usize, usize), GraphError> {
    let mut it = line.split_whitespace();
    let parse = |tok: Option<&str>| -> Result<usize, GraphError> {
        tok.ok_or_else(|| GraphError::Parse {
            line: lineno,
            msg: format!("expected \"{what}\" counts"),
        })?
        .parse()
        .map_err(|_| GraphError::Parse {
            line: lineno,
            msg: format!("bad integer in \"{what}\" header"),
        })
    };
    let a = parse(it.next())?;
    let b = parse(it.next())?;
    if it.next().is_some() {
        return Err(GraphError::Parse {
            line: lineno,
            msg: format!("trailing tokens after \"{what}\" header"),
        });
    }
    Ok((a, b))
}

/// Loads the text edge-list format: first line `V E`, then E lines
/// `src dst` with 0-based decimal ids.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<EdgeList, GraphError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (num_nodes, num_edges) = match lines.next() {
        None => return Err(GraphError::Empty),
        Some((i, line)) => parse_counts(&line?, i + 1, "V E")?,
    };
    let mut edges = Vec::with_capacity(num_edges);
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let (src, dst) = parse_counts(&line, lineno, "src dst")?;
        for id in [src, dst] {
            if id >= num_nodes {
                return Err(GraphError::IdOutOfRange {
                    line: lineno,
                    id,
                    num_nodes,
                });
            }
        }
        edges.push((src, dst));
    }
    if edges.len() != num_edges {
        return Err(GraphError::Parse {
            line: 1,
            msg: format!("header declares {} edges, found {}", num_edges, edges.len()),
        });
    }
    Ok(EdgeList { num_nodes, edges })
}

/// Loads the feature format: first line `V D`, then V lines of D floats.
pub fn load_features(path: impl AsRef<Path>) -> Result<DenseTensor, GraphError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (num_nodes, dim) = match lines.next() {
        None => return Err(GraphError::Empty),
        Some((i, line)) => parse_counts(&line?, i + 1, "V D")?,
    };
    let mut data = Vec::with_capacity(num_nodes * dim);
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let start = data.len();
        for tok in line.split_whitespace() {
            let v: f32 = tok.parse().map_err(|_| GraphError::Parse {
                line: lineno,
                msg: format!("bad float {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: "non-finite feature value".into(),
                });
            }
            data.push(v);
        }
        if data.len() - start != dim {
            return Err(GraphError::Parse {
                line: lineno,
                msg: format!("expected {dim} features, found {}", data.len() - start),
            });
        }
    }
    DenseTensor::from_vec(num_nodes, dim, data).map_err(|_| GraphError::Parse {
        line: 1,
        msg: "feature row count does not match header".into(),
    })
}

/// Loads the label format: V lines, one class id each.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>, GraphError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        labels.push(line.trim().parse().map_err(|_| GraphError::Parse {
            line: i + 1,
            msg: format!("bad label {:?}", line.trim()),
        })?);
    }
    if labels.is_empty() {
        return Err(GraphError::Empty);
    }
    Ok(labels)
}
