//! Quantized-tensor reuse planning.
//!
//! A layer's forward and backward passes form a static computation graph:
//! tensors are nodes, operators are edges. Any tensor consumed in quantized
//! form at two or more sites needs to be quantized only once per training
//! step; that covers both tensors with multiple forward consumers and
//! tensors a backward operator shares with the forward pass. The plan
//! records those decisions and predicts the per-step quantization call
//! count, which the instrumented layers must match exactly.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::OpsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Forward,
    Backward,
}

/// One operator: which tensors it reads (and whether it reads them in
/// quantized form) and which it produces.
#[derive(Debug, Clone)]
pub struct OpNode {
    pub name: &'static str,
    pub phase: Phase,
    /// `(tensor, consumed quantized)` pairs.
    pub inputs: Vec<(&'static str, bool)>,
    pub outputs: Vec<&'static str>,
}

/// Static description of one layer's training-step computation graph.
#[derive(Debug, Clone)]
pub struct LayerGraph {
    pub ops: Vec<OpNode>,
}

/// Per-tensor reuse decision.
#[derive(Debug, Clone)]
pub struct PlanEntry {
    pub tensor: String,
    /// Operator names consuming this tensor in quantized form.
    pub consumers: Vec<String>,
    /// True when the tensor should be quantized once and cached.
    pub quantize_once: bool,
    /// True when consumers span both the forward and backward phases.
    pub spans_phases: bool,
}

#[derive(Debug, Clone)]
pub struct QuantReusePlan {
    pub entries: Vec<PlanEntry>,
}

impl QuantReusePlan {
    pub fn entry(&self, tensor: &str) -> Option<&PlanEntry> {
        self.entries.iter().find(|e| e.tensor == tensor)
    }

    /// Tensors flagged quantize-once.
    pub fn flagged(&self) -> impl Iterator<Item = &PlanEntry> {
        self.entries.iter().filter(|e| e.quantize_once)
    }

    /// Predicted quantization calls per training step: one per tensor with
    /// caching, one per consumption site without.
    pub fn predicted_quantize_calls(&self, reuse: bool) -> usize {
        if reuse {
            self.entries.len()
        } else {
            self.entries.iter().map(|e| e.consumers.len()).sum()
        }
    }

    /// Predicted cache hits per step with caching enabled: every
    /// consumption beyond a tensor's first.
    pub fn predicted_reuse_hits(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.consumers.len().saturating_sub(1))
            .sum()
    }
}

fn check_acyclic(graph: &LayerGraph) -> Result<(), OpsError> {
    // Kahn's algorithm over operator nodes linked through tensors.
    let mut producer: HashMap<&str, usize> = HashMap::new();
    for (i, op) in graph.ops.iter().enumerate() {
        for out in &op.outputs {
            producer.insert(out, i);
        }
    }
    let mut indegree = vec![0usize; graph.ops.len()];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); graph.ops.len()];
    for (i, op) in graph.ops.iter().enumerate() {
        for (input, _) in &op.inputs {
            if let Some(&p) = producer.get(input) {
                succ[p].push(i);
                indegree[i] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = indegree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| i)
        .collect();
    let mut seen = 0usize;
    while let Some(i) = queue.pop() {
        seen += 1;
        for &j in &succ[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                queue.push(j);
            }
        }
    }
    if seen == graph.ops.len() {
        Ok(())
    } else {
        let stuck = graph
            .ops
            .iter()
            .enumerate()
            .find(|(i, _)| indegree[*i] > 0)
            .map(|(_, op)| op.name.to_string())
            .unwrap_or_default();
        Err(OpsError::CyclicGraph(stuck))
    }
}

/// Derives the reuse plan from a layer graph: collect the quantized
/// consumers of every tensor and flag quantize-once for any tensor with
/// two or more.
pub fn plan_quant_reuse(graph: &LayerGraph) -> Result<QuantReusePlan, OpsError> {
    check_acyclic(graph)?;
    let mut consumers: BTreeMap<&str, Vec<(&str, Phase)>> = BTreeMap::new();
    for op in &graph.ops {
        for &(input, quantized) in &op.inputs {
            if quantized {
                consumers.entry(input).or_default().push((op.name, op.phase));
            }
        }
    }
    let entries = consumers
        .into_iter()
        .map(|(tensor, sites)| {
            let phases: HashSet<_> = sites.iter().map(|(_, p)| *p).collect();
            PlanEntry {
                tensor: tensor.to_string(),
                consumers: sites.iter().map(|(n, _)| n.to_string()).collect(),
                quantize_once: sites.len() >= 2,
                spans_phases: phases.len() == 2,
            }
        })
        .collect();
    Ok(QuantReusePlan { entries })
}

/// A plain linear layer: forward product plus the two backward products.
pub fn linear_layer_graph() -> LayerGraph {
    use Phase::*;
    LayerGraph {
        ops: vec![
            OpNode {
                name: "forward",
                phase: Forward,
                inputs: vec![("x", true), ("w", true)],
                outputs: vec!["y"],
            },
            OpNode {
                name: "weight_grad",
                phase: Backward,
                inputs: vec![("x", true), ("d_y", true)],
                outputs: vec!["d_w"],
            },
            OpNode {
                name: "input_grad",
                phase: Backward,
                inputs: vec![("d_y", true), ("w", true)],
                outputs: vec!["d_x"],
            },
        ],
    }
}

/// The GCN layer: a linear projection followed by normalized aggregation.
/// The normalization coefficients stay full precision.
pub fn gcn_layer_graph() -> LayerGraph {
    use Phase::*;
    LayerGraph {
        ops: vec![
            OpNode {
                name: "project",
                phase: Forward,
                inputs: vec![("h_in", true), ("w", true)],
                outputs: vec!["x1"],
            },
            OpNode {
                name: "aggregate",
                phase: Forward,
                inputs: vec![("norm", false), ("x1", true)],
                outputs: vec!["h_out"],
            },
            OpNode {
                name: "aggregate_grad",
                phase: Backward,
                inputs: vec![("norm", false), ("d_h_out", true)],
                outputs: vec!["d_x1"],
            },
            OpNode {
                name: "weight_grad",
                phase: Backward,
                inputs: vec![("h_in", true), ("d_x1", true)],
                outputs: vec!["d_w"],
            },
            OpNode {
                name: "input_grad",
                phase: Backward,
                inputs: vec![("d_x1", true), ("w", true)],
                outputs: vec!["d_h_in"],
            },
        ],
    }
}

/// The GAT layer: projection, per-head consolidation, additive SDDMM with
/// activation, segment softmax (full precision), edge-scaled aggregation,
/// and the hand-derived backward chain. Attention scalars are never
/// quantized.
pub fn gat_layer_graph() -> LayerGraph {
    use Phase::*;
    LayerGraph {
        ops: vec![
            OpNode {
                name: "project",
                phase: Forward,
                inputs: vec![("h_in", true), ("w", true)],
                outputs: vec!["h_prime"],
            },
            OpNode {
                name: "consolidate_src",
                phase: Forward,
                inputs: vec![("h_prime", true), ("a_src", true)],
                outputs: vec!["s"],
            },
            OpNode {
                name: "consolidate_dst",
                phase: Forward,
                inputs: vec![("h_prime", true), ("a_dst", true)],
                outputs: vec!["d"],
            },
            OpNode {
                name: "edge_scores",
                phase: Forward,
                inputs: vec![("s", true), ("d", true)],
                outputs: vec!["scores_pre"],
            },
            OpNode {
                name: "activation",
                phase: Forward,
                inputs: vec![("scores_pre", false)],
                outputs: vec!["scores_act"],
            },
            OpNode {
                name: "attention",
                phase: Forward,
                inputs: vec![("scores_act", false)],
                outputs: vec!["alpha"],
            },
            OpNode {
                name: "aggregate",
                phase: Forward,
                inputs: vec![("alpha", false), ("h_prime", true)],
                outputs: vec!["h_out"],
            },
            OpNode {
                name: "aggregate_grad_features",
                phase: Backward,
                inputs: vec![("alpha", false), ("d_h_out", true)],
                outputs: vec!["d_h_prime_agg"],
            },
            OpNode {
                name: "aggregate_grad_alpha",
                phase: Backward,
                inputs: vec![("d_h_out", true), ("h_prime", true)],
                outputs: vec!["d_alpha"],
            },
            OpNode {
                name: "attention_grad",
                phase: Backward,
                inputs: vec![("alpha", false), ("d_alpha", false)],
                outputs: vec!["d_scores_act"],
            },
            OpNode {
                name: "activation_grad",
                phase: Backward,
                inputs: vec![("d_scores_act", false), ("scores_pre", false)],
                outputs: vec!["d_scores"],
            },
            OpNode {
                name: "score_grad_src",
                phase: Backward,
                inputs: vec![("d_scores", true)],
                outputs: vec!["d_s"],
            },
            OpNode {
                name: "score_grad_dst",
                phase: Backward,
                inputs: vec![("d_scores", true)],
                outputs: vec!["d_d"],
            },
            OpNode {
                name: "attn_vec_grad_src",
                phase: Backward,
                inputs: vec![("d_s", true), ("h_prime", true)],
                outputs: vec!["d_a_src"],
            },
            OpNode {
                name: "attn_vec_grad_dst",
                phase: Backward,
                inputs: vec![("d_d", true), ("h_prime", true)],
                outputs: vec!["d_a_dst"],
            },
            OpNode {
                name: "feature_grad_src",
                phase: Backward,
                inputs: vec![("d_s", true), ("a_src", true)],
                outputs: vec!["d_h_prime_s"],
            },
            OpNode {
                name: "feature_grad_dst",
                phase: Backward,
                inputs: vec![("d_d", true), ("a_dst", true)],
                outputs: vec!["d_h_prime_d"],
            },
            OpNode {
                name: "sum_feature_grads",
                phase: Backward,
                inputs: vec![
                    ("d_h_prime_agg", false),
                    ("d_h_prime_s", false),
                    ("d_h_prime_d", false),
                ],
                outputs: vec!["d_h_prime"],
            },
            OpNode {
                name: "weight_grad",
                phase: Backward,
                inputs: vec![("h_in", true), ("d_h_prime", true)],
                outputs: vec!["d_w"],
            },
            OpNode {
                name: "input_grad",
                phase: Backward,
                inputs: vec![("d_h_prime", true), ("w", true)],
                outputs: vec!["d_h_in"],
            },
        ],
    }
}
