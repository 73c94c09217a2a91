//! A small hand-constructed two-head attention fixture shared by the test
//! suites.
//!
//! Four nodes, five structural edges (ids are list positions):
//! e0: v1->v0, e1: v3->v0, e2: v1->v2, e3: v0->v3, e4: v2->v3.
//! The runnable variant appends e5: v0->v1 so every destination has a
//! nonempty softmax segment.
//!
//! The layer uses two heads of width two. Input features are the identity,
//! so the projection output equals the weight matrix row for row. v2's
//! projection row was solved (in extended precision) so that the
//! attention-weighted aggregation at v3 reproduces the reference output
//! `[0.49, 0.61, 0.77, -0.58]` under the fixture's own attention scores;
//! v3's row keeps its first/third entries so the destination consolidation
//! at v3 is `[0.20, 0.05]`, with large negative filler entries that drive
//! e1's score negative in both heads (the activation then zeroes its
//! gradient).

use crate::graph::{EdgeList, GraphViews};
use crate::layers::GatLayerParams;
use crate::tensor::DenseTensor;

/// Structural five-edge fixture.
pub fn toy_edges() -> EdgeList {
    EdgeList::new(4, vec![(1, 0), (3, 0), (1, 2), (0, 3), (2, 3)])
}

/// Runnable six-edge fixture: every node has at least one incoming edge.
pub fn toy_forward_edges() -> EdgeList {
    let mut el = toy_edges();
    el.edges.push((0, 1));
    el
}

/// Views over the runnable fixture.
pub fn toy_views() -> GraphViews {
    GraphViews::build(&toy_forward_edges())
}

/// Projected node features (also the weight matrix, since inputs are the
/// identity). Rows are nodes; columns are two heads of width two.
pub fn toy_h_prime() -> DenseTensor {
    DenseTensor::from_vec(
        4,
        4,
        vec![
            0.59, 0.73, 0.51, -0.65, // v0
            0.76, 0.73, 0.79, -1.07, // v1
            0.31827276, 0.40392732, 0.99474643, -0.51949135, // v2 (solved)
            0.20, -1.00, 0.05, -1.00, // v3
        ],
    )
    .expect("fixture shape")
}

/// Layer parameters: projection = `toy_h_prime`, source attention vectors
/// from the worked consolidation, destination vectors selecting each
/// head's first coordinate. Zero activation slope matches the two-decimal
/// reference values.
pub fn toy_gat_params() -> GatLayerParams {
    GatLayerParams {
        w: toy_h_prime(),
        a_src: DenseTensor::from_vec(2, 2, vec![0.91, 0.90, 0.42, 0.62]).expect("fixture shape"),
        a_dst: DenseTensor::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).expect("fixture shape"),
        leaky_slope: 0.0,
    }
}

/// Identity input features for the runnable fixture.
pub fn toy_h_in() -> DenseTensor {
    DenseTensor::identity(4)
}

/// Output-gradient fixture for the aggregation backward: v0 and v2 carry
/// the reference gradients, other rows are zero.
pub fn toy_d_h_out() -> DenseTensor {
    DenseTensor::from_vec(
        4,
        4,
        vec![
            0.54, 0.51, -0.26, -0.07, // v0
            0.0, 0.0, 0.0, 0.0, // v1
            1.02, 1.06, 0.07, 0.56, // v2
            0.0, 0.0, 0.0, 0.0, // v3
        ],
    )
    .expect("fixture shape")
}
