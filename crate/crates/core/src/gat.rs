//! Multi-head graph attention encoder.
//!
//! Canonical GAT mechanics: per head h, node i aggregates Σ_{j∈N(i)} α_ij·W_h x_j
//! with α_ij = softmax over N(i) of leaky_relu(a_hᵀ[W_h x_i ‖ W_h x_j]);
//! head outputs are concatenated, ELU sits between stacked layers.

use crate::error::ModelError;
use crate::graph::SampleGraph;
use crate::params::{Init, Leaves, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor};

type Result<T> = std::result::Result<T, ModelError>;

/// One attention head: a linear map `w` (d_in×d_head) and the attention
/// vector `a` (2·d_head×1).
#[derive(Debug, Clone)]
pub struct GatHeadParams {
    pub w: ParamId,
    pub a: ParamId,
}

#[derive(Debug, Clone)]
pub struct GatLayerParams {
    pub heads: Vec<GatHeadParams>,
    pub d_in: usize,
    pub d_head: usize,
    pub slope: f64,
}

impl GatLayerParams {
    pub fn output_dim(&self) -> usize {
        self.heads.len() * self.d_head
    }
}

/// Stack of GAT layers; `output_dim` of layer ℓ feeds layer ℓ+1.
#[derive(Debug, Clone)]
pub struct GatEncoderParams {
    pub layers: Vec<GatLayerParams>,
}

impl GatEncoderParams {
    /// Registers encoder parameters under `{prefix}.l{ℓ}.h{h}.{w,a}`.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        n_layers: usize,
        n_heads: usize,
        d_head: usize,
        slope: f64,
        seed: u64,
    ) -> Self {
        let mut layers = Vec::with_capacity(n_layers);
        let mut dim = d_in;
        for l in 0..n_layers {
            let mut heads = Vec::with_capacity(n_heads);
            for h in 0..n_heads {
                let w = store.add(
                    &format!("{prefix}.l{l}.h{h}.w"),
                    vec![dim, d_head],
                    Init::Xavier {
                        fan_in: dim,
                        fan_out: d_head,
                    },
                    seed,
                );
                let a = store.add(
                    &format!("{prefix}.l{l}.h{h}.a"),
                    vec![2 * d_head, 1],
                    Init::Xavier {
                        fan_in: 2 * d_head,
                        fan_out: 1,
                    },
                    seed,
                );
                heads.push(GatHeadParams { w, a });
            }
            layers.push(GatLayerParams {
                heads,
                d_in: dim,
                d_head,
                slope,
            });
            dim = n_heads * d_head;
        }
        Self { layers }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim())
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| l.heads.iter().flat_map(|h| [h.w, h.a]))
            .collect()
    }
}

/// One GAT layer over the graph's neighborhoods; heads concatenated.
pub fn gat_layer(
    tape: &mut Tape,
    leaves: &Leaves,
    features: &Tensor,
    graph: &SampleGraph,
    params: &GatLayerParams,
) -> Result<Tensor> {
    let n = features.rows();
    assert_eq!(graph.n(), n, "graph size must match feature rows");
    let d_head = params.d_head;
    let mut head_outputs = Vec::with_capacity(params.heads.len());
    let self_rows: Vec<usize> = (0..d_head).collect();
    let other_rows: Vec<usize> = (d_head..2 * d_head).collect();
    for head in &params.heads {
        let w = leaves.get(head.w);
        let a = leaves.get(head.a);
        let transformed = tape.matmul(features, w)?;
        let a_self = tape.gather_rows(a, &self_rows)?;
        let a_other = tape.gather_rows(a, &other_rows)?;
        let score_self = tape.matmul(&transformed, &a_self)?; // n×1
        let score_other = tape.matmul(&transformed, &a_other)?; // n×1
        let pair_scores = tape.outer_sum(&score_self, &score_other)?; // n×n
        let activated = tape.leaky_relu(&pair_scores, params.slope)?;
        let attention = tape.row_softmax(&activated, Some(graph.mask()))?;
        let aggregated = tape.matmul(&attention, &transformed)?;
        head_outputs.push(aggregated);
    }
    let refs: Vec<&Tensor> = head_outputs.iter().collect();
    Ok(tape.concat_cols(&refs)?)
}

/// Runs the full encoder stack; ELU between layers, none after the last.
pub fn encode(
    tape: &mut Tape,
    leaves: &Leaves,
    graph: &SampleGraph,
    features: &Tensor,
    encoder: &GatEncoderParams,
) -> Result<Tensor> {
    let mut h = features.clone();
    for (l, layer) in encoder.layers.iter().enumerate() {
        if l > 0 {
            h = tape.elu(&h);
        }
        h = gat_layer(tape, leaves, &h, graph, layer)?;
    }
    Ok(h)
}
