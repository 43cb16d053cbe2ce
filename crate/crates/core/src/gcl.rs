//! Graph-contrastive pretraining per omics.
//!
//! Two corrupted views share the graph but mask node features column-wise;
//! a shared GAT encoder plus a projection head map both views into a latent
//! space where the normalized-temperature contrastive loss pulls each node's
//! two views together and pushes the other 2(n−1) rows away. After training,
//! encoder weights transfer into the supervised model; the head is discarded.

use crate::error::{ModelError, TensorError};
use crate::gat::{encode, GatEncoderParams};
use crate::graph::SampleGraph;
use crate::params::{Init, Leaves, ParamId, ParamStore};
use crate::tensor::{AdamState, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Result<T> = std::result::Result<T, ModelError>;

/// Feature-mask probabilities for the two views.
#[derive(Debug, Clone, Copy)]
pub struct AugmentationConfig {
    pub p1: f64,
    pub p2: f64,
    pub seed: u64,
}

/// Two-layer projection head (hidden = output = d_proj, ELU between).
#[derive(Debug, Clone)]
pub struct ProjectionParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl ProjectionParams {
    pub fn init(store: &mut ParamStore, prefix: &str, d_in: usize, d_proj: usize, seed: u64) -> Self {
        let w1 = store.add(
            &format!("{prefix}.w1"),
            vec![d_in, d_proj],
            Init::Xavier { fan_in: d_in, fan_out: d_proj },
            seed,
        );
        let b1 = store.add(&format!("{prefix}.b1"), vec![1, d_proj], Init::Zeros, seed);
        let w2 = store.add(
            &format!("{prefix}.w2"),
            vec![d_proj, d_proj],
            Init::Xavier { fan_in: d_proj, fan_out: d_proj },
            seed,
        );
        let b2 = store.add(&format!("{prefix}.b2"), vec![1, d_proj], Init::Zeros, seed);
        Self { w1, b1, w2, b2 }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w1, self.b1, self.w2, self.b2]
    }
}

/// Encoder weights produced by pretraining (or fresh random initialization
/// for the no-pretraining ablation arm).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum InitKind {
    Random,
    Pretrained,
}

/// Per-omics pretraining artifact: the full pretrain parameter store plus the
/// names of the encoder parameters that transfer downstream.
#[derive(Debug, Clone)]
pub struct PretrainedWeights {
    pub omics: String,
    pub kind: InitKind,
    pub store: ParamStore,
    pub encoder_names: Vec<String>,
}

impl PretrainedWeights {
    /// Copies the encoder parameters into `target` by name. Every encoder
    /// name must exist in `target` with a matching shape.
    pub fn transfer_encoder(&self, target: &mut ParamStore) -> Result<()> {
        for name in &self.encoder_names {
            let src_id = self
                .store
                .find(name)
                .ok_or_else(|| ModelError::CheckpointMissing(name.clone()))?;
            let src = self.store.entry(src_id);
            let dst_id = target
                .find(name)
                .ok_or_else(|| ModelError::CheckpointMissing(name.clone()))?;
            if target.entry(dst_id).shape != src.shape {
                return Err(ModelError::CheckpointShape {
                    name: name.clone(),
                    expected: target.entry(dst_id).shape.clone(),
                    found: src.shape.clone(),
                });
            }
            target.set_values(dst_id, src.values.clone());
        }
        Ok(())
    }
}

/// Column-wise feature masking: one Bernoulli mask over features, each column
/// zeroed with probability `p`, applied to every row. Edges are untouched.
pub fn augment(features: &Tensor, p: f64, seed: u64) -> Tensor {
    assert!((0.0..=1.0).contains(&p), "mask probability {p} outside [0,1]");
    let d = features.cols();
    let n = features.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep: Vec<f64> = (0..d)
        .map(|_| if rng.gen_range(0.0..1.0) < p { 0.0 } else { 1.0 })
        .collect();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        for (j, &k) in keep.iter().enumerate() {
            out.push(features.values()[i * d + j] * k);
        }
    }
    Tensor::matrix(n, d, out).expect("augment preserves shape")
}

/// Projection head forward, row-wise.
pub fn project(tape: &mut Tape, leaves: &Leaves, h: &Tensor, p: &ProjectionParams) -> Result<Tensor> {
    let z1 = tape.matmul(h, leaves.get(p.w1))?;
    let z1 = tape.add_row(&z1, leaves.get(p.b1))?;
    let a1 = tape.elu(&z1);
    let z2 = tape.matmul(&a1, leaves.get(p.w2))?;
    Ok(tape.add_row(&z2, leaves.get(p.b2))?)
}

/// Contrastive loss for one positive pair, computed by direct loops: anchor is
/// row `i` of `anchor_view`, the positive is row `i` of `other_view`, and the
/// 2(n−1) negatives are the remaining rows of both views.
pub fn nt_xent_pair(
    anchor_view: &Tensor,
    other_view: &Tensor,
    i: usize,
    tau: f64,
) -> std::result::Result<f64, TensorError> {
    let n = anchor_view.rows();
    let cos = |a: &[f64], b: &[f64], row: usize| -> std::result::Result<f64, TensorError> {
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Err(TensorError::ZeroNormRow { row });
        }
        Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
    };
    let anchor = anchor_view.row(i);
    let positive = (cos(anchor, other_view.row(i), i)? / tau).exp();
    let mut denom = positive;
    for j in 0..n {
        if j == i {
            continue;
        }
        denom += (cos(anchor, anchor_view.row(j), j)? / tau).exp();
        denom += (cos(anchor, other_view.row(j), j)? / tau).exp();
    }
    Ok(denom.ln() - positive.ln())
}

/// Total contrastive loss over all positive pairs, both directions, summed.
pub fn contrastive_loss(tape: &mut Tape, k1: &Tensor, k2: &Tensor, tau: f64) -> Result<Tensor> {
    if k1.shape() != k2.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "contrastive_loss",
            lhs: k1.shape().to_vec(),
            rhs: k2.shape().to_vec(),
        }
        .into());
    }
    let n = k1.rows();
    let k1n = tape.row_l2_normalize(k1)?;
    let k2n = tape.row_l2_normalize(k2)?;

    // cosine-similarity blocks, scaled by 1/τ and exponentiated
    let mut sim_exp = |a: &Tensor, b: &Tensor| -> Result<Tensor> {
        let bt = tape.transpose(b)?;
        let s = tape.matmul(a, &bt)?;
        let scaled = tape.scale(&s, 1.0 / tau);
        Ok(tape.exp(&scaled))
    };
    let e12 = sim_exp(&k1n, &k2n)?;
    let e11 = sim_exp(&k1n, &k1n)?;
    let e21 = sim_exp(&k2n, &k1n)?;
    let e22 = sim_exp(&k2n, &k2n)?;

    // off-diagonal selector: 1 everywhere except the diagonal
    let mut off = vec![1.0; n * n];
    for i in 0..n {
        off[i * n + i] = 0.0;
    }
    let off = Tensor::matrix(n, n, off).expect("mask shape");

    let mut direction = |cross: &Tensor, within: &Tensor| -> Result<Tensor> {
        let pos = tape.diag(cross)?;
        let cross_masked = tape.mul(cross, &off)?;
        let within_masked = tape.mul(within, &off)?;
        let cross_neg = tape.row_sum(&cross_masked)?;
        let within_neg = tape.row_sum(&within_masked)?;
        let partial = tape.add(&pos, &cross_neg)?;
        let denom = tape.add(&partial, &within_neg)?;
        let log_denom = tape.ln(&denom);
        let log_pos = tape.ln(&pos);
        let per_node = tape.sub(&log_denom, &log_pos)?;
        Ok(tape.sum(&per_node))
    };
    let l1 = direction(&e12, &e11)?;
    let l2 = direction(&e21, &e22)?;
    Ok(tape.add(&l1, &l2)?)
}

/// Unsupervised pretraining loop. Fresh masks every epoch, Adam on all
/// encoder and head parameters, no labels anywhere. Returns the loss curve.
#[allow(clippy::too_many_arguments)]
pub fn pretrain(
    graph: &SampleGraph,
    features: &Tensor,
    store: &mut ParamStore,
    encoder: &GatEncoderParams,
    head: &ProjectionParams,
    cfg: &AugmentationConfig,
    tau: f64,
    epochs: usize,
    lr: f64,
) -> Result<Vec<f64>> {
    let mut ids = encoder.param_ids();
    ids.extend(head.param_ids());
    let mut adam = AdamState::new(lr);
    let mut curve = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let view1 = augment(features, cfg.p1, mask_seed(cfg.seed, epoch, 1));
        let view2 = augment(features, cfg.p2, mask_seed(cfg.seed, epoch, 2));
        let mut tape = Tape::new();
        let leaves = store.leaves(&mut tape);
        let h1 = encode(&mut tape, &leaves, graph, &view1, encoder)?;
        let h2 = encode(&mut tape, &leaves, graph, &view2, encoder)?;
        let k1 = project(&mut tape, &leaves, &h1, head)?;
        let k2 = project(&mut tape, &leaves, &h2, head)?;
        let loss = contrastive_loss(&mut tape, &k1, &k2, tau)?;
        let value = loss.item();
        if !value.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch,
                context: "contrastive pretraining".to_string(),
            });
        }
        curve.push(value);
        let grads = tape.backward(&loss)?;
        store.adam_step(&ids, &leaves, &grads, &mut adam);
    }
    Ok(curve)
}

fn mask_seed(seed: u64, epoch: usize, view: u64) -> u64 {
    // splitmix-style scramble keeps per-epoch mask streams independent
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9e3779b97f4a7c15) ^ view;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
