//! Adaptive bidirectional cross-omics distillation.
//!
//! Omics form a complete directed graph. For each ordered pair (k←j) and each
//! sample, a learned scorer turns the two omics' logits into an edge strength
//! in (0,1), which weights the per-sample L1 distance between the logits.
//! Gradients of the distance flow into the target omics only (the source acts
//! as a frozen teacher on that edge), while the strengths learn through both
//! inputs; that learned weighting is what adapts the transfer directions.

use crate::error::ModelError;
use crate::params::{Init, Leaves, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor};

type Result<T> = std::result::Result<T, ModelError>;

/// Per-omics projections W1^m (C×d_e) and the shared pairwise scorer
/// W2 (2·d_e×1).
#[derive(Debug, Clone)]
pub struct DistillParams {
    pub w1: Vec<ParamId>,
    pub w2: ParamId,
    pub d_e: usize,
}

impl DistillParams {
    pub fn init(
        store: &mut ParamStore,
        n_omics: usize,
        n_classes: usize,
        d_e: usize,
        seed: u64,
    ) -> Self {
        let w1 = (0..n_omics)
            .map(|m| {
                store.add(
                    &format!("distill.w1.om{}", m + 1),
                    vec![n_classes, d_e],
                    Init::Xavier {
                        fan_in: n_classes,
                        fan_out: d_e,
                    },
                    seed,
                )
            })
            .collect();
        let w2 = store.add(
            "distill.w2",
            vec![2 * d_e, 1],
            Init::Xavier {
                fan_in: 2 * d_e,
                fan_out: 1,
            },
            seed,
        );
        Self { w1, w2, d_e }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.w1.clone();
        ids.push(self.w2);
        ids
    }
}

/// Per-sample edge strengths e^{k←j} for one ordered pair: a sigmoid of the
/// scored concatenation of both omics' projected logits, so every strength
/// lies in (0,1). Returns an n×1 tensor.
pub fn edge_strengths(
    tape: &mut Tape,
    leaves: &Leaves,
    z_source: &Tensor,
    z_target: &Tensor,
    w1_source: ParamId,
    w1_target: ParamId,
    w2: ParamId,
) -> Result<Tensor> {
    let p_source = tape.matmul(z_source, leaves.get(w1_source))?;
    let p_target = tape.matmul(z_target, leaves.get(w1_target))?;
    let joint = tape.concat_cols(&[&p_source, &p_target])?;
    let scored = tape.matmul(&joint, leaves.get(w2))?;
    Ok(tape.sigmoid(&scored))
}

/// Scalar convenience: strength of the edge target←source for one sample.
pub fn edge_strength(
    tape: &mut Tape,
    leaves: &Leaves,
    z_source_row: &[f64],
    z_target_row: &[f64],
    source: usize,
    target: usize,
    params: &DistillParams,
) -> Result<f64> {
    let zs = Tensor::matrix(1, z_source_row.len(), z_source_row.to_vec())
        .map_err(ModelError::Tensor)?;
    let zt = Tensor::matrix(1, z_target_row.len(), z_target_row.to_vec())
        .map_err(ModelError::Tensor)?;
    let e = edge_strengths(
        tape,
        leaves,
        &zs,
        &zt,
        params.w1[source],
        params.w1[target],
        params.w2,
    )?;
    Ok(e.item())
}

/// Per-sample L1 distance between source and target logits (n×1). The source
/// is detached unless `symmetric_grad`, so the distance gradient reaches the
/// target omics only.
pub fn pairwise_logit_loss(
    tape: &mut Tape,
    z_source: &Tensor,
    z_target: &Tensor,
    symmetric_grad: bool,
) -> Result<Tensor> {
    let source = if symmetric_grad {
        z_source.clone()
    } else {
        z_source.detach()
    };
    let diff = tape.sub(&source, z_target)?;
    Ok(tape.row_abs_sum(&diff)?)
}

/// Total distillation loss: Σ over samples, targets k, and sources j≠k of
/// e_i^{k←j} · ‖z_i^j − z_i^k‖₁.
pub fn cd_loss(
    tape: &mut Tape,
    leaves: &Leaves,
    logits: &[Tensor],
    params: &DistillParams,
    symmetric_grad: bool,
) -> Result<Tensor> {
    let m = logits.len();
    if m < 2 {
        return Err(ModelError::TooFewOmicsForDistill(m));
    }
    assert_eq!(params.w1.len(), m, "one W1 per omics");
    let mut total: Option<Tensor> = None;
    for target in 0..m {
        for source in 0..m {
            if source == target {
                continue;
            }
            let e = edge_strengths(
                tape,
                leaves,
                &logits[source],
                &logits[target],
                params.w1[source],
                params.w1[target],
                params.w2,
            )?;
            let dist = pairwise_logit_loss(tape, &logits[source], &logits[target], symmetric_grad)?;
            let weighted = tape.mul(&e, &dist)?;
            let term = tape.sum(&weighted);
            total = Some(match total {
                None => term,
                Some(acc) => tape.add(&acc, &term)?,
            });
        }
    }
    Ok(total.expect("m ≥ 2 guarantees at least one pair"))
}
