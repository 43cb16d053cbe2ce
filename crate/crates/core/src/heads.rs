//! Classifier heads and the composite training objective.
//!
//! Each omics gets an auxiliary two-layer perceptron on its encoder output
//! (mono-omics prediction) and a linear logits map on its cross-attended
//! features feeding distillation; the fused prediction concatenates all
//! cross-attended features into a final two-layer perceptron. Cross-entropy
//! is averaged per sample so the loss weights stay independent of n.

use crate::error::ModelError;
use crate::params::{Init, Leaves, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor};
use serde::{Deserialize, Serialize};

type Result<T> = std::result::Result<T, ModelError>;

/// Two-layer perceptron with ELU between the layers.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl MlpParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        hidden: usize,
        d_out: usize,
        seed: u64,
    ) -> Self {
        Self {
            w1: store.add(
                &format!("{prefix}.w1"),
                vec![d_in, hidden],
                Init::Xavier { fan_in: d_in, fan_out: hidden },
                seed,
            ),
            b1: store.add(&format!("{prefix}.b1"), vec![1, hidden], Init::Zeros, seed),
            w2: store.add(
                &format!("{prefix}.w2"),
                vec![hidden, d_out],
                Init::Xavier { fan_in: hidden, fan_out: d_out },
                seed,
            ),
            b2: store.add(&format!("{prefix}.b2"), vec![1, d_out], Init::Zeros, seed),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w1, self.b1, self.w2, self.b2]
    }
}

pub fn mlp_forward(tape: &mut Tape, leaves: &Leaves, x: &Tensor, p: &MlpParams) -> Result<Tensor> {
    let z1 = tape.matmul(x, leaves.get(p.w1))?;
    let z1 = tape.add_row(&z1, leaves.get(p.b1))?;
    let a1 = tape.elu(&z1);
    let z2 = tape.matmul(&a1, leaves.get(p.w2))?;
    Ok(tape.add_row(&z2, leaves.get(p.b2))?)
}

/// Loss weights of the total objective; λ1 scales the auxiliary term and λ2
/// the distillation term. Paper defaults: 1 and 0.005.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.005,
        }
    }
}

/// Sum over omics of the mean cross-entropy of each auxiliary head on the
/// training rows.
pub fn auxiliary_loss(
    tape: &mut Tape,
    leaves: &Leaves,
    encoded: &[Tensor],
    heads: &[MlpParams],
    labels: &[usize],
    train_rows: &[usize],
) -> Result<Tensor> {
    assert_eq!(encoded.len(), heads.len());
    if train_rows.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    let train_labels: Vec<usize> = train_rows.iter().map(|&i| labels[i]).collect();
    let mut total: Option<Tensor> = None;
    for (f, head) in encoded.iter().zip(heads.iter()) {
        let logits = mlp_forward(tape, leaves, f, head)?;
        let train_logits = tape.gather_rows(&logits, train_rows)?;
        let ce = tape.cross_entropy_logits(&train_logits, &train_labels)?;
        total = Some(match total {
            None => ce,
            Some(acc) => tape.add(&acc, &ce)?,
        });
    }
    Ok(total.expect("at least one omics"))
}

/// Per-omics logits feeding distillation: one linear map per omics.
pub fn omics_logits(
    tape: &mut Tape,
    leaves: &Leaves,
    fused: &Tensor,
    map: ParamId,
) -> Result<Tensor> {
    Ok(tape.matmul(fused, leaves.get(map))?)
}

/// Final fused prediction: concatenated per-omics features through a
/// two-layer perceptron. Returns the training-row cross-entropy, the argmax
/// prediction for every sample, and the full logits.
pub fn final_loss(
    tape: &mut Tape,
    leaves: &Leaves,
    fused_all: &[Tensor],
    head: &MlpParams,
    labels: &[usize],
    train_rows: &[usize],
) -> Result<(Tensor, Vec<usize>, Tensor)> {
    if train_rows.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    let refs: Vec<&Tensor> = fused_all.iter().collect();
    let joint = tape.concat_cols(&refs)?;
    let logits = mlp_forward(tape, leaves, &joint, head)?;
    let train_logits = tape.gather_rows(&logits, train_rows)?;
    let train_labels: Vec<usize> = train_rows.iter().map(|&i| labels[i]).collect();
    let loss = tape.cross_entropy_logits(&train_logits, &train_labels)?;
    let preds = argmax_rows(&logits);
    Ok((loss, preds, logits))
}

/// λ1·L_AC + λ2·L_CD + L_Final. The distillation term is absent for
/// single-omics runs and the no-distillation ablation arm.
pub fn total_loss(
    tape: &mut Tape,
    l_aux: &Tensor,
    l_cd: Option<&Tensor>,
    l_final: &Tensor,
    weights: &LossWeights,
) -> Result<Tensor> {
    for t in [Some(l_aux), l_cd, Some(l_final)].into_iter().flatten() {
        if !t.item().is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch: 0,
                context: "total_loss received a non-finite component".to_string(),
            });
        }
    }
    let weighted_aux = tape.scale(l_aux, weights.lambda1);
    let mut total = tape.add(&weighted_aux, l_final)?;
    if let Some(cd) = l_cd {
        let weighted_cd = tape.scale(cd, weights.lambda2);
        total = tape.add(&total, &weighted_cd)?;
    }
    Ok(total)
}

/// Row-wise argmax; first maximum wins ties.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let c = logits.cols();
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Softmax probability of class 1; the positive-class score used for binary
/// ranking metrics.
pub fn positive_class_scores(logits: &Tensor) -> Vec<f64> {
    let c = logits.cols();
    assert!(c >= 2, "positive-class scores need at least two classes");
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let denom: f64 = exps.iter().sum();
            exps[1] / denom
        })
        .collect()
}
