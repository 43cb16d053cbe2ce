//! Omics-specific self-attention and cross-omics attention over the sample
//! axis: each sample is a token, so attention reconciles distributions across
//! samples within an omics (self) and across omics (cross).

use crate::error::ModelError;
use crate::params::{Init, Leaves, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor};

type Result<T> = std::result::Result<T, ModelError>;

/// Query/key/value maps for one omics; all three share the output width.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub d_attn: usize,
}

impl AttentionParams {
    pub fn init(store: &mut ParamStore, prefix: &str, d_in: usize, d_attn: usize, seed: u64) -> Self {
        let xavier = Init::Xavier {
            fan_in: d_in,
            fan_out: d_attn,
        };
        Self {
            w_q: store.add(&format!("{prefix}.wq"), vec![d_in, d_attn], xavier, seed),
            w_k: store.add(&format!("{prefix}.wk"), vec![d_in, d_attn], xavier, seed),
            w_v: store.add(&format!("{prefix}.wv"), vec![d_in, d_attn], xavier, seed),
            d_attn,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w_q, self.w_k, self.w_v]
    }
}

/// softmax(Q·Kᵀ/√d)·V with rows of Q attending over rows of K/V.
pub fn scaled_dot_attention(tape: &mut Tape, q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let d = q.cols();
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, &kt)?;
    let scaled = tape.scale(&scores, 1.0 / (d as f64).sqrt());
    let weights = tape.row_softmax(&scaled, None)?;
    Ok(tape.matmul(&weights, v)?)
}

/// Self-attention within one omics. In inductive mode `kv_rows` restricts
/// keys and values to train samples so test samples never attend to each
/// other.
pub fn self_attend(
    tape: &mut Tape,
    leaves: &Leaves,
    features: &Tensor,
    params: &AttentionParams,
    kv_rows: Option<&[usize]>,
) -> Result<Tensor> {
    let q = tape.matmul(features, leaves.get(params.w_q))?;
    let mut k = tape.matmul(features, leaves.get(params.w_k))?;
    let mut v = tape.matmul(features, leaves.get(params.w_v))?;
    if let Some(rows) = kv_rows {
        k = tape.gather_rows(&k, rows)?;
        v = tape.gather_rows(&v, rows)?;
    }
    scaled_dot_attention(tape, &q, &k, &v)
}

/// Cross-omics attention: for each omics m, attend its queries against every
/// other omics j's keys/values and concatenate the blocks in ascending j.
/// Output widths are (M−1)·d_attn per omics.
pub fn cross_attend(
    tape: &mut Tape,
    leaves: &Leaves,
    u_all: &[Tensor],
    params: &[AttentionParams],
    kv_rows: Option<&[usize]>,
) -> Result<Vec<Tensor>> {
    assert_eq!(u_all.len(), params.len());
    let n = u_all[0].rows();
    for u in u_all {
        if u.rows() != n {
            return Err(crate::error::TensorError::ShapeMismatch {
                op: "cross_attend",
                lhs: u_all[0].shape().to_vec(),
                rhs: u.shape().to_vec(),
            }
            .into());
        }
    }
    let mut out = Vec::with_capacity(u_all.len());
    for m in 0..u_all.len() {
        let q = tape.matmul(&u_all[m], leaves.get(params[m].w_q))?;
        let mut blocks = Vec::new();
        for j in 0..u_all.len() {
            if j == m {
                continue;
            }
            let mut k = tape.matmul(&u_all[j], leaves.get(params[j].w_k))?;
            let mut v = tape.matmul(&u_all[j], leaves.get(params[j].w_v))?;
            if let Some(rows) = kv_rows {
                k = tape.gather_rows(&k, rows)?;
                v = tape.gather_rows(&v, rows)?;
            }
            blocks.push(scaled_dot_attention(tape, &q, &k, &v)?);
        }
        let refs: Vec<&Tensor> = blocks.iter().collect();
        out.push(tape.concat_cols(&refs)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff_gradient, max_relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
        Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
    }

    /// Direct-formula oracle for scaled dot-product attention.
    fn attention_oracle(q: &Tensor, k: &Tensor, v: &Tensor) -> Vec<f64> {
        let (n, d) = (q.rows(), q.cols());
        let m = k.rows();
        let dv = v.cols();
        let mut out = vec![0.0; n * dv];
        for i in 0..n {
            let scores: Vec<f64> = (0..m)
                .map(|j| {
                    (0..d).map(|p| q.row(i)[p] * k.row(j)[p]).sum::<f64>() / (d as f64).sqrt()
                })
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for j in 0..m {
                let w = exps[j] / denom;
                for p in 0..dv {
                    out[i * dv + p] += w * v.row(j)[p];
                }
            }
        }
        out
    }

    #[test]
    fn single_row_passes_value_through() {
        let mut tape = Tape::new();
        let q = Tensor::matrix(1, 2, vec![0.4, -0.3]).unwrap();
        let k = Tensor::matrix(1, 2, vec![10.0, 3.0]).unwrap();
        let v = Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let out = scaled_dot_attention(&mut tape, &q, &k, &v).unwrap();
        assert_eq!(out.values(), v.values());
    }

    #[test]
    fn identical_keys_average_values() {
        let mut tape = Tape::new();
        let q = Tensor::matrix(2, 2, vec![1.0, 0.0, -2.0, 0.5]).unwrap();
        let k = Tensor::matrix(3, 2, vec![0.7, -0.1].repeat(3)).unwrap();
        let v = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = scaled_dot_attention(&mut tape, &q, &k, &v).unwrap();
        for i in 0..2 {
            assert!((out.row(i)[0] - 3.0).abs() < 1e-12);
            assert!((out.row(i)[1] - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_case_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = rand_matrix(&mut rng, 3, 2);
        let k = rand_matrix(&mut rng, 3, 2);
        let v = rand_matrix(&mut rng, 3, 4);
        let mut tape = Tape::new();
        let out = scaled_dot_attention(&mut tape, &q, &k, &v).unwrap();
        let want = attention_oracle(&q, &k, &v);
        for (a, b) in out.values().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn self_attend_single_sample_is_value_projection() {
        let mut store = ParamStore::new();
        let p = AttentionParams::init(&mut store, "att", 3, 2, 4);
        let f = Tensor::matrix(1, 3, vec![0.5, -1.0, 0.25]).unwrap();
        let mut tape = Tape::new();
        let leaves = store.frozen_leaves();
        let out = self_attend(&mut tape, &leaves, &f, &p, None).unwrap();
        let wv = store.entry(p.w_v);
        let want: Vec<f64> = (0..2)
            .map(|c| (0..3).map(|r| f.values()[r] * wv.values[r * 2 + c]).sum())
            .collect();
        for (a, b) in out.values().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_feature_rows_attend_identically() {
        let mut store = ParamStore::new();
        let p = AttentionParams::init(&mut store, "att", 3, 2, 4);
        let f = Tensor::matrix(3, 3, vec![0.5, -1.0, 0.25].repeat(3)).unwrap();
        let mut tape = Tape::new();
        let leaves = store.frozen_leaves();
        let out = self_attend(&mut tape, &leaves, &f, &p, None).unwrap();
        assert_eq!(out.row(0), out.row(1));
        assert_eq!(out.row(1), out.row(2));
    }

    #[test]
    fn self_attention_gradient_check() {
        let mut store = ParamStore::new();
        let p = AttentionParams::init(&mut store, "att", 3, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = rand_matrix(&mut rng, 4, 3);
        for (id, entry) in store.entries() {
            let loss_at = |vals: &[f64]| {
                let mut probe = store.clone();
                probe.set_values(id, vals.to_vec());
                let mut tape = Tape::new();
                let leaves = probe.leaves(&mut tape);
                let out = self_attend(&mut tape, &leaves, &f, &p, None).unwrap();
                let sq = tape.mul(&out, &out).unwrap();
                tape.sum(&sq).item()
            };
            let mut tape = Tape::new();
            let leaves = store.leaves(&mut tape);
            let out = self_attend(&mut tape, &leaves, &f, &p, None).unwrap();
            let sq = tape.mul(&out, &out).unwrap();
            let loss = tape.sum(&sq);
            let grads = tape.backward(&loss).unwrap();
            let analytic = grads.wrt_or_zeros(leaves.get(id));
            let numeric = central_diff_gradient(loss_at, &entry.values, 1e-5);
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-3, "param {}: rel err {err:.2e}", entry.name);
        }
    }

    fn cross_setup(m: usize, seed: u64) -> (ParamStore, Vec<AttentionParams>) {
        let mut store = ParamStore::new();
        let params = (0..m)
            .map(|i| AttentionParams::init(&mut store, &format!("om{i}.cross"), 3, 2, seed))
            .collect();
        (store, params)
    }

    #[test]
    fn two_omics_structure_and_direction() {
        let (store, params) = cross_setup(2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u1 = rand_matrix(&mut rng, 4, 3);
        let u2 = rand_matrix(&mut rng, 4, 3);
        let mut tape = Tape::new();
        let leaves = store.frozen_leaves();
        let z = cross_attend(&mut tape, &leaves, &[u1, u2], &params, None).unwrap();
        assert_eq!(z.len(), 2);
        assert_eq!(z[0].cols(), 2); // one block of width d_attn
        assert_eq!(z[1].cols(), 2);
        assert_ne!(z[0].values(), z[1].values(), "direction matters");
    }

    #[test]
    fn identical_rows_in_source_replicate_in_block() {
        let (store, params) = cross_setup(2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u1 = rand_matrix(&mut rng, 3, 3);
        let u2 = Tensor::matrix(3, 3, vec![0.4, -0.2, 1.0].repeat(3)).unwrap();
        let mut tape = Tape::new();
        let leaves = store.frozen_leaves();
        let z = cross_attend(&mut tape, &leaves, &[u1, u2], &params, None).unwrap();
        // the j=2 block of Z^1 attends into identical rows → identical outputs
        assert_eq!(z[0].row(0), z[0].row(1));
        assert_eq!(z[0].row(1), z[0].row(2));
    }

    #[test]
    fn three_omics_matches_per_pair_oracle() {
        let (store, params) = cross_setup(3, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<Tensor> = (0..3).map(|_| rand_matrix(&mut rng, 4, 3)).collect();
        let mut tape = Tape::new();
        let leaves = store.frozen_leaves();
        let z = cross_attend(&mut tape, &leaves, &u, &params, None).unwrap();
        assert_eq!(z.len(), 3);
        for m in 0..3 {
            assert_eq!(z[m].cols(), 2 * 2, "width (M−1)·d_attn");
            let q = tape.matmul(&u[m], leaves.get(params[m].w_q)).unwrap();
            let mut offset = 0;
            for j in 0..3 {
                if j == m {
                    continue;
                }
                let k = tape.matmul(&u[j], leaves.get(params[j].w_k)).unwrap();
                let v = tape.matmul(&u[j], leaves.get(params[j].w_v)).unwrap();
                let want = attention_oracle(&q, &k, &v);
                for i in 0..4 {
                    for c in 0..2 {
                        let got = z[m].row(i)[offset + c];
                        assert!(
                            (got - want[i * 2 + c]).abs() < 1e-10,
                            "m={m} j={j} i={i} c={c}"
                        );
                    }
                }
                offset += 2;
            }
        }
    }

    #[test]
    fn sample_permutation_equivariance() {
        let (store, params) = cross_setup(2, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u1 = rand_matrix(&mut rng, 3, 3);
        let u2 = rand_matrix(&mut rng, 3, 3);
        let perm = [2usize, 0, 1];
        let permute = |t: &Tensor| {
            let vals: Vec<f64> = perm.iter().flat_map(|&i| t.row(i).to_vec()).collect();
            Tensor::matrix(3, 3, vals).unwrap()
        };
        let leaves = store.frozen_leaves();
        let mut tape = Tape::new();
        let z = cross_attend(&mut tape, &leaves, &[u1.clone(), u2.clone()], &params, None).unwrap();
        let zp = cross_attend(&mut tape, &leaves, &[permute(&u1), permute(&u2)], &params, None)
            .unwrap();
        for m in 0..2 {
            for i in 0..3 {
                for (a, b) in zp[m].row(i).iter().zip(z[m].row(perm[i]).iter()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn row_count_mismatch_is_error() {
        let (store, params) = cross_setup(2, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u1 = rand_matrix(&mut rng, 3, 3);
        let u2 = rand_matrix(&mut rng, 4, 3);
        let mut tape = Tape::new();
        let leaves = store.frozen_leaves();
        assert!(cross_attend(&mut tape, &leaves, &[u1, u2], &params, None).is_err());
    }

    #[test]
    fn inductive_kv_restriction_ignores_other_test_rows() {
        let mut store = ParamStore::new();
        let p = AttentionParams::init(&mut store, "att", 2, 2, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let base = rand_matrix(&mut rng, 4, 2);
        // perturb row 3 (a "test" row); with kv = {0,1}, row 2's output is unchanged
        let mut perturbed_vals = base.values().to_vec();
        perturbed_vals[6] += 5.0;
        perturbed_vals[7] -= 3.0;
        let perturbed = Tensor::matrix(4, 2, perturbed_vals).unwrap();
        let leaves = store.frozen_leaves();
        let mut tape = Tape::new();
        let a = self_attend(&mut tape, &leaves, &base, &p, Some(&[0, 1])).unwrap();
        let b = self_attend(&mut tape, &leaves, &perturbed, &p, Some(&[0, 1])).unwrap();
        assert_eq!(a.row(2), b.row(2));
        assert_ne!(a.row(3), b.row(3));
    }
}
