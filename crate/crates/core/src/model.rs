//! The assembled multiomics model: per-omics GAT encoders, auxiliary heads,
//! self- and cross-omics attention, per-omics logits maps with adaptive
//! distillation (or its fully connected ablation replacement), and the fused
//! final classifier.
//!
//! The self-attention maps take encoder outputs (width = heads·head_dim) and
//! the cross-attention maps take self-attended outputs (width = d_attn);
//! they are distinct parameter sets because their input widths differ.
//! Parameter names embed the omics name, so initializations are stable across
//! omics subsets and ablation arms.

use crate::config::TrainConfig;
use crate::distill::{cd_loss, DistillParams};
use crate::error::ModelError;
use crate::fusion::{cross_attend, self_attend, AttentionParams};
use crate::gat::{encode, GatEncoderParams};
use crate::graph::SampleGraph;
use crate::heads::{final_loss, MlpParams};
use crate::params::{Init, Leaves, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor};

type Result<T> = std::result::Result<T, ModelError>;

/// Fully connected replacement for the distillation module (ablation arm):
/// the concatenated per-omics logits pass through a matched-width FC layer
/// into a plain classification head, so the inter-omics interaction happens
/// in the same logits space the distillation graph operates on while the
/// final prediction path stays identical across arms.
#[derive(Debug, Clone)]
pub struct FcReplaceParams {
    pub head: MlpParams,
}

#[derive(Debug, Clone)]
pub struct MvkModel {
    pub omics_names: Vec<String>,
    pub encoders: Vec<GatEncoderParams>,
    pub aux_heads: Vec<MlpParams>,
    pub self_attn: Vec<AttentionParams>,
    pub cross_attn: Vec<AttentionParams>,
    /// Z^m → C linear maps feeding distillation; present when M ≥ 2.
    pub logits_maps: Vec<ParamId>,
    pub distill: Option<DistillParams>,
    pub fc_replace: Option<FcReplaceParams>,
    pub final_head: MlpParams,
    pub n_classes: usize,
}

/// Everything one forward pass produces.
pub struct ForwardPass {
    /// Encoder outputs F^m.
    pub encoded: Vec<Tensor>,
    /// Self-attended features U^m.
    pub attended: Vec<Tensor>,
    /// Cross-attended features Z^m (equal to U^m when M = 1).
    pub fused: Vec<Tensor>,
    /// Per-omics logits z^m; empty when M = 1.
    pub omics_logits: Vec<Tensor>,
    pub final_logits: Tensor,
    pub predictions: Vec<usize>,
    pub final_train_ce: Tensor,
}

impl MvkModel {
    /// Registers all parameters. `use_cd` picks between the distillation
    /// scorer and its fully connected replacement (M ≥ 2 only).
    pub fn init(
        store: &mut ParamStore,
        omics_names: &[String],
        input_dims: &[usize],
        n_classes: usize,
        cfg: &TrainConfig,
        use_cd: bool,
    ) -> Self {
        assert_eq!(omics_names.len(), input_dims.len());
        let m = omics_names.len();
        let seed = cfg.seed;
        let enc_width = cfg.gat_heads * cfg.gat_head_dim;

        let encoders: Vec<GatEncoderParams> = omics_names
            .iter()
            .zip(input_dims.iter())
            .map(|(name, &d_in)| {
                GatEncoderParams::init(
                    store,
                    &format!("om.{name}.enc"),
                    d_in,
                    cfg.gat_layers,
                    cfg.gat_heads,
                    cfg.gat_head_dim,
                    cfg.leaky_slope,
                    seed,
                )
            })
            .collect();
        let aux_heads = omics_names
            .iter()
            .map(|name| {
                MlpParams::init(
                    store,
                    &format!("om.{name}.aux"),
                    enc_width,
                    cfg.aux_hidden,
                    n_classes,
                    seed,
                )
            })
            .collect();
        let self_attn = omics_names
            .iter()
            .map(|name| {
                AttentionParams::init(store, &format!("om.{name}.selfattn"), enc_width, cfg.d_attn, seed)
            })
            .collect();

        let (cross_attn, logits_maps, distill, fc_replace, final_in) = if m >= 2 {
            let cross: Vec<AttentionParams> = omics_names
                .iter()
                .map(|name| {
                    AttentionParams::init(
                        store,
                        &format!("om.{name}.crossattn"),
                        cfg.d_attn,
                        cfg.d_attn,
                        seed,
                    )
                })
                .collect();
            let z_width = (m - 1) * cfg.d_attn;
            let maps: Vec<ParamId> = omics_names
                .iter()
                .map(|name| {
                    store.add(
                        &format!("om.{name}.logits"),
                        vec![z_width, n_classes],
                        Init::Xavier {
                            fan_in: z_width,
                            fan_out: n_classes,
                        },
                        seed,
                    )
                })
                .collect();
            let joint = m * z_width;
            let (distill, fc_replace) = if use_cd {
                (
                    Some(DistillParams::init(store, m, n_classes, cfg.d_e, seed)),
                    None,
                )
            } else {
                // matched to the concatenated logits width the CD scorer consumes
                let logits_width = m * n_classes;
                let head = MlpParams::init(store, "fcrep", logits_width, logits_width, n_classes, seed);
                (None, Some(FcReplaceParams { head }))
            };
            (cross, maps, distill, fc_replace, joint)
        } else {
            (Vec::new(), Vec::new(), None, None, cfg.d_attn)
        };

        let final_head = MlpParams::init(store, "final", final_in, cfg.final_hidden, n_classes, seed);

        Self {
            omics_names: omics_names.to_vec(),
            encoders,
            aux_heads,
            self_attn,
            cross_attn,
            logits_maps,
            distill,
            fc_replace,
            final_head,
            n_classes,
        }
    }

    pub fn n_omics(&self) -> usize {
        self.encoders.len()
    }

    /// Encoder parameters; trained at the GAT learning rate.
    pub fn gat_param_ids(&self) -> Vec<ParamId> {
        self.encoders.iter().flat_map(|e| e.param_ids()).collect()
    }

    /// Fusion, distillation, and head parameters; trained at the inter-omics
    /// learning rate.
    pub fn inter_param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for h in &self.aux_heads {
            ids.extend(h.param_ids());
        }
        for a in &self.self_attn {
            ids.extend(a.param_ids());
        }
        for a in &self.cross_attn {
            ids.extend(a.param_ids());
        }
        ids.extend(self.logits_maps.iter().copied());
        if let Some(d) = &self.distill {
            ids.extend(d.param_ids());
        }
        if let Some(f) = &self.fc_replace {
            ids.extend(f.head.param_ids());
        }
        ids.extend(self.final_head.param_ids());
        ids
    }

    /// Full forward pass. `kv_rows` restricts attention keys/values (inductive
    /// mode); the training cross-entropy is taken on `train_rows` only.
    pub fn forward(
        &self,
        tape: &mut Tape,
        leaves: &Leaves,
        graphs: &[SampleGraph],
        features: &[Tensor],
        labels: &[usize],
        train_rows: &[usize],
        kv_rows: Option<&[usize]>,
    ) -> Result<ForwardPass> {
        let m = self.n_omics();
        assert_eq!(graphs.len(), m);
        assert_eq!(features.len(), m);

        let mut encoded = Vec::with_capacity(m);
        for i in 0..m {
            encoded.push(encode(tape, leaves, &graphs[i], &features[i], &self.encoders[i])?);
        }
        let mut attended = Vec::with_capacity(m);
        for i in 0..m {
            attended.push(self_attend(tape, leaves, &encoded[i], &self.self_attn[i], kv_rows)?);
        }
        let (fused, omics_logits) = if m >= 2 {
            let fused = cross_attend(tape, leaves, &attended, &self.cross_attn, kv_rows)?;
            let mut logits = Vec::with_capacity(m);
            for i in 0..m {
                logits.push(crate::heads::omics_logits(
                    tape,
                    leaves,
                    &fused[i],
                    self.logits_maps[i],
                )?);
            }
            (fused, logits)
        } else {
            (attended.clone(), Vec::new())
        };

        let (final_train_ce, predictions, final_logits) = final_loss(
            tape,
            leaves,
            &fused,
            &self.final_head,
            labels,
            train_rows,
        )?;

        Ok(ForwardPass {
            encoded,
            attended,
            fused,
            omics_logits,
            final_logits,
            predictions,
            final_train_ce,
        })
    }

    /// Distillation term of the objective; `None` for single-omics runs and
    /// the fully connected ablation arm (see [`MvkModel::fc_replacement_loss`]).
    pub fn distillation_loss(
        &self,
        tape: &mut Tape,
        leaves: &Leaves,
        pass: &ForwardPass,
        symmetric_grad: bool,
    ) -> Result<Option<Tensor>> {
        match &self.distill {
            Some(params) if self.n_omics() >= 2 => Ok(Some(cd_loss(
                tape,
                leaves,
                &pass.omics_logits,
                params,
                symmetric_grad,
            )?)),
            _ => Ok(None),
        }
    }

    /// Cross-entropy of the fully connected replacement head on the
    /// concatenated per-omics logits; the no-distillation arm's stand-in for
    /// the dropped λ2 term.
    pub fn fc_replacement_loss(
        &self,
        tape: &mut Tape,
        leaves: &Leaves,
        pass: &ForwardPass,
        labels: &[usize],
        train_rows: &[usize],
    ) -> Result<Option<Tensor>> {
        let Some(fc) = &self.fc_replace else {
            return Ok(None);
        };
        let refs: Vec<&Tensor> = pass.omics_logits.iter().collect();
        let joint = tape.concat_cols(&refs)?;
        let logits = crate::heads::mlp_forward(tape, leaves, &joint, &fc.head)?;
        let train_logits = tape.gather_rows(&logits, train_rows)?;
        let train_labels: Vec<usize> = train_rows.iter().map(|&i| labels[i]).collect();
        Ok(Some(tape.cross_entropy_logits(&train_logits, &train_labels)?))
    }

    /// Auxiliary classification term.
    pub fn aux_loss(
        &self,
        tape: &mut Tape,
        leaves: &Leaves,
        pass: &ForwardPass,
        labels: &[usize],
        train_rows: &[usize],
    ) -> Result<Tensor> {
        crate::heads::auxiliary_loss(tape, leaves, &pass.encoded, &self.aux_heads, labels, train_rows)
    }

    /// Mean edge strength per ordered pair (target ← source), evaluated on
    /// the given forward pass; diagnostic for `--dump-edges`.
    pub fn mean_edge_strengths(
        &self,
        tape: &mut Tape,
        leaves: &Leaves,
        pass: &ForwardPass,
    ) -> Result<Vec<(String, String, f64)>> {
        let Some(params) = &self.distill else {
            return Ok(Vec::new());
        };
        let m = self.n_omics();
        let mut rows = Vec::new();
        for target in 0..m {
            for source in 0..m {
                if source == target {
                    continue;
                }
                let e = crate::distill::edge_strengths(
                    tape,
                    leaves,
                    &pass.omics_logits[source],
                    &pass.omics_logits[target],
                    params.w1[source],
                    params.w1[target],
                    params.w2,
                )?;
                let mean = e.values().iter().sum::<f64>() / e.len() as f64;
                rows.push((
                    self.omics_names[target].clone(),
                    self.omics_names[source].clone(),
                    mean,
                ));
            }
        }
        Ok(rows)
    }
}
