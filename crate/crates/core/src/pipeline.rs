//! End-to-end pipelines: contrastive pretraining, supervised fine-tuning,
//! robustness sweeps, and feature-ablation biomarker ranking.

use crate::checkpoint::{Checkpoint, CheckpointKind};
use crate::config::{AblationSwitches, TrainConfig};
use crate::data::{
    apply_missing, standardize, stratified_split, LabelVector, OmicsMatrix, PerturbationSpec,
    SplitPlan,
};
use crate::error::{DataError, Error, ModelError, Result};
use crate::gat::GatEncoderParams;
use crate::gcl::{self, AugmentationConfig, InitKind, PretrainedWeights, ProjectionParams};
use crate::graph::{build_graph, build_graph_inductive, GraphConfig, SampleGraph};
use crate::heads::{positive_class_scores, total_loss, LossWeights};
use crate::metrics::{compute_metrics, MetricsReport, TaskKind};
use crate::model::MvkModel;
use crate::params::{fnv1a64, ParamStore};
use crate::tensor::{AdamState, Tape, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Loss components of one fine-tuning epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLoss {
    pub aux: f64,
    pub cd: f64,
    /// Cross-entropy of the fully connected replacement head (no-CD arm).
    pub fc: f64,
    pub final_ce: f64,
    pub total: f64,
}

/// Replayable record of one training run. `wall_time_s` is informational;
/// everything else is fully determined by (config, switches, seed, data).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub switches: AblationSwitches,
    pub seed: u64,
    pub split: SplitPlan,
    pub epoch_losses: Vec<EpochLoss>,
    pub metrics: MetricsReport,
    #[serde(skip)]
    pub wall_time_s: f64,
    /// Mean strength per ordered pair (target, source), from the final model.
    pub edge_strengths: Vec<(String, String, f64)>,
}

/// A fine-tuned model with everything needed to re-evaluate it on modified
/// features (robustness perturbations, feature ablation).
pub struct TrainedModel {
    pub store: ParamStore,
    pub model: MvkModel,
    pub omics_names: Vec<String>,
    /// Standardized full matrices the model was trained against.
    pub std_matrices: Vec<OmicsMatrix>,
    /// Evaluation graphs (full; inductive mode restricts test–test edges).
    pub graphs: Vec<SampleGraph>,
    pub labels: Vec<usize>,
    pub split: SplitPlan,
    pub task: TaskKind,
    /// Key/value row restriction for inductive attention.
    pub kv_rows: Option<Vec<usize>>,
}

struct Selected {
    names: Vec<String>,
    matrices: Vec<OmicsMatrix>,
}

fn select_omics(
    matrices: &[OmicsMatrix],
    subset: &Option<Vec<String>>,
) -> std::result::Result<Selected, DataError> {
    let picked: Vec<&OmicsMatrix> = match subset {
        None => matrices.iter().collect(),
        Some(names) => {
            let mut sel = Vec::new();
            for want in names {
                let m = matrices
                    .iter()
                    .find(|m| &m.name == want)
                    .ok_or_else(|| DataError::UnknownOmics(want.clone()))?;
                sel.push(m);
            }
            if sel.is_empty() {
                return Err(DataError::UnknownOmics("<empty selector>".to_string()));
            }
            sel
        }
    };
    Ok(Selected {
        names: picked.iter().map(|m| m.name.clone()).collect(),
        matrices: picked.into_iter().cloned().collect(),
    })
}

fn effective_seed(config: &TrainConfig) -> u64 {
    if config.deterministic {
        config.seed
    } else {
        rand::random()
    }
}

fn task_of(labels: &LabelVector) -> TaskKind {
    if labels.n_classes() == 2 {
        TaskKind::Binary
    } else {
        TaskKind::Multiclass
    }
}

/// Standardizes each selected omics with train-row statistics.
fn standardized(sel: &Selected, split: &SplitPlan) -> Result<Vec<OmicsMatrix>> {
    sel.matrices
        .iter()
        .map(|m| {
            let train_view = m.subset_rows(&split.train);
            standardize(&train_view, m).map_err(Error::from)
        })
        .collect()
}

// ── pretraining ─────────────────────────────────────────────────────────

/// Contrastive pretraining per omics (in parallel; runs are independent).
/// With `use_gcl` off this returns fresh random initializations, marked so.
pub fn run_pretrain(
    matrices: &[OmicsMatrix],
    labels: &LabelVector,
    config: &TrainConfig,
    switches: &AblationSwitches,
) -> Result<Vec<PretrainedWeights>> {
    config.validate()?;
    let sel = select_omics(matrices, &switches.omics_subset)?;
    let seed = effective_seed(config);
    let split = stratified_split(labels, config.test_fraction, seed)?;
    let std_mats = standardized(&sel, &split)?;

    let jobs: Vec<(String, OmicsMatrix)> = sel
        .names
        .iter()
        .cloned()
        .zip(std_mats.into_iter())
        .collect();

    let results: Vec<Result<PretrainedWeights>> = jobs
        .par_iter()
        .map(|(name, matrix)| pretrain_one(name, matrix, config, switches, seed, &split))
        .collect();
    results.into_iter().collect()
}

fn pretrain_one(
    name: &str,
    std_matrix: &OmicsMatrix,
    config: &TrainConfig,
    switches: &AblationSwitches,
    seed: u64,
    split: &SplitPlan,
) -> Result<PretrainedWeights> {
    let enc_width = config.gat_heads * config.gat_head_dim;
    let mut store = ParamStore::new();
    let (graph_matrix, features): (OmicsMatrix, Tensor) = if config.inductive {
        let train_view = std_matrix.subset_rows(&split.train);
        let t = train_view.to_tensor();
        (train_view, t)
    } else {
        (std_matrix.clone(), std_matrix.to_tensor())
    };
    let encoder = GatEncoderParams::init(
        &mut store,
        &format!("om.{name}.enc"),
        std_matrix.n_features(),
        config.gat_layers,
        config.gat_heads,
        config.gat_head_dim,
        config.leaky_slope,
        seed,
    );
    let head = ProjectionParams::init(
        &mut store,
        &format!("om.{name}.proj"),
        enc_width,
        config.d_proj,
        seed,
    );
    let encoder_names: Vec<String> = encoder
        .param_ids()
        .iter()
        .map(|&id| store.entry(id).name.clone())
        .collect();

    if !switches.use_gcl {
        return Ok(PretrainedWeights {
            omics: name.to_string(),
            kind: InitKind::Random,
            store,
            encoder_names,
        });
    }

    let graph = build_graph(&graph_matrix, &GraphConfig { threshold: config.delta })?;
    let aug = AugmentationConfig {
        p1: config.p1,
        p2: config.p2,
        seed: seed ^ fnv1a64(name.as_bytes()),
    };
    gcl::pretrain(
        &graph,
        &features,
        &mut store,
        &encoder,
        &head,
        &aug,
        config.tau,
        config.pretrain_epochs,
        config.pretrain_lr,
    )?;
    Ok(PretrainedWeights {
        omics: name.to_string(),
        kind: InitKind::Pretrained,
        store,
        encoder_names,
    })
}

/// Serializes pretraining artifacts as checkpoints.
pub fn pretrain_checkpoint(weights: &PretrainedWeights, config: &TrainConfig) -> Checkpoint {
    Checkpoint::from_store(
        &weights.store,
        CheckpointKind::from(weights.kind),
        config.config_hash(),
    )
}

// ── fine-tuning ─────────────────────────────────────────────────────────

/// Full supervised run with the split derived from the seed.
pub fn run_finetune(
    matrices: &[OmicsMatrix],
    labels: &LabelVector,
    pretrained: &[PretrainedWeights],
    config: &TrainConfig,
    switches: &AblationSwitches,
) -> Result<(RunRecord, TrainedModel)> {
    let seed = effective_seed(config);
    let split = stratified_split(labels, config.test_fraction, seed)?;
    run_finetune_on_split(matrices, labels, pretrained, config, switches, &split, seed)
}

/// Per-regime training inputs kept alongside a [`TrainedModel`].
pub struct TrainContext {
    pub train_graphs: Vec<SampleGraph>,
    pub train_features: Vec<Tensor>,
    pub train_labels: Vec<usize>,
    pub train_rows: Vec<usize>,
}

/// Builds the standardized matrices, graphs, and a freshly initialized model
/// for the given split — everything a run needs before any training step.
pub fn assemble(
    matrices: &[OmicsMatrix],
    labels: &LabelVector,
    config: &TrainConfig,
    switches: &AblationSwitches,
    split: &SplitPlan,
    seed: u64,
) -> Result<(TrainedModel, TrainContext)> {
    config.validate()?;
    let sel = select_omics(matrices, &switches.omics_subset)?;
    let std_mats = standardized(&sel, split)?;
    let graph_cfg = GraphConfig { threshold: config.delta };

    // evaluation graphs over all samples; training graphs per regime
    let eval_graphs: Vec<SampleGraph> = std_mats
        .iter()
        .map(|m| {
            if config.inductive {
                build_graph_inductive(m, &split.train, &graph_cfg)
            } else {
                build_graph(m, &graph_cfg)
            }
            .map_err(Error::from)
        })
        .collect::<Result<_>>()?;

    let context = if config.inductive {
        let graphs = std_mats
            .iter()
            .map(|m| build_graph(&m.subset_rows(&split.train), &graph_cfg).map_err(Error::from))
            .collect::<Result<_>>()?;
        TrainContext {
            train_graphs: graphs,
            train_features: std_mats
                .iter()
                .map(|m| m.subset_rows(&split.train).to_tensor())
                .collect(),
            train_labels: split.train.iter().map(|&i| labels.labels[i]).collect(),
            train_rows: (0..split.train.len()).collect(),
        }
    } else {
        TrainContext {
            train_graphs: eval_graphs.clone(),
            train_features: std_mats.iter().map(|m| m.to_tensor()).collect(),
            train_labels: labels.labels.clone(),
            train_rows: split.train.clone(),
        }
    };

    let mut cfg_seeded = config.clone();
    cfg_seeded.seed = seed;
    let mut store = ParamStore::new();
    let input_dims: Vec<usize> = std_mats.iter().map(|m| m.n_features()).collect();
    let model = MvkModel::init(
        &mut store,
        &sel.names,
        &input_dims,
        labels.n_classes(),
        &cfg_seeded,
        switches.use_cd && sel.names.len() >= 2,
    );

    let trained = TrainedModel {
        store,
        model,
        omics_names: sel.names,
        std_matrices: std_mats,
        graphs: eval_graphs,
        labels: labels.labels.clone(),
        split: split.clone(),
        task: task_of(labels),
        kv_rows: config.inductive.then(|| split.train.clone()),
    };
    Ok((trained, context))
}

/// Supervised fine-tuning on an explicit split. Builds graphs, trains the
/// composite objective with two Adam groups, and evaluates the test rows.
pub fn run_finetune_on_split(
    matrices: &[OmicsMatrix],
    labels: &LabelVector,
    pretrained: &[PretrainedWeights],
    config: &TrainConfig,
    switches: &AblationSwitches,
    split: &SplitPlan,
    seed: u64,
) -> Result<(RunRecord, TrainedModel)> {
    let start = Instant::now();
    let (mut trained, ctx) = assemble(matrices, labels, config, switches, split, seed)?;
    let (store, model) = (&mut trained.store, &trained.model);
    let TrainContext {
        train_graphs,
        train_features,
        train_labels,
        train_rows,
    } = ctx;

    if switches.use_gcl {
        for name in &trained.omics_names {
            let w = pretrained
                .iter()
                .find(|p| &p.omics == name)
                .ok_or_else(|| ModelError::CheckpointMissing(format!("om.{name}.enc")))?;
            w.transfer_encoder(store)?;
        }
    }

    let gat_ids = model.gat_param_ids();
    let inter_ids = model.inter_param_ids();
    let mut gat_adam = AdamState::new(config.gat_lr);
    let mut inter_adam = AdamState::new(config.inter_lr);
    let weights = LossWeights {
        lambda1: config.lambda1,
        lambda2: config.lambda2,
    };

    let mut epoch_losses = Vec::with_capacity(config.finetune_epochs);
    for epoch in 0..config.finetune_epochs {
        let mut tape = Tape::new();
        let leaves = store.leaves(&mut tape);
        let pass = model.forward(
            &mut tape,
            &leaves,
            &train_graphs,
            &train_features,
            &train_labels,
            &train_rows,
            None,
        )?;
        let l_aux = model.aux_loss(&mut tape, &leaves, &pass, &train_labels, &train_rows)?;
        let l_cd = model.distillation_loss(&mut tape, &leaves, &pass, config.symmetric_cd_grad)?;
        let l_fc = model.fc_replacement_loss(&mut tape, &leaves, &pass, &train_labels, &train_rows)?;
        let l_final = pass.final_train_ce.clone();
        let mut total = total_loss(&mut tape, &l_aux, l_cd.as_ref(), &l_final, &weights)
            .map_err(|e| match e {
                ModelError::NonFiniteLoss { .. } => ModelError::NonFiniteLoss {
                    epoch,
                    context: format!(
                        "aux={} cd={:?} final={}",
                        l_aux.item(),
                        l_cd.as_ref().map(|t| t.item()),
                        l_final.item()
                    ),
                },
                other => other,
            })?;
        if let Some(fc) = &l_fc {
            total = tape.add(&total, fc)?;
        }
        if !total.item().is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch,
                context: "total fine-tuning loss".to_string(),
            }
            .into());
        }
        epoch_losses.push(EpochLoss {
            aux: l_aux.item(),
            cd: l_cd.as_ref().map_or(0.0, |t| t.item()),
            fc: l_fc.as_ref().map_or(0.0, |t| t.item()),
            final_ce: l_final.item(),
            total: total.item(),
        });
        let grads = tape.backward(&total)?;
        store.adam_step(&gat_ids, &leaves, &grads, &mut gat_adam);
        store.adam_step(&inter_ids, &leaves, &grads, &mut inter_adam);
    }

    let (metrics, _, _) = trained.evaluate()?;
    let edge_strengths = trained.mean_edges()?;

    let record = RunRecord {
        config: config.clone(),
        switches: switches.clone(),
        seed,
        split: split.clone(),
        epoch_losses,
        metrics,
        wall_time_s: start.elapsed().as_secs_f64(),
        edge_strengths,
    };
    Ok((record, trained))
}

impl TrainedModel {
    /// Evaluates the stored (clean) features.
    pub fn evaluate(&self) -> Result<(MetricsReport, Vec<usize>, Vec<f64>)> {
        let feats: Vec<Tensor> = self.std_matrices.iter().map(|m| m.to_tensor()).collect();
        self.evaluate_with_features(&feats)
    }

    /// Evaluates with modified standardized features (same shapes); the graph
    /// structure stays as built at training time.
    pub fn evaluate_with_features(
        &self,
        features: &[Tensor],
    ) -> Result<(MetricsReport, Vec<usize>, Vec<f64>)> {
        let mut tape = Tape::new();
        let leaves = self.store.frozen_leaves();
        let pass = self.model.forward(
            &mut tape,
            &leaves,
            &self.graphs,
            features,
            &self.labels,
            &self.split.train,
            self.kv_rows.as_deref(),
        )?;
        let test_preds: Vec<usize> = self.split.test.iter().map(|&i| pass.predictions[i]).collect();
        let test_labels: Vec<usize> = self.split.test.iter().map(|&i| self.labels[i]).collect();
        let scores_all = if self.task == TaskKind::Binary {
            positive_class_scores(&pass.final_logits)
        } else {
            Vec::new()
        };
        let test_scores: Vec<f64> = if self.task == TaskKind::Binary {
            self.split.test.iter().map(|&i| scores_all[i]).collect()
        } else {
            Vec::new()
        };
        let metrics = compute_metrics(
            &test_preds,
            (self.task == TaskKind::Binary).then_some(test_scores.as_slice()),
            &test_labels,
            self.task,
        )?;
        Ok((metrics, test_preds, test_scores))
    }

    /// Mean distillation edge strength per ordered pair on the clean features.
    pub fn mean_edges(&self) -> Result<Vec<(String, String, f64)>> {
        if self.model.distill.is_none() {
            return Ok(Vec::new());
        }
        let feats: Vec<Tensor> = self.std_matrices.iter().map(|m| m.to_tensor()).collect();
        let mut tape = Tape::new();
        let leaves = self.store.frozen_leaves();
        let pass = self.model.forward(
            &mut tape,
            &leaves,
            &self.graphs,
            &feats,
            &self.labels,
            &self.split.train,
            self.kv_rows.as_deref(),
        )?;
        Ok(self.model.mean_edge_strengths(&mut tape, &leaves, &pass)?)
    }

    pub fn to_checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        Checkpoint::from_store(&self.store, CheckpointKind::Model, config.config_hash())
    }
}

// ── robustness sweep ────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: f64,
    pub seed: u64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rate: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Half-width of the 95% confidence interval of the mean.
    pub ci95_accuracy: f64,
    pub n_runs: usize,
}

/// Trains once per seed on clean data, then evaluates with the test rows'
/// standardized features randomly zeroed at each missing rate.
pub fn robustness_sweep(
    matrices: &[OmicsMatrix],
    labels: &LabelVector,
    config: &TrainConfig,
    switches: &AblationSwitches,
    rates: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(rates.len() * seeds.len());
    for &seed in seeds {
        let mut cfg = config.clone();
        cfg.seed = seed;
        let pretrained = run_pretrain(matrices, labels, &cfg, switches)?;
        let (_, trained) = run_finetune(matrices, labels, &pretrained, &cfg, switches)?;
        for &rate in rates {
            let feats = perturbed_test_features(&trained, rate, seed)?;
            let (metrics, _, _) = trained.evaluate_with_features(&feats)?;
            rows.push(SweepRow { rate, seed, metrics });
        }
    }
    Ok(rows)
}

fn perturbed_test_features(trained: &TrainedModel, rate: f64, seed: u64) -> Result<Vec<Tensor>> {
    trained
        .std_matrices
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let test_view = m.subset_rows(&trained.split.test);
            let spec = PerturbationSpec {
                missing_rate: rate,
                seed: seed ^ fnv1a64(m.name.as_bytes()) ^ (rate.to_bits().rotate_left(k as u32)),
            };
            let masked = apply_missing(&test_view, &spec)?;
            let mut full = m.clone();
            crate::data::replace_rows(&mut full, &trained.split.test, &masked);
            Ok(full.to_tensor())
        })
        .collect()
}

/// Per-rate mean, std, and 95% CI of accuracy.
pub fn summarize_sweep(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut rates: Vec<f64> = rows.iter().map(|r| r.rate).collect();
    rates.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
    rates.dedup();
    rates
        .into_iter()
        .map(|rate| {
            let accs: Vec<f64> = rows
                .iter()
                .filter(|r| r.rate == rate)
                .map(|r| r.metrics.accuracy)
                .collect();
            let n = accs.len();
            let mean = accs.iter().sum::<f64>() / n as f64;
            let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            SweepSummary {
                rate,
                mean_accuracy: mean,
                std_accuracy: std,
                ci95_accuracy: 1.96 * std / (n as f64).sqrt(),
                n_runs: n,
            }
        })
        .collect()
}

// ── biomarker ranking ───────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiomarkerScore {
    pub omics: String,
    pub feature: String,
    pub feature_index: usize,
    /// Test-accuracy drop when the feature's standardized column is zeroed.
    pub score: f64,
}

/// Feature-ablation importance: zero one standardized column across all
/// samples, re-evaluate the test metrics, and score by the accuracy drop.
/// Returns all features per omics, ranked by descending score.
pub fn feature_ablation_rank(
    trained: &TrainedModel,
    top_k: usize,
) -> Result<Vec<Vec<BiomarkerScore>>> {
    let (baseline, _, _) = trained.evaluate()?;
    let base_feats: Vec<Tensor> = trained.std_matrices.iter().map(|m| m.to_tensor()).collect();
    let mut per_omics = Vec::with_capacity(trained.std_matrices.len());
    for (k, matrix) in trained.std_matrices.iter().enumerate() {
        let scores: Vec<Result<BiomarkerScore>> = (0..matrix.n_features())
            .into_par_iter()
            .map(|j| {
                let mut ablated = matrix.clone();
                ablated.zero_column(j);
                let mut feats = base_feats.clone();
                feats[k] = ablated.to_tensor();
                let (m, _, _) = trained.evaluate_with_features(&feats)?;
                Ok(BiomarkerScore {
                    omics: matrix.name.clone(),
                    feature: matrix.feature_names[j].clone(),
                    feature_index: j,
                    score: baseline.accuracy - m.accuracy,
                })
            })
            .collect();
        let mut scores: Vec<BiomarkerScore> = scores.into_iter().collect::<Result<_>>()?;
        scores.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("finite scores")
                .then(a.feature_index.cmp(&b.feature_index))
        });
        scores.truncate(top_k);
        per_omics.push(scores);
    }
    Ok(per_omics)
}

/// All features scored (no truncation); used when the full list matters.
pub fn feature_ablation_scores(trained: &TrainedModel) -> Result<Vec<Vec<BiomarkerScore>>> {
    feature_ablation_rank(trained, usize::MAX)
}

#[cfg(test)]
mod tests;
