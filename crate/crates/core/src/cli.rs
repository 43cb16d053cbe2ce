//! Command-line interface: batch pipelines over dataset directories.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use crate::checkpoint::{load_checkpoint, restore_into, save_checkpoint, CheckpointKind};
use crate::config::{AblationSwitches, TrainConfig};
use crate::data::{load_dataset, save_dataset, synthesize_dataset, LabelVector, OmicsMatrix};
use crate::error::{Error, Result};
use crate::gcl::{InitKind, PretrainedWeights};
use crate::params::ParamStore;
use crate::pipeline::{
    self, feature_ablation_rank, pretrain_checkpoint, robustness_sweep, run_finetune,
    run_pretrain, summarize_sweep, RunRecord,
};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "mvktrans",
    about = "Multiomics classification with graph-contrastive pretraining, attention fusion, and adaptive cross-omics distillation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Dataset directory (omics_<k>.csv, labels.csv, meta.json)
    #[arg(long)]
    data: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Flat key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Skip contrastive pretraining (fresh random encoders)
    #[arg(long = "no-gcl")]
    no_gcl: bool,
    /// Replace cross-omics distillation with a fully connected layer
    #[arg(long = "no-cd")]
    no_cd: bool,
    /// Comma-separated omics subset by name
    #[arg(long, value_delimiter = ',')]
    omics: Option<Vec<String>>,
    /// Train-only graphs; test nodes attach by similarity at inference
    #[arg(long)]
    inductive: bool,
    /// Let the distillation distance gradient reach the source logits
    #[arg(long = "symmetric-cd-grad")]
    symmetric_cd_grad: bool,
}

impl CommonOpts {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::from_file(path)?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.inductive {
            cfg.inductive = true;
        }
        if self.symmetric_cd_grad {
            cfg.symmetric_cd_grad = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn switches(&self) -> AblationSwitches {
        AblationSwitches {
            use_gcl: !self.no_gcl,
            use_cd: !self.no_cd,
            omics_subset: self.omics.clone(),
        }
    }

    fn dataset(&self) -> Result<(Vec<OmicsMatrix>, LabelVector)> {
        Ok(load_dataset(&self.data)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic class-conditional Gaussian dataset
    Synth {
        #[arg(long, default_value = "synth_out")]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        /// Per-omics feature counts, comma separated
        #[arg(long, value_delimiter = ',', default_value = "100,80,60")]
        features: Vec<usize>,
        /// Per-omics informative fraction, comma separated
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.2,0.1")]
        informativeness: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Contrastive pretraining; writes one checkpoint per omics
    Pretrain(CommonOpts),
    /// Full pipeline: pretrain (or load checkpoints), fine-tune, evaluate
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory with existing pretrain_<omics>.ckpt files
        #[arg(long)]
        pretrained: Option<PathBuf>,
        /// Write per-sample mean distillation strengths per ordered pair
        #[arg(long = "dump-edges")]
        dump_edges: bool,
        /// Write each omics' binary edge matrix as CSV
        #[arg(long = "dump-graph")]
        dump_graph: bool,
    },
    /// Evaluate a model checkpoint on the dataset's test split
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        /// Model checkpoint produced by `train`
        #[arg(long)]
        model: PathBuf,
    },
    /// Component ablation: full, no-GCL, no-CD, and neither, over seeds
    Ablate {
        #[command(flatten)]
        common: CommonOpts,
        /// Seeds, comma separated
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
    },
    /// Feature-missingness robustness sweep
    Robustness {
        #[command(flatten)]
        common: CommonOpts,
        /// Missing rates, comma separated
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
        rates: Vec<f64>,
        /// Seeds, comma separated
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
    },
    /// Feature-ablation biomarker ranking
    Biomarkers {
        #[command(flatten)]
        common: CommonOpts,
        /// How many top features to keep per omics
        #[arg(long = "top-k", default_value_t = 10)]
        top_k: usize,
    },
}

/// Entry point used by `main`; returns the process exit code.
pub fn run() -> i32 {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout with success
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("MVKT_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                crate::tensor::set_kernel_threads(n);
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            samples,
            classes,
            features,
            informativeness,
            seed,
        } => {
            let (ms, labels) = synthesize_dataset(samples, &features, classes, &informativeness, seed)?;
            save_dataset(&out, &ms, &labels)?;
            println!(
                "wrote synthetic dataset: {} samples, {} omics, {} classes → {}",
                samples,
                features.len(),
                classes,
                out.display()
            );
            Ok(())
        }
        Command::Pretrain(common) => cmd_pretrain(&common),
        Command::Train {
            common,
            pretrained,
            dump_edges,
            dump_graph,
        } => cmd_train(&common, pretrained.as_deref(), dump_edges, dump_graph),
        Command::Evaluate { common, model } => cmd_evaluate(&common, &model),
        Command::Ablate { common, seeds } => cmd_ablate(&common, &seeds),
        Command::Robustness {
            common,
            rates,
            seeds,
        } => cmd_robustness(&common, &rates, &seeds),
        Command::Biomarkers { common, top_k } => cmd_biomarkers(&common, top_k),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            file: parent.display().to_string(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        file: path.display().to_string(),
        source: e,
    })
}

fn metrics_json(record: &RunRecord) -> String {
    let value = json!({
        "config": record.config,
        "switches": record.switches,
        "seed": record.seed,
        "split": {
            "n_train": record.split.train.len(),
            "n_test": record.split.test.len(),
        },
        "metrics": record.metrics,
    });
    serde_json::to_string_pretty(&value).expect("metrics serialize") + "\n"
}

fn losses_csv(record: &RunRecord) -> String {
    let mut s = String::from("epoch,aux,cd,fc,final_ce,total\n");
    for (i, e) in record.epoch_losses.iter().enumerate() {
        s.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            e.aux, e.cd, e.fc, e.final_ce, e.total
        ));
    }
    s
}

fn cmd_pretrain(common: &CommonOpts) -> Result<()> {
    let cfg = common.config()?;
    let switches = common.switches();
    let (ms, labels) = common.dataset()?;
    let weights = run_pretrain(&ms, &labels, &cfg, &switches)?;
    for w in &weights {
        let path = common.out.join("checkpoints").join(format!("pretrain_{}.ckpt", w.omics));
        save_checkpoint(&path, &pretrain_checkpoint(w, &cfg))?;
        eprintln!(
            "pretrained {} ({}) → {}",
            w.omics,
            match w.kind {
                InitKind::Pretrained => "contrastive",
                InitKind::Random => "random",
            },
            path.display()
        );
    }
    Ok(())
}

fn load_pretrained(dir: &Path, omics_names: &[String]) -> Result<Vec<PretrainedWeights>> {
    omics_names
        .iter()
        .map(|name| {
            let path = dir.join(format!("pretrain_{name}.ckpt"));
            let ckpt = load_checkpoint(&path)?;
            let mut store = ParamStore::new();
            for (n, shape, values) in &ckpt.params {
                store.insert_raw(n, shape.clone(), values.clone());
            }
            let encoder_names = ckpt
                .params
                .iter()
                .filter(|(n, _, _)| n.contains(".enc."))
                .map(|(n, _, _)| n.clone())
                .collect();
            Ok(PretrainedWeights {
                omics: name.clone(),
                kind: match ckpt.kind {
                    CheckpointKind::Pretrained => InitKind::Pretrained,
                    _ => InitKind::Random,
                },
                store,
                encoder_names,
            })
        })
        .collect()
}

fn cmd_train(
    common: &CommonOpts,
    pretrained_dir: Option<&Path>,
    dump_edges: bool,
    dump_graph: bool,
) -> Result<()> {
    let cfg = common.config()?;
    let switches = common.switches();
    let (ms, labels) = common.dataset()?;

    let selected_names: Vec<String> = match &switches.omics_subset {
        Some(names) => names.clone(),
        None => ms.iter().map(|m| m.name.clone()).collect(),
    };
    let weights = match pretrained_dir {
        Some(dir) if switches.use_gcl => load_pretrained(dir, &selected_names)?,
        _ => run_pretrain(&ms, &labels, &cfg, &switches)?,
    };
    for w in &weights {
        let path = common.out.join("checkpoints").join(format!("pretrain_{}.ckpt", w.omics));
        save_checkpoint(&path, &pretrain_checkpoint(w, &cfg))?;
    }

    let (record, trained) = run_finetune(&ms, &labels, &weights, &cfg, &switches)?;
    save_checkpoint(
        &common.out.join("checkpoints").join("model.ckpt"),
        &trained.to_checkpoint(&cfg),
    )?;
    write_text(&common.out.join("metrics.json"), &metrics_json(&record))?;
    write_text(&common.out.join("losses.csv"), &losses_csv(&record))?;

    if dump_edges {
        let mut s = String::from("target,source,mean_strength\n");
        for (t, src, v) in &record.edge_strengths {
            s.push_str(&format!("{t},{src},{v}\n"));
        }
        write_text(&common.out.join("edges.csv"), &s)?;
    }
    if dump_graph {
        for (name, g) in trained.omics_names.iter().zip(trained.graphs.iter()) {
            let mut s = String::new();
            for i in 0..g.n() {
                let row: Vec<&str> = (0..g.n())
                    .map(|j| if g.has_edge(i, j) { "1" } else { "0" })
                    .collect();
                s.push_str(&row.join(","));
                s.push('\n');
            }
            write_text(&common.out.join(format!("graph_{name}.csv")), &s)?;
        }
    }

    println!("{}", render_metrics(&record));
    eprintln!(
        "train finished in {:.1}s → {}",
        record.wall_time_s,
        common.out.display()
    );
    Ok(())
}

fn render_metrics(record: &RunRecord) -> String {
    let m = &record.metrics;
    let mut line = format!(
        "seed {} test ACC {:.4} F1-w {:.4} F1-m {:.4}",
        record.seed, m.accuracy, m.f1_weighted, m.f1_macro
    );
    if let Some(f1) = m.f1 {
        line.push_str(&format!(" F1 {f1:.4}"));
    }
    if let Some(auc) = m.auc {
        line.push_str(&format!(" AUC {auc:.4}"));
    }
    line
}

fn cmd_evaluate(common: &CommonOpts, model_path: &Path) -> Result<()> {
    let cfg = common.config()?;
    let switches = common.switches();
    let (ms, labels) = common.dataset()?;
    let ckpt = load_checkpoint(model_path)?;
    if ckpt.config_hash != cfg.config_hash() {
        eprintln!("note: checkpoint config hash differs from the active configuration");
    }
    let split = crate::data::stratified_split(&labels, cfg.test_fraction, cfg.seed)?;
    let (mut trained, _) = pipeline::assemble(&ms, &labels, &cfg, &switches, &split, cfg.seed)?;
    restore_into(&mut trained.store, &ckpt)?;
    let (metrics, _, _) = trained.evaluate()?;
    let value = json!({
        "config": cfg,
        "switches": switches,
        "seed": cfg.seed,
        "split": { "n_train": split.train.len(), "n_test": split.test.len() },
        "metrics": metrics,
    });
    let text = serde_json::to_string_pretty(&value).expect("metrics serialize") + "\n";
    write_text(&common.out.join("metrics.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn cmd_ablate(common: &CommonOpts, seeds: &[u64]) -> Result<()> {
    let cfg = common.config()?;
    let base = common.switches();
    let (ms, labels) = common.dataset()?;
    let arms: [(&str, bool, bool); 4] = [
        ("full", true, true),
        ("no_gcl", false, true),
        ("no_cd", true, false),
        ("baseline", false, false),
    ];
    let mut csv = String::from("arm,seed,accuracy,f1,f1_weighted,f1_macro,auc\n");
    let mut arm_accs: Vec<(String, Vec<f64>)> =
        arms.iter().map(|(n, _, _)| (n.to_string(), Vec::new())).collect();
    for &seed in seeds {
        let mut cfg_s = cfg.clone();
        cfg_s.seed = seed;
        // one pretraining per GCL state per seed; CD arms share it
        let gcl_switches = AblationSwitches {
            use_gcl: true,
            use_cd: true,
            omics_subset: base.omics_subset.clone(),
        };
        let rand_switches = AblationSwitches {
            use_gcl: false,
            use_cd: true,
            omics_subset: base.omics_subset.clone(),
        };
        let pre_gcl = run_pretrain(&ms, &labels, &cfg_s, &gcl_switches)?;
        let pre_rand = run_pretrain(&ms, &labels, &cfg_s, &rand_switches)?;
        for (i, (arm, use_gcl, use_cd)) in arms.iter().enumerate() {
            let switches = AblationSwitches {
                use_gcl: *use_gcl,
                use_cd: *use_cd,
                omics_subset: base.omics_subset.clone(),
            };
            let weights = if *use_gcl { &pre_gcl } else { &pre_rand };
            let (record, _) = run_finetune(&ms, &labels, weights, &cfg_s, &switches)?;
            let m = &record.metrics;
            csv.push_str(&format!(
                "{arm},{seed},{},{},{},{},{}\n",
                m.accuracy,
                m.f1.map_or(String::new(), |v| v.to_string()),
                m.f1_weighted,
                m.f1_macro,
                m.auc.map_or(String::new(), |v| v.to_string()),
            ));
            arm_accs[i].1.push(m.accuracy);
            eprintln!("ablate arm {arm} seed {seed}: ACC {:.4}", m.accuracy);
        }
    }
    write_text(&common.out.join("ablation.csv"), &csv)?;

    let summary: Vec<_> = arm_accs
        .iter()
        .map(|(arm, accs)| {
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            json!({ "arm": arm, "mean_accuracy": mean, "std_accuracy": std, "runs": accs })
        })
        .collect();
    let full_mean = arm_accs[0].1.iter().sum::<f64>() / arm_accs[0].1.len() as f64;
    let effects: Vec<_> = arm_accs[1..]
        .iter()
        .map(|(arm, accs)| {
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            json!({ "arm": arm, "effect_vs_full": full_mean - mean })
        })
        .collect();
    let text = serde_json::to_string_pretty(&json!({ "arms": summary, "effects": effects }))
        .expect("summary serialize")
        + "\n";
    write_text(&common.out.join("ablation_summary.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn cmd_robustness(common: &CommonOpts, rates: &[f64], seeds: &[u64]) -> Result<()> {
    let cfg = common.config()?;
    let switches = common.switches();
    let (ms, labels) = common.dataset()?;
    let rows = robustness_sweep(&ms, &labels, &cfg, &switches, rates, seeds)?;
    let mut csv = String::from("rate,seed,accuracy,f1,f1_weighted,f1_macro,auc\n");
    for r in &rows {
        let m = &r.metrics;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.rate,
            r.seed,
            m.accuracy,
            m.f1.map_or(String::new(), |v| v.to_string()),
            m.f1_weighted,
            m.f1_macro,
            m.auc.map_or(String::new(), |v| v.to_string()),
        ));
    }
    write_text(&common.out.join("sweeps").join("robustness.csv"), &csv)?;

    let mut summary_csv = String::from("rate,mean_accuracy,std_accuracy,ci95_accuracy,n_runs\n");
    for s in summarize_sweep(&rows) {
        summary_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            s.rate, s.mean_accuracy, s.std_accuracy, s.ci95_accuracy, s.n_runs
        ));
        println!(
            "rate {:.1}: ACC {:.4} ± {:.4} (95% CI, {} runs)",
            s.rate, s.mean_accuracy, s.ci95_accuracy, s.n_runs
        );
    }
    write_text(
        &common.out.join("sweeps").join("robustness_summary.csv"),
        &summary_csv,
    )?;
    Ok(())
}

fn cmd_biomarkers(common: &CommonOpts, top_k: usize) -> Result<()> {
    let cfg = common.config()?;
    let switches = common.switches();
    let (ms, labels) = common.dataset()?;
    let weights = run_pretrain(&ms, &labels, &cfg, &switches)?;
    let (_, trained) = run_finetune(&ms, &labels, &weights, &cfg, &switches)?;
    let ranked = feature_ablation_rank(&trained, top_k)?;
    for per_omics in &ranked {
        let Some(first) = per_omics.first() else { continue };
        let mut csv = String::from("rank,feature,feature_index,score\n");
        for (rank, s) in per_omics.iter().enumerate() {
            csv.push_str(&format!("{},{},{},{}\n", rank + 1, s.feature, s.feature_index, s.score));
        }
        let path = common.out.join(format!("biomarkers_{}.csv", first.omics));
        write_text(&path, &csv)?;
        println!(
            "{}: top features {}",
            first.omics,
            per_omics
                .iter()
                .take(top_k.min(5))
                .map(|s| s.feature.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(())
}
