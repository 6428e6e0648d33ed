//! The comparison protocols: efficacy (supervised baseline vs SSL vs
//! U-SSL), efficiency (per-epoch training time), and the ablation grid over
//! embedding size, depth, and backbone architecture.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::graph::hex;
use crate::model::{ModelConfig, UniversalModel, UrlVariant};
use crate::preprocess::PreprocessedGraph;
use crate::seeds;
use crate::train::{
    finetune, pretrain_ssl, pretrain_ussl, LossHistory, Regime, TrainConfig,
};

use super::report::ReportBundle;
use super::{sample_std, Cell, ComparisonTable, RunReport, TableRow};

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolConfig {
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub supervised: TrainConfig,
    /// Downstream repetitions per (regime, graph); only the head seed varies.
    pub downstream_instances: usize,
    /// Full supervised runs per graph.
    pub supervised_instances: usize,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn paper_scale(model: ModelConfig, seed: u64) -> Self {
        ProtocolConfig {
            model,
            pretrain: TrainConfig::pretrain(seed),
            finetune: TrainConfig::finetune(seed),
            supervised: TrainConfig::supervised(seed),
            downstream_instances: 10,
            supervised_instances: 10,
            seed,
        }
    }

    pub fn desk_scale(model: ModelConfig, seed: u64) -> Self {
        ProtocolConfig {
            model,
            pretrain: TrainConfig::pretrain_desk(seed),
            finetune: TrainConfig::finetune_desk(seed),
            supervised: TrainConfig::supervised_desk(seed),
            downstream_instances: 10,
            supervised_instances: 10,
            seed,
        }
    }

    /// Hash of everything except the master seed, so runs that differ only
    /// by seed share a fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut neutral = self.clone();
        neutral.seed = 0;
        neutral.pretrain.seed = 0;
        neutral.finetune.seed = 0;
        neutral.supervised.seed = 0;
        let json = serde_json::to_vec(&neutral).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&json);
        hex(&h.finalize())[..16].to_string()
    }
}

/// Repeated downstream fine-tuning on a pre-trained model: re-initialize
/// the head from the instance seed, train it, record test accuracy. The
/// backbone is reused untouched across instances.
fn finetune_instances(
    model: &mut UniversalModel<f32>,
    graph: &PreprocessedGraph,
    ft: &TrainConfig,
    instances: usize,
    head_seed: u64,
) -> Result<Vec<f64>> {
    let gid = graph.graph_id();
    (0..instances)
        .map(|inst| {
            model.reinit_class_head(gid, seeds::derive(head_seed, "instance", &[inst as u64]))?;
            Ok(finetune(graph, model, ft, None)?.test_accuracy)
        })
        .collect()
}

/// Joint U-SSL pre-training over `graphs`, then per-graph downstream
/// instances. Returns (per-graph accuracies, pretrain history, s/epoch).
fn ussl_then_finetune(
    graphs: &[PreprocessedGraph],
    model_cfg: &ModelConfig,
    pretrain_cfg: &TrainConfig,
    ft_cfg: &TrainConfig,
    instances: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, LossHistory, f64)> {
    let mut model =
        UniversalModel::<f32>::new(model_cfg.clone(), seeds::derive(seed, "ussl.init", &[]))?;
    for g in graphs {
        model.register_graph(g.graph_id(), g.aug_dim(), g.dataset.num_classes)?;
    }
    let history = pretrain_ussl(
        graphs,
        &mut model,
        &pretrain_cfg.clone().with_seed(seeds::derive(seed, "ussl.train", &[])),
        None,
    )?;
    let epoch_s = history.median_epoch_seconds().unwrap_or(0.0);
    let mut accs = Vec::with_capacity(graphs.len());
    for (gi, g) in graphs.iter().enumerate() {
        let ft = ft_cfg
            .clone()
            .with_seed(seeds::derive(seed, "ussl.ft", &[gi as u64]));
        accs.push(finetune_instances(
            &mut model,
            g,
            &ft,
            instances,
            seeds::derive(seed, "ussl.heads", &[gi as u64]),
        )?);
    }
    Ok((accs, history, epoch_s))
}

/// Per-graph SSL pre-training (private backbone each), then downstream
/// instances. Runs graphs in parallel.
fn ssl_then_finetune(
    graphs: &[PreprocessedGraph],
    model_cfg: &ModelConfig,
    pretrain_cfg: &TrainConfig,
    ft_cfg: &TrainConfig,
    instances: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, LossHistory, f64)>> {
    graphs
        .par_iter()
        .enumerate()
        .map(|(gi, g)| {
            let mut model = UniversalModel::<f32>::new(
                model_cfg.clone(),
                seeds::derive(seed, "ssl.init", &[gi as u64]),
            )?;
            model.register_graph(g.graph_id(), g.aug_dim(), g.dataset.num_classes)?;
            let history = pretrain_ssl(
                g,
                &mut model,
                &pretrain_cfg
                    .clone()
                    .with_seed(seeds::derive(seed, "ssl.train", &[gi as u64])),
                None,
            )?;
            let epoch_s = history.median_epoch_seconds().unwrap_or(0.0);
            let ft = ft_cfg
                .clone()
                .with_seed(seeds::derive(seed, "ssl.ft", &[gi as u64]));
            let accs = finetune_instances(
                &mut model,
                g,
                &ft,
                instances,
                seeds::derive(seed, "ssl.heads", &[gi as u64]),
            )?;
            Ok((accs, history, epoch_s))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EfficacyRow {
    pub graph_id: String,
    pub baseline_mean: f64,
    pub ssl_mean: f64,
    pub ussl_mean: f64,
}

#[derive(Debug, Clone)]
pub struct EfficacyOutcome {
    pub table: ComparisonTable,
    pub reports: Vec<RunReport>,
    pub histories: Vec<(String, LossHistory)>,
    pub rows: Vec<EfficacyRow>,
}

impl EfficacyOutcome {
    pub fn bundle(&self) -> ReportBundle {
        ReportBundle {
            reports: self.reports.clone(),
            tables: vec![("efficacy".to_string(), self.table.clone())],
            histories: self.histories.clone(),
        }
    }
}

/// Supervised baseline vs SSL vs U-SSL, each with repeated downstream
/// instances, on every family member.
pub fn run_efficacy_protocol(
    graphs: &[PreprocessedGraph],
    cfg: &ProtocolConfig,
) -> Result<EfficacyOutcome> {
    let fp = cfg.fingerprint();
    let seed = cfg.seed;

    let (ussl_accs, ussl_history, ussl_epoch_s) = ussl_then_finetune(
        graphs,
        &cfg.model,
        &cfg.pretrain,
        &cfg.finetune,
        cfg.downstream_instances,
        seed,
    )?;
    let ssl_runs = ssl_then_finetune(
        graphs,
        &cfg.model,
        &cfg.pretrain,
        &cfg.finetune,
        cfg.downstream_instances,
        seed,
    )?;

    // supervised baseline: independent full runs
    let supervised_accs: Vec<Vec<f64>> = graphs
        .par_iter()
        .enumerate()
        .map(|(gi, g)| {
            (0..cfg.supervised_instances)
                .into_par_iter()
                .map(|inst| {
                    let sup = cfg
                        .supervised
                        .clone()
                        .with_seed(seeds::derive(seed, "supervised", &[gi as u64, inst as u64]));
                    Ok(crate::train::train_supervised::<f32>(g, &cfg.model, &sup, None)?
                        .test_accuracy)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    let mut table_rows = Vec::new();
    let mut rows = Vec::new();
    let mut histories = vec![(format!("ussl-s{seed}"), ussl_history)];

    for (gi, g) in graphs.iter().enumerate() {
        let gid = g.graph_id().to_string();
        let (ssl_accs, ssl_history, ssl_epoch_s) = &ssl_runs[gi];
        histories.push((format!("ssl-{gid}-s{seed}"), ssl_history.clone()));

        let baseline = RunReport::new(
            format!("supervised-{gid}-s{seed}"),
            Regime::Supervised,
            &gid,
            seed,
            supervised_accs[gi].clone(),
            0.0,
            &fp,
        );
        let ssl = RunReport::new(
            format!("ssl-{gid}-s{seed}"),
            Regime::SslPretrain,
            &gid,
            seed,
            ssl_accs.clone(),
            *ssl_epoch_s,
            &fp,
        );
        let ussl = RunReport::new(
            format!("ussl-{gid}-s{seed}"),
            Regime::UsslPretrain,
            &gid,
            seed,
            ussl_accs[gi].clone(),
            ussl_epoch_s,
            &fp,
        );

        let diffs: Vec<f64> = ussl.accuracies
            .iter()
            .zip(&ssl.accuracies)
            .map(|(u, s)| u - s)
            .collect();
        table_rows.push(TableRow {
            graph_id: gid.clone(),
            cells: vec![
                Cell::new(baseline.mean, baseline.std),
                Cell::new(ssl.mean, ssl.std),
                Cell::with_improvement(ussl.mean, ussl.std, ussl.mean - ssl.mean),
                Cell::new(
                    diffs.iter().sum::<f64>() / diffs.len().max(1) as f64,
                    sample_std(&diffs),
                ),
            ],
        });
        rows.push(EfficacyRow {
            graph_id: gid,
            baseline_mean: baseline.mean,
            ssl_mean: ssl.mean,
            ussl_mean: ussl.mean,
        });
        reports.extend([baseline, ssl, ussl]);
    }

    let table = ComparisonTable {
        title: "Node classification accuracy: supervised baseline, SSL, and U-SSL".into(),
        columns: vec![
            "Baseline".into(),
            "SSL".into(),
            "U-SSL".into(),
            "Improvement".into(),
        ],
        rows: table_rows,
        bold_group: vec![1, 2],
    };
    Ok(EfficacyOutcome {
        table,
        reports,
        histories,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct EfficiencyOutcome {
    /// (label, seconds per epoch): one row per graph, then the joint run.
    pub rows: Vec<(String, f64)>,
    pub sum_ssl_epoch_s: f64,
    pub ussl_epoch_s: f64,
    pub table: ComparisonTable,
}

/// Median per-epoch wall time of each single-graph SSL pre-training versus
/// one joint U-SSL pre-training. Runs strictly sequentially so the numbers
/// are comparable.
pub fn run_efficiency_protocol(
    graphs: &[PreprocessedGraph],
    cfg: &ProtocolConfig,
) -> Result<EfficiencyOutcome> {
    let seed = cfg.seed;
    let mut rows = Vec::new();
    let mut sum_ssl = 0.0;
    for (gi, g) in graphs.iter().enumerate() {
        let mut model = UniversalModel::<f32>::new(
            cfg.model.clone(),
            seeds::derive(seed, "ssl.init", &[gi as u64]),
        )?;
        model.register_graph(g.graph_id(), g.aug_dim(), g.dataset.num_classes)?;
        let history = pretrain_ssl(
            g,
            &mut model,
            &cfg.pretrain
                .clone()
                .with_seed(seeds::derive(seed, "ssl.train", &[gi as u64])),
            None,
        )?;
        let s = history.median_epoch_seconds().unwrap_or(0.0);
        sum_ssl += s;
        rows.push((g.graph_id().to_string(), s));
    }

    let mut model =
        UniversalModel::<f32>::new(cfg.model.clone(), seeds::derive(seed, "ussl.init", &[]))?;
    for g in graphs {
        model.register_graph(g.graph_id(), g.aug_dim(), g.dataset.num_classes)?;
    }
    let history = pretrain_ussl(
        graphs,
        &mut model,
        &cfg.pretrain
            .clone()
            .with_seed(seeds::derive(seed, "ussl.train", &[])),
        None,
    )?;
    let ussl = history.median_epoch_seconds().unwrap_or(0.0);
    rows.push(("all-graphs-joint".to_string(), ussl));

    let table = ComparisonTable {
        title: "Pre-training time per epoch (seconds)".into(),
        columns: vec!["s/epoch".into()],
        rows: rows
            .iter()
            .map(|(label, s)| TableRow {
                graph_id: label.clone(),
                cells: vec![Cell::new(*s, 0.0)],
            })
            .collect(),
        bold_group: vec![],
    };
    Ok(EfficiencyOutcome {
        rows,
        sum_ssl_epoch_s: sum_ssl,
        ussl_epoch_s: ussl,
        table,
    })
}

/// One ablation axis; values are swept with everything else at the config's
/// defaults.
#[derive(Debug, Clone)]
pub enum AblationAxis {
    EmbedDim(Vec<usize>),
    Depth(Vec<usize>),
    Variant(Vec<UrlVariant>),
}

impl AblationAxis {
    pub fn name(&self) -> &'static str {
        match self {
            AblationAxis::EmbedDim(_) => "embed_dim",
            AblationAxis::Depth(_) => "depth",
            AblationAxis::Variant(_) => "url_variant",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AblationAxis::EmbedDim(v) => v.len(),
            AblationAxis::Depth(v) => v.len(),
            AblationAxis::Variant(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn labels(&self) -> Vec<String> {
        match self {
            AblationAxis::EmbedDim(v) => v.iter().map(|d| d.to_string()).collect(),
            AblationAxis::Depth(v) => v.iter().map(|d| d.to_string()).collect(),
            AblationAxis::Variant(v) => v.iter().map(|u| u.to_string()).collect(),
        }
    }

    fn apply(&self, idx: usize, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        match self {
            AblationAxis::EmbedDim(v) => cfg.embed_dim = v[idx],
            AblationAxis::Depth(v) => cfg.num_layers = v[idx],
            AblationAxis::Variant(v) => cfg.url_variant = v[idx],
        }
        cfg
    }
}

/// Sweep each axis with all else held at the base config. The backbone
/// axis additionally runs per-variant SSL models so every cell carries its
/// improvement over SSL in parentheses.
pub fn run_ablation_grid(
    graphs: &[PreprocessedGraph],
    axes: &[AblationAxis],
    cfg: &ProtocolConfig,
) -> Result<Vec<(String, ComparisonTable)>> {
    if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
        return Err(crate::error::Error::InvalidSpec(
            "ablation axes must be nonempty".into(),
        ));
    }
    let mut tables = Vec::new();
    for (ai, axis) in axes.iter().enumerate() {
        let labels = axis.labels();
        // cells[value][graph]
        let mut cells: Vec<Vec<Cell>> = Vec::with_capacity(axis.len());
        for vi in 0..axis.len() {
            let model_cfg = axis.apply(vi, &cfg.model);
            let run_seed = seeds::derive(cfg.seed, "ablate", &[ai as u64, vi as u64]);
            let (accs, _, _) = ussl_then_finetune(
                graphs,
                &model_cfg,
                &cfg.pretrain,
                &cfg.finetune,
                cfg.downstream_instances,
                run_seed,
            )?;
            let with_improvement = matches!(axis, AblationAxis::Variant(_));
            let mut column = Vec::with_capacity(graphs.len());
            if with_improvement {
                let ssl_runs = ssl_then_finetune(
                    graphs,
                    &model_cfg,
                    &cfg.pretrain,
                    &cfg.finetune,
                    cfg.downstream_instances,
                    seeds::derive(run_seed, "ssl-side", &[]),
                )?;
                for (gi, acc) in accs.iter().enumerate() {
                    let mean = acc.iter().sum::<f64>() / acc.len().max(1) as f64;
                    let ssl_mean = ssl_runs[gi].0.iter().sum::<f64>()
                        / ssl_runs[gi].0.len().max(1) as f64;
                    column.push(Cell::with_improvement(
                        mean,
                        sample_std(acc),
                        mean - ssl_mean,
                    ));
                }
            } else {
                for acc in &accs {
                    let mean = acc.iter().sum::<f64>() / acc.len().max(1) as f64;
                    column.push(Cell::new(mean, sample_std(acc)));
                }
            }
            cells.push(column);
        }
        let rows: Vec<TableRow> = graphs
            .iter()
            .enumerate()
            .map(|(gi, g)| TableRow {
                graph_id: g.graph_id().to_string(),
                cells: cells.iter().map(|col| col[gi]).collect(),
            })
            .collect();
        tables.push((
            format!("ablation_{}", axis.name()),
            ComparisonTable {
                title: format!("Ablation over {}", axis.name()),
                columns: labels,
                rows,
                bold_group: (0..axis.len()).collect(),
            },
        ));
    }
    Ok(tables)
}
