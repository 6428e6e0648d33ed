//! PairSim pre-training. One optimizer step per graph batch, graphs visited
//! in fixed order, pairs resampled every epoch from an epoch-derived seed.
//! The logged total is the sum of per-graph mean pair losses.

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::loss::cross_entropy;
use crate::model::scalar::Scalar;
use crate::model::{UniversalModel, UrlVariant};
use crate::preprocess::{sample_pairsim, PairLabelSet, PreprocessedGraph};
use crate::seeds;

use super::{to_scalar, Adam, EpochHook, EpochRecord, LossHistory, ParamFilter, ReduceOnPlateau, TrainConfig};

const MAX_AUTO_BUDGET: usize = 20_000;
const NAN_GUARD_EPOCHS: usize = 3;

/// min(4·n, 20000), capped by the number of distinct pairs.
fn auto_budget(num_nodes: usize) -> usize {
    (4 * num_nodes).min(MAX_AUTO_BUDGET).min(num_nodes * (num_nodes - 1) / 2)
}

/// Joint pre-training: minimizes the summed per-graph PairSim loss with one
/// shared backbone.
pub fn pretrain_ussl<F: Scalar>(
    graphs: &[PreprocessedGraph],
    model: &mut UniversalModel<F>,
    cfg: &TrainConfig,
    hook: Option<EpochHook<'_, F>>,
) -> Result<LossHistory> {
    let trainable: Vec<String> = std::iter::once("backbone".to_string())
        .chain(graphs.iter().flat_map(|g| {
            [
                format!("encoder.{}", g.graph_id()),
                format!("pair_head.{}", g.graph_id()),
            ]
        }))
        .collect();
    run_pretext_loop(graphs, model, cfg, ParamFilter::prefixes(&trainable), hook)
}

/// Single-graph pre-training: the same loop over a one-graph family.
pub fn pretrain_ssl<F: Scalar>(
    graph: &PreprocessedGraph,
    model: &mut UniversalModel<F>,
    cfg: &TrainConfig,
    hook: Option<EpochHook<'_, F>>,
) -> Result<LossHistory> {
    pretrain_ussl(std::slice::from_ref(graph), model, cfg, hook)
}

/// Register a new graph on a trained model and self-supervise only its
/// encoder and pair head; the backbone and every existing per-graph module
/// stay untouched.
pub fn adapt_new_graph<F: Scalar>(
    model: &mut UniversalModel<F>,
    new_graph: &PreprocessedGraph,
    cfg: &TrainConfig,
    hook: Option<EpochHook<'_, F>>,
) -> Result<LossHistory> {
    let gid = new_graph.graph_id();
    if model.is_registered(gid) {
        return Err(Error::DuplicateGraph(gid.to_string()));
    }
    model.register_graph(gid, new_graph.aug_dim(), new_graph.dataset.num_classes)?;
    let trainable = [format!("encoder.{gid}"), format!("pair_head.{gid}")];
    run_pretext_loop(
        std::slice::from_ref(new_graph),
        model,
        cfg,
        ParamFilter::prefixes(&trainable),
        hook,
    )
}

fn run_pretext_loop<F: Scalar>(
    graphs: &[PreprocessedGraph],
    model: &mut UniversalModel<F>,
    cfg: &TrainConfig,
    filter: ParamFilter,
    mut hook: Option<EpochHook<'_, F>>,
) -> Result<LossHistory> {
    cfg.validate()?;
    if graphs.is_empty() {
        return Err(Error::InvalidSpec("family is empty".into()));
    }
    for g in graphs {
        if !model.is_registered(g.graph_id()) {
            return Err(Error::UnknownGraph(g.graph_id().to_string()));
        }
    }

    let budgets: Vec<usize> = graphs
        .iter()
        .map(|g| cfg.pair_budget.unwrap_or_else(|| auto_budget(g.dataset.num_nodes)))
        .collect();
    let pairs_per_batch = (cfg.batch_size / 2).max(1);
    let family_nodes: usize = graphs.iter().map(|g| g.dataset.num_nodes).sum();

    let mut optimizer = Adam::new(cfg.base_lr);
    let mut scheduler = ReduceOnPlateau::new(cfg.scheduler_patience, cfg.scheduler_factor);
    let mut lr = cfg.base_lr;
    let mut history = LossHistory::new(graphs.iter().map(|g| g.graph_id().to_string()).collect());
    let mut nan_streak = 0usize;

    for epoch in 0..=cfg.epochs {
        let started = Instant::now();
        let mut per_graph = vec![0.0f64; graphs.len()];
        for (gi, graph) in graphs.iter().enumerate() {
            let pair_seed = seeds::derive(cfg.seed, "pairs", &[gi as u64, epoch as u64]);
            let pairs = sample_pairsim(&graph.dataset, budgets[gi], pair_seed)?;

            let mut order: Vec<usize> = (0..pairs.len()).collect();
            if epoch > 0 {
                order.shuffle(&mut seeds::rng(cfg.seed, "batch", &[gi as u64, epoch as u64]));
            }
            let mut dropout_rng = seeds::rng(cfg.seed, "dropout", &[gi as u64, epoch as u64]);

            let mut loss_weighted = 0.0f64;
            for chunk in order.chunks(pairs_per_batch) {
                let loss = if epoch == 0 {
                    pair_pass(model, graph, &pairs, chunk, None, false)?
                } else {
                    model.zero_grads();
                    let loss =
                        pair_pass(model, graph, &pairs, chunk, Some(&mut dropout_rng), true)?;
                    optimizer.set_lr(lr);
                    optimizer.step(model, &filter);
                    loss
                };
                loss_weighted += loss * chunk.len() as f64;
            }
            per_graph[gi] = loss_weighted / pairs.len() as f64;
        }

        let total = if cfg.weight_by_graph_size {
            graphs
                .iter()
                .zip(&per_graph)
                .map(|(g, l)| l * g.dataset.num_nodes as f64 / family_nodes as f64)
                .sum()
        } else {
            per_graph.iter().sum()
        };

        let record = EpochRecord {
            epoch,
            per_graph,
            total,
            lr,
            wall_s: started.elapsed().as_secs_f64(),
        };
        history.push(record);
        if let Some(h) = hook.as_mut() {
            h(history.rows.last().unwrap(), model)?;
        }

        if epoch > 0 {
            if total.is_nan() {
                nan_streak += 1;
                if nan_streak >= NAN_GUARD_EPOCHS {
                    return Err(Error::Diverged(NAN_GUARD_EPOCHS));
                }
            } else {
                nan_streak = 0;
            }
            lr = scheduler.step(total, lr);
        }
    }
    Ok(history)
}

/// Forward (and optionally backward) one chunk of pairs; returns the mean
/// pair loss of the chunk.
fn pair_pass<F: Scalar>(
    model: &mut UniversalModel<F>,
    graph: &PreprocessedGraph,
    pairs: &PairLabelSet,
    selection: &[usize],
    dropout_rng: Option<&mut rand_chacha::ChaCha8Rng>,
    train: bool,
) -> Result<f64> {
    let gid = graph.graph_id();
    let labels: Vec<usize> = selection.iter().map(|&i| pairs.pairs[i].label).collect();

    match model.config.url_variant {
        UrlVariant::Transformer => {
            // interleave [u0, v0, u1, v1, ...] so a pair occupies rows 2i, 2i+1
            let nodes: Vec<usize> = selection
                .iter()
                .flat_map(|&i| [pairs.pairs[i].u, pairs.pairs[i].v])
                .collect();
            let rows = to_scalar::<F>(&graph.tokens.gather(&nodes));
            let seq = graph.tokens.seq_len();
            let (reps, cache) = model.represent_tokens(
                gid,
                &rows.view(),
                nodes.len(),
                seq,
                dropout_rng,
            )?;
            let even: Vec<usize> = (0..selection.len()).map(|i| 2 * i).collect();
            let odd: Vec<usize> = (0..selection.len()).map(|i| 2 * i + 1).collect();
            let h_u = reps.select(Axis(0), &even);
            let h_v = reps.select(Axis(0), &odd);
            let (logits, head_cache) = model.pair_logits(gid, &h_u.view(), &h_v.view())?;
            let (loss, d_logits) = cross_entropy(&logits.view(), &labels);
            if train {
                let (d_u, d_v) = model.pair_logits_backward(gid, &head_cache, &d_logits.view())?;
                let dim = d_u.ncols();
                let mut d_reps = Array2::<F>::zeros((nodes.len(), dim));
                for i in 0..selection.len() {
                    for j in 0..dim {
                        d_reps[[2 * i, j]] = d_u[[i, j]];
                        d_reps[[2 * i + 1, j]] = d_v[[i, j]];
                    }
                }
                model.backward_represent(&cache, &d_reps.view(), None)?;
            }
            Ok(loss)
        }
        UrlVariant::Gcn | UrlVariant::Sage => {
            let x = to_scalar::<F>(&graph.x_aug);
            let (reps, cache) = model.represent_graph(
                gid,
                &x.view(),
                graph.adjacency.matrix(),
                &graph.mean_adjacency,
            )?;
            let us: Vec<usize> = selection.iter().map(|&i| pairs.pairs[i].u).collect();
            let vs: Vec<usize> = selection.iter().map(|&i| pairs.pairs[i].v).collect();
            let h_u = reps.select(Axis(0), &us);
            let h_v = reps.select(Axis(0), &vs);
            let (logits, head_cache) = model.pair_logits(gid, &h_u.view(), &h_v.view())?;
            let (loss, d_logits) = cross_entropy(&logits.view(), &labels);
            if train {
                let (d_u, d_v) = model.pair_logits_backward(gid, &head_cache, &d_logits.view())?;
                let dim = d_u.ncols();
                let mut d_reps = Array2::<F>::zeros(reps.raw_dim());
                for (row, &node) in us.iter().enumerate() {
                    for j in 0..dim {
                        d_reps[[node, j]] = d_reps[[node, j]] + d_u[[row, j]];
                    }
                }
                for (row, &node) in vs.iter().enumerate() {
                    for j in 0..dim {
                        d_reps[[node, j]] = d_reps[[node, j]] + d_v[[row, j]];
                    }
                }
                model.backward_represent(
                    &cache,
                    &d_reps.view(),
                    Some((graph.adjacency.matrix(), &graph.mean_adjacency)),
                )?;
            }
            Ok(loss)
        }
    }
}
