//! Downstream node classification: frozen-backbone fine-tuning and the
//! end-to-end supervised baseline.

use std::time::Instant;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::model::loss::cross_entropy;
use crate::model::scalar::Scalar;
use crate::model::{ModelConfig, UniversalModel, UrlVariant};
use crate::preprocess::PreprocessedGraph;
use crate::seeds;

use super::{to_scalar, Adam, EpochHook, EpochRecord, LossHistory, ParamFilter, ReduceOnPlateau, TrainConfig};

/// Node representations for the whole graph, evaluation mode (no dropout).
pub fn representations<F: Scalar>(
    model: &UniversalModel<F>,
    graph: &PreprocessedGraph,
    batch_size: usize,
) -> Result<Array2<F>> {
    let gid = graph.graph_id();
    match model.config.url_variant {
        UrlVariant::Transformer => {
            let n = graph.dataset.num_nodes;
            let seq = graph.tokens.seq_len();
            let dim = model.config.embed_dim;
            let mut out = Array2::<F>::zeros((n, dim));
            let nodes: Vec<usize> = (0..n).collect();
            for chunk in nodes.chunks(batch_size.max(1)) {
                let rows = to_scalar::<F>(&graph.tokens.gather(chunk));
                let (reps, _) = model.represent_tokens(gid, &rows.view(), chunk.len(), seq, None)?;
                out.slice_mut(s![chunk[0]..chunk[0] + chunk.len(), ..])
                    .assign(&reps);
            }
            Ok(out)
        }
        UrlVariant::Gcn | UrlVariant::Sage => {
            let x = to_scalar::<F>(&graph.x_aug);
            let (reps, _) = model.represent_graph(
                gid,
                &x.view(),
                graph.adjacency.matrix(),
                &graph.mean_adjacency,
            )?;
            Ok(reps)
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub history: LossHistory,
    /// Test accuracy of the freshly initialized head, before any update.
    pub initial_test_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: f64,
}

/// Train only the classification head of `graph` on the train split; the
/// encoder and backbone are frozen, so representations are computed once.
pub fn finetune<F: Scalar>(
    graph: &PreprocessedGraph,
    model: &mut UniversalModel<F>,
    cfg: &TrainConfig,
    mut hook: Option<EpochHook<'_, F>>,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    let gid = graph.graph_id().to_string();
    if !model.is_registered(&gid) {
        return Err(Error::UnknownGraph(gid));
    }
    let splits = &graph.dataset.splits;
    if splits.train.is_empty() || splits.test.is_empty() {
        return Err(Error::InvalidSpec(format!(
            "graph `{gid}` needs nonempty train and test splits"
        )));
    }
    let labels = &graph.dataset.labels;
    let reps = representations(model, graph, cfg.batch_size)?;

    let filter = ParamFilter::prefixes(&[format!("head.{gid}")]);
    let mut optimizer = Adam::new(cfg.base_lr);
    let mut scheduler = ReduceOnPlateau::new(cfg.scheduler_patience, cfg.scheduler_factor);
    let mut lr = cfg.base_lr;
    let mut history = LossHistory::new(vec![gid.clone()]);

    let eval_split_loss = |model: &UniversalModel<F>, ids: &[usize]| -> Result<f64> {
        let h = reps.select(Axis(0), ids);
        let y: Vec<usize> = ids.iter().map(|&i| labels[i]).collect();
        let logits = model.class_logits(&gid, &h.view())?;
        Ok(cross_entropy(&logits.view(), &y).0)
    };
    let split_accuracy = |model: &UniversalModel<F>, ids: &[usize]| -> Result<f64> {
        let logits = model.class_logits(&gid, &reps.view())?;
        accuracy(&logits.view(), labels, ids)
    };

    let initial_test_accuracy = split_accuracy(model, &splits.test)?;

    for epoch in 0..=cfg.epochs {
        let started = Instant::now();
        let train_loss = if epoch == 0 {
            eval_split_loss(model, &splits.train)?
        } else {
            let mut order = splits.train.clone();
            order.shuffle(&mut seeds::rng(cfg.seed, "batch", &[0, epoch as u64]));
            let mut loss_weighted = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                model.zero_grads();
                let h = reps.select(Axis(0), chunk);
                let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let logits = model.class_logits(&gid, &h.view())?;
                let (loss, d_logits) = cross_entropy(&logits.view(), &y);
                model.class_logits_backward(&gid, &h.view(), &d_logits.view())?;
                optimizer.set_lr(lr);
                optimizer.step(model, &filter);
                loss_weighted += loss * chunk.len() as f64;
            }
            loss_weighted / splits.train.len() as f64
        };
        history.push(EpochRecord {
            epoch,
            per_graph: vec![train_loss],
            total: train_loss,
            lr,
            wall_s: started.elapsed().as_secs_f64(),
        });
        if let Some(h) = hook.as_mut() {
            h(history.rows.last().unwrap(), model)?;
        }
        if epoch > 0 {
            lr = scheduler.step(train_loss, lr);
        }
    }

    let val_accuracy = if splits.val.is_empty() {
        None
    } else {
        Some(split_accuracy(model, &splits.val)?)
    };
    let test_accuracy = split_accuracy(model, &splits.test)?;
    Ok(FinetuneOutcome {
        history,
        initial_test_accuracy,
        val_accuracy,
        test_accuracy,
    })
}

#[derive(Debug)]
pub struct SupervisedOutcome<F> {
    pub model: UniversalModel<F>,
    pub history: LossHistory,
    pub initial_test_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: f64,
}

/// End-to-end cross-entropy training of a fresh model (encoder, backbone,
/// classification head) on one graph's train split. Same architecture as
/// the pre-trained paths, including hop tokenization.
pub fn train_supervised<F: Scalar>(
    graph: &PreprocessedGraph,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut hook: Option<EpochHook<'_, F>>,
) -> Result<SupervisedOutcome<F>> {
    cfg.validate()?;
    let gid = graph.graph_id().to_string();
    let splits = &graph.dataset.splits;
    if splits.train.is_empty() || splits.test.is_empty() {
        return Err(Error::InvalidSpec(format!(
            "graph `{gid}` needs nonempty train and test splits"
        )));
    }
    let labels = &graph.dataset.labels;

    let mut model = UniversalModel::<F>::new(
        model_cfg.clone(),
        seeds::derive(cfg.seed, "supervised.init", &[]),
    )?;
    model.register_graph(&gid, graph.aug_dim(), graph.dataset.num_classes)?;

    let filter = ParamFilter::prefixes(&[
        "backbone".to_string(),
        format!("encoder.{gid}"),
        format!("head.{gid}"),
    ]);
    let mut optimizer = Adam::new(cfg.base_lr);
    let mut scheduler = ReduceOnPlateau::new(cfg.scheduler_patience, cfg.scheduler_factor);
    let mut lr = cfg.base_lr;
    let mut history = LossHistory::new(vec![gid.clone()]);

    let eval_accuracy = |model: &UniversalModel<F>, ids: &[usize]| -> Result<f64> {
        let reps = representations(model, graph, cfg.batch_size)?;
        let logits = model.class_logits(&gid, &reps.view())?;
        accuracy(&logits.view(), labels, ids)
    };
    let initial_test_accuracy = eval_accuracy(&model, &splits.test)?;

    let seq = graph.tokens.seq_len();
    for epoch in 0..=cfg.epochs {
        let started = Instant::now();
        let train_loss = if epoch == 0 {
            // forward-only loss at the initial parameters
            supervised_pass(&mut model, graph, &splits.train, labels, seq, None, false)?
        } else {
            let mut order = splits.train.clone();
            order.shuffle(&mut seeds::rng(cfg.seed, "batch", &[0, epoch as u64]));
            let mut dropout_rng = seeds::rng(cfg.seed, "dropout", &[0, epoch as u64]);
            let mut loss_weighted = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                model.zero_grads();
                let loss = supervised_pass(
                    &mut model,
                    graph,
                    chunk,
                    labels,
                    seq,
                    Some(&mut dropout_rng),
                    true,
                )?;
                optimizer.set_lr(lr);
                optimizer.step(&mut model, &filter);
                loss_weighted += loss * chunk.len() as f64;
            }
            loss_weighted / splits.train.len() as f64
        };
        history.push(EpochRecord {
            epoch,
            per_graph: vec![train_loss],
            total: train_loss,
            lr,
            wall_s: started.elapsed().as_secs_f64(),
        });
        if let Some(h) = hook.as_mut() {
            h(history.rows.last().unwrap(), &model)?;
        }
        if epoch > 0 {
            lr = scheduler.step(train_loss, lr);
        }
    }

    let val_accuracy = if splits.val.is_empty() {
        None
    } else {
        Some(eval_accuracy(&model, &splits.val)?)
    };
    let test_accuracy = eval_accuracy(&model, &splits.test)?;
    Ok(SupervisedOutcome {
        model,
        history,
        initial_test_accuracy,
        val_accuracy,
        test_accuracy,
    })
}

/// One supervised batch over the listed nodes; returns the mean loss.
fn supervised_pass<F: Scalar>(
    model: &mut UniversalModel<F>,
    graph: &PreprocessedGraph,
    nodes: &[usize],
    labels: &[usize],
    seq: usize,
    dropout_rng: Option<&mut rand_chacha::ChaCha8Rng>,
    train: bool,
) -> Result<f64> {
    let gid = graph.graph_id();
    let y: Vec<usize> = nodes.iter().map(|&i| labels[i]).collect();
    match model.config.url_variant {
        UrlVariant::Transformer => {
            let rows = to_scalar::<F>(&graph.tokens.gather(nodes));
            let (reps, cache) = model.represent_tokens(
                gid,
                &rows.view(),
                nodes.len(),
                seq,
                dropout_rng,
            )?;
            let logits = model.class_logits(gid, &reps.view())?;
            let (loss, d_logits) = cross_entropy(&logits.view(), &y);
            if train {
                let d_reps = model.class_logits_backward(gid, &reps.view(), &d_logits.view())?;
                model.backward_represent(&cache, &d_reps.view(), None)?;
            }
            Ok(loss)
        }
        UrlVariant::Gcn | UrlVariant::Sage => {
            let x = to_scalar::<F>(&graph.x_aug);
            let (reps_all, cache) = model.represent_graph(
                gid,
                &x.view(),
                graph.adjacency.matrix(),
                &graph.mean_adjacency,
            )?;
            let h = reps_all.select(Axis(0), nodes);
            let logits = model.class_logits(gid, &h.view())?;
            let (loss, d_logits) = cross_entropy(&logits.view(), &y);
            if train {
                let d_h = model.class_logits_backward(gid, &h.view(), &d_logits.view())?;
                let mut d_reps = Array2::<F>::zeros(reps_all.raw_dim());
                for (row, &node) in nodes.iter().enumerate() {
                    for j in 0..d_h.ncols() {
                        d_reps[[node, j]] = d_reps[[node, j]] + d_h[[row, j]];
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
