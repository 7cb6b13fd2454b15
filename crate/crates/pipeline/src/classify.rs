//! Categorization: training the per-category networks on (VV, soft-mask)
//! stacks and classifying detected slicks.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oseg_data::{augment, Category, Grid, Sample, PATCH_SIZE};
use oseg_nn::{
    accumulate_into, backprop, run, ExecOptions, Graph, Mode, NodeId, Op, OptimizerState, Tensor,
};

use crate::error::{PipelineError, Result};
use crate::slicks::Slick;
use crate::train::{EpochStats, TrainConfig, TrainHistory};

/// Stack (vv, soft mask) as a `[n, h, w, 2]` batch.
fn stack_batch(samples: &[(&Grid<f32>, &Grid<f32>)]) -> Tensor<f32> {
    let (h, w) = (samples[0].0.height(), samples[0].0.width());
    let mut data = Vec::with_capacity(samples.len() * h * w * 2);
    for (vv, soft) in samples {
        for (a, b) in vv.data().iter().zip(soft.data()) {
            data.push(*a);
            data.push(*b);
        }
    }
    Tensor::from_vec(&[samples.len(), h, w, 2], data)
}

fn one_hot(classes: &[usize], k: usize) -> Tensor<f32> {
    let mut data = vec![0.0f32; classes.len() * k];
    for (i, &c) in classes.iter().enumerate() {
        data[i * k + c] = 1.0;
    }
    Tensor::from_vec(&[classes.len(), k], data)
}

fn attach_ce_loss(graph: &mut Graph) -> Result<NodeId> {
    if let Ok(existing) = graph.node_by_name("train.loss") {
        return Ok(existing);
    }
    let prob = graph.output_node("prob")?;
    let target = graph.add_input("target");
    Ok(graph.push_node("train.loss", Op::CategoricalCe, vec![prob, target], vec![])?)
}

fn class_of(sample: &Sample, category: Category) -> Result<usize> {
    sample
        .categories
        .map(|l| l.value_index(category))
        .ok_or_else(|| PipelineError::Train("sample lacks a category label".into()))
}

/// Bind the stacked image; any attached loss target gets a valid one-hot
/// dummy (class 0) that never influences the prob output.
fn classifier_inputs(graph: &Graph, x: Tensor<f32>, k: usize) -> Vec<Tensor<f32>> {
    let n = x.shape()[0];
    graph
        .input_names()
        .iter()
        .map(|name| {
            if name == "image" {
                x.clone()
            } else {
                one_hot(&vec![0; n], k)
            }
        })
        .collect()
}

/// Argmax accuracy of a category network over labeled samples (the binary
/// mask doubles as the soft-mask channel for synthetic data).
pub fn classifier_accuracy(
    graph: &Graph,
    category: Category,
    samples: &[Sample],
    batch_size: usize,
) -> Result<f64> {
    let mut correct = 0usize;
    for chunk in samples.chunks(batch_size.max(1)) {
        let masks: Vec<Grid<f32>> = chunk.iter().map(|s| s.mask.map(|v| v as f32)).collect();
        let stacked: Vec<(&Grid<f32>, &Grid<f32>)> =
            chunk.iter().zip(&masks).map(|(s, m)| (&s.vv, m)).collect();
        let x = stack_batch(&stacked);
        let inputs = classifier_inputs(graph, x, category.value_count());
        let exec = run(graph, graph, &inputs, &ExecOptions::new(Mode::Inference))?;
        let prob = exec.output(graph, "prob")?;
        let k = prob.shape()[1];
        for (i, s) in chunk.iter().enumerate() {
            let row = &prob.data()[i * k..][..k];
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap();
            if pred == class_of(s, category)? {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Train one category network. `val_f1` in the returned history holds the
/// validation accuracy; training stops early once `stop_at_accuracy` is
/// reached (the best checkpoint is restored either way).
pub fn train_classifier(
    graph: &mut Graph,
    category: Category,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
    stop_at_accuracy: Option<f64>,
) -> Result<TrainHistory> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(PipelineError::Train("empty classifier dataset".into()));
    }
    let started = Instant::now();
    let k = category.value_count();
    let loss_node = attach_ce_loss(graph)?;
    let mut optimizer = OptimizerState::new(config.optimizer, config.learning_rate as f32, graph);
    let mut history = TrainHistory::default();
    let mut best: Option<Vec<Vec<f32>>> = None;
    let mut best_stats_ready = false;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64) << 20);
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for (batch_idx, batch) in order.chunks(config.batch_size.max(1)).enumerate() {
            let augmented: Vec<Sample> = batch
                .iter()
                .map(|&i| {
                    let mut arng = ChaCha8Rng::seed_from_u64(
                        config.seed ^ ((epoch as u64) << 32) ^ (i as u64).wrapping_mul(0x9e37),
                    );
                    augment(&train_set[i], &config.augment, &mut arng)
                })
                .collect();
            let masks: Vec<Grid<f32>> = augmented.iter().map(|s| s.mask.map(|v| v as f32)).collect();
            let stacked: Vec<(&Grid<f32>, &Grid<f32>)> =
                augmented.iter().zip(&masks).map(|(s, m)| (&s.vv, m)).collect();
            let x = stack_batch(&stacked);
            let classes: Vec<usize> = batch
                .iter()
                .map(|&i| class_of(&train_set[i], category))
                .collect::<Result<_>>()?;
            let t = one_hot(&classes, k);

            let opts = ExecOptions {
                mode: Mode::Training,
                rng_seed: config.seed ^ ((epoch as u64) << 24) ^ batch_idx as u64,
                check_finite: false,
            };
            let exec = run(graph, graph, &[x, t], &opts)?;
            let loss = exec.value(loss_node).scalar_value() as f64;
            if !loss.is_finite() {
                return Err(PipelineError::NonFiniteLoss { epoch, batch: batch_idx });
            }
            epoch_loss += loss;

            let prob = exec.output(graph, "prob")?;
            for (i, &c) in classes.iter().enumerate() {
                let row = &prob.data()[i * k..][..k];
                let pred = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(j, _)| j)
                    .unwrap();
                if pred == c {
                    correct += 1;
                }
            }

            let grads = backprop(graph, graph, &exec, loss_node, false)?;
            let stat_updates = exec.stat_updates.clone();
            drop(exec);
            graph.zero_grads();
            accumulate_into(graph, &grads);
            optimizer.apply(graph)?;
            graph.apply_stat_updates(&stat_updates);
        }

        let val_acc = classifier_accuracy(graph, category, val_set, config.batch_size)?;
        let n_batches = order.chunks(config.batch_size.max(1)).count();
        history.epochs.push(EpochStats {
            loss: epoch_loss / n_batches as f64,
            accuracy: correct as f64 / train_set.len() as f64,
            val_f1: val_acc,
        });
        if val_acc > history.best_val_f1 || best.is_none() {
            history.best_val_f1 = val_acc;
            history.best_epoch = Some(epoch);
            best = Some(graph.params().iter().map(|p| p.value.data().to_vec()).collect());
            best_stats_ready = graph.stats_ready;
        }
        if let Some(target) = stop_at_accuracy {
            if val_acc >= target {
                break;
            }
        }
    }

    if let Some(vals) = &best {
        for (p, v) in graph.params_mut().iter_mut().zip(vals) {
            p.value.data_mut().copy_from_slice(v);
        }
        graph.stats_ready = best_stats_ready;
    }
    history.wall_time_s = started.elapsed().as_secs_f64();
    Ok(history)
}

/// Mirror-padded 160x160 crop centered on `(cy, cx)`.
fn centered_patch(grid: &Grid<f32>, cy: f64, cx: f64) -> Grid<f32> {
    let half = PATCH_SIZE as isize / 2;
    let (h, w) = (grid.height(), grid.width());
    let top = cy.round() as isize - half;
    let left = cx.round() as isize - half;
    let mut out = Grid::new(PATCH_SIZE, PATCH_SIZE, 0.0f32);
    for r in 0..PATCH_SIZE {
        for c in 0..PATCH_SIZE {
            let sr = oseg_data::grid::mirror_index(top + r as isize, h);
            let sc = oseg_data::grid::mirror_index(left + c as isize, w);
            out.set(r, c, grid.get(sr, sc));
        }
    }
    out
}

/// Per-slick category predictions: crop the patch around each slick
/// centroid, stack it with the soft map, and take the argmax of every
/// available category network. Missing categories are simply absent from
/// the result.
pub fn classify_slicks(
    slicks: &[Slick],
    vv: &Grid<f32>,
    soft: &Grid<f32>,
    models: &[(Category, Graph)],
) -> Result<Vec<Vec<(Category, usize)>>> {
    let mut out = Vec::with_capacity(slicks.len());
    for slick in slicks {
        let (cy, cx) = slick.centroid;
        let patch_vv = centered_patch(vv, cy, cx);
        let patch_soft = centered_patch(soft, cy, cx);
        let x = stack_batch(&[(&patch_vv, &patch_soft)]);
        let mut preds = Vec::with_capacity(models.len());
        for (category, graph) in models {
            let exec = run(graph, graph, &[x.clone()], &ExecOptions::new(Mode::Inference))?;
            let prob = exec.output(graph, "prob")?;
            let k = prob.shape()[1];
            if k != category.value_count() {
                return Err(PipelineError::Pipeline(format!(
                    "{} network has {} outputs, expected {}",
                    category.name(),
                    k,
                    category.value_count()
                )));
            }
            let pred = prob
                .data()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap();
            preds.push((*category, pred));
        }
        out.push(preds);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicks::{extract_slicks, threshold_mask};
    use oseg_nn::{build_classifier, ModelFlags};

    #[test]
    fn untrained_classifier_is_near_uniform() {
        let (_, graph) = build_classifier(
            4,
            &ModelFlags { use_bn: false, dropout_rate: 0.0, ..ModelFlags::default() },
        )
        .unwrap();
        let vv = Grid::new(PATCH_SIZE, PATCH_SIZE, 0.4f32);
        let soft = Grid::new(PATCH_SIZE, PATCH_SIZE, 0.0f32);
        let x = stack_batch(&[(&vv, &soft)]);
        let exec = run(&graph, &graph, &[x], &ExecOptions::new(Mode::Inference)).unwrap();
        let prob = exec.output(&graph, "prob").unwrap();
        let entropy: f32 = prob.data().iter().map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 }).sum();
        assert!(entropy > 0.8 * (4.0f32).ln(), "entropy {entropy}");
    }

    #[test]
    fn slick_at_raster_corner_classifies_without_panic() {
        let (_, graph) = build_classifier(
            2,
            &ModelFlags { use_bn: false, dropout_rate: 0.0, ..ModelFlags::default() },
        )
        .unwrap();
        let mut soft = Grid::new(64, 64, 0.0f32);
        soft.set(0, 0, 0.95);
        soft.set(0, 1, 0.95);
        let vv = Grid::new(64, 64, 0.3f32);
        let mask = threshold_mask(&soft, 0.5);
        let slicks = extract_slicks(&mask, &soft, 40.0);
        let preds =
            classify_slicks(&slicks, &vv, &soft, &[(Category::PatchShape, graph)]).unwrap();
        assert_eq!(preds.len(), 1);
        let (cat, idx) = preds[0][0];
        assert_eq!(cat, Category::PatchShape);
        assert!(idx < 2);
    }
}
