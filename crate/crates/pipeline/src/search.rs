//! Randomized hyperparameter search over the fixed configuration grid, with
//! an append-only trial log for resumption.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use oseg_data::{AugmentConfig, Sample};
use oseg_nn::{build_ofcn, ModelFlags, OptimizerKind};

use crate::error::{PipelineError, Result};
use crate::train::{train, LossConfig, LossKind, TrainConfig};

pub const BN_GRID: [bool; 2] = [true, false];
pub const SE_GRID: [bool; 2] = [true, false];
pub const LOSS_GRID: [LossKind; 4] =
    [LossKind::WeightedBce, LossKind::Jaccard, LossKind::Focal, LossKind::Lovasz];
pub const L2_GRID: [f64; 6] = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2];
pub const DROPOUT_GRID: [f64; 4] = [0.0, 0.1, 0.25, 0.5];
pub const LR_GRID: [f64; 4] = [1e-4, 5e-4, 1e-3, 5e-3];
/// Class weight applies to the weighted binary cross-entropy only; weights
/// above 5 flood the detector with false positives and stay out of the grid.
pub const CW_GRID: [f64; 4] = [1.0, 2.0, 3.0, 5.0];

pub fn space_size() -> usize {
    BN_GRID.len()
        * SE_GRID.len()
        * LOSS_GRID.len()
        * L2_GRID.len()
        * DROPOUT_GRID.len()
        * LR_GRID.len()
        * CW_GRID.len()
}

/// Decode a mixed-radix index into a configuration.
pub fn config_at(index: usize, base: &TrainConfig) -> TrainConfig {
    let mut i = index;
    let pick = |i: &mut usize, n: usize| {
        let v = *i % n;
        *i /= n;
        v
    };
    let cw = CW_GRID[pick(&mut i, CW_GRID.len())];
    let lr = LR_GRID[pick(&mut i, LR_GRID.len())];
    let dropout = DROPOUT_GRID[pick(&mut i, DROPOUT_GRID.len())];
    let l2 = L2_GRID[pick(&mut i, L2_GRID.len())];
    let loss = LOSS_GRID[pick(&mut i, LOSS_GRID.len())];
    let se = SE_GRID[pick(&mut i, SE_GRID.len())];
    let bn = BN_GRID[pick(&mut i, BN_GRID.len())];
    TrainConfig {
        use_bn: bn,
        use_se: se,
        loss: LossConfig { kind: loss, class_weight: cw, alpha: 0.25, gamma: 2.0 },
        l2_penalty: l2,
        dropout,
        learning_rate: lr,
        class_weight: cw,
        ..base.clone()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub config: TrainConfig,
    pub seed: u64,
    pub val_f1: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone)]
pub struct SearchParams {
    pub budget: usize,
    /// Width of the reduced architecture trained per trial.
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub log_path: PathBuf,
    pub augment: AugmentConfig,
}

fn read_log(path: &Path) -> Result<Vec<TrialRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        out.push(
            serde_json::from_str(line)
                .map_err(|e| PipelineError::Search(format!("corrupt trial log line: {e}")))?,
        );
    }
    Ok(out)
}

fn append_log(path: &Path, record: &TrialRecord) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(record)
        .map_err(|e| PipelineError::Search(format!("trial encode: {e}")))?;
    writeln!(f, "{line}")?;
    Ok(())
}

/// The first `budget` entries of the seeded permutation of the whole grid:
/// uniform sampling without replacement, and stable across resumptions.
pub fn planned_indices(budget: usize, seed: u64) -> Vec<usize> {
    let mut all: Vec<usize> = (0..space_size()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all.truncate(budget.min(all.len()));
    all
}

/// Run (or resume) the search: each planned trial trains a reduced-width
/// model for the reduced epoch budget and logs its best validation F1.
/// Returns every known trial, best first.
pub fn hparam_search(
    params: &SearchParams,
    train_set: &[Sample],
    val_set: &[Sample],
) -> Result<Vec<TrialRecord>> {
    if params.budget < 1 {
        return Err(PipelineError::Search("budget must be at least 1".into()));
    }
    let mut records = read_log(&params.log_path)?;
    let done: Vec<usize> = records.iter().map(|r| r.index).collect();

    for &index in &planned_indices(params.budget, params.seed) {
        if done.contains(&index) {
            continue;
        }
        let config = TrainConfig {
            batch_size: params.batch_size,
            epochs: params.epochs,
            seed: params.seed ^ index as u64,
            augment: params.augment,
            optimizer: OptimizerKind::Adam,
            ..config_at(index, &TrainConfig::c1())
        };
        let flags = ModelFlags {
            use_bn: config.use_bn,
            use_se: config.use_se,
            dropout_rate: config.dropout,
            se_ratio: 8,
            init_seed: config.seed,
        };
        let started = Instant::now();
        let (_, mut graph) = build_ofcn(params.width, &flags)?;
        let history = train(&mut graph, train_set, val_set, &config)?;
        let record = TrialRecord {
            index,
            seed: config.seed,
            config,
            val_f1: history.best_val_f1,
            duration_s: started.elapsed().as_secs_f64(),
        };
        append_log(&params.log_path, &record)?;
        records.push(record);
    }

    records.sort_by(|a, b| b.val_f1.partial_cmp(&a.val_f1).unwrap());
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_has_expected_cardinality() {
        assert_eq!(space_size(), 2 * 2 * 4 * 6 * 4 * 4 * 4);
    }

    #[test]
    fn every_decoded_config_lies_on_the_grids() {
        for index in (0..space_size()).step_by(97) {
            let c = config_at(index, &TrainConfig::c1());
            assert!(L2_GRID.contains(&c.l2_penalty));
            assert!(DROPOUT_GRID.contains(&c.dropout));
            assert!(LR_GRID.contains(&c.learning_rate));
            assert!(CW_GRID.contains(&c.class_weight));
            assert!(LOSS_GRID.contains(&c.loss.kind));
        }
    }

    #[test]
    fn decoding_is_a_bijection() {
        let mut seen = std::collections::HashSet::new();
        for index in 0..space_size() {
            let c = config_at(index, &TrainConfig::c1());
            let key = format!(
                "{}-{}-{:?}-{}-{}-{}-{}",
                c.use_bn, c.use_se, c.loss.kind, c.l2_penalty, c.dropout, c.learning_rate, c.class_weight
            );
            assert!(seen.insert(key), "duplicate at {index}");
        }
    }

    #[test]
    fn planned_indices_are_distinct_and_stable() {
        let a = planned_indices(100, 5);
        let b = planned_indices(100, 5);
        assert_eq!(a, b);
        let set: std::collections::HashSet<_> = a.iter().collect();
        assert_eq!(set.len(), 100);
        // A larger budget extends the same prefix.
        let c = planned_indices(150, 5);
        assert_eq!(&c[..100], &a[..]);
    }

    #[test]
    fn c1_is_in_the_space() {
        let c1 = TrainConfig::c1();
        let found = (0..space_size()).any(|i| {
            let c = config_at(i, &c1);
            c.use_bn && c.use_se
                && c.loss.kind == LossKind::WeightedBce
                && c.l2_penalty == 0.0
                && c.dropout == 0.1
                && c.learning_rate == 1e-3
                && c.class_weight == 2.0
        });
        assert!(found);
    }
}
