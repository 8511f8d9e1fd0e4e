use serde::{Deserialize, Serialize};

use super::LossSpec;

/// 1-based epoch of the lowest validation loss. Ties keep the earliest
/// epoch. Returns `None` when the curve is empty or contains a non-finite
/// value (a diverged run has no trustworthy checkpoint).
pub fn best_epoch(val_loss: &[f64]) -> Option<usize> {
    if val_loss.iter().any(|v| !v.is_finite()) {
        return None;
    }
    val_loss
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i + 1)
}

/// Validation history of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRun {
    pub spec: LossSpec,
    /// Validation value of the training loss, one per epoch.
    pub val_loss: Vec<f64>,
    /// Validation mIoU per epoch, aligned with `val_loss`.
    pub val_miou: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSelectionRow {
    pub loss: LossSpec,
    pub checkpoint_epoch: Option<usize>,
    pub val_miou: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSelection {
    pub rows: Vec<LossSelectionRow>,
    /// Index into `rows` of the winning loss, if any run converged.
    pub winner: Option<usize>,
}

impl LossSelection {
    pub fn winner_row(&self) -> Option<&LossSelectionRow> {
        self.winner.map(|i| &self.rows[i])
    }
}

/// Picks each run's checkpoint by its own validation loss, then the loss
/// whose checkpoint has the highest validation mIoU. Earlier runs win ties.
pub fn select_loss_by_validation(runs: &[LossRun]) -> LossSelection {
    let rows: Vec<LossSelectionRow> = runs
        .iter()
        .map(|run| {
            let epoch = best_epoch(&run.val_loss);
            let miou = epoch.and_then(|e| run.val_miou.get(e - 1).copied());
            LossSelectionRow {
                loss: run.spec.clone(),
                checkpoint_epoch: epoch,
                val_miou: miou,
                diverged: epoch.is_none(),
            }
        })
        .collect();
    let winner = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.val_miou.map(|m| (i, m)))
        .fold(None, |best: Option<(usize, f64)>, (i, m)| match best {
            Some((_, b)) if b >= m => best,
            _ => Some((i, m)),
        })
        .map(|(i, _)| i);
    LossSelection { rows, winner }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_is_argmin_of_validation_loss() {
        let curve = [0.9, 0.8, 0.7, 0.6, 0.55, 0.5, 0.31, 0.4, 0.35, 0.45];
        assert_eq!(best_epoch(&curve), Some(7));
        assert_eq!(best_epoch(&[]), None);
        assert_eq!(best_epoch(&[0.5, 0.5]), Some(1));
    }

    #[test]
    fn diverged_run_is_flagged_and_skipped() {
        let runs = vec![
            LossRun {
                spec: LossSpec::wce(),
                val_loss: vec![1.0, f64::NAN],
                val_miou: vec![0.9, 0.0],
            },
            LossRun {
                spec: LossSpec::focal(),
                val_loss: vec![1.0, 0.5],
                val_miou: vec![0.4, 0.6],
            },
        ];
        let sel = select_loss_by_validation(&runs);
        assert!(sel.rows[0].diverged);
        assert_eq!(sel.winner_row().unwrap().loss, LossSpec::focal());
        assert_eq!(sel.rows[1].checkpoint_epoch, Some(2));
    }
}
