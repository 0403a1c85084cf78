use serde::{Deserialize, Serialize};

use super::run::{run_stage, Example};
use super::stage::StageConfig;
use crate::error::{Error, Result};
use crate::model::MultimodalModel;

/// Learning rates and epoch counts searched for task finetuning.
pub const DEFAULT_LR_GRID: [f64; 3] = [1e-3, 1e-4, 1e-5];
pub const DEFAULT_EPOCH_GRID: [usize; 4] = [1, 2, 3, 5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepScore {
    pub bleu: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lr: f64,
    pub epochs: usize,
    pub score: Option<SweepScore>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Grid cells sorted by validation BLEU (descending); failed cells last.
/// Ties keep grid order.
pub fn hyperparameter_sweep<F>(
    base: &MultimodalModel,
    train: &[Example],
    template: &StageConfig,
    lrs: &[f64],
    epochs: &[usize],
    mut evaluate: F,
) -> Result<Vec<SweepRow>>
where
    F: FnMut(&MultimodalModel) -> Result<SweepScore>,
{
    if lrs.is_empty() || epochs.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(lrs.len() * epochs.len());
    for &lr in lrs {
        for &ep in epochs {
            let mut cfg = template.clone();
            cfg.lr = lr;
            cfg.epochs = ep;
            let mut model = base.clone();
            let outcome = run_stage(&mut model, train, &cfg, None).and_then(|_| evaluate(&model));
            rows.push(match outcome {
                Ok(score) => SweepRow {
                    lr,
                    epochs: ep,
                    score: Some(score),
                    error: None,
                },
                Err(e) => SweepRow {
                    lr,
                    epochs: ep,
                    score: None,
                    error: Some(e.report()),
                },
            });
        }
    }
    rows.sort_by(|a, b| match (&a.score, &b.score) {
        (Some(x), Some(y)) => y.bleu.total_cmp(&x.bleu),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_twelve_cells() {
        assert_eq!(DEFAULT_LR_GRID.len() * DEFAULT_EPOCH_GRID.len(), 12);
    }
}
