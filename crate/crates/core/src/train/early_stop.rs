pub const DEFAULT_PATIENCE: usize = 10;

/// True when the last `patience` epoch-to-epoch changes were all increases.
pub fn should_stop(history: &[f64], patience: usize) -> bool {
    if patience == 0 || history.len() <= patience {
        return false;
    }
    history[history.len() - patience - 1..]
        .windows(2)
        .all(|w| w[1] > w[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Keep going; `improved` marks a new best.
    Continue { improved: bool },
    /// Halt and restore the epoch with the lowest monitored value.
    Stop { best_epoch: usize },
}

/// Tracks a validation metric (lower is better) across epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    history: Vec<f64>,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            history: Vec::new(),
            best: None,
        }
    }

    /// Records the metric for the next epoch (epochs count from 0).
    pub fn observe(&mut self, value: f64) -> Decision {
        let epoch = self.history.len();
        self.history.push(value);
        let improved = match self.best {
            Some((_, b)) => value < b,
            None => true,
        };
        if improved {
            self.best = Some((epoch, value));
        }
        if should_stop(&self.history, self.patience) {
            Decision::Stop {
                best_epoch: self.best_epoch().unwrap_or(0),
            }
        } else {
            Decision::Continue { improved }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best.map(|(_, v)| v)
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }
}
