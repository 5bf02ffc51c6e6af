/// Tracks the best validation loss and counts iterations without a
/// strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_iteration: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_iteration: 0,
            stale: 0,
        }
    }

    /// Records the loss of `iteration` (1-based). Returns `true` when
    /// training should stop.
    pub fn update(&mut self, iteration: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_iteration = iteration;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }

    pub fn improved_at(&self, iteration: usize) -> bool {
        self.best_iteration == iteration
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_iteration(&self) -> usize {
        self.best_iteration
    }
}
