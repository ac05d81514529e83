/// Multiplies the learning rate by `factor` once the best validation loss is
/// `patience` epochs old, never going below `min_lr`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            min_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's validation loss and returns the learning rate for the next.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

/// Stops once the best validation loss is `patience` epochs old.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
        }
    }

    /// Records one epoch; returns true when training should stop.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        self.epoch += 1;
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = self.epoch;
        }
        self.epoch - self.best_epoch >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decreasing_losses_keep_lr() {
        let mut s = PlateauScheduler::new(5e-4, 0.1, 5, 1e-8);
        for k in 0..50 {
            assert_eq!(s.observe(10.0 - k as f64 * 0.1), 5e-4);
        }
    }

    #[test]
    fn five_flat_epochs_decay() {
        let mut s = PlateauScheduler::new(5e-4, 0.1, 5, 1e-8);
        s.observe(1.0);
        for _ in 0..4 {
            assert_eq!(s.observe(1.0), 5e-4);
        }
        assert!((s.observe(1.0) - 5e-5).abs() < 1e-20);
    }

    #[test]
    fn decays_floor_at_min() {
        let mut s = PlateauScheduler::new(5e-4, 0.1, 5, 1e-8);
        s.observe(1.0);
        for _ in 0..200 {
            s.observe(2.0);
        }
        assert_eq!(s.lr, 1e-8);
    }

    #[test]
    fn early_stopping_counts_from_best() {
        let mut e = EarlyStopping::new(15);
        assert!(!e.observe(1.0));
        for _ in 0..13 {
            assert!(!e.observe(2.0));
        }
        // Improvement on the 14th epoch since best resets the clock.
        assert!(!e.observe(0.5));
        for _ in 0..14 {
            assert!(!e.observe(0.7));
        }
        assert!(e.observe(0.7));
        assert_eq!(e.best_epoch(), 15);
    }

    #[test]
    fn monotone_improvement_never_stops() {
        let mut e = EarlyStopping::new(15);
        for k in 0..500 {
            assert!(!e.observe(-(k as f64)));
        }
    }
}
