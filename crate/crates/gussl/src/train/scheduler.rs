//! Reduce-on-plateau learning-rate schedule: halve (by `factor`) whenever
//! the monitored loss has not improved for `patience` consecutive epochs.

#[derive(Debug, Clone)]
pub struct ReduceOnPlateau {
    patience: usize,
    factor: f64,
    best: f64,
    bad_epochs: usize,
}

impl ReduceOnPlateau {
    pub fn new(patience: usize, factor: f64) -> Self {
        assert!(patience >= 1, "patience must be at least 1");
        assert!(factor > 0.0 && factor < 1.0, "factor must be in (0, 1)");
        ReduceOnPlateau {
            patience,
            factor,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feed one epoch's monitored loss; returns the lr for the next epoch.
    /// NaN losses never count as improvement.
    pub fn step(&mut self, loss: f64, current_lr: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
            current_lr
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.bad_epochs = 0;
                current_lr * self.factor
            } else {
                current_lr
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_exactly_after_patience_stalls() {
        let mut s = ReduceOnPlateau::new(3, 0.5);
        let mut lr = 1.0;
        lr = s.step(1.0, lr); // new best
        assert_eq!(lr, 1.0);
        lr = s.step(1.0, lr); // stall 1
        lr = s.step(1.1, lr); // stall 2
        assert_eq!(lr, 1.0);
        lr = s.step(1.2, lr); // stall 3 -> halve
        assert_eq!(lr, 0.5);
        // counter reset: three more stalls before the next halving
        lr = s.step(1.2, lr);
        lr = s.step(1.2, lr);
        assert_eq!(lr, 0.5);
        lr = s.step(1.2, lr);
        assert_eq!(lr, 0.25);
    }

    #[test]
    fn improvement_resets_the_counter() {
        let mut s = ReduceOnPlateau::new(2, 0.5);
        let mut lr = 1.0;
        lr = s.step(1.0, lr);
        lr = s.step(1.0, lr); // stall 1
        lr = s.step(0.9, lr); // improvement
        lr = s.step(0.95, lr); // stall 1
        assert_eq!(lr, 1.0);
        lr = s.step(0.95, lr); // stall 2 -> halve
        assert_eq!(lr, 0.5);
    }

    #[test]
    fn lr_is_non_increasing() {
        let mut s = ReduceOnPlateau::new(1, 0.5);
        let mut lr = 1.0;
        let mut last = lr;
        for i in 0..20 {
            lr = s.step(1.0 + (i % 3) as f64 * 0.1, lr);
            assert!(lr <= last);
            last = lr;
        }
    }
}
