/// Patience-based stopping on a validation loss.
///
/// An epoch counts as an improvement only if its loss is below the reference
/// best by strictly more than `min_delta`. The best checkpoint is tracked
/// separately as the lowest loss seen, ties resolved to the earliest epoch.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    reference: f64,
    stale: usize,
    epochs: usize,
    best_loss: f64,
    best_epoch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decision {
    /// This epoch is the new best checkpoint.
    pub new_best: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience: patience.max(1),
            min_delta,
            reference: f64::INFINITY,
            stale: 0,
            epochs: 0,
            best_loss: f64::INFINITY,
            best_epoch: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> Decision {
        self.epochs += 1;
        let first = self.epochs == 1;
        if first || loss < self.reference - self.min_delta {
            self.reference = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        let new_best = first || loss < self.best_loss;
        if new_best {
            self.best_loss = loss;
            self.best_epoch = self.epochs;
        }
        Decision { new_best, stop: self.stale >= self.patience }
    }

    /// 1-based epoch of the best checkpoint so far.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// Whether training stops after the last entry of `history`.
pub fn early_stop(history: &[f64], patience: usize, min_delta: f64) -> bool {
    let mut es = EarlyStopping::new(patience, min_delta);
    history.iter().map(|&l| es.observe(l).stop).last().unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decreasing_history_never_stops() {
        let h: Vec<f64> = (0..100).map(|i| 10.0 - i as f64 * 0.01).collect();
        for n in 1..=h.len() {
            assert!(!early_stop(&h[..n], 10, 1e-4));
        }
    }

    #[test]
    fn flat_history_stops_at_epoch_eleven() {
        let h = [1.0; 12];
        let first = (1..=h.len()).find(|&n| early_stop(&h[..n], 10, 1e-4));
        assert_eq!(first, Some(11));
    }

    #[test]
    fn improvement_of_exactly_min_delta_does_not_reset() {
        let d = 1e-4;
        let mut h = vec![1.0];
        for i in 1..=10 {
            h.push(1.0 - d * (i as f64).min(1.0));
        }
        assert!(early_stop(&h, 10, d));
        let mut h = vec![1.0; 10];
        h.push(1.0 - 2.0 * d);
        assert!(!early_stop(&h, 10, d));
    }

    #[test]
    fn ties_keep_the_earliest_best() {
        let mut es = EarlyStopping::new(10, 1e-4);
        for l in [2.0, 1.0, 1.5, 1.0, 1.0] {
            es.observe(l);
        }
        assert_eq!(es.best_epoch(), 2);
    }
}
