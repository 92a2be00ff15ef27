use super::optim::VelocityRule;
use crate::error::{Error, Result};

/// A value that is constant, or moves linearly from `initial` to
/// `final_value` over the first `span` epochs and then stays there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSchedule {
    pub initial: f64,
    pub final_value: Option<f64>,
    pub span: usize,
}

impl LinearSchedule {
    pub fn constant(value: f64) -> Self {
        Self {
            initial: value,
            final_value: None,
            span: 0,
        }
    }

    pub fn linear(initial: f64, final_value: f64, span: usize) -> Self {
        Self {
            initial,
            final_value: Some(final_value),
            span,
        }
    }

    pub fn value_at(&self, epoch: usize) -> f64 {
        match self.final_value {
            None => self.initial,
            Some(fv) if epoch >= self.span => fv,
            Some(fv) => {
                let t = epoch.min(self.span) as f64 / self.span as f64;
                self.initial + (fv - self.initial) * t
            }
        }
    }

    pub(crate) fn values(&self) -> impl Iterator<Item = f64> {
        std::iter::once(self.initial).chain(self.final_value)
    }
}

/// Hyperparameters for unsupervised k-sparse autoencoder training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub alpha: f64,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_sigma: f64,
    pub momentum: LinearSchedule,
    pub learning_rate: LinearSchedule,
    pub k_schedule_enabled: bool,
    pub k_initial: usize,
    pub velocity_rule: VelocityRule,
    pub seed: u64,
}

/// Default starting sparsity for the k schedule: a tenth of the hidden
/// units, never below the target.
pub fn default_k_initial(k: usize, hidden_dim: usize) -> usize {
    k.max((0.1 * hidden_dim as f64).round() as usize).min(hidden_dim.max(k))
}

impl TrainConfig {
    /// Defaults: σ = 0.01, m = 0.9, η = 0.01, batch 100, α = 1, k schedule on.
    pub fn new(hidden_dim: usize, k: usize) -> Self {
        Self {
            k,
            alpha: 1.0,
            hidden_dim,
            epochs: 10,
            batch_size: 100,
            init_sigma: 0.01,
            momentum: LinearSchedule::constant(0.9),
            learning_rate: LinearSchedule::constant(0.01),
            k_schedule_enabled: true,
            k_initial: default_k_initial(k, hidden_dim),
            velocity_rule: VelocityRule::Updated,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 || self.k > self.hidden_dim {
            return bad(format!("k = {} must be in 1..={}", self.k, self.hidden_dim));
        }
        if self.k_initial < self.k || self.k_initial > self.hidden_dim {
            return bad(format!(
                "k_initial = {} must be in {}..={}",
                self.k_initial, self.k, self.hidden_dim
            ));
        }
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return bad(format!("alpha = {} must be >= 1", self.alpha));
        }
        if (self.alpha * self.k as f64).round() as usize > self.hidden_dim {
            return bad(format!(
                "alpha*k = {} exceeds hidden_dim {}",
                (self.alpha * self.k as f64).round(),
                self.hidden_dim
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.init_sigma.is_finite() && self.init_sigma > 0.0) {
            return bad(format!("init_sigma = {} must be positive", self.init_sigma));
        }
        if self.momentum.values().any(|m| !(0.0..1.0).contains(&m)) {
            return bad("momentum must stay in [0, 1)".into());
        }
        if self.learning_rate.values().any(|v| !(v.is_finite() && v > 0.0)) {
            return bad("learning rate must stay positive".into());
        }
        Ok(())
    }
}

/// Sparsity level used in `epoch`.
///
/// With scheduling on, k moves linearly from `k_initial` to `k` over the
/// first `floor(epochs / 2)` epochs (rounded to the nearest integer) and is
/// held at `k` afterwards.
pub fn scheduled_k(config: &TrainConfig, epoch: usize) -> usize {
    if !config.k_schedule_enabled {
        return config.k;
    }
    let half = config.epochs / 2;
    if epoch >= half {
        return config.k;
    }
    let start = config.k_initial as f64;
    let end = config.k as f64;
    (start + (end - start) * epoch as f64 / half as f64).round() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_from_hundred_to_fifteen() {
        let mut c = TrainConfig::new(1000, 15);
        c.k_initial = 100;
        c.epochs = 10;
        let ks: Vec<usize> = (0..10).map(|e| scheduled_k(&c, e)).collect();
        assert_eq!(ks, vec![100, 83, 66, 49, 32, 15, 15, 15, 15, 15]);
    }

    #[test]
    fn schedule_disabled_and_terminal() {
        let mut c = TrainConfig::new(1000, 15);
        c.epochs = 7;
        assert_eq!(scheduled_k(&c, c.epochs - 1), 15);
        c.k_schedule_enabled = false;
        assert!((0..7).all(|e| scheduled_k(&c, e) == 15));
    }

    #[test]
    fn schedule_monotone_and_reaches_target_at_half() {
        for epochs in 1..40 {
            for (k, k0, h) in [(3, 30, 64), (5, 5, 10), (1, 100, 100)] {
                let mut c = TrainConfig::new(h, k);
                c.k_initial = k0;
                c.epochs = epochs;
                let ks: Vec<usize> = (0..epochs).map(|e| scheduled_k(&c, e)).collect();
                assert!(ks.windows(2).all(|w| w[0] >= w[1]));
                assert!(ks[epochs / 2..].iter().all(|&v| v == k));
                assert!(ks.iter().all(|&v| v >= k && v <= k0));
            }
        }
    }

    #[test]
    fn default_k_initial_scales_with_width() {
        assert_eq!(default_k_initial(15, 1000), 100);
        assert_eq!(default_k_initial(25, 100), 25);
        assert_eq!(default_k_initial(5, 256), 26);
    }

    #[test]
    fn linear_schedule_values() {
        let s = LinearSchedule::linear(1.0, 0.001, 200);
        assert_eq!(s.value_at(0), 1.0);
        assert!((s.value_at(100) - 0.5005).abs() < 1e-12);
        assert_eq!(s.value_at(200), 0.001);
        assert_eq!(s.value_at(500), 0.001);
        assert_eq!(LinearSchedule::constant(0.9).value_at(42), 0.9);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::new(100, 10).validate().is_ok());
        assert!(TrainConfig::new(100, 0).validate().is_err());
        assert!(TrainConfig::new(10, 20).validate().is_err());
        let mut c = TrainConfig::new(100, 40);
        c.alpha = 3.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::new(100, 10);
        c.k_initial = 5;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::new(100, 10);
        c.momentum = LinearSchedule::constant(1.0);
        assert!(c.validate().is_err());
    }
}
