use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup from `lr_start` to `lr_peak`, then cosine decay to `lr_min`
/// at `total_steps`. Steps past the end clamp to `lr_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_start: f64,
    pub lr_peak: f64,
    pub lr_min: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    /// 1e-6 → 3e-5 over 3000 warmup steps, cosine down to 1e-5.
    pub fn fine_tuning(total_steps: usize) -> Self {
        Self { lr_start: 1e-6, lr_peak: 3e-5, lr_min: 1e-5, warmup_steps: 3000, total_steps }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_start <= self.lr_peak
            && self.lr_min <= self.lr_peak
            && self.warmup_steps <= self.total_steps
            && [self.lr_start, self.lr_peak, self.lr_min].iter().all(|x| x.is_finite() && *x >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid learning-rate schedule {self:?}")))
        }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step >= self.total_steps {
            return self.lr_min;
        }
        if step <= self.warmup_steps {
            if self.warmup_steps == 0 {
                return self.lr_peak;
            }
            let f = step as f64 / self.warmup_steps as f64;
            return self.lr_peak * f + self.lr_start * (1.0 - f);
        }
        let progress = (step - self.warmup_steps) as f64 / (self.total_steps - self.warmup_steps) as f64;
        let c = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.lr_peak * c + self.lr_min * (1.0 - c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fine_tuning_schedule_endpoints() {
        let s = LrSchedule::fine_tuning(20_000);
        s.validate().unwrap();
        assert_eq!(s.lr_at(0), 1e-6);
        assert_eq!(s.lr_at(3000), 3e-5);
        assert_eq!(s.lr_at(20_000), 1e-5);
        assert_eq!(s.lr_at(25_000), 1e-5);
    }

    #[test]
    fn warmup_is_linear_and_decay_monotone() {
        let s = LrSchedule::fine_tuning(10_000);
        let mid = s.lr_at(1500);
        assert!((mid - (1e-6 + 3e-5) / 2.0).abs() < 1e-18);
        let mut prev = s.lr_at(3000);
        for step in (3001..=10_000).step_by(97) {
            let lr = s.lr_at(step);
            assert!(lr <= prev && lr >= 1e-5);
            prev = lr;
        }
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        let s = LrSchedule { lr_start: 1.0, ..LrSchedule::fine_tuning(10) };
        assert!(s.validate().is_err());
    }
}
