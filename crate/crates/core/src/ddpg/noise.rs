use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Ornstein-Uhlenbeck exploration noise.
///
/// `value' = value + theta*(mu - value)*dt + sigma*sqrt(dt)*N(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuNoise {
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    pub dt: f64,
    pub value: f64,
}

impl OuNoise {
    /// Process starting at zero with unit step.
    pub fn new(theta: f64, sigma: f64) -> Self {
        Self { theta, sigma, mu: 0.0, dt: 1.0, value: 0.0 }
    }

    pub fn with_value(mut self, value: f64) -> Self {
        self.value = value;
        self
    }

    /// Advance the process and return the new value.
    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.value += self.theta * (self.mu - self.value) * self.dt
            + self.sigma * self.dt.sqrt() * z;
        self.value
    }

    /// Restore the episode-start value.
    pub fn reset(&mut self) {
        self.value = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn deterministic_drift_without_diffusion() {
        let mut noise = OuNoise::new(0.15, 0.0).with_value(1.0);
        let mut rng = stream(1, 0, 0, Purpose::Noise);
        // 1 + 0.15*(0 - 1) = 0.85 on the first step.
        assert!((noise.step(&mut rng) - 0.85).abs() < 1e-15);
        assert!((noise.step(&mut rng) - 0.7225).abs() < 1e-15);
    }

    #[test]
    fn mean_is_fixed_point_without_diffusion() {
        let mut noise = OuNoise { theta: 0.15, sigma: 0.0, mu: 0.4, dt: 1.0, value: 0.4 };
        let mut rng = stream(2, 0, 0, Purpose::Noise);
        for _ in 0..100 {
            assert_eq!(noise.step(&mut rng), 0.4);
        }
    }

    #[test]
    fn long_run_mean_approaches_mu() {
        // Stationary-statistics check with a fixed stream: the sample mean
        // over n steps stays within ~3 standard errors of mu.
        let theta = 0.15;
        let sigma = 0.02;
        let n = 100_000usize;
        let mut noise = OuNoise::new(theta, sigma);
        let mut rng = stream(3, 0, 0, Purpose::Noise);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += noise.step(&mut rng);
        }
        let mean = sum / n as f64;
        let tol = 3.0 * sigma / (2.0 * theta * n as f64).sqrt();
        assert!(mean.abs() < tol, "sample mean {mean} exceeds tolerance {tol}");
    }

    #[test]
    fn reset_restores_zero() {
        let mut noise = OuNoise::new(0.15, 0.02);
        let mut rng = stream(4, 0, 0, Purpose::Noise);
        for _ in 0..10 {
            noise.step(&mut rng);
        }
        noise.reset();
        assert_eq!(noise.value, 0.0);
    }
}
