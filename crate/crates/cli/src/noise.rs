//! Seeded measurement noise for synthetic data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    None,
    /// Normal with standard deviation `amplitude`.
    Gaussian,
    /// Uniform on `[−amplitude, amplitude)`.
    Uniform,
    /// The entries of `values`, one per sample.
    CustomVector,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub amplitude: f64,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl NoiseSpec {
    /// `n` noise samples; the same spec always yields the same vector.
    pub fn generate(&self, n: usize) -> Result<Vec<f64>> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(CliError::Config(format!("noise amplitude {} must be finite and ≥ 0", self.amplitude)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(match self.kind {
            NoiseKind::None => vec![0.0; n],
            NoiseKind::Gaussian => {
                let d = Normal::new(0.0, self.amplitude).map_err(|e| CliError::Config(e.to_string()))?;
                d.sample_iter(&mut rng).take(n).collect()
            }
            NoiseKind::Uniform if self.amplitude == 0.0 => vec![0.0; n],
            NoiseKind::Uniform => {
                let d = Uniform::new(-self.amplitude, self.amplitude).map_err(|e| CliError::Config(e.to_string()))?;
                d.sample_iter(&mut rng).take(n).collect()
            }
            NoiseKind::CustomVector => {
                if self.values.len() != n {
                    return Err(CliError::Config(format!(
                        "custom noise has {} entries, schedule has {n}",
                        self.values.len()
                    )));
                }
                self.values.clone()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: NoiseKind, amplitude: f64, seed: u64) -> NoiseSpec {
        NoiseSpec { kind, amplitude, seed, values: Vec::new() }
    }

    #[test]
    fn seeded_noise_repeats() {
        let a = spec(NoiseKind::Gaussian, 0.3, 9).generate(50).unwrap();
        assert_eq!(a, spec(NoiseKind::Gaussian, 0.3, 9).generate(50).unwrap());
        assert_ne!(a, spec(NoiseKind::Gaussian, 0.3, 10).generate(50).unwrap());
    }

    #[test]
    fn uniform_stays_within_amplitude() {
        let v = spec(NoiseKind::Uniform, 0.5, 1).generate(1000).unwrap();
        assert!(v.iter().all(|x| (-0.5..0.5).contains(x)));
        let mean = v.iter().sum::<f64>() / 1000.0;
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn gaussian_sample_moments() {
        let v = spec(NoiseKind::Gaussian, 2.0, 3).generate(20000).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        assert!(mean.abs() < 0.05, "{mean}");
        assert!((var.sqrt() - 2.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(spec(NoiseKind::Gaussian, -1.0, 0).generate(3).is_err());
        assert!(spec(NoiseKind::Uniform, f64::NAN, 0).generate(3).is_err());
        let custom = NoiseSpec { kind: NoiseKind::CustomVector, values: vec![0.1, 0.2], ..Default::default() };
        assert!(custom.generate(3).is_err());
        assert_eq!(custom.generate(2).unwrap(), vec![0.1, 0.2]);
        assert_eq!(spec(NoiseKind::None, 0.0, 0).generate(2).unwrap(), vec![0.0, 0.0]);
    }
}
