//! Problem instances `y_m = f_m(x⋆) + ξ_m` and their JSON form.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::models::ModelKind;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub base_seed: u64,
    pub stream_index: u64,
    pub algorithm: String,
}

impl From<RngStream> for SeedInfo {
    fn from(s: RngStream) -> Self {
        Self {
            base_seed: s.base_seed,
            stream_index: s.stream_index,
            algorithm: crate::rng::ALGORITHM.to_string(),
        }
    }
}

/// Additive noise law for ξ_m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum NoiseSpec {
    #[default]
    None,
    /// Uniform on `[-beta, beta]`.
    Uniform { beta: f64 },
    /// Centered Gaussian with standard deviation `sigma`.
    Gaussian { sigma: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::Uniform { beta: s } | NoiseSpec::Gaussian { sigma: s } => {
                if s >= 0.0 && s.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Usage(format!("noise level must be finite and >= 0, got {s}")))
                }
            }
        }
    }

    pub fn level(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Uniform { beta } => beta,
            NoiseSpec::Gaussian { sigma } => sigma,
        }
    }

    /// Same law at a different level.
    pub fn with_level(&self, level: f64) -> Self {
        match self {
            NoiseSpec::None => NoiseSpec::None,
            NoiseSpec::Uniform { .. } => NoiseSpec::Uniform { beta: level },
            NoiseSpec::Gaussian { .. } => NoiseSpec::Gaussian { sigma: level },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<f64> {
        match *self {
            NoiseSpec::None => vec![0.0; m],
            NoiseSpec::Uniform { beta } if beta > 0.0 => {
                let law = Uniform::new_inclusive(-beta, beta).expect("beta > 0");
                (0..m).map(|_| law.sample(rng)).collect()
            }
            NoiseSpec::Gaussian { sigma } if sigma > 0.0 => {
                let law = Normal::new(0.0, sigma).expect("sigma > 0");
                (0..m).map(|_| law.sample(rng)).collect()
            }
            _ => vec![0.0; m],
        }
    }

    /// E(−ξ)₊, the population value of R⁺_M(x⋆).
    pub fn expected_negative_part(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Uniform { beta } => beta / 4.0,
            NoiseSpec::Gaussian { sigma } => sigma / (2.0 * PI).sqrt(),
        }
    }

    /// E|ξ|.
    pub fn expected_abs(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Uniform { beta } => beta / 2.0,
            NoiseSpec::Gaussian { sigma } => sigma * (2.0 / PI).sqrt(),
        }
    }
}

/// A system of `m` observed convex equations in `n` unknowns.
///
/// `data` holds the `a_m` row-major; each row has `model.data_dim(n)` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub model: ModelKind,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<SeedInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    pub data: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<f64>>,
}

impl ProblemInstance {
    /// Builds a deploy-mode instance (no ground truth) from rows and observations.
    pub fn from_rows(model: ModelKind, n: usize, rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let inst = ProblemInstance {
            model,
            n,
            m: rows.len(),
            seed: None,
            x_star: None,
            data: rows.concat(),
            y,
            noise: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn data_dim(&self) -> usize {
        self.data.len() / self.m.max(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.data_dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.data_dim().max(1))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.m == 0 || self.n == 0 {
            return Err(Error::Usage("instance needs n >= 1 and m >= 1".into()));
        }
        let d = self.model.data_dim(self.n)?;
        check_dim(self.m * d, self.data.len())?;
        check_dim(self.m, self.y.len())?;
        if let Some(x) = &self.x_star {
            check_dim(self.n, x.len())?;
        }
        if let Some(xi) = &self.noise {
            check_dim(self.m, xi.len())?;
        }
        if !crate::linalg::all_finite(&self.data) || !crate::linalg::all_finite(&self.y) {
            return Err(Error::Usage("instance contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        check_dim(self.n, x.len())
    }

    /// `f_m(x)` for every equation.
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        self.rows().map(|a| self.model.eval(a, x)).collect()
    }

    /// Recomputes `f_m(x⋆) + ξ_m` from the stored ground truth and noise.
    pub fn reconstruct_y(&self) -> Option<Vec<f64>> {
        let x = self.x_star.as_ref()?;
        let zeros;
        let xi = match &self.noise {
            Some(xi) => xi,
            None => {
                zeros = vec![0.0; self.m];
                &zeros
            }
        };
        Some(
            self.rows()
                .zip(xi)
                .map(|(a, e)| self.model.eval(a, x) + e)
                .collect(),
        )
    }

    /// Copy with observations (and noise) multiplied by `s`.
    pub fn with_scaled_observations(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.y.iter_mut().for_each(|v| *v *= s);
        if let Some(xi) = out.noise.as_mut() {
            xi.iter_mut().for_each(|v| *v *= s);
        }
        out
    }

    pub fn without_ground_truth(&self) -> Self {
        let mut out = self.clone();
        out.x_star = None;
        out.noise = None;
        out
    }

    pub fn mean_abs_noise(&self) -> f64 {
        self.noise
            .as_ref()
            .map(|xi| xi.iter().map(|v| v.abs()).sum::<f64>() / self.m as f64)
            .unwrap_or(0.0)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let inst: ProblemInstance = serde_json::from_str(&text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
