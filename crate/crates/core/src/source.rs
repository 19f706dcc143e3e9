//! Correlated Gaussian source `(Xⁿ, Yⁿ, Zⁿ)`.
//!
//! Each coordinate is an i.i.d. draw of a zero-mean Gaussian triple. Alice
//! observes `X`, Bob `Y` and the eavesdropper `Z`, with
//!
//! ```text
//! X = ρ_xy (σx/σy) Y + W₁,   Var W₁ = σ₁² = σx² (1 − ρ_xy²)
//! X = ρ_xz (σx/σz) Z + W₂,   Var W₂ = σ₂² = σx² (1 − ρ_xz²)
//! ```
//!
//! The default joint law is the Markov chain `Y - X - Z` (draw `X`, then `Y`
//! and `Z` conditionally on it), which satisfies both decompositions and is
//! valid for every pair of correlations. An explicit mode accepts any PSD
//! covariance of `(X, Y, Z)` and samples through its matrix square root.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    #[default]
    Markov,
    Explicit,
}

/// The `source` block of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default)]
    pub sigma_x: Option<f64>,
    #[serde(default)]
    pub sigma_y: Option<f64>,
    #[serde(default)]
    pub sigma_z: Option<f64>,
    #[serde(default)]
    pub rho_xy: Option<f64>,
    #[serde(default)]
    pub rho_xz: Option<f64>,
    #[serde(default)]
    pub mode: SourceMode,
    /// Covariance of `(X, Y, Z)`, required in explicit mode.
    #[serde(default)]
    pub cov: Option<[[f64; 3]; 3]>,
}

/// Validated source parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub rho_xy: f64,
    pub rho_xz: f64,
    pub rho_yz: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub mode: SourceMode,
    #[serde(skip)]
    sqrt_cov: Matrix3<f64>,
}

/// Single-letter mutual informations of the source, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradednessReport {
    pub degraded: bool,
    pub mi_xy: f64,
    pub mi_xz: f64,
    /// `I(X;Y) − I(X;Z)`.
    pub upper_bound: f64,
}

/// One draw of `(Xⁿ, Yⁿ, Zⁿ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

fn check_sigma(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

fn check_rho(name: &str, v: f64) -> Result<()> {
    if !(v > -1.0 && v < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must lie in (-1, 1), got {v}"
        )));
    }
    Ok(())
}

impl SourceParams {
    /// Markov `Y - X - Z` source; `ρ_yz = ρ_xy ρ_xz`.
    pub fn markov(
        sigma_x: f64,
        sigma_y: f64,
        sigma_z: f64,
        rho_xy: f64,
        rho_xz: f64,
    ) -> Result<Self> {
        check_sigma("sigma_x", sigma_x)?;
        check_sigma("sigma_y", sigma_y)?;
        check_sigma("sigma_z", sigma_z)?;
        check_rho("rho_xy", rho_xy)?;
        check_rho("rho_xz", rho_xz)?;
        // Lower-triangular factor of the covariance for the draw order X, Y|X, Z|X.
        let sqrt_cov = Matrix3::new(
            sigma_x,
            0.0,
            0.0,
            rho_xy * sigma_y,
            sigma_y * (1.0 - rho_xy * rho_xy).sqrt(),
            0.0,
            rho_xz * sigma_z,
            0.0,
            sigma_z * (1.0 - rho_xz * rho_xz).sqrt(),
        );
        Ok(Self::assemble(
            sigma_x,
            sigma_y,
            sigma_z,
            rho_xy,
            rho_xz,
            rho_xy * rho_xz,
            SourceMode::Markov,
            sqrt_cov,
        ))
    }

    /// Source with an explicit covariance of `(X, Y, Z)`.
    pub fn explicit(cov: [[f64; 3]; 3]) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| cov[i][j]);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "covariance has non-finite entries".into(),
            ));
        }
        let scale = m.diagonal().abs().max().max(f64::MIN_POSITIVE);
        if (m - m.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::NonPsdCovariance);
        }
        let eig = SymmetricEigen::new(m);
        if eig.eigenvalues.min() < -1e-12 * scale {
            return Err(Error::NonPsdCovariance);
        }
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let sqrt_cov =
            eig.eigenvectors * Matrix3::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
        let (sx, sy, sz) = (m[(0, 0)].sqrt(), m[(1, 1)].sqrt(), m[(2, 2)].sqrt());
        check_sigma("sigma_x", sx)?;
        check_sigma("sigma_y", sy)?;
        check_sigma("sigma_z", sz)?;
        let rho_xy = m[(0, 1)] / (sx * sy);
        let rho_xz = m[(0, 2)] / (sx * sz);
        let rho_yz = m[(1, 2)] / (sy * sz);
        check_rho("rho_xy", rho_xy)?;
        check_rho("rho_xz", rho_xz)?;
        Ok(Self::assemble(
            sx,
            sy,
            sz,
            rho_xy,
            rho_xz,
            rho_yz,
            SourceMode::Explicit,
            sqrt_cov,
        ))
    }

    /// The additive eavesdropper model `X = Z + W` with independent
    /// `Z ~ N(0, σz²)`, `W ~ N(0, σw²)`, so that `σ₂ = σw` and the regression
    /// coefficient of `X` on `Z` is 1. Bob's side is Markov with `ρ_xy`.
    pub fn additive(sigma_z: f64, sigma_w: f64, sigma_y: f64, rho_xy: f64) -> Result<Self> {
        check_sigma("sigma_z", sigma_z)?;
        check_sigma("sigma_w", sigma_w)?;
        let sigma_x = sigma_z.hypot(sigma_w);
        Self::markov(sigma_x, sigma_y, sigma_z, rho_xy, sigma_z / sigma_x)
    }

    pub fn from_config(cfg: &SourceConfig) -> Result<Self> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("source.{name} is required in markov mode")))
        };
        match cfg.mode {
            SourceMode::Markov => {
                if cfg.cov.is_some() {
                    return Err(Error::Config(
                        "source.cov is only allowed in explicit mode".into(),
                    ));
                }
                Self::markov(
                    need(cfg.sigma_x, "sigma_x")?,
                    need(cfg.sigma_y, "sigma_y")?,
                    need(cfg.sigma_z, "sigma_z")?,
                    need(cfg.rho_xy, "rho_xy")?,
                    need(cfg.rho_xz, "rho_xz")?,
                )
            }
            SourceMode::Explicit => {
                let cov = cfg.cov.ok_or_else(|| {
                    Error::Config("source.cov is required in explicit mode".into())
                })?;
                let p = Self::explicit(cov)?;
                let given = [
                    ("sigma_x", cfg.sigma_x, p.sigma_x),
                    ("sigma_y", cfg.sigma_y, p.sigma_y),
                    ("sigma_z", cfg.sigma_z, p.sigma_z),
                    ("rho_xy", cfg.rho_xy, p.rho_xy),
                    ("rho_xz", cfg.rho_xz, p.rho_xz),
                ];
                for (name, v, derived) in given {
                    if let Some(v) = v {
                        if (v - derived).abs() > 1e-9 * derived.abs().max(1.0) {
                            return Err(Error::Config(format!(
                                "source.{name} = {v} disagrees with cov ({derived})"
                            )));
                        }
                    }
                }
                Ok(p)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        sigma_x: f64,
        sigma_y: f64,
        sigma_z: f64,
        rho_xy: f64,
        rho_xz: f64,
        rho_yz: f64,
        mode: SourceMode,
        sqrt_cov: Matrix3<f64>,
    ) -> Self {
        Self {
            sigma_x,
            sigma_y,
            sigma_z,
            rho_xy,
            rho_xz,
            rho_yz,
            sigma1: sigma_x * (1.0 - rho_xy * rho_xy).sqrt(),
            sigma2: sigma_x * (1.0 - rho_xz * rho_xz).sqrt(),
            mode,
            sqrt_cov,
        }
    }

    /// `ρ_xy σx / σy`, Bob's scaling of `Y` towards `X`.
    pub fn bob_coefficient(&self) -> f64 {
        self.rho_xy * self.sigma_x / self.sigma_y
    }

    /// `ρ_xz σx / σz`, the eavesdropper's regression coefficient.
    pub fn eve_coefficient(&self) -> f64 {
        self.rho_xz * self.sigma_x / self.sigma_z
    }

    /// Bob's effective channel is better than the eavesdropper's (`σ₁ < σ₂`).
    pub fn is_degraded(&self) -> bool {
        self.sigma1 < self.sigma2
    }

    /// Covariance of `(X, Y, Z)`.
    pub fn covariance(&self) -> Matrix3<f64> {
        self.sqrt_cov * self.sqrt_cov.transpose()
    }

    pub fn degradedness_report(&self) -> DegradednessReport {
        let mi_xy = -0.5 * (-self.rho_xy * self.rho_xy).ln_1p();
        let mi_xz = -0.5 * (-self.rho_xz * self.rho_xz).ln_1p();
        DegradednessReport {
            degraded: self.is_degraded(),
            mi_xy,
            mi_xz,
            upper_bound: mi_xy - mi_xz,
        }
    }

    /// One draw of the triple in dimension `n`.
    pub fn sample_xyz<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SourceSample {
        let mut out = SourceSample {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let g = Vector3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let v = self.sqrt_cov * g;
            out.x.push(v[0]);
            out.y.push(v[1]);
            out.z.push(v[2]);
        }
        out
    }
}
