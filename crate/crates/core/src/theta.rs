//! Theta series and the flatness factor.
//!
//! With `Θ_Λ(τ) = Σ_λ exp(−π τ ‖λ‖²)`, the flatness factor of `Λ` at
//! Gaussian width `σ` is
//!
//! ```text
//! ε_Λ(σ) = V / (2πσ²)^{n/2} · Θ_Λ(1/(2πσ²)) − 1
//! ```
//!
//! i.e. `V f_{σ,Λ}(0) − 1`, where `f_{σ,Λ}` is the `Λ`-periodized Gaussian
//! density. Three independent evaluations are provided: the theta-series
//! identity, a brute grid maximum of `|V f_{σ,Λ} − 1|` over the fundamental
//! parallelepiped, and the Poisson-dual sum `Θ_{Λ*}(2πσ²) − 1`. Every lattice
//! sum is truncated at a radius whose remainder is certified by a
//! point-count bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::enumerate::{gaussian_sum, DEFAULT_BUDGET};
use crate::lattice::LatticeBasis;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Relative truncation target for every lattice sum in this module.
pub const REL_TAIL_TARGET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlatnessMethod {
    ThetaIdentity,
    DirectGrid,
    DualPoisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessResult {
    pub epsilon: f64,
    pub sigma: f64,
    /// `V^{2/n} / σ²`.
    pub vnr: f64,
    pub truncation_radius: f64,
    /// Certified bound on the truncation error of `epsilon`.
    pub tail_bound: f64,
    pub method: FlatnessMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaValue {
    pub value: f64,
    pub tail_bound: f64,
    pub truncation_radius: f64,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// `Θ_Λ(τ)` truncated so that the certified remainder is at most `target_tail`.
pub fn theta_series(lattice: &LatticeBasis, tau: f64, target_tail: f64) -> Result<ThetaValue> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    if !(target_tail > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target tail must be positive, got {target_tail}"
        )));
    }
    let origin = vec![0.0; lattice.n()];
    let mut g = gaussian_sum(lattice, &origin, tau, target_tail, DEFAULT_BUDGET)?;
    let mut value = g.log_value.exp();
    if value * g.rel_tail > target_tail {
        // Θ ≥ 1; tighten the relative target now that the magnitude is known.
        g = gaussian_sum(lattice, &origin, tau, target_tail / value, DEFAULT_BUDGET)?;
        value = g.log_value.exp();
    }
    Ok(ThetaValue {
        value,
        tail_bound: value * g.rel_tail,
        truncation_radius: g.radius,
    })
}

/// Flatness factor from the theta-series identity.
pub fn flatness_factor(lattice: &LatticeBasis, sigma: f64) -> Result<FlatnessResult> {
    check_sigma(sigma)?;
    let n = lattice.n() as f64;
    let tau = 1.0 / (TWO_PI * sigma * sigma);
    let origin = vec![0.0; lattice.n()];
    let g = gaussian_sum(lattice, &origin, tau, REL_TAIL_TARGET, DEFAULT_BUDGET)?;
    let log_peak = lattice.volume().ln() - 0.5 * n * (TWO_PI * sigma * sigma).ln() + g.log_value;
    Ok(FlatnessResult {
        // ε is a supremum of |·| and is never negative; only rounding noise
        // of order 1e-16 is removed here.
        epsilon: log_peak.exp_m1().max(0.0),
        sigma,
        vnr: lattice.vnr(sigma),
        truncation_radius: g.radius,
        tail_bound: log_peak.exp() * g.rel_tail,
        method: FlatnessMethod::ThetaIdentity,
    })
}

/// Flatness factor from the dual lattice, `Θ_{Λ*}(2πσ²) − 1`.
pub fn flatness_dual(lattice: &LatticeBasis, sigma: f64) -> Result<FlatnessResult> {
    check_sigma(sigma)?;
    let dual = lattice.dual()?;
    let tau = TWO_PI * sigma * sigma;
    let origin = vec![0.0; lattice.n()];
    // ε is the off-origin part of the dual sum and can be far below 1, so
    // the truncation target is tightened until it is small relative to ε.
    let mut target = REL_TAIL_TARGET;
    let mut g = gaussian_sum(&dual, &origin, tau, target, DEFAULT_BUDGET)?;
    while g.log_value.exp() * g.rel_tail > REL_TAIL_TARGET * g.excess && target > 1e-290 {
        target = if g.excess > 0.0 {
            (REL_TAIL_TARGET * g.excess).min(target * 1e-3)
        } else {
            target * 1e-20
        };
        g = gaussian_sum(&dual, &origin, tau, target.max(1e-300), DEFAULT_BUDGET)?;
    }
    Ok(FlatnessResult {
        epsilon: g.excess,
        sigma,
        vnr: lattice.vnr(sigma),
        truncation_radius: g.radius,
        tail_bound: g.log_value.exp() * g.rel_tail,
        method: FlatnessMethod::DualPoisson,
    })
}

/// Value of the `Λ`-periodic Gaussian `f_{σ,Λ}(x)` in log form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGaussian {
    pub log_density: f64,
    /// Certified relative truncation error of the density.
    pub rel_tail: f64,
    pub truncation_radius: f64,
}

/// `f_{σ,Λ}(x) = (2πσ²)^{-n/2} Σ_λ exp(−‖x + λ‖² / (2σ²))`.
pub fn periodic_gaussian(
    lattice: &LatticeBasis,
    sigma: f64,
    x: &[f64],
) -> Result<PeriodicGaussian> {
    check_sigma(sigma)?;
    if x.len() != lattice.n() {
        return Err(Error::DimensionMismatch {
            expected: lattice.n(),
            got: x.len(),
        });
    }
    let n = lattice.n() as f64;
    let center: Vec<f64> = x.iter().map(|v| -v).collect();
    let tau = 1.0 / (TWO_PI * sigma * sigma);
    let g = gaussian_sum(lattice, &center, tau, REL_TAIL_TARGET, DEFAULT_BUDGET)?;
    Ok(PeriodicGaussian {
        log_density: g.log_value - 0.5 * n * (TWO_PI * sigma * sigma).ln(),
        rel_tail: g.rel_tail,
        truncation_radius: g.radius,
    })
}

/// Grid maximum of `|V f_{σ,Λ}(x) − 1|` and where it was attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFlatness {
    pub result: FlatnessResult,
    pub argmax: Vec<f64>,
}

/// Flatness factor straight from its definition: the maximum of
/// `|V f_{σ,Λ}(x) − 1|` over a regular grid on the fundamental
/// parallelepiped (grid points `B·(j/G)`, which include the origin).
pub fn flatness_direct(
    lattice: &LatticeBasis,
    sigma: f64,
    grid_points_per_dim: usize,
) -> Result<GridFlatness> {
    check_sigma(sigma)?;
    let n = lattice.n();
    if n > 2 {
        return Err(Error::InvalidParameter(format!(
            "grid oracle supports n <= 2, got {n}"
        )));
    }
    if grid_points_per_dim < 64 {
        return Err(Error::InvalidParameter(format!(
            "grid needs >= 64 points per dimension, got {grid_points_per_dim}"
        )));
    }
    let g = grid_points_per_dim;
    let log_v = lattice.volume().ln();
    let mut best = -1.0;
    let mut argmax = vec![0.0; n];
    let mut worst_tail: f64 = 0.0;
    let mut radius: f64 = 0.0;
    for idx in 0..g.pow(n as u32) {
        let coords: Vec<f64> = (0..n)
            .map(|i| ((idx / g.pow(i as u32)) % g) as f64 / g as f64)
            .collect();
        let x = lattice.basis() * nalgebra::DVector::from_vec(coords);
        let f = periodic_gaussian(lattice, sigma, x.as_slice())?;
        let ratio = log_v + f.log_density;
        let dev = ratio.exp_m1().abs();
        worst_tail = worst_tail.max(ratio.exp() * f.rel_tail);
        radius = radius.max(f.truncation_radius);
        if dev > best {
            best = dev;
            argmax = x.as_slice().to_vec();
        }
    }
    Ok(GridFlatness {
        result: FlatnessResult {
            epsilon: best,
            sigma,
            vnr: lattice.vnr(sigma),
            truncation_radius: radius,
            tail_bound: worst_tail,
            method: FlatnessMethod::DirectGrid,
        },
        argmax,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub epsilon: f64,
    pub tail_bound: f64,
    pub vnr: f64,
}

/// Flatness factor of each family member, scaled to the given VNR at `σ`.
pub fn secrecy_sweep(
    family: &str,
    sigma: f64,
    n_list: &[usize],
    vnr: f64,
) -> Result<Vec<SweepRow>> {
    check_sigma(sigma)?;
    if !(vnr > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "vnr must be positive, got {vnr}"
        )));
    }
    n_list
        .iter()
        .map(|&n| {
            let lattice = LatticeBasis::family_member(family, n)?.with_vnr(sigma, vnr)?;
            let r = flatness_factor(&lattice, sigma)?;
            Ok(SweepRow {
                n,
                epsilon: r.epsilon,
                tail_bound: r.tail_bound,
                vnr: r.vnr,
            })
        })
        .collect()
}
