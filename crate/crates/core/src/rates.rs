//! Closed-form key and public rates of the nested-chain protocol, and a
//! calibration search that picks a chain for a given source.
//!
//! With `v_i = V_i^{2/n}`, `G` the normalized second moment of `Λ₁`, and the
//! effective reconciliation noise power `G v₁ + σ₁²`:
//!
//! ```text
//! reliability:  v₂ / (G v₁ + σ₁²) > 2πe
//! secrecy:      v₃ / σ₂² < 2π
//! R_K bound:    ½ ln(σ₂² / (G v₁ + σ₁²)) − ½
//! R_P bound:    ½ ln(2πe G + 2πe σ₁² / v₁)
//! ```
//!
//! For `G = 1/(2πe)` the public-rate bound is `½ ln(1 + 2πe σ₁²/v₁)`, and as
//! `v₁ → 0` the key-rate bound sits half a nat below `I(X;Y) − I(X;Z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{second_moment_estimate, LatticeBasis, NestedChain};
use crate::source::SourceParams;
use crate::theta::flatness_factor;

const TWO_PI_E: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::E;

/// Normalized second moment of a sphere in the high-dimensional limit.
pub const G_IDEAL: f64 = 1.0 / TWO_PI_E;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `(1/n) ln(V₃/V₂)`, nats per dimension.
    pub r_k: f64,
    /// `(1/n) ln(V₂/V₁)`.
    pub r_p: f64,
    pub r_k_bound: f64,
    pub r_p_bound: f64,
    /// `½ ln(σ₂²/σ₁²) − ½`, the key-rate bound for a vanishing `Λ₁`.
    pub quasi_optimal: f64,
    /// `I(X;Y) − I(X;Z)`.
    pub upper_bound: f64,
    /// `upper_bound − r_k_bound`.
    pub gap: f64,
    pub awgn_condition: bool,
    /// `v₂ / ((G v₁ + σ₁²) 2πe)`; above 1 when the reliability condition holds.
    pub awgn_margin: f64,
    pub secrecy_condition: bool,
    /// `v₃ / (2π σ₂²)`; below 1 when the secrecy condition holds.
    pub secrecy_margin: f64,
    pub g_of_lambda1: f64,
    pub degraded: bool,
}

/// Rate bounds as functions of `v₁ = V₁^{2/n}` alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub v1_root: f64,
    pub r_k_bound: f64,
    pub r_p_bound: f64,
    pub gap: f64,
}

pub fn rate_bounds(v1_root: f64, params: &SourceParams, g: f64) -> RateBounds {
    let s1 = params.sigma1 * params.sigma1;
    let s2 = params.sigma2 * params.sigma2;
    let r_k_bound = 0.5 * (s2 / (g * v1_root + s1)).ln() - 0.5;
    let r_p_bound = 0.5 * (TWO_PI_E * g + TWO_PI_E * s1 / v1_root).ln();
    RateBounds {
        v1_root,
        r_k_bound,
        r_p_bound,
        gap: params.degradedness_report().upper_bound - r_k_bound,
    }
}

/// All rate quantities for a chain, with `G(Λ₁) = g` (default [`G_IDEAL`]).
pub fn rate_report(chain: &NestedChain, params: &SourceParams, g: Option<f64>) -> RateReport {
    let g = g.unwrap_or(G_IDEAL);
    let n = chain.n() as f64;
    let (v1, v2, v3) = chain.volumes();
    let root = |v: f64| (2.0 * v.ln() / n).exp();
    let (r1, r2, r3) = (root(v1), root(v2), root(v3));
    let b = rate_bounds(r1, params, g);
    let s1 = params.sigma1 * params.sigma1;
    let s2 = params.sigma2 * params.sigma2;
    let upper = params.degradedness_report().upper_bound;
    let awgn_margin = r2 / ((g * r1 + s1) * TWO_PI_E);
    let secrecy_margin = r3 / (2.0 * std::f64::consts::PI * s2);
    RateReport {
        r_k: (v3 / v2).ln() / n,
        r_p: (v2 / v1).ln() / n,
        r_k_bound: b.r_k_bound,
        r_p_bound: b.r_p_bound,
        quasi_optimal: 0.5 * (s2 / s1).ln() - 0.5,
        upper_bound: upper,
        gap: b.gap,
        awgn_condition: awgn_margin > 1.0,
        awgn_margin,
        secrecy_condition: secrecy_margin < 1.0,
        secrecy_margin,
        g_of_lambda1: g,
        degraded: params.is_degraded(),
    }
}

/// Bounds on a geometric grid of `v₁` values from `v1_max` down to `v1_min`.
pub fn v1_sweep(
    params: &SourceParams,
    g: f64,
    v1_max: f64,
    v1_min: f64,
    points: usize,
) -> Result<Vec<RateBounds>> {
    if !(v1_max > v1_min && v1_min > 0.0) || points < 2 {
        return Err(Error::InvalidParameter(
            "sweep needs 0 < v1_min < v1_max and >= 2 points".into(),
        ));
    }
    let step = (v1_min / v1_max).ln() / (points - 1) as f64;
    Ok((0..points)
        .map(|i| rate_bounds(v1_max * (step * i as f64).exp(), params, g))
        .collect())
}

/// Source of `G(Λ₁)` for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SecondMoment {
    Ideal,
    MonteCarlo { samples: u64, seed: u64 },
    Value { g: f64 },
}

impl Default for SecondMoment {
    fn default() -> Self {
        SecondMoment::MonteCarlo {
            samples: 200_000,
            seed: 0x6d6f6d656e74,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub target_epsilon: f64,
    pub second_moment: SecondMoment,
    pub max_key_cardinality: u64,
    pub max_public_cardinality: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            target_epsilon: 0.1,
            second_moment: SecondMoment::default(),
            max_key_cardinality: 1 << 16,
            max_public_cardinality: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub family: String,
    pub n: usize,
    pub base_scale: f64,
    pub scale2: u32,
    pub scale3: u32,
    pub target_epsilon: f64,
    /// Achieved `ε_{Λ₃}(σ₂)`.
    pub epsilon_coarse_sigma2: f64,
    /// Smallest base scale meeting the reliability condition.
    pub base_scale_min: f64,
    /// Largest base scale meeting the flatness target.
    pub base_scale_max: f64,
    pub g_of_lambda1: f64,
    pub rates: RateReport,
}

/// Smallest `σ` (to bisection precision, rounded up) with `ε_Λ(σ) ≤ target`.
pub fn sigma_for_flatness(lattice: &LatticeBasis, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target epsilon must be positive, got {target}"
        )));
    }
    let eps = |s: f64| flatness_factor(lattice, s).map(|r| r.epsilon);
    let start = (lattice.volume().ln() / lattice.n() as f64).exp();
    let (mut lo, mut hi) = (start, start);
    if eps(start)? > target {
        while eps(hi)? > target {
            lo = hi;
            hi *= 2.0;
        }
    } else {
        while eps(lo)? <= target {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-6 * start {
                return Ok(lo);
            }
        }
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if eps(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Chooses `(base_scale, scale2, scale3)` for `family` in dimension `n`.
///
/// With `Λ₁ = s Λ₀`, the flatness target `ε_{Λ₃}(σ₂) ≤ t` caps `s` at
/// `s_max = σ₂ / (σ_min(t) m₂ m₃)` and the reliability condition needs
/// `s > s_min = sqrt(2πe σ₁² / (v₀ (m₂² − 2πe G)))`. Among feasible pairs the
/// largest `m₃` wins, ties going to the smallest `m₂`; the base scale is set
/// to `s_max`, which maximizes the reliability margin.
pub fn chain_calibrate(
    params: &SourceParams,
    family: &str,
    n: usize,
    opts: &CalibrationOptions,
) -> Result<(NestedChain, Calibration)> {
    if !params.is_degraded() {
        return Err(Error::Infeasible {
            binding: "upperBound <= 0".into(),
        });
    }
    let base = LatticeBasis::family_member(family, n)?;
    let g = match opts.second_moment {
        SecondMoment::Ideal => G_IDEAL,
        SecondMoment::Value { g } => g,
        SecondMoment::MonteCarlo { samples, seed } => {
            second_moment_estimate(&base, samples, seed)?.value
        }
    };
    if !(g > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "second moment must be positive, got {g}"
        )));
    }
    let sigma_min = sigma_for_flatness(&base, opts.target_epsilon)?;
    // Shaved so that rounding in s·m₂·m₃ cannot push ε past the target.
    let c_max = params.sigma2 / sigma_min * (1.0 - 1e-12);
    let v0 = (2.0 * base.volume().ln() / n as f64).exp();
    let s1 = params.sigma1 * params.sigma1;
    let max_scale = |cap: u64| -> u32 {
        // Largest m with m^n <= cap.
        let mut m = 2u32;
        while u64::from(m + 1)
            .checked_pow(n as u32)
            .is_some_and(|c| c <= cap)
        {
            m += 1;
        }
        m
    };
    let (m2_cap, m3_cap) = (
        max_scale(opts.max_public_cardinality),
        max_scale(opts.max_key_cardinality),
    );
    if 2u64
        .checked_pow(n as u32)
        .is_none_or(|c| c > opts.max_key_cardinality.min(opts.max_public_cardinality))
    {
        return Err(Error::Infeasible {
            binding: "cardinality caps exclude scale 2".into(),
        });
    }
    let mut best: Option<(u32, u32, f64)> = None;
    for m2 in 2..=m2_cap {
        let denom = f64::from(m2).powi(2) - TWO_PI_E * g;
        if denom <= 0.0 {
            continue;
        }
        let s_min = (TWO_PI_E * s1 / (v0 * denom)).sqrt();
        // Largest m₃ with s_min < c_max / (m₂ m₃).
        let limit = c_max / (f64::from(m2) * s_min);
        let mut m3 = limit.ceil() - 1.0;
        if m3 >= limit {
            m3 -= 1.0;
        }
        let m3 = m3.min(f64::from(m3_cap));
        if m3 < 2.0 {
            continue;
        }
        let m3 = m3 as u32;
        if best.is_none_or(|(_, b3, _)| m3 > b3) {
            best = Some((m2, m3, s_min));
        }
    }
    let Some((m2, m3, s_min)) = best else {
        return Err(Error::Infeasible {
            binding: "reliability condition vs flatness target at this dimension".into(),
        });
    };
    let s_max = c_max / (f64::from(m2) * f64::from(m3));
    let chain = NestedChain::new(base.scaled(s_max)?, m2, m3)?;
    let eps = flatness_factor(chain.coarse(), params.sigma2)?.epsilon;
    let rates = rate_report(&chain, params, Some(g));
    let cal = Calibration {
        family: chain.fine().name(),
        n,
        base_scale: s_max,
        scale2: m2,
        scale3: m3,
        target_epsilon: opts.target_epsilon,
        epsilon_coarse_sigma2: eps,
        base_scale_min: s_min,
        base_scale_max: s_max,
        g_of_lambda1: g,
        rates,
    };
    Ok((chain, cal))
}
