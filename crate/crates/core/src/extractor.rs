//! Lattice-hashing randomness extractor: `X̄ⁿ = Xⁿ mod R(Λ)`.
//!
//! Given `Zⁿ = z`, the reduced source has the exact density
//! `f_{σ₂,Λ}(x̄ − a z)` on `R(Λ)` with `a = ρ_xz σx/σz`, and its marginal is
//! `f_{σx,Λ}(x̄)`. Both are lattice sums, so the mutual information
//! `I(X̄ⁿ; Zⁿ)` can be estimated by averaging the exact log density ratio
//! over joint samples, with no discretization bias.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{FundamentalRegion, LatticeBasis};
use crate::rng::{derive_seed, par_map_indexed, substream};
use crate::source::SourceParams;
use crate::stats::{total_variation, Estimate};
use crate::theta::{flatness_factor, periodic_gaussian};

/// Number of bootstrap replicates behind the TV standard error.
pub const BOOTSTRAP_REPLICATES: usize = 200;

fn check_in_region(lattice: &LatticeBasis, xbar: &[f64], region: FundamentalRegion) -> Result<()> {
    if xbar.len() != lattice.n() {
        return Err(Error::DimensionMismatch {
            expected: lattice.n(),
            got: xbar.len(),
        });
    }
    if !lattice.in_region(xbar, region)? {
        return Err(Error::OutsideRegion);
    }
    Ok(())
}

fn log_conditional(
    lattice: &LatticeBasis,
    params: &SourceParams,
    xbar: &[f64],
    z: &[f64],
) -> Result<f64> {
    let a = params.eve_coefficient();
    let shifted: Vec<f64> = xbar.iter().zip(z).map(|(x, z)| x - a * z).collect();
    Ok(periodic_gaussian(lattice, params.sigma2, &shifted)?.log_density)
}

fn log_marginal(lattice: &LatticeBasis, params: &SourceParams, xbar: &[f64]) -> Result<f64> {
    Ok(periodic_gaussian(lattice, params.sigma_x, xbar)?.log_density)
}

/// `p(x̄ | z) = f_{σ₂,Λ}(x̄ − ρ_xz (σx/σz) z)` for `x̄ ∈ R(Λ)`.
pub fn conditional_density(
    xbar: &[f64],
    z: &[f64],
    lattice: &LatticeBasis,
    params: &SourceParams,
    region: FundamentalRegion,
) -> Result<f64> {
    check_in_region(lattice, xbar, region)?;
    if z.len() != lattice.n() {
        return Err(Error::DimensionMismatch {
            expected: lattice.n(),
            got: z.len(),
        });
    }
    Ok(log_conditional(lattice, params, xbar, z)?.exp())
}

/// `p(x̄) = f_{σx,Λ}(x̄)` for `x̄ ∈ R(Λ)`.
pub fn marginal_density(
    xbar: &[f64],
    lattice: &LatticeBasis,
    params: &SourceParams,
    region: FundamentalRegion,
) -> Result<f64> {
    check_in_region(lattice, xbar, region)?;
    Ok(log_marginal(lattice, params, xbar)?.exp())
}

/// Monte-Carlo estimate of `I(X̄ⁿ; Zⁿ)` in nats from the exact density ratio.
pub fn mi_estimate(
    lattice: &LatticeBasis,
    params: &SourceParams,
    samples: u64,
    seed: u64,
) -> Result<Estimate> {
    if samples < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "mutual information needs >= 10^4 samples, got {samples}"
        )));
    }
    let n = lattice.n();
    let terms = par_map_indexed(seed, samples, |_, rng| -> Result<f64> {
        let s = params.sample_xyz(n, rng);
        let xbar = lattice.mod_region(&s.x, FundamentalRegion::Parallelepiped)?;
        Ok(log_conditional(lattice, params, &xbar, &s.z)? - log_marginal(lattice, params, &xbar)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&terms))
}

/// Histogram cell of `x̄` on a `bins`-per-axis grid over the parallelepiped
/// in basis coordinates.
fn cell_of(lattice: &LatticeBasis, xbar: &[f64], bins: usize) -> Result<usize> {
    let u = lattice.coordinates(xbar)?;
    Ok(u.iter().rev().fold(0usize, |acc, &c| {
        let b = ((c * bins as f64).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        acc * bins + b
    }))
}

/// Total-variation distance of the histogram of `p̂` from `q`, with a
/// multinomial bootstrap standard error.
pub(crate) fn tv_with_bootstrap(counts: &[u64], target: &[f64], seed: u64) -> Estimate {
    let total: u64 = counts.iter().sum();
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let tv = total_variation(&p, target);
    let replicates: Vec<f64> = (0..BOOTSTRAP_REPLICATES as u64)
        .map(|r| {
            let mut rng = substream(seed, r);
            let resampled = multinomial(&mut rng, total, &p);
            let ps: Vec<f64> = resampled.iter().map(|&c| c as f64 / total as f64).collect();
            total_variation(&ps, target)
        })
        .collect();
    let spread = Estimate::from_samples(&replicates).stderr * (replicates.len() as f64).sqrt();
    Estimate {
        value: tv,
        stderr: spread,
    }
}

/// Multinomial draw by successive conditional binomials.
fn multinomial<R: Rng + ?Sized>(rng: &mut R, total: u64, p: &[f64]) -> Vec<u64> {
    let mut remaining = total;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(p.len());
    for (i, &pi) in p.iter().enumerate() {
        if i + 1 == p.len() || remaining == 0 {
            out.push(if i + 1 == p.len() { remaining } else { 0 });
            if remaining == 0 {
                out.resize(p.len(), 0);
                break;
            }
            continue;
        }
        let q = if mass > 0.0 {
            (pi / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let c = Binomial::new(remaining, q)
            .map(|d| d.sample(rng))
            .unwrap_or(0);
        out.push(c);
        remaining -= c;
        mass -= pi;
    }
    out
}

/// Binned total-variation distance of `X̄ⁿ` from uniform on the
/// parallelepiped (`n ≤ 2`, at least 16 bins per axis).
pub fn uniformity_tv(
    lattice: &LatticeBasis,
    params: &SourceParams,
    samples: u64,
    bins: usize,
    seed: u64,
) -> Result<Estimate> {
    let n = lattice.n();
    if n > 2 {
        return Err(Error::InvalidParameter(format!(
            "binned uniformity supports n <= 2, got {n}"
        )));
    }
    if bins < 16 {
        return Err(Error::InvalidParameter(format!(
            "need >= 16 bins per dimension, got {bins}"
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    let cells = bins.pow(n as u32);
    let idx = par_map_indexed(seed, samples, |_, rng| -> Result<usize> {
        let s = params.sample_xyz(n, rng);
        let xbar = lattice.mod_region(&s.x, FundamentalRegion::Parallelepiped)?;
        cell_of(lattice, &xbar, bins)
    });
    let mut counts = vec![0u64; cells];
    for i in idx {
        counts[i?] += 1;
    }
    let uniform = vec![1.0 / cells as f64; cells];
    Ok(tv_with_bootstrap(
        &counts,
        &uniform,
        derive_seed(seed, "uniformity-bootstrap"),
    ))
}

/// Uniformity and independence summary for one lattice and source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorReport {
    pub epsilon_sigma2: f64,
    pub epsilon_sigma_x: f64,
    pub mi_estimate: Estimate,
    /// `ln(1 + ε(σ₂)) − ln(1 − ε(σx))`; `None` when `ε(σx) > ½`.
    pub mi_bound: Option<f64>,
    /// `ε(σ₂) + 2 ε(σx)`.
    pub mi_bound_linear: f64,
    /// `3 ε(σ₂)`.
    pub mi_bound_relaxed: f64,
    /// Set when `ε(σx) > ½`, where the logarithmic bound does not apply.
    pub mi_bound_vacuous: bool,
    pub tv_to_uniform: Option<Estimate>,
    /// `(ln V − ln(1 + ε(σx))) / n`, nats per dimension.
    pub entropy_rate_lower_bound: f64,
}

/// Options for [`extractor_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractorOptions {
    pub mi_samples: u64,
    pub tv_samples: u64,
    pub tv_bins: usize,
    pub seed: u64,
}

impl Default for ExtractorOptions {
    fn default() -> Self {
        Self {
            mi_samples: 100_000,
            tv_samples: 1_000_000,
            tv_bins: 16,
            seed: 0,
        }
    }
}

pub fn entropy_rate_lower_bound(lattice: &LatticeBasis, epsilon_sigma_x: f64) -> f64 {
    (lattice.volume().ln() - epsilon_sigma_x.ln_1p()) / lattice.n() as f64
}

pub fn extractor_report(
    lattice: &LatticeBasis,
    params: &SourceParams,
    opts: &ExtractorOptions,
) -> Result<ExtractorReport> {
    let e2 = flatness_factor(lattice, params.sigma2)?.epsilon;
    let ex = flatness_factor(lattice, params.sigma_x)?.epsilon;
    let mi = mi_estimate(
        lattice,
        params,
        opts.mi_samples,
        derive_seed(opts.seed, "mi"),
    )?;
    let vacuous = ex > 0.5;
    let tv = if lattice.n() <= 2 && opts.tv_samples > 0 {
        Some(uniformity_tv(
            lattice,
            params,
            opts.tv_samples,
            opts.tv_bins,
            derive_seed(opts.seed, "tv"),
        )?)
    } else {
        None
    };
    Ok(ExtractorReport {
        epsilon_sigma2: e2,
        epsilon_sigma_x: ex,
        mi_estimate: mi,
        mi_bound: (!vacuous).then(|| e2.ln_1p() - (-ex).ln_1p()),
        mi_bound_linear: e2 + 2.0 * ex,
        mi_bound_relaxed: 3.0 * e2,
        mi_bound_vacuous: vacuous,
        tv_to_uniform: tv,
        entropy_rate_lower_bound: entropy_rate_lower_bound(lattice, ex),
    })
}
