//! Sphere enumeration over a lattice (Fincke-Pohst listing and
//! Schnorr-Euchner closest-point search), plus certified Gaussian lattice
//! sums built on top of the listing.
//!
//! With `B = QR`, `‖Bz − c‖² = ‖Rz − y‖²` where `y = Qᵀc`, so points are
//! enumerated level by level from the last coordinate down.

use nalgebra::DVector;
use statrs::function::gamma::ln_gamma;

use super::{Family, LatticeBasis};
use crate::error::{Error, Result};

/// Default cap on the number of lattice points visited by one sum.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

struct Levels<'a> {
    r: &'a nalgebra::DMatrix<f64>,
    y: Vec<f64>,
    n: usize,
}

impl Levels<'_> {
    fn center(&self, i: usize, z: &[i64]) -> f64 {
        let tail: f64 = ((i + 1)..self.n)
            .map(|j| self.r[(i, j)] * z[j] as f64)
            .sum();
        (self.y[i] - tail) / self.r[(i, i)]
    }
}

fn levels<'a>(lattice: &'a LatticeBasis, c: &[f64]) -> Levels<'a> {
    let (q, r) = lattice.qr_parts();
    let y = (q.transpose() * DVector::from_column_slice(c))
        .as_slice()
        .to_vec();
    Levels {
        r,
        y,
        n: lattice.n(),
    }
}

/// Successive-interference (Babai nearest-plane) point and its squared distance.
pub(crate) fn babai(lattice: &LatticeBasis, c: &[f64]) -> (Vec<i64>, f64) {
    let lv = levels(lattice, c);
    let n = lv.n;
    let mut z = vec![0i64; n];
    let mut dist = 0.0;
    for i in (0..n).rev() {
        let ci = lv.center(i, &z);
        z[i] = ci.round_ties_even() as i64;
        let d = lv.r[(i, i)] * (z[i] as f64 - ci);
        dist += d * d;
    }
    (z, dist)
}

/// Exact closest lattice point (integer coordinates), Schnorr-Euchner order.
/// The Babai point is the first candidate; later candidates replace it only
/// when strictly closer.
pub(crate) fn closest_coordinates(lattice: &LatticeBasis, x: &[f64]) -> Vec<i64> {
    let lv = levels(lattice, x);
    let (mut best, mut best_d) = babai(lattice, x);
    let mut z = vec![0i64; lv.n];
    search(&lv, lv.n - 1, 0.0, &mut z, &mut best, &mut best_d);
    best
}

fn search(
    lv: &Levels,
    i: usize,
    partial: f64,
    z: &mut [i64],
    best: &mut Vec<i64>,
    best_d: &mut f64,
) {
    let ci = lv.center(i, z);
    let rii = lv.r[(i, i)];
    let z0 = ci.round_ties_even();
    let step = if ci >= z0 { 1.0 } else { -1.0 };
    let mut k = 0u64;
    loop {
        // Offsets 0, +s, -s, +2s, -2s, ... visit candidates by distance.
        let off = if k == 0 {
            0.0
        } else if k % 2 == 1 {
            step * k.div_ceil(2) as f64
        } else {
            -step * (k / 2) as f64
        };
        let zi = z0 + off;
        let d = rii * (zi - ci);
        let p = partial + d * d;
        // Candidate distances are non-decreasing in k. Written to also stop on NaN.
        if !(p < *best_d) {
            break;
        }
        z[i] = zi as i64;
        if i == 0 {
            *best_d = p;
            best.copy_from_slice(z);
        } else {
            search(lv, i - 1, p, z, best, best_d);
        }
        k += 1;
    }
}

/// Calls `visit(dist², z)` for every lattice point `Bz` with
/// `‖Bz − c‖² ≤ radius_sq`. Returns the number of points visited.
pub(crate) fn for_each_within<F: FnMut(f64, &[i64])>(
    lattice: &LatticeBasis,
    c: &[f64],
    radius_sq: f64,
    budget: u64,
    mut visit: F,
) -> Result<u64> {
    let lv = levels(lattice, c);
    let mut z = vec![0i64; lv.n];
    let mut count = 0u64;
    list(
        &lv,
        lv.n - 1,
        0.0,
        radius_sq,
        &mut z,
        &mut count,
        budget,
        &mut visit,
    )?;
    Ok(count)
}

#[allow(clippy::too_many_arguments)]
fn list<F: FnMut(f64, &[i64])>(
    lv: &Levels,
    i: usize,
    partial: f64,
    radius_sq: f64,
    z: &mut [i64],
    count: &mut u64,
    budget: u64,
    visit: &mut F,
) -> Result<()> {
    let ci = lv.center(i, z);
    let rii = lv.r[(i, i)];
    let half = (radius_sq - partial).max(0.0).sqrt() / rii;
    let lo = (ci - half).ceil() as i64;
    let hi = (ci + half).floor() as i64;
    for zi in lo..=hi {
        let d = rii * (zi as f64 - ci);
        let p = partial + d * d;
        if p > radius_sq {
            continue;
        }
        z[i] = zi;
        if i == 0 {
            *count += 1;
            if *count > budget {
                return Err(Error::EnumerationBudget { budget });
            }
            visit(p, z);
        } else {
            list(lv, i - 1, p, radius_sq, z, count, budget, visit)?;
        }
    }
    Ok(())
}

/// Natural log of a certified upper bound on
/// `Σ_{‖λ−c‖>R} exp(−π τ ‖λ−c‖²)`, valid for any center `c`.
///
/// Lattice points within distance `r` of `c` number at most
/// `κ_n (r+μ)^n / V` (`μ` bounds the covering radius, `κ_n` is the unit-ball
/// volume). Integrating by parts and bounding the incomplete gamma function
/// `Γ(s, x) ≤ x^s e^{-x} / (x − s + 1)` for `x > s − 1` gives the closed form.
pub(crate) fn log_tail_bound(n: usize, log_volume: f64, mu: f64, tau: f64, radius: f64) -> f64 {
    let nf = n as f64;
    let s = nf / 2.0 + 1.0;
    let x = std::f64::consts::PI * tau * radius * radius;
    if x <= s - 1.0 || radius <= 0.0 {
        return f64::INFINITY;
    }
    nf * (mu / radius).ln_1p() - log_volume - 0.5 * nf * tau.ln() + s * x.ln()
        - x
        - (x - s + 1.0).ln()
        - ln_gamma(s)
}

/// Smallest radius (on a 1% geometric grid) whose tail bound is below `log_target`.
pub(crate) fn radius_for_tail(
    n: usize,
    log_volume: f64,
    mu: f64,
    tau: f64,
    log_target: f64,
) -> f64 {
    let s = n as f64 / 2.0 + 1.0;
    let mut r = ((s - 1.0).max(0.5) / (std::f64::consts::PI * tau)).sqrt() * 1.01;
    while log_tail_bound(n, log_volume, mu, tau, r) > log_target {
        r *= 1.01;
    }
    r
}

/// A Gaussian lattice sum `S = Σ_λ exp(−π τ ‖λ − c‖²)` in log form.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GaussianSum {
    pub log_value: f64,
    /// Certified upper bound on (true − computed) / computed.
    pub rel_tail: f64,
    /// Truncation radius (per coordinate for factorized `Z^n` sums).
    pub radius: f64,
    pub points: u64,
    /// Truncated sum over points at nonzero distance from `c`, kept apart
    /// so that `S − 1` stays accurate when `c` is a lattice point.
    pub excess: f64,
}

/// Evaluates `Σ_λ exp(−π τ ‖λ − c‖²)` with a certified relative tail below
/// `rel_target`. Scaled `Z^n` sums factor into one-dimensional sums.
pub(crate) fn gaussian_sum(
    lattice: &LatticeBasis,
    c: &[f64],
    tau: f64,
    rel_target: f64,
    budget: u64,
) -> Result<GaussianSum> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    if lattice.family() == Family::Zn && lattice.n() > 1 {
        let line = LatticeBasis::zn(1)?.scaled(lattice.scale())?;
        let n = lattice.n() as f64;
        let mut log_value = 0.0;
        let mut log1p_tail = 0.0;
        let mut radius: f64 = 0.0;
        let mut points = 0;
        let mut log1p_excess = 0.0;
        let mut all_on_lattice = true;
        for ci in c {
            let g = gaussian_sum_direct(&line, &[*ci], tau, rel_target / (2.0 * n), budget)?;
            let zero_term = (g.log_value.exp() - g.excess).round();
            all_on_lattice &= zero_term == 1.0;
            log1p_excess += g.excess.ln_1p();
            log_value += g.log_value;
            log1p_tail += g.rel_tail.ln_1p();
            radius = radius.max(g.radius);
            points += g.points;
        }
        // Product of (1 + e_i) minus its zero-distance term 1.
        let excess = if all_on_lattice {
            log1p_excess.exp_m1()
        } else {
            log_value.exp()
        };
        return Ok(GaussianSum {
            log_value,
            rel_tail: log1p_tail.exp_m1(),
            radius,
            points,
            excess,
        });
    }
    gaussian_sum_direct(lattice, c, tau, rel_target, budget)
}

fn gaussian_sum_direct(
    lattice: &LatticeBasis,
    c: &[f64],
    tau: f64,
    rel_target: f64,
    budget: u64,
) -> Result<GaussianSum> {
    let pi = std::f64::consts::PI;
    let (_, d_near) = babai(lattice, c);
    // The sum is at least exp(−π τ d²) for any lattice point at distance d;
    // values are accumulated relative to that floor.
    let offset = pi * tau * d_near;
    let log_volume = lattice.volume().ln();
    let mu = lattice.covering_radius_bound();
    let log_target = rel_target.ln() - offset;
    let radius = radius_for_tail(lattice.n(), log_volume, mu, tau, log_target);
    let mut acc = crate::stats::KahanSum::new();
    let mut excess = crate::stats::KahanSum::new();
    let zero_d2 = 1e-18 * (2.0 * log_volume / lattice.n() as f64).exp();
    let points = for_each_within(lattice, c, radius * radius, budget, |d2, _| {
        acc.add((-pi * tau * d2 + offset).exp());
        if d2 > zero_d2 {
            excess.add((-pi * tau * d2).exp());
        }
    })?;
    let partial = acc.value();
    let log_tail = log_tail_bound(lattice.n(), log_volume, mu, tau, radius);
    let rel_tail = (log_tail + offset).exp() / partial;
    Ok(GaussianSum {
        log_value: partial.ln() - offset,
        rel_tail,
        radius,
        points,
        excess: excess.value(),
    })
}
