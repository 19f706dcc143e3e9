//! One-way secret key agreement over a nested chain `Λ₁ ⊃ Λ₂ ⊃ Λ₃`.
//!
//! Alice quantizes `x` to `x_Q = Q_{Λ₁}(x)`, publishes the index of the coset
//! `x_Q + Λ₂` (its Voronoi leader is `S`), and keeps the key
//! `K = (x_Q − S) mod R(Λ₃)`, a coset of `Λ₂/Λ₃`. Bob forms
//! `x̂_Q = S + Q_{Λ₂}(a y − S)` with `a = ρ_xy σx/σy` and reduces it the same
//! way. Then `x = E_Q + S + K + λ₃` for some `λ₃ ∈ Λ₃`, and Bob succeeds
//! exactly when `Q_{Λ₂}(E_Q − W₁) = 0`, where `W₁ = x − a y`.
//!
//! `x_Q − S` is Alice's `Λ₂` quantization of `x_Q`. Defining it through the
//! canonical coset leader (rather than rounding `x_Q` directly) keeps `S` and
//! `K` invariant under `Λ₃` shifts even when `x_Q` sits on a `Λ₂` Voronoi
//! boundary, which happens with positive probability.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lattice::{LatticeBasis, NestedChain};
use crate::rng::{derive_seed, par_map_indexed, substream};
use crate::source::SourceParams;
use crate::stats::{Estimate, KahanSum};
use crate::theta::flatness_factor;

/// Alice's side of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AliceOutput {
    /// `x_Q ∈ Λ₁`.
    pub xq: Vec<f64>,
    /// `E_Q = x − x_Q ∈ V(Λ₁)`.
    pub eq: Vec<f64>,
    pub s_index: u64,
    pub s_leader: Vec<f64>,
    pub k_index: u64,
    pub k_leader: Vec<f64>,
}

/// Bob's side of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct BobOutput {
    pub xq_hat: Vec<f64>,
    pub k_hat_index: u64,
}

/// Everything observed in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub alice: AliceOutput,
    pub bob: BobOutput,
    pub key_match: bool,
    pub xq_match: bool,
    /// `Q_{Λ₂}(E_Q − W₁) = 0`.
    pub predicate: bool,
    /// Largest distance of a coordinate of `x − E_Q − S − K` (in the `Λ₃`
    /// basis) from an integer.
    pub decomposition_residual: f64,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn is_origin_cell(lattice: &LatticeBasis, v: &[f64]) -> Result<bool> {
    Ok(lattice.coordinates(v)?.iter().all(|c| c.abs() < 0.5))
}

fn same_point(lattice: &LatticeBasis, a: &[f64], b: &[f64]) -> Result<bool> {
    is_origin_cell(lattice, &sub(a, b))
}

pub fn alice_encode(x: &[f64], chain: &NestedChain) -> Result<AliceOutput> {
    let xq = chain.fine().nearest_point(x)?;
    let eq = sub(x, &xq);
    let s_index = chain.public_index(&xq)?;
    let s_leader = chain.public_leader(s_index)?;
    let q2 = sub(&xq, &s_leader);
    let k_index = chain.key_index(&q2)?;
    let k_leader = chain.key_leader(k_index)?;
    Ok(AliceOutput {
        xq,
        eq,
        s_index,
        s_leader,
        k_index,
        k_leader,
    })
}

/// Bob's reconstruction from his observation `y` and the public index.
pub fn bob_decode(
    y: &[f64],
    s_index: u64,
    chain: &NestedChain,
    params: &SourceParams,
) -> Result<BobOutput> {
    let a = params.bob_coefficient();
    let scaled: Vec<f64> = y.iter().map(|v| a * v).collect();
    bob_decode_scaled(&scaled, s_index, chain)
}

/// [`bob_decode`] on an already scaled observation `a y`.
pub fn bob_decode_scaled(scaled_y: &[f64], s_index: u64, chain: &NestedChain) -> Result<BobOutput> {
    if scaled_y.len() != chain.n() {
        return Err(Error::DimensionMismatch {
            expected: chain.n(),
            got: scaled_y.len(),
        });
    }
    let s = chain.public_leader(s_index)?;
    let q = chain.mid().nearest_point(&sub(scaled_y, &s))?;
    let xq_hat: Vec<f64> = s.iter().zip(&q).map(|(a, b)| a + b).collect();
    let k_hat_index = chain.key_index(&q)?;
    Ok(BobOutput {
        xq_hat,
        k_hat_index,
    })
}

/// Runs encoder and decoder on one source draw and evaluates the exactness checks.
pub fn run_once(
    x: &[f64],
    y: &[f64],
    z: &[f64],
    chain: &NestedChain,
    params: &SourceParams,
) -> Result<Transcript> {
    let alice = alice_encode(x, chain)?;
    let bob = bob_decode(y, alice.s_index, chain, params)?;
    let a = params.bob_coefficient();
    let w1: Vec<f64> = x.iter().zip(y).map(|(x, y)| x - a * y).collect();
    let q0 = chain.mid().nearest_point(&sub(&alice.eq, &w1))?;
    let predicate = is_origin_cell(chain.mid(), &q0)?;
    let rest: Vec<f64> = (0..x.len())
        .map(|i| x[i] - alice.eq[i] - alice.s_leader[i] - alice.k_leader[i])
        .collect();
    let decomposition_residual = chain
        .coarse()
        .coordinates(&rest)?
        .iter()
        .map(|c| (c - c.round()).abs())
        .fold(0.0, f64::max);
    Ok(Transcript {
        x: x.to_vec(),
        y: y.to_vec(),
        z: z.to_vec(),
        key_match: alice.k_index == bob.k_hat_index,
        xq_match: same_point(chain.fine(), &alice.xq, &bob.xq_hat)?,
        predicate,
        decomposition_residual,
        alice,
        bob,
    })
}

/// Per-trial summary, suitable for CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub s_index: u64,
    pub k_index: u64,
    pub k_hat_index: u64,
    pub xq_match: bool,
    pub key_match: bool,
    pub predicate: bool,
    pub decomposition_residual: f64,
}

/// Aggregate metrics over independent trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trials: u64,
    pub n: usize,
    pub public_cardinality: u64,
    pub key_cardinality: u64,
    /// `P{K ≠ K̂}`.
    pub key_error_rate: Estimate,
    /// `P{x̂_Q ≠ x_Q}`.
    pub quantizer_error_rate: Estimate,
    pub key_histogram: Vec<u64>,
    /// Miller-Madow corrected plug-in entropy, capped at `ln |K|` (nats).
    pub key_entropy: f64,
    pub key_entropy_plugin: f64,
    pub key_entropy_max: f64,
    /// `max_k |p̂_K(k) − 1/|K||`.
    pub key_uniformity_deviation: f64,
    /// `ε_{Λ₃}(σx) / |K|`.
    pub key_uniformity_bound: f64,
    /// Binomial standard error of one histogram cell at `p = 1/|K|`.
    pub key_uniformity_stderr: f64,
    pub epsilon_coarse_sigma_x: f64,
    /// Average variational distance between `p_{S,Z|K=k}` and `p_{S,Z}` with
    /// `Z` discretized per coordinate; a binned estimate, not a bound.
    pub d_av: Estimate,
    pub d_av_z_bins: usize,
    /// `d_av ln(|K| / d_av)`.
    pub secrecy_bound: f64,
    /// Fraction of trials where the predicate equals `x̂_Q = x_Q`.
    pub predicate_agreement: f64,
    /// Fraction of trials where the predicate equals `K = K̂`.
    pub predicate_key_agreement: f64,
    /// Trials with the predicate true but `K ≠ K̂`.
    pub predicate_soundness_violations: u64,
    pub max_decomposition_residual: f64,
}

/// Knobs for [`run_trials`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOptions {
    pub seed: u64,
    /// Equiprobable bins per coordinate of `Z/σz` for the `d_av` estimate.
    pub z_bins: usize,
    /// Bootstrap replicates behind the `d_av` standard error.
    pub d_av_replicates: usize,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            z_bins: 8,
            d_av_replicates: 64,
        }
    }
}

/// Secrecy bound `d ln(|K|/d)`; zero at `d = 0`.
pub fn secrecy_bound(d_av: f64, key_cardinality: u64) -> f64 {
    if d_av <= 0.0 {
        0.0
    } else {
        d_av * (key_cardinality as f64 / d_av).ln()
    }
}

fn z_edges(bins: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (1..bins)
        .map(|j| normal.inverse_cdf(j as f64 / bins as f64))
        .collect()
}

/// `Σ_k p̂(k) TV(p̂_{C|K=k}, p̂_C)` over `(k, cell)` pairs, cells densely numbered.
fn average_tv(pairs: &mut [(u64, u64)], keys: usize, cells: usize) -> f64 {
    let total = pairs.len() as f64;
    let mut key_count = vec![0u64; keys];
    let mut cell_count = vec![0u64; cells];
    for &(k, c) in pairs.iter() {
        key_count[k as usize] += 1;
        cell_count[c as usize] += 1;
    }
    pairs.sort_unstable();
    let mut abs_sum = vec![0.0; keys];
    let mut covered = vec![0.0; keys];
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j < pairs.len() && pairs[j] == pairs[i] {
            j += 1;
        }
        let (k, c) = pairs[i];
        let joint = (j - i) as f64 / key_count[k as usize] as f64;
        let marginal = cell_count[c as usize] as f64 / total;
        abs_sum[k as usize] += (joint - marginal).abs();
        covered[k as usize] += marginal;
        i = j;
    }
    (0..keys)
        .filter(|&k| key_count[k] > 0)
        .map(|k| key_count[k] as f64 / total * 0.5 * (abs_sum[k] + (1.0 - covered[k]).max(0.0)))
        .collect::<KahanSum>()
        .value()
}

pub fn run_trials(
    chain: &NestedChain,
    params: &SourceParams,
    trials: u64,
    opts: &TrialOptions,
) -> Result<TrialMetrics> {
    run_trials_detailed(chain, params, trials, opts).map(|(m, _)| m)
}

/// [`run_trials`] that also returns one record per trial.
pub fn run_trials_detailed(
    chain: &NestedChain,
    params: &SourceParams,
    trials: u64,
    opts: &TrialOptions,
) -> Result<(TrialMetrics, Vec<TrialRecord>)> {
    let key_card = chain.key_cardinality();
    if trials < 1000 {
        return Err(Error::ResolutionGuard(format!(
            "need >= 1000 trials, got {trials}"
        )));
    }
    if key_card.saturating_mul(20) > trials {
        return Err(Error::ResolutionGuard(format!(
            "{trials} trials cannot resolve {key_card} keys (need 20 per key)"
        )));
    }
    if opts.z_bins < 2 || opts.z_bins > 256 {
        return Err(Error::InvalidParameter(format!(
            "z_bins must be in [2, 256], got {}",
            opts.z_bins
        )));
    }
    let n = chain.n();
    let edges = z_edges(opts.z_bins);
    let outcomes = par_map_indexed(
        opts.seed,
        trials,
        |i, rng| -> Result<(TrialRecord, Vec<u8>)> {
            let s = params.sample_xyz(n, rng);
            let t = run_once(&s.x, &s.y, &s.z, chain, params)?;
            let zb: Vec<u8> =
                s.z.iter()
                    .map(|v| edges.partition_point(|e| *e < v / params.sigma_z) as u8)
                    .collect();
            Ok((
                TrialRecord {
                    trial: i,
                    s_index: t.alice.s_index,
                    k_index: t.alice.k_index,
                    k_hat_index: t.bob.k_hat_index,
                    xq_match: t.xq_match,
                    key_match: t.key_match,
                    predicate: t.predicate,
                    decomposition_residual: t.decomposition_residual,
                },
                zb,
            ))
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut hist = vec![0u64; key_card as usize];
    let mut key_err = 0u64;
    let mut xq_err = 0u64;
    let mut agree = 0u64;
    let mut key_agree = 0u64;
    let mut unsound = 0u64;
    let mut max_res: f64 = 0.0;
    for (r, _) in &outcomes {
        hist[r.k_index as usize] += 1;
        key_err += u64::from(!r.key_match);
        xq_err += u64::from(!r.xq_match);
        agree += u64::from(r.predicate == r.xq_match);
        key_agree += u64::from(r.predicate == r.key_match);
        unsound += u64::from(r.predicate && !r.key_match);
        max_res = max_res.max(r.decomposition_residual);
    }

    let total = trials as f64;
    let kf = key_card as f64;
    let plugin = -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .collect::<KahanSum>()
        .value();
    let occupied = hist.iter().filter(|&&c| c > 0).count() as f64;
    let max_entropy = kf.ln();
    let corrected = (plugin + (occupied - 1.0) / (2.0 * total)).min(max_entropy);
    let deviation = hist
        .iter()
        .map(|&c| (c as f64 / total - 1.0 / kf).abs())
        .fold(0.0, f64::max);
    let eps = flatness_factor(chain.coarse(), params.sigma_x)?.epsilon;

    // Dense cell ids for (S, binned Z).
    let mut cell_ids = std::collections::BTreeMap::<(u64, &[u8]), u64>::new();
    for (r, zb) in &outcomes {
        let next = cell_ids.len() as u64;
        cell_ids.entry((r.s_index, zb.as_slice())).or_insert(next);
    }
    let pairs: Vec<(u64, u64)> = outcomes
        .iter()
        .map(|(r, zb)| (r.k_index, cell_ids[&(r.s_index, zb.as_slice())]))
        .collect();
    let cells = cell_ids.len();
    let d_av = average_tv(&mut pairs.clone(), key_card as usize, cells);
    let boot_seed = derive_seed(opts.seed, "d_av-bootstrap");
    let replicates: Vec<f64> = (0..opts.d_av_replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(boot_seed, b);
            let mut resampled: Vec<(u64, u64)> = (0..pairs.len())
                .map(|_| pairs[rand::Rng::random_range(&mut rng, 0..pairs.len())])
                .collect();
            average_tv(&mut resampled, key_card as usize, cells)
        })
        .collect();
    let d_av_se = if replicates.len() >= 2 {
        Estimate::from_samples(&replicates).stderr * (replicates.len() as f64).sqrt()
    } else {
        f64::NAN
    };

    let metrics = TrialMetrics {
        trials,
        n,
        public_cardinality: chain.public_cardinality(),
        key_cardinality: key_card,
        key_error_rate: Estimate::proportion(key_err, trials),
        quantizer_error_rate: Estimate::proportion(xq_err, trials),
        key_histogram: hist,
        key_entropy: corrected,
        key_entropy_plugin: plugin,
        key_entropy_max: max_entropy,
        key_uniformity_deviation: deviation,
        key_uniformity_bound: eps / kf,
        key_uniformity_stderr: ((1.0 / kf) * (1.0 - 1.0 / kf) / total).sqrt(),
        epsilon_coarse_sigma_x: eps,
        d_av: Estimate {
            value: d_av,
            stderr: d_av_se,
        },
        d_av_z_bins: opts.z_bins,
        secrecy_bound: secrecy_bound(d_av, key_card),
        predicate_agreement: agree as f64 / total,
        predicate_key_agreement: key_agree as f64 / total,
        predicate_soundness_violations: unsound,
        max_decomposition_residual: max_res,
    };
    Ok((metrics, outcomes.into_iter().map(|(r, _)| r).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn line_chain() -> NestedChain {
        NestedChain::from_family("Zn:1", 1.0, 4, 2).unwrap()
    }

    fn unit_params() -> SourceParams {
        // ρ_xy σx/σy = 1, so Bob's scaling is the identity.
        SourceParams::markov(1.0, 1.0, 1.0, 0.5, 0.2).unwrap()
    }

    #[test]
    fn alice_hand_example() {
        let a = alice_encode(&[2.6], &line_chain()).unwrap();
        assert_eq!(a.xq, vec![3.0]);
        assert_eq!(a.s_leader, vec![-1.0]);
        assert_eq!(a.s_index, 3);
        assert_eq!(a.k_leader, vec![4.0]);
        assert_eq!(a.k_index, 1);
        let b = alice_encode(&[8.0], &line_chain()).unwrap();
        assert_eq!(b.s_leader, vec![0.0]);
        assert_eq!(b.k_index, 0);
    }

    #[test]
    fn bob_hand_examples() {
        let chain = line_chain();
        let ok = bob_decode_scaled(&[2.9], 3, &chain).unwrap();
        assert_eq!(ok.xq_hat, vec![3.0]);
        assert_eq!(ok.k_hat_index, 1);
        // Noise of 2.1 on top of 2.6 gives 4.7; Q_{4Z}(5.7) = 4 still decodes.
        let near = bob_decode_scaled(&[4.7], 3, &chain).unwrap();
        assert_eq!(near.xq_hat, vec![3.0]);
        // One more unit of noise crosses the Λ₂ cell: Q_{4Z}(6.7) = 8, x̂_Q = 7.
        let fail = bob_decode_scaled(&[5.7], 3, &chain).unwrap();
        assert_eq!(fail.xq_hat, vec![7.0]);
        assert_eq!(fail.k_hat_index, 0);
    }

    #[test]
    fn bob_rejects_bad_index() {
        let err = bob_decode_scaled(&[0.0], 4, &line_chain()).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidIndex {
                index: 4,
                cardinality: 4
            }
        ));
    }

    #[test]
    fn noiseless_observation_always_agrees() {
        let chain = NestedChain::from_family("Dn:4", 0.7, 2, 3).unwrap();
        let p = SourceParams::markov(1.0, 2.0, 1.0, 0.6, 0.2).unwrap();
        let a = p.bob_coefficient();
        let mut rng = substream(3, 0);
        for _ in 0..500 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-6.0..6.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| v / a).collect();
            let t = run_once(&x, &y, &[0.0; 4], &chain, &p).unwrap();
            assert!(t.key_match && t.xq_match && t.predicate);
        }
    }

    #[test]
    fn exactness_properties_on_random_draws() {
        for chain in [
            NestedChain::from_family("Zn:2", 0.5, 2, 3).unwrap(),
            NestedChain::from_family("Dn:4", 0.6, 2, 2).unwrap(),
            NestedChain::from_family("E8", 0.5, 2, 2).unwrap(),
        ] {
            let p = SourceParams::markov(1.0, 1.0, 1.0, 0.9, 0.3).unwrap();
            let n = chain.n();
            let mut rng = substream(4, n as u64);
            for _ in 0..300 {
                let s = p.sample_xyz(n, &mut rng);
                let t = run_once(&s.x, &s.y, &s.z, &chain, &p).unwrap();
                assert!(t.decomposition_residual < 1e-9);
                assert_eq!(t.predicate, t.xq_match);
                if t.predicate {
                    assert!(t.key_match);
                }
                let shift: Vec<i64> = (0..n).map(|_| rng.random_range(-3..=3)).collect();
                let lam = chain.coarse().point(&shift).unwrap();
                let moved: Vec<f64> = s.x.iter().zip(&lam).map(|(a, b)| a + b).collect();
                let a2 = alice_encode(&moved, &chain).unwrap();
                assert_eq!((a2.s_index, a2.k_index), (t.alice.s_index, t.alice.k_index));
            }
        }
    }

    #[test]
    fn shift_invariance_at_quantizer_ties() {
        // Odd m₃ with x_Q on a Λ₂ boundary: x_Q = 2 is equidistant from 0 and 4.
        let chain = NestedChain::from_family("Zn:1", 1.0, 4, 3).unwrap();
        let base = alice_encode(&[2.0], &chain).unwrap();
        for k in [-2.0, -1.0, 1.0, 5.0] {
            let a = alice_encode(&[2.0 + 12.0 * k], &chain).unwrap();
            assert_eq!((a.s_index, a.k_index), (base.s_index, base.k_index));
        }
    }

    #[test]
    fn guards() {
        let chain = NestedChain::from_family("Zn:2", 1.0, 2, 8).unwrap();
        let p = unit_params();
        let opts = TrialOptions::default();
        assert!(matches!(
            run_trials(&chain, &p, 999, &opts),
            Err(Error::ResolutionGuard(_))
        ));
        assert!(matches!(
            run_trials(&chain, &p, 1000, &opts),
            Err(Error::ResolutionGuard(_))
        ));
    }

    #[test]
    fn degraded_chain_reliable_and_uniform() {
        let p = SourceParams::markov(1.0, 1.0, 1.0, 0.95, 0.2).unwrap();
        // Λ₂ = 2 Z⁴ has packing radius 1, about 2.9 standard deviations of
        // the effective noise E_Q − W₁ per coordinate.
        let chain = NestedChain::from_family("Zn:4", 0.5, 4, 2).unwrap();
        let opts = TrialOptions {
            seed: 7,
            d_av_replicates: 8,
            ..Default::default()
        };
        let m = run_trials(&chain, &p, 20_000, &opts).unwrap();
        assert!(m.key_error_rate.value < 0.05, "{:?}", m.key_error_rate);
        assert_eq!(m.key_histogram.iter().sum::<u64>(), 20_000);
        assert!(m.key_entropy <= m.key_entropy_max + 1e-12);
        let max_se = m.key_uniformity_stderr;
        assert!(
            m.key_uniformity_deviation <= m.key_uniformity_bound + 3.0 * max_se + 1e-12,
            "{m:?}"
        );
        assert_eq!(m.predicate_soundness_violations, 0);
        assert_eq!(m.predicate_agreement, 1.0);
        assert!(m.max_decomposition_residual < 1e-9);
    }

    #[test]
    fn weak_correlation_randomizes_key() {
        let p = SourceParams::markov(1.0, 1.0, 1.0, 0.1, 0.1).unwrap();
        let chain = NestedChain::from_family("Zn:1", 0.25, 2, 4).unwrap();
        let opts = TrialOptions {
            seed: 8,
            d_av_replicates: 4,
            ..Default::default()
        };
        let m = run_trials(&chain, &p, 20_000, &opts).unwrap();
        let chance = 1.0 - 1.0 / 4.0;
        assert!(
            (m.key_error_rate.value - chance).abs() < 0.05,
            "{:?}",
            m.key_error_rate
        );
    }

    #[test]
    fn secrecy_bound_shape() {
        assert_eq!(secrecy_bound(0.0, 16), 0.0);
        let k = 16u64;
        let limit = k as f64 / std::f64::consts::E;
        let mut prev = 0.0;
        for i in 1..100 {
            let d = limit * i as f64 / 100.0;
            let b = secrecy_bound(d, k);
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn average_tv_oracle() {
        // Key 0 always in cell 0, key 1 always in cell 1: conditionals are
        // disjoint point masses, each at TV 1/2 from the 50/50 marginal.
        let mut pairs = vec![(0, 0), (0, 0), (1, 1), (1, 1)];
        assert!((average_tv(&mut pairs, 2, 2) - 0.5).abs() < 1e-15);
        let mut indep = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
        assert!(average_tv(&mut indep, 2, 2).abs() < 1e-15);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let p = SourceParams::markov(1.0, 1.0, 1.0, 0.9, 0.3).unwrap();
        let chain = NestedChain::from_family("Zn:2", 0.5, 2, 2).unwrap();
        let opts = TrialOptions {
            seed: 11,
            d_av_replicates: 4,
            ..Default::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_trials(&chain, &p, 2000, &opts).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
