use rand::Rng;

use super::{FundamentalRegion, LatticeBasis};
use crate::error::{Error, Result};
use crate::rng::par_map_indexed;
use crate::stats::Estimate;

/// Monte-Carlo estimate of the normalized second moment
/// `G(Λ) = E‖x̄‖² / (n V^{2/n})` for `x̄` uniform on the Voronoi cell.
///
/// Points are drawn uniformly on the fundamental parallelepiped (itself a
/// fundamental region) and Voronoi-reduced, which makes `x̄` exactly
/// uniform on `V(Λ)`.
pub fn second_moment_estimate(lattice: &LatticeBasis, samples: u64, seed: u64) -> Result<Estimate> {
    if samples < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "second moment needs >= 10^4 samples, got {samples}"
        )));
    }
    let n = lattice.n();
    let norm = (2.0 * lattice.volume().ln() / n as f64).exp();
    let values = par_map_indexed(seed, samples, |_, rng| -> Result<f64> {
        let coords: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x = lattice.basis() * nalgebra::DVector::from_vec(coords);
        let r = lattice.mod_region(x.as_slice(), FundamentalRegion::Voronoi)?;
        Ok(r.iter().map(|v| v * v).sum::<f64>() / n as f64 / norm)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&values))
}
