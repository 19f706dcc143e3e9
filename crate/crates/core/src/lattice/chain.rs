use serde::{Deserialize, Serialize};

use super::{FundamentalRegion, LatticeBasis, LATTICE_TOL};
use crate::error::{Error, Result};

/// Integer `m` with `coarse = m · fine`, or an error if the pair is not a
/// self-similar nesting.
fn quotient_scale(fine: &LatticeBasis, coarse: &LatticeBasis) -> Result<u64> {
    if fine.n() != coarse.n() {
        return Err(Error::DimensionMismatch {
            expected: fine.n(),
            got: coarse.n(),
        });
    }
    let m = fine.inverse() * coarse.basis();
    let ratio = m[(0, 0)];
    let r = ratio.round();
    let n = fine.n();
    let ok = r >= 1.0
        && (0..n).all(|i| {
            (0..n).all(|j| {
                let target = if i == j { r } else { 0.0 };
                (m[(i, j)] - target).abs() <= LATTICE_TOL * r.max(1.0)
            })
        });
    if !ok {
        return Err(Error::NotNested(
            "coarse lattice is not an integer multiple of the fine lattice".into(),
        ));
    }
    Ok(r as u64)
}

fn cardinality(m: u64, n: usize) -> Result<u64> {
    u32::try_from(n)
        .ok()
        .and_then(|e| m.checked_pow(e))
        .ok_or_else(|| Error::InvalidParameter(format!("quotient size {m}^{n} overflows u64")))
}

/// Mixed-radix label of the coset `λ + Λ_coarse` in `Λ_fine / Λ_coarse`,
/// for `coarse = m · fine`. Digit `i` is the `i`-th fine coordinate of `λ`
/// reduced mod `m`, least significant first.
pub fn coset_index(lambda: &[f64], fine: &LatticeBasis, coarse: &LatticeBasis) -> Result<u64> {
    let m = quotient_scale(fine, coarse)?;
    cardinality(m, fine.n())?;
    let z = fine.integer_coordinates(lambda)?;
    let mut index = 0u64;
    let mut place = 1u64;
    for zi in z {
        index += zi.rem_euclid(m as i64) as u64 * place;
        place = place.wrapping_mul(m);
    }
    Ok(index)
}

/// Canonical representative of coset `index` inside the given fundamental
/// region of `coarse`. Inverse of [`coset_index`].
pub fn coset_leader(
    index: u64,
    fine: &LatticeBasis,
    coarse: &LatticeBasis,
    region: FundamentalRegion,
) -> Result<Vec<f64>> {
    let m = quotient_scale(fine, coarse)?;
    let card = cardinality(m, fine.n())?;
    if index >= card {
        return Err(Error::InvalidIndex {
            index,
            cardinality: card,
        });
    }
    let mut rem = index;
    let digits: Vec<i64> = (0..fine.n())
        .map(|_| {
            let d = rem % m;
            rem /= m;
            d as i64
        })
        .collect();
    // Digits in [0, m) put the point inside the coarse parallelepiped.
    let p = fine.point(&digits)?;
    match region {
        FundamentalRegion::Parallelepiped => Ok(p),
        FundamentalRegion::Voronoi => {
            let q = coarse.nearest_point(&p)?;
            Ok(p.iter().zip(&q).map(|(a, b)| a - b).collect())
        }
    }
}

/// Serializable description of a nested chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub family: String,
    pub n: usize,
    pub base_scale: f64,
    pub scale2: u32,
    pub scale3: u32,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub public_cardinality: u64,
    pub key_cardinality: u64,
}

/// Self-similar partition chain `Λ₁ ⊃ Λ₂ = m₂Λ₁ ⊃ Λ₃ = m₃Λ₂`.
#[derive(Debug, Clone)]
pub struct NestedChain {
    fine: LatticeBasis,
    mid: LatticeBasis,
    coarse: LatticeBasis,
    scale2: u32,
    scale3: u32,
    public_cardinality: u64,
    key_cardinality: u64,
    public_leaders: Vec<Vec<f64>>,
}

/// Cosets above this count are not tabulated; their leaders are computed on demand.
const LEADER_TABLE_LIMIT: u64 = 1 << 16;

impl NestedChain {
    pub fn new(base: LatticeBasis, scale2: u32, scale3: u32) -> Result<Self> {
        if scale2 < 2 || scale3 < 2 {
            return Err(Error::InvalidParameter(format!(
                "chain scales must be >= 2, got {scale2}, {scale3}"
            )));
        }
        let n = base.n();
        let public_cardinality = cardinality(u64::from(scale2), n)?;
        let key_cardinality = cardinality(u64::from(scale3), n)?;
        let mid = base.scaled(f64::from(scale2))?;
        let coarse = mid.scaled(f64::from(scale3))?;
        let mut chain = NestedChain {
            fine: base,
            mid,
            coarse,
            scale2,
            scale3,
            public_cardinality,
            key_cardinality,
            public_leaders: Vec::new(),
        };
        if public_cardinality <= LEADER_TABLE_LIMIT {
            chain.public_leaders = (0..public_cardinality)
                .map(|i| chain.compute_public_leader(i))
                .collect::<Result<_>>()?;
        }
        Ok(chain)
    }

    /// Chain over a named family with `Λ₁ = base_scale · family`.
    pub fn from_family(family: &str, base_scale: f64, scale2: u32, scale3: u32) -> Result<Self> {
        Self::new(
            LatticeBasis::from_name(family)?.scaled(base_scale)?,
            scale2,
            scale3,
        )
    }

    pub fn n(&self) -> usize {
        self.fine.n()
    }

    /// `Λ₁`, the quantization lattice.
    pub fn fine(&self) -> &LatticeBasis {
        &self.fine
    }

    /// `Λ₂`, the reconciliation lattice.
    pub fn mid(&self) -> &LatticeBasis {
        &self.mid
    }

    /// `Λ₃`, the hashing lattice.
    pub fn coarse(&self) -> &LatticeBasis {
        &self.coarse
    }

    pub fn scale2(&self) -> u32 {
        self.scale2
    }

    pub fn scale3(&self) -> u32 {
        self.scale3
    }

    /// `|Λ₁/Λ₂| = scale2^n`.
    pub fn public_cardinality(&self) -> u64 {
        self.public_cardinality
    }

    /// `|Λ₂/Λ₃| = scale3^n`.
    pub fn key_cardinality(&self) -> u64 {
        self.key_cardinality
    }

    /// Key rate `(1/n) ln(V₃/V₂)` in nats per dimension.
    pub fn key_rate(&self) -> f64 {
        f64::from(self.scale3).ln()
    }

    /// Public rate `(1/n) ln(V₂/V₁)` in nats per dimension.
    pub fn public_rate(&self) -> f64 {
        f64::from(self.scale2).ln()
    }

    pub fn volumes(&self) -> (f64, f64, f64) {
        (self.fine.volume(), self.mid.volume(), self.coarse.volume())
    }

    fn compute_public_leader(&self, index: u64) -> Result<Vec<f64>> {
        coset_leader(index, &self.fine, &self.mid, FundamentalRegion::Voronoi)
    }

    /// Voronoi coset leader of `Λ₁/Λ₂` with the given index.
    pub fn public_leader(&self, index: u64) -> Result<Vec<f64>> {
        if index >= self.public_cardinality {
            return Err(Error::InvalidIndex {
                index,
                cardinality: self.public_cardinality,
            });
        }
        match self.public_leaders.get(index as usize) {
            Some(l) => Ok(l.clone()),
            None => self.compute_public_leader(index),
        }
    }

    /// Parallelepiped coset leader of `Λ₂/Λ₃` with the given index.
    pub fn key_leader(&self, index: u64) -> Result<Vec<f64>> {
        coset_leader(
            index,
            &self.mid,
            &self.coarse,
            FundamentalRegion::Parallelepiped,
        )
    }

    pub fn public_index(&self, lambda1: &[f64]) -> Result<u64> {
        coset_index(lambda1, &self.fine, &self.mid)
    }

    pub fn key_index(&self, lambda2: &[f64]) -> Result<u64> {
        coset_index(lambda2, &self.mid, &self.coarse)
    }

    /// Checks `Λ₃ ⊂ Λ₂ ⊂ Λ₁`.
    pub fn verify_nesting(&self) -> bool {
        self.coarse.is_sublattice_of(&self.mid) && self.mid.is_sublattice_of(&self.fine)
    }

    pub fn summary(&self) -> ChainSummary {
        let (v1, v2, v3) = self.volumes();
        ChainSummary {
            family: self.fine.name(),
            n: self.n(),
            base_scale: self.fine.scale(),
            scale2: self.scale2,
            scale3: self.scale3,
            v1,
            v2,
            v3,
            public_cardinality: self.public_cardinality,
            key_cardinality: self.key_cardinality,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn scalar_coset_example() {
        let fine = LatticeBasis::zn(1).unwrap().scaled(4.0).unwrap();
        let coarse = fine.scaled(2.0).unwrap();
        assert_eq!(coset_index(&[4.0], &fine, &coarse).unwrap(), 1);
        assert_eq!(coset_index(&[0.0], &fine, &coarse).unwrap(), 0);
        assert_eq!(coset_index(&[-4.0], &fine, &coarse).unwrap(), 1);
    }

    #[test]
    fn z2_digit_order_is_little_endian() {
        let fine = LatticeBasis::zn(2).unwrap();
        let coarse = fine.scaled(2.0).unwrap();
        // Oracle: the four cosets in digit order.
        let expected = [
            ([0.0, 0.0], 0),
            ([1.0, 0.0], 1),
            ([0.0, 1.0], 2),
            ([1.0, 1.0], 3),
        ];
        for (v, idx) in expected {
            assert_eq!(coset_index(&v, &fine, &coarse).unwrap(), idx);
        }
    }

    #[test]
    fn off_lattice_vectors_are_rejected() {
        let fine = LatticeBasis::zn(2).unwrap();
        let coarse = fine.scaled(3.0).unwrap();
        assert!(matches!(
            coset_index(&[0.5, 1.0], &fine, &coarse),
            Err(Error::NotOnLattice { .. })
        ));
        let skew = LatticeBasis::dn(2).unwrap();
        assert!(matches!(
            coset_index(&[0.0, 0.0], &fine, &skew),
            Err(Error::NotNested(_))
        ));
    }

    #[test]
    fn leader_index_out_of_range() {
        let fine = LatticeBasis::zn(2).unwrap();
        let coarse = fine.scaled(3.0).unwrap();
        assert!(matches!(
            coset_leader(9, &fine, &coarse, FundamentalRegion::Voronoi),
            Err(Error::InvalidIndex {
                index: 9,
                cardinality: 9
            })
        ));
    }

    #[test]
    fn chain_volumes_and_nesting() {
        let chain = NestedChain::from_family("Dn:4", 0.5, 3, 2).unwrap();
        let (v1, v2, v3) = chain.volumes();
        assert_abs_diff_eq!(v2 / v1, 81.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v3 / v2, 16.0, epsilon = 1e-9);
        assert_eq!(chain.public_cardinality(), 81);
        assert_eq!(chain.key_cardinality(), 16);
        assert!(chain.verify_nesting());
        assert_abs_diff_eq!(chain.key_rate(), (v3 / v2).ln() / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn public_leaders_lie_in_voronoi_cell() {
        let chain = NestedChain::from_family("E8", 1.0, 2, 2).unwrap();
        for i in [0u64, 1, 37, 255] {
            let s = chain.public_leader(i).unwrap();
            assert!(chain
                .mid()
                .in_region(&s, FundamentalRegion::Voronoi)
                .unwrap());
            assert_eq!(chain.public_index(&s).unwrap(), i);
        }
    }

    proptest! {
        #[test]
        fn index_of_leader_is_identity(idx in 0u64..125, voronoi in any::<bool>(), family in 0usize..3) {
            let fine = match family {
                0 => LatticeBasis::zn(3).unwrap().scaled(0.7).unwrap(),
                1 => LatticeBasis::dn(3).unwrap(),
                _ => LatticeBasis::custom(&[vec![1.0, 0.3, 0.0], vec![0.0, 1.2, 0.4], vec![0.1, 0.0, 0.9]]).unwrap(),
            };
            let coarse = fine.scaled(5.0).unwrap();
            let region = if voronoi { FundamentalRegion::Voronoi } else { FundamentalRegion::Parallelepiped };
            let leader = coset_leader(idx, &fine, &coarse, region).unwrap();
            prop_assert_eq!(coset_index(&leader, &fine, &coarse).unwrap(), idx);
            prop_assert!(coarse.in_region(&leader, region).unwrap());
        }
    }
}
