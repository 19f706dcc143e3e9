//! Lattice representations, fundamental-region reduction, nearest-point
//! quantization and coset arithmetic.
//!
//! A lattice is stored by its basis matrix `B` whose columns generate
//! `{B z : z in Z^n}`. Named families (`Z^n`, `D_n`, `E_8`) carry an exact
//! integer form of their basis and a fast decoder; custom bases fall back to
//! exact enumeration.

mod chain;
mod decode;
pub(crate) mod enumerate;
mod moment;

pub use chain::{coset_index, coset_leader, NestedChain};
pub use moment::second_moment_estimate;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension for which the enumeration decoder may be used.
pub const MAX_ENUMERATION_DIM: usize = 12;

/// Tolerance used when testing whether coordinates are integers.
pub const LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Zn,
    Dn,
    E8,
    Custom,
}

/// Nearest-point algorithm attached to a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decoder {
    /// Coordinate-wise rounding, for scaled `Z^n`.
    CoordinateWise,
    /// Round-and-repair decoder for scaled `D_n`.
    DnFast,
    /// Union-of-two-cosets decoder for scaled `E_8`.
    E8Fast,
    /// Exact sphere enumeration, any basis with `n <= 12`.
    Enumeration,
}

impl Decoder {
    fn name(self) -> &'static str {
        match self {
            Decoder::CoordinateWise => "CoordinateWise",
            Decoder::DnFast => "DnFast",
            Decoder::E8Fast => "E8Fast",
            Decoder::Enumeration => "Enumeration",
        }
    }
}

/// Choice of fundamental region for `x mod R(Λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FundamentalRegion {
    #[default]
    Parallelepiped,
    Voronoi,
}

/// Integer numerators of the unscaled family basis over a common denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactBasis {
    /// Column-major numerators.
    pub numerators: Vec<i64>,
    pub denominator: i64,
}

/// An `n`-dimensional full-rank lattice.
#[derive(Debug, Clone)]
pub struct LatticeBasis {
    family: Family,
    scale: f64,
    basis: DMatrix<f64>,
    inverse: DMatrix<f64>,
    gram: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    volume: f64,
    decoder: Decoder,
    exact: Option<ExactBasis>,
}

impl LatticeBasis {
    fn build(
        family: Family,
        scale: f64,
        unscaled: DMatrix<f64>,
        exact: Option<ExactBasis>,
    ) -> Result<Self> {
        let n = unscaled.nrows();
        if n == 0 || unscaled.ncols() != n {
            return Err(Error::InvalidLattice(
                "basis must be a non-empty square matrix".into(),
            ));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lattice scale must be positive, got {scale}"
            )));
        }
        if unscaled.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLattice("basis has non-finite entries".into()));
        }
        let basis = unscaled * scale;
        let col_norms: f64 = basis.column_iter().map(|c| c.norm()).product();
        let det = basis.determinant();
        if !(det.abs() > 1e-12 * col_norms) {
            return Err(Error::SingularBasis);
        }
        let inverse = basis.clone().try_inverse().ok_or(Error::SingularBasis)?;
        let gram = basis.transpose() * &basis;
        let qr = basis.clone().qr();
        let (mut q, mut r) = qr.unpack();
        for i in 0..n {
            if r[(i, i)] < 0.0 {
                for j in 0..n {
                    r[(i, j)] = -r[(i, j)];
                    q[(j, i)] = -q[(j, i)];
                }
            }
        }
        let decoder = match family {
            Family::Zn => Decoder::CoordinateWise,
            Family::Dn => Decoder::DnFast,
            Family::E8 => Decoder::E8Fast,
            Family::Custom => Decoder::Enumeration,
        };
        Ok(LatticeBasis {
            family,
            scale,
            basis,
            inverse,
            gram,
            q,
            r,
            volume: det.abs(),
            decoder,
            exact,
        })
    }

    /// The integer lattice `Z^n`.
    pub fn zn(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidLattice("Zn requires n >= 1".into()));
        }
        let m = DMatrix::identity(n, n);
        let exact = ExactBasis {
            numerators: m.iter().map(|v| *v as i64).collect(),
            denominator: 1,
        };
        Self::build(Family::Zn, 1.0, m, Some(exact))
    }

    /// The checkerboard lattice `D_n = {x in Z^n : sum(x) even}`.
    pub fn dn(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidLattice("Dn requires n >= 1".into()));
        }
        let mut m = DMatrix::zeros(n, n);
        if n == 1 {
            m[(0, 0)] = 2.0;
        } else {
            m[(0, 0)] = -1.0;
            m[(1, 0)] = -1.0;
            for j in 1..n {
                m[(j - 1, j)] = 1.0;
                m[(j, j)] = -1.0;
            }
        }
        let exact = ExactBasis {
            numerators: m.iter().map(|v| *v as i64).collect(),
            denominator: 1,
        };
        Self::build(Family::Dn, 1.0, m, Some(exact))
    }

    /// The Gosset lattice `E_8 = D_8 ∪ (D_8 + ½·1)`, unit volume.
    pub fn e8() -> Result<Self> {
        // Doubled generator rows; the basis vectors are the columns of the transpose.
        let mut twice = DMatrix::<i64>::zeros(8, 8);
        twice[(0, 0)] = 4;
        for i in 1..7 {
            twice[(i, i - 1)] = -2;
            twice[(i, i)] = 2;
        }
        for j in 0..8 {
            twice[(7, j)] = 1;
        }
        let cols = twice.transpose();
        let exact = ExactBasis {
            numerators: cols.iter().copied().collect(),
            denominator: 2,
        };
        let m = cols.map(|v| v as f64 / 2.0);
        Self::build(Family::E8, 1.0, m, Some(exact))
    }

    /// A lattice from an explicit basis, given row-major: `rows[i][j]` is
    /// entry `(i, j)` of the matrix whose columns are the basis vectors.
    pub fn custom(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidLattice("custom basis must be square".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::build(Family::Custom, 1.0, m, None)
    }

    /// Parses `"Zn:{n}"`, `"Dn:{n}"` or `"E8"`. Custom lattices need an
    /// explicit basis and go through [`LatticeBasis::custom`].
    pub fn from_name(name: &str) -> Result<Self> {
        let parse_n = |s: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidLattice(format!("bad dimension in `{name}`")))
        };
        match name.split_once(':') {
            Some(("Zn", n)) => Self::zn(parse_n(n)?),
            Some(("Dn", n)) => Self::dn(parse_n(n)?),
            None if name == "E8" => Self::e8(),
            None if name == "custom" => Err(Error::InvalidLattice(
                "`custom` lattices require an inline basis".into(),
            )),
            _ => Err(Error::InvalidLattice(format!(
                "unknown lattice family `{name}`"
            ))),
        }
    }

    /// Family member of dimension `n` (`"Zn"`, `"Dn"`, `"E8"`).
    pub fn family_member(family: &str, n: usize) -> Result<Self> {
        match family {
            "Zn" => Self::zn(n),
            "Dn" => Self::dn(n),
            "E8" if n == 8 => Self::e8(),
            "E8" => Err(Error::InvalidLattice(format!(
                "E8 has dimension 8, not {n}"
            ))),
            other => Err(Error::InvalidLattice(format!(
                "unknown lattice family `{other}`"
            ))),
        }
    }

    /// `c·Λ`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let unscaled = &self.basis / self.scale;
        let mut out = Self::build(self.family, self.scale * c, unscaled, self.exact.clone())?;
        out.decoder = self.decoder;
        Ok(out)
    }

    /// Rescales so that the fundamental volume equals `volume`.
    pub fn with_volume(&self, volume: f64) -> Result<Self> {
        if !(volume > 0.0 && volume.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "volume must be positive, got {volume}"
            )));
        }
        let c = ((volume.ln() - self.volume.ln()) / self.n() as f64).exp();
        self.scaled(c)
    }

    /// Rescales so that the volume-to-noise ratio `V^{2/n}/σ²` equals `vnr`.
    pub fn with_vnr(&self, sigma: f64, vnr: f64) -> Result<Self> {
        let n = self.n() as f64;
        let log_v = 0.5 * n * (vnr.ln() + 2.0 * sigma.ln());
        let c = ((log_v - self.volume.ln()) / n).exp();
        self.scaled(c)
    }

    /// Forces a specific decoder. Fast decoders are only accepted on their
    /// own family.
    pub fn with_decoder(&self, decoder: Decoder) -> Result<Self> {
        let ok = match decoder {
            Decoder::CoordinateWise => self.family == Family::Zn,
            Decoder::DnFast => self.family == Family::Dn,
            Decoder::E8Fast => self.family == Family::E8,
            Decoder::Enumeration => true,
        };
        if !ok {
            return Err(Error::DecoderMismatch {
                decoder: decoder.name(),
                reason: format!("lattice family is {:?}", self.family),
            });
        }
        let mut out = self.clone();
        out.decoder = decoder;
        Ok(out)
    }

    /// Dual lattice `Λ* = B^{-T} Z^n`. Scaled `Z^n` stays in its family.
    pub fn dual(&self) -> Result<Self> {
        if self.family == Family::Zn {
            return Self::zn(self.n())?.scaled(1.0 / self.scale);
        }
        let m = self.inverse.transpose();
        Self::build(Family::Custom, 1.0, m, None)
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn decoder(&self) -> Decoder {
        self.decoder
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn exact(&self) -> Option<&ExactBasis> {
        self.exact.as_ref()
    }

    pub(crate) fn qr_parts(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.q, &self.r)
    }

    /// Fundamental volume `|det B|`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Volume-to-noise ratio `V^{2/n} / σ²`.
    pub fn vnr(&self, sigma: f64) -> f64 {
        (2.0 * self.volume.ln() / self.n() as f64).exp() / (sigma * sigma)
    }

    /// Upper bound on the covering radius, `½·sqrt(Σ ‖b*_i‖²)` over the
    /// Gram-Schmidt vectors.
    pub fn covering_radius_bound(&self) -> f64 {
        let s: f64 = (0..self.n()).map(|i| self.r[(i, i)] * self.r[(i, i)]).sum();
        0.5 * s.sqrt()
    }

    /// Human-readable family name, e.g. `Zn:4`.
    pub fn name(&self) -> String {
        match self.family {
            Family::Zn => format!("Zn:{}", self.n()),
            Family::Dn => format!("Dn:{}", self.n()),
            Family::E8 => "E8".to_string(),
            Family::Custom => "custom".to_string(),
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: len,
            });
        }
        Ok(())
    }

    /// Basis coordinates `B^{-1} x`.
    pub fn coordinates(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok((&self.inverse * DVector::from_column_slice(x))
            .as_slice()
            .to_vec())
    }

    /// `B z` for integer coordinates.
    pub fn point(&self, z: &[i64]) -> Result<Vec<f64>> {
        self.check_dim(z.len())?;
        let zv = DVector::from_iterator(z.len(), z.iter().map(|v| *v as f64));
        Ok((&self.basis * zv).as_slice().to_vec())
    }

    /// Rounds the coordinates of a lattice vector to integers, failing if
    /// any coordinate is further than `1e-9` from an integer.
    pub fn integer_coordinates(&self, v: &[f64]) -> Result<Vec<i64>> {
        let u = self.coordinates(v)?;
        let mut out = Vec::with_capacity(u.len());
        for c in u {
            let r = c.round();
            let dev = (c - r).abs();
            if !(dev <= LATTICE_TOL) {
                return Err(Error::NotOnLattice { deviation: dev });
            }
            out.push(r as i64);
        }
        Ok(out)
    }

    /// Whether `v` lies on the lattice to within `1e-9` in basis coordinates.
    pub fn contains(&self, v: &[f64]) -> bool {
        self.integer_coordinates(v).is_ok()
    }

    /// Whether `self ⊂ other`. Uses exact integer bases when both lattices
    /// come from the same family, floating-point integrality otherwise.
    pub fn is_sublattice_of(&self, other: &LatticeBasis) -> bool {
        if self.n() != other.n() {
            return false;
        }
        if let (Some(a), Some(b)) = (&self.exact, &other.exact) {
            if a == b {
                let ratio = self.scale / other.scale;
                return (ratio - ratio.round()).abs() <= LATTICE_TOL * ratio.max(1.0)
                    && ratio.round() >= 1.0;
            }
        }
        let m = &other.inverse * &self.basis;
        m.iter().all(|v| (v - v.round()).abs() <= LATTICE_TOL)
    }

    /// Closest lattice point `Q_Λ(x)`.
    ///
    /// Ties are broken by round-half-to-even on the rounding step of the
    /// active decoder.
    pub fn nearest_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        match self.decoder {
            Decoder::CoordinateWise | Decoder::DnFast | Decoder::E8Fast => {
                let y: Vec<f64> = x.iter().map(|v| v / self.scale).collect();
                let q = match self.decoder {
                    Decoder::CoordinateWise => decode::round_zn(&y),
                    Decoder::DnFast => decode::round_dn(&y),
                    _ => decode::round_e8(&y),
                };
                Ok(q.into_iter().map(|v| v * self.scale).collect())
            }
            Decoder::Enumeration => {
                if self.n() > MAX_ENUMERATION_DIM {
                    return Err(Error::EnumerationGuard {
                        n: self.n(),
                        max: MAX_ENUMERATION_DIM,
                    });
                }
                let z = enumerate::closest_coordinates(self, x);
                self.point(&z)
            }
        }
    }

    /// `x mod R(Λ)` for the chosen fundamental region.
    pub fn mod_region(&self, x: &[f64], region: FundamentalRegion) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        match region {
            FundamentalRegion::Voronoi => {
                let q = self.nearest_point(x)?;
                Ok(x.iter().zip(&q).map(|(a, b)| a - b).collect())
            }
            FundamentalRegion::Parallelepiped => Ok(self.reduce_parallelepiped(x)),
        }
    }

    fn reduce_parallelepiped(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = DVector::from_column_slice(x);
        // A second pass absorbs rounding that pushes a coordinate just
        // outside [0, 1); the loop ends at a fixed point of the reduction.
        for _ in 0..4 {
            let u = &self.inverse * &cur;
            let k = u.map(|v| v.floor());
            if k.iter().all(|v| *v == 0.0) {
                break;
            }
            cur -= &self.basis * k;
        }
        cur.as_slice().to_vec()
    }

    /// Membership in the chosen fundamental region, with a `1e-9` slack on
    /// the parallelepiped faces.
    pub fn in_region(&self, x: &[f64], region: FundamentalRegion) -> Result<bool> {
        match region {
            FundamentalRegion::Parallelepiped => {
                let u = self.coordinates(x)?;
                Ok(u.iter()
                    .all(|v| *v >= -LATTICE_TOL && *v < 1.0 + LATTICE_TOL))
            }
            FundamentalRegion::Voronoi => {
                let q = self.nearest_point(x)?;
                let d0: f64 = x.iter().map(|v| v * v).sum();
                let dq: f64 = x.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok(d0 <= dq + LATTICE_TOL)
            }
        }
    }
}
