//! Fast nearest-point decoders for the root lattices, on unscaled
//! coordinates (Conway and Sloane's round-and-repair constructions).

pub(crate) fn round_zn(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.round_ties_even()).collect()
}

/// Nearest point of `D_n`: round every coordinate, and if the sum is odd,
/// re-round the coordinate with the largest rounding error the other way.
pub(crate) fn round_dn(x: &[f64]) -> Vec<f64> {
    let mut f = round_zn(x);
    let sum: f64 = f.iter().sum();
    if sum.rem_euclid(2.0) == 0.0 {
        return f;
    }
    let mut worst = 0;
    let mut worst_err = -1.0;
    for (i, (xi, fi)) in x.iter().zip(&f).enumerate() {
        let e = (xi - fi).abs();
        if e > worst_err {
            worst_err = e;
            worst = i;
        }
    }
    if x[worst] >= f[worst] {
        f[worst] += 1.0;
    } else {
        f[worst] -= 1.0;
    }
    f
}

/// Nearest point of `E_8 = D_8 ∪ (D_8 + ½)`.
pub(crate) fn round_e8(x: &[f64]) -> Vec<f64> {
    let a = round_dn(x);
    let shifted: Vec<f64> = x.iter().map(|v| v - 0.5).collect();
    let b: Vec<f64> = round_dn(&shifted).into_iter().map(|v| v + 0.5).collect();
    let da: f64 = x.iter().zip(&a).map(|(p, q)| (p - q) * (p - q)).sum();
    let db: f64 = x.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
    if db < da {
        b
    } else {
        a
    }
}
