//! Branch-free `ln` and `sin/cos` kernels for the Box-Muller transform.
//!
//! Only plain IEEE-754 multiply and add are used (no fused operations), so
//! every target produces the same bits and the lane loops vectorize.

const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Natural log for positive normal inputs.
#[inline(always)]
pub fn ln_normal(x: f64) -> f64 {
    let bits = x.to_bits();
    let mut e = ((bits >> 52) & 0x7ff) as i64 - 1023;
    let mut m = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | 0x3ff0_0000_0000_0000);
    // m in [1, 2) -> [sqrt(1/2), sqrt(2))
    let big = m > SQRT2;
    m = if big { m * 0.5 } else { m };
    e += big as i64;
    let s = (m - 1.0) / (m + 1.0);
    let s2 = s * s;
    // 2 atanh(s) = 2 (s + s^3/3 + ... + s^21/21), |s| <= 0.1716
    let mut p = 1.0 / 21.0;
    p = p * s2 + 1.0 / 19.0;
    p = p * s2 + 1.0 / 17.0;
    p = p * s2 + 1.0 / 15.0;
    p = p * s2 + 1.0 / 13.0;
    p = p * s2 + 1.0 / 11.0;
    p = p * s2 + 1.0 / 9.0;
    p = p * s2 + 1.0 / 7.0;
    p = p * s2 + 1.0 / 5.0;
    p = p * s2 + 1.0 / 3.0;
    let ln_m = 2.0 * s + 2.0 * s * (s2 * p);
    let ef = e as f64;
    ef * LN2_HI + (ln_m + ef * LN2_LO)
}

/// Returns `(sin(2 pi u), cos(2 pi u))` for `u` in `[0, 1]`.
#[inline(always)]
pub fn sin_cos_turns(u: f64) -> (f64, f64) {
    // Quarter-turn reduction; u - q/4 is exact for u on the 2^-54 grid.
    let q = (u * 4.0 + 0.5).floor();
    let r = u - q * 0.25;
    let a = r * std::f64::consts::TAU;
    let a2 = a * a;
    let mut sp = -1.0 / 355_687_428_096_000.0; // -1/17!
    sp = sp * a2 + 1.0 / 1_307_674_368_000.0;
    sp = sp * a2 - 1.0 / 6_227_020_800.0;
    sp = sp * a2 + 1.0 / 39_916_800.0;
    sp = sp * a2 - 1.0 / 362_880.0;
    sp = sp * a2 + 1.0 / 5_040.0;
    sp = sp * a2 - 1.0 / 120.0;
    sp = sp * a2 + 1.0 / 6.0;
    let s = a - a * (a2 * sp);
    let mut cp = 1.0 / 6_402_373_705_728_000.0; // 1/18!
    cp = cp * a2 - 1.0 / 20_922_789_888_000.0;
    cp = cp * a2 + 1.0 / 87_178_291_200.0;
    cp = cp * a2 - 1.0 / 479_001_600.0;
    cp = cp * a2 + 1.0 / 3_628_800.0;
    cp = cp * a2 - 1.0 / 40_320.0;
    cp = cp * a2 + 1.0 / 720.0;
    cp = cp * a2 - 1.0 / 24.0;
    cp = cp * a2 + 0.5;
    let c = 1.0 - a2 * cp;
    let quadrant = (q as i64) & 3;
    let swap = quadrant & 1 == 1;
    let (s1, c1) = if swap { (c, s) } else { (s, c) };
    let neg_sin = quadrant >= 2;
    let neg_cos = quadrant == 1 || quadrant == 2;
    (if neg_sin { -s1 } else { s1 }, if neg_cos { -c1 } else { c1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn ln_matches_libm() {
        let mut worst: f64 = 0.0;
        for k in 1..200_000u64 {
            let x = (k as f64 + 0.5) / 200_000.0;
            worst = worst.max((ln_normal(x) - x.ln()).abs());
        }
        for &x in &[
            1.0 - 1e-16,
            1e-300,
            5e-17,
            0.5,
            FRAC_1_SQRT_2 - 1e-9,
            FRAC_1_SQRT_2 + 1e-9,
        ] {
            worst = worst.max((ln_normal(x) - x.ln()).abs() / x.ln().abs().max(1.0));
        }
        assert!(worst < 1e-14, "worst {worst}");
    }

    #[test]
    fn sin_cos_matches_libm() {
        let mut worst: f64 = 0.0;
        for k in 0..=400_000u64 {
            let u = k as f64 / 400_000.0;
            let (s, c) = sin_cos_turns(u);
            let a = std::f64::consts::TAU * u;
            worst = worst.max((s - a.sin()).abs()).max((c - a.cos()).abs());
        }
        assert!(worst < 1e-14, "worst {worst}");
    }
}
