//! Problem parameters and the closed-form risk, rate and tail formulas.
//!
//! Rates are measured in bits per coordinate throughout; natural-log rates
//! `beta` convert via `beta = B ln 2`.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};

/// Largest accepted rate denominator.
pub const MAX_RATE_DENOMINATOR: u32 = 10_000;

/// A nonnegative rate in bits per coordinate, kept as a reduced fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct Rate {
    num: u32,
    den: u32,
}

impl Rate {
    pub const ZERO: Rate = Rate { num: 0, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 {
            return Err(domain("rate_b", "denominator must be at least 1"));
        }
        let g = num.gcd(&den);
        let (num, den) = (num / g, den / g);
        if den > MAX_RATE_DENOMINATOR {
            return Err(domain(
                "rate_b",
                format!("reduced denominator {den} exceeds {MAX_RATE_DENOMINATOR}"),
            ));
        }
        Ok(Rate { num, den })
    }

    pub fn integer(bits: u32) -> Self {
        Rate { num: bits, den: 1 }
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `n * B` as a reduced fraction `(p, q)`.
    pub fn total_bits(&self, n: usize) -> (u128, u128) {
        let p = n as u128 * self.num as u128;
        let q = self.den as u128;
        let g = p.gcd(&q);
        (p / g, q / g)
    }
}

impl TryFrom<[u32; 2]> for Rate {
    type Error = Error;

    fn try_from([num, den]: [u32; 2]) -> Result<Self> {
        Rate::new(num, den)
    }
}

impl From<Rate> for [u32; 2] {
    fn from(r: Rate) -> Self {
        [r.num, r.den]
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Parses `"3"`, `"1/2"` or a terminating decimal such as `"0.25"`.
impl FromStr for Rate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || domain("rate_b", format!("cannot parse {s:?} as a nonnegative rational"));
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num = a.trim().parse().map_err(|_| bad())?;
            let den = b.trim().parse().map_err(|_| bad())?;
            return Rate::new(num, den);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let frac = frac.trim_end_matches('0');
        let den = 10u64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let frac_v: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_v))
            .ok_or_else(bad)?;
        let g = num.gcd(&den);
        let (num, den) = (num / g, den / g);
        Rate::new(
            u32::try_from(num).map_err(|_| bad())?,
            u32::try_from(den).map_err(|_| bad())?,
        )
    }
}

/// One problem instance: dimension, rate, noise variance, squared radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub rate: Rate,
    pub sigma2: f64,
    pub c2: f64,
}

impl ModelParams {
    pub fn new(n: usize, rate: Rate, sigma2: f64, c2: f64) -> Result<Self> {
        let p = ModelParams { n, rate, sigma2, c2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(domain("n", "must be at least 1"));
        }
        positive("sigma2", self.sigma2)?;
        positive("c2", self.c2)?;
        Ok(())
    }
}

/// A finite real sequence (mean vector, observation or estimate).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(domain("vector", format!("coordinate {i} is not finite")));
        }
        Ok(Vector(coords))
    }

    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    /// Wraps coordinates that are finite by construction.
    pub(crate) fn from_finite(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|v| v.is_finite()));
        Vector(coords)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.0)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn positive(param: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(domain(param, format!("must be positive and finite, got {v}")))
    }
}

fn nonneg_rate(rate_b: f64) -> Result<()> {
    if rate_b >= 0.0 {
        Ok(())
    } else {
        Err(domain("rate_b", format!("must be nonnegative, got {rate_b}")))
    }
}

fn open_unit(param: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(domain(param, format!("must lie in (0, 1), got {v}")))
    }
}

/// Limiting minimax risk over the ball without quantization, `s c / (s + c)`.
pub fn pinsker_risk(sigma2: f64, c2: f64) -> Result<f64> {
    positive("sigma2", sigma2)?;
    positive("c2", c2)?;
    Ok(sigma2 * c2 / (sigma2 + c2))
}

/// Quantized minimax risk at rate `B` for signal energy `b2`:
/// `s b/(s+b) + b^2 2^{-2B}/(s+b)` with `s = sigma2`.
///
/// `rate_b = +inf` gives the unquantized limit.
pub fn quantized_risk_bound(rate_b: f64, sigma2: f64, b2: f64) -> Result<f64> {
    nonneg_rate(rate_b)?;
    positive("sigma2", sigma2)?;
    if !(b2.is_finite() && b2 >= 0.0) {
        return Err(domain("b2", format!("must be nonnegative and finite, got {b2}")));
    }
    let total = sigma2 + b2;
    Ok(sigma2 * b2 / total + b2 * b2 * (-2.0 * rate_b).exp2() / total)
}

/// Gaussian distortion-rate function `sigma2 2^{-2B}`.
pub fn distortion_rate_gaussian(rate_b: f64, sigma2: f64) -> Result<f64> {
    nonneg_rate(rate_b)?;
    positive("sigma2", sigma2)?;
    Ok(sigma2 * (-2.0 * rate_b).exp2())
}

/// Minimum rate needed to reach risk `d`; inverse of [`quantized_risk_bound`].
///
/// Returns 0 for `d` at or above the zero-rate risk `c2`.
pub fn rate_lower_bound(d: f64, sigma2: f64, c2: f64) -> Result<f64> {
    let floor = pinsker_risk(sigma2, c2)?;
    if d.is_nan() || d <= floor {
        return Err(domain(
            "D",
            format!("must exceed the unquantized risk {floor} (infinite rate otherwise), got {d}"),
        ));
    }
    let excess_scale = c2 * c2 / (sigma2 + c2);
    let excess = d - floor;
    if excess >= excess_scale {
        return Ok(0.0);
    }
    Ok(0.5 * (excess_scale / excess).log2())
}

/// Per-coordinate squared error `(1/n) sum (x_i - y_i)^2`.
pub fn distortion(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Usage(format!(
            "distortion needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Usage("distortion of empty vectors".into()));
    }
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / x.len() as f64)
}

/// `P(|mean(Z_i^2) - 1| > t) <= 2 exp(-n t^2 / 8)` for `t` in `(0, 1)`.
pub fn chi2_mean_tail_bound(n: usize, t: f64) -> Result<f64> {
    open_unit("t", t)?;
    Ok(2.0 * (-(n as f64) * t * t / 8.0).exp())
}

/// Tail bound for `|(1/n)||X||^2 - b2 - sigma2| >= t` with `||theta||^2/n = b2`.
pub fn bhat_concentration_bound(n: usize, t: f64, sigma2: f64, b2: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(domain("t", format!("must be positive, got {t}")));
    }
    positive("sigma2", sigma2)?;
    if !(b2 >= 0.0 && b2.is_finite()) {
        return Err(domain("b2", format!("must be nonnegative, got {b2}")));
    }
    let nf = n as f64;
    let noise = 2.0 * (-nf * t * t / (32.0 * sigma2 * sigma2)).exp();
    if b2 == 0.0 {
        return Ok(noise);
    }
    let sigma_b = (sigma2 * b2).sqrt();
    let cross = 8.0 * sigma_b / (2.0 * std::f64::consts::PI * nf * t * t).sqrt()
        * (-nf * t * t / (32.0 * sigma2 * b2)).exp();
    Ok(noise + cross)
}

/// Density of `<x, Y>` for fixed unit `x` and `Y` uniform on the sphere in `R^n`.
pub fn sphere_inner_density(rho: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(domain("n", format!("must be at least 2, got {n}")));
    }
    if rho.is_nan() || rho.abs() >= 1.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let log_norm = ln_gamma(nf / 2.0) - ln_gamma((nf - 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln();
    let log_kernel = (nf - 3.0) / 2.0 * (1.0 - rho * rho).ln();
    Ok((log_norm + log_kernel).exp())
}

/// Limit of the largest inner product with `2^{nB}` random unit vectors:
/// `sqrt(1 - 2^{-2B})`.
pub fn extreme_angle_limit(rate_b: f64) -> Result<f64> {
    nonneg_rate(rate_b)?;
    Ok((1.0 - (-2.0 * rate_b).exp2()).sqrt())
}

/// Near-orthogonality tail `K sqrt(n) (1 - eps^2)^{(n-2)/2}`.
pub fn orthogonality_tail(n: usize, eps: f64, k_const: f64) -> Result<f64> {
    if n < 2 {
        return Err(domain("n", format!("must be at least 2, got {n}")));
    }
    open_unit("eps", eps)?;
    positive("k_const", k_const)?;
    let nf = n as f64;
    Ok(k_const * nf.sqrt() * ((nf - 2.0) / 2.0 * (1.0 - eps * eps).ln()).exp())
}

/// Mass of the `N(0, c^2 delta^2 I)` prior outside the ball of energy `c^2`.
pub fn prior_tail_bound(n: usize, delta: f64) -> Result<f64> {
    open_unit("delta", delta)?;
    let d2 = delta * delta;
    let gap = 1.0 - d2;
    Ok(2.0 * (-(n as f64) * gap * gap / (8.0 * d2 * d2)).exp())
}
