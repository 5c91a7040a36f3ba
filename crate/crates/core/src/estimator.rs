//! The two-part quantized estimator, baseline shrinkage estimators, data
//! samplers, and the three-term loss decomposition.

use crate::codebook::rng::{self, tag};
use crate::codebook::{self, codeword, codeword_count, MagnitudeGrid};
use crate::error::{domain, Error, Result};
use crate::theory::{self, dot, norm2, pinsker_risk, ModelParams, Vector};

/// The transmitted pair plus the codebook seed it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedIndex {
    pub mag_index: u64,
    pub dir_index: u64,
    pub seed: u64,
}

impl QuantizedIndex {
    /// Checks both indices against the codebooks implied by `params`.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let grid = MagnitudeGrid::new(params.n, params.c2)?;
        if self.mag_index >= grid.size() {
            return Err(Error::Usage(format!(
                "magnitude index {} out of range for grid of size {}",
                self.mag_index,
                grid.size()
            )));
        }
        let count = codeword_count(params.n, params.rate)?;
        if self.dir_index >= count {
            return Err(Error::Usage(format!(
                "direction index {} out of range for codebook of size {count}",
                self.dir_index
            )));
        }
        Ok(())
    }
}

/// Encoder output with the diagnostics the CLI reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encoded {
    pub index: QuantizedIndex,
    pub bhat2: f64,
    /// `<x, codeword>` for the chosen codeword.
    pub inner: f64,
}

/// Three-term split of the realized loss around the shrinkage estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossDecomposition {
    /// Quantization term `||check - gamma x||^2 / n`.
    pub a1: f64,
    /// Shrinkage term `||gamma x - theta||^2 / n`.
    pub a2: f64,
    /// Cross term `(2/n) <check - gamma x, gamma x - theta>`.
    pub a3: f64,
    pub total: f64,
    pub gamma_hat: f64,
}

/// `||x||^2 / n - sigma2`; negative values are returned as is.
pub fn estimate_b2(x: &[f64], sigma2: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Usage("cannot estimate b2 from an empty vector".into()));
    }
    Ok(norm2(x) / x.len() as f64 - sigma2)
}

fn check_len(x: &[f64], params: &ModelParams) -> Result<()> {
    if x.len() != params.n {
        return Err(Error::Usage(format!(
            "observation has length {}, parameters say n = {}",
            x.len(),
            params.n
        )));
    }
    Ok(())
}

/// Encodes the magnitude and direction of `x`.
pub fn quantized_encode(x: &[f64], params: &ModelParams, seed: u64) -> Result<QuantizedIndex> {
    encode_with_report(x, params, seed).map(|e| e.index)
}

/// [`quantized_encode`] plus the estimated magnitude and achieved inner
/// product. A zero observation ties every codeword at 0 and takes index 0.
pub fn encode_with_report(x: &[f64], params: &ModelParams, seed: u64) -> Result<Encoded> {
    params.validate()?;
    check_len(x, params)?;
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(domain("x", format!("coordinate {i} is not finite")));
    }
    let grid = MagnitudeGrid::new(params.n, params.c2)?;
    let count = codeword_count(params.n, params.rate)?;
    let bhat2 = estimate_b2(x, params.sigma2)?;
    let mag_index = grid.encode(bhat2)?;
    let hit = if x.iter().all(|&v| v == 0.0) {
        codebook::SearchHit { index: 0, inner: 0.0 }
    } else {
        codebook::search_direction(x, seed, count)?
    };
    Ok(Encoded {
        index: QuantizedIndex {
            mag_index,
            dir_index: hit.index,
            seed,
        },
        bhat2,
        inner: hit.inner,
    })
}

/// Squared per-coordinate norm of the decoded estimate,
/// `b^4 (1 - 2^{-2B}) / (b^2 + sigma2)` for grid value `b^2 = b2_check`.
pub fn decoded_energy(b2_check: f64, params: &ModelParams) -> f64 {
    let keep = 1.0 - (-2.0 * params.rate.as_f64()).exp2();
    b2_check * b2_check * keep / (b2_check + params.sigma2)
}

/// Rebuilds the estimate from the transmitted indices.
pub fn quantized_decode(idx: &QuantizedIndex, params: &ModelParams) -> Result<Vector> {
    params.validate()?;
    idx.validate(params)?;
    let grid = MagnitudeGrid::new(params.n, params.c2)?;
    let b2_check = grid.decode(idx.mag_index)?;
    let scale = (params.n as f64 * decoded_energy(b2_check, params)).sqrt();
    let mut v = codeword(idx.seed, idx.dir_index, params.n).into_inner();
    for c in &mut v {
        *c *= scale;
    }
    Ok(Vector::from_finite(v))
}

/// Encode then decode.
pub fn quantized_estimate(x: &[f64], params: &ModelParams, seed: u64) -> Result<Vector> {
    let idx = quantized_encode(x, params, seed)?;
    quantized_decode(&idx, params)
}

fn scaled(x: &[f64], factor: f64) -> Vector {
    Vector::from_finite(x.iter().map(|v| v * factor).collect())
}

/// `(1 - (n - 2) sigma2 / ||x||^2) x`, without positive-part clamping.
pub fn james_stein(x: &[f64], sigma2: f64) -> Result<Vector> {
    if x.len() < 3 {
        return Err(domain("n", format!("James-Stein needs n >= 3, got {}", x.len())));
    }
    let s = norm2(x);
    if s == 0.0 {
        return Err(domain("x", "James-Stein is undefined at the zero vector"));
    }
    Ok(scaled(x, 1.0 - (x.len() as f64 - 2.0) * sigma2 / s))
}

/// `gamma x` with `gamma = b / (b + sigma2)` and `b = max(bhat2, 0)`.
pub fn linear_shrinkage(x: &[f64], sigma2: f64) -> Result<Vector> {
    let b = estimate_b2(x, sigma2)?.max(0.0);
    Ok(scaled(x, b / (b + sigma2)))
}

/// Splits `distortion(theta, theta_check)` into quantization, shrinkage and
/// cross terms around `gamma x` with the unclamped `gamma = bhat2 / (bhat2 + sigma2)`.
pub fn loss_decomposition(
    theta: &[f64],
    x: &[f64],
    theta_check: &[f64],
    sigma2: f64,
) -> Result<LossDecomposition> {
    let n = theta.len();
    if x.len() != n || theta_check.len() != n {
        return Err(Error::Usage(format!(
            "loss decomposition needs equal lengths, got {}, {}, {}",
            n,
            x.len(),
            theta_check.len()
        )));
    }
    let x2 = norm2(x) / n as f64;
    let gamma_hat = if x2 > 0.0 { (x2 - sigma2) / x2 } else { 0.0 };
    let shrunk: Vec<f64> = x.iter().map(|v| gamma_hat * v).collect();
    let quant_err: Vec<f64> = theta_check.iter().zip(&shrunk).map(|(c, s)| c - s).collect();
    let shrink_err: Vec<f64> = shrunk.iter().zip(theta).map(|(s, t)| s - t).collect();
    let nf = n as f64;
    Ok(LossDecomposition {
        a1: norm2(&quant_err) / nf,
        a2: norm2(&shrink_err) / nf,
        a3: 2.0 * dot(&quant_err, &shrink_err) / nf,
        total: theory::distortion(theta, theta_check)?,
        gamma_hat,
    })
}

fn gaussian_vector(seed: u64, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    rng::fill_gaussian_block(seed, 0, &mut v);
    v
}

/// Mean vector drawn uniformly from the sphere `||theta||^2 / n = b2`.
pub fn sample_mean_on_sphere(n: usize, b2: f64, seed: u64) -> Result<Vector> {
    if n == 0 {
        return Err(domain("n", "must be at least 1"));
    }
    if !(b2 >= 0.0 && b2.is_finite()) {
        return Err(domain("b2", format!("must be nonnegative, got {b2}")));
    }
    if b2 == 0.0 {
        return Ok(Vector::zeros(n));
    }
    let dir = codeword(rng::derive_seed(seed, &[tag::THETA]), 0, n);
    Ok(scaled(&dir, (n as f64 * b2).sqrt()))
}

/// `theta + N(0, sigma2 I)` noise.
pub fn sample_observation(theta: &[f64], sigma2: f64, seed: u64) -> Result<Vector> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(domain("sigma2", format!("must be positive, got {sigma2}")));
    }
    let sd = sigma2.sqrt();
    let noise = gaussian_vector(rng::derive_seed(seed, &[tag::NOISE]), theta.len());
    Ok(Vector::from_finite(
        theta.iter().zip(noise).map(|(t, z)| t + sd * z).collect(),
    ))
}

/// One joint draw from the Gaussian chain that attains the rate bound.
#[derive(Debug, Clone, PartialEq)]
pub struct TestDraw {
    pub theta: Vector,
    pub x: Vector,
    pub theta_tilde: Vector,
}

/// Samples `(theta, x, theta_tilde)` with `theta ~ N(0, c2 I)`,
/// `x | theta ~ N(theta, sigma2 I)` and `E d(theta, theta_tilde) = d`.
///
/// With `gamma = c2 / (sigma2 + c2)` and `e = (d - pinsker) / gamma^2`:
/// `theta_tilde ~ N(0, gamma^2 (sigma2 + c2 - e))`,
/// `x ~ N(theta_tilde / gamma, e)`, `theta ~ N(gamma x, gamma sigma2)`.
/// Requires `pinsker < d <= c2`.
pub fn sample_testdist(n: usize, d: f64, sigma2: f64, c2: f64, seed: u64) -> Result<TestDraw> {
    let floor = pinsker_risk(sigma2, c2)?;
    if n == 0 {
        return Err(domain("n", "must be at least 1"));
    }
    if !(d > floor && d <= c2) {
        return Err(domain(
            "D",
            format!("must lie in ({floor}, {c2}] for sigma2 = {sigma2}, c2 = {c2}, got {d}"),
        ));
    }
    let gamma = c2 / (sigma2 + c2);
    let inner_var = (d - floor) / (gamma * gamma);
    let tilde_sd = (gamma * gamma * (sigma2 + c2 - inner_var)).max(0.0).sqrt();
    let x_sd = inner_var.sqrt();
    let theta_sd = (gamma * sigma2).sqrt();
    let base = rng::derive_seed(seed, &[tag::TESTDIST]);
    let z = |k: u64| gaussian_vector(rng::derive_seed(base, &[k]), n);
    let theta_tilde: Vec<f64> = z(0).into_iter().map(|v| tilde_sd * v).collect();
    let x: Vec<f64> = theta_tilde
        .iter()
        .zip(z(1))
        .map(|(t, v)| t / gamma + x_sd * v)
        .collect();
    let theta: Vec<f64> = x
        .iter()
        .zip(z(2))
        .map(|(xi, v)| gamma * xi + theta_sd * v)
        .collect();
    Ok(TestDraw {
        theta: Vector::from_finite(theta),
        x: Vector::from_finite(x),
        theta_tilde: Vector::from_finite(theta_tilde),
    })
}
