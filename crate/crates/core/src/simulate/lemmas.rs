//! Empirical checks of the concentration and geometry lemmas against their
//! analytic bounds.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use super::{mean_and_sd, pairwise_sum};
use crate::codebook::rng::{derive_seed, fill_gaussian_block, tag};
use crate::codebook::{codeword, codeword_count, search_direction};
use crate::error::{domain, Error, Result};
use crate::estimator::{sample_mean_on_sphere, sample_observation, sample_testdist};
use crate::theory::{
    bhat_concentration_bound, chi2_mean_tail_bound, distortion, dot, extreme_angle_limit, norm2,
    orthogonality_tail, pinsker_risk, prior_tail_bound, sphere_inner_density, Rate,
};

pub const DEFAULT_SEED: u64 = 20_240_611;

/// Multiplier on the Monte Carlo standard error allowed above a bound.
pub const MC_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    Chi2Tail,
    BhatConcentration,
    SphereDensity,
    ExtremeAngle,
    Orthogonality,
    PriorTail,
    TestdistMoments,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Chi2Tail,
        Suite::BhatConcentration,
        Suite::SphereDensity,
        Suite::ExtremeAngle,
        Suite::Orthogonality,
        Suite::PriorTail,
        Suite::TestdistMoments,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Chi2Tail => "chi2-tail",
            Suite::BhatConcentration => "bhat-concentration",
            Suite::SphereDensity => "sphere-density",
            Suite::ExtremeAngle => "extreme-angle",
            Suite::Orthogonality => "orthogonality",
            Suite::PriorTail => "prior-tail",
            Suite::TestdistMoments => "testdist-moments",
        }
    }

    fn id(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
            Error::Usage(format!(
                "unknown suite {s:?}; expected one of {} or all",
                names.join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relation {
    /// `observed <= reference + allowance`
    AtMost,
    /// `|observed - reference| <= allowance`
    Near,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub observed: f64,
    pub reference: f64,
    pub allowance: f64,
    pub relation: Relation,
}

impl Check {
    pub fn at_most(label: impl Into<String>, observed: f64, bound: f64, allowance: f64) -> Self {
        Check {
            label: label.into(),
            observed,
            reference: bound,
            allowance,
            relation: Relation::AtMost,
        }
    }

    pub fn near(label: impl Into<String>, observed: f64, target: f64, tol: f64) -> Self {
        Check {
            label: label.into(),
            observed,
            reference: target,
            allowance: tol,
            relation: Relation::Near,
        }
    }

    pub fn passed(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.observed <= self.reference + self.allowance,
            Relation::Near => (self.observed - self.reference).abs() <= self.allowance,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "ok  " } else { "FAIL" };
        let op = match self.relation {
            Relation::AtMost => "<=",
            Relation::Near => "~=",
        };
        write!(
            f,
            "{verdict} {}: {:.6} {op} {:.6} (allowance {:.2e})",
            self.label, self.observed, self.reference, self.allowance
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        writeln!(f, "{verdict} {} ({} checks)", self.suite, self.checks.len())?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        Ok(())
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let seed = derive_seed(seed, &[tag::LEMMA, suite.id()]);
    let checks = match suite {
        Suite::Chi2Tail => chi2_tail(seed)?,
        Suite::BhatConcentration => bhat_concentration(seed)?,
        Suite::SphereDensity => sphere_density(seed)?,
        Suite::ExtremeAngle => extreme_angle(seed)?,
        Suite::Orthogonality => orthogonality(seed)?,
        Suite::PriorTail => prior_tail(seed)?,
        Suite::TestdistMoments => testdist_moments(seed)?,
    };
    Ok(SuiteReport { suite, checks })
}

pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Suite::ALL.into_iter().map(|s| run_suite(s, seed)).collect()
}

fn binomial_se(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}

/// Per-replicate statistic computed from `n` standard normals.
fn gaussian_statistic<F>(seed: u64, n: usize, reps: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..reps)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, r| {
                fill_gaussian_block(seed, r as u64, buf);
                f(buf)
            },
        )
        .collect()
}

fn frequency_above(values: &[f64], t: f64) -> f64 {
    values.iter().filter(|&&v| v > t).count() as f64 / values.len() as f64
}

const TAIL_NS: [usize; 3] = [16, 64, 256];
const TAIL_TS: [f64; 3] = [0.2, 0.4, 0.6];

fn chi2_tail(seed: u64) -> Result<Vec<Check>> {
    const REPS: usize = 100_000;
    let mut checks = Vec::new();
    for n in TAIL_NS {
        let dev = gaussian_statistic(derive_seed(seed, &[n as u64]), n, REPS, |z| {
            (norm2(z) / z.len() as f64 - 1.0).abs()
        });
        for t in TAIL_TS {
            let p = frequency_above(&dev, t);
            checks.push(Check::at_most(
                format!("P(|mean(Z^2) - 1| > {t}) at n = {n}"),
                p,
                chi2_mean_tail_bound(n, t)?,
                MC_SIGMAS * binomial_se(p, REPS),
            ));
        }
    }
    Ok(checks)
}

fn bhat_concentration(seed: u64) -> Result<Vec<Check>> {
    const REPS: usize = 20_000;
    let sigma2 = 1.0;
    let mut checks = Vec::new();
    for b2 in [0.0f64, 1.0] {
        for n in TAIL_NS {
            let cfg = derive_seed(seed, &[n as u64, b2.to_bits()]);
            let theta = sample_mean_on_sphere(n, b2, cfg)?;
            let dev: Vec<f64> = (0..REPS)
                .into_par_iter()
                .map(|r| {
                    let x = sample_observation(&theta, sigma2, derive_seed(cfg, &[r as u64]))?;
                    Ok((norm2(&x) / n as f64 - sigma2 - b2).abs())
                })
                .collect::<Result<_>>()?;
            for t in TAIL_TS {
                let p = frequency_above(&dev, t);
                checks.push(Check::at_most(
                    format!("P(|bhat2 - b2| > {t}) at n = {n}, b2 = {b2}"),
                    p,
                    bhat_concentration_bound(n, t, sigma2, b2)?,
                    MC_SIGMAS * binomial_se(p, REPS),
                ));
            }
        }
    }
    Ok(checks)
}

fn prior_tail(seed: u64) -> Result<Vec<Check>> {
    const REPS: usize = 20_000;
    let mut checks = Vec::new();
    for delta in [0.8f64, 0.9, 0.95] {
        for n in TAIL_NS {
            // theta_i = delta c Z_i leaves the ball when mean(Z^2) > 1 / delta^2
            let cfg = derive_seed(seed, &[n as u64, delta.to_bits()]);
            let energy = gaussian_statistic(cfg, n, REPS, |z| delta * delta * norm2(z) / z.len() as f64);
            let p = frequency_above(&energy, 1.0);
            checks.push(Check::at_most(
                format!("prior mass outside the ball at n = {n}, delta = {delta}"),
                p,
                prior_tail_bound(n, delta)?,
                MC_SIGMAS * binomial_se(p, REPS),
            ));
        }
    }
    Ok(checks)
}

/// `integral over (lo, hi) of f` by the composite midpoint rule.
pub fn midpoint_integral(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
    let h = (hi - lo) / steps as f64;
    let v: Vec<f64> = (0..steps).map(|k| f(lo + (k as f64 + 0.5) * h)).collect();
    h * pairwise_sum(&v)
}

/// Mass and second moment of the inner-product density, integrated over
/// `rho = sin(phi)` to absorb the endpoint singularity at `n = 2`.
pub fn sphere_density_moments(n: usize) -> Result<(f64, f64)> {
    sphere_inner_density(0.0, n)?;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let moment = |power: i32| {
        midpoint_integral(
            |phi| {
                let rho = phi.sin();
                sphere_inner_density(rho, n).unwrap() * phi.cos() * rho.powi(power)
            },
            -half_pi,
            half_pi,
            200_000,
        )
    };
    Ok((moment(0), moment(2)))
}

fn sphere_density(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for n in [2, 3, 5, 10, 50] {
        let (mass, second) = sphere_density_moments(n)?;
        checks.push(Check::near(format!("density mass at n = {n}"), mass, 1.0, 1e-9));
        checks.push(Check::near(
            format!("density second moment at n = {n}"),
            second,
            1.0 / n as f64,
            1e-6,
        ));
    }
    const REPS: usize = 20_000;
    for n in [3, 10, 50] {
        let cb = derive_seed(seed, &[n as u64]);
        let sq: Vec<f64> = (0..REPS as u64)
            .into_par_iter()
            .map(|i| codeword(cb, i, n)[0].powi(2))
            .collect();
        let (m, sd) = mean_and_sd(&sq);
        checks.push(Check::near(
            format!("empirical E rho^2 of codewords at n = {n}"),
            m,
            1.0 / n as f64,
            MC_SIGMAS * sd / (REPS as f64).sqrt(),
        ));
    }
    Ok(checks)
}

/// Exact `E max_i <u, U_i>` over `count` independent uniform points
/// `U_i` on the sphere in dimension `n`, for any fixed unit `u`.
pub fn expected_max_inner(n: usize, count: u64) -> Result<f64> {
    if n < 2 {
        return Err(domain("n", format!("needs n >= 2, got {n}")));
    }
    if count == 0 {
        return Err(domain("count", "must be at least 1"));
    }
    let a = (n as f64 - 1.0) / 2.0;
    let cdf_pow = |u: f64| {
        let f = beta_reg(a, a, ((1.0 + u) / 2.0).clamp(0.0, 1.0));
        (count as f64 * f.ln()).exp()
    };
    Ok(1.0 - midpoint_integral(cdf_pow, -1.0, 1.0, 40_000))
}

/// Normalized maximum inner product between a random direction and the
/// `floor(2^{nB})` codewords of a random codebook.
pub fn max_normalized_inner(n: usize, rate: Rate, seed: u64) -> Result<f64> {
    let count = codeword_count(n, rate)?;
    let mut x = vec![0.0; n];
    fill_gaussian_block(derive_seed(seed, &[tag::THETA]), 0, &mut x);
    let hit = search_direction(&x, derive_seed(seed, &[tag::CODEBOOK]), count)?;
    Ok(hit.inner / norm2(&x).sqrt())
}

/// `max_normalized_inner` for `trials` independent seeds derived from `seed`.
pub fn max_inner_trials(n: usize, rate: Rate, trials: usize, seed: u64) -> Result<Vec<f64>> {
    (0..trials)
        .map(|t| {
            max_normalized_inner(
                n,
                rate,
                derive_seed(seed, &[n as u64, rate.num() as u64, rate.den() as u64, t as u64]),
            )
        })
        .collect()
}

/// Tolerance on the distance between the mean maximum and its limit.
pub const EXTREME_ANGLE_TOL: f64 = 0.08;

fn extreme_angle(seed: u64) -> Result<Vec<Check>> {
    const TRIALS: usize = 20;
    let mut checks = Vec::new();
    for (n, num, den) in [(16, 1, 1), (24, 1, 2), (32, 1, 2)] {
        let rate = Rate::new(num, den)?;
        let v = max_inner_trials(n, rate, TRIALS, seed)?;
        let (m, sd) = mean_and_sd(&v);
        let exact = expected_max_inner(n, codeword_count(n, rate)?)?;
        checks.push(Check::near(
            format!("mean max inner vs finite-n expectation at n = {n}, B = {rate}"),
            m,
            exact,
            MC_SIGMAS * sd / (TRIALS as f64).sqrt(),
        ));
        checks.push(Check::near(
            format!("mean max inner vs limit at n = {n}, B = {rate}"),
            m,
            extreme_angle_limit(rate.as_f64())?,
            EXTREME_ANGLE_TOL,
        ));
    }
    Ok(checks)
}

/// Constant used for the near-orthogonality bound.
pub const ORTHOGONALITY_K: f64 = 1.0;

fn orthogonality(seed: u64) -> Result<Vec<Check>> {
    const REPS: usize = 20_000;
    let mut checks = Vec::new();
    for n in [16, 64] {
        let cfg = derive_seed(seed, &[n as u64]);
        let rho: Vec<f64> = (0..REPS as u64)
            .into_par_iter()
            .map(|i| dot(&codeword(cfg, 2 * i, n), &codeword(cfg, 2 * i + 1, n)).abs())
            .collect();
        for eps in [0.2, 0.3, 0.5] {
            let p = frequency_above(&rho, eps);
            checks.push(Check::at_most(
                format!("P(|<U, V>| > {eps}) at n = {n}"),
                p,
                orthogonality_tail(n, eps, ORTHOGONALITY_K)?,
                MC_SIGMAS * binomial_se(p, REPS),
            ));
        }
    }
    Ok(checks)
}

fn testdist_moments(seed: u64) -> Result<Vec<Check>> {
    const N: usize = 50;
    const REPS: usize = 10_000;
    let (sigma2, c2) = (1.0, 1.0);
    let floor = pinsker_risk(sigma2, c2)?;
    let gamma = c2 / (sigma2 + c2);
    let mut checks = Vec::new();
    for d in [0.6f64, 0.75, 0.9] {
        let cfg = derive_seed(seed, &[d.to_bits()]);
        let rows: Vec<(f64, f64, f64)> = (0..REPS as u64)
            .into_par_iter()
            .map(|r| {
                let t = sample_testdist(N, d, sigma2, c2, derive_seed(cfg, &[r]))?;
                let shrunk: Vec<f64> = t.x.iter().map(|v| gamma * v).collect();
                Ok((
                    distortion(&t.theta, &t.theta_tilde)?,
                    distortion(&t.theta, &shrunk)?,
                    norm2(&t.theta) / N as f64,
                ))
            })
            .collect::<Result<_>>()?;
        let se = |v: &[f64]| {
            let (m, sd) = mean_and_sd(v);
            (m, MC_SIGMAS * sd / (v.len() as f64).sqrt())
        };
        let col = |k: usize| -> Vec<f64> { rows.iter().map(|r| [r.0, r.1, r.2][k]).collect() };
        let (m0, a0) = se(&col(0));
        let (m1, a1) = se(&col(1));
        let (m2, a2) = se(&col(2));
        checks.push(Check::near(
            format!("E d(theta, theta_tilde) at D = {d}"),
            m0,
            d,
            a0,
        ));
        checks.push(Check::near(
            format!("E d(theta, gamma x) at D = {d}"),
            m1,
            floor,
            a1,
        ));
        checks.push(Check::near(format!("E |theta|^2 / n at D = {d}"), m2, c2, a2));
    }
    Ok(checks)
}
