//! Monte Carlo harness: MSE-versus-n grids, the shrinkage comparison across
//! rates, per-replicate loss decompositions and the lemma suites.

pub mod lemmas;
pub mod report;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::rng::{derive_seed, tag};
use crate::codebook::{codeword_count, MAX_TOTAL_BITS};
use crate::error::{domain, Error, Result};
use crate::estimator::{
    james_stein, linear_shrinkage, loss_decomposition, quantized_estimate, sample_mean_on_sphere,
    sample_observation, LossDecomposition,
};
use crate::theory::{distortion, norm2, quantized_risk_bound, ModelParams, Rate, Vector};

pub use report::{emit_csv, emit_svg};

/// Default ceiling on `n * B` for experiment cells.
pub const DESK_LIMIT_BITS: u32 = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    JamesStein,
    LinearShrinkage,
    Quantized,
    Zero,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::JamesStein,
        Estimator::LinearShrinkage,
        Estimator::Quantized,
        Estimator::Zero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::JamesStein => "james_stein",
            Estimator::LinearShrinkage => "linear_shrinkage",
            Estimator::Quantized => "quantized",
            Estimator::Zero => "zero",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown estimator {s:?}")))
    }
}

/// Configuration of one Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n_values: Vec<usize>,
    pub rate_b: Rate,
    pub sigma2: f64,
    pub c2: f64,
    /// True signal energy; `None` means `c2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
    pub replicates: usize,
    pub master_seed: u64,
    pub estimators: Vec<Estimator>,
    /// Lifts the desk-scale limit on `n * B` (the hard limit of 62 stays).
    #[serde(default)]
    pub allow_large: bool,
}

impl ExperimentSpec {
    /// Parses and validates a JSON document. Errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                Error::Usage(format!("invalid experiment spec: {}", e.inner()))
            } else {
                Error::Usage(format!("invalid experiment spec field `{path}`: {}", e.inner()))
            }
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn b2(&self) -> f64 {
        self.b2.unwrap_or(self.c2)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, reason: String| Error::Usage(format!("spec field `{name}`: {reason}"));
        if self.n_values.is_empty() {
            return Err(field("n_values", "must list at least one dimension".into()));
        }
        if let Some(i) = self.n_values.iter().position(|&n| n == 0) {
            return Err(field("n_values", format!("entry {i} is 0")));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(field("sigma2", format!("must be positive, got {}", self.sigma2)));
        }
        if !(self.c2.is_finite() && self.c2 > 0.0) {
            return Err(field("c2", format!("must be positive, got {}", self.c2)));
        }
        let b2 = self.b2();
        if !(b2.is_finite() && (0.0..=self.c2).contains(&b2)) {
            return Err(field(
                "b2",
                format!("must lie in [0, c2 = {}], got {b2}", self.c2),
            ));
        }
        if self.replicates == 0 {
            return Err(field("replicates", "must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(field("estimators", "must name at least one estimator".into()));
        }
        Ok(())
    }

    fn params(&self, n: usize) -> Result<ModelParams> {
        ModelParams::new(n, self.rate_b, self.sigma2, self.c2)
    }
}

/// Aggregated losses of one (n, estimator) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub n: usize,
    pub estimator: Estimator,
    pub mean_mse: f64,
    pub sd_mse: f64,
    pub lower_bound: f64,
    pub replicates: usize,
}

/// A cell that could not be run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub n: usize,
    pub estimator: Estimator,
    pub error: Error,
}

impl fmt::Display for CellFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cell n = {}, estimator = {}: {}",
            self.n, self.estimator, self.error
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridReport {
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
}

pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_and_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0)).sqrt())
}

/// Seeds of replicate `r` in dimension `n`: (theta, noise, codebook).
pub fn replicate_seeds(master_seed: u64, n: usize, r: usize) -> (u64, u64, u64) {
    let rep = derive_seed(master_seed, &[n as u64, r as u64]);
    (
        derive_seed(rep, &[tag::THETA]),
        derive_seed(rep, &[tag::NOISE]),
        derive_seed(rep, &[tag::CODEBOOK]),
    )
}

fn check_capacity(params: &ModelParams, allow_large: bool) -> Result<()> {
    let (num, den) = params.rate.total_bits(params.n);
    let limit = if allow_large {
        MAX_TOTAL_BITS
    } else {
        DESK_LIMIT_BITS
    };
    if num > limit as u128 * den {
        return Err(Error::Capacity {
            n: params.n,
            rate: params.rate.to_string(),
            n_rate: num as f64 / den as f64,
            limit,
        });
    }
    codeword_count(params.n, params.rate).map(|_| ())
}

fn apply(est: Estimator, x: &Vector, params: &ModelParams, codebook_seed: u64) -> Result<Vector> {
    match est {
        Estimator::Quantized => quantized_estimate(x, params, codebook_seed),
        Estimator::JamesStein => james_stein(x, params.sigma2),
        Estimator::LinearShrinkage => linear_shrinkage(x, params.sigma2),
        Estimator::Zero => Ok(Vector::zeros(x.len())),
    }
}

fn draw(n: usize, b2: f64, sigma2: f64, seeds: (u64, u64, u64)) -> Result<(Vector, Vector)> {
    let theta = sample_mean_on_sphere(n, b2, seeds.0)?;
    let x = sample_observation(&theta, sigma2, seeds.1)?;
    Ok((theta, x))
}

/// Per-replicate losses of one cell, in replicate order.
pub fn cell_losses(spec: &ExperimentSpec, n: usize, est: Estimator) -> Result<Vec<f64>> {
    spec.validate()?;
    if !spec.n_values.contains(&n) {
        return Err(Error::Usage(format!("n = {n} is not in the spec's n_values")));
    }
    let params = spec.params(n)?;
    if est == Estimator::Quantized {
        check_capacity(&params, spec.allow_large)?;
    }
    let b2 = spec.b2();
    (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let seeds = replicate_seeds(spec.master_seed, n, r);
            let (theta, x) = draw(n, b2, spec.sigma2, seeds)?;
            let estimate = apply(est, &x, &params, seeds.2)?;
            distortion(&theta, &estimate)
        })
        .collect()
}

pub fn run_cell(spec: &ExperimentSpec, n: usize, est: Estimator) -> Result<CellResult> {
    let losses = cell_losses(spec, n, est)?;
    let (mean_mse, sd_mse) = mean_and_sd(&losses);
    Ok(CellResult {
        n,
        estimator: est,
        mean_mse,
        sd_mse,
        lower_bound: quantized_risk_bound(spec.rate_b.as_f64(), spec.sigma2, spec.b2())?,
        replicates: losses.len(),
    })
}

/// All cells, ordered by n then estimator name. Failing cells are reported
/// in `failures` and do not stop the others.
pub fn run_grid(spec: &ExperimentSpec) -> Result<GridReport> {
    spec.validate()?;
    let ns: BTreeSet<usize> = spec.n_values.iter().copied().collect();
    let ests: BTreeSet<Estimator> = spec.estimators.iter().copied().collect();
    let mut report = GridReport::default();
    for &n in &ns {
        for &est in &ests {
            match run_cell(spec, n, est) {
                Ok(cell) => report.cells.push(cell),
                Err(error) => report.failures.push(CellFailure {
                    n,
                    estimator: est,
                    error,
                }),
            }
        }
    }
    Ok(report)
}

/// Settings for [`run_decomposition`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionSpec {
    pub params: ModelParams,
    /// True signal energy.
    pub b2: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// Loss decomposition of the quantized estimate, one entry per replicate.
pub fn run_decomposition(spec: &DecompositionSpec) -> Result<Vec<LossDecomposition>> {
    let p = &spec.params;
    p.validate()?;
    if !(spec.b2.is_finite() && (0.0..=p.c2).contains(&spec.b2)) {
        return Err(domain(
            "b2",
            format!("must lie in [0, c2 = {}], got {}", p.c2, spec.b2),
        ));
    }
    if spec.replicates == 0 {
        return Err(Error::Usage("replicates must be at least 1".into()));
    }
    check_capacity(p, false)?;
    (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let seeds = replicate_seeds(spec.seed, p.n, r);
            let (theta, x) = draw(p.n, spec.b2, p.sigma2, seeds)?;
            let check = quantized_estimate(&x, p, seeds.2)?;
            loss_decomposition(&theta, &x, &check, p.sigma2)
        })
        .collect()
}

/// Means of each term over a set of decompositions.
pub fn mean_decomposition(rows: &[LossDecomposition]) -> Result<LossDecomposition> {
    if rows.is_empty() {
        return Err(Error::Usage("no decompositions to average".into()));
    }
    let mean = |f: fn(&LossDecomposition) -> f64| {
        let v: Vec<f64> = rows.iter().map(f).collect();
        pairwise_sum(&v) / v.len() as f64
    };
    Ok(LossDecomposition {
        a1: mean(|r| r.a1),
        a2: mean(|r| r.a2),
        a3: mean(|r| r.a3),
        total: mean(|r| r.total),
        gamma_hat: mean(|r| r.gamma_hat),
    })
}

/// Quantized estimates at several rates from the same data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkagePoint {
    pub rate: Rate,
    /// Mean Euclidean norm of the quantized estimate.
    pub mean_norm: f64,
    pub mean_mse: f64,
    /// Mean norm of the linear shrinkage estimate on the same data.
    pub shrinkage_norm: f64,
    /// Mean norm of the observation.
    pub observation_norm: f64,
}

/// Per-rate (norm, mse), shrinkage norm and observation norm of one replicate.
type ComparisonRow = (Vec<(f64, f64)>, f64, f64);

/// For each replicate, draws one (theta, x, codebook seed) and quantizes `x`
/// at every rate in `rates`.
pub fn shrinkage_comparison(
    n: usize,
    rates: &[Rate],
    sigma2: f64,
    c2: f64,
    b2: f64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<ShrinkagePoint>> {
    if rates.is_empty() || replicates == 0 {
        return Err(Error::Usage("need at least one rate and one replicate".into()));
    }
    if !(b2.is_finite() && (0.0..=c2).contains(&b2)) {
        return Err(domain("b2", format!("must lie in [0, c2 = {c2}], got {b2}")));
    }
    let params: Vec<ModelParams> = rates
        .iter()
        .map(|&rate| {
            let p = ModelParams::new(n, rate, sigma2, c2)?;
            check_capacity(&p, false)?;
            Ok(p)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ComparisonRow> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let seeds = replicate_seeds(seed, n, r);
            let (theta, x) = draw(n, b2, sigma2, seeds)?;
            let per_rate = params
                .iter()
                .map(|p| {
                    let est = quantized_estimate(&x, p, seeds.2)?;
                    Ok((norm2(&est).sqrt(), distortion(&theta, &est)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let lin = linear_shrinkage(&x, sigma2)?;
            Ok((per_rate, norm2(&lin).sqrt(), norm2(&x).sqrt()))
        })
        .collect::<Result<_>>()?;
    let col = |f: &dyn Fn(&ComparisonRow) -> f64| {
        let v: Vec<f64> = rows.iter().map(f).collect();
        pairwise_sum(&v) / v.len() as f64
    };
    let shrinkage_norm = col(&|row| row.1);
    let observation_norm = col(&|row| row.2);
    Ok(rates
        .iter()
        .enumerate()
        .map(|(k, &rate)| ShrinkagePoint {
            rate,
            mean_norm: col(&|row| row.0[k].0),
            mean_mse: col(&|row| row.0[k].1),
            shrinkage_norm,
            observation_norm,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n_values: Vec<usize>, num: u32, den: u32, estimators: Vec<Estimator>) -> ExperimentSpec {
        ExperimentSpec {
            n_values,
            rate_b: Rate::new(num, den).unwrap(),
            sigma2: 1.0,
            c2: 1.0,
            b2: None,
            replicates: 20,
            master_seed: 99,
            estimators,
            allow_large: false,
        }
    }

    #[test]
    fn estimator_names_sort_like_their_variants() {
        let mut by_name: Vec<_> = Estimator::ALL.iter().map(|e| e.name()).collect();
        by_name.sort();
        let by_variant: Vec<_> = Estimator::ALL.iter().map(|e| e.name()).collect();
        assert_eq!(by_name, by_variant);
        assert_eq!("james_stein".parse::<Estimator>().unwrap(), Estimator::JamesStein);
        assert!("ridge".parse::<Estimator>().is_err());
    }

    #[test]
    fn zero_estimator_loss_is_signal_energy() {
        let mut s = spec(vec![12], 1, 2, vec![Estimator::Zero]);
        s.b2 = Some(0.6);
        let cell = run_cell(&s, 12, Estimator::Zero).unwrap();
        assert!((cell.mean_mse - 0.6).abs() < 1e-14);
        assert!(cell.sd_mse < 1e-14);
        assert_eq!(cell.replicates, 20);
        assert!((cell.lower_bound - quantized_risk_bound(0.5, 1.0, 0.6).unwrap()).abs() == 0.0);
    }

    #[test]
    fn zero_rate_quantizer_matches_zero_estimator() {
        let s = spec(vec![10], 0, 1, vec![Estimator::Quantized, Estimator::Zero]);
        let q = cell_losses(&s, 10, Estimator::Quantized).unwrap();
        let z = cell_losses(&s, 10, Estimator::Zero).unwrap();
        assert_eq!(q, z);
    }

    #[test]
    fn single_cell_grid_equals_run_cell() {
        let s = spec(vec![8], 1, 1, vec![Estimator::Quantized]);
        let grid = run_grid(&s).unwrap();
        assert!(grid.failures.is_empty());
        assert_eq!(grid.cells, vec![run_cell(&s, 8, Estimator::Quantized).unwrap()]);
    }

    #[test]
    fn grid_order_and_failure_collection() {
        let s = spec(
            vec![30, 2, 8],
            1,
            1,
            vec![Estimator::Zero, Estimator::Quantized, Estimator::JamesStein],
        );
        let grid = run_grid(&s).unwrap();
        let order: Vec<_> = grid.cells.iter().map(|c| (c.n, c.estimator)).collect();
        assert_eq!(
            order,
            vec![
                (2, Estimator::Quantized),
                (2, Estimator::Zero),
                (8, Estimator::JamesStein),
                (8, Estimator::Quantized),
                (8, Estimator::Zero),
                (30, Estimator::JamesStein),
                (30, Estimator::Zero),
            ]
        );
        // James-Stein needs n >= 3; n = 30 at B = 1 exceeds the desk limit
        let failed: Vec<_> = grid.failures.iter().map(|f| (f.n, f.estimator)).collect();
        assert_eq!(
            failed,
            vec![(2, Estimator::JamesStein), (30, Estimator::Quantized)]
        );
        match &grid.failures[1].error {
            Error::Capacity { n, rate, limit, .. } => {
                assert_eq!((*n, rate.as_str(), *limit), (30, "1", DESK_LIMIT_BITS));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn desk_limit_override_keeps_hard_limit() {
        let mut s = spec(vec![70], 1, 1, vec![Estimator::Quantized]);
        s.allow_large = true;
        match run_cell(&s, 70, Estimator::Quantized) {
            Err(Error::Capacity { limit, .. }) => assert_eq!(limit, MAX_TOTAL_BITS),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn n_must_belong_to_spec() {
        let s = spec(vec![8], 1, 1, vec![Estimator::Zero]);
        assert!(matches!(run_cell(&s, 9, Estimator::Zero), Err(Error::Usage(_))));
    }

    #[test]
    fn json_spec_parsing() {
        let text = r#"{"n_values":[16,32],"rate_b":[1,2],"sigma2":1.0,"c2":2.0,
            "replicates":5,"master_seed":7,"estimators":["quantized","zero"]}"#;
        let s = ExperimentSpec::from_json(text).unwrap();
        assert_eq!(s.rate_b, Rate::new(1, 2).unwrap());
        assert_eq!(s.b2(), 2.0);
        assert!(!s.allow_large);

        let bad_type = text.replace("\"replicates\":5", "\"replicates\":\"five\"");
        let e = ExperimentSpec::from_json(&bad_type).unwrap_err().to_string();
        assert!(e.contains("replicates"), "{e}");

        let bad_rate = text.replace("[1,2]", "[1,0]");
        let e = ExperimentSpec::from_json(&bad_rate).unwrap_err().to_string();
        assert!(e.contains("rate_b"), "{e}");

        let unknown = text.replace("\"c2\"", "\"radius\":1,\"c2\"");
        let e = ExperimentSpec::from_json(&unknown).unwrap_err().to_string();
        assert!(e.contains("radius"), "{e}");

        let missing = text.replace("\"sigma2\":1.0,", "");
        let e = ExperimentSpec::from_json(&missing).unwrap_err().to_string();
        assert!(e.contains("sigma2"), "{e}");

        let big_b2 = text.replace("\"c2\":2.0", "\"c2\":2.0,\"b2\":3.0");
        let e = ExperimentSpec::from_json(&big_b2).unwrap_err().to_string();
        assert!(e.contains("b2"), "{e}");

        let bad_est = text.replace("\"zero\"", "\"ridge\"");
        let e = ExperimentSpec::from_json(&bad_est).unwrap_err().to_string();
        assert!(e.contains("estimators"), "{e}");
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = spec(
            vec![6, 12],
            1,
            1,
            vec![
                Estimator::Quantized,
                Estimator::LinearShrinkage,
                Estimator::JamesStein,
            ],
        );
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_grid(&s).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(8));
    }

    #[test]
    fn pairwise_moments() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let (m, sd) = mean_and_sd(&v);
        assert_eq!(m, 499.5);
        assert!((sd - (1000.0f64 * 1001.0 / 12.0).sqrt()).abs() < 1e-9);
        assert_eq!(mean_and_sd(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn decomposition_rows_sum_to_total() {
        let spec = DecompositionSpec {
            params: ModelParams::new(12, Rate::new(1, 2).unwrap(), 1.0, 1.0).unwrap(),
            b2: 1.0,
            replicates: 30,
            seed: 4,
        };
        let rows = run_decomposition(&spec).unwrap();
        assert_eq!(rows.len(), 30);
        for r in &rows {
            assert!((r.a1 + r.a2 + r.a3 - r.total).abs() <= 1e-10 * r.total.max(1e-300));
        }
        let m = mean_decomposition(&rows).unwrap();
        assert!((m.a1 + m.a2 + m.a3 - m.total).abs() < 1e-10);
    }

    #[test]
    fn quantized_norm_grows_with_rate() {
        let rates: Vec<Rate> = [(1, 10), (1, 5), (1, 2), (1, 1)]
            .iter()
            .map(|&(a, b)| Rate::new(a, b).unwrap())
            .collect();
        let pts = shrinkage_comparison(12, &rates, 1.0, 4.0, 4.0, 16, 3).unwrap();
        for w in pts.windows(2) {
            assert!(w[0].mean_norm <= w[1].mean_norm);
        }
        assert!(pts.last().unwrap().mean_norm < pts[0].observation_norm);
    }
}
