//! End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use qgsm::bitstream::{self, StreamHeader};
use qgsm::codebook::rng::{mix, unit_open};
use qgsm::codebook::{codeword, codeword_count, scan_range, search_direction, MagnitudeGrid};
use qgsm::error::ParseError;
use qgsm::estimator::{loss_decomposition, quantized_decode, QuantizedIndex};
use qgsm::simulate::lemmas::{expected_max_inner, max_inner_trials, Suite};
use qgsm::simulate::{self, DecompositionSpec, Estimator, ExperimentSpec};
use qgsm::theory::{quantized_risk_bound, rate_lower_bound, ModelParams, Rate};

const BOUNDS_TOL: f64 = 1e-12;
const INVERSE_REL_TOL: f64 = 1e-12;
const INVERSE_TRIPLES: usize = 100;
const EXTREME_ANGLE_TOL: f64 = 0.08;
const EXTREME_ANGLE_SEEDS: usize = 20;
const FIG4_REPLICATES: usize = 50;
const FIG4_BAND: (f64, f64) = (0.60, 1.00);
const ADAPTIVE_MAX: f64 = 0.15;
const DECOMP_IDENTITY_REL: f64 = 1e-10;
const DECOMP_INSTANCES: usize = 1000;
const DECOMP_BAND: f64 = 0.10;
const JS_TARGET: f64 = 0.8;
const JS_TOL: f64 = 0.10;
const ORACLE_INSTANCES: usize = 50;
const ROUNDTRIP_CASES: usize = 1000;
const SEARCH_VALUE_TOL: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Deterministic uniform stream for drawing test inputs.
struct Draws(u64);

impl Draws {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(1);
        unit_open(mix(self.0.wrapping_mul(0x2545_F491_4F6C_DD1D)))
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }

    fn below(&mut self, n: u64) -> u64 {
        ((self.next() * n as f64) as u64).min(n - 1)
    }

    fn normal(&mut self) -> f64 {
        let (u, v) = (self.next(), self.next());
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }
}

fn qgsm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qgsm"))
        .args(args)
        .output()
        .expect("failed to launch qgsm")
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn closed_form(sigma2: f64, c2: f64, b: f64) -> f64 {
    sigma2 * c2 / (sigma2 + c2) + c2 * c2 * 2f64.powf(-2.0 * b) / (sigma2 + c2)
}

fn bound_curves() -> Outcome {
    let o = qgsm(&[
        "bounds",
        "--sigma2",
        "1",
        "--c2",
        "2,3,4,5,6",
        "--rates",
        "0:3:0.1",
    ]);
    if !o.status.success() {
        return outcome(false, format!("bounds exited with {}", o.status));
    }
    let text = String::from_utf8_lossy(&o.stdout);
    let mut worst = 0.0f64;
    let mut rows = 0;
    let mut endpoints = true;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        let (c2, b, r, floor) = (v[0], v[1], v[2], v[3]);
        worst = worst.max((r - closed_form(1.0, c2, b)).abs());
        if b == 0.0 {
            endpoints &= (r - c2).abs() <= BOUNDS_TOL;
        }
        endpoints &= (floor - c2 / (1.0 + c2)).abs() <= BOUNDS_TOL;
        rows += 1;
    }
    let o = qgsm(&["bounds", "--sigma2", "1", "--c2", "2,3,4,5,6", "--rates", "inf"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        endpoints &= (v[2] - v[0] / (1.0 + v[0])).abs() <= BOUNDS_TOL;
    }
    outcome(
        rows == 5 * 31 && worst <= BOUNDS_TOL && endpoints,
        format!(
            "{rows} rows, max |R - closed form| = {worst:.1e}, R(0) = c2 and R(inf) = Pinsker: {endpoints}"
        ),
    )
}

fn inverse_identity() -> Outcome {
    let mut d = Draws(2);
    let mut worst = 0.0f64;
    for _ in 0..INVERSE_TRIPLES {
        let b = d.range(0.05, 3.0);
        let sigma2 = d.range(0.25, 8.0);
        let c2 = d.range(0.25, 8.0);
        let r = quantized_risk_bound(b, sigma2, c2).unwrap();
        let back = rate_lower_bound(r, sigma2, c2).unwrap();
        worst = worst.max((back - b).abs() / b);
    }
    outcome(
        worst <= INVERSE_REL_TOL,
        format!("{INVERSE_TRIPLES} triples, max relative error {worst:.1e}"),
    )
}

fn extreme_angle() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, num, den) in [(32, 1, 2), (48, 1, 2), (24, 1, 1)] {
        let rate = Rate::new(num, den).unwrap();
        let v = max_inner_trials(n, rate, EXTREME_ANGLE_SEEDS, 0xACCE_5500).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let limit = (1.0 - 2f64.powf(-2.0 * rate.as_f64())).sqrt();
        let finite = expected_max_inner(n, codeword_count(n, rate).unwrap()).unwrap();
        ok &= (mean - limit).abs() <= EXTREME_ANGLE_TOL;
        parts.push(format!(
            "(n={n}, B={rate}) mean {mean:.4} vs limit {limit:.4} [finite-n {finite:.4}]"
        ));
    }
    outcome(ok, parts.join("; "))
}

fn fig4_spec(b2: f64, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        n_values: vec![16, 32, 48],
        rate_b: Rate::new(1, 2).unwrap(),
        sigma2: 1.0,
        c2: 1.0,
        b2: Some(b2),
        replicates: FIG4_REPLICATES,
        master_seed: seed,
        estimators: vec![Estimator::Quantized],
        allow_large: false,
    }
}

fn figure4() -> Outcome {
    let grid = simulate::run_grid(&fig4_spec(1.0, 4)).unwrap();
    if !grid.failures.is_empty() {
        return outcome(false, format!("{} failed cells", grid.failures.len()));
    }
    let means: Vec<f64> = grid.cells.iter().map(|c| c.mean_mse).collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let last = *means.last().unwrap();
    let in_band = (FIG4_BAND.0..=FIG4_BAND.1).contains(&last);
    outcome(
        decreasing && in_band && means.len() == 3,
        format!(
            "mean MSE at n = 16, 32, 48: {:.4}, {:.4}, {:.4}; bound {:.4}",
            means[0], means[1], means[2], grid.cells[2].lower_bound
        ),
    )
}

fn adaptivity() -> Outcome {
    let spec = fig4_spec(0.0, 5);
    let cell = simulate::run_cell(&spec, 48, Estimator::Quantized).unwrap();
    outcome(
        cell.mean_mse <= ADAPTIVE_MAX,
        format!(
            "b2 = 0, n = 48: mean MSE {:.4} (sd {:.4}), bound at b2 = 0 is {}",
            cell.mean_mse, cell.sd_mse, cell.lower_bound
        ),
    )
}

fn decomposition() -> Outcome {
    let mut d = Draws(6);
    let mut worst = 0.0f64;
    for _ in 0..DECOMP_INSTANCES {
        let n = 1 + d.below(64) as usize;
        let sigma2 = d.range(0.1, 4.0);
        let scale = d.range(0.1, 3.0);
        let theta: Vec<f64> = (0..n).map(|_| scale * d.normal()).collect();
        let x: Vec<f64> = theta.iter().map(|t| t + sigma2.sqrt() * d.normal()).collect();
        let check: Vec<f64> = (0..n).map(|_| scale * d.normal()).collect();
        let r = loss_decomposition(&theta, &x, &check, sigma2).unwrap();
        worst = worst.max((r.a1 + r.a2 + r.a3 - r.total).abs() / r.total);
    }
    let spec = DecompositionSpec {
        params: ModelParams::new(48, Rate::new(1, 2).unwrap(), 1.0, 1.0).unwrap(),
        b2: 1.0,
        replicates: FIG4_REPLICATES,
        seed: 6,
    };
    let m = simulate::mean_decomposition(&simulate::run_decomposition(&spec).unwrap()).unwrap();
    let (t1, t2) = (0.25, 0.5);
    let ok = worst <= DECOMP_IDENTITY_REL
        && (m.a1 - t1).abs() <= DECOMP_BAND
        && (m.a2 - t2).abs() <= DECOMP_BAND
        && m.a3.abs() <= DECOMP_BAND;
    outcome(
        ok,
        format!(
            "identity max rel error {worst:.1e} on {DECOMP_INSTANCES} instances; means A1 {:.4}, A2 {:.4}, A3 {:.4}",
            m.a1, m.a2, m.a3
        ),
    )
}

fn james_stein() -> Outcome {
    let spec = ExperimentSpec {
        n_values: vec![200],
        rate_b: Rate::new(1, 2).unwrap(),
        sigma2: 1.0,
        c2: 4.0,
        b2: None,
        replicates: 100,
        master_seed: 7,
        estimators: vec![Estimator::JamesStein],
        allow_large: false,
    };
    let cell = simulate::run_cell(&spec, 200, Estimator::JamesStein).unwrap();
    outcome(
        (cell.mean_mse - JS_TARGET).abs() <= JS_TOL,
        format!(
            "mean MSE {:.4} (sd {:.4}) vs Pinsker {JS_TARGET}",
            cell.mean_mse, cell.sd_mse
        ),
    )
}

fn naive_search(x: &[f64], seed: u64, count: u64) -> (u64, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..count {
        let g = codeword(seed, i, x.len());
        let v: f64 = x.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

fn oracle_equivalence() -> Outcome {
    let mut d = Draws(8);
    let pool = |k| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
    let (serial, parallel) = (pool(1), pool(4));
    let mut mismatches = 0;
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_INSTANCES {
        let n = 1 + d.below(16) as usize;
        let count = 1 + d.below(4096);
        let seed = mix(d.below(u64::MAX));
        let x: Vec<f64> = (0..n).map(|_| d.normal()).collect();
        let par = parallel.install(|| search_direction(&x, seed, count).unwrap());
        let one = serial.install(|| scan_range(&x, seed, 0..count));
        let (ni, nv) = naive_search(&x, seed, count);
        if par != one || par.index != ni {
            mismatches += 1;
        }
        worst = worst.max((par.inner - nv).abs());
    }
    outcome(
        mismatches == 0 && worst <= SEARCH_VALUE_TOL,
        format!("{ORACLE_INSTANCES} instances, {mismatches} mismatches, max |value - oracle| {worst:.1e}"),
    )
}

fn bitstream_checks() -> Outcome {
    let mut d = Draws(9);
    let mut failures = 0;
    let mut cases = 0;
    while cases < ROUNDTRIP_CASES {
        let n = 1 + d.below(256) as u32;
        let rate = Rate::new(d.below(9) as u32, 1 + d.below(6) as u32).unwrap();
        let header = StreamHeader {
            n,
            rate,
            sigma2: d.range(0.01, 20.0),
            c2: d.range(0.01, 20.0),
            seed: mix(d.below(u64::MAX)),
        };
        let Ok(count) = codeword_count(n as usize, rate) else {
            continue;
        };
        let grid = MagnitudeGrid::new(n as usize, header.c2).unwrap();
        let idx = QuantizedIndex {
            mag_index: d.below(grid.size()),
            dir_index: d.below(count),
            seed: header.seed,
        };
        let bytes = bitstream::pack(&header, &idx).unwrap();
        if bitstream::unpack(&bytes) != Ok((header, idx)) {
            failures += 1;
        }
        cases += 1;
    }
    let golden = fs::read(fixture("golden_n8_b1_seed7.qgsm")).unwrap();
    let (h, idx) = bitstream::unpack(&golden).unwrap();
    let decoded = quantized_decode(&idx, &h.params().unwrap()).unwrap();
    let want: Vec<f64> = fs::read_to_string(fixture("golden_n8_b1_seed7.decoded.txt"))
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    let golden_ok = decoded.to_vec() == want && bitstream::pack(&h, &idx).unwrap() == golden;
    let mut bad = golden.clone();
    bad[0] = b'q';
    let magic_ok = matches!(bitstream::unpack(&bad), Err(ParseError::BadMagic(_)))
        && bitstream::unpack(&bad).unwrap_err().to_string().contains("magic");
    let trunc = bitstream::unpack(&golden[..golden.len() - 1]);
    let trunc_ok = matches!(trunc, Err(ParseError::Truncated { .. }))
        && trunc.unwrap_err().to_string().contains("truncated");
    outcome(
        failures == 0 && golden_ok && magic_ok && trunc_ok,
        format!(
            "{ROUNDTRIP_CASES} round trips, {failures} failures; golden fixture {}; magic error {}; truncation error {}",
            if golden_ok { "bit-identical" } else { "differs" },
            if magic_ok { "named" } else { "wrong" },
            if trunc_ok { "named" } else { "wrong" }
        ),
    )
}

fn lemma_suites() -> Outcome {
    let o = qgsm(&["verify", "--suite", "all"]);
    let text = String::from_utf8_lossy(&o.stdout);
    let passed: Vec<&str> = text.lines().filter(|l| l.starts_with("PASS ")).collect();
    let all_named = Suite::ALL.iter().all(|s| {
        passed
            .iter()
            .any(|l| l.starts_with(&format!("PASS {} ", s.name())))
    });
    outcome(
        o.status.success() && all_named,
        format!("{} of {} suites passed", passed.len(), Suite::ALL.len()),
    )
}

/// Name, time budget and check.
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 bound curves", Duration::from_secs(1), bound_curves),
        (
            "2 bound inversion identity",
            Duration::from_secs(1),
            inverse_identity,
        ),
        (
            "3 extreme-angle concentration",
            Duration::from_secs(600),
            extreme_angle,
        ),
        ("4 MSE convergence in n", Duration::from_secs(600), figure4),
        ("5 adaptivity to b < c", Duration::from_secs(600), adaptivity),
        ("6 loss decomposition", Duration::from_secs(600), decomposition),
        ("7 James-Stein comparator", Duration::from_secs(10), james_stein),
        (
            "8 search oracle equivalence",
            Duration::from_secs(10),
            oracle_equivalence,
        ),
        ("9 bitstream", Duration::from_secs(1), bitstream_checks),
        ("10 lemma suites", Duration::from_secs(120), lemma_suites),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut all = true;
    for (name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let took = start.elapsed();
        let verdict = if out.passed { "PASS" } else { "FAIL" };
        println!(
            "{verdict} criterion {name}: {} [{:.2}s, budget {}s]",
            out.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        all &= out.passed;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
