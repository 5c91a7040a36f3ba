use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use qgsm::bitstream::{self, StreamHeader};
use qgsm::estimator::{encode_with_report, quantized_decode};
use qgsm::simulate::lemmas::{self, Suite};
use qgsm::simulate::{self, DecompositionSpec, ExperimentSpec};
use qgsm::theory::{distortion_rate_gaussian, pinsker_risk, quantized_risk_bound, ModelParams, Rate};

#[derive(Parser)]
#[command(
    name = "qgsm",
    version,
    about = "Quantized estimation in the Gaussian sequence model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the risk lower bound against the rate as CSV.
    #[command(allow_negative_numbers = true)]
    Bounds {
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        /// Comma-separated squared radii.
        #[arg(long, default_value = "2,3,4,5,6")]
        c2: String,
        /// Comma-separated rates or `start:stop:step`; `inf` is allowed.
        #[arg(long, default_value = "0:3:0.1")]
        rates: String,
    },
    /// Quantize an observation vector into a .qgsm stream.
    #[command(allow_negative_numbers = true)]
    Encode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        sigma2: f64,
        #[arg(long)]
        c2: f64,
        /// Bits per coordinate, e.g. `1`, `1/2` or `0.25`.
        #[arg(long)]
        rate: Rate,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the estimate from a .qgsm stream.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment described by a JSON spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV path; printed to stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Per-replicate loss decomposition of the quantized estimator as CSV.
    #[command(allow_negative_numbers = true)]
    Decompose {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rate: Rate,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        /// True signal energy.
        #[arg(long)]
        b2: f64,
        /// Squared radius of the parameter ball; defaults to b2.
        #[arg(long)]
        c2: Option<f64>,
        #[arg(long, default_value_t = 50)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the concentration lemmas against Monte Carlo.
    Verify {
        /// Suite name, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = lemmas::DEFAULT_SEED)]
        seed: u64,
    },
}

fn parse_reals(list: &str, what: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|t| {
            let t = t.trim();
            match t {
                "inf" | "infinity" => Ok(f64::INFINITY),
                _ => t
                    .parse::<f64>()
                    .with_context(|| format!("{what}: {t:?} is not a number")),
            }
        })
        .collect()
}

/// `start:stop:step` as `start + k * step`, or a comma-separated list.
fn parse_rates(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [_] => parse_reals(spec, "--rates"),
        [a, b, s] => {
            let (start, stop, step) = (
                parse_reals(a, "--rates")?[0],
                parse_reals(b, "--rates")?[0],
                parse_reals(s, "--rates")?[0],
            );
            if !(step > 0.0 && start.is_finite() && stop.is_finite() && stop >= start) {
                bail!("--rates: range {spec:?} needs finite start <= stop and a positive step");
            }
            let steps = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=steps).map(|k| start + k as f64 * step).collect())
        }
        _ => bail!("--rates: expected a list or start:stop:step, got {spec:?}"),
    }
}

fn bounds(sigma2: f64, c2: &str, rates: &str) -> Result<()> {
    let radii = parse_reals(c2, "--c2")?;
    let rates = parse_rates(rates)?;
    let mut out = String::from("c2,B,quantized_bound,pinsker,distortion_rate\n");
    for &c in &radii {
        let floor = pinsker_risk(sigma2, c)?;
        for &b in &rates {
            let _ = writeln!(
                out,
                "{c},{b},{},{floor},{}",
                quantized_risk_bound(b, sigma2, c)?,
                distortion_rate_gaussian(b, c)?
            );
        }
    }
    print!("{out}");
    Ok(())
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v = text
        .split_whitespace()
        .enumerate()
        .map(|(i, t)| match t.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => bail!(
                "malformed input {}: entry {} ({t:?}) is not a finite real",
                path.display(),
                i + 1
            ),
        })
        .collect::<Result<Vec<f64>>>()?;
    if v.is_empty() {
        bail!("malformed input {}: no coordinates", path.display());
    }
    Ok(v)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn encode(input: &Path, sigma2: f64, c2: f64, rate: Rate, seed: u64, out: &Path) -> Result<()> {
    let x = read_vector(input)?;
    let params = ModelParams::new(x.len(), rate, sigma2, c2)?;
    let header = StreamHeader::new(&params, seed)?;
    let enc = encode_with_report(&x, &params, seed)?;
    let bytes = bitstream::pack(&header, &enc.index)?;
    write_file(out, &bytes)?;
    let (mag_bits, dir_bits) = header.payload_widths()?;
    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let normalized = if x_norm > 0.0 { enc.inner / x_norm } else { 0.0 };
    let line = json!({
        "n": params.n,
        "rate": rate.to_string(),
        "mag_index": enc.index.mag_index,
        "dir_index": enc.index.dir_index,
        "mag_bits": mag_bits,
        "dir_bits": dir_bits,
        "payload_bits": mag_bits + dir_bits,
        "stream_bytes": bytes.len(),
        "bhat2": enc.bhat2,
        "inner": enc.inner,
        "normalized_inner": normalized,
    });
    println!("{line}");
    Ok(())
}

fn decode(input: &Path, out: &Path) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let (header, idx) = bitstream::unpack(&bytes).with_context(|| format!("parsing {}", input.display()))?;
    let theta = quantized_decode(&idx, &header.params()?)?;
    let mut text = String::with_capacity(24 * theta.len());
    for v in theta.iter() {
        let _ = writeln!(text, "{v:.16e}");
    }
    write_file(out, text.as_bytes())
}

fn run_simulation(spec: &Path, csv: Option<&Path>, svg: Option<&Path>) -> Result<bool> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec = ExperimentSpec::from_json(&text)?;
    let report = simulate::run_grid(&spec)?;
    for f in &report.failures {
        eprintln!("error: {f}");
    }
    if !report.cells.is_empty() {
        let table = simulate::emit_csv(&report.cells)?;
        match csv {
            Some(p) => write_file(p, &table)?,
            None => print!("{}", String::from_utf8_lossy(&table)),
        }
        if let Some(p) = svg {
            write_file(p, &simulate::emit_svg(&report.cells)?)?;
        }
    }
    Ok(report.failures.is_empty())
}

#[allow(clippy::too_many_arguments)]
fn decompose(
    n: usize,
    rate: Rate,
    sigma2: f64,
    b2: f64,
    c2: Option<f64>,
    replicates: usize,
    seed: u64,
) -> Result<()> {
    let c2 = match c2 {
        Some(c) => c,
        None if b2 > 0.0 => b2,
        None => bail!("--c2 is required when --b2 is 0"),
    };
    let spec = DecompositionSpec {
        params: ModelParams::new(n, rate, sigma2, c2)?,
        b2,
        replicates,
        seed,
    };
    let rows = simulate::run_decomposition(&spec)?;
    let mean = simulate::mean_decomposition(&rows)?;
    let mut out = String::from("replicate,a1,a2,a3,total\n");
    for (r, d) in rows.iter().enumerate() {
        let _ = writeln!(out, "{r},{},{},{},{}", d.a1, d.a2, d.a3, d.total);
    }
    let _ = writeln!(out, "mean,{},{},{},{}", mean.a1, mean.a2, mean.a3, mean.total);
    print!("{out}");
    Ok(())
}

fn verify(suite: &str, seed: u64) -> Result<bool> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse()?]
    };
    let mut ok = true;
    for s in suites {
        let report = lemmas::run_suite(s, seed)?;
        print!("{report}");
        ok &= report.passed();
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Bounds { sigma2, c2, rates } => bounds(sigma2, &c2, &rates).map(|_| true),
        Command::Encode {
            input,
            sigma2,
            c2,
            rate,
            seed,
            out,
        } => encode(&input, sigma2, c2, rate, seed, &out).map(|_| true),
        Command::Decode { input, out } => decode(&input, &out).map(|_| true),
        Command::Simulate { spec, csv, svg } => run_simulation(&spec, csv.as_deref(), svg.as_deref()),
        Command::Decompose {
            n,
            rate,
            sigma2,
            b2,
            c2,
            replicates,
            seed,
        } => decompose(n, rate, sigma2, b2, c2, replicates, seed).map(|_| true),
        Command::Verify { suite, seed } => verify(&suite, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<qgsm::error::Error>(),
                    Some(qgsm::error::Error::Usage(_))
                )
            });
            if usage {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
