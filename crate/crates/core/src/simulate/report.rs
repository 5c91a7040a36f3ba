//! CSV and SVG renderings of grid results.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{CellResult, Estimator};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "n,estimator,mean_mse,sd_mse,lower_bound,replicates";

fn nonempty(results: &[CellResult]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Usage("no results to write".into()));
    }
    Ok(())
}

pub fn emit_csv(results: &[CellResult]) -> Result<Vec<u8>> {
    nonempty(results)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    for cell in results {
        w.serialize(cell).map_err(|e| Error::Usage(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::Usage(format!("csv: {e}")))
}

const WIDTH: f64 = 560.0;
const PANEL: f64 = 340.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 52.0;

/// Maps data coordinates of one panel to SVG user units.
#[derive(Debug, Clone, Copy)]
pub struct PanelScale {
    x_min: f64,
    x_max: f64,
    y_max: f64,
    top: f64,
}

impl PanelScale {
    fn new(cells: &[&CellResult], panel: usize) -> Self {
        let x_min = cells.iter().map(|c| c.n).min().unwrap() as f64;
        let x_max = cells.iter().map(|c| c.n).max().unwrap() as f64;
        let hi = cells
            .iter()
            .map(|c| (c.mean_mse + c.sd_mse).max(c.lower_bound))
            .fold(0.0, f64::max);
        PanelScale {
            x_min,
            x_max,
            y_max: nice_ceiling(hi * 1.1),
            top: panel as f64 * PANEL,
        }
    }

    pub fn x(&self, n: f64) -> f64 {
        let inner = WIDTH - LEFT - RIGHT;
        if self.x_max == self.x_min {
            return LEFT + inner / 2.0;
        }
        LEFT + inner * 0.05 + inner * 0.9 * (n - self.x_min) / (self.x_max - self.x_min)
    }

    pub fn y(&self, v: f64) -> f64 {
        let bottom = self.top + PANEL - BOTTOM;
        bottom - (bottom - self.top - TOP) * v / self.y_max
    }

    /// Inverse of [`PanelScale::y`].
    pub fn value_at(&self, y: f64) -> f64 {
        let bottom = self.top + PANEL - BOTTOM;
        (bottom - y) / (bottom - self.top - TOP) * self.y_max
    }
}

fn nice_ceiling(v: f64) -> f64 {
    if v.is_nan() || v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&c| c >= v)
        .unwrap()
}

/// Groups cells by estimator in name order and returns each group's scale.
pub fn panels(results: &[CellResult]) -> Vec<(Estimator, Vec<&CellResult>, PanelScale)> {
    let mut groups: BTreeMap<Estimator, Vec<&CellResult>> = BTreeMap::new();
    for c in results {
        groups.entry(c.estimator).or_default().push(c);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(k, (est, mut cells))| {
            cells.sort_by_key(|c| c.n);
            let scale = PanelScale::new(&cells, k);
            (est, cells, scale)
        })
        .collect()
}

/// One chart per estimator: mean MSE against n with one-sd error bars and
/// the risk lower bound as a dashed horizontal line.
pub fn emit_svg(results: &[CellResult]) -> Result<Vec<u8>> {
    nonempty(results)?;
    let panels = panels(results);
    let height = PANEL * panels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (est, cells, sc) in &panels {
        let bottom = sc.top + PANEL - BOTTOM;
        let _ = writeln!(s, r#"<g class="panel" data-estimator="{est}">"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{est}</text>"#,
            WIDTH / 2.0,
            sc.top + 24.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT:.2}" y1="{bottom:.2}" x2="{:.2}" y2="{bottom:.2}" stroke="black"/>"#,
            WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT:.2}" y1="{:.2}" x2="{LEFT:.2}" y2="{bottom:.2}" stroke="black"/>"#,
            sc.top + TOP
        );
        for k in 0..=5 {
            let v = sc.y_max * k as f64 / 5.0;
            let y = sc.y(v);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
                LEFT - 4.0,
                LEFT - 7.0,
                y + 4.0
            );
        }
        for c in cells {
            let x = sc.x(c.n as f64);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                bottom + 4.0,
                bottom + 18.0,
                c.n
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">n</text>"#,
            LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
            bottom + 38.0
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">MSE</text>"#,
            (sc.top + TOP + bottom) / 2.0,
            (sc.top + TOP + bottom) / 2.0
        );

        let mut bounds: Vec<f64> = cells.iter().map(|c| c.lower_bound).collect();
        bounds.sort_by(f64::total_cmp);
        bounds.dedup();
        for b in bounds {
            let y = sc.y(b);
            let _ = writeln!(
                s,
                r##"<line class="lower-bound" data-bound="{b:e}" x1="{LEFT:.2}" y1="{y:.6}" x2="{:.2}" y2="{y:.6}" stroke="#b22222" stroke-dasharray="6 4"/>"##,
                WIDTH - RIGHT
            );
        }

        let path: Vec<String> = cells
            .iter()
            .map(|c| format!("{:.2},{:.2}", sc.x(c.n as f64), sc.y(c.mean_mse)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f4e9a" stroke-width="1.5"/>"##,
            path.join(" ")
        );
        for c in cells {
            let x = sc.x(c.n as f64);
            let lo = sc.y((c.mean_mse - c.sd_mse).max(0.0));
            let hi = sc.y(c.mean_mse + c.sd_mse);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{lo:.2}" x2="{x:.2}" y2="{hi:.2}" stroke="#1f4e9a"/><line x1="{:.2}" y1="{lo:.2}" x2="{:.2}" y2="{lo:.2}" stroke="#1f4e9a"/><line x1="{:.2}" y1="{hi:.2}" x2="{:.2}" y2="{hi:.2}" stroke="#1f4e9a"/>"##,
                x - 4.0,
                x + 4.0,
                x - 4.0,
                x + 4.0
            );
            let _ = writeln!(
                s,
                r##"<circle cx="{x:.2}" cy="{:.2}" r="3.5" fill="#1f4e9a"><title>n = {}: {:.6} ± {:.6}</title></circle>"##,
                sc.y(c.mean_mse),
                c.n,
                c.mean_mse,
                c.sd_mse
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    Ok(s.into_bytes())
}
