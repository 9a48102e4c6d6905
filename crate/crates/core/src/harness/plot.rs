//! Static SVG line plots: one mean line per cell with a ±1 standard error
//! band across seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Band, CellSummary, RunResult};
use crate::agents::{AgentConfig, Algorithm};
use crate::error::{Error, Result};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
/// Lines are thinned to at most this many points.
const MAX_POINTS: usize = 1000;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Exact value of each episode's policy.
    Return,
    CumulativeRegret,
}

impl Metric {
    pub fn slug(self) -> &'static str {
        match self {
            Metric::Return => "return",
            Metric::CumulativeRegret => "regret",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Return => "Return per episode",
            Metric::CumulativeRegret => "Cumulative regret",
        }
    }

    fn bands(self, cell: &CellSummary) -> &[Band] {
        match self {
            Metric::Return => &cell.value_exact,
            Metric::CumulativeRegret => &cell.regret_cum,
        }
    }
}

fn legend_label(cell: &CellSummary) -> String {
    let Ok(cfg) = serde_json::from_str::<AgentConfig>(&cell.params_json) else {
        return cell.algo.clone();
    };
    let m = cfg.m.map_or_else(|| "theory".to_string(), |m| m.to_string());
    match cfg.algo {
        Algorithm::LsviPhe => format!("LSVI-PHE σ²={} M={m}", cfg.sigma2),
        Algorithm::Rlsvi => format!("RLSVI σ²={}", cfg.sigma2),
        Algorithm::LsviUcb => format!("LSVI-UCB β={}", cfg.beta),
        Algorithm::EpsilonGreedy => format!("ε-greedy ε={}", cfg.epsilon),
        Algorithm::Optimal => "optimal".to_string(),
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders the cells of one environment for one metric.
pub fn render_svg(env: &str, metric: Metric, cells: &[&CellSummary]) -> String {
    let episodes = cells
        .iter()
        .map(|c| metric.bands(c).len())
        .max()
        .unwrap_or(0)
        .max(1);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for cell in cells {
        for b in metric.bands(cell) {
            lo = lo.min(b.mean - b.stderr);
            hi = hi.max(b.mean + b.stderr);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |k: usize| {
        if episodes <= 1 {
            LEFT + plot_w / 2.0
        } else {
            LEFT + plot_w * k as f64 / (episodes - 1) as f64
        }
    };
    let y_of = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);
    let stride = episodes.div_ceil(MAX_POINTS).max(1);
    let indices = |n: usize| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
        if n > 0 && idx.last() != Some(&(n - 1)) {
            idx.push(n - 1);
        }
        idx
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}: {}</text>"#,
        LEFT + plot_w / 2.0,
        escape(env),
        metric.title()
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            tick_label(v)
        );
        let k = ((episodes - 1) as f64 * i as f64 / 4.0).round() as usize;
        let x = x_of(k);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 19.0,
            k + 1
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Episode</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );

    for (c, cell) in cells.iter().enumerate() {
        let color = PALETTE[c % PALETTE.len()];
        let bands = metric.bands(cell);
        let idx = indices(bands.len());
        if cell.seeds > 1 && !idx.is_empty() {
            let mut points = String::new();
            for &k in &idx {
                let _ = write!(points, "{:.2},{:.2} ", x_of(k), y_of(bands[k].mean + bands[k].stderr));
            }
            for &k in idx.iter().rev() {
                let _ = write!(points, "{:.2},{:.2} ", x_of(k), y_of(bands[k].mean - bands[k].stderr));
            }
            let _ = writeln!(
                svg,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                points.trim_end()
            );
        }
        let mut points = String::new();
        for &k in &idx {
            let _ = write!(points, "{:.2},{:.2} ", x_of(k), y_of(bands[k].mean));
        }
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.trim_end()
        );
        let ly = TOP + 10.0 + 20.0 * c as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&legend_label(cell))
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<env>_return.svg` and `<env>_regret.svg` for every environment
/// in `result` into `dir`.
pub fn emit_plots(result: &RunResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = result.summary();
    let mut envs: Vec<&str> = Vec::new();
    for cell in &summary {
        if !envs.contains(&cell.env.as_str()) {
            envs.push(&cell.env);
        }
    }
    let mut written = Vec::new();
    for env in envs {
        let cells: Vec<&CellSummary> = summary.iter().filter(|c| c.env == env).collect();
        for metric in [Metric::Return, Metric::CumulativeRegret] {
            let path = dir.join(format!("{env}_{}.svg", metric.slug()));
            std::fs::write(&path, render_svg(env, metric, &cells)).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
