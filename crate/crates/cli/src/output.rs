//! Deterministic, byte-stable output files: time series, metrics tables,
//! voltage histograms, SoC trajectories, and an optional minimal SVG render.
//!
//! All floating-point values are written with fixed precision so identical
//! runs produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use voltsmooth_core::sim::{Metrics, SimResult};

use crate::scenario::Assembled;
use crate::CliError;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

/// Per-step time series: squared voltages per node, battery SoC, setpoints,
/// and OFO dual norms when present.
pub fn write_timeseries(
    path: &Path,
    result: &SimResult,
    labels: &[String],
    assembled: &Assembled,
) -> Result<(), CliError> {
    let mut out = String::new();
    let _ = writeln!(out, "# trace_sha256 = {}", assembled.trace_hash);
    let mut header = String::from("t_s");
    for l in labels {
        let _ = write!(header, ",v2_{l}");
    }
    for b in 0..assembled.layout.n_batteries() {
        let _ = write!(header, ",soc_kwh_{}", assembled.layout.batteries[b].bus);
    }
    for e in &assembled.layout.entries {
        let _ = write!(
            header,
            ",p_kw_{}_{},q_kvar_{}_{}",
            assembled.layout.batteries[e.battery].bus,
            e.phase.letter(),
            assembled.layout.batteries[e.battery].bus,
            e.phase.letter()
        );
    }
    header.push_str(",mu_lo_sum,mu_hi_sum,plant_iterations");
    out.push_str(&header);
    out.push('\n');

    for (k, rec) in result.records.iter().enumerate() {
        let _ = write!(out, "{:.3}", k as f64 * result.dt_s);
        for v in &rec.v2 {
            let _ = write!(out, ",{v:.12}");
        }
        for s in &rec.soc_kwh {
            let _ = write!(out, ",{s:.9}");
        }
        for m in 0..rec.p_kw.len() {
            let _ = write!(out, ",{:.9},{:.9}", rec.p_kw[m], rec.q_kw[m]);
        }
        match &rec.duals {
            Some(d) => {
                let lo: f64 = d.mu_lo.iter().sum();
                let hi: f64 = d.mu_hi.iter().sum();
                let _ = write!(out, ",{lo:.12},{hi:.12}");
            }
            None => out.push_str(",,"),
        }
        let _ = writeln!(out, ",{}", rec.plant_iterations);
    }
    write_file(path, &out)
}

/// Per-node metrics plus the pooled aggregate for one run.
pub fn write_run_metrics(
    path: &Path,
    metrics: &Metrics,
    labels: &[String],
    assembled: &Assembled,
) -> Result<(), CliError> {
    let mut out = String::new();
    let _ = writeln!(out, "# trace_sha256 = {}", assembled.trace_hash);
    let _ = writeln!(out, "# warmup_steps = {}", metrics.warmup_steps);
    out.push_str("node,variance_pu2,range_pu,violation_pu_steps\n");
    for (i, m) in metrics.per_node.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e}",
            labels[i], m.variance, m.range, m.violation
        );
    }
    let a = &metrics.aggregate;
    let _ = writeln!(
        out,
        "aggregate,{:.12e},{:.12e},{:.12e}",
        a.variance, a.range, a.violation
    );
    write_file(path, &out)
}

/// Joint comparison table: one metric per row, one controller per column.
pub fn comparison_table(
    controllers: &[String],
    metrics: &[Metrics],
    trace_hash: &str,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# trace_sha256 = {trace_hash}");
    let _ = writeln!(out, "metric,{}", controllers.join(","));
    for (name, pick) in [
        ("variance_pu2", 0usize),
        ("range_pu", 1),
        ("violation_pu_steps", 2),
    ] {
        let _ = write!(out, "{name}");
        for m in metrics {
            let a = &m.aggregate;
            let v = match pick {
                0 => a.variance,
                1 => a.range,
                _ => a.violation,
            };
            let _ = write!(out, ",{v:.12e}");
        }
        out.push('\n');
    }
    out
}

/// Voltage-magnitude histogram (post-warm-up, all nodes pooled).
pub fn write_histogram(
    path: &Path,
    result: &SimResult,
    warmup_s: f64,
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<(), CliError> {
    let warmup_steps = (warmup_s / result.dt_s).ceil() as usize;
    let mut counts = vec![0u64; bins];
    for rec in result.records.iter().skip(warmup_steps) {
        for &v2 in &rec.v2 {
            let v = v2.sqrt();
            let frac = (v - lo) / (hi - lo);
            let bin = (frac * bins as f64).floor();
            let bin = bin.clamp(0.0, bins as f64 - 1.0) as usize;
            counts[bin] += 1;
        }
    }
    let mut out = String::from("bin_lo_pu,bin_hi_pu,count\n");
    let width = (hi - lo) / bins as f64;
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:.6},{:.6},{c}",
            lo + i as f64 * width,
            lo + (i + 1) as f64 * width
        );
    }
    write_file(path, &out)
}

/// SoC trajectories, one column per battery, in percent of capacity.
pub fn write_soc(path: &Path, result: &SimResult, assembled: &Assembled) -> Result<(), CliError> {
    let mut out = String::from("t_s");
    for b in &assembled.layout.batteries {
        let _ = write!(out, ",soc_pct_{}", b.bus);
    }
    out.push('\n');
    for (k, rec) in result.records.iter().enumerate() {
        let _ = write!(out, "{:.3}", k as f64 * result.dt_s);
        for (b, spec) in assembled.layout.batteries.iter().enumerate() {
            let _ = write!(out, ",{:.6}", 100.0 * rec.soc_kwh[b] / spec.capacity_kwh);
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Minimal SVG line chart of the pooled mean voltage magnitude over time.
pub fn render_voltage_svg(
    path: &Path,
    result: &SimResult,
    v_min: f64,
    v_max: f64,
) -> Result<(), CliError> {
    let (w, h) = (900.0f64, 300.0f64);
    let n = result.records.len();
    let means: Vec<f64> = result
        .records
        .iter()
        .map(|r| r.v2.iter().map(|v| v.sqrt()).sum::<f64>() / r.v2.len() as f64)
        .collect();
    let lo = means.iter().cloned().fold(v_min, f64::min) - 0.01;
    let hi = means.iter().cloned().fold(v_max, f64::max) + 0.01;
    let x = |k: usize| k as f64 / (n.max(2) - 1) as f64 * w;
    let y = |v: f64| h - (v - lo) / (hi - lo) * h;
    let mut pts = String::new();
    for (k, v) in means.iter().enumerate() {
        let _ = write!(pts, "{:.1},{:.1} ", x(k), y(*v));
    }
    let svg = format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<line x1=\"0\" y1=\"{ymin:.1}\" x2=\"{w}\" y2=\"{ymin:.1}\" stroke=\"red\" stroke-dasharray=\"4\"/>\n",
            "<line x1=\"0\" y1=\"{ymax:.1}\" x2=\"{w}\" y2=\"{ymax:.1}\" stroke=\"red\" stroke-dasharray=\"4\"/>\n",
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        ymin = y(v_min),
        ymax = y(v_max),
        pts = pts.trim_end()
    );
    write_file(path, &svg)
}
