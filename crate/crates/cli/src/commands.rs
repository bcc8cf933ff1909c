//! Implementations of the CLI subcommands, reusable from integration tests.

use std::path::Path;

use nalgebra::DMatrix;
use voltsmooth_core::sim::{compute_metrics, synth_trace, Metrics, SimResult, SynthSpec};

use crate::config::load_scenario_file;
use crate::output;
use crate::scenario::{assemble, node_labels, run, Assembled, CONTROLLERS};
use crate::trace::write_trace_file;
use crate::CliError;

/// Parse + assemble a scenario and report model dimensions and sensitivity
/// conditioning. Errors if any invariant fails.
pub fn cmd_validate(scenario_path: &Path) -> Result<String, CliError> {
    let (scenario, dir) = load_scenario_file(scenario_path)?;
    let assembled = assemble(&scenario, &dir, None)?;
    let model = &assembled.model.sensitivity;
    let n = model.index.len();
    let r = DMatrix::from_fn(n, n, |i, j| model.r3.get(i, j));
    let sym = (&r + r.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let steps = assembled
        .settings
        .steps()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut report = String::new();
    report.push_str(&format!("scenario: {}\n", scenario_path.display()));
    report.push_str(&format!("buses: {}\n", assembled.model.topology.buses.len()));
    report.push_str(&format!("nodes (bus, phase): {n}\n"));
    report.push_str(&format!("batteries: {}\n", assembled.layout.n_batteries()));
    report.push_str(&format!(
        "battery phase entries: {}\n",
        assembled.layout.n_entries()
    ));
    report.push_str(&format!("data centers: {}\n", assembled.data_centers.len()));
    report.push_str(&format!("steps: {steps}\n"));
    report.push_str(&format!(
        "sensitivity eigenvalues (symmetrized): min {min_ev:.6e}, max {max_ev:.6e}\n"
    ));
    report.push_str(&format!("controller: {}\n", assembled.controller_kind));
    report.push_str("valid\n");
    Ok(report)
}

pub struct RunOutput {
    pub result: SimResult,
    pub metrics: Metrics,
}

/// Run one controller, write its artifacts to `out_dir`, return the metrics.
pub fn run_one(
    assembled: &Assembled,
    kind: &str,
    out_dir: &Path,
    warmup_s: f64,
    render: bool,
) -> Result<RunOutput, CliError> {
    let result = run(assembled, kind)?;
    let metrics = compute_metrics(&result, warmup_s, assembled.v_min, assembled.v_max)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let labels = node_labels(&assembled.model.topology, &assembled.model.sensitivity.index);
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", out_dir.display())))?;
    output::write_timeseries(
        &out_dir.join(format!("{kind}_timeseries.csv")),
        &result,
        &labels,
        assembled,
    )?;
    output::write_run_metrics(
        &out_dir.join(format!("{kind}_metrics.csv")),
        &metrics,
        &labels,
        assembled,
    )?;
    output::write_histogram(
        &out_dir.join(format!("{kind}_histogram.csv")),
        &result,
        warmup_s,
        60,
        0.90,
        1.10,
    )?;
    output::write_soc(&out_dir.join(format!("{kind}_soc.csv")), &result, assembled)?;
    if render {
        output::render_voltage_svg(
            &out_dir.join(format!("{kind}_voltage.svg")),
            &result,
            assembled.v_min,
            assembled.v_max,
        )?;
    }
    Ok(RunOutput { result, metrics })
}

pub fn cmd_run(
    scenario_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    controller: Option<&str>,
    warmup: Option<f64>,
    render: bool,
) -> Result<String, CliError> {
    let (scenario, dir) = load_scenario_file(scenario_path)?;
    let assembled = assemble(&scenario, &dir, seed)?;
    let kind = controller.unwrap_or(&assembled.controller_kind).to_string();
    let warmup_s = warmup.unwrap_or(assembled.warmup_s);
    let out = run_one(&assembled, &kind, out_dir, warmup_s, render)?;
    let table = output::comparison_table(
        &[kind.clone()],
        std::slice::from_ref(&out.metrics),
        &assembled.trace_hash,
    );
    Ok(table)
}

/// Run several controllers on the identical disturbance realization and
/// write a joint metrics table.
pub fn cmd_compare(
    scenario_path: &Path,
    out_dir: &Path,
    controllers: &[String],
    seed: Option<u64>,
    warmup: Option<f64>,
    render: bool,
) -> Result<String, CliError> {
    if controllers.len() < 2 {
        return Err(CliError::Config(
            "compare needs at least 2 controllers".into(),
        ));
    }
    for c in controllers {
        if !CONTROLLERS.contains(&c.as_str()) {
            return Err(CliError::Config(format!(
                "unknown controller '{c}' (expected one of {})",
                CONTROLLERS.join(", ")
            )));
        }
    }
    let (scenario, dir) = load_scenario_file(scenario_path)?;
    let assembled = assemble(&scenario, &dir, seed)?;
    let warmup_s = warmup.unwrap_or(assembled.warmup_s);
    let mut metrics = Vec::new();
    for kind in controllers {
        let out = run_one(&assembled, kind, out_dir, warmup_s, render)
            .map_err(|e| match e {
                CliError::Plant(m) => CliError::Plant(format!("controller '{kind}': {m}")),
                other => other,
            })?;
        metrics.push(out.metrics);
    }
    let table = output::comparison_table(controllers, &metrics, &assembled.trace_hash);
    std::fs::write(out_dir.join("metrics.csv"), &table)
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(table)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth_trace(
    out_path: &Path,
    seed: u64,
    samples: usize,
    dt_s: f64,
    min_mw: f64,
    max_mw: f64,
    mean_dwell_s: f64,
) -> Result<String, CliError> {
    if !(dt_s > 0.0) || samples == 0 || !(min_mw < max_mw) {
        return Err(CliError::Config(
            "need dt > 0, samples > 0, min_mw < max_mw".into(),
        ));
    }
    let trace = synth_trace(
        &SynthSpec {
            seed,
            min_mw,
            max_mw,
            mean_dwell_s,
        },
        dt_s,
        samples,
    );
    write_trace_file(out_path, &trace, dt_s, "MW")?;
    Ok(format!(
        "wrote {} samples to {}\n",
        samples,
        out_path.display()
    ))
}
