//! Deterministic closed-loop simulation: disturbance traces, plant stepping,
//! controller invocation, and performance metrics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::benchmark::{BenchmarkConfig, BenchmarkController, BenchmarkError};
use crate::feeder::{
    plant_powerflow, FeederTopology, Injections, LineImpedanceConfig, PlantError, PlantOptions,
    SensitivityModel,
};
use crate::fleet::FleetLayout;
use crate::ofo::{OfoConfig, OfoController, OfoError};
use crate::storage::{soc_step, SocMode};

// ---------------------------------------------------------------------------
// Disturbance traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum TraceError {
    Empty,
    Constant,
    BadRange { min: f64, max: f64 },
    NonNumeric { line: usize },
}

impl fmt::Display for TraceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceError::Empty => write!(f, "trace contains no samples"),
            TraceError::Constant => {
                write!(f, "trace is constant; affine rescaling is degenerate")
            }
            TraceError::BadRange { min, max } => {
                write!(f, "scaling range must satisfy min < max (got {min}, {max})")
            }
            TraceError::NonNumeric { line } => write!(f, "non-numeric sample at line {line}"),
        }
    }
}

/// Affine rescaling mapping the source extremes onto `[min_mw, max_mw]`.
pub fn rescale_trace(samples: &[f64], min_mw: f64, max_mw: f64) -> Result<Vec<f64>, TraceError> {
    if samples.is_empty() {
        return Err(TraceError::Empty);
    }
    if !(min_mw < max_mw) {
        return Err(TraceError::BadRange {
            min: min_mw,
            max: max_mw,
        });
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Err(TraceError::Constant);
    }
    let scale = (max_mw - min_mw) / (hi - lo);
    Ok(samples.iter().map(|&x| min_mw + (x - lo) * scale).collect())
}

/// Zero-order-hold resampling from `src_dt_s` to `dst_dt_s`, producing
/// `n_out` samples (the last source sample extends past the end).
pub fn resample_zoh(samples: &[f64], src_dt_s: f64, dst_dt_s: f64, n_out: usize) -> Vec<f64> {
    (0..n_out)
        .map(|i| {
            let t = i as f64 * dst_dt_s;
            let k = libm::floor(t / src_dt_s) as usize;
            samples[k.min(samples.len() - 1)]
        })
        .collect()
}

/// Synthetic bursty load generator: piecewise-constant levels drawn
/// uniformly in the scaling range, with geometric dwell lengths.
#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub seed: u64,
    pub min_mw: f64,
    pub max_mw: f64,
    pub mean_dwell_s: f64,
}

pub fn synth_trace(spec: &SynthSpec, dt_s: f64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mean_steps = (spec.mean_dwell_s / dt_s).max(1.0);
    let p = 1.0 / mean_steps;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let level = spec.min_mw + (spec.max_mw - spec.min_mw) * rng.gen::<f64>();
        let remaining = n - out.len();
        let dwell = if p >= 1.0 {
            1
        } else {
            let u: f64 = rng.gen();
            // geometric sample; log1p keeps tiny p (long dwells) accurate
            let k = libm::floor(libm::log1p(-u) / libm::log1p(-p)) + 1.0;
            if k.is_finite() && k < remaining as f64 {
                (k as usize).max(1)
            } else {
                remaining
            }
        };
        for _ in 0..dwell.min(remaining) {
            out.push(level);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Scenario pieces
// ---------------------------------------------------------------------------

/// A data center: balanced load spread over its bus phases at fixed power
/// factor, driven by a MW trace already resampled to the control period.
#[derive(Debug, Clone)]
pub struct DataCenterLoad {
    pub bus: String,
    /// Node indices of the bus phases the load is split over.
    pub nodes: Vec<usize>,
    pub power_factor: f64,
    pub mw: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PlantModel {
    pub topology: FeederTopology,
    pub configs: BTreeMap<String, LineImpedanceConfig>,
    pub sensitivity: SensitivityModel,
    /// Static loads minus fixed shunt injections, p.u. per node.
    pub static_demand: Injections,
    pub options: PlantOptions,
}

#[derive(Debug, Clone)]
pub enum ControllerSpec {
    None,
    Ofo(OfoConfig),
    Benchmark(BenchmarkConfig),
}

#[derive(Debug, Clone, Copy)]
pub struct SimSettings {
    pub dt_s: f64,
    pub duration_s: f64,
    pub soc_mode: SocMode,
}

impl SimSettings {
    pub fn steps(&self) -> Result<usize, SimError> {
        if !(self.dt_s > 0.0) {
            return Err(SimError::Config("dt must be > 0"));
        }
        let raw = self.duration_s / self.dt_s;
        let steps = libm::round(raw);
        if (raw - steps).abs() > 1e-9 || steps < 1.0 {
            return Err(SimError::Config("duration must be a positive multiple of dt"));
        }
        Ok(steps as usize)
    }
}

#[derive(Debug, Clone)]
pub struct DualRecord {
    pub mu_lo: Vec<f64>,
    pub mu_hi: Vec<f64>,
    pub lam_lo: Vec<f64>,
    pub lam_hi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Squared voltage magnitudes per node, p.u.^2.
    pub v2: Vec<f64>,
    pub soc_kwh: Vec<f64>,
    /// Applied setpoints per fleet entry, kW/kvar.
    pub p_kw: Vec<f64>,
    pub q_kw: Vec<f64>,
    pub duals: Option<DualRecord>,
    pub plant_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub dt_s: f64,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Config(&'static str),
    Plant { step: usize, source: PlantError },
    Ofo(OfoError),
    Benchmark(BenchmarkError),
    Trace(TraceError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Config(msg) => write!(f, "bad scenario: {msg}"),
            SimError::Plant { step, source } => write!(f, "plant failed at step {step}: {source}"),
            SimError::Ofo(e) => write!(f, "{e}"),
            SimError::Benchmark(e) => write!(f, "{e}"),
            SimError::Trace(e) => write!(f, "{e}"),
        }
    }
}

impl From<OfoError> for SimError {
    fn from(e: OfoError) -> Self {
        SimError::Ofo(e)
    }
}

impl From<BenchmarkError> for SimError {
    fn from(e: BenchmarkError) -> Self {
        SimError::Benchmark(e)
    }
}

impl From<TraceError> for SimError {
    fn from(e: TraceError) -> Self {
        SimError::Trace(e)
    }
}

enum ControllerInstance {
    None,
    Ofo(OfoController),
    Benchmark(BenchmarkController),
}

/// Run the closed loop: per step, assemble demand, solve the plant, feed the
/// measurement to the controller, apply the returned setpoints, and advance
/// the SoC. The loop is strictly sequential and fully deterministic.
pub fn run_closed_loop(
    model: &PlantModel,
    layout: &FleetLayout,
    controller: &ControllerSpec,
    data_centers: &[DataCenterLoad],
    soc_init_kwh: &[f64],
    settings: &SimSettings,
) -> Result<SimResult, SimError> {
    let steps = settings.steps()?;
    let n = model.sensitivity.index.len();
    if model.static_demand.len() != n {
        return Err(SimError::Config("static demand dimension mismatch"));
    }
    for dc in data_centers {
        if dc.mw.len() < steps {
            return Err(SimError::Config("disturbance trace shorter than the run"));
        }
        if !(dc.power_factor > 0.0 && dc.power_factor <= 1.0) {
            return Err(SimError::Config("power factor must be in (0, 1]"));
        }
    }
    if soc_init_kwh.len() != layout.n_batteries() {
        return Err(SimError::Config("initial SoC dimension mismatch"));
    }

    let mut instance = match controller {
        ControllerSpec::None => ControllerInstance::None,
        ControllerSpec::Ofo(cfg) => ControllerInstance::Ofo(OfoController::new(
            *cfg,
            layout.clone(),
            model.sensitivity.clone(),
        )?),
        ControllerSpec::Benchmark(cfg) => ControllerInstance::Benchmark(BenchmarkController::new(
            *cfg,
            layout.clone(),
            &model.sensitivity.index,
        )?),
    };

    let s_phase = layout.s_phase_base_kva;
    let mut soc = soc_init_kwh.to_vec();
    let mut p_pu = vec![0.0; layout.n_entries()];
    let mut q_pu = vec![0.0; layout.n_entries()];
    let mut records = Vec::with_capacity(steps);

    for step in 0..steps {
        // 1. demand: static loads + data center draw (balanced per phase)
        let mut demand = model.static_demand.clone();
        for dc in data_centers {
            let p_mw = dc.mw[step];
            let q_mw = p_mw * libm::tan(libm::acos(dc.power_factor));
            let per_phase = 1000.0 / (dc.nodes.len() as f64 * s_phase);
            for &node in &dc.nodes {
                demand.p[node] += p_mw * per_phase;
                demand.q[node] += q_mw * per_phase;
            }
        }

        // 2. plant solve with the currently applied setpoints
        let mut injections = Injections::zeros(n);
        for (m, entry) in layout.entries.iter().enumerate() {
            injections.p[entry.node] += p_pu[m];
            injections.q[entry.node] += q_pu[m];
        }
        let sol = plant_powerflow(
            &model.topology,
            &model.configs,
            &injections,
            &demand,
            &model.options,
        )
        .map_err(|source| SimError::Plant { step, source })?;
        let v2 = sol.profile.v2;

        // 3-4. controller sees the measurement and returns new setpoints
        let duals = match &mut instance {
            ControllerInstance::None => None,
            ControllerInstance::Ofo(ctrl) => {
                let (p, q) = ctrl.step(&v2, &soc)?;
                p_pu = p;
                q_pu = q;
                Some(DualRecord {
                    mu_lo: ctrl.duals.mu_lo.clone(),
                    mu_hi: ctrl.duals.mu_hi.clone(),
                    lam_lo: ctrl.duals.lam_lo.clone(),
                    lam_hi: ctrl.duals.lam_hi.clone(),
                })
            }
            ControllerInstance::Benchmark(ctrl) => {
                let (p, q) = ctrl.step(&v2, &soc);
                p_pu = p;
                q_pu = q;
                None
            }
        };

        // 5. advance SoC with the newly applied setpoints
        for (b, spec) in layout.batteries.iter().enumerate() {
            let p_kw: Vec<f64> = layout.entries_of(b).map(|m| p_pu[m] * s_phase).collect();
            let q_kw: Vec<f64> = layout.entries_of(b).map(|m| q_pu[m] * s_phase).collect();
            soc[b] = soc_step(soc[b], &p_kw, &q_kw, spec, settings.dt_s, settings.soc_mode)
                .clamp(0.0, spec.capacity_kwh);
        }

        records.push(StepRecord {
            v2,
            soc_kwh: soc.clone(),
            p_kw: p_pu.iter().map(|&p| p * s_phase).collect(),
            q_kw: q_pu.iter().map(|&q| q * s_phase).collect(),
            duals,
            plant_iterations: sol.iterations,
        });
    }

    Ok(SimResult {
        dt_s: settings.dt_s,
        records,
    })
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesMetrics {
    /// Population variance of the voltage magnitudes, p.u.^2.
    pub variance: f64,
    /// max - min of the magnitudes, p.u.
    pub range: f64,
    /// Accumulated magnitude excess beyond the limits, p.u. * steps.
    pub violation: f64,
}

#[derive(Debug, Clone)]
pub struct Metrics {
    pub per_node: Vec<SeriesMetrics>,
    /// Pooled over all nodes and steps; violation is the total sum.
    pub aggregate: SeriesMetrics,
    pub warmup_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    WarmupTooLong,
    Empty,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::WarmupTooLong => write!(f, "warm-up window covers the whole run"),
            MetricsError::Empty => write!(f, "no records to compute metrics on"),
        }
    }
}

fn series_metrics(samples: &[f64], v_min: f64, v_max: f64) -> SeriesMetrics {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let violation = samples
        .iter()
        .map(|&x| (x - v_max).max(0.0) + (v_min - x).max(0.0))
        .sum();
    SeriesMetrics {
        variance,
        range: hi - lo,
        violation,
    }
}

/// Metrics over voltage magnitudes (square roots of the recorded squared
/// profile), excluding the warm-up window.
pub fn compute_metrics(
    result: &SimResult,
    warmup_s: f64,
    v_min: f64,
    v_max: f64,
) -> Result<Metrics, MetricsError> {
    if result.records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let warmup_steps = libm::ceil(warmup_s / result.dt_s) as usize;
    if warmup_steps >= result.records.len() {
        return Err(MetricsError::WarmupTooLong);
    }
    let records = &result.records[warmup_steps..];
    let n = records[0].v2.len();
    let mut per_node = Vec::with_capacity(n);
    let mut pooled = Vec::with_capacity(n * records.len());
    for node in 0..n {
        let series: Vec<f64> = records.iter().map(|r| libm::sqrt(r.v2[node])).collect();
        pooled.extend_from_slice(&series);
        per_node.push(series_metrics(&series, v_min, v_max));
    }
    let aggregate = series_metrics(&pooled, v_min, v_max);
    Ok(Metrics {
        per_node,
        aggregate,
        warmup_steps,
    })
}
