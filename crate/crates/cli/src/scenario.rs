//! Assembly of parsed configuration into core model structures, shared
//! disturbance realizations, and closed-loop runs.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use voltsmooth_core::benchmark::BenchmarkConfig;
use voltsmooth_core::feeder::{
    build_sensitivity_model, Bases, Bus, FeederTopology, Injections, Line, LineImpedanceConfig,
    NodeIndex, Phase, PhaseMask, PlantOptions, SensitivityModel, Shunt,
};
use voltsmooth_core::fleet::FleetLayout;
use voltsmooth_core::ofo::OfoConfig;
use voltsmooth_core::sim::{
    rescale_trace, resample_zoh, run_closed_loop, synth_trace, ControllerSpec, DataCenterLoad,
    PlantModel, SimError, SimResult, SimSettings, SynthSpec,
};
use voltsmooth_core::storage::{BatterySpec, SocMode};

use crate::config::{FeederFile, ScenarioFile};
use crate::trace::read_trace_file;
use crate::CliError;

/// Everything needed to run one scenario, assembled and validated.
pub struct Assembled {
    pub model: PlantModel,
    pub layout: FleetLayout,
    pub soc_init_kwh: Vec<f64>,
    pub data_centers: Vec<DataCenterLoad>,
    pub settings: SimSettings,
    pub warmup_s: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub controller_kind: String,
    pub ofo_cfg: OfoConfig,
    pub benchmark_cfg: BenchmarkConfig,
    /// SHA-256 of the shared base disturbance realization.
    pub trace_hash: String,
}

fn parse_mask(s: &str, what: &str) -> Result<PhaseMask, CliError> {
    PhaseMask::parse(s).ok_or_else(|| CliError::Config(format!("{what}: bad phase set '{s}'")))
}

fn parse_phase(s: &str, what: &str) -> Result<Phase, CliError> {
    let mut chars = s.chars();
    match (chars.next().and_then(Phase::from_letter), chars.next()) {
        (Some(p), None) => Ok(p),
        _ => Err(CliError::Config(format!("{what}: bad phase '{s}'"))),
    }
}

/// Build the core topology and static demand from a feeder file.
pub fn build_feeder(
    file: &FeederFile,
) -> Result<
    (
        FeederTopology,
        BTreeMap<String, LineImpedanceConfig>,
        SensitivityModel,
        Injections,
    ),
    CliError,
> {
    let mut buses = Vec::new();
    for b in &file.buses {
        buses.push(Bus {
            id: b.id.clone(),
            phases: parse_mask(&b.phases, &format!("bus {}", b.id))?,
        });
    }
    let mut lines = Vec::new();
    for l in &file.lines {
        lines.push(Line {
            from: l.from.clone(),
            to: l.to.clone(),
            phases: parse_mask(&l.phases, &format!("line {}-{}", l.from, l.to))?,
            length_mi: l.length_mi,
            config: l.config.clone(),
        });
    }
    let mut shunts = Vec::new();
    for s in &file.shunts {
        shunts.push(Shunt {
            bus: s.bus.clone(),
            phase: parse_phase(&s.phase, &format!("shunt at {}", s.bus))?,
            kvar: s.kvar,
        });
    }
    let v2 = file.slack.v_pu * file.slack.v_pu;
    let topology = FeederTopology {
        buses,
        lines,
        slack_bus: file.slack.bus.clone(),
        slack_v2: [v2; 3],
        shunts,
        bases: Bases {
            s_base_kva: file.bases.s_base_kva,
            v_base_kv: file.bases.v_base_kv,
        },
    };
    topology
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut configs = BTreeMap::new();
    for (name, c) in &file.configs {
        let cfg = LineImpedanceConfig { r: c.r, x: c.x };
        cfg.validate()
            .map_err(|e| CliError::Config(format!("config '{name}': {e}")))?;
        configs.insert(name.clone(), cfg);
    }

    let model = build_sensitivity_model(&topology, &configs)
        .map_err(|e| CliError::Config(e.to_string()))?;

    // static demand: spot loads positive, capacitor shunts as negative
    // reactive demand
    let n = model.index.len();
    let s_phase = topology.bases.s_phase_kva();
    let mut demand = Injections::zeros(n);
    let node_of = |bus: &str, phase: Phase, what: &str| -> Result<usize, CliError> {
        let bi = topology
            .bus_index(bus)
            .ok_or_else(|| CliError::Config(format!("{what}: unknown bus '{bus}'")))?;
        model.index.position(bi, phase).ok_or_else(|| {
            CliError::Config(format!(
                "{what}: phase {} absent at bus '{bus}'",
                phase.letter()
            ))
        })
    };
    for l in &file.loads {
        let phase = parse_phase(&l.phase, &format!("load at {}", l.bus))?;
        let node = node_of(&l.bus, phase, &format!("load at {}", l.bus))?;
        demand.p[node] += l.kw / s_phase;
        demand.q[node] += l.kvar / s_phase;
    }
    for s in &topology.shunts {
        let node = node_of(&s.bus.clone(), s.phase, &format!("shunt at {}", s.bus))?;
        demand.q[node] -= s.kvar / s_phase;
    }

    Ok((topology, configs, model, demand))
}

fn soc_mode(name: &str) -> Result<SocMode, CliError> {
    match name {
        "paper" => Ok(SocMode::Paper),
        "physical" => Ok(SocMode::Physical),
        other => Err(CliError::Config(format!(
            "soc_mode must be 'paper' or 'physical', got '{other}'"
        ))),
    }
}

/// Valid controller names, in the fixed reporting order.
pub const CONTROLLERS: [&str; 4] = ["none", "ofo", "ofo-no-smoothing", "benchmark"];

pub fn controller_spec(assembled: &Assembled, kind: &str) -> Result<ControllerSpec, CliError> {
    match kind {
        "none" => Ok(ControllerSpec::None),
        "ofo" => Ok(ControllerSpec::Ofo(assembled.ofo_cfg)),
        "ofo-no-smoothing" => Ok(ControllerSpec::Ofo(OfoConfig {
            c_vf: 0.0,
            ..assembled.ofo_cfg
        })),
        "benchmark" => Ok(ControllerSpec::Benchmark(assembled.benchmark_cfg)),
        other => Err(CliError::Config(format!(
            "unknown controller '{other}' (expected one of {})",
            CONTROLLERS.join(", ")
        ))),
    }
}

/// Assemble a scenario: build the feeder, place the fleet and data centers,
/// and realize the shared disturbance trace.
pub fn assemble(
    scenario: &ScenarioFile,
    scenario_dir: &Path,
    seed_override: Option<u64>,
) -> Result<Assembled, CliError> {
    if !(scenario.dt_s > 0.0) {
        return Err(CliError::Config("dt_s must be > 0".into()));
    }
    if !(scenario.v_min < scenario.v_max) {
        return Err(CliError::Config("v_min must be below v_max".into()));
    }
    let mode = soc_mode(&scenario.soc_mode)?;
    let settings = SimSettings {
        dt_s: scenario.dt_s,
        duration_s: scenario.duration_s,
        soc_mode: mode,
    };
    let steps = settings.steps().map_err(|e| CliError::Config(e.to_string()))?;

    let feeder_path = scenario_dir.join(&scenario.feeder);
    let mut feeder_file = crate::config::load_feeder_file(&feeder_path)?;
    if let Some(v) = scenario.slack_v_pu {
        feeder_file.slack.v_pu = v;
    }
    let (topology, configs, model, static_demand) = build_feeder(&feeder_file)?;

    // fleet
    let mut batteries = Vec::new();
    let mut soc_init_kwh = Vec::new();
    for b in &scenario.batteries {
        if !(0.0 < b.e_min_frac && b.e_min_frac < b.e_max_frac && b.e_max_frac <= 1.0) {
            return Err(CliError::Config(format!(
                "battery at {}: SoC fractions must satisfy 0 < e_min_frac < e_max_frac <= 1",
                b.bus
            )));
        }
        batteries.push(BatterySpec {
            bus: b.bus.clone(),
            phases: parse_mask(&b.phases, &format!("battery at {}", b.bus))?,
            s_max_kw: b.s_max_kw,
            capacity_kwh: b.capacity_kwh,
            e_min_kwh: b.e_min_frac * b.capacity_kwh,
            e_max_kwh: b.e_max_frac * b.capacity_kwh,
            eta_dis: b.eta_dis,
            eta_chg: b.eta_chg,
        });
        soc_init_kwh.push(b.soc_init_frac * b.capacity_kwh);
    }
    let layout = FleetLayout::build(batteries, &topology, &model.index)
        .map_err(|e| CliError::Config(e.to_string()))?;

    // shared base disturbance realization
    let seed = seed_override.unwrap_or(scenario.trace.seed);
    let base: Vec<f64> = match scenario.trace.source.as_str() {
        "synthetic" => synth_trace(
            &SynthSpec {
                seed,
                min_mw: scenario.trace.min_mw,
                max_mw: scenario.trace.max_mw,
                mean_dwell_s: scenario.trace.mean_dwell_s,
            },
            scenario.dt_s,
            steps,
        ),
        "file" => {
            let rel = scenario.trace.file.as_ref().ok_or_else(|| {
                CliError::Config("trace.source = \"file\" requires trace.file".into())
            })?;
            let parsed = read_trace_file(&scenario_dir.join(rel))?;
            let resampled = resample_zoh(&parsed.samples, parsed.interval_s, scenario.dt_s, steps);
            rescale_trace(&resampled, scenario.trace.min_mw, scenario.trace.max_mw)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        other => {
            return Err(CliError::Config(format!(
                "trace.source must be 'synthetic' or 'file', got '{other}'"
            )))
        }
    };
    let mut hasher = Sha256::new();
    for v in &base {
        hasher.update(v.to_le_bytes());
    }
    let trace_hash = format!("{:x}", hasher.finalize());

    // data centers: per-placement affine rescale of the shared realization
    let mut data_centers = Vec::new();
    for dc in &scenario.data_centers {
        let bi = topology
            .bus_index(&dc.bus)
            .ok_or_else(|| CliError::Config(format!("data center: unknown bus '{}'", dc.bus)))?;
        let nodes: Vec<usize> = topology.buses[bi]
            .phases
            .iter()
            .filter_map(|p| model.index.position(bi, p))
            .collect();
        if nodes.is_empty() {
            return Err(CliError::Config(format!(
                "data center at '{}' has no controllable phases",
                dc.bus
            )));
        }
        let mw = match (dc.min_mw, dc.max_mw) {
            (None, None) => base.clone(),
            (Some(lo), Some(hi)) => rescale_trace(&base, lo, hi)
                .map_err(|e| CliError::Config(format!("data center at '{}': {e}", dc.bus)))?,
            _ => {
                return Err(CliError::Config(format!(
                    "data center at '{}': set both min_mw and max_mw or neither",
                    dc.bus
                )))
            }
        };
        data_centers.push(DataCenterLoad {
            bus: dc.bus.clone(),
            nodes,
            power_factor: dc.power_factor,
            mw,
        });
    }

    let ofo_cfg = OfoConfig {
        rho: scenario.controller.ofo.rho,
        c_vf: scenario.controller.ofo.c_vf,
        c_p: scenario.controller.ofo.c_p,
        c_q: scenario.controller.ofo.c_q,
        v_min2: scenario.v_min * scenario.v_min,
        v_max2: scenario.v_max * scenario.v_max,
        anti_windup: scenario.controller.ofo.anti_windup,
        soc_mode: mode,
        dt_s: scenario.dt_s,
        ..OfoConfig::default()
    };
    ofo_cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let b = &scenario.controller.benchmark;
    let benchmark_cfg = BenchmarkConfig {
        deadband: b.deadband,
        dv_max: b.dv_max,
        v_dev_max: b.v_dev_max,
        v_set: b.v_set,
        alpha: b.alpha,
        theta: b.theta,
        rho: b.rho,
    };
    benchmark_cfg
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    Ok(Assembled {
        model: PlantModel {
            topology,
            configs,
            sensitivity: model,
            static_demand,
            options: PlantOptions::default(),
        },
        layout,
        soc_init_kwh,
        data_centers,
        settings,
        warmup_s: scenario.warmup_s,
        v_min: scenario.v_min,
        v_max: scenario.v_max,
        controller_kind: scenario.controller.kind.clone(),
        ofo_cfg,
        benchmark_cfg,
        trace_hash,
    })
}

/// Run one controller on the assembled scenario.
pub fn run(assembled: &Assembled, kind: &str) -> Result<SimResult, CliError> {
    let spec = controller_spec(assembled, kind)?;
    run_closed_loop(
        &assembled.model,
        &assembled.layout,
        &spec,
        &assembled.data_centers,
        &assembled.soc_init_kwh,
        &assembled.settings,
    )
    .map_err(|e| match e {
        SimError::Plant { .. } => CliError::Plant(e.to_string()),
        other => CliError::Config(other.to_string()),
    })
}

/// Human-readable node labels ("bus.phase") in index order.
pub fn node_labels(topology: &FeederTopology, index: &NodeIndex) -> Vec<String> {
    index
        .iter()
        .map(|(_, (bus, phase))| format!("{}.{}", topology.buses[bus].id, phase.letter()))
        .collect()
}
