//! Exact three-phase power flow for radial feeders via current-injection
//! backward/forward sweep with full 3x3 complex line impedance blocks.
//!
//! This is the "plant" of the closed loop. It is deliberately a different
//! model from the controller's linear sensitivity matrices, so the feedback
//! controller runs against genuine model mismatch.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use super::{
    FeederError, FeederTopology, Injections, LineImpedanceConfig, NodeIndex, Phase, VoltageProfile,
};

#[derive(Debug, Clone, Copy)]
pub struct PlantOptions {
    /// Convergence tolerance on the max complex voltage change, p.u.
    pub tol: f64,
    pub max_iter: usize,
    /// Declare voltage collapse when any phase magnitude falls below this, p.u.
    pub v_floor: f64,
}

impl Default for PlantOptions {
    fn default() -> Self {
        PlantOptions {
            tol: 1e-9,
            max_iter: 100,
            v_floor: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantSolution {
    pub profile: VoltageProfile,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantError {
    Feeder(FeederError),
    NotConverged { iterations: usize, residual: f64 },
    VoltageCollapse { bus: String, phase: char, vmag: f64 },
}

impl fmt::Display for PlantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlantError::Feeder(e) => write!(f, "{e}"),
            PlantError::NotConverged {
                iterations,
                residual,
            } => write!(
                f,
                "power flow did not converge after {iterations} iterations (residual {residual:.3e})"
            ),
            PlantError::VoltageCollapse { bus, phase, vmag } => write!(
                f,
                "voltage collapse at bus '{bus}' phase {phase}: |V| = {vmag:.4} p.u."
            ),
        }
    }
}

impl From<FeederError> for PlantError {
    fn from(e: FeederError) -> Self {
        PlantError::Feeder(e)
    }
}

/// Balanced 120-degree rotation of the slack phasors.
fn phase_reference(phase: Phase) -> Complex64 {
    match phase {
        Phase::A => Complex64::new(1.0, 0.0),
        Phase::B => Complex64::from_polar(1.0, -2.0 * core::f64::consts::PI / 3.0),
        Phase::C => Complex64::from_polar(1.0, 2.0 * core::f64::consts::PI / 3.0),
    }
}

/// Solve the exact power flow for net per-node complex injections
/// (`injections - demand`, p.u., injection positive). Returns squared
/// voltage magnitudes indexed like [`NodeIndex`].
pub fn plant_powerflow(
    topology: &FeederTopology,
    configs: &BTreeMap<String, LineImpedanceConfig>,
    injections: &Injections,
    demand: &Injections,
    options: &PlantOptions,
) -> Result<PlantSolution, PlantError> {
    let tree = topology.validate()?;
    let index = NodeIndex::build(topology)?;
    let n = index.len();
    for len in [
        injections.p.len(),
        injections.q.len(),
        demand.p.len(),
        demand.q.len(),
    ] {
        if len != n {
            return Err(FeederError::DimensionMismatch {
                expected: n,
                got: len,
            }
            .into());
        }
    }

    let z_base = topology.bases.z_base_ohm();
    let slack = topology.bus_index(&topology.slack_bus).unwrap();

    // Per-line complex impedance blocks in p.u., masked to the line's phases.
    let mut z_line: Vec<[[Complex64; 3]; 3]> = Vec::with_capacity(topology.lines.len());
    for line in &topology.lines {
        let config = configs
            .get(&line.config)
            .ok_or_else(|| FeederError::UnknownConfig(line.config.clone()))?;
        config.validate_for_mask(line.phases)?;
        let scale = line.length_mi / z_base;
        let mut z = [[Complex64::new(0.0, 0.0); 3]; 3];
        for pi in line.phases.iter() {
            for pj in line.phases.iter() {
                let (i, j) = (pi.idx(), pj.idx());
                z[i][j] = Complex64::new(config.r[i][j] * scale, config.x[i][j] * scale);
            }
        }
        z_line.push(z);
    }

    // Net complex injection per node.
    let s_net: Vec<Complex64> = (0..n)
        .map(|k| Complex64::new(injections.p[k] - demand.p[k], injections.q[k] - demand.q[k]))
        .collect();

    // Complex voltage per (bus, phase); slack phases fixed.
    let nb = topology.buses.len();
    let mut v = vec![[Complex64::new(0.0, 0.0); 3]; nb];
    for (bi, bus) in topology.buses.iter().enumerate() {
        for phase in bus.phases.iter() {
            let mag = libm::sqrt(topology.slack_v2[phase.idx()]);
            v[bi][phase.idx()] = phase_reference(phase) * mag;
        }
    }

    let mut residual = f64::INFINITY;
    for iteration in 1..=options.max_iter {
        // Backward sweep: accumulate branch currents from the leaves.
        // branch_i[li] is the current flowing from the line's parent side
        // towards its child bus.
        let mut branch_i = vec![[Complex64::new(0.0, 0.0); 3]; topology.lines.len()];
        for &bus in tree.order.iter().rev() {
            if bus == slack {
                continue;
            }
            let li = tree.parent_line[bus].unwrap();
            for phase in topology.buses[bus].phases.iter() {
                let pi = phase.idx();
                // current delivered by the bus into the network
                let inj = match index.position(bus, phase) {
                    Some(k) => (s_net[k] / v[bus][pi]).conj(),
                    None => Complex64::new(0.0, 0.0),
                };
                branch_i[li][pi] -= inj;
            }
            // fold this bus's branch into its parent's branch
            if let Some(parent) = tree.parent_bus[bus] {
                if let Some(pl) = tree.parent_line[parent] {
                    for pi in 0..3 {
                        let flow = branch_i[li][pi];
                        branch_i[pl][pi] += flow;
                    }
                }
            }
        }

        // Forward sweep: update voltages from the slack outwards.
        let mut max_dv = 0.0f64;
        for &bus in &tree.order {
            if bus == slack {
                continue;
            }
            let li = tree.parent_line[bus].unwrap();
            let parent = tree.parent_bus[bus].unwrap();
            let z = &z_line[li];
            for phase in topology.buses[bus].phases.iter() {
                let pi = phase.idx();
                let mut drop = Complex64::new(0.0, 0.0);
                for pj in 0..3 {
                    drop += z[pi][pj] * branch_i[li][pj];
                }
                let v_new = v[parent][pi] - drop;
                let dv = (v_new - v[bus][pi]).norm();
                if dv > max_dv {
                    max_dv = dv;
                }
                v[bus][pi] = v_new;
                let vmag = v_new.norm();
                if vmag < options.v_floor {
                    return Err(PlantError::VoltageCollapse {
                        bus: topology.buses[bus].id.clone(),
                        phase: phase.letter(),
                        vmag,
                    });
                }
            }
        }

        residual = max_dv;
        if residual < options.tol {
            let v2 = index
                .iter()
                .map(|(_, (bus, phase))| v[bus][phase.idx()].norm_sqr())
                .collect();
            return Ok(PlantSolution {
                profile: VoltageProfile { v2 },
                iterations: iteration,
            });
        }
    }

    Err(PlantError::NotConverged {
        iterations: options.max_iter,
        residual,
    })
}
