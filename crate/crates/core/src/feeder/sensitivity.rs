//! LinDist3Flow sensitivity matrices and the linearized voltage model.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::mat::Mat;

use super::{
    FeederError, FeederTopology, Injections, LineImpedanceConfig, NodeIndex, PhaseMask,
    VoltageProfile,
};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Linear voltage sensitivity model of a radial feeder.
///
/// `r3` and `x3` map per-unit active/reactive injections at every non-slack
/// (bus, phase) node to squared voltage magnitudes in p.u.^2.
#[derive(Debug, Clone)]
pub struct SensitivityModel {
    pub index: NodeIndex,
    pub r3: Mat,
    pub x3: Mat,
    /// Nominal squared voltages (slack voltage replicated per node), p.u.^2.
    pub v_n: Vec<f64>,
}

/// Build the 3-phase impedance matrices H^P, H^Q of one line configuration.
///
/// Off-diagonal terms carry the +/- sqrt(3) coupling depending on phase
/// rotation order: for the phase following `phi` the resistive term enters as
/// `-r + sqrt(3) x` in H^P, for the preceding phase as `-r - sqrt(3) x`.
/// Rows and columns of phases not in `mask` are zero.
pub fn build_h_matrices(
    config: &LineImpedanceConfig,
    mask: PhaseMask,
) -> Result<([[f64; 3]; 3], [[f64; 3]; 3]), FeederError> {
    config.validate_for_mask(mask)?;
    let mut hp = [[0.0; 3]; 3];
    let mut hq = [[0.0; 3]; 3];
    for phi in mask.iter() {
        let i = phi.idx();
        hp[i][i] = 2.0 * config.r[i][i];
        hq[i][i] = 2.0 * config.x[i][i];
        for psi in mask.iter() {
            if psi == phi {
                continue;
            }
            let j = psi.idx();
            let (r, x) = (config.r[i][j], config.x[i][j]);
            if psi == phi.next() {
                hp[i][j] = -r + SQRT3 * x;
                hq[i][j] = -x - SQRT3 * r;
            } else {
                hp[i][j] = -r - SQRT3 * x;
                hq[i][j] = -x + SQRT3 * r;
            }
        }
    }
    Ok((hp, hq))
}

/// Assemble the feeder-wide sensitivity matrices.
///
/// For a radial network the incidence-inverse form collapses to a path rule:
/// the 3x3 block coupling buses i and j is the sum of per-unit H matrices of
/// the lines shared by the slack-to-i and slack-to-j paths.
pub fn build_sensitivity_model(
    topology: &FeederTopology,
    configs: &BTreeMap<String, LineImpedanceConfig>,
) -> Result<SensitivityModel, FeederError> {
    let tree = topology.validate()?;
    let index = NodeIndex::build(topology)?;
    let n = index.len();
    let z_base = topology.bases.z_base_ohm();

    let mut r3 = Mat::zeros(n, n);
    let mut x3 = Mat::zeros(n, n);

    for (li, line) in topology.lines.iter().enumerate() {
        let config = configs
            .get(&line.config)
            .ok_or_else(|| FeederError::UnknownConfig(line.config.clone()))?;
        let (hp, hq) = build_h_matrices(config, line.phases)?;
        let scale = line.length_mi / z_base;

        // Buses fed through this line (the subtree below it).
        let child = {
            let f = topology.bus_index(&line.from).unwrap();
            let t = topology.bus_index(&line.to).unwrap();
            if tree.parent_line[t] == Some(li) {
                t
            } else {
                debug_assert_eq!(tree.parent_line[f], Some(li));
                f
            }
        };
        let mut downstream = Vec::new();
        for &b in &tree.order {
            if b == child || downstream.iter().any(|&d| tree.parent_bus[b] == Some(d)) {
                downstream.push(b);
            }
        }

        for &bi in &downstream {
            for &bj in &downstream {
                for phi in line.phases.iter() {
                    let Some(row) = index.position(bi, phi) else {
                        continue;
                    };
                    for psi in line.phases.iter() {
                        let Some(col) = index.position(bj, psi) else {
                            continue;
                        };
                        r3.add_at(row, col, hp[phi.idx()][psi.idx()] * scale);
                        x3.add_at(row, col, hq[phi.idx()][psi.idx()] * scale);
                    }
                }
            }
        }
    }

    let v_n = (0..n)
        .map(|i| {
            let (_, phase) = index.node(i);
            topology.slack_v2[phase.idx()]
        })
        .collect();

    Ok(SensitivityModel { index, r3, x3, v_n })
}

/// Evaluate the linearized voltage model
/// `v = v_n + R3(p - d_p) + X3(q - d_q)` (all p.u., v in p.u.^2).
pub fn lindist_voltages(
    model: &SensitivityModel,
    injections: &Injections,
    demand: &Injections,
) -> Result<VoltageProfile, FeederError> {
    let n = model.index.len();
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
            });
        }
    }
    let net_p: Vec<f64> = injections
        .p
        .iter()
        .zip(&demand.p)
        .map(|(a, b)| a - b)
        .collect();
    let net_q: Vec<f64> = injections
        .q
        .iter()
        .zip(&demand.q)
        .map(|(a, b)| a - b)
        .collect();
    let dr = model.r3.matvec(&net_p);
    let dx = model.x3.matvec(&net_q);
    let v2 = (0..n).map(|i| model.v_n[i] + dr[i] + dx[i]).collect();
    Ok(VoltageProfile { v2 })
}
