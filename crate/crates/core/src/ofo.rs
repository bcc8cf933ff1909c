//! Online feedback optimization controller.
//!
//! Each control step performs projected dual ascent on the voltage and SoC
//! constraint violations, an optional anti-windup revert for saturated
//! inverters, a primal gradient step on the smoothing-plus-effort Lagrangian,
//! and a Euclidean projection onto the per-phase apparent power disk.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::feeder::SensitivityModel;
use crate::fleet::FleetLayout;
use crate::storage::{soc_sensitivities, SocMode};

#[derive(Debug, Clone, Copy)]
pub struct OfoConfig {
    /// Shared primal/dual step size.
    pub rho: f64,
    /// Voltage smoothing weight (0 disables smoothing).
    pub c_vf: f64,
    /// Active-power control effort weight.
    pub c_p: f64,
    /// Reactive-power control effort weight.
    pub c_q: f64,
    /// Squared voltage limits, p.u.^2.
    pub v_min2: f64,
    pub v_max2: f64,
    pub anti_windup: bool,
    pub soc_mode: SocMode,
    /// Control period, seconds (enters the SoC sensitivities).
    pub dt_s: f64,
    /// Relative tolerance on `p^2 + q^2 = s_max^2` for saturation detection.
    pub saturation_rel_tol: f64,
}

impl Default for OfoConfig {
    fn default() -> Self {
        OfoConfig {
            rho: 0.05,
            c_vf: 1.0,
            c_p: 0.01,
            c_q: 0.01,
            v_min2: 0.95 * 0.95,
            v_max2: 1.05 * 1.05,
            anti_windup: true,
            soc_mode: SocMode::Paper,
            dt_s: 0.1,
            saturation_rel_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OfoError {
    DimensionMismatch { expected: usize, got: usize },
    BadConfig(&'static str),
}

impl fmt::Display for OfoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OfoError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            OfoError::BadConfig(msg) => write!(f, "bad controller config: {msg}"),
        }
    }
}

impl OfoConfig {
    pub fn validate(&self) -> Result<(), OfoError> {
        if !(self.rho > 0.0) {
            return Err(OfoError::BadConfig("step size rho must be > 0"));
        }
        if self.c_vf < 0.0 || !(self.c_p > 0.0) || !(self.c_q > 0.0) {
            return Err(OfoError::BadConfig(
                "effort weights must be > 0 and smoothing weight >= 0",
            ));
        }
        if !(self.v_min2 < self.v_max2) {
            return Err(OfoError::BadConfig("voltage limits must satisfy v_min < v_max"));
        }
        if !(self.dt_s > 0.0) {
            return Err(OfoError::BadConfig("dt must be > 0"));
        }
        Ok(())
    }
}

/// Dual variables: voltage limits per node, SoC limits per battery, plus the
/// pre-update copies of the voltage duals consumed by anti-windup.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub mu_lo: Vec<f64>,
    pub mu_hi: Vec<f64>,
    pub mu_lo_prev: Vec<f64>,
    pub mu_hi_prev: Vec<f64>,
    pub lam_lo: Vec<f64>,
    pub lam_hi: Vec<f64>,
}

impl DualState {
    pub fn zeros(n_nodes: usize, n_batteries: usize) -> Self {
        DualState {
            mu_lo: vec![0.0; n_nodes],
            mu_hi: vec![0.0; n_nodes],
            mu_lo_prev: vec![0.0; n_nodes],
            mu_hi_prev: vec![0.0; n_nodes],
            lam_lo: vec![0.0; n_batteries],
            lam_hi: vec![0.0; n_batteries],
        }
    }

    pub fn all_nonnegative(&self) -> bool {
        self.mu_lo
            .iter()
            .chain(&self.mu_hi)
            .chain(&self.lam_lo)
            .chain(&self.lam_hi)
            .all(|&x| x >= 0.0)
    }
}

/// Projected dual ascent on the measured constraint violations.
///
/// The voltage duals' pre-update values are retained for anti-windup.
pub fn dual_update(
    duals: &DualState,
    v2: &[f64],
    soc_kwh: &[f64],
    layout: &FleetLayout,
    cfg: &OfoConfig,
) -> Result<DualState, OfoError> {
    let n = duals.mu_lo.len();
    if v2.len() != n {
        return Err(OfoError::DimensionMismatch {
            expected: n,
            got: v2.len(),
        });
    }
    if soc_kwh.len() != layout.n_batteries() {
        return Err(OfoError::DimensionMismatch {
            expected: layout.n_batteries(),
            got: soc_kwh.len(),
        });
    }
    let mut next = duals.clone();
    next.mu_lo_prev.copy_from_slice(&duals.mu_lo);
    next.mu_hi_prev.copy_from_slice(&duals.mu_hi);
    for i in 0..n {
        next.mu_lo[i] = (duals.mu_lo[i] + cfg.rho * (cfg.v_min2 - v2[i])).max(0.0);
        next.mu_hi[i] = (duals.mu_hi[i] + cfg.rho * (v2[i] - cfg.v_max2)).max(0.0);
    }
    for (b, spec) in layout.batteries.iter().enumerate() {
        next.lam_lo[b] = (duals.lam_lo[b] + cfg.rho * (spec.e_min_kwh - soc_kwh[b])).max(0.0);
        next.lam_hi[b] = (duals.lam_hi[b] + cfg.rho * (soc_kwh[b] - spec.e_max_kwh)).max(0.0);
    }
    Ok(next)
}

/// Discard the latest voltage-dual update at the entries a saturated battery
/// phase senses. SoC duals are never reverted.
pub fn anti_windup(
    duals: &mut DualState,
    p: &[f64],
    q: &[f64],
    layout: &FleetLayout,
    sensed: &[Vec<usize>],
    cfg: &OfoConfig,
) {
    for m in 0..layout.n_entries() {
        let s_max = layout.s_max_pu(m);
        let s2 = s_max * s_max;
        let saturated = (p[m] * p[m] + q[m] * q[m] - s2).abs() <= cfg.saturation_rel_tol * s2;
        if !saturated {
            continue;
        }
        if p[m] < 0.0 && q[m] < 0.0 {
            for &node in &sensed[m] {
                duals.mu_hi[node] = duals.mu_hi_prev[node];
            }
        } else if p[m] > 0.0 && q[m] > 0.0 {
            for &node in &sensed[m] {
                duals.mu_lo[node] = duals.mu_lo_prev[node];
            }
        }
    }
}

/// Gradients of the partial Lagrangian with respect to the setpoints.
#[allow(clippy::too_many_arguments)]
pub fn primal_gradients(
    p: &[f64],
    q: &[f64],
    v2: &[f64],
    v_prev: &[f64],
    duals: &DualState,
    model: &SensitivityModel,
    layout: &FleetLayout,
    cfg: &OfoConfig,
) -> Result<(Vec<f64>, Vec<f64>), OfoError> {
    let n = model.index.len();
    if v2.len() != n || v_prev.len() != n || duals.mu_lo.len() != n {
        return Err(OfoError::DimensionMismatch {
            expected: n,
            got: v2.len(),
        });
    }
    let m_entries = layout.n_entries();
    if p.len() != m_entries || q.len() != m_entries {
        return Err(OfoError::DimensionMismatch {
            expected: m_entries,
            got: p.len(),
        });
    }

    // weights applied through the voltage sensitivity columns
    let w_p: Vec<f64> = (0..n)
        .map(|i| cfg.c_vf * (v2[i] - v_prev[i]) + duals.mu_hi[i] - duals.mu_lo[i])
        .collect();

    let mut g_p = vec![0.0; m_entries];
    let mut g_q = vec![0.0; m_entries];
    for m in 0..m_entries {
        let entry = layout.entries[m];
        let spec = &layout.batteries[entry.battery];
        let (de_dp, de_dq) = soc_sensitivities(&[p[m]], &[q[m]], spec, cfg.dt_s);
        let dlam = duals.lam_hi[entry.battery] - duals.lam_lo[entry.battery];
        g_p[m] = model.r3.col_dot(entry.node, &w_p) + cfg.c_p * p[m] + de_dp[0] * dlam;
        g_q[m] = model.x3.col_dot(entry.node, &w_p) + cfg.c_q * q[m] + de_dq[0] * dlam;
    }
    Ok((g_p, g_q))
}

/// Euclidean projection of one setpoint pair onto the disk `p^2 + q^2 <= s^2`.
#[inline]
pub fn project_disk(p: f64, q: f64, s_max: f64) -> (f64, f64) {
    let r2 = p * p + q * q;
    if r2 > s_max * s_max {
        let scale = s_max / libm::sqrt(r2);
        (p * scale, q * scale)
    } else {
        (p, q)
    }
}

/// Gradient step followed by per-entry disk projection.
pub fn primal_step_and_project(
    p: &[f64],
    q: &[f64],
    g_p: &[f64],
    g_q: &[f64],
    layout: &FleetLayout,
    cfg: &OfoConfig,
) -> (Vec<f64>, Vec<f64>) {
    let mut p_new = vec![0.0; p.len()];
    let mut q_new = vec![0.0; q.len()];
    for m in 0..p.len() {
        let (pp, qq) = project_disk(
            p[m] - cfg.rho * g_p[m],
            q[m] - cfg.rho * g_q[m],
            layout.s_max_pu(m),
        );
        p_new[m] = pp;
        q_new[m] = qq;
    }
    (p_new, q_new)
}

/// The full controller state machine.
#[derive(Debug, Clone)]
pub struct OfoController {
    pub cfg: OfoConfig,
    pub layout: FleetLayout,
    model: SensitivityModel,
    /// Node indices each battery phase senses (nonzero R3 column entries).
    sensed: Vec<Vec<usize>>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub duals: DualState,
    v_prev: Option<Vec<f64>>,
}

impl OfoController {
    pub fn new(
        cfg: OfoConfig,
        layout: FleetLayout,
        model: SensitivityModel,
    ) -> Result<OfoController, OfoError> {
        cfg.validate()?;
        let n = model.index.len();
        let sensed = layout
            .entries
            .iter()
            .map(|e| {
                (0..n)
                    .filter(|&row| model.r3.get(row, e.node) != 0.0)
                    .collect()
            })
            .collect();
        let m = layout.n_entries();
        let nb = layout.n_batteries();
        Ok(OfoController {
            cfg,
            duals: DualState::zeros(n, nb),
            p: vec![0.0; m],
            q: vec![0.0; m],
            v_prev: None,
            sensed,
            layout,
            model,
        })
    }

    /// One control step: dual ascent, anti-windup, primal descent, projection.
    /// Returns the new per-entry setpoints in p.u.
    pub fn step(&mut self, v2: &[f64], soc_kwh: &[f64]) -> Result<(Vec<f64>, Vec<f64>), OfoError> {
        let mut duals = dual_update(&self.duals, v2, soc_kwh, &self.layout, &self.cfg)?;
        if self.cfg.anti_windup {
            anti_windup(&mut duals, &self.p, &self.q, &self.layout, &self.sensed, &self.cfg);
        }
        let v_prev = self.v_prev.clone().unwrap_or_else(|| v2.to_vec());
        let (g_p, g_q) = primal_gradients(
            &self.p, &self.q, v2, &v_prev, &duals, &self.model, &self.layout, &self.cfg,
        )?;
        let (p_new, q_new) =
            primal_step_and_project(&self.p, &self.q, &g_p, &g_q, &self.layout, &self.cfg);
        self.duals = duals;
        self.p = p_new;
        self.q = q_new;
        self.v_prev = Some(v2.to_vec());
        Ok((self.p.clone(), self.q.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{NodeIndex, Phase, PhaseMask};
    use crate::feeder::{Bases, Bus, FeederTopology, Line};
    use crate::mat::Mat;
    use crate::storage::BatterySpec;
    use alloc::string::ToString;
    use approx::assert_abs_diff_eq;

    /// Single-phase, single-bus toy: one node, one battery phase, R3 = [[r]].
    fn toy(r: f64, x: f64, s_max_kw: f64) -> (SensitivityModel, FleetLayout) {
        let topo = FeederTopology {
            buses: vec![
                Bus {
                    id: "s".to_string(),
                    phases: PhaseMask::single(Phase::A),
                },
                Bus {
                    id: "1".to_string(),
                    phases: PhaseMask::single(Phase::A),
                },
            ],
            lines: vec![Line {
                from: "s".to_string(),
                to: "1".to_string(),
                phases: PhaseMask::single(Phase::A),
                length_mi: 1.0,
                config: "z".to_string(),
            }],
            slack_bus: "s".to_string(),
            slack_v2: [1.0; 3],
            shunts: vec![],
            bases: Bases {
                s_base_kva: 3000.0,
                v_base_kv: 1.0,
            },
        };
        let index = NodeIndex::build(&topo).unwrap();
        let mut r3 = Mat::zeros(1, 1);
        r3.set(0, 0, r);
        let mut x3 = Mat::zeros(1, 1);
        x3.set(0, 0, x);
        let model = SensitivityModel {
            index: index.clone(),
            r3,
            x3,
            v_n: vec![1.0],
        };
        let batteries = vec![BatterySpec {
            bus: "1".to_string(),
            phases: PhaseMask::single(Phase::A),
            s_max_kw,
            capacity_kwh: 200.0,
            e_min_kwh: 20.0,
            e_max_kwh: 180.0,
            eta_dis: 0.95,
            eta_chg: 0.95,
        }];
        let layout = FleetLayout::build(batteries, &topo, &index).unwrap();
        (model, layout)
    }

    #[test]
    fn dual_update_examples() {
        let (_, layout) = toy(0.02, 0.04, 500.0);
        let cfg = OfoConfig {
            rho: 1.0,
            ..OfoConfig::default()
        };
        let duals = DualState::zeros(1, 1);
        // satisfied constraints keep zero duals at zero
        let next = dual_update(&duals, &[1.0], &[100.0], &layout, &cfg).unwrap();
        assert_eq!(next, DualState::zeros(1, 1));
        // overvoltage by 0.01 p.u.^2 raises mu_hi by rho * 0.01
        let next = dual_update(&duals, &[cfg.v_max2 + 0.01], &[100.0], &layout, &cfg).unwrap();
        assert_abs_diff_eq!(next.mu_hi[0], 0.01, epsilon = 1e-15);
        // mu_lo shrinking below zero projects back to zero
        let mut duals = DualState::zeros(1, 1);
        duals.mu_lo[0] = 0.005;
        let next = dual_update(&duals, &[cfg.v_min2 + 0.02], &[100.0], &layout, &cfg).unwrap();
        assert_eq!(next.mu_lo[0], 0.0);
        assert_eq!(next.mu_lo_prev[0], 0.005);
    }

    #[test]
    fn dual_update_soc_limits() {
        let (_, layout) = toy(0.02, 0.04, 500.0);
        let cfg = OfoConfig {
            rho: 1.0,
            ..OfoConfig::default()
        };
        let duals = DualState::zeros(1, 1);
        let next = dual_update(&duals, &[1.0], &[190.0], &layout, &cfg).unwrap();
        assert_abs_diff_eq!(next.lam_hi[0], 10.0, epsilon = 1e-12);
        let next = dual_update(&duals, &[1.0], &[10.0], &layout, &cfg).unwrap();
        assert_abs_diff_eq!(next.lam_lo[0], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn anti_windup_conditions() {
        let (_, layout) = toy(0.02, 0.04, 500.0);
        let cfg = OfoConfig::default();
        let s_max = layout.s_max_pu(0); // 0.5 on the 1000 kVA phase base
        assert_abs_diff_eq!(s_max, 0.5, epsilon = 1e-12);
        let sensed = vec![vec![0usize]];

        let mut duals = DualState::zeros(1, 1);
        duals.mu_hi[0] = 0.3;
        duals.mu_hi_prev[0] = 0.1;
        duals.mu_lo[0] = 0.4;
        duals.mu_lo_prev[0] = 0.2;

        // unsaturated: unchanged
        let mut d = duals.clone();
        anti_windup(&mut d, &[0.1], &[0.1], &layout, &sensed, &cfg);
        assert_eq!(d, duals);

        // saturated with p < 0, q < 0: mu_hi reverts
        let mut d = duals.clone();
        anti_windup(&mut d, &[-0.3], &[-0.4], &layout, &sensed, &cfg);
        assert_eq!(d.mu_hi[0], 0.1);
        assert_eq!(d.mu_lo[0], 0.4);

        // saturated with p > 0, q > 0: mu_lo reverts
        let mut d = duals.clone();
        anti_windup(&mut d, &[0.3], &[0.4], &layout, &sensed, &cfg);
        assert_eq!(d.mu_lo[0], 0.2);
        assert_eq!(d.mu_hi[0], 0.3);

        // saturated with mixed signs: no revert
        let mut d = duals.clone();
        anti_windup(&mut d, &[0.3], &[-0.4], &layout, &sensed, &cfg);
        assert_eq!(d, duals);
    }

    #[test]
    fn gradient_toy_hand_computed() {
        let (model, layout) = toy(0.02, 0.04, 500.0);
        let cfg = OfoConfig {
            c_vf: 1.0,
            c_p: 0.1,
            ..OfoConfig::default()
        };
        let mut duals = DualState::zeros(1, 1);
        duals.mu_hi[0] = 0.5;
        let (g_p, _) = primal_gradients(
            &[0.2],
            &[0.0],
            &[1.01],
            &[1.0],
            &duals,
            &model,
            &layout,
            &cfg,
        )
        .unwrap();
        // 0.02*0.01 + 0.1*0.2 + 0.02*0.5 = 0.0302
        assert_abs_diff_eq!(g_p[0], 0.0302, epsilon = 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_rest() {
        let (model, layout) = toy(0.02, 0.04, 500.0);
        let cfg = OfoConfig::default();
        let duals = DualState::zeros(1, 1);
        let (g_p, g_q) = primal_gradients(
            &[0.0],
            &[0.0],
            &[1.0],
            &[1.0],
            &duals,
            &model,
            &layout,
            &cfg,
        )
        .unwrap();
        assert_eq!(g_p[0], 0.0);
        assert_eq!(g_q[0], 0.0);
    }

    #[test]
    fn gradient_isolated_effort_term() {
        let (model, layout) = toy(0.02, 0.04, 500.0);
        let cfg = OfoConfig {
            c_p: 1.0,
            c_vf: 1.0,
            ..OfoConfig::default()
        };
        let duals = DualState::zeros(1, 1);
        let (g_p, _) = primal_gradients(
            &[0.1],
            &[0.0],
            &[1.0],
            &[1.0],
            &duals,
            &model,
            &layout,
            &cfg,
        )
        .unwrap();
        assert_abs_diff_eq!(g_p[0], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn projection_cases() {
        assert_eq!(project_disk(0.1, 0.1, 0.5), (0.1, 0.1));
        let (p, q) = project_disk(3.0, 4.0, 1.0);
        assert_abs_diff_eq!(p, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(q, 0.8, epsilon = 1e-15);
        assert_eq!(project_disk(0.0, 0.0, 1.0), (0.0, 0.0));
        // idempotence
        let (p2, q2) = project_disk(p, q, 1.0);
        assert_abs_diff_eq!(p2, p, epsilon = 1e-12);
        assert_abs_diff_eq!(q2, q, epsilon = 1e-12);
    }

    #[test]
    fn step_is_stationary_at_rest() {
        let (model, layout) = toy(0.02, 0.04, 500.0);
        let mut ctrl = OfoController::new(OfoConfig::default(), layout, model).unwrap();
        for _ in 0..5 {
            let (p, q) = ctrl.step(&[1.0], &[100.0]).unwrap();
            assert_eq!(p[0], 0.0);
            assert_eq!(q[0], 0.0);
        }
        assert!(ctrl.duals.all_nonnegative());
    }

    #[test]
    fn sustained_overvoltage_drives_setpoints_negative() {
        let (model, layout) = toy(0.02, 0.04, 500.0);
        let mut ctrl = OfoController::new(OfoConfig::default(), layout, model).unwrap();
        let v_high = 1.05 * 1.05 + 0.01;
        let mut prev_mu = 0.0;
        for _ in 0..100 {
            ctrl.step(&[v_high], &[100.0]).unwrap();
            assert!(ctrl.duals.mu_hi[0] >= prev_mu);
            prev_mu = ctrl.duals.mu_hi[0];
        }
        assert!(ctrl.p[0] < 0.0);
        assert!(ctrl.q[0] < 0.0);
        assert!(ctrl.duals.all_nonnegative());
    }

    #[test]
    fn saturation_freezes_mu_lo_with_anti_windup() {
        let (model, layout) = toy(0.02, 0.04, 500.0);
        let cfg = OfoConfig {
            rho: 0.5,
            ..OfoConfig::default()
        };
        let mut ctrl = OfoController::new(cfg, layout, model).unwrap();
        let v_low = 0.95 * 0.95 - 0.05;
        // drive until saturated at p > 0, q > 0
        let mut frozen_value = None;
        let mut frozen_steps = 0;
        for _ in 0..300 {
            ctrl.step(&[v_low], &[100.0]).unwrap();
            let s = libm::sqrt(ctrl.p[0] * ctrl.p[0] + ctrl.q[0] * ctrl.q[0]);
            if (s - 0.5).abs() < 1e-9 && ctrl.p[0] > 0.0 && ctrl.q[0] > 0.0 {
                match frozen_value {
                    None => frozen_value = Some(ctrl.duals.mu_lo[0]),
                    Some(v) => {
                        assert_eq!(ctrl.duals.mu_lo[0], v);
                        frozen_steps += 1;
                    }
                }
            }
        }
        assert!(frozen_steps > 50, "saturation held {frozen_steps} steps");
    }

    #[test]
    fn feasibility_always_holds() {
        let (model, layout) = toy(0.02, 0.04, 500.0);
        let mut ctrl = OfoController::new(
            OfoConfig {
                rho: 2.0,
                ..OfoConfig::default()
            },
            layout,
            model,
        )
        .unwrap();
        for k in 0..200 {
            let v = if k % 3 == 0 { 0.8 } else { 1.2 };
            ctrl.step(&[v], &[100.0]).unwrap();
            let r2 = ctrl.p[0] * ctrl.p[0] + ctrl.q[0] * ctrl.q[0];
            assert!(r2 <= 0.25 * (1.0 + 1e-12));
        }
    }
}
