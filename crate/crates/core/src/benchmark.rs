//! Volt/VAR-inspired incremental PI benchmark controller.
//!
//! Each battery reads only its own bus voltage magnitude, shapes the
//! deviation and fluctuation signals through a deadband with saturation,
//! integrates them into per-phase setpoints, and enforces feasibility by a
//! sequential clamp (active power first, reactive power into what remains
//! of the disk). It is deliberately ignorant of SoC.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::feeder::NodeIndex;
use crate::fleet::FleetLayout;

#[derive(Debug, Clone, Copy)]
pub struct BenchmarkConfig {
    /// Deadband width, p.u. (full width; half on each side).
    pub deadband: f64,
    /// Saturation point of the fluctuation input, p.u.
    pub dv_max: f64,
    /// Saturation point of the deviation input, p.u.
    pub v_dev_max: f64,
    /// Voltage setpoint, p.u. magnitude.
    pub v_set: f64,
    /// Active/reactive weighting, [0, 1].
    pub alpha: f64,
    /// Fluctuation/deviation weighting, [0, 1].
    pub theta: f64,
    /// Update step size.
    pub rho: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            deadband: 0.01,
            dv_max: 0.02,
            v_dev_max: 0.05,
            v_set: 1.0,
            alpha: 0.5,
            theta: 0.5,
            rho: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BenchmarkError {
    BadConfig(&'static str),
}

impl fmt::Display for BenchmarkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchmarkError::BadConfig(msg) => write!(f, "bad benchmark config: {msg}"),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), BenchmarkError> {
        if !(self.rho > 0.0) {
            return Err(BenchmarkError::BadConfig("step size rho must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.theta) {
            return Err(BenchmarkError::BadConfig("alpha and theta must be in [0, 1]"));
        }
        if !(self.deadband >= 0.0 && self.deadband < 2.0 * self.dv_max.min(self.v_dev_max)) {
            return Err(BenchmarkError::BadConfig(
                "deadband must satisfy 0 <= deadband < 2 * min(dv_max, v_dev_max)",
            ));
        }
        Ok(())
    }
}

fn signum(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn shape(delta: f64, half_deadband: f64, cap: f64) -> f64 {
    signum(delta) * (delta.abs() - half_deadband).clamp(0.0, cap - half_deadband)
}

/// Deadband-and-saturation shaping of the fluctuation and deviation inputs.
/// Returns `(delta_v_tilde, v_tilde)`.
pub fn deadband_inputs(v: f64, v_prev: f64, cfg: &BenchmarkConfig) -> (f64, f64) {
    let half = cfg.deadband / 2.0;
    let fluct = shape(v_prev - v, half, cfg.dv_max);
    let dev = shape(cfg.v_set - v, half, cfg.v_dev_max);
    (fluct, dev)
}

/// Incremental PI update of one battery's scalar setpoint pair.
pub fn pi_update(
    p_prev: f64,
    q_prev: f64,
    fluct: f64,
    dev: f64,
    cfg: &BenchmarkConfig,
    s_max: f64,
) -> (f64, f64) {
    let bracket = cfg.theta * fluct / cfg.dv_max + (1.0 - cfg.theta) * dev / cfg.v_dev_max;
    (
        p_prev + cfg.alpha * cfg.rho * bracket * s_max,
        q_prev + (1.0 - cfg.alpha) * cfg.rho * bracket * s_max,
    )
}

/// Sequential feasibility projection: clamp p into [-s, s] first, then q
/// into the reactive headroom left by p.
pub fn sequential_project(p_hat: f64, q_hat: f64, s_max: f64) -> (f64, f64) {
    let p = p_hat.clamp(-s_max, s_max);
    let q_room = libm::sqrt((s_max * s_max - p * p).max(0.0));
    (p, q_hat.clamp(-q_room, q_room))
}

#[derive(Debug, Clone)]
pub struct BenchmarkController {
    pub cfg: BenchmarkConfig,
    pub layout: FleetLayout,
    /// Feeder node each battery's phase measurements come from.
    battery_nodes: Vec<Vec<usize>>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    v_prev: Vec<Option<f64>>,
}

impl BenchmarkController {
    pub fn new(
        cfg: BenchmarkConfig,
        layout: FleetLayout,
        index: &NodeIndex,
    ) -> Result<BenchmarkController, BenchmarkError> {
        cfg.validate()?;
        let _ = index;
        let battery_nodes = (0..layout.n_batteries())
            .map(|b| {
                layout
                    .entries
                    .iter()
                    .filter(|e| e.battery == b)
                    .map(|e| e.node)
                    .collect()
            })
            .collect();
        let m = layout.n_entries();
        Ok(BenchmarkController {
            cfg,
            battery_nodes,
            p: vec![0.0; m],
            q: vec![0.0; m],
            v_prev: vec![None; layout.n_batteries()],
            layout,
        })
    }

    /// One control step from squared voltage measurements. SoC is accepted
    /// for interface parity and deliberately ignored.
    pub fn step(&mut self, v2: &[f64], _soc_kwh: &[f64]) -> (Vec<f64>, Vec<f64>) {
        for b in 0..self.layout.n_batteries() {
            // local measurement: mean phase magnitude at the battery's bus
            let nodes = &self.battery_nodes[b];
            let v: f64 =
                nodes.iter().map(|&n| libm::sqrt(v2[n])).sum::<f64>() / nodes.len() as f64;
            let v_prev = self.v_prev[b].unwrap_or(v);
            let (fluct, dev) = deadband_inputs(v, v_prev, &self.cfg);
            for m in self.layout.entries_of(b).collect::<Vec<_>>() {
                let s_max = self.layout.s_max_pu(m);
                let (p_hat, q_hat) = pi_update(self.p[m], self.q[m], fluct, dev, &self.cfg, s_max);
                let (p, q) = sequential_project(p_hat, q_hat, s_max);
                self.p[m] = p;
                self.q[m] = q;
            }
            self.v_prev[b] = Some(v);
        }
        (self.p.clone(), self.q.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn deadband_edge_gives_zero() {
        let cfg = BenchmarkConfig::default();
        let (fluct, _) = deadband_inputs(1.0, 1.0 + cfg.deadband / 2.0, &cfg);
        assert_eq!(fluct, 0.0);
        let (fluct, _) = deadband_inputs(1.0, 1.0 + cfg.deadband / 4.0, &cfg);
        assert_eq!(fluct, 0.0);
    }

    #[test]
    fn deviation_example() {
        let cfg = BenchmarkConfig::default(); // deadband 0.01, v_set 1.0
        let (_, dev) = deadband_inputs(0.97, 0.97, &cfg);
        assert_abs_diff_eq!(dev, 0.025, epsilon = 1e-15);
    }

    #[test]
    fn saturation_caps_inputs() {
        let cfg = BenchmarkConfig::default();
        let (_, dev) = deadband_inputs(0.5, 0.5, &cfg);
        assert_abs_diff_eq!(dev, cfg.v_dev_max - cfg.deadband / 2.0, epsilon = 1e-15);
        let (_, dev) = deadband_inputs(1.5, 1.5, &cfg);
        assert_abs_diff_eq!(dev, -(cfg.v_dev_max - cfg.deadband / 2.0), epsilon = 1e-15);
    }

    #[test]
    fn pi_update_zero_inputs_keeps_setpoints() {
        let cfg = BenchmarkConfig::default();
        assert_eq!(pi_update(0.1, -0.2, 0.0, 0.0, &cfg, 0.5), (0.1, -0.2));
    }

    #[test]
    fn pi_update_saturated_bracket() {
        let cfg = BenchmarkConfig {
            alpha: 0.5,
            theta: 0.5,
            rho: 0.1,
            ..BenchmarkConfig::default()
        };
        let (p, q) = pi_update(0.0, 0.0, cfg.dv_max, cfg.v_dev_max, &cfg, 0.5);
        assert_abs_diff_eq!(p, 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(q, 0.025, epsilon = 1e-15);
    }

    #[test]
    fn pi_update_alpha_one_freezes_q() {
        let cfg = BenchmarkConfig {
            alpha: 1.0,
            ..BenchmarkConfig::default()
        };
        let (_, q) = pi_update(0.0, 0.3, cfg.dv_max, cfg.v_dev_max, &cfg, 0.5);
        assert_eq!(q, 0.3);
    }

    #[test]
    fn sequential_projection_cases() {
        assert_eq!(sequential_project(0.1, 0.1, 0.5), (0.1, 0.1));
        let (p, q) = sequential_project(0.6, 0.5, 0.5);
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q, 0.0, epsilon = 1e-15);
        let (p, q) = sequential_project(0.6, 2.0, 1.0);
        assert_abs_diff_eq!(p, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(q, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn sequential_differs_from_radial_projection() {
        let (ps, qs) = sequential_project(0.9, 0.9, 1.0);
        let (pr, qr) = crate::ofo::project_disk(0.9, 0.9, 1.0);
        assert_abs_diff_eq!(ps, 0.9, epsilon = 1e-15);
        assert!((ps - pr).abs() > 1e-3 || (qs - qr).abs() > 1e-3);
        assert!(ps * ps + qs * qs <= 1.0 + 1e-12);
        assert!(pr * pr + qr * qr <= 1.0 + 1e-12);
    }
}
