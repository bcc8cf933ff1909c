//! Battery fleet model: SoC dynamics with charge/discharge efficiency and
//! the converter loss incurred when providing reactive power.
//!
//! Sign convention follows the grid side: positive active power is injection
//! (discharge), negative is absorption (charge). One battery owns up to three
//! phase setpoints that jointly drive a single SoC.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::feeder::PhaseMask;

/// How the efficiency factors enter the SoC balance.
///
/// `Paper` applies them literally as printed in the transition equation
/// (charging adds `p / eta_chg`, discharging removes `eta_dis * p`).
/// `Physical` uses the conventional placement (charging adds `eta_chg * p`,
/// discharging removes `p / eta_dis`), which exhibits round-trip loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SocMode {
    #[default]
    Paper,
    Physical,
}

#[derive(Debug, Clone)]
pub struct BatterySpec {
    pub bus: String,
    pub phases: PhaseMask,
    /// Apparent power limit per phase, kVA.
    pub s_max_kw: f64,
    pub capacity_kwh: f64,
    pub e_min_kwh: f64,
    pub e_max_kwh: f64,
    /// Discharging efficiency, (0, 1].
    pub eta_dis: f64,
    /// Charging efficiency, (0, 1].
    pub eta_chg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StorageError {
    BadEfficiency(f64),
    BadSocLimits { e_min: f64, e_max: f64, capacity: f64 },
    BadPowerLimit(f64),
}

impl fmt::Display for StorageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StorageError::BadEfficiency(eta) => {
                write!(f, "efficiency must be in (0, 1], got {eta}")
            }
            StorageError::BadSocLimits {
                e_min,
                e_max,
                capacity,
            } => write!(
                f,
                "SoC limits must satisfy 0 < e_min < e_max <= capacity (got {e_min}, {e_max}, {capacity})"
            ),
            StorageError::BadPowerLimit(s) => write!(f, "apparent power limit must be > 0, got {s}"),
        }
    }
}

impl BatterySpec {
    pub fn validate(&self) -> Result<(), StorageError> {
        for eta in [self.eta_dis, self.eta_chg] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(StorageError::BadEfficiency(eta));
            }
        }
        if !(self.e_min_kwh > 0.0
            && self.e_min_kwh < self.e_max_kwh
            && self.e_max_kwh <= self.capacity_kwh)
        {
            return Err(StorageError::BadSocLimits {
                e_min: self.e_min_kwh,
                e_max: self.e_max_kwh,
                capacity: self.capacity_kwh,
            });
        }
        if self.s_max_kw <= 0.0 {
            return Err(StorageError::BadPowerLimit(self.s_max_kw));
        }
        Ok(())
    }
}

/// Split into nonnegative positive/negative parts: `x = plus - minus`,
/// `plus * minus = 0`.
#[inline]
pub fn split_signed(x: f64) -> (f64, f64) {
    (x.max(0.0), (-x).max(0.0))
}

/// Loss coefficient `(1 - eta_dis * eta_chg) / (pi * eta_dis)`.
#[inline]
pub fn reactive_loss_coeff(eta_dis: f64, eta_chg: f64) -> f64 {
    (1.0 - eta_dis * eta_chg) / (PI * eta_dis)
}

/// Average active power lost by the converter while sustaining reactive
/// power `q` (units of `q`; e.g. kW for kvar input).
#[inline]
pub fn reactive_loss_power(q: f64, eta_dis: f64, eta_chg: f64) -> f64 {
    reactive_loss_coeff(eta_dis, eta_chg) * libm::fabs(q)
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

/// Advance one battery's SoC by one step.
///
/// `p_kw`/`q_kw` hold the per-phase setpoints of this battery; the phase
/// contributions sum into the single energy balance. `dt_s` is in seconds;
/// the balance is in kWh.
pub fn soc_step(
    e_kwh: f64,
    p_kw: &[f64],
    q_kw: &[f64],
    spec: &BatterySpec,
    dt_s: f64,
    mode: SocMode,
) -> f64 {
    let dt_h = dt_s / 3600.0;
    let k_loss = reactive_loss_coeff(spec.eta_dis, spec.eta_chg);
    let mut delta = 0.0;
    for (&p, &q) in p_kw.iter().zip(q_kw) {
        let (p_pos, p_neg) = split_signed(p);
        let (q_pos, q_neg) = split_signed(q);
        delta += match mode {
            SocMode::Paper => p_neg / spec.eta_chg - spec.eta_dis * p_pos,
            SocMode::Physical => spec.eta_chg * p_neg - p_pos / spec.eta_dis,
        };
        delta -= k_loss * (q_pos + q_neg);
    }
    e_kwh + delta * dt_h
}

/// SoC sensitivities to the per-phase setpoints at the current operating
/// point, using the subgradient convention `sgn(0) = 0`.
///
/// Matches the gradient formulas fed to the controller: the factor is the
/// raw step length `dt_s`, mirroring the discrete transition written with
/// `delta t` directly (the scale is absorbed by the SoC dual variables).
pub fn soc_sensitivities(
    p: &[f64],
    q: &[f64],
    spec: &BatterySpec,
    dt_s: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k_loss = reactive_loss_coeff(spec.eta_dis, spec.eta_chg);
    let de_dp = p
        .iter()
        .map(|&pv| {
            let (p_pos, p_neg) = split_signed(pv);
            (signum(p_neg) / spec.eta_chg - spec.eta_dis * signum(p_pos)) * dt_s
        })
        .collect();
    let de_dq = q
        .iter()
        .map(|&qv| {
            let (q_pos, q_neg) = split_signed(qv);
            k_loss * signum(-q_pos - q_neg) * dt_s
        })
        .collect();
    (de_dp, de_dq)
}
