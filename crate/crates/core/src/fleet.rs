//! Mapping between the battery fleet and the feeder's (bus, phase) nodes.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::feeder::{FeederTopology, NodeIndex, Phase};
use crate::storage::{BatterySpec, StorageError};

#[derive(Debug, Clone, Copy)]
pub struct FleetEntry {
    /// Index into the fleet's battery list.
    pub battery: usize,
    /// Feeder node this battery phase injects at.
    pub node: usize,
    pub phase: Phase,
}

/// One battery phase per entry, in battery declaration order then phase
/// order. Controller setpoint vectors are indexed by these entries.
#[derive(Debug, Clone)]
pub struct FleetLayout {
    pub batteries: Vec<BatterySpec>,
    pub entries: Vec<FleetEntry>,
    /// Per-phase power base, kVA (for p.u. conversion of setpoints).
    pub s_phase_base_kva: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FleetError {
    UnknownBus(String),
    PhaseAbsent(String, char),
    Storage(StorageError),
}

impl fmt::Display for FleetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FleetError::UnknownBus(b) => write!(f, "battery references unknown bus '{b}'"),
            FleetError::PhaseAbsent(b, p) => {
                write!(f, "battery at bus '{b}' uses phase {p} absent at that bus")
            }
            FleetError::Storage(e) => write!(f, "{e}"),
        }
    }
}

impl From<StorageError> for FleetError {
    fn from(e: StorageError) -> Self {
        FleetError::Storage(e)
    }
}

impl FleetLayout {
    pub fn build(
        batteries: Vec<BatterySpec>,
        topology: &FeederTopology,
        index: &NodeIndex,
    ) -> Result<FleetLayout, FleetError> {
        let mut entries = Vec::new();
        for (bi, spec) in batteries.iter().enumerate() {
            spec.validate()?;
            let bus = topology
                .bus_index(&spec.bus)
                .ok_or_else(|| FleetError::UnknownBus(spec.bus.clone()))?;
            for phase in spec.phases.iter() {
                let node = index
                    .position(bus, phase)
                    .ok_or_else(|| FleetError::PhaseAbsent(spec.bus.clone(), phase.letter()))?;
                entries.push(FleetEntry {
                    battery: bi,
                    node,
                    phase,
                });
            }
        }
        Ok(FleetLayout {
            batteries,
            entries,
            s_phase_base_kva: topology.bases.s_phase_kva(),
        })
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn n_batteries(&self) -> usize {
        self.batteries.len()
    }

    /// Apparent power limit of entry `m`, p.u.
    pub fn s_max_pu(&self, m: usize) -> f64 {
        self.batteries[self.entries[m].battery].s_max_kw / self.s_phase_base_kva
    }

    pub fn kw_from_pu(&self, value_pu: f64) -> f64 {
        value_pu * self.s_phase_base_kva
    }

    /// Entry indices belonging to battery `b`.
    pub fn entries_of(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.battery == b)
            .map(|(m, _)| m)
    }
}
