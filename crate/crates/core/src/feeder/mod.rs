//! Three-phase radial feeder model: topology, per-phase line impedances,
//! LinDist3Flow sensitivity matrices, and the exact plant solver.

mod plant;
mod sensitivity;

pub use plant::{plant_powerflow, PlantError, PlantOptions, PlantSolution};
pub use sensitivity::{
    build_h_matrices, build_sensitivity_model, lindist_voltages, SensitivityModel,
};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// One of the three phases, in fixed a/b/c order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    #[inline]
    pub fn idx(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    /// Next phase in the a -> b -> c -> a rotation.
    pub fn next(self) -> Phase {
        match self {
            Phase::A => Phase::B,
            Phase::B => Phase::C,
            Phase::C => Phase::A,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }

    pub fn from_letter(c: char) -> Option<Phase> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }
}

/// Subset of {a, b, c} present at a bus or carried by a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseMask(u8);

impl PhaseMask {
    pub const ABC: PhaseMask = PhaseMask(0b111);
    pub const EMPTY: PhaseMask = PhaseMask(0);

    pub fn single(p: Phase) -> PhaseMask {
        PhaseMask(1 << p.idx())
    }

    pub fn with(self, p: Phase) -> PhaseMask {
        PhaseMask(self.0 | (1 << p.idx()))
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.idx()) != 0
    }

    pub fn is_subset_of(self, other: PhaseMask) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Parse from a string like `"abc"` or `"bc"`.
    pub fn parse(s: &str) -> Option<PhaseMask> {
        let mut m = PhaseMask::EMPTY;
        for c in s.chars() {
            m = m.with(Phase::from_letter(c)?);
        }
        if m.is_empty() {
            None
        } else {
            Some(m)
        }
    }
}

impl fmt::Display for PhaseMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

/// 3x3 per-mile resistance/reactance matrices of a line configuration.
///
/// Rows and columns follow phase order a, b, c; entries for phases a line
/// does not carry are masked to zero when the line model is built.
#[derive(Debug, Clone, PartialEq)]
pub struct LineImpedanceConfig {
    /// Resistance, ohm/mile.
    pub r: [[f64; 3]; 3],
    /// Reactance, ohm/mile.
    pub x: [[f64; 3]; 3],
}

impl LineImpedanceConfig {
    pub fn validate(&self) -> Result<(), FeederError> {
        for i in 0..3 {
            for j in 0..3 {
                if (self.r[i][j] - self.r[j][i]).abs() > 1e-12
                    || (self.x[i][j] - self.x[j][i]).abs() > 1e-12
                {
                    return Err(FeederError::AsymmetricConfig);
                }
            }
            if self.r[i][i] < 0.0 || self.x[i][i] < 0.0 {
                return Err(FeederError::NegativeDiagonal);
            }
        }
        Ok(())
    }

    /// Diagonal entries must be strictly positive on every phase in `mask`.
    pub fn validate_for_mask(&self, mask: PhaseMask) -> Result<(), FeederError> {
        self.validate()?;
        for p in mask.iter() {
            if self.r[p.idx()][p.idx()] <= 0.0 || self.x[p.idx()][p.idx()] <= 0.0 {
                return Err(FeederError::NegativeDiagonal);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseMask,
}

#[derive(Debug, Clone)]
pub struct Line {
    pub from: String,
    pub to: String,
    pub phases: PhaseMask,
    pub length_mi: f64,
    pub config: String,
}

/// Fixed shunt reactive injection (always-on capacitor bank), kvar.
#[derive(Debug, Clone)]
pub struct Shunt {
    pub bus: String,
    pub phase: Phase,
    pub kvar: f64,
}

/// Per-unit bases for the feeder.
#[derive(Debug, Clone, Copy)]
pub struct Bases {
    /// Three-phase apparent power base, kVA.
    pub s_base_kva: f64,
    /// Line-to-line voltage base, kV.
    pub v_base_kv: f64,
}

impl Bases {
    /// Impedance base in ohms: V_LL^2 / S_3ph.
    pub fn z_base_ohm(&self) -> f64 {
        self.v_base_kv * self.v_base_kv * 1000.0 / self.s_base_kva
    }

    /// Per-phase power base, kVA.
    pub fn s_phase_kva(&self) -> f64 {
        self.s_base_kva / 3.0
    }
}

#[derive(Debug, Clone)]
pub struct FeederTopology {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub slack_bus: String,
    /// Squared slack voltage per phase, p.u.^2.
    pub slack_v2: [f64; 3],
    pub shunts: Vec<Shunt>,
    pub bases: Bases,
}

/// Tree structure computed once per topology: BFS order from the slack and
/// the parent line of every non-slack bus.
#[derive(Debug, Clone)]
pub struct TreeOrder {
    /// Bus indices in breadth-first order, slack first.
    pub order: Vec<usize>,
    /// `parent_line[bus_idx]` = index into `lines`, `None` for the slack.
    pub parent_line: Vec<Option<usize>>,
    /// `parent_bus[bus_idx]`, `None` for the slack.
    pub parent_bus: Vec<Option<usize>>,
}

impl FeederTopology {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Validate radiality and phase consistency; returns the tree order.
    pub fn validate(&self) -> Result<TreeOrder, FeederError> {
        let slack = self
            .bus_index(&self.slack_bus)
            .ok_or_else(|| FeederError::UnknownBus(self.slack_bus.clone()))?;

        let n = self.buses.len();
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (line, other bus)
        for (li, line) in self.lines.iter().enumerate() {
            let f = self
                .bus_index(&line.from)
                .ok_or_else(|| FeederError::UnknownBus(line.from.clone()))?;
            let t = self
                .bus_index(&line.to)
                .ok_or_else(|| FeederError::UnknownBus(line.to.clone()))?;
            if line.phases.is_empty() {
                return Err(FeederError::EmptyLinePhases(line.from.clone(), line.to.clone()));
            }
            if !line.phases.is_subset_of(self.buses[f].phases)
                || !line.phases.is_subset_of(self.buses[t].phases)
            {
                return Err(FeederError::LinePhasesNotSubset(
                    line.from.clone(),
                    line.to.clone(),
                ));
            }
            adjacency[f].push((li, t));
            adjacency[t].push((li, f));
        }

        let mut parent_line = vec![None; n];
        let mut parent_bus = vec![None; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = vec![slack];
        visited[slack] = true;
        let mut head = 0;
        while head < queue.len() {
            let b = queue[head];
            head += 1;
            order.push(b);
            for &(li, other) in &adjacency[b] {
                if Some(li) == parent_line[b] {
                    continue;
                }
                if visited[other] {
                    let l = &self.lines[li];
                    return Err(FeederError::NotRadial(l.from.clone(), l.to.clone()));
                }
                visited[other] = true;
                parent_line[other] = Some(li);
                parent_bus[other] = Some(b);
                queue.push(other);
            }
        }
        if let Some(b) = visited.iter().position(|v| !v) {
            return Err(FeederError::Unreachable(self.buses[b].id.clone()));
        }
        // Every phase of a non-slack bus must be fed through its parent line.
        for (bi, bus) in self.buses.iter().enumerate() {
            if let Some(li) = parent_line[bi] {
                if !bus.phases.is_subset_of(self.lines[li].phases) {
                    return Err(FeederError::PhaseNotFed(bus.id.clone()));
                }
            }
        }
        Ok(TreeOrder {
            order,
            parent_line,
            parent_bus,
        })
    }
}

/// Index over all (bus, phase) pairs excluding the slack, in bus declaration
/// order then phase a/b/c order. All vectors and sensitivity matrices in the
/// controller are indexed by this.
#[derive(Debug, Clone)]
pub struct NodeIndex {
    /// (bus index into topology.buses, phase)
    nodes: Vec<(usize, Phase)>,
    lookup: BTreeMap<(usize, u8), usize>,
}

impl NodeIndex {
    pub fn build(topology: &FeederTopology) -> Result<NodeIndex, FeederError> {
        let slack = topology
            .bus_index(&topology.slack_bus)
            .ok_or_else(|| FeederError::UnknownBus(topology.slack_bus.clone()))?;
        let mut nodes = Vec::new();
        let mut lookup = BTreeMap::new();
        for (bi, bus) in topology.buses.iter().enumerate() {
            if bi == slack {
                continue;
            }
            for p in bus.phases.iter() {
                lookup.insert((bi, p.idx() as u8), nodes.len());
                nodes.push((bi, p));
            }
        }
        Ok(NodeIndex { nodes, lookup })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> (usize, Phase) {
        self.nodes[i]
    }

    pub fn position(&self, bus_idx: usize, phase: Phase) -> Option<usize> {
        self.lookup.get(&(bus_idx, phase.idx() as u8)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, (usize, Phase))> + '_ {
        self.nodes.iter().enumerate().map(|(i, &n)| (i, n))
    }
}

/// Active/reactive power per (bus, phase) node, p.u. Injection positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Injections {
    pub fn zeros(n: usize) -> Self {
        Injections {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Squared voltage magnitudes per node, p.u.^2.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageProfile {
    pub v2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeederError {
    UnknownBus(String),
    UnknownConfig(String),
    NotRadial(String, String),
    Unreachable(String),
    LinePhasesNotSubset(String, String),
    EmptyLinePhases(String, String),
    PhaseNotFed(String),
    AsymmetricConfig,
    NegativeDiagonal,
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for FeederError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeederError::UnknownBus(b) => write!(f, "unknown bus '{b}'"),
            FeederError::UnknownConfig(c) => write!(f, "unknown impedance config '{c}'"),
            FeederError::NotRadial(a, b) => {
                write!(f, "line {a}-{b} closes a cycle; feeder must be radial")
            }
            FeederError::Unreachable(b) => write!(f, "bus '{b}' is not reachable from the slack"),
            FeederError::LinePhasesNotSubset(a, b) => {
                write!(f, "line {a}-{b} carries phases absent at an endpoint bus")
            }
            FeederError::EmptyLinePhases(a, b) => write!(f, "line {a}-{b} carries no phases"),
            FeederError::PhaseNotFed(b) => {
                write!(f, "a phase of bus '{b}' is not carried by its feeding line")
            }
            FeederError::AsymmetricConfig => write!(f, "impedance matrices must be symmetric"),
            FeederError::NegativeDiagonal => {
                write!(f, "impedance diagonal must be strictly positive on present phases")
            }
            FeederError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn two_bus() -> FeederTopology {
        FeederTopology {
            buses: vec![
                Bus {
                    id: "s".to_string(),
                    phases: PhaseMask::ABC,
                },
                Bus {
                    id: "1".to_string(),
                    phases: PhaseMask::ABC,
                },
            ],
            lines: vec![Line {
                from: "s".to_string(),
                to: "1".to_string(),
                phases: PhaseMask::ABC,
                length_mi: 1.0,
                config: "c".to_string(),
            }],
            slack_bus: "s".to_string(),
            slack_v2: [1.0; 3],
            shunts: vec![],
            bases: Bases {
                s_base_kva: 5000.0,
                v_base_kv: 4.16,
            },
        }
    }

    #[test]
    fn validates_simple_tree() {
        let t = two_bus();
        let tree = t.validate().unwrap();
        assert_eq!(tree.order, vec![0, 1]);
        assert_eq!(tree.parent_line[1], Some(0));
    }

    #[test]
    fn rejects_cycle() {
        let mut t = two_bus();
        t.lines.push(Line {
            from: "s".to_string(),
            to: "1".to_string(),
            phases: PhaseMask::ABC,
            length_mi: 0.5,
            config: "c".to_string(),
        });
        assert!(matches!(t.validate(), Err(FeederError::NotRadial(_, _))));
    }

    #[test]
    fn rejects_unreachable_bus() {
        let mut t = two_bus();
        t.buses.push(Bus {
            id: "island".to_string(),
            phases: PhaseMask::ABC,
        });
        assert!(matches!(t.validate(), Err(FeederError::Unreachable(_))));
    }

    #[test]
    fn rejects_line_phases_wider_than_bus() {
        let mut t = two_bus();
        t.buses[1].phases = PhaseMask::parse("ab").unwrap();
        assert!(matches!(
            t.validate(),
            Err(FeederError::LinePhasesNotSubset(_, _))
        ));
    }

    #[test]
    fn phase_mask_parse_and_subset() {
        let bc = PhaseMask::parse("bc").unwrap();
        assert!(bc.is_subset_of(PhaseMask::ABC));
        assert!(!PhaseMask::ABC.is_subset_of(bc));
        assert!(bc.contains(Phase::B));
        assert!(!bc.contains(Phase::A));
        assert_eq!(bc.count(), 2);
        assert!(PhaseMask::parse("xyz").is_none());
        assert!(PhaseMask::parse("").is_none());
    }

    #[test]
    fn node_index_skips_slack() {
        let t = two_bus();
        let idx = NodeIndex::build(&t).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.node(0), (1, Phase::A));
        assert_eq!(idx.position(1, Phase::C), Some(2));
        assert_eq!(idx.position(0, Phase::A), None);
    }
}
