//! Cross-checks of the sensitivity construction and the plant solver against
//! independent dense-matrix and finite-difference computations.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use voltsmooth_core::feeder::{
    build_h_matrices, build_sensitivity_model, lindist_voltages, plant_powerflow, Bases, Bus,
    FeederTopology, Injections, Line, LineImpedanceConfig, NodeIndex, Phase, PhaseMask,
    PlantOptions,
};

fn config_602() -> LineImpedanceConfig {
    LineImpedanceConfig {
        r: [
            [0.7526, 0.1580, 0.1560],
            [0.1580, 0.7475, 0.1535],
            [0.1560, 0.1535, 0.7436],
        ],
        x: [
            [1.1814, 0.4236, 0.5017],
            [0.4236, 1.1983, 0.3849],
            [0.5017, 0.3849, 1.2112],
        ],
    }
}

fn config_scaled(f: f64) -> LineImpedanceConfig {
    let base = config_602();
    let mut r = base.r;
    let mut x = base.x;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] *= f;
            x[i][j] *= 1.5 * f;
        }
    }
    LineImpedanceConfig { r, x }
}

/// Branched feeder with mixed phase sets and two line configurations.
fn branched() -> (FeederTopology, BTreeMap<String, LineImpedanceConfig>) {
    let bus = |id: &str, phases: &str| Bus {
        id: id.to_string(),
        phases: PhaseMask::parse(phases).unwrap(),
    };
    let line = |from: &str, to: &str, phases: &str, length_mi: f64, config: &str| Line {
        from: from.to_string(),
        to: to.to_string(),
        phases: PhaseMask::parse(phases).unwrap(),
        length_mi,
        config: config.to_string(),
    };
    let topo = FeederTopology {
        buses: vec![
            bus("s", "abc"),
            bus("1", "abc"),
            bus("2", "abc"),
            bus("3", "bc"),
            bus("4", "a"),
        ],
        lines: vec![
            line("s", "1", "abc", 0.40, "heavy"),
            line("1", "2", "abc", 0.25, "light"),
            line("2", "3", "bc", 0.30, "heavy"),
            line("1", "4", "a", 0.15, "light"),
        ],
        slack_bus: "s".to_string(),
        slack_v2: [1.0; 3],
        shunts: vec![],
        bases: Bases {
            s_base_kva: 5000.0,
            v_base_kv: 4.16,
        },
    };
    let mut configs = BTreeMap::new();
    configs.insert("heavy".to_string(), config_602());
    configs.insert("light".to_string(), config_scaled(0.6));
    (topo, configs)
}

/// Dense oracle: assemble the sensitivity matrix as F * bdiag(H_l) * F^T,
/// where F is the 0/1 path matrix from (bus, phase) nodes to (line, phase)
/// segments. For a radial feeder this is the definition the accumulation in
/// the library collapses to; here it is evaluated with explicit dense
/// products instead.
fn dense_oracle(
    topo: &FeederTopology,
    configs: &BTreeMap<String, LineImpedanceConfig>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let tree = topo.validate().unwrap();
    let index = NodeIndex::build(topo).unwrap();
    let n = index.len();
    let z_base = topo.bases.z_base_ohm();

    // column index per (line, phase)
    let mut seg: Vec<(usize, Phase)> = Vec::new();
    for (li, l) in topo.lines.iter().enumerate() {
        for p in l.phases.iter() {
            seg.push((li, p));
        }
    }
    let k = seg.len();

    // lines on the slack-to-bus path, via parent pointers
    let path_of = |mut b: usize| -> Vec<usize> {
        let mut lines = Vec::new();
        while let Some(li) = tree.parent_line[b] {
            lines.push(li);
            b = tree.parent_bus[b].unwrap();
        }
        lines
    };

    let mut f = DMatrix::<f64>::zeros(n, k);
    for (row, (bus, phase)) in index.iter() {
        let path = path_of(bus);
        for (col, &(li, psi)) in seg.iter().enumerate() {
            if psi == phase && path.contains(&li) {
                f[(row, col)] = 1.0;
            }
        }
    }

    let mut hp_blk = DMatrix::<f64>::zeros(k, k);
    let mut hq_blk = DMatrix::<f64>::zeros(k, k);
    for (i, &(li, pi)) in seg.iter().enumerate() {
        let line = &topo.lines[li];
        let config = &configs[&line.config];
        let (hp, hq) = build_h_matrices(config, line.phases).unwrap();
        let scale = line.length_mi / z_base;
        for (j, &(lj, pj)) in seg.iter().enumerate() {
            if lj == li {
                hp_blk[(i, j)] = hp[pi.idx()][pj.idx()] * scale;
                hq_blk[(i, j)] = hq[pi.idx()][pj.idx()] * scale;
            }
        }
    }

    (&f * &hp_blk * f.transpose(), &f * &hq_blk * f.transpose())
}

#[test]
fn sensitivity_matches_dense_path_matrix_oracle() {
    let (topo, configs) = branched();
    let model = build_sensitivity_model(&topo, &configs).unwrap();
    let (r_oracle, x_oracle) = dense_oracle(&topo, &configs);
    let n = model.index.len();
    assert_eq!(n, 9); // 3 + 3 + 2 + 1 non-slack (bus, phase) nodes
    for i in 0..n {
        for j in 0..n {
            assert!(
                (model.r3.get(i, j) - r_oracle[(i, j)]).abs() < 1e-12,
                "r3[{i}][{j}]: {} vs oracle {}",
                model.r3.get(i, j),
                r_oracle[(i, j)]
            );
            assert!(
                (model.x3.get(i, j) - x_oracle[(i, j)]).abs() < 1e-12,
                "x3[{i}][{j}]: {} vs oracle {}",
                model.x3.get(i, j),
                x_oracle[(i, j)]
            );
        }
    }
}

#[test]
fn sensitivity_eigenvalues_nonnegative() {
    // symmetric part of the quadratic form has nonnegative spectrum
    let (topo, configs) = branched();
    let model = build_sensitivity_model(&topo, &configs).unwrap();
    let n = model.index.len();
    let r = DMatrix::from_fn(n, n, |i, j| model.r3.get(i, j));
    let sym = (&r + r.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    for ev in eig.eigenvalues.iter() {
        assert!(*ev >= -1e-10, "negative eigenvalue {ev}");
    }
}

#[test]
fn linear_model_tracks_plant_at_light_load() {
    let (topo, configs) = branched();
    let model = build_sensitivity_model(&topo, &configs).unwrap();
    let n = model.index.len();
    let injections = Injections::zeros(n);
    let mut demand = Injections::zeros(n);
    for i in 0..n {
        // ~17 kW / 8 kvar per phase: light loading
        demand.p[i] = 0.01;
        demand.q[i] = 0.005;
    }
    let plant = plant_powerflow(&topo, &configs, &injections, &demand, &PlantOptions::default())
        .unwrap();
    let linear = lindist_voltages(&model, &injections, &demand).unwrap();
    for i in 0..n {
        let err = (plant.profile.v2[i] - linear.v2[i]).abs();
        assert!(
            err < 5e-4,
            "node {i}: plant {} vs linear {}",
            plant.profile.v2[i],
            linear.v2[i]
        );
        assert!(plant.profile.v2[i] < 1.0, "load should depress voltage");
    }
}

#[test]
fn sensitivity_columns_match_plant_finite_differences() {
    let (topo, configs) = branched();
    let model = build_sensitivity_model(&topo, &configs).unwrap();
    let n = model.index.len();
    let mut demand = Injections::zeros(n);
    for i in 0..n {
        demand.p[i] = 0.02;
        demand.q[i] = 0.01;
    }
    let opts = PlantOptions::default();
    let h = 1e-5;
    for col in [0usize, 4, n - 1] {
        let mut plus = Injections::zeros(n);
        plus.p[col] = h;
        let mut minus = Injections::zeros(n);
        minus.p[col] = -h;
        let vp = plant_powerflow(&topo, &configs, &plus, &demand, &opts).unwrap();
        let vm = plant_powerflow(&topo, &configs, &minus, &demand, &opts).unwrap();
        for row in 0..n {
            let fd = (vp.profile.v2[row] - vm.profile.v2[row]) / (2.0 * h);
            let lin = model.r3.get(row, col);
            let scale = lin.abs().max(0.05);
            assert!(
                (fd - lin).abs() / scale < 0.05,
                "d v2[{row}] / d p[{col}]: fd {fd} vs linear {lin}"
            );
        }
    }
}
