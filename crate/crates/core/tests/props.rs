//! Property-based invariants on the algebraic building blocks.

use proptest::prelude::*;

use voltsmooth_core::benchmark::sequential_project;
use voltsmooth_core::ofo::project_disk;
use voltsmooth_core::sim::rescale_trace;
use voltsmooth_core::storage::{reactive_loss_power, split_signed};

proptest! {
    #[test]
    fn split_complementarity(x in -1e9f64..1e9) {
        let (plus, minus) = split_signed(x);
        prop_assert!(plus >= 0.0 && minus >= 0.0);
        prop_assert_eq!(plus * minus, 0.0);
        prop_assert!((plus - minus - x).abs() <= 1e-9 * x.abs().max(1.0));
    }

    #[test]
    fn disk_projection_feasible_and_idempotent(
        p in -100.0f64..100.0,
        q in -100.0f64..100.0,
        s in 0.01f64..10.0,
    ) {
        let (pp, qp) = project_disk(p, q, s);
        prop_assert!(pp * pp + qp * qp <= s * s * (1.0 + 1e-12));
        let (pp2, qp2) = project_disk(pp, qp, s);
        prop_assert!((pp2 - pp).abs() <= 1e-12 && (qp2 - qp).abs() <= 1e-12);
        // interior points are untouched
        if p * p + q * q <= s * s {
            prop_assert_eq!((pp, qp), (p, q));
        }
    }

    #[test]
    fn disk_projection_beats_grid(
        p in -3.0f64..3.0,
        q in -3.0f64..3.0,
    ) {
        // no point on a dense grid over the unit disk is closer than the
        // projection
        let (pp, qp) = project_disk(p, q, 1.0);
        let d_proj = ((p - pp).powi(2) + (q - qp).powi(2)).sqrt();
        let steps = 100;
        for i in 0..=steps {
            for j in 0..=steps {
                let gx = -1.0 + 2.0 * i as f64 / steps as f64;
                let gy = -1.0 + 2.0 * j as f64 / steps as f64;
                if gx * gx + gy * gy > 1.0 {
                    continue;
                }
                let d = ((p - gx).powi(2) + (q - gy).powi(2)).sqrt();
                prop_assert!(d_proj <= d + 1e-9);
            }
        }
    }

    #[test]
    fn sequential_projection_feasible(
        p in -100.0f64..100.0,
        q in -100.0f64..100.0,
        s in 0.01f64..10.0,
    ) {
        let (pp, qp) = sequential_project(p, q, s);
        prop_assert!(pp * pp + qp * qp <= s * s * (1.0 + 1e-9));
        // active power is only ever hard-clamped, never scaled
        prop_assert_eq!(pp, p.clamp(-s, s));
    }

    #[test]
    fn loss_symmetric_and_nonnegative(
        q in -1e6f64..1e6,
        eta_d in 0.5f64..1.0,
        eta_c in 0.5f64..1.0,
    ) {
        let loss = reactive_loss_power(q, eta_d, eta_c);
        prop_assert!(loss >= 0.0);
        prop_assert_eq!(loss, reactive_loss_power(-q, eta_d, eta_c));
    }

    #[test]
    fn rescale_hits_target_range(
        samples in prop::collection::vec(-1e3f64..1e3, 2..50),
        lo in 0.1f64..2.0,
        width in 0.1f64..5.0,
    ) {
        let hi = lo + width;
        match rescale_trace(&samples, lo, hi) {
            Ok(out) => {
                let min = out.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((min - lo).abs() < 1e-9);
                prop_assert!((max - hi).abs() < 1e-9);
            }
            Err(_) => {
                // only a degenerate (constant) input may fail here
                let first = samples[0];
                prop_assert!(samples.iter().all(|&x| x == first));
            }
        }
    }
}
