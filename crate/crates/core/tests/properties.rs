use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, TAU};

use geostitch::collision::{build_collision_data, intersect_traces, Tolerances};
use geostitch::geodesic::shoot;
use geostitch::manifold::{BoundaryVector, ManifoldScenario, BUILTINS};
use proptest::prelude::*;

const H: f64 = 1e-3;

/// Intersection parameters of two straight chords `p + s d`, `q + t e`.
fn line_crossing(v: &BoundaryVector, w: &BoundaryVector) -> Option<(f64, f64)> {
    let (d, e) = (v.direction, w.direction);
    let det = d[0] * (-e[1]) - d[1] * (-e[0]);
    if det.abs() < 1e-3 {
        return None;
    }
    let r = w.base_point - v.base_point;
    let s = (r[0] * (-e[1]) - r[1] * (-e[0])) / det;
    let t = (d[0] * r[1] - d[1] * r[0]) / det;
    Some((s, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn geodesics_keep_unit_speed_and_exit_outward(
        which in 0usize..BUILTINS.len(),
        u in 0.0f64..1.0,
        theta in -1.45f64..1.45,
    ) {
        let scenario = ManifoldScenario::from_name(BUILTINS[which].name, &BTreeMap::new()).unwrap();
        let u = u * scenario.boundary_period();
        let v = BoundaryVector::new(&scenario, 0, u, theta).unwrap();
        let trace = shoot(&scenario, &v, H, 20.0).unwrap();
        for s in &trace.samples {
            prop_assert!((scenario.norm(&s.x, &s.v) - 1.0).abs() <= 1e-6);
        }
        if let (Some(tau), Some(out)) = (trace.tau(), trace.exit_vector()) {
            let end = trace.end_point();
            prop_assert!(scenario.boundary_fn(&end).abs() <= 1e-9);
            prop_assert!((trace.param_end() - tau).abs() <= 1e-12);
            // the exit direction points out of M
            prop_assert!(scenario.boundary_grad(&end).dot(&out) <= 1e-9);
        }
    }

    #[test]
    fn disk_chords_collide_where_lines_cross(
        u1 in 0.0f64..TAU,
        u2 in 0.0f64..TAU,
        th1 in -1.4f64..1.4,
        th2 in -1.4f64..1.4,
    ) {
        let disk = ManifoldScenario::flat_disk();
        let v = BoundaryVector::new(&disk, 0, u1, th1).unwrap();
        let w = BoundaryVector::new(&disk, 1, u2, th2).unwrap();
        let (a, b) = (shoot(&disk, &v, H, 20.0).unwrap(), shoot(&disk, &w, H, 20.0).unwrap());
        let tol = Tolerances::default();
        let data = build_collision_data(&intersect_traces(&a, &b, tol.eps_int), &tol);
        let (tau_v, tau_w) = (a.tau().unwrap(), b.tau().unwrap());
        // chord lengths are 2 cos(theta)
        prop_assert!((tau_v - 2.0 * th1.cos()).abs() <= 1e-9);
        prop_assert!((tau_w - 2.0 * th2.cos()).abs() <= 1e-9);
        let inside = |s: f64, tau: f64| s > 1e-3 && s < tau - 1e-3;
        match line_crossing(&v, &w) {
            Some((s, t)) if inside(s, tau_v) && inside(t, tau_w) => {
                // fire the earlier-arriving particle first, delayed by the gap
                let (first, second, at, delay) = if t >= s { (0, 1, s, t - s) } else { (1, 0, t, s - t) };
                let hit = data.first_collision(first, second, delay, tol.eps_d);
                prop_assert!(hit.is_some_and(|x| (x - at).abs() <= 1e-6), "{hit:?} vs {at}");
                prop_assert_eq!(data.len(), 1);
            }
            Some((s, t)) if !(s > -1e-3 && s < tau_v + 1e-3 && t > -1e-3 && t < tau_w + 1e-3) => {
                prop_assert!(data.is_empty());
            }
            _ => {}
        }
    }
}

#[test]
fn tangent_directions_are_rejected_past_the_boundary() {
    let disk = ManifoldScenario::flat_disk();
    assert!(BoundaryVector::new(&disk, 0, 0.0, FRAC_PI_2 + 1e-3).is_err());
}
