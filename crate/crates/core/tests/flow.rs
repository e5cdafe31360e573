mod common;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::sync::Arc;

use common::*;
use lagflow::analysis::{
    compare_mod_constant, graph_export, image_check, image_check_graph, read_graph, residual_sup, write_fields,
};
use lagflow::geometry::BoundingBox;
use lagflow::solver::{init_state, FlowParams, FlowSetup, GridSpec, InitialData};
use lagflow::{Domain, Error, OperatorTau, SpectralOperator};
use serde_json::json;

#[test]
fn oscillation_decreases_from_radial_data() {
    let setup = FlowSetup::from_config(&unit_disk_config(FRAC_PI_4, 32, radial())).unwrap();
    let mut state = setup.init().unwrap();
    let mut last = f64::INFINITY;
    for step in 0..100 {
        let info = state.step(&setup.params).unwrap();
        assert!(info.osc < last, "step {step}: {} after {last}", info.osc);
        assert!(info.boundary_residual <= setup.params.tol_bc);
        last = info.osc;
    }
}

#[test]
fn matched_quadratic_is_stationary() {
    let omega = Domain::ellipse([0.0, 0.0], [1.0, 2.0], 0.0).unwrap();
    let target = Domain::ellipse([0.0, 0.0], [3.0, 1.0], 0.0).unwrap();
    let op = OperatorTau::new(1.0).unwrap();
    let c = op.value(&[0.5, 3.0]);
    let grid = Arc::new(GridSpec::with_cells(&omega, 24).unwrap());
    let params = FlowParams::default();
    let u0 = InitialData::Quadratic {
        m: [[3.0, 0.0], [0.0, 0.5]],
        b: [0.0, 0.0],
    };
    let mut state = init_state(grid, omega, target, op, &u0, &params).unwrap();
    assert!(residual_sup(&state, c) <= 1e-8);
    for _ in 0..20 {
        let info = state.step(&params).unwrap();
        assert!(residual_sup(&state, c) <= 1e-8);
        assert!(info.osc <= 1e-8);
    }
}

#[test]
fn converged_profiles_agree_up_to_constants() {
    let (a, ra, _) = solve(&unit_disk_config(FRAC_PI_2, 32, radial()));
    let (b, rb, _) = solve(&unit_disk_config(FRAC_PI_2, 32, json!({"mode": "auto"})));
    assert!(ra.converged && rb.converged);
    assert!(compare_mod_constant(&a.active_values(), &b.active_values()).unwrap() <= 5e-3);
    assert!((ra.C_inf - rb.C_inf).abs() <= 1e-4);
}

#[test]
fn translated_target() {
    let cfg = config(0.835, disk([0.0, 0.0], 1.0), disk([0.5, 0.0], 2.0), 24, radial());
    let (state, r, _) = solve(&cfg);
    let op = OperatorTau::new(0.835).unwrap();
    assert!(r.converged && r.jacobian_min > 0.0);
    assert!((r.C_inf - op.value(&[2.0, 2.0])).abs() <= 2e-2);
    let k = state.grid().nearest([0.0, 0.0]);
    let g = state.gradient_at(k);
    assert!((g[0] - 0.5).abs() < 1e-3 && g[1].abs() < 1e-3, "{g:?}");
}

#[test]
fn step_budget_exhaustion_is_reported() {
    let mut cfg = unit_disk_config(FRAC_PI_2, 24, radial());
    cfg.max_steps = 1;
    let (_, r, _) = solve(&cfg);
    assert!(!r.converged);
    assert_eq!(r.steps, 1);
}

#[test]
fn graph_round_trip_reproduces_the_image_check() {
    let (state, _, _) = solve(&unit_disk_config(FRAC_PI_2, 24, radial()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.csv");
    graph_export(&state, &path, 512).unwrap();
    let rows = read_graph(&path).unwrap();
    assert_eq!(rows.len(), state.grid().active().len() + 512);
    let from_file = image_check_graph(&rows, state.omega(), state.omega_tilde(), 512).unwrap();
    assert_eq!(from_file, image_check(&state, 512).unwrap());
}

#[test]
fn field_dump_has_one_row_per_active_node() {
    let setup = FlowSetup::from_config(&unit_disk_config(FRAC_PI_4, 16, radial())).unwrap();
    let state = setup.init().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fields.csv");
    write_fields(&state, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,u,ut,du_x,du_y,f_value"));
    assert_eq!(lines.count(), state.grid().active().len());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = unit_disk_config(0.6, 24, radial());
    let one = in_pool(1, || solve(&cfg));
    let four = in_pool(4, || solve(&cfg));
    assert_eq!(one.2, four.2);
    let bits = |s: &[f64]| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(one.0.values()), bits(four.0.values()));
    assert!(!one.2.contains("\"wall_time\""));
}

#[test]
fn level_set_domain_flow() {
    let f = Arc::new(|p: [f64; 2]| p[0].hypot(p[1]) - 1.0);
    let bounds = BoundingBox {
        min: [-1.0, -1.0],
        max: [1.0, 1.0],
    };
    let omega = Domain::level_set(f, bounds, 1.0).unwrap();
    let target = Domain::disk([0.0, 0.0], 1.5).unwrap();
    let grid = Arc::new(GridSpec::with_cells(&omega, 24).unwrap());
    let params = FlowParams::default();
    let op = OperatorTau::new(FRAC_PI_4).unwrap();
    let mut state = init_state(grid, omega, target, op, &InitialData::Auto, &params).unwrap();
    let r = state.run(&params, |_| Ok(())).unwrap();
    assert!(r.converged);
    assert!((r.C_inf - op.value(&[1.5, 1.5])).abs() <= 2e-2, "{}", r.C_inf);
}

#[test]
fn observer_errors_stop_the_run() {
    let setup = FlowSetup::from_config(&unit_disk_config(FRAC_PI_4, 16, radial())).unwrap();
    let mut state = setup.init().unwrap();
    let err = state
        .run(&setup.params, |s| {
            if s.steps() == 3 {
                Err(Error::Precondition("stop".into()))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
    assert_eq!(state.steps(), 3);
}
