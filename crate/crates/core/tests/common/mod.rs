#![allow(dead_code)]

use lagflow::config::{FlowConfig, SolveDocument};
use lagflow::solver::{run_flow, FlowReport, FlowState};
use lagflow::SpectralOperator;
use serde_json::json;

pub fn disk(center: [f64; 2], radius: f64) -> serde_json::Value {
    json!({"kind": "disk", "center": center, "radius": radius})
}

pub fn ellipse(center: [f64; 2], semi_axes: [f64; 2]) -> serde_json::Value {
    json!({"kind": "ellipse", "center": center, "semi_axes": semi_axes})
}

/// Flow configuration with a `cells`-wide grid over the bounding box of
/// `domain`.
pub fn config(
    tau: f64,
    domain: serde_json::Value,
    domain_tilde: serde_json::Value,
    cells: usize,
    u0: serde_json::Value,
) -> FlowConfig {
    let doc = json!({
        "tau": tau,
        "domain": domain,
        "domain_tilde": domain_tilde,
        "grid": {"cells": cells},
        "u0": u0,
    });
    FlowConfig::from_json(&doc.to_string()).expect("valid config")
}

pub fn unit_disk_config(tau: f64, cells: usize, u0: serde_json::Value) -> FlowConfig {
    config(tau, disk([0.0, 0.0], 1.0), disk([0.0, 0.0], 1.0), cells, u0)
}

pub fn radial() -> serde_json::Value {
    json!({"mode": "radial"})
}

pub fn bump() -> serde_json::Value {
    json!({"mode": "bump"})
}

pub fn solve(config: &FlowConfig) -> (FlowState, FlowReport, String) {
    let (state, report) = run_flow(config).expect("flow runs");
    let doc = SolveDocument::new(config, state.operator().descriptor(), report.clone());
    let json = doc.to_json().expect("serializes");
    (state, report, json)
}

pub fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}
