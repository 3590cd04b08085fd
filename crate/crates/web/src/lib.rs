//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain values and returns a JSON string, so the page
//! needs no generated type definitions.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use mcqn::fluid::{
    fluid_trajectory, stability_probe, unit_directions, verify_fluid_solution, FluidSpec, StabilityVerdict,
};
use mcqn::lyapunov::{synthesize_linear_certificate, CertificateOutcome};
use mcqn::network::traffic_intensity;
use mcqn::presets;
use mcqn::sim::{Horizon, SimState, Simulator};

/// Plot points kept per series.
pub const MAX_POINTS: usize = 2000;

fn spec(name: &str) -> Result<mcqn::ValidatedSpec, String> {
    presets::preset(name).map_err(|e| e.to_string())
}

fn fluid(name: &str) -> Result<FluidSpec, String> {
    FluidSpec::from_network(&spec(name)?).map_err(|e| e.to_string())
}

fn parse_vec<T: serde::de::DeserializeOwned>(json: &str, k: usize) -> Result<Vec<T>, String> {
    let v: Vec<T> = serde_json::from_str(json).map_err(|e| format!("initial state: {e}"))?;
    if v.len() != k {
        return Err(format!("initial state needs {k} entries, got {}", v.len()));
    }
    Ok(v)
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("serializes")
}

/// Preset names with their class count and load.
pub fn preset_list() -> String {
    let list: Vec<_> = presets::PRESET_NAMES
        .iter()
        .map(|&name| {
            let s = presets::preset(name).expect("known preset");
            json!({ "name": name, "classes": s.num_classes(), "load": traffic_intensity(&s) })
        })
        .collect();
    to_json(&list)
}

/// Breakpoints of the fluid solution from `q0` with per-class levels.
pub fn fluid_path(preset: &str, q0_json: &str, horizon: f64) -> Result<String, String> {
    let f = fluid(preset)?;
    let q0: Vec<f64> = parse_vec(q0_json, f.num_classes())?;
    let traj = fluid_trajectory(&f, &q0, horizon).map_err(|e| e.to_string())?;
    let verified = verify_fluid_solution(&traj, &f, 1e-9).passed;
    Ok(to_json(&json!({
        "times": traj.times,
        "q": traj.q,
        "emptying_time": traj.emptying_time(),
        "verified": verified,
    })))
}

/// `|q|` along a simulated path, thinned to at most [`MAX_POINTS`] points.
pub fn simulate_path(preset: &str, q0_json: &str, events: u64, seed: u64) -> Result<String, String> {
    let s = spec(preset)?;
    let q0: Vec<usize> = parse_vec(q0_json, s.num_classes())?;
    let x0 = SimState::with_queue_lengths(&s, &q0, seed);
    let mut sim = Simulator::new(&s, x0, seed).map_err(|e| e.to_string())?;
    let every = (events / MAX_POINTS as u64).max(1);
    let (mut times, mut totals) = (Vec::new(), Vec::new());
    let mut n = 0u64;
    let summary = sim
        .run(Horizon::Events(events), |seg| {
            if n.is_multiple_of(every) {
                times.push(seg.start);
                totals.push(seg.state.total_customers());
            }
            n += 1;
            std::ops::ControlFlow::Continue(())
        })
        .map_err(|e| e.to_string())?;
    times.push(summary.end_time);
    totals.push(sim.state().total_customers());
    Ok(to_json(
        &json!({ "times": times, "total": totals, "events": summary.events }),
    ))
}

/// Fluid stability verdict from the coordinate directions plus the linear
/// certificate search.
pub fn stability(preset: &str, tau_cap: f64) -> Result<String, String> {
    let f = fluid(preset)?;
    let probe = stability_probe(&f, &unit_directions(f.num_classes()), tau_cap).map_err(|e| e.to_string())?;
    let verdict = match probe.verdict {
        StabilityVerdict::Stable { tau } => format!("stable: drains within {tau:.4} x |Q(0)|"),
        StabilityVerdict::Diverging { slope } => format!("diverging: |Q| grows at {slope:.4}"),
        StabilityVerdict::Inconclusive => "inconclusive".to_string(),
    };
    let certificate = match synthesize_linear_certificate(&f).map_err(|e| e.to_string())? {
        CertificateOutcome::Feasible(c) => json!({ "found": true, "xi": c.xi, "gamma": c.gamma }),
        CertificateOutcome::Infeasible { reason, .. } => json!({ "found": false, "reason": reason }),
    };
    Ok(to_json(
        &json!({ "verdict": verdict, "load": traffic_intensity(&spec(preset)?), "certificate": certificate }),
    ))
}

#[wasm_bindgen(js_name = presets)]
pub fn presets_js() -> String {
    preset_list()
}

#[wasm_bindgen(js_name = fluidPath)]
pub fn fluid_path_js(preset: &str, q0_json: &str, horizon: f64) -> Result<String, JsError> {
    fluid_path(preset, q0_json, horizon).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulatePath)]
pub fn simulate_path_js(preset: &str, q0_json: &str, events: u32, seed: u32) -> Result<String, JsError> {
    simulate_path(preset, q0_json, events as u64, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = stability)]
pub fn stability_js(preset: &str, tau_cap: f64) -> Result<String, JsError> {
    stability(preset, tau_cap).map_err(|e| JsError::new(&e))
}
