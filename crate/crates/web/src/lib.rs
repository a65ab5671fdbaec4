//! Browser bindings. Every export takes plain numbers or JSON text and
//! returns JSON text; the `*_json` functions below hold the logic so they
//! can be tested natively.

use inl_core::baselines::bandwidth::{table1, BandwidthParams, Scheme};
use inl_core::info::{five_node_region_check, prop1_curve, Channel, FiveNodeCapacities, FiveNodeTerms, JointPmf};
use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

type Res = std::result::Result<String, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn bandwidth_json(q: f64, p: f64, s_bits: f64, clients: f64, n_params: f64, eta_frac: f64) -> Res {
    let b = BandwidthParams { q, p, s_bits, clients, n_params, eta_frac };
    b.validate().map_err(err)?;
    let bits: serde_json::Map<String, Value> =
        [Scheme::Fl, Scheme::Sl, Scheme::Inl].iter().map(|s| (s.as_str().to_string(), json!(s.bits(&b)))).collect();
    Ok(json!({"params": b, "bits": bits}).to_string())
}

pub fn table_json() -> String {
    let rows: Vec<Value> = table1()
        .iter()
        .map(|c| json!({"model": c.model, "q": c.q, "scheme": c.scheme.as_str(), "gbits": c.gbits, "reference": c.reference, "matched": c.matched}))
        .collect();
    Value::Array(rows).to_string()
}

/// Boundary points for a uniform binary label seen through three bit-flip
/// channels.
pub fn curve_json(flips: &[f64], s_values: &[f64], step: f64) -> Res {
    if flips.len() != 3 {
        return Err(format!("need three flip probabilities, got {}", flips.len()));
    }
    let joint = JointPmf::noisy_copies(flips).map_err(err)?;
    let pts = prop1_curve(&joint, s_values, step).map_err(err)?;
    let out: Vec<Value> = pts
        .iter()
        .map(|p| json!({"s": p.s, "delta": p.delta, "c_s": p.c_s, "l_s": p.l_s, "identity_residual": p.identity_residual}))
        .collect();
    Ok(Value::Array(out).to_string())
}

#[derive(Deserialize)]
struct FiveNodeInput {
    flips: Vec<f64>,
    /// Per-source channels; identity when absent.
    #[serde(default)]
    channels: Option<Vec<Channel>>,
    capacities: FiveNodeCapacities,
}

pub fn five_node_json(input: &str) -> Res {
    let inp: FiveNodeInput = serde_json::from_str(input).map_err(err)?;
    let joint = JointPmf::noisy_copies(&inp.flips).map_err(err)?;
    if joint.num_sources() != 3 {
        return Err("the five-node net has three sources".into());
    }
    let channels = inp.channels.unwrap_or_else(|| vec![Channel::identity(2); 3]);
    let terms = FiveNodeTerms::compute(&joint, &channels).map_err(err)?;
    let v = five_node_region_check(&joint, &channels, &inp.capacities).map_err(err)?;
    Ok(json!({"verdict": v, "terms": terms, "sum_threshold": terms.sum_threshold()}).to_string())
}

#[wasm_bindgen]
pub fn bandwidth(q: f64, p: f64, s_bits: f64, clients: f64, n_params: f64, eta_frac: f64) -> Result<String, JsError> {
    bandwidth_json(q, p, s_bits, clients, n_params, eta_frac).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn reference_table() -> String {
    table_json()
}

#[wasm_bindgen]
pub fn relevance_curve(flips: Vec<f64>, s_values: Vec<f64>, step: f64) -> Result<String, JsError> {
    curve_json(&flips, &s_values, step).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn five_node_check(input: &str) -> Result<String, JsError> {
    five_node_json(input).map_err(|e| JsError::new(&e))
}
