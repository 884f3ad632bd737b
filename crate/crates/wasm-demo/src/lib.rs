//! Browser bindings: odd-moment weights, the bounds table, and a small
//! decomposition with its coloured partition.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sosforge::bounds::bounds_table;
use sosforge::decompose::{decompose, DecomposeConfig};
use sosforge::field::{PolynomialField, PolynomialSpec};
use sosforge::oddvand::odd_moment_weights;
use sosforge::sampling::BoxDomain;
use sosforge::verify::check_reconstruction;

/// Largest top-level partition the demo reports on.
const MAX_DEMO_CUBES: usize = 60_000;

#[derive(Serialize)]
pub struct DemoRun {
    pub classes: usize,
    pub cubes: usize,
    pub chromatic: usize,
    pub residual: f64,
    pub fmax: f64,
    pub svg: Option<String>,
}

/// Weights for odd `ell` as JSON `{ell, s, etas, qs, pass}`.
pub fn weights_json(ell: usize) -> Result<String, String> {
    let w = odd_moment_weights(ell).map_err(|e| e.to_string())?;
    serde_json::to_string(&w.to_doc()).map_err(|e| e.to_string())
}

/// Bounds rows for `1..=n_max` and `2..=k_max` as JSON.
pub fn bounds_json(n_max: u32, k_max: u32) -> Result<String, String> {
    if n_max == 0 || n_max > 12 || !(2..=20).contains(&k_max) {
        return Err("need 1 ≤ n ≤ 12 and 2 ≤ k ≤ 20".into());
    }
    let rows = bounds_table(1..=n_max, 2..=k_max).map_err(|e| e.to_string())?;
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

/// Decomposes a polynomial given as `{"dim", "k", "alpha", "terms"}` on the
/// cube `[-half, half]^n` and reports the class count, the reconstruction
/// residual on a grid and, in the plane, the coloured partition.
pub fn decompose_json(spec: &str, half: f64, nu: f64) -> Result<String, String> {
    let spec: PolynomialSpec = serde_json::from_str(spec).map_err(|e| e.to_string())?;
    if !(half > 0.0 && half <= 10.0) {
        return Err("half-width must be in (0, 10]".into());
    }
    if !(1..=2).contains(&spec.dim) {
        return Err("the demo handles dimensions 1 and 2".into());
    }
    let f = Arc::new(PolynomialField::from_spec(&spec).map_err(|e| e.to_string())?);
    let domain = BoxDomain::cube(spec.dim, -half, half);
    let cfg = DecomposeConfig {
        nu,
        inner_max_cubes: MAX_DEMO_CUBES / 4,
        ..DecomposeConfig::default()
    };
    let d = decompose(f.clone(), &domain, &cfg).map_err(|e| e.to_string())?;
    if d.diagnostics.cubes > MAX_DEMO_CUBES {
        return Err(format!(
            "{} cubes is too many for the demo; raise nu",
            d.diagnostics.cubes
        ));
    }
    let grid = domain.grid(if spec.dim == 1 { 801 } else { 61 });
    let rec = check_reconstruction(&d, f.as_ref(), &grid);
    let svg = match (&d.top, spec.dim) {
        (Some(top), 2) => Some(top.partition.to_svg(Some(&top.colors))),
        _ => None,
    };
    let run = DemoRun {
        classes: d.class_count(),
        cubes: d.diagnostics.cubes,
        chromatic: d.diagnostics.chromatic,
        residual: rec.worst,
        fmax: d.diagnostics.fmax,
        svg,
    };
    serde_json::to_string(&run).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn weights(ell: usize) -> Result<String, JsValue> {
    weights_json(ell).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bounds(n_max: u32, k_max: u32) -> Result<String, JsValue> {
    bounds_json(n_max, k_max).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn decompose_polynomial(spec: &str, half: f64, nu: f64) -> Result<String, JsValue> {
    decompose_json(spec, half, nu).map_err(|e| JsValue::from_str(&e))
}
