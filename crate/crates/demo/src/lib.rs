//! WebAssembly bindings for a static demo page.

use wasm_bindgen::prelude::*;

use kifa::bell::fit_bell_membership;
use kifa::inference::{and_type, InferenceParams, SNorm, TNorm};
use kifa::skeleton::{displacement_magnitudes, Action, Intensity};
use kifa::syngen::{generate_sample, GenParams, MotionTemplate};

/// Per-frame displacement of a generated sample.
pub fn displacement_series(action: usize, intense: bool, seed: u64) -> Result<Vec<f64>, String> {
    let action = Action::from_index(action).ok_or_else(|| format!("unknown action index {action}"))?;
    let intensity = if intense { Intensity::Intense } else { Intensity::Mild };
    let params = GenParams {
        seed,
        ..GenParams::default()
    };
    let sample = generate_sample(&MotionTemplate::builtin(action), intensity, &params, seed);
    Ok(displacement_magnitudes(&sample.sequence))
}

/// AND-type operator value for two memberships.
pub fn and_type_value(a: f64, b: f64, lambda: f64, product: bool) -> Result<f64, String> {
    if ![a, b, lambda].iter().all(|v| (0.0..=1.0).contains(v)) {
        return Err("inputs must lie in [0, 1]".into());
    }
    let (t_norm, s_norm) = if product {
        (TNorm::Product, SNorm::ProbabilisticSum)
    } else {
        (TNorm::Min, SNorm::Max)
    };
    let params = InferenceParams {
        alpha: vec![1.0],
        lambda_and: lambda,
        t_norm,
        s_norm,
    };
    Ok(and_type(a, b, &params))
}

/// Bell fit as `[c, a, b, residual]`.
pub fn bell_fit(x: &[f64], y: &[f64]) -> Result<Vec<f64>, String> {
    let fit = fit_bell_membership(x, y).map_err(|e| e.to_string())?;
    Ok(vec![fit.c, fit.a, fit.b, fit.residual])
}

#[wasm_bindgen(js_name = displacementSeries)]
pub fn displacement_series_js(action: usize, intense: bool, seed: u32) -> Result<Vec<f64>, JsError> {
    displacement_series(action, intense, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = andType)]
pub fn and_type_js(a: f64, b: f64, lambda: f64, product: bool) -> Result<f64, JsError> {
    and_type_value(a, b, lambda, product).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = bellFit)]
pub fn bell_fit_js(x: &[f64], y: &[f64]) -> Result<Vec<f64>, JsError> {
    bell_fit(x, y).map_err(|e| JsError::new(&e))
}
