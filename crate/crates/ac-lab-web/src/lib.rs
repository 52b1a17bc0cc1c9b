//! Browser bindings: three small interactive computations on the standard double well.

use std::cell::OnceCell;
use std::f64::consts::SQRT_2;
use std::sync::Arc;

use ac_lab::heteroclinic::{interaction_integral, solve_profile, truncate, Profile};
use ac_lab::potential::DoubleWell;
use ac_lab::toda::separation_law;
use serde_json::json;
use wasm_bindgen::prelude::*;

thread_local! {
    static PROFILE: OnceCell<Arc<Profile>> = const { OnceCell::new() };
}

fn profile() -> Result<Arc<Profile>, String> {
    PROFILE.with(|c| {
        if let Some(p) = c.get() {
            return Ok(p.clone());
        }
        let p = Arc::new(solve_profile(&DoubleWell::standard(), 16.0, 4096).map_err(|e| e.to_string())?);
        Ok(c.get_or_init(|| p).clone())
    })
}

/// Samples of H, H' and the truncated profile at cutoff `lambda` on [-t_max, t_max].
pub fn profile_json(lambda: f64, t_max: f64, n: usize) -> Result<String, String> {
    if !(t_max > 0.0) || n < 2 || n > 20_000 {
        return Err("need t_max > 0 and 2 <= n <= 20000".into());
    }
    let p = profile()?;
    let tr = truncate(p.clone(), lambda).map_err(|e| e.to_string())?;
    let mut t = Vec::with_capacity(n);
    let (mut h, mut hp, mut ht) = (vec![], vec![], vec![]);
    for k in 0..n {
        let s = -t_max + 2.0 * t_max * k as f64 / (n - 1) as f64;
        let e = p.eval(s);
        t.push(s);
        h.push(e[0]);
        hp.push(e[1]);
        ht.push(tr.eval(s)[0]);
    }
    Ok(json!({ "t": t, "H": h, "Hp": hp, "truncated": ht, "h0": p.h0, "A0": p.a0 }).to_string())
}

/// Separation table over a descending epsilon list.
pub fn separation_json(lambda: f64, eps: &[f64]) -> Result<String, String> {
    let p = profile()?;
    let t = separation_law(lambda, eps, p.a0, p.h0).map_err(|e| e.to_string())?;
    serde_json::to_string(&t).map_err(|e| e.to_string())
}

/// Interaction integral at separation T with the exponential model.
pub fn interaction_json(big_t: f64) -> Result<String, String> {
    let p = profile()?;
    let (v, err) = interaction_integral(&p, big_t).map_err(|e| e.to_string())?;
    let model = -16.0 * SQRT_2 * (-SQRT_2 * big_t).exp();
    Ok(json!({ "T": big_t, "I": v, "quad_error": err, "model": model, "ratio": v / model }).to_string())
}

#[wasm_bindgen]
pub fn profile_curve(lambda: f64, t_max: f64, n: usize) -> Result<String, JsValue> {
    profile_json(lambda, t_max, n).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn separation(lambda: f64, eps_csv: &str) -> Result<String, JsValue> {
    let eps: Result<Vec<f64>, _> = eps_csv.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let eps = eps.map_err(|e| JsValue::from_str(&format!("bad epsilon list: {e}")))?;
    separation_json(lambda, &eps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn interaction(big_t: f64) -> Result<String, JsValue> {
    interaction_json(big_t).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_samples_are_consistent() {
        let v: serde_json::Value = serde_json::from_str(&profile_json(4.0, 8.0, 161).unwrap()).unwrap();
        let h = v["H"].as_array().unwrap();
        assert_eq!(h.len(), 161);
        assert!((h[80].as_f64().unwrap()).abs() < 1e-12);
        assert!((v["h0"].as_f64().unwrap() - 2.0 * SQRT_2 / 3.0).abs() < 1e-8);
        assert!(profile_json(4.0, -1.0, 10).is_err());
    }

    #[test]
    fn separation_and_interaction() {
        let v: serde_json::Value = serde_json::from_str(&separation_json(1.0, &[0.1, 0.05, 0.025, 0.0125]).unwrap()).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 4);
        let i: serde_json::Value = serde_json::from_str(&interaction_json(12.0).unwrap()).unwrap();
        assert!((i["ratio"].as_f64().unwrap() - 1.0).abs() < 0.01);
    }
}
