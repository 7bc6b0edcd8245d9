//! Browser demo: a weighted 2-D point set, two samples of it, and box queries.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use structsample::data::zipf_2d;
use structsample::experiment::{build_summary, BuildConfig, Method};
use structsample::product::{BoxQuery, ProductDomain};
use structsample::query::{discrepancy, estimate_range, RangeQuery};
use structsample::{seeded_rng, Sample, WeightedKey};

/// Dataset plus the current structure-aware and oblivious samples.
pub struct Demo {
    side: u64,
    keys: Vec<WeightedKey>,
    domain: ProductDomain,
    aware: Option<Sample>,
    obliv: Option<Sample>,
}

impl Demo {
    pub fn generate(n: usize, side: u64, exponent: f64, seed: u64) -> Result<Self, String> {
        let keys = zipf_2d(n, side, exponent, &mut seeded_rng(seed)).map_err(|e| e.to_string())?;
        Ok(Self {
            side,
            keys,
            domain: ProductDomain::ordered(2),
            aware: None,
            obliv: None,
        })
    }

    pub fn points(&self) -> Value {
        let pts: Vec<Value> = self.keys.iter().map(|k| json!([k.coords[0], k.coords[1], k.weight])).collect();
        json!({ "side": self.side, "points": pts })
    }

    pub fn resample(&mut self, s: usize, seed: u64) -> Result<Value, String> {
        let build = |method| {
            let mut cfg = BuildConfig::new(s, method, seed);
            cfg.in_memory = true;
            build_summary(&self.keys, &self.domain, &cfg).map_err(|e| e.to_string())
        };
        let aware = build(Method::Aware)?;
        let obliv = build(Method::Obliv)?;
        let pts = |sm: &Sample| -> Vec<Value> { sm.members.iter().map(|k| json!([k.coords[0], k.coords[1]])).collect() };
        let out = json!({ "tau": aware.tau(), "aware": pts(&aware), "obliv": pts(&obliv) });
        self.aware = Some(aware);
        self.obliv = Some(obliv);
        Ok(out)
    }

    /// Inclusive box `[x0, x1] x [y0, y1]`.
    pub fn query(&self, x0: u64, y0: u64, x1: u64, y1: u64) -> Result<Value, String> {
        let (aware, obliv) = match (&self.aware, &self.obliv) {
            (Some(a), Some(o)) => (a, o),
            _ => return Err("no sample yet".into()),
        };
        let b = BoxQuery::interval(&[x0.min(x1), y0.min(y1)], &[x0.max(x1), y0.max(y1)]);
        let q = RangeQuery::single(b);
        let inside: Vec<&WeightedKey> =
            self.keys.iter().filter(|k| q.contains(&self.domain, &k.coords)).collect();
        let truth: f64 = inside.iter().map(|k| k.weight).sum();
        let report = |sm: &Sample| -> Result<Value, String> {
            let tau = sm.tau();
            let mass: f64 = inside.iter().map(|k| (k.weight / tau).min(1.0)).sum();
            let count = sm.members.iter().filter(|k| q.contains(&self.domain, &k.coords)).count();
            let estimate = estimate_range(sm, &q, &self.domain).map_err(|e| e.to_string())?;
            Ok(json!({
                "estimate": estimate,
                "count": count,
                "mass": mass,
                "discrepancy": discrepancy(count, mass),
            }))
        };
        Ok(json!({ "truth": truth, "keys": inside.len(), "aware": report(aware)?, "obliv": report(obliv)? }))
    }
}

fn js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct Scene(Demo);

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, side: u32, exponent: f64, seed: u32) -> Result<Scene, JsError> {
        Demo::generate(n, side as u64, exponent, seed as u64)
            .map(Scene)
            .map_err(|e| JsError::new(&e))
    }

    /// JSON `{side, points: [[x, y, w], ...]}`.
    pub fn points(&self) -> String {
        self.0.points().to_string()
    }

    /// JSON `{tau, aware: [[x, y], ...], obliv: [[x, y], ...]}`.
    pub fn resample(&mut self, s: usize, seed: u32) -> Result<String, JsError> {
        js(self.0.resample(s, seed as u64))
    }

    /// JSON with the true box weight and, per sample, estimate, count, mass and discrepancy.
    pub fn query(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<String, JsError> {
        js(self.0.query(x0 as u64, y0 as u64, x1 as u64, y1 as u64))
    }
}
