//! Browser demo: plant a pulse on a generated day and watch the detector,
//! the isolators and the mitigators respond.
//!
//! Every operation returns a JSON string for the page to `JSON.parse`.

use gridguard::attack::{forge, AttackSpec};
use gridguard::datastore::{generate, Corpus, Day};
use gridguard::detect::{csr_classify, sr_classify};
use gridguard::domain::controllable_daily_demand;
use gridguard::experiment::{self, ExperimentConfig, Scenario, TrainedDetector};
use gridguard::isolate::{beam_search_isolate, csr_isolate, lof_isolate};
use gridguard::{Error, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct Demo {
    cfg: ExperimentConfig,
    corpus: Corpus,
    trained: TrainedDetector,
}

fn js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

impl Demo {
    pub fn build(seed: u64, days: usize, houses: usize) -> Result<Demo> {
        let mut cfg = ExperimentConfig::default().with_seed(seed);
        cfg.generator.days = days;
        cfg.generator.houses = houses;
        cfg.generator.attacked_fraction = 0.0;
        let corpus = generate(&cfg.generator)?;
        let trained = experiment::train(&corpus, &cfg)?;
        Ok(Demo {
            cfg,
            corpus,
            trained,
        })
    }

    fn test_day(&self, index: usize) -> Result<&Day> {
        let days = self.corpus.test_days();
        days.get(index).ok_or_else(|| {
            Error::Precondition(format!("test day {index} out of range 0..{}", days.len()))
        })
    }

    /// The day's genuine forecast with a pulse of `magnitude` on `slot`.
    fn attacked(&self, day: &Day, slot: usize, magnitude: f64) -> Result<Vec<f64>> {
        if magnitude == 0.0 {
            return Ok(day.genuine.clone());
        }
        let spec = AttackSpec::pulse(vec![slot], magnitude);
        Ok(forge(&day.genuine, &spec, controllable_daily_demand(&day.houses))?.0)
    }

    pub fn detection(&self, index: usize, slot: usize, magnitude: f64) -> Result<Value> {
        let day = self.test_day(index)?;
        let received = self.attacked(day, slot, magnitude)?;
        let csr = csr_classify(&received, &self.trained.model, &self.trained.csr)?;
        let sr = sr_classify(&received, &self.trained.sr)?;
        let centroid = csr.nearest_cluster.map(|j| self.trained.model.centroids[j].clone());
        Ok(json!({
            "day_id": day.day_id,
            "genuine": day.genuine,
            "received": received,
            "centroid": centroid,
            "csr": {
                "saliency": csr.saliency.values,
                "threshold": self.trained.csr.threshold,
                "flagged": csr.verdict.is_attacked(),
                "peak": csr.saliency.peak_index,
            },
            "sr": {
                "saliency": sr.saliency.values,
                "threshold": self.trained.sr.threshold,
                "flagged": sr.verdict.is_attacked(),
                "peak": sr.saliency.peak_index,
            },
        }))
    }

    pub fn isolation(&self, index: usize, slot: usize, magnitude: f64) -> Result<Value> {
        let day = self.test_day(index)?;
        let received = self.attacked(day, slot, magnitude)?;
        let model = &self.trained.model;
        let beam = beam_search_isolate(&received, model, &self.cfg.isolation)?;
        let lof = lof_isolate(&received, model, &self.cfg.lof)?;
        let mut report = csr_classify(&received, model, &self.trained.csr)?;
        let flagged = report.verdict.is_attacked();
        report.verdict = gridguard::detect::Verdict::Attacked;
        let csr = csr_isolate(&report, self.trained.csr.threshold, self.cfg.isolation.max_subspace)?;
        // Singleton path scores give one bar per slot.
        let mut singles = vec![f64::NAN; received.len()];
        for s in beam.scores.iter().filter(|s| s.slots.len() == 1) {
            singles[s.slots[0]] = s.score;
        }
        Ok(json!({
            "received": received,
            "flagged": flagged,
            "beam": beam.attacked_slots,
            "lof": lof.attacked_slots,
            "csr": csr.attacked_slots,
            "slot_scores": singles,
        }))
    }

    pub fn simulation(&self, index: usize, magnitude: f64, method: u8) -> Result<Value> {
        let day = self.test_day(index)?;
        let mut cfg = self.cfg.clone();
        cfg.simulation.magnitudes = vec![magnitude];
        let scenarios = [Scenario::Clean, Scenario::Attack, Scenario::Mitigated(method)];
        let price = cfg.price_for(&self.corpus);
        let rows = experiment::simulate_day(day, self.corpus.grid(), &price, &self.trained, &cfg, &scenarios)?;
        let rows: Vec<Value> = rows
            .iter()
            .map(|r| {
                json!({
                    "scenario": r.scenario.to_string(),
                    "forecast": r.forecast,
                    "target_slots": r.target_slots,
                    "attacker_delta_pct": r.attacker_delta_pct,
                    "community_delta_pct": r.community_delta_pct,
                    "mape": r.mape,
                    "detected": r.detected,
                    "corrected_slots": r.corrected_slots,
                    "iterations": r.iterations,
                })
            })
            .collect();
        Ok(json!({ "day_id": day.day_id, "rows": rows }))
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, days: u32, houses: u32) -> std::result::Result<Demo, JsError> {
        Demo::build(seed as u64, days as usize, houses as usize).map_err(|e| JsError::new(&e.to_string()))
    }

    #[wasm_bindgen(js_name = testDays)]
    pub fn test_days(&self) -> usize {
        self.corpus.test_days().len()
    }

    #[wasm_bindgen(js_name = pricingSlots)]
    pub fn pricing_slots(&self) -> usize {
        self.corpus.grid().pricing_slots()
    }

    /// CSR and plain SR saliency of the day with a planted pulse.
    pub fn detect(&self, day: usize, slot: usize, magnitude: f64) -> std::result::Result<String, JsError> {
        js(self.detection(day, slot, magnitude))
    }

    /// Slots picked by beam search, LOF and saliency argmax.
    pub fn isolate(&self, day: usize, slot: usize, magnitude: f64) -> std::result::Result<String, JsError> {
        js(self.isolation(day, slot, magnitude))
    }

    /// Clean, attacked and mitigated DR runs of the day.
    pub fn simulate(&self, day: usize, magnitude: f64, method: u8) -> std::result::Result<String, JsError> {
        js(self.simulation(day, magnitude, method))
    }
}
