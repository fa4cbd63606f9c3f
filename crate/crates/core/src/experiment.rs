//! End-to-end experiments over a corpus: training and calibration, detection,
//! isolation, paired DR simulations and the joined evaluation tables.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::{attack_hook, AttackKind, AttackSpec};
use crate::datastore::{self, Corpus, Day, GeneratorConfig};
use crate::detect::{
    calibrate_threshold, classification_metrics, csr_classify, desk_scale_k, fit_clusters,
    sr_classify, ClassificationMetrics, ClassifierKind, ClusterModel, CsrConfig, ResidualOrder,
};
use crate::domain::{controllable_daily_demand, Appliance, House, SlotGrid};
use crate::engine::{
    price_signal, run_dr, total_penalty, DrConfig, DrOutcome, ForecastHook, Identity, PriceModel,
};
use crate::error::{Error, Result};
use crate::isolate::{
    beam_search_isolate, csr_isolate, isolation_recall, lof_isolate, magnitude_bucket,
    BucketRecall, IsolationCase, IsolationConfig, IsolationMethod, LofConfig,
};
use crate::mitigate::{mape, AuditRow, Isolator, MitigationHook, MitigationMethod};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSettings {
    pub q: usize,
    pub order: ResidualOrder,
    /// Percentile of attack-free training peaks used as the threshold.
    pub percentile: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            q: 3,
            order: ResidualOrder::default(),
            percentile: 95.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSettings {
    /// Demand of the attacker's inflexible device per scheduling slot.
    pub attacker_demand: f64,
    /// Pricing slots the device runs (and the pulse covers).
    pub attacker_slots: usize,
    /// Pulse sizes injected on every simulated day.
    pub magnitudes: Vec<f64>,
    /// Simulate only the first this-many test days.
    pub max_days: Option<usize>,
    /// Re-run the classifier on every iteration until it first flags.
    pub rescan: bool,
    pub placement: Placement,
}

/// Where the attacker's device runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Peak of the preferred-start aggregate.
    InitialPeak,
    /// Peak of the community's converged attack-free schedule, i.e. the
    /// slots that stay expensive after demand response.
    #[default]
    ConvergedPeak,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            attacker_demand: 1.0,
            attacker_slots: 1,
            magnitudes: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            max_days: None,
            rescan: false,
            placement: Placement::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub price: PriceModel,
    /// Overrides the corpus's mean slot demand as the price reference.
    pub reference_demand: Option<f64>,
    pub dr: DrConfig,
    /// Cluster count; defaults to one per 25 training days (at least 4).
    pub k: Option<usize>,
    pub detector: DetectorSettings,
    pub isolation: IsolationConfig,
    pub lof: LofConfig,
    pub classifier: ClassifierKind,
    pub isolator: IsolationMethod,
    pub simulation: SimulationSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            generator: GeneratorConfig::default(),
            price: PriceModel::default(),
            reference_demand: None,
            dr: DrConfig::default(),
            k: None,
            detector: DetectorSettings::default(),
            isolation: IsolationConfig::default(),
            lof: LofConfig::default(),
            classifier: ClassifierKind::Csr,
            isolator: IsolationMethod::IsolationPath,
            simulation: SimulationSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// One seed drives generation, clustering and isolation.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.generator.seed = seed;
        self.isolation.seed = seed;
        self
    }

    /// Reads a JSON config. Missing fields take their defaults; a
    /// `format_version`, if present, must match.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(path, &text)
    }

    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        let json_err = |source| Error::Json {
            path: path.to_path_buf(),
            source,
        };
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
        if let Some(obj) = value.as_object_mut() {
            if let Some(v) = obj.remove("format_version") {
                let found = v.as_u64().unwrap_or(0) as u32;
                if found != datastore::FORMAT_VERSION {
                    return Err(Error::Version {
                        path: path.to_path_buf(),
                        found,
                        expected: datastore::FORMAT_VERSION,
                    });
                }
            }
        }
        let cfg: Self = serde_json::from_value(value).map_err(json_err)?;
        cfg.generator.validate()?;
        cfg.price.validate()?;
        Ok(cfg)
    }

    pub fn price_for(&self, corpus: &Corpus) -> PriceModel {
        self.price
            .with_reference_demand(self.reference_demand.unwrap_or(corpus.reference_demand))
    }
}

/// Fitted clusters plus the calibrated thresholds of both classifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedDetector {
    pub model: ClusterModel,
    pub csr: CsrConfig,
    pub sr: CsrConfig,
    pub percentile: f64,
}

impl TrainedDetector {
    pub fn config(&self, kind: ClassifierKind) -> CsrConfig {
        match kind {
            ClassifierKind::Csr => self.csr,
            ClassifierKind::Sr => self.sr,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        datastore::save_json(path, "cluster_model", self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        datastore::load_json(path, "cluster_model")
    }
}

/// Fits k-means on the attack-free training days and sets each classifier's
/// threshold at the configured percentile of its training peak saliency.
pub fn train(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<TrainedDetector> {
    let train = corpus.train_forecasts();
    let k = cfg.k.unwrap_or_else(|| desk_scale_k(train.len()));
    let model = fit_clusters(&train, k, cfg.seed)?;
    let probe = CsrConfig {
        q: cfg.detector.q,
        threshold: 0.0,
        order: cfg.detector.order,
    };
    let mut csr_peaks = Vec::with_capacity(train.len());
    let mut sr_peaks = Vec::with_capacity(train.len());
    for f in &train {
        csr_peaks.push(csr_classify(f.values(), &model, &probe)?.saliency.peak_value);
        sr_peaks.push(sr_classify(f.values(), &probe)?.saliency.peak_value);
    }
    let p = cfg.detector.percentile;
    Ok(TrainedDetector {
        csr: CsrConfig {
            threshold: calibrate_threshold(&csr_peaks, p)?,
            ..probe
        },
        sr: CsrConfig {
            threshold: calibrate_threshold(&sr_peaks, p)?,
            ..probe
        },
        percentile: p,
        model,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectRow {
    pub day_id: u32,
    pub attacked: bool,
    pub magnitude: Option<f64>,
    pub flagged: bool,
    pub peak_value: f64,
    pub peak_index: usize,
    pub nearest_cluster: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectBucket {
    pub bucket: u32,
    pub attacked: usize,
    pub flagged: usize,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    pub classifier: ClassifierKind,
    pub threshold: f64,
    pub metrics: ClassificationMetrics,
    pub buckets: Vec<DetectBucket>,
    pub rows: Vec<DetectRow>,
}

impl DetectReport {
    /// Recall over attacked days whose injection is at least `min_magnitude`.
    pub fn recall_at_least(&self, min_magnitude: f64) -> Option<f64> {
        let (n, hit) = self
            .rows
            .iter()
            .filter(|r| r.magnitude.is_some_and(|m| m >= min_magnitude - 1e-12))
            .fold((0, 0), |(n, hit), r| (n + 1, hit + usize::from(r.flagged)));
        (n > 0).then(|| hit as f64 / n as f64)
    }
}

/// Classifies every test-split forecast.
pub fn detect(corpus: &Corpus, trained: &TrainedDetector, kind: ClassifierKind) -> Result<DetectReport> {
    let cfg = trained.config(kind);
    let mut rows = Vec::new();
    for day in corpus.test_days() {
        let r = kind.classify(&day.received, &trained.model, &cfg)?;
        rows.push(DetectRow {
            day_id: day.day_id,
            attacked: day.is_attacked(),
            magnitude: day.attack.as_ref().map(|a| a.magnitude),
            flagged: r.verdict.is_attacked(),
            peak_value: r.saliency.peak_value,
            peak_index: r.saliency.peak_index,
            nearest_cluster: r.nearest_cluster,
        });
    }
    let flagged: Vec<bool> = rows.iter().map(|r| r.flagged).collect();
    let truth: Vec<bool> = rows.iter().map(|r| r.attacked).collect();
    let mut buckets: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for r in &rows {
        if let Some(m) = r.magnitude {
            let e = buckets.entry(magnitude_bucket(m)).or_default();
            e.0 += 1;
            e.1 += usize::from(r.flagged);
        }
    }
    Ok(DetectReport {
        classifier: kind,
        threshold: cfg.threshold,
        metrics: classification_metrics(&flagged, &truth)?,
        buckets: buckets
            .into_iter()
            .map(|(bucket, (attacked, flagged))| DetectBucket {
                bucket,
                attacked,
                flagged,
                recall: flagged as f64 / attacked as f64,
            })
            .collect(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolateRow {
    pub day_id: u32,
    pub magnitude: f64,
    pub planted: Vec<usize>,
    pub flagged: bool,
    /// `None` when the detector did not flag the day.
    pub verdict: Option<Vec<usize>>,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolateReport {
    pub isolator: IsolationMethod,
    pub classifier: ClassifierKind,
    /// Exact-match recall over every attacked test day.
    pub recall: f64,
    pub buckets: Vec<BucketRecall>,
    pub rows: Vec<IsolateRow>,
}

impl IsolateReport {
    pub fn recall_at_least(&self, min_magnitude: f64) -> Option<f64> {
        let (n, hit) = self
            .rows
            .iter()
            .filter(|r| r.magnitude >= min_magnitude - 1e-12)
            .fold((0, 0), |(n, hit), r| (n + 1, hit + usize::from(r.exact)));
        (n > 0).then(|| hit as f64 / n as f64)
    }
}

/// Routes every attacked test day through the classifier and isolates the
/// flagged ones. Unflagged days count as misses.
pub fn isolate(
    corpus: &Corpus,
    trained: &TrainedDetector,
    cfg: &ExperimentConfig,
    classifier: ClassifierKind,
    isolator: IsolationMethod,
) -> Result<IsolateReport> {
    let det = trained.config(classifier);
    let attacked: Vec<Day> = corpus.test_days().iter().filter(|d| d.is_attacked()).cloned().collect();
    let rows = map_days(&attacked, |day| -> Result<IsolateRow> {
        let attack = day.attack.as_ref().expect("filtered to attacked days");
        let report = classifier.classify(&day.received, &trained.model, &det)?;
        let flagged = report.verdict.is_attacked();
        let verdict = if flagged {
            let v = match isolator {
                IsolationMethod::IsolationPath => {
                    beam_search_isolate(&day.received, &trained.model, &cfg.isolation)?
                }
                IsolationMethod::Lof => lof_isolate(&day.received, &trained.model, &cfg.lof)?,
                IsolationMethod::Csr => {
                    // Saliency argmax always reads the cluster residual.
                    let csr = if classifier == ClassifierKind::Csr {
                        report
                    } else {
                        csr_classify(&day.received, &trained.model, &trained.csr)?
                    };
                    let mut csr = csr;
                    csr.verdict = crate::detect::Verdict::Attacked;
                    csr_isolate(&csr, trained.csr.threshold, cfg.isolation.max_subspace)?
                }
            };
            Some(v.attacked_slots)
        } else {
            None
        };
        let exact = verdict.as_ref().is_some_and(|v| {
            let mut v = v.clone();
            v.sort_unstable();
            v == attack.target_slots
        });
        Ok(IsolateRow {
            day_id: day.day_id,
            magnitude: attack.magnitude,
            planted: attack.target_slots.clone(),
            flagged,
            verdict,
            exact,
        })
    })?;
    let cases: Vec<IsolationCase> = rows
        .iter()
        .map(|r| IsolationCase {
            magnitude: r.magnitude,
            verdict: r.verdict.clone(),
            planted: r.planted.clone(),
        })
        .collect();
    let hits = rows.iter().filter(|r| r.exact).count();
    Ok(IsolateReport {
        isolator,
        classifier,
        recall: if rows.is_empty() {
            0.0
        } else {
            hits as f64 / rows.len() as f64
        },
        buckets: isolation_recall(&cases),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Clean,
    Attack,
    Mitigated(u8),
}

impl Scenario {
    pub fn all() -> Vec<Scenario> {
        let mut v = vec![Scenario::Clean, Scenario::Attack];
        v.extend(MitigationMethod::ALL.iter().map(|m| Scenario::Mitigated(m.number())));
        v
    }

    pub fn method(&self) -> Option<MitigationMethod> {
        match self {
            Scenario::Mitigated(n) => MitigationMethod::from_number(*n).ok(),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Clean => f.write_str("clean"),
            Scenario::Attack => f.write_str("attack"),
            Scenario::Mitigated(n) => write!(f, "method{n}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clean" => Ok(Scenario::Clean),
            "attack" => Ok(Scenario::Attack),
            other => other
                .strip_prefix("method")
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| (1..=6).contains(n))
                .map(Scenario::Mitigated)
                .ok_or_else(|| format!("unknown scenario '{other}'")),
        }
    }
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateRow {
    pub day_id: u32,
    pub magnitude: f64,
    pub scenario: Scenario,
    pub target_slots: Vec<usize>,
    /// Attacker device billed at real-time prices of realized demand.
    pub attacker_bill: f64,
    /// Real-time bill of the whole community plus its displacement penalty.
    pub community_cost: f64,
    pub attacker_delta_pct: f64,
    pub community_delta_pct: f64,
    /// Final priced forecast against the clean run's.
    pub mape: f64,
    pub iterations: usize,
    pub converged: bool,
    pub detected: Option<bool>,
    pub corrected_slots: Vec<usize>,
    pub diagnostics: Vec<String>,
    /// Per-iteration detector and rectifier log; empty without a mitigator.
    pub audit: Vec<AuditRow>,
    /// Converged forecast the utility priced.
    pub forecast: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub cases: usize,
    /// Cases where the attacker paid less than in the clean run.
    pub attacker_gains: usize,
    pub attacker_delta_mean: f64,
    pub attacker_delta_median: f64,
    pub community_delta_mean: f64,
    pub community_delta_median: f64,
    pub mape_mean: f64,
    pub mape_median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub summary: Vec<ScenarioSummary>,
    pub rows: Vec<SimulateRow>,
}

impl SimulateReport {
    pub fn summary_of(&self, scenario: Scenario) -> Option<&ScenarioSummary> {
        self.summary.iter().find(|s| s.scenario == scenario)
    }
}

fn slot_list(slots: &[usize]) -> String {
    slots.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// JSON persistence shared by the three report types.
pub trait Report: Serialize + serde::de::DeserializeOwned {
    const KIND: &'static str;

    fn save(&self, path: &Path) -> Result<()> {
        datastore::save_json(path, Self::KIND, self)
    }

    fn load(path: &Path) -> Result<Self> {
        datastore::load_json(path, Self::KIND)
    }
}

impl Report for DetectReport {
    const KIND: &'static str = "detect_report";
}

impl Report for IsolateReport {
    const KIND: &'static str = "isolate_report";
}

impl Report for SimulateReport {
    const KIND: &'static str = "simulate_report";
}

impl DetectReport {
    pub fn rows_csv(&self) -> String {
        let mut t = vec![header(&[
            "day_id",
            "attacked",
            "magnitude",
            "flagged",
            "peak_value",
            "peak_index",
            "nearest_cluster",
        ])];
        for r in &self.rows {
            t.push(vec![
                r.day_id.to_string(),
                r.attacked.to_string(),
                fmt_opt(r.magnitude),
                r.flagged.to_string(),
                r.peak_value.to_string(),
                r.peak_index.to_string(),
                r.nearest_cluster.map_or_else(String::new, |c| c.to_string()),
            ]);
        }
        Evaluation::to_csv(&t)
    }
}

impl IsolateReport {
    pub fn rows_csv(&self) -> String {
        let mut t = vec![header(&["day_id", "magnitude", "planted", "flagged", "verdict", "exact"])];
        for r in &self.rows {
            t.push(vec![
                r.day_id.to_string(),
                r.magnitude.to_string(),
                slot_list(&r.planted),
                r.flagged.to_string(),
                r.verdict.as_deref().map_or_else(String::new, slot_list),
                r.exact.to_string(),
            ]);
        }
        Evaluation::to_csv(&t)
    }
}

impl SimulateReport {
    pub fn rows_csv(&self) -> String {
        let mut t = vec![header(&[
            "day_id",
            "magnitude",
            "scenario",
            "target_slots",
            "attacker_bill",
            "community_cost",
            "attacker_delta_pct",
            "community_delta_pct",
            "mape",
            "iterations",
            "converged",
            "detected",
            "corrected_slots",
            "diagnostics",
        ])];
        for r in &self.rows {
            t.push(vec![
                r.day_id.to_string(),
                r.magnitude.to_string(),
                r.scenario.to_string(),
                slot_list(&r.target_slots),
                r.attacker_bill.to_string(),
                r.community_cost.to_string(),
                r.attacker_delta_pct.to_string(),
                r.community_delta_pct.to_string(),
                r.mape.to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
                r.detected.map_or_else(String::new, |d| d.to_string()),
                slot_list(&r.corrected_slots),
                r.diagnostics.join(" | "),
            ]);
        }
        Evaluation::to_csv(&t)
    }
}

/// Runs `f` over `days`, concurrently when the `parallel` feature is on.
/// Results keep day order either way.
fn map_days<T, F>(days: &[Day], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Day) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        days.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        days.iter().map(f).collect()
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// The `width`-slot window with the largest total demand; earliest on ties.
pub fn peak_window(forecast: &[f64], width: usize) -> Vec<usize> {
    let width = width.clamp(1, forecast.len());
    let mut best = (0, f64::NEG_INFINITY);
    for start in 0..=forecast.len() - width {
        let s: f64 = forecast[start..start + width].iter().sum();
        if s > best.1 {
            best = (start, s);
        }
    }
    (best.0..best.0 + width).collect()
}

/// The day's community plus one house holding the attacker's inflexible
/// device over `slots`.
pub fn with_attacker(day: &Day, slots: &[usize], demand: f64, m: usize) -> (Vec<House>, u32) {
    let id = day.houses.iter().map(|h| h.id).max().map_or(0, |x| x + 1);
    let start = slots[0] * m;
    let duration = slots.len() * m;
    let mut houses = day.houses.clone();
    houses.push(House {
        id,
        appliances: vec![Appliance {
            id: 0,
            demand_per_slot: demand,
            duration,
            earliest_start: start,
            latest_finish: start + duration - 1,
            preferred_start: start,
            penalty_factor: 0.0,
        }],
    });
    (houses, id)
}

struct Realized {
    attacker_bill: f64,
    community_cost: f64,
}

fn realize(
    outcome: &DrOutcome,
    houses: &[House],
    attacker: u32,
    price: &PriceModel,
    grid: &SlotGrid,
) -> Result<Realized> {
    // Incremental updates can leave -1e-17 residue in emptied slots.
    let realized: Vec<f64> = outcome.genuine_forecast.iter().map(|v| v.max(0.0)).collect();
    let rt = price_signal(&realized, price, grid)?;
    let bill: f64 = realized.iter().zip(rt.values()).map(|(d, p)| d * p).sum();
    let penalty = total_penalty(houses, &outcome.schedules)?;
    let house = houses
        .iter()
        .zip(&outcome.schedules)
        .find(|(h, _)| h.id == attacker)
        .ok_or_else(|| Error::Precondition("attacker house missing".into()))?;
    let mut attacker_bill = 0.0;
    for a in &house.0.appliances {
        let start = house.1.start_of(a.id).unwrap_or(a.preferred_start);
        for (p, e) in a.pricing_energy(start, grid) {
            attacker_bill += e * rt.values()[p];
        }
    }
    Ok(Realized {
        attacker_bill,
        community_cost: bill + penalty,
    })
}

fn pct(value: f64, base: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * (value - base) / base
    }
}

fn check_simulation(sim: &SimulationSettings) -> Result<()> {
    if sim.magnitudes.is_empty() {
        return Err(Error::Config("simulation needs at least one magnitude".into()));
    }
    if !(sim.attacker_demand > 0.0) {
        return Err(Error::Config("attacker_demand must be positive".into()));
    }
    Ok(())
}

/// Paired DR runs on the test days. Each day gets the attacker's device at
/// its peak pricing slots and, per configured magnitude, a persistent pulse
/// on those slots; every scenario is compared to the clean run of the same
/// community.
pub fn simulate(
    corpus: &Corpus,
    trained: &TrainedDetector,
    cfg: &ExperimentConfig,
    scenarios: &[Scenario],
) -> Result<SimulateReport> {
    let sim = &cfg.simulation;
    check_simulation(sim)?;
    let price = cfg.price_for(corpus);
    let days = corpus.test_days();
    let days = &days[..sim.max_days.unwrap_or(days.len()).min(days.len())];
    let per_day = map_days(days, |day| simulate_day(day, corpus.grid(), &price, trained, cfg, scenarios))?;
    let rows: Vec<SimulateRow> = per_day.into_iter().flatten().collect();
    Ok(SimulateReport {
        summary: summarize(&rows, scenarios),
        rows,
    })
}

/// All scenario rows of one day, for every configured magnitude.
pub fn simulate_day(
    day: &Day,
    grid: &SlotGrid,
    price: &PriceModel,
    trained: &TrainedDetector,
    cfg: &ExperimentConfig,
    scenarios: &[Scenario],
) -> Result<Vec<SimulateRow>> {
    let sim = &cfg.simulation;
    check_simulation(sim)?;
    let det = trained.config(cfg.classifier);
    let isolator = match cfg.isolator {
        IsolationMethod::IsolationPath => Isolator::Beam(cfg.isolation),
        IsolationMethod::Lof => Isolator::Lof(cfg.lof),
        IsolationMethod::Csr => Isolator::Csr(cfg.isolation.max_subspace),
    };
    let price = *price;
    let mut rows = Vec::new();
    let slots = match sim.placement {
        Placement::InitialPeak => peak_window(&day.genuine, sim.attacker_slots),
        Placement::ConvergedPeak => {
            let settled = run_dr(&day.houses, grid, &price, &cfg.dr, &mut Identity)?;
            peak_window(&settled.genuine_forecast, sim.attacker_slots)
        }
    };
    let (houses, attacker) = with_attacker(day, &slots, sim.attacker_demand, grid.sub_slots());
    let controllable = controllable_daily_demand(&houses);
    let clean = run_dr(&houses, grid, &price, &cfg.dr, &mut Identity)?;
    let clean_r = realize(&clean, &houses, attacker, &price, grid)?;

    for &magnitude in &sim.magnitudes {
        let spec = AttackSpec {
            kind: AttackKind::Pulse,
            target_slots: slots.clone(),
            magnitude,
            seed: 0,
            persistent: true,
        };
        spec.validate(grid.pricing_slots())?;
        let mut located: Option<(Vec<f64>, Option<Vec<usize>>)> = None;
        for &scenario in scenarios {
            let mut attack = attack_hook(spec.clone(), controllable)?;
            let (outcome, detected, corrected, diagnostics, audit) = match scenario {
                Scenario::Clean => (clean.clone(), None, vec![], vec![], vec![]),
                Scenario::Attack => {
                    let outcome = run_dr(&houses, grid, &price, &cfg.dr, &mut attack)?;
                    (outcome, None, vec![], vec![], vec![])
                }
                Scenario::Mitigated(n) => {
                    let method = MitigationMethod::from_number(n)?;
                    let mut hook =
                        MitigationHook::new(method, &trained.model, cfg.classifier, det, isolator);
                    hook.rescan = sim.rescan;
                    if located.is_none() {
                        let received = attack.apply(0, &clean.trace[0].genuine);
                        attack = attack_hook(spec.clone(), controllable)?;
                        let l = hook.locate(&received)?;
                        located = Some((received, l));
                    }
                    if let Some((f, l)) = &located {
                        hook = hook.with_located(f.clone(), l.clone());
                    }
                    let outcome = run_dr(&houses, grid, &price, &cfg.dr, &mut (&mut attack, &mut hook))?;
                    let detected = hook.audit().iter().any(|a| a.flagged == Some(true));
                    let corrected = hook.state().map(|s| s.attacked_slots.clone()).unwrap_or_default();
                    (
                        outcome,
                        Some(detected),
                        corrected,
                        hook.diagnostics().to_vec(),
                        hook.audit().to_vec(),
                    )
                }
            };
            let r = realize(&outcome, &houses, attacker, &price, grid)?;
            rows.push(SimulateRow {
                day_id: day.day_id,
                magnitude,
                scenario,
                target_slots: slots.clone(),
                attacker_bill: r.attacker_bill,
                community_cost: r.community_cost,
                attacker_delta_pct: pct(r.attacker_bill, clean_r.attacker_bill),
                community_delta_pct: pct(r.community_cost, clean_r.community_cost),
                mape: mape(&outcome.forecast, &clean.forecast)?.0,
                iterations: outcome.iterations_used,
                converged: outcome.converged,
                detected,
                corrected_slots: corrected,
                diagnostics,
                audit,
                forecast: outcome.forecast,
            });
        }
    }
    Ok(rows)
}

fn summarize(rows: &[SimulateRow], scenarios: &[Scenario]) -> Vec<ScenarioSummary> {
    scenarios
        .iter()
        .map(|&scenario| {
            let of: Vec<&SimulateRow> = rows.iter().filter(|r| r.scenario == scenario).collect();
            let col = |f: fn(&SimulateRow) -> f64| of.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let attacker = col(|r| r.attacker_delta_pct);
            let community = col(|r| r.community_delta_pct);
            let mapes = col(|r| r.mape);
            ScenarioSummary {
                scenario,
                cases: of.len(),
                attacker_gains: of.iter().filter(|r| r.attacker_delta_pct < 0.0).count(),
                attacker_delta_mean: mean(&attacker),
                attacker_delta_median: median(&attacker),
                community_delta_mean: mean(&community),
                community_delta_median: median(&community),
                mape_mean: mean(&mapes),
                mape_median: median(&mapes),
            }
        })
        .collect()
}

/// Joined evaluation views, each a small CSV table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub tables: BTreeMap<String, Vec<Vec<String>>>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn push_unique<K: Ord + Clone, V>(map: &mut BTreeMap<K, V>, key: K, value: V) {
    map.entry(key).or_insert(value);
}

/// Builds the classifier table, isolation tables, per-bucket recall series
/// and the mitigation cost/MAPE series. Reports are joined by key, so a
/// report given twice contributes once.
pub fn evaluate(
    detects: &[DetectReport],
    isolates: &[IsolateReport],
    simulates: &[SimulateReport],
) -> Result<Evaluation> {
    let mut eval = Evaluation::default();

    let mut by_classifier = BTreeMap::new();
    for d in detects {
        push_unique(&mut by_classifier, d.classifier.as_str(), d);
    }
    let mut t = vec![vec!["classifier", "accuracy", "precision", "recall", "f1", "fpr", "threshold"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()];
    for (name, d) in &by_classifier {
        let m = &d.metrics;
        t.push(vec![
            name.to_string(),
            fmt_opt(m.accuracy),
            fmt_opt(m.precision),
            fmt_opt(m.recall),
            fmt_opt(m.f1),
            fmt_opt(m.fpr),
            d.threshold.to_string(),
        ]);
    }
    eval.tables.insert("classifiers".into(), t);

    let mut by_isolator = BTreeMap::new();
    for r in isolates {
        push_unique(&mut by_isolator, r.isolator.as_str(), r);
    }
    let mut t = vec![vec!["isolator".to_string(), "exact_recall".into(), "cases".into()]];
    for (name, r) in &by_isolator {
        t.push(vec![name.to_string(), r.recall.to_string(), r.rows.len().to_string()]);
    }
    eval.tables.insert("isolators".into(), t);

    let names: Vec<&str> = by_isolator.keys().copied().collect();
    let mut buckets: BTreeMap<u32, BTreeMap<&str, &BucketRecall>> = BTreeMap::new();
    for (name, r) in &by_isolator {
        for b in &r.buckets {
            buckets.entry(b.bucket).or_default().insert(name, b);
        }
    }
    let mut counts = vec![vec!["injection_pct".to_string(), "attacked".into()]];
    counts[0].extend(names.iter().map(|n| format!("{n}_exact")));
    let mut series = vec![vec!["injection_pct".to_string()]];
    series[0].extend(names.iter().map(|n| format!("{n}_recall")));
    for (bucket, per) in &buckets {
        let pct = (*bucket as f64 / 100.0).to_string();
        let cases = per.values().map(|b| b.cases).max().unwrap_or(0);
        let mut c = vec![pct.clone(), cases.to_string()];
        let mut s = vec![pct];
        for n in &names {
            c.push(per.get(n).map_or_else(String::new, |b| b.exact.to_string()));
            s.push(per.get(n).map_or_else(String::new, |b| b.recall.to_string()));
        }
        counts.push(c);
        series.push(s);
    }
    eval.tables.insert("isolation_by_magnitude".into(), counts);
    eval.tables.insert("recall_series".into(), series);

    let mut by_scenario: BTreeMap<Scenario, &ScenarioSummary> = BTreeMap::new();
    for s in simulates.iter().flat_map(|r| &r.summary) {
        push_unique(&mut by_scenario, s.scenario, s);
    }
    let mut costs = vec![[
        "scenario",
        "cases",
        "attacker_gains",
        "attacker_delta_mean",
        "attacker_delta_median",
        "community_delta_mean",
        "community_delta_median",
    ]
    .map(String::from)
    .to_vec()];
    let mut mapes = vec![["scenario", "mape_mean", "mape_median"].map(String::from).to_vec()];
    for (sc, s) in &by_scenario {
        costs.push(vec![
            sc.to_string(),
            s.cases.to_string(),
            s.attacker_gains.to_string(),
            s.attacker_delta_mean.to_string(),
            s.attacker_delta_median.to_string(),
            s.community_delta_mean.to_string(),
            s.community_delta_median.to_string(),
        ]);
        mapes.push(vec![sc.to_string(), s.mape_mean.to_string(), s.mape_median.to_string()]);
    }
    eval.tables.insert("mitigation_costs".into(), costs);
    eval.tables.insert("mitigation_mape".into(), mapes);
    Ok(eval)
}

impl Evaluation {
    pub fn to_csv(table: &[Vec<String>]) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        for row in table {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    /// Writes each table as `<name>.csv` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for (name, table) in &self.tables {
            datastore::write_atomic(&dir.join(format!("{name}.csv")), Self::to_csv(table).as_bytes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_window_picks_the_heaviest_run() {
        assert_eq!(peak_window(&[1.0, 5.0, 2.0, 4.0, 4.0], 2), vec![3, 4]);
        assert_eq!(peak_window(&[1.0, 5.0, 2.0], 1), vec![1]);
    }

    #[test]
    fn scenarios_round_trip_through_text() {
        for s in Scenario::all() {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        assert!("method7".parse::<Scenario>().is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn config_defaults_fill_missing_fields() {
        let cfg = ExperimentConfig::from_json(Path::new("c.json"), r#"{"format_version": 1, "seed": 4}"#)
            .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.detector.percentile, 95.0);
        assert!(ExperimentConfig::from_json(Path::new("c.json"), r#"{"format_version": 2}"#).is_err());
    }
}
