//! Synthetic corpora and every on-disk format.
//!
//! A corpus directory holds:
//!
//! * `manifest.json` — generator config, reference demand, format version;
//! * `forecasts.csv` — `day_id,label,slot_0,…,slot_{P-1}`, the received
//!   forecasts (attacked days include the injection);
//! * `genuine.csv` — same layout, the attack-free aggregates;
//! * `attacks.csv` — `day_id,kind,magnitude,slots`, slots `;`-separated;
//! * `appliances.csv` — one row per appliance per house per day.
//!
//! Slot indices are zero-based everywhere. Numbers are written in Rust's
//! shortest round-trip decimal form, so every value reloads bit-exactly.
//! Models and reports are JSON documents carrying `format_version`.

mod generate;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackKind, AttackSpec};
use crate::domain::{Appliance, DemandForecast, House, Label, SlotGrid};
use crate::error::{Error, Result};

pub use generate::{attack_seed, generate, Day, GeneratorConfig, MAGNITUDE_LADDER};

pub const FORMAT_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORECASTS_FILE: &str = "forecasts.csv";
pub const GENUINE_FILE: &str = "genuine.csv";
pub const ATTACKS_FILE: &str = "attacks.csv";
pub const APPLIANCES_FILE: &str = "appliances.csv";

const APPLIANCE_HEADER: [&str; 9] = [
    "day_id",
    "house_id",
    "appliance_id",
    "demand_per_slot",
    "duration",
    "earliest_start",
    "latest_finish",
    "preferred_start",
    "penalty_factor",
];
const ATTACK_HEADER: [&str; 4] = ["day_id", "kind", "magnitude", "slots"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub config: GeneratorConfig,
    pub days: Vec<Day>,
    /// Mean genuine slot demand over the training period.
    pub reference_demand: f64,
}

impl Corpus {
    pub fn grid(&self) -> &SlotGrid {
        &self.config.grid
    }

    pub fn train_len(&self) -> usize {
        self.config.train_len().min(self.days.len())
    }

    /// Attack-free days of the training period.
    pub fn train_days(&self) -> impl Iterator<Item = &Day> {
        self.days[..self.train_len()].iter().filter(|d| !d.is_attacked())
    }

    pub fn test_days(&self) -> &[Day] {
        &self.days[self.train_len()..]
    }

    pub fn day(&self, day_id: u32) -> Option<&Day> {
        self.days.iter().find(|d| d.day_id == day_id)
    }

    pub fn received_forecast(day: &Day) -> DemandForecast {
        let label = if day.is_attacked() {
            Label::Attacked
        } else {
            Label::Normal
        };
        DemandForecast::new(day.day_id, label, day.received.clone())
            .expect("generated demand is finite and non-negative")
    }

    pub fn train_forecasts(&self) -> Vec<DemandForecast> {
        self.train_days().map(Self::received_forecast).collect()
    }

    pub fn attacked_count(&self) -> usize {
        self.days.iter().filter(|d| d.is_attacked()).count()
    }

    /// Attacked-day count per injection size, keyed by hundredths of a
    /// percent.
    pub fn magnitude_histogram(&self) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for a in self.days.iter().filter_map(|d| d.attack.as_ref()) {
            *h.entry(crate::isolate::magnitude_bucket(a.magnitude)).or_default() += 1;
        }
        h
    }
}

/// Writes `bytes` through a temporary file in the same directory, then
/// renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format_version: u32,
    kind: &'a str,
    body: &'a T,
}

#[derive(Deserialize)]
struct Probe {
    format_version: u32,
    kind: String,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    body: T,
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |source| Error::Json {
        path: path.to_path_buf(),
        source,
    }
}

pub fn to_json_document<T: Serialize>(kind: &str, value: &T) -> Result<String> {
    let doc = EnvelopeOut {
        format_version: FORMAT_VERSION,
        kind,
        body: value,
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(json_err(Path::new(kind)))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json_document<T: DeserializeOwned>(path: &Path, kind: &str, text: &str) -> Result<T> {
    let probe: Probe = serde_json::from_str(text).map_err(json_err(path))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: probe.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if probe.kind != kind {
        return Err(Error::parse(
            path,
            1,
            format!("document kind '{}' where '{kind}' was expected", probe.kind),
        ));
    }
    let doc: EnvelopeIn<T> = serde_json::from_str(text).map_err(json_err(path))?;
    Ok(doc.body)
}

/// Saves `value` as a versioned JSON document of the given kind.
pub fn save_json<T: Serialize>(path: &Path, kind: &str, value: &T) -> Result<()> {
    write_atomic(path, to_json_document(kind, value)?.as_bytes())
}

pub fn load_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json_document(path, kind, &text)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>, path: &Path) -> Result<()> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, line, format!("{other:?}")),
        }
    }
}

fn slot_header(p: usize) -> Vec<String> {
    ["day_id".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..p).map(|s| format!("slot_{s}")))
        .collect()
}

/// Writes forecasts as `day_id,label,slot_0,…`.
pub fn write_forecasts(path: &Path, forecasts: &[DemandForecast]) -> Result<()> {
    let p = crate::domain::uniform_length(forecasts.iter())?;
    let mut w = csv_writer();
    let io = csv_io(path);
    w.write_record(slot_header(p)).map_err(&io)?;
    for f in forecasts {
        let mut row = vec![f.day_id.to_string(), f.label.as_str().to_string()];
        row.extend(f.values().iter().map(f64::to_string));
        w.write_record(&row).map_err(&io)?;
    }
    finish(w, path)
}

struct Rows {
    path: PathBuf,
    reader: csv::Reader<fs::File>,
    header: Vec<String>,
}

impl Rows {
    fn open(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header = reader
            .headers()
            .map_err(csv_io(path))?
            .iter()
            .map(str::to_string)
            .collect::<Vec<_>>();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::parse(path, 1, "missing header"));
        }
        Ok(Self {
            path: path.to_path_buf(),
            reader,
            header,
        })
    }

    fn expect_header<S: AsRef<str>>(&self, expected: &[S]) -> Result<()> {
        let ok = self.header.len() == expected.len()
            && self.header.iter().zip(expected).all(|(a, b)| a == b.as_ref());
        if ok {
            Ok(())
        } else {
            Err(Error::parse(
                &self.path,
                1,
                format!(
                    "header [{}] does not match expected [{}]",
                    self.header.join(","),
                    expected.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(",")
                ),
            ))
        }
    }

    /// Visits every record with its line number and a field parser.
    fn each(mut self, mut f: impl FnMut(&Record<'_>) -> Result<()>) -> Result<()> {
        let mut rec = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut rec) {
                Ok(false) => return Ok(()),
                Ok(true) => {
                    let line = rec.position().map_or(0, |p| p.line());
                    if rec.len() != self.header.len() {
                        return Err(Error::parse(
                            &self.path,
                            line,
                            format!("expected {} fields, found {}", self.header.len(), rec.len()),
                        ));
                    }
                    f(&Record {
                        path: &self.path,
                        header: &self.header,
                        rec: &rec,
                        line,
                    })?;
                }
                Err(e) => return Err(csv_io(&self.path)(e)),
            }
        }
    }
}

struct Record<'a> {
    path: &'a Path,
    header: &'a [String],
    rec: &'a csv::StringRecord,
    line: u64,
}

impl Record<'_> {
    fn get<T: std::str::FromStr>(&self, i: usize) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = &self.rec[i];
        raw.parse().map_err(|e| {
            Error::parse(
                self.path,
                self.line,
                format!("field '{}': cannot parse '{raw}': {e}", self.header[i]),
            )
        })
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, message)
    }
}

/// Reads a forecast CSV; the slot count comes from the header.
pub fn read_forecasts(path: &Path) -> Result<Vec<DemandForecast>> {
    let rows = Rows::open(path)?;
    let p = rows.header.len().saturating_sub(2);
    if p == 0 {
        return Err(Error::parse(path, 1, "no slot columns"));
    }
    rows.expect_header(&slot_header(p))?;
    let mut out = Vec::new();
    rows.each(|r| {
        let day_id: u32 = r.get(0)?;
        let label: Label = r.get(1)?;
        let values = (0..p).map(|s| r.get::<f64>(s + 2)).collect::<Result<Vec<_>>>()?;
        out.push(DemandForecast::new(day_id, label, values).map_err(|e| r.fail(e.to_string()))?);
        Ok(())
    })?;
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    generator: GeneratorConfig,
    reference_demand: f64,
    train_days: Vec<u32>,
    test_days: Vec<u32>,
}

fn forecast_rows(days: &[Day], pick: impl Fn(&Day) -> &Vec<f64>) -> Vec<DemandForecast> {
    days.iter()
        .map(|d| {
            let label = if d.is_attacked() {
                Label::Attacked
            } else {
                Label::Normal
            };
            DemandForecast::new(d.day_id, label, pick(d).clone()).expect("finite demand")
        })
        .collect()
}

pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        generator: corpus.config.clone(),
        reference_demand: corpus.reference_demand,
        train_days: corpus.train_days().map(|d| d.day_id).collect(),
        test_days: corpus.test_days().iter().map(|d| d.day_id).collect(),
    };
    save_json(&dir.join(MANIFEST_FILE), "corpus_manifest", &manifest)?;
    write_forecasts(&dir.join(FORECASTS_FILE), &forecast_rows(&corpus.days, |d| &d.received))?;
    write_forecasts(&dir.join(GENUINE_FILE), &forecast_rows(&corpus.days, |d| &d.genuine))?;

    let path = dir.join(ATTACKS_FILE);
    let mut w = csv_writer();
    let io = csv_io(&path);
    w.write_record(ATTACK_HEADER).map_err(&io)?;
    for d in &corpus.days {
        if let Some(a) = &d.attack {
            let slots: Vec<String> = a.target_slots.iter().map(usize::to_string).collect();
            w.write_record([
                d.day_id.to_string(),
                a.kind.as_str().to_string(),
                a.magnitude.to_string(),
                slots.join(";"),
            ])
            .map_err(&io)?;
        }
    }
    finish(w, &path)?;

    let path = dir.join(APPLIANCES_FILE);
    let mut w = csv_writer();
    let io = csv_io(&path);
    w.write_record(APPLIANCE_HEADER).map_err(&io)?;
    for d in &corpus.days {
        for h in &d.houses {
            for a in &h.appliances {
                w.write_record([
                    d.day_id.to_string(),
                    h.id.to_string(),
                    a.id.to_string(),
                    a.demand_per_slot.to_string(),
                    a.duration.to_string(),
                    a.earliest_start.to_string(),
                    a.latest_finish.to_string(),
                    a.preferred_start.to_string(),
                    a.penalty_factor.to_string(),
                ])
                .map_err(&io)?;
            }
        }
    }
    finish(w, &path)
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = load_json(&manifest_path, "corpus_manifest")?;
    let cfg = manifest.generator;
    cfg.validate()?;
    let p = cfg.grid.pricing_slots();

    let forecasts_path = dir.join(FORECASTS_FILE);
    let received = read_forecasts(&forecasts_path)?;
    let genuine_path = dir.join(GENUINE_FILE);
    let genuine = read_forecasts(&genuine_path)?;
    for (path, rows) in [(&forecasts_path, &received), (&genuine_path, &genuine)] {
        if let Some(f) = rows.iter().find(|f| f.len() != p) {
            return Err(Error::parse(
                path,
                0,
                format!("day {} has {} slots, manifest grid has {p}", f.day_id, f.len()),
            ));
        }
    }
    if received.len() != genuine.len()
        || received.iter().zip(&genuine).any(|(a, b)| a.day_id != b.day_id)
    {
        return Err(Error::parse(&genuine_path, 0, "day ids differ from forecasts.csv"));
    }

    let path = dir.join(ATTACKS_FILE);
    let rows = Rows::open(&path)?;
    rows.expect_header(&ATTACK_HEADER)?;
    let mut attacks: BTreeMap<u32, AttackSpec> = BTreeMap::new();
    rows.each(|r| {
        let day_id: u32 = r.get(0)?;
        let kind: AttackKind = r.get(1)?;
        let magnitude: f64 = r.get(2)?;
        let target_slots = r.rec[3]
            .split(';')
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| r.fail(format!("field 'slots': cannot parse '{s}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = AttackSpec {
            kind,
            target_slots,
            magnitude,
            seed: attack_seed(cfg.seed, day_id),
            persistent: true,
        };
        spec.validate(p).map_err(|e| r.fail(e.to_string()))?;
        if attacks.insert(day_id, spec).is_some() {
            return Err(r.fail(format!("day {day_id} listed twice")));
        }
        Ok(())
    })?;

    let path = dir.join(APPLIANCES_FILE);
    let rows = Rows::open(&path)?;
    rows.expect_header(&APPLIANCE_HEADER)?;
    let mut houses: BTreeMap<u32, Vec<House>> = BTreeMap::new();
    rows.each(|r| {
        let day_id: u32 = r.get(0)?;
        let house_id: u32 = r.get(1)?;
        let appliance = Appliance {
            id: r.get(2)?,
            demand_per_slot: r.get(3)?,
            duration: r.get(4)?,
            earliest_start: r.get(5)?,
            latest_finish: r.get(6)?,
            preferred_start: r.get(7)?,
            penalty_factor: r.get(8)?,
        };
        let day = houses.entry(day_id).or_default();
        match day.last_mut() {
            Some(h) if h.id == house_id => h.appliances.push(appliance),
            _ => day.push(House {
                id: house_id,
                appliances: vec![appliance],
            }),
        }
        Ok(())
    })?;

    let mut days = Vec::with_capacity(received.len());
    for (rf, gf) in received.into_iter().zip(genuine) {
        let day_id = rf.day_id;
        let attack = attacks.remove(&day_id);
        if attack.is_some() != (rf.label == Label::Attacked) {
            return Err(Error::parse(
                &forecasts_path,
                0,
                format!("day {day_id}: label '{}' disagrees with attacks.csv", rf.label.as_str()),
            ));
        }
        days.push(Day {
            day_id,
            houses: houses.remove(&day_id).unwrap_or_default(),
            genuine: gf.values().to_vec(),
            attack,
            received: rf.values().to_vec(),
        });
    }
    if let Some(day_id) = attacks.keys().next() {
        return Err(Error::parse(dir.join(ATTACKS_FILE), 0, format!("unknown day {day_id}")));
    }
    Ok(Corpus {
        config: cfg,
        days,
        reference_demand: manifest.reference_demand,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            houses: 6,
            days: 30,
            attacked_fraction: 0.2,
            seed: 11,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
    }

    #[test]
    fn attacked_count_is_exact() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.attacked_count(), 6);
        for d in &c.days {
            let diff: f64 = d.received.iter().zip(&d.genuine).map(|(r, g)| r - g).sum();
            match &d.attack {
                None => assert_eq!(d.received, d.genuine),
                Some(a) => {
                    let budget = a.magnitude * crate::domain::controllable_daily_demand(&d.houses);
                    assert!((diff - budget).abs() < 1e-9 * budget.max(1.0));
                }
            }
        }
        assert!(c.train_days().all(|d| !d.is_attacked()));
    }

    #[test]
    fn zero_fraction_means_no_attacks() {
        let c = generate(&GeneratorConfig {
            attacked_fraction: 0.0,
            ..small()
        })
        .unwrap();
        assert_eq!(c.attacked_count(), 0);
    }

    #[test]
    fn corpus_round_trips_exactly() {
        let c = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(dir.path(), &c).unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap(), c);
    }

    #[test]
    fn truncated_forecast_file_is_a_parse_error() {
        let c = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(dir.path(), &c).unwrap();
        let path = dir.path().join(FORECASTS_FILE);
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        match load_corpus(dir.path()) {
            Err(Error::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_field_names_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        fs::write(&path, "day_id,label,slot_0,slot_1\n0,normal,1.5,2\n1,normal,x,2\n").unwrap();
        let err = read_forecasts(&path).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("slot_0"), "{err}");
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, r#"{"format_version": 99, "kind": "x", "body": 1}"#).unwrap();
        assert!(matches!(
            load_json::<u32>(&path, "x"),
            Err(Error::Version { found: 99, .. })
        ));
    }
}
