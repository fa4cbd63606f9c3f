//! Value types shared by the scheduling engine, the attack model and the
//! detection pipeline.
//!
//! Two time resolutions coexist. Appliances start and run on *scheduling
//! slots* (`D = P × m` per day); forecasts and prices live on *pricing slots*
//! (`P` per day). All slot indices are zero-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Day layout: `pricing_slots` pricing slots, each split into
/// `sub_slots` scheduling slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct SlotGrid {
    pricing_slots: usize,
    sub_slots: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    pricing_slots: usize,
    sub_slots: usize,
}

impl TryFrom<RawGrid> for SlotGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        SlotGrid::new(raw.pricing_slots, raw.sub_slots)
    }
}

impl SlotGrid {
    pub fn new(pricing_slots: usize, sub_slots: usize) -> Result<Self> {
        if pricing_slots < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 pricing slots, got {pricing_slots}"
            )));
        }
        if sub_slots < 2 {
            return Err(Error::InvalidGrid(format!(
                "each pricing slot needs more than one scheduling slot, got {sub_slots}"
            )));
        }
        Ok(Self {
            pricing_slots,
            sub_slots,
        })
    }

    pub fn pricing_slots(&self) -> usize {
        self.pricing_slots
    }

    pub fn sub_slots(&self) -> usize {
        self.sub_slots
    }

    /// Scheduling slots per day.
    pub fn day_len(&self) -> usize {
        self.pricing_slots * self.sub_slots
    }

    pub fn pricing_slot_of(&self, scheduling_slot: usize) -> usize {
        scheduling_slot / self.sub_slots
    }

    /// Sums each group of `sub_slots` scheduling-slot values into one pricing slot.
    pub fn to_pricing(&self, profile: &[f64]) -> Result<Vec<f64>> {
        check_len(self.day_len(), profile.len())?;
        Ok(profile
            .chunks(self.sub_slots)
            .map(|chunk| chunk.iter().sum())
            .collect())
    }
}

impl Default for SlotGrid {
    fn default() -> Self {
        Self {
            pricing_slots: 48,
            sub_slots: 2,
        }
    }
}

pub type ApplianceId = u32;
pub type HouseId = u32;

/// A shiftable device with a contiguous run of `duration` scheduling slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Appliance {
    pub id: ApplianceId,
    /// Energy drawn in each scheduling slot of the run.
    pub demand_per_slot: f64,
    pub duration: usize,
    pub earliest_start: usize,
    pub latest_finish: usize,
    pub preferred_start: usize,
    /// Cost per scheduling slot of displacement from `preferred_start`.
    pub penalty_factor: f64,
}

impl Appliance {
    /// Last start slot whose run still finishes by `latest_finish`.
    ///
    /// Only meaningful for appliances that pass validation.
    pub fn latest_start(&self) -> usize {
        (self.latest_finish + 1).saturating_sub(self.duration)
    }

    pub fn can_start_at(&self, start: usize) -> bool {
        start >= self.earliest_start && start + self.duration <= self.latest_finish + 1
    }

    pub fn energy(&self) -> f64 {
        self.demand_per_slot * self.duration as f64
    }

    pub fn is_flexible(&self) -> bool {
        self.latest_start() > self.earliest_start
    }

    pub fn displacement_penalty(&self, start: usize) -> f64 {
        start.abs_diff(self.preferred_start) as f64 * self.penalty_factor
    }

    /// Energy per pricing slot when started at `start`, as sparse
    /// `(pricing_slot, energy)` pairs in ascending slot order.
    pub fn pricing_energy(&self, start: usize, grid: &SlotGrid) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.duration / grid.sub_slots() + 2);
        for t in start..start + self.duration {
            let p = grid.pricing_slot_of(t);
            match out.last_mut() {
                Some((slot, e)) if *slot == p => *e += self.demand_per_slot,
                _ => out.push((p, self.demand_per_slot)),
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct House {
    pub id: HouseId,
    pub appliances: Vec<Appliance>,
}

impl House {
    pub fn preferred_schedule(&self) -> Schedule {
        Schedule {
            starts: self
                .appliances
                .iter()
                .map(|a| (a.id, a.preferred_start))
                .collect(),
        }
    }

    pub fn controllable_demand(&self) -> f64 {
        self.appliances.iter().map(Appliance::energy).sum()
    }
}

/// Σ demand × duration over every appliance of the community.
pub fn controllable_daily_demand(houses: &[House]) -> f64 {
    houses.iter().map(House::controllable_demand).sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateId(ApplianceId),
    NonPositiveDemand(ApplianceId),
    ZeroDuration(ApplianceId),
    NegativePenalty(ApplianceId),
    PreferredBeforeEarliest(ApplianceId),
    PreferredOverrunsLatest(ApplianceId),
    FinishOutsideDay(ApplianceId),
    EmptyWindow(ApplianceId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId(id) => write!(f, "appliance id {id} is used more than once"),
            Violation::NonPositiveDemand(id) => write!(f, "appliance {id}: demand must be > 0"),
            Violation::ZeroDuration(id) => write!(f, "appliance {id}: duration must be >= 1"),
            Violation::NegativePenalty(id) => {
                write!(f, "appliance {id}: penalty factor must be >= 0")
            }
            Violation::PreferredBeforeEarliest(id) => {
                write!(f, "appliance {id}: preferred start precedes earliest start")
            }
            Violation::PreferredOverrunsLatest(id) => {
                write!(f, "appliance {id}: preferred run overruns latest finish")
            }
            Violation::FinishOutsideDay(id) => {
                write!(f, "appliance {id}: latest finish lies outside the day")
            }
            Violation::EmptyWindow(id) => {
                write!(f, "appliance {id}: window is shorter than the duration")
            }
        }
    }
}

/// Lists every invariant an appliance of `house` breaks on `grid`.
pub fn validate_house(house: &House, grid: &SlotGrid) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for a in &house.appliances {
        if !seen.insert(a.id) {
            violations.push(Violation::DuplicateId(a.id));
        }
        if !(a.demand_per_slot > 0.0 && a.demand_per_slot.is_finite()) {
            violations.push(Violation::NonPositiveDemand(a.id));
        }
        if a.duration == 0 {
            violations.push(Violation::ZeroDuration(a.id));
        }
        if !(a.penalty_factor >= 0.0 && a.penalty_factor.is_finite()) {
            violations.push(Violation::NegativePenalty(a.id));
        }
        if a.preferred_start < a.earliest_start {
            violations.push(Violation::PreferredBeforeEarliest(a.id));
        }
        if a.duration > 0 && a.preferred_start + a.duration - 1 > a.latest_finish {
            violations.push(Violation::PreferredOverrunsLatest(a.id));
        }
        if a.latest_finish >= grid.day_len() {
            violations.push(Violation::FinishOutsideDay(a.id));
        }
        if a.latest_finish + 1 < a.earliest_start + a.duration {
            violations.push(Violation::EmptyWindow(a.id));
        }
    }
    violations
}

pub(crate) fn ensure_valid(house: &House, grid: &SlotGrid) -> Result<()> {
    match validate_house(house, grid).first() {
        None => Ok(()),
        Some(v) => Err(Error::InvalidHouse {
            house: house.id,
            reason: v.to_string(),
        }),
    }
}

/// Chosen start slot per appliance of one house.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub starts: BTreeMap<ApplianceId, usize>,
}

impl Schedule {
    pub fn start_of(&self, id: ApplianceId) -> Option<usize> {
        self.starts.get(&id).copied()
    }

    /// True when every appliance of `house` has a start inside its window.
    pub fn is_feasible_for(&self, house: &House) -> bool {
        house
            .appliances
            .iter()
            .all(|a| self.start_of(a.id).is_some_and(|s| a.can_start_at(s)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Attacked,
    Unknown,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Attacked => "attacked",
            Label::Unknown => "unknown",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "normal" => Ok(Label::Normal),
            "attacked" => Ok(Label::Attacked),
            "unknown" => Ok(Label::Unknown),
            other => Err(format!("unknown label '{other}'")),
        }
    }
}

/// Aggregated day-ahead demand per pricing slot, as received by the utility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandForecast {
    pub day_id: u32,
    pub label: Label,
    values: Vec<f64>,
}

impl DemandForecast {
    pub fn new(day_id: u32, label: Label, values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Precondition(format!(
                "forecast {day_id}: slot {i} has invalid demand {v}"
            )));
        }
        Ok(Self {
            day_id,
            label,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Returns the common length of `forecasts`, rejecting mixed lengths.
pub fn uniform_length<'a, I>(forecasts: I) -> Result<usize>
where
    I: IntoIterator<Item = &'a DemandForecast>,
{
    let mut len = None;
    for f in forecasts {
        match len {
            None => len = Some(f.len()),
            Some(l) => check_len(l, f.len())?,
        }
    }
    len.ok_or_else(|| Error::Precondition("empty forecast set".into()))
}

/// Unit price per pricing slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSignal {
    values: Vec<f64>,
}

impl PriceSignal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Precondition(format!(
                "unit prices must be positive, got {v}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn appliance(earliest: usize, preferred: usize, duration: usize, latest: usize) -> Appliance {
        Appliance {
            id: 1,
            demand_per_slot: 1.0,
            duration,
            earliest_start: earliest,
            latest_finish: latest,
            preferred_start: preferred,
            penalty_factor: 0.1,
        }
    }

    fn house(a: Appliance) -> House {
        House {
            id: 0,
            appliances: vec![a],
        }
    }

    #[test]
    fn grid_rejects_single_sub_slot() {
        assert!(SlotGrid::new(48, 1).is_err());
        assert!(SlotGrid::new(1, 2).is_err());
        let g = SlotGrid::new(48, 2).unwrap();
        assert_eq!(g.day_len(), 96);
        assert_eq!(g, SlotGrid::default());
    }

    #[test]
    fn valid_window_has_no_violations() {
        let g = SlotGrid::default();
        assert!(validate_house(&house(appliance(0, 4, 2, 5)), &g).is_empty());
    }

    #[test]
    fn preferred_run_overrunning_latest_is_reported() {
        let g = SlotGrid::default();
        let v = validate_house(&house(appliance(0, 10, 4, 12)), &g);
        assert_eq!(v, vec![Violation::PreferredOverrunsLatest(1)]);
    }

    #[test]
    fn preferred_before_earliest_is_reported() {
        let g = SlotGrid::default();
        let v = validate_house(&house(appliance(6, 4, 2, 20)), &g);
        assert_eq!(v, vec![Violation::PreferredBeforeEarliest(1)]);
    }

    #[test]
    fn duplicate_ids_and_day_overrun() {
        let g = SlotGrid::new(2, 2).unwrap();
        let mut h = house(appliance(0, 0, 2, 4));
        h.appliances.push(appliance(0, 0, 1, 1));
        let v = validate_house(&h, &g);
        assert!(v.contains(&Violation::DuplicateId(1)));
        assert!(v.contains(&Violation::FinishOutsideDay(1)));
    }

    #[test]
    fn pricing_energy_splits_runs_across_slots() {
        let g = SlotGrid::default();
        let a = Appliance {
            demand_per_slot: 0.5,
            ..appliance(0, 3, 4, 20)
        };
        assert_eq!(a.pricing_energy(3, &g), vec![(1, 0.5), (2, 1.0), (3, 0.5)]);
        assert_eq!(a.latest_start(), 17);
    }

    #[test]
    fn forecasts_reject_negative_values_and_mixed_lengths() {
        assert!(DemandForecast::new(0, Label::Normal, vec![1.0, -0.1]).is_err());
        assert!(DemandForecast::new(0, Label::Normal, vec![1.0, f64::NAN]).is_err());
        let a = DemandForecast::new(0, Label::Normal, vec![1.0; 4]).unwrap();
        let b = DemandForecast::new(1, Label::Normal, vec![1.0; 5]).unwrap();
        assert!(matches!(
            uniform_length([&a, &b]),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(uniform_length([&a, &a]).unwrap(), 4);
    }

    #[test]
    fn price_signal_must_be_positive() {
        assert!(PriceSignal::new(vec![1.0, 0.0]).is_err());
        assert!(PriceSignal::new(vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn to_pricing_sums_pairs() {
        let g = SlotGrid::new(2, 2).unwrap();
        assert_eq!(g.to_pricing(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![3.0, 7.0]);
        assert!(g.to_pricing(&[1.0]).is_err());
    }
}
