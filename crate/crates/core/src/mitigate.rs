//! Rectification of attacked forecasts, before and during the DR iterations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::detect::{closest_centroid, ClassifierKind, ClusterModel, CsrConfig};
use crate::engine::ForecastHook;
use crate::error::{check_len, Error, Result};
use crate::isolate::{
    beam_search_isolate, csr_isolate, lof_isolate, IsolationConfig, IsolationMethod, LofConfig,
};

/// Slots of history fitted when extrapolating across an attacked gap.
pub const INTERPOLATION_WINDOW: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    SingleCluster,
    DoubleCluster,
    Interpolation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rectification {
    Fixed,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MitigationMethod {
    pub basis: Basis,
    pub rectification: Rectification,
}

impl MitigationMethod {
    pub const ALL: [MitigationMethod; 6] = [
        Self::new(Basis::SingleCluster, Rectification::Fixed),
        Self::new(Basis::SingleCluster, Rectification::Adaptive),
        Self::new(Basis::DoubleCluster, Rectification::Fixed),
        Self::new(Basis::DoubleCluster, Rectification::Adaptive),
        Self::new(Basis::Interpolation, Rectification::Fixed),
        Self::new(Basis::Interpolation, Rectification::Adaptive),
    ];

    pub const fn new(basis: Basis, rectification: Rectification) -> Self {
        Self {
            basis,
            rectification,
        }
    }

    /// Methods are numbered 1–6: single, double, interpolation; fixed before
    /// adaptive.
    pub fn number(&self) -> u8 {
        let b = match self.basis {
            Basis::SingleCluster => 0,
            Basis::DoubleCluster => 1,
            Basis::Interpolation => 2,
        };
        let r = match self.rectification {
            Rectification::Fixed => 1,
            Rectification::Adaptive => 2,
        };
        2 * b + r
    }

    pub fn from_number(n: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.number() == n)
            .ok_or_else(|| Error::Config(format!("mitigation method must be 1..=6, got {n}")))
    }

    pub fn is_adaptive(&self) -> bool {
        self.rectification == Rectification::Adaptive
    }

    /// The method with the same basis and the other rectification.
    pub fn counterpart(&self) -> Self {
        let rectification = match self.rectification {
            Rectification::Fixed => Rectification::Adaptive,
            Rectification::Adaptive => Rectification::Fixed,
        };
        Self::new(self.basis, rectification)
    }
}

impl fmt::Display for MitigationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "method{}", self.number())
    }
}

impl Serialize for MitigationNumber {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.0.number())
    }
}

impl<'de> Deserialize<'de> for MitigationNumber {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        MitigationMethod::from_number(n)
            .map(MitigationNumber)
            .map_err(serde::de::Error::custom)
    }
}

/// A method written as its number (1–6) in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MitigationNumber(pub MitigationMethod);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationState {
    /// Legitimate pattern; only its attacked slots are ever read.
    pub pattern: Vec<f64>,
    /// Ascending, non-empty, frozen after the first correction.
    pub attacked_slots: Vec<usize>,
    /// Forecast received at the previous correction.
    pub previous: Vec<f64>,
    pub method: MitigationMethod,
    /// Differs from `method.basis` when interpolation lacked history.
    pub basis_used: Basis,
    pub warnings: Vec<String>,
}

fn replace(forecast: &[f64], pattern: &[f64], slots: &[usize]) -> Vec<f64> {
    let mut out = forecast.to_vec();
    for &s in slots {
        out[s] = pattern[s].max(0.0);
    }
    out
}

/// Least-squares line through the `INTERPOLATION_WINDOW` values before the
/// earliest attacked slot, evaluated at every attacked slot.
fn extrapolate(forecast: &[f64], slots: &[usize]) -> Option<Vec<f64>> {
    let first = slots[0];
    if first < 2 {
        return None;
    }
    let lo = first.saturating_sub(INTERPOLATION_WINDOW);
    let xs: Vec<f64> = (lo..first).map(|x| x as f64).collect();
    let ys = &forecast[lo..first];
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let mut pattern = forecast.to_vec();
    for &s in slots {
        pattern[s] = (my + slope * (s as f64 - mx)).max(0.0);
    }
    Some(pattern)
}

fn normalise_slots(slots: &[usize], len: usize) -> Result<Vec<usize>> {
    let mut sorted = slots.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(Error::Precondition("no attacked slots to correct".into()));
    }
    if let Some(&s) = sorted.iter().find(|&&s| s >= len) {
        return Err(Error::Precondition(format!("attacked slot {s} outside 0..{len}")));
    }
    Ok(sorted)
}

/// First-iteration correction: choose the legitimate pattern and overwrite
/// the attacked slots with it.
pub fn correct_initial(
    attacked: &[f64],
    slots: &[usize],
    method: MitigationMethod,
    model: Option<&ClusterModel>,
) -> Result<(Vec<f64>, MitigationState)> {
    let slots = normalise_slots(slots, attacked.len())?;
    let mut warnings = Vec::new();
    let mut basis = method.basis;
    let mut pattern = None;
    if basis == Basis::Interpolation {
        pattern = extrapolate(attacked, &slots);
        if pattern.is_none() {
            warnings.push(format!(
                "slot {} has too little history to extrapolate; using the nearest centroid",
                slots[0]
            ));
            basis = Basis::SingleCluster;
        }
    }
    let pattern = match pattern {
        Some(p) => p,
        None => {
            let model = model.ok_or_else(|| {
                Error::Precondition("cluster-based correction needs a fitted model".into())
            })?;
            let (j, _) = closest_centroid(attacked, model)?;
            let mut cp = model.centroids[j].clone();
            if basis == Basis::DoubleCluster {
                let first = replace(attacked, &cp, &slots);
                let (j2, _) = closest_centroid(&first, model)?;
                cp = model.centroids[j2].clone();
            }
            cp
        }
    };
    let rdf = replace(attacked, &pattern, &slots);
    let state = MitigationState {
        pattern,
        attacked_slots: slots,
        previous: attacked.to_vec(),
        method,
        basis_used: basis,
        warnings,
    };
    Ok((rdf, state))
}

/// Later-iteration correction. Fixed rectification pins the attacked slots
/// to the pattern; adaptive moves the pattern by the change in the received
/// forecast since the previous iteration, then adopts the result as the new
/// pattern.
pub fn correct_iteration(current: &[f64], state: &mut MitigationState) -> Result<Vec<f64>> {
    check_len(state.pattern.len(), current.len())?;
    let mut rdf = current.to_vec();
    for &s in &state.attacked_slots {
        rdf[s] = match state.method.rectification {
            Rectification::Fixed => state.pattern[s].max(0.0),
            Rectification::Adaptive => {
                let delta = state.previous[s] - current[s];
                let v = (state.pattern[s] - delta).max(0.0);
                state.pattern[s] = v;
                v
            }
        };
    }
    state.previous = current.to_vec();
    Ok(rdf)
}

/// Mean absolute percentage error of `rectified` against `reference`, and
/// the number of zero reference slots left out.
pub fn mape(rectified: &[f64], reference: &[f64]) -> Result<(f64, usize)> {
    check_len(reference.len(), rectified.len())?;
    let mut sum = 0.0;
    let mut used = 0;
    for (r, f) in rectified.iter().zip(reference) {
        if *f > 0.0 {
            sum += (r - f).abs() / f;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Precondition("reference forecast has no positive slot".into()));
    }
    Ok((100.0 * sum / used as f64, reference.len() - used))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Isolator {
    Beam(IsolationConfig),
    Lof(LofConfig),
    /// Saliency argmax, capped at this many slots.
    Csr(usize),
}

impl Isolator {
    pub fn method(&self) -> IsolationMethod {
        match self {
            Isolator::Beam(_) => IsolationMethod::IsolationPath,
            Isolator::Lof(_) => IsolationMethod::Lof,
            Isolator::Csr(_) => IsolationMethod::Csr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub iteration: usize,
    /// `None` when the classifier did not run this iteration.
    pub flagged: Option<bool>,
    pub slots: Vec<usize>,
    pub received: Vec<f64>,
    pub rectified: Vec<f64>,
}

/// Detect → isolate → rectify, as a hook between the aggregate forecast and
/// the utility's pricing.
///
/// The classifier runs on the initial forecast, and on later ones too when
/// `rescan` is set, until it first flags. From then on the attacked slots are
/// frozen and every iteration is rectified.
pub struct MitigationHook<'m> {
    pub method: MitigationMethod,
    pub classifier: ClassifierKind,
    pub detector: CsrConfig,
    pub isolator: Isolator,
    pub rescan: bool,
    model: &'m ClusterModel,
    located: Option<(Vec<f64>, Option<Vec<usize>>)>,
    state: Option<MitigationState>,
    audit: Vec<AuditRow>,
    diagnostics: Vec<String>,
}

impl<'m> MitigationHook<'m> {
    pub fn new(
        method: MitigationMethod,
        model: &'m ClusterModel,
        classifier: ClassifierKind,
        detector: CsrConfig,
        isolator: Isolator,
    ) -> Self {
        Self {
            method,
            classifier,
            detector,
            isolator,
            rescan: false,
            model,
            located: None,
            state: None,
            audit: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn state(&self) -> Option<&MitigationState> {
        self.state.as_ref()
    }

    pub fn audit(&self) -> &[AuditRow] {
        &self.audit
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    /// Classifies `forecast` and, if flagged, isolates its attacked slots.
    /// `None` means not flagged.
    pub fn locate(&self, forecast: &[f64]) -> Result<Option<Vec<usize>>> {
        let report = self.classifier.classify(forecast, self.model, &self.detector)?;
        if !report.verdict.is_attacked() {
            return Ok(None);
        }
        let verdict = match self.isolator {
            Isolator::Beam(cfg) => beam_search_isolate(forecast, self.model, &cfg)?,
            Isolator::Lof(cfg) => lof_isolate(forecast, self.model, &cfg)?,
            Isolator::Csr(cap) => csr_isolate(&report, self.detector.threshold, cap)?,
        };
        Ok(Some(verdict.attacked_slots))
    }

    /// Reuses an earlier [`locate`](Self::locate) result whenever the hook
    /// would classify exactly `forecast`.
    pub fn with_located(mut self, forecast: Vec<f64>, located: Option<Vec<usize>>) -> Self {
        self.located = Some((forecast, located));
        self
    }

    fn detect_and_correct(&mut self, forecast: &[f64]) -> Result<Option<Vec<f64>>> {
        let located = match &self.located {
            Some((f, l)) if f.as_slice() == forecast => l.clone(),
            _ => self.locate(forecast)?,
        };
        let Some(slots) = located else {
            return Ok(None);
        };
        if slots.is_empty() {
            self.diagnostics
                .push("flagged forecast but no slot was isolated; passed through".into());
            return Ok(Some(forecast.to_vec()));
        }
        let (rdf, state) = correct_initial(forecast, &slots, self.method, Some(self.model))?;
        self.diagnostics.extend(state.warnings.iter().cloned());
        self.state = Some(state);
        Ok(Some(rdf))
    }
}

impl ForecastHook for MitigationHook<'_> {
    fn apply(&mut self, iteration: usize, forecast: &[f64]) -> Vec<f64> {
        let (flagged, out) = if let Some(state) = self.state.as_mut() {
            match correct_iteration(forecast, state) {
                Ok(rdf) => (None, rdf),
                Err(e) => {
                    self.diagnostics.push(format!("iteration {iteration}: {e}"));
                    (None, forecast.to_vec())
                }
            }
        } else if iteration == 0 || self.rescan {
            match self.detect_and_correct(forecast) {
                Ok(Some(rdf)) => (Some(true), rdf),
                Ok(None) => (Some(false), forecast.to_vec()),
                Err(e) => {
                    self.diagnostics.push(format!("iteration {iteration}: {e}"));
                    (None, forecast.to_vec())
                }
            }
        } else {
            (None, forecast.to_vec())
        };
        self.audit.push(AuditRow {
            iteration,
            flagged,
            slots: self
                .state
                .as_ref()
                .map(|s| s.attacked_slots.clone())
                .unwrap_or_default(),
            received: forecast.to_vec(),
            rectified: out.clone(),
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::StoredForecast;

    fn two_cluster_model() -> ClusterModel {
        let low: Vec<f64> = (0..8).map(|i| 5.0 + i as f64 * 0.25).collect();
        let high: Vec<f64> = low.iter().map(|v| v + 4.0).collect();
        ClusterModel {
            centroids: vec![low.clone(), high.clone()],
            members: vec![StoredForecast {
                day_id: 0,
                cluster: 0,
                values: low,
            }],
            objective_trace: vec![],
            seed: 0,
        }
    }

    #[test]
    fn methods_are_numbered_one_to_six() {
        let numbers: Vec<u8> = MitigationMethod::ALL.iter().map(|m| m.number()).collect();
        assert_eq!(numbers, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(MitigationMethod::from_number(4).unwrap().basis, Basis::DoubleCluster);
        assert!(MitigationMethod::from_number(7).is_err());
        assert_eq!(MitigationMethod::from_number(5).unwrap().counterpart().number(), 6);
    }

    #[test]
    fn single_cluster_restores_the_centroid_value() {
        let model = two_cluster_model();
        let mut f = model.centroids[0].clone();
        f[3] += 2.0;
        let (rdf, state) =
            correct_initial(&f, &[3], MitigationMethod::from_number(1).unwrap(), Some(&model)).unwrap();
        assert_eq!(rdf, model.centroids[0]);
        assert_eq!(state.attacked_slots, vec![3]);
    }

    #[test]
    fn interpolation_continues_a_ramp() {
        let f: Vec<f64> = (1..=10).map(f64::from).collect();
        let mut attacked = f.clone();
        attacked[5] = 40.0;
        let (rdf, _) =
            correct_initial(&attacked, &[5], MitigationMethod::from_number(5).unwrap(), None).unwrap();
        assert!((rdf[5] - 6.0).abs() < 1e-12);
        assert_eq!(&rdf[..5], &f[..5]);
        assert_eq!(&rdf[6..], &f[6..]);
    }

    #[test]
    fn interpolation_without_history_falls_back() {
        let model = two_cluster_model();
        let mut f = model.centroids[0].clone();
        f[1] += 3.0;
        let (rdf, state) =
            correct_initial(&f, &[1], MitigationMethod::from_number(6).unwrap(), Some(&model)).unwrap();
        assert_eq!(state.basis_used, Basis::SingleCluster);
        assert_eq!(state.warnings.len(), 1);
        assert_eq!(rdf[1], model.centroids[0][1]);
    }

    #[test]
    fn fixed_pins_and_adaptive_tracks() {
        let model = two_cluster_model();
        let f0 = model.centroids[0].clone();
        let mut fixed = correct_initial(&f0, &[2], MitigationMethod::from_number(1).unwrap(), Some(&model))
            .unwrap()
            .1;
        let mut adaptive =
            correct_initial(&f0, &[2], MitigationMethod::from_number(2).unwrap(), Some(&model))
                .unwrap()
                .1;
        let cp = model.centroids[0][2];

        let same = correct_iteration(&f0, &mut adaptive).unwrap();
        assert_eq!(same[2], cp);
        assert_eq!(adaptive.pattern[2], cp);

        let mut f1 = f0.clone();
        f1[2] -= 2.0;
        f1[6] += 2.0;
        let a = correct_iteration(&f1, &mut adaptive).unwrap();
        let x = correct_iteration(&f1, &mut fixed).unwrap();
        assert!((a[2] - (cp - 2.0)).abs() < 1e-12);
        assert_eq!(x[2], cp);
        assert_eq!(a[6], f1[6]);
        assert_eq!(x[6], f1[6]);
    }

    #[test]
    fn mape_basics() {
        let free = [2.0, 4.0, 0.0, 5.0];
        assert_eq!(mape(&free, &free).unwrap(), (0.0, 1));
        let up: Vec<f64> = free.iter().map(|v| v * 1.1).collect();
        let (m, skipped) = mape(&up, &free).unwrap();
        assert!((m - 10.0).abs() < 1e-9);
        assert_eq!(skipped, 1);
        assert!(mape(&[1.0], &[0.0]).is_err());
    }
}
