//! Attacked-slot isolation: beam search over slot subspaces scored by
//! isolation path length, with per-slot LOF and saliency argmax as baselines.

mod lof;
mod path;
mod recall;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::detect::{check_dim, closest_centroid, ClusterModel, DetectionReport};
use crate::error::{Error, Result};

pub use lof::{local_outlier_factors, query_lof};
pub use path::{
    expected_path_length, isolation_path_score, leaf_adjustment, IsolationConfig, PathScore,
    EULER_GAMMA,
};
pub use recall::{isolation_recall, magnitude_bucket, BucketRecall, IsolationCase};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsolationMethod {
    IsolationPath,
    Lof,
    Csr,
}

impl IsolationMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            IsolationMethod::IsolationPath => "beam",
            IsolationMethod::Lof => "lof",
            IsolationMethod::Csr => "csr",
        }
    }
}

impl std::str::FromStr for IsolationMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "beam" | "isolation_path" => Ok(IsolationMethod::IsolationPath),
            "lof" => Ok(IsolationMethod::Lof),
            "csr" => Ok(IsolationMethod::Csr),
            other => Err(format!("unknown isolator '{other}' (expected beam|lof|csr)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceScore {
    pub slots: Vec<usize>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationVerdict {
    /// In the method's ranking order; compare as a set.
    pub attacked_slots: Vec<usize>,
    /// Every subspace the method scored.
    pub scores: Vec<SubspaceScore>,
    pub method: IsolationMethod,
}

impl IsolationVerdict {
    pub fn slot_set(&self) -> BTreeSet<usize> {
        self.attacked_slots.iter().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LofConfig {
    pub k_neighbors: usize,
    /// LOF at or above which a slot is flagged.
    pub threshold: f64,
    pub max_subspace: usize,
}

impl Default for LofConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 10,
            threshold: 1.5,
            max_subspace: 3,
        }
    }
}

/// Stored members of the forecast's nearest cluster, or the whole database
/// when that cluster has fewer than `min` members.
fn population<'m>(forecast: &[f64], model: &'m ClusterModel, min: usize) -> Result<Vec<&'m [f64]>> {
    check_dim(model, forecast.len())?;
    let (j, _) = closest_centroid(forecast, model)?;
    let mut pop: Vec<&[f64]> = model.members_of(j).map(|m| m.values.as_slice()).collect();
    if pop.len() < min {
        pop = model.members.iter().map(|m| m.values.as_slice()).collect();
    }
    if pop.len() < min {
        return Err(Error::TooFewSamples {
            required: min,
            available: pop.len(),
        });
    }
    Ok(pop)
}

fn better(a: &SubspaceScore, b: &SubspaceScore) -> std::cmp::Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.slots.len().cmp(&b.slots.len()))
        .then_with(|| a.slots.cmp(&b.slots))
}

/// Staged subspace search: every single slot, every pair, then the top
/// `beam_width` subspaces of each stage extended by one slot, up to
/// `max_subspace`. The most isolating subspace wins.
pub fn beam_search_isolate(
    attacked: &[f64],
    model: &ClusterModel,
    cfg: &IsolationConfig,
) -> Result<IsolationVerdict> {
    let p = attacked.len();
    cfg.validate(p)?;
    let pop = population(attacked, model, 2)?;
    let score = |slots: Vec<usize>| -> Result<SubspaceScore> {
        let s = isolation_path_score(attacked, &pop, &slots, cfg)?;
        Ok(SubspaceScore {
            slots,
            score: s.normalized,
        })
    };

    let mut all = Vec::new();
    let mut stage: Vec<SubspaceScore> = (0..p).map(|s| score(vec![s])).collect::<Result<_>>()?;
    all.extend(stage.iter().cloned());
    if cfg.max_subspace >= 2 {
        stage = Vec::with_capacity(p * (p - 1) / 2);
        for a in 0..p {
            for b in a + 1..p {
                stage.push(score(vec![a, b])?);
            }
        }
        all.extend(stage.iter().cloned());
    }
    for _ in 3..=cfg.max_subspace {
        stage.sort_by(better);
        let mut seen = BTreeSet::new();
        let mut next = Vec::new();
        for base in stage.iter().take(cfg.beam_width) {
            for f in (0..p).filter(|f| !base.slots.contains(f)) {
                let mut slots = base.slots.clone();
                slots.push(f);
                slots.sort_unstable();
                if seen.insert(slots.clone()) {
                    next.push(score(slots)?);
                }
            }
        }
        all.extend(next.iter().cloned());
        stage = next;
    }

    let best = all
        .iter()
        .min_by(|a, b| better(a, b))
        .map(|s| s.slots.clone())
        .unwrap_or_default();
    Ok(IsolationVerdict {
        attacked_slots: best,
        scores: all,
        method: IsolationMethod::IsolationPath,
    })
}

/// Per-slot 1-d LOF against the nearest cluster's members; slots at or above
/// the threshold are returned, highest LOF first. May be empty.
pub fn lof_isolate(attacked: &[f64], model: &ClusterModel, cfg: &LofConfig) -> Result<IsolationVerdict> {
    if cfg.max_subspace == 0 {
        return Err(Error::Config("max_subspace must be positive".into()));
    }
    let pop = population(attacked, model, cfg.k_neighbors + 1)?;
    let mut column = vec![0.0; pop.len()];
    let mut scores = Vec::with_capacity(attacked.len());
    for (s, &q) in attacked.iter().enumerate() {
        for (c, row) in column.iter_mut().zip(&pop) {
            *c = row[s];
        }
        scores.push(SubspaceScore {
            slots: vec![s],
            score: query_lof(q, &column, cfg.k_neighbors)?,
        });
    }
    let mut flagged: Vec<&SubspaceScore> = scores.iter().filter(|s| s.score >= cfg.threshold).collect();
    flagged.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.slots.cmp(&b.slots)));
    let attacked_slots = flagged
        .iter()
        .take(cfg.max_subspace)
        .map(|s| s.slots[0])
        .collect();
    Ok(IsolationVerdict {
        attacked_slots,
        scores,
        method: IsolationMethod::Lof,
    })
}

/// Slots whose saliency reaches the detection threshold, most salient first
/// (ties by slot), capped at `max_subspace`; always includes the peak.
pub fn csr_isolate(report: &DetectionReport, threshold: f64, max_subspace: usize) -> Result<IsolationVerdict> {
    if !report.verdict.is_attacked() {
        return Err(Error::Contract(
            "saliency isolation requires a forecast flagged as attacked".into(),
        ));
    }
    if max_subspace == 0 {
        return Err(Error::Config("max_subspace must be positive".into()));
    }
    let values = &report.saliency.values;
    let mut ranked: Vec<usize> = (0..values.len()).filter(|&s| values[s] >= threshold).collect();
    ranked.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    ranked.truncate(max_subspace);
    if ranked.is_empty() {
        ranked.push(report.saliency.peak_index);
    }
    Ok(IsolationVerdict {
        attacked_slots: ranked,
        scores: values
            .iter()
            .enumerate()
            .map(|(s, &v)| SubspaceScore {
                slots: vec![s],
                score: v,
            })
            .collect(),
        method: IsolationMethod::Csr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{SaliencyMap, StoredForecast, Verdict};

    fn report(values: Vec<f64>, verdict: Verdict) -> DetectionReport {
        let (peak_index, peak_value) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, v)| if v > b.1 { (i, v) } else { b });
        DetectionReport {
            verdict,
            saliency: SaliencyMap {
                values,
                peak_index,
                peak_value,
            },
            nearest_cluster: Some(0),
            residual: vec![],
        }
    }

    #[test]
    fn csr_argmax_and_ties() {
        let mut v = vec![0.1; 48];
        v[17] = 0.9;
        let r = csr_isolate(&report(v, Verdict::Attacked), 0.5, 3).unwrap();
        assert_eq!(r.attacked_slots, vec![17]);

        let mut v = vec![0.1; 48];
        v[40] = 0.8;
        v[5] = 0.8;
        let r = csr_isolate(&report(v, Verdict::Attacked), 0.5, 3).unwrap();
        assert_eq!(r.attacked_slots, vec![5, 40]);
    }

    #[test]
    fn csr_always_returns_the_peak() {
        let mut v = vec![0.1; 8];
        v[3] = 0.2;
        let r = csr_isolate(&report(v, Verdict::Attacked), 0.5, 3).unwrap();
        assert_eq!(r.attacked_slots, vec![3]);
    }

    #[test]
    fn csr_rejects_normal_reports() {
        let r = csr_isolate(&report(vec![0.0; 8], Verdict::Normal), 0.5, 3);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    fn toy_model() -> ClusterModel {
        let members: Vec<StoredForecast> = (0..30)
            .map(|i| StoredForecast {
                day_id: i,
                cluster: 0,
                values: (0..8).map(|s| 10.0 + s as f64 + ((i * 7 + s * 3) % 5) as f64 * 0.1).collect(),
            })
            .collect();
        let centroid = (0..8)
            .map(|s| members.iter().map(|m| m.values[s]).sum::<f64>() / 30.0)
            .collect();
        ClusterModel {
            centroids: vec![centroid],
            members,
            objective_trace: vec![],
            seed: 0,
        }
    }

    #[test]
    fn beam_and_lof_find_a_planted_spike() {
        let model = toy_model();
        let mut q = model.members[4].values.clone();
        q[5] += 3.0;
        let beam = beam_search_isolate(&q, &model, &IsolationConfig::default()).unwrap();
        assert_eq!(beam.attacked_slots, vec![5]);
        let lof = lof_isolate(&q, &model, &LofConfig::default()).unwrap();
        assert_eq!(lof.attacked_slots, vec![5]);
    }

    #[test]
    fn beam_is_deterministic() {
        let model = toy_model();
        let mut q = model.members[9].values.clone();
        q[2] += 1.0;
        let cfg = IsolationConfig::default();
        assert_eq!(
            beam_search_isolate(&q, &model, &cfg).unwrap(),
            beam_search_isolate(&q, &model, &cfg).unwrap()
        );
    }
}
