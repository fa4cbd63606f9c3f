use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

use super::kmeans::{closest_centroid, ClusterModel};
use super::saliency::{spectral_saliency, ResidualOrder, SaliencyMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Attacked,
    Normal,
}

impl Verdict {
    pub fn is_attacked(&self) -> bool {
        matches!(self, Verdict::Attacked)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Attacked => "attacked",
            Verdict::Normal => "normal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrConfig {
    /// Moving-average window over the log amplitude spectrum (odd).
    pub q: usize,
    /// Peak saliency at or above which a forecast is flagged.
    pub threshold: f64,
    #[serde(default)]
    pub order: ResidualOrder,
}

impl Default for CsrConfig {
    fn default() -> Self {
        Self {
            q: 3,
            threshold: 1.0,
            order: ResidualOrder::default(),
        }
    }
}

impl CsrConfig {
    fn check_threshold(&self) -> Result<()> {
        if self.threshold >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "threshold must be non-negative, got {}",
                self.threshold
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub verdict: Verdict,
    pub saliency: SaliencyMap,
    /// `None` for the plain spectral-residual baseline.
    pub nearest_cluster: Option<usize>,
    pub residual: Vec<f64>,
}

fn report(residual: Vec<f64>, nearest_cluster: Option<usize>, cfg: &CsrConfig) -> Result<DetectionReport> {
    cfg.check_threshold()?;
    let saliency = spectral_saliency(&residual, cfg.q, cfg.order)?;
    let verdict = if saliency.peak_value >= cfg.threshold {
        Verdict::Attacked
    } else {
        Verdict::Normal
    };
    Ok(DetectionReport {
        verdict,
        saliency,
        nearest_cluster,
        residual,
    })
}

/// Cluster-based spectral residual: subtract the nearest centroid, then
/// threshold the peak saliency of what is left.
pub fn csr_classify(forecast: &[f64], model: &ClusterModel, cfg: &CsrConfig) -> Result<DetectionReport> {
    let (j, _) = closest_centroid(forecast, model)?;
    let residual = forecast
        .iter()
        .zip(&model.centroids[j])
        .map(|(f, c)| f - c)
        .collect();
    report(residual, Some(j), cfg)
}

/// Spectral-residual baseline on the raw forecast.
pub fn sr_classify(forecast: &[f64], cfg: &CsrConfig) -> Result<DetectionReport> {
    report(forecast.to_vec(), None, cfg)
}

/// `p`-th percentile (0–100) with linear interpolation between order
/// statistics.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Precondition("percentile of an empty set".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Config(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64))
}

/// Threshold at the `p`-th percentile of the peak saliency of attack-free
/// forecasts.
pub fn calibrate_threshold(peaks: &[f64], p: f64) -> Result<f64> {
    percentile(peaks, p)
}

pub(crate) fn check_dim(model: &ClusterModel, len: usize) -> Result<()> {
    model.ensure_fitted()?;
    check_len(model.dim(), len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ClusterModel {
        let a: Vec<f64> = (0..48).map(|i| 10.0 + (i as f64 / 4.0).sin() * 3.0).collect();
        let b: Vec<f64> = (0..48).map(|i| 20.0 + (i as f64 / 6.0).cos() * 5.0).collect();
        ClusterModel {
            centroids: vec![a, b],
            members: vec![],
            objective_trace: vec![],
            seed: 0,
        }
    }

    #[test]
    fn centroid_itself_is_normal() {
        let m = model();
        let cfg = CsrConfig {
            threshold: 0.5,
            ..CsrConfig::default()
        };
        let r = csr_classify(&m.centroids[1].clone(), &m, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Normal);
        assert_eq!(r.nearest_cluster, Some(1));
        assert!(r.saliency.peak_value < 1e-6);
    }

    #[test]
    fn centroid_plus_pulse_is_attacked() {
        let m = model();
        let mut f = m.centroids[0].clone();
        f[30] += 4.0;
        let cfg = CsrConfig {
            threshold: 0.5,
            ..CsrConfig::default()
        };
        let r = csr_classify(&f, &m, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Attacked);
        assert_eq!(r.saliency.peak_index, 30);
    }

    #[test]
    fn zero_threshold_flags_everything() {
        let m = model();
        let cfg = CsrConfig {
            threshold: 0.0,
            ..CsrConfig::default()
        };
        for c in &m.centroids {
            assert!(csr_classify(c, &m, &cfg).unwrap().verdict.is_attacked());
        }
        assert!(sr_classify(&m.centroids[0], &cfg).unwrap().verdict.is_attacked());
    }

    #[test]
    fn sr_equals_csr_against_a_zero_centroid() {
        let zero = ClusterModel {
            centroids: vec![vec![0.0; 48]],
            members: vec![],
            objective_trace: vec![],
            seed: 0,
        };
        let f: Vec<f64> = (0..48).map(|i| ((i * 13) % 17) as f64).collect();
        let cfg = CsrConfig::default();
        let a = sr_classify(&f, &cfg).unwrap();
        let b = csr_classify(&f, &zero, &cfg).unwrap();
        assert_eq!(a.saliency, b.saliency);
        assert_eq!(a.verdict, b.verdict);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0).unwrap(), 3.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 5.0);
        assert_eq!(percentile(&v, 87.5).unwrap(), 4.5);
        assert!(percentile(&[], 50.0).is_err());
    }
}
