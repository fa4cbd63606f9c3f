//! Attack detection: the k-means cluster module, spectral-residual saliency,
//! the cluster-based (CSR) and plain (SR) classifiers, and their metrics.

mod classify;
mod kmeans;
mod metrics;
mod saliency;

pub use classify::{
    calibrate_threshold, csr_classify, percentile, sr_classify, CsrConfig, DetectionReport, Verdict,
};
pub(crate) use classify::check_dim;
pub use kmeans::{
    closest_centroid, desk_scale_k, fit_clusters, squared_distance, ClusterModel, StoredForecast,
    MAX_LLOYD_ITERATIONS,
};
pub use metrics::{classification_metrics, ClassificationMetrics};
pub use saliency::{spectral_saliency, ResidualOrder, SaliencyMap, LOG_EPSILON};

/// Which classifier routes forecasts to the isolator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Csr,
    Sr,
}

impl ClassifierKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassifierKind::Csr => "csr",
            ClassifierKind::Sr => "sr",
        }
    }

    pub fn classify(
        &self,
        forecast: &[f64],
        model: &ClusterModel,
        cfg: &CsrConfig,
    ) -> crate::Result<DetectionReport> {
        match self {
            ClassifierKind::Csr => csr_classify(forecast, model, cfg),
            ClassifierKind::Sr => sr_classify(forecast, cfg),
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csr" => Ok(ClassifierKind::Csr),
            "sr" => Ok(ClassifierKind::Sr),
            other => Err(format!("unknown classifier '{other}' (expected csr|sr)")),
        }
    }
}
