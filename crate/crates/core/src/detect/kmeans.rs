use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{uniform_length, DemandForecast, Label};
use crate::error::{check_len, Error, Result};
use crate::seed;

/// Lloyd iteration cap.
pub const MAX_LLOYD_ITERATIONS: usize = 300;

/// Cluster count used when none is configured: one cluster per ~25 training
/// days, at least 4. Corpora of thousands of days support 400.
pub fn desk_scale_k(train_size: usize) -> usize {
    (train_size / 25).max(4).min(train_size.max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredForecast {
    pub day_id: u32,
    pub cluster: usize,
    pub values: Vec<f64>,
}

/// k-means centroids plus the attack-free forecasts they were fitted on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub members: Vec<StoredForecast>,
    /// Sum of squared distances after each assignment step.
    pub objective_trace: Vec<f64>,
    pub seed: u64,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn members_of(&self, cluster: usize) -> impl Iterator<Item = &StoredForecast> {
        self.members.iter().filter(move |m| m.cluster == cluster)
    }

    pub(crate) fn ensure_fitted(&self) -> Result<()> {
        if self.centroids.is_empty() {
            Err(Error::Precondition("cluster model has no centroids".into()))
        } else {
            Ok(())
        }
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Index and squared distance of the nearest centroid; ties go to the
/// smallest index.
pub fn closest_centroid(forecast: &[f64], model: &ClusterModel) -> Result<(usize, f64)> {
    model.ensure_fitted()?;
    check_len(model.dim(), forecast.len())?;
    Ok(nearest(forecast, &model.centroids))
}

fn plus_plus_seeds(points: &[&[f64]], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed, 0x5EED_C1);
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].to_vec()];
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if r < d {
                        break;
                    }
                    r -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // Only duplicates remain; take any unused point.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = points[pick].to_vec();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[&[f64]], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points.iter().map(|p| nearest(p, centroids)).unzip()
}

/// Lloyd's algorithm with k-means++ seeding on attack-free forecasts.
pub fn fit_clusters(train: &[DemandForecast], k: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if train.len() < k {
        return Err(Error::TooFewSamples {
            required: k,
            available: train.len(),
        });
    }
    if let Some(f) = train.iter().find(|f| f.label != Label::Normal) {
        return Err(Error::Precondition(format!(
            "training forecast {} is labelled {}",
            f.day_id,
            f.label.as_str()
        )));
    }
    let dim = uniform_length(train)?;
    let points: Vec<&[f64]> = train.iter().map(DemandForecast::values).collect();

    let mut centroids = plus_plus_seeds(&points, k, seed);
    let mut objective_trace = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut iteration = 0;
    let labels = loop {
        let (labels, dists) = assign(&points, &centroids);
        objective_trace.push(dists.iter().sum());
        iteration += 1;
        if previous.as_ref() == Some(&labels) || iteration == MAX_LLOYD_ITERATIONS {
            break labels;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        let mut far: Vec<(usize, f64)> = dists.iter().copied().enumerate().collect();
        far.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut far = far.into_iter();
        for j in 0..k {
            if counts[j] > 0 {
                let n = counts[j] as f64;
                centroids[j] = sums[j].iter().map(|s| s / n).collect();
            } else if let Some((i, _)) = far.next() {
                centroids[j] = points[i].to_vec();
            }
        }
        previous = Some(labels);
    };

    let members = train
        .iter()
        .zip(&labels)
        .map(|(f, &cluster)| StoredForecast {
            day_id: f.day_id,
            cluster,
            values: f.values().to_vec(),
        })
        .collect();
    Ok(ClusterModel {
        centroids,
        members,
        objective_trace,
        seed,
    })
}
