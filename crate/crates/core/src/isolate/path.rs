use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationConfig {
    /// Largest slot subset explored by the beam search.
    pub max_subspace: usize,
    /// Subspaces kept from one stage to seed the next.
    pub beam_width: usize,
    pub trees: usize,
    /// Points per tree (query included); capped at the population size.
    pub subsample: usize,
    pub seed: u64,
}

impl Default for IsolationConfig {
    fn default() -> Self {
        Self {
            max_subspace: 3,
            beam_width: 10,
            trees: 50,
            subsample: 64,
            seed: 0,
        }
    }
}

impl IsolationConfig {
    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.max_subspace == 0 || self.max_subspace > dims {
            return Err(Error::Config(format!(
                "max_subspace must lie in 1..={dims}, got {}",
                self.max_subspace
            )));
        }
        if self.beam_width == 0 || self.trees == 0 {
            return Err(Error::Config("beam_width and trees must be positive".into()));
        }
        if self.subsample < 2 {
            return Err(Error::Config("subsample must be at least 2".into()));
        }
        Ok(())
    }
}

/// Expected isolation depth of a random point among `n`:
/// `2(ln(n−1) + γ) − 2(n−1)/n`, with `c(2) = 1`.
pub fn expected_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

/// Depth credited to a leaf that still holds `n > 1` indistinguishable points.
pub fn leaf_adjustment(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        2.0 * ((n as f64).ln() + EULER_GAMMA) - 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathScore {
    /// Mean number of splits needed to isolate the query.
    pub mean_path: f64,
    /// `mean_path / c(ψ)`; lower means more isolated.
    pub normalized: f64,
    pub subsample: usize,
}

fn subspace_salt(subspace: &[usize]) -> u64 {
    subspace
        .iter()
        .fold(0x15_0_1A7E, |acc, &f| seed::mix(acc, f as u64 + 1))
}

/// Mean random-split depth at which `query` is cut off from a subsample of
/// `population`, using only the `subspace` features.
///
/// Each tree draws `ψ − 1` population points without replacement, then
/// repeatedly picks a feature with non-zero spread among the remaining points
/// and a uniform split inside that spread, keeping the query's side.
pub fn isolation_path_score(
    query: &[f64],
    population: &[&[f64]],
    subspace: &[usize],
    cfg: &IsolationConfig,
) -> Result<PathScore> {
    if population.len() < 2 {
        return Err(Error::Precondition(format!(
            "isolation needs at least 2 population points, got {}",
            population.len()
        )));
    }
    if subspace.is_empty() {
        return Err(Error::Precondition("empty subspace".into()));
    }
    if let Some(&f) = subspace.iter().find(|&&f| f >= query.len()) {
        return Err(Error::Precondition(format!("feature {f} out of range")));
    }
    if cfg.trees == 0 || cfg.subsample < 2 {
        return Err(Error::Config("need trees >= 1 and subsample >= 2".into()));
    }

    let psi = cfg.subsample.min(population.len() + 1);
    let c = expected_path_length(psi);
    let degenerate = population
        .iter()
        .all(|p| subspace.iter().all(|&f| p[f] == query[f]));
    if degenerate {
        return Ok(PathScore {
            mean_path: c,
            normalized: 1.0,
            subsample: psi,
        });
    }

    let base_seed = seed::mix(cfg.seed, subspace_salt(subspace));
    let mut order: Vec<usize> = (0..population.len()).collect();
    let mut node: Vec<usize> = Vec::with_capacity(psi);
    let mut spread: Vec<(usize, f64, f64)> = Vec::with_capacity(subspace.len());
    let mut total = 0.0;
    for tree in 0..cfg.trees {
        let mut rng = seed::rng(base_seed, tree as u64);
        for i in 0..psi - 1 {
            let j = rng.gen_range(i..order.len());
            order.swap(i, j);
        }
        node.clear();
        node.extend_from_slice(&order[..psi - 1]);

        let mut depth = 0.0;
        loop {
            if node.is_empty() {
                break;
            }
            spread.clear();
            for &f in subspace {
                let (lo, hi) = node
                    .iter()
                    .map(|&i| population[i][f])
                    .fold((query[f], query[f]), |(lo, hi), v| (lo.min(v), hi.max(v)));
                if hi > lo {
                    spread.push((f, lo, hi));
                }
            }
            if spread.is_empty() {
                depth += leaf_adjustment(node.len() + 1);
                break;
            }
            let (f, lo, hi) = spread[rng.gen_range(0..spread.len())];
            let split = rng.gen_range(lo..hi);
            let query_left = query[f] < split;
            node.retain(|&i| (population[i][f] < split) == query_left);
            depth += 1.0;
        }
        total += depth;
    }
    let mean_path = total / cfg.trees as f64;
    Ok(PathScore {
        mean_path,
        normalized: mean_path / c,
        subsample: psi,
    })
}
