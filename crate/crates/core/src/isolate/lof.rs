use crate::error::{Error, Result};

/// Local outlier factor of every point in a 1-d sample.
///
/// Reachability uses the neighbour's k-distance: `reach(p, o) =
/// max(kdist(o), |p − o|)`. Neighbourhoods include ties at the k-distance.
/// Duplicated points give infinite density; two infinite densities compare
/// as a ratio of 1.
pub fn local_outlier_factors(points: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(Error::TooFewSamples {
            required: k.max(1) + 1,
            available: n,
        });
    }
    let dist = |i: usize, j: usize| (points[i] - points[j]).abs();

    let mut neighbours: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut kdist = Vec::with_capacity(n);
    let mut row: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| (dist(i, j), j)));
        row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let kd = row[k - 1].0;
        kdist.push(kd);
        neighbours.push(row.iter().take_while(|(d, _)| *d <= kd).map(|&(_, j)| j).collect());
    }

    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let reach: f64 = neighbours[i].iter().map(|&o| kdist[o].max(dist(i, o))).sum();
            if reach == 0.0 {
                f64::INFINITY
            } else {
                neighbours[i].len() as f64 / reach
            }
        })
        .collect();

    Ok((0..n)
        .map(|i| {
            let ratios: f64 = neighbours[i]
                .iter()
                .map(|&o| match (lrd[o].is_infinite(), lrd[i].is_infinite()) {
                    (true, true) => 1.0,
                    (false, true) => 0.0,
                    (true, false) => f64::INFINITY,
                    (false, false) => lrd[o] / lrd[i],
                })
                .sum();
            ratios / neighbours[i].len() as f64
        })
        .collect())
}

/// LOF of `query` measured against `population ∪ {query}`.
pub fn query_lof(query: f64, population: &[f64], k: usize) -> Result<f64> {
    let mut points = Vec::with_capacity(population.len() + 1);
    points.push(query);
    points.extend_from_slice(population);
    Ok(local_outlier_factors(&points, k)?[0])
}
