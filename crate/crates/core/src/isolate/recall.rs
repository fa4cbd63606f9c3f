use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationCase {
    pub magnitude: f64,
    /// `None` when the forecast never reached the isolator.
    pub verdict: Option<Vec<usize>>,
    pub planted: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRecall {
    /// Injection size in hundredths of a percent (0.1% → 10).
    pub bucket: u32,
    pub cases: usize,
    pub exact: usize,
    /// Exact-match rate.
    pub recall: f64,
    /// Mean Jaccard overlap between verdict and planted sets.
    pub partial: f64,
}

impl BucketRecall {
    pub fn percent(&self) -> f64 {
        self.bucket as f64 / 100.0
    }
}

pub fn magnitude_bucket(magnitude: f64) -> u32 {
    (magnitude * 10_000.0).round() as u32
}

fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Exact-match isolation recall per injection-size bucket, ascending.
pub fn isolation_recall(cases: &[IsolationCase]) -> Vec<BucketRecall> {
    let mut buckets: BTreeMap<u32, (usize, usize, f64)> = BTreeMap::new();
    for c in cases {
        let planted: BTreeSet<usize> = c.planted.iter().copied().collect();
        let (exact, partial) = match &c.verdict {
            None => (false, 0.0),
            Some(v) => {
                let v: BTreeSet<usize> = v.iter().copied().collect();
                (v == planted, jaccard(&v, &planted))
            }
        };
        let e = buckets.entry(magnitude_bucket(c.magnitude)).or_default();
        e.0 += 1;
        e.1 += usize::from(exact);
        e.2 += partial;
    }
    buckets
        .into_iter()
        .map(|(bucket, (cases, exact, partial))| BucketRecall {
            bucket,
            cases,
            exact,
            recall: exact as f64 / cases as f64,
            partial: partial / cases as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(m: f64, v: Option<&[usize]>, p: &[usize]) -> IsolationCase {
        IsolationCase {
            magnitude: m,
            verdict: v.map(<[usize]>::to_vec),
            planted: p.to_vec(),
        }
    }

    #[test]
    fn exact_matches_give_full_recall() {
        let r = isolation_recall(&[case(0.01, Some(&[3]), &[3]), case(0.04, Some(&[9, 8]), &[8, 9])]);
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|b| b.recall == 1.0 && b.partial == 1.0));
        assert_eq!((r[0].bucket, r[1].bucket), (100, 400));
    }

    #[test]
    fn superset_is_a_miss_with_partial_credit() {
        let r = isolation_recall(&[case(0.02, Some(&[4, 5]), &[4])]);
        assert_eq!(r[0].recall, 0.0);
        assert_eq!(r[0].partial, 0.5);
    }

    #[test]
    fn mixed_bucket_matches_hand_count() {
        let cases = vec![
            case(0.05, Some(&[1]), &[1]),
            case(0.05, Some(&[2]), &[2]),
            case(0.05, Some(&[3, 4]), &[3]),
            case(0.05, None, &[7]),
            case(0.05, Some(&[10]), &[11]),
            case(0.05, Some(&[12]), &[12]),
            case(0.05, Some(&[]), &[13]),
            case(0.05, Some(&[20, 21]), &[20, 21]),
            case(0.05, Some(&[20]), &[20, 21]),
            case(0.05, Some(&[30]), &[30]),
        ];
        let r = isolation_recall(&cases);
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].cases, r[0].exact), (10, 5));
        assert_eq!(r[0].recall, 0.5);
        assert!((r[0].partial - 0.6).abs() < 1e-12);
    }
}
