//! False demand injection on the aggregated forecast.
//!
//! Every attack spends a budget of `magnitude × controllable daily demand`
//! over its target pricing slots. The four kinds differ only in how the
//! budget is shaped:
//!
//! * `pulse`: equal share per slot;
//! * `scaling`: proportional to the genuine demand of each slot (a slot with
//!   no genuine demand gets the mean share, since multiplication cannot lift
//!   zero);
//! * `ramping`: triangular profile rising then falling over the slots;
//! * `random`: seeded uniform weights.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::ForecastHook;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Pulse,
    Scaling,
    Ramping,
    Random,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::Pulse,
        AttackKind::Scaling,
        AttackKind::Ramping,
        AttackKind::Random,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::Pulse => "pulse",
            AttackKind::Scaling => "scaling",
            AttackKind::Ramping => "ramping",
            AttackKind::Random => "random",
        }
    }

    fn needs_contiguous(&self) -> bool {
        matches!(self, AttackKind::Pulse | AttackKind::Ramping)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown attack kind '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Ascending pricing-slot indices.
    pub target_slots: Vec<usize>,
    /// Fraction of the community's controllable daily demand.
    pub magnitude: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub persistent: bool,
}

fn yes() -> bool {
    true
}

impl AttackSpec {
    pub fn pulse(target_slots: Vec<usize>, magnitude: f64) -> Self {
        Self {
            kind: AttackKind::Pulse,
            target_slots,
            magnitude,
            seed: 0,
            persistent: true,
        }
    }

    pub fn validate(&self, pricing_slots: usize) -> Result<()> {
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(Error::InvalidAttack(format!(
                "magnitude must be a non-negative fraction, got {}",
                self.magnitude
            )));
        }
        if self.target_slots.is_empty() {
            return Err(Error::InvalidAttack("no target slots".into()));
        }
        if let Some(&s) = self.target_slots.iter().find(|&&s| s >= pricing_slots) {
            return Err(Error::InvalidAttack(format!(
                "target slot {s} outside 0..{pricing_slots}"
            )));
        }
        if self.target_slots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidAttack(
                "target slots must be strictly ascending".into(),
            ));
        }
        if self.kind.needs_contiguous() && self.target_slots.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidAttack(format!(
                "{} attacks need contiguous target slots",
                self.kind
            )));
        }
        Ok(())
    }

    fn weights(&self, genuine: &[f64]) -> Vec<f64> {
        let n = self.target_slots.len();
        match self.kind {
            AttackKind::Pulse => vec![1.0; n],
            AttackKind::Scaling => {
                let positive: Vec<f64> = self
                    .target_slots
                    .iter()
                    .map(|&s| genuine[s])
                    .filter(|&v| v > 0.0)
                    .collect();
                let fill = if positive.is_empty() {
                    1.0
                } else {
                    positive.iter().sum::<f64>() / positive.len() as f64
                };
                self.target_slots
                    .iter()
                    .map(|&s| if genuine[s] > 0.0 { genuine[s] } else { fill })
                    .collect()
            }
            AttackKind::Ramping => (0..n).map(|j| (j + 1).min(n - j) as f64).collect(),
            AttackKind::Random => {
                let mut rng = seed::rng(self.seed, 0xA77A_C4);
                (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect()
            }
        }
    }
}

/// Injects the attack into `forecast`; returns `(attacked, fd)` where
/// `fd = attacked − forecast`.
pub fn forge(
    forecast: &[f64],
    spec: &AttackSpec,
    controllable_daily_demand: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.validate(forecast.len())?;
    let budget = spec.magnitude * controllable_daily_demand;
    if !(budget >= 0.0 && budget.is_finite()) || (spec.magnitude > 0.0 && budget <= 0.0) {
        return Err(Error::InvalidAttack(format!(
            "injection budget must be positive, got {budget}"
        )));
    }
    let weights = spec.weights(forecast);
    let total: f64 = weights.iter().sum();
    let mut fd = vec![0.0; forecast.len()];
    for (&slot, w) in spec.target_slots.iter().zip(&weights) {
        fd[slot] = budget * w / total;
    }
    let attacked = forecast.iter().zip(&fd).map(|(g, f)| g + f).collect();
    Ok((attacked, fd))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    /// Injected vector per optimisation iteration.
    pub injections: Vec<Vec<f64>>,
    pub cumulative_energy: f64,
}

/// Re-injects the attack every iteration (or only at iteration 0 when the
/// spec is not persistent).
#[derive(Clone, Debug)]
pub struct AttackHook {
    spec: AttackSpec,
    controllable_daily_demand: f64,
    trace: AttackTrace,
}

impl AttackHook {
    pub fn new(spec: AttackSpec, controllable_daily_demand: f64) -> Result<Self> {
        if !(controllable_daily_demand > 0.0) {
            return Err(Error::InvalidAttack(
                "controllable demand must be positive".into(),
            ));
        }
        Ok(Self {
            spec,
            controllable_daily_demand,
            trace: AttackTrace::default(),
        })
    }

    pub fn trace(&self) -> &AttackTrace {
        &self.trace
    }

    pub fn spec(&self) -> &AttackSpec {
        &self.spec
    }
}

pub fn attack_hook(spec: AttackSpec, controllable_daily_demand: f64) -> Result<AttackHook> {
    AttackHook::new(spec, controllable_daily_demand)
}

impl ForecastHook for AttackHook {
    fn apply(&mut self, iteration: usize, forecast: &[f64]) -> Vec<f64> {
        if iteration == 0 || self.spec.persistent {
            // Spec and budget were checked when the hook was built; only the
            // forecast length can still be wrong.
            if let Ok((attacked, fd)) = forge(forecast, &self.spec, self.controllable_daily_demand)
            {
                self.trace.cumulative_energy += fd.iter().sum::<f64>();
                self.trace.injections.push(fd);
                return attacked;
            }
        }
        self.trace.injections.push(vec![0.0; forecast.len()]);
        forecast.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn genuine() -> Vec<f64> {
        (0..48).map(|i| 1.0 + (i % 7) as f64).collect()
    }

    #[test]
    fn zero_magnitude_is_a_no_op() {
        let g = genuine();
        let (a, fd) = forge(&g, &AttackSpec::pulse(vec![3], 0.0), 100.0).unwrap();
        assert_eq!(a, g);
        assert!(fd.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_slot_pulse_adds_budget() {
        let g = genuine();
        let (a, fd) = forge(&g, &AttackSpec::pulse(vec![17], 0.05), 100.0).unwrap();
        assert_eq!(a[17], g[17] + 5.0);
        for i in (0..48).filter(|&i| i != 17) {
            assert_eq!(a[i], g[i]);
            assert_eq!(fd[i], 0.0);
        }
    }

    #[test]
    fn every_kind_spends_exactly_the_budget() {
        let g = genuine();
        for kind in AttackKind::ALL {
            let spec = AttackSpec {
                kind,
                target_slots: vec![20, 21, 22],
                magnitude: 0.07,
                seed: 11,
                persistent: true,
            };
            let (a, fd) = forge(&g, &spec, 250.0).unwrap();
            let spent: f64 = fd.iter().sum();
            assert!((spent - 17.5).abs() < 1e-9 * 17.5, "{kind}: {spent}");
            for i in 0..48 {
                assert!((a[i] - g[i] - fd[i]).abs() <= 1e-12 * a[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn shapes() {
        let g = genuine();
        let ramp = AttackSpec {
            kind: AttackKind::Ramping,
            target_slots: vec![10, 11, 12],
            magnitude: 0.04,
            seed: 0,
            persistent: true,
        };
        let (_, fd) = forge(&g, &ramp, 100.0).unwrap();
        assert_eq!(&fd[10..13], &[1.0, 2.0, 1.0]);

        let mut zeros = vec![0.0; 48];
        zeros[6] = 3.0;
        let scaling = AttackSpec {
            kind: AttackKind::Scaling,
            target_slots: vec![5, 6],
            ..ramp.clone()
        };
        let (_, fd) = forge(&zeros, &scaling, 100.0).unwrap();
        assert_eq!(fd[5], fd[6]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let g = genuine();
        assert!(forge(&g, &AttackSpec::pulse(vec![48], 0.1), 10.0).is_err());
        assert!(forge(&g, &AttackSpec::pulse(vec![3, 5], 0.1), 10.0).is_err());
        assert!(forge(&g, &AttackSpec::pulse(vec![3], -0.1), 10.0).is_err());
        assert!(forge(&g, &AttackSpec::pulse(vec![3], 0.1), 0.0).is_err());
        let random = AttackSpec {
            kind: AttackKind::Random,
            target_slots: vec![3, 5],
            magnitude: 0.1,
            seed: 1,
            persistent: true,
        };
        assert!(forge(&g, &random, 10.0).is_ok());
    }

    #[test]
    fn hook_persistence() {
        let g = genuine();
        let mut persistent = attack_hook(AttackSpec::pulse(vec![4], 0.1), 50.0).unwrap();
        for t in 0..3 {
            persistent.apply(t, &g);
        }
        let inj = &persistent.trace().injections;
        assert!(inj.iter().all(|fd| fd == &inj[0] && fd[4] == 5.0));
        assert!((persistent.trace().cumulative_energy - 15.0).abs() < 1e-12);

        let mut once = attack_hook(
            AttackSpec {
                persistent: false,
                ..AttackSpec::pulse(vec![4], 0.1)
            },
            50.0,
        )
        .unwrap();
        for t in 0..3 {
            once.apply(t, &g);
        }
        let inj = &once.trace().injections;
        assert_eq!(inj[0][4], 5.0);
        assert!(inj[1..].iter().all(|fd| fd.iter().all(|&v| v == 0.0)));
    }
}
