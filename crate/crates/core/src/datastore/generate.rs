use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attack::{forge, AttackKind, AttackSpec};
use crate::domain::{controllable_daily_demand, Appliance, House, SlotGrid};
use crate::engine::aggregate;
use crate::engine::house_profile;
use crate::error::{Error, Result};
use crate::seed;

/// Injection sizes as fractions of daily controllable demand, 0.1%–25%.
pub const MAGNITUDE_LADDER: [f64; 20] = [
    0.001, 0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.035, 0.04, 0.045, 0.05, 0.06, 0.07, 0.08, 0.09,
    0.10, 0.125, 0.15, 0.20, 0.25,
];

const SALT_PROFILE: u64 = 0x9E_0F11E;
const SALT_DAY: u64 = 0xDA_7E;
const SALT_ATTACK_DAYS: u64 = 0xA7_7AC4;

/// Everything that shapes a synthetic corpus. Ranges are inclusive
/// `[min, max]`; slot counts are in scheduling slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub grid: SlotGrid,
    pub houses: usize,
    pub days: usize,
    /// Distinct base communities; each day starts from one of them.
    pub profiles: usize,
    pub appliances_per_house: [usize; 2],
    pub demand_per_slot: [f64; 2],
    pub duration: [usize; 2],
    pub penalty_factor: [f64; 2],
    /// Slack added on each side of the preferred run.
    pub flexibility: [usize; 2],
    /// Share of appliances whose preferred start moves on a given day.
    pub jitter_fraction: f64,
    pub jitter_slots: usize,
    /// Relative day-to-day spread of appliance demand.
    pub demand_noise: f64,
    pub attacked_fraction: f64,
    pub magnitudes: Vec<f64>,
    pub attack_kinds: Vec<AttackKind>,
    /// Pricing slots per attack.
    pub attack_slots: [usize; 2],
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            grid: SlotGrid::default(),
            houses: 40,
            days: 200,
            profiles: 6,
            appliances_per_house: [3, 6],
            demand_per_slot: [0.2, 1.5],
            duration: [1, 8],
            penalty_factor: [0.002, 0.02],
            flexibility: [0, 16],
            jitter_fraction: 0.3,
            jitter_slots: 8,
            demand_noise: 0.05,
            attacked_fraction: 0.05,
            magnitudes: MAGNITUDE_LADDER.to_vec(),
            attack_kinds: vec![AttackKind::Pulse],
            attack_slots: [1, 1],
            seed: 0,
        }
    }
}

fn check_range<T: PartialOrd + Copy + std::fmt::Debug>(name: &str, r: [T; 2], min: T) -> Result<()> {
    if r[0] < min || r[1] < r[0] {
        Err(Error::Config(format!("{name} must satisfy {min:?} <= min <= max, got {r:?}")))
    } else {
        Ok(())
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.houses == 0 || self.days == 0 || self.profiles == 0 {
            return Err(Error::Config("houses, days and profiles must be positive".into()));
        }
        check_range("appliances_per_house", self.appliances_per_house, 1)?;
        check_range("duration", self.duration, 1)?;
        check_range("flexibility", self.flexibility, 0)?;
        check_range("attack_slots", self.attack_slots, 1)?;
        check_range("penalty_factor", self.penalty_factor, 0.0)?;
        check_range("demand_per_slot", self.demand_per_slot, f64::MIN_POSITIVE)?;
        if self.duration[1] > self.grid.day_len() {
            return Err(Error::Config("duration exceeds the day".into()));
        }
        if self.attack_slots[1] > self.grid.pricing_slots() {
            return Err(Error::Config("attack_slots exceeds the pricing slots".into()));
        }
        for (name, v) in [
            ("jitter_fraction", self.jitter_fraction),
            ("attacked_fraction", self.attacked_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.demand_noise) {
            return Err(Error::Config("demand_noise must lie in [0, 1)".into()));
        }
        if self.attacked_fraction > 0.0 {
            if self.magnitudes.is_empty() || self.attack_kinds.is_empty() {
                return Err(Error::Config("attacks need magnitudes and attack_kinds".into()));
            }
            if self.magnitudes.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
                return Err(Error::Config("magnitudes must be positive".into()));
            }
        }
        Ok(())
    }

    /// Days `0..train_len()` form the training period.
    pub fn train_len(&self) -> usize {
        self.days * 2 / 3
    }
}

/// One generated day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Day {
    pub day_id: u32,
    pub houses: Vec<House>,
    /// Preferred-start aggregate per pricing slot.
    pub genuine: Vec<f64>,
    pub attack: Option<AttackSpec>,
    /// What the utility receives: `genuine`, plus the injection if attacked.
    pub received: Vec<f64>,
}

impl Day {
    pub fn is_attacked(&self) -> bool {
        self.attack.is_some()
    }
}

pub(super) fn preferred_aggregate(houses: &[House], grid: &SlotGrid) -> Result<Vec<f64>> {
    let profiles: Vec<Vec<f64>> = houses
        .iter()
        .map(|h| house_profile(h, &h.preferred_schedule(), grid))
        .collect();
    aggregate(&profiles, grid)
}

/// Morning and evening peaks over a low daytime floor, in scheduling slots.
fn diurnal_start(rng: &mut ChaCha8Rng, day_len: usize) -> f64 {
    let d = day_len as f64;
    let u: f64 = rng.gen();
    let (centre, spread) = if u < 0.35 {
        (0.31 * d, 0.04 * d)
    } else if u < 0.8 {
        (0.79 * d, 0.06 * d)
    } else {
        return rng.gen_range(0.0..d);
    };
    Normal::new(centre, spread).expect("positive spread").sample(rng)
}

fn base_house(id: u32, cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> House {
    let d = cfg.grid.day_len();
    let n = rng.gen_range(cfg.appliances_per_house[0]..=cfg.appliances_per_house[1]);
    let appliances = (0..n as u32)
        .map(|a| {
            let duration = rng.gen_range(cfg.duration[0]..=cfg.duration[1]);
            let last = d - duration;
            let preferred = (diurnal_start(rng, d).round().max(0.0) as usize).min(last);
            let before = rng.gen_range(cfg.flexibility[0]..=cfg.flexibility[1]);
            let after = rng.gen_range(cfg.flexibility[0]..=cfg.flexibility[1]);
            Appliance {
                id: a,
                demand_per_slot: rng.gen_range(cfg.demand_per_slot[0]..=cfg.demand_per_slot[1]),
                duration,
                earliest_start: preferred.saturating_sub(before),
                latest_finish: (preferred + duration - 1 + after).min(d - 1),
                preferred_start: preferred,
                penalty_factor: rng.gen_range(cfg.penalty_factor[0]..=cfg.penalty_factor[1]),
            }
        })
        .collect();
    House { id, appliances }
}

fn daily_variant(base: &[House], cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<House> {
    let j = cfg.jitter_slots as i64;
    base.iter()
        .map(|h| {
            let mut h = h.clone();
            for a in &mut h.appliances {
                if cfg.demand_noise > 0.0 {
                    a.demand_per_slot *= 1.0 + rng.gen_range(-cfg.demand_noise..=cfg.demand_noise);
                }
                if j > 0 && rng.gen_bool(cfg.jitter_fraction) {
                    let shifted = a.preferred_start as i64 + rng.gen_range(-j..=j);
                    let hi = a.latest_start() as i64;
                    a.preferred_start = shifted.clamp(a.earliest_start as i64, hi) as usize;
                }
            }
            h
        })
        .collect()
}

fn attack_for(day_id: u32, cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> AttackSpec {
    let p = cfg.grid.pricing_slots();
    let n = rng.gen_range(cfg.attack_slots[0]..=cfg.attack_slots[1]);
    let first = rng.gen_range(0..=p - n);
    AttackSpec {
        kind: *cfg.attack_kinds.choose(rng).expect("validated non-empty"),
        target_slots: (first..first + n).collect(),
        magnitude: *cfg.magnitudes.choose(rng).expect("validated non-empty"),
        seed: attack_seed(cfg.seed, day_id),
        persistent: true,
    }
}

/// Seed of the weight draw for random-kind attacks on `day_id`.
pub fn attack_seed(corpus_seed: u64, day_id: u32) -> u64 {
    seed::mix(corpus_seed ^ SALT_ATTACK_DAYS, day_id as u64)
}

/// Builds the corpus of `cfg.days` days. The attacked days are an exact
/// `round(attacked_fraction × days)` draw without replacement.
pub fn generate(cfg: &GeneratorConfig) -> Result<super::Corpus> {
    cfg.validate()?;
    let mut prng = seed::rng(cfg.seed, SALT_PROFILE);
    let profiles: Vec<Vec<House>> = (0..cfg.profiles)
        .map(|_| (0..cfg.houses as u32).map(|h| base_house(h, cfg, &mut prng)).collect())
        .collect();

    let n_attacked = (cfg.attacked_fraction * cfg.days as f64).round() as usize;
    let mut order: Vec<usize> = (0..cfg.days).collect();
    order.shuffle(&mut seed::rng(cfg.seed, SALT_ATTACK_DAYS));
    let mut attacked = vec![false; cfg.days];
    for &d in order.iter().take(n_attacked) {
        attacked[d] = true;
    }

    let days = (0..cfg.days)
        .map(|d| {
            let day_id = d as u32;
            let mut rng = seed::rng(cfg.seed ^ SALT_DAY, d as u64);
            let base = &profiles[rng.gen_range(0..profiles.len())];
            let houses = daily_variant(base, cfg, &mut rng);
            let genuine = preferred_aggregate(&houses, &cfg.grid)?;
            let (attack, received) = if attacked[d] {
                let spec = attack_for(day_id, cfg, &mut rng);
                let (received, _) = forge(&genuine, &spec, controllable_daily_demand(&houses))?;
                (Some(spec), received)
            } else {
                (None, genuine.clone())
            };
            Ok(Day {
                day_id,
                houses,
                genuine,
                attack,
                received,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let train = cfg.train_len();
    let reference_demand = reference_demand(&days[..train.max(1).min(days.len())]);
    Ok(super::Corpus {
        config: cfg.clone(),
        days,
        reference_demand,
    })
}

/// Mean genuine demand per pricing slot over `days`.
pub(super) fn reference_demand(days: &[Day]) -> f64 {
    let (sum, n) = days
        .iter()
        .flat_map(|d| d.genuine.iter())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 || sum <= 0.0 {
        1.0
    } else {
        sum / n as f64
    }
}
