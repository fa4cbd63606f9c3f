use crate::domain::{ensure_valid, Appliance, House, PriceSignal, Schedule, SlotGrid};
use crate::error::{check_len, Result};

use super::pricing::PriceModel;

/// Prices the energy an appliance run places in each pricing slot.
pub trait RunCost {
    /// Cost of the sparse per-pricing-slot energies of one run.
    fn energy_cost(&self, energy: &[(usize, f64)]) -> f64;
}

/// Price-taking tariff: energy × the slot's unit price.
impl RunCost for PriceSignal {
    fn energy_cost(&self, energy: &[(usize, f64)]) -> f64 {
        energy.iter().map(|&(p, e)| e * self.values()[p]).sum()
    }
}

/// Exact change in community bill caused by adding a run on top of `base`,
/// i.e. `Σ_p F(base_p + e_p) − F(base_p)` with `F(d) = d · unit_price(d)`.
pub struct IncrementalCost<'a> {
    pub base: &'a [f64],
    pub model: &'a PriceModel,
}

impl RunCost for IncrementalCost<'_> {
    fn energy_cost(&self, energy: &[(usize, f64)]) -> f64 {
        energy
            .iter()
            .map(|&(p, e)| {
                let b = self.base[p];
                self.model.slot_cost(b + e) - self.model.slot_cost(b)
            })
            .sum()
    }
}

/// Bill plus displacement penalty of starting `appliance` at `start`.
pub fn run_cost(appliance: &Appliance, start: usize, cost: &impl RunCost, grid: &SlotGrid) -> f64 {
    cost.energy_cost(&appliance.pricing_energy(start, grid)) + appliance.displacement_penalty(start)
}

const TIE_TOLERANCE: f64 = 1e-12;

pub(crate) fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Cheapest feasible start; ties go to the smallest displacement, then the
/// earliest slot.
pub fn best_start(appliance: &Appliance, cost: &impl RunCost, grid: &SlotGrid) -> (usize, f64) {
    let mut best: Option<(usize, f64)> = None;
    for s in appliance.earliest_start..=appliance.latest_start() {
        let c = run_cost(appliance, s, cost, grid);
        best = match best {
            None => Some((s, c)),
            Some((bs, bc)) => {
                let better = if nearly_equal(c, bc) {
                    s.abs_diff(appliance.preferred_start) < bs.abs_diff(appliance.preferred_start)
                } else {
                    c < bc
                };
                if better {
                    Some((s, c))
                } else {
                    Some((bs, bc))
                }
            }
        };
    }
    best.expect("validated appliance has a non-empty window")
}

/// Per-scheduling-slot demand of `house` under `schedule`.
pub fn house_profile(house: &House, schedule: &Schedule, grid: &SlotGrid) -> Vec<f64> {
    let mut profile = vec![0.0; grid.day_len()];
    for a in &house.appliances {
        let start = schedule.start_of(a.id).unwrap_or(a.preferred_start);
        for slot in &mut profile[start..start + a.duration] {
            *slot += a.demand_per_slot;
        }
    }
    profile
}

/// Price-taking best response of one house to a day-ahead price signal.
///
/// Appliances are independent under a fixed price signal, so each is placed
/// at its own argmin.
pub fn schedule_house(
    house: &House,
    prices: &PriceSignal,
    grid: &SlotGrid,
) -> Result<(Schedule, Vec<f64>)> {
    ensure_valid(house, grid)?;
    check_len(grid.pricing_slots(), prices.len())?;
    let schedule = Schedule {
        starts: house
            .appliances
            .iter()
            .map(|a| (a.id, best_start(a, prices, grid).0))
            .collect(),
    };
    let profile = house_profile(house, &schedule, grid);
    Ok((schedule, profile))
}

/// Sums per-house scheduling-slot profiles into a pricing-slot forecast.
pub fn aggregate(profiles: &[Vec<f64>], grid: &SlotGrid) -> Result<Vec<f64>> {
    let mut total = vec![0.0; grid.day_len()];
    for profile in profiles {
        check_len(grid.day_len(), profile.len())?;
        for (t, v) in total.iter_mut().zip(profile) {
            *t += v;
        }
    }
    grid.to_pricing(&total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SlotGrid {
        SlotGrid::new(8, 2).unwrap()
    }

    fn app(id: u32, earliest: usize, preferred: usize, latest: usize, pf: f64) -> Appliance {
        Appliance {
            id,
            demand_per_slot: 1.0,
            duration: 2,
            earliest_start: earliest,
            latest_finish: latest,
            preferred_start: preferred,
            penalty_factor: pf,
        }
    }

    #[test]
    fn flat_prices_keep_preferred_start() {
        let h = House {
            id: 0,
            appliances: vec![app(1, 0, 6, 15, 0.1)],
        };
        let prices = PriceSignal::new(vec![1.0; 8]).unwrap();
        let (s, profile) = schedule_house(&h, &prices, &grid()).unwrap();
        assert_eq!(s.start_of(1), Some(6));
        assert_eq!(profile.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn zero_penalty_moves_into_cheapest_slot() {
        let h = House {
            id: 0,
            appliances: vec![app(1, 0, 2, 15, 0.0)],
        };
        let mut p = vec![2.0; 8];
        p[5] = 0.5;
        let prices = PriceSignal::new(p).unwrap();
        let (s, _) = schedule_house(&h, &prices, &grid()).unwrap();
        assert_eq!(s.start_of(1), Some(10));
    }

    #[test]
    fn ties_prefer_small_displacement_then_early_start() {
        let a = app(1, 0, 6, 15, 0.0);
        let prices = PriceSignal::new(vec![1.0; 8]).unwrap();
        assert_eq!(best_start(&a, &prices, &grid()).0, 6);
        // 4 and 8 both sit two slots from preferred at equal cost.
        let mut p = vec![5.0; 8];
        p[2] = 1.0;
        p[4] = 1.0;
        let prices = PriceSignal::new(p).unwrap();
        assert_eq!(best_start(&a, &prices, &grid()).0, 4);
    }

    #[test]
    fn invalid_house_is_rejected() {
        let h = House {
            id: 3,
            appliances: vec![app(1, 5, 2, 15, 0.0)],
        };
        let prices = PriceSignal::new(vec![1.0; 8]).unwrap();
        assert!(schedule_house(&h, &prices, &grid()).is_err());
    }

    #[test]
    fn aggregate_sums_houses_then_pairs() {
        let g = SlotGrid::new(2, 2).unwrap();
        let one = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(aggregate(&[one.clone()], &g).unwrap(), vec![3.0, 7.0]);
        assert_eq!(aggregate(&[one.clone(), one.clone()], &g).unwrap(), vec![6.0, 14.0]);
        assert_eq!(aggregate(&[], &g).unwrap(), vec![0.0, 0.0]);
        assert!(aggregate(&[vec![1.0]], &g).is_err());
    }

    #[test]
    fn incremental_cost_matches_direct_difference() {
        let model = PriceModel::default().with_reference_demand(3.0);
        let base = [2.0, 4.0];
        let cost = IncrementalCost {
            base: &base,
            model: &model,
        };
        let got = cost.energy_cost(&[(0, 1.0), (1, 0.5)]);
        let want = model.slot_cost(3.0) - model.slot_cost(2.0) + model.slot_cost(4.5)
            - model.slot_cost(4.0);
        assert!((got - want).abs() < 1e-15);
    }
}
