use serde::{Deserialize, Serialize};

use crate::domain::{ensure_valid, House, PriceSignal, Schedule, SlotGrid};
use crate::error::{check_len, Error, Result};

use super::cost::{total_bill, total_cost, total_penalty};
use super::pricing::{price_signal, PriceModel};
use super::schedule::{best_start, run_cost, IncrementalCost};

/// Transforms the genuine aggregate forecast before the utility prices it.
///
/// Attack injection and detection/mitigation are both expressed as hooks.
pub trait ForecastHook {
    fn apply(&mut self, iteration: usize, forecast: &[f64]) -> Vec<f64>;
}

/// Leaves the forecast untouched.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl ForecastHook for Identity {
    fn apply(&mut self, _iteration: usize, forecast: &[f64]) -> Vec<f64> {
        forecast.to_vec()
    }
}

impl<T: ForecastHook + ?Sized> ForecastHook for &mut T {
    fn apply(&mut self, iteration: usize, forecast: &[f64]) -> Vec<f64> {
        (**self).apply(iteration, forecast)
    }
}

/// Runs `.0` then feeds its output to `.1`.
impl<A: ForecastHook, B: ForecastHook> ForecastHook for (A, B) {
    fn apply(&mut self, iteration: usize, forecast: &[f64]) -> Vec<f64> {
        let first = self.0.apply(iteration, forecast);
        self.1.apply(iteration, &first)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrConfig {
    pub max_iterations: usize,
    pub convergence_eps: f64,
}

impl Default for DrConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_eps: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Forecast the utility priced (after hooks).
    pub forecast: Vec<f64>,
    /// Aggregate of the houses' actual schedules.
    pub genuine: Vec<f64>,
    pub prices: Vec<f64>,
    pub total_bill: f64,
    pub total_penalty: f64,
    pub total_cost: f64,
    /// Appliance moves made in the round that followed this record.
    pub moves: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrOutcome {
    pub schedules: Vec<Schedule>,
    pub forecast: Vec<f64>,
    pub genuine_forecast: Vec<f64>,
    pub prices: PriceSignal,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    /// Rescheduling rounds executed.
    pub iterations_used: usize,
}

impl DrOutcome {
    pub fn final_record(&self) -> &IterationRecord {
        self.trace.last().expect("trace always holds iteration 0")
    }
}

/// Iterative day-ahead price/schedule exchange.
///
/// Iteration 0 prices the preferred-start schedules. Each later round visits
/// houses in ascending id order; every appliance moves to the start that
/// minimises the exact community-cost increment it causes (bill change under
/// `model` plus its displacement penalty), seeing the aggregate as updated by
/// all earlier moves. Whatever the hooks added to or removed from the
/// aggregate at the start of the round is carried as a fixed offset through
/// the round. Stops when a round moves nothing, when the relative change in
/// total cost drops below `convergence_eps`, or after `max_iterations`
/// records.
pub fn run_dr(
    houses: &[House],
    grid: &SlotGrid,
    model: &PriceModel,
    config: &DrConfig,
    hook: &mut dyn ForecastHook,
) -> Result<DrOutcome> {
    model.validate()?;
    if config.max_iterations == 0 {
        return Err(Error::Config("max_iterations must be at least 1".into()));
    }
    for house in houses {
        ensure_valid(house, grid)?;
    }

    let mut order: Vec<usize> = (0..houses.len()).collect();
    order.sort_by_key(|&i| houses[i].id);

    let mut starts: Vec<Vec<usize>> = houses
        .iter()
        .map(|h| h.appliances.iter().map(|a| a.preferred_start).collect())
        .collect();
    let mut genuine = vec![0.0; grid.pricing_slots()];
    for (house, house_starts) in houses.iter().zip(&starts) {
        for (a, &s) in house.appliances.iter().zip(house_starts) {
            for (p, e) in a.pricing_energy(s, grid) {
                genuine[p] += e;
            }
        }
    }

    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    let mut last_prices;
    loop {
        let iteration = trace.len();
        let received = hook.apply(iteration, &genuine);
        check_len(grid.pricing_slots(), received.len())?;
        let priced: Vec<f64> = received.iter().map(|v| v.max(0.0)).collect();
        let prices = price_signal(&priced, model, grid)?;
        let schedules = to_schedules(houses, &starts);
        let bill = total_bill(&priced, &prices)?;
        let penalty = total_penalty(houses, &schedules)?;
        let cost = total_cost(bill, penalty)?;
        trace.push(IterationRecord {
            forecast: priced.clone(),
            genuine: genuine.clone(),
            prices: prices.values().to_vec(),
            total_bill: bill,
            total_penalty: penalty,
            total_cost: cost,
            moves: 0,
        });
        last_prices = prices;

        if let [.., prev, last] = trace.as_slice() {
            let rel = (last.total_cost - prev.total_cost).abs() / prev.total_cost.abs().max(1e-300);
            if prev.moves == 0 || rel < config.convergence_eps {
                converged = true;
                break;
            }
        }
        if trace.len() >= config.max_iterations {
            break;
        }

        let offset: Vec<f64> = priced.iter().zip(&genuine).map(|(p, g)| p - g).collect();
        let mut working = priced;
        let mut moves = 0;
        for &h in &order {
            let house = &houses[h];
            for (a, start) in house.appliances.iter().zip(starts[h].iter_mut()) {
                if !a.is_flexible() {
                    continue;
                }
                let current = a.pricing_energy(*start, grid);
                let mut base = working.clone();
                for &(p, e) in &current {
                    base[p] -= e;
                }
                let inc = IncrementalCost {
                    base: &base,
                    model,
                };
                let current_cost = run_cost(a, *start, &inc, grid);
                let (best, best_cost) = best_start(a, &inc, grid);
                let tol = 1e-12 * current_cost.abs().max(1.0);
                if best != *start && best_cost < current_cost - tol {
                    for &(p, e) in &current {
                        genuine[p] -= e;
                    }
                    for (p, e) in a.pricing_energy(best, grid) {
                        genuine[p] += e;
                    }
                    *start = best;
                    moves += 1;
                    for (w, (g, o)) in working.iter_mut().zip(genuine.iter().zip(&offset)) {
                        *w = g + o;
                    }
                }
            }
        }
        trace.last_mut().expect("pushed above").moves = moves;
        rounds += 1;
    }

    let last = trace.last().expect("at least one record");
    Ok(DrOutcome {
        schedules: to_schedules(houses, &starts),
        forecast: last.forecast.clone(),
        genuine_forecast: last.genuine.clone(),
        prices: last_prices,
        converged,
        iterations_used: rounds,
        trace,
    })
}

fn to_schedules(houses: &[House], starts: &[Vec<usize>]) -> Vec<Schedule> {
    houses
        .iter()
        .zip(starts)
        .map(|(h, s)| Schedule {
            starts: h.appliances.iter().map(|a| a.id).zip(s.iter().copied()).collect(),
        })
        .collect()
}
