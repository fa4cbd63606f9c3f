//! Day-ahead pricing, per-house scheduling, the community optimisation loop
//! and the bill/penalty/cost algebra.

mod cost;
mod pricing;
mod run;
mod schedule;

pub use cost::{total_bill, total_cost, total_penalty};
pub use pricing::{price_signal, unit_price, PriceForm, PriceModel};
pub use run::{run_dr, DrConfig, DrOutcome, ForecastHook, Identity, IterationRecord};
pub use schedule::{
    aggregate, best_start, house_profile, run_cost, schedule_house, IncrementalCost, RunCost,
};
