use crate::domain::{House, PriceSignal, Schedule};
use crate::error::{check_len, Error, Result};

/// Σ_p demand_p × price_p.
pub fn total_bill(forecast: &[f64], prices: &PriceSignal) -> Result<f64> {
    check_len(prices.len(), forecast.len())?;
    Ok(forecast
        .iter()
        .zip(prices.values())
        .map(|(d, p)| d * p)
        .sum())
}

/// Σ_h Σ_i |start − preferred| × penalty_factor.
pub fn total_penalty(houses: &[House], schedules: &[Schedule]) -> Result<f64> {
    check_len(houses.len(), schedules.len())?;
    let mut total = 0.0;
    for (house, schedule) in houses.iter().zip(schedules) {
        for a in &house.appliances {
            let start = schedule.start_of(a.id).ok_or_else(|| {
                Error::Precondition(format!(
                    "schedule of house {} has no start for appliance {}",
                    house.id, a.id
                ))
            })?;
            total += a.displacement_penalty(start);
        }
    }
    Ok(total)
}

pub fn total_cost(bill: f64, penalty: f64) -> Result<f64> {
    if !(bill >= 0.0 && penalty >= 0.0) {
        return Err(Error::Precondition(format!(
            "bill and penalty must be non-negative, got {bill} and {penalty}"
        )));
    }
    Ok(bill + penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Appliance;

    #[test]
    fn bill_is_dot_product() {
        let prices = PriceSignal::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(total_bill(&[2.0, 3.0], &prices).unwrap(), 8.0);
        assert_eq!(total_bill(&[0.0, 0.0], &prices).unwrap(), 0.0);
        assert!(total_bill(&[1.0], &prices).is_err());
    }

    fn house() -> House {
        House {
            id: 0,
            appliances: vec![Appliance {
                id: 7,
                demand_per_slot: 1.0,
                duration: 1,
                earliest_start: 0,
                latest_finish: 10,
                preferred_start: 3,
                penalty_factor: 0.5,
            }],
        }
    }

    #[test]
    fn penalty_counts_displacement() {
        let h = house();
        let at_pref = h.preferred_schedule();
        assert_eq!(total_penalty(&[h.clone()], &[at_pref]).unwrap(), 0.0);
        let mut moved = Schedule::default();
        moved.starts.insert(7, 5);
        assert_eq!(total_penalty(&[h.clone()], &[moved]).unwrap(), 1.0);
        assert!(total_penalty(&[h], &[Schedule::default()]).is_err());
    }

    #[test]
    fn cost_adds_and_scales() {
        assert_eq!(total_cost(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(total_cost(8.0, 1.0).unwrap(), 9.0);
        assert_eq!(total_cost(8.0 * 2.5, 2.5).unwrap(), 2.5 * total_cost(8.0, 1.0).unwrap());
        assert!(total_cost(-1.0, 0.0).is_err());
    }
}
