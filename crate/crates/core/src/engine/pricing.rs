use serde::{Deserialize, Serialize};

use crate::domain::{PriceSignal, SlotGrid};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceForm {
    Linear,
    Quadratic,
}

/// Monotone demand-to-unit-price map used by the utility.
///
/// `linear`: `base + slope · d / reference_demand`;
/// `quadratic`: `base + slope · (d / reference_demand)²`. Prices never drop
/// below `floor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceModel {
    pub form: PriceForm,
    pub base: f64,
    pub slope: f64,
    pub reference_demand: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_floor() -> f64 {
    1e-6
}

impl Default for PriceModel {
    fn default() -> Self {
        Self {
            form: PriceForm::Quadratic,
            base: 0.1,
            slope: 0.1,
            reference_demand: 1.0,
            floor: default_floor(),
        }
    }
}

impl PriceModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.base >= 0.0
            && self.slope > 0.0
            && self.reference_demand > 0.0
            && self.floor > 0.0
            && [self.base, self.slope, self.reference_demand, self.floor]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid price model {self:?}")))
        }
    }

    pub fn with_reference_demand(mut self, reference_demand: f64) -> Self {
        self.reference_demand = reference_demand;
        self
    }

    fn raw_price(&self, demand: f64) -> f64 {
        let x = demand / self.reference_demand;
        let price = match self.form {
            PriceForm::Linear => self.base + self.slope * x,
            PriceForm::Quadratic => self.base + self.slope * x * x,
        };
        price.max(self.floor)
    }

    /// Cost of serving `demand` in one slot: `demand × unit_price(demand)`.
    ///
    /// Convex in `demand`; negative inputs are treated as zero.
    pub fn slot_cost(&self, demand: f64) -> f64 {
        let d = demand.max(0.0);
        d * self.raw_price(d)
    }
}

pub fn unit_price(demand: f64, model: &PriceModel) -> Result<f64> {
    if !(demand >= 0.0) {
        return Err(Error::Precondition(format!(
            "demand must be non-negative, got {demand}"
        )));
    }
    Ok(model.raw_price(demand))
}

/// Element-wise unit price of every pricing slot.
pub fn price_signal(forecast: &[f64], model: &PriceModel, grid: &SlotGrid) -> Result<PriceSignal> {
    check_len(grid.pricing_slots(), forecast.len())?;
    let values = forecast
        .iter()
        .map(|&d| unit_price(d, model))
        .collect::<Result<Vec<_>>>()?;
    PriceSignal::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(form: PriceForm, base: f64, slope: f64) -> PriceModel {
        PriceModel {
            form,
            base,
            slope,
            reference_demand: 4.0,
            floor: 1e-6,
        }
    }

    #[test]
    fn zero_demand_prices_at_base() {
        for form in [PriceForm::Linear, PriceForm::Quadratic] {
            assert_eq!(unit_price(0.0, &model(form, 1.0, 2.0)).unwrap(), 1.0);
        }
    }

    #[test]
    fn reference_demand_normalises() {
        assert_eq!(unit_price(4.0, &model(PriceForm::Linear, 1.0, 2.0)).unwrap(), 3.0);
        assert_eq!(
            unit_price(8.0, &model(PriceForm::Quadratic, 0.5, 1.0)).unwrap(),
            4.5
        );
    }

    #[test]
    fn negative_demand_is_rejected() {
        assert!(unit_price(-1.0, &PriceModel::default()).is_err());
    }

    #[test]
    fn zero_base_is_floored() {
        let m = model(PriceForm::Quadratic, 0.0, 1.0);
        assert_eq!(unit_price(0.0, &m).unwrap(), 1e-6);
    }

    #[test]
    fn signal_is_elementwise() {
        let g = SlotGrid::new(4, 2).unwrap();
        let m = model(PriceForm::Quadratic, 1.0, 2.0);
        let flat = price_signal(&[0.0; 4], &m, &g).unwrap();
        assert_eq!(flat.values(), &[1.0; 4]);

        let f = [1.0, 5.0, 2.0, 3.0];
        let permuted = [3.0, 2.0, 5.0, 1.0];
        let a = price_signal(&f, &m, &g).unwrap();
        let b = price_signal(&permuted, &m, &g).unwrap();
        let mut a_rev = a.values().to_vec();
        a_rev.reverse();
        assert_eq!(a_rev, b.values());

        let pulse = [1.0, 1.0, 9.0, 1.0];
        let p = price_signal(&pulse, &m, &g).unwrap();
        let argmax = p
            .values()
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 2);
        assert!(price_signal(&[1.0; 3], &m, &g).is_err());
    }
}
