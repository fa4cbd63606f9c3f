use gridguard::attack::{attack_hook, forge, AttackKind, AttackSpec};
use gridguard::detect::{spectral_saliency, ResidualOrder};
use gridguard::domain::{controllable_daily_demand, Appliance, House, PriceSignal, SlotGrid};
use gridguard::engine::{run_dr, run_cost, schedule_house, DrConfig, Identity, PriceModel};
use gridguard::isolate::local_outlier_factors;
use proptest::prelude::*;

fn grid() -> impl Strategy<Value = SlotGrid> {
    (2usize..=12, 2usize..=3).prop_map(|(p, m)| SlotGrid::new(p, m).unwrap())
}

fn appliance(id: u32, day_len: usize) -> impl Strategy<Value = Appliance> {
    (1..=day_len.min(6))
        .prop_flat_map(move |dur| {
            let last = day_len - dur;
            (Just(dur), 0..=last).prop_flat_map(move |(dur, earliest)| {
                (Just(dur), Just(earliest), earliest..=last)
            })
        })
        .prop_flat_map(move |(dur, earliest, latest_start)| {
            (
                Just(dur),
                Just(earliest),
                Just(latest_start),
                earliest..=latest_start,
                0.1f64..2.0,
                0.0f64..0.05,
            )
        })
        .prop_map(move |(duration, earliest_start, latest_start, preferred_start, demand, pf)| Appliance {
            id,
            demand_per_slot: demand,
            duration,
            earliest_start,
            latest_finish: latest_start + duration - 1,
            preferred_start,
            penalty_factor: pf,
        })
}

fn community() -> impl Strategy<Value = (SlotGrid, Vec<House>)> {
    grid().prop_flat_map(|g| {
        let d = g.day_len();
        let house = move |id: u32| {
            prop::collection::vec(0u32..1, 1..=4).prop_flat_map(move |ids| {
                ids.iter()
                    .enumerate()
                    .map(|(i, _)| appliance(i as u32, d))
                    .collect::<Vec<_>>()
                    .prop_map(move |appliances| House { id, appliances })
            })
        };
        (Just(g), (1usize..=5).prop_flat_map(move |n| {
            (0..n as u32).map(house).collect::<Vec<_>>()
        }))
    })
}

fn model_for(houses: &[House], grid: &SlotGrid) -> PriceModel {
    let mean = controllable_daily_demand(houses) / grid.pricing_slots() as f64;
    PriceModel::default().with_reference_demand(mean.max(1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn house_schedule_matches_per_appliance_brute_force(
        (g, houses) in community(),
        raw in prop::collection::vec(0.01f64..1.0, 12),
    ) {
        let prices = PriceSignal::new(raw[..g.pricing_slots()].to_vec()).unwrap();
        for house in &houses {
            let (schedule, _) = schedule_house(house, &prices, &g).unwrap();
            for a in &house.appliances {
                let chosen = schedule.start_of(a.id).unwrap();
                let best = (a.earliest_start..=a.latest_start())
                    .map(|s| {
                        let bill: f64 = (s..s + a.duration)
                            .map(|t| a.demand_per_slot * prices.values()[t / g.sub_slots()])
                            .sum();
                        bill + s.abs_diff(a.preferred_start) as f64 * a.penalty_factor
                    })
                    .fold(f64::INFINITY, f64::min);
                let got = run_cost(a, chosen, &prices, &g);
                prop_assert!((got - best).abs() <= 1e-9 * best.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dr_conserves_demand_and_never_raises_cost((g, houses) in community()) {
        let model = model_for(&houses, &g);
        let out = run_dr(&houses, &g, &model, &DrConfig::default(), &mut Identity).unwrap();
        let total = controllable_daily_demand(&houses);
        for rec in &out.trace {
            let s: f64 = rec.genuine.iter().sum();
            prop_assert!((s - total).abs() <= 1e-9 * total);
        }
        for w in out.trace.windows(2) {
            prop_assert!(w[1].total_cost <= w[0].total_cost + 1e-9 * w[0].total_cost);
        }
        for (house, schedule) in houses.iter().zip(&out.schedules) {
            prop_assert!(schedule.is_feasible_for(house));
        }
    }

    #[test]
    fn persistent_pulse_rides_on_every_iteration(
        (g, houses) in community(),
        magnitude in 0.001f64..0.3,
        slot_frac in 0.0f64..1.0,
    ) {
        let model = model_for(&houses, &g);
        let slot = ((g.pricing_slots() - 1) as f64 * slot_frac).round() as usize;
        let ctrl = controllable_daily_demand(&houses);
        let mut hook = attack_hook(AttackSpec::pulse(vec![slot], magnitude), ctrl).unwrap();
        let out = run_dr(&houses, &g, &model, &DrConfig::default(), &mut hook).unwrap();
        for rec in &out.trace {
            for (p, (f, gen)) in rec.forecast.iter().zip(&rec.genuine).enumerate() {
                let expect = if p == slot { gen + magnitude * ctrl } else { *gen };
                prop_assert!((f - expect).abs() <= 1e-9 * expect.max(1.0));
            }
            let s: f64 = rec.genuine.iter().sum();
            prop_assert!((s - ctrl).abs() <= 1e-9 * ctrl);
        }
    }

    #[test]
    fn forged_injection_spends_exactly_the_budget(
        forecast in prop::collection::vec(0.0f64..10.0, 8..48),
        magnitude in 0.0f64..0.5,
        ctrl in 1.0f64..100.0,
        kind in prop::sample::select(vec![AttackKind::Pulse, AttackKind::Scaling, AttackKind::Ramping, AttackKind::Random]),
        first in 0usize..4,
        len in 1usize..4,
    ) {
        let slots: Vec<usize> = (first..first + len).collect();
        let spec = AttackSpec { kind, ..AttackSpec::pulse(slots.clone(), magnitude) };
        let (attacked, fd) = forge(&forecast, &spec, ctrl).unwrap();
        let spent: f64 = fd.iter().sum();
        prop_assert!((spent - magnitude * ctrl).abs() <= 1e-9 * ctrl);
        for (p, v) in fd.iter().enumerate() {
            prop_assert!(*v >= 0.0);
            if !slots.contains(&p) {
                prop_assert_eq!(*v, 0.0);
                prop_assert_eq!(attacked[p], forecast[p]);
            }
        }
    }

    #[test]
    fn saliency_commutes_with_circular_shift(
        residual in prop::collection::vec(-5.0f64..5.0, 16..64),
        shift in 0usize..64,
    ) {
        let n = residual.len();
        let k = shift % n;
        let shifted: Vec<f64> = (0..n).map(|i| residual[(i + n - k) % n]).collect();
        let a = spectral_saliency(&residual, 3, ResidualOrder::LogMinusAverage).unwrap();
        let b = spectral_saliency(&shifted, 3, ResidualOrder::LogMinusAverage).unwrap();
        for i in 0..n {
            prop_assert!((a.values[i] - b.values[(i + k) % n]).abs() <= 1e-7);
        }
    }

    #[test]
    fn lof_is_invariant_to_translation_and_scale(
        points in prop::collection::btree_set(0u32..10_000, 6..30),
        offset in -100.0f64..100.0,
        scale in 0.1f64..10.0,
        k in 1usize..5,
    ) {
        let pts: Vec<f64> = points.iter().map(|&v| v as f64 / 100.0).collect();
        prop_assume!(k < pts.len());
        let moved: Vec<f64> = pts.iter().map(|v| v * scale + offset).collect();
        let a = local_outlier_factors(&pts, k).unwrap();
        let b = local_outlier_factors(&moved, k).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}
