use ndarray::Array1;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fastcharge::controllers::{isotonic_non_decreasing, lookup_vmax, map_from_observations, VoltageSohMap};
use fastcharge::degradation::{advance_sei_layer, irreversible_plating_guard, plating_rhs};
use fastcharge::io::{parse_trace, trace_csv};
use fastcharge::lifecycle::TracePoint;
use fastcharge::params::PlatingMode;
use fastcharge::rl::env::{reward, RewardConfig};
use fastcharge::rl::mlp::{soft_update, Mlp, OutputActivation};
use fastcharge::rl::td3::{td3_target, truncated_normal, ReplayBuffer, Transition};
use fastcharge::{Cell, CellParameters, GridResolution, StepConfig};

/// Strictly decreasing soh knots with non-decreasing voltages.
fn map_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.001f64..0.05, 0.0f64..0.02), 1..8).prop_map(|steps| {
        let mut soh = 1.0;
        let mut v = 4.1;
        steps
            .into_iter()
            .map(|(ds, dv)| {
                let p = (soh, v);
                soh -= ds;
                v += dv;
                p
            })
            .collect()
    })
}

fn fresh_cell(soc: f64) -> Cell {
    Cell::new(CellParameters::lg_m50(), GridResolution::default(), StepConfig::default(), soc).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lookup_is_bounded_and_monotone(pts in map_points(), a in 0.5f64..1.1, b in 0.5f64..1.1) {
        let map = VoltageSohMap::new(pts.clone()).unwrap();
        let (lo, hi) = (pts[0].1, pts[pts.len() - 1].1);
        let va = lookup_vmax(&map, a).unwrap();
        let vb = lookup_vmax(&map, b).unwrap();
        prop_assert!(va >= lo - 1e-12 && va <= hi + 1e-12);
        if a <= b {
            prop_assert!(va >= vb - 1e-12);
        }
        for &(s, v) in &pts {
            prop_assert!((lookup_vmax(&map, s).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn map_text_round_trip(pts in map_points()) {
        let map = VoltageSohMap::new(pts).unwrap();
        let back = VoltageSohMap::from_text(&map.to_text()).unwrap();
        prop_assert_eq!(back.points().len(), map.points().len());
        for (x, y) in back.points().iter().zip(map.points()) {
            prop_assert!((x.0 - y.0).abs() <= 1e-5 * y.0.abs());
            prop_assert!((x.1 - y.1).abs() <= 1e-5 * y.1.abs());
        }
    }

    #[test]
    fn isotonic_fit_is_monotone_and_keeps_the_weighted_mean(
        data in prop::collection::vec((-5.0f64..5.0, 0.1f64..3.0), 1..40)
    ) {
        let (v, w): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
        let fit = isotonic_non_decreasing(&v, &w);
        prop_assert_eq!(fit.len(), v.len());
        for p in fit.windows(2) {
            prop_assert!(p[1] >= p[0] - 1e-12);
        }
        let mean = |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((mean(&fit) - mean(&v)).abs() < 1e-9);
    }

    #[test]
    fn maps_from_noisy_observations_are_valid(
        obs in prop::collection::vec((0.8f64..1.0, 4.1f64..4.25), 1..200)
    ) {
        let map = map_from_observations(&obs).unwrap();
        for p in map.points().windows(2) {
            prop_assert!(p[1].0 < p[0].0 && p[1].1 >= p[0].1);
        }
    }

    #[test]
    fn sei_advance_composes_and_grows(l in 1e-9f64..1e-7, k in 1e-24f64..1e-20, a in 0.0f64..1e5, b in 0.0f64..1e5) {
        let two = advance_sei_layer(advance_sei_layer(l, k, a), k, b);
        let one = advance_sei_layer(l, k, a + b);
        prop_assert!((two - one).abs() <= 1e-12 * one);
        prop_assert!(one >= l);
    }

    #[test]
    fn plating_rates_sum_to_the_deposition_flux(c_li in 0.0f64..100.0, l in 1e-9f64..1e-7, n in -1e-6f64..1e-6) {
        let p = CellParameters::lg_m50();
        let (d_li, d_dli) = plating_rhs(c_li, 0.0, l, n, &p);
        let total = -p.a_neg() * n;
        prop_assert!((d_li + d_dli - total).abs() <= 1e-12 * total.abs().max(1e-30) + 1e-300);
        prop_assert!(d_dli >= 0.0);
        prop_assert!(irreversible_plating_guard(n, PlatingMode::Irreversible) <= 0.0);
        prop_assert_eq!(irreversible_plating_guard(n, PlatingMode::Reversible), n);
    }

    #[test]
    fn reward_components_never_positive(
        soc in 0.0f64..1.0, v in 3.0f64..4.5, vmax in 4.1f64..4.2, a in 0.0f64..10.0,
        prev in prop::option::of(0.0f64..10.0),
        l1 in -20.0f64..=0.0, l2 in -20.0f64..=0.0, l3 in -20.0f64..=0.0,
    ) {
        let cfg = RewardConfig { lambda_soc: l1, lambda_vol: l2, lambda_smooth: l3, ..RewardConfig::default() };
        let r = reward(soc, v, vmax, a, prev, &cfg);
        prop_assert!(r.soc <= 0.0 && r.voltage <= 0.0 && r.smooth <= 0.0 && r.timeout <= 0.0);
        prop_assert!((r.total() - (r.soc + r.voltage + r.smooth + r.timeout)).abs() < 1e-12);
    }

    #[test]
    fn twin_min_never_exceeds_either_critic(
        rows in prop::collection::vec((-10.0f64..10.0, any::<bool>(), -100.0f64..100.0, -100.0f64..100.0), 1..64),
        gamma in 0.0f64..1.0,
    ) {
        let r = Array1::from_iter(rows.iter().map(|x| x.0));
        let d = Array1::from_iter(rows.iter().map(|x| if x.1 { 1.0 } else { 0.0 }));
        let q1 = Array1::from_iter(rows.iter().map(|x| x.2));
        let q2 = Array1::from_iter(rows.iter().map(|x| x.3));
        let y = td3_target(r.view(), d.view(), q1.view(), q2.view(), gamma);
        for k in 0..rows.len() {
            let live = 1.0 - d[k];
            prop_assert!(y[k] <= r[k] + gamma * live * q1[k] + 1e-12);
            prop_assert!(y[k] <= r[k] + gamma * live * q2[k] + 1e-12);
        }
    }

    #[test]
    fn truncated_normal_stays_in_bounds(seed in any::<u64>(), mean in -5.0f64..15.0, sigma in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let a = truncated_normal(mean, sigma, 0.0, 10.0, &mut rng);
            prop_assert!((0.0..=10.0).contains(&a));
        }
    }

    #[test]
    fn soft_update_is_a_convex_combination(seed in any::<u64>(), tau in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Mlp::new(&[2, 5, 1], OutputActivation::Identity, 0.5, &mut rng);
        let mut target = Mlp::new(&[2, 5, 1], OutputActivation::Identity, 0.5, &mut rng);
        let before = target.to_flat();
        soft_update(&mut target, &online, tau);
        for ((t, b), o) in target.to_flat().iter().zip(&before).zip(online.to_flat()) {
            prop_assert!((t - (tau * o + (1.0 - tau) * b)).abs() < 1e-15);
            prop_assert!(*t >= b.min(o) - 1e-15 && *t <= b.max(o) + 1e-15);
        }
    }

    #[test]
    fn actor_outputs_stay_in_action_bounds(seed in any::<u64>(), x in -50.0f64..50.0, y in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::new(&[2, 8, 8, 1], OutputActivation::ScaledSigmoid { lo: 0.0, hi: 10.0 }, 5.0, &mut rng);
        let a = actor.forward_one(&[x, y])[0];
        prop_assert!((0.0..=10.0).contains(&a));
    }

    #[test]
    fn replay_buffer_keeps_the_newest(capacity in 1usize..20, pushes in 0usize..60) {
        let mut buf = ReplayBuffer::new(capacity);
        for k in 0..pushes {
            buf.push(Transition { state: vec![k as f64], action: 0.0, reward: 0.0, next_state: vec![0.0], done: false });
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        let mut kept: Vec<usize> = (0..buf.len()).map(|k| buf.get(k).unwrap().state[0] as usize).collect();
        kept.sort_unstable();
        let expect: Vec<usize> = (pushes.saturating_sub(capacity)..pushes).collect();
        prop_assert_eq!(kept, expect);
    }

    #[test]
    fn trace_round_trips_to_printed_precision(
        pts in prop::collection::vec(
            (0.0f64..1e6, -10.0f64..10.0, 2.5f64..4.3, 0.0f64..1.0, 0.7f64..1.0, -0.2f64..0.3, 1e-9f64..1e-7, 0.0f64..50.0),
            1..30,
        )
    ) {
        let trace: Vec<TracePoint> = pts
            .iter()
            .map(|&(t, current, voltage, soc, soh, eta_side, l_sei, c_dli)| TracePoint { t, current, voltage, soc, soh, eta_side, l_sei, c_dli })
            .collect();
        let text = trace_csv(&trace).unwrap();
        prop_assert!(!text.contains('\r'));
        let back = parse_trace(&text).unwrap();
        prop_assert_eq!(back.len(), trace.len());
        for (a, b) in back.iter().zip(&trace) {
            prop_assert!((a.t - b.t).abs() <= 5e-4);
            for (x, y) in [(a.current, b.current), (a.voltage, b.voltage), (a.soc, b.soc), (a.soh, b.soh), (a.eta_side, b.eta_side)] {
                prop_assert!((x - y).abs() <= 5e-7);
            }
            prop_assert!((a.l_sei - b.l_sei).abs() <= 5e-7 * b.l_sei);
            prop_assert!((a.c_dli - b.c_dli).abs() <= 5e-7 * b.c_dli.max(1e-300));
        }
        prop_assert_eq!(trace_csv(&back).unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn voltage_rises_and_side_overpotential_falls_with_current(soc in 0.1f64..0.9, i1 in 0.0f64..10.0, di in 0.1f64..5.0) {
        let cell = fresh_cell(soc);
        let a = cell.preview(i1, 20.0).unwrap();
        let b = cell.preview(i1 + di, 20.0).unwrap();
        prop_assert!(b.voltage > a.voltage);
        prop_assert!(b.eta_side < a.eta_side);
    }

    #[test]
    fn soc_follows_the_current_sign(soc in 0.1f64..0.8, i in 0.1f64..10.0) {
        // SEI growth consumes lithium at rest, so invariance needs it off
        let p = CellParameters::lg_m50().without_degradation();
        let mut cell = Cell::new(p, GridResolution::default(), StepConfig::default(), soc).unwrap();
        let s0 = cell.soc();
        cell.step(0.0, 60.0).unwrap();
        prop_assert!((cell.soc() - s0).abs() < 1e-12);
        cell.step(i, 60.0).unwrap();
        prop_assert!(cell.soc() > s0);
    }

    #[test]
    fn irreversible_metal_inventory_never_shrinks(currents in prop::collection::vec(-5.0f64..10.0, 5..25)) {
        let p = CellParameters::lg_m50().with_aging_factor(100.0);
        let mut cell = Cell::new(p, GridResolution::default(), StepConfig::default(), 0.5).unwrap();
        let mut metal = 0.0;
        let mut l_sei = cell.state().sei_thickness();
        for i in currents {
            if (i > 0.0 && cell.soc() > 0.9) || (i < 0.0 && cell.soc() < 0.1) {
                continue;
            }
            cell.step(i, 20.0).unwrap();
            let s = cell.state();
            prop_assert!(s.c_li + s.c_dli >= metal - 1e-12);
            prop_assert!(s.sei_thickness() > l_sei);
            metal = s.c_li + s.c_dli;
            l_sei = s.sei_thickness();
        }
    }

    #[test]
    fn identical_inputs_give_identical_outputs(soc in 0.1f64..0.7, i in 0.0f64..10.0) {
        let mut a = fresh_cell(soc);
        let mut b = fresh_cell(soc);
        let oa = a.step(i, 40.0).unwrap();
        let ob = b.step(i, 40.0).unwrap();
        prop_assert_eq!(oa, ob);
        prop_assert_eq!(a.state(), b.state());
    }
}
