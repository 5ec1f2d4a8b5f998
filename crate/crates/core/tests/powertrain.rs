use std::time::Instant;

use cofc::drivecycle::DriveCycle;
use cofc::powertrain::{
    demand_power, fuel_rate, soc_lower_limit, soc_upper_limit, step_cost, HevEnv, SocEnvelope, VehicleParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scalar envelope written directly from the corridor definition, kept
/// independent of the library's branch structure.
fn oracle_limits(h: f64, l: f64, b: f64, bl: usize, br: usize, ts: usize, t: usize) -> (f64, f64) {
    let (t, bl, br, ts) = (t as f64, bl as f64, br as f64, ts as f64);
    if t <= bl {
        ((h - b) / bl * t + b, (l - b) / bl * t + b)
    } else if t <= br {
        (h, l)
    } else {
        ((h - b) / (br - ts) * (t - ts) + b, (l - b) / (br - ts) * (t - ts) + b)
    }
}

fn random_envelope(rng: &mut impl Rng) -> SocEnvelope {
    let b = rng.random_range(0.2..0.8);
    let h = rng.random_range(b + 1e-3..0.999);
    let l = rng.random_range(0.001..b - 1e-3);
    let ts = rng.random_range(3..5000);
    let bl = rng.random_range(1..ts - 1);
    let br = rng.random_range(bl + 1..ts);
    SocEnvelope::new(h, l, b, bl, br, ts).unwrap()
}

#[test]
fn envelope_and_cost_match_scalar_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let e = random_envelope(&mut rng);
        let t = rng.random_range(0..=e.ts);
        let soc: f64 = rng.random_range(0.0..1.0);
        let (up, lo) = oracle_limits(e.h, e.l, e.b, e.bl, e.br, e.ts, t);
        let cost = if soc > up { soc - up } else if soc < lo { lo - soc } else { 0.0 };
        assert!((soc_upper_limit(&e, t).unwrap() - up).abs() <= 1e-12);
        assert!((soc_lower_limit(&e, t).unwrap() - lo).abs() <= 1e-12);
        assert!((step_cost(soc, &e, t).unwrap() - cost).abs() <= 1e-12);
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn braking_demand_is_negative() {
    let p = demand_power(&VehicleParams::default(), 10.0, -2.0);
    assert!((p - -31351.666666666668).abs() < 1e-9, "{p}");
}

#[test]
fn golden_trace_matches_reference_recurrence() {
    let env = HevEnv::with_defaults(DriveCycle::nedc()).unwrap();
    let mut rdr = csv::Reader::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/nedc_const_0.3.csv")).unwrap();
    let mut state = env.reset(Some(0.6)).unwrap();
    let mut rows = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        let f = |i: usize| row[i].parse::<f64>().unwrap();
        let (next, tr) = env.step(&state, 0.3).unwrap();
        assert_eq!(next.t, f(0) as usize);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
        assert!(close(next.soc, f(1)), "soc at t={}: {} vs {}", next.t, next.soc, f(1));
        assert!(close(next.velocity_mps, f(2)));
        assert!(close(tr.r, f(4)));
        assert!(close(tr.c, f(5)), "cost at t={}", next.t);
        state = next;
        rows += 1;
    }
    assert_eq!(rows, env.horizon());
    assert!(env.step(&state, 0.3).is_err());
}

#[test]
fn reward_is_negative_fuel() {
    let env = HevEnv::with_defaults(DriveCycle::nedc().truncated(200).unwrap()).unwrap();
    let mut state = env.reset(None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total = 0.0;
    while state.t < env.horizon() {
        let a = rng.random_range(0.0..=1.0);
        let (next, tr) = env.step(&state, a).unwrap();
        let expected = fuel_rate(&env.params, a * env.params.engine_power_max_w).unwrap() * env.cycle.timestep_s();
        assert_eq!(tr.r, -expected);
        total += tr.r;
        state = next;
    }
    assert!((state.fuel_g_cum + total).abs() < 1e-9);
}

fn small_env(ts: usize) -> HevEnv {
    let cycle = DriveCycle::nedc().truncated(ts).unwrap();
    HevEnv::with_defaults(cycle).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_invariants(
        seed in any::<u64>(),
        soc0 in 0.0f64..=1.0,
        offset in 0usize..900,
    ) {
        let full = DriveCycle::nedc();
        let speeds = &full.speeds()[offset..offset + 101];
        let cycle = DriveCycle::new("window", 1.0, speeds.to_vec()).unwrap();
        let env = HevEnv::with_defaults(cycle).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = env.reset(Some(soc0)).unwrap();
        let e_batt = env.params.battery_energy_j();
        while state.t < env.horizon() {
            let a: f64 = rng.random_range(0.0..=1.0);
            let (next, tr) = env.step(&state, a).unwrap();
            prop_assert!(tr.r <= 0.0);
            prop_assert!(tr.c >= 0.0);
            prop_assert!((0.0..=1.0).contains(&next.soc));
            // SOC moves by the clamped battery energy unless it hits a rail.
            let (v0, v1) = (env.cycle.speed(state.t), env.cycle.speed(next.t));
            let demand = demand_power(&env.params, 0.5 * (v0 + v1), v1 - v0);
            let pb = (demand - a * env.params.engine_power_max_w)
                .clamp(-env.params.motor_power_max_w, env.params.motor_power_max_w);
            let unclamped = state.soc - pb / e_batt;
            if (0.0..=1.0).contains(&unclamped) {
                prop_assert!((next.soc - unclamped).abs() < 1e-12);
            }
            let (again, tr2) = env.step(&state, a).unwrap();
            prop_assert_eq!(again, next);
            prop_assert_eq!(tr2, tr);
            state = next;
        }
    }

    #[test]
    fn envelope_is_continuous(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_envelope(&mut rng);
        let slope = e.max_slope();
        for t in 0..e.ts {
            let du = (soc_upper_limit(&e, t + 1).unwrap() - soc_upper_limit(&e, t).unwrap()).abs();
            let dl = (soc_lower_limit(&e, t + 1).unwrap() - soc_lower_limit(&e, t).unwrap()).abs();
            prop_assert!(du <= slope + 1e-12 && dl <= slope + 1e-12);
        }
        prop_assert!((soc_upper_limit(&e, 0).unwrap() - e.b).abs() < 1e-12);
        prop_assert!((soc_lower_limit(&e, e.ts).unwrap() - e.b).abs() < 1e-12);
    }
}

#[test]
fn truncated_cycle_has_requested_horizon() {
    assert_eq!(small_env(50).horizon(), 50);
}

#[test]
fn nedc_distance() {
    let km = DriveCycle::nedc().distance_m() / 1000.0;
    assert!((km - 10.93).abs() <= 0.02 * 10.93, "{km} km");
}
