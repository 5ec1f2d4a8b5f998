use cofc::attacks::{AttackBudget, AttackConfig, AttackKind, Norm};
use cofc::checkpoint::Checkpoint;
use cofc::drivecycle::DriveCycle;
use cofc::powertrain::HevEnv;
use cofc::train::{
    evaluate, reward_diverged, EpochStats, EvalConfig, Method, NetworkConfig, TrainConfig, TrainError, Trainer,
};

fn env() -> HevEnv {
    HevEnv::with_defaults(DriveCycle::nedc().truncated(40).unwrap()).unwrap()
}

fn small() -> (NetworkConfig, TrainConfig) {
    let net = NetworkConfig { hidden: vec![8, 8] };
    let cfg = TrainConfig {
        epochs: 4,
        steps_per_epoch: 80,
        minibatch_size: 40,
        update_iters: 2,
        ..Default::default()
    };
    (net, cfg)
}

fn run(method: Method, cfg: TrainConfig, seed: u64) -> (Trainer, Vec<EpochStats>) {
    let (net, _) = small();
    let mut t = Trainer::new(method, env(), &net, cfg, AttackConfig::default(), Norm::Linf, seed).unwrap();
    let hist = t.train(|_| {}).unwrap();
    (t, hist)
}

#[test]
fn zero_radius_adversarial_training_is_vanilla() {
    let (_, mut cfg) = small();
    cfg.epsilon_final = 0.0;
    let (base, h0) = run(Method::PpolVanilla, cfg.clone(), 3);
    for m in [Method::AdvPpolMc, Method::AdvPpolMr, Method::PpolRandom] {
        let (t, h) = run(m, cfg.clone(), 3);
        assert_eq!(h, h0, "{m:?}");
        assert_eq!(t.agent, base.agent);
    }
}

#[test]
fn unweighted_smoothing_is_vanilla() {
    let (_, mut cfg) = small();
    cfg.kl_weight = 0.0;
    let (base, h0) = run(Method::PpolVanilla, cfg.clone(), 5);
    for m in [Method::SaPpol, Method::SaPpolMc, Method::SaPpolMr] {
        let (t, mut h) = run(m, cfg.clone(), 5);
        // The radius is still logged; nothing consumes it.
        h.iter_mut().for_each(|s| s.epsilon = 0.0);
        assert_eq!(h, h0, "{m:?}");
        assert_eq!(t.agent, base.agent);
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let (_, cfg) = small();
    let (a, ha) = run(Method::SaPpolMc, cfg.clone(), 9);
    let (b, hb) = run(Method::SaPpolMc, cfg.clone(), 9);
    assert_eq!(ha, hb);
    assert_eq!(a.agent, b.agent);
    let (c, _) = run(Method::SaPpolMc, cfg, 10);
    assert_ne!(a.agent, c.agent);
}

#[test]
fn resume_from_checkpoint_matches_uninterrupted_run() {
    let (net, cfg) = small();
    let (full, h_full) = run(Method::AdvPpolMc, cfg.clone(), 2);

    let mut t = Trainer::new(Method::AdvPpolMc, env(), &net, cfg.clone(), AttackConfig::default(), Norm::Linf, 2).unwrap();
    let mut h = vec![t.run_epoch().unwrap(), t.run_epoch().unwrap()];
    let text = t.checkpoint().to_text().unwrap();
    let restored = Checkpoint::from_text(&text).unwrap();
    assert_eq!(restored.to_text().unwrap(), text);
    let mut t = Trainer::from_checkpoint(restored, env(), cfg, AttackConfig::default(), Norm::Linf).unwrap();
    h.extend(t.train(|_| {}).unwrap());
    assert_eq!(h.len(), h_full.len());
    assert_eq!(h, h_full);
    assert_eq!(t.agent, full.agent);
}

#[test]
fn evaluation_reward_is_negative_fuel_and_reproducible() {
    let (_, cfg) = small();
    let (t, _) = run(Method::PpolVanilla, cfg, 1);
    let eval = EvalConfig { episodes: 5, ..Default::default() };
    let budget = AttackBudget::linf(0.05);
    for kind in AttackKind::ALL {
        let a = evaluate(&t.env, &t.agent, kind, budget, &AttackConfig::default(), &eval, 77).unwrap();
        let b = evaluate(&t.env, &t.agent, kind, budget, &AttackConfig::default(), &eval, 77).unwrap();
        assert_eq!(a, b);
        for ep in &a.episodes {
            assert!((ep.reward + ep.fuel_g).abs() < 1e-9);
            assert!(ep.cost >= 0.0);
        }
    }
}

#[test]
fn smoothed_mr_run_completes_or_reports_divergence() {
    let (net, mut cfg) = small();
    cfg.epsilon_final = 0.2;
    let mut t = Trainer::new(Method::SaPpolMr, env(), &net, cfg, AttackConfig::default(), Norm::Linf, 0).unwrap();
    match t.train(|_| {}) {
        Ok(h) => assert_eq!(h.len(), 4),
        Err(TrainError::Diverged { checkpoint, .. }) => assert_eq!(checkpoint.method, Method::SaPpolMr),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn divergence_rule() {
    assert!(!reward_diverged(-300.0, -334.0));
    assert!(!reward_diverged(-1002.0, -334.0));
    assert!(reward_diverged(-1003.0, -334.0));
    assert!(reward_diverged(f64::NAN, -334.0));
    assert!(reward_diverged(-1003.0, 334.0));
}
