use rand::Rng;
use serde::{Deserialize, Serialize};

use super::instance::dirichlet_weights;
use super::{
    best_deterministic_attacker, check_contraction, check_episodic_bound, check_one_step_bound, enumerate_attackers,
    lipschitz_constant, policy_eval, policy_eval_stochastic, random_instance, random_policy, tight_instance, Flavor, InstanceConfig,
    StochasticAttacker, TabularError,
};
use crate::rng::{substream, Stream};

/// Randomized certification run over independent instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub instances: usize,
    /// Stochastic attackers compared against the exhaustive optimum, per
    /// instance and objective.
    pub mixtures: usize,
    /// Maps combined into each stochastic attacker.
    pub mixture_components: usize,
    /// Random value-vector pairs per instance for the contraction check.
    pub contraction_trials: usize,
    /// Multiplier on the exact Lipschitz constant fed to the bound checks.
    /// Values below one understate it and should make the checks fail.
    pub l_scale: f64,
    pub instance: InstanceConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            mixtures: 100,
            mixture_components: 3,
            contraction_trials: 1000,
            l_scale: 1.0,
            instance: InstanceConfig::default(),
        }
    }
}

/// Slack allowed when comparing independently computed fixed points.
const VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremRow {
    pub theorem: u8,
    pub name: &'static str,
    pub instances: usize,
    pub checks: usize,
    /// Smallest `rhs − lhs` seen (for the first theorem: optimum minus best
    /// stochastic value; for the last: `γ − ratio`).
    pub min_margin: f64,
    pub failures: usize,
}

impl TheoremRow {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub rows: Vec<TheoremRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(TheoremRow::passed)
    }

    pub const CSV_HEADER: &'static str = "theorem,name,instances,checks,min_margin,failures,result";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out += &format!(
                "{},{},{},{},{:e},{},{}\n",
                r.theorem,
                r.name,
                r.instances,
                r.checks,
                r.min_margin,
                r.failures,
                if r.passed() { "pass" } else { "FAIL" }
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<8} {:<28} {:>9} {:>8} {:>14} {:>6}\n",
            "theorem", "check", "instances", "checks", "min margin", "result"
        );
        for r in &self.rows {
            out += &format!(
                "{:<8} {:<28} {:>9} {:>8} {:>14.6e} {:>6}\n",
                r.theorem,
                r.name,
                r.instances,
                r.checks,
                r.min_margin,
                if r.passed() { "pass" } else { "FAIL" }
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Tally {
    checks: usize,
    min_margin: f64,
    failures: usize,
}

impl Tally {
    fn new() -> Self {
        Self {
            checks: 0,
            min_margin: f64::INFINITY,
            failures: 0,
        }
    }

    fn record(&mut self, margin: f64, ok: bool) {
        self.checks += 1;
        self.min_margin = self.min_margin.min(margin);
        self.failures += usize::from(!ok);
    }

    fn merge(&mut self, other: &Tally) {
        self.checks += other.checks;
        self.min_margin = self.min_margin.min(other.min_margin);
        self.failures += other.failures;
    }
}

/// Run all four checks on instance `index` of the seed's tabular stream.
fn run_instance(cfg: &VerifyConfig, seed: u64, index: u64) -> Result<[Tally; 4], TabularError> {
    let mut rng = substream(seed, Stream::Tabular, index);
    let ic = &cfg.instance;
    let mdp = random_instance(ic, &mut rng)?;
    let policy = random_policy(ic.n_states, ic.n_actions, ic.dirichlet_alpha, &mut rng);
    let mut t = [Tally::new(); 4];

    let maps = enumerate_attackers(&mdp, 1.0)?;
    for objective in [Flavor::Cost, Flavor::Reward] {
        let (_, best) = best_deterministic_attacker(&mdp, &policy, objective)?;
        let mut top = f64::NEG_INFINITY;
        for _ in 0..cfg.mixtures {
            let picks: Vec<_> = (0..cfg.mixture_components.max(1))
                .map(|_| maps[rng.random_range(0..maps.len())].clone())
                .collect();
            let weights = dirichlet_weights(picks.len(), &mut rng);
            let nu = StochasticAttacker::mixture(&picks, &weights);
            top = top.max(mdp.initial_value(&policy_eval_stochastic(&mdp, &policy, objective, &nu)?));
        }
        t[0].record(best - top, top <= best + VALUE_TOL);
    }

    let l = cfg.l_scale * lipschitz_constant(&mdp, &policy);
    let one = check_one_step_bound(&mdp, &policy, l, 1.0)?;
    t[1].record(one.margin(), one.holds());

    let kappa = mdp.initial_value(&policy_eval(&mdp, &policy, Flavor::Cost, None)?);
    let epi = check_episodic_bound(&mdp, &policy, l, 1.0, kappa)?;
    t[2].record(epi.margin(), epi.holds());

    let n = mdp.n_states();
    for _ in 0..cfg.contraction_trials {
        let nu = &maps[rng.random_range(0..maps.len())];
        let v1: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let v2: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let c = check_contraction(&mdp, &policy, nu, &v1, &v2)?;
        t[3].record(c.gamma - c.ratio, c.holds());
    }
    Ok(t)
}

/// Certify the four attack properties on `cfg.instances` random instances,
/// spreading instances over `jobs` threads. Results do not depend on `jobs`.
pub fn verify_suite(cfg: &VerifyConfig, seed: u64, jobs: usize) -> Result<VerifyReport, TabularError> {
    let jobs = jobs.clamp(1, cfg.instances.max(1));
    let per_instance: Vec<Result<[Tally; 4], TabularError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                scope.spawn(move || {
                    (j..cfg.instances)
                        .step_by(jobs)
                        .map(|i| (i, run_instance(cfg, seed, i as u64)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut all: Vec<_> = handles.into_iter().flat_map(|h| h.join().expect("verify worker panicked")).collect();
        all.sort_by_key(|(i, _)| *i);
        all.into_iter().map(|(_, r)| r).collect()
    });
    let mut totals = [Tally::new(); 4];
    // The bound checks also run on the instance where the one-step bound is
    // tight up to its factor of two.
    let (mdp, policy) = tight_instance();
    let l = cfg.l_scale * lipschitz_constant(&mdp, &policy);
    let one = check_one_step_bound(&mdp, &policy, l, 1.0)?;
    totals[1].record(one.margin(), one.holds());
    let epi = check_episodic_bound(&mdp, &policy, l, 1.0, 0.0)?;
    totals[2].record(epi.margin(), epi.holds());

    for r in per_instance {
        let t = r?;
        for (acc, x) in totals.iter_mut().zip(&t) {
            acc.merge(x);
        }
    }
    let names = [
        "deterministic attacker optimal",
        "one-step cost bound",
        "episodic cost bound",
        "Bellman contraction",
    ];
    let rows = totals
        .iter()
        .zip(names)
        .enumerate()
        .map(|(k, (t, name))| TheoremRow {
            theorem: k as u8 + 1,
            name,
            instances: cfg.instances,
            checks: t.checks,
            min_margin: t.min_margin,
            failures: t.failures,
        })
        .collect();
    Ok(VerifyReport { seed, rows })
}
