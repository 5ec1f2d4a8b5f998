use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cofc::checkpoint::Checkpoint;
use cofc::tabular::{verify_suite, VerifyConfig, VerifyReport};
use cofc::train::{evaluate_all, reward_diverged, summarize, EpochStats, EpisodeOutcome, TrainError, Trainer};
use serde::Serialize;

use crate::{CliError, RunConfig, VERSION};

/// Artifact index written next to the outputs of every command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub method: String,
    pub runs: Vec<RunRecord>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub epochs: usize,
    pub final_reward: f64,
    pub final_cost: f64,
    pub final_lambda: f64,
    /// Why the run counts as diverged, if it does.
    pub diverged: Option<String>,
    pub checkpoint: String,
    pub history: String,
}

pub struct TrainOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl TrainOutcome {
    pub fn diverged(&self) -> bool {
        self.manifest.runs.iter().any(|r| r.diverged.is_some())
    }
}

pub struct EvaluateOutcome {
    pub csv: String,
    pub table: String,
    pub rows: Vec<cofc::train::ConditionSummary>,
}

pub struct VerifyOutcome {
    pub reports: Vec<VerifyReport>,
    pub csv: String,
    pub table: String,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(VerifyReport::passed)
    }
}

/// Directory holding one method's runs.
pub fn run_dir(out: &Path, cfg: &RunConfig) -> PathBuf {
    out.join(cfg.method.slug())
}

fn provenance(cfg: &RunConfig) -> String {
    format!("# {VERSION} config-sha256={}\n", cfg.digest())
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn rel(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

/// Apply `f` to every item on up to `jobs` threads, keeping input order.
fn parallel_map<T: Sync, U: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<U>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let value = f(item);
                *slots[i].lock().expect("slot lock") = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every item processed"))
        .collect()
}

fn history_csv(cfg: &RunConfig, seed: u64, history: &[EpochStats]) -> String {
    let mut out = provenance(cfg);
    out += &format!("# method={} seed={seed}\n", cfg.method);
    out += EpochStats::CSV_HEADER;
    out.push('\n');
    for s in history {
        out += &s.csv_row();
        out.push('\n');
    }
    out
}

fn train_one(cfg: &RunConfig, dir: &Path, seed: u64) -> Result<RunRecord, CliError> {
    let env = cfg.env()?;
    let mut trainer = Trainer::new(
        cfg.method,
        env,
        &cfg.network,
        cfg.train.clone(),
        cfg.attack.params.clone(),
        cfg.attack.norm,
        seed,
    )?;
    let mut history = Vec::with_capacity(cfg.train.epochs);
    let result = trainer.train(|s| {
        if s.epoch % 10 == 0 || s.epoch == cfg.train.epochs {
            eprintln!(
                "[{} seed {seed}] epoch {:>4}  reward {:>9.2}  cost {:>7.3}  lambda {:>7.3}",
                cfg.method, s.epoch, s.reward, s.cost, s.lambda
            );
        }
        history.push(*s);
    });
    let (mut ckpt, mut diverged) = match result {
        Ok(_) => (trainer.checkpoint(), None),
        Err(TrainError::Diverged {
            epoch,
            reason,
            checkpoint,
        }) => (*checkpoint, Some(format!("epoch {epoch}: {reason}"))),
        Err(e) => return Err(e.into()),
    };
    let last = history.last().copied();
    if let (None, Some(base), Some(l)) = (&diverged, cfg.baseline_reward, last) {
        if reward_diverged(l.reward, base) {
            diverged = Some(format!(
                "final reward {:.2} below three times the baseline magnitude {:.2}",
                l.reward,
                base.abs()
            ));
        }
    }
    ckpt.provenance = vec![
        ("version".into(), VERSION.into()),
        ("config_sha256".into(), cfg.digest()),
    ];
    let seed_dir = dir.join(format!("seed-{seed}"));
    let ckpt_path = seed_dir.join("checkpoint.ckpt");
    let hist_path = seed_dir.join("history.csv");
    write(&hist_path, &history_csv(cfg, seed, &history))?;
    ckpt.save(&ckpt_path)?;
    if let Some(reason) = &diverged {
        eprintln!("[{} seed {seed}] diverged: {reason}", cfg.method);
    }
    Ok(RunRecord {
        seed,
        epochs: history.len(),
        final_reward: last.map_or(f64::NAN, |l| l.reward),
        final_cost: last.map_or(f64::NAN, |l| l.cost),
        final_lambda: last.map_or(f64::NAN, |l| l.lambda),
        diverged,
        checkpoint: rel(dir, &ckpt_path),
        history: rel(dir, &hist_path),
    })
}

/// Train the configured method once per seed. Artifacts land in
/// `<out>/<method-slug>/`; an existing directory is only reused with `force`.
pub fn cmd_train(cfg: &RunConfig, out: &Path, jobs: usize, force: bool) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let dir = run_dir(out, cfg);
    if dir.exists() && !force {
        return Err(CliError::OutputExists(dir));
    }
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    write(&dir.join("config.toml"), &format!("{}{}", provenance(cfg), cfg.to_toml()))?;
    let runs = parallel_map(&cfg.seeds, jobs, |&seed| train_one(cfg, &dir, seed))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut artifacts = vec!["config.toml".to_string()];
    for r in &runs {
        artifacts.push(r.checkpoint.clone());
        artifacts.push(r.history.clone());
    }
    let manifest = Manifest {
        version: VERSION,
        command: "train",
        config_sha256: cfg.digest(),
        method: cfg.method.to_string(),
        runs,
        artifacts,
    };
    write(&dir.join("manifest.json"), &manifest_json(&manifest))?;
    Ok(TrainOutcome { dir, manifest })
}

fn manifest_json(m: &Manifest) -> String {
    serde_json::to_string_pretty(m).expect("manifest serializes") + "\n"
}

/// Evaluate checkpoints under the configured conditions, pooling episodes
/// across checkpoints. With no explicit checkpoints, the configured seeds'
/// checkpoints under `<out>/<method-slug>/` are used.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    checkpoints: &[PathBuf],
    out: &Path,
    jobs: usize,
    force: bool,
) -> Result<EvaluateOutcome, CliError> {
    cfg.validate()?;
    let dir = run_dir(out, cfg);
    let paths: Vec<PathBuf> = if checkpoints.is_empty() {
        cfg.seeds
            .iter()
            .map(|s| dir.join(format!("seed-{s}")).join("checkpoint.ckpt"))
            .collect()
    } else {
        checkpoints.to_vec()
    };
    if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
        return Err(CliError::MissingCheckpoint(missing.clone()));
    }
    let csv_path = dir.join("evaluation.csv");
    let txt_path = dir.join("evaluation.txt");
    if csv_path.exists() && !force {
        return Err(CliError::OutputExists(csv_path));
    }
    let env = cfg.env()?;
    let conditions = cfg.conditions()?;
    let budget = cfg.budget();
    let per_ckpt = parallel_map(&paths, jobs, |p| -> Result<Vec<Vec<EpisodeOutcome>>, CliError> {
        let ckpt = Checkpoint::load(p)?;
        ckpt.check_hidden(&cfg.network.hidden)?;
        let results = evaluate_all(
            &env,
            &ckpt.agent,
            &conditions,
            budget,
            &cfg.attack.params,
            &cfg.eval,
            ckpt.seed,
        )?;
        Ok(results.into_iter().map(|r| r.episodes).collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<_> = conditions
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let pooled: Vec<EpisodeOutcome> = per_ckpt.iter().flat_map(|r| r[k].iter().copied()).collect();
            summarize(c, &pooled)
        })
        .collect();
    let method = cfg.method.to_string();
    let mut csv = provenance(cfg);
    csv += &format!("# checkpoints={} epsilon={} norm={:?}\n", paths.len(), budget.epsilon, budget.norm);
    csv += "method,condition,episodes,reward_mean,reward_std,cost_mean,cost_std\n";
    for r in &rows {
        csv += &format!(
            "{method},{},{},{},{},{},{}\n",
            r.condition.condition_name(),
            r.episodes,
            r.reward_mean,
            r.reward_std,
            r.cost_mean,
            r.cost_std
        );
    }
    let mut table = provenance(cfg);
    table += &format!("{:<14} {:<9} {:>8} {:>22} {:>18}\n", "method", "condition", "episodes", "reward", "cost");
    for r in &rows {
        table += &format!(
            "{:<14} {:<9} {:>8} {:>22} {:>18}\n",
            method,
            r.condition.condition_name(),
            r.episodes,
            format!("{:.2}±{:.2}", r.reward_mean, r.reward_std),
            format!("{:.2}±{:.2}", r.cost_mean, r.cost_std)
        );
    }
    write(&csv_path, &csv)?;
    write(&txt_path, &table)?;
    let manifest = Manifest {
        version: VERSION,
        command: "evaluate",
        config_sha256: cfg.digest(),
        method,
        runs: Vec::new(),
        artifacts: std::iter::once(rel(&dir, &csv_path))
            .chain(std::iter::once(rel(&dir, &txt_path)))
            .chain(paths.iter().map(|p| p.display().to_string()))
            .collect(),
    };
    write(&dir.join("evaluation-manifest.json"), &manifest_json(&manifest))?;
    Ok(EvaluateOutcome { csv, table, rows })
}

/// Run the tabular certification suite once per seed.
pub fn cmd_verify(
    cfg: &RunConfig,
    verify: &VerifyConfig,
    seeds: &[u64],
    out: Option<&Path>,
    jobs: usize,
) -> Result<VerifyOutcome, CliError> {
    let reports = seeds
        .iter()
        .map(|&s| verify_suite(verify, s, jobs))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = provenance(cfg);
    csv += &format!("seed,{}\n", VerifyReport::CSV_HEADER);
    let mut table = String::new();
    for r in &reports {
        for line in r.to_csv().lines().skip(1) {
            csv += &format!("{},{line}\n", r.seed);
        }
        table += &format!("seed {}\n{}", r.seed, r.to_table());
    }
    if let Some(dir) = out {
        write(&dir.join("verify.csv"), &csv)?;
        write(&dir.join("verify.txt"), &format!("{}{table}", provenance(cfg)))?;
    }
    Ok(VerifyOutcome { reports, csv, table })
}
