//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use cofc::attacks::{AttackBudget, AttackConfig, AttackKind, Norm};
use cofc::drivecycle::DriveCycle;
use cofc::powertrain::{HevEnv, SocEnvelope, VehicleParams};
use cofc::tabular::VerifyConfig;
use cofc::train::{EvalConfig, Method, NetworkConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub method: Method,
    pub seeds: Vec<u64>,
    /// Mean episode reward of a reference PPOL-vanilla run. When set, a run
    /// whose final reward falls below three times its magnitude (negated)
    /// is recorded as diverged.
    pub baseline_reward: Option<f64>,
    pub cycle: CycleSection,
    pub vehicle: VehicleParams,
    pub envelope: EnvelopeSection,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub attack: AttackSection,
    pub eval: EvalConfig,
    pub verify: VerifyConfig,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::PpolVanilla,
            seeds: vec![0],
            baseline_reward: None,
            cycle: CycleSection::default(),
            vehicle: VehicleParams::default(),
            envelope: EnvelopeSection::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            attack: AttackSection::default(),
            eval: EvalConfig::default(),
            verify: VerifyConfig::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CycleSection {
    /// `"nedc"` for the bundled trace, otherwise a CSV path (`time_s,speed_kmh`).
    pub source: String,
    pub timestep_s: f64,
    /// Keep only the first `steps` transitions.
    pub steps: Option<usize>,
}

impl Default for CycleSection {
    fn default() -> Self {
        Self {
            source: "nedc".into(),
            timestep_s: 1.0,
            steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeSection {
    pub h: f64,
    pub l: f64,
    pub b: f64,
    /// Defaults to `⌈0.1·Ts⌉`.
    pub bl: Option<usize>,
    /// Defaults to `⌊0.9·Ts⌋`.
    pub br: Option<usize>,
}

impl Default for EnvelopeSection {
    fn default() -> Self {
        Self {
            h: 0.7,
            l: 0.5,
            b: 0.6,
            bl: None,
            br: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    /// Evaluation conditions: `"all"` or one of natural, uniform, mc, mr,
    /// mad, amad.
    pub kind: String,
    pub norm: Norm,
    /// Evaluation radius. Defaults to `train.epsilon_final`.
    pub epsilon: Option<f64>,
    pub params: AttackConfig,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            kind: "all".into(),
            norm: Norm::Linf,
            epsilon: None,
            params: AttackConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "runs/default".into() }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        self.train.validate().map_err(|e| cfg_err(&e))?;
        self.network.validate().map_err(|e| cfg_err(&e))?;
        self.eval.validate().map_err(|e| cfg_err(&e))?;
        self.attack.params.validate().map_err(|e| cfg_err(&e))?;
        self.vehicle.validate().map_err(|e| cfg_err(&e))?;
        self.budget().validate().map_err(|e| cfg_err(&e))?;
        self.conditions()?;
        self.env()?;
        Ok(())
    }

    pub fn cycle(&self) -> Result<DriveCycle, CliError> {
        let c = &self.cycle;
        let cfg_err = |e: cofc::drivecycle::CycleError| CliError::Config(format!("cycle: {e}"));
        let base = if c.source == "nedc" {
            DriveCycle::nedc()
        } else {
            DriveCycle::load(&c.source, c.timestep_s).map_err(cfg_err)?
        };
        let cycle = if base.timestep_s() != c.timestep_s {
            base.resample(c.timestep_s).map_err(cfg_err)?
        } else {
            base
        };
        match c.steps {
            Some(n) => cycle.truncated(n).map_err(cfg_err),
            None => Ok(cycle),
        }
    }

    pub fn env(&self) -> Result<HevEnv, CliError> {
        let cycle = self.cycle()?;
        let ts = cycle.horizon();
        let e = &self.envelope;
        let bl = e.bl.unwrap_or((ts as f64 * 0.1).ceil() as usize);
        let br = e.br.unwrap_or((ts as f64 * 0.9).floor() as usize);
        let envelope = SocEnvelope::new(e.h, e.l, e.b, bl, br, ts).map_err(|err| CliError::Config(err.to_string()))?;
        HevEnv::new(cycle, self.vehicle.clone(), envelope).map_err(|err| CliError::Config(err.to_string()))
    }

    pub fn budget(&self) -> AttackBudget {
        AttackBudget {
            norm: self.attack.norm,
            epsilon: self.attack.epsilon.unwrap_or(self.train.epsilon_final),
        }
    }

    /// Conditions selected by `attack.kind`.
    pub fn conditions(&self) -> Result<Vec<AttackKind>, CliError> {
        let k = self.attack.kind.trim().to_ascii_lowercase();
        if k == "all" {
            return Ok(AttackKind::ALL.to_vec());
        }
        AttackKind::from_condition(&k).map(|c| vec![c]).ok_or_else(|| {
            CliError::Config(format!(
                "attack.kind {:?} must be \"all\" or one of natural, uniform, mc, mr, mad, amad",
                self.attack.kind
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.digest(), back.digest());
        assert_eq!(cfg.digest().len(), 64);
    }

    #[test]
    fn rejects_unknown_keys_and_methods() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_toml("[train]\nlr = 1.0"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_toml("method = \"PPO\""), Err(CliError::Config(_))));
        let ok = RunConfig::from_toml("method = \"ADV-PPOL(MC)\"\nseeds = [3, 4]").unwrap();
        assert_eq!(ok.method, Method::AdvPpolMc);
    }

    #[test]
    fn condition_selection() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.conditions().unwrap().len(), 6);
        cfg.attack.kind = "natural".into();
        assert_eq!(cfg.conditions().unwrap(), vec![AttackKind::None]);
        cfg.attack.kind = "pgd".into();
        assert!(cfg.conditions().is_err());
    }

    #[test]
    fn shortened_cycle() {
        let cfg = RunConfig::from_toml("[cycle]\nsteps = 200").unwrap();
        let env = cfg.env().unwrap();
        assert_eq!(env.horizon(), 200);
        assert_eq!(env.envelope.bl, 20);
        assert_eq!(env.envelope.br, 180);
    }
}
