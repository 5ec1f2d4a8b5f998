//! Reference speed traces the vehicle has to follow.
//!
//! Cycles are stored uniformly sampled in m/s. Input files may be sampled
//! irregularly and in either m/s or km/h; they are resampled onto a uniform
//! grid by linear interpolation when loaded.

use std::path::Path;

use thiserror::Error;

const NEDC_CSV: &str = include_str!("../data/nedc.csv");

/// Errors raised while building or loading a [`DriveCycle`].
#[derive(Debug, Error)]
pub enum CycleError {
    #[error("cannot read cycle file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed cycle data: {0}")]
    Parse(String),
    #[error("cycle header must be `time_s,speed_mps` or `time_s,speed_kmh`, got `{0}`")]
    Header(String),
    #[error("time column is not strictly increasing at row {row}")]
    NonMonotoneTime { row: usize },
    #[error("negative speed {speed} at row {row}")]
    NegativeSpeed { row: usize, speed: f64 },
    #[error("cycle needs at least two samples, got {0}")]
    Empty(usize),
    #[error("timestep must be positive and finite, got {0}")]
    Timestep(f64),
}

/// A uniformly sampled speed trace with `horizon() + 1` samples.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DriveCycle {
    name: String,
    timestep_s: f64,
    speeds: Vec<f64>,
}

impl DriveCycle {
    pub fn new(
        name: impl Into<String>,
        timestep_s: f64,
        speeds: Vec<f64>,
    ) -> Result<Self, CycleError> {
        if !(timestep_s > 0.0 && timestep_s.is_finite()) {
            return Err(CycleError::Timestep(timestep_s));
        }
        if speeds.len() < 2 {
            return Err(CycleError::Empty(speeds.len()));
        }
        if let Some((row, &speed)) = speeds
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
        {
            return Err(CycleError::NegativeSpeed { row, speed });
        }
        Ok(Self {
            name: name.into(),
            timestep_s,
            speeds,
        })
    }

    /// Builds a cycle from irregular `(time, speed)` samples in m/s by linear
    /// interpolation onto a grid of spacing `timestep_s` starting at the first
    /// sample time.
    pub fn from_samples(
        name: impl Into<String>,
        times: &[f64],
        speeds_mps: &[f64],
        timestep_s: f64,
    ) -> Result<Self, CycleError> {
        if !(timestep_s > 0.0 && timestep_s.is_finite()) {
            return Err(CycleError::Timestep(timestep_s));
        }
        if times.len() != speeds_mps.len() {
            return Err(CycleError::Parse(format!(
                "{} times but {} speeds",
                times.len(),
                speeds_mps.len()
            )));
        }
        if times.len() < 2 {
            return Err(CycleError::Empty(times.len()));
        }
        for (row, &speed) in speeds_mps.iter().enumerate() {
            if !(speed >= 0.0 && speed.is_finite()) {
                return Err(CycleError::NegativeSpeed { row, speed });
            }
        }
        for row in 1..times.len() {
            if !(times[row] > times[row - 1]) {
                return Err(CycleError::NonMonotoneTime { row });
            }
        }

        let t0 = times[0];
        let span = times[times.len() - 1] - t0;
        let steps = (span / timestep_s + 1e-9).floor() as usize;
        let mut out = Vec::with_capacity(steps + 1);
        let mut seg = 0;
        for k in 0..=steps {
            let t = t0 + k as f64 * timestep_s;
            while seg + 2 < times.len() && times[seg + 1] < t {
                seg += 1;
            }
            let (ta, tb) = (times[seg], times[seg + 1]);
            let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            out.push(speeds_mps[seg] + w * (speeds_mps[seg + 1] - speeds_mps[seg]));
        }
        Self::new(name, timestep_s, out)
    }

    /// Parses CSV text with a `time_s,speed_mps` or `time_s,speed_kmh` header.
    /// Lines starting with `#` are ignored.
    pub fn parse_csv(
        name: impl Into<String>,
        text: &str,
        timestep_s: f64,
    ) -> Result<Self, CycleError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| CycleError::Parse(e.to_string()))?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        let scale = match cols.as_slice() {
            ["time_s", "speed_mps"] => 1.0,
            ["time_s", "speed_kmh"] => 1.0 / 3.6,
            _ => return Err(CycleError::Header(cols.join(","))),
        };

        let mut times = Vec::new();
        let mut speeds = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| CycleError::Parse(e.to_string()))?;
            let field = |i: usize| -> Result<f64, CycleError> {
                record
                    .get(i)
                    .ok_or_else(|| CycleError::Parse(format!("row {row}: missing column {i}")))?
                    .parse::<f64>()
                    .map_err(|e| CycleError::Parse(format!("row {row}: {e}")))
            };
            times.push(field(0)?);
            speeds.push(field(1)? * scale);
        }
        Self::from_samples(name, &times, &speeds, timestep_s)
    }

    /// Loads a cycle file and resamples it to `timestep_s`.
    pub fn load(path: impl AsRef<Path>, timestep_s: f64) -> Result<Self, CycleError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CycleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cycle".to_string());
        Self::parse_csv(name, &text, timestep_s)
    }

    /// The bundled 1180 s NEDC trace (four urban ECE-15 segments followed by
    /// the extra-urban segment), sampled at 1 Hz.
    pub fn nedc() -> Self {
        Self::parse_csv("nedc", NEDC_CSV, 1.0).expect("bundled NEDC table is valid")
    }

    /// The first `steps` transitions of this cycle.
    pub fn truncated(&self, steps: usize) -> Result<Self, CycleError> {
        let end = (steps + 1).min(self.speeds.len());
        Self::new(
            format!("{}[..{}]", self.name, end - 1),
            self.timestep_s,
            self.speeds[..end].to_vec(),
        )
    }

    /// Resamples onto a grid of spacing `timestep_s`.
    pub fn resample(&self, timestep_s: f64) -> Result<Self, CycleError> {
        let times: Vec<f64> = (0..self.speeds.len())
            .map(|k| k as f64 * self.timestep_s)
            .collect();
        Self::from_samples(self.name.clone(), &times, &self.speeds, timestep_s)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn timestep_s(&self) -> f64 {
        self.timestep_s
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    /// Number of transitions in one episode (`Ts`).
    pub fn horizon(&self) -> usize {
        self.speeds.len() - 1
    }

    pub fn speed(&self, t: usize) -> f64 {
        self.speeds[t]
    }

    /// Trapezoidal distance in meters.
    pub fn distance_m(&self) -> f64 {
        self.speeds
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) * self.timestep_s)
            .sum()
    }
}

/// Loads a cycle at the default 1 s timestep.
pub fn load_cycle(path: impl AsRef<Path>) -> Result<DriveCycle, CycleError> {
    DriveCycle::load(path, 1.0)
}

pub fn cycle_distance(cycle: &DriveCycle) -> f64 {
    cycle.distance_m()
}
