//! Experiment configuration: a TOML document merged over a named preset.
//!
//! Every field has a default, and the defaults are the published protocol
//! (`paper` preset). The `desk` preset keeps `n = 100` but runs 10 γ values
//! × 2 seeds against a 200-point β grid. A config file only needs to name
//! the fields it changes; unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simmax_core::baselines::NK99Params;
use simmax_core::domain::{DomainParams, PriorKind};
use simmax_core::dynamics::SimConfig;
use simmax_core::grid::log_space;
use simmax_core::ib::SolverSettings;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Paper,
    Desk,
}

/// `count` log-spaced values over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
}

impl LogGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        log_space(self.lo, self.hi, self.count).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub n: usize,
    pub alpha: f64,
    pub prior: PriorKind,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self {
            n: 100,
            alpha: 0.5,
            prior: PriorKind::Uniform,
        }
    }
}

impl DomainSection {
    pub fn params(&self, gamma: f64) -> Result<DomainParams> {
        let mut p = DomainParams::new(self.n, gamma, self.alpha)?;
        p.prior = self.prior;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub max_steps: u64,
    pub convergence_tol: f64,
    pub record_every: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            max_steps: d.max_steps,
            convergence_tol: d.convergence_tol,
            record_every: d.record_every,
        }
    }
}

impl SimSection {
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            max_steps: self.max_steps,
            convergence_tol: self.convergence_tol,
            record_every: self.record_every,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IbSection {
    pub betas: LogGrid,
    pub solver: SolverSettings,
    /// Also write every curve encoder as a matrix CSV.
    pub export_encoders: bool,
}

impl Default for IbSection {
    fn default() -> Self {
        Self {
            betas: LogGrid {
                count: 795,
                lo: 1.0,
                hi: 1e7,
            },
            solver: SolverSettings::default(),
            export_encoders: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Nk99Section {
    pub pop_size: usize,
    pub generations: usize,
    pub samples: usize,
    /// Independent NK99 populations to evolve.
    pub runs: usize,
}

impl Default for Nk99Section {
    fn default() -> Self {
        let d = NK99Params::default();
        Self {
            pop_size: d.pop_size,
            generations: d.generations,
            samples: d.samples,
            runs: 8,
        }
    }
}

impl Nk99Section {
    pub fn params(&self, n: usize, seed: u64) -> NK99Params {
        NK99Params {
            pop_size: self.pop_size,
            generations: self.generations,
            samples: self.samples,
            n_meanings: n,
            n_words: n,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub taus: LogGrid,
    pub nk99: Nk99Section,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            taus: LogGrid {
                count: 100,
                lo: 1.0,
                hi: 1000.0,
            },
            nk99: Nk99Section::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every derived random stream.
    pub master_seed: u64,
    pub domain: DomainSection,
    pub gammas: LogGrid,
    pub seeds: Vec<u64>,
    pub sim: SimSection,
    pub ib: IbSection,
    pub baselines: BaselineSection,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            domain: DomainSection::default(),
            gammas: LogGrid {
                count: 100,
                lo: 1e-8,
                hi: 10.0,
            },
            seeds: (0..8).collect(),
            sim: SimSection::default(),
            ib: IbSection::default(),
            baselines: BaselineSection::default(),
            output_dir: PathBuf::from("simmax-out"),
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut c = Self::default();
        if preset == Preset::Desk {
            c.gammas.count = 10;
            c.seeds = vec![0, 1];
            c.ib.betas.count = 200;
            c.baselines.taus.count = 10;
            c.baselines.nk99.runs = 4;
        }
        c
    }

    /// `preset` with the TOML document `text` merged over it.
    pub fn from_toml_over(preset: Preset, text: &str) -> Result<Self> {
        let overlay: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        let mut base = toml::Table::try_from(Self::preset(preset))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        merge(&mut base, overlay);
        let config: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(preset: Preset, path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    HarnessError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                Self::from_toml_over(preset, &text)
            }
            None => {
                let c = Self::preset(preset);
                c.validate()?;
                Ok(c)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let config_err = |e: simmax_core::Error| HarnessError::Config(e.to_string());
        self.domain.params(1.0).map_err(|e| match e {
            HarnessError::Core(e) => config_err(e),
            other => other,
        })?;
        for (name, grid) in [
            ("gammas", &self.gammas),
            ("ib.betas", &self.ib.betas),
            ("baselines.taus", &self.baselines.taus),
        ] {
            if let Err(e) = grid.values() {
                return bad(format!("{name}: {e}"));
            }
        }
        if self.ib.betas.lo < 1.0 {
            return bad(format!("ib.betas.lo must be >= 1, got {}", self.ib.betas.lo));
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        self.sim.sim_config(0).validate().map_err(config_err)?;
        let s = &self.ib.solver;
        if !(s.tol > 0.0) || s.max_rounds == 0 || !(s.init_noise >= 0.0) {
            return bad("ib.solver needs tol > 0, max_rounds >= 1, init_noise >= 0".into());
        }
        self.baselines.nk99.params(self.domain.n, 0).validate().map_err(config_err)?;
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }
}

/// Recursive table merge; `overlay` wins on scalars and arrays.
fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
