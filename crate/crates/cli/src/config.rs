//! Run settings: built-in defaults, then an optional TOML file, then flags.
//!
//! Every key of the file mirrors a command-line flag (dashes become
//! underscores). Example:
//!
//! ```toml
//! seed = 7
//! grid = "20x20"
//! swarm = 100
//! sensor_model = "C"
//! mask = "none"          # none | partial | full
//! noise = 0.0
//! out = "runs/20x20"
//! precision = "f64"      # f64 | f32
//! threads = 1
//!
//! population = 50
//! generations = 100
//! evals = 10
//! eval_length = 500
//! mutation_rate = 0.1
//! elitism = 1
//! seeding = "per-generation"   # per-generation | fixed
//! runs = 1
//!
//! repeats = 20           # rerun and reposition damage
//! rect = "0,0,4,4"       # damage area: x_min,y_min,x_max,y_max
//! mode = "remove"        # remove | reposition
//! steps = 500            # steps after damage
//! levels = [0.0, 0.05, 0.10, 0.15]
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use minsurprise::experiment::{DamageMode, Rect};
use minsurprise::{EvalSeeding, EvolutionConfig, MaskKind, NoiseModel, SensorModel, SimConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    pub fn parse(s: &str) -> Result<Precision> {
        match s {
            "f64" => Ok(Precision::F64),
            "f32" => Ok(Precision::F32),
            _ => bail!("unknown precision {s:?} (expected f64 or f32)"),
        }
    }
}

/// Optional settings as they appear in a file or on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<String>,
    pub swarm: Option<usize>,
    pub sensor_model: Option<String>,
    pub mask: Option<String>,
    pub noise: Option<f64>,
    pub out: Option<PathBuf>,
    pub precision: Option<String>,
    pub threads: Option<usize>,
    pub population: Option<usize>,
    pub generations: Option<usize>,
    pub evals: Option<usize>,
    pub eval_length: Option<usize>,
    pub mutation_rate: Option<f64>,
    pub elitism: Option<usize>,
    pub seeding: Option<String>,
    pub runs: Option<usize>,
    pub repeats: Option<usize>,
    pub rect: Option<String>,
    pub mode: Option<String>,
    pub steps: Option<usize>,
    pub levels: Option<Vec<f64>>,
}

macro_rules! layer {
    ($base:ident, $top:ident, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Overrides> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &Overrides) -> Overrides {
        layer!(
            self, top, seed, grid, swarm, sensor_model, mask, noise, out, precision, threads, population,
            generations, evals, eval_length, mutation_rate, elitism, seeding, runs, repeats, rect, mode, steps,
            levels
        );
        self
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub evolution: EvolutionConfig,
    pub out: PathBuf,
    pub precision: Precision,
    pub threads: Option<usize>,
    pub runs: usize,
    pub repeats: usize,
    pub rect: Option<Rect>,
    pub mode: DamageMode,
    pub steps: usize,
    pub levels: Vec<f64>,
}

pub fn parse_grid(text: &str) -> Result<(usize, usize)> {
    let (w, h) = text
        .split_once(['x', 'X'])
        .with_context(|| format!("grid {text:?} is not of the form WxH"))?;
    let w: usize = w.trim().parse().with_context(|| format!("grid width in {text:?}"))?;
    let h: usize = h.trim().parse().with_context(|| format!("grid height in {text:?}"))?;
    if w == 0 || h == 0 {
        bail!("grid {text:?} has a zero side");
    }
    Ok((w, h))
}

impl Settings {
    pub fn resolve(o: &Overrides) -> Result<Settings> {
        let defaults = EvolutionConfig::default();
        let (width, height) = match &o.grid {
            Some(g) => parse_grid(g)?,
            None => (defaults.sim.width, defaults.sim.height),
        };
        let sensor_model = match &o.sensor_model {
            Some(m) => SensorModel::parse(m).with_context(|| format!("unknown sensor model {m:?}"))?,
            None => defaults.sim.sensor_model,
        };
        let mask = match &o.mask {
            Some(m) => MaskKind::parse(m).with_context(|| format!("unknown mask {m:?} (none, partial, full)"))?,
            None => defaults.mask,
        };
        let seeding = match &o.seeding {
            Some(s) => EvalSeeding::parse(s).with_context(|| format!("unknown seeding {s:?}"))?,
            None => defaults.seeding,
        };
        let noise = NoiseModel::new(o.noise.unwrap_or(0.0))?;
        let evolution = EvolutionConfig {
            sim: SimConfig {
                width,
                height,
                swarm_size: o.swarm.unwrap_or(defaults.sim.swarm_size),
                sensor_model,
                noise,
                eval_length: o.eval_length.unwrap_or(defaults.sim.eval_length),
            },
            mask,
            population_size: o.population.unwrap_or(defaults.population_size),
            generations: o.generations.unwrap_or(defaults.generations),
            evals_per_genome: o.evals.unwrap_or(defaults.evals_per_genome),
            elitism: o.elitism.unwrap_or(defaults.elitism),
            mutation_rate: o.mutation_rate.unwrap_or(defaults.mutation_rate),
            seed: o.seed.unwrap_or(defaults.seed),
            seeding,
            parallel: o.threads != Some(1),
        };
        evolution.validate()?;
        let rect = o.rect.as_deref().map(Rect::parse).transpose()?;
        if let Some(r) = rect {
            if r.x_max >= width || r.y_max >= height {
                bail!("damage area {r} lies outside the {width}x{height} grid");
            }
        }
        let mode = match &o.mode {
            Some(m) => DamageMode::parse(m).with_context(|| format!("unknown damage mode {m:?}"))?,
            None => DamageMode::Remove,
        };
        let runs = o.runs.unwrap_or(1);
        let repeats = o.repeats.unwrap_or(20);
        if runs == 0 || repeats == 0 {
            bail!("runs and repeats must be at least 1");
        }
        let levels = o.levels.clone().unwrap_or_else(|| vec![0.0, 0.05, 0.10, 0.15]);
        for &p in &levels {
            NoiseModel::new(p)?;
        }
        if o.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(Settings {
            evolution,
            out: o.out.clone().unwrap_or_else(|| PathBuf::from("runs")),
            precision: o.precision.as_deref().map(Precision::parse).transpose()?.unwrap_or_default(),
            threads: o.threads,
            runs,
            repeats,
            rect,
            mode,
            steps: o.steps.unwrap_or(500),
            levels,
        })
    }

    /// The settings as a file that reproduces them.
    pub fn to_overrides(&self) -> Overrides {
        let e = &self.evolution;
        Overrides {
            seed: Some(e.seed),
            grid: Some(format!("{}x{}", e.sim.width, e.sim.height)),
            swarm: Some(e.sim.swarm_size),
            sensor_model: Some(e.sim.sensor_model.name().to_string()),
            mask: Some(e.mask.name().to_string()),
            noise: Some(e.sim.noise.flip_probability()),
            out: Some(self.out.clone()),
            precision: Some(
                match self.precision {
                    Precision::F64 => "f64",
                    Precision::F32 => "f32",
                }
                .to_string(),
            ),
            threads: self.threads,
            population: Some(e.population_size),
            generations: Some(e.generations),
            evals: Some(e.evals_per_genome),
            eval_length: Some(e.sim.eval_length),
            mutation_rate: Some(e.mutation_rate),
            elitism: Some(e.elitism),
            seeding: Some(e.seeding.name().to_string()),
            runs: Some(self.runs),
            repeats: Some(self.repeats),
            rect: self.rect.map(|r| r.to_string()),
            mode: Some(self.mode.name().to_string()),
            steps: Some(self.steps),
            levels: Some(self.levels.clone()),
        }
    }
}
