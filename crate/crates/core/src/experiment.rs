//! Experiment protocols built on top of evolution: reruns with fresh
//! placements, area damage and recovery, noise sweeps, and their CSV output.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classify, PatternLabel, StructureReport};
use crate::error::{Error, Result};
use crate::evolution::{
    evolve, median, simulate_evaluation, Controller, EvolutionConfig, EvolutionOutcome, GenerationRecord, RunRecord,
    SimConfig, Simulation,
};
use crate::grid::{NoiseModel, TorusGrid};
use crate::metrics;
use crate::network::GenomeOf;
use crate::scalar::Scalar;
use crate::seed::{derive, tag};

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl Rect {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Rect> {
        if x_min > x_max || y_min > y_max {
            return Err(Error::InvalidConfig(format!(
                "empty rectangle ({x_min}, {y_min})-({x_max}, {y_max})"
            )));
        }
        Ok(Rect {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Parses `x_min,y_min,x_max,y_max`.
    pub fn parse(text: &str) -> Result<Rect> {
        let parts: Vec<usize> = text
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidConfig(format!("rectangle {text:?}: {e}")))?;
        match parts[..] {
            [a, b, c, d] => Rect::new(a, b, c, d),
            _ => Err(Error::InvalidConfig(format!(
                "rectangle {text:?}: expected x_min,y_min,x_max,y_max"
            ))),
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn area(&self) -> usize {
        (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)
    }

    pub fn check_fits(&self, grid: &TorusGrid) -> Result<()> {
        if self.x_max >= grid.width() || self.y_max >= grid.height() {
            return Err(Error::OutOfBounds {
                x: self.x_max,
                y: self.y_max,
                width: grid.width(),
                height: grid.height(),
            });
        }
        Ok(())
    }
}

/// Damage areas A, B and C on a 15x15 grid. Only robot counts (12, 17 and 8
/// in a line structure) are known for the originals, so these are
/// approximations sized to hold about that many robots at density 0.44.
pub const DAMAGE_AREAS: [(char, Rect); 3] = [
    ('A', Rect { x_min: 0, y_min: 0, x_max: 4, y_max: 4 }),
    ('B', Rect { x_min: 8, y_min: 3, x_max: 13, y_max: 8 }),
    ('C', Rect { x_min: 5, y_min: 10, x_max: 8, y_max: 13 }),
];

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

/// Deletes every robot inside `rect` and returns how many were removed.
pub fn remove_area(grid: &mut TorusGrid, rect: &Rect) -> Result<usize> {
    rect.check_fits(grid)?;
    Ok(grid.retain(|p| !rect.contains(p.x, p.y)))
}

/// Moves every robot inside `rect` to a uniformly drawn free cell outside
/// it, redrawing until one is found. Headings are kept. Returns how many
/// robots were moved.
pub fn reposition_area<R: Rng + ?Sized>(grid: &mut TorusGrid, rect: &Rect, rng: &mut R) -> Result<usize> {
    rect.check_fits(grid)?;
    let inside: Vec<usize> = (0..grid.len())
        .filter(|&id| {
            let p = grid.pose(id);
            rect.contains(p.x, p.y)
        })
        .collect();
    let free = grid.area() - rect.area() - (grid.len() - inside.len());
    if inside.len() > free {
        return Err(Error::NoRoomOutside {
            robots: inside.len(),
            free,
        });
    }
    for &id in &inside {
        loop {
            let x = rng.gen_range(0..grid.width());
            let y = rng.gen_range(0..grid.height());
            if !rect.contains(x, y) && !grid.is_occupied(x, y) {
                grid.relocate(id, x, y)?;
                break;
            }
        }
    }
    Ok(inside.len())
}

/// Label of a set of reruns: the label of more than half of them, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateLabel {
    Consensus(PatternLabel),
    Diverse,
}

impl AggregateLabel {
    pub fn from_reports(reports: &[StructureReport]) -> AggregateLabel {
        PatternLabel::ALL
            .into_iter()
            .find(|&l| 2 * reports.iter().filter(|r| r.winner == l).count() > reports.len())
            .map_or(AggregateLabel::Diverse, AggregateLabel::Consensus)
    }
}

impl fmt::Display for AggregateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregateLabel::Consensus(l) => write!(f, "{l}"),
            AggregateLabel::Diverse => f.write_str("diverse"),
        }
    }
}

/// One recorded evaluation plus the classification of its final configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedRun {
    pub record: RunRecord,
    pub report: StructureReport,
}

impl ClassifiedRun {
    pub fn new(record: RunRecord) -> ClassifiedRun {
        let report = classify(&record.final_grid);
        ClassifiedRun { record, report }
    }

    pub fn metrics_row(&self, run: usize) -> MetricsRow {
        MetricsRow {
            run,
            seed: self.record.seed,
            fitness: self.record.fitness,
            final_temperature: self.record.temperatures.last().copied().unwrap_or(0.0),
            movement: self.record.movement().unwrap_or(f64::NAN),
            intended_movement: self.record.intended_movement().unwrap_or(f64::NAN),
            label: self.report.detailed_label(),
            fraction: self.report.winner_fraction(),
            similarity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerunSummary {
    pub runs: Vec<ClassifiedRun>,
    pub aggregate: AggregateLabel,
}

/// Seeds used by [`rerun_best`].
pub fn rerun_seeds(seed: u64, repeats: usize) -> Vec<u64> {
    (0..repeats).map(|i| derive(seed, &[tag::RERUN, i as u64])).collect()
}

/// Evaluates `genome` from `repeats` fresh random placements and classifies
/// every final configuration.
pub fn rerun_best<S: Scalar>(genome: &GenomeOf<S>, config: &SimConfig, seed: u64, repeats: usize) -> Result<RerunSummary> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeat count must be at least 1".into()));
    }
    let runs = rerun_seeds(seed, repeats)
        .into_par_iter()
        .map(|s| simulate_evaluation(genome, config, s).map(ClassifiedRun::new))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<StructureReport> = runs.iter().map(|r| r.report.clone()).collect();
    Ok(RerunSummary {
        aggregate: AggregateLabel::from_reports(&reports),
        runs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DamageMode {
    Remove,
    Reposition,
}

impl DamageMode {
    pub fn name(self) -> &'static str {
        match self {
            DamageMode::Remove => "remove",
            DamageMode::Reposition => "reposition",
        }
    }

    pub fn parse(name: &str) -> Option<DamageMode> {
        match name {
            "remove" => Some(DamageMode::Remove),
            "reposition" => Some(DamageMode::Reposition),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DamageConfig {
    pub rect: Rect,
    pub mode: DamageMode,
    /// Steps simulated after the damage.
    pub extra_steps: usize,
    /// Repetitions for reposition damage; removal always runs once.
    pub repeats: usize,
}

impl DamageConfig {
    pub fn new(rect: Rect, mode: DamageMode) -> DamageConfig {
        DamageConfig {
            rect,
            mode,
            extra_steps: 500,
            repeats: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DamageRecord {
    pub seed: u64,
    /// Robots removed or repositioned.
    pub affected: usize,
    /// Winning label of the undamaged configuration; memberships refer to it.
    pub label: PatternLabel,
    pub membership_before: f64,
    pub membership_after_damage: f64,
    pub membership_end: f64,
    /// Prediction accuracy over the recovery steps.
    pub fitness: f64,
    /// Poses of the undamaged configuration recovered at the end, over the
    /// original swarm size.
    pub similarity: f64,
    pub damaged: TorusGrid,
    pub final_grid: TorusGrid,
}

/// Damages the final configuration `base` of a run of `genome`, lets the
/// swarm continue with reset hidden states, and compares the outcome with
/// the undamaged configuration. Headings are ignored in the comparison for
/// triangular lattices.
pub fn run_damage_experiment<S: Scalar>(
    genome: &GenomeOf<S>,
    base: &TorusGrid,
    noise: NoiseModel,
    damage: &DamageConfig,
    seed: u64,
) -> Result<Vec<DamageRecord>> {
    damage.rect.check_fits(base)?;
    if damage.repeats == 0 {
        return Err(Error::InvalidConfig("repeat count must be at least 1".into()));
    }
    let before = classify(base);
    let label = before.winner;
    let repeats = match damage.mode {
        DamageMode::Remove => 1,
        DamageMode::Reposition => damage.repeats,
    };
    (0..repeats)
        .into_par_iter()
        .map(|i| {
            let run_seed = derive(seed, &[tag::DAMAGE, i as u64]);
            let mut grid = base.clone();
            let affected = match damage.mode {
                DamageMode::Remove => remove_area(&mut grid, &damage.rect)?,
                DamageMode::Reposition => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive(run_seed, &[tag::PLACEMENT]));
                    reposition_area(&mut grid, &damage.rect, &mut rng)?
                }
            };
            let damaged = grid.clone();
            let mut controller = Controller::new(genome);
            let mut sim = Simulation::new(&mut controller, grid, noise, derive(run_seed, &[tag::NOISE]));
            for _ in 0..damage.extra_steps {
                sim.step();
            }
            let fitness = sim.fitness();
            let final_grid = sim.into_grid();
            Ok(DamageRecord {
                seed: run_seed,
                affected,
                label,
                membership_before: before.fraction(label),
                membership_after_damage: classify(&damaged).fraction(label),
                membership_end: classify(&final_grid).fraction(label),
                fitness,
                similarity: metrics::similarity(
                    final_grid.robots(),
                    base.robots(),
                    base.len(),
                    label != PatternLabel::TriangularLattice,
                ),
                damaged,
                final_grid,
            })
        })
        .collect()
}

/// Result of one evolutionary run: the outcome plus the classified
/// evaluation of its best genome.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolvedRun<S> {
    pub seed: u64,
    pub outcome: EvolutionOutcome<S>,
    pub best_run: ClassifiedRun,
}

/// Evolves with `config` and classifies the best genome on the first
/// evaluation seed of the last generation, i.e. on a run it was scored on.
pub fn evolve_and_classify<S: Scalar>(config: &EvolutionConfig) -> Result<EvolvedRun<S>> {
    let outcome = evolve::<S>(config)?;
    let seed = config.eval_seeds(config.generations - 1)[0];
    let record = simulate_evaluation(&outcome.best, &config.sim, seed)?;
    Ok(EvolvedRun {
        seed: config.seed,
        outcome,
        best_run: ClassifiedRun::new(record),
    })
}

/// Master seeds of independent evolutionary runs.
pub fn run_seeds(seed: u64, runs: usize) -> Vec<u64> {
    (0..runs).map(|r| derive(seed, &[tag::SWEEP, r as u64])).collect()
}

/// Independent evolutionary runs of one configuration, each with its own
/// master seed from [`run_seeds`].
pub fn evolve_runs<S: Scalar>(config: &EvolutionConfig, runs: usize) -> Result<Vec<EvolvedRun<S>>> {
    run_seeds(config.seed, runs)
        .into_par_iter()
        .map(|seed| {
            let c = EvolutionConfig {
                seed,
                ..config.clone()
            };
            evolve_and_classify::<S>(&c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepLevel {
    pub noise: f64,
    pub best_fitnesses: Vec<f64>,
    pub labels: Vec<PatternLabel>,
}

impl SweepLevel {
    pub fn median_best_fitness(&self) -> f64 {
        median(&self.best_fitnesses)
    }

    pub fn label_fraction(&self, label: PatternLabel) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&l| l == label).count() as f64 / self.labels.len() as f64
    }

    pub fn summary_row(&self) -> SweepRow {
        let f = |l| self.label_fraction(l);
        SweepRow {
            noise: self.noise,
            runs: self.labels.len(),
            median_best_fitness: self.median_best_fitness(),
            line: f(PatternLabel::Line),
            pair: f(PatternLabel::Pair),
            aggregation: f(PatternLabel::Aggregation),
            clustering: f(PatternLabel::Clustering),
            loose_grouping: f(PatternLabel::LooseGrouping),
            random_dispersion: f(PatternLabel::RandomDispersion),
            square: f(PatternLabel::Square),
            triangular_lattice: f(PatternLabel::TriangularLattice),
        }
    }
}

/// Evolves `runs` times per noise level. Run `r` uses the same master seed
/// at every level, so level 0 is the noiseless pipeline itself.
pub fn run_noise_sweep<S: Scalar>(config: &EvolutionConfig, levels: &[f64], runs: usize) -> Result<Vec<SweepLevel>> {
    levels
        .iter()
        .map(|&p| {
            let mut c = config.clone();
            c.sim.noise = NoiseModel::new(p)?;
            let results = evolve_runs::<S>(&c, runs)?;
            Ok(SweepLevel {
                noise: p,
                best_fitnesses: results.iter().map(|r| r.outcome.best_fitness).collect(),
                labels: results.iter().map(|r| r.best_run.report.winner).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub generation: usize,
    pub best_fitness: f64,
    pub median_fitness: f64,
    pub robot_steps: u64,
}

impl From<&GenerationRecord> for GenerationRow {
    fn from(r: &GenerationRecord) -> Self {
        GenerationRow {
            generation: r.generation,
            best_fitness: r.best_fitness,
            median_fitness: r.median_fitness,
            robot_steps: r.robot_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run: usize,
    pub seed: u64,
    pub fitness: f64,
    pub final_temperature: f64,
    pub movement: f64,
    pub intended_movement: f64,
    pub label: String,
    pub fraction: f64,
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageRow {
    pub repeat: usize,
    pub seed: u64,
    pub mode: String,
    pub affected: usize,
    pub label: String,
    pub membership_before: f64,
    pub membership_after_damage: f64,
    pub membership_end: f64,
    pub fitness: f64,
    pub similarity: f64,
}

impl DamageRow {
    pub fn new(repeat: usize, mode: DamageMode, r: &DamageRecord) -> DamageRow {
        DamageRow {
            repeat,
            seed: r.seed,
            mode: mode.name().to_string(),
            affected: r.affected,
            label: r.label.to_string(),
            membership_before: r.membership_before,
            membership_after_damage: r.membership_after_damage,
            membership_end: r.membership_end,
            fitness: r.fitness,
            similarity: r.similarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub noise: f64,
    pub runs: usize,
    pub median_best_fitness: f64,
    pub line: f64,
    pub pair: f64,
    pub aggregation: f64,
    pub clustering: f64,
    pub loose_grouping: f64,
    pub random_dispersion: f64,
    pub square: f64,
    pub triangular_lattice: f64,
}

/// Writes serializable rows as a CSV file with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_generation_log(path: &Path, history: &[GenerationRecord]) -> Result<()> {
    write_csv(path, history.iter().map(GenerationRow::from))
}

pub fn write_snapshot(path: &Path, grid: &TorusGrid) -> Result<()> {
    fs::write(path, grid.to_ascii())?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<TorusGrid> {
    TorusGrid::from_ascii(&fs::read_to_string(path)?)
}

pub fn write_genome<S: Scalar>(path: &Path, genome: &GenomeOf<S>) -> Result<()> {
    fs::write(path, genome.to_text())?;
    Ok(())
}

pub fn read_genome<S: Scalar>(path: &Path) -> Result<GenomeOf<S>> {
    GenomeOf::from_text(&fs::read_to_string(path)?)
}
