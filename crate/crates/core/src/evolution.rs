//! Swarm simulation with a shared controller, genome evaluation and the
//! generational genetic algorithm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{random_placement, Action, NoiseModel, Pose, SensorModel, SensorReading, SensorTable, TorusGrid};
use crate::metrics;
use crate::network::{fires, tanh, GenomeOf, MaskKind, PredictionTopology};
use crate::scalar::Scalar;
use crate::seed::{derive, tag};

/// World parameters of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub width: usize,
    pub height: usize,
    pub swarm_size: usize,
    pub sensor_model: SensorModel,
    pub noise: NoiseModel,
    /// Time steps per evaluation.
    pub eval_length: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            width: 15,
            height: 15,
            swarm_size: 100,
            sensor_model: SensorModel::C,
            noise: NoiseModel::NONE,
            eval_length: 500,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid {
                width: self.width,
                height: self.height,
            });
        }
        if self.swarm_size == 0 {
            return Err(Error::InvalidConfig("swarm size must be positive".into()));
        }
        if self.swarm_size > self.width * self.height {
            return Err(Error::Overcrowded {
                requested: self.swarm_size,
                capacity: self.width * self.height,
            });
        }
        if self.eval_length == 0 {
            return Err(Error::InvalidConfig("evaluation length must be positive".into()));
        }
        Ok(())
    }

    /// Robot-steps simulated by one evaluation.
    pub fn robot_steps(&self) -> u64 {
        (self.swarm_size * self.eval_length) as u64
    }
}

/// How the evaluation seeds of a generation are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalSeeding {
    /// All genomes of a generation share one seed set, redrawn every generation.
    #[default]
    PerGeneration,
    /// The same seed set in every generation.
    Fixed,
}

impl EvalSeeding {
    pub fn name(self) -> &'static str {
        match self {
            EvalSeeding::PerGeneration => "per-generation",
            EvalSeeding::Fixed => "fixed",
        }
    }

    pub fn parse(name: &str) -> Option<EvalSeeding> {
        match name {
            "per-generation" => Some(EvalSeeding::PerGeneration),
            "fixed" => Some(EvalSeeding::Fixed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub sim: SimConfig,
    pub mask: MaskKind,
    pub population_size: usize,
    pub generations: usize,
    pub evals_per_genome: usize,
    pub elitism: usize,
    pub mutation_rate: f64,
    pub seed: u64,
    pub seeding: EvalSeeding,
    /// Evaluate the genomes of a generation on the rayon pool.
    pub parallel: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            sim: SimConfig::default(),
            mask: MaskKind::None,
            population_size: 50,
            generations: 100,
            evals_per_genome: 10,
            elitism: 1,
            mutation_rate: 0.1,
            seed: 0,
            seeding: EvalSeeding::PerGeneration,
            parallel: true,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        for (name, value) in [
            ("population size", self.population_size),
            ("generations", self.generations),
            ("evaluations per genome", self.evals_per_genome),
        ] {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.elitism > self.population_size {
            return Err(Error::InvalidConfig(format!(
                "elitism {} exceeds population size {}",
                self.elitism, self.population_size
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::InvalidConfig(format!(
                "mutation rate {} outside [0, 1]",
                self.mutation_rate
            )));
        }
        Ok(())
    }

    /// Total robot-steps an [`evolve`] call simulates.
    pub fn budget(&self) -> u64 {
        (self.generations * self.population_size * self.evals_per_genome) as u64 * self.sim.robot_steps()
    }

    /// Evaluation seeds used in `generation`.
    pub fn eval_seeds(&self, generation: usize) -> Vec<u64> {
        let g = match self.seeding {
            EvalSeeding::PerGeneration => generation as u64,
            EvalSeeding::Fixed => 0,
        };
        (0..self.evals_per_genome)
            .map(|r| derive(self.seed, &[tag::EVAL, g, r as u64]))
            .collect()
    }
}

/// Unknown entry in the action lookup table.
const UNKNOWN: u8 = 0xFF;

/// Fast evaluation of one genome's networks, shared by all robots.
///
/// Actions only depend on the binary inputs, so they are memoized in a table
/// indexed by the input bits. The prediction network skips inactive inputs.
/// Both give exactly the results of the reference networks.
pub struct Controller<'g, S> {
    genome: &'g GenomeOf<S>,
    sensors: usize,
    actions: Vec<u8>,
    prediction: Option<FastPrediction<S>>,
    fixed_at: u32,
    fixed_val: u32,
}

struct FastPrediction<S> {
    hidden: usize,
    /// Input-to-hidden weights, one contiguous column per input.
    columns: Vec<S>,
    bias: Vec<S>,
    recurrent: Vec<S>,
    /// Hidden-to-output weights, one contiguous column per hidden unit.
    output_columns: Vec<S>,
    output_bias: Vec<S>,
    /// Sensor index of each network output.
    targets: Vec<usize>,
    scratch: Vec<S>,
    out_scratch: Vec<S>,
}

impl<S: Scalar> FastPrediction<S> {
    fn new(t: PredictionTopology, weights: &[S], targets: Vec<usize>) -> Self {
        let (w_ih, rest) = weights.split_at(t.inputs * t.hidden);
        let (b_h, rest) = rest.split_at(t.hidden);
        let (w_self, rest) = rest.split_at(t.hidden);
        let (w_ho, b_o) = rest.split_at(t.hidden * t.outputs);
        let mut columns = Vec::with_capacity(w_ih.len());
        for i in 0..t.inputs {
            columns.extend((0..t.hidden).map(|j| w_ih[j * t.inputs + i]));
        }
        let mut output_columns = Vec::with_capacity(w_ho.len());
        for j in 0..t.hidden {
            output_columns.extend((0..t.outputs).map(|k| w_ho[k * t.hidden + j]));
        }
        FastPrediction {
            hidden: t.hidden,
            columns,
            bias: b_h.to_vec(),
            recurrent: w_self.to_vec(),
            output_columns,
            output_bias: b_o.to_vec(),
            targets,
            scratch: vec![S::zero(); t.hidden],
            out_scratch: vec![S::zero(); t.outputs],
        }
    }

    #[inline]
    fn forward(&mut self, state: &mut [S], mut inputs: u32) -> u32 {
        let h = self.hidden;
        let z = &mut self.scratch;
        z.copy_from_slice(&self.bias);
        while inputs != 0 {
            let i = inputs.trailing_zeros() as usize;
            inputs &= inputs - 1;
            for (acc, &w) in z.iter_mut().zip(&self.columns[i * h..(i + 1) * h]) {
                *acc = *acc + w;
            }
        }
        for ((s, &zj), &r) in state.iter_mut().zip(z.iter()).zip(&self.recurrent) {
            *s = tanh(zj + r * *s);
        }
        // same summation order per output as the row-wise reference
        let out = &mut self.out_scratch;
        let k_len = out.len();
        out.copy_from_slice(&self.output_bias);
        for (j, &s) in state.iter().enumerate() {
            for (acc, &w) in out.iter_mut().zip(&self.output_columns[j * k_len..(j + 1) * k_len]) {
                *acc = *acc + w * s;
            }
        }
        let mut bits = 0u32;
        for (&z, &sensor) in out.iter().zip(&self.targets) {
            if fires(z) {
                bits |= 1 << sensor;
            }
        }
        bits
    }
}

impl<'g, S: Scalar> Controller<'g, S> {
    pub fn new(genome: &'g GenomeOf<S>) -> Self {
        let sensors = genome.model().len();
        let (fixed_at, fixed_val) = genome.mask().bits();
        let prediction = genome.prediction_topology().map(|t| {
            FastPrediction::new(t, genome.prediction_weights(), genome.mask().free_sensors().collect())
        });
        Controller {
            genome,
            sensors,
            actions: vec![UNKNOWN; 1 << (sensors + 1)],
            prediction,
            fixed_at,
            fixed_val,
        }
    }

    pub fn genome(&self) -> &'g GenomeOf<S> {
        self.genome
    }

    /// Hidden units per robot.
    pub fn hidden_len(&self) -> usize {
        self.prediction.as_ref().map_or(0, |p| p.hidden)
    }

    #[inline]
    pub fn action(&mut self, sensors: SensorReading, last_action: bool) -> Action {
        let key = sensors.bits() as usize | (usize::from(last_action) << self.sensors);
        let mut code = self.actions[key];
        if code == UNKNOWN {
            let a = self
                .genome
                .action_net()
                .forward(sensors, last_action)
                .expect("reading length matches the genome");
            code = u8::from(a.move_forward) | u8::from(a.turn == crate::grid::Turn::Right) << 1;
            self.actions[key] = code;
        }
        Action {
            move_forward: code & 1 != 0,
            turn: if code & 2 != 0 {
                crate::grid::Turn::Right
            } else {
                crate::grid::Turn::Left
            },
        }
    }

    /// Predicted next reading; `state` is this robot's hidden activations.
    #[inline]
    pub fn predict(&mut self, state: &mut [S], sensors: SensorReading, next_action: bool) -> SensorReading {
        let fixed = self.fixed_val & self.fixed_at;
        let bits = match &mut self.prediction {
            None => fixed,
            Some(p) => {
                let inputs = sensors.bits() | u32::from(next_action) << self.sensors;
                fixed | p.forward(state, inputs)
            }
        };
        SensorReading::new(bits, self.sensors)
    }
}

/// Last prediction of one robot, reusable while its hidden state is a fixed
/// point of the recurrence and its inputs do not change.
#[derive(Debug, Clone, Copy, Default)]
struct Memo {
    inputs: u32,
    prediction: SensorReading,
    fixed_point: bool,
}

/// Everything that happened in one simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub actions: Vec<Action>,
    pub temperature: f64,
    /// Correct predicted bits over all robots this step.
    pub correct: u64,
}

/// A swarm running one genome from a given configuration.
///
/// Readings are taken right after construction and after every step, with
/// noise applied; the prediction made during a step is scored against the
/// reading taken after it.
pub struct Simulation<'c, 'g, S> {
    controller: &'c mut Controller<'g, S>,
    table: SensorTable,
    grid: TorusGrid,
    noise: NoiseModel,
    noise_rng: ChaCha8Rng,
    readings: Vec<SensorReading>,
    last_action: Vec<bool>,
    hidden: Vec<S>,
    previous: Vec<S>,
    memo: Vec<Memo>,
    predictions: Vec<SensorReading>,
    correct: u64,
    scored_bits: u64,
    steps: usize,
}

impl<'c, 'g, S: Scalar> Simulation<'c, 'g, S> {
    /// Starts from `grid` with zero hidden states and every last action set
    /// to "rotate".
    pub fn new(controller: &'c mut Controller<'g, S>, grid: TorusGrid, noise: NoiseModel, noise_seed: u64) -> Self {
        let model = controller.genome().model();
        let table = SensorTable::new(grid.width(), grid.height(), model);
        let n = grid.len();
        let hidden = vec![S::zero(); n * controller.hidden_len()];
        let mut sim = Simulation {
            controller,
            table,
            grid,
            noise,
            noise_rng: ChaCha8Rng::seed_from_u64(noise_seed),
            readings: Vec::with_capacity(n),
            last_action: vec![false; n],
            hidden,
            previous: Vec::new(),
            memo: vec![Memo::default(); n],
            predictions: vec![SensorReading::new(0, model.len()); n],
            correct: 0,
            scored_bits: 0,
            steps: 0,
        };
        sim.readings = sim.read_all();
        sim
    }

    fn read_all(&mut self) -> Vec<SensorReading> {
        let grid = &self.grid;
        let table = &self.table;
        let rng = &mut self.noise_rng;
        let noise = self.noise;
        grid.robots()
            .iter()
            .map(|pose| noise.apply(table.read(grid, pose), rng))
            .collect()
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn into_grid(self) -> TorusGrid {
        self.grid
    }

    /// Current (noisy) readings, one per robot.
    pub fn readings(&self) -> &[SensorReading] {
        &self.readings
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Prediction accuracy over all steps so far.
    pub fn fitness(&self) -> f64 {
        if self.scored_bits == 0 {
            return 0.0;
        }
        self.correct as f64 / self.scored_bits as f64
    }

    pub fn step(&mut self) -> StepOutcome {
        let n = self.grid.len();
        let h = self.controller.hidden_len();
        let mut actions = Vec::with_capacity(n);
        for id in 0..n {
            let reading = self.readings[id];
            let action = self.controller.action(reading, self.last_action[id]);
            let state = &mut self.hidden[id * h..(id + 1) * h];
            let key = reading.bits() | u32::from(action.value()) << 31;
            let memo = &mut self.memo[id];
            self.predictions[id] = if memo.fixed_point && memo.inputs == key {
                // same inputs and a state that maps to itself: same result
                memo.prediction
            } else {
                self.previous.clear();
                self.previous.extend_from_slice(state);
                let p = self.controller.predict(state, reading, action.value());
                *memo = Memo {
                    inputs: key,
                    prediction: p,
                    fixed_point: h > 0 && self.previous[..] == state[..],
                };
                p
            };
            self.last_action[id] = action.value();
            actions.push(action);
        }
        let before: Vec<Pose> = self.grid.robots().to_vec();
        self.grid
            .step_swarm(&actions)
            .expect("one action per robot");
        let temperature =
            metrics::temperature(&before, self.grid.robots(), self.grid.width(), self.grid.height())
                .expect("swarm size is unchanged by a step");
        self.readings = self.read_all();
        let correct: u64 = self
            .predictions
            .iter()
            .zip(&self.readings)
            .map(|(p, s)| u64::from(p.matches(*s)))
            .sum();
        self.correct += correct;
        self.scored_bits += (n * self.table.model().len()) as u64;
        self.steps += 1;
        StepOutcome {
            actions,
            temperature,
            correct,
        }
    }
}

/// Recorded evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub fitness: f64,
    pub initial: TorusGrid,
    pub final_grid: TorusGrid,
    /// Temperature of every step.
    pub temperatures: Vec<f64>,
    /// `actions[t][n]`: robot `n` chose to move forward at step `t`.
    pub actions: Vec<Vec<bool>>,
}

impl RunRecord {
    /// Movement over the trailing window of the grid.
    pub fn movement(&self) -> Result<f64> {
        let tau = metrics::tail_window(self.final_grid.width(), self.final_grid.height());
        metrics::movement(&self.temperatures, tau.min(self.temperatures.len()))
    }

    pub fn intended_movement(&self) -> Result<f64> {
        let tau = metrics::tail_window(self.final_grid.width(), self.final_grid.height());
        metrics::intended_movement(&self.actions, tau.min(self.actions.len()))
    }

    /// Median temperature of the last `steps` steps.
    pub fn final_temperature(&self, steps: usize) -> f64 {
        let tail = &self.temperatures[self.temperatures.len().saturating_sub(steps)..];
        median(tail)
    }
}

fn placement(config: &SimConfig, run_seed: u64) -> Result<TorusGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(run_seed, &[tag::PLACEMENT]));
    random_placement(config.width, config.height, config.swarm_size, &mut rng)
}

fn check_genome<S: Scalar>(genome: &GenomeOf<S>, config: &SimConfig) -> Result<()> {
    if genome.model() != config.sensor_model {
        return Err(Error::InvalidConfig(format!(
            "genome uses sensor model {} but the configuration asks for {}",
            genome.model(),
            config.sensor_model
        )));
    }
    config.validate()
}

fn run_fitness<S: Scalar>(controller: &mut Controller<'_, S>, config: &SimConfig, run_seed: u64) -> Result<f64> {
    let grid = placement(config, run_seed)?;
    let mut sim = Simulation::new(controller, grid, config.noise, derive(run_seed, &[tag::NOISE]));
    for _ in 0..config.eval_length {
        sim.step();
    }
    Ok(sim.fitness())
}

/// Runs one evaluation from a seeded random placement and records it.
pub fn simulate_evaluation<S: Scalar>(genome: &GenomeOf<S>, config: &SimConfig, run_seed: u64) -> Result<RunRecord> {
    check_genome(genome, config)?;
    let mut controller = Controller::new(genome);
    simulate_with(&mut controller, config, run_seed)
}

fn simulate_with<S: Scalar>(controller: &mut Controller<'_, S>, config: &SimConfig, run_seed: u64) -> Result<RunRecord> {
    let initial = placement(config, run_seed)?;
    let mut sim = Simulation::new(controller, initial.clone(), config.noise, derive(run_seed, &[tag::NOISE]));
    let mut temperatures = Vec::with_capacity(config.eval_length);
    let mut actions = Vec::with_capacity(config.eval_length);
    for _ in 0..config.eval_length {
        let out = sim.step();
        temperatures.push(out.temperature);
        actions.push(out.actions.iter().map(|a| a.move_forward).collect());
    }
    Ok(RunRecord {
        seed: run_seed,
        fitness: sim.fitness(),
        initial,
        final_grid: sim.into_grid(),
        temperatures,
        actions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    /// Minimum over the runs.
    pub fitness: f64,
    pub run_fitnesses: Vec<f64>,
}

/// Evaluates a genome once per seed; its fitness is the worst run.
pub fn evaluate_genome<S: Scalar>(genome: &GenomeOf<S>, config: &SimConfig, seeds: &[u64]) -> Result<EvaluationResult> {
    check_genome(genome, config)?;
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one evaluation seed is required".into()));
    }
    let mut controller = Controller::new(genome);
    let run_fitnesses = seeds
        .iter()
        .map(|&s| run_fitness(&mut controller, config, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationResult {
        fitness: run_fitnesses.iter().copied().fold(f64::INFINITY, f64::min),
        run_fitnesses,
    })
}

/// Roulette-wheel selection; uniform when every fitness is zero.
pub fn select_proportionate<R: Rng + ?Sized>(fitnesses: &[f64], rng: &mut R) -> Result<usize> {
    if fitnesses.is_empty() {
        return Err(Error::InvalidConfig("selection from an empty population".into()));
    }
    if fitnesses.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::InvalidConfig("fitness values must be finite and non-negative".into()));
    }
    let total: f64 = fitnesses.iter().sum();
    if total <= 0.0 {
        return Ok(rng.gen_range(0..fitnesses.len()));
    }
    let target = rng.gen::<f64>() * total;
    let mut cumulative = 0.0;
    for (i, &f) in fitnesses.iter().enumerate() {
        cumulative += f;
        if target < cumulative {
            return Ok(i);
        }
    }
    // rounding left the target at the very end of the wheel
    Ok(fitnesses.iter().rposition(|&f| f > 0.0).expect("total is positive"))
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub median_fitness: f64,
    /// Index of the best genome in this generation's population.
    pub best_index: usize,
    /// Robot-steps simulated so far, including this generation.
    pub robot_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionOutcome<S> {
    /// Best genome of the last generation.
    pub best: GenomeOf<S>,
    pub best_fitness: f64,
    pub history: Vec<GenerationRecord>,
    pub robot_steps: u64,
}

/// Runs the genetic algorithm.
pub fn evolve<S: Scalar>(config: &EvolutionConfig) -> Result<EvolutionOutcome<S>> {
    evolve_with(config, |_| {})
}

/// [`evolve`], calling `on_generation` after each generation is evaluated.
pub fn evolve_with<S: Scalar>(
    config: &EvolutionConfig,
    mut on_generation: impl FnMut(&GenerationRecord),
) -> Result<EvolutionOutcome<S>> {
    config.validate()?;
    let model = config.sim.sensor_model;
    let mask = config.mask.build(model);
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive(config.seed, &[tag::INIT]));
    let mut population: Vec<GenomeOf<S>> = (0..config.population_size)
        .map(|_| GenomeOf::random(model, mask.clone(), &mut init_rng))
        .collect();
    let per_generation = (config.population_size * config.evals_per_genome) as u64 * config.sim.robot_steps();
    let mut history = Vec::with_capacity(config.generations);
    let mut robot_steps = 0u64;

    for generation in 0..config.generations {
        let seeds = config.eval_seeds(generation);
        let evaluate = |g: &GenomeOf<S>| evaluate_genome(g, &config.sim, &seeds).map(|r| r.fitness);
        let fitnesses: Vec<f64> = if config.parallel {
            population.par_iter().map(evaluate).collect::<Result<_>>()?
        } else {
            population.iter().map(evaluate).collect::<Result<_>>()?
        };
        robot_steps += per_generation;

        let mut order: Vec<usize> = (0..fitnesses.len()).collect();
        // stable: ties keep the lower index, so the elite wins them
        order.sort_by(|&a, &b| fitnesses[b].total_cmp(&fitnesses[a]));
        let best_index = order[0];
        let record = GenerationRecord {
            generation,
            best_fitness: fitnesses[best_index],
            median_fitness: median(&fitnesses),
            best_index,
            robot_steps,
        };
        on_generation(&record);
        history.push(record);

        if generation + 1 == config.generations {
            return Ok(EvolutionOutcome {
                best: population.swap_remove(best_index),
                best_fitness: fitnesses[best_index],
                history,
                robot_steps,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, &[tag::BREED, generation as u64]));
        let mut next = Vec::with_capacity(config.population_size);
        next.extend(order[..config.elitism].iter().map(|&i| population[i].clone()));
        while next.len() < config.population_size {
            let parent = select_proportionate(&fitnesses, &mut rng)?;
            next.push(population[parent].mutate(config.mutation_rate, &mut rng));
        }
        population = next;
    }
    unreachable!("generations is positive")
}
