//! Swarm self-assembly on a torus grid, evolved by rewarding nothing but the
//! accuracy of each robot's predictions of its own next sensor readings.
//!
//! Every robot carries an action network and a recurrent prediction network.
//! A genetic algorithm evolves the weights; the fitness of a genome is how
//! well its robots predict what they will sense. The structures the swarm
//! assembles into are a by-product, and are detected by [`classify`].
//!
//! ```
//! use minsurprise::{evolve, EvolutionConfig, Genome, SimConfig};
//!
//! let config = EvolutionConfig {
//!     sim: SimConfig { width: 8, height: 8, swarm_size: 10, eval_length: 20, ..SimConfig::default() },
//!     population_size: 4,
//!     generations: 2,
//!     evals_per_genome: 2,
//!     ..EvolutionConfig::default()
//! };
//! let outcome = evolve::<f64>(&config).unwrap();
//! let best: Genome = outcome.best;
//! assert!((0.0..=1.0).contains(&outcome.best_fitness));
//! # let _ = best;
//! ```

pub mod classify;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod grid;
pub mod metrics;
pub mod network;
pub mod scalar;
pub mod seed;

pub use classify::{classify, LineOrientation, PatternLabel, StructureReport};
pub use error::{Error, Result};
pub use evolution::{
    evaluate_genome, evolve, evolve_with, select_proportionate, simulate_evaluation, Controller, EvalSeeding,
    EvaluationResult, EvolutionConfig, EvolutionOutcome, GenerationRecord, RunRecord, SimConfig, Simulation,
};
pub use experiment::{
    remove_area, reposition_area, rerun_best, run_damage_experiment, run_noise_sweep, AggregateLabel, DamageConfig,
    DamageMode, DamageRecord, Rect,
};
pub use grid::{
    Action, Heading, NoiseModel, Pose, SensorModel, SensorReading, SensorTable, TorusGrid, Turn,
};
pub use network::{GenomeOf, MaskKind, PredefinedPredictions};
pub use scalar::Scalar;

/// Genome with double-precision weights.
pub type Genome = GenomeOf<f64>;
/// Genome with single-precision weights.
pub type Genome32 = GenomeOf<f32>;
pub type EvolutionOutcome64 = EvolutionOutcome<f64>;
pub type EvolutionOutcome32 = EvolutionOutcome<f32>;
