//! Measures simulated robot-steps per second for one generation.
//!
//! `cargo run --release -p minsurprise --example throughput [width] [height]`

use std::time::Instant;

use minsurprise::{evolve, EvolutionConfig, SimConfig};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (width, height) = (args.first().copied().unwrap_or(15), args.get(1).copied().unwrap_or(15));
    let config = EvolutionConfig {
        sim: SimConfig {
            width,
            height,
            ..SimConfig::default()
        },
        generations: 2,
        ..EvolutionConfig::default()
    };
    let start = Instant::now();
    let out = evolve::<f64>(&config).expect("valid configuration");
    let secs = start.elapsed().as_secs_f64();
    println!(
        "{width}x{height}: {} robot-steps in {secs:.2}s = {:.2e} robot-steps/s, best {:.3}",
        out.robot_steps,
        out.robot_steps as f64 / secs,
        out.best_fitness
    );
}
