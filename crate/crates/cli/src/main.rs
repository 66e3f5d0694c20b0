use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use minsurprise::experiment::{
    self, read_csv, read_genome, read_snapshot, rerun_best, run_damage_experiment, run_noise_sweep, write_csv,
    write_generation_log, write_genome, write_snapshot, ClassifiedRun, DamageConfig, DamageRow, GenerationRow,
    MetricsRow,
};
use minsurprise::{classify, evolve_with, simulate_evaluation, GenomeOf, Scalar};

mod config;

use config::{Overrides, Precision, Settings};

/// Evolve, rerun and damage self-assembling swarms driven by prediction accuracy.
#[derive(Debug, Parser)]
#[command(name = "minsurprise", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML file with default settings; flags override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid size, e.g. 15x15
    #[arg(long, global = true, value_name = "WxH")]
    grid: Option<String>,
    /// Number of robots
    #[arg(long, global = true, value_name = "N")]
    swarm: Option<usize>,
    /// A, B or C
    #[arg(long, global = true)]
    sensor_model: Option<String>,
    /// Predefined predictions: none, partial or full
    #[arg(long, global = true)]
    mask: Option<String>,
    /// Sensor bit-flip probability
    #[arg(long, global = true, value_name = "P")]
    noise: Option<f64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Weight precision for new genomes: f64 or f32
    #[arg(long, global = true)]
    precision: Option<String>,
    /// Worker threads (1 evaluates serially)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    population: Option<usize>,
    #[arg(long, global = true)]
    generations: Option<usize>,
    /// Evaluations per genome
    #[arg(long, global = true)]
    evals: Option<usize>,
    /// Time steps per evaluation
    #[arg(long, global = true)]
    eval_length: Option<usize>,
    #[arg(long, global = true)]
    mutation_rate: Option<f64>,
    #[arg(long, global = true)]
    elitism: Option<usize>,
    /// per-generation or fixed evaluation seeds
    #[arg(long, global = true)]
    seeding: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run evolution and store logs, best genome and final configuration
    Evolve {
        /// Independent runs
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Evaluate a stored genome from fresh random placements
    Rerun {
        #[arg(long, value_name = "FILE")]
        genome: PathBuf,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Remove or reposition the robots in an area and let the swarm recover
    Damage {
        #[arg(long, value_name = "FILE")]
        genome: PathBuf,
        /// Damaged area as x_min,y_min,x_max,y_max
        #[arg(long)]
        rect: Option<String>,
        /// remove or reposition
        #[arg(long)]
        mode: Option<String>,
        /// Configuration to damage; a fresh run of the genome when omitted
        #[arg(long, value_name = "FILE")]
        base: Option<PathBuf>,
        /// Steps simulated after the damage
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Evolve independently at several noise levels
    NoiseSweep {
        /// Comma-separated flip probabilities
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Classify the structure in a snapshot file
    Classify { snapshot: PathBuf },
    /// Summarize the output of `evolve`
    Stats { run_dir: PathBuf },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        let g = &self.global;
        let mut o = Overrides {
            seed: g.seed,
            grid: g.grid.clone(),
            swarm: g.swarm,
            sensor_model: g.sensor_model.clone(),
            mask: g.mask.clone(),
            noise: g.noise,
            out: g.out.clone(),
            precision: g.precision.clone(),
            threads: g.threads,
            population: g.population,
            generations: g.generations,
            evals: g.evals,
            eval_length: g.eval_length,
            mutation_rate: g.mutation_rate,
            elitism: g.elitism,
            seeding: g.seeding.clone(),
            ..Overrides::default()
        };
        match &self.command {
            Command::Evolve { runs } => o.runs = *runs,
            Command::Rerun { repeats, .. } => o.repeats = *repeats,
            Command::Damage {
                rect,
                mode,
                steps,
                repeats,
                ..
            } => {
                o.rect = rect.clone();
                o.mode = mode.clone();
                o.steps = *steps;
                o.repeats = *repeats;
            }
            Command::NoiseSweep { levels, runs } => {
                o.levels = levels.clone();
                o.runs = *runs;
            }
            Command::Classify { .. } | Command::Stats { .. } => {}
        }
        o
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Classify { snapshot } => return classify_cmd(snapshot),
        Command::Stats { run_dir } => return stats_cmd(run_dir),
        _ => {}
    }
    let file = match &cli.global.config {
        Some(path) => Overrides::from_file(path)?,
        None => Overrides::default(),
    };
    let settings = Settings::resolve(&file.overlay(&cli.overrides()))?;
    if let Some(n) = settings.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Evolve { .. } => match settings.precision {
            Precision::F64 => evolve_cmd::<f64>(&settings),
            Precision::F32 => evolve_cmd::<f32>(&settings),
        },
        Command::Rerun { genome, .. } => match genome_precision(genome)? {
            Precision::F64 => rerun_cmd::<f64>(&settings, genome),
            Precision::F32 => rerun_cmd::<f32>(&settings, genome),
        },
        Command::Damage { genome, base, .. } => match genome_precision(genome)? {
            Precision::F64 => damage_cmd::<f64>(&settings, genome, base.as_deref()),
            Precision::F32 => damage_cmd::<f32>(&settings, genome, base.as_deref()),
        },
        Command::NoiseSweep { .. } => match settings.precision {
            Precision::F64 => sweep_cmd::<f64>(&settings),
            Precision::F32 => sweep_cmd::<f32>(&settings),
        },
        Command::Classify { .. } | Command::Stats { .. } => unreachable!("handled above"),
    }
}

fn genome_precision(path: &Path) -> Result<Precision> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let line = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("scalar "))
        .with_context(|| format!("{}: not a genome file", path.display()))?;
    Precision::parse(line.trim())
}

fn load_genome<S: Scalar>(path: &Path) -> Result<GenomeOf<S>> {
    read_genome(path).with_context(|| format!("loading genome {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn save_settings(dir: &Path, settings: &Settings) -> Result<()> {
    let text = toml::to_string(&settings.to_overrides()).context("serializing settings")?;
    fs::write(dir.join("config.toml"), text)?;
    Ok(())
}

fn evolve_cmd<S: Scalar>(settings: &Settings) -> Result<()> {
    let base = &settings.evolution;
    let seeds = if settings.runs == 1 {
        vec![base.seed]
    } else {
        experiment::run_seeds(base.seed, settings.runs)
    };
    create_dir(&settings.out)?;
    save_settings(&settings.out, settings)?;
    let mut summary = Vec::new();
    for (run, &seed) in seeds.iter().enumerate() {
        let config = minsurprise::EvolutionConfig {
            seed,
            ..base.clone()
        };
        let dir = settings.out.join(format!("run-{run:03}"));
        create_dir(&dir)?;
        let outcome = evolve_with::<S>(&config, |r| {
            if r.generation % 10 == 9 || r.generation + 1 == config.generations {
                eprintln!(
                    "run {run} generation {:>4}: best {:.4} median {:.4}",
                    r.generation + 1,
                    r.best_fitness,
                    r.median_fitness
                );
            }
        })?;
        write_generation_log(&dir.join("generations.csv"), &outcome.history)?;
        write_genome(&dir.join("best.genome"), &outcome.best)?;
        let eval_seed = config.eval_seeds(config.generations - 1)[0];
        let best_run = ClassifiedRun::new(simulate_evaluation(&outcome.best, &config.sim, eval_seed)?);
        write_snapshot(&dir.join("initial.txt"), &best_run.record.initial)?;
        write_snapshot(&dir.join("final.txt"), &best_run.record.final_grid)?;
        let row = best_run.metrics_row(run);
        write_csv(&dir.join("metrics.csv"), [&row])?;
        println!(
            "run {run} (seed {seed}): best fitness {:.4}, structure {} ({:.1}%), {} robot-steps",
            outcome.best_fitness,
            best_run.report.detailed_label(),
            100.0 * best_run.report.winner_fraction(),
            outcome.robot_steps
        );
        summary.push(row);
    }
    write_csv(&settings.out.join("summary.csv"), &summary)?;
    Ok(())
}

fn rerun_cmd<S: Scalar>(settings: &Settings, genome_path: &Path) -> Result<()> {
    let genome = load_genome::<S>(genome_path)?;
    let mut sim = settings.evolution.sim.clone();
    sim.sensor_model = genome.model();
    let summary = rerun_best(&genome, &sim, settings.evolution.seed, settings.repeats)?;
    create_dir(&settings.out)?;
    save_settings(&settings.out, settings)?;
    let rows: Vec<MetricsRow> = summary.runs.iter().enumerate().map(|(i, r)| r.metrics_row(i)).collect();
    for (i, r) in summary.runs.iter().enumerate() {
        write_snapshot(&settings.out.join(format!("final-{i:03}.txt")), &r.record.final_grid)?;
        println!(
            "repeat {i}: fitness {:.4}, structure {} ({:.1}%)",
            r.record.fitness,
            r.report.detailed_label(),
            100.0 * r.report.winner_fraction()
        );
    }
    write_csv(&settings.out.join("metrics.csv"), &rows)?;
    println!("aggregate: {}", summary.aggregate);
    Ok(())
}

fn damage_cmd<S: Scalar>(settings: &Settings, genome_path: &Path, base_path: Option<&Path>) -> Result<()> {
    let genome = load_genome::<S>(genome_path)?;
    let Some(rect) = settings.rect else {
        bail!("damage needs an area (--rect x_min,y_min,x_max,y_max)");
    };
    let mut sim = settings.evolution.sim.clone();
    sim.sensor_model = genome.model();
    let base = match base_path {
        Some(p) => read_snapshot(p).with_context(|| format!("loading snapshot {}", p.display()))?,
        None => simulate_evaluation(&genome, &sim, settings.evolution.seed)?.final_grid,
    };
    let damage = DamageConfig {
        rect,
        mode: settings.mode,
        extra_steps: settings.steps,
        repeats: settings.repeats,
    };
    let records = run_damage_experiment(&genome, &base, sim.noise, &damage, settings.evolution.seed)?;
    create_dir(&settings.out)?;
    save_settings(&settings.out, settings)?;
    write_snapshot(&settings.out.join("base.txt"), &base)?;
    let mut rows = Vec::new();
    for (i, r) in records.iter().enumerate() {
        write_snapshot(&settings.out.join(format!("damaged-{i:03}.txt")), &r.damaged)?;
        write_snapshot(&settings.out.join(format!("final-{i:03}.txt")), &r.final_grid)?;
        println!(
            "repeat {i}: {} robots {}, {} membership {:.1}% -> {:.1}% -> {:.1}%, similarity {:.3}",
            r.affected,
            if damage.mode == experiment::DamageMode::Remove {
                "removed"
            } else {
                "moved"
            },
            r.label,
            100.0 * r.membership_before,
            100.0 * r.membership_after_damage,
            100.0 * r.membership_end,
            r.similarity
        );
        rows.push(DamageRow::new(i, damage.mode, r));
    }
    write_csv(&settings.out.join("damage.csv"), &rows)?;
    Ok(())
}

fn sweep_cmd<S: Scalar>(settings: &Settings) -> Result<()> {
    let levels = run_noise_sweep::<S>(&settings.evolution, &settings.levels, settings.runs)?;
    create_dir(&settings.out)?;
    save_settings(&settings.out, settings)?;
    let rows: Vec<_> = levels.iter().map(|l| l.summary_row()).collect();
    for r in &rows {
        println!(
            "noise {:.3}: median best fitness {:.4}, random dispersion in {:.0}% of {} runs",
            r.noise,
            r.median_best_fitness,
            100.0 * r.random_dispersion,
            r.runs
        );
    }
    write_csv(&settings.out.join("sweep.csv"), &rows)?;
    Ok(())
}

fn classify_cmd(path: &Path) -> Result<()> {
    let grid = read_snapshot(path).with_context(|| format!("loading snapshot {}", path.display()))?;
    print!("{}", classify(&grid).summary());
    Ok(())
}

fn stats_cmd(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut runs: Vec<PathBuf> = if dir.join("generations.csv").exists() {
        vec![dir.to_path_buf()]
    } else {
        fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("generations.csv").exists())
            .collect()
    };
    if runs.is_empty() {
        bail!("no evolution output (generations.csv) under {}", dir.display());
    }
    runs.sort();
    let mut finals = Vec::new();
    for run in &runs {
        let history: Vec<GenerationRow> = read_csv(&run.join("generations.csv"))
            .with_context(|| format!("reading {}", run.join("generations.csv").display()))?;
        let last = history
            .last()
            .with_context(|| format!("{}: empty generation log", run.display()))?;
        let structure = match read_snapshot(&run.join("final.txt")) {
            Ok(grid) => {
                let r = classify(&grid);
                format!("{} ({:.1}%)", r.detailed_label(), 100.0 * r.winner_fraction())
            }
            Err(_) => "unknown".to_string(),
        };
        println!(
            "{}: {} generations, best {:.4}, median {:.4}, {} robot-steps, structure {}",
            run.display(),
            history.len(),
            last.best_fitness,
            last.median_fitness,
            last.robot_steps,
            structure
        );
        finals.push(last.best_fitness);
    }
    if finals.len() > 1 {
        finals.sort_by(f64::total_cmp);
        let mid = finals.len() / 2;
        let median = if finals.len() % 2 == 0 {
            (finals[mid - 1] + finals[mid]) / 2.0
        } else {
            finals[mid]
        };
        println!("{} runs, median best fitness {:.4}", finals.len(), median);
    }
    Ok(())
}
