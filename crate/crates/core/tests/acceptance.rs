//! Acceptance suite: prints one PASS/FAIL line per criterion.
//!
//! Criteria 1-7 are deterministic and abort the run when they fail.
//! Criteria 8-12 are statistical reproduction targets over evolutionary
//! runs. Their outcome is printed with the measured values; they only abort
//! the run when `MINSURPRISE_ACCEPTANCE_STRICT=1`.
//!
//! `MINSURPRISE_ACCEPTANCE_BUDGET` picks the evolutionary budget of the
//! statistical criteria: `reduced` (default), `full` (population 50, 100
//! generations, 10 evaluations of 500 steps) or `smoke` (plumbing only).


use std::collections::HashSet;
use std::time::Instant;

use minsurprise::classify::detect_triangular_lattice;
use minsurprise::experiment::{
    evolve_and_classify, remove_area, reposition_area, run_seeds, write_generation_log, DamageConfig, DamageMode, EvolvedRun, Rect,
    DAMAGE_AREAS,
};
use minsurprise::grid::{random_placement, sense};
use minsurprise::metrics::{fitness, intended_movement, movement, similarity, tail_window, temperature};
use minsurprise::{
    classify, evolve, run_damage_experiment, simulate_evaluation, Action, Controller, EvolutionConfig, Genome,
    Heading, MaskKind, NoiseModel, PatternLabel, Pose, SensorModel, SensorReading, SimConfig, TorusGrid, Turn,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    if ok {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn listed(problems: &[String]) -> String {
    if problems.is_empty() {
        String::new()
    } else {
        format!("; {}", problems.join("; "))
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn random_action<R: Rng>(rng: &mut R) -> Action {
    match rng.gen_range(0..3) {
        0 => Action::FORWARD,
        1 => Action::rotate(Turn::Left),
        _ => Action::rotate(Turn::Right),
    }
}

fn checkerboard(width: usize, height: usize) -> TorusGrid {
    let rows: Vec<String> = (0..height)
        .map(|y| (0..width).map(|x| if (x + y) % 2 == 0 { '^' } else { '.' }).collect())
        .collect();
    TorusGrid::from_ascii(&rows.join("\n")).unwrap()
}

fn random_grid<R: Rng>(rng: &mut R, max_side: usize) -> TorusGrid {
    let (w, h) = (rng.gen_range(3..=max_side), rng.gen_range(3..=max_side));
    let n = rng.gen_range(0..=w * h);
    random_placement(w, h, n, rng).unwrap()
}

// ---------------------------------------------------------------- hard

fn classifier_fixtures() -> Outcome {
    let start = Instant::now();
    let panels = [
        (fixtures::line(), PatternLabel::Line),
        (fixtures::pairs(), PatternLabel::Pair),
        (fixtures::aggregation(), PatternLabel::Aggregation),
        (fixtures::clustering(), PatternLabel::Clustering),
        (fixtures::loose_grouping(), PatternLabel::LooseGrouping),
        (fixtures::square(), PatternLabel::Square),
        (fixtures::triangular_lattice(), PatternLabel::TriangularLattice),
        (fixtures::random_dispersion(), PatternLabel::RandomDispersion),
    ];
    let mut wrong = Vec::new();
    for (g, label) in &panels {
        let r = classify(g);
        if r.winner != *label {
            wrong.push(format!("{} classified as {}", label, r.winner));
        }
    }
    let board = checkerboard(20, 20);
    let lattice = detect_triangular_lattice(&board).iter().all(|&m| m)
        && classify(&board).fraction(PatternLabel::TriangularLattice) == 1.0;
    if !lattice {
        wrong.push("checkerboard is not fully lattice".into());
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        wrong.is_empty() && elapsed < 1.0,
        format!("8 panels + checkerboard in {elapsed:.3} s{}", listed(&wrong)),
    )
}

fn metric_oracles() -> Outcome {
    let r = SensorReading::from_bits;
    let mut failed = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64| {
        if got != want {
            failed.push(format!("{name}: {got} != {want}"));
        }
    };
    let s = [r(&[true, false, true]), r(&[false, true, true])];
    expect("fitness all correct", fitness(&s, &s).unwrap(), 1.0);
    let flipped: Vec<_> = s.iter().map(|x| x.complement()).collect();
    expect("fitness all wrong", fitness(&flipped, &s).unwrap(), 0.0);
    expect(
        "fitness N=1 T=1 R=2",
        fitness(&[r(&[true, false])], &[r(&[true, true])]).unwrap(),
        0.5,
    );

    let still: Vec<Pose> = (0..4).map(|i| Pose::new(i, 2, Heading::North)).collect();
    let turned: Vec<Pose> = still.iter().map(|p| Pose::new(p.x, p.y, Heading::West)).collect();
    expect("temperature rotating", temperature(&still, &turned, 15, 15).unwrap(), 0.0);
    let moved: Vec<Pose> = still.iter().map(|p| Pose::new(p.x, p.y + 1, p.heading)).collect();
    expect("temperature one cell", temperature(&still, &moved, 15, 15).unwrap(), 1.0);
    let seam_before = [Pose::new(14, 3, Heading::East), Pose::new(1, 1, Heading::North)];
    let seam_after = [Pose::new(0, 3, Heading::East), Pose::new(1, 1, Heading::North)];
    expect("temperature seam", temperature(&seam_before, &seam_after, 15, 15).unwrap(), 0.5);

    expect("movement zero", movement(&[0.0; 20], 10).unwrap(), 0.0);
    expect("movement constant", movement(&[0.25; 20], 10).unwrap(), 0.25);
    expect("intended forward", intended_movement(&vec![vec![true; 5]; 12], 10).unwrap(), 1.0);
    expect("intended rotate", intended_movement(&vec![vec![false; 5]; 12], 10).unwrap(), 0.0);

    let before: Vec<Pose> = (0..100).map(|i| Pose::new(i % 10, i / 10, Heading::South)).collect();
    expect("similarity equal", similarity(&before, &before, 100, true), 1.0);
    let disjoint: Vec<Pose> = (0..100).map(|i| Pose::new(i % 10 + 10, i / 10, Heading::South)).collect();
    expect("similarity disjoint", similarity(&disjoint, &before, 100, true), 0.0);
    let half: Vec<Pose> = before
        .iter()
        .enumerate()
        .map(|(i, p)| if i < 50 { *p } else { Pose::new(p.x + 10, p.y, p.heading) })
        .collect();
    expect("similarity half", similarity(&half, &before, 100, true), 0.5);

    // M <= I on simulated runs of random genomes at varied densities
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for run in 0..100u64 {
        let g = Genome::random(SensorModel::C, MaskKind::None.build(SensorModel::C), &mut rng);
        let config = SimConfig {
            width: 15,
            height: 15,
            swarm_size: rng.gen_range(5..=200),
            eval_length: 150,
            ..SimConfig::default()
        };
        let rec = simulate_evaluation(&g, &config, run).unwrap();
        let tau = tail_window(15, 15);
        let m = movement(&rec.temperatures, tau).unwrap();
        let i = intended_movement(&rec.actions, tau).unwrap();
        if m > i + 1e-12 {
            violations += 1;
        }
    }
    if violations > 0 {
        failed.push(format!("M > I in {violations} runs"));
    }
    check(failed.is_empty(), format!("16 oracle values, M <= I on 100 runs{}", listed(&failed)))
}

fn world_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut steps = 0usize;
    let mut problems = Vec::new();
    while steps < 1_000_000 && problems.is_empty() {
        let mut g = random_grid(&mut rng, 20);
        let n = g.len();
        for _ in 0..40 {
            for id in 0..n {
                let a = random_action(&mut rng);
                let before = g.pose(id);
                let ahead = g.cell_ahead(&before);
                let blocked = g.is_occupied(ahead.0, ahead.1) && ahead != before.cell();
                let after = g.apply_action(id, a);
                if a.move_forward && blocked && after != before {
                    problems.push(format!("blocked robot moved: {before:?} -> {after:?}"));
                }
                steps += 1;
            }
            let cells: HashSet<_> = g.robots().iter().map(Pose::cell).collect();
            if cells.len() != n || g.len() != n || !g.is_consistent() {
                problems.push("double occupancy or lost robot".into());
                break;
            }
        }
    }
    // one of four robots crosses the x seam on 15x15
    let mut g = TorusGrid::from_poses(
        15,
        15,
        &[
            Pose::new(14, 3, Heading::East),
            Pose::new(5, 5, Heading::North),
            Pose::new(7, 9, Heading::South),
            Pose::new(2, 12, Heading::West),
        ],
    )
    .unwrap();
    let before = g.robots().to_vec();
    let rot = Action::rotate(Turn::Left);
    g.step_swarm(&[Action::FORWARD, rot, rot, rot]).unwrap();
    let t = temperature(&before, g.robots(), 15, 15).unwrap();
    if g.pose(0).cell() != (0, 3) || t != 0.25 {
        problems.push(format!("seam temperature {t}, expected 1/N = 0.25"));
    }
    check(problems.is_empty(), format!("{steps} robot steps, seam temperature 1/N{}", listed(&problems)))
}

fn determinism() -> Outcome {
    let config = EvolutionConfig {
        sim: SimConfig {
            width: 10,
            height: 10,
            swarm_size: 30,
            eval_length: 60,
            ..SimConfig::default()
        },
        population_size: 10,
        generations: 4,
        evals_per_genome: 3,
        seed: 77,
        ..EvolutionConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    let mut genomes = Vec::new();
    for (i, parallel) in [true, true, false].into_iter().enumerate() {
        let c = EvolutionConfig {
            parallel,
            ..config.clone()
        };
        let outcome = evolve::<f64>(&c).unwrap();
        let log = dir.path().join(format!("log-{i}.csv"));
        let genome = dir.path().join(format!("best-{i}.genome"));
        write_generation_log(&log, &outcome.history).unwrap();
        minsurprise::experiment::write_genome(&genome, &outcome.best).unwrap();
        logs.push(std::fs::read(log).unwrap());
        genomes.push(std::fs::read(genome).unwrap());
    }
    let same = logs.iter().all(|l| *l == logs[0]) && genomes.iter().all(|g| *g == genomes[0]);
    check(
        same,
        "generation logs and genome files byte-identical across repeats and serial/parallel",
    )
}

fn mask_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mask = MaskKind::Full.build(SensorModel::C);
    let expected = SensorReading::new(mask.bits().1, 14);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let g = Genome::random(SensorModel::C, mask.clone(), &mut rng);
        let input = SensorReading::new(rng.gen::<u32>() & 0x3FFF, 14);
        let action = rng.gen::<bool>();
        let mut state: Vec<f64> = (0..g.initial_state().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let reference = g.prediction_net().forward(&mut state, input, action).unwrap();
        let mut controller = Controller::new(&g);
        let fast = controller.predict(&mut state, input, action);
        if reference != expected || fast != expected {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("10000 genomes, {mismatches} mismatches"))
}

fn noise_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = TorusGrid::from_poses(15, 15, &[Pose::new(7, 7, Heading::North)]).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for p in [0.05, 0.10, 0.15] {
        let noise = NoiseModel::new(p).unwrap();
        let readings = 10_000;
        let flips: u32 = (0..readings)
            .map(|_| sense(&g, &g.pose(0), SensorModel::C, &noise, &mut rng).bits().count_ones())
            .sum();
        let n = (readings * 14) as f64;
        let rate = f64::from(flips) / n;
        let sigma = (p * (1.0 - p) / n).sqrt();
        ok &= (rate - p).abs() <= 3.0 * sigma;
        lines.push(format!("p={p}: {rate:.4} ({:+.1} sigma)", (rate - p) / sigma));
    }
    check(ok, format!("140000 bits per level; {}", lines.join(", ")))
}

fn damage_algorithms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut problems = Vec::new();
    let mut no_room = 0;
    for _ in 0..500 {
        let g = random_grid(&mut rng, 20);
        let (w, h) = (g.width(), g.height());
        let (x0, x1) = (rng.gen_range(0..w), rng.gen_range(0..w));
        let (y0, y1) = (rng.gen_range(0..h), rng.gen_range(0..h));
        let rect = Rect::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1)).unwrap();
        let inside = g.robots().iter().filter(|p| rect.contains(p.x, p.y)).count();
        let mut removed = g.clone();
        if remove_area(&mut removed, &rect).unwrap() != inside || removed.len() != g.len() - inside {
            problems.push(format!("remove count wrong for {rect}"));
        }
        let mut moved = g.clone();
        match reposition_area(&mut moved, &rect, &mut rng) {
            Ok(_) => {
                if moved.len() != g.len() || !moved.is_consistent() {
                    problems.push(format!("reposition changed swarm size for {rect}"));
                }
                if moved.robots().iter().any(|p| rect.contains(p.x, p.y)) {
                    problems.push(format!("robot left inside {rect}"));
                }
            }
            Err(_) => {
                no_room += 1;
                if inside <= w * h - rect.area() - (g.len() - inside) {
                    problems.push(format!("reposition refused with room left for {rect}"));
                }
            }
        }
    }
    problems.truncate(3);
    check(
        problems.is_empty(),
        format!("500 trials ({no_room} without room outside){}", listed(&problems)),
    )
}

// ---------------------------------------------------------------- soft

#[derive(Clone, Copy)]
struct Budget {
    name: &'static str,
    population: usize,
    generations: usize,
    evals: usize,
    eval_length: usize,
    runs: usize,
}

impl Budget {
    fn from_env() -> Budget {
        let name = std::env::var("MINSURPRISE_ACCEPTANCE_BUDGET").unwrap_or_else(|_| "reduced".into());
        match name.as_str() {
            "full" => Budget {
                name: "full",
                population: 50,
                generations: 100,
                evals: 10,
                eval_length: 500,
                runs: 10,
            },
            "smoke" => Budget {
                name: "smoke",
                population: 6,
                generations: 3,
                evals: 2,
                eval_length: 100,
                runs: 10,
            },
            "reduced" => Budget {
                name: "reduced",
                population: 20,
                generations: 20,
                evals: 5,
                eval_length: 500,
                runs: 10,
            },
            other => panic!("unknown MINSURPRISE_ACCEPTANCE_BUDGET {other:?} (full, reduced, smoke)"),
        }
    }

    fn config(&self, side: usize, mask: MaskKind, noise: f64) -> EvolutionConfig {
        EvolutionConfig {
            sim: SimConfig {
                width: side,
                height: side,
                noise: NoiseModel::new(noise).unwrap(),
                eval_length: self.eval_length,
                ..SimConfig::default()
            },
            mask,
            population_size: self.population,
            generations: self.generations,
            evals_per_genome: self.evals,
            seed: 2019,
            ..EvolutionConfig::default()
        }
    }
}

/// Independent runs of `config`; run `r` gets the same master seed for any
/// configuration, so noise levels share their seeds.
fn batch(config: &EvolutionConfig, runs: usize, what: &str) -> Vec<EvolvedRun<f64>> {
    let start = Instant::now();
    let results: Vec<EvolvedRun<f64>> = run_seeds(config.seed, runs)
        .into_par_iter()
        .map(|seed| {
            let c = EvolutionConfig {
                seed,
                ..config.clone()
            };
            let r = evolve_and_classify::<f64>(&c).unwrap();
            eprintln!(
                "  {what}: best {:.4}, {}",
                r.outcome.best_fitness,
                r.best_run.report.winner
            );
            r
        })
        .collect();
    eprintln!("  {what}: {runs} runs in {:.0} s", start.elapsed().as_secs_f64());
    results
}

fn best_fitnesses(runs: &[EvolvedRun<f64>]) -> Vec<f64> {
    runs.iter().map(|r| r.outcome.best_fitness).collect()
}

fn label_share(runs: &[EvolvedRun<f64>], label: PatternLabel) -> f64 {
    runs.iter().filter(|r| r.best_run.report.winner == label).count() as f64 / runs.len() as f64
}

fn fitness_levels(small: &[EvolvedRun<f64>], large: &[EvolvedRun<f64>]) -> Outcome {
    let (a, b) = (median(&best_fitnesses(small)), median(&best_fitnesses(large)));
    check(
        (a - 0.71).abs() <= 0.08 && (b - 0.80).abs() <= 0.08,
        format!(
            "median best fitness 15x15 {a:.3} (target 0.71 +- 0.08), 20x20 {b:.3} (target 0.80 +- 0.08), {} runs each",
            small.len()
        ),
    )
}

fn cooling(small: &[EvolvedRun<f64>], large: &[EvolvedRun<f64>]) -> Outcome {
    let tail = |runs: &[EvolvedRun<f64>]| {
        let temps: Vec<f64> = runs.iter().map(|r| r.best_run.record.final_temperature(10)).collect();
        median(&temps)
    };
    let (a, b) = (tail(small), tail(large));
    check(
        a <= 0.10 && b <= 0.10,
        format!("median final-10-step temperature 15x15 {a:.3}, 20x20 {b:.3} (limit 0.10)"),
    )
}

fn engineered_lines(small: &[EvolvedRun<f64>], large: &[EvolvedRun<f64>]) -> Outcome {
    let (a, b) = (label_share(small, PatternLabel::Line), label_share(large, PatternLabel::Line));
    check(
        a >= 0.8 && b >= 0.8,
        format!(
            "line share 15x15 {:.0}%, 20x20 {:.0}% (minimum 80%)",
            100.0 * a,
            100.0 * b
        ),
    )
}

fn strongest_line(runs: &[EvolvedRun<f64>]) -> Option<&EvolvedRun<f64>> {
    let share = |r: &EvolvedRun<f64>| r.best_run.report.fraction(PatternLabel::Line);
    runs.iter()
        .filter(|r| r.best_run.report.winner == PatternLabel::Line)
        .max_by(|x, y| share(x).total_cmp(&share(y)))
}

fn resilience(free: &[EvolvedRun<f64>], engineered: &[EvolvedRun<f64>]) -> Outcome {
    // prefer a line behaviour evolved without predefined predictions
    let (source, run) = match (strongest_line(free), strongest_line(engineered)) {
        (Some(r), _) => ("free", r),
        (None, Some(r)) => ("predefined", r),
        (None, None) => return Err("no line behaviour evolved on 15x15".into()),
    };
    let base = &run.best_run.record.final_grid;
    let genome = &run.outcome.best;
    // reposition similarity medians of the reference line behaviour
    let targets = [0.6, 0.415, 0.585];
    let mut recovered = 0;
    let mut notes = Vec::new();
    let mut similarity_ok = true;
    for mode in [DamageMode::Remove, DamageMode::Reposition] {
        for (i, (name, rect)) in DAMAGE_AREAS.iter().enumerate() {
            let records = run_damage_experiment(
                genome,
                base,
                NoiseModel::NONE,
                &DamageConfig::new(*rect, mode),
                run.seed,
            )
            .unwrap();
            let m = |f: fn(&minsurprise::DamageRecord) -> f64| median(&records.iter().map(f).collect::<Vec<_>>());
            let after = m(|r| r.membership_after_damage);
            let end = m(|r| r.membership_end);
            let sim = m(|r| r.similarity);
            if end >= after {
                recovered += 1;
            }
            let mut note = format!("{} {name}: {:.2}->{:.2}", mode.name(), after, end);
            if mode == DamageMode::Reposition {
                let close = (sim - targets[i]).abs() <= 0.15;
                similarity_ok &= close;
                note += &format!(" S {sim:.2} (target {})", targets[i]);
            }
            notes.push(note);
        }
    }
    check(
        recovered >= 5 && similarity_ok,
        format!(
            "{source} line behaviour at {:.0}% line membership; recovered in {recovered}/6; {}",
            100.0 * run.best_run.report.fraction(PatternLabel::Line),
            notes.join("; ")
        ),
    )
}

fn noise_degradation(levels: &[(f64, Vec<EvolvedRun<f64>>)]) -> Outcome {
    let shares: Vec<f64> = levels
        .iter()
        .map(|(_, runs)| label_share(runs, PatternLabel::RandomDispersion))
        .collect();
    let monotone = shares.windows(2).all(|w| w[1] >= w[0]);
    let last = *shares.last().unwrap();
    let text: Vec<String> = levels
        .iter()
        .zip(&shares)
        .map(|((p, _), s)| format!("{:.0}%: {:.0}%", 100.0 * p, 100.0 * s))
        .collect();
    check(
        monotone && last >= 0.8,
        format!("random dispersion share by noise level {}", text.join(", ")),
    )
}

fn main() {
    let strict = std::env::var("MINSURPRISE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut hard_failures = 0;
    let mut soft_failures = 0;
    let mut report = |id: u32, name: &str, hard: bool, outcome: Outcome| {
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                if hard {
                    hard_failures += 1;
                } else {
                    soft_failures += 1;
                }
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {status} {name}: {detail}");
    };

    report(1, "classifier fixtures", true, classifier_fixtures());
    report(2, "metric oracles", true, metric_oracles());
    report(3, "world invariants", true, world_invariants());
    report(4, "determinism", true, determinism());
    report(5, "mask dominance", true, mask_dominance());
    report(6, "noise statistics", true, noise_statistics());
    report(7, "removal and reposition", true, damage_algorithms());

    let budget = Budget::from_env();
    let b = budget;
    eprintln!(
        "statistical criteria at {} budget: population {}, {} generations, {} x {}-step evaluations, {} runs",
        b.name, b.population, b.generations, b.evals, b.eval_length, b.runs
    );
    let free15 = batch(&b.config(15, MaskKind::None, 0.0), b.runs, "15x15");
    let free20 = batch(&b.config(20, MaskKind::None, 0.0), b.runs, "20x20");
    let lines15 = batch(&b.config(15, MaskKind::Full, 0.0), b.runs, "15x15 predefined");
    let lines20 = batch(&b.config(20, MaskKind::Full, 0.0), b.runs, "20x20 predefined");
    let tag = |name: &str| format!("{name} [{} budget]", b.name);
    report(8, &tag("fitness levels"), false, fitness_levels(&free15, &free20));
    report(9, &tag("cooling"), false, cooling(&free15, &free20));
    report(10, &tag("engineered lines"), false, engineered_lines(&lines15, &lines20));
    report(11, &tag("resilience"), false, resilience(&free15, &lines15));
    let mut levels = vec![(0.0, free20)];
    for p in [0.05, 0.10, 0.15] {
        let runs = batch(&b.config(20, MaskKind::None, p), b.runs, &format!("20x20 noise {p}"));
        levels.push((p, runs));
    }
    report(12, &tag("noise degradation"), false, noise_degradation(&levels));

    println!("acceptance: {hard_failures} hard and {soft_failures} statistical criteria failed");
    if hard_failures > 0 || (strict && soft_failures > 0) {
        std::process::exit(1);
    }
}
