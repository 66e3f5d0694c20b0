use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--grid",
    "8x8",
    "--swarm",
    "12",
    "--population",
    "6",
    "--generations",
    "3",
    "--evals",
    "2",
    "--eval-length",
    "30",
    "--seed",
    "5",
];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minsurprise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn evolve_into(dir: &Path, extra: &[&str]) -> String {
    let mut args: Vec<&str> = TINY.to_vec();
    let out = dir.to_str().unwrap();
    args.extend(["--out", out]);
    args.extend(extra);
    args.push("evolve");
    run_ok(&args)
}

#[test]
fn evolve_is_byte_reproducible_and_thread_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    evolve_into(&a, &[]);
    evolve_into(&b, &[]);
    evolve_into(&c, &["--threads", "1"]);
    for file in ["generations.csv", "best.genome", "final.txt", "metrics.csv"] {
        let x = fs::read(a.join("run-000").join(file)).unwrap();
        assert_eq!(x, fs::read(b.join("run-000").join(file)).unwrap(), "{file}");
        assert_eq!(x, fs::read(c.join("run-000").join(file)).unwrap(), "{file}");
    }
    let log = fs::read_to_string(a.join("run-000/generations.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert!(log.starts_with("generation,best_fitness,median_fitness,robot_steps"));
    assert!(log.lines().last().unwrap().ends_with(&(3 * 6 * 2 * 30 * 12).to_string()));
}

#[test]
fn downstream_commands_use_evolved_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("evo");
    let stdout = evolve_into(&dir, &[]);
    assert!(stdout.contains("best fitness"));
    let run_dir = dir.join("run-000");
    let genome = run_dir.join("best.genome");
    let genome = genome.to_str().unwrap();

    let stats = run_ok(&["stats", dir.to_str().unwrap()]);
    assert!(stats.contains("3 generations"), "{stats}");

    let snapshot = run_dir.join("final.txt");
    let classified = run_ok(&["classify", snapshot.to_str().unwrap()]);
    assert!(classified.starts_with("structure: "), "{classified}");

    let rerun_dir = tmp.path().join("rerun");
    let mut args: Vec<&str> = TINY.to_vec();
    args.extend(["--out", rerun_dir.to_str().unwrap(), "rerun", "--genome", genome, "--repeats", "3"]);
    let rerun = run_ok(&args);
    assert!(rerun.contains("aggregate: "), "{rerun}");
    assert!(rerun_dir.join("final-002.txt").exists());
    assert_eq!(fs::read_to_string(rerun_dir.join("metrics.csv")).unwrap().lines().count(), 4);

    for mode in ["remove", "reposition"] {
        let damage_dir = tmp.path().join(mode);
        let mut args: Vec<&str> = TINY.to_vec();
        args.extend([
            "--out",
            damage_dir.to_str().unwrap(),
            "damage",
            "--genome",
            genome,
            "--rect",
            "0,0,2,2",
            "--mode",
            mode,
            "--steps",
            "20",
            "--repeats",
            "2",
            "--base",
            snapshot.to_str().unwrap(),
        ]);
        run_ok(&args);
        let rows = fs::read_to_string(damage_dir.join("damage.csv")).unwrap();
        let expected = if mode == "remove" { 2 } else { 3 };
        assert_eq!(rows.lines().count(), expected, "{rows}");
    }
}

#[test]
fn noise_sweep_writes_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args: Vec<&str> = TINY.to_vec();
    let out = tmp.path().to_str().unwrap();
    args.extend(["--out", out, "noise-sweep", "--levels", "0,0.1", "--runs", "2"]);
    let stdout = run_ok(&args);
    assert_eq!(stdout.lines().count(), 2);
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("noise,runs,median_best_fitness,"));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "grid = \"9x7\"\nswarm = 10\npopulation = 4\ngenerations = 2\nevals = 1\neval_length = 20\nseed = 1\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--swarm",
        "11",
        "--out",
        out.to_str().unwrap(),
        "evolve",
    ]);
    let saved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(saved.contains("grid = \"9x7\""), "{saved}");
    assert!(saved.contains("swarm = 11"), "{saved}");
    let last = fs::read_to_string(out.join("run-000/generations.csv")).unwrap();
    assert!(last.lines().last().unwrap().ends_with(&(2 * 4 * 20 * 11).to_string()));
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.txt");
    let bad_snapshot = tmp.path().join("bad.txt");
    fs::write(&bad_snapshot, "..^\n.x.\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["--grid", "5x5", "--swarm", "30", "evolve"],
        vec!["--grid", "banana", "evolve"],
        vec!["--noise", "2", "evolve"],
        vec!["classify", missing.to_str().unwrap()],
        vec!["classify", bad_snapshot.to_str().unwrap()],
        vec!["rerun", "--genome", missing.to_str().unwrap()],
        vec!["stats", missing.to_str().unwrap()],
    ];
    for args in cases {
        let out = run(&args);
        assert!(!out.status.success(), "{args:?}");
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert_eq!(stderr.lines().count(), 1, "{args:?}: {stderr}");
        assert!(stderr.starts_with("error: "), "{stderr}");
    }
}
