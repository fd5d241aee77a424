//! End-to-end tests of the `lipexp` binary.

use std::path::Path;
use std::process::{Command, Output};

use lipexp::cli::io::{read_iterates_csv, read_spec_json, read_summary_json, spec_json, summary_json};
use lipexp::uncertainty::Measurement;
use lipexp::Point;

fn lipexp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipexp")).args(args).output().unwrap()
}

fn write_spec(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn plants_lists_the_catalog() {
    let out = lipexp(&["plants"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["p-lin", "p-quad", "p-conv", "p-prem"] {
        assert!(text.contains(id));
    }
}

#[test]
fn unguarded_optimistic_run_records_violations_and_guarded_run_none() {
    let tmp = tempfile::tempdir().unwrap();
    for (guard, expect_violations) in [("none", true), ("lumped", false)] {
        let spec = write_spec(tmp.path(), &format!("{guard}.toml"), &format!("plant = \"p-lin\"\nguard = \"{guard}\"\n"));
        let out_dir = tmp.path().join(guard);
        let out = lipexp(&["run", "--spec", &spec, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let summary = read_summary_json(&read(&out_dir, "summary.json")).unwrap();
        assert_eq!(summary.iterate_violations > 0, expect_violations);
    }
}

#[test]
fn reruns_are_byte_identical_and_workers_do_not_matter() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(
        tmp.path(),
        "ma.toml",
        "plant = \"p-quad\"\nalgorithm = \"ma\"\nnoise = true\ntrim = true\nmax_iterations = 6\nrealizations = 3\nseed = 4\n",
    );
    let mut outputs = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let dir = tmp.path().join(name);
        let out = lipexp(&["run", "--spec", &spec, "--out", dir.to_str().unwrap(), "--workers", workers]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((read(&dir, "iterates.csv"), read(&dir, "summary.json")));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn summary_matches_iterates_and_files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "s.toml", "plant = \"p-lin\"\nguard = \"none\"\nrealizations = 2\nmax_iterations = 10\n");
    let dir = tmp.path().join("out");
    assert_eq!(lipexp(&["run", "--spec", &spec, "--out", dir.to_str().unwrap()]).status.code(), Some(0));

    let csv = read(&dir, "iterates.csv");
    let rows = read_iterates_csv(&csv).unwrap();
    let violating: usize = rows
        .iter()
        .filter(|r| r.record.tag == lipexp::uncertainty::MeasurementTag::MainIterate)
        .map(|r| r.record.true_constraints.iter().filter(|g| **g > 0.0).count())
        .sum();
    let text = read(&dir, "summary.json");
    let summary = read_summary_json(&text).unwrap();
    assert_eq!(summary.iterate_violations, violating);
    assert!(violating > 0);
    assert_eq!(summary_json(&summary).unwrap(), text);
    assert_eq!(summary.runs.len(), 2);
}

#[test]
fn compare_trim_without_noise_gives_zero_differences() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(
        tmp.path(),
        "t.toml",
        "plant = \"p-quad\"\nalgorithm = \"ma\"\nsigma = 0.0\nmax_iterations = 5\nrealizations = 4\n",
    );
    let dir = tmp.path().join("out");
    let out = lipexp(&["compare-trim", "--spec", &spec, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_summary_json(&read(&dir, "summary.json")).unwrap();
    let deltas = summary.delta_phi_ave.unwrap();
    assert_eq!(deltas, vec![0.0; 4]);
    assert_eq!(summary.histogram.unwrap().counts.iter().sum::<usize>(), 4);
}

#[test]
fn compare_trim_histogram_covers_every_realization() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(
        tmp.path(),
        "t.toml",
        "plant = \"p-quad\"\nalgorithm = \"ma\"\nmax_iterations = 5\nrealizations = 6\n",
    );
    let dir = tmp.path().join("out");
    let out = lipexp(&["compare-trim", "--spec", &spec, "--out", dir.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_summary_json(&read(&dir, "summary.json")).unwrap();
    assert_eq!(summary.histogram.unwrap().counts.iter().sum::<usize>(), 6);
    assert_eq!(summary.delta_phi_ave.unwrap().len(), 6);
    assert_eq!(summary.runs.len(), 12);
    assert!(summary.runs.iter().all(|r| r.seed >= 9 && r.seed < 15));
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_plant = write_spec(tmp.path(), "a.toml", "plant = \"p-nope\"\n");
    assert_eq!(lipexp(&["run", "--spec", &bad_plant]).status.code(), Some(2));
    let bad_alg = write_spec(tmp.path(), "b.toml", "plant = \"p-lin\"\nalgorithm = \"sqp\"\n");
    assert_eq!(lipexp(&["run", "--spec", &bad_alg]).status.code(), Some(2));
    let missing = tmp.path().join("missing.toml");
    assert_eq!(lipexp(&["run", "--spec", missing.to_str().unwrap()]).status.code(), Some(2));
    let one = write_spec(tmp.path(), "c.toml", "plant = \"p-quad\"\nalgorithm = \"ma\"\n");
    assert_eq!(lipexp(&["compare-trim", "--spec", &one]).status.code(), Some(2));
    assert_eq!(lipexp(&["run", "--spec", &one, "--realizations", "0"]).status.code(), Some(2));
    assert_eq!(lipexp(&["estimate", "--method", "fit"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "s.toml", "plant = \"p-lin\"\nmax_iterations = 1\n");
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = lipexp(&["run", "--spec", &spec, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn physics_preset_is_written_with_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = lipexp(&["estimate", "--method", "physics", "--signs", "nonneg", "--magnitudes", "1.0", "--out", dir]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(tmp.path(), "spec.json");
    let file = read_spec_json(&text).unwrap();
    let d = file.spec.directional.as_ref().unwrap();
    assert_eq!((d.lower(), d.upper()), (&[0.0][..], &[1.0][..]));
    assert_eq!(file.provenance.method, "physics");
    assert_eq!(spec_json(&file).unwrap(), text);
}

#[test]
fn model_estimate_of_exact_linear_model() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = lipexp(&["estimate", "--method", "model", "--plant", "p-lin", "--exact", "--out", dir]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let file = read_spec_json(&read(tmp.path(), "spec.json")).unwrap();
    let d = file.spec.directional.unwrap();
    for v in d.lower().iter().chain(d.upper()) {
        assert!((v - 1.0).abs() < 1e-9);
    }
    assert_eq!(file.provenance.grid_per_dim, Some(9));
}

#[test]
fn repair_grows_the_constant_until_every_pair_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let pts = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.5], [0.2, 0.9]];
    let vals = [0.0, 10.0, 3.0, -2.0];
    let data: Vec<Measurement> = pts
        .iter()
        .zip(vals)
        .enumerate()
        .map(|(i, (p, v))| Measurement::exact(Point::new(p.to_vec()).unwrap(), v, i).unwrap())
        .collect();
    let csv = tmp.path().join("data.csv");
    std::fs::write(&csv, lipexp::cli::io::measurements_csv(&data).unwrap()).unwrap();
    let out = lipexp(&[
        "estimate",
        "--method",
        "physics",
        "--signs",
        "free,free",
        "--magnitudes",
        "0.5,0.5",
        "--data",
        csv.to_str().unwrap(),
        "--repair",
        "--inflation",
        "0.25",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let file = read_spec_json(&read(tmp.path(), "spec.json")).unwrap();
    assert!(file.provenance.repaired && file.provenance.inflation_steps > 0);
    let spec = file.spec;
    for a in &data {
        for b in &data {
            let inc = spec.upper_increment(&a.at, &b.at).unwrap();
            assert!(b.value <= a.value + inc + 1e-12);
        }
    }
}

#[test]
fn fit_needs_enough_data() {
    let tmp = tempfile::tempdir().unwrap();
    let data = vec![Measurement::exact(Point::new(vec![0.1, 0.2]).unwrap(), 1.0, 0).unwrap()];
    let csv = tmp.path().join("d.csv");
    std::fs::write(&csv, lipexp::cli::io::measurements_csv(&data).unwrap()).unwrap();
    let out = lipexp(&["estimate", "--method", "fit", "--data", csv.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not enough data"));
}
