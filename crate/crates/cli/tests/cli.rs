use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn torhsmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_torhsmm"))
        .args(args)
        .env_remove("TORHSMM_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = torhsmm(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    r.deserialize().map(|row| row.unwrap()).collect()
}

fn simulate(dir: &Path, name: &str, len: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    ok(&["simulate", "--scenario", "table1-k2", "--length", &len.to_string(), "--seed", &seed.to_string(), "--out", s(&out)]);
    out.join("series.csv")
}

#[test]
fn simulate_and_fit_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", 400, 7);
    let b = simulate(dir.path(), "b", 400, 7);
    assert_eq!(files(a.parent().unwrap()), files(b.parent().unwrap()));
    let c = simulate(dir.path(), "c", 400, 8);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    let fit = |name: &str| {
        let out = dir.path().join(name);
        ok(&["fit", "--input", s(&a), "--states", "2", "--max-dwell", "30", "--short-runs", "3", "--out", s(&out)]);
        files(&out)
    };
    assert_eq!(fit("f1"), fit("f2"));
}

#[test]
fn empty_and_malformed_inputs_exit_with_data_status() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = torhsmm(&["fit", "--input", s(&empty), "--states", "2", "--max-dwell", "10", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));

    let degrees = dir.path().join("deg.csv");
    std::fs::write(&degrees, "# angle_unit: radians\ntime,a,b\n1,0.1,0.2\n2,180,90\n").unwrap();
    let out = torhsmm(&["fit", "--input", s(&degrees), "--states", "2", "--max-dwell", "10", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 4") && msg.contains("degrees"), "{msg}");
}

#[test]
fn usage_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate(dir.path(), "sim", 50, 1);
    let out = torhsmm(&["fit", "--input", s(&series), "--max-dwell", "10", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(torhsmm(&["fit", "--bogus"]).status.code(), Some(2));
    let out = torhsmm(&["simulate", "--scenario", "nope", "--length", "10", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = torhsmm(&["sweep", "--input", s(&series), "--k-min", "3", "--k-max", "2", "--max-dwell", "5", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degree_input_fits_like_radians() {
    let dir = tempfile::tempdir().unwrap();
    let rad = simulate(dir.path(), "sim", 300, 3);
    let text = std::fs::read_to_string(&rad).unwrap();
    let mut deg = String::from("# angle_unit: degrees\n");
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        match f[1].parse::<f64>() {
            Ok(a) => {
                let b: f64 = f[2].parse().unwrap();
                deg.push_str(&format!("{},{},{},{}\n", f[0], a.to_degrees(), b.to_degrees(), f[3]));
            }
            Err(_) => deg.push_str(&format!("{line}\n")),
        }
    }
    let deg_path = dir.path().join("deg.csv");
    std::fs::write(&deg_path, deg).unwrap();

    let fit = |input: &Path, name: &str| {
        let out = dir.path().join(name);
        ok(&["fit", "--input", s(input), "--states", "2", "--max-dwell", "25", "--short-runs", "3", "--out", s(&out)]);
        rows(&out.join("parameters.csv"))
    };
    let (a, b) = (fit(&rad, "r"), fit(&deg_path, "d"));
    for (ra, rb) in a.iter().zip(&b) {
        for (key, va) in ra {
            let (x, y): (f64, f64) = (va.parse().unwrap(), rb[key].parse().unwrap());
            assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()), "{key}: {x} vs {y}");
        }
    }
}

#[test]
fn every_table_reparses_and_pipeline_composes() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate(dir.path(), "sim", 300, 5);
    let fit = dir.path().join("fit");
    ok(&["fit", "--input", s(&series), "--states", "2", "--max-dwell", "25", "--short-runs", "2", "--bootstrap", "3", "--out", s(&fit)]);
    let model = fit.join("model.json");
    for (cmd, name) in [("segment", "seg"), ("profiles", "prof")] {
        ok(&[cmd, "--input", s(&series), "--model", s(&model), "--out", s(&dir.path().join(name))]);
    }
    ok(&["bootstrap", "--input", s(&series), "--model", s(&model), "--replicates", "3", "--out", s(&dir.path().join("boot"))]);
    // a simulated series refits from its own model file
    ok(&["simulate", "--model", s(&model), "--length", "200", "--seed", "2", "--unit", "degrees", "--out", s(&dir.path().join("resim"))]);
    ok(&["fit", "--input", s(&dir.path().join("resim/series.csv")), "--states", "2", "--max-dwell", "25", "--short-runs", "2", "--out", s(&dir.path().join("refit"))]);

    for (path, _) in files(dir.path()).into_iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "csv")) {
        let table = rows(&dir.path().join(&path));
        assert!(!table.is_empty(), "{}", path.display());
    }
    let seg = rows(&fit.join("segmentation.csv"));
    assert_eq!(seg.len(), 300);
    assert!(seg.iter().all(|r| r["state"] == "1" || r["state"] == "2"));
    let params = rows(&fit.join("parameters.csv"));
    assert!(params.iter().all(|r| r["se_beta_x1"].parse::<f64>().unwrap().is_finite()));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(fit.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["states"], 2);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 9);
}

#[test]
fn sweep_over_a_single_state_count_marks_it_optimal() {
    let dir = tempfile::tempdir().unwrap();
    let series = simulate(dir.path(), "sim", 200, 9);
    let out = dir.path().join("sweep");
    ok(&["sweep", "--input", s(&series), "--k-min", "2", "--max-dwell", "20", "--short-runs", "2", "--out", s(&out)]);
    let t = rows(&out.join("icl.csv"));
    assert_eq!(t.len(), 1);
    assert_eq!(t[0]["optimal"], "true");
    assert!(t[0]["iterations"].parse::<usize>().unwrap() >= 1);
}

#[test]
fn study_with_one_replicate_writes_resumable_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    let args = [
        "study", "--scenarios", "table1-k2", "--lengths", "200", "--deltas", "1,0.5", "--replicates", "1", "--short-runs", "2",
        "--out", s(&out),
    ];
    ok(&args);
    let first = files(&out);
    assert_eq!(rows(&out.join("ari.csv")).len(), 2);
    assert_eq!(rows(&out.join("summary.csv")).len(), 2);
    assert!(!rows(&out.join("rmse.csv")).is_empty());

    // rerunning reuses the checkpoints and reproduces every file
    let again = ok(&args);
    assert!(!String::from_utf8_lossy(&again.stderr).contains("done"));
    assert_eq!(files(&out), first);

    let mut changed = args.to_vec();
    changed[8] = "2";
    changed[10] = "3";
    assert_eq!(torhsmm(&changed).status.code(), Some(2));
}

#[test]
fn config_file_fills_missing_flags_and_seed_precedence_holds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "scenario = \"table1-k2\"\nlength = 60\nseed = 11\n").unwrap();
    let manifest_seed = |out: &Path| -> u64 {
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        m["seeds"]["seed"].as_u64().unwrap()
    };
    let a = dir.path().join("a");
    ok(&["--config", s(&cfg), "simulate", "--out", s(&a)]);
    assert_eq!(manifest_seed(&a), 11);
    let b = dir.path().join("b");
    ok(&["simulate", "--config", s(&cfg), "--seed", "12", "--out", s(&b)]);
    assert_eq!(manifest_seed(&b), 12);

    let c = dir.path().join("c");
    let out = Command::new(env!("CARGO_BIN_EXE_torhsmm"))
        .args(["simulate", "--scenario", "table1-k2", "--length", "60", "--out", s(&c)])
        .env("TORHSMM_SEED", "13")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(manifest_seed(&c), 13);

    std::fs::write(&cfg, "scenario = \"table1-k2\"\nlenght = 60\n").unwrap();
    assert_eq!(torhsmm(&["--config", s(&cfg), "simulate", "--length", "5", "--out", s(&c)]).status.code(), Some(2));
}
