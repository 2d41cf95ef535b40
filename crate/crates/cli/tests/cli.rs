use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phasecnmf::dataset::load_wav;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_phasecnmf"));
    cmd.env_remove("PHASECNMF_OUT");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, count: usize) -> PathBuf {
    let corpus = dir.join("corpus");
    ok(&["synth", "--seed", "3", "--count", &count.to_string(), "--out", s(&corpus)]);
    corpus
}

const FAST: [&str; 4] = ["--iters", "3", "--init-iters", "10"];

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Non-comment lines of a CSV file.
fn csv_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[test]
fn synth_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["synth", "--seed", "9", "--count", "2", "--out", s(&a)]);
    ok(&["--jobs", "2", "synth", "--seed", "9", "--count", "2", "--out", s(&b)]);
    for mix in ["mix_000", "mix_001"] {
        for file in ["manifest.toml", "mixture.wav", "source_0.wav", "source_1.wav"] {
            let x = fs::read(a.join(mix).join(file)).unwrap();
            let y = fs::read(b.join(mix).join(file)).unwrap();
            assert!(x == y, "{mix}/{file} differs");
        }
    }
}

#[test]
fn empty_corpus_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 0);
    assert_eq!(fs::read_dir(&corpus).unwrap().count(), 0);
    let csv = dir.path().join("eval.csv");
    ok(&["eval", s(&corpus), "--out", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# phasecnmf-eval/1\n"));
    assert_eq!(csv_lines(&csv), vec!["row,mixture,method,source,sdr_db,sir_db,sar_db,n_mixtures,status"]);
}

#[test]
fn wiener_stems_sum_to_the_mixture() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 1);
    let manifest = corpus.join("mix_000/manifest.toml");
    let out = dir.path().join("stems");
    ok(&["separate", s(&manifest), "--method", "nmf-w", "--out", s(&out)]);
    let (mix, _) = load_wav(corpus.join("mix_000/mixture.wav")).unwrap();
    let (a, _) = load_wav(out.join("estimate_0.wav")).unwrap();
    let (b, _) = load_wav(out.join("estimate_1.wav")).unwrap();
    let lsb = 2f64.powi(-15);
    for n in 512..mix.len() - 512 {
        assert!((a[n] + b[n] - mix[n]).abs() <= 3.0 * lsb, "sample {n}");
    }
    let r = report(&out.join("report.json"));
    assert_eq!(r["method"], "nmf-w");
    assert_eq!(r["schema_version"], 1);
    assert!(r["scores"]["sources"].as_array().unwrap().len() == 2);
    assert!(r["timings"]["separate_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn phase_method_without_weights_matches_plain_cnmf() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 1);
    let manifest = corpus.join("mix_000/manifest.toml");
    let (pa, pb) = (dir.path().join("a"), dir.path().join("b"));
    let mut args = vec!["separate", s(&manifest), "--method", "cnmf", "--out", s(&pa)];
    args.extend(FAST);
    ok(&args);
    let mut args = vec![
        "separate", s(&manifest), "--method", "cnmf-phi", "--sigma-u", "0", "--sigma-r", "0", "--out", s(&pb),
    ];
    args.extend(FAST);
    ok(&args);
    let (a, b) = (report(&pa.join("report.json")), report(&pb.join("report.json")));
    assert_eq!(a["cost_trace"], b["cost_trace"]);
    assert_eq!(a["scores"], b["scores"]);
    assert_eq!(a["cost_trace"].as_array().unwrap().len(), 4);
}

#[test]
fn eval_has_one_mean_row_per_method_and_skips_missing_stems() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 2);
    for method in ["nmf-w", "cnmf", "cnmf-phi"] {
        let mut args = vec!["--jobs", "2", "separate", s(&corpus), "--method", method];
        args.extend(FAST);
        ok(&args);
    }
    fs::remove_file(corpus.join("mix_001/cnmf/estimate_1.wav")).unwrap();
    let csv = dir.path().join("eval.csv");
    ok(&["eval", s(&corpus), "--out", s(&csv)]);
    let lines = csv_lines(&csv);
    let means: Vec<&String> = lines.iter().filter(|l| l.starts_with("mean,")).collect();
    assert_eq!(means.len(), 3);
    assert!(lines.iter().any(|l| l.starts_with("source,mix_001,cnmf,,") && l.contains("missing stem")));
    let cnmf_mean = means.iter().find(|l| l.contains(",cnmf,")).unwrap();
    assert!(cnmf_mean.ends_with(",1,ok"), "{cnmf_mean}");
}

#[test]
fn single_cell_sweep_matches_eval() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 1);
    let mut args = vec!["separate", s(&corpus), "--method", "cnmf-phi"];
    args.extend(FAST);
    ok(&args);
    let eval_csv = dir.path().join("eval.csv");
    ok(&["eval", s(&corpus), "--method", "cnmf-phi", "--out", s(&eval_csv)]);
    let sweep_csv = dir.path().join("sweep.csv");
    let mut args = vec!["sweep", s(&corpus), "--sigma-u", "0.2", "--sigma-r", "0.2", "--out", s(&sweep_csv)];
    args.extend(FAST);
    ok(&args);

    let eval = csv_lines(&eval_csv);
    let mean: Vec<f64> = eval.iter().find(|l| l.starts_with("mean,")).unwrap().split(',').skip(4).take(3)
        .map(|v| v.parse().unwrap())
        .collect();
    let sweep = csv_lines(&sweep_csv);
    assert_eq!(sweep.len(), 2);
    assert!(fs::read_to_string(&sweep_csv).unwrap().starts_with("# phasecnmf-sweep/1\n"));
    let cell: Vec<f64> = sweep[1].split(',').skip(2).take(3).map(|v| v.parse().unwrap()).collect();
    for (a, b) in mean.iter().zip(&cell) {
        // Eval reads 16-bit stems, the sweep scores them in memory.
        assert!((a - b).abs() < 0.05, "{a} vs {b}");
    }
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("PHASECNMF_OUT", dir.path())
        .args(["synth", "--count", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("corpus/mix_000/manifest.toml").is_file());
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 1);
    let manifest = corpus.join("mix_000/manifest.toml");

    assert_eq!(run(&["separate", s(&manifest), "--method", "wiener"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));

    let text = fs::read_to_string(&manifest).unwrap();
    let no_onsets: String = text
        .lines()
        .filter(|l| !l.starts_with("onsets"))
        .collect::<Vec<_>>()
        .join("\n");
    let bare = corpus.join("mix_000/bare.toml");
    fs::write(&bare, no_onsets).unwrap();
    let out = run(&["separate", s(&bare), "--method", "cnmf-phi"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("onset"));

    let bad = corpus.join("mix_000/bad.toml");
    fs::write(&bad, text.replace("schema_version = 1", "schema_version = 7")).unwrap();
    assert_eq!(run(&["separate", s(&bad)]).status.code(), Some(3));

    let beyond = corpus.join("mix_000/beyond.toml");
    fs::write(&beyond, text.replace("[0, 173]", "[0, 9999]")).unwrap();
    let out = run(&["separate", s(&beyond)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("source 0"));

    let missing = dir.path().join("nowhere/manifest.toml");
    assert_eq!(run(&["separate", s(&missing)]).status.code(), Some(4));
    fs::create_dir_all(missing.parent().unwrap()).unwrap();
    fs::write(&missing, text.replace("mixture.wav", "absent.wav")).unwrap();
    assert_eq!(run(&["separate", s(&missing)]).status.code(), Some(4));

    let negative = run(&["separate", s(&manifest), "--sigma-u", "-1"]);
    assert_eq!(negative.status.code(), Some(2));
}
