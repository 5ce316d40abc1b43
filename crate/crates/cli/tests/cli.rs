use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--generator",
    "nb-mixture",
    "-n",
    "60",
    "--chains",
    "2",
    "--warmup",
    "500",
    "--keep",
    "250",
    "--seed",
    "5",
    "--allow-unconverged",
];
const SYNTH: &[&str] = &["-m", "5", "--bootstrap", "100"];

fn dpsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("json error on stderr");
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn run_small(sub: &str, out_dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "-o", out_dir.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    dpsynth(&args)
}

#[test]
fn lists_every_subcommand() {
    let out = dpsynth(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in [
        "fit",
        "weights",
        "reweight",
        "synthesize",
        "utility",
        "mc",
        "pipeline",
    ] {
        assert!(text.contains(sub), "{sub}");
    }
}

#[test]
fn empty_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("empty.csv");
    fs::write(&csv, "count\n").unwrap();
    let out = dpsynth(&[
        "fit",
        "-i",
        csv.to_str().unwrap(),
        "-o",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "data");
}

#[test]
fn negative_count_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("neg.csv");
    fs::write(&csv, "3\n-1\n4\n").unwrap();
    let out = dpsynth(&[
        "fit",
        "-i",
        csv.to_str().unwrap(),
        "-o",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_configuration_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\nnot_a_field = 3\n").unwrap();
    let out = dpsynth(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");

    let out = run_small("pipeline", &tmp.path().join("o"), &["--thresh", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");
    let out = run_small("reweight", &tmp.path().join("o"), &["--k-init", "1.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");
}

#[test]
fn unconverged_chains_exit_with_four_after_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let out = dpsynth(&[
        "pipeline",
        "--generator",
        "poisson",
        "-n",
        "50",
        "--chains",
        "4",
        "--warmup",
        "10",
        "--keep",
        "10",
        "-m",
        "5",
        "--bootstrap",
        "50",
        "-o",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_kind(&out), "convergence");
    assert!(out_dir.join("manifest.json").is_file());
}

#[test]
fn weights_stay_private_unless_requested() {
    let tmp = tempfile::tempdir().unwrap();
    let plain = tmp.path().join("plain");
    let out = run_small("weights", &plain, &["--scheme", "cw"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!plain.join("confidential").exists());
    let summary = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str::<serde_json::Value>(&summary).expect("json summary");

    let emitted = tmp.path().join("emitted");
    let out = run_small("weights", &emitted, &["--scheme", "cw", "--emit-weights"]);
    assert!(out.status.success());
    let conf = emitted.join("confidential");
    assert!(fs::read_dir(&conf).unwrap().count() > 0);
    let weights = fs::read_dir(&conf)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .find(|f| f.starts_with("weights_cw"))
        .expect("cw weights file");
    let text = fs::read_to_string(conf.join(weights)).unwrap();
    assert_eq!(text.lines().count(), 61);
}

#[test]
fn pipeline_rerun_from_manifest_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let out = run_small("pipeline", &a, SYNTH);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let files = [
        "lipschitz.json",
        "utility.csv",
        "reweight.json",
        "synthetic/lw_final/replicate_005.csv",
    ];
    let before: Vec<Vec<u8>> = files.iter().map(|f| fs::read(a.join(f)).unwrap()).collect();
    let manifest = fs::read(a.join("manifest.json")).unwrap();

    let m = tmp.path().join("manifest.json");
    fs::copy(a.join("manifest.json"), &m).unwrap();
    fs::remove_dir_all(&a).unwrap();
    let out = dpsynth(&[
        "pipeline",
        "--manifest",
        m.to_str().unwrap(),
        "-o",
        a.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for (f, bytes) in files.iter().zip(&before) {
        assert_eq!(&fs::read(a.join(f)).unwrap(), bytes, "{f}");
    }
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), manifest);
}

#[test]
fn synthesize_then_utility() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("data.csv");
    let counts: Vec<String> = (0..40).map(|i| (20 + (i * 7) % 31).to_string()).collect();
    fs::write(
        &csv,
        format!(
            "id,count\n{}\n",
            counts
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{i},{c}"))
                .collect::<Vec<_>>()
                .join("\n")
        ),
    )
    .unwrap();

    let multi = dpsynth(&[
        "fit",
        "-i",
        csv.to_str().unwrap(),
        "-o",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(multi.status.code(), Some(3));

    let synth = tmp.path().join("synth");
    let out = dpsynth(&[
        "synthesize",
        "-i",
        csv.to_str().unwrap(),
        "--column",
        "count",
        "--chains",
        "2",
        "--warmup",
        "500",
        "--keep",
        "250",
        "-m",
        "4",
        "--allow-unconverged",
        "-o",
        synth.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let replicates = fs::read_dir(&synth)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir() && p.join("replicate_001.csv").is_file())
        .or_else(|| {
            let nested = synth.join("synthetic");
            fs::read_dir(nested)
                .ok()?
                .map(|e| e.unwrap().path())
                .find(|p| p.join("replicate_001.csv").is_file())
        })
        .expect("replicate directory");

    let util = tmp.path().join("util");
    let out = dpsynth(&[
        "utility",
        "-i",
        csv.to_str().unwrap(),
        "--column",
        "1",
        "--synthetic",
        &format!("fit={}", replicates.display()),
        "--bootstrap",
        "100",
        "-o",
        util.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(util.join("utility.csv")).unwrap();
    assert!(table
        .lines()
        .any(|l| l.contains("median") && l.contains("fit")));
    assert!(table
        .lines()
        .any(|l| l.contains("median") && l.contains("data")));
}

#[test]
fn mc_writes_replicate_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dpsynth(&[
        "mc",
        "--generator",
        "poisson",
        "--gen-mu",
        "30",
        "-n",
        "40",
        "-r",
        "3",
        "--chains",
        "2",
        "--warmup",
        "300",
        "--keep",
        "150",
        "--max-iters",
        "2",
        "-o",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(tmp.path().join("mc.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(tmp.path().join("violin.csv").is_file());
}
