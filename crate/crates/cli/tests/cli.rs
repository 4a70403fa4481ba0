use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mirrorwar");
const UPDATE_ENV: &str = "MIRRORWAR_UPDATE_GOLDEN";

const SUBCOMMANDS: [&str; 10] = [
    "train", "eval", "pit", "pool", "serve", "client", "analyze", "scenarios", "replay", "bench",
];

fn mirrorwar(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("MIRRORWAR_OUT")
        .env_remove("MIRRORWAR_ENDPOINT")
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn mirrorwar")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = mirrorwar(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    mirrorwar(args, cwd).status.code().expect("exit code")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(format!("{name}.txt"));
    if std::env::var_os(UPDATE_ENV).is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing {}; rerun with {UPDATE_ENV}=1", path.display()));
    assert_eq!(actual, expected, "help text of {name} changed; rerun with {UPDATE_ENV}=1 if intended");
}

/// Small learner and short evaluation settings for fast training runs.
const SMALL_TRAIN: &str = r#"
[train]
test_interval = 1000
test_episodes = 4

[learner]
hidden = [16]
batch_size = 4
buffer_capacity = 64
eps_anneal_steps = 2000
"#;

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL_TRAIN).unwrap();
    path
}

fn read_sorted(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn help_text_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    check_golden("help", &ok(&["--help"], tmp.path()));
    for sub in SUBCOMMANDS {
        check_golden(&format!("help_{sub}"), &ok(&[sub, "--help"], tmp.path()));
    }
}

#[test]
fn version_and_help_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["--version"], tmp.path()), 0);
    assert_eq!(code(&["help", "train"], tmp.path()), 0);
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&[], d), 2);
    assert_eq!(code(&["frobnicate"], d), 2);
    assert_eq!(code(&["train", "--no-such-flag"], d), 2);
    assert_eq!(code(&["train", "--mode", "mixed"], d), 2);
    assert_eq!(code(&["train", "--mode", "sideways"], d), 2);
    assert_eq!(code(&["train", "--algo", "bot"], d), 2);
    assert_eq!(code(&["pit", "--scenario", "99z"], d), 2);
    assert_eq!(code(&["pit", "--episodes", "0"], d), 2);
    assert_eq!(code(&["scenarios", "--show", "nope"], d), 2);
    assert_eq!(code(&["analyze"], d), 2);
    assert_eq!(code(&["client", "--scenario", "5m_vs_6m"], d), 2);

    let bad = d.join("bad.toml");
    std::fs::write(&bad, "[train]\nsurprise = 1\n").unwrap();
    assert_eq!(code(&["train", "--config", bad.to_str().unwrap()], d), 2);
    std::fs::write(&bad, "[weather]\nrain = true\n").unwrap();
    assert_eq!(code(&["train", "--config", bad.to_str().unwrap()], d), 2);
}

#[test]
fn runtime_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&["eval", "--checkpoint", "missing.json"], d), 1);
    assert_eq!(code(&["replay", "--file", "missing.jsonl"], d), 1);
}

#[test]
fn analyze_on_an_empty_directory_reports_no_input() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    let out = mirrorwar(&["analyze", "--metrics-dir", "empty"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no input files"));
}

#[test]
fn bot_beats_random_in_a_pit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(
        &["pit", "--red", "bot", "--blue", "random", "--episodes", "32", "--scenario", "3m", "--json"],
        tmp.path(),
    );
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["episodes"], 32);
    assert!(v["wins"].as_u64().unwrap() >= 30, "{out}");
}

#[test]
fn pit_replays_feed_replay_and_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["pit", "--episodes", "3", "--replay-out", "r.jsonl"], d);
    let summary = ok(&["replay", "--file", "r.jsonl"], d);
    assert_eq!(summary.lines().count(), 4, "{summary}");
    assert!(summary.contains("red win"));
    let steps = ok(&["replay", "--file", "r.jsonl", "--episode", "1"], d);
    assert!(steps.starts_with("step   1"));
    assert_eq!(code(&["replay", "--file", "r.jsonl", "--episode", "9"], d), 2);

    ok(&["analyze", "--replays", "r.jsonl", "--out", "an"], d);
    assert_eq!(read_sorted(&d.join("an")), ["diversity_r_red.csv", "diversity_r_red.json"]);
}

#[test]
fn paired_run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = small_config(d);
    ok(
        &[
            "train", "--mode", "paired", "--algo", "iql", "--algo-b", "vdn", "--steps", "2000", "--seeds", "3",
            "--config", cfg.to_str().unwrap(), "--out", "run",
        ],
        d,
    );
    let run = d.join("run");
    let names = read_sorted(&run);
    let count = |p: &str| names.iter().filter(|n| n.starts_with(p)).count();
    assert_eq!(count("metrics_seed"), 3, "{names:?}");
    assert_eq!(count("checkpoint_"), 6, "{names:?}");
    for f in ["summary.json", "summary.csv", "curves.csv", "config.toml", "manifest.json"] {
        assert!(names.iter().any(|n| n == f), "{f} missing from {names:?}");
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["resolved"]["train"]["mode"], "paired");
    assert_eq!(manifest["resolved"]["learner"]["hidden"], serde_json::json!([16]));

    // the written config reproduces the run
    let again = ok(&["train", "--config", "run/config.toml", "--out", "again"], d);
    assert!(again.contains("seed 2"));
    for s in 0..3 {
        let f = format!("metrics_seed{s}.csv");
        assert_eq!(std::fs::read(run.join(&f)).unwrap(), std::fs::read(d.join("again").join(&f)).unwrap());
    }

    let summary = ok(&["analyze", "--metrics-dir", "run", "--out", "an"], d);
    assert!(summary.contains("3m paired iql vs vdn"), "{summary}");
    assert!(d.join("an/summary.json").exists());
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = small_config(d);
    for out in ["a", "b"] {
        ok(
            &[
                "train", "--steps", "2000", "--seeds", "1", "--seed-base", "7", "--config",
                cfg.to_str().unwrap(), "--out", out,
            ],
            d,
        );
    }
    let a = std::fs::read(d.join("a/metrics_seed7.csv")).unwrap();
    let b = std::fs::read(d.join("b/metrics_seed7.csv")).unwrap();
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with("env_step,wins,draws,losses,"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = small_config(d);
    let status = Command::new(BIN)
        .args(["train", "--steps", "1000", "--seeds", "1", "--config", cfg.to_str().unwrap()])
        .current_dir(d)
        .env("MIRRORWAR_OUT", d.join("elsewhere"))
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(d.join("elsewhere/3m_bot_iql/metrics_seed0.csv").exists());
}

#[test]
fn checkpoints_refuse_other_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = small_config(d);
    ok(&["train", "--steps", "1000", "--seeds", "1", "--config", cfg.to_str().unwrap(), "--out", "run"], d);
    let ck = "run/checkpoint_seed0.json";
    let table = ok(&["eval", "--checkpoint", "run", "--episodes", "4"], d);
    assert!(table.contains("checkpoint_seed0.json (iql) vs bot"), "{table}");
    let out = mirrorwar(&["eval", "--checkpoint", ck, "--scenario", "8m"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("built for 3m, not 8m"));
    assert_eq!(code(&["pit", "--red", ck, "--scenario", "2s3z"], d), 1);
}

#[test]
fn scenario_listing_and_documents() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let list = ok(&["scenarios"], d);
    assert_eq!(list.lines().count(), 11);
    let doc = ok(&["scenarios", "--show", "MMM2"], d);
    std::fs::write(d.join("mmm2.toml"), &doc).unwrap();
    let out = ok(&["pit", "--scenario-file", "mmm2.toml", "--episodes", "2", "--json"], d);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["scenario"], "MMM2");
}

#[test]
fn bench_reports_throughput() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["bench", "--steps", "5000", "--json"], tmp.path());
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["steps"], 5000);
    assert!(v["steps_per_second"].as_f64().unwrap() > 0.0);
}

#[test]
fn served_session_over_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let endpoint = format!("127.0.0.1:{port}");
    let mut server = Command::new(BIN)
        .args(["serve", "--endpoint", &endpoint, "--bot", "blue", "--episodes", "2", "--sessions", "1"])
        .current_dir(d)
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let mut client = None;
    for _ in 0..100 {
        let out = Command::new(BIN)
            .args(["client", "--policy", "random", "--json"])
            .env("MIRRORWAR_ENDPOINT", &endpoint)
            .current_dir(d)
            .output()
            .unwrap();
        if out.status.success() {
            client = Some(out);
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    let client = client.expect("client never connected");
    let text = String::from_utf8(client.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with('{')).count(), 2, "{text}");
    assert!(text.contains("red on 3m: 2 episodes"));
    let server_out = server.wait_with_output().unwrap();
    assert!(server_out.status.success());
    assert!(String::from_utf8_lossy(&server_out.stdout).contains("session 0: 2 episodes"));
}
