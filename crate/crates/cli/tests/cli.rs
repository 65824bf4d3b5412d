use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--synthetic", "pairs=40", "dim=8", "users=40", "--hidden", "8", "--epochs", "2", "--candidates", "9",
];

fn loopbias(args: &[&str], out: &Path) -> Output {
    loopbias_env(args, out, None)
}

fn loopbias_env(args: &[&str], out: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_loopbias"));
    cmd.args(args).arg("--out").arg(out);
    match threads {
        Some(n) => cmd.env("LOOPBIAS_THREADS", n),
        None => cmd.env_remove("LOOPBIAS_THREADS"),
    };
    cmd.output().unwrap()
}

fn run_dir(output: &Output) -> PathBuf {
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    PathBuf::from(String::from_utf8(output.stdout.clone()).unwrap().trim())
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn loop_writes_records_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let out = loopbias(
        &["loop", "--synthetic", "pairs=200", "dim=16", "--eta", "inf", "--iterations", "10", "--seed", "42"],
        tmp.path(),
    );
    let dir = run_dir(&out);
    let name = dir.file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("loop-42-"), "{name}");
    let records = fs::read_to_string(dir.join("bias_records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 10);
    assert_eq!(fs::read_dir(dir.join("checkpoints")).unwrap().count(), 10);
    let csv = fs::read_to_string(dir.join("records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    assert_eq!(
        csv.lines().next().unwrap(),
        "iteration,p,metric,k,value_hgc,value_aigc,relative_delta,ndcg3_overall"
    );
    assert_eq!(fs::read_to_string(dir.join("plot_data.csv")).unwrap().lines().count(), 11);
    let config = fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(config.contains("eta = \"inf\""), "{config}");
    assert!(config.contains("iterations = 10"));
}

#[test]
fn sweep_grid_gives_eleven_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--p-grid", "0:1:0.1"];
    args.extend_from_slice(SMALL);
    let dir = run_dir(&loopbias(&args, tmp.path()));
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 12);
    assert!(lines[0].starts_with("p,ndcg@3_hgc,ndcg@3_aigc,ndcg@3_delta"));
    assert!(lines[1].starts_with("0,"));
    assert!(lines[11].starts_with("1,"));
}

#[test]
fn dangling_pair_exits_2_with_row() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.corpus");
    fs::write(
        &bad,
        "pairs=2 dim=2\n0,H,0,0.1,0.2\n1,G,0,0.1,0.3\n2,H,1,0.5,0.5\n3,G,7,0.5,0.6\n",
    )
    .unwrap();
    let out = loopbias(&["eval", "--corpus", bad.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("row 4"), "{err}");
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = loopbias(&["loop", "--no-such-flag"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let out = loopbias(&["loop", "--lr", "0"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("learning_rate"), "{}", stderr(&out));
    let out = loopbias(&["loop", "--synthetic", "colour=blue"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("colour"));
    let out = loopbias(&["sweep", "--p-grid", "0:2:0.5"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("p_grid"));
    let out = loopbias(&["train", "--corpus", "/nonexistent/corpus.txt"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/nonexistent/corpus.txt"));
    let out = loopbias_env(&["loop"], tmp.path(), Some("zero"));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("LOOPBIAS_THREADS"));
    let out = Command::new(env!("CARGO_BIN_EXE_loopbias")).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    // nothing was written by the failed runs
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn stored_config_reproduces_the_run_with_any_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["loop", "--iterations", "3", "--lr", "0.01", "--seed", "9"];
    args.extend_from_slice(SMALL);
    let first = run_dir(&loopbias_env(&args, tmp.path(), Some("1")));
    let config = first.join("config.toml");
    let again = run_dir(&loopbias_env(
        &["loop", "--config", config.to_str().unwrap()],
        tmp.path(),
        Some("3"),
    ));
    assert_ne!(first, again);
    for file in ["bias_records.jsonl", "records.csv", "plot_data.csv", "checkpoints/iter-03.params"] {
        assert_eq!(fs::read(first.join(file)).unwrap(), fs::read(again.join(file)).unwrap(), "{file}");
    }
    assert_eq!(
        fs::read_to_string(first.join("config.toml")).unwrap(),
        fs::read_to_string(again.join("config.toml")).unwrap()
    );
}

#[test]
fn generated_data_train_eval_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["gen-data", "--binary"];
    args.extend_from_slice(SMALL);
    let data = run_dir(&loopbias(&args, tmp.path()));
    let corpus = data.join("corpus.bin");
    let sequences = data.join("sequences.txt");
    assert!(corpus.exists() && sequences.exists());

    let files = ["--corpus", corpus.to_str().unwrap(), "--sequences", sequences.to_str().unwrap()];
    let model = ["--hidden", "8", "--epochs", "2", "--candidates", "9"];
    let mut args = vec!["train"];
    args.extend_from_slice(&files);
    args.extend_from_slice(&model);
    let trained = run_dir(&loopbias(&args, tmp.path()));
    let checkpoint = trained.join("checkpoint.params");

    let mut args = vec!["eval", "--checkpoint", checkpoint.to_str().unwrap(), "--p", "0.5"];
    args.extend_from_slice(&files);
    args.extend_from_slice(&model);
    let evaluated = run_dir(&loopbias(&args, tmp.path()));
    let csv = fs::read_to_string(evaluated.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().nth(1).unwrap().starts_with("0.5,ndcg,3,"));

    // a checkpoint of another width does not fit the config
    let mut args = vec!["eval", "--checkpoint", checkpoint.to_str().unwrap()];
    args.extend_from_slice(&files);
    let out = loopbias(&args, tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let mut args = vec!["loop", "--iterations", "2", "--format", "jsonl"];
    args.extend_from_slice(&files);
    args.extend_from_slice(&model);
    let run = run_dir(&loopbias(&args, tmp.path()));
    assert_eq!(fs::read_to_string(run.join("records.jsonl")).unwrap().lines().count(), 8);
    let out = Command::new(env!("CARGO_BIN_EXE_loopbias"))
        .args(["report", "--run", run.to_str().unwrap(), "--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().contains("ndcg@3"));
    assert!(text.contains("avg |delta|"));
    assert!(run.join("records.csv").exists());
}
