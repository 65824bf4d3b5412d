use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use loopbias::data::{
    generate_sequences, generate_synthetic_corpus, load_corpus, read_sequences, write_corpus_binary,
    write_corpus_text, write_sequences, InteractionSequence, PairedCorpus, RewriterOracle,
};
use loopbias::encoders::{read_checkpoint, write_checkpoint, ModelParams};
use loopbias::engine::{evaluate_at, run_feedback_loop_with, sweep_with_params, train_phase_one, Dataset};
use loopbias::metrics::{avg_abs_delta, SourceSplitReport};
use loopbias::records::{emit_records, read_bias_records, render_jsonl, write_bias_records, RecordFormat};

use crate::config::{config_error, RunConfig};

const SYNTHETIC_KEYS: [&str; 10] = [
    "pairs", "dim", "shift", "noise", "renormalize", "users", "min_len", "max_len", "concentration", "drift",
];

pub fn check_synthetic_key(key: &str) -> Result<()> {
    if SYNTHETIC_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(config_error(format!(
            "synthetic: unknown key `{key}` (expected one of {})",
            SYNTHETIC_KEYS.join(", ")
        )))
    }
}

/// `<out_dir>/<command>-<seed>-<utc timestamp>`, made unique with a suffix.
pub fn create_run_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = cfg.out_dir.join(format!("{command}-{}-{stamp}", cfg.seed));
    let mut dir = base.clone();
    let mut n = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating run directory {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml()).context("writing config.toml")?;
    Ok(dir)
}

pub fn load_data(cfg: &RunConfig) -> Result<(PairedCorpus, Vec<InteractionSequence>)> {
    let corpus = match &cfg.corpus {
        Some(path) => load_corpus(path).with_context(|| format!("corpus {}", path.display()))?,
        None => {
            let oracle = RewriterOracle::random_shift(cfg.dim, cfg.shift, cfg.noise, cfg.renormalize, cfg.seed);
            generate_synthetic_corpus(cfg.pairs, cfg.dim, &oracle, cfg.seed).context("synthetic corpus")?
        }
    };
    let sequences = match &cfg.sequences {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("sequences {}", path.display()))?;
            read_sequences(BufReader::new(file)).with_context(|| format!("sequences {}", path.display()))?
        }
        None => generate_sequences(&corpus, &cfg.sequence_spec(), cfg.seed).context("synthetic sequences")?,
    };
    Ok((corpus, sequences))
}

fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?);
    write_checkpoint(params, &mut out)?;
    out.flush()?;
    Ok(())
}

fn record_format(name: &str) -> Result<RecordFormat> {
    match name {
        "csv" => Ok(RecordFormat::Csv),
        "jsonl" => Ok(RecordFormat::Jsonl),
        other => Err(config_error(format!("invalid format: `{other}` (expected csv or jsonl)"))),
    }
}

pub fn gen_data(cfg: &RunConfig, binary: bool) -> Result<PathBuf> {
    let (corpus, sequences) = load_data(cfg)?;
    let dir = create_run_dir(cfg, "gen-data")?;
    let name = if binary { "corpus.bin" } else { "corpus.txt" };
    let mut out = BufWriter::new(File::create(dir.join(name))?);
    if binary {
        write_corpus_binary(&corpus, &mut out)?;
    } else {
        write_corpus_text(&corpus, &mut out)?;
    }
    out.flush()?;
    let mut out = BufWriter::new(File::create(dir.join("sequences.txt"))?);
    write_sequences(&sequences, &mut out)?;
    out.flush()?;
    Ok(dir)
}

pub fn train(cfg: &RunConfig) -> Result<PathBuf> {
    let config = cfg.loop_config()?;
    let (corpus, sequences) = load_data(cfg)?;
    let dataset = Dataset::prepare(&corpus, &sequences, config.train.max_history)?;
    let (params, loss) = train_phase_one(&dataset, &corpus, &config)?;
    let dir = create_run_dir(cfg, "train")?;
    save_params(&params, &dir.join("checkpoint.params"))?;
    fs::write(dir.join("loss.json"), serde_json::to_string_pretty(&loss)? + "\n")?;
    Ok(dir)
}

fn report_csv(rows: &[(f64, &SourceSplitReport)]) -> String {
    let mut out = String::from("p,metric,k,value_hgc,value_aigc,relative_delta,ndcg3_overall\n");
    for (p, report) in rows {
        for (spec, r) in &report.results {
            let _ = writeln!(
                out,
                "{p},{},{},{},{},{},{}",
                spec.name(),
                spec.k,
                r.metric_hgc,
                r.metric_aigc,
                r.relative_delta,
                report.overall_ndcg3
            );
        }
    }
    out
}

pub fn eval(cfg: &RunConfig) -> Result<PathBuf> {
    let config = cfg.loop_config()?;
    let (corpus, sequences) = load_data(cfg)?;
    let dataset = Dataset::prepare(&corpus, &sequences, config.train.max_history)?;
    let params = match &cfg.checkpoint {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("checkpoint {}", path.display()))?;
            read_checkpoint(BufReader::new(file)).with_context(|| format!("checkpoint {}", path.display()))?
        }
        None => train_phase_one(&dataset, &corpus, &config)?.0,
    };
    let report = evaluate_at(&params, &dataset, cfg.p, &corpus, &config)?;
    let dir = create_run_dir(cfg, "eval")?;
    fs::write(dir.join("eval.csv"), report_csv(&[(cfg.p, &report)]))?;
    fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(dir)
}

pub fn sweep(cfg: &RunConfig) -> Result<PathBuf> {
    let config = cfg.loop_config()?;
    let grid = cfg.p_values()?;
    let (corpus, sequences) = load_data(cfg)?;
    let dataset = Dataset::prepare(&corpus, &sequences, config.train.max_history)?;
    let (params, _) = train_phase_one(&dataset, &corpus, &config)?;
    let points = sweep_with_params(&params, &dataset, &corpus, &config, &grid)?;
    let dir = create_run_dir(cfg, "sweep")?;

    let mut wide = String::from("p");
    for spec in &config.specs {
        let _ = write!(wide, ",{spec}_hgc,{spec}_aigc,{spec}_delta");
    }
    wide.push_str(",ndcg3_overall\n");
    for pt in &points {
        let _ = write!(wide, "{}", pt.p);
        for (_, r) in &pt.report.results {
            let _ = write!(wide, ",{},{},{}", r.metric_hgc, r.metric_aigc, r.relative_delta);
        }
        let _ = writeln!(wide, ",{}", pt.report.overall_ndcg3);
    }
    fs::write(dir.join("sweep.csv"), wide)?;
    fs::write(dir.join("sweep.jsonl"), render_jsonl(&points)?)?;
    save_params(&params, &dir.join("checkpoint.params"))?;
    Ok(dir)
}

pub fn run_loop(cfg: &RunConfig) -> Result<PathBuf> {
    let config = cfg.loop_config()?;
    let format = record_format(&cfg.format)?;
    let (corpus, sequences) = load_data(cfg)?;
    let dir = create_run_dir(cfg, "loop")?;
    let checkpoints = dir.join("checkpoints");
    fs::create_dir_all(&checkpoints)?;
    let lead = config.specs[0];
    let mut write_error = None;
    let output = run_feedback_loop_with(&corpus, &sequences, &config, |record, params| {
        eprintln!(
            "iteration {:>2}: p = {:.3}, {lead} delta = {:.2}, overall ndcg@3 = {:.4}",
            record.iteration,
            record.p,
            record.delta(lead).unwrap_or(f64::NAN),
            record.ndcg3_overall
        );
        let path = checkpoints.join(format!("iter-{:02}.params", record.iteration));
        if let Err(e) = save_params(params, &path) {
            write_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    emit_records(&output.records, format, &dir)?;
    write_bias_records(&output.records, &dir.join("bias_records.jsonl"))?;
    Ok(dir)
}

pub fn report(run: &Path, format: Option<&str>) -> Result<String> {
    let format = format.map(record_format).transpose()?;
    let path = run.join("bias_records.jsonl");
    let records = read_bias_records(&path).with_context(|| format!("reading {}", path.display()))?;
    let first = records.first().with_context(|| format!("{} holds no records", path.display()))?;
    let specs: Vec<_> = first.results.iter().map(|(s, _)| *s).collect();

    let mut out = String::from("iteration       p");
    for s in &specs {
        let _ = write!(out, " {:>10}", format!("{s}"));
    }
    out.push_str("  ndcg@3(all)\n");
    for r in &records {
        let _ = write!(out, "{:>9} {:>7.3}", r.iteration, r.p);
        for s in &specs {
            let _ = write!(out, " {:>10.2}", r.delta(*s).unwrap_or(f64::NAN));
        }
        let _ = writeln!(out, "  {:>11.4}", r.ndcg3_overall);
    }
    out.push_str("avg |delta|      ");
    for s in &specs {
        let series: Vec<f64> = records.iter().filter_map(|r| r.delta(*s)).collect();
        let _ = write!(out, " {:>10.2}", avg_abs_delta(&series)?);
    }
    out.push('\n');
    if let Some(format) = format {
        emit_records(&records, format, run)?;
    }
    Ok(out)
}
