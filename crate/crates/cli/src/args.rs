use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "loopbias", version, about = "Source-bias simulation for sequential recommenders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a corpus and sequence file (synthetic unless --corpus is given).
    GenData {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the corpus in the binary format.
        #[arg(long)]
        binary: bool,
    },
    /// Train on human-only histories and save the checkpoint.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Source-split evaluation at one AIGC history ratio.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Evaluate this checkpoint instead of training one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Share of generated items in test histories.
        #[arg(long)]
        p: Option<String>,
    },
    /// Evaluate a human-trained model across history ratios.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// `start:end:step` or a comma-separated list.
        #[arg(long = "p-grid")]
        p_grid: Option<String>,
    },
    /// Run the click feedback loop.
    Loop {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Summarize the bias records of a finished run.
    Report {
        /// Run directory containing bias_records.jsonl.
        #[arg(long)]
        run: PathBuf,
        /// Also write the flat report in this format (csv or jsonl) into the run directory.
        #[arg(long)]
        format: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Parent directory of run directories.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Paired-embedding file (text or binary).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Sequence file; generated from the corpus when absent.
    #[arg(long)]
    pub sequences: Option<PathBuf>,
    /// Synthetic data settings, e.g. `pairs=200 dim=16 shift=0.5`.
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    pub synthetic: Vec<String>,
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<String>,
    #[arg(long = "lr")]
    pub learning_rate: Option<String>,
    /// Negatives per training instance.
    #[arg(long)]
    pub negatives: Option<String>,
    /// human, ecosystem or uniform.
    #[arg(long = "negative-source")]
    pub negative_source: Option<String>,
    #[arg(long = "max-history")]
    pub max_history: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    /// Click severity; a number >= 0 or `inf`.
    #[arg(long)]
    pub eta: Option<String>,
    #[arg(long)]
    pub iterations: Option<String>,
    /// Negative pairs per impression and per evaluation query.
    #[arg(long)]
    pub candidates: Option<String>,
    /// Comma-separated, e.g. `ndcg@3,map@5`.
    #[arg(long)]
    pub metrics: Option<String>,
    /// csv or jsonl.
    #[arg(long)]
    pub format: Option<String>,
    /// Any other setting, `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl CommonArgs {
    /// Flag overrides as `(config key, raw value)` in application order.
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |key: &str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((key.to_string(), v.clone()));
            }
        };
        push("seed", &self.seed);
        push("encoder", &self.encoder);
        push("hidden", &self.hidden);
        push("epochs", &self.epochs);
        push("batch_size", &self.batch_size);
        push("learning_rate", &self.learning_rate);
        push("negatives", &self.negatives);
        push("negative_source", &self.negative_source);
        push("max_history", &self.max_history);
        push("alpha", &self.alpha);
        push("beta", &self.beta);
        push("eta", &self.eta);
        push("iterations", &self.iterations);
        push("candidate_negatives", &self.candidates);
        push("metrics", &self.metrics);
        push("format", &self.format);
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        push("out_dir", &path(&self.out));
        push("corpus", &path(&self.corpus));
        push("sequences", &path(&self.sequences));
        out
    }

    /// `--synthetic` and `--set` pairs, split at the first `=`.
    pub fn key_values(&self) -> Result<Vec<(String, String)>, String> {
        self.synthetic
            .iter()
            .chain(&self.set)
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| format!("expected KEY=VALUE, got `{kv}`"))
            })
            .collect()
    }
}
