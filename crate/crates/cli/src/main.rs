//! Command-line driver: corpus preparation, centroid initialization,
//! training, evaluation, exports, and ablation sweeps.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clue_core::error::Error;

use crate::config::RunConfig;

const USAGE: &str = "\
usage: clue <command> [--config FILE] [--KEY VALUE ...]

commands:
  prepare          tokenize and encode a labeled dataset into a prepared
                   corpus directory (requires train_path, num_classes)
  init-centroids   cluster vocabulary embedding rows into k centers
                   (kmeans or gmm) and write a centroid TSV
  train            train a model on a prepared corpus; writes a checkpoint,
                   a metric log, and the resolved config
  eval             evaluate a checkpoint on train/holdout/test
  export           write TSV artifacts from a checkpoint:
                   embeddings | centroids | alignments | latents
  sweep            train once per value along an axis (clusters | layers)
                   and tabulate test accuracy

Any config key can be overridden on the command line, e.g.
  clue train --config run.conf --variant cvae --k 4 --seed 7
";

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Data(_) | Error::Io(_) => 2,
        Error::Shape(_) | Error::Numeric(_) => 3,
    }
}

fn run() -> Result<(), Error> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let command = match args.first().map(String::as_str) {
        None | Some("help") | Some("--help") | Some("-h") => {
            print!("{USAGE}");
            return if args.is_empty() {
                Err(Error::config("missing command"))
            } else {
                Ok(())
            };
        }
        Some(c) => c.to_string(),
    };

    let mut config_path: Option<PathBuf> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let flag = &args[i];
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| Error::config(format!("expected --key, got {flag:?}")))?;
        let value = args
            .get(i + 1)
            .ok_or_else(|| Error::config(format!("flag --{key} needs a value")))?;
        if key == "config" {
            config_path = Some(PathBuf::from(value));
        } else {
            overrides.push((key.to_string(), value.clone()));
        }
        i += 2;
    }
    let cfg = RunConfig::load(config_path.as_deref(), &overrides)?;

    match command.as_str() {
        "prepare" => commands::cmd_prepare(&cfg),
        "init-centroids" => commands::cmd_init_centroids(&cfg),
        "train" => commands::cmd_train(&cfg),
        "eval" => commands::cmd_eval(&cfg),
        "export" => commands::cmd_export(&cfg),
        "sweep" => commands::cmd_sweep(&cfg),
        other => Err(Error::config(format!("unknown command {other:?}\n{USAGE}"))),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
