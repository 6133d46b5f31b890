mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

use commands::{Outcome, Table};
use config::{Command, Format, RunConfig};

/// Numerical checks of functional inequalities for jump-type Dirichlet forms.
#[derive(Parser)]
#[command(name = "jumpform", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `output.dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn config_error(msg: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": "ConfigError", "message": msg }));
    ExitCode::from(1)
}

fn write_table(path: &Path, t: &Table) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    w.write_record(&t.headers).map_err(|e| e.to_string())?;
    for row in &t.rows {
        w.write_record(row).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn write_outputs(cfg: &RunConfig, dir: &Path, out: &Outcome) -> Result<Vec<PathBuf>, String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let stem = format!("{}-{}", cfg.command.name(), cfg.hash8());
    let mut written = Vec::new();
    if cfg.output.formats.contains(&Format::Json) {
        let path = dir.join(format!("{stem}.json"));
        let mut text = serde_json::to_string_pretty(&out.json).map_err(|e| e.to_string())?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
        written.push(path);
    }
    if cfg.output.formats.contains(&Format::Csv) {
        for t in &out.tables {
            let path = if out.tables.len() == 1 {
                dir.join(format!("{stem}.csv"))
            } else {
                dir.join(format!("{stem}-{}.csv", t.name))
            };
            write_table(&path, t)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return config_error(&format!("{}: {e}", cli.config.display())),
    };
    let cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    if cfg.command != cli.command {
        return config_error(&format!(
            "config is for '{}' but '{}' was requested",
            cfg.command.name(),
            cli.command.name()
        ));
    }
    if let Err(e) = commands::check_grids(&cfg) {
        return config_error(&e);
    }
    let dir = cli
        .output_dir
        .clone()
        .unwrap_or_else(|| cfg.output.dir.clone());

    let start = Instant::now();
    match commands::run(&cfg) {
        Ok(mut out) => {
            if !cfg.deterministic() {
                if let Value::Object(map) = &mut out.json {
                    map.insert(
                        "elapsed_seconds".into(),
                        json!(start.elapsed().as_secs_f64()),
                    );
                }
            }
            match write_outputs(&cfg, &dir, &out) {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{}", json!({ "error": "IoError", "message": e }));
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            let body = commands::error_value(&e);
            let doc = Outcome {
                json: json!({
                    "command": cfg.command.name(),
                    "config_hash": cfg.hash8(),
                    "status": "failed",
                    "error": body["error"],
                    "message": body["message"],
                }),
                tables: Vec::new(),
            };
            // best effort: the failure record goes to stderr regardless
            let _ = write_outputs(&cfg, &dir, &doc);
            eprintln!("{body}");
            ExitCode::from(2)
        }
    }
}
