use clap::Parser;
use collapselab::cli;
use std::path::PathBuf;
use std::process::ExitCode;

/// Loss-landscape analysis for linear self-supervised models: analytic
/// stationary points, collapse prediction, full-batch training, and
/// reproducible experiment sweeps driven by a JSON config.
#[derive(Parser)]
#[command(version, after_help = cli::CONFIG_HELP)]
struct Args {
    /// Path to the JSON run configuration (a meta.json from a previous
    /// run works too).
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<String>,

    /// Master seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker thread count; the COLLAPSELAB_THREADS environment variable
    /// is used as a fallback.
    #[arg(long)]
    threads: Option<usize>,

    /// Config override `key.path=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut overrides = Vec::new();
    for item in &args.set {
        match item.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                eprintln!("configuration error: --set expects key.path=value, got `{item}`");
                return ExitCode::from(2);
            }
        }
    }
    let code = cli::run(
        &args.config,
        &overrides,
        args.out.as_deref(),
        args.seed,
        args.threads,
    );
    ExitCode::from(code as u8)
}
