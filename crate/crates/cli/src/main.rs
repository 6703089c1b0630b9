mod config;
mod suites;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::Config;
use icb_designer::Arrangement;
use suites::Outcome;

pub const MANIFEST_SCHEMA: &str = "icb-manifest/1";

#[derive(Parser, Debug)]
#[command(name = "icb", version, about = "Separation-rank, bound, sphere and example-design suites")]
struct Cli {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if needed.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the worker thread count. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grid-matrix ranks of in-context and sequential representations.
    GapExperiment,
    /// Closed-form counting bounds against exhaustive enumeration.
    VerifyBounds,
    /// Monte Carlo sphere moments, Gram checks and the first-layer construction.
    VerifySphere,
    /// Builds nearest-neighbor pretraining examples from embedded sentences.
    DesignExamples(DesignArgs),
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Anchor sentences (JSONL or ICBE1 binary).
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Neighbor corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Regular examples for batch mixing; defaults to the corpus.
    #[arg(long)]
    regular: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// neighbors_in_context, random_in_context, neighbors_in_batch, random_in_batch or plain.
    #[arg(long)]
    variant: Option<Arrangement>,
    #[arg(long)]
    sep_token: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Drop neighbors already used by an earlier anchor.
    #[arg(long)]
    dedup: bool,
    /// Search with the small-world graph index and report its recall.
    #[arg(long)]
    approximate: bool,
}

impl DesignArgs {
    fn apply(&self, d: &mut config::DesignSection) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { d.$f = v; } )* };
        }
        set!(threshold, max_tokens, k, variant, sep_token);
        if self.tasks.is_some() {
            d.tasks = self.tasks.clone();
        }
        if self.corpus.is_some() {
            d.corpus = self.corpus.clone();
        }
        if self.regular.is_some() {
            d.regular = self.regular.clone();
        }
        if self.batch_size.is_some() {
            d.batch_size = self.batch_size;
        }
        d.dedup |= self.dedup;
        d.approximate |= self.approximate;
    }
}

fn run(cli: &Cli) -> Result<bool, Box<dyn std::error::Error + Send + Sync>> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let (name, echo) = match &cli.command {
        Command::GapExperiment => {
            cfg.gap.validate()?;
            ("gap-experiment", json!({"seed": cfg.seed, "gap": cfg.gap}))
        }
        Command::VerifyBounds => {
            cfg.bounds.validate()?;
            ("verify-bounds", json!({"seed": cfg.seed, "bounds": cfg.bounds}))
        }
        Command::VerifySphere => {
            cfg.sphere.validate()?;
            ("verify-sphere", json!({"seed": cfg.seed, "sphere": cfg.sphere}))
        }
        Command::DesignExamples(args) => {
            args.apply(&mut cfg.design);
            cfg.design.validate()?;
            ("design-examples", json!({"seed": cfg.seed, "design": cfg.design}))
        }
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| format!("{}: {e}", cli.out.display()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build()?;
    let start = Instant::now();
    let outcome = pool.install(|| match &cli.command {
        Command::GapExperiment => suites::gap(&cfg.gap, cfg.seed, &cli.out),
        Command::VerifyBounds => suites::bounds(&cfg.bounds, &cli.out),
        Command::VerifySphere => suites::sphere_suite(&cfg.sphere, cfg.seed, &cli.out),
        Command::DesignExamples(_) => suites::design(&cfg.design, cfg.seed, &cli.out),
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    for c in &outcome.checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{tag} {}", c.name);
        } else {
            println!("{tag} {} ({})", c.name, c.detail);
        }
    }
    let pass = outcome.checks.iter().all(|c| c.pass);
    write_manifest(&cli.out, name, echo, &outcome, elapsed, pool.current_num_threads(), pass)?;
    Ok(pass)
}

fn write_manifest(
    out: &Path,
    command: &str,
    config: serde_json::Value,
    outcome: &Outcome,
    wall_time: f64,
    threads: usize,
    pass: bool,
) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let mut m = json!({
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "config": config,
        "versions": {
            "icb-cli": env!("CARGO_PKG_VERSION"),
            "icb-core": icb_core::VERSION,
            "icb-designer": icb_designer::VERSION,
        },
        "wall_time_seconds": wall_time,
        "threads": threads,
        "outputs": outcome.files.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "checks": outcome.checks,
        "pass": pass,
    });
    m.as_object_mut().expect("object").extend(outcome.extra.clone());
    let path = out.join(format!("{command}.manifest.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
