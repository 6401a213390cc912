use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use tmfaug::eval::EvalReport;
use tmfaug::pipeline::{self, PipelineConfig, Stage};
use tmfaug::synth::{self, SynthConfig};
use tmfaug::{CombineMode, PatternSet, TimeMode};

#[derive(Parser)]
#[command(name = "tmfaug", version, about = "Metapath feature augmentation for Ponzi contract detection")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write artifacts to the output directory.
    Run(RunArgs),
    /// Compare two evaluation reports (A is the baseline).
    Compare { a: PathBuf, b: PathBuf },
    /// Generate a labelled synthetic graph as CSV files.
    Synth(SynthArgs),
    /// Print graph statistics as JSON.
    Stats {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        types: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    types: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Use a synthetic graph with default settings and this seed.
    #[arg(long)]
    synth_seed: Option<u64>,
    /// p1, p2 or p1p2.
    #[arg(long)]
    pattern: Option<PatternSet>,
    /// time_aware or timeless.
    #[arg(long)]
    time_mode: Option<TimeMode>,
    #[arg(long)]
    k_percent: Option<f64>,
    /// replace, sum or concat.
    #[arg(long)]
    combine_mode: Option<CombineMode>,
    #[arg(long)]
    no_refinement: bool,
    #[arg(long)]
    no_filtering: bool,
    /// Evaluate manual features only.
    #[arg(long)]
    raw_only: bool,
    #[arg(long)]
    n_repeats: Option<usize>,
    #[arg(long)]
    n_folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Precomputed `account,score` classifier output.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, env = "TMFAUG_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file with generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_ponzi: Option<usize>,
    #[arg(long)]
    n_normal: Option<usize>,
    #[arg(long)]
    n_eoa: Option<usize>,
    /// Writes edges.csv, types.csv and labels.txt here.
    #[arg(long, env = "TMFAUG_OUTPUT_DIR")]
    output_dir: PathBuf,
}

impl RunArgs {
    fn into_config(self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_toml(
                &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            )
            .with_context(|| format!("parsing {}", p.display()))?,
            None => PipelineConfig::default(),
        };
        if self.edges.is_some() {
            cfg.edges = self.edges;
            cfg.synth = None;
        }
        if self.types.is_some() {
            cfg.types = self.types;
        }
        if self.labels.is_some() {
            cfg.labels = self.labels;
        }
        if let Some(seed) = self.synth_seed {
            cfg.synth = Some(SynthConfig { seed, ..cfg.synth.unwrap_or_default() });
        }
        if let Some(p) = self.pattern {
            cfg.pattern = p;
        }
        if let Some(t) = self.time_mode {
            cfg.time_mode = t;
        }
        if let Some(k) = self.k_percent {
            cfg.k_percent = k;
        }
        if let Some(m) = self.combine_mode {
            cfg.combine_mode = m;
        }
        if self.no_refinement {
            cfg.use_refinement = false;
        }
        if self.no_filtering {
            cfg.use_filtering = false;
        }
        if self.raw_only {
            cfg.raw_only = true;
        }
        if let Some(n) = self.n_repeats {
            cfg.eval.n_repeats = n;
        }
        if let Some(n) = self.n_folds {
            cfg.eval.n_folds = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.scores.is_some() {
            cfg.eval.scores = self.scores;
        }
        if let Some(d) = self.output_dir {
            cfg.output_dir = d;
        }
        Ok(cfg)
    }
}

fn read_report(path: &Path) -> anyhow::Result<EvalReport> {
    let file = if path.is_dir() { path.join(pipeline::REPORT_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))
}

fn run(args: RunArgs) -> Result<(), (i32, anyhow::Error)> {
    let cfg = args.into_config().map_err(|e| (Stage::Config.exit_code(), e))?;
    let summary = pipeline::run_pipeline(&cfg).map_err(|e| (e.stage.exit_code(), anyhow::Error::new(e)))?;
    println!(
        "micro-F1 {:.4} ± {:.4} over {} folds (config {})",
        summary.report.mean_f1,
        summary.report.std_f1,
        summary.report.folds.len(),
        summary.report.config_hash
    );
    for p in &summary.artifacts {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SynthConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.n_ponzi {
        cfg.n_ponzi_ca = n;
    }
    if let Some(n) = args.n_normal {
        cfg.n_normal_ca = n;
    }
    if let Some(n) = args.n_eoa {
        cfg.n_eoa = n;
    }
    let (g, labels) = synth::generate(&cfg)?;
    fs::create_dir_all(&args.output_dir)?;
    let create = |name: &str| -> anyhow::Result<BufWriter<File>> {
        let p = args.output_dir.join(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    };
    g.write_snapshot(create("edges.csv")?, create("types.csv")?)?;
    let mut out = create("labels.txt")?;
    labels.write(&mut out)?;
    out.flush()?;
    println!("{} nodes, {} edges, {} labelled", g.num_nodes(), g.num_edges(), labels.len());
    Ok(())
}

fn stats_cmd(edges: PathBuf, types: Option<PathBuf>, labels: Option<PathBuf>) -> anyhow::Result<()> {
    let cfg = PipelineConfig { edges: Some(edges), types, labels, ..Default::default() };
    let (g, labels) = pipeline::load_input(&cfg)?;
    let stats = pipeline::stats_artifact(&g, &labels);
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &stats)?;
    writeln!(out)?;
    Ok(())
}

fn dispatch(command: Command) -> Result<(), (i32, anyhow::Error)> {
    match command {
        Command::Run(args) => run(args),
        Command::Compare { a, b } => (|| -> anyhow::Result<()> {
            let table = pipeline::compare_runs(&read_report(&a)?, &read_report(&b)?)?;
            print!("{table}");
            Ok(())
        })()
        .map_err(|e| (1, e)),
        Command::Synth(args) => synth_cmd(args).map_err(|e| (1, e)),
        Command::Stats { edges, types, labels } => stats_cmd(edges, types, labels).map_err(|e| (1, e)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Stage::Config.exit_code() as u8);
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}
