//! Batch commands behind the `softbot` binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
//! Relative output paths resolve against `$SOFTBOT_OUTPUT_ROOT` when set.

use std::collections::{BTreeSet, HashMap};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analysis::figures::{self, Figure, FrozenTable};
use crate::analysis::{self, derive_seed, fraction_near_zero, mann_whitney_u};
use crate::config::{resolve_output, ExperimentConfig};
use crate::evolution::{run_evolution, SimEvaluator};
use crate::fitness::{self, EvalMode};
use crate::genome::{Genome, Mode};
use crate::records::{self, RunDir};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "softbot", version, about = "Evolve soft voxel robots with and without ballistic development")]
pub struct Cli {
    /// Worker threads for evaluations (results do not depend on this).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run AFPO and write per-run generation and lineage CSVs.
    Evolve(ExperimentArgs),
    /// Evaluate random robots of both modes.
    RandomSearch(RandomSearchArgs),
    /// Re-evaluate best-of-generation genomes with development frozen at midlife.
    ReevaluateFrozen(FrozenArgs),
    /// Build the figure CSVs and plots from result directories.
    Analyze(AnalyzeArgs),
    /// Write a node trajectory for one genome.
    DumpTrajectory(DumpArgs),
    /// Champion fitness over a grid of mutation rates, both modes.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Default)]
pub struct ExperimentArgs {
    /// Experiment file (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub generations: Option<u32>,
    #[arg(long)]
    pub population_size: Option<usize>,
    #[arg(long)]
    pub runs: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub per_voxel_prob: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Evaluation lifetime in seconds.
    #[arg(long)]
    pub eval_duration: Option<f64>,
    /// Output directory (`{mode}` expands to the mode name).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RandomSearchArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Robots per mode.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FrozenArgs {
    /// An `evolve` output directory.
    pub run_dir: PathBuf,
    /// Output CSV (default: `frozen.csv` inside the run directory).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Only re-evaluate each run's final champion.
    #[arg(long)]
    pub final_only: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Evolution, random-search or sweep output directories.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Directory for the figure files (must not already contain them).
    #[arg(long, default_value = "analysis")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// Genome file (`mode <m>` header, then `index s0 s1` lines).
    #[arg(long, conflicts_with = "run_dir")]
    pub genome: Option<PathBuf>,
    /// Take the champion of a run from an `evolve` directory instead.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0, requires = "run_dir")]
    pub run: u32,
    /// Individual id within the run (default: the run champion).
    #[arg(long, requires = "run_dir")]
    pub id: Option<u64>,
    /// Experiment file supplying the `[sim]` settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Evaluate with development frozen at midlife (two seconds).
    #[arg(long)]
    pub frozen: bool,
    /// Trajectory file (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the fitness trace CSV here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Comma-separated per-voxel mutation probabilities.
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    /// Runs per (rate, mode) cell.
    #[arg(long)]
    pub cell_runs: Option<u32>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

fn usage(error: Error) -> CliError {
    CliError { code: 2, error }
}

fn runtime(error: Error) -> CliError {
    CliError { code: 1, error }
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        match error {
            Error::Config(_) => usage(error),
            other => runtime(other),
        }
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.error);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(usage(Error::Config("--jobs must be at least 1".into())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| runtime(Error::Config(e.to_string())))?;
    pool.install(|| match cli.command {
        Command::Evolve(a) => cmd_evolve(&a),
        Command::RandomSearch(a) => cmd_random_search(&a),
        Command::ReevaluateFrozen(a) => cmd_reevaluate_frozen(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::DumpTrajectory(a) => cmd_dump_trajectory(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    })
}

fn load_base(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) if !p.is_file() => Err(usage(Error::io(p, "config file not found"))),
        Some(p) => ExperimentConfig::load(p).map_err(usage),
    }
}

/// The config file with command-line overrides applied and validated.
pub fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = load_base(args.config.as_deref())?;
    if let Some(v) = args.mode {
        cfg.mode = v;
    }
    if let Some(v) = args.generations {
        cfg.generations = v;
    }
    if let Some(v) = args.population_size {
        cfg.population_size = v;
    }
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.per_voxel_prob {
        cfg.mutation.per_voxel_prob = v;
    }
    if let Some(v) = args.sigma {
        cfg.mutation.sigma = v;
    }
    if let Some(v) = args.eval_duration {
        cfg.sim.eval_duration = v;
    }
    if let Some(v) = &args.output {
        cfg.output_dir = v.clone();
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

/// Create `dir` and record `cfg` in it, or check that it already holds the same experiment.
fn prepare_output(dir: &Path, cfg: &ExperimentConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(Error::io(dir, e)))?;
    let path = dir.join(records::CONFIG_FILE);
    if path.exists() {
        let existing = ExperimentConfig::load(&path).map_err(usage)?;
        if existing.hash() != cfg.hash() {
            return Err(usage(Error::Config(format!(
                "{} holds a different experiment (config hash {} vs {})",
                dir.display(),
                existing.hash(),
                cfg.hash()
            ))));
        }
        return Ok(());
    }
    let header = records::header_comment(&cfg.hash(), cfg.seed, "");
    records::write_new(&path, &header, cfg.to_toml().as_bytes()).map_err(runtime)
}

pub fn cmd_evolve(args: &ExperimentArgs) -> Result<(), CliError> {
    let cfg = experiment_config(args)?;
    let dir = cfg.resolved_output_dir();
    prepare_output(&dir, &cfg)?;
    let hash = cfg.hash();
    let manifest = dir.join(records::MANIFEST_FILE);
    let done: BTreeSet<u32> = if manifest.exists() {
        records::read_manifest(&manifest)?.1.into_iter().map(|e| e.run).collect()
    } else {
        BTreeSet::new()
    };
    let params = cfg.evolution_params();
    let evaluator = SimEvaluator { sim: cfg.sim.clone() };
    for run in 0..cfg.runs {
        if done.contains(&run) {
            log::info!("run {run} already complete, skipping");
            continue;
        }
        for stale in [records::generations_path(&dir, run), records::lineage_path(&dir, run)] {
            if stale.exists() {
                log::warn!("removing incomplete artifact {}", stale.display());
                fs::remove_file(&stale).map_err(|e| runtime(Error::io(&stale, e)))?;
            }
        }
        let seed = derive_seed(cfg.seed, run as u64);
        let start = Instant::now();
        let record = run_evolution(&params, seed, &evaluator);
        let wall = start.elapsed().as_secs_f64();
        records::write_run(&dir, run, &record, &hash, cfg.seed)?;
        records::append_manifest(
            &dir,
            &hash,
            cfg.seed,
            &records::ManifestEntry { run, seed, generations: cfg.generations, wall_seconds: wall },
        )?;
        println!(
            "{} run {run}: seed {seed}, champion fitness {:.6} ({wall:.1} s)",
            cfg.mode,
            analysis::champion_fitness(&record)
        );
    }
    println!("results in {}", dir.display());
    Ok(())
}

pub fn random_search_path(dir: &Path, mode: Mode) -> PathBuf {
    dir.join(format!("random_{mode}.csv"))
}

pub fn cmd_random_search(args: &RandomSearchArgs) -> Result<(), CliError> {
    let mut cfg = experiment_config(&args.experiment)?;
    if let Some(n) = args.n {
        cfg.random_search.n = n;
    }
    if args.experiment.output.is_none() {
        cfg.output_dir = "runs/random-search".into();
    }
    cfg.validate().map_err(usage)?;
    let dir = cfg.resolved_output_dir();
    prepare_output(&dir, &cfg)?;
    let mut abs = Vec::new();
    for mode in [Mode::Evo, Mode::EvoDevo] {
        let start = Instant::now();
        let robots = analysis::random_search(cfg.random_search.n, mode, &cfg.sim, cfg.seed)?;
        let body = records::random_search_csv(&[(mode, robots.clone())])?;
        let path = random_search_path(&dir, mode);
        records::write_new(&path, &records::header_comment(&cfg.hash(), cfg.seed, &format!("mode={mode}")), &body)?;
        let f: Vec<f64> = robots.iter().map(|r| r.fitness).collect();
        println!(
            "{mode}: n={} |F|<{} fraction {:.3}, rolled over {} ({:.1} s)",
            f.len(),
            cfg.random_search.epsilon,
            fraction_near_zero(&f, cfg.random_search.epsilon),
            robots.iter().filter(|r| r.rolled_over).count(),
            start.elapsed().as_secs_f64()
        );
        abs.push(f.iter().map(|v| v.abs()).collect::<Vec<_>>());
    }
    let mw = mann_whitney_u(&abs[1], &abs[0])?;
    println!("Mann-Whitney on |F| (evo-devo vs evo): U={} p={:.4e}", mw.u, mw.p);
    println!("results in {}", dir.display());
    Ok(())
}

pub fn cmd_reevaluate_frozen(args: &FrozenArgs) -> Result<(), CliError> {
    let run_dir = resolve_input(&args.run_dir);
    if !run_dir.is_dir() {
        return Err(usage(Error::io(&run_dir, "run directory not found")));
    }
    let dir = records::load_run_dir(&run_dir).map_err(usage)?;
    let out = match &args.output {
        Some(p) => resolve_output(p),
        None => run_dir.join(records::FROZEN_FILE),
    };
    if out.exists() {
        return Err(runtime(Error::io(&out, "refusing to overwrite an existing artifact")));
    }
    let mut wanted: Vec<(u32, u32, u64)> = Vec::new();
    for run in &dir.runs {
        let gens = &run.record.generations;
        let gens = if args.final_only { &gens[gens.len().saturating_sub(1)..] } else { &gens[..] };
        wanted.extend(gens.iter().map(|g| (run.index, g.generation, g.best_id)));
    }
    let mut unique: Vec<(u32, u64)> = wanted.iter().map(|w| (w.0, w.2)).collect();
    unique.sort_unstable();
    unique.dedup();
    let mut jobs = Vec::with_capacity(unique.len());
    for &(run, id) in &unique {
        let rec = dir.runs.iter().find(|r| r.index == run).and_then(|r| r.record.record(id));
        let rec = rec.ok_or_else(|| runtime(Error::MissingAncestor(id)))?;
        jobs.push((id, rec.fitness, rec.genome.clone()));
    }
    let rows = analysis::reevaluate_frozen(&jobs, &dir.config.sim)?;
    let by_key: HashMap<(u32, u64), analysis::FrozenRow> = unique.iter().copied().zip(rows).collect();
    let table: Vec<(u32, u32, analysis::FrozenRow)> =
        wanted.iter().map(|&(run, gen, id)| (run, gen, by_key[&(run, id)])).collect();
    let header = records::header_comment(&dir.config_hash, dir.config.seed, "frozen-midlife");
    records::write_new(&out, &header, &records::frozen_csv(&table)?)?;
    println!("{} champions re-evaluated ({} distinct genomes) -> {}", table.len(), unique.len(), out.display());
    Ok(())
}

enum Input {
    Evolution(RunDir, Option<FrozenTable>),
    Random(Vec<(Mode, Vec<f64>)>, ExperimentConfig),
    Sweep(Vec<analysis::SweepCell>, ExperimentConfig),
}

/// Relative input directories are looked up under the output root first,
/// where the other subcommands put them.
fn resolve_input(path: &Path) -> PathBuf {
    let under_root = resolve_output(path);
    if under_root.exists() {
        under_root
    } else {
        path.to_path_buf()
    }
}

fn classify(path: &Path) -> Result<Input, CliError> {
    let path = &resolve_input(path);
    if !path.is_dir() {
        return Err(usage(Error::io(path, "directory not found")));
    }
    if path.join(records::MANIFEST_FILE).exists() {
        let dir = records::load_run_dir(path)?;
        let frozen_path = path.join(records::FROZEN_FILE);
        let frozen = if frozen_path.exists() {
            Some(records::read_frozen(&frozen_path)?.into_iter().map(|(r, g, _, _, fz)| ((r, g), fz)).collect())
        } else {
            None
        };
        return Ok(Input::Evolution(dir, frozen));
    }
    let cfg_path = path.join(records::CONFIG_FILE);
    if path.join(records::SWEEP_FILE).exists() {
        let cfg = ExperimentConfig::load(&cfg_path)?;
        return Ok(Input::Sweep(records::read_sweep(&path.join(records::SWEEP_FILE))?.1, cfg));
    }
    let mut samples = Vec::new();
    for mode in [Mode::Evo, Mode::EvoDevo] {
        let p = random_search_path(path, mode);
        if p.exists() {
            let rows = records::read_random_search(&p)?.1;
            samples.push((mode, rows.into_iter().map(|(_, r)| r.fitness).collect()));
        }
    }
    if samples.is_empty() {
        return Err(usage(Error::InsufficientData(format!(
            "{} contains no evolution, random-search or sweep results",
            path.display()
        ))));
    }
    Ok(Input::Random(samples, ExperimentConfig::load(&cfg_path)?))
}

/// Write `<name>.csv` (with comment header) and `<name>.svg` into `dir`.
pub fn write_figure(dir: &Path, header: &str, fig: &Figure) -> Result<(), Error> {
    let text = format!("{header}{}", fig.comment_block());
    records::write_new(&dir.join(format!("{}.csv", fig.name)), &text, &fig.csv()?)?;
    records::write_new(&dir.join(format!("{}.svg", fig.name)), "", fig.chart.to_svg().as_bytes())
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let inputs: Vec<Input> = args.dirs.iter().map(|d| classify(d)).collect::<Result<_, _>>()?;
    let out = resolve_output(&args.output);
    fs::create_dir_all(&out).map_err(|e| runtime(Error::io(&out, e)))?;

    let mut hashes = Vec::new();
    let mut seeds = Vec::new();
    let mut runs: Vec<(&RunDir, Option<&FrozenTable>)> = Vec::new();
    let mut figs = Vec::new();
    for input in &inputs {
        match input {
            Input::Evolution(d, fz) => {
                hashes.push(d.config_hash.clone());
                seeds.push(d.config.seed.to_string());
                runs.push((d, fz.as_ref()));
            }
            Input::Random(samples, cfg) => {
                hashes.push(cfg.hash());
                seeds.push(cfg.seed.to_string());
                figs.push(figures::fig3_random(samples, cfg.random_search.bins, cfg.random_search.epsilon)?);
            }
            Input::Sweep(cells, cfg) => {
                hashes.push(cfg.hash());
                seeds.push(cfg.seed.to_string());
                figs.push(figures::fig8_sweep(cells)?);
            }
        }
    }
    let mut warnings = Vec::new();
    let normalized: BTreeSet<String> = runs
        .iter()
        .map(|(d, _)| ExperimentConfig { mode: Mode::Evo, output_dir: PathBuf::new(), ..d.config.clone() }.hash())
        .collect();
    if normalized.len() > 1 {
        warnings.push(format!("warning: mismatched configs across run directories: {normalized:?}"));
    }
    if !runs.is_empty() {
        let dirs: Vec<&RunDir> = runs.iter().map(|r| r.0).collect();
        figs.push(figures::fig4_trajectories(&runs)?);
        if dirs.iter().any(|d| d.mode() == Mode::EvoDevo) {
            figs.push(figures::fig5_window_vs_fitness(&dirs)?);
        }
        figs.push(figures::fig6_lineage_windows(&dirs)?);
        figs.push(figures::fig7_mutation_impact(&dirs)?);
    }
    let mut header = records::header_comment(&hashes.join("+"), seeds.join("+"), "");
    for w in &warnings {
        header.push_str(&format!("# {w}\n"));
    }
    let mut summary = header.clone();
    for fig in &figs {
        write_figure(&out, &header, fig)?;
        summary.push_str(&format!("[{}]\n", fig.name));
        for n in &fig.notes {
            summary.push_str(n);
            summary.push('\n');
        }
    }
    records::write_new(&out.join("summary.txt"), "", summary.as_bytes())?;
    print!("{summary}");
    println!("figures in {}", out.display());
    Ok(())
}

pub fn cmd_dump_trajectory(args: &DumpArgs) -> Result<(), CliError> {
    let (genome, mut sim) = match (&args.genome, &args.run_dir) {
        (Some(path), None) => {
            let path = &resolve_input(path);
            if !path.is_file() {
                return Err(usage(Error::io(path, "genome file not found")));
            }
            let text = fs::read_to_string(path).map_err(|e| runtime(Error::io(path, e)))?;
            let g: Genome = text.parse().map_err(usage)?;
            (g, ExperimentConfig::default().sim)
        }
        (None, Some(dir)) => {
            let dir = &resolve_input(dir);
            if !dir.is_dir() {
                return Err(usage(Error::io(dir, "run directory not found")));
            }
            let rd = records::load_run_dir(dir).map_err(usage)?;
            let run = rd
                .runs
                .iter()
                .find(|r| r.index == args.run)
                .ok_or_else(|| usage(Error::Config(format!("run {} not found in {}", args.run, dir.display()))))?;
            let rec = match args.id {
                Some(id) => run.record.record(id),
                None => run.record.champion(),
            }
            .ok_or_else(|| usage(Error::MissingAncestor(args.id.unwrap_or(0))))?;
            (rec.genome.clone(), rd.config.sim.clone())
        }
        _ => return Err(usage(Error::Config("give exactly one of --genome or --run-dir".into()))),
    };
    if let Some(p) = &args.config {
        sim = load_base(Some(p))?.sim;
    }
    sim.validate().map_err(usage)?;
    let mode = if args.frozen { EvalMode::FrozenMidlife } else { EvalMode::Full };
    let trace = match &args.output {
        Some(p) => {
            let p = resolve_output(p);
            if p.exists() {
                return Err(runtime(Error::io(&p, "refusing to overwrite an existing artifact")));
            }
            let file = fs::File::create(&p).map_err(|e| runtime(Error::io(&p, e)))?;
            let mut w = std::io::BufWriter::new(file);
            let t = fitness::dump_trajectory(&genome, &sim, mode, &mut w)?;
            w.flush().map_err(|e| runtime(Error::io(&p, e)))?;
            t
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = std::io::BufWriter::new(stdout.lock());
            let t = fitness::dump_trajectory(&genome, &sim, mode, &mut lock)?;
            lock.flush().map_err(|e| runtime(Error::io("<stdout>", e)))?;
            t
        }
    };
    if let Some(p) = &args.trace {
        let p = resolve_output(p);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).map_err(|e| runtime(Error::io(&p, e)))?;
        records::write_new(&p, "", &buf)?;
    }
    eprintln!(
        "fitness {:.6}{}",
        trace.fitness,
        if trace.terminated_rollover { " (rolled over)" } else { "" }
    );
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let mut cfg = experiment_config(&args.experiment)?;
    if let Some(r) = &args.rates {
        cfg.sweep.rates = r.clone();
    }
    if let Some(r) = args.cell_runs {
        cfg.sweep.runs = r;
    }
    if args.experiment.output.is_none() {
        cfg.output_dir = "runs/sweep".into();
    }
    cfg.validate().map_err(usage)?;
    let dir = cfg.resolved_output_dir();
    prepare_output(&dir, &cfg)?;
    let path = dir.join(records::SWEEP_FILE);
    if path.exists() {
        return Err(runtime(Error::io(&path, "refusing to overwrite an existing artifact")));
    }
    let cells = analysis::sweep(
        &cfg.sweep.rates,
        cfg.sweep.runs,
        &[Mode::Evo, Mode::EvoDevo],
        &cfg.evolution_params(),
        &cfg.sim,
        cfg.seed,
    )?;
    records::write_new(&path, &records::header_comment(&cfg.hash(), cfg.seed, ""), &records::sweep_csv(&cells)?)?;
    for c in &cells {
        println!("rate {} {} run {}: champion {:.6}", c.rate, c.mode, c.run, c.champion_fitness);
    }
    println!("results in {}", dir.display());
    Ok(())
}
