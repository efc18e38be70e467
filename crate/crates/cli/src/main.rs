use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coldcure::rng::rng_from_seed;
use coldcure::sweep::{
    emit_csv, emit_summary, illustrate::write_illustration_csv, illustrate_clustering, preset, run_sweep_with_progress,
    Illustration2DConfig, SweepConfig, SweepResult, PRESET_NAMES,
};
use coldcure::voteflow::{self, DecisionTree, DecomposeMode, VoteTable};

#[derive(Parser)]
#[command(name = "coldcure", version, about = "Tempered-posterior sweeps on curated synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a λ sweep from a preset or a JSON config.
    Sweep(SweepArgs),
    /// Run a toy-network sweep (defaults to the figA2 preset).
    BnnSweep(SweepArgs),
    /// Label noise study on curated S=4 data.
    NoiseSweep(NoiseArgs),
    /// Two Gaussian classes labelled by S annotators, with consensus marks.
    Illustrate(IllustrateArgs),
    /// Split per-answer vote counts into per-path counts.
    Voteflow(VoteflowArgs),
    /// Print a preset as a JSON config, or list presets.
    Preset {
        name: Option<String>,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON file with the same fields as a preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated S values.
    #[arg(long = "s", value_delimiter = ',')]
    s_values: Option<Vec<usize>>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct NoiseArgs {
    /// Comma-separated noise probabilities.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.5")]
    p: Vec<f64>,
    #[arg(long = "s", default_value_t = 4)]
    s: usize,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct IllustrateArgs {
    #[arg(long = "s", default_value_t = 7)]
    s: usize,
    #[arg(long, default_value = "fig2.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    points_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Proportional,
    Integer,
}

#[derive(Args)]
struct VoteflowArgs {
    /// Tree JSON, or `gz2` for the built-in Galaxy Zoo 2 tree.
    #[arg(long, default_value = "gz2")]
    tree: String,
    /// Prune list JSON, or `gz2`. Omit to use the tree as is.
    #[arg(long)]
    prunes: Option<String>,
    /// CSV with columns task_id,answer_label,count, recorded on the unpruned tree.
    #[arg(long)]
    votes: PathBuf,
    #[arg(long, value_enum, default_value = "proportional")]
    mode: Mode,
    /// Labelling JSON, or `gz2`. Defaults to gz2 with the gz2 prunes, else path indices.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long, default_value = "paths.csv")]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep(args) => sweep(args, None),
        Command::BnnSweep(args) => sweep(args, Some("figA2")),
        Command::NoiseSweep(args) => noise_sweep(args),
        Command::Illustrate(args) => illustrate(args),
        Command::Voteflow(args) => run_voteflow(args),
        Command::Preset { name: None } => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::Preset { name: Some(name) } => {
            println!("{}", serde_json::to_string_pretty(&preset(&name)?)?);
            Ok(())
        }
    }
}

fn sweep(args: SweepArgs, default_preset: Option<&str>) -> Result<()> {
    let (name, mut cfg) = match (&args.preset, &args.config) {
        (_, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let stem = path.file_stem().map_or("config".into(), |s| s.to_string_lossy().into_owned());
            (stem, SweepConfig::from_json(&text)?)
        }
        (Some(p), None) => (p.clone(), preset(p)?),
        (None, None) => match default_preset {
            Some(p) => (p.to_owned(), preset(p)?),
            None => bail!("give --preset or --config"),
        },
    };
    if default_preset.is_some() && cfg.kind.is_gp() {
        bail!("{name} is a GP preset; use `coldcure sweep`");
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.s_values {
        cfg.s_values = s;
    }
    execute(&name, &cfg, &args.out, args.quiet)
}

fn noise_sweep(args: NoiseArgs) -> Result<()> {
    let mut cfg = preset("fig6")?;
    cfg.noise_ps = args.p;
    cfg.s_values = vec![args.s];
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    execute("noise", &cfg, &args.out, args.quiet)
}

fn execute(name: &str, cfg: &SweepConfig, out: &Path, quiet: bool) -> Result<()> {
    cfg.validate()?;
    if !quiet {
        eprintln!(
            "{name}: {} with {} replicates, S {:?}, {} λ values",
            cfg.kind.name(),
            cfg.replicates,
            cfg.s_values,
            cfg.lambda_grid.len()
        );
    }
    let result = run_sweep_with_progress(cfg, |s, p, n| {
        if !quiet {
            eprintln!("  S={s} p={p}: {n} replicates done");
        }
    })?;
    fs::create_dir_all(out)?;
    let sweep_path = out.join(format!("{name}_sweep.csv"));
    let summary_path = out.join(format!("{name}_summary.csv"));
    emit_csv(&result.records(), &sweep_path)?;
    emit_summary(&result.summaries(), &summary_path)?;
    print_summary(&result);
    if !quiet {
        eprintln!("wrote {} and {}", sweep_path.display(), summary_path.display());
    }
    Ok(())
}

fn print_summary(result: &SweepResult) {
    println!("kind,S,p,lambda_star,ci_lo,ci_hi,depth,failures");
    for c in &result.curves {
        let star = c.lambda_star.map_or(f64::NAN, |l| l.value);
        let flags = match c.lambda_star {
            Some(l) if l.flat => " (flat)",
            Some(l) if l.boundary => " (grid edge)",
            _ => "",
        };
        println!(
            "{},{},{},{star:.4}{flags},{:.4},{:.4},{:.4},{}",
            c.kind,
            c.s,
            c.p,
            c.lambda_star_ci.0,
            c.lambda_star_ci.1,
            c.cold_posterior_depth(),
            c.failures.len()
        );
        if c.degraded {
            eprintln!("warning: {} S={} p={} lost more than 10% of replicates", c.kind, c.s, c.p);
        }
    }
}

fn illustrate(args: IllustrateArgs) -> Result<()> {
    let cfg = Illustration2DConfig {
        s: args.s,
        points_per_class: args.points_per_class,
        ..Illustration2DConfig::default()
    };
    let points = illustrate_clustering(&cfg, &mut rng_from_seed(args.seed))?;
    write_illustration_csv(&points, &args.out)?;
    let kept = points.iter().filter(|p| p.outcome.is_consensus()).count();
    println!("{} points, {kept} reached consensus, wrote {}", points.len(), args.out.display());
    Ok(())
}

fn load_tree(arg: &str) -> Result<DecisionTree> {
    if arg == "gz2" {
        return Ok(voteflow::gz2_tree());
    }
    let text = fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
    Ok(DecisionTree::from_json(&text)?)
}

fn run_voteflow(args: VoteflowArgs) -> Result<()> {
    let tree = load_tree(&args.tree)?;
    let ops = match args.prunes.as_deref() {
        None => Vec::new(),
        Some("gz2") => voteflow::gz2_prunes(),
        Some(path) => voteflow::parse_prunes(&fs::read_to_string(path).with_context(|| format!("reading {path}"))?)?,
    };
    let pruned = voteflow::apply_prunes(&tree, &ops)?;
    let file = fs::File::open(&args.votes).with_context(|| format!("reading {}", args.votes.display()))?;
    let votes = VoteTable::read_csv(file)?;
    let projected = voteflow::project_votes(&tree, &ops, &votes)?;
    let mode = match args.mode {
        Mode::Proportional => DecomposeMode::Proportional,
        Mode::Integer => DecomposeMode::Integer,
    };
    let counts = voteflow::decompose_votes(&pruned, &projected, mode)?;
    let labelling = match args.labels.as_deref() {
        Some("gz2") => voteflow::gz2_labelling(),
        Some(path) => voteflow::parse_labelling(&fs::read_to_string(path).with_context(|| format!("reading {path}"))?)?,
        None if args.prunes.as_deref() == Some("gz2") && args.tree == "gz2" => voteflow::gz2_labelling(),
        None => voteflow::identity_labelling(&pruned),
    };
    let classes = voteflow::map_paths_to_classes(&pruned, &labelling)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    voteflow::write_paths_csv(BufWriter::new(fs::File::create(&args.out)?), &counts, &classes)?;
    println!(
        "{} paths, {} volunteers, wrote {}",
        counts.paths.len(),
        counts.total(),
        args.out.display()
    );
    Ok(())
}
