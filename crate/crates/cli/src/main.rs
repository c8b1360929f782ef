//! Command-line harness: train and evaluate ConvTran models, run the
//! position-encoding ablation grid, and emit similarity-curve and
//! complexity reports.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use convtran::attention::RelKind;
use convtran::data::{parse_ts, znormalize};
use convtran::encoding::absolute::{
    build_learned_ape, build_tape, build_vanilla_ape, curve_to_csv, similarity_curve,
};
use convtran::encoding::relative::{complexity_report, Method};
use convtran::harness::{
    ablate, accuracy_matrix_to_csv, comparison_curve_csv, ranks_to_csv, resolve_dataset,
    run_training, DatasetSpec, Overrides, RunRecord,
};
use convtran::model::{AbsEncoding, ConvTranNet, ModelConfig};
use convtran::train::evaluate;

#[derive(Parser)]
#[command(
    name = "convtran",
    about = "Time-series position encodings and the ConvTran classifier",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a dataset and evaluate on its test split.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint.
    Eval(EvalArgs),
    /// Run the absolute x relative encoding grid and rank the results.
    Ablate(AblateArgs),
    /// Emit position-embedding similarity curves as CSV.
    Curves(CurvesArgs),
    /// Emit the parameter/memory/compute accounting as JSON.
    Complexity(ComplexityArgs),
}

/// Training flags shared by train/ablate. Flags override the config
/// file, which in turn overrides the defaults.
#[derive(Args, Clone, Default)]
struct TuningFlags {
    /// Config file in `key = value` format (see README for keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    patience: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Disable per-sample z-normalization.
    #[arg(long)]
    no_znorm: bool,
}

impl TuningFlags {
    fn resolve(&self, abs: Option<&str>, rel: Option<&str>) -> Result<Overrides> {
        let mut from_file = Overrides::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            from_file = Overrides::parse_config(&text)?;
        }
        let mut flags = Overrides::default();
        if let Some(a) = abs {
            flags.abs = Some(AbsEncoding::parse(a)?);
        }
        if let Some(r) = rel {
            flags.rel = Some(RelKind::parse(r)?);
        }
        flags.epochs = self.epochs;
        flags.patience = self.patience;
        flags.batch = self.batch;
        flags.lr = self.lr;
        if self.no_znorm {
            flags.znormalize = Some(false);
        }
        Ok(from_file.merged_with(&flags))
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset: a `.ts` train/test pair (path, stem, or directory) or
    /// `synth:order:n=600,len=64,seed=0`.
    #[arg(long)]
    dataset: String,
    /// Training seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run several seeds (comma separated) and report the best.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Absolute encoding: none|vanilla|learned|tape.
    #[arg(long)]
    abs: Option<String>,
    /// Relative encoding: none|shaw|vector|erpe.
    #[arg(long)]
    rel: Option<String>,
    /// Output directory for run records and checkpoints.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Model checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset to evaluate (same forms as `train --dataset`).
    #[arg(long)]
    dataset: String,
    /// Which split of the pair to evaluate.
    #[arg(long, default_value = "test")]
    split: String,
    /// Skip z-normalization (must match how the model was trained).
    #[arg(long)]
    no_znorm: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// Comma-separated dataset specs.
    #[arg(long, value_delimiter = ',', required = true)]
    datasets: Vec<String>,
    /// Absolute encodings to sweep.
    #[arg(long, value_delimiter = ',', default_value = "none,vanilla,learned,tape")]
    abs: Vec<String>,
    /// Relative encodings to sweep.
    #[arg(long, value_delimiter = ',', default_value = "none,shaw,vector,erpe")]
    rel: Vec<String>,
    /// Seeds per cell.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Output directory for the accuracy matrix and rank table.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningFlags,
}

#[derive(Args)]
struct CurvesArgs {
    /// vanilla | tape | learned | compare.
    #[arg(long, default_value = "compare")]
    kind: String,
    /// Series length L (single-curve kinds).
    #[arg(long, default_value_t = 1000)]
    length: usize,
    /// Embedding dimension (single-curve kinds).
    #[arg(long, default_value_t = 128)]
    d_model: usize,
    /// Seed for the learned table.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (single kinds) or directory (compare).
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct ComplexityArgs {
    /// Sequence lengths to report.
    #[arg(long, value_delimiter = ',', default_value = "30")]
    lengths: Vec<usize>,
    /// Embedding widths (d_z = d_model) to report.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    dims: Vec<usize>,
    /// Methods: tape,vanilla,learned,shaw,vector,erpe.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Output JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Verify the reported parameter counts against live models.
    #[arg(long, default_value_t = true)]
    check_live: bool,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Curves(args) => cmd_curves(args),
        Command::Complexity(args) => cmd_complexity(args),
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn write_record(dir: &Path, rec: &RunRecord, net: &ConvTranNet) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("{}_seed{}", sanitize(&rec.dataset), rec.seed);
    let rec_path = dir.join(format!("run_{stem}.json"));
    std::fs::write(&rec_path, serde_json::to_string_pretty(rec)?)?;
    let ckpt_path = dir.join(format!("model_{stem}.json"));
    net.save(&ckpt_path)?;
    println!("wrote {} and {}", rec_path.display(), ckpt_path.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let spec = resolve_dataset(&args.dataset)?;
    let overrides = args.tuning.resolve(args.abs.as_deref(), args.rel.as_deref())?;
    let seeds = if args.seeds.is_empty() {
        vec![args.seed]
    } else {
        args.seeds.clone()
    };
    let mut best: Option<RunRecord> = None;
    for &seed in &seeds {
        let (rec, net) = run_training(&spec, &overrides, seed)?;
        println!(
            "dataset {} seed {}: accuracy {:.4}, epochs {}, params {}, {:.1}s",
            rec.dataset,
            seed,
            rec.test_accuracy,
            rec.epochs_run,
            rec.parameter_count,
            rec.wall_time_s
        );
        if let Some(dir) = &args.out {
            write_record(dir, &rec, &net)?;
        }
        if best
            .as_ref()
            .map(|b| rec.test_accuracy > b.test_accuracy)
            .unwrap_or(true)
        {
            best = Some(rec);
        }
    }
    let best = best.expect("at least one seed");
    if seeds.len() > 1 {
        println!(
            "best of {} seeds: accuracy {:.4} (seed {})",
            seeds.len(),
            best.test_accuracy,
            best.seed
        );
        if let Some(dir) = &args.out {
            let summary = serde_json::json!({
                "dataset": best.dataset,
                "seeds": seeds,
                "best_seed": best.seed,
                "best_accuracy": best.test_accuracy,
            });
            let path = dir.join(format!("best_{}.json", sanitize(&best.dataset)));
            std::fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let net = ConvTranNet::load(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let spec = resolve_dataset(&args.dataset)?;
    let ds = match (&spec, args.split.as_str()) {
        (DatasetSpec::Files { train, .. }, "train") => parse_ts(train)?,
        (DatasetSpec::Files { test, .. }, "test") => parse_ts(test)?,
        (DatasetSpec::SynthOrder { .. }, split) => {
            let (train, test) = convtran::harness::load_pair(&spec)?;
            if split == "train" {
                train
            } else {
                test
            }
        }
        (_, other) => bail!("unknown split '{other}' (want train|test)"),
    };
    let ds = if args.no_znorm { ds } else { znormalize(&ds) };
    if ds.length() != net.config.length {
        bail!(
            "dataset length {} does not match the checkpoint's {}",
            ds.length(),
            net.config.length
        );
    }
    let acc = evaluate(&net, &ds)?;
    println!(
        "accuracy {:.4} on {} ({} samples, {} split)",
        acc,
        spec.name(),
        ds.n(),
        args.split
    );
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let specs = args
        .datasets
        .iter()
        .map(|d| resolve_dataset(d))
        .collect::<convtran::Result<Vec<_>>>()?;
    let abs: Vec<AbsEncoding> = args
        .abs
        .iter()
        .map(|a| AbsEncoding::parse(a))
        .collect::<convtran::Result<_>>()?;
    let rel: Vec<RelKind> = args
        .rel
        .iter()
        .map(|r| RelKind::parse(r))
        .collect::<convtran::Result<_>>()?;
    let grid: Vec<(AbsEncoding, RelKind)> = abs
        .iter()
        .flat_map(|&a| rel.iter().map(move |&r| (a, r)))
        .collect();
    let overrides = args.tuning.resolve(None, None)?;
    let result = ablate(&specs, &grid, &args.seeds, &overrides)?;

    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    println!("average ranks over {} dataset(s):", result.ranked_datasets);
    let mut order: Vec<usize> = (0..result.config_labels.len()).collect();
    order.sort_by(|&a, &b| {
        result.average_ranks_mean[a]
            .partial_cmp(&result.average_ranks_mean[b])
            .unwrap()
    });
    for i in order {
        println!(
            "  {:24} rank(mean acc) {:.3}   rank(best acc) {:.3}",
            result.config_labels[i],
            result.average_ranks_mean[i],
            result.average_ranks_best[i]
        );
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("accuracy_matrix.csv"), accuracy_matrix_to_csv(&result))?;
        std::fs::write(dir.join("rank_table.csv"), ranks_to_csv(&result))?;
        std::fs::write(
            dir.join("ablation.json"),
            serde_json::to_string_pretty(&result)?,
        )?;
        println!("wrote {}", dir.join("rank_table.csv").display());
    }
    Ok(())
}

fn cmd_curves(args: CurvesArgs) -> Result<()> {
    if args.out.is_empty() {
        bail!("--out must not be empty");
    }
    match args.kind.as_str() {
        "compare" => {
            // The two standard panels: (L=1000, d=128) and (L=30, d=128).
            let dir = PathBuf::from(&args.out);
            std::fs::create_dir_all(&dir)?;
            for (l, d) in [(1000usize, 128usize), (30, 128)] {
                let csv = comparison_curve_csv(l, d)?;
                let path = dir.join(format!("curves_L{l}_d{d}.csv"));
                std::fs::write(&path, csv)?;
                println!("wrote {}", path.display());
            }
        }
        kind => {
            let table = match kind {
                "vanilla" => build_vanilla_ape(args.length, args.d_model)?,
                "tape" => build_tape(args.length, args.d_model)?,
                "learned" => build_learned_ape(args.length, args.d_model, args.seed)?,
                other => bail!("unknown curve kind '{other}' (want vanilla|tape|learned|compare)"),
            };
            let csv = curve_to_csv(&similarity_curve(&table));
            std::fs::write(&args.out, csv)?;
            println!("wrote {} ({} offsets)", args.out, 2 * args.length - 1);
        }
    }
    Ok(())
}

fn cmd_complexity(args: ComplexityArgs) -> Result<()> {
    let methods: Vec<Method> = match &args.methods {
        None => Method::ALL.to_vec(),
        Some(list) if list.is_empty() || list.iter().all(|s| s.trim().is_empty()) => {
            bail!("--methods must list at least one method")
        }
        Some(list) => list
            .iter()
            .map(|m| Method::parse(m))
            .collect::<convtran::Result<_>>()?,
    };
    let mut reports = Vec::new();
    for &l in &args.lengths {
        for &d in &args.dims {
            for &m in &methods {
                reports.push(complexity_report(m, l, d));
            }
        }
    }
    let json = serde_json::to_string_pretty(&reports)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &json)?;
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }

    if args.check_live {
        for &l in &args.lengths {
            for &d in &args.dims {
                check_live_deltas(l, d, &methods)?;
            }
        }
        println!("live-model parameter deltas verified");
    }
    Ok(())
}

/// Build real models and verify that switching on each encoding adds
/// exactly the parameter count the report claims.
fn check_live_deltas(l: usize, d: usize, methods: &[Method]) -> Result<()> {
    let heads = if d % 8 == 0 { 8 } else { 1 };
    let base_cfg = |abs: AbsEncoding, rel: RelKind| -> Result<usize> {
        let mut cfg = ModelConfig::new(3, l, 2);
        cfg.d_model = d;
        cfg.d_z = d;
        cfg.heads = heads;
        cfg.kernel_len = cfg.kernel_len.min(l);
        cfg.abs_encoding = abs;
        cfg.rel_encoding = rel;
        Ok(ConvTranNet::new(cfg)?.count_parameters())
    };
    let none = base_cfg(AbsEncoding::None, RelKind::None)?;
    for &m in methods {
        let (live, expected) = match m {
            Method::Erpe => (
                base_cfg(AbsEncoding::None, RelKind::Erpe)? - none,
                heads as u64 * complexity_report(m, l, d).params,
            ),
            Method::Shaw => (
                base_cfg(AbsEncoding::None, RelKind::Shaw)? - none,
                complexity_report(m, l, d).params,
            ),
            Method::Vector => (
                base_cfg(AbsEncoding::None, RelKind::Vector)? - none,
                complexity_report(m, l, d).params,
            ),
            Method::Learned => (
                base_cfg(AbsEncoding::Learned, RelKind::None)? - none,
                complexity_report(m, l, d).params,
            ),
            Method::Tape => (
                base_cfg(AbsEncoding::Tape, RelKind::None)? - none,
                complexity_report(m, l, d).params,
            ),
            Method::VanillaApe => (
                base_cfg(AbsEncoding::VanillaApe, RelKind::None)? - none,
                complexity_report(m, l, d).params,
            ),
        };
        if live as u64 != expected {
            bail!(
                "live delta for {m:?} at L={l}, d={d} is {live}, report says {expected}"
            );
        }
    }
    Ok(())
}
