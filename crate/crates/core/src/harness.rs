//! Experiment harness: dataset resolution, single training runs with
//! JSON run records, the encoding ablation grid with average ranks,
//! and the CSV/JSON reports the CLI emits.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::RelKind;
use crate::data::{self, TimeSeriesDataset};
use crate::encoding::absolute::{build_tape, build_vanilla_ape, similarity_curve};
use crate::error::{Error, Result};
use crate::model::{AbsEncoding, ConvTranNet, ModelConfig, PoolMode};
use crate::parallel::par_map;
use crate::train::{evaluate, fit, TrainConfig};

/// Outcome of one training run. Identical inputs (dataset, overrides,
/// seed) produce identical records except for `wall_time_s`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub seed: u64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_time_s: f64,
    pub parameter_count: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Where a dataset comes from: a `.ts` train/test pair on disk, or the
/// synthetic order task.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Files {
        name: String,
        train: PathBuf,
        test: PathBuf,
    },
    SynthOrder {
        n: usize,
        length: usize,
        seed: u64,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Files { name, .. } => name.clone(),
            DatasetSpec::SynthOrder { n, length, seed } => {
                format!("synth:order:n={n}:len={length}:seed={seed}")
            }
        }
    }
}

/// Resolve a `--dataset` argument:
/// - `synth:order:n=600:len=64:seed=3` builds the synthetic task
///   (colon-separated so specs survive comma-delimited flag lists);
/// - a directory looks for `<dir>/<Name>_TRAIN.ts` and `_TEST.ts`;
/// - a `..._TRAIN.ts` path derives the test file (and vice versa);
/// - any other path stem gets `_TRAIN.ts` / `_TEST.ts` appended.
pub fn resolve_dataset(arg: &str) -> Result<DatasetSpec> {
    if arg.is_empty() {
        return Err(Error::InvalidArgument("empty dataset argument".into()));
    }
    if let Some(rest) = arg.strip_prefix("synth:order:") {
        let (mut n, mut length, mut seed) = (600usize, 64usize, 0u64);
        for part in rest.split(':') {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("bad synth spec item '{part}' (want key=value)"))
            })?;
            match k.trim() {
                "n" => n = v.trim().parse().map_err(|_| bad_num(part))?,
                "len" | "l" => length = v.trim().parse().map_err(|_| bad_num(part))?,
                "seed" => seed = v.trim().parse().map_err(|_| bad_num(part))?,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown synth spec key '{other}'"
                    )))
                }
            }
        }
        return Ok(DatasetSpec::SynthOrder { n, length, seed });
    }
    let path = Path::new(arg);
    if path.is_dir() {
        let mut train = None;
        for entry in std::fs::read_dir(path)? {
            let p = entry?.path();
            if p.file_name()
                .and_then(|f| f.to_str())
                .is_some_and(|f| f.ends_with("_TRAIN.ts"))
            {
                train = Some(p);
                break;
            }
        }
        let train = train.ok_or_else(|| {
            Error::InvalidArgument(format!("no *_TRAIN.ts file under {}", path.display()))
        })?;
        return resolve_dataset(train.to_str().unwrap_or(arg));
    }
    let s = arg.to_string();
    let (train, test) = if let Some(stem) = s.strip_suffix("_TRAIN.ts") {
        (s.clone(), format!("{stem}_TEST.ts"))
    } else if let Some(stem) = s.strip_suffix("_TEST.ts") {
        (format!("{stem}_TRAIN.ts"), s.clone())
    } else {
        (format!("{s}_TRAIN.ts"), format!("{s}_TEST.ts"))
    };
    let name = Path::new(&train)
        .file_name()
        .and_then(|f| f.to_str())
        .map(|f| f.trim_end_matches("_TRAIN.ts").to_string())
        .unwrap_or_else(|| s.clone());
    Ok(DatasetSpec::Files {
        name,
        train: PathBuf::from(train),
        test: PathBuf::from(test),
    })
}

fn bad_num(part: &str) -> Error {
    Error::InvalidArgument(format!("bad number in synth spec item '{part}'"))
}

/// Load the train/test pair for a spec. Synthetic specs generate a
/// fresh test set of n/2 samples from an independent seed stream.
pub fn load_pair(spec: &DatasetSpec) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    match spec {
        DatasetSpec::Files { train, test, .. } => {
            Ok((data::parse_ts(train)?, data::parse_ts(test)?))
        }
        DatasetSpec::SynthOrder { n, length, seed } => {
            let train = data::synth_order_task(*n, *length, *seed)?;
            let test_seed = crate::derive_seed(*seed, 0x7E57);
            let test = data::synth_order_task((*n).div_ceil(2), *length, test_seed)?;
            Ok((train, test))
        }
    }
}

/// Model/training settings that callers may override; everything left
/// `None` keeps the defaults for the dataset at hand.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub abs: Option<AbsEncoding>,
    pub rel: Option<RelKind>,
    pub temporal_filters: Option<usize>,
    pub kernel_len: Option<usize>,
    pub d_model: Option<usize>,
    pub d_z: Option<usize>,
    pub heads: Option<usize>,
    pub ffn_ratio: Option<usize>,
    pub blocks: Option<usize>,
    pub dropout: Option<f64>,
    pub pool: Option<PoolMode>,
    pub shaw_clip: Option<usize>,
    pub raw_input_mixing: Option<bool>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub val_fraction: Option<f64>,
    pub znormalize: Option<bool>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ModelConfig, tc: &mut TrainConfig) {
        if let Some(v) = self.abs {
            cfg.abs_encoding = v;
        }
        if let Some(v) = self.rel {
            cfg.rel_encoding = v;
        }
        if let Some(v) = self.temporal_filters {
            cfg.temporal_filters = v;
        }
        if let Some(v) = self.kernel_len {
            cfg.kernel_len = v;
        }
        if let Some(v) = self.d_model {
            cfg.d_model = v;
        }
        if let Some(v) = self.d_z {
            cfg.d_z = v;
        }
        if let Some(v) = self.heads {
            cfg.heads = v;
        }
        if let Some(v) = self.ffn_ratio {
            cfg.ffn_ratio = v;
        }
        if let Some(v) = self.blocks {
            cfg.blocks = v;
        }
        if let Some(v) = self.dropout {
            cfg.dropout = v;
        }
        if let Some(v) = self.pool {
            cfg.pool = v;
        }
        if let Some(v) = self.shaw_clip {
            cfg.shaw_clip = Some(v);
        }
        if let Some(true) = self.raw_input_mixing {
            cfg.erpe_mixing = crate::attention::ErpeMixing::RawInput;
        }
        if let Some(v) = self.epochs {
            tc.max_epochs = v;
        }
        if let Some(v) = self.patience {
            tc.patience = v;
        }
        if let Some(v) = self.batch {
            tc.batch_size = v;
        }
        if let Some(v) = self.lr {
            tc.lr = v;
        }
        if let Some(v) = self.val_fraction {
            tc.val_fraction = v;
        }
        if let Some(v) = self.znormalize {
            tc.znormalize = v;
        }
    }

    /// Parse the key-value config file format: one `key = value` per
    /// line, `#` comments. Keys match the CLI flag names.
    pub fn parse_config(text: &str) -> Result<Overrides> {
        let mut o = Overrides::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            let parse_err = |what: &str| Error::Parse {
                line: lineno + 1,
                message: format!("bad {what} value '{value}'"),
            };
            match key.as_str() {
                "abs" => o.abs = Some(AbsEncoding::parse(value)?),
                "rel" => o.rel = Some(RelKind::parse(value)?),
                "temporal_filters" => {
                    o.temporal_filters = Some(value.parse().map_err(|_| parse_err("integer"))?)
                }
                "kernel_len" => o.kernel_len = Some(value.parse().map_err(|_| parse_err("integer"))?),
                "d_model" => o.d_model = Some(value.parse().map_err(|_| parse_err("integer"))?),
                "d_z" => o.d_z = Some(value.parse().map_err(|_| parse_err("integer"))?),
                "heads" => o.heads = Some(value.parse().map_err(|_| parse_err("integer"))?),
                "ffn_ratio" => o.ffn_ratio = Some(value.parse().map_err(|_| parse_err("integer"))?),
                "blocks" => o.blocks = Some(value.parse().map_err(|_| parse_err("integer"))?),
                "dropout" => o.dropout = Some(value.parse().map_err(|_| parse_err("number"))?),
                "pool" => {
                    o.pool = Some(match value.to_ascii_lowercase().as_str() {
                        "gap" | "gap_only" => PoolMode::GapOnly,
                        "max_plus_gap" | "max+gap" => PoolMode::MaxPlusGap,
                        _ => return Err(parse_err("pool mode")),
                    })
                }
                "shaw_clip" => o.shaw_clip = Some(value.parse().map_err(|_| parse_err("integer"))?),
                "raw_input_mixing" => {
                    o.raw_input_mixing = Some(value.parse().map_err(|_| parse_err("bool"))?)
                }
                "epochs" => o.epochs = Some(value.parse().map_err(|_| parse_err("integer"))?),
                "patience" => o.patience = Some(value.parse().map_err(|_| parse_err("integer"))?),
                "batch" => o.batch = Some(value.parse().map_err(|_| parse_err("integer"))?),
                "lr" => o.lr = Some(value.parse().map_err(|_| parse_err("number"))?),
                "val_fraction" => {
                    o.val_fraction = Some(value.parse().map_err(|_| parse_err("number"))?)
                }
                "znormalize" => o.znormalize = Some(value.parse().map_err(|_| parse_err("bool"))?),
                other => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("unknown config key '{other}'"),
                    })
                }
            }
        }
        Ok(o)
    }

    /// Later values win; used for flag-over-file precedence.
    pub fn merged_with(&self, over: &Overrides) -> Overrides {
        macro_rules! pick {
            ($field:ident) => {
                over.$field.clone().or(self.$field.clone())
            };
        }
        Overrides {
            abs: pick!(abs),
            rel: pick!(rel),
            temporal_filters: pick!(temporal_filters),
            kernel_len: pick!(kernel_len),
            d_model: pick!(d_model),
            d_z: pick!(d_z),
            heads: pick!(heads),
            ffn_ratio: pick!(ffn_ratio),
            blocks: pick!(blocks),
            dropout: pick!(dropout),
            pool: pick!(pool),
            shaw_clip: pick!(shaw_clip),
            raw_input_mixing: pick!(raw_input_mixing),
            epochs: pick!(epochs),
            patience: pick!(patience),
            batch: pick!(batch),
            lr: pick!(lr),
            val_fraction: pick!(val_fraction),
            znormalize: pick!(znormalize),
        }
    }
}

/// One full training run: load, normalize, train with early stopping,
/// evaluate on the test set. Returns the trained net with its record.
pub fn run_training(
    spec: &DatasetSpec,
    overrides: &Overrides,
    seed: u64,
) -> Result<(RunRecord, ConvTranNet)> {
    let start = Instant::now();
    let (train_raw, test_raw) = load_pair(spec)?;
    let mut tc = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let mut cfg = ModelConfig::new(train_raw.channels(), train_raw.length(), train_raw.classes());
    cfg.seed = seed;
    overrides.apply(&mut cfg, &mut tc);
    if test_raw.channels() != train_raw.channels() {
        return Err(Error::InvalidArgument(format!(
            "train has {} channels, test has {}",
            train_raw.channels(),
            test_raw.channels()
        )));
    }
    // Pad the shorter split up to the longer one's length so both fit
    // the same model.
    let common_len = train_raw.length().max(test_raw.length());
    let (train_set, test_set) = (
        pad_to(&train_raw, common_len),
        pad_to(&test_raw, common_len),
    );
    cfg.length = common_len;
    let (train_set, test_set) = if tc.znormalize {
        (data::znormalize(&train_set), data::znormalize(&test_set))
    } else {
        (train_set, test_set)
    };
    let mut net = ConvTranNet::new(cfg.clone())?;
    let report = fit(&mut net, &train_set, &tc)?;
    let test_accuracy = evaluate(&net, &test_set)?;
    Ok((
        RunRecord {
            dataset: spec.name(),
            seed,
            test_accuracy,
            epochs_run: report.epochs_run,
            best_epoch: report.best_epoch,
            best_val_loss: report.best_val_loss,
            wall_time_s: start.elapsed().as_secs_f64(),
            parameter_count: net.count_parameters(),
            model: cfg,
            train: tc,
        },
        net,
    ))
}

fn pad_to(ds: &TimeSeriesDataset, length: usize) -> TimeSeriesDataset {
    if ds.length() >= length {
        return ds.clone();
    }
    let mut out = ds.clone();
    let d_x = ds.channels();
    out.samples = ds
        .samples
        .iter()
        .map(|s| {
            let mut t = crate::tensor::Tensor::zeros(&[d_x, length]);
            for c in 0..d_x {
                for i in 0..ds.length() {
                    t.set2(c, i, s.at2(c, i));
                }
            }
            t
        })
        .collect();
    out.meta.series_length = length;
    out.meta.equal_length = false;
    out
}

/// Average ranks across datasets: per dataset the best accuracy gets
/// rank 1 and ties receive the mean of the ranks they span.
pub fn average_ranks(accuracy: &[Vec<f64>]) -> Vec<f64> {
    if accuracy.is_empty() {
        return Vec::new();
    }
    let n_cfg = accuracy[0].len();
    let mut totals = vec![0.0; n_cfg];
    for row in accuracy {
        assert_eq!(row.len(), n_cfg, "ragged accuracy matrix");
        for (c, r) in rank_row(row).into_iter().enumerate() {
            totals[c] += r;
        }
    }
    totals.iter().map(|t| t / accuracy.len() as f64).collect()
}

/// Ranks within one dataset: rank 1 = highest accuracy; exact ties get
/// the average of the tied positions.
pub fn rank_row(acc: &[f64]) -> Vec<f64> {
    let n = acc.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| acc[b].partial_cmp(&acc[a]).expect("finite accuracies"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && acc[order[j + 1]] == acc[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the mean of ranks i+1..=j+1
        let mean_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// A cell of the ablation grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationCell {
    pub dataset: String,
    pub abs: AbsEncoding,
    pub rel: RelKind,
    pub mean_accuracy: Option<f64>,
    pub best_accuracy: Option<f64>,
    pub per_seed: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationResult {
    pub datasets: Vec<String>,
    pub config_labels: Vec<String>,
    pub cells: Vec<AblationCell>,
    /// Average rank per configuration over the ranked datasets (mean
    /// accuracy, rank 1 = best); None when no dataset could be ranked.
    pub average_ranks_mean: Vec<f64>,
    /// Same, ranking on best-of-seeds accuracy.
    pub average_ranks_best: Vec<f64>,
    pub ranked_datasets: usize,
    pub warnings: Vec<String>,
}

/// Run the full `{abs} x {rel}` grid over datasets and seeds. A failed
/// run marks its cell and excludes that dataset from ranking.
pub fn ablate(
    specs: &[DatasetSpec],
    grid: &[(AbsEncoding, RelKind)],
    seeds: &[u64],
    base: &Overrides,
) -> Result<AblationResult> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "ablation needs at least 2 configurations".into(),
        ));
    }
    if specs.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs at least one dataset and one seed".into(),
        ));
    }
    let mut jobs = Vec::new();
    for (di, spec) in specs.iter().enumerate() {
        for (ci, &(abs, rel)) in grid.iter().enumerate() {
            for &seed in seeds {
                jobs.push((di, ci, spec.clone(), abs, rel, seed));
            }
        }
    }
    let base = base.clone();
    let results = par_map(jobs, |(di, ci, spec, abs, rel, seed)| {
        let mut o = base.clone();
        o.abs = Some(abs);
        o.rel = Some(rel);
        let out = run_training(&spec, &o, seed).map(|(rec, _)| rec.test_accuracy);
        (di, ci, seed, out)
    });

    let mut warnings = Vec::new();
    let mut per_cell: Vec<Vec<Option<f64>>> =
        vec![vec![None; seeds.len()]; specs.len() * grid.len()];
    for (di, ci, seed, out) in results {
        let cell = di * grid.len() + ci;
        match out {
            Ok(acc) => {
                let si = seeds.iter().position(|&s| s == seed).unwrap();
                per_cell[cell][si] = Some(acc);
            }
            Err(e) => warnings.push(format!(
                "run failed (dataset {}, config {}, seed {seed}): {e}",
                specs[di].name(),
                config_label(grid[ci].0, grid[ci].1)
            )),
        }
    }

    let mut cells = Vec::new();
    for (di, spec) in specs.iter().enumerate() {
        for (ci, &(abs, rel)) in grid.iter().enumerate() {
            let per_seed = per_cell[di * grid.len() + ci].clone();
            let ok: Vec<f64> = per_seed.iter().flatten().copied().collect();
            let complete = ok.len() == seeds.len();
            cells.push(AblationCell {
                dataset: spec.name(),
                abs,
                rel,
                mean_accuracy: complete
                    .then(|| ok.iter().sum::<f64>() / ok.len() as f64),
                best_accuracy: complete
                    .then(|| ok.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
                per_seed,
            });
        }
    }

    // Rank over datasets where every configuration completed.
    let mut mean_matrix = Vec::new();
    let mut best_matrix = Vec::new();
    for (di, spec) in specs.iter().enumerate() {
        let row: Vec<Option<(f64, f64)>> = (0..grid.len())
            .map(|ci| {
                let cell = &cells[di * grid.len() + ci];
                cell.mean_accuracy.zip(cell.best_accuracy)
            })
            .collect();
        if row.iter().all(Option::is_some) {
            mean_matrix.push(row.iter().map(|c| c.unwrap().0).collect::<Vec<f64>>());
            best_matrix.push(row.iter().map(|c| c.unwrap().1).collect::<Vec<f64>>());
        } else {
            warnings.push(format!(
                "dataset {} excluded from ranking (incomplete cells)",
                spec.name()
            ));
        }
    }

    Ok(AblationResult {
        datasets: specs.iter().map(DatasetSpec::name).collect(),
        config_labels: grid.iter().map(|&(a, r)| config_label(a, r)).collect(),
        cells,
        average_ranks_mean: average_ranks(&mean_matrix),
        average_ranks_best: average_ranks(&best_matrix),
        ranked_datasets: mean_matrix.len(),
        warnings,
    })
}

/// Compact `abs+rel` label; comma-free so it can live in CSV headers.
pub fn config_label(abs: AbsEncoding, rel: RelKind) -> String {
    let a = match abs {
        AbsEncoding::None => "none",
        AbsEncoding::VanillaApe => "vanilla",
        AbsEncoding::Learned => "learned",
        AbsEncoding::Tape => "tape",
    };
    let r = match rel {
        RelKind::None => "none",
        RelKind::Shaw => "shaw",
        RelKind::Vector => "vector",
        RelKind::Erpe => "erpe",
    };
    format!("{a}+{r}")
}

/// Rank-table CSV: one row per configuration with both rank flavors.
pub fn ranks_to_csv(result: &AblationResult) -> String {
    let mut s = String::from("config,avg_rank_mean_acc,avg_rank_best_acc\n");
    for (i, label) in result.config_labels.iter().enumerate() {
        s.push_str(&format!(
            "{label},{},{}\n",
            result.average_ranks_mean.get(i).copied().unwrap_or(f64::NAN),
            result.average_ranks_best.get(i).copied().unwrap_or(f64::NAN)
        ));
    }
    s
}

/// Raw accuracy matrix CSV (mean over seeds; empty cell = failed run).
pub fn accuracy_matrix_to_csv(result: &AblationResult) -> String {
    let n_cfg = result.config_labels.len();
    let mut s = String::from("dataset");
    for label in &result.config_labels {
        s.push(',');
        s.push_str(label);
    }
    s.push('\n');
    for (di, ds) in result.datasets.iter().enumerate() {
        s.push_str(ds);
        for ci in 0..n_cfg {
            s.push(',');
            if let Some(acc) = result.cells[di * n_cfg + ci].mean_accuracy {
                s.push_str(&format!("{acc}"));
            }
        }
        s.push('\n');
    }
    s
}

/// Two-curve comparison CSV (vanilla vs tAPE dot-product curves at the
/// same length/dimension): header `offset,vanilla_ape,tape`.
pub fn comparison_curve_csv(length: usize, d_model: usize) -> Result<String> {
    let vanilla = similarity_curve(&build_vanilla_ape(length, d_model)?);
    let tape = similarity_curve(&build_tape(length, d_model)?);
    let mut s = String::from("offset,vanilla_ape,tape\n");
    for ((k, v), (_, t)) in vanilla.iter().zip(&tape) {
        s.push_str(&format!("{k},{v},{t}\n"));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_configs_with_strict_dominance_rank_1_and_2() {
        let acc = vec![vec![0.9, 0.8], vec![0.7, 0.6], vec![0.95, 0.92]];
        assert_eq!(average_ranks(&acc), vec![1.0, 2.0]);
    }

    #[test]
    fn exact_ties_share_the_average_rank() {
        let acc = vec![vec![0.8, 0.8, 0.5]];
        assert_eq!(rank_row(&acc[0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn rank_matrix_matches_a_hand_computed_table() {
        // 3 configs on 4 datasets, worked out by hand:
        // ds1: [0.9, 0.8, 0.7] -> ranks [1, 2, 3]
        // ds2: [0.5, 0.9, 0.9] -> ranks [3, 1.5, 1.5]
        // ds3: [0.6, 0.6, 0.6] -> ranks [2, 2, 2]
        // ds4: [0.2, 0.3, 0.9] -> ranks [3, 2, 1]
        // means:                        [2.25, 1.875, 1.875]
        let acc = vec![
            vec![0.9, 0.8, 0.7],
            vec![0.5, 0.9, 0.9],
            vec![0.6, 0.6, 0.6],
            vec![0.2, 0.3, 0.9],
        ];
        assert_eq!(average_ranks(&acc), vec![2.25, 1.875, 1.875]);
    }

    #[test]
    fn ranks_are_invariant_under_monotone_transforms() {
        let acc = vec![vec![0.91, 0.3, 0.56, 0.56], vec![0.1, 0.2, 0.15, 0.4]];
        let transformed: Vec<Vec<f64>> = acc
            .iter()
            .map(|row| row.iter().map(|&a| (5.0 * a as f64).exp() + 1.0).collect())
            .collect();
        assert_eq!(average_ranks(&acc), average_ranks(&transformed));
    }

    #[test]
    fn dataset_specs_parse() {
        let s = resolve_dataset("synth:order:n=100:len=32:seed=9").unwrap();
        assert_eq!(
            s,
            DatasetSpec::SynthOrder {
                n: 100,
                length: 32,
                seed: 9
            }
        );
        let s = resolve_dataset("/tmp/Foo_TRAIN.ts").unwrap();
        match s {
            DatasetSpec::Files { name, train, test } => {
                assert_eq!(name, "Foo");
                assert_eq!(train, PathBuf::from("/tmp/Foo_TRAIN.ts"));
                assert_eq!(test, PathBuf::from("/tmp/Foo_TEST.ts"));
            }
            other => panic!("wrong spec {other:?}"),
        }
        assert!(resolve_dataset("").is_err());
        assert!(resolve_dataset("synth:order:bogus").is_err());
    }

    #[test]
    fn config_file_parses_and_flags_win() {
        let file = Overrides::parse_config(
            "# comment\nabs = tape\nrel = erpe\nepochs = 7\nlr = 0.01\n",
        )
        .unwrap();
        assert_eq!(file.abs, Some(AbsEncoding::Tape));
        assert_eq!(file.epochs, Some(7));
        let mut flags = Overrides::default();
        flags.rel = Some(RelKind::None);
        let merged = file.merged_with(&flags);
        assert_eq!(merged.rel, Some(RelKind::None));
        assert_eq!(merged.abs, Some(AbsEncoding::Tape));
        assert_eq!(merged.lr, Some(0.01));
        assert!(Overrides::parse_config("nonsense\n").is_err());
        assert!(Overrides::parse_config("mystery = 3\n").is_err());
    }

    #[test]
    fn comparison_curpanel_has_2l_minus_1_rows() {
        let csv = comparison_curve_csv(30, 16).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "offset,vanilla_ape,tape");
        assert_eq!(lines.len(), 1 + 59);
    }
}
