//! Dataset ingestion: the UEA `.ts` text format, per-sample
//! z-normalization, stratified splits, and synthetic fixtures.
//!
//! Records with unequal lengths are right-padded with zeros to the
//! longest series in the file; the original length of every sample is
//! kept in the metadata and serialization trims the padding back off,
//! so parse -> serialize -> parse is the identity.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub problem_name: String,
    /// True when every record had the same original length.
    pub equal_length: bool,
    /// Pre-padding length of each sample.
    pub original_lengths: Vec<usize>,
    /// Common (padded) length L of all samples.
    pub series_length: usize,
}

/// `n` samples of shape `d_x x L` with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    pub samples: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub meta: DatasetMeta,
}

impl TimeSeriesDataset {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn channels(&self) -> usize {
        self.samples.first().map_or(0, |s| s.shape()[0])
    }

    pub fn length(&self) -> usize {
        self.meta.series_length
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    /// Samples of one class, as indices.
    fn indices_of_class(&self, c: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == c).collect()
    }

    fn subset(&self, indices: &[usize]) -> TimeSeriesDataset {
        TimeSeriesDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            meta: DatasetMeta {
                problem_name: self.meta.problem_name.clone(),
                equal_length: self.meta.equal_length,
                original_lengths: indices
                    .iter()
                    .map(|&i| self.meta.original_lengths[i])
                    .collect(),
                series_length: self.meta.series_length,
            },
        }
    }
}

fn parse_bool(s: &str, line: usize) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Parse {
            line,
            message: format!("expected true/false, got '{other}'"),
        }),
    }
}

/// Parse UEA `.ts` text.
pub fn parse_ts_str(content: &str) -> Result<TimeSeriesDataset> {
    let mut problem_name = String::from("unnamed");
    let mut declared_dims: Option<usize> = None;
    let mut univariate: Option<bool> = None;
    let mut equal_length_decl: Option<bool> = None;
    let mut series_length_decl: Option<usize> = None;
    let mut class_names: Option<Vec<String>> = None;
    let mut in_data = false;
    let mut data_line = 0usize;

    // Raw channels per record, plus label index.
    let mut records: Vec<(Vec<Vec<f64>>, usize)> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();

    for (lineno, raw) in content.lines().enumerate() {
        let line = lineno + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if !in_data {
            if let Some(rest) = text.strip_prefix('@') {
                let mut parts = rest.splitn(2, char::is_whitespace);
                let key = parts.next().unwrap_or("").to_ascii_lowercase();
                let value = parts.next().unwrap_or("").trim();
                match key.as_str() {
                    "problemname" => problem_name = value.to_string(),
                    "timestamps" => {
                        if parse_bool(value, line)? {
                            return Err(Error::Parse {
                                line,
                                message: "timestamped series are not supported".into(),
                            });
                        }
                    }
                    "missing" => {
                        // Missing markers show up as '?' in the data and
                        // fail numeric parsing there.
                        parse_bool(value, line)?;
                    }
                    "univariate" => univariate = Some(parse_bool(value, line)?),
                    "dimension" | "dimensions" => {
                        declared_dims = Some(value.parse().map_err(|_| Error::Parse {
                            line,
                            message: format!("bad dimension count '{value}'"),
                        })?)
                    }
                    "equallength" => equal_length_decl = Some(parse_bool(value, line)?),
                    "serieslength" => {
                        series_length_decl = Some(value.parse().map_err(|_| Error::Parse {
                            line,
                            message: format!("bad series length '{value}'"),
                        })?)
                    }
                    "classlabel" => {
                        let mut items = value.split_whitespace();
                        let flag = items.next().unwrap_or("");
                        if !parse_bool(flag, line)? {
                            return Err(Error::Parse {
                                line,
                                message: "classification needs '@classLabel true <labels...>'"
                                    .into(),
                            });
                        }
                        let names: Vec<String> = items.map(str::to_string).collect();
                        if names.is_empty() {
                            return Err(Error::Parse {
                                line,
                                message: "@classLabel true lists no labels".into(),
                            });
                        }
                        for (i, n) in names.iter().enumerate() {
                            label_index.insert(n.clone(), i);
                        }
                        class_names = Some(names);
                    }
                    "data" => {
                        in_data = true;
                        data_line = line;
                    }
                    other => {
                        return Err(Error::Parse {
                            line,
                            message: format!("unknown directive '@{other}'"),
                        })
                    }
                }
            } else {
                return Err(Error::Parse {
                    line,
                    message: format!("expected a directive or comment, got '{text}'"),
                });
            }
            continue;
        }

        // Data section: dim1:dim2:...:label
        let names = class_names.as_ref().ok_or(Error::Parse {
            line,
            message: "@data before @classLabel".into(),
        })?;
        let mut fields: Vec<&str> = text.split(':').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                line,
                message: "record needs at least one dimension and a class label".into(),
            });
        }
        let label_str = fields.pop().unwrap().trim();
        let label = *label_index.get(label_str).ok_or_else(|| Error::Parse {
            line,
            message: format!(
                "class label '{label_str}' not in declared set {:?}",
                names
            ),
        })?;
        let want_dims = declared_dims
            .or(univariate.and_then(|u| if u { Some(1) } else { None }))
            .or_else(|| records.first().map(|(chans, _)| chans.len()));
        if let Some(want) = want_dims {
            if fields.len() != want {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "record has {} dimensions, dataset declares {}",
                        fields.len(),
                        want
                    ),
                });
            }
        }
        let mut channels = Vec::with_capacity(fields.len());
        for (d, field) in fields.iter().enumerate() {
            let mut vals = Vec::new();
            for tok in field.split(',') {
                let tok = tok.trim();
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("dimension {}: bad value '{tok}'", d + 1),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("dimension {}: non-finite value '{tok}'", d + 1),
                    });
                }
                vals.push(v);
            }
            if vals.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: format!("dimension {} is empty", d + 1),
                });
            }
            if let (Some(true), Some(sl)) = (equal_length_decl, series_length_decl) {
                if vals.len() != sl {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "dimension {} has {} values, @seriesLength says {}",
                            d + 1,
                            vals.len(),
                            sl
                        ),
                    });
                }
            }
            channels.push(vals);
        }
        records.push((channels, label));
    }

    if !in_data {
        return Err(Error::Parse {
            line: content.lines().count(),
            message: "no @data section".into(),
        });
    }
    if records.is_empty() {
        return Err(Error::Parse {
            line: data_line,
            message: "empty data section".into(),
        });
    }
    let class_names = class_names.unwrap();

    let original_lengths: Vec<usize> = records
        .iter()
        .map(|(chans, _)| chans.iter().map(Vec::len).max().unwrap_or(0))
        .collect();
    let series_length = *original_lengths.iter().max().unwrap();
    let equal_length = original_lengths.iter().all(|&l| l == series_length)
        && records
            .iter()
            .all(|(chans, _)| chans.iter().all(|c| c.len() == series_length));

    let d_x = records[0].0.len();
    let mut samples = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (chans, label) in records {
        let mut t = Tensor::zeros(&[d_x, series_length]);
        for (c, vals) in chans.iter().enumerate() {
            for (i, &v) in vals.iter().enumerate() {
                t.set2(c, i, v);
            }
        }
        samples.push(t);
        labels.push(label);
    }

    Ok(TimeSeriesDataset {
        samples,
        labels,
        class_names,
        meta: DatasetMeta {
            problem_name,
            equal_length,
            original_lengths,
            series_length,
        },
    })
}

pub fn parse_ts(path: &Path) -> Result<TimeSeriesDataset> {
    let content = std::fs::read_to_string(path)?;
    parse_ts_str(&content)
}

/// Serialize back to `.ts` text. Padded samples are written at their
/// original lengths.
pub fn serialize_ts(ds: &TimeSeriesDataset) -> String {
    let mut out = String::new();
    out.push_str(&format!("@problemName {}\n", ds.meta.problem_name));
    out.push_str("@timeStamps false\n");
    out.push_str("@missing false\n");
    out.push_str(&format!("@univariate {}\n", ds.channels() == 1));
    out.push_str(&format!("@dimensions {}\n", ds.channels()));
    out.push_str(&format!("@equalLength {}\n", ds.meta.equal_length));
    if ds.meta.equal_length {
        out.push_str(&format!("@seriesLength {}\n", ds.meta.series_length));
    }
    out.push_str("@classLabel true");
    for name in &ds.class_names {
        out.push(' ');
        out.push_str(name);
    }
    out.push_str("\n@data\n");
    for (i, sample) in ds.samples.iter().enumerate() {
        let len = ds.meta.original_lengths[i];
        let d_x = sample.shape()[0];
        for c in 0..d_x {
            if c > 0 {
                out.push(':');
            }
            for t in 0..len {
                if t > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{}", sample.at2(c, t)));
            }
        }
        out.push(':');
        out.push_str(&ds.class_names[ds.labels[i]]);
        out.push('\n');
    }
    out
}

pub fn write_ts(ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    std::fs::write(path, serialize_ts(ds))?;
    Ok(())
}

const STD_EPS: f64 = 1e-8;

/// Per-sample, per-channel z-normalization over each sample's original
/// (pre-padding) length; constant channels map to zeros and the padded
/// tail stays zero.
pub fn znormalize(ds: &TimeSeriesDataset) -> TimeSeriesDataset {
    let mut out = ds.clone();
    for (idx, sample) in out.samples.iter_mut().enumerate() {
        let len = ds.meta.original_lengths[idx];
        let d_x = sample.shape()[0];
        for c in 0..d_x {
            let mut mean = 0.0;
            for t in 0..len {
                mean += sample.at2(c, t);
            }
            mean /= len as f64;
            let mut var = 0.0;
            for t in 0..len {
                let d = sample.at2(c, t) - mean;
                var += d * d;
            }
            let std = (var / len as f64).sqrt();
            if std < STD_EPS {
                for t in 0..len {
                    sample.set2(c, t, 0.0);
                }
            } else {
                for t in 0..len {
                    let v = (sample.at2(c, t) - mean) / std;
                    sample.set2(c, t, v);
                }
            }
        }
    }
    out
}

/// Stratified train/validation split. `fraction` is the train share;
/// per-class counts are preserved within one sample. Classes with a
/// single sample go entirely to train, with a warning.
pub fn stratified_split(
    ds: &TimeSeriesDataset,
    fraction: f64,
    seed: u64,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset, Vec<String>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} must be in [0, 1]"
        )));
    }
    let mut rng = crate::rng_from_seed(seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    let mut warnings = Vec::new();
    for c in 0..ds.classes() {
        let mut members = ds.indices_of_class(c);
        if members.is_empty() {
            continue;
        }
        if members.len() == 1 {
            warnings.push(format!(
                "class '{}' has a single sample; keeping it in train",
                ds.class_names[c]
            ));
            train_idx.push(members[0]);
            continue;
        }
        members.shuffle(&mut rng);
        let mut take = (members.len() as f64 * fraction).round() as usize;
        take = take.clamp(1, members.len() - if fraction < 1.0 { 1 } else { 0 });
        train_idx.extend_from_slice(&members[..take]);
        val_idx.extend_from_slice(&members[take..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((ds.subset(&train_idx), ds.subset(&val_idx), warnings))
}

/// Synthetic order-sensitivity task: one channel of Gaussian noise with
/// a unit pulse placed uniformly in the first half (class 0) or second
/// half (class 1). Amplitude statistics are identical across classes,
/// so position-blind pooling cannot beat chance.
pub fn synth_order_task(n: usize, length: usize, seed: u64) -> Result<TimeSeriesDataset> {
    if length % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "synth_order_task needs an even length, got {length}"
        )));
    }
    if n == 0 || length == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and length >= 2".into()));
    }
    use rand::Rng;
    let mut rng = crate::rng_from_seed(seed);
    let noise = Normal::new(0.0, 0.05).expect("valid normal");
    let half = length / 2;
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let mut t = Tensor::zeros(&[1, length]);
        for cell in t.data_mut() {
            *cell = noise.sample(&mut rng);
        }
        let pos = if label == 0 {
            rng.random_range(0..half)
        } else {
            rng.random_range(half..length)
        };
        let v = t.at2(0, pos) + 1.0;
        t.set2(0, pos, v);
        samples.push(t);
        labels.push(label);
    }
    Ok(TimeSeriesDataset {
        samples,
        labels,
        class_names: vec!["first_half".into(), "second_half".into()],
        meta: DatasetMeta {
            problem_name: format!("synth_order_n{n}_L{length}_s{seed}"),
            equal_length: true,
            original_lengths: vec![length; n],
            series_length: length,
        },
    })
}

const DATASET_CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetCheckpoint {
    format_version: u32,
    meta: DatasetMeta,
    class_names: Vec<String>,
    labels: Vec<usize>,
    samples: Vec<SampleRecord>,
}

/// Save a dataset in the same JSON container style as model checkpoints.
pub fn save_dataset(ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let ckpt = DatasetCheckpoint {
        format_version: DATASET_CHECKPOINT_VERSION,
        meta: ds.meta.clone(),
        class_names: ds.class_names.clone(),
        labels: ds.labels.clone(),
        samples: ds
            .samples
            .iter()
            .map(|t| SampleRecord {
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    std::fs::write(path, serde_json::to_string(&ckpt)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<TimeSeriesDataset> {
    let ckpt: DatasetCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if ckpt.format_version != DATASET_CHECKPOINT_VERSION {
        return Err(Error::InvalidArgument(format!(
            "dataset checkpoint version {} unsupported",
            ckpt.format_version
        )));
    }
    let samples: Result<Vec<Tensor>> = ckpt
        .samples
        .into_iter()
        .map(|s| Tensor::new(s.shape, s.data))
        .collect();
    Ok(TimeSeriesDataset {
        samples: samples?,
        labels: ckpt.labels,
        class_names: ckpt.class_names,
        meta: ckpt.meta,
    })
}
