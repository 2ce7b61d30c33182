//! QoS telemetry datasets: synthetic generation, CSV persistence and
//! shuffled train/test partitioning.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, streams};

pub const FEATURE_NAMES: [&str; 3] = ["delay_ms", "jitter_ms", "loss_pct"];
pub const TARGET_NAME: &str = "throughput_mbps";
pub const CSV_HEADER: &str = "delay_ms,jitter_ms,loss_pct,throughput_mbps";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("line {line}: loss_pct {value} outside [0, 100]")]
    LossOutOfRange { line: u64, value: f64 },
    #[error("dataset is empty")]
    Empty,
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("invalid generator parameter {name}: {value}")]
    BadParam { name: &'static str, value: f64 },
}

/// One network snapshot. The first three fields are model features, the
/// last is the regression target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosSample {
    pub delay_ms: f64,
    pub jitter_ms: f64,
    pub loss_pct: f64,
    pub throughput_mbps: f64,
}

impl QosSample {
    pub fn features(&self) -> [f64; 3] {
        [self.delay_ms, self.jitter_ms, self.loss_pct]
    }

    /// Checks the field invariants, returning a description of the first
    /// violation.
    pub fn check(&self) -> Result<(), String> {
        let fields = [
            ("delay_ms", self.delay_ms),
            ("jitter_ms", self.jitter_ms),
            ("loss_pct", self.loss_pct),
            ("throughput_mbps", self.throughput_mbps),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
            if v < 0.0 {
                return Err(format!("{name} is negative ({v})"));
            }
        }
        if self.loss_pct > 100.0 {
            return Err(format!("loss_pct {} above 100", self.loss_pct));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<QosSample>,
}

impl Dataset {
    pub fn new(samples: Vec<QosSample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.features().to_vec()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.throughput_mbps).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            // `Display` for f64 is the shortest representation that parses
            // back to the same value.
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.delay_ms, s.jitter_ms, s.loss_pct, s.throughput_mbps
            ));
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let io_err = |source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        w.write_all(self.to_csv_string().as_bytes()).map_err(io_err)?;
        w.flush().map_err(io_err)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut samples = Vec::new();
        let mut seen_header = false;
        for record in reader.records() {
            let record = record.map_err(|e| DatasetError::Malformed {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                msg: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if !seen_header {
                let header: Vec<&str> = record.iter().collect();
                if header.join(",") != CSV_HEADER {
                    return Err(DatasetError::Malformed {
                        line,
                        msg: format!("expected header `{CSV_HEADER}`"),
                    });
                }
                seen_header = true;
                continue;
            }
            if record.len() != 4 {
                return Err(DatasetError::Malformed {
                    line,
                    msg: format!("expected 4 columns, found {}", record.len()),
                });
            }
            let mut vals = [0.0f64; 4];
            for (i, field) in record.iter().enumerate() {
                vals[i] = field.trim().parse::<f64>().map_err(|_| DatasetError::Malformed {
                    line,
                    msg: format!("non-numeric value `{field}` in column {}", i + 1),
                })?;
            }
            let sample = QosSample {
                delay_ms: vals[0],
                jitter_ms: vals[1],
                loss_pct: vals[2],
                throughput_mbps: vals[3],
            };
            if sample.loss_pct.is_finite() && !(0.0..=100.0).contains(&sample.loss_pct) {
                return Err(DatasetError::LossOutOfRange {
                    line,
                    value: sample.loss_pct,
                });
            }
            sample
                .check()
                .map_err(|msg| DatasetError::Malformed { line, msg })?;
            samples.push(sample);
        }
        if !seen_header {
            return Err(DatasetError::Malformed {
                line: 1,
                msg: "missing header".into(),
            });
        }
        Ok(Self { samples })
    }
}

/// Parameters of the synthetic QoS generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub n: usize,
    pub seed: u64,
    pub delay_mean_ms: f64,
    pub delay_sigma: f64,
    pub jitter_scale_ms: f64,
    pub loss_alpha: f64,
    pub loss_beta: f64,
    pub noise_sigma_mbps: f64,
    pub capacity_mbps: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            n: 9000,
            seed: 42,
            delay_mean_ms: 40.0,
            delay_sigma: 0.5,
            jitter_scale_ms: 5.0,
            loss_alpha: 2.0,
            loss_beta: 50.0,
            noise_sigma_mbps: 0.45,
            capacity_mbps: 10.0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let params = [
            ("delay_mean_ms", self.delay_mean_ms),
            ("delay_sigma", self.delay_sigma),
            ("jitter_scale_ms", self.jitter_scale_ms),
            ("loss_alpha", self.loss_alpha),
            ("loss_beta", self.loss_beta),
            ("noise_sigma_mbps", self.noise_sigma_mbps),
            ("capacity_mbps", self.capacity_mbps),
        ];
        for (name, value) in params {
            if !(value.is_finite() && value > 0.0) {
                return Err(DatasetError::BadParam { name, value });
            }
        }
        Ok(())
    }
}

/// Noise-free throughput for a given impairment triple.
pub fn mean_throughput(capacity_mbps: f64, delay_ms: f64, jitter_ms: f64, loss_pct: f64) -> f64 {
    capacity_mbps / (1.0 + 0.05 * delay_ms + 0.2 * jitter_ms) * (1.0 - loss_pct / 100.0)
}

/// Draws `params.n` samples. Delay is log-normal around `delay_mean_ms`,
/// jitter exponential truncated at four times its scale, loss a scaled Beta,
/// and throughput a decreasing function of all three plus Gaussian noise.
pub fn generate_synthetic(params: &GeneratorParams) -> Result<Dataset, DatasetError> {
    params.validate()?;
    let mut rng = rng::stream(params.seed, streams::DATASET);
    let delay = LogNormal::new(params.delay_mean_ms.ln(), params.delay_sigma)
        .map_err(|_| DatasetError::BadParam { name: "delay_sigma", value: params.delay_sigma })?;
    let jitter = Exp::new(1.0 / params.jitter_scale_ms).map_err(|_| DatasetError::BadParam {
        name: "jitter_scale_ms",
        value: params.jitter_scale_ms,
    })?;
    let loss = Beta::new(params.loss_alpha, params.loss_beta)
        .map_err(|_| DatasetError::BadParam { name: "loss_alpha", value: params.loss_alpha })?;
    let noise = Normal::new(0.0, params.noise_sigma_mbps).map_err(|_| DatasetError::BadParam {
        name: "noise_sigma_mbps",
        value: params.noise_sigma_mbps,
    })?;
    let jitter_cap = 4.0 * params.jitter_scale_ms;

    let mut samples = Vec::with_capacity(params.n);
    for _ in 0..params.n {
        let delay_ms = delay.sample(&mut rng);
        let jitter_ms = loop {
            let j = jitter.sample(&mut rng);
            if j <= jitter_cap {
                break j;
            }
        };
        let loss_pct = (100.0 * loss.sample(&mut rng)).clamp(0.0, 100.0);
        let throughput = mean_throughput(params.capacity_mbps, delay_ms, jitter_ms, loss_pct)
            + noise.sample(&mut rng);
        samples.push(QosSample {
            delay_ms,
            jitter_ms,
            loss_pct,
            throughput_mbps: throughput.max(0.0),
        });
    }
    Ok(Dataset { samples })
}

/// Shuffles with a seeded permutation and splits off `round(test_fraction * N)`
/// samples as the test set.
pub fn shuffle_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if dataset.is_empty() {
        return Err(DatasetError::Empty);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::BadFraction(test_fraction));
    }
    let perm = split_permutation(dataset.len(), seed);
    let n_test = (test_fraction * dataset.len() as f64).round() as usize;
    let test = perm[..n_test].iter().map(|&i| dataset.samples[i]).collect();
    let train = perm[n_test..].iter().map(|&i| dataset.samples[i]).collect();
    Ok((Dataset::new(train), Dataset::new(test)))
}

/// The index permutation used by [`shuffle_split`].
pub fn split_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, streams::SPLIT);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}
