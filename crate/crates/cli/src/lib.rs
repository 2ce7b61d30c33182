//! Subcommand implementations behind the `poaml` binary.
//!
//! Every command returns a [`CliError`] carrying the process exit code:
//! 1 for domain failures (bad data, invalid ledgers, divergent simulations)
//! and 2 for usage or configuration errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use poaml_core::blockchain::{audit_jsonl, AuditFailure, KeyRegistry};
use poaml_core::dataset::{generate_synthetic, shuffle_split, Dataset, GeneratorParams};
use poaml_core::network::{SimConfig, SimOutput, Simulation};
use poaml_core::randomness::{randomness_rate, shannon_entropy, EntropyReport, RandomnessReport};
use poaml_core::regressors::{evaluate, fit, FittedModel, ModelKind, RegressionMetrics, RegressorSpec};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MIN_BENCHMARK_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn domain(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub fn cmd_gen_data(n: usize, seed: u64, out: &Path) -> Result<Dataset, CliError> {
    let ds = generate_synthetic(&GeneratorParams {
        n,
        seed,
        ..Default::default()
    })
    .map_err(|e| CliError::usage(e.to_string()))?;
    ds.save_csv(out).map_err(|e| CliError::domain(e.to_string()))?;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkConfig {
    /// SHA-256 of the dataset in canonical CSV form.
    pub data_sha256: String,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub models: Vec<RegressorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelResult {
    pub kind: ModelKind,
    pub name: &'static str,
    pub metrics: RegressionMetrics,
    pub randomness: RandomnessReport,
    pub entropy: EntropyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelTiming {
    pub kind: ModelKind,
    pub train_time_s: f64,
    pub predict_time_s: f64,
}

/// Benchmark results. Wall-clock timings live only in `timings`; everything
/// else is a pure function of `config`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: BenchmarkConfig,
    pub models: Vec<ModelResult>,
    pub timings: Vec<ModelTiming>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn render_tables(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(
            s,
            "dataset: {} rows ({} train / {} test), seed {}, sha256 {}",
            c.n_rows, c.n_train, c.n_test, c.seed, c.data_sha256
        );
        let _ = writeln!(s, "\nRegression metrics (test split)");
        let _ = writeln!(s, "{:<26}{:>9}{:>9}{:>9}{:>9}", "model", "MAE", "MSE", "RMSE", "R2");
        for m in &self.models {
            let x = &m.metrics;
            let _ = writeln!(
                s,
                "{:<26}{:>9.3}{:>9.3}{:>9.3}{:>9.3}",
                m.name, x.mae, x.mse, x.rmse, x.r2
            );
        }
        let _ = writeln!(s, "\nNonce suitability (test-split predictions)");
        let _ = writeln!(s, "{:<26}{:>12}{:>12}{:>14}", "model", "rate_pct", "entropy", "unique/total");
        for m in &self.models {
            let _ = writeln!(
                s,
                "{:<26}{:>12.3}{:>12.3}{:>14}",
                m.name,
                m.randomness.rate_pct,
                m.entropy.normalized,
                format!("{}/{}", m.randomness.n_unique, m.randomness.n_total)
            );
        }
        let _ = writeln!(s, "\nTimings (seconds, not reproducible)");
        let _ = writeln!(s, "{:<26}{:>10}{:>10}", "model", "train", "predict");
        for (m, t) in self.models.iter().zip(&self.timings) {
            let _ = writeln!(s, "{:<26}{:>10.3}{:>10.3}", m.name, t.train_time_s, t.predict_time_s);
        }
        s
    }
}

pub struct BenchmarkOutcome {
    pub report: ExperimentReport,
    /// Test-split predictions per model, in test-row order.
    pub predictions: BTreeMap<ModelKind, Vec<f64>>,
    pub models: BTreeMap<ModelKind, FittedModel>,
    pub test: Dataset,
}

pub struct SplitResults {
    pub results: Vec<ModelResult>,
    pub timings: Vec<ModelTiming>,
    pub predictions: BTreeMap<ModelKind, Vec<f64>>,
    pub models: BTreeMap<ModelKind, FittedModel>,
}

fn digest(ds: &Dataset) -> String {
    hex::encode(Sha256::digest(ds.to_csv_string().as_bytes()))
}

/// Trains every model kind on `train` and scores it on `test`.
pub fn benchmark_split(train: &Dataset, test: &Dataset, seed: u64) -> Result<SplitResults, CliError> {
    let rows = test.feature_rows();
    let actual = test.targets();
    let (mut results, mut timings, mut preds, mut models) = (Vec::new(), Vec::new(), BTreeMap::new(), BTreeMap::new());
    for kind in ModelKind::ALL {
        let spec = RegressorSpec::default_for(kind, seed);
        let model = fit(&spec, train).map_err(|e| CliError::domain(format!("{kind}: {e}")))?;
        let batch = model
            .predict_batch(&rows)
            .map_err(|e| CliError::domain(format!("{kind}: {e}")))?;
        let domain = |e: &dyn std::fmt::Display| CliError::domain(format!("{kind}: {e}"));
        results.push(ModelResult {
            kind,
            name: kind.display_name(),
            metrics: evaluate(&batch.values, &actual).map_err(|e| domain(&e))?,
            randomness: randomness_rate(&batch.values).map_err(|e| domain(&e))?,
            entropy: shannon_entropy(&batch.values).map_err(|e| domain(&e))?,
        });
        timings.push(ModelTiming {
            kind,
            train_time_s: model.train_time_s,
            predict_time_s: batch.predict_time_s,
        });
        preds.insert(kind, batch.values);
        models.insert(kind, model);
    }
    Ok(SplitResults {
        results,
        timings,
        predictions: preds,
        models,
    })
}

pub fn run_benchmark(ds: &Dataset, seed: u64, test_fraction: f64) -> Result<BenchmarkOutcome, CliError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CliError::usage(format!(
            "--test-fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    if ds.len() < MIN_BENCHMARK_ROWS {
        return Err(CliError::domain(format!(
            "dataset too small: {} rows, need at least {MIN_BENCHMARK_ROWS}",
            ds.len()
        )));
    }
    let (train, test) = shuffle_split(ds, test_fraction, seed).map_err(|e| CliError::domain(e.to_string()))?;
    let split = benchmark_split(&train, &test, seed)?;
    let report = ExperimentReport {
        config: BenchmarkConfig {
            data_sha256: digest(ds),
            n_rows: ds.len(),
            n_train: train.len(),
            n_test: test.len(),
            seed,
            test_fraction,
            models: ModelKind::ALL.iter().map(|&k| RegressorSpec::default_for(k, seed)).collect(),
        },
        models: split.results,
        timings: split.timings,
    };
    Ok(BenchmarkOutcome {
        report,
        predictions: split.predictions,
        models: split.models,
        test,
    })
}

pub fn cmd_benchmark(data: &Path, seed: u64, test_fraction: f64, out: Option<&Path>) -> Result<ExperimentReport, CliError> {
    let ds = Dataset::load_csv(data).map_err(|e| CliError::domain(e.to_string()))?;
    let outcome = run_benchmark(&ds, seed, test_fraction)?;
    if let Some(path) = out {
        std::fs::write(path, outcome.report.to_json())
            .map_err(|e| CliError::domain(format!("writing {}: {e}", path.display())))?;
    }
    Ok(outcome.report)
}

pub fn load_sim_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    SimConfig::from_json(&text).map_err(|e| CliError::usage(format!("invalid config: {e}")))
}

/// Runs a simulation and writes its artifacts. Fails with code 1, after
/// writing, when any final ledger is invalid or the ledgers differ.
pub fn cmd_simulate(config: &Path, out_dir: &Path, max_rounds: Option<u64>) -> Result<SimOutput, CliError> {
    let mut cfg = load_sim_config(config)?;
    if let Some(r) = max_rounds {
        cfg.max_rounds = r;
    }
    let out = Simulation::new(cfg)
        .and_then(|s| s.run())
        .map_err(|e| CliError::domain(e.to_string()))?;
    out.write_to_dir(out_dir)
        .map_err(|e| CliError::domain(format!("writing {}: {e}", out_dir.display())))?;
    if !out.report.all_valid {
        return Err(CliError::domain("simulation ended with an invalid ledger"));
    }
    if !out.report.converged {
        return Err(CliError::domain("simulation ended with divergent ledgers"));
    }
    Ok(out)
}

pub fn default_keys_path(ledger: &Path) -> PathBuf {
    ledger.with_file_name("public_keys.json")
}

/// Verifies a JSON Lines ledger; returns the block count.
pub fn cmd_verify(ledger: &Path, keys: Option<&Path>) -> Result<usize, CliError> {
    let keys_path = keys.map_or_else(|| default_keys_path(ledger), Path::to_path_buf);
    let keys_text = std::fs::read_to_string(&keys_path)
        .map_err(|e| CliError::usage(format!("public keys {}: {e}", keys_path.display())))?;
    let registry = KeyRegistry::from_json(&keys_text)
        .map_err(|e| CliError::usage(format!("public keys {}: {e}", keys_path.display())))?;
    let bytes = std::fs::read(ledger).map_err(|e| CliError::domain(format!("{}: {e}", ledger.display())))?;
    audit_jsonl(&bytes, &registry).map_err(|f| match f {
        AuditFailure::Parse(ref e) => CliError::domain(format!("violation at index {}: parse error on line {}: {}", f.index(), e.line, e.message)),
        AuditFailure::Chain(c) => CliError::domain(c.to_string()),
    })
}
