//! Multi-run experiments: configuration, single seeded runs, aggregate
//! reports and their on-disk form.
//!
//! Run `i` of an experiment uses seed `base_seed + i` for everything that is
//! random (encoding subsample, component initialization, training, tie-breaks),
//! so re-running a config reproduces every per-run metric exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{l0_error, l1_error};
use crate::baseline::{dawid_skene, majority_vote};
use crate::data::{encode_votes, load_dataset, write_labels, EncodingScheme, LabelDataset, VoteEncoding};
use crate::error::{Error, Result};
use crate::krbm::{decode_assignment, krbm_fit, Architecture, TraceRow};
use crate::mixture::kmeans;
use crate::rbm::{CdMethod, HiddenKind, TrainConfig, VisibleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Majority,
    #[serde(alias = "ds")]
    DawidSkene,
    Krbm,
    #[serde(alias = "kmeans")]
    KmeansBaseline,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Majority => "majority",
            Method::DawidSkene => "dawid_skene",
            Method::Krbm => "krbm",
            Method::KmeansBaseline => "kmeans_baseline",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(Method::Majority),
            "dawid_skene" | "ds" => Ok(Method::DawidSkene),
            "krbm" => Ok(Method::Krbm),
            "kmeans_baseline" | "kmeans" => Ok(Method::KmeansBaseline),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// Everything needed to reproduce an experiment. Config files are flat TOML
/// tables using these field names; unset fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub gold: Option<PathBuf>,
    pub num_classes: usize,
    pub ordinal: bool,
    pub method: Method,

    pub encoding: EncodingScheme,
    /// Worker slots per item.
    pub slots: usize,
    /// Standardize real-valued encodings per dimension before training.
    pub standardize: bool,
    /// Declared visible size; checked against the encoding when set.
    pub visible: Option<usize>,
    pub hidden: usize,
    /// Defaults to binary for the binary encodings and gaussian otherwise.
    pub visible_kind: Option<VisibleKind>,
    pub hidden_kind: HiddenKind,
    pub sigma: f64,
    /// Number of clusters; defaults to `num_classes`.
    pub clusters: Option<usize>,

    pub train_method: CdMethod,
    pub cd_k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub outer_iters: usize,

    pub ds_max_iters: usize,
    pub ds_tol: f64,
    pub kmeans_restarts: usize,

    pub runs: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            data: PathBuf::new(),
            gold: None,
            num_classes: 0,
            ordinal: false,
            method: Method::Krbm,
            encoding: EncodingScheme::OneHot,
            slots: 6,
            standardize: true,
            visible: None,
            hidden: 5,
            visible_kind: None,
            hidden_kind: HiddenKind::Binary,
            sigma: 1.0,
            clusters: None,
            train_method: train.method,
            cd_k: train.k,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            epochs: train.epochs,
            momentum: train.momentum,
            weight_decay: train.weight_decay,
            outer_iters: 20,
            ds_max_iters: 100,
            ds_tol: 1e-6,
            kmeans_restarts: 10,
            runs: 20,
            base_seed: 0,
            output_dir: PathBuf::from("results"),
        }
    }
}

/// Parses a `key=value` override. The value is read as a TOML value when
/// possible and as a bare string otherwise.
fn parse_override(spec: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

/// Parses flat TOML text and applies `key=value` overrides on top.
pub fn merge_overrides(text: &str, overrides: &[String]) -> Result<toml::Table> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for spec in overrides {
        let (key, value) = parse_override(spec)?;
        table.insert(key, value);
    }
    Ok(table)
}

impl ExperimentConfig {
    /// Reads a flat TOML config and applies `key=value` overrides on top.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let table = merge_overrides(text, overrides)?;
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn clusters(&self) -> usize {
        self.clusters.unwrap_or(self.num_classes)
    }

    pub fn visible_kind(&self) -> VisibleKind {
        self.visible_kind.unwrap_or(if self.encoding.is_binary() {
            VisibleKind::Binary
        } else {
            VisibleKind::Gaussian
        })
    }

    pub fn visible_dim(&self) -> usize {
        self.encoding.dim(self.slots, self.num_classes)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            hidden: self.hidden,
            visible_kind: self.visible_kind(),
            hidden_kind: self.hidden_kind,
            sigma: self.sigma,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            method: self.train_method,
            k: self.cd_k,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be set".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.slots == 0 {
            return Err(Error::Config("slots must be at least 1".into()));
        }
        if let Some(l) = self.visible {
            let expected = self.visible_dim();
            if l != expected {
                return Err(Error::Config(format!(
                    "visible = {l} does not match {} encoding with {} slots and {} classes ({expected})",
                    self.encoding, self.slots, self.num_classes
                )));
            }
        }
        if matches!(self.method, Method::Krbm | Method::KmeansBaseline) && self.clusters() == 0 {
            return Err(Error::Config("clusters must be positive".into()));
        }
        if self.method == Method::Krbm {
            self.train_config(0).validate()?;
            if self.hidden == 0 || self.outer_iters == 0 {
                return Err(Error::Config("hidden and outer_iters must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<LabelDataset> {
        Ok(load_dataset(&self.data, self.num_classes, self.gold.as_deref())?.with_ordinal(self.ordinal))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    pub predictions: BTreeMap<String, usize>,
    pub l0: Option<f64>,
    pub l1: Option<f64>,
    /// Mean per-item reconstruction error under the final K-RBM parameters.
    pub final_recon_error: Option<f64>,
    pub epsilon_history: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub wall_clock_ms: f64,
}

fn encode_for(cfg: &ExperimentConfig, ds: &LabelDataset, seed: u64) -> Result<VoteEncoding> {
    let enc = encode_votes(ds, cfg.encoding, cfg.slots, seed)?;
    Ok(if cfg.encoding == EncodingScheme::RealValued && cfg.standardize {
        enc.standardized()
    } else {
        enc
    })
}

/// One seeded run of the configured method on `ds`.
pub fn run_once(cfg: &ExperimentConfig, ds: &LabelDataset, run: usize, seed: u64) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut epsilon_history = Vec::new();
    let mut trace = Vec::new();
    let mut final_recon_error = None;
    let predictions = match cfg.method {
        Method::Majority => majority_vote(ds, seed)?,
        Method::DawidSkene => dawid_skene(ds, cfg.ds_max_iters, cfg.ds_tol)?.model.labels(),
        Method::Krbm => {
            let enc = encode_for(cfg, ds, seed)?;
            let state = krbm_fit(
                &enc,
                cfg.clusters(),
                &cfg.architecture(),
                &cfg.train_config(seed),
                cfg.outer_iters,
                seed,
            )?;
            final_recon_error = state.epsilon_history.last().map(|e| e / enc.len() as f64);
            epsilon_history = state.epsilon_history.clone();
            trace = state.trace.clone();
            decode_assignment(&state.items, &state.assignment, ds, seed)?.0
        }
        Method::KmeansBaseline => {
            let enc = encode_for(cfg, ds, seed)?;
            let km = kmeans(enc.vectors().view(), cfg.clusters(), cfg.kmeans_restarts, seed)?;
            decode_assignment(enc.items(), &km.assignment, ds, seed)?.0
        }
    };
    let (l0, l1) = match ds.gold() {
        Some(gold) => (
            Some(l0_error(&predictions, gold)?),
            if ds.is_ordinal() {
                Some(l1_error(&predictions, gold, true)?)
            } else {
                None
            },
        ),
        None => (None, None),
    };
    Ok(RunOutcome {
        run,
        seed,
        predictions,
        l0,
        l1,
        final_recon_error,
        epsilon_history,
        trace,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub l0: Option<f64>,
    pub l1: Option<f64>,
    pub final_recon_error: Option<f64>,
    pub wall_clock_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTraceRow {
    pub run: usize,
    pub iteration: usize,
    pub component: usize,
    pub mean_recon_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator; 0 for a single value).
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            std,
            count: values.len(),
        })
    }
}

/// Values the config leaves to defaults, as actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSettings {
    pub visible: usize,
    pub visible_kind: VisibleKind,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub resolved: ResolvedSettings,
    pub runs: Vec<RunRecord>,
    pub l0: Option<Summary>,
    pub l1: Option<Summary>,
    pub final_recon_error: Option<Summary>,
    /// Some run failed; the summaries cover the successful runs only.
    pub partial: bool,
    #[serde(skip)]
    pub traces: Vec<RunTraceRow>,
    #[serde(skip)]
    pub epsilon: Vec<(usize, usize, f64)>,
}

impl RunReport {
    fn assemble(config: ExperimentConfig, results: Vec<(usize, u64, Result<RunOutcome>)>) -> Self {
        let mut runs = Vec::with_capacity(results.len());
        let mut traces = Vec::new();
        let mut epsilon = Vec::new();
        for (run, seed, res) in results {
            match res {
                Ok(out) => {
                    traces.extend(out.trace.iter().map(|t| RunTraceRow {
                        run,
                        iteration: t.iteration,
                        component: t.component,
                        mean_recon_error: t.mean_recon_error,
                    }));
                    epsilon.extend(out.epsilon_history.iter().enumerate().map(|(t, &e)| (run, t, e)));
                    runs.push(RunRecord {
                        run,
                        seed,
                        l0: out.l0,
                        l1: out.l1,
                        final_recon_error: out.final_recon_error,
                        wall_clock_ms: out.wall_clock_ms,
                        error: None,
                    });
                }
                Err(e) => runs.push(RunRecord {
                    run,
                    seed,
                    l0: None,
                    l1: None,
                    final_recon_error: None,
                    wall_clock_ms: 0.0,
                    error: Some(e.to_string()),
                }),
            }
        }
        let resolved = ResolvedSettings {
            visible: config.visible_dim(),
            visible_kind: config.visible_kind(),
            clusters: config.clusters(),
        };
        let mut report = Self {
            config,
            resolved,
            runs,
            l0: None,
            l1: None,
            final_recon_error: None,
            partial: false,
            traces,
            epsilon,
        };
        report.recompute_summaries();
        report
    }

    /// Recomputes the summaries and the partial flag from the per-run records.
    pub fn recompute_summaries(&mut self) {
        let collect = |f: fn(&RunRecord) -> Option<f64>| -> Vec<f64> { self.runs.iter().filter_map(f).collect() };
        self.l0 = Summary::of(&collect(|r| r.l0));
        self.l1 = Summary::of(&collect(|r| r.l1));
        self.final_recon_error = Summary::of(&collect(|r| r.final_recon_error));
        self.partial = self.runs.iter().any(|r| r.error.is_some());
    }

    pub fn l0_values(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.l0).collect()
    }

    /// Writes `report.json`, `runs.csv`, `traces.csv` and `epsilon.csv` into a
    /// fresh timestamped directory under `config.output_dir`; returns its path.
    pub fn write(&self) -> Result<PathBuf> {
        let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
        let base = self.config.output_dir.join(format!("{}-{stamp}", self.config.method));
        let mut dir = base.clone();
        let mut n = 1;
        while dir.exists() {
            dir = PathBuf::from(format!("{}-{n}", base.display()));
            n += 1;
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        self.write_into(&dir)?;
        Ok(dir)
    }

    pub fn write_into(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        let path = dir.join("report.json");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

        let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
        w.write_record(["run", "seed", "l0", "l1", "final_recon_error", "wall_clock_ms", "error"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.runs {
            w.write_record([
                r.run.to_string(),
                r.seed.to_string(),
                opt(r.l0),
                opt(r.l1),
                opt(r.final_recon_error),
                r.wall_clock_ms.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;

        let mut w = csv::Writer::from_path(dir.join("traces.csv"))?;
        w.write_record(["run", "iteration", "component", "mean_recon_error"])?;
        for t in &self.traces {
            w.write_record([
                t.run.to_string(),
                t.iteration.to_string(),
                t.component.to_string(),
                t.mean_recon_error.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;

        let mut w = csv::Writer::from_path(dir.join("epsilon.csv"))?;
        w.write_record(["run", "iteration", "epsilon"])?;
        for (run, t, e) in &self.epsilon {
            w.write_record([run.to_string(), t.to_string(), e.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))
    }

    pub fn read_runs_csv(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let parse = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::invalid(format!("bad number `{s}`")))
            }
        };
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            out.push(RunRecord {
                run: field(0).parse().map_err(|_| Error::invalid("bad run index"))?,
                seed: field(1).parse().map_err(|_| Error::invalid("bad seed"))?,
                l0: parse(field(2))?,
                l1: parse(field(3))?,
                final_recon_error: parse(field(4))?,
                wall_clock_ms: parse(field(5))?.unwrap_or(0.0),
                error: Some(field(6).to_string()).filter(|s| !s.is_empty()),
            });
        }
        Ok(out)
    }
}

/// Runs every seeded run of `cfg` on an already loaded dataset. Runs execute
/// in parallel; a failing run is recorded with its error.
pub fn run_experiment_on(cfg: &ExperimentConfig, ds: &LabelDataset) -> Result<RunReport> {
    cfg.validate()?;
    let results: Vec<(usize, u64, Result<RunOutcome>)> = (0..cfg.runs)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.base_seed.wrapping_add(i as u64);
            (i, seed, run_once(cfg, ds, i, seed))
        })
        .collect();
    Ok(RunReport::assemble(cfg.clone(), results))
}

/// Loads the configured dataset, runs the experiment and writes the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(RunReport, PathBuf)> {
    let ds = cfg.load_dataset()?;
    let report = run_experiment_on(cfg, &ds)?;
    let dir = report.write()?;
    Ok((report, dir))
}

/// Writes an `item,label` predictions file.
pub fn write_predictions(pred: &BTreeMap<String, usize>, path: impl AsRef<Path>) -> Result<()> {
    write_labels(pred, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_file_values() {
        let cfg = ExperimentConfig::from_toml_str(
            "data = \"x.csv\"\nnum_classes = 5\nmethod = \"majority\"\nruns = 3\n",
            &["runs=7".into(), "method=dawid_skene".into(), "learning_rate = 0.01".into()],
        )
        .unwrap();
        assert_eq!(cfg.runs, 7);
        assert_eq!(cfg.method, Method::DawidSkene);
        assert_eq!(cfg.learning_rate, 0.01);
        assert_eq!(cfg.data, PathBuf::from("x.csv"));
    }

    #[test]
    fn declared_visible_size_must_match_encoding() {
        let ok = "num_classes = 5\nslots = 6\nencoding = \"one_hot\"\nvisible = 30\n";
        assert!(ExperimentConfig::from_toml_str(ok, &[]).is_ok());
        let bad = "num_classes = 5\nslots = 6\nencoding = \"compact_binary\"\nvisible = 30\n";
        assert!(ExperimentConfig::from_toml_str(bad, &[]).is_err());
        let binary = "num_classes = 5\nslots = 6\nencoding = \"compact_binary\"\nvisible = 18\n";
        assert!(ExperimentConfig::from_toml_str(binary, &[]).is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("num_classes = 2\nbogus = 1\n", &[]).is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig {
            num_classes: 4,
            gold: Some("g.csv".into()),
            clusters: Some(3),
            ..ExperimentConfig::default()
        };
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn summary_uses_sample_std() {
        let s = Summary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Summary::of(&[4.0]).unwrap().std, 0.0);
        assert!(Summary::of(&[]).is_none());
    }
}
