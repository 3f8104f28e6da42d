//! Run configuration: parsing, default resolution and validation.

use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dynamics::{
    Method, PrecondPolicy, RunSettings, StepMethod, StepperSpec, DEFAULT_CURVATURE_FLOOR,
    DEFAULT_DAMPING,
};
use crate::error::{Error, Result};
use crate::kernels::Bandwidth;
use crate::psdlin::SymMatrix;
use crate::targets::{
    BananaParams, CurvatureMode, Gaussian, LogisticDataset, LogisticPosterior, SineParams,
    StarParams, TargetModel,
};

/// Checkpoints used when a config gives none, clipped to the iteration budget.
pub const DEFAULT_CHECKPOINTS: [usize; 6] = [0, 5, 10, 30, 100, 500];
pub const DEFAULT_REFERENCE_SIZE: usize = 2000;
pub const DEFAULT_REFERENCE_SEED: u64 = 999;
pub const DEFAULT_MINIBATCH: usize = 50;

/// Step rate used when the config leaves it out, tuned per method on the star target
/// over the grid {1e-3, 5e-3, 1e-2, 5e-2, 0.1, 0.5, 1}.
pub fn default_rate(method: Method) -> f64 {
    match method {
        Method::VanillaSvgd => 0.05,
        Method::MatrixSvgdAverage => 0.5,
        Method::MatrixSvgdMixture => 1.0,
        Method::Svn => 0.1,
    }
}

/// A target by kind and parameters. In config files a bare string such as
/// `"star"` selects the kind with default parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<SymMatrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        precision: Option<SymMatrix>,
    },
    Star(StarParams),
    Sine(SineParams),
    DoubleBanana(BananaParams),
    Logistic {
        data: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        minibatch: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_data: Option<PathBuf>,
    },
}

fn default_delimiter() -> char {
    ','
}

impl TargetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TargetSpec::Gaussian { .. } => "gaussian",
            TargetSpec::Star(_) => "star",
            TargetSpec::Sine(_) => "sine",
            TargetSpec::DoubleBanana(_) => "double_banana",
            TargetSpec::Logistic { .. } => "logistic",
        }
    }

    /// Parses a bare kind name with default parameters. `gaussian` is the
    /// standard normal in two dimensions; `logistic` needs a data file and
    /// has no shorthand.
    pub fn from_name(name: &str) -> Result<Self> {
        from_value(serde_json::Value::String(name.to_owned()))
            .map_err(|e| Error::validation("target", e))
    }

    /// Parses a JSON target object, or falls back to a bare kind name.
    pub fn parse(text: &str) -> Result<Self> {
        match serde_json::from_str::<serde_json::Value>(text) {
            Ok(value) => from_value(value).map_err(|e| Error::validation("target", e)),
            Err(_) => Self::from_name(text.trim()),
        }
    }

    fn delimiter_byte(delimiter: char) -> Result<u8> {
        u8::try_from(delimiter)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| {
                Error::validation(
                    "target.delimiter",
                    format!("`{delimiter}` is not an ASCII character"),
                )
            })
    }

    /// Builds the model. Also returns the held-out dataset for logistic targets.
    pub fn build(&self) -> Result<(TargetModel, Option<LogisticDataset>)> {
        let invalid = |e: Error| match e {
            Error::InvalidInput(m) | Error::Domain(m) => Error::validation("target", m),
            other => other,
        };
        let model = match self {
            TargetSpec::Gaussian {
                mean,
                covariance,
                precision,
            } => {
                let g = match (covariance, precision) {
                    (Some(_), Some(_)) => {
                        return Err(Error::validation(
                            "target",
                            "give either covariance or precision, not both",
                        ))
                    }
                    (Some(c), None) => Gaussian::with_covariance(mean.clone(), c),
                    (None, Some(p)) => Gaussian::with_precision(mean.clone(), p),
                    (None, None) => Gaussian::with_precision(
                        mean.clone(),
                        &SymMatrix::identity(mean.len().max(1)),
                    ),
                };
                TargetModel::Gaussian(g.map_err(invalid)?)
            }
            TargetSpec::Star(p) => TargetModel::star(p.clone()).map_err(invalid)?,
            TargetSpec::Sine(p) => TargetModel::sine(*p).map_err(invalid)?,
            TargetSpec::DoubleBanana(p) => TargetModel::double_banana(*p).map_err(invalid)?,
            TargetSpec::Logistic {
                data,
                delimiter,
                minibatch,
                test_data,
            } => {
                let delim = Self::delimiter_byte(*delimiter)?;
                let probe = LogisticDataset::load(data, delim, 1)?;
                let batch = minibatch.unwrap_or(DEFAULT_MINIBATCH.min(probe.len()));
                if batch == 0 || batch > probe.len() {
                    return Err(Error::validation(
                        "target.minibatch",
                        format!("must lie in 1..={}, got {batch}", probe.len()),
                    ));
                }
                let train =
                    LogisticDataset::new(probe.features().clone(), probe.labels().to_vec(), batch)?;
                let test = match test_data {
                    Some(path) => {
                        let t = LogisticDataset::load(path, delim, 1)?;
                        if t.dim() != train.dim() {
                            return Err(Error::validation(
                                "target.test_data",
                                format!(
                                    "has {} features, training data has {}",
                                    t.dim(),
                                    train.dim()
                                ),
                            ));
                        }
                        Some(t)
                    }
                    None => None,
                };
                return Ok((TargetModel::Logistic(LogisticPosterior::new(train)), test));
            }
        };
        Ok((model, None))
    }

    /// Fills defaults that depend on the data.
    fn resolve(&mut self, model: &TargetModel) {
        if let (TargetSpec::Logistic { minibatch, .. }, TargetModel::Logistic(l)) = (self, model) {
            *minibatch = Some(l.data().minibatch_size());
        }
    }

    fn rebase(&mut self, base: &Path) {
        if let TargetSpec::Logistic {
            data, test_data, ..
        } = self
        {
            for p in std::iter::once(data).chain(test_data.as_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

fn from_value(value: serde_json::Value) -> std::result::Result<TargetSpec, String> {
    let value = match value {
        serde_json::Value::String(kind) => serde_json::json!({ "kind": kind }),
        other => other,
    };
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.into_inner().to_string()
        } else {
            format!("{path}: {}", e.into_inner())
        }
    })
}

/// Accepts a bare kind name or a tagged object.
struct TargetInput(TargetSpec);

impl<'de> Deserialize<'de> for TargetInput {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        from_value(value).map(TargetInput).map_err(D::Error::custom)
    }
}

/// `"median"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthSpec {
    Median,
    Fixed(f64),
}

impl BandwidthSpec {
    pub fn to_bandwidth(self) -> Bandwidth {
        match self {
            BandwidthSpec::Median => Bandwidth::Median,
            BandwidthSpec::Fixed(h) => Bandwidth::Fixed(h),
        }
    }
}

impl Serialize for BandwidthSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BandwidthSpec::Median => serializer.serialize_str("median"),
            BandwidthSpec::Fixed(h) => serializer.serialize_f64(*h),
        }
    }
}

impl<'de> Deserialize<'de> for BandwidthSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(deserializer)? {
            serde_json::Value::String(s) if s == "median" => Ok(BandwidthSpec::Median),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(BandwidthSpec::Fixed)
                .ok_or_else(|| D::Error::custom("bandwidth is not representable as f64")),
            other => Err(D::Error::custom(format!(
                "expected \"median\" or a positive number, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepperConfig {
    pub method: StepMethod,
    pub rate: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrecondConfig {
    pub curvature: CurvatureMode,
    pub refresh_period: usize,
    pub floor_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitConfig {
    pub mean: Vec<f64>,
    pub scale: f64,
}

/// How snapshots are scored. Targets with a reference sampler get squared
/// MMD against `reference_size` draws; `mmd_bandwidth = 0` picks the median
/// trick on the reference. Logistic targets get predictive metrics on the
/// test data, or on the training data when none is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvaluationConfig {
    pub reference_size: usize,
    pub reference_seed: u64,
    pub mmd_bandwidth: f64,
}

/// A fully resolved run configuration. Serializing it gives a document that
/// [`parse_config`] maps back to the same value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub target: TargetSpec,
    pub method: Method,
    pub n: usize,
    pub iters: usize,
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    pub stepper: StepperConfig,
    pub precond: PrecondConfig,
    pub bandwidth: BandwidthSpec,
    pub init: InitConfig,
    pub evaluation: EvaluationConfig,
    pub output_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStepper {
    method: Option<StepMethod>,
    rate: Option<f64>,
    damping: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrecond {
    curvature: Option<CurvatureMode>,
    refresh_period: Option<usize>,
    floor_ratio: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    mean: Option<Vec<f64>>,
    scale: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvaluation {
    reference_size: Option<usize>,
    reference_seed: Option<u64>,
    mmd_bandwidth: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    target: TargetInput,
    method: String,
    n: usize,
    iters: usize,
    seed: u64,
    checkpoints: Option<Vec<usize>>,
    stepper: Option<RawStepper>,
    precond: Option<RawPrecond>,
    bandwidth: Option<BandwidthSpec>,
    init: Option<RawInit>,
    evaluation: Option<RawEvaluation>,
    output_dir: Option<PathBuf>,
}

fn syntax_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    let message = e.into_inner().to_string();
    let prefix = if path == "." {
        String::new()
    } else {
        format!("{path}.")
    };
    let quoted = |m: &str, lead: &str| {
        m.strip_prefix(lead)
            .and_then(|rest| rest.split('`').next())
            .map(|field| format!("{prefix}{field}"))
    };
    // Unknown fields are already part of the path; missing ones are not.
    let key = quoted(&message, "missing field `")
        .or_else(|| {
            (path == ".")
                .then(|| quoted(&message, "unknown field `"))
                .flatten()
        })
        .unwrap_or_else(|| if path == "." { "<root>".into() } else { path });
    Error::validation(key, message)
}

fn ensure(ok: bool, key: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::validation(key, message()))
    }
}

/// Parses and validates a JSON config, filling every default.
///
/// Relative data paths are resolved against the working directory.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    resolve(parse_raw(text)?)
}

/// Values that replace the config's own before defaults are resolved.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

/// Reads a config file. Relative data paths are taken relative to the file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_with(path, &ConfigOverrides::default())
}

pub fn load_config_with(path: &Path, overrides: &ConfigOverrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = parse_raw(&text)?;
    if let Some(dir) = path.parent() {
        raw.target.0.rebase(dir);
    }
    if let Some(seed) = overrides.seed {
        raw.seed = seed;
    }
    if let Some(dir) = &overrides.output_dir {
        raw.output_dir = Some(dir.clone());
    }
    resolve(raw)
}

fn parse_raw(text: &str) -> Result<RawConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(&mut de).map_err(syntax_error)?;
    de.end()
        .map_err(|e| Error::validation("<root>", e.to_string()))?;
    Ok(raw)
}

fn resolve(raw: RawConfig) -> Result<RunConfig> {
    let method = Method::from_name(&raw.method).ok_or_else(|| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        Error::validation(
            "method",
            format!(
                "unknown method `{}`; supported methods: {}",
                raw.method,
                names.join(", ")
            ),
        )
    })?;
    let mut target = raw.target.0;
    let (model, _) = target.build()?;
    target.resolve(&model);
    let dim = model.dim();

    ensure(raw.n >= 1, "n", || {
        "particle count must be at least 1".into()
    })?;

    let checkpoints = match raw.checkpoints {
        Some(c) => {
            ensure(!c.is_empty(), "checkpoints", || {
                "schedule must not be empty".into()
            })?;
            ensure(c.windows(2).all(|w| w[0] < w[1]), "checkpoints", || {
                "schedule must be strictly increasing".into()
            })?;
            let last = *c.last().expect("non-empty");
            ensure(last <= raw.iters, "checkpoints", || {
                format!(
                    "checkpoint {last} exceeds the iteration budget {}",
                    raw.iters
                )
            })?;
            c
        }
        None => {
            let mut c: Vec<usize> = DEFAULT_CHECKPOINTS
                .into_iter()
                .filter(|&c| c <= raw.iters)
                .collect();
            if c.last() != Some(&raw.iters) {
                c.push(raw.iters);
            }
            c
        }
    };

    let stepper = {
        let s = raw.stepper.unwrap_or(RawStepper {
            method: None,
            rate: None,
            damping: None,
        });
        StepperConfig {
            method: s.method.unwrap_or(StepMethod::Adagrad),
            rate: s.rate.unwrap_or_else(|| default_rate(method)),
            damping: s.damping.unwrap_or(DEFAULT_DAMPING),
        }
    };
    ensure(
        stepper.rate > 0.0 && stepper.rate.is_finite(),
        "stepper.rate",
        || format!("must be positive and finite, got {}", stepper.rate),
    )?;
    ensure(
        stepper.damping > 0.0 && stepper.damping.is_finite(),
        "stepper.damping",
        || format!("must be positive and finite, got {}", stepper.damping),
    )?;

    let precond = {
        let p = raw.precond.unwrap_or(RawPrecond {
            curvature: None,
            refresh_period: None,
            floor_ratio: None,
        });
        PrecondConfig {
            curvature: p.curvature.unwrap_or_else(|| model.default_curvature()),
            refresh_period: p.refresh_period.unwrap_or(1),
            floor_ratio: p.floor_ratio.unwrap_or(DEFAULT_CURVATURE_FLOOR),
        }
    };
    ensure(
        model.supports_curvature(precond.curvature),
        "precond.curvature",
        || {
            format!(
                "{:?} is not available for the {} target",
                precond.curvature,
                target.name()
            )
        },
    )?;
    ensure(
        precond.refresh_period >= 1,
        "precond.refresh_period",
        || "must be at least 1".into(),
    )?;
    ensure(
        precond.floor_ratio > 0.0 && precond.floor_ratio < 1.0,
        "precond.floor_ratio",
        || format!("must lie in (0, 1), got {}", precond.floor_ratio),
    )?;

    let bandwidth = raw.bandwidth.unwrap_or(BandwidthSpec::Median);
    if let BandwidthSpec::Fixed(h) = bandwidth {
        ensure(h > 0.0 && h.is_finite(), "bandwidth", || {
            format!("must be positive, got {h}")
        })?;
    }

    let init = {
        let i = raw.init.unwrap_or(RawInit {
            mean: None,
            scale: None,
        });
        InitConfig {
            mean: i.mean.unwrap_or_else(|| vec![0.0; dim]),
            scale: i.scale.unwrap_or(1.0),
        }
    };
    ensure(init.mean.len() == dim, "init.mean", || {
        format!("has dimension {}, target has {dim}", init.mean.len())
    })?;
    ensure(init.mean.iter().all(|v| v.is_finite()), "init.mean", || {
        "must be finite".into()
    })?;
    ensure(
        init.scale >= 0.0 && init.scale.is_finite(),
        "init.scale",
        || format!("must be finite and ≥ 0, got {}", init.scale),
    )?;

    let evaluation = {
        let e = raw.evaluation.unwrap_or(RawEvaluation {
            reference_size: None,
            reference_seed: None,
            mmd_bandwidth: None,
        });
        EvaluationConfig {
            reference_size: e.reference_size.unwrap_or(DEFAULT_REFERENCE_SIZE),
            reference_seed: e.reference_seed.unwrap_or(DEFAULT_REFERENCE_SEED),
            mmd_bandwidth: e.mmd_bandwidth.unwrap_or(0.0),
        }
    };
    ensure(
        evaluation.reference_size >= 2,
        "evaluation.reference_size",
        || "must be at least 2".into(),
    )?;
    ensure(
        evaluation.mmd_bandwidth >= 0.0 && evaluation.mmd_bandwidth.is_finite(),
        "evaluation.mmd_bandwidth",
        || format!("must be finite and ≥ 0, got {}", evaluation.mmd_bandwidth),
    )?;

    let output_dir = raw.output_dir.unwrap_or_else(|| {
        PathBuf::from(format!(
            "runs/{}_{}_seed{}",
            target.name(),
            method.name(),
            raw.seed
        ))
    });

    Ok(RunConfig {
        target,
        method,
        n: raw.n,
        iters: raw.iters,
        seed: raw.seed,
        checkpoints,
        stepper,
        precond,
        bandwidth,
        init,
        evaluation,
        output_dir,
    })
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds the dynamics settings and, for logistic targets, the held-out data.
    pub fn settings(&self) -> Result<(RunSettings, Option<LogisticDataset>)> {
        let (model, test) = self.target.build()?;
        let settings = RunSettings {
            model,
            method: self.method,
            n: self.n,
            iterations: self.iters,
            checkpoints: self.checkpoints.clone(),
            stepper: StepperSpec {
                method: self.stepper.method,
                rate: self.stepper.rate,
                damping: self.stepper.damping,
            },
            precond: PrecondPolicy {
                curvature: Some(self.precond.curvature),
                refresh_period: self.precond.refresh_period,
                floor_ratio: self.precond.floor_ratio,
            },
            bandwidth: self.bandwidth.to_bandwidth(),
            init_mean: self.init.mean.clone(),
            init_scale: self.init.scale,
            seed: self.seed,
        };
        Ok((settings, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"target": "star", "method": "vanilla_svgd", "n": 50, "iters": 30, "seed": 1}"#;

    fn key_of(text: &str) -> String {
        match parse_config(text) {
            Err(Error::Validation { key, .. }) => key,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.target, TargetSpec::Star(StarParams::default()));
        assert_eq!(c.checkpoints, vec![0, 5, 10, 30]);
        assert_eq!(c.stepper.method, StepMethod::Adagrad);
        assert_eq!(c.stepper.rate, 0.05);
        assert_eq!(c.precond.curvature, CurvatureMode::ExactHessian);
        assert_eq!(c.bandwidth, BandwidthSpec::Median);
        assert_eq!(c.init.mean, vec![0.0, 0.0]);
        assert_eq!(c.output_dir, PathBuf::from("runs/star_vanilla_svgd_seed1"));
    }

    #[test]
    fn default_schedule_ends_at_budget() {
        let c =
            parse_config(r#"{"target": "sine", "method": "svn", "n": 5, "iters": 50, "seed": 0}"#)
                .unwrap();
        assert_eq!(c.checkpoints, vec![0, 5, 10, 30, 50]);
        let c =
            parse_config(r#"{"target": "sine", "method": "svn", "n": 5, "iters": 500, "seed": 0}"#)
                .unwrap();
        assert_eq!(c.checkpoints, DEFAULT_CHECKPOINTS.to_vec());
    }

    #[test]
    fn echo_round_trips() {
        let texts = [
            MINIMAL.to_string(),
            r#"{"target": {"kind": "gaussian", "mean": [1, 2], "covariance": [[2, 0.5], [0.5, 1]]},
                "method": "matrix_svgd_average", "n": 7, "iters": 12, "seed": 3,
                "checkpoints": [0, 12], "bandwidth": 0.7, "stepper": {"method": "fixed", "rate": 0.01},
                "precond": {"refresh_period": 3}, "init": {"scale": 0.5},
                "evaluation": {"reference_size": 100, "mmd_bandwidth": 1.5}, "output_dir": "x/y"}"#
                .to_string(),
            r#"{"target": {"kind": "double_banana", "sigma2": 0.5}, "method": "svn", "n": 3, "iters": 0, "seed": 9}"#
                .to_string(),
        ];
        for text in texts {
            let c = parse_config(&text).unwrap();
            let again = parse_config(&c.to_json()).unwrap();
            assert_eq!(c, again);
            assert_eq!(c.to_json(), again.to_json());
        }
    }

    #[test]
    fn validation_errors_name_keys() {
        assert_eq!(
            key_of(r#"{"target": "star", "method": "svn", "n": 0, "iters": 3, "seed": 1}"#),
            "n"
        );
        assert_eq!(
            key_of(r#"{"target": "star", "method": "svn", "iters": 3, "seed": 1}"#),
            "n"
        );
        assert_eq!(
            key_of(
                r#"{"target": "star", "method": "svn", "n": 2, "iters": 3, "seed": 1, "extra": 1}"#
            ),
            "extra"
        );
        assert_eq!(
            key_of(
                r#"{"target": "star", "method": "svn", "n": 2, "iters": 3, "seed": 1, "stepper": {"rate": -1}}"#
            ),
            "stepper.rate"
        );
        assert_eq!(
            key_of(
                r#"{"target": "star", "method": "svn", "n": 2, "iters": 3, "seed": 1, "stepper": {"lr": 1}}"#
            ),
            "stepper.lr"
        );
        assert_eq!(
            key_of(
                r#"{"target": "star", "method": "svn", "n": 2, "iters": 3, "seed": 1, "checkpoints": [0, 4]}"#
            ),
            "checkpoints"
        );
        assert_eq!(
            key_of(
                r#"{"target": "star", "method": "svn", "n": 2, "iters": 3, "seed": 1, "checkpoints": [2, 1]}"#
            ),
            "checkpoints"
        );
        assert_eq!(
            key_of(
                r#"{"target": "star", "method": "svn", "n": 2, "iters": 3, "seed": 1, "init": {"mean": [0]}}"#
            ),
            "init.mean"
        );
        assert_eq!(
            key_of(
                r#"{"target": "star", "method": "svn", "n": 2, "iters": 3, "seed": 1, "precond": {"curvature": "fisher"}}"#
            ),
            "precond.curvature"
        );
        assert_eq!(
            key_of(r#"{"target": "moon", "method": "svn", "n": 2, "iters": 3, "seed": 1}"#),
            "target"
        );
        assert_eq!(
            key_of(
                r#"{"target": {"kind": "sine", "sigma1": -1}, "method": "svn", "n": 2, "iters": 3, "seed": 1}"#
            ),
            "target"
        );
        assert_eq!(key_of(&format!("{MINIMAL} trailing")), "<root>");
    }

    #[test]
    fn unknown_method_lists_supported() {
        let err = parse_config(
            r#"{"target": "star", "method": "pSGLD", "n": 50, "iters": 30, "seed": 1}"#,
        )
        .unwrap_err();
        match err {
            Error::Validation { key, message } => {
                assert_eq!(key, "method");
                for m in Method::ALL {
                    assert!(message.contains(m.name()), "{message}");
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn target_text_forms() {
        assert_eq!(
            TargetSpec::parse("sine").unwrap(),
            TargetSpec::parse(r#"{"kind": "sine"}"#).unwrap()
        );
        assert_eq!(
            TargetSpec::parse(r#""star""#).unwrap(),
            TargetSpec::Star(StarParams::default())
        );
        let g = TargetSpec::parse(r#"{"kind": "gaussian", "mean": [1, 2, 3]}"#).unwrap();
        assert_eq!(g.build().unwrap().0.dim(), 3);
        assert!(TargetSpec::parse("{oops").is_err());
    }

    #[test]
    fn nested_target_errors_keep_inner_path() {
        let err = parse_config(
            r#"{"target": {"kind": "star", "components": 5, "colour": 1}, "method": "svn", "n": 2, "iters": 3, "seed": 1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn logistic_paths_and_minibatch() {
        let dir = tempfile::tempdir().unwrap();
        let rows: String = (0..30)
            .map(|i| format!("{},{},{}\n", i as f64 * 0.1 - 1.5, 1.0, i % 2))
            .collect();
        std::fs::write(dir.path().join("train.csv"), rows).unwrap();
        let cfg = dir.path().join("cfg.json");
        std::fs::write(
            &cfg,
            r#"{"target": {"kind": "logistic", "data": "train.csv"}, "method": "matrix_svgd_average", "n": 4, "iters": 2, "seed": 1}"#,
        )
        .unwrap();
        let c = load_config(&cfg).unwrap();
        match &c.target {
            TargetSpec::Logistic {
                data, minibatch, ..
            } => {
                assert_eq!(data, &dir.path().join("train.csv"));
                assert_eq!(*minibatch, Some(30));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(c.precond.curvature, CurvatureMode::Fisher);
        assert_eq!(parse_config(&c.to_json()).unwrap(), c);

        let missing = parse_config(
            r#"{"target": {"kind": "logistic", "data": "/nonexistent/x.csv"}, "method": "svn", "n": 2, "iters": 3, "seed": 1}"#,
        )
        .unwrap_err();
        assert!(matches!(missing, Error::Io { .. }), "{missing:?}");
        assert_eq!(
            key_of(r#"{"target": "logistic", "method": "svn", "n": 2, "iters": 3, "seed": 1}"#),
            "target.data"
        );
    }
}
