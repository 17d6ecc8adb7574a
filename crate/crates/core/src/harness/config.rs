use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleSpec, Family, NoiseFamily, SignalSpec};
use crate::error::{Error, Result};
use crate::roti_gcv::{log_grid, SnrRegression};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    RotiGcv,
    ArotiGcv,
    Gcv,
    Loocv,
    KFold(usize),
}

impl Method {
    /// Whether the metric estimates prediction error including the noise floor,
    /// so that `metric − σ̂²` is what compares with the exact risk.
    pub fn includes_noise(&self) -> bool {
        matches!(self, Method::Gcv | Method::Loocv | Method::KFold(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::RotiGcv => f.write_str("roti_gcv"),
            Method::ArotiGcv => f.write_str("aroti_gcv"),
            Method::Gcv => f.write_str("gcv"),
            Method::Loocv => f.write_str("loocv"),
            Method::KFold(k) => write!(f, "kfold({k})"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "roti_gcv" => Ok(Method::RotiGcv),
            "aroti_gcv" => Ok(Method::ArotiGcv),
            "gcv" => Ok(Method::Gcv),
            "loocv" => Ok(Method::Loocv),
            other => other
                .strip_prefix("kfold(")
                .and_then(|rest| rest.strip_suffix(')'))
                .and_then(|k| k.trim().parse().ok())
                .map(Method::KFold)
                .ok_or_else(|| Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Either explicit penalties or `points` log-spaced values in `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaGrid {
    Values { values: Vec<f64> },
    Log { min: f64, max: f64, points: usize },
}

impl LambdaGrid {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let grid = match self {
            LambdaGrid::Values { values } => values.clone(),
            LambdaGrid::Log { min, max, points } => log_grid(*min, *max, *points)?,
        };
        if grid.is_empty() {
            return Err(Error::Config("lambda grid is empty".into()));
        }
        if grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Config("lambda grid values must be finite and > 0".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("lambda grid must be strictly ascending".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    /// Fresh test rows independent of the training design.
    #[default]
    Independent,
    /// Test right singular vectors at `coupled_indices` equal the training ones.
    Coupled,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    #[serde(default)]
    pub mode: TestMode,
    #[serde(default)]
    pub coupled_indices: Vec<usize>,
    /// Defaults to the training ensemble.
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeSource {
    /// Eigenvalues of a separate test draw.
    #[default]
    Test,
    /// Eigenvalues of the training design itself.
    Train,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArotiSettings {
    /// Defaults to the signal's aligned indices.
    #[serde(default)]
    pub aligned_indices: Option<Vec<usize>>,
    /// Defaults to the test spec's coupled indices.
    #[serde(default)]
    pub coupled_indices: Option<Vec<usize>>,
    #[serde(default)]
    pub spike_source: SpikeSource,
}

fn one() -> usize {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub sigma2: f64,
    pub methods: Vec<Method>,
    #[serde(default = "one")]
    pub n_noise_resamples: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub regression: SnrRegression,
    pub ensemble: EnsembleSpec,
    pub signal: SignalSpec,
    #[serde(default)]
    pub noise: NoiseFamily,
    pub lambda_sweep: LambdaGrid,
    /// Defaults to the spectrum-adapted grid.
    #[serde(default)]
    pub estimation_grid: Option<LambdaGrid>,
    #[serde(default)]
    pub test: TestSpec,
    #[serde(default)]
    pub aroti: ArotiSettings,
}

fn scale_dim(d: usize, factor: f64) -> usize {
    ((d as f64 * factor).round() as usize).max(1)
}

fn scale_ensemble(ens: &mut EnsembleSpec, factor: f64) {
    ens.n = scale_dim(ens.n, factor);
    ens.p = scale_dim(ens.p, factor);
    if let Family::ProductOfGaussians { inner } = &mut ens.family {
        for d in inner.iter_mut() {
            *d = scale_dim(*d, factor);
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if self.n_noise_resamples == 0 {
            return Err(Error::Config("n_noise_resamples must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!("sigma2 must be finite and >= 0, got {}", self.sigma2)));
        }
        self.ensemble.validate()?;
        self.signal.validate()?;
        self.noise.validate()?;
        self.lambda_sweep.resolve()?;
        if let Some(g) = &self.estimation_grid {
            g.resolve()?;
        }
        let test = self.test_ensemble();
        test.validate()?;
        if test.p != self.ensemble.p {
            return Err(Error::Config(format!("test p = {} differs from training p = {}", test.p, self.ensemble.p)));
        }
        if self.test.mode == TestMode::Coupled && self.test.coupled_indices.is_empty() {
            return Err(Error::Config("coupled test mode needs coupled_indices".into()));
        }
        if let Some(Method::KFold(k)) = self.methods.iter().find(|m| matches!(m, Method::KFold(_))) {
            if *k < 2 || *k > self.ensemble.n {
                return Err(Error::Config(format!("kfold({k}) needs 2 <= k <= n")));
            }
        }
        Ok(())
    }

    pub fn test_ensemble(&self) -> EnsembleSpec {
        self.test.ensemble.clone().unwrap_or_else(|| self.ensemble.clone())
    }

    pub fn aligned_indices(&self) -> Vec<usize> {
        self.aroti.aligned_indices.clone().unwrap_or_else(|| self.signal.aligned_indices.clone())
    }

    pub fn coupled_indices(&self) -> Vec<usize> {
        self.aroti.coupled_indices.clone().unwrap_or_else(|| self.test.coupled_indices.clone())
    }

    /// Multiplies every dimension by `factor` (rounded, at least 1).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Config(format!("scale must be > 0, got {factor}")));
        }
        let mut cfg = self.clone();
        scale_ensemble(&mut cfg.ensemble, factor);
        if let Some(t) = cfg.test.ensemble.as_mut() {
            scale_ensemble(t, factor);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
sigma2 = 1.0
methods = ["roti_gcv", "gcv", "kfold(5)"]
[ensemble]
family = "autocorrelated_rows"
rho = 0.9
n = 50
p = 40
[signal]
r2 = 1.0
[lambda_sweep]
min = 0.1
max = 10.0
points = 20
"#;

    #[test]
    fn parses_minimal() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.methods, vec![Method::RotiGcv, Method::Gcv, Method::KFold(5)]);
        assert_eq!(cfg.ensemble.family, Family::AutocorrelatedRows { rho: 0.9 });
        assert_eq!(cfg.lambda_sweep.resolve().unwrap().len(), 20);
        assert_eq!(cfg.seeds, vec![0]);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_empty_methods_and_bad_grids() {
        let text = MINIMAL.replace(r#"["roti_gcv", "gcv", "kfold(5)"]"#, "[]");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
        let text = MINIMAL.replace("min = 0.1", "min = -0.1");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let text = MINIMAL.replace("\"gcv\"", "\"cv\"");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let bad = LambdaGrid::Values { values: vec![1.0, 0.5] };
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn scaling_shrinks_dimensions() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap().scaled(0.1).unwrap();
        assert_eq!((cfg.ensemble.n, cfg.ensemble.p), (5, 4));
    }

    #[test]
    fn method_strings_roundtrip() {
        for m in [Method::RotiGcv, Method::ArotiGcv, Method::Gcv, Method::Loocv, Method::KFold(10)] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
    }
}
