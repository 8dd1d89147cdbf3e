//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::Realization;
use crate::detcore::FeketeBudget;
use crate::domain::{AmbientModel, BaseMeasure, Density, Region, Term, Weight, WeightedDomain};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;
use crate::sampler::ChainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Mandatory unless given on the command line.
    pub seed: Option<u64>,
    pub domain: DomainConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub fekete: FeketeConfig,
    #[serde(default)]
    pub dictionary: DictionaryConfig,
    #[serde(default)]
    pub ldp: LdpConfig,
    #[serde(default)]
    pub diag: DiagConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Euclidean,
    Sphere,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub region: RegionConfig,
    #[serde(default)]
    pub phi: PhiConfig,
    #[serde(default = "one")]
    pub hoelder_alpha: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionConfig {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Cap { angle: f64 },
    Full,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Linear {
        coefs: Vec<f64>,
    },
    Quadratic {
        a: f64,
    },
    FlatMetric,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    #[default]
    Uniform,
    Polynomial {
        terms: Vec<Term>,
        #[serde(default)]
        bound: Option<f64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default)]
    pub realization: Realization,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub degrees: Vec<usize>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
}

fn default_betas() -> Vec<f64> {
    vec![2.0]
}

fn default_gammas() -> Vec<f64> {
    vec![1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    pub burn_in: Option<usize>,
    pub keep: usize,
    pub thin: Option<usize>,
    pub mcmc: bool,
    /// Also run the exact sampler for `beta = 2`.
    pub dpp: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 1,
            burn_in: None,
            keep: 100,
            thin: None,
            mcmc: true,
            dpp: true,
        }
    }
}

impl SamplerConfig {
    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            burn_in: self.burn_in,
            keep: self.keep,
            thin: self.thin,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeketeConfig {
    /// Grid resolution of the candidate pool; 256 on one-dimensional sets, 32 otherwise.
    pub grid: Option<usize>,
    pub budget: FeketeBudget,
    /// Degree of the Fekete equilibrium reference; twice the largest degree by default.
    pub p_ref: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionaryConfig {
    pub modes: usize,
    pub harmonic_degree: usize,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            modes: 32,
            harmonic_degree: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Mcmc,
    Dpp,
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Mcmc => "mcmc",
            SamplerKind::Dpp => "dpp",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpConfig {
    pub delta: f64,
    /// Which sample archives to analyse.
    pub sampler: SamplerKind,
}

impl Default for LdpConfig {
    fn default() -> Self {
        LdpConfig {
            delta: 0.5,
            sampler: SamplerKind::Mcmc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagConfig {
    /// Grid resolution for `B_p` and sup-norms; 512 on one-dimensional sets, 64 otherwise.
    pub grid: Option<usize>,
    pub delta: f64,
    pub lbb_samples: usize,
    /// `lbb_check` runs only for `N_p` up to this value.
    pub lbb_max_n: usize,
    pub norm_ratio_sections: usize,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig {
            grid: None,
            delta: 0.5,
            lbb_samples: 100_000,
            lbb_max_n: 6,
            norm_ratio_sections: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Record wall-clock timings (makes outputs differ between runs).
    pub timings: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            timings: false,
        }
    }
}

/// Converts a byte offset into 1-based (line, column).
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, col)
}

/// Line of the first `key = ...` assignment, for validation messages.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    Error::Config(format!("line {l}, column {c}: {msg}"))
                }
                None => Error::Config(msg),
            }
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn validate(&self, text: &str) -> Result<()> {
        let fail = |key: &str, msg: String| {
            Err(match key_line(text, key) {
                Some(l) => Error::Config(format!("line {l}: {msg}")),
                None => Error::Config(msg),
            })
        };
        let e = &self.experiment;
        if e.degrees.is_empty() {
            return fail("degrees", "experiment.degrees must not be empty".into());
        }
        if e.betas.is_empty() || e.betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return fail("betas", "experiment.betas must be a nonempty list of positive numbers".into());
        }
        if e.gammas.is_empty() || e.gammas.iter().any(|g| !(*g > 0.0 && *g <= 2.0)) {
            return fail("gammas", "experiment.gammas must be a nonempty list in (0, 2]".into());
        }
        let mut sorted = e.degrees.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != e.degrees.len() {
            return fail("degrees", "experiment.degrees contains duplicates".into());
        }
        if self.sampler.chains == 0 {
            return fail("chains", "sampler.chains must be positive".into());
        }
        if !(self.ldp.delta > 0.0 && self.ldp.delta < 1.0) {
            return fail("delta", "ldp.delta must lie in (0, 1)".into());
        }
        if !(self.diag.delta > 0.0 && self.diag.delta < 1.0) {
            return fail("delta", "diag.delta must lie in (0, 1)".into());
        }
        if let Err(err) = self.build_domain() {
            return fail("model", format!("invalid domain: {err}"));
        }
        Ok(())
    }

    /// Seed after command-line overrides; missing seeds are a configuration error.
    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("seed is mandatory (set `seed = ...` or pass --seed)".into()))
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_domain(&self) -> Result<Arc<WeightedDomain>> {
        let d = &self.domain;
        let model = match d.model {
            ModelKind::Euclidean => AmbientModel::euclidean(d.dim)?,
            ModelKind::Sphere => AmbientModel::sphere(d.dim)?,
        };
        let region = match &d.region {
            RegionConfig::Box { lower, upper } => Region::Box {
                lower: lower.clone(),
                upper: upper.clone(),
            },
            RegionConfig::Cap { angle } => Region::Cap { angle: *angle },
            RegionConfig::Full => Region::FullSphere,
        };
        let phi = match &d.phi {
            PhiConfig::Zero => Weight::Zero,
            PhiConfig::Constant { value } => Weight::Constant(*value),
            PhiConfig::Linear { coefs } => Weight::Linear(coefs.clone()),
            PhiConfig::Quadratic { a } => Weight::Quadratic(*a),
            PhiConfig::FlatMetric => Weight::FlatMetric,
        };
        Ok(Arc::new(WeightedDomain::new(model, region, phi, d.hoelder_alpha)?))
    }

    pub fn build_measure(&self, domain: Arc<WeightedDomain>) -> Result<Arc<BaseMeasure>> {
        Ok(Arc::new(match &self.measure {
            MeasureConfig::Uniform => BaseMeasure::uniform(domain),
            MeasureConfig::Polynomial { terms, bound } => {
                BaseMeasure::new(domain, Density::Polynomial(terms.clone()), *bound)?
            }
        }))
    }

    pub fn pool_grid(&self, domain: &WeightedDomain) -> usize {
        self.fekete
            .grid
            .unwrap_or(if domain.model().manifold_dim() == 1 { 256 } else { 32 })
    }

    pub fn p_ref(&self) -> usize {
        let pmax = self.experiment.degrees.iter().copied().max().unwrap_or(1);
        self.fekete.p_ref.unwrap_or(2 * pmax).max(1)
    }
}
