//! Experiment configuration: JSON file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use haarstab::dyadic::pow2;
use haarstab::gridfn::MollifierSpec;
use serde::{Deserialize, Serialize};

use crate::generators::Generator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Orthonormality,
    #[serde(rename = "lemma1-lu")]
    Lemma1Lu,
    #[serde(rename = "theorem1-mollify")]
    Theorem1Mollify,
    #[serde(rename = "theorem3-nbv")]
    Theorem3Nbv,
    #[serde(rename = "theorem4-diagonal")]
    Theorem4Diagonal,
    #[serde(rename = "theorem5-affine")]
    Theorem5Affine,
    #[serde(rename = "corollary3-reconstruct")]
    Corollary3Reconstruct,
    #[serde(rename = "corollary5-sharpness")]
    Corollary5Sharpness,
    #[serde(rename = "corollary5-random")]
    Corollary5Random,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Orthonormality,
        Experiment::Lemma1Lu,
        Experiment::Theorem1Mollify,
        Experiment::Theorem3Nbv,
        Experiment::Theorem4Diagonal,
        Experiment::Theorem5Affine,
        Experiment::Corollary3Reconstruct,
        Experiment::Corollary5Sharpness,
        Experiment::Corollary5Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Orthonormality => "orthonormality",
            Experiment::Lemma1Lu => "lemma1-lu",
            Experiment::Theorem1Mollify => "theorem1-mollify",
            Experiment::Theorem3Nbv => "theorem3-nbv",
            Experiment::Theorem4Diagonal => "theorem4-diagonal",
            Experiment::Theorem5Affine => "theorem5-affine",
            Experiment::Corollary3Reconstruct => "corollary3-reconstruct",
            Experiment::Corollary5Sharpness => "corollary5-sharpness",
            Experiment::Corollary5Random => "corollary5-random",
        }
    }

    /// `η` values used when the config gives none.
    pub fn default_etas(self, dim: usize) -> Vec<f64> {
        let powers = |lo: i32, hi: i32| (lo..=hi).map(|m| pow2(-m)).collect();
        match self {
            Experiment::Lemma1Lu => vec![0.05, 0.25, 0.5],
            Experiment::Theorem1Mollify => vec![pow2(-4), pow2(-3)],
            Experiment::Corollary3Reconstruct => vec![pow2(-6), pow2(-4)],
            Experiment::Theorem5Affine => {
                let m = (20.0 * dim as f64).log2().ceil() as i32;
                powers(m, m + 2)
            }
            _ => powers(3, 8),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!(
                    "unknown experiment {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

/// A built-in mollifier or a CSV sample table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelRef {
    Csv { csv: PathBuf },
    Spec(MollifierSpec),
}

impl Default for KernelRef {
    fn default() -> Self {
        KernelRef::Spec(MollifierSpec::box_kernel())
    }
}

impl KernelRef {
    pub fn resolve(&self, dim: usize) -> Result<MollifierSpec, ConfigError> {
        match self {
            KernelRef::Spec(s) => Ok(s.clone()),
            KernelRef::Csv { csv } => {
                MollifierSpec::from_csv_path(csv, dim).map_err(|e| ConfigError::Field {
                    field: "kernel",
                    message: format!("{}: {e}", csv.display()),
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_resolution")]
    pub resolution: i32,
    #[serde(default)]
    pub n_max: i32,
    #[serde(default = "default_n_min")]
    pub n_min: i32,
    /// Empty means [`Experiment::default_etas`].
    #[serde(default)]
    pub eta_list: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelRef,
    #[serde(default)]
    pub generator: Option<Generator>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_align")]
    pub align: bool,
}

fn default_dim() -> usize {
    1
}

fn default_resolution() -> i32 {
    8
}

fn default_n_min() -> i32 {
    -4
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_align() -> bool {
    true
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Field {
        field: &'static str,
        message: String,
    },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        message: message.into(),
    }
}

/// Command-line values that replace config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub dim: Option<usize>,
    pub resolution: Option<i32>,
    pub eta: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub no_align: bool,
}

/// Largest denominator exponent accepted as "dyadic".
const DYADIC_BITS: i32 = 30;
/// Cap on window cells so a typo cannot exhaust memory.
const MAX_WINDOW_CELLS: f64 = (1u64 << 28) as f64;

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            dim: default_dim(),
            resolution: default_resolution(),
            n_max: 0,
            n_min: default_n_min(),
            eta_list: Vec::new(),
            seed: 0,
            kernel: KernelRef::default(),
            generator: None,
            trials: None,
            out: default_out(),
            align: true,
        }
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Config file (if any) with overrides applied, validated.
    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match (path, o.experiment) {
            (Some(p), _) => Self::load(p)?,
            (None, Some(e)) => Self::new(e),
            (None, None) => return Err(field("experiment", "no config file and no --experiment")),
        };
        if let Some(e) = o.experiment {
            cfg.experiment = e;
        }
        if let Some(d) = o.dim {
            cfg.dim = d;
        }
        if let Some(j) = o.resolution {
            cfg.resolution = j;
        }
        if let Some(e) = &o.eta {
            cfg.eta_list = e.clone();
        }
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if let Some(p) = &o.out {
            cfg.out = p.clone();
        }
        if o.no_align {
            cfg.align = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn etas(&self) -> Vec<f64> {
        if self.eta_list.is_empty() {
            self.experiment.default_etas(self.dim)
        } else {
            self.eta_list.clone()
        }
    }

    pub fn generator(&self) -> Generator {
        self.generator.unwrap_or(match self.experiment {
            Experiment::Theorem4Diagonal => Generator::Diagonal,
            _ => Generator::General,
        })
    }

    pub fn align_resolution(&self) -> Option<i32> {
        self.align.then_some(self.resolution)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        use Experiment::*;
        let d = self.dim;
        let max_dim = if self.experiment == Lemma1Lu { 16 } else { 4 };
        if !(1..=max_dim).contains(&d) {
            return Err(field("dim", format!("{d} not in 1..={max_dim}")));
        }
        if !(0..=20).contains(&self.resolution) {
            return Err(field(
                "resolution",
                format!("{} not in 0..=20", self.resolution),
            ));
        }
        let cells = (3.0 * pow2(self.resolution)).powi(d as i32);
        if cells > MAX_WINDOW_CELLS && self.experiment != Lemma1Lu {
            return Err(field(
                "resolution",
                format!("window of {cells:e} cells is too large"),
            ));
        }
        if self.n_max > 0 {
            return Err(field(
                "n_max",
                format!("{} > 0 leaves the window", self.n_max),
            ));
        }
        if self.n_min > self.n_max {
            return Err(field(
                "n_min",
                format!("{} > n_max {}", self.n_min, self.n_max),
            ));
        }
        if self.n_min < -self.resolution {
            return Err(field(
                "n_min",
                format!(
                    "cubes of scale {} are finer than the mesh (resolution {})",
                    self.n_min, self.resolution
                ),
            ));
        }
        if self.trials == Some(0) {
            return Err(field("trials", "must be at least 1"));
        }
        let etas = self.etas();
        let cap = if self.experiment == Lemma1Lu {
            1.0
        } else {
            0.5
        };
        for &e in &etas {
            if !(e.is_finite() && e > 0.0 && e < cap) && !(self.experiment == Lemma1Lu && e == 0.5)
            {
                return Err(field("eta_list", format!("{e} outside (0, {cap})")));
            }
            if self.align && self.experiment != Lemma1Lu && (e * pow2(DYADIC_BITS)).fract() != 0.0 {
                return Err(field(
                    "eta_list",
                    format!("{e} is not dyadic; use --no-align for arbitrary values"),
                ));
            }
        }
        match self.experiment {
            Theorem5Affine => {
                let limit = 1.0 / (20.0 * d as f64);
                if let Some(e) = etas.iter().find(|&&e| e > limit) {
                    return Err(field("eta_list", format!("{e} exceeds 1/(20d) = {limit}")));
                }
            }
            Theorem1Mollify => {
                let finest = pow2(self.resolution + self.n_min);
                if let Some(e) = etas.iter().find(|&&e| e * finest < 1.0) {
                    return Err(field(
                        "eta_list",
                        format!("{e}·ℓ(Q) is below one cell at scale {}", self.n_min),
                    ));
                }
                self.kernel.resolve(d)?;
            }
            Corollary5Sharpness => {
                if d != 1 {
                    return Err(field("dim", "corollary5-sharpness is one-dimensional"));
                }
                for &e in &etas {
                    let m = -e.log2();
                    if m.fract() != 0.0 || m > self.resolution as f64 {
                        return Err(field(
                            "eta_list",
                            format!("{e} must be 2^-m with m ≤ resolution {}", self.resolution),
                        ));
                    }
                }
            }
            _ => {}
        }
        let uses_generator = matches!(
            self.experiment,
            Theorem5Affine | Corollary3Reconstruct | Corollary5Random
        );
        if uses_generator && self.generator() == Generator::Shear && d < 2 {
            return Err(field("generator", "shear needs dim ≥ 2"));
        }
        if self.generator.is_some() && !uses_generator {
            return Err(field(
                "generator",
                format!("not used by {}", self.experiment),
            ));
        }
        Ok(())
    }
}
