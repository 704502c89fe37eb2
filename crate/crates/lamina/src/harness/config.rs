//! Experiment configuration: TOML schema, validation, and the assembled
//! `Experiment` the runners consume.
//!
//! Numeric values that must be exact (atom locations, feature centers,
//! measure breakpoints) accept decimals or `p/q` rationals, as strings or
//! plain numbers.

use crate::exact::Exact;
use crate::finescale::{Law, Source};
use crate::measures::{Atom, Measure1D, MeasurePair};
use crate::media::{Feature, FeatureKind, LayeredProfile, PowerLaw};
use crate::tensors::{
    heat_effective, sys_effective, EffectiveLaw, IsotropicLaw, SystemTensor,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileSpec>,
    /// Second family for the common-atom demo; defaults to the first
    /// profile with swapped nested radii.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile2: Option<ProfileSpec>,
    pub law: LawSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub source: SourceSpec,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Optional override of the declared limit measures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measures: Option<MeasuresSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub length: Exact,
    #[serde(default = "one")]
    pub background: f64,
    #[serde(default, rename = "feature")]
    pub features: Vec<FeatureSpec>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub center: Exact,
    pub kind: String,
    #[serde(default = "one")]
    pub width_coef: f64,
    #[serde(default = "one")]
    pub width_exp: f64,
    #[serde(default = "one")]
    pub value_coef: f64,
    /// Defaults to `+width_exp` for soft and `-width_exp` for stiff layers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_exp: Option<f64>,
    /// Nested only: exponents of the two radii `r1 = eps^r1_exp`,
    /// `r2 = eps^r2_exp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1_exp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2_exp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub kind: String,
    /// Heat: conductivity matrix rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    /// Isotropic: Lame ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    /// System: component count and Gram matrix rows
    /// (`gram[(i*d + j)][(p*d + q)] = C_ijpq`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dimension: usize,
    pub resolution: usize,
    #[serde(default = "one")]
    pub transverse_extent: f64,
    #[serde(default = "default_k_min")]
    pub k_min: usize,
}

fn default_k_min() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    200_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumOrVec {
    Num(f64),
    Vec(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default = "constant_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<NumOrVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breaks: Option<Vec<Exact>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<f64>>>,
}

fn constant_kind() -> String {
    "constant".into()
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec {
            kind: constant_kind(),
            value: Some(NumOrVec::Num(1.0)),
            breaks: None,
            values: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    #[serde(default)]
    pub solutions: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_out(),
            formats: default_formats(),
            solutions: false,
        }
    }
}

fn default_out() -> String {
    "out".into()
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "table".into(), "plotdata".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuresSpec {
    pub nu: MeasureSpec,
    pub m: MeasureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    /// `[[x0, x1, value], ...]`
    pub density: Vec<(Exact, Exact, f64)>,
    /// `[[t, mass], ...]`
    #[serde(default)]
    pub atoms: Vec<(Exact, f64)>,
}

impl MeasureSpec {
    pub fn to_measure(&self, length: f64) -> Result<Measure1D, ConfigError> {
        let mut breaks = Vec::with_capacity(self.density.len() + 1);
        let mut densities = Vec::with_capacity(self.density.len());
        for (k, (x0, x1, v)) in self.density.iter().enumerate() {
            if k == 0 {
                breaks.push(x0.to_f64());
            } else if breaks.last() != Some(&x0.to_f64()) {
                return Err(invalid("measure density pieces must be contiguous"));
            }
            breaks.push(x1.to_f64());
            densities.push(*v);
        }
        let atoms = self
            .atoms
            .iter()
            .map(|(t, mass)| Atom {
                location: *t,
                mass: *mass,
            })
            .collect();
        Measure1D::new(length, breaks, densities, atoms)
            .map_err(|e| invalid(format!("invalid measure: {e}")))
    }

    pub fn from_measure(m: &Measure1D) -> Self {
        let density = m
            .density_breaks()
            .windows(2)
            .zip(m.densities())
            .map(|(w, v)| {
                (
                    Exact::from_f64(w[0]).expect("finite break"),
                    Exact::from_f64(w[1]).expect("finite break"),
                    *v,
                )
            })
            .collect();
        let atoms = m.atoms().iter().map(|a| (a.location, a.mass)).collect();
        MeasureSpec { density, atoms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Table,
    PlotData,
}

/// Validated, ready-to-run experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub raw: RawConfig,
    pub profile: Option<LayeredProfile>,
    pub profile2: Option<LayeredProfile>,
    pub law: Law,
    pub eff_law: EffectiveLaw,
    pub dimension: usize,
    pub n_comp: usize,
    pub length: f64,
    pub source: Source,
    pub eps_list: Vec<f64>,
    pub resolution: usize,
    pub k_min: usize,
    pub transverse_extent: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
    pub export_solutions: bool,
    pub measures_override: Option<MeasurePair>,
    pub warnings: Vec<String>,
    pub config_hash: String,
}

impl RawConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(self) -> Result<Experiment, ConfigError> {
        let mut warnings = Vec::new();
        let dim = self.grid.dimension;
        if !(1..=3).contains(&dim) {
            return Err(invalid(format!("dimension must be 1..3, got {dim}")));
        }
        if self.grid.resolution == 0 {
            return Err(invalid("resolution must be >= 1"));
        }
        if self.sweep.eps.is_empty() {
            return Err(invalid("sweep.eps must not be empty"));
        }
        if self
            .sweep
            .eps
            .iter()
            .any(|e| !(e.is_finite() && *e > 0.0))
        {
            return Err(invalid("sweep.eps entries must be positive"));
        }
        if self.sweep.eps.windows(2).any(|w| w[0] <= w[1]) {
            return Err(invalid("sweep.eps must be strictly decreasing"));
        }

        // law
        let (law, eff_law, n_comp) = match self.law.kind.as_str() {
            "heat" => {
                let rows = self
                    .law
                    .a
                    .as_ref()
                    .ok_or_else(|| invalid("heat law needs `a` matrix"))?;
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(invalid(format!("heat matrix must be {dim}x{dim}")));
                }
                let a = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
                let eff = heat_effective(&a)
                    .map_err(|e| invalid(format!("invalid heat matrix: {e}")))?;
                (Law::Scalar(a), EffectiveLaw::System(eff), 1)
            }
            "iso" => {
                let l = self
                    .law
                    .l
                    .ok_or_else(|| invalid("iso law needs the Lame ratio `l`"))?;
                let iso =
                    IsotropicLaw::new(l).map_err(|e| invalid(format!("invalid l: {e}")))?;
                match dim {
                    3 => (Law::Iso(iso), EffectiveLaw::Iso(iso), 3),
                    2 => {
                        // plane analog runs through the system formulas
                        warnings.push(
                            "system-mode: plane isotropic law handled as a \
                             positive-semidefinite system tensor"
                                .into(),
                        );
                        let c = SystemTensor::isotropic(&iso, 2)
                            .map_err(|e| invalid(format!("plane iso tensor: {e}")))?;
                        let eff = sys_effective(&c)
                            .map_err(|e| invalid(format!("plane iso tensor: {e}")))?;
                        (Law::Iso(iso), EffectiveLaw::System(eff), 2)
                    }
                    _ => {
                        return Err(invalid(
                            "iso law needs dimension 3 (or 2 in system-mode)",
                        ))
                    }
                }
            }
            "system" => {
                let n = self
                    .law
                    .n
                    .ok_or_else(|| invalid("system law needs component count `n`"))?;
                let rows = self
                    .law
                    .gram
                    .as_ref()
                    .ok_or_else(|| invalid("system law needs `gram` matrix"))?;
                let nd = n * dim;
                if rows.len() != nd || rows.iter().any(|r| r.len() != nd) {
                    return Err(invalid(format!("gram matrix must be {nd}x{nd}")));
                }
                let gram = DMatrix::from_fn(nd, nd, |r, c| rows[r][c]);
                let c = SystemTensor::from_gram(n, dim, &gram)
                    .map_err(|e| invalid(format!("invalid system tensor: {e}")))?;
                let eff = sys_effective(&c)
                    .map_err(|e| invalid(format!("invalid system tensor: {e}")))?;
                (Law::System(c), EffectiveLaw::System(eff), n)
            }
            other => return Err(invalid(format!("unknown law kind {other:?}"))),
        };

        // profile
        let build_profile = |spec: &ProfileSpec| -> Result<LayeredProfile, ConfigError> {
            let length = spec.length.to_f64();
            let features = spec
                .features
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    let kind = match f.kind.as_str() {
                        "soft" => FeatureKind::Soft,
                        "stiff" => FeatureKind::Stiff,
                        "nested" => FeatureKind::Nested,
                        other => {
                            return Err(invalid(format!(
                                "feature {k}: unknown kind {other:?}"
                            )))
                        }
                    };
                    let (width, value, inner) = match kind {
                        FeatureKind::Nested => {
                            let r1 = f.r1_exp.unwrap_or(1.0);
                            let r2 = f.r2_exp.unwrap_or(2.0);
                            (
                                PowerLaw::new(1.0, r1),
                                PowerLaw::new(1.0, r1),
                                Some(PowerLaw::new(1.0, r2)),
                            )
                        }
                        FeatureKind::Soft => {
                            let ve = f.value_exp.unwrap_or(f.width_exp);
                            (
                                PowerLaw::new(f.width_coef, f.width_exp),
                                PowerLaw::new(f.value_coef, ve),
                                None,
                            )
                        }
                        FeatureKind::Stiff => {
                            let ve = f.value_exp.unwrap_or(-f.width_exp);
                            (
                                PowerLaw::new(f.width_coef, f.width_exp),
                                PowerLaw::new(f.value_coef, ve),
                                None,
                            )
                        }
                    };
                    Ok(Feature {
                        center: f.center,
                        kind,
                        width,
                        value,
                        inner,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            LayeredProfile::new(length, spec.background, features)
                .map_err(|e| invalid(format!("invalid profile: {e}")))
        };
        let profile = self.profile.as_ref().map(&build_profile).transpose()?;
        let profile2 = self.profile2.as_ref().map(&build_profile).transpose()?;

        let length = profile
            .as_ref()
            .map(|p| p.length())
            .unwrap_or_else(|| self.profile2.as_ref().map_or(1.0, |p| p.length.to_f64()));

        // source
        let source = match self.source.kind.as_str() {
            "constant" => {
                let comps = match self.source.value.clone() {
                    Some(NumOrVec::Num(v)) => vec![v; n_comp],
                    Some(NumOrVec::Vec(v)) => v,
                    None => vec![1.0; n_comp],
                };
                if comps.len() != n_comp {
                    return Err(invalid(format!(
                        "source needs {n_comp} components, got {}",
                        comps.len()
                    )));
                }
                Source::constant(length, comps)
            }
            "piecewise" => {
                let breaks: Vec<f64> = self
                    .source
                    .breaks
                    .as_ref()
                    .ok_or_else(|| invalid("piecewise source needs `breaks`"))?
                    .iter()
                    .map(|e| e.to_f64())
                    .collect();
                let values = self
                    .source
                    .values
                    .clone()
                    .ok_or_else(|| invalid("piecewise source needs `values`"))?;
                if breaks.first() != Some(&0.0) || breaks.last() != Some(&length) {
                    return Err(invalid("source breaks must span [0, L]"));
                }
                if values.len() + 1 != breaks.len() {
                    return Err(invalid("one source value row per piece"));
                }
                if values.iter().any(|r| r.len() != n_comp) {
                    return Err(invalid(format!("source rows need {n_comp} components")));
                }
                Source::new(breaks, values)
            }
            other => return Err(invalid(format!("unknown source kind {other:?}"))),
        };

        let measures_override = self
            .measures
            .as_ref()
            .map(|spec| -> Result<MeasurePair, ConfigError> {
                Ok(MeasurePair::new(
                    spec.nu.to_measure(length)?,
                    spec.m.to_measure(length)?,
                ))
            })
            .transpose()?;

        // finitely many interfaces only; the discretization enumerates them
        const MAX_ATOMS: usize = 32;
        let atom_count = measures_override
            .as_ref()
            .map(|p| p.nu.atoms().len() + p.m.atoms().len())
            .unwrap_or_else(|| {
                profile.as_ref().map_or(0, |p| {
                    p.features()
                        .iter()
                        .map(|f| match f.kind {
                            crate::media::FeatureKind::Nested => 2,
                            _ => 1,
                        })
                        .sum()
                })
            });
        if atom_count > MAX_ATOMS {
            return Err(invalid(format!(
                "config declares {atom_count} atoms; the cap is {MAX_ATOMS}"
            )));
        }

        let formats = self
            .output
            .formats
            .iter()
            .map(|f| match f.as_str() {
                "csv" => Ok(Format::Csv),
                "table" => Ok(Format::Table),
                "plotdata" => Ok(Format::PlotData),
                other => Err(invalid(format!("unknown output format {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;

        let config_hash = self.hash();
        Ok(Experiment {
            name: self.preset.clone().unwrap_or_else(|| "custom".into()),
            profile,
            profile2,
            law,
            eff_law,
            dimension: dim,
            n_comp,
            length,
            source,
            eps_list: self.sweep.eps.clone(),
            resolution: self.grid.resolution,
            k_min: self.grid.k_min,
            transverse_extent: self.grid.transverse_extent,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            out_dir: PathBuf::from(&self.output.dir),
            formats,
            export_solutions: self.output.solutions,
            measures_override,
            warnings,
            config_hash,
            raw: self,
        })
    }
}

impl Experiment {
    /// The limit measure pair this experiment is run against.
    pub fn limit_pair(&self) -> Result<MeasurePair, ConfigError> {
        if let Some(pair) = &self.measures_override {
            return Ok(pair.clone());
        }
        let profile = self
            .profile
            .as_ref()
            .ok_or_else(|| invalid("experiment needs a [profile] or [measures] section"))?;
        Ok(profile
            .limit_measures()
            .map_err(|e| invalid(format!("profile has no admissible limit: {e}")))?
            .pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
preset = "sample"

[profile]
length = "1"
background = 1.0

[[profile.feature]]
center = "1/3"
kind = "soft"

[law]
kind = "heat"
a = [[1.0]]

[grid]
dimension = 1
resolution = 64

[sweep]
eps = [1e-1, 1e-2, 1e-3]

[source]
kind = "constant"
value = 1.0
"#;

    #[test]
    fn parses_and_validates() {
        let raw = RawConfig::from_str(SAMPLE).unwrap();
        let exp = raw.validate().unwrap();
        assert_eq!(exp.dimension, 1);
        assert_eq!(exp.n_comp, 1);
        let profile = exp.profile.as_ref().unwrap();
        assert_eq!(profile.features().len(), 1);
        let pair = exp.limit_pair().unwrap();
        assert_eq!(pair.nu.atoms().len(), 1);
    }

    #[test]
    fn roundtrip_preserves_semantics() {
        let raw = RawConfig::from_str(SAMPLE).unwrap();
        let text = raw.to_toml();
        let again = RawConfig::from_str(&text).unwrap();
        assert_eq!(raw, again);
        assert_eq!(raw.hash(), again.hash());
    }

    #[test]
    fn increasing_eps_rejected() {
        let bad = SAMPLE.replace("eps = [1e-1, 1e-2, 1e-3]", "eps = [1e-3, 1e-2]");
        let err = RawConfig::from_str(&bad).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("strictly decreasing"));
    }

    #[test]
    fn measures_override_roundtrip() {
        let with_measures = format!(
            "{SAMPLE}\n[measures.nu]\ndensity = [[\"0\", \"1\", 1.0]]\natoms = [[\"1/3\", 1.0]]\n\n[measures.m]\ndensity = [[\"0\", \"1\", 1.0]]\natoms = []\n"
        );
        let exp = RawConfig::from_str(&with_measures)
            .unwrap()
            .validate()
            .unwrap();
        let pair = exp.limit_pair().unwrap();
        assert_eq!(pair.nu.atoms()[0].mass, 1.0);
        let spec = MeasureSpec::from_measure(&pair.nu);
        let back = spec.to_measure(1.0).unwrap();
        assert_eq!(back, pair.nu);
    }

    #[test]
    fn iso_law_dimensions() {
        let iso3 = SAMPLE
            .replace("kind = \"heat\"\na = [[1.0]]", "kind = \"iso\"\nl = 1.0")
            .replace("dimension = 1", "dimension = 3");
        let exp = RawConfig::from_str(&iso3).unwrap().validate().unwrap();
        assert_eq!(exp.n_comp, 3);
        assert!(exp.warnings.is_empty());

        let iso2 = SAMPLE
            .replace("kind = \"heat\"\na = [[1.0]]", "kind = \"iso\"\nl = 1.0")
            .replace("dimension = 1", "dimension = 2");
        let exp = RawConfig::from_str(&iso2).unwrap().validate().unwrap();
        assert!(exp.warnings[0].contains("system-mode"));
    }
}
