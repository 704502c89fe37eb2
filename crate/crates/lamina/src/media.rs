//! Layered coefficient families `mu_eps(x1)` and their limit measures.
//!
//! Every built-in construction is a power law in eps: a soft layer of width
//! `c_w eps^p` carries the small value `c_v eps^q` and contributes an atom
//! of mass `c_w / c_v` to `nu` when `p = q`; a stiff layer with value
//! `c_v eps^{-q}` contributes an atom of mass `c_w c_v` to `m` when `p = q`.
//! The `nested` kind realizes the concentric soft/stiff construction whose
//! declared limits `nu = m = L^1 + delta` violate the no-common-atom
//! hypothesis; its actual fine-scale behaviour depends on which radius
//! shrinks faster, and that regime is recorded.

use crate::exact::Exact;
use crate::measures::{Atom, Measure1D, MeasurePair};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MediaError {
    #[error("domain length must be positive")]
    BadLength,
    #[error("background value must be positive")]
    BadBackground,
    #[error("feature {index} at {center} needs a positive width rule")]
    BadWidthRule { index: usize, center: Exact },
    #[error("feature {index}: soft layers need value_exp > 0, stiff layers value_exp < 0")]
    BadValueRule { index: usize },
    #[error("feature centers must lie strictly inside (0, L) and be pairwise distinct")]
    BadCenters,
    #[error("features {first} and {second} overlap at eps = {eps}")]
    Overlap {
        first: usize,
        second: usize,
        eps: f64,
    },
    #[error("feature {index} leaves (0, L) at eps = {eps}")]
    OutsideDomain { index: usize, eps: f64 },
    #[error("eps must be positive and finite, got {0}")]
    BadEps(f64),
    #[error(
        "feature {index}: integral of {which} over the layer diverges as eps -> 0 (unbounded family)"
    )]
    Unbounded { index: usize, which: &'static str },
    #[error(transparent)]
    Measure(#[from] crate::measures::MeasureError),
}

/// `coef * eps^exp`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    pub coef: f64,
    pub exp: f64,
}

impl PowerLaw {
    pub fn new(coef: f64, exp: f64) -> Self {
        PowerLaw { coef, exp }
    }

    pub fn eval(&self, eps: f64) -> f64 {
        self.coef * eps.powf(self.exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Soft,
    Stiff,
    Nested,
}

/// Which nested radius shrinks faster. Recorded because the fine-scale
/// family (and hence its limit) differs between the two regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NestedRegime {
    /// `r2 << r1`: stiff core inside the soft layer.
    StiffInside,
    /// `r1 << r2`: soft core inside the stiff layer.
    SoftInside,
    /// Equal exponents; the construction degenerates.
    Equal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub center: Exact,
    pub kind: FeatureKind,
    /// Layer width `w(eps)`; for `nested` this is the soft radius `r1(eps)`.
    pub width: PowerLaw,
    /// Value inside the layer; for `nested` this is unused (the soft value
    /// equals `r1` and the stiff value is `1/r2`).
    pub value: PowerLaw,
    /// Stiff radius `r2(eps)`, `nested` only.
    pub inner: Option<PowerLaw>,
}

impl Feature {
    pub fn soft(center: Exact, value_coef: f64) -> Self {
        Feature {
            center,
            kind: FeatureKind::Soft,
            width: PowerLaw::new(1.0, 1.0),
            value: PowerLaw::new(value_coef, 1.0),
            inner: None,
        }
    }

    pub fn stiff(center: Exact, value_coef: f64) -> Self {
        Feature {
            center,
            kind: FeatureKind::Stiff,
            width: PowerLaw::new(1.0, 1.0),
            value: PowerLaw::new(value_coef, -1.0),
            inner: None,
        }
    }

    pub fn nested(center: Exact, r1_exp: f64, r2_exp: f64) -> Self {
        Feature {
            center,
            kind: FeatureKind::Nested,
            width: PowerLaw::new(1.0, r1_exp),
            value: PowerLaw::new(1.0, r1_exp),
            inner: Some(PowerLaw::new(1.0, r2_exp)),
        }
    }

    /// Total width occupied at this eps (nested: the larger radius).
    pub fn total_width(&self, eps: f64) -> f64 {
        let w = self.width.eval(eps);
        match self.inner {
            Some(r2) => w.max(r2.eval(eps)),
            None => w,
        }
    }

    pub fn nested_regime(&self) -> Option<NestedRegime> {
        let r2 = self.inner?;
        Some(if self.width.exp < r2.exp {
            // r2 = eps^p2 with larger exponent shrinks faster
            NestedRegime::StiffInside
        } else if self.width.exp > r2.exp {
            NestedRegime::SoftInside
        } else {
            NestedRegime::Equal
        })
    }
}

/// An eps-parameterized layered profile with declared limit measures.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredProfile {
    length: f64,
    background: f64,
    features: Vec<Feature>,
}

/// The realized piecewise-constant coefficient `mu_eps` for one eps.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl CoefficientField {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self, MediaError> {
        if breaks.len() < 2
            || breaks.windows(2).any(|w| w[0] >= w[1])
            || values.len() + 1 != breaks.len()
        {
            return Err(MediaError::BadLength);
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(MediaError::BadBackground);
        }
        Ok(CoefficientField { breaks, values })
    }

    pub fn constant(length: f64, value: f64) -> Result<Self, MediaError> {
        CoefficientField::new(vec![0.0, length], vec![value])
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn length(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let idx = self.breaks[1..].partition_point(|&t| t <= x);
        self.values[idx.min(self.values.len() - 1)]
    }

    /// `nu_eps = mu_eps^{-1} L^1`, `m_eps = mu_eps L^1` (both atom-free).
    pub fn empirical_measures(&self) -> MeasurePair {
        let length = self.length();
        let inv: Vec<f64> = self.values.iter().map(|v| 1.0 / v).collect();
        let nu = Measure1D::new(length, self.breaks.clone(), inv, vec![])
            .expect("positive field yields a valid measure");
        let m = Measure1D::new(length, self.breaks.clone(), self.values.clone(), vec![])
            .expect("positive field yields a valid measure");
        MeasurePair::new(nu, m)
    }
}

/// Declared limit of a profile, with the hypothesis violations flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitInfo {
    pub pair: MeasurePair,
    /// Indices of features whose declared limit puts an atom in both
    /// measures at the same location (the nested kind).
    pub common_atom_features: Vec<usize>,
    /// Regime of each nested feature, by feature index.
    pub nested_regimes: Vec<(usize, NestedRegime)>,
}

impl LayeredProfile {
    pub fn new(length: f64, background: f64, features: Vec<Feature>) -> Result<Self, MediaError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(MediaError::BadLength);
        }
        if !(background.is_finite() && background > 0.0) {
            return Err(MediaError::BadBackground);
        }
        for (index, f) in features.iter().enumerate() {
            let c = f.center.to_f64();
            if c <= 0.0 || c >= length {
                return Err(MediaError::BadCenters);
            }
            if !(f.width.coef > 0.0 && f.width.exp > 0.0) {
                return Err(MediaError::BadWidthRule {
                    index,
                    center: f.center,
                });
            }
            match f.kind {
                FeatureKind::Soft if !(f.value.coef > 0.0 && f.value.exp > 0.0) => {
                    return Err(MediaError::BadValueRule { index });
                }
                FeatureKind::Stiff if !(f.value.coef > 0.0 && f.value.exp < 0.0) => {
                    return Err(MediaError::BadValueRule { index });
                }
                FeatureKind::Nested => {
                    let inner = f.inner.ok_or(MediaError::BadValueRule { index })?;
                    if !(inner.coef > 0.0 && inner.exp > 0.0) {
                        return Err(MediaError::BadValueRule { index });
                    }
                }
                _ => {}
            }
        }
        let mut centers: Vec<Exact> = features.iter().map(|f| f.center).collect();
        centers.sort();
        if centers.windows(2).any(|w| w[0] == w[1]) {
            return Err(MediaError::BadCenters);
        }
        Ok(LayeredProfile {
            length,
            background,
            features,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    /// Realize the piecewise-constant field at one eps. Fails when feature
    /// intervals overlap or leave the domain at this eps.
    pub fn realize(&self, eps: f64) -> Result<CoefficientField, MediaError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(MediaError::BadEps(eps));
        }
        let mut spans: Vec<(f64, f64, usize)> = Vec::new();
        for (index, f) in self.features.iter().enumerate() {
            let half = 0.5 * f.total_width(eps);
            let c = f.center.to_f64();
            let (lo, hi) = (c - half, c + half);
            if lo <= 0.0 || hi >= self.length {
                return Err(MediaError::OutsideDomain { index, eps });
            }
            spans.push((lo, hi, index));
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in spans.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(MediaError::Overlap {
                    first: w[0].2,
                    second: w[1].2,
                    eps,
                });
            }
        }

        let mut breaks = vec![0.0];
        let mut values = Vec::new();
        for (lo, hi, index) in &spans {
            let f = &self.features[*index];
            values.push(self.background);
            breaks.push(*lo);
            match f.kind {
                FeatureKind::Soft | FeatureKind::Stiff => {
                    values.push(f.value.eval(eps));
                    breaks.push(*hi);
                }
                FeatureKind::Nested => {
                    // mu = r1 1_{I1} + (1/r2) 1_{I2} on concentric intervals;
                    // the overlap carries the sum of both terms.
                    let c = f.center.to_f64();
                    let r1 = f.width.eval(eps);
                    let r2 = f.inner.expect("validated").eval(eps);
                    let soft = r1;
                    let stiff = 1.0 / r2;
                    let (outer_val, inner_half) = if r1 >= r2 {
                        (soft, 0.5 * r2)
                    } else {
                        (stiff, 0.5 * r1)
                    };
                    if r1 == r2 {
                        values.push(soft + stiff);
                        breaks.push(*hi);
                    } else {
                        values.push(outer_val);
                        breaks.push(c - inner_half);
                        values.push(soft + stiff);
                        breaks.push(c + inner_half);
                        values.push(outer_val);
                        breaks.push(*hi);
                    }
                }
            }
        }
        values.push(self.background);
        breaks.push(self.length);
        CoefficientField::new(breaks, values)
    }

    /// Declared limit measures. Soft layers contribute `nu`-atoms, stiff
    /// layers `m`-atoms, the background contributes the densities `1/b` and
    /// `b`; nested features declare an atom in both (flagged).
    pub fn limit_measures(&self) -> Result<LimitInfo, MediaError> {
        let mut nu_atoms: Vec<Atom> = Vec::new();
        let mut m_atoms: Vec<Atom> = Vec::new();
        let mut common = Vec::new();
        let mut regimes = Vec::new();
        for (index, f) in self.features.iter().enumerate() {
            match f.kind {
                FeatureKind::Soft => {
                    // int_layer mu^{-1} = (c_w/c_v) eps^{p_w - p_v}
                    let gap = f.width.exp - f.value.exp;
                    if gap < 0.0 {
                        return Err(MediaError::Unbounded {
                            index,
                            which: "mu^{-1}",
                        });
                    }
                    if gap == 0.0 {
                        nu_atoms.push(Atom {
                            location: f.center,
                            mass: f.width.coef / f.value.coef,
                        });
                    }
                }
                FeatureKind::Stiff => {
                    // int_layer mu = c_w c_v eps^{p_w + p_v}, p_v < 0
                    let gap = f.width.exp + f.value.exp;
                    if gap < 0.0 {
                        return Err(MediaError::Unbounded { index, which: "mu" });
                    }
                    if gap == 0.0 {
                        m_atoms.push(Atom {
                            location: f.center,
                            mass: f.width.coef * f.value.coef,
                        });
                    }
                }
                FeatureKind::Nested => {
                    // width = value for the soft part and value = 1/width for
                    // the stiff part, so both declared masses are 1.
                    nu_atoms.push(Atom {
                        location: f.center,
                        mass: 1.0,
                    });
                    m_atoms.push(Atom {
                        location: f.center,
                        mass: 1.0,
                    });
                    common.push(index);
                    regimes.push((index, f.nested_regime().expect("nested")));
                }
            }
        }
        nu_atoms.sort_by_key(|a| a.location);
        m_atoms.sort_by_key(|a| a.location);
        let nu = Measure1D::lebesgue(self.length, 1.0 / self.background)?.with_atoms(nu_atoms)?;
        let m = Measure1D::lebesgue(self.length, self.background)?.with_atoms(m_atoms)?;
        Ok(LimitInfo {
            pair: MeasurePair::new(nu, m),
            common_atom_features: common,
            nested_regimes: regimes,
        })
    }

    /// Compare the empirical CDFs `nu_eps([0,x])`, `m_eps([0,x])` with the
    /// declared limits on a sample grid, excluding a collar of the realized
    /// layer width around each atom.
    pub fn verify_limits(&self, eps_list: &[f64]) -> Result<VerifyLimitsReport, MediaError> {
        let info = self.limit_measures()?;
        let n_samples = 101;
        let mut rows = Vec::with_capacity(eps_list.len());
        for &eps in eps_list {
            let field = self.realize(eps)?;
            let pair = field.empirical_measures();
            let mut nu_sup: f64 = 0.0;
            let mut m_sup: f64 = 0.0;
            let collar: Vec<(f64, f64)> = self
                .features
                .iter()
                .map(|f| (f.center.to_f64(), f.total_width(eps)))
                .collect();
            for k in 0..=n_samples {
                let x = self.length * k as f64 / n_samples as f64;
                if collar.iter().any(|(c, w)| (x - c).abs() <= *w) {
                    continue;
                }
                let nu_err = (pair.nu.cdf(x).unwrap() - info.pair.nu.cdf(x).unwrap()).abs();
                let m_err = (pair.m.cdf(x).unwrap() - info.pair.m.cdf(x).unwrap()).abs();
                nu_sup = nu_sup.max(nu_err);
                m_sup = m_sup.max(m_err);
            }
            rows.push(VerifyLimitsRow {
                eps,
                nu_discrepancy: nu_sup,
                m_discrepancy: m_sup,
            });
        }
        Ok(VerifyLimitsReport { rows })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyLimitsRow {
    pub eps: f64,
    pub nu_discrepancy: f64,
    pub m_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyLimitsReport {
    pub rows: Vec<VerifyLimitsRow>,
}

impl VerifyLimitsReport {
    /// Discrepancies never increase along the sweep and end below `tol`.
    pub fn converged(&self, tol: f64) -> bool {
        let ok = |get: fn(&VerifyLimitsRow) -> f64| {
            self.rows.windows(2).all(|w| get(&w[1]) <= get(&w[0]) + 1e-14)
                && self.rows.last().is_some_and(|r| get(r) <= tol)
        };
        ok(|r| r.nu_discrepancy) && ok(|r| r.m_discrepancy)
    }
}
