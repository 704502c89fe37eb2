//! Finite positive Radon measures on `[0, L]` with piecewise-constant
//! density and finitely many atoms.
//!
//! This class (no Cantor part) is exactly the one for which the limit
//! problem admits a strong, discretizable form, and it is closed under the
//! layered-media constructions of [`crate::media`].

use crate::exact::Exact;
use crate::poly::{PiecewisePoly, PolyError};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("domain length must be positive, got {0}")]
    BadLength(f64),
    #[error("density breakpoints must start at 0, end at L and increase strictly")]
    BadBreakpoints,
    #[error("need one density value per interval ({intervals}), got {values}")]
    DensityCount { values: usize, intervals: usize },
    #[error("density values must be nonnegative")]
    NegativeDensity,
    #[error("atom at {0} lies outside the open interval (0, L)")]
    AtomOutOfRange(Exact),
    #[error("atoms must be sorted with pairwise distinct locations")]
    AtomsUnsorted,
    #[error("atom masses must be positive")]
    NonPositiveAtomMass,
    #[error("total mass must be positive and finite")]
    DegenerateMass,
    #[error("interval [{a}, {b}] out of range or reversed (domain [0, {length}])")]
    BadInterval { a: f64, b: f64, length: f64 },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// A point mass. The location is exact; see [`crate::exact`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: Exact,
    pub mass: f64,
}

/// Piecewise-constant density plus a finite sorted atom list on `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure1D {
    length: f64,
    breaks: Vec<f64>,
    densities: Vec<f64>,
    atoms: Vec<Atom>,
}

impl Measure1D {
    pub fn new(
        length: f64,
        breaks: Vec<f64>,
        densities: Vec<f64>,
        atoms: Vec<Atom>,
    ) -> Result<Self, MeasureError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(MeasureError::BadLength(length));
        }
        if breaks.first() != Some(&0.0)
            || breaks.last() != Some(&length)
            || breaks.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(MeasureError::BadBreakpoints);
        }
        if densities.len() + 1 != breaks.len() {
            return Err(MeasureError::DensityCount {
                values: densities.len(),
                intervals: breaks.len() - 1,
            });
        }
        if densities.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(MeasureError::NegativeDensity);
        }
        for w in atoms.windows(2) {
            if w[0].location >= w[1].location {
                return Err(MeasureError::AtomsUnsorted);
            }
        }
        for a in &atoms {
            let t = a.location.to_f64();
            // endpoint atoms carry no mass in the admissible class
            if t <= 0.0 || t >= length {
                return Err(MeasureError::AtomOutOfRange(a.location));
            }
            if !(a.mass.is_finite() && a.mass > 0.0) {
                return Err(MeasureError::NonPositiveAtomMass);
            }
        }
        let m = Measure1D {
            length,
            breaks,
            densities,
            atoms,
        };
        let total = m.total_mass();
        if !(total.is_finite() && total > 0.0) {
            return Err(MeasureError::DegenerateMass);
        }
        Ok(m)
    }

    /// Lebesgue measure scaled by `density` on `(0, length)`.
    pub fn lebesgue(length: f64, density: f64) -> Result<Self, MeasureError> {
        Measure1D::new(length, vec![0.0, length], vec![density], vec![])
    }

    pub fn with_atoms(self, atoms: Vec<Atom>) -> Result<Self, MeasureError> {
        Measure1D::new(self.length, self.breaks, self.densities, atoms)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn density_breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density_at(&self, x: f64) -> f64 {
        let idx = self.breaks[1..].partition_point(|&t| t <= x);
        self.densities[idx.min(self.densities.len() - 1)]
    }

    pub fn atom_mass_at(&self, location: Exact) -> f64 {
        self.atoms
            .iter()
            .find(|a| a.location == location)
            .map_or(0.0, |a| a.mass)
    }

    /// Density as a piecewise-constant function (atoms not represented).
    pub fn density_fn(&self) -> PiecewisePoly {
        PiecewisePoly::constant_pieces(self.breaks.clone(), &self.densities)
            .expect("measure invariants imply valid pieces")
    }

    pub fn total_mass(&self) -> f64 {
        let density: f64 = self
            .densities
            .iter()
            .zip(self.breaks.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum();
        density + self.atoms.iter().map(|a| a.mass).sum::<f64>()
    }

    /// Measure of `(a, b)` or `(a, b]`. The left end is always open; an atom
    /// exactly at `a` is never counted, an atom at `b` only when
    /// `closed_right`. Additive over adjacent intervals with the closed flag.
    pub fn mass_of_interval(&self, a: f64, b: f64, closed_right: bool) -> Result<f64, MeasureError> {
        if !(0.0 <= a && a <= b && b <= self.length) {
            return Err(MeasureError::BadInterval {
                a,
                b,
                length: self.length,
            });
        }
        let mut mass = 0.0;
        for (d, w) in self.densities.iter().zip(self.breaks.windows(2)) {
            let lo = w[0].max(a);
            let hi = w[1].min(b);
            if lo < hi {
                mass += d * (hi - lo);
            }
        }
        for atom in &self.atoms {
            let t = atom.location.to_f64();
            if t > a && (t < b || (closed_right && t == b)) {
                mass += atom.mass;
            }
        }
        Ok(mass)
    }

    /// Cumulative distribution `x -> mu([0, x])`.
    pub fn cdf(&self, x: f64) -> Result<f64, MeasureError> {
        self.mass_of_interval(0.0, x, true)
    }

    /// Exact integral of a piecewise polynomial against this measure.
    /// `g` must be defined (single-valued) at every atom location.
    pub fn integrate(&self, g: &PiecewisePoly) -> Result<f64, MeasureError> {
        let density_part = self.density_fn().combine(g, |d, p| d.mul(p));
        let (lo, hi) = density_part.domain();
        let mut total = density_part.integral(lo, hi)?;
        for atom in &self.atoms {
            total += atom.mass * g.eval(atom.location.to_f64());
        }
        Ok(total)
    }

    /// Radon-Nikodym derivative of Lebesgue measure with respect to `self`:
    /// `1/density` off atoms, `0` at atoms. The report carries the squared
    /// `L^2_mu` norm and flags the pieces where `L^1 << mu` fails.
    pub fn lebesgue_density_wrt(&self) -> (PiecewisePoly, DensityReport) {
        let mut failing_piece = None;
        let values: Vec<f64> = self
            .densities
            .iter()
            .enumerate()
            .map(|(k, d)| {
                if *d > 0.0 {
                    1.0 / d
                } else {
                    failing_piece.get_or_insert(k);
                    0.0
                }
            })
            .collect();
        let derivative = PiecewisePoly::constant_pieces(self.breaks.clone(), &values)
            .expect("measure invariants imply valid pieces");
        // int |dL1/dmu|^2 dmu = sum len_k / rho_k over density pieces;
        // the atoms contribute 0.
        let l2_norm_sq = self
            .densities
            .iter()
            .zip(self.breaks.windows(2))
            .filter(|(d, _)| **d > 0.0)
            .map(|(d, w)| (w[1] - w[0]) / d)
            .sum();
        let report = DensityReport {
            absolutely_continuous: failing_piece.is_none(),
            failing_piece,
            l2_norm_sq,
        };
        (derivative, report)
    }
}

/// Outcome of [`Measure1D::lebesgue_density_wrt`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    /// Whether `L^1 << mu` holds (every density piece strictly positive).
    pub absolutely_continuous: bool,
    pub failing_piece: Option<usize>,
    /// `int |dL^1/dmu|^2 dmu` over the absolutely continuous pieces.
    pub l2_norm_sq: f64,
}

/// The measure pair `(nu, m)` arising from a layered family.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurePair {
    pub nu: Measure1D,
    pub m: Measure1D,
}

impl MeasurePair {
    pub fn new(nu: Measure1D, m: Measure1D) -> Self {
        MeasurePair { nu, m }
    }

    /// True iff `m({t}) nu({t}) = 0` for every `t`. Endpoint atoms are
    /// already excluded by the type invariant; locations compare exactly.
    pub fn check_no_common_atoms(&self) -> bool {
        no_common_atoms(&self.nu, &self.m)
    }

    /// Both sides of the compatibility inequalities
    /// `int |dL1/dnu|^2 dnu <= m([0,L])` and `int |dL1/dm|^2 dm <= nu([0,L])`
    /// which every admissible limit pair must satisfy.
    pub fn verify_l1nu_inequalities(&self) -> L1NuReport {
        let (_, nu_report) = self.nu.lebesgue_density_wrt();
        let (_, m_report) = self.m.lebesgue_density_wrt();
        let lhs_nu = nu_report.l2_norm_sq;
        let rhs_m_total = self.m.total_mass();
        let lhs_m = m_report.l2_norm_sq;
        let rhs_nu_total = self.nu.total_mass();
        let absolutely_continuous =
            nu_report.absolutely_continuous && m_report.absolutely_continuous;
        let tol = L1NuReport::RELATIVE_TOL;
        let pass = absolutely_continuous
            && lhs_nu <= rhs_m_total * (1.0 + tol)
            && lhs_m <= rhs_nu_total * (1.0 + tol);
        L1NuReport {
            lhs_nu,
            rhs_m_total,
            lhs_m,
            rhs_nu_total,
            absolutely_continuous,
            pass,
        }
    }
}

/// Report of [`MeasurePair::verify_l1nu_inequalities`].
#[derive(Debug, Clone, PartialEq)]
pub struct L1NuReport {
    /// `int |dL1/dnu|^2 dnu`
    pub lhs_nu: f64,
    /// `m([0, L])`
    pub rhs_m_total: f64,
    /// `int |dL1/dm|^2 dm`
    pub lhs_m: f64,
    /// `nu([0, L])`
    pub rhs_nu_total: f64,
    /// Whether `L^1` is absolutely continuous w.r.t. both measures.
    pub absolutely_continuous: bool,
    pub pass: bool,
}

impl L1NuReport {
    pub const RELATIVE_TOL: f64 = 1e-12;
}

fn no_common_atoms(a: &Measure1D, b: &Measure1D) -> bool {
    a.atoms()
        .iter()
        .all(|atom| b.atom_mass_at(atom.location) == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly;

    fn leb_with_atom(t: Exact, mass: f64) -> Measure1D {
        Measure1D::lebesgue(1.0, 1.0)
            .unwrap()
            .with_atoms(vec![Atom { location: t, mass }])
            .unwrap()
    }

    #[test]
    fn invariants_enforced() {
        assert!(Measure1D::lebesgue(0.0, 1.0).is_err());
        assert!(Measure1D::new(1.0, vec![0.0, 1.0], vec![-1.0], vec![]).is_err());
        // endpoint atom forbidden
        let atom = Atom {
            location: Exact::integer(1),
            mass: 1.0,
        };
        assert_eq!(
            Measure1D::lebesgue(1.0, 1.0).unwrap().with_atoms(vec![atom]),
            Err(MeasureError::AtomOutOfRange(Exact::integer(1)))
        );
        // all-zero measure forbidden
        assert_eq!(
            Measure1D::new(1.0, vec![0.0, 1.0], vec![0.0], vec![]),
            Err(MeasureError::DegenerateMass)
        );
    }

    #[test]
    fn mass_of_interval_cases() {
        let nu = leb_with_atom("1/2".parse().unwrap(), 2.0);
        assert_eq!(nu.mass_of_interval(0.0, 1.0, true).unwrap(), 3.0);

        let plain = Measure1D::lebesgue(1.0, 1.0).unwrap();
        assert_eq!(plain.mass_of_interval(0.25, 0.75, false).unwrap(), 0.5);

        // atom-only measure: boundary atom counted only when closed
        let only_atom = Measure1D::new(
            1.0,
            vec![0.0, 1.0],
            vec![0.0],
            vec![Atom {
                location: "1/3".parse().unwrap(),
                mass: 1.0,
            }],
        )
        .unwrap();
        let third = 1.0f64 / 3.0;
        assert_eq!(only_atom.mass_of_interval(0.0, third, false).unwrap(), 0.0);
        assert_eq!(only_atom.mass_of_interval(0.0, third, true).unwrap(), 1.0);

        assert!(plain.mass_of_interval(-0.1, 0.5, true).is_err());
        assert!(plain.mass_of_interval(0.7, 0.5, true).is_err());
    }

    #[test]
    fn integrate_cases() {
        // Lebesgue + atom(1/2, 2), g(x) = x -> 0.5 + 2*0.5 = 1.5
        let nu = leb_with_atom("1/2".parse().unwrap(), 2.0);
        let g = PiecewisePoly::new(vec![0.0, 1.0], vec![Poly::linear(0.0, 1.0)]).unwrap();
        assert!((nu.integrate(&g).unwrap() - 1.5).abs() < 1e-15);

        // zero integrand
        let zero = PiecewisePoly::new(vec![0.0, 1.0], vec![Poly::zero()]).unwrap();
        assert_eq!(nu.integrate(&zero).unwrap(), 0.0);

        // Lebesgue + atom(1/3, 1), g(x) = 5/12 - x -> exact 0
        let nu = leb_with_atom("1/3".parse().unwrap(), 1.0);
        let g = PiecewisePoly::new(vec![0.0, 1.0], vec![Poly::linear(5.0 / 12.0, -1.0)]).unwrap();
        assert!(nu.integrate(&g).unwrap().abs() < 1e-15);
    }

    #[test]
    fn lebesgue_density_cases() {
        let nu = Measure1D::lebesgue(1.0, 1.0).unwrap();
        let (_, report) = nu.lebesgue_density_wrt();
        assert!(report.absolutely_continuous);
        assert!((report.l2_norm_sq - 1.0).abs() < 1e-15);

        let nu2 = Measure1D::lebesgue(1.0, 2.0).unwrap();
        let (deriv, report) = nu2.lebesgue_density_wrt();
        assert_eq!(deriv.eval(0.3), 0.5);
        assert!((report.l2_norm_sq - 0.5).abs() < 1e-15);

        let degenerate = Measure1D::new(
            1.0,
            vec![0.0, 0.5, 1.0],
            vec![0.0, 1.0],
            vec![],
        )
        .unwrap();
        let (_, report) = degenerate.lebesgue_density_wrt();
        assert!(!report.absolutely_continuous);
        assert_eq!(report.failing_piece, Some(0));
    }

    #[test]
    fn l1nu_inequalities_cases() {
        let leb = Measure1D::lebesgue(1.0, 1.0).unwrap();
        let pair = MeasurePair::new(leb.clone(), leb.clone());
        let report = pair.verify_l1nu_inequalities();
        assert!(report.pass);
        assert!((report.lhs_nu - 1.0).abs() < 1e-15);
        assert!((report.rhs_m_total - 1.0).abs() < 1e-15);

        // nu = Lebesgue + atom, m = Lebesgue: equality case still passes
        let pair = MeasurePair::new(leb_with_atom("1/3".parse().unwrap(), 1.0), leb.clone());
        let report = pair.verify_l1nu_inequalities();
        assert!(report.pass);
        assert!((report.lhs_nu - 1.0).abs() < 1e-15);

        // nu = (1/4) Lebesgue cannot arise from any layered family
        let pair = MeasurePair::new(Measure1D::lebesgue(1.0, 0.25).unwrap(), leb);
        let report = pair.verify_l1nu_inequalities();
        assert!(!report.pass);
        assert!((report.lhs_nu - 4.0).abs() < 1e-14);
    }

    #[test]
    fn common_atoms_detected_exactly() {
        let t: Exact = "1/2".parse().unwrap();
        let a = leb_with_atom(t, 1.0);
        let b = leb_with_atom(t, 3.0);
        assert!(!MeasurePair::new(a.clone(), b).check_no_common_atoms());

        let c = leb_with_atom("2/3".parse().unwrap(), 1.0);
        let pair = MeasurePair::new(leb_with_atom("1/3".parse().unwrap(), 1.0), c);
        assert!(pair.check_no_common_atoms());

        let plain = Measure1D::lebesgue(1.0, 1.0).unwrap();
        assert!(MeasurePair::new(plain.clone(), plain).check_no_common_atoms());
    }
}
