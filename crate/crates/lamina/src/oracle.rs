//! Closed-form 1-D solutions used as exact ground truth.
//!
//! For the scalar problem on `(0, L)` with Dirichlet ends, flux balance
//! gives `sigma(x) = sigma0 - F(x)` with `F' = f`, and the solution is the
//! measure primitive `u(x) = int_(0,x] (sigma0 - F) d nu`, where `nu` is
//! either the empirical measure `mu^{-1} dx` of a realized field (fine
//! scale) or a limit measure with atoms. `sigma0` is fixed by `u(L) = 0`.
//! Everything is piecewise polynomial and integrated in closed form.

use crate::measures::{Measure1D, MeasureError};
use crate::media::CoefficientField;
use crate::poly::{PiecewisePoly, Poly, PolyError};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("source must live on the measure domain [0, {expected}], got [{got_lo}, {got_hi}]")]
    DomainMismatch {
        expected: f64,
        got_lo: f64,
        got_hi: f64,
    },
    #[error("solutions live on different domains ({0} vs {1})")]
    LengthMismatch(f64, f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Exact piecewise-quadratic solution with jumps at the `nu`-atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSolution1D {
    u: PiecewisePoly,
    /// `(location, jump)` per atom; `u` is right-continuous there.
    jumps: Vec<(f64, f64)>,
    sigma0: f64,
    flux: PiecewisePoly,
    /// `int (sigma0 - F)^2 d nu = int mu |u'|^2 dx`
    energy: f64,
}

impl PiecewiseSolution1D {
    pub fn length(&self) -> f64 {
        self.u.domain().1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.u.eval(x)
    }

    pub fn as_piecewise(&self) -> &PiecewisePoly {
        &self.u
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    /// Flux `sigma(x) = sigma0 - F(x)`; continuous across atoms.
    pub fn flux(&self, x: f64) -> f64 {
        self.flux.eval(x)
    }

    pub fn jumps(&self) -> &[(f64, f64)] {
        &self.jumps
    }

    pub fn jump_at(&self, location: f64) -> f64 {
        self.jumps
            .iter()
            .find(|(t, _)| *t == location)
            .map_or(0.0, |(_, j)| *j)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `u(b) - u(a)`; with `a`, `b` off atoms this is the rise across
    /// `(a, b]`.
    pub fn rise_over(&self, a: f64, b: f64) -> f64 {
        self.u.eval(b) - self.u.eval(a)
    }

    pub fn end_value(&self) -> f64 {
        let (_, l) = self.u.domain();
        self.u.eval(l)
    }
}

/// Norms for [`compare_1d`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm1D {
    L1,
    L2,
    /// Sup norm excluding a collar of the given radius around every atom of
    /// either solution.
    LinfOffAtoms { collar: f64 },
}

/// Solve the limit problem for a measure `nu` (atoms allowed) and a
/// piecewise-constant source.
pub fn solve_limit_1d(
    nu: &Measure1D,
    f: &PiecewisePoly,
) -> Result<PiecewiseSolution1D, OracleError> {
    let length = nu.length();
    let (flo, fhi) = f.domain();
    if flo != 0.0 || fhi != length {
        return Err(OracleError::DomainMismatch {
            expected: length,
            got_lo: flo,
            got_hi: fhi,
        });
    }
    let big_f = f.antiderivative();
    let sigma0 = nu.integrate(&big_f)? / nu.total_mass();
    // sigma = sigma0 - F, piecewise linear and continuous
    let sigma = PiecewisePoly::constant(0.0, length, sigma0).sub(&big_f);

    // breakpoints: density pieces, source pieces, atoms
    let mut breaks: Vec<f64> = nu
        .density_breaks()
        .iter()
        .chain(sigma.breaks())
        .copied()
        .collect();
    breaks.extend(nu.atoms().iter().map(|a| a.location.to_f64()));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut polys = Vec::with_capacity(breaks.len() - 1);
    let mut jumps = Vec::with_capacity(nu.atoms().len());
    let mut value = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // atom exactly at the left break enters the piece (right-continuity)
        for atom in nu.atoms() {
            if atom.location.to_f64() == lo {
                let jump = atom.mass * sigma.eval(lo);
                jumps.push((lo, jump));
                value += jump;
            }
        }
        let mid = 0.5 * (lo + hi);
        let rho = nu.density_at(mid);
        let sigma_piece = &sigma.pieces()[sigma.piece_index(mid)?];
        let anti = sigma_piece.antiderivative().scale(rho);
        let piece = anti.add(&Poly::constant(value - anti.eval(lo)));
        value = piece.eval(hi);
        polys.push(piece);
    }

    let u = PiecewisePoly::new(breaks, polys)?;
    let sigma_sq = sigma.combine(&sigma, |a, b| a.mul(b));
    let energy = nu.integrate(&sigma_sq)?;
    Ok(PiecewiseSolution1D {
        u,
        jumps,
        sigma0,
        flux: sigma,
        energy,
    })
}

/// Solve the fine-scale problem for a realized coefficient field, working
/// directly on the field pieces. Must coincide with
/// `solve_limit_1d(empirical nu, f)`; keeping the two routes separate is an
/// internal consistency check.
pub fn solve_eps_1d(
    field: &CoefficientField,
    f: &PiecewisePoly,
) -> Result<PiecewiseSolution1D, OracleError> {
    let length = field.length();
    let (flo, fhi) = f.domain();
    if flo != 0.0 || fhi != length {
        return Err(OracleError::DomainMismatch {
            expected: length,
            got_lo: flo,
            got_hi: fhi,
        });
    }
    let big_f = f.antiderivative();
    let inv_mu: Vec<f64> = field.values().iter().map(|v| 1.0 / v).collect();
    let rho = PiecewisePoly::constant_pieces(field.breaks().to_vec(), &inv_mu)?;
    // sigma0 = int F mu^{-1} dx / int mu^{-1} dx
    let weighted = rho.combine(&big_f, |r, p| r.mul(p));
    let mass = rho.integral(0.0, length)?;
    let sigma0 = weighted.integral(0.0, length)? / mass;
    let sigma = PiecewisePoly::constant(0.0, length, sigma0).sub(&big_f);

    // u' = sigma / mu piecewise; integrate piece by piece
    let du = rho.combine(&sigma, |r, s| r.mul(s));
    let mut value = 0.0;
    let mut polys = Vec::with_capacity(du.pieces().len());
    let breaks = du.breaks().to_vec();
    for (k, piece) in du.pieces().iter().enumerate() {
        let lo = breaks[k];
        let anti = piece.antiderivative();
        let shifted = anti.add(&Poly::constant(value - anti.eval(lo)));
        value = shifted.eval(breaks[k + 1]);
        polys.push(shifted);
    }
    let u = PiecewisePoly::new(breaks, polys)?;
    let sigma_sq_rho = du.combine(&sigma, |d, s| d.mul(s));
    let energy = sigma_sq_rho.integral(0.0, length)?;
    Ok(PiecewiseSolution1D {
        u,
        jumps: vec![],
        sigma0,
        flux: sigma,
        energy,
    })
}

/// Exact norm of the difference of two solutions.
pub fn compare_1d(
    a: &PiecewiseSolution1D,
    b: &PiecewiseSolution1D,
    norm: Norm1D,
) -> Result<f64, OracleError> {
    if a.length() != b.length() {
        return Err(OracleError::LengthMismatch(a.length(), b.length()));
    }
    let diff = a.u.sub(&b.u);
    let (lo, hi) = diff.domain();
    match norm {
        Norm1D::L1 => Ok(diff.abs_integral(lo, hi)?),
        Norm1D::L2 => {
            let sq = diff.combine(&diff, |p, q| p.mul(q));
            Ok(sq.integral(lo, hi)?.max(0.0).sqrt())
        }
        Norm1D::LinfOffAtoms { collar } => {
            let atoms: Vec<f64> = a
                .jumps
                .iter()
                .chain(b.jumps.iter())
                .map(|(t, _)| *t)
                .collect();
            let mut sup: f64 = 0.0;
            for (k, piece) in diff.pieces().iter().enumerate() {
                let (plo, phi) = (diff.breaks()[k], diff.breaks()[k + 1]);
                let clipped_lo = atoms
                    .iter()
                    .filter(|t| plo >= **t - collar && plo <= **t + collar)
                    .fold(plo, |acc, t| acc.max(t + collar));
                let clipped_hi = atoms
                    .iter()
                    .filter(|t| phi >= **t - collar && phi <= **t + collar)
                    .fold(phi, |acc, t| acc.min(t - collar));
                if clipped_lo < clipped_hi {
                    sup = sup.max(piece.max_abs_on(clipped_lo, clipped_hi)?);
                }
            }
            Ok(sup)
        }
    }
}

/// Piecewise-constant source on `[0, length]`.
pub fn constant_source(length: f64, value: f64) -> PiecewisePoly {
    PiecewisePoly::constant(0.0, length, value)
}
