//! Polynomials and piecewise polynomials on an interval.
//!
//! This is the quadrature backbone: integrals of piecewise polynomials
//! against piecewise-constant densities are evaluated through closed-form
//! antiderivatives, so no numerical quadrature error enters the 1-D oracles.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("breakpoints must be strictly increasing")]
    BadBreakpoints,
    #[error("need one piece per breakpoint interval: {pieces} pieces for {intervals} intervals")]
    PieceCount { pieces: usize, intervals: usize },
    #[error("point {0} outside the domain")]
    OutOfDomain(f64),
    #[error("exact |p| integration implemented for degree <= 2, got degree {0}")]
    DegreeTooHigh(usize),
}

/// Dense polynomial, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }

    /// `a + b x`
    pub fn linear(a: f64, b: f64) -> Self {
        Poly::new(vec![a, b])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(k, c)| (k + 1) as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Poly {
        let mut coeffs = vec![0.0];
        coeffs.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c / (k + 1) as f64),
        );
        Poly::new(coeffs)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let anti = self.antiderivative();
        anti.eval(b) - anti.eval(a)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = vec![0.0; n];
        for (k, c) in self.coeffs.iter().enumerate() {
            coeffs[k] += c;
        }
        for (k, c) in other.coeffs.iter().enumerate() {
            coeffs[k] += c;
        }
        Poly::new(coeffs)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut coeffs = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Poly::new(coeffs)
    }

    /// Real roots inside `(a, b)`, ascending. Exact for degree <= 2.
    pub fn roots_in(&self, a: f64, b: f64) -> Result<Vec<f64>, PolyError> {
        let mut roots = match self.coeffs.len() {
            0 | 1 => vec![],
            2 => vec![-self.coeffs[0] / self.coeffs[1]],
            3 => {
                let (c, bb, aa) = (self.coeffs[0], self.coeffs[1], self.coeffs[2]);
                let disc = bb * bb - 4.0 * aa * c;
                if disc < 0.0 {
                    vec![]
                } else {
                    let sq = disc.sqrt();
                    // numerically stable pair
                    let q = -0.5 * (bb + bb.signum() * sq);
                    let mut r = if q != 0.0 {
                        vec![q / aa, c / q]
                    } else {
                        vec![0.0]
                    };
                    r.sort_by(f64::total_cmp);
                    r.dedup();
                    r
                }
            }
            n => return Err(PolyError::DegreeTooHigh(n - 1)),
        };
        roots.retain(|r| *r > a && *r < b);
        roots.sort_by(f64::total_cmp);
        Ok(roots)
    }

    /// Exact integral of `|p|` over `[a, b]` (degree <= 2): split at the
    /// real roots and sum the absolute signed integrals.
    pub fn abs_integral(&self, a: f64, b: f64) -> Result<f64, PolyError> {
        let mut cuts = vec![a];
        cuts.extend(self.roots_in(a, b)?);
        cuts.push(b);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += self.integral(w[0], w[1]).abs();
        }
        Ok(total)
    }

    /// Maximum of `|p|` over `[a, b]` (checks endpoints and interior
    /// critical points; exact for degree <= 3).
    pub fn max_abs_on(&self, a: f64, b: f64) -> Result<f64, PolyError> {
        let mut best = self.eval(a).abs().max(self.eval(b).abs());
        for r in self.derivative().roots_in(a, b)? {
            best = best.max(self.eval(r).abs());
        }
        Ok(best)
    }
}

/// Piecewise polynomial on `[breaks[0], breaks[last]]`. Piece `k` lives on
/// `[breaks[k], breaks[k+1])`; the last piece is closed on the right.
/// Values at interior breakpoints are taken from the right piece.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    breaks: Vec<f64>,
    pieces: Vec<Poly>,
}

impl PiecewisePoly {
    pub fn new(breaks: Vec<f64>, pieces: Vec<Poly>) -> Result<Self, PolyError> {
        if breaks.len() < 2 || breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PolyError::BadBreakpoints);
        }
        if pieces.len() + 1 != breaks.len() {
            return Err(PolyError::PieceCount {
                pieces: pieces.len(),
                intervals: breaks.len() - 1,
            });
        }
        Ok(PiecewisePoly { breaks, pieces })
    }

    pub fn constant_pieces(breaks: Vec<f64>, values: &[f64]) -> Result<Self, PolyError> {
        let pieces = values.iter().map(|v| Poly::constant(*v)).collect();
        PiecewisePoly::new(breaks, pieces)
    }

    pub fn constant(a: f64, b: f64, value: f64) -> Self {
        PiecewisePoly::new(vec![a, b], vec![Poly::constant(value)]).expect("valid interval")
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[Poly] {
        &self.pieces
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().unwrap())
    }

    pub fn piece_index(&self, x: f64) -> Result<usize, PolyError> {
        let (a, b) = self.domain();
        if x < a || x > b {
            return Err(PolyError::OutOfDomain(x));
        }
        // partition_point: first k with breaks[k+1] > x, clamped to last piece
        let idx = self.breaks[1..].partition_point(|&t| t <= x);
        Ok(idx.min(self.pieces.len() - 1))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.piece_index(x).expect("x inside domain");
        self.pieces[k].eval(x)
    }

    /// Continuous antiderivative `F` with `F(domain start) = 0`.
    pub fn antiderivative(&self) -> PiecewisePoly {
        let mut pieces = Vec::with_capacity(self.pieces.len());
        let mut offset = 0.0;
        for (k, p) in self.pieces.iter().enumerate() {
            let anti = p.antiderivative();
            let shift = offset - anti.eval(self.breaks[k]);
            pieces.push(anti.add(&Poly::constant(shift)));
            offset = pieces[k].eval(self.breaks[k + 1]);
        }
        PiecewisePoly {
            breaks: self.breaks.clone(),
            pieces,
        }
    }

    pub fn integral(&self, a: f64, b: f64) -> Result<f64, PolyError> {
        self.fold_pieces(a, b, |p, lo, hi| Ok(p.integral(lo, hi)))
    }

    pub fn abs_integral(&self, a: f64, b: f64) -> Result<f64, PolyError> {
        self.fold_pieces(a, b, |p, lo, hi| p.abs_integral(lo, hi))
    }

    fn fold_pieces(
        &self,
        a: f64,
        b: f64,
        f: impl Fn(&Poly, f64, f64) -> Result<f64, PolyError>,
    ) -> Result<f64, PolyError> {
        let (lo, hi) = self.domain();
        if a < lo || b > hi || a > b {
            return Err(PolyError::OutOfDomain(if a < lo { a } else { b }));
        }
        if a == b {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (k, p) in self.pieces.iter().enumerate() {
            let seg_a = self.breaks[k].max(a);
            let seg_b = self.breaks[k + 1].min(b);
            if seg_a < seg_b {
                total += f(p, seg_a, seg_b)?;
            }
        }
        Ok(total)
    }

    /// Pointwise combination on the merged breakpoint set.
    pub fn combine(&self, other: &PiecewisePoly, f: impl Fn(&Poly, &Poly) -> Poly) -> PiecewisePoly {
        let mut breaks: Vec<f64> = self
            .breaks
            .iter()
            .chain(other.breaks.iter())
            .copied()
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut pieces = Vec::with_capacity(breaks.len() - 1);
        for w in breaks.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let pa = &self.pieces[self.piece_index(mid).expect("merged domain")];
            let pb = &other.pieces[other.piece_index(mid).expect("merged domain")];
            pieces.push(f(pa, pb));
        }
        PiecewisePoly { breaks, pieces }
    }

    pub fn sub(&self, other: &PiecewisePoly) -> PiecewisePoly {
        self.combine(other, |a, b| a.sub(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_integral() {
        let p = Poly::new(vec![1.0, 2.0, 3.0]); // 1 + 2x + 3x^2
        assert_eq!(p.eval(2.0), 17.0);
        assert!((p.integral(0.0, 1.0) - 3.0).abs() < 1e-15);
        assert_eq!(p.derivative(), Poly::new(vec![2.0, 6.0]));
    }

    #[test]
    fn abs_integral_splits_at_roots() {
        // x on [-1, 1]: integral of |x| = 1
        let p = Poly::linear(0.0, 1.0);
        assert!((p.abs_integral(-1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        // x^2 - 1/4 on [0,1]: root at 1/2; int |q| = 1/12 + 1/6 = 1/4
        let q = Poly::new(vec![-0.25, 0.0, 1.0]);
        assert!((q.abs_integral(0.0, 1.0).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn piecewise_antiderivative_is_continuous() {
        let f = PiecewisePoly::constant_pieces(vec![0.0, 0.5, 1.0], &[1.0, 3.0]).unwrap();
        let big_f = f.antiderivative();
        assert!((big_f.eval(0.5) - 0.5).abs() < 1e-15);
        assert!((big_f.eval(1.0) - 2.0).abs() < 1e-15);
        assert!((big_f.eval(0.75) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn piece_lookup_is_right_continuous() {
        let f = PiecewisePoly::constant_pieces(vec![0.0, 0.5, 1.0], &[1.0, 3.0]).unwrap();
        assert_eq!(f.eval(0.5), 3.0);
        assert_eq!(f.eval(1.0), 3.0);
        assert_eq!(f.eval(0.0), 1.0);
    }

    #[test]
    fn combine_merges_breakpoints() {
        let f = PiecewisePoly::constant_pieces(vec![0.0, 0.5, 1.0], &[1.0, 2.0]).unwrap();
        let g = PiecewisePoly::constant_pieces(vec![0.0, 0.25, 1.0], &[10.0, 20.0]).unwrap();
        let d = g.sub(&f);
        assert_eq!(d.breaks(), &[0.0, 0.25, 0.5, 1.0]);
        assert_eq!(d.eval(0.1), 9.0);
        assert_eq!(d.eval(0.3), 19.0);
        assert_eq!(d.eval(0.7), 18.0);
    }
}
