//! Constitutive and effective tensor algebra.
//!
//! Two separate code paths, mirroring the two limit theories:
//!
//! * the isotropic elasticity path works on symmetric strains with the
//!   explicit `a_perp` / `a_par` / interface-matrix formulas in terms of the
//!   Lame ratio `l`;
//! * the general system path works on full gradients of an `n`-component
//!   field through a symmetric tensor `C` with invertible normal block
//!   `T_ip = C_{i1p1}`.
//!
//! The two are never asserted equal to each other (no rearrangement exists
//! for fully anisotropic elasticity), but the heat case must agree with the
//! system path at `n = 1`, and the bulk tensor must reproduce the classical
//! laminate formulas; those cross-checks live in the tests.

use crate::measures::MeasurePair;
use nalgebra::{DMatrix, DVector, Matrix2, Matrix3};
use thiserror::Error;

pub type Mat3 = Matrix3<f64>;
pub type Mat2 = Matrix2<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("tensor dimensions must satisfy 1 <= n, d (got n = {n}, d = {d})")]
    BadDims { n: usize, d: usize },
    #[error("coefficient array has wrong length {got}, expected {expected}")]
    BadLength { got: usize, expected: usize },
    #[error("tensor violates the symmetry C_ijpq = C_pqij (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("tensor is not positive semidefinite (smallest eigenvalue ratio {0:.3e})")]
    NotPositive(f64),
    #[error("interface block T = C_i1p1 is singular (condition estimate {0:.3e}); the normal-coupling hypothesis fails")]
    SingularT(f64),
    #[error("matrix must be symmetric positive definite")]
    NotSpd,
    #[error("bulk tensor undefined: nu-density vanishes on piece {piece}")]
    DegenerateBulk { piece: usize },
    #[error("gradient has wrong shape {rows}x{cols}, expected {n}x{d}")]
    BadGradient {
        rows: usize,
        cols: usize,
        n: usize,
        d: usize,
    },
}

/// Lame ratio `l = lambda/mu >= 0`, fixed across the family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicLaw {
    pub l: f64,
}

impl IsotropicLaw {
    pub fn new(l: f64) -> Result<Self, TensorError> {
        if !(l.is_finite() && l >= 0.0) {
            return Err(TensorError::NotPositive(l));
        }
        Ok(IsotropicLaw { l })
    }
}

/// Dense fourth-order tensor acting on `n x d` gradients,
/// `(T G)_ij = sum_pq T_ijpq G_pq`. Storage `[((i d + j) n + p) d + q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    d: usize,
    v: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, d: usize) -> Self {
        Tensor4 {
            n,
            d,
            v: vec![0.0; n * d * n * d],
        }
    }

    pub fn from_entries(n: usize, d: usize, v: Vec<f64>) -> Result<Self, TensorError> {
        if n == 0 || d == 0 {
            return Err(TensorError::BadDims { n, d });
        }
        let expected = n * d * n * d;
        if v.len() != expected {
            return Err(TensorError::BadLength {
                got: v.len(),
                expected,
            });
        }
        Ok(Tensor4 { n, d, v })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, p: usize, q: usize) -> usize {
        ((i * self.d + j) * self.n + p) * self.d + q
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, p: usize, q: usize) -> f64 {
        self.v[self.idx(i, j, p, q)]
    }

    pub fn set(&mut self, i: usize, j: usize, p: usize, q: usize, value: f64) {
        let k = self.idx(i, j, p, q);
        self.v[k] = value;
    }

    /// Gram matrix view: `M[(i d + j), (p d + q)] = T_ijpq`.
    pub fn gram(&self) -> DMatrix<f64> {
        let nd = self.n * self.d;
        DMatrix::from_fn(nd, nd, |r, c| self.v[r * nd + c])
    }

    pub fn from_gram(n: usize, d: usize, gram: &DMatrix<f64>) -> Result<Self, TensorError> {
        let nd = n * d;
        if gram.nrows() != nd || gram.ncols() != nd {
            return Err(TensorError::BadLength {
                got: gram.nrows() * gram.ncols(),
                expected: nd * nd,
            });
        }
        let mut v = vec![0.0; nd * nd];
        for r in 0..nd {
            for c in 0..nd {
                v[r * nd + c] = gram[(r, c)];
            }
        }
        Tensor4::from_entries(n, d, v)
    }

    pub fn apply(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>, TensorError> {
        self.check_shape(g)?;
        let mut out = DMatrix::zeros(self.n, self.d);
        for i in 0..self.n {
            for j in 0..self.d {
                let mut s = 0.0;
                for p in 0..self.n {
                    for q in 0..self.d {
                        s += self.get(i, j, p, q) * g[(p, q)];
                    }
                }
                out[(i, j)] = s;
            }
        }
        Ok(out)
    }

    /// `sum_ijpq T_ijpq G_pq H_ij` (trial `g`, test `h`).
    pub fn contract(&self, g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<f64, TensorError> {
        self.check_shape(g)?;
        self.check_shape(h)?;
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.d {
                for p in 0..self.n {
                    for q in 0..self.d {
                        s += self.get(i, j, p, q) * g[(p, q)] * h[(i, j)];
                    }
                }
            }
        }
        Ok(s)
    }

    pub fn scale(&self, s: f64) -> Tensor4 {
        Tensor4 {
            n: self.n,
            d: self.d,
            v: self.v.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Tensor4) -> Tensor4 {
        assert_eq!((self.n, self.d), (other.n, other.d));
        Tensor4 {
            n: self.n,
            d: self.d,
            v: self
                .v
                .iter()
                .zip(other.v.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        self.v
            .iter()
            .zip(other.v.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check_shape(&self, g: &DMatrix<f64>) -> Result<(), TensorError> {
        if g.nrows() != self.n || g.ncols() != self.d {
            return Err(TensorError::BadGradient {
                rows: g.nrows(),
                cols: g.ncols(),
                n: self.n,
                d: self.d,
            });
        }
        Ok(())
    }
}

/// A validated constitutive tensor for the system path: symmetric, positive
/// semidefinite as a form on `n x d` gradients, with invertible `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTensor {
    tensor: Tensor4,
    /// Strictly elliptic (smallest eigenvalue > 1e-10 of the largest)?
    elliptic: bool,
}

impl SystemTensor {
    pub const ELLIPTICITY_RATIO: f64 = 1e-10;

    pub fn new(n: usize, d: usize, entries: Vec<f64>) -> Result<Self, TensorError> {
        Self::from_tensor(Tensor4::from_entries(n, d, entries)?)
    }

    pub fn from_gram(n: usize, d: usize, gram: &DMatrix<f64>) -> Result<Self, TensorError> {
        Self::from_tensor(Tensor4::from_gram(n, d, gram)?)
    }

    fn from_tensor(tensor: Tensor4) -> Result<Self, TensorError> {
        let gram = tensor.gram();
        let scale = gram.amax().max(1e-300);
        let asym = (&gram - gram.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(TensorError::NotSymmetric(asym));
        }
        let eig = gram.clone().symmetric_eigen().eigenvalues;
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        if min < -Self::ELLIPTICITY_RATIO * max.abs() {
            return Err(TensorError::NotPositive(min / max.abs().max(1e-300)));
        }
        let elliptic = min > Self::ELLIPTICITY_RATIO * max;
        let sys = SystemTensor { tensor, elliptic };
        // fail early when T is singular; callers report it as the violated
        // normal-coupling hypothesis
        sys.invert_t()?;
        Ok(sys)
    }

    /// Isotropic plane/space tensor `C_ijpq = l d_ij d_pq + d_ip d_jq + d_iq d_jp`
    /// acting on full gradients (positive semidefinite, not elliptic).
    pub fn isotropic(law: &IsotropicLaw, d: usize) -> Result<Self, TensorError> {
        let mut t = Tensor4::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                for p in 0..d {
                    for q in 0..d {
                        let mut v = 0.0;
                        if i == j && p == q {
                            v += law.l;
                        }
                        if i == p && j == q {
                            v += 1.0;
                        }
                        if i == q && j == p {
                            v += 1.0;
                        }
                        t.set(i, j, p, q, v);
                    }
                }
            }
        }
        Self::from_tensor(t)
    }

    pub fn n(&self) -> usize {
        self.tensor.n()
    }

    pub fn d(&self) -> usize {
        self.tensor.d()
    }

    pub fn tensor(&self) -> &Tensor4 {
        &self.tensor
    }

    pub fn is_elliptic(&self) -> bool {
        self.elliptic
    }

    /// The `n x n` normal block `T_ip = C_i1p1`.
    pub fn t_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, p| self.tensor.get(i, 0, p, 0))
    }

    fn invert_t(&self) -> Result<DMatrix<f64>, TensorError> {
        let t = self.t_matrix();
        let norm = t.amax().max(1e-300);
        match t.clone().try_inverse() {
            Some(inv) => {
                let cond = norm * inv.amax();
                if !cond.is_finite() || cond > 1e14 {
                    return Err(TensorError::SingularT(cond));
                }
                Ok(inv)
            }
            None => Err(TensorError::SingularT(f64::INFINITY)),
        }
    }
}

/// Effective tensors of one law: `a_perp` (normal energy against `nu`),
/// `a_par` (tangential energy against `m`) and the interface spring matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SysEffective {
    pub a_perp: Tensor4,
    pub a_par: Tensor4,
    pub iface: DMatrix<f64>,
}

/// The effective law driving the limit problem.
#[derive(Debug, Clone, PartialEq)]
pub enum EffectiveLaw {
    /// Isotropic elasticity in d = 3, symmetric-strain energy.
    Iso(IsotropicLaw),
    /// General system (includes the heat case at n = 1), full gradients.
    System(SysEffective),
}

impl EffectiveLaw {
    pub fn n(&self) -> usize {
        match self {
            EffectiveLaw::Iso(_) => 3,
            EffectiveLaw::System(s) => s.a_perp.n(),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            EffectiveLaw::Iso(_) => 3,
            EffectiveLaw::System(s) => s.a_perp.d(),
        }
    }

    /// Spring matrix coupling the two sides of a `nu`-atom plane.
    pub fn iface(&self) -> DMatrix<f64> {
        match self {
            EffectiveLaw::Iso(law) => {
                DMatrix::from_diagonal(&DVector::from_vec(vec![law.l + 2.0, 1.0, 1.0]))
            }
            EffectiveLaw::System(s) => s.iface.clone(),
        }
    }

    /// `a_perp` as a tensor on full gradients (the isotropic formulas are
    /// embedded through the symmetric-strain basis).
    pub fn a_perp_grad(&self) -> Tensor4 {
        match self {
            EffectiveLaw::Iso(law) => iso_a_perp_tensor(law),
            EffectiveLaw::System(s) => s.a_perp.clone(),
        }
    }

    /// `a_par` as a tensor on full gradients; only tangential entries are
    /// nonzero.
    pub fn a_par_grad(&self) -> Tensor4 {
        match self {
            EffectiveLaw::Iso(law) => iso_a_par_tensor(law),
            EffectiveLaw::System(s) => s.a_par.clone(),
        }
    }
}

/// `sigma = l tr(e) I + 2 e`
pub fn iso_stress(law: &IsotropicLaw, e: &Mat3) -> Mat3 {
    Mat3::identity() * (law.l * e.trace()) + e * 2.0
}

/// Normal effective tensor of the isotropic law applied to a symmetric
/// strain.
pub fn iso_a_perp(law: &IsotropicLaw, xi: &Mat3) -> Mat3 {
    let l = law.l;
    let tr = xi.trace();
    let diag_tail = l * l / (l + 2.0) * tr + 2.0 * l / (l + 2.0) * xi[(0, 0)];
    Mat3::new(
        l * tr + 2.0 * xi[(0, 0)],
        2.0 * xi[(0, 1)],
        2.0 * xi[(0, 2)],
        2.0 * xi[(0, 1)],
        diag_tail,
        0.0,
        2.0 * xi[(0, 2)],
        0.0,
        diag_tail,
    )
}

/// Tangential effective tensor applied to a symmetric 2x2 strain on the
/// layer plane (indices 2, 3 of the ambient space).
pub fn iso_a_par(law: &IsotropicLaw, gamma: &Mat2) -> Mat2 {
    let l = law.l;
    Mat2::identity() * (2.0 * l / (l + 2.0) * gamma.trace()) + gamma * 2.0
}

/// Interface spring matrix `diag(l + 2, 1, 1)`.
pub fn iso_interface_matrix(law: &IsotropicLaw) -> Mat3 {
    Mat3::from_diagonal(&nalgebra::Vector3::new(law.l + 2.0, 1.0, 1.0))
}

fn sym_basis(p: usize, q: usize) -> Mat3 {
    let mut m = Mat3::zeros();
    if p == q {
        m[(p, q)] = 1.0;
    } else {
        m[(p, q)] = 0.5;
        m[(q, p)] = 0.5;
    }
    m
}

/// `a_perp` of the isotropic law as a fourth-order tensor on gradients.
pub fn iso_a_perp_tensor(law: &IsotropicLaw) -> Tensor4 {
    let mut t = Tensor4::zeros(3, 3);
    for p in 0..3 {
        for q in 0..3 {
            let image = iso_a_perp(law, &sym_basis(p, q));
            for i in 0..3 {
                for j in 0..3 {
                    t.set(i, j, p, q, image[(i, j)]);
                }
            }
        }
    }
    t
}

/// `a_par` of the isotropic law as a fourth-order tensor on gradients
/// (tangential indices only).
pub fn iso_a_par_tensor(law: &IsotropicLaw) -> Tensor4 {
    let mut t = Tensor4::zeros(3, 3);
    let lam = 2.0 * law.l / (law.l + 2.0);
    for i in 1..3 {
        for j in 1..3 {
            for p in 1..3 {
                for q in 1..3 {
                    let mut v = 0.0;
                    if i == j && p == q {
                        v += lam;
                    }
                    if i == p && j == q {
                        v += 1.0;
                    }
                    if i == q && j == p {
                        v += 1.0;
                    }
                    t.set(i, j, p, q, v);
                }
            }
        }
    }
    t
}

/// Effective tensors of the system path. `a_perp` comes from eliminating
/// the normal derivative through `T^{-1}`; `a_par` is the tangential
/// remainder `C - a_perp` restricted to tangential columns (the sign is
/// fixed by the laminate oracle: a constant medium must homogenize to
/// itself); the interface matrix is `T`.
pub fn sys_effective(c: &SystemTensor) -> Result<SysEffective, TensorError> {
    let (n, d) = (c.n(), c.d());
    let t_inv = c.invert_t()?;
    let ct = c.tensor();
    let mut a_perp = Tensor4::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            for k in 0..n {
                for l in 0..d {
                    let mut s = 0.0;
                    for p in 0..n {
                        for r in 0..n {
                            s += ct.get(i, j, p, 0) * t_inv[(p, r)] * ct.get(r, 0, k, l);
                        }
                    }
                    a_perp.set(i, j, k, l, s);
                }
            }
        }
    }
    let mut a_par = Tensor4::zeros(n, d);
    for i in 0..n {
        for j in 1..d {
            for k in 0..n {
                for l in 1..d {
                    a_par.set(i, j, k, l, ct.get(i, j, k, l) - a_perp.get(i, j, k, l));
                }
            }
        }
    }
    Ok(SysEffective {
        a_perp,
        a_par,
        iface: c.t_matrix(),
    })
}

/// Heat specialization: `A_perp = A e1 (A e1)^T / A_11`,
/// `A_par = (A - A_perp)` restricted to tangential indices. Must agree with
/// [`sys_effective`] at `n = 1` entrywise.
pub fn heat_effective(a: &DMatrix<f64>) -> Result<SysEffective, TensorError> {
    let d = a.nrows();
    if a.ncols() != d || d == 0 {
        return Err(TensorError::NotSpd);
    }
    let scale = a.amax();
    if (a - a.transpose()).amax() > 1e-12 * scale {
        return Err(TensorError::NotSpd);
    }
    if a.clone().cholesky().is_none() {
        return Err(TensorError::NotSpd);
    }
    let a11 = a[(0, 0)];
    let mut a_perp = Tensor4::zeros(1, d);
    let mut a_par = Tensor4::zeros(1, d);
    for j in 0..d {
        for q in 0..d {
            let perp = a[(j, 0)] * a[(0, q)] / a11;
            a_perp.set(0, j, 0, q, perp);
            if j > 0 && q > 0 {
                a_par.set(0, j, 0, q, a[(j, q)] - perp);
            }
        }
    }
    Ok(SysEffective {
        a_perp,
        a_par,
        iface: DMatrix::from_element(1, 1, a11),
    })
}

/// Piecewise-constant bulk tensor `a(x1) = (nu-density)^{-1} a_perp +
/// (m-density) a_par` on the merged density breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct BulkField {
    breaks: Vec<f64>,
    tensors: Vec<Tensor4>,
}

impl BulkField {
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn tensors(&self) -> &[Tensor4] {
        &self.tensors
    }

    pub fn tensor_at(&self, x: f64) -> &Tensor4 {
        let idx = self.breaks[1..].partition_point(|&t| t <= x);
        &self.tensors[idx.min(self.tensors.len() - 1)]
    }
}

pub fn bulk_tensor(pair: &MeasurePair, eff: &EffectiveLaw) -> Result<BulkField, TensorError> {
    let a_perp = eff.a_perp_grad();
    let a_par = eff.a_par_grad();
    let mut breaks: Vec<f64> = pair
        .nu
        .density_breaks()
        .iter()
        .chain(pair.m.density_breaks())
        .copied()
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut tensors = Vec::with_capacity(breaks.len() - 1);
    for (piece, w) in breaks.windows(2).enumerate() {
        let mid = 0.5 * (w[0] + w[1]);
        let nu_density = pair.nu.density_at(mid);
        if nu_density <= 0.0 {
            return Err(TensorError::DegenerateBulk { piece });
        }
        let m_density = pair.m.density_at(mid);
        tensors.push(a_perp.scale(1.0 / nu_density).add(&a_par.scale(m_density)));
    }
    Ok(BulkField { breaks, tensors })
}

/// Both sides of the stress rearrangement for the isotropic law:
/// `sigma(Xi) : Xi'` against the normal/tangential product split.
pub fn rearrangement_identity_iso(law: &IsotropicLaw, xi: &Mat3, xi_p: &Mat3) -> (f64, f64) {
    let l = law.l;
    let s = iso_stress(law, xi);
    let s_p = iso_stress(law, xi_p);
    let lhs = s.dot(xi_p);
    let normal = s[(0, 0)] * s_p[(0, 0)] / (l + 2.0)
        + s[(0, 1)] * s_p[(0, 1)]
        + s[(0, 2)] * s_p[(0, 2)];
    let tangential = 4.0 * xi[(1, 2)] * xi_p[(1, 2)]
        + 4.0 * (l + 1.0) / (l + 2.0) * (xi[(1, 1)] * xi_p[(1, 1)] + xi[(2, 2)] * xi_p[(2, 2)])
        + 2.0 * l / (l + 2.0) * (xi[(1, 1)] * xi_p[(2, 2)] + xi[(2, 2)] * xi_p[(1, 1)]);
    (lhs, normal + tangential)
}

/// Both sides of the gradient rearrangement for the system law:
/// `C G : G'` against normal products plus tangential remainder.
pub fn rearrangement_identity_sys(
    c: &SystemTensor,
    g: &DMatrix<f64>,
    g_p: &DMatrix<f64>,
) -> Result<(f64, f64), TensorError> {
    let t_inv = c.invert_t()?;
    let ct = c.tensor();
    let lhs = ct.contract(g, g_p)?;

    let mut g_t = g.clone();
    let mut g_pt = g_p.clone();
    for i in 0..g.nrows() {
        g_t[(i, 0)] = 0.0;
        g_pt[(i, 0)] = 0.0;
    }
    let normal_col = |m: &DMatrix<f64>| -> Result<DVector<f64>, TensorError> {
        Ok(DVector::from_iterator(
            c.n(),
            ct.apply(m)?.column(0).iter().copied(),
        ))
    };
    let cu = normal_col(g)?;
    let cv = normal_col(g_p)?;
    let cut = normal_col(&g_t)?;
    let cvt = normal_col(&g_pt)?;
    let rhs = (&t_inv * cu).dot(&cv) - (&t_inv * cut).dot(&cvt) + ct.contract(&g_t, &g_pt)?;
    Ok((lhs, rhs))
}

/// Check of the normal and tangential reorganization identities: stress
/// products reduce to `a_perp Xi : Xi'`, strain products to
/// `a_par Gamma : Gamma'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReorgCheck {
    pub normal: (f64, f64),
    pub tangential: (f64, f64),
}

pub fn reorg_identity(law: &IsotropicLaw, xi: &Mat3, xi_p: &Mat3) -> ReorgCheck {
    let l = law.l;
    let s = iso_stress(law, xi);
    let s_p = iso_stress(law, xi_p);
    let normal_lhs = s[(0, 0)] * s_p[(0, 0)] / (l + 2.0)
        + s[(0, 1)] * s_p[(0, 1)]
        + s[(0, 2)] * s_p[(0, 2)];
    let normal_rhs = iso_a_perp(law, xi).dot(xi_p);

    let tangential_lhs = 4.0 * xi[(1, 2)] * xi_p[(1, 2)]
        + 4.0 * (l + 1.0) / (l + 2.0) * (xi[(1, 1)] * xi_p[(1, 1)] + xi[(2, 2)] * xi_p[(2, 2)])
        + 2.0 * l / (l + 2.0) * (xi[(1, 1)] * xi_p[(2, 2)] + xi[(2, 2)] * xi_p[(1, 1)]);
    let gamma = Mat2::new(xi[(1, 1)], xi[(1, 2)], xi[(2, 1)], xi[(2, 2)]);
    let gamma_p = Mat2::new(xi_p[(1, 1)], xi_p[(1, 2)], xi_p[(2, 1)], xi_p[(2, 2)]);
    let tangential_rhs = iso_a_par(law, &gamma).dot(&gamma_p);

    ReorgCheck {
        normal: (normal_lhs, normal_rhs),
        tangential: (tangential_lhs, tangential_rhs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sym3(rng: &mut impl Rng) -> Mat3 {
        let mut m = Mat3::zeros();
        for i in 0..3 {
            for j in i..3 {
                let v = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub(crate) fn random_spd_system(rng: &mut impl Rng, n: usize, d: usize) -> SystemTensor {
        let nd = n * d;
        let r = DMatrix::from_fn(nd, nd, |_, _| rng.random_range(-1.0..1.0));
        let gram = &r * r.transpose() + DMatrix::identity(nd, nd) * 0.5;
        SystemTensor::from_gram(n, d, &gram).expect("constructed SPD")
    }

    #[test]
    fn iso_a_perp_examples() {
        let id = Mat3::identity();
        let l0 = IsotropicLaw::new(0.0).unwrap();
        let out = iso_a_perp(&l0, &id);
        assert_eq!(out, Mat3::from_diagonal(&nalgebra::Vector3::new(2.0, 0.0, 0.0)));

        let l1 = IsotropicLaw::new(1.0).unwrap();
        let out = iso_a_perp(&l1, &id);
        let expected = Mat3::from_diagonal(&nalgebra::Vector3::new(5.0, 5.0 / 3.0, 5.0 / 3.0));
        assert!((out - expected).amax() < 1e-14);

        assert_eq!(iso_a_perp(&l1, &Mat3::zeros()), Mat3::zeros());
    }

    #[test]
    fn iso_a_par_examples() {
        let l0 = IsotropicLaw::new(0.0).unwrap();
        let g = Mat2::new(1.0, 2.0, 2.0, -1.0);
        assert_eq!(iso_a_par(&l0, &g), g * 2.0);

        let l2 = IsotropicLaw::new(2.0).unwrap();
        assert!((iso_a_par(&l2, &Mat2::identity()) - Mat2::identity() * 4.0).amax() < 1e-14);

        assert_eq!(iso_a_par(&l2, &Mat2::zeros()), Mat2::zeros());
    }

    #[test]
    fn iso_interface_matrix_examples() {
        let m = iso_interface_matrix(&IsotropicLaw::new(3.0).unwrap());
        assert_eq!(m[(0, 0)], 5.0);
        assert_eq!(m[(1, 1)], 1.0);
        let m = iso_interface_matrix(&IsotropicLaw::new(0.0).unwrap());
        assert_eq!(m[(0, 0)], 2.0);
        assert!(m.determinant() > 0.0);
    }

    #[test]
    fn rearrangement_iso_hand_value() {
        let l1 = IsotropicLaw::new(1.0).unwrap();
        let id = Mat3::identity();
        let (lhs, rhs) = rearrangement_identity_iso(&l1, &id, &id);
        assert!((lhs - 15.0).abs() < 1e-13);
        assert!((rhs - 15.0).abs() < 1e-13);

        let (lhs, rhs) = rearrangement_identity_iso(&l1, &id, &Mat3::zeros());
        assert_eq!((lhs, rhs), (0.0, 0.0));
    }

    #[test]
    fn rearrangement_iso_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for l in [0.0, 0.3, 1.0, 10.0] {
            let law = IsotropicLaw::new(l).unwrap();
            for _ in 0..1000 {
                let xi = random_sym3(&mut rng);
                let xi_p = random_sym3(&mut rng);
                let (lhs, rhs) = rearrangement_identity_iso(&law, &xi, &xi_p);
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0),
                    "l={l} lhs={lhs} rhs={rhs}"
                );
            }
        }
    }

    #[test]
    fn reorg_identity_hand_value() {
        let l0 = IsotropicLaw::new(0.0).unwrap();
        let id = Mat3::identity();
        let check = reorg_identity(&l0, &id, &id);
        assert!((check.normal.0 - 2.0).abs() < 1e-14);
        assert!((check.normal.1 - 2.0).abs() < 1e-14);

        let zero = reorg_identity(&l0, &id, &Mat3::zeros());
        assert_eq!(zero.normal, (0.0, 0.0));
        assert_eq!(zero.tangential, (0.0, 0.0));
    }

    #[test]
    fn reorg_identity_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for l in [0.0, 0.3, 1.0, 10.0] {
            let law = IsotropicLaw::new(l).unwrap();
            for _ in 0..1000 {
                let xi = random_sym3(&mut rng);
                let xi_p = random_sym3(&mut rng);
                let check = reorg_identity(&law, &xi, &xi_p);
                let (nl, nr) = check.normal;
                let (tl, tr) = check.tangential;
                assert!((nl - nr).abs() <= 1e-12 * nl.abs().max(1.0));
                assert!((tl - tr).abs() <= 1e-12 * tl.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rearrangement_sys_cases() {
        // identity conductivity: plain dot product split
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = SystemTensor::from_gram(1, 3, &DMatrix::identity(3, 3)).unwrap();
        let g = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let zero = DMatrix::zeros(1, 3);
        let (lhs, rhs) = rearrangement_identity_sys(&c, &g, &zero).unwrap();
        assert_eq!((lhs, rhs), (0.0, 0.0));
        let (lhs, rhs) = rearrangement_identity_sys(&c, &g, &g).unwrap();
        assert!((lhs - 14.0).abs() < 1e-14);
        assert!((rhs - 14.0).abs() < 1e-14);

        for (n, d) in [(1, 2), (1, 3), (2, 2), (2, 3), (3, 3)] {
            let c = random_spd_system(&mut rng, n, d);
            for _ in 0..1000 {
                let g = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
                let g_p = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
                let (lhs, rhs) = rearrangement_identity_sys(&c, &g, &g_p).unwrap();
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0),
                    "n={n} d={d} lhs={lhs} rhs={rhs}"
                );
            }
        }
    }

    #[test]
    fn sys_effective_identity_case() {
        let c = SystemTensor::from_gram(1, 3, &DMatrix::identity(3, 3)).unwrap();
        let eff = sys_effective(&c).unwrap();
        for j in 0..3 {
            for q in 0..3 {
                let expect = if j == 0 && q == 0 { 1.0 } else { 0.0 };
                assert_eq!(eff.a_perp.get(0, j, 0, q), expect);
                let expect_par = if j == q && j > 0 { 1.0 } else { 0.0 };
                assert_eq!(eff.a_par.get(0, j, 0, q), expect_par);
            }
        }
    }

    /// The sign in the tangential effective tensor, fixed by the laminate
    /// oracle below: for A = [[2,1],[1,2]] the tangential coefficient is
    /// A_22 - A_21 A_12 / A_11 = 3/2.
    #[test]
    fn sys_effective_plane_example() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let c = SystemTensor::from_gram(1, 2, &a).unwrap();
        let eff = sys_effective(&c).unwrap();
        assert!((eff.a_perp.get(0, 0, 0, 0) - 2.0).abs() < 1e-15);
        assert!((eff.a_perp.get(0, 0, 0, 1) - 1.0).abs() < 1e-15);
        assert!((eff.a_perp.get(0, 1, 0, 1) - 0.5).abs() < 1e-15);
        assert!((eff.a_par.get(0, 1, 0, 1) - 1.5).abs() < 1e-15);
        assert_eq!(eff.a_par.get(0, 0, 0, 0), 0.0);
    }

    #[test]
    fn heat_effective_cases() {
        let eff = heat_effective(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(eff.a_perp.get(0, 0, 0, 0), 1.0);
        assert_eq!(eff.a_par.get(0, 1, 0, 1), 1.0);
        assert_eq!(eff.a_par.get(0, 0, 0, 0), 0.0);

        // d = 1: no tangential directions at all
        let eff = heat_effective(&DMatrix::from_element(1, 1, 4.0)).unwrap();
        assert_eq!(eff.a_perp.get(0, 0, 0, 0), 4.0);
        assert_eq!(eff.a_par.get(0, 0, 0, 0), 0.0);
        assert_eq!(eff.iface[(0, 0)], 4.0);
    }

    #[test]
    fn heat_matches_system_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for d in [2usize, 3] {
            for _ in 0..100 {
                let r = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                let a = &r * r.transpose() + DMatrix::identity(d, d) * 0.3;
                let heat = heat_effective(&a).unwrap();
                let sys = sys_effective(&SystemTensor::from_gram(1, d, &a).unwrap()).unwrap();
                assert!(heat.a_perp.max_abs_diff(&sys.a_perp) <= 1e-14 * a.amax());
                assert!(heat.a_par.max_abs_diff(&sys.a_par) <= 1e-14 * a.amax());
                assert!((heat.iface[(0, 0)] - sys.iface[(0, 0)]).abs() <= 1e-14 * a.amax());
            }
        }
    }

    #[test]
    fn quadratic_form_symmetry_and_nonnegativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for l in [0.0, 0.3, 1.0, 10.0] {
            let law = IsotropicLaw::new(l).unwrap();
            for _ in 0..250 {
                let xi = random_sym3(&mut rng);
                let xi_p = random_sym3(&mut rng);
                let forward = iso_a_perp(&law, &xi).dot(&xi_p);
                let backward = iso_a_perp(&law, &xi_p).dot(&xi);
                assert!((forward - backward).abs() <= 1e-12 * forward.abs().max(1.0));
                assert!(iso_a_perp(&law, &xi).dot(&xi) >= -1e-12);

                let g = Mat2::new(xi[(1, 1)], xi[(1, 2)], xi[(1, 2)], xi[(2, 2)]);
                let g_p = Mat2::new(xi_p[(1, 1)], xi_p[(1, 2)], xi_p[(1, 2)], xi_p[(2, 2)]);
                let forward = iso_a_par(&law, &g).dot(&g_p);
                let backward = iso_a_par(&law, &g_p).dot(&g);
                assert!((forward - backward).abs() <= 1e-12 * forward.abs().max(1.0));
                assert!(iso_a_par(&law, &g).dot(&g) >= -1e-12);
            }
        }
    }

    #[test]
    fn sys_quadratic_forms_nonnegative_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for (n, d) in [(1, 3), (2, 2), (3, 3)] {
            let c = random_spd_system(&mut rng, n, d);
            let eff = sys_effective(&c).unwrap();
            for _ in 0..200 {
                let g = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
                let h = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
                for t in [&eff.a_perp, &eff.a_par] {
                    let fwd = t.contract(&g, &h).unwrap();
                    let bwd = t.contract(&h, &g).unwrap();
                    assert!((fwd - bwd).abs() <= 1e-11 * fwd.abs().max(1.0));
                    assert!(t.contract(&g, &g).unwrap() >= -1e-11);
                }
            }
        }
    }

    #[test]
    fn singular_t_rejected() {
        // C for which T = C_i1p1 vanishes identically but the Gram matrix is
        // only positive semidefinite in the tangential block
        let mut gram = DMatrix::zeros(2, 2);
        gram[(1, 1)] = 1.0;
        let err = SystemTensor::from_gram(1, 2, &gram).unwrap_err();
        assert!(matches!(err, TensorError::SingularT(_)));
    }

    /// Independent laminate oracle: the cell energy of a two-phase layered
    /// medium `mu(y) C`, minimized over piecewise-constant correctors, must
    /// equal the bulk tensor built from `(nu, m)` densities
    /// `<mu^{-1}>, <mu>`. This pins the sign convention in `a_par`.
    fn laminate_cell_form(
        c: &SystemTensor,
        mu: (f64, f64),
        theta: f64,
        g: &DMatrix<f64>,
        h: &DMatrix<f64>,
    ) -> f64 {
        let energy = |xi: &DMatrix<f64>| -> f64 {
            let (n, _) = (c.n(), c.d());
            let ct = c.tensor();
            // corrector gradients c1, c2 (columns along e1) with
            // theta c1 + (1 - theta) c2 = 0; stationarity gives
            // (mu1 + mu2 theta/(1-theta)) T c1 = (mu2 - mu1) (C xi) e1
            let t = c.t_matrix();
            let rhs_vec = {
                let cxi = ct.apply(xi).unwrap();
                DVector::from_iterator(n, cxi.column(0).iter().copied()) * (mu.1 - mu.0)
            };
            let lhs_mat = t * (mu.0 + mu.1 * theta / (1.0 - theta));
            let c1 = lhs_mat.lu().solve(&rhs_vec).expect("T invertible");
            let c2 = &c1 * (-theta / (1.0 - theta));
            let with_col = |v: &DVector<f64>| {
                let mut m = xi.clone();
                for i in 0..n {
                    m[(i, 0)] += v[i];
                }
                m
            };
            let g1 = with_col(&c1);
            let g2 = with_col(&c2);
            theta * mu.0 * ct.contract(&g1, &g1).unwrap()
                + (1.0 - theta) * mu.1 * ct.contract(&g2, &g2).unwrap()
        };
        // polarization of the quadratic form
        let sum = g + h;
        0.5 * (energy(&sum) - energy(g) - energy(h))
    }

    #[test]
    fn bulk_tensor_matches_laminate_oracle() {
        use crate::measures::{Measure1D, MeasurePair};
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (n, d) in [(1, 2), (1, 3), (2, 2), (2, 3)] {
            for (mu1, mu2, theta) in [(1.0, 1.0, 0.5), (1.0, 2.0, 0.5), (0.5, 4.0, 0.25)] {
                let c = random_spd_system(&mut rng, n, d);
                let eff = EffectiveLaw::System(sys_effective(&c).unwrap());
                let nu_density = theta / mu1 + (1.0 - theta) / mu2;
                let m_density = theta * mu1 + (1.0 - theta) * mu2;
                let pair = MeasurePair::new(
                    Measure1D::lebesgue(1.0, nu_density).unwrap(),
                    Measure1D::lebesgue(1.0, m_density).unwrap(),
                );
                let bulk = bulk_tensor(&pair, &eff).unwrap();
                let a = bulk.tensor_at(0.5);
                for _ in 0..20 {
                    let g = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
                    let h = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
                    let paper = a.contract(&g, &h).unwrap();
                    let oracle = laminate_cell_form(&c, (mu1, mu2), theta, &g, &h);
                    assert!(
                        (paper - oracle).abs() <= 1e-11 * paper.abs().max(1.0),
                        "n={n} d={d} mu=({mu1},{mu2}) paper={paper} oracle={oracle}"
                    );
                }
            }
        }
    }

    #[test]
    fn bulk_tensor_heat_cases() {
        use crate::measures::{Measure1D, MeasurePair};
        // nu = m = L^1, A = I: constant medium homogenizes to itself
        let eff = EffectiveLaw::System(heat_effective(&DMatrix::identity(3, 3)).unwrap());
        let leb = Measure1D::lebesgue(1.0, 1.0).unwrap();
        let pair = MeasurePair::new(leb.clone(), leb.clone());
        let bulk = bulk_tensor(&pair, &eff).unwrap();
        let a = bulk.tensor_at(0.3);
        for j in 0..3 {
            for q in 0..3 {
                let expect = if j == q { 1.0 } else { 0.0 };
                assert_eq!(a.get(0, j, 0, q), expect);
            }
        }

        // nu = 2 L^1: harmonic mean 1/2 along x1
        let pair = MeasurePair::new(Measure1D::lebesgue(1.0, 2.0).unwrap(), leb.clone());
        let a = bulk_tensor(&pair, &eff).unwrap();
        let t = a.tensor_at(0.5);
        assert_eq!(t.get(0, 0, 0, 0), 0.5);
        assert_eq!(t.get(0, 1, 0, 1), 1.0);
        assert_eq!(t.get(0, 2, 0, 2), 1.0);

        // zero nu-density piece: degenerate
        let degenerate = Measure1D::new(1.0, vec![0.0, 0.5, 1.0], vec![0.0, 1.0], vec![]).unwrap();
        let pair = MeasurePair::new(degenerate, leb);
        assert!(matches!(
            bulk_tensor(&pair, &eff),
            Err(TensorError::DegenerateBulk { piece: 0 })
        ));
    }

    #[test]
    fn iso_grad_embedding_matches_symmetric_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for l in [0.0, 1.0, 4.0] {
            let law = IsotropicLaw::new(l).unwrap();
            let perp = iso_a_perp_tensor(&law);
            let par = iso_a_par_tensor(&law);
            for _ in 0..100 {
                let xi = random_sym3(&mut rng);
                let xi_p = random_sym3(&mut rng);
                let gd = DMatrix::from_fn(3, 3, |i, j| xi[(i, j)]);
                let hd = DMatrix::from_fn(3, 3, |i, j| xi_p[(i, j)]);
                let via_tensor = perp.contract(&gd, &hd).unwrap();
                let via_formula = iso_a_perp(&law, &xi).dot(&xi_p);
                assert!((via_tensor - via_formula).abs() <= 1e-12 * via_formula.abs().max(1.0));

                let gamma = Mat2::new(xi[(1, 1)], xi[(1, 2)], xi[(1, 2)], xi[(2, 2)]);
                let gamma_p = Mat2::new(xi_p[(1, 1)], xi_p[(1, 2)], xi_p[(1, 2)], xi_p[(2, 2)]);
                let via_tensor = par.contract(&gd, &hd).unwrap();
                let via_formula = iso_a_par(&law, &gamma).dot(&gamma_p);
                assert!((via_tensor - via_formula).abs() <= 1e-12 * via_formula.abs().max(1.0));
            }
        }
    }
}
