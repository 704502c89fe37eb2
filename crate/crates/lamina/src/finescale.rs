//! Fine-scale finite element solver: multilinear elements on a
//! layer-conforming tensor-product grid, homogeneous Dirichlet conditions on
//! the whole boundary, symmetric sparse system solved by preconditioned
//! conjugate gradients.
//!
//! The coefficient is piecewise constant per element, so the 2-point Gauss
//! rule used here integrates every stiffness entry exactly.

use crate::grid::{Grid, GridError};
use crate::media::CoefficientField;
use crate::sparse::{dot, pcg, CooBuilder, CsrMatrix, PcgSolution, SolveError};
use crate::tensors::{IsotropicLaw, SystemTensor, Tensor4, TensorError};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("grid does not conform to the coefficient field: plane {0} missing")]
    NonConforming(f64),
    #[error("law has {law} components in dimension {law_d}, grid is {grid_d}-dimensional")]
    LawDimensionMismatch {
        law: usize,
        law_d: usize,
        grid_d: usize,
    },
    #[error("source supplies {got} components, law needs {need}")]
    SourceComponents { got: usize, need: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Constitutive law of the fine-scale problem.
#[derive(Debug, Clone)]
pub enum Law {
    /// Scalar conductivity matrix `A` (heat), `n = 1`.
    Scalar(DMatrix<f64>),
    /// General system tensor on full gradients.
    System(SystemTensor),
    /// Isotropic elasticity with Lame ratio `l`; `n = d` components,
    /// symmetric-strain energy.
    Iso(IsotropicLaw),
}

impl Law {
    pub fn n_comp(&self, dim: usize) -> usize {
        match self {
            Law::Scalar(_) => 1,
            Law::System(c) => c.n(),
            Law::Iso(_) => dim,
        }
    }

    /// The unscaled gradient tensor entering the element integrand.
    pub fn grad_tensor(&self, dim: usize) -> Result<Tensor4, FemError> {
        match self {
            Law::Scalar(a) => {
                if a.nrows() != dim {
                    return Err(FemError::LawDimensionMismatch {
                        law: 1,
                        law_d: a.nrows(),
                        grid_d: dim,
                    });
                }
                let mut t = Tensor4::zeros(1, dim);
                for j in 0..dim {
                    for q in 0..dim {
                        t.set(0, j, 0, q, a[(j, q)]);
                    }
                }
                Ok(t)
            }
            Law::System(c) => {
                if c.d() != dim {
                    return Err(FemError::LawDimensionMismatch {
                        law: c.n(),
                        law_d: c.d(),
                        grid_d: dim,
                    });
                }
                Ok(c.tensor().clone())
            }
            Law::Iso(law) => {
                // l tr(e) tr(e') + 2 e:e' as a full-gradient contraction
                let mut t = Tensor4::zeros(dim, dim);
                for i in 0..dim {
                    for j in 0..dim {
                        for p in 0..dim {
                            for q in 0..dim {
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
                Ok(t)
            }
        }
    }
}

/// Piecewise-constant source in `x1`, one value row per piece.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    breaks: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Source {
    pub fn new(breaks: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        assert_eq!(values.len() + 1, breaks.len(), "one value row per piece");
        Source { breaks, values }
    }

    pub fn constant(length: f64, components: Vec<f64>) -> Self {
        Source {
            breaks: vec![0.0, length],
            values: vec![components],
        }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn n_comp(&self) -> usize {
        self.values[0].len()
    }

    pub fn value_at(&self, x1: f64) -> &[f64] {
        let idx = self.breaks[1..].partition_point(|&t| t <= x1);
        &self.values[idx.min(self.values.len() - 1)]
    }

    /// Scalar view for the 1-D oracle.
    pub fn as_piecewise(&self, comp: usize) -> crate::poly::PiecewisePoly {
        let vals: Vec<f64> = self.values.iter().map(|v| v[comp]).collect();
        crate::poly::PiecewisePoly::constant_pieces(self.breaks.clone(), &vals)
            .expect("source invariants")
    }
}

/// Assembled sparse system over the free degrees of freedom.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub matrix: CsrMatrix,
    pub load: Vec<f64>,
    pub n_comp: usize,
    /// Free-dof rank per node, `None` on the Dirichlet boundary.
    pub free_rank: Vec<Option<usize>>,
    pub n_free_nodes: usize,
}

impl FemSystem {
    pub fn n_dofs(&self) -> usize {
        self.load.len()
    }

    pub fn dof(&self, node: usize, comp: usize) -> Option<usize> {
        self.free_rank[node].map(|r| r * self.n_comp + comp)
    }
}

/// Nodal solution on the full grid (Dirichlet zeros included).
#[derive(Debug, Clone)]
pub struct FemSolution {
    pub nodal: Vec<f64>,
    pub n_comp: usize,
    pub iterations: usize,
    pub residual: f64,
    free: Vec<f64>,
}

impl FemSolution {
    /// All-zero solution on `n_nodes` nodes (useful as a comparison base).
    pub fn zeros(n_nodes: usize, n_comp: usize) -> Self {
        FemSolution {
            nodal: vec![0.0; n_nodes * n_comp],
            n_comp,
            iterations: 0,
            residual: 0.0,
            free: vec![],
        }
    }

    pub fn value(&self, node: usize, comp: usize) -> f64 {
        self.nodal[node * self.n_comp + comp]
    }

    pub fn free_values(&self) -> &[f64] {
        &self.free
    }
}

/// Gauss points and weights on [0, 1].
pub(crate) fn gauss2() -> [(f64, f64); 2] {
    let d = 0.5 / 3.0f64.sqrt();
    [(0.5 - d, 0.5), (0.5 + d, 0.5)]
}

pub(crate) fn gauss3() -> [(f64, f64); 3] {
    let s = 0.5 * (3.0f64 / 5.0).sqrt();
    [
        (0.5 - s, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + s, 5.0 / 18.0),
    ]
}

/// Element stiffness for a box of size `h` and gradient tensor `t`
/// (already scaled by the coefficient). Row/column layout:
/// `corner * n_comp + component`, corners in lexicographic order.
pub(crate) fn element_stiffness(t: &Tensor4, h: &[f64]) -> DMatrix<f64> {
    let dim = h.len();
    let n = t.n();
    let corners = 1usize << dim;
    let vol: f64 = h.iter().product();
    let mut k = DMatrix::zeros(corners * n, corners * n);
    let gp = gauss2();
    let points = corners; // 2^dim tensor-product Gauss points
    for pt in 0..points {
        let mut weight = vol;
        let mut xi = [0.0f64; 3];
        for (axis, x) in xi.iter_mut().enumerate().take(dim) {
            let (p, w) = gp[(pt >> axis) & 1];
            *x = p;
            weight *= w;
        }
        // shape gradients at this point: grads[corner][axis]
        let mut grads = vec![[0.0f64; 3]; corners];
        for (corner, g) in grads.iter_mut().enumerate() {
            for axis in 0..dim {
                let mut val = 1.0 / h[axis] * if (corner >> axis) & 1 == 1 { 1.0 } else { -1.0 };
                for other in 0..dim {
                    if other != axis {
                        let on = (corner >> other) & 1 == 1;
                        val *= if on { xi[other] } else { 1.0 - xi[other] };
                    }
                }
                g[axis] = val;
            }
        }
        for (b, gb) in grads.iter().enumerate() {
            for (a, ga) in grads.iter().enumerate() {
                for i in 0..n {
                    for p in 0..n {
                        let row = b * n + i;
                        let col = a * n + p;
                        if row > col {
                            continue;
                        }
                        let mut s = 0.0;
                        for j in 0..dim {
                            for q in 0..dim {
                                s += t.get(i, j, p, q) * ga[q] * gb[j];
                            }
                        }
                        k[(row, col)] += weight * s;
                    }
                }
            }
        }
    }
    // the form is symmetric; mirroring keeps the matrix bit-exactly so
    for row in 0..k.nrows() {
        for col in 0..row {
            k[(row, col)] = k[(col, row)];
        }
    }
    k
}

/// Assemble the fine-scale system `-div(mu C grad u) = f` on a conforming
/// grid. Every coefficient breakpoint must be a grid plane.
pub fn assemble(
    grid: &Grid,
    field: &CoefficientField,
    law: &Law,
    source: &Source,
) -> Result<FemSystem, FemError> {
    for b in field.breaks() {
        if grid.x1_plane_index(*b).is_none() && *b != 0.0 && *b != grid.length() {
            return Err(FemError::NonConforming(*b));
        }
    }
    let dim = grid.dim();
    let n_comp = law.n_comp(dim);
    if source.n_comp() != n_comp {
        return Err(FemError::SourceComponents {
            got: source.n_comp(),
            need: n_comp,
        });
    }
    let base = law.grad_tensor(dim)?;
    assemble_generic(grid, n_comp, source, |element| {
        let lo = grid.axis(0)[element[0]];
        let hi = grid.axis(0)[element[0] + 1];
        base.scale(field.value_at(0.5 * (lo + hi)))
    })
}

/// Shared assembly loop: `tensor_of` yields the (already scaled) gradient
/// tensor per element. Serial, deterministic element order.
pub(crate) fn assemble_generic(
    grid: &Grid,
    n_comp: usize,
    source: &Source,
    tensor_of: impl Fn(&[usize]) -> Tensor4,
) -> Result<FemSystem, FemError> {
    let n_nodes = grid.n_nodes();
    let mut free_rank = vec![None; n_nodes];
    let mut next = 0usize;
    for (node, rank) in free_rank.iter_mut().enumerate() {
        if !grid.is_boundary_node(node) {
            *rank = Some(next);
            next += 1;
        }
    }
    let n_free = next;
    let mut builder = CooBuilder::new(n_free * n_comp);
    let mut load = vec![0.0; n_free * n_comp];

    for element in grid.elements() {
        let h = grid.element_size(&element);
        let tensor = tensor_of(&element);
        let ke = element_stiffness(&tensor, &h);
        let nodes = grid.element_nodes(&element);
        let corners = nodes.len();

        let x1_mid = 0.5 * (grid.axis(0)[element[0]] + grid.axis(0)[element[0] + 1]);
        let f_val = source.value_at(x1_mid);
        let vol: f64 = h.iter().product();
        let shape_integral = vol / corners as f64;

        for (b, &node_b) in nodes.iter().enumerate() {
            let Some(rb) = free_rank[node_b] else {
                continue;
            };
            for i in 0..n_comp {
                let row = rb * n_comp + i;
                load[row] += shape_integral * f_val[i];
                for (a, &node_a) in nodes.iter().enumerate() {
                    let Some(ra) = free_rank[node_a] else {
                        continue;
                    };
                    for p in 0..n_comp {
                        builder.add(row, ra * n_comp + p, ke[(b * n_comp + i, a * n_comp + p)]);
                    }
                }
            }
        }
    }

    Ok(FemSystem {
        matrix: builder.build(),
        load,
        n_comp,
        free_rank,
        n_free_nodes: n_free,
    })
}

/// Solve the assembled system with Jacobi-preconditioned CG.
pub fn solve(system: &FemSystem, tol: f64, max_iter: usize) -> Result<FemSolution, FemError> {
    let PcgSolution {
        x,
        iterations,
        residual,
    } = pcg(&system.matrix, &system.load, tol, max_iter)?;
    let mut nodal = vec![0.0; system.free_rank.len() * system.n_comp];
    for (node, rank) in system.free_rank.iter().enumerate() {
        if let Some(r) = rank {
            for c in 0..system.n_comp {
                nodal[node * system.n_comp + c] = x[r * system.n_comp + c];
            }
        }
    }
    Ok(FemSolution {
        nodal,
        n_comp: system.n_comp,
        iterations,
        residual,
        free: x,
    })
}

/// Discrete energy `u^T K u`.
pub fn energy(solution: &FemSolution, system: &FemSystem) -> f64 {
    let mut ku = vec![0.0; system.n_dofs()];
    system.matrix.matvec(&solution.free, &mut ku);
    dot(&solution.free, &ku)
}

/// Load pairing `u^T b`; equals the energy up to the solver residual.
pub fn load_pairing(solution: &FemSolution, system: &FemSystem) -> f64 {
    dot(&solution.free, &system.load)
}

/// A reference field the discrete solution can be compared against.
/// `eval` must be defined off the jump planes; elements straddling a plane
/// are split there before quadrature.
pub trait ReferenceField {
    fn eval(&self, x: &[f64], comp: usize) -> f64;
    fn jump_planes(&self) -> Vec<f64> {
        vec![]
    }
}

impl ReferenceField for crate::oracle::PiecewiseSolution1D {
    fn eval(&self, x: &[f64], _comp: usize) -> f64 {
        crate::oracle::PiecewiseSolution1D::eval(self, x[0])
    }
    fn jump_planes(&self) -> Vec<f64> {
        self.jumps().iter().map(|(t, _)| *t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrNorm {
    L1,
    L2,
}

/// Composite quadrature of `|u_h - u_ref|^p` over the grid, splitting
/// elements at the reference jump planes.
pub fn error_norm(
    grid: &Grid,
    solution: &FemSolution,
    reference: &dyn ReferenceField,
    which: ErrNorm,
) -> f64 {
    let dim = grid.dim();
    let n = solution.n_comp;
    let planes = reference.jump_planes();
    let gp = gauss3();
    let mut total = 0.0;

    for element in grid.elements() {
        let origin = grid.element_origin(&element);
        let h = grid.element_size(&element);
        let nodes = grid.element_nodes(&element);

        // split the x1 range at interior jump planes
        let (x_lo, x_hi) = (origin[0], origin[0] + h[0]);
        let mut cuts = vec![x_lo];
        for p in &planes {
            if *p > x_lo && *p < x_hi {
                cuts.push(*p);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.push(x_hi);

        for seg in cuts.windows(2) {
            let (slo, shi) = (seg[0], seg[1]);
            let svol = (shi - slo) * h[1..].iter().product::<f64>();
            let n_pts = gp.len().pow(dim as u32);
            for pt in 0..n_pts {
                let mut weight = svol;
                let mut x = vec![0.0; dim];
                let mut local = vec![0.0; dim];
                let mut rem = pt;
                for axis in 0..dim {
                    let (p, w) = gp[rem % gp.len()];
                    rem /= gp.len();
                    weight *= w;
                    if axis == 0 {
                        x[0] = slo + p * (shi - slo);
                        local[0] = (x[0] - origin[0]) / h[0];
                    } else {
                        local[axis] = p;
                        x[axis] = origin[axis] + p * h[axis];
                    }
                }
                // multilinear interpolation of the discrete solution
                for comp in 0..n {
                    let mut uh = 0.0;
                    for (corner, &node) in nodes.iter().enumerate() {
                        let mut shape = 1.0;
                        for axis in 0..dim {
                            let on = (corner >> axis) & 1 == 1;
                            shape *= if on { local[axis] } else { 1.0 - local[axis] };
                        }
                        uh += shape * solution.value(node, comp);
                    }
                    let diff = uh - reference.eval(&x, comp);
                    total += weight
                        * match which {
                            ErrNorm::L1 => diff.abs(),
                            ErrNorm::L2 => diff * diff,
                        };
                }
            }
        }
    }
    match which {
        ErrNorm::L1 => total,
        ErrNorm::L2 => total.max(0.0).sqrt(),
    }
}

/// Nodal values of the solution on one x1-plane, indexed by the transverse
/// node ordering of the grid.
pub fn plane_values(grid: &Grid, solution: &FemSolution, plane: usize, comp: usize) -> Vec<f64> {
    let counts = grid.node_counts();
    let transverse: usize = counts[1..].iter().product::<usize>().max(1);
    let mut out = Vec::with_capacity(transverse);
    for t in 0..transverse {
        let mut multi = vec![plane];
        let mut rem = t;
        for c in &counts[1..] {
            multi.push(rem % c);
            rem /= c;
        }
        out.push(solution.value(grid.node_index(&multi), comp));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{Feature, LayeredProfile};
    use crate::oracle::{constant_source, solve_eps_1d};

    fn unit_scalar_law() -> Law {
        Law::Scalar(DMatrix::identity(1, 1))
    }

    #[test]
    fn hand_assembled_two_element_system() {
        let grid = Grid::build(1.0, &[], &[], 2, 1).unwrap();
        let field = CoefficientField::constant(1.0, 1.0).unwrap();
        let src = Source::constant(1.0, vec![1.0]);
        let sys = assemble(&grid, &field, &unit_scalar_law(), &src).unwrap();
        assert_eq!(sys.n_dofs(), 1);
        assert!((sys.matrix.get(0, 0) - 4.0).abs() < 1e-14);
        assert_eq!(sys.load, vec![0.5]);

        let sol = solve(&sys, 1e-12, 100).unwrap();
        assert!((sol.free_values()[0] - 0.125).abs() < 1e-13);
    }

    #[test]
    fn zero_source_zero_solution() {
        let grid = Grid::build(1.0, &[], &[1.0], 8, 2).unwrap();
        let field = CoefficientField::constant(1.0, 1.0).unwrap();
        let src = Source::constant(1.0, vec![0.0]);
        let sys = assemble(&grid, &field, &Law::Scalar(DMatrix::identity(2, 2)), &src).unwrap();
        assert!(sys.load.iter().all(|v| *v == 0.0));
        let sol = solve(&sys, 1e-12, 100).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.nodal.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn assembly_is_exactly_symmetric() {
        let grid = Grid::build(1.0, &[0.4], &[1.0], 6, 2).unwrap();
        let field = CoefficientField::new(vec![0.0, 0.4, 1.0], vec![1.0, 3.0]).unwrap();
        let src = Source::constant(1.0, vec![1.0]);
        let sys = assemble(&grid, &field, &Law::Scalar(DMatrix::identity(2, 2)), &src).unwrap();
        assert_eq!(sys.matrix.asymmetry(), 0.0);
    }

    #[test]
    fn galerkin_identity() {
        let grid = Grid::build(1.0, &[], &[1.0], 10, 2).unwrap();
        let field = CoefficientField::constant(1.0, 2.0).unwrap();
        let src = Source::constant(1.0, vec![1.0]);
        let sys = assemble(&grid, &field, &Law::Scalar(DMatrix::identity(2, 2)), &src).unwrap();
        let sol = solve(&sys, 1e-12, 2000).unwrap();
        let e = energy(&sol, &sys);
        let p = load_pairing(&sol, &sys);
        assert!((e - p).abs() <= 1e-10 * p.abs());
    }

    #[test]
    fn one_d_refinement_against_oracle() {
        let f = constant_source(1.0, 1.0);
        let src = Source::constant(1.0, vec![1.0]);
        let field = CoefficientField::constant(1.0, 1.0).unwrap();
        let exact = solve_eps_1d(&field, &f).unwrap();
        let mut errors = Vec::new();
        for res in [16usize, 32, 64] {
            let grid = Grid::build(1.0, &[], &[], res, 2).unwrap();
            let sys = assemble(&grid, &field, &unit_scalar_law(), &src).unwrap();
            let sol = solve(&sys, 1e-13, 10_000).unwrap();
            errors.push(error_norm(&grid, &sol, &exact, ErrNorm::L2));
        }
        assert!(errors[0] / errors[1] >= 3.0);
        assert!(errors[1] / errors[2] >= 3.0);
    }

    #[test]
    fn high_contrast_layer_solves_and_respects_max_principle() {
        let profile =
            LayeredProfile::new(1.0, 1.0, vec![Feature::soft("1/3".parse().unwrap(), 1.0)])
                .unwrap();
        let eps = 1e-4;
        let field = profile.realize(eps).unwrap();
        let grid = Grid::build(1.0, field.breaks(), &[], 32, 2).unwrap();
        let src = Source::constant(1.0, vec![1.0]);
        let sys = assemble(&grid, &field, &unit_scalar_law(), &src).unwrap();
        let sol = solve(&sys, 1e-12, 50_000).unwrap();
        assert!(sol.iterations > 0);
        // discrete maximum principle for the scalar case with f >= 0
        assert!(sol.nodal.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn error_norm_of_interpolant_is_zero() {
        let grid = Grid::build(1.0, &[], &[1.0], 4, 2).unwrap();
        let field = CoefficientField::constant(1.0, 1.0).unwrap();
        let src = Source::constant(1.0, vec![1.0]);
        let sys = assemble(&grid, &field, &Law::Scalar(DMatrix::identity(2, 2)), &src).unwrap();
        let sol = solve(&sys, 1e-12, 1000).unwrap();

        struct Interp<'a> {
            grid: &'a Grid,
            sol: &'a FemSolution,
        }
        impl ReferenceField for Interp<'_> {
            fn eval(&self, x: &[f64], comp: usize) -> f64 {
                let mut element = Vec::new();
                let mut local = Vec::new();
                for axis in 0..self.grid.dim() {
                    let ax = self.grid.axis(axis);
                    let k = ax[1..].partition_point(|&t| t <= x[axis]).min(ax.len() - 2);
                    element.push(k);
                    local.push((x[axis] - ax[k]) / (ax[k + 1] - ax[k]));
                }
                let nodes = self.grid.element_nodes(&element);
                let mut v = 0.0;
                for (corner, &node) in nodes.iter().enumerate() {
                    let mut shape = 1.0;
                    for axis in 0..self.grid.dim() {
                        let on = (corner >> axis) & 1 == 1;
                        shape *= if on { local[axis] } else { 1.0 - local[axis] };
                    }
                    v += shape * self.sol.value(node, comp);
                }
                v
            }
        }
        let l1 = error_norm(
            &grid,
            &sol,
            &Interp {
                grid: &grid,
                sol: &sol,
            },
            ErrNorm::L1,
        );
        assert!(l1 < 1e-14);
    }

    #[test]
    fn iso_and_system_assembly_run_in_2d() {
        let grid = Grid::build(1.0, &[], &[1.0], 4, 2).unwrap();
        let field = CoefficientField::constant(1.0, 1.0).unwrap();
        let src = Source::constant(1.0, vec![1.0, 0.5]);

        let iso = Law::Iso(IsotropicLaw::new(1.0).unwrap());
        let sys_iso = assemble(&grid, &field, &iso, &src).unwrap();
        let sol = solve(&sys_iso, 1e-11, 5000).unwrap();
        assert!(energy(&sol, &sys_iso) > 0.0);
        assert_eq!(sys_iso.matrix.asymmetry(), 0.0);

        let gram = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.3, 0.2, 0.1, //
                0.3, 1.5, 0.1, 0.2, //
                0.2, 0.1, 1.8, 0.25, //
                0.1, 0.2, 0.25, 1.2,
            ],
        );
        let c = SystemTensor::from_gram(2, 2, &gram).unwrap();
        let sys_sys = assemble(&grid, &field, &Law::System(c), &src).unwrap();
        let sol = solve(&sys_sys, 1e-11, 5000).unwrap();
        let e = energy(&sol, &sys_sys);
        let p = load_pairing(&sol, &sys_sys);
        assert!((e - p).abs() <= 1e-9 * p.abs());
    }
}
