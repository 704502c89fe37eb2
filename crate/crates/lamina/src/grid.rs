//! Layer-conforming tensor-product grids on `(0, L) x Omega'`.
//!
//! Every coefficient breakpoint (layer boundary, atom plane, source
//! breakpoint) becomes a grid plane, and each piece between consecutive
//! required planes receives at least `k_min` elements: thin layers are
//! resolved exactly, never homogenized away by the mesh.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("dimension must be 1, 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("resolution must be >= 1")]
    BadResolution,
    #[error("transverse extents must be positive; need {need} of them, got {got}")]
    BadExtents { need: usize, got: usize },
    #[error(
        "piece [{lo}, {hi}] is thinner than the floating granularity; supply exact breakpoints"
    )]
    DegeneratePiece { lo: f64, hi: f64 },
    #[error("required plane {0} outside the domain")]
    PlaneOutsideDomain(f64),
}

/// Tensor-product grid. `axes[0]` is the graded layer axis; the transverse
/// axes are uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
}

impl Grid {
    /// Build a conforming grid. `required` are the x1-planes that must be
    /// present (coefficient breakpoints, atom planes, source breaks);
    /// `0` and `length` are implied. `resolution` is the target number of
    /// elements per unit length in every direction.
    pub fn build(
        length: f64,
        required: &[f64],
        extents: &[f64],
        resolution: usize,
        k_min: usize,
    ) -> Result<Self, GridError> {
        let dim = 1 + extents.len();
        if !(1..=3).contains(&dim) {
            return Err(GridError::BadDimension(dim));
        }
        if resolution == 0 {
            return Err(GridError::BadResolution);
        }
        if extents.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(GridError::BadExtents {
                need: dim - 1,
                got: extents.len(),
            });
        }
        let k_min = k_min.max(1);

        let mut planes: Vec<f64> = required.to_vec();
        planes.push(0.0);
        planes.push(length);
        planes.sort_by(f64::total_cmp);
        planes.dedup();
        if planes.first() != Some(&0.0) || planes.last() != Some(&length) {
            let bad = *planes.first().unwrap();
            return Err(GridError::PlaneOutsideDomain(if bad < 0.0 {
                bad
            } else {
                *planes.last().unwrap()
            }));
        }

        let mut x1 = vec![0.0];
        for w in planes.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let len = hi - lo;
            if len <= f64::EPSILON * length * 4.0 {
                return Err(GridError::DegeneratePiece { lo, hi });
            }
            let target = (len * resolution as f64 / length).ceil() as usize;
            let n = target.max(k_min);
            for k in 1..n {
                let x = lo + len * k as f64 / n as f64;
                x1.push(x);
            }
            x1.push(hi);
        }

        let mut axes = vec![x1];
        for h in extents {
            let n = ((h * resolution as f64 / length).ceil() as usize).max(1);
            axes.push((0..=n).map(|k| h * k as f64 / n as f64).collect());
        }
        Ok(Grid { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &[f64] {
        &self.axes[k]
    }

    pub fn x1(&self) -> &[f64] {
        &self.axes[0]
    }

    pub fn length(&self) -> f64 {
        *self.axes[0].last().unwrap()
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }

    pub fn element_counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len() - 1).collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn n_elements(&self) -> usize {
        self.axes.iter().map(|a| a.len() - 1).product()
    }

    /// Largest element extent over all axes.
    pub fn h_max(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|a| a.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    /// Lexicographic node index, x1 fastest.
    pub fn node_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim()).rev() {
            idx = idx * self.axes[k].len() + multi[k];
        }
        idx
    }

    pub fn node_multi(&self, mut idx: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for (k, axis) in self.axes.iter().enumerate() {
            multi[k] = idx % axis.len();
            idx /= axis.len();
        }
        multi
    }

    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        self.node_multi(idx)
            .iter()
            .enumerate()
            .map(|(k, i)| self.axes[k][*i])
            .collect()
    }

    pub fn element_multi(&self, mut idx: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim()];
        for (k, axis) in self.axes.iter().enumerate() {
            multi[k] = idx % (axis.len() - 1);
            idx /= axis.len() - 1;
        }
        multi
    }

    /// Corner nodes of an element, in lexicographic corner order
    /// (x1 fastest).
    pub fn element_nodes(&self, element: &[usize]) -> Vec<usize> {
        let dim = self.dim();
        let mut nodes = Vec::with_capacity(1 << dim);
        for corner in 0..(1usize << dim) {
            let multi: Vec<usize> = (0..dim)
                .map(|k| element[k] + ((corner >> k) & 1))
                .collect();
            nodes.push(self.node_index(&multi));
        }
        nodes
    }

    /// Element extents per axis.
    pub fn element_size(&self, element: &[usize]) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.axes[k][element[k] + 1] - self.axes[k][element[k]])
            .collect()
    }

    pub fn element_origin(&self, element: &[usize]) -> Vec<f64> {
        (0..self.dim()).map(|k| self.axes[k][element[k]]).collect()
    }

    pub fn is_boundary_node(&self, idx: usize) -> bool {
        self.node_multi(idx)
            .iter()
            .enumerate()
            .any(|(k, i)| *i == 0 || *i + 1 == self.axes[k].len())
    }

    /// Index of an x1 plane, by exact coordinate match.
    pub fn x1_plane_index(&self, x: f64) -> Option<usize> {
        self.axes[0].iter().position(|v| *v == x)
    }

    /// Iterate elements in lexicographic order.
    pub fn elements(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let counts = self.element_counts();
        let total = self.n_elements();
        (0..total).map(move |idx| {
            let mut multi = vec![0; counts.len()];
            let mut rem = idx;
            for (k, c) in counts.iter().enumerate() {
                multi[k] = rem % c;
                rem /= c;
            }
            multi
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_1d() {
        let g = Grid::build(1.0, &[], &[], 8, 2).unwrap();
        assert_eq!(g.x1().len(), 9);
        assert_eq!(g.n_elements(), 8);
        assert!((g.h_max() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn thin_layer_gets_k_min_elements() {
        let c = 1.0 / 3.0;
        let (lo, hi) = (c - 0.005, c + 0.005);
        let g = Grid::build(1.0, &[lo, hi], &[], 10, 2).unwrap();
        assert!(g.x1().contains(&lo));
        assert!(g.x1().contains(&hi));
        let inside: Vec<f64> = g
            .x1()
            .windows(2)
            .filter(|w| w[0] >= lo - 1e-15 && w[1] <= hi + 1e-15)
            .map(|w| w[1] - w[0])
            .collect();
        assert!(inside.len() >= 2, "layer must carry at least k_min elements");
    }

    #[test]
    fn transverse_resolution() {
        let g = Grid::build(1.0, &[], &[1.0], 16, 2).unwrap();
        assert_eq!(g.dim(), 2);
        assert_eq!(g.axis(1).len(), 17);
    }

    #[test]
    fn node_indexing_roundtrip() {
        let g = Grid::build(1.0, &[0.5], &[2.0], 4, 2).unwrap();
        for idx in 0..g.n_nodes() {
            assert_eq!(g.node_index(&g.node_multi(idx)), idx);
        }
        // corner order: x1 fastest
        let nodes = g.element_nodes(&[0, 0]);
        assert_eq!(nodes.len(), 4);
        assert_eq!(nodes[1], nodes[0] + 1);
    }

    #[test]
    fn degenerate_piece_rejected() {
        let err = Grid::build(1.0, &[0.5, 0.5 + 2e-16], &[], 4, 2).unwrap_err();
        assert!(matches!(err, GridError::DegeneratePiece { .. }));
    }
}
