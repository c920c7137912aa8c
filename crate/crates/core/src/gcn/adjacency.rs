use crate::graph::Graph;

use super::matrix::{real, Matrix, Real};

/// Symmetrically normalized adjacency with self-loops,
/// `D̃^{-1/2} (A + I) D̃^{-1/2}`, stored in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency<T> {
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    coefficients: Vec<T>,
}

/// Coefficient of `(u, v)` is `1 / sqrt((deg(u) + 1)(deg(v) + 1))`, including
/// the self-loop `u = v`.
pub fn normalize_adjacency<T: Real>(g: &Graph) -> NormalizedAdjacency<T> {
    let n = g.num_nodes();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(g.col_indices().len() + n);
    let mut coefficients = Vec::with_capacity(g.col_indices().len() + n);
    row_offsets.push(0);
    for u in 0..n {
        let mut self_done = false;
        for &v in g.neighbors(u) {
            if !self_done && v > u {
                col_indices.push(u);
                coefficients.push(real(1.0 / (g.degree(u) + 1) as f64));
                self_done = true;
            }
            col_indices.push(v);
            coefficients.push(real(1.0 / (((g.degree(u) + 1) * (g.degree(v) + 1)) as f64).sqrt()));
        }
        if !self_done {
            col_indices.push(u);
            coefficients.push(real(1.0 / (g.degree(u) + 1) as f64));
        }
        row_offsets.push(col_indices.len());
    }
    NormalizedAdjacency {
        row_offsets,
        col_indices,
        coefficients,
    }
}

impl<T: Real> NormalizedAdjacency<T> {
    pub fn num_nodes(&self) -> usize {
        self.row_offsets.len() - 1
    }

    /// `(column, coefficient)` entries of row `u`, sorted by column.
    pub fn row(&self, u: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_offsets[u]..self.row_offsets[u + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.coefficients[span].iter().copied())
    }

    pub fn coefficient(&self, u: usize, v: usize) -> Option<T> {
        self.row(u).find(|&(c, _)| c == v).map(|(_, w)| w)
    }

    /// `Â · x`. The operator is symmetric, so this is also `Âᵀ · x`.
    pub fn propagate(&self, x: &Matrix<T>) -> Matrix<T> {
        assert_eq!(x.rows(), self.num_nodes(), "propagate shape mismatch");
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for u in 0..self.num_nodes() {
            let out_row = out.row_mut(u);
            for (v, w) in self.row(u) {
                for (o, &b) in out_row.iter_mut().zip(x.row(v)) {
                    *o += w * b;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::testutil::graph;

    #[test]
    fn single_edge_coefficients_are_half() {
        let adj = normalize_adjacency::<f64>(&graph(2, &[(0, 1)], &[], 2));
        for (u, v) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(adj.coefficient(u, v), Some(0.5));
        }
    }

    #[test]
    fn isolated_node_self_loop_is_one() {
        let adj = normalize_adjacency::<f64>(&graph(1, &[], &[], 2));
        assert_eq!(adj.row(0).collect::<Vec<_>>(), vec![(0, 1.0)]);
    }

    #[test]
    fn star_coefficients() {
        let adj = normalize_adjacency::<f64>(&graph(4, &[(0, 1), (0, 2), (0, 3)], &[], 2));
        assert_eq!(adj.coefficient(0, 0), Some(0.25));
        for leaf in 1..4 {
            let c = adj.coefficient(0, leaf).unwrap();
            assert!((c - 1.0 / 8f64.sqrt()).abs() < 1e-15);
            assert_eq!(adj.coefficient(leaf, 0), Some(c));
            assert_eq!(adj.coefficient(leaf, leaf), Some(0.5));
        }
    }

    #[test]
    fn rows_are_sorted_with_self_loop_in_place() {
        let adj = normalize_adjacency::<f64>(&graph(3, &[(0, 1), (1, 2)], &[], 2));
        let cols: Vec<_> = adj.row(1).map(|(c, _)| c).collect();
        assert_eq!(cols, vec![0, 1, 2]);
    }
}
