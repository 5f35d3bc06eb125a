//! Frobenius-nearest projection of a Hessian onto the matrices whose quadratic set
//! objective is submodular.
//!
//! The feasible set constrains each off-diagonal entry independently
//! (`G_ij x_i x_j >= 0`), so the projection is an entrywise clamp: keep `H_ij` when its
//! product with `x_i x_j` is non-negative, zero it otherwise, and leave the diagonal alone.
//! Because the same sign condition is the max-form submodularity test of
//! [`crate::quadobj`], the projected matrix is used directly as `Q`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::quadobj::SYMMETRY_TOL;

pub fn project_to_submodular(h: &Array2<f64>, x: &[f64]) -> Result<Array2<f64>> {
    let n = x.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::arg(format!(
            "Hessian is {}x{} but x has length {n}",
            h.nrows(),
            h.ncols()
        )));
    }
    if !h.iter().chain(x.iter()).all(|v| v.is_finite()) {
        return Err(Error::arg("Hessian or x contains NaN or infinity"));
    }
    let mut g = h.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            if (h[[i, j]] - h[[j, i]]).abs() > SYMMETRY_TOL {
                return Err(Error::arg(format!("Hessian is not symmetric at ({i}, {j})")));
            }
            // Ties at exactly zero keep the entry.
            if h[[i, j]] * x[i] * x[j] < 0.0 {
                g[[i, j]] = 0.0;
                g[[j, i]] = 0.0;
            }
        }
    }
    Ok(g)
}

/// `true` iff `G_ij x_i x_j >= -tol` for all `i != j`.
pub fn feasible(g: &Array2<f64>, x: &[f64], tol: f64) -> bool {
    let n = x.len();
    (0..n).all(|i| (0..n).all(|j| i == j || g[[i, j]] * x[i] * x[j] >= -tol))
}

/// Number of off-diagonal pairs `i < j` with `H_ij x_i x_j < 0`.
pub fn count_violating_pairs(h: &Array2<f64>, x: &[f64]) -> usize {
    let n = x.len();
    (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| h[[i, j]] * x[i] * x[j] < 0.0)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadobj::QuadObjective;
    use ndarray::array;

    #[test]
    fn toy_hessian_is_diagonalized() {
        let h = array![[2.0, -2.0], [-2.0, 2.0]];
        let g = project_to_submodular(&h, &[1.0, 2.1]).unwrap();
        assert_eq!(g, array![[2.0, 0.0], [0.0, 2.0]]);
        assert!(feasible(&g, &[1.0, 2.1], 0.0));
        assert_eq!(count_violating_pairs(&h, &[1.0, 2.1]), 1);
    }

    #[test]
    fn feasible_input_is_unchanged() {
        let h = array![[1.0, 0.5, -0.2], [0.5, 3.0, -1.0], [-0.2, -1.0, 2.0]];
        let x = [1.0, 2.0, -1.0];
        assert_eq!(project_to_submodular(&h, &x).unwrap(), h);
    }

    #[test]
    fn zero_entry_of_x_keeps_row() {
        let h = array![[1.0, -0.5, 0.7], [-0.5, 3.0, -1.0], [0.7, -1.0, 2.0]];
        let x = [1.0, 0.0, 1.0];
        let g = project_to_submodular(&h, &x).unwrap();
        assert_eq!(g.row(1), h.row(1));
        assert_eq!(g.column(1), h.column(1));
    }

    #[test]
    fn infeasible_example() {
        let g = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(!feasible(&g, &[1.0, -1.0], 0.0));
        assert!(feasible(&array![[-3.0]], &[2.0], 0.0));
    }

    #[test]
    fn projected_objective_is_submodular() {
        let h = array![[1.0, -0.5, 0.7], [-0.5, 3.0, -1.0], [0.7, -1.0, 2.0]];
        let x = vec![1.0, 2.0, -1.5];
        let g = project_to_submodular(&h, &x).unwrap();
        let obj = QuadObjective::new(vec![0.3, -0.1, 0.2], g, x).unwrap();
        assert!(obj.is_pairwise_submodular(obj.structural_tol()).0);
        assert!(obj.verify_lattice_exhaustive().unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(project_to_submodular(&array![[1.0, 2.0], [0.0, 1.0]], &[1.0, 1.0]).is_err());
        assert!(project_to_submodular(&array![[1.0]], &[f64::INFINITY]).is_err());
        assert!(project_to_submodular(&array![[1.0]], &[1.0, 2.0]).is_err());
    }
}
