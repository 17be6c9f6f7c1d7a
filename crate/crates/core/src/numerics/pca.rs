//! Deterministic principal component analysis.
//!
//! The covariance matrix is diagonalized with cyclic Jacobi rotations: no
//! randomness, no platform-dependent iteration order, so the same input
//! produces the same basis everywhere.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

const MAX_SWEEPS: usize = 100;
const OFF_DIAG_TOL: f64 = 1e-12;

/// An orthonormal basis ordered by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    /// Unit-norm components, strongest direction first.
    pub components: Vec<Vector>,
    /// Variance captured by each component, non-increasing.
    pub eigenvalues: Vec<f64>,
}

impl PcaBasis {
    /// Projection coefficient of `x` onto component `i`.
    pub fn project(&self, i: usize, x: &Vector) -> Result<f64> {
        self.components[i].dot(x)
    }
}

/// Top-`n` principal components of `rows`, which the caller must already
/// have centered. Components are eigenvectors of the covariance matrix
/// `X^T X / n_rows`, with the sign fixed so the first nonzero coordinate
/// of each component is positive.
pub fn pca_top_components(rows: &Matrix, n: usize) -> Result<PcaBasis> {
    let d = rows.cols();
    if n > d.min(rows.rows()) {
        return Err(Error::Argument(format!(
            "requested {n} components but data is {}x{d}",
            rows.rows()
        )));
    }
    let cov = covariance(rows);
    let (mut eigenvalues, mut vectors) = jacobi_eigen(&cov)?;

    // Sort by descending eigenvalue; break exact ties by original column
    // index so the result never depends on sort internals.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    eigenvalues = order.iter().map(|&i| eigenvalues[i]).collect();
    vectors = order.iter().map(|&i| vectors[i].clone()).collect();

    let mut components = Vec::with_capacity(n);
    for mut v in vectors.into_iter().take(n) {
        fix_sign(&mut v);
        components.push(v);
    }
    Ok(PcaBasis {
        components,
        eigenvalues: eigenvalues.into_iter().take(n).collect(),
    })
}

/// `X^T X / n_rows` of an already-centered matrix.
fn covariance(rows: &Matrix) -> Matrix {
    let (n, d) = rows.shape();
    let mut cov = Matrix::zeros(d, d);
    for r in 0..n {
        let row = rows.row(r);
        for i in 0..d {
            let xi = row[i];
            for j in i..d {
                let v = cov.get(i, j) + xi * row[j];
                cov.set(i, j, v);
            }
        }
    }
    let inv = 1.0 / n as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) * inv;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    cov
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// per-column eigenvalues and eigenvectors (unsorted).
fn jacobi_eigen(sym: &Matrix) -> Result<(Vec<f64>, Vec<Vector>)> {
    let d = sym.rows();
    let mut a = sym.clone();
    let mut v = Matrix::zeros(d, d);
    for i in 0..d {
        v.set(i, i, 1.0);
    }

    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a.get(i, j).abs();
            }
        }
        if off <= OFF_DIAG_TOL {
            let eigenvalues: Vec<f64> = (0..d).map(|i| a.get(i, i)).collect();
            let vectors: Vec<Vector> = (0..d)
                .map(|c| Vector::new((0..d).map(|r| v.get(r, c)).collect()))
                .collect();
            return Ok((eigenvalues, vectors));
        }
        for p in 0..d {
            for q in (p + 1)..d {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    Err(Error::Numerical(format!(
        "Jacobi eigendecomposition did not converge in {MAX_SWEEPS} sweeps"
    )))
}

/// One Jacobi rotation zeroing `a[p][q]`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
    // Stable tangent of the rotation angle.
    let t = if theta >= 0.0 {
        1.0 / (theta + (1.0 + theta * theta).sqrt())
    } else {
        1.0 / (theta - (1.0 + theta * theta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    let d = a.rows();
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
    for i in 0..d {
        if i != p && i != q {
            let aip = a.get(i, p);
            let aiq = a.get(i, q);
            a.set(i, p, aip - s * (aiq + tau * aip));
            a.set(p, i, a.get(i, p));
            a.set(i, q, aiq + s * (aip - tau * aiq));
            a.set(q, i, a.get(i, q));
        }
    }
    for i in 0..d {
        let vip = v.get(i, p);
        let viq = v.get(i, q);
        v.set(i, p, vip - s * (viq + tau * vip));
        v.set(i, q, viq + s * (vip - tau * viq));
    }
}

fn fix_sign(v: &mut Vector) {
    for i in 0..v.dim() {
        if v[i] != 0.0 {
            if v[i] < 0.0 {
                *v = v.scale(-1.0);
            }
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_of(rows: &[&[f64]]) -> Matrix {
        let vs: Vec<Vector> = rows.iter().map(|r| Vector::new(r.to_vec())).collect();
        Matrix::from_rows(&vs).unwrap()
    }

    #[test]
    fn diagonal_line_has_unit_diagonal_component() {
        // Covariance [[2.5, 2.5], [2.5, 2.5]]: eigenvector (1,1)/sqrt(2), eigenvalue 5.
        let data = matrix_of(&[&[1.0, 1.0], &[-1.0, -1.0], &[2.0, 2.0], &[-2.0, -2.0]]);
        let basis = pca_top_components(&data, 2).unwrap();
        let u1 = &basis.components[0];
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        assert!((u1[0] - inv_sqrt2).abs() < 1e-12);
        assert!((u1[1] - inv_sqrt2).abs() < 1e-12);
        assert!((basis.eigenvalues[0] - 5.0).abs() < 1e-12);
        assert!(basis.eigenvalues[1].abs() < 1e-12);
    }

    #[test]
    fn rank_one_data_on_axis() {
        let data = matrix_of(&[&[1.0, 0.0], &[-1.0, 0.0], &[3.0, 0.0], &[-3.0, 0.0]]);
        let basis = pca_top_components(&data, 2).unwrap();
        assert!((basis.components[0][0] - 1.0).abs() < 1e-12);
        assert!(basis.components[0][1].abs() < 1e-12);
        assert!(basis.eigenvalues[1].abs() < 1e-12);
    }

    #[test]
    fn components_orthonormal_and_variances_match() {
        // Deterministic pseudo-random data via a small LCG.
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let d = 6;
        let n = 80;
        let mut rows = Vec::new();
        for _ in 0..n {
            rows.push(Vector::new((0..d).map(|_| next()).collect()));
        }
        let mut m = Matrix::from_rows(&rows).unwrap();
        let mean = m.mean_row();
        for r in 0..n {
            for c in 0..d {
                let v = m.get(r, c) - mean[c];
                m.set(r, c, v);
            }
        }
        let basis = pca_top_components(&m, d).unwrap();
        for i in 0..d {
            assert!((basis.components[i].norm() - 1.0).abs() < 1e-10);
            for j in (i + 1)..d {
                let dot = basis.components[i].dot(&basis.components[j]).unwrap();
                assert!(dot.abs() < 1e-8, "components {i},{j} not orthogonal: {dot}");
            }
            if i + 1 < d {
                assert!(basis.eigenvalues[i] >= basis.eigenvalues[i + 1]);
            }
            // Variance of projections equals the eigenvalue.
            let var: f64 = (0..n)
                .map(|r| {
                    let p = basis.project(i, &m.row_vector(r)).unwrap();
                    p * p
                })
                .sum::<f64>()
                / n as f64;
            assert!(
                (var - basis.eigenvalues[i]).abs() < 1e-8,
                "variance {var} vs eigenvalue {}",
                basis.eigenvalues[i]
            );
        }
    }

    #[test]
    fn too_many_components_is_error() {
        let data = matrix_of(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(pca_top_components(&data, 3).is_err());
    }
}
