use crate::error::{Error, Result};

/// A dense column of `f64` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Vector {
            data: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::dim("dot", self.dim(), other.dim()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        if self.dim() != other.dim() {
            return Err(Error::dim("add", self.dim(), other.dim()));
        }
        Ok(Vector::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        if self.dim() != other.dim() {
            return Err(Error::dim("sub", self.dim(), other.dim()));
        }
        Ok(Vector::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub fn scale(&self, c: f64) -> Vector {
        Vector::new(self.data.iter().map(|x| x * c).collect())
    }

    pub fn hadamard(&self, other: &Vector) -> Result<Vector> {
        if self.dim() != other.dim() {
            return Err(Error::dim("hadamard", self.dim(), other.dim()));
        }
        Ok(Vector::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        ))
    }

    pub fn tanh(&self) -> Vector {
        Vector::new(self.data.iter().map(|x| x.tanh()).collect())
    }

    pub fn sigmoid(&self) -> Vector {
        Vector::new(self.data.iter().map(|x| sigmoid(*x)).collect())
    }

    pub fn concat(&self, other: &Vector) -> Vector {
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Vector::new(data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A dense row-major matrix of `f64` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dim(
                "matrix_new",
                format!("{rows}x{cols}"),
                data.len(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix whose rows are the given vectors.
    pub fn from_rows(rows: &[Vector]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Argument("from_rows: no rows given".into()));
        }
        let cols = rows[0].dim();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.dim() != cols {
                return Err(Error::dim("from_rows", cols, format!("row {i}: {}", r.dim())));
            }
            data.extend_from_slice(r.as_slice());
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_vector(&self, r: usize) -> Vector {
        Vector::new(self.row(r).to_vec())
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &Vector) -> Result<Vector> {
        if self.cols != x.dim() {
            return Err(Error::dim(
                "matvec",
                format!("{}x{}", self.rows, self.cols),
                x.dim(),
            ));
        }
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            *o = row.iter().zip(x.as_slice()).map(|(a, b)| a * b).sum();
        }
        Ok(Vector::new(out))
    }

    /// Transposed product `self^T * x`.
    pub fn matvec_t(&self, x: &Vector) -> Result<Vector> {
        if self.rows != x.dim() {
            return Err(Error::dim(
                "matvec_t",
                format!("{}x{}", self.rows, self.cols),
                x.dim(),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xi = x[r];
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.data[r * self.cols + c] * xi;
            }
        }
        Ok(Vector::new(out))
    }

    /// Arithmetic mean of the rows.
    pub fn mean_row(&self) -> Vector {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.data[r * self.cols + c];
            }
        }
        let inv = 1.0 / self.rows as f64;
        Vector::new(out.into_iter().map(|v| v * inv).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Numerically stable softmax: subtracts the maximum before exponentiating,
/// so the output is invariant to shifting all logits by a constant.
pub fn softmax(z: &Vector) -> Result<Vector> {
    if z.dim() == 0 {
        return Err(Error::Argument("softmax of empty vector".into()));
    }
    let max = z
        .as_slice()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.as_slice().iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(Vector::new(exps.into_iter().map(|e| e / sum).collect()))
}

/// Cosine similarity `a.b / (|a||b|)`, in `[-1, 1]`.
pub fn cosine_similarity(a: &Vector, b: &Vector) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numerical(
            "cosine similarity of a zero-norm vector".into(),
        ));
    }
    Ok(a.dot(b)? / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_of_zero_is_zero() {
        let v = Vector::new(vec![0.0, 0.0]);
        assert_eq!(v.tanh().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn concat_appends() {
        let a = Vector::new(vec![1.0, 2.0]);
        let b = Vector::new(vec![3.0]);
        assert_eq!(a.concat(&b).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn mean_of_rows() {
        let m = Matrix::new(2, 2, vec![1.0, 3.0, 3.0, 5.0]).unwrap();
        assert_eq!(m.mean_row().as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let m = Matrix::zeros(2, 3);
        let x = Vector::zeros(2);
        let err = m.matvec(&x).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains('2'), "{err}");
    }

    #[test]
    fn softmax_uniform_logits() {
        let p = softmax(&Vector::new(vec![0.0, 0.0, 0.0])).unwrap();
        for v in p.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_stable_under_large_shift() {
        let p = softmax(&Vector::new(vec![1000.0, 1000.0])).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_of_log_weights() {
        let z = Vector::new(vec![1f64.ln(), 2f64.ln(), 3f64.ln()]);
        let p = softmax(&z).unwrap();
        let expect = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for (got, want) in p.as_slice().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_empty_is_error() {
        assert!(softmax(&Vector::new(vec![])).is_err());
    }

    #[test]
    fn cosine_of_identical_vectors() {
        let a = Vector::new(vec![0.3, -0.7, 2.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_orthogonal() {
        let a = Vector::new(vec![1.0, 0.0]);
        let b = Vector::new(vec![0.0, 1.0]);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn cosine_hand_value() {
        let a = Vector::new(vec![1.0, 1.0]);
        let b = Vector::new(vec![1.0, 0.0]);
        let got = cosine_similarity(&a, &b).unwrap();
        assert!((got - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cosine_zero_norm_is_error() {
        let a = Vector::zeros(2);
        let b = Vector::new(vec![1.0, 0.0]);
        assert!(cosine_similarity(&a, &b).is_err());
    }
}
