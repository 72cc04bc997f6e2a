//! Dense vectors and matrices with the handful of operations the
//! fixed network architectures need. Everything is `f64`; analytic
//! backward passes live next to their forward ops.

use crate::error::{CoreError, Result};

/// Dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor1 {
    data: Vec<f64>,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor1 {
    pub fn zeros(len: usize) -> Self {
        Tensor1 {
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor1 { data }
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Tensor1 {
            data: data.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn dot(&self, other: &Tensor1) -> Result<f64> {
        if self.len() != other.len() {
            return Err(shape_err("dot", self.len().to_string(), other.len().to_string()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Tensor1 {
        Tensor1 {
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Tensor1) -> Result<Tensor1> {
        if self.len() != other.len() {
            return Err(shape_err("add", self.len().to_string(), other.len().to_string()));
        }
        Ok(Tensor1 {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor1) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Unit-norm copy; errors on zero norm.
    pub fn normalized(&self) -> Result<Tensor1> {
        let n = self.norm();
        if n == 0.0 {
            return Err(CoreError::DegenerateVector("normalized"));
        }
        Ok(self.scale(1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for Tensor1 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Tensor1 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor2 { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor2::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// y = W x
    pub fn matvec(&self, x: &Tensor1) -> Result<Tensor1> {
        if self.cols != x.len() {
            return Err(shape_err(
                "matvec",
                format!("{}x{}", self.rows, self.cols),
                x.len().to_string(),
            ));
        }
        let mut y = vec![0.0; self.rows];
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *out = row.iter().zip(x.data()).map(|(a, b)| a * b).sum();
        }
        Ok(Tensor1::from_vec(y))
    }

    /// x = Wᵀ y (used to push gradients back through a linear map).
    pub fn matvec_t(&self, y: &Tensor1) -> Result<Tensor1> {
        if self.rows != y.len() {
            return Err(shape_err(
                "matvec_t",
                format!("{}x{}", self.rows, self.cols),
                y.len().to_string(),
            ));
        }
        let mut x = vec![0.0; self.cols];
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in x.iter_mut().zip(row) {
                *o += w * yr;
            }
        }
        Ok(Tensor1::from_vec(x))
    }

    /// Accumulate the outer product y ⊗ x into self (dW += y xᵀ).
    pub fn add_outer(&mut self, y: &Tensor1, x: &Tensor1) {
        debug_assert_eq!(self.rows, y.len());
        debug_assert_eq!(self.cols, x.len());
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (o, xv) in row.iter_mut().zip(x.data()) {
                *o += yr * xv;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn shape_err(op: &'static str, expected: String, got: String) -> CoreError {
    CoreError::ShapeMismatch { op, expected, got }
}

/// y = W x + b
pub fn linear(x: &Tensor1, w: &Tensor2, b: &Tensor1) -> Result<Tensor1> {
    if w.rows() != b.len() {
        return Err(shape_err(
            "linear",
            format!("{} bias rows", w.rows()),
            b.len().to_string(),
        ));
    }
    let mut y = w.matvec(x)?;
    y.add_assign(b);
    Ok(y)
}

/// Backward pass of `linear`: given dL/dy, returns dL/dx and accumulates
/// dL/dW, dL/db into the provided gradient tensors.
pub fn linear_backward(
    dy: &Tensor1,
    x: &Tensor1,
    w: &Tensor2,
    dw: &mut Tensor2,
    db: &mut Tensor1,
) -> Result<Tensor1> {
    if dy.len() != w.rows() {
        return Err(shape_err("linear_backward", w.rows().to_string(), dy.len().to_string()));
    }
    dw.add_outer(dy, x);
    db.add_assign(dy);
    w.matvec_t(dy)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn relu_vec(x: &Tensor1) -> Tensor1 {
    Tensor1::from_vec(x.data().iter().map(|&v| relu(v)).collect())
}

/// dL/dx for y = relu(x), given dL/dy and the pre-activation x.
pub fn relu_backward(dy: &Tensor1, pre: &Tensor1) -> Tensor1 {
    Tensor1::from_vec(
        dy.data()
            .iter()
            .zip(pre.data())
            .map(|(&d, &p)| if p > 0.0 { d } else { 0.0 })
            .collect(),
    )
}

pub fn tanh_vec(x: &Tensor1) -> Tensor1 {
    Tensor1::from_vec(x.data().iter().map(|v| v.tanh()).collect())
}

/// cos(u, v) = uᵀv / (‖u‖‖v‖); errors on a zero-norm argument.
pub fn cosine(u: &Tensor1, v: &Tensor1) -> Result<f64> {
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Err(CoreError::DegenerateVector("cosine"));
    }
    let c = u.dot(v)? / (nu * nv);
    // Guard against rounding pushing |c| past 1.
    Ok(c.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_identity_passthrough() {
        let w = Tensor2::identity(2);
        let b = Tensor1::zeros(2);
        let x = Tensor1::from_slice(&[3.0, -1.0]);
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[3.0, -1.0]);
    }

    #[test]
    fn linear_zero_weight_returns_bias() {
        let w = Tensor2::zeros(2, 3);
        let b = Tensor1::from_slice(&[1.0, 2.0]);
        let x = Tensor1::from_slice(&[5.0, -7.0, 0.5]);
        let y = linear(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_shape_mismatch_is_error() {
        let w = Tensor2::zeros(2, 3);
        let b = Tensor1::zeros(2);
        let x = Tensor1::zeros(4);
        assert!(matches!(
            linear(&x, &w, &b),
            Err(CoreError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn cosine_basic_cases() {
        let u = Tensor1::from_slice(&[1.0, 2.0]);
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);

        let a = Tensor1::from_slice(&[1.0, 0.0]);
        let b = Tensor1::from_slice(&[0.0, 1.0]);
        assert_eq!(cosine(&a, &b).unwrap(), 0.0);

        let v = Tensor1::from_slice(&[2.0, 4.0]);
        assert!((cosine(&u, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_zero_norm_is_error() {
        let u = Tensor1::zeros(2);
        let v = Tensor1::from_slice(&[1.0, 0.0]);
        assert!(matches!(
            cosine(&u, &v),
            Err(CoreError::DegenerateVector(_))
        ));
    }

    #[test]
    fn matvec_t_transposes() {
        let w = Tensor2::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let y = Tensor1::from_slice(&[1.0, 1.0]);
        let x = w.matvec_t(&y).unwrap();
        assert_eq!(x.data(), &[5.0, 7.0, 9.0]);
    }
}
