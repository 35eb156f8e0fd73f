use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("shape mismatch: {0}")]
pub struct ShapeError(pub String);

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, ShapeError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(ShapeError(format!("{} values for shape {:?}", data.len(), shape)));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Stacks equally long rows into a matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ShapeError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(ShapeError("ragged rows".into()));
        }
        Ok(Tensor { shape: vec![rows.len(), cols], data: rows.concat() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a matrix (the first dimension of a 1-D tensor is its length, with one column).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Rows `start..end` of a matrix as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor {
        let c = self.cols();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor { shape, data: self.data[start * c..end * c].to_vec() }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Dot product with four interleaved partial sums. The summation order is fixed, so
/// results are reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out = W x + b` with W stored row-major as (out × in).
pub fn affine(weights: &Tensor, bias: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = weights.cols();
    debug_assert_eq!(cols, x.len());
    for (o, (row, b)) in out.iter_mut().zip(weights.data().chunks_exact(cols).zip(bias)) {
        *o = dot(row, x) + b;
    }
}

/// `grad_w += d ⊗ x`
pub fn add_outer(grad_w: &mut Tensor, d: &[f64], x: &[f64]) {
    let cols = grad_w.cols();
    for (row, &di) in grad_w.data_mut().chunks_exact_mut(cols).zip(d) {
        if di != 0.0 {
            for (g, &xj) in row.iter_mut().zip(x) {
                *g += di * xj;
            }
        }
    }
}

/// `dx += Wᵀ d`
pub fn add_transposed(weights: &Tensor, d: &[f64], dx: &mut [f64]) {
    let cols = weights.cols();
    for (row, &di) in weights.data().chunks_exact(cols).zip(d) {
        if di != 0.0 {
            for (g, &w) in dx.iter_mut().zip(row) {
                *g += di * w;
            }
        }
    }
}
