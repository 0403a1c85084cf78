use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense row-major array of `f64` with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub(crate) grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(&[1], value)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    /// Gaussian init with the given standard deviation.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(shape);
        for v in &mut t.data {
            *v = rng.sample::<f64, _>(StandardNormal) * std;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.fill(0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.data.len());
        let g = self.grad.get_or_insert_with(|| vec![0.0; delta.len()]);
        for (g, d) in g.iter_mut().zip(delta) {
            *g += d;
        }
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Trailing dimension; 1 for scalars.
    pub fn cols(&self) -> usize {
        if self.shape.len() < 2 {
            if self.shape.is_empty() {
                1
            } else {
                self.shape[0]
            }
        } else {
            self.shape[self.shape.len() - 1]
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Plain matrix product without graph recording.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul(&self.data, &other.data, &mut out, m, k, n);
        Tensor::new(vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(Error::shape("transpose", &self.shape, &[]));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        kernels::transpose(&self.data, &mut out, m, n);
        Tensor::new(vec![n, m], out)
    }
}

/// Numerically stable softmax along `axis` of a tensor of any rank.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.shape().len() {
        return Err(Error::InvalidArgument(format!(
            "softmax axis {axis} out of range for shape {:?}",
            x.shape()
        )));
    }
    let mut out = x.data().to_vec();
    kernels::softmax_axis(&mut out, x.shape(), axis);
    Tensor::new(x.shape().to_vec(), out)
}

pub(crate) mod kernels {
    /// `out += a[m×k] · b[k×n]`
    pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            let arow = &a[i * k..(i + 1) * k];
            for (p, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }

    /// `out += a[m×k] · b[n×k]ᵀ`
    pub fn matmul_bt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &b[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (x, y) in arow.iter().zip(brow) {
                    acc += x * y;
                }
                out[i * n + j] += acc;
            }
        }
    }

    /// `out += a[k×m]ᵀ · b[k×n]`
    pub fn matmul_at(a: &[f64], b: &[f64], out: &mut [f64], k: usize, m: usize, n: usize) {
        for p in 0..k {
            let arow = &a[p * m..(p + 1) * m];
            let brow = &b[p * n..(p + 1) * n];
            for (i, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }

    pub fn transpose(a: &[f64], out: &mut [f64], m: usize, n: usize) {
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = a[i * n + j];
            }
        }
    }

    pub fn softmax_slice(v: &mut [f64]) {
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in v.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in v.iter_mut() {
            *x /= sum;
        }
    }

    /// Splits `shape` around `axis` into (outer, len, inner) strides.
    pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        let outer = shape[..axis].iter().product();
        let len = shape[axis];
        let inner = shape[axis + 1..].iter().product();
        (outer, len, inner)
    }

    pub fn softmax_axis(data: &mut [f64], shape: &[usize], axis: usize) {
        let (outer, len, inner) = axis_split(shape, axis);
        if inner == 1 {
            for chunk in data.chunks_mut(len) {
                softmax_slice(chunk);
            }
            return;
        }
        let mut buf = vec![0.0; len];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = data[base + j * inner];
                }
                softmax_slice(&mut buf);
                for (j, b) in buf.iter().enumerate() {
                    data[base + j * inner] = *b;
                }
            }
        }
    }
}
