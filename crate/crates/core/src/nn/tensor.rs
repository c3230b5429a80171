/// Dense row-major `f32` tensor. Image tensors are channels-last.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// Panics if `data.len()` disagrees with `shape`.
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data does not match shape {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "cannot reshape {:?} to {shape:?}",
            self.shape
        );
        self.shape = shape.to_vec();
        self
    }

    /// Size of the trailing (channel) axis.
    pub fn channels(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "shape mismatch in add");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenates `[.., a]` and `[.., b]` along the last axis.
    pub fn concat_last(a: &Tensor, b: &Tensor) -> Tensor {
        let (ca, cb) = (a.channels(), b.channels());
        assert_eq!(
            a.shape[..a.shape.len() - 1],
            b.shape[..b.shape.len() - 1],
            "leading dims differ in concat"
        );
        let rows = a.len() / ca;
        let mut out = Vec::with_capacity(a.len() + b.len());
        for r in 0..rows {
            out.extend_from_slice(&a.data[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&b.data[r * cb..(r + 1) * cb]);
        }
        let mut shape = a.shape.clone();
        *shape.last_mut().unwrap() = ca + cb;
        Tensor::from_vec(&shape, out)
    }

    /// Inverse of [`Tensor::concat_last`].
    pub fn split_last(&self, first: usize) -> (Tensor, Tensor) {
        let c = self.channels();
        assert!(first <= c);
        let rows = self.len() / c;
        let second = c - first;
        let mut a = Vec::with_capacity(rows * first);
        let mut b = Vec::with_capacity(rows * second);
        for r in 0..rows {
            a.extend_from_slice(&self.data[r * c..r * c + first]);
            b.extend_from_slice(&self.data[r * c + first..(r + 1) * c]);
        }
        let mut sa = self.shape.clone();
        *sa.last_mut().unwrap() = first;
        let mut sb = self.shape.clone();
        *sb.last_mut().unwrap() = second;
        (Tensor::from_vec(&sa, a), Tensor::from_vec(&sb, b))
    }
}

/// `c = op(a) * op(b) + beta * c` for row-major matrices, where `op(a)` is
/// `m x k` and `op(b)` is `k x n`. A transposed operand is stored in its
/// untransposed layout (`k x m` for `a`, `n x k` for `b`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    trans_a: bool,
    b: &[f32],
    trans_b: bool,
    c: &mut [f32],
    beta: f32,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds checked above; strides describe dense row-major storage.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
