//! Dense linear algebra, loss primitives, and the Adam optimizer.
//!
//! Everything here is plain f64 with deterministic accumulation order
//! (row-major, left-to-right, no parallel reductions), so repeated runs are
//! bit-identical. File storage elsewhere downcasts to f32; training always
//! upcasts back to f64.

use crate::error::{Error, Result};

/// Probabilities are floored at this value before taking a logarithm, so a
/// degenerate one-hot interpolation yields a large finite loss instead of inf.
pub const PROB_FLOOR: f64 = 1e-300;

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from a row-major buffer. Rejects length mismatches and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NumericInput(format!(
                "non-finite entry {} at flat index {idx}",
                data[idx]
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Identity matrix of size n.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Standard matrix product with a fixed accumulation order: for each
    /// output cell the inner sum runs left-to-right over k.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "matmul {}x{} by {}x{}: inner dimensions differ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self.data[i * self.cols + k] * other.data[k * other.cols + j];
                }
                out.data[i * other.cols + j] = acc;
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::Dimension(format!(
                "matvec {}x{} by vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = 0.0;
            for k in 0..self.cols {
                acc += row[k] * x[k];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Transposed matrix-vector product (xᵀ applied from the left).
    pub fn matvec_transposed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.rows != x.len() {
            return Err(Error::Dimension(format!(
                "transposed matvec {}x{} by vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let xi = x[i];
            for k in 0..self.cols {
                out[k] += xi * row[k];
            }
        }
        Ok(out)
    }

    /// Rank-1 update: self += scale · a ⊗ b, with a indexing rows.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64], scale: f64) -> Result<()> {
        if a.len() != self.rows || b.len() != self.cols {
            return Err(Error::Dimension(format!(
                "outer update {}x{} with vectors {}x{}",
                self.rows,
                self.cols,
                a.len(),
                b.len()
            )));
        }
        for i in 0..self.rows {
            let ai = a[i] * scale;
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for k in 0..self.cols {
                row[k] += ai * b[k];
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax: shifts by the maximum before exponentiating.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::NumericInput("softmax of an empty vector".into()));
    }
    if let Some(idx) = logits.iter().position(|x| !x.is_finite()) {
        return Err(Error::NumericInput(format!(
            "non-finite logit {} at index {idx}",
            logits[idx]
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    Ok(out)
}

/// Negative log-likelihood of `target` under `dist`, with the probability
/// floored at [`PROB_FLOOR`].
pub fn cross_entropy(dist: &[f64], target: u32) -> Result<f64> {
    let t = target as usize;
    if t >= dist.len() {
        return Err(Error::Index(format!(
            "target {t} out of range for a {}-token distribution",
            dist.len()
        )));
    }
    Ok(-dist[t].max(PROB_FLOOR).ln())
}

/// Sum of squared componentwise differences. This is the per-token
/// reconstruction contribution; the caller divides by the sentence count.
pub fn sum_squared_error(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "squared error between vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    let mut acc = 0.0;
    for i in 0..x.len() {
        let d = x[i] - y[i];
        acc += d * d;
    }
    Ok(acc)
}

/// Index of the maximum entry; ties break toward the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Adam optimizer state for one parameter block.
///
/// `step` counts completed updates; moments are stored flat and must match
/// the parameter length.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, param_len: usize) -> Result<Self> {
        if lr <= 0.0 || eps <= 0.0 {
            return Err(Error::Config(format!(
                "Adam requires lr > 0 and eps > 0 (got lr={lr}, eps={eps})"
            )));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::Config(format!(
                "Adam betas must lie in (0,1) (got {beta1}, {beta2})"
            )));
        }
        Ok(AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
        })
    }

    /// Defaults used throughout: lr 1e-3, betas (0.9, 0.999), eps 1e-8.
    pub fn with_defaults(param_len: usize) -> Self {
        AdamState::new(1e-3, 0.9, 0.999, 1e-8, param_len).expect("default Adam hyperparameters")
    }

    /// One bias-corrected update applied in place. Deterministic: two calls
    /// from identical states produce bit-identical parameters.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "Adam update over {} moments with {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Independent triple-loop product used as the matmul oracle.
    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for k in 0..a.cols() {
            for i in 0..a.rows() {
                for j in 0..b.cols() {
                    let v = out.at(i, j) + a.at(i, k) * b.at(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let i2 = Matrix::identity(2);
        let m = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(i2.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_orthogonal_rows() {
        let a = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let b = Matrix::from_vec(2, 1, vec![0.0, 5.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[0.0]);
    }

    #[test]
    fn matmul_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let got = a.matmul(&b).unwrap();
        let want = naive_matmul(&a, &b);
        // The loop orders differ, so compare within strict fp tolerance.
        for (x, y) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3"), "message was: {msg}");
    }

    #[test]
    fn matmul_associative_on_well_conditioned_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 8, 8);
            let b = random_matrix(&mut rng, 8, 8);
            let c = random_matrix(&mut rng, 8, 8);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
                let scale = x.abs().max(y.abs()).max(1.0);
                assert!((x - y).abs() / scale <= 1e-9);
            }
        }
    }

    #[test]
    fn softmax_symmetry() {
        let p = softmax(&[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_closed_form() {
        let p = softmax(&[0.0, 3.0f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariant_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..17).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let shift = rng.gen_range(-1e3..1e3);
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let p = softmax(&logits).unwrap();
            let q = softmax(&shifted).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(p.iter().all(|&x| x > 0.0));
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let mut one_hot = vec![0.0; 4];
        one_hot[2] = 1.0;
        assert_eq!(cross_entropy(&one_hot, 2).unwrap(), 0.0);

        let half = vec![0.5, 0.5];
        assert!((cross_entropy(&half, 0).unwrap() - 0.5f64.ln().abs()).abs() < 1e-12);

        let uniform = vec![1.0 / 20.0; 20];
        assert!((cross_entropy(&uniform, 7).unwrap() - 20f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_floors_zero_probability() {
        let dist = vec![1.0, 0.0];
        let loss = cross_entropy(&dist, 1).unwrap();
        assert!(loss.is_finite());
        assert!(loss > 600.0); // -ln(1e-300)
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_target() {
        assert!(cross_entropy(&[1.0], 1).is_err());
    }

    #[test]
    fn squared_error_cases() {
        assert_eq!(sum_squared_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(sum_squared_error(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(sum_squared_error(&[1.0, 2.0], &[-1.0, 0.0]).unwrap(), 8.0);
        assert!(sum_squared_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn adam_zero_gradients_fixed_point() {
        let mut params = vec![0.3, -0.7, 2.0];
        let before = params.clone();
        let mut state = AdamState::with_defaults(3);
        state.update(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut params = vec![0.0];
        let mut state = AdamState::with_defaults(1);
        state.update(&mut params, &[1.0]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((params[0] - expected).abs() < 1e-18, "got {}", params[0]);
    }

    #[test]
    fn adam_deterministic() {
        let grads = vec![0.5, -0.25, 0.125, 1.5];
        let run = || {
            let mut params = vec![1.0, 2.0, 3.0, 4.0];
            let mut state = AdamState::with_defaults(4);
            for _ in 0..10 {
                state.update(&mut params, &grads).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut state = AdamState::with_defaults(2);
        let mut params = vec![0.0; 3];
        assert!(state.update(&mut params, &[0.0; 3]).is_err());
    }

    #[test]
    fn argmax_lowest_index_tie_break() {
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }
}
