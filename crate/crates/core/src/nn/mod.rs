//! Small dense-network engine: fully connected layers, ReLU, residual
//! stacks, softmax cross-entropy, explicit backward passes and Adam.
//!
//! Everything is `f64`. Batches are row-major matrices, one row per sample.
//! Matrix products go through `matrixmultiply`, whose accumulation order
//! depends only on the operand shapes, so repeated evaluation of the same
//! parameters on the same batch is bitwise reproducible.

mod adam;
pub mod checkpoint;

pub use adam::{Adam, AdamConfig};

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `[self | other]` column-wise.
    pub fn hcat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Matrix {
            rows: self.rows,
            cols,
            data,
        }
    }

    /// Splits columns at `at` into `(left, right)`.
    pub fn hsplit(&self, at: usize) -> (Matrix, Matrix) {
        let mut left = Matrix::zeros(self.rows, at);
        let mut right = Matrix::zeros(self.rows, self.cols - at);
        for i in 0..self.rows {
            let r = self.row(i);
            left.row_mut(i).copy_from_slice(&r[..at]);
            right.row_mut(i).copy_from_slice(&r[at..]);
        }
        (left, right)
    }
}

/// `c = beta * c + a * b^T` where `a` is `m x k` and `b` is `n x k`.
fn gemm_abt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, beta: f64) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: bounds asserted above; strides describe dense row-major
    // layouts of exactly those extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = beta * c + a * b` where `a` is `m x k` and `b` is `k x n`.
fn gemm_ab(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, beta: f64) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as in `gemm_abt`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = beta * c + a^T * b` where `a` is `k x m` and `b` is `k x n`.
fn gemm_atb(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, beta: f64) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as in `gemm_abt`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Fully connected layer, `y = W x + b` with `W` stored `output x input`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            input,
            output,
            weight: vec![0.0; input * output],
            bias: vec![0.0; output],
        }
    }

    /// He-uniform weights, zero bias.
    pub fn he_uniform<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / input as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        Dense {
            input,
            output,
            weight: (0..input * output).map(|_| dist.sample(rng)).collect(),
            bias: vec![0.0; output],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols != self.input {
            return Err(Error::Shape(format!(
                "layer expects {} inputs, batch has {}",
                self.input, x.cols
            )));
        }
        let mut y = Matrix::zeros(x.rows, self.output);
        for i in 0..x.rows {
            y.row_mut(i).copy_from_slice(&self.bias);
        }
        gemm_abt(&x.data, &self.weight, &mut y.data, x.rows, self.input, self.output, 1.0);
        Ok(y)
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the layer input.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Dense) -> Matrix {
        debug_assert_eq!(dy.cols, self.output);
        debug_assert_eq!(dy.rows, x.rows);
        let n = x.rows;
        gemm_atb(&dy.data, &x.data, &mut grad.weight, self.output, n, self.input, 1.0);
        for i in 0..n {
            for (g, d) in grad.bias.iter_mut().zip(dy.row(i)) {
                *g += d;
            }
        }
        let mut dx = Matrix::zeros(n, self.input);
        gemm_ab(&dy.data, &self.weight, &mut dx.data, n, self.output, self.input, 0.0);
        dx
    }
}

/// Linear + ReLU layers. With `residual`, the first `output` columns of the
/// stack input are added to the final activation.
#[derive(Debug, Clone)]
pub struct MlpStack {
    pub layers: Vec<Dense>,
    pub residual: bool,
    generation: u64,
}

impl PartialEq for MlpStack {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.residual == other.residual
    }
}

/// Activations saved by [`MlpStack::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct StackCache {
    input: Matrix,
    /// Post-ReLU output of every layer.
    activations: Vec<Matrix>,
    /// Final activation plus skip, for residual stacks.
    residual_output: Option<Matrix>,
    generation: u64,
}

impl StackCache {
    pub fn output(&self) -> &Matrix {
        self.residual_output
            .as_ref()
            .or(self.activations.last())
            .unwrap_or(&self.input)
    }

    /// Which ReLU units are active, layer by layer, row-major.
    pub fn relu_mask(&self) -> impl Iterator<Item = bool> + '_ {
        self.activations.iter().flat_map(|m| m.data.iter().map(|&v| v > 0.0))
    }
}

impl MlpStack {
    pub fn new(layers: Vec<Dense>, residual: bool) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].output != w[1].input {
                return Err(Error::Shape(format!(
                    "layer widths do not chain: {} then {}",
                    w[0].output, w[1].input
                )));
            }
        }
        if residual {
            let (first, last) = match (layers.first(), layers.last()) {
                (Some(f), Some(l)) => (f, l),
                _ => return Err(Error::Shape("empty residual stack".into())),
            };
            if first.input < last.output {
                return Err(Error::Shape(format!(
                    "residual skip needs {} input columns, stack has {}",
                    last.output, first.input
                )));
            }
        }
        Ok(MlpStack {
            layers,
            residual,
            generation: 0,
        })
    }

    /// He-initialized stack with the given widths (`widths[0]` is the input).
    pub fn init<R: Rng>(widths: &[usize], residual: bool, rng: &mut R) -> Result<Self> {
        let layers = widths
            .windows(2)
            .map(|w| Dense::he_uniform(w[0], w[1], rng))
            .collect();
        MlpStack::new(layers, residual)
    }

    pub fn zeros_like(&self) -> Self {
        MlpStack {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input, l.output))
                .collect(),
            residual: self.residual,
            generation: 0,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Marks parameters as modified, invalidating outstanding caches.
    pub fn touch(&mut self) {
        self.generation += 1;
    }

    pub fn forward(&self, x: &Matrix) -> Result<StackCache> {
        let mut activations: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut y = layer.forward(activations.last().unwrap_or(x))?;
            y.data.iter_mut().for_each(|v| *v = v.max(0.0));
            activations.push(y);
        }
        let residual_output = self.residual.then(|| {
            let mut out = activations.last().expect("non-empty residual stack").clone();
            for i in 0..x.rows {
                let skip = &x.row(i)[..out.cols];
                for (o, s) in out.row_mut(i).iter_mut().zip(skip) {
                    *o += s;
                }
            }
            out
        });
        Ok(StackCache {
            input: x.clone(),
            activations,
            residual_output,
            generation: self.generation,
        })
    }

    /// Reverse pass; accumulates into `grad` (shaped like `self`) and
    /// returns the gradient with respect to the stack input.
    pub fn backward(&self, cache: &StackCache, dy: &Matrix, grad: &mut MlpStack) -> Result<Matrix> {
        if cache.generation != self.generation {
            return Err(Error::Shape("stale forward cache: parameters changed since forward".into()));
        }
        if dy.rows != cache.input.rows || dy.cols != self.output_width() {
            return Err(Error::Shape(format!(
                "upstream gradient {}x{} does not match output {}x{}",
                dy.rows,
                dy.cols,
                cache.input.rows,
                self.output_width()
            )));
        }
        let mut d = dy.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = &cache.activations[i];
            for (g, &a) in d.data.iter_mut().zip(&act.data) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            let x = if i == 0 { &cache.input } else { &cache.activations[i - 1] };
            d = layer.backward(x, &d, &mut grad.layers[i]);
        }
        if self.residual {
            let out = self.output_width();
            for r in 0..dy.rows {
                for (g, u) in d.row_mut(r)[..out].iter_mut().zip(dy.row(r)) {
                    *g += u;
                }
            }
        }
        Ok(d)
    }

    pub fn params(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }
}

/// Row-wise softmax.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean softmax cross-entropy over the batch.
#[derive(Debug, Clone)]
pub struct XentOutput {
    /// Mean loss in nats.
    pub loss: f64,
    /// Gradient of the mean loss with respect to the logits.
    pub grad: Matrix,
}

impl XentOutput {
    pub fn bits(&self) -> f64 {
        self.loss / std::f64::consts::LN_2
    }
}

pub fn softmax_xent(logits: &Matrix, targets: &[u8]) -> Result<XentOutput> {
    if logits.rows != targets.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} targets",
            logits.rows,
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| usize::from(t) >= logits.cols) {
        return Err(Error::Shape(format!("target {t} outside {} classes", logits.cols)));
    }
    let n = logits.rows.max(1) as f64;
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = grad.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[usize::from(t)];
        for v in row.iter_mut() {
            *v = (*v - log_z).exp() / n;
        }
        row[usize::from(t)] -= 1.0 / n;
    }
    Ok(XentOutput {
        loss: total / n,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_matrix(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Matrix {
        let d = Uniform::new(-1.0, 1.0).unwrap();
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| d.sample(r)).collect()).unwrap()
    }

    /// Triple-loop reference for one Linear + ReLU layer.
    fn oracle_layer(l: &Dense, x: &Matrix, relu: bool) -> Matrix {
        let mut y = Matrix::zeros(x.rows, l.output);
        for i in 0..x.rows {
            for o in 0..l.output {
                let mut s = l.bias[o];
                for k in 0..l.input {
                    s += l.weight[o * l.input + k] * x.row(i)[k];
                }
                y.row_mut(i)[o] = if relu { s.max(0.0) } else { s };
            }
        }
        y
    }

    #[test]
    fn identity_layer_is_relu() {
        let mut l = Dense::zeros(3, 3);
        for i in 0..3 {
            l.weight[i * 3 + i] = 1.0;
        }
        let s = MlpStack::new(vec![l], false).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5]]);
        assert_eq!(s.forward(&x).unwrap().output().data, vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn zero_weights_broadcast_bias() {
        let mut l = Dense::zeros(4, 2);
        l.bias = vec![0.25, 3.0];
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0], [-1.0, 0.0, 9.0, 2.0]]);
        assert_eq!(l.forward(&x).unwrap().data, vec![0.25, 3.0, 0.25, 3.0]);
    }

    #[test]
    fn two_layer_matches_oracle() {
        let mut r = rng(3);
        let s = MlpStack::init(&[7, 13, 5], false, &mut r).unwrap();
        let mut s = s;
        for l in &mut s.layers {
            l.bias.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
        }
        let x = random_matrix(11, 7, &mut r);
        let got = s.forward(&x).unwrap();
        let h = oracle_layer(&s.layers[0], &x, true);
        let want = oracle_layer(&s.layers[1], &h, true);
        for (a, b) in got.output().data.iter().zip(&want.data) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn shape_mismatch_is_error() {
        let s = MlpStack::init(&[4, 3], false, &mut rng(0)).unwrap();
        assert!(matches!(s.forward(&Matrix::zeros(2, 5)), Err(Error::Shape(_))));
        assert!(MlpStack::new(vec![Dense::zeros(2, 3), Dense::zeros(4, 1)], false).is_err());
        assert!(MlpStack::new(vec![Dense::zeros(2, 3)], true).is_err());
    }

    #[test]
    fn uniform_logits_cost_eight_bits() {
        let logits = Matrix::zeros(3, 256);
        let out = softmax_xent(&logits, &[0, 17, 255]).unwrap();
        assert!((out.loss - 256f64.ln()).abs() < 1e-12);
        assert!((out.bits() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn confident_logit_costs_nothing() {
        let mut logits = Matrix::zeros(1, 256);
        logits.data[42] = 100.0;
        let out = softmax_xent(&logits, &[42]).unwrap();
        assert!(out.loss < 1e-40);
    }

    #[test]
    fn xent_gradient_matches_central_differences() {
        let mut r = rng(9);
        let logits = random_matrix(4, 256, &mut r);
        let targets = [3u8, 200, 0, 77];
        let out = softmax_xent(&logits, &targets).unwrap();
        let h = 1e-5;
        for idx in (0..logits.data.len()).step_by(7) {
            let mut plus = logits.clone();
            plus.data[idx] += h;
            let mut minus = logits.clone();
            minus.data[idx] -= h;
            let fd = (softmax_xent(&plus, &targets).unwrap().loss
                - softmax_xent(&minus, &targets).unwrap().loss)
                / (2.0 * h);
            let a = out.grad.data[idx];
            let rel = (a - fd).abs() / a.abs().max(fd.abs());
            assert!(rel < 1e-6, "idx {idx}: analytic {a} numeric {fd} rel {rel}");
        }
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut r = rng(1);
        let mut logits = random_matrix(5, 256, &mut r);
        logits.data.iter_mut().for_each(|v| *v *= 30.0);
        let p = softmax(&logits);
        for i in 0..p.rows {
            let s: f64 = p.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.row(i).iter().all(|&v| v > 0.0));
        }
    }

    fn stack_loss(s: &MlpStack, head: &Dense, x: &Matrix, t: &[u8]) -> f64 {
        let h = s.forward(x).unwrap();
        softmax_xent(&head.forward(h.output()).unwrap(), t).unwrap().loss
    }

    fn check_stack_gradients(widths: &[usize], residual: bool, seed: u64) {
        let mut r = rng(seed);
        let mut s = MlpStack::init(widths, residual, &mut r).unwrap();
        for l in &mut s.layers {
            l.bias.iter_mut().for_each(|b| *b = r.random_range(-0.1..0.1));
        }
        let out = *widths.last().unwrap();
        let head = Dense::he_uniform(out, 8, &mut r);
        let x = random_matrix(3, widths[0], &mut r);
        let t = [1u8, 5, 7];

        let cache = s.forward(&x).unwrap();
        let logits = head.forward(cache.output()).unwrap();
        let xent = softmax_xent(&logits, &t).unwrap();
        let mut head_grad = Dense::zeros(out, 8);
        let dh = head.backward(cache.output(), &xent.grad, &mut head_grad);
        let mut grad = s.zeros_like();
        let dx = s.backward(&cache, &dh, &mut grad).unwrap();

        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for li in 0..s.layers.len() {
            for pi in 0..s.layers[li].weight.len() + s.layers[li].bias.len() {
                let analytic = if pi < s.layers[li].weight.len() {
                    grad.layers[li].weight[pi]
                } else {
                    grad.layers[li].bias[pi - s.layers[li].weight.len()]
                };
                let eval = |delta: f64| {
                    let mut p = s.clone();
                    let l = &mut p.layers[li];
                    if pi < l.weight.len() {
                        l.weight[pi] += delta;
                    } else {
                        l.bias[pi - l.weight.len()] += delta;
                    }
                    stack_loss(&p, &head, &x, &t)
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let scale = analytic.abs().max(fd.abs());
                if scale > 1e-7 {
                    worst = worst.max((analytic - fd).abs() / scale);
                } else {
                    assert!((analytic - fd).abs() < 1e-9);
                }
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");

        for idx in 0..x.data.len() {
            let mut p = x.clone();
            p.data[idx] += h;
            let mut m = x.clone();
            m.data[idx] -= h;
            let fd = (stack_loss(&s, &head, &p, &t) - stack_loss(&s, &head, &m, &t)) / (2.0 * h);
            let a = dx.data[idx];
            assert!((a - fd).abs() <= 1e-4 * a.abs().max(fd.abs()).max(1e-6), "{a} vs {fd}");
        }
    }

    #[test]
    fn plain_stack_gradients() {
        check_stack_gradients(&[6, 16, 16, 9], false, 4);
    }

    #[test]
    fn residual_stack_gradients() {
        // input 2*9 wide, skip adds its first 9 columns
        check_stack_gradients(&[18, 16, 16, 9], true, 5);
    }

    #[test]
    fn residual_adds_pass_through_term() {
        let mut r = rng(12);
        let plain = MlpStack::init(&[8, 8, 4], false, &mut r).unwrap();
        let mut res = plain.clone();
        res.residual = true;
        let x = random_matrix(2, 8, &mut r);
        let dy = random_matrix(2, 4, &mut r);
        let (mut gp, mut gr) = (plain.zeros_like(), res.zeros_like());
        let cp = plain.forward(&x).unwrap();
        let cr = res.forward(&x).unwrap();
        let dp = plain.backward(&cp, &dy, &mut gp).unwrap();
        let dr = res.backward(&cr, &dy, &mut gr).unwrap();
        for i in 0..2 {
            for c in 0..8 {
                let extra = if c < 4 { dy.row(i)[c] } else { 0.0 };
                assert!((dr.row(i)[c] - dp.row(i)[c] - extra).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut r = rng(2);
        let s = MlpStack::init(&[5, 7, 3], true, &mut r).unwrap();
        let x = random_matrix(4, 5, &mut r);
        let c = s.forward(&x).unwrap();
        let mut g = s.zeros_like();
        s.backward(&c, &Matrix::zeros(4, 3), &mut g).unwrap();
        assert!(g.params().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut r = rng(2);
        let mut s = MlpStack::init(&[5, 3], false, &mut r).unwrap();
        let x = random_matrix(4, 5, &mut r);
        let c = s.forward(&x).unwrap();
        s.touch();
        let mut g = s.zeros_like();
        assert!(s.backward(&c, &Matrix::zeros(4, 3), &mut g).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = MlpStack::init(&[20, 128, 128], false, &mut rng(7)).unwrap();
        let b = MlpStack::init(&[20, 128, 128], false, &mut rng(7)).unwrap();
        let c = MlpStack::init(&[20, 128, 128], false, &mut rng(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn he_init_preserves_variance() {
        // unit-variance input; He scaling targets pre-activation variance 2
        let mut r = rng(5);
        let l = Dense::he_uniform(128, 128, &mut r);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let x = Matrix::from_vec(512, 128, (0..512 * 128).map(|_| normal.sample(&mut r)).collect())
            .unwrap();
        let y = l.forward(&x).unwrap();
        let n = y.data.len() as f64;
        let mean = y.data.iter().sum::<f64>() / n;
        let var = y.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(var > 2.0 / 3.0 && var < 6.0, "variance {var}");
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let mut r = rng(21);
        let x = random_matrix(300, 20, &mut r);
        let s = MlpStack::init(&[20, 128, 128, 128], false, &mut r).unwrap();
        let a = s.forward(&x).unwrap();
        let b = s.forward(&x).unwrap();
        assert_eq!(a.output().data, b.output().data);
    }
}
