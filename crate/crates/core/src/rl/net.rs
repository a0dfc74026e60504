//! Dense feed-forward networks with hand-written reverse mode.
//!
//! Parameters live in one flat vector, layer by layer: the `out × in` weight matrix
//! (row-major) followed by the `out` biases. Gradients use the same layout, which keeps
//! the optimizer, persistence and finite-difference checks layout-agnostic.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Linear,
    Tanh,
    Softmax,
}

/// Weight initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// PyTorch-style `U(−1/√fan_in, 1/√fan_in)` for weights and biases.
    UniformFanIn,
    /// Orthogonal weights scaled by `hidden_gain` (hidden layers) and `head_gain`
    /// (output layer), zero biases.
    Orthogonal { hidden_gain: f64, head_gain: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    sizes: Vec<usize>,
    hidden: Activation,
    head: Head,
    params: Vec<f64>,
    /// Start of each layer's weights; biases follow at `offset + out * in`.
    offsets: Vec<usize>,
    version: u64,
}

/// Activations saved by [`DenseNet::forward_cached`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    batch: usize,
    version: Option<u64>,
    /// `acts[0]` is the input, `acts[l]` the post-activation of layer `l`; the last entry
    /// is the head's pre-activation (logits).
    acts: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Pre-head values of the output layer.
    pub fn logits(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl DenseNet {
    /// Zero-initialised network with the given layer widths (input first).
    pub fn new(sizes: &[usize], hidden: Activation, head: Head) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::Argument(format!("invalid layer sizes {sizes:?}")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut total = 0;
        for w in sizes.windows(2) {
            offsets.push(total);
            total += w[1] * w[0] + w[1];
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            hidden,
            head,
            params: vec![0.0; total],
            offsets,
            version: 0,
        })
    }

    pub fn with_init<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, head: Head, init: Init, rng: &mut R) -> Result<Self> {
        let mut net = Self::new(sizes, hidden, head)?;
        net.init(init, rng);
        Ok(net)
    }

    pub fn init<R: Rng + ?Sized>(&mut self, init: Init, rng: &mut R) {
        let n_layers = self.n_layers();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let (w, rest) = self.params[off..].split_at_mut(fan_in * fan_out);
            let b = &mut rest[..fan_out];
            match init {
                Init::UniformFanIn => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    for x in w.iter_mut().chain(b.iter_mut()) {
                        *x = rng.random_range(-bound..bound);
                    }
                }
                Init::Orthogonal { hidden_gain, head_gain } => {
                    let gain = if l + 1 == n_layers { head_gain } else { hidden_gain };
                    orthogonal_fill(w, fan_out, fan_in, gain, rng);
                    b.fill(0.0);
                }
            }
        }
        self.version += 1;
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn copy_params_from(&mut self, other: &DenseNet) -> Result<()> {
        if other.sizes != self.sizes {
            return Err(Error::Dimension {
                expected: self.params.len(),
                got: other.params.len(),
            });
        }
        self.params_mut().copy_from_slice(&other.params);
        Ok(())
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        (&self.params[off..off + i * o], &self.params[off + i * o..off + i * o + o])
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.forward_logits(input)?;
        apply_head(self.head, &mut out, 1);
        Ok(out)
    }

    /// Single-sample forward pass that stops before the output head.
    pub fn forward_logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len(), 1)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let n_layers = self.n_layers();
        for l in 0..n_layers {
            let (w, b) = self.layer(l);
            let i = self.sizes[l];
            next.clear();
            next.extend(b.iter().enumerate().map(|(r, &bias)| {
                let row = &w[r * i..(r + 1) * i];
                bias + row.iter().zip(&cur).map(|(a, x)| a * x).sum::<f64>()
            }));
            if l + 1 < n_layers {
                activate(self.hidden, &mut next);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Batched forward pass over a row-major `batch × input_dim` matrix.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut cache = Cache::default();
        self.forward_cached(input, batch, &mut cache)?;
        Ok(std::mem::take(&mut cache.output))
    }

    /// Batched forward pass that records what [`DenseNet::backward`] needs.
    pub fn forward_cached<'c>(&self, input: &[f64], batch: usize, cache: &'c mut Cache) -> Result<&'c [f64]> {
        self.check_input(input.len(), batch)?;
        let n_layers = self.n_layers();
        cache.acts.resize_with(n_layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(input);
        for l in 0..n_layers {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer(l);
            let (prev, rest) = cache.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let z = &mut rest[0];
            z.clear();
            z.resize(batch * o, 0.0);
            for row in z.chunks_exact_mut(o) {
                row.copy_from_slice(b);
            }
            // Z += X · Wᵀ
            gemm(batch, i, o, x, i, 1, w, 1, i, 1.0, z, o, 1);
            if l + 1 < n_layers {
                activate(self.hidden, z);
            }
        }
        cache.output.clear();
        cache.output.extend_from_slice(&cache.acts[n_layers]);
        apply_head(self.head, &mut cache.output, batch);
        cache.batch = batch;
        cache.version = Some(self.version);
        Ok(&cache.output)
    }

    /// Accumulates parameter gradients for `grad_out = ∂L/∂output` into `grads`.
    /// Returns `∂L/∂input`.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        self.check_cache(cache)?;
        let o = self.output_dim();
        if grad_out.len() != cache.batch * o {
            return Err(Error::Dimension {
                expected: cache.batch * o,
                got: grad_out.len(),
            });
        }
        let mut dz = grad_out.to_vec();
        match self.head {
            Head::Linear => {}
            Head::Tanh => {
                for (g, y) in dz.iter_mut().zip(&cache.output) {
                    *g *= 1.0 - y * y;
                }
            }
            Head::Softmax => {
                for (g, p) in dz.chunks_exact_mut(o).zip(cache.output.chunks_exact(o)) {
                    let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                    for (gi, pi) in g.iter_mut().zip(p) {
                        *gi = pi * (*gi - dot);
                    }
                }
            }
        }
        self.backward_logits_unchecked(cache, dz, grads)
    }

    /// Like [`DenseNet::backward`] but starting from `∂L/∂logits` (before the head).
    pub fn backward_logits(&self, cache: &Cache, grad_logits: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        self.check_cache(cache)?;
        if grad_logits.len() != cache.batch * self.output_dim() {
            return Err(Error::Dimension {
                expected: cache.batch * self.output_dim(),
                got: grad_logits.len(),
            });
        }
        self.backward_logits_unchecked(cache, grad_logits.to_vec(), grads)
    }

    fn backward_logits_unchecked(&self, cache: &Cache, mut dz: Vec<f64>, grads: &mut [f64]) -> Result<Vec<f64>> {
        if grads.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let batch = cache.batch;
        let mut dx = Vec::new();
        for l in (0..self.n_layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let x = &cache.acts[l];
            let (gw, rest) = grads[off..].split_at_mut(i * o);
            let gb = &mut rest[..o];
            // dW += dZᵀ · X
            gemm(o, batch, i, &dz, 1, o, x, i, 1, 1.0, gw, i, 1);
            for row in dz.chunks_exact(o) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            // dX = dZ · W
            let (w, _) = self.layer(l);
            dx.clear();
            dx.resize(batch * i, 0.0);
            gemm(batch, o, i, &dz, o, 1, w, i, 1, 0.0, &mut dx, i, 1);
            if l > 0 {
                match self.hidden {
                    Activation::Relu => {
                        for (g, a) in dx.iter_mut().zip(x) {
                            if *a <= 0.0 {
                                *g = 0.0;
                            }
                        }
                    }
                    Activation::Tanh => {
                        for (g, a) in dx.iter_mut().zip(x) {
                            *g *= 1.0 - a * a;
                        }
                    }
                }
            }
            std::mem::swap(&mut dz, &mut dx);
        }
        Ok(dz)
    }

    fn check_input(&self, len: usize, batch: usize) -> Result<()> {
        let expected = batch * self.input_dim();
        if len != expected || batch == 0 {
            return Err(Error::Dimension { expected, got: len });
        }
        Ok(())
    }

    fn check_cache(&self, cache: &Cache) -> Result<()> {
        match cache.version {
            None => Err(Error::State("backward called without a cached forward pass".into())),
            Some(v) if v != self.version || cache.acts.len() != self.sizes.len() => {
                Err(Error::State("stale forward cache: parameters changed since the forward pass".into()))
            }
            Some(_) => Ok(()),
        }
    }
}

fn activate(kind: Activation, z: &mut [f64]) {
    match kind {
        Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
    }
}

fn apply_head(head: Head, out: &mut [f64], batch: usize) {
    match head {
        Head::Linear => {}
        Head::Tanh => out.iter_mut().for_each(|v| *v = v.tanh()),
        Head::Softmax => {
            let width = out.len() / batch;
            for row in out.chunks_exact_mut(width) {
                softmax_in_place(row);
            }
        }
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Log-softmax of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// `C = alpha · A·B + beta · C` for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs + 1;
    if k > 0 {
        assert!(a.len() >= span(m, k, rsa, csa) && b.len() >= span(k, n, rsb, csb));
    }
    assert!(c.len() >= span(m, n, rsc, csc));
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Fills a row-major `rows × cols` matrix with a scaled (semi-)orthogonal matrix using
/// modified Gram–Schmidt on Gaussian draws.
fn orthogonal_fill<R: Rng + ?Sized>(w: &mut [f64], rows: usize, cols: usize, gain: f64, rng: &mut R) {
    // orthonormalise along the longer dimension: vectors of length `long`, `short` of them
    let (short, long, transpose) = if rows <= cols { (rows, cols, false) } else { (cols, rows, true) };
    let mut vecs: Vec<Vec<f64>> = (0..short)
        .map(|_| (0..long).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for a in 0..short {
        for b in 0..a {
            let (head, tail) = vecs.split_at_mut(a);
            let proj: f64 = head[b].iter().zip(&tail[0]).map(|(x, y)| x * y).sum();
            for (x, y) in tail[0].iter_mut().zip(&head[b]) {
                *x -= proj * y;
            }
        }
        let norm = vecs[a].iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        vecs[a].iter_mut().for_each(|x| *x /= norm);
    }
    for r in 0..rows {
        for c in 0..cols {
            w[r * cols + c] = gain * if transpose { vecs[c][r] } else { vecs[r][c] };
        }
    }
}

/// Euclidean norm over several gradient buffers.
pub fn global_norm(bufs: &[&[f64]]) -> f64 {
    bufs.iter()
        .flat_map(|b| b.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales the buffers so their joint norm is at most `max_norm`. Returns the original norm.
pub fn clip_global_norm(bufs: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = bufs
        .iter()
        .flat_map(|b| b.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for b in bufs.iter_mut() {
            b.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}
