//! Bias-free fully-connected ReLU networks.
//!
//! A depth-`k` network computes `z_h = W_h · relu(z_{h-1})` with `z_0 = x`
//! and no activation on the last layer. For a fixed input the ReLUs act as a
//! 0/1 mask on hidden units; applying that mask after each hidden matvec
//! gives the *realized linear network*, which reproduces the ReLU forward
//! pass bit for bit because both paths perform identical arithmetic.
//!
//! Parameters flatten layer by layer (first layer first), row-major inside a
//! layer.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::standard_normal;
use crate::scalar::Real;
use crate::trainer::cross_entropy;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    layers: Vec<Matrix<T>>,
}

impl<T: Real> MlpParams<T> {
    pub fn new(layers: Vec<Matrix<T>>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::arg(format!(
                "network depth must be at least 2, got {}",
                layers.len()
            )));
        }
        for (h, pair) in layers.windows(2).enumerate() {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::arg(format!(
                    "layer {} expects {} inputs but layer {} has {} outputs",
                    h + 2,
                    pair[1].cols(),
                    h + 1,
                    pair[0].rows()
                )));
            }
        }
        if layers.iter().any(|w| w.rows() == 0 || w.cols() == 0) {
            return Err(Error::arg("layers must have nonzero width"));
        }
        Ok(Self { layers })
    }

    /// All-zero network with the given widths `[in_1, out_1, ..., out_k]`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::arg("need at least 3 widths for a depth-2 network"));
        }
        Self::new(
            widths
                .windows(2)
                .map(|w| Matrix::zeros(w[1], w[0]))
                .collect(),
        )
    }

    /// I.i.d. Gaussian weights with standard deviation `init_scale / sqrt(fan_in)`.
    pub fn gaussian<R: Rng + ?Sized>(widths: &[usize], init_scale: T, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        for w in &mut net.layers {
            let std = init_scale / T::from_usize_lossy(w.cols()).sqrt();
            for v in w.as_mut_slice() {
                *v = std * standard_normal::<T, _>(rng);
            }
        }
        Ok(net)
    }

    /// Rebuilds a network of the given widths from a flat parameter vector.
    pub fn unflatten(widths: &[usize], theta: &[T]) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        if theta.len() != net.num_params() {
            return Err(Error::arg(format!(
                "{} parameters supplied, widths need {}",
                theta.len(),
                net.num_params()
            )));
        }
        net.set_flat(theta);
        Ok(net)
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    #[inline]
    pub fn layers(&self) -> &[Matrix<T>] {
        &self.layers
    }

    #[inline]
    pub fn layer(&self, h: usize) -> &Matrix<T> {
        &self.layers[h]
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.depth() - 1].rows()
    }

    /// `[in_1, out_1, ..., out_k]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Matrix::rows))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|w| w.rows() * w.cols()).sum()
    }

    /// Offset of each layer's first parameter in the flat vector.
    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.depth());
        let mut acc = 0;
        for w in &self.layers {
            off.push(acc);
            acc += w.rows() * w.cols();
        }
        off
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for w in &self.layers {
            out.extend_from_slice(w.as_slice());
        }
        out
    }

    /// Overwrites every weight from `theta` (length must equal `num_params`).
    pub fn set_flat(&mut self, theta: &[T]) {
        assert_eq!(theta.len(), self.num_params());
        let mut at = 0;
        for w in &mut self.layers {
            let len = w.rows() * w.cols();
            w.as_mut_slice().copy_from_slice(&theta[at..at + len]);
            at += len;
        }
    }

    pub fn l2_norm_sq(&self) -> T {
        self.layers.iter().map(|w| w.frobenius_sq()).sum()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::arg(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

#[inline]
fn relu<T: Real>(z: T) -> T {
    if z > T::zero() {
        z
    } else {
        T::zero()
    }
}

/// Per-hidden-unit activity indicators for one input (`true` = pre-activation > 0).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationMask {
    pub layers: Vec<Vec<bool>>,
}

impl ActivationMask {
    pub fn all_active<T: Real>(params: &MlpParams<T>) -> Self {
        Self::constant(params, true)
    }

    pub fn all_inactive<T: Real>(params: &MlpParams<T>) -> Self {
        Self::constant(params, false)
    }

    fn constant<T: Real>(params: &MlpParams<T>, on: bool) -> Self {
        Self {
            layers: params.layers[..params.depth() - 1]
                .iter()
                .map(|w| vec![on; w.rows()])
                .collect(),
        }
    }

    pub fn matches<T: Real>(&self, params: &MlpParams<T>) -> bool {
        self.layers.len() == params.depth() - 1
            && self
                .layers
                .iter()
                .zip(params.layers())
                .all(|(m, w)| m.len() == w.rows())
    }

    /// Expands unit indicators to a per-parameter edge mask in flatten order:
    /// row `u` of hidden layer `h` is off iff unit `u` is inactive; the output
    /// layer is never masked.
    pub fn edge_mask<T: Real>(&self, params: &MlpParams<T>) -> Vec<bool> {
        let mut out = Vec::with_capacity(params.num_params());
        for (h, w) in params.layers().iter().enumerate() {
            for u in 0..w.rows() {
                let on = self.layers.get(h).is_none_or(|m| m[u]);
                out.extend(std::iter::repeat_n(on, w.cols()));
            }
        }
        out
    }

    pub fn count_active(&self) -> usize {
        self.layers.iter().flatten().filter(|&&b| b).count()
    }
}

/// Cached pre-activations `z_1, ..., z_k` of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass<T> {
    pub pre: Vec<Vec<T>>,
}

impl<T: Real> ForwardPass<T> {
    pub fn logits(&self) -> &[T] {
        self.pre.last().expect("depth >= 2")
    }

    pub fn mask(&self) -> ActivationMask {
        ActivationMask {
            layers: self.pre[..self.pre.len() - 1]
                .iter()
                .map(|z| z.iter().map(|&v| v > T::zero()).collect())
                .collect(),
        }
    }

    /// Post-activation input of layer `h` (0-based): `x` for the first layer.
    fn layer_input<'a>(&'a self, x: &'a [T], h: usize) -> std::borrow::Cow<'a, [T]> {
        if h == 0 {
            std::borrow::Cow::Borrowed(x)
        } else {
            std::borrow::Cow::Owned(self.pre[h - 1].iter().map(|&z| relu(z)).collect())
        }
    }
}

pub fn forward<T: Real>(params: &MlpParams<T>, x: &[T]) -> Result<ForwardPass<T>> {
    params.check_input(x)?;
    Ok(forward_unchecked(params, x))
}

pub(crate) fn forward_unchecked<T: Real>(params: &MlpParams<T>, x: &[T]) -> ForwardPass<T> {
    let k = params.depth();
    let mut pre = Vec::with_capacity(k);
    let mut a = params.layers[0].matvec(x);
    for h in 1..k {
        let act: Vec<T> = a.iter().map(|&z| relu(z)).collect();
        pre.push(a);
        a = params.layers[h].matvec(&act);
    }
    pre.push(a);
    ForwardPass { pre }
}

pub fn activation_mask<T: Real>(params: &MlpParams<T>, x: &[T]) -> Result<ActivationMask> {
    Ok(forward(params, x)?.mask())
}

/// `W_k D_{k-1} W_{k-1} ⋯ D_1 W_1 x`, with each `D_h` applied to the output of
/// the hidden matvec.
pub fn realized_linear_forward<T: Real>(
    params: &MlpParams<T>,
    mask: &ActivationMask,
    x: &[T],
) -> Result<Vec<T>> {
    params.check_input(x)?;
    if !mask.matches(params) {
        return Err(Error::arg(
            "activation mask shape does not match the network",
        ));
    }
    let k = params.depth();
    let mut a = x.to_vec();
    for h in 0..k {
        let mut z = params.layers[h].matvec(&a);
        if h + 1 < k {
            for (v, &on) in z.iter_mut().zip(&mask.layers[h]) {
                if !on {
                    *v = T::zero();
                }
            }
        }
        a = z;
    }
    Ok(a)
}

/// Multiplies every weight by `lambda > 0`.
pub fn scale_params<T: Real>(params: &MlpParams<T>, lambda: T) -> Result<MlpParams<T>> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::arg(format!(
            "scale factor {lambda} must be positive"
        )));
    }
    let mut out = params.clone();
    for w in &mut out.layers {
        for v in w.as_mut_slice() {
            *v = *v * lambda;
        }
    }
    Ok(out)
}

/// Backpropagates an output-space vector `seed` through the realized network of
/// `pass`, adding `seed`-weighted parameter gradients into `grad` (flat order).
fn backprop_into<T: Real>(
    params: &MlpParams<T>,
    pass: &ForwardPass<T>,
    x: &[T],
    seed: &[T],
    offsets: &[usize],
    grad: &mut [T],
) {
    let k = params.depth();
    let mut delta = seed.to_vec();
    for h in (0..k).rev() {
        let input = pass.layer_input(x, h);
        let w = &params.layers[h];
        let base = offsets[h];
        for (u, &d) in delta.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            let row = &mut grad[base + u * w.cols()..base + (u + 1) * w.cols()];
            for (g, &a) in row.iter_mut().zip(input.iter()) {
                *g = *g + d * a;
            }
        }
        if h > 0 {
            let mut back = w.matvec_t(&delta);
            for (b, &z) in back.iter_mut().zip(&pass.pre[h - 1]) {
                if !(z > T::zero()) {
                    *b = T::zero();
                }
            }
            delta = back;
        }
    }
}

/// Jacobian of the logits with respect to the flat parameters at the current
/// activation pattern (`out_k × p`). The ReLU derivative at 0 is taken as 0.
pub fn output_jacobian<T: Real>(params: &MlpParams<T>, x: &[T]) -> Result<Matrix<T>> {
    params.check_input(x)?;
    let pass = forward_unchecked(params, x);
    Ok(jacobian_from_pass(params, &pass, x))
}

pub(crate) fn jacobian_from_pass<T: Real>(
    params: &MlpParams<T>,
    pass: &ForwardPass<T>,
    x: &[T],
) -> Matrix<T> {
    let c_out = params.output_dim();
    let p = params.num_params();
    let offsets = params.layer_offsets();
    let mut jac = Matrix::zeros(c_out, p);
    let mut seed = vec![T::zero(); c_out];
    for c in 0..c_out {
        seed[c] = T::one();
        backprop_into(params, pass, x, &seed, &offsets, jac.row_mut(c));
        seed[c] = T::zero();
    }
    jac
}

/// Adds the cross-entropy gradient of one sample into `grad`; returns its loss.
pub(crate) fn accumulate_sample_gradient<T: Real>(
    params: &MlpParams<T>,
    x: &[T],
    y: usize,
    offsets: &[usize],
    grad: &mut [T],
) -> T {
    let pass = forward_unchecked(params, x);
    let (loss, mut probs) = cross_entropy(pass.logits(), y);
    probs[y] = probs[y] - T::one();
    backprop_into(params, &pass, x, &probs, offsets, grad);
    loss
}

/// Mean cross-entropy over a batch and its gradient in flat parameter order.
pub fn loss_gradient<T: Real>(
    params: &MlpParams<T>,
    batch: &Matrix<T>,
    labels: &[usize],
) -> Result<(T, Vec<T>)> {
    if batch.rows() == 0 || batch.rows() != labels.len() {
        return Err(Error::arg("batch must be nonempty with one label per row"));
    }
    if batch.cols() != params.input_dim() {
        return Err(Error::arg("batch width does not match the network input"));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= params.output_dim()) {
        return Err(Error::arg(format!(
            "label {y} exceeds the output dimension"
        )));
    }
    let rows: Vec<usize> = (0..batch.rows()).collect();
    Ok(batch_loss_gradient(params, batch, labels, &rows))
}

/// Mean loss and gradient over `rows` of `(features, labels)`.
pub(crate) fn batch_loss_gradient<T: Real>(
    params: &MlpParams<T>,
    features: &Matrix<T>,
    labels: &[usize],
    rows: &[usize],
) -> (T, Vec<T>) {
    let offsets = params.layer_offsets();
    let mut grad = vec![T::zero(); params.num_params()];
    let mut loss = T::zero();
    for &i in rows {
        loss = loss
            + accumulate_sample_gradient(params, features.row(i), labels[i], &offsets, &mut grad);
    }
    let inv = T::one() / T::from_usize_lossy(rows.len());
    for g in &mut grad {
        *g = *g * inv;
    }
    (loss * inv, grad)
}

/// Index of the largest logit (first on ties).
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Checkpoint byte layout (all integers little-endian):
///
/// ```text
/// 0..8     ASCII "PBMLPCKP"
/// 8..12    u32 format version (1)
/// 12..16   u32 depth k
/// 16..     (k + 1) u32 widths: in_1, out_1, ..., out_k
/// then     p f64 weights in flatten order
/// ```
pub const CHECKPOINT_TAG: &[u8; 8] = b"PBMLPCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint<T: Real>(params: &MlpParams<T>) -> Vec<u8> {
    let widths = params.widths();
    let mut out = Vec::with_capacity(16 + 4 * widths.len() + 8 * params.num_params());
    out.extend_from_slice(CHECKPOINT_TAG);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.depth() as u32).to_le_bytes());
    for w in widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    for v in params.flatten() {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    out
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<MlpParams<T>> {
    let u32_at = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {off}")))
    };
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_TAG {
        return Err(Error::Format("not a network checkpoint".into()));
    }
    let version = u32_at(8)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let depth = u32_at(12)? as usize;
    if !(2..=1024).contains(&depth) {
        return Err(Error::Format(format!("implausible depth {depth}")));
    }
    let widths = (0..=depth)
        .map(|i| u32_at(16 + 4 * i).map(|w| w as usize))
        .collect::<Result<Vec<_>>>()?;
    let p: usize = widths.windows(2).map(|w| w[0] * w[1]).sum();
    let start = 16 + 4 * (depth + 1);
    if bytes.len() != start + 8 * p {
        return Err(Error::Format(format!(
            "checkpoint has {} bytes, expected {}",
            bytes.len(),
            start + 8 * p
        )));
    }
    let theta: Vec<T> = bytes[start..]
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    MlpParams::unflatten(&widths, &theta).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_checkpoint<T: Real>(params: &MlpParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_checkpoint(params))
        .map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<MlpParams<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Margin `z[y] - max_{c != y} z[c]` of one logit vector.
pub fn logit_margin<T: Real>(z: &[T], y: usize) -> T {
    let mut best = T::neg_infinity();
    for (c, &v) in z.iter().enumerate() {
        if c != y && v > best {
            best = v;
        }
    }
    z[y] - best
}
