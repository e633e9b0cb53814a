//! Single-layer LSTM, dropout on the final hidden state, and a sigmoid dense
//! unit, trained with backpropagation through time, binary cross-entropy and
//! Adam. All arithmetic is binary64.
//!
//! Gate recurrences, for gate pre-activations `z_k = W_k x_t + U_k h_{t-1} + b_k`:
//!
//! ```text
//! i = σ(z_i)  f = σ(z_f)  o = σ(z_o)  g = tanh(z_g)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! y   = σ(w · drop(h_T) + b)
//! ```
//!
//! Masked (padding) steps leave `h` and `c` untouched, so `h_T` is the state
//! after the last unmasked step.

pub mod adam;
pub mod gradcheck;
pub mod model_file;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::{Adam, AdamConfig};
pub use model_file::{ModelFile, ModelMeta};
pub use train::{train, EpochStats, TrainConfig, TrainReport};

/// Lower/upper clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RnnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite input at step {step}")]
    NonFiniteInput { step: usize },
    #[error("sequence has no unmasked steps")]
    EmptySequence,
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged { epoch: usize, batch: usize, detail: String },
    #[error("invalid config: {0}")]
    Config(String),
}

/// Gate order inside the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Cell = 3,
}

pub const GATES: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];

/// All trainable tensors in one flat vector, laid out as
/// `W_i U_i b_i W_f U_f b_f W_o U_o b_o W_g U_g b_g w b`, each matrix
/// row-major (`W_k` is hidden x dim, `U_k` hidden x hidden).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub dim: usize,
    pub hidden: usize,
    pub data: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        LstmParams {
            dim,
            hidden,
            data: vec![0.0; Self::len_for(dim, hidden)],
        }
    }

    /// Uniform(-0.08, 0.08) weights, zero biases except the forget gate (+1).
    pub fn init(dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(dim, hidden);
        let gb = p.gate_block();
        for k in 0..4 {
            let base = k * gb;
            for v in &mut p.data[base..base + hidden * (dim + hidden)] {
                *v = rng.gen_range(-0.08..0.08);
            }
        }
        for v in p.forget_bias_mut() {
            *v = 1.0;
        }
        let w = p.dense_w_offset();
        for v in &mut p.data[w..w + hidden] {
            *v = rng.gen_range(-0.08..0.08);
        }
        p
    }

    pub fn seeded(dim: usize, hidden: usize, seed: u64) -> Self {
        Self::init(dim, hidden, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn len_for(dim: usize, hidden: usize) -> usize {
        4 * (hidden * dim + hidden * hidden + hidden) + hidden + 1
    }

    fn gate_block(&self) -> usize {
        self.hidden * self.dim + self.hidden * self.hidden + self.hidden
    }

    pub fn w_offset(&self, g: Gate) -> usize {
        g as usize * self.gate_block()
    }

    pub fn u_offset(&self, g: Gate) -> usize {
        self.w_offset(g) + self.hidden * self.dim
    }

    pub fn b_offset(&self, g: Gate) -> usize {
        self.u_offset(g) + self.hidden * self.hidden
    }

    pub fn dense_w_offset(&self) -> usize {
        4 * self.gate_block()
    }

    pub fn dense_b_offset(&self) -> usize {
        self.dense_w_offset() + self.hidden
    }

    fn forget_bias_mut(&mut self) -> &mut [f64] {
        let o = self.b_offset(Gate::Forget);
        let h = self.hidden;
        &mut self.data[o..o + h]
    }

    /// Named tensor ranges in storage order.
    pub fn tensors(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let (d, h) = (self.dim, self.hidden);
        let mut out = Vec::new();
        for (g, name) in GATES.iter().zip(["i", "f", "o", "g"]) {
            let w = self.w_offset(*g);
            let u = self.u_offset(*g);
            let b = self.b_offset(*g);
            out.push((format!("W_{name}"), w..w + h * d));
            out.push((format!("U_{name}"), u..u + h * h));
            out.push((format!("b_{name}"), b..b + h));
        }
        let w = self.dense_w_offset();
        out.push(("w".into(), w..w + h));
        out.push(("b".into(), w + h..w + h + 1));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// One input sequence: `x` is `steps x dim` row-major, `valid[t]` false for
/// padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f32>,
    pub valid: Vec<bool>,
    pub label: f64,
}

impl Sample {
    /// A sequence whose first `len` of `steps` positions are real.
    pub fn padded(x: Vec<f32>, steps: usize, len: usize, label: f64) -> Self {
        let valid = (0..steps).map(|t| t < len).collect();
        Sample { x, valid, label }
    }

    pub fn steps(&self) -> usize {
        self.valid.len()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy with `y` clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce(y: f64, label: f64) -> f64 {
    let y = y.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(label * y.ln() + (1.0 - label) * (1.0 - y).ln())
}

/// dL/dy of [`bce`]; zero where the clamp is active.
pub fn bce_grad(y: f64, label: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&y) {
        return 0.0;
    }
    -label / y + (1.0 - label) / (1.0 - y)
}

/// Activations kept from a forward pass for BPTT.
struct Trace {
    /// Per step: i, f, o, g activations, each `hidden` long.
    gates: Vec<f64>,
    /// States h_0..h_T and c_0..c_T.
    h: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Post-dropout final state fed to the dense unit.
    h_out: Vec<f64>,
    y: f64,
}

fn check_input(p: &LstmParams, x: &[f32], valid: &[bool]) -> Result<(), RnnError> {
    if x.len() != valid.len() * p.dim {
        return Err(RnnError::Shape(format!(
            "input has {} values, expected {} steps x dim {}",
            x.len(),
            valid.len(),
            p.dim
        )));
    }
    if p.data.len() != LstmParams::len_for(p.dim, p.hidden) {
        return Err(RnnError::Shape("parameter vector length".into()));
    }
    if !valid.iter().any(|&v| v) {
        return Err(RnnError::EmptySequence);
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(RnnError::NonFiniteInput { step: i / p.dim.max(1) });
    }
    Ok(())
}

fn run_forward(p: &LstmParams, x: &[f32], valid: &[bool], dropout: Option<&[f64]>) -> Trace {
    let (d, h) = (p.dim, p.hidden);
    let steps = valid.len();
    let mut tr = Trace {
        gates: vec![0.0; steps * 4 * h],
        h: vec![0.0; (steps + 1) * h],
        c: vec![0.0; (steps + 1) * h],
        tanh_c: vec![0.0; steps * h],
        h_out: vec![0.0; h],
        y: 0.0,
    };
    let mut xt = vec![0.0f64; d];
    for t in 0..steps {
        let (prev, next) = tr.h.split_at_mut((t + 1) * h);
        let h_prev = &prev[t * h..];
        let h_next = &mut next[..h];
        let (cprev, cnext) = tr.c.split_at_mut((t + 1) * h);
        let c_prev = &cprev[t * h..];
        let c_next = &mut cnext[..h];
        if !valid[t] {
            h_next.copy_from_slice(h_prev);
            c_next.copy_from_slice(c_prev);
            continue;
        }
        for (dst, &src) in xt.iter_mut().zip(&x[t * d..(t + 1) * d]) {
            *dst = f64::from(src);
        }
        let gates = &mut tr.gates[t * 4 * h..(t + 1) * 4 * h];
        for (k, g) in GATES.iter().enumerate() {
            let w = &p.data[p.w_offset(*g)..p.w_offset(*g) + h * d];
            let u = &p.data[p.u_offset(*g)..p.u_offset(*g) + h * h];
            let b = &p.data[p.b_offset(*g)..p.b_offset(*g) + h];
            for r in 0..h {
                let mut z = b[r];
                z += dot(&w[r * d..(r + 1) * d], &xt);
                z += dot(&u[r * h..(r + 1) * h], h_prev);
                gates[k * h + r] = if *g == Gate::Cell { z.tanh() } else { sigmoid(z) };
            }
        }
        for r in 0..h {
            let (i, f, o, g) = (gates[r], gates[h + r], gates[2 * h + r], gates[3 * h + r]);
            let c = f * c_prev[r] + i * g;
            let tc = c.tanh();
            c_next[r] = c;
            tr.tanh_c[t * h + r] = tc;
            h_next[r] = o * tc;
        }
    }
    let h_last = &tr.h[steps * h..];
    for r in 0..h {
        tr.h_out[r] = h_last[r] * dropout.map_or(1.0, |m| m[r]);
    }
    let wo = p.dense_w_offset();
    let z = p.data[wo + h] + dot(&p.data[wo..wo + h], &tr.h_out);
    tr.y = sigmoid(z);
    tr
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Probability for one sequence, dropout off. The result is kept inside
/// `[1e-12, 1 - 1e-12]` so it never saturates to exactly 0 or 1.
pub fn forward(p: &LstmParams, x: &[f32], valid: &[bool]) -> Result<f64, RnnError> {
    forward_with_dropout(p, x, valid, None)
}

/// Forward with an explicit dropout scale per hidden unit (`0` or
/// `1 / (1 - rate)`), as used during training.
pub fn forward_with_dropout(
    p: &LstmParams,
    x: &[f32],
    valid: &[bool],
    dropout: Option<&[f64]>,
) -> Result<f64, RnnError> {
    check_input(p, x, valid)?;
    Ok(run_forward(p, x, valid, dropout).y.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
}

/// Inverted-dropout scale vector for `hidden` units.
pub fn dropout_mask(hidden: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..hidden)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Loss of one sample; its gradient is *added* into `grad`.
pub fn sample_loss_grad(
    p: &LstmParams,
    sample: &Sample,
    dropout: Option<&[f64]>,
    grad: &mut [f64],
) -> Result<f64, RnnError> {
    check_input(p, &sample.x, &sample.valid)?;
    if grad.len() != p.data.len() {
        return Err(RnnError::Shape("gradient buffer length".into()));
    }
    let (d, h) = (p.dim, p.hidden);
    let steps = sample.valid.len();
    let tr = run_forward(p, &sample.x, &sample.valid, dropout);
    let loss = bce(tr.y, sample.label);

    // dL/dz at the dense unit; the clamp zeroes it when active.
    let dz = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&tr.y) {
        tr.y - sample.label
    } else {
        0.0
    };
    let wo = p.dense_w_offset();
    for r in 0..h {
        grad[wo + r] += dz * tr.h_out[r];
    }
    grad[wo + h] += dz;

    let mut dh: Vec<f64> = (0..h)
        .map(|r| dz * p.data[wo + r] * dropout.map_or(1.0, |m| m[r]))
        .collect();
    let mut dc = vec![0.0f64; h];
    let mut dzs = vec![0.0f64; 4 * h];
    let mut xt = vec![0.0f64; d];
    for t in (0..steps).rev() {
        if !sample.valid[t] {
            continue;
        }
        let gates = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
        let c_prev = &tr.c[t * h..(t + 1) * h];
        let h_prev = &tr.h[t * h..(t + 1) * h];
        for r in 0..h {
            let (i, f, o, g) = (gates[r], gates[h + r], gates[2 * h + r], gates[3 * h + r]);
            let tc = tr.tanh_c[t * h + r];
            let d_o = dh[r] * tc;
            let dcr = dc[r] + dh[r] * o * (1.0 - tc * tc);
            let d_i = dcr * g;
            let d_g = dcr * i;
            let d_f = dcr * c_prev[r];
            dzs[r] = d_i * i * (1.0 - i);
            dzs[h + r] = d_f * f * (1.0 - f);
            dzs[2 * h + r] = d_o * o * (1.0 - o);
            dzs[3 * h + r] = d_g * (1.0 - g * g);
            dc[r] = dcr * f;
        }
        for (dst, &src) in xt.iter_mut().zip(&sample.x[t * d..(t + 1) * d]) {
            *dst = f64::from(src);
        }
        let mut dh_prev = vec![0.0f64; h];
        for (k, g) in GATES.iter().enumerate() {
            let (wo_, uo, bo) = (p.w_offset(*g), p.u_offset(*g), p.b_offset(*g));
            for r in 0..h {
                let z = dzs[k * h + r];
                if z == 0.0 {
                    continue;
                }
                for (gw, &xv) in grad[wo_ + r * d..wo_ + (r + 1) * d].iter_mut().zip(&xt) {
                    *gw += z * xv;
                }
                for (gu, &hv) in grad[uo + r * h..uo + (r + 1) * h].iter_mut().zip(h_prev) {
                    *gu += z * hv;
                }
                grad[bo + r] += z;
                for (acc, &u) in dh_prev.iter_mut().zip(&p.data[uo + r * h..uo + (r + 1) * h]) {
                    *acc += z * u;
                }
            }
        }
        dh = dh_prev;
    }
    Ok(loss)
}

/// Mean loss and mean gradient over a batch. `dropout` supplies one mask per
/// sample when training.
pub fn backward(p: &LstmParams, batch: &[Sample], dropout: Option<&[Vec<f64>]>) -> Result<(f64, Vec<f64>), RnnError> {
    let mut grad = vec![0.0; p.data.len()];
    let mut loss = 0.0;
    for (i, s) in batch.iter().enumerate() {
        loss += sample_loss_grad(p, s, dropout.map(|m| m[i].as_slice()), &mut grad)?;
    }
    let n = batch.len().max(1) as f64;
    for g in &mut grad {
        *g /= n;
    }
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub positive: bool,
}

/// Inference with dropout off. Ties at the threshold are positive.
pub fn predict(p: &LstmParams, x: &[f32], valid: &[bool], threshold: f64) -> Result<Prediction, RnnError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(RnnError::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    let probability = forward(p, x, valid)?;
    Ok(Prediction {
        probability,
        positive: probability >= threshold,
    })
}
