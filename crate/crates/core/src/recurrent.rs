//! Recurrent timestamp generation.
//!
//! Starting from a learned hidden state `h0`, each step applies the recurrence
//! with a zero input vector and projects the new hidden state to a timestamp
//! embedding: `t_l = W_out · h_l + b_out`. Because the input is zero, input
//! weights never contribute and only the hidden-side weights and biases are
//! kept. Linear variants replace every sigmoid/tanh by the identity.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecurrentKind {
    Rnn,
    Lstm,
    Gru,
    LinearRnn,
    LinearLstm,
    LinearGru,
}

impl RecurrentKind {
    pub const ALL: [RecurrentKind; 6] = [
        RecurrentKind::Rnn,
        RecurrentKind::Lstm,
        RecurrentKind::Gru,
        RecurrentKind::LinearRnn,
        RecurrentKind::LinearLstm,
        RecurrentKind::LinearGru,
    ];

    pub fn is_linear(self) -> bool {
        matches!(
            self,
            RecurrentKind::LinearRnn | RecurrentKind::LinearLstm | RecurrentKind::LinearGru
        )
    }

    fn cell(self) -> Cell {
        match self {
            RecurrentKind::Rnn | RecurrentKind::LinearRnn => Cell::Rnn,
            RecurrentKind::Lstm | RecurrentKind::LinearLstm => Cell::Lstm,
            RecurrentKind::Gru | RecurrentKind::LinearGru => Cell::Gru,
        }
    }

    pub fn tag(self) -> u32 {
        Self::ALL.iter().position(|k| *k == self).unwrap() as u32 + 1
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.get((tag as usize).checked_sub(1)?).copied()
    }
}

impl fmt::Display for RecurrentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecurrentKind::Rnn => "RNN",
            RecurrentKind::Lstm => "LSTM",
            RecurrentKind::Gru => "GRU",
            RecurrentKind::LinearRnn => "LinearRNN",
            RecurrentKind::LinearLstm => "LinearLSTM",
            RecurrentKind::LinearGru => "LinearGRU",
        })
    }
}

impl FromStr for RecurrentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown recurrent variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Rnn,
    Lstm,
    Gru,
}

impl Cell {
    fn gates(self) -> usize {
        match self {
            Cell::Rnn => 1,
            Cell::Lstm => 4,
            Cell::Gru => 3,
        }
    }

    fn biases(self) -> usize {
        match self {
            Cell::Rnn => 1,
            Cell::Lstm => 4,
            // r, z, the candidate's outer bias and the bias inside the reset product
            Cell::Gru => 4,
        }
    }
}

/// Offsets of each block inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    hidden: usize,
    out: usize,
    h0: usize,
    weights: usize,
    biases: usize,
    proj_w: usize,
    proj_b: usize,
    len: usize,
}

impl Layout {
    fn new(cell: Cell, hidden: usize, out: usize) -> Self {
        let m = hidden;
        let h0 = 0;
        let weights = h0 + m;
        let biases = weights + cell.gates() * m * m;
        let proj_w = biases + cell.biases() * m;
        let proj_b = proj_w + out * m;
        let len = proj_b + out;
        Self {
            hidden,
            out,
            h0,
            weights,
            biases,
            proj_w,
            proj_b,
            len,
        }
    }

    fn weight(&self, gate: usize) -> std::ops::Range<usize> {
        let s = self.weights + gate * self.hidden * self.hidden;
        s..s + self.hidden * self.hidden
    }

    fn bias(&self, slot: usize) -> std::ops::Range<usize> {
        let s = self.biases + slot * self.hidden;
        s..s + self.hidden
    }
}

/// Parameters of a recurrent timestamp generator, stored flat:
/// `h0 | gate weights (m×m each) | biases | W_out (out×m) | b_out`.
///
/// Gate order is `(i, f, g, o)` for LSTM and `(r, z, n)` for GRU; the GRU keeps
/// a fourth bias for the term inside the reset product. The LSTM cell state
/// starts at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentParams {
    pub kind: RecurrentKind,
    pub hidden: usize,
    /// Output width in reals (`2 ×` the timestamp rank).
    pub out: usize,
    pub data: Vec<f64>,
}

impl RecurrentParams {
    pub fn zeros(kind: RecurrentKind, hidden: usize, out: usize) -> Self {
        let len = Layout::new(kind.cell(), hidden, out).len;
        Self {
            kind,
            hidden,
            out,
            data: vec![0.0; len],
        }
    }

    pub fn from_data(kind: RecurrentKind, hidden: usize, out: usize, data: Vec<f64>) -> Result<Self> {
        let len = Layout::new(kind.cell(), hidden, out).len;
        if data.len() != len {
            return Err(Error::Dimension {
                expected: len,
                actual: data.len(),
            });
        }
        Ok(Self {
            kind,
            hidden,
            out,
            data,
        })
    }

    /// Every entry, `h0` included, drawn from Uniform(−1/√m, 1/√m).
    pub fn random<R: Rng>(kind: RecurrentKind, hidden: usize, out: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(kind, hidden, out);
        let bound = 1.0 / (hidden as f64).sqrt();
        for v in p.data.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
        p
    }

    fn layout(&self) -> Layout {
        Layout::new(self.kind.cell(), self.hidden, self.out)
    }

    pub fn h0(&self) -> &[f64] {
        let l = self.layout();
        &self.data[l.h0..l.h0 + l.hidden]
    }

    pub fn h0_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.data[l.h0..l.h0 + l.hidden]
    }

    /// Row-major `m×m` weight of gate `gate`.
    pub fn weight_mut(&mut self, gate: usize) -> &mut [f64] {
        let r = self.layout().weight(gate);
        &mut self.data[r]
    }

    pub fn bias_mut(&mut self, slot: usize) -> &mut [f64] {
        let r = self.layout().bias(slot);
        &mut self.data[r]
    }

    /// Row-major `out×m` output projection.
    pub fn projection_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let l = self.layout();
        let (w, b) = self.data[l.proj_w..l.len].split_at_mut(l.out * l.hidden);
        (w, b)
    }

    /// Generates `count` timestamp rows (`count × out` reals).
    pub fn generate(&self, count: usize) -> Vec<f64> {
        self.forward(count).rows
    }

    pub(crate) fn forward(&self, count: usize) -> Trace {
        let l = self.layout();
        let m = l.hidden;
        let act = Activations::new(self.kind.is_linear());
        let cell = self.kind.cell();
        let mut steps = Vec::with_capacity(count);
        let mut h = self.h0().to_vec();
        let mut c = vec![0.0; m];
        let mut rows = Vec::with_capacity(count * l.out);
        for _ in 0..count {
            let step = match cell {
                Cell::Rnn => {
                    let mut a = self.affine(&l, 0, 0, &h);
                    a.iter_mut().for_each(|v| *v = act.tanh(*v));
                    Step {
                        h_prev: h,
                        c_prev: Vec::new(),
                        post: vec![a.clone()],
                        aux: Vec::new(),
                        h: a,
                        c: Vec::new(),
                    }
                }
                Cell::Lstm => {
                    let post: Vec<Vec<f64>> = (0..4)
                        .map(|g| self.affine(&l, g, g, &h))
                        .enumerate()
                        .map(|(g, a)| {
                            a.into_iter()
                                .map(|x| if g == 2 { act.tanh(x) } else { act.sigmoid(x) })
                                .collect()
                        })
                        .collect();
                    let (ig, fg, gg, og) = (&post[0], &post[1], &post[2], &post[3]);
                    let c_new: Vec<f64> = (0..m).map(|k| fg[k] * c[k] + ig[k] * gg[k]).collect();
                    let tc: Vec<f64> = c_new.iter().map(|&x| act.tanh(x)).collect();
                    let h_new: Vec<f64> = (0..m).map(|k| og[k] * tc[k]).collect();
                    Step {
                        h_prev: h,
                        c_prev: std::mem::replace(&mut c, c_new.clone()),
                        post,
                        aux: tc,
                        h: h_new,
                        c: c_new,
                    }
                }
                Cell::Gru => {
                    let ar = self.affine(&l, 0, 0, &h);
                    let az = self.affine(&l, 1, 1, &h);
                    // u = W_n h + b_hn, candidate pre-activation = b_in + r ⊙ u
                    let u = self.affine(&l, 2, 3, &h);
                    let r: Vec<f64> = ar.iter().map(|&x| act.sigmoid(x)).collect();
                    let z: Vec<f64> = az.iter().map(|&x| act.sigmoid(x)).collect();
                    let b_in = &self.data[l.bias(2)];
                    let n: Vec<f64> = (0..m).map(|k| act.tanh(b_in[k] + r[k] * u[k])).collect();
                    let h_new: Vec<f64> = (0..m).map(|k| (1.0 - z[k]) * n[k] + z[k] * h[k]).collect();
                    Step {
                        h_prev: h,
                        c_prev: Vec::new(),
                        post: vec![r, z, n],
                        aux: u,
                        h: h_new,
                        c: Vec::new(),
                    }
                }
            };
            h = step.h.clone();
            if cell == Cell::Lstm {
                c = step.c.clone();
            }
            rows.extend(self.project(&l, &h));
            steps.push(step);
        }
        Trace { steps, rows }
    }

    /// `W_gate · h + b_slot`.
    fn affine(&self, l: &Layout, gate: usize, slot: usize, h: &[f64]) -> Vec<f64> {
        let m = l.hidden;
        let w = &self.data[l.weight(gate)];
        let b = &self.data[l.bias(slot)];
        (0..m)
            .map(|i| b[i] + (0..m).map(|j| w[i * m + j] * h[j]).sum::<f64>())
            .collect()
    }

    fn project(&self, l: &Layout, h: &[f64]) -> Vec<f64> {
        let m = l.hidden;
        let w = &self.data[l.proj_w..l.proj_b];
        let b = &self.data[l.proj_b..l.len];
        (0..l.out)
            .map(|o| b[o] + (0..m).map(|j| w[o * m + j] * h[j]).sum::<f64>())
            .collect()
    }

    /// Gradient of a scalar w.r.t. every parameter, given its gradient w.r.t.
    /// the generated rows. Accumulates into `grad` (same layout as `data`).
    pub(crate) fn backward(&self, trace: &Trace, grad_rows: &[f64], grad: &mut [f64]) {
        let l = self.layout();
        let m = l.hidden;
        let act = Activations::new(self.kind.is_linear());
        let cell = self.kind.cell();
        let mut dh_next = vec![0.0; m];
        let mut dc_next = vec![0.0; m];
        for (step_ix, step) in trace.steps.iter().enumerate().rev() {
            // projection
            let gout = &grad_rows[step_ix * l.out..(step_ix + 1) * l.out];
            let mut dh = dh_next.clone();
            for o in 0..l.out {
                let g = gout[o];
                if g == 0.0 {
                    continue;
                }
                grad[l.proj_b + o] += g;
                for j in 0..m {
                    grad[l.proj_w + o * m + j] += g * step.h[j];
                    dh[j] += g * self.data[l.proj_w + o * m + j];
                }
            }
            let mut dh_prev = vec![0.0; m];
            match cell {
                Cell::Rnn => {
                    let da: Vec<f64> = (0..m)
                        .map(|k| dh[k] * act.dtanh(step.post[0][k]))
                        .collect();
                    self.affine_backward(&l, 0, 0, &step.h_prev, &da, grad, &mut dh_prev);
                }
                Cell::Lstm => {
                    let (ig, fg, gg, og) = (&step.post[0], &step.post[1], &step.post[2], &step.post[3]);
                    let tc = &step.aux;
                    let mut dc = dc_next.clone();
                    let mut d_post = vec![vec![0.0; m]; 4];
                    for k in 0..m {
                        d_post[3][k] = dh[k] * tc[k];
                        dc[k] += dh[k] * og[k] * act.dtanh(tc[k]);
                        d_post[0][k] = dc[k] * gg[k];
                        d_post[2][k] = dc[k] * ig[k];
                        d_post[1][k] = dc[k] * step.c_prev[k];
                        dc_next[k] = dc[k] * fg[k];
                    }
                    for (g, (dp, post)) in d_post.iter().zip(&step.post).enumerate() {
                        let da: Vec<f64> = (0..m)
                            .map(|k| dp[k] * if g == 2 { act.dtanh(post[k]) } else { act.dsigmoid(post[k]) })
                            .collect();
                        self.affine_backward(&l, g, g, &step.h_prev, &da, grad, &mut dh_prev);
                    }
                }
                Cell::Gru => {
                    let (r, z, n) = (&step.post[0], &step.post[1], &step.post[2]);
                    let u = &step.aux;
                    let mut da_r = vec![0.0; m];
                    let mut da_z = vec![0.0; m];
                    let mut du = vec![0.0; m];
                    for k in 0..m {
                        let dn = dh[k] * (1.0 - z[k]);
                        let dz = dh[k] * (step.h_prev[k] - n[k]);
                        dh_prev[k] += dh[k] * z[k];
                        let da_n = dn * act.dtanh(n[k]);
                        grad[l.bias(2).start + k] += da_n;
                        du[k] = da_n * r[k];
                        da_r[k] = da_n * u[k] * act.dsigmoid(r[k]);
                        da_z[k] = dz * act.dsigmoid(z[k]);
                    }
                    self.affine_backward(&l, 0, 0, &step.h_prev, &da_r, grad, &mut dh_prev);
                    self.affine_backward(&l, 1, 1, &step.h_prev, &da_z, grad, &mut dh_prev);
                    self.affine_backward(&l, 2, 3, &step.h_prev, &du, grad, &mut dh_prev);
                }
            }
            dh_next = dh_prev;
        }
        for k in 0..m {
            grad[l.h0 + k] += dh_next[k];
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn affine_backward(
        &self,
        l: &Layout,
        gate: usize,
        slot: usize,
        h: &[f64],
        da: &[f64],
        grad: &mut [f64],
        dh: &mut [f64],
    ) {
        let m = l.hidden;
        let w = l.weight(gate).start;
        let b = l.bias(slot).start;
        for i in 0..m {
            if da[i] == 0.0 {
                continue;
            }
            grad[b + i] += da[i];
            for j in 0..m {
                grad[w + i * m + j] += da[i] * h[j];
                dh[j] += da[i] * self.data[w + i * m + j];
            }
        }
    }
}

/// Intermediate values from a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    steps: Vec<Step>,
    pub rows: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Step {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    post: Vec<Vec<f64>>,
    aux: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
}

/// Derivatives are expressed through the activation outputs.
#[derive(Debug, Clone, Copy)]
struct Activations {
    linear: bool,
}

impl Activations {
    fn new(linear: bool) -> Self {
        Self { linear }
    }

    fn sigmoid(&self, x: f64) -> f64 {
        if self.linear {
            x
        } else {
            1.0 / (1.0 + (-x).exp())
        }
    }

    fn tanh(&self, x: f64) -> f64 {
        if self.linear {
            x
        } else {
            x.tanh()
        }
    }

    fn dsigmoid(&self, y: f64) -> f64 {
        if self.linear {
            1.0
        } else {
            y * (1.0 - y)
        }
    }

    fn dtanh(&self, y: f64) -> f64 {
        if self.linear {
            1.0
        } else {
            1.0 - y * y
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::seeded_rng;

    #[test]
    fn zero_parameters_generate_zero_rows() {
        for kind in RecurrentKind::ALL {
            let p = RecurrentParams::zeros(kind, 3, 4);
            assert!(p.generate(5).iter().all(|v| *v == 0.0), "{kind}");
        }
    }

    #[test]
    fn identity_linear_rnn_is_a_fixed_point() {
        let mut p = RecurrentParams::zeros(RecurrentKind::LinearRnn, 3, 4);
        p.h0_mut().copy_from_slice(&[0.5, -1.0, 2.0]);
        let w = p.weight_mut(0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let (pw, pb) = p.projection_mut();
        for (i, v) in pw.iter_mut().enumerate() {
            *v = i as f64 * 0.1;
        }
        pb[1] = 3.0;
        let rows = p.generate(5);
        for l in 1..5 {
            assert_eq!(&rows[l * 4..(l + 1) * 4], &rows[..4]);
        }
    }

    #[test]
    fn rnn_matches_unrolled_scalar_oracle() {
        let mut rng = seeded_rng(17, 0);
        let p = RecurrentParams::random(RecurrentKind::Rnn, 2, 2, &mut rng);
        let d = &p.data;
        // layout: h0 (2) | W (4) | b (2) | W_out (4) | b_out (2)
        let (mut h1, mut h2) = (d[0], d[1]);
        let mut expect = Vec::new();
        for _ in 0..5 {
            let a1 = d[2] * h1 + d[3] * h2 + d[6];
            let a2 = d[4] * h1 + d[5] * h2 + d[7];
            h1 = a1.tanh();
            h2 = a2.tanh();
            expect.push(d[8] * h1 + d[9] * h2 + d[12]);
            expect.push(d[10] * h1 + d[11] * h2 + d[13]);
        }
        let got = p.generate(5);
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in RecurrentKind::ALL {
            let p = RecurrentParams::random(kind, 3, 6, &mut seeded_rng(5, 1));
            assert_eq!(p.generate(7), p.generate(7));
        }
    }

    #[test]
    fn names_and_tags() {
        for kind in RecurrentKind::ALL {
            assert_eq!(kind.to_string().parse::<RecurrentKind>().unwrap(), kind);
            assert_eq!(RecurrentKind::from_tag(kind.tag()), Some(kind));
        }
        assert!("TCN".parse::<RecurrentKind>().is_err());
    }

    fn numeric_grad(p: &RecurrentParams, count: usize, weights: &[f64]) -> Vec<f64> {
        let f = |q: &RecurrentParams| -> f64 {
            q.generate(count).iter().zip(weights).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        (0..p.data.len())
            .map(|i| {
                let mut plus = p.clone();
                plus.data[i] += h;
                let mut minus = p.clone();
                minus.data[i] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn backward_matches_finite_differences() {
        for kind in RecurrentKind::ALL {
            let mut rng = seeded_rng(23, kind.tag() as u64);
            let mut p = RecurrentParams::random(kind, 3, 4, &mut rng);
            if kind.is_linear() {
                p.data.iter_mut().for_each(|v| *v *= 0.5);
            }
            let count = 6;
            let weights: Vec<f64> = (0..count * 4).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
            let trace = p.forward(count);
            let mut g = vec![0.0; p.data.len()];
            p.backward(&trace, &weights, &mut g);
            let n = numeric_grad(&p, count, &weights);
            for (i, (a, b)) in g.iter().zip(&n).enumerate() {
                assert!(
                    (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs())),
                    "{kind} coordinate {i}: analytic {a} numeric {b}"
                );
            }
        }
    }
}
