//! Training objective, analytic gradients, Adam and the training loop.
//!
//! Per batch `B` the objective is
//!
//! ```text
//! 1/|B| Σ_{(s,r,o,t)∈B} [ −φ(s,r,o,t) + log Σ_k exp φ(s,r,k,t) + λ₁ Ω(s, q(r,t), o) ] + λ₂ Λ(T)
//! ```
//!
//! where `Ω` is the nuclear 3-norm of the three factors of the trilinear
//! product and `Λ` the configured temporal penalty over the dated timestamps.
//! In recurrent mode the dated timestamp rows are produced by the generator
//! and `Λ` is not added.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::FilterIndex;
use crate::error::{Error, Result};
use crate::eval::{evaluate, Metrics, TiePolicy};
use crate::model::{
    cmul, cmul_conj_acc, init_params, seeded_rng, streams, ModelGrads, ModelParams, ModelSpec,
    TableGrad,
};
use crate::recurrent::{RecurrentParams, Trace};
use crate::regularisers::{n3_grad_acc, smoothing, RegFamily, Smoothing, TemporalRegSpec};
use crate::types::{check_id, ComplexTable, DatasetSplits, Quadruple};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub temporal: TemporalRegSpec,
    /// Weight of the embedding regulariser (λ₁).
    pub lambda_emb: f64,
    /// Weight of the temporal regulariser (λ₂).
    pub lambda_time: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Validate every this many epochs; 0 disables validation.
    pub valid_every: usize,
    pub init_scale: f64,
}

impl TrainConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            temporal: TemporalRegSpec::none(),
            lambda_emb: 0.0,
            lambda_time: 0.0,
            learning_rate: 0.1,
            batch_size: 1000,
            epochs: 50,
            seed: 0,
            adam: AdamConfig::default(),
            valid_every: 5,
            init_scale: 1e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.temporal.validate(self.model.rank)?;
        if !(self.lambda_emb >= 0.0 && self.lambda_time >= 0.0) {
            return Err(Error::Config("regularisation weights must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("init scale must be finite and >= 0".into()));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps.is_nan() || a.eps <= 0.0 {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }
}

/// Model tables plus the temporal regulariser's own parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableParams {
    pub model: ModelParams,
    /// Linear3 drift (one row of timestamp rank).
    pub bias: Option<ComplexTable>,
    pub recurrent: Option<RecurrentParams>,
    /// Index of the first dated timestamp (1 when slot 0 is reserved).
    pub first_dated: usize,
}

impl TrainableParams {
    /// Wraps model parameters without auxiliary tensors.
    pub fn plain(model: ModelParams) -> Self {
        Self {
            model,
            bias: None,
            recurrent: None,
            first_dated: 0,
        }
    }

    /// Initializes the model and any auxiliary tensors required by `reg`.
    pub fn init(
        spec: ModelSpec,
        reg: &TemporalRegSpec,
        counts: (usize, usize, usize),
        first_dated: usize,
        seed: u64,
        scale: f64,
    ) -> Result<Self> {
        let model = init_params(spec, counts.0, counts.1, counts.2, seed, scale)?;
        let mut rng = seeded_rng(seed, streams::AUX_INIT);
        let bias = match reg.family {
            RegFamily::Linear3 => {
                let mut b = ComplexTable::zeros(1, spec.time_rank);
                for v in b.data_mut() {
                    let x: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                    *v = scale * x;
                }
                Some(b)
            }
            _ => None,
        };
        let recurrent = match reg.family {
            RegFamily::Recurrent(kind) => Some(RecurrentParams::random(
                kind,
                reg.hidden,
                2 * spec.time_rank,
                &mut rng,
            )),
            _ => None,
        };
        let mut p = Self {
            model,
            bias,
            recurrent,
            first_dated,
        };
        p.refresh_generated_time();
        Ok(p)
    }

    fn dated_count(&self) -> usize {
        self.model.num_timestamps().saturating_sub(self.first_dated)
    }

    /// Overwrites the dated timestamp rows with the recurrent generator output.
    pub fn sync_generated_time(&mut self) {
        self.refresh_generated_time();
    }

    pub(crate) fn refresh_generated_time(&mut self) -> Option<Trace> {
        let rec = self.recurrent.as_ref()?;
        let trace = rec.forward(self.dated_count());
        let start = self.first_dated * self.model.time.row_len();
        self.model.time.data_mut()[start..].copy_from_slice(&trace.rows);
        Some(trace)
    }

    /// Tensors in a fixed order: name, data, row width, sparse row updates.
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut v: Vec<TensorMut<'_>> = Vec::new();
        for (name, t) in self.model.tables_mut() {
            let row_len = t.row_len();
            let sparse = name != "time";
            v.push(TensorMut {
                name,
                data: t.data_mut(),
                row_len,
                sparse,
            });
        }
        if let Some(b) = self.bias.as_mut() {
            let row_len = b.row_len();
            v.push(TensorMut {
                name: "linear3_bias",
                data: b.data_mut(),
                row_len,
                sparse: false,
            });
        }
        if let Some(r) = self.recurrent.as_mut() {
            let len = r.data.len();
            v.push(TensorMut {
                name: "recurrent",
                data: &mut r.data,
                row_len: len,
                sparse: false,
            });
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.model.is_finite()
            && self.bias.as_ref().is_none_or(ComplexTable::is_finite)
            && self
                .recurrent
                .as_ref()
                .is_none_or(|r| r.data.iter().all(|v| v.is_finite()))
    }

    fn first_non_finite(&mut self) -> Option<&'static str> {
        self.tensors_mut()
            .into_iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name)
    }
}

pub struct TensorMut<'a> {
    pub name: &'static str,
    pub data: &'a mut [f64],
    pub row_len: usize,
    pub sparse: bool,
}

/// Gradients mirroring [`TrainableParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub model: ModelGrads,
    pub bias: Option<Vec<f64>>,
    pub recurrent: Option<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(p: &TrainableParams) -> Self {
        Self {
            model: ModelGrads::zeros_like(&p.model),
            bias: p.bias.as_ref().map(|b| vec![0.0; b.data().len()]),
            recurrent: p.recurrent.as_ref().map(|r| vec![0.0; r.data.len()]),
        }
    }

    /// Gradient buffers in the order of [`TrainableParams::tensors_mut`], with
    /// touched-row flags for sparse tensors.
    pub fn tensors(&self) -> Vec<(&[f64], Option<&[bool]>)> {
        let mut v: Vec<(&[f64], Option<&[bool]>)> = self
            .model
            .tables()
            .into_iter()
            .map(|t: &TableGrad| (t.data.as_slice(), Some(t.touched.as_slice())))
            .collect();
        // the time table is updated densely
        if let Some(last) = v.last_mut() {
            last.1 = None;
        }
        if let Some(b) = &self.bias {
            v.push((b, None));
        }
        if let Some(r) = &self.recurrent {
            v.push((r, None));
        }
        v
    }
}

/// Objective value on one batch with its gradient.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    /// Mean softmax cross-entropy part alone.
    pub data_loss: f64,
    pub grads: Gradients,
}

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
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass buffers whose extents cover the strided m×k, k×n and
    // m×n index ranges.
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
            1,
        );
    }
}

/// Objective and exact gradients for one batch.
///
/// In recurrent mode the dated timestamp rows are regenerated first, so
/// `params` is updated in place before scoring.
pub fn batch_loss(
    params: &mut TrainableParams,
    batch: &[Quadruple],
    config: &TrainConfig,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let trace = params.refresh_generated_time();
    let p = &params.model;
    let (ne, d) = (p.num_entities(), p.spec.rank);
    let w = 2 * d;
    for q in batch {
        check_id("entity", q.subject as usize, ne)?;
        check_id("entity", q.object as usize, ne)?;
        check_id("relation", q.relation as usize, p.num_relations())?;
        check_id("timestamp", q.timestamp as usize, p.num_timestamps())?;
    }
    let bsz = batch.len();
    let inv_b = 1.0 / bsz as f64;
    let mut grads = Gradients::zeros_like(params);

    // left factors (with the tail sign folded in) and relation factors
    let mut left = vec![0.0; bsz * w];
    let mut qs = vec![0.0; bsz * w];
    for (b, q) in batch.iter().enumerate() {
        let qf = &mut qs[b * w..(b + 1) * w];
        p.relation_factor(q.relation as usize, q.timestamp as usize, qf);
        let l = &mut left[b * w..(b + 1) * w];
        cmul(p.entity.row(q.subject as usize), qf, l);
        if !p.spec.conj_tail {
            l[d..].iter_mut().for_each(|v| *v = -*v);
        }
    }

    // scores = left · entityᵀ
    let ent = p.entity.data();
    let mut scores = vec![0.0; bsz * ne];
    gemm(bsz, w, ne, &left, w, 1, ent, 1, w, 0.0, &mut scores, ne);

    // softmax cross-entropy; scores become dℓ/dscore scaled by 1/|B|
    let mut data_loss = 0.0;
    for (b, q) in batch.iter().enumerate() {
        let row = &mut scores[b * ne..(b + 1) * ne];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|s| (s - max).exp()).sum();
        let lse = max + sum.ln();
        data_loss += lse - row[q.object as usize];
        for s in row.iter_mut() {
            *s = (*s - lse).exp() * inv_b;
        }
        row[q.object as usize] -= inv_b;
    }
    data_loss *= inv_b;

    // d left = G · entity ; d entity += Gᵀ · left
    let mut d_left = vec![0.0; bsz * w];
    gemm(bsz, ne, w, &scores, ne, 1, ent, w, 1, 0.0, &mut d_left, w);
    gemm(ne, bsz, w, &scores, 1, ne, &left, w, 1, 1.0, &mut grads.model.entity.data, w);
    grads.model.entity.touch_all();

    let mut loss = data_loss;
    let emb_w = config.lambda_emb * inv_b;
    let mut dq = vec![0.0; w];
    for (b, q) in batch.iter().enumerate() {
        let (s, o) = (q.subject as usize, q.object as usize);
        let dl = &mut d_left[b * w..(b + 1) * w];
        if !p.spec.conj_tail {
            dl[d..].iter_mut().for_each(|v| *v = -*v);
        }
        let qf = &qs[b * w..(b + 1) * w];
        cmul_conj_acc(dl, qf, grads.model.entity.row_mut(s));
        dq.iter_mut().for_each(|v| *v = 0.0);
        cmul_conj_acc(dl, p.entity.row(s), &mut dq);
        if config.lambda_emb > 0.0 {
            let (hs, ho) = (p.entity.row(s), p.entity.row(o));
            loss += emb_w * crate::regularisers::emb_reg_n3(hs, qf, ho)?;
            n3_grad_acc(hs, emb_w, grads.model.entity.row_mut(s));
            n3_grad_acc(ho, emb_w, grads.model.entity.row_mut(o));
            n3_grad_acc(qf, emb_w, &mut dq);
        }
        p.backprop_relation_factor(q.relation as usize, q.timestamp as usize, &dq, &mut grads.model);
    }

    // temporal penalty over the dated rows
    let start = params.first_dated;
    let tw = p.time.row_len();
    let trank = p.time.rank();
    let mode = match config.temporal.family {
        RegFamily::Np | RegFamily::Linear3 => Some(Smoothing::Power),
        RegFamily::Lp if config.temporal.lp_per_pair => Some(Smoothing::PairRoot),
        RegFamily::Lp => Some(Smoothing::GlobalRoot),
        RegFamily::None | RegFamily::Recurrent(_) => None,
    };
    if let (Some(mode), true) = (mode, config.lambda_time > 0.0) {
        let bias = params.bias.as_ref().map(|b| b.data());
        if config.temporal.family == RegFamily::Linear3 && bias.is_none() {
            return Err(Error::Config("Linear3 requires a bias parameter".into()));
        }
        let gt = &mut grads.model.time.data[start * tw..];
        let pen = smoothing(
            mode,
            config.temporal.p,
            p.time.rows_from(start),
            trank,
            bias,
            Some((gt, grads.bias.as_deref_mut(), config.lambda_time)),
        );
        loss += config.lambda_time * pen.value;
    }
    grads.model.time.touch_all();

    if let (Some(trace), Some(rec)) = (trace, params.recurrent.as_ref()) {
        let gt = &mut grads.model.time.data[start * tw..];
        rec.backward(&trace, gt, grads.recurrent.as_mut().unwrap());
        // generated rows are not free parameters
        gt.iter_mut().for_each(|v| *v = 0.0);
    }

    if !loss.is_finite() {
        let tensor = params.first_non_finite().unwrap_or("loss");
        return Err(Error::NonFinite {
            tensor: tensor.to_string(),
            step: 0,
        });
    }
    Ok(BatchLoss {
        loss,
        data_loss,
        grads,
    })
}

/// Adam first and second moments for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: TrainableParams,
    pub moments: Vec<Moments>,
    pub step: u64,
    pub loss_history: Vec<f64>,
}

impl TrainState {
    pub fn new(mut params: TrainableParams) -> Self {
        let moments = params
            .tensors_mut()
            .iter()
            .map(|t| Moments {
                m: vec![0.0; t.data.len()],
                v: vec![0.0; t.data.len()],
            })
            .collect();
        Self {
            params,
            moments,
            step: 0,
            loss_history: Vec::new(),
        }
    }
}

/// One Adam update over a contiguous slice, using the bias corrections of
/// step `t` (1-based).
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    moments_m: &mut [f64],
    moments_v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        moments_m[i] = cfg.beta1 * moments_m[i] + (1.0 - cfg.beta1) * g;
        moments_v[i] = cfg.beta2 * moments_v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = moments_m[i] / bc1;
        let v_hat = moments_v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Applies one Adam step. Rows of sparse tensors that the batch did not touch
/// keep their parameters and moments.
pub fn adam_step(state: &mut TrainState, grads: &Gradients, config: &TrainConfig) -> Result<()> {
    let g = grads.tensors();
    let step = state.step + 1;
    let mut tensors = state.params.tensors_mut();
    if g.len() != tensors.len() || state.moments.len() != tensors.len() {
        return Err(Error::Dimension {
            expected: tensors.len(),
            actual: g.len(),
        });
    }
    for ((t, (gd, touched)), mom) in tensors.iter_mut().zip(&g).zip(state.moments.iter_mut()) {
        if gd.len() != t.data.len() {
            return Err(Error::Dimension {
                expected: t.data.len(),
                actual: gd.len(),
            });
        }
        let rl = t.row_len.max(1);
        match touched {
            Some(rows) if t.sparse => {
                for (r, _) in rows.iter().enumerate().filter(|(_, &on)| on) {
                    let span = r * rl..(r + 1) * rl;
                    adam_update(
                        &mut t.data[span.clone()],
                        &gd[span.clone()],
                        &mut mom.m[span.clone()],
                        &mut mom.v[span],
                        step,
                        config.learning_rate,
                        &config.adam,
                    );
                }
            }
            _ => adam_update(
                t.data,
                gd,
                &mut mom.m,
                &mut mom.v,
                step,
                config.learning_rate,
                &config.adam,
            ),
        }
    }
    drop(tensors);
    state.step = step;
    if let Some(name) = state.params.first_non_finite() {
        return Err(Error::NonFinite {
            tensor: name.to_string(),
            step,
        });
    }
    state.params.refresh_generated_time();
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Tensor, index, analytic and numeric value at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Denominator floor of the relative error, so that coordinates with
/// vanishing gradients are compared in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compares analytic gradients to central differences at up to
/// `coords_per_tensor` random coordinates of every trainable tensor.
pub fn gradient_check<R: Rng>(
    params: &TrainableParams,
    batch: &[Quadruple],
    config: &TrainConfig,
    h: f64,
    tolerance: f64,
    coords_per_tensor: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let mut base = params.clone();
    let analytic = batch_loss(&mut base, batch, config)?.grads;
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|(g, _)| g.to_vec()).collect();

    let mut probes: Vec<(usize, usize)> = Vec::new();
    {
        let mut scratch = params.clone();
        for (ti, t) in scratch.tensors_mut().iter().enumerate() {
            let n = t.data.len();
            if n == 0 {
                continue;
            }
            if n <= coords_per_tensor {
                probes.extend((0..n).map(|i| (ti, i)));
            } else {
                probes.extend((0..coords_per_tensor).map(|_| (ti, rng.random_range(0..n))));
            }
        }
    }

    let eval_at = |ti: usize, i: usize, delta: f64| -> Result<f64> {
        let mut p = params.clone();
        p.tensors_mut()[ti].data[i] += delta;
        Ok(batch_loss(&mut p, batch, config)?.loss)
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        tolerance,
        passed: true,
    };
    let names: Vec<&'static str> = params.clone().tensors_mut().iter().map(|t| t.name).collect();
    for (ti, i) in probes {
        // generated timestamp rows are not parameters
        if params.recurrent.is_some()
            && names[ti] == "time"
            && i >= params.first_dated * params.model.time.row_len()
        {
            continue;
        }
        let numeric = (eval_at(ti, i, h)? - eval_at(ti, i, -h)?) / (2.0 * h);
        let a = analytic[ti][i];
        let err = relative_error(a, numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            if err >= report.max_rel_error {
                report.worst = Some((names[ti].to_string(), i, a, numeric));
            }
        }
    }
    report.passed = report.max_rel_error <= tolerance;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid: Option<Metrics>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub params: TrainableParams,
    pub valid: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<EpochRecord>,
    /// Best parameters on validation MRR, when validation ran at least once.
    pub best: Option<BestCheckpoint>,
}

impl TrainOutcome {
    /// Best-on-validation parameters, or the final ones if validation never ran.
    pub fn best_params(&self) -> &TrainableParams {
        self.best.as_ref().map_or(&self.state.params, |b| &b.params)
    }
}

/// Initial parameters for training `config` on `splits`.
pub fn initial_params(splits: &DatasetSplits, config: &TrainConfig) -> Result<TrainableParams> {
    TrainableParams::init(
        config.model,
        &config.temporal,
        (splits.num_entities(), splits.num_relations(), splits.num_timestamps()),
        splits.vocabulary.first_dated_timestamp(),
        config.seed,
        config.init_scale,
    )
}

/// Trains on the reciprocal-augmented training split with seeded shuffling,
/// validating every `valid_every` epochs and keeping the best parameters.
pub fn train(splits: &DatasetSplits, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(splits, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    splits: &DatasetSplits,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if !splits.reciprocal {
        return Err(Error::Dataset(
            "training needs a reciprocal-augmented dataset".into(),
        ));
    }
    if splits.train.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    let mut state = TrainState::new(initial_params(splits, config)?);
    let mut rng = seeded_rng(config.seed, streams::SHUFFLE);
    let valid_filter = (config.valid_every > 0 && !splits.valid.is_empty())
        .then(|| FilterIndex::for_queries(splits, &splits.valid));
    let mut order: Vec<usize> = (0..splits.train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<BestCheckpoint> = None;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batch = Vec::with_capacity(config.batch_size);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| splits.train[i]));
            let out = batch_loss(&mut state.params, &batch, config).map_err(|e| match e {
                Error::NonFinite { tensor, .. } => Error::NonFinite {
                    tensor,
                    step: state.step + 1,
                },
                other => other,
            })?;
            total += out.loss * batch.len() as f64;
            adam_step(&mut state, &out.grads, config)?;
        }
        let train_loss = total / splits.train.len() as f64;
        state.loss_history.push(train_loss);

        let valid = match &valid_filter {
            Some(f) if epoch % config.valid_every == 0 || epoch == config.epochs => Some(evaluate(
                &state.params.model,
                &splits.valid,
                f,
                TiePolicy::Pessimistic,
            )?),
            _ => None,
        };
        if let Some(m) = valid {
            if best.as_ref().is_none_or(|b| m.mrr() > b.valid.mrr()) {
                best = Some(BestCheckpoint {
                    epoch,
                    params: state.params.clone(),
                    valid: m,
                });
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            valid,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome {
        state,
        history,
        best,
    })
}
