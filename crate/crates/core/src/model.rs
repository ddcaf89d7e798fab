//! Scoring functions for TComplEx, TNTComplEx and ChronoR.
//!
//! All three models share one shape: a composed relation factor `q` (complex,
//! width `rank`) multiplies the subject embedding into a left factor
//! `L = subject ⊙ q`, and the score of object `k` is `Re Σ_z L_z · tail(k)_z`
//! where `tail(k)` is `conj(k)` (or `k` for ChronoR in real-tail mode).
//!
//! | model      | q                         |
//! |------------|---------------------------|
//! | TComplEx   | `rel ⊙ time`              |
//! | TNTComplEx | `rel_t ⊙ time + rel`      |
//! | ChronoR    | `[rel ; time] ⊙ rotation` |

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_id, ComplexTable, Quadruple};

/// Named random sub-streams derived from a run seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const GRAD_CHECK: u64 = 3;
    pub const AUX_INIT: u64 = 4;
    pub const DATA: u64 = 5;
}

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    TComplEx,
    TNTComplEx,
    ChronoR,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::TComplEx, ModelKind::TNTComplEx, ModelKind::ChronoR];

    pub fn tag(self) -> u32 {
        match self {
            ModelKind::TComplEx => 1,
            ModelKind::TNTComplEx => 2,
            ModelKind::ChronoR => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::TComplEx => "tcomplex",
            ModelKind::TNTComplEx => "tntcomplex",
            ModelKind::ChronoR => "chronor",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tcomplex" => Ok(ModelKind::TComplEx),
            "tntcomplex" => Ok(ModelKind::TNTComplEx),
            "chronor" => Ok(ModelKind::ChronoR),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Complex components per entity embedding.
    pub rank: usize,
    /// ChronoR relation width `d_j`; equals `rank` for the other models.
    pub relation_rank: usize,
    /// Timestamp embedding width `d_t`; equals `rank` for the other models.
    pub time_rank: usize,
    /// Score against `conj(object)`. Only ChronoR may turn this off.
    pub conj_tail: bool,
}

impl ModelSpec {
    /// Default spec; ChronoR splits the rank evenly between relation and time.
    pub fn new(kind: ModelKind, rank: usize) -> Self {
        let (relation_rank, time_rank) = match kind {
            ModelKind::ChronoR => (rank - rank / 2, rank / 2),
            _ => (rank, rank),
        };
        Self {
            kind,
            rank,
            relation_rank,
            time_rank,
            conj_tail: true,
        }
    }

    pub fn chronor(rank: usize, relation_rank: usize, time_rank: usize, conj_tail: bool) -> Self {
        Self {
            kind: ModelKind::ChronoR,
            rank,
            relation_rank,
            time_rank,
            conj_tail,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        match self.kind {
            ModelKind::ChronoR => {
                if self.relation_rank == 0 || self.time_rank == 0 {
                    return Err(Error::Config(
                        "ChronoR needs relation and time widths of at least 1".into(),
                    ));
                }
                if self.relation_rank + self.time_rank != self.rank {
                    return Err(Error::Config(format!(
                        "ChronoR widths {} + {} do not add up to rank {}",
                        self.relation_rank, self.time_rank, self.rank
                    )));
                }
            }
            _ => {
                if self.relation_rank != self.rank || self.time_rank != self.rank {
                    return Err(Error::Config(format!(
                        "{} uses full-rank relation and time tables",
                        self.kind
                    )));
                }
                if !self.conj_tail {
                    return Err(Error::Config(format!(
                        "{} always scores against the conjugated object",
                        self.kind
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parameter count for `num_base_relations` relations before reciprocal
/// augmentation; the models hold `2 · num_base_relations` relation rows.
pub fn param_count(
    spec: &ModelSpec,
    num_entities: usize,
    num_base_relations: usize,
    num_timestamps: usize,
) -> usize {
    let d = spec.rank;
    let (e, r, t) = (num_entities, num_base_relations, num_timestamps);
    match spec.kind {
        ModelKind::TComplEx => 2 * d * (e + t + 2 * r),
        ModelKind::TNTComplEx => 2 * d * (e + t + 4 * r),
        ModelKind::ChronoR => {
            2 * (e * d + 2 * r * spec.relation_rank + 2 * r * d + t * spec.time_rank)
        }
    }
}

/// Embedding tables for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub entity: ComplexTable,
    /// TComplEx: `rel`; TNTComplEx: temporal `rel_t`; ChronoR: `rel` (width `d_j`).
    pub relation: ComplexTable,
    /// TNTComplEx: static `rel`; ChronoR: the extra rotation `rel'`.
    pub relation_aux: Option<ComplexTable>,
    pub time: ComplexTable,
}

impl ModelParams {
    pub fn zeros(
        spec: ModelSpec,
        num_entities: usize,
        num_relations: usize,
        num_timestamps: usize,
    ) -> Result<Self> {
        spec.validate()?;
        let aux = match spec.kind {
            ModelKind::TComplEx => None,
            _ => Some(ComplexTable::zeros(num_relations, spec.rank)),
        };
        Ok(Self {
            spec,
            entity: ComplexTable::zeros(num_entities, spec.rank),
            relation: ComplexTable::zeros(num_relations, spec.relation_rank),
            relation_aux: aux,
            time: ComplexTable::zeros(num_timestamps, spec.time_rank),
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entity.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relation.rows()
    }

    pub fn num_timestamps(&self) -> usize {
        self.time.rows()
    }

    /// Tables in serialization order.
    pub fn tables(&self) -> Vec<(&'static str, &ComplexTable)> {
        let mut v = vec![("entity", &self.entity), ("relation", &self.relation)];
        if let Some(a) = &self.relation_aux {
            v.push((aux_name(self.spec.kind), a));
        }
        v.push(("time", &self.time));
        v
    }

    pub fn tables_mut(&mut self) -> Vec<(&'static str, &mut ComplexTable)> {
        let kind = self.spec.kind;
        let mut v = vec![("entity", &mut self.entity), ("relation", &mut self.relation)];
        if let Some(a) = self.relation_aux.as_mut() {
            v.push((aux_name(kind), a));
        }
        v.push(("time", &mut self.time));
        v
    }

    pub fn num_floats(&self) -> usize {
        self.tables().iter().map(|(_, t)| t.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tables().iter().all(|(_, t)| t.is_finite())
    }

    fn check_quad(&self, subject: u32, relation: u32, object: Option<u32>, timestamp: u32) -> Result<()> {
        check_id("entity", subject as usize, self.num_entities())?;
        if let Some(o) = object {
            check_id("entity", o as usize, self.num_entities())?;
        }
        check_id("relation", relation as usize, self.num_relations())?;
        check_id("timestamp", timestamp as usize, self.num_timestamps())
    }

    /// Writes the composed relation factor `q` (split layout, width `2·rank`).
    pub fn relation_factor(&self, relation: usize, timestamp: usize, out: &mut [f64]) {
        let d = self.spec.rank;
        let rel = self.relation.row(relation);
        let time = self.time.row(timestamp);
        match self.spec.kind {
            ModelKind::TComplEx => cmul(rel, time, out),
            ModelKind::TNTComplEx => {
                cmul(rel, time, out);
                let stat = self.relation_aux.as_ref().unwrap().row(relation);
                for (o, s) in out.iter_mut().zip(stat) {
                    *o += s;
                }
            }
            ModelKind::ChronoR => {
                let mut c = vec![0.0; 2 * d];
                concat(rel, time, &mut c);
                cmul(&c, self.relation_aux.as_ref().unwrap().row(relation), out);
            }
        }
    }

    /// Left factor `subject ⊙ q`, with the imaginary half negated when the tail
    /// is not conjugated, so that every score is a plain dot product with an
    /// entity row.
    pub fn left_factor(&self, subject: usize, relation: usize, timestamp: usize, out: &mut [f64]) {
        let mut q = vec![0.0; 2 * self.spec.rank];
        self.relation_factor(relation, timestamp, &mut q);
        cmul(self.entity.row(subject), &q, out);
        if !self.spec.conj_tail {
            let d = self.spec.rank;
            for v in &mut out[d..] {
                *v = -*v;
            }
        }
    }

    pub fn score(&self, q: &Quadruple) -> Result<f64> {
        self.check_quad(q.subject, q.relation, Some(q.object), q.timestamp)?;
        let mut left = vec![0.0; 2 * self.spec.rank];
        self.left_factor(q.subject as usize, q.relation as usize, q.timestamp as usize, &mut left);
        Ok(dot(&left, self.entity.row(q.object as usize)))
    }

    /// Scores `(subject, relation, k, timestamp)` for every entity `k`.
    pub fn score_all_objects(&self, subject: u32, relation: u32, timestamp: u32) -> Result<Vec<f64>> {
        self.check_quad(subject, relation, None, timestamp)?;
        let mut left = vec![0.0; 2 * self.spec.rank];
        self.left_factor(subject as usize, relation as usize, timestamp as usize, &mut left);
        Ok(self.scores_for_left(&left))
    }

    pub(crate) fn scores_for_left(&self, left: &[f64]) -> Vec<f64> {
        (0..self.num_entities())
            .map(|k| dot(left, self.entity.row(k)))
            .collect()
    }

    /// Accumulates the gradient of a scalar through `q(relation, timestamp)`
    /// given `grad_q = ∂f/∂q` (split layout).
    pub(crate) fn backprop_relation_factor(
        &self,
        relation: usize,
        timestamp: usize,
        grad_q: &[f64],
        grads: &mut ModelGrads,
    ) {
        let d = self.spec.rank;
        let rel = self.relation.row(relation);
        let time = self.time.row(timestamp);
        match self.spec.kind {
            ModelKind::TComplEx => {
                cmul_conj_acc(grad_q, time, grads.relation.row_mut(relation));
                cmul_conj_acc(grad_q, rel, grads.time.row_mut(timestamp));
            }
            ModelKind::TNTComplEx => {
                cmul_conj_acc(grad_q, time, grads.relation.row_mut(relation));
                cmul_conj_acc(grad_q, rel, grads.time.row_mut(timestamp));
                let g = grads.relation_aux.as_mut().unwrap().row_mut(relation);
                for (g, v) in g.iter_mut().zip(grad_q) {
                    *g += v;
                }
            }
            ModelKind::ChronoR => {
                let rot = self.relation_aux.as_ref().unwrap().row(relation);
                let mut c = vec![0.0; 2 * d];
                concat(rel, time, &mut c);
                cmul_conj_acc(grad_q, &c, grads.relation_aux.as_mut().unwrap().row_mut(relation));
                let mut gc = vec![0.0; 2 * d];
                cmul_conj_acc(grad_q, rot, &mut gc);
                let dj = self.spec.relation_rank;
                let gr = grads.relation.row_mut(relation);
                for z in 0..dj {
                    gr[z] += gc[z];
                    gr[dj + z] += gc[d + z];
                }
                let dt = self.spec.time_rank;
                let gt = grads.time.row_mut(timestamp);
                for z in 0..dt {
                    gt[z] += gc[dj + z];
                    gt[dt + z] += gc[d + dj + z];
                }
            }
        }
    }
}

fn aux_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::ChronoR => "rotation",
        _ => "relation_static",
    }
}

/// Gaussian(0, scale²) initialization from the `INIT` stream of `seed`.
pub fn init_params(
    spec: ModelSpec,
    num_entities: usize,
    num_relations: usize,
    num_timestamps: usize,
    seed: u64,
    scale: f64,
) -> Result<ModelParams> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("init scale must be finite and >= 0, got {scale}")));
    }
    let mut p = ModelParams::zeros(spec, num_entities, num_relations, num_timestamps)?;
    let mut rng = seeded_rng(seed, streams::INIT);
    for (_, t) in p.tables_mut() {
        for v in t.data_mut() {
            let x: f64 = StandardNormal.sample(&mut rng);
            *v = scale * x;
        }
    }
    Ok(p)
}

/// Dense gradient buffer for one table with per-row touch flags.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGrad {
    pub data: Vec<f64>,
    pub row_len: usize,
    pub touched: Vec<bool>,
}

impl TableGrad {
    pub fn zeros_like(t: &ComplexTable) -> Self {
        Self {
            data: vec![0.0; t.data().len()],
            row_len: t.row_len(),
            touched: vec![false; t.rows()],
        }
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        self.touched[r] = true;
        &mut self.data[r * self.row_len..(r + 1) * self.row_len]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.row_len..(r + 1) * self.row_len]
    }

    pub fn touch_all(&mut self) {
        self.touched.iter_mut().for_each(|t| *t = true);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub entity: TableGrad,
    pub relation: TableGrad,
    pub relation_aux: Option<TableGrad>,
    pub time: TableGrad,
}

impl ModelGrads {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Self {
            entity: TableGrad::zeros_like(&p.entity),
            relation: TableGrad::zeros_like(&p.relation),
            relation_aux: p.relation_aux.as_ref().map(TableGrad::zeros_like),
            time: TableGrad::zeros_like(&p.time),
        }
    }

    pub fn tables(&self) -> Vec<&TableGrad> {
        let mut v = vec![&self.entity, &self.relation];
        if let Some(a) = &self.relation_aux {
            v.push(a);
        }
        v.push(&self.time);
        v
    }

    pub fn tables_mut(&mut self) -> Vec<&mut TableGrad> {
        let mut v = vec![&mut self.entity, &mut self.relation];
        if let Some(a) = self.relation_aux.as_mut() {
            v.push(a);
        }
        v.push(&mut self.time);
        v
    }
}

// Complex helpers over split-layout slices (`[re(d) | im(d)]`).

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = a ⊙ b`.
pub(crate) fn cmul(a: &[f64], b: &[f64], out: &mut [f64]) {
    let d = a.len() / 2;
    for z in 0..d {
        let (ar, ai, br, bi) = (a[z], a[d + z], b[z], b[d + z]);
        out[z] = ar * br - ai * bi;
        out[d + z] = ar * bi + ai * br;
    }
}

/// `out += g ⊙ conj(b)`: the gradient of a real scalar w.r.t. `a` in `a ⊙ b`
/// when `g` is its gradient w.r.t. the product.
pub(crate) fn cmul_conj_acc(g: &[f64], b: &[f64], out: &mut [f64]) {
    let d = g.len() / 2;
    for z in 0..d {
        let (gr, gi, br, bi) = (g[z], g[d + z], b[z], b[d + z]);
        out[z] += gr * br + gi * bi;
        out[d + z] += gi * br - gr * bi;
    }
}

/// `[a ; b]` along the embedding axis, in split layout.
pub(crate) fn concat(a: &[f64], b: &[f64], out: &mut [f64]) {
    let (da, db) = (a.len() / 2, b.len() / 2);
    let d = da + db;
    out[..da].copy_from_slice(&a[..da]);
    out[da..d].copy_from_slice(&b[..db]);
    out[d..d + da].copy_from_slice(&a[da..]);
    out[d + da..].copy_from_slice(&b[db..]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params_1d(kind: ModelKind, e: [Complex64; 2], r: Complex64, raux: Complex64, t: Complex64) -> ModelParams {
        let spec = ModelSpec::new(kind, 1);
        let mut p = ModelParams::zeros(spec, 2, 1, 1).unwrap();
        p.entity.set(0, 0, e[0]);
        p.entity.set(1, 0, e[1]);
        p.relation.set(0, 0, r);
        if let Some(a) = p.relation_aux.as_mut() {
            a.set(0, 0, raux);
        }
        p.time.set(0, 0, t);
        p
    }

    #[test]
    fn tcomplex_hand_values() {
        let one = c(1.0, 0.0);
        let p = params_1d(ModelKind::TComplEx, [one, one], one, one, one);
        assert_eq!(p.score(&Quadruple::new(0, 0, 1, 0)).unwrap(), 1.0);
        // Re(i · 1 · conj(i) · 1) = 1
        let i = c(0.0, 1.0);
        let p = params_1d(ModelKind::TComplEx, [i, i], one, one, one);
        assert_eq!(p.score(&Quadruple::new(0, 0, 1, 0)).unwrap(), 1.0);
        let p = params_1d(ModelKind::TComplEx, [i, i], one, one, c(0.0, 0.0));
        assert_eq!(p.score(&Quadruple::new(0, 0, 1, 0)).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let one = c(1.0, 0.0);
        let p = params_1d(ModelKind::TNTComplEx, [one, one], one, one, one);
        assert!(matches!(
            p.score(&Quadruple::new(0, 0, 2, 0)),
            Err(Error::IdOutOfRange { kind: "entity", .. })
        ));
        assert!(p.score_all_objects(0, 3, 0).is_err());
        assert!(p.score_all_objects(0, 0, 1).is_err());
    }

    #[test]
    fn chronor_identity_rotation_reduces_to_entity_product() {
        // rel = time = rotation = 1 everywhere: score is Re<subject, conj(object)>
        let spec = ModelSpec::new(ModelKind::ChronoR, 2);
        let mut p = ModelParams::zeros(spec, 2, 1, 1).unwrap();
        p.entity.set(0, 0, c(0.5, 1.0));
        p.entity.set(0, 1, c(-2.0, 0.25));
        p.entity.set(1, 0, c(1.5, -1.0));
        p.entity.set(1, 1, c(0.5, 3.0));
        p.relation.set(0, 0, c(1.0, 0.0));
        p.time.set(0, 0, c(1.0, 0.0));
        for z in 0..2 {
            p.relation_aux.as_mut().unwrap().set(0, z, c(1.0, 0.0));
        }
        let s = p.score(&Quadruple::new(0, 0, 1, 0)).unwrap();
        let expect: f64 = (0..2)
            .map(|z| (p.entity.get(0, z) * p.entity.get(1, z).conj()).re)
            .sum();
        assert!((s - expect).abs() < 1e-15);
    }

    #[test]
    fn chronor_real_embeddings_hand_sum() {
        // d = 2, d_j = d_t = 1, all real:
        // subject (2, 3), rel 5, time 7, rotation (11, 13), object (17, 19)
        // 2·5·11·17 + 3·7·13·19 = 1870 + 5187
        let spec = ModelSpec::chronor(2, 1, 1, false);
        let mut p = ModelParams::zeros(spec, 2, 1, 1).unwrap();
        p.entity.set(0, 0, c(2.0, 0.0));
        p.entity.set(0, 1, c(3.0, 0.0));
        p.entity.set(1, 0, c(17.0, 0.0));
        p.entity.set(1, 1, c(19.0, 0.0));
        p.relation.set(0, 0, c(5.0, 0.0));
        p.time.set(0, 0, c(7.0, 0.0));
        p.relation_aux.as_mut().unwrap().set(0, 0, c(11.0, 0.0));
        p.relation_aux.as_mut().unwrap().set(0, 1, c(13.0, 0.0));
        assert_eq!(p.score(&Quadruple::new(0, 0, 1, 0)).unwrap(), 7057.0);
        let mut conj = p.clone();
        conj.spec.conj_tail = true;
        assert_eq!(conj.score(&Quadruple::new(0, 0, 1, 0)).unwrap(), 7057.0);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(ModelKind::TComplEx, 0).validate().is_err());
        assert!(ModelSpec::chronor(4, 4, 0, true).validate().is_err());
        assert!(ModelSpec::chronor(4, 1, 2, true).validate().is_err());
        let mut s = ModelSpec::new(ModelKind::TNTComplEx, 3);
        s.conj_tail = false;
        assert!(s.validate().is_err());
        let s = ModelSpec::new(ModelKind::ChronoR, 4);
        assert_eq!((s.relation_rank, s.time_rank), (2, 2));
    }

    #[test]
    fn param_count_table() {
        let tnt = ModelSpec::new(ModelKind::TNTComplEx, 2000);
        assert_eq!(param_count(&tnt, 7128, 230, 365), 33_652_000);
        assert_eq!(param_count(&ModelSpec::new(ModelKind::TNTComplEx, 1), 1, 1, 1), 12);
        let tc = ModelSpec::new(ModelKind::TComplEx, 7);
        let tnt = ModelSpec::new(ModelKind::TNTComplEx, 7);
        assert_eq!(
            param_count(&tnt, 10, 3, 4) - param_count(&tc, 10, 3, 4),
            2 * 7 * 2 * 3
        );
        // counts agree with the allocated tables in the reciprocal relation space
        for spec in [tc, tnt, ModelSpec::chronor(7, 3, 4, true)] {
            let p = ModelParams::zeros(spec, 10, 6, 4).unwrap();
            assert_eq!(p.num_floats(), param_count(&spec, 10, 3, 4));
        }
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let spec = ModelSpec::new(ModelKind::TNTComplEx, 4);
        let a = init_params(spec, 5, 2, 3, 9, 0.1).unwrap();
        let b = init_params(spec, 5, 2, 3, 9, 0.1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(spec, 5, 2, 3, 10, 0.1).unwrap());
        let z = init_params(spec, 5, 2, 3, 9, 0.0).unwrap();
        assert!(z.tables().iter().all(|(_, t)| t.data().iter().all(|v| *v == 0.0)));
        assert!(init_params(spec, 5, 2, 3, 9, f64::NAN).is_err());
    }

    #[test]
    fn init_mean_within_three_sigma() {
        let spec = ModelSpec::new(ModelKind::TComplEx, 500);
        let p = init_params(spec, 1000, 0, 0, 4, 0.01).unwrap();
        let n = p.entity.data().len();
        assert_eq!(n, 1_000_000);
        let mean = p.entity.data().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * 0.01 / (n as f64).sqrt(), "mean {mean}");
    }

    fn scalar_score(p: &ModelParams, q: &Quadruple) -> f64 {
        // Independent complex-number evaluation of each model formula.
        let d = p.spec.rank;
        let (s, r, o, t) = (q.subject as usize, q.relation as usize, q.object as usize, q.timestamp as usize);
        let mut acc = c(0.0, 0.0);
        for z in 0..d {
            let subj = p.entity.get(s, z);
            let obj = p.entity.get(o, z);
            let tail = if p.spec.conj_tail { obj.conj() } else { obj };
            let rel_factor = match p.spec.kind {
                ModelKind::TComplEx => p.relation.get(r, z) * p.time.get(t, z),
                ModelKind::TNTComplEx => {
                    p.relation.get(r, z) * p.time.get(t, z) + p.relation_aux.as_ref().unwrap().get(r, z)
                }
                ModelKind::ChronoR => {
                    let dj = p.spec.relation_rank;
                    let part = if z < dj { p.relation.get(r, z) } else { p.time.get(t, z - dj) };
                    part * p.relation_aux.as_ref().unwrap().get(r, z)
                }
            };
            acc += subj * rel_factor * tail;
        }
        acc.re
    }

    fn random_params(kind: ModelKind, seed: u64) -> ModelParams {
        let spec = match kind {
            ModelKind::ChronoR => ModelSpec::chronor(3, 1, 2, seed.is_multiple_of(2)),
            k => ModelSpec::new(k, 2),
        };
        init_params(spec, 7, 4, 3, seed, 1.0).unwrap()
    }

    #[test]
    fn pointwise_scores_match_scalar_oracle() {
        for kind in ModelKind::ALL {
            for seed in 0..20 {
                let p = random_params(kind, seed);
                for s in 0..7 {
                    let q = Quadruple::new(s, s % 4, (s * 3 + 1) % 7, s % 3);
                    let got = p.score(&q).unwrap();
                    let want = scalar_score(&p, &q);
                    assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{kind} {got} {want}");
                }
            }
        }
    }

    #[test]
    fn tntcomplex_degenerate_parts() {
        let mut p = random_params(ModelKind::TNTComplEx, 3);
        let q = Quadruple::new(1, 2, 4, 0);
        // static part zero: equals TComplEx on (subject, rel_t, object, time)
        let mut no_static = p.clone();
        no_static.relation_aux.as_mut().unwrap().data_mut().fill(0.0);
        let mut tc = no_static.clone();
        tc.spec.kind = ModelKind::TComplEx;
        tc.relation_aux = None;
        assert_eq!(no_static.score(&q).unwrap(), tc.score(&q).unwrap());
        // temporal part zero: static ComplEx, identical across timestamps
        p.relation.data_mut().fill(0.0);
        let rows: Vec<Vec<f64>> = (0..3).map(|t| p.score_all_objects(1, 2, t).unwrap()).collect();
        assert_eq!(rows[0], rows[1]);
        assert_eq!(rows[1], rows[2]);
        let complex: f64 = (0..2)
            .map(|z| (p.entity.get(1, z) * p.relation_aux.as_ref().unwrap().get(2, z) * p.entity.get(4, z).conj()).re)
            .sum();
        assert!((p.score(&q).unwrap() - complex).abs() < 1e-12);
    }

    #[test]
    fn score_all_objects_equals_pointwise() {
        for kind in ModelKind::ALL {
            let p = random_params(kind, 11);
            let all = p.score_all_objects(2, 1, 2).unwrap();
            assert_eq!(all.len(), 7);
            for (k, v) in all.iter().enumerate() {
                assert_eq!(*v, p.score(&Quadruple::new(2, 1, k as u32, 2)).unwrap());
            }
            assert_eq!(all, p.score_all_objects(2, 1, 2).unwrap());
        }
        let single = init_params(ModelSpec::new(ModelKind::TComplEx, 3), 1, 1, 1, 0, 1.0).unwrap();
        assert_eq!(
            single.score_all_objects(0, 0, 0).unwrap(),
            vec![single.score(&Quadruple::new(0, 0, 0, 0)).unwrap()]
        );
    }

    /// Zeroes the parts that enter the score additively alongside table `tbl`,
    /// so that the score is linear (not just affine) in that table.
    fn isolate(p: &mut ModelParams, tbl: usize) {
        match (p.spec.kind, tbl) {
            (ModelKind::TNTComplEx, 1) | (ModelKind::TNTComplEx, 3) => {
                p.relation_aux.as_mut().unwrap().data_mut().fill(0.0)
            }
            (ModelKind::TNTComplEx, 2) => p.relation.data_mut().fill(0.0),
            (ModelKind::ChronoR, 1) => p.time.data_mut().fill(0.0),
            (ModelKind::ChronoR, 3) => p.relation.data_mut().fill(0.0),
            _ => {}
        }
    }

    proptest! {
        #[test]
        fn scores_are_linear_in_each_table(
            seed in 0u64..1000,
            kind_ix in 0usize..3,
            table_ix in 0usize..4,
            a in -2.0..2.0f64,
            b in -2.0..2.0f64,
        ) {
            let kind = ModelKind::ALL[kind_ix];
            let mut base = random_params(kind, seed);
            let other = random_params(kind, seed + 7919);
            let tbl = if kind == ModelKind::TComplEx && table_ix == 2 { 0 } else { table_ix };
            isolate(&mut base, tbl);
            // `with(x)` replaces table `tbl` by x, keeping every other table from `base`
            let idx = if kind == ModelKind::TComplEx && tbl == 3 { 2 } else { tbl };
            let with = |data: Vec<f64>| {
                let mut m = base.clone();
                m.tables_mut()[idx].1.data_mut().copy_from_slice(&data);
                // the entity table holds both subject and object; vary only the subject
                if tbl == 0 {
                    m.entity.row_mut(3).copy_from_slice(base.entity.row(3));
                }
                m
            };
            let x1 = base.tables()[idx].1.data().to_vec();
            let x2 = other.tables()[idx].1.data().to_vec();
            let mixed: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
            let q = Quadruple::new(0, 1, 3, 2);
            let lhs = with(mixed).score(&q).unwrap();
            let rhs = a * with(x1).score(&q).unwrap() + b * with(x2).score(&q).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs().max(rhs.abs())));
        }
    }
}
