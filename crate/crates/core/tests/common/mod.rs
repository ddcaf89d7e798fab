//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use num_complex::Complex64;
use rand::Rng;
use tkgc::data::RawFact;
use tkgc::model::{seeded_rng, streams};
use tkgc::regularisers::RegFamily;
use tkgc::train::{TrainConfig, TrainableParams};
use tkgc::{
    augment_reciprocal, build_dataset, BuildOptions, DatasetSplits, ModelKind, ModelParams,
    ModelSpec, Quadruple, RecurrentKind, TemporalRegSpec, TiePolicy,
};

pub fn verdict(criterion: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

/// Split-layout rows as complex vectors.
pub fn complex_rows(rows: &[f64], rank: usize) -> Vec<Vec<Complex64>> {
    rows.chunks(2 * rank)
        .map(|r| (0..rank).map(|z| Complex64::new(r[z], r[rank + z])).collect())
        .collect()
}

fn adjacent_power_sums(t: &[Vec<Complex64>], bias: Option<&[Complex64]>, p: u32) -> Vec<f64> {
    let mut out = Vec::new();
    for l in 0..t.len().saturating_sub(1) {
        let mut s = 0.0;
        for z in 0..t[l].len() {
            let mut diff = t[l + 1][z] - t[l][z];
            if let Some(b) = bias {
                diff -= b[z];
            }
            s += diff.norm().powf(p as f64);
        }
        out.push(s);
    }
    out
}

pub fn oracle_np(rows: &[f64], rank: usize, p: u32) -> f64 {
    let t = complex_rows(rows, rank);
    if t.len() < 2 {
        return 0.0;
    }
    adjacent_power_sums(&t, None, p).iter().sum::<f64>() / (t.len() - 1) as f64
}

pub fn oracle_lp(rows: &[f64], rank: usize, p: u32) -> f64 {
    let t = complex_rows(rows, rank);
    if t.len() < 2 {
        return 0.0;
    }
    adjacent_power_sums(&t, None, p)
        .iter()
        .sum::<f64>()
        .powf(1.0 / p as f64)
        / (t.len() - 1) as f64
}

pub fn oracle_linear3(rows: &[f64], rank: usize, bias: &[f64], p: u32) -> f64 {
    let t = complex_rows(rows, rank);
    let b = &complex_rows(bias, rank)[0];
    if t.len() < 2 {
        return 0.0;
    }
    adjacent_power_sums(&t, Some(b), p).iter().sum::<f64>() / (t.len() - 1) as f64
}

/// Filtered ranks of every right and left query, by brute force over
/// pointwise scores and a filter built directly from the raw fact lists.
pub fn naive_ranks(
    params: &ModelParams,
    base_facts: &[Quadruple],
    queries: &[Quadruple],
    num_base_relations: u32,
    ties: TiePolicy,
) -> (Vec<f64>, Vec<f64>) {
    let known: HashSet<Quadruple> = base_facts.iter().copied().collect();
    let ne = params.num_entities() as u32;
    let rank_of = |truth: u32, score: &dyn Fn(u32) -> f64, is_known: &dyn Fn(u32) -> bool| {
        let own = score(truth);
        let (mut above, mut tied) = (0.0, 0.0);
        for k in 0..ne {
            if k == truth || is_known(k) {
                continue;
            }
            let s = score(k);
            if s > own {
                above += 1.0;
            } else if s == own {
                tied += 1.0;
            }
        }
        1.0 + above
            + match ties {
                TiePolicy::Pessimistic => tied,
                TiePolicy::Optimistic => 0.0,
                TiePolicy::Mean => tied / 2.0,
            }
    };
    let mut right = Vec::new();
    let mut left = Vec::new();
    for q in queries {
        right.push(rank_of(
            q.object,
            &|k| params.score(&Quadruple::new(q.subject, q.relation, k, q.timestamp)).unwrap(),
            &|k| known.contains(&Quadruple::new(q.subject, q.relation, k, q.timestamp)),
        ));
        left.push(rank_of(
            q.subject,
            &|k| {
                params
                    .score(&Quadruple::new(q.object, q.relation + num_base_relations, k, q.timestamp))
                    .unwrap()
            },
            &|k| known.contains(&Quadruple::new(k, q.relation, q.object, q.timestamp)),
        ));
    }
    (right, left)
}

pub fn random_raw<R: Rng>(
    rng: &mut R,
    entities: usize,
    relations: usize,
    timestamps: usize,
    facts: usize,
) -> Vec<RawFact> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < facts {
        let (s, r, o, t) = (
            rng.random_range(0..entities),
            rng.random_range(0..relations),
            rng.random_range(0..entities),
            rng.random_range(0..timestamps),
        );
        if seen.insert((s, r, o, t)) {
            out.push(RawFact {
                subject: format!("e{s}"),
                relation: format!("r{r}"),
                object: format!("e{o}"),
                time: chrono::NaiveDate::from_ymd_opt(2020, 1, 1 + t as u32),
                modifier: None,
            });
        }
    }
    out
}

/// A random reciprocal-augmented dataset with non-empty valid and test splits.
pub fn random_dataset<R: Rng>(rng: &mut R, max_e: usize, max_r: usize, max_t: usize) -> DatasetSplits {
    let e = rng.random_range(2..=max_e);
    let r = rng.random_range(1..=max_r);
    let t = rng.random_range(1..=max_t);
    let n = rng.random_range(6..=(e * e * r * t).clamp(6, 40));
    let facts = random_raw(rng, e, r, t, n.min(e * e * r * t));
    let cut1 = (facts.len() / 2).max(1);
    let cut2 = cut1 + (facts.len() - cut1) / 2;
    let splits = build_dataset(&facts[..cut1], &facts[cut1..cut2], &facts[cut2..], BuildOptions::default()).unwrap();
    augment_reciprocal(splits).unwrap()
}

/// Every temporal regulariser named by the gradient suite.
pub fn regulariser_suite() -> Vec<(String, TemporalRegSpec)> {
    let mut v = vec![("N3-Omega".to_string(), TemporalRegSpec::none())];
    v.extend((1..=5).map(|p| (format!("L{p}"), TemporalRegSpec::lp(p))));
    v.extend((2..=5).map(|p| (format!("N{p}"), TemporalRegSpec::np(p))));
    v.push(("Linear3".into(), TemporalRegSpec::linear3(3)));
    v.extend(
        RecurrentKind::ALL
            .iter()
            .map(|k| (k.to_string(), TemporalRegSpec::recurrent(*k, 1))),
    );
    v
}

pub struct GradInstance {
    pub params: TrainableParams,
    pub batch: Vec<Quadruple>,
    pub config: TrainConfig,
}

/// Random small problem for a gradient check.
pub fn random_grad_instance<R: Rng>(rng: &mut R, kind: ModelKind, reg: TemporalRegSpec) -> GradInstance {
    let rank = rng.random_range(2..=4);
    let spec = match kind {
        ModelKind::ChronoR => {
            let dj = rng.random_range(1..rank);
            ModelSpec::chronor(rank, dj, rank - dj, rng.random_bool(0.5))
        }
        k => ModelSpec::new(k, rank),
    };
    let reg = if reg.is_recurrent() {
        TemporalRegSpec { hidden: rng.random_range(1..rank), ..reg }
    } else {
        reg
    };
    let ne = rng.random_range(3..=6);
    let nr = 2 * rng.random_range(1..=3);
    let first_dated = rng.random_range(0..=1);
    // Linear gated cells are polynomial recurrences whose degree doubles per
    // step, so long chains overflow.
    let max_t = match reg.family {
        RegFamily::Recurrent(k) if k.is_linear() && k != RecurrentKind::LinearRnn => 4,
        RegFamily::Recurrent(_) => 16,
        _ => 6,
    };
    let nt = rng.random_range(first_dated + 2..=max_t);
    let seed = rng.random::<u64>();
    let params = TrainableParams::init(spec, &reg, (ne, nr, nt), first_dated, seed, 0.5).unwrap();
    let batch = (0..rng.random_range(1..=4))
        .map(|_| {
            Quadruple::new(
                rng.random_range(0..ne as u32),
                rng.random_range(0..nr as u32),
                rng.random_range(0..ne as u32),
                rng.random_range(0..nt as u32),
            )
        })
        .collect();
    let mut config = TrainConfig::new(spec);
    config.temporal = reg;
    config.lambda_emb = rng.random_range(0.01..0.5);
    config.lambda_time = rng.random_range(0.05..1.0);
    GradInstance { params, batch, config }
}

pub fn grad_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    seeded_rng(seed, streams::GRAD_CHECK)
}
