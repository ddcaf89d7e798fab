//! Filtered ranking evaluation (MRR and Hits@{1,3,10}) over right queries
//! `(s, r, ?, t)` and left queries answered through reciprocal relations
//! `(o, r⁻¹, ?, t)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FilterIndex;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::types::Quadruple;

/// How candidates that score exactly like the true entity are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// The true entity ranks after every tied competitor.
    #[default]
    Pessimistic,
    /// The true entity ranks before every tied competitor.
    Optimistic,
    /// Halfway between the two.
    Mean,
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TiePolicy::Pessimistic => "pessimistic",
            TiePolicy::Optimistic => "optimistic",
            TiePolicy::Mean => "mean",
        })
    }
}

impl FromStr for TiePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pessimistic" => Ok(TiePolicy::Pessimistic),
            "optimistic" => Ok(TiePolicy::Optimistic),
            "mean" => Ok(TiePolicy::Mean),
            other => Err(Error::Config(format!("unknown tie policy {other:?}"))),
        }
    }
}

/// Filtered rank of `target` given the scores of every entity. `filter` must be
/// sorted and contain `target`; its other members are skipped.
pub fn rank_from_scores(scores: &[f64], target: u32, filter: &[u32], ties: TiePolicy) -> Result<f64> {
    if filter.binary_search(&target).is_err() {
        return Err(Error::Contract(format!(
            "true entity {target} is missing from its filter set"
        )));
    }
    let own = *scores.get(target as usize).ok_or(Error::IdOutOfRange {
        kind: "entity",
        id: target as usize,
        count: scores.len(),
    })?;
    let (mut above, mut tied) = (0usize, 0usize);
    let mut f = filter.iter().peekable();
    for (k, &s) in scores.iter().enumerate() {
        while f.next_if(|&&x| (x as usize) < k).is_some() {}
        if f.peek().is_some_and(|&&x| x as usize == k) {
            continue;
        }
        if s > own {
            above += 1;
        } else if s == own {
            tied += 1;
        }
    }
    Ok(1.0
        + above as f64
        + match ties {
            TiePolicy::Pessimistic => tied as f64,
            TiePolicy::Optimistic => 0.0,
            TiePolicy::Mean => tied as f64 / 2.0,
        })
}

/// Filtered rank of `object` for the query `(subject, relation, ?, timestamp)`.
pub fn rank_query(
    params: &ModelParams,
    subject: u32,
    relation: u32,
    timestamp: u32,
    object: u32,
    filter: &[u32],
    ties: TiePolicy,
) -> Result<f64> {
    let scores = params.score_all_objects(subject, relation, timestamp)?;
    rank_from_scores(&scores, object, filter, ties)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DirectionMetrics {
    pub queries: usize,
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
}

impl DirectionMetrics {
    pub fn from_ranks(ranks: &[f64]) -> Self {
        let n = ranks.len();
        if n == 0 {
            return Self::default();
        }
        let frac = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64;
        Self {
            queries: n,
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n as f64,
            hits_at_1: frac(1.0),
            hits_at_3: frac(3.0),
            hits_at_10: frac(10.0),
        }
    }
}

/// Aggregate metrics over the pooled right and left queries.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub overall: DirectionMetrics,
    pub right: DirectionMetrics,
    pub left: DirectionMetrics,
}

impl Metrics {
    pub fn mrr(&self) -> f64 {
        self.overall.mrr
    }
}

/// Ranks of the right and left query of every fact, in input order.
pub fn query_ranks(
    params: &ModelParams,
    queries: &[Quadruple],
    filter: &FilterIndex,
    ties: TiePolicy,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nr = params.num_relations();
    if !nr.is_multiple_of(2) {
        return Err(Error::Contract(
            "evaluation needs a reciprocal relation space (even relation count)".into(),
        ));
    }
    let base = (nr / 2) as u32;
    let rank_one = |q: &Quadruple| -> Result<f64> {
        let set = filter
            .get(q.subject, q.relation, q.timestamp)
            .ok_or_else(|| {
                Error::Contract(format!(
                    "no filter entry for ({}, {}, ?, {})",
                    q.subject, q.relation, q.timestamp
                ))
            })?;
        rank_query(params, q.subject, q.relation, q.timestamp, q.object, set, ties)
    };
    let pairs: Vec<(f64, f64)> = queries
        .par_iter()
        .map(|q| {
            if q.relation >= base {
                return Err(Error::Contract(format!(
                    "query relation {} is not a base relation",
                    q.relation
                )));
            }
            Ok((rank_one(q)?, rank_one(&q.reciprocal(base))?))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

pub fn evaluate(
    params: &ModelParams,
    queries: &[Quadruple],
    filter: &FilterIndex,
    ties: TiePolicy,
) -> Result<Metrics> {
    let (right, left) = query_ranks(params, queries, filter, ties)?;
    let pooled: Vec<f64> = right.iter().chain(&left).copied().collect();
    Ok(Metrics {
        overall: DirectionMetrics::from_ranks(&pooled),
        right: DirectionMetrics::from_ranks(&right),
        left: DirectionMetrics::from_ranks(&left),
    })
}

/// Evaluation report written by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub split: String,
    pub tie_policy: TiePolicy,
    /// Candidate filtering rule applied to every query.
    pub filter: String,
    pub precision: String,
    pub checkpoint_hash: String,
    pub dataset_hash: String,
    pub metrics: Metrics,
}

pub const FILTER_RULE: &str = "same-timestamp";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entity_ranks_first() {
        assert_eq!(rank_from_scores(&[0.3], 0, &[0], TiePolicy::Pessimistic).unwrap(), 1.0);
    }

    #[test]
    fn brute_force_rank_examples() {
        // true entity 0 scores 2.0; competitors 3.0, 1.0, 0.5
        let scores = [2.0, 3.0, 1.0, 0.5];
        assert_eq!(rank_from_scores(&scores, 0, &[0], TiePolicy::Pessimistic).unwrap(), 2.0);
        assert_eq!(rank_from_scores(&scores, 0, &[0, 1], TiePolicy::Pessimistic).unwrap(), 1.0);
    }

    #[test]
    fn tie_policies() {
        let scores = [1.0; 5];
        assert_eq!(rank_from_scores(&scores, 2, &[2], TiePolicy::Pessimistic).unwrap(), 5.0);
        assert_eq!(rank_from_scores(&scores, 2, &[2], TiePolicy::Optimistic).unwrap(), 1.0);
        assert_eq!(rank_from_scores(&scores, 2, &[2], TiePolicy::Mean).unwrap(), 3.0);
        assert_eq!(rank_from_scores(&scores, 2, &[0, 2, 4], TiePolicy::Pessimistic).unwrap(), 3.0);
    }

    #[test]
    fn target_outside_filter_is_a_contract_violation() {
        assert!(matches!(
            rank_from_scores(&[1.0, 2.0], 0, &[1], TiePolicy::Pessimistic),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn hits_ordering() {
        let m = DirectionMetrics::from_ranks(&[1.0, 2.0, 4.0, 11.0]);
        assert_eq!(m.hits_at_1, 0.25);
        assert_eq!(m.hits_at_3, 0.5);
        assert_eq!(m.hits_at_10, 0.75);
        assert!((m.mrr - (1.0 + 0.5 + 0.25 + 1.0 / 11.0) / 4.0).abs() < 1e-15);
    }
}
