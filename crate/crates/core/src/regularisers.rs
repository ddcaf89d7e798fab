//! Embedding regulariser (nuclear 3-norm) and temporal smoothing penalties.
//!
//! Timestamp tables are passed as contiguous split-layout rows
//! (`rows × 2·rank` reals). Residuals between adjacent rows are measured per
//! component by complex modulus.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrent::RecurrentKind;

/// Weight of each factor in the nuclear 3-norm.
pub const N3_FACTOR_WEIGHT: f64 = 1.0 / 3.0;

/// Nuclear 3-norm of one example: `(1/3) Σ_factors Σ_z |x_z|³` over split-layout
/// complex vectors of equal rank.
pub fn emb_reg_n3(head: &[f64], relation: &[f64], tail: &[f64]) -> Result<f64> {
    for f in [relation, tail] {
        if f.len() != head.len() {
            return Err(Error::Dimension {
                expected: head.len() / 2,
                actual: f.len() / 2,
            });
        }
    }
    Ok(N3_FACTOR_WEIGHT * (cubed_moduli(head) + cubed_moduli(relation) + cubed_moduli(tail)))
}

fn cubed_moduli(x: &[f64]) -> f64 {
    let d = x.len() / 2;
    (0..d).map(|z| x[z].hypot(x[d + z]).powi(3)).sum()
}

/// `out += weight · ∂/∂x [(1/3) Σ_z |x_z|³]`, which is `weight · |x_z| · x_z`.
pub(crate) fn n3_grad_acc(x: &[f64], weight: f64, out: &mut [f64]) {
    let d = x.len() / 2;
    for z in 0..d {
        let m = x[z].hypot(x[d + z]);
        out[z] += weight * m * x[z];
        out[d + z] += weight * m * x[d + z];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegFamily {
    None,
    Lp,
    Np,
    Linear3,
    Recurrent(RecurrentKind),
}

/// Temporal regulariser selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalRegSpec {
    pub family: RegFamily,
    pub p: u32,
    /// Hidden size for the recurrent family.
    pub hidden: usize,
    /// Lp only: sum per-pair p-norms instead of taking one global root.
    pub lp_per_pair: bool,
}

impl Default for TemporalRegSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl TemporalRegSpec {
    pub fn none() -> Self {
        Self {
            family: RegFamily::None,
            p: 1,
            hidden: 0,
            lp_per_pair: false,
        }
    }

    pub fn np(p: u32) -> Self {
        Self {
            family: RegFamily::Np,
            p,
            ..Self::none()
        }
    }

    pub fn lp(p: u32) -> Self {
        Self {
            family: RegFamily::Lp,
            p,
            ..Self::none()
        }
    }

    pub fn linear3(p: u32) -> Self {
        Self {
            family: RegFamily::Linear3,
            p,
            ..Self::none()
        }
    }

    pub fn recurrent(kind: RecurrentKind, hidden: usize) -> Self {
        Self {
            family: RegFamily::Recurrent(kind),
            p: 1,
            hidden,
            lp_per_pair: false,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.family, RegFamily::Recurrent(_))
    }

    /// Checks the exponent range and, for recurrent generation, `hidden < rank`.
    pub fn validate(&self, rank: usize) -> Result<()> {
        match self.family {
            RegFamily::None => Ok(()),
            RegFamily::Lp | RegFamily::Np | RegFamily::Linear3 => {
                if (1..=5).contains(&self.p) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("exponent p must be in 1..=5, got {}", self.p)))
                }
            }
            RegFamily::Recurrent(_) => {
                if self.hidden == 0 || self.hidden >= rank {
                    Err(Error::Config(format!(
                        "recurrent hidden size must satisfy 0 < m < d (m = {}, d = {rank})",
                        self.hidden
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl fmt::Display for TemporalRegSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            RegFamily::None => f.write_str("none"),
            RegFamily::Np => write!(f, "N{}", self.p),
            RegFamily::Lp if self.lp_per_pair => write!(f, "L{}:pair", self.p),
            RegFamily::Lp => write!(f, "L{}", self.p),
            RegFamily::Linear3 if self.p == 3 => f.write_str("Linear3"),
            RegFamily::Linear3 => write!(f, "Linear3:{}", self.p),
            RegFamily::Recurrent(k) => write!(f, "{k}"),
        }
    }
}

/// Parses `none`, `N<p>`, `L<p>`, `L<p>:pair`, `Linear3`, `Linear3:<p>`, or a
/// recurrent variant name (`RNN`, `LSTM`, `GRU`, `LinearRNN`, ...). The hidden
/// size of recurrent variants is configured separately.
impl FromStr for TemporalRegSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown temporal regulariser {s:?}"));
        let t = s.trim();
        if t.eq_ignore_ascii_case("none") {
            return Ok(Self::none());
        }
        if let Ok(kind) = t.parse::<RecurrentKind>() {
            return Ok(Self::recurrent(kind, 0));
        }
        if let Some(rest) = t.strip_prefix("Linear3").or_else(|| t.strip_prefix("linear3")) {
            return match rest.strip_prefix(':') {
                None if rest.is_empty() => Ok(Self::linear3(3)),
                Some(p) => Ok(Self::linear3(p.parse().map_err(|_| bad())?)),
                None => Err(bad()),
            };
        }
        let (head, tail) = t.split_at(1.min(t.len()));
        let (num, per_pair) = match tail.split_once(':') {
            Some((n, "pair")) => (n, true),
            Some(_) => return Err(bad()),
            None => (tail, false),
        };
        let p: u32 = num.parse().map_err(|_| bad())?;
        match head {
            "N" | "n" if !per_pair => Ok(Self::np(p)),
            "L" | "l" => Ok(Self {
                lp_per_pair: per_pair,
                ..Self::lp(p)
            }),
            _ => Err(bad()),
        }
    }
}

/// Value of a temporal penalty. `too_few_timestamps` is set when fewer than
/// two rows were available, in which case the value is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub too_few_timestamps: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Smoothing {
    Power,
    GlobalRoot,
    PairRoot,
}

/// Row gradients, optional bias gradients and the penalty weight.
pub(crate) type SmoothingGrads<'a> = (&'a mut [f64], Option<&'a mut [f64]>, f64);

/// Evaluates a smoothing penalty over `rows` and, when `grads` is given,
/// accumulates `weight ·` its gradient into the row (and bias) buffers.
pub(crate) fn smoothing(
    mode: Smoothing,
    p: u32,
    rows: &[f64],
    rank: usize,
    bias: Option<&[f64]>,
    mut grads: Option<SmoothingGrads<'_>>,
) -> Penalty {
    let w = 2 * rank;
    let n = rows.len().checked_div(w).unwrap_or(0);
    if n < 2 {
        return Penalty {
            value: 0.0,
            too_few_timestamps: true,
        };
    }
    let norm = 1.0 / (n - 1) as f64;
    let residual = |l: usize, z: usize| -> (f64, f64) {
        let (a, b) = (&rows[l * w..(l + 1) * w], &rows[(l + 1) * w..(l + 2) * w]);
        let (mut dr, mut di) = (b[z] - a[z], b[rank + z] - a[rank + z]);
        if let Some(bias) = bias {
            dr -= bias[z];
            di -= bias[rank + z];
        }
        (dr, di)
    };
    let pow_p = |m: f64| m.powi(p as i32);
    // ∂ m^p / ∂(dr, di) = p m^{p-2} (dr, di); the subgradient at m = 0 is 0 for p = 1
    let dpow_coeff = |m: f64| -> f64 {
        if p >= 2 {
            p as f64 * m.powi(p as i32 - 2)
        } else if m > 0.0 {
            1.0 / m
        } else {
            0.0
        }
    };

    let pair_sums: Vec<f64> = (0..n - 1)
        .map(|l| (0..rank).map(|z| {
            let (dr, di) = residual(l, z);
            pow_p(dr.hypot(di))
        }).sum())
        .collect();
    let total: f64 = pair_sums.iter().sum();
    let inv_p = 1.0 / p as f64;
    let value = norm
        * match mode {
            Smoothing::Power => total,
            Smoothing::GlobalRoot => total.powf(inv_p),
            Smoothing::PairRoot => pair_sums.iter().map(|s| s.powf(inv_p)).sum(),
        };

    if let Some((grad_rows, grad_bias, weight)) = grads.as_mut() {
        // outer derivative of the root (if any) per pair
        let outer = |l: usize| -> f64 {
            let s = match mode {
                Smoothing::Power => return 1.0,
                Smoothing::GlobalRoot => total,
                Smoothing::PairRoot => pair_sums[l],
            };
            if s > 0.0 {
                inv_p * s.powf(inv_p - 1.0)
            } else {
                0.0
            }
        };
        for l in 0..n - 1 {
            let o = *weight * norm * outer(l);
            if o == 0.0 {
                continue;
            }
            for z in 0..rank {
                let (dr, di) = residual(l, z);
                let c = o * dpow_coeff(dr.hypot(di));
                let (gr, gi) = (c * dr, c * di);
                grad_rows[(l + 1) * w + z] += gr;
                grad_rows[(l + 1) * w + rank + z] += gi;
                grad_rows[l * w + z] -= gr;
                grad_rows[l * w + rank + z] -= gi;
                if let Some(gb) = grad_bias.as_deref_mut() {
                    gb[z] -= gr;
                    gb[rank + z] -= gi;
                }
            }
        }
    }
    Penalty {
        value,
        too_few_timestamps: false,
    }
}

/// `(1/(n−1)) Σ_l Σ_z |t_{l+1,z} − t_{l,z}|^p`.
pub fn temporal_np(rows: &[f64], rank: usize, p: u32) -> Penalty {
    smoothing(Smoothing::Power, p, rows, rank, None, None)
}

/// `(1/(n−1)) (Σ_l Σ_z |t_{l+1,z} − t_{l,z}|^p)^{1/p}`.
pub fn temporal_lp(rows: &[f64], rank: usize, p: u32) -> Penalty {
    smoothing(Smoothing::GlobalRoot, p, rows, rank, None, None)
}

/// Lp with one root per adjacent pair: `(1/(n−1)) Σ_l ‖t_{l+1} − t_l‖_p`.
pub fn temporal_lp_per_pair(rows: &[f64], rank: usize, p: u32) -> Penalty {
    smoothing(Smoothing::PairRoot, p, rows, rank, None, None)
}

/// `(1/(n−1)) Σ_l Σ_z |t_{l+1,z} − t_{l,z} − b_z|^p` with a learned drift `b`.
pub fn linear3(rows: &[f64], rank: usize, bias: &[f64], p: u32) -> Result<Penalty> {
    if bias.len() != 2 * rank {
        return Err(Error::Dimension {
            expected: rank,
            actual: bias.len() / 2,
        });
    }
    Ok(smoothing(Smoothing::Power, p, rows, rank, Some(bias), None))
}

/// Mean Euclidean distance between adjacent rows.
pub fn mean_adjacent_distance(rows: &[f64], rank: usize) -> f64 {
    let w = 2 * rank;
    let n = rows.len().checked_div(w).unwrap_or(0);
    if n < 2 {
        return 0.0;
    }
    let total: f64 = (0..n - 1)
        .map(|l| {
            (0..w)
                .map(|x| (rows[(l + 1) * w + x] - rows[l * w + x]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    total / (n - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormFamily {
    L,
    N,
}

/// A plotted norm: family and exponent, written `N5`, `L1`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormCurve {
    pub family: NormFamily,
    pub p: u32,
}

impl NormCurve {
    /// Penalty of a scalar difference `x`. At scalar scale the Lp root cancels
    /// the power, leaving `|x|`.
    pub fn penalty(&self, x: f64) -> f64 {
        match self.family {
            NormFamily::N => x.abs().powi(self.p as i32),
            NormFamily::L => x.abs(),
        }
    }

    /// Columns drawn by default: L1 and N2..N5.
    pub fn defaults() -> Vec<NormCurve> {
        let mut v = vec![NormCurve {
            family: NormFamily::L,
            p: 1,
        }];
        v.extend((2..=5).map(|p| NormCurve {
            family: NormFamily::N,
            p,
        }));
        v
    }
}

impl fmt::Display for NormCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.family {
            NormFamily::L => 'L',
            NormFamily::N => 'N',
        };
        write!(f, "{fam}{}", self.p)
    }
}

impl FromStr for NormCurve {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown norm {s:?}; expected L<p> or N<p>"));
        let s = s.trim();
        let (head, num) = s.split_at(1.min(s.len()));
        let p: u32 = num.parse().map_err(|_| bad())?;
        if p == 0 {
            return Err(bad());
        }
        let family = match head {
            "L" | "l" => NormFamily::L,
            "N" | "n" => NormFamily::N,
            _ => return Err(bad()),
        };
        Ok(NormCurve { family, p })
    }
}

/// Evenly spaced samples over `[lo, hi]` (inclusive) with `samples` points.
pub fn sample_grid(lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    match samples {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `(x, penalty(x))` pairs over `[lo, hi]`.
pub fn norm_curve(curve: NormCurve, lo: f64, hi: f64, samples: usize) -> Vec<(f64, f64)> {
    sample_grid(lo, hi, samples)
        .into_iter()
        .map(|x| (x, curve.penalty(x)))
        .collect()
}

/// CSV with header `x,<curve>,...` and six-decimal values.
pub fn norm_curves_csv(curves: &[NormCurve], lo: f64, hi: f64, samples: usize) -> String {
    let mut out = String::from("x");
    for c in curves {
        write!(out, ",{c}").unwrap();
    }
    out.push('\n');
    for x in sample_grid(lo, hi, samples) {
        write!(out, "{}", fmt6(x)).unwrap();
        for c in curves {
            write!(out, ",{}", fmt6(c.penalty(x))).unwrap();
        }
        out.push('\n');
    }
    out
}

fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[[f64; 2]]) -> Vec<f64> {
        // each row is one complex component (re, im) at rank 1
        rows.iter().flat_map(|r| [r[0], r[1]]).collect()
    }

    #[test]
    fn n3_closed_forms() {
        let ones = [1.0, 1.0, 0.0, 0.0];
        assert_eq!(emb_reg_n3(&ones, &ones, &ones).unwrap(), 2.0);
        let zero = [0.0; 4];
        assert_eq!(emb_reg_n3(&zero, &zero, &zero).unwrap(), 0.0);
        assert!(emb_reg_n3(&ones, &[1.0, 0.0], &ones).is_err());
        // modulus of 3+4i is 5
        let v = emb_reg_n3(&[3.0, 4.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((v - 125.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn np_hand_value() {
        // rows (0,0), (0.5,0.5), (1,1) as real 2-vectors
        let rows = [0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let v = temporal_np(&rows, 2, 4).value;
        assert!((v - 0.125).abs() < 1e-15);
        let l = temporal_lp(&rows, 2, 2).value;
        assert!((l - 0.5).abs() < 1e-15);
        let v = temporal_np(&table(&[[0.0, 0.0], [0.4, 0.0]]), 1, 5).value;
        assert!((v - 0.01024).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_give_zero_and_short_tables_are_flagged() {
        let rows = table(&[[0.3, -0.2], [0.3, -0.2], [0.3, -0.2]]);
        for p in 1..=5 {
            assert_eq!(temporal_np(&rows, 1, p).value, 0.0);
            assert_eq!(temporal_lp(&rows, 1, p).value, 0.0);
        }
        let one = temporal_np(&table(&[[1.0, 1.0]]), 1, 2);
        assert_eq!(one.value, 0.0);
        assert!(one.too_few_timestamps);
        assert!(!temporal_np(&rows, 1, 2).too_few_timestamps);
    }

    #[test]
    fn p1_lp_equals_np() {
        let rows = table(&[[0.1, 0.7], [-0.4, 0.2], [0.9, 0.0]]);
        let (a, b) = (temporal_np(&rows, 1, 1).value, temporal_lp(&rows, 1, 1).value);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn linear3_degenerate_cases() {
        let rows = table(&[[0.1, 0.7], [-0.4, 0.2], [0.9, 0.0]]);
        let zero_bias = [0.0, 0.0];
        assert_eq!(
            linear3(&rows, 1, &zero_bias, 3).unwrap().value,
            temporal_np(&rows, 1, 3).value
        );
        let drift = [0.25, -0.5];
        let progression = table(&[[1.0, 1.0], [1.25, 0.5], [1.5, 0.0], [1.75, -0.5]]);
        assert_eq!(linear3(&progression, 1, &drift, 3).unwrap().value, 0.0);
        assert!(linear3(&rows, 1, &[0.0; 4], 3).is_err());
    }

    #[test]
    fn spec_tokens_round_trip() {
        for t in ["none", "N4", "L2", "L3:pair", "Linear3", "Linear3:5", "RNN", "LinearGRU"] {
            let s: TemporalRegSpec = t.parse().unwrap();
            assert_eq!(s.to_string(), t);
        }
        assert!("N".parse::<TemporalRegSpec>().is_err());
        assert!("N4:pair".parse::<TemporalRegSpec>().is_err());
        assert!("Q2".parse::<TemporalRegSpec>().is_err());
        assert!(TemporalRegSpec::np(0).validate(4).is_err());
        assert!(TemporalRegSpec::np(6).validate(4).is_err());
        assert!(TemporalRegSpec::recurrent(RecurrentKind::Gru, 4).validate(4).is_err());
        assert!(TemporalRegSpec::recurrent(RecurrentKind::Gru, 3).validate(4).is_ok());
    }

    #[test]
    fn norm_csv() {
        let curves = vec!["N5".parse().unwrap(), "N2".parse().unwrap()];
        let csv = norm_curves_csv(&curves, -2.0, 2.0, 5);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,N5,N2");
        let xs: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(xs, ["-2.000000", "-1.000000", "0.000000", "1.000000", "2.000000"]);
        assert_eq!(lines[5], "2.000000,32.000000,4.000000");
        let fine = norm_curves_csv(&curves, -2.0, 2.0, 401);
        assert!(fine.lines().any(|l| l == "0.400000,0.010240,0.160000"));
    }

    #[test]
    fn norm_curve_values() {
        for c in NormCurve::defaults() {
            assert_eq!(c.penalty(0.0), 0.0);
        }
        let n5: NormCurve = "N5".parse().unwrap();
        assert!((n5.penalty(0.4) - 0.01024).abs() < 1e-15);
        let n2: NormCurve = "N2".parse().unwrap();
        assert_eq!(n2.penalty(2.0), 4.0);
        let pts = norm_curve(n2, -2.0, 2.0, 5);
        assert_eq!(pts[0], (-2.0, 4.0));
    }
}
