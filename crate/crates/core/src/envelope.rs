//! Column envelopes of `P^i` as a convergence certificate.
//!
//! For a positive matrix, the minimum `m^(i)` of column `k` of `P^i` never
//! decreases, the maximum `M^(i)` never increases, and the gap
//! `Δ^(i) = M^(i) − m^(i)` contracts geometrically. The common limit is `π_k`,
//! so the envelope brackets the stationary probability at every step.

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{worst_row_tv, Distribution, StochasticMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::stationary::{stationary_linear, Evidence, Method, StationaryResult};
use crate::structure::ErgodicityReport;

/// Default stopping gap for `stationary_by_envelope`.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Round-off allowance when asserting monotone envelopes.
const MONOTONE_SLACK: f64 = 1e-14;

/// Slack allowed by `verify_contraction` before an inequality counts as failed.
pub const CONTRACTION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeRecord {
    pub i: usize,
    pub min: f64,
    pub max: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeTrace {
    pub column: usize,
    pub records: Vec<EnvelopeRecord>,
    /// Smallest entry of the iterated matrix.
    pub p_min: f64,
    /// `1 − p_min`, the single-inequality contraction factor.
    pub contraction_factor: f64,
    pub tol: f64,
}

impl EnvelopeTrace {
    pub fn last(&self) -> &EnvelopeRecord {
        self.records.last().expect("traces have at least one record")
    }

    pub fn converged(&self) -> bool {
        self.last().delta <= self.tol
    }

    /// `i, m, M, delta` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,m,M,delta\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.17e},{:.17e},{:.17e}\n", r.i, r.min, r.max, r.delta));
        }
        out
    }
}

fn record(i: usize, col: &[f64]) -> EnvelopeRecord {
    let min = col.iter().copied().fold(f64::INFINITY, f64::min);
    let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    EnvelopeRecord { i, min, max, delta: max - min }
}

/// Tracks `m^(i)`, `M^(i)`, `Δ^(i)` of column `column` of `P^i` for
/// `i = 1, 2, ...` until `Δ ≤ tol` or `max_iter` records.
pub fn envelope_iterate(
    p: &StochasticMatrix,
    column: usize,
    max_iter: usize,
    tol: f64,
) -> Result<EnvelopeTrace> {
    p.space().check_index(column)?;
    if !p.is_positive() {
        return Err(Error::NotPositive);
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let p_min = p.min_entry();
    // column k of P^(i+1) = P · (column k of P^i)
    let mut col = p.matrix().column(column);
    let mut records = vec![record(1, &col)];
    for i in 2..=max_iter {
        let prev = *records.last().unwrap();
        if prev.delta <= tol {
            break;
        }
        col = p.matrix().right_mul(&col);
        let cur = record(i, &col);
        if cur.min < prev.min - MONOTONE_SLACK || cur.max > prev.max + MONOTONE_SLACK {
            return Err(Error::MonotonicityViolation { column, iteration: i });
        }
        records.push(cur);
    }
    Ok(EnvelopeTrace { column, records, p_min, contraction_factor: 1.0 - p_min, tol })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    /// False when the inequality does not apply to this trace.
    pub applicable: bool,
    pub checked: usize,
    pub violations: usize,
    /// Smallest `rhs − lhs` seen (negative means violated).
    pub worst_slack: f64,
}

impl InequalityCheck {
    fn new(name: &'static str, applicable: bool) -> Self {
        Self { name, applicable, checked: 0, violations: 0, worst_slack: f64::INFINITY }
    }

    fn observe(&mut self, slack: f64) {
        self.checked += 1;
        self.worst_slack = self.worst_slack.min(slack);
        if slack < -CONTRACTION_SLACK {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub column: usize,
    pub checks: Vec<InequalityCheck>,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(InequalityCheck::passed)
    }

    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks, for consecutive records:
/// * `min_entry`: `m^(i+1) ≥ m^(i) + p_min Δ^(i)`
/// * `max_entry`: `M^(i+1) ≤ M^(i) − p_min Δ^(i)`
/// * `exp_rate`: `Δ^(i+1) ≤ (1 − 2 p_min) Δ^(i)`, skipped when `2 p_min ≥ 1`
/// * `single_inequality`: `Δ^(i+1) ≤ (1 − p_min) Δ^(i)`
///
/// and, for every record, the closed forms `exp_rate_closed`:
/// `Δ^(i) ≤ (1 − 2 p_min)^(i−1)` and `single_inequality_closed`:
/// `Δ^(i) ≤ (1 − p_min)^(i−1)`.
pub fn verify_contraction(trace: &EnvelopeTrace) -> ContractionReport {
    let p = trace.p_min;
    let two_p_ok = 2.0 * p < 1.0;
    let mut min_entry = InequalityCheck::new("min_entry", true);
    let mut max_entry = InequalityCheck::new("max_entry", true);
    let mut exp_rate = InequalityCheck::new("exp_rate", two_p_ok);
    let mut single = InequalityCheck::new("single_inequality", true);
    let mut exp_closed = InequalityCheck::new("exp_rate_closed", two_p_ok);
    let mut single_closed = InequalityCheck::new("single_inequality_closed", true);

    for w in trace.records.windows(2) {
        let (a, b) = (w[0], w[1]);
        min_entry.observe(b.min - (a.min + p * a.delta));
        max_entry.observe((a.max - p * a.delta) - b.max);
        if two_p_ok {
            exp_rate.observe((1.0 - 2.0 * p) * a.delta - b.delta);
        }
        single.observe((1.0 - p) * a.delta - b.delta);
    }
    for r in &trace.records {
        let k = (r.i - 1) as i32;
        if two_p_ok {
            exp_closed.observe((1.0 - 2.0 * p).powi(k) - r.delta);
        }
        single_closed.observe((1.0 - p).powi(k) - r.delta);
    }
    ContractionReport {
        column: trace.column,
        checks: vec![min_entry, max_entry, exp_rate, single, exp_closed, single_closed],
    }
}

fn require_ergodic(p: &StochasticMatrix) -> Result<u64> {
    let report = ErgodicityReport::analyze(p);
    if !report.irreducible {
        return Err(Error::NotErgodic("chain is reducible".into()));
    }
    if !report.aperiodic {
        return Err(Error::NotErgodic("chain is periodic".into()));
    }
    Ok(report.primitivity_exponent.expect("ergodic chains are primitive"))
}

/// Iterations after which the single-inequality bound guarantees `Δ ≤ tol`.
fn bound_iterations(p_min: f64, tol: f64) -> usize {
    if p_min >= 1.0 || tol >= 1.0 {
        return 1;
    }
    let k = 1.0 + tol.ln() / (1.0 - p_min).ln();
    k.ceil().max(1.0) as usize
}

/// `π_k` as the midpoint of the collapsed envelope of column `k` of `(P^m)^i`.
/// `max_iter` defaults to ten times the iteration count the contraction bound
/// guarantees.
pub fn stationary_by_envelope(
    p: &StochasticMatrix,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<StationaryResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let m = require_ergodic(p)?;
    let lifted = p.power(m);
    let max_iter =
        max_iter.unwrap_or_else(|| bound_iterations(lifted.min_entry(), tol).saturating_mul(10));
    let traces = (0..p.n())
        .into_par_iter()
        .map(|k| envelope_iterate(&lifted, k, max_iter, tol))
        .collect::<Result<Vec<_>>>()?;
    if let Some(t) = traces.iter().find(|t| !t.converged()) {
        return Err(Error::MaxIterExceeded { iterations: t.records.len(), last_delta: t.last().delta });
    }
    let mid: Vec<f64> = traces.iter().map(|t| 0.5 * (t.last().min + t.last().max)).collect();
    let half_widths = traces.iter().map(|t| 0.5 * t.last().delta).collect();
    let iterations = traces.iter().map(|t| t.records.len()).collect();
    let pi = Distribution::from_weights(p.space().clone(), &mid)?;
    Ok(StationaryResult::new(p, pi, Method::Envelope, Evidence::Envelope { step: m, iterations, half_widths }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingEstimate {
    pub epsilon: f64,
    /// `min { t : d(t) ≤ ε }`.
    pub empirical_tmix: u64,
    /// `m · ⌈ln(n/ε) / (2 p_min(P^m)) + 1⌉`.
    pub bound_tmix: u64,
    pub primitivity_m: u64,
    pub pmin_of_pm: f64,
}

impl MixingEstimate {
    pub fn ratio(&self) -> f64 {
        self.bound_tmix as f64 / self.empirical_tmix.max(1) as f64
    }
}

/// Mixing-time bound from the envelope contraction of the `m`-step chain.
pub fn mixing_bound(n: usize, epsilon: f64, m: u64, pmin_of_pm: f64) -> u64 {
    let steps = ((n as f64 / epsilon).ln() / (2.0 * pmin_of_pm) + 1.0).ceil();
    m.saturating_mul(steps.max(1.0) as u64)
}

pub fn mixing_estimate(p: &StochasticMatrix, epsilon: f64) -> Result<MixingEstimate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let m = require_ergodic(p)?;
    let pmin_of_pm = p.power(m).min_entry();
    let bound_tmix = mixing_bound(p.n(), epsilon, m, pmin_of_pm);
    let pi = stationary_linear(p)?.pi;
    let mut pt = Matrix::identity(p.n());
    let mut t = 0u64;
    while worst_row_tv(&pt, pi.probs()) > epsilon {
        if t >= bound_tmix {
            return Err(Error::MaxIterExceeded {
                iterations: t as usize,
                last_delta: worst_row_tv(&pt, pi.probs()),
            });
        }
        pt = pt.matmul(p.matrix());
        t += 1;
    }
    Ok(MixingEstimate { epsilon, empirical_tmix: t, bound_tmix, primitivity_m: m, pmin_of_pm })
}

/// One point of the convergence curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: u64,
    /// `d(t)`.
    pub distance: f64,
    /// `n · Δ^(t)` with `Δ^(t)` the widest column envelope of `P^t`.
    pub n_delta: f64,
}

/// `d(t)` next to `n Δ^(t)` for `t = 0..=horizon`.
pub fn convergence_curve(p: &StochasticMatrix, pi: &Distribution, horizon: u64) -> Result<Vec<CurvePoint>> {
    p.ensure_stationary(pi)?;
    let n = p.n();
    let mut pt = Matrix::identity(n);
    let mut out = Vec::with_capacity(horizon as usize + 1);
    for t in 0..=horizon {
        if t > 0 {
            pt = pt.matmul(p.matrix());
        }
        out.push(CurvePoint {
            t,
            distance: worst_row_tv(&pt, pi.probs()),
            n_delta: n as f64 * max_column_gap(&pt),
        });
    }
    Ok(out)
}

/// `max_k (max_i A(i,k) − min_i A(i,k))`.
pub fn max_column_gap(a: &Matrix) -> f64 {
    (0..a.cols())
        .map(|k| {
            let (lo, hi) = (0..a.rows())
                .map(|i| a[(i, k)])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        })
        .fold(0.0, f64::max)
}
