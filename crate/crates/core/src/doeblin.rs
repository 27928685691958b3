//! Doeblin minorization `P = (1−θ)Π + θQ`, the resulting `d(n) ≤ θⁿ`
//! certificate, and numerical stand-ins for the spectral picture: power
//! iteration for the dominant pair, a deflated estimate of the subdominant
//! modulus and the rank-one limit of `Pⁿ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{worst_row_tv, Distribution, StochasticMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::random::random_positive;
use crate::stationary::{stationary_linear, Evidence, Method, StationaryResult};
use crate::structure::ErgodicityReport;

/// Entrywise tolerance of the `n`-step error identity.
pub const RECURSION_TOLERANCE: f64 = 1e-10;

/// Slack allowed in `d(n) ≤ θⁿ`.
pub const BOUND_SLACK: f64 = 1e-12;

/// Residual entries of `Q` above `−Q_NEGATIVE_SLACK` are clamped to zero.
const Q_NEGATIVE_SLACK: f64 = 1e-14;

/// Below this `θ` the residual `Q` is numerically meaningless and taken as `Π`.
const THETA_FLOOR: f64 = 1e-12;

pub const SPECTRAL_TOLERANCE: f64 = 1e-8;
pub const SPECTRAL_MAX_ITER: usize = 100_000;

/// Convergence target of power iteration for the dominant vector.
pub const POWER_TOL: f64 = 1e-12;

/// `ρ(D)` below this is reported as zero: the iterate has fallen into
/// round-off.
const NOISE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct DoeblinSplit {
    /// `min P(x,y)/π(y)`, capped at 1.
    pub delta: f64,
    pub theta: f64,
    pub pi: Distribution,
    pub pi_matrix: StochasticMatrix,
    pub q_matrix: StochasticMatrix,
    /// The matrix that was split: `P`, or `P^step` for a lifted split.
    pub base: StochasticMatrix,
    pub step: u64,
}

impl DoeblinSplit {
    /// `max |P − (1−θ)Π − θQ|`.
    pub fn reconstruction_error(&self) -> f64 {
        let rebuilt = self.pi_matrix.matrix().scale(1.0 - self.theta);
        let q = self.q_matrix.matrix().scale(self.theta);
        let n = self.base.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.base.get(i, j) - rebuilt[(i, j)] - q[(i, j)]).abs());
            }
        }
        worst
    }

    /// `min (P(x,y) − δ π(y))`; nonnegative for a valid minorization.
    pub fn minorization_slack(&self) -> f64 {
        let n = self.base.n();
        let mut worst = f64::INFINITY;
        for x in 0..n {
            for y in 0..n {
                worst = worst.min(self.base.get(x, y) - self.delta * self.pi.get(y));
            }
        }
        worst
    }
}

/// Splits a positive `P` against its stationary `π`.
pub fn doeblin_split(p: &StochasticMatrix, pi: &Distribution) -> Result<DoeblinSplit> {
    if !p.is_positive() {
        return Err(Error::NotPositive);
    }
    p.ensure_stationary(pi)?;
    split_positive(p.clone(), pi, 1)
}

/// Splits `P^m` with `m` the primitivity exponent; bounds are then in units of
/// `m` steps.
pub fn doeblin_split_lifted(p: &StochasticMatrix, pi: &Distribution) -> Result<DoeblinSplit> {
    let report = ErgodicityReport::analyze(p);
    let m = report
        .primitivity_exponent
        .ok_or_else(|| Error::NotErgodic(if report.irreducible { "chain is periodic" } else { "chain is reducible" }.into()))?;
    p.ensure_stationary(pi)?;
    split_positive(p.power(m), pi, m)
}

fn split_positive(base: StochasticMatrix, pi: &Distribution, step: u64) -> Result<DoeblinSplit> {
    let n = base.n();
    let mut delta = f64::INFINITY;
    for x in 0..n {
        for y in 0..n {
            delta = delta.min(base.get(x, y) / pi.get(y));
        }
    }
    let delta = delta.min(1.0);
    let theta = 1.0 - delta;
    let pi_matrix = StochasticMatrix::rank_one(pi);
    let q_matrix = if theta < THETA_FLOOR {
        pi_matrix.clone()
    } else {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|x| {
                (0..n)
                    .map(|y| {
                        let q = (base.get(x, y) - delta * pi.get(y)) / theta;
                        if q < 0.0 && q >= -Q_NEGATIVE_SLACK {
                            0.0
                        } else {
                            q
                        }
                    })
                    .collect()
            })
            .collect();
        StochasticMatrix::new(base.space().clone(), &rows)?
    };
    Ok(DoeblinSplit { delta, theta, pi: pi.clone(), pi_matrix, q_matrix, base, step })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecursionRow {
    pub n: u64,
    /// `max |(Pⁿ − Π) − θⁿ(Qⁿ − ΠQⁿ⁻¹)|`.
    pub max_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiFactCheck {
    pub matrix: &'static str,
    /// `max |MΠ − Π|`.
    pub left_error: f64,
    /// `max |ΠM − Π|`; only for matrices that fix `π`.
    pub right_error: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecursionReport {
    pub rows: Vec<RecursionRow>,
    pub pi_fact: Vec<PiFactCheck>,
}

impl RecursionReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.pi_fact.iter().all(|c| c.pass)
    }
}

fn pi_fact(name: &'static str, m: &Matrix, pi: &Matrix, fixes_pi: bool) -> PiFactCheck {
    let left_error = m.matmul(pi).sub(pi).max_abs();
    let right_error = fixes_pi.then(|| pi.matmul(m).sub(pi).max_abs());
    let pass = left_error <= RECURSION_TOLERANCE && right_error.map_or(true, |e| e <= RECURSION_TOLERANCE);
    PiFactCheck { matrix: name, left_error, right_error, pass }
}

/// Checks `Pⁿ − Π = θⁿ(Qⁿ − ΠQⁿ⁻¹)` for `n = 1..=max_n`, with both sides built
/// from their own powers, and `MΠ = Π`, `ΠM = Π` for `M ∈ {P, Q}` plus
/// `MΠ = Π` for a random stochastic `M`.
pub fn verify_error_recursion(split: &DoeblinSplit, max_n: u64) -> Result<RecursionReport> {
    if max_n == 0 {
        return Err(Error::InvalidParameter("max_n must be at least 1".into()));
    }
    let n = split.base.n();
    let p = split.base.matrix();
    let q = split.q_matrix.matrix();
    let pi = split.pi_matrix.matrix();
    let mut p_pow = Matrix::identity(n);
    let mut q_prev = Matrix::identity(n);
    let mut rows = Vec::with_capacity(max_n as usize);
    for k in 1..=max_n {
        p_pow = p_pow.matmul(p);
        let q_pow = q_prev.matmul(q);
        let lhs = p_pow.sub(pi);
        let rhs = q_pow.sub(&pi.matmul(&q_prev)).scale(split.theta.powi(k as i32));
        let max_error = lhs.sub(&rhs).max_abs();
        rows.push(RecursionRow { n: k, max_error, pass: max_error <= RECURSION_TOLERANCE });
        q_prev = q_pow;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let random = random_positive(n, &mut rng)?;
    let pi_fact = vec![
        pi_fact("P", p, pi, true),
        pi_fact("Q", q, pi, true),
        pi_fact("random", random.matrix(), pi, false),
    ];
    Ok(RecursionReport { rows, pi_fact })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundPoint {
    /// Steps of the split matrix (`n · step` steps of the original chain).
    pub n: u64,
    pub distance: f64,
    pub theta_pow: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoeblinCurve {
    pub step: u64,
    pub theta: f64,
    pub points: Vec<BoundPoint>,
}

impl DoeblinCurve {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.pass)
    }

    /// Largest observed `d(n)/θⁿ`, as an indication of how loose the bound is.
    pub fn worst_ratio(&self) -> f64 {
        self.points
            .iter()
            .filter(|p| p.theta_pow > 0.0)
            .map(|p| p.distance / p.theta_pow)
            .fold(0.0, f64::max)
    }

    /// `n,d_exact,theta_pow` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,d_exact,theta_pow\n");
        for p in &self.points {
            out.push_str(&format!("{},{:.17e},{:.17e}\n", p.n, p.distance, p.theta_pow));
        }
        out
    }
}

/// Exact `d(n)` of the split matrix against `θⁿ`, `n = 0..=max_n`.
pub fn tv_bound_doeblin(split: &DoeblinSplit, max_n: u64) -> DoeblinCurve {
    let n = split.base.n();
    let mut pt = Matrix::identity(n);
    let mut points = Vec::with_capacity(max_n as usize + 1);
    for k in 0..=max_n {
        if k > 0 {
            pt = pt.matmul(split.base.matrix());
        }
        let distance = worst_row_tv(&pt, split.pi.probs());
        let theta_pow = split.theta.powi(k as i32);
        points.push(BoundPoint { n: k, distance, theta_pow, pass: distance <= theta_pow + BOUND_SLACK });
    }
    DoeblinCurve { step: split.step, theta: split.theta, points }
}

fn require_ergodic(p: &StochasticMatrix) -> Result<u64> {
    let report = ErgodicityReport::analyze(p);
    match report.primitivity_exponent {
        Some(m) => Ok(m),
        None if !report.irreducible => Err(Error::NotErgodic("chain is reducible".into())),
        None => Err(Error::NotErgodic("chain is periodic".into())),
    }
}

/// Stopping rule for a geometrically converging sequence: the last change
/// times `ρ/(1−ρ)` must fall below `tol`, with `ρ` the largest recent ratio of
/// successive changes.
struct GeometricStop {
    tol: f64,
    changes: Vec<f64>,
}

impl GeometricStop {
    const WINDOW: usize = 8;

    fn new(tol: f64) -> Self {
        Self { tol, changes: Vec::new() }
    }

    fn done(&mut self, change: f64) -> bool {
        // Changes this small are round-off, not progress.
        if change <= 64.0 * f64::EPSILON {
            return true;
        }
        self.changes.push(change);
        if self.changes.len() <= Self::WINDOW || change >= self.tol {
            return false;
        }
        let recent = &self.changes[self.changes.len() - Self::WINDOW - 1..];
        let rho = recent.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max).min(1.0 - 1e-9);
        change * rho / (1.0 - rho) < self.tol
    }
}

/// Power iteration `v ← vP` from the uniform vector.
fn power_iteration(p: &StochasticMatrix, tol: f64) -> Result<(Vec<f64>, usize)> {
    let n = p.n();
    let mut v = vec![1.0 / n as f64; n];
    let mut stop = GeometricStop::new(tol);
    let mut change = f64::NAN;
    for it in 1..=SPECTRAL_MAX_ITER {
        let mut next = p.matrix().left_mul(&v);
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum::<f64>();
        v = next;
        if stop.done(change) {
            return Ok((v, it));
        }
    }
    Err(Error::NoConvergence { estimate: change })
}

pub fn stationary_by_power_iteration(p: &StochasticMatrix, tol: f64) -> Result<StationaryResult> {
    require_ergodic(p)?;
    let (v, iterations) = power_iteration(p, tol)?;
    let pi = Distribution::from_weights(p.space().clone(), &v)?;
    Ok(StationaryResult::new(p, pi, Method::PowerIteration, Evidence::PowerIteration { iterations }))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest Ritz modulus of `D` on `span{u, uD}` (row vectors, `u` unit).
fn ritz_modulus(d: &Matrix, u: &[f64], ud: &[f64]) -> f64 {
    let h11 = dot(u, ud);
    let mut r: Vec<f64> = ud.iter().zip(u).map(|(a, b)| a - h11 * b).collect();
    let rn = norm(&r);
    if rn <= 1e-10 * norm(ud) {
        return h11.abs();
    }
    r.iter_mut().for_each(|x| *x /= rn);
    let rd = d.left_mul(&r);
    // Rayleigh–Ritz matrix H(i,j) = q_i D q_jᵀ, here with row-vector action.
    let (h12, h21, h22) = (dot(&r, ud), dot(u, &rd), dot(&r, &rd));
    let trace = h11 + h22;
    let det = h11 * h22 - h12 * h21;
    let disc = trace * trace / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (trace / 2.0 + s).abs().max((trace / 2.0 - s).abs())
    } else {
        det.abs().sqrt()
    }
}

/// Estimates `ρ(P − Π)` by power iteration on the deflated operator with a
/// two-dimensional Rayleigh–Ritz estimate, which also catches complex pairs.
fn subdominant_modulus(p: &StochasticMatrix, pi: &[f64]) -> Result<(f64, usize)> {
    let n = p.n();
    let d = p.matrix().sub(&Matrix::from_fn(n, n, |_, j| pi[j]));
    let project = |v: &mut Vec<f64>| {
        let s: f64 = v.iter().sum();
        v.iter_mut().zip(pi).for_each(|(x, p)| *x -= s * p);
    };
    let scale = d.max_abs();
    if scale == 0.0 || n == 1 {
        return Ok((0.0, 0));
    }
    // A fixed, generic start vector in the complement of π.
    let mut u: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5).collect();
    project(&mut u);
    let un = norm(&u);
    u.iter_mut().for_each(|x| *x /= un);
    let mut last = f64::NAN;
    let mut stop = GeometricStop::new(SPECTRAL_TOLERANCE * 1e-2);
    for it in 1..=SPECTRAL_MAX_ITER {
        let mut ud = d.left_mul(&u);
        project(&mut ud);
        let growth = norm(&ud);
        if growth <= NOISE_FLOOR * scale {
            return Ok((0.0, it));
        }
        let estimate = ritz_modulus(&d, &u, &ud);
        if it > 1 && stop.done((estimate - last).abs()) {
            return Ok((estimate, it));
        }
        last = estimate;
        u = ud.into_iter().map(|x| x / growth).collect();
    }
    Err(Error::NoConvergence { estimate: last })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCheck {
    /// Rayleigh quotient of the power-iteration vector.
    pub dominant_value: f64,
    pub dominant_vector: Distribution,
    pub subdominant_modulus_estimate: f64,
    /// `max |P^probe_n − Π|`.
    pub rank1_gap: f64,
    pub probe_n: u64,
    pub power_iterations: usize,
    pub deflation_iterations: usize,
}

impl SpectralCheck {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dominant_value": self.dominant_value,
            "dominant_vector": self.dominant_vector,
            "subdominant_modulus_estimate": self.subdominant_modulus_estimate,
            "rank1_gap": self.rank1_gap,
            "probe_n": self.probe_n,
            "power_iterations": self.power_iterations,
            "deflation_iterations": self.deflation_iterations,
        })
    }
}

/// `2 m ⌈ln(1e-10) / ln θ⌉` with `θ` from the split of `P^m`: twice the
/// horizon at which the Doeblin bound reaches `1e-10`.
pub fn default_probe(p: &StochasticMatrix) -> Result<u64> {
    let m = require_ergodic(p)?;
    let pi = stationary_linear(p)?.pi;
    let split = doeblin_split_lifted(p, &pi)?;
    let blocks = if split.theta <= 0.0 { 1.0 } else { (1e-10f64.ln() / split.theta.ln()).ceil().max(1.0) };
    Ok(2 * m * blocks as u64)
}

/// Dominant pair, subdominant modulus and rank-one limit of `P`.
pub fn spectral_check(p: &StochasticMatrix, probe_n: Option<u64>) -> Result<SpectralCheck> {
    require_ergodic(p)?;
    let pi = stationary_linear(p)?.pi;
    let (v, power_iterations) = power_iteration(p, POWER_TOL)?;
    let vp = p.matrix().left_mul(&v);
    let dominant_value = dot(&vp, &v) / dot(&v, &v);
    let dominant_vector = Distribution::from_weights(p.space().clone(), &v)?;
    let (subdominant_modulus_estimate, deflation_iterations) = subdominant_modulus(p, pi.probs())?;
    let probe_n = match probe_n {
        Some(k) => k,
        None => default_probe(p)?,
    };
    let limit = StochasticMatrix::rank_one(&pi);
    let rank1_gap = p.power(probe_n).matrix().sub(limit.matrix()).max_abs();
    Ok(SpectralCheck {
        dominant_value,
        dominant_vector,
        subdominant_modulus_estimate,
        rank1_gap,
        probe_n,
        power_iterations,
        deflation_iterations,
    })
}
