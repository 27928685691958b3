//! Independent coupling of two copies of a chain: the product chain on
//! `Ω×Ω`, simulated meeting times, the sticking splice and a numerical check
//! of `‖μ₀Pⁱ − ν₀Pⁱ‖_TV ≤ Pr(τ > i)`.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{Distribution, StateSpace, StochasticMatrix};
use crate::envelope::max_column_gap;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sim::{run_trials, CdfSampler, RowSampler};
use crate::structure::{build_graph, is_irreducible, period_of, ErgodicityReport, TransitionGraph};

/// Tolerance of the marginal-sum identities of the product matrix.
pub const MARGINAL_TOLERANCE: f64 = 1e-12;

/// Largest base chain for the exact absorbing-tail computation.
pub const EXACT_TAIL_CAP: usize = 6;

/// Standard errors allowed between the exact TV curve and the empirical tail.
pub const SE_MULTIPLIER: f64 = 3.0;

/// Target truncation probability used to size `max_steps`.
const TRUNCATION_TARGET: f64 = 1e-6;
const MAX_STEPS_CAP: u64 = 1 << 40;

fn pair_label(a: &str, b: &str) -> String {
    format!("({a},{b})")
}

fn pair_space(base: &StateSpace) -> Result<StateSpace> {
    let labels = base.labels();
    StateSpace::new(labels.iter().flat_map(|a| labels.iter().map(move |b| pair_label(a, b))))
}

/// The chain `(X, Y)` with `X` and `Y` moving independently by `P`.
#[derive(Debug, Clone)]
pub struct ProductChain {
    base: StochasticMatrix,
    matrix: StochasticMatrix,
}

impl ProductChain {
    pub fn base(&self) -> &StochasticMatrix {
        &self.base
    }

    pub fn matrix(&self) -> &StochasticMatrix {
        &self.matrix
    }

    /// Flat index of the pair `(i, k)`.
    pub fn index(&self, i: usize, k: usize) -> usize {
        i * self.base.n() + k
    }

    pub fn pair(&self, index: usize) -> (usize, usize) {
        (index / self.base.n(), index % self.base.n())
    }

    /// Worst deviation from `Σ_l Q((i,k),(j,l)) = P(i,j)` and
    /// `Σ_j Q((i,k),(j,l)) = P(k,l)`.
    pub fn marginal_defect(&self) -> f64 {
        let n = self.base.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for k in 0..n {
                let row = self.matrix.row(self.index(i, k));
                for j in 0..n {
                    let x: f64 = (0..n).map(|l| row[j * n + l]).sum();
                    let y: f64 = (0..n).map(|l| row[l * n + j]).sum();
                    worst = worst
                        .max((x - self.base.get(i, j)).abs())
                        .max((y - self.base.get(k, j)).abs());
                }
            }
        }
        worst
    }
}

/// `Q((i,k),(j,l)) = P(i,j) P(k,l)` on pairs labelled `(a,b)`.
pub fn build_product_chain(p: &StochasticMatrix) -> Result<ProductChain> {
    let n = p.n();
    let space = pair_space(p.space())?;
    let entries =
        Matrix::from_fn(n * n, n * n, |r, c| p.get(r / n, c / n) * p.get(r % n, c % n));
    let chain = ProductChain { base: p.clone(), matrix: StochasticMatrix::from_parts(space, entries) };
    let defect = chain.marginal_defect();
    assert!(defect <= MARGINAL_TOLERANCE, "product marginals off by {defect}");
    Ok(chain)
}

fn product_graph(p: &StochasticMatrix) -> Result<TransitionGraph> {
    let g = build_graph(p);
    let n = p.n();
    let adjacency = (0..n * n)
        .map(|r| {
            let (i, k) = (r / n, r % n);
            let mut succ: Vec<usize> = g
                .successors(i)
                .iter()
                .flat_map(|&j| g.successors(k).iter().map(move |&l| j * n + l))
                .collect();
            succ.sort_unstable();
            succ
        })
        .collect();
    Ok(TransitionGraph::from_adjacency(pair_space(p.space())?, adjacency))
}

/// Whether the product chain is irreducible and aperiodic, decided on the
/// product graph itself.
pub fn product_ergodicity(p: &StochasticMatrix) -> bool {
    let Ok(g) = product_graph(p) else { return false };
    is_irreducible(&g).irreducible && period_of(&g, 0).map_or(false, |d| d == 1)
}

fn require_ergodic(p: &StochasticMatrix) -> Result<()> {
    let report = ErgodicityReport::analyze(p);
    match (report.irreducible, report.aperiodic) {
        (false, _) => Err(Error::NotErgodic("chain is reducible".into())),
        (_, false) => Err(Error::NotErgodic("chain is periodic".into())),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeetMode {
    /// First `i` with `X_i = Y_i`.
    #[default]
    Anywhere,
    /// First `i` with `X_i = Y_i = t`.
    AtState(usize),
}

impl MeetMode {
    pub fn met(self, x: usize, y: usize) -> bool {
        match self {
            MeetMode::Anywhere => x == y,
            MeetMode::AtState(t) => x == t && y == t,
        }
    }

    fn to_json(self, space: &StateSpace) -> serde_json::Value {
        match self {
            MeetMode::Anywhere => serde_json::json!("meet_anywhere"),
            MeetMode::AtState(t) => serde_json::json!({ "meet_at_state": space.label(t) }),
        }
    }
}

/// Meeting times of independent pair runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTrace {
    /// Meeting times of the runs that met within `max_steps`.
    pub tau_samples: Vec<u64>,
    pub mode: MeetMode,
    pub start: (usize, usize),
    pub trials: u64,
    pub seed: u64,
    pub max_steps: u64,
    /// Runs that had not met after `max_steps` steps.
    pub truncated: u64,
    space: StateSpace,
}

impl CouplingTrace {
    /// Runs with `τ > n`. Truncated runs count as survivors for `n < max_steps`.
    pub fn survivors(&self, n: u64) -> u64 {
        let met_late = self.tau_samples.iter().filter(|&&t| t > n).count() as u64;
        met_late + if n < self.max_steps { self.truncated } else { 0 }
    }

    /// Empirical `Pr(τ > n)` over all trials.
    pub fn tail(&self, n: u64) -> f64 {
        self.survivors(n) as f64 / self.trials as f64
    }

    /// `(n, survivors, fraction)` until no run survives.
    pub fn tail_table(&self) -> Vec<(u64, u64, f64)> {
        let last = self.tau_samples.iter().copied().max().unwrap_or(0);
        let last = if self.truncated > 0 { self.max_steps } else { last };
        (0..=last).map(|n| (n, self.survivors(n), self.tail(n))).collect()
    }

    pub fn mean_tau(&self) -> f64 {
        self.tau_samples.iter().sum::<u64>() as f64 / self.tau_samples.len() as f64
    }

    pub fn tau_std_error(&self) -> f64 {
        let k = self.tau_samples.len() as f64;
        let mean = self.mean_tau();
        let var = self.tau_samples.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": self.mode.to_json(&self.space),
            "start": [self.space.label(self.start.0), self.space.label(self.start.1)],
            "trials": self.trials,
            "seed": self.seed,
            "max_steps": self.max_steps,
            "truncated": self.truncated,
            "mean_tau": self.mean_tau(),
            "tail": self.tail_table(),
        })
    }
}

/// Step budget after which a run still apart is rare: in every `m` steps
/// (primitivity exponent) both copies sit at any fixed state with probability
/// at least `p_min(P^m)²`.
pub fn default_max_steps(p: &StochasticMatrix) -> Result<u64> {
    require_ergodic(p)?;
    let m = ErgodicityReport::analyze(p).primitivity_exponent.expect("ergodic");
    let q = p.power(m).min_entry().powi(2);
    if q >= 1.0 {
        return Ok(m);
    }
    let blocks = (TRUNCATION_TARGET.ln() / (-q).ln_1p()).ceil();
    let steps = blocks * m as f64;
    Ok(if steps.is_finite() && steps < MAX_STEPS_CAP as f64 { (steps as u64).max(1) } else { MAX_STEPS_CAP })
}

fn check_mode(p: &StochasticMatrix, mode: MeetMode) -> Result<()> {
    if let MeetMode::AtState(t) = mode {
        p.space().check_index(t)?;
    }
    Ok(())
}

fn meeting_time(
    sampler: &RowSampler,
    (mut x, mut y): (usize, usize),
    mode: MeetMode,
    max_steps: u64,
    rng: &mut ChaCha8Rng,
) -> Option<u64> {
    let mut t = 0;
    loop {
        if mode.met(x, y) {
            return Some(t);
        }
        if t == max_steps {
            return None;
        }
        x = sampler.step(x, rng);
        y = sampler.step(y, rng);
        t += 1;
    }
}

/// Runs `trials` independent pair chains from `start` and records when each
/// first satisfies the meeting condition.
pub fn simulate_coupling(
    p: &StochasticMatrix,
    start: (usize, usize),
    mode: MeetMode,
    trials: u64,
    max_steps: Option<u64>,
    seed: u64,
) -> Result<CouplingTrace> {
    require_ergodic(p)?;
    p.space().check_index(start.0)?;
    p.space().check_index(start.1)?;
    check_mode(p, mode)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let max_steps = match max_steps {
        Some(s) => s,
        None => default_max_steps(p)?,
    };
    let sampler = RowSampler::new(p);
    let runs = run_trials(trials, seed, |rng| meeting_time(&sampler, start, mode, max_steps, rng));
    let tau_samples: Vec<u64> = runs.iter().flatten().copied().collect();
    let truncated = trials - tau_samples.len() as u64;
    if tau_samples.is_empty() {
        return Err(Error::Truncated(truncated as usize));
    }
    Ok(CouplingTrace {
        tau_samples,
        mode,
        start,
        trials,
        seed,
        max_steps,
        truncated,
        space: p.space().clone(),
    })
}

/// First index at which the paths satisfy the meeting condition.
pub fn meeting_index(x_path: &[usize], y_path: &[usize], mode: MeetMode) -> Option<usize> {
    x_path.iter().zip(y_path).position(|(&x, &y)| mode.met(x, y))
}

/// `Z_i = Y_i` for `i ≤ τ` and `Z_i = X_i` afterwards.
pub fn stick(x_path: &[usize], y_path: &[usize], mode: MeetMode) -> Result<Vec<usize>> {
    if x_path.len() != y_path.len() {
        return Err(Error::PathLength { x: x_path.len(), y: y_path.len() });
    }
    let tau = meeting_index(x_path, y_path, mode).ok_or(Error::NeverMet)?;
    Ok(y_path[..=tau].iter().chain(&x_path[tau + 1..]).copied().collect())
}

/// One independent pair run of fixed length with its spliced path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRun {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    /// Meeting index within the window, if any.
    pub tau: Option<usize>,
    /// Sticking splice; equals `y` when the copies never meet in the window.
    pub z: Vec<usize>,
}

/// `trials` pair runs of `len` steps from `start`.
pub fn sample_pair_paths(
    p: &StochasticMatrix,
    start: (usize, usize),
    len: usize,
    mode: MeetMode,
    trials: u64,
    seed: u64,
) -> Result<Vec<PairRun>> {
    p.space().check_index(start.0)?;
    p.space().check_index(start.1)?;
    check_mode(p, mode)?;
    let sampler = RowSampler::new(p);
    Ok(run_trials(trials, seed, |rng| {
        let mut x = Vec::with_capacity(len + 1);
        let mut y = Vec::with_capacity(len + 1);
        x.push(start.0);
        y.push(start.1);
        for _ in 0..len {
            x.push(sampler.step(*x.last().unwrap(), rng));
            y.push(sampler.step(*y.last().unwrap(), rng));
        }
        let tau = meeting_index(&x, &y, mode);
        let z = match tau {
            Some(_) => stick(&x, &y, mode).expect("paths meet"),
            None => y.clone(),
        };
        PairRun { x, y, tau, z }
    }))
}

/// Binomial standard error of a tail fraction, using the Agresti–Coull
/// adjusted proportion so that an empirical tail of zero still carries width.
pub fn tail_std_error(survivors: u64, trials: u64) -> f64 {
    let n = trials as f64 + 4.0;
    let p = (survivors as f64 + 2.0) / n;
    (p * (1.0 - p) / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaRow {
    pub step: u64,
    /// `‖π − Pⁱ(y,·)‖_TV`.
    pub exact_tv: f64,
    /// Empirical `Pr(τ > i)`.
    pub tail: f64,
    pub tail_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingComparison {
    pub start_y: usize,
    pub trials: u64,
    pub seed: u64,
    pub rows: Vec<LemmaRow>,
}

impl CouplingComparison {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// `step,exact_tv,tail,tail_se` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,exact_tv,tail,tail_se\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.17e},{:.17e},{:.17e}\n", r.step, r.exact_tv, r.tail, r.tail_se));
        }
        out
    }
}

/// Compares the exact `‖πPⁱ − e_y Pⁱ‖_TV` against the empirical meeting tail
/// of an independent coupling with `X₀ ~ π` and `Y₀ = start_y`.
pub fn verify_coupling_lemma(
    p: &StochasticMatrix,
    pi: &Distribution,
    start_y: usize,
    horizon: u64,
    trials: u64,
    seed: u64,
) -> Result<CouplingComparison> {
    require_ergodic(p)?;
    p.ensure_stationary(pi)?;
    p.space().check_index(start_y)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let sampler = RowSampler::new(p);
    let initial = CdfSampler::new(pi.probs());
    let taus = run_trials(trials, seed, |rng| {
        let x0 = initial.sample(rng);
        meeting_time(&sampler, (x0, start_y), MeetMode::Anywhere, horizon, rng)
    });
    // survivors[i] = #{τ > i}; a run still apart at the horizon survives every step.
    let mut met_at = vec![0u64; horizon as usize + 1];
    let mut never = 0u64;
    for t in taus {
        match t {
            Some(t) => met_at[t as usize] += 1,
            None => never += 1,
        }
    }
    let mut survivors = trials;
    let mut dist: Vec<f64> = (0..p.n()).map(|j| f64::from(u8::from(j == start_y))).collect();
    let mut rows = Vec::with_capacity(horizon as usize + 1);
    for step in 0..=horizon {
        if step > 0 {
            dist = p.matrix().left_mul(&dist);
        }
        survivors -= met_at[step as usize];
        let exact_tv = 0.5 * dist.iter().zip(pi.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let tail = survivors as f64 / trials as f64;
        let tail_se = tail_std_error(survivors, trials);
        rows.push(LemmaRow { step, exact_tv, tail, tail_se, pass: exact_tv <= tail + SE_MULTIPLIER * tail_se });
    }
    debug_assert_eq!(survivors, never);
    Ok(CouplingComparison { start_y, trials, seed, rows })
}

/// `max_k (max_i p^(n)_ik − min_j p^(n)_jk)` for `n = 0..=horizon`, computed
/// by direct powering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingConvergence {
    pub discrepancies: Vec<f64>,
    pub non_increasing: bool,
}

pub fn convergence_by_coupling(p: &StochasticMatrix, horizon: u64) -> Result<CouplingConvergence> {
    require_ergodic(p)?;
    let mut pt = Matrix::identity(p.n());
    let mut discrepancies = Vec::with_capacity(horizon as usize + 1);
    for n in 0..=horizon {
        if n > 0 {
            pt = pt.matmul(p.matrix());
        }
        discrepancies.push(max_column_gap(&pt));
    }
    let non_increasing = discrepancies.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    Ok(CouplingConvergence { discrepancies, non_increasing })
}

/// For every start pair `(i, j)`, checks `max_k |p^(n)_ik − p^(n)_jk|` against
/// the simulated `Pr_ij(τ > n)` plus three standard errors, `n ≤ horizon`.
/// Returns the number of `(pair, n)` checks that failed.
pub fn pairwise_coupling_bound(p: &StochasticMatrix, horizon: u64, trials: u64, seed: u64) -> Result<usize> {
    require_ergodic(p)?;
    let n = p.n();
    let mut failures = 0;
    let mut powers = vec![Matrix::identity(n)];
    for _ in 0..horizon {
        powers.push(powers.last().unwrap().matmul(p.matrix()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let trace =
                simulate_coupling(p, (i, j), MeetMode::Anywhere, trials, Some(horizon), seed ^ (i * n + j) as u64)
                    .or_else(|e| match e {
                        Error::Truncated(_) => Ok(CouplingTrace {
                            tau_samples: Vec::new(),
                            mode: MeetMode::Anywhere,
                            start: (i, j),
                            trials,
                            seed,
                            max_steps: horizon,
                            truncated: trials,
                            space: p.space().clone(),
                        }),
                        e => Err(e),
                    })?;
            for (step, pt) in powers.iter().enumerate() {
                let gap = (0..n).map(|k| (pt[(i, k)] - pt[(j, k)]).abs()).fold(0.0, f64::max);
                let survivors = trace.survivors(step as u64);
                let tail = survivors as f64 / trials as f64;
                if gap > tail + SE_MULTIPLIER * tail_std_error(survivors, trials) {
                    failures += 1;
                }
            }
        }
    }
    Ok(failures)
}

/// Exact `Pr(τ > i)` for `i = 0..=horizon` with `X₀ ~ x0` and `Y₀ = y0`,
/// by propagating pair mass with the meeting set made absorbing.
pub fn exact_tail(
    p: &StochasticMatrix,
    x0: &Distribution,
    y0: usize,
    mode: MeetMode,
    horizon: u64,
) -> Result<Vec<f64>> {
    let n = p.n();
    if n > EXACT_TAIL_CAP {
        return Err(Error::TooLarge { n, cap: EXACT_TAIL_CAP });
    }
    if x0.space() != p.space() {
        return Err(Error::SpaceMismatch);
    }
    p.space().check_index(y0)?;
    check_mode(p, mode)?;
    let mut mass = vec![0.0; n * n];
    for (x, &w) in x0.probs().iter().enumerate() {
        mass[x * n + y0] = w;
    }
    let apart = |v: &mut Vec<f64>| -> f64 {
        let mut total = 0.0;
        for r in 0..n * n {
            if mode.met(r / n, r % n) {
                v[r] = 0.0;
            } else {
                total += v[r];
            }
        }
        total
    };
    let mut out = vec![apart(&mut mass)];
    for _ in 0..horizon {
        let mut next = vec![0.0; n * n];
        for (r, &w) in mass.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (i, k) = (r / n, r % n);
            for j in 0..n {
                let a = w * p.get(i, j);
                if a == 0.0 {
                    continue;
                }
                for l in 0..n {
                    next[j * n + l] += a * p.get(k, l);
                }
            }
        }
        mass = next;
        out.push(apart(&mut mass));
    }
    Ok(out)
}
