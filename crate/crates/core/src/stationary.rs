//! Direct routes to the stationary distribution.
//!
//! * linear solve of `π(P − I) = 0, Σπ = 1`, with a rank check on `P − I`;
//! * upward spanning trees: `γ(x)` is the total weight of arborescences
//!   directed toward `x`, either enumerated or read off a principal minor of
//!   `I − P` (matrix-tree theorem), and `π ∝ γ`;
//! * return times: expected visits before returning to an anchor state,
//!   computed exactly from the taboo system `v = b (I − Q)⁻¹`.

use indexmap::IndexMap;
use serde::Serialize;

use crate::chain::{Distribution, StochasticMatrix};
use crate::error::{Error, Result};
use crate::linalg::{rank, Lu, Matrix, PIVOT_TOLERANCE};
use crate::sim::{run_trials, RowSampler};
use crate::structure::{build_graph, is_irreducible, TransitionGraph};

/// Default largest chain for exhaustive arborescence enumeration.
pub const ENUMERATION_CAP: usize = 8;

/// Relative tolerance of the tree balance check.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

/// Tolerance of `π_x · E_x τ_x⁺ = 1`.
pub const RETURN_TIME_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LinearSolve,
    TreeEnumeration,
    TreeDeterminant,
    ReturnTime,
    Envelope,
    PowerIteration,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::LinearSolve,
        Method::TreeEnumeration,
        Method::TreeDeterminant,
        Method::ReturnTime,
        Method::Envelope,
        Method::PowerIteration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LinearSolve => "linear_solve",
            Method::TreeEnumeration => "tree_enumeration",
            Method::TreeDeterminant => "tree_determinant",
            Method::ReturnTime => "return_time",
            Method::Envelope => "envelope",
            Method::PowerIteration => "power_iteration",
        }
    }
}

/// Method-specific supporting data.
#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    LinearSolve { rank: usize },
    Trees { gamma: Vec<f64>, arborescence_counts: Option<Vec<usize>> },
    ReturnTime { anchor: ReturnTimeTable, expected_returns: Vec<f64> },
    Envelope { step: u64, iterations: Vec<usize>, half_widths: Vec<f64> },
    PowerIteration { iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult {
    pub pi: Distribution,
    pub method: Method,
    /// `‖πP − π‖_∞`.
    pub residual: f64,
    pub evidence: Evidence,
}

impl StationaryResult {
    pub(crate) fn new(p: &StochasticMatrix, pi: Distribution, method: Method, evidence: Evidence) -> Self {
        let residual = p.stationarity_residual(&pi).expect("pi built on the chain's space");
        Self { pi, method, residual, evidence }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let labels = self.pi.space().labels();
        let by_state = |v: &[f64]| -> IndexMap<String, f64> {
            labels.iter().cloned().zip(v.iter().copied()).collect()
        };
        let evidence = match &self.evidence {
            Evidence::LinearSolve { rank } => serde_json::json!({ "rank_p_minus_i": rank }),
            Evidence::Trees { gamma, arborescence_counts } => {
                let mut v = serde_json::json!({ "gamma": by_state(gamma) });
                if let Some(counts) = arborescence_counts {
                    let counts: IndexMap<String, usize> =
                        labels.iter().cloned().zip(counts.iter().copied()).collect();
                    v["arborescence_counts"] = serde_json::json!(counts);
                }
                v
            }
            Evidence::ReturnTime { anchor, expected_returns } => serde_json::json!({
                "anchor": labels[anchor.anchor],
                "visits_before_return": by_state(&anchor.visits),
                "expected_return_time": by_state(expected_returns),
            }),
            Evidence::Envelope { step, iterations, half_widths } => serde_json::json!({
                "step": step,
                "iterations": iterations,
                "half_widths": by_state(half_widths),
            }),
            Evidence::PowerIteration { iterations } => serde_json::json!({ "iterations": iterations }),
        };
        serde_json::json!({
            "method": self.method.name(),
            "pi": self.pi,
            "residual": self.residual,
            "evidence": evidence,
        })
    }
}

fn require_irreducible(p: &StochasticMatrix) -> Result<TransitionGraph> {
    let g = build_graph(p);
    if is_irreducible(&g).irreducible {
        Ok(g)
    } else {
        Err(Error::NotIrreducible)
    }
}

/// Solves `π(P − I) = 0`, `Σπ = 1` after checking `rank(P − I) = n − 1`.
pub fn stationary_linear(p: &StochasticMatrix) -> Result<StationaryResult> {
    require_irreducible(p)?;
    let n = p.n();
    let a = p.matrix().sub(&Matrix::identity(n));
    let r = rank(&a, PIVOT_TOLERANCE);
    if r != n - 1 {
        return Err(Error::RankDeficient { rank: r, expected: n - 1 });
    }
    // (P − I)ᵀ πᵀ = 0 with its last equation replaced by Σπ = 1.
    let mut system = a.transpose();
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let x = Lu::factor(&system)?.solve(&rhs);
    let pi = clean_distribution(p, &x)?;
    Ok(StationaryResult::new(p, pi, Method::LinearSolve, Evidence::LinearSolve { rank: r }))
}

// Clamps round-off negatives and renormalizes.
fn clean_distribution(p: &StochasticMatrix, x: &[f64]) -> Result<Distribution> {
    let clamped: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    Distribution::from_weights(p.space().clone(), &clamped)
}

/// Spanning tree directed toward `root`: each other state keeps one out-edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Arborescence {
    pub root: usize,
    /// `parent[y]` is the head of `y`'s unique out-edge; `None` at the root.
    pub parent: Vec<Option<usize>>,
    /// Product of the edge probabilities.
    pub weight: f64,
}

impl Arborescence {
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent.iter().enumerate().filter_map(|(y, f)| f.map(|f| (y, f)))
    }
}

/// Visits every arborescence toward `root` in the transition graph.
fn for_each_arborescence(
    p: &StochasticMatrix,
    g: &TransitionGraph,
    root: usize,
    mut visit: impl FnMut(&[Option<usize>], f64),
) {
    let n = p.n();
    let order: Vec<usize> = (0..n).filter(|&v| v != root).collect();
    let mut parent: Vec<Option<usize>> = vec![None; n];

    fn closes_cycle(parent: &[Option<usize>], start: usize) -> bool {
        let mut v = parent[start];
        while let Some(u) = v {
            if u == start {
                return true;
            }
            v = parent[u];
        }
        false
    }

    fn go(
        depth: usize,
        weight: f64,
        order: &[usize],
        parent: &mut Vec<Option<usize>>,
        p: &StochasticMatrix,
        g: &TransitionGraph,
        visit: &mut dyn FnMut(&[Option<usize>], f64),
    ) {
        let Some(&y) = order.get(depth) else {
            visit(parent, weight);
            return;
        };
        for &f in g.successors(y) {
            if f == y {
                continue;
            }
            parent[y] = Some(f);
            if !closes_cycle(parent, y) {
                go(depth + 1, weight * p.get(y, f), order, parent, p, g, visit);
            }
        }
        parent[y] = None;
    }

    go(0, 1.0, &order, &mut parent, p, g, &mut visit);
}

/// All arborescences directed toward `root`, for chains up to the default cap.
pub fn enumerate_arborescences(p: &StochasticMatrix, root: usize) -> Result<Vec<Arborescence>> {
    enumerate_arborescences_capped(p, root, ENUMERATION_CAP)
}

pub fn enumerate_arborescences_capped(
    p: &StochasticMatrix,
    root: usize,
    cap: usize,
) -> Result<Vec<Arborescence>> {
    p.space().check_index(root)?;
    if p.n() > cap {
        return Err(Error::TooLarge { n: p.n(), cap });
    }
    let g = require_irreducible(p)?;
    let mut out = Vec::new();
    for_each_arborescence(p, &g, root, |parent, weight| {
        out.push(Arborescence { root, parent: parent.to_vec(), weight });
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeMode {
    Enumeration,
    Determinant,
}

/// Raw `γ(x)` for every root, with arborescence counts in enumeration mode.
pub fn tree_weights(
    p: &StochasticMatrix,
    mode: TreeMode,
    cap: usize,
) -> Result<(Vec<f64>, Option<Vec<usize>>)> {
    let n = p.n();
    if mode == TreeMode::Enumeration && n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    let g = require_irreducible(p)?;
    match mode {
        TreeMode::Enumeration => {
            let mut gamma = vec![0.0; n];
            let mut counts = vec![0usize; n];
            for root in 0..n {
                for_each_arborescence(p, &g, root, |_, w| {
                    gamma[root] += w;
                    counts[root] += 1;
                });
            }
            Ok((gamma, Some(counts)))
        }
        TreeMode::Determinant => {
            if n == 1 {
                return Ok((vec![1.0], None));
            }
            // Out-degree Laplacian of the weighted graph; its principal minors
            // count arborescences directed toward the deleted vertex.
            let laplacian = Matrix::identity(n).sub(p.matrix());
            let gamma = (0..n)
                .map(|x| Lu::factor(&laplacian.principal_minor(x)).map(|lu| lu.determinant()))
                .collect::<Result<Vec<_>>>()?;
            Ok((gamma, None))
        }
    }
}

/// Worst relative violation of `Σ_{x≠y} γ(x) p_xy = γ(y) Σ_{x≠y} p_yx`, as
/// `(state, relative error)`.
pub fn balance_defect(p: &StochasticMatrix, gamma: &[f64]) -> (usize, f64) {
    let n = p.n();
    (0..n)
        .map(|y| {
            let inflow: f64 = (0..n).filter(|&x| x != y).map(|x| gamma[x] * p.get(x, y)).sum();
            let outflow: f64 = gamma[y] * (0..n).filter(|&x| x != y).map(|x| p.get(y, x)).sum::<f64>();
            let scale = inflow.abs().max(outflow.abs());
            let rel = if scale == 0.0 { 0.0 } else { (inflow - outflow).abs() / scale };
            (y, rel)
        })
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// `π(x) = γ(x) / Σ_y γ(y)`.
pub fn stationary_by_trees(p: &StochasticMatrix, mode: TreeMode) -> Result<StationaryResult> {
    stationary_by_trees_capped(p, mode, ENUMERATION_CAP)
}

pub fn stationary_by_trees_capped(
    p: &StochasticMatrix,
    mode: TreeMode,
    cap: usize,
) -> Result<StationaryResult> {
    let (gamma, counts) = tree_weights(p, mode, cap)?;
    let (state, relative) = balance_defect(p, &gamma);
    if relative > BALANCE_TOLERANCE {
        return Err(Error::BalanceViolation { state, relative });
    }
    let pi = clean_distribution(p, &gamma)?;
    let method = match mode {
        TreeMode::Enumeration => Method::TreeEnumeration,
        TreeMode::Determinant => Method::TreeDeterminant,
    };
    Ok(StationaryResult::new(p, pi, method, Evidence::Trees { gamma, arborescence_counts: counts }))
}

/// Expected visits to each state before the first return to `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnTimeTable {
    pub anchor: usize,
    /// `visits[y]`; `visits[anchor] = 1`.
    pub visits: Vec<f64>,
    /// `E_anchor(τ⁺) = Σ_y visits[y]`.
    pub expected_return: f64,
}

impl ReturnTimeTable {
    pub fn normalized(&self) -> Vec<f64> {
        self.visits.iter().map(|v| v / self.expected_return).collect()
    }
}

fn taboo_table(p: &StochasticMatrix, z: usize) -> Result<ReturnTimeTable> {
    let n = p.n();
    let others: Vec<usize> = (0..n).filter(|&y| y != z).collect();
    let mut visits = vec![0.0; n];
    visits[z] = 1.0;
    if !others.is_empty() {
        // v (I − Q) = b  <=>  (I − Q)ᵀ vᵀ = bᵀ
        let m = others.len();
        let system =
            Matrix::from_fn(m, m, |i, j| f64::from(u8::from(i == j)) - p.get(others[j], others[i]));
        let b: Vec<f64> = others.iter().map(|&y| p.get(z, y)).collect();
        let v = Lu::factor(&system)?.solve(&b);
        for (&y, vy) in others.iter().zip(v) {
            visits[y] = vy;
        }
    }
    let expected_return = visits.iter().sum();
    Ok(ReturnTimeTable { anchor: z, visits, expected_return })
}

pub fn return_time_table(p: &StochasticMatrix, z: usize) -> Result<ReturnTimeTable> {
    p.space().check_index(z)?;
    require_irreducible(p)?;
    taboo_table(p, z)
}

/// Normalizes the anchor-0 table and checks `π_x · E_x τ_x⁺ = 1` at every state.
pub fn stationary_by_return_time(p: &StochasticMatrix) -> Result<StationaryResult> {
    require_irreducible(p)?;
    let anchor = taboo_table(p, 0)?;
    let pi = clean_distribution(p, &anchor.visits)?;
    let expected_returns = (0..p.n())
        .map(|x| taboo_table(p, x).map(|t| t.expected_return))
        .collect::<Result<Vec<_>>>()?;
    for (x, e) in expected_returns.iter().enumerate() {
        let product = pi.get(x) * e;
        if (product - 1.0).abs() > RETURN_TIME_TOLERANCE {
            return Err(Error::ReturnTimeMismatch { state: x, product });
        }
    }
    Ok(StationaryResult::new(p, pi, Method::ReturnTime, Evidence::ReturnTime { anchor, expected_returns }))
}

/// Sample mean of first-return times to `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

pub fn monte_carlo_return(p: &StochasticMatrix, z: usize, trials: u64, seed: u64) -> Result<ReturnEstimate> {
    p.space().check_index(z)?;
    require_irreducible(p)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let sampler = RowSampler::new(p);
    let samples = run_trials(trials, seed, |rng| {
        let mut x = sampler.step(z, rng);
        let mut t = 1u64;
        while x != z {
            x = sampler.step(x, rng);
            t += 1;
        }
        t as f64
    });
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(ReturnEstimate { mean, std_error: (var / n).sqrt(), trials })
}
