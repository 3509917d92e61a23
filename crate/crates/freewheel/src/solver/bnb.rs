//! Branch-and-bound over the Boolean variables of a convex MIQP.
//!
//! The continuous relaxation treats every Boolean as a `[0, 1]` variable
//! (those bound rows are part of the instance). Nodes fix a subset of the
//! Booleans; fixed variables are eliminated from the subproblem rather than
//! pinched between equal bounds, which keeps the interior-point subsolver
//! well posed. Search is best-bound-first with deterministic tie-breaking,
//! branching picks the most fractional Boolean (lowest index on ties), and
//! children are seeded from the parent's primal point.

use super::qp::{solve_qp, QpError, QpOptions, QpProblem, QpSolution, QpStatus, WarmStart};
use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

/// Branch-and-bound limits and tolerances.
#[derive(Debug, Clone)]
pub struct BnbLimits {
    pub max_nodes: usize,
    /// Absolute term of the fathoming gap [J].
    pub abs_gap: f64,
    /// Relative term of the fathoming gap.
    pub rel_gap: f64,
    /// Integrality tolerance on Boolean variables.
    pub int_tol: f64,
    pub time_limit: Option<Duration>,
    pub qp: QpOptions,
    /// Print one summary line per solve to stderr.
    pub log: bool,
}

impl Default for BnbLimits {
    fn default() -> Self {
        Self {
            max_nodes: 100_000,
            abs_gap: 1e-3,
            rel_gap: 1e-6,
            int_tol: 1e-6,
            time_limit: None,
            qp: QpOptions::default(),
            log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnbStatus {
    Optimal,
    GapLimit,
    NodeLimit,
    TimeLimit,
    Infeasible,
}

/// Outcome of a branch-and-bound solve.
#[derive(Debug, Clone)]
pub struct BnbReport {
    pub status: BnbStatus,
    /// Best integral solution found, in the full variable space.
    pub incumbent: Option<QpSolution>,
    /// Proven lower bound on the optimum.
    pub best_bound: f64,
    /// `incumbent objective - best bound` (0 when proven optimal).
    pub gap: f64,
    pub nodes_explored: usize,
    /// Best bound recorded at every node expansion; nondecreasing.
    pub bound_trace: Vec<f64>,
}

impl BnbReport {
    pub fn objective(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|s| s.objective)
    }
}

struct Node {
    bound: f64,
    fixings: Vec<(usize, f64)>,
    /// Full-space primal point of the parent relaxation (warm start).
    warm: Vec<f64>,
}

struct HeapKey {
    bound: f64,
    id: u64,
}

impl PartialEq for HeapKey {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for HeapKey {}
impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        // BinaryHeap is a max-heap; invert for lowest-bound-first,
        // then lowest id.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct NodeSolve {
    status: QpStatus,
    /// Solution lifted back to the full variable space.
    x: Vec<f64>,
    objective: f64,
    solution: QpSolution,
}

fn solve_node(
    prob: &QpProblem,
    fixings: &[(usize, f64)],
    warm: Option<&[f64]>,
    qp_opts: &QpOptions,
) -> Result<Option<NodeSolve>, QpError> {
    if fixings.is_empty() {
        let warm_start = warm.map(|x| WarmStart { x: x.to_vec() });
        let sol = solve_qp(prob, qp_opts, warm_start.as_ref())?;
        return Ok(Some(NodeSolve {
            status: sol.status,
            x: sol.x.clone(),
            objective: sol.objective,
            solution: sol,
        }));
    }
    let (reduced, keep) = match prob.with_fixed(fixings) {
        Ok(r) => r,
        Err(QpError::TrivialInfeasible { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let warm_start = warm.map(|x| WarmStart {
        x: keep.iter().map(|&i| x[i]).collect(),
    });
    let sol = solve_qp(&reduced, qp_opts, warm_start.as_ref())?;
    if sol.status == QpStatus::Infeasible {
        return Ok(None);
    }
    let mut full = vec![0.0; prob.n];
    for &(i, v) in fixings {
        full[i] = v;
    }
    for (r, &orig) in keep.iter().enumerate() {
        full[orig] = sol.x[r];
    }
    Ok(Some(NodeSolve {
        status: sol.status,
        x: full,
        objective: sol.objective,
        solution: sol,
    }))
}

fn most_fractional(x: &[f64], bool_idx: &[usize], int_tol: f64) -> Option<usize> {
    // Iterating in index order with a strict comparison makes ties land on
    // the lowest index.
    let mut best: Option<(f64, usize)> = None;
    for &i in bool_idx {
        let frac = (x[i] - x[i].round()).abs();
        if frac > int_tol && best.map_or(true, |(bf, _)| frac > bf) {
            best = Some((frac, i));
        }
    }
    best.map(|(_, i)| i)
}

fn incumbent_solution(ns: &NodeSolve) -> QpSolution {
    let mut sol = ns.solution.clone();
    sol.x = ns.x.clone();
    sol
}

/// Solves a convex MIQP whose Boolean variables are listed in `bool_idx`.
///
/// `hint` optionally proposes an initial Boolean assignment (aligned with
/// `bool_idx`); if the assignment is feasible its solution seeds the
/// incumbent before the search starts.
pub fn solve_miqp(
    prob: &QpProblem,
    bool_idx: &[usize],
    limits: &BnbLimits,
    hint: Option<&[bool]>,
) -> Result<BnbReport, QpError> {
    let report = solve_miqp_inner(prob, bool_idx, limits, hint)?;
    if limits.log {
        eprintln!(
            "miqp: status={:?} nodes={} bound={:.6e} incumbent={} gap={:.3e}",
            report.status,
            report.nodes_explored,
            report.best_bound,
            report
                .objective()
                .map_or("none".to_string(), |o| format!("{o:.6e}")),
            report.gap,
        );
    }
    Ok(report)
}

fn solve_miqp_inner(
    prob: &QpProblem,
    bool_idx: &[usize],
    limits: &BnbLimits,
    hint: Option<&[bool]>,
) -> Result<BnbReport, QpError> {
    if bool_idx.is_empty() {
        let sol = solve_qp(prob, &limits.qp, None)?;
        let status = match sol.status {
            QpStatus::Infeasible => BnbStatus::Infeasible,
            _ => BnbStatus::Optimal,
        };
        let bound = sol.objective;
        return Ok(BnbReport {
            status,
            incumbent: (sol.status != QpStatus::Infeasible).then_some(sol),
            best_bound: bound,
            gap: 0.0,
            nodes_explored: 1,
            bound_trace: vec![bound],
        });
    }

    let start = Instant::now();
    let mut nodes_explored = 0usize;
    let mut next_id = 0u64;
    let mut incumbent: Option<QpSolution> = None;
    let mut bound_trace = Vec::new();

    let gap_tol = |inc: Option<&QpSolution>| -> f64 {
        inc.map_or(f64::INFINITY, |s| {
            limits.rel_gap * s.objective.abs() + limits.abs_gap
        })
    };

    // Seed the incumbent from the hint pattern, if any.
    if let Some(pattern) = hint {
        if pattern.len() == bool_idx.len() {
            let fixings: Vec<(usize, f64)> = bool_idx
                .iter()
                .zip(pattern)
                .map(|(&i, &b)| (i, if b { 1.0 } else { 0.0 }))
                .collect();
            nodes_explored += 1;
            if let Some(ns) = solve_node(prob, &fixings, None, &limits.qp)? {
                if ns.status == QpStatus::Optimal {
                    incumbent = Some(incumbent_solution(&ns));
                }
            }
        }
    }

    // Root relaxation.
    nodes_explored += 1;
    let root = solve_node(prob, &[], None, &limits.qp)?;
    let root = match root {
        None => unreachable!("unfixed root cannot be trivially infeasible"),
        Some(ns) => ns,
    };
    if root.status == QpStatus::Infeasible && incumbent.is_none() {
        return Ok(BnbReport {
            status: BnbStatus::Infeasible,
            incumbent: None,
            best_bound: f64::INFINITY,
            gap: f64::INFINITY,
            nodes_explored,
            bound_trace,
        });
    }
    let root_bound = if root.status == QpStatus::Optimal {
        root.objective
    } else {
        f64::NEG_INFINITY
    };
    bound_trace.push(root_bound);

    let mut heap: BinaryHeap<HeapKey> = BinaryHeap::new();
    let mut store: Vec<Option<Node>> = Vec::new();
    let push = |heap: &mut BinaryHeap<HeapKey>,
                    store: &mut Vec<Option<Node>>,
                    next_id: &mut u64,
                    bound: f64,
                    fixings: Vec<(usize, f64)>,
                    warm: Vec<f64>| {
        let id = *next_id;
        *next_id += 1;
        store.push(Some(Node {
            bound,
            fixings,
            warm,
        }));
        heap.push(HeapKey { bound, id });
    };

    if root.status == QpStatus::Optimal
        && most_fractional(&root.x, bool_idx, limits.int_tol).is_none()
    {
        // Integral root: relaxation solves the MIQP.
        let better = incumbent
            .as_ref()
            .map_or(true, |inc| root.objective < inc.objective);
        if better {
            incumbent = Some(incumbent_solution(&root));
        }
        let inc = incumbent.unwrap();
        let bound = root.objective;
        return Ok(BnbReport {
            status: BnbStatus::Optimal,
            gap: (inc.objective - bound).max(0.0),
            incumbent: Some(inc),
            best_bound: bound,
            nodes_explored,
            bound_trace,
        });
    }

    push(
        &mut heap,
        &mut store,
        &mut next_id,
        root_bound,
        Vec::new(),
        root.x.clone(),
    );

    let mut status = BnbStatus::Optimal;
    let mut best_bound = root_bound;

    while let Some(key) = heap.pop() {
        let node = store[key.id as usize].take().expect("node present");
        best_bound = node.bound;
        // Everything still open has bound >= node.bound: global fathoming.
        if node.bound >= incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective)
            - gap_tol(incumbent.as_ref())
        {
            status = BnbStatus::Optimal;
            best_bound = best_bound
                .max(incumbent.as_ref().map_or(best_bound, |s| s.objective) - gap_tol(incumbent.as_ref()));
            break;
        }
        if nodes_explored >= limits.max_nodes {
            status = BnbStatus::NodeLimit;
            break;
        }
        if let Some(tl) = limits.time_limit {
            if start.elapsed() > tl {
                status = BnbStatus::TimeLimit;
                break;
            }
        }

        bound_trace.push(node.bound);

        // Re-solve this node to get its fractional point for branching.
        // The node was created from its parent's branching, so we know its
        // bound; we need the relaxation point here.
        let ns = match solve_node(prob, &node.fixings, Some(&node.warm), &limits.qp)? {
            None => continue,
            Some(ns) => ns,
        };
        nodes_explored += 1;
        if ns.status == QpStatus::Infeasible {
            continue;
        }
        let node_bound = if ns.status == QpStatus::Optimal {
            ns.objective.max(node.bound)
        } else {
            node.bound
        };
        if node_bound
            >= incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective)
                - gap_tol(incumbent.as_ref())
        {
            continue;
        }
        match most_fractional(&ns.x, bool_idx, limits.int_tol) {
            None => {
                if ns.status == QpStatus::Optimal {
                    let better = incumbent
                        .as_ref()
                        .map_or(true, |inc| ns.objective < inc.objective);
                    if better {
                        incumbent = Some(incumbent_solution(&ns));
                    }
                }
            }
            Some(branch_var) => {
                for val in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((branch_var, val));
                    push(
                        &mut heap,
                        &mut store,
                        &mut next_id,
                        node_bound,
                        fixings,
                        ns.x.clone(),
                    );
                }
            }
        }
    }

    if heap.is_empty() && matches!(status, BnbStatus::Optimal) {
        // Tree exhausted: the incumbent (if any) is proven optimal.
        best_bound = incumbent.as_ref().map_or(best_bound, |s| s.objective);
    }

    match &incumbent {
        None => {
            let status = match status {
                BnbStatus::Optimal => BnbStatus::Infeasible,
                other => other,
            };
            Ok(BnbReport {
                status,
                incumbent: None,
                best_bound,
                gap: f64::INFINITY,
                nodes_explored,
                bound_trace,
            })
        }
        Some(inc) => {
            let gap = (inc.objective - best_bound).max(0.0);
            Ok(BnbReport {
                status,
                gap,
                incumbent: incumbent.clone(),
                best_bound,
                nodes_explored,
                bound_trace,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// min (x - t)^2 with x in {0,1} picks the nearer integer.
    fn scalar_binary(t: f64) -> (QpProblem, Vec<usize>) {
        let prob = QpProblem {
            n: 1,
            q: vec![(0, 0, 2.0)],
            c: vec![-2.0 * t],
            c0: t * t,
            eq: vec![],
            d: vec![],
            ineq: vec![vec![(0, 1.0)], vec![(0, -1.0)]],
            h: vec![1.0, 0.0],
        };
        (prob, vec![0])
    }

    #[test]
    fn scalar_binary_rounds() {
        // The near-tie case needs a gap tolerance below the 2e-4 objective
        // difference between the two integer points.
        let limits = BnbLimits {
            abs_gap: 1e-9,
            ..BnbLimits::default()
        };
        for (t, want) in [(0.2, 0.0), (0.8, 1.0), (0.5001, 1.0)] {
            let (prob, bools) = scalar_binary(t);
            let rep = solve_miqp(&prob, &bools, &limits, None).unwrap();
            assert_eq!(rep.status, BnbStatus::Optimal);
            let sol = rep.incumbent.unwrap();
            assert_relative_eq!(sol.x[0], want, epsilon = 1e-6);
        }
    }

    #[test]
    fn empty_bool_set_is_plain_qp() {
        let prob = QpProblem {
            n: 1,
            q: vec![(0, 0, 2.0)],
            c: vec![-2.0],
            c0: 0.0,
            eq: vec![],
            d: vec![],
            ineq: vec![],
            h: vec![],
        };
        let rep = solve_miqp(&prob, &[], &BnbLimits::default(), None).unwrap();
        assert_eq!(rep.status, BnbStatus::Optimal);
        assert_relative_eq!(rep.objective().unwrap(), -1.0, max_relative = 1e-8);
        assert_eq!(rep.nodes_explored, 1);
    }

    /// Three Booleans, a coupling constraint, quadratic preferences.
    fn knapsack_like() -> (QpProblem, Vec<usize>) {
        // min sum (x_i - t_i)^2  s.t. x0 + x1 + x2 <= 1, x_i in {0,1}.
        let t = [0.9, 0.8, 0.3];
        let mut q = Vec::new();
        let mut c = Vec::new();
        let mut c0 = 0.0;
        for i in 0..3 {
            q.push((i, i, 2.0));
            c.push(-2.0 * t[i]);
            c0 += t[i] * t[i];
        }
        let mut ineq = vec![vec![(0, 1.0), (1, 1.0), (2, 1.0)]];
        let mut h = vec![1.0];
        for i in 0..3 {
            ineq.push(vec![(i, 1.0)]);
            h.push(1.0);
            ineq.push(vec![(i, -1.0)]);
            h.push(0.0);
        }
        (
            QpProblem {
                n: 3,
                q,
                c,
                c0,
                eq: vec![],
                d: vec![],
                ineq,
                h,
            },
            vec![0, 1, 2],
        )
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let (prob, bools) = knapsack_like();
        let rep = solve_miqp(&prob, &bools, &BnbLimits::default(), None).unwrap();
        assert_eq!(rep.status, BnbStatus::Optimal);
        // Enumerate all 8 patterns with the same QP data.
        let mut best = f64::INFINITY;
        for mask in 0..8u32 {
            let x: Vec<f64> = (0..3).map(|i| ((mask >> i) & 1) as f64).collect();
            if x.iter().sum::<f64>() <= 1.0 {
                best = best.min(prob.objective(&x));
            }
        }
        assert_relative_eq!(rep.objective().unwrap(), best, max_relative = 1e-7);
        assert_relative_eq!(rep.gap, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn hint_seeds_incumbent() {
        let (prob, bools) = knapsack_like();
        let rep = solve_miqp(
            &prob,
            &bools,
            &BnbLimits::default(),
            Some(&[true, false, false]),
        )
        .unwrap();
        assert_eq!(rep.status, BnbStatus::Optimal);
        assert!(rep.incumbent.is_some());
    }

    #[test]
    fn deterministic_across_runs() {
        let (prob, bools) = knapsack_like();
        let a = solve_miqp(&prob, &bools, &BnbLimits::default(), None).unwrap();
        let b = solve_miqp(&prob, &bools, &BnbLimits::default(), None).unwrap();
        assert_eq!(a.nodes_explored, b.nodes_explored);
        assert_eq!(a.objective(), b.objective());
        assert_eq!(a.bound_trace, b.bound_trace);
    }

    #[test]
    fn bound_trace_monotone() {
        let (prob, bools) = knapsack_like();
        let rep = solve_miqp(&prob, &bools, &BnbLimits::default(), None).unwrap();
        for w in rep.bound_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn infeasible_integer_program() {
        // x0 + x1 = 1.5 has no Boolean solution but a fractional one.
        let prob = QpProblem {
            n: 2,
            q: vec![(0, 0, 2.0), (1, 1, 2.0)],
            c: vec![0.0, 0.0],
            c0: 0.0,
            eq: vec![vec![(0, 1.0), (1, 1.0)]],
            d: vec![1.5],
            ineq: vec![
                vec![(0, 1.0)],
                vec![(0, -1.0)],
                vec![(1, 1.0)],
                vec![(1, -1.0)],
            ],
            h: vec![1.0, 0.0, 1.0, 0.0],
        };
        let rep = solve_miqp(&prob, &[0, 1], &BnbLimits::default(), None).unwrap();
        assert_eq!(rep.status, BnbStatus::Infeasible);
        assert!(rep.incumbent.is_none());
    }
}
