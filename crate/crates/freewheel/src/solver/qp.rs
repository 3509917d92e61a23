//! Convex quadratic programming by a primal-dual interior-point method.
//!
//! Problem form:
//!
//! ```text
//! minimize    1/2 x' Q x + c' x + c0
//! subject to  E x  = d
//!             G x <= h
//! ```
//!
//! with Q symmetric positive semidefinite. The implementation is a Mehrotra
//! predictor-corrector with Ruiz equilibration, a regularized quasi-definite
//! KKT system solved by banded LDL^T (see [`super::linalg`]), and iterative
//! refinement against the unregularized system. Equality rows are
//! interleaved with the variables right after the last variable they touch,
//! which keeps the KKT band narrow for stagewise optimal-control problems
//! and degenerates to a dense factorization otherwise.

use super::linalg::SymBand;
use thiserror::Error;

/// Sparse constraint rows: each row is a list of `(column, value)` pairs.
pub type SparseRows = Vec<Vec<(usize, f64)>>;

/// A convex QP in standard form.
#[derive(Debug, Clone, Default)]
pub struct QpProblem {
    pub n: usize,
    /// Lower-triangle triplets `(i, j, v)` of the symmetric cost matrix,
    /// `i >= j`.
    pub q: Vec<(usize, usize, f64)>,
    pub c: Vec<f64>,
    /// Constant objective offset.
    pub c0: f64,
    pub eq: SparseRows,
    pub d: Vec<f64>,
    pub ineq: SparseRows,
    pub h: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("inconsistent problem dimensions: {0}")]
    Dimensions(String),
    #[error("fixing variable {var} violates constraint row {row}")]
    TrivialInfeasible { var: usize, row: usize },
}

impl QpProblem {
    pub fn validate(&self) -> Result<(), QpError> {
        if self.c.len() != self.n {
            return Err(QpError::Dimensions(format!(
                "c has {} entries for {} variables",
                self.c.len(),
                self.n
            )));
        }
        if self.eq.len() != self.d.len() || self.ineq.len() != self.h.len() {
            return Err(QpError::Dimensions(
                "constraint matrix and rhs lengths differ".into(),
            ));
        }
        for (i, j, _) in &self.q {
            if *i >= self.n || *j > *i {
                return Err(QpError::Dimensions(format!(
                    "cost triplet ({i},{j}) out of lower triangle"
                )));
            }
        }
        for row in self.eq.iter().chain(self.ineq.iter()) {
            for (col, _) in row {
                if *col >= self.n {
                    return Err(QpError::Dimensions(format!("column {col} out of range")));
                }
            }
        }
        Ok(())
    }

    /// Objective value at `x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut quad = 0.0;
        for &(i, j, v) in &self.q {
            quad += if i == j {
                0.5 * v * x[i] * x[i]
            } else {
                v * x[i] * x[j]
            };
        }
        let lin: f64 = self.c.iter().zip(x).map(|(c, x)| c * x).sum();
        quad + lin + self.c0
    }

    /// Returns a copy with the given variables fixed and eliminated.
    /// `keep[r]` gives the original index of reduced variable `r`.
    pub fn with_fixed(&self, fixed: &[(usize, f64)]) -> Result<(QpProblem, Vec<usize>), QpError> {
        let mut value = vec![None::<f64>; self.n];
        for &(i, v) in fixed {
            value[i] = Some(v);
        }
        let mut new_index = vec![usize::MAX; self.n];
        let mut keep = Vec::with_capacity(self.n - fixed.len());
        for i in 0..self.n {
            if value[i].is_none() {
                new_index[i] = keep.len();
                keep.push(i);
            }
        }
        let mut out = QpProblem {
            n: keep.len(),
            q: Vec::with_capacity(self.q.len()),
            c: keep.iter().map(|&i| self.c[i]).collect(),
            c0: self.c0,
            eq: Vec::with_capacity(self.eq.len()),
            d: Vec::with_capacity(self.d.len()),
            ineq: Vec::with_capacity(self.ineq.len()),
            h: Vec::with_capacity(self.h.len()),
        };
        for &(i, j, v) in &self.q {
            match (value[i], value[j]) {
                (None, None) => out.q.push((new_index[i], new_index[j], v)),
                (Some(a), None) => out.c[new_index[j]] += v * a,
                (None, Some(b)) => out.c[new_index[i]] += v * b,
                (Some(a), Some(b)) => {
                    out.c0 += if i == j { 0.5 * v * a * b } else { v * a * b };
                }
            }
        }
        for &(i, v) in fixed {
            out.c0 += self.c[i] * v;
        }
        let reduce_rows = |rows: &SparseRows, rhs: &[f64], is_eq: bool| {
            let mut new_rows = SparseRows::new();
            let mut new_rhs = Vec::new();
            for (r, row) in rows.iter().enumerate() {
                let mut nr = Vec::with_capacity(row.len());
                let mut b = rhs[r];
                for &(col, v) in row {
                    match value[col] {
                        None => nr.push((new_index[col], v)),
                        Some(a) => b -= v * a,
                    }
                }
                if nr.is_empty() {
                    let violated = if is_eq { b.abs() > 1e-9 } else { b < -1e-9 };
                    if violated {
                        return Err(QpError::TrivialInfeasible { var: 0, row: r });
                    }
                    continue;
                }
                new_rows.push(nr);
                new_rhs.push(b);
            }
            Ok((new_rows, new_rhs))
        };
        let (eq, d) = reduce_rows(&self.eq, &self.d, true)?;
        let (ineq, h) = reduce_rows(&self.ineq, &self.h, false)?;
        out.eq = eq;
        out.d = d;
        out.ineq = ineq;
        out.h = h;
        Ok((out, keep))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Unscaled KKT residual norms of the returned iterate.
#[derive(Debug, Clone, Copy, Default)]
pub struct KktResiduals {
    /// Relative stationarity residual.
    pub stationarity: f64,
    /// Relative equality feasibility residual.
    pub eq_feasibility: f64,
    /// Relative inequality feasibility residual.
    pub ineq_feasibility: f64,
    /// Relative complementarity measure.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.eq_feasibility)
            .max(self.ineq_feasibility)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: Vec<f64>,
    /// Equality multipliers.
    pub y: Vec<f64>,
    /// Inequality multipliers (nonnegative).
    pub z: Vec<f64>,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// Relative KKT tolerance declaring optimality.
    pub tol: f64,
    pub max_iter: usize,
    /// Static regularization added to the scaled KKT diagonal.
    pub static_reg: f64,
    /// Iterative refinement sweeps per linear solve.
    pub refine: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
            static_reg: 1e-9,
            refine: 2,
        }
    }
}

/// Optional primal warm start (used to seed the interior point).
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub x: Vec<f64>,
}

struct Scaling {
    d_x: Vec<f64>,
    d_e: Vec<f64>,
    d_g: Vec<f64>,
    kappa: f64,
}

/// Ruiz equilibration of the stacked symmetric data matrix
/// `[Q E' G'; E 0 0; G 0 0]`, plus a cost scaling that normalizes the
/// objective gradient.
fn ruiz(prob: &QpProblem, sweeps: usize) -> Scaling {
    let n = prob.n;
    let me = prob.eq.len();
    let mi = prob.ineq.len();
    let mut d_x = vec![1.0; n];
    let mut d_e = vec![1.0; me];
    let mut d_g = vec![1.0; mi];
    let mut norm_x = vec![0.0f64; n];
    let mut norm_e = vec![0.0f64; me];
    let mut norm_g = vec![0.0f64; mi];
    for _ in 0..sweeps {
        norm_x.fill(0.0);
        norm_e.fill(0.0);
        norm_g.fill(0.0);
        for &(i, j, v) in &prob.q {
            let a = (v * d_x[i] * d_x[j]).abs();
            norm_x[i] = norm_x[i].max(a);
            norm_x[j] = norm_x[j].max(a);
        }
        for (r, row) in prob.eq.iter().enumerate() {
            for &(col, v) in row {
                let a = (v * d_e[r] * d_x[col]).abs();
                norm_e[r] = norm_e[r].max(a);
                norm_x[col] = norm_x[col].max(a);
            }
        }
        for (r, row) in prob.ineq.iter().enumerate() {
            for &(col, v) in row {
                let a = (v * d_g[r] * d_x[col]).abs();
                norm_g[r] = norm_g[r].max(a);
                norm_x[col] = norm_x[col].max(a);
            }
        }
        let update = |d: &mut [f64], norms: &[f64]| {
            for (di, &ni) in d.iter_mut().zip(norms) {
                if ni > 0.0 {
                    *di /= ni.sqrt();
                    *di = di.clamp(1e-8, 1e8);
                }
            }
        };
        update(&mut d_x, &norm_x);
        update(&mut d_e, &norm_e);
        update(&mut d_g, &norm_g);
    }
    // Cost scaling: bring the scaled gradient to unit magnitude.
    let mut gnorm = 0.0f64;
    for (i, &ci) in prob.c.iter().enumerate() {
        gnorm = gnorm.max((ci * d_x[i]).abs());
    }
    for &(i, j, v) in &prob.q {
        gnorm = gnorm.max((v * d_x[i] * d_x[j]).abs());
    }
    let kappa = if gnorm > 0.0 {
        (1.0 / gnorm).clamp(1e-8, 1e8)
    } else {
        1.0
    };
    Scaling {
        d_x,
        d_e,
        d_g,
        kappa,
    }
}

/// Variable/equality-row interleaving that keeps the KKT band narrow:
/// each equality row is placed immediately after the last variable it
/// references.
struct Ordering {
    /// Permuted position of variable i.
    var_pos: Vec<usize>,
    /// Permuted position of equality row r.
    eq_pos: Vec<usize>,
    /// +1 for variable rows, -1 for equality rows.
    signs: Vec<i8>,
    half_bw: usize,
}

fn build_ordering(prob: &QpProblem) -> Ordering {
    let n = prob.n;
    let me = prob.eq.len();
    let mut eq_key: Vec<(usize, usize)> = prob
        .eq
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let key = row.iter().map(|&(c, _)| c).max().unwrap_or(0);
            (key, r)
        })
        .collect();
    eq_key.sort_unstable();
    let mut var_pos = vec![0usize; n];
    let mut eq_pos = vec![0usize; me];
    let mut signs = Vec::with_capacity(n + me);
    let mut next = 0usize;
    let mut ei = 0usize;
    for v in 0..n {
        var_pos[v] = next;
        signs.push(1);
        next += 1;
        while ei < eq_key.len() && eq_key[ei].0 == v {
            eq_pos[eq_key[ei].1] = next;
            signs.push(-1);
            next += 1;
            ei += 1;
        }
    }
    // Rows with no entries (should not occur) go to the end.
    while ei < eq_key.len() {
        eq_pos[eq_key[ei].1] = next;
        signs.push(-1);
        next += 1;
        ei += 1;
    }
    let mut half_bw = 0usize;
    for &(i, j, _) in &prob.q {
        half_bw = half_bw.max(var_pos[i].abs_diff(var_pos[j]));
    }
    for (r, row) in prob.eq.iter().enumerate() {
        for &(c, _) in row {
            half_bw = half_bw.max(eq_pos[r].abs_diff(var_pos[c]));
        }
    }
    for row in &prob.ineq {
        for &(a, _) in row {
            for &(b, _) in row {
                half_bw = half_bw.max(var_pos[a].abs_diff(var_pos[b]));
            }
        }
    }
    Ordering {
        var_pos,
        eq_pos,
        signs,
        half_bw,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Scaled copy of the problem plus iteration workspace.
struct Ipm<'a> {
    prob: &'a QpProblem,
    // Scaled data.
    q: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    eq: SparseRows,
    d: Vec<f64>,
    ineq: SparseRows,
    h: Vec<f64>,
    scal: Scaling,
    ord: Ordering,
    opts: QpOptions,
    n: usize,
    me: usize,
    mi: usize,
}

impl<'a> Ipm<'a> {
    fn new(prob: &'a QpProblem, opts: QpOptions) -> Self {
        let scal = ruiz(prob, 10);
        let q = prob
            .q
            .iter()
            .map(|&(i, j, v)| (i, j, v * scal.kappa * scal.d_x[i] * scal.d_x[j]))
            .collect();
        let c = prob
            .c
            .iter()
            .enumerate()
            .map(|(i, &v)| v * scal.kappa * scal.d_x[i])
            .collect();
        let eq: SparseRows = prob
            .eq
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .map(|&(col, v)| (col, v * scal.d_e[r] * scal.d_x[col]))
                    .collect()
            })
            .collect();
        let d = prob
            .d
            .iter()
            .enumerate()
            .map(|(r, &v)| v * scal.d_e[r])
            .collect();
        let ineq: SparseRows = prob
            .ineq
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .map(|&(col, v)| (col, v * scal.d_g[r] * scal.d_x[col]))
                    .collect()
            })
            .collect();
        let h = prob
            .h
            .iter()
            .enumerate()
            .map(|(r, &v)| v * scal.d_g[r])
            .collect();
        let ord = build_ordering(prob);
        let n = prob.n;
        let me = prob.eq.len();
        let mi = prob.ineq.len();
        Self {
            prob,
            q,
            c,
            eq,
            d,
            ineq,
            h,
            scal,
            ord,
            opts,
            n,
            me,
            mi,
        }
    }

    fn mul_q(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(i, j, v) in &self.q {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
    }

    fn mul_eq(&self, x: &[f64], out: &mut [f64]) {
        for (r, row) in self.eq.iter().enumerate() {
            out[r] = row.iter().map(|&(c, v)| v * x[c]).sum();
        }
    }

    fn mul_eq_t(&self, y: &[f64], out: &mut [f64]) {
        for (r, row) in self.eq.iter().enumerate() {
            for &(c, v) in row {
                out[c] += v * y[r];
            }
        }
    }

    fn mul_ineq(&self, x: &[f64], out: &mut [f64]) {
        for (r, row) in self.ineq.iter().enumerate() {
            out[r] = row.iter().map(|&(c, v)| v * x[c]).sum();
        }
    }

    fn mul_ineq_t(&self, z: &[f64], out: &mut [f64]) {
        for (r, row) in self.ineq.iter().enumerate() {
            for &(c, v) in row {
                out[c] += v * z[r];
            }
        }
    }

    /// Assembles the regularized KKT matrix `[Q + G'WG + dI, E'; E, -dI]`
    /// in permuted band storage.
    fn assemble(&self, w: &[f64], kkt: &mut SymBand) {
        kkt.reset();
        let reg = self.opts.static_reg;
        for v in 0..self.n {
            kkt.add(self.ord.var_pos[v], self.ord.var_pos[v], reg);
        }
        for r in 0..self.me {
            kkt.add(self.ord.eq_pos[r], self.ord.eq_pos[r], -reg);
        }
        for &(i, j, v) in &self.q {
            kkt.add(self.ord.var_pos[i], self.ord.var_pos[j], v);
        }
        for (r, row) in self.eq.iter().enumerate() {
            for &(c, v) in row {
                kkt.add(self.ord.eq_pos[r], self.ord.var_pos[c], v);
            }
        }
        for (r, row) in self.ineq.iter().enumerate() {
            let wr = w[r];
            for (ai, &(a, va)) in row.iter().enumerate() {
                for &(b, vb) in &row[ai..] {
                    kkt.add(self.ord.var_pos[a], self.ord.var_pos[b], wr * va * vb);
                }
            }
        }
    }

    /// Solves the (unregularized) reduced KKT system
    /// `[Q + G'WG, E'; E, 0] [dx; dy] = [bx; by]`
    /// with the factored regularized matrix plus refinement.
    fn kkt_solve(
        &self,
        kkt: &SymBand,
        w: &[f64],
        bx: &[f64],
        by: &[f64],
        dx: &mut [f64],
        dy: &mut [f64],
        scratch: &mut KktScratch,
    ) {
        let nt = self.n + self.me;
        let KktScratch {
            rhs,
            sol,
            res,
            vx,
            vy,
            ox,
        } = scratch;
        rhs.resize(nt, 0.0);
        sol.resize(nt, 0.0);
        res.resize(nt, 0.0);
        for v in 0..self.n {
            rhs[self.ord.var_pos[v]] = bx[v];
        }
        for r in 0..self.me {
            rhs[self.ord.eq_pos[r]] = by[r];
        }
        sol.copy_from_slice(rhs);
        kkt.solve_in_place(sol);
        for _ in 0..self.opts.refine {
            // res = rhs - M0 * sol with the true (unregularized) operator.
            self.apply_true_kkt(sol, w, res, vx, vy, ox);
            let mut worst = 0.0f64;
            for i in 0..nt {
                res[i] = rhs[i] - res[i];
                worst = worst.max(res[i].abs());
            }
            if worst < 1e-14 * (1.0 + inf_norm(rhs)) {
                break;
            }
            kkt.solve_in_place(res);
            for i in 0..nt {
                sol[i] += res[i];
            }
        }
        for v in 0..self.n {
            dx[v] = sol[self.ord.var_pos[v]];
        }
        for r in 0..self.me {
            dy[r] = sol[self.ord.eq_pos[r]];
        }
    }

    /// `out = [Q + G'WG, E'; E, 0] * v`, all in permuted coordinates.
    #[allow(clippy::too_many_arguments)]
    fn apply_true_kkt(
        &self,
        v: &[f64],
        w: &[f64],
        out: &mut [f64],
        x: &mut Vec<f64>,
        y: &mut Vec<f64>,
        ox: &mut Vec<f64>,
    ) {
        x.resize(self.n, 0.0);
        y.resize(self.me, 0.0);
        for i in 0..self.n {
            x[i] = v[self.ord.var_pos[i]];
        }
        for r in 0..self.me {
            y[r] = v[self.ord.eq_pos[r]];
        }
        ox.resize(self.n, 0.0);
        ox.fill(0.0);
        for &(i, j, q) in &self.q {
            ox[i] += q * x[j];
            if i != j {
                ox[j] += q * x[i];
            }
        }
        for (r, row) in self.ineq.iter().enumerate() {
            let gx: f64 = row.iter().map(|&(c, g)| g * x[c]).sum();
            let wgx = w[r] * gx;
            for &(c, g) in row {
                ox[c] += g * wgx;
            }
        }
        for (r, row) in self.eq.iter().enumerate() {
            for &(c, g) in row {
                ox[c] += g * y[r];
            }
        }
        for i in 0..self.n {
            out[self.ord.var_pos[i]] = ox[i];
        }
        for (r, row) in self.eq.iter().enumerate() {
            let ex: f64 = row.iter().map(|&(c, g)| g * x[c]).sum();
            out[self.ord.eq_pos[r]] = ex;
        }
    }

    /// Unscaled relative KKT residuals at the given scaled iterate.
    fn unscaled_residuals(
        &self,
        x_s: &[f64],
        y_s: &[f64],
        z_s: &[f64],
        s_s: &[f64],
    ) -> (KktResiduals, f64) {
        let p = self.prob;
        let n = self.n;
        let x: Vec<f64> = (0..n).map(|i| x_s[i] * self.scal.d_x[i]).collect();
        let y: Vec<f64> = (0..self.me)
            .map(|r| y_s[r] * self.scal.d_e[r] / self.scal.kappa)
            .collect();
        let z: Vec<f64> = (0..self.mi)
            .map(|r| z_s[r] * self.scal.d_g[r] / self.scal.kappa)
            .collect();
        let s: Vec<f64> = (0..self.mi)
            .map(|r| s_s[r] / self.scal.d_g[r])
            .collect();

        let mut qx = vec![0.0; n];
        for &(i, j, v) in &p.q {
            qx[i] += v * x[j];
            if i != j {
                qx[j] += v * x[i];
            }
        }
        let mut ety = vec![0.0; n];
        for (r, row) in p.eq.iter().enumerate() {
            for &(c, v) in row {
                ety[c] += v * y[r];
            }
        }
        let mut gtz = vec![0.0; n];
        for (r, row) in p.ineq.iter().enumerate() {
            for &(c, v) in row {
                gtz[c] += v * z[r];
            }
        }
        let mut rd: f64 = 0.0;
        for i in 0..n {
            rd = rd.max((qx[i] + p.c[i] + ety[i] + gtz[i]).abs());
        }
        let dscale = 1.0 + inf_norm(&qx).max(inf_norm(&p.c)).max(inf_norm(&ety)).max(inf_norm(&gtz));

        let mut ex = vec![0.0; self.me];
        for (r, row) in p.eq.iter().enumerate() {
            ex[r] = row.iter().map(|&(c, v)| v * x[c]).sum();
        }
        let mut rp: f64 = 0.0;
        for r in 0..self.me {
            rp = rp.max((ex[r] - p.d[r]).abs());
        }
        let pscale = 1.0 + inf_norm(&ex).max(inf_norm(&p.d));

        let mut gx = vec![0.0; self.mi];
        for (r, row) in p.ineq.iter().enumerate() {
            gx[r] = row.iter().map(|&(c, v)| v * x[c]).sum();
        }
        let mut rg: f64 = 0.0;
        for r in 0..self.mi {
            rg = rg.max((gx[r] + s[r] - p.h[r]).abs());
        }
        let gscale = 1.0 + inf_norm(&gx).max(inf_norm(&p.h)).max(inf_norm(&s));

        let obj = p.objective(&x);
        let mu = if self.mi > 0 {
            s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / self.mi as f64
        } else {
            0.0
        };
        (
            KktResiduals {
                stationarity: rd / dscale,
                eq_feasibility: rp / pscale,
                ineq_feasibility: rg / gscale,
                complementarity: mu / (1.0 + obj.abs()),
            },
            obj,
        )
    }

    /// Farkas-style primal infeasibility test on the unscaled duals.
    fn infeasibility_certificate(&self, y_s: &[f64], z_s: &[f64]) -> bool {
        let p = self.prob;
        let y: Vec<f64> = (0..self.me)
            .map(|r| y_s[r] * self.scal.d_e[r] / self.scal.kappa)
            .collect();
        let z: Vec<f64> = (0..self.mi)
            .map(|r| z_s[r] * self.scal.d_g[r] / self.scal.kappa)
            .collect();
        let nrm = inf_norm(&y).max(inf_norm(&z));
        if nrm < 1e-6 {
            return false;
        }
        let mut aty = vec![0.0; self.n];
        for (r, row) in p.eq.iter().enumerate() {
            for &(c, v) in row {
                aty[c] += v * y[r] / nrm;
            }
        }
        for (r, row) in p.ineq.iter().enumerate() {
            for &(c, v) in row {
                aty[c] += v * z[r] / nrm;
            }
        }
        let lin: f64 = p.d.iter().zip(&y).map(|(d, y)| d * y).sum::<f64>()
            + p.h.iter().zip(&z).map(|(h, z)| h * z).sum::<f64>();
        inf_norm(&aty) <= 1e-8 && lin / nrm <= -1e-8
    }
}

struct KktScratch {
    rhs: Vec<f64>,
    sol: Vec<f64>,
    res: Vec<f64>,
    vx: Vec<f64>,
    vy: Vec<f64>,
    ox: Vec<f64>,
}

impl KktScratch {
    fn new() -> Self {
        Self {
            rhs: Vec::new(),
            sol: Vec::new(),
            res: Vec::new(),
            vx: Vec::new(),
            vy: Vec::new(),
            ox: Vec::new(),
        }
    }
}

fn step_length(s: &[f64], ds: &[f64], z: &[f64], dz: &[f64]) -> f64 {
    let mut alpha = 1.0f64;
    for i in 0..s.len() {
        if ds[i] < 0.0 {
            alpha = alpha.min(-s[i] / ds[i]);
        }
        if dz[i] < 0.0 {
            alpha = alpha.min(-z[i] / dz[i]);
        }
    }
    alpha
}

/// Solves a convex QP. See the module docs for the problem form.
pub fn solve_qp(
    prob: &QpProblem,
    opts: &QpOptions,
    warm: Option<&WarmStart>,
) -> Result<QpSolution, QpError> {
    prob.validate()?;
    let ipm = Ipm::new(prob, *opts);
    let n = ipm.n;
    let me = ipm.me;
    let mi = ipm.mi;
    let mut scratch = KktScratch::new();
    let mut kkt = SymBand::new(n + me, ipm.ord.half_bw);

    // Scaled primal start.
    let mut x = vec![0.0; n];
    if let Some(wst) = warm {
        if wst.x.len() == n {
            for i in 0..n {
                x[i] = wst.x[i] / ipm.scal.d_x[i];
            }
        }
    }
    let mut y = vec![0.0; me];

    if mi == 0 {
        // Equality-constrained QP: one Newton solve.
        let w: Vec<f64> = Vec::new();
        ipm.assemble(&w, &mut kkt);
        kkt.factorize(&ipm.ord.signs, 1e-13);
        let mut bx = vec![0.0; n];
        for i in 0..n {
            bx[i] = -ipm.c[i];
        }
        let by = ipm.d.clone();
        let mut dx = vec![0.0; n];
        let mut dy = vec![0.0; me];
        ipm.kkt_solve(&kkt, &w, &bx, &by, &mut dx, &mut dy, &mut scratch);
        let (kktres, obj) = ipm.unscaled_residuals(&dx, &dy, &[], &[]);
        let status = if kktres.max() <= opts.tol * 10.0 {
            QpStatus::Optimal
        } else {
            QpStatus::MaxIter
        };
        return Ok(QpSolution {
            status,
            x: (0..n).map(|i| dx[i] * ipm.scal.d_x[i]).collect(),
            y: (0..me)
                .map(|r| dy[r] * ipm.scal.d_e[r] / ipm.scal.kappa)
                .collect(),
            z: Vec::new(),
            objective: obj,
            kkt: kktres,
            iterations: 1,
        });
    }

    // Slack/dual start: strictly positive, scaled to the data.
    let mut gx = vec![0.0; mi];
    ipm.mul_ineq(&x, &mut gx);
    let mut s: Vec<f64> = (0..mi)
        .map(|r| (ipm.h[r] - gx[r]).max(1.0))
        .collect();
    let mut z = vec![1.0; mi];

    let mut w = vec![0.0; mi];
    let mut rd = vec![0.0; n];
    let mut rp = vec![0.0; me];
    let mut rg = vec![0.0; mi];
    let mut bx = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; me];
    let mut ds = vec![0.0; mi];
    let mut dz = vec![0.0; mi];
    let mut dx_c = vec![0.0; n];
    let mut dy_c = vec![0.0; me];
    let mut qx = vec![0.0; n];

    let mut best: Option<(f64, QpSolution)> = None;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        // Residuals (scaled).
        ipm.mul_q(&x, &mut qx);
        rd.copy_from_slice(&qx);
        for i in 0..n {
            rd[i] += ipm.c[i];
        }
        ipm.mul_eq_t(&y, &mut rd);
        ipm.mul_ineq_t(&z, &mut rd);
        ipm.mul_eq(&x, &mut rp);
        for r in 0..me {
            rp[r] -= ipm.d[r];
        }
        ipm.mul_ineq(&x, &mut rg);
        for r in 0..mi {
            rg[r] += s[r] - ipm.h[r];
        }
        let mu = s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / mi as f64;

        let (kktres, obj) = ipm.unscaled_residuals(&x, &y, &z, &s);
        let score = kktres.max();
        let keep = QpSolution {
            status: QpStatus::MaxIter,
            x: (0..n).map(|i| x[i] * ipm.scal.d_x[i]).collect(),
            y: (0..me)
                .map(|r| y[r] * ipm.scal.d_e[r] / ipm.scal.kappa)
                .collect(),
            z: (0..mi)
                .map(|r| z[r] * ipm.scal.d_g[r] / ipm.scal.kappa)
                .collect(),
            objective: obj,
            kkt: kktres,
            iterations,
        };
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, keep.clone()));
        }
        if score <= opts.tol {
            let mut sol = keep;
            sol.status = QpStatus::Optimal;
            return Ok(sol);
        }
        if iter >= 3 && ipm.infeasibility_certificate(&y, &z) {
            let mut sol = keep;
            sol.status = QpStatus::Infeasible;
            return Ok(sol);
        }

        // KKT assembly and factorization with W = Z / S.
        for r in 0..mi {
            w[r] = z[r] / s[r];
        }
        ipm.assemble(&w, &mut kkt);
        kkt.factorize(&ipm.ord.signs, 1e-13);

        // Affine predictor: target complementarity 0.
        for i in 0..n {
            bx[i] = -rd[i];
        }
        // bx -= G' S^-1 (Z rg - rc),  rc = S z (affine) => Z rg - S z.
        for (r, row) in ipm.ineq.iter().enumerate() {
            let t = (z[r] * rg[r] - s[r] * z[r]) / s[r];
            for &(c, v) in row {
                bx[c] -= v * t;
            }
        }
        let by: Vec<f64> = rp.iter().map(|v| -v).collect();
        ipm.kkt_solve(&kkt, &w, &bx, &by, &mut dx, &mut dy, &mut scratch);
        let mut gdx = vec![0.0; mi];
        ipm.mul_ineq(&dx, &mut gdx);
        for r in 0..mi {
            ds[r] = -rg[r] - gdx[r];
            dz[r] = -(s[r] * z[r] + z[r] * ds[r]) / s[r];
        }
        let alpha_aff = step_length(&s, &ds, &z, &dz);
        let mu_aff = (0..mi)
            .map(|r| (s[r] + alpha_aff * ds[r]) * (z[r] + alpha_aff * dz[r]))
            .sum::<f64>()
            / mi as f64;
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-8, 1.0 - 1e-8);

        // Corrector: rc = S z + ds_aff dz_aff - sigma mu.
        for i in 0..n {
            bx[i] = -rd[i];
        }
        for (r, row) in ipm.ineq.iter().enumerate() {
            let rc = s[r] * z[r] + ds[r] * dz[r] - sigma * mu;
            let t = (z[r] * rg[r] - rc) / s[r];
            for &(c, v) in row {
                bx[c] -= v * t;
            }
        }
        ipm.kkt_solve(&kkt, &w, &bx, &by, &mut dx_c, &mut dy_c, &mut scratch);
        ipm.mul_ineq(&dx_c, &mut gdx);
        for r in 0..mi {
            let rc = s[r] * z[r] + ds[r] * dz[r] - sigma * mu;
            ds[r] = -rg[r] - gdx[r];
            dz[r] = -(rc + z[r] * ds[r]) / s[r];
        }
        let alpha = (0.99 * step_length(&s, &ds, &z, &dz)).min(1.0);

        if !alpha.is_finite() || alpha <= 1e-14 {
            break;
        }
        for i in 0..n {
            x[i] += alpha * dx_c[i];
        }
        for r in 0..me {
            y[r] += alpha * dy_c[r];
        }
        for r in 0..mi {
            s[r] += alpha * ds[r];
            z[r] += alpha * dz[r];
        }
        if x.iter().any(|v| !v.is_finite()) {
            break;
        }
    }

    let (_, mut sol) = best.expect("at least one iterate recorded");
    sol.iterations = iterations;
    Ok(sol)
}
