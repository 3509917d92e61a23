//! Assembly of one receding-horizon instance into a standard-form MIQP.
//!
//! Per horizon step `j` the decision variables are the kinetic energy
//! `K_j`, tractive force `F_t,j`, brake force `F_b,j`, and — for policies
//! that may open the powertrain — the Boolean `z_j` (1 = closed), the
//! gear-change magnitude `delta_j`, and (in the exact linearization mode)
//! the product variable `u_j = z_j F_dc,j`. The cost is traction energy
//! plus idle-drag energy while open, a per-switch gear-change penalty, a
//! quadratic-in-K time penalty, and a terminal kinetic-energy reward.
//!
//! Two treatments of the bilinear `z_j F_dc,j` term are available: an exact
//! bounded-product linearization (four inequalities per step, exact at
//! Boolean `z`), and a fallback that freezes the drag force at the
//! reference trajectory, removing the product variable entirely.

use crate::corridor::{CorridorSettings, VelocityCorridor};
use crate::cycle::DrivingCycle;
use crate::solver::QpProblem;
use crate::taylor::{taylor_coeffs, TaylorCoeffs};
use crate::vehicle::{discretize, drag_power, full_power_reach, EngineParams, VehicleParams};
use std::fmt::Write as _;
use thiserror::Error;

/// The four control policies compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Narrow corridor, powertrain always closed.
    Benchmark,
    /// Wide corridor, powertrain always closed.
    NoFreewheel,
    /// Wide corridor, may freewheel with the engine idling.
    FreewheelIdle,
    /// Wide corridor, may freewheel with the engine off.
    FreewheelOff,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Benchmark,
        Policy::NoFreewheel,
        Policy::FreewheelIdle,
        Policy::FreewheelOff,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Benchmark => "benchmark",
            Policy::NoFreewheel => "no-freewheel",
            Policy::FreewheelIdle => "freewheel-idle",
            Policy::FreewheelOff => "freewheel-off",
        }
    }

    pub fn parse(s: &str) -> Option<Policy> {
        Policy::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Per-policy configuration: open-powertrain engine speed and corridor
/// settings column.
#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub policy: Policy,
    /// Engine speed while the powertrain is open [rad/s]; 0 = engine off.
    pub omega_open: f64,
    pub corridor: CorridorSettings,
    pub freewheeling_allowed: bool,
}

impl PolicyConfig {
    /// Standard policy wiring: the benchmark uses the narrow corridor, the
    /// look-ahead policies share the wide one; the engine-off policy zeroes
    /// the open-powertrain engine speed.
    pub fn new(
        policy: Policy,
        engine: &EngineParams,
        benchmark: CorridorSettings,
        wide: CorridorSettings,
    ) -> Self {
        let (corridor, freewheeling_allowed, omega_open) = match policy {
            Policy::Benchmark => (benchmark, false, engine.omega_o),
            Policy::NoFreewheel => (wide, false, engine.omega_o),
            Policy::FreewheelIdle => (wide, true, engine.omega_o),
            Policy::FreewheelOff => (wide, true, 0.0),
        };
        Self {
            policy,
            omega_open,
            corridor,
            freewheeling_allowed,
        }
    }

    /// Gear-change penalty [J] for this policy's open engine speed.
    pub fn beta_g(&self, e: &EngineParams) -> f64 {
        gear_change_penalty(e.omega_c, self.omega_open, e.j_e)
    }
}

/// Energy penalty for engaging or disengaging the powertrain [J]: half the
/// rotational-energy gap `J_e (omega_c^2 - omega_o^2) / 2`, charged per
/// switch so a full open/close pair pays the whole gap.
pub fn gear_change_penalty(omega_c: f64, omega_o: f64, j_e: f64) -> f64 {
    0.5 * j_e * (omega_c * omega_c - omega_o * omega_o) / 2.0
}

/// Gear-change penalty [J] using the engine's configured idle speed.
pub fn beta_g(e: &EngineParams) -> f64 {
    gear_change_penalty(e.omega_c, e.omega_o, e.j_e)
}

/// Treatment of the bilinear `z * F_dc(K)` product in the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DragLinearization {
    /// Exact bounded-product linearization with an auxiliary variable.
    McCormick,
    /// Evaluate the drag at the reference energy (constant per step).
    FrozenReference,
}

/// Index map from horizon steps to flat decision-variable indices.
#[derive(Debug, Clone, Copy)]
pub struct VarMap {
    pub horizon: usize,
    stride: usize,
    has_z: bool,
    has_u: bool,
}

impl VarMap {
    fn new(horizon: usize, has_z: bool, has_u: bool) -> Self {
        let stride = 3 + if has_z { 2 } else { 0 } + usize::from(has_u);
        Self {
            horizon,
            stride,
            has_z,
            has_u,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.horizon * self.stride + 1
    }

    /// Kinetic energy at step `j`, `j = 0..=horizon`.
    pub fn k(&self, j: usize) -> usize {
        j * self.stride
    }

    pub fn f_t(&self, j: usize) -> usize {
        j * self.stride + 1
    }

    pub fn f_b(&self, j: usize) -> usize {
        j * self.stride + 2
    }

    /// Product variable `u_j`; present only in McCormick mode.
    pub fn u(&self, j: usize) -> Option<usize> {
        self.has_u.then_some(j * self.stride + 3)
    }

    pub fn z(&self, j: usize) -> Option<usize> {
        self.has_z
            .then_some(j * self.stride + 3 + usize::from(self.has_u))
    }

    pub fn delta(&self, j: usize) -> Option<usize> {
        self.has_z
            .then_some(j * self.stride + 4 + usize::from(self.has_u))
    }
}

/// One horizon's MIQP data plus the metadata needed to interpret solutions.
#[derive(Debug, Clone)]
pub struct OcpInstance {
    pub qp: QpProblem,
    /// Indices of the Boolean variables (empty for fixed-gear policies).
    pub bool_idx: Vec<usize>,
    pub vars: VarMap,
    /// Initial energy actually used (projected under the corridor top) [J].
    pub k0: f64,
    /// Horizon length in control steps.
    pub horizon: usize,
    pub delta_s: f64,
    /// Effective per-step energy bounds (index 0..=horizon; entry 0 is the
    /// fixed initial state, not constrained).
    pub k_lower: Vec<f64>,
    pub k_upper: Vec<f64>,
    /// Closed-powertrain drag force per step, affine in K:
    /// `F_dc,j = a_j + b_j K_j`.
    pub drag_affine: Vec<(f64, f64)>,
    /// Taylor coefficients per step.
    pub coeffs: Vec<TaylorCoeffs>,
    /// Horizon distance [m].
    pub distance: f64,
}

#[derive(Debug, Error)]
pub enum OcpError {
    #[error("horizon must have at least one step")]
    EmptyHorizon,
    #[error("horizon [{start}, {end}] exceeds cycle sample count {len}")]
    HorizonOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("reference trajectory must be strictly positive at step {0}")]
    BadReference(usize),
    #[error("reference trajectory has {got} entries, horizon needs {need}")]
    ReferenceLength { got: usize, need: usize },
    #[error("corridor slice empty at step {step}: k_l = {k_l} > k_u = {k_u}")]
    EmptyCorridorSlice { step: usize, k_l: f64, k_u: f64 },
    #[error("initial kinetic energy must be strictly positive, got {0}")]
    NonPositiveInit(f64),
}

/// A window of the cycle/corridor pair starting at sample `start` with
/// `len` control steps.
#[derive(Debug, Clone, Copy)]
pub struct HorizonSlice<'a> {
    pub cycle: &'a DrivingCycle,
    pub corridor: &'a VelocityCorridor,
    pub start: usize,
    pub len: usize,
}

/// Builds one horizon instance.
///
/// `k_ref` is the linearization reference (one entry per control step);
/// `z_prev` is the powertrain state applied before the horizon, seeding the
/// first gear-change comparison. The lower energy bound is relaxed forward
/// from `k_init` with the full-power reachability pass, so an initial state
/// slightly below the corridor cannot make the instance infeasible.
#[allow(clippy::too_many_arguments)]
pub fn build_instance(
    slice: &HorizonSlice,
    k_init: f64,
    z_prev: bool,
    k_ref: &[f64],
    p: &VehicleParams,
    e: &EngineParams,
    policy: &PolicyConfig,
    beta_t: f64,
    mode: DragLinearization,
) -> Result<OcpInstance, OcpError> {
    let n = slice.len;
    if n == 0 {
        return Err(OcpError::EmptyHorizon);
    }
    if slice.start + n > slice.cycle.len() - 1 {
        return Err(OcpError::HorizonOutOfRange {
            start: slice.start,
            end: slice.start + n,
            len: slice.cycle.len(),
        });
    }
    if !(k_init > 0.0) {
        return Err(OcpError::NonPositiveInit(k_init));
    }
    if k_ref.len() != n {
        return Err(OcpError::ReferenceLength {
            got: k_ref.len(),
            need: n,
        });
    }

    let ds = slice.cycle.delta_s();
    let samples = slice.cycle.samples();
    let cor = slice.corridor;

    let mut coeffs = Vec::with_capacity(n);
    for (j, &kr) in k_ref.iter().enumerate() {
        if !(kr > 0.0) {
            return Err(OcpError::BadReference(j));
        }
        coeffs.push(taylor_coeffs(kr, p.m).expect("positive reference"));
    }

    // Corridor slice with the reachability relaxation of the lower bound.
    let mut k_lower = vec![0.0; n + 1];
    let mut k_upper = vec![f64::INFINITY; n + 1];
    let k0 = k_init.min(cor.k_u[slice.start]);
    let mut prev = k0.min(cor.k_l[slice.start]);
    for j in 1..=n {
        let idx = slice.start + j;
        let alpha = samples[idx - 1].grade.atan();
        let reach = full_power_reach(prev, alpha, ds, p, e).max(0.0);
        k_lower[j] = cor.k_l[idx].min(reach);
        k_upper[j] = cor.k_u[idx];
        if k_lower[j] > k_upper[j] {
            return Err(OcpError::EmptyCorridorSlice {
                step: idx,
                k_l: k_lower[j],
                k_u: k_upper[j],
            });
        }
        prev = k_lower[j];
    }

    let has_z = policy.freewheeling_allowed;
    let has_u = has_z && mode == DragLinearization::McCormick;
    let vars = VarMap::new(n, has_z, has_u);
    let nv = vars.num_vars();

    let p_closed = drag_power(e.omega_c, e); // engine drag power, closed [W]
    let p_open = drag_power(policy.omega_open, e); // idle drag power [W]
    let beta_g = policy.beta_g(e);

    let mut qp = QpProblem {
        n: nv,
        q: Vec::with_capacity(n),
        c: vec![0.0; nv],
        c0: 0.0,
        eq: Vec::with_capacity(n + 1),
        d: Vec::with_capacity(n + 1),
        ineq: Vec::with_capacity(15 * n),
        h: Vec::with_capacity(15 * n),
    };

    // Initial state.
    qp.eq.push(vec![(vars.k(0), 1.0)]);
    qp.d.push(k0);

    let (a_disc, b_disc, _) = discretize(0.0, ds, p);
    let mut drag_affine = Vec::with_capacity(n);
    let mut bool_idx = Vec::with_capacity(if has_z { n } else { 0 });

    for j in 0..n {
        let t = &coeffs[j];
        let idx = slice.start + j;
        let alpha = samples[idx].grade.atan();
        let (_, _, w_j) = discretize(alpha, ds, p);

        // Closed-powertrain drag, affine in K around the reference.
        let a_j = p_closed * t.phi0;
        let b_j = p_closed * t.phi1;
        drag_affine.push((a_j, b_j));

        // Cost: traction energy.
        qp.c[vars.f_t(j)] += ds;
        // Cost: time penalty (quadratic in K).
        qp.q.push((vars.k(j), vars.k(j), 2.0 * beta_t * ds * t.theta2));
        qp.c[vars.k(j)] += beta_t * ds * t.theta1;
        qp.c0 += beta_t * ds * t.theta0;

        if has_z {
            let z_j = vars.z(j).unwrap();
            let dl_j = vars.delta(j).unwrap();
            bool_idx.push(z_j);
            // Cost: idle drag while open, ds * P_open * varphi0 * (1 - z).
            if p_open > 0.0 {
                let idle = ds * p_open * t.varphi0;
                qp.c0 += idle;
                qp.c[z_j] -= idle;
            }
            // Cost: gear changes, delta_j >= |z_j - z_{j-1}|.
            qp.c[dl_j] += beta_g;
            if j == 0 {
                let zp = if z_prev { 1.0 } else { 0.0 };
                qp.ineq.push(vec![(z_j, 1.0), (dl_j, -1.0)]);
                qp.h.push(zp);
                qp.ineq.push(vec![(z_j, -1.0), (dl_j, -1.0)]);
                qp.h.push(-zp);
            } else {
                let z_pv = vars.z(j - 1).unwrap();
                qp.ineq.push(vec![(z_j, 1.0), (z_pv, -1.0), (dl_j, -1.0)]);
                qp.h.push(0.0);
                qp.ineq.push(vec![(z_j, -1.0), (z_pv, 1.0), (dl_j, -1.0)]);
                qp.h.push(0.0);
            }
            // z and delta live in [0, 1].
            qp.ineq.push(vec![(z_j, 1.0)]);
            qp.h.push(1.0);
            qp.ineq.push(vec![(z_j, -1.0)]);
            qp.h.push(0.0);
            qp.ineq.push(vec![(dl_j, 1.0)]);
            qp.h.push(1.0);
            qp.ineq.push(vec![(dl_j, -1.0)]);
            qp.h.push(0.0);
        }

        // Dynamics: K_{j+1} = A K_j + B (F_t - z F_dc + F_b) + w.
        match (has_z, has_u) {
            (true, true) => {
                let u_j = vars.u(j).unwrap();
                qp.eq.push(vec![
                    (vars.k(j + 1), 1.0),
                    (vars.k(j), -a_disc),
                    (vars.f_t(j), -b_disc),
                    (vars.f_b(j), -b_disc),
                    (u_j, b_disc),
                ]);
                qp.d.push(w_j);
                // Bounded-product linearization of u = z F_dc(K) with
                // F_dc in [lo, hi] over the step's energy range.
                let (klo, khi) = if j == 0 {
                    (k0.min(k_lower[1]), k0.max(k_upper[1]))
                } else {
                    (k_lower[j], k_upper[j])
                };
                let hi = a_j + b_j * klo; // b_j < 0: drag peaks at low K
                let lo = a_j + b_j * khi;
                let z_j = vars.z(j).unwrap();
                qp.ineq.push(vec![(u_j, 1.0), (z_j, -hi)]);
                qp.h.push(0.0);
                qp.ineq.push(vec![(u_j, -1.0), (z_j, lo)]);
                qp.h.push(0.0);
                qp.ineq.push(vec![(u_j, -1.0), (vars.k(j), b_j), (z_j, hi)]);
                qp.h.push(hi - a_j);
                qp.ineq.push(vec![(u_j, 1.0), (vars.k(j), -b_j), (z_j, -lo)]);
                qp.h.push(a_j - lo);
            }
            (true, false) => {
                // Frozen drag: the product collapses to F_dc(K_ref,j) z_j.
                let f_frozen = p_closed * t.varphi0;
                qp.eq.push(vec![
                    (vars.k(j + 1), 1.0),
                    (vars.k(j), -a_disc),
                    (vars.f_t(j), -b_disc),
                    (vars.f_b(j), -b_disc),
                    (vars.z(j).unwrap(), b_disc * f_frozen),
                ]);
                qp.d.push(w_j);
            }
            (false, _) => {
                // Powertrain always closed: substitute z = 1, u = F_dc(K).
                qp.eq.push(vec![
                    (vars.k(j + 1), 1.0),
                    (vars.k(j), -a_disc + b_disc * b_j),
                    (vars.f_t(j), -b_disc),
                    (vars.f_b(j), -b_disc),
                ]);
                qp.d.push(w_j - b_disc * a_j);
            }
        }

        // Tractive force: 0 <= F_t <= F_t_max z.
        qp.ineq.push(vec![(vars.f_t(j), -1.0)]);
        qp.h.push(0.0);
        if has_z {
            qp.ineq
                .push(vec![(vars.f_t(j), 1.0), (vars.z(j).unwrap(), -p.f_t_max)]);
            qp.h.push(0.0);
        } else {
            qp.ineq.push(vec![(vars.f_t(j), 1.0)]);
            qp.h.push(p.f_t_max);
        }
        // Tractive power: F_t <= P_max (phi0 + phi1 K).
        qp.ineq
            .push(vec![(vars.f_t(j), 1.0), (vars.k(j), -p.p_max * t.phi1)]);
        qp.h.push(p.p_max * t.phi0);
        // Brake force: -F_b_max <= F_b <= 0.
        qp.ineq.push(vec![(vars.f_b(j), -1.0)]);
        qp.h.push(p.f_b_max);
        qp.ineq.push(vec![(vars.f_b(j), 1.0)]);
        qp.h.push(0.0);
    }

    // Terminal reward and corridor bounds on the states.
    qp.c[vars.k(n)] -= 1.0;
    for j in 1..=n {
        qp.ineq.push(vec![(vars.k(j), 1.0)]);
        qp.h.push(k_upper[j]);
        qp.ineq.push(vec![(vars.k(j), -1.0)]);
        qp.h.push(-k_lower[j]);
    }

    let distance = ds * n as f64;
    Ok(OcpInstance {
        qp,
        bool_idx,
        vars,
        k0,
        horizon: n,
        delta_s: ds,
        k_lower,
        k_upper,
        drag_affine,
        coeffs,
        distance,
    })
}

impl OcpInstance {
    /// Serializes the instance as a line-based sparse triplet dump:
    /// `nvars`, `bool`, `q i j v`, `c i v`, `c0 v`, `eq r i v`, `d r v`,
    /// `ineq r i v`, `h r v`. Indices are zero-based.
    pub fn dump_triplets(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nvars {}", self.qp.n);
        let _ = writeln!(
            out,
            "bool {}",
            self.bool_idx
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        );
        for &(i, j, v) in &self.qp.q {
            let _ = writeln!(out, "q {i} {j} {v}");
        }
        for (i, &v) in self.qp.c.iter().enumerate() {
            if v != 0.0 {
                let _ = writeln!(out, "c {i} {v}");
            }
        }
        let _ = writeln!(out, "c0 {}", self.qp.c0);
        for (r, row) in self.qp.eq.iter().enumerate() {
            for &(i, v) in row {
                let _ = writeln!(out, "eq {r} {i} {v}");
            }
            let _ = writeln!(out, "d {r} {}", self.qp.d[r]);
        }
        for (r, row) in self.qp.ineq.iter().enumerate() {
            for &(i, v) in row {
                let _ = writeln!(out, "ineq {r} {i} {v}");
            }
            let _ = writeln!(out, "h {r} {}", self.qp.h[r]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corridor::{build_corridor, repair_feasibility};
    use crate::cycle::CycleSample;
    use crate::solver::{solve_miqp, solve_qp, BnbLimits, QpOptions, QpStatus};
    use crate::vehicle::rpm_to_rad;
    use approx::assert_relative_eq;

    struct Fixture {
        cycle: DrivingCycle,
        corridor: VelocityCorridor,
        p: VehicleParams,
        e: EngineParams,
        policy: PolicyConfig,
    }

    fn setup(policy: Policy, n: usize) -> Fixture {
        let p = VehicleParams::default();
        let e = EngineParams::default();
        let ds = 15.0;
        let len = (n + 5).max(40);
        let samples = (0..len)
            .map(|i| CycleSample {
                s: i as f64 * ds,
                grade: 0.002 * ((i % 11) as f64 - 5.0),
                v_ref: 60.0 / 3.6,
            })
            .collect();
        let cycle = DrivingCycle::new(samples, ds).unwrap();
        let policy = PolicyConfig::new(
            policy,
            &e,
            CorridorSettings::benchmark(),
            CorridorSettings::wide(),
        );
        let corridor = build_corridor(&cycle, &policy.corridor, &p).unwrap();
        let corridor = repair_feasibility(&corridor, &cycle, &p, &e);
        Fixture {
            cycle,
            corridor,
            p,
            e,
            policy,
        }
    }

    impl Fixture {
        fn slice(&self, n: usize) -> HorizonSlice<'_> {
            HorizonSlice {
                cycle: &self.cycle,
                corridor: &self.corridor,
                start: 0,
                len: n,
            }
        }

        fn reference(&self, n: usize) -> Vec<f64> {
            (0..n)
                .map(|j| self.p.kinetic_energy(self.cycle.samples()[j].v_ref))
                .collect()
        }

        fn build(&self, n: usize, beta_t: f64, mode: DragLinearization) -> OcpInstance {
            let k0 = self.p.kinetic_energy(60.0 / 3.6);
            build_instance(
                &self.slice(n),
                k0,
                true,
                &self.reference(n),
                &self.p,
                &self.e,
                &self.policy,
                beta_t,
                mode,
            )
            .unwrap()
        }
    }

    /// Independent scalar-loop evaluation of the cost terms at a point.
    fn scalar_cost(inst: &OcpInstance, x: &[f64], z_prev: f64, beta_t: f64, beta_g: f64, p_open: f64) -> f64 {
        let vars = &inst.vars;
        let n = inst.horizon;
        let ds = inst.delta_s;
        let mut cost = 0.0;
        for j in 0..n {
            let t = &inst.coeffs[j];
            cost += ds * x[vars.f_t(j)];
            let z = vars.z(j).map_or(1.0, |i| x[i]);
            cost += ds * p_open * t.varphi0 * (1.0 - z);
            let zp = if j == 0 {
                z_prev
            } else {
                vars.z(j - 1).map_or(1.0, |i| x[i])
            };
            cost += beta_g * (z - zp).abs();
            let k = x[vars.k(j)];
            cost += beta_t * ds * (t.theta0 + t.theta1 * k + t.theta2 * k * k);
        }
        cost - x[vars.k(n)]
    }

    #[test]
    fn beta_g_values() {
        let j_e = 4.0;
        let w_c = rpm_to_rad(1100.0);
        let w_idle = rpm_to_rad(500.0);
        assert_relative_eq!(
            gear_change_penalty(w_c, w_idle, j_e),
            1.053e4,
            max_relative = 1e-3
        );
        assert_relative_eq!(
            gear_change_penalty(w_c, 0.0, j_e),
            1.327e4,
            max_relative = 1e-3
        );
        assert_eq!(gear_change_penalty(w_c, w_c, j_e), 0.0);
        assert_relative_eq!(
            beta_g(&EngineParams::default()),
            1.053e4,
            max_relative = 1e-3
        );
    }

    #[test]
    fn horizon_distance_and_sizes() {
        let fx = setup(Policy::FreewheelIdle, 60);
        let inst = fx.build(60, 1000.0, DragLinearization::McCormick);
        assert_eq!(inst.distance, 900.0);
        assert_eq!(inst.bool_idx.len(), 60);
        assert_eq!(inst.qp.n, 6 * 60 + 1);
        assert_eq!(inst.qp.eq.len(), 61);
    }

    #[test]
    fn fixed_gear_policy_is_pure_qp() {
        let fx = setup(Policy::NoFreewheel, 20);
        let inst = fx.build(20, 1000.0, DragLinearization::McCormick);
        assert!(inst.bool_idx.is_empty());
        assert_eq!(inst.qp.n, 3 * 20 + 1);
        let sol = solve_qp(&inst.qp, &QpOptions::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
    }

    #[test]
    fn cost_matches_scalar_evaluator() {
        // Solve a small instance, then check the QP objective against the
        // independent term-by-term evaluation at the optimum (where the
        // delta variables bind to |z_j - z_{j-1}|).
        let fx = setup(Policy::FreewheelIdle, 8);
        let beta_t = 2000.0;
        for mode in [
            DragLinearization::McCormick,
            DragLinearization::FrozenReference,
        ] {
            let inst = fx.build(8, beta_t, mode);
            let rep = solve_miqp(&inst.qp, &inst.bool_idx, &BnbLimits::default(), None).unwrap();
            let sol = rep.incumbent.expect("feasible instance");
            let qp_obj = inst.qp.objective(&sol.x);
            let scalar = scalar_cost(
                &inst,
                &sol.x,
                1.0,
                beta_t,
                fx.policy.beta_g(&fx.e),
                drag_power(fx.policy.omega_open, &fx.e),
            );
            assert_relative_eq!(qp_obj, scalar, max_relative = 1e-8);
        }
    }

    #[test]
    fn mccormick_exact_at_boolean_z() {
        // At the incumbent, u_j equals z_j F_dc(K_j) for every step.
        let fx = setup(Policy::FreewheelOff, 10);
        let inst = fx.build(10, 500.0, DragLinearization::McCormick);
        let rep = solve_miqp(&inst.qp, &inst.bool_idx, &BnbLimits::default(), None).unwrap();
        let sol = rep.incumbent.expect("feasible instance");
        let mut saw_open = false;
        for j in 0..10 {
            let z = sol.x[inst.vars.z(j).unwrap()];
            let u = sol.x[inst.vars.u(j).unwrap()];
            let k = sol.x[inst.vars.k(j)];
            let (a, b) = inst.drag_affine[j];
            let f_dc = a + b * k;
            assert!(z < 1e-6 || (z - 1.0).abs() < 1e-6, "z not integral: {z}");
            assert_relative_eq!(u, z.round() * f_dc, epsilon = 1e-6 * f_dc.abs().max(1.0));
            if z < 0.5 {
                saw_open = true;
            }
        }
        // With a low time penalty the engine-off policy should actually
        // freewheel somewhere on this stretch.
        assert!(saw_open, "expected at least one open-powertrain step");
    }

    #[test]
    fn delta_binds_to_gear_changes() {
        // Enumerate all z patterns on a short horizon: at each pattern's QP
        // optimum the deltas equal |z_j - z_{j-1}|.
        let fx = setup(Policy::FreewheelIdle, 4);
        let n = 4;
        let inst = fx.build(n, 1000.0, DragLinearization::McCormick);
        for mask in 0..(1u32 << n) {
            let fixings: Vec<(usize, f64)> = (0..n)
                .map(|j| (inst.bool_idx[j], ((mask >> j) & 1) as f64))
                .collect();
            let (reduced, keep) = inst.qp.with_fixed(&fixings).unwrap();
            let sol = solve_qp(&reduced, &QpOptions::default(), None).unwrap();
            if sol.status != QpStatus::Optimal {
                continue;
            }
            let mut full = vec![0.0; inst.qp.n];
            for &(i, v) in &fixings {
                full[i] = v;
            }
            for (r, &orig) in keep.iter().enumerate() {
                full[orig] = sol.x[r];
            }
            let mut zp = 1.0;
            for j in 0..n {
                let z = full[inst.vars.z(j).unwrap()];
                let dl = full[inst.vars.delta(j).unwrap()];
                assert_relative_eq!(dl, (z - zp).abs(), epsilon = 1e-6);
                zp = z;
            }
        }
    }

    #[test]
    fn q_matrix_is_psd() {
        let fx = setup(Policy::FreewheelIdle, 12);
        let inst = fx.build(12, 800.0, DragLinearization::McCormick);
        // The cost matrix is diagonal by construction; PSD reduces to
        // nonnegative diagonal entries.
        for &(i, j, v) in &inst.qp.q {
            assert_eq!(i, j);
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn bad_reference_rejected() {
        let fx = setup(Policy::FreewheelIdle, 4);
        let bad = vec![1e6, -5.0, 1e6, 1e6];
        let err = build_instance(
            &fx.slice(4),
            1e6,
            true,
            &bad,
            &fx.p,
            &fx.e,
            &fx.policy,
            0.0,
            DragLinearization::McCormick,
        );
        assert!(matches!(err, Err(OcpError::BadReference(1))));
    }

    #[test]
    fn low_initial_energy_relaxes_lower_bound() {
        // An initial state below the corridor must not make the instance
        // infeasible: the lower bound relaxes along the reachable set.
        let fx = setup(Policy::Benchmark, 30);
        let k0 = fx.corridor.k_l[0] * 0.7;
        let inst = build_instance(
            &fx.slice(30),
            k0,
            true,
            &fx.reference(30),
            &fx.p,
            &fx.e,
            &fx.policy,
            1000.0,
            DragLinearization::McCormick,
        )
        .unwrap();
        assert!(inst.k_lower[1] < fx.corridor.k_l[1]);
        let sol = solve_qp(&inst.qp, &QpOptions::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
    }

    #[test]
    fn dump_has_documented_shape() {
        let fx = setup(Policy::FreewheelIdle, 3);
        let inst = fx.build(3, 100.0, DragLinearization::McCormick);
        let dump = inst.dump_triplets();
        assert!(dump.starts_with(&format!("nvars {}\n", inst.qp.n)));
        assert!(dump.contains("\nc0 "));
        assert_eq!(
            dump.lines().filter(|l| l.starts_with("d ")).count(),
            inst.qp.eq.len()
        );
    }

    #[test]
    fn policy_wiring() {
        let e = EngineParams::default();
        let bench = CorridorSettings::benchmark();
        let wide = CorridorSettings::wide();
        let b = PolicyConfig::new(Policy::Benchmark, &e, bench, wide);
        assert!(!b.freewheeling_allowed);
        assert_eq!(b.corridor, bench);
        let off = PolicyConfig::new(Policy::FreewheelOff, &e, bench, wide);
        assert_eq!(off.omega_open, 0.0);
        assert!(off.freewheeling_allowed);
        assert_eq!(off.corridor, wide);
        assert!(off.beta_g(&e) > b.beta_g(&e));
        assert_eq!(Policy::parse("freewheel-idle"), Some(Policy::FreewheelIdle));
        assert_eq!(Policy::parse("bogus"), None);
    }
}
