//! Receding-horizon closed loop.
//!
//! At every cycle step the controller linearizes around the previous
//! optimal trajectory (shifted by one step), assembles the horizon MIQP,
//! solves it, applies the first control through the nonlinear plant, and
//! advances. The linearization reference at the applied step is the true
//! current energy, so the applied-step model matches the plant exactly and
//! corridor violations can only come from the relaxed instance bounds.
//!
//! [`tune_beta_t`] adjusts the time penalty by bisection until a target
//! trip time is met, which is how the four policies are made comparable.

use crate::corridor::VelocityCorridor;
use crate::cycle::DrivingCycle;
use crate::ocp::{
    build_instance, DragLinearization, HorizonSlice, OcpError, Policy, PolicyConfig,
};
use crate::solver::{solve_miqp, BnbLimits, BnbStatus, QpError};
use crate::vehicle::{
    air_force, drag_force_exact, gravity_force, plant_step, roll_force, step_time, ControlInput,
    EngineParams, KineticState, VehicleError, VehicleParams,
};
use std::fmt::Write as _;
use thiserror::Error;

/// Closed-loop controller configuration.
#[derive(Debug, Clone)]
pub struct MpcConfig {
    /// Horizon length in steps (truncated near the cycle end).
    pub horizon: usize,
    /// Time penalty [W].
    pub beta_t: f64,
    pub policy: PolicyConfig,
    /// Re-linearization passes per step (1 = linearize once).
    pub sqp_passes: usize,
    pub mode: DragLinearization,
    pub limits: BnbLimits,
    /// Initial speed [m/s]; defaults to the reference at the start.
    pub initial_speed: Option<f64>,
}

impl MpcConfig {
    pub fn new(policy: PolicyConfig) -> Self {
        Self {
            horizon: 60,
            beta_t: 2500.0,
            policy,
            sqp_passes: 1,
            mode: DragLinearization::McCormick,
            limits: BnbLimits::default(),
            initial_speed: None,
        }
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon < 2 {
            return Err(MpcError::BadConfig("horizon must be at least 2 steps"));
        }
        if !(self.beta_t >= 0.0) {
            return Err(MpcError::BadConfig("beta_t must be nonnegative"));
        }
        if self.sqp_passes < 1 {
            return Err(MpcError::BadConfig("sqp_passes must be at least 1"));
        }
        Ok(())
    }
}

/// One applied control step of the closed loop.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    /// Position at the start of the step [m].
    pub s: f64,
    /// Kinetic energy at the start of the step [J].
    pub k: f64,
    /// Speed at the start of the step [m/s].
    pub v: f64,
    pub f_t: f64,
    pub f_b: f64,
    /// Powertrain closed during the step.
    pub z: bool,
    /// Powertrain state changed relative to the previous step.
    pub gear_change: bool,
    /// Time spent on the step [s], `ds sqrt(m/2) / sqrt(K)`.
    pub dt: f64,
    /// Applied force decomposition at the step's initial state [N].
    pub f_air: f64,
    pub f_roll: f64,
    pub f_gravity: f64,
    /// Engine drag at the wheels (zero with the powertrain open) [N].
    pub f_drag: f64,
    /// Exact work of air resistance over the step [J] (nonpositive).
    pub air_work: f64,
    /// Branch-and-bound nodes spent on this step.
    pub nodes: usize,
    /// A node/time limit cut the search short (incumbent still applied).
    pub limit_hit: bool,
}

/// Closed-loop trajectory with per-step controls and diagnostics.
#[derive(Debug, Clone)]
pub struct SimulationRecord {
    pub policy: Policy,
    pub beta_t: f64,
    /// Grid spacing of the underlying cycle [m].
    pub delta_s: f64,
    pub steps: Vec<StepRecord>,
    pub final_state: KineticState,
    pub trip_time: f64,
    pub gear_changes: usize,
    /// Steps at which the solver hit a node/time limit.
    pub limited_steps: usize,
}

impl SimulationRecord {
    /// Trajectory CSV: `s_m,v_mps,K_J,F_t_N,F_b_N,z,dt_s`, one row per
    /// sample including the terminal state (zero controls).
    pub fn to_csv(&self, p: &VehicleParams) -> String {
        let mut out = String::from("s_m,v_mps,K_J,F_t_N,F_b_N,z,dt_s\n");
        for st in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                st.s,
                st.v,
                st.k,
                st.f_t,
                st.f_b,
                u8::from(st.z),
                st.dt
            );
        }
        let fs = self.final_state;
        let last_z = self.steps.last().map_or(1, |s| u8::from(s.z));
        let _ = writeln!(
            out,
            "{},{},{},0,0,{},0",
            fs.s,
            p.speed(fs.k),
            fs.k,
            last_z
        );
        out
    }

    /// Total traction energy [J].
    pub fn traction_energy(&self) -> f64 {
        self.steps.iter().map(|s| s.f_t * self.delta_s).sum()
    }
}

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("invalid controller configuration: {0}")]
    BadConfig(&'static str),
    #[error("instance construction failed at step {step}: {source}")]
    Ocp {
        step: usize,
        #[source]
        source: OcpError,
    },
    #[error("solver failed at step {step}: {source}")]
    Solver {
        step: usize,
        #[source]
        source: QpError,
    },
    #[error("horizon problem infeasible at step {step}")]
    Infeasible { step: usize },
    #[error("solver limit hit without an incumbent at step {step}")]
    LimitWithoutIncumbent { step: usize },
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(
        "target trip time {target:.1} s outside the achievable range \
         [{t_fast:.1}, {t_slow:.1}] s"
    )]
    UnachievableTarget {
        target: f64,
        t_fast: f64,
        t_slow: f64,
    },
}

/// Runs the closed loop over the whole cycle.
pub fn run_mpc(
    cycle: &DrivingCycle,
    corridor: &VelocityCorridor,
    p: &VehicleParams,
    e: &EngineParams,
    cfg: &MpcConfig,
) -> Result<SimulationRecord, MpcError> {
    cfg.validate()?;
    let ds = cycle.delta_s();
    let samples = cycle.samples();
    let n_steps = cycle.steps();

    let v0 = cfg.initial_speed.unwrap_or(samples[0].v_ref);
    let mut state = KineticState {
        s: samples[0].s,
        k: p
            .kinetic_energy(v0)
            .clamp(corridor.k_l[0], corridor.k_u[0]),
    };
    let mut z_prev = true;
    let mut prev_states: Option<Vec<f64>> = None; // previous optimal K_0..K_N
    let mut prev_z: Option<Vec<bool>> = None;

    let mut steps = Vec::with_capacity(n_steps);
    let mut trip_time = 0.0;
    let mut gear_changes = 0usize;
    let mut limited_steps = 0usize;

    for step in 0..n_steps {
        let n = cfg.horizon.min(n_steps - step);
        // Linearization reference: shifted previous optimum, held at the
        // tail; corridor midpoint on the first step. The entry for the
        // applied step is the true current energy, which makes the
        // applied-step drag model exact.
        let mut k_ref: Vec<f64> = match &prev_states {
            Some(tr) => (0..n)
                .map(|j| tr[(j + 1).min(tr.len() - 1)])
                .collect(),
            None => (0..n)
                .map(|j| 0.5 * (corridor.k_l[step + j] + corridor.k_u[step + j]))
                .collect(),
        };
        k_ref[0] = state.k;

        let hint: Option<Vec<bool>> = prev_z.as_ref().map(|z| {
            (0..n)
                .map(|j| *z.get(j + 1).unwrap_or(z.last().unwrap_or(&true)))
                .collect()
        });

        let slice = HorizonSlice {
            cycle,
            corridor,
            start: step,
            len: n,
        };
        let mut report = None;
        let mut inst = None;
        for pass in 0..cfg.sqp_passes {
            let built = build_instance(
                &slice,
                state.k,
                z_prev,
                &k_ref,
                p,
                e,
                &cfg.policy,
                cfg.beta_t,
                cfg.mode,
            )
            .map_err(|source| MpcError::Ocp { step, source })?;
            let rep = solve_miqp(
                &built.qp,
                &built.bool_idx,
                &cfg.limits,
                hint.as_deref(),
            )
            .map_err(|source| MpcError::Solver { step, source })?;
            match rep.status {
                BnbStatus::Infeasible => return Err(MpcError::Infeasible { step }),
                BnbStatus::NodeLimit | BnbStatus::TimeLimit if rep.incumbent.is_none() => {
                    return Err(MpcError::LimitWithoutIncumbent { step });
                }
                _ => {}
            }
            if pass + 1 < cfg.sqp_passes {
                // Re-linearize around the fresh solution.
                let x = &rep.incumbent.as_ref().unwrap().x;
                for (j, r) in k_ref.iter_mut().enumerate() {
                    let k = x[built.vars.k(j)];
                    if k > 0.0 {
                        *r = k;
                    }
                }
                k_ref[0] = state.k;
            }
            inst = Some(built);
            report = Some(rep);
        }
        let inst = inst.unwrap();
        let report = report.unwrap();
        let sol = report.incumbent.as_ref().unwrap();
        let limit_hit = matches!(report.status, BnbStatus::NodeLimit | BnbStatus::TimeLimit);
        if limit_hit {
            limited_steps += 1;
        }

        let vars = &inst.vars;
        let f_t = sol.x[vars.f_t(0)].max(0.0);
        let f_b = sol.x[vars.f_b(0)].min(0.0);
        let z = vars.z(0).map_or(true, |i| sol.x[i] > 0.5);
        let u = ControlInput { f_t, f_b, z };

        let alpha = samples[step].grade.atan();
        let drag = if z {
            drag_force_exact(state.k, e.omega_c, p, e)?
        } else {
            0.0
        };
        let next = plant_step(state, u, alpha, ds, p, e)?;

        // Exact air work over the step: dK - (applied + roll + gravity) ds
        // follows from integrating the linear-in-K air term.
        let f_roll = roll_force(alpha, p);
        let f_gravity = gravity_force(alpha, p);
        let constant_force = f_t - drag + f_b + f_roll + f_gravity;
        let air_work = (next.k - state.k) - constant_force * ds;

        let gear_change = z != z_prev;
        if gear_change {
            gear_changes += 1;
        }
        let dt = step_time(state.k, ds, p);
        trip_time += dt;
        steps.push(StepRecord {
            s: state.s,
            k: state.k,
            v: state.speed(p),
            f_t,
            f_b,
            z,
            gear_change,
            dt,
            f_air: air_force(state.k, p),
            f_roll,
            f_gravity,
            f_drag: drag,
            air_work,
            nodes: report.nodes_explored,
            limit_hit,
        });

        // Shift for the next step.
        prev_states = Some((0..=n).map(|j| sol.x[vars.k(j)]).collect());
        prev_z = Some(
            (0..n)
                .map(|j| vars.z(j).map_or(true, |i| sol.x[i] > 0.5))
                .collect(),
        );
        z_prev = z;
        state = next;
    }

    Ok(SimulationRecord {
        policy: cfg.policy.policy,
        beta_t: cfg.beta_t,
        delta_s: ds,
        steps,
        final_state: state,
        trip_time,
        gear_changes,
        limited_steps,
    })
}

/// Largest corridor violation along the realized trajectory, as a fraction
/// of the local corridor width in energy.
pub fn max_corridor_violation(rec: &SimulationRecord, corridor: &VelocityCorridor) -> f64 {
    let mut worst = 0.0f64;
    for (i, st) in rec.steps.iter().enumerate() {
        let width = corridor.width_k(i).max(1.0);
        let below = (corridor.k_l[i] - st.k).max(0.0);
        let above = (st.k - corridor.k_u[i]).max(0.0);
        worst = worst.max(below.max(above) / width);
    }
    let i = rec.steps.len();
    if i < corridor.len() {
        let width = corridor.width_k(i).max(1.0);
        let below = (corridor.k_l[i] - rec.final_state.k).max(0.0);
        let above = (rec.final_state.k - corridor.k_u[i]).max(0.0);
        worst = worst.max(below.max(above) / width);
    }
    worst
}

/// Result of the trip-time tuning loop.
#[derive(Debug, Clone)]
pub struct TuneResult {
    pub beta_t: f64,
    pub record: SimulationRecord,
    /// Closed-loop runs spent.
    pub evaluations: usize,
}

/// Bisects the time penalty until the trip time lands within 0.5% of the
/// target (at most 20 bisection steps). Trip time is nonincreasing in the
/// penalty, so plain bisection applies.
pub fn tune_beta_t(
    target_time: f64,
    cycle: &DrivingCycle,
    corridor: &VelocityCorridor,
    p: &VehicleParams,
    e: &EngineParams,
    cfg: &MpcConfig,
) -> Result<TuneResult, MpcError> {
    let ds = cycle.delta_s();
    // Corridor-bound achievability check.
    let m2 = (p.m / 2.0).sqrt();
    let steps = cycle.steps();
    let t_fast: f64 = (0..steps).map(|i| ds * m2 / corridor.k_u[i].sqrt()).sum();
    let t_slow: f64 = (0..steps).map(|i| ds * m2 / corridor.k_l[i].sqrt()).sum();
    if target_time < 0.995 * t_fast || target_time > 1.005 * t_slow {
        return Err(MpcError::UnachievableTarget {
            target: target_time,
            t_fast,
            t_slow,
        });
    }

    let tol = 0.005 * target_time;
    let mut evaluations = 0usize;
    let mut eval = |beta: f64| -> Result<SimulationRecord, MpcError> {
        let mut c = cfg.clone();
        c.beta_t = beta;
        evaluations += 1;
        run_mpc(cycle, corridor, p, e, &c)
    };

    let rec0 = eval(0.0)?;
    if (rec0.trip_time - target_time).abs() <= tol {
        return Ok(TuneResult {
            beta_t: 0.0,
            record: rec0,
            evaluations,
        });
    }
    if rec0.trip_time < target_time - tol {
        // Even with no time pressure the loop is faster than the target.
        return Err(MpcError::UnachievableTarget {
            target: target_time,
            t_fast,
            t_slow: rec0.trip_time,
        });
    }

    // Bracket: double beta until the trip is fast enough.
    let mut lo = 0.0f64;
    let mut hi = cfg.beta_t.max(1000.0);
    let mut rec_hi = eval(hi)?;
    while rec_hi.trip_time > target_time && hi < 1e9 {
        lo = hi;
        hi *= 4.0;
        rec_hi = eval(hi)?;
    }
    if (rec_hi.trip_time - target_time).abs() <= tol {
        return Ok(TuneResult {
            beta_t: hi,
            record: rec_hi,
            evaluations,
        });
    }
    if rec_hi.trip_time > target_time {
        return Err(MpcError::UnachievableTarget {
            target: target_time,
            t_fast: rec_hi.trip_time,
            t_slow: rec0.trip_time,
        });
    }

    let mut best: Option<(f64, f64, SimulationRecord)> = None;
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        let rec = eval(mid)?;
        let err = (rec.trip_time - target_time).abs();
        if best.as_ref().map_or(true, |(b, _, _)| err < *b) {
            best = Some((err, mid, rec.clone()));
        }
        if err <= tol {
            break;
        }
        if rec.trip_time > target_time {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, beta_t, record) = best.expect("at least one bisection step");
    Ok(TuneResult {
        beta_t,
        record,
        evaluations,
    })
}
