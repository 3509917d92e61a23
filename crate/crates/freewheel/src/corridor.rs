//! Velocity corridor: per-step lower and upper speed bounds derived from
//! the reference profile and fleet deceleration statistics.
//!
//! On constant-speed stretches the corridor is the band `v_ref ± delta_v`.
//! Around each reference deceleration the bounds follow constant-deceleration
//! ramps: the lower bound decelerates at `d_mean + n_sigma * sigma` (steep,
//! reaches the new level early), the upper bound at `d_mean - n_sigma * sigma`
//! (shallow, reaches it late), so the corridor opens around the mean
//! manoeuvre. Accelerations use the fixed rates `a_l` / `a_u`. A forward
//! pass then lowers the lower bound wherever even full tractive power could
//! not keep up with it.

use crate::cycle::DrivingCycle;
use crate::vehicle::{full_power_reach, EngineParams, VehicleParams};
use std::fmt::Write as _;
use thiserror::Error;

/// Corridor construction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorSettings {
    /// Half-width at constant speed [m/s].
    pub delta_v: f64,
    /// Multiplier on the deceleration standard deviation [-].
    pub n_sigma: f64,
    /// Lower-bound acceleration rate [m/s^2].
    pub a_l: f64,
    /// Upper-bound acceleration rate [m/s^2].
    pub a_u: f64,
}

impl CorridorSettings {
    /// Narrow reference-tracking corridor (half-width 1 km/h).
    pub fn benchmark() -> Self {
        Self {
            delta_v: 1.0 / 3.6,
            n_sigma: 0.5,
            a_l: 0.3,
            a_u: 0.4,
        }
    }

    /// Wide corridor used by the look-ahead policies (half-width 4 km/h).
    pub fn wide() -> Self {
        Self {
            delta_v: 4.0 / 3.6,
            n_sigma: 1.0,
            a_l: 0.25,
            a_u: 0.6,
        }
    }

    pub fn validate(&self) -> Result<(), CorridorError> {
        if !(self.delta_v >= 0.0 && self.n_sigma >= 0.0) {
            return Err(CorridorError::BadSettings(
                "delta_v and n_sigma must be nonnegative",
            ));
        }
        if !(0.0 < self.a_l && self.a_l < self.a_u) {
            return Err(CorridorError::BadSettings("requires 0 < a_l < a_u"));
        }
        Ok(())
    }
}

/// Per-step speed and kinetic-energy bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityCorridor {
    pub v_l: Vec<f64>,
    pub v_u: Vec<f64>,
    pub k_l: Vec<f64>,
    pub k_u: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum CorridorError {
    #[error("invalid corridor settings: {0}")]
    BadSettings(&'static str),
    #[error("corridor collapsed at step {index}: v_l = {v_l} > v_u = {v_u}")]
    Collapse { index: usize, v_l: f64, v_u: f64 },
}

/// Mean deceleration [m/s^2] of the fleet statistics for a manoeuvre from
/// `v1` down to `v2` (both m/s).
pub fn mean_decel(v1: f64, v2: f64) -> f64 {
    0.366 + 0.0771 * v1 - 0.0849 * v2 - 0.00185 * v1 * v1 + 0.00348 * v1 * v2
        - 0.00214 * v2 * v2
}

/// Standard deviation [m/s^2] of the fleet deceleration statistics.
pub fn std_decel(v1: f64, v2: f64) -> f64 {
    0.187 + 0.0250 * v1 - 0.0327 * v2 - 0.000734 * v1 * v1 + 0.00187 * v1 * v2
        - 0.00101 * v2 * v2
}

// Rates are floored to keep ramp lengths finite when the polynomials are
// evaluated outside their fitted range.
const MIN_RATE: f64 = 0.01;

/// Lowest admissible corridor speed [m/s]; bounds never drop below this.
pub const MIN_SPEED: f64 = 0.5;

impl VelocityCorridor {
    pub fn len(&self) -> usize {
        self.v_l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_l.is_empty()
    }

    /// Corridor width in kinetic energy at step `i` [J].
    pub fn width_k(&self, i: usize) -> f64 {
        self.k_u[i] - self.k_l[i]
    }

    /// CSV dump (`s_m,v_l_mps,v_u_mps`) for plotting.
    pub fn to_csv(&self, cycle: &DrivingCycle) -> String {
        let mut out = String::from("s_m,v_l_mps,v_u_mps\n");
        for (i, c) in cycle.samples().iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", c.s, self.v_l[i], self.v_u[i]);
        }
        out
    }

    fn recompute_energy(&mut self, p: &VehicleParams) {
        self.k_l = self.v_l.iter().map(|&v| p.kinetic_energy(v)).collect();
        self.k_u = self.v_u.iter().map(|&v| p.kinetic_energy(v)).collect();
    }

    fn check(&self) -> Result<(), CorridorError> {
        for i in 0..self.v_l.len() {
            if self.v_l[i] > self.v_u[i] {
                return Err(CorridorError::Collapse {
                    index: i,
                    v_l: self.v_l[i],
                    v_u: self.v_u[i],
                });
            }
        }
        Ok(())
    }
}

/// Builds the velocity corridor for a cycle. Does not apply the
/// full-power feasibility repair; see [`repair_feasibility`].
pub fn build_corridor(
    cycle: &DrivingCycle,
    set: &CorridorSettings,
    p: &VehicleParams,
) -> Result<VelocityCorridor, CorridorError> {
    set.validate()?;
    let samples = cycle.samples();
    let n = samples.len();
    let mut v_l: Vec<f64> = samples
        .iter()
        .map(|c| (c.v_ref - set.delta_v).max(MIN_SPEED))
        .collect();
    let mut v_u: Vec<f64> = samples.iter().map(|c| c.v_ref + set.delta_v).collect();

    // Reference-change events: (index of first sample at the new level).
    let changes: Vec<usize> = (1..n)
        .filter(|&i| samples[i].v_ref != samples[i - 1].v_ref)
        .collect();

    // Deceleration manoeuvres first (they raise bounds), accelerations
    // second (they cap bounds); later events win inside overlaps.
    for &e in &changes {
        let v1 = samples[e - 1].v_ref;
        let v2 = samples[e].v_ref;
        if v2 >= v1 {
            continue;
        }
        let d_mu = mean_decel(v1, v2);
        let sigma = std_decel(v1, v2).max(MIN_RATE);
        let d_steep = (d_mu + set.n_sigma * sigma).max(MIN_RATE);
        let d_shallow = (d_mu - set.n_sigma * sigma).max(MIN_RATE);
        let s_e = samples[e].s;
        for i in e..n {
            let ds = samples[i].s - s_e;
            let lo = ramp_down(v1 - set.delta_v, v2 - set.delta_v, d_steep, ds);
            let hi = ramp_down(v1 + set.delta_v, v2 + set.delta_v, d_shallow, ds);
            let lo = lo.max(MIN_SPEED);
            let done_lo = lo <= (v2 - set.delta_v).max(MIN_SPEED);
            let done_hi = hi <= v2 + set.delta_v;
            if !done_lo {
                v_l[i] = v_l[i].max(lo);
            }
            if !done_hi {
                v_u[i] = v_u[i].max(hi);
            }
            if done_lo && done_hi {
                break;
            }
        }
    }
    for &e in &changes {
        let v1 = samples[e - 1].v_ref;
        let v2 = samples[e].v_ref;
        if v2 <= v1 {
            continue;
        }
        let s_e = samples[e].s;
        for i in e..n {
            let ds = samples[i].s - s_e;
            let lo = ramp_up(v1 - set.delta_v, v2 - set.delta_v, set.a_l, ds).max(MIN_SPEED);
            let hi = ramp_up(v1 + set.delta_v, v2 + set.delta_v, set.a_u, ds);
            let done_lo = lo >= (v2 - set.delta_v).max(MIN_SPEED);
            let done_hi = hi >= v2 + set.delta_v;
            if !done_lo {
                v_l[i] = v_l[i].min(lo);
            }
            if !done_hi {
                v_u[i] = v_u[i].min(hi);
            }
            if done_lo && done_hi {
                break;
            }
        }
    }

    let mut corridor = VelocityCorridor {
        v_l,
        v_u,
        k_l: Vec::new(),
        k_u: Vec::new(),
    };
    corridor.check()?;
    corridor.recompute_energy(p);
    Ok(corridor)
}

/// Constant-deceleration ramp in the space domain (`v dv/ds = -d`),
/// clamped at the target level.
fn ramp_down(v_from: f64, v_to: f64, rate: f64, ds: f64) -> f64 {
    let v2 = v_from * v_from - 2.0 * rate * ds;
    if v2 <= v_to * v_to {
        v_to
    } else {
        v2.sqrt()
    }
}

/// Constant-acceleration ramp in the space domain, clamped at the target.
fn ramp_up(v_from: f64, v_to: f64, rate: f64, ds: f64) -> f64 {
    let v2 = v_from * v_from + 2.0 * rate * ds;
    if v2 >= v_to * v_to {
        v_to
    } else {
        v2.sqrt()
    }
}

/// Forward pass making the lower bound reachable under full tractive power:
/// `v_l[k] = min(v_l[k], reachable from v_l[k-1])`, with the per-step gain
/// computed from the plant model (power- and force-limited traction net of
/// engine drag, air, rolling resistance, and the local grade).
pub fn repair_feasibility(
    corridor: &VelocityCorridor,
    cycle: &DrivingCycle,
    p: &VehicleParams,
    e: &EngineParams,
) -> VelocityCorridor {
    let mut out = corridor.clone();
    let ds = cycle.delta_s();
    let samples = cycle.samples();
    for k in 1..out.v_l.len() {
        let k_prev = p.kinetic_energy(out.v_l[k - 1]);
        let alpha = samples[k - 1].grade.atan();
        let k_next = full_power_reach(k_prev, alpha, ds, p, e);
        let v_reach = p.speed(k_next.max(0.0)).max(MIN_SPEED);
        if v_reach < out.v_l[k] {
            out.v_l[k] = v_reach;
        }
    }
    out.recompute_energy(p);
    out
}
