//! Longitudinal vehicle model in the kinetic-energy/space domain.
//!
//! The state is kinetic energy `K = m v^2 / 2` as a function of position,
//! which makes air drag linear in the state and turns the dynamics into a
//! linear ODE per step:
//!
//! ```text
//! dK/ds = A_c K + F,      A_c = -rho A_f c_d / m
//! ```
//!
//! with `F` collecting all forces that are constant over one spatial step
//! (traction, brakes, engine drag held at the step's initial speed, rolling
//! resistance, gravity). [`discretize`] solves this ODE exactly over one
//! step; [`plant_step`] is the nonlinear plant used by the closed loop.

use thiserror::Error;

/// Physical constants of the vehicle and its environment.
///
/// Forces are in N, masses in kg, powers in W. `f_t_max`, `f_b_max` and
/// `p_max` are actuator limits; they have no catalog values and are plain
/// configuration inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    /// Vehicle mass [kg].
    pub m: f64,
    /// Wheel radius [m]. Stored for completeness; no force law here uses it.
    pub r_w: f64,
    /// Air drag coefficient [-].
    pub c_d: f64,
    /// Air density [kg/m^3].
    pub rho: f64,
    /// Frontal area [m^2].
    pub a_f: f64,
    /// Rolling resistance coefficient [-].
    pub c_r: f64,
    /// Gravitational acceleration [m/s^2].
    pub g: f64,
    /// Maximum tractive force [N].
    pub f_t_max: f64,
    /// Maximum brake force magnitude [N].
    pub f_b_max: f64,
    /// Maximum tractive power [W].
    pub p_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 26_000.0,
            r_w: 0.5,
            c_d: 0.5,
            rho: 1.292,
            a_f: 10.0,
            c_r: 0.006,
            g: 9.81,
            f_t_max: 50_000.0,
            f_b_max: 150_000.0,
            p_max: 300_000.0,
        }
    }
}

impl VehicleParams {
    /// Checks the plausibility invariants; returns the first violation.
    pub fn validate(&self) -> Result<(), VehicleError> {
        let positive = [
            ("m", self.m),
            ("r_w", self.r_w),
            ("c_d", self.c_d),
            ("rho", self.rho),
            ("a_f", self.a_f),
            ("c_r", self.c_r),
            ("g", self.g),
            ("f_t_max", self.f_t_max),
            ("f_b_max", self.f_b_max),
            ("p_max", self.p_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(VehicleError::BadParam {
                    name,
                    value: v,
                    reason: "must be strictly positive and finite",
                });
            }
        }
        if self.c_r >= 0.1 {
            return Err(VehicleError::BadParam {
                name: "c_r",
                value: self.c_r,
                reason: "rolling resistance coefficient must be < 0.1",
            });
        }
        if self.c_d >= 2.0 {
            return Err(VehicleError::BadParam {
                name: "c_d",
                value: self.c_d,
                reason: "air drag coefficient must be < 2",
            });
        }
        Ok(())
    }

    /// Speed [m/s] for a kinetic energy [J].
    pub fn speed(&self, k: f64) -> f64 {
        (2.0 * k.max(0.0) / self.m).sqrt()
    }

    /// Kinetic energy [J] at a speed [m/s].
    pub fn kinetic_energy(&self, v: f64) -> f64 {
        0.5 * self.m * v * v
    }

    /// State coefficient of the continuous dynamics, `A_c = -rho A_f c_d / m` [1/m].
    pub fn state_coeff(&self) -> f64 {
        -self.rho * self.a_f * self.c_d / self.m
    }
}

/// Engine parameters: fixed operating speeds and the linear drag-torque law.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineParams {
    /// Engine speed with the powertrain closed [rad/s].
    pub omega_c: f64,
    /// Engine speed with the powertrain open [rad/s] (idle, or 0 when off).
    pub omega_o: f64,
    /// Constant drag torque [N*m].
    pub t_d0: f64,
    /// Drag torque slope [N*m*s/rad].
    pub t_d1: f64,
    /// Engine moment of inertia [kg*m^2].
    pub j_e: f64,
}

/// Converts revolutions per minute to rad/s.
pub fn rpm_to_rad(rpm: f64) -> f64 {
    rpm * std::f64::consts::PI / 30.0
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            omega_c: rpm_to_rad(1100.0),
            omega_o: rpm_to_rad(500.0),
            // Drag-torque fit constants are configuration inputs; these
            // defaults are plausible magnitudes for a heavy-duty diesel.
            t_d0: 20.0,
            t_d1: 0.12,
            j_e: 4.0,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        if !(self.omega_o >= 0.0 && self.omega_c > self.omega_o) {
            return Err(VehicleError::BadParam {
                name: "omega_c/omega_o",
                value: self.omega_c,
                reason: "requires omega_c > omega_o >= 0",
            });
        }
        if self.t_d0 < 0.0 || self.t_d1 < 0.0 {
            return Err(VehicleError::BadParam {
                name: "t_d0/t_d1",
                value: self.t_d0.min(self.t_d1),
                reason: "drag torque coefficients must be nonnegative",
            });
        }
        if !(self.j_e > 0.0) {
            return Err(VehicleError::BadParam {
                name: "j_e",
                value: self.j_e,
                reason: "engine inertia must be strictly positive",
            });
        }
        Ok(())
    }
}

/// Position and kinetic energy of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticState {
    /// Position along the route [m].
    pub s: f64,
    /// Kinetic energy [J].
    pub k: f64,
}

impl KineticState {
    pub fn speed(&self, p: &VehicleParams) -> f64 {
        p.speed(self.k)
    }
}

/// One step's applied controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    /// Tractive force [N], `0 <= f_t <= f_t_max * z`.
    pub f_t: f64,
    /// Brake force [N], `-f_b_max <= f_b <= 0`.
    pub f_b: f64,
    /// Powertrain closed (true) or open (false).
    pub z: bool,
}

impl ControlInput {
    pub const COAST: ControlInput = ControlInput {
        f_t: 0.0,
        f_b: 0.0,
        z: true,
    };

    pub const FREEWHEEL: ControlInput = ControlInput {
        f_t: 0.0,
        f_b: 0.0,
        z: false,
    };
}

#[derive(Debug, Error)]
pub enum VehicleError {
    #[error("parameter {name} = {value} invalid: {reason}")]
    BadParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("kinetic energy must be strictly positive, got {0} J")]
    NonPositiveEnergy(f64),
    #[error("vehicle stopped at s = {s} m (kinetic energy {k} J)")]
    VehicleStopped { s: f64, k: f64 },
}

/// Air resistance [N]: `-rho A_f c_d K / m`. Linear in K, always <= 0.
pub fn air_force(k: f64, p: &VehicleParams) -> f64 {
    p.state_coeff() * k
}

/// Rolling resistance [N]: `-m g c_r cos(alpha)`.
pub fn roll_force(alpha: f64, p: &VehicleParams) -> f64 {
    -p.m * p.g * p.c_r * alpha.cos()
}

/// Gravity along the road [N]: `-m g sin(alpha)`. Negative uphill.
pub fn gravity_force(alpha: f64, p: &VehicleParams) -> f64 {
    -p.m * p.g * alpha.sin()
}

/// Engine drag torque [N*m], linear in engine speed.
pub fn drag_torque(omega: f64, e: &EngineParams) -> f64 {
    e.t_d0 + e.t_d1 * omega
}

/// Engine drag power [W] at engine speed `omega`.
pub fn drag_power(omega: f64, e: &EngineParams) -> f64 {
    if omega == 0.0 {
        0.0
    } else {
        omega * drag_torque(omega, e)
    }
}

/// Engine drag expressed as a force at the wheels [N]:
/// `omega T_d(omega) sqrt(m/2) K^(-1/2)`, i.e. drag power over speed.
///
/// This is the exact power law; the optimal-control problem replaces the
/// `K^(-1/2)` factor with Taylor expansions, the plant never does.
pub fn drag_force_exact(
    k: f64,
    omega: f64,
    p: &VehicleParams,
    e: &EngineParams,
) -> Result<f64, VehicleError> {
    if omega == 0.0 {
        return Ok(0.0);
    }
    if !(k > 0.0) {
        return Err(VehicleError::NonPositiveEnergy(k));
    }
    Ok(drag_power(omega, e) * (p.m / 2.0).sqrt() / k.sqrt())
}

/// Exact one-step discretization of `dK/ds = A_c K + F` over `delta_s`:
/// `K_next = A K + B F + w`, with `w` folding in rolling resistance and
/// gravity on the local slope.
///
/// `A = exp(A_c delta_s)`, `B = (A - 1)/A_c` (limit `delta_s` as `A_c -> 0`),
/// `w = -B m g (sin(alpha) + c_r cos(alpha))`.
pub fn discretize(alpha: f64, delta_s: f64, p: &VehicleParams) -> (f64, f64, f64) {
    let a_c = p.state_coeff();
    let a = (a_c * delta_s).exp();
    let b = if a_c.abs() < 1e-300 {
        delta_s
    } else {
        (a - 1.0) / a_c
    };
    let w = b * (roll_force(alpha, p) + gravity_force(alpha, p));
    (a, b, w)
}

/// Advances the plant one spatial step under zero-order-hold controls.
///
/// Engine drag is evaluated with the exact power law at the step's initial
/// kinetic energy and held constant over the step, then the linear-in-K air
/// drag is integrated exactly through [`discretize`].
pub fn plant_step(
    x: KineticState,
    u: ControlInput,
    alpha: f64,
    delta_s: f64,
    p: &VehicleParams,
    e: &EngineParams,
) -> Result<KineticState, VehicleError> {
    if !(x.k > 0.0) {
        return Err(VehicleError::NonPositiveEnergy(x.k));
    }
    let drag = if u.z {
        drag_force_exact(x.k, e.omega_c, p, e)?
    } else {
        0.0
    };
    let applied = u.f_t - drag + u.f_b;
    let (a, b, w) = discretize(alpha, delta_s, p);
    let k_next = a * x.k + b * applied + w;
    if !(k_next > 0.0) {
        return Err(VehicleError::VehicleStopped {
            s: x.s + delta_s,
            k: k_next,
        });
    }
    Ok(KineticState {
        s: x.s + delta_s,
        k: k_next,
    })
}

/// Time spent traversing `delta_s` at the step's initial kinetic energy [s]:
/// `dt = delta_s sqrt(m/2) K^(-1/2)`.
pub fn step_time(k: f64, delta_s: f64, p: &VehicleParams) -> f64 {
    delta_s * (p.m / 2.0).sqrt() / k.sqrt()
}

/// Kinetic energy reached after one step at full tractive effort (power-
/// and force-limited, closed powertrain) from energy `k` on slope `alpha`.
/// Used by the corridor feasibility repair.
pub fn full_power_reach(
    k: f64,
    alpha: f64,
    delta_s: f64,
    p: &VehicleParams,
    e: &EngineParams,
) -> f64 {
    let f_t = p.f_t_max.min(p.p_max * (p.m / 2.0).sqrt() / k.sqrt());
    let drag = drag_force_exact(k, e.omega_c, p, e).unwrap_or(0.0);
    let (a, b, w) = discretize(alpha, delta_s, p);
    a * k + b * (f_t - drag) + w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_relative_eq, relative_eq};

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    fn engine() -> EngineParams {
        EngineParams::default()
    }

    /// Reference integrator for dK/ds = A_c K + F with constant F:
    /// classic RK4 with step halving until two refinements agree.
    fn integrate_linear_ode(k0: f64, a_c: f64, force: f64, length: f64) -> f64 {
        let rk4 = |n: usize| -> f64 {
            let h = length / n as f64;
            let mut k = k0;
            let f = |k: f64| a_c * k + force;
            for _ in 0..n {
                let k1 = f(k);
                let k2 = f(k + 0.5 * h * k1);
                let k3 = f(k + 0.5 * h * k2);
                let k4 = f(k + h * k3);
                k += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            k
        };
        let mut n = 64;
        let mut prev = rk4(n);
        loop {
            n *= 2;
            let next = rk4(n);
            if relative_eq!(prev, next, max_relative = 1e-12) || n > 1 << 16 {
                return next;
            }
            prev = next;
        }
    }

    #[test]
    fn air_force_values() {
        let p = params();
        assert_eq!(air_force(0.0, &p), 0.0);
        // v = 20 m/s -> K = 5.2e6 J; 0.5 * 1.292 * 10 * 0.5 * 20^2 = 1292 N.
        assert_relative_eq!(air_force(5.2e6, &p), -1292.0, max_relative = 1e-12);
    }

    #[test]
    fn air_force_linear_in_k() {
        let p = params();
        let k0 = 3.1e6;
        assert_relative_eq!(
            air_force(2.0 * k0, &p),
            2.0 * air_force(k0, &p),
            max_relative = 1e-15
        );
    }

    #[test]
    fn roll_force_values() {
        let p = params();
        // 26000 * 9.81 * 0.006 = 1530.36 N.
        assert_relative_eq!(roll_force(0.0, &p), -1530.36, max_relative = 1e-12);
        let mut zero_cr = params();
        zero_cr.c_r = 1e-300; // validate() forbids 0; limit case via tiny value
        assert!(roll_force(0.0, &zero_cr).abs() < 1e-290);
        let alpha = 0.03f64.atan();
        assert_relative_eq!(roll_force(alpha, &p), roll_force(-alpha, &p));
    }

    #[test]
    fn gravity_force_values() {
        let p = params();
        assert_eq!(gravity_force(0.0, &p), 0.0);
        // Max-grade check: sin(atan(0.043)) = 0.043 / sqrt(1 + 0.043^2).
        let alpha = 0.043f64.atan();
        let expected = -26_000.0 * 9.81 * (0.043 / (1.0f64 + 0.043 * 0.043).sqrt());
        assert_relative_eq!(gravity_force(alpha, &p), expected, max_relative = 1e-12);
        assert_relative_eq!(expected, -10957.5, max_relative = 1e-4);
        assert_relative_eq!(
            gravity_force(-alpha, &p),
            -gravity_force(alpha, &p),
            max_relative = 1e-15
        );
    }

    #[test]
    fn drag_torque_values() {
        let e = engine();
        assert_eq!(drag_torque(0.0, &e), e.t_d0);
        let omega = rpm_to_rad(1100.0);
        assert_relative_eq!(drag_torque(omega, &e), 33.823, max_relative = 1e-4);
        // Monotone nondecreasing in omega.
        assert!(drag_torque(200.0, &e) >= drag_torque(100.0, &e));
    }

    #[test]
    fn drag_force_exact_values() {
        let p = params();
        let e = engine();
        assert_eq!(drag_force_exact(1e6, 0.0, &p, &e).unwrap(), 0.0);
        // At v = 15 m/s the drag force equals omega T_d / v.
        let k = p.kinetic_energy(15.0);
        let expected = e.omega_c * drag_torque(e.omega_c, &e) / 15.0;
        assert_relative_eq!(
            drag_force_exact(k, e.omega_c, &p, &e).unwrap(),
            expected,
            max_relative = 1e-12
        );
        assert_relative_eq!(expected, 259.7, max_relative = 1e-3);
        assert!(drag_force_exact(0.0, e.omega_c, &p, &e).is_err());
        assert!(drag_force_exact(-1.0, e.omega_c, &p, &e).is_err());
    }

    #[test]
    fn drag_force_power_law() {
        let p = params();
        let e = engine();
        let k = 2.5e6;
        let f1 = drag_force_exact(k, e.omega_c, &p, &e).unwrap();
        let f2 = drag_force_exact(2.0 * k, e.omega_c, &p, &e).unwrap();
        assert_relative_eq!(f1 / f2, 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn discretize_zero_drag_limit() {
        // Without air drag the step reduces to Euler-exact constant-force
        // integration: A -> 1, B -> delta_s.
        let mut p = params();
        p.c_d = 1e-306;
        let (a, b, _w) = discretize(0.0, 15.0, &p);
        assert_relative_eq!(a, 1.0, max_relative = 1e-9);
        assert_relative_eq!(b, 15.0, max_relative = 1e-9);
    }

    #[test]
    fn discretize_flat_road_constant_term() {
        let p = params();
        let (_a, b, w) = discretize(0.0, 15.0, &p);
        assert_relative_eq!(w, -b * p.m * p.g * p.c_r, max_relative = 1e-14);
    }

    #[test]
    fn discretize_matches_ode_oracle() {
        let p = params();
        let (a, b, w) = discretize(0.0, 15.0, &p);
        let k0 = 5.2e6;
        // Zero applied force on a flat road: F = roll only (air inside A).
        let k1 = a * k0 + w;
        let oracle = integrate_linear_ode(k0, p.state_coeff(), roll_force(0.0, &p), 15.0);
        assert_relative_eq!(k1, oracle, max_relative = 1e-9);
        // Nonzero applied force as well.
        let f_applied = 4_000.0;
        let k1 = a * k0 + b * f_applied + w;
        let oracle =
            integrate_linear_ode(k0, p.state_coeff(), f_applied + roll_force(0.0, &p), 15.0);
        assert_relative_eq!(k1, oracle, max_relative = 1e-9);
    }

    #[test]
    fn plant_step_pure_coast_decreases() {
        let p = params();
        let e = engine();
        let mut x = KineticState {
            s: 0.0,
            k: p.kinetic_energy(20.0),
        };
        for _ in 0..10 {
            let next = plant_step(x, ControlInput::COAST, 0.0, 15.0, &p, &e).unwrap();
            assert!(next.k < x.k);
            x = next;
        }
    }

    #[test]
    fn plant_step_downhill_coast_gains_energy() {
        let p = params();
        let e = engine();
        let x = KineticState {
            s: 0.0,
            k: p.kinetic_energy(20.0),
        };
        let alpha = (-0.04f64).atan();
        // Gravity (~10.2 kN) exceeds roll + air + engine drag (~3.2 kN).
        let next = plant_step(x, ControlInput::COAST, alpha, 15.0, &p, &e).unwrap();
        assert!(next.k > x.k);
    }

    #[test]
    fn plant_step_matches_ode_oracle() {
        let p = params();
        let e = engine();
        let k0 = p.kinetic_energy(17.0);
        let u = ControlInput {
            f_t: 6_000.0,
            f_b: -500.0,
            z: true,
        };
        let alpha = 0.02f64.atan();
        let next = plant_step(KineticState { s: 0.0, k: k0 }, u, alpha, 15.0, &p, &e).unwrap();
        let drag = drag_force_exact(k0, e.omega_c, &p, &e).unwrap();
        let force =
            u.f_t - drag + u.f_b + roll_force(alpha, &p) + gravity_force(alpha, &p);
        let oracle = integrate_linear_ode(k0, p.state_coeff(), force, 15.0);
        assert_relative_eq!(next.k, oracle, max_relative = 1e-9);
    }

    #[test]
    fn plant_step_vehicle_stopped() {
        let p = params();
        let e = engine();
        let x = KineticState { s: 0.0, k: 500.0 };
        let u = ControlInput {
            f_t: 0.0,
            f_b: -50_000.0,
            z: true,
        };
        match plant_step(x, u, 0.0, 15.0, &p, &e) {
            Err(VehicleError::VehicleStopped { s, .. }) => assert_eq!(s, 15.0),
            other => panic!("expected VehicleStopped, got {other:?}"),
        }
    }

    #[test]
    fn flat_coast_contracts_toward_zero() {
        let p = params();
        let e = engine();
        // u = 0 with powertrain open removes engine drag; roll + air still
        // shrink K monotonically on flat ground.
        let mut x = KineticState {
            s: 0.0,
            k: p.kinetic_energy(25.0),
        };
        let mut prev = x.k;
        for _ in 0..50 {
            x = plant_step(x, ControlInput::FREEWHEEL, 0.0, 15.0, &p, &e).unwrap();
            assert!(x.k < prev);
            prev = x.k;
        }
    }

    #[test]
    fn energy_bookkeeping_identity() {
        // Over any trajectory the discretization satisfies, step by step,
        // dK = (A-1)K + B F_applied + w exactly; summing telescopes.
        let p = params();
        let e = engine();
        let mut x = KineticState {
            s: 0.0,
            k: p.kinetic_energy(18.0),
        };
        let k_start = x.k;
        let mut rhs_sum = 0.0;
        for i in 0..40 {
            let alpha = (0.01 * ((i % 7) as f64 - 3.0)).atan();
            let u = ControlInput {
                f_t: if i % 3 == 0 { 8_000.0 } else { 0.0 },
                f_b: if i % 5 == 0 { -2_000.0 } else { 0.0 },
                z: i % 4 != 0,
            };
            let (a, b, w) = discretize(alpha, 15.0, &p);
            let drag = if u.z {
                drag_force_exact(x.k, e.omega_c, &p, &e).unwrap()
            } else {
                0.0
            };
            rhs_sum += (a - 1.0) * x.k + b * (u.f_t - drag + u.f_b) + w;
            x = plant_step(x, u, alpha, 15.0, &p, &e).unwrap();
        }
        assert_relative_eq!(x.k - k_start, rhs_sum, max_relative = 1e-9);
    }

    #[test]
    fn param_validation() {
        assert!(params().validate().is_ok());
        assert!(engine().validate().is_ok());
        let mut p = params();
        p.c_r = 0.2;
        assert!(p.validate().is_err());
        let mut p = params();
        p.m = -1.0;
        assert!(p.validate().is_err());
        let mut e = engine();
        e.omega_o = e.omega_c;
        assert!(e.validate().is_err());
    }

    #[test]
    fn step_time_matches_inverse_speed() {
        let p = params();
        let k = p.kinetic_energy(15.0);
        assert_relative_eq!(step_time(k, 15.0, &p), 1.0, max_relative = 1e-12);
    }
}
