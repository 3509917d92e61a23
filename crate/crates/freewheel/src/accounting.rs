//! Energy-loss decomposition and cross-policy comparison.
//!
//! Fuel is modeled as proportional to energy, so the comparison works in
//! Joules throughout: the energy input of a run is traction work plus idle
//! drag while the powertrain is open plus the rotational-energy cost of
//! gear changes. Losses split into rolling resistance, air resistance,
//! braking, engine drag at the wheels, idling, and gear changes. The air
//! term uses the exact per-step work of the linear-in-K drag, so the energy
//! balance closes to rounding error.

use crate::mpc::SimulationRecord;
use crate::ocp::{gear_change_penalty, Policy};
use crate::vehicle::{drag_power, EngineParams, VehicleParams};
use std::fmt::Write as _;

/// Energy losses of one closed-loop run, by category [J].
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub roll: f64,
    pub air: f64,
    pub brake: f64,
    pub engine_drag: f64,
    pub idling: f64,
    pub gear_change: f64,
    /// Sum of all loss categories [J].
    pub total: f64,
    pub trip_time: f64,
    /// Traction work at the wheels [J].
    pub traction: f64,
    /// Fuel-equivalent energy input: traction + idling + gear changes [J].
    pub energy_input: f64,
    /// Kinetic-energy change over the run [J].
    pub delta_k: f64,
    /// Signed gravity work along the run [J] (positive net downhill).
    pub gravity_work: f64,
    /// Relative closure error of `input = dK + losses - gravity`.
    pub closure_error: f64,
}

/// Open-powertrain engine speed for a policy [rad/s].
fn omega_open(policy: Policy, e: &EngineParams) -> f64 {
    match policy {
        Policy::FreewheelOff => 0.0,
        _ => e.omega_o,
    }
}

/// Decomposes a run into the six loss categories.
pub fn decompose(rec: &SimulationRecord, _p: &VehicleParams, e: &EngineParams) -> LossBreakdown {
    let ds = rec.delta_s;
    let w_open = omega_open(rec.policy, e);
    let p_idle = drag_power(w_open, e);
    let beta_g = gear_change_penalty(e.omega_c, w_open, e.j_e);

    let mut roll = 0.0;
    let mut air = 0.0;
    let mut brake = 0.0;
    let mut engine_drag = 0.0;
    let mut idling = 0.0;
    let mut traction = 0.0;
    let mut gravity_work = 0.0;
    for st in &rec.steps {
        roll += st.f_roll.abs() * ds;
        air += st.air_work.abs();
        brake += st.f_b.abs() * ds;
        engine_drag += st.f_drag * ds;
        if !st.z {
            idling += p_idle * st.dt;
        }
        traction += st.f_t * ds;
        gravity_work += st.f_gravity * ds;
    }
    let gear_change = beta_g * rec.gear_changes as f64;
    let total = roll + air + brake + engine_drag + idling + gear_change;
    let energy_input = traction + idling + gear_change;
    let delta_k = rec.final_state.k - rec.steps.first().map_or(rec.final_state.k, |s| s.k);
    let closure = energy_input - (delta_k + total - gravity_work);
    LossBreakdown {
        roll,
        air,
        brake,
        engine_drag,
        idling,
        gear_change,
        total,
        trip_time: rec.trip_time,
        traction,
        energy_input,
        delta_k,
        gravity_work,
        closure_error: closure.abs() / energy_input.abs().max(1.0),
    }
}

impl LossBreakdown {
    /// Category list in reporting order: (name, value [J]).
    pub fn categories(&self) -> [(&'static str, f64); 6] {
        [
            ("roll", self.roll),
            ("air", self.air),
            ("brake", self.brake),
            ("engine_drag", self.engine_drag),
            ("idling", self.idling),
            ("gear_change", self.gear_change),
        ]
    }

    /// Flat key-value serialization (all energies in Joules).
    pub fn to_key_values(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (name, v) in self.categories() {
            let _ = writeln!(out, "{prefix}loss.{name}_j = {v}");
        }
        let _ = writeln!(out, "{prefix}loss.total_j = {}", self.total);
        let _ = writeln!(out, "{prefix}traction_j = {}", self.traction);
        let _ = writeln!(out, "{prefix}energy_input_j = {}", self.energy_input);
        let _ = writeln!(out, "{prefix}trip_time_s = {}", self.trip_time);
        let _ = writeln!(out, "{prefix}delta_k_j = {}", self.delta_k);
        let _ = writeln!(out, "{prefix}gravity_work_j = {}", self.gravity_work);
        let _ = writeln!(out, "{prefix}closure_error = {}", self.closure_error);
        out
    }

    /// Human-readable loss table (energies in MJ).
    pub fn to_text(&self) -> String {
        let mj = 1e-6;
        let mut out = String::new();
        let _ = writeln!(out, "{:<14} {:>10}", "category", "MJ");
        for (name, v) in self.categories() {
            let _ = writeln!(out, "{:<14} {:>10.3}", name, v * mj);
        }
        let _ = writeln!(out, "{:<14} {:>10.3}", "total_losses", self.total * mj);
        let _ = writeln!(out, "{:<14} {:>10.3}", "energy_input", self.energy_input * mj);
        let _ = writeln!(out, "{:<14} {:>10.1}", "trip_time_s", self.trip_time);
        out
    }
}

/// Converts energy [J] to fuel volume [L] with a constant energy density.
pub fn fuel_liters(energy_j: f64, mj_per_liter: f64) -> f64 {
    energy_j / (mj_per_liter * 1e6)
}

/// One policy's row of the comparison.
#[derive(Debug, Clone)]
pub struct ComparisonEntry {
    pub policy: Policy,
    pub breakdown: LossBreakdown,
    /// Energy input as a percentage of the benchmark.
    pub energy_pct: f64,
    /// Trip time as a percentage of the benchmark.
    pub time_pct: f64,
}

/// Cross-policy comparison normalized to the benchmark run.
#[derive(Debug, Clone)]
pub struct PolicyComparison {
    pub entries: Vec<ComparisonEntry>,
    pub benchmark_energy: f64,
    pub benchmark_time: f64,
    /// Soft observation: braking + engine-drag losses of the two
    /// freewheeling policies agree within 15%. Reported, never asserted.
    pub brake_drag_similar: Option<bool>,
}

/// Builds the comparison table. The benchmark entry (or the first record,
/// if no benchmark is present) provides the 100% normalization.
pub fn compare_policies(
    records: &[SimulationRecord],
    p: &VehicleParams,
    e: &EngineParams,
) -> PolicyComparison {
    assert!(!records.is_empty(), "no runs to compare");
    let breakdowns: Vec<LossBreakdown> = records.iter().map(|r| decompose(r, p, e)).collect();
    let base_idx = records
        .iter()
        .position(|r| r.policy == Policy::Benchmark)
        .unwrap_or(0);
    let benchmark_energy = breakdowns[base_idx].energy_input;
    let benchmark_time = breakdowns[base_idx].trip_time;
    let entries = records
        .iter()
        .zip(&breakdowns)
        .map(|(r, b)| ComparisonEntry {
            policy: r.policy,
            breakdown: *b,
            energy_pct: 100.0 * b.energy_input / benchmark_energy,
            time_pct: 100.0 * b.trip_time / benchmark_time,
        })
        .collect::<Vec<_>>();

    let idle = entries
        .iter()
        .find(|en| en.policy == Policy::FreewheelIdle)
        .map(|en| en.breakdown.brake + en.breakdown.engine_drag);
    let off = entries
        .iter()
        .find(|en| en.policy == Policy::FreewheelOff)
        .map(|en| en.breakdown.brake + en.breakdown.engine_drag);
    let brake_drag_similar = match (idle, off) {
        (Some(a), Some(b)) => Some((a - b).abs() <= 0.15 * a.abs().max(b.abs())),
        _ => None,
    };

    PolicyComparison {
        entries,
        benchmark_energy,
        benchmark_time,
        brake_drag_similar,
    }
}

impl PolicyComparison {
    /// Aligned text table: energy and time percentages plus the loss
    /// categories as percent of the benchmark input.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<16}", "");
        for en in &self.entries {
            let _ = write!(out, "{:>16}", en.policy.name());
        }
        out.push('\n');
        let _ = write!(out, "{:<16}", "energy [%]");
        for en in &self.entries {
            let _ = write!(out, "{:>16.1}", en.energy_pct);
        }
        out.push('\n');
        let _ = write!(out, "{:<16}", "time [%]");
        for en in &self.entries {
            let _ = write!(out, "{:>16.1}", en.time_pct);
        }
        out.push('\n');
        for (row, name) in [
            (0, "roll [%]"),
            (1, "air [%]"),
            (2, "brake [%]"),
            (3, "engine drag [%]"),
            (4, "idling [%]"),
            (5, "gear change [%]"),
        ] {
            let _ = write!(out, "{:<16}", name);
            for en in &self.entries {
                let v = en.breakdown.categories()[row].1;
                let _ = write!(out, "{:>16.1}", 100.0 * v / self.benchmark_energy);
            }
            out.push('\n');
        }
        if let Some(similar) = self.brake_drag_similar {
            let _ = writeln!(
                out,
                "note: brake+drag of the freewheeling policies {} within 15%",
                if similar { "agree" } else { "do NOT agree" }
            );
        }
        out
    }

    /// Machine-readable key-value report.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for en in &self.entries {
            let prefix = format!("{}.", en.policy.name());
            let _ = writeln!(out, "{prefix}energy_pct = {}", en.energy_pct);
            let _ = writeln!(out, "{prefix}time_pct = {}", en.time_pct);
            out.push_str(&en.breakdown.to_key_values(&prefix));
        }
        if let Some(similar) = self.brake_drag_similar {
            let _ = writeln!(out, "brake_drag_similar = {similar}");
        }
        out
    }
}
