//! Run configuration: a flat `key = value` text format plus CLI overrides.
//!
//! All physical quantities are SI; speed-valued keys additionally accept an
//! explicit `km/h` suffix (`corridor.wide.delta_v = 4 km/h`). Lines
//! starting with `#` are comments. Unknown keys are errors so typos fail
//! loudly. [`RunConfig::to_key_values`] dumps every resolved value in a
//! canonical order, which is what the run manifest hashes.

use crate::corridor::CorridorSettings;
use crate::cycle::GeneratorSpec;
use crate::ocp::DragLinearization;
use crate::solver::{BnbLimits, QpOptions};
use crate::vehicle::{rpm_to_rad, EngineParams, VehicleParams};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;
use thiserror::Error;

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub vehicle: VehicleParams,
    pub engine: EngineParams,
    pub corridor_benchmark: CorridorSettings,
    pub corridor_wide: CorridorSettings,
    pub horizon: usize,
    pub delta_s: f64,
    pub beta_t: f64,
    pub sqp_passes: usize,
    pub mode: DragLinearization,
    pub limits: BnbLimits,
    /// Maximum constant-speed stretch kept at load time [m]; 0 disables.
    pub trim_max_len: f64,
    pub generator: GeneratorSpec,
    /// Initial speed [m/s]; 0 means the cycle's first reference speed.
    pub initial_speed: f64,
    /// Fuel energy density [MJ/L] for the report's volume column.
    pub fuel_mj_per_liter: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            engine: EngineParams::default(),
            corridor_benchmark: CorridorSettings::benchmark(),
            corridor_wide: CorridorSettings::wide(),
            horizon: 60,
            delta_s: 15.0,
            beta_t: 2500.0,
            sqp_passes: 1,
            mode: DragLinearization::McCormick,
            limits: BnbLimits::default(),
            trim_max_len: 1000.0,
            generator: GeneratorSpec::default(),
            initial_speed: 0.0,
            fuel_mj_per_liter: 35.8,
            seed: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{origin}:{line}: {reason}")]
    Parse {
        origin: String,
        line: usize,
        reason: String,
    },
    #[error("invalid override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {reason}")]
    BadValue { key: String, reason: String },
}

fn parse_speed(key: &str, raw: &str) -> Result<f64, ConfigError> {
    let raw = raw.trim();
    let (num, factor) = if let Some(stripped) = raw.strip_suffix("km/h") {
        (stripped.trim(), 1.0 / 3.6)
    } else if let Some(stripped) = raw.strip_suffix("m/s") {
        (stripped.trim(), 1.0)
    } else {
        (raw, 1.0)
    };
    num.parse::<f64>()
        .map(|v| v * factor)
        .map_err(|e| ConfigError::BadValue {
            key: key.to_string(),
            reason: e.to_string(),
        })
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, ConfigError> {
    raw.trim().parse::<f64>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        reason: e.to_string(),
    })
}

fn parse_usize(key: &str, raw: &str) -> Result<usize, ConfigError> {
    raw.trim()
        .parse::<usize>()
        .map_err(|e| ConfigError::BadValue {
            key: key.to_string(),
            reason: e.to_string(),
        })
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(ConfigError::BadValue {
            key: key.to_string(),
            reason: format!("expected true/false, got `{other}`"),
        }),
    }
}

impl RunConfig {
    /// Loads a config file on top of the defaults.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Applies `key = value` lines from `text`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                origin: origin.to_string(),
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| ConfigError::Parse {
                    origin: origin.to_string(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides (e.g. from the command line).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), ConfigError> {
        for ov in overrides {
            let (key, value) = ov
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(ov.clone()))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets a single key. The key set is closed; unknown keys error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "vehicle.mass_kg" => self.vehicle.m = parse_f64(key, value)?,
            "vehicle.wheel_radius_m" => self.vehicle.r_w = parse_f64(key, value)?,
            "vehicle.c_d" => self.vehicle.c_d = parse_f64(key, value)?,
            "vehicle.air_density" => self.vehicle.rho = parse_f64(key, value)?,
            "vehicle.frontal_area_m2" => self.vehicle.a_f = parse_f64(key, value)?,
            "vehicle.c_r" => self.vehicle.c_r = parse_f64(key, value)?,
            "vehicle.gravity" => self.vehicle.g = parse_f64(key, value)?,
            "vehicle.f_t_max_n" => self.vehicle.f_t_max = parse_f64(key, value)?,
            "vehicle.f_b_max_n" => self.vehicle.f_b_max = parse_f64(key, value)?,
            "vehicle.p_max_w" => self.vehicle.p_max = parse_f64(key, value)?,
            "engine.omega_closed_rpm" => self.engine.omega_c = rpm_to_rad(parse_f64(key, value)?),
            "engine.omega_open_rpm" => self.engine.omega_o = rpm_to_rad(parse_f64(key, value)?),
            "engine.t_d0_nm" => self.engine.t_d0 = parse_f64(key, value)?,
            "engine.t_d1_nms" => self.engine.t_d1 = parse_f64(key, value)?,
            "engine.inertia_kgm2" => self.engine.j_e = parse_f64(key, value)?,
            "corridor.benchmark.delta_v" => {
                self.corridor_benchmark.delta_v = parse_speed(key, value)?
            }
            "corridor.benchmark.n_sigma" => {
                self.corridor_benchmark.n_sigma = parse_f64(key, value)?
            }
            "corridor.benchmark.a_l" => self.corridor_benchmark.a_l = parse_f64(key, value)?,
            "corridor.benchmark.a_u" => self.corridor_benchmark.a_u = parse_f64(key, value)?,
            "corridor.wide.delta_v" => self.corridor_wide.delta_v = parse_speed(key, value)?,
            "corridor.wide.n_sigma" => self.corridor_wide.n_sigma = parse_f64(key, value)?,
            "corridor.wide.a_l" => self.corridor_wide.a_l = parse_f64(key, value)?,
            "corridor.wide.a_u" => self.corridor_wide.a_u = parse_f64(key, value)?,
            "mpc.horizon" => self.horizon = parse_usize(key, value)?,
            "mpc.delta_s_m" => self.delta_s = parse_f64(key, value)?,
            "mpc.beta_t_w" => self.beta_t = parse_f64(key, value)?,
            "mpc.sqp_passes" => self.sqp_passes = parse_usize(key, value)?,
            "mpc.drag_linearization" => {
                self.mode = match value {
                    "mccormick" => DragLinearization::McCormick,
                    "frozen" => DragLinearization::FrozenReference,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            reason: format!("expected mccormick|frozen, got `{other}`"),
                        })
                    }
                }
            }
            "solver.max_nodes" => self.limits.max_nodes = parse_usize(key, value)?,
            "solver.abs_gap_j" => self.limits.abs_gap = parse_f64(key, value)?,
            "solver.rel_gap" => self.limits.rel_gap = parse_f64(key, value)?,
            "solver.int_tol" => self.limits.int_tol = parse_f64(key, value)?,
            "solver.kkt_tol" => self.limits.qp.tol = parse_f64(key, value)?,
            "solver.max_iter" => self.limits.qp.max_iter = parse_usize(key, value)?,
            "solver.time_limit_s" => {
                let v = parse_f64(key, value)?;
                self.limits.time_limit =
                    (v > 0.0).then(|| Duration::from_secs_f64(v));
            }
            "solver.log" => self.limits.log = parse_bool(key, value)?,
            "cycle.trim_max_len_m" => self.trim_max_len = parse_f64(key, value)?,
            "generator.length_m" => self.generator.length_m = parse_f64(key, value)?,
            "generator.grade_bound" => self.generator.grade_bound = parse_f64(key, value)?,
            "generator.stretch_min_m" => self.generator.stretch_min_m = parse_f64(key, value)?,
            "generator.stretch_max_m" => self.generator.stretch_max_m = parse_f64(key, value)?,
            "generator.knot_min_m" => self.generator.knot_min_m = parse_f64(key, value)?,
            "generator.knot_max_m" => self.generator.knot_max_m = parse_f64(key, value)?,
            "generator.speed_set" => {
                // Comma-separated speeds; a single trailing unit suffix
                // applies to every element ("30, 50, 70 km/h").
                let (list, factor) = if let Some(s) = value.strip_suffix("km/h") {
                    (s, 1.0 / 3.6)
                } else if let Some(s) = value.strip_suffix("m/s") {
                    (s, 1.0)
                } else {
                    (value, 1.0)
                };
                let mut speeds = Vec::new();
                for tok in list.split(',') {
                    speeds.push(parse_f64(key, tok)? * factor);
                }
                if speeds.is_empty() {
                    return Err(ConfigError::BadValue {
                        key: key.to_string(),
                        reason: "speed set must not be empty".into(),
                    });
                }
                self.generator.speed_set = speeds;
            }
            "sim.initial_speed" => self.initial_speed = parse_speed(key, value)?,
            "report.fuel_mj_per_liter" => self.fuel_mj_per_liter = parse_f64(key, value)?,
            "seed" => {
                self.seed = value.parse::<u64>().map_err(|e| ConfigError::BadValue {
                    key: key.to_string(),
                    reason: e.to_string(),
                })?
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Validates cross-field invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.vehicle.validate().map_err(|e| ConfigError::BadValue {
            key: "vehicle".into(),
            reason: e.to_string(),
        })?;
        self.engine.validate().map_err(|e| ConfigError::BadValue {
            key: "engine".into(),
            reason: e.to_string(),
        })?;
        for (name, set) in [
            ("corridor.benchmark", &self.corridor_benchmark),
            ("corridor.wide", &self.corridor_wide),
        ] {
            set.validate().map_err(|e| ConfigError::BadValue {
                key: name.into(),
                reason: e.to_string(),
            })?;
        }
        if self.horizon < 2 {
            return Err(ConfigError::BadValue {
                key: "mpc.horizon".into(),
                reason: "must be at least 2".into(),
            });
        }
        if !(self.delta_s > 0.0) {
            return Err(ConfigError::BadValue {
                key: "mpc.delta_s_m".into(),
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Canonical dump of every resolved value; the manifest hashes this.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let v = &self.vehicle;
        kv("vehicle.mass_kg", v.m.to_string());
        kv("vehicle.wheel_radius_m", v.r_w.to_string());
        kv("vehicle.c_d", v.c_d.to_string());
        kv("vehicle.air_density", v.rho.to_string());
        kv("vehicle.frontal_area_m2", v.a_f.to_string());
        kv("vehicle.c_r", v.c_r.to_string());
        kv("vehicle.gravity", v.g.to_string());
        kv("vehicle.f_t_max_n", v.f_t_max.to_string());
        kv("vehicle.f_b_max_n", v.f_b_max.to_string());
        kv("vehicle.p_max_w", v.p_max.to_string());
        let e = &self.engine;
        kv("engine.omega_closed_rad_s", e.omega_c.to_string());
        kv("engine.omega_open_rad_s", e.omega_o.to_string());
        kv("engine.t_d0_nm", e.t_d0.to_string());
        kv("engine.t_d1_nms", e.t_d1.to_string());
        kv("engine.inertia_kgm2", e.j_e.to_string());
        for (name, s) in [
            ("benchmark", &self.corridor_benchmark),
            ("wide", &self.corridor_wide),
        ] {
            kv(&format!("corridor.{name}.delta_v"), s.delta_v.to_string());
            kv(&format!("corridor.{name}.n_sigma"), s.n_sigma.to_string());
            kv(&format!("corridor.{name}.a_l"), s.a_l.to_string());
            kv(&format!("corridor.{name}.a_u"), s.a_u.to_string());
        }
        kv("mpc.horizon", self.horizon.to_string());
        kv("mpc.delta_s_m", self.delta_s.to_string());
        kv("mpc.beta_t_w", self.beta_t.to_string());
        kv("mpc.sqp_passes", self.sqp_passes.to_string());
        kv(
            "mpc.drag_linearization",
            match self.mode {
                DragLinearization::McCormick => "mccormick".into(),
                DragLinearization::FrozenReference => "frozen".into(),
            },
        );
        kv("solver.max_nodes", self.limits.max_nodes.to_string());
        kv("solver.abs_gap_j", self.limits.abs_gap.to_string());
        kv("solver.rel_gap", self.limits.rel_gap.to_string());
        kv("solver.int_tol", self.limits.int_tol.to_string());
        kv("solver.kkt_tol", self.limits.qp.tol.to_string());
        kv("solver.max_iter", self.limits.qp.max_iter.to_string());
        kv(
            "solver.time_limit_s",
            self.limits
                .time_limit
                .map_or("0".into(), |d| d.as_secs_f64().to_string()),
        );
        kv("solver.log", self.limits.log.to_string());
        kv("cycle.trim_max_len_m", self.trim_max_len.to_string());
        let g = &self.generator;
        kv("generator.length_m", g.length_m.to_string());
        kv("generator.grade_bound", g.grade_bound.to_string());
        kv(
            "generator.speed_set",
            g.speed_set
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("generator.stretch_min_m", g.stretch_min_m.to_string());
        kv("generator.stretch_max_m", g.stretch_max_m.to_string());
        kv("generator.knot_min_m", g.knot_min_m.to_string());
        kv("generator.knot_max_m", g.knot_max_m.to_string());
        kv("sim.initial_speed", self.initial_speed.to_string());
        kv(
            "report.fuel_mj_per_liter",
            self.fuel_mj_per_liter.to_string(),
        );
        kv("seed", self.seed.to_string());
        out
    }

    /// 64-bit FNV-1a hash of the canonical dump.
    pub fn hash(&self) -> u64 {
        fnv1a(self.to_key_values().as_bytes())
    }

    /// The options struct handed to the QP core.
    pub fn qp_options(&self) -> QpOptions {
        self.limits.qp
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.horizon, 60);
        assert_eq!(cfg.delta_s, 15.0);
    }

    #[test]
    fn parses_speed_units() {
        let mut cfg = RunConfig::default();
        cfg.set("corridor.wide.delta_v", "4 km/h").unwrap();
        assert!((cfg.corridor_wide.delta_v - 4.0 / 3.6).abs() < 1e-12);
        cfg.set("corridor.wide.delta_v", "2.5").unwrap();
        assert_eq!(cfg.corridor_wide.delta_v, 2.5);
        cfg.set("sim.initial_speed", "54 km/h").unwrap();
        assert!((cfg.initial_speed - 15.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.set("vehicle.mass", "1"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn file_text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# comment\n\nvehicle.mass_kg = 30000\nmpc.horizon = 40\nseed = 9\n",
            "<mem>",
        )
        .unwrap();
        assert_eq!(cfg.vehicle.m, 30_000.0);
        assert_eq!(cfg.horizon, 40);
        assert_eq!(cfg.seed, 9);
        assert!(cfg.to_key_values().contains("vehicle.mass_kg = 30000"));
    }

    #[test]
    fn parse_error_reports_line() {
        let mut cfg = RunConfig::default();
        let err = cfg
            .apply_text("vehicle.mass_kg = 26000\nbroken line\n", "<mem>")
            .unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["mpc.beta_t_w=1234".into(), "mpc.beta_t_w=4321".into()])
            .unwrap();
        assert_eq!(cfg.beta_t, 4321.0);
        assert!(cfg.apply_overrides(&["nonsense".into()]).is_err());
    }

    #[test]
    fn speed_set_with_shared_unit() {
        let mut cfg = RunConfig::default();
        cfg.set("generator.speed_set", "30, 50, 70 km/h").unwrap();
        assert_eq!(cfg.generator.speed_set.len(), 3);
        assert!((cfg.generator.speed_set[2] - 70.0 / 3.6).abs() < 1e-12);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "7").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn time_limit_zero_means_none() {
        let mut cfg = RunConfig::default();
        cfg.set("solver.time_limit_s", "0").unwrap();
        assert!(cfg.limits.time_limit.is_none());
        cfg.set("solver.time_limit_s", "1.5").unwrap();
        assert_eq!(cfg.limits.time_limit, Some(Duration::from_secs_f64(1.5)));
    }
}
