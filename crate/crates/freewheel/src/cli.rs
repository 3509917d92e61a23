//! Command-line front end.
//!
//! Three subcommands: `simulate` runs one policy over a cycle, `compare`
//! tunes and runs all four policies, `gen-cycle` writes a synthetic cycle.
//! Exit codes: 0 success, 2 configuration/usage error, 3 infeasible
//! problem, 4 solver limit without an incumbent.

use crate::accounting::{compare_policies, decompose, fuel_liters};
use crate::config::{fnv1a, ConfigError, RunConfig};
use crate::corridor::{build_corridor, repair_feasibility, CorridorError, VelocityCorridor};
use crate::cycle::{generate_synthetic_cycle, load_cycle, trim_constant_stretches, CycleError,
    DrivingCycle};
use crate::mpc::{run_mpc, tune_beta_t, MpcConfig, MpcError, SimulationRecord};
use crate::ocp::{Policy, PolicyConfig};
use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_SOLVER_LIMIT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "freewheel",
    about = "Look-ahead freewheeling control of a heavy-duty vehicle",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Configuration file (flat key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Print one solver summary line per step to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one control policy over a driving cycle.
    Simulate {
        /// Driving cycle CSV (s_m,grade,v_ref_mps).
        #[arg(long)]
        cycle: PathBuf,
        /// One of: benchmark, no-freewheel, freewheel-idle, freewheel-off.
        #[arg(long)]
        policy: String,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Dump the first horizon instance as sparse triplets to this file.
        #[arg(long)]
        dump_instance: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Tune trip times and compare all four policies on one cycle.
    Compare {
        #[arg(long)]
        cycle: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Generate a synthetic distribution cycle.
    GenCycle {
        #[arg(long)]
        seed: u64,
        /// Cycle length [km].
        #[arg(long, default_value_t = 5.0)]
        length_km: f64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
}

/// Error wrapper mapping every failure onto an exit code.
#[derive(Debug)]
struct CmdError {
    code: u8,
    message: String,
}

impl CmdError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<CycleError> for CmdError {
    fn from(e: CycleError) -> Self {
        CmdError::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<CorridorError> for CmdError {
    fn from(e: CorridorError) -> Self {
        match e {
            CorridorError::BadSettings(_) => CmdError::new(EXIT_CONFIG, e.to_string()),
            CorridorError::Collapse { .. } => CmdError::new(EXIT_INFEASIBLE, e.to_string()),
        }
    }
}

impl From<MpcError> for CmdError {
    fn from(e: MpcError) -> Self {
        let code = match &e {
            MpcError::BadConfig(_) => EXIT_CONFIG,
            MpcError::LimitWithoutIncumbent { .. } => EXIT_SOLVER_LIMIT,
            MpcError::Solver { .. } => EXIT_SOLVER_LIMIT,
            _ => EXIT_INFEASIBLE,
        };
        CmdError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::new(EXIT_CONFIG, e.to_string())
    }
}

/// Entry point used by the binary.
pub fn run() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    ExitCode::from(run_with_args(&args))
}

/// Testable entry point; returns the process exit code.
pub fn run_with_args(args: &[String]) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Let clap print help/version with status 0; usage errors are
            // configuration errors here.
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate {
            cycle,
            policy,
            out,
            dump_instance,
            common,
        } => cmd_simulate(&cycle, &policy, &out, dump_instance.as_deref(), &common),
        Command::Compare { cycle, out, common } => cmd_compare(&cycle, &out, &common),
        Command::GenCycle {
            seed,
            length_km,
            out,
            common,
        } => cmd_gen_cycle(seed, length_km, &out, &common),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn load_config(common: &CommonOpts) -> Result<RunConfig, CmdError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&common.sets)?;
    if common.verbose {
        cfg.limits.log = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Prepared {
    cycle: DrivingCycle,
    cycle_hash: u64,
}

fn load_and_trim(path: &Path, cfg: &RunConfig) -> Result<Prepared, CmdError> {
    let raw = std::fs::read(path).map_err(|e| {
        CmdError::new(EXIT_CONFIG, format!("cannot open {}: {e}", path.display()))
    })?;
    let cycle_hash = fnv1a(&raw);
    let cycle = load_cycle(path, cfg.delta_s)?;
    let cycle = if cfg.trim_max_len > 0.0 {
        trim_constant_stretches(&cycle, cfg.trim_max_len)
    } else {
        cycle
    };
    Ok(Prepared { cycle, cycle_hash })
}

fn corridor_for(
    policy: &PolicyConfig,
    cycle: &DrivingCycle,
    cfg: &RunConfig,
) -> Result<VelocityCorridor, CmdError> {
    let cor = build_corridor(cycle, &policy.corridor, &cfg.vehicle)?;
    Ok(repair_feasibility(&cor, cycle, &cfg.vehicle, &cfg.engine))
}

fn mpc_config(cfg: &RunConfig, policy: PolicyConfig) -> MpcConfig {
    MpcConfig {
        horizon: cfg.horizon,
        beta_t: cfg.beta_t,
        policy,
        sqp_passes: cfg.sqp_passes,
        mode: cfg.mode,
        limits: cfg.limits.clone(),
        initial_speed: (cfg.initial_speed > 0.0).then_some(cfg.initial_speed),
    }
}

fn write_manifest(
    out_dir: &Path,
    cfg: &RunConfig,
    cycle_hash: u64,
    command: &str,
) -> Result<(), CmdError> {
    let mut text = String::new();
    let _ = writeln!(text, "command = {command}");
    let _ = writeln!(text, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "config_hash = {:016x}", cfg.hash());
    let _ = writeln!(text, "cycle_hash = {cycle_hash:016x}");
    text.push_str(&cfg.to_key_values());
    std::fs::write(out_dir.join("manifest.kv"), text)?;
    Ok(())
}

fn policy_from_name(name: &str) -> Result<Policy, CmdError> {
    Policy::parse(name).ok_or_else(|| {
        let names: Vec<&str> = Policy::ALL.iter().map(|p| p.name()).collect();
        CmdError::new(
            EXIT_CONFIG,
            format!("unknown policy `{name}`; valid names: {}", names.join(", ")),
        )
    })
}

fn write_loss_reports(
    out_dir: &Path,
    rec: &SimulationRecord,
    cfg: &RunConfig,
) -> Result<(), CmdError> {
    let b = decompose(rec, &cfg.vehicle, &cfg.engine);
    let mut text = b.to_text();
    let _ = writeln!(
        text,
        "{:<14} {:>10.3}",
        "fuel_liters",
        fuel_liters(b.energy_input, cfg.fuel_mj_per_liter)
    );
    std::fs::write(out_dir.join("losses.txt"), text)?;
    let mut kv = b.to_key_values("");
    let _ = writeln!(
        kv,
        "fuel_liters = {}",
        fuel_liters(b.energy_input, cfg.fuel_mj_per_liter)
    );
    std::fs::write(out_dir.join("losses.kv"), kv)?;
    Ok(())
}

fn cmd_simulate(
    cycle_path: &Path,
    policy_name: &str,
    out_dir: &Path,
    dump_instance: Option<&Path>,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    let cfg = load_config(common)?;
    let policy = policy_from_name(policy_name)?;
    let prepared = load_and_trim(cycle_path, &cfg)?;
    std::fs::create_dir_all(out_dir)?;

    let pc = PolicyConfig::new(
        policy,
        &cfg.engine,
        cfg.corridor_benchmark,
        cfg.corridor_wide,
    );
    let corridor = corridor_for(&pc, &prepared.cycle, &cfg)?;
    let mpc_cfg = mpc_config(&cfg, pc);

    if let Some(dump_path) = dump_instance {
        let inst = first_instance(&prepared.cycle, &corridor, &cfg, &mpc_cfg)?;
        std::fs::write(dump_path, inst.dump_triplets())?;
    }

    let rec = run_mpc(
        &prepared.cycle,
        &corridor,
        &cfg.vehicle,
        &cfg.engine,
        &mpc_cfg,
    )?;

    std::fs::write(
        out_dir.join("trajectory.csv"),
        rec.to_csv(&cfg.vehicle),
    )?;
    std::fs::write(
        out_dir.join("corridor.csv"),
        corridor.to_csv(&prepared.cycle),
    )?;
    write_loss_reports(out_dir, &rec, &cfg)?;
    write_manifest(
        out_dir,
        &cfg,
        prepared.cycle_hash,
        &format!("simulate --policy {policy_name}"),
    )?;
    println!(
        "{}: {:.1} s, {:.3} MJ input, {} gear changes -> {}",
        policy.name(),
        rec.trip_time,
        decompose(&rec, &cfg.vehicle, &cfg.engine).energy_input * 1e-6,
        rec.gear_changes,
        out_dir.display()
    );
    Ok(())
}

/// Builds the step-0 instance exactly as the closed loop would.
fn first_instance(
    cycle: &DrivingCycle,
    corridor: &VelocityCorridor,
    cfg: &RunConfig,
    mpc_cfg: &MpcConfig,
) -> Result<crate::ocp::OcpInstance, CmdError> {
    use crate::ocp::{build_instance, HorizonSlice};
    let n = mpc_cfg.horizon.min(cycle.steps());
    let v0 = mpc_cfg
        .initial_speed
        .unwrap_or(cycle.samples()[0].v_ref);
    let k0 = cfg
        .vehicle
        .kinetic_energy(v0)
        .clamp(corridor.k_l[0], corridor.k_u[0]);
    let mut k_ref: Vec<f64> = (0..n)
        .map(|j| 0.5 * (corridor.k_l[j] + corridor.k_u[j]))
        .collect();
    k_ref[0] = k0;
    build_instance(
        &HorizonSlice {
            cycle,
            corridor,
            start: 0,
            len: n,
        },
        k0,
        true,
        &k_ref,
        &cfg.vehicle,
        &cfg.engine,
        &mpc_cfg.policy,
        mpc_cfg.beta_t,
        mpc_cfg.mode,
    )
    .map_err(|e| CmdError::new(EXIT_INFEASIBLE, e.to_string()))
}

fn cmd_compare(cycle_path: &Path, out_dir: &Path, common: &CommonOpts) -> Result<(), CmdError> {
    let cfg = load_config(common)?;
    let prepared = load_and_trim(cycle_path, &cfg)?;
    std::fs::create_dir_all(out_dir)?;

    // Benchmark defines the target trip time at the configured penalty.
    let mut records: Vec<SimulationRecord> = Vec::with_capacity(4);
    let bench_pc = PolicyConfig::new(
        Policy::Benchmark,
        &cfg.engine,
        cfg.corridor_benchmark,
        cfg.corridor_wide,
    );
    let bench_cor = corridor_for(&bench_pc, &prepared.cycle, &cfg)?;
    std::fs::write(
        out_dir.join("corridor_benchmark.csv"),
        bench_cor.to_csv(&prepared.cycle),
    )?;
    let bench_rec = run_mpc(
        &prepared.cycle,
        &bench_cor,
        &cfg.vehicle,
        &cfg.engine,
        &mpc_config(&cfg, bench_pc),
    )?;
    let target_time = bench_rec.trip_time;
    records.push(bench_rec);

    for policy in [
        Policy::NoFreewheel,
        Policy::FreewheelIdle,
        Policy::FreewheelOff,
    ] {
        let pc = PolicyConfig::new(
            policy,
            &cfg.engine,
            cfg.corridor_benchmark,
            cfg.corridor_wide,
        );
        let cor = corridor_for(&pc, &prepared.cycle, &cfg)?;
        if policy == Policy::NoFreewheel {
            std::fs::write(
                out_dir.join("corridor_wide.csv"),
                cor.to_csv(&prepared.cycle),
            )?;
        }
        let tuned = tune_beta_t(
            target_time,
            &prepared.cycle,
            &cor,
            &cfg.vehicle,
            &cfg.engine,
            &mpc_config(&cfg, pc),
        )?;
        records.push(tuned.record);
    }

    for rec in &records {
        std::fs::write(
            out_dir.join(format!("trajectory_{}.csv", rec.policy.name())),
            rec.to_csv(&cfg.vehicle),
        )?;
    }
    let cmp = compare_policies(&records, &cfg.vehicle, &cfg.engine);
    let table = cmp.to_text_table();
    std::fs::write(out_dir.join("comparison.txt"), &table)?;
    std::fs::write(out_dir.join("comparison.kv"), cmp.to_key_values())?;
    write_manifest(out_dir, &cfg, prepared.cycle_hash, "compare")?;
    print!("{table}");
    Ok(())
}

fn cmd_gen_cycle(
    seed: u64,
    length_km: f64,
    out_path: &Path,
    common: &CommonOpts,
) -> Result<(), CmdError> {
    let cfg = load_config(common)?;
    if !(length_km > 0.0) {
        return Err(CmdError::new(EXIT_CONFIG, "length must be positive"));
    }
    let mut spec = cfg.generator.clone();
    spec.length_m = length_km * 1000.0;
    spec.delta_s = cfg.delta_s;
    let cycle = generate_synthetic_cycle(seed, &spec);
    if let Some(dir) = out_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    cycle.save(out_path)?;
    println!(
        "wrote {} ({} samples, {:.1} km)",
        out_path.display(),
        cycle.len(),
        cycle.length_m() / 1000.0
    );
    Ok(())
}
