//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::powertrain::{agv_spec_table, reference_figures, size_battery_pack, AgvParams, Chemistry, REFERENCE_SINGLE_MOTOR};
use crate::sim::{compute_metrics, replay_check, run_with, RunOptions, Scenario, SimError, Trace};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "quayfleet", version, about = "Container terminal AGV sizing and fleet simulation")]
pub struct CliConfig {
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drivetrain sizing per container class, with deviation from reference figures.
    Size {
        /// JSON file with vehicle parameters; defaults otherwise.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Battery pack from cell chemistry, bus voltage and required energy.
    Battery { chemistry: String, voltage_v: f64, energy_wh: f64 },
    /// Run a scenario and print its metrics.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for trace.csv and metrics.json (and frames.hex).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this many consecutive seeds instead of one.
        #[arg(long)]
        batch: Option<u64>,
        /// Write every encoded message frame to the output directory.
        #[arg(long, requires = "out")]
        dump_frames: bool,
    },
    /// Run a scenario twice and compare trace hashes.
    ReplayCheck {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Metrics of a recorded trace.
    Report { trace: PathBuf },
}

struct Failure(i32, String);

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure(EXIT_INVALID, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(EXIT_USAGE, format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| Failure(EXIT_USAGE, format!("cannot write {}: {e}", path.display())))
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut sc = Scenario::from_json(&read(path)?)?;
    if let Some(s) = seed {
        sc.engine.seed = s;
    }
    Ok(sc)
}

fn pct(ours: f64, theirs: f64) -> f64 {
    (ours - theirs) / theirs * 100.0
}

fn size(params: &AgvParams, format: Format, out: &mut dyn Write) -> std::io::Result<()> {
    let rows = agv_spec_table(params);
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows).expect("rows serialize"))?,
        Format::Csv => {
            writeln!(out, "class,force_kN,torque_kNm,ref_torque_kNm,torque_dev_pct,power_kW,ref_power_kW,power_dev_pct,wheel_rpm,ref_wheel_rpm")?;
            for r in &rows {
                let (rt, rp, rs) = reference_figures(r.container);
                writeln!(
                    out,
                    "{},{:.3},{:.3},{rt},{:.2},{:.3},{rp},{:.2},{:.2},{}",
                    r.container.label(),
                    r.force_n / 1e3,
                    r.total.torque_nm / 1e3,
                    pct(r.total.torque_nm / 1e3, rt),
                    r.total.power_w / 1e3,
                    pct(r.total.power_w / 1e3, rp),
                    r.total.speed_rpm,
                    rs.map_or(String::new(), |v| v.to_string())
                )?;
            }
        }
        Format::Table => {
            writeln!(
                out,
                "{:<14} {:>9} {:>11} {:>6} {:>8} {:>10} {:>6} {:>8} {:>9} {:>6}",
                "class", "force kN", "torque kNm", "ref", "dev %", "power kW", "ref", "dev %", "wheel rpm", "ref"
            )?;
            for r in &rows {
                let (rt, rp, rs) = reference_figures(r.container);
                writeln!(
                    out,
                    "{:<14} {:>9.2} {:>11.2} {:>6.0} {:>+8.2} {:>10.2} {:>6.0} {:>+8.2} {:>9.2} {:>6}",
                    r.container.label(),
                    r.force_n / 1e3,
                    r.total.torque_nm / 1e3,
                    rt,
                    pct(r.total.torque_nm / 1e3, rt),
                    r.total.power_w / 1e3,
                    rp,
                    pct(r.total.power_w / 1e3, rp),
                    r.total.speed_rpm,
                    rs.map_or("-".to_string(), |v| format!("{v:.0}"))
                )?;
            }
            let first = &rows[0];
            writeln!(
                out,
                "\nper wheel (x{}): {:.2} kW, {:.2} kNm, {:.2} rpm",
                first.per_wheel.motor_count,
                first.per_wheel.power_w / 1e3,
                first.per_wheel.torque_nm / 1e3,
                first.per_wheel.speed_rpm
            )?;
            writeln!(
                out,
                "single motor, {}:1 reducer: {:.2} kNm, {:.1} rpm (ref {:.0} rpm, {:+.2} %)",
                first.single_geared.gear_ratio,
                first.single_geared.torque_nm / 1e3,
                first.single_geared.speed_rpm,
                REFERENCE_SINGLE_MOTOR.1,
                pct(first.single_geared.speed_rpm, REFERENCE_SINGLE_MOTOR.1)
            )?;
        }
    }
    Ok(())
}

fn dispatch(cfg: CliConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure(EXIT_USAGE, format!("output error: {e}"));
    match cfg.command {
        Command::Size { params } => {
            let p = match params {
                Some(path) => serde_json::from_str::<AgvParams>(&read(&path)?).map_err(|e| Failure(EXIT_INVALID, format!("bad parameters: {e}")))?,
                None => AgvParams::default(),
            };
            p.validate().map_err(|e| Failure(EXIT_INVALID, e.to_string()))?;
            size(&p, cfg.format, out).map_err(io)?;
        }
        Command::Battery { chemistry, voltage_v, energy_wh } => {
            let chem: Chemistry = chemistry.parse().map_err(|e: crate::powertrain::PowertrainError| Failure(EXIT_USAGE, e.to_string()))?;
            if !(voltage_v > 0.0 && energy_wh > 0.0 && voltage_v.is_finite() && energy_wh.is_finite()) {
                return Err(Failure(EXIT_USAGE, "voltage and energy must be positive".into()));
            }
            let pack = size_battery_pack(chem.cell(), voltage_v, energy_wh);
            match cfg.format {
                Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&pack).expect("pack serializes")),
                Format::Csv => writeln!(
                    out,
                    "series,parallel,capacity_kWh,voltage_V\n{},{},{:.1},{:.1}",
                    pack.series_count,
                    pack.parallel_count,
                    pack.capacity_wh / 1000.0,
                    pack.voltage_v
                ),
                Format::Table => writeln!(out, "{}", pack.summary()),
            }
            .map_err(io)?;
        }
        Command::Simulate { scenario, seed, out: dir, batch, dump_frames } => {
            let base = load_scenario(&scenario, seed)?;
            if let Some(d) = &dir {
                std::fs::create_dir_all(d).map_err(|e| Failure(EXIT_USAGE, format!("cannot create {}: {e}", d.display())))?;
            }
            let n = batch.unwrap_or(1).max(1);
            let scenarios: Vec<Scenario> = (0..n)
                .map(|i| {
                    let mut s = base.clone();
                    s.engine.seed = base.engine.seed.wrapping_add(i);
                    s
                })
                .collect();
            let outcomes: Vec<_> = std::thread::scope(|scope| {
                let handles: Vec<_> = scenarios
                    .iter()
                    .map(|s| scope.spawn(move || run_with(s, RunOptions { dump_frames })))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("simulation thread")).collect()
            });
            let mut collided = false;
            for (s, res) in scenarios.iter().zip(outcomes) {
                let o = res?;
                log::info!("seed {} finished at t={:.1}", s.engine.seed, o.end_time);
                collided |= o.metrics.collision_count > 0;
                let tag = if n > 1 { format!("-{}", s.engine.seed) } else { String::new() };
                if let Some(d) = &dir {
                    write_file(&d.join(format!("trace{tag}.csv")), o.trace.to_csv().as_bytes())?;
                    write_file(&d.join(format!("metrics{tag}.json")), serde_json::to_string_pretty(&o.metrics).expect("metrics").as_bytes())?;
                    if dump_frames {
                        let text: String = o.frames.iter().map(|(t, f)| format!("{t:.6} {}\n", hex::encode(f))).collect();
                        write_file(&d.join(format!("frames{tag}.hex")), text.as_bytes())?;
                    }
                }
                match cfg.format {
                    Format::Json => writeln!(out, "{}", serde_json::to_string(&o.metrics).expect("metrics")),
                    Format::Csv => writeln!(
                        out,
                        "{},{},{},{:.3},{:.3},{:.3},{:.3},{}",
                        s.engine.seed,
                        o.metrics.jobs_completed,
                        o.metrics.jobs_failed,
                        o.metrics.makespan_s,
                        o.metrics.throughput_per_h,
                        o.metrics.total_distance_m,
                        o.metrics.total_energy_wh,
                        o.metrics.collision_count
                    ),
                    Format::Table => {
                        if n > 1 {
                            writeln!(out, "seed {}", s.engine.seed).map_err(io)?;
                        }
                        write!(out, "{}", o.metrics.summary())
                    }
                }
                .map_err(io)?;
            }
            if collided {
                return Err(Failure(EXIT_INVARIANT, "collision detected".into()));
            }
        }
        Command::ReplayCheck { scenario, seed } => {
            let sc = load_scenario(&scenario, seed)?;
            let (a, b) = replay_check(&sc)?;
            if a != b {
                writeln!(out, "DIFFERENT {a} {b}").map_err(io)?;
                return Err(Failure(EXIT_INVARIANT, "replay produced a different trace".into()));
            }
            writeln!(out, "IDENTICAL {a}").map_err(io)?;
        }
        Command::Report { trace } => {
            let t = Trace::from_csv(&read(&trace)?).map_err(|e| Failure(EXIT_INVALID, e.to_string()))?;
            let m = compute_metrics(&t).map_err(|e| Failure(EXIT_INVALID, e.to_string()))?;
            match cfg.format {
                Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&m).expect("metrics")),
                _ => write!(out, "{}", m.summary()),
            }
            .map_err(io)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to `err` as one line.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("QUAYFLEET_LOG")).try_init();
    let cfg = match CliConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    match dispatch(cfg, out) {
        Ok(()) => 0,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}
