#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use memristor_core::nalgebra::DVector;
use memristor_core::network::{build_structure, check_index1, Netlist};
use memristor_core::waveform::Waveform;
use memristor_sim::config::{load_device_config, DeviceConfig};
use memristor_sim::device::Device;
use memristor_sim::netlist::{parse_drive, parse_netlist};
use memristor_sim::output::write_outputs;
use memristor_sim::simulate::{run_steady, run_transient, Circuit, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "memsim", version, about = "Memristor device and circuit co-simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the index-1 topology conditions and the consistency of the initial state.
    Check {
        netlist: PathBuf,
        /// Device config; defaults to the memristor's `device=` path.
        #[arg(long)]
        device: Option<PathBuf>,
    },
    /// Transient simulation.
    Run(RunArgs),
    /// Pseudo-time continuation to a steady state with sources frozen at t = 0.
    Steady(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Netlist; may be omitted in drive mode.
    netlist: Option<PathBuf>,
    #[arg(long)]
    device: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    k_trunc: Option<f64>,
    #[arg(long)]
    gummel_tol: Option<f64>,
    #[arg(long)]
    repair_consistency: bool,
    /// Drive terminal 1 directly (`SIN:amp,freq` or `DC:v`) instead of the circuit.
    #[arg(long, value_parser = parse_drive)]
    drive: Option<Waveform>,
    #[arg(long)]
    fields_every: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn read_netlist(path: &Path) -> Result<Netlist> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_netlist(&text).with_context(|| format!("{}", path.display()))
}

/// The device config named by `--device`, else by the netlist's memristor,
/// resolved against the netlist's directory.
fn device_path(netlist: Option<(&Path, &Netlist)>, device: Option<&PathBuf>) -> Result<PathBuf> {
    if let Some(p) = device {
        return Ok(p.clone());
    }
    let Some((path, nl)) = netlist else { bail!("drive mode without a netlist needs --device") };
    let Some(m) = nl.memristor() else { bail!("{}: netlist has no memristor", path.display()) };
    let memristor_core::network::ElementKind::Memristor { device } = &m.kind else { unreachable!() };
    Ok(path.parent().unwrap_or(Path::new(".")).join(device))
}

fn load_config(path: &Path) -> Result<DeviceConfig> {
    load_device_config(path).with_context(|| format!("{}", path.display()))
}

fn vec_text(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check(netlist_path: &Path, device: Option<&PathBuf>) -> Result<bool> {
    let nl = read_netlist(netlist_path)?;
    let st = build_structure(&nl)?;
    let report = check_index1(&st);
    let mut ok = true;
    let witnesses = [
        (report.no_li_cutset, "no LI-cutset", &report.li_cutset_witness),
        (report.no_cv_loop, "no CV-loop", &report.cv_loop_witness),
        (report.terminal_common_mode_fixed, "terminal common mode fixed", &report.common_mode_witness),
    ];
    for (pass, what, witness) in witnesses {
        println!("{:<28} {}", what, if pass { "ok" } else { "FAILED" });
        if let Some(w) = witness {
            println!("  witness {}", vec_text(w));
        }
        ok &= pass;
    }
    if !ok {
        return Ok(false);
    }
    let cfg = load_config(&device_path(Some((netlist_path, &nl)), device)?)?;
    let dev = Device::new(&cfg)?;
    let circuit = Circuit::new(&nl, dev.coupling.m)?;
    let c = &circuit.consistency;
    println!("{:<28} {} (residual {:.3e})", "consistent initial state", if c.consistent { "ok" } else { "FAILED" }, c.residual);
    Ok(c.consistent)
}

fn prepare(args: &RunArgs) -> Result<(Device, Mode, DeviceConfig)> {
    let netlist = args.netlist.as_ref().map(|p| read_netlist(p).map(|n| (p.clone(), n))).transpose()?;
    let path = device_path(netlist.as_ref().map(|(p, n)| (p.as_path(), n)), args.device.as_ref())?;
    let mut cfg = load_config(&path)?;
    if let Some(k) = args.k_trunc {
        cfg.k_trunc = Some(k);
    }
    if let Some(tol) = args.gummel_tol {
        cfg.gummel_tol = tol;
    }
    let device = Device::new(&cfg)?;
    let mode = match (args.drive.or(cfg.drive.filter(|_| netlist.is_none())), netlist) {
        (Some(w), _) => Mode::Drive(w),
        (None, Some((_, nl))) => {
            let circuit = Circuit::new(&nl, device.coupling.m)?;
            if !circuit.topology.is_index1() {
                bail!("netlist fails the index-1 checks: {}", circuit.topology.failures().join("; "));
            }
            Mode::Coupled(Box::new(circuit))
        }
        (None, None) => bail!("give a netlist, --drive, or a drive in the device config"),
    };
    Ok((device, mode, cfg))
}

fn run(args: &RunArgs) -> Result<()> {
    let (device, mode, cfg) = prepare(args)?;
    let run = RunConfig {
        dt: args.dt.or(cfg.dt).context("no time step: pass --dt or set [solver] dt")?,
        t_end: args.t_end.or(cfg.t_end).context("no end time: pass --t-end or set [solver] t_end")?,
        fields_every: args.fields_every.or(cfg.fields_every),
        repair: args.repair_consistency,
    };
    let history = run_transient(&device, mode, &run)?;
    let files = write_outputs(&history, &args.out).with_context(|| format!("writing to {}", args.out.display()))?;
    println!("{} steps, {} files in {}", history.rows.len() - 1, files.len(), args.out.display());
    Ok(())
}

fn steady(args: &RunArgs) -> Result<()> {
    let (device, mode, cfg) = prepare(args)?;
    let dt0 = args.dt.or(cfg.dt).unwrap_or(1e-3);
    let out = run_steady(&device, mode, dt0, 1e3, 1e-10, 10_000)?;
    write_outputs(&out.history, &args.out).with_context(|| format!("writing to {}", args.out.display()))?;
    println!("{} pseudo steps, final rate {:.3e}", out.pseudo_steps, out.rate);
    if !(out.rate <= 1e-10) {
        bail!("no steady state reached");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { netlist, device } => match check(netlist, device.as_ref()) {
            Ok(true) => return ExitCode::SUCCESS,
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Run(args) => run(args),
        Command::Steady(args) => steady(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
