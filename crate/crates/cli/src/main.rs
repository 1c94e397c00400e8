//! `rydreg` — config-driven simulations of an N-state Rydberg data register
//! read out by a terahertz half-cycle pulse.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};

use config::{
    build_configured_basis, echo_lines, state_label, OutputFormat, Resolved, TableMode,
};
use output::{sci, write_csv, write_pgm};
use rydreg::units::{FS, HARTREE_CM, PS};
use rydreg::{
    carpet_scan, dipole_matrix, entropy, entropy_table, kepler_time, kick_matrix, load_register,
    propagate, pulse_for_delay, register_probabilities, ridge_predictions, BasisSet, DelaySearch,
    KickSpec, Propagator, RegisterSpec, TableEngine, TableTarget,
};

#[derive(Parser)]
#[command(name = "rydreg", version, about = "Rydberg register / half-cycle-pulse simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the radial basis and write the state table.
    Basis(RunArgs),
    /// Sudden-kick register readout over the requested delays.
    Kick(RunArgs),
    /// Finite-pulse readout via split-operator time integration.
    Full(RunArgs),
    /// Delay scan (quantum carpet): population matrix, heatmap and ridges.
    Carpet(RunArgs),
    /// Marked-state retrieval table (impulse and/or full integration).
    Table1(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML). Built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.directory from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel scans (0 = automatic).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Assert the run involves no randomness (always true; takes no value).
    #[arg(long, action = ArgAction::SetTrue)]
    seedless: bool,
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Basis(a) => ("basis", a),
        Command::Kick(a) => ("kick", a),
        Command::Full(a) => ("full", a),
        Command::Carpet(a) => ("carpet", a),
        Command::Table1(a) => ("table1", a),
    };
    if args.threads > 0 {
        // ignore "already initialized": only possible in in-process tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global();
    }
    let cfg = config::load(args.config.as_deref(), args.out.clone())?;
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory `{}`", cfg.out_dir.display()))?;
    let basis = build_configured_basis(&cfg.basis)?;
    match name {
        "basis" => cmd_basis(&cfg, &basis),
        "kick" => cmd_kick(&cfg, &basis),
        "full" => cmd_full(&cfg, &basis),
        "carpet" => cmd_carpet(&cfg, &basis),
        "table1" => cmd_table1(&cfg, &basis),
        _ => unreachable!(),
    }
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

fn register_labels(spec: &RegisterSpec) -> Vec<String> {
    spec.states.iter().map(|&(n, l)| state_label(n, l)).collect()
}

fn argmax_label(probs: &[f64], spec: &RegisterSpec) -> String {
    let mut best = 0usize;
    for i in 1..probs.len() {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    let (n, l) = spec.states[best];
    state_label(n, l)
}

fn cmd_basis(cfg: &Resolved, basis: &Arc<BasisSet>) -> Result<()> {
    let header = echo_lines(cfg, "basis", basis.len(), false);
    let columns = ["n", "l", "label", "n_star", "energy_au", "energy_cm"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = basis
        .states()
        .iter()
        .map(|s| {
            vec![
                s.n.to_string(),
                s.l.to_string(),
                state_label(s.n, s.l),
                sci(s.n_star),
                sci(s.energy),
                sci(s.energy * HARTREE_CM),
            ]
        })
        .collect();
    let path = cfg.out_dir.join("basis_states.csv");
    write_csv(&path, &header, &columns, &rows)?;
    report(&path);
    Ok(())
}

/// Population/entropy rows for a list of delays, shared by kick and full.
fn population_rows(
    delays: &[f64],
    spec: &RegisterSpec,
    probs_at: impl Fn(f64) -> Result<Vec<f64>>,
) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::with_capacity(delays.len());
    for &delay in delays {
        let probs = probs_at(delay)?;
        let rep = entropy(&probs, true)?;
        let mut row = vec![sci(delay / FS)];
        row.extend(probs.iter().map(|&p| sci(p)));
        row.push(sci(rep.reservoir.unwrap_or(0.0)));
        row.push(sci(rep.entropy));
        row.push(argmax_label(&probs, spec));
        rows.push(row);
    }
    Ok(rows)
}

fn population_columns(spec: &RegisterSpec) -> Vec<String> {
    let mut columns = vec!["delay_fs".to_string()];
    columns.extend(register_labels(spec));
    columns.extend(["reservoir", "entropy", "argmax"].map(String::from));
    columns
}

/// Default interrogation delays for kick/full when no scan block is given:
/// the three published retrieval delays.
fn default_trio() -> Vec<f64> {
    vec![2.1 * PS, 4.2 * PS, 4.7 * PS]
}

fn cmd_kick(cfg: &Resolved, basis: &Arc<BasisSet>) -> Result<()> {
    let delays = cfg.scan.clone().unwrap_or_else(default_trio);
    let kick = kick_matrix(basis, KickSpec::new(cfg.pulse.q)?)?;
    let packet = load_register(&cfg.register, basis)?;
    let scan = carpet_scan(&packet, &kick, &delays, &cfg.register, false)?;
    let rows = population_rows(&delays, &cfg.register, |delay| {
        let i = delays.iter().position(|&d| d == delay).unwrap();
        Ok(scan.register_row(i).to_vec())
    })?;
    let header = echo_lines(cfg, "kick", basis.len(), false);
    let path = cfg.out_dir.join("kick_populations.csv");
    write_csv(&path, &header, &population_columns(&cfg.register), &rows)?;
    report(&path);
    Ok(())
}

fn cmd_full(cfg: &Resolved, basis: &Arc<BasisSet>) -> Result<()> {
    let delays = cfg.scan.clone().unwrap_or_else(default_trio);
    let prop = Propagator::new(Arc::new(dipole_matrix(basis)?), cfg.pulse.dt)?;
    let packet = load_register(&cfg.register, basis)?;
    let rows = population_rows(&delays, &cfg.register, |delay| {
        let mut pulse = pulse_for_delay(delay, cfg.pulse.tau, cfg.pulse.e_peak)?;
        if let Some(w) = cfg.pulse.window {
            pulse = pulse.with_window(w)?;
        }
        let start = packet.free_evolve(pulse.t_start);
        let out = propagate(&start, &pulse, &prop, pulse.t_start, pulse.t_end())?;
        Ok(register_probabilities(&out, &cfg.register)?)
    })?;
    let header = echo_lines(cfg, "full", basis.len(), false);
    let path = cfg.out_dir.join("full_populations.csv");
    write_csv(&path, &header, &population_columns(&cfg.register), &rows)?;
    report(&path);
    Ok(())
}

fn cmd_carpet(cfg: &Resolved, basis: &Arc<BasisSet>) -> Result<()> {
    let delays = cfg.scan.clone().unwrap_or_else(|| {
        (0..=400).map(|k| k as f64 * 20.0 * FS).collect()
    });
    let kick = kick_matrix(basis, KickSpec::new(cfg.pulse.q)?)?;
    let packet = load_register(&cfg.register, basis)?;
    let scan = carpet_scan(&packet, &kick, &delays, &cfg.register, false)?;
    let header = echo_lines(cfg, "carpet", basis.len(), false);

    let matrix: Vec<Vec<f64>> = (0..scan.len()).map(|i| scan.register_row(i).to_vec()).collect();

    if cfg.formats.contains(&OutputFormat::Csv) {
        let mut columns = vec!["delay_fs".to_string()];
        columns.extend(register_labels(&cfg.register));
        let rows: Vec<Vec<String>> = delays
            .iter()
            .zip(&matrix)
            .map(|(&delay, probs)| {
                let mut row = vec![sci(delay / FS)];
                row.extend(probs.iter().map(|&p| sci(p)));
                row
            })
            .collect();
        let path = cfg.out_dir.join("carpet_populations.csv");
        write_csv(&path, &header, &columns, &rows)?;
        report(&path);

        // ridge overlay: revisit times of the dominant register orbital
        let center = {
            let mut best = 0usize;
            for i in 1..cfg.register.base_amplitudes.len() {
                if cfg.register.base_amplitudes[i] > cfg.register.base_amplitudes[best] {
                    best = i;
                }
            }
            cfg.register.states[best]
        };
        let t_k = kepler_time(center.0, center.1, &basis.defects)?;
        let stop = delays.last().copied().unwrap_or(0.0);
        let k_max = (((stop / t_k) - 0.5).floor().max(0.0)) as u32;
        let times = ridge_predictions(center.0, center.1, &basis.defects, k_max)?;
        let ridge_rows: Vec<Vec<String>> = times
            .iter()
            .enumerate()
            .map(|(k, &t)| vec![k.to_string(), sci(t), sci(t / FS)])
            .collect();
        let columns = ["k", "delay_au", "delay_fs"].map(String::from).to_vec();
        let path = cfg.out_dir.join("carpet_ridges.csv");
        write_csv(&path, &header, &columns, &ridge_rows)?;
        report(&path);
    }

    if cfg.formats.contains(&OutputFormat::Pgm) {
        let path = cfg.out_dir.join("carpet.pgm");
        write_pgm(&path, &header, &matrix)?;
        report(&path);
    }
    Ok(())
}

fn cmd_table1(cfg: &Resolved, basis: &Arc<BasisSet>) -> Result<()> {
    let spec = &cfg.register;
    let targets: Vec<TableTarget> = cfg
        .table
        .targets
        .iter()
        .map(|t| TableTarget { marked: t.marked, delay_center: t.center })
        .collect();

    let run_impulse = cfg.table.mode != TableMode::Full;
    let run_full = cfg.table.mode != TableMode::Impulse;

    let impulse_rows = if run_impulse {
        let kick = kick_matrix(basis, KickSpec::new(cfg.pulse.q)?)?;
        let search = DelaySearch::new(cfg.table.half_width, cfg.table.impulse_step)?;
        Some(entropy_table(spec, &targets, &TableEngine::Impulse(&kick), &search, basis)?)
    } else {
        None
    };
    let full_rows = if run_full {
        let prop = Propagator::new(Arc::new(dipole_matrix(basis)?), cfg.pulse.dt)?;
        let engine = TableEngine::Full {
            propagator: &prop,
            tau: cfg.pulse.tau,
            e_peak: cfg.pulse.e_peak,
        };
        let search = DelaySearch::new(cfg.table.half_width, cfg.table.full_step)?;
        Some(entropy_table(spec, &targets, &engine, &search, basis)?)
    } else {
        None
    };

    let mut header = echo_lines(cfg, "table1", basis.len(), true);
    let initial = load_register(spec, basis)?;
    let s_init = entropy(&register_probabilities(&initial, spec)?, true)?.entropy;
    header.push(format!("register initial entropy = {}", sci(s_init)));

    let mut columns = vec!["marked".to_string(), "center_fs".to_string()];
    if run_impulse {
        columns.extend(
            ["imp_delay_fs", "imp_entropy", "imp_matched", "imp_argmax"].map(String::from),
        );
    }
    if run_full {
        columns.extend(
            ["full_delay_fs", "full_entropy", "full_matched", "full_argmax"].map(String::from),
        );
    }
    let mut rows = Vec::new();
    for (i, target) in cfg.table.targets.iter().enumerate() {
        let mut row = vec![target.label.clone(), sci(target.center / FS)];
        for table in [&impulse_rows, &full_rows].into_iter().flatten() {
            let r = &table[i];
            row.push(sci(r.delay / FS));
            row.push(sci(r.entropy));
            row.push(if r.matched { "1" } else { "0" }.to_string());
            row.push(state_label(r.argmax.0, r.argmax.1));
        }
        rows.push(row);
    }
    let path = cfg.out_dir.join("table1.csv");
    write_csv(&path, &header, &columns, &rows)?;
    report(&path);
    Ok(())
}
