//! Strict TOML run configuration: unknown keys are rejected, every physical
//! quantity carries a unit in the file, and everything is converted to
//! atomic units here so the rest of the binary never sees a unit string.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use rydreg::units::{FIELD_AU_V_PER_CM, FS, PS};
use rydreg::{
    build_basis, build_grid, impulse_coefficient, tau_for_fwhm, BasisSet, GridRule,
    QuantumDefectTable, RegisterSpec, SolveMode,
};

/// Spectroscopic letters indexed by l (j, p, s reruns skipped per convention).
const L_LETTERS: &str = "spdfghiklmnoqrtuv";

pub fn state_label(n: u32, l: u32) -> String {
    match L_LETTERS.chars().nth(l as usize) {
        Some(c) => format!("{n}{c}"),
        None => format!("{n}(l={l})"),
    }
}

pub fn parse_state_label(s: &str) -> Result<(u32, u32)> {
    let s = s.trim();
    let letter = s
        .chars()
        .last()
        .ok_or_else(|| anyhow!("empty state label"))?;
    let l = L_LETTERS
        .find(letter)
        .ok_or_else(|| anyhow!("state label `{s}`: unknown orbital letter `{letter}`"))?;
    let n: u32 = s[..s.len() - 1]
        .parse()
        .with_context(|| format!("state label `{s}`: bad principal quantum number"))?;
    Ok((n, l as u32))
}

// ---------------------------------------------------------------------------
// Quantities with units

fn split_quantity(s: &str) -> Result<(f64, String)> {
    let t = s.trim();
    let split = t
        .find(|c: char| c.is_whitespace())
        .ok_or_else(|| anyhow!("`{s}`: expected `<number> <unit>`"))?;
    let value: f64 = t[..split]
        .parse()
        .with_context(|| format!("`{s}`: bad number"))?;
    Ok((value, t[split..].trim().to_string()))
}

pub fn parse_time(s: &str) -> Result<f64> {
    let (v, unit) = split_quantity(s)?;
    match unit.as_str() {
        "fs" => Ok(v * FS),
        "ps" => Ok(v * PS),
        "a.u." | "au" => Ok(v),
        other => bail!("`{s}`: `{other}` is not a time unit (use fs, ps or a.u.)"),
    }
}

pub fn parse_length(s: &str) -> Result<f64> {
    let (v, unit) = split_quantity(s)?;
    match unit.as_str() {
        "a.u." | "au" | "bohr" => Ok(v),
        other => bail!("`{s}`: `{other}` is not a length unit (use a.u. or bohr)"),
    }
}

pub fn parse_field(s: &str) -> Result<f64> {
    let (v, unit) = split_quantity(s)?;
    match unit.as_str() {
        "kV/cm" => Ok(v * 1e3 / FIELD_AU_V_PER_CM),
        "V/cm" => Ok(v / FIELD_AU_V_PER_CM),
        "a.u." | "au" => Ok(v),
        other => bail!("`{s}`: `{other}` is not a field unit (use kV/cm, V/cm or a.u.)"),
    }
}

pub fn parse_momentum(s: &str) -> Result<f64> {
    let (v, unit) = split_quantity(s)?;
    match unit.as_str() {
        "a.u." | "au" => Ok(v),
        other => bail!("`{s}`: momentum transfer is specified in a.u., not `{other}`"),
    }
}

// ---------------------------------------------------------------------------
// File schema (everything optional; defaults follow the published setup)

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    basis: Option<BasisBlock>,
    register: Option<RegisterBlock>,
    pulse: Option<PulseBlock>,
    scan: Option<ScanBlock>,
    table: Option<TableBlock>,
    output: Option<OutputBlock>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisBlock {
    n_min: Option<u32>,
    n_max: Option<u32>,
    l_max: Option<u32>,
    /// "cesium", "hydrogenic", or a path to a defect table file.
    defects: Option<String>,
    /// "quantum-defect" or "hydrogenic".
    mode: Option<String>,
    r_min: Option<String>,
    r_max: Option<String>,
    grid_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterBlock {
    states: Option<Vec<String>>,
    weights: Option<Vec<f64>>,
    marked: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PulseBlock {
    e_peak: Option<String>,
    q: Option<String>,
    tau: Option<String>,
    fwhm: Option<String>,
    dt: Option<String>,
    window: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanBlock {
    delays: Option<Vec<String>>,
    delay_start: Option<String>,
    delay_stop: Option<String>,
    delay_step: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableBlock {
    /// [["25p", "2.1 ps"], ...]
    targets: Option<Vec<(String, String)>>,
    search_half_width: Option<String>,
    impulse_step: Option<String>,
    full_step: Option<String>,
    /// "impulse", "full" or "both".
    mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputBlock {
    directory: Option<String>,
    formats: Option<Vec<String>>,
}

// ---------------------------------------------------------------------------
// Resolved configuration (all a.u.)

#[derive(Debug, Clone)]
pub struct ResolvedBasis {
    pub n_min: u32,
    pub n_max: u32,
    pub l_max: u32,
    pub mode: SolveMode,
    pub defects: QuantumDefectTable,
    pub defects_label: String,
    pub r_min: f64,
    pub r_max: f64,
    pub grid_points: usize,
}

#[derive(Debug, Clone)]
pub struct ResolvedPulse {
    pub q: f64,
    pub q_given: bool,
    pub e_peak: f64,
    pub tau: f64,
    pub tau_given: bool,
    pub fwhm: f64,
    pub dt: f64,
    pub window: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TableTargetSpec {
    pub label: String,
    pub marked: (u32, u32),
    pub center: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMode {
    Impulse,
    Full,
    Both,
}

#[derive(Debug, Clone)]
pub struct ResolvedTable {
    pub targets: Vec<TableTargetSpec>,
    pub half_width: f64,
    pub impulse_step: f64,
    pub full_step: f64,
    pub mode: TableMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Pgm,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub basis: ResolvedBasis,
    pub register: RegisterSpec,
    pub pulse: ResolvedPulse,
    /// None means "use the command's default grid".
    pub scan: Option<Vec<f64>>,
    pub table: ResolvedTable,
    pub out_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

fn resolve_basis(block: BasisBlock) -> Result<ResolvedBasis> {
    let mode = match block.mode.as_deref().unwrap_or("quantum-defect") {
        "quantum-defect" | "quantum_defect" => SolveMode::QuantumDefect,
        "hydrogenic" => SolveMode::Hydrogenic,
        other => bail!("basis.mode `{other}` (use quantum-defect or hydrogenic)"),
    };
    let default_defects = match mode {
        SolveMode::QuantumDefect => "cesium",
        SolveMode::Hydrogenic => "hydrogenic",
    };
    let label = block.defects.unwrap_or_else(|| default_defects.to_string());
    let defects = match label.as_str() {
        "cesium" => QuantumDefectTable::cesium(),
        "hydrogenic" => QuantumDefectTable::hydrogenic(),
        path => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading defect file `{path}`"))?;
            QuantumDefectTable::parse(&text, path)
                .with_context(|| format!("defect file `{path}`"))?
        }
    };
    if mode == SolveMode::Hydrogenic && !defects.is_hydrogenic() {
        bail!("hydrogenic mode requires an all-zero defect table (got `{label}`)");
    }
    let basis = ResolvedBasis {
        n_min: block.n_min.unwrap_or(21),
        n_max: block.n_max.unwrap_or(31),
        l_max: block.l_max.unwrap_or(16),
        mode,
        defects,
        defects_label: label,
        r_min: block.r_min.as_deref().map(parse_length).transpose()?.unwrap_or(0.05),
        r_max: block.r_max.as_deref().map(parse_length).transpose()?.unwrap_or(2600.0),
        grid_points: block.grid_points.unwrap_or(20_000),
    };
    if basis.n_min > basis.n_max {
        bail!("basis.n_min {} exceeds basis.n_max {}", basis.n_min, basis.n_max);
    }
    Ok(basis)
}

fn resolve_register(block: RegisterBlock) -> Result<RegisterSpec> {
    let mut spec = match block.states {
        None => RegisterSpec::gaussian_default(),
        Some(labels) => {
            let states = labels
                .iter()
                .map(|s| parse_state_label(s))
                .collect::<Result<Vec<_>>>()?;
            let weights = match block.weights {
                Some(w) => w,
                None => vec![1.0; states.len()],
            };
            if weights.len() != states.len() {
                bail!(
                    "register has {} states but {} weights",
                    states.len(),
                    weights.len()
                );
            }
            RegisterSpec { states, base_amplitudes: weights, marked: Vec::new() }
        }
    };
    if let Some(marks) = block.marked {
        spec.marked = marks
            .iter()
            .map(|s| parse_state_label(s))
            .collect::<Result<Vec<_>>>()?;
    }
    spec.validate()?;
    Ok(spec)
}

fn resolve_pulse(block: Option<PulseBlock>) -> Result<ResolvedPulse> {
    let (block, defaulted) = match block {
        Some(b) => (b, false),
        None => (PulseBlock::default(), true),
    };
    let (q_in, e_in) = (
        block.q.as_deref().map(parse_momentum).transpose()?,
        block.e_peak.as_deref().map(parse_field).transpose()?,
    );
    let (tau_in, fwhm_in) = (
        block.tau.as_deref().map(parse_time).transpose()?,
        block.fwhm.as_deref().map(parse_time).transpose()?,
    );
    if !defaulted {
        if q_in.is_some() == e_in.is_some() {
            bail!("pulse: specify exactly one of `q` and `e_peak`");
        }
        if tau_in.is_some() == fwhm_in.is_some() {
            bail!("pulse: specify exactly one of `tau` and `fwhm`");
        }
    }

    let tau_given = tau_in.is_some();
    let tau = match tau_in {
        Some(t) => t,
        None => tau_for_fwhm(fwhm_in.unwrap_or(440.0 * FS))?,
    };
    let fwhm = rydreg::fwhm_ratio() * tau;
    if !(tau.is_finite() && tau > 0.0) {
        bail!("pulse: tau must be positive");
    }

    let q_given = q_in.is_some() || (defaulted && e_in.is_none());
    let (q, e_peak) = match (q_in, e_in) {
        (Some(q), None) => (q, q / (impulse_coefficient() * tau)),
        (None, Some(e)) => (impulse_coefficient() * e * tau, e),
        (None, None) => {
            let q = rydreg::NOMINAL_KICK;
            (q, q / (impulse_coefficient() * tau))
        }
        (Some(_), Some(_)) => unreachable!("rejected above"),
    };

    let dt = block.dt.as_deref().map(parse_time).transpose()?.unwrap_or(10.0 * FS);
    if !(dt.is_finite() && dt > 0.0) {
        bail!("pulse: dt must be positive");
    }
    let window = block.window.as_deref().map(parse_time).transpose()?;
    Ok(ResolvedPulse { q, q_given, e_peak, tau, tau_given, fwhm, dt, window })
}

fn resolve_scan(block: Option<ScanBlock>) -> Result<Option<Vec<f64>>> {
    let Some(block) = block else { return Ok(None) };
    let grid_keys =
        [&block.delay_start, &block.delay_stop, &block.delay_step].iter().filter(|k| k.is_some()).count();
    match (block.delays, grid_keys) {
        (Some(list), 0) => {
            if list.is_empty() {
                bail!("scan.delays is empty");
            }
            Ok(Some(list.iter().map(|s| parse_time(s)).collect::<Result<_>>()?))
        }
        (None, 3) => {
            let start = parse_time(block.delay_start.as_deref().unwrap())?;
            let stop = parse_time(block.delay_stop.as_deref().unwrap())?;
            let step = parse_time(block.delay_step.as_deref().unwrap())?;
            if !(step > 0.0) || stop < start {
                bail!("scan: need delay_stop >= delay_start and delay_step > 0");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok(Some((0..count).map(|k| start + k as f64 * step).collect()))
        }
        (None, 0) => Ok(None),
        (Some(_), _) => bail!("scan: give either `delays` or the start/stop/step trio, not both"),
        (None, _) => bail!("scan: delay_start, delay_stop and delay_step must appear together"),
    }
}

fn resolve_table(block: Option<TableBlock>) -> Result<ResolvedTable> {
    let block = block.unwrap_or_default();
    let targets = match block.targets {
        Some(list) => list
            .iter()
            .map(|(label, center)| {
                Ok(TableTargetSpec {
                    label: label.clone(),
                    marked: parse_state_label(label)?,
                    center: parse_time(center)?,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => [(25u32, 2.1), (26, 4.2), (27, 4.7)]
            .iter()
            .map(|&(n, ps)| TableTargetSpec {
                label: state_label(n, 1),
                marked: (n, 1),
                center: ps * PS,
            })
            .collect(),
    };
    if targets.is_empty() {
        bail!("table.targets is empty");
    }
    let mode = match block.mode.as_deref().unwrap_or("both") {
        "impulse" => TableMode::Impulse,
        "full" => TableMode::Full,
        "both" => TableMode::Both,
        other => bail!("table.mode `{other}` (use impulse, full or both)"),
    };
    Ok(ResolvedTable {
        targets,
        half_width: block
            .search_half_width
            .as_deref()
            .map(parse_time)
            .transpose()?
            .unwrap_or(0.25 * PS),
        impulse_step: block
            .impulse_step
            .as_deref()
            .map(parse_time)
            .transpose()?
            .unwrap_or(1.0 * FS),
        full_step: block
            .full_step
            .as_deref()
            .map(parse_time)
            .transpose()?
            .unwrap_or(10.0 * FS),
        mode,
    })
}

/// Parse and fully resolve a config. `path = None` uses built-in defaults;
/// `out_override` (the --out flag) wins over output.directory.
pub fn load(path: Option<&std::path::Path>, out_override: Option<PathBuf>) -> Result<Resolved> {
    let file: FileConfig = match path {
        None => FileConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config `{}`", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config `{}`", p.display()))?
        }
    };
    let output = file.output.unwrap_or_default();
    let formats = match output.formats {
        None => vec![OutputFormat::Csv, OutputFormat::Pgm],
        Some(names) => {
            let mut formats = Vec::new();
            for name in &names {
                formats.push(match name.as_str() {
                    "csv" => OutputFormat::Csv,
                    "pgm" => OutputFormat::Pgm,
                    other => bail!("output.formats `{other}` (use csv or pgm)"),
                });
            }
            if formats.is_empty() {
                bail!("output.formats is empty");
            }
            formats
        }
    };
    Ok(Resolved {
        basis: resolve_basis(file.basis.unwrap_or_default())?,
        register: resolve_register(file.register.unwrap_or_default())?,
        pulse: resolve_pulse(file.pulse)?,
        scan: resolve_scan(file.scan)?,
        table: resolve_table(file.table)?,
        out_dir: out_override
            .or_else(|| output.directory.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(".")),
        formats,
    })
}

pub fn build_configured_basis(cfg: &ResolvedBasis) -> Result<Arc<BasisSet>> {
    let grid = Arc::new(build_grid(
        cfg.r_min,
        cfg.r_max,
        cfg.grid_points,
        GridRule::UniformInSqrtR,
    )?);
    Ok(build_basis(
        cfg.n_min..=cfg.n_max,
        cfg.l_max,
        &cfg.defects,
        &grid,
        cfg.mode,
    )?)
}

// ---------------------------------------------------------------------------
// Header echo

fn sci(x: f64) -> String {
    format!("{x:.11e}")
}

/// Comment lines reproducing the fully-resolved physics configuration;
/// prepended to every output file.
pub fn echo_lines(cfg: &Resolved, command: &str, basis_len: usize, with_table: bool) -> Vec<String> {
    let b = &cfg.basis;
    let p = &cfg.pulse;
    let mut lines = vec![
        format!("rydreg {} — command: {command}", env!("CARGO_PKG_VERSION")),
        format!(
            "basis: n = {}..={}, l_max = {}, mode = {}, defects = {}, states = {}",
            b.n_min,
            b.n_max,
            b.l_max,
            match b.mode {
                SolveMode::QuantumDefect => "quantum-defect",
                SolveMode::Hydrogenic => "hydrogenic",
            },
            b.defects_label,
            basis_len
        ),
        format!(
            "grid: sqrt-rule, r_min = {} a.u., r_max = {} a.u., points = {}",
            sci(b.r_min),
            sci(b.r_max),
            b.grid_points
        ),
        format!(
            "register: {}",
            cfg.register
                .states
                .iter()
                .zip(&cfg.register.base_amplitudes)
                .map(|(&(n, l), w)| format!("{}:{}", state_label(n, l), sci(*w)))
                .collect::<Vec<_>>()
                .join(" ")
        ),
        format!(
            "register: marked = {}",
            if cfg.register.marked.is_empty() {
                "none".to_string()
            } else {
                cfg.register
                    .marked
                    .iter()
                    .map(|&(n, l)| state_label(n, l))
                    .collect::<Vec<_>>()
                    .join(" ")
            }
        ),
        format!(
            "pulse: q = {} a.u. ({}), e_peak = {} a.u. ({})",
            sci(p.q),
            if p.q_given { "given" } else { "derived" },
            sci(p.e_peak),
            if p.q_given { "derived" } else { "given" },
        ),
        format!(
            "pulse: tau = {} a.u. ({}), fwhm = {} a.u. ({})",
            sci(p.tau),
            if p.tau_given { "given" } else { "derived" },
            sci(p.fwhm),
            if p.tau_given { "derived" } else { "given" },
        ),
        format!(
            "pulse: dt = {} a.u., window = {}",
            sci(p.dt),
            match p.window {
                Some(w) => format!("{} a.u.", sci(w)),
                None => "20·tau (default)".to_string(),
            }
        ),
    ];
    match &cfg.scan {
        Some(delays) if delays.len() > 8 => lines.push(format!(
            "scan: {} delays, first = {} a.u., last = {} a.u.",
            delays.len(),
            sci(delays[0]),
            sci(delays[delays.len() - 1])
        )),
        Some(delays) => lines.push(format!(
            "scan: delays a.u. = {}",
            delays.iter().map(|&t| sci(t)).collect::<Vec<_>>().join(" ")
        )),
        None => lines.push("scan: command default".to_string()),
    }
    if with_table {
        let t = &cfg.table;
        lines.push(format!(
            "table: targets = {}, half_width = {} a.u., impulse_step = {} a.u., full_step = {} a.u., mode = {}",
            t.targets
                .iter()
                .map(|tt| format!("{}@{}", tt.label, sci(tt.center)))
                .collect::<Vec<_>>()
                .join(" "),
            sci(t.half_width),
            sci(t.impulse_step),
            sci(t.full_step),
            match t.mode {
                TableMode::Impulse => "impulse",
                TableMode::Full => "full",
                TableMode::Both => "both",
            }
        ));
    }
    lines
}
