//! Retrieval scoring: informational entropy with reservoir accounting,
//! delay scans (quantum carpet), Kepler-ridge predictions, and
//! amplification reports.

use rayon::prelude::*;

use crate::basis::{kepler_time, QuantumDefectTable};
use crate::dynamics::{peak_offset_ratio, propagate, HcpPulse, Propagator};
use crate::error::{Error, Result};
use crate::kick::{apply_kick, KickMatrix};
use crate::register::{load_register, register_probabilities, RegisterSpec, WavePacket};
use crate::units::FS;

// ---------------------------------------------------------------------------
// Entropy

#[derive(Debug, Clone)]
pub struct EntropyReport {
    /// Register probabilities in the order given.
    pub probabilities: Vec<f64>,
    /// Leakage probability folded into one reservoir entry (None when the
    /// report was computed over the register alone).
    pub reservoir: Option<f64>,
    /// S in nats.
    pub entropy: f64,
}

/// S = −Σ p ln p over the given entries, plus the reservoir entry
/// P_res = max(0, 1 − Σp) when requested. Entries with p = 0 contribute
/// exactly 0, so a deterministic distribution scores exactly 0.
pub fn entropy(probabilities: &[f64], include_reservoir: bool) -> Result<EntropyReport> {
    let mut sum = 0.0;
    for &p in probabilities {
        if !(p >= 0.0) {
            return Err(Error::Probability(format!("negative probability {p}")));
        }
        sum += p;
    }
    if sum > 1.0 + 1e-9 {
        return Err(Error::Probability(format!("probabilities sum to {sum} > 1")));
    }
    let mut s = 0.0;
    for &p in probabilities {
        if p > 0.0 {
            s -= p * p.ln();
        }
    }
    let reservoir = if include_reservoir {
        let p_res = (1.0 - sum).max(0.0);
        if p_res > 0.0 {
            s -= p_res * p_res.ln();
        }
        Some(p_res)
    } else {
        None
    };
    Ok(EntropyReport { probabilities: probabilities.to_vec(), reservoir, entropy: s })
}

// ---------------------------------------------------------------------------
// Carpet scan

/// Register populations after kick as a function of the free-evolution
/// delay before it; the raw material of the quantum-carpet plot.
#[derive(Debug, Clone)]
pub struct CarpetScan {
    pub q: f64,
    pub register: RegisterSpec,
    pub defect_label: String,
    delays: Vec<f64>,
    register_probs: Vec<Vec<f64>>,
    all_probs: Option<Vec<Vec<f64>>>,
}

impl CarpetScan {
    /// Delays in a.u., ascending as given.
    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn delays_fs(&self) -> Vec<f64> {
        self.delays.iter().map(|t| t / FS).collect()
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// Register-state probabilities at delay index i, in register order.
    pub fn register_row(&self, i: usize) -> &[f64] {
        &self.register_probs[i]
    }

    /// Full per-state rows if the scan tracked them.
    pub fn all_row(&self, i: usize) -> Option<&[f64]> {
        self.all_probs.as_ref().map(|rows| rows[i].as_slice())
    }

    /// (max − mean) of the register populations per delay: the
    /// redistribution contrast used for ridge detection.
    pub fn contrast(&self) -> Vec<f64> {
        self.register_probs
            .iter()
            .map(|row| {
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &p| m.max(p));
                let mean = row.iter().sum::<f64>() / row.len() as f64;
                max - mean
            })
            .collect()
    }
}

/// For each delay: free_evolve → apply_kick → populations. Delays are
/// evaluated in parallel; rows are assembled in input order, so results
/// are identical for any worker count.
pub fn carpet_scan(
    initial: &WavePacket,
    kick: &KickMatrix,
    delays: &[f64],
    spec: &RegisterSpec,
    track_all_states: bool,
) -> Result<CarpetScan> {
    if let Some(bad) = delays.iter().find(|t| !t.is_finite()) {
        return Err(Error::Domain(format!("delay {bad} not finite")));
    }
    spec.validate()?;
    let rows: Vec<(Vec<f64>, Option<Vec<f64>>)> = delays
        .par_iter()
        .map(|&tau| -> Result<_> {
            let kicked = apply_kick(&initial.free_evolve(tau), kick)?;
            let reg = register_probabilities(&kicked, spec)?;
            let all = track_all_states.then(|| kicked.populations());
            Ok((reg, all))
        })
        .collect::<Result<_>>()?;
    let mut register_probs = Vec::with_capacity(rows.len());
    let mut all_probs = track_all_states.then(Vec::new);
    for (reg, all) in rows {
        register_probs.push(reg);
        if let (Some(dst), Some(src)) = (all_probs.as_mut(), all) {
            dst.push(src);
        }
    }
    Ok(CarpetScan {
        q: kick.q(),
        register: spec.clone(),
        defect_label: initial.basis().defects.source_label.clone(),
        delays: delays.to_vec(),
        register_probs,
        all_probs,
    })
}

/// τ = (k + 1/2)·t_K(n, l) for k = 0..=k_max, in a.u.
pub fn ridge_predictions(
    n_center: u32,
    l: u32,
    defects: &QuantumDefectTable,
    k_max: u32,
) -> Result<Vec<f64>> {
    let t_k = kepler_time(n_center, l, defects)?;
    Ok((0..=k_max).map(|k| (k as f64 + 0.5) * t_k).collect())
}

/// Strict interior local maxima of y(x); returns (x, y) pairs.
pub fn local_maxima(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..ys.len().saturating_sub(1) {
        if ys[i] > ys[i - 1] && ys[i] > ys[i + 1] {
            out.push((xs[i], ys[i]));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Entropy table

#[derive(Debug, Clone, Copy)]
pub struct TableTarget {
    /// Register state to mark (n, l).
    pub marked: (u32, u32),
    /// Center of the delay search window (a.u.).
    pub delay_center: f64,
}

/// How the kick is delivered for a table row.
pub enum TableEngine<'a> {
    /// Sudden-kick matrix.
    Impulse(&'a KickMatrix),
    /// Real-time integration through the finite pulse; the pulse peak is
    /// aligned with the requested delay.
    Full { propagator: &'a Propagator, tau: f64, e_peak: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct DelaySearch {
    /// Half-width of the window around each target's center (a.u.).
    pub half_width: f64,
    /// Scan step (a.u.).
    pub step: f64,
}

impl DelaySearch {
    pub fn new(half_width: f64, step: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width >= 0.0) || !(step.is_finite() && step > 0.0) {
            return Err(Error::Domain(format!(
                "invalid delay search: half_width={half_width}, step={step}"
            )));
        }
        Ok(Self { half_width, step })
    }
}

#[derive(Debug, Clone)]
pub struct TableRow {
    pub marked: (u32, u32),
    /// Delay actually selected within the search window (a.u.).
    pub delay: f64,
    pub entropy: f64,
    /// Register state holding the largest population at that delay.
    pub argmax: (u32, u32),
    /// Whether argmax coincides with the marked state.
    pub matched: bool,
    pub register_probs: Vec<f64>,
    pub reservoir: f64,
}

/// Pulse whose field maximum arrives at `delay`.
pub fn pulse_for_delay(delay: f64, tau: f64, e_peak: f64) -> Result<HcpPulse> {
    HcpPulse::new(e_peak, tau, delay - peak_offset_ratio() * tau)
}

fn evaluate_delay(
    base: &RegisterSpec,
    delay: f64,
    engine: &TableEngine,
    initial: &WavePacket,
) -> Result<(f64, Vec<f64>, f64, (u32, u32))> {
    let out = match engine {
        TableEngine::Impulse(kick) => apply_kick(&initial.free_evolve(delay), kick)?,
        TableEngine::Full { propagator, tau, e_peak } => {
            let pulse = pulse_for_delay(delay, *tau, *e_peak)?;
            let start = initial.free_evolve(pulse.t_start);
            propagate(&start, &pulse, propagator, pulse.t_start, pulse.t_end())?
        }
    };
    let probs = register_probabilities(&out, base)?;
    let report = entropy(&probs, true)?;
    let argmax_idx = (0..probs.len())
        .max_by(|&a, &b| probs[a].partial_cmp(&probs[b]).unwrap())
        .expect("register is non-empty");
    Ok((report.entropy, probs, report.reservoir.unwrap_or(0.0), base.states[argmax_idx]))
}

/// One row per target: the register is loaded with that state marked,
/// evolved to each candidate delay in the search window, kicked, and
/// scored; the entropy-minimizing delay among those whose register argmax
/// equals the marked state is selected (falling back to the global
/// entropy minimum when no delay in the window retrieves the mark).
pub fn entropy_table(
    base: &RegisterSpec,
    targets: &[TableTarget],
    engine: &TableEngine,
    search: &DelaySearch,
    basis: &std::sync::Arc<crate::basis::BasisSet>,
) -> Result<Vec<TableRow>> {
    let mut rows = Vec::with_capacity(targets.len());
    for target in targets {
        if !base.states.contains(&target.marked) {
            return Err(Error::Register(format!(
                "target ({}, {}) is not a register state",
                target.marked.0, target.marked.1
            )));
        }
        let mut spec = base.clone();
        spec.marked = vec![target.marked];
        let initial = load_register(&spec, basis)?;

        let n_steps = (search.half_width / search.step).round() as i64;
        let candidates: Vec<f64> = (-n_steps..=n_steps)
            .map(|k| target.delay_center + k as f64 * search.step)
            .filter(|t| *t >= 0.0)
            .collect();
        if candidates.is_empty() {
            return Err(Error::Domain(format!(
                "no non-negative delays in window around {}",
                target.delay_center
            )));
        }

        let evaluated: Vec<(f64, (f64, Vec<f64>, f64, (u32, u32)))> = candidates
            .par_iter()
            .map(|&delay| -> Result<_> {
                Ok((delay, evaluate_delay(base, delay, engine, &initial)?))
            })
            .collect::<Result<_>>()?;

        let pick = |matched_only: bool| {
            evaluated
                .iter()
                .filter(|(_, (_, _, _, argmax))| !matched_only || *argmax == target.marked)
                .min_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap())
        };
        let (matched, chosen) = match pick(true) {
            Some(row) => (true, row),
            None => (false, pick(false).expect("candidate list non-empty")),
        };
        let (delay, (s, probs, reservoir, argmax)) = (chosen.0, chosen.1.clone());
        rows.push(TableRow {
            marked: target.marked,
            delay,
            entropy: s,
            argmax,
            matched,
            register_probs: probs,
            reservoir,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Amplification report

#[derive(Debug, Clone)]
pub struct AmplificationReport {
    pub marked: (u32, u32),
    pub marked_before: f64,
    pub marked_after: f64,
    /// Marked population over the mean unmarked register population,
    /// after the kick.
    pub ratio: f64,
    /// Register state with the largest post-kick population.
    pub argmax: (u32, u32),
}

pub fn amplification_report(
    before: &WavePacket,
    after: &WavePacket,
    spec: &RegisterSpec,
    marked: (u32, u32),
) -> Result<AmplificationReport> {
    if !spec.states.contains(&marked) {
        return Err(Error::Register(format!(
            "marked state ({}, {}) is not a register state",
            marked.0, marked.1
        )));
    }
    let marked_before = before.population_of(marked.0, marked.1)?;
    let marked_after = after.population_of(marked.0, marked.1)?;
    let probs = register_probabilities(after, spec)?;
    let mut mean_unmarked = 0.0;
    let mut count = 0usize;
    let mut argmax = spec.states[0];
    let mut best = f64::NEG_INFINITY;
    for (&state, &p) in spec.states.iter().zip(&probs) {
        if p > best {
            best = p;
            argmax = state;
        }
        if state != marked {
            mean_unmarked += p;
            count += 1;
        }
    }
    if count > 0 {
        mean_unmarked /= count as f64;
    }
    let ratio = if mean_unmarked > 0.0 { marked_after / mean_unmarked } else { f64::INFINITY };
    Ok(AmplificationReport { marked, marked_before, marked_after, ratio, argmax })
}
