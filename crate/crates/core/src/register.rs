//! Phase-encoded data register: wave packets over the basis, loading,
//! phase flips (marks), free evolution, populations, and binned readout.

use std::sync::Arc;

use num_complex::Complex64;

use crate::basis::BasisSet;
use crate::error::{Error, Result};

/// Complex amplitudes over a basis, tagged with the a.u. time of the last
/// evolution. Values are immutable; every operation returns a new packet.
#[derive(Debug, Clone)]
pub struct WavePacket {
    basis: Arc<BasisSet>,
    amplitudes: Vec<Complex64>,
    pub time_stamp: f64,
}

impl WavePacket {
    /// Wrap an amplitude vector. The norm may not exceed 1 (+1e-12): basis
    /// truncation only ever removes probability.
    pub fn new(basis: Arc<BasisSet>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(Error::BasisMismatch(format!(
                "amplitude vector has {} entries for a {}-state basis",
                amplitudes.len(),
                basis.len()
            )));
        }
        let packet = Self { basis, amplitudes, time_stamp: 0.0 };
        let n2 = packet.norm_squared();
        if !(n2.is_finite() && n2 <= 1.0 + 1e-12) {
            return Err(Error::Probability(format!("squared norm {n2} exceeds 1")));
        }
        Ok(packet)
    }

    pub(crate) fn from_parts(
        basis: Arc<BasisSet>,
        amplitudes: Vec<Complex64>,
        time_stamp: f64,
    ) -> Self {
        Self { basis, amplitudes, time_stamp }
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude_of(&self, n: u32, l: u32) -> Result<Complex64> {
        Ok(self.amplitudes[self.basis.require(n, l)?])
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &WavePacket) -> Result<Complex64> {
        if !self.basis.compatible(&other.basis) {
            return Err(Error::BasisMismatch("packets live on different bases".into()));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// P_b = |a_b|² in canonical basis order.
    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn population_of(&self, n: u32, l: u32) -> Result<f64> {
        Ok(self.amplitudes[self.basis.require(n, l)?].norm_sqr())
    }

    /// Negate the amplitude of one state; norm unchanged. Involution.
    pub fn phase_flip(&self, n: u32, l: u32) -> Result<WavePacket> {
        let i = self.basis.require(n, l)?;
        let mut amplitudes = self.amplitudes.clone();
        amplitudes[i] = -amplitudes[i];
        Ok(Self::from_parts(Arc::clone(&self.basis), amplitudes, self.time_stamp))
    }

    /// a_b ← a_b e^{−i E_b t}: field-free evolution for a.u. time t.
    /// Norms are preserved exactly; the time stamp advances by t.
    pub fn free_evolve(&self, t: f64) -> WavePacket {
        let amplitudes = self
            .amplitudes
            .iter()
            .zip(self.basis.states())
            .map(|(a, s)| a * Complex64::from_polar(1.0, -s.energy * t))
            .collect();
        Self::from_parts(Arc::clone(&self.basis), amplitudes, self.time_stamp + t)
    }
}

/// Which register states carry the data and with what weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterSpec {
    /// Ordered (n, l) labels; l = 1 for the p-state register.
    pub states: Vec<(u32, u32)>,
    /// Real weights, one per state, all > 0 (normalized at load time).
    pub base_amplitudes: Vec<f64>,
    /// Subset of `states` whose amplitudes are phase-reversed at load.
    pub marked: Vec<(u32, u32)>,
}

impl RegisterSpec {
    /// 24p…29p with the bell-shaped launch weights.
    pub fn gaussian_default() -> Self {
        Self {
            states: (24..=29).map(|n| (n, 1)).collect(),
            base_amplitudes: vec![0.5, 1.0, 1.2, 1.0, 0.7, 0.5],
            marked: Vec::new(),
        }
    }

    /// Equal weights over an n-range of p states.
    pub fn uniform(n_range: std::ops::RangeInclusive<u32>) -> Self {
        let states: Vec<(u32, u32)> = n_range.map(|n| (n, 1)).collect();
        let base_amplitudes = vec![1.0; states.len()];
        Self { states, base_amplitudes, marked: Vec::new() }
    }

    /// Mark the p state of principal quantum number n.
    pub fn with_mark(mut self, n: u32) -> Self {
        self.marked.push((n, 1));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::Register("register has no states".into()));
        }
        if self.base_amplitudes.len() != self.states.len() {
            return Err(Error::Register(format!(
                "{} weights for {} register states",
                self.base_amplitudes.len(),
                self.states.len()
            )));
        }
        if let Some(w) = self.base_amplitudes.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::Register(format!("non-positive weight {w}")));
        }
        for m in &self.marked {
            if !self.states.contains(m) {
                return Err(Error::Register(format!(
                    "marked state ({}, {}) is not a register state",
                    m.0, m.1
                )));
            }
        }
        Ok(())
    }
}

/// Build the initial packet: base weights with marked entries negated,
/// normalized to unit norm; every non-register amplitude zero; t = 0.
pub fn load_register(spec: &RegisterSpec, basis: &Arc<BasisSet>) -> Result<WavePacket> {
    spec.validate()?;
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
    let norm: f64 = spec.base_amplitudes.iter().map(|w| w * w).sum::<f64>().sqrt();
    for (&(n, l), &w) in spec.states.iter().zip(&spec.base_amplitudes) {
        let i = basis.require(n, l)?;
        let sign = if spec.marked.contains(&(n, l)) { -1.0 } else { 1.0 };
        amplitudes[i] = Complex64::new(sign * w / norm, 0.0);
    }
    Ok(WavePacket::from_parts(Arc::clone(basis), amplitudes, 0.0))
}

/// Register-state probabilities in spec order.
pub fn register_probabilities(packet: &WavePacket, spec: &RegisterSpec) -> Result<Vec<f64>> {
    spec.states.iter().map(|&(n, l)| packet.population_of(n, l)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum BinRule {
    /// Merge adjacent states while their n_star gap stays below width/2
    /// (single-linkage), emulating finite readout resolution. A chain of
    /// near-degeneracies can make a bin wider than `width`.
    ByNStarInterval { width: f64 },
    /// Half-open bins [e_i, e_{i+1}) from strictly increasing edges that
    /// must cover every basis n_star; the last bin is closed.
    ExplicitEdges(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct ReadoutBin {
    /// (n, l) of the highest-population member.
    pub label: (u32, u32),
    pub n_star_lo: f64,
    pub n_star_hi: f64,
    pub probability: f64,
    pub members: Vec<(u32, u32)>,
}

/// Group state populations by effective quantum number. The bins partition
/// the basis: probabilities sum to the packet norm.
pub fn readout_binned(packet: &WavePacket, rule: &BinRule) -> Result<Vec<ReadoutBin>> {
    let basis = packet.basis();
    let pops = packet.populations();
    let mut order: Vec<usize> = (0..basis.len()).collect();
    order.sort_by(|&a, &b| {
        basis.states()[a]
            .n_star
            .partial_cmp(&basis.states()[b].n_star)
            .unwrap()
            .then(a.cmp(&b))
    });

    let groups: Vec<Vec<usize>> = match rule {
        BinRule::ByNStarInterval { width } => {
            if !(*width >= 0.0) {
                return Err(Error::Binning(format!("negative bin width {width}")));
            }
            let mut groups: Vec<Vec<usize>> = Vec::new();
            let mut prev = f64::NEG_INFINITY;
            for &i in &order {
                let ns = basis.states()[i].n_star;
                if groups.is_empty() || ns - prev >= width / 2.0 {
                    groups.push(Vec::new());
                }
                groups.last_mut().unwrap().push(i);
                prev = ns;
            }
            groups
        }
        BinRule::ExplicitEdges(edges) => {
            if edges.len() < 2 {
                return Err(Error::Binning("need at least two bin edges".into()));
            }
            if edges.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Binning("bin edges overlap or repeat".into()));
            }
            let lo = basis.states()[order[0]].n_star;
            let hi = basis.states()[*order.last().unwrap()].n_star;
            if edges[0] > lo || *edges.last().unwrap() < hi {
                return Err(Error::Binning(format!(
                    "edges [{}, {}] do not cover n_star range [{lo}, {hi}]",
                    edges[0],
                    edges.last().unwrap()
                )));
            }
            let mut groups = vec![Vec::new(); edges.len() - 1];
            for &i in &order {
                let ns = basis.states()[i].n_star;
                // last bin is closed so the maximum n_star lands inside
                let k = match edges[1..edges.len() - 1]
                    .iter()
                    .position(|&e| ns < e)
                {
                    Some(k) => k,
                    None => edges.len() - 2,
                };
                groups[k].push(i);
            }
            groups.retain(|g| !g.is_empty());
            groups
        }
    };

    let mut bins = Vec::with_capacity(groups.len());
    for group in groups {
        let probability: f64 = group.iter().map(|&i| pops[i]).sum();
        let &best = group
            .iter()
            .max_by(|&&a, &&b| {
                pops[a].partial_cmp(&pops[b]).unwrap().then(b.cmp(&a))
            })
            .unwrap();
        let label_state = basis.states()[best];
        let mut members: Vec<(u32, u32)> =
            group.iter().map(|&i| (basis.states()[i].n, basis.states()[i].l)).collect();
        members.sort();
        bins.push(ReadoutBin {
            label: (label_state.n, label_state.l),
            n_star_lo: basis.states()[group[0]].n_star,
            n_star_hi: basis.states()[*group.last().unwrap()].n_star,
            probability,
            members,
        });
    }
    Ok(bins)
}
