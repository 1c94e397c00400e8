//! Field-free Rydberg basis: quantum-defect energies, radial wavefunctions
//! on a shared grid, and weighted radial integrals.
//!
//! Radial functions are solved with the Numerov method on the transformed
//! equation in x = sqrt(r): writing u(r) = sqrt(x)·v(x), the radial equation
//! u'' = [l(l+1)/r^2 - 2/r - 2E] u becomes v'' = G(x) v with
//! G(x) = (4l(l+1) + 3/4)/x^2 - 8 - 8E x^2, uniform in x under the sqrt
//! grid rule. Integration runs inward from r_max where the exponential
//! growth direction is stable.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::units::AU_TIME_S;

pub const DEFAULT_INNER_CUTOFF: f64 = 3.0;

/// l -> delta_l map with provenance. Missing l means hydrogenic (delta = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumDefectTable {
    defects: BTreeMap<u32, f64>,
    pub source_label: String,
}

impl QuantumDefectTable {
    pub fn hydrogenic() -> Self {
        Self { defects: BTreeMap::new(), source_label: "hydrogenic".into() }
    }

    /// The default cesium table shipped with the crate.
    pub fn cesium() -> Self {
        static TEXT: &str = include_str!("../data/cesium.defects");
        Self::parse(TEXT, "cesium (embedded default)").expect("embedded defect table is valid")
    }

    /// Parse the plain-text format: lines `l <integer> delta <decimal>`,
    /// `#` starts a comment. Errors carry the 1-based line number.
    pub fn parse(text: &str, source_label: impl Into<String>) -> Result<Self> {
        let mut defects = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::DefectParse {
                line: line_no,
                msg: msg.into(),
                text: raw.trim().into(),
            };
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 4 || tok[0] != "l" || tok[2] != "delta" {
                return Err(err("expected `l <integer> delta <decimal>`"));
            }
            let l: u32 = tok[1].parse().map_err(|_| err("bad l value"))?;
            let delta: f64 = tok[3].parse().map_err(|_| err("bad delta value"))?;
            if !delta.is_finite() {
                return Err(err("delta must be finite"));
            }
            if delta < 0.0 {
                return Err(Error::NegativeDefect { l, delta });
            }
            if defects.insert(l, delta).is_some() {
                return Err(err("duplicate l entry"));
            }
        }
        Ok(Self { defects, source_label: source_label.into() })
    }

    pub fn delta(&self, l: u32) -> f64 {
        self.defects.get(&l).copied().unwrap_or(0.0)
    }

    pub fn is_hydrogenic(&self) -> bool {
        self.defects.values().all(|&d| d == 0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.defects.iter().map(|(&l, &d)| (l, d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridRule {
    /// r_i = (sqrt(r_min) + i*step)^2 — equidistant phase sampling for
    /// Coulomb waves; the default.
    UniformInSqrtR,
    Uniform,
}

/// Strictly increasing radial grid plus its trapezoid quadrature weights.
#[derive(Debug)]
pub struct RadialGrid {
    rule: GridRule,
    points: Vec<f64>,
    weights: Vec<f64>,
}

pub fn build_grid(r_min: f64, r_max: f64, count: usize, rule: GridRule) -> Result<RadialGrid> {
    if !(r_min.is_finite() && r_max.is_finite()) || r_min <= 0.0 {
        return Err(Error::Grid(format!("bounds must be finite and positive, got [{r_min}, {r_max}]")));
    }
    if r_max <= r_min {
        return Err(Error::Grid(format!("empty range [{r_min}, {r_max}]")));
    }
    if count < 1000 {
        return Err(Error::Grid(format!("count {count} too small (minimum 1000)")));
    }
    let points: Vec<f64> = match rule {
        GridRule::UniformInSqrtR => {
            let x0 = r_min.sqrt();
            let dx = (r_max.sqrt() - x0) / (count - 1) as f64;
            (0..count).map(|i| (x0 + i as f64 * dx).powi(2)).collect()
        }
        GridRule::Uniform => {
            let dr = (r_max - r_min) / (count - 1) as f64;
            (0..count).map(|i| r_min + i as f64 * dr).collect()
        }
    };
    let mut weights = vec![0.0; count];
    for i in 0..count - 1 {
        let half = 0.5 * (points[i + 1] - points[i]);
        weights[i] += half;
        weights[i + 1] += half;
    }
    Ok(RadialGrid { rule, points, weights })
}

impl RadialGrid {
    pub fn rule(&self) -> GridRule {
        self.rule
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Composite trapezoid weights matching `points`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn r_min(&self) -> f64 {
        self.points[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Minimum number of grid points per local de Broglie wavelength for a
    /// bound state of the given energy in the l = 0 Coulomb potential,
    /// sampled over the classically allowed region.
    pub fn points_per_wavelength(&self, energy: f64) -> f64 {
        let mut worst = f64::INFINITY;
        for i in 0..self.points.len() - 1 {
            let r = self.points[i];
            let k2 = 2.0 * (energy + 1.0 / r);
            if k2 <= 0.0 {
                continue;
            }
            let lambda = 2.0 * std::f64::consts::PI / k2.sqrt();
            let spacing = self.points[i + 1] - self.points[i];
            worst = worst.min(lambda / spacing);
        }
        worst
    }
}

/// (n, l, m=0) state with its quantum-defect energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisState {
    pub n: u32,
    pub l: u32,
    pub m: i32,
    pub n_star: f64,
    pub energy: f64,
}

fn check_nl(n: u32, l: u32) -> Result<()> {
    if n < 1 || l >= n {
        return Err(Error::State { n, l, msg: "require n >= 1 and 0 <= l < n".into() });
    }
    Ok(())
}

/// E = -1/(2 (n - delta_l)^2) hartree.
pub fn energy_of(n: u32, l: u32, defects: &QuantumDefectTable) -> Result<f64> {
    check_nl(n, l)?;
    let n_star = n as f64 - defects.delta(l);
    if n_star <= 0.0 {
        return Err(Error::State { n, l, msg: format!("n_star = {n_star} <= 0") });
    }
    Ok(-0.5 / (n_star * n_star))
}

/// Classical Kepler orbit time 2*pi*(n - delta_l)^3 in a.u.
pub fn kepler_time(n: u32, l: u32, defects: &QuantumDefectTable) -> Result<f64> {
    energy_of(n, l, defects)?;
    let n_star = n as f64 - defects.delta(l);
    Ok(2.0 * std::f64::consts::PI * n_star.powi(3))
}

/// Kepler time in seconds.
pub fn kepler_time_seconds(n: u32, l: u32, defects: &QuantumDefectTable) -> Result<f64> {
    Ok(kepler_time(n, l, defects)? * AU_TIME_S)
}

impl BasisState {
    pub fn new(n: u32, l: u32, defects: &QuantumDefectTable) -> Result<Self> {
        let energy = energy_of(n, l, defects)?;
        Ok(Self { n, l, m: 0, n_star: n as f64 - defects.delta(l), energy })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Hydrogenic,
    QuantumDefect,
}

/// Radial function of one state, stored as u(r) = r*R(r) on the grid.
#[derive(Debug, Clone)]
pub struct RadialWavefunction {
    pub state: BasisState,
    grid: Arc<RadialGrid>,
    u: Vec<f64>,
    pub inner_cutoff: f64,
}

impl RadialWavefunction {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    /// u(r_i) = r_i * R(r_i); all radial integrals reduce to ∫ u_a w u_b dr.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// R(r_i).
    pub fn r_values(&self) -> Vec<f64> {
        self.u.iter().zip(self.grid.points()).map(|(u, r)| u / r).collect()
    }

    /// Radial nodes: sign changes of u between nonzero samples.
    pub fn node_count(&self) -> usize {
        let mut nodes = 0;
        let mut last = 0.0f64;
        for &v in &self.u {
            if v == 0.0 {
                continue;
            }
            if last != 0.0 && v.signum() != last.signum() {
                nodes += 1;
            }
            last = v;
        }
        nodes
    }
}

// Numerov inward sweep for v'' = G v, seeded at the outer boundary. The
// solution grows by hundreds of orders of magnitude through the outer
// forbidden region; the computed suffix is rescaled whenever it threatens
// overflow (uniform scaling preserves the linear recurrence).
fn numerov_inward(g: &[f64], h: f64) -> Vec<f64> {
    let n = g.len();
    let h2 = h * h / 12.0;
    let mut v = vec![0.0; n];
    v[n - 1] = 0.0;
    v[n - 2] = 1e-20;
    for i in (1..n - 1).rev() {
        let num = 2.0 * v[i] * (1.0 + 5.0 * h2 * g[i]) - v[i + 1] * (1.0 - h2 * g[i + 1]);
        v[i - 1] = num / (1.0 - h2 * g[i - 1]);
        if v[i - 1].abs() > 1e250 {
            for w in v[i - 1..].iter_mut() {
                *w *= 1e-250;
            }
        }
    }
    let peak = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if peak > 0.0 {
        for w in v.iter_mut() {
            *w /= peak;
        }
    }
    v
}

// Outward sweep from two seed values up to index `stop` (inclusive).
fn numerov_outward(g: &[f64], h: f64, v0: f64, v1: f64, stop: usize) -> Vec<f64> {
    let h2 = h * h / 12.0;
    let mut v = vec![0.0; stop + 1];
    v[0] = v0;
    v[1] = v1;
    for i in 1..stop {
        let num = 2.0 * v[i] * (1.0 + 5.0 * h2 * g[i]) - v[i - 1] * (1.0 - h2 * g[i - 1]);
        v[i + 1] = num / (1.0 - h2 * g[i + 1]);
    }
    v
}

// Regular Coulomb solution near the origin: u = r^(l+1) * sum c_k r^k with
// c_0 = 1, c_k = (-2 c_{k-1} - 2E c_{k-2}) / (k (k + 2l + 1)).
fn coulomb_series_u(r: f64, l: u32, energy: f64, terms: usize) -> f64 {
    let mut c_km1 = 1.0;
    let mut c_km2 = 0.0;
    let mut sum = 1.0;
    let mut r_pow = 1.0;
    for k in 1..terms {
        let ck = (-2.0 * c_km1 - 2.0 * energy * c_km2) / (k as f64 * (k as f64 + 2.0 * l as f64 + 1.0));
        r_pow *= r;
        sum += ck * r_pow;
        c_km2 = c_km1;
        c_km1 = ck;
    }
    r.powi(l as i32 + 1) * sum
}

/// Solve one radial function on the grid.
///
/// Hydrogenic mode integrates inward, then replaces everything below the
/// inner classical turning point with an outward integration seeded by the
/// regular Coulomb series, matched just inside the allowed region — the
/// inward sweep alone picks up the irregular r^(-l) solution there.
/// Quantum-defect mode keeps the inward sweep, truncates at the |v| minimum
/// inside the forbidden region where core-repulsion divergence sets in, and
/// zeroes everything below `inner_cutoff`.
pub fn solve_radial(
    state: BasisState,
    grid: &Arc<RadialGrid>,
    mode: SolveMode,
    inner_cutoff: f64,
) -> Result<RadialWavefunction> {
    let (n, l) = (state.n, state.l);
    check_nl(n, l)?;
    if state.energy >= 0.0 {
        return Err(Error::Unbound { n, l, energy: state.energy });
    }
    if grid.rule() != GridRule::UniformInSqrtR {
        return Err(Error::Grid("radial solver requires the uniform-in-sqrt-r rule".into()));
    }
    let turning = 2.0 * state.n_star * state.n_star;
    if grid.r_max() < turning {
        return Err(Error::State {
            n,
            l,
            msg: format!("grid r_max {} below outer turning point {turning:.1}", grid.r_max()),
        });
    }

    let r = grid.points();
    let npts = r.len();
    let x: Vec<f64> = r.iter().map(|ri| ri.sqrt()).collect();
    let h = (x[npts - 1] - x[0]) / (npts - 1) as f64;
    let ll = (4 * l * (l + 1)) as f64 + 0.75;
    let g: Vec<f64> = x
        .iter()
        .map(|&xi| ll / (xi * xi) - 8.0 - 8.0 * state.energy * xi * xi)
        .collect();

    let mut v = numerov_inward(&g, h);

    // First index inside the classically allowed region.
    let inner_turn = g.iter().position(|&gi| gi < 0.0).unwrap_or(0);

    match mode {
        SolveMode::Hydrogenic => {
            let m = (inner_turn + 2).min(npts - 2);
            let v0 = coulomb_series_u(r[0], l, state.energy, 12) / x[0].sqrt();
            let v1 = coulomb_series_u(r[1], l, state.energy, 12) / x[1].sqrt();
            let out = numerov_outward(&g, h, v0, v1, m);
            if out[m] == 0.0 || v[m] == 0.0 {
                return Err(Error::GridTooCoarse { n, l, msg: "matching point degenerate".into() });
            }
            let scale = v[m] / out[m];
            for i in 0..m {
                v[i] = out[i] * scale;
            }
        }
        SolveMode::QuantumDefect => {
            if inner_turn > 2 {
                let mut imin = 0;
                let mut best = f64::INFINITY;
                for (i, &vi) in v[..inner_turn].iter().enumerate() {
                    if vi.abs() < best {
                        best = vi.abs();
                        imin = i;
                    }
                }
                for w in v[..=imin].iter_mut() {
                    *w = 0.0;
                }
            }
        }
    }

    let mut u: Vec<f64> = v.iter().zip(&x).map(|(vi, xi)| vi * xi.sqrt()).collect();
    if mode == SolveMode::QuantumDefect {
        for (ui, &ri) in u.iter_mut().zip(r) {
            if ri < inner_cutoff {
                *ui = 0.0;
            }
        }
    }

    let norm2: f64 = u.iter().zip(grid.weights()).map(|(ui, wi)| wi * ui * ui).sum();
    if !(norm2 > 1e-300) {
        return Err(Error::NormUnderflow { n, l });
    }
    let norm = norm2.sqrt();
    for ui in u.iter_mut() {
        *ui /= norm;
    }

    // Fix the overall sign: first substantial lobe positive.
    let peak = u.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if let Some(first) = u.iter().find(|ui| ui.abs() > 0.05 * peak) {
        if *first < 0.0 {
            for ui in u.iter_mut() {
                *ui = -*ui;
            }
        }
    }

    let wf = RadialWavefunction {
        state,
        grid: Arc::clone(grid),
        u,
        inner_cutoff: if mode == SolveMode::QuantumDefect { inner_cutoff } else { 0.0 },
    };

    // Node-spacing sanity check: oscillations must be resolved.
    let mut last_node = None;
    let mut prev = 0.0f64;
    for (i, &ui) in wf.u.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        if prev != 0.0 && ui.signum() != prev.signum() {
            if let Some(j) = last_node {
                if i - j < 4 {
                    return Err(Error::GridTooCoarse {
                        n,
                        l,
                        msg: format!("adjacent nodes {j} and {i} closer than 4 points"),
                    });
                }
            }
            last_node = Some(i);
        }
        prev = ui;
    }

    Ok(wf)
}

/// Ordered collection of states + radial functions on one grid.
#[derive(Debug)]
pub struct BasisSet {
    grid: Arc<RadialGrid>,
    states: Vec<BasisState>,
    wavefunctions: Vec<RadialWavefunction>,
    index: HashMap<(u32, u32), usize>,
    pub defects: QuantumDefectTable,
    pub mode: SolveMode,
}

/// Build the basis in canonical order (ascending n, then ascending l,
/// keeping only l < n). The default configuration (n = 21..=31, l_max = 16,
/// cesium defects) yields exactly 187 states.
pub fn build_basis(
    n_range: std::ops::RangeInclusive<u32>,
    l_max: u32,
    defects: &QuantumDefectTable,
    grid: &Arc<RadialGrid>,
    mode: SolveMode,
) -> Result<Arc<BasisSet>> {
    build_basis_with_cutoff(n_range, l_max, defects, grid, mode, DEFAULT_INNER_CUTOFF)
}

pub fn build_basis_with_cutoff(
    n_range: std::ops::RangeInclusive<u32>,
    l_max: u32,
    defects: &QuantumDefectTable,
    grid: &Arc<RadialGrid>,
    mode: SolveMode,
    inner_cutoff: f64,
) -> Result<Arc<BasisSet>> {
    if n_range.is_empty() {
        return Err(Error::Domain("empty n range".into()));
    }
    let mut states = Vec::new();
    for n in n_range {
        for l in 0..=l_max.min(n - 1) {
            states.push(BasisState::new(n, l, defects)?);
        }
    }
    let wavefunctions: Vec<RadialWavefunction> = states
        .par_iter()
        .map(|&s| solve_radial(s, grid, mode, inner_cutoff))
        .collect::<Result<_>>()?;
    let index = states.iter().enumerate().map(|(i, s)| ((s.n, s.l), i)).collect();
    Ok(Arc::new(BasisSet {
        grid: Arc::clone(grid),
        states,
        wavefunctions,
        index,
        defects: defects.clone(),
        mode,
    }))
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn wavefunction(&self, i: usize) -> &RadialWavefunction {
        &self.wavefunctions[i]
    }

    pub fn wavefunctions(&self) -> &[RadialWavefunction] {
        &self.wavefunctions
    }

    pub fn position(&self, n: u32, l: u32) -> Option<usize> {
        self.index.get(&(n, l)).copied()
    }

    pub fn require(&self, n: u32, l: u32) -> Result<usize> {
        self.position(n, l).ok_or(Error::UnknownState { n, l })
    }

    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.energy).collect()
    }

    pub fn l_max(&self) -> u32 {
        self.states.iter().map(|s| s.l).max().unwrap_or(0)
    }

    /// Two packets/operators may interoperate only on the same basis object
    /// or a structurally identical one.
    pub fn compatible(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other)
            || (self.states == other.states && Arc::ptr_eq(&self.grid, &other.grid))
    }
}

/// ∫ R_a w(r) R_b r^2 dr = ∫ u_a w(r) u_b dr by composite trapezoid.
pub fn radial_integral(
    a: &RadialWavefunction,
    b: &RadialWavefunction,
    weight: impl Fn(f64) -> f64,
) -> Result<f64> {
    if !Arc::ptr_eq(a.grid(), b.grid()) {
        return Err(Error::GridMismatch);
    }
    let grid = a.grid();
    let mut acc = 0.0;
    for i in 0..grid.len() {
        let w = weight(grid.points()[i]);
        if !w.is_finite() {
            return Err(Error::Domain(format!(
                "weight not finite at r = {}",
                grid.points()[i]
            )));
        }
        acc += grid.weights()[i] * a.u[i] * w * b.u[i];
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn default_grid() -> Arc<RadialGrid> {
        Arc::new(build_grid(0.05, 2600.0, 20000, GridRule::UniformInSqrtR).unwrap())
    }

    fn hydrogen_grid() -> Arc<RadialGrid> {
        Arc::new(build_grid(0.005, 300.0, 20000, GridRule::UniformInSqrtR).unwrap())
    }

    #[test]
    fn grid_shapes() {
        let g = build_grid(0.05, 2600.0, 20000, GridRule::UniformInSqrtR).unwrap();
        assert_eq!(g.len(), 20000);
        assert_relative_eq!(g.points()[0], 0.05);
        assert_relative_eq!(g.r_max(), 2600.0, max_relative = 1e-12);
        assert!(g.points().windows(2).all(|w| w[1] > w[0]));

        let gu = build_grid(0.05, 100.0, 1000, GridRule::Uniform).unwrap();
        assert_relative_eq!(gu.points()[1] - gu.points()[0], 99.95 / 999.0, max_relative = 1e-12);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(build_grid(1.0, 1.0, 2000, GridRule::Uniform).is_err());
        assert!(build_grid(-1.0, 10.0, 2000, GridRule::Uniform).is_err());
        assert!(build_grid(0.05, 2600.0, 999, GridRule::UniformInSqrtR).is_err());
    }

    #[test]
    fn grid_resolves_de_broglie() {
        let g = default_grid();
        let cs = QuantumDefectTable::cesium();
        let e_top = energy_of(31, 0, &cs).unwrap();
        assert!(g.points_per_wavelength(e_top) >= 8.0);
        assert!(g.points_per_wavelength(-0.5) >= 8.0);
    }

    #[test]
    fn energies_match_formula() {
        let hyd = QuantumDefectTable::hydrogenic();
        let cs = QuantumDefectTable::cesium();
        assert_relative_eq!(energy_of(1, 0, &hyd).unwrap(), -0.5);
        assert_relative_eq!(energy_of(26, 1, &hyd).unwrap(), -7.3964e-4, max_relative = 1e-4);
        assert_relative_eq!(energy_of(26, 1, &cs).unwrap(), -9.938e-4, max_relative = 1e-4);
        assert!(energy_of(5, 5, &hyd).is_err());
        assert!(energy_of(3, 0, &cs).is_err()); // n_star < 0 with delta_s = 4.049
    }

    #[test]
    fn kepler_times() {
        let hyd = QuantumDefectTable::hydrogenic();
        let cs = QuantumDefectTable::cesium();
        assert_relative_eq!(kepler_time(1, 0, &hyd).unwrap(), 2.0 * std::f64::consts::PI);
        assert_relative_eq!(kepler_time(26, 1, &hyd).unwrap(), 110430.0, max_relative = 1e-4);
        let tk = kepler_time_seconds(26, 1, &cs).unwrap();
        assert_relative_eq!(tk, 1.71e-12, max_relative = 1e-2);
    }

    #[test]
    fn cesium_table_contents() {
        let cs = QuantumDefectTable::cesium();
        assert_relative_eq!(cs.delta(0), 4.049);
        assert_relative_eq!(cs.delta(1), 3.57);
        assert_relative_eq!(cs.delta(2), 2.47);
        assert_relative_eq!(cs.delta(3), 0.033);
        assert_relative_eq!(cs.delta(4), 0.0);
        assert_relative_eq!(cs.delta(16), 0.0);
        assert!(!cs.is_hydrogenic());
        assert!(QuantumDefectTable::hydrogenic().is_hydrogenic());
    }

    #[test]
    fn defect_parse_errors_name_lines() {
        let bad = "l 0 delta 4.049\nl 1 delta oops\n";
        match QuantumDefectTable::parse(bad, "test") {
            Err(Error::DefectParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let neg = "l 2 delta -0.5\n";
        assert!(matches!(
            QuantumDefectTable::parse(neg, "test"),
            Err(Error::NegativeDefect { l: 2, .. })
        ));
        let dup = "l 1 delta 3.5\nl 1 delta 3.6\n";
        assert!(QuantumDefectTable::parse(dup, "test").is_err());
    }

    #[test]
    fn hydrogen_2p_matches_analytic() {
        let grid = hydrogen_grid();
        let hyd = QuantumDefectTable::hydrogenic();
        let s = BasisState::new(2, 1, &hyd).unwrap();
        let wf = solve_radial(s, &grid, SolveMode::Hydrogenic, 0.0).unwrap();
        let worst = wf
            .u()
            .iter()
            .zip(grid.points())
            .map(|(u, &r)| (u / r - r * (-r / 2.0).exp() / (2.0 * 6.0f64.sqrt())).abs())
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-6, "max |R - analytic| = {worst:e}");
    }

    #[test]
    fn hydrogen_node_rule() {
        let grid = hydrogen_grid();
        let hyd = QuantumDefectTable::hydrogenic();
        for (n, l) in [(5u32, 0u32), (4, 1), (6, 3), (3, 2)] {
            let s = BasisState::new(n, l, &hyd).unwrap();
            let wf = solve_radial(s, &grid, SolveMode::Hydrogenic, 0.0).unwrap();
            assert_eq!(wf.node_count(), (n - l - 1) as usize, "nodes of ({n},{l})");
        }
    }

    #[test]
    fn quantum_defect_26p_outer_peak() {
        let grid = default_grid();
        let cs = QuantumDefectTable::cesium();
        let s = BasisState::new(26, 1, &cs).unwrap();
        let wf = solve_radial(s, &grid, SolveMode::QuantumDefect, 3.0).unwrap();
        // Probability density u^2 peaks one Airy width inside the classical
        // turning point 2 n_star^2 = 1006.
        let peak_idx = (0..grid.len())
            .max_by(|&a, &b| {
                (wf.u()[a] * wf.u()[a]).partial_cmp(&(wf.u()[b] * wf.u()[b])).unwrap()
            })
            .unwrap();
        let r_peak = grid.points()[peak_idx];
        let turning = 2.0 * s.n_star * s.n_star;
        assert!(r_peak < turning);
        assert!((r_peak - turning).abs() / turning < 0.10, "peak at {r_peak}");
    }

    #[test]
    fn envelope_decays_past_turning_point() {
        let grid = default_grid();
        let cs = QuantumDefectTable::cesium();
        let s = BasisState::new(26, 1, &cs).unwrap();
        let wf = solve_radial(s, &grid, SolveMode::QuantumDefect, 3.0).unwrap();
        let turning = 2.0 * s.n_star * s.n_star;
        let start = grid.points().iter().position(|&r| r > turning).unwrap();
        let tail: Vec<f64> = wf.u()[start..].iter().map(|u| u.abs()).collect();
        assert!(tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn unbound_state_rejected() {
        let grid = default_grid();
        let s = BasisState { n: 10, l: 0, m: 0, n_star: 10.0, energy: 0.1 };
        assert!(matches!(
            solve_radial(s, &grid, SolveMode::Hydrogenic, 0.0),
            Err(Error::Unbound { .. })
        ));
    }

    #[test]
    fn default_basis_has_187_states() {
        let grid = default_grid();
        let cs = QuantumDefectTable::cesium();
        let basis = build_basis(21..=31, 16, &cs, &grid, SolveMode::QuantumDefect).unwrap();
        assert_eq!(basis.len(), 187);
        // canonical order: ascending n, then l
        let states = basis.states();
        for w in states.windows(2) {
            assert!((w[0].n, w[0].l) < (w[1].n, w[1].l));
        }
        assert_eq!(basis.position(26, 1), Some(5 * 17 + 1));
    }

    #[test]
    fn register_subspace_basis() {
        let grid = default_grid();
        let cs = QuantumDefectTable::cesium();
        let basis = build_basis(24..=29, 1, &cs, &grid, SolveMode::QuantumDefect).unwrap();
        // 6 n-values x (l = 0, 1)
        assert_eq!(basis.len(), 12);
    }

    #[test]
    fn small_hydrogen_counts() {
        let grid = hydrogen_grid();
        let hyd = QuantumDefectTable::hydrogenic();
        let b = build_basis(1..=3, 2, &hyd, &grid, SolveMode::Hydrogenic).unwrap();
        assert_eq!(b.len(), 6); // 1s, 2s, 2p, 3s, 3p, 3d
        let b5 = build_basis(5..=5, 4, &hyd, &grid, SolveMode::Hydrogenic).unwrap();
        assert_eq!(b5.len(), 5);
    }

    #[test]
    fn gram_matrix_within_tolerance() {
        let grid = default_grid();
        let cs = QuantumDefectTable::cesium();
        let basis = build_basis(21..=31, 2, &cs, &grid, SolveMode::QuantumDefect).unwrap();
        let mut worst = 0.0f64;
        for a in 0..basis.len() {
            for b in 0..basis.len() {
                let (sa, sb) = (basis.states()[a], basis.states()[b]);
                if sa.l != sb.l {
                    continue;
                }
                let g = radial_integral(basis.wavefunction(a), basis.wavefunction(b), |_| 1.0)
                    .unwrap();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        assert!(worst < 2e-3, "worst Gram deviation {worst:e}");
    }

    #[test]
    fn normalization_and_orthogonality_hydrogenic() {
        let grid = hydrogen_grid();
        let hyd = QuantumDefectTable::hydrogenic();
        let b = build_basis(1..=3, 1, &hyd, &grid, SolveMode::Hydrogenic).unwrap();
        let i2p = b.require(2, 1).unwrap();
        let i3p = b.require(3, 1).unwrap();
        let norm = radial_integral(b.wavefunction(i2p), b.wavefunction(i2p), |_| 1.0).unwrap();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-8);
        let ortho = radial_integral(b.wavefunction(i2p), b.wavefunction(i3p), |_| 1.0).unwrap();
        assert_abs_diff_eq!(ortho, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn hydrogen_dipole_radial_integral() {
        let grid = hydrogen_grid();
        let hyd = QuantumDefectTable::hydrogenic();
        let b = build_basis(1..=2, 1, &hyd, &grid, SolveMode::Hydrogenic).unwrap();
        let r10 = b.wavefunction(b.require(1, 0).unwrap());
        let r21 = b.wavefunction(b.require(2, 1).unwrap());
        let integral = radial_integral(r10, r21, |r| r).unwrap();
        // 128*sqrt(6)/243; the angular factor 1/sqrt(3) is applied elsewhere.
        assert_relative_eq!(integral, 128.0 * 6.0f64.sqrt() / 243.0, max_relative = 1e-4);
    }

    #[test]
    fn radial_integral_rejects_grid_mismatch() {
        let hyd = QuantumDefectTable::hydrogenic();
        let g1 = hydrogen_grid();
        let g2 = hydrogen_grid();
        let s = BasisState::new(2, 1, &hyd).unwrap();
        let a = solve_radial(s, &g1, SolveMode::Hydrogenic, 0.0).unwrap();
        let b = solve_radial(s, &g2, SolveMode::Hydrogenic, 0.0).unwrap();
        assert!(matches!(radial_integral(&a, &b, |_| 1.0), Err(Error::GridMismatch)));
    }

    #[test]
    fn grid_refinement_converges() {
        let hyd = QuantumDefectTable::hydrogenic();
        let mut vals = Vec::new();
        for count in [20000usize, 40000] {
            let grid = Arc::new(build_grid(0.005, 300.0, count, GridRule::UniformInSqrtR).unwrap());
            let b = build_basis(1..=2, 1, &hyd, &grid, SolveMode::Hydrogenic).unwrap();
            let r10 = b.wavefunction(b.require(1, 0).unwrap());
            let r21 = b.wavefunction(b.require(2, 1).unwrap());
            vals.push(radial_integral(r10, r21, |r| r).unwrap());
        }
        assert!((vals[1] - vals[0]).abs() / vals[0].abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn energy_increases_with_n(n in 2u32..60) {
            let cs = QuantumDefectTable::cesium();
            let lo = energy_of(n, 1, &cs);
            let hi = energy_of(n + 1, 1, &cs);
            if let (Ok(lo), Ok(hi)) = (lo, hi) {
                prop_assert!(hi > lo);
            }
        }

        #[test]
        fn kepler_scales_cubically(n in 5u32..60, delta in 0.0f64..2.0) {
            let table = QuantumDefectTable::parse(
                &format!("l 0 delta {delta}"), "prop").unwrap();
            let t = kepler_time(n, 0, &table).unwrap();
            let n_star = n as f64 - delta;
            prop_assert!((t / (2.0 * std::f64::consts::PI) - n_star.powi(3)).abs() < 1e-6 * n_star.powi(3));
        }
    }
}
