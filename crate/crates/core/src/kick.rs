//! Impulse-limit HCP operator U = e^{+iQz} on the Rydberg basis.
//!
//! Expanding the plane-wave factor in spherical harmonics reduces every
//! matrix element to a finite sum over multipole order λ:
//!   ⟨n′l′0| e^{iQz} |nl0⟩ = Σ_λ i^λ (2λ+1) G(l′,l,λ) ⟨R_{n′l′}| j_λ(Qr) |R_{nl}⟩
//! with λ running over |l−l′| … l+l′ in steps of two (parity selection).
//! Even-Δl elements are purely real, odd-Δl ones purely imaginary.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use once_cell::sync::Lazy;
use rayon::prelude::*;

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::register::WavePacket;

/// Calibration momentum transfer (a.u.) of the nominal half-cycle pulse.
pub const NOMINAL_KICK: f64 = 0.0043;

/// Maximum supported spherical Bessel order.
pub const BESSEL_ORDER_MAX: u32 = 64;

/// Signed momentum transfer along +z, in units of hbar/bohr.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KickSpec {
    pub q: f64,
}

impl KickSpec {
    pub fn new(q: f64) -> Result<Self> {
        if !q.is_finite() {
            return Err(Error::Domain(format!("momentum transfer {q} not finite")));
        }
        Ok(Self { q })
    }
}

/// i^k for any integer k (i^-1 = -i, ...).
fn unit_phase(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

// ---------------------------------------------------------------------------
// Spherical Bessel functions

fn bessel_check(lambda: u32, x: f64) -> Result<()> {
    if lambda > BESSEL_ORDER_MAX {
        return Err(Error::BesselOrder(lambda));
    }
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!("spherical bessel argument {x} invalid")));
    }
    Ok(())
}

// Ascending series around x = 0; terms decrease once x^2 < 2λ+3.
fn bessel_series(lambda: u32, x: f64) -> f64 {
    let mut lead = 1.0;
    for k in 0..lambda {
        lead *= x / (2 * k + 3) as f64; // builds x^λ / (2λ+1)!!
    }
    let x2h = 0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= -x2h / (k as f64 * (2.0 * (lambda as f64 + k as f64) + 1.0));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    lead * sum
}

fn bessel_j0(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn bessel_j1(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        bessel_series(1, x)
    } else {
        x.sin() / (x * x) - x.cos() / x
    }
}

/// j_λ(x), stable over the full (λ ≤ 64, x ≥ 0) domain: ascending series
/// below the first turning point, upward recurrence for x > λ (where it is
/// stable), downward recurrence in between.
pub fn spherical_bessel(lambda: u32, x: f64) -> Result<f64> {
    bessel_check(lambda, x)?;
    match lambda {
        0 => return Ok(bessel_j0(x)),
        1 => return Ok(bessel_j1(x)),
        _ => {}
    }
    if x * x < 2.0 * lambda as f64 + 3.0 {
        return Ok(bessel_series(lambda, x));
    }
    if x > lambda as f64 {
        let mut jm = bessel_j0(x);
        let mut j = bessel_j1(x);
        for k in 1..lambda {
            let jp = (2 * k + 1) as f64 / x * j - jm;
            jm = j;
            j = jp;
        }
        return Ok(j);
    }
    // Downward (Miller) recurrence from a seed well above λ, normalized
    // against j0. In this band x is comparable to λ so no overflow occurs.
    let start = lambda + 40;
    let mut jp = 0.0f64;
    let mut j = 1e-30f64;
    let mut target = 0.0;
    for k in (1..=start).rev() {
        let jm = (2 * k + 1) as f64 / x * j - jp;
        jp = j;
        j = jm;
        if k - 1 == lambda {
            target = j;
        }
        if j.abs() > 1e250 {
            jp /= 1e250;
            j /= 1e250;
            target /= 1e250;
        }
    }
    Ok(target * bessel_j0(x) / j)
}

/// j_λ(x_i) for λ = 0..=λ_max over a whole grid, λ-major. Orders that
/// underflow at small x come back as 0, which is exact to 1e-300.
fn bessel_table(lambda_max: u32, xs: &[f64]) -> Vec<Vec<f64>> {
    let lm = lambda_max as usize;
    let mut table = vec![vec![0.0; xs.len()]; lm + 1];
    for (i, &x) in xs.iter().enumerate() {
        if x > lambda_max as f64 {
            let mut jm = bessel_j0(x);
            let mut j = bessel_j1(x);
            table[0][i] = jm;
            if lm >= 1 {
                table[1][i] = j;
            }
            for k in 1..lm {
                let jp = (2 * k + 1) as f64 / x * j - jm;
                jm = j;
                j = jp;
                table[k + 1][i] = j;
            }
        } else if x > 0.0 {
            let start = lm + 40;
            let mut col = vec![0.0f64; start + 2];
            col[start] = 1e-30;
            for k in (1..=start).rev() {
                let v = (2 * k + 1) as f64 / x * col[k] - col[k + 1];
                col[k - 1] = v;
                if v.abs() > 1e250 {
                    for c in col[k - 1..].iter_mut() {
                        *c *= 1e-250;
                    }
                }
            }
            let scale = bessel_j0(x) / col[0];
            for k in 0..=lm {
                table[k][i] = col[k] * scale;
            }
        } else {
            table[0][i] = 1.0;
        }
    }
    table
}

// ---------------------------------------------------------------------------
// Angular algebra

static LN_FACTORIAL: Lazy<Vec<f64>> = Lazy::new(|| {
    let mut t = vec![0.0f64; 260];
    for k in 2..t.len() {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
});

/// Wigner 3j symbol with all projections zero.
fn threej000(l1: u32, l2: u32, l3: u32) -> f64 {
    let j = (l1 + l2 + l3) as usize;
    if j % 2 == 1 {
        return 0.0;
    }
    if l3 + l1 < l2 || l3 + l2 < l1 || l1 + l2 < l3 {
        return 0.0;
    }
    let lf = &*LN_FACTORIAL;
    let g = j / 2;
    let (a, b, c) = (l1 as usize, l2 as usize, l3 as usize);
    let s = 0.5 * (lf[j - 2 * a] + lf[j - 2 * b] + lf[j - 2 * c] - lf[j + 1]) + lf[g]
        - lf[g - a]
        - lf[g - b]
        - lf[g - c];
    let sign = if g % 2 == 0 { 1.0 } else { -1.0 };
    sign * s.exp()
}

/// G(l′,l,λ) = ∫ Y*_{l′0} P_λ(cosθ) Y_{l0} dΩ
///           = √((2l′+1)(2l+1)) · [3j(l′ λ l; 0 0 0)]².
/// Exactly zero unless |l−l′| ≤ λ ≤ l+l′ with l+l′+λ even.
pub fn angular_weight(l_final: u32, l_initial: u32, lambda: u32, m: i32) -> Result<f64> {
    if m != 0 {
        return Err(Error::Domain(format!("only m = 0 supported, got {m}")));
    }
    let w = threej000(l_final, lambda, l_initial);
    if w == 0.0 {
        return Ok(0.0);
    }
    Ok((((2 * l_final + 1) * (2 * l_initial + 1)) as f64).sqrt() * w * w)
}

// ---------------------------------------------------------------------------
// Kick matrix

/// Dense ⟨b′|e^{iQz}|b⟩ over the basis, canonical order both ways.
/// The matrix is complex symmetric (real radial functions).
#[derive(Debug, Clone)]
pub struct KickMatrix {
    spec: KickSpec,
    basis: Arc<BasisSet>,
    elements: DMatrix<Complex64>,
}

impl KickMatrix {
    pub fn q(&self) -> f64 {
        self.spec.q
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    /// M[(final, initial)].
    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn element(&self, row: usize, col: usize) -> Complex64 {
        self.elements[(row, col)]
    }

    /// ‖M†M − I‖_max. Nonzero for any Q ≠ 0 on a truncated basis: states
    /// near the n or l edge scatter outside it (the n = 21, l = 16 corner
    /// of the default basis loses most of its norm at the nominal kick,
    /// while the register p columns barely leak).
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.elements.adjoint() * &self.elements;
        let n = prod.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// Assemble the full kick matrix. Q = 0 returns the exact identity.
pub fn kick_matrix(basis: &Arc<BasisSet>, spec: KickSpec) -> Result<KickMatrix> {
    let n = basis.len();
    if spec.q == 0.0 {
        return Ok(KickMatrix {
            spec,
            basis: Arc::clone(basis),
            elements: DMatrix::identity(n, n),
        });
    }
    let lambda_max = 2 * basis.l_max();
    if lambda_max > BESSEL_ORDER_MAX {
        return Err(Error::BesselOrder(lambda_max));
    }
    let grid = basis.grid();
    let xs: Vec<f64> = grid.points().iter().map(|r| spec.q.abs() * r).collect();
    let mut jt = bessel_table(lambda_max, &xs);
    // fold quadrature weights and the odd-λ sign of Q into the tables
    let sgn = spec.q.signum();
    for (lam, row) in jt.iter_mut().enumerate() {
        let s = if lam % 2 == 1 { sgn } else { 1.0 };
        for (v, w) in row.iter_mut().zip(grid.weights()) {
            *v *= s * w;
        }
    }

    let rows: Vec<Vec<(usize, Complex64)>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let sa = basis.states()[a];
            let ua = basis.wavefunction(a).u();
            let mut row = Vec::new();
            for b in a..n {
                let sb = basis.states()[b];
                let ub = basis.wavefunction(b).u();
                let lo = sa.l.abs_diff(sb.l);
                let hi = sa.l + sb.l;
                let mut re = 0.0;
                let mut im = 0.0;
                let mut lam = lo;
                while lam <= hi {
                    let g = angular_weight(sa.l, sb.l, lam, 0).expect("m = 0");
                    if g != 0.0 {
                        let tab = &jt[lam as usize];
                        let mut integral = 0.0;
                        for i in 0..ua.len() {
                            integral += ua[i] * tab[i] * ub[i];
                        }
                        let c = (2 * lam + 1) as f64 * g * integral;
                        match lam % 4 {
                            0 => re += c,
                            1 => im += c,
                            2 => re -= c,
                            _ => im -= c,
                        }
                    }
                    lam += 2;
                }
                row.push((b, Complex64::new(re, im)));
            }
            row
        })
        .collect();

    let mut elements = DMatrix::zeros(n, n);
    for (a, row) in rows.into_iter().enumerate() {
        for (b, v) in row {
            elements[(a, b)] = v;
            elements[(b, a)] = v;
        }
    }
    Ok(KickMatrix { spec, basis: Arc::clone(basis), elements })
}

/// Closed-form column of the kick operator out of one p state (l = 1,
/// m = 0): the λ sum collapses to two Bessel orders per destination l′,
///   f_{n′l′ ← np} = i^{l′−1} √(3/(2l′+1)) ⟨R_{n′l′}| l′ j_{l′−1}(Qr)
///                   − (l′+1) j_{l′+1}(Qr) |R_{np}⟩.
/// Matches the corresponding `kick_matrix` column to machine precision.
pub fn p_state_kick_row(basis: &Arc<BasisSet>, n: u32, spec: KickSpec) -> Result<Vec<Complex64>> {
    let col = basis.require(n, 1)?;
    let nstates = basis.len();
    if spec.q == 0.0 {
        let mut out = vec![Complex64::new(0.0, 0.0); nstates];
        out[col] = Complex64::new(1.0, 0.0);
        return Ok(out);
    }
    let lambda_max = basis.l_max() + 1;
    if lambda_max > BESSEL_ORDER_MAX {
        return Err(Error::BesselOrder(lambda_max));
    }
    let grid = basis.grid();
    let xs: Vec<f64> = grid.points().iter().map(|r| spec.q.abs() * r).collect();
    let jt = bessel_table(lambda_max, &xs);
    let sgn = spec.q.signum();
    let up = basis.wavefunction(col).u();

    let mut out = vec![Complex64::new(0.0, 0.0); nstates];
    for (row, sr) in basis.states().iter().enumerate() {
        let lp = sr.l;
        let ur = basis.wavefunction(row).u();
        let radial = |lam: u32| -> f64 {
            let tab = &jt[lam as usize];
            let mut acc = 0.0;
            for i in 0..ur.len() {
                acc += grid.weights()[i] * ur[i] * tab[i] * up[i];
            }
            acc
        };
        let mut val = -((lp + 1) as f64) * radial(lp + 1);
        if lp >= 1 {
            val += lp as f64 * radial(lp - 1);
        }
        // the two λ orders share sgn(Q)^(l′−1); i^(l′−1) carries the phase
        let sign = if sgn < 0.0 && (lp as i64 - 1).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
        let coeff = (3.0 / (2 * lp + 1) as f64).sqrt();
        out[row] = unit_phase(lp as i64 - 1) * (sign * coeff * val);
    }
    Ok(out)
}

/// c′ = M c. Norm can only decrease (basis truncation).
pub fn apply_kick(packet: &WavePacket, kick: &KickMatrix) -> Result<WavePacket> {
    if !kick.basis.compatible(packet.basis()) {
        return Err(Error::BasisMismatch("kick matrix built on a different basis".into()));
    }
    let n = kick.basis.len();
    let c = packet.amplitudes();
    let m = &kick.elements;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    // column-major walk: out += M[:, j] * c[j]
    for j in 0..n {
        let cj = c[j];
        if cj == Complex64::new(0.0, 0.0) {
            continue;
        }
        for i in 0..n {
            out[i] += m[(i, j)] * cj;
        }
    }
    Ok(WavePacket::from_parts(
        Arc::clone(packet.basis()),
        out,
        packet.time_stamp,
    ))
}
