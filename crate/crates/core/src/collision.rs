//! Conservative velocity discretizations of the Fokker-Planck operator
//! `Q(f) = ∂_v((v - u_f) f + T_f ∂_v f)`.
//!
//! Every operator here is written in flux form on the truncated velocity mesh.
//! The two outermost interfaces carry zero flux, so `Σ_j Q_j Δv` telescopes to
//! zero; momentum and energy are conserved up to terms proportional to `f`
//! at the last few nodes.
//!
//! Macroscopic quantities are the staggered moments built from interface
//! averages `f_{j+1/2}` rather than nodal sums. That choice is what makes the
//! discrete conservation proof close.

use crate::error::{Error, Result};
use crate::mesh::VelocityGrid;

/// Weights of the fourth-order interface interpolation `f̆_{j+1/2}`.
const BREVE_OUTER: f64 = -1.0 / 16.0;
const BREVE_INNER: f64 = 9.0 / 16.0;

/// Density, mean velocity and temperature from staggered sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaggeredMoments {
    pub n: f64,
    pub u: f64,
    pub t: f64,
}

/// Two-velocity counterpart with a single isotropic temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaggeredMoments2d {
    pub n: f64,
    pub ux: f64,
    pub uy: f64,
    pub t: f64,
}

/// Velocity discretization order of the collision operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum CollisionOrder {
    #[serde(rename = "2")]
    Second,
    #[serde(rename = "4")]
    Fourth,
}

impl CollisionOrder {
    pub fn from_int(order: u32) -> Option<Self> {
        match order {
            2 => Some(Self::Second),
            4 => Some(Self::Fourth),
            _ => None,
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            Self::Second => 2,
            Self::Fourth => 4,
        }
    }
}

fn check_moments(n: f64, t: f64) -> Result<()> {
    if n > 0.0 && t > 0.0 && n.is_finite() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::DegenerateDensity { n, temperature: t })
    }
}

/// `n = Δv Σ f_j`, `n ũ = Δv Σ v_{j+1/2} f_{j+1/2}`,
/// `n T̃ = Δv Σ (v_{j+1/2} - ũ)² f_{j+1/2}`, interface sums over the
/// interior interfaces only.
pub fn staggered_moments(f: &[f64], vg: &VelocityGrid) -> Result<StaggeredMoments> {
    interface_moments(f, vg, |f, j| 0.5 * (f[j] + f[j + 1]))
}

/// Staggered moments built from the fourth-order interface values `f̆`.
/// The two interfaces next to each boundary fall back to the arithmetic mean.
pub fn breve_moments(f: &[f64], vg: &VelocityGrid) -> Result<StaggeredMoments> {
    interface_moments(f, vg, breve_value)
}

#[inline]
fn breve_value(f: &[f64], j: usize) -> f64 {
    if j >= 1 && j + 2 < f.len() {
        BREVE_OUTER * (f[j - 1] + f[j + 2]) + BREVE_INNER * (f[j] + f[j + 1])
    } else {
        0.5 * (f[j] + f[j + 1])
    }
}

fn interface_moments<V>(f: &[f64], vg: &VelocityGrid, value: V) -> Result<StaggeredMoments>
where
    V: Fn(&[f64], usize) -> f64,
{
    debug_assert_eq!(f.len(), vg.nodes());
    let dv = vg.dv();
    let n = dv * f.iter().sum::<f64>();
    if !(n > 0.0) {
        return Err(Error::DegenerateDensity {
            n,
            temperature: f64::NAN,
        });
    }
    let mut mom = 0.0;
    for j in 0..f.len() - 1 {
        mom += vg.interface(j) * value(f, j);
    }
    let u = dv * mom / n;
    let mut energy = 0.0;
    for j in 0..f.len() - 1 {
        let w = vg.interface(j) - u;
        energy += w * w * value(f, j);
    }
    let t = dv * energy / n;
    check_moments(n, t)?;
    Ok(StaggeredMoments { n, u, t })
}

/// Moments of a two-velocity column stored row-major in `(j_x, j_y)`.
pub fn staggered_moments_2d(f: &[f64], vg: &VelocityGrid) -> Result<StaggeredMoments2d> {
    let m = vg.nodes();
    debug_assert_eq!(f.len(), m * m);
    let area = vg.cell_volume();
    let n = area * f.iter().sum::<f64>();
    if !(n > 0.0) {
        return Err(Error::DegenerateDensity {
            n,
            temperature: f64::NAN,
        });
    }
    // x-interfaces: f_{i+1/2, j}; y-interfaces: f_{i, j+1/2}.
    let (mut mx, mut my) = (0.0, 0.0);
    for a in 0..m {
        for b in 0..m - 1 {
            let vx_half = vg.interface(b);
            mx += vx_half * 0.5 * (f[b * m + a] + f[(b + 1) * m + a]);
            my += vx_half * 0.5 * (f[a * m + b] + f[a * m + b + 1]);
        }
    }
    let ux = area * mx / n;
    let uy = area * my / n;
    let mut e = 0.0;
    for a in 0..m {
        for b in 0..m - 1 {
            let wx = vg.interface(b) - ux;
            let wy = vg.interface(b) - uy;
            e += wx * wx * 0.5 * (f[b * m + a] + f[(b + 1) * m + a]);
            e += wy * wy * 0.5 * (f[a * m + b] + f[a * m + b + 1]);
        }
    }
    let t = area * e / (2.0 * n);
    check_moments(n, t)?;
    Ok(StaggeredMoments2d { n, ux, uy, t })
}

/// `M_{ρ,u,T}(v) = ρ / sqrt(2πT) · exp(-(v-u)²/(2T))`.
#[inline]
pub fn maxwellian(rho: f64, u: f64, t: f64, v: f64) -> f64 {
    let w = v - u;
    rho / (2.0 * std::f64::consts::PI * t).sqrt() * (-w * w / (2.0 * t)).exp()
}

/// Two-velocity Maxwellian `ρ/(2πT) exp(-|v-u|²/(2T))`.
#[inline]
pub fn maxwellian_2d(rho: f64, ux: f64, uy: f64, t: f64, vx: f64, vy: f64) -> f64 {
    let (wx, wy) = (vx - ux, vy - uy);
    rho / (2.0 * std::f64::consts::PI * t) * (-(wx * wx + wy * wy) / (2.0 * t)).exp()
}

/// Discrete Maxwellian sampled at the velocity nodes.
pub fn discrete_maxwellian(n: f64, u: f64, t: f64, vg: &VelocityGrid) -> Result<Vec<f64>> {
    check_moments(n, t)?;
    Ok((0..vg.nodes())
        .map(|j| maxwellian(n, u, t, vg.node(j)))
        .collect())
}

pub fn discrete_maxwellian_2d(
    n: f64,
    ux: f64,
    uy: f64,
    t: f64,
    vg: &VelocityGrid,
) -> Result<Vec<f64>> {
    check_moments(n, t)?;
    let m = vg.nodes();
    let mut out = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            out.push(maxwellian_2d(n, ux, uy, t, vg.node(a), vg.node(b)));
        }
    }
    Ok(out)
}

/// Second-order interior flux
/// `ℱ_{j+1/2} = f_{j+1/2}(v_{j+1/2} - u) + (T/Δv)(f_{j+1} - f_j)`.
#[inline]
fn flux2(f: &[f64], j: usize, v_half: f64, u: f64, t_over_dv: f64) -> f64 {
    0.5 * (f[j] + f[j + 1]) * (v_half - u) + t_over_dv * (f[j + 1] - f[j])
}

/// Writes `Q_j` of the second-order standard form into `out` and returns the
/// moments used. `drift_shift` is added to `ũ` in the drift term only.
pub fn q2_apply_into(
    f: &[f64],
    vg: &VelocityGrid,
    drift_shift: f64,
    out: &mut [f64],
) -> Result<StaggeredMoments> {
    let m = staggered_moments(f, vg)?;
    q2_frozen_into(f, vg, m.u + drift_shift, m.t, out);
    Ok(m)
}

/// Form1 stencil with the drift velocity and temperature supplied by the caller.
pub fn q2_frozen_into(f: &[f64], vg: &VelocityGrid, u: f64, t: f64, out: &mut [f64]) {
    let dv = vg.dv();
    let inv_dv = 1.0 / dv;
    let t_over_dv = t / dv;
    let n = f.len();
    let mut left = 0.0;
    for j in 0..n - 1 {
        let right = flux2(f, j, vg.interface(j), u, t_over_dv);
        out[j] = (right - left) * inv_dv;
        left = right;
    }
    out[n - 1] = -left * inv_dv;
}

/// Second-order conservative discretization of `Q(f)`.
pub fn q2_apply(f: &[f64], vg: &VelocityGrid, drift_shift: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; f.len()];
    q2_apply_into(f, vg, drift_shift, &mut out)?;
    Ok(out)
}

/// Scratch buffers reused across calls by one worker.
#[derive(Debug, Default, Clone)]
pub struct CollisionWorkspace {
    q2: Vec<f64>,
}

impl CollisionWorkspace {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Fourth-order operator `Q4_j = Q̄4_j - (Q_{j+1} - 2Q_j + Q_{j-1})/24`,
/// assembled as a single interface flux so that mass telescopes exactly.
pub fn q4_apply_into(
    f: &[f64],
    vg: &VelocityGrid,
    drift_shift: f64,
    out: &mut [f64],
    ws: &mut CollisionWorkspace,
) -> Result<StaggeredMoments> {
    let n = f.len();
    if n < MIN_Q4_NODES {
        return Err(Error::StencilTooSmall {
            got: n,
            min: MIN_Q4_NODES,
        });
    }
    ws.q2.resize(n, 0.0);
    let stag = staggered_moments(f, vg)?;
    q2_frozen_into(f, vg, stag.u + drift_shift, stag.t, &mut ws.q2);
    let breve = breve_moments(f, vg)?;
    let u = breve.u + drift_shift;
    let t = breve.t;
    let dv = vg.dv();
    let inv_dv = 1.0 / dv;
    let q2 = &ws.q2;

    let mut left = 0.0;
    for j in 0..n - 1 {
        let v_half = vg.interface(j);
        let mut right = if j >= 1 && j + 2 < n {
            let fb = BREVE_OUTER * (f[j - 1] + f[j + 2]) + BREVE_INNER * (f[j] + f[j + 1]);
            let grad = (f[j - 1] - 27.0 * f[j] + 27.0 * f[j + 1] - f[j + 2]) / (24.0 * dv);
            (v_half - u) * fb + t * grad
        } else {
            flux2(f, j, v_half, u, t * inv_dv)
        };
        right -= dv / 24.0 * (q2[j + 1] - q2[j]);
        out[j] = (right - left) * inv_dv;
        left = right;
    }
    out[n - 1] = -left * inv_dv;
    Ok(breve)
}

pub const MIN_Q4_NODES: usize = 9;

pub fn q4_apply(f: &[f64], vg: &VelocityGrid, drift_shift: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; f.len()];
    q4_apply_into(f, vg, drift_shift, &mut out, &mut CollisionWorkspace::new())?;
    Ok(out)
}

/// Dispatches on the discretization order.
pub fn collision_into(
    order: CollisionOrder,
    f: &[f64],
    vg: &VelocityGrid,
    drift_shift: f64,
    out: &mut [f64],
    ws: &mut CollisionWorkspace,
) -> Result<()> {
    match order {
        CollisionOrder::Second => q2_apply_into(f, vg, drift_shift, out).map(|_| ()),
        CollisionOrder::Fourth => q4_apply_into(f, vg, drift_shift, out, ws).map(|_| ()),
    }
}

/// Interface Maxwellian `M̃_{j+1/2}` that makes the standard and L² forms
/// coincide, for a given nodal Maxwellian `m` and temperature `t`/drift `u`.
pub fn interface_maxwellian(
    f: &[f64],
    m: &[f64],
    u: f64,
    t: f64,
    vg: &VelocityGrid,
) -> Result<Vec<f64>> {
    let dv = vg.dv();
    let mut out = Vec::with_capacity(f.len() - 1);
    for j in 0..f.len() - 1 {
        let den = f[j + 1] * m[j] - f[j] * m[j + 1];
        let scale = (f[j + 1] * m[j]).abs() + (f[j] * m[j + 1]).abs();
        if den == 0.0 || den.abs() <= SINGULARITY_RTOL * scale {
            return Err(Error::EquilibriumSingularity { interface: j });
        }
        let mm = m[j] * m[j + 1];
        let f_half = 0.5 * (f[j] + f[j + 1]);
        let tilde = dv / t * mm * f_half * (vg.interface(j) - u) / den + mm * (f[j + 1] - f[j]) / den;
        out.push(tilde);
    }
    Ok(out)
}

/// Relative size below which `f_{j+1} M_j - f_j M_{j+1}` counts as zero.
pub const SINGULARITY_RTOL: f64 = 1e-14;

/// L² form `Q_j = (T/Δv²){M̃_{j+1/2}[(f/M)_{j+1} - (f/M)_j] - M̃_{j-1/2}[...]}`
/// against an explicit nodal Maxwellian `m` and moments.
pub fn q2_l2form_with(
    f: &[f64],
    m: &[f64],
    u: f64,
    t: f64,
    vg: &VelocityGrid,
) -> Result<Vec<f64>> {
    let tilde = interface_maxwellian(f, m, u, t, vg)?;
    let dv = vg.dv();
    let n = f.len();
    let mut out = vec![0.0; n];
    let mut left = 0.0;
    for j in 0..n - 1 {
        let right = t / dv * tilde[j] * (f[j + 1] / m[j + 1] - f[j] / m[j]);
        out[j] = (right - left) / dv;
        left = right;
    }
    out[n - 1] = -left / dv;
    Ok(out)
}

/// L² form with the discrete Maxwellian of `f`'s own staggered moments.
/// Only meant for tests and entropy diagnostics; stepping uses `q2_apply`.
pub fn q2_l2form(f: &[f64], vg: &VelocityGrid) -> Result<Vec<f64>> {
    let mom = staggered_moments(f, vg)?;
    let m = discrete_maxwellian(mom.n, mom.u, mom.t, vg)?;
    q2_l2form_with(f, &m, mom.u, mom.t, vg)
}

/// `Σ_j Q_j (f_j / M_j) Δv` with `M` the discrete Maxwellian of `f`.
pub fn entropy_pairing(f: &[f64], q: &[f64], vg: &VelocityGrid) -> Result<f64> {
    let mom = staggered_moments(f, vg)?;
    let m = discrete_maxwellian(mom.n, mom.u, mom.t, vg)?;
    Ok(vg.dv() * f.iter().zip(q).zip(&m).map(|((fj, qj), mj)| qj * fj / mj).sum::<f64>())
}

/// Two-velocity second-order operator: the sum of the two one-dimensional
/// form1 stencils with a shared scalar `T̃`. Zero flux on all four edges.
pub fn q2d_apply_into(
    f: &[f64],
    vg: &VelocityGrid,
    drift_shift: [f64; 2],
    out: &mut [f64],
) -> Result<StaggeredMoments2d> {
    let mom = staggered_moments_2d(f, vg)?;
    let m = vg.nodes();
    let dv = vg.dv();
    let inv_dv = 1.0 / dv;
    let t_over_dv = mom.t / dv;
    let ux = mom.ux + drift_shift[0];
    let uy = mom.uy + drift_shift[1];
    // y-direction: contiguous rows.
    for a in 0..m {
        let row = &f[a * m..(a + 1) * m];
        let o = &mut out[a * m..(a + 1) * m];
        let mut left = 0.0;
        for b in 0..m - 1 {
            let right = flux2(row, b, vg.interface(b), uy, t_over_dv);
            o[b] = (right - left) * inv_dv;
            left = right;
        }
        o[m - 1] = -left * inv_dv;
    }
    // x-direction: stride m, accumulated row by row.
    let mut left = vec![0.0; m];
    for a in 0..m {
        let last = a + 1 == m;
        let v_half = if last { 0.0 } else { vg.interface(a) };
        for b in 0..m {
            let right = if last {
                0.0
            } else {
                let (f0, f1) = (f[a * m + b], f[(a + 1) * m + b]);
                0.5 * (f0 + f1) * (v_half - ux) + t_over_dv * (f1 - f0)
            };
            out[a * m + b] += (right - left[b]) * inv_dv;
            left[b] = right;
        }
    }
    Ok(mom)
}

pub fn q2d_apply(f: &[f64], vg: &VelocityGrid, drift_shift: [f64; 2]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; f.len()];
    q2d_apply_into(f, vg, drift_shift, &mut out)?;
    Ok(out)
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for row in self.data.chunks(self.n) {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        s
    }
}

/// Matrix of `f ↦ ν Q(f)` with `(u, T)` frozen, so the operator is linear.
pub fn assemble_frozen_operator(
    n: f64,
    u: f64,
    t: f64,
    nu: f64,
    vg: &VelocityGrid,
) -> Result<DenseMatrix> {
    check_moments(n, t)?;
    let size = vg.nodes();
    let mut a = DenseMatrix::zeros(size);
    // Column k is ν·Q applied to the k-th unit vector.
    let mut e = vec![0.0; size];
    let mut q = vec![0.0; size];
    for k in 0..size {
        e[k] = 1.0;
        q2_frozen_into(&e, vg, u, t, &mut q);
        e[k] = 0.0;
        for r in k.saturating_sub(1)..(k + 2).min(size) {
            a.set(r, k, nu * q[r]);
        }
    }
    Ok(a)
}

/// Gershgorin-disc summary of a square matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscBounds {
    /// Leftmost point of any disc.
    pub min_real: f64,
    /// Rightmost point of any disc.
    pub max_real: f64,
    /// Largest disc radius.
    pub max_radius: f64,
}

/// Discs built from columns (the spectrum of `A` equals that of `Aᵀ`).
pub fn gershgorin_columns(a: &DenseMatrix) -> DiscBounds {
    let n = a.n;
    let mut radius = vec![0.0; n];
    for r in 0..n {
        for c in 0..n {
            if r != c {
                radius[c] += a.get(r, c).abs();
            }
        }
    }
    disc_bounds(a, &radius)
}

pub fn gershgorin_rows(a: &DenseMatrix) -> DiscBounds {
    let n = a.n;
    let radius: Vec<f64> = (0..n)
        .map(|r| (0..n).filter(|&c| c != r).map(|c| a.get(r, c).abs()).sum())
        .collect();
    disc_bounds(a, &radius)
}

fn disc_bounds(a: &DenseMatrix, radius: &[f64]) -> DiscBounds {
    let mut b = DiscBounds {
        min_real: f64::INFINITY,
        max_real: f64::NEG_INFINITY,
        max_radius: 0.0,
    };
    for (k, r) in radius.iter().enumerate() {
        let c = a.get(k, k);
        b.min_real = b.min_real.min(c - r);
        b.max_real = b.max_real.max(c + r);
        b.max_radius = b.max_radius.max(*r);
    }
    b
}

/// Bendixson bound on `|Im λ|`: largest row sum of the skew part `(A - Aᵀ)/2`.
pub fn imaginary_extent_bound(a: &DenseMatrix) -> f64 {
    let n = a.n;
    (0..n)
        .map(|r| {
            (0..n)
                .map(|c| 0.5 * (a.get(r, c) - a.get(c, r)).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}
