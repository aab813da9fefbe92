//! Collisionless pieces of the Vlasov step: x-advection, the Poisson and
//! Ampère field updates, velocity derivatives and velocity advection.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::collision::{collision_into, q2d_apply_into, CollisionOrder, CollisionWorkspace};
use crate::error::{Error, Result};
use crate::mesh::{DistState, PhaseGrid, SpatialGrid};

/// Planned forward/backward transforms along the periodic x axis.
#[derive(Clone)]
pub struct SpectralPlan {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("n", &self.n).finish()
    }
}

impl SpectralPlan {
    pub fn new(space: &SpatialGrid) -> Self {
        let n = space.n_x();
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            k: (0..n).map(|m| space.wavenumber(m)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Signed wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    /// Whether mode `m` is the unpaired Nyquist mode.
    pub fn is_nyquist(&self, m: usize) -> bool {
        self.n.is_multiple_of(2) && m == self.n / 2
    }

    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse transform including the `1/N` normalization; returns the real part.
    pub fn backward(&self, spec: &mut [Complex64]) -> Vec<f64> {
        self.inv.process(spec);
        let scale = 1.0 / self.n as f64;
        spec.iter().map(|c| c.re * scale).collect()
    }
}

fn space_of(grid: &PhaseGrid) -> Result<SpatialGrid> {
    grid.space
        .ok_or_else(|| Error::InvalidConfig("operation needs a spatial axis".into()))
}

/// Applies `op(c, line)` to every x-line (fixed velocity index `c`) of `values`.
fn map_x_lines<F>(grid: &PhaseGrid, values: &[f64], op: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let nx = grid.columns();
    let cl = grid.column_len();
    let mut lines = vec![0.0; values.len()];
    lines.par_chunks_mut(nx).enumerate().for_each(|(c, line)| {
        for (i, l) in line.iter_mut().enumerate() {
            *l = values[i * cl + c];
        }
        op(c, line);
    });
    let mut out = vec![0.0; values.len()];
    out.par_chunks_mut(cl).enumerate().for_each(|(i, col)| {
        for (c, o) in col.iter_mut().enumerate() {
            *o = lines[c * nx + i];
        }
    });
    out
}

/// Exact solution of `∂_t f + v_x ∂_x f = 0` over `dt` by Fourier
/// multiplication with `exp(-i k v_x dt)`.
pub fn advect_x(f: &DistState, dt: f64, plan: &SpectralPlan) -> Result<DistState> {
    if f.grid.is_homogeneous() {
        return Ok(f.clone());
    }
    let grid = f.grid;
    let values = map_x_lines(&grid, &f.values, |c, line| {
        let vx = grid.velocity_of(c).0;
        let mut spec = plan.forward(line);
        for (m, z) in spec.iter_mut().enumerate().skip(1) {
            let phase = -plan.k[m] * vx * dt;
            *z *= Complex64::from_polar(1.0, phase);
        }
        line.copy_from_slice(&plan.backward(&mut spec));
    });
    Ok(DistState {
        grid,
        values,
        t: f.t,
    })
}

/// Semi-Lagrangian x-advection with periodic cubic-spline interpolation at
/// the feet `x_i - v_x dt`.
pub fn advect_x_spline(f: &DistState, dt: f64) -> Result<DistState> {
    let Some(space) = f.grid.space else {
        return Ok(f.clone());
    };
    let grid = f.grid;
    let dx = space.dx();
    let values = map_x_lines(&grid, &f.values, |c, line| {
        let vx = grid.velocity_of(c).0;
        let coef = bspline_coefficients_periodic(line);
        let shift = vx * dt / dx;
        for (i, out) in line.iter_mut().enumerate() {
            *out = bspline_eval_periodic(&coef, i as f64 - shift);
        }
    });
    Ok(DistState {
        grid,
        values,
        t: f.t,
    })
}

/// Cubic B-spline basis weights for offsets -1, 0, 1, 2 at fractional position `t`.
#[inline]
fn bspline_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let s = 1.0 - t;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Solves `(c_{j-1} + 4c_j + c_{j+1})/6 = d_j` with `c_{-1} = c_n = 0`.
fn solve_spline_system(d: &[f64], c: &mut [f64], scratch: &mut Vec<f64>) {
    let n = d.len();
    scratch.resize(n, 0.0);
    let (a, b) = (1.0 / 6.0, 4.0 / 6.0);
    scratch[0] = a / b;
    c[0] = d[0] / b;
    for j in 1..n {
        let m = b - a * scratch[j - 1];
        scratch[j] = a / m;
        c[j] = (d[j] - a * c[j - 1]) / m;
    }
    for j in (0..n - 1).rev() {
        c[j] -= scratch[j] * c[j + 1];
    }
}

/// Periodic interpolation coefficients via Sherman-Morrison on the cyclic system.
fn bspline_coefficients_periodic(d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let (a, b) = (1.0 / 6.0, 4.0 / 6.0);
    // A = T + w wᵀ-type correction with corner entries a; T has modified ends.
    let gamma = -b;
    let mut diag = vec![b; n];
    diag[0] = b - gamma;
    diag[n - 1] = b - a * a / gamma;
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let mut cp = vec![0.0; n];
        let mut x = vec![0.0; n];
        cp[0] = a / diag[0];
        x[0] = rhs[0] / diag[0];
        for j in 1..n {
            let m = diag[j] - a * cp[j - 1];
            cp[j] = a / m;
            x[j] = (rhs[j] - a * x[j - 1]) / m;
        }
        for j in (0..n - 1).rev() {
            x[j] -= cp[j] * x[j + 1];
        }
        x
    };
    let y = solve(d);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = a;
    let z = solve(&u);
    let fact = (y[0] + a * y[n - 1] / gamma) / (1.0 + z[0] + a * z[n - 1] / gamma);
    y.iter().zip(&z).map(|(y, z)| y - fact * z).collect()
}

fn bspline_eval_periodic(coef: &[f64], xi: f64) -> f64 {
    let n = coef.len() as isize;
    let i0 = xi.floor();
    let w = bspline_weights(xi - i0);
    let i0 = i0 as isize;
    (0..4)
        .map(|k| w[k] * coef[(i0 + k as isize - 1).rem_euclid(n) as usize])
        .sum()
}

/// Evaluates a zero-extended spline on nodes `0..n` at fractional index `xi`.
fn bspline_eval_open(coef: &[f64], xi: f64) -> f64 {
    let n = coef.len();
    if !(xi >= 0.0 && xi <= (n - 1) as f64) {
        return 0.0;
    }
    let i0 = xi.floor();
    let w = bspline_weights(xi - i0);
    let i0 = i0 as isize;
    let mut s = 0.0;
    for (k, wk) in w.iter().enumerate() {
        let idx = i0 + k as isize - 1;
        if idx >= 0 && (idx as usize) < n {
            s += wk * coef[idx as usize];
        }
    }
    s
}

/// Charge density `n_i = Δv^d Σ_j f_ij` per spatial column.
pub fn density(f: &DistState) -> Vec<f64> {
    let w = f.grid.velocity.cell_volume();
    (0..f.grid.columns())
        .map(|i| w * f.column(i).iter().sum::<f64>())
        .collect()
}

/// Current `J_i = Δv^d Σ_j v_{x,j} f_ij` per spatial column.
pub fn current(f: &DistState) -> Vec<f64> {
    current_of(&f.grid, &f.values)
}

fn current_of(grid: &PhaseGrid, values: &[f64]) -> Vec<f64> {
    let w = grid.velocity.cell_volume();
    let cl = grid.column_len();
    values
        .chunks(cl)
        .map(|col| {
            w * col
                .iter()
                .enumerate()
                .map(|(c, f)| grid.velocity_of(c).0 * f)
                .sum::<f64>()
        })
        .collect()
}

/// Solves `∂_x E = n - 1` spectrally with the mean and Nyquist modes set to
/// zero. This is the sign under which `∂_t E = -J` preserves Gauss's law.
pub fn poisson_field(f: &DistState, plan: &SpectralPlan) -> Result<Vec<f64>> {
    space_of(&f.grid)?;
    let rhs: Vec<f64> = density(f).iter().map(|n| n - 1.0).collect();
    Ok(field_from_charge(&rhs, plan))
}

/// `E` with `∂_x E = rho` and zero mean.
pub fn field_from_charge(rho: &[f64], plan: &SpectralPlan) -> Vec<f64> {
    let mut spec = plan.forward(rho);
    for (m, z) in spec.iter_mut().enumerate() {
        if m == 0 || plan.is_nyquist(m) {
            *z = Complex64::new(0.0, 0.0);
        } else {
            *z /= Complex64::new(0.0, plan.k[m]);
        }
    }
    plan.backward(&mut spec)
}

/// Spectral derivative of periodic data; the Nyquist mode is dropped.
pub fn spectral_derivative(data: &[f64], plan: &SpectralPlan) -> Vec<f64> {
    let mut spec = plan.forward(data);
    for (m, z) in spec.iter_mut().enumerate() {
        if plan.is_nyquist(m) {
            *z = Complex64::new(0.0, 0.0);
        } else {
            *z *= Complex64::new(0.0, plan.k[m]);
        }
    }
    plan.backward(&mut spec)
}

/// `E^{n+1}_i = E^n_i - Δt J_i(f)`.
pub fn ampere_update(e: &[f64], f: &DistState, dt: f64) -> Vec<f64> {
    e.iter()
        .zip(current(f))
        .map(|(e, j)| e - dt * j)
        .collect()
}

pub const MIN_UPWIND_POINTS: usize = 6;

/// Third-order upwind-biased derivative of a line of samples spaced `dv`,
/// for transport with velocity `speed` (the sign picks the bias). Values
/// entering through the inflow end are taken as zero; the outflow node uses
/// the one-sided third-order formula.
pub fn upwind_dv_into(f: &[f64], dv: f64, speed: f64, out: &mut [f64]) -> Result<()> {
    let n = f.len();
    if n < MIN_UPWIND_POINTS + 1 {
        return Err(Error::StencilTooSmall {
            got: n.saturating_sub(1),
            min: MIN_UPWIND_POINTS,
        });
    }
    let h = 1.0 / (6.0 * dv);
    if speed >= 0.0 {
        out[0] = (3.0 * f[0] + 2.0 * f[1]) * h;
        out[1] = (-6.0 * f[0] + 3.0 * f[1] + 2.0 * f[2]) * h;
        for j in 2..n - 1 {
            out[j] = (f[j - 2] - 6.0 * f[j - 1] + 3.0 * f[j] + 2.0 * f[j + 1]) * h;
        }
        out[n - 1] = (11.0 * f[n - 1] - 18.0 * f[n - 2] + 9.0 * f[n - 3] - 2.0 * f[n - 4]) * h;
    } else {
        out[0] = (-11.0 * f[0] + 18.0 * f[1] - 9.0 * f[2] + 2.0 * f[3]) * h;
        for j in 1..n - 2 {
            out[j] = (-2.0 * f[j - 1] - 3.0 * f[j] + 6.0 * f[j + 1] - f[j + 2]) * h;
        }
        out[n - 2] = (-2.0 * f[n - 3] - 3.0 * f[n - 2] + 6.0 * f[n - 1]) * h;
        out[n - 1] = (-2.0 * f[n - 2] - 3.0 * f[n - 1]) * h;
    }
    Ok(())
}

pub fn upwind_dv(f: &[f64], dv: f64, speed: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; f.len()];
    upwind_dv_into(f, dv, speed, &mut out)?;
    Ok(out)
}

/// `∂_{v_x} f` on every column with the bias chosen by `sign(E_i)`.
pub fn velocity_derivative(grid: &PhaseGrid, values: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    let vg = grid.velocity;
    let cl = grid.column_len();
    let dv = vg.dv();
    let nodes = vg.nodes();
    let mut out = vec![0.0; values.len()];
    out.par_chunks_mut(cl)
        .zip(values.par_chunks(cl))
        .zip(e.par_iter())
        .try_for_each(|((o, col), &ei)| {
            if vg.dims() == 1 {
                return upwind_dv_into(col, dv, ei, o);
            }
            let mut line = vec![0.0; nodes];
            let mut d = vec![0.0; nodes];
            for jy in 0..nodes {
                for jx in 0..nodes {
                    line[jx] = col[jx * nodes + jy];
                }
                upwind_dv_into(&line, dv, ei, &mut d)?;
                for jx in 0..nodes {
                    o[jx * nodes + jy] = d[jx];
                }
            }
            Ok(())
        })?;
    Ok(out)
}

/// Semi-Lagrangian solution of `∂_t f + E ∂_{v_x} f = 0` over `dt`:
/// cubic-spline interpolation at `v_x - E_i dt`, zero outside the domain.
pub fn advect_v_sl(f: &DistState, e: &[f64], dt: f64) -> Result<DistState> {
    let vg = f.grid.velocity;
    let width = 2.0 * vg.v_max();
    if let Some(&worst) = e
        .iter()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
    {
        let displacement = (worst * dt).abs();
        if !(displacement < width) {
            return Err(Error::DisplacementTooLarge {
                displacement,
                width,
            });
        }
    }
    let cl = f.grid.column_len();
    let nodes = vg.nodes();
    let dv = vg.dv();
    let mut values = vec![0.0; f.values.len()];
    values
        .par_chunks_mut(cl)
        .zip(f.values.par_chunks(cl))
        .zip(e.par_iter())
        .for_each(|((o, col), &ei)| {
            let shift = ei * dt / dv;
            let mut line = vec![0.0; nodes];
            let mut coef = vec![0.0; nodes];
            let mut scratch = Vec::with_capacity(nodes);
            let stride = if vg.dims() == 1 { 1 } else { nodes };
            let lines = cl / nodes;
            for jy in 0..lines {
                for jx in 0..nodes {
                    line[jx] = col[jx * stride + jy];
                }
                solve_spline_system(&line, &mut coef, &mut scratch);
                for jx in 0..nodes {
                    o[jx * stride + jy] = bspline_eval_open(&coef, jx as f64 - shift);
                }
            }
        });
    Ok(DistState {
        grid: f.grid,
        values,
        t: f.t,
    })
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { t: f64::NAN })
    }
}

/// Energy-conserving midpoint step for `∂_t f + E ∂_v f = 0`:
/// `f⁽²⁾ = fⁿ - Δt/2 Eⁿ D_v fⁿ`, `E^{n+1} = Eⁿ - Δt J(f⁽²⁾)`,
/// `f^{n+1} = fⁿ - Δt E_mid D_v f⁽²⁾` with `E_mid = (Eⁿ + E^{n+1})/2`.
pub fn rk2_velocity_stage(f: &DistState, e: &[f64], dt: f64) -> Result<(DistState, Vec<f64>)> {
    rk2_vlasov_stage(f, e, dt, None, &VlasovTerms::velocity_only())
}

/// Terms of the full right-hand side `-v D_x f - E D_v f + ν Q(f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlasovTerms {
    pub transport: bool,
    pub nu: f64,
    pub order: CollisionOrder,
}

impl VlasovTerms {
    pub fn velocity_only() -> Self {
        Self {
            transport: false,
            nu: 0.0,
            order: CollisionOrder::Second,
        }
    }
}

fn vlasov_rhs(
    grid: &PhaseGrid,
    values: &[f64],
    e: &[f64],
    plan: Option<&SpectralPlan>,
    terms: &VlasovTerms,
) -> Result<Vec<f64>> {
    let dvf = velocity_derivative(grid, values, e)?;
    let cl = grid.column_len();
    let mut rhs: Vec<f64> = dvf
        .chunks(cl)
        .zip(e)
        .flat_map(|(col, &ei)| col.iter().map(move |d| -ei * d))
        .collect();
    if terms.transport {
        let plan = plan.ok_or_else(|| Error::InvalidConfig("transport term needs a plan".into()))?;
        let dxf = map_x_lines(grid, values, |_, line| {
            let d = spectral_derivative(line, plan);
            line.copy_from_slice(&d);
        });
        for (i, (r, d)) in rhs.iter_mut().zip(&dxf).enumerate() {
            *r -= grid.velocity_of(i % cl).0 * d;
        }
    }
    if terms.nu != 0.0 {
        let vg = grid.velocity;
        rhs.par_chunks_mut(cl)
            .zip(values.par_chunks(cl))
            .try_for_each_init(
                || (vec![0.0; cl], CollisionWorkspace::new()),
                |(q, ws), (r, col)| -> Result<()> {
                    if vg.dims() == 1 {
                        collision_into(terms.order, col, &vg, 0.0, q, ws)?;
                    } else {
                        q2d_apply_into(col, &vg, [0.0; 2], q)?;
                    }
                    for (r, q) in r.iter_mut().zip(q.iter()) {
                        *r += terms.nu * q;
                    }
                    Ok(())
                },
            )?;
    }
    Ok(rhs)
}

/// Explicit midpoint rule on the selected Vlasov terms with the Ampère
/// field update on the midpoint stage. Returns `(f^{n+1}, E^{n+1})`.
pub fn rk2_vlasov_stage(
    f: &DistState,
    e: &[f64],
    dt: f64,
    plan: Option<&SpectralPlan>,
    terms: &VlasovTerms,
) -> Result<(DistState, Vec<f64>)> {
    let grid = f.grid;
    let k1 = vlasov_rhs(&grid, &f.values, e, plan, terms)?;
    let mid: Vec<f64> = f
        .values
        .iter()
        .zip(&k1)
        .map(|(f, k)| f + 0.5 * dt * k)
        .collect();
    check_finite(&mid)?;
    let e_new: Vec<f64> = e
        .iter()
        .zip(current_of(&grid, &mid))
        .map(|(e, j)| e - dt * j)
        .collect();
    let e_mid: Vec<f64> = e.iter().zip(&e_new).map(|(a, b)| 0.5 * (a + b)).collect();
    let k2 = vlasov_rhs(&grid, &mid, &e_mid, plan, terms)?;
    let values: Vec<f64> = f.values.iter().zip(&k2).map(|(f, k)| f + dt * k).collect();
    check_finite(&values)?;
    check_finite(&e_new)?;
    Ok((
        DistState {
            grid,
            values,
            t: f.t,
        },
        e_new,
    ))
}
