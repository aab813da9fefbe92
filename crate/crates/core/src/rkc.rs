//! Explicit stabilized Runge-Kutta-Chebyshev integrators.
//!
//! Both methods advance `y' = F(y)` with `s` internal stages built from the
//! three-term Chebyshev recurrence, so the real stability interval grows like
//! `s²`. RKC1 is first order with `R(z) = T_s(ω₀ + ω₁z) / T_s(ω₀)`; RKC2 is
//! second order with `R(z) = a_s + b_s T_s(ω₀ + ω₂z)`.
//!
//! Both recursions are stored in one shape,
//!
//! ```text
//! K_ℓ = (1 - κ_ℓ - ν_ℓ) K_0 + κ_ℓ K_{ℓ-2} + ν_ℓ K_{ℓ-1}
//!       + μ_ℓ Δt F(K_{ℓ-1}) + γ_ℓ Δt F(K_0),
//! ```
//!
//! where RKC1 has `κ_ℓ = 1 - ν_ℓ` and `γ_ℓ = 0`.

use std::collections::HashMap;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::collision::CollisionOrder;
use crate::error::{Error, Result};
use crate::mesh::VelocityGrid;

pub const DEFAULT_ETA_RKC1: f64 = 0.05;
pub const DEFAULT_ETA_RKC2: f64 = 0.15;

/// Safety factor applied to the analytic spectral bound.
pub const SPECTRAL_SAFETY: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RkcMethod {
    Rkc1,
    Rkc2,
}

impl RkcMethod {
    pub fn default_eta(self) -> f64 {
        match self {
            RkcMethod::Rkc1 => DEFAULT_ETA_RKC1,
            RkcMethod::Rkc2 => DEFAULT_ETA_RKC2,
        }
    }
}

/// Time integrator for the collision substep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Rkc1,
    Rkc2,
    /// Explicit midpoint rule, with a forward-Euler difference as error estimate.
    Rk2,
}

impl Integrator {
    pub fn rkc_method(self) -> Option<RkcMethod> {
        match self {
            Integrator::Rkc1 => Some(RkcMethod::Rkc1),
            Integrator::Rkc2 => Some(RkcMethod::Rkc2),
            Integrator::Rk2 => None,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "rkc1" => Some(Integrator::Rkc1),
            "rkc2" | "rkc" => Some(Integrator::Rkc2),
            "rk2" => Some(Integrator::Rk2),
            _ => None,
        }
    }
}

/// `(T_s(x), T'_s(x), T''_s(x))` from the three-term recurrence.
pub fn cheb_eval(s: usize, x: f64) -> (f64, f64, f64) {
    *cheb_table(s, x).last().expect("table has s + 1 entries")
}

/// All `(T_ℓ, T'_ℓ, T''_ℓ)` for `ℓ = 0..=s`.
pub fn cheb_table(s: usize, x: f64) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(s + 1);
    out.push((1.0, 0.0, 0.0));
    if s >= 1 {
        out.push((x, 1.0, 0.0));
    }
    for j in 2..=s {
        let (t1, d1, dd1) = out[j - 1];
        let (t2, d2, dd2) = out[j - 2];
        out.push((
            2.0 * x * t1 - t2,
            2.0 * t1 + 2.0 * x * d1 - d2,
            4.0 * d1 + 2.0 * x * dd1 - dd2,
        ));
    }
    out
}

/// Chebyshev polynomial at a complex argument.
pub fn cheb_complex(s: usize, z: Complex64) -> Complex64 {
    let (mut prev, mut cur) = (Complex64::new(1.0, 0.0), z);
    if s == 0 {
        return prev;
    }
    for _ in 2..=s {
        let next = 2.0 * z * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Stage coefficients for one `(method, s, η)`. Per-stage arrays are indexed
/// by `ℓ` and have length `s + 1`; entry 0 is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct RkcCoeffs {
    pub method: RkcMethod,
    pub s: usize,
    pub eta: f64,
    pub w0: f64,
    /// ω₁ = T_s/T'_s for RKC1, ω₂ = T'_s/T''_s for RKC2: the argument scale.
    pub w1: f64,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub kappa: Vec<f64>,
    pub gamma: Vec<f64>,
    /// RKC2 only (empty for RKC1).
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Real stability boundary `(1 + ω₀)/ω` where the argument reaches -1.
    pub beta: f64,
}

impl RkcCoeffs {
    pub fn new(method: RkcMethod, s: usize, eta: f64) -> Result<Self> {
        match method {
            RkcMethod::Rkc1 => rkc1_coeffs(s, eta),
            RkcMethod::Rkc2 => rkc2_coeffs(s, eta),
        }
    }

    /// `C_η = β / s²`, the constant in `[-C_η s², 0] ⊂ S`.
    pub fn c_eta(&self) -> f64 {
        self.beta / (self.s * self.s) as f64
    }

    pub fn stability(&self, z: Complex64) -> Complex64 {
        let arg = self.w0 + self.w1 * z;
        match self.method {
            RkcMethod::Rkc1 => cheb_complex(self.s, arg) / cheb_eval(self.s, self.w0).0,
            RkcMethod::Rkc2 => self.a[self.s] + self.b[self.s] * cheb_complex(self.s, arg),
        }
    }

    pub fn stability_real(&self, z: f64) -> f64 {
        let (ts, _, _) = cheb_eval(self.s, self.w0 + self.w1 * z);
        match self.method {
            RkcMethod::Rkc1 => ts / cheb_eval(self.s, self.w0).0,
            RkcMethod::Rkc2 => self.a[self.s] + self.b[self.s] * ts,
        }
    }

    /// `(R(0), R'(0), R''(0))` from the Chebyshev derivatives at `ω₀`.
    pub fn stability_derivatives(&self) -> (f64, f64, f64) {
        let (t, d, dd) = cheb_eval(self.s, self.w0);
        let w = self.w1;
        match self.method {
            RkcMethod::Rkc1 => (1.0, w * d / t, w * w * dd / t),
            RkcMethod::Rkc2 => {
                let (a, b) = (self.a[self.s], self.b[self.s]);
                (a + b * t, b * w * d, b * w * w * dd)
            }
        }
    }
}

pub fn rkc1_coeffs(s: usize, eta: f64) -> Result<RkcCoeffs> {
    if s < 2 {
        return Err(Error::BadStageCount(s));
    }
    let w0 = 1.0 + eta / (s * s) as f64;
    let tab = cheb_table(s, w0);
    let w1 = tab[s].0 / tab[s].1;
    let mut mu = vec![0.0; s + 1];
    let mut nu = vec![0.0; s + 1];
    let mut kappa = vec![0.0; s + 1];
    mu[1] = w1 / w0;
    for l in 2..=s {
        mu[l] = 2.0 * w1 * tab[l - 1].0 / tab[l].0;
        nu[l] = 2.0 * w0 * tab[l - 1].0 / tab[l].0;
        kappa[l] = 1.0 - nu[l];
    }
    Ok(RkcCoeffs {
        method: RkcMethod::Rkc1,
        s,
        eta,
        w0,
        w1,
        mu,
        nu,
        kappa,
        gamma: vec![0.0; s + 1],
        a: Vec::new(),
        b: Vec::new(),
        beta: (1.0 + w0) / w1,
    })
}

pub fn rkc2_coeffs(s: usize, eta: f64) -> Result<RkcCoeffs> {
    if s < 2 {
        return Err(Error::BadStageCount(s));
    }
    let w0 = 1.0 + eta / (s * s) as f64;
    let tab = cheb_table(s, w0);
    let w2 = tab[s].1 / tab[s].2;
    let mut b = vec![0.0; s + 1];
    for l in 2..=s {
        b[l] = tab[l].2 / (tab[l].1 * tab[l].1);
    }
    b[0] = b[2];
    b[1] = b[2];
    let a: Vec<f64> = (0..=s).map(|l| 1.0 - b[l] * tab[l].0).collect();
    let mut mu = vec![0.0; s + 1];
    let mut nu = vec![0.0; s + 1];
    let mut kappa = vec![0.0; s + 1];
    let mut gamma = vec![0.0; s + 1];
    // First stage: K_1 = K_0 + b_1 ω₂ Δt F(K_0), which reproduces
    // R_1(z) = a_1 + b_1 T_1(ω₀ + ω₂ z).
    mu[1] = b[1] * w2;
    kappa[1] = 0.0;
    nu[1] = 1.0;
    for l in 2..=s {
        mu[l] = 2.0 * b[l] * w2 / b[l - 1];
        nu[l] = 2.0 * b[l] * w0 / b[l - 1];
        kappa[l] = -b[l] / b[l - 2];
        gamma[l] = -a[l - 1] * mu[l];
    }
    Ok(RkcCoeffs {
        method: RkcMethod::Rkc2,
        s,
        eta,
        w0,
        w1: w2,
        mu,
        nu,
        kappa,
        gamma,
        a,
        b,
        beta: (1.0 + w0) / w2,
    })
}

/// `R(z)` for a method, stage count and damping.
pub fn stability_function(method: RkcMethod, s: usize, eta: f64, z: Complex64) -> Result<Complex64> {
    Ok(RkcCoeffs::new(method, s, eta)?.stability(z))
}

/// `(re z, im z, |R(z)|)` on an `n_re × n_im` lattice covering
/// `[re.0, re.1] × [im.0, im.1]`, row-major in `im`.
pub fn stability_scan(
    c: &RkcCoeffs,
    re: (f64, f64),
    im: (f64, f64),
    n_re: usize,
    n_im: usize,
) -> Vec<(f64, f64, f64)> {
    let lin = |r: (f64, f64), n: usize, k: usize| {
        if n <= 1 {
            r.0
        } else {
            r.0 + (r.1 - r.0) * k as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(n_re * n_im);
    for a in 0..n_re {
        let x = lin(re, n_re, a);
        for b in 0..n_im {
            let y = lin(im, n_im, b);
            out.push((x, y, c.stability(Complex64::new(x, y)).norm()));
        }
    }
    out
}

/// `(z, R(z))` at `n` points from `-β - 5` to 1.
pub fn real_trace(c: &RkcCoeffs, n: usize) -> Vec<(f64, f64)> {
    let lo = -c.beta - 5.0;
    let n = n.max(2);
    (0..n)
        .map(|k| {
            let z = lo + (1.0 - lo) * k as f64 / (n - 1) as f64;
            (z, c.stability_real(z))
        })
        .collect()
}

/// Half-width of the connected `|R| ≤ 1` band through `re` on the real axis,
/// found by stepping in `im` with increment `h` up to `limit`.
pub fn imaginary_width(c: &RkcCoeffs, re: f64, h: f64, limit: f64) -> f64 {
    let mut y = 0.0;
    while y + h <= limit && c.stability(Complex64::new(re, y + h)).norm() <= 1.0 {
        y += h;
    }
    y
}

/// Stage buffers for one advancing sequence.
#[derive(Debug, Default, Clone)]
pub struct RkcWorkspace {
    k0: Vec<f64>,
    km2: Vec<f64>,
    km1: Vec<f64>,
    kn: Vec<f64>,
    fk: Vec<f64>,
    f0: Vec<f64>,
}

impl RkcWorkspace {
    pub fn new(len: usize) -> Self {
        let z = vec![0.0; len];
        Self {
            k0: z.clone(),
            km2: z.clone(),
            km1: z.clone(),
            kn: z.clone(),
            fk: z.clone(),
            f0: z,
        }
    }

    fn ensure(&mut self, len: usize) {
        for b in [
            &mut self.k0,
            &mut self.km2,
            &mut self.km1,
            &mut self.kn,
            &mut self.fk,
            &mut self.f0,
        ] {
            b.resize(len, 0.0);
        }
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// One RKC step in place. Performs exactly `s` right-hand-side evaluations,
/// which are returned.
pub fn rkc_step<R>(
    coeffs: &RkcCoeffs,
    y: &mut [f64],
    dt: f64,
    mut rhs: R,
    ws: &mut RkcWorkspace,
) -> Result<usize>
where
    R: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    ws.ensure(y.len());
    let mut f0 = std::mem::take(&mut ws.f0);
    rhs(y, &mut f0)?;
    let evals = rkc_step_from(coeffs, y, &f0, dt, rhs, ws);
    ws.f0 = f0;
    Ok(evals? + 1)
}

/// One RKC step reusing a precomputed `F(y)`; performs `s - 1` evaluations.
pub fn rkc_step_from<R>(
    coeffs: &RkcCoeffs,
    y: &mut [f64],
    f0: &[f64],
    dt: f64,
    mut rhs: R,
    ws: &mut RkcWorkspace,
) -> Result<usize>
where
    R: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    // Stages are carried as increments D_ℓ = K_ℓ - K_0, which keeps a zero
    // right-hand side bitwise stationary.
    ws.ensure(y.len());
    ws.k0.copy_from_slice(y);
    ws.km2.fill(0.0);
    let mu1 = coeffs.mu[1] * dt;
    for (d1, f) in ws.km1.iter_mut().zip(f0) {
        *d1 = mu1 * f;
    }
    let mut evals = 0;
    for l in 2..=coeffs.s {
        for ((k, y0), d) in ws.kn.iter_mut().zip(&ws.k0).zip(&ws.km1) {
            *k = y0 + d;
        }
        rhs(&ws.kn, &mut ws.fk)?;
        evals += 1;
        let (kappa, nu) = (coeffs.kappa[l], coeffs.nu[l]);
        let mu = coeffs.mu[l] * dt;
        let gamma = coeffs.gamma[l] * dt;
        for i in 0..y.len() {
            ws.kn[i] = kappa * ws.km2[i] + nu * ws.km1[i] + mu * ws.fk[i] + gamma * f0[i];
        }
        if !all_finite(&ws.kn) {
            return Err(Error::NonFiniteState { t: f64::NAN });
        }
        std::mem::swap(&mut ws.km2, &mut ws.km1);
        std::mem::swap(&mut ws.km1, &mut ws.kn);
    }
    for (y, d) in y.iter_mut().zip(&ws.km1) {
        *y += d;
    }
    if !all_finite(y) {
        return Err(Error::NonFiniteState { t: f64::NAN });
    }
    Ok(evals)
}

/// One explicit-midpoint step; also returns the Euler-difference error
/// estimate `Δt (F(y + Δt/2 F(y)) - F(y))` in `est`.
pub fn rk2_step<R>(
    y: &mut [f64],
    f0: &[f64],
    dt: f64,
    mut rhs: R,
    est: &mut [f64],
    ws: &mut RkcWorkspace,
) -> Result<usize>
where
    R: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    ws.ensure(y.len());
    for i in 0..y.len() {
        ws.kn[i] = y[i] + 0.5 * dt * f0[i];
    }
    rhs(&ws.kn, &mut ws.fk)?;
    for i in 0..y.len() {
        y[i] += dt * ws.fk[i];
        est[i] = dt * (ws.fk[i] - f0[i]);
    }
    if !all_finite(y) {
        return Err(Error::NonFiniteState { t: f64::NAN });
    }
    Ok(1)
}

/// Analytic bound on the spectral radius of `ν Q` (or `ν Q̃`):
/// `4νT/Δv²` per velocity axis, scaled for the fourth-order stencil,
/// times a safety factor, plus `advection_scale`.
pub fn spectral_bound(
    vg: &VelocityGrid,
    nu: f64,
    temperature: f64,
    advection_scale: f64,
    order: CollisionOrder,
) -> Result<f64> {
    if nu == 0.0 {
        return Ok(advection_scale.max(0.0));
    }
    if !(temperature > 0.0) {
        return Err(Error::DegenerateDensity {
            n: f64::NAN,
            temperature,
        });
    }
    let dv = vg.dv();
    let order_factor = match order {
        CollisionOrder::Second => 1.0,
        // (-1, 28, -54, 28, -1)/24 plus the second-difference correction.
        CollisionOrder::Fourth => 4.0 / 3.0,
    };
    let per_axis = 4.0 * nu * temperature / (dv * dv);
    Ok(SPECTRAL_SAFETY * per_axis * vg.dims() as f64 * order_factor + advection_scale.max(0.0))
}

/// Spectral radius bound from Gershgorin column discs of an assembled matrix.
pub fn gershgorin_spectral_bound(a: &crate::collision::DenseMatrix) -> f64 {
    let d = crate::collision::gershgorin_columns(a);
    d.min_real.abs().max(d.max_real.abs())
}

/// `s = [sqrt((Δt λ + 1.5)/C_η) + 0.5]`, rounded to nearest, at least 2.
pub fn stage_select(dt: f64, lambda_max: f64, c_eta: f64) -> usize {
    let x = ((dt * lambda_max + 1.5) / c_eta).sqrt() + 0.5;
    (x.round() as usize).max(2)
}

/// Caches coefficient tables by stage count for one `(method, η)`.
#[derive(Debug, Clone)]
pub struct CoeffCache {
    method: RkcMethod,
    eta: f64,
    tables: HashMap<usize, RkcCoeffs>,
}

impl CoeffCache {
    pub fn new(method: RkcMethod, eta: f64) -> Self {
        Self {
            method,
            eta,
            tables: HashMap::new(),
        }
    }

    pub fn method(&self) -> RkcMethod {
        self.method
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn get(&mut self, s: usize) -> Result<&RkcCoeffs> {
        if !self.tables.contains_key(&s) {
            let c = RkcCoeffs::new(self.method, s, self.eta)?;
            self.tables.insert(s, c);
        }
        Ok(&self.tables[&s])
    }

    /// Stage count for `Δt λ`, with `C_η` evaluated at the selected `s`
    /// (fixed-point iteration; `C_η` varies slowly with `s`).
    pub fn select(&mut self, dt: f64, lambda_max: f64) -> Result<usize> {
        let mut s = stage_select(dt, lambda_max, self.get(2)?.c_eta());
        for _ in 0..8 {
            let next = stage_select(dt, lambda_max, self.get(s)?.c_eta());
            if next == s {
                break;
            }
            s = next;
        }
        Ok(s)
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Time at the end of the step (start time for rejected steps).
    pub t: f64,
    pub dt: f64,
    pub stages: usize,
    pub err: f64,
    pub accepted: bool,
    /// Cumulative right-hand-side evaluations.
    pub nrhs: usize,
    pub wall_time: f64,
}

/// Step-size controller: RMS error norm scaled by `tol (1 + |f^n|)`,
/// `Δt ← Δt · min(fac_max, max(fac_min, safety · err^{-exponent}))`.
#[derive(Debug, Clone)]
pub struct StepController {
    pub tol: f64,
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub fac_min: f64,
    pub fac_max: f64,
    pub exponent: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    underflows: usize,
}

pub const MAX_UNDERFLOWS: usize = 10;

impl StepController {
    pub fn new(tol: f64, dt0: f64) -> Self {
        Self {
            tol,
            dt: dt0,
            dt_min: 1e-12,
            dt_max: f64::INFINITY,
            safety: 0.8,
            fac_min: 0.1,
            fac_max: 10.0,
            exponent: 1.0 / 3.0,
            accepted: 0,
            rejected: 0,
            rhs_evals: 0,
            underflows: 0,
        }
    }

    /// Controller constants for an integrator whose estimate is `O(Δt^{p+1})`.
    pub fn for_integrator(integrator: Integrator, tol: f64, dt0: f64) -> Self {
        let mut c = Self::new(tol, dt0);
        if integrator == Integrator::Rk2 {
            c.exponent = 0.5;
        }
        c
    }

    /// `sqrt(mean((est_i / (tol (1 + |f_i|)))²))`.
    pub fn error_norm(&self, est: &[f64], f_n: &[f64]) -> f64 {
        let sum: f64 = est
            .iter()
            .zip(f_n)
            .map(|(e, f)| {
                let r = e / (self.tol * (1.0 + f.abs()));
                r * r
            })
            .sum();
        (sum / est.len().max(1) as f64).sqrt()
    }

    /// Records an attempt with error `err` and updates `dt`. Returns whether
    /// the step is accepted.
    pub fn assess(&mut self, err: f64, t: f64) -> Result<bool> {
        let accept = err.is_finite() && err <= 1.0;
        let factor = if !err.is_finite() {
            self.fac_min
        } else if err == 0.0 {
            self.fac_max
        } else {
            (self.safety * err.powf(-self.exponent)).clamp(self.fac_min, self.fac_max)
        };
        if accept {
            self.accepted += 1;
            self.underflows = 0;
        } else {
            self.rejected += 1;
            if self.dt <= self.dt_min {
                self.underflows += 1;
                if self.underflows >= MAX_UNDERFLOWS {
                    return Err(Error::StepUnderflow { t });
                }
            }
        }
        self.dt = (self.dt * factor).clamp(self.dt_min, self.dt_max);
        Ok(accept)
    }
}

/// `Est = (12(f^n - f^{n+1}) + 6Δt(F^n + F^{n+1}))/15`.
pub fn rkc_error_estimate(f_n: &[f64], f_np1: &[f64], q_n: &[f64], q_np1: &[f64], dt: f64, est: &mut [f64]) {
    for i in 0..est.len() {
        est[i] = (12.0 * (f_n[i] - f_np1[i]) + 6.0 * dt * (q_n[i] + q_np1[i])) / 15.0;
    }
}

/// Result of one step attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attempt {
    pub stages: usize,
    /// Right-hand-side evaluations spent by the attempt, excluding `F(y^n)`.
    pub evals: usize,
}

/// One integrator with its coefficient cache and stage buffers.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub integrator: Integrator,
    /// Overrides the stage selection for RKC methods.
    pub fixed_stages: Option<usize>,
    cache: Option<CoeffCache>,
    ws: RkcWorkspace,
}

impl Stepper {
    pub fn new(integrator: Integrator, eta: f64) -> Self {
        Self {
            integrator,
            fixed_stages: None,
            cache: integrator.rkc_method().map(|m| CoeffCache::new(m, eta)),
            ws: RkcWorkspace::default(),
        }
    }

    pub fn with_default_eta(integrator: Integrator) -> Self {
        let eta = integrator.rkc_method().map_or(0.0, RkcMethod::default_eta);
        Self::new(integrator, eta)
    }

    pub fn stages_for(&mut self, dt: f64, lambda_max: f64) -> Result<usize> {
        match (&mut self.cache, self.fixed_stages) {
            (None, _) => Ok(2),
            (Some(_), Some(s)) => Ok(s),
            (Some(cache), None) => cache.select(dt, lambda_max),
        }
    }

    /// Advances `y` (with `f_n = F(y)`) by `dt` into `y_new`. With `est`
    /// present the local error estimate is written there; RKC methods then
    /// also leave `F(y_new)` in `f_new`.
    #[allow(clippy::too_many_arguments)]
    pub fn attempt<R>(
        &mut self,
        y: &[f64],
        f_n: &[f64],
        dt: f64,
        lambda_max: f64,
        mut rhs: R,
        y_new: &mut [f64],
        f_new: &mut [f64],
        est: Option<&mut [f64]>,
    ) -> Result<Attempt>
    where
        R: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let s = self.stages_for(dt, lambda_max)?;
        y_new.copy_from_slice(y);
        match &mut self.cache {
            Some(cache) => {
                let coeffs = cache.get(s)?;
                let mut evals = rkc_step_from(coeffs, y_new, f_n, dt, &mut rhs, &mut self.ws)?;
                if let Some(est) = est {
                    rhs(y_new, f_new)?;
                    evals += 1;
                    rkc_error_estimate(y, y_new, f_n, f_new, dt, est);
                }
                Ok(Attempt { stages: s, evals })
            }
            None => {
                let mut scratch;
                let est = match est {
                    Some(e) => e,
                    None => {
                        scratch = vec![0.0; y.len()];
                        &mut scratch[..]
                    }
                };
                let evals = rk2_step(y_new, f_n, dt, &mut rhs, est, &mut self.ws)?;
                Ok(Attempt { stages: 2, evals })
            }
        }
    }
}

/// Integrates `y' = F(y)` from `t0` to `t_end` with error control.
///
/// For RKC methods the stage count is re-selected every step from
/// `lambda(y)`; `F(y^{n+1})` computed for the estimate is reused as the next
/// step's `F(y^n)`. Rejected steps restart from the pre-step state.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_advance<R, L>(
    controller: &mut StepController,
    integrator: Integrator,
    eta: f64,
    y: &mut Vec<f64>,
    t0: f64,
    t_end: f64,
    mut rhs: R,
    mut lambda: L,
) -> Result<Vec<StepRecord>>
where
    R: FnMut(&[f64], &mut [f64]) -> Result<()>,
    L: FnMut(&[f64]) -> Result<f64>,
{
    let n = y.len();
    let mut stepper = Stepper::new(integrator, eta);
    let reuse = integrator.rkc_method().is_some();
    let mut f_n = vec![0.0; n];
    let mut f_np1 = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut est = vec![0.0; n];
    let mut records = Vec::new();
    let mut t = t0;
    let clock = Instant::now();
    let mut f_n_valid = false;

    while t < t_end {
        let dt = controller.dt.min(t_end - t);
        if !f_n_valid {
            rhs(y, &mut f_n).map_err(|e| e.at_time(t))?;
            controller.rhs_evals += 1;
            f_n_valid = true;
        }
        let lam = lambda(y)?;
        let attempt = stepper.attempt(y, &f_n, dt, lam, &mut rhs, &mut trial, &mut f_np1, Some(&mut est));
        let (stages, err) = match attempt {
            Ok(a) => {
                controller.rhs_evals += a.evals;
                (a.stages, controller.error_norm(&est, y))
            }
            Err(Error::NonFiniteState { .. }) => (0, f64::INFINITY),
            Err(e) => return Err(e.at_time(t)),
        };
        let accepted = controller.assess(err, t)?;
        if accepted {
            t = if t_end - t <= dt { t_end } else { t + dt };
            std::mem::swap(y, &mut trial);
            if reuse {
                std::mem::swap(&mut f_n, &mut f_np1);
            } else {
                f_n_valid = false;
            }
        }
        records.push(StepRecord {
            t,
            dt,
            stages,
            err,
            accepted,
            nrhs: controller.rhs_evals,
            wall_time: clock.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}
