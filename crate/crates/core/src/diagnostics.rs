//! Invariants, entropy, distance to equilibrium and damping-rate fits.

use crate::collision::{
    discrete_maxwellian, discrete_maxwellian_2d, staggered_moments, staggered_moments_2d,
};
use crate::error::{Error, Result};
use crate::mesh::DistState;

/// Mass, momentum and energies of one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Invariants {
    pub mass: f64,
    pub momentum_x: f64,
    pub momentum_y: f64,
    pub kinetic: f64,
    pub electric: f64,
    pub total: f64,
}

/// Phase-space integrals with weight `Δx Δv^d` (no `Δx` when homogeneous);
/// electric energy is `(Δx/2) Σ E_i²`.
pub fn invariants(f: &DistState, e: Option<&[f64]>) -> Invariants {
    let grid = &f.grid;
    let w = grid.dx() * grid.velocity.cell_volume();
    let cl = grid.column_len();
    let (mut mass, mut px, mut py, mut kin) = (0.0, 0.0, 0.0, 0.0);
    for col in f.values.chunks(cl) {
        for (c, &fv) in col.iter().enumerate() {
            let (vx, vy) = grid.velocity_of(c);
            mass += fv;
            px += vx * fv;
            py += vy * fv;
            kin += 0.5 * (vx * vx + vy * vy) * fv;
        }
    }
    let electric = match (e, grid.space) {
        (Some(e), Some(_)) => 0.5 * grid.dx() * e.iter().map(|x| x * x).sum::<f64>(),
        _ => 0.0,
    };
    let kinetic = w * kin;
    Invariants {
        mass: w * mass,
        momentum_x: w * px,
        momentum_y: w * py,
        kinetic,
        electric,
        total: kinetic + electric,
    }
}

/// Moment-matched discrete Maxwellian of every spatial column, laid out
/// like `f.values`.
pub fn reference_maxwellian(f: &DistState) -> Result<Vec<f64>> {
    let vg = f.grid.velocity;
    let mut out = Vec::with_capacity(f.values.len());
    for col in f.values.chunks(f.grid.column_len()) {
        if vg.dims() == 1 {
            let m = staggered_moments(col, &vg)?;
            out.extend(discrete_maxwellian(m.n, m.u, m.t, &vg)?);
        } else {
            let m = staggered_moments_2d(col, &vg)?;
            out.extend(discrete_maxwellian_2d(m.n, m.ux, m.uy, m.t, &vg)?);
        }
    }
    Ok(out)
}

/// `ℰ = Δx Δv^d Σ f² / M_ref`.
pub fn entropy(f: &DistState, m_ref: &[f64]) -> Result<f64> {
    let w = f.grid.dx() * f.grid.velocity.cell_volume();
    let mut sum = 0.0;
    for (fv, m) in f.values.iter().zip(m_ref) {
        if !(*m > 0.0) {
            return Err(Error::DegenerateDensity {
                n: *m,
                temperature: f64::NAN,
            });
        }
        sum += fv * fv / m;
    }
    Ok(w * sum)
}

/// Discrete L² distance `(Δx Δv^d Σ (f - M)²)^{1/2}`.
pub fn l2_distance(f: &DistState, m_ref: &[f64]) -> f64 {
    let w = f.grid.dx() * f.grid.velocity.cell_volume();
    let s: f64 = f
        .values
        .iter()
        .zip(m_ref)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (w * s).sqrt()
}

/// One emitted diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagRow {
    pub t: f64,
    pub inv: Invariants,
    pub entropy: f64,
    pub l2_maxwellian: f64,
    pub dt: f64,
    pub stages: usize,
    pub nrhs: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagSeries {
    /// Whether the `momentum_y` column is present.
    pub two_d: bool,
    pub rows: Vec<DiagRow>,
}

impl DiagSeries {
    pub fn new(two_d: bool) -> Self {
        Self {
            two_d,
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &'static str {
        if self.two_d {
            "t,mass,momentum_x,momentum_y,e_kin,e_elec,e_tot,entropy,l2_maxwellian,dt,stages,nrhs"
        } else {
            "t,mass,momentum_x,e_kin,e_elec,e_tot,entropy,l2_maxwellian,dt,stages,nrhs"
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn electric(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.inv.electric).collect()
    }

    /// Raw deviations `D(t) = Q(t) - Q(0)` of mass, momentum_x and total energy.
    pub fn deviations(&self) -> Vec<[f64; 3]> {
        let Some(first) = self.rows.first() else {
            return Vec::new();
        };
        self.rows
            .iter()
            .map(|r| {
                [
                    r.inv.mass - first.inv.mass,
                    r.inv.momentum_x - first.inv.momentum_x,
                    r.inv.total - first.inv.total,
                ]
            })
            .collect()
    }
}

/// Convention for the rate returned by [`fit_damping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateKind {
    /// Rate of the field amplitude: half the electric-energy rate.
    #[default]
    Field,
    Energy,
}

pub const MIN_PEAKS: usize = 4;

/// Local maxima `(t, value)` of a sampled signal with `t` in `[t0, t1]`.
pub fn find_peaks(t: &[f64], y: &[f64], window: (f64, f64)) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if t[i] < window.0 || t[i] > window.1 {
            continue;
        }
        if y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > 0.0 {
            out.push((t[i], y[i]));
        }
    }
    out
}

/// Least-squares slope of `ln(peak)` against peak time, for electric
/// energy samples `(t, energy)`. Returns the field-amplitude rate by default.
pub fn fit_damping(t: &[f64], energy: &[f64], window: (f64, f64), kind: RateKind) -> Result<f64> {
    let peaks = find_peaks(t, energy, window);
    if peaks.len() < MIN_PEAKS {
        return Err(Error::TooFewPeaks {
            found: peaks.len(),
            needed: MIN_PEAKS,
        });
    }
    let xs: Vec<f64> = peaks.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = peaks.iter().map(|p| p.1.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    Ok(match kind {
        RateKind::Field => 0.5 * slope,
        RateKind::Energy => slope,
    })
}

/// Slope of the least-squares line through `(x, y)`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
