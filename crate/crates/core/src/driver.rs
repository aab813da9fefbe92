//! Scenarios and time loops: the homogeneous relaxation loop and the
//! SL-RKC, SL-RK2-RKC and three-step 1dx-2dv splittings.
//!
//! Error control, when enabled, only looks at the collision substep. A step
//! is computed into fresh buffers and committed only once accepted, so a
//! rejection leaves `(f, E, t)` untouched.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{
    collision_into, maxwellian, maxwellian_2d, q2d_apply_into, staggered_moments,
    staggered_moments_2d, CollisionOrder, CollisionWorkspace,
};
use crate::diagnostics::{entropy, invariants, l2_distance, reference_maxwellian, DiagRow, DiagSeries};
use crate::error::{Error, Result};
use crate::mesh::{sample_on_grid, DistState, PhaseGrid};
use crate::rkc::{spectral_bound, Integrator, StepController, StepRecord, Stepper};
use crate::transport::{advect_v_sl, advect_x, poisson_field, rk2_velocity_stage, SpectralPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splitting {
    Homogeneous,
    SlRkc,
    SlRk2Rkc,
    Strang2dv,
}

impl Splitting {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "homogeneous" => Some(Splitting::Homogeneous),
            "sl-rkc" => Some(Splitting::SlRkc),
            "sl-rk2-rkc" => Some(Splitting::SlRk2Rkc),
            "strang-2dv" => Some(Splitting::Strang2dv),
            _ => None,
        }
    }
}

/// Initial-condition families; parameters live on [`Scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    /// `M_{α,0,T_c} + M_{(1-α)/2,4,1} + M_{(1-α)/2,-4,1}`, no spatial axis.
    HomBump,
    /// `M_{1,0,1}(v)(1 + ε cos kx)`.
    Landau,
    /// `(α f_c + (1-α) f_h)(1 + β cos kx)` with `f_h ∝ v^γ e^{-v²/2}`.
    BumpTail,
    /// `(M_{n1,0,1} + M_{n2/2,u,0.2} + M_{n2/2,-u,0.2})(1 + ε cos kx)`.
    Valentini,
    /// `M_{1,0,0,1}(1 + ε cos kx)` on two velocity axes.
    Landau2d,
    /// `((1-α)/4 Σ M_{1,±3,±3,1/2} + α M_{1,0,0,1})(1 + ε cos kx)`.
    Beams2d,
}

impl InitialKind {
    /// Phase-grid descriptor dims (0 homogeneous, 1 or 2 velocity axes).
    pub fn dims(self) -> usize {
        match self {
            InitialKind::HomBump => 0,
            InitialKind::Landau | InitialKind::BumpTail | InitialKind::Valentini => 1,
            InitialKind::Landau2d | InitialKind::Beams2d => 2,
        }
    }
}

/// A complete run description. Serialized as flat TOML key/value pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub initial: InitialKind,
    pub splitting: Splitting,
    pub integrator: Integrator,
    /// Collision discretization order, 2 or 4 (4 needs one velocity axis).
    pub order: u32,
    /// RKC damping; the method default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Fixed RKC stage count instead of automatic selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,
    pub n_x: usize,
    pub n_v: usize,
    pub v_max: f64,
    pub nu: f64,
    /// Fixed step, or the initial step when `tol` is set.
    pub dt: f64,
    /// Enables adaptive stepping on the collision substep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    pub t_end: f64,
    /// Output interval in time; 0 emits after every accepted step.
    pub cadence: f64,
    /// Largest Courant number `|E| Δt / Δv` of one explicit velocity stage;
    /// longer steps are sub-cycled. 0 disables sub-cycling.
    #[serde(default = "default_vel_cfl")]
    pub vel_cfl: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub t_c: f64,
    #[serde(default)]
    pub beta: f64,
    /// Exponent of the `v^γ` tail.
    #[serde(default)]
    pub gamma: f64,
    /// Perturbation wavenumber; the domain length is `2π/k`.
    #[serde(default)]
    pub k: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub n1: f64,
    #[serde(default)]
    pub n2: f64,
    #[serde(default)]
    pub u: f64,
}

/// A velocity stage needing more sub-steps than this is treated as diverged.
const MAX_VELOCITY_SUBSTEPS: usize = 10_000;

fn default_vel_cfl() -> f64 {
    0.8
}

pub const BUILTIN_NAMES: [&str; 6] = [
    "hom-relax",
    "landau-1d",
    "bump-2beam",
    "bump-valentini",
    "landau-2dv",
    "beams-2dv",
];

impl Scenario {
    fn blank(name: &str, initial: InitialKind, splitting: Splitting) -> Self {
        Self {
            name: name.into(),
            initial,
            splitting,
            integrator: Integrator::Rkc2,
            order: 2,
            eta: None,
            stages: None,
            n_x: 128,
            n_v: 256,
            v_max: 12.0,
            nu: 0.0,
            dt: 0.1,
            tol: None,
            dt_max: None,
            t_end: 1.0,
            cadence: 0.0,
            vel_cfl: default_vel_cfl(),
            alpha: 0.0,
            t_c: 0.0,
            beta: 0.0,
            gamma: 0.0,
            k: 0.0,
            eps: 0.0,
            n1: 0.0,
            n2: 0.0,
            u: 0.0,
        }
    }

    /// Named scenarios with the published test parameters.
    pub fn builtin(name: &str) -> Result<Self> {
        let s = match name {
            "hom-relax" => Self {
                alpha: 0.9,
                t_c: 0.2,
                n_x: 0,
                n_v: 256,
                v_max: 12.0,
                nu: 0.1,
                dt: 1e-3,
                tol: Some(1e-6),
                t_end: 100.0,
                ..Self::blank(name, InitialKind::HomBump, Splitting::Homogeneous)
            },
            "landau-1d" => Self {
                eps: 1e-3,
                k: 0.5,
                n_x: 128,
                n_v: 256,
                v_max: 12.0,
                dt: 0.1,
                t_end: 60.0,
                ..Self::blank(name, InitialKind::Landau, Splitting::SlRk2Rkc)
            },
            "bump-2beam" => Self {
                alpha: 0.9,
                t_c: 0.2,
                gamma: 10.0,
                beta: 0.5,
                k: 0.5,
                n_x: 128,
                n_v: 256,
                v_max: 14.0,
                nu: 0.1,
                dt: 1e-3,
                tol: Some(1e-6),
                t_end: 200.0,
                ..Self::blank(name, InitialKind::BumpTail, Splitting::SlRk2Rkc)
            },
            "bump-valentini" => Self {
                n1: 0.97,
                n2: 0.03,
                u: 4.0,
                eps: 0.00056,
                k: 2.0 * PI / 22.0,
                n_x: 128,
                n_v: 256,
                v_max: 14.0,
                dt: 1.0,
                t_end: 300.0,
                ..Self::blank(name, InitialKind::Valentini, Splitting::SlRk2Rkc)
            },
            "landau-2dv" => Self {
                eps: 1e-4,
                k: 0.3,
                n_x: 32,
                n_v: 64,
                v_max: 7.0,
                dt: 0.3,
                t_end: 50.0,
                ..Self::blank(name, InitialKind::Landau2d, Splitting::Strang2dv)
            },
            "beams-2dv" => Self {
                alpha: 0.5,
                eps: 0.01,
                k: 0.5,
                n_x: 32,
                n_v: 96,
                v_max: 18.0,
                nu: 0.1,
                dt: 0.5,
                stages: Some(5),
                t_end: 50.0,
                ..Self::blank(name, InitialKind::Beams2d, Splitting::Strang2dv)
            },
            other => return Err(Error::UnknownScenario(other.into())),
        };
        Ok(s)
    }

    /// Parses a TOML scenario. A `base = "<builtin>"` key starts from that
    /// scenario and applies the remaining keys as overrides.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        let merged = match table.remove("base") {
            Some(toml::Value::String(base)) => {
                let mut t = toml::Table::try_from(Self::builtin(&base)?)
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
                for (k, v) in table {
                    t.insert(k, v);
                }
                t
            }
            Some(_) => return Err(Error::InvalidConfig("`base` must be a string".into())),
            None => table,
        };
        let s: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn collision_order(&self) -> Result<CollisionOrder> {
        CollisionOrder::from_int(self.order)
            .ok_or_else(|| Error::InvalidConfig(format!("order must be 2 or 4, got {}", self.order)))
    }

    pub fn length(&self) -> f64 {
        if self.k > 0.0 {
            2.0 * PI / self.k
        } else {
            0.0
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| {
            self.integrator
                .rkc_method()
                .map_or(0.0, |m| m.default_eta())
        })
    }

    /// Checks parameter combinations before anything is allocated.
    pub fn validate(&self) -> Result<()> {
        let order = self.collision_order()?;
        let dims = self.initial.dims();
        let ok = match self.splitting {
            Splitting::Homogeneous => dims == 0,
            Splitting::SlRkc | Splitting::SlRk2Rkc => dims == 1,
            Splitting::Strang2dv => dims == 2,
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "splitting {:?} does not match initial condition {:?}",
                self.splitting, self.initial
            )));
        }
        if order == CollisionOrder::Fourth && dims == 2 {
            return Err(Error::InvalidConfig("fourth order needs one velocity axis".into()));
        }
        if dims > 0 && !(self.k > 0.0) {
            return Err(Error::NonPositiveExtent("k"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::InvalidConfig("t_end must be nonnegative".into()));
        }
        if !(self.nu >= 0.0) {
            return Err(Error::InvalidConfig("nu must be nonnegative".into()));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidConfig("tol must be positive".into()));
            }
        }
        if let Some(s) = self.stages {
            if s < 2 {
                return Err(Error::BadStageCount(s));
            }
        }
        if !(self.cadence >= 0.0) {
            return Err(Error::InvalidConfig("cadence must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::build(self.length(), self.n_x, self.v_max, self.n_v, self.initial.dims())
    }

    /// Samples the initial distribution.
    pub fn initial_state(&self, grid: &PhaseGrid) -> Result<DistState> {
        let s = self.clone();
        match self.initial {
            InitialKind::HomBump => sample_on_grid(grid, move |_, v, _| {
                let side = 0.5 * (1.0 - s.alpha);
                maxwellian(s.alpha, 0.0, s.t_c, v)
                    + maxwellian(side, 4.0, 1.0, v)
                    + maxwellian(side, -4.0, 1.0, v)
            }),
            InitialKind::Landau => sample_on_grid(grid, move |x, v, _| {
                maxwellian(1.0, 0.0, 1.0, v) * (1.0 + s.eps * (s.k * x).cos())
            }),
            InitialKind::BumpTail => {
                let rho_h = tail_normalization(s.gamma, s.v_max);
                sample_on_grid(grid, move |x, v, _| {
                    let fc = maxwellian(1.0, 0.0, s.t_c, v);
                    let fh = v.powf(s.gamma) * (-0.5 * v * v).exp() / (rho_h * (2.0 * PI).sqrt());
                    (s.alpha * fc + (1.0 - s.alpha) * fh) * (1.0 + s.beta * (s.k * x).cos())
                })
            }
            InitialKind::Valentini => sample_on_grid(grid, move |x, v, _| {
                (maxwellian(s.n1, 0.0, 1.0, v)
                    + maxwellian(0.5 * s.n2, s.u, 0.2, v)
                    + maxwellian(0.5 * s.n2, -s.u, 0.2, v))
                    * (1.0 + s.eps * (s.k * x).cos())
            }),
            InitialKind::Landau2d => sample_on_grid(grid, move |x, vx, vy| {
                maxwellian_2d(1.0, 0.0, 0.0, 1.0, vx, vy) * (1.0 + s.eps * (s.k * x).cos())
            }),
            InitialKind::Beams2d => sample_on_grid(grid, move |x, vx, vy| {
                let mut beams = 0.0;
                for (ux, uy) in [(3.0, 3.0), (3.0, -3.0), (-3.0, 3.0), (-3.0, -3.0)] {
                    beams += maxwellian_2d(1.0, ux, uy, 0.5, vx, vy);
                }
                (0.25 * (1.0 - s.alpha) * beams + s.alpha * maxwellian_2d(1.0, 0.0, 0.0, 1.0, vx, vy))
                    * (1.0 + s.eps * (s.k * x).cos())
            }),
        }
    }
}

/// `ρ_h = ∫_{-v_max}^{v_max} v^γ e^{-v²/2} dv / √(2π)` by composite Simpson.
pub fn tail_normalization(gamma: f64, v_max: f64) -> f64 {
    let n = 20_000;
    let h = 2.0 * v_max / n as f64;
    let g = |v: f64| v.powf(gamma) * (-0.5 * v * v).exp();
    let mut sum = g(-v_max) + g(v_max);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * g(-v_max + i as f64 * h);
    }
    sum * h / 3.0 / (2.0 * PI).sqrt()
}

/// One computed (not yet committed) step.
#[derive(Debug, Clone)]
pub struct Trial {
    pub f: DistState,
    pub e: Vec<f64>,
    /// Scaled error of the collision substep (0 without error control).
    pub err: f64,
    pub stages: usize,
    pub evals: usize,
    /// `ν Q(f)` of the new state when it came for free with the estimate.
    pub rhs_new: Option<Vec<f64>>,
}

struct Collided {
    f: DistState,
    err: f64,
    stages: usize,
    evals: usize,
    rhs_new: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub max_dt: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<StepRecord>,
    pub series: DiagSeries,
    pub final_state: DistState,
    pub field: Option<Vec<f64>>,
    pub summary: RunSummary,
}

/// Mutable simulation: scenario, grid, current `(f, E)` and integrator state.
pub struct Simulation {
    pub scenario: Scenario,
    pub grid: PhaseGrid,
    order: CollisionOrder,
    plan: Option<SpectralPlan>,
    stepper: Stepper,
    pub f: DistState,
    pub e: Vec<f64>,
    m_ref: Vec<f64>,
    /// `ν Q(f)` of the committed homogeneous state, if known.
    rhs_cache: Option<Vec<f64>>,
}

/// Whether a failure inside a trial step signals instability.
fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFiniteState { .. } | Error::DegenerateDensity { .. })
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let grid = scenario.build_grid()?;
        let f = scenario.initial_state(&grid)?;
        Self::from_state(scenario, f, None)
    }

    /// Starts from a given state; `field` (when present) is used verbatim
    /// instead of a Poisson solve.
    pub fn from_state(scenario: Scenario, f: DistState, field: Option<Vec<f64>>) -> Result<Self> {
        scenario.validate()?;
        let grid = f.grid;
        let order = scenario.collision_order()?;
        let plan = grid.space.as_ref().map(SpectralPlan::new);
        let e = match (&plan, field) {
            (_, Some(e)) => e,
            (Some(p), None) => poisson_field(&f, p)?,
            (None, None) => Vec::new(),
        };
        let m_ref = reference_maxwellian(&f)?;
        let mut stepper = Stepper::new(scenario.integrator, scenario.eta());
        stepper.fixed_stages = scenario.stages;
        Ok(Self {
            scenario,
            grid,
            order,
            plan,
            stepper,
            f,
            e,
            m_ref,
            rhs_cache: None,
        })
    }

    pub fn t(&self) -> f64 {
        self.f.t
    }

    pub fn plan(&self) -> Option<&SpectralPlan> {
        self.plan.as_ref()
    }

    fn plan_ref(&self) -> Result<&SpectralPlan> {
        self.plan
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("splitting needs a spatial axis".into()))
    }

    /// The electric field, or `None` for a homogeneous run.
    pub fn e_field(&self) -> Option<&[f64]> {
        (!self.grid.is_homogeneous()).then_some(self.e.as_slice())
    }

    pub fn diagnostics(&self, dt: f64, stages: usize, nrhs: usize) -> Result<DiagRow> {
        let field = if self.grid.is_homogeneous() {
            None
        } else {
            Some(&self.e[..])
        };
        Ok(DiagRow {
            t: self.f.t,
            inv: invariants(&self.f, field),
            entropy: entropy(&self.f, &self.m_ref)?,
            l2_maxwellian: l2_distance(&self.f, &self.m_ref),
            dt,
            stages,
            nrhs,
        })
    }

    /// Largest staggered temperature over the spatial columns.
    fn max_temperature(&self, values: &[f64]) -> Result<f64> {
        let vg = self.grid.velocity;
        let mut t_max: f64 = 0.0;
        for col in values.chunks(self.grid.column_len()) {
            let t = if vg.dims() == 1 {
                staggered_moments(col, &vg)?.t
            } else {
                staggered_moments_2d(col, &vg)?.t
            };
            t_max = t_max.max(t);
        }
        Ok(t_max)
    }

    /// Collision substep `∂_t f = ν Q̃(f)` over all columns, where column
    /// `i` uses drift shift `shifts[i]`.
    fn collide(
        &mut self,
        f: &DistState,
        dt: f64,
        shifts: Option<&[f64]>,
        estimate: bool,
        f_n: Option<Vec<f64>>,
    ) -> Result<Collided> {
        let nu = self.scenario.nu;
        let grid = self.grid;
        let vg = grid.velocity;
        let cl = grid.column_len();
        let order = self.order;
        let n = f.values.len();
        let zeros = vec![0.0; grid.columns()];
        let shifts = shifts.unwrap_or(&zeros).to_vec();
        let advection = shifts
            .iter()
            .fold(0.0f64, |m, s| m.max((nu * s).abs()))
            / vg.dv();
        let lambda = spectral_bound(&vg, nu, self.max_temperature(&f.values)?, advection, order)?;

        let rhs = |y: &[f64], out: &mut [f64]| -> Result<()> {
            out.par_chunks_mut(cl)
                .zip(y.par_chunks(cl))
                .zip(shifts.par_iter())
                .try_for_each_init(
                    CollisionWorkspace::new,
                    |ws, ((o, col), &shift)| -> Result<()> {
                        if vg.dims() == 1 {
                            collision_into(order, col, &vg, shift, o, ws)?;
                        } else {
                            q2d_apply_into(col, &vg, [shift, 0.0], o)?;
                        }
                        for q in o.iter_mut() {
                            *q *= nu;
                        }
                        Ok(())
                    },
                )
        };
        let mut rhs = rhs;
        let (f_n, pre_evals) = match f_n {
            Some(v) => (v, 0),
            None => {
                let mut v = vec![0.0; n];
                rhs(&f.values, &mut v)?;
                (v, 1)
            }
        };
        let mut y_new = vec![0.0; n];
        let mut f_new = vec![0.0; n];
        let mut est = vec![0.0; n];
        let attempt = self.stepper.attempt(
            &f.values,
            &f_n,
            dt,
            lambda,
            &mut rhs,
            &mut y_new,
            &mut f_new,
            estimate.then_some(&mut est[..]),
        )?;
        let err = match (estimate, self.scenario.tol) {
            (true, Some(tol)) => {
                let c = StepController::new(tol, dt);
                c.error_norm(&est, &f.values)
            }
            _ => 0.0,
        };
        let rkc = self.scenario.integrator.rkc_method().is_some();
        Ok(Collided {
            f: DistState {
                grid,
                values: y_new,
                t: f.t,
            },
            err,
            stages: attempt.stages,
            evals: attempt.evals + pre_evals,
            rhs_new: (estimate && rkc).then_some(f_new),
        })
    }

    fn adaptive(&self) -> bool {
        self.scenario.tol.is_some() && self.scenario.nu > 0.0
    }

    /// Homogeneous step: the collision substep alone.
    pub fn step_homogeneous(&mut self, dt: f64) -> Result<Trial> {
        let f = self.f.clone();
        if self.scenario.nu == 0.0 {
            let mut f1 = f;
            f1.t += dt;
            return Ok(Trial {
                f: f1,
                e: Vec::new(),
                err: 0.0,
                stages: 0,
                evals: 0,
                rhs_new: None,
            });
        }
        let adaptive = self.adaptive();
        let cached = self.rhs_cache.clone();
        let c = self.collide(&f, dt, None, adaptive, cached)?;
        let mut f1 = c.f;
        f1.t = self.f.t + dt;
        Ok(Trial {
            f: f1,
            e: Vec::new(),
            err: c.err,
            stages: c.stages,
            evals: c.evals,
            rhs_new: c.rhs_new,
        })
    }

    /// SL-RKC: x half step, Poisson, collision with drift `E/ν`, x half step.
    pub fn step_sl_rkc(&mut self, dt: f64) -> Result<Trial> {
        let plan = self.plan_ref()?.clone();
        let f1 = advect_x(&self.f, 0.5 * dt, &plan)?;
        let e = poisson_field(&f1, &plan)?;
        let (f2, err, stages, evals) = if self.scenario.nu > 0.0 {
            let nu = self.scenario.nu;
            let shifts: Vec<f64> = e.iter().map(|e| e / nu).collect();
            let adaptive = self.adaptive();
            let c = self.collide(&f1, dt, Some(&shifts), adaptive, None)?;
            (c.f, c.err, c.stages, c.evals)
        } else {
            (advect_v_sl(&f1, &e, dt)?, 0.0, 0, 0)
        };
        let mut f3 = advect_x(&f2, 0.5 * dt, &plan)?;
        f3.t = self.f.t + dt;
        let e3 = poisson_field(&f3, &plan)?;
        Ok(Trial {
            f: f3,
            e: e3,
            err,
            stages,
            evals,
            rhs_new: None,
        })
    }

    /// SL-RK2-RKC: x half step, energy-conserving midpoint velocity step with
    /// the Ampère field, collision, x half step.
    pub fn step_sl_rk2_rkc(&mut self, dt: f64) -> Result<Trial> {
        let plan = self.plan_ref()?.clone();
        let f1 = advect_x(&self.f, 0.5 * dt, &plan)?;
        let (f2, e_new) = self.velocity_stage(f1, dt)?;
        let (f3, err, stages, evals) = if self.scenario.nu > 0.0 {
            let adaptive = self.adaptive();
            let c = self.collide(&f2, dt, None, adaptive, None)?;
            (c.f, c.err, c.stages, c.evals)
        } else {
            (f2, 0.0, 0, 0)
        };
        let mut f4 = advect_x(&f3, 0.5 * dt, &plan)?;
        f4.t = self.f.t + dt;
        Ok(Trial {
            f: f4,
            e: e_new,
            err,
            stages,
            evals,
            rhs_new: None,
        })
    }

    /// Energy-conserving velocity stage, sub-cycled so that each explicit
    /// midpoint step stays below `vel_cfl`.
    fn velocity_stage(&self, f: DistState, dt: f64) -> Result<(DistState, Vec<f64>)> {
        let limit = self.scenario.vel_cfl;
        let dv = self.grid.velocity.dv();
        let mut f = f;
        let mut e = self.e.clone();
        let mut remaining = dt;
        let mut substeps = 0;
        while remaining > 0.0 {
            let e_max = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            substeps += 1;
            if !e_max.is_finite() || substeps > MAX_VELOCITY_SUBSTEPS {
                return Err(Error::NonFiniteState { t: f64::NAN });
            }
            let pieces = if limit > 0.0 {
                (remaining * e_max / (limit * dv)).ceil().max(1.0)
            } else {
                1.0
            };
            let h = if pieces <= 1.0 { remaining } else { remaining / pieces };
            let (f1, e1) = rk2_velocity_stage(&f, &e, h)?;
            f = f1;
            e = e1;
            remaining = if pieces <= 1.0 { 0.0 } else { remaining - h };
        }
        Ok((f, e))
    }

    /// Symmetric three-step splitting for 1dx-2dv:
    /// `X(Δt/2) V(Δt/2) C(Δt) V(Δt/2) X(Δt/2)`, with `E` from Poisson before
    /// the velocity steps (the collision step leaves the density unchanged).
    pub fn step_strang_2dv(&mut self, dt: f64) -> Result<Trial> {
        let plan = self.plan_ref()?.clone();
        let f1 = advect_x(&self.f, 0.5 * dt, &plan)?;
        let e = poisson_field(&f1, &plan)?;
        let f2 = advect_v_sl(&f1, &e, 0.5 * dt)?;
        let (f3, err, stages, evals) = if self.scenario.nu > 0.0 {
            let adaptive = self.adaptive();
            let c = self.collide(&f2, dt, None, adaptive, None)?;
            (c.f, c.err, c.stages, c.evals)
        } else {
            (f2, 0.0, 0, 0)
        };
        let f4 = advect_v_sl(&f3, &e, 0.5 * dt)?;
        let mut f5 = advect_x(&f4, 0.5 * dt, &plan)?;
        f5.t = self.f.t + dt;
        let e5 = poisson_field(&f5, &plan)?;
        Ok(Trial {
            f: f5,
            e: e5,
            err,
            stages,
            evals,
            rhs_new: None,
        })
    }

    /// Computes one step of the configured splitting without committing it.
    pub fn trial_step(&mut self, dt: f64) -> Result<Trial> {
        let trial = match self.scenario.splitting {
            Splitting::Homogeneous => self.step_homogeneous(dt),
            Splitting::SlRkc => self.step_sl_rkc(dt),
            Splitting::SlRk2Rkc => self.step_sl_rk2_rkc(dt),
            Splitting::Strang2dv => self.step_strang_2dv(dt),
        }?;
        if !trial.f.is_finite() || !trial.e.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteState { t: self.f.t });
        }
        Ok(trial)
    }

    pub fn commit(&mut self, trial: Trial) {
        self.f = trial.f;
        self.rhs_cache = trial.rhs_new;
        if !trial.e.is_empty() {
            self.e = trial.e;
        }
    }

    /// Advances to `t_end`, emitting diagnostics at the configured cadence.
    pub fn run(&mut self) -> Result<RunOutput> {
        let sc = self.scenario.clone();
        let clock = Instant::now();
        let mut series = DiagSeries::new(self.grid.velocity.dims() == 2);
        series.rows.push(self.diagnostics(0.0, 0, 0)?);
        let mut records = Vec::new();
        let mut summary = RunSummary::default();
        let adaptive = self.adaptive();
        let mut controller = StepController::for_integrator(sc.integrator, sc.tol.unwrap_or(1.0), sc.dt);
        if let Some(m) = sc.dt_max {
            controller.dt_max = m;
        }
        let mut next_output = self.t() + sc.cadence;
        let mut last = (0.0, 0);
        let t_end = sc.t_end;
        // Steps are truncated to land on t_end; a relative slack avoids a
        // sliver step from accumulated rounding in fixed-step runs.
        let slack = 1e-9 * sc.dt;

        while self.t() < t_end - slack {
            let t = self.t();
            let dt = if adaptive { controller.dt } else { sc.dt }.min(t_end - t);
            let trial = self.trial_step(dt);
            let (accepted, err, stages, evals, trial) = match trial {
                Ok(tr) => {
                    let ok = if adaptive {
                        controller.assess(tr.err, t)?
                    } else {
                        true
                    };
                    (ok, tr.err, tr.stages, tr.evals, Some(tr))
                }
                Err(e) if adaptive && is_divergence(&e) => {
                    controller.assess(f64::INFINITY, t)?;
                    (false, f64::INFINITY, 0, 0, None)
                }
                Err(e) if is_divergence(&e) => return Err(Error::NonFiniteState { t }),
                Err(e) => return Err(e.at_time(t)),
            };
            summary.rhs_evals += evals;
            if accepted {
                let mut tr = trial.expect("accepted trials exist");
                if t_end - t - dt <= slack {
                    tr.f.t = t_end;
                }
                self.commit(tr);
                summary.accepted += 1;
                summary.max_dt = summary.max_dt.max(dt);
                last = (dt, stages);
            } else {
                summary.rejected += 1;
            }
            records.push(StepRecord {
                t: self.t(),
                dt,
                stages,
                err,
                accepted,
                nrhs: summary.rhs_evals,
                wall_time: clock.elapsed().as_secs_f64(),
            });
            if accepted && (self.t() >= next_output - slack || self.t() >= t_end - slack) {
                series.rows.push(self.diagnostics(last.0, last.1, summary.rhs_evals)?);
                while next_output <= self.t() + slack {
                    next_output += sc.cadence.max(f64::MIN_POSITIVE);
                    if sc.cadence == 0.0 {
                        break;
                    }
                }
            }
        }
        if let Some(last_row) = series.rows.last() {
            if last_row.t < self.t() {
                series.rows.push(self.diagnostics(last.0, last.1, summary.rhs_evals)?);
            }
        }
        summary.wall_time = clock.elapsed().as_secs_f64();
        Ok(RunOutput {
            records,
            series,
            final_state: self.f.clone(),
            field: self.e_field().map(<[f64]>::to_vec),
            summary,
        })
    }
}

/// Builds and runs a scenario from its initial condition.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    Simulation::new(scenario.clone())?.run()
}
