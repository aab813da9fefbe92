//! Phase-space discretization: a periodic spatial mesh and a truncated uniform
//! velocity mesh, plus the state containers every other module works on.
//!
//! Storage is row-major with velocity fastest-varying. A 1dx-1dv state is laid
//! out as `f[i * (N_v + 1) + j]`; with two velocity axes the column for one
//! spatial node is itself row-major in `(j_x, j_y)`.

use crate::error::{Error, Result};

pub const MIN_SPACE_POINTS: usize = 4;
pub const MIN_VELOCITY_POINTS: usize = 8;

/// Uniform velocity mesh on `[-v_max, v_max]` with `n_v + 1` nodes per axis,
/// both endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGrid {
    v_max: f64,
    n_v: usize,
    dims: usize,
}

impl VelocityGrid {
    pub fn new(v_max: f64, n_v: usize, dims: usize) -> Result<Self> {
        if !(v_max > 0.0) || !v_max.is_finite() {
            return Err(Error::NonPositiveExtent("v_max"));
        }
        if n_v < MIN_VELOCITY_POINTS {
            return Err(Error::BadCount {
                what: "N_v",
                got: n_v,
                min: MIN_VELOCITY_POINTS,
            });
        }
        if dims != 1 && dims != 2 {
            return Err(Error::InvalidConfig(format!(
                "velocity dimension must be 1 or 2, got {dims}"
            )));
        }
        Ok(Self { v_max, n_v, dims })
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Number of intervals per axis.
    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.v_max / self.n_v as f64
    }

    /// Nodes per axis (`n_v + 1`).
    pub fn nodes(&self) -> usize {
        self.n_v + 1
    }

    /// Values stored per spatial column.
    pub fn len(&self) -> usize {
        self.nodes().pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one node: `dv^dims`.
    pub fn cell_volume(&self) -> f64 {
        self.dv().powi(self.dims as i32)
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        -self.v_max + j as f64 * self.dv()
    }

    /// `v_{j+1/2}`, the interface between nodes `j` and `j + 1`.
    #[inline]
    pub fn interface(&self, j: usize) -> f64 {
        -self.v_max + (j as f64 + 0.5) * self.dv()
    }

    pub fn node_values(&self) -> Vec<f64> {
        (0..self.nodes()).map(|j| self.node(j)).collect()
    }

    /// Index of the node nearest to `v`, clamped to the mesh.
    pub fn nearest_index(&self, v: f64) -> usize {
        let r = ((v + self.v_max) / self.dv()).round();
        r.clamp(0.0, self.n_v as f64) as usize
    }
}

/// Periodic spatial mesh on `[0, L)` with `n_x` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    length: f64,
    n_x: usize,
}

impl SpatialGrid {
    pub fn new(length: f64, n_x: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::NonPositiveExtent("L"));
        }
        if n_x < MIN_SPACE_POINTS {
            return Err(Error::BadCount {
                what: "N_x",
                got: n_x,
                min: MIN_SPACE_POINTS,
            });
        }
        Ok(Self { length, n_x })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Fundamental wavenumber `2π/L`.
    pub fn base_wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.length
    }

    /// Signed wavenumber of FFT bin `m` (negative frequencies above `n_x/2`).
    pub fn wavenumber(&self, m: usize) -> f64 {
        let n = self.n_x as i64;
        let signed = if (m as i64) <= n / 2 { m as i64 } else { m as i64 - n };
        signed as f64 * self.base_wavenumber()
    }

    /// Periodic index arithmetic.
    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n_x as isize) as usize
    }
}

/// Full phase-space mesh. `space` is `None` for spatially homogeneous runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub space: Option<SpatialGrid>,
    pub velocity: VelocityGrid,
}

impl PhaseGrid {
    /// `dims`: 0 for homogeneous (velocity only), 1 for 1dx-1dv, 2 for 1dx-2dv.
    /// `length` and `n_x` are ignored when `dims == 0`.
    pub fn build(length: f64, n_x: usize, v_max: f64, n_v: usize, dims: usize) -> Result<Self> {
        match dims {
            0 => Ok(Self {
                space: None,
                velocity: VelocityGrid::new(v_max, n_v, 1)?,
            }),
            1 | 2 => {
                let velocity = VelocityGrid::new(v_max, n_v, dims)?;
                let space = SpatialGrid::new(length, n_x)?;
                Ok(Self {
                    space: Some(space),
                    velocity,
                })
            }
            d => Err(Error::InvalidConfig(format!("unsupported dims {d}"))),
        }
    }

    pub fn homogeneous(velocity: VelocityGrid) -> Self {
        Self {
            space: None,
            velocity,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.space.is_none()
    }

    /// Number of spatial columns (1 when homogeneous).
    pub fn columns(&self) -> usize {
        self.space.map_or(1, |s| s.n_x())
    }

    pub fn column_len(&self) -> usize {
        self.velocity.len()
    }

    pub fn len(&self) -> usize {
        self.columns() * self.column_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spatial weight: `dx`, or 1 for homogeneous runs.
    pub fn dx(&self) -> f64 {
        self.space.map_or(1.0, |s| s.dx())
    }

    /// Descriptor dims as used by `build`: 0, 1 or 2.
    pub fn descriptor_dims(&self) -> usize {
        if self.space.is_none() {
            0
        } else {
            self.velocity.dims()
        }
    }

    /// `(v_x, v_y)` of the `c`-th value of a column (`v_y = 0` in 1D).
    #[inline]
    pub fn velocity_of(&self, c: usize) -> (f64, f64) {
        let vg = &self.velocity;
        if vg.dims() == 1 {
            (vg.node(c), 0.0)
        } else {
            let nodes = vg.nodes();
            (vg.node(c / nodes), vg.node(c % nodes))
        }
    }
}

/// Distribution-function values on a phase grid at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct DistState {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    pub t: f64,
}

impl DistState {
    pub fn zeros(grid: PhaseGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            t: 0.0,
        }
    }

    pub fn from_values(grid: PhaseGrid, values: Vec<f64>, t: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidConfig(format!(
                "state has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, t })
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.grid.column_len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn column_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.grid.column_len();
        &mut self.values[i * n..(i + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Periodic shift by `cells` spatial nodes: `g(x_i) = f(x_{i - cells})`.
    pub fn shifted(&self, cells: isize) -> Self {
        let Some(space) = self.grid.space else {
            return self.clone();
        };
        let n = self.grid.column_len();
        let mut values = vec![0.0; self.values.len()];
        for i in 0..space.n_x() {
            let src = space.wrap(i as isize - cells);
            values[i * n..(i + 1) * n].copy_from_slice(&self.values[src * n..(src + 1) * n]);
        }
        Self {
            grid: self.grid,
            values,
            t: self.t,
        }
    }
}

/// Electric field on the spatial nodes (x component only).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub e: Vec<f64>,
    pub t: f64,
}

impl FieldState {
    pub fn zeros(n_x: usize) -> Self {
        Self {
            e: vec![0.0; n_x],
            t: 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.e.iter().sum::<f64>() / self.e.len().max(1) as f64
    }
}

/// Pointwise evaluation of `init(x, v_x, v_y)` at every node (`x = 0` for
/// homogeneous grids, `v_y = 0` with one velocity axis).
pub fn sample_on_grid<F>(grid: &PhaseGrid, init: F) -> Result<DistState>
where
    F: Fn(f64, f64, f64) -> f64,
{
    let n = grid.column_len();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.columns() {
        let x = grid.space.map_or(0.0, |s| s.node(i));
        for c in 0..n {
            let (vx, vy) = grid.velocity_of(c);
            let value = init(x, vx, vy);
            if !value.is_finite() {
                return Err(Error::NonFiniteSample {
                    index: values.len(),
                });
            }
            values.push(value);
        }
    }
    Ok(DistState {
        grid: *grid,
        values,
        t: 0.0,
    })
}
