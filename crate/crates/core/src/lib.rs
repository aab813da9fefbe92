//! Vlasov-Fokker-Planck solver: conservative velocity discretizations of the
//! Fokker-Planck collision operator, Runge-Kutta-Chebyshev time stepping with
//! step and stage control, and splittings with Vlasov-Poisson/Ampère transport.

pub mod collision;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod io;
pub mod mesh;
pub mod rkc;
pub mod transport;

pub use collision::{CollisionOrder, StaggeredMoments, StaggeredMoments2d};
pub use diagnostics::{DiagRow, DiagSeries, Invariants, RateKind};
pub use error::{Error, Result};
pub use mesh::{DistState, FieldState, PhaseGrid, SpatialGrid, VelocityGrid};
pub use rkc::{Integrator, RkcCoeffs, RkcMethod, StepController, StepRecord};
pub use transport::SpectralPlan;
pub use driver::{run, RunOutput, Scenario, Simulation, Splitting};
