//! Deterministic physics kernels of the printer model.

pub mod deposition;
pub mod droplet;
pub mod generation;
pub mod jacobian;
pub mod model;
pub mod quadrature;
pub mod resistance;

pub use deposition::{
    critical_radius, diffusion_deposition_from_rhs, gravitational_deposition_from_alpha, nozzle_deposition_rate,
    stokes_einstein_d, survival_diffusion, survival_gravitational, tube_deposition_rate, NozzleKernel,
};
pub use droplet::{lognormal_pdf, DropletDistribution};
pub use generation::{net_generation_h, Generation};
pub use model::{euler_update, output_g, InputKernel, Modifiers, StateBounds, StepOutcome, TwinModel};
pub use quadrature::QuadratureRule;
pub use resistance::{pressures, resistance_nozzle_tip, resistance_tube, Network};
