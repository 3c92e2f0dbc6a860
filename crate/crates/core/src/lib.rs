//! Robin functions, harmonic radii and reduced moduli of domains in `R^n`,
//! with numerical checks of composition principles for reduced moduli and the
//! extremal decomposition inequalities that follow from them.

pub mod domain;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod moduli;
pub mod quadrature;
pub mod search;
pub mod verifier;

pub use domain::{
    make_constants, validate_charge_config, voxelize_ball, BallDomain, BallSpec, BoundaryLabel,
    ChargeConfig, Constants, Cut, DomainSpec, GammaRule, Point, VoxelDomain, VoxelGamma,
};
pub use error::{Error, Result};
