//! Competitive Hastings-Levitov growth: exact simulation of the two-colour
//! harmonic-measure competition, the conformal cluster behind it, and the
//! diffusion-limit analysis (scale, speed, boundary classification).

pub mod cluster;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod jump;
pub mod profile;
pub mod quadrature;
pub mod rng;
pub mod slit_map;
pub mod stats;

pub use error::{Error, Result};
pub use profile::{RateSchedule, SizeProfile};
pub use slit_map::{AngleHT, Capacity, ComplexPoint, SlitLength};
