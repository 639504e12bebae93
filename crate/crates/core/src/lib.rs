//! Numerical kernels for velocity averaging experiments on kinetic transport equations.
//!
//! The crate is organised by role:
//!
//! * [`fields`]: velocity fields, force fields, unit directions and phases.
//! * [`oscillatory`]: oscillatory integrals and their explicit decay bounds.
//! * [`sublevel`]: sublevel-set measures, multiplicities and the derivative
//!   non-degeneracy condition.
//! * [`transport`]: spectral representation of the kinetic equation, the exact
//!   constant-force reconstruction and the characteristics change of variables.
//! * [`sobolev`]: shell spectra, regularity exponents, the averaging-gain
//!   certificate and the cutoff multiplier.

pub mod error;
pub mod fields;
pub mod fit;
pub mod oscillatory;
pub mod quadrature;
pub mod smooth;
pub mod sobolev;
pub mod sphere;
pub mod sublevel;
pub mod table;
pub mod tolerances;
pub mod transport;

pub use error::{Error, Result};
pub use fields::{
    catalog, custom_polynomial, directional_derivative, make_phase, Direction, Field, ForceField, Monomial,
    PhaseFunction, SmoothForce, VelocityField,
};
pub use num_complex::Complex64;
pub use oscillatory::{Amplitude, DecayReport, OscillatorySpec};
pub use sobolev::{ShellSpectrum, SobolevEstimate};
pub use sphere::SphereSampler;
pub use sublevel::{AlphaFit, Multiplicity, MultiplicityReport, SublevelQuery};
pub use table::Table;
pub use transport::{CharacteristicsMap, SpectralKineticField, TorusGrid};
