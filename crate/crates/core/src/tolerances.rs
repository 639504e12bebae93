//! Pinned numerical thresholds.
//!
//! Every comparison against a tolerance in the crate goes through one of these
//! constants so that reports can echo the exact value that was applied.

/// Allowed deviation of a unit direction from norm one.
pub const DIRECTION_NORM: f64 = 1e-12;

/// Absolute floor of the oscillatory quadrature target accuracy.
pub const OSC_ABS_FLOOR: f64 = 1e-10;

/// Relative accuracy of the oscillatory quadrature, per unit length and unit amplitude.
pub const OSC_REL: f64 = 1e-8;

/// Slack on bound/measurement ratios in decay reports.
pub const DECAY_RATIO_SLACK: f64 = 1e-6;

/// Smallest frequency included in decay exponent fits.
pub const DECAY_FIT_MIN_LAMBDA: f64 = 1e2;

/// Relative threshold separating a vanishing derivative from roundoff.
pub const MULTIPLICITY_REL: f64 = 1e-7;

/// Non-degeneracy minimum below which the derivative condition is declared violated.
pub const GAMMA_ND_THRESHOLD: f64 = 1e-9;

/// Fitted exponents with coefficient of determination below this are flagged.
pub const FIT_R2_MIN: f64 = 0.9;

/// Floating-point slack on sublevel measure ratios (equality cases sit exactly at one).
pub const MEASURE_RATIO_SLACK: f64 = 1e-9;

/// Fraction of velocity-spectrum energy allowed in the top third of modes.
pub const ALIASING_ENERGY: f64 = 1e-8;

/// Relative residual allowed for the spectral velocity ODE.
pub const SPECTRAL_ODE_RESIDUAL: f64 = 1e-6;

/// PDE residual allowed for the characteristics velocity map.
pub const CHARACTERISTICS_RESIDUAL: f64 = 1e-5;

/// Relative change of multiplier suprema allowed under grid doubling.
pub const MULTIPLIER_GRID_CHANGE: f64 = 1e-2;

/// Multiplier suprema above this are reported as not finite.
pub const MULTIPLIER_FINITE_CAP: f64 = 1e12;

/// Shell energy fraction below which a dyadic shell counts as empty.
pub const SHELL_POPULATED: f64 = 1e-28;

/// Minimum populated shells for an exponent fit.
pub const MIN_SHELLS: usize = 5;

/// Relative L² error allowed in a reconstruction round trip.
pub const RECONSTRUCTION_ERROR: f64 = 1e-6;

/// Allowed deviation of `m_0(0)` from `−χ″(0)/(2i)`.
pub const M0_LIMIT: f64 = 1e-8;
