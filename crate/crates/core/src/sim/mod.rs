//! Nonlinear model problems and the modulation machinery.

pub mod heat;
pub mod inequalities;
pub mod modulation;
