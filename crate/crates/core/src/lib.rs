//! Excitation transport on Platonic-solid quantum networks with dephasing,
//! local dissipation and a sink.

pub mod analytic;
pub mod design;
pub mod dynamics;
pub mod geometry;
pub mod ode;
pub mod reduced;
pub mod symmetry;
pub mod verify;
