//! Semiclassical simulation of a finite quantum system coupled to bosonic field modes.

pub mod chain;
pub mod config;
pub mod hilbert;
pub mod model;
pub mod oracle;
pub mod runner;
