//! Antiplane phase-field fracture on structured grids: blow-up rescaling,
//! scaling identities, stress-intensity extraction, Griffith stability
//! verdicts and quasi-static evolution.

pub mod element;
pub mod energy;
pub mod fields;
pub mod grid;
pub mod linalg;
pub mod solve;
pub mod stability;
pub mod io;
pub mod evolution;
pub mod demo;
