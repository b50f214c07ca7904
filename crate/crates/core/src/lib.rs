//! Numerical laboratory for sign-changing two-bubble solutions of
//! −Δu = ρ²(e^u − τe^{−γu}) with zero Dirichlet data on planar domains.

pub mod ansatz;
pub mod diagnostics;
pub mod geometry;
pub mod green;
pub mod grid;
pub mod hamiltonian;
pub mod io;
pub mod linalg;
pub mod par;
pub mod pde;
pub mod pipeline;
pub mod quad;
