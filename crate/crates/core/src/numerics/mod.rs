//! Numerical building blocks: quadrature, ODE integration, root finding,
//! goodness-of-fit testing and seeded random streams.

pub mod ks;
pub mod ode;
pub mod quad;
pub mod rng;
pub mod roots;
