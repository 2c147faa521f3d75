//! Numerical laboratory for the hyperboloidal foliation method applied to the
//! coupled wave / Klein-Gordon system with strong (metric-level) interaction
//!
//! ```text
//! −□u = P^{αβ} ∂_α v ∂_β v + R v²,
//! −□v + u H^{αβ} ∂_α ∂_β v + c² v = 0,          □ = −∂_t² + Δ.
//! ```

pub mod analysis;
pub mod bounds;
pub mod cli;
pub mod expr;
pub mod geometry;
pub mod jet;
pub mod solver;
