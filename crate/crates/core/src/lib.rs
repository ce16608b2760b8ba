//! Finite symmetric jump chains on lattice metric measure spaces.
//!
//! A symmetric jump kernel `J(x, y)` on a grid with point masses `m(x)`
//! defines a reversible continuous-time Markov chain with rates
//! `q(x, y) = J(x, y) m(y)`. Everything the potential theory of the
//! corresponding non-local Dirichlet form asks for (harmonic functions,
//! Green operators, exit times, capacities, Dirichlet eigenvalues, heat
//! kernels) is then an exact finite linear-algebra problem. On top of that
//! the [`inequalities`] module measures the empirical constants of the
//! elliptic Harnack family of conditions, and [`montecarlo`] provides an
//! independent event-driven simulator for cross-validation.
//!
//! Form convention used throughout:
//!
//! ```text
//! L f(x)   = sum_y (f(y) - f(x)) q(x, y)
//! E(f, g)  = -<L f, g>_mu = 1/2 sum_{x != y} (f(x)-f(y)) (g(x)-g(y)) J(x,y) m(x) m(y)
//! ```
//!
//! The process kernel is `q`, so the energy carries the factor 1/2 over
//! ordered pairs. All measured conditions are two-sided comparabilities,
//! so this global factor only moves the empirical constants.

pub mod error;
pub mod fit;
pub mod inequalities;
pub mod kernel;
pub mod montecarlo;
pub mod operator;
pub mod scale;
pub mod space;

pub use error::{Error, Result};
pub use kernel::{JumpKernel, KernelReport, Symmetrization};
pub use operator::{Domain, DomainSolver, Generator};
pub use scale::{AlphaProfile, ScaleFunction};
pub use space::{GridSpace, Topology};

/// Header line attached to every report so readers know which energy
/// normalization produced the constants.
pub const FORM_CONVENTION: &str =
    "q(x,y)=J(x,y)m(y); E(f,f)=-<Lf,f>_mu = 1/2 * sum over ordered pairs";
