//! Uplink power allocation over `K` parallel channels shared by `N` users
//! transmitting to a single access point.
//!
//! The users play a potential game: each maximizes its own single-user-decoding
//! rate, and every unilateral improvement is mirrored exactly by the concave
//! potential
//!
//! ```text
//! P(p) = (1/K) Σ_k [ ln(n(k) + Σ_i |h_i(k)|² p_i(k)) − ln n(k) ]
//! ```
//!
//! so the Nash equilibria are precisely the maximizers of `P`, and `P` at the
//! optimum is the sum capacity of the channel.
//!
//! Module map:
//!
//! * [`model`]: instances, power profiles, rates, the potential and its gradient.
//! * [`waterfill`]: the single-user water-filling best response and the
//!   best-response residual `s(p) = Φ(p) − p`.
//! * [`dynamics`]: averaged, sequential and simultaneous iterative water-filling,
//!   projected gradient ascent, step schedules and run traces.
//! * [`oracle`]: certified maximum of the potential, equilibrium verification and
//!   the structural checks (spectral radius, diagonal covariances, FDMA levels).
//! * [`scenario`]: seeded random instances and canonical fixtures.
//! * [`metrics`]: collision counts and sharing efficiency.
//! * [`experiments`]: the Monte Carlo harness behind the `apshare` CLI.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod scenario;
pub mod waterfill;

pub use error::{Error, Result};
pub use model::{NetworkInstance, PowerProfile};
