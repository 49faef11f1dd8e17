//! Approximate pure Nash equilibria in congestion games.
//!
//! The crate models congestion games with exact rational latencies and
//! provides:
//!
//! * [`game`]: loads, costs, the Rosenthal potential and frozen-player subgames;
//! * [`dynamics`]: best-response oracles and (1+ε)-improvement dynamics;
//! * [`solver`]: the phased block algorithm that reaches a
//!   `p(1 + 4 n^-ψ)`-approximate equilibrium after polynomially many moves;
//! * [`verify`]: exhaustive verification and potential-function audits;
//! * [`hardness`]: the Flip-to-congestion-game construction for latencies
//!   with negative offsets;
//! * [`generators`] and [`bench`]: seeded instances and the benchmark harness.

pub mod bench;
pub mod dynamics;
pub mod game;
pub mod generators;
pub mod hardness;
pub mod rational;
pub mod solver;
pub mod verify;

pub use game::{CongestionGame, GameError, GameView, LatencyFunction, Mode, State, SubgameView};
pub use rational::Rational;
