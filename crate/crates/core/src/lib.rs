//! Threshold secret-sharing e-voting.
//!
//! Each ballot is packed into a single prime-field element (one `w`-bit
//! counter window per candidate), split into Shamir shares, and sent one
//! share per collection center. Centers only ever add what they receive.
//! Because sharing is additively homomorphic, the per-center share sums are
//! themselves shares of the packed tally, which the election officer
//! recovers by Lagrange interpolation from any `t` signed center records.
//!
//! Module map:
//!
//! - [`field`]: arithmetic in `Z/pZ` and prime selection
//! - [`shamir`]: polynomials, share evaluation, interpolation, accumulation
//! - [`ballot`]: election parameters and the bit-window vote encoding
//! - [`center`]: the collection-center state machine, journal and signed records
//! - [`tally`]: record verification, subset cross-checking, decoding
//! - [`netsvc`]: HTTP wire protocol, center service, terminal client and gateway
//! - [`sim`]: an in-process election with every center in memory
//! - [`cli`]: the operator command surface used by the `homotally` binary

pub mod ballot;
pub mod center;
pub mod cli;
mod error;
pub mod field;
pub mod netsvc;
pub mod shamir;
pub mod sim;
pub mod tally;

pub use error::{Error, ErrorClass, Result};
