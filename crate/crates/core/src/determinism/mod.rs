//! Bit-reproducible primitives: every random draw, shuffle, exponential and
//! float/text conversion in this crate goes through the functions here, so a
//! run is a pure function of its seeds on any platform with IEEE-754 doubles.

mod hexfloat;
mod math;
mod rng;

pub use hexfloat::{hexfloat_decode, hexfloat_encode, HexfloatError};
pub use math::{portable_exp, portable_ln};
pub use rng::{fisher_yates_shuffle, PortableRng, RngStateError};
