//! Exact analysis, compilation and simulation of rate-independent chemical
//! reaction networks.

pub mod analysis;
pub mod compiler;
pub mod crn;
pub mod dynamics;
pub mod harness;
pub mod lp;
pub mod parse;
pub mod pwl;
pub mod rat;
pub mod reach;

pub use crn::{
    applicable, apply_flux, Crc, Crn, CrnError, FluxVector, Output, Reaction, ReactionId,
    SpeciesId, State,
};
pub use rat::Rat;
