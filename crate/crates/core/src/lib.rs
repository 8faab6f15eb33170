//! Chronology reconstruction from a genealogical attestation corpus.

pub mod chronology;
pub mod corpus;
pub mod genealogy;
pub mod growth;
pub mod identity;
pub mod synth;
