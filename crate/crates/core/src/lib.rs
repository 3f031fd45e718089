//! Feature extraction and evaluation for encrypted-traffic classification.
//!
//! The pipeline reads packet captures ([`capture`]), assembles bidirectional
//! flows ([`flow`]), runs feature extractors over completed flows
//! ([`plugins`]), attaches labels derived from file names or directories
//! ([`labeling`]), profiles labeled datasets ([`analysis`]) and scores model
//! predictions ([`evaluation`]).

pub mod analysis;
pub mod capture;
pub mod evaluation;
pub mod flow;
pub mod labeling;
pub mod plugins;
