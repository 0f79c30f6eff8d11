//! Deterministic sentence generation over a system network.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of immutable resources: loading files, canonical JSON, patches
//! and the command line live in the `latticegen` crate.
//!
//! A generation cycle walks the network from the least specific system to
//! the most specific, asks each entered system's chooser for exactly one
//! feature, collects the realization statements of the chosen features and
//! turns them into function bundles. Every token, ordering and constituent
//! of the output keeps a link back to the statement, feature and system that
//! introduced it, so a result can be interrogated after the fact.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod generator;
pub mod multilingual;
pub mod network;
pub mod regions;
pub mod resources;
pub mod semantics;
pub mod spl;
pub mod suite;
pub mod trace;

pub use generator::{generate, GenerationResult, Status};
pub use network::{EntryCondition, Lexeme, Operator, Realization, System, SystemNetwork};
pub use resources::{LanguageView, Languages, ResourceSet};
pub use semantics::{Chooser, ChooserOutcome, Inquiry, SemanticGraph};
