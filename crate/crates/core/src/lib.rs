//! Turn MediaWiki XML exports into weakly labeled satellite-image dataset
//! manifests.
//!
//! The stages, in order: stream a dump one page at a time ([`dump`]), keep
//! articles carrying a title coordinate ([`geo`]), assign each a keyword
//! label from an ordered hierarchy ([`labeler`]) with an optional
//! embedding-based scorer as a cross-check ([`embedding`]), plan a satellite
//! tile grid per subject ([`tiles`]), and write filtered, merged, reproducible
//! manifests ([`manifest`]). [`pipeline`] wires the stages into restartable
//! batch commands; the `wikisat` binary exposes them.

pub mod dump;
pub mod embedding;
pub mod error;
pub mod geo;
pub mod labeler;
pub mod manifest;
pub mod pipeline;
pub mod tiles;
pub mod wikitext;

pub use error::{Error, Result};
