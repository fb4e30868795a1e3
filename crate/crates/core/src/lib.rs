//! Letter-to-sound rules learned from a pronunciation lexicon: alignment,
//! feature extraction, ID3 trees, transcription, evaluation and lexicon
//! compression.

pub mod align_em;
pub mod align_seeded;
pub mod compressx;
pub mod error;
pub mod evalx;
pub mod features;
pub mod id3;
mod lattice;
pub mod lexicon;
pub mod model;
pub mod pipeline;
pub mod transcriber;

pub use error::{Error, Result};
pub use lexicon::{LexiconEntry, LexiconFormat, Phone, PhoneInventory, Unit};
pub use model::Model;
