pub mod backend;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod novelty;
pub mod paramcount;
pub mod promptkit;
pub mod retrieval;
pub mod textcore;

pub use error::{Error, Result};
