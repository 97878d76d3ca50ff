#![doc = include_str!("../README.md")]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod particles;
pub mod signaling;
pub mod solver;

pub use error::{Error, Result};

/// Chapters of the book, compiled here so their examples run as doctests.
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/channel_response.md")]
    pub mod channel_response {}
    #[doc = include_str!("../../../book/src/signaling.md")]
    pub mod signaling {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
