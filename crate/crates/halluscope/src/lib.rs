//! File formats, corpus IO and the `halluscope` command-line driver built on
//! [`halluscope_core`].

pub mod commands;
pub mod config;
mod error;
pub mod jsonl;
pub mod profiles;
pub mod resources;
pub mod tables;
pub mod tokens;
pub mod wordlist;

pub use error::{Error, Result};
