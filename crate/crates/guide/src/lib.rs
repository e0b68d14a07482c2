//! The chapters of `book/` as modules, so `cargo test` runs every Rust
//! listing in the book against the current crate.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/lagrangians.md")]
pub mod lagrangians {}
#[doc = include_str!("../../../book/src/beta.md")]
pub mod beta {}
#[doc = include_str!("../../../book/src/alpha.md")]
pub mod alpha {}
#[doc = include_str!("../../../book/src/weakkam.md")]
pub mod weakkam {}
#[doc = include_str!("../../../book/src/integrability.md")]
pub mod integrability {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
