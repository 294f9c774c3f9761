//! Compiles the listings of the guide in `book/` as doctests, so that
//! `cargo test` keeps the guide and the library in step.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/environments.md")]
pub mod environments {}
#[doc = include_str!("../../../book/src/meta-state.md")]
pub mod meta_state {}
#[doc = include_str!("../../../book/src/shaping.md")]
pub mod shaping {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/fine-tuning.md")]
pub mod fine_tuning {}
#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
