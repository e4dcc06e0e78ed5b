//! Compiles and runs the Rust snippets in `book/` as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/encoding.md")]
pub mod encoding {}

#[doc = include_str!("../../../book/src/protocol.md")]
pub mod protocol {}

#[doc = include_str!("../../../book/src/variants.md")]
pub mod variants {}

#[doc = include_str!("../../../book/src/store.md")]
pub mod store {}

#[doc = include_str!("../../../book/src/wire.md")]
pub mod wire {}

#[doc = include_str!("../../../book/src/cost.md")]
pub mod cost {}
