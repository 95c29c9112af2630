//! Every chapter of the guide in `book/src` is pulled in here, one module
//! per chapter, so `cargo test` runs the code listings as doctests. mdBook
//! cannot resolve workspace dependencies by itself.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/problems.md")]
pub mod problems {}
#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}
#[doc = include_str!("../../../book/src/optimization.md")]
pub mod optimization {}
#[doc = include_str!("../../../book/src/backends.md")]
pub mod backends {}
#[doc = include_str!("../../../book/src/sketches.md")]
pub mod sketches {}
#[doc = include_str!("../../../book/src/export.md")]
pub mod export {}
#[doc = include_str!("../../../book/src/klm.md")]
pub mod klm {}
#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
