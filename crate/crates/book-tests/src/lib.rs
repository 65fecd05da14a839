//! Every chapter of the guide in `book/` is attached to a module below so
//! that `cargo test --doc` compiles and runs its code blocks. One module per
//! chapter keeps failures traceable to their chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}
#[doc = include_str!("../../../book/src/bayesian-layers.md")]
pub mod bayesian_layers {}
#[doc = include_str!("../../../book/src/objectives.md")]
pub mod objectives {}
#[doc = include_str!("../../../book/src/dialogue-env.md")]
pub mod dialogue_env {}
#[doc = include_str!("../../../book/src/agents.md")]
pub mod agents {}
#[doc = include_str!("../../../book/src/gpsarsa.md")]
pub mod gpsarsa {}
#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
