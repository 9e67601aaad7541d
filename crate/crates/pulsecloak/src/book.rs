//! Compiles every Rust block in the guide (`book/src`) as a doc-test, so
//! the chapters cannot drift from the public API. Only built during
//! `cargo test`'s doc-test pass.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/heartbeat-signals.md")]
mod heartbeat_signals {}

#[doc = include_str!("../../../book/src/key-scheme.md")]
mod key_scheme {}

#[doc = include_str!("../../../book/src/fmcw-sensing.md")]
mod fmcw_sensing {}

#[doc = include_str!("../../../book/src/heart-rate-extraction.md")]
mod heart_rate_extraction {}

#[doc = include_str!("../../../book/src/privacy-games.md")]
mod privacy_games {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
