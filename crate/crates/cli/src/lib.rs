//! Library surface of the experiment front-end, shared by the `p2rec`
//! binary and the integration tests.

pub mod commands;
pub mod config;
pub mod prepared;
