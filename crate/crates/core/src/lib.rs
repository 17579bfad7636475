//! Seeded simulator of Hong-Ou-Mandel clock synchronization over segmented fiber.
//!
//! Times are seconds, lengths meters, temperatures °C and angular frequencies
//! rad/s unless a name says otherwise (`_nm`, `_ps`, `_fs`).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod biphoton;
pub mod cli;
pub mod config;
pub mod detection;
pub mod fiber_model;
pub mod hom;
pub mod planner;
pub mod rng;
pub mod scenario;
pub mod sync_loop;
pub mod timing_stats;
