//! Counter-based RNG substreams.
//!
//! One master seed drives everything. Each random event (a robot's initial
//! pose, one round of odometry noise, one directed distance measurement, one
//! controller step, ...) gets its own ChaCha stream keyed by
//! `(master, channel, a, b)`, so results never depend on iteration order and
//! noise draws stay pathwise matched across configurations that share a seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream channels. Distinct channels never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Initial deployment pose of one robot (`a` = robot).
    Init = 1,
    /// Odometry noise for one robot in one round (`a` = robot, `b` = round).
    Odometry = 2,
    /// Distance noise for one directed pair in one round
    /// (`a` = round, `b` = observer << 32 | target).
    Distance = 3,
    /// Motion controller draws (`a` = robot, `b` = round).
    Controller = 4,
    /// Scheduler draw stream for one robot (`a` = robot).
    Scheduler = 5,
    /// Per-trial seed derivation (`a` = trial index).
    Trial = 6,
}

/// Independent ChaCha stream for one event.
pub fn substream(master: u64, channel: Channel, a: u64, b: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&(channel as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&a.to_le_bytes());
    seed[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Derive a child seed, e.g. the world seed of trial `a`.
pub fn derive_seed(master: u64, channel: Channel, a: u64) -> u64 {
    substream(master, channel, a, 0).next_u64()
}

/// Tag for a directed pair, observer first.
pub fn pair_tag(observer: u32, target: u32) -> u64 {
    ((observer as u64) << 32) | target as u64
}
