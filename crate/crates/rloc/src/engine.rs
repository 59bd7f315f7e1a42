//! Deterministic synchronous round-based world.
//!
//! The engine owns the ground truth: robot poses, the disk communication
//! graph, and the noise processes for distance sensing and odometry. Robots
//! interact with it in two phases per round: [`World::advance`] applies
//! motion commands and returns each robot's (noisy) odometry, then
//! [`World::exchange`] delivers broadcast payloads and distance measurements
//! over the post-motion graph. [`World::step`] combines both for callers
//! whose payloads do not depend on the current round's odometry.
//!
//! Message payloads are opaque to the engine.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    normalize_angle, relative_pose, rotate, wrap_to_pi, OdometryDelta, Pose, RelativePose, Vec2,
};
use crate::rng::{pair_tag, substream, Channel};

/// Robot identifier; robots are numbered `0..robot_count`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct RobotId(pub u32);

impl RobotId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for RobotId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Diagonal Gaussian noise parameters (standard deviations). All zero gives
/// the noiseless model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Distance measurement noise, meters.
    pub sigma_d: f64,
    /// Odometry rotation noise, radians.
    pub sigma_phi: f64,
    /// Odometry translation noise along x, meters.
    pub sigma_x: f64,
    /// Odometry translation noise along y, meters.
    pub sigma_y: f64,
}

impl NoiseSpec {
    pub const NOISELESS: NoiseSpec = NoiseSpec {
        sigma_d: 0.0,
        sigma_phi: 0.0,
        sigma_x: 0.0,
        sigma_y: 0.0,
    };

    pub fn is_noiseless(&self) -> bool {
        self.sigma_d == 0.0 && self.sigma_phi == 0.0 && self.sigma_x == 0.0 && self.sigma_y == 0.0
    }

    /// Combined meter-scale noise magnitude, used for degeneracy thresholds.
    pub fn meter_scale(&self) -> f64 {
        self.sigma_d + self.sigma_x + self.sigma_y
    }

    fn validate(&self) -> Result<(), EngineError> {
        let all = [self.sigma_d, self.sigma_phi, self.sigma_x, self.sigma_y];
        if all.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(EngineError::InvalidConfig(
                "noise sigmas must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// World configuration. The communication radius is not fixed by the model;
/// the default of 5 m keeps random 10 m x 10 m deployments connected with
/// high probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub robot_count: u32,
    /// Arena width and height in meters; bounds the initial deployment only,
    /// motion is unconstrained.
    pub arena: (f64, f64),
    /// Disk communication radius in meters.
    pub comm_radius: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            robot_count: 10,
            arena: (10.0, 10.0),
            comm_radius: 5.0,
            noise: NoiseSpec::NOISELESS,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.robot_count == 0 {
            return Err(EngineError::InvalidConfig("robot_count must be > 0".into()));
        }
        if !(self.arena.0 > 0.0 && self.arena.1 > 0.0) {
            return Err(EngineError::InvalidConfig(
                "arena dimensions must be > 0".into(),
            ));
        }
        if !(self.comm_radius > 0.0) {
            return Err(EngineError::InvalidConfig("comm_radius must be > 0".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("unknown robot id {0}")]
    UnknownRobot(RobotId),
}

/// A motion command in the robot's current (pre-step) frame. The zero
/// command leaves the pose unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionCommand {
    pub translation: Vec2,
    pub rotation: f64,
}

impl MotionCommand {
    pub const STAY: MotionCommand = MotionCommand {
        translation: Vec2::ZERO,
        rotation: 0.0,
    };
}

/// One robot's view of one round: who it can hear, measured distances to
/// them, their broadcast payloads, and its own odometry for the round.
/// Distance and inbox keys always equal `neighbor_ids` — ranging and
/// messaging share the channel.
#[derive(Debug, Clone)]
pub struct RoundObservation<M> {
    pub round: u64,
    pub id: RobotId,
    pub neighbor_ids: BTreeSet<RobotId>,
    pub distances: BTreeMap<RobotId, f64>,
    pub inbox: BTreeMap<RobotId, M>,
    pub own_odometry: OdometryDelta,
}

/// Ground-truth world state. One logical owner mutates it; distinct worlds
/// (distinct trials) can run fully in parallel.
#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
    poses: Vec<Pose>,
    round: u64,
    /// Odometry measured in the most recent `advance`; zero at round 0.
    last_odometry: Vec<OdometryDelta>,
}

impl World {
    /// Deploy robots uniformly over the arena with uniform headings, all
    /// drawn from seeded substreams. The round counter starts at 0.
    pub fn init(config: WorldConfig) -> Result<World, EngineError> {
        config.validate()?;
        let n = config.robot_count;
        let poses = (0..n)
            .map(|i| {
                let mut rng = substream(config.seed, Channel::Init, i as u64, 0);
                let x: f64 = rng.gen_range(0.0..config.arena.0);
                let y: f64 = rng.gen_range(0.0..config.arena.1);
                let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                Pose::new(Vec2::new(x, y), phi)
            })
            .collect();
        Ok(World {
            last_odometry: vec![OdometryDelta::ZERO; n as usize],
            config,
            poses,
            round: 0,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn robot_ids(&self) -> impl Iterator<Item = RobotId> {
        (0..self.config.robot_count).map(RobotId)
    }

    /// Ground-truth pose; for metrics and oracles, never for algorithm code.
    pub fn pose(&self, id: RobotId) -> Result<&Pose, EngineError> {
        self.poses.get(id.index()).ok_or(EngineError::UnknownRobot(id))
    }

    /// Exact relative pose of `w` in `u`'s frame, straight from ground truth.
    pub fn ground_truth_relative(&self, u: RobotId, w: RobotId) -> Result<RelativePose, EngineError> {
        let pu = self.pose(u)?;
        let pw = self.pose(w)?;
        Ok(relative_pose(pu, pw))
    }

    fn in_range(&self, a: usize, b: usize) -> bool {
        (self.poses[a].position - self.poses[b].position).norm() <= self.config.comm_radius
    }

    /// Current symmetric disk communication graph as sorted neighbor lists.
    pub fn neighbor_sets(&self) -> Vec<BTreeSet<RobotId>> {
        let n = self.config.robot_count as usize;
        let mut sets = vec![BTreeSet::new(); n];
        for a in 0..n {
            for b in (a + 1)..n {
                if self.in_range(a, b) {
                    sets[a].insert(RobotId(b as u32));
                    sets[b].insert(RobotId(a as u32));
                }
            }
        }
        sets
    }

    /// Phase 1 of a round: apply motion commands (missing entries mean
    /// "stay"), increment the round counter, and measure noisy odometry.
    /// Ground truth advances exactly by the commands; noise applies to the
    /// measurement only.
    pub fn advance(
        &mut self,
        commands: &BTreeMap<RobotId, MotionCommand>,
    ) -> BTreeMap<RobotId, OdometryDelta> {
        self.round += 1;
        let mut odoms = BTreeMap::new();
        for i in 0..self.config.robot_count {
            let id = RobotId(i);
            let cmd = commands.get(&id).copied().unwrap_or(MotionCommand::STAY);
            let old = self.poses[id.index()];
            let new = Pose::new(
                old.position + rotate(old.orientation(), cmd.translation),
                old.orientation() + cmd.rotation,
            );
            self.poses[id.index()] = new;

            // True delta: the old pose expressed in the new frame.
            let true_rel = relative_pose(&new, &old);
            let true_t = true_rel.position();
            let true_r = true_rel.orientation;

            let noise = &self.config.noise;
            let mut rng = substream(self.config.seed, Channel::Odometry, i as u64, self.round);
            let zr: f64 = rng.sample(StandardNormal);
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            // The rotation is a differential quantity; keep it signed.
            let measured = OdometryDelta::new(
                Vec2::new(true_t.x + noise.sigma_x * zx, true_t.y + noise.sigma_y * zy),
                wrap_to_pi(true_r + noise.sigma_phi * zr),
            );
            self.last_odometry[id.index()] = measured;
            odoms.insert(id, measured);
        }
        odoms
    }

    /// Phase 2 of a round: recompute the disk graph at the current poses and
    /// deliver each robot's payload to its neighbors together with a noisy
    /// distance measurement, sampled independently per directed pair.
    pub fn exchange<M: Clone>(
        &self,
        payloads: &BTreeMap<RobotId, M>,
    ) -> BTreeMap<RobotId, RoundObservation<M>> {
        let sets = self.neighbor_sets();
        let noise = &self.config.noise;
        let mut out = BTreeMap::new();
        for i in 0..self.config.robot_count {
            let id = RobotId(i);
            let neighbor_ids = sets[id.index()].clone();
            let mut distances = BTreeMap::new();
            let mut inbox = BTreeMap::new();
            for &w in &neighbor_ids {
                let true_d =
                    (self.poses[w.index()].position - self.poses[id.index()].position).norm();
                let mut rng = substream(
                    self.config.seed,
                    Channel::Distance,
                    self.round,
                    pair_tag(id.0, w.0),
                );
                let z: f64 = rng.sample(StandardNormal);
                distances.insert(w, true_d + noise.sigma_d * z);
                if let Some(payload) = payloads.get(&w) {
                    inbox.insert(w, payload.clone());
                }
            }
            out.insert(
                id,
                RoundObservation {
                    round: self.round,
                    id,
                    neighbor_ids,
                    distances,
                    inbox,
                    own_odometry: self.last_odometry[id.index()],
                },
            );
        }
        out
    }

    /// One full synchronous round: motion, then message/ranging delivery.
    /// The payloads are taken as-is, so they cannot depend on this round's
    /// odometry; drivers that need that use `advance` + `exchange` directly.
    pub fn step<M: Clone>(
        &mut self,
        commands: &BTreeMap<RobotId, MotionCommand>,
        messages: &BTreeMap<RobotId, M>,
    ) -> BTreeMap<RobotId, RoundObservation<M>> {
        self.advance(commands);
        self.exchange(messages)
    }
}

/// One line of the optional JSONL trace: ground-truth pose plus what the
/// robot sensed, with `dist` aligned to the sorted `neighbors` array.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: u64,
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub neighbors: Vec<u32>,
    pub dist: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mobility: Option<String>,
}

impl TraceRecord {
    pub fn from_observation<M>(
        world: &World,
        obs: &RoundObservation<M>,
        mobility: Option<&str>,
    ) -> TraceRecord {
        let pose = world.pose(obs.id).expect("observation id is valid");
        TraceRecord {
            round: obs.round,
            id: obs.id.0,
            x: pose.position.x,
            y: pose.position.y,
            phi: pose.orientation(),
            neighbors: obs.neighbor_ids.iter().map(|r| r.0).collect(),
            dist: obs.distances.values().copied().collect(),
            mobility: mobility.map(str::to_string),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn world(n: u32, radius: f64, noise: NoiseSpec, seed: u64) -> World {
        World::init(WorldConfig {
            robot_count: n,
            arena: (10.0, 10.0),
            comm_radius: radius,
            noise,
            seed,
        })
        .unwrap()
    }

    fn empty_msgs() -> BTreeMap<RobotId, ()> {
        BTreeMap::new()
    }

    #[test]
    fn same_seed_gives_bit_identical_worlds() {
        let a = world(50, 5.0, NoiseSpec::NOISELESS, 7);
        let b = world(50, 5.0, NoiseSpec::NOISELESS, 7);
        for id in a.robot_ids() {
            assert_eq!(a.pose(id).unwrap(), b.pose(id).unwrap());
        }
    }

    #[test]
    fn zero_robots_rejected() {
        let cfg = WorldConfig {
            robot_count: 0,
            ..WorldConfig::default()
        };
        assert!(World::init(cfg).is_err());
    }

    #[test]
    fn single_robot_has_empty_graph() {
        let w = world(1, 5.0, NoiseSpec::NOISELESS, 3);
        let obs = w.exchange(&empty_msgs());
        assert!(obs[&RobotId(0)].neighbor_ids.is_empty());
        assert!(obs[&RobotId(0)].distances.is_empty());
    }

    #[test]
    fn deployment_stays_inside_arena() {
        for seed in 0..100 {
            let w = world(50, 5.0, NoiseSpec::NOISELESS, seed);
            for id in w.robot_ids() {
                let p = w.pose(id).unwrap().position;
                assert!((0.0..=10.0).contains(&p.x), "x out of arena: {}", p.x);
                assert!((0.0..=10.0).contains(&p.y), "y out of arena: {}", p.y);
            }
        }
    }

    #[test]
    fn zero_noise_zero_commands_is_quiet() {
        let mut w = world(5, 100.0, NoiseSpec::NOISELESS, 11);
        let truth: Vec<f64> = (0..5)
            .flat_map(|a| {
                (0..5)
                    .filter(move |b| *b != a)
                    .map(move |b| (a as u32, b as u32))
            })
            .map(|(a, b)| {
                (w.pose(RobotId(a)).unwrap().position - w.pose(RobotId(b)).unwrap().position)
                    .norm()
            })
            .collect();
        let obs = w.step(&BTreeMap::new(), &empty_msgs());
        let mut i = 0;
        for a in 0..5u32 {
            let o = &obs[&RobotId(a)];
            assert_eq!(o.own_odometry, OdometryDelta::ZERO);
            for b in 0..5u32 {
                if b == a {
                    continue;
                }
                assert_abs_diff_eq!(o.distances[&RobotId(b)], truth[i], epsilon = 1e-12);
                i += 1;
            }
        }
    }

    #[test]
    fn disk_graph_cuts_out_of_range_pairs() {
        // Construct two robots 3 m apart by advancing them from a seeded
        // deployment to known positions, comm radius 2 m.
        let mut w = world(2, 2.0, NoiseSpec::NOISELESS, 1);
        let p0 = w.pose(RobotId(0)).unwrap().clone();
        let p1 = w.pose(RobotId(1)).unwrap().clone();
        // Move robot 1 to exactly 3 m right of robot 0 (commands are in the
        // robot's own frame, so undo its heading).
        let target = p0.position + Vec2::new(3.0, 0.0);
        let delta_global = target - p1.position;
        let cmd = MotionCommand {
            translation: rotate(-p1.orientation(), delta_global),
            rotation: 0.0,
        };
        let mut commands = BTreeMap::new();
        commands.insert(RobotId(1), cmd);
        let obs = w.step(&commands, &empty_msgs());
        assert!(obs[&RobotId(0)].neighbor_ids.is_empty());
        assert!(obs[&RobotId(1)].neighbor_ids.is_empty());
    }

    #[test]
    fn odometry_matches_inverse_frame_expression() {
        let mut w = world(1, 5.0, NoiseSpec::NOISELESS, 21);
        let old = w.pose(RobotId(0)).unwrap().clone();
        let cmd = MotionCommand {
            translation: Vec2::new(1.0, 0.0),
            rotation: PI / 2.0,
        };
        let mut commands = BTreeMap::new();
        commands.insert(RobotId(0), cmd);
        let odom = w.advance(&commands);
        let new = w.pose(RobotId(0)).unwrap().clone();

        // Pose advanced by exactly the commanded rigid motion.
        let expect_pos = old.position + rotate(old.orientation(), cmd.translation);
        assert_abs_diff_eq!(new.position.x, expect_pos.x, epsilon = 1e-12);
        assert_abs_diff_eq!(new.position.y, expect_pos.y, epsilon = 1e-12);
        assert_abs_diff_eq!(
            new.orientation(),
            normalize_angle(old.orientation() + PI / 2.0),
            epsilon = 1e-12
        );

        // Reported odometry equals the old pose expressed in the new frame.
        let rel = relative_pose(&new, &old);
        let d = odom[&RobotId(0)];
        assert_abs_diff_eq!(d.translation.x, rel.position().x, epsilon = 1e-12);
        assert_abs_diff_eq!(d.translation.y, rel.position().y, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_to_pi(d.rotation - rel.orientation), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn observation_streams_are_deterministic() {
        let noise = NoiseSpec {
            sigma_d: 0.1,
            sigma_phi: 0.02,
            sigma_x: 0.05,
            sigma_y: 0.05,
        };
        let run = || {
            let mut w = world(8, 6.0, noise, 99);
            let mut log = String::new();
            for _ in 0..5 {
                let mut commands = BTreeMap::new();
                for id in w.robot_ids() {
                    commands.insert(
                        id,
                        MotionCommand {
                            translation: Vec2::new(0.5, 0.1),
                            rotation: 0.3,
                        },
                    );
                }
                let obs = w.step(&commands, &empty_msgs());
                for (id, o) in &obs {
                    log.push_str(&format!(
                        "{id}:{:?}:{:?};",
                        o.own_odometry,
                        o.distances.values().collect::<Vec<_>>()
                    ));
                }
            }
            log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn graph_is_symmetric_and_matches_observations() {
        let mut w = world(20, 4.0, NoiseSpec::NOISELESS, 5);
        for _ in 0..5 {
            let mut commands = BTreeMap::new();
            for id in w.robot_ids() {
                commands.insert(
                    id,
                    MotionCommand {
                        translation: Vec2::new(1.0, 0.0),
                        rotation: 0.7,
                    },
                );
            }
            let obs = w.step(&commands, &empty_msgs());
            let sets = w.neighbor_sets();
            for (id, o) in &obs {
                assert_eq!(o.neighbor_ids, sets[id.index()]);
                assert_eq!(
                    o.neighbor_ids.iter().copied().collect::<Vec<_>>(),
                    o.distances.keys().copied().collect::<Vec<_>>()
                );
                for w_id in &o.neighbor_ids {
                    assert!(sets[w_id.index()].contains(id), "graph must be symmetric");
                }
            }
        }
    }

    #[test]
    fn symmetric_distances_when_noiseless() {
        let mut w = world(10, 8.0, NoiseSpec::NOISELESS, 17);
        let obs = w.step(&BTreeMap::new(), &empty_msgs());
        for (id, o) in &obs {
            for (n, d) in &o.distances {
                let back = obs[n].distances[id];
                assert_abs_diff_eq!(*d, back, epsilon = 1e-12);
                let truth = (w.pose(*id).unwrap().position - w.pose(*n).unwrap().position).norm();
                assert_abs_diff_eq!(*d, truth, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn noise_channels_are_zero_mean() {
        // 10^5 samples per channel; empirical mean within 3 sigma / sqrt(n).
        let sigma = 0.1;
        let noise = NoiseSpec {
            sigma_d: sigma,
            sigma_phi: sigma,
            sigma_x: sigma,
            sigma_y: sigma,
        };
        let mut w = world(2, 1e9, noise, 12345);
        // Keep both robots stationary: all measured quantities are pure noise
        // around the true values.
        let d_true = (w.pose(RobotId(0)).unwrap().position - w.pose(RobotId(1)).unwrap().position)
            .norm();
        let n = 50_000u64; // two directed pairs per round -> 1e5 distance samples
        let mut sums = [0.0f64; 4];
        let mut count_d = 0u64;
        for _ in 0..n {
            let obs = w.step(&BTreeMap::new(), &empty_msgs());
            for o in obs.values() {
                sums[0] += o.own_odometry.rotation;
                sums[1] += o.own_odometry.translation.x;
                sums[2] += o.own_odometry.translation.y;
                for d in o.distances.values() {
                    sums[3] += d - d_true;
                    count_d += 1;
                }
            }
        }
        let n_samples = 2 * n;
        let bound = 3.0 * sigma / (n_samples as f64).sqrt();
        for (i, s) in sums.iter().enumerate().take(3) {
            let mean = s / n_samples as f64;
            assert!(mean.abs() < bound, "channel {i} mean {mean} exceeds {bound}");
        }
        let mean_d = sums[3] / count_d as f64;
        let bound_d = 3.0 * sigma / (count_d as f64).sqrt();
        assert!(mean_d.abs() < bound_d, "distance mean {mean_d} exceeds {bound_d}");
    }

    #[test]
    fn integrated_odometry_error_grows_linearly() {
        // With per-round independent translation noise and no rotation, the
        // integrated error over R rounds is a sum of R iid draws, so its
        // variance is proportional to R.
        let noise = NoiseSpec {
            sigma_d: 0.0,
            sigma_phi: 0.0,
            sigma_x: 0.01,
            sigma_y: 0.01,
        };
        let trials = 2000;
        let var_after = |rounds: usize| -> f64 {
            let mut acc = 0.0;
            for t in 0..trials {
                let mut w = world(1, 5.0, noise, 1000 + t as u64);
                let mut sum = Vec2::ZERO;
                for _ in 0..rounds {
                    let od = w.advance(&BTreeMap::new());
                    sum = sum + od[&RobotId(0)].translation;
                }
                acc += sum.dot(sum);
            }
            acc / trials as f64
        };
        let v10 = var_after(10);
        let v20 = var_after(20);
        let ratio = v20 / v10;
        assert!(
            (1.6..=2.4).contains(&ratio),
            "variance should double from 10 to 20 rounds, ratio {ratio}"
        );
    }
}
