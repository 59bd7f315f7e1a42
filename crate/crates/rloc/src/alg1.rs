//! Localization without coordination.
//!
//! Each robot broadcasts only its per-round odometry. For every neighbor that
//! has stayed in range over a window of `δ+1` consecutive rounds, the robot
//! assembles the distance/odometry constraints
//!
//! ```text
//! ‖ −p_{a_j}|_{a_k} + R_φ p_{b_j}|_{b_k} + d_k ψ(θ) ‖ = d_j ,   j = k−δ … k−1
//! ```
//!
//! with unknowns `(θ, φ)` — the neighbor's bearing and relative orientation
//! at the current round — and minimizes the squared residual over the torus
//! by coarse grid seeding plus damped Gauss–Newton refinement.
//!
//! With `δ = 2` the constraint graph is a triangular prism: rigid but not
//! globally rigid, so a single window generically admits a second, spurious
//! exact solution next to the true one. [`Alg1Robot`] resolves this across
//! rounds: minima are tracked from window to window through both robots'
//! odometry, and only the true solution propagates exactly, so its track
//! outlives the spurious ones. Genuinely degenerate motions (collinear or
//! translated trajectories) are detected from the window's motion data and
//! reported as flip or rotation ambiguity instead.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::engine::{RobotId, RoundObservation};
use crate::geometry::{
    normalize_angle, rotate, unit_vector, wrap_to_pi, OdometryDelta, RelativePose, Rigid, Vec2,
};

/// Broadcast payload of Algorithm 1: the robot's own odometry for the round.
/// Constant size regardless of neighbor count.
pub type Alg1Payload = OdometryDelta;

/// Scalars in an [`Alg1Payload`] (2 translation + 1 rotation).
pub const PAYLOAD_SCALARS: usize = 3;

/// One window row: the measured distance at round `j` together with both
/// robots' integrated pose change from round `j` to the current round `k`,
/// each expressed in the respective round-`k` frame.
#[derive(Debug, Clone, Copy)]
pub struct WindowEntry {
    pub distance: f64,
    pub self_motion: Rigid,
    pub peer_motion: Rigid,
}

/// The per-neighbor constraint window: rows for `j = k−δ … k−1` (oldest
/// first) plus the current distance `d_k`. Rows must come from a contiguous
/// interval of co-neighborhood rounds.
#[derive(Debug, Clone)]
pub struct ConstraintWindow {
    pub entries: Vec<WindowEntry>,
    pub current_distance: f64,
}

impl ConstraintWindow {
    pub fn delta(&self) -> usize {
        self.entries.len()
    }
}

/// Compose per-round odometry deltas (oldest first) into the total pose
/// change `p_{u_j}|_{u_k}, φ_{u_j}|_{u_k}` expressed in the newest frame.
pub fn integrate_odometry(deltas: &[OdometryDelta]) -> Rigid {
    deltas
        .iter()
        .fold(Rigid::IDENTITY, |acc, d| Rigid::from(*d).compose(&acc))
}

/// Residual vector of the window constraints at a hypothesis `(θ, φ)`, one
/// entry per window row, in meters.
pub fn residual(theta: f64, phi: f64, window: &ConstraintWindow) -> Vec<f64> {
    let tip = unit_vector(theta).scale(window.current_distance);
    window
        .entries
        .iter()
        .map(|e| {
            let v = -e.self_motion.t + rotate(phi, e.peer_motion.t) + tip;
            v.norm() - e.distance
        })
        .collect()
}

/// How the window constrains the hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ambiguity {
    /// Isolated minimum; pose recovered.
    Unique,
    /// Collinear motions: mirror pair of minima across the motion line.
    Flip,
    /// A flat valley (translated trajectories or a stationary robot):
    /// orientation may be recoverable, position is not.
    Rotation,
    /// No usable motion in the window.
    Underdetermined,
}

/// Output of one solve: the selected estimate, its RMS residual, the
/// ambiguity class, and any alternate near-global minima (empty iff unique).
#[derive(Debug, Clone)]
pub struct LocalizationResult {
    pub estimate: RelativePose,
    pub residual_rms: f64,
    pub ambiguity: Ambiguity,
    pub alternates: Vec<RelativePose>,
}

#[derive(Debug, Error)]
pub enum Alg1Error {
    #[error("window has {delta} rows; δ ≥ 2 is required to determine (θ, φ)")]
    WindowTooShort { delta: usize },
}

/// Solver knobs. `motion_tol` and `track_gate` should scale with the noise
/// level; the defaults suit the noiseless model.
#[derive(Debug, Clone)]
pub struct Alg1Config {
    /// Grid resolution for coarse seeding (cells per axis).
    pub grid_size: usize,
    /// Gauss–Newton refinement tolerance on the step size.
    pub refine_tol: f64,
    /// Angular separation below which two minima are the same (radians).
    pub distinct_sep: f64,
    /// Near-global band: minima within `band_factor·tol` of the best RMS are
    /// reported.
    pub rms_band_factor: f64,
    /// Jacobian singular-value ratio below which the valley counts as flat.
    pub flat_ratio: f64,
    /// Tolerance for the degenerate-motion pattern tests (collinear or
    /// translated trajectories), in meters/radians.
    pub motion_tol: f64,
    /// Match gate for cross-round minima tracking (radians).
    pub track_gate: f64,
    /// Cap on refined grid seeds per window.
    pub max_refine: usize,
}

impl Default for Alg1Config {
    fn default() -> Self {
        Alg1Config {
            grid_size: 64,
            refine_tol: 1e-10,
            distinct_sep: 0.1,
            rms_band_factor: 2.0,
            flat_ratio: 1e-6,
            motion_tol: 1e-7,
            track_gate: 1e-5,
            max_refine: 16,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Minimum {
    theta: f64,
    phi: f64,
    cost: f64,
}

impl Minimum {
    fn rms(&self, delta: usize) -> f64 {
        (self.cost / delta as f64).sqrt()
    }
}

fn torus_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    wrap_to_pi(a.0 - b.0).hypot(wrap_to_pi(a.1 - b.1))
}

fn cost_at(theta: f64, phi: f64, window: &ConstraintWindow) -> f64 {
    residual(theta, phi, window).iter().map(|r| r * r).sum()
}

/// Residuals and the δ×2 Jacobian at `(θ, φ)`.
fn residuals_and_jacobian(
    theta: f64,
    phi: f64,
    window: &ConstraintWindow,
) -> (Vec<f64>, Vec<[f64; 2]>) {
    let d_k = window.current_distance;
    let tip = unit_vector(theta).scale(d_k);
    let dtip = unit_vector(theta).perp().scale(d_k);
    let mut res = Vec::with_capacity(window.entries.len());
    let mut jac = Vec::with_capacity(window.entries.len());
    for e in &window.entries {
        let rm = rotate(phi, e.peer_motion.t);
        let v = -e.self_motion.t + rm + tip;
        let n = v.norm().max(1e-12);
        res.push(v.norm() - e.distance);
        jac.push([v.dot(dtip) / n, v.dot(rm.perp()) / n]);
    }
    (res, jac)
}

/// Damped Gauss–Newton from a seed; stays on the torus.
fn refine(seed: (f64, f64), window: &ConstraintWindow, cfg: &Alg1Config) -> Minimum {
    let (mut theta, mut phi) = seed;
    let mut cost = cost_at(theta, phi, window);
    let mut lambda = 1e-3;
    for _ in 0..80 {
        let (res, jac) = residuals_and_jacobian(theta, phi, window);
        let mut a = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        let mut g0 = 0.0;
        let mut g1 = 0.0;
        for (r, j) in res.iter().zip(&jac) {
            a += j[0] * j[0];
            b += j[0] * j[1];
            c += j[1] * j[1];
            g0 += j[0] * r;
            g1 += j[1] * r;
        }
        let (aa, cc) = (a + lambda, c + lambda);
        let det = aa * cc - b * b;
        if det.abs() < 1e-300 {
            break;
        }
        let d_theta = -(cc * g0 - b * g1) / det;
        let d_phi = -(aa * g1 - b * g0) / det;
        let cand = (
            normalize_angle(theta + d_theta),
            normalize_angle(phi + d_phi),
        );
        let cand_cost = cost_at(cand.0, cand.1, window);
        if cand_cost < cost {
            theta = cand.0;
            phi = cand.1;
            cost = cand_cost;
            lambda = (lambda / 10.0).max(1e-12);
            if d_theta.hypot(d_phi) < cfg.refine_tol * 1e-2 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
    }
    Minimum { theta, phi, cost }
}

/// Local minima of the grid cost (torus topology), best first.
fn grid_seeds(window: &ConstraintWindow, cfg: &Alg1Config) -> Vec<(f64, f64)> {
    let g = cfg.grid_size;
    let step = std::f64::consts::TAU / g as f64;
    let d_k = window.current_distance;
    let tips: Vec<Vec2> = (0..g)
        .map(|t| unit_vector(t as f64 * step).scale(d_k))
        .collect();
    let mut cost = vec![0.0f64; g * g];
    for e in &window.entries {
        for p in 0..g {
            let c = rotate(p as f64 * step, e.peer_motion.t) - e.self_motion.t;
            let row = &mut cost[p * g..(p + 1) * g];
            for (t, slot) in row.iter_mut().enumerate() {
                let v = c + tips[t];
                let r = v.norm() - e.distance;
                *slot += r * r;
            }
        }
    }
    let mut minima: Vec<(f64, usize, usize)> = Vec::new();
    for p in 0..g {
        for t in 0..g {
            let v = cost[p * g + t];
            let mut is_min = true;
            'scan: for dp in [g - 1, 0, 1] {
                for dt in [g - 1, 0, 1] {
                    if dp == 0 && dt == 0 {
                        continue;
                    }
                    if cost[((p + dp) % g) * g + (t + dt) % g] < v {
                        is_min = false;
                        break 'scan;
                    }
                }
            }
            if is_min {
                minima.push((v, t, p));
            }
        }
    }
    minima.sort_by(|x, y| x.0.total_cmp(&y.0));
    minima
        .into_iter()
        .take(cfg.max_refine)
        .map(|(_, t, p)| (t as f64 * step, p as f64 * step))
        .collect()
}

/// Degenerate-motion pattern of a window, read off the motion data alone.
#[derive(Debug, Clone, Copy, PartialEq)]
enum MotionPattern {
    Generic,
    /// Both trajectories are straight lines: mirror symmetry across the
    /// self-motion line (direction `lambda`), with the peer line direction
    /// `mu` fixing the orientation reflection.
    Collinear { lambda: f64, mu: f64 },
    /// The peer trajectory is a displaced copy of the self trajectory with a
    /// constant heading offset `chi`: bearing is unconstrained.
    Translated { chi: f64 },
    /// One robot did not move: its distance data is invariant to rotations
    /// about it.
    OneSideStationary,
    /// Neither robot moved.
    Stationary,
}

fn classify_motion(window: &ConstraintWindow, tol: f64) -> MotionPattern {
    let s: Vec<Vec2> = window.entries.iter().map(|e| e.self_motion.t).collect();
    let m: Vec<Vec2> = window.entries.iter().map(|e| e.peer_motion.t).collect();
    let eps_len = 1e-9_f64.max(tol);
    let self_still = s.iter().all(|v| v.norm() < eps_len);
    let peer_still = m.iter().all(|v| v.norm() < eps_len);
    if self_still && peer_still {
        return MotionPattern::Stationary;
    }
    if self_still || peer_still {
        return MotionPattern::OneSideStationary;
    }

    // Translated: |m_j| = |s_j| with a constant heading offset χ = ∠s_j − ∠m_j.
    let translated = s
        .iter()
        .zip(&m)
        .all(|(a, b)| (a.norm() - b.norm()).abs() <= tol);
    if translated {
        let chis: Vec<f64> = s
            .iter()
            .zip(&m)
            .map(|(a, b)| a.angle() - b.angle())
            .collect();
        let spread = chis
            .iter()
            .map(|c| wrap_to_pi(c - chis[0]).abs())
            .fold(0.0, f64::max);
        if spread <= tol {
            return MotionPattern::Translated {
                chi: normalize_angle(chis[0]),
            };
        }
    }

    // Collinear: each robot's window positions lie on a line through its
    // current position, i.e. its motion vectors are mutually parallel.
    let parallel = |vs: &[Vec2]| -> Option<f64> {
        let longest = vs
            .iter()
            .cloned()
            .fold(vs[0], |a, b| if b.norm() > a.norm() { b } else { a });
        let ok = vs.iter().all(|v| {
            let cross = (v.x * longest.y - v.y * longest.x).abs();
            cross <= tol * v.norm().max(1.0) * longest.norm().max(1.0)
        });
        ok.then(|| longest.angle())
    };
    if let (Some(lambda), Some(mu)) = (parallel(&s), parallel(&m)) {
        return MotionPattern::Collinear { lambda, mu };
    }
    MotionPattern::Generic
}

/// Singular values (max, min) of the residual Jacobian at a point.
fn jacobian_singular_values(theta: f64, phi: f64, window: &ConstraintWindow) -> (f64, f64) {
    let (_, jac) = residuals_and_jacobian(theta, phi, window);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for j in &jac {
        a += j[0] * j[0];
        b += j[0] * j[1];
        c += j[1] * j[1];
    }
    let mean = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let hi = (mean + disc).max(0.0).sqrt();
    let lo = (mean - disc).max(0.0).sqrt();
    (hi, lo)
}

/// Per-window analysis: refined minima (finely deduplicated, best first)
/// plus the motion pattern.
struct Analysis {
    minima: Vec<Minimum>,
    pattern: MotionPattern,
}

fn analyze(
    window: &ConstraintWindow,
    cfg: &Alg1Config,
    warm_starts: &[(f64, f64)],
) -> Result<Analysis, Alg1Error> {
    if window.delta() < 2 {
        return Err(Alg1Error::WindowTooShort {
            delta: window.delta(),
        });
    }
    let pattern = classify_motion(window, cfg.motion_tol);
    let mut refined: Vec<Minimum> = Vec::new();
    for seed in warm_starts.iter().copied().chain(grid_seeds(window, cfg)) {
        refined.push(refine(seed, window, cfg));
    }
    refined.sort_by(|x, y| x.cost.total_cmp(&y.cost));
    // Two converged zeros of the prism system can sit closer than the
    // reporting separation, so deduplicate at a much finer scale here.
    let mut minima: Vec<Minimum> = Vec::new();
    for m in refined {
        if minima
            .iter()
            .all(|k| torus_dist((m.theta, m.phi), (k.theta, k.phi)) > 1e-7)
        {
            minima.push(m);
        }
    }
    Ok(Analysis { minima, pattern })
}

/// Mirror of a hypothesis across the motion line of a collinear window.
fn mirror_hypothesis(theta: f64, phi: f64, lambda: f64, mu: f64) -> (f64, f64) {
    (
        normalize_angle(2.0 * lambda - theta),
        normalize_angle(2.0 * lambda - 2.0 * mu - phi),
    )
}

fn near_global(minima: &[Minimum], delta: usize, tol: f64, cfg: &Alg1Config) -> Vec<Minimum> {
    let best = minima[0].rms(delta);
    let mut kept: Vec<Minimum> = Vec::new();
    for m in minima {
        if m.rms(delta) - best > cfg.rms_band_factor * tol {
            continue;
        }
        if kept
            .iter()
            .all(|k| torus_dist((m.theta, m.phi), (k.theta, k.phi)) > cfg.distinct_sep)
        {
            kept.push(*m);
        }
    }
    kept
}

fn result_from(
    analysis: &Analysis,
    window: &ConstraintWindow,
    tol: f64,
    cfg: &Alg1Config,
) -> LocalizationResult {
    let delta = window.delta();
    let d_k = window.current_distance;
    let best = analysis.minima[0];
    let as_pose = |m: &Minimum| RelativePose::new(m.theta, d_k, m.phi);

    match analysis.pattern {
        MotionPattern::Stationary => LocalizationResult {
            estimate: as_pose(&best),
            residual_rms: best.rms(delta),
            ambiguity: Ambiguity::Underdetermined,
            alternates: Vec::new(),
        },
        MotionPattern::OneSideStationary => LocalizationResult {
            estimate: as_pose(&best),
            residual_rms: best.rms(delta),
            ambiguity: Ambiguity::Rotation,
            alternates: Vec::new(),
        },
        MotionPattern::Translated { chi } => {
            // The zero set is the valley φ = χ with θ free; report valley
            // representatives and pin the recoverable orientation.
            let mut alternates = Vec::new();
            for m in near_global(&analysis.minima, delta, tol, cfg) {
                if wrap_to_pi(m.phi - chi).abs() <= cfg.distinct_sep.max(100.0 * cfg.motion_tol) {
                    alternates.push(RelativePose::new(m.theta, d_k, chi));
                }
            }
            if alternates.is_empty() {
                alternates.push(RelativePose::new(best.theta, d_k, chi));
            }
            let estimate = alternates.remove(0);
            LocalizationResult {
                estimate,
                residual_rms: best.rms(delta),
                ambiguity: Ambiguity::Rotation,
                alternates,
            }
        }
        MotionPattern::Collinear { lambda, mu } => {
            let (mt, mp) = mirror_hypothesis(best.theta, best.phi, lambda, mu);
            let mirror = refine((mt, mp), window, cfg);
            if torus_dist((best.theta, best.phi), (mirror.theta, mirror.phi)) > cfg.distinct_sep
                && (mirror.rms(delta) - best.rms(delta)) <= cfg.rms_band_factor * tol
            {
                LocalizationResult {
                    estimate: as_pose(&best),
                    residual_rms: best.rms(delta),
                    ambiguity: Ambiguity::Flip,
                    alternates: vec![as_pose(&mirror)],
                }
            } else {
                // The hypothesis sits on the mirror line itself.
                LocalizationResult {
                    estimate: as_pose(&best),
                    residual_rms: best.rms(delta),
                    ambiguity: Ambiguity::Unique,
                    alternates: Vec::new(),
                }
            }
        }
        MotionPattern::Generic => {
            let (hi, lo) = jacobian_singular_values(best.theta, best.phi, window);
            if hi < 1e-9 {
                return LocalizationResult {
                    estimate: as_pose(&best),
                    residual_rms: best.rms(delta),
                    ambiguity: Ambiguity::Underdetermined,
                    alternates: Vec::new(),
                };
            }
            if lo < cfg.flat_ratio * hi {
                return LocalizationResult {
                    estimate: as_pose(&best),
                    residual_rms: best.rms(delta),
                    ambiguity: Ambiguity::Rotation,
                    alternates: Vec::new(),
                };
            }
            LocalizationResult {
                estimate: as_pose(&best),
                residual_rms: best.rms(delta),
                ambiguity: Ambiguity::Unique,
                alternates: Vec::new(),
            }
        }
    }
}

/// Solve one window in isolation: grid seeding, refinement, and
/// degenerate-motion classification. `tol` is the RMS band (meters) for
/// reporting near-global alternates.
pub fn solve(window: &ConstraintWindow, tol: f64) -> Result<LocalizationResult, Alg1Error> {
    solve_with(window, tol, &Alg1Config::default())
}

pub fn solve_with(
    window: &ConstraintWindow,
    tol: f64,
    cfg: &Alg1Config,
) -> Result<LocalizationResult, Alg1Error> {
    let analysis = analyze(window, cfg, &[])?;
    Ok(result_from(&analysis, window, tol, cfg))
}

#[derive(Debug, Clone, Copy)]
struct Track {
    theta: f64,
    phi: f64,
    persistence: u32,
}

#[derive(Debug, Clone, Default)]
struct NeighborHistory {
    /// `(round, distance, peer delta)` for consecutive rounds, oldest first.
    records: VecDeque<(u64, f64, OdometryDelta)>,
    tracks: Vec<Track>,
    /// `d_k` of the last solved window, for track propagation.
    last_distance: Option<f64>,
}

/// Per-robot driver of Algorithm 1: buffers odometry and inbox history per
/// neighbor, solves each complete window, and carries minima tracks across
/// rounds to pin the true solution.
#[derive(Debug, Clone)]
pub struct Alg1Robot {
    id: RobotId,
    delta: usize,
    tol: f64,
    cfg: Alg1Config,
    own_deltas: VecDeque<(u64, OdometryDelta)>,
    neighbors: BTreeMap<RobotId, NeighborHistory>,
}

impl Alg1Robot {
    pub fn new(id: RobotId, delta: usize, tol: f64, cfg: Alg1Config) -> Result<Self, Alg1Error> {
        if delta < 2 {
            return Err(Alg1Error::WindowTooShort { delta });
        }
        Ok(Alg1Robot {
            id,
            delta,
            tol,
            cfg,
            own_deltas: VecDeque::new(),
            neighbors: BTreeMap::new(),
        })
    }

    pub fn id(&self) -> RobotId {
        self.id
    }

    /// The round-k broadcast: exactly the robot's own odometry tuple.
    pub fn broadcast(&self, own_odometry: OdometryDelta) -> Alg1Payload {
        own_odometry
    }

    /// Process one round's observation; returns a localization result for
    /// every neighbor with a complete contiguous window.
    pub fn run_round(
        &mut self,
        obs: &RoundObservation<Alg1Payload>,
    ) -> BTreeMap<RobotId, LocalizationResult> {
        let round = obs.round;
        self.own_deltas.push_back((round, obs.own_odometry));
        while self.own_deltas.len() > self.delta + 1 {
            self.own_deltas.pop_front();
        }

        // Update per-neighbor buffers; a co-neighborhood gap resets them.
        self.neighbors.retain(|id, _| obs.neighbor_ids.contains(id));
        for (&w, payload) in &obs.inbox {
            let h = self.neighbors.entry(w).or_default();
            if let Some(&(last, _, _)) = h.records.back() {
                if last + 1 != round {
                    h.records.clear();
                    h.tracks.clear();
                    h.last_distance = None;
                }
            }
            let d = obs.distances.get(&w).copied().unwrap_or(0.0).max(0.0);
            h.records.push_back((round, d, *payload));
            while h.records.len() > self.delta + 1 {
                h.records.pop_front();
            }
        }

        let mut results = BTreeMap::new();
        let neighbor_ids: Vec<RobotId> = self.neighbors.keys().copied().collect();
        for w in neighbor_ids {
            if let Some(result) = self.solve_neighbor(w, obs) {
                results.insert(w, result);
            }
        }
        results
    }

    fn solve_neighbor(
        &mut self,
        w: RobotId,
        obs: &RoundObservation<Alg1Payload>,
    ) -> Option<LocalizationResult> {
        let delta = self.delta;
        let h = self.neighbors.get_mut(&w)?;
        if h.records.len() < delta + 1 || self.own_deltas.len() < delta + 1 {
            return None;
        }

        // Integrated motions: suffix compositions ending at the current
        // round. own[0] / records[0] belong to round k−δ, whose delta is not
        // part of any suffix.
        let own: Vec<OdometryDelta> = self.own_deltas.iter().map(|&(_, d)| d).collect();
        let peer: Vec<OdometryDelta> = h.records.iter().map(|&(_, _, d)| d).collect();
        let mut self_suffix = vec![Rigid::IDENTITY; delta + 1];
        let mut peer_suffix = vec![Rigid::IDENTITY; delta + 1];
        for i in (0..delta).rev() {
            self_suffix[i] = self_suffix[i + 1].compose(&Rigid::from(own[i + 1]));
            peer_suffix[i] = peer_suffix[i + 1].compose(&Rigid::from(peer[i + 1]));
        }
        let entries: Vec<WindowEntry> = (0..delta)
            .map(|i| WindowEntry {
                distance: h.records[i].1,
                self_motion: self_suffix[i],
                peer_motion: peer_suffix[i],
            })
            .collect();
        let window = ConstraintWindow {
            entries,
            current_distance: h.records[delta].1,
        };

        // Propagate last round's tracks through both robots' current-round
        // odometry: T_{a_k←b_k} = own ∘ T_{a_{k−1}←b_{k−1}} ∘ peer⁻¹.
        let own_now = Rigid::from(obs.own_odometry);
        let peer_now = Rigid::from(*peer.last().unwrap());
        let mut predictions: Vec<(f64, f64, u32)> = Vec::new();
        if let Some(d_prev) = h.last_distance {
            for t in &h.tracks {
                let prev = Rigid::new(unit_vector(t.theta).scale(d_prev), t.phi);
                let prop = own_now.compose(&prev).compose(&peer_now.inverse());
                predictions.push((prop.t.angle(), normalize_angle(prop.r), t.persistence));
            }
        }
        let warm: Vec<(f64, f64)> = predictions.iter().map(|&(t, p, _)| (t, p)).collect();

        let analysis = analyze(&window, &self.cfg, &warm).ok()?;
        let mut result = result_from(&analysis, &window, self.tol, &self.cfg);

        // Track persistence: a minimum inherits a track whose propagated
        // prediction lands within the gate.
        let gate = self.cfg.track_gate;
        let band = self.cfg.rms_band_factor * self.tol;
        let best_rms = analysis.minima[0].rms(delta);
        let mut tracks: Vec<Track> = Vec::new();
        for m in &analysis.minima {
            if m.rms(delta) - best_rms > band {
                continue;
            }
            let mut persistence = 1;
            for &(pt, pp, per) in &predictions {
                if torus_dist((m.theta, m.phi), (pt, pp)) < gate {
                    persistence = persistence.max(per + 1);
                }
            }
            tracks.push(Track {
                theta: m.theta,
                phi: m.phi,
                persistence,
            });
        }
        tracks.sort_by(|a, b| b.persistence.cmp(&a.persistence));
        tracks.truncate(8);

        // A decisive track (unique top persistence ≥ 2) resolves the
        // window's solution multiplicity; degenerate valleys are never
        // overridden.
        if matches!(result.ambiguity, Ambiguity::Unique | Ambiguity::Flip) && !tracks.is_empty() {
            let top = tracks[0].persistence;
            let decisive =
                top >= 2 && tracks.iter().filter(|t| t.persistence == top).count() == 1;
            if decisive {
                let t = tracks[0];
                result = LocalizationResult {
                    estimate: RelativePose::new(t.theta, window.current_distance, t.phi),
                    residual_rms: (cost_at(t.theta, t.phi, &window) / delta as f64).sqrt(),
                    ambiguity: Ambiguity::Unique,
                    alternates: Vec::new(),
                };
            }
        }

        h.tracks = tracks;
        h.last_distance = Some(window.current_distance);
        Some(result)
    }
}
