//! The localization state machine: global localization by retrieval when
//! lost, local localization against covisible nodes while tracking, and
//! pose-graph fusion of the resulting fixes with odometry.

use thiserror::Error;

use crate::geometry::{CameraIntrinsics, DepthRange, Pose};
use crate::mapgraph::TopoMetricMap;
use crate::matching::Matcher;
use crate::observation::Observation;
use crate::poseslam::{FusionError, FusionGraph, FusionParams, Window};
use crate::relocal::{localize_against_node, PnpParams, RelocError, RelocStatus};
use crate::retrieval::{extract_descriptor, similarity, top_k, RetrievalError};
use crate::textio::fmt_sig;

/// Meters per radian when ranking fallback references by pose proximity.
const HEADING_WEIGHT: f64 = 1.0;

pub const FRAME_LOG_HEADER: &str = "timestamp,mode,reference_node,inliers,total,status,sim_top1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no world pose while lost")]
    NotLocalized,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Reloc(#[from] RelocError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Lost,
    Tracking,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Lost => "Lost",
            Mode::Tracking => "Tracking",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Retrieval similarity required to accept a global localization.
    pub gl_min_sim: f64,
    /// Consecutive local failures before falling back to global localization.
    pub max_failures: usize,
    /// Candidates tried per frame, most similar first, until one succeeds.
    pub reference_tries: usize,
    /// Largest disagreement between a fix and the fused pose that is still
    /// fused, as meters plus radians of heading.
    pub fix_gate: f64,
    pub pnp: PnpParams,
    pub fusion: FusionParams,
    pub range: DepthRange,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gl_min_sim: 0.5,
            max_failures: 5,
            reference_tries: 3,
            fix_gate: 1.0,
            pnp: PnpParams::default(),
            fusion: FusionParams::default(),
            range: DepthRange::default(),
        }
    }
}

/// Outcome of one observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameStatus {
    Reloc(RelocStatus),
    /// Lost, and the best retrieval was below the acceptance gate.
    GlRejected,
    /// Local localization succeeded but disagreed with the fused pose by
    /// more than the fix gate.
    Inconsistent,
}

impl FrameStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameStatus::Reloc(s) => s.as_str(),
            FrameStatus::GlRejected => "GlRejected",
            FrameStatus::Inconsistent => "Inconsistent",
        }
    }
}

/// One row of the per-frame log. Only deterministic quantities go here.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameLog {
    pub timestamp: f64,
    /// Mode after the frame was processed.
    pub mode: Mode,
    pub reference_node: Option<u32>,
    pub inliers: usize,
    pub total: usize,
    pub status: FrameStatus,
    /// Similarity of the best retrieved node.
    pub sim_top1: f64,
}

impl FrameLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            fmt_sig(self.timestamp, 17),
            self.mode.as_str(),
            self.reference_node.map(|n| n.to_string()).unwrap_or_default(),
            self.inliers,
            self.total,
            self.status.as_str(),
            fmt_sig(self.sim_top1, 9)
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutcome {
    /// World pose fix from local localization, if one succeeded.
    pub fix: Option<Pose>,
    pub log: FrameLog,
}

#[derive(Clone, Debug)]
pub struct Pipeline {
    pub config: PipelineConfig,
    mode: Mode,
    prior_pose: Option<Pose>,
    consecutive_failures: usize,
    /// Set once two consecutive local fixes agree after a global
    /// localization. Until then no world pose is published.
    verified: bool,
    /// A fix since the last retrieval has re-anchored the graph.
    anchored: bool,
    fusion: FusionGraph,
    /// Last world pose before getting lost, and odometry composed since.
    dead_reckoning: Option<Pose>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            fusion: FusionGraph::new(config.fusion.huber_delta),
            config,
            mode: Mode::Lost,
            prior_pose: None,
            consecutive_failures: 0,
            verified: false,
            anchored: false,
            dead_reckoning: None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn prior_pose(&self) -> Option<Pose> {
        self.prior_pose
    }

    pub fn consecutive_failures(&self) -> usize {
        self.consecutive_failures
    }

    pub fn fusion(&self) -> &FusionGraph {
        &self.fusion
    }

    /// The fused pose when verified, otherwise odometry composed onto the
    /// last verified pose; `None` before the first fix.
    pub fn dead_reckoned_pose(&self) -> Option<Pose> {
        if self.verified {
            self.prior_pose
        } else {
            self.dead_reckoning
        }
    }

    fn note_failure(&mut self) {
        self.consecutive_failures += 1;
        if self.consecutive_failures >= self.config.max_failures {
            self.enter_lost();
        }
    }

    fn enter_lost(&mut self) {
        self.dead_reckoning = if self.verified { self.prior_pose } else { self.dead_reckoning };
        self.verified = false;
        self.anchored = false;
        self.mode = Mode::Lost;
        self.prior_pose = None;
        self.consecutive_failures = 0;
    }

    /// Applies an odometry delta. While lost the motion is only dead
    /// reckoned, and no world pose is claimed until a global localization
    /// has been confirmed by a local one.
    pub fn on_odometry(&mut self, delta: &Pose, timestamp: f64) -> Result<Pose, PipelineError> {
        if self.mode == Mode::Tracking {
            let sigmas = self.config.fusion.odom_sigmas(delta);
            let pose = self.fusion.propagate(delta, sigmas, timestamp)?;
            self.prior_pose = Some(pose);
        }
        if let Some(p) = self.dead_reckoning.as_mut().filter(|_| !self.verified) {
            *p = p.compose(delta);
        }
        match self.prior_pose {
            Some(pose) if self.verified => Ok(pose),
            _ => Err(PipelineError::NotLocalized),
        }
    }

    pub fn on_observation(
        &mut self,
        obs: &Observation,
        k: &CameraIntrinsics,
        map: &TopoMetricMap,
        matcher: &mut dyn Matcher,
        timestamp: f64,
    ) -> Result<FrameOutcome, PipelineError> {
        let query = extract_descriptor(&obs.color)?;
        let (top_node, sim_top1) = top_k(&query.values, map, 1)?.top1().ok_or(RetrievalError::EmptyMap)?;

        if self.mode == Mode::Lost {
            if sim_top1 < self.config.gl_min_sim {
                return Ok(FrameOutcome {
                    fix: None,
                    log: FrameLog {
                        timestamp,
                        mode: Mode::Lost,
                        reference_node: Some(top_node),
                        inliers: 0,
                        total: 0,
                        status: FrameStatus::GlRejected,
                        sim_top1,
                    },
                });
            }
            let pose = map.node(top_node).ok_or(RetrievalError::EmptyMap)?.pose;
            // A fresh graph anchored where retrieval put us.
            self.fusion = FusionGraph::new(self.config.fusion.huber_delta);
            self.fusion.init(pose, timestamp)?;
            self.mode = Mode::Tracking;
            self.prior_pose = Some(pose);
            self.consecutive_failures = 0;
        }

        let prior = self.prior_pose.ok_or(PipelineError::NotLocalized)?;
        let proximity = |n: &Pose| n.translation_distance(&prior) + HEADING_WEIGHT * n.rotation_angle_to(&prior);
        // Heading counts too, otherwise a node on the return leg of a
        // corridor can win over the one we are actually looking at.
        let nearest = (0..map.len() as u32)
            .filter_map(|id| map.node(id).map(|n| (proximity(&n.pose), id)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
            .ok_or(RetrievalError::EmptyMap)?;
        let mut candidates: Vec<(f64, u32)> = Vec::new();
        let mut ids = map.cvg_neighbors(nearest);
        ids.insert(nearest);
        for id in ids {
            let node = map.node(id).ok_or(RetrievalError::EmptyMap)?;
            candidates.push((similarity(&query.values, &node.descriptor), id));
        }
        // The most similar node goes first (ids ascend within ties). Any
        // further tries take the remaining candidates closest to the prior.
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let near = |id: u32| proximity(&map.node(id).expect("candidate exists").pose);
        if let Some((_, rest)) = candidates.split_first_mut() {
            rest.sort_by(|a, b| near(a.1).total_cmp(&near(b.1)).then(a.1.cmp(&b.1)));
        }
        let mut attempt = None;
        for &(_, id) in candidates.iter().take(self.config.reference_tries.max(1)) {
            let node = map.node(id).ok_or(RetrievalError::EmptyMap)?;
            let r = localize_against_node(node, obs, k, matcher, &self.config.pnp, &self.config.range)?;
            let done = r.is_success();
            attempt = Some((id, r));
            if done {
                break;
            }
        }
        let (reference, r) = attempt.ok_or(RetrievalError::EmptyMap)?;

        let mut status = FrameStatus::Reloc(r.status);
        let fix = if r.is_success() {
            let agrees = proximity(&r.pose) <= self.config.fix_gate;
            let sigmas = self.config.fusion.prior_sigmas(r.inliers, self.config.pnp.min_inliers);
            if self.verified && !agrees {
                status = FrameStatus::Inconsistent;
                self.note_failure();
                None
            } else if self.verified || (self.anchored && agrees) {
                let state = self.fusion.state_nearest(timestamp).ok_or(FusionError::EmptyGraph)?;
                self.fusion.add_vloc_fix(state, r.pose, sigmas)?;
                self.fusion.optimize(Window::Last(self.config.fusion.window))?;
                self.prior_pose = Some(self.fusion.current_pose()?.0);
                self.consecutive_failures = 0;
                self.verified = true;
                self.dead_reckoning = None;
                Some(r.pose)
            } else {
                // First fix since retrieval, or one contradicting the
                // previous: restart the graph from it and wait for another.
                if self.anchored {
                    self.consecutive_failures += 1;
                }
                self.fusion = FusionGraph::new(self.config.fusion.huber_delta);
                self.fusion.init(r.pose, timestamp)?;
                self.fusion.add_vloc_fix(0, r.pose, sigmas)?;
                self.prior_pose = Some(r.pose);
                self.anchored = true;
                Some(r.pose)
            }
        } else {
            self.note_failure();
            None
        };
        Ok(FrameOutcome {
            fix,
            log: FrameLog {
                timestamp,
                mode: self.mode,
                reference_node: Some(reference),
                inliers: r.inliers,
                total: r.total,
                status,
                sim_top1,
            },
        })
    }

    /// Fused world pose, or `None` while lost or not yet verified.
    pub fn current_pose(&self) -> Option<Pose> {
        match self.mode {
            Mode::Tracking if self.verified => self.prior_pose,
            _ => None,
        }
    }
}

/// Input event for [`replay`]. At equal timestamps odometry goes first.
#[derive(Clone, Debug)]
pub enum Event<'a> {
    Odometry(f64, Pose),
    Frame(f64, &'a Observation),
}

impl Event<'_> {
    fn key(&self) -> (f64, u8) {
        match self {
            Event::Odometry(t, _) => (*t, 0),
            Event::Frame(t, _) => (*t, 1),
        }
    }
}

/// Result of replaying a recorded stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayOutput {
    /// World pose after every event that produced one.
    pub trajectory: Vec<(f64, Pose)>,
    pub frames: Vec<FrameLog>,
    /// Raw localization results, before fusion.
    pub fixes: Vec<(f64, Pose)>,
}

/// Feeds odometry and frames through a pipeline in timestamp order.
pub fn replay(
    pipeline: &mut Pipeline,
    mut events: Vec<Event<'_>>,
    k: &CameraIntrinsics,
    map: &TopoMetricMap,
    matcher: &mut dyn Matcher,
) -> Result<ReplayOutput, PipelineError> {
    events.sort_by(|a, b| {
        let (ka, kb) = (a.key(), b.key());
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
    });
    let mut out = ReplayOutput::default();
    for e in events {
        match e {
            Event::Odometry(t, delta) => match pipeline.on_odometry(&delta, t) {
                Ok(p) => out.trajectory.push((t, p)),
                Err(PipelineError::NotLocalized) => {}
                Err(err) => return Err(err),
            },
            Event::Frame(t, obs) => {
                let o = pipeline.on_observation(obs, k, map, matcher, t)?;
                if let Some(fix) = o.fix {
                    out.fixes.push((t, fix));
                    if let Some(p) = pipeline.current_pose() {
                        out.trajectory.push((t, p));
                    }
                }
                out.frames.push(o.log);
            }
        }
    }
    // A fix can rewrite the pose at an already emitted timestamp; keep the
    // latest value per timestamp.
    out.trajectory.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            *earlier = *later;
            true
        } else {
            false
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::mapgraph::{build_map, select_keyframes, BuildParams};
    use crate::matching::{ClassicalMatcher, OracleMatcher};
    use crate::simworld::{generate_segment, render, OdomNoise, Preset, SegmentConfig, SegmentRun};
    use crate::trajectory::compute_ate;

    fn mapped(preset: Preset, seed: u64, budget: usize) -> (crate::simworld::GridWorld, SegmentRun, TopoMetricMap) {
        let world = preset.build(seed);
        let k = CameraIntrinsics::default_sim();
        let config = SegmentConfig {
            noise: OdomNoise::zero(),
            ..SegmentConfig::default()
        };
        let run = generate_segment(&world, &preset.mapping_route(), &k, &config, seed).unwrap();
        let kf = select_keyframes(&run.segment, budget, 0.1, &DepthRange::default()).unwrap();
        let map = build_map(&run.segment, &kf, &BuildParams::default(), &mut OracleMatcher::exact(), Some(&world))
            .unwrap()
            .map;
        (world, run, map)
    }

    fn featureless() -> Observation {
        Observation {
            color: crate::imaging::GrayImage::from_pixel(128, 128, image::Luma([100])),
            depth: Some(crate::imaging::DepthImage::from_vec(128, 128, vec![2.0; 128 * 128])),
            landmarks: None,
        }
    }

    #[test]
    fn node_image_relocalizes_to_node_pose() {
        let (world, _, map) = mapped(Preset::Corridor, 1, 30);
        let k = CameraIntrinsics::default_sim();
        let node = &map.nodes[3];
        let obs = render(&world, &node.pose, &k).unwrap().into_observation();
        let mut p = Pipeline::new(PipelineConfig::default());
        let o = p.on_observation(&obs, &k, &map, &mut OracleMatcher::exact(), 0.0).unwrap();
        assert_eq!(p.mode(), Mode::Tracking);
        assert_eq!(o.log.status, FrameStatus::Reloc(RelocStatus::Success));
        let fix = o.fix.unwrap();
        assert!(fix.translation_distance(&node.pose) < 1e-6);
        assert!(fix.rotation_angle_to(&node.pose) < 1e-6);
    }

    #[test]
    fn retrieval_alone_claims_no_pose() {
        let (world, _, map) = mapped(Preset::Corridor, 1, 30);
        let k = CameraIntrinsics::default_sim();
        let mut obs = render(&world, &map.nodes[3].pose, &k).unwrap().into_observation();
        // without annotations the oracle finds nothing, so LL fails
        let annotations = obs.landmarks.take();
        let mut p = Pipeline::new(PipelineConfig::default());
        let o = p.on_observation(&obs, &k, &map, &mut OracleMatcher::exact(), 0.0).unwrap();
        assert_eq!(p.mode(), Mode::Tracking);
        assert!(o.fix.is_none());
        assert_eq!(p.current_pose(), None);
        assert!(matches!(p.on_odometry(&Pose::identity(), 0.1), Err(PipelineError::NotLocalized)));
        obs.landmarks = annotations;
        // one fix only anchors; a second agreeing one verifies
        let o = p.on_observation(&obs, &k, &map, &mut OracleMatcher::exact(), 0.2).unwrap();
        assert!(o.fix.is_some());
        assert_eq!(p.current_pose(), None);
        p.on_observation(&obs, &k, &map, &mut OracleMatcher::exact(), 0.4).unwrap();
        assert!(p.current_pose().is_some());
        assert!(p.on_odometry(&Pose::identity(), 0.5).is_ok());
    }

    #[test]
    fn contradicting_fix_is_rejected() {
        let (world, _, map) = mapped(Preset::Corridor, 1, 30);
        let k = CameraIntrinsics::default_sim();
        let obs = render(&world, &map.nodes[3].pose, &k).unwrap().into_observation();
        let mut p = Pipeline::new(PipelineConfig::default());
        for t in [0.0, 1.0] {
            p.on_observation(&obs, &k, &map, &mut OracleMatcher::exact(), t).unwrap();
        }
        let before = p.current_pose().unwrap();
        // odometry claims a 3 m jump the camera does not see
        p.on_odometry(&Pose::planar(3.0, 0.0, 0.0, 0.0), 1.5).unwrap();
        let o = p.on_observation(&obs, &k, &map, &mut OracleMatcher::exact(), 2.0).unwrap();
        assert_eq!(o.log.status, FrameStatus::Inconsistent);
        assert!(o.fix.is_none());
        assert_eq!(p.consecutive_failures(), 1);
        assert!((p.current_pose().unwrap().translation_distance(&before) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn repeated_failures_fall_back_to_lost() {
        let (world, _, map) = mapped(Preset::Corridor, 1, 30);
        let k = CameraIntrinsics::default_sim();
        let obs = render(&world, &map.nodes[2].pose, &k).unwrap().into_observation();
        let mut p = Pipeline::new(PipelineConfig::default());
        let mut m = ClassicalMatcher::default();
        p.on_observation(&obs, &k, &map, &mut m, 0.0).unwrap();
        assert_eq!(p.mode(), Mode::Tracking);
        // featureless frames fail locally but a flat image retrieves poorly,
        // so once lost they are rejected by the gate
        let blank = featureless();
        for i in 0..4 {
            p.on_observation(&blank, &k, &map, &mut m, 1.0 + i as f64).unwrap();
            assert_eq!(p.mode(), Mode::Tracking);
            assert_eq!(p.consecutive_failures(), i + 1);
        }
        let o = p.on_observation(&blank, &k, &map, &mut m, 5.0).unwrap();
        assert_eq!(o.log.status, FrameStatus::Reloc(RelocStatus::TooFewMatches));
        assert_eq!(p.mode(), Mode::Lost);
        assert_eq!(p.consecutive_failures(), 0);
    }

    #[test]
    fn odometry_needs_a_localization() {
        let (world, _, map) = mapped(Preset::Corridor, 1, 30);
        let k = CameraIntrinsics::default_sim();
        let mut p = Pipeline::new(PipelineConfig::default());
        assert!(matches!(p.on_odometry(&Pose::identity(), 0.5), Err(PipelineError::NotLocalized)));
        let obs = render(&world, &map.nodes[1].pose, &k).unwrap().into_observation();
        p.on_observation(&obs, &k, &map, &mut OracleMatcher::exact(), 0.9).unwrap();
        p.on_observation(&obs, &k, &map, &mut OracleMatcher::exact(), 1.0).unwrap();
        let before = p.current_pose().unwrap();
        assert_eq!(p.on_odometry(&Pose::identity(), 1.1).unwrap(), before);
        let moved = p.on_odometry(&Pose::from_translation(Vec3::new(0.5, 0.0, 0.0)), 1.2).unwrap();
        assert!((moved.translation_distance(&before) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unmapped_view_is_rejected_by_the_gate() {
        let (_, _, map) = mapped(Preset::Corridor, 1, 30);
        let k = CameraIntrinsics::default_sim();
        let mut p = Pipeline::new(PipelineConfig {
            gl_min_sim: 0.999,
            ..PipelineConfig::default()
        });
        let o = p.on_observation(&featureless(), &k, &map, &mut OracleMatcher::exact(), 0.0).unwrap();
        assert_eq!(o.log.status, FrameStatus::GlRejected);
        assert_eq!(p.mode(), Mode::Lost);
        assert!(o.fix.is_none());
    }

    #[test]
    fn exact_oracle_fixes_match_ground_truth() {
        let (_, run, map) = mapped(Preset::Rooms, 3, 40);
        let k = CameraIntrinsics::default_sim();
        let mut events: Vec<Event> = run.odometry.iter().map(|(t, d)| Event::Odometry(*t, *d)).collect();
        events.extend(run.segment.frames.iter().map(|f| Event::Frame(f.timestamp, &f.observation)));
        let mut p = Pipeline::new(PipelineConfig::default());
        let out = replay(&mut p, events, &k, &map, &mut OracleMatcher::exact()).unwrap();
        let mut fixes = 0;
        for (f, log) in run.segment.frames.iter().zip(&out.frames) {
            if log.status != FrameStatus::Reloc(RelocStatus::Success) {
                continue;
            }
            let fix = out.fixes.iter().find(|(t, _)| *t == f.timestamp).unwrap().1;
            // depth is stored as f32, so lifted points carry ~1e-7 m of
            // rounding that few-point, single-plane views amplify
            let tol = if log.inliers >= 30 { 1e-6 } else { 1e-5 };
            assert!(fix.translation_distance(&f.pose) < tol, "t {}", f.timestamp);
            fixes += 1;
        }
        assert!(fixes as f64 > 0.8 * run.segment.frames.len() as f64, "{fixes}");
    }

    /// Frames of a second drive along the mapped corridor, offset sideways,
    /// localize with the classical matcher whenever a keyframe is in range.
    #[test]
    fn corridor_replay_success_rate() {
        let (world, _, map) = mapped(Preset::Corridor, 1, 80);
        let k = CameraIntrinsics::default_sim();
        let y = Preset::Corridor.mapping_route()[0].1 + 0.3;
        let route = [(2.0, y), (30.0, y)];
        let config = SegmentConfig {
            noise: OdomNoise::zero(),
            rates: crate::simworld::Rates {
                odom_hz: 15.0,
                camera: crate::simworld::FrameTrigger::Distance(0.5),
            },
            ..SegmentConfig::default()
        };
        let run = generate_segment(&world, &route, &k, &config, 9).unwrap();
        let mut events: Vec<Event> = run.odometry.iter().map(|(t, d)| Event::Odometry(*t, *d)).collect();
        events.extend(run.segment.frames.iter().map(|f| Event::Frame(f.timestamp, &f.observation)));
        let mut p = Pipeline::new(PipelineConfig::default());
        let out = replay(&mut p, events, &k, &map, &mut ClassicalMatcher::default()).unwrap();
        let (mut near, mut ok) = (0, 0);
        for (f, log) in run.segment.frames.iter().zip(&out.frames) {
            // within matcher range: close, and facing roughly the same way
            let in_range = |n: &crate::mapgraph::MapNode| {
                n.pose.translation_distance(&f.pose) < 1.0 && n.pose.rotation_angle_to(&f.pose) < 45f64.to_radians()
            };
            if map.nodes.iter().any(in_range) {
                near += 1;
                ok += usize::from(log.status == FrameStatus::Reloc(RelocStatus::Success));
            }
        }
        let rate = ok as f64 / near as f64;
        assert!(near > 20 && rate >= 0.95, "{ok}/{near}");
    }

    #[test]
    fn fused_stream_beats_raw_odometry() {
        let preset = Preset::Rooms;
        let (world, _, map) = mapped(preset, 5, 60);
        let k = CameraIntrinsics::default_sim();
        let config = SegmentConfig {
            noise: OdomNoise::drifting(),
            ..SegmentConfig::default()
        };
        let run = generate_segment(&world, &preset.mapping_route(), &k, &config, 21).unwrap();
        let mut raw = vec![run.ground_truth[0]];
        for (t, d) in &run.odometry {
            raw.push((*t, raw.last().unwrap().1.compose(d)));
        }
        let mut events: Vec<Event> = run.odometry.iter().map(|(t, d)| Event::Odometry(*t, *d)).collect();
        events.extend(run.segment.frames.iter().map(|f| Event::Frame(f.timestamp, &f.observation)));
        let mut p = Pipeline::new(PipelineConfig::default());
        let out = replay(&mut p, events, &k, &map, &mut OracleMatcher::new(0.1, 0.5, 3).unwrap()).unwrap();
        let fused = compute_ate(&run.ground_truth, &out.trajectory, 1e-6).unwrap();
        let dead = compute_ate(&run.ground_truth, &raw, 1e-6).unwrap();
        assert!(fused.rmse < dead.rmse, "{} vs {}", fused.rmse, dead.rmse);
        assert!(fused.matched as f64 > 0.9 * run.ground_truth.len() as f64);
    }

    #[test]
    fn frame_log_row_format() {
        let log = FrameLog {
            timestamp: 1.5,
            mode: Mode::Tracking,
            reference_node: Some(4),
            inliers: 30,
            total: 41,
            status: FrameStatus::Reloc(RelocStatus::Success),
            sim_top1: 0.75,
        };
        assert_eq!(log.csv_row(), "1.5,Tracking,4,30,41,Success,0.75");
        assert_eq!(FRAME_LOG_HEADER.split(',').count(), log.csv_row().split(',').count());
    }
}
