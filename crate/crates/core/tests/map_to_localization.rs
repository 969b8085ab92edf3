//! Record a segment, build and store a map, then localize a second run
//! against the reloaded map.

use vloc_core::geometry::{CameraIntrinsics, DepthRange};
use vloc_core::mapgraph::{build_map, load_map, load_segment, save_map, save_segment, select_keyframes, BuildParams, SegmentFiles};
use vloc_core::matching::OracleMatcher;
use vloc_core::pipeline::{replay, Event, Pipeline, PipelineConfig};
use vloc_core::simworld::{generate_segment, OdomNoise, Preset, SegmentConfig};
use vloc_core::trajectory::compute_ate;

#[test]
fn recorded_map_localizes_a_new_run() {
    let world = Preset::Rooms.build(5);
    let k = CameraIntrinsics::default_sim();
    let route = Preset::Rooms.mapping_route();
    let mapping = generate_segment(&world, &route, &k, &SegmentConfig { noise: OdomNoise::zero(), ..SegmentConfig::default() }, 5).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let seg_dir = dir.path().join("seg");
    let files = SegmentFiles {
        segment: mapping.segment.clone(),
        odometry: Some(mapping.odometry.clone()),
        ground_truth: Some(mapping.ground_truth.clone()),
    };
    save_segment(&files, &seg_dir).unwrap();
    let loaded = load_segment(&seg_dir).unwrap();
    assert_eq!(loaded.segment.frames.len(), mapping.segment.frames.len());

    let kf = select_keyframes(&loaded.segment, 40, 0.1, &DepthRange::default()).unwrap();
    assert_eq!(kf.len(), 40);
    let map = build_map(&loaded.segment, &kf, &BuildParams::default(), &mut OracleMatcher::exact(), Some(&world)).unwrap().map;
    let map_dir = dir.path().join("map");
    save_map(&map, &map_dir).unwrap();
    let map = {
        let again = load_map(&map_dir).unwrap();
        assert_eq!(again, map);
        again
    };

    // a second, drifting drive over the same route
    let run = generate_segment(&world, &route, &k, &SegmentConfig { noise: OdomNoise::drifting(), ..SegmentConfig::default() }, 77).unwrap();
    let mut events: Vec<Event> = run.odometry.iter().map(|(t, d)| Event::Odometry(*t, *d)).collect();
    events.extend(run.segment.frames.iter().map(|f| Event::Frame(f.timestamp, &f.observation)));
    let mut pipeline = Pipeline::new(PipelineConfig::default());
    let mut matcher = OracleMatcher::new(0.2, 0.5, 77).unwrap();
    let out = replay(&mut pipeline, events, &k, &map, &mut matcher).unwrap();

    assert!(out.fixes.len() * 2 > run.segment.frames.len(), "{} fixes", out.fixes.len());
    let ate = compute_ate(&run.ground_truth, &out.trajectory, 0.05).unwrap();
    assert!(ate.rmse < 0.15, "fused ATE {}", ate.rmse);
}
