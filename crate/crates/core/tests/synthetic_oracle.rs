use bovigeom_core::features::{CloudSurface, HeightGrid, Surface, LINES, TRIANGLES};
use bovigeom_core::synthetic::{cohort_member, generate_cow, oracle_features, CohortConfig, SyntheticCowParams};
use bovigeom_core::{backproject, extract_features, landmarks_to_3d, CameraConfig, FeatureParams, LandmarkSet, FEATURE_NAMES};

fn close(got: f64, want: f64, rel: f64, abs: f64) -> bool {
    (got - want).abs() <= (rel * want.abs()).max(abs)
}

fn camera() -> CameraConfig {
    CameraConfig::new(575.0, 575.0, 240.0, 130.0)
}

#[test]
fn depth_features_match_oracle() {
    let cfg = CohortConfig::default();
    for i in 0..4 {
        let p = cohort_member(&cfg, 11, i);
        let cow = generate_cow(&p).unwrap();
        let grid = HeightGrid::from_raster(&cow.raster, &camera());
        let fv = extract_features(&Surface::Grid(&grid), &cow.landmarks, &FeatureParams::default()).unwrap();
        let oracle = oracle_features(&cow.surface, &cow.landmarks).unwrap();
        for k in 0..FEATURE_NAMES.len() {
            assert!(
                close(fv.values[k], oracle.values[k], 0.02, 0.5),
                "cow {i} {}: {} vs oracle {}",
                FEATURE_NAMES[k],
                fv.values[k],
                oracle.values[k]
            );
        }
    }
}

#[test]
fn single_bulge_amplitude_is_recovered() {
    for (seed, h) in [(1, 6.0), (2, 15.0), (3, 25.0)] {
        let mut amp = [0.0; 10];
        amp[1] = h;
        let p = SyntheticCowParams { bulge_amplitude_mm: amp, dome_height_mm: 0.0, seed, ..Default::default() };
        let cow = generate_cow(&p).unwrap();
        let grid = HeightGrid::from_raster(&cow.raster, &camera());
        let fv = extract_features(&Surface::Grid(&grid), &cow.landmarks, &FeatureParams::default()).unwrap();
        assert!(close(fv.maxdist(1), h, 0.02, 0.0), "{} vs {h}", fv.maxdist(1));
    }
}

#[test]
fn cloud_features_scale_from_depth_features() {
    // A distant camera makes the px -> mm factor effectively constant.
    let ground = 100_000.0;
    let cam = CameraConfig { ground_distance_mm: ground, ..CameraConfig::new(50_000.0, 50_000.0, 240.0, 130.0) };
    let mut cfg = CohortConfig::default();
    cfg.template.ground_distance_mm = ground;
    let params = FeatureParams::default();
    for i in 0..3 {
        let cow = generate_cow(&cohort_member(&cfg, 23, i)).unwrap();
        let grid = HeightGrid::from_raster(&cow.raster, &cam);
        let d2 = extract_features(&Surface::Grid(&grid), &cow.landmarks, &params).unwrap();
        let lifted = landmarks_to_3d(&cow.landmarks, &cow.raster, &cam).unwrap();
        let cloud = backproject(&cow.raster, &cam).unwrap();
        let surface = CloudSurface::new(&cloud, &cam, &params).unwrap();
        let d3 = extract_features(&Surface::Cloud(&surface), &lifted, &params).unwrap();

        let px = |n| cow.landmarks.get(n).unwrap().pixel();
        let mm = |n| {
            let p = lifted.get(n).unwrap().xyz_mm.unwrap();
            [p[0], p[1]]
        };
        let len = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]).hypot(b[1] - a[1]);
        let tri_area = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
        };
        for (k, line) in LINES.iter().enumerate() {
            let (a, b) = line.endpoints;
            let s = len(mm(a), mm(b)) / len(px(a), px(b));
            assert!(close(d3.maxdist(k), d2.maxdist(k), 0.03, 0.5), "cow {i} maxdist {}: {} vs {}", line.id, d3.maxdist(k), d2.maxdist(k));
            assert!(close(d3.area(k), d2.area(k) * s, 0.03, 0.5 * s), "cow {i} area {}: {} vs {}", line.id, d3.area(k), d2.area(k) * s);
        }
        for (k, tri) in TRIANGLES.iter().enumerate() {
            let [a, b, c] = tri.vertices;
            let s = tri_area(mm(a), mm(b), mm(c)) / tri_area(px(a), px(b), px(c));
            assert!(close(d3.volume(k), d2.volume(k) * s, 0.03, 0.5 * s), "cow {i} volume {}: {} vs {}", tri.id, d3.volume(k), d2.volume(k) * s);
        }
    }
}

#[test]
fn cloud_features_are_translation_invariant() {
    let cam = camera();
    let params = FeatureParams::default();
    let cow = generate_cow(&cohort_member(&CohortConfig::default(), 5, 0)).unwrap();
    let lifted = landmarks_to_3d(&cow.landmarks, &cow.raster, &cam).unwrap();
    let cloud = backproject(&cow.raster, &cam).unwrap();
    let base = extract_features(&Surface::Cloud(&CloudSurface::new(&cloud, &cam, &params).unwrap()), &lifted, &params).unwrap();

    let (dx, dy) = (137.25, -48.5);
    let mut moved_cloud = cloud.clone();
    for p in &mut moved_cloud.points {
        p[0] += dx;
        p[1] += dy;
    }
    let moved_landmarks = LandmarkSet::from_landmarks(lifted.iter().map(|l| {
        let mut l = l.clone();
        let p = l.xyz_mm.unwrap();
        l.xyz_mm = Some([p[0] + dx, p[1] + dy, p[2]]);
        l
    }))
    .unwrap();
    let surface = CloudSurface::new(&moved_cloud, &cam, &params).unwrap();
    let moved = extract_features(&Surface::Cloud(&surface), &moved_landmarks, &params).unwrap();
    for k in 0..FEATURE_NAMES.len() {
        assert!(close(moved.values[k], base.values[k], 1e-6, 1e-9), "{}: {} vs {}", FEATURE_NAMES[k], moved.values[k], base.values[k]);
    }
}
