use std::path::Path;

use parttrack::affinity::EpipolarRig;
use parttrack::geometry::{project, CameraId, Point3};
use parttrack::io::load_calibration;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn three_camera_fixture_loads() {
    let cams = load_calibration(&fixture("calib3.jsonl")).unwrap();
    let ids: Vec<_> = cams.iter().map(|c| c.id()).collect();
    assert_eq!(ids, [CameraId(0), CameraId(1), CameraId(2)]);
    for cam in &cams {
        assert_eq!(cam.image_size(), (1280, 960));
        assert_eq!(cam.fps(), 25.0);
        let p = project(&Point3::new(0.0, 0.0, 1.0), cam).unwrap();
        assert!(cam.in_image(&p, 0.0));
    }
    EpipolarRig::new(cams).unwrap();
}
