use circdyn::viz::{julia_backward, rasterize, Dynamics, JuliaParams, MapSpec, View};
use std::path::PathBuf;

fn maps_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../maps")
}

fn small(seed: u64) -> JuliaParams {
    JuliaParams { points: 20_000, seed, ..JuliaParams::default() }
}

#[test]
fn bundled_maps_parse_and_round_trip() {
    let mut n = 0;
    for entry in std::fs::read_dir(maps_dir()).unwrap() {
        let path = entry.unwrap().path();
        let spec = MapSpec::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = MapSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec.to_json(), again.to_json());
        spec.dynamics().unwrap();
        n += 1;
    }
    assert!(n >= 6);
}

#[test]
fn unknown_fields_and_types_are_rejected() {
    assert!(MapSpec::from_json(r#"{"type":"power","degree":2,"reversing":false,"extra":1}"#).is_err());
    assert!(MapSpec::from_json(r#"{"type":"logistic","r":4}"#).is_err());
    assert!(MapSpec::from_json(r#"{"type":"power","degree":1,"reversing":false}"#).unwrap().covering().is_err());
}

#[test]
fn backward_iteration_is_deterministic() {
    let spec = MapSpec::from_file(&maps_dir().join("blaschke_b2.json")).unwrap();
    let dynamics = spec.dynamics().unwrap();
    let a = julia_backward(&dynamics, small(7)).unwrap();
    let b = julia_backward(&dynamics, small(7)).unwrap();
    let c = julia_backward(&dynamics, small(8)).unwrap();
    assert_eq!(a.len(), 20_000);
    assert_eq!(a, b);
    assert_ne!(a, c);
    // A Blaschke product with zeros in the disk has the unit circle as Julia set.
    if let Dynamics::Planar(_) = dynamics {
        assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-9));
    }
}

#[test]
fn raster_has_the_requested_size() {
    let spec = MapSpec::from_file(&maps_dir().join("pine_tree.json")).unwrap();
    let pts = julia_backward(&spec.dynamics().unwrap(), small(1)).unwrap();
    let img = rasterize(&pts, 64, 48, View::fit(&pts));
    let ppm = img.to_ppm();
    let header = b"P6\n64 48\n255\n";
    assert!(ppm.starts_with(header));
    assert_eq!(ppm.len(), header.len() + 64 * 48 * 3);
    assert!(img.data.chunks(3).any(|p| p != img.data[..3].as_ref()));
}
