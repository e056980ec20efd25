use ccpc_web::{b2_points, cloud_extents, region_labels, shape_points};

#[test]
fn shape_has_requested_points_and_extents() {
    let flat = shape_points("box", [0.4, 0.6, 0.8], 256, 1).unwrap();
    assert_eq!(flat.len(), 256 * 3);
    let e = cloud_extents(&flat).unwrap();
    // surface samples approach the box faces from inside
    for (got, want) in e.iter().zip([0.4, 0.6, 0.8]) {
        assert!(*got <= want + 1e-6 && *got > want - 0.1, "{e:?}");
    }
}

#[test]
fn b2_hits_target_extents() {
    let flat = shape_points("table", [0.5, 0.5, 0.5], 128, 2).unwrap();
    let scaled = b2_points(&flat, [0.3, 0.7, 0.9]).unwrap();
    for (got, want) in cloud_extents(&scaled).unwrap().iter().zip([0.3f32, 0.7, 0.9]) {
        assert!((got - want).abs() < 1e-6);
    }
}

#[test]
fn region_split_is_68_27_5() {
    let triples = region_labels("box", 1000, 3).unwrap();
    let mut counts = [0usize; 3];
    for t in triples.chunks(3) {
        counts[t[2] as usize - 1] += 1;
    }
    for (c, e) in counts.iter().zip([680usize, 270, 50]) {
        assert!(c.abs_diff(e) <= 1, "{counts:?}");
    }
}

#[test]
fn bad_inputs_are_errors() {
    assert!(shape_points("chair", [0.5; 3], 16, 0).is_err());
    assert!(region_labels("box", 5, 0).is_err());
    assert!(b2_points(&[0.0; 6], [0.5; 3]).is_err());
}
