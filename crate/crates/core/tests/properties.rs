use ccpc::baselines::b2_scale;
use ccpc::conditioning::{LabelKde, SigmaRegionModel};
use ccpc::metrics::{chamfer, emd, extents};
use ccpc::shapes::{ConditionVector, PointCloud};
use ccpc::tensor::{load_checkpoint, save_checkpoint, ParamStore, Tape, Tensor};
use proptest::prelude::*;

fn cloud(max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(prop::array::uniform3(-2.0f32..2.0), 2..max).prop_map(|p| PointCloud::new(p).unwrap())
}

fn spread_cloud() -> impl Strategy<Value = PointCloud> {
    // two fixed corners guarantee positive extent on every axis
    prop::collection::vec(prop::array::uniform3(0.0f32..1.0), 0..40).prop_map(|mut p| {
        p.push([-0.5, -0.5, -0.5]);
        p.push([1.5, 1.5, 1.5]);
        PointCloud::new(p).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_is_a_symmetric_premetric(a in cloud(20), b in cloud(20)) {
        let (ab, ba) = (chamfer(&a, &b), chamfer(&b, &a));
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(chamfer(&a, &a), 0.0);
    }

    #[test]
    fn emd_is_symmetric_and_bounded_by_nearest_neighbours(pts in prop::collection::vec(prop::array::uniform3(-1.0f32..1.0), 4..24)) {
        let half = pts.len() / 2;
        let a = PointCloud::new(pts[..half].to_vec()).unwrap();
        let b = PointCloud::new(pts[half..2 * half].to_vec()).unwrap();
        let (ab, ba) = (emd(&a, &b).unwrap(), emd(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(emd(&a, &a).unwrap().abs() < 1e-12);
        // every matched pair is at least as far apart as the nearest neighbour
        let dist = |p: &[f32; 3], q: &[f32; 3]| (0..3).map(|k| (p[k] as f64 - q[k] as f64).powi(2)).sum::<f64>().sqrt();
        let nn: f64 = a.points().iter().map(|p| b.points().iter().map(|q| dist(p, q)).fold(f64::MAX, f64::min)).sum::<f64>() / half as f64;
        prop_assert!(ab + 1e-9 >= nn);
    }

    #[test]
    fn b2_exact_extents_and_preserved_size(c in spread_cloud(), y in prop::array::uniform3(0.01f32..1.0)) {
        let target = ConditionVector::new(y.to_vec());
        let out = b2_scale(&c, &target).unwrap();
        prop_assert_eq!(out.len(), c.len());
        let e = extents(&out);
        for k in 0..3 {
            prop_assert!((e[k] - y[k] as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn sum_to_undoes_broadcast_up_to_the_repeat_factor(v in prop::collection::vec(-5.0f64..5.0, 4), reps in 1usize..5) {
        let tape = Tape::<f64>::new();
        let x = tape.var(Tensor::new([4], v.clone()).unwrap());
        let back = x.broadcast_to(&[reps, 4]).unwrap().sum_to(&[4]).unwrap();
        for (got, want) in back.value().data().iter().zip(&v) {
            prop_assert!((got - want * reps as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn region_assignment_ignores_training_order(labels in prop::collection::vec(prop::array::uniform2(0.0f64..1.0), 25..60), q in prop::array::uniform2(0.0f64..1.0), rot in 0usize..25) {
        let rows: Vec<Vec<f64>> = labels.iter().map(|l| l.to_vec()).collect();
        let mut rotated = rows.clone();
        rotated.rotate_left(rot);
        let m1 = SigmaRegionModel::fit(&LabelKde::fit_rows(&rows).unwrap(), &rows, 20).unwrap();
        let m2 = SigmaRegionModel::fit(&LabelKde::fit_rows(&rotated).unwrap(), &rotated, 20).unwrap();
        prop_assert_eq!(m1.classify(&q), m2.classify(&q));
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(vals in prop::collection::vec(any::<f32>(), 1..50)) {
        let mut store = ParamStore::<f32>::new();
        let n = vals.len();
        store.add("w", Tensor::new([n], vals.clone()).unwrap());
        store.add("s", Tensor::scalar(vals[0]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ccpc");
        save_checkpoint(&path, &store).unwrap();
        let back: ParamStore<f32> = load_checkpoint(&path).unwrap();
        let bits = |s: &ParamStore<f32>| s.iter().flat_map(|p| p.value.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&store), bits(&back));
        prop_assert_eq!(back.names().collect::<Vec<_>>(), vec!["w", "s"]);
    }
}
