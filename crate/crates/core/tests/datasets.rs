use fanova_shapley::datasets::{
    average_rank, generate_synthetic, read_csv, synthetic_target, write_csv, SyntheticSpec,
};
use proptest::prelude::*;

#[test]
fn csv_round_trip() {
    let data = generate_synthetic(&SyntheticSpec::new(3, 50, 6, 1).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&data, &path).unwrap();
    let (back, report) = read_csv(&path, Some("y")).unwrap();
    assert_eq!(report.imputed_cells + report.dropped_missing_target, 0);
    assert_eq!(back.feature_names(), data.feature_names());
    for (a, b) in back.rows().iter().flatten().zip(data.rows().iter().flatten()) {
        assert!((a - b).abs() <= 1e-12);
    }
    for (a, b) in back.targets().iter().zip(data.targets()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn imputation_and_dropping_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "a,b,target\n1.5,,3\n2.5,1e1,\n3.5,20,4\n,30,5\n").unwrap();
    let (data, report) = read_csv(&path, Some("target")).unwrap();
    assert_eq!(report.dropped_missing_target, 1);
    assert_eq!(report.imputed_cells, 2);
    assert_eq!(data.rows(), [vec![1.5, 25.0], vec![3.5, 20.0], vec![2.5, 30.0]]);
}

#[test]
fn every_generator_matches_its_formula() {
    for id in 1..=4u8 {
        let data = generate_synthetic(&SyntheticSpec::new(id, 20, 8, id as u64).unwrap()).unwrap();
        assert_eq!(data.d(), 8);
        for (row, y) in data.rows().iter().zip(data.targets()) {
            assert_eq!(*y, synthetic_target(id, row));
        }
    }
    let s = SyntheticSpec::new(4, 10, 5, 0).unwrap();
    assert_eq!(s.ideal_rank(), 2.0);
    assert_eq!(SyntheticSpec::new(2, 10, 5, 0).unwrap().ideal_rank(), 2.5);
}

proptest! {
    #[test]
    fn rank_is_scale_invariant(
        attr in prop::collection::vec(-10.0f64..10.0, 3..20),
        c in 0.01f64..100.0,
        pick in 1usize..3,
    ) {
        let truth: Vec<usize> = (0..pick).collect();
        let scaled: Vec<f64> = attr.iter().map(|v| v * c).collect();
        let a = average_rank(&attr, &truth).unwrap();
        prop_assert_eq!(a, average_rank(&scaled, &truth).unwrap());
        let g = truth.len() as f64;
        prop_assert!(a >= (g + 1.0) / 2.0 && a <= attr.len() as f64 - (g - 1.0) / 2.0);
    }
}
