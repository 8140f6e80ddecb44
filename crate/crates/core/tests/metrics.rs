use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use ris_imaging::config::TargetConfig;
use ris_imaging::forward::{draw_ground_truth, SparseImage};
use ris_imaging::metrics::*;
use ris_imaging::recovery::ComplexEstimate;
use ris_imaging::risconfig::RisMode;
use ris_imaging::Error;

#[test]
fn mse_values() {
    let x = vec![0.0, 0.1, 0.0, 0.2];
    assert_eq!(mse(&x, &x).unwrap(), 0.0);
    let mut truth = vec![0.0; 1600];
    truth[7] = 0.1;
    let m = mse(&truth, &vec![0.0; 1600]).unwrap();
    assert_relative_eq!(m, 6.25e-6, max_relative = 1e-12);
    assert_relative_eq!(to_db(m), -52.0412, max_relative = 1e-5);
    assert!(matches!(mse(&x, &x[..3]), Err(Error::Dimension(_))));
    let c: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.1)).collect();
    assert_relative_eq!(mse_complex(&x, &c).unwrap(), 0.01, max_relative = 1e-12);
}

#[test]
fn zero_estimate_of_default_truth() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let x = draw_ground_truth(1600, &TargetConfig::default(), &mut rng).unwrap();
    let direct: f64 = x.values().iter().map(|v| v * v).sum::<f64>() / 1600.0;
    assert_relative_eq!(mse(&x.dense(), &vec![0.0; 1600]).unwrap(), direct, max_relative = 1e-14);
}

#[test]
fn detection_rates() {
    let u: Vec<usize> = (0..10).collect();
    assert_eq!(detection_rate(&u, &u).unwrap(), 1.0);
    let eight: Vec<usize> = (0..8).chain([40, 41]).collect();
    assert_eq!(detection_rate(&u, &eight).unwrap(), 0.8);
    assert_eq!(detection_rate(&u, &[20, 21]).unwrap(), 0.0);
    assert!(matches!(detection_rate(&[], &u), Err(Error::Empty(_))));
}

#[test]
fn psnr_values() {
    assert_relative_eq!(psnr_per_watt(1e-6, 0.1, 5.0).unwrap(), 8.0, max_relative = 1e-12);
    assert_relative_eq!(psnr_per_watt(1e-6, 0.1, 10.0).unwrap(), 4.0, max_relative = 1e-12);
    assert_eq!(psnr(0.0, 0.1).unwrap(), f64::INFINITY);
    assert!(psnr_per_watt(1e-6, 0.1, 0.0).is_err());
    assert!(psnr(1e-6, 0.0).is_err());
}

#[test]
fn metric_set_and_csv() {
    let truth = SparseImage::new(6, vec![1, 4], vec![0.1, -0.2]).unwrap();
    let est = ComplexEstimate {
        len: 6,
        support: vec![1, 3],
        values: vec![Complex64::new(0.1, 0.5), Complex64::new(0.05, 0.0)],
    };
    let m = MetricSet::evaluate(&truth, &est, 2.0).unwrap();
    assert_eq!(m.dr, 0.5);
    assert_relative_eq!(m.mse, (0.05f64.powi(2) + 0.04) / 6.0, max_relative = 1e-12);
    assert_eq!(m.max, 0.2);
    assert_relative_eq!(m.psnr_per_w, m.psnr_db / 2.0, max_relative = 1e-15);
    let rows = vec![MetricRow {
        trial: 0,
        height_m: 100.0,
        mode: RisMode::Aris,
        metrics: m,
    }];
    let dir = tempfile::tempdir().unwrap();
    let p = write_metrics_csv(&rows, &dir.path().join("m.csv"), &Default::default()).unwrap();
    let (head, body) = ris_imaging::io::read_csv(&p).unwrap();
    assert_eq!(head, METRIC_COLUMNS);
    assert_eq!(body[0][2], "aris");
    assert_eq!(body[0][4].parse::<f64>().unwrap(), m.mse);
}

proptest! {
    #[test]
    fn detection_rate_is_permutation_invariant(mut a in proptest::collection::vec(0usize..50, 1..10), mut b in proptest::collection::vec(0usize..50, 0..10), seed in any::<u64>()) {
        a.sort_unstable();
        a.dedup();
        let d = detection_rate(&a, &b).unwrap();
        let k = (seed as usize % b.len().max(1)).min(b.len());
        b.rotate_left(k);
        let mut ar = a.clone();
        ar.reverse();
        prop_assert_eq!(d, detection_rate(&ar, &b).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn psnr_strictly_decreasing(m1 in 1e-9f64..1.0, f in 1.0001f64..100.0) {
        prop_assert!(psnr(m1 * f, 0.2).unwrap() < psnr(m1, 0.2).unwrap());
    }

    #[test]
    fn mse_of_zero_is_energy(v in proptest::collection::vec(-1.0f64..1.0, 1..40)) {
        let e: f64 = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        prop_assert!((mse(&v, &vec![0.0; v.len()]).unwrap() - e).abs() <= 1e-15 * e.max(1e-300));
    }
}
