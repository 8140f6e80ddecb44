use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use ris_imaging::config::{ScenarioConfig, TargetConfig};
use ris_imaging::forward::*;
use ris_imaging::risconfig::{draw_schedule, RisMode};
use ris_imaging::Error;

fn small() -> (ris_imaging::Scene, ris_imaging::PhaseSchedule) {
    let cfg = ScenarioConfig::reduced(3, [4, 3, 1], 5);
    let scene = cfg.build_scene().unwrap();
    let schedule = cfg.draw_schedule(&scene).unwrap();
    (scene, schedule)
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn factored_matches_row_formula_and_triple_product() {
    let (scene, schedule) = small();
    let a = build_sensing_matrix(&scene, &schedule).unwrap();
    assert_eq!(a.rows(), 4 * 5 * 4 * 4);
    assert_eq!(a.cols(), 12);
    for idx in a.layout().iter().step_by(7) {
        let direct = row_vector(&scene, &schedule, idx).unwrap();
        let row = a.row(idx).unwrap();
        for n in 0..a.cols() {
            assert!(rel(row[n], direct[n]) < 1e-10);
            let e = SparseImage::new(a.cols(), vec![n], vec![1.0]).unwrap();
            let naive = naive_path_gain(&scene, &schedule, &e, idx).unwrap();
            assert!(rel(row[n], naive) < 1e-10, "{idx:?} n={n}");
        }
    }
}

#[test]
fn apply_is_linear_combination_of_columns() {
    let (scene, schedule) = small();
    let a = build_sensing_matrix(&scene, &schedule).unwrap();
    let x = SparseImage::new(12, vec![3, 7], vec![0.2, -0.05]).unwrap();
    let y = a.apply(&x).unwrap();
    for idx in [RowIndex { i: 1, k: 2, t: 3, j: 0 }, RowIndex { i: 3, k: 4, t: 0, j: 2 }] {
        let r = a.layout().row(idx).unwrap();
        let naive = naive_path_gain(&scene, &schedule, &x, idx).unwrap();
        assert!(rel(y[r], naive) < 1e-10);
    }
}

#[test]
fn aris_matrix_scales_by_root_gain() {
    let (scene, schedule) = small();
    let pris = schedule.with_amplification(RisMode::Pris, 1.0).unwrap();
    let aris = schedule.with_amplification(RisMode::Aris, 1e4).unwrap();
    let ap = build_sensing_matrix(&scene, &pris).unwrap();
    let aa = build_sensing_matrix(&scene, &aris).unwrap();
    for (p, q) in ap.entries().iter().zip(aa.entries()) {
        assert!(rel(*q, *p * 100.0) < 1e-12);
    }
}

#[test]
fn budget_and_index_errors() {
    let (scene, schedule) = small();
    match build_sensing_matrix_with_budget(&scene, &schedule, 100) {
        Err(Error::MemoryBudget { rows: 320, cols: 12, .. }) => {}
        other => panic!("{other:?}"),
    }
    let a = build_sensing_matrix(&scene, &schedule).unwrap();
    assert!(matches!(
        a.row(RowIndex { i: 4, k: 0, t: 0, j: 0 }),
        Err(Error::IndexOutOfRange { .. })
    ));
    let bad = SparseImage::zeros(11);
    assert!(matches!(a.apply(&bad), Err(Error::Dimension(_))));
}

#[test]
fn gram_and_adjoint_agree_with_definition() {
    let (scene, schedule) = small();
    let a = build_sensing_matrix(&scene, &schedule).unwrap();
    let g = a.gram();
    let col3 = a.column(3);
    let v = a.adjoint_apply(col3);
    for n in 0..a.cols() {
        assert!(rel(v[n], g[[n, 3]]) < 1e-12);
        assert!(rel(g[[3, n]], g[[n, 3]].conj()) < 1e-12);
    }
}

#[test]
fn export_round_trips() {
    let (scene, schedule) = small();
    let a = build_sensing_matrix(&scene, &schedule).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (bin, side) = a.export(&dir.path().join("a.bin")).unwrap();
    assert!(side.to_string_lossy().ends_with("a.bin.json"));
    let (meta, m) = import_matrix(&bin).unwrap();
    assert_eq!(meta.rows, a.rows());
    assert_eq!(meta.schedule_seed, schedule.seed);
    assert_eq!(meta.schedule_fingerprint, schedule.fingerprint());
    assert_eq!(&m, a.entries());
}

#[test]
fn default_noise_levels() {
    let cfg = ScenarioConfig::default();
    let noise = cfg.noise_model().unwrap();
    assert_relative_eq!(noise.sigma2_rx, 1e-14, max_relative = 1e-12);
    assert_relative_eq!(noise.effective_variance(), 4e-14, max_relative = 1e-12);
    assert_relative_eq!(noise.gamma(), 2.5e13, max_relative = 1e-12);
    assert_relative_eq!(noise.csi_scale(), 2.0, max_relative = 1e-12);
    let amp = noise.with_amplifier_power(1e-14);
    assert_relative_eq!(amp.effective_variance(), 8e-14, max_relative = 1e-12);
}

#[test]
fn ground_truth_draws() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let targets = TargetConfig::default();
    let x = draw_ground_truth(1600, &targets, &mut rng).unwrap();
    assert_eq!(x.sparsity(), 10);
    assert!(x.support().windows(2).all(|w| w[0] < w[1]));
    let mut rng2 = ChaCha20Rng::seed_from_u64(3);
    assert_eq!(x, draw_ground_truth(1600, &targets, &mut rng2).unwrap());
    let too_many = TargetConfig { sparsity: 20, ..targets };
    assert!(matches!(draw_ground_truth(10, &too_many, &mut rng), Err(Error::Sparsity { .. })));

    let mut sum = 0.0;
    let mut sq = 0.0;
    let n = 20000;
    for _ in 0..n / 10 {
        for &v in draw_ground_truth(50, &targets, &mut rng).unwrap().values() {
            sum += v;
            sq += v * v;
        }
    }
    let mean = sum / n as f64;
    let var = sq / n as f64 - mean * mean;
    assert!((mean - 0.1).abs() < 4.0 * (0.01f64 / n as f64).sqrt());
    assert!((var - 0.01).abs() < 0.001);
}

#[test]
fn measurements_noiseless_and_deterministic() {
    let (scene, schedule) = small();
    let a = build_sensing_matrix(&scene, &schedule).unwrap();
    let x = SparseImage::new(12, vec![0, 5], vec![0.1, 0.12]).unwrap();
    let silent = NoiseModel::new(0.0, 0.0, 1.0, 4).unwrap();
    let m = synthesize_measurements(&a, &x, &silent, None, 9).unwrap();
    assert_eq!(m.y, a.apply(&x).unwrap());

    let noise = NoiseModel::new(1e-14, 1e-14, 1.0, 4).unwrap();
    let m1 = synthesize_measurements(&a, &x, &noise, None, 9).unwrap();
    let m2 = synthesize_measurements(&a, &x, &noise, None, 9).unwrap();
    assert_eq!(m1.y, m2.y);
    let m3 = synthesize_measurements(&a, &x, &noise, None, 10).unwrap();
    assert_ne!(m1.y, m3.y);
}

#[test]
fn receiver_noise_has_csi_variance() {
    let (scene, schedule) = small();
    let a = build_sensing_matrix(&scene, &schedule).unwrap();
    let x = SparseImage::zeros(12);
    let noise = NoiseModel::new(1e-14, 0.0, 0.25, 4).unwrap();
    let mut total = 0.0;
    let trials = 50;
    for s in 0..trials {
        let m = synthesize_measurements(&a, &x, &noise, None, s).unwrap();
        total += m.y.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    let var = total / (trials as f64 * a.rows() as f64);
    assert_relative_eq!(var, noise.receiver_variance(), max_relative = 0.03);
    assert_relative_eq!(noise.receiver_variance(), 1.6e-13, max_relative = 1e-12);
}

#[test]
fn amplifier_noise_matches_closed_form_and_is_shared_across_tx() {
    let cfg = ScenarioConfig::reduced(3, [4, 3, 1], 40);
    let scene = cfg.build_scene().unwrap();
    let schedule = cfg.draw_schedule(&scene).unwrap();
    let x = SparseImage::new(12, vec![1, 10], vec![0.1, 0.08]).unwrap();
    let path = AmplifierPath::new(&scene, &schedule, &x, 1e-14).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut acc = 0.0;
    let mut count = 0;
    for _ in 0..40 {
        for k in 0..40 {
            for t in 0..4 {
                for z in path.sample(k, t, &mut rng) {
                    acc += z.norm_sqr();
                    count += 1;
                }
            }
        }
    }
    assert_relative_eq!(acc / count as f64, path.expected_power(), max_relative = 0.05);

    let a = build_sensing_matrix(&scene, &schedule).unwrap();
    let only_amp = NoiseModel::new(0.0, 1e-14, 1.0, 4).unwrap();
    let m = synthesize_measurements(&a, &x, &only_amp, Some(&path), 2).unwrap();
    let clean = a.apply(&x).unwrap();
    let lay = a.layout();
    let d = |i| {
        let r = lay.row(RowIndex { i, k: 3, t: 2, j: 1 }).unwrap();
        m.y[r] - clean[r]
    };
    assert!(d(0).norm() > 0.0);
    assert!((d(0) - d(3)).norm() <= 1e-12 * d(0).norm());

    let pris = schedule.with_amplification(RisMode::Pris, 1.0).unwrap();
    assert!(matches!(AmplifierPath::new(&scene, &pris, &x, 1e-14), Err(Error::Mode { .. })));
}

#[test]
fn single_amplifier_sample_is_reproducible() {
    let (scene, _) = small();
    let schedule = draw_schedule(5, &scene, RisMode::Aris, 1e4, 1).unwrap();
    let x = SparseImage::new(12, vec![2], vec![0.1]).unwrap();
    let a = aris_noise_sample(&scene, &schedule, &x, 1e-14, 1, 2, 3, 77).unwrap();
    let b = aris_noise_sample(&scene, &schedule, &x, 1e-14, 1, 2, 3, 77).unwrap();
    assert_eq!(a, b);
    assert!(aris_noise_sample(&scene, &schedule, &x, 1e-14, 5, 0, 0, 1).is_err());
}

#[test]
fn measurement_csv_columns() {
    let (scene, schedule) = small();
    let a = build_sensing_matrix(&scene, &schedule).unwrap();
    let x = SparseImage::new(12, vec![2], vec![0.1]).unwrap();
    let noise = NoiseModel::new(1e-14, 0.0, 1.0, 4).unwrap();
    let m = synthesize_measurements(&a, &x, &noise, None, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = m
        .export_csv(&dir.path().join("y.csv"), &ris_imaging::io::Provenance::new().with("seed", 1))
        .unwrap();
    let (head, rows) = ris_imaging::io::read_csv(&p).unwrap();
    assert_eq!(head, ["row_index", "i", "k", "t", "j", "re", "im"]);
    assert_eq!(rows.len(), a.rows());
    let r: usize = rows[37][0].parse().unwrap();
    let re: f64 = rows[37][5].parse().unwrap();
    assert_eq!(re, m.y[r].re);
}

proptest! {
    #[test]
    fn row_layout_is_bijective(tx in 1usize..5, k in 1usize..7, t in 1usize..5, rx in 1usize..5, seed in any::<u64>()) {
        let lay = RowLayout { tx, symbols: k, panels: t, rx };
        let r = (seed as usize) % lay.len();
        let idx = lay.index(r).unwrap();
        prop_assert_eq!(lay.row(idx).unwrap(), r);
        prop_assert_eq!(r, ((idx.i * k + idx.k) * t + idx.t) * rx + idx.j);
    }
}
