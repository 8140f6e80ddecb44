use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use ris_imaging::config::ScenarioConfig;
use ris_imaging::power::*;
use ris_imaging::risconfig::{draw_schedule, RisMode};
use ris_imaging::Error;

#[test]
fn unit_conversions() {
    assert_relative_eq!(dbm_to_watts(30.0), 1.0, max_relative = 1e-15);
    assert_relative_eq!(dbm_to_watts(-10.0), 1e-4, max_relative = 1e-15);
    assert_relative_eq!(dbm_to_watts(-5.0), 3.1622776601683794e-4, max_relative = 1e-14);
    assert_relative_eq!(dbm_to_watts(-110.0), 1e-14, max_relative = 1e-14);
    assert_relative_eq!(db_to_linear(40.0), 1e4, max_relative = 1e-15);
}

#[test]
fn transmit_vector_norm() {
    let s = TransmitVector::equal(4).unwrap();
    assert!(s.entries().iter().all(|z| (z.re - 0.5).abs() < 1e-15));
    assert!(matches!(
        TransmitVector::new(vec![Complex64::new(1.0, 0.0); 2]),
        Err(Error::TransmitNorm(_))
    ));
}

#[test]
fn amplified_noise_floor() {
    // 50x50 panels: noise term alone is M * a * sigma2 = 2500 * 1e4 * 1e-14.
    let cfg = ScenarioConfig::reduced(50, [2, 2, 1], 3);
    let scene = cfg.build_scene().unwrap();
    let s = TransmitVector::equal(4).unwrap();
    let aris = draw_schedule(3, &scene, RisMode::Aris, 1e4, 1).unwrap();
    for p in aris_active_power(&scene, &aris, &s, 0.0, 1e-14).unwrap() {
        assert_relative_eq!(p, 2.5e-7, max_relative = 1e-12);
    }
    let pris = aris.with_amplification(RisMode::Pris, 1.0).unwrap();
    for p in aris_active_power(&scene, &pris, &s, 0.0, 1e-14).unwrap() {
        assert_relative_eq!(p, 2.5e-11, max_relative = 1e-12);
    }
    let one = aris_active_power(&scene, &aris, &s, 1.0, 1e-14).unwrap();
    let two = aris_active_power(&scene, &aris, &s, 2.0, 1e-14).unwrap();
    for (a, b) in one.iter().zip(&two) {
        assert_relative_eq!(b - 2.5e-7, 2.0 * (a - 2.5e-7), max_relative = 1e-9);
        assert!(*a >= 2.5e-7);
    }
}

#[test]
fn active_power_signal_term_oracle() {
    // One TX element, one RIS element: |g fs(d)|^2 a P = g^2 a P / (4 pi d^2).
    let mut cfg = ScenarioConfig::reduced(1, [1, 1, 1], 2);
    cfg.tx.elements = 1;
    cfg.ris.panels.truncate(1);
    let scene = cfg.build_scene().unwrap();
    let sched = draw_schedule(2, &scene, RisMode::Aris, 100.0, 4).unwrap();
    let s = TransmitVector::equal(1).unwrap();
    let p = aris_active_power(&scene, &sched, &s, 1.0, 0.0).unwrap()[0];
    let d2 = scene.tx.element(0).distance_sq(scene.ris_elements(0)[0]);
    let g = scene.g();
    assert_relative_eq!(p, g * g * 100.0 / (4.0 * std::f64::consts::PI * d2), max_relative = 1e-12);
}

#[test]
fn default_totals() {
    let cfg = ScenarioConfig::reduced(50, [2, 2, 1], 4);
    let scene = cfg.build_scene().unwrap();
    let k = cfg.power_constants();
    let aris = cfg.draw_schedule(&scene).unwrap();
    let pris = aris.with_amplification(RisMode::Pris, 1.0).unwrap();
    let rp = total_power(&scene, &pris, 1.0, &k).unwrap();
    assert_relative_eq!(rp.total, 2.0, max_relative = 1e-12);
    assert!(rp.panel_active.is_empty());
    let ra = total_power(&scene, &aris, 1.0, &k).unwrap();
    assert_relative_eq!(ra.circuit_total(), 4.16227766016838, max_relative = 1e-12);
    assert_relative_eq!(
        ra.total,
        ra.tx_power + ra.active_total() + ra.circuit_pc + ra.circuit_pdc,
        max_relative = 1e-15
    );
    let m = match_pris_tx_power(&scene, &aris, 1.0, &k).unwrap();
    let matched = total_power(&scene, &pris, m, &k).unwrap();
    assert!((matched.total - ra.total).abs() <= 1e-9);
    // the fixed part of the gap is sum M_t * P_DC
    assert!(m - 1.0 >= 3.16227766016838 - 1e-9);
    assert!(matches!(match_pris_tx_power(&scene, &pris, 1.0, &k), Err(Error::Mode { .. })));
}

#[test]
fn empty_ris_total_is_tx_power() {
    let mut cfg = ScenarioConfig::reduced(2, [2, 2, 1], 2);
    cfg.ris.panels.clear();
    let scene = cfg.build_scene().unwrap();
    let sched = cfg.draw_schedule(&scene).unwrap();
    let r = total_power(&scene, &sched, 0.7, &cfg.power_constants()).unwrap();
    assert_eq!(r.total, 0.7);
}

#[test]
fn report_csv() {
    let cfg = ScenarioConfig::reduced(4, [2, 2, 1], 2);
    let scene = cfg.build_scene().unwrap();
    let sched = cfg.draw_schedule(&scene).unwrap();
    let r = total_power(&scene, &sched, 1.0, &cfg.power_constants()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = PowerReport::write_csv(&[r.clone()], &dir.path().join("p.csv"), &Default::default()).unwrap();
    let (head, rows) = ris_imaging::io::read_csv(&p).unwrap();
    assert_eq!(head, PowerReport::CSV_COLUMNS);
    assert_eq!(rows[0][0], "aris");
    assert_eq!(rows[0][4].parse::<f64>().unwrap(), r.total);
}

proptest! {
    #[test]
    fn dbm_round_trip(dbm in -150.0f64..60.0) {
        let back = watts_to_dbm(dbm_to_watts(dbm));
        prop_assert!((back - dbm).abs() <= 1e-12 * dbm.abs().max(1.0));
    }

    #[test]
    fn aris_total_affine_slope_at_least_one(p1 in 0.0f64..5.0, dp in 0.01f64..5.0) {
        let cfg = ScenarioConfig::reduced(3, [2, 2, 1], 2);
        let scene = cfg.build_scene().unwrap();
        let sched = cfg.draw_schedule(&scene).unwrap();
        let k = cfg.power_constants();
        let a = total_power(&scene, &sched, p1, &k).unwrap().total;
        let b = total_power(&scene, &sched, p1 + dp, &k).unwrap().total;
        let c = total_power(&scene, &sched, p1 + 2.0 * dp, &k).unwrap().total;
        prop_assert!(b - a >= dp);
        prop_assert!(((c - b) - (b - a)).abs() <= 1e-9 * c);
    }
}
