use proptest::prelude::*;

use ugibbs::experiment::ExperimentConfig;
use ugibbs::factor::Factor;
use ugibbs::measures::{dirac, periodic_measure, weak_distance, ParticleMeasure, Provenance};
use ugibbs::systems::{make_modified_solenoid, make_solenoid, ModifiedParams, TrigPoly2, CONJ_DEPTH};

fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conjugacy_round_trip(t in 0.0f64..1.0) {
        let (m, _) = make_modified_solenoid(&ModifiedParams::default()).unwrap();
        let base = &m.skew().unwrap().base;
        let u = base.conjugacy(t, CONJ_DEPTH);
        prop_assert!(circle_dist(base.conjugacy_inverse(u, CONJ_DEPTH), t) < 1e-9);
    }

    #[test]
    fn conjugacy_intertwines(t in 0.0f64..1.0) {
        let (m, _) = make_modified_solenoid(&ModifiedParams::default()).unwrap();
        let base = &m.skew().unwrap().base;
        let lhs = base.conjugacy(base.apply(t), CONJ_DEPTH);
        let rhs = (3.0 * base.conjugacy(t, CONJ_DEPTH)).rem_euclid(1.0);
        prop_assert!(circle_dist(lhs, rhs) < 1e-9);
    }

    #[test]
    fn step_agrees_with_map(t in 0.0f64..1.0, r in 0.0f64..0.9, phi in 0.0f64..std::f64::consts::TAU) {
        let (m, _) = make_modified_solenoid(&ModifiedParams::default()).unwrap();
        let x = [t, r * phi.cos(), r * phi.sin()];
        let a = m.map(&x);
        let b = m.step(&x);
        prop_assert!(circle_dist(a[0], b[0]) < 1e-9);
        prop_assert!((a[1] - b[1]).abs() < 1e-12 && (a[2] - b[2]).abs() < 1e-12);
    }

    #[test]
    fn mixtures_are_probability_measures(w1 in 0.01f64..5.0, w2 in 0.01f64..5.0, t in 0.0f64..1.0) {
        let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
        let f = Factor::new(&m, 1e-8).unwrap();
        let a = dirac(&f, &m.iterate(&[t, 0.0, 0.0], 40), 50);
        let b = dirac(&f, &m.iterate(&[0.0, 0.6, 0.0], 1), 30);
        let mix = ParticleMeasure::mixture(&[(&a, w1), (&b, w2)], Provenance::Custom("mix".into()));
        prop_assert_eq!(mix.len(), 80);
        prop_assert!((mix.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seed_survives_config_round_trip(seed in 0u64..(i64::MAX as u64)) {
        let text = format!("tasks = [\"verify\"]\n[system]\nkind = \"solenoid\"\n[run]\nseed = {seed}\n");
        let c = ExperimentConfig::parse(&text).unwrap();
        let back = ExperimentConfig::parse(&toml::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back.run.seed, seed);
        prop_assert_eq!(back.run.iterations, c.run.iterations);
    }
}

#[test]
fn weak_distance_is_a_semimetric() {
    let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
    let f = Factor::new(&m, 1e-8).unwrap();
    let fixed = dirac(&f, &[0.0, 0.6, 0.0], 400);
    let p2: Vec<Vec<f64>> = {
        let s = ugibbs::skeleton::find_periodic(&m, 2).unwrap();
        s.points.iter().find(|p| p.period == 2).unwrap().orbit.clone()
    };
    let two = periodic_measure(&f, &p2, 200);
    assert_eq!(weak_distance(&fixed, &fixed, 4).unwrap(), 0.0);
    let d = weak_distance(&fixed, &two, 4).unwrap();
    assert_eq!(d, weak_distance(&two, &fixed, 4).unwrap());
    assert!((d - 2.0).abs() < 1e-12, "disjoint cylinders: {d}");
}
