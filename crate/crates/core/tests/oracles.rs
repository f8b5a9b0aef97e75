//! Values computed by the library, checked against closed forms or
//! independent brute-force computations.

use ugibbs::factor::Factor;
use ugibbs::lyapunov::lyapunov_spectrum;
use ugibbs::skeleton::find_periodic;
use ugibbs::systems::{make_linear_torus, make_modified_solenoid, make_solenoid, ModifiedParams, TrigPoly2, CONJ_DEPTH};

#[test]
fn solenoid_fixed_points_solve_the_fiber_equation() {
    // x* = b(θ*) / (1 − a) at the fixed angles 0 and 1/2 of ×3.
    let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
    let s = find_periodic(&m, 1).unwrap();
    assert_eq!(s.points.len(), 2);
    for (p, theta) in s.points.iter().zip([0.0f64, 0.5]) {
        let b = [0.3 * (2.0 * std::f64::consts::PI * theta).cos(), 0.3 * (2.0 * std::f64::consts::PI * theta).sin()];
        assert!((p.point[0] - theta).abs() < 1e-12);
        assert!((p.point[1] - b[0] / 0.5).abs() < 1e-9 && (p.point[2] - b[1] / 0.5).abs() < 1e-9);
    }
}

#[test]
fn solenoid_periodic_points_count_like_times_three() {
    // Points of period dividing p: 3^p − 1 (one fiber point per base point).
    let m = make_solenoid(3, 0.5, TrigPoly2::circle(0.3)).unwrap();
    let s = find_periodic(&m, 3).unwrap();
    for p in 1..=3usize {
        let n: usize = s.points.iter().filter(|q| p % q.period == 0).map(|q| q.period).sum();
        assert_eq!(n, 3usize.pow(p as u32) - 1, "period {p}");
    }
}

#[test]
fn cat_exponents_and_entropy_are_log_of_the_golden_square() {
    let lam = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    let m = make_linear_torus(&[vec![2, 1], vec![1, 1]]).unwrap();
    let f = Factor::new(&m, 1e-8).unwrap();
    assert!((f.base_entropy - lam).abs() < 1e-12);
    let r = lyapunov_spectrum(&m, &[0.123, 0.377], 20_000, 100).unwrap();
    assert!((r.spectrum[0].value - lam).abs() < 1e-6);
    assert!((r.spectrum[1].value + lam).abs() < 1e-6);
}

#[test]
fn cat_fixed_and_period_two_counts_match_determinants() {
    // #Fix(A^p) = |det(A^p − I)|: 1 and 5.
    let m = make_linear_torus(&[vec![2, 1], vec![1, 1]]).unwrap();
    let s = find_periodic(&m, 2).unwrap();
    let fix = s.points.iter().filter(|q| q.period == 1).count();
    let per2: usize = s.points.iter().map(|q| q.period).sum();
    assert_eq!(fix, 1);
    assert_eq!(per2, 5);
}

#[test]
fn window_mass_matches_sampled_conjugacy() {
    // ν_β([−ε, ε]) by pulling back a uniform grid of conjugated angles.
    let (m, fam) = make_modified_solenoid(&ModifiedParams::default()).unwrap();
    let base = &m.skew().unwrap().base;
    let n = 200_000;
    let inside = (0..n)
        .filter(|i| {
            let t = base.conjugacy_inverse((*i as f64 + 0.5) / n as f64, CONJ_DEPTH);
            t <= fam.eps || t >= 1.0 - fam.eps
        })
        .count();
    let nu = inside as f64 / n as f64;
    assert!((nu - fam.nu_window).abs() < 1e-4, "{nu} vs {}", fam.nu_window);
    let bound = nu * fam.big_k.ln() + (1.0 - nu) * fam.a.ln();
    assert!((bound - fam.integral_bound).abs() < 1e-3);
}
