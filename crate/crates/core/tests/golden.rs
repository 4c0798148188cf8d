//! Frozen reference values from independent computations: a separate
//! double-precision prototype of the tangency system, the convex-minorant
//! oracle, and finite differences of `G`.

use fuel_boundary::boundary::{self, ExtentOptions};
use fuel_boundary::{derive_constants, Model, ModelParams};

const F0: f64 = 2.375100220297941;
const LAMBDA_STAR: f64 = 0.48904167641086815;
const LAMBDA_DAGGER: f64 = 0.6344492934602316;
const B0: f64 = -9.659356928337958;
const C0: f64 = 0.191122179;

/// `(c, F, G)` from the prototype.
const TABLE: [(f64, f64, f64); 4] = [
    (1e-4, 0.4999987178, 0.5001012824),
    (0.02, 0.4997373140, 0.5202685996),
    (0.05, 0.4993258481, 0.5506989970),
    (0.1, 0.4986262105, 0.6013918428),
];

fn model() -> Model {
    Model::new(ModelParams::new(1.0, 1.0, 0.9).unwrap()).unwrap()
}

#[test]
fn constants_match_frozen_values() {
    let d = derive_constants(&ModelParams::new(1.0, 1.0, 0.9).unwrap()).unwrap();
    assert!((d.f0.unwrap() - F0).abs() < 1e-12);
    assert!((d.lambda_star - LAMBDA_STAR).abs() < 1e-12);
    assert!((d.lambda_dagger - LAMBDA_DAGGER).abs() < 1e-10);
    assert!((d.b0.unwrap() - B0).abs() < 1e-9);
}

#[test]
fn boundaries_match_prototype() {
    let m = model();
    for (c, f, g) in TABLE {
        let bp = boundary::solve_boundary(&m, c).unwrap();
        assert!((bp.f - f).abs() < 1e-9, "F({c}) = {}", bp.f);
        assert!((bp.g - g).abs() < 1e-9, "G({c}) = {}", bp.g);
    }
}

#[test]
fn g_prime_matches_finite_differences() {
    let m = model();
    let h = 1e-6;
    for c in [0.01, 0.05, 0.1, 0.15, 0.18] {
        let bp = boundary::solve_boundary(&m, c).unwrap();
        let up = boundary::solve_boundary(&m, c + h).unwrap().g;
        let down = boundary::solve_boundary(&m, c - h).unwrap().g;
        let fd = (up - down) / (2.0 * h);
        assert!(
            (fd - bp.g_prime).abs() < 1e-4,
            "c = {c}: {fd} vs {}",
            bp.g_prime
        );
    }
}

#[test]
fn c0_matches_finite_difference_crossing() {
    let m = model();
    let h = 1e-6;
    let fd = |c: f64| {
        let up = boundary::solve_boundary(&m, c + h).unwrap().g;
        let down = boundary::solve_boundary(&m, c - h).unwrap().g;
        (up - down) / (2.0 * h) - 1.0
    };
    let (mut lo, mut hi) = (0.15, 0.25);
    assert!(fd(lo) > 0.0);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        let ok = boundary::solve_boundary(&m, mid + h).is_ok() && fd(mid) > 0.0;
        if ok {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c0 = boundary::find_c0(&m, &ExtentOptions::default())
        .unwrap()
        .value;
    assert!((c0 - lo).abs() < 1e-6, "{c0} vs {lo}");
    assert!((c0 - C0).abs() < 1e-8, "{c0}");
}
