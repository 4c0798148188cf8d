//! End-to-end acceptance run. Prints one pass/fail line per criterion and
//! fails if any criterion fails.

use std::time::{Duration, Instant};

use fuel_boundary::boundary::{self, BoundaryPoint, ExtentOptions};
use fuel_boundary::oracle;
use fuel_boundary::sim::{simulate_policy, SimConfig};
use fuel_boundary::value;
use fuel_boundary::verify::{self, diagonal_derivative};
use fuel_boundary::{derive_constants, Error, Model, ModelParams, Regime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn model() -> Model {
    Model::new(ModelParams::new(1.0, 1.0, 0.9).unwrap()).unwrap()
}

fn geometric_c(m: &Model) -> Vec<f64> {
    verify::default_c_list(m).unwrap()
}

fn solve_all(m: &Model, cs: &[f64]) -> Vec<BoundaryPoint> {
    cs.iter()
        .map(|&c| boundary::solve_boundary(m, c).unwrap())
        .collect()
}

fn constants() -> Outcome {
    let m = model();
    let d = m.constants();
    let rho = m.rho(m.f0()).abs();
    let closed = 1.0 / (1.0 + 1.0 / (0.25 + 1.0 / 2f64.sqrt()));
    let l_star = (d.lambda_star - closed).abs();
    let l = d.lambda_dagger;
    let dagger = (fuel_boundary::model::no_fuel_boundary(1.0, 1.0, l) - 1.0 / (2.0 * l)).abs();
    outcome(
        rho < 1e-10 && l_star < 1e-12 && dagger < 1e-10,
        format!("|rho(f0)|={rho:.1e} |lambda*-closed|={l_star:.1e} |f0(ld)-1/(2ld)|={dagger:.1e}"),
    )
}

fn smooth_fit() -> Outcome {
    let m = model();
    let mut worst: f64 = 0.0;
    for bp in solve_all(&m, &geometric_c(&m)) {
        for (dv, ddv) in value::smooth_fit_mismatch(&m, &bp) {
            worst = worst.max(dv.abs()).max(ddv.abs());
        }
    }
    outcome(worst < 1e-9, format!("worst mismatch {worst:.2e}"))
}

fn minorant_match() -> Outcome {
    let m = model();
    let mut worst: f64 = 0.0;
    for c in [0.005, 0.02, 0.05, 0.1] {
        let bp = boundary::solve_boundary(&m, c).unwrap();
        let r = oracle::minorant_oracle(&m, c, 1_000_000, m.spend_switch(c) + 1.0).unwrap();
        let right = r.right_index.expect("right contact block");
        worst = worst
            .max((r.x_grid[r.left_index] - bp.f).abs() / r.step)
            .max((r.x_grid[right] - bp.g).abs() / r.step);
    }
    outcome(
        worst <= 2.0,
        format!("worst contact offset {worst:.3} grid steps"),
    )
}

fn psor_match() -> Outcome {
    let m = model();
    let mut lines = Vec::new();
    let mut ok = true;
    for c in [0.02, 0.05, 0.1, 0.15] {
        let bp = boundary::solve_boundary(&m, c).unwrap();
        let study = verify::psor_convergence(&m, &bp, 16, 3).unwrap();
        ok &= study.ratios.iter().all(|r| (3.0..=5.0).contains(r));
        ok &= study.nodes.iter().all(|&n| n <= 40_001);
        let (off_f, off_g) = verify::psor_active_set_offsets(&m, &bp, 40_001).unwrap();
        ok &= off_f.abs() <= 2.0 && off_g.abs() <= 2.0;
        lines.push(format!(
            "c={c}: err {:.2e} ratios {:.2}/{:.2} active-set offsets {off_f:.2}h,{off_g:.2}h",
            study.errors[2], study.ratios[0], study.ratios[1]
        ));
    }
    outcome(ok, lines.join("; "))
}

fn variational_inequalities() -> Outcome {
    let m = model();
    let (mut v_obs, mut u_one, mut r_neg, mut prod) = (f64::MIN, f64::MIN, f64::MIN, 0.0f64);
    for bp in solve_all(&m, &geometric_c(&m)) {
        let top = m.spend_switch(bp.c) + 1.0;
        for i in 0..4096 {
            let x = (i as f64 + 0.5) * top / 4096.0;
            let a = m.delta() * x * x - value::v_tilde(&m, &bp, x);
            let b = 1.0 - value::u_field(&m, &bp, x).unwrap();
            let r = value::r_field(&m, &bp, x).unwrap();
            v_obs = v_obs.max(-a);
            u_one = u_one.max(-b);
            r_neg = r_neg.max(-r);
            prod = prod.max((a * b * r).abs());
        }
    }
    outcome(
        v_obs <= 1e-9 && u_one <= 1e-9 && r_neg <= 1e-8 && prod < 1e-8,
        format!("V~-dx^2 {v_obs:.1e}, U-1 {u_one:.1e}, -R {r_neg:.1e}, product {prod:.1e}"),
    )
}

fn structure() -> Outcome {
    let m = model();
    let ext = ExtentOptions::default();
    let c0 = boundary::find_c0(&m, &ext).unwrap().value;
    let c2 = boundary::find_c2(&m, &ext).unwrap().value;
    let cs: Vec<f64> = (1..=40).map(|k| c0 * k as f64 / 41.0).collect();
    let pts = solve_all(&m, &cs);
    let mono = pts.windows(2).all(|w| w[1].f < w[0].f && w[1].g > w[0].g);
    let gp = pts.iter().all(|p| p.g_prime > 1.0);
    let half = m.half_inv_delta();
    let halving: Vec<BoundaryPoint> = solve_all(
        &m,
        &(0..8)
            .map(|k| 0.1 / f64::from(1u32 << k))
            .collect::<Vec<_>>(),
    );
    let converging = halving.windows(2).all(|w| {
        (w[1].f - half).abs() < (w[0].f - half).abs()
            && (w[1].g - half).abs() < (w[0].g - half).abs()
    });
    let f_small = boundary::solve_boundary(&m, 1e-3).unwrap().f;
    let jump = m.f0() - half;
    outcome(
        mono && gp && c2 > 0.0 && converging && (f_small - half).abs() < 0.05 && jump > 1.0,
        format!(
            "monotone {mono}, G'>1 {gp}, c0={c0:.10}, c2>={c2}, halving converges {converging}, |F(1e-3)-1/2|={:.2e}, f0-1/2={jump:.4}",
            (f_small - half).abs()
        ),
    )
}

fn tangency_gap_identities() -> Outcome {
    let m = model();
    let c0 = boundary::find_c0(&m, &ExtentOptions::default())
        .unwrap()
        .value;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gap = |x: f64, c: f64| boundary::tangency_gap(&m, x, c).unwrap();
    let (mut lx, mut diag) = (0.0f64, 0.0f64);
    let mut n = 0;
    while n < 16 {
        let c = rng.random_range(0.005..0.9 * c0);
        let (lo, hi) = boundary::g_bracket(&m, c).unwrap();
        let x = rng.random_range(lo + 1e-4..hi - 1e-4);
        let inside = [-4e-5, 4e-5].iter().all(|d| {
            boundary::tangency_gap(&m, x + d, c + d).is_ok()
                && boundary::tangency_gap(&m, x + d, c).is_ok()
        });
        if !inside {
            continue;
        }
        let fd_x = diagonal_derivative(gap, x, c, 1.0, 0.0, 1e-5);
        let fd_d = diagonal_derivative(gap, x, c, 1.0, 1.0, 1e-5);
        let z = boundary::left_slope_inv(&m, boundary::right_slope(&m, x, c)).unwrap();
        let q = boundary::gap_drift(&m, x, z) + m.sqrt2a() * gap(x, c);
        lx = lx.max((fd_x - boundary::tangency_gap_dx(&m, x, c).unwrap()).abs());
        diag = diag.max((fd_d - q).abs());
        n += 1;
    }
    outcome(
        lx < 1e-6 && diag < 1e-6,
        format!("L_x error {lx:.1e}, (L_x+L_c) error {diag:.1e}"),
    )
}

fn monte_carlo() -> Outcome {
    let m = model();
    let c = 0.02;
    let bp = boundary::solve_boundary(&m, c).unwrap();
    let x0 = 0.5 * (bp.f + bp.g);
    let exact = value::v_tilde(&m, &bp, x0);
    let run = |dt: f64| {
        let cfg = SimConfig {
            n_paths: 1_000_000,
            dt,
            horizon: 10.0,
            seed: 1,
            antithetic: true,
            x0,
            fuel: c,
        };
        simulate_policy(&m, &bp, &cfg).unwrap()
    };
    let coarse = run(1e-4);
    let fine = run(5e-5);
    let d1 = (coarse.mean_cost - exact).abs();
    let d2 = (fine.mean_cost - exact).abs();
    outcome(
        d1 < 3.0 * coarse.std_error + 5e-3 && d2 <= d1,
        format!(
            "V~={exact:.8} dt=1e-4: {:.8}±{:.1e} (|diff| {d1:.2e}); dt=5e-5: {:.8}±{:.1e} (|diff| {d2:.2e})",
            coarse.mean_cost, coarse.std_error, fine.mean_cost, fine.std_error
        ),
    )
}

fn regime_gating() -> Outcome {
    let mut ok = true;
    let mut seen = Vec::new();
    for (lambda, expect) in [
        (0.3, Regime::Prior),
        (0.55, Regime::Open),
        (1.2, Regime::Degenerate),
    ] {
        let p = ModelParams::new(1.0, 1.0, lambda).unwrap();
        match Model::new_regime(p) {
            Err(e @ Error::Regime { regime, .. }) => {
                ok &= regime == expect && e.to_string().contains(expect.label());
                seen.push(format!("{lambda}: {}", regime.label()));
            }
            other => {
                ok = false;
                seen.push(format!("{lambda}: unexpected {other:?}"));
            }
        }
    }
    let p = ModelParams::new(1.0, 1.0, 0.9).unwrap();
    ok &= derive_constants(&p).unwrap().regime == Regime::New && Model::new_regime(p).is_ok();
    outcome(ok, seen.join(", ") + ", 0.9 proceeds")
}

#[test]
fn acceptance_criteria() {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 9] = [
        ("constants", constants, Duration::from_millis(1)),
        ("smooth fit", smooth_fit, Duration::from_secs(1)),
        (
            "minorant oracle match",
            minorant_match,
            Duration::from_secs(30),
        ),
        ("PSOR oracle match", psor_match, Duration::from_secs(60)),
        (
            "variational inequalities",
            variational_inequalities,
            Duration::from_secs(5),
        ),
        ("free-boundary structure", structure, Duration::from_secs(5)),
        (
            "tangency-gap identities",
            tangency_gap_identities,
            Duration::from_secs(1),
        ),
        ("Monte Carlo", monte_carlo, Duration::from_secs(300)),
        ("regime gating", regime_gating, Duration::from_millis(1)),
    ];
    let mut failed = Vec::new();
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let ok = out.ok && took <= *budget;
        println!(
            "criterion {} [{}] {name}: {} ({:.3?} of {budget:?})",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            out.detail,
            took
        );
        if !ok {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
