//! A battery of named checks on constants, boundaries, value functions and
//! the two oracles, each reduced to a worst violation against a tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{self, BoundaryPoint, ExtentOptions};
use crate::error::{Error, Result};
use crate::model::{self, Model, ModelParams};
use crate::oracle::{self, PsorOptions};
use crate::value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    /// Where the worst violation occurred (an `x`, `y` or `c`, see `property`).
    pub location: f64,
    /// Fuel level at the worst violation, when the check is per-fuel.
    pub c: Option<f64>,
    pub tolerance: f64,
    /// The property being checked.
    pub property: String,
    /// Why the check could not be evaluated, if it failed to run.
    pub reason: Option<String>,
}

impl CheckReport {
    fn measured(name: &str, property: &str, tolerance: f64, worst: Worst) -> Self {
        CheckReport {
            name: name.to_string(),
            passed: worst.value <= tolerance,
            worst_violation: worst.value,
            location: worst.location,
            c: worst.c,
            tolerance,
            property: property.to_string(),
            reason: None,
        }
    }

    fn failed(name: &str, property: &str, tolerance: f64, err: &Error) -> Self {
        CheckReport {
            name: name.to_string(),
            passed: false,
            worst_violation: f64::INFINITY,
            location: f64::NAN,
            c: None,
            tolerance,
            property: property.to_string(),
            reason: Some(err.to_string()),
        }
    }
}

/// Running maximum of a violation measure with its location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Worst {
    pub value: f64,
    pub location: f64,
    pub c: Option<f64>,
}

impl Worst {
    fn new() -> Self {
        Worst {
            value: f64::NEG_INFINITY,
            location: f64::NAN,
            c: None,
        }
    }

    fn push(&mut self, value: f64, location: f64, c: Option<f64>) {
        if value > self.value || value.is_nan() {
            *self = Worst { value, location, c };
        }
    }

    fn merge(mut self, other: Worst) -> Worst {
        self.push(other.value, other.location, other.c);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Multiplies every tolerance.
    pub tol_scale: f64,
    pub audit_points: usize,
    pub minorant_points: usize,
    /// Node count of the plain PSOR grid used for the active-set comparison.
    pub psor_nodes: usize,
    /// Nodes across `[F, G]` on the coarsest aligned grid of the rate study.
    pub psor_bridge_nodes: usize,
    /// Coarsest aligned-grid error below which the rate is not measurable.
    pub psor_error_floor: f64,
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            tol_scale: 1.0,
            audit_points: 4096,
            minorant_points: 1_000_000,
            psor_nodes: 40_001,
            psor_bridge_nodes: 16,
            psor_error_floor: 1e-11,
            fd_step: 1e-5,
            seed: 0x5eed,
        }
    }
}

/// `0.9·c₀·2^{−k}` for `k = 0..7`, ascending.
pub fn default_c_list(m: &Model) -> Result<Vec<f64>> {
    let c0 = boundary::find_c0(m, &ExtentOptions::default())?.value;
    Ok((0..8)
        .rev()
        .map(|k| 0.9 * c0 / f64::from(1u32 << k))
        .collect())
}

/// Central difference with one Richardson step along `(dx, dc)`.
pub fn diagonal_derivative<F: Fn(f64, f64) -> f64>(
    f: F,
    x: f64,
    c: f64,
    dx: f64,
    dc: f64,
    step: f64,
) -> f64 {
    let d = |s: f64| (f(x + s * dx, c + s * dc) - f(x - s * dx, c - s * dc)) / (2.0 * s);
    (4.0 * d(0.5 * step) - d(step)) / 3.0
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Grid `x_min + ih` with `F` and `G` both on nodes and `h = (G − F)/bridge`.
pub fn aligned_grid(bp: &BoundaryPoint, bridge: usize, x_max: f64) -> (f64, f64, usize) {
    let h = (bp.g - bp.f) / bridge as f64;
    let below = (bp.f / h).floor();
    let x_min = bp.f - below * h;
    let above = ((x_max - bp.g) / h).ceil().max(1.0);
    let n = below as usize + bridge + above as usize + 1;
    (x_min, x_min + (n - 1) as f64 * h, n)
}

/// Right end used by the PSOR comparisons: beyond `f₀ + c + 2/√(2α)`.
pub fn psor_x_max(m: &Model, c: f64) -> f64 {
    m.spend_switch(c) + 2.0 / m.sqrt2a() + 0.25
}

/// Max-norm PSOR error against the closed-form `V` on three aligned grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub c: f64,
    pub nodes: Vec<usize>,
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// `errors[k] / errors[k+1]`.
    pub ratios: Vec<f64>,
}

pub fn psor_convergence(
    m: &Model,
    bp: &BoundaryPoint,
    bridge: usize,
    levels: usize,
) -> Result<ConvergenceStudy> {
    let mut study = ConvergenceStudy {
        c: bp.c,
        nodes: Vec::new(),
        steps: Vec::new(),
        errors: Vec::new(),
        ratios: Vec::new(),
    };
    for k in 0..levels {
        let (lo, hi, n) = aligned_grid(bp, bridge << k, psor_x_max(m, bp.c));
        let r = oracle::psor_oracle_on(m, bp.c, lo, hi, n, &PsorOptions::default())?;
        let err = r
            .x_grid
            .iter()
            .zip(&r.v)
            .map(|(&x, &v)| (v - value::v(m, bp, x)).abs())
            .fold(0.0, f64::max);
        study.nodes.push(n);
        study.steps.push(r.step);
        study.errors.push(err);
    }
    study.ratios = study.errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(study)
}

/// Offsets, in grid steps, of the discrete active-set edges from `F` and `G`.
pub fn psor_active_set_offsets(
    m: &Model,
    bp: &BoundaryPoint,
    n_nodes: usize,
) -> Result<(f64, f64)> {
    let r = oracle::psor_oracle(
        m,
        bp.c,
        n_nodes,
        psor_x_max(m, bp.c),
        &PsorOptions::default(),
    )?;
    let runs = r.free_runs();
    if runs.len() != 1 {
        return Err(Error::Validation {
            location: bp.c,
            violation: runs.len() as f64,
            message: format!(
                "{} continuation intervals in the PSOR active set",
                runs.len()
            ),
        });
    }
    let (a, b) = runs[0];
    let f_h = r.x_grid[a - 1];
    let g_h = r.x_grid[(b + 1).min(r.x_grid.len() - 1)];
    Ok(((f_h - bp.f) / r.step, (g_h - bp.g) / r.step))
}

struct Ctx<'a> {
    m: &'a Model,
    points: Vec<BoundaryPoint>,
    c0: f64,
    c2: f64,
    cfg: VerifyConfig,
}

impl Ctx<'_> {
    /// Audit abscissas on `(0, f₀ + c + 1)`, offset by half a step and with
    /// the breakpoints removed.
    fn x_audit(&self, bp: &BoundaryPoint) -> Vec<f64> {
        let n = self.cfg.audit_points;
        let top = self.m.spend_switch(bp.c) + 1.0;
        let h = top / n as f64;
        (0..n)
            .map(|i| (i as f64 + 0.5) * h)
            .filter(|&x| x != bp.f && x != bp.g && x != self.m.spend_switch(bp.c))
            .collect()
    }

    fn y_audit(&self, c: f64) -> Vec<f64> {
        let n = self.cfg.audit_points;
        let top = self.m.psi(self.m.spend_switch(c) + 1.0).ln();
        (0..n)
            .map(|i| (top * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    fn per_point<F>(&self, f: F) -> Result<Worst>
    where
        F: Fn(&BoundaryPoint) -> Result<Worst> + Sync,
    {
        self.points
            .par_iter()
            .map(&f)
            .collect::<Result<Vec<_>>>()
            .map(|ws| ws.into_iter().fold(Worst::new(), Worst::merge))
    }

    fn random_domain_points(&self, count: usize) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let m = self.m;
        let margin = 4.0 * self.cfg.fd_step;
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let c: f64 = rng.random_range(0.005..0.9 * self.c0);
            let Ok((lo, hi)) = boundary::g_bracket(m, c) else {
                continue;
            };
            let x: f64 = rng.random_range(lo + margin..hi - margin);
            let inside = [-margin, margin].iter().all(|&d| {
                boundary::tangency_gap(m, x + d, c + d).is_ok()
                    && boundary::tangency_gap(m, x, c + d).is_ok()
                    && boundary::tangency_gap(m, x + d, c).is_ok()
            });
            if inside {
                out.push((x, c));
            }
        }
        out
    }
}

type CheckFn<'a> = Box<dyn Fn(&Ctx) -> Result<Worst> + Sync + 'a>;

struct Check<'a> {
    name: &'static str,
    property: &'static str,
    tolerance: f64,
    run: CheckFn<'a>,
}

fn check<'a>(
    name: &'static str,
    property: &'static str,
    tolerance: f64,
    run: impl Fn(&Ctx) -> Result<Worst> + Sync + 'a,
) -> Check<'a> {
    Check {
        name,
        property,
        tolerance,
        run: Box::new(run),
    }
}

fn single(value: f64, location: f64, c: Option<f64>) -> Worst {
    Worst { value, location, c }
}

fn constants_check(m: &Model) -> Worst {
    let p = m.params();
    let d = m.constants();
    let mut w = Worst::new();
    w.push(m.rho(m.f0()).abs(), m.f0(), None);
    let l = d.lambda_dagger;
    let gap = model::no_fuel_boundary(p.alpha, p.delta, l) - p.alpha / (2.0 * l);
    w.push(gap.abs(), l, None);
    let ordered = d.lambda_star < d.lambda_dagger
        && d.lambda_dagger < p.alpha * p.delta
        && m.b0() < 0.0
        && 0.5 / p.delta < p.alpha / (2.0 * p.lambda)
        && p.alpha / (2.0 * p.lambda) < m.f0();
    if !ordered {
        w.push(f64::INFINITY, p.lambda, None);
    }
    w
}

/// Stop-obstacle geometry without fuel, each measure normalised by its
/// tolerance (so the check passes at `≤ 1`).
fn no_fuel_check(m: &Model, cfg: &VerifyConfig) -> Result<Worst> {
    let mut w = Worst::new();
    let n = cfg.audit_points;
    let y_f0 = m.psi(m.f0());
    let ys: Vec<f64> = (0..n)
        .map(|i| 1.0 + (y_f0 - 1.0) * i as f64 / (n - 1) as f64)
        .collect();
    for i in 1..n - 1 {
        let d2 = m.transformed_stop(ys[i - 1])? - 2.0 * m.transformed_stop(ys[i])?
            + m.transformed_stop(ys[i + 1])?;
        if d2 <= 0.0 {
            w.push(1.0 + d2.abs() / 1e-12, ys[i], None);
        }
    }
    // H_l decreases below Ψ(f₀) and increases above it.
    let s = m.sqrt2a();
    for i in 1..n {
        let x = m.f0() * 2.0 * i as f64 / n as f64;
        let slope = m.transformed_stop_slope(m.psi(x))?;
        let wrong = if x < m.f0() {
            slope >= 0.0
        } else {
            slope <= 0.0
        };
        if wrong && (x - m.f0()).abs() > 1e-9 {
            w.push(2.0, x, None);
        }
    }
    let f0 = m.f0();
    let left = m.delta() * f0 * f0;
    let right = value::running_cost_value(m, f0) + m.b0() * (-f0 * s).exp();
    let dleft = 2.0 * m.delta() * f0;
    let dright = 2.0 * (m.lambda() / m.alpha()) * f0 - s * m.b0() * (-f0 * s).exp();
    w.push(
        (left - right).abs().max((dleft - dright).abs()) / 1e-10,
        f0,
        None,
    );
    let mr = oracle::minorant_oracle(m, 0.0, (cfg.minorant_points / 10).max(10_000), f0 + 1.0)?;
    let offset = ((mr.x_grid[mr.left_index] - f0) / mr.step).abs();
    w.push(offset / 2.0, f0, None);
    let tail = mr.w.last().copied().unwrap_or(f64::NAN);
    w.push(
        (tail - m.b0()).abs() / 1e-6,
        mr.y_grid.last().copied().unwrap_or(f64::NAN),
        None,
    );
    w.push(0.0, f0, None);
    Ok(w)
}

fn monotone(points: &[BoundaryPoint], key: impl Fn(&BoundaryPoint) -> f64, sign: f64) -> Worst {
    let mut w = Worst::new();
    for pair in points.windows(2) {
        w.push(
            sign * (key(&pair[1]) - key(&pair[0])),
            pair[1].c,
            Some(pair[1].c),
        );
    }
    if points.len() < 2 {
        w.push(f64::NEG_INFINITY, f64::NAN, None);
    }
    w
}

/// Runs every check. `c_list` entries must lie in `(0, c₀)`; an empty list
/// runs only the fuel-independent checks.
pub fn run_suite(
    params: &ModelParams,
    c_list: &[f64],
    cfg: &VerifyConfig,
) -> Result<Vec<CheckReport>> {
    let m = Model::new_regime(*params)?;
    let c0 = boundary::find_c0(&m, &ExtentOptions::default())?;
    let c2 = boundary::find_c2(&m, &ExtentOptions::default())?;
    let mut c_sorted = c_list.to_vec();
    c_sorted.sort_by(f64::total_cmp);
    c_sorted.dedup();
    if let Some(&bad) = c_sorted.iter().find(|&&c| !(c > 0.0 && c < c0.value)) {
        return Err(Error::domain(format!(
            "fuel level {bad} outside (0, c0 = {})",
            c0.value
        )));
    }
    let s = cfg.tol_scale;
    let mut reports = vec![
        CheckReport::measured(
            "constants",
            "rho(f0) = 0, f0(lambda_dagger) = alpha/(2 lambda_dagger), and the ordering of the regime thresholds",
            1e-10 * s,
            constants_check(&m),
        ),
        match no_fuel_check(&m, cfg) {
            Ok(w) => CheckReport::measured(
                "no_fuel_geometry",
                "H_l strictly convex on [1, Psi(f0)], decreasing then increasing, no-fuel value C1 at f0, minorant contact at f0 with constant tail B0 (normalised)",
                s,
                w,
            ),
            Err(e) => CheckReport::failed("no_fuel_geometry", "no-fuel geometry", s, &e),
        },
    ];
    if c_sorted.is_empty() {
        reports.sort_by(|a, b| a.name.cmp(&b.name));
        return Ok(reports);
    }

    let points = match c_sorted
        .par_iter()
        .map(|&c| boundary::solve_boundary(&m, c))
        .collect::<Result<Vec<_>>>()
    {
        Ok(p) => p,
        Err(e) => {
            for (name, tol) in C_DEPENDENT {
                reports.push(CheckReport::failed(
                    name,
                    "boundary solve failed",
                    tol * s,
                    &e,
                ));
            }
            reports.sort_by(|a, b| a.name.cmp(&b.name));
            return Ok(reports);
        }
    };
    let ctx = Ctx {
        m: &m,
        points,
        c0: c0.value,
        c2: c2.value,
        cfg: *cfg,
    };

    let checks: Vec<Check> = vec![
        check("smooth_fit_F", "value and slope of the value function continuous across F(c)", 1e-9, |cx| {
            cx.per_point(|bp| {
                let [(dv, ddv), _] = value::smooth_fit_mismatch(cx.m, bp);
                Ok(single(dv.abs().max(ddv.abs()), bp.f, Some(bp.c)))
            })
        }),
        check("smooth_fit_G", "value and slope of the value function continuous across G(c)", 1e-9, |cx| {
            cx.per_point(|bp| {
                let [_, (dv, ddv)] = value::smooth_fit_mismatch(cx.m, bp);
                Ok(single(dv.abs().max(ddv.abs()), bp.g, Some(bp.c)))
            })
        }),
        check("tangent_below_obstacle", "common tangent A y + B lies below H(y;c) on [1, Psi(f0+c+1)] (location y)", 1e-9, |cx| {
            cx.per_point(|bp| {
                let (excess, y) = boundary::tangent_excess(cx.m, bp.c, bp.a, bp.b, cx.cfg.audit_points)?;
                Ok(single(excess, y, Some(bp.c)))
            })
        }),
        check("W_convex", "transformed value W(.;c) convex: slope decrements on the y audit grid (location y)", 1e-9, |cx| {
            cx.per_point(|bp| {
                let ys = cx.y_audit(bp.c);
                let ws = ys.iter().map(|&y| value::w(cx.m, bp, y)).collect::<Result<Vec<_>>>()?;
                let mut w = Worst::new();
                for i in 1..ys.len() - 1 {
                    let left = (ws[i] - ws[i - 1]) / (ys[i] - ys[i - 1]);
                    let right = (ws[i + 1] - ws[i]) / (ys[i + 1] - ys[i]);
                    w.push(left - right, ys[i], Some(bp.c));
                }
                Ok(w)
            })
        }),
        check("W_nonpositive", "transformed value W(.;c) <= 0 on the y audit grid (location y)", 1e-12, |cx| {
            cx.per_point(|bp| {
                let mut w = Worst::new();
                for y in cx.y_audit(bp.c) {
                    w.push(value::w(cx.m, bp, y)?, y, Some(bp.c));
                }
                Ok(w)
            })
        }),
        check("V_leq_obstacle", "value below the stopping cost: V~(x;c) <= delta x^2 (location x)", 1e-9, |cx| {
            cx.per_point(|bp| {
                let mut w = Worst::new();
                for x in cx.x_audit(bp) {
                    w.push(value::v_tilde(cx.m, bp, x) - cx.m.delta() * x * x, x, Some(bp.c));
                }
                Ok(w)
            })
        }),
        check("U_leq_1", "marginal value of fuel plus position U(x,c) <= 1 (location x)", 1e-9, |cx| {
            cx.per_point(|bp| {
                let mut w = Worst::new();
                for x in cx.x_audit(bp) {
                    w.push(value::u_field(cx.m, bp, x)? - 1.0, x, Some(bp.c));
                }
                Ok(w)
            })
        }),
        check(
            "U_boundary_values",
            "U(F) = 2 delta F and U(G) = 1, and U agrees with finite differences of V~ in x and c inside (F, G) (location x)",
            1e-6,
            |cx| cx.per_point(|bp| u_boundary(cx, bp)),
        ),
        check("R_nonneg", "generator residual R(x,c) >= 0 off the breakpoints (location x)", 1e-8, |cx| {
            cx.per_point(|bp| {
                let mut w = Worst::new();
                for x in cx.x_audit(bp) {
                    w.push(-value::r_field(cx.m, bp, x)?, x, Some(bp.c));
                }
                Ok(w)
            })
        }),
        check(
            "complementarity",
            "(delta x^2 - V~)(1 - U) R = 0, with some factor below 1e-10 at every audited x (location x)",
            1e-8,
            |cx| cx.per_point(|bp| complementarity(cx, bp)),
        ),
        check("F_monotone", "F strictly decreasing in c (violation F(c_{k+1}) - F(c_k), location c)", -1e-12, |cx| {
            Ok(monotone(&cx.points, |p| p.f, 1.0))
        }),
        check(
            "G_monotone",
            "G and G - c strictly increasing in c (violation is the larger negated increment, location c)",
            -1e-12,
            |cx| Ok(monotone(&cx.points, |p| p.g, -1.0).merge(monotone(&cx.points, |p| p.g - p.c, -1.0))),
        ),
        check("Gprime_gt_1", "G'(c) > 1 (violation 1 - G', location c)", -1e-12, |cx| {
            cx.per_point(|bp| Ok(single(1.0 - bp.g_prime, bp.c, Some(bp.c))))
        }),
        check("c0_positive", "c0 > 0 and c2 >= c0 (violation -min(c0, c2 - c0), location c0)", 0.0, |cx| {
            Ok(single(-(cx.c0.min(cx.c2 - cx.c0)), cx.c0, None))
        }),
        check(
            "boundary_limits_c_to_0",
            "|F(c) - 1/(2 delta)| and |G(c) - 1/(2 delta)| shrink as c decreases (worst ratio of successive distances, location c)",
            0.75,
            |cx| {
                let half = cx.m.half_inv_delta();
                let mut w = Worst::new();
                for pair in cx.points.windows(2) {
                    let (small, large) = (&pair[0], &pair[1]);
                    w.push((small.f - half).abs() / (large.f - half).abs(), small.c, Some(small.c));
                    w.push((small.g - half).abs() / (large.g - half).abs(), small.c, Some(small.c));
                }
                if cx.points.len() < 2 {
                    w.push(f64::NEG_INFINITY, f64::NAN, None);
                }
                Ok(w)
            },
        ),
        check(
            "identity_hall1",
            "(d/dx + d/dc) H3~ = h3 - sqrt(2 alpha) H3~ at random (x, c) (relative error, location x)",
            1e-6,
            |cx| {
                identity(cx, |m, x, c| {
                    let fd = diagonal_derivative(|x, c| boundary::right_slope(m, x, c), x, c, 1.0, 1.0, cx.cfg.fd_step);
                    Ok(rel_err(fd, boundary::slope_source(m, x) - m.sqrt2a() * boundary::right_slope(m, x, c)))
                })
            },
        ),
        check(
            "identity_hall2",
            "(d/dx + d/dc) H4~ = sqrt(2 alpha) H4~ - h4 at random (x, c) (relative error, location x)",
            1e-6,
            |cx| {
                identity(cx, |m, x, c| {
                    let fd = diagonal_derivative(|x, c| boundary::right_intercept(m, x, c), x, c, 1.0, 1.0, cx.cfg.fd_step);
                    Ok(rel_err(fd, m.sqrt2a() * boundary::right_intercept(m, x, c) - boundary::intercept_source(m, x)))
                })
            },
        ),
        check(
            "identity_lx",
            "dL/dx = dH3~/dx (e^{2 s z} - e^{2 s x}) at random (x, c) (relative error, location x)",
            1e-6,
            |cx| {
                identity(cx, |m, x, c| {
                    let fd = diagonal_derivative(gap_fn(m), x, c, 1.0, 0.0, cx.cfg.fd_step);
                    Ok(rel_err(fd, boundary::tangency_gap_dx(m, x, c)?))
                })
            },
        ),
        check(
            "identity_lxlc_q",
            "(d/dx + d/dc) L = q(x; z) + sqrt(2 alpha) L at random (x, c), and = q(G; F) on the boundary (relative error, location x)",
            1e-6,
            |cx| {
                let random = identity(cx, |m, x, c| {
                    let fd = diagonal_derivative(gap_fn(m), x, c, 1.0, 1.0, cx.cfg.fd_step);
                    Ok(rel_err(fd, boundary::tangency_gap_diagonal(m, x, c)?))
                })?;
                let on_curve = cx.per_point(|bp| {
                    let fd = diagonal_derivative(gap_fn(cx.m), bp.g, bp.c, 1.0, 1.0, cx.cfg.fd_step);
                    Ok(single(rel_err(fd, boundary::gap_drift(cx.m, bp.g, bp.f)), bp.g, Some(bp.c)))
                })?;
                Ok(random.merge(on_curve))
            },
        ),
        check("q_display_equivalence", "both closed forms of q agree at 1000 random (x, z) (relative error, location x)", 1e-12, |cx| {
            let mut rng = ChaCha8Rng::seed_from_u64(cx.cfg.seed ^ 0x9);
            let mut w = Worst::new();
            for _ in 0..1000 {
                let x: f64 = rng.random_range(-1.0..cx.m.f0() + 1.0);
                let z: f64 = rng.random_range(-1.0..cx.m.f0() + 1.0);
                let a = boundary::gap_drift(cx.m, x, z);
                let b = boundary::gap_drift_expanded(cx.m, x, z);
                w.push((a - b).abs() / a.abs().max(b.abs()).max(1.0), x, None);
            }
            Ok(w)
        }),
        check(
            "oracle_minorant_match",
            "hull contact blocks of the sampled transformed obstacle end at Psi(F) and start at Psi(G) (offset in grid steps, location c)",
            2.0,
            |cx| {
                cx.per_point(|bp| {
                    let mr = oracle::minorant_oracle(cx.m, bp.c, cx.cfg.minorant_points, cx.m.spend_switch(bp.c) + 1.0)?;
                    let right = mr.right_index.ok_or_else(|| Error::Resolution("no right contact block".into()))?;
                    let off_f = (mr.x_grid[mr.left_index] - bp.f).abs() / mr.step;
                    let off_g = (mr.x_grid[right] - bp.g).abs() / mr.step;
                    Ok(single(off_f.max(off_g), bp.c, Some(bp.c)))
                })
            },
        ),
        check(
            "oracle_psor_match",
            "PSOR active set within 2h of [0,F] and [G,x_max]; on F,G-aligned grids the max-norm error ratio under halving lies in [3,5], or the error stays below 1e-10 where it is at rounding level (normalised, location c)",
            1.0,
            |cx| cx.per_point(|bp| psor_match(cx, bp)),
        ),
    ];

    let mut measured: Vec<CheckReport> = checks
        .par_iter()
        .map(|ch| {
            let tol = ch.tolerance * if ch.tolerance > 0.0 { s } else { 1.0 };
            match (ch.run)(&ctx) {
                Ok(w) => CheckReport::measured(ch.name, ch.property, tol, w),
                Err(e) => CheckReport::failed(ch.name, ch.property, tol, &e),
            }
        })
        .collect();
    reports.append(&mut measured);
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(reports)
}

const C_DEPENDENT: [(&str, f64); 22] = [
    ("smooth_fit_F", 1e-9),
    ("smooth_fit_G", 1e-9),
    ("tangent_below_obstacle", 1e-9),
    ("W_convex", 1e-9),
    ("W_nonpositive", 1e-12),
    ("V_leq_obstacle", 1e-9),
    ("U_leq_1", 1e-9),
    ("U_boundary_values", 1e-6),
    ("R_nonneg", 1e-8),
    ("complementarity", 1e-8),
    ("F_monotone", -1e-12),
    ("G_monotone", -1e-12),
    ("Gprime_gt_1", -1e-12),
    ("c0_positive", 0.0),
    ("boundary_limits_c_to_0", 0.75),
    ("identity_hall1", 1e-6),
    ("identity_hall2", 1e-6),
    ("identity_lx", 1e-6),
    ("identity_lxlc_q", 1e-6),
    ("q_display_equivalence", 1e-12),
    ("oracle_minorant_match", 2.0),
    ("oracle_psor_match", 1.0),
];

fn gap_fn(m: &Model) -> impl Fn(f64, f64) -> f64 + '_ {
    move |x, c| boundary::tangency_gap(m, x, c).unwrap_or(f64::NAN)
}

fn identity<F>(cx: &Ctx, f: F) -> Result<Worst>
where
    F: Fn(&Model, f64, f64) -> Result<f64>,
{
    let mut w = Worst::new();
    for (x, c) in cx.random_domain_points(16) {
        w.push(f(cx.m, x, c)?, x, Some(c));
    }
    Ok(w)
}

fn u_boundary(cx: &Ctx, bp: &BoundaryPoint) -> Result<Worst> {
    let m = cx.m;
    let mut w = Worst::new();
    let inner = |x: f64| value::u_field(m, bp, x);
    let eps = 1e-12 * bp.g;
    w.push(
        (inner(bp.f + eps)? - 2.0 * m.delta() * bp.f).abs(),
        bp.f,
        Some(bp.c),
    );
    w.push((inner(bp.g - eps)? - 1.0).abs(), bp.g, Some(bp.c));
    // V~_c at fixed x from the coefficients A(c), B(c) of neighbouring solves.
    let step = cx.cfg.fd_step;
    let coeffs = |c: f64| boundary::solve_boundary(m, c).map(|p| (p.a, p.b));
    let d = |h: f64| -> Result<(f64, f64)> {
        let (ap, bp_) = coeffs(bp.c + h)?;
        let (am, bm) = coeffs(bp.c - h)?;
        Ok(((ap - am) / (2.0 * h), (bp_ - bm) / (2.0 * h)))
    };
    let (a1, b1) = d(step)?;
    let (a2, b2) = d(0.5 * step)?;
    let (da, db) = ((4.0 * a2 - a1) / 3.0, (4.0 * b2 - b1) / 3.0);
    let s = m.sqrt2a();
    for k in 1..8 {
        let x = bp.f + (bp.g - bp.f) * k as f64 / 8.0;
        let v_c = da * (x * s).exp() + db * (-x * s).exp();
        let v_x = value::v_tilde_dx(m, bp, x);
        w.push(rel_err(v_x + v_c, inner(x)?), x, Some(bp.c));
    }
    Ok(w)
}

fn complementarity(cx: &Ctx, bp: &BoundaryPoint) -> Result<Worst> {
    let m = cx.m;
    let mut w = Worst::new();
    for x in cx.x_audit(bp) {
        let a = m.delta() * x * x - value::v_tilde(m, bp, x);
        let b = 1.0 - value::u_field(m, bp, x)?;
        let r = value::r_field(m, bp, x)?;
        let smallest = a.abs().min(b.abs()).min(r.abs());
        if smallest >= 1e-10 {
            w.push(f64::INFINITY, x, Some(bp.c));
        }
        w.push((a * b * r).abs(), x, Some(bp.c));
    }
    Ok(w)
}

fn psor_match(cx: &Ctx, bp: &BoundaryPoint) -> Result<Worst> {
    let (off_f, off_g) = psor_active_set_offsets(cx.m, bp, cx.cfg.psor_nodes)?;
    let mut w = Worst::new();
    w.push(off_f.abs().max(off_g.abs()) / 2.0, bp.c, Some(bp.c));
    let study = psor_convergence(cx.m, bp, cx.cfg.psor_bridge_nodes, 3)?;
    if study.errors[0] >= cx.cfg.psor_error_floor {
        for r in &study.ratios {
            // Distance outside [3, 5], scaled so that 1 is a full unit away.
            let outside = (3.0 - r).max(r - 5.0).max(0.0);
            w.push(
                if outside > 0.0 {
                    1.0 + outside
                } else {
                    r / 5.0
                },
                bp.c,
                Some(bp.c),
            );
        }
    } else {
        let worst = study.errors.iter().copied().fold(0.0, f64::max);
        w.push(worst / 1e-10, bp.c, Some(bp.c));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_derivative_of_polynomial() {
        let d = diagonal_derivative(|x, c| x * x * x + c * c, 1.0, 2.0, 1.0, 1.0, 1e-3);
        assert!((d - 7.0).abs() < 1e-9);
    }

    #[test]
    fn aligned_grid_hits_both_boundaries() {
        let bp = BoundaryPoint {
            c: 0.1,
            f: 0.4986,
            g: 0.6014,
            a: -0.2,
            b: -0.7,
            g_prime: 1.01,
            valid: true,
            checks: boundary::Validity {
                f_positive: true,
                below_spend_switch: true,
                g_prime_gt_one: true,
                tangent_below_obstacle: true,
            },
        };
        let (lo, hi, n) = aligned_grid(&bp, 16, 4.0);
        let h = (hi - lo) / (n - 1) as f64;
        let kf = (bp.f - lo) / h;
        let kg = (bp.g - lo) / h;
        assert!((kf - kf.round()).abs() < 1e-9 && (kg - kg.round()).abs() < 1e-9);
        assert!(lo >= 0.0 && lo < h && hi >= 4.0);
    }

    #[test]
    fn open_regime_is_refused() {
        let p = ModelParams::new(1.0, 1.0, 0.55).unwrap();
        let err = run_suite(&p, &[], &VerifyConfig::default()).unwrap_err();
        assert!(err.is_regime());
    }

    #[test]
    fn empty_fuel_list_runs_fixed_checks() {
        let p = ModelParams::new(1.0, 1.0, 0.9).unwrap();
        let reports = run_suite(&p, &[], &VerifyConfig::default()).unwrap();
        let names: Vec<&str> = reports.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["constants", "no_fuel_geometry"]);
        assert!(reports.iter().all(|r| r.passed), "{reports:#?}");
    }
}
