//! Moving boundaries `F(c) < G(c)` from the common tangent of the stop and
//! spend obstacles in the transformed scale.
//!
//! A line tangent to `H_l` at `Ψ(z)` has slope `h₁(z)` and intercept `h₂(z)`;
//! a line tangent to `H_r1(·;c)` at `Ψ(x)` has slope `H̃₃(x,c)` and intercept
//! `H̃₄(x,c)`. With `z = h₁⁻¹(H̃₃(x,c))` the two tangents share a slope, and the
//! tangency gap `L(x,c) = H̃₄(x,c) − h₂(z)` vanishes exactly at `x = G(c)`,
//! where also `z = F(c)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelParams, Regime};
use crate::roots;

/// `h₁(x)`: slope of the tangent to `H_l` at `Ψ(x)`.
pub fn left_slope(m: &Model, x: f64) -> f64 {
    let (a, d, l) = adl(m);
    ((a * d - l) / (2.0 * a)) * (-x * m.sqrt2a()).exp() * m.rho(x)
}

/// `h₂(x)`: intercept of the tangent to `H_l` at `Ψ(x)`.
pub fn left_intercept(m: &Model, x: f64) -> f64 {
    let (a, d, l) = adl(m);
    let s = m.sqrt2a();
    ((a * d - l) / (2.0 * a)) * (x * s).exp() * (m.rho(x) - 4.0 * x / s)
}

/// `h₃(x)`, the source term in the diagonal derivative of `H̃₃`.
pub fn slope_source(m: &Model, x: f64) -> f64 {
    let (a, _, l) = adl(m);
    let s = m.sqrt2a();
    (l / a) * (a / (2.0 * l) - x - 1.0 / s) * (-x * s).exp()
}

/// `h₄(x)`, the source term in the diagonal derivative of `H̃₄`.
pub fn intercept_source(m: &Model, x: f64) -> f64 {
    let (a, _, l) = adl(m);
    let s = m.sqrt2a();
    (l / a) * (x - a / (2.0 * l) - 1.0 / s) * (x * s).exp()
}

fn adl(m: &Model) -> (f64, f64, f64) {
    let ModelParams {
        alpha,
        delta,
        lambda,
    } = *m.params();
    (alpha, delta, lambda)
}

fn spend_stop_jet(m: &Model, x: f64, c: f64) -> (f64, f64) {
    let (a, d, l) = adl(m);
    let h = m.obstacle_spend_stop(x, c);
    let dh = -2.0 * d * c + 2.0 * (d - l / a) * x;
    (h, dh)
}

/// `H̃₃(x,c)`: slope of the tangent to `H_r1(·;c)` at `Ψ(x)`.
pub fn right_slope(m: &Model, x: f64, c: f64) -> f64 {
    let s = m.sqrt2a();
    let (h, dh) = spend_stop_jet(m, x, c);
    (-x * s).exp() * (dh + s * h) / (2.0 * s)
}

/// `H̃₄(x,c)`: intercept of the tangent to `H_r1(·;c)` at `Ψ(x)`.
pub fn right_intercept(m: &Model, x: f64, c: f64) -> f64 {
    let s = m.sqrt2a();
    let (h, dh) = spend_stop_jet(m, x, c);
    (x * s).exp() * (-dh + s * h) / (2.0 * s)
}

/// `∂H̃₃/∂x = e^{−sx}(½∂²/∂x² − α)h_r1 / s`.
pub fn right_slope_dx(m: &Model, x: f64, c: f64) -> f64 {
    let s = m.sqrt2a();
    (-x * s).exp() * m.generator_spend_stop(x, c) / s
}

/// `[h₁(0), h₁(f₀)] = [−λ/(2α²), 0]`, the range on which `h₁` is inverted.
pub fn left_slope_range(m: &Model) -> (f64, f64) {
    (left_slope(m, 0.0), 0.0)
}

/// The unique `x ∈ [0, f₀]` with `h₁(x) = g`.
pub fn left_slope_inv(m: &Model, g: f64) -> Result<f64> {
    let (lo, hi) = left_slope_range(m);
    if !(g >= lo && g <= hi) {
        return Err(Error::domain(format!(
            "tangent slope {g:e} outside the invertible range [{lo:e}, 0]"
        )));
    }
    if g == lo {
        return Ok(0.0);
    }
    if g == hi {
        return Ok(m.f0());
    }
    roots::bisect(|x| left_slope(m, x) - g, 0.0, m.f0(), 1e-15, 0.0)
}

/// `L(x,c) = H̃₄(x,c) − h₂(h₁⁻¹(H̃₃(x,c)))`.
pub fn tangency_gap(m: &Model, x: f64, c: f64) -> Result<f64> {
    let z = left_slope_inv(m, right_slope(m, x, c))?;
    Ok(right_intercept(m, x, c) - left_intercept(m, z))
}

/// `L_x(x,c) = ∂H̃₃/∂x·(e^{2sz} − e^{2sx})` with `z = h₁⁻¹(H̃₃(x,c))`.
pub fn tangency_gap_dx(m: &Model, x: f64, c: f64) -> Result<f64> {
    let z = left_slope_inv(m, right_slope(m, x, c))?;
    Ok(gap_dx_at(m, x, z, c))
}

fn gap_dx_at(m: &Model, x: f64, z: f64, c: f64) -> f64 {
    let s = m.sqrt2a();
    right_slope_dx(m, x, c) * ((2.0 * z * s).exp() - (2.0 * x * s).exp())
}

/// `(∂/∂x + ∂/∂c)L(x,c) = q(x; z) + s·L(x,c)`, which reduces to `q` on the
/// curve `L = 0`.
pub fn tangency_gap_diagonal(m: &Model, x: f64, c: f64) -> Result<f64> {
    let z = left_slope_inv(m, right_slope(m, x, c))?;
    let gap = right_intercept(m, x, c) - left_intercept(m, z);
    Ok(gap_drift(m, x, z) + m.sqrt2a() * gap)
}

/// `q(x;z) = s(h₂(z) − h₁(z)e^{2sz}) + h₃(x)e^{2sz} − h₄(x)`.
pub fn gap_drift(m: &Model, x: f64, z: f64) -> f64 {
    let s = m.sqrt2a();
    let e2z = (2.0 * z * s).exp();
    s * (left_intercept(m, z) - left_slope(m, z) * e2z) + slope_source(m, x) * e2z
        - intercept_source(m, x)
}

/// The expanded form of [`gap_drift`].
pub fn gap_drift_expanded(m: &Model, x: f64, z: f64) -> f64 {
    let (a, d, l) = adl(m);
    let s = m.sqrt2a();
    let k = a / (2.0 * l) - x;
    -2.0 * z * ((a * d - l) / a) * (z * s).exp()
        + (l / a) * (x * s).exp() * ((k - 1.0 / s) * (2.0 * (z - x) * s).exp() + (k + 1.0 / s))
}

/// `∂q/∂x = λ√(2/α)(α/(2λ) − x)e^{sx}(1 − e^{2s(z−x)})`.
pub fn gap_drift_dx(m: &Model, x: f64, z: f64) -> f64 {
    let (a, _, l) = adl(m);
    let s = m.sqrt2a();
    l * (2.0 / a).sqrt() * (a / (2.0 * l) - x) * (x * s).exp() * (1.0 - (2.0 * (z - x) * s).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Equal steps in the bracketing scan for `G`.
    pub scan_steps: usize,
    /// Geometric grid size of the tangent-below-obstacle audit.
    pub audit_points: usize,
    /// Allowed amount by which the tangent may exceed the obstacle.
    pub audit_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            scan_steps: 512,
            audit_points: 4096,
            audit_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validity {
    pub f_positive: bool,
    /// `L(f₀ + c, c) < 0`, i.e. the tangency lies on `H_r1`.
    pub below_spend_switch: bool,
    pub g_prime_gt_one: bool,
    pub tangent_below_obstacle: bool,
}

impl Validity {
    pub fn all(&self) -> bool {
        self.f_positive
            && self.below_spend_switch
            && self.g_prime_gt_one
            && self.tangent_below_obstacle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub c: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "G")]
    pub g: f64,
    /// Common-tangent slope in the transformed scale.
    #[serde(rename = "A")]
    pub a: f64,
    /// Common-tangent intercept in the transformed scale.
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "G_prime")]
    pub g_prime: f64,
    pub valid: bool,
    pub checks: Validity,
}

/// Solves the double-tangency system at fuel level `c > 0`.
pub fn solve_boundary(m: &Model, c: f64) -> Result<BoundaryPoint> {
    solve_boundary_with(m, c, &SolveOptions::default())
}

pub fn solve_boundary_with(m: &Model, c: f64, opts: &SolveOptions) -> Result<BoundaryPoint> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("fuel level must be > 0, got {c}")));
    }
    m.require_new_regime()?;
    let (lo, hi) = g_bracket(m, c)?;
    let g = bracket_root(m, c, lo, hi, opts.scan_steps)?;
    finish_point(m, c, g, opts)
}

/// The open interval `(max(x_c, x_v(c)), f₀ + c)` shrunk by `1e−9(f₀ + c)`.
pub fn g_bracket(m: &Model, c: f64) -> Result<(f64, f64)> {
    let inflection = m.inflection(c)?;
    let top = m.spend_switch(c);
    let eps = 1e-9 * top;
    let lo = m.crossover(c).max(inflection.x_v) + eps;
    let hi = top - eps;
    if !(lo < hi) {
        return Err(Error::regime(
            Regime::New,
            format!("empty bracket for G at c = {c}"),
        ));
    }
    Ok((lo, hi))
}

fn no_tangency(c: f64) -> Error {
    Error::regime(
        Regime::New,
        format!(
            "no tangency with H_r1 at c = {c}; c beyond c2 or parameters outside the new regime"
        ),
    )
}

/// Scans `L(·,c)` on `[lo, hi]` for exactly one sign change, then bisects.
pub fn bracket_root(m: &Model, c: f64, lo: f64, hi: f64, steps: usize) -> Result<f64> {
    let steps = steps.max(1);
    let samples: Vec<(f64, f64)> = (0..=steps)
        .filter_map(|i| {
            let x = lo + (hi - lo) * (i as f64) / (steps as f64);
            tangency_gap(m, x, c).ok().map(|v| (x, v))
        })
        .collect();
    let mut brackets = samples
        .windows(2)
        .filter(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0) || w[0].1 == 0.0);
    let first = brackets.next().ok_or_else(|| no_tangency(c))?;
    if brackets.next().is_some() {
        return Err(Error::Resolution(format!(
            "more than one sign change of the tangency gap at c = {c}"
        )));
    }
    let (a, b) = (first[0].0, first[1].0);
    roots::bisect(
        |x| tangency_gap(m, x, c).unwrap_or(f64::NAN),
        a,
        b,
        1e-13,
        1e-12,
    )
}

fn finish_point(m: &Model, c: f64, g: f64, opts: &SolveOptions) -> Result<BoundaryPoint> {
    let slope = right_slope(m, g, c);
    let f = left_slope_inv(m, slope).map_err(|e| Error::regime(Regime::New, e.to_string()))?;
    let a = left_slope(m, f);
    let b = left_intercept(m, f);
    let g_prime = 1.0 - gap_drift(m, g, f) / gap_dx_at(m, g, f, c);
    let below_spend_switch = tangency_gap(m, m.spend_switch(c), c)
        .map(|v| v < 0.0)
        .unwrap_or(false);
    audit_tangent(m, c, a, b, opts)?;
    let checks = Validity {
        f_positive: f > 0.0,
        below_spend_switch,
        g_prime_gt_one: g_prime > 1.0,
        tangent_below_obstacle: true,
    };
    Ok(BoundaryPoint {
        c,
        f,
        g,
        a,
        b,
        g_prime,
        valid: checks.all(),
        checks,
    })
}

/// Worst excess `A·y + B − H(y;c)` over a geometric grid on `[1, Ψ(f₀+c+1)]`.
pub fn tangent_excess(m: &Model, c: f64, a: f64, b: f64, points: usize) -> Result<(f64, f64)> {
    let y_max = m.psi(m.spend_switch(c) + 1.0);
    let n = points.max(2);
    let ratio = y_max.ln() / (n - 1) as f64;
    let mut worst = (f64::NEG_INFINITY, 1.0);
    for i in 0..n {
        let y = (ratio * i as f64).exp();
        let excess = a * y + b - m.transformed(y, c)?;
        if excess > worst.0 {
            worst = (excess, y);
        }
    }
    Ok(worst)
}

fn audit_tangent(m: &Model, c: f64, a: f64, b: f64, opts: &SolveOptions) -> Result<()> {
    let (excess, y) = tangent_excess(m, c, a, b, opts.audit_points)?;
    if excess > opts.audit_tol {
        return Err(Error::Validation {
            location: y,
            violation: excess,
            message: format!("common tangent rises above the obstacle at c = {c}"),
        });
    }
    Ok(())
}

/// A fuel threshold located by doubling then bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub value: f64,
    /// The scan reached `c_max` without leaving the admissible set.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtentOptions {
    pub c_start: f64,
    pub c_max: f64,
    pub tol: f64,
}

impl Default for ExtentOptions {
    fn default() -> Self {
        ExtentOptions {
            c_start: 1e-6,
            c_max: 16.0,
            tol: 1e-10,
        }
    }
}

fn scan_extent<P: Fn(f64) -> bool>(admissible: P, opts: &ExtentOptions) -> Extent {
    let mut lo = 0.0;
    let mut c = opts.c_start;
    loop {
        if c >= opts.c_max {
            if admissible(opts.c_max) {
                return Extent {
                    value: opts.c_max,
                    truncated: true,
                };
            }
            c = opts.c_max;
            break;
        }
        if !admissible(c) {
            break;
        }
        lo = c;
        c *= 2.0;
    }
    Extent {
        value: roots::bisect_predicate(&admissible, lo, c, opts.tol),
        truncated: false,
    }
}

/// `c₂`: the first `c` with `L(f₀ + c, c) ≥ 0` (or where it leaves the domain).
pub fn find_c2(m: &Model, opts: &ExtentOptions) -> Result<Extent> {
    m.require_new_regime()?;
    let admissible = |c: f64| {
        tangency_gap(m, m.spend_switch(c), c)
            .map(|v| v < 0.0)
            .unwrap_or(false)
    };
    Ok(scan_extent(admissible, opts))
}

/// `c₀ = c₂ ∧ inf{c : G′(c) ≤ 1}`.
pub fn find_c0(m: &Model, opts: &ExtentOptions) -> Result<Extent> {
    let c2 = find_c2(m, opts)?;
    let solve_opts = SolveOptions::default();
    let admissible = |c: f64| {
        c < c2.value
            && solve_boundary_with(m, c, &solve_opts)
                .map(|bp| bp.g_prime > 1.0)
                .unwrap_or(false)
    };
    let mut limits = *opts;
    limits.c_max = opts.c_max.min(c2.value);
    let e = scan_extent(admissible, &limits);
    if e.truncated {
        Ok(Extent {
            value: c2.value,
            truncated: c2.truncated,
        })
    } else {
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTable {
    pub params: ModelParams,
    pub c_grid: Vec<f64>,
    pub points: Vec<BoundaryPoint>,
    pub c0: Option<f64>,
    pub c2: Option<f64>,
    pub c2_truncated: bool,
}

impl BoundaryTable {
    pub const CSV_HEADER: &'static str = "c,F,G,A,B,G_prime";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                p.c, p.f, p.g, p.a, p.b, p.g_prime
            ));
        }
        out
    }
}

/// Solves every grid point (in parallel) and checks the monotonicity of
/// `F`, `G` and `G − c` along the grid.
pub fn boundary_table(m: &Model, c_grid: &[f64]) -> Result<BoundaryTable> {
    m.require_new_regime()?;
    let opts = ExtentOptions::default();
    let c2 = find_c2(m, &opts)?;
    let c0 = find_c0(m, &opts)?;
    if c_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("fuel grid must be strictly ascending"));
    }
    if let Some(&bad) = c_grid.iter().find(|&&c| !(c > 0.0 && c < c0.value)) {
        return Err(Error::domain(format!(
            "fuel level {bad} outside (0, c0 = {})",
            c0.value
        )));
    }
    let points = c_grid
        .par_iter()
        .map(|&c| {
            let bp = solve_boundary(m, c)?;
            if bp.valid {
                Ok(bp)
            } else {
                Err(Error::Validation {
                    location: c,
                    violation: bp.g_prime - 1.0,
                    message: format!(
                        "boundary point at c = {c} failed validity checks {:?}",
                        bp.checks
                    ),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    for w in points.windows(2) {
        let (p, q) = (&w[0], &w[1]);
        let checks = [
            (q.f < p.f, q.f - p.f, "F not strictly decreasing"),
            (q.g > p.g, p.g - q.g, "G not strictly increasing"),
            (
                q.g - q.c > p.g - p.c,
                (p.g - p.c) - (q.g - q.c),
                "G - c not strictly increasing",
            ),
        ];
        for (ok, violation, message) in checks {
            if !ok {
                return Err(Error::Validation {
                    location: q.c,
                    violation,
                    message: message.to_string(),
                });
            }
        }
    }
    Ok(BoundaryTable {
        params: *m.params(),
        c_grid: c_grid.to_vec(),
        points,
        c0: Some(c0.value),
        c2: (!c2.truncated).then_some(c2.value),
        c2_truncated: c2.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> Model {
        Model::new(ModelParams::new(1.0, 1.0, 0.9).unwrap()).unwrap()
    }

    #[test]
    fn helper_values() {
        let m = reference();
        assert!(left_slope(&m, m.f0()).abs() < 1e-14);
        assert!((left_slope(&m, 0.0) + 0.45).abs() < 1e-14);
        let root = 0.5 / 0.9 - 1.0 / 2f64.sqrt();
        assert!(slope_source(&m, root).abs() < 1e-15);
        assert!(
            (left_slope(&m, 0.3) - m.transformed_stop_slope(m.psi(0.3)).unwrap()).abs() < 1e-13
        );
    }

    #[test]
    fn left_slope_inverse_ends_and_domain() {
        let m = reference();
        assert_eq!(left_slope_inv(&m, 0.0).unwrap(), m.f0());
        assert_eq!(left_slope_inv(&m, -0.45).unwrap(), 0.0);
        assert!(matches!(left_slope_inv(&m, 0.01), Err(Error::Domain(_))));
        assert!(matches!(left_slope_inv(&m, -0.5), Err(Error::Domain(_))));
        assert!(left_slope_inv(&m, -0.3).unwrap() < left_slope_inv(&m, -0.2).unwrap());
    }

    #[test]
    fn drift_special_values() {
        let m = reference();
        assert!(gap_drift(&m, 0.5, 0.5).abs() < 1e-14);
        for z in [0.1, 0.3, 0.9] {
            let expect = (z * 2f64.sqrt()).exp() * (1.0 - 2.0 * z);
            assert!((gap_drift(&m, z, z) - expect).abs() < 1e-13);
        }
        assert!(gap_drift_dx(&m, 0.5, 0.45) > 0.0);
    }

    #[test]
    fn drift_derivative_matches_difference_quotient() {
        let m = reference();
        for (x, z) in [(0.5, 0.45), (0.52, 0.49), (0.3, 0.1)] {
            let h = 1e-6;
            let fd = (gap_drift(&m, x + h, z) - gap_drift(&m, x - h, z)) / (2.0 * h);
            assert!((fd - gap_drift_dx(&m, x, z)).abs() < 1e-7);
        }
    }

    #[test]
    fn solve_at_small_fuel() {
        let m = reference();
        let bp = solve_boundary(&m, 0.02).unwrap();
        assert!(bp.valid);
        assert!(bp.f > 0.45 && bp.f < 0.5);
        assert!(bp.g > 0.51 && bp.g < m.f0() + 0.02);
        assert!(bp.a < 0.0 && bp.b < 0.0);
        assert!(tangency_gap(&m, bp.g, 0.02).unwrap().abs() < 1e-12);
        assert!((right_slope(&m, bp.g, 0.02) - bp.a).abs() < 1e-10);
        assert!((right_intercept(&m, bp.g, 0.02) - bp.b).abs() < 1e-10);
        assert!(tangency_gap_dx(&m, bp.g, 0.02).unwrap() < 0.0);
    }

    #[test]
    fn rejects_bad_fuel_and_regime() {
        let m = reference();
        assert!(solve_boundary(&m, 0.0).is_err());
        assert!(solve_boundary(&m, -1.0).is_err());
        let open = Model::new(ModelParams::new(1.0, 1.0, 0.55).unwrap()).unwrap();
        assert!(solve_boundary(&open, 0.02).unwrap_err().is_regime());
    }

    #[test]
    fn extents_are_positive() {
        let m = reference();
        let c2 = find_c2(&m, &ExtentOptions::default()).unwrap();
        assert!(c2.value > 0.0);
        let c0 = find_c0(&m, &ExtentOptions::default()).unwrap();
        assert!(c0.value > 0.0 && c0.value <= c2.value);
        assert!(!c0.truncated);
    }

    #[test]
    fn empty_table() {
        let m = reference();
        let t = boundary_table(&m, &[]).unwrap();
        assert!(t.points.is_empty());
        assert_eq!(t.to_csv(), "c,F,G,A,B,G_prime\n");
    }

    proptest! {
        #[test]
        fn left_slope_inverse_round_trip(u in 0.0f64..1.0) {
            let m = reference();
            let x = u * m.f0();
            let back = left_slope_inv(&m, left_slope(&m, x)).unwrap();
            prop_assert!((back - x).abs() < 1e-10);
        }

        #[test]
        fn drift_displays_agree(x in -1.0f64..3.0, z in -1.0f64..3.0) {
            let m = reference();
            let a = gap_drift(&m, x, z);
            let b = gap_drift_expanded(&m, x, z);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
        }
    }
}
