//! Model parameters, derived constants, obstacles and the transformed scale.
//!
//! The driving process is standard Brownian motion with generator
//! `½ d²/dx²`, so with `s = √(2α)` the decreasing and increasing solutions of
//! `(½ d²/dx² − α)u = 0` are `e^{−sx}` and `e^{sx}`, and the scale transform is
//! `Ψ(x) = e^{2sx}`. An obstacle `h` becomes `H(y) = h(x)·e^{sx}` with
//! `x = Ψ⁻¹(y)`, so `e^{sx} = √y`.
//!
//! Three obstacle branches appear:
//!
//! * `stop`: pay `δx²` now, `h_l(x) = (δ − λ/α)x² − λ/α²`;
//! * `spend_stop`: spend all fuel and land inside the no-fuel stopping set,
//!   `h_r1(x;c) = δc(c − 2x) + (δ − λ/α)x² + c − λ/α²` for `x ≤ f₀ + c`;
//! * `spend_wait`: spend all fuel and land in the no-fuel continuation set,
//!   `h_r2(x;c) = (λ/α)c(c − 2x) + c + B₀e^{−s(x−c)}` for `x ≥ f₀ + c`.
//!
//! The full obstacle is `h = min(h_l, h_r)`, which equals `h_l` left of
//! `x_c = 1/(2δ) + c/2` and `h_r` to its right.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Discount rate.
    pub alpha: f64,
    /// Terminal-cost coefficient.
    pub delta: f64,
    /// Running-cost coefficient.
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, delta: f64, lambda: f64) -> Result<Self> {
        let p = ModelParams {
            alpha,
            delta,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("delta", self.delta),
            ("lambda", self.lambda),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Parameter regimes, classified by where `λ` sits relative to `λ*`, `λ†`
/// and `αδ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `λ ∈ (λ†, αδ)`: handled by this crate.
    New,
    /// `λ ∈ (λ*, λ†]`: no moving-boundary candidate of this form.
    Open,
    /// `λ ≤ λ*`: the no-fuel boundary satisfies `f₀ ≤ 1/(2δ)`.
    Prior,
    /// `λ ≥ αδ`: `f₀` and `B₀` are undefined.
    Degenerate,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::New => "new",
            Regime::Open => "open",
            Regime::Prior => "prior",
            Regime::Degenerate => "degenerate",
        }
    }

    pub fn range_description(self) -> &'static str {
        match self {
            Regime::New => "lambda in (lambda_dagger, alpha*delta)",
            Regime::Open => "lambda in (lambda_star, lambda_dagger]; the moving boundaries are not available in this range",
            Regime::Prior => "lambda <= lambda_star; the no-fuel boundary lies at or below 1/(2 delta) and this solver does not apply",
            Regime::Degenerate => "lambda >= alpha*delta; the no-fuel boundary is undefined",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// Free boundary of the no-fuel problem; absent when `λ ≥ αδ`.
    pub f0: Option<f64>,
    pub lambda_star: f64,
    pub lambda_dagger: f64,
    /// No-fuel continuation coefficient; absent when `λ ≥ αδ`.
    pub b0: Option<f64>,
    #[serde(skip)]
    pub sqrt2a: f64,
    pub regime: Regime,
}

/// Closed-form positive root of `ρ`, the no-fuel free boundary.
pub fn no_fuel_boundary(alpha: f64, delta: f64, lambda: f64) -> f64 {
    let ad = alpha * delta;
    (((ad + lambda) / (ad - lambda)).sqrt() - 1.0) / (2.0 * alpha).sqrt()
}

/// The value of `λ` at which `f₀ = 1/(2δ)`.
pub fn lambda_star(alpha: f64, delta: f64) -> f64 {
    let s = (2.0 * alpha).sqrt();
    alpha * delta / (1.0 + (delta / alpha) / (1.0 / (4.0 * delta) + 1.0 / s))
}

/// The unique `λ ∈ (λ*, αδ)` with `f₀(λ) = α/(2λ)`, by bisection.
pub fn lambda_dagger(alpha: f64, delta: f64) -> Result<f64> {
    let ad = alpha * delta;
    let eps = 1e-12 * ad;
    let lo = lambda_star(alpha, delta) + eps;
    let hi = ad - eps;
    let gap = |l: f64| no_fuel_boundary(alpha, delta, l) - alpha / (2.0 * l);
    roots::bisect(gap, lo, hi, 1e-12 * ad, 0.0)
}

pub fn derive_constants(p: &ModelParams) -> Result<DerivedConstants> {
    p.validate()?;
    let ModelParams {
        alpha,
        delta,
        lambda,
    } = *p;
    let s = (2.0 * alpha).sqrt();
    let ad = alpha * delta;
    let l_star = lambda_star(alpha, delta);
    let l_dagger = lambda_dagger(alpha, delta)?;
    let (f0, b0) = if lambda < ad {
        let f0 = no_fuel_boundary(alpha, delta, lambda);
        let b0 = -(2.0 * f0 / (alpha * s)) * (ad - lambda) * (f0 * s).exp();
        (Some(f0), Some(b0))
    } else {
        (None, None)
    };
    let regime = if lambda >= ad {
        Regime::Degenerate
    } else if lambda <= l_star {
        Regime::Prior
    } else if lambda <= l_dagger {
        Regime::Open
    } else {
        Regime::New
    };
    Ok(DerivedConstants {
        f0,
        lambda_star: l_star,
        lambda_dagger: l_dagger,
        b0,
        sqrt2a: s,
        regime,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub y: f64,
    pub v: f64,
}

/// The line `z ↦ slope·z + intercept` in the transformed scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentLine {
    pub slope: f64,
    pub intercept: f64,
}

impl TangentLine {
    pub fn eval(&self, z: f64) -> f64 {
        self.slope * z + self.intercept
    }
}

/// Where the transformed spend obstacle switches from concave to convex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inflection {
    /// Smaller root of `(½d²/dx² − α)h_r1(·;c)` in the natural scale.
    pub x_v: f64,
    /// `max(Ψ(x_c), Ψ(x_v))`.
    pub y_v: f64,
}

/// Value and first two `x`-derivatives of an obstacle branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Jet {
    pub v: f64,
    pub dx: f64,
    pub dxx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Branch {
    Stop,
    SpendStop,
    SpendWait,
}

/// A model in a non-degenerate regime (`λ < αδ`), with `f₀` and `B₀` cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    params: ModelParams,
    constants: DerivedConstants,
    f0: f64,
    b0: f64,
    s: f64,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        let constants = derive_constants(&params)?;
        match (constants.f0, constants.b0) {
            (Some(f0), Some(b0)) => Ok(Model {
                params,
                constants,
                f0,
                b0,
                s: constants.sqrt2a,
            }),
            _ => Err(Error::regime(
                Regime::Degenerate,
                Regime::Degenerate.range_description(),
            )),
        }
    }

    /// Builds a model and refuses anything outside `λ ∈ (λ†, αδ)`.
    pub fn new_regime(params: ModelParams) -> Result<Self> {
        let m = Model::new(params)?;
        m.require_new_regime()?;
        Ok(m)
    }

    pub fn require_new_regime(&self) -> Result<()> {
        let r = self.constants.regime;
        if r == Regime::New {
            Ok(())
        } else {
            Err(Error::regime(
                r,
                format!(
                    "{} (lambda = {}, lambda_star = {:.6}, lambda_dagger = {:.6}, alpha*delta = {})",
                    r.range_description(),
                    self.params.lambda,
                    self.constants.lambda_star,
                    self.constants.lambda_dagger,
                    self.params.alpha * self.params.delta
                ),
            ))
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn constants(&self) -> &DerivedConstants {
        &self.constants
    }

    pub fn regime(&self) -> Regime {
        self.constants.regime
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// `√(2α)`.
    pub fn sqrt2a(&self) -> f64 {
        self.s
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    pub fn delta(&self) -> f64 {
        self.params.delta
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    /// `1/(2δ)`, the common limit of both moving boundaries as `c → 0`.
    pub fn half_inv_delta(&self) -> f64 {
        0.5 / self.params.delta
    }

    /// `x_c = 1/(2δ) + c/2`, where `h_l` and `h_r` cross.
    pub fn crossover(&self, c: f64) -> f64 {
        self.half_inv_delta() + 0.5 * c
    }

    /// `f₀ + c`, where `h_r` switches from `h_r1` to `h_r2`.
    pub fn spend_switch(&self, c: f64) -> f64 {
        self.f0 + c
    }

    pub fn rho(&self, x: f64) -> f64 {
        let ModelParams {
            alpha,
            delta,
            lambda,
        } = self.params;
        x * x + 2.0 * x / self.s - (lambda / alpha) / (alpha * delta - lambda)
    }

    pub fn psi(&self, x: f64) -> f64 {
        (2.0 * self.s * x).exp()
    }

    pub fn psi_inv(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::domain(format!("psi_inv requires y > 0, got {y}")));
        }
        Ok(y.ln() / (2.0 * self.s))
    }

    fn check_fuel(c: f64) -> Result<()> {
        if c < 0.0 || !c.is_finite() {
            return Err(Error::domain(format!("fuel level must be >= 0, got {c}")));
        }
        Ok(())
    }

    pub(crate) fn jet(&self, branch: Branch, x: f64, c: f64) -> Jet {
        let ModelParams {
            alpha,
            delta,
            lambda,
        } = self.params;
        let k = delta - lambda / alpha;
        match branch {
            Branch::Stop => Jet {
                v: k * x * x - lambda / (alpha * alpha),
                dx: 2.0 * k * x,
                dxx: 2.0 * k,
            },
            Branch::SpendStop => Jet {
                v: delta * c * (c - 2.0 * x) + k * x * x + c - lambda / (alpha * alpha),
                dx: -2.0 * delta * c + 2.0 * k * x,
                dxx: 2.0 * k,
            },
            Branch::SpendWait => {
                let e = self.b0 * (-(x - c) * self.s).exp();
                Jet {
                    v: (lambda / alpha) * c * (c - 2.0 * x) + c + e,
                    dx: -2.0 * (lambda / alpha) * c - self.s * e,
                    dxx: 2.0 * alpha * e,
                }
            }
        }
    }

    pub(crate) fn spend_branch(&self, x: f64, c: f64) -> Branch {
        if x <= self.spend_switch(c) {
            Branch::SpendStop
        } else {
            Branch::SpendWait
        }
    }

    pub(crate) fn obstacle_branch(&self, x: f64, c: f64) -> Branch {
        if x <= self.crossover(c) {
            Branch::Stop
        } else {
            self.spend_branch(x, c)
        }
    }

    /// `h_l(x)`: cost (net of the running-cost integral) of stopping at `x`.
    pub fn obstacle_stop(&self, x: f64) -> f64 {
        self.jet(Branch::Stop, x, 0.0).v
    }

    /// `h_r1(x;c)`, the polynomial spend-then-stop branch, evaluated as written.
    pub fn obstacle_spend_stop(&self, x: f64, c: f64) -> f64 {
        self.jet(Branch::SpendStop, x, c).v
    }

    /// `h_r2(x;c)`, the spend-then-wait branch, evaluated as written.
    pub fn obstacle_spend_wait(&self, x: f64, c: f64) -> f64 {
        self.jet(Branch::SpendWait, x, c).v
    }

    /// `h_r(x;c)`.
    pub fn obstacle_spend(&self, x: f64, c: f64) -> Result<f64> {
        Self::check_fuel(c)?;
        Ok(self.jet(self.spend_branch(x, c), x, c).v)
    }

    /// `h(x;c) = min(h_l(x), h_r(x;c))`.
    pub fn obstacle(&self, x: f64, c: f64) -> Result<f64> {
        Self::check_fuel(c)?;
        Ok(self.jet(self.obstacle_branch(x, c), x, c).v)
    }

    fn transformed_branch(&self, branch: Branch, y: f64, c: f64) -> Result<(f64, f64, f64)> {
        let x = self.psi_inv(y)?;
        let j = self.jet(branch, x, c);
        let alpha = self.params.alpha;
        let e = y.sqrt();
        Ok((
            e * j.v,
            (j.dx + self.s * j.v) / (2.0 * self.s * e),
            (0.5 * j.dxx - alpha * j.v) / (4.0 * alpha * e * y),
        ))
    }

    /// `H_l(y)`.
    pub fn transformed_stop(&self, y: f64) -> Result<f64> {
        Ok(self.transformed_branch(Branch::Stop, y, 0.0)?.0)
    }

    /// `dH_l/dy`.
    pub fn transformed_stop_slope(&self, y: f64) -> Result<f64> {
        Ok(self.transformed_branch(Branch::Stop, y, 0.0)?.1)
    }

    /// `d²H_l/dy²`.
    pub fn transformed_stop_curvature(&self, y: f64) -> Result<f64> {
        Ok(self.transformed_branch(Branch::Stop, y, 0.0)?.2)
    }

    /// `H_r(y;c)`.
    pub fn transformed_spend(&self, y: f64, c: f64) -> Result<f64> {
        Self::check_fuel(c)?;
        let x = self.psi_inv(y)?;
        Ok(self.transformed_branch(self.spend_branch(x, c), y, c)?.0)
    }

    /// `∂H_r/∂y`.
    pub fn transformed_spend_slope(&self, y: f64, c: f64) -> Result<f64> {
        Self::check_fuel(c)?;
        let x = self.psi_inv(y)?;
        Ok(self.transformed_branch(self.spend_branch(x, c), y, c)?.1)
    }

    /// `∂²H_r/∂y²` (one-sided from the left at `Ψ(f₀+c)`).
    pub fn transformed_spend_curvature(&self, y: f64, c: f64) -> Result<f64> {
        Self::check_fuel(c)?;
        let x = self.psi_inv(y)?;
        Ok(self.transformed_branch(self.spend_branch(x, c), y, c)?.2)
    }

    /// `H(y;c) = min(H_l(y), H_r(y;c))`.
    pub fn transformed(&self, y: f64, c: f64) -> Result<f64> {
        Self::check_fuel(c)?;
        let x = self.psi_inv(y)?;
        Ok(self.transformed_branch(self.obstacle_branch(x, c), y, c)?.0)
    }

    /// `∂H/∂y`, taking the spend branch at `y = Ψ(x_c)` itself.
    pub fn transformed_slope(&self, y: f64, c: f64) -> Result<f64> {
        Self::check_fuel(c)?;
        let x = self.psi_inv(y)?;
        let branch = if x < self.crossover(c) {
            Branch::Stop
        } else {
            self.spend_branch(x, c)
        };
        Ok(self.transformed_branch(branch, y, c)?.1)
    }

    /// Locates the inflection of the transformed spend obstacle.
    pub fn inflection(&self, c: f64) -> Result<Inflection> {
        if !(c > 0.0) {
            return Err(Error::domain(format!("inflection requires c > 0, got {c}")));
        }
        self.require_new_regime()?;
        let ModelParams {
            alpha,
            delta,
            lambda,
        } = self.params;
        let at_switch = self.generator_spend_stop(self.spend_switch(c), c);
        if !(at_switch > 0.0) {
            return Err(Error::Internal(format!(
                "(L - alpha) h_r1 is not positive at f0 + c (value {at_switch:e})"
            )));
        }
        // k x² − 2b x − r = 0 with k = αδ − λ, b = cαδ, r = δ − cα(δc + 1).
        let k = alpha * delta - lambda;
        let b = c * alpha * delta;
        let r = delta - c * alpha * (delta * c + 1.0);
        let disc = b * b + k * r;
        if disc < 0.0 {
            return Err(Error::Internal(format!("negative discriminant {disc:e}")));
        }
        let root = disc.sqrt();
        // Smaller root, written to avoid cancellation when r is small.
        let x_v = -r / (b + root);
        let y_v = self.psi(self.crossover(c)).max(self.psi(x_v));
        Ok(Inflection { x_v, y_v })
    }

    /// `(½d²/dx² − α) h_l(x) = δ − (αδ − λ)x²`.
    pub fn generator_stop(&self, x: f64) -> f64 {
        let j = self.jet(Branch::Stop, x, 0.0);
        0.5 * j.dxx - self.params.alpha * j.v
    }

    /// `(½d²/dx² − α) h_r1(x;c)`.
    pub fn generator_spend_stop(&self, x: f64, c: f64) -> f64 {
        let j = self.jet(Branch::SpendStop, x, c);
        0.5 * j.dxx - self.params.alpha * j.v
    }

    /// `(½d²/dx² − α) h_r2(x;c)`.
    pub fn generator_spend_wait(&self, x: f64, c: f64) -> f64 {
        let j = self.jet(Branch::SpendWait, x, c);
        0.5 * j.dxx - self.params.alpha * j.v
    }

    /// Tangent to `H(·;c)` at `y` (to `H_r` when `y = Ψ(x_c)`).
    pub fn tangent_at(&self, y: f64, c: f64) -> Result<TangentLine> {
        let value = self.transformed(y, c)?;
        let slope = self.transformed_slope(y, c)?;
        Ok(TangentLine {
            slope,
            intercept: value - y * slope,
        })
    }

    /// Signed distance `sup_{z∈[1,y_c]} (r_y(z) − H_l(z))` between the tangent
    /// at `y` and the stop obstacle.
    pub fn p_r_distance(&self, y: f64, c: f64) -> Result<f64> {
        let line = self.tangent_at(y, c)?;
        let y_c = self.psi(self.crossover(c));
        let gap = |z: f64| line.eval(z) - self.transformed_stop(z).unwrap_or(f64::NAN);
        let (z, mut best) = roots::golden_max(gap, 1.0, y_c, 80);
        // One Newton step on the derivative of the concave gap.
        let d1 = line.slope - self.transformed_stop_slope(z)?;
        let d2 = -self.transformed_stop_curvature(z)?;
        if d2 < 0.0 {
            let z_new = z - d1 / d2;
            if (1.0..=y_c).contains(&z_new) {
                best = best.max(gap(z_new));
            }
        }
        Ok(best)
    }
}
