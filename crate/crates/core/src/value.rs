//! Closed-form value functions and the verification fields `U` and `R`.
//!
//! `Ṽ` is the value of the control problem with the running cost folded in;
//! `V = Ṽ − λ/α² − (λ/α)x²` is the value of the equivalent stopping problem
//! with obstacle `h`. All natural-scale evaluators are even in `x`.

use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryPoint;
use crate::error::{Error, Result};
use crate::model::Model;

/// `Ṽ₀(x)`: value with no fuel.
pub fn v0_tilde(m: &Model, x: f64) -> f64 {
    let x = x.abs();
    let (a, d, l) = adl(m);
    if x <= m.f0() {
        d * x * x
    } else {
        l / (a * a) + (l / a) * x * x + m.b0() * (-x * m.sqrt2a()).exp()
    }
}

/// `dṼ₀/dx` for `x ≥ 0`.
pub fn v0_tilde_dx(m: &Model, x: f64) -> f64 {
    let (a, d, l) = adl(m);
    if x <= m.f0() {
        2.0 * d * x
    } else {
        2.0 * (l / a) * x - m.sqrt2a() * m.b0() * (-x * m.sqrt2a()).exp()
    }
}

/// `W₀(y)`: `H_l` on `[1, Ψ(f₀)]`, the constant `B₀` beyond.
pub fn w0(m: &Model, y: f64) -> Result<f64> {
    if !(y >= 1.0) {
        return Err(Error::domain(format!("w0 requires y >= 1, got {y}")));
    }
    if y <= m.psi(m.f0()) {
        m.transformed_stop(y)
    } else {
        Ok(m.b0())
    }
}

fn adl(m: &Model) -> (f64, f64, f64) {
    let p = m.params();
    (p.alpha, p.delta, p.lambda)
}

/// `λ/α² + (λ/α)x²`, the discounted running cost of never stopping.
pub fn running_cost_value(m: &Model, x: f64) -> f64 {
    let (a, _, l) = adl(m);
    l / (a * a) + (l / a) * x * x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Stop,
    Continue,
    Act,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Stop => "stop",
            Region::Continue => "continue",
            Region::Act => "act",
        }
    }
}

pub fn region(bp: &BoundaryPoint, x: f64) -> Region {
    let x = x.abs();
    if x <= bp.f {
        Region::Stop
    } else if x >= bp.g {
        Region::Act
    } else {
        Region::Continue
    }
}

/// Branch values of `Ṽ(·;c)`: stop, continuation and act formulas.
fn v_stop(m: &Model, x: f64) -> f64 {
    m.delta() * x * x
}

fn v_continue(m: &Model, bp: &BoundaryPoint, x: f64) -> f64 {
    let s = m.sqrt2a();
    running_cost_value(m, x) + bp.a * (x * s).exp() + bp.b * (-x * s).exp()
}

fn v_act(m: &Model, bp: &BoundaryPoint, x: f64) -> f64 {
    v0_tilde(m, x - bp.c) + bp.c
}

fn v_continue_dx(m: &Model, bp: &BoundaryPoint, x: f64) -> f64 {
    let s = m.sqrt2a();
    2.0 * (m.lambda() / m.alpha()) * x + s * (bp.a * (x * s).exp() - bp.b * (-x * s).exp())
}

/// `Ṽ(x;c)`.
pub fn v_tilde(m: &Model, bp: &BoundaryPoint, x: f64) -> f64 {
    let x = x.abs();
    match region(bp, x) {
        Region::Stop => v_stop(m, x),
        Region::Continue => v_continue(m, bp, x),
        Region::Act => v_act(m, bp, x),
    }
}

/// `∂Ṽ/∂x (x;c)` for `x ≥ 0`.
pub fn v_tilde_dx(m: &Model, bp: &BoundaryPoint, x: f64) -> f64 {
    match region(bp, x) {
        Region::Stop => 2.0 * m.delta() * x,
        Region::Continue => v_continue_dx(m, bp, x),
        Region::Act => v0_tilde_dx(m, x - bp.c),
    }
}

/// Value and slope mismatches of the two adjacent branches of `Ṽ` at `F`
/// and at `G`: `[(ΔṼ(F), ΔṼ'(F)), (ΔṼ(G), ΔṼ'(G))]`.
pub fn smooth_fit_mismatch(m: &Model, bp: &BoundaryPoint) -> [(f64, f64); 2] {
    let (f, g) = (bp.f, bp.g);
    [
        (
            v_stop(m, f) - v_continue(m, bp, f),
            2.0 * m.delta() * f - v_continue_dx(m, bp, f),
        ),
        (
            v_act(m, bp, g) - v_continue(m, bp, g),
            v0_tilde_dx(m, g - bp.c) - v_continue_dx(m, bp, g),
        ),
    ]
}

/// `V(x;c) = Ṽ(x;c) − λ/α² − (λ/α)x²`.
pub fn v(m: &Model, bp: &BoundaryPoint, x: f64) -> f64 {
    v_tilde(m, bp, x) - running_cost_value(m, x)
}

/// `W(y;c)`: `H_l` up to `Ψ(F)`, the common tangent up to `Ψ(G)`, `H_r` beyond.
pub fn w(m: &Model, bp: &BoundaryPoint, y: f64) -> Result<f64> {
    if !(y >= 1.0) {
        return Err(Error::domain(format!("w requires y >= 1, got {y}")));
    }
    let x = m.psi_inv(y)?;
    if x <= bp.f {
        m.transformed_stop(y)
    } else if x < bp.g {
        Ok(bp.a * y + bp.b)
    } else {
        m.transformed_spend(y, bp.c)
    }
}

/// `U = Ṽ_x + Ṽ_c`, with the continuation branch fixed by `U(F) = 2δF` and
/// `U(G) = 1`.
pub fn u_field(m: &Model, bp: &BoundaryPoint, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("u_field requires x >= 0, got {x}")));
    }
    match region(bp, x) {
        Region::Stop => Ok(2.0 * m.delta() * x),
        Region::Act => Ok(1.0),
        Region::Continue => {
            let (p, q) = u_coefficients(m, bp)?;
            let s = m.sqrt2a();
            Ok(2.0 * (m.lambda() / m.alpha()) * x
                + p * ((x - bp.g) * s).exp()
                + q * (-(x - bp.f) * s).exp())
        }
    }
}

/// Coefficients `(P, Q)` of `U = 2λx/α + P e^{s(x−G)} + Q e^{−s(x−F)}` on `(F, G)`.
fn u_coefficients(m: &Model, bp: &BoundaryPoint) -> Result<(f64, f64)> {
    let s = m.sqrt2a();
    let r = (-(bp.g - bp.f) * s).exp();
    let det = 1.0 - r * r;
    if !(bp.g > bp.f) || det <= 0.0 {
        return Err(Error::Degenerate(format!(
            "boundaries coincide (F = {}, G = {})",
            bp.f, bp.g
        )));
    }
    let k = 2.0 * m.lambda() / m.alpha();
    let u_f = 2.0 * m.delta() * bp.f - k * bp.f;
    let u_g = 1.0 - k * bp.g;
    Ok(((u_g - r * u_f) / det, (u_f - r * u_g) / det))
}

/// `R = ½Ṽ_xx + λx² − αṼ`, undefined at `F`, `G` and `f₀ + c`.
pub fn r_field(m: &Model, bp: &BoundaryPoint, x: f64) -> Result<f64> {
    let x = x.abs();
    let c = bp.c;
    let top = m.spend_switch(c);
    if x == bp.f || x == bp.g || x == top {
        return Err(Error::Breakpoint(x));
    }
    let (a, d, l) = adl(m);
    Ok(if x < bp.f {
        d - (a * d - l) * x * x
    } else if x < bp.g {
        0.0
    } else if x < top {
        d + l * x * x - a * (d * (x - c) * (x - c) + c)
    } else {
        2.0 * l * c * (x - (c / 2.0 + a / (2.0 * l)))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueProfile {
    pub c: f64,
    pub xs: Vec<f64>,
    pub v_tilde: Vec<f64>,
    pub v: Vec<f64>,
    pub obstacle: Vec<f64>,
    pub region: Vec<Region>,
}

impl ValueProfile {
    pub const CSV_HEADER: &'static str = "x,v_tilde,v,obstacle,region";

    /// Samples `Ṽ(·;c)` with its obstacle; `bp = None` gives the no-fuel
    /// problem, whose obstacle is `h_l` and whose stopping set is `[0, f₀]`.
    pub fn build(m: &Model, bp: Option<&BoundaryPoint>, xs: &[f64]) -> Result<ValueProfile> {
        let mut p = ValueProfile {
            c: bp.map_or(0.0, |b| b.c),
            xs: xs.to_vec(),
            v_tilde: Vec::with_capacity(xs.len()),
            v: Vec::with_capacity(xs.len()),
            obstacle: Vec::with_capacity(xs.len()),
            region: Vec::with_capacity(xs.len()),
        };
        for &x in xs {
            let (vt, obs, reg) = match bp {
                Some(bp) => (v_tilde(m, bp, x), m.obstacle(x.abs(), bp.c)?, region(bp, x)),
                None => {
                    let reg = if x.abs() <= m.f0() {
                        Region::Stop
                    } else {
                        Region::Continue
                    };
                    (v0_tilde(m, x), m.obstacle_stop(x), reg)
                }
            };
            p.v_tilde.push(vt);
            p.v.push(vt - running_cost_value(m, x));
            p.obstacle.push(obs);
            p.region.push(reg);
        }
        Ok(p)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for i in 0..self.xs.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                self.xs[i],
                self.v_tilde[i],
                self.v[i],
                self.obstacle[i],
                self.region[i].label()
            ));
        }
        out
    }
}
