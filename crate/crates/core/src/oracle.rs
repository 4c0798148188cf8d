//! Brute-force solvers that share nothing with the tangency construction:
//! a lower convex hull of the sampled transformed obstacle, and projected SOR
//! on the discretised obstacle problem in the natural scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorantResult {
    /// Uniform natural-scale grid on `[0, x_max]`.
    pub x_grid: Vec<f64>,
    /// `Ψ(x_grid)`.
    pub y_grid: Vec<f64>,
    /// Minorant sampled on `y_grid`.
    pub w: Vec<f64>,
    /// Transformed obstacle sampled on `y_grid`.
    pub obstacle: Vec<f64>,
    /// Index of the last contact point of the left block.
    pub left_index: usize,
    /// Index of the first contact point of the right block (absent for `c = 0`).
    pub right_index: Option<usize>,
    pub contact_left: f64,
    pub contact_right: Option<f64>,
    /// Slope of the hull segment bridging the two blocks.
    pub bridge_slope: Option<f64>,
    /// Natural-scale grid step.
    pub step: f64,
}

impl MinorantResult {
    pub const CSV_HEADER: &'static str = "y,w";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (y, w) in self.y_grid.iter().zip(&self.w) {
            out.push_str(&format!("{y:.16e},{w:.16e}\n"));
        }
        out
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Indices of the lower convex hull of points sorted by abscissa.
pub fn lower_hull(pts: &[(f64, f64)]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            if cross(pts[a], pts[b], pts[i]) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Greatest non-positive convex minorant of `H(·;c)` on a uniform `x`-grid.
///
/// A non-positive convex function on `[1, ∞)` is non-increasing, so
/// `W(y) ≤ min_{z≤y} H(z)`; the samples are first replaced by that running
/// minimum (capped at 0), which makes truncation at `x_max` exact.
pub fn minorant_oracle(m: &Model, c: f64, n_points: usize, x_max: f64) -> Result<MinorantResult> {
    if c < 0.0 || !c.is_finite() {
        return Err(Error::domain(format!("fuel level must be >= 0, got {c}")));
    }
    if n_points < 10 {
        return Err(Error::Resolution(format!(
            "{n_points} grid points cannot resolve the contact set"
        )));
    }
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(Error::domain(format!("x_max must be > 0, got {x_max}")));
    }
    let s = m.sqrt2a();
    let step = x_max / (n_points - 1) as f64;
    let x_grid: Vec<f64> = (0..n_points).map(|i| i as f64 * step).collect();
    let y_grid: Vec<f64> = x_grid.iter().map(|&x| m.psi(x)).collect();
    let obstacle = x_grid
        .iter()
        .map(|&x| {
            let h = if c == 0.0 {
                m.obstacle_stop(x)
            } else {
                m.obstacle(x, c)?
            };
            Ok((x * s).exp() * h)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut capped = obstacle.clone();
    let mut run = 0.0f64;
    for v in capped.iter_mut() {
        run = run.min(*v);
        *v = run;
    }
    let pts: Vec<(f64, f64)> = y_grid.iter().copied().zip(capped.iter().copied()).collect();
    let hull = lower_hull(&pts);

    let mut w = vec![0.0; n_points];
    for seg in hull.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let slope = (pts[b].1 - pts[a].1) / (pts[b].0 - pts[a].0);
        for i in a..=b {
            w[i] = pts[a].1 + slope * (pts[i].0 - pts[a].0);
        }
    }
    if let Some(i) = w.iter().position(|&v| v > 0.0) {
        return Err(Error::Validation {
            location: y_grid[i],
            violation: w[i],
            message: "minorant is positive".into(),
        });
    }

    if c == 0.0 {
        // The strictly convex block ends at the minimum of H_l; the hull is flat beyond.
        let left_index = (0..n_points)
            .min_by(|&a, &b| obstacle[a].total_cmp(&obstacle[b]))
            .unwrap_or(0);
        return Ok(MinorantResult {
            contact_left: y_grid[left_index],
            x_grid,
            y_grid,
            w,
            obstacle,
            left_index,
            right_index: None,
            contact_right: None,
            bridge_slope: None,
            step,
        });
    }

    // Contact points are hull vertices where the hull touches the raw obstacle;
    // the bridge between the two blocks is the widest gap between them.
    let contacts: Vec<usize> = hull
        .iter()
        .copied()
        .filter(|&i| capped[i] == obstacle[i])
        .collect();
    let bridge = contacts
        .windows(2)
        .max_by_key(|w| w[1] - w[0])
        .filter(|w| w[1] - w[0] > 1)
        .ok_or_else(|| {
            Error::Resolution(format!(
                "{n_points} grid points resolve a single contact block at c = {c}"
            ))
        })?;
    let (left_index, right_index) = (bridge[0], bridge[1]);
    let bridge_slope =
        (pts[right_index].1 - pts[left_index].1) / (pts[right_index].0 - pts[left_index].0);
    Ok(MinorantResult {
        contact_left: y_grid[left_index],
        contact_right: Some(y_grid[right_index]),
        x_grid,
        y_grid,
        w,
        obstacle,
        left_index,
        right_index: Some(right_index),
        bridge_slope: Some(bridge_slope),
        step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Relaxation {
    Fixed(f64),
    /// `ω = 2/(1 + sin(π/(N+1)))` with `N` the current number of free nodes.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsorOptions {
    pub relaxation: Relaxation,
    /// Stop once the largest update in a sweep falls below this.
    pub tol: f64,
    /// Defaults to `200·n_nodes` when absent.
    pub max_iter: Option<usize>,
    /// After the sweeps converge, fix the active set by policy iteration with
    /// an exact tridiagonal solve, removing the sweep tolerance from `v`.
    pub polish: bool,
}

impl Default for PsorOptions {
    fn default() -> Self {
        PsorOptions {
            relaxation: Relaxation::Adaptive,
            tol: 1e-12,
            max_iter: None,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcpResult {
    pub x_grid: Vec<f64>,
    pub v: Vec<f64>,
    pub obstacle: Vec<f64>,
    pub stop_mask: Vec<bool>,
    pub iterations: usize,
    /// Largest `|min(h − v, (ℒ_h − α)v)|` over interior nodes.
    pub residual: f64,
    pub step: f64,
}

impl LcpResult {
    pub const CSV_HEADER: &'static str = "x,v,stop";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for i in 0..self.x_grid.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{}\n",
                self.x_grid[i], self.v[i], self.stop_mask[i] as u8
            ));
        }
        out
    }

    /// Maximal runs of continuation nodes as `(first, last)` index pairs.
    pub fn free_runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &stop) in self.stop_mask.iter().enumerate() {
            match (stop, start) {
                (false, None) => start = Some(i),
                (true, Some(a)) => {
                    runs.push((a, i - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(a) = start {
            runs.push((a, self.stop_mask.len() - 1));
        }
        runs
    }
}

/// Obstacle used by the oracles: `h(·;c)`, or `h_l` for the no-fuel problem.
pub fn oracle_obstacle(m: &Model, x: f64, c: f64) -> Result<f64> {
    if c == 0.0 {
        Ok(m.obstacle_stop(x))
    } else {
        m.obstacle(x, c)
    }
}

/// Projected SOR for `v ≤ h`, `(½D² − α)v ≥ 0`, complementary, on a uniform
/// grid with both ends pinned to the obstacle.
pub fn psor_oracle(
    m: &Model,
    c: f64,
    n_nodes: usize,
    x_max: f64,
    opts: &PsorOptions,
) -> Result<LcpResult> {
    psor_oracle_on(m, c, 0.0, x_max, n_nodes, opts)
}

/// [`psor_oracle`] on the grid `x_min + ih`, `h = (x_max − x_min)/(n_nodes − 1)`.
/// Both ends must lie in the stopping set.
pub fn psor_oracle_on(
    m: &Model,
    c: f64,
    x_min: f64,
    x_max: f64,
    n_nodes: usize,
    opts: &PsorOptions,
) -> Result<LcpResult> {
    let obstacle_at = |x: f64| oracle_obstacle(m, x, c);
    psor_with_obstacle(m.alpha(), obstacle_at, x_min, x_max, n_nodes, opts)
}

/// [`psor_oracle_on`] for an arbitrary obstacle.
pub fn psor_with_obstacle<H>(
    alpha: f64,
    obstacle_at: H,
    x_min: f64,
    x_max: f64,
    n_nodes: usize,
    opts: &PsorOptions,
) -> Result<LcpResult>
where
    H: Fn(f64) -> Result<f64>,
{
    if n_nodes < 3 {
        return Err(Error::Resolution(format!("{n_nodes} nodes is too few")));
    }
    if !(x_min >= 0.0 && x_max > x_min && x_max.is_finite()) {
        return Err(Error::domain(format!(
            "need 0 <= x_min < x_max, got [{x_min}, {x_max}]"
        )));
    }
    if let Relaxation::Fixed(w) = opts.relaxation {
        if !(w > 0.0 && w < 2.0) {
            return Err(Error::domain(format!(
                "relaxation factor must lie in (0, 2), got {w}"
            )));
        }
    }
    let h = (x_max - x_min) / (n_nodes - 1) as f64;
    let x_grid: Vec<f64> = (0..n_nodes).map(|i| x_min + i as f64 * h).collect();
    let obstacle = x_grid
        .iter()
        .map(|&x| obstacle_at(x))
        .collect::<Result<Vec<f64>>>()?;
    let mut v = obstacle.clone();
    let off = 0.5 / (h * h);
    let diag = 1.0 / (h * h) + alpha;
    let gs_weight = off / diag;
    let max_iter = opts.max_iter.unwrap_or(200 * n_nodes);
    let mut free = 0usize;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let omega = match opts.relaxation {
            Relaxation::Fixed(w) => w,
            Relaxation::Adaptive => {
                2.0 / (1.0 + (std::f64::consts::PI / (free as f64 + 1.0)).sin())
            }
        };
        change = 0.0;
        free = 0;
        for i in 1..n_nodes - 1 {
            let gs = (v[i - 1] + v[i + 1]) * gs_weight;
            let old = v[i];
            let new = (old + omega * (gs - old)).min(obstacle[i]);
            v[i] = new;
            change = change.max((new - old).abs());
            if new < obstacle[i] {
                free += 1;
            }
        }
        if change < opts.tol {
            break;
        }
    }
    if change >= opts.tol {
        return Err(Error::Convergence {
            iterations,
            residual: change,
        });
    }
    if opts.polish {
        policy_iteration(&mut v, &obstacle, gs_weight)?;
    }
    let mut residual = 0.0f64;
    for i in 1..n_nodes - 1 {
        let lv = off * (v[i - 1] + v[i + 1]) - diag * v[i];
        residual = residual.max((obstacle[i] - v[i]).min(lv).abs());
    }
    let stop_mask = v.iter().zip(&obstacle).map(|(a, b)| a >= b).collect();
    Ok(LcpResult {
        x_grid,
        v,
        obstacle,
        stop_mask,
        iterations,
        residual,
        step: h,
    })
}

/// Howard's algorithm on `min(h − v, gs(v) − v) = 0`, started from `v`.
fn policy_iteration(v: &mut [f64], obstacle: &[f64], gs_weight: f64) -> Result<()> {
    let n = v.len();
    let mut active: Vec<bool> = (0..n)
        .map(|i| i == 0 || i == n - 1 || v[i] >= obstacle[i])
        .collect();
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for round in 0..100 {
        // Rows: active v_i = h_i; free v_i − w(v_{i−1} + v_{i+1}) = 0.
        for i in 0..n {
            let (a, b, c, d) = if active[i] {
                (0.0, 1.0, 0.0, obstacle[i])
            } else {
                (-gs_weight, 1.0, -gs_weight, 0.0)
            };
            if i == 0 {
                c_prime[i] = c / b;
                d_prime[i] = d / b;
            } else {
                let denom = b - a * c_prime[i - 1];
                c_prime[i] = c / denom;
                d_prime[i] = (d - a * d_prime[i - 1]) / denom;
            }
        }
        v[n - 1] = d_prime[n - 1];
        for i in (0..n - 1).rev() {
            v[i] = d_prime[i] - c_prime[i] * v[i + 1];
        }
        let mut changed = false;
        for i in 1..n - 1 {
            let gs = gs_weight * (v[i - 1] + v[i + 1]);
            let want = obstacle[i] <= gs;
            if want != active[i] {
                active[i] = want;
                changed = true;
            }
        }
        if !changed {
            for i in 0..n {
                if active[i] {
                    v[i] = obstacle[i];
                }
            }
            return Ok(());
        }
        if round == 99 {
            break;
        }
    }
    Err(Error::Convergence {
        iterations: 100,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn reference() -> Model {
        Model::new(ModelParams::new(1.0, 1.0, 0.9).unwrap()).unwrap()
    }

    #[test]
    fn hull_of_square_corners() {
        let pts = [(0.0, 0.0), (1.0, -1.0), (2.0, -1.5), (3.0, 0.0), (4.0, 2.0)];
        assert_eq!(lower_hull(&pts), vec![0, 1, 2, 3, 4]);
        let pts = [(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)];
        assert_eq!(lower_hull(&pts), vec![0, 2]);
    }

    #[test]
    fn minorant_without_fuel() {
        let m = reference();
        let r = minorant_oracle(&m, 0.0, 20_001, m.f0() + 1.0).unwrap();
        assert!(r.contact_right.is_none());
        assert!((r.x_grid[r.left_index] - m.f0()).abs() <= 2.0 * r.step);
        let tail = r.w.last().copied().unwrap();
        assert!((tail - m.b0()).abs() < 1e-6);
    }

    #[test]
    fn coarse_minorant_is_a_resolution_error() {
        let m = reference();
        let err = minorant_oracle(&m, 0.02, 12, m.f0() + 1.02).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)), "{err}");
    }

    #[test]
    fn psor_rejects_bad_relaxation() {
        let m = reference();
        let opts = PsorOptions {
            relaxation: Relaxation::Fixed(2.5),
            ..PsorOptions::default()
        };
        assert!(psor_oracle(&m, 0.02, 101, 4.0, &opts).is_err());
    }

    #[test]
    fn psor_iteration_cap() {
        let m = reference();
        let opts = PsorOptions {
            relaxation: Relaxation::Fixed(1.5),
            tol: 1e-14,
            max_iter: Some(3),
            polish: false,
        };
        assert!(matches!(
            psor_oracle(&m, 0.02, 2001, 4.0, &opts),
            Err(Error::Convergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn psor_free_set_is_one_interval() {
        let m = reference();
        let r = psor_oracle(&m, 0.05, 4001, 4.0, &PsorOptions::default()).unwrap();
        let runs = r.free_runs();
        assert_eq!(runs.len(), 1, "{runs:?}");
        assert!(r.v.iter().zip(&r.obstacle).all(|(v, o)| v <= o));
    }
}
