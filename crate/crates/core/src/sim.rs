//! Monte Carlo cost of the three-part policy: stop at or below `F(c)`, spend
//! all fuel at or above `G(c)` and continue as in the no-fuel problem
//! (stopping at or below `f₀`), otherwise wait.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryPoint;
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub antithetic: bool,
    pub x0: f64,
    pub fuel: f64,
}

impl SimConfig {
    pub fn validate(&self, alpha: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::domain(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon >= 10.0 / alpha) {
            return Err(Error::domain(format!(
                "horizon {} is below 10/alpha = {}",
                self.horizon,
                10.0 / alpha
            )));
        }
        if self.n_paths == 0 || (self.antithetic && !self.n_paths.is_multiple_of(2)) {
            return Err(Error::domain(format!(
                "n_paths = {} must be positive, and even with antithetic pairs",
                self.n_paths
            )));
        }
        if !(self.x0 >= 0.0 && self.x0.is_finite()) {
            return Err(Error::domain(format!("x0 must be >= 0, got {}", self.x0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_cost: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub n_jumped: usize,
    /// Paths that ended by stopping, before or after spending the fuel.
    pub n_stopped_left: usize,
    pub truncated: usize,
    /// Upper bound on the expected cost discarded by truncation.
    pub tail_bound: f64,
    /// `dt ≥ (G − F)²/16`: steps are coarse relative to the continuation band.
    pub coarse_step: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct PathOutcome {
    cost: f64,
    jumped: bool,
    truncated: bool,
    tail: f64,
}

#[derive(Debug, Clone, Copy)]
struct Policy {
    alpha: f64,
    delta: f64,
    lambda: f64,
    f: f64,
    g: f64,
    f0: f64,
    fuel: f64,
}

struct PathState {
    y: f64,
    t: f64,
    cost: f64,
    jumped: bool,
    done: bool,
}

impl Policy {
    fn start(&self, x0: f64) -> PathState {
        let mut st = PathState {
            y: x0,
            t: 0.0,
            cost: 0.0,
            jumped: false,
            done: false,
        };
        self.apply_boundaries(&mut st, 1.0);
        st
    }

    fn apply_boundaries(&self, st: &mut PathState, discount: f64) {
        let a = st.y.abs();
        if !st.jumped {
            if a <= self.f {
                st.cost += discount * self.delta * a * a;
                st.done = true;
                return;
            }
            if a >= self.g {
                st.cost += discount * self.fuel;
                st.y = st.y.signum() * (a - self.fuel);
                st.jumped = true;
            }
        }
        if st.jumped && st.y.abs() <= self.f0 {
            st.cost += discount * self.delta * st.y * st.y;
            st.done = true;
        }
    }

    fn step(&self, st: &mut PathState, dt: f64, z: f64) {
        let y_new = st.y + dt.sqrt() * z;
        let mean_sq = 0.5 * (st.y * st.y + y_new * y_new);
        st.cost += self.lambda * mean_sq * dt * (-self.alpha * (st.t + 0.5 * dt)).exp();
        st.y = y_new;
        st.t += dt;
        self.apply_boundaries(st, (-self.alpha * st.t).exp());
    }

    fn finish(&self, st: &PathState) -> PathOutcome {
        let tail = if st.done {
            0.0
        } else {
            let fuel_left = if st.jumped { 0.0 } else { self.fuel };
            let reach = self.f.max(self.f0);
            (-self.alpha * st.t).exp()
                * (self.lambda / (self.alpha * self.alpha)
                    + (self.lambda / self.alpha) * st.y * st.y
                    + fuel_left
                    + self.delta * reach * reach)
        };
        PathOutcome {
            cost: st.cost,
            jumped: st.jumped,
            truncated: !st.done,
            tail,
        }
    }
}

/// Sum by a fixed binary tree, so the result does not depend on how the
/// summands were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Simulates the policy from `cfg.x0` with fuel `cfg.fuel = bp.c`.
pub fn simulate_policy(m: &Model, bp: &BoundaryPoint, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate(m.alpha())?;
    if !bp.valid {
        return Err(Error::domain(format!(
            "boundary point at c = {} is not valid",
            bp.c
        )));
    }
    if cfg.fuel != bp.c {
        return Err(Error::domain(format!(
            "initial fuel {} does not match the boundary point fuel {}",
            cfg.fuel, bp.c
        )));
    }
    let policy = Policy {
        alpha: m.alpha(),
        delta: m.delta(),
        lambda: m.lambda(),
        f: bp.f,
        g: bp.g,
        f0: m.f0(),
        fuel: bp.c,
    };
    let max_steps = (cfg.horizon / cfg.dt).ceil() as u64;
    let group = if cfg.antithetic { 2 } else { 1 };
    let n_units = cfg.n_paths / group;

    let units: Vec<[PathOutcome; 2]> = (0..n_units)
        .into_par_iter()
        .map(|unit| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(unit as u64);
            let mut states = [policy.start(cfg.x0), policy.start(cfg.x0)];
            let live = &mut states[..group];
            let mut k = 0;
            while k < max_steps && live.iter().any(|s| !s.done) {
                let z: f64 = rng.sample(StandardNormal);
                for (j, st) in live.iter_mut().enumerate() {
                    if !st.done {
                        policy.step(st, cfg.dt, if j == 0 { z } else { -z });
                    }
                }
                k += 1;
            }
            let mut out = [PathOutcome::default(); 2];
            for (j, st) in live.iter().enumerate() {
                out[j] = policy.finish(st);
            }
            out
        })
        .collect();

    let unit_costs: Vec<f64> = units
        .iter()
        .map(|u| u[..group].iter().map(|o| o.cost).sum::<f64>() / group as f64)
        .collect();
    let mean = pairwise_sum(&unit_costs) / n_units as f64;
    let std_error = if n_units > 1 {
        let sq: Vec<f64> = unit_costs.iter().map(|u| (u - mean) * (u - mean)).collect();
        (pairwise_sum(&sq) / ((n_units - 1) * n_units) as f64).sqrt()
    } else {
        0.0
    };
    let outcomes = || units.iter().flat_map(|u| u[..group].iter());
    let truncated = outcomes().filter(|o| o.truncated).count();
    let tails: Vec<f64> = outcomes().map(|o| o.tail).collect();
    Ok(SimResult {
        mean_cost: mean,
        std_error,
        n_paths: cfg.n_paths,
        dt: cfg.dt,
        horizon: cfg.horizon,
        n_jumped: outcomes().filter(|o| o.jumped).count(),
        n_stopped_left: cfg.n_paths - truncated,
        truncated,
        tail_bound: pairwise_sum(&tails) / cfg.n_paths as f64,
        coarse_step: cfg.dt >= (bp.g - bp.f).powi(2) / 16.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::solve_boundary;
    use crate::model::ModelParams;
    use crate::value::{v0_tilde, v_tilde};

    fn setup(c: f64) -> (Model, BoundaryPoint) {
        let m = Model::new(ModelParams::new(1.0, 1.0, 0.9).unwrap()).unwrap();
        let bp = solve_boundary(&m, c).unwrap();
        (m, bp)
    }

    fn config(x0: f64, c: f64) -> SimConfig {
        SimConfig {
            n_paths: 20_000,
            dt: 1e-4,
            horizon: 10.0,
            seed: 11,
            antithetic: true,
            x0,
            fuel: c,
        }
    }

    #[test]
    fn immediate_stop_has_no_variance() {
        let (m, bp) = setup(0.02);
        let r = simulate_policy(&m, &bp, &config(0.3, 0.02)).unwrap();
        assert_eq!(r.mean_cost, 0.09);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.n_stopped_left, r.n_paths);
        assert_eq!(r.n_jumped, 0);
    }

    #[test]
    fn immediate_spend_matches_no_fuel_value() {
        let (m, bp) = setup(0.02);
        let x0 = 0.6;
        let r = simulate_policy(&m, &bp, &config(x0, 0.02)).unwrap();
        assert_eq!(r.n_jumped, r.n_paths);
        let expect = v0_tilde(&m, x0 - 0.02) + 0.02;
        assert!((r.mean_cost - expect).abs() < 1e-12);
        assert_eq!(r.mean_cost, v_tilde(&m, &bp, x0));
    }

    #[test]
    fn seed_determinism() {
        let (m, bp) = setup(0.05);
        let mid = 0.5 * (bp.f + bp.g);
        let a = simulate_policy(&m, &bp, &config(mid, 0.05)).unwrap();
        let b = simulate_policy(&m, &bp, &config(mid, 0.05)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_stopped_left + a.truncated, a.n_paths);
        assert!(a.n_jumped <= a.n_paths && a.std_error >= 0.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let (m, bp) = setup(0.02);
        let mut cfg = config(0.5, 0.02);
        cfg.n_paths = 3;
        assert!(simulate_policy(&m, &bp, &cfg).is_err());
        let mut cfg = config(0.5, 0.02);
        cfg.horizon = 1.0;
        assert!(simulate_policy(&m, &bp, &cfg).is_err());
        let mut cfg = config(0.5, 0.02);
        cfg.fuel = 0.03;
        assert!(simulate_policy(&m, &bp, &cfg).is_err());
        let mut cfg = config(0.5, 0.02);
        cfg.dt = 0.0;
        assert!(simulate_policy(&m, &bp, &cfg).is_err());
    }

    #[test]
    fn pairwise_sum_basics() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
    }
}
