//! Sum-throughput maximisation over `(q, P0)` in the symmetric network.
//!
//! The objective is not concave, so the search is exhaustive: a coarse grid
//! over the whole box, then rounds of finer grids centred on the incumbent.
//! A point is feasible when the primary service rate at that point strictly
//! exceeds the arrival rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    mu_p_imperfect_symmetric, mu_p_max_symmetric, protection_constraints, secondary_rate_imperfect_symmetric,
    Branch, PowerBound,
};
use crate::config::SymmetricConfig;
use crate::error::{Error, Result};

/// Values closer than this (relative) count as ties.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q_points: usize,
    pub p0_points: usize,
    pub refine_rounds: usize,
    /// Points per axis in each refinement window (odd, centred on the incumbent).
    pub refine_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { q_points: 200, p0_points: 200, refine_rounds: 2, refine_points: 21 }
    }
}

/// Which constraint limits the parameters at the configured operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    None,
    AccessProbability,
    Power,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleBox {
    /// `[0, q_max]` at the configured power.
    pub q_range: (f64, f64),
    /// `[0, min(p0_max, cap)]` at the configured access probability.
    pub p0_range: (f64, f64),
    pub binding: Binding,
    /// Upper end of the power axis that is searched.
    pub search_p0_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveLimit {
    Interior,
    /// A neighbouring grid point with more `q` or `P0` is infeasible.
    Protection,
    HardwareCap,
    ProtectionAndCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub grid: GridSpec,
    pub coarse_q_step: f64,
    pub coarse_p0_step: f64,
    pub final_q_step: f64,
    pub final_p0_step: f64,
    pub evaluated: usize,
    pub feasible: usize,
    /// Incumbent value after the coarse grid and after each refinement round.
    pub round_values: Vec<f64>,
    /// Best coarse-grid value at a point other than the coarse incumbent.
    pub runner_up: Option<f64>,
    pub runner_up_margin: Option<f64>,
    pub active: ActiveLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub q: f64,
    pub p0: f64,
    /// Sum of the secondary throughputs.
    pub value: f64,
    pub feasible_box: FeasibleBox,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, Copy)]
struct Point {
    q: f64,
    p0: f64,
    value: f64,
}

impl Point {
    /// Larger value wins; ties go to smaller `P0`, then smaller `q`.
    fn better_than(&self, o: &Point) -> bool {
        let tol = TIE_TOL * self.value.abs().max(o.value.abs());
        if self.value > o.value + tol {
            return true;
        }
        if self.value < o.value - tol {
            return false;
        }
        (self.p0, self.q) < (o.p0, o.q)
    }
}

struct Problem<'a> {
    cfg: &'a SymmetricConfig,
    lambda_p: f64,
    mu_max: f64,
}

impl Problem<'_> {
    fn at(&self, q: f64, p0: f64) -> SymmetricConfig {
        let mut c = self.cfg.clone();
        c.q = q;
        if p0 > 0.0 {
            // keep a·P0 and the other power ratios fixed by rescaling P0 only
            c.p0 = p0;
        }
        c
    }

    fn feasible(&self, q: f64, p0: f64) -> bool {
        if p0 == 0.0 {
            return self.lambda_p < self.mu_max;
        }
        mu_p_imperfect_symmetric(&self.at(q, p0)) > self.lambda_p
    }

    /// Sum throughput, or `None` when infeasible.
    fn value(&self, q: f64, p0: f64) -> Option<f64> {
        if !self.feasible(q, p0) {
            return None;
        }
        let n = self.cfg.n_secondary as f64;
        if p0 == 0.0 {
            // silent secondaries: only the noiseless idle-slot term survives
            if self.cfg.noise > 0.0 || self.cfg.n_secondary == 0 {
                return Some(0.0);
            }
            let c = self.cfg;
            let busy = self.lambda_p / self.mu_max;
            let qi = q * (1.0 - c.pf);
            let k = c.beta / (c.beta + 1.0);
            return Some(n * (1.0 - busy) * qi * (1.0 - qi * k).powi(c.n_secondary as i32 - 1));
        }
        secondary_rate_imperfect_symmetric(&self.at(q, p0), self.lambda_p).ok().map(|r| n * r)
    }
}

fn axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// Informational box from the closed-form constraints at the configured point.
pub fn feasible_box(cfg: &SymmetricConfig, lambda_p: f64) -> Result<FeasibleBox> {
    let pc = protection_constraints(cfg, lambda_p)?;
    let p0_upper = pc.p0_max.capped(cfg.p0_cap);
    let search_p0_max = match (cfg.p0_cap, pc.p0_max) {
        (Some(cap), _) => cap,
        (None, PowerBound::Finite(v)) => v,
        (None, PowerBound::Unbounded) => {
            return Err(Error::Config(
                "p0_cap is required when the secondary power is otherwise unconstrained".into(),
            ))
        }
    };
    let binding = match (pc.q_max_branch, pc.p0_max_branch) {
        (Branch::Slack, Branch::Slack) => Binding::None,
        (Branch::Binding, Branch::Slack) => Binding::AccessProbability,
        (Branch::Slack, Branch::Binding) => Binding::Power,
        (Branch::Binding, Branch::Binding) => Binding::Both,
    };
    Ok(FeasibleBox {
        q_range: (0.0, pc.q_max.min(1.0)),
        p0_range: (0.0, p0_upper.finite().unwrap_or(search_p0_max)),
        binding,
        search_p0_max,
    })
}

fn best_of(points: &[Point]) -> Option<Point> {
    let mut best: Option<Point> = None;
    for p in points {
        if best.is_none_or(|b| p.better_than(&b)) {
            best = Some(*p);
        }
    }
    best
}

fn evaluate(prob: &Problem, qs: &[f64], ps: &[f64]) -> (Vec<Point>, usize) {
    let pts: Vec<Point> = ps
        .par_iter()
        .flat_map_iter(|&p0| qs.iter().filter_map(move |&q| prob.value(q, p0).map(|value| Point { q, p0, value })))
        .collect();
    (pts, qs.len() * ps.len())
}

/// Maximises the secondary sum throughput over `q ∈ [0, 1]` and
/// `P0 ∈ [0, P0_cap]` subject to primary stability.
pub fn maximize_sum_throughput(cfg: &SymmetricConfig, lambda_p: f64, grid: GridSpec) -> Result<Optimum> {
    cfg.validate()?;
    if grid.q_points < 2 || grid.p0_points < 2 || grid.refine_points < 3 || grid.refine_points.is_multiple_of(2) {
        return Err(Error::Config("grid needs >= 2 coarse points per axis and an odd refine count >= 3".into()));
    }
    let mu_max = mu_p_max_symmetric(cfg);
    if !(lambda_p >= 0.0 && lambda_p < mu_max) {
        return Err(Error::InfeasiblePrimary { lambda_p, mu_p_max: mu_max });
    }
    let fbox = feasible_box(cfg, lambda_p)?;
    let p_hi = fbox.search_p0_max;
    let prob = Problem { cfg, lambda_p, mu_max };

    let qs = axis(0.0, 1.0, grid.q_points);
    let ps = axis(0.0, p_hi, grid.p0_points);
    let (coarse, mut evaluated) = evaluate(&prob, &qs, &ps);
    let mut feasible = coarse.len();
    let mut best = best_of(&coarse).ok_or(Error::InfeasiblePrimary { lambda_p, mu_p_max: mu_max })?;
    let runner_up = coarse
        .iter()
        .filter(|p| (p.q, p.p0) != (best.q, best.p0))
        .map(|p| p.value)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let mut round_values = vec![best.value];

    let mut dq = 1.0 / (grid.q_points - 1) as f64;
    let mut dp = p_hi / (grid.p0_points - 1) as f64;
    let (coarse_dq, coarse_dp) = (dq, dp);
    let half = (grid.refine_points / 2) as i64;
    for _ in 0..grid.refine_rounds {
        let (wq, wp) = (dq, dp);
        dq = wq / half as f64;
        dp = wp / half as f64;
        let rq: Vec<f64> = (-half..=half).map(|k| best.q + k as f64 * dq).filter(|q| (0.0..=1.0).contains(q)).collect();
        let rp: Vec<f64> = (-half..=half)
            .map(|k| best.p0 + k as f64 * dp)
            .filter(|p| (0.0..=p_hi).contains(p))
            .collect();
        let (pts, n) = evaluate(&prob, &rq, &rp);
        evaluated += n;
        feasible += pts.len();
        if let Some(b) = best_of(&pts) {
            if b.better_than(&best) {
                best = b;
            }
        }
        round_values.push(best.value);
    }

    let at_cap = cfg.p0_cap.is_some() && (p_hi - best.p0) <= 0.5 * dp;
    let blocked = (best.q + dq <= 1.0 && !prob.feasible(best.q + dq, best.p0))
        || (best.p0 + dp <= p_hi && !prob.feasible(best.q, best.p0 + dp));
    let active = match (blocked, at_cap) {
        (false, false) => ActiveLimit::Interior,
        (true, false) => ActiveLimit::Protection,
        (false, true) => ActiveLimit::HardwareCap,
        (true, true) => ActiveLimit::ProtectionAndCap,
    };
    Ok(Optimum {
        q: best.q,
        p0: best.p0,
        value: best.value,
        feasible_box: fbox,
        certificate: Certificate {
            grid,
            coarse_q_step: coarse_dq,
            coarse_p0_step: coarse_dp,
            final_q_step: dq,
            final_p0_step: dp,
            evaluated,
            feasible,
            runner_up_margin: runner_up.map(|r| round_values[0] - r),
            runner_up,
            round_values,
            active,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::optimal_q_perfect;
    use crate::config::Scenario;

    fn cfg(n: usize, beta: f64, pe: f64, pf: f64) -> SymmetricConfig {
        Scenario {
            n_secondary: n,
            beta,
            pe,
            pf,
            q: 0.5,
            mu_p_max: 0.6,
            a: 1.0,
            secondary_noise: 0.5,
            interference: 0.3,
            p0_cap: Some(10.0),
            ..Scenario::default()
        }
        .build()
        .unwrap()
    }

    #[test]
    fn perfect_sensing_optimum() {
        let c = cfg(3, 2.0, 0.0, 0.0);
        let o = maximize_sum_throughput(&c, 0.2, GridSpec::default()).unwrap();
        let q_star = optimal_q_perfect(&c).unwrap();
        assert!((o.q - q_star).abs() <= o.certificate.coarse_q_step, "{} vs {q_star}", o.q);
        assert_eq!(o.p0, 10.0);
        assert_eq!(o.certificate.active, ActiveLimit::HardwareCap);
    }

    #[test]
    fn optimum_is_strictly_feasible_and_refinement_is_monotone() {
        let c = cfg(4, 1.0, 0.6, 0.2);
        let lam = 0.45;
        let o = maximize_sum_throughput(&c, lam, GridSpec::default()).unwrap();
        let mut at = c.clone();
        at.q = o.q;
        at.p0 = o.p0;
        assert!(mu_p_imperfect_symmetric(&at) > lam);
        assert!(o.certificate.round_values.windows(2).all(|w| w[1] >= w[0]));
        assert!(o.certificate.runner_up_margin.unwrap() >= 0.0);
    }

    #[test]
    fn matches_fine_brute_force() {
        let c = cfg(2, 1.0, 0.5, 0.1);
        let lam = 0.5;
        let o = maximize_sum_throughput(&c, lam, GridSpec::default()).unwrap();
        let prob = Problem { cfg: &c, lambda_p: lam, mu_max: mu_p_max_symmetric(&c) };
        let mut best = 0.0f64;
        for i in 0..=1000 {
            for k in 0..=1000 {
                if let Some(v) = prob.value(i as f64 / 1000.0, 10.0 * k as f64 / 1000.0) {
                    best = best.max(v);
                }
            }
        }
        assert!(o.value >= best * (1.0 - 1e-3), "{} vs {best}", o.value);
    }

    #[test]
    fn light_load_box_is_full() {
        let c = cfg(3, 1.0, 0.3, 0.1);
        let b = feasible_box(&c, 0.0).unwrap();
        assert_eq!(b.q_range, (0.0, 1.0));
        assert_eq!(b.p0_range, (0.0, 10.0));
        assert_eq!(b.binding, Binding::None);
    }

    #[test]
    fn infeasible_load() {
        let c = cfg(3, 1.0, 0.3, 0.1);
        assert!(matches!(
            maximize_sum_throughput(&c, 0.6, GridSpec::default()),
            Err(Error::InfeasiblePrimary { .. })
        ));
    }
}
