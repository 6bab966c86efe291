use serde::{Deserialize, Serialize};

use super::check_lambda;
use super::perfect::mu_p_max_symmetric;
use crate::config::SymmetricConfig;
use crate::error::{Error, Result};

/// Maximum secondary power; may be unbounded when the primary is lightly
/// loaded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerBound {
    Unbounded,
    Finite(f64),
}

impl PowerBound {
    pub fn is_unbounded(&self) -> bool {
        matches!(self, PowerBound::Unbounded)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            PowerBound::Finite(v) => Some(v),
            PowerBound::Unbounded => None,
        }
    }

    /// Combines with a hardware cap.
    pub fn capped(&self, cap: Option<f64>) -> PowerBound {
        match (*self, cap) {
            (PowerBound::Unbounded, Some(c)) => PowerBound::Finite(c),
            (PowerBound::Finite(v), Some(c)) => PowerBound::Finite(v.min(c)),
            (b, None) => b,
        }
    }
}

/// Which piece of a piecewise constraint applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// The constraint does not restrict the parameter.
    Slack,
    /// The closed-form limit applies.
    Binding,
}

/// Largest secondary parameters that keep the primary queue stable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtectionConstraints {
    pub a_min: f64,
    pub a_min_branch: Branch,
    pub q_max: f64,
    pub q_max_branch: Branch,
    pub p0_max: PowerBound,
    pub p0_max_branch: Branch,
}

/// Minimum power ratio `a`, maximum access probability at the configured `a`,
/// and maximum secondary power at the configured `q`.
pub fn protection_constraints(cfg: &SymmetricConfig, lambda_p: f64) -> Result<ProtectionConstraints> {
    check_lambda(lambda_p)?;
    let mu_max = mu_p_max_symmetric(cfg);
    if lambda_p >= mu_max {
        return Err(Error::InfeasiblePrimary { lambda_p, mu_p_max: mu_max });
    }
    let n = cfg.n_secondary;
    if n == 0 {
        return Ok(ProtectionConstraints {
            a_min: 0.0,
            a_min_branch: Branch::Slack,
            q_max: 1.0,
            q_max_branch: Branch::Slack,
            p0_max: PowerBound::Unbounded,
            p0_max_branch: Branch::Slack,
        });
    }
    let rho = (lambda_p / mu_max).powf(1.0 / n as f64);
    let qpe = cfg.q * cfg.pe;
    let a = cfg.a();
    let ni = n as i32;

    // below this load even infinite secondary power keeps the primary stable
    let power_free = lambda_p <= mu_max * (1.0 - qpe).powi(ni);
    let (a_min, a_min_branch) = if power_free {
        (0.0, Branch::Slack)
    } else {
        (qpe / (1.0 - rho) - 1.0, Branch::Binding)
    };

    let (q_max, q_max_branch) = if lambda_p < mu_max * (1.0 - cfg.pe / (a + 1.0)).powi(ni) {
        (1.0, Branch::Slack)
    } else {
        ((1.0 - rho) * (a + 1.0) / cfg.pe, Branch::Binding)
    };

    let (p0_max, p0_max_branch) = if power_free {
        (PowerBound::Unbounded, Branch::Slack)
    } else {
        // a·P0 does not depend on P0
        let k = a * cfg.p0;
        (PowerBound::Finite(k * (1.0 - rho) / (qpe - 1.0 + rho)), Branch::Binding)
    };

    Ok(ProtectionConstraints { a_min, a_min_branch, q_max, q_max_branch, p0_max, p0_max_branch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::imperfect::mu_p_imperfect_symmetric;
    use crate::config::Scenario;

    fn cfg(n: usize, q: f64, pe: f64, a: f64) -> SymmetricConfig {
        Scenario { n_secondary: n, q, pe, a, mu_p_max: 0.3, ..Scenario::default() }.build().unwrap()
    }

    #[test]
    fn unbounded_power_at_light_load() {
        let c = cfg(3, 0.5, 0.2, 1.0);
        let light = 0.3 * 0.9f64.powi(3) * 0.99;
        let pc = protection_constraints(&c, light).unwrap();
        assert!(pc.p0_max.is_unbounded());
        assert_eq!(pc.a_min, 0.0);
    }

    #[test]
    fn q_max_example() {
        let c = cfg(1, 1.0, 0.2, 9.0);
        let pc = protection_constraints(&c, 0.297).unwrap();
        assert_eq!(pc.q_max_branch, Branch::Binding);
        assert!((pc.q_max - 0.5).abs() < 1e-12, "{}", pc.q_max);
    }

    #[test]
    fn perfect_sensing_never_limits_q() {
        let c = cfg(4, 0.7, 0.0, 0.5);
        for lam in [0.0, 0.1, 0.29, 0.2999] {
            let pc = protection_constraints(&c, lam).unwrap();
            assert_eq!(pc.q_max, 1.0);
            assert!(pc.p0_max.is_unbounded());
        }
    }

    #[test]
    fn q_max_sits_on_the_stability_boundary() {
        let mut c = cfg(3, 0.5, 0.6, 0.4);
        let lam = 0.28;
        let pc = protection_constraints(&c, lam).unwrap();
        assert!(pc.q_max < 1.0);
        c.q = pc.q_max;
        assert!((mu_p_imperfect_symmetric(&c) - lam).abs() < 1e-12);
    }

    #[test]
    fn p0_max_sits_on_the_stability_boundary() {
        let mut c = cfg(2, 0.8, 0.5, 3.0);
        let lam = 0.27;
        let pc = protection_constraints(&c, lam).unwrap();
        let p0 = pc.p0_max.finite().unwrap();
        assert!((c.a() * c.p0 / p0 - pc.a_min).abs() < 1e-12);
        c.set_param("P0", p0).unwrap();
        assert!((mu_p_imperfect_symmetric(&c) - lam).abs() < 1e-12);
    }

    #[test]
    fn infeasible_primary() {
        let c = cfg(2, 0.5, 0.5, 1.0);
        assert!(matches!(protection_constraints(&c, 0.3), Err(Error::InfeasiblePrimary { .. })));
    }

    #[test]
    fn hardware_cap() {
        assert_eq!(PowerBound::Unbounded.capped(Some(10.0)), PowerBound::Finite(10.0));
        assert_eq!(PowerBound::Finite(3.0).capped(Some(10.0)), PowerBound::Finite(3.0));
        assert_eq!(PowerBound::Finite(30.0).capped(None), PowerBound::Finite(30.0));
    }
}
