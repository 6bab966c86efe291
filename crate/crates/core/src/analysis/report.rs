use serde::{Deserialize, Serialize};

use super::constraints::{protection_constraints, ProtectionConstraints};
use super::imperfect::{
    mu_p_imperfect_general, mu_p_imperfect_symmetric, secondary_rate_imperfect_general,
    secondary_rate_imperfect_symmetric,
};
use super::perfect::{mu_p_max, mu_p_max_symmetric, secondary_rate_perfect_symmetric};
use super::relay::{
    lambda_p_max_relay, mu_p_relay, relay_benefit_conditions, relay_decode_prob, relay_queue_rates,
    relay_success_prob, secondary_rate_relay, RelayBenefits, RelayQueueRates,
};
use super::check_stable;
use crate::config::{NetworkConfig, SymmetricConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayReport {
    pub p_d: f64,
    pub p_s: f64,
    pub mu_p_relay: f64,
    pub lambda_p_max: f64,
    /// Present when the load is below `lambda_p_max`.
    pub queues: Option<RelayQueueRates>,
    pub secondary_rate: Option<f64>,
    /// Present when the load is positive and below `lambda_p_max`.
    pub benefits: Option<RelayBenefits>,
}

/// Closed-form summary of one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticalReport {
    pub lambda_p: f64,
    pub mu_p_max: f64,
    pub mu_p: f64,
    pub secondary_rates: Vec<f64>,
    pub idle_fraction: f64,
    pub constraints: Option<ProtectionConstraints>,
    pub relay: Option<RelayReport>,
}

fn check_feasible(lambda_p: f64, mu_max: f64) -> Result<()> {
    if lambda_p >= mu_max {
        Err(Error::InfeasiblePrimary { lambda_p, mu_p_max: mu_max })
    } else {
        Ok(())
    }
}

/// Evaluates the symmetric closed forms at load `lambda_p`. The relay block
/// uses the perfect-sensing relaying model and is only filled in when
/// `with_relay` is set.
pub fn analyze_symmetric(cfg: &SymmetricConfig, lambda_p: f64, with_relay: bool) -> Result<AnalyticalReport> {
    cfg.validate()?;
    let mu_max = mu_p_max_symmetric(cfg);
    check_feasible(lambda_p, mu_max)?;
    let mu_p = mu_p_imperfect_symmetric(cfg);
    check_stable(lambda_p, mu_p)?;
    let perfect = cfg.pe == 0.0 && cfg.pf == 0.0;
    let rate = if cfg.n_secondary == 0 {
        None
    } else if perfect {
        Some(secondary_rate_perfect_symmetric(cfg, lambda_p)?)
    } else {
        Some(secondary_rate_imperfect_symmetric(cfg, lambda_p)?)
    };
    let relay = if with_relay && cfg.n_secondary > 0 {
        let lambda_max = lambda_p_max_relay(cfg)?;
        let stable = lambda_p < lambda_max;
        Some(RelayReport {
            p_d: relay_decode_prob(cfg),
            p_s: relay_success_prob(cfg)?,
            mu_p_relay: mu_p_relay(cfg),
            lambda_p_max: lambda_max,
            queues: if stable { Some(relay_queue_rates(cfg, lambda_p)?) } else { None },
            secondary_rate: if stable { Some(secondary_rate_relay(cfg, lambda_p)?) } else { None },
            benefits: if stable && lambda_p > 0.0 { Some(relay_benefit_conditions(cfg, lambda_p)?) } else { None },
        })
    } else {
        None
    };
    Ok(AnalyticalReport {
        lambda_p,
        mu_p_max: mu_max,
        mu_p,
        secondary_rates: rate.map(|r| vec![r; cfg.n_secondary]).unwrap_or_default(),
        idle_fraction: 1.0 - lambda_p / mu_p,
        constraints: Some(protection_constraints(cfg, lambda_p)?),
        relay,
    })
}

/// Evaluates the asymmetric closed forms at load `lambda_p`.
pub fn analyze_network(net: &NetworkConfig, lambda_p: f64) -> Result<AnalyticalReport> {
    net.validate()?;
    check_feasible(lambda_p, mu_p_max(net))?;
    let mu_p = mu_p_imperfect_general(net)?;
    check_stable(lambda_p, mu_p)?;
    Ok(AnalyticalReport {
        lambda_p,
        mu_p_max: mu_p_max(net),
        mu_p,
        secondary_rates: secondary_rate_imperfect_general(net, lambda_p)?,
        idle_fraction: 1.0 - lambda_p / mu_p,
        constraints: None,
        relay: None,
    })
}
