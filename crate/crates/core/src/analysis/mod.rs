//! Closed-form throughput, stability and benefit expressions.
//!
//! Symmetric functions take a [`SymmetricConfig`] and are closed-form in `N`.
//! Their asymmetric counterparts take a [`NetworkConfig`] and enumerate
//! subsets of secondary nodes, which caps them at [`MAX_ENUM_N`] nodes.
//!
//! Rates are queue-theoretic: the secondary throughputs and idle fractions
//! presuppose a stable primary queue, and every function whose formula relies
//! on that returns [`Error::Unstable`] rather than a meaningless number.

mod constraints;
mod imperfect;
mod perfect;
mod relay;
mod report;
mod subsets;

pub use constraints::{protection_constraints, Branch, PowerBound, ProtectionConstraints};
pub use imperfect::{
    mu_p_imperfect_general, mu_p_imperfect_symmetric, secondary_rate_imperfect_general,
    secondary_rate_imperfect_symmetric,
};
pub use perfect::{
    mu_p_max, mu_p_max_symmetric, optimal_q_perfect, secondary_rate_perfect_symmetric,
    secondary_region_perfect_asymmetric,
};
pub use relay::{
    lambda_p_max_relay, mu_p_relay, relay_asymmetric, relay_benefit_conditions, relay_decode_prob,
    relay_failure_prob, relay_queue_rates, relay_success_prob, secondary_rate_relay, RelayAsymmetric,
    RelayBenefits, RelayQueueRates,
};
pub use report::{analyze_network, analyze_symmetric, AnalyticalReport, RelayReport};
pub use subsets::MAX_ENUM_N;

pub mod partition {
    //! Probability-partition checks for the subset sums: each returns the sum
    //! of the enumeration weights with every success term replaced by one.
    pub use super::imperfect::{busy_partition_mass, idle_partition_mass, primary_partition_mass};
    pub use super::perfect::transmit_partition_mass;
    pub use super::relay::relay_partition_mass;
}

use crate::channel_math::rayleigh_interference_success;
use crate::config::NetworkConfig;
use crate::error::{Error, Result};

pub(crate) fn check_lambda(lambda_p: f64) -> Result<()> {
    if lambda_p.is_finite() && lambda_p >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("arrival rate must be finite and >= 0, got {lambda_p}")))
    }
}

pub(crate) fn check_stable(lambda_p: f64, bound: f64) -> Result<()> {
    check_lambda(lambda_p)?;
    if lambda_p < bound {
        Ok(())
    } else {
        Err(Error::Unstable { lambda_p, bound })
    }
}

fn snr(rx: f64, noise: f64) -> f64 {
    if noise == 0.0 {
        f64::INFINITY
    } else {
        rx / noise
    }
}

/// Success probability of `S_j -> D_j` when the secondary nodes in `mask`
/// (which contains `j`) transmit, optionally with the primary active too.
pub(crate) fn secondary_success(net: &NetworkConfig, j: usize, mask: u32, primary_active: bool) -> f64 {
    let signal = net.secondary_link_rx(j, j);
    let beta = net.betas[j];
    let mut ratios: Vec<f64> = subsets::members(mask & !(1 << j))
        .map(|k| signal / (beta * net.secondary_link_rx(k, j)))
        .collect();
    if primary_active {
        ratios.push(signal / (beta * net.primary_to_secondary_rx(j)));
    }
    rayleigh_interference_success(snr(signal, net.noise_power), beta, &ratios)
}

/// Success probability of the primary link when the secondary nodes in
/// `mask` transmit concurrently.
pub(crate) fn primary_success(net: &NetworkConfig, mask: u32) -> f64 {
    let signal = net.primary_link_rx();
    let ratios: Vec<f64> = subsets::members(mask)
        .map(|k| signal / (net.beta_p * net.secondary_to_primary_rx(k)))
        .collect();
    rayleigh_interference_success(snr(signal, net.noise_power), net.beta_p, &ratios)
}
