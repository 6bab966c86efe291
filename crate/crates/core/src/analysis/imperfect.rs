use super::perfect::{mu_p_max, mu_p_max_symmetric};
use super::subsets::{check_enum, full, submasks, weight};
use super::{check_stable, primary_success, secondary_success};
use crate::config::{NetworkConfig, SymmetricConfig};
use crate::error::{Error, Result};

/// Primary service rate with sensing errors, summing over the set `U` of
/// nodes that miss the busy primary and the subset `T ⊆ U` that transmits.
/// Nodes outside `U` detect the primary and stay silent.
pub fn mu_p_imperfect_general(net: &NetworkConfig) -> Result<f64> {
    let n = net.n();
    check_enum(n)?;
    let all = full(n);
    let success: Vec<f64> = (0..=all).map(|t| primary_success(net, t)).collect();
    let mut total = 0.0;
    for u in submasks(all) {
        let pu = weight(u, all, &net.miss_probs);
        if pu == 0.0 {
            continue;
        }
        let inner: f64 = submasks(u)
            .map(|t| weight(t, u, &net.access_probs) * success[t as usize])
            .sum();
        total += pu * inner;
    }
    // rounding can push the sum a hair above the interference-free rate
    Ok(total.min(mu_p_max(net)))
}

/// `μ_P^max [1 - q P_e / (a + 1)]^N`.
pub fn mu_p_imperfect_symmetric(cfg: &SymmetricConfig) -> f64 {
    let a = cfg.a();
    mu_p_max_symmetric(cfg) * (1.0 - cfg.q * cfg.pe / (a + 1.0)).powi(cfg.n_secondary as i32)
}

/// Symmetric per-node throughput with sensing errors: a term for slots where
/// the primary is idle and no false alarm occurs, plus a term for busy slots
/// where the node misses the primary and transmits through its interference.
pub fn secondary_rate_imperfect_symmetric(cfg: &SymmetricConfig, lambda_p: f64) -> Result<f64> {
    let mu = mu_p_imperfect_symmetric(cfg);
    check_stable(lambda_p, mu)?;
    if cfg.n_secondary == 0 {
        return Err(Error::domain("no secondary nodes"));
    }
    let busy = lambda_p / mu;
    let n_other = cfg.n_secondary as i32 - 1;
    let k = cfg.beta / (cfg.beta + 1.0);
    let noise = (-cfg.secondary_noise_exponent()).exp();
    let q_idle = cfg.q * (1.0 - cfg.pf);
    let q_busy = cfg.q * cfg.pe;
    let idle_term = (1.0 - busy) * noise * q_idle * (1.0 - q_idle * k).powi(n_other);
    let busy_term =
        busy * noise * q_busy / (1.0 + cfg.primary_interference()) * (1.0 - q_busy * k).powi(n_other);
    Ok(idle_term + busy_term)
}

/// Per-node throughputs of an asymmetric network with sensing errors.
pub fn secondary_rate_imperfect_general(net: &NetworkConfig, lambda_p: f64) -> Result<Vec<f64>> {
    let n = net.n();
    check_enum(n)?;
    let mu = mu_p_imperfect_general(net)?;
    check_stable(lambda_p, mu)?;
    let busy = lambda_p / mu;
    let all = full(n);
    let q = &net.access_probs;
    Ok((0..n)
        .map(|j| {
            let bit = 1u32 << j;
            let others = all & !bit;
            let mut idle_sum = 0.0;
            for f in submasks(others) {
                let pf = weight(f, all, &net.false_alarm_probs);
                if pf == 0.0 {
                    continue;
                }
                let avail = all & !f;
                let inner: f64 = submasks(avail & !bit)
                    .map(|t| {
                        let tx = t | bit;
                        let w = weight(tx, avail, q);
                        if w == 0.0 {
                            0.0
                        } else {
                            w * secondary_success(net, j, tx, false)
                        }
                    })
                    .sum();
                idle_sum += pf * inner;
            }
            let mut busy_sum = 0.0;
            for e in submasks(others) {
                let missed = e | bit;
                let pe = weight(missed, all, &net.miss_probs);
                if pe == 0.0 {
                    continue;
                }
                let inner: f64 = submasks(e)
                    .map(|t| {
                        let tx = t | bit;
                        let w = weight(tx, missed, q);
                        if w == 0.0 {
                            0.0
                        } else {
                            w * secondary_success(net, j, tx, true)
                        }
                    })
                    .sum();
                busy_sum += pe * inner;
            }
            (1.0 - busy) * idle_sum + busy * busy_sum
        })
        .collect())
}

/// Mass of the (miss set, transmit set) partition used for the primary rate.
pub fn primary_partition_mass(net: &NetworkConfig) -> Result<f64> {
    check_enum(net.n())?;
    let all = full(net.n());
    Ok(submasks(all)
        .map(|u| {
            weight(u, all, &net.miss_probs)
                * submasks(u).map(|t| weight(t, u, &net.access_probs)).sum::<f64>()
        })
        .sum())
}

/// Mass of the (false-alarm set, transmit set) partition of idle slots.
pub fn idle_partition_mass(net: &NetworkConfig) -> Result<f64> {
    check_enum(net.n())?;
    let all = full(net.n());
    Ok(submasks(all)
        .map(|f| {
            let avail = all & !f;
            weight(f, all, &net.false_alarm_probs)
                * submasks(avail).map(|t| weight(t, avail, &net.access_probs)).sum::<f64>()
        })
        .sum())
}

/// Mass of the (miss set, transmit set) partition of busy slots.
pub fn busy_partition_mass(net: &NetworkConfig) -> Result<f64> {
    primary_partition_mass(net)
}
