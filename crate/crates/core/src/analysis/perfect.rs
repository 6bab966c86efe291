use super::subsets::{check_enum, full, submasks, weight};
use super::{check_stable, secondary_success};
use crate::config::{NetworkConfig, SymmetricConfig};
use crate::error::{Error, Result};

/// Service rate of the primary queue with no interference:
/// `exp(-N0 β_P / (P_P σ² r^{-α}))`.
pub fn mu_p_max(net: &NetworkConfig) -> f64 {
    (-net.noise_power * net.beta_p / net.primary_link_rx()).exp()
}

pub fn mu_p_max_symmetric(cfg: &SymmetricConfig) -> f64 {
    (-cfg.noise * cfg.beta_p / cfg.primary_link_rx()).exp()
}

/// Per-node secondary throughput with perfect sensing in the symmetric case.
pub fn secondary_rate_perfect_symmetric(cfg: &SymmetricConfig, lambda_p: f64) -> Result<f64> {
    let mu = mu_p_max_symmetric(cfg);
    check_stable(lambda_p, mu)?;
    if cfg.n_secondary == 0 {
        return Err(Error::domain("no secondary nodes"));
    }
    let idle = 1.0 - lambda_p / mu;
    let contention = 1.0 - cfg.q * cfg.beta / (1.0 + cfg.beta);
    Ok(idle
        * (-cfg.secondary_noise_exponent()).exp()
        * cfg.q
        * contention.powi(cfg.n_secondary as i32 - 1))
}

/// Access probability maximising the symmetric per-node throughput.
pub fn optimal_q_perfect(cfg: &SymmetricConfig) -> Result<f64> {
    if cfg.n_secondary == 0 {
        return Err(Error::domain("optimal q needs at least one secondary node"));
    }
    Ok(((1.0 + cfg.beta) / (cfg.beta * cfg.n_secondary as f64)).min(1.0))
}

/// Per-node throughputs of an asymmetric network with perfect sensing and
/// access probabilities `q`.
pub fn secondary_region_perfect_asymmetric(net: &NetworkConfig, lambda_p: f64, q: &[f64]) -> Result<Vec<f64>> {
    let n = net.n();
    check_enum(n)?;
    if q.len() != n || q.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::domain(format!("need {n} access probabilities in [0, 1]")));
    }
    let mu = mu_p_max(net);
    check_stable(lambda_p, mu)?;
    let idle = 1.0 - lambda_p / mu;
    let all = full(n);
    Ok((0..n)
        .map(|j| {
            let others = all & !(1 << j);
            let sum: f64 = submasks(others)
                .map(|t| {
                    let tx = t | 1 << j;
                    let w = weight(tx, all, q);
                    if w == 0.0 {
                        0.0
                    } else {
                        w * secondary_success(net, j, tx, false)
                    }
                })
                .sum();
            idle * sum
        })
        .collect())
}

/// Total weight of all transmit sets under access probabilities `q`.
pub fn transmit_partition_mass(q: &[f64]) -> Result<f64> {
    check_enum(q.len())?;
    let all = full(q.len());
    Ok(submasks(all).map(|t| weight(t, all, q)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scenario;

    fn noiseless(n: usize, q: f64, beta: f64) -> SymmetricConfig {
        Scenario { n_secondary: n, q, beta, mu_p_max: 1.0, secondary_noise: 0.0, pd: 1.0, ..Scenario::default() }
            .build()
            .unwrap()
    }

    #[test]
    fn mu_p_max_examples() {
        let mut c = noiseless(1, 1.0, 1.0);
        assert_eq!(mu_p_max_symmetric(&c), 1.0);
        c = Scenario { mu_p_max: 0.3, ..Scenario::default() }.build().unwrap();
        assert!((mu_p_max_symmetric(&c) - 0.3).abs() < 1e-12);
        // exponent 1.20397 gives 0.3 to the printed precision
        assert!(((-1.20397f64).exp() - 0.3).abs() < 1e-6);
        c.noise = 1.0;
        c.sigma_pp_sq = c.beta_p / (c.p_p * std::f64::consts::LN_2);
        assert!((mu_p_max(&c.to_network()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn secondary_rate_examples() {
        let c = noiseless(3, 0.0, 1.0);
        assert_eq!(secondary_rate_perfect_symmetric(&c, 0.0).unwrap(), 0.0);
        let c = noiseless(1, 1.0, 1.0);
        assert_eq!(secondary_rate_perfect_symmetric(&c, 0.0).unwrap(), 1.0);
        let c = noiseless(4, 0.5, 1.0);
        assert!((secondary_rate_perfect_symmetric(&c, 0.0).unwrap() - 0.2109375).abs() < 1e-15);
        let c = Scenario { mu_p_max: 0.3, ..Scenario::default() }.build().unwrap();
        assert!(matches!(secondary_rate_perfect_symmetric(&c, 0.3), Err(Error::Unstable { .. })));
    }

    #[test]
    fn optimal_q_examples() {
        let mut c = noiseless(1, 0.5, 1e12);
        assert_eq!(optimal_q_perfect(&c).unwrap(), 1.0);
        c = noiseless(4, 0.5, 1.0);
        assert_eq!(optimal_q_perfect(&c).unwrap(), 0.5);
        c = noiseless(2, 0.5, 10.0);
        assert!((optimal_q_perfect(&c).unwrap() - 0.55).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_reduces_to_symmetric() {
        for n in 1..=4 {
            let c = Scenario {
                n_secondary: n,
                q: 0.4,
                beta: 2.0,
                mu_p_max: 0.6,
                secondary_noise: 0.3,
                ..Scenario::default()
            }
            .build()
            .unwrap();
            let sym = secondary_rate_perfect_symmetric(&c, 0.2).unwrap();
            let net = c.to_network();
            let gen = secondary_region_perfect_asymmetric(&net, 0.2, &net.access_probs).unwrap();
            for v in gen {
                assert!((v - sym).abs() <= 1e-12 * sym, "n={n}: {v} vs {sym}");
            }
        }
    }
}
