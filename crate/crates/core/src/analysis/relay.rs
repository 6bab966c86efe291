use serde::{Deserialize, Serialize};

use super::perfect::{mu_p_max, mu_p_max_symmetric};
use super::subsets::{check_enum, full, members, submasks, weight};
use super::{check_lambda, check_stable};
use crate::channel_math::{erlang_cdf, erlang_tail, hypoexponential_tail, RateList};
use crate::config::{NetworkConfig, SymmetricConfig};
use crate::error::{Error, Result};

/// Relative band inside which two sides of a strict inequality count as equal.
const STRICT_TOL: f64 = 1e-12;

fn strictly_less(a: f64, b: f64) -> bool {
    a < b - STRICT_TOL * a.abs().max(b.abs())
}

/// Probability that one secondary source decodes a primary transmission.
pub fn relay_decode_prob(cfg: &SymmetricConfig) -> f64 {
    (-cfg.beta_p * cfg.noise / cfg.relay_link_rx()).exp()
}

/// Normalised threshold `β_P N0 / (P0 r0^{-α} σ0²)` of the relay link.
fn relay_threshold(cfg: &SymmetricConfig) -> f64 {
    cfg.beta_p * cfg.noise / cfg.secondary_to_primary_rx()
}

/// `ln` of the Binomial(n, p) mass at every `k = 0..=n`.
fn ln_binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    if p == 0.0 || p == 1.0 {
        let hit = if p == 0.0 { 0 } else { n };
        return (0..=n).map(|k| if k == hit { 0.0 } else { f64::NEG_INFINITY }).collect();
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut ln_c = 0.0;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            ln_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        out.push(ln_c + k as f64 * lp + (n - k) as f64 * lq);
    }
    out
}

fn check_relays(cfg: &SymmetricConfig) -> Result<()> {
    if cfg.n_secondary == 0 {
        Err(Error::domain("relaying needs at least one secondary node"))
    } else {
        Ok(())
    }
}

/// Probability that a relayed packet reaches `D_P`: the holder set is the
/// relaying node plus each other node independently with probability `P_d`,
/// and the holders' received powers add up at the destination.
pub fn relay_success_prob(cfg: &SymmetricConfig) -> Result<f64> {
    check_relays(cfg)?;
    let x = relay_threshold(cfg);
    let pd = relay_decode_prob(cfg);
    let mut total = 0.0;
    for (k, lw) in ln_binomial_pmf(cfg.n_secondary - 1, pd).into_iter().enumerate() {
        if lw > -745.0 {
            total += lw.exp() * erlang_tail(k as u32 + 1, x, 1.0)?;
        }
    }
    Ok(total.min(1.0))
}

/// `1 - P_s`, computed from the Erlang lower tails so that it keeps relative
/// precision when `P_s` is close to one.
pub fn relay_failure_prob(cfg: &SymmetricConfig) -> Result<f64> {
    check_relays(cfg)?;
    let x = relay_threshold(cfg);
    let pd = relay_decode_prob(cfg);
    let mut total = 0.0;
    for (k, lw) in ln_binomial_pmf(cfg.n_secondary - 1, pd).into_iter().enumerate() {
        if lw > -745.0 {
            total += lw.exp() * erlang_cdf(k as u32 + 1, x, 1.0)?;
        }
    }
    Ok(total.min(1.0))
}

/// Primary service rate with relaying: a packet leaves the primary queue when
/// `D_P` or at least one secondary decodes it.
pub fn mu_p_relay(cfg: &SymmetricConfig) -> f64 {
    let mu_max = mu_p_max_symmetric(cfg);
    1.0 - (1.0 - mu_max) * (1.0 - relay_decode_prob(cfg)).powi(cfg.n_secondary as i32)
}

/// Largest primary arrival rate for which the primary and relay queues are
/// all stable.
pub fn lambda_p_max_relay(cfg: &SymmetricConfig) -> Result<f64> {
    let mu_max = mu_p_max_symmetric(cfg);
    if cfg.n_secondary == 0 {
        return Ok(mu_max);
    }
    let ps = relay_success_prob(cfg)?;
    let pd = relay_decode_prob(cfg);
    Ok(mu_p_relay(cfg) * ps / (ps + (1.0 - mu_max) * pd))
}

/// Arrival and service rates of each secondary relay queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayQueueRates {
    pub lambda_ext: f64,
    pub mu_ext: f64,
}

pub fn relay_queue_rates(cfg: &SymmetricConfig, lambda_p: f64) -> Result<RelayQueueRates> {
    let mu = mu_p_relay(cfg);
    check_stable(lambda_p, mu)?;
    let busy = lambda_p / mu;
    Ok(RelayQueueRates {
        lambda_ext: busy * (1.0 - mu_p_max_symmetric(cfg)) * relay_decode_prob(cfg),
        mu_ext: (1.0 - busy) * relay_success_prob(cfg)?,
    })
}

/// Per-node secondary throughput when secondaries relay: the fraction of
/// slots with an idle primary and empty relay queues times the conditional
/// secondary success factor.
pub fn secondary_rate_relay(cfg: &SymmetricConfig, lambda_p: f64) -> Result<f64> {
    check_relays(cfg)?;
    let bound = lambda_p_max_relay(cfg)?;
    check_stable(lambda_p, bound)?;
    let rq = relay_queue_rates(cfg, lambda_p)?;
    let n = cfg.n_secondary as i32;
    let idle = 1.0 - lambda_p / mu_p_relay(cfg);
    let relay_empty = if rq.lambda_ext == 0.0 { 1.0 } else { 1.0 - rq.lambda_ext / rq.mu_ext };
    let conditional = (-cfg.secondary_noise_exponent()).exp()
        * cfg.q
        * (1.0 - cfg.q * cfg.beta / (1.0 + cfg.beta)).powi(n - 1);
    Ok(idle * relay_empty.powi(n) * conditional)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayBenefits {
    /// Relaying raises the primary's maximum stable throughput.
    pub primary: bool,
    /// Relaying raises the secondary throughput at this primary load.
    pub secondary: bool,
}

/// Evaluates whether relaying benefits the primary and the secondaries.
/// Both comparisons are strict; sides equal to within a relative `1e-12`
/// count as no benefit. The load must be positive: at zero load relaying
/// changes nothing for the secondaries.
pub fn relay_benefit_conditions(cfg: &SymmetricConfig, lambda_p: f64) -> Result<RelayBenefits> {
    check_relays(cfg)?;
    check_lambda(lambda_p)?;
    if lambda_p == 0.0 {
        return Err(Error::domain("benefit conditions need a positive primary load"));
    }
    let bound = lambda_p_max_relay(cfg)?;
    check_stable(lambda_p, bound)?;
    let mu_max = mu_p_max_symmetric(cfg);
    let pd = relay_decode_prob(cfg);
    let ps = relay_success_prob(cfg)?;
    let n = cfg.n_secondary;
    // (1 - (1 - Pd)^N) / Pd as a geometric sum, exact at N = 1
    let geometric: f64 = (0..n).map(|k| (1.0 - pd).powi(k as i32)).sum();
    let primary = pd > 0.0 && mu_max < 1.0 && strictly_less(mu_max, ps * geometric);

    let rq = relay_queue_rates(cfg, lambda_p)?;
    let without = (1.0 - lambda_p / mu_max).max(0.0);
    let relay_empty = if rq.lambda_ext == 0.0 { 1.0 } else { 1.0 - rq.lambda_ext / rq.mu_ext };
    let with = (1.0 - lambda_p / mu_p_relay(cfg)) * relay_empty.powi(n as i32);
    let secondary = strictly_less(without, with);
    Ok(RelayBenefits { primary, secondary })
}

/// Relaying quantities for an asymmetric network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayAsymmetric {
    /// Per-node decode probability.
    pub p_d: Vec<f64>,
    /// Probability that at least one node decodes.
    pub p_d_joint: f64,
    pub mu_p: f64,
    /// Per-node relay success probability.
    pub p_s: Vec<f64>,
    /// Stability bound: minimum over nodes of the per-queue bound.
    pub lambda_p_max: f64,
    /// Node attaining the minimum.
    pub binding_node: Option<usize>,
    /// Large-`N` approximation of the bound, with every `P_s` set to one.
    pub lambda_p_max_large_n: f64,
}

pub fn relay_asymmetric(net: &NetworkConfig) -> Result<RelayAsymmetric> {
    let n = net.n();
    check_enum(n)?;
    let mu_max = mu_p_max(net);
    let p_d: Vec<f64> = (0..n)
        .map(|j| (-net.beta_p * net.noise_power / net.primary_to_relay_rx(j)).exp())
        .collect();
    let p_d_joint = 1.0 - p_d.iter().map(|p| 1.0 - p).product::<f64>();
    let mu_p = mu_max + (1.0 - mu_max) * p_d_joint;

    let all = full(n);
    let rates: Vec<f64> = (0..n).map(|i| net.noise_power / net.secondary_to_primary_rx(i)).collect();
    let mut tails = vec![1.0; 1usize << n];
    if net.noise_power > 0.0 {
        for mask in 1..=all {
            let list = RateList::new(members(mask).map(|i| rates[i]).collect())?;
            tails[mask as usize] = hypoexponential_tail(&list, net.beta_p)?;
        }
    }
    let p_s: Vec<f64> = (0..n)
        .map(|j| {
            let others = all & !(1 << j);
            submasks(others)
                .map(|t| weight(t, others, &p_d) * tails[(t | 1 << j) as usize])
                .sum::<f64>()
                .min(1.0)
        })
        .collect();

    let mut lambda_p_max = mu_max;
    let mut binding_node = None;
    for j in 0..n {
        let b = mu_p * p_s[j] / (p_s[j] + (1.0 - mu_max) * p_d[j]);
        if binding_node.is_none() || b < lambda_p_max {
            lambda_p_max = b;
            binding_node = Some(j);
        }
    }
    let pd_max = p_d.iter().copied().fold(0.0_f64, f64::max);
    let lambda_p_max_large_n = if n == 0 { mu_max } else { mu_p / (1.0 + (1.0 - mu_max) * pd_max) };
    Ok(RelayAsymmetric { p_d, p_d_joint, mu_p, p_s, lambda_p_max, binding_node, lambda_p_max_large_n })
}

/// Total weight of the co-holder sets for node `j` under decode
/// probabilities `p_d`.
pub fn relay_partition_mass(p_d: &[f64], j: usize) -> Result<f64> {
    check_enum(p_d.len())?;
    if j >= p_d.len() {
        return Err(Error::domain("node index out of range"));
    }
    let others = full(p_d.len()) & !(1 << j);
    Ok(submasks(others).map(|t| weight(t, others, p_d)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::perfect::secondary_rate_perfect_symmetric;
    use crate::config::{db_to_linear, Scenario};

    fn relay_cfg(n: usize, pd: f64, mu_max: f64, snr_db: f64) -> SymmetricConfig {
        let mut c = Scenario { n_secondary: n, pd, mu_p_max: mu_max, q: 0.5, secondary_noise: 0.1, ..Scenario::default() }
            .build()
            .unwrap();
        c.set_relay_snr_db(snr_db).unwrap();
        c
    }

    #[test]
    fn decode_prob_examples() {
        let c = Scenario { mu_p_max: 1.0, secondary_noise: 0.0, pd: 1.0, ..Scenario::default() }.build().unwrap();
        assert_eq!(relay_decode_prob(&c), 1.0);
        let c = relay_cfg(2, 0.3, 0.3, 0.0);
        assert!((relay_decode_prob(&c) - 0.3).abs() < 1e-12);
        assert!(((-(10.0f64 / 3.0).ln()).exp() - 0.3).abs() < 1e-15);
        let c = relay_cfg(2, 0.9, 0.3, 0.0);
        assert!((relay_decode_prob(&c) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn success_prob_examples() {
        let c = relay_cfg(1, 0.4, 0.3, 3.0);
        let x = 1.0 / db_to_linear(3.0);
        assert!((relay_success_prob(&c).unwrap() - (-x).exp()).abs() < 1e-14);
        let c = relay_cfg(2, 0.9, 0.3, 0.0);
        let e = std::f64::consts::E;
        let expect = 0.1 / e + 0.9 * 2.0 / e;
        assert!((relay_success_prob(&c).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.698971).abs() < 1e-6);
    }

    #[test]
    fn failure_prob_complements_success() {
        for n in [1, 2, 5, 17, 60] {
            let c = relay_cfg(n, 0.35, 0.3, -2.0);
            let s = relay_success_prob(&c).unwrap();
            let f = relay_failure_prob(&c).unwrap();
            assert!((s + f - 1.0).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn mu_p_relay_examples() {
        let c = relay_cfg(2, 0.9, 0.3, 0.0);
        assert!((mu_p_relay(&c) - 0.993).abs() < 1e-12);
        let c = relay_cfg(3, 1e-300, 0.3, 0.0);
        assert!((mu_p_relay(&c) - 0.3).abs() < 1e-12);
        let c = relay_cfg(0, 0.5, 0.3, 0.0);
        assert!((mu_p_relay(&c) - 0.3).abs() < 1e-12);
        let c = relay_cfg(200, 0.5, 0.3, 0.0);
        assert!((mu_p_relay(&c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_max_examples() {
        let c = relay_cfg(3, 1e-300, 0.3, 0.0);
        assert!((lambda_p_max_relay(&c).unwrap() - 0.3).abs() < 1e-12);
        let c = relay_cfg(1, 0.3, 0.3, 0.0);
        assert!(lambda_p_max_relay(&c).unwrap() > 0.3);
        let c = relay_cfg(20, 0.3, 0.3, -5.0);
        assert!(lambda_p_max_relay(&c).unwrap() > 0.3);
    }

    #[test]
    fn secondary_relay_reductions() {
        let c = relay_cfg(3, 0.6, 0.3, 0.0);
        let base = secondary_rate_perfect_symmetric(&c, 0.0).unwrap();
        assert!((secondary_rate_relay(&c, 0.0).unwrap() - base).abs() < 1e-15);
        let c = relay_cfg(3, 1e-300, 0.3, 0.0);
        let base = secondary_rate_perfect_symmetric(&c, 0.2).unwrap();
        assert!((secondary_rate_relay(&c, 0.2).unwrap() - base).abs() < 1e-12);
        let c = relay_cfg(3, 0.6, 0.3, 0.0);
        let bound = lambda_p_max_relay(&c).unwrap();
        assert!(matches!(secondary_rate_relay(&c, bound), Err(Error::Unstable { .. })));
    }

    #[test]
    fn single_node_benefits_agree() {
        // mu_max below and above P_s = e^{-x}
        let c = relay_cfg(1, 0.5, 0.3, 0.0);
        let b = relay_benefit_conditions(&c, 0.1).unwrap();
        assert_eq!((b.primary, b.secondary), (true, true));
        let c = relay_cfg(1, 0.5, 0.3, -10.0);
        let lam = 0.5 * lambda_p_max_relay(&c).unwrap();
        let b = relay_benefit_conditions(&c, lam).unwrap();
        assert_eq!((b.primary, b.secondary), (false, false));
    }

    #[test]
    fn equal_link_snrs_give_no_benefit() {
        let mut c = relay_cfg(1, 0.5, 0.3, 0.0);
        c.p0 = c.p_p;
        c.r_0 = c.r_pp;
        c.sigma0_sq = c.sigma_pp_sq;
        let b = relay_benefit_conditions(&c, 0.1).unwrap();
        assert_eq!((b.primary, b.secondary), (false, false));
    }

    #[test]
    fn asymmetric_reduces_to_symmetric() {
        for n in 1..=5 {
            let c = relay_cfg(n, 0.45, 0.35, 1.0);
            let r = relay_asymmetric(&c.to_network()).unwrap();
            let ps = relay_success_prob(&c).unwrap();
            for &v in &r.p_s {
                assert!((v - ps).abs() <= 1e-9 * ps, "n={n}: {v} vs {ps}");
            }
            assert!((r.mu_p - mu_p_relay(&c)).abs() < 1e-12);
            let lm = lambda_p_max_relay(&c).unwrap();
            assert!((r.lambda_p_max - lm).abs() <= 1e-9 * lm);
            assert!((relay_partition_mass(&r.p_d, 0).unwrap() - 1.0).abs() < 1e-14);
        }
    }
}
