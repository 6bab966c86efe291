//! Tail probabilities of sums of exponential random variables.
//!
//! Under Rayleigh fading every squared channel magnitude `|h|^2` is
//! exponential, so outage events reduce to tails of sums of independent
//! exponentials (hypoexponential / Erlang laws) or to Laplace transforms of
//! such sums evaluated at a point. Everything here is a pure function.

use crate::error::{Error, Result};

/// Rates closer than this (relative) are treated as one repeated rate.
pub const RATE_MERGE_TOL: f64 = 1e-9;

/// Non-empty list of strictly positive exponential rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RateList(Vec<f64>);

impl RateList {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::domain("rate list must be non-empty"));
        }
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::domain(format!("rates must be finite and > 0, got {r}")));
        }
        Ok(Self(rates))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Returns a new list with `rate` appended.
    pub fn with(&self, rate: f64) -> Result<Self> {
        let mut v = self.0.clone();
        v.push(rate);
        Self::new(v)
    }

    /// Groups rates that agree within [`RATE_MERGE_TOL`] into `(rate, multiplicity)`.
    pub fn grouped(&self) -> Vec<(f64, u32)> {
        let mut sorted = self.0.clone();
        sorted.sort_by(f64::total_cmp);
        let mut groups: Vec<(f64, u32, f64)> = Vec::new(); // (first, count, sum)
        for r in sorted {
            match groups.last_mut() {
                Some((first, count, sum)) if (r - *first).abs() <= RATE_MERGE_TOL * first.max(r) => {
                    *count += 1;
                    *sum += r;
                }
                _ => groups.push((r, 1, r)),
            }
        }
        groups
            .into_iter()
            .map(|(_, count, sum)| (sum / f64::from(count), count))
            .collect()
    }
}

/// Rayleigh fading coefficient `h ~ CN(0, variance)`; `|h|^2` is exponential
/// with mean `variance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingSpec {
    variance: f64,
}

impl FadingSpec {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::domain(format!("fading variance must be > 0, got {variance}")));
        }
        Ok(Self { variance })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Rate of the exponential law of `|h|^2`.
    pub fn power_rate(&self) -> f64 {
        1.0 / self.variance
    }

    /// `Pr[|h|^2 > c]`.
    pub fn power_tail(&self, c: f64) -> f64 {
        (-c / self.variance).exp()
    }
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln( e^{-x} sum_{m<k} x^m / m! )`, i.e. the log of the unit-rate Erlang tail.
fn ln_poisson_head(k: u32, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let lx = x.ln();
    let mut term = -x; // log of m = 0 term
    let mut acc = term;
    for m in 1..k {
        term += lx - f64::from(m).ln();
        acc = ln_add_exp(acc, term);
    }
    acc.min(0.0)
}

/// `Pr[X_1 + ... + X_k > c]` for i.i.d. `X_i ~ Exp(rate)`.
pub fn erlang_tail(k: u32, c: f64, rate: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("erlang_tail needs k >= 1"));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::domain(format!("erlang_tail needs rate > 0, got {rate}")));
    }
    if !(c >= 0.0) {
        return Err(Error::domain(format!("erlang_tail needs c >= 0, got {c}")));
    }
    Ok(ln_poisson_head(k, rate * c).exp())
}

/// `Pr[X_1 + ... + X_k <= c]`, evaluated without cancellation when the
/// tail is close to one.
pub fn erlang_cdf(k: u32, c: f64, rate: f64) -> Result<f64> {
    let tail = erlang_tail(k, c, rate)?;
    let x = rate * c;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x >= f64::from(k) {
        return Ok(1.0 - tail);
    }
    // e^{-x} sum_{m >= k} x^m / m!; terms decrease monotonically since x < k.
    let lx = x.ln();
    let mut ln_term = -x + f64::from(k) * lx - ln_factorial(k);
    let mut acc = f64::NEG_INFINITY;
    let mut m = k;
    loop {
        acc = ln_add_exp(acc, ln_term);
        m += 1;
        ln_term += lx - f64::from(m).ln();
        if ln_term < acc - 40.0 {
            break;
        }
    }
    Ok(acc.exp().min(1.0))
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| f64::from(i).ln()).sum()
}

/// Integer-order upper incomplete gamma `Γ(s, x) = (s-1)! e^{-x} Σ_{m<s} x^m/m!`.
pub fn upper_incomplete_gamma_int(s: u32, x: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::domain("upper incomplete gamma needs s >= 1"));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!("upper incomplete gamma needs x >= 0, got {x}")));
    }
    Ok((ln_factorial(s - 1) + ln_poisson_head(s, x)).exp())
}

/// Partial-fraction expansion of the Laplace transform of a hypoexponential
/// sum with (possibly repeated) rates:
///
/// ```text
/// Π_k (θ_k / (θ_k + s))^{m_k} = Σ_k Σ_{l=1..m_k} A_{k,l} / (s + θ_k)^l
/// ```
///
/// The density is then `Σ A_{k,l} z^{l-1} e^{-θ_k z} / (l-1)!`.
#[derive(Debug, Clone)]
pub struct PartialFractions {
    /// `(θ_k, l, A_{k,l})`
    terms: Vec<(f64, u32, f64)>,
}

impl PartialFractions {
    pub fn new(rates: &RateList) -> Self {
        let groups = rates.grouped();
        let mut terms = Vec::new();
        for (k, &(theta_k, m_k)) in groups.iter().enumerate() {
            let others: Vec<(f64, u32)> = groups
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, g)| *g)
                .collect();
            let derivs = cofactor_derivatives(&others, -theta_k, m_k as usize);
            let scale = theta_k.powi(m_k as i32);
            for l in 1..=m_k {
                let order = (m_k - l) as usize;
                let coeff = scale * derivs[order] / factorial_f64(order as u32);
                terms.push((theta_k, l, coeff));
            }
        }
        Self { terms }
    }

    pub fn density(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        self.terms
            .iter()
            .map(|&(theta, l, a)| {
                a * z.powi(l as i32 - 1) * (-theta * z).exp() / factorial_f64(l - 1)
            })
            .sum()
    }

    /// `Pr[Z > c]`.
    pub fn tail(&self, c: f64) -> f64 {
        self.tail_with_magnitude(c).0.clamp(0.0, 1.0)
    }

    /// Unclamped tail together with the sum of absolute term values, which
    /// bounds the cancellation in the alternating sum.
    fn tail_with_magnitude(&self, c: f64) -> (f64, f64) {
        let mut sum = 0.0;
        let mut mag = 0.0;
        for &(theta, l, a) in &self.terms {
            let t = a * theta.powi(-(l as i32)) * ln_poisson_head(l, theta * c).exp();
            sum += t;
            mag += t.abs();
        }
        (sum, mag)
    }

    /// `E[e^{-s Z}]` evaluated term by term from the expansion.
    pub fn laplace(&self, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(theta, l, a)| a / (s + theta).powi(l as i32))
            .sum()
    }
}

fn factorial_f64(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Derivatives of orders `0..count` of `G(s) = Π_j (θ_j / (θ_j + s))^{m_j}`
/// at `s0`, via `G' = G·H` with `H(s) = -Σ_j m_j / (θ_j + s)`.
fn cofactor_derivatives(others: &[(f64, u32)], s0: f64, count: usize) -> Vec<f64> {
    let g0: f64 = others
        .iter()
        .map(|&(theta, m)| (theta / (theta + s0)).powi(m as i32))
        .product();
    // H^{(n)}(s0) = -Σ m_j (-1)^n n! / (θ_j + s0)^{n+1}
    let h: Vec<f64> = (0..count)
        .map(|n| {
            let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
            let nf = factorial_f64(n as u32);
            others
                .iter()
                .map(|&(theta, m)| sign * f64::from(m) * nf / (theta + s0).powi(n as i32 + 1))
                .sum()
        })
        .collect();
    let mut g = Vec::with_capacity(count);
    g.push(g0);
    for n in 0..count.saturating_sub(1) {
        // G^{(n+1)} = Σ_{i=0..n} C(n,i) G^{(i)} H^{(n-i)}
        let mut acc = 0.0;
        let mut binom = 1.0;
        for i in 0..=n {
            acc += binom * g[i] * h[n - i];
            binom = binom * (n - i) as f64 / (i + 1) as f64;
        }
        g.push(acc);
    }
    g
}

/// `Pr[Σ X_i > c]` for independent `X_i ~ Exp(rates[i])`.
///
/// Distinct rates use the classic partial-fraction form. Rates equal within
/// [`RATE_MERGE_TOL`] are merged and handled by the multiplicity-aware
/// expansion; a single repeated rate is the Erlang tail.
pub fn hypoexponential_tail(rates: &RateList, c: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(Error::domain(format!("tail threshold must be >= 0, got {c}")));
    }
    if c == 0.0 {
        return Ok(1.0);
    }
    let groups = rates.grouped();
    if let [(theta, m)] = groups[..] {
        return erlang_tail(m, c, theta);
    }
    let (tail, mag) = PartialFractions::new(rates).tail_with_magnitude(c);
    // Nearly coincident rates that were not merged make the expansion cancel
    // catastrophically; fall back to the positive-term series then.
    if !(mag.is_finite() && mag <= 1e6 * tail.abs().max(1e-300)) {
        return Ok(uniformized_tail(rates.as_slice(), c));
    }
    Ok(tail.clamp(0.0, 1.0))
}

/// Tail of a hypoexponential sum by uniformisation: the phases are run as a
/// Markov chain jumping at Poisson rate `Λ = max θ`, so
/// `Pr[Z > c] = Σ_n Pois(n; Λc) · Pr[not absorbed after n jumps]`.
/// Every term is nonnegative, so nothing cancels.
pub fn uniformized_tail(rates: &[f64], c: f64) -> f64 {
    let lam = rates.iter().copied().fold(0.0_f64, f64::max);
    let x = lam * c;
    if x == 0.0 {
        return 1.0;
    }
    let advance: Vec<f64> = rates.iter().map(|r| r / lam).collect();
    let k = rates.len();
    // phase distribution; index k is the absorbed state
    let mut v = vec![0.0_f64; k + 1];
    v[0] = 1.0;
    let lx = x.ln();
    let mut ln_pois = -x;
    let mut acc = 0.0;
    let mut weight_seen = 0.0;
    let n_max = (x + 40.0 * x.sqrt() + 100.0).ceil() as u64;
    for n in 0..=n_max {
        let w = ln_pois.exp();
        acc += w * (1.0 - v[k]).max(0.0);
        weight_seen += w;
        if n as f64 > x && (1.0 - weight_seen <= 1e-17 || (1.0 - v[k]) <= 1e-300) {
            break;
        }
        for i in (0..k).rev() {
            let moved = v[i] * advance[i];
            v[i] -= moved;
            v[i + 1] += moved;
        }
        ln_pois += lx - ((n + 1) as f64).ln();
    }
    acc.clamp(0.0, 1.0)
}

/// `Pr[SINR > threshold]` for a Rayleigh desired link against independent
/// Rayleigh interferers and noise.
///
/// `signal_mean_snr` is the mean received SNR of the desired link. Each
/// interferer is described by `θ_k = S̄ / (threshold · Ī_k)`, the mean desired
/// received power over `threshold` times the interferer's mean received power.
/// Conditioning on the normalised interference sum `Z = Σ Y_k`, with
/// `Y_k ~ Exp(θ_k)`, gives `e^{-threshold/snr} · E[e^{-Z}]`, and the Laplace
/// transform of the hypoexponential law factorises over interferers.
pub fn rayleigh_interference_success(
    signal_mean_snr: f64,
    threshold: f64,
    interferer_ratios: &[f64],
) -> f64 {
    let mut ln_p = -threshold / signal_mean_snr;
    for &theta in interferer_ratios {
        ln_p -= (1.0 / theta).ln_1p();
    }
    ln_p.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn erlang_examples() {
        assert_eq!(erlang_tail(1, 0.0, 1.0).unwrap(), 1.0);
        assert!(close(erlang_tail(2, 1.0, 1.0).unwrap(), 2.0 / std::f64::consts::E, 1e-14));
        assert_eq!(erlang_tail(3, 0.0, 5.0).unwrap(), 1.0);
        assert!(erlang_tail(0, 1.0, 1.0).is_err());
        assert!(erlang_tail(1, 1.0, 0.0).is_err());
        assert!(erlang_tail(1, 1.0, -2.0).is_err());
    }

    #[test]
    fn erlang_cdf_complements_tail() {
        for k in 1..15 {
            for &x in &[1e-3, 0.1, 1.0, 3.0, 10.0, 40.0] {
                let t = erlang_tail(k, x, 1.0).unwrap();
                let c = erlang_cdf(k, x, 1.0).unwrap();
                assert!((t + c - 1.0).abs() < 1e-13, "k={k} x={x}");
            }
        }
        // deep tail keeps relative precision
        let c = erlang_cdf(20, 0.1, 1.0).unwrap();
        let expect: f64 = (20..60)
            .map(|m| (-0.1f64).exp() * 0.1f64.powi(m) / factorial_f64(m as u32))
            .sum();
        assert!(close(c, expect, 1e-12));
    }

    #[test]
    fn hypo_examples() {
        let e = std::f64::consts::E;
        let one = RateList::new(vec![1.0]).unwrap();
        assert!(close(hypoexponential_tail(&one, 1.0).unwrap(), 1.0 / e, 1e-14));
        let two = RateList::new(vec![1.0, 2.0]).unwrap();
        assert!(close(
            hypoexponential_tail(&two, 1.0).unwrap(),
            2.0 / e - 1.0 / (e * e),
            1e-13
        ));
        let rep = RateList::new(vec![1.0, 1.0]).unwrap();
        assert!(close(hypoexponential_tail(&rep, 1.0).unwrap(), 2.0 / e, 1e-14));
    }

    #[test]
    fn uniformisation_agrees_with_partial_fractions() {
        for rates in [vec![1.0, 2.0], vec![0.5, 1.0, 3.5], vec![1.0, 1.0, 3.0], vec![0.2, 4.0, 4.0, 9.0]] {
            let list = RateList::new(rates.clone()).unwrap();
            for &c in &[0.01, 0.3, 1.0, 4.0, 12.0] {
                let a = PartialFractions::new(&list).tail(c);
                let b = uniformized_tail(&rates, c);
                assert!(close(a, b, 1e-10), "{rates:?} c={c}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn nearly_equal_rates_stay_accurate() {
        // separated by more than the merge tolerance, so not merged
        let list = RateList::new(vec![1.0, 1.0 + 1e-7, 2.0]).unwrap();
        assert_eq!(list.grouped().len(), 3);
        let merged = RateList::new(vec![1.0, 1.0, 2.0]).unwrap();
        for &c in &[0.1, 1.0, 5.0] {
            let t = hypoexponential_tail(&list, c).unwrap();
            let m = hypoexponential_tail(&merged, c).unwrap();
            assert!(close(t, m, 1e-6), "c={c}: {t} vs {m}");
        }
    }

    #[test]
    fn rate_list_rejects_bad_input() {
        assert!(RateList::new(vec![]).is_err());
        assert!(RateList::new(vec![1.0, 0.0]).is_err());
        assert!(RateList::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn grouping_merges_near_equal_rates() {
        let r = RateList::new(vec![2.0, 1.0, 1.0 + 1e-12, 3.0, 2.0]).unwrap();
        let g = r.grouped();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0].1, 2);
        assert_eq!(g[1].1, 2);
        assert_eq!(g[2].1, 1);
    }

    #[test]
    fn mixed_multiplicities_match_numeric_convolution() {
        // rates {1,1,3}: convolve Erlang(2,1) density with Exp(3) numerically
        let rates = RateList::new(vec![1.0, 3.0, 1.0]).unwrap();
        let pf = PartialFractions::new(&rates);
        let erl2 = |z: f64| z * (-z).exp();
        let n = 20_000;
        for &z in &[0.3, 1.0, 2.5] {
            let h = z / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let t = i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += w * erl2(t) * 3.0 * (-3.0 * (z - t)).exp();
            }
            acc *= h;
            assert!(close(pf.density(z), acc, 1e-6), "z={z}: {} vs {acc}", pf.density(z));
        }
        // total mass and laplace at 0
        assert!(close(pf.laplace(0.0), 1.0, 1e-12));
        assert!(close(pf.tail(0.0), 1.0, 1e-12));
    }

    #[test]
    fn incomplete_gamma_examples() {
        let e = std::f64::consts::E;
        assert!(close(upper_incomplete_gamma_int(1, 0.5).unwrap(), (-0.5f64).exp(), 1e-14));
        assert!(close(upper_incomplete_gamma_int(2, 1.0).unwrap(), 2.0 / e, 1e-14));
        assert!(close(upper_incomplete_gamma_int(3, 0.0).unwrap(), 2.0, 1e-14));
        assert!(upper_incomplete_gamma_int(0, 1.0).is_err());
    }

    #[test]
    fn interference_success_examples() {
        assert!(close(rayleigh_interference_success(1e12, 1.0, &[]), 1.0, 1e-11));
        assert!(close(rayleigh_interference_success(1e12, 1.0, &[1.0, 1.0, 1.0]), 0.125, 1e-11));
        assert!(close(
            rayleigh_interference_success(1.0, 1.0, &[]),
            (-1.0f64).exp(),
            1e-15
        ));
    }
}
