//! Self-checks run by `cogstab validate`.
//!
//! The battery compares slot simulations against the closed forms and runs
//! the analytic property checks on seeded random draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    lambda_p_max_relay, mu_p_imperfect_general, mu_p_imperfect_symmetric, mu_p_max_symmetric, mu_p_relay,
    protection_constraints, relay_asymmetric, relay_benefit_conditions, relay_decode_prob, relay_failure_prob,
    relay_queue_rates, relay_success_prob, secondary_rate_imperfect_general, secondary_rate_imperfect_symmetric,
    secondary_rate_perfect_symmetric, secondary_rate_relay,
};
use crate::config::{Scenario, SymmetricConfig};
use crate::optimizer::{maximize_sum_throughput, GridSpec};
use crate::sim::{simulate, stability_probe, Estimate, SimConfig, SimMode, SimResult, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Battery {
    Standard,
    Extended,
}

impl std::str::FromStr for Battery {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "standard" => Ok(Battery::Standard),
            "extended" => Ok(Battery::Extended),
            other => Err(format!("unknown battery {other:?} (expected standard or extended)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, failures: Vec<String>, total: usize) -> Self {
        let passed = failures.is_empty();
        let detail = if passed {
            format!("{total} cases ok")
        } else {
            format!("{} of {total} failed; first: {}", failures.len(), failures[0])
        };
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub battery: Battery,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl BatteryReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json_lines(&self) -> String {
        self.checks.iter().map(|c| serde_json::to_string(c).expect("check serialises") + "\n").collect()
    }
}

fn rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// One closed-form-versus-simulation comparison point.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceCase {
    pub name: String,
    pub cfg: SymmetricConfig,
    pub mode: SimMode,
    pub lambda_p: f64,
}

fn scenario(n: usize, q: f64, pe: f64, pf: f64, mu_max: f64, a: f64) -> Scenario {
    Scenario {
        n_secondary: n,
        q,
        beta: 1.0,
        pe,
        pf,
        mu_p_max: mu_max,
        a,
        secondary_noise: 0.2,
        interference: 0.5,
        ..Scenario::default()
    }
}

fn relay_config(n: usize, q: f64, mu_max: f64, pd: f64, snr_db: f64) -> SymmetricConfig {
    let mut c = Scenario { pd, ..scenario(n, q, 0.0, 0.0, mu_max, 1.0) }.build().expect("valid scenario");
    c.set_relay_snr_db(snr_db).expect("noisy scenario");
    c
}

/// Twelve operating points covering the three protocol modes.
pub fn equivalence_cases() -> Vec<EquivalenceCase> {
    let build = |s: Scenario| s.build().expect("valid scenario");
    let mut out = Vec::new();
    let mut push = |name: &str, cfg: SymmetricConfig, mode: SimMode, lambda_p: f64| {
        out.push(EquivalenceCase { name: name.into(), cfg, mode, lambda_p })
    };
    use SimMode::*;
    push("perfect_a9_n1", build(scenario(1, 0.5, 0.2, 0.1, 0.3, 9.0)), NoRelayPerfectSensing, 0.15);
    push("perfect_a9_n4", build(scenario(4, 0.5, 0.2, 0.1, 0.3, 9.0)), NoRelayPerfectSensing, 0.15);
    push("perfect_n3_dense", build(Scenario { beta: 2.0, ..scenario(3, 0.9, 0.0, 0.0, 0.6, 1.0) }), NoRelayPerfectSensing, 0.4);
    push("perfect_n6_sparse", build(scenario(6, 0.2, 0.0, 0.0, 0.5, 1.0)), NoRelayPerfectSensing, 0.1);
    push("imperfect_a9_n1", build(scenario(1, 0.5, 0.2, 0.1, 0.3, 9.0)), NoRelayImperfectSensing, 0.15);
    push("imperfect_a9_n4", build(scenario(4, 0.5, 0.2, 0.1, 0.3, 9.0)), NoRelayImperfectSensing, 0.2);
    push("imperfect_n2_noisy", build(scenario(2, 0.8, 0.5, 0.3, 0.7, 1.0)), NoRelayImperfectSensing, 0.3);
    push(
        "imperfect_n5_blind",
        build(Scenario { interference: 0.1, ..scenario(5, 0.3, 0.9, 0.05, 0.8, 0.5) }),
        NoRelayImperfectSensing,
        0.2,
    );
    let relay = |n, q, mu, pd, snr, load: f64| {
        let c = relay_config(n, q, mu, pd, snr);
        let lam = load * lambda_p_max_relay(&c).expect("relay bound");
        (c, lam)
    };
    let (c, l) = relay(1, 0.5, 0.3, 0.5, 0.0, 0.5);
    push("relay_n1_pd05", c, RelayPerfectSensing, l);
    let (c, l) = relay(1, 0.7, 0.4, 0.9, 3.0, 0.8);
    push("relay_n1_pd09", c, RelayPerfectSensing, l);
    let (c, l) = relay(3, 0.5, 0.3, 0.3, 0.0, 0.3);
    push("relay_n3_pd03", c, RelayPerfectSensing, l);
    let (c, l) = relay(5, 0.4, 0.5, 0.6, 5.0, 0.3);
    push("relay_n5_pd06", c, RelayPerfectSensing, l);
    out
}

/// Closed-form values to compare, paired with the simulated estimate.
///
/// For relaying with more than one node only the quantities that do not
/// depend on how relay queues share idle slots are compared: the service
/// rate of the primary queue, its idle fraction and the relay-queue
/// arrival rate.
pub fn equivalence_pairs(case: &EquivalenceCase, r: &SimResult) -> Vec<(String, f64, Estimate)> {
    let c = &case.cfg;
    let lam = case.lambda_p;
    let mut v = Vec::new();
    let per_node = |v: &mut Vec<(String, f64, Estimate)>, what: &str, x: f64, est: &[Estimate]| {
        for (j, e) in est.iter().enumerate() {
            v.push((format!("{what}[{j}]"), x, *e));
        }
    };
    match case.mode {
        SimMode::NoRelayPerfectSensing => {
            let mu = mu_p_max_symmetric(c);
            v.push(("mu_p".into(), mu, r.empirical_mu_p));
            v.push(("idle_fraction".into(), 1.0 - lam / mu, r.idle_fraction));
            let rate = secondary_rate_perfect_symmetric(c, lam).expect("stable case");
            per_node(&mut v, "lambda_j", rate, &r.empirical_lambda_j);
        }
        SimMode::NoRelayImperfectSensing => {
            let mu = mu_p_imperfect_symmetric(c);
            v.push(("mu_p".into(), mu, r.empirical_mu_p));
            v.push(("idle_fraction".into(), 1.0 - lam / mu, r.idle_fraction));
            let rate = secondary_rate_imperfect_symmetric(c, lam).expect("stable case");
            per_node(&mut v, "lambda_j", rate, &r.empirical_lambda_j);
        }
        SimMode::RelayPerfectSensing => {
            let mu = mu_p_relay(c);
            v.push(("mu_p".into(), mu, r.empirical_mu_p));
            v.push(("idle_fraction".into(), 1.0 - lam / mu, r.idle_fraction));
            let rq = relay_queue_rates(c, lam).expect("stable case");
            let rs = r.relay_stats.as_ref().expect("relay run");
            per_node(&mut v, "lambda_ext", rq.lambda_ext, &rs.lambda_ext);
            if c.n_secondary == 1 {
                per_node(&mut v, "mu_ext", rq.mu_ext, &rs.mu_ext);
                let rate = secondary_rate_relay(c, lam).expect("stable case");
                per_node(&mut v, "lambda_j", rate, &r.empirical_lambda_j);
            }
        }
    }
    v
}

/// Simulates one case and returns the comparisons outside `k` standard
/// errors, plus the number of comparisons made.
pub fn check_equivalence(case: &EquivalenceCase, n_slots: u64, seed: u64, k: f64) -> (Vec<String>, usize) {
    let sc = SimConfig::new(case.cfg.to_network(), case.lambda_p, n_slots, seed, case.mode);
    let r = match simulate(&sc, 1, 1) {
        Ok(r) => r,
        Err(e) => return (vec![format!("{}: {e}", case.name)], 1),
    };
    let pairs = equivalence_pairs(case, &r);
    let bad = pairs
        .iter()
        .filter(|(_, x, e)| !e.within(*x, k))
        .map(|(what, x, e)| format!("{} {what}: {} ± {} vs {x}", case.name, e.value, e.se))
        .collect();
    (bad, pairs.len())
}

fn sim_equivalence(slots: u64, seed: u64) -> CheckResult {
    let cases = equivalence_cases();
    let results: Vec<(Vec<String>, usize)> = cases.par_iter().map(|c| check_equivalence(c, slots, seed, 4.0)).collect();
    let total = results.iter().map(|r| r.1).sum();
    CheckResult::new("sim_matches_closed_forms", results.into_iter().flat_map(|r| r.0).collect(), total)
}

fn stability_probes(slots: u64, seed: u64) -> CheckResult {
    let cases: Vec<EquivalenceCase> =
        equivalence_cases().into_iter().filter(|c| c.mode != SimMode::RelayPerfectSensing).collect();
    let fails: Vec<Vec<String>> = cases
        .par_iter()
        .map(|c| {
            let mu = if c.mode.perfect_sensing() { mu_p_max_symmetric(&c.cfg) } else { mu_p_imperfect_symmetric(&c.cfg) };
            let sc = SimConfig::new(c.cfg.to_network(), 0.0, slots, seed, c.mode);
            let mut bad = Vec::new();
            for (factor, want) in [(0.9, Verdict::Stable), (1.1, Verdict::Unstable)] {
                match stability_probe(&sc, factor * mu) {
                    Ok(p) if p.verdict == want => {}
                    Ok(p) => bad.push(format!("{} at {factor}·mu: {}", c.name, p.verdict.as_str())),
                    Err(e) => bad.push(format!("{}: {e}", c.name)),
                }
            }
            bad
        })
        .collect();
    CheckResult::new("stability_probes", fails.into_iter().flatten().collect(), 2 * cases.len())
}

fn relay_draw(r: &mut ChaCha8Rng, n: usize) -> SymmetricConfig {
    let pd = r.random_range(0.05..1.0);
    let snr = r.random_range(-10.0..10.0);
    let mu = r.random_range(0.05..0.95);
    relay_config(n, 0.5, mu, pd, snr)
}

fn relay_monotonicity(seed: u64, draws: usize) -> CheckResult {
    let mut r = rng(seed, 1);
    let mut bad = Vec::new();
    for _ in 0..draws {
        let mut c = relay_draw(&mut r, 1);
        let mut prev = f64::INFINITY;
        for n in 1..=19 {
            c.n_secondary = n;
            let f = relay_failure_prob(&c).expect("valid");
            if !(f < prev) {
                bad.push(format!("pd={} snr={} N={n}: failure {f} not below {prev}", relay_decode_prob(&c), c.relay_snr()));
                break;
            }
            prev = f;
        }
        if let Err(n) = saturating_population(&mut c) {
            bad.push(format!("P_s still below 0.999 at N={n}"));
        }
    }
    CheckResult::new("relay_success_strictly_increasing", bad, draws)
}

/// Doubles `N` until the relay success probability exceeds 0.999.
pub fn saturating_population(c: &mut SymmetricConfig) -> Result<usize, usize> {
    let mut n = 1;
    while n <= 1 << 16 {
        c.n_secondary = n;
        if relay_success_prob(c).expect("valid") > 0.999 {
            return Ok(n);
        }
        n *= 2;
    }
    Err(n / 2)
}

fn benefit_equivalence(seed: u64, draws: usize) -> CheckResult {
    let mut r = rng(seed, 2);
    let mut bad = Vec::new();
    for _ in 0..draws {
        let c = relay_draw(&mut r, 1);
        let lam = r.random_range(0.01..0.99) * lambda_p_max_relay(&c).expect("bound");
        let b = relay_benefit_conditions(&c, lam).expect("stable");
        let pred = mu_p_max_symmetric(&c) < relay_success_prob(&c).expect("valid");
        if b.primary != b.secondary || b.primary != pred {
            bad.push(format!("{b:?} vs predicate {pred} at lambda {lam}"));
        }
    }
    CheckResult::new("single_node_benefit_equivalence", bad, draws)
}

fn service_rate_limit_check(seed: u64) -> CheckResult {
    let mut r = rng(seed, 3);
    let mut bad = Vec::new();
    let mut total = 0;
    for _ in 0..20 {
        let n = r.random_range(1..=8);
        let q = r.random_range(0.05..1.0);
        let pe = r.random_range(0.05..1.0);
        let mu = r.random_range(0.1..0.9);
        let a = r.random_range(0.1..10.0);
        let base = scenario(n, q, pe, 0.1, mu, a);
        let eval = |s: Scenario| mu_p_imperfect_symmetric(&s.build().expect("valid"));
        let checks = [
            ("a->inf", eval(Scenario { a: 1e8, ..base.clone() }), mu),
            ("a->0", eval(Scenario { a: 1e-8, ..base.clone() }), mu * (1.0 - q * pe).powi(n as i32)),
            ("q->0", eval(Scenario { q: 1e-8, ..base.clone() }), mu),
            ("q=1", eval(Scenario { q: 1.0, ..base.clone() }), mu * (1.0 - pe / (a + 1.0)).powi(n as i32)),
        ];
        for (what, got, want) in checks {
            total += 1;
            if rel_err(got, want) > 1e-6 {
                bad.push(format!("{what}: {got} vs {want}"));
            }
        }
        // vanishing primary power drives the service rate to zero
        let mut weak = base.build().expect("valid");
        weak.p_p *= 1e-8;
        total += 1;
        if mu_p_imperfect_symmetric(&weak) > 1e-6 {
            bad.push(format!("P_P->0: {}", mu_p_imperfect_symmetric(&weak)));
        }
    }
    CheckResult::new("service_rate_limits", bad, total)
}

fn constraint_boundary(seed: u64, draws: usize) -> CheckResult {
    let mut r = rng(seed, 4);
    let mut bad = Vec::new();
    for _ in 0..draws {
        let n = r.random_range(1..=10);
        let pe = r.random_range(0.05..1.0);
        let a = r.random_range(0.01..10.0);
        let mu = r.random_range(0.1..0.9);
        let mut c = scenario(n, 0.5, pe, 0.1, mu, a).build().expect("valid");
        let floor = mu * (1.0 - pe / (a + 1.0)).powi(n as i32);
        let lam = floor + r.random_range(0.01..0.99) * (mu - floor);
        let pc = protection_constraints(&c, lam).expect("feasible");
        c.q = pc.q_max;
        let got = mu_p_imperfect_symmetric(&c);
        if !(pc.q_max < 1.0) || rel_err(got, lam) > 1e-9 {
            bad.push(format!("q_max {} gives {got} vs {lam}", pc.q_max));
        }
    }
    CheckResult::new("constraint_boundary", bad, draws)
}

fn general_matches_symmetric(seed: u64) -> CheckResult {
    let mut r = rng(seed, 5);
    let mut bad = Vec::new();
    for n in 1..=5 {
        let c = scenario(n, r.random_range(0.1..1.0), r.random_range(0.0..1.0), r.random_range(0.0..0.9), 0.5, r.random_range(0.1..5.0))
            .build()
            .expect("valid");
        let net = c.to_network();
        let lam = 0.5 * mu_p_imperfect_symmetric(&c);
        let g = mu_p_imperfect_general(&net).expect("small");
        let rates = secondary_rate_imperfect_general(&net, lam).expect("stable");
        let s = secondary_rate_imperfect_symmetric(&c, lam).expect("stable");
        if rel_err(g, mu_p_imperfect_symmetric(&c)) > 1e-12 || rates.iter().any(|x| rel_err(*x, s) > 1e-12) {
            bad.push(format!("N={n}: {g} / {rates:?} vs symmetric {s}"));
        }
    }
    CheckResult::new("general_matches_symmetric", bad, 5)
}

fn asymmetric_relay(seed: u64) -> CheckResult {
    let mut r = rng(seed, 6);
    let mut bad = Vec::new();
    let mut total = 0;
    for n in 1..=6 {
        total += 1;
        let c = relay_draw(&mut r, n);
        let a = relay_asymmetric(&c.to_network()).expect("small");
        let ps = relay_success_prob(&c).expect("valid");
        let lm = lambda_p_max_relay(&c).expect("valid");
        if a.p_s.iter().any(|x| rel_err(*x, ps) > 1e-9) || rel_err(a.lambda_p_max, lm) > 1e-9 {
            bad.push(format!("N={n}: {:?}/{} vs {ps}/{lm}", a.p_s, a.lambda_p_max));
        }
    }
    for _ in 0..20 {
        total += 1;
        let mut net = relay_draw(&mut r, 1).to_network();
        let mut prev = relay_asymmetric(&net).expect("small").p_s;
        for _ in 2..=6 {
            net.push_node(r.random_range(0.2..5.0), 1.0, 0.5, 0.0, 0.0, r.random_range(0.5..2.0), r.random_range(0.2..2.0));
            let next = relay_asymmetric(&net).expect("small").p_s;
            if prev.iter().zip(&next).any(|(p, q)| *q < *p * (1.0 - 1e-12)) {
                bad.push(format!("P_s decreased: {prev:?} -> {next:?}"));
                break;
            }
            prev = next;
        }
    }
    CheckResult::new("asymmetric_relay_consistency", bad, total)
}

fn optimizer_perfect_sensing(seed: u64, draws: usize) -> CheckResult {
    let mut r = rng(seed, 7);
    let mut bad = Vec::new();
    for _ in 0..draws {
        let beta = r.random_range(0.5..10.0);
        let n = r.random_range(1..=10);
        let c = Scenario {
            beta,
            secondary_noise: 0.3,
            p0_cap: Some(10.0),
            ..scenario(n, 0.5, 0.0, 0.0, 0.6, 1.0)
        }
        .build()
        .expect("valid");
        let q_star = (1.0f64).min((1.0 + beta) / (beta * n as f64));
        match maximize_sum_throughput(&c, 0.3, GridSpec::default()) {
            Ok(o) if (o.q - q_star).abs() <= o.certificate.coarse_q_step && o.p0 == 10.0 => {}
            Ok(o) => bad.push(format!("beta={beta} N={n}: q*={} P0*={} vs {q_star}", o.q, o.p0)),
            Err(e) => bad.push(format!("beta={beta} N={n}: {e}")),
        }
    }
    CheckResult::new("optimizer_perfect_sensing", bad, draws)
}

/// Runs the named battery. `jobs` bounds the worker threads.
pub fn run_battery(battery: Battery, seed: u64, jobs: usize) -> BatteryReport {
    let (slots, draws) = match battery {
        Battery::Standard => (200_000, 100),
        Battery::Extended => (1_000_000, 200),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().expect("worker pool");
    let checks = pool.install(|| {
        let mut checks = vec![
            service_rate_limit_check(seed),
            general_matches_symmetric(seed),
            constraint_boundary(seed, draws),
            relay_monotonicity(seed, 50),
            benefit_equivalence(seed, draws),
            asymmetric_relay(seed),
            optimizer_perfect_sensing(seed, 20),
            sim_equivalence(slots, seed),
        ];
        if battery == Battery::Extended {
            checks.push(stability_probes(slots, seed));
        }
        checks
    });
    BatteryReport { battery, seed, checks }
}
