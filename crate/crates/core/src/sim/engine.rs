use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::rng::{node, stream, CounterRng, Kind};
use super::stats::{
    batch_means, binomial, classify, slope_threshold, Estimate, SlopeAccumulator, Verdict,
};
use crate::config::NetworkConfig;
use crate::error::{Error, Result};

/// Batches used for batch-means standard errors.
pub const BATCHES: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    NoRelayPerfectSensing,
    NoRelayImperfectSensing,
    RelayPerfectSensing,
}

impl SimMode {
    pub fn relays(&self) -> bool {
        matches!(self, SimMode::RelayPerfectSensing)
    }

    pub fn perfect_sensing(&self) -> bool {
        !matches!(self, SimMode::NoRelayImperfectSensing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub network: NetworkConfig,
    pub lambda_p: f64,
    pub n_slots: u64,
    pub seed: u64,
    pub mode: SimMode,
    /// Defaults to 10% of `n_slots`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_slots: Option<u64>,
    /// Record every k-th slot of the first replication.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<u64>,
}

impl SimConfig {
    pub fn new(network: NetworkConfig, lambda_p: f64, n_slots: u64, seed: u64, mode: SimMode) -> Self {
        Self { network, lambda_p, n_slots, seed, mode, warmup_slots: None, trace_every: None }
    }

    pub fn warmup(&self) -> u64 {
        self.warmup_slots.unwrap_or(self.n_slots / 10)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if !(0.0..=1.0).contains(&self.lambda_p) {
            return Err(Error::Config(format!("lambda_p must lie in [0, 1], got {}", self.lambda_p)));
        }
        if self.n_slots == 0 || self.n_slots <= self.warmup() {
            return Err(Error::Config(format!(
                "n_slots ({}) must exceed warmup_slots ({})",
                self.n_slots,
                self.warmup()
            )));
        }
        if self.trace_every == Some(0) {
            return Err(Error::Config("trace_every must be positive".into()));
        }
        Ok(())
    }

    /// The network actually simulated: perfect-sensing modes ignore the
    /// configured error probabilities.
    pub fn effective_network(&self) -> NetworkConfig {
        if self.mode.perfect_sensing() {
            self.network.with_perfect_sensing()
        } else {
            self.network.clone()
        }
    }
}

/// One sampled slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: u64,
    /// Primary queue length at transmission time.
    pub q_p: u64,
    /// Per-node relay queue lengths at transmission time.
    pub relay_queues: Vec<u32>,
    pub primary_tx: bool,
    pub primary_success: bool,
    /// Nodes jointly relaying the head relay packet.
    pub relay_tx: Vec<u32>,
    pub relay_success: bool,
    /// Nodes sending their own traffic.
    pub own_tx: Vec<u32>,
    pub own_success: Vec<u32>,
}

/// Packet accounting over a whole run, warmup included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    pub arrivals: u64,
    pub delivered_direct: u64,
    pub delivered_relay: u64,
    pub in_primary_queue: u64,
    /// Distinct packets waiting in relay queues.
    pub in_relay_queues: u64,
    pub duplicate_deliveries: u64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.duplicate_deliveries == 0
            && self.arrivals
                == self.delivered_direct + self.delivered_relay + self.in_primary_queue + self.in_relay_queues
    }

    fn add(&mut self, o: &Self) {
        self.arrivals += o.arrivals;
        self.delivered_direct += o.delivered_direct;
        self.delivered_relay += o.delivered_relay;
        self.in_primary_queue += o.in_primary_queue;
        self.in_relay_queues += o.in_relay_queues;
        self.duplicate_deliveries += o.duplicate_deliveries;
    }
}

/// Raw counters of one or more replications; merging is associative and
/// follows replication order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub n: usize,
    pub slots: u64,
    pub busy_slots: u64,
    pub primary_departures: u64,
    pub direct_successes: u64,
    pub relayed_created: u64,
    pub relay_attempts: u64,
    pub relay_successes: u64,
    pub own_success: Vec<u64>,
    pub relay_arrivals: Vec<u64>,
    pub relay_services: Vec<u64>,
    pub relay_attempts_node: Vec<u64>,
    pub relay_successes_node: Vec<u64>,
    pub relay_nonempty: Vec<u64>,
    /// Own-traffic transmissions made while some relay packet was pending.
    pub priority_violations: u64,
    pub batch_sizes: Vec<u64>,
    pub batch_idle: Vec<u64>,
    /// `[node][batch]`
    pub batch_own: Vec<Vec<u64>>,
    /// `[node][batch]`
    pub batch_relay_arrivals: Vec<Vec<u64>>,
    /// Backlog slope over the last half of each replication.
    pub slopes: Vec<f64>,
    pub tail_backlog: Vec<f64>,
    pub conservation: Conservation,
}

impl RunCounts {
    fn new(n: usize, batches: usize) -> Self {
        Self {
            n,
            own_success: vec![0; n],
            relay_arrivals: vec![0; n],
            relay_services: vec![0; n],
            relay_attempts_node: vec![0; n],
            relay_successes_node: vec![0; n],
            relay_nonempty: vec![0; n],
            batch_sizes: vec![0; batches],
            batch_idle: vec![0; batches],
            batch_own: vec![vec![0; batches]; n],
            batch_relay_arrivals: vec![vec![0; batches]; n],
            ..Self::default()
        }
    }

    pub fn merge(&mut self, o: &RunCounts) {
        if self.slots == 0 && self.slopes.is_empty() {
            *self = o.clone();
            return;
        }
        self.slots += o.slots;
        self.busy_slots += o.busy_slots;
        self.primary_departures += o.primary_departures;
        self.direct_successes += o.direct_successes;
        self.relayed_created += o.relayed_created;
        self.relay_attempts += o.relay_attempts;
        self.relay_successes += o.relay_successes;
        self.priority_violations += o.priority_violations;
        let add = |a: &mut Vec<u64>, b: &Vec<u64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.own_success, &o.own_success);
        add(&mut self.relay_arrivals, &o.relay_arrivals);
        add(&mut self.relay_services, &o.relay_services);
        add(&mut self.relay_attempts_node, &o.relay_attempts_node);
        add(&mut self.relay_successes_node, &o.relay_successes_node);
        add(&mut self.relay_nonempty, &o.relay_nonempty);
        self.batch_sizes.extend(&o.batch_sizes);
        self.batch_idle.extend(&o.batch_idle);
        for (a, b) in self.batch_own.iter_mut().zip(&o.batch_own) {
            a.extend(b);
        }
        for (a, b) in self.batch_relay_arrivals.iter_mut().zip(&o.batch_relay_arrivals) {
            a.extend(b);
        }
        self.slopes.extend(&o.slopes);
        self.tail_backlog.extend(&o.tail_backlog);
        self.conservation.add(&o.conservation);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayStats {
    /// Per-node relay-queue arrivals per slot.
    pub lambda_ext: Vec<Estimate>,
    /// Per-node relay service rate: idle-slot fraction times the success
    /// rate of relay attempts involving the node.
    pub mu_ext: Vec<Estimate>,
    /// Fraction of slots in which each node's relay queue is nonempty.
    pub nonempty_fraction: Vec<f64>,
    pub success_per_attempt: Estimate,
    /// Fraction of primary departures handed to relays.
    pub relayed_fraction: Estimate,
    pub attempts: u64,
    pub successes: u64,
    pub priority_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityStats {
    pub verdict: Verdict,
    /// Largest sustainable arrival rate estimated from the run.
    pub capacity: Estimate,
    pub slope: f64,
    pub slope_threshold: f64,
    pub tail_mean_backlog: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mode: SimMode,
    pub lambda_p: f64,
    pub n_slots: u64,
    pub warmup_slots: u64,
    pub replications: u32,
    /// Primary departures per busy slot.
    pub empirical_mu_p: Estimate,
    pub empirical_lambda_j: Vec<Estimate>,
    /// Fraction of slots with an empty primary queue.
    pub idle_fraction: Estimate,
    pub relay_stats: Option<RelayStats>,
    pub stability: StabilityStats,
    pub conservation: Conservation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRecord>>,
}

impl SimResult {
    pub fn stability_verdict(&self) -> Verdict {
        self.stability.verdict
    }

    /// Sampled `(slot, Q_P)` series, if tracing was on.
    pub fn queue_trajectory(&self) -> Option<Vec<(u64, u64)>> {
        self.trace.as_ref().map(|t| t.iter().map(|r| (r.slot, r.q_p)).collect())
    }
}

struct Pending {
    id: u64,
    holders: Vec<u32>,
}

struct Links {
    n: usize,
    noise: f64,
    beta_p: f64,
    betas: Vec<f64>,
    q: Vec<f64>,
    pe: Vec<f64>,
    pf: Vec<f64>,
    pp: (f64, u64),
    to_dp: Vec<(f64, u64)>,
    /// `[k * n + j]`: `S_k -> D_j`
    ss: Vec<(f64, u64)>,
    p_to_d: Vec<(f64, u64)>,
    p_to_s: Vec<(f64, u64)>,
}

impl Links {
    fn new(net: &NetworkConfig) -> Self {
        let n = net.n();
        let f = |a: u64, b: u64| stream(Kind::Fading, a, b);
        let mut ss = Vec::with_capacity(n * n);
        for k in 0..n {
            for j in 0..n {
                ss.push((net.secondary_link_rx(k, j), f(node::secondary(k), node::secondary(j))));
            }
        }
        Self {
            n,
            noise: net.noise_power,
            beta_p: net.beta_p,
            betas: net.betas.clone(),
            q: net.access_probs.clone(),
            pe: net.miss_probs.clone(),
            pf: net.false_alarm_probs.clone(),
            pp: (net.primary_link_rx(), f(node::PRIMARY, node::PRIMARY)),
            to_dp: (0..n).map(|k| (net.secondary_to_primary_rx(k), f(node::secondary(k), node::PRIMARY))).collect(),
            ss,
            p_to_d: (0..n).map(|j| (net.primary_to_secondary_rx(j), f(node::PRIMARY, node::secondary(j)))).collect(),
            p_to_s: (0..n).map(|j| (net.primary_to_relay_rx(j), f(node::PRIMARY, node::relay_rx(j)))).collect(),
        }
    }
}

#[inline]
fn gain(rng: &CounterRng, link: (f64, u64), slot: u64) -> f64 {
    rng.exponential(link.0, link.1, slot, 0)
}

struct Delivered(Vec<u64>);

impl Delivered {
    /// Marks `id` delivered; returns false if it already was.
    fn mark(&mut self, id: u64) -> bool {
        let (w, b) = ((id / 64) as usize, id % 64);
        if w >= self.0.len() {
            self.0.resize(w + 1, 0);
        }
        let fresh = self.0[w] >> b & 1 == 0;
        self.0[w] |= 1 << b;
        fresh
    }
}

/// Runs one replication with the given generator.
pub fn run_replication(cfg: &SimConfig, rng: &CounterRng, want_trace: bool) -> (RunCounts, Option<Vec<TraceRecord>>) {
    let net = cfg.effective_network();
    let l = Links::new(&net);
    let n = l.n;
    let relay = cfg.mode.relays();
    let total = cfg.n_slots;
    let warmup = cfg.warmup();
    let measured = total - warmup;
    let batches = BATCHES.min(measured).max(1);
    let mut c = RunCounts::new(n, batches as usize);

    let s_arrival = stream(Kind::Arrival, 0, 0);
    let s_sense: Vec<u64> = (0..n).map(|i| stream(Kind::Sense, node::secondary(i), 0)).collect();
    let s_access: Vec<u64> = (0..n).map(|i| stream(Kind::Access, node::secondary(i), 0)).collect();

    let mut head_id = 0u64;
    let mut next_id = 0u64;
    let mut pending: VecDeque<Pending> = VecDeque::new();
    let mut relay_len = vec![0u32; n];
    let mut delivered = Delivered(Vec::new());
    let mut cons = Conservation::default();
    let mut slope = SlopeAccumulator::default();
    let half = total / 2;
    let mid = (half as f64 + (total - 1) as f64) / 2.0;
    let mut trace = if want_trace { Some(Vec::new()) } else { None };
    let every = cfg.trace_every.unwrap_or(1);

    let mut tx: Vec<usize> = Vec::with_capacity(n);
    let mut own_ok: Vec<u32> = Vec::new();
    let mut decoded: Vec<u32> = Vec::with_capacity(n);
    let threshold_p = l.beta_p * l.noise;

    for t in 0..total {
        let measuring = t >= warmup;
        let b = if measuring { ((t - warmup) * batches / measured) as usize } else { 0 };
        if rng.uniform(s_arrival, t, 0) < cfg.lambda_p {
            next_id += 1;
            cons.arrivals += 1;
        }
        let q_p = next_id - head_id;
        let busy = q_p > 0;
        if measuring {
            c.slots += 1;
            c.batch_sizes[b] += 1;
            if busy {
                c.busy_slots += 1;
            } else {
                c.batch_idle[b] += 1;
            }
            for (j, &len) in relay_len.iter().enumerate() {
                if len > 0 {
                    c.relay_nonempty[j] += 1;
                }
            }
        }
        let record = trace.is_some() && t % every == 0;
        let relay_queues_now = if record { relay_len.clone() } else { Vec::new() };
        let mut primary_success = false;
        let mut relay_tx: Vec<u32> = Vec::new();
        let mut relay_success = false;
        tx.clear();
        own_ok.clear();

        if relay && !busy && !pending.is_empty() {
            let head = pending.front().expect("nonempty");
            let sum: f64 = head.holders.iter().map(|&i| gain(rng, l.to_dp[i as usize], t)).sum();
            let ok = sum > threshold_p;
            if measuring {
                c.relay_attempts += 1;
                for &i in &head.holders {
                    c.relay_attempts_node[i as usize] += 1;
                }
                if ok {
                    c.relay_successes += 1;
                    for &i in &head.holders {
                        c.relay_successes_node[i as usize] += 1;
                    }
                }
            }
            if record {
                relay_tx = head.holders.clone();
                relay_success = ok;
            }
            if ok {
                let p = pending.pop_front().expect("nonempty");
                for &i in &p.holders {
                    relay_len[i as usize] -= 1;
                    if measuring {
                        c.relay_services[i as usize] += 1;
                    }
                }
                cons.delivered_relay += 1;
                if !delivered.mark(p.id) {
                    cons.duplicate_deliveries += 1;
                }
            }
        } else {
            for i in 0..n {
                let believes_idle = if busy {
                    l.pe[i] > 0.0 && rng.uniform(s_sense[i], t, 0) < l.pe[i]
                } else {
                    !(l.pf[i] > 0.0 && rng.uniform(s_sense[i], t, 0) < l.pf[i])
                };
                if believes_idle && rng.uniform(s_access[i], t, 0) < l.q[i] {
                    tx.push(i);
                }
            }
            if !pending.is_empty() && !tx.is_empty() {
                c.priority_violations += tx.len() as u64;
            }
            if busy {
                let signal = gain(rng, l.pp, t);
                let interference: f64 = tx.iter().map(|&k| gain(rng, l.to_dp[k], t)).sum();
                primary_success = signal > l.beta_p * (l.noise + interference);
                if primary_success {
                    if measuring {
                        c.primary_departures += 1;
                        c.direct_successes += 1;
                    }
                    cons.delivered_direct += 1;
                    if !delivered.mark(head_id) {
                        cons.duplicate_deliveries += 1;
                    }
                    head_id += 1;
                } else if relay {
                    decoded.clear();
                    for j in 0..n {
                        if gain(rng, l.p_to_s[j], t) > threshold_p {
                            decoded.push(j as u32);
                        }
                    }
                    if !decoded.is_empty() {
                        for &j in &decoded {
                            relay_len[j as usize] += 1;
                            if measuring {
                                c.relay_arrivals[j as usize] += 1;
                                c.batch_relay_arrivals[j as usize][b] += 1;
                            }
                        }
                        if measuring {
                            c.primary_departures += 1;
                            c.relayed_created += 1;
                        }
                        pending.push_back(Pending { id: head_id, holders: decoded.clone() });
                        head_id += 1;
                    }
                }
            }
            for &j in &tx {
                let signal = gain(rng, l.ss[j * n + j], t);
                let mut interference: f64 =
                    tx.iter().filter(|&&k| k != j).map(|&k| gain(rng, l.ss[k * n + j], t)).sum();
                if busy {
                    interference += gain(rng, l.p_to_d[j], t);
                }
                if signal > l.betas[j] * (l.noise + interference) {
                    if measuring {
                        c.own_success[j] += 1;
                        c.batch_own[j][b] += 1;
                    }
                    if record {
                        own_ok.push(j as u32);
                    }
                }
            }
        }

        if t >= half {
            let backlog = (next_id - head_id) + pending.len() as u64;
            slope.push(t as f64 - mid, backlog as f64);
        }
        if record {
            if let Some(tr) = trace.as_mut() {
                tr.push(TraceRecord {
                    slot: t,
                    q_p,
                    relay_queues: relay_queues_now,
                    primary_tx: busy,
                    primary_success,
                    relay_tx,
                    relay_success,
                    own_tx: tx.iter().map(|&i| i as u32).collect(),
                    own_success: own_ok.clone(),
                });
            }
        }
    }
    cons.in_primary_queue = next_id - head_id;
    cons.in_relay_queues = pending.len() as u64;
    c.conservation = cons;
    c.slopes.push(slope.slope());
    c.tail_backlog.push(slope.mean_y());
    (c, trace)
}

/// Capacity estimate: primary departures per busy slot, and with relaying
/// also the relay slots each packet consumes on average.
fn capacity(c: &RunCounts, relay: bool) -> Estimate {
    let mu = binomial(c.primary_departures, c.busy_slots);
    if !relay || c.relayed_created == 0 {
        return mu;
    }
    let frac = binomial(c.relayed_created, c.primary_departures);
    let succ = binomial(c.relay_successes, c.relay_attempts);
    if c.relay_attempts < 100 || c.relay_successes == 0 {
        // too few relay attempts to price them; the primary rate still bounds capacity
        return mu;
    }
    let g = 1.0 / mu.value + frac.value / succ.value;
    let var = (mu.se / (mu.value * mu.value)).powi(2)
        + (frac.se / succ.value).powi(2)
        + (frac.value * succ.se / (succ.value * succ.value)).powi(2);
    Estimate::new(1.0 / g, var.sqrt() / (g * g))
}

/// Turns merged counters into rates, standard errors and a verdict.
pub fn finalize(cfg: &SimConfig, c: &RunCounts, replications: u32, trace: Option<Vec<TraceRecord>>) -> SimResult {
    let relay = cfg.mode.relays();
    let idle = batch_means(&c.batch_idle, &c.batch_sizes);
    let relay_stats = relay.then(|| {
        let mu_ext = (0..c.n)
            .map(|j| {
                let s = binomial(c.relay_successes_node[j], c.relay_attempts_node[j]);
                if c.relay_attempts_node[j] == 0 {
                    return Estimate::new(f64::NAN, f64::INFINITY);
                }
                let v = idle.value * s.value;
                let se = ((idle.value * s.se).powi(2) + (s.value * idle.se).powi(2)).sqrt();
                Estimate::new(v, se)
            })
            .collect();
        RelayStats {
            lambda_ext: c.batch_relay_arrivals.iter().map(|b| batch_means(b, &c.batch_sizes)).collect(),
            mu_ext,
            nonempty_fraction: c.relay_nonempty.iter().map(|&k| k as f64 / c.slots as f64).collect(),
            success_per_attempt: binomial(c.relay_successes, c.relay_attempts),
            relayed_fraction: binomial(c.relayed_created, c.primary_departures),
            attempts: c.relay_attempts,
            successes: c.relay_successes,
            priority_violations: c.priority_violations,
        }
    });
    let cap = capacity(c, relay);
    let slope = c.slopes.iter().sum::<f64>() / c.slopes.len().max(1) as f64;
    let threshold = slope_threshold(cfg.lambda_p, cap.value);
    let verdict = if cap.value.is_nan() {
        // no busy slot was observed: the primary never had a packet
        if cfg.lambda_p == 0.0 {
            Verdict::Stable
        } else {
            Verdict::Inconclusive
        }
    } else {
        classify(cfg.lambda_p, cap, slope, threshold)
    };
    SimResult {
        mode: cfg.mode,
        lambda_p: cfg.lambda_p,
        n_slots: cfg.n_slots,
        warmup_slots: cfg.warmup(),
        replications,
        empirical_mu_p: binomial(c.primary_departures, c.busy_slots),
        empirical_lambda_j: c.batch_own.iter().map(|b| batch_means(b, &c.batch_sizes)).collect(),
        idle_fraction: idle,
        relay_stats,
        stability: StabilityStats {
            verdict,
            capacity: cap,
            slope,
            slope_threshold: threshold,
            tail_mean_backlog: c.tail_backlog.iter().sum::<f64>() / c.tail_backlog.len().max(1) as f64,
        },
        conservation: c.conservation,
        trace,
    }
}

/// Simulates the protocol selected by `cfg.mode` for one replication.
pub fn run_slots(cfg: &SimConfig) -> Result<SimResult> {
    simulate(cfg, 1, 1)
}

/// Relay-mode entry point; rejects non-relay configurations.
pub fn run_relay_slots(cfg: &SimConfig) -> Result<SimResult> {
    if !cfg.mode.relays() {
        return Err(Error::Config("run_relay_slots needs mode relay_perfect_sensing".into()));
    }
    run_slots(cfg)
}

/// Runs `replications` independent replications on up to `jobs` threads and
/// merges them in replication order, so the result does not depend on `jobs`.
pub fn simulate(cfg: &SimConfig, replications: u32, jobs: usize) -> Result<SimResult> {
    cfg.validate()?;
    if replications == 0 {
        return Err(Error::Config("replications must be positive".into()));
    }
    let want_trace = cfg.trace_every.is_some();
    let one = |r: u32| run_replication(cfg, &CounterRng::replication(cfg.seed, u64::from(r)), want_trace && r == 0);
    let parts: Vec<(RunCounts, Option<Vec<TraceRecord>>)> = if jobs <= 1 || replications == 1 {
        (0..replications).map(one).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..replications).into_par_iter().map(one).collect())
    };
    let mut merged = RunCounts::default();
    let mut trace = None;
    for (r, (counts, tr)) in parts.into_iter().enumerate() {
        merged.merge(&counts);
        if r == 0 {
            trace = tr;
        }
    }
    Ok(finalize(cfg, &merged, replications, trace))
}
