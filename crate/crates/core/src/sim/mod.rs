//! Slot-level Monte Carlo simulation of the access and relaying protocols.
//!
//! Each slot runs: Bernoulli arrival at the primary; the primary transmits
//! if its queue is nonempty; every secondary senses (misdetecting a busy
//! primary with probability `Pe`, false-alarming on an idle one with `Pf`);
//! secondaries that believe the channel idle transmit with probability `q`;
//! fresh Rayleigh gains are drawn for every link in use and each receiver
//! compares its SINR with its threshold; queues are updated from the
//! instantaneous ACKs.
//!
//! With relaying, a primary packet that fails at `D_P` but is decoded by some
//! secondaries leaves the primary queue and joins a single global FIFO of
//! relay packets. In an idle slot with a pending relay packet, the holders of
//! the oldest one transmit it jointly (their received powers add up at
//! `D_P`) and nobody sends own traffic.

mod engine;
pub mod rng;
mod stats;

pub use engine::{
    finalize, run_relay_slots, run_replication, run_slots, simulate, Conservation, RelayStats, RunCounts,
    SimConfig, SimMode, SimResult, StabilityStats, TraceRecord, BATCHES,
};
pub use stats::{
    batch_means, binomial, classify, slope_threshold, Estimate, SlopeAccumulator, Verdict, MIN_SLOPE_THRESHOLD,
};

use crate::error::{Error, Result};
use rng::{stream, CounterRng, Kind};

/// Outcome of a stability probe.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProbeOutcome {
    pub lambda_p: f64,
    pub verdict: Verdict,
    pub capacity: Estimate,
    pub slope: f64,
    pub slope_threshold: f64,
    pub tail_mean_backlog: f64,
}

/// Simulates `cfg` at arrival rate `lambda_p` and classifies the backlog as
/// stable, unstable or inconclusive.
pub fn stability_probe(cfg: &SimConfig, lambda_p: f64) -> Result<ProbeOutcome> {
    let mut c = cfg.clone();
    c.lambda_p = lambda_p;
    c.trace_every = None;
    let r = run_slots(&c)?;
    Ok(ProbeOutcome {
        lambda_p,
        verdict: r.stability.verdict,
        capacity: r.stability.capacity,
        slope: r.stability.slope,
        slope_threshold: r.stability.slope_threshold,
        tail_mean_backlog: r.stability.tail_mean_backlog,
    })
}

/// Direct Monte Carlo estimate of `Pr[S / (N0 + Σ I_k) > threshold]` for an
/// exponential desired power with mean `signal_mean` and independent
/// exponential interferer powers with the given means.
pub fn mc_success_prob(
    signal_mean: f64,
    noise: f64,
    threshold: f64,
    interferer_means: &[f64],
    draws: u64,
    seed: u64,
) -> Result<Estimate> {
    if draws < 10_000 {
        return Err(Error::domain(format!("need at least 10^4 draws, got {draws}")));
    }
    let rng = CounterRng::new(seed);
    let s_sig = stream(Kind::Mc, 0, 0);
    let s_int: Vec<u64> = (0..interferer_means.len()).map(|k| stream(Kind::Mc, k as u64 + 1, 0)).collect();
    let mut hits = 0u64;
    for d in 0..draws {
        let s = rng.exponential(signal_mean, s_sig, d, 0);
        let i: f64 = interferer_means
            .iter()
            .zip(&s_int)
            .map(|(&m, &st)| rng.exponential(m, st, d, 0))
            .sum();
        if s > threshold * (noise + i) {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    Ok(Estimate::new(p, (p * (1.0 - p) / draws as f64).sqrt()))
}
