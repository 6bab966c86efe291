//! System descriptions: the full asymmetric network and the reduced
//! symmetric parameterisation that expands into it.
//!
//! Powers may be written in configuration files either as linear watts or as
//! strings with a unit suffix (`"10 dBW"`, `"0.5 W"`). They are normalised to
//! linear watts on parse and always serialised as plain numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean received power `P · r^{-α} · σ²` of a Rayleigh link.
#[inline]
pub fn mean_rx(power: f64, distance: f64, alpha: f64, variance: f64) -> f64 {
    power * distance.powf(-alpha) * variance
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Parses `"10 dBW"`, `"-5dB"`, `"2.5 W"` or a bare number into linear units.
pub fn parse_power(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let (num, db) = if let Some(v) = lower.strip_suffix("dbw") {
        (v, true)
    } else if let Some(v) = lower.strip_suffix("db") {
        (v, true)
    } else if let Some(v) = lower.strip_suffix('w') {
        (v, false)
    } else {
        (lower.as_str(), false)
    };
    let x: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse power value {s:?} (expected e.g. \"10 dBW\" or 0.5)"))?;
    Ok(if db { db_to_linear(x) } else { x })
}

pub(crate) mod power_serde {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Deserialize;
    use std::fmt;

    struct PowerVisitor;

    impl<'de> Visitor<'de> for PowerVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a power in watts or a string such as \"10 dBW\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            super::parse_power(v).map_err(E::custom)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(PowerVisitor)
    }

    #[derive(Deserialize)]
    struct Wrapped(#[serde(deserialize_with = "deserialize")] f64);

    pub fn deserialize_vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Wrapped> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|w| w.0).collect())
    }

    pub fn deserialize_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v: Option<Wrapped> = Option::deserialize(d)?;
        Ok(v.map(|w| w.0))
    }
}

/// One value per directed link class of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkTable {
    /// `S_P -> D_P`
    pub primary: f64,
    /// `secondary[k][j]`: `S_k -> D_j`
    pub secondary: Vec<Vec<f64>>,
    /// `S_P -> D_j`
    pub primary_to_secondary: Vec<f64>,
    /// `S_j -> D_P`
    pub secondary_to_primary: Vec<f64>,
    /// `S_P -> S_j` (the link a relaying secondary decodes on)
    pub primary_to_relay: Vec<f64>,
}

impl LinkTable {
    pub fn uniform(n: usize, value: f64) -> Self {
        Self {
            primary: value,
            secondary: vec![vec![value; n]; n],
            primary_to_secondary: vec![value; n],
            secondary_to_primary: vec![value; n],
            primary_to_relay: vec![value; n],
        }
    }

    fn check(&self, n: usize, what: &str) -> Result<()> {
        let bad_dim = |field: &str| Error::Config(format!("{what}.{field}: expected {n} entries"));
        if self.secondary.len() != n || self.secondary.iter().any(|row| row.len() != n) {
            return Err(Error::Config(format!("{what}.secondary: expected an {n}x{n} matrix")));
        }
        if self.primary_to_secondary.len() != n {
            return Err(bad_dim("primary_to_secondary"));
        }
        if self.secondary_to_primary.len() != n {
            return Err(bad_dim("secondary_to_primary"));
        }
        if self.primary_to_relay.len() != n {
            return Err(bad_dim("primary_to_relay"));
        }
        let all = std::iter::once(self.primary)
            .chain(self.secondary.iter().flatten().copied())
            .chain(self.primary_to_secondary.iter().copied())
            .chain(self.secondary_to_primary.iter().copied())
            .chain(self.primary_to_relay.iter().copied());
        for v in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{what}: all entries must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn push_node(&mut self, value: f64) {
        for row in &mut self.secondary {
            row.push(value);
        }
        let n = self.secondary.len() + 1;
        self.secondary.push(vec![value; n]);
        self.primary_to_secondary.push(value);
        self.secondary_to_primary.push(value);
        self.primary_to_relay.push(value);
    }
}

/// Full asymmetric system description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_secondary: usize,
    #[serde(deserialize_with = "power_serde::deserialize")]
    pub primary_power: f64,
    #[serde(deserialize_with = "power_serde::deserialize_vec")]
    pub secondary_powers: Vec<f64>,
    pub path_loss_exp: f64,
    #[serde(deserialize_with = "power_serde::deserialize")]
    pub noise_power: f64,
    /// Primary SINR threshold `β_P`.
    pub beta_p: f64,
    /// Per-secondary SINR thresholds `β_j`.
    pub betas: Vec<f64>,
    pub distances: LinkTable,
    pub fading_variances: LinkTable,
    pub access_probs: Vec<f64>,
    pub miss_probs: Vec<f64>,
    pub false_alarm_probs: Vec<f64>,
}

fn check_prob(v: f64, field: &str) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{field}: probability must lie in [0, 1], got {v}")))
    }
}

fn check_positive(v: f64, field: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{field}: must be finite and > 0, got {v}")))
    }
}

impl NetworkConfig {
    pub fn n(&self) -> usize {
        self.n_secondary
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_secondary;
        let per_node = [
            ("secondary_powers", self.secondary_powers.len()),
            ("betas", self.betas.len()),
            ("access_probs", self.access_probs.len()),
            ("miss_probs", self.miss_probs.len()),
            ("false_alarm_probs", self.false_alarm_probs.len()),
        ];
        for (field, len) in per_node {
            if len != n {
                return Err(Error::Config(format!("{field}: expected {n} entries, got {len}")));
            }
        }
        check_positive(self.primary_power, "primary_power")?;
        check_positive(self.path_loss_exp, "path_loss_exp")?;
        check_positive(self.beta_p, "beta_p")?;
        if !(self.noise_power.is_finite() && self.noise_power >= 0.0) {
            return Err(Error::Config(format!("noise_power: must be >= 0, got {}", self.noise_power)));
        }
        for (i, &p) in self.secondary_powers.iter().enumerate() {
            check_positive(p, &format!("secondary_powers[{i}]"))?;
        }
        for (i, &b) in self.betas.iter().enumerate() {
            check_positive(b, &format!("betas[{i}]"))?;
        }
        for (i, &q) in self.access_probs.iter().enumerate() {
            check_prob(q, &format!("access_probs[{i}]"))?;
        }
        for (i, &p) in self.miss_probs.iter().enumerate() {
            check_prob(p, &format!("miss_probs[{i}]"))?;
        }
        for (i, &p) in self.false_alarm_probs.iter().enumerate() {
            check_prob(p, &format!("false_alarm_probs[{i}]"))?;
        }
        self.distances.check(n, "distances")?;
        self.fading_variances.check(n, "fading_variances")?;
        Ok(())
    }

    fn rx(&self, power: f64, d: f64, var: f64) -> f64 {
        mean_rx(power, d, self.path_loss_exp, var)
    }

    /// Mean received power at `D_P` from `S_P`.
    pub fn primary_link_rx(&self) -> f64 {
        self.rx(self.primary_power, self.distances.primary, self.fading_variances.primary)
    }

    /// Mean received power at `D_j` from `S_k`.
    pub fn secondary_link_rx(&self, k: usize, j: usize) -> f64 {
        self.rx(
            self.secondary_powers[k],
            self.distances.secondary[k][j],
            self.fading_variances.secondary[k][j],
        )
    }

    /// Mean received power at `D_j` from `S_P`.
    pub fn primary_to_secondary_rx(&self, j: usize) -> f64 {
        self.rx(
            self.primary_power,
            self.distances.primary_to_secondary[j],
            self.fading_variances.primary_to_secondary[j],
        )
    }

    /// Mean received power at `D_P` from `S_j`.
    pub fn secondary_to_primary_rx(&self, j: usize) -> f64 {
        self.rx(
            self.secondary_powers[j],
            self.distances.secondary_to_primary[j],
            self.fading_variances.secondary_to_primary[j],
        )
    }

    /// Mean received power at `S_j` from `S_P`.
    pub fn primary_to_relay_rx(&self, j: usize) -> f64 {
        self.rx(
            self.primary_power,
            self.distances.primary_to_relay[j],
            self.fading_variances.primary_to_relay[j],
        )
    }

    /// Appends a secondary node whose every link uses `distance` and
    /// `variance`; existing links are untouched.
    pub fn push_node(&mut self, power: f64, beta: f64, q: f64, pe: f64, pf: f64, distance: f64, variance: f64) {
        self.n_secondary += 1;
        self.secondary_powers.push(power);
        self.betas.push(beta);
        self.access_probs.push(q);
        self.miss_probs.push(pe);
        self.false_alarm_probs.push(pf);
        self.distances.push_node(distance);
        self.fading_variances.push_node(variance);
    }

    /// Same network with perfect sensing at every node.
    pub fn with_perfect_sensing(&self) -> Self {
        let mut c = self.clone();
        c.miss_probs.iter_mut().for_each(|p| *p = 0.0);
        c.false_alarm_probs.iter_mut().for_each(|p| *p = 0.0);
        c
    }
}

/// Symmetric network with Rayleigh fading.
///
/// Every secondary transmits at `p0` with access probability `q` and
/// threshold `beta`; all secondary-to-secondary-destination links have
/// distance `r_j` and variance `sigma_tilde_sq`, all secondary-to-`D_P` links
/// `r_0` / `sigma0_sq`, all `S_P`-to-secondary-source links `r` / `sigma_sq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetricConfig {
    pub n_secondary: usize,
    #[serde(deserialize_with = "power_serde::deserialize")]
    pub p0: f64,
    pub q: f64,
    pub beta: f64,
    pub beta_p: f64,
    pub r_j: f64,
    pub r_0: f64,
    pub r: f64,
    /// `S_P -> D_P` distance.
    pub r_pp: f64,
    /// `S_P -> D_j` distance.
    pub r_pj: f64,
    pub sigma_tilde_sq: f64,
    pub sigma0_sq: f64,
    pub sigma_sq: f64,
    pub sigma_pp_sq: f64,
    pub sigma_pj_sq: f64,
    #[serde(deserialize_with = "power_serde::deserialize")]
    pub p_p: f64,
    #[serde(deserialize_with = "power_serde::deserialize")]
    pub noise: f64,
    pub path_loss_exp: f64,
    pub pe: f64,
    pub pf: f64,
    /// Hardware limit on `p0`, used by the optimiser.
    #[serde(default, deserialize_with = "power_serde::deserialize_opt", skip_serializing_if = "Option::is_none")]
    pub p0_cap: Option<f64>,
}

impl SymmetricConfig {
    pub fn validate(&self) -> Result<()> {
        for (v, f) in [
            (self.p0, "p0"),
            (self.beta, "beta"),
            (self.beta_p, "beta_p"),
            (self.r_j, "r_j"),
            (self.r_0, "r_0"),
            (self.r, "r"),
            (self.r_pp, "r_pp"),
            (self.r_pj, "r_pj"),
            (self.sigma_tilde_sq, "sigma_tilde_sq"),
            (self.sigma0_sq, "sigma0_sq"),
            (self.sigma_sq, "sigma_sq"),
            (self.sigma_pp_sq, "sigma_pp_sq"),
            (self.sigma_pj_sq, "sigma_pj_sq"),
            (self.p_p, "p_p"),
            (self.path_loss_exp, "path_loss_exp"),
        ] {
            check_positive(v, f)?;
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config(format!("noise: must be >= 0, got {}", self.noise)));
        }
        check_prob(self.q, "q")?;
        check_prob(self.pe, "pe")?;
        check_prob(self.pf, "pf")?;
        if let Some(cap) = self.p0_cap {
            check_positive(cap, "p0_cap")?;
        }
        Ok(())
    }

    fn rx(&self, power: f64, d: f64, var: f64) -> f64 {
        mean_rx(power, d, self.path_loss_exp, var)
    }

    /// Primary-to-secondary received power ratio at `D_P`:
    /// `a = σ_pp² P_P r_pp^{-α} / (σ0² β_P P0 r0^{-α})`.
    pub fn a(&self) -> f64 {
        self.primary_link_rx() / (self.beta_p * self.rx(self.p0, self.r_0, self.sigma0_sq))
    }

    pub fn primary_link_rx(&self) -> f64 {
        self.rx(self.p_p, self.r_pp, self.sigma_pp_sq)
    }

    /// Mean received power at a secondary source from `S_P`.
    pub fn relay_link_rx(&self) -> f64 {
        self.rx(self.p_p, self.r, self.sigma_sq)
    }

    /// Mean received power at `D_P` from one secondary source.
    pub fn secondary_to_primary_rx(&self) -> f64 {
        self.rx(self.p0, self.r_0, self.sigma0_sq)
    }

    /// Exponent of the secondary noise factor `β N0 / (σ̃² r_j^{-α} P0)`.
    pub fn secondary_noise_exponent(&self) -> f64 {
        self.beta * self.noise / self.rx(self.p0, self.r_j, self.sigma_tilde_sq)
    }

    /// Primary-on-secondary interference term
    /// `I = P_P r_pj^{-α} β σ_pj² / (P0 r_j^{-α} σ̃²)`.
    pub fn primary_interference(&self) -> f64 {
        self.beta * self.rx(self.p_p, self.r_pj, self.sigma_pj_sq)
            / self.rx(self.p0, self.r_j, self.sigma_tilde_sq)
    }

    /// Relay SNR `P0 r0^{-α} σ0² / (β_P N0)`.
    pub fn relay_snr(&self) -> f64 {
        self.rx(self.p0, self.r_0, self.sigma0_sq) / (self.beta_p * self.noise)
    }

    /// Expands into the full network description.
    pub fn to_network(&self) -> NetworkConfig {
        let n = self.n_secondary;
        let distances = LinkTable {
            primary: self.r_pp,
            secondary: vec![vec![self.r_j; n]; n],
            primary_to_secondary: vec![self.r_pj; n],
            secondary_to_primary: vec![self.r_0; n],
            primary_to_relay: vec![self.r; n],
        };
        let fading_variances = LinkTable {
            primary: self.sigma_pp_sq,
            secondary: vec![vec![self.sigma_tilde_sq; n]; n],
            primary_to_secondary: vec![self.sigma_pj_sq; n],
            secondary_to_primary: vec![self.sigma0_sq; n],
            primary_to_relay: vec![self.sigma_sq; n],
        };
        NetworkConfig {
            n_secondary: n,
            primary_power: self.p_p,
            secondary_powers: vec![self.p0; n],
            path_loss_exp: self.path_loss_exp,
            noise_power: self.noise,
            beta_p: self.beta_p,
            betas: vec![self.beta; n],
            distances,
            fading_variances,
            access_probs: vec![self.q; n],
            miss_probs: vec![self.pe; n],
            false_alarm_probs: vec![self.pf; n],
        }
    }

    /// Sets `sigma_sq` so that a single secondary decodes the primary with
    /// probability `pd`.
    pub fn set_decode_prob(&mut self, pd: f64) -> Result<()> {
        if !(pd > 0.0 && pd <= 1.0) {
            return Err(Error::domain(format!("decode probability must be in (0, 1], got {pd}")));
        }
        if self.noise == 0.0 {
            return Err(Error::domain("decode probability is always 1 without noise"));
        }
        let rx_per_var = self.rx(self.p_p, self.r, 1.0);
        let exponent = (-pd.ln()).max(f64::MIN_POSITIVE);
        self.sigma_sq = self.beta_p * self.noise / (rx_per_var * exponent);
        Ok(())
    }

    /// Sets `sigma_pp_sq` so that the interference-free primary link succeeds
    /// with probability `mu`.
    pub fn set_mu_p_max(&mut self, mu: f64) -> Result<()> {
        if !(mu > 0.0 && mu < 1.0) || self.noise == 0.0 {
            return Err(Error::domain(format!("mu_p_max must be in (0, 1) with noise > 0, got {mu}")));
        }
        self.sigma_pp_sq = self.beta_p * self.noise / (self.rx(self.p_p, self.r_pp, 1.0) * -mu.ln());
        Ok(())
    }

    /// Sets `p0` to reach the given relay SNR (in dB).
    pub fn set_relay_snr_db(&mut self, snr_db: f64) -> Result<()> {
        if self.noise == 0.0 {
            return Err(Error::domain("relay SNR is infinite without noise"));
        }
        let target = db_to_linear(snr_db);
        self.p0 = target * self.beta_p * self.noise / self.rx(1.0, self.r_0, self.sigma0_sq);
        Ok(())
    }

    /// Overrides one named parameter; used by sweeps.
    ///
    /// Recognised names: `P0` (watts), `P0_dBW`, `N`, `q`, `Pe`, `Pf`, `Pd`,
    /// `Pd-SNR` (relay SNR in dB), `mu_p_max`, `beta`, `a` (via `p0`).
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "P0" | "p0" => self.p0 = value,
            "P0_dBW" | "p0_dbw" => self.p0 = db_to_linear(value),
            "N" | "n" => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::domain(format!("N must be a nonnegative integer, got {value}")));
                }
                self.n_secondary = value as usize;
            }
            "q" => self.q = value,
            "Pe" | "pe" => self.pe = value,
            "Pf" | "pf" => self.pf = value,
            "beta" => self.beta = value,
            "Pd" | "pd" => self.set_decode_prob(value)?,
            "Pd-SNR" | "relay_snr_db" => self.set_relay_snr_db(value)?,
            "mu_p_max" => self.set_mu_p_max(value)?,
            "a" => {
                check_positive(value, "a")?;
                self.p0 *= self.a() / value;
            }
            other => return Err(Error::Config(format!("unknown parameter {other:?}"))),
        }
        self.validate()
    }
}

/// Symmetric system described by its normalised quantities rather than by
/// physical link parameters. All distances are 1 and `N0 = 1` (or `N0 = 0`
/// when every noise-driven probability is exactly one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub n_secondary: usize,
    pub q: f64,
    pub beta: f64,
    pub beta_p: f64,
    pub pe: f64,
    pub pf: f64,
    /// Interference-free primary success probability.
    pub mu_p_max: f64,
    #[serde(deserialize_with = "power_serde::deserialize")]
    pub p0: f64,
    /// Value of `a` at `p0`.
    #[serde(deserialize_with = "power_serde::deserialize")]
    pub a: f64,
    /// Secondary noise exponent `β N0/(σ̃² r_j^{-α} P0)` at `p0`.
    #[serde(deserialize_with = "power_serde::deserialize")]
    pub secondary_noise: f64,
    /// Primary interference term `I` at `p0`.
    #[serde(deserialize_with = "power_serde::deserialize")]
    pub interference: f64,
    /// Single-secondary decode probability of primary packets.
    pub pd: f64,
    #[serde(deserialize_with = "power_serde::deserialize_opt", skip_serializing_if = "Option::is_none")]
    pub p0_cap: Option<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n_secondary: 1,
            q: 1.0,
            beta: 1.0,
            beta_p: 1.0,
            pe: 0.0,
            pf: 0.0,
            mu_p_max: 0.5,
            p0: 1.0,
            a: 1.0,
            secondary_noise: 0.0,
            interference: 1.0,
            pd: 0.5,
            p0_cap: None,
        }
    }
}

impl Scenario {
    pub fn build(&self) -> Result<SymmetricConfig> {
        let noiseless = self.mu_p_max == 1.0 && self.secondary_noise == 0.0 && self.pd == 1.0;
        let noise = if noiseless { 0.0 } else { 1.0 };
        let p_p = 1.0;
        // ratios below are all evaluated at unit distance
        let exp_or_tiny = |x: f64| x.max(1e-300);
        let sigma_pp_sq = if noiseless {
            1.0
        } else {
            if !(self.mu_p_max > 0.0 && self.mu_p_max < 1.0) {
                return Err(Error::domain("mu_p_max must lie in (0, 1) when the network is noisy"));
            }
            self.beta_p * noise / (p_p * -self.mu_p_max.ln())
        };
        check_positive(self.a, "a")?;
        let sigma0_sq = sigma_pp_sq * p_p / (self.a * self.beta_p * self.p0);
        let sigma_tilde_sq = if noiseless {
            1.0
        } else {
            self.beta * noise / (exp_or_tiny(self.secondary_noise) * self.p0)
        };
        let sigma_pj_sq = self.interference.max(1e-300) * self.p0 * sigma_tilde_sq / (p_p * self.beta);
        let sigma_sq = if noiseless {
            1.0
        } else {
            if !(self.pd >= 0.0 && self.pd <= 1.0) {
                return Err(Error::domain("pd must lie in [0, 1]"));
            }
            self.beta_p * noise / (p_p * exp_or_tiny(-self.pd.max(1e-300).ln()))
        };
        let cfg = SymmetricConfig {
            n_secondary: self.n_secondary,
            p0: self.p0,
            q: self.q,
            beta: self.beta,
            beta_p: self.beta_p,
            r_j: 1.0,
            r_0: 1.0,
            r: 1.0,
            r_pp: 1.0,
            r_pj: 1.0,
            sigma_tilde_sq,
            sigma0_sq,
            sigma_sq,
            sigma_pp_sq,
            sigma_pj_sq,
            p_p,
            noise,
            path_loss_exp: 3.0,
            pe: self.pe,
            pf: self.pf,
            p0_cap: self.p0_cap,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
