use serde::{Deserialize, Serialize};

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Self { value, se }
    }

    /// `|value - x| / se`, infinite when the estimate has no spread.
    pub fn z_score(&self, x: f64) -> f64 {
        let d = (self.value - x).abs();
        if d == 0.0 {
            0.0
        } else if self.se == 0.0 {
            f64::INFINITY
        } else {
            d / self.se
        }
    }

    pub fn within(&self, x: f64, k: f64) -> bool {
        self.z_score(x) <= k
    }
}

/// Proportion `hits / trials` with binomial standard error. The variance is
/// floored at `1/trials` so that an all-or-nothing sample still reports a
/// nonzero error.
pub fn binomial(hits: u64, trials: u64) -> Estimate {
    if trials == 0 {
        return Estimate::new(f64::NAN, f64::INFINITY);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    Estimate::new(p, ((p * (1.0 - p)).max(1.0 / n) / n).sqrt())
}

/// Mean of per-slot indicators with a batch-means standard error, which
/// absorbs the autocorrelation that the queue induces between slots.
pub fn batch_means(counts: &[u64], sizes: &[u64]) -> Estimate {
    let total: u64 = sizes.iter().sum();
    if total == 0 {
        return Estimate::new(f64::NAN, f64::INFINITY);
    }
    let hits: u64 = counts.iter().sum();
    let mean = hits as f64 / total as f64;
    let rates: Vec<f64> = counts
        .iter()
        .zip(sizes)
        .filter(|(_, &s)| s > 0)
        .map(|(&c, &s)| c as f64 / s as f64)
        .collect();
    let b = rates.len() as f64;
    let floor = (mean * (1.0 - mean)).max(1.0 / total as f64) / total as f64;
    if rates.len() < 2 {
        return Estimate::new(mean, floor.sqrt());
    }
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (b - 1.0);
    Estimate::new(mean, (var / b).max(floor).sqrt())
}

/// Running least-squares fit of `y` against a centred slot index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlopeAccumulator {
    pub n: f64,
    pub sx: f64,
    pub sy: f64,
    pub sxx: f64,
    pub sxy: f64,
}

impl SlopeAccumulator {
    #[inline]
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.sxy += x * y;
    }

    pub fn slope(&self) -> f64 {
        let den = self.n * self.sxx - self.sx * self.sx;
        if self.n < 2.0 || den == 0.0 {
            0.0
        } else {
            (self.n * self.sxy - self.sx * self.sy) / den
        }
    }

    pub fn mean_y(&self) -> f64 {
        if self.n == 0.0 {
            0.0
        } else {
            self.sy / self.n
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Smallest backlog growth per slot that counts as drift.
pub const MIN_SLOPE_THRESHOLD: f64 = 5e-5;

/// Growth threshold for a run at load `lambda` against estimated capacity
/// `capacity`: half the drift an unstable queue would show, but never below
/// [`MIN_SLOPE_THRESHOLD`].
pub fn slope_threshold(lambda: f64, capacity: f64) -> f64 {
    (0.5 * (lambda - capacity).abs()).max(MIN_SLOPE_THRESHOLD)
}

/// Dual test: the rate margin and the backlog trend must agree, otherwise
/// the run is inconclusive. The band `capacity ± 4·se` is never classified.
pub fn classify(lambda: f64, capacity: Estimate, slope: f64, threshold: f64) -> Verdict {
    let margin = 4.0 * capacity.se;
    if slope <= threshold && lambda < capacity.value - margin {
        Verdict::Stable
    } else if slope > threshold && lambda > capacity.value + margin {
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    }
}
