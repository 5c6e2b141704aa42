use serde::{Deserialize, Serialize};

/// Percentiles reported in every summary.
pub const PERCENTILES: [f64; 5] = [5.0, 25.0, 50.0, 75.0, 95.0];

/// Statistics accumulated one sample at a time.
///
/// Mean and variance use Welford's update. Order statistics keep the
/// samples in a sorted buffer maintained by binary insertion, so the
/// percentiles are exact rather than sketched.
#[derive(Debug, Clone, Default)]
pub struct StreamingStats {
    n: usize,
    mean: f64,
    m2: f64,
    sorted: Vec<f64>,
}

impl StreamingStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Non-finite samples are ignored.
    pub fn push(&mut self, x: f64) {
        if !x.is_finite() {
            return;
        }
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        let at = self.sorted.partition_point(|&y| y <= x);
        self.sorted.insert(at, x);
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Sample standard deviation (`n − 1`); zero for one sample.
    pub fn std(&self) -> f64 {
        match self.n {
            0 => f64::NAN,
            1 => 0.0,
            n => (self.m2 / (n - 1) as f64).sqrt(),
        }
    }

    /// Linear-interpolation percentile, `q` in `[0, 100]`.
    pub fn percentile(&self, q: f64) -> f64 {
        percentile_of_sorted(&self.sorted, q)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            n: self.n,
            mean: self.mean(),
            std: self.std(),
            min: self.sorted.first().copied().unwrap_or(f64::NAN),
            max: self.sorted.last().copied().unwrap_or(f64::NAN),
            percentiles: PERCENTILES.map(|q| self.percentile(q)),
        }
    }
}

/// Percentile on an ascending slice with linear interpolation between
/// closest ranks (rank `q/100 · (n − 1)`).
pub fn percentile_of_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let rank = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let w = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + w * (sorted[hi] - sorted[lo])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Values at [`PERCENTILES`].
    pub percentiles: [f64; 5],
}

impl Summary {
    pub fn median(&self) -> f64 {
        self.percentiles[2]
    }
}
