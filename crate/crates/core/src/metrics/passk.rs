use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassAtKInput {
    /// Total generated solutions.
    pub n_t: u64,
    /// Solutions meeting the criterion.
    pub n: u64,
    pub k: u64,
}

impl PassAtKInput {
    pub fn new(n_t: u64, n: u64, k: u64) -> Result<Self, MetricsError> {
        let input = PassAtKInput { n_t, n, k };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.n_t == 0 || self.n > self.n_t || self.k == 0 || self.k > self.n_t {
            return Err(MetricsError::PassAtK(*self));
        }
        Ok(())
    }
}

/// `1 - C(n_t - n, k) / C(n_t, k)`, evaluated as a running product of
/// ratios so large totals never overflow. `k = 1` returns `n / n_t` exactly.
pub fn pass_at_k(input: PassAtKInput) -> Result<f64, MetricsError> {
    input.validate()?;
    let PassAtKInput { n_t, n, k } = input;
    if n == 0 {
        return Ok(0.0);
    }
    if k == 1 {
        return Ok(n as f64 / n_t as f64);
    }
    if n_t - n < k {
        return Ok(1.0);
    }
    // C(n_t-n, k)/C(n_t, k) = prod_{i=0}^{k-1} (n_t-n-i)/(n_t-i)
    let all_fail: f64 = (0..k).map(|i| (n_t - n - i) as f64 / (n_t - i) as f64).product();
    Ok(1.0 - all_fail)
}
