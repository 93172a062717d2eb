//! Semivalue weight functions and the binomial helpers they need.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `C(n, k)` as a float; exact while the result fits in 53 bits, `inf` once it overflows.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0f64;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    if r < 9.0e15 {
        libm::round(r)
    } else {
        r
    }
}

/// `ln C(n, k)`, finite for any `k <= n`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let direct = binomial(n, k);
    if direct.is_finite() && direct < 1e15 {
        return libm::log(direct);
    }
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Shapley,
    Banzhaf,
    Custom,
}

impl WeightKind {
    pub fn name(self) -> &'static str {
        match self {
            WeightKind::Shapley => "shapley",
            WeightKind::Banzhaf => "banzhaf",
            WeightKind::Custom => "custom",
        }
    }
}

/// Coalition-size weights `w(1..=n)`, normalized so that `Σ_j C(n−1, j−1)·w(j) = n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    kind: WeightKind,
    ln_w: Vec<f64>,
    w: Vec<f64>,
}

impl WeightFunction {
    pub fn shapley(n: usize) -> Result<Self> {
        check_n(n)?;
        // n·(j−1)!(n−j)!/n! = 1 / C(n−1, j−1)
        let ln_w = (1..=n).map(|j| -ln_binomial(n - 1, j - 1)).collect();
        Ok(Self::from_logs(WeightKind::Shapley, ln_w))
    }

    pub fn banzhaf(n: usize) -> Result<Self> {
        check_n(n)?;
        let ln_c = libm::log(n as f64) - (n - 1) as f64 * core::f64::consts::LN_2;
        Ok(Self::from_logs(WeightKind::Banzhaf, alloc::vec![ln_c; n]))
    }

    /// Arbitrary non-negative weights; rejected unless normalized within `1e-9`.
    pub fn custom(w: Vec<f64>) -> Result<Self> {
        check_n(w.len())?;
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        let n = w.len();
        let f = Self::from_logs(WeightKind::Custom, w.iter().map(|&x| libm::log(x)).collect());
        let total = f.normalization();
        if (total - n as f64).abs() > 1e-9 * n as f64 {
            return Err(Error::InvalidArgument(alloc::format!(
                "weights sum to {total} under the binomial normalization, expected {n}"
            )));
        }
        Ok(f)
    }

    fn from_logs(kind: WeightKind, ln_w: Vec<f64>) -> Self {
        let w = ln_w.iter().map(|&l| libm::exp(l)).collect();
        Self { kind, ln_w, w }
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// `w(j)` for `1 <= j <= n`; `w(n+1)` is taken as 0.
    pub fn w(&self, j: usize) -> f64 {
        assert!(j >= 1, "weights are indexed from 1");
        self.w.get(j - 1).copied().unwrap_or(0.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// `Σ_j C(n−1, j−1)·w(j)`, accumulated in log space.
    pub fn normalization(&self) -> f64 {
        let n = self.n();
        self.ln_w
            .iter()
            .enumerate()
            .map(|(idx, &l)| libm::exp(l + ln_binomial(n - 1, idx)))
            .sum()
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("a game needs at least one player".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(0, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert!((binomial(60, 30) / 118264581564861424.0 - 1.0).abs() < 1e-14);
        assert_eq!(binomial(40, 20), 137846528820.0);
        assert!(binomial(2000, 1000).is_infinite());
        assert!((ln_binomial(2000, 1000) - 1382.267993537).abs() < 1e-6);
    }

    #[test]
    fn three_player_weights() {
        let b = WeightFunction::banzhaf(3).unwrap();
        for j in 1..=3 {
            assert!((b.w(j) - 0.75).abs() < 1e-15);
        }
        let s = WeightFunction::shapley(3).unwrap();
        assert!((s.w(1) - 1.0).abs() < 1e-15);
        assert!((s.w(2) - 0.5).abs() < 1e-15);
        assert!((s.w(3) - 1.0).abs() < 1e-15);
        assert_eq!(s.w(4), 0.0);
        assert!((b.normalization() - 3.0).abs() < 1e-12);
        assert!((s.normalization() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_holds_for_large_n() {
        for n in [1, 2, 10, 64, 500, 3000] {
            for w in [WeightFunction::shapley(n).unwrap(), WeightFunction::banzhaf(n).unwrap()] {
                let rel = (w.normalization() - n as f64).abs() / n as f64;
                assert!(rel < 1e-9, "n={n} {:?} rel={rel}", w.kind());
            }
        }
    }

    #[test]
    fn custom_requires_normalization() {
        assert!(WeightFunction::custom(alloc::vec![1.0, 0.5, 1.0]).is_ok());
        assert!(WeightFunction::custom(alloc::vec![1.0, 1.0, 1.0]).is_err());
        assert!(WeightFunction::custom(alloc::vec![]).is_err());
    }
}
