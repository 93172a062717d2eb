//! Sample budgets from the Hoeffding-style ranking guarantees, in utility-call units.

use crate::error::{Error, Result};

fn check(epsilon: f64, delta: f64, n: usize) -> Result<()> {
    if n == 0 || !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "need n >= 1, epsilon > 0, 0 < delta < 1 (got n={n}, epsilon={epsilon}, delta={delta})"
        )));
    }
    Ok(())
}

/// `ceil(4n/ε² · ln(2n/δ))`: subset-sampling Monte Carlo.
pub fn required_samples_mc(n: usize, epsilon: f64, delta: f64) -> Result<u64> {
    check(epsilon, delta, n)?;
    let n = n as f64;
    Ok(libm::ceil(4.0 * n / (epsilon * epsilon) * libm::log(2.0 * n / delta)) as u64)
}

/// `ceil(128/ε² · ln(5n/δ))`: maximum sample reuse.
pub fn required_samples_msr(n: usize, epsilon: f64, delta: f64) -> Result<u64> {
    check(epsilon, delta, n)?;
    Ok(libm::ceil(128.0 / (epsilon * epsilon) * libm::log(5.0 * n as f64 / delta)) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budgets_for_eight_players() {
        assert_eq!(required_samples_mc(8, 0.2, 0.1).unwrap(), 4061);
        // 3200·ln(400) = 19172.8
        assert_eq!(required_samples_msr(8, 0.2, 0.1).unwrap(), 19173);
        assert!(required_samples_mc(8, 0.0, 0.1).is_err());
        assert!(required_samples_msr(8, 0.2, 1.0).is_err());
    }

    #[test]
    fn growth_rates() {
        let mc: f64 = required_samples_mc(1000, 0.2, 0.1).unwrap() as f64
            / required_samples_mc(10, 0.2, 0.1).unwrap() as f64;
        let msr: f64 = required_samples_msr(1000, 0.2, 0.1).unwrap() as f64
            / required_samples_msr(10, 0.2, 0.1).unwrap() as f64;
        assert!(mc > 100.0);
        assert!(msr < 2.0);
    }
}
