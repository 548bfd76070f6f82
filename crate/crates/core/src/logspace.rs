//! Log-domain arithmetic.
//!
//! Probability zero is [`LOG_ZERO`] (negative infinity). It is absorbing under
//! addition and contributes nothing to a log-sum-exp, so no pass ever produces
//! NaN from an impossible configuration.

pub const LOG_ZERO: f64 = f64::NEG_INFINITY;
pub const LOG_ONE: f64 = 0.0;

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn is_zero(x: f64) -> bool {
    x == LOG_ZERO
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

/// `log(sum(exp(x)))`, ignoring zero-probability terms.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(LOG_ZERO, f64::max);
    if max == LOG_ZERO {
        return LOG_ZERO;
    }
    let s: f64 = xs
        .iter()
        .filter(|&&x| x != LOG_ZERO)
        .map(|&x| libm::exp(x - max))
        .sum();
    max + libm::log(s)
}
