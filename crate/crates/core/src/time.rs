//! Integer-nanosecond time and the rounding rules used at the model boundary.

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};

/// Simulated time in integer nanoseconds.
pub type Nanos = u64;

/// Exact fraction used wherever a floor or comparison must not flip on
/// floating-point error.
pub type Frac = Ratio<i128>;

/// Rounds a non-negative real to the nearest integer, halves going up.
/// Negative and NaN inputs clamp to zero; values past `u64::MAX` saturate.
pub fn round_half_up(x: f64) -> Nanos {
    if x.is_nan() || x <= 0.0 {
        return 0;
    }
    let shifted = x + 0.5;
    if shifted >= u64::MAX as f64 {
        u64::MAX
    } else {
        // truncation of a positive value is floor
        shifted as u64
    }
}

/// Rounds an exact fraction half-up to integer nanoseconds.
pub fn round_frac(x: &Frac) -> Nanos {
    if x.is_negative() || x.is_zero() {
        return 0;
    }
    let half = Frac::new(1, 2);
    (x + half).floor().to_integer().to_u64().unwrap_or(u64::MAX)
}

/// `numer * num / den` in exact integer arithmetic, rounded half-up.
pub fn mul_div_round(value: u128, num: u128, den: u128) -> Nanos {
    debug_assert!(den > 0);
    let scaled = value.saturating_mul(num);
    let q = (scaled + den / 2) / den;
    u64::try_from(q).unwrap_or(u64::MAX)
}

pub fn frac(n: i128, d: i128) -> Frac {
    Frac::new(n, d)
}

pub fn frac_int(n: u64) -> Frac {
    Frac::from_integer(i128::from(n))
}

pub fn frac_to_f64(x: &Frac) -> f64 {
    x.numer().to_f64().unwrap_or(f64::NAN) / x.denom().to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_up() {
        assert_eq!(round_half_up(0.0), 0);
        assert_eq!(round_half_up(0.5), 1);
        assert_eq!(round_half_up(1.49), 1);
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(-3.0), 0);
        assert_eq!(round_half_up(f64::NAN), 0);
        assert_eq!(round_half_up(1e30), u64::MAX);
    }

    #[test]
    fn frac_rounding() {
        assert_eq!(round_frac(&frac(7, 2)), 4);
        assert_eq!(round_frac(&frac(10, 3)), 3);
        assert_eq!(round_frac(&frac(-1, 3)), 0);
        assert_eq!(mul_div_round(1000 * 4096, 1_000_000_000, 100_000_000_000), 40960);
        assert_eq!(mul_div_round(5, 1, 2), 3);
    }
}
