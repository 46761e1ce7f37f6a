//! Exact currency amounts.
//!
//! All feasibility logic works on exact rationals. Amounts are parsed from
//! plain integers, decimals (`2.5`) or fractions (`5/2`) and rendered back as
//! an integer when integral and `p/q` otherwise.

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::Signed;
use thiserror::Error;

/// Exact signed rational amount in currency units.
pub type Amount = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmountParseError {
    #[error("empty amount")]
    Empty,
    #[error("invalid amount `{0}`")]
    Invalid(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

pub fn amount(n: i128) -> Amount {
    Amount::from_integer(n)
}

pub fn parse_amount(text: &str) -> Result<Amount, AmountParseError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(AmountParseError::Empty);
    }
    let invalid = || AmountParseError::Invalid(s.to_string());
    if let Some((num, den)) = s.split_once('/') {
        let num: i128 = num.trim().parse().map_err(|_| invalid())?;
        let den: i128 = den.trim().parse().map_err(|_| invalid())?;
        if den == 0 {
            return Err(AmountParseError::ZeroDenominator(s.to_string()));
        }
        return Ok(Amount::new(num, den));
    }
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(invalid());
    }
    let digits_ok = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    if !digits_ok(int_part) || !digits_ok(frac_part) || frac_part.len() > 30 {
        return Err(invalid());
    }
    let int_value: i128 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| invalid())?
    };
    let mut value = Amount::from_integer(int_value);
    if !frac_part.is_empty() {
        let den = 10i128.checked_pow(frac_part.len() as u32).ok_or_else(invalid)?;
        let num: i128 = frac_part.parse().map_err(|_| invalid())?;
        value += Amount::new(num, den);
    }
    Ok(if negative { -value } else { value })
}

/// Integer when integral, `p/q` otherwise. Never rounds.
pub fn format_amount(a: &Amount) -> String {
    if a.is_integer() {
        a.to_integer().to_string()
    } else {
        format!("{}/{}", a.numer(), a.denom())
    }
}

/// Least common multiple of the denominators, so that every amount times
/// the result is an integer.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Amount>) -> i128 {
    values.into_iter().fold(1i128, |acc, v| acc.lcm(v.denom()))
}

/// Scales an amount by an integer that clears its denominator.
pub fn to_scaled_integer(a: &Amount, scale: i128) -> i128 {
    let scaled = a * Amount::from_integer(scale);
    debug_assert!(scaled.is_integer());
    scaled.to_integer()
}

pub fn log2_floor(a: &Amount) -> Option<i64> {
    if !a.is_positive() {
        return None;
    }
    // floor(log2(p/q)) computed exactly by comparing against powers of two.
    let mut k: i64 = (a.numer().ilog2() as i64) - (a.denom().ilog2() as i64);
    let pow = |k: i64| -> Amount {
        if k >= 0 {
            Amount::from_integer(1i128 << k)
        } else {
            Amount::new(1, 1i128 << (-k))
        }
    };
    while pow(k) > *a {
        k -= 1;
    }
    while pow(k + 1) <= *a {
        k += 1;
    }
    Some(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_integers_decimals_and_fractions() {
        assert_eq!(parse_amount("5").unwrap(), amount(5));
        assert_eq!(parse_amount(" 2.5 ").unwrap(), Amount::new(5, 2));
        assert_eq!(parse_amount("-0.25").unwrap(), Amount::new(-1, 4));
        assert_eq!(parse_amount("6/4").unwrap(), Amount::new(3, 2));
        assert_eq!(parse_amount(".5").unwrap(), Amount::new(1, 2));
        assert!(parse_amount("").is_err());
        assert!(parse_amount("1/0").is_err());
        assert!(parse_amount("1.2.3").is_err());
        assert!(parse_amount("abc").is_err());
        assert!(parse_amount(".").is_err());
    }

    #[test]
    fn formats_without_rounding() {
        assert_eq!(format_amount(&amount(7)), "7");
        assert_eq!(format_amount(&Amount::new(2, 3)), "2/3");
        assert_eq!(format_amount(&Amount::new(-5, 10)), "-1/2");
    }

    #[test]
    fn log2_floor_is_exact() {
        assert_eq!(log2_floor(&amount(1)), Some(0));
        assert_eq!(log2_floor(&amount(8)), Some(3));
        assert_eq!(log2_floor(&amount(9)), Some(3));
        assert_eq!(log2_floor(&Amount::new(1, 3)), Some(-2));
        assert_eq!(log2_floor(&amount(0)), None);
    }

    #[test]
    fn common_denominator_clears_all() {
        let xs = [Amount::new(1, 4), Amount::new(5, 6), amount(3)];
        let d = common_denominator(&xs);
        assert_eq!(d, 12);
        assert_eq!(to_scaled_integer(&xs[1], d), 10);
    }
}
