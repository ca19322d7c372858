//! Exact rational helpers shared by every module.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// `num/den` as a rational. Panics on a zero denominator.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `"7"`, `"-3"` or `"num/den"`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    match text.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(Rational::new(n, d))
        }
        None => text.parse::<BigInt>().ok().map(Rational::from_integer),
    }
}

/// `"n"` for integers, `"num/den"` otherwise.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Very large numerators or denominators: go through the quotient.
        let q = r.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
        q / d
    })
}

/// Integer power with a possibly negative exponent.
pub fn powi(base: &Rational, exp: i64) -> Rational {
    if exp >= 0 {
        num_traits::pow::pow(base.clone(), exp as usize)
    } else {
        num_traits::pow::pow(base.recip(), exp.unsigned_abs() as usize)
    }
}

pub fn floor_int(r: &Rational) -> BigInt {
    r.floor().to_integer()
}

pub fn ceil_int(r: &Rational) -> BigInt {
    r.ceil().to_integer()
}

/// Smallest integer `r` with `base^r >= x`, for `base > 1` and `x > 0`.
pub fn ceil_log(x: &Rational, base: &Rational) -> i64 {
    let mut r = (to_f64(x).ln() / to_f64(base).ln()).ceil() as i64;
    while powi(base, r) < *x {
        r += 1;
    }
    while powi(base, r - 1) >= *x {
        r -= 1;
    }
    r
}

/// Largest integer `r` with `base^r <= x`, for `base > 1` and `x > 0`.
pub fn floor_log(x: &Rational, base: &Rational) -> i64 {
    let mut r = (to_f64(x).ln() / to_f64(base).ln()).floor() as i64;
    while powi(base, r) > *x {
        r -= 1;
    }
    while powi(base, r + 1) <= *x {
        r += 1;
    }
    r
}

/// Least common multiple of the denominators.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values.into_iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// Encloses `weight * root^(1/p)` between two rationals whose gap shrinks with `bits`.
fn root_bracket(weight: &Rational, root: &Rational, p: u32, bits: u64) -> (Rational, Rational) {
    // root = a/b, root^(1/p) = (a * b^(p-1))^(1/p) / b
    let a = root.numer();
    let b = root.denom();
    let radicand = a * num_traits::pow::pow(b.clone(), (p - 1) as usize);
    let scale = BigInt::one() << bits;
    let scaled = &radicand * num_traits::pow::pow(scale.clone(), p as usize);
    let r = scaled.nth_root(p);
    let exact = num_traits::pow::pow(r.clone(), p as usize) == scaled;
    let den = &scale * b;
    let lo = Rational::new(r.clone(), den.clone()) * weight;
    let hi = if exact { lo.clone() } else { Rational::new(r + 1, den) * weight };
    (lo, hi)
}

/// Compares `Σ w_i · a_i^(1/p)` against `Σ v_j · b_j^(1/p)` for nonnegative terms.
///
/// Brackets are refined until they separate; sums that agree to within
/// 2^-2048 relative are reported equal.
pub fn compare_root_sums(left: &[(Rational, Rational)], right: &[(Rational, Rational)], p: u32) -> Ordering {
    let approx = |terms: &[(Rational, Rational)]| -> f64 {
        terms.iter().map(|(w, a)| to_f64(w) * to_f64(a).powf(1.0 / p as f64)).sum()
    };
    let (fl, fr) = (approx(left), approx(right));
    if fl.is_finite() && fr.is_finite() {
        let scale = fl.abs().max(fr.abs());
        if (fl - fr).abs() > 1e-9 * scale {
            return fl.partial_cmp(&fr).unwrap_or(Ordering::Equal);
        }
    }
    let mut bits = 64;
    while bits <= 2048 {
        let bracket = |terms: &[(Rational, Rational)]| {
            terms.iter().fold((Rational::zero(), Rational::zero()), |(lo, hi), (w, a)| {
                let (l, h) = root_bracket(w, a, p, bits);
                (lo + l, hi + h)
            })
        };
        let (llo, lhi) = bracket(left);
        let (rlo, rhi) = bracket(right);
        if lhi < rlo {
            return Ordering::Less;
        }
        if rhi < llo {
            return Ordering::Greater;
        }
        if llo == lhi && rlo == rhi && llo == rlo {
            return Ordering::Equal;
        }
        bits *= 2;
    }
    Ordering::Equal
}

/// Exact `x^p` for an integer exponent, as a rational.
pub fn pow_u(x: &Rational, p: u32) -> Rational {
    num_traits::pow::pow(x.clone(), p as usize)
}

/// `x^(1/p)` when it is rational.
pub fn exact_root(x: &Rational, p: u32) -> Option<Rational> {
    if x.is_negative() {
        return None;
    }
    let n = x.numer().nth_root(p);
    let d = x.denom().nth_root(p);
    let candidate = Rational::new(n, d);
    (pow_u(&candidate, p) == *x).then_some(candidate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_formats() {
        assert_eq!(parse_rational("3/6"), Some(ratio(1, 2)));
        assert_eq!(parse_rational(" 7 "), Some(int(7)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("0.5"), None);
        assert_eq!(format_rational(&ratio(6, 3)), "2");
        assert_eq!(format_rational(&ratio(3, 7)), "3/7");
    }

    #[test]
    fn logs_are_exact_at_grid_points() {
        let base = ratio(3, 2);
        assert_eq!(ceil_log(&ratio(9, 4), &base), 2);
        assert_eq!(floor_log(&ratio(9, 4), &base), 2);
        assert_eq!(ceil_log(&ratio(10, 4), &base), 3);
        assert_eq!(floor_log(&ratio(10, 4), &base), 2);
        assert_eq!(ceil_log(&ratio(1, 2), &base), -1);
    }

    #[test]
    fn root_sums_compare_exactly() {
        // sqrt(2) + sqrt(8) = 3 sqrt(2) = sqrt(18)
        let l = vec![(int(1), int(2)), (int(1), int(8))];
        let r = vec![(int(1), int(18))];
        assert_eq!(compare_root_sums(&l, &r, 2), Ordering::Equal);
        let r2 = vec![(int(1), int(19))];
        assert_eq!(compare_root_sums(&l, &r2, 2), Ordering::Less);
        // (1/2) cbrt(27) = 3/2 > cbrt(3)
        let a = vec![(ratio(1, 2), int(27))];
        let b = vec![(int(1), int(3))];
        assert_eq!(compare_root_sums(&a, &b, 3), Ordering::Greater);
    }
}
