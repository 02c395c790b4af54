//! Exact rational evaluation of `φ`, the partial sums `f_r^n`, the full series
//! `f_r` at rational points, slope profiles and chord slopes.

use std::collections::HashMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::MAX_DEPTH;

/// Arbitrary-precision reduced fraction. `num_rational` keeps every value in
/// lowest terms with a positive denominator, so equal values compare equal.
pub type Rational = BigRational;

/// `n / d` as a reduced rational. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"p/q"` or `"p"` (optional sign on `p`).
pub fn parse_rational(s: &str) -> Result<Rational> {
    let t = s.trim();
    let bad = || Error::ParseRational(s.to_string());
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (t, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(num, den))
}

/// Fractional part `x − ⌊x⌋ ∈ [0, 1)`.
pub fn frac(x: &Rational) -> Rational {
    x - x.floor()
}

pub(crate) fn pow_u(base: u32, exp: u32) -> BigUint {
    num_traits::pow(BigUint::from(base), exp as usize)
}

pub(crate) fn pow_i(base: u32, exp: u32) -> BigInt {
    BigInt::from(pow_u(base, exp))
}

/// `r^{-n}` as a rational.
pub fn inv_pow(r: u32, n: u32) -> Rational {
    Rational::new(BigInt::one(), pow_i(r, n))
}

fn to_biguint(x: &BigInt) -> BigUint {
    x.to_biguint().expect("nonnegative integer")
}

/// Family index `r ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Params {
    r: u32,
}

impl Params {
    pub fn new(r: u32) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidParameter(format!("r must be at least 2, got {r}")));
        }
        Ok(Params { r })
    }

    #[inline]
    pub fn r(&self) -> u32 {
        self.r
    }

    #[inline]
    pub fn is_odd(&self) -> bool {
        self.r % 2 == 1
    }

    #[inline]
    pub fn is_even(&self) -> bool {
        !self.is_odd()
    }

    /// `2 r^{n-1}`: the number of depth-`n` intervals (`n ≥ 1`).
    pub fn interval_count(&self, n: u32) -> BigUint {
        assert!(n >= 1, "interval depth starts at 1");
        pow_u(self.r, n - 1) * 2u32
    }
}

pub(crate) fn check_depth(depth: u32) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "depth {depth} exceeds the hard cap {MAX_DEPTH}"
        )));
    }
    Ok(())
}

pub(crate) fn check_unit(x: &Rational) -> Result<()> {
    if x.is_negative() || *x >= Rational::one() {
        return Err(Error::OutOfRange(format!("x = {x} is not in [0,1)")));
    }
    Ok(())
}

/// Names `I_{n,j} = [j/2r^{n-1}, (j+1)/2r^{n-1})`, `n ≥ 1`, `0 ≤ j < 2r^{n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntervalAddress {
    pub n: u32,
    pub j: BigUint,
}

impl IntervalAddress {
    pub fn new(p: Params, n: u32, j: impl Into<BigUint>) -> Result<Self> {
        let j = j.into();
        if n == 0 {
            return Err(Error::InvalidParameter("interval depth starts at 1".into()));
        }
        check_depth(n)?;
        if j >= p.interval_count(n) {
            return Err(Error::InvalidParameter(format!(
                "j = {j} out of range for depth {n} (need j < 2r^{})",
                n - 1
            )));
        }
        Ok(IntervalAddress { n, j })
    }

    pub fn denominator(&self, p: Params) -> BigUint {
        p.interval_count(self.n)
    }

    pub fn left(&self, p: Params) -> Rational {
        Rational::new(BigInt::from(self.j.clone()), BigInt::from(self.denominator(p)))
    }

    pub fn right(&self, p: Params) -> Rational {
        Rational::new(BigInt::from(&self.j + 1u32), BigInt::from(self.denominator(p)))
    }

    pub fn width(&self, p: Params) -> Rational {
        Rational::new(BigInt::one(), BigInt::from(self.denominator(p)))
    }

    /// The `r` depth-`(n+1)` intervals `(n+1, rj+i)`, left to right.
    pub fn children(&self, p: Params) -> Vec<IntervalAddress> {
        let base = &self.j * p.r();
        (0..p.r())
            .map(|i| IntervalAddress { n: self.n + 1, j: &base + i })
            .collect()
    }

    pub fn parent(&self, p: Params) -> Option<IntervalAddress> {
        (self.n > 1).then(|| IntervalAddress { n: self.n - 1, j: &self.j / p.r() })
    }

    /// Half-open membership.
    pub fn contains(&self, p: Params, x: &Rational) -> bool {
        self.left(p) <= *x && *x < self.right(p)
    }

    /// Membership in the closure `Ī`.
    pub fn contains_closed(&self, p: Params, x: &Rational) -> bool {
        self.left(p) <= *x && *x <= self.right(p)
    }

    /// True when `other` lies inside `self` (same or deeper level).
    pub fn encloses(&self, p: Params, other: &IntervalAddress) -> bool {
        other.n >= self.n && &other.j / pow_u(p.r(), other.n - self.n) == self.j
    }
}

impl fmt::Display for IntervalAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n, self.j)
    }
}

/// `dist(x, ℤ)`.
pub fn phi(x: &Rational) -> Rational {
    let t = frac(x);
    let u = Rational::one() - &t;
    if t <= u {
        t
    } else {
        u
    }
}

/// Right-hand derivative of `φ_k(x) = r^{-k} φ(r^k x)`: `+1` iff `frac(r^k x) < 1/2`.
pub fn phi_plus(p: Params, k: u32, x: &Rational) -> i64 {
    let t = frac(&(x * Rational::from_integer(pow_i(p.r(), k))));
    if t * Rational::from_integer(2.into()) < Rational::one() {
        1
    } else {
        -1
    }
}

/// `f_r^n(x) = Σ_{k<n} r^{-k} φ(r^k x)`.
pub fn partial_sum(p: Params, n: u32, x: &Rational) -> Rational {
    let r = Rational::from_integer(BigInt::from(p.r()));
    let mut acc = Rational::zero();
    let mut y = frac(x);
    let mut scale = Rational::one();
    for _ in 0..n {
        acc += phi(&y) * &scale;
        y = frac(&(&y * &r));
        scale /= &r;
    }
    acc
}

/// Orbit of `frac(r^k x)` for `x = a/q`, stored as numerators over the fixed
/// denominator `q`. `terms[preperiod + period] == terms[preperiod]`.
struct Orbit {
    q: BigUint,
    /// `c_k = min(a_k, q − a_k)`, so that `φ(r^k x) = c_k / q`.
    dist: Vec<BigUint>,
    preperiod: usize,
    period: usize,
}

fn reduced_parts(x: &Rational) -> (BigUint, BigUint) {
    let t = frac(x);
    (to_biguint(t.numer()), to_biguint(t.denom()))
}

fn orbit(p: Params, x: &Rational, max_steps: usize) -> Option<Orbit> {
    let (a, q) = reduced_parts(x);
    if q.bits() <= 96 {
        return orbit_small(p, a.to_u128().unwrap(), q.to_u128().unwrap(), max_steps);
    }
    let mut seen: HashMap<BigUint, usize> = HashMap::new();
    let mut dist = Vec::new();
    let mut cur = a;
    loop {
        if let Some(&start) = seen.get(&cur) {
            let period = dist.len() - start;
            return Some(Orbit { q, dist, preperiod: start, period });
        }
        if dist.len() >= max_steps {
            return None;
        }
        let other = &q - &cur;
        dist.push(if cur <= other { cur.clone() } else { other });
        seen.insert(cur.clone(), dist.len() - 1);
        cur = (cur * p.r()) % &q;
    }
}

fn orbit_small(p: Params, a: u128, q: u128, max_steps: usize) -> Option<Orbit> {
    let r = p.r() as u128;
    let mut seen: HashMap<u128, usize> = HashMap::new();
    let mut dist = Vec::new();
    let mut cur = a;
    loop {
        if let Some(&start) = seen.get(&cur) {
            let period = dist.len() - start;
            let dist = dist.into_iter().map(BigUint::from).collect();
            return Some(Orbit { q: BigUint::from(q), dist, preperiod: start, period });
        }
        if dist.len() >= max_steps {
            return None;
        }
        dist.push(cur.min(q - cur));
        seen.insert(cur, dist.len() - 1);
        // q < 2^96 and r < 2^32, so the product fits.
        cur = (cur * r) % q;
    }
}

/// Exact `f_r(x)` for rational `x`; arguments are reduced mod 1 first.
///
/// The orbit `frac(r^k x)` is eventually periodic with preperiod plus period
/// at most the denominator of `x`, and the periodic tail is a geometric series.
pub fn eval(p: Params, x: &Rational) -> Rational {
    eval_with_limit(p, x, usize::MAX).expect("unbounded orbit search terminates")
}

/// Like [`eval`], but gives up (returns `None`) when the orbit of `frac(r^k x)`
/// has not closed after `max_steps` distinct points.
pub fn eval_with_limit(p: Params, x: &Rational, max_steps: usize) -> Option<Rational> {
    let orb = orbit(p, x, max_steps)?;
    let r = BigUint::from(p.r());
    // head = Σ_{k<t} c_k r^{t-k},  cycle = Σ_{i<L} c_{t+i} r^{L-i}
    let horner = |terms: &[BigUint]| {
        terms.iter().fold(BigUint::zero(), |acc, c| (acc + c) * &r)
    };
    let head = horner(&orb.dist[..orb.preperiod]);
    let cycle = horner(&orb.dist[orb.preperiod..orb.preperiod + orb.period]);
    let r_l = pow_u(p.r(), orb.period as u32) - 1u32;
    let r_t = pow_u(p.r(), orb.preperiod as u32);
    let num = head * &r_l + cycle;
    let den = orb.q * r_t * r_l;
    Some(Rational::new(BigInt::from(num), BigInt::from(den)))
}

/// Smallest `n ≥ 0` with `x = j / 2r^n`, i.e. `q | 2r^n` for `x = a/q` reduced.
/// `None` when `x` is not a corner point at any depth.
pub fn corner_depth(p: Params, x: &Rational) -> Option<u32> {
    let q = to_biguint(frac(x).denom());
    let limit = q.bits() + 1;
    let mut rn = BigUint::one() % &q;
    for n in 0..=limit {
        if (&rn * 2u32 % &q).is_zero() {
            return Some(n as u32);
        }
        rn = rn * p.r() % &q;
    }
    None
}

/// True when `x = j/2r^n` for some `n ≤ depth`.
pub fn is_corner_within(p: Params, x: &Rational, depth: u32) -> bool {
    matches!(corner_depth(p, x), Some(n) if n <= depth)
}

/// The slope walk `s_0, …, s_N` of the partial sums at a point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlopeProfile {
    pub point: Rational,
    pub slopes: Vec<i64>,
}

impl SlopeProfile {
    pub fn depth(&self) -> u32 {
        (self.slopes.len() - 1) as u32
    }

    pub fn slope(&self, n: u32) -> i64 {
        self.slopes[n as usize]
    }

    /// Times `n ≥ 1` with `s_n = 0`, increasing.
    pub fn zero_times(&self) -> Vec<u32> {
        self.slopes
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &s)| s == 0)
            .map(|(n, _)| n as u32)
            .collect()
    }

    /// Last `n ≥ 0` with `s_n = 0` inside the profile.
    pub fn last_zero(&self) -> u32 {
        self.slopes.iter().rposition(|&s| s == 0).unwrap_or(0) as u32
    }

    /// First `n ≥ 1` with `s_n < 0`.
    pub fn first_negative(&self) -> Option<u32> {
        self.slopes.iter().position(|&s| s < 0).map(|n| n as u32)
    }
}

/// Slopes `s_n(x)` of `f_r^n` for `n = 0..=depth`, via `s_{n+1} = s_n + φ_n⁺(x)`.
pub fn slope_profile(p: Params, x: &Rational, depth: u32) -> Result<SlopeProfile> {
    check_depth(depth)?;
    check_unit(x)?;
    if is_corner_within(p, x, depth) {
        return Err(Error::PointInCorner { x: x.to_string(), depth });
    }
    let (mut a, q) = reduced_parts(x);
    let mut slopes = Vec::with_capacity(depth as usize + 1);
    let mut s = 0i64;
    slopes.push(s);
    for _ in 0..depth {
        s += if &a * 2u32 < q { 1 } else { -1 };
        slopes.push(s);
        a = a * p.r() % &q;
    }
    Ok(SlopeProfile { point: x.clone(), slopes })
}

/// `s_{n,j}`: the slope of `f_r^n` on `I_{n,j}`.
///
/// On `I_{n,j}`, `frac(r^k x) < 1/2` iff `j mod 2r^{n-1-k} < r^{n-1-k}`.
pub fn interval_slope(p: Params, a: &IntervalAddress) -> i64 {
    let mut s = 0i64;
    let mut rm = BigUint::one();
    for _ in 0..a.n {
        let modulus = &rm * 2u32;
        s += if &a.j % &modulus < rm { 1 } else { -1 };
        rm *= p.r();
    }
    s
}

/// The depth-`n` interval containing `x ∈ [0,1)`.
pub fn locate(p: Params, n: u32, x: &Rational) -> Result<IntervalAddress> {
    check_unit(x)?;
    if n == 0 {
        return Err(Error::InvalidParameter("interval depth starts at 1".into()));
    }
    check_depth(n)?;
    let scaled = x * Rational::from_integer(BigInt::from(p.interval_count(n)));
    let j = to_biguint(&scaled.floor().to_integer());
    Ok(IntervalAddress { n, j })
}

/// Difference quotient of `f_r` over the depth-`n` grid cell `[u_n, v_n]`
/// containing `x`, with `u_n = j_n/2r^n`, `v_n = (j_n + 1)/2r^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordSlope {
    pub n: u32,
    pub j: BigUint,
    pub u: Rational,
    pub v: Rational,
    pub slope: Rational,
}

/// Chord slopes `m_1, …, m_N` computed from exact values of `f_r` at `u_n, v_n`.
pub fn chord_slopes(p: Params, x: &Rational, depth: u32) -> Result<Vec<ChordSlope>> {
    check_depth(depth)?;
    check_unit(x)?;
    let mut out = Vec::with_capacity(depth as usize);
    for n in 1..=depth {
        let scale: BigInt = pow_i(p.r(), n) * 2;
        let j = (x * Rational::from_integer(scale.clone())).floor().to_integer();
        let u = Rational::new(j.clone(), scale.clone());
        let v = Rational::new(&j + 1, scale.clone());
        let slope = (eval(p, &v) - eval(p, &u)) * Rational::from_integer(scale);
        out.push(ChordSlope { n, j: to_biguint(&j), u, v, slope });
    }
    Ok(out)
}

/// `Σ_{k<n} φ_k⁺(x)`.
pub fn phi_plus_sum(p: Params, n: u32, x: &Rational) -> i64 {
    (0..n).map(|k| phi_plus(p, k, x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(r: u32) -> Params {
        Params::new(r).unwrap()
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(&int(0)), int(0));
        assert_eq!(phi(&rat(1, 2)), rat(1, 2));
        assert_eq!(phi(&rat(7, 10)), rat(3, 10));
        assert_eq!(phi(&rat(-7, 10)), rat(3, 10));
        assert_eq!(phi(&rat(17, 10)), rat(3, 10));
    }

    #[test]
    fn partial_sum_examples() {
        assert_eq!(partial_sum(p(2), 0, &rat(1, 3)), int(0));
        assert_eq!(partial_sum(p(2), 2, &rat(1, 4)), rat(1, 2));
        assert_eq!(partial_sum(p(3), 1, &rat(17, 108)), rat(17, 108));
    }

    #[test]
    fn eval_examples() {
        assert_eq!(eval(p(3), &rat(17, 108)), rat(3, 8));
        assert_eq!(eval(p(3), &rat(37, 108)), rat(3, 8));
        assert_eq!(eval(p(2), &int(0)), int(0));
        assert_eq!(eval(p(2), &rat(1, 3)), rat(2, 3));
        assert_eq!(eval(p(3), &rat(1, 2)), rat(3, 4));
        // 1-periodic reduction
        assert_eq!(eval(p(2), &rat(4, 3)), rat(2, 3));
        assert_eq!(eval(p(2), &int(1)), int(0));
    }

    #[test]
    fn eval_large_denominator_path() {
        // denominator above 2^96 goes through the BigUint orbit
        let q = pow_i(2, 120);
        let x = Rational::new(BigInt::from(12345u32), q);
        assert_eq!(eval(p(2), &x), partial_sum(p(2), 121, &x));
    }

    #[test]
    fn eval_limit_gives_up() {
        assert!(eval_with_limit(p(2), &rat(1, 1_000_003), 10).is_none());
        assert_eq!(eval_with_limit(p(2), &rat(1, 3), 10), Some(rat(2, 3)));
    }

    #[test]
    fn parse_and_print() {
        assert_eq!(parse_rational("17/108").unwrap(), rat(17, 108));
        assert_eq!(parse_rational("-2/4").unwrap(), rat(-1, 2));
        assert_eq!(parse_rational("5").unwrap(), int(5));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert_eq!(rat(3, 8).to_string(), "3/8");
        assert_eq!(int(0).to_string(), "0");
    }

    #[test]
    fn slope_profile_examples() {
        let s = slope_profile(p(3), &rat(17, 108), 6).unwrap();
        assert_eq!(s.slopes, vec![0, 1, 2, 3, 4, 3, 4]);
        let s = slope_profile(p(2), &rat(1, 3), 4).unwrap();
        assert_eq!(s.slopes, vec![0, 1, 0, 1, 0]);
        let s = slope_profile(p(2), &rat(5, 12), 3).unwrap();
        assert_eq!(s.slopes, vec![0, 1, 0, -1]);
    }

    #[test]
    fn slope_profile_rejects_corners_and_range() {
        assert!(matches!(
            slope_profile(p(2), &rat(3, 8), 5),
            Err(Error::PointInCorner { .. })
        ));
        assert!(matches!(slope_profile(p(2), &int(0), 3), Err(Error::PointInCorner { .. })));
        // 3/8 = 3/2·2^2 is a corner only from depth 2 on
        assert!(slope_profile(p(2), &rat(3, 8), 1).is_ok());
        assert!(matches!(slope_profile(p(2), &rat(3, 2), 3), Err(Error::OutOfRange(_))));
        assert!(slope_profile(p(2), &rat(1, 3), MAX_DEPTH + 1).is_err());
    }

    #[test]
    fn corner_depths() {
        assert_eq!(corner_depth(p(2), &int(0)), Some(0));
        assert_eq!(corner_depth(p(2), &rat(1, 2)), Some(0));
        assert_eq!(corner_depth(p(2), &rat(3, 8)), Some(2));
        assert_eq!(corner_depth(p(3), &rat(1, 6)), Some(1));
        assert_eq!(corner_depth(p(3), &rat(1, 4)), None);
        assert_eq!(corner_depth(p(2), &rat(1, 3)), None);
    }

    #[test]
    fn interval_slope_examples() {
        let a = |n, j: u32| IntervalAddress::new(p(2), n, j).unwrap();
        assert_eq!(interval_slope(p(2), &a(1, 0)), 1);
        assert_eq!(interval_slope(p(2), &a(2, 1)), 0);
        assert_eq!(interval_slope(p(2), &a(2, 3)), -2);
    }

    #[test]
    fn locate_examples() {
        assert_eq!(locate(p(2), 2, &rat(5, 12)).unwrap().j, BigUint::from(1u32));
        assert_eq!(locate(p(3), 1, &rat(17, 108)).unwrap().j, BigUint::from(0u32));
        assert_eq!(locate(p(2), 3, &rat(5, 12)).unwrap().j, BigUint::from(3u32));
        assert!(locate(p(2), 3, &int(1)).is_err());
    }

    #[test]
    fn address_validation_and_geometry() {
        assert!(IntervalAddress::new(p(3), 2, 6u32).is_err());
        let a = IntervalAddress::new(p(3), 2, 5u32).unwrap();
        assert_eq!(a.left(p(3)), rat(5, 6));
        assert_eq!(a.right(p(3)), int(1));
        let kids = a.children(p(3));
        assert_eq!(kids.len(), 3);
        assert_eq!(kids[0].left(p(3)), a.left(p(3)));
        assert_eq!(kids[2].right(p(3)), a.right(p(3)));
        assert!(kids.iter().all(|k| a.encloses(p(3), k)));
        assert_eq!(kids[1].parent(p(3)).unwrap(), a);
        assert_eq!(a.to_string(), "(2,5)");
    }

    #[test]
    fn chord_slope_examples() {
        let cs = chord_slopes(p(2), &int(0), 10).unwrap();
        for c in &cs {
            assert_eq!(c.slope, int(c.n as i64 + 1));
        }
        let cs = chord_slopes(p(3), &int(0), 10).unwrap();
        for c in &cs {
            assert_eq!(c.slope, int(c.n as i64) + rat(3, 2));
        }
        let cs = chord_slopes(p(2), &rat(1, 3), 21).unwrap();
        for w in cs.windows(2) {
            let d = &w[1].slope - &w[0].slope;
            assert!(d == int(1) || d == int(-1));
        }
    }

    #[test]
    fn phi_plus_matches_slope_increments() {
        let x = rat(17, 108);
        let s = slope_profile(p(3), &x, 8).unwrap();
        for k in 0..8u32 {
            assert_eq!(s.slope(k + 1) - s.slope(k), phi_plus(p(3), k, &x));
        }
        assert_eq!(phi_plus_sum(p(3), 6, &x), 4);
    }

    #[test]
    fn params_reject_small_r() {
        assert!(Params::new(1).is_err());
        assert!(Params::new(0).is_err());
        assert!(p(5).is_odd());
        assert!(p(4).is_even());
    }
}
