//! The flattening map `ρ`, its iterates, point classification and the
//! equivalence `~` used to group level points.
//!
//! Every statement about the infinite slope walk is checked only up to a
//! budget `N` and is reported as such: "fixed" means `s_n ≥ 0` for `n ≤ N`.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{is_corner_within, locate, pow_i, slope_profile, Params, Rational, SlopeProfile};
use crate::ser;

/// Default cap on `ρ` iterations in [`pi`] and [`rho_infinity`].
pub const DEFAULT_MAX_ITER: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum SignSummary {
    /// `s_n > 0` for `1 ≤ n ≤ N`.
    AllPositive,
    /// `s_n ≥ 0` for `1 ≤ n ≤ N`, with at least one zero.
    AllNonneg,
    FirstNegativeAt(u32),
}

/// Budget-relative classification of a point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PointClass {
    pub in_c: bool,
    /// `None` for corner points.
    pub sign: Option<SignSummary>,
    /// Zeros of `s_n` for `1 ≤ n ≤ N`.
    pub zero_count: usize,
    /// Last `n ≥ 0` with `s_n = 0`.
    pub last_zero: u32,
    pub budget: u32,
}

pub fn classify(p: Params, x: &Rational, budget: u32) -> Result<PointClass> {
    if is_corner_within(p, x, budget) {
        return Ok(PointClass { in_c: true, sign: None, zero_count: 0, last_zero: 0, budget });
    }
    let prof = slope_profile(p, x, budget)?;
    let zeros = prof.zero_times();
    let sign = match prof.first_negative() {
        Some(n) => SignSummary::FirstNegativeAt(n),
        None if zeros.is_empty() => SignSummary::AllPositive,
        None => SignSummary::AllNonneg,
    };
    Ok(PointClass {
        in_c: false,
        sign: Some(sign),
        zero_count: zeros.len(),
        last_zero: prof.last_zero(),
        budget,
    })
}

/// `n₊(x) = inf{n : s_n(x) < 0} − 1`, exact or bounded below by the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum NPlus {
    Exact(u32),
    AtLeast(u32),
}

impl NPlus {
    pub fn exact(self) -> Option<u32> {
        match self {
            NPlus::Exact(n) => Some(n),
            NPlus::AtLeast(_) => None,
        }
    }
}

impl fmt::Display for NPlus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NPlus::Exact(n) => write!(f, "{n}"),
            NPlus::AtLeast(n) => write!(f, ">= {n}"),
        }
    }
}

fn n_plus_of(prof: &SlopeProfile) -> NPlus {
    match prof.first_negative() {
        Some(n) => NPlus::Exact(n - 1),
        None => NPlus::AtLeast(prof.depth()),
    }
}

pub fn n_plus(p: Params, x: &Rational, budget: u32) -> Result<NPlus> {
    Ok(n_plus_of(&slope_profile(p, x, budget)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum RhoRule {
    Fixed,
    Complement,
    ReflectRight,
    ReflectLeft,
}

impl fmt::Display for RhoRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RhoRule::Fixed => "fixed",
            RhoRule::Complement => "complement",
            RhoRule::ReflectRight => "reflectRight",
            RhoRule::ReflectLeft => "reflectLeft",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RhoStep {
    #[serde(serialize_with = "ser::rational")]
    pub input: Rational,
    pub n0: NPlus,
    #[serde(serialize_with = "ser::opt_biguint")]
    pub j0: Option<BigUint>,
    pub rule: RhoRule,
    #[serde(serialize_with = "ser::rational")]
    pub output: Rational,
    /// Set for the fixed rule: nonnegativity of the walk was only observed up
    /// to the budget.
    pub budget_certified: bool,
}

/// One application of `ρ`.
///
/// With `n0 = n₊(x)`: fixed if no negative slope occurs; `1 − x` if `n0 = 0`;
/// otherwise reflection across the right endpoint of `I_{n0+1}(x)` when `x`
/// lies in the leftmost child of `I_{n0}(x)`, and across the left endpoint of
/// `I_{n0+1}(x)` in every other child.
pub fn rho(p: Params, x: &Rational, budget: u32) -> Result<RhoStep> {
    let prof = slope_profile(p, x, budget)?;
    let n0 = n_plus_of(&prof);
    let (rule, j0, output) = match n0 {
        NPlus::AtLeast(_) => (RhoRule::Fixed, None, x.clone()),
        NPlus::Exact(0) => (RhoRule::Complement, None, Rational::one() - x),
        NPlus::Exact(n) => {
            let j0 = locate(p, n, x)?.j;
            let child = locate(p, n + 1, x)?.j;
            let base = &j0 * p.r();
            let l = (&child - &base).to_u32().expect("child index below r");
            let (rule, k) = if l == 0 {
                (RhoRule::ReflectRight, &base + 1u32)
            } else {
                (RhoRule::ReflectLeft, child)
            };
            let centre2 = Rational::new(k.into(), pow_i(p.r(), n));
            (rule, Some(j0), centre2 - x)
        }
    };
    Ok(RhoStep {
        input: x.clone(),
        n0,
        j0,
        rule,
        output,
        budget_certified: rule == RhoRule::Fixed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Flattened {
    #[serde(serialize_with = "ser::rational")]
    pub point: Rational,
    pub iterations: u32,
    pub budget: u32,
}

/// `π(x)`: iterate `ρ` until the fixed rule applies.
pub fn pi(p: Params, x: &Rational, budget: u32, max_iter: u32) -> Result<Flattened> {
    let mut cur = x.clone();
    for it in 0..=max_iter {
        let step = rho(p, &cur, budget)?;
        if step.rule == RhoRule::Fixed {
            return Ok(Flattened { point: cur, iterations: it, budget });
        }
        cur = step.output;
    }
    Err(Error::BudgetInconclusive(format!(
        "rho did not reach a fixed point within {max_iter} iterations"
    )))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum RhoLimit {
    /// Iteration reached a (budget-certified) fixed point.
    Stable {
        #[serde(serialize_with = "ser::rational")]
        point: Rational,
        iterations: u32,
    },
    /// The limit lies in the closed interval `[lo, hi] = Ī_{n₊(ρ^k x)}(ρ^k x)`.
    Nested {
        #[serde(serialize_with = "ser::rational")]
        approx: Rational,
        #[serde(serialize_with = "ser::rational")]
        lo: Rational,
        #[serde(serialize_with = "ser::rational")]
        hi: Rational,
        iterations: u32,
    },
}

impl RhoLimit {
    pub fn point(&self) -> &Rational {
        match self {
            RhoLimit::Stable { point, .. } => point,
            RhoLimit::Nested { approx, .. } => approx,
        }
    }
}

/// `ρ^∞(x)`: the exact fixed point when iteration stabilises within
/// `max_iter` steps, else the nested interval once its width is at most
/// `2^{-precision_bits}`.
pub fn rho_infinity(
    p: Params,
    x: &Rational,
    budget: u32,
    precision_bits: u32,
    max_iter: u32,
) -> Result<RhoLimit> {
    let mut cur = x.clone();
    for it in 0..max_iter {
        let step = rho(p, &cur, budget)?;
        if step.rule == RhoRule::Fixed {
            return Ok(RhoLimit::Stable { point: cur, iterations: it });
        }
        cur = step.output;
    }
    if let NPlus::Exact(n) = n_plus(p, &cur, budget)? {
        if n >= 1 {
            let a = locate(p, n, &cur)?;
            let width = a.width(p);
            let tol = Rational::new(1.into(), num_bigint::BigInt::from(1u8) << precision_bits);
            if width <= tol {
                return Ok(RhoLimit::Nested {
                    approx: cur,
                    lo: a.left(p),
                    hi: a.right(p),
                    iterations: max_iter,
                });
            }
        }
    } else {
        return Ok(RhoLimit::Stable { point: cur, iterations: max_iter });
    }
    Err(Error::BudgetInconclusive(format!(
        "rho^infinity not resolved to 2^-{precision_bits} within {max_iter} iterations"
    )))
}

/// All `x` with `ρ(x) = z` whose reflection depth is a zero time of `z` up to
/// `max_n`, together with the complement preimage and `z` itself when fixed.
/// Every candidate is confirmed by applying `ρ` with budget `max_n + 1`.
pub fn preimages_rho(p: Params, z: &Rational, max_n: u32) -> Result<Vec<Rational>> {
    let budget = max_n + 1;
    let prof = slope_profile(p, z, budget)?;
    let maps_to_z = |x: &Rational| -> Result<bool> {
        if x.is_negative() || *x >= Rational::one() || is_corner_within(p, x, budget) {
            return Ok(false);
        }
        let step = rho(p, x, budget)?;
        Ok(step.rule != RhoRule::Fixed && step.output == *z)
    };
    let mut out = Vec::new();
    if rho(p, z, budget)?.rule == RhoRule::Fixed {
        out.push(z.clone());
    }
    let comp = Rational::one() - z;
    if maps_to_z(&comp)? {
        out.push(comp);
    }
    for n0 in prof.zero_times().into_iter().filter(|&n| n <= max_n) {
        let base = locate(p, n0, z)?.j * p.r();
        let denom = pow_i(p.r(), n0);
        for l in 1..p.r() {
            let cand = Rational::new((&base + l).into(), denom.clone()) - z;
            if maps_to_z(&cand)? {
                out.push(cand);
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// `x ~ x'`: equal, or sharing the last zero time `n` of the slope walk, the
/// interval `I_n` and differing by an integer multiple of `r^{-n}`.
///
/// `n(x)` counts as certified when the walk shows no zero in the second half
/// of the budget.
pub fn equivalent(p: Params, x: &Rational, x2: &Rational, budget: u32) -> Result<bool> {
    if x == x2 {
        return Ok(true);
    }
    let last_zero = |pt: &Rational| -> Result<u32> {
        let n = slope_profile(p, pt, budget)?.last_zero();
        if 2 * n > budget {
            return Err(Error::BudgetInconclusive(format!(
                "last zero of the slope walk of {pt} at {n} is within the second half of budget {budget}"
            )));
        }
        Ok(n)
    };
    let n = last_zero(x)?;
    if n != last_zero(x2)? {
        return Ok(false);
    }
    if n >= 1 && locate(p, n, x)? != locate(p, n, x2)? {
        return Ok(false);
    }
    let m = (x - x2) * Rational::from_integer(pow_i(p.r(), n));
    if !m.is_integer() {
        return Ok(false);
    }
        Ok(!m.is_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{eval, int, rat};

    fn p(r: u32) -> Params {
        Params::new(r).unwrap()
    }

    #[test]
    fn n_plus_examples() {
        assert_eq!(n_plus(p(2), &rat(5, 12), 10).unwrap(), NPlus::Exact(2));
        assert_eq!(n_plus(p(2), &rat(2, 3), 10).unwrap(), NPlus::Exact(0));
        assert_eq!(n_plus(p(2), &rat(1, 3), 50).unwrap(), NPlus::AtLeast(50));
        assert!(matches!(n_plus(p(2), &rat(1, 4), 10), Err(Error::PointInCorner { .. })));
        assert_eq!(NPlus::AtLeast(50).to_string(), ">= 50");
    }

    #[test]
    fn rho_examples() {
        let s = rho(p(2), &rat(5, 12), 10).unwrap();
        assert_eq!(s.rule, RhoRule::ReflectLeft);
        assert_eq!(s.output, rat(1, 3));
        assert_eq!(s.j0, Some(BigUint::from(1u32)));
        assert_eq!(eval(p(2), &rat(5, 12)), eval(p(2), &rat(1, 3)));

        let s = rho(p(2), &rat(2, 3), 10).unwrap();
        assert_eq!(s.rule, RhoRule::Complement);
        assert_eq!(s.output, rat(1, 3));

        let s = rho(p(2), &rat(1, 3), 50).unwrap();
        assert_eq!(s.rule, RhoRule::Fixed);
        assert!(s.budget_certified);
        assert_eq!(s.output, rat(1, 3));
    }

    #[test]
    fn rho_reflect_right_moves_right() {
        // r = 5: find a point whose n₊ is ≥ 1 and which sits in the leftmost child
        let pr = p(5);
        let mut found = false;
        for k in 1..2000i64 {
            let x = rat(2 * k + 1, 4002);
            let Ok(step) = rho(pr, &x, 30) else { continue };
            if step.rule == RhoRule::ReflectRight {
                assert!(step.output > x);
                assert_eq!(eval(pr, &step.output), eval(pr, &x));
                found = true;
                break;
            }
        }
        assert!(found);
    }

    #[test]
    fn pi_examples() {
        assert_eq!(pi(p(2), &rat(2, 3), 40, DEFAULT_MAX_ITER).unwrap().point, rat(1, 3));
        assert_eq!(pi(p(2), &rat(5, 12), 40, DEFAULT_MAX_ITER).unwrap().point, rat(1, 3));
        let f = pi(p(2), &rat(1, 3), 40, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(f.point, rat(1, 3));
        assert_eq!(f.iterations, 0);
        assert!(matches!(pi(p(2), &rat(5, 12), 40, 0), Err(Error::BudgetInconclusive(_))));
    }

    #[test]
    fn rho_infinity_examples() {
        let lim = rho_infinity(p(2), &rat(5, 12), 40, 30, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(lim, RhoLimit::Stable { point: rat(1, 3), iterations: 1 });
        let lim = rho_infinity(p(2), &rat(2, 3), 40, 30, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(lim.point(), &rat(1, 3));
        let lim = rho_infinity(p(2), &rat(1, 3), 40, 30, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(lim.point(), &rat(1, 3));
    }

    #[test]
    fn rho_infinity_nested_interval() {
        // stop after one iteration on a point needing several, with loose precision
        let pr = p(2);
        let x = rat(5, 12);
        match rho_infinity(pr, &x, 40, 1, 0) {
            Ok(RhoLimit::Nested { lo, hi, .. }) => {
                assert!(lo <= rat(1, 3) && rat(1, 3) <= hi);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(rho_infinity(pr, &x, 40, 30, 0), Err(Error::BudgetInconclusive(_))));
    }

    #[test]
    fn preimages_of_one_third() {
        let pre = preimages_rho(p(2), &rat(1, 3), 6).unwrap();
        assert!(pre.contains(&rat(2, 3)));
        assert!(pre.contains(&rat(5, 12)));
        assert!(pre.contains(&rat(1, 3)));
        for c in &pre {
            assert_eq!(rho(p(2), c, 7).unwrap().output, rat(1, 3));
        }
        // zeros at 2, 4, 6
        assert!(pre.len() <= 2 * 6 + 2);
    }

    #[test]
    fn preimages_exclude_non_fixed_target() {
        let z = rat(2, 3);
        let pre = preimages_rho(p(2), &z, 6).unwrap();
        assert!(!pre.contains(&z));
    }

    #[test]
    fn equivalence_examples() {
        assert!(equivalent(p(2), &rat(1, 3), &rat(1, 3), 50).unwrap());
        assert!(!equivalent(p(3), &rat(17, 108), &rat(37, 108), 40).unwrap());
        assert!(matches!(
            equivalent(p(2), &rat(1, 3), &rat(2, 3), 50),
            Err(Error::BudgetInconclusive(_))
        ));
    }

    #[test]
    fn equivalence_positive_case() {
        // a point whose walk hits 0 only at n = 2, shifted by m/25 inside I_2
        let pr = p(5);
        let mut hit = false;
        'outer: for a in 1..5003i64 {
            let x = rat(a, 5003);
            for m in [-2i64, -1, 1, 2] {
                let x2 = &x + rat(m, 25);
                if x2 < int(0) || x2 >= int(1) {
                    continue;
                }
                if let Ok(true) = equivalent(pr, &x, &x2, 40) {
                    let (px, px2) = (slope_profile(pr, &x, 40).unwrap(), slope_profile(pr, &x2, 40).unwrap());
                    assert_eq!(px.last_zero(), 2);
                    assert_eq!(px.slopes, px2.slopes);
                    assert_eq!(eval(pr, &x), eval(pr, &x2));
                    hit = true;
                    break 'outer;
                }
            }
        }
        assert!(hit);
    }

    #[test]
    fn classify_points() {
        let c = classify(p(2), &rat(1, 3), 10).unwrap();
        assert_eq!(c.sign, Some(SignSummary::AllNonneg));
        assert_eq!(c.zero_count, 5);
        let c = classify(p(3), &rat(17, 108), 10).unwrap();
        assert_eq!(c.sign, Some(SignSummary::AllPositive));
        let c = classify(p(2), &rat(5, 12), 10).unwrap();
        assert_eq!(c.sign, Some(SignSummary::FirstNegativeAt(3)));
        let c = classify(p(2), &rat(1, 4), 10).unwrap();
        assert!(c.in_c);
    }
}
