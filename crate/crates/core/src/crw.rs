//! The symmetric correlated random walk carried by the slope process.
//!
//! For uniform `x`, the increments `X_{k+1} = φ_k⁺(x)` form a ±1 walk whose
//! first step is fair and whose later steps repeat the previous sign with
//! probability `p_r`. This module computes `p_r` by counting intervals,
//! evaluates constrained path probabilities exactly and simulates the walk.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{rat, Params, Rational};
use crate::sampling::{substream, GENERATOR};
use crate::ser;

/// Largest step count accepted by [`crw_dp`].
pub const MAX_DP_STEPS: u32 = 10_000;
/// Enumeration cap (intervals) for [`slope_measure_check`] and brute counting.
pub const ENUMERATION_CAP: u64 = 10_000_000;

/// `p_r`: 1/2 for even `r`, `(r+1)/2r` for odd `r`.
pub fn crw_parameter(p: Params) -> Rational {
    let r = p.r() as i64;
    if p.is_even() {
        rat(1, 2)
    } else {
        rat(r + 1, 2 * r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrwParams {
    #[serde(serialize_with = "ser::rational")]
    p: Rational,
    #[serde(skip)]
    num: BigUint,
    #[serde(skip)]
    den: BigUint,
}

impl CrwParams {
    pub fn new(p: Rational) -> Result<Self> {
        if p <= Rational::zero() || p >= Rational::one() {
            return Err(Error::InvalidParameter(format!("p = {p} must lie in (0,1)")));
        }
        let num = p.numer().to_biguint().expect("positive");
        let den = p.denom().to_biguint().expect("positive");
        Ok(CrwParams { p, num, den })
    }

    pub fn for_r(p: Params) -> Self {
        Self::new(crw_parameter(p)).expect("p_r lies in [1/2, 1)")
    }

    pub fn p(&self) -> &Rational {
        &self.p
    }
}

/// Sign of `φ_k⁺` on `I_{d,j}`, `k < d`, as a bool (`true` for +1).
fn sign_on(r: u64, d: u32, k: u32, j: u64) -> bool {
    let rm = r.pow(d - 1 - k);
    j % (2 * rm) < rm
}

/// Conditional frequency of `φ_n⁺ = +1` given `φ_{n-1}⁺ = +1` among the
/// `2r^n` intervals of depth `n + 1`.
///
/// Both signs depend only on `j mod 2r`, and every residue class occurs
/// `r^{n-1}` times, so the count runs over the `2r` residues and is scaled.
pub fn exact_transition_count(p: Params, n: u32) -> Result<Rational> {
    if n == 0 {
        return Err(Error::InvalidParameter("transition depth starts at 1".into()));
    }
    if n > crate::MAX_DEPTH {
        return Err(Error::DepthCap { depth: n, detail: format!("limit {}", crate::MAX_DEPTH) });
    }
    let r = p.r() as u64;
    let (mut given, mut both) = (0u64, 0u64);
    for c in 0..2 * r {
        if sign_on(r, 2, 0, c) {
            given += 1;
            if sign_on(r, 2, 1, c) {
                both += 1;
            }
        }
    }
    let mult = BigUint::from(p.r()).pow(n - 1);
    Ok(Rational::new(
        BigInt::from(mult.clone() * both),
        BigInt::from(mult * given),
    ))
}

/// Same frequency by visiting every interval of depth `n + 1` individually.
pub fn transition_count_brute(p: Params, n: u32) -> Result<Rational> {
    let r = p.r() as u64;
    let total = r
        .checked_pow(n)
        .and_then(|v| v.checked_mul(2))
        .filter(|&v| v <= ENUMERATION_CAP)
        .ok_or_else(|| Error::DepthCap {
            depth: n,
            detail: format!("2r^n exceeds {ENUMERATION_CAP} intervals"),
        })?;
    let (mut given, mut both) = (0i64, 0i64);
    for j in 0..total {
        if sign_on(r, n + 1, n - 1, j) {
            given += 1;
            if sign_on(r, n + 1, n, j) {
                both += 1;
            }
        }
    }
    Ok(rat(both, given))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    None,
    /// `S_k ≥ 0` for `1 ≤ k ≤ m`.
    NonnegUpTo(u32),
    /// `S_k > 0` for `1 ≤ k ≤ m`.
    PositiveUpTo(u32),
}

impl Constraint {
    fn kills(self, step: u32, pos: i64) -> bool {
        match self {
            Constraint::None => false,
            Constraint::NonnegUpTo(m) => step <= m && pos < 0,
            Constraint::PositiveUpTo(m) => step <= m && pos <= 0,
        }
    }
}

/// Exact law of `(S_n, X_n)` with violating paths removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrwDistribution {
    pub n: u32,
    /// `(position, last step)` to probability; zero entries omitted.
    pub table: BTreeMap<(i64, i8), Rational>,
}

impl CrwDistribution {
    pub fn total(&self) -> Rational {
        self.table.values().sum()
    }

    /// `P(S_n = s)` summed over the last step.
    pub fn position(&self, s: i64) -> Rational {
        self.table
            .iter()
            .filter(|((pos, _), _)| *pos == s)
            .map(|(_, v)| v)
            .sum()
    }
}

/// Integer-numerator stepper. Masses share the denominator
/// `den(X_1) · Q^{steps−1}` with `p = P/Q`; `den(X_1)` is 2 for the fair
/// start and `Q` for the flying start (`X_0 = +1`).
struct Stepper<'a> {
    pr: &'a CrwParams,
    steps: u32,
    /// `up[s + offset]`, `down[s + offset]`: numerators with last step ±1.
    up: Vec<BigUint>,
    down: Vec<BigUint>,
    offset: i64,
    first_den: BigUint,
}

impl<'a> Stepper<'a> {
    fn new(pr: &'a CrwParams, capacity: u32, flying_start: bool) -> Self {
        let size = 2 * capacity as usize + 3;
        let mut st = Stepper {
            pr,
            steps: 1,
            up: vec![BigUint::zero(); size],
            down: vec![BigUint::zero(); size],
            offset: capacity as i64 + 1,
            first_den: BigUint::zero(),
        };
        let (o, plus, minus) = if flying_start {
            (st.offset as usize, pr.num.clone(), &pr.den - &pr.num)
        } else {
            (st.offset as usize, BigUint::one(), BigUint::one())
        };
        st.first_den = if flying_start { pr.den.clone() } else { BigUint::from(2u32) };
        st.up[o + 1] = plus;
        st.down[o - 1] = minus;
        st
    }

    fn step(&mut self) {
        let same = &self.pr.num;
        let flip = &self.pr.den - &self.pr.num;
        let size = self.up.len();
        let mut up = vec![BigUint::zero(); size];
        let mut down = vec![BigUint::zero(); size];
        for i in 0..size {
            if !self.up[i].is_zero() || !self.down[i].is_zero() {
                if i + 1 < size {
                    up[i + 1] = &self.up[i] * same + &self.down[i] * &flip;
                }
                if i >= 1 {
                    down[i - 1] = &self.down[i] * same + &self.up[i] * &flip;
                }
            }
        }
        self.up = up;
        self.down = down;
        self.steps += 1;
    }

    fn kill(&mut self, c: Constraint) {
        for i in 0..self.up.len() {
            if c.kills(self.steps, i as i64 - self.offset) {
                self.up[i] = BigUint::zero();
                self.down[i] = BigUint::zero();
            }
        }
    }

    fn denominator(&self) -> BigInt {
        BigInt::from(&self.first_den * self.pr.den.pow(self.steps - 1))
    }

    fn mass_at(&self, s: i64) -> Rational {
        let i = (s + self.offset) as usize;
        Rational::new(BigInt::from(&self.up[i] + &self.down[i]), self.denominator())
    }

    fn clear_at(&mut self, s: i64) {
        let i = (s + self.offset) as usize;
        self.up[i] = BigUint::zero();
        self.down[i] = BigUint::zero();
    }
}

/// Exact distribution of `(S_n, X_n)` after `n ≥ 1` steps under the fair
/// start, or under the flying start `P₊` (as if `X_0 = +1`).
pub fn crw_dp(pr: &CrwParams, n: u32, constraint: Constraint, flying_start: bool) -> Result<CrwDistribution> {
    if n == 0 {
        return Ok(CrwDistribution { n, table: BTreeMap::from([((0, 0), Rational::one())]) });
    }
    if n > MAX_DP_STEPS {
        return Err(Error::DepthCap { depth: n, detail: format!("limit {MAX_DP_STEPS} steps") });
    }
    let mut st = Stepper::new(pr, n, flying_start);
    st.kill(constraint);
    for _ in 1..n {
        st.step();
        st.kill(constraint);
    }
    let den = st.denominator();
    let mut table = BTreeMap::new();
    for i in 0..st.up.len() {
        let pos = i as i64 - st.offset;
        for (last, v) in [(1i8, &st.up[i]), (-1i8, &st.down[i])] {
            if !v.is_zero() {
                table.insert((pos, last), Rational::new(BigInt::from(v.clone()), den.clone()));
            }
        }
    }
    Ok(CrwDistribution { n, table })
}

/// `a_n = P(S_1 ≥ 0, …, S_{n−1} ≥ 0, S_n = 0)` and
/// `b_n = P(S_1 > 0, …, S_{n−1} > 0, S_n = 0)` for `n = 1..=N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbSequences {
    pub flying_start: bool,
    pub a: Vec<Rational>,
    pub b: Vec<Rational>,
}

impl AbSequences {
    pub fn a(&self, n: usize) -> &Rational {
        &self.a[n - 1]
    }

    pub fn b(&self, n: usize) -> &Rational {
        &self.b[n - 1]
    }

    /// `b_{n+2}/a_n` for each `n` with both defined and `a_n ≠ 0`.
    pub fn ratio(&self, n: usize) -> Option<Rational> {
        let b = self.b.get(n + 1)?;
        let a = self.a.get(n - 1)?;
        (!a.is_zero()).then(|| b / a)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,a_n,b_n,b_{n+2}/a_n\n");
        for n in 1..=self.a.len() {
            let ratio = self.ratio(n).map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{n},{},{},{ratio}\n", self.a(n), self.b(n)));
        }
        out
    }
}

pub const MAX_AB_LENGTH: u32 = 1000;

/// Both sequences in one pass each: paths are removed as soon as they go
/// negative (resp. non-positive), and the mass at 0 after step `n` is read
/// off before it is discarded.
pub fn a_b_sequences_with(pr: &CrwParams, max_n: u32, flying_start: bool) -> Result<AbSequences> {
    if max_n > MAX_AB_LENGTH {
        return Err(Error::DepthCap { depth: max_n, detail: format!("limit {MAX_AB_LENGTH}") });
    }
    let mut a = Vec::with_capacity(max_n as usize);
    let mut b = Vec::with_capacity(max_n as usize);
    if max_n == 0 {
        return Ok(AbSequences { flying_start, a, b });
    }
    let mut sa = Stepper::new(pr, max_n, flying_start);
    let mut sb = Stepper::new(pr, max_n, flying_start);
    for n in 1..=max_n {
        if n > 1 {
            sa.step();
            sb.step();
        }
        sa.kill(Constraint::NonnegUpTo(n));
        sb.kill(Constraint::NonnegUpTo(n));
        a.push(sa.mass_at(0));
        b.push(sb.mass_at(0));
        sb.clear_at(0);
    }
    Ok(AbSequences { flying_start, a, b })
}

/// [`a_b_sequences_with`] under the fair start, the law of the slope process.
pub fn a_b_sequences(pr: &CrwParams, max_n: u32) -> Result<AbSequences> {
    a_b_sequences_with(pr, max_n, false)
}

/// Lebesgue measure of `{s_1 ≥ 0, …, s_{n−1} ≥ 0, s_n = 0}` counted over the
/// `2r^{n−1}` intervals of depth `n`, paired with `a_n` from the walk.
pub fn slope_measure_check(p: Params, n: u32) -> Result<(Rational, Rational)> {
    if n == 0 {
        return Err(Error::InvalidParameter("depth starts at 1".into()));
    }
    let r = p.r() as u64;
    let total = r
        .checked_pow(n - 1)
        .and_then(|v| v.checked_mul(2))
        .filter(|&v| v <= ENUMERATION_CAP)
        .ok_or_else(|| Error::DepthCap {
            depth: n,
            detail: format!("2r^(n-1) exceeds {ENUMERATION_CAP} intervals"),
        })?;
    let count = (0..total)
        .into_par_iter()
        .filter(|&j| {
            let mut s = 0i64;
            for k in 0..n {
                s += if sign_on(r, n, k, j) { 1 } else { -1 };
                if s < 0 {
                    return false;
                }
            }
            s == 0
        })
        .count();
    let measure = rat(count as i64, total as i64);
    let seq = a_b_sequences(&CrwParams::for_r(p), n)?;
    Ok((measure, seq.a(n as usize).clone()))
}

/// Number of leading `a_n` estimates tracked by [`simulate`].
pub const TRACKED_RETURNS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimSummary {
    pub seed: u64,
    pub generator: &'static str,
    #[serde(serialize_with = "ser::rational")]
    pub p: Rational,
    pub steps: u32,
    pub paths: u64,
    /// Steps following a +1 step, and how many of them were +1.
    pub after_plus: u64,
    pub plus_after_plus: u64,
    pub transition_frequency: Option<f64>,
    /// Paths with `S_k = 0` for some `2 ≤ k ≤ n`.
    pub paths_hitting_zero: u64,
    pub hit_fraction: Option<f64>,
    pub total_zeros: u64,
    pub mean_zeros: Option<f64>,
    /// `first_returns[k−1]`: paths with `S_1..S_{k−1} ≥ 0` and `S_k = 0`.
    pub first_nonneg_zero: Vec<u64>,
    pub a_hat: Vec<f64>,
}

#[derive(Default, Clone)]
struct Tally {
    after_plus: u64,
    plus_after_plus: u64,
    hits: u64,
    zeros: u64,
    a: Vec<u64>,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.after_plus += o.after_plus;
        self.plus_after_plus += o.plus_after_plus;
        self.hits += o.hits;
        self.zeros += o.zeros;
        if self.a.len() < o.a.len() {
            self.a.resize(o.a.len(), 0);
        }
        for (x, y) in self.a.iter_mut().zip(o.a) {
            *x += y;
        }
        self
    }
}

fn one_path(pr: &CrwParams, n: u32, tracked: usize, seed: u64, index: u64) -> Tally {
    let mut rng = substream(seed, index);
    let q = pr.den.to_u64().expect("small denominator");
    let same = pr.num.to_u64().expect("small numerator");
    let mut t = Tally { a: vec![0; tracked], ..Tally::default() };
    let mut up: bool = rng.random();
    let mut s: i64 = if up { 1 } else { -1 };
    let mut nonneg = s >= 0;
    let mut hit = false;
    for k in 2..=n {
        let keep = rng.random_range(0..q) < same;
        if up {
            t.after_plus += 1;
            if keep {
                t.plus_after_plus += 1;
            }
        }
        up = up == keep;
        s += if up { 1 } else { -1 };
        if s == 0 {
            t.zeros += 1;
            hit = true;
            if nonneg && (k as usize) <= tracked {
                t.a[k as usize - 1] += 1;
            }
        }
        nonneg &= s >= 0;
    }
    t.hits = hit as u64;
    t
}

/// Monte Carlo over `paths` independent fair-start walks of `n` steps; path
/// `i` draws from substream `i` of `seed`.
pub fn simulate(pr: &CrwParams, n: u32, paths: u64, seed: u64) -> Result<SimSummary> {
    if pr.den.bits() > 63 {
        return Err(Error::InvalidParameter("simulation needs p with a 63-bit denominator".into()));
    }
    let tracked = TRACKED_RETURNS.min(n as usize);
    let total = (0..paths)
        .into_par_iter()
        .map(|i| one_path(pr, n.max(1), tracked, seed, i))
        .reduce(|| Tally { a: vec![0; tracked], ..Tally::default() }, Tally::merge);
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    Ok(SimSummary {
        seed,
        generator: GENERATOR,
        p: pr.p.clone(),
        steps: n,
        paths,
        after_plus: total.after_plus,
        plus_after_plus: total.plus_after_plus,
        transition_frequency: ratio(total.plus_after_plus, total.after_plus),
        paths_hitting_zero: total.hits,
        hit_fraction: ratio(total.hits, paths),
        total_zeros: total.zeros,
        mean_zeros: ratio(total.zeros, paths),
        a_hat: total.a.iter().map(|&c| c as f64 / paths.max(1) as f64).collect(),
        first_nonneg_zero: total.a,
    })
}

impl SimSummary {
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into());
        let mut out = format!(
            "seed: {}\ngenerator: {}\np: {}\nsteps: {}\npaths: {}\ntransition frequency: {}\nhit fraction: {}\nmean zeros: {}\n",
            self.seed,
            self.generator,
            self.p,
            self.steps,
            self.paths,
            opt(self.transition_frequency),
            opt(self.hit_fraction),
            opt(self.mean_zeros),
        );
        for (k, a) in self.a_hat.iter().enumerate().filter(|(_, a)| **a > 0.0) {
            out.push_str(&format!("a_hat[{}]: {a:.6}\n", k + 1));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::int;

    fn p(r: u32) -> Params {
        Params::new(r).unwrap()
    }

    #[test]
    fn parameter_values() {
        assert_eq!(crw_parameter(p(2)), rat(1, 2));
        assert_eq!(crw_parameter(p(3)), rat(2, 3));
        assert_eq!(crw_parameter(p(5)), rat(3, 5));
        assert_eq!(crw_parameter(p(8)), rat(1, 2));
    }

    #[test]
    fn transition_counts() {
        assert_eq!(exact_transition_count(p(2), 1).unwrap(), rat(1, 2));
        assert_eq!(exact_transition_count(p(3), 1).unwrap(), rat(2, 3));
        assert_eq!(exact_transition_count(p(3), 4).unwrap(), rat(2, 3));
        for r in 2..=6 {
            for n in 1..=5 {
                assert_eq!(
                    exact_transition_count(p(r), n).unwrap(),
                    transition_count_brute(p(r), n).unwrap()
                );
            }
        }
        assert!(matches!(transition_count_brute(p(7), 9), Err(Error::DepthCap { .. })));
    }

    #[test]
    fn dp_examples() {
        let half = CrwParams::new(rat(1, 2)).unwrap();
        let d = crw_dp(&half, 2, Constraint::None, false).unwrap();
        assert_eq!(d.position(0), rat(1, 2));
        let third = CrwParams::new(rat(2, 3)).unwrap();
        let d = crw_dp(&third, 1, Constraint::None, false).unwrap();
        assert_eq!(d.position(1), rat(1, 2));
        for pv in [rat(1, 2), rat(2, 3), rat(3, 5)] {
            let pr = CrwParams::new(pv.clone()).unwrap();
            let d = crw_dp(&pr, 2, Constraint::NonnegUpTo(1), false).unwrap();
            assert_eq!(d.position(0), rat(1, 2) * (int(1) - &pv));
        }
    }

    #[test]
    fn dp_mass_and_symmetry() {
        for pv in [rat(1, 2), rat(2, 3), rat(5, 9)] {
            let pr = CrwParams::new(pv).unwrap();
            for n in 1..=30 {
                let d = crw_dp(&pr, n, Constraint::None, false).unwrap();
                assert_eq!(d.total(), int(1));
                for (&(s, last), v) in &d.table {
                    assert_eq!(s.rem_euclid(2), (n as i64).rem_euclid(2));
                    assert!(s.abs() <= n as i64);
                    assert_eq!(d.table.get(&(-s, -last)), Some(v));
                }
                let f = crw_dp(&pr, n, Constraint::None, true).unwrap();
                assert_eq!(f.total(), int(1));
                let c = crw_dp(&pr, n, Constraint::NonnegUpTo(n), false).unwrap();
                assert!(c.total() <= int(1));
            }
        }
    }

    #[test]
    fn dp_matches_path_enumeration() {
        // independent oracle: sum path weights over all 2^n sign sequences
        for pv in [rat(1, 2), rat(2, 3), rat(3, 5)] {
            let pr = CrwParams::new(pv.clone()).unwrap();
            for n in 1..=10u32 {
                let seq = a_b_sequences(&pr, n).unwrap();
                let (mut a, mut b) = (Rational::zero(), Rational::zero());
                for mask in 0u32..(1 << n) {
                    let steps: Vec<i64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
                    let mut w = rat(1, 2);
                    for i in 1..steps.len() {
                        w *= if steps[i] == steps[i - 1] { pv.clone() } else { int(1) - &pv };
                    }
                    let partial: Vec<i64> = steps
                        .iter()
                        .scan(0, |s, x| {
                            *s += x;
                            Some(*s)
                        })
                        .collect();
                    let last = *partial.last().unwrap();
                    let head = &partial[..partial.len() - 1];
                    if last == 0 && head.iter().all(|&s| s >= 0) {
                        a += &w;
                    }
                    if last == 0 && head.iter().all(|&s| s > 0) {
                        b += &w;
                    }
                }
                assert_eq!(seq.a(n as usize), &a, "a_{n} for p={pv}");
                assert_eq!(seq.b(n as usize), &b, "b_{n} for p={pv}");
            }
        }
    }

    #[test]
    fn ab_examples() {
        let seq = a_b_sequences(&CrwParams::for_r(p(2)), 6).unwrap();
        assert_eq!(seq.a(2), &rat(1, 4));
        assert_eq!(seq.b(4), &rat(1, 16));
        for r in 2..=9 {
            let s = a_b_sequences(&CrwParams::for_r(p(r)), 3).unwrap();
            assert!(s.a(1).is_zero() && s.b(1).is_zero());
        }
    }

    #[test]
    fn flying_start_identity() {
        for r in 2..=9 {
            let pr = CrwParams::for_r(p(r));
            let p2 = pr.p() * pr.p();
            for fly in [false, true] {
                let seq = a_b_sequences_with(&pr, 102, fly).unwrap();
                for n in 1..=100 {
                    assert_eq!(seq.b(n + 2), &(&p2 * seq.a(n)), "r={r} n={n} fly={fly}");
                }
            }
        }
    }

    #[test]
    fn partial_sums_bounded() {
        for r in [2, 3, 5] {
            let pr = CrwParams::for_r(p(r));
            let bound = int(1) / (pr.p() * pr.p());
            let seq = a_b_sequences(&pr, 500).unwrap();
            let mut sum = Rational::zero();
            for a in &seq.a {
                assert!(*a >= Rational::zero());
                sum += a;
                assert!(sum <= bound);
            }
        }
    }

    #[test]
    fn slope_measure_examples() {
        assert_eq!(slope_measure_check(p(2), 2).unwrap(), (rat(1, 4), rat(1, 4)));
        let (m, a) = slope_measure_check(p(3), 2).unwrap();
        assert_eq!(m, a);
        assert_eq!(a, rat(1, 6));
        for r in 2..=7 {
            assert_eq!(slope_measure_check(p(r), 1).unwrap(), (int(0), int(0)));
        }
    }

    #[test]
    fn slope_measure_agreement() {
        for r in 2..=7 {
            for n in 1..=8 {
                if 2 * (r as u64).pow(n - 1) > 2_000_000 {
                    continue;
                }
                let (m, a) = slope_measure_check(p(r), n).unwrap();
                assert_eq!(m, a, "r={r} n={n}");
            }
        }
    }

    #[test]
    fn csv_layout() {
        let csv = a_b_sequences(&CrwParams::for_r(p(2)), 4).unwrap().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "n,a_n,b_n,b_{n+2}/a_n");
        assert_eq!(lines[2], "2,1/4,1/4,1/4");
    }

    #[test]
    fn simulation_frequencies() {
        for (r, target) in [(2, 0.5), (3, 2.0 / 3.0)] {
            let pr = CrwParams::for_r(p(r));
            let s = simulate(&pr, 2000, 20_000, 7).unwrap();
            assert!((s.transition_frequency.unwrap() - target).abs() < 0.005);
            assert!(s.hit_fraction.unwrap() > 0.9);
        }
    }

    #[test]
    fn simulation_matches_dp() {
        let pr = CrwParams::for_r(p(3));
        let paths = 200_000u64;
        let s = simulate(&pr, 40, paths, 11).unwrap();
        let seq = a_b_sequences(&pr, 32).unwrap();
        for n in 1..=32 {
            let exact = seq.a(n).to_f64().unwrap();
            let se = (exact * (1.0 - exact) / paths as f64).sqrt().max(1e-9);
            assert!((s.a_hat[n - 1] - exact).abs() <= 5.0 * se, "n={n}");
        }
    }

    #[test]
    fn simulation_reproducible_and_empty() {
        let pr = CrwParams::for_r(p(2));
        assert_eq!(simulate(&pr, 100, 500, 3).unwrap(), simulate(&pr, 100, 500, 3).unwrap());
        let e = simulate(&pr, 100, 0, 3).unwrap();
        assert_eq!(e.paths, 0);
        assert_eq!(e.transition_frequency, None);
    }
}
