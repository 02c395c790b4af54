//! Level sets `L_r(y) = {x ∈ [0,1) : f_r(x) = y}`, the maximum `M_r`, the
//! nonnegative flat intervals `A⁺` and occupation-measure empirics.
//!
//! All value ranges rest on one bound: on `I_{n,j}`,
//! `f_r(x) = f_r^n(x) + r^{-n} f_r(r^n x)`, so `f_r` lies between the smaller
//! endpoint value of the linear piece `f_r^n` and the larger one plus
//! `r^{-n} M_r`.
//!
//! Pieces are tracked in integer form: at depth `n` the value of `f_r^n` at
//! the left end of `I_{n,j}` times `D_n = 2r^{n-1}` is an integer `F`, and the
//! right end carries `F + s_{n,j}`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::crw::{crw_parameter, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::exact::{eval, inv_pow, pow_i, pow_u, rat, IntervalAddress, Params, Rational};
use crate::sampling::{grid_exponent, substream, uniform_below, uniform_between, uniform_noncorner, GENERATOR};
use crate::selfsim::{level_count_certificate, witness_tree};
use crate::ser;

/// Linear piece of `f_r^n` on `I_{n,j}`, scaled by `D_n`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    j: u128,
    f: i128,
    s: i64,
}

impl Piece {
    fn lo(&self) -> i128 {
        self.f.min(self.f + self.s as i128)
    }

    fn hi(&self) -> i128 {
        self.f.max(self.f + self.s as i128)
    }

    /// The `r` pieces of depth `n + 1` inside this one.
    fn children(self, r: u32) -> impl Iterator<Item = Piece> {
        let r128 = r as i128;
        (0..r).map(move |c| {
            let j = self.j * r as u128 + c as u128;
            let odd = (j & 1) as i128;
            Piece {
                j,
                f: r128 * self.f + self.s as i128 * c as i128 + odd,
                s: self.s + if odd == 0 { 1 } else { -1 },
            }
        })
    }
}

fn depth_one() -> [Piece; 2] {
    [Piece { j: 0, f: 0, s: 1 }, Piece { j: 1, f: 1, s: -1 }]
}

/// `D_n = 2r^{n-1}` when it stays below `2^120`.
fn scale_i128(p: Params, n: u32) -> Option<i128> {
    let d = (p.r() as i128).checked_pow(n - 1)?.checked_mul(2)?;
    (d < 1i128 << 120).then_some(d)
}

fn scale_big(p: Params, n: u32) -> BigInt {
    pow_i(p.r(), n - 1) * 2
}

fn address(n: u32, j: u128) -> IntervalAddress {
    IntervalAddress { n, j: BigUint::from(j) }
}

/// Certified enclosure of `M_r = max f_r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MaxEnclosure {
    pub r: u32,
    #[serde(serialize_with = "ser::rational")]
    pub lo: Rational,
    #[serde(serialize_with = "ser::rational")]
    pub hi: Rational,
    /// A point with `f_r(witness) = lo`.
    #[serde(serialize_with = "ser::rational")]
    pub witness: Rational,
    /// Set when `lo = hi`.
    #[serde(serialize_with = "ser::opt_rational")]
    pub exact: Option<Rational>,
    pub depth: u32,
    pub live: usize,
    pub converged: bool,
}

impl MaxEnclosure {
    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }
}

pub const MAX_PRECISION_BITS: u32 = 60;
/// Frontier size at which [`max_value`] stops refining.
pub const MAX_FRONTIER: usize = 1 << 22;

/// Branch and bound for `M_r` to width `2^{-precision_bits}` (at most 60).
///
/// At depth `n`, with `G_n` the largest endpoint value of `f_r^n` over live
/// pieces, `M_r ≤ G_n + r^{-n} M_r`, so `M_r ≤ G_n/(1 − r^{-n})`. A piece is
/// discarded once its endpoint maximum plus `r^{-n}·hi` is below `lo`. Lower
/// bounds come from exact values at live endpoints and at points
/// `k/(r^n − 1)` (period-`n` points of `x ↦ r x mod 1`) in the best pieces.
/// For odd `r` the start value `f_r(1/2) = r/(2(r−1))` is the maximum.
pub fn max_value(p: Params, precision_bits: u32) -> MaxEnclosure {
    let bits = precision_bits.min(MAX_PRECISION_BITS);
    let tol = Rational::new(BigInt::one(), BigInt::one() << bits);
    let r = p.r();
    let half = rat(1, 2);
    let mut lo = eval(p, &half);
    let mut witness = half.clone();
    let mut hi = rat(r as i64, 2 * (r as i64 - 1));
    let mut pieces: Vec<Piece> = depth_one().to_vec();
    let mut n = 1u32;
    let mut converged;
    loop {
        let d = scale_i128(p, n).expect("checked before descent");
        let d_big = BigInt::from(d);
        let rn = pow_i(r, n);

        // lower bounds from the best few pieces
        let mut order: Vec<usize> = (0..pieces.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(pieces[i].hi()));
        for &i in order.iter().take(64) {
            let pc = pieces[i];
            let mut cands = vec![
                Rational::new(BigInt::from(pc.j), d_big.clone()),
                Rational::new(BigInt::from(pc.j + 1), d_big.clone()),
            ];
            if n <= 24 {
                let m: BigInt = &rn - 1;
                let left = Rational::new(BigInt::from(pc.j) * &m, d_big.clone()).ceil().to_integer();
                let right = Rational::new(BigInt::from(pc.j + 1) * &m, d_big.clone());
                let mut k = left;
                while Rational::from_integer(k.clone()) < right {
                    cands.push(Rational::new(k.clone(), m.clone()));
                    k += 1;
                }
            }
            for x in cands {
                if x >= Rational::one() {
                    continue;
                }
                let v = eval(p, &x);
                if v > lo {
                    lo = v;
                    witness = x;
                }
            }
        }

        // upper bound from the fixpoint inequality
        let g = pieces.iter().map(Piece::hi).max().expect("live pieces");
        let bound = Rational::new(BigInt::from(g) * &rn, &d_big * (&rn - 1));
        if bound < hi {
            hi = bound;
        }

        // prune: keep iff hi_end + (2/r)·hi ≥ D·lo
        let t = (Rational::from_integer(d_big.clone()) * &lo - rat(2, r as i64) * &hi)
            .ceil()
            .to_integer();
        let t = t.to_i128().expect("threshold below D");
        pieces.retain(|pc| pc.hi() >= t);

        converged = &hi - &lo <= tol;
        if converged || pieces.len() * r as usize > MAX_FRONTIER || scale_i128(p, n + 1).is_none() {
            break;
        }
        pieces = pieces.iter().flat_map(|pc| pc.children(r)).collect();
        n += 1;
    }
    let exact = (lo == hi).then(|| lo.clone());
    MaxEnclosure { r, lo, hi, witness, exact, depth: n, live: pieces.len(), converged }
}

fn max_cache() -> &'static Mutex<HashMap<u32, Rational>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Rational>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Certified upper bound for `M_r` (the `hi` end of a 48-bit enclosure),
/// computed once per `r`.
pub fn max_upper(p: Params) -> Rational {
    if let Some(v) = max_cache().lock().unwrap().get(&p.r()) {
        return v.clone();
    }
    let hi = max_value(p, 48).hi;
    max_cache().lock().unwrap().insert(p.r(), hi.clone());
    hi
}

/// `y` test against the range `[lo/D, hi/D + r^{-n}·M]` in integer form.
struct LevelTest {
    num: BigInt,
    den: BigInt,
    /// `(2/r)·M` as `slack_num / slack_den`, the tail bound scaled by `D_n`.
    slack_num: BigInt,
    slack_den: BigInt,
}

impl LevelTest {
    fn new(p: Params, y: &Rational, m_hi: &Rational) -> Self {
        let slack = rat(2, p.r() as i64) * m_hi;
        LevelTest {
            num: y.numer().clone(),
            den: y.denom().clone(),
            slack_num: slack.numer().clone(),
            slack_den: slack.denom().clone(),
        }
    }

    /// Is `y·D ∈ [lo, hi + slack]`? Endpoints count as inside.
    fn contains(&self, lo: &BigInt, hi: &BigInt, d: &BigInt) -> bool {
        let yd = &self.num * d;
        lo * &self.den <= yd && &yd * &self.slack_den <= (hi * &self.slack_den + &self.slack_num) * &self.den
    }
}

/// A flat interval `(n,j) ∈ A⁺` with its value range
/// `[base, base + r^{-n}·M]` (`M` the certified upper bound).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FlatRecord {
    #[serde(serialize_with = "ser::address")]
    pub address: IntervalAddress,
    #[serde(serialize_with = "ser::rational")]
    pub base: Rational,
    #[serde(serialize_with = "ser::rational")]
    pub range_hi: Rational,
}

impl FlatRecord {
    fn new(p: Params, pc: &Piece, n: u32, m_hi: &Rational) -> Self {
        let base = Rational::new(BigInt::from(pc.f), scale_big(p, n));
        let range_hi = &base + inv_pow(p.r(), n) * m_hi;
        FlatRecord { address: address(n, pc.j), base, range_hi }
    }

    pub fn range_lo(&self) -> &Rational {
        &self.base
    }
}

fn check_enumeration(p: Params, depth: u32) -> Result<()> {
    let ok = (p.r() as u64)
        .checked_pow(depth.saturating_sub(1))
        .and_then(|v| v.checked_mul(2))
        .is_some_and(|v| v <= ENUMERATION_CAP);
    if ok {
        Ok(())
    } else {
        Err(Error::DepthCap {
            depth,
            detail: format!("2r^(N-1) exceeds {ENUMERATION_CAP} intervals"),
        })
    }
}

/// Depth-first walk over pieces with all slopes `s_1..s_n ≥ 0`, collecting
/// the flat ones. `keep` may prune further subtrees.
fn walk_nonneg(p: Params, depth: u32, mut keep: impl FnMut(&Piece, u32) -> bool) -> Vec<(u32, Piece)> {
    let mut out = Vec::new();
    let mut stack: Vec<(u32, Piece)> = depth_one()
        .into_iter()
        .filter(|pc| pc.s >= 0)
        .map(|pc| (1, pc))
        .collect();
    while let Some((n, pc)) = stack.pop() {
        if !keep(&pc, n) {
            continue;
        }
        if pc.s == 0 {
            out.push((n, pc));
        }
        if n < depth {
            stack.extend(pc.children(p.r()).filter(|c| c.s >= 0).map(|c| (n + 1, c)));
        }
    }
    out.sort_by_key(|(n, pc)| (*n, pc.j));
    out
}

/// All members of `A⁺` with `1 ≤ n ≤ depth`, ordered by `(n, j)`.
pub fn enumerate_aplus(p: Params, depth: u32) -> Result<Vec<FlatRecord>> {
    check_enumeration(p, depth)?;
    let m_hi = max_upper(p);
    Ok(walk_nonneg(p, depth, |_, _| true)
        .iter()
        .map(|(n, pc)| FlatRecord::new(p, pc, *n, &m_hi))
        .collect())
}

/// Members of `A⁺(y)`: records of `A⁺` up to `depth` whose value range
/// contains `y`. Subtrees are dropped as soon as their piece range misses
/// `y`; a flat descendant's range lies inside its ancestors' ranges, so the
/// result equals filtering [`enumerate_aplus`].
pub fn aplus_at(p: Params, y: &Rational, depth: u32) -> Result<Vec<FlatRecord>> {
    if scale_i128(p, depth.max(1)).is_none() {
        return Err(Error::DepthCap { depth, detail: "2r^(N-1) exceeds 2^120".into() });
    }
    let m_hi = max_upper(p);
    let test = LevelTest::new(p, y, &m_hi);
    let found = walk_nonneg(p, depth, |pc, n| {
        let d = scale_big(p, n);
        test.contains(&BigInt::from(pc.lo()), &BigInt::from(pc.hi()), &d)
    });
    Ok(found.iter().map(|(n, pc)| FlatRecord::new(p, pc, *n, &m_hi)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CoverInterval {
    #[serde(serialize_with = "ser::address")]
    pub address: IntervalAddress,
    #[serde(serialize_with = "ser::rational")]
    pub range_lo: Rational,
    #[serde(serialize_with = "ser::rational")]
    pub range_hi: Rational,
}

/// Depth-`N` intervals that may meet `L_r(y)`; every `x` with `f_r(x) = y`
/// lies in one of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelSetCover {
    pub r: u32,
    #[serde(serialize_with = "ser::rational")]
    pub y: Rational,
    pub depth: u32,
    pub intervals: Vec<CoverInterval>,
    /// Surviving interval count at depths `1..=N`.
    pub sizes: Vec<usize>,
}

impl LevelSetCover {
    pub fn contains(&self, p: Params, x: &Rational) -> bool {
        self.intervals.iter().any(|c| c.address.contains(p, x))
    }

    pub fn to_csv(&self, p: Params) -> String {
        let mut out = String::from("n,j,left,right,range_lo,range_hi\n");
        for c in &self.intervals {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.address.n,
                c.address.j,
                c.address.left(p),
                c.address.right(p),
                c.range_lo,
                c.range_hi
            ));
        }
        out
    }
}

pub const MAX_COVER_DEPTH: u32 = 60;

#[derive(Clone)]
struct BigPiece {
    j: BigUint,
    f: BigInt,
    s: i64,
}

/// Breadth-first refinement keeping children whose value range contains `y`.
pub fn cover(p: Params, y: &Rational, depth: u32) -> Result<LevelSetCover> {
    if depth == 0 || depth > MAX_COVER_DEPTH {
        return Err(Error::DepthCap { depth, detail: format!("cover depth must be in 1..={MAX_COVER_DEPTH}") });
    }
    let r = p.r();
    let m_hi = max_upper(p);
    let test = LevelTest::new(p, y, &m_hi);
    let mut sizes = Vec::with_capacity(depth as usize);
    let mut level: Vec<BigPiece> = depth_one()
        .iter()
        .map(|pc| BigPiece { j: BigUint::from(pc.j), f: BigInt::from(pc.f), s: pc.s })
        .collect();
    let bounds = |pc: &BigPiece| {
        let g = &pc.f + pc.s;
        if pc.s >= 0 {
            (pc.f.clone(), g)
        } else {
            (g, pc.f.clone())
        }
    };
    for n in 1..=depth {
        if n > 1 {
            level = level
                .par_iter()
                .flat_map_iter(|pc| {
                    (0..r).map(move |c| {
                        let j = &pc.j * r + c;
                        let odd = j.bit(0);
                        BigPiece {
                            f: &pc.f * r + pc.s * c as i64 + odd as i64,
                            s: pc.s + if odd { -1 } else { 1 },
                            j,
                        }
                    })
                })
                .collect();
        }
        let d = scale_big(p, n);
        level.retain(|pc| {
            let (lo, hi) = bounds(pc);
            test.contains(&lo, &hi, &d)
        });
        sizes.push(level.len());
    }
    let d = scale_big(p, depth);
    let tail = inv_pow(r, depth) * &m_hi;
    let intervals = level
        .iter()
        .map(|pc| {
            let (lo, hi) = bounds(pc);
            CoverInterval {
                address: IntervalAddress { n: depth, j: pc.j.clone() },
                range_lo: Rational::new(lo, d.clone()),
                range_hi: Rational::new(hi, d.clone()) + &tail,
            }
        })
        .collect();
    Ok(LevelSetCover { r, y: y.clone(), depth, intervals, sizes })
}

/// Closed bracket `[lo, hi]` around a point of `L_r(y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelBracket {
    #[serde(serialize_with = "ser::rational")]
    pub lo: Rational,
    #[serde(serialize_with = "ser::rational")]
    pub hi: Rational,
}

/// Levels of subdivision searched for a sign change inside a cover interval.
pub const BRACKET_SEARCH_LEVELS: u32 = 6;

/// Locates a point of `L_r(y)` inside the closure of `a` by `r`-section over
/// grid points, where `f_r` is cheap to evaluate exactly, until the bracket
/// width is at most `2^{-bits}`. `None` when no sign change of `f_r − y` is
/// seen within [`BRACKET_SEARCH_LEVELS`] subdivisions.
pub fn find_level_point(p: Params, y: &Rational, a: &IntervalAddress, bits: u32) -> Option<LevelBracket> {
    let sign = |x: &Rational| (eval(p, x) - y).signum();
    let changes = |b: &IntervalAddress| {
        let (u, v) = (sign(&b.left(p)), sign(&b.right(p)));
        u.is_zero() || v.is_zero() || u != v
    };
    let mut frontier = vec![a.clone()];
    let mut start = None;
    for _ in 0..=BRACKET_SEARCH_LEVELS {
        if let Some(b) = frontier.iter().find(|b| changes(b)) {
            start = Some(b.clone());
            break;
        }
        frontier = frontier.iter().flat_map(|b| b.children(p)).collect();
    }
    let mut cur = start?;
    let tol = Rational::new(BigInt::one(), BigInt::one() << bits);
    while cur.width(p) > tol {
        cur = cur.children(p).into_iter().find(|b| changes(b))?;
    }
    Some(LevelBracket { lo: cur.left(p), hi: cur.right(p) })
}

/// Outcome of the sign-constraint and height-width checks on `A⁺` records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HeightWidthReport {
    pub checked: usize,
    /// Records whose range height `r^{-n}·M` exceeds their width.
    pub failures: Vec<String>,
    #[serde(serialize_with = "ser::rational")]
    pub total_width: Rational,
    /// `p_r^{-2}`.
    #[serde(serialize_with = "ser::rational")]
    pub width_bound: Rational,
}

impl HeightWidthReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.total_width <= self.width_bound
    }
}

pub fn heightwidth_check(p: Params, records: &[FlatRecord]) -> HeightWidthReport {
    let mut failures = Vec::new();
    let mut total_width = Rational::zero();
    for rec in records {
        let width = rec.address.width(p);
        if &rec.range_hi - &rec.base > width {
            failures.push(rec.address.to_string());
        }
        total_width += width;
    }
    let pr = crw_parameter(p);
    HeightWidthReport {
        checked: records.len(),
        failures,
        total_width,
        width_bound: Rational::one() / (&pr * &pr),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScanConfig {
    pub samples: u64,
    /// Deepest cover level.
    pub depth: u32,
    /// Cover size at `depth` is compared with the size at this depth.
    pub stable_from: u32,
    pub aplus_depth: u32,
    /// Witness tree height `K`.
    pub levels: u32,
    pub search_depth: u32,
    pub seed: u64,
}

impl ScanConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        ScanConfig { samples, depth: 30, stable_from: 20, aplus_depth: 12, levels: 3, search_depth: 200, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct YSample {
    #[serde(serialize_with = "ser::rational")]
    pub y: Rational,
    pub aplus_count: usize,
    pub cover_sizes: Vec<usize>,
    /// Cover size at `depth` does not exceed the size at `stable_from`.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct XSample {
    #[serde(serialize_with = "ser::rational")]
    pub x: Rational,
    pub zeros_found: usize,
    /// Certified level-set size from a height-`K` witness tree.
    pub certified: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScanReport {
    pub r: u32,
    pub generator: &'static str,
    pub config: ScanConfig,
    pub y_samples: Vec<YSample>,
    pub x_samples: Vec<XSample>,
    pub stable_fraction: Option<f64>,
    pub witness_fraction: Option<f64>,
}

/// Substream offset separating the `x` experiment from the `y` experiment.
const X_STREAM_OFFSET: u64 = 1 << 40;

/// (a) `y` uniform on `[0, M]`: `|A⁺(y)|` and cover sizes by depth.
/// (b) `x` uniform: whether a height-`K` witness tree exists within the
/// search depth, and the level-set size it certifies.
pub fn finiteness_scan(p: Params, cfg: ScanConfig) -> Result<ScanReport> {
    if cfg.stable_from == 0 || cfg.stable_from > cfg.depth {
        return Err(Error::InvalidParameter("need 1 <= stable_from <= depth".into()));
    }
    let m_lo = max_value(p, 48).lo;
    let zero = Rational::zero();
    let y_samples = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let y = uniform_between(&zero, &m_lo, &mut substream(cfg.seed, i));
            let c = cover(p, &y, cfg.depth)?;
            let stable = c.sizes[cfg.depth as usize - 1] <= c.sizes[cfg.stable_from as usize - 1];
            let aplus_count = aplus_at(p, &y, cfg.aplus_depth)?.len();
            Ok(YSample { y, aplus_count, cover_sizes: c.sizes, stable })
        })
        .collect::<Result<Vec<_>>>()?;
    let x_samples = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let x = uniform_noncorner(p, cfg.search_depth, &mut substream(cfg.seed, X_STREAM_OFFSET + i));
            match witness_tree(p, &x, cfg.levels, cfg.search_depth) {
                Ok(tree) => {
                    let cert = level_count_certificate(p, &tree);
                    Ok(XSample { x, zeros_found: tree.zero_times.len(), certified: Some(cert.count) })
                }
                Err(Error::NotEnoughZeros { found, .. }) => Ok(XSample { x, zeros_found: found, certified: None }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let frac = |k: usize, n: usize| (n > 0).then(|| k as f64 / n as f64);
    let full = (p.r() as u64).pow(cfg.levels);
    Ok(ScanReport {
        r: p.r(),
        generator: GENERATOR,
        config: cfg,
        stable_fraction: frac(y_samples.iter().filter(|s| s.stable).count(), y_samples.len()),
        witness_fraction: frac(
            x_samples.iter().filter(|s| s.certified.is_some_and(|c| c >= full)).count(),
            x_samples.len(),
        ),
        y_samples,
        x_samples,
    })
}

fn quantile(sorted: &[usize], q: f64) -> usize {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

impl ScanReport {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
        let mut out = format!(
            "seed: {}\ngenerator: {}\nr: {}\nsamples: {}\ny experiment: cover depth {} vs {}, A+ depth {}\nstable fraction: {}\n",
            c.seed, self.generator, self.r, c.samples, c.stable_from, c.depth, c.aplus_depth, opt(self.stable_fraction)
        );
        if !self.y_samples.is_empty() {
            for d in [c.stable_from, c.depth] {
                let mut v: Vec<usize> = self.y_samples.iter().map(|s| s.cover_sizes[d as usize - 1]).collect();
                v.sort_unstable();
                out.push_str(&format!(
                    "cover size at depth {d}: median {} p90 {} max {}\n",
                    quantile(&v, 0.5),
                    quantile(&v, 0.9),
                    v[v.len() - 1]
                ));
            }
            let mut v: Vec<usize> = self.y_samples.iter().map(|s| s.aplus_count).collect();
            v.sort_unstable();
            out.push_str(&format!("|A+(y)|: median {} max {}\n", quantile(&v, 0.5), v[v.len() - 1]));
        }
        out.push_str(&format!(
            "x experiment: K = {}, search depth {}\nwitness fraction: {}\n",
            c.levels,
            c.search_depth,
            opt(self.witness_fraction)
        ));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistogramMode {
    MonteCarlo { samples: u64, seed: u64 },
    ExactDepth(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OccupationHistogram {
    pub r: u32,
    pub bins: usize,
    /// Upper end of the value range `[0, M]`.
    #[serde(serialize_with = "ser::rational")]
    pub range_hi: Rational,
    pub masses: Vec<f64>,
    /// Monte Carlo bin counts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    /// Exact mode: depth and the tail width `r^{-N}·M` smearing each piece.
    pub exact_depth: Option<u32>,
    pub tail_width: Option<f64>,
}

impl OccupationHistogram {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Smallest fraction of bins that together hold at least 90% of the mass.
    pub fn concentration(&self) -> f64 {
        let k = match &self.counts {
            Some(counts) => {
                let total: u64 = counts.iter().sum();
                let mut sorted = counts.clone();
                sorted.sort_unstable_by(|a, b| b.cmp(a));
                let mut acc = 0u64;
                sorted
                    .iter()
                    .position(|&c| {
                        acc += c;
                        10 * acc >= 9 * total
                    })
                    .map_or(sorted.len(), |i| i + 1)
            }
            None => {
                let mut sorted = self.masses.clone();
                sorted.sort_unstable_by(|a, b| b.total_cmp(a));
                let total: f64 = sorted.iter().sum();
                let mut acc = 0.0;
                sorted
                    .iter()
                    .position(|&m| {
                        acc += m;
                        acc >= 0.9 * total
                    })
                    .map_or(sorted.len(), |i| i + 1)
            }
        };
        k as f64 / self.bins as f64
    }

    pub fn to_csv(&self) -> String {
        let m = self.range_hi.to_f64().unwrap_or(f64::NAN);
        let b = self.bins as f64;
        let mut out = String::from("bin,lo,hi,mass\n");
        for (i, mass) in self.masses.iter().enumerate() {
            out.push_str(&format!("{i},{},{},{mass:e}\n", m * i as f64 / b, m * (i + 1) as f64 / b));
        }
        out
    }
}

pub const MAX_HISTOGRAM_BINS: usize = 1 << 24;

/// `N` with `f_r(k/r^m) = N / r^{2m}` for `0 ≤ k < r^m`.
///
/// With `a_i = r^i k mod r^m`, `f_r(k/r^m) = Σ_{i<m} r^{-i} min(a_i, r^m − a_i)/r^m`;
/// the terms with `i ≥ m` vanish.
pub fn grid_value_numerator(p: Params, k: &BigUint, m: u32) -> BigUint {
    let q = pow_u(p.r(), m);
    if q.bits() <= 64 || q == BigUint::one() << 64u32 {
        // q ≤ 2^64 and N < q²: everything fits in u128
        let q = q.to_u128().expect("at most 2^64");
        let r = p.r() as u128;
        let mut a = (k % q).to_u128().expect("below q");
        let mut n = 0u128;
        for _ in 0..m {
            n = (n + a.min(q - a)) * r;
            a = a * r % q;
        }
        return BigUint::from(n);
    }
    let mut a = k % &q;
    let mut n = BigUint::zero();
    for _ in 0..m {
        let c = if &a * 2u32 <= q { a.clone() } else { &q - &a };
        n = (n + c) * p.r();
        a = a * p.r() % &q;
    }
    n
}

/// Histogram of `f_r` over `[0, M]` (`M` the certified upper bound).
///
/// Monte Carlo bins exact values at uniform grid rationals, bin
/// `⌊B·f_r(x)/M⌋`. The exact mode pushes Lebesgue measure through each
/// linear piece of `f_r^N` and spreads it evenly over the image.
pub fn occupation_histogram(p: Params, bins: usize, mode: HistogramMode) -> Result<OccupationHistogram> {
    if bins == 0 || bins > MAX_HISTOGRAM_BINS {
        return Err(Error::InvalidParameter(format!("bins must be in 1..={MAX_HISTOGRAM_BINS}")));
    }
    let m_hi = max_upper(p);
    let base = OccupationHistogram {
        r: p.r(),
        bins,
        range_hi: m_hi.clone(),
        masses: vec![0.0; bins],
        counts: None,
        samples: None,
        seed: None,
        exact_depth: None,
        tail_width: None,
    };
    match mode {
        HistogramMode::MonteCarlo { samples, seed } => {
            let m = grid_exponent(p, 0);
            let q = pow_u(p.r(), m);
            // bin = floor(B·N·den(M) / (r^{2m}·num(M))) with f(k/r^m) = N/r^{2m}
            let num_m = m_hi.numer().to_biguint().expect("positive");
            let den_m = m_hi.denom().to_biguint().expect("positive");
            let scale = BigUint::from(bins) * den_m;
            let divisor = &q * &q * num_m;
            let counts = (0..samples)
                .into_par_iter()
                .fold(
                    || vec![0u64; bins],
                    |mut acc, i| {
                        let k = uniform_below(&q, &mut substream(seed, i));
                        let b = grid_value_numerator(p, &k, m) * &scale / &divisor;
                        let b = b.to_usize().unwrap_or(bins).min(bins - 1);
                        acc[b] += 1;
                        acc
                    },
                )
                .reduce(
                    || vec![0u64; bins],
                    |mut a, b| {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        a
                    },
                );
            let masses = counts.iter().map(|&c| c as f64 / samples.max(1) as f64).collect();
            Ok(OccupationHistogram { masses, counts: Some(counts), samples: Some(samples), seed: Some(seed), ..base })
        }
        HistogramMode::ExactDepth(depth) => {
            check_enumeration(p, depth.max(1))?;
            let mut pieces = depth_one().to_vec();
            for _ in 1..depth.max(1) {
                pieces = pieces.iter().flat_map(|pc| pc.children(p.r())).collect();
            }
            let d = scale_i128(p, depth.max(1)).expect("within enumeration cap") as f64;
            let m = m_hi.to_f64().expect("finite");
            let bw = m / bins as f64;
            let w = 1.0 / d;
            let mut masses = vec![0.0; bins];
            for pc in &pieces {
                let (u, v) = (pc.lo() as f64 / d, pc.hi() as f64 / d);
                let first = ((u / bw) as usize).min(bins - 1);
                if v <= u {
                    masses[first] += w;
                    continue;
                }
                let last = ((v / bw) as usize).min(bins - 1);
                for (b, mass) in masses.iter_mut().enumerate().take(last + 1).skip(first) {
                    let lo = (b as f64 * bw).max(u);
                    let hi = ((b + 1) as f64 * bw).min(v);
                    if hi > lo {
                        *mass += w * (hi - lo) / (v - u);
                    }
                }
            }
            let total: f64 = masses.iter().sum();
            masses.iter_mut().for_each(|x| *x /= total);
            let tail = inv_pow(p.r(), depth) * &m_hi;
            Ok(OccupationHistogram {
                masses,
                exact_depth: Some(depth),
                tail_width: tail.to_f64(),
                ..base
            })
        }
    }
}

/// Vertices `(j/D_N, f_r^N(j/D_N))` of the depth-`N` approximant, `N ≥ 1`.
pub fn approximant_vertices(p: Params, depth: u32) -> Result<Vec<(Rational, Rational)>> {
    check_enumeration(p, depth.max(1))?;
    let mut pieces = depth_one().to_vec();
    for _ in 1..depth.max(1) {
        pieces = pieces.iter().flat_map(|pc| pc.children(p.r())).collect();
    }
    let d = scale_big(p, depth.max(1));
    let mut out: Vec<(Rational, Rational)> = pieces
        .iter()
        .map(|pc| {
            (
                Rational::new(BigInt::from(pc.j), d.clone()),
                Rational::new(BigInt::from(pc.f), d.clone()),
            )
        })
        .collect();
    let last = pieces.last().expect("nonempty");
    out.push((Rational::one(), Rational::new(BigInt::from(last.f + last.s as i128), d)));
    Ok(out)
}
