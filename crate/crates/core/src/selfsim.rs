//! Self-similarity over flat intervals.
//!
//! When `s_{n,j} = 0`, the graph of `f_r` above `I_{n,j}` is made of `r` copies
//! of the left half-graph `{(x, f_r(x)) : 0 ≤ x ≤ 1/2}`, scaled by `r^{-n}`,
//! lifted by the constant value of `f_r^n` and alternately reflected. Repeating
//! that decomposition along the zero times of the slope walk of a point gives a
//! nested `r`-ary tree of flat intervals, each carrying a point of the same
//! level set.

use std::fmt::Write as _;

use num_traits::ToPrimitive;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{
    eval, interval_slope, inv_pow, locate, partial_sum, pow_i, rat, slope_profile, IntervalAddress,
    Params, Rational,
};
use crate::levelset::max_upper;
use crate::sampling::substream;
use crate::ser;

/// One of the `r` scaled copies above a flat interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AffineCopy {
    #[serde(serialize_with = "ser::address")]
    pub parent: IntervalAddress,
    pub child_index: u32,
    #[serde(serialize_with = "ser::address")]
    pub child: IntervalAddress,
    /// `f_r^n` at the left endpoint of the parent.
    #[serde(serialize_with = "ser::rational")]
    pub offset: Rational,
    /// `r^{-n}`.
    #[serde(serialize_with = "ser::rational")]
    pub scale: Rational,
    /// Set when `rj + i` is odd.
    pub reflected: bool,
}

impl AffineCopy {
    /// `x'` with `x = (rj+i)/2r^n + x'/r^n`.
    pub fn local(&self, p: Params, x: &Rational) -> Rational {
        (x - self.child.left(p)) * Rational::from_integer(pow_i(p.r(), self.parent.n))
    }

    /// Inverse of [`AffineCopy::local`].
    pub fn global(&self, p: Params, local: &Rational) -> Rational {
        self.child.left(p) + local * &self.scale
    }

    /// The argument of the scaled copy: `x'`, or `1/2 − x'` when reflected.
    pub fn copy_argument(&self, p: Params, x: &Rational) -> Rational {
        let local = self.local(p, x);
        if self.reflected {
            rat(1, 2) - local
        } else {
            local
        }
    }

    /// `offset + scale · f_r^{m-n}(copy argument)`, which equals `f_r^m(x)` on
    /// the closed child interval for every `m > n`.
    pub fn predicted_partial(&self, p: Params, m: u32, x: &Rational) -> Rational {
        let arg = self.copy_argument(p, x);
        &self.offset + &self.scale * partial_sum(p, m - self.parent.n, &arg)
    }

    /// Limit form: `offset + scale · f_r(copy argument)`.
    pub fn predicted_value(&self, p: Params, x: &Rational) -> Rational {
        let arg = self.copy_argument(p, x);
        &self.offset + &self.scale * eval(p, &arg)
    }
}

fn ensure_flat(p: Params, a: &IntervalAddress) -> Result<()> {
    let slope = interval_slope(p, a);
    if slope != 0 {
        return Err(Error::NotFlat { n: a.n, j: a.j.to_string(), slope });
    }
    Ok(())
}

/// The `r` affine copies above a flat interval, left to right.
pub fn decompose(p: Params, a: &IntervalAddress) -> Result<Vec<AffineCopy>> {
    ensure_flat(p, a)?;
    let offset = partial_sum(p, a.n, &a.left(p));
    let scale = inv_pow(p.r(), a.n);
    Ok(a
        .children(p)
        .into_iter()
        .enumerate()
        .map(|(i, child)| {
            let reflected = child.j.bit(0);
            AffineCopy {
                parent: a.clone(),
                child_index: i as u32,
                child,
                offset: offset.clone(),
                scale: scale.clone(),
                reflected,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ChildCheck {
    #[serde(serialize_with = "ser::address")]
    pub child: IntervalAddress,
    pub reflected: bool,
    pub checked: usize,
    #[serde(serialize_with = "ser::rationals")]
    pub failures: Vec<Rational>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfSimReport {
    #[serde(serialize_with = "ser::address")]
    pub parent: IntervalAddress,
    pub m: u32,
    pub children: Vec<ChildCheck>,
}

impl SelfSimReport {
    pub fn all_passed(&self) -> bool {
        self.children.iter().all(|c| c.failures.is_empty())
    }

    pub fn both_orientations(&self) -> bool {
        self.children.iter().any(|c| c.reflected) && self.children.iter().any(|c| !c.reflected)
    }
}

/// Sample points of a closed interval: both endpoints plus `samples` interior
/// points drawn from a fixed stream (mixing dyadic and odd denominators).
fn closed_samples(p: Params, a: &IntervalAddress, samples: usize, stream: u64) -> Vec<Rational> {
    let (lo, w) = (a.left(p), a.width(p));
    let mut rng = substream(0x5e1f_5111, stream);
    let mut pts = vec![lo.clone(), a.right(p)];
    for s in 0..samples {
        let t = if s % 2 == 0 {
            rat(rng.random_range(0..=1i64 << 32), 1i64 << 32)
        } else {
            rat(rng.random_range(0..=1_000_003i64), 1_000_003)
        };
        pts.push(&lo + &w * t);
    }
    pts
}

/// Checks the finite self-similarity identity for `f_r^m` exactly at sampled
/// points of every closed child interval of a flat interval.
pub fn verify_selfsim(
    p: Params,
    a: &IntervalAddress,
    m: u32,
    samples: usize,
) -> Result<SelfSimReport> {
    let copies = decompose(p, a)?;
    if m <= a.n {
        return Err(Error::InvalidParameter(format!("need m > n, got m = {m}, n = {}", a.n)));
    }
    let children = copies
        .iter()
        .map(|c| {
            let pts = closed_samples(p, &c.child, samples, c.child_index as u64);
            let failures = pts
                .iter()
                .filter(|x| partial_sum(p, m, x) != c.predicted_partial(p, m, x))
                .cloned()
                .collect();
            ChildCheck {
                child: c.child.clone(),
                reflected: c.reflected,
                checked: pts.len(),
                failures,
            }
        })
        .collect();
    Ok(SelfSimReport { parent: a.clone(), m, children })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessNode {
    /// Letters in `1..=r`, left to right among siblings.
    pub word: Vec<u32>,
    pub address: IntervalAddress,
    /// A point of the node with the same values `f_r^m`, `m ≥ n_k`, as the base
    /// point; in particular `f_r(point) = f_r(base)`.
    pub point: Rational,
}

/// Nested `r`-ary tree of flat intervals built along zero times
/// `n_0 < n_1 < … < n_K` of the slope walk of `base`.
#[derive(Debug, Clone)]
pub struct WitnessTree {
    pub r: u32,
    pub base: Rational,
    pub zero_times: Vec<u32>,
    /// `y_k = f_r^{n_k}(base)`.
    pub levels: Vec<Rational>,
    /// `nodes[k]` holds the `r^k` depth-`k` nodes, ordered left to right.
    pub nodes: Vec<Vec<WitnessNode>>,
}

/// Largest supported leaf count `r^K`.
pub const MAX_WITNESS_LEAVES: u64 = 1 << 20;

impl WitnessTree {
    pub fn height(&self) -> usize {
        self.zero_times.len() - 1
    }

    pub fn leaves(&self) -> &[WitnessNode] {
        self.nodes.last().expect("tree has a root")
    }

    pub fn node(&self, word: &[u32]) -> Option<&WitnessNode> {
        self.nodes.get(word.len())?.iter().find(|n| n.word == word)
    }

    /// Structural invariants; returns one message per violation.
    pub fn violations(&self, p: Params) -> Vec<String> {
        let mut bad = Vec::new();
        let root = &self.nodes[0][0];
        match locate(p, self.zero_times[0], &self.base) {
            Ok(a) if a == root.address => {}
            _ => bad.push("root is not I_{n_0}(base)".to_string()),
        }
        for (k, level) in self.nodes.iter().enumerate() {
            let n_k = self.zero_times[k];
            if level.len() as u64 != (p.r() as u64).pow(k as u32) {
                bad.push(format!("level {k} has {} nodes", level.len()));
            }
            for w in level.windows(2) {
                if w[0].address.right(p) > w[1].address.left(p) {
                    bad.push(format!("level {k}: {} overlaps {}", w[0].address, w[1].address));
                }
            }
            for node in level {
                if node.address.n != n_k {
                    bad.push(format!("node {} is not at depth {n_k}", node.address));
                }
                if interval_slope(p, &node.address) != 0 {
                    bad.push(format!("node {} is not flat", node.address));
                }
                if partial_sum(p, n_k, &node.address.left(p)) != self.levels[k] {
                    bad.push(format!("node {} does not carry y_{k}", node.address));
                }
                if !node.address.contains(p, &node.point) {
                    bad.push(format!("node {} misses its point", node.address));
                }
                if k > 0 {
                    let parent = self
                        .node(&node.word[..k - 1])
                        .expect("parent word present");
                    if !parent.address.encloses(p, &node.address) || parent.address.n >= node.address.n {
                        bad.push(format!("{} not strictly inside {}", node.address, parent.address));
                    }
                }
            }
        }
        bad
    }

    /// Plain-text form: zero times, `y_k` as `p/q`, leaf addresses `(n,j)`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "r {}", self.r);
        let _ = writeln!(s, "base {}", self.base);
        let times: Vec<String> = self.zero_times.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(s, "zero_times {}", times.join(" "));
        for (k, y) in self.levels.iter().enumerate() {
            let _ = writeln!(s, "y {k} {y}");
        }
        for leaf in self.leaves() {
            let word: Vec<String> = leaf.word.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "leaf {} word {} point {}", leaf.address, word.join("."), leaf.point);
        }
        s
    }
}

/// Builds the witness tree of `x` from the first `levels + 1` zero times of its
/// slope walk within `search_depth`.
pub fn witness_tree(p: Params, x: &Rational, levels: u32, search_depth: u32) -> Result<WitnessTree> {
    if (p.r() as u64).checked_pow(levels).is_none_or(|c| c > MAX_WITNESS_LEAVES) {
        return Err(Error::InvalidParameter(format!(
            "r^K = {}^{levels} leaves exceeds {MAX_WITNESS_LEAVES}",
            p.r()
        )));
    }
    let profile = slope_profile(p, x, search_depth)?;
    let zeros = profile.zero_times();
    let needed = levels as usize + 1;
    if zeros.len() < needed {
        return Err(Error::NotEnoughZeros { found: zeros.len(), needed, search_depth });
    }
    let zero_times = zeros[..needed].to_vec();
    let level_values = zero_times.iter().map(|&n| partial_sum(p, n, x)).collect();

    let root = WitnessNode { word: Vec::new(), address: locate(p, zero_times[0], x)?, point: x.clone() };
    let mut nodes = vec![vec![root]];
    for k in 0..levels as usize {
        let (n, next) = (zero_times[k], zero_times[k + 1]);
        let scale = inv_pow(p.r(), n);
        let mut level = Vec::with_capacity(nodes[k].len() * p.r() as usize);
        for node in &nodes[k] {
            let own = locate(p, n + 1, &node.point)?;
            let local = (&node.point - own.left(p)) / &scale;
            for child in node.address.children(p) {
                let arg = if child.j.bit(0) == own.j.bit(0) {
                    local.clone()
                } else {
                    rat(1, 2) - &local
                };
                let point = child.left(p) + &arg * &scale;
                let mut word = node.word.clone();
                word.push((&child.j - &node.address.j * p.r()).to_u32().unwrap() + 1);
                level.push(WitnessNode { word, address: locate(p, next, &point)?, point });
            }
        }
        nodes.push(level);
    }
    Ok(WitnessTree { r: p.r(), base: x.clone(), zero_times, levels: level_values, nodes })
}

/// Lower bound on `|L_r(f_r(base))|` certified by a witness tree.
#[derive(Debug, Clone, Serialize)]
pub struct LevelCertificate {
    pub count: u64,
    #[serde(serialize_with = "ser::rational")]
    pub y: Rational,
    #[serde(serialize_with = "ser::rational")]
    pub y_leaf: Rational,
    /// `y_K + r^{-n_K}·M_r` with the certified upper bound for `M_r`.
    #[serde(serialize_with = "ser::rational")]
    pub leaf_max: Rational,
    pub strict: bool,
}

/// Every closed leaf attains its minimum `y_K` at an endpoint and its maximum
/// `y_K + r^{-n_K} M_r ≥ y` inside, so each of the `r^K` disjoint leaves holds
/// a level point when `y_K < y`. When `y = y_K` adjacent leaves may share the
/// point, and only `⌈r^K/2⌉` is claimed.
pub fn level_count_certificate(p: Params, tree: &WitnessTree) -> LevelCertificate {
    let y = eval(p, &tree.base);
    let k = tree.height();
    let y_leaf = tree.levels[k].clone();
    let n_k = tree.zero_times[k];
    let leaf_max = &y_leaf + inv_pow(p.r(), n_k) * max_upper(p);
    let leaves = (p.r() as u64).pow(k as u32);
    let (count, strict) = if y > y_leaf && y <= leaf_max {
        (leaves, true)
    } else if y == y_leaf {
        (leaves.div_ceil(2), false)
    } else {
        (0, false)
    };
    LevelCertificate { count, y, y_leaf, leaf_max, strict }
}

/// The leaf points of a tree: distinct points with `f_r = f_r(base)`.
pub fn level_points(tree: &WitnessTree) -> Vec<Rational> {
    tree.leaves().iter().map(|l| l.point.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::int;
    use num_bigint::BigUint;

    fn p(r: u32) -> Params {
        Params::new(r).unwrap()
    }

    fn addr(r: u32, n: u32, j: u32) -> IntervalAddress {
        IntervalAddress::new(p(r), n, j).unwrap()
    }

    #[test]
    fn decompose_r2_2_1() {
        let copies = decompose(p(2), &addr(2, 2, 1)).unwrap();
        assert_eq!(copies.len(), 2);
        assert!(copies.iter().all(|c| c.offset == rat(1, 2) && c.scale == rat(1, 4)));
        assert_eq!(copies[0].child.j, BigUint::from(2u32));
        assert!(!copies[0].reflected);
        assert_eq!(copies[1].child.j, BigUint::from(3u32));
        assert!(copies[1].reflected);
    }

    #[test]
    fn decompose_rejects_sloped() {
        let err = decompose(p(2), &addr(2, 2, 0)).unwrap_err();
        assert_eq!(err, Error::NotFlat { n: 2, j: "0".into(), slope: 2 });
        assert!(matches!(verify_selfsim(p(2), &addr(2, 2, 0), 8, 5), Err(Error::NotFlat { .. })));
    }

    #[test]
    fn decompose_r3_alternates() {
        // s_{2,1} = 0 for r = 3: 1/6..1/3 with φ_0⁺ = +1, φ_1⁺ = −1
        let a = addr(3, 2, 1);
        let copies = decompose(p(3), &a).unwrap();
        let flags: Vec<bool> = copies.iter().map(|c| c.reflected).collect();
        // children 3,4,5
        assert_eq!(flags, vec![true, false, true]);
        for w in flags.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn selfsim_exact_at_random_points_r2() {
        let pr = p(2);
        let copies = decompose(pr, &addr(2, 2, 1)).unwrap();
        let mut rng = substream(99, 0);
        for c in &copies {
            for _ in 0..100 {
                let t = rat(rng.random_range(0..=1000i64), 1000);
                let x = c.child.left(pr) + c.child.width(pr) * t;
                assert_eq!(partial_sum(pr, 5, &x), c.predicted_partial(pr, 5, &x));
            }
        }
    }

    #[test]
    fn selfsim_limit_form() {
        let pr = p(3);
        let a = addr(3, 2, 1);
        for c in decompose(pr, &a).unwrap() {
            for x in [c.child.left(pr), c.child.right(pr), c.child.left(pr) + c.child.width(pr) * rat(2, 7)] {
                assert_eq!(eval(pr, &x), c.predicted_value(pr, &x));
            }
        }
    }

    #[test]
    fn verify_reports_pass() {
        let rep = verify_selfsim(p(2), &addr(2, 2, 1), 8, 50).unwrap();
        assert!(rep.all_passed());
        assert!(rep.both_orientations());
        assert_eq!(rep.children[0].checked, 52);
        assert!(verify_selfsim(p(2), &addr(2, 2, 1), 2, 5).is_err());
    }

    #[test]
    fn witness_tree_r2_one_third() {
        let pr = p(2);
        let t = witness_tree(pr, &rat(1, 3), 3, 10).unwrap();
        assert_eq!(t.zero_times, vec![2, 4, 6, 8]);
        assert_eq!(t.leaves().len(), 8);
        assert!(t.violations(pr).is_empty(), "{:?}", t.violations(pr));
        let y = eval(pr, &rat(1, 3));
        for z in level_points(&t) {
            assert_eq!(eval(pr, &z), y);
        }
        let cert = level_count_certificate(pr, &t);
        assert_eq!(cert.count, 8);
        assert!(cert.strict);
    }

    #[test]
    fn witness_tree_degenerate() {
        let pr = p(2);
        let t = witness_tree(pr, &rat(1, 3), 0, 2).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.leaves()[0].address, addr(2, 2, 1));
        assert_eq!(level_count_certificate(pr, &t).count, 1);
    }

    #[test]
    fn witness_tree_needs_zeros() {
        let err = witness_tree(p(3), &rat(17, 108), 1, 20).unwrap_err();
        assert!(matches!(err, Error::NotEnoughZeros { found: 0, needed: 2, search_depth: 20 }));
        assert!(matches!(witness_tree(p(2), &int(0), 1, 20), Err(Error::PointInCorner { .. })));
    }

    #[test]
    fn boundary_case_halves() {
        let pr = p(2);
        let mut t = witness_tree(pr, &rat(1, 3), 2, 10).unwrap();
        t.levels[2] = eval(pr, &t.base);
        assert_eq!(level_count_certificate(pr, &t).count, 2);
    }

    #[test]
    fn tree_text_format() {
        let t = witness_tree(p(2), &rat(1, 3), 1, 10).unwrap();
        let txt = t.to_text();
        assert!(txt.contains("zero_times 2 4"));
        assert!(txt.contains("y 0 1/2"));
        assert!(txt.contains("leaf (4,"));
    }

    #[test]
    fn big_trees_are_refused() {
        assert!(witness_tree(p(2), &rat(1, 3), 21, 100).is_err());
    }
}
