//! Cantor-set eigenvalue parameters with continuous eigenvector fields,
//! grown as a binary tree over a seed family.
//!
//! Node `s·0` copies `s`; node `s·1` is a fresh seed member close to `s`.
//! The jump from `s` to `s·1` is below `2^{-(|s|+1)}` and below half of the
//! jump one level up, in both the vector and the eigenvalue metric, so every
//! branch converges and distinct branches stay apart.

use std::fmt::Write as _;

use serde::Serialize;

use crate::eigenfields::{EigenFamily, EigenPair};
use crate::error::{Error, Result};
use crate::linspace::{circle_point, StateVector, C64};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CantorNode {
    pub theta: f64,
    /// Index of the node's eigenpair in the seed family.
    pub seed_index: usize,
    /// `‖u_s − u_{parent}‖`; zero for left children and the root.
    pub jump_u: f64,
    /// `|λ_s − λ_{parent}|`.
    pub jump_lambda: f64,
}

/// Levels `0..=depth`; level `ℓ` holds the `2^ℓ` strings of length `ℓ` in
/// lexicographic order, so string `s` sits at the index spelled by its bits.
#[derive(Clone, Debug, Serialize)]
pub struct CantorField {
    depth: usize,
    levels: Vec<Vec<CantorNode>>,
    #[serde(skip)]
    seed: EigenFamily,
}

fn node_name(level: usize, index: usize) -> String {
    (0..level)
        .map(|b| if index >> (level - 1 - b) & 1 == 1 { '1' } else { '0' })
        .collect()
}

fn cantor_error(level: usize, index: usize, reason: String) -> Error {
    Error::Cantor {
        node: node_name(level, index),
        reason,
    }
}

/// Grows the tree to `depth` from the seed member `root`.
///
/// Right children are chosen among unused seed members inside both jump
/// radii; the candidate using the largest fraction of its radii wins (the
/// smaller of the two ratios is compared), ties going to the smaller angle.
/// Taking the farthest admissible member keeps the radii of the next level
/// as large as possible; the nearest member shrinks them to the seed's own
/// spacing within two levels.
///
/// Branch separation is not enforced here; `verify_cantor_separation`
/// measures it.
pub fn build_cantor_field(seed: &EigenFamily, root: usize, depth: usize) -> Result<CantorField> {
    let pairs = seed.pairs();
    if root >= pairs.len() {
        return Err(Error::Cantor {
            node: String::new(),
            reason: format!("root index {root} outside a seed family of {}", pairs.len()),
        });
    }
    let mut by_angle: Vec<usize> = (0..pairs.len()).collect();
    by_angle.sort_by(|&a, &b| pairs[a].theta().total_cmp(&pairs[b].theta()));
    let sorted_thetas: Vec<f64> = by_angle.iter().map(|&i| pairs[i].theta()).collect();
    let mut used = vec![false; pairs.len()];
    used[root] = true;

    let mut levels = vec![vec![CantorNode {
        theta: pairs[root].theta(),
        seed_index: root,
        jump_u: 0.0,
        jump_lambda: 0.0,
    }]];
    for level in 0..depth {
        let cap = 0.5f64.powi(level as i32 + 1);
        let parents = &levels[level];
        let mut next = Vec::with_capacity(parents.len() * 2);
        for (pi, parent) in parents.iter().enumerate() {
            // Jumps of the sibling pair one level up.
            let (ru, rl) = if level == 0 {
                (cap, cap)
            } else {
                let right_sibling = &levels[level][pi | 1];
                (
                    cap.min(0.5 * right_sibling.jump_u),
                    cap.min(0.5 * right_sibling.jump_lambda),
                )
            };
            let child = pick_right_child(pairs, &by_angle, &sorted_thetas, &used, parent, ru, rl)
                .ok_or_else(|| {
                    cantor_error(
                        level + 1,
                        pi * 2 + 1,
                        format!("no unused seed member within radii (u: {ru:e}, λ: {rl:e})"),
                    )
                })?;
            used[child.seed_index] = true;
            next.push(CantorNode {
                jump_u: 0.0,
                jump_lambda: 0.0,
                ..parent.clone()
            });
            next.push(child);
        }
        levels.push(next);
    }
    Ok(CantorField {
        depth,
        levels,
        seed: seed.clone(),
    })
}

fn pick_right_child(
    pairs: &[EigenPair],
    by_angle: &[usize],
    sorted_thetas: &[f64],
    used: &[bool],
    parent: &CantorNode,
    ru: f64,
    rl: f64,
) -> Option<CantorNode> {
    if !(ru > 0.0 && rl > 0.0) {
        return None;
    }
    let n = by_angle.len();
    let lp = circle_point(parent.theta);
    let up = pairs[parent.seed_index].vector();
    // |λ − λ_p| < rl confines the angle to |Δθ| < asin(rl/2)/π turns.
    let half = (rl / 2.0).min(1.0).asin() / std::f64::consts::PI + 1e-12;
    let mut window: Vec<usize> = Vec::new();
    if half >= 0.5 {
        window.extend(0..n);
    } else {
        // Angles live in (0, 1]; the window may wrap around either end.
        let mut range = |lo: f64, hi: f64| {
            let a = sorted_thetas.partition_point(|&t| t <= lo);
            let b = sorted_thetas.partition_point(|&t| t < hi);
            window.extend(a..b.max(a));
        };
        let (lo, hi) = (parent.theta - half, parent.theta + half);
        range(lo.max(0.0), hi.min(1.0));
        if lo < 0.0 {
            range(lo + 1.0, 1.0 + 1e-15);
        }
        if hi > 1.0 {
            range(0.0, hi - 1.0);
        }
    }
    let mut best: Option<(f64, CantorNode)> = None;
    for k in window {
        let j = by_angle[k];
        if used[j] {
            continue;
        }
        let t = pairs[j].theta();
        let lc = circle_point(t);
        let jl = (lc - lp).norm();
        if !(jl < rl && jl > 0.0) {
            continue;
        }
        let ju = up.distance(pairs[j].vector()).expect("seed dimensions agree");
        if !(ju < ru) {
            continue;
        }
        let score = (ju / ru).min(jl / rl);
        let better = match &best {
            None => true,
            Some((s, b)) => score > *s || (score == *s && t < b.theta),
        };
        if better {
            best = Some((
                score,
                CantorNode {
                    theta: t,
                    seed_index: j,
                    jump_u: ju,
                    jump_lambda: jl,
                },
            ));
        }
    }
    best.map(|(_, node)| node)
}

impl CantorField {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn seed(&self) -> &EigenFamily {
        &self.seed
    }

    pub fn level(&self, level: usize) -> &[CantorNode] {
        &self.levels[level]
    }

    pub fn leaves(&self) -> &[CantorNode] {
        &self.levels[self.depth]
    }

    pub fn node(&self, s: &str) -> Result<&CantorNode> {
        if s.len() > self.depth || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::UnknownNode(s.to_string()));
        }
        let index = s.bytes().fold(0usize, |acc, b| acc * 2 + usize::from(b == b'1'));
        Ok(&self.levels[s.len()][index])
    }

    pub fn vector(&self, node: &CantorNode) -> &StateVector {
        self.seed.pairs()[node.seed_index].vector()
    }

    pub fn residual(&self, node: &CantorNode) -> f64 {
        self.seed.pairs()[node.seed_index].residual()
    }

    /// One row per node: `s,theta,residual`. The root is the empty string.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,theta,residual\n");
        for (level, nodes) in self.levels.iter().enumerate() {
            for (i, node) in nodes.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", node_name(level, i), node.theta, self.residual(node));
            }
        }
        out
    }

    /// Nodes as a JSON object keyed by string, with the depth.
    pub fn to_json(&self) -> serde_json::Value {
        let mut nodes = serde_json::Map::new();
        for (level, ns) in self.levels.iter().enumerate() {
            for (i, node) in ns.iter().enumerate() {
                nodes.insert(
                    node_name(level, i),
                    serde_json::to_value(node).expect("node serializes"),
                );
            }
        }
        serde_json::json!({ "depth": self.depth, "nodes": nodes })
    }
}

/// `(λ_s angle, u_s)` for a binary string `s` of length at most the depth.
pub fn cantor_lookup<'a>(field: &'a CantorField, s: &str) -> Result<(f64, &'a StateVector)> {
    let node = field.node(s)?;
    Ok((node.theta, field.vector(node)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchMargin {
    pub prefix: String,
    /// `δ = ½|λ_{prefix·0} − λ_{prefix·1}|`.
    pub delta: f64,
    /// Smallest `|λ_s − λ_{s′}|` over same-length descendants of the two
    /// children.
    pub min_distance: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationReport {
    /// Smallest `|λ_s − λ_{s′}|` over distinct strings of equal length.
    pub min_same_level_separation: f64,
    pub branches: Vec<BranchMargin>,
    pub min_margin: f64,
    /// Broken tree invariants, described.
    pub violations: Vec<String>,
    pub pass: bool,
}

/// Re-checks every tree invariant on the stored values and the injectivity
/// margin `min |λ_s − λ_{s′}| − δ_p` at every branching node.
pub fn verify_cantor_separation(field: &CantorField) -> SeparationReport {
    let mut violations = Vec::new();
    let lam: Vec<Vec<C64>> = field
        .levels
        .iter()
        .map(|l| l.iter().map(|n| circle_point(n.theta)).collect())
        .collect();

    for level in 1..=field.depth {
        let cap = 0.5f64.powi(level as i32);
        for (i, node) in field.levels[level].iter().enumerate() {
            let parent = &field.levels[level - 1][i / 2];
            let ju = field.vector(node).distance(field.vector(parent)).expect("dimensions agree");
            let jl = (lam[level][i] - lam[level - 1][i / 2]).norm();
            if i % 2 == 0 {
                if node.theta != parent.theta || node.seed_index != parent.seed_index {
                    violations.push(format!("{} does not copy its parent", node_name(level, i)));
                }
                continue;
            }
            if !(ju < cap && jl < cap) {
                violations.push(format!("{} jumps beyond 2^-{level}", node_name(level, i)));
            }
            if level >= 2 {
                let up = &field.levels[level - 1][(i / 2) | 1];
                if !(node.jump_u < 0.5 * up.jump_u && node.jump_lambda < 0.5 * up.jump_lambda) {
                    violations.push(format!("{} breaks the halving rule", node_name(level, i)));
                }
            }
            if ju != node.jump_u || jl != node.jump_lambda {
                violations.push(format!("{} has stale jump records", node_name(level, i)));
            }
        }
    }

    let mut min_sep = f64::INFINITY;
    for (level, nodes) in field.levels.iter().enumerate() {
        let mut thetas: Vec<f64> = nodes.iter().map(|n| n.theta).collect();
        thetas.sort_by(f64::total_cmp);
        if thetas.windows(2).any(|w| w[0] == w[1]) {
            violations.push(format!("repeated angle on level {level}"));
        }
        for a in 0..lam[level].len() {
            for b in a + 1..lam[level].len() {
                min_sep = min_sep.min((lam[level][a] - lam[level][b]).norm());
            }
        }
    }

    let mut branches = Vec::new();
    for level in 0..field.depth {
        for q in 0..field.levels[level].len() {
            let delta = 0.5 * (lam[level + 1][2 * q] - lam[level + 1][2 * q + 1]).norm();
            let mut min_distance = f64::INFINITY;
            for (k, row) in lam[level + 1..].iter().enumerate() {
                let width = 1usize << k;
                let left = 2 * q * width;
                let right = left + width;
                for a in left..left + width {
                    for b in right..right + width {
                        min_distance = min_distance.min((row[a] - row[b]).norm());
                    }
                }
            }
            branches.push(BranchMargin {
                prefix: node_name(level, q),
                delta,
                min_distance,
                margin: min_distance - delta,
            });
        }
    }
    let min_margin = branches.iter().map(|b| b.margin).fold(f64::INFINITY, f64::min);
    let pass = violations.is_empty() && branches.iter().all(|b| b.margin > 0.0 && b.delta > 0.0);
    SeparationReport {
        min_same_level_separation: min_sep,
        branches,
        min_margin,
        violations,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed() -> EigenFamily {
        EigenFamily::sqrt_prime_2b(2.0, 16, 2048).unwrap()
    }

    #[test]
    fn depth_zero_is_the_root() {
        let s = seed();
        let f = build_cantor_field(&s, 5, 0).unwrap();
        let (theta, u) = cantor_lookup(&f, "").unwrap();
        assert_eq!(theta, s.pairs()[5].theta());
        assert_eq!(u, s.pairs()[5].vector());
        assert!(cantor_lookup(&f, "0").is_err());
    }

    #[test]
    fn depth_one_margin_is_half_the_jump() {
        let f = build_cantor_field(&seed(), 0, 1).unwrap();
        let r = verify_cantor_separation(&f);
        let d = (circle_point(f.node("0").unwrap().theta) - circle_point(f.node("1").unwrap().theta)).norm();
        assert_eq!(r.branches.len(), 1);
        assert_eq!(r.branches[0].delta, 0.5 * d);
        assert!(r.pass);
    }

    #[test]
    fn zero_strings_return_the_root() {
        let s = seed();
        let f = build_cantor_field(&s, 3, 6).unwrap();
        for k in 0..=6 {
            let (theta, _) = cantor_lookup(&f, &"0".repeat(k)).unwrap();
            assert_eq!(theta, s.pairs()[3].theta());
        }
        assert!(matches!(f.node("012"), Err(Error::UnknownNode(_))));
        assert!(matches!(f.node("0000000"), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn tree_invariants_and_continuity() {
        let f = build_cantor_field(&seed(), 0, 6).unwrap();
        let r = verify_cantor_separation(&f);
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert!(r.min_same_level_separation > 0.0);
        assert_eq!(r.branches.len(), 63);
        // Strings sharing a prefix of length p stay within 2·2^-p.
        let leaves = f.leaves();
        for a in (0..leaves.len()).step_by(5) {
            for b in (0..leaves.len()).step_by(7) {
                let p = if a == b { 6 } else { 6 - (usize::BITS - (a ^ b).leading_zeros()) as i32 };
                let d = f.vector(&leaves[a]).distance(f.vector(&leaves[b])).unwrap();
                assert!(d <= 2.0 * 0.5f64.powi(p), "{a} {b}");
            }
        }
    }

    #[test]
    fn sparse_seed_fails_with_node_name() {
        let s = EigenFamily::sqrt_prime_2b(2.0, 16, 4).unwrap();
        match build_cantor_field(&s, 0, 6) {
            Err(Error::Cantor { node, .. }) => assert!(node.ends_with('1')),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn csv_lists_every_node() {
        let f = build_cantor_field(&seed(), 0, 3).unwrap();
        assert_eq!(f.to_csv().lines().count(), 1 + 15);
        assert!(f.to_csv().lines().nth(1).unwrap().starts_with(','));
    }
}
