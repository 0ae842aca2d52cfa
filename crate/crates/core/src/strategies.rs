//! Baseline placements and the exhaustive oracle.
//!
//! Every strategy only picks available switches; when a preferred switch is
//! unavailable the next candidate in its ranking is taken instead.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reduce::{message_counts, Placement};
use crate::scalar::Scalar;
use crate::soar;
use crate::topology::{SwitchId, TreeNetwork};

/// Upper bound on the number of subsets [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    AllRed,
    AllBlue,
    Top,
    Max,
    Level,
    Soar,
    BruteForce,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::AllRed,
        StrategyKind::AllBlue,
        StrategyKind::Top,
        StrategyKind::Max,
        StrategyKind::Level,
        StrategyKind::Soar,
        StrategyKind::BruteForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::AllRed => "allred",
            StrategyKind::AllBlue => "allblue",
            StrategyKind::Top => "top",
            StrategyKind::Max => "max",
            StrategyKind::Level => "level",
            StrategyKind::Soar => "soar",
            StrategyKind::BruteForce => "bruteforce",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect::<String>()
            .to_lowercase();
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| StrategyError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("level placement needs a complete binary tree")]
    NotCompleteBinary,
    #[error("exhaustive search over {0} subsets exceeds the limit")]
    InstanceTooLarge(u128),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
}

/// The `k` available switches closest to the root. Among equal depths the
/// heavier subtree goes first, then breadth-first order.
pub fn place_top<S: Scalar>(tree: &TreeNetwork<S>, k: usize) -> Placement {
    let sub = tree.subtree_loads();
    let mut ranked: Vec<(usize, SwitchId)> = tree
        .breadth_first()
        .into_iter()
        .enumerate()
        .filter(|(_, v)| tree.is_available(*v))
        .collect();
    ranked.sort_by_key(|&(pos, v)| (tree.depth(v), std::cmp::Reverse(sub[v.0]), pos));
    ranked.into_iter().take(k).map(|(_, v)| v).collect()
}

/// The `k` available switches with the largest load, ties by switch index.
pub fn place_max<S: Scalar>(tree: &TreeNetwork<S>, k: usize) -> Placement {
    let mut ranked = tree.available_switches();
    ranked.sort_by_key(|&v| (std::cmp::Reverse(tree.load(v)), v));
    ranked.into_iter().take(k).collect()
}

/// A whole level of a complete binary tree: the deepest level whose
/// available switches number at most `k`.
pub fn place_level<S: Scalar>(tree: &TreeNetwork<S>, k: usize) -> Result<Placement, StrategyError> {
    if !tree.is_complete_binary() {
        return Err(StrategyError::NotCompleteBinary);
    }
    let mut levels: Vec<Vec<SwitchId>> = vec![Vec::new(); tree.height() + 1];
    for v in tree.breadth_first() {
        if tree.is_available(v) {
            levels[tree.depth(v)].push(v);
        }
    }
    Ok(levels
        .into_iter()
        .rev()
        .find(|lvl| !lvl.is_empty() && lvl.len() <= k)
        .map(|lvl| lvl.into_iter().collect())
        .unwrap_or_default())
}

fn binomial(n: u128, r: u128) -> u128 {
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of subsets of at most `k` available switches.
pub fn subset_count<S: Scalar>(tree: &TreeNetwork<S>, k: usize) -> u128 {
    let m = tree.available_switches().len() as u128;
    (0..=(k as u128).min(m)).fold(0u128, |acc, j| acc.saturating_add(binomial(m, j)))
}

fn cost_of<S: Scalar>(tree: &TreeNetwork<S>, blue: &[bool]) -> S {
    let msg = message_counts(tree, blue);
    tree.switches().fold(S::zero(), |acc, v| {
        acc + S::from_count(msg[v.0]) * tree.inv_rate(v)
    })
}

/// Exact optimum by enumerating every subset of at most `k` available
/// switches. The first subset found keeps ties.
pub fn brute_force<S: Scalar>(
    tree: &TreeNetwork<S>,
    k: usize,
) -> Result<(Placement, S), StrategyError> {
    let count = subset_count(tree, k);
    if count > BRUTE_FORCE_LIMIT {
        return Err(StrategyError::InstanceTooLarge(count));
    }
    let avail = tree.available_switches();
    let mut blue = vec![false; tree.len()];
    let mut best_cost = cost_of(tree, &blue);
    let mut best: Vec<SwitchId> = Vec::new();

    for size in 1..=k.min(avail.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            blue.iter_mut().for_each(|b| *b = false);
            for &i in &idx {
                blue[avail[i].0] = true;
            }
            let c = cost_of(tree, &blue);
            if c < best_cost {
                best_cost = c;
                best = idx.iter().map(|&i| avail[i]).collect();
            }
            // next combination in lexicographic order
            let mut pos = size;
            while pos > 0 && idx[pos - 1] == avail.len() - size + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            idx[pos - 1] += 1;
            for q in pos..size {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }
    Ok((best.into_iter().collect(), best_cost))
}

/// Runs `kind` with budget `k` (ignored by the all-red and all-blue extremes).
pub fn place<S: Scalar>(
    kind: StrategyKind,
    tree: &TreeNetwork<S>,
    k: usize,
) -> Result<Placement, StrategyError> {
    Ok(match kind {
        StrategyKind::AllRed => Placement::empty(),
        StrategyKind::AllBlue => tree.available_switches().into_iter().collect(),
        StrategyKind::Top => place_top(tree, k),
        StrategyKind::Max => place_max(tree, k),
        StrategyKind::Level => place_level(tree, k)?,
        StrategyKind::Soar => soar::solve(tree, k).placement,
        StrategyKind::BruteForce => brute_force(tree, k)?.0,
    })
}
