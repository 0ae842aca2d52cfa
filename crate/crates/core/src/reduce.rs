//! Message-level simulation of one Reduce operation.
//!
//! A red switch forwards every message it receives and adds one message per
//! attached server. A blue switch emits exactly one message, even when its
//! subtree carries no load.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::topology::{SwitchId, TreeNetwork, DESTINATION_LABEL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReduceError {
    #[error("switch {0} is not part of the tree")]
    UnknownSwitch(SwitchId),
    #[error("switch `{0}` is not available for aggregation")]
    BlueNotAvailable(String),
    #[error("switch `{switch}` has {expected} servers but {got} payloads")]
    PayloadCountMismatch {
        switch: String,
        expected: u64,
        got: usize,
    },
}

/// The set of blue (aggregating) switches.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Placement {
    blue: BTreeSet<SwitchId>,
}

impl Placement {
    pub fn empty() -> Self {
        Placement::default()
    }

    pub fn contains(&self, v: SwitchId) -> bool {
        self.blue.contains(&v)
    }

    pub fn insert(&mut self, v: SwitchId) -> bool {
        self.blue.insert(v)
    }

    pub fn len(&self) -> usize {
        self.blue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blue.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = SwitchId> + '_ {
        self.blue.iter().copied()
    }

    pub fn is_subset(&self, other: &Placement) -> bool {
        self.blue.is_subset(&other.blue)
    }

    pub fn labels<S: Scalar>(&self, tree: &TreeNetwork<S>) -> Vec<String> {
        self.iter().map(|v| tree.label(v).to_string()).collect()
    }

    /// Dense membership mask.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for v in self.iter() {
            if v.0 < n {
                m[v.0] = true;
            }
        }
        m
    }

    /// Rejects switches outside the tree or outside its available set.
    pub fn validate<S: Scalar>(&self, tree: &TreeNetwork<S>) -> Result<(), ReduceError> {
        for v in self.iter() {
            if v.0 >= tree.len() {
                return Err(ReduceError::UnknownSwitch(v));
            }
            if !tree.is_available(v) {
                return Err(ReduceError::BlueNotAvailable(tree.label(v).to_string()));
            }
        }
        Ok(())
    }
}

impl FromIterator<SwitchId> for Placement {
    fn from_iter<I: IntoIterator<Item = SwitchId>>(iter: I) -> Self {
        Placement {
            blue: iter.into_iter().collect(),
        }
    }
}

/// Per-uplink message counts and transmission times. Vectors are indexed by
/// the child switch of each edge; the root's entry is the edge to `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeUtilization<S> {
    pub msg: Vec<u64>,
    pub cost: Vec<S>,
    pub total: S,
}

/// Outgoing message count of every switch under `blue`.
pub(crate) fn message_counts<S: Scalar>(tree: &TreeNetwork<S>, blue: &[bool]) -> Vec<u64> {
    let mut msg = vec![0u64; tree.len()];
    for v in tree.post_order() {
        msg[v.0] = if blue[v.0] {
            1
        } else {
            tree.load(v) + tree.children(v).iter().map(|c| msg[c.0]).sum::<u64>()
        };
    }
    msg
}

pub fn simulate_reduce<S: Scalar>(
    tree: &TreeNetwork<S>,
    placement: &Placement,
) -> Result<EdgeUtilization<S>, ReduceError> {
    placement.validate(tree)?;
    let msg = message_counts(tree, &placement.mask(tree.len()));
    let cost: Vec<S> = tree
        .switches()
        .map(|v| S::from_count(msg[v.0]) * tree.inv_rate(v))
        .collect();
    let total = cost.iter().fold(S::zero(), |acc, &c| acc + c);
    Ok(EdgeUtilization { msg, cost, total })
}

/// Utilization computed through closest blue ancestors: each blue switch pays
/// one message to its barrier, each red switch pays its own load.
pub fn utilization_barrier<S: Scalar>(
    tree: &TreeNetwork<S>,
    placement: &Placement,
) -> Result<S, ReduceError> {
    placement.validate(tree)?;
    let blue = placement.mask(tree.len());
    // hops from each switch up to its closest blue ancestor (or d)
    let mut barrier_hops = vec![0usize; tree.len()];
    let mut total = S::zero();
    for v in tree.pre_order() {
        barrier_hops[v.0] = match tree.parent(v) {
            None => 1,
            Some(p) if blue[p.0] => 1,
            Some(p) => barrier_hops[p.0] + 1,
        };
        let dist = tree.rho_up(v, barrier_hops[v.0]);
        total = total
            + if blue[v.0] {
                dist
            } else {
                S::from_count(tree.load(v)) * dist
            };
    }
    Ok(total)
}

/// Cost of the subtree of `v` plus the outgoing messages of `v` charged over
/// `distance` hops upward, evaluated by direct simulation of that subtree.
pub fn subtree_potential<S: Scalar>(
    tree: &TreeNetwork<S>,
    placement: &Placement,
    v: SwitchId,
    distance: usize,
) -> Result<S, ReduceError> {
    let util = simulate_reduce(tree, placement)?;
    let mut total = S::from_count(util.msg[v.0]) * tree.rho_up(v, distance);
    let mut stack: Vec<SwitchId> = tree.children(v).to_vec();
    while let Some(u) = stack.pop() {
        total = total + util.cost[u.0];
        stack.extend_from_slice(tree.children(u));
    }
    Ok(total)
}

#[derive(Debug, Serialize)]
struct EdgeRow<'a> {
    child_id: &'a str,
    parent_id: &'a str,
    msg: u64,
    cost: f64,
    bytes: Option<u64>,
}

/// Writes one CSV row per edge: `child_id,parent_id,msg,cost,bytes`.
pub fn write_edge_csv<S: Scalar, W: Write>(
    tree: &TreeNetwork<S>,
    util: &EdgeUtilization<S>,
    bytes: Option<&[u64]>,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for v in tree.pre_order() {
        w.serialize(EdgeRow {
            child_id: tree.label(v),
            parent_id: tree.parent(v).map_or(DESTINATION_LABEL, |p| tree.label(p)),
            msg: util.msg[v.0],
            cost: util.cost[v.0].as_f64(),
            bytes: bytes.map(|b| b[v.0]),
        })?;
    }
    w.flush()?;
    Ok(())
}
