//! Rooted, weighted switch trees.
//!
//! A [`TreeNetwork`] holds the switches of a tree whose root forwards to an
//! implicit destination `d`. Every switch owns exactly one uplink, the edge to
//! its parent (or to `d` for the root), so edges are indexed by their child
//! switch. Servers are not nodes: each switch only carries the number of
//! servers attached to it.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Label used for the destination in exports.
pub const DESTINATION_LABEL: &str = "d";

/// Dense index of a switch inside one [`TreeNetwork`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SwitchId(pub usize);

impl SwitchId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for SwitchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("parent links of switch `{0}` form a cycle")]
    CycleDetected(String),
    #[error("switch `{0}` is not connected to the root")]
    DisconnectedNode(String),
    #[error("switch `{0}` is declared more than once")]
    DuplicateParent(String),
    #[error("uplink of switch `{0}` has non-positive rate")]
    NonPositiveRate(String),
    #[error("no usable root: {0}")]
    UnknownRoot(String),
    #[error("distance {distance} out of range for switch `{switch}` (max {max})")]
    OutOfRangeDistance {
        switch: String,
        distance: usize,
        max: usize,
    },
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("topology file: {0}")]
    Format(String),
}

/// One switch as declared by the user, before validation.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec<S> {
    pub id: String,
    pub parent: Option<String>,
    pub rate: S,
    pub load: u64,
    pub available: bool,
}

/// Incremental construction from an edge list. Children keep the order in
/// which their edges were added.
#[derive(Clone, Debug)]
pub struct TreeBuilder<S> {
    nodes: Vec<NodeSpec<S>>,
    loads: Vec<(String, u64)>,
    unavailable: Vec<String>,
}

impl<S: Scalar> TreeBuilder<S> {
    /// Starts a tree whose root uplink to the destination has `root_rate`.
    pub fn new(root: impl Into<String>, root_rate: S) -> Self {
        TreeBuilder {
            nodes: vec![NodeSpec {
                id: root.into(),
                parent: None,
                rate: root_rate,
                load: 0,
                available: true,
            }],
            loads: Vec::new(),
            unavailable: Vec::new(),
        }
    }

    pub fn edge(mut self, child: impl Into<String>, parent: impl Into<String>, rate: S) -> Self {
        self.nodes.push(NodeSpec {
            id: child.into(),
            parent: Some(parent.into()),
            rate,
            load: 0,
            available: true,
        });
        self
    }

    pub fn load(mut self, switch: impl Into<String>, load: u64) -> Self {
        self.loads.push((switch.into(), load));
        self
    }

    pub fn unavailable(mut self, switch: impl Into<String>) -> Self {
        self.unavailable.push(switch.into());
        self
    }

    pub fn build(mut self) -> Result<TreeNetwork<S>, TopologyError> {
        for (id, load) in &self.loads {
            let node = self
                .nodes
                .iter_mut()
                .find(|n| &n.id == id)
                .ok_or_else(|| TopologyError::DisconnectedNode(id.clone()))?;
            node.load = *load;
        }
        for id in &self.unavailable {
            let node = self
                .nodes
                .iter_mut()
                .find(|n| &n.id == id)
                .ok_or_else(|| TopologyError::DisconnectedNode(id.clone()))?;
            node.available = false;
        }
        TreeNetwork::from_specs(self.nodes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNetwork<S> {
    labels: Vec<String>,
    index: HashMap<String, SwitchId>,
    root: SwitchId,
    parent: Vec<Option<SwitchId>>,
    children: Vec<Vec<SwitchId>>,
    rate: Vec<S>,
    inv_rate: Vec<S>,
    load: Vec<u64>,
    available: Vec<bool>,
    depth: Vec<usize>,
    // path_prefix[prefix_offset[v] + l] = sum of inv rates over the first l
    // edges above v, for l in 0..=depth(v)+1.
    prefix_offset: Vec<usize>,
    path_prefix: Vec<S>,
}

/// Shape summary of a tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeMetrics {
    pub height: usize,
    pub leaf_ids: Vec<SwitchId>,
    pub level_sizes: Vec<usize>,
}

impl<S: Scalar> TreeNetwork<S> {
    /// Validates declared switches and derives depths, inverse rates and
    /// root-path prefix sums. Switch indices follow declaration order.
    pub fn from_specs(specs: Vec<NodeSpec<S>>) -> Result<Self, TopologyError> {
        if specs.is_empty() {
            return Err(TopologyError::UnknownRoot("empty switch list".into()));
        }
        let mut index = HashMap::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if index.insert(spec.id.clone(), SwitchId(i)).is_some() {
                return Err(TopologyError::DuplicateParent(spec.id.clone()));
            }
        }
        for spec in &specs {
            if spec.rate.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater) {
                return Err(TopologyError::NonPositiveRate(spec.id.clone()));
            }
        }

        let n = specs.len();
        let mut parent = vec![None; n];
        for (i, spec) in specs.iter().enumerate() {
            if let Some(p) = &spec.parent {
                let pid = *index
                    .get(p)
                    .ok_or_else(|| TopologyError::DisconnectedNode(spec.id.clone()))?;
                parent[i] = Some(pid);
            }
        }

        // Walk every parent chain; a chain that revisits a switch of the
        // current walk is a cycle.
        const UNSEEN: usize = usize::MAX;
        let mut walk_mark = vec![UNSEEN; n];
        for start in 0..n {
            let mut v = start;
            loop {
                if walk_mark[v] == start {
                    return Err(TopologyError::CycleDetected(specs[v].id.clone()));
                }
                if walk_mark[v] != UNSEEN {
                    break;
                }
                walk_mark[v] = start;
                match parent[v] {
                    Some(p) => v = p.0,
                    None => break,
                }
            }
        }

        let roots: Vec<usize> = (0..n).filter(|&i| parent[i].is_none()).collect();
        let root = match roots.as_slice() {
            [] => {
                return Err(TopologyError::UnknownRoot(
                    "every switch has a parent".into(),
                ))
            }
            [r] => SwitchId(*r),
            [_, extra, ..] => {
                return Err(TopologyError::DisconnectedNode(specs[*extra].id.clone()))
            }
        };

        let mut children = vec![Vec::new(); n];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[p.0].push(SwitchId(i));
            }
        }

        let rate: Vec<S> = specs.iter().map(|s| s.rate).collect();
        let inv_rate: Vec<S> = rate.iter().map(|&w| S::one() / w).collect();

        let mut tree = TreeNetwork {
            labels: specs.iter().map(|s| s.id.clone()).collect(),
            index,
            root,
            parent,
            children,
            rate,
            inv_rate,
            load: specs.iter().map(|s| s.load).collect(),
            available: specs.iter().map(|s| s.available).collect(),
            depth: vec![0; n],
            prefix_offset: vec![0; n],
            path_prefix: Vec::new(),
        };
        tree.derive_paths();
        Ok(tree)
    }

    fn derive_paths(&mut self) {
        let n = self.len();
        let order = self.pre_order();
        for &v in &order {
            self.depth[v.0] = match self.parent[v.0] {
                Some(p) => self.depth[p.0] + 1,
                None => 0,
            };
        }
        let mut offset = 0;
        for v in 0..n {
            self.prefix_offset[v] = offset;
            offset += self.depth[v] + 2;
        }
        let mut prefix = vec![S::zero(); offset];
        for v in 0..n {
            let base = self.prefix_offset[v];
            let mut acc = S::zero();
            let mut u = Some(SwitchId(v));
            for l in 1..=self.depth[v] + 1 {
                let w = u.expect("path to destination shorter than depth");
                acc = acc + self.inv_rate[w.0];
                prefix[base + l] = acc;
                u = self.parent[w.0];
            }
        }
        self.path_prefix = prefix;
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn root(&self) -> SwitchId {
        self.root
    }

    pub fn switches(&self) -> impl Iterator<Item = SwitchId> + '_ {
        (0..self.len()).map(SwitchId)
    }

    pub fn label(&self, v: SwitchId) -> &str {
        &self.labels[v.0]
    }

    pub fn id_of(&self, label: &str) -> Option<SwitchId> {
        self.index.get(label).copied()
    }

    /// `None` for the root, whose parent is the destination.
    pub fn parent(&self, v: SwitchId) -> Option<SwitchId> {
        self.parent[v.0]
    }

    pub fn children(&self, v: SwitchId) -> &[SwitchId] {
        &self.children[v.0]
    }

    pub fn is_leaf(&self, v: SwitchId) -> bool {
        self.children[v.0].is_empty()
    }

    /// Rate of the uplink of `v`.
    pub fn rate(&self, v: SwitchId) -> S {
        self.rate[v.0]
    }

    /// Transmission time of one message over the uplink of `v`.
    pub fn inv_rate(&self, v: SwitchId) -> S {
        self.inv_rate[v.0]
    }

    pub fn load(&self, v: SwitchId) -> u64 {
        self.load[v.0]
    }

    pub fn loads(&self) -> &[u64] {
        &self.load
    }

    pub fn total_load(&self) -> u64 {
        self.load.iter().sum()
    }

    pub fn is_available(&self, v: SwitchId) -> bool {
        self.available[v.0]
    }

    pub fn available_switches(&self) -> Vec<SwitchId> {
        self.switches().filter(|&v| self.available[v.0]).collect()
    }

    pub fn depth(&self, v: SwitchId) -> usize {
        self.depth[v.0]
    }

    pub fn height(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Transmission time from `v` to its ancestor `distance` hops up;
    /// `distance == depth(v) + 1` reaches the destination.
    pub fn rho_to_ancestor(&self, v: SwitchId, distance: usize) -> Result<S, TopologyError> {
        let max = self.depth[v.0] + 1;
        if distance > max {
            return Err(TopologyError::OutOfRangeDistance {
                switch: self.labels[v.0].clone(),
                distance,
                max,
            });
        }
        Ok(self.path_prefix[self.prefix_offset[v.0] + distance])
    }

    /// Unchecked variant for hot loops; panics when out of range.
    #[inline]
    pub(crate) fn rho_up(&self, v: SwitchId, distance: usize) -> S {
        debug_assert!(distance <= self.depth[v.0] + 1);
        self.path_prefix[self.prefix_offset[v.0] + distance]
    }

    /// Ancestor `distance` hops above `v`; `None` means the destination.
    pub fn ancestor(&self, v: SwitchId, distance: usize) -> Option<SwitchId> {
        let mut u = Some(v);
        for _ in 0..distance {
            u = u.and_then(|w| self.parent[w.0]);
        }
        u
    }

    /// Root first, children in stored order.
    pub fn pre_order(&self) -> Vec<SwitchId> {
        let mut order = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.children[v.0].iter().rev().copied());
        }
        order
    }

    /// Every child precedes its parent; the root comes last.
    pub fn post_order(&self) -> Vec<SwitchId> {
        let mut order = Vec::with_capacity(self.len());
        let mut stack = vec![(self.root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                order.push(v);
            } else {
                stack.push((v, true));
                stack.extend(self.children[v.0].iter().rev().map(|&c| (c, false)));
            }
        }
        order
    }

    pub fn traversal_orders(&self) -> (Vec<SwitchId>, Vec<SwitchId>) {
        (self.post_order(), self.pre_order())
    }

    /// Level by level from the root, left to right.
    pub fn breadth_first(&self) -> Vec<SwitchId> {
        let mut order = Vec::with_capacity(self.len());
        order.push(self.root);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            order.extend_from_slice(&self.children[v.0]);
            head += 1;
        }
        order
    }

    /// Total load in the subtree of every switch.
    pub fn subtree_loads(&self) -> Vec<u64> {
        let mut acc = self.load.clone();
        for v in self.post_order() {
            if let Some(p) = self.parent[v.0] {
                acc[p.0] += acc[v.0];
            }
        }
        acc
    }

    pub fn metrics(&self) -> TreeMetrics {
        let height = self.height();
        let mut level_sizes = vec![0; height + 1];
        for &d in &self.depth {
            level_sizes[d] += 1;
        }
        TreeMetrics {
            height,
            leaf_ids: self.switches().filter(|&v| self.is_leaf(v)).collect(),
            level_sizes,
        }
    }

    /// Every internal switch has two children and all leaves share a depth.
    pub fn is_complete_binary(&self) -> bool {
        let h = self.height();
        self.switches().all(|v| match self.children[v.0].len() {
            0 => self.depth[v.0] == h,
            2 => true,
            _ => false,
        })
    }

    /// Same shape and rates with a new load vector.
    pub fn with_loads(&self, loads: Vec<u64>) -> Result<Self, TopologyError> {
        if loads.len() != self.len() {
            return Err(TopologyError::LengthMismatch {
                expected: self.len(),
                got: loads.len(),
            });
        }
        let mut t = self.clone();
        t.load = loads;
        Ok(t)
    }

    /// Same shape and loads with a new availability vector.
    pub fn with_availability(&self, available: Vec<bool>) -> Result<Self, TopologyError> {
        if available.len() != self.len() {
            return Err(TopologyError::LengthMismatch {
                expected: self.len(),
                got: available.len(),
            });
        }
        let mut t = self.clone();
        t.available = available;
        Ok(t)
    }

    pub fn specs(&self) -> Vec<NodeSpec<S>> {
        self.switches()
            .map(|v| NodeSpec {
                id: self.labels[v.0].clone(),
                parent: self.parent[v.0].map(|p| self.labels[p.0].clone()),
                rate: self.rate[v.0],
                load: self.load[v.0],
                available: self.available[v.0],
            })
            .collect()
    }

    /// Converts rates into another scalar type.
    pub fn convert<T: Scalar>(&self) -> Option<TreeNetwork<T>> {
        let specs = self
            .specs()
            .into_iter()
            .map(|s| {
                Some(NodeSpec {
                    id: s.id,
                    parent: s.parent,
                    rate: T::from_f64(s.rate.as_f64())?,
                    load: s.load,
                    available: s.available,
                })
            })
            .collect::<Option<Vec<_>>>()?;
        TreeNetwork::from_specs(specs).ok()
    }
}

// ---------------------------------------------------------------------------
// JSON topology files

/// Switch identifiers may be written as strings or integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JsonId {
    Text(String),
    Number(u64),
}

impl JsonId {
    fn into_label(self) -> String {
        match self {
            JsonId::Text(s) => s,
            JsonId::Number(n) => n.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonNode {
    pub id: JsonId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<JsonId>,
    pub rate: f64,
    #[serde(default)]
    pub load: u64,
    #[serde(default = "default_available")]
    pub available: bool,
}

fn default_available() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub root: JsonId,
    pub nodes: Vec<JsonNode>,
}

impl TopologyFile {
    pub fn into_tree<S: Scalar>(self) -> Result<TreeNetwork<S>, TopologyError> {
        let root = self.root.into_label();
        let mut specs = Vec::with_capacity(self.nodes.len());
        for node in self.nodes {
            let id = node.id.into_label();
            let rate =
                S::from_f64(node.rate).ok_or_else(|| TopologyError::NonPositiveRate(id.clone()))?;
            specs.push(NodeSpec {
                id,
                parent: node.parent.map(JsonId::into_label),
                rate,
                load: node.load,
                available: node.available,
            });
        }
        match specs.iter().find(|s| s.parent.is_none()) {
            Some(s) if s.id != root => {
                return Err(TopologyError::UnknownRoot(format!(
                    "declared root `{root}` but `{}` has no parent",
                    s.id
                )))
            }
            _ => {}
        }
        if !specs.iter().any(|s| s.id == root) {
            return Err(TopologyError::UnknownRoot(format!(
                "root `{root}` is not a listed switch"
            )));
        }
        TreeNetwork::from_specs(specs)
    }

    pub fn from_tree<S: Scalar>(tree: &TreeNetwork<S>) -> Self {
        TopologyFile {
            root: JsonId::Text(tree.label(tree.root()).to_string()),
            nodes: tree
                .specs()
                .into_iter()
                .map(|s| JsonNode {
                    id: JsonId::Text(s.id),
                    parent: s.parent.map(JsonId::Text),
                    rate: s.rate.as_f64(),
                    load: s.load,
                    available: s.available,
                })
                .collect(),
        }
    }
}

impl<S: Scalar> TreeNetwork<S> {
    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile =
            serde_json::from_str(text).map_err(|e| TopologyError::Format(e.to_string()))?;
        file.into_tree()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TopologyFile::from_tree(self)).expect("topology serializes")
    }
}
