//! Byte-level Reduce simulation.
//!
//! Payloads are sparse key/count maps. Merging two payloads unions their keys
//! and adds counts, so an aggregated message is never smaller than its largest
//! input and never larger than the sum of its inputs.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::reduce::{Placement, ReduceError};
use crate::scalar::Scalar;
use crate::topology::TreeNetwork;

pub const DEFAULT_ENTRY_BYTES: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Unit,
    WordCount,
    Gradient,
}

/// Sorted, duplicate-free `(key, count)` entries.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Payload {
    entries: Vec<(u32, u64)>,
}

impl Payload {
    pub fn from_counts(mut entries: Vec<(u32, u64)>) -> Self {
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(u32, u64)> = Vec::with_capacity(entries.len());
        for (k, c) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += c,
                _ => merged.push((k, c)),
            }
        }
        Payload { entries: merged }
    }

    /// Each occurrence of a key counts once.
    pub fn from_keys<I: IntoIterator<Item = u32>>(keys: I) -> Self {
        Payload::from_counts(keys.into_iter().map(|k| (k, 1)).collect())
    }

    pub fn key_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u32, u64)] {
        &self.entries
    }

    pub fn keys(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn merge_all<'a, I: IntoIterator<Item = &'a Payload>>(parts: I) -> Payload {
        let all: Vec<(u32, u64)> = parts
            .into_iter()
            .flat_map(|p| p.entries.iter().copied())
            .collect();
        Payload::from_counts(all)
    }
}

/// Payload contents for every server, grouped by the switch it is attached to.
#[derive(Clone, Debug)]
pub struct PayloadModel {
    pub kind: PayloadKind,
    pub entry_bytes: u64,
    /// Recorded only; aggregated messages may exceed it.
    pub max_message_bytes: Option<u64>,
    servers: Vec<Vec<Payload>>,
}

impl PayloadModel {
    pub fn new(kind: PayloadKind, entry_bytes: u64, servers: Vec<Vec<Payload>>) -> Self {
        PayloadModel {
            kind,
            entry_bytes,
            max_message_bytes: None,
            servers,
        }
    }

    /// One fixed-size value per server.
    pub fn unit<S: Scalar>(tree: &TreeNetwork<S>, entry_bytes: u64) -> Self {
        let servers = tree
            .switches()
            .map(|v| (0..tree.load(v)).map(|_| Payload::from_keys([0])).collect())
            .collect();
        PayloadModel::new(PayloadKind::Unit, entry_bytes, servers)
    }

    pub fn servers(&self) -> &[Vec<Payload>] {
        &self.servers
    }

    pub fn message_bytes(&self, p: &Payload) -> u64 {
        match self.kind {
            PayloadKind::Unit => self.entry_bytes,
            PayloadKind::WordCount | PayloadKind::Gradient => {
                self.entry_bytes * p.key_count() as u64
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ByteUtilization {
    /// Indexed by the child switch of each edge.
    pub per_edge: Vec<u64>,
    pub total: u64,
}

pub fn simulate_bytes<S: Scalar>(
    tree: &TreeNetwork<S>,
    placement: &Placement,
    model: &PayloadModel,
) -> Result<ByteUtilization, ReduceError> {
    placement.validate(tree)?;
    for v in tree.switches() {
        let got = model.servers.get(v.0).map_or(0, Vec::len);
        if got as u64 != tree.load(v) {
            return Err(ReduceError::PayloadCountMismatch {
                switch: tree.label(v).to_string(),
                expected: tree.load(v),
                got,
            });
        }
    }
    let blue = placement.mask(tree.len());
    let mut outgoing: Vec<Vec<Rc<Payload>>> = vec![Vec::new(); tree.len()];
    let mut per_edge = vec![0u64; tree.len()];
    for v in tree.post_order() {
        let mut msgs: Vec<Rc<Payload>> = Vec::new();
        for c in tree.children(v) {
            msgs.append(&mut outgoing[c.0]);
        }
        msgs.extend(model.servers[v.0].iter().cloned().map(Rc::new));
        if blue[v.0] {
            let merged = Payload::merge_all(msgs.iter().map(|p| p.as_ref()));
            msgs = vec![Rc::new(merged)];
        }
        per_edge[v.0] = msgs.iter().map(|p| model.message_bytes(p)).sum();
        outgoing[v.0] = msgs;
    }
    let total = per_edge.iter().sum();
    Ok(ByteUtilization { per_edge, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::reduce::simulate_reduce;
    use crate::topology::TreeBuilder;

    #[test]
    fn merge_unions_keys_and_adds_counts() {
        let a = Payload::from_counts(vec![(3, 1), (1, 2)]);
        let b = Payload::from_counts(vec![(1, 5), (7, 1)]);
        let m = Payload::merge_all([&a, &b]);
        assert_eq!(m.entries(), &[(1, 7), (3, 1), (7, 1)]);
        assert_eq!(Payload::from_keys([4, 4, 2]).entries(), &[(2, 1), (4, 2)]);
    }

    #[test]
    fn unit_model_matches_message_count() {
        let t = fixtures::binary_seven::<f64>();
        let model = PayloadModel::unit(&t, 8);
        for u in [
            Placement::empty(),
            fixtures::labels(&t, &["l6", "m2"]),
            t.switches().collect(),
        ] {
            let bytes = simulate_bytes(&t, &u, &model).unwrap();
            let msgs = simulate_reduce(&t, &u).unwrap();
            assert_eq!(bytes.total as f64, 8.0 * msgs.total);
        }
    }

    #[test]
    fn disjoint_vocabularies_under_one_blue_switch() {
        let t = TreeBuilder::new("r", 1.0)
            .edge("s", "r", 1.0)
            .load("s", 2)
            .build()
            .unwrap();
        let mut servers = vec![Vec::new(); 2];
        servers[t.id_of("s").unwrap().0] =
            vec![Payload::from_keys([1, 2, 3]), Payload::from_keys([4, 5, 6])];
        let model = PayloadModel::new(PayloadKind::WordCount, 8, servers);
        let blue = fixtures::labels(&t, &["s"]);
        let b = simulate_bytes(&t, &blue, &model).unwrap();
        assert_eq!(b.per_edge[t.id_of("s").unwrap().0], 6 * 8);
    }

    #[test]
    fn payload_count_checked() {
        let t = fixtures::small_tree::<f64>();
        let model = PayloadModel::new(PayloadKind::Gradient, 8, vec![Vec::new(); t.len()]);
        let err = simulate_bytes(&t, &Placement::empty(), &model).unwrap_err();
        assert!(matches!(err, ReduceError::PayloadCountMismatch { .. }));
    }
}
