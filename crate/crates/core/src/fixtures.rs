//! Small hand-checked trees.
//!
//! `small_tree`: root `r` with children `A`, `B`, `C`; `C` has child `D`; loads
//! A=2, B=1, C=1, D=2.
//!
//! `binary_seven`: complete binary tree of seven switches. `r` has middle switches
//! `m1` (left) and `m2` (right); `m1` has leaves `l2`, `l6` and `m2` has leaves
//! `l5`, `l4`, where the digit is the leaf load.
//!
//! All rates are one.

use crate::reduce::Placement;
use crate::scalar::Scalar;
use crate::topology::{TreeBuilder, TreeNetwork};

pub fn small_tree<S: Scalar>() -> TreeNetwork<S> {
    let one = S::one();
    TreeBuilder::new("r", one)
        .edge("A", "r", one)
        .edge("B", "r", one)
        .edge("C", "r", one)
        .edge("D", "C", one)
        .load("A", 2)
        .load("B", 1)
        .load("C", 1)
        .load("D", 2)
        .build()
        .expect("small tree is valid")
}

pub fn binary_seven<S: Scalar>() -> TreeNetwork<S> {
    let one = S::one();
    TreeBuilder::new("r", one)
        .edge("m1", "r", one)
        .edge("m2", "r", one)
        .edge("l2", "m1", one)
        .edge("l6", "m1", one)
        .edge("l5", "m2", one)
        .edge("l4", "m2", one)
        .load("l2", 2)
        .load("l6", 6)
        .load("l5", 5)
        .load("l4", 4)
        .build()
        .expect("seven-switch tree is valid")
}

/// Placement from switch labels; panics on unknown labels.
pub fn labels<S: Scalar>(tree: &TreeNetwork<S>, names: &[&str]) -> Placement {
    names
        .iter()
        .map(|n| {
            tree.id_of(n)
                .unwrap_or_else(|| panic!("unknown switch `{n}`"))
        })
        .collect()
}
