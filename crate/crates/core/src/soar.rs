//! Optimal placement of at most `k` blue switches.
//!
//! The solver runs in two passes over the tree.
//!
//! *Gather* (post-order) fills, for every switch `v`, a table `X_v(l, i)`: the
//! least cost of the subtree of `v` with at most `i` blue switches inside it,
//! plus the outgoing messages of `v` charged over the `l` hops separating `v`
//! from its closest blue ancestor (or the destination). Internal switches fold
//! their children one at a time into `Y_v^m(l, i, color)`, conditioning on the
//! color of `v`:
//!
//! ```text
//! Y^1(l,i,B) = X_c1(1, i-1) + rho(v, l)            (v available, i >= 1)
//! Y^1(l,i,R) = X_c1(l+1, i) + rho(v, l) * L(v)
//! Y^m(l,i,B) = min_{0 <= j <  i} Y^{m-1}(l, i-j, B) + X_cm(1, j)
//! Y^m(l,i,R) = min_{0 <= j <= i} Y^{m-1}(l, i-j, R) + X_cm(l+1, j)
//! X(l,i)     = min(Y^C(l,i,R), Y^C(l,i,B))
//! ```
//!
//! A leaf costs `rho(v, l) * L(v)` when red and `rho(v, l)` when blue; with
//! `i >= 1` it takes the cheaper of the two, so every table is non-increasing
//! in `i`.
//!
//! *Color* (pre-order) starts at the root with `(k, 1)` and replays the
//! arg-mins: a switch turns blue iff its blue entry is strictly cheaper, then
//! hands budget to its children from the last one backwards.
//!
//! Only distances `l >= 1` are ever queried, so each table stores
//! `depth(v) + 1` rows, for `l = 1 ..= depth(v) + 1`. The root is read at
//! `l = 1`, the hop to the destination.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::reduce::Placement;
use crate::scalar::{Cost, Scalar};
use crate::topology::{SwitchId, TreeNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Color {
    Red,
    Blue,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("tables do not match the request: {0}")]
    TableMismatch(String),
}

/// Per-switch tables. `x` and every `y` grid are row-major over
/// `l = 1 ..= depth + 1` and `i = 0 ..= k`.
#[derive(Clone, Debug)]
pub struct NodeTables<S> {
    rows: usize,
    x: Vec<Cost<S>>,
    /// `y_red[m - 1]` and `y_blue[m - 1]` hold `Y^m`. Empty for leaves. Without
    /// retained partials they are dropped once the parent has been gathered.
    y_red: Vec<Vec<Cost<S>>>,
    y_blue: Vec<Vec<Cost<S>>>,
}

#[derive(Clone, Debug)]
pub struct GatherTables<S> {
    budget: usize,
    retained_partials: bool,
    nodes: Vec<NodeTables<S>>,
}

#[derive(Clone, Copy, Debug)]
pub struct GatherOptions {
    /// Keep `Y^m` for every child index. Needed by [`color`]; without it only
    /// the budget curve at the root and the `X` tables are usable.
    pub retain_partials: bool,
}

impl Default for GatherOptions {
    fn default() -> Self {
        GatherOptions {
            retain_partials: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub node_visits: usize,
    pub x_cells: usize,
    pub y_cells: usize,
    pub gather_time: Duration,
    pub color_time: Duration,
}

#[derive(Clone, Debug)]
pub struct SolveResult<S> {
    pub placement: Placement,
    pub cost: S,
    pub tables: Option<GatherTables<S>>,
    pub stats: SolveStats,
}

fn split_min<S: Scalar>(
    i: usize,
    prev_row: &[Cost<S>],
    child_row: &[Cost<S>],
    color: Color,
) -> (Cost<S>, usize) {
    let end = match color {
        Color::Blue => i,
        Color::Red => i + 1,
    };
    let mut best = Cost::Infinite;
    let mut arg = 0;
    for j in 0..end {
        let c = prev_row[i - j] + child_row[j];
        if c.lt(best) {
            best = c;
            arg = j;
        }
    }
    (best, arg)
}

/// Cheapest way to give `j` of `i` budget units to the next child.
///
/// `prev_row` is `Y^{m-1}(l, ., color)`; `child_row` is `X_cm(1, .)` for a blue
/// parent and `X_cm(l+1, .)` for a red one. Blue keeps at least one unit for
/// the switch itself (`j < i`), so `i = 0` yields infinity.
pub fn mincost<S: Scalar>(
    i: usize,
    prev_row: &[Cost<S>],
    child_row: &[Cost<S>],
    color: Color,
) -> Cost<S> {
    split_min(i, prev_row, child_row, color).0
}

/// Arg-min companion of [`mincost`]; the smallest `j` wins ties.
pub fn minsplit<S: Scalar>(
    i: usize,
    prev_row: &[Cost<S>],
    child_row: &[Cost<S>],
    color: Color,
) -> usize {
    split_min(i, prev_row, child_row, color).1
}

impl<S: Scalar> NodeTables<S> {
    fn row<'a>(&self, grid: &'a [Cost<S>], budget: usize, l: usize) -> &'a [Cost<S>] {
        let w = budget + 1;
        &grid[(l - 1) * w..l * w]
    }
}

impl<S: Scalar> GatherTables<S> {
    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn retained_partials(&self) -> bool {
        self.retained_partials
    }

    fn cell(&self, l: usize, i: usize) -> usize {
        (l - 1) * (self.budget + 1) + i
    }

    fn in_range(&self, v: SwitchId, l: usize, i: usize) -> bool {
        v.0 < self.nodes.len() && l >= 1 && l <= self.nodes[v.0].rows && i <= self.budget
    }

    /// `X_v(l, i)`, or `None` outside the stored ranges.
    pub fn x(&self, v: SwitchId, l: usize, i: usize) -> Option<Cost<S>> {
        self.in_range(v, l, i)
            .then(|| self.nodes[v.0].x[self.cell(l, i)])
    }

    /// `Y_v^m(l, i, color)` for `m = 1 ..= C(v)`; only available when partial
    /// folds were retained.
    pub fn y(&self, v: SwitchId, m: usize, l: usize, i: usize, color: Color) -> Option<Cost<S>> {
        if !self.retained_partials || m == 0 || !self.in_range(v, l, i) {
            return None;
        }
        let node = &self.nodes[v.0];
        let grid = match color {
            Color::Red => node.y_red.get(m - 1)?,
            Color::Blue => node.y_blue.get(m - 1)?,
        };
        Some(grid[self.cell(l, i)])
    }

    /// Least cost of the whole tree for each budget `0 ..= k`.
    pub fn root_costs(&self, root: SwitchId) -> Vec<Cost<S>> {
        let node = &self.nodes[root.0];
        node.row(&node.x, self.budget, 1).to_vec()
    }

    pub fn x_cells(&self) -> usize {
        self.nodes.iter().map(|n| n.x.len()).sum()
    }

    pub fn y_cells(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.y_red.iter().chain(&n.y_blue).map(Vec::len).sum::<usize>())
            .sum()
    }

    /// Color taken by `v` when reached with distance `l` and budget `i`.
    pub fn color_choice(
        &self,
        tree: &TreeNetwork<S>,
        v: SwitchId,
        l: usize,
        i: usize,
    ) -> Option<Color> {
        if !self.in_range(v, l, i) || v.0 >= tree.len() {
            return None;
        }
        self.choose(tree, v, l, i)
    }

    fn choose(&self, tree: &TreeNetwork<S>, v: SwitchId, l: usize, i: usize) -> Option<Color> {
        if tree.is_leaf(v) {
            let rho = tree.rho_up(v, l);
            let red = rho * S::from_count(tree.load(v));
            let blue = i > 0 && tree.is_available(v) && rho < red;
            return Some(if blue { Color::Blue } else { Color::Red });
        }
        let node = &self.nodes[v.0];
        let cell = self.cell(l, i);
        let (red, blue) = (node.y_red.last()?, node.y_blue.last()?);
        Some(if blue[cell].lt(red[cell]) {
            Color::Blue
        } else {
            Color::Red
        })
    }

    /// CSV dump: one row per `(switch, l, i)` with the final fold.
    pub fn write_csv<W: Write>(&self, tree: &TreeNetwork<S>, out: W) -> csv::Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            switch: &'a str,
            l: usize,
            i: usize,
            x: String,
            y_red: String,
            y_blue: String,
            color: Option<Color>,
        }
        let mut w = csv::Writer::from_writer(out);
        for v in tree.pre_order() {
            let node = &self.nodes[v.0];
            for l in 1..=node.rows {
                for i in 0..=self.budget {
                    let cell = self.cell(l, i);
                    let (y_red, y_blue) = match (node.y_red.last(), node.y_blue.last()) {
                        (Some(r), Some(b)) => (r[cell].to_string(), b[cell].to_string()),
                        _ => (String::new(), String::new()),
                    };
                    w.serialize(Row {
                        switch: tree.label(v),
                        l,
                        i,
                        x: node.x[cell].to_string(),
                        y_red,
                        y_blue,
                        color: self.choose(tree, v, l, i),
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn gather<S: Scalar>(tree: &TreeNetwork<S>, k: usize) -> GatherTables<S> {
    gather_with(tree, k, GatherOptions::default())
}

pub fn gather_with<S: Scalar>(
    tree: &TreeNetwork<S>,
    k: usize,
    opts: GatherOptions,
) -> GatherTables<S> {
    let w = k + 1;
    let mut nodes: Vec<Option<NodeTables<S>>> = vec![None; tree.len()];

    for v in tree.post_order() {
        let rows = tree.depth(v) + 1;
        let load = S::from_count(tree.load(v));
        let available = tree.is_available(v);
        let children = tree.children(v);

        if children.is_empty() {
            let mut x = Vec::with_capacity(rows * w);
            for l in 1..=rows {
                let rho = tree.rho_up(v, l);
                let red = Cost::Finite(rho * load);
                x.push(red);
                let with_budget = if available {
                    red.min(Cost::Finite(rho))
                } else {
                    red
                };
                x.extend(std::iter::repeat_n(with_budget, k));
            }
            nodes[v.0] = Some(NodeTables {
                rows,
                x,
                y_red: Vec::new(),
                y_blue: Vec::new(),
            });
            continue;
        }

        let first = nodes[children[0].0]
            .as_ref()
            .expect("children gathered before parent");
        let mut red = vec![Cost::Infinite; rows * w];
        let mut blue = vec![Cost::Infinite; rows * w];
        let first_at_one = first.row(&first.x, k, 1);
        for l in 1..=rows {
            let rho = tree.rho_up(v, l);
            let below = first.row(&first.x, k, l + 1);
            let base = (l - 1) * w;
            for i in 0..=k {
                red[base + i] = below[i] + rho * load;
                if available && i > 0 {
                    blue[base + i] = first_at_one[i - 1] + rho;
                }
            }
        }

        let mut y_red = Vec::new();
        let mut y_blue = Vec::new();
        for &c in &children[1..] {
            let child = nodes[c.0]
                .as_ref()
                .expect("children gathered before parent");
            let child_at_one = child.row(&child.x, k, 1);
            let mut next_red = vec![Cost::Infinite; rows * w];
            let mut next_blue = vec![Cost::Infinite; rows * w];
            for l in 1..=rows {
                let base = (l - 1) * w;
                let prev_red = &red[base..base + w];
                let prev_blue = &blue[base..base + w];
                let child_below = child.row(&child.x, k, l + 1);
                for i in 0..=k {
                    next_red[base + i] = mincost(i, prev_red, child_below, Color::Red);
                    if available {
                        next_blue[base + i] = mincost(i, prev_blue, child_at_one, Color::Blue);
                    }
                }
            }
            if opts.retain_partials {
                y_red.push(std::mem::replace(&mut red, next_red));
                y_blue.push(std::mem::replace(&mut blue, next_blue));
            } else {
                red = next_red;
                blue = next_blue;
            }
        }

        let x: Vec<Cost<S>> = red.iter().zip(&blue).map(|(&r, &b)| r.min(b)).collect();
        y_red.push(red);
        y_blue.push(blue);
        nodes[v.0] = Some(NodeTables {
            rows,
            x,
            y_red,
            y_blue,
        });

        if !opts.retain_partials {
            for &c in children {
                if let Some(child) = nodes[c.0].as_mut() {
                    child.y_red = Vec::new();
                    child.y_blue = Vec::new();
                }
            }
        }
    }

    GatherTables {
        budget: k,
        retained_partials: opts.retain_partials,
        nodes: nodes
            .into_iter()
            .map(|n| n.expect("every switch gathered"))
            .collect(),
    }
}

/// Traces an optimal placement back through tables built by [`gather`].
pub fn color<S: Scalar>(
    tree: &TreeNetwork<S>,
    tables: &GatherTables<S>,
    k: usize,
) -> Result<Placement, SolveError> {
    if tables.budget != k {
        return Err(SolveError::TableMismatch(format!(
            "tables built for budget {}, asked for {k}",
            tables.budget
        )));
    }
    if tables.nodes.len() != tree.len() {
        return Err(SolveError::TableMismatch(format!(
            "tables cover {} switches, tree has {}",
            tables.nodes.len(),
            tree.len()
        )));
    }
    if !tables.retained_partials {
        return Err(SolveError::TableMismatch(
            "partial folds were not retained".into(),
        ));
    }
    for v in tree.switches() {
        let node = &tables.nodes[v.0];
        if node.rows != tree.depth(v) + 1 || node.y_red.len() != tree.children(v).len() {
            return Err(SolveError::TableMismatch(format!(
                "shape differs at `{}`",
                tree.label(v)
            )));
        }
    }

    let mut placement = Placement::empty();
    let mut stack = vec![(tree.root(), k, 1usize)];
    while let Some((v, mut i, l)) = stack.pop() {
        let c = tables.choose(tree, v, l, i).expect("partials retained");
        if c == Color::Blue {
            placement.insert(v);
        }
        let children = tree.children(v);
        if children.is_empty() {
            continue;
        }
        let node = &tables.nodes[v.0];
        let child_l = match c {
            Color::Blue => 1,
            Color::Red => l + 1,
        };
        for m in (2..=children.len()).rev() {
            let cm = children[m - 1];
            let child = &tables.nodes[cm.0];
            let (prev, child_row) = match c {
                Color::Blue => (&node.y_blue[m - 2], child.row(&child.x, k, 1)),
                Color::Red => (&node.y_red[m - 2], child.row(&child.x, k, l + 1)),
            };
            let j = minsplit(i, node.row(prev, k, l), child_row, c);
            stack.push((cm, j, child_l));
            i -= j;
        }
        let rest = match c {
            Color::Blue => i - 1,
            Color::Red => i,
        };
        stack.push((children[0], rest, child_l));
    }
    Ok(placement)
}

pub fn solve<S: Scalar>(tree: &TreeNetwork<S>, k: usize) -> SolveResult<S> {
    solve_inner(tree, k, false)
}

/// Like [`solve`] but keeps the gathered tables in the result.
pub fn solve_retaining_tables<S: Scalar>(tree: &TreeNetwork<S>, k: usize) -> SolveResult<S> {
    solve_inner(tree, k, true)
}

fn solve_inner<S: Scalar>(tree: &TreeNetwork<S>, k: usize, keep: bool) -> SolveResult<S> {
    let start = Instant::now();
    let tables = gather(tree, k);
    let gather_time = start.elapsed();

    let start = Instant::now();
    let placement = color(tree, &tables, k).expect("tables built for this tree");
    let color_time = start.elapsed();

    let cost = tables
        .x(tree.root(), 1, k)
        .and_then(Cost::finite)
        .expect("all-red placement is always feasible");
    let stats = SolveStats {
        node_visits: tree.len(),
        x_cells: tables.x_cells(),
        y_cells: tables.y_cells(),
        gather_time,
        color_time,
    };
    SolveResult {
        placement,
        cost,
        tables: keep.then_some(tables),
        stats,
    }
}

/// Least cost for every budget `0 ..= k_max` from a single gather pass.
pub fn budget_curve<S: Scalar>(tree: &TreeNetwork<S>, k_max: usize) -> Vec<S> {
    let tables = gather_with(
        tree,
        k_max,
        GatherOptions {
            retain_partials: false,
        },
    );
    tables
        .root_costs(tree.root())
        .into_iter()
        .map(|c| c.finite().expect("all-red placement is always feasible"))
        .collect()
}
