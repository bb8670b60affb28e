//! Decorated trees glued from decoration-reproduction processes.
//!
//! Every branch carries a decoration path; its atoms above the cutoff start
//! child branches, indexed by Ulam labels in co-lexicographic order (largest
//! initial decoration first, ties by time). Nested families build one tree per
//! level of an x-grid from a single recursion at the top level, and the grow
//! step extends a tree at `x′` to a tree at `x > x′` by updating the existing
//! branches through the coupling and grafting fresh subtrees at their tips.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::growing::GrowingFamily;
use crate::measures::{CharacteristicQuadruplet, Cutoffs};
use crate::numerics::rng::derive_seed;
use crate::simulate::{split_values, DecorationPath, PathJump, SimOptions, Simulator};
use crate::svg::{color, Canvas};

/// Default cap on the label length.
pub const DEFAULT_DEPTH_CAP: usize = 30;
/// Default cutoff relative to the root decoration.
pub const DEFAULT_RELATIVE_CUTOFF: f64 = 1e-3;

const MIN_LEVEL: i32 = 2;
const MAX_LEVEL: i32 = 52;

/// Ulam label: the empty word is the root branch.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub Vec<u32>);

impl Label {
    pub fn root() -> Self {
        Label(Vec::new())
    }

    pub fn child(&self, i: u32) -> Self {
        let mut v = self.0.clone();
        v.push(i);
        Label(v)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.is_empty() {
            None
        } else {
            Some(Label(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// Seed of this branch derived from a tree seed.
    pub fn seed(&self, tree_seed: u64) -> u64 {
        self.0.iter().fold(derive_seed(tree_seed, 0), |s, i| derive_seed(s, u64::from(*i) + 1))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join("."))
    }
}

/// A child attached to a branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChildMark {
    pub index: u32,
    pub time: f64,
    pub value: f64,
    /// Jump of the parent path carrying the child, and its offspring rank.
    pub jump: usize,
    pub rank: usize,
}

/// A branch: its decoration path on `[0, z_u]` and its children.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: Label,
    /// Time on the parent branch where this branch is attached.
    pub attach_time: f64,
    /// Distance from the root to the start of the branch.
    pub offset: f64,
    pub path: DecorationPath,
    pub children: Vec<ChildMark>,
    /// Relative fragment cutoff of the sampler that drove the path.
    pub sampler_cutoff: f64,
}

impl Branch {
    /// `z_u`.
    pub fn length(&self) -> f64 {
        if self.path.is_prefix() {
            self.path.end_time()
        } else {
            self.path.absorption
        }
    }

    pub fn initial(&self) -> f64 {
        self.path.x0
    }

    /// Decoration at time `s`, upper semi-continuous at jumps.
    pub fn decoration(&self, s: f64) -> f64 {
        let a = self.path.value_at(s).unwrap_or(0.0);
        let b = self.path.value_before(s).unwrap_or(0.0);
        a.max(b)
    }
}

/// A decorated tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoratedTree {
    pub root: f64,
    pub cutoff: f64,
    pub depth_cap: usize,
    /// Set when the depth cap stopped the recursion or a path hit its
    /// length cap.
    pub truncated: bool,
    pub branches: BTreeMap<Label, Branch>,
}

/// Construction settings for trees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeOptions {
    /// Children with initial decoration below this value are not spawned.
    pub cutoff: f64,
    pub depth_cap: usize,
    /// Largest root decoration a later grow step may reach; branch samplers
    /// keep enough offspring for it.
    pub reach: Option<f64>,
}

impl TreeOptions {
    pub fn new(cutoff: f64, depth_cap: usize) -> Self {
        TreeOptions { cutoff, depth_cap, reach: None }
    }
}

/// Summary statistics of a tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeStats {
    pub total_length: f64,
    pub height: f64,
    pub branch_count: usize,
    pub max_decoration: f64,
    pub tip_count: usize,
}

/// Simulators for the quantized relative cutoffs `2^{-k}` used by branches.
#[derive(Debug)]
pub struct TreeBuilder {
    quad: CharacteristicQuadruplet,
    family: GrowingFamily,
    base: SimOptions,
    bank: Vec<OnceLock<std::result::Result<Arc<Simulator>, Error>>>,
}

impl TreeBuilder {
    pub fn new(quad: CharacteristicQuadruplet, family: GrowingFamily, base: SimOptions) -> Self {
        let bank = (MIN_LEVEL..=MAX_LEVEL).map(|_| OnceLock::new()).collect();
        TreeBuilder { quad, family, base, bank }
    }

    pub fn quadruplet(&self) -> &CharacteristicQuadruplet {
        &self.quad
    }

    /// Simulator whose fragment cutoff is the largest `2^{-k}` below both
    /// `cutoff/reach` and the base fragment cutoff.
    pub fn simulator(&self, reach: f64, cutoff: f64) -> Result<Arc<Simulator>> {
        let ratio = (reach / cutoff).max(1.0 / self.base.cutoffs.fragment);
        self.level(ratio.log2().ceil() as i32)
    }

    /// Simulator used for a branch with the given sampler cutoff.
    pub fn simulator_for(&self, sampler_cutoff: f64) -> Result<Arc<Simulator>> {
        self.level((-sampler_cutoff.log2()).round() as i32)
    }

    fn level(&self, k: i32) -> Result<Arc<Simulator>> {
        let k = k.clamp(MIN_LEVEL, MAX_LEVEL);
        let slot = &self.bank[(k - MIN_LEVEL) as usize];
        slot.get_or_init(|| {
            let fragment = 2f64.powi(-k);
            let cutoffs = Cutoffs::new(fragment, self.base.cutoffs.followed_jump)?;
            let opts = SimOptions { cutoffs, ..self.base };
            Simulator::new(self.quad.clone(), self.family.clone(), opts).map(Arc::new)
        })
        .clone()
    }

    /// Recursive tree from `x`.
    pub fn build_tree(&self, x: f64, opts: &TreeOptions, seed: u64) -> Result<DecoratedTree> {
        validate(x, opts)?;
        let (branches, truncated) = self.subtree(Label::root(), x, 0.0, 0.0, opts, seed)?;
        Ok(assemble(x, opts, branches, truncated))
    }

    fn reach_of(&self, v: f64, opts: &TreeOptions) -> f64 {
        opts.reach.map_or(v, |r| r.max(v))
    }

    fn subtree(
        &self,
        label: Label,
        initial: f64,
        attach: f64,
        offset: f64,
        opts: &TreeOptions,
        seed: u64,
    ) -> Result<(Vec<Branch>, bool)> {
        let sim = self.simulator(self.reach_of(initial, opts), opts.cutoff)?;
        let path = sim.path(initial, label.seed(seed))?;
        let mut truncated = path.truncated;
        let children = child_marks(&path, opts.cutoff);
        let spawn = label.depth() < opts.depth_cap;
        if !spawn && !children.is_empty() {
            truncated = true;
        }
        let kids: Vec<ChildMark> = if spawn { children } else { Vec::new() };
        let sampler_cutoff = sim.options().cutoffs.fragment;
        let branch = Branch { label: label.clone(), attach_time: attach, offset, path, children: kids.clone(), sampler_cutoff };
        let results = kids
            .par_iter()
            .map(|c| self.subtree(label.child(c.index), c.value, c.time, offset + c.time, opts, seed))
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![branch];
        for (b, t) in results {
            out.extend(b);
            truncated |= t;
        }
        Ok((out, truncated))
    }

    /// One tree per grid level from a single recursion at the top level.
    ///
    /// Labels come from the top tree; a lower level keeps a branch when the
    /// corresponding atom of its parent's lower path is above the cutoff.
    pub fn build_nested(&self, x_grid: &[f64], opts: &TreeOptions, seed: u64) -> Result<NestedFamily> {
        if x_grid.is_empty() || x_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Validation(format!("x grid must be non-empty and strictly ascending, got {x_grid:?}")));
        }
        let top = *x_grid.last().expect("grid is non-empty");
        validate(x_grid[0], opts)?;
        let initials: Vec<Option<f64>> = x_grid.iter().map(|x| Some(*x)).collect();
        let (nodes, truncated) = self.nested_subtree(Label::root(), initials, 0.0, 0.0, opts, seed)?;
        let mut trees: Vec<DecoratedTree> = x_grid
            .iter()
            .map(|x| DecoratedTree { root: *x, cutoff: opts.cutoff, depth_cap: opts.depth_cap, truncated, branches: BTreeMap::new() })
            .collect();
        for node in nodes {
            for (lvl, (path, kids)) in node.levels.into_iter().enumerate() {
                if let Some(path) = path {
                    let b = Branch {
                        label: node.label.clone(),
                        attach_time: node.attach,
                        offset: node.offset,
                        path,
                        children: kids,
                        sampler_cutoff: node.sampler_cutoff,
                    };
                    trees[lvl].branches.insert(node.label.clone(), b);
                }
            }
        }
        debug_assert!(trees.last().is_some_and(|t| t.root == top));
        Ok(NestedFamily { x_grid: x_grid.to_vec(), trees, seed, options: *opts })
    }

    fn nested_subtree(
        &self,
        label: Label,
        initials: Vec<Option<f64>>,
        attach: f64,
        offset: f64,
        opts: &TreeOptions,
        seed: u64,
    ) -> Result<(Vec<NestedNode>, bool)> {
        let n = initials.len();
        let top_v = initials[n - 1].expect("the top level is always present");
        let sim = self.simulator(self.reach_of(top_v, opts), opts.cutoff)?;
        let reference = sim.path(top_v, label.seed(seed))?;
        let mut truncated = reference.truncated;
        let marks = child_marks(&reference, opts.cutoff);
        let spawn = label.depth() < opts.depth_cap;
        if !spawn && !marks.is_empty() {
            truncated = true;
        }
        let marks: Vec<ChildMark> = if spawn { marks } else { Vec::new() };
        let mut levels = Vec::with_capacity(n);
        let mut child_initials: Vec<Vec<Option<f64>>> = vec![vec![None; n]; marks.len()];
        for (lvl, v) in initials.iter().enumerate() {
            let Some(v) = v else {
                levels.push((None, Vec::new()));
                continue;
            };
            let path = if lvl == n - 1 { reference.clone() } else { sim.derive(&reference, *v)? };
            let mut kids = Vec::new();
            for (ci, m) in marks.iter().enumerate() {
                if let Some(value) = atom_value(&path, m.jump, m.rank) {
                    if value >= opts.cutoff {
                        child_initials[ci][lvl] = Some(value);
                        kids.push(ChildMark { value, ..*m });
                    }
                }
            }
            levels.push((Some(path), kids));
        }
        let sampler_cutoff = sim.options().cutoffs.fragment;
        let node = NestedNode { label: label.clone(), attach, offset, levels, sampler_cutoff };
        let results = marks
            .par_iter()
            .zip(child_initials.into_par_iter())
            .map(|(m, ini)| self.nested_subtree(label.child(m.index), ini, m.time, offset + m.time, opts, seed))
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![node];
        for (b, t) in results {
            out.extend(b);
            truncated |= t;
        }
        Ok((out, truncated))
    }

    /// Tree at `x` grown from the level `x′ = family.x_grid[level]`.
    ///
    /// Every branch present at `x′` is followed at level `x` through the
    /// coupling up to its length at `x′`; its value there is the weight of the
    /// tip, where a fresh tree with that root decoration is grafted. Children
    /// that reach the cutoff only at level `x` start fresh subtrees.
    pub fn grow_step(&self, family: &NestedFamily, level: usize, x: f64, fresh_seed: u64) -> Result<GrowOutcome> {
        let x_lo = *family
            .x_grid
            .get(level)
            .ok_or_else(|| Error::Validation(format!("level {level} is not in the family")))?;
        if x < x_lo {
            return Err(Error::Ordering(format!("grow target {x} is below the current level {x_lo}")));
        }
        let opts = family.options;
        let lower = &family.trees[level];
        let refs = family.trees.last().expect("families are non-empty");
        if x == x_lo {
            let weights = lower.branches.keys().map(|l| (l.clone(), 0.0)).collect();
            return Ok(GrowOutcome { tree: lower.clone(), weights });
        }
        let plain = TreeOptions { reach: None, ..opts };
        let mut weights = Vec::new();
        let (branches, truncated) =
            self.grow_branch(lower, refs, &Label::root(), &Label::root(), x, 0.0, 0.0, &plain, fresh_seed, &mut weights)?;
        let tree = canonicalize(&assemble(x, &plain, branches, truncated || lower.truncated));
        Ok(GrowOutcome { tree, weights })
    }

    #[allow(clippy::too_many_arguments)]
    fn grow_branch(
        &self,
        lower: &DecoratedTree,
        refs: &DecoratedTree,
        old: &Label,
        new: &Label,
        initial: f64,
        attach: f64,
        offset: f64,
        opts: &TreeOptions,
        seed: u64,
        weights: &mut Vec<(Label, f64)>,
    ) -> Result<(Vec<Branch>, bool)> {
        let low = &lower.branches[old];
        let reference = &refs.branches[old].path;
        let sim = self.simulator_for(refs.branches[old].sampler_cutoff)?;
        let cut = low.length();
        let full = sim.derive(reference, initial)?;
        let prefix = restrict(&full, cut);
        let w = if cut >= full.absorption { 0.0 } else { full.value_at(cut).unwrap_or(0.0) };
        weights.push((old.clone(), w));
        let mut truncated = false;
        let graft = if w > 0.0 {
            let g = sim.path(w, derive_seed(seed, old.seed(0x5eed)))?;
            truncated |= g.truncated;
            Some(g)
        } else {
            None
        };
        let path = match &graft {
            Some(g) => concatenate(&prefix, g, cut),
            None => prefix,
        };
        let marks = child_marks(&path, opts.cutoff);
        let spawn = new.depth() < opts.depth_cap;
        if !spawn && !marks.is_empty() {
            truncated = true;
        }
        let marks: Vec<ChildMark> = if spawn { marks } else { Vec::new() };
        let sampler_cutoff = sim.options().cutoffs.fragment;
        let mut out = vec![Branch { label: new.clone(), attach_time: attach, offset, path, children: marks.clone(), sampler_cutoff }];
        // Children born on the prefix that already exist at x′ keep following
        // the coupling; all others are fresh.
        let existing: BTreeMap<(usize, usize), u32> =
            low.children.iter().map(|c| ((c.jump, c.rank), c.index)).collect();
        let prefix_jumps = full.jumps.iter().take_while(|j| j.time < cut).count();
        for m in &marks {
            let child = new.child(m.index);
            let old_child = if m.jump < prefix_jumps { existing.get(&(m.jump, m.rank)) } else { None };
            let (b, t) = match old_child {
                Some(i) => self.grow_branch(lower, refs, &old.child(*i), &child, m.value, m.time, offset + m.time, opts, seed, weights)?,
                None => {
                    let fresh = derive_seed(seed, child.seed(0xf4e5));
                    self.subtree(child, m.value, m.time, offset + m.time, opts, fresh)?
                }
            };
            out.extend(b);
            truncated |= t;
        }
        Ok((out, truncated))
    }
}

#[derive(Debug)]
struct NestedNode {
    label: Label,
    attach: f64,
    offset: f64,
    levels: Vec<(Option<DecorationPath>, Vec<ChildMark>)>,
    sampler_cutoff: f64,
}

/// Trees for every level of an x-grid, sharing labels and randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedFamily {
    pub x_grid: Vec<f64>,
    pub trees: Vec<DecoratedTree>,
    pub seed: u64,
    pub options: TreeOptions,
}

impl NestedFamily {
    /// Number of violations of branch-set inclusion, length monotonicity and
    /// pointwise decoration order between consecutive levels.
    pub fn inclusion_violations(&self, slack: f64) -> usize {
        let mut bad = 0;
        for w in self.trees.windows(2) {
            let (lo, hi) = (&w[0], &w[1]);
            for (label, b) in &lo.branches {
                let Some(h) = hi.branches.get(label) else {
                    bad += 1;
                    continue;
                };
                if b.length() > h.length() + slack * hi.root || b.attach_time != h.attach_time {
                    bad += 1;
                }
                let (ts, vs) = (&b.path.times, &b.path.values);
                for i in 0..ts.len() {
                    let before = ts.get(i + 1) == Some(&ts[i]);
                    let bound = if before { h.path.value_before(ts[i]) } else { h.path.value_at(ts[i]) };
                    if bound.is_some_and(|u| vs[i] > u + slack * hi.root) {
                        bad += 1;
                        break;
                    }
                }
            }
        }
        bad
    }
}

/// A grown tree and the tip weights `(label at x′, weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowOutcome {
    pub tree: DecoratedTree,
    pub weights: Vec<(Label, f64)>,
}

fn validate(x: f64, opts: &TreeOptions) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Validation(format!("root decoration must be positive, got {x}")));
    }
    if !(opts.cutoff > 0.0) {
        return Err(Error::Validation(format!("cutoff must be positive, got {}", opts.cutoff)));
    }
    Ok(())
}

fn assemble(x: f64, opts: &TreeOptions, branches: Vec<Branch>, truncated: bool) -> DecoratedTree {
    DecoratedTree {
        root: x,
        cutoff: opts.cutoff,
        depth_cap: opts.depth_cap,
        truncated,
        branches: branches.into_iter().map(|b| (b.label.clone(), b)).collect(),
    }
}

/// Atoms of `path` at or above `cutoff` in co-lexicographic order.
pub fn child_marks(path: &DecorationPath, cutoff: f64) -> Vec<ChildMark> {
    let mut atoms: Vec<_> = path.atoms().into_iter().filter(|a| a.value >= cutoff).collect();
    atoms.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.time.total_cmp(&b.time)).then(a.jump.cmp(&b.jump)).then(a.rank.cmp(&b.rank)));
    atoms
        .into_iter()
        .enumerate()
        .map(|(i, a)| ChildMark { index: i as u32, time: a.time, value: a.value, jump: a.jump, rank: a.rank })
        .collect()
}

fn atom_value(path: &DecorationPath, jump: usize, rank: usize) -> Option<f64> {
    let j = path.jumps.get(jump)?;
    split_values(j.pre, &j.seq).1.get(rank).copied()
}

/// The path on `[0, cut]`; a complete path when it is absorbed by then.
fn restrict(path: &DecorationPath, cut: f64) -> DecorationPath {
    if cut >= path.absorption || cut >= path.end_time() {
        return path.clone();
    }
    let mut out = path.clone();
    let keep = path.times.partition_point(|t| *t < cut);
    let v = path.value_before(cut).unwrap_or(0.0);
    out.times.truncate(keep);
    out.values.truncate(keep);
    out.times.push(cut);
    out.values.push(v);
    out.jumps.retain(|j| j.time < cut);
    out.absorption = f64::INFINITY;
    out
}

/// `prefix` on `[0, cut]` followed by `tail` shifted by `cut`.
fn concatenate(prefix: &DecorationPath, tail: &DecorationPath, cut: f64) -> DecorationPath {
    let mut out = prefix.clone();
    for (t, v) in tail.times.iter().zip(&tail.values).skip(1) {
        out.times.push(cut + t);
        out.values.push(*v);
    }
    out.jumps.extend(tail.jumps.iter().map(|j| PathJump { time: cut + j.time, ..j.clone() }));
    out.absorption = cut + tail.absorption;
    out.truncated |= tail.truncated;
    out
}

/// Relabels every branch so that children are in co-lexicographic order.
pub fn canonicalize(tree: &DecoratedTree) -> DecoratedTree {
    let mut out = BTreeMap::new();
    let mut stack = vec![(Label::root(), Label::root())];
    while let Some((old, new)) = stack.pop() {
        let b = &tree.branches[&old];
        let mut kids = b.children.clone();
        kids.sort_by(|a, c| c.value.total_cmp(&a.value).then(a.time.total_cmp(&c.time)).then(a.jump.cmp(&c.jump)).then(a.rank.cmp(&c.rank)));
        let mut relabeled = Vec::with_capacity(kids.len());
        for (i, k) in kids.iter().enumerate() {
            if tree.branches.contains_key(&old.child(k.index)) {
                stack.push((old.child(k.index), new.child(i as u32)));
            }
            relabeled.push(ChildMark { index: i as u32, ..*k });
        }
        out.insert(new.clone(), Branch { label: new, children: relabeled, ..b.clone() });
    }
    DecoratedTree { branches: out, ..tree.clone() }
}

/// Total length, height, branch count, largest decoration and tip count.
pub fn tree_stats(tree: &DecoratedTree) -> TreeStats {
    let mut s = TreeStats { total_length: 0.0, height: 0.0, branch_count: 0, max_decoration: 0.0, tip_count: 0 };
    for b in tree.branches.values() {
        let z = b.length();
        s.total_length += z;
        s.height = s.height.max(b.offset + z);
        s.branch_count += 1;
        s.tip_count += 1;
        s.max_decoration = b.path.values.iter().copied().fold(s.max_decoration, f64::max);
    }
    s
}

/// Number of binary conservative splits with `post + child ≠ pre`.
pub fn conservation_violations(tree: &DecoratedTree) -> usize {
    let mut bad = 0;
    for b in tree.branches.values() {
        for j in &b.path.jumps {
            let off = j.seq.offspring();
            if off.len() == 1 && (j.seq.followed() + off[0] - 1.0).abs() <= 1e-12 {
                let (post, kids) = split_values(j.pre, &j.seq);
                if post + kids[0] != j.pre {
                    bad += 1;
                }
            }
        }
    }
    bad
}

/// Whether every branch lists its children in co-lexicographic order with
/// consecutive indices.
pub fn is_colex(tree: &DecoratedTree) -> bool {
    tree.branches.values().all(|b| {
        b.children.iter().enumerate().all(|(i, c)| c.index == i as u32)
            && b.children.windows(2).all(|w| w[0].value > w[1].value || (w[0].value == w[1].value && w[0].time <= w[1].time))
    })
}

struct Point {
    branch: usize,
    s: f64,
}

/// Ancestor chains of every branch, indexed by depth.
struct Skeleton {
    labels: Vec<Vec<u32>>,
    /// Offset of the ancestor at each depth, the branch itself last.
    offsets: Vec<Vec<f64>>,
    /// Time at which the chain leaves the ancestor at each depth.
    exits: Vec<Vec<f64>>,
}

impl Skeleton {
    fn new(tree: &DecoratedTree) -> Self {
        let mut sk = Skeleton { labels: Vec::new(), offsets: Vec::new(), exits: Vec::new() };
        for (label, b) in &tree.branches {
            let mut offsets = Vec::with_capacity(label.depth() + 1);
            let mut exits = Vec::with_capacity(label.depth());
            for k in 0..=label.depth() {
                let anc = &tree.branches[&Label(label.0[..k].to_vec())];
                offsets.push(anc.offset);
                if k < label.depth() {
                    exits.push(tree.branches[&Label(label.0[..=k].to_vec())].attach_time);
                }
            }
            debug_assert_eq!(offsets.last().copied(), Some(b.offset));
            sk.labels.push(label.0.clone());
            sk.offsets.push(offsets);
            sk.exits.push(exits);
        }
        sk
    }

    /// Tree distance between two points of the skeleton.
    fn distance(&self, p: &Point, q: &Point) -> f64 {
        let (u, v) = (&self.labels[p.branch], &self.labels[q.branch]);
        let k = u.iter().zip(v).take_while(|(a, b)| a == b).count();
        let exit = |branch: usize, depth: usize, s: f64| if depth == k { s } else { self.exits[branch][k] };
        let meet = self.offsets[p.branch][k] + exit(p.branch, u.len(), p.s).min(exit(q.branch, v.len(), q.s));
        let dp = self.offsets[p.branch][u.len()] + p.s;
        let dq = self.offsets[q.branch][v.len()] + q.s;
        dp + dq - 2.0 * meet
    }
}

/// Hausdorff distance between the hypographs of two levels of a nested
/// family, in the skeleton of the upper level with the metric
/// `max(tree distance, decoration gap)`.
///
/// Branches are sampled every `mesh`, at every absorption time of any level
/// and on both sides of jumps larger than `mesh`. The lower hypograph is
/// contained in the upper one, so only distances from upper points count.
pub fn hypograph_distance_nested(family: &NestedFamily, lo: usize, hi: usize, mesh: f64) -> Result<f64> {
    if lo >= family.trees.len() || hi >= family.trees.len() || lo > hi {
        return Err(Error::Validation(format!("levels {lo}, {hi} are not an ordered pair of the family")));
    }
    if !(mesh > 0.0) {
        return Err(Error::Validation(format!("mesh must be positive, got {mesh}")));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let top = &family.trees[hi];
    let low = &family.trees[lo];
    let sk = Skeleton::new(top);
    let mut points = Vec::new();
    let mut g_hi = Vec::new();
    let mut g_lo = Vec::new();
    for (bi, (label, b)) in top.branches.iter().enumerate() {
        let mut ss: Vec<f64> = Vec::new();
        let z = b.length();
        let n = (z / mesh).ceil() as usize;
        ss.extend((0..=n).map(|i| (i as f64 * mesh).min(z)));
        for t in &family.trees {
            if let Some(other) = t.branches.get(label) {
                ss.push(other.length().min(z));
            }
        }
        for j in &b.path.jumps {
            if j.pre - split_values(j.pre, &j.seq).0 > mesh {
                ss.push(j.time);
            }
        }
        ss.sort_by(f64::total_cmp);
        ss.dedup();
        let lower = low.branches.get(label);
        for s in ss {
            points.push(Point { branch: bi, s });
            g_hi.push(b.decoration(s));
            g_lo.push(lower.filter(|l| s <= l.length()).map(|l| l.decoration(s)));
        }
    }
    let lower_idx: Vec<usize> = (0..points.len()).filter(|i| g_lo[*i].is_some()).collect();
    let worst = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let p = &points[i];
            let mut best = match g_lo[i] {
                Some(v) => (g_hi[i] - v).max(0.0),
                None => f64::INFINITY,
            };
            for &j in &lower_idx {
                if best <= 0.0 {
                    break;
                }
                let gap = g_hi[i] - g_lo[j].unwrap_or(0.0);
                if gap >= best {
                    continue;
                }
                let d = sk.distance(p, &points[j]);
                best = best.min(d.max(gap));
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Text export: one record per branch.
pub fn export_text(tree: &DecoratedTree, samples: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "tree root={} cutoff={} depth_cap={} truncated={}", tree.root, tree.cutoff, tree.depth_cap, tree.truncated);
    for b in tree.branches.values() {
        let _ = writeln!(out, "branch {}", b.label);
        let _ = writeln!(out, "  attach_time {}", b.attach_time);
        let _ = writeln!(out, "  length {}", b.length());
        let _ = writeln!(out, "  initial {}", b.initial());
        let z = b.length();
        let n = samples.max(2);
        let pts: Vec<String> = (0..n)
            .map(|i| {
                let t = z * i as f64 / (n - 1) as f64;
                format!("{t}:{}", b.path.value_at(t).unwrap_or(0.0))
            })
            .collect();
        let _ = writeln!(out, "  samples {}", pts.join(" "));
        let kids: Vec<String> = b.children.iter().map(|c| b.label.child(c.index).to_string()).collect();
        let _ = writeln!(out, "  children {}", kids.join(" "));
    }
    out
}

/// SVG of the hypographs of every level, decoration against distance from
/// the root, one colour per level.
pub fn hypograph_svg(family: &NestedFamily) -> String {
    let top = family.trees.last().expect("families are non-empty");
    let h = tree_stats(top).height;
    let mut c = Canvas::new(760.0, 440.0, (0.0, h), (0.0, top.root));
    c.axes("distance from the root", "decoration");
    c.title("nested hypographs");
    for (lvl, t) in family.trees.iter().enumerate().rev() {
        for b in t.branches.values() {
            let stride = (b.path.len() / 600).max(1);
            let mut pts: Vec<(f64, f64)> = vec![(b.offset, 0.0)];
            pts.extend(b.path.times.iter().zip(&b.path.values).step_by(stride).map(|(s, v)| (b.offset + s, *v)));
            pts.push((b.offset + b.length(), 0.0));
            c.polygon(&pts, color(lvl), 0.25);
            c.polyline(&pts, color(lvl), 0.8);
        }
        c.label((0.02 * h, t.root), &format!("x = {}", t.root), color(lvl));
    }
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::catalog::quadruplet;

    fn builder(key: &str, family: &str) -> TreeBuilder {
        let q = quadruplet(key).unwrap();
        let f = GrowingFamily::from_key(family, Some(&q.measure), Some(q.alpha)).unwrap();
        TreeBuilder::new(q, f, SimOptions::default())
    }

    #[test]
    fn labels_display_and_seed() {
        assert_eq!(Label::root().to_string(), "root");
        let l = Label::root().child(0).child(3);
        assert_eq!(l.to_string(), "0.3");
        assert_eq!(l.parent().unwrap(), Label(vec![0]));
        assert_ne!(l.seed(1), Label(vec![3, 0]).seed(1));
    }

    #[test]
    fn large_cutoff_gives_a_single_branch() {
        let b = builder("brownian-mass-ll", "brownian");
        let t = b.build_tree(1.0, &TreeOptions::new(1.0, 30), 4).unwrap();
        assert_eq!(t.branches.len(), 1);
        let s = tree_stats(&t);
        assert_eq!(s.total_length, s.height);
    }

    #[test]
    fn trees_are_deterministic_colex_and_conservative() {
        let b = builder("brownian-mass-ll", "brownian");
        let o = TreeOptions::new(1e-2, 30);
        let a = b.build_tree(1.0, &o, 12).unwrap();
        let c = b.build_tree(1.0, &o, 12).unwrap();
        assert_eq!(a, c);
        assert!(a.branches.len() > 1);
        assert!(is_colex(&a));
        assert_eq!(canonicalize(&a), a);
        assert_eq!(conservation_violations(&a), 0);
        for br in a.branches.values() {
            if let Some(p) = br.label.parent() {
                let parent = &a.branches[&p];
                let mark = parent.children.iter().find(|c| p.child(c.index) == br.label).unwrap();
                assert_eq!(mark.value, br.initial());
                assert!(mark.time <= parent.length());
            }
        }
    }

    #[test]
    fn height_spine_has_unit_height_at_one() {
        let b = builder("brownian-height-ll", "magic-height");
        let t = b.build_tree(1.0, &TreeOptions::new(1e-2, 30), 3).unwrap();
        let root = &t.branches[&Label::root()];
        assert!((root.length() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn nested_family_is_included_and_distances_are_bounded() {
        let b = builder("brownian-mass-ll", "brownian");
        let o = TreeOptions::new(1e-2, 30);
        let f = b.build_nested(&[0.3, 0.6, 1.0], &o, 5).unwrap();
        assert_eq!(f.trees[0].root, 0.3);
        assert_eq!(f.trees[2].root, 1.0);
        assert_eq!(f.inclusion_violations(1e-12), 0);
        let d02 = hypograph_distance_nested(&f, 0, 2, 0.02).unwrap();
        let d12 = hypograph_distance_nested(&f, 1, 2, 0.02).unwrap();
        assert!(d02 >= 0.7 - 1e-12 && d12 >= 0.4 - 1e-12);
        assert!(d02 >= d12);
        assert_eq!(hypograph_distance_nested(&f, 1, 1, 0.02).unwrap(), 0.0);
    }

    #[test]
    fn single_level_family_matches_build_tree() {
        let b = builder("brownian-mass-ll", "brownian");
        let o = TreeOptions::new(1e-2, 30);
        let f = b.build_nested(&[1.0], &o, 9).unwrap();
        let t = b.build_tree(1.0, &o, 9).unwrap();
        assert_eq!(f.trees[0], t);
    }

    #[test]
    fn grow_step_weights_and_identity() {
        let b = builder("brownian-mass-ll", "brownian");
        let o = TreeOptions { reach: Some(1.0), ..TreeOptions::new(1e-2, 30) };
        let f = b.build_nested(&[0.5], &o, 2).unwrap();
        let same = b.grow_step(&f, 0, 0.5, 7).unwrap();
        assert!(same.weights.iter().all(|(_, w)| *w == 0.0));
        assert_eq!(same.tree, f.trees[0]);
        let g = b.grow_step(&f, 0, 1.0, 7).unwrap();
        assert_eq!(g.tree.root, 1.0);
        assert!(g.weights.iter().all(|(_, w)| *w >= 0.0 && *w <= 1.0));
        assert!(is_colex(&g.tree));
        assert!(tree_stats(&g.tree).total_length >= tree_stats(&f.trees[0]).total_length);
        assert!(b.grow_step(&f, 0, 0.4, 7).is_err());
    }

    #[test]
    fn export_has_one_record_per_branch() {
        let b = builder("brownian-mass-ll", "brownian");
        let t = b.build_tree(1.0, &TreeOptions::new(5e-2, 30), 1).unwrap();
        let text = export_text(&t, 5);
        assert_eq!(text.matches("\nbranch ").count(), t.branches.len());
    }
}
