//! Fusion-tree labellings and the elementary unitaries acting on them.
//!
//! The public basis is always the left-combed caterpillar over an ordered
//! list of leaf slots. Internally, arbitrary binary shapes over the same
//! leaf order are represented by their laminar family of leaf spans; the
//! recoupling engine canonicalizes any shape to the caterpillar through
//! elementary F-moves and composes transforms from there. Adjacent-leaf
//! braids are realized as F-conjugated R-phases.
//!
//! Braid sign convention: the positive generator `sigma_i` exchanges leaves
//! `i` and `i+1` counterclockwise, i.e. leaf `i` passes in front of leaf
//! `i+1`; on a pair with joint charge `c` it multiplies by `R(a,b->c)`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::SparseMap;
use crate::model::{AnyonModel, Charge, ChargeSlot};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeError {
    EmptyTree,
    PositionOutOfRange { position: usize, leaves: usize },
    SlotMismatch,
    WordEndpointMismatch,
}

impl fmt::Display for TreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeError::EmptyTree => write!(f, "fusion tree must have at least one leaf"),
            TreeError::PositionOutOfRange { position, leaves } => {
                write!(f, "position {position} out of range for {leaves} leaves")
            }
            TreeError::SlotMismatch => write!(f, "leaf slots of the two shapes do not agree"),
            TreeError::WordEndpointMismatch => {
                write!(f, "braid word endpoint permutation does not match the tree order")
            }
        }
    }
}

/// A left-combed caterpillar fusion tree: leaf `i` fuses into the running
/// product at position `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeShape {
    pub leaves: Vec<ChargeSlot>,
    pub total: ChargeSlot,
}

impl TreeShape {
    pub fn new(leaves: Vec<ChargeSlot>, total: ChargeSlot) -> Result<Self, TreeError> {
        if leaves.is_empty() {
            return Err(TreeError::EmptyTree);
        }
        Ok(TreeShape { leaves, total })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }
}

/// Complete labelling of a caterpillar tree: charges of every leaf, every
/// internal edge (left to right; empty for one or two leaves) and the root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Labelling {
    pub leaves: Vec<Charge>,
    pub internals: Vec<Charge>,
    pub root: Charge,
}

/// One Artin generator with its sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BraidLetter {
    /// 1-based position: exchanges leaves `position` and `position + 1`.
    pub position: usize,
    /// `+1` counterclockwise, `-1` clockwise.
    pub sign: i8,
}

/// An ordered braid word; letters apply left to right.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BraidWord(pub Vec<BraidLetter>);

impl BraidWord {
    pub fn identity() -> Self {
        BraidWord(Vec::new())
    }

    pub fn validate(&self, leaves: usize) -> Result<(), TreeError> {
        for letter in &self.0 {
            if letter.position == 0 || letter.position >= leaves {
                return Err(TreeError::PositionOutOfRange {
                    position: letter.position,
                    leaves,
                });
            }
            if letter.sign != 1 && letter.sign != -1 {
                return Err(TreeError::WordEndpointMismatch);
            }
        }
        Ok(())
    }

    /// The word read backwards with every sign flipped.
    pub fn inverse(&self) -> BraidWord {
        BraidWord(
            self.0
                .iter()
                .rev()
                .map(|l| BraidLetter {
                    position: l.position,
                    sign: -l.sign,
                })
                .collect(),
        )
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &BraidWord) -> BraidWord {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&next.0);
        BraidWord(letters)
    }

    /// Permutation sending start position to end position: `perm[j]` is the
    /// final position of the strand that started at position `j` (0-based).
    pub fn endpoint_permutation(&self, leaves: usize) -> Result<Vec<usize>, TreeError> {
        self.validate(leaves)?;
        let mut positions: Vec<usize> = (0..leaves).collect();
        for letter in &self.0 {
            let a = letter.position - 1;
            for p in positions.iter_mut() {
                if *p == a {
                    *p += 1;
                } else if *p == a + 1 {
                    *p -= 1;
                }
            }
        }
        Ok(positions)
    }
}

// ---------------------------------------------------------------------------
// Internal shape machinery: binary trees as laminar span families.
// ---------------------------------------------------------------------------

/// Inclusive leaf span `[lo, hi]` identifying one edge of a shape.
pub(crate) type Span = (u32, u32);

/// A binary fusion tree over leaves `0..n`, in left-to-right order,
/// represented by the set of leaf spans of its edges.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Shape {
    pub slots: Vec<ChargeSlot>,
    pub total: ChargeSlot,
    /// Sorted span family: all leaves, all internal edges, the root.
    pub spans: Vec<Span>,
    /// For each non-leaf span (by index into `spans`): the span indices of
    /// its left and right child.
    children: BTreeMap<usize, (usize, usize)>,
}

impl Shape {
    /// Left comb over consecutive leaf ranges: every range becomes a
    /// caterpillar subtree, and the subtrees fuse left to right. A single
    /// all-covering range gives the plain caterpillar.
    pub fn comb(slots: Vec<ChargeSlot>, total: ChargeSlot, ranges: &[Span]) -> Shape {
        let n = slots.len() as u32;
        debug_assert!(n > 0);
        debug_assert!(!ranges.is_empty());
        debug_assert_eq!(ranges[0].0, 0);
        debug_assert_eq!(ranges[ranges.len() - 1].1, n - 1);
        let mut spans: Vec<Span> = (0..n).map(|k| (k, k)).collect();
        for &(s, e) in ranges {
            for j in (s + 1)..=e {
                spans.push((s, j));
            }
        }
        for r in ranges.iter().skip(1) {
            spans.push((0, r.1));
        }
        spans.sort_unstable();
        spans.dedup();
        let mut shape = Shape {
            slots,
            total,
            spans,
            children: BTreeMap::new(),
        };
        shape.rebuild_children();
        shape
    }

    pub fn caterpillar(slots: Vec<ChargeSlot>, total: ChargeSlot) -> Shape {
        let n = slots.len() as u32;
        Shape::comb(slots, total, &[(0, n.saturating_sub(1))])
    }

    fn rebuild_children(&mut self) {
        self.children.clear();
        for (ix, &(lo, hi)) in self.spans.iter().enumerate() {
            if lo == hi {
                continue;
            }
            // Left child: widest proper prefix span; right child: widest
            // proper suffix span. The laminar family makes both unique.
            let left = self
                .spans
                .iter()
                .position(|&(l, h)| l == lo && h < hi && self.is_widest_prefix(lo, h, hi))
                .expect("laminar family: left child exists");
            let right = self
                .spans
                .iter()
                .position(|&(l, h)| h == hi && l > lo && self.is_widest_suffix(l, hi, lo))
                .expect("laminar family: right child exists");
            debug_assert_eq!(self.spans[left].1 + 1, self.spans[right].0);
            self.children.insert(ix, (left, right));
        }
    }

    fn is_widest_prefix(&self, lo: u32, h: u32, hi: u32) -> bool {
        !self.spans.iter().any(|&(l, h2)| l == lo && h2 > h && h2 < hi)
    }

    fn is_widest_suffix(&self, l: u32, hi: u32, lo: u32) -> bool {
        !self.spans.iter().any(|&(l2, h2)| h2 == hi && l2 < l && l2 > lo)
    }

    pub fn leaf_count(&self) -> usize {
        self.slots.len()
    }

    pub fn root_span_ix(&self) -> usize {
        let n = self.leaf_count() as u32;
        self.span_ix((0, n - 1))
    }

    pub fn span_ix(&self, span: Span) -> usize {
        self.spans.binary_search(&span).expect("span present in shape")
    }

    pub fn is_caterpillar(&self) -> bool {
        self.spans.iter().all(|&(lo, hi)| lo == hi || lo == 0)
    }

    /// Key order: leaf spans left to right, then all non-leaf spans in span
    /// order (internal edges ascending, root last for a caterpillar).
    pub fn key_span_ixs(&self) -> Vec<usize> {
        let mut order: Vec<usize> = Vec::with_capacity(self.spans.len());
        for k in 0..self.leaf_count() as u32 {
            order.push(self.span_ix((k, k)));
        }
        for (ix, &(lo, hi)) in self.spans.iter().enumerate() {
            if lo != hi {
                order.push(ix);
            }
        }
        order
    }
}

/// The enumerated labelling space of a shape: all admissible assignments of
/// charges to spans, sorted by the canonical key.
#[derive(Debug, Clone)]
pub(crate) struct Space {
    pub shape: Shape,
    /// Each labelling assigns `charges[span index] -> Charge`.
    pub labellings: Vec<Vec<Charge>>,
    index: BTreeMap<Vec<Charge>, u32>,
    key_ixs: Vec<usize>,
}

impl Space {
    pub fn enumerate(model: &AnyonModel, shape: &Shape) -> Space {
        let root_ix = shape.root_span_ix();
        // Process spans narrow-to-wide so children are assigned before
        // parents.
        let mut order: Vec<usize> = (0..shape.spans.len()).collect();
        order.sort_by_key(|&ix| (shape.spans[ix].1 - shape.spans[ix].0, shape.spans[ix]));

        let mut partials: Vec<Vec<Option<Charge>>> = vec![vec![None; shape.spans.len()]];
        for &ix in &order {
            let (lo, hi) = shape.spans[ix];
            let root_constraint = if ix == root_ix { shape.total.fixed() } else { None };
            let mut next: Vec<Vec<Option<Charge>>> = Vec::new();
            let mut extend = |partial: &Vec<Option<Charge>>, c: Charge| {
                if let Some(t) = root_constraint {
                    if t != c {
                        return;
                    }
                }
                let mut p = partial.clone();
                p[ix] = Some(c);
                next.push(p);
            };
            if lo == hi {
                match shape.slots[lo as usize] {
                    ChargeSlot::Fixed(c) => {
                        for partial in &partials {
                            extend(partial, c);
                        }
                    }
                    ChargeSlot::Free => {
                        for partial in &partials {
                            for c in model.all_charges() {
                                extend(partial, c);
                            }
                        }
                    }
                }
            } else {
                let (l, r) = shape.children[&ix];
                for partial in &partials {
                    let a = partial[l].expect("child assigned");
                    let b = partial[r].expect("child assigned");
                    for &c in model.fusion_products(a, b) {
                        extend(partial, c);
                    }
                }
            }
            partials = next;
            if partials.is_empty() {
                break;
            }
        }

        let key_ixs = shape.key_span_ixs();
        let mut labellings: Vec<Vec<Charge>> = partials
            .into_iter()
            .map(|p| p.into_iter().map(|c| c.unwrap()).collect())
            .collect();
        labellings.sort_by(|a, b| key_of(a, &key_ixs).cmp(&key_of(b, &key_ixs)));
        let mut index = BTreeMap::new();
        for (i, l) in labellings.iter().enumerate() {
            index.insert(key_of(l, &key_ixs), i as u32);
        }
        Space {
            shape: shape.clone(),
            labellings,
            index,
            key_ixs,
        }
    }

    pub fn dim(&self) -> usize {
        self.labellings.len()
    }

    /// Looks up a span-aligned charge vector.
    pub fn index_of(&self, charges: &[Charge]) -> Option<u32> {
        self.index.get(&key_of(charges, &self.key_ixs)).copied()
    }

    /// Looks up a canonical key (leaf charges, then non-leaf span charges).
    pub fn index_of_key(&self, key: &[Charge]) -> Option<u32> {
        self.index.get(key).copied()
    }

    pub fn charge(&self, labelling: usize, span: Span) -> Charge {
        self.labellings[labelling][self.shape.span_ix(span)]
    }

    pub fn root_charge(&self, labelling: usize) -> Charge {
        self.labellings[labelling][self.shape.root_span_ix()]
    }
}

fn key_of(charges: &[Charge], key_ixs: &[usize]) -> Vec<Charge> {
    key_ixs.iter().map(|&ix| charges[ix]).collect()
}

/// One right-to-left association move: eliminates the internal right-child
/// span under `parent_ix`, inserting the matching left pair span.
fn assoc_move(model: &AnyonModel, src: &Space, parent_ix: usize) -> (Space, SparseMap) {
    let shape = &src.shape;
    let (lo, hi) = shape.spans[parent_ix];
    let (a_ix, r_ix) = shape.children[&parent_ix];
    let (b_ix, c_ix) = shape.children[&r_ix];
    let (_, mid) = shape.spans[b_ix];

    let mut new_spans = shape.spans.clone();
    new_spans.remove(r_ix);
    match new_spans.binary_search(&(lo, mid)) {
        Ok(_) => unreachable!("move target span already present"),
        Err(pos) => new_spans.insert(pos, (lo, mid)),
    }
    let mut new_shape = Shape {
        slots: shape.slots.clone(),
        total: shape.total,
        spans: new_spans,
        children: BTreeMap::new(),
    };
    new_shape.rebuild_children();
    let dst = Space::enumerate(model, &new_shape);

    let mut m = SparseMap::zero(dst.dim(), src.dim());
    let new_ix = dst.shape.span_ix((lo, mid));
    for (j, charges) in src.labellings.iter().enumerate() {
        let a = charges[a_ix];
        let b = charges[b_ix];
        let c = charges[c_ix];
        let d = charges[parent_ix];
        let f = charges[r_ix];
        let mut base: Vec<Charge> = Vec::with_capacity(charges.len());
        base.extend_from_slice(&charges[..r_ix]);
        base.extend_from_slice(&charges[r_ix + 1..]);
        for &x in model.fusion_products(a, b) {
            if !model.admissible(x, c, d) {
                continue;
            }
            let amp = model.f_symbol(a, b, c, d, x, f);
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let mut target = base.clone();
            target.insert(new_ix, x);
            let i = dst
                .index_of(&target)
                .expect("admissible recoupled labelling present");
            m.push(i as usize, j, amp);
        }
    }
    (dst, m)
}

/// Canonicalizes a space to the caterpillar over the same slots, returning
/// the caterpillar space and the composed unitary into it.
pub(crate) fn canonicalize(model: &AnyonModel, src: &Space) -> (Space, SparseMap) {
    let mut space = src.clone();
    let mut total = SparseMap::identity(src.dim());
    loop {
        // First internal span (in span order) whose right child is internal.
        let mut found = None;
        for (&parent, &(_, right)) in space.shape.children.iter() {
            let (rl, rh) = space.shape.spans[right];
            if rl != rh {
                found = Some(parent);
                break;
            }
        }
        let Some(parent_ix) = found else { break };
        let (next, m) = assoc_move(model, &space, parent_ix);
        total = m.compose(&total);
        space = next;
    }
    debug_assert!(space.shape.is_caterpillar());
    (space, total)
}

/// Unitary relabelling map between two shapes over identical slots.
pub(crate) fn transform(model: &AnyonModel, from: &Space, to: &Space) -> Result<SparseMap, TreeError> {
    if from.shape.slots != to.shape.slots || from.shape.total != to.shape.total {
        return Err(TreeError::SlotMismatch);
    }
    if from.shape == to.shape {
        return Ok(SparseMap::identity(from.dim()));
    }
    let (_, m_from) = canonicalize(model, from);
    let (_, m_to) = canonicalize(model, to);
    Ok(m_to.adjoint().compose(&m_from))
}

// ---------------------------------------------------------------------------
// Public caterpillar API.
// ---------------------------------------------------------------------------

pub(crate) fn shape_of(tree: &TreeShape) -> Shape {
    Shape::caterpillar(tree.leaves.clone(), tree.total)
}

pub(crate) fn space_of(model: &AnyonModel, tree: &TreeShape) -> Space {
    Space::enumerate(model, &shape_of(tree))
}

pub(crate) fn public_labelling(space: &Space, labelling: usize) -> Labelling {
    let shape = &space.shape;
    let n = shape.leaf_count() as u32;
    let charges = &space.labellings[labelling];
    let leaves: Vec<Charge> = (0..n).map(|k| charges[shape.span_ix((k, k))]).collect();
    let internals: Vec<Charge> = (1..n.saturating_sub(1))
        .map(|k| charges[shape.span_ix((0, k))])
        .collect();
    let root = charges[shape.root_span_ix()];
    Labelling {
        leaves,
        internals,
        root,
    }
}

/// Span-aligned charge vector of a public labelling, suitable for
/// `Space::index_of`.
pub(crate) fn labelling_key(l: &Labelling) -> Vec<Charge> {
    // Canonical key order: leaves left to right, internals, root.
    let mut key = l.leaves.clone();
    key.extend_from_slice(&l.internals);
    if l.leaves.len() >= 2 {
        key.push(l.root);
    }
    key
}

/// All admissible labellings of a caterpillar tree, in lexicographic order
/// of (leaf charges, internal charges, root) by charge index.
pub fn enumerate_labellings(model: &AnyonModel, tree: &TreeShape) -> Vec<Labelling> {
    let space = space_of(model, tree);
    (0..space.dim()).map(|i| public_labelling(&space, i)).collect()
}

/// Unitary recoupling at caterpillar position `p` (1-based): maps labellings
/// of `tree` to labellings of the shape in which leaves `p` and `p+1` fuse
/// directly. Column order is `enumerate_labellings(tree)`; row order is the
/// target shape's enumeration, exposed by [`pair_fused_labellings`].
pub fn f_move_matrix(model: &AnyonModel, tree: &TreeShape, p: usize) -> Result<SparseMap, TreeError> {
    let (src, dst) = pair_spaces(model, tree, p)?;
    transform(model, &src, &dst)
}

/// Labellings of the pair-fused shape targeted by [`f_move_matrix`], in key
/// order (leaf charges, then remaining span charges ascending).
pub fn pair_fused_labellings(
    model: &AnyonModel,
    tree: &TreeShape,
    p: usize,
) -> Result<Vec<Vec<Charge>>, TreeError> {
    let (_, dst) = pair_spaces(model, tree, p)?;
    let key_ixs = dst.shape.key_span_ixs();
    Ok(dst.labellings.iter().map(|l| key_of(l, &key_ixs)).collect())
}

fn pair_spaces(model: &AnyonModel, tree: &TreeShape, p: usize) -> Result<(Space, Space), TreeError> {
    let n = tree.leaf_count();
    if p == 0 || p >= n {
        return Err(TreeError::PositionOutOfRange {
            position: p,
            leaves: n,
        });
    }
    let src = space_of(model, tree);
    let dst_shape = Shape::comb(tree.leaves.clone(), tree.total, &pair_ranges(n, p));
    let dst = Space::enumerate(model, &dst_shape);
    Ok((src, dst))
}

fn pair_ranges(n: usize, p: usize) -> Vec<Span> {
    let a = (p - 1) as u32;
    let mut ranges: Vec<Span> = Vec::new();
    for k in 0..n as u32 {
        if k == a {
            ranges.push((a, a + 1));
        } else if k != a + 1 {
            ranges.push((k, k));
        }
    }
    ranges
}

/// The unitary of the Artin generator `sigma_p^{sign}` on the labelling
/// space. Output labellings live on the tree with the two leaf slots
/// swapped, which is returned alongside.
pub fn braid_generator_matrix(
    model: &AnyonModel,
    tree: &TreeShape,
    p: usize,
    sign: i8,
) -> Result<(SparseMap, TreeShape), TreeError> {
    let n = tree.leaf_count();
    if p == 0 || p >= n {
        return Err(TreeError::PositionOutOfRange {
            position: p,
            leaves: n,
        });
    }
    let a = p - 1; // 0-based left leaf
    let mut swapped = tree.clone();
    swapped.leaves.swap(a, a + 1);

    let src = space_of(model, tree);
    let pair_shape = Shape::comb(tree.leaves.clone(), tree.total, &pair_ranges(n, p));
    let pair_src = Space::enumerate(model, &pair_shape);
    let to_pair = transform(model, &src, &pair_src)?;

    // R-phase, with the two leaf charges swapped in the labelling.
    let pair_dst_shape = Shape::comb(swapped.leaves.clone(), swapped.total, &pair_ranges(n, p));
    let pair_dst = Space::enumerate(model, &pair_dst_shape);
    let mut r_map = SparseMap::zero(pair_dst.dim(), pair_src.dim());
    let x_ix = pair_src.shape.span_ix((a as u32, a as u32));
    let y_ix = pair_src.shape.span_ix((a as u32 + 1, a as u32 + 1));
    let g_ix = pair_src.shape.span_ix((a as u32, a as u32 + 1));
    for (j, charges) in pair_src.labellings.iter().enumerate() {
        let x = charges[x_ix];
        let y = charges[y_ix];
        let g = charges[g_ix];
        let phase = if sign > 0 {
            model.r_symbol(x, y, g)
        } else {
            model.r_symbol(y, x, g).conj()
        };
        let mut target = charges.clone();
        target[x_ix] = y;
        target[y_ix] = x;
        let i = pair_dst.index_of(&target).expect("swapped labelling admissible");
        r_map.push(i as usize, j, phase);
    }

    let dst = space_of(model, &swapped);
    let from_pair = transform(model, &pair_dst, &dst)?;
    let m = from_pair.compose(&r_map.compose(&to_pair));
    Ok((m, swapped))
}

/// Ordered composition of braid generators for a whole word.
pub fn braid_word_matrix(
    model: &AnyonModel,
    tree: &TreeShape,
    word: &BraidWord,
) -> Result<(SparseMap, TreeShape), TreeError> {
    word.validate(tree.leaf_count())?;
    let mut current = tree.clone();
    let mut total = SparseMap::identity(space_of(model, tree).dim());
    for letter in &word.0 {
        let (m, next) = braid_generator_matrix(model, &current, letter.position, letter.sign)?;
        total = m.compose(&total);
        current = next;
    }
    Ok((total, current))
}
