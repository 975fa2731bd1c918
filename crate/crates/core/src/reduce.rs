//! Reduced density matrices for genus-0 bipartitions.
//!
//! The pipeline realizes the reduction as: change basis so that every
//! traced leaf sits at a tree extremity (the kept leaves keep their
//! reference order in a contiguous block), quantum-trace the extremities
//! one leaf at a time, then trace the boundary charges created by the cut,
//! which decoheres each kept section's total charge and contracts the
//! channels joining the sections.
//!
//! Regions are subsets of the reference arc. A region's connected
//! components (sections) are the maximal runs of its anyons; a region that
//! contains the manifold boundary is connected through it, so all of its
//! leaves form a single section. The sphere is treated as a disc with
//! trivial boundary charge, with the bipartition's boundary assignment
//! playing the role of the point at infinity.
//!
//! Traced leaves are moved out of the kept block by positive generators
//! (consistent front crossings). The split of traced leaves into
//! left-bound and right-bound blocks minimizes the crossing count, ties
//! resolved toward the right; among realizations the generator sequence is
//! the insertion-sort word, so any two choices differ only by exact braid
//! relations.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::SparseMap;
use crate::model::ChargeSlot;
use crate::ops::{
    conjugate_into, AnyonicOperator, BasisDescriptor, BoundarySpec, Manifold, OpsError,
    SystemGeometry, BOUNDARY_ID,
};
use crate::tree::{self, BraidLetter, BraidWord, Span, TreeShape};
use crate::{C64, PRUNE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Region {
    A,
    B,
}

impl Region {
    pub fn other(self) -> Region {
        match self {
            Region::A => Region::B,
            Region::B => Region::A,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::A => write!(f, "A"),
            Region::B => write!(f, "B"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReduceError {
    Ops(OpsError),
    UnassignedAnyon(String),
    UnknownAnyon(String),
    BoundaryRegionRequired,
    BoundaryRegionForbidden,
    RangeNotAtExtremity,
    SectionMismatch,
}

impl fmt::Display for ReduceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReduceError::Ops(e) => write!(f, "{e}"),
            ReduceError::UnassignedAnyon(id) => write!(f, "anyon `{id}` not assigned to a region"),
            ReduceError::UnknownAnyon(id) => write!(f, "bipartition names unknown anyon `{id}`"),
            ReduceError::BoundaryRegionRequired => {
                write!(f, "bipartition must assign the manifold boundary to a region")
            }
            ReduceError::BoundaryRegionForbidden => {
                write!(f, "bipartition assigns a boundary this system does not have")
            }
            ReduceError::RangeNotAtExtremity => {
                write!(f, "leaf range is not at a tree extremity; re-plan the reduction")
            }
            ReduceError::SectionMismatch => {
                write!(f, "operator sections do not match the region's sections")
            }
        }
    }
}

impl From<OpsError> for ReduceError {
    fn from(e: OpsError) -> Self {
        ReduceError::Ops(e)
    }
}

impl From<tree::TreeError> for ReduceError {
    fn from(e: tree::TreeError) -> Self {
        ReduceError::Ops(OpsError::Tree(e))
    }
}

/// Assignment of every anyon (and the boundary) to region A or B.
#[derive(Debug, Clone, PartialEq)]
pub struct Bipartition {
    pub region_of: BTreeMap<String, Region>,
    pub boundary_region: Option<Region>,
}

impl Bipartition {
    pub fn new(region_of: BTreeMap<String, Region>, boundary_region: Option<Region>) -> Self {
        Bipartition {
            region_of,
            boundary_region,
        }
    }

    pub fn validate(&self, geometry: &SystemGeometry) -> Result<(), ReduceError> {
        for (id, _) in geometry.anyons() {
            if !self.region_of.contains_key(id) {
                return Err(ReduceError::UnassignedAnyon(id.clone()));
            }
        }
        for id in self.region_of.keys() {
            if geometry.anyons().iter().all(|(a, _)| a != id) {
                return Err(ReduceError::UnknownAnyon(id.clone()));
            }
        }
        match geometry.manifold() {
            Manifold::Disc | Manifold::Sphere => {
                if self.boundary_region.is_none() {
                    return Err(ReduceError::BoundaryRegionRequired);
                }
            }
        }
        Ok(())
    }

    /// Region of a reference leaf index (anyon or boundary slot).
    fn region_of_leaf(&self, geometry: &SystemGeometry, leaf: usize) -> Region {
        if leaf < geometry.anyons().len() {
            self.region_of[&geometry.anyons()[leaf].0]
        } else {
            self.boundary_region.expect("validated")
        }
    }
}

/// Strategy for splitting traced leaves between the two extremities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStrategy {
    /// Minimal crossing count, ties toward the right extremity.
    Canonical,
    /// Move every traced leaf to the right extremity.
    AllRight,
    /// Move every traced leaf to the left extremity.
    AllLeft,
}

/// A deterministic reduction recipe: where to braid the traced leaves, how
/// many to trace from each extremity, and the kept region's sections.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionPlan {
    pub keep: Region,
    /// Reference leaf indices of the kept region, ascending.
    pub kept_refs: Vec<usize>,
    /// Basis in which the trace is carried out without braiding.
    pub target_basis: BasisDescriptor,
    /// Braid appended to the source descriptor to reach `target_basis`.
    pub embed_word: BraidWord,
    pub trace_left: usize,
    pub trace_right: usize,
    /// Whether the boundary slot is among the traced leaves.
    pub boundary_traced: bool,
}

/// Kept-region support: leaf ids and the free-rooted region tree, as used
/// by reduced density matrices and by the local operator basis. A region is
/// connected through the ambient manifold, so it carries a single total
/// boundary charge even when its anyons are scattered along the arc; its
/// tree is the caterpillar over the kept leaves in reference order. An
/// empty region has no tree at all (scalar operators).
pub fn region_support(
    geometry: &SystemGeometry,
    part: &Bipartition,
    keep: Region,
) -> Result<(Vec<Vec<String>>, Vec<TreeShape>), ReduceError> {
    part.validate(geometry)?;
    let kept_refs = kept_refs(geometry, part, keep);
    if kept_refs.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let ids = geometry.leaf_ids();
    let reference = geometry.reference_tree();
    let leaf_ids = vec![kept_refs.iter().map(|&r| ids[r].clone()).collect()];
    let sections = vec![TreeShape {
        leaves: kept_refs.iter().map(|&r| reference.leaves[r]).collect(),
        total: ChargeSlot::Free,
    }];
    Ok((leaf_ids, sections))
}

/// Kept reference indices, ascending.
fn kept_refs(geometry: &SystemGeometry, part: &Bipartition, keep: Region) -> Vec<usize> {
    let n = geometry.leaf_count();
    (0..n)
        .filter(|&r| part.region_of_leaf(geometry, r) == keep)
        .collect()
}

/// Plans the reduction of `(part, keep)` from the given basis. The plan
/// depends only on the descriptor and the bipartition.
pub fn plan_reduction(
    geometry: &SystemGeometry,
    basis: &BasisDescriptor,
    part: &Bipartition,
    keep: Region,
) -> Result<ReductionPlan, ReduceError> {
    plan_reduction_with(geometry, basis, part, keep, PlanStrategy::Canonical)
}

/// [`plan_reduction`] with an explicit extremity strategy; all strategies
/// produce reduced matrices with identical spectra.
pub fn plan_reduction_with(
    geometry: &SystemGeometry,
    basis: &BasisDescriptor,
    part: &Bipartition,
    keep: Region,
    strategy: PlanStrategy,
) -> Result<ReductionPlan, ReduceError> {
    part.validate(geometry)?;
    basis.validate(geometry)?;
    let n = geometry.leaf_count();
    let kept_refs = kept_refs(geometry, part, keep);
    let boundary_traced = geometry.boundary() == BoundarySpec::Free
        && !kept_refs.contains(&geometry.anyons().len());

    // Tree-position view of the bipartition.
    let kept_at: Vec<bool> = basis
        .tree_order
        .iter()
        .map(|&r| kept_refs.binary_search(&r).is_ok())
        .collect();
    let traced_pos: Vec<usize> = (0..n).filter(|&p| !kept_at[p]).collect();
    let kept_pos: Vec<usize> = (0..n).filter(|&p| kept_at[p]).collect();

    // Split the traced positions into a left-bound prefix and a right-bound
    // suffix, minimizing adjacent-crossing count.
    let kept_before: Vec<usize> = traced_pos
        .iter()
        .map(|&p| kept_pos.iter().filter(|&&k| k < p).count())
        .collect();
    let kept_after: Vec<usize> = kept_before.iter().map(|&c| kept_pos.len() - c).collect();
    let split = match strategy {
        PlanStrategy::AllRight => 0,
        PlanStrategy::AllLeft => traced_pos.len(),
        PlanStrategy::Canonical => {
            let mut best = (usize::MAX, 0);
            for k in 0..=traced_pos.len() {
                let cost: usize = kept_before[..k].iter().sum::<usize>()
                    + kept_after[k..].iter().sum::<usize>();
                if cost < best.0 {
                    best = (cost, k);
                }
            }
            best.1
        }
    };

    // Target order: left-bound traced leaves (tree order), kept leaves in
    // reference order, right-bound traced leaves (tree order).
    let mut target_order: Vec<usize> = Vec::with_capacity(n);
    target_order.extend(traced_pos[..split].iter().map(|&p| basis.tree_order[p]));
    target_order.extend(kept_refs.iter().copied());
    target_order.extend(traced_pos[split..].iter().map(|&p| basis.tree_order[p]));

    let embed_word = sort_word(&basis.tree_order, &target_order, &kept_refs);
    let target_basis = basis.after(&embed_word, geometry)?;
    debug_assert_eq!(target_basis.tree_order, target_order);

    Ok(ReductionPlan {
        keep,
        kept_refs,
        target_basis,
        embed_word,
        trace_left: split,
        trace_right: traced_pos.len() - split,
        boundary_traced,
    })
}

/// Insertion-sort braid word rearranging `from` into `to`; the number of
/// letters is the inversion count of the permutation. Crossings between a
/// traced and a kept strand always put the traced strand in front, matching
/// a trace closure performed consistently on one side of the diagram;
/// kept-kept crossings take the positive sign (a gauge inside the region's
/// local operator space).
fn sort_word(from: &[usize], to: &[usize], kept_refs: &[usize]) -> BraidWord {
    let rank: BTreeMap<usize, usize> = to.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let mut order: Vec<usize> = from.to_vec();
    let mut current: Vec<usize> = from.iter().map(|r| rank[r]).collect();
    let is_kept = |r: usize| kept_refs.binary_search(&r).is_ok();
    let mut letters = Vec::new();
    for target in 0..current.len() {
        let at = current.iter().position(|&r| r == target).expect("permutation");
        for p in (target..at).rev() {
            // The strand at p + 1 moves left past the strand at p.
            let sign = if !is_kept(order[p]) {
                1
            } else if !is_kept(order[p + 1]) {
                -1
            } else {
                1
            };
            current.swap(p, p + 1);
            order.swap(p, p + 1);
            letters.push(BraidLetter {
                position: p + 1,
                sign,
            });
        }
    }
    BraidWord(letters)
}

fn conj_map(
    coeff: &BTreeMap<(u32, u32), C64>,
    t: &SparseMap,
) -> BTreeMap<(u32, u32), C64> {
    let mut out: BTreeMap<(u32, u32), C64> = BTreeMap::new();
    for (&(k, b), &v) in coeff {
        for &(i, r1) in t.column(k as usize) {
            for &(j, r2) in t.column(b as usize) {
                let val = r1 * v * r2.conj();
                *out.entry((i, j)).or_insert(C64::new(0.0, 0.0)) += val;
            }
        }
    }
    out.retain(|_, v| v.norm_sqr() > PRUNE_TOL * PRUNE_TOL);
    out
}

/// Quantum trace over a contiguous leaf range at a tree extremity of a
/// single-section operator. The weight of a traced step is the ratio of
/// quantum dimensions of the old and new roots, which is exactly the factor
/// making `qTr(rho_A O) = qTr(rho pad(O))` hold for padded operators.
pub fn partial_trace_leaves(
    rho: &AnyonicOperator,
    first_leaf: usize,
    count: usize,
) -> Result<AnyonicOperator, ReduceError> {
    if rho.sections().len() != 1 {
        return Err(ReduceError::SectionMismatch);
    }
    let n = rho.sections()[0].leaf_count();
    if first_leaf + count > n {
        return Err(ReduceError::RangeNotAtExtremity);
    }
    if count == 0 {
        return Ok(rho.clone());
    }
    if first_leaf == 0 && count < n {
        let mut out = rho.clone();
        for _ in 0..count {
            out = trace_leftmost(&out)?;
        }
        Ok(out)
    } else if first_leaf + count == n {
        let mut out = rho.clone();
        for _ in 0..count {
            out = trace_rightmost(&out)?;
        }
        Ok(out)
    } else {
        Err(ReduceError::RangeNotAtExtremity)
    }
}

/// Region-form operator over explicit sections with the given leaf ids.
fn section_operator(
    model: Arc<crate::model::AnyonModel>,
    leaf_ids: Vec<Vec<String>>,
    sections: Vec<TreeShape>,
) -> AnyonicOperator {
    let m = sections.iter().map(|s| s.leaf_count()).sum::<usize>();
    AnyonicOperator::zero_sections(
        model,
        leaf_ids,
        sections,
        None,
        BasisDescriptor {
            tree_order: (0..m).collect(),
            word: BraidWord::identity(),
        },
    )
}

fn trace_rightmost(rho: &AnyonicOperator) -> Result<AnyonicOperator, ReduceError> {
    let tree = &rho.sections()[0];
    let n = tree.leaf_count();
    let model = rho.model().clone();
    let ids = rho.section_leaf_ids()[0].clone();
    if n == 1 {
        // Closing the final loop leaves a scalar (zero-section) operator.
        let mut out = section_operator(model.clone(), Vec::new(), Vec::new());
        let mut scalar = C64::new(0.0, 0.0);
        for (k, b, v) in rho.entries() {
            if k == b {
                scalar += v * model.qdim(rho.sector_of(k)[0]);
            }
        }
        if scalar.norm_sqr() > PRUNE_TOL * PRUNE_TOL {
            out.set(0, 0, scalar).expect("scalar entry");
        }
        return Ok(out);
    }
    let sub = TreeShape {
        leaves: tree.leaves[..n - 1].to_vec(),
        total: ChargeSlot::Free,
    };
    let mut out = section_operator(model.clone(), vec![ids[..n - 1].to_vec()], vec![sub]);
    let space = rho.spaces()[0].clone();
    let out_space = out.spaces()[0].clone();
    let last_leaf: Span = (n as u32 - 1, n as u32 - 1);
    let prev_root: Span = if n == 2 { (0, 0) } else { (0, n as u32 - 2) };
    let mut staging: BTreeMap<(u32, u32), C64> = BTreeMap::new();
    for (k, b, v) in rho.entries() {
        let (k, b) = (k as usize, b as usize);
        if space.charge(k, last_leaf) != space.charge(b, last_leaf) {
            continue;
        }
        let r = space.charge(k, prev_root);
        if r != space.charge(b, prev_root) {
            continue;
        }
        let c = space.root_charge(k);
        let weight = model.qdim(c) / model.qdim(r);
        let sub_key = |l: usize| -> Vec<crate::model::Charge> {
            // (leaves.., internals.., root) of the remaining caterpillar.
            let mut key = Vec::with_capacity(2 * (n - 1) - 1);
            for leaf in 0..n as u32 - 1 {
                key.push(space.charge(l, (leaf, leaf)));
            }
            if n - 1 >= 2 {
                for j in 1..n as u32 - 2 {
                    key.push(space.charge(l, (0, j)));
                }
                key.push(space.charge(l, prev_root));
            }
            key
        };
        let ik = out_space.index_of_key(&sub_key(k)).expect("traced labelling");
        let ib = out_space.index_of_key(&sub_key(b)).expect("traced labelling");
        *staging.entry((ik, ib)).or_insert(C64::new(0.0, 0.0)) += v * weight;
    }
    for ((ik, ib), v) in staging {
        if v.norm_sqr() > PRUNE_TOL * PRUNE_TOL {
            out.set(ik, ib, v).expect("sector-diagonal by construction");
        }
    }
    Ok(out)
}

fn trace_leftmost(rho: &AnyonicOperator) -> Result<AnyonicOperator, ReduceError> {
    let tree = &rho.sections()[0];
    let n = tree.leaf_count();
    let model = rho.model().clone();
    let ids = rho.section_leaf_ids()[0].clone();
    if n == 1 {
        return trace_rightmost(rho);
    }
    // Recouple so the first leaf attaches at the final fusion: shape
    // (l0, caterpillar(l1..)). In that shape the trace is diagonal.
    let src_space = rho.spaces()[0].clone();
    let rot_shape = tree::Shape::comb(
        tree.leaves.clone(),
        tree.total,
        &[(0, 0), (1, n as u32 - 1)],
    );
    let rot_space = tree::Space::enumerate(&model, &rot_shape);
    let t = tree::transform(&model, &src_space, &rot_space).map_err(OpsError::Tree)?;
    let rotated = {
        let coeff: BTreeMap<(u32, u32), C64> = rho.entries().map(|(k, b, v)| ((k, b), v)).collect();
        conj_map(&coeff, &t)
    };

    let sub = TreeShape {
        leaves: tree.leaves[1..].to_vec(),
        total: ChargeSlot::Free,
    };
    let mut out = section_operator(model.clone(), vec![ids[1..].to_vec()], vec![sub]);
    let out_space = out.spaces()[0].clone();
    let first_leaf: Span = (0, 0);
    let sub_root: Span = (1, n as u32 - 1);
    let mut staging: BTreeMap<(u32, u32), C64> = BTreeMap::new();
    for (&(k, b), &v) in &rotated {
        let (k, b) = (k as usize, b as usize);
        if rot_space.charge(k, first_leaf) != rot_space.charge(b, first_leaf) {
            continue;
        }
        let r = rot_space.charge(k, sub_root);
        if r != rot_space.charge(b, sub_root) {
            continue;
        }
        let c = rot_space.root_charge(k);
        let weight = model.qdim(c) / model.qdim(r);
        let sub_key = |l: usize| -> Vec<crate::model::Charge> {
            let mut key = Vec::with_capacity(2 * (n - 1) - 1);
            for leaf in 1..n as u32 {
                key.push(rot_space.charge(l, (leaf, leaf)));
            }
            if n - 1 >= 2 {
                for j in 2..n as u32 - 1 {
                    key.push(rot_space.charge(l, (1, j)));
                }
                key.push(rot_space.charge(l, sub_root));
            }
            key
        };
        let ik = out_space.index_of_key(&sub_key(k)).expect("traced labelling");
        let ib = out_space.index_of_key(&sub_key(b)).expect("traced labelling");
        *staging.entry((ik, ib)).or_insert(C64::new(0.0, 0.0)) += v * weight;
    }
    for ((ik, ib), v) in staging {
        if v.norm_sqr() > PRUNE_TOL * PRUNE_TOL {
            out.set(ik, ib, v).expect("sector-diagonal by construction");
        }
    }
    Ok(out)
}

/// Brings a traced operator into its final local form: the boundary
/// charges created by the cut collapse to the single total charge line at
/// the root, so the result is the same coefficient data re-indexed into
/// the free-rooted region space, block-diagonal in that total. Boundary
/// coherences cannot survive since the quantum trace connects ket and bra
/// root lines.
pub fn trace_boundary_charges(rho: &AnyonicOperator) -> Result<AnyonicOperator, ReduceError> {
    if rho.sections().is_empty() {
        // Scalar operator: already fully traced.
        return Ok(rho.clone());
    }
    if rho.sections().len() != 1 {
        return Err(ReduceError::SectionMismatch);
    }
    let tree = &rho.sections()[0];
    let model = rho.model().clone();
    let free = TreeShape {
        leaves: tree.leaves.clone(),
        total: ChargeSlot::Free,
    };
    let mut out = section_operator(model, rho.section_leaf_ids().to_vec(), vec![free]);
    let src = rho.spaces()[0].clone();
    let dst = out.spaces()[0].clone();
    for (k, b, v) in rho.entries() {
        let reindex = |l: u32| {
            dst.index_of_key(&reorder_key(&src, &src.labellings[l as usize]))
                .expect("labelling present in free-rooted space")
        };
        out.set(reindex(k), reindex(b), v).expect("sector-diagonal");
    }
    Ok(out)
}

/// Re-orders a raw span-aligned labelling of `src` into a caterpillar key
/// (leaves, internals, root).
fn reorder_key(src: &tree::Space, charges: &[crate::model::Charge]) -> Vec<crate::model::Charge> {
    let shape = &src.shape;
    let n = shape.leaf_count() as u32;
    let mut key = Vec::with_capacity(charges.len());
    for leaf in 0..n {
        key.push(charges[shape.span_ix((leaf, leaf))]);
    }
    if n >= 2 {
        for j in 1..n - 1 {
            key.push(charges[shape.span_ix((0, j))]);
        }
        key.push(charges[shape.span_ix((0, n - 1))]);
    }
    key
}

/// Constructs the reduced density matrix of the kept region: the unique
/// operator in the region's local space whose weighted pairing reproduces
/// every local expectation value of `rho`.
pub fn reduced_density_matrix(
    rho: &AnyonicOperator,
    part: &Bipartition,
    keep: Region,
) -> Result<AnyonicOperator, ReduceError> {
    reduced_density_matrix_with(rho, part, keep, PlanStrategy::Canonical)
}

pub fn reduced_density_matrix_with(
    rho: &AnyonicOperator,
    part: &Bipartition,
    keep: Region,
    strategy: PlanStrategy,
) -> Result<AnyonicOperator, ReduceError> {
    let geometry = rho
        .geometry()
        .ok_or(ReduceError::Ops(OpsError::RegionMismatch))?
        .clone();
    let plan = plan_reduction_with(&geometry, rho.basis(), part, keep, strategy)?;
    let aligned = rho.change_basis(&plan.target_basis)?;
    let n = geometry.leaf_count();
    let mut traced = partial_trace_leaves(&aligned, n - plan.trace_right, plan.trace_right)?;
    if plan.trace_left > 0 {
        traced = partial_trace_leaves(&traced, 0, plan.trace_left)?;
    }
    trace_boundary_charges(&traced)
}

/// Precomputed embedding of a region's operator space into the system:
/// the comb shape with the kept sections as subtrees, the index of split
/// labellings by (rest charges, section labellings), and the recoupling
/// back to the target caterpillar.
pub(crate) struct Embedding {
    pub plan: ReductionPlan,
    pub leaf_ids: Vec<Vec<String>>,
    pub sections: Vec<TreeShape>,
    pub split_space: tree::Space,
    /// Unitary from the split shape to the target caterpillar.
    pub to_target: SparseMap,
    target_space: tree::Space,
    /// rest-charges -> (section labelling tuple -> split index).
    groups: BTreeMap<Vec<crate::model::Charge>, BTreeMap<Vec<u32>, u32>>,
    obs_spaces: Vec<tree::Space>,
}

impl Embedding {
    pub fn new(
        geometry: &SystemGeometry,
        basis: &BasisDescriptor,
        part: &Bipartition,
        keep: Region,
    ) -> Result<Self, ReduceError> {
        let plan = plan_reduction(geometry, basis, part, keep)?;
        let (leaf_ids, sections) = region_support(geometry, part, keep)?;
        let model = geometry.model().clone();
        let target_tree = geometry.tree_in_basis(&plan.target_basis)?;

        // Comb shape: traced leaves as singletons around the kept sections.
        let mut ranges: Vec<Span> = Vec::new();
        let mut pos = 0u32;
        for _ in 0..plan.trace_left {
            ranges.push((pos, pos));
            pos += 1;
        }
        for sec in sections.iter() {
            let hi = pos + sec.leaf_count() as u32 - 1;
            ranges.push((pos, hi));
            pos = hi + 1;
        }
        for _ in 0..plan.trace_right {
            ranges.push((pos, pos));
            pos += 1;
        }
        let split_shape = tree::Shape::comb(target_tree.leaves.clone(), target_tree.total, &ranges);
        let split_space = tree::Space::enumerate(&model, &split_shape);

        let section_ranges: Vec<Span> =
            ranges[plan.trace_left..plan.trace_left + sections.len()].to_vec();
        let mut section_spans: Vec<Vec<Span>> = Vec::new();
        for &(s, e) in &section_ranges {
            let mut spans: Vec<Span> = (s..=e).map(|k| (k, k)).collect();
            for j in (s + 1)..=e {
                spans.push((s, j));
            }
            spans.sort_unstable();
            section_spans.push(spans);
        }
        let rest_spans: Vec<Span> = split_shape
            .spans
            .iter()
            .copied()
            .filter(|span| !section_spans.iter().any(|spans| spans.binary_search(span).is_ok()))
            .collect();

        let obs_spaces: Vec<tree::Space> = sections
            .iter()
            .map(|s| tree::Space::enumerate(&model, &tree::Shape::caterpillar(s.leaves.clone(), s.total)))
            .collect();
        let section_key = |l: usize, sec_ix: usize| -> Vec<crate::model::Charge> {
            let (s, e) = section_ranges[sec_ix];
            let mut key = Vec::new();
            for leaf in s..=e {
                key.push(split_space.charge(l, (leaf, leaf)));
            }
            if e > s {
                for j in (s + 1)..e {
                    key.push(split_space.charge(l, (s, j)));
                }
                key.push(split_space.charge(l, (s, e)));
            }
            key
        };
        let mut groups: BTreeMap<Vec<crate::model::Charge>, BTreeMap<Vec<u32>, u32>> =
            BTreeMap::new();
        for l in 0..split_space.dim() {
            let rest: Vec<crate::model::Charge> = rest_spans
                .iter()
                .map(|&s| split_space.charge(l, s))
                .collect();
            let mut parts: Vec<u32> = Vec::with_capacity(sections.len());
            let mut ok = true;
            for (sec_ix, space) in obs_spaces.iter().enumerate() {
                match space.index_of_key(&section_key(l, sec_ix)) {
                    Some(ix) => parts.push(ix),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                groups.entry(rest).or_default().insert(parts, l as u32);
            }
        }

        let target_space = tree::space_of(&model, &target_tree);
        let to_target = tree::transform(&model, &split_space, &target_space).map_err(OpsError::Tree)?;
        Ok(Embedding {
            plan,
            leaf_ids,
            sections,
            split_space,
            to_target,
            target_space,
            groups,
            obs_spaces,
        })
    }

    fn check_obs(&self, obs: &AnyonicOperator) -> Result<(), OpsError> {
        if self.leaf_ids != obs.section_leaf_ids() || self.sections != obs.sections() {
            return Err(OpsError::RegionMismatch);
        }
        Ok(())
    }

    /// Split-space coefficients of the padded operator: `obs` on the
    /// section subtrees, the identity on everything else.
    pub fn pad(&self, obs: &AnyonicOperator) -> Result<BTreeMap<(u32, u32), C64>, OpsError> {
        self.check_obs(obs)?;
        let mut split_coeff: BTreeMap<(u32, u32), C64> = BTreeMap::new();
        for (ket, bra, v) in obs.entries() {
            let kets = obs.split_index(ket);
            let bras = obs.split_index(bra);
            for members in self.groups.values() {
                if let (Some(&ik), Some(&ib)) = (members.get(&kets), members.get(&bras)) {
                    *split_coeff.entry((ik, ib)).or_insert(C64::new(0.0, 0.0)) += v;
                }
            }
        }
        Ok(split_coeff)
    }

    /// The padded operator in the target caterpillar basis.
    pub fn embed_in_target(
        &self,
        obs: &AnyonicOperator,
        geometry: &Arc<SystemGeometry>,
    ) -> Result<AnyonicOperator, OpsError> {
        let split_coeff = self.pad(obs)?;
        let in_target = conj_map(&split_coeff, &self.to_target);
        let mut op = AnyonicOperator::zero_on(geometry.clone(), self.plan.target_basis.clone())?;
        for ((k, b), v) in in_target {
            op.set(k, b, v)?;
        }
        Ok(op)
    }

    /// The system operator brought from the split shape down to the given
    /// density matrix: `rho` expressed in the split shape's labelling space.
    pub fn rho_in_split(&self, rho: &AnyonicOperator) -> Result<BTreeMap<(u32, u32), C64>, OpsError> {
        let aligned = rho.change_basis(&self.plan.target_basis)?;
        let coeff: BTreeMap<(u32, u32), C64> =
            aligned.entries().map(|(k, b, v)| ((k, b), v)).collect();
        let _ = &self.target_space;
        Ok(conj_map(&coeff, &self.to_target.adjoint()))
    }
}

/// The bipartition in which `region_ids` (and the boundary, when listed as
/// [`BOUNDARY_ID`]) form region A.
pub(crate) fn part_from_ids(
    geometry: &SystemGeometry,
    region_ids: &[String],
) -> Result<Bipartition, OpsError> {
    let mut region_of = BTreeMap::new();
    let mut boundary_region = Some(Region::B);
    for (id, _) in geometry.anyons() {
        region_of.insert(id.clone(), Region::B);
    }
    for id in region_ids {
        if id == BOUNDARY_ID {
            boundary_region = Some(Region::A);
            continue;
        }
        if !region_of.contains_key(id) {
            return Err(OpsError::UnknownAnyonId(id.clone()));
        }
        region_of.insert(id.clone(), Region::A);
    }
    Ok(Bipartition::new(region_of, boundary_region))
}

/// Embeds an operator local to a region into the full system: the region
/// operator acts on its own leaves and the identity pads everything else,
/// conjugated into the requested basis through the plan's embedding braid.
/// The region is implicit in the observable's leaf ids.
pub fn embed_local_operator(
    obs: &AnyonicOperator,
    geometry: &Arc<SystemGeometry>,
    basis: &BasisDescriptor,
) -> Result<AnyonicOperator, OpsError> {
    let mut region_ids: Vec<String> = Vec::new();
    for ids in obs.section_leaf_ids() {
        region_ids.extend(ids.iter().cloned());
    }
    let part = part_from_ids(geometry, &region_ids)?;
    let embedding = Embedding::new(geometry, basis, &part, Region::A).map_err(ops_err)?;
    embedding
        .embed_in_target(obs, geometry)?
        .change_basis(basis)
}

fn ops_err(e: ReduceError) -> OpsError {
    match e {
        ReduceError::Ops(e) => e,
        _ => OpsError::RegionMismatch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Charge};
    use crate::ops::{outer_product, AnyonicState};
    use crate::tree::Labelling;

    fn fib_four_tau() -> Arc<SystemGeometry> {
        let model = Arc::new(builtin_model("fibonacci", None).unwrap());
        let tau = model.charge_by_label("tau").unwrap();
        let anyons = (1..=4)
            .map(|i| (alloc::format!("t{i}"), ChargeSlot::Fixed(tau)))
            .collect();
        Arc::new(
            SystemGeometry::new(model, Manifold::Disc, anyons, BoundarySpec::Fixed(Charge(0)))
                .unwrap(),
        )
    }

    fn bipartition(pairs: &[(&str, Region)], boundary: Region) -> Bipartition {
        Bipartition::new(
            pairs.iter().map(|(id, r)| (String::from(*id), *r)).collect(),
            Some(boundary),
        )
    }

    #[test]
    fn plan_keeps_leftmost_contiguous_region_without_braiding() {
        let geometry = fib_four_tau();
        let part = bipartition(
            &[
                ("t1", Region::A),
                ("t2", Region::A),
                ("t3", Region::B),
                ("t4", Region::B),
            ],
            Region::B,
        );
        let plan = plan_reduction(&geometry, &geometry.reference_descriptor(), &part, Region::A).unwrap();
        assert!(plan.embed_word.0.is_empty());
        assert_eq!(plan.trace_left, 0);
        assert_eq!(plan.trace_right, 2);
        assert_eq!(plan.kept_refs, vec![0, 1]);
    }

    #[test]
    fn plan_braids_interleaved_region_and_counts_sections() {
        // Keep {1, 2, 4} out of six: anyon 3 must be braided out.
        let model = Arc::new(builtin_model("ising", None).unwrap());
        let sigma = model.charge_by_label("sigma").unwrap();
        let anyons = (1..=6)
            .map(|i| (alloc::format!("a{i}"), ChargeSlot::Fixed(sigma)))
            .collect();
        let geometry = Arc::new(
            SystemGeometry::new(model, Manifold::Disc, anyons, BoundarySpec::Fixed(Charge(0)))
                .unwrap(),
        );
        let part = bipartition(
            &[
                ("a1", Region::A),
                ("a2", Region::A),
                ("a3", Region::B),
                ("a4", Region::A),
                ("a5", Region::B),
                ("a6", Region::B),
            ],
            Region::B,
        );
        let plan = plan_reduction(&geometry, &geometry.reference_descriptor(), &part, Region::A).unwrap();
        assert!(!plan.embed_word.0.is_empty());
        // Moving anyon 3 right past anyon 4 is a single crossing.
        assert_eq!(plan.embed_word.0.len(), 1);
        assert_eq!(plan.target_basis.tree_order, vec![0, 1, 3, 2, 4, 5]);

        // Keeping the complement traces the split region from both ends.
        let plan_b = plan_reduction(&geometry, &geometry.reference_descriptor(), &part, Region::B).unwrap();
        assert_eq!(plan_b.trace_left + plan_b.trace_right, 3);
        assert_eq!(plan_b.kept_refs, vec![2, 4, 5]);
    }

    #[test]
    fn factorized_fibonacci_state_reduces_to_pure_state() {
        // |(12) -> 1, (34) -> 1>: tracing leaves {3, 4} leaves a pure state
        // in the trivial sector with quantum trace one.
        let geometry = fib_four_tau();
        let model = geometry.model().clone();
        let one = model.charge_by_label("1").unwrap();
        let tau = model.charge_by_label("tau").unwrap();
        let basis = geometry.reference_descriptor();
        let labelling = Labelling {
            leaves: vec![tau; 4],
            internals: vec![one, tau],
            root: one,
        };
        let psi = AnyonicState::new(geometry.clone(), basis, &[(labelling, C64::new(1.0, 0.0))]).unwrap();
        let rho = outer_product(&psi, &psi).unwrap();
        let part = bipartition(
            &[
                ("t1", Region::A),
                ("t2", Region::A),
                ("t3", Region::B),
                ("t4", Region::B),
            ],
            Region::B,
        );
        let rho_a = reduced_density_matrix(&rho, &part, Region::A).unwrap();
        assert!((rho_a.qtrace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(rho_a.sections().len(), 1);
        // Rank one: a single diagonal entry in the trivial sector.
        let entries: Vec<_> = rho_a.entries().collect();
        assert_eq!(entries.len(), 1);
        let (k, b, v) = entries[0];
        assert_eq!(k, b);
        assert_eq!(rho_a.sector_of(k), vec![one]);
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn trace_nothing_is_identity_map() {
        let geometry = fib_four_tau();
        let psi = {
            let basis = geometry.reference_descriptor();
            let tree = geometry.tree_in_basis(&basis).unwrap();
            let space = tree::space_of(geometry.model(), &tree);
            let amp = vec![C64::new(1.0 / crate::math::sqrt(space.dim() as f64), 0.0); space.dim()];
            AnyonicState::from_dense(geometry.clone(), basis, &amp).unwrap()
        };
        let rho = outer_product(&psi, &psi).unwrap();
        let same = partial_trace_leaves(&rho, 0, 0).unwrap();
        assert_eq!(same.entry_count(), rho.entry_count());
    }

    #[test]
    fn keep_whole_system_preserves_qtrace_and_coefficients() {
        let geometry = fib_four_tau();
        let psi = {
            let basis = geometry.reference_descriptor();
            let tree = geometry.tree_in_basis(&basis).unwrap();
            let space = tree::space_of(geometry.model(), &tree);
            let amp = vec![C64::new(1.0 / crate::math::sqrt(space.dim() as f64), 0.0); space.dim()];
            AnyonicState::from_dense(geometry.clone(), basis, &amp).unwrap()
        };
        let rho = outer_product(&psi, &psi).unwrap();
        let part = bipartition(
            &[
                ("t1", Region::A),
                ("t2", Region::A),
                ("t3", Region::A),
                ("t4", Region::A),
            ],
            Region::A,
        );
        let rho_a = reduced_density_matrix(&rho, &part, Region::A).unwrap();
        assert!((rho_a.qtrace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        // Same coefficients, now in the free-rooted region space.
        assert_eq!(rho_a.entry_count(), rho.entry_count());

        // The empty complement reduces to the one-dimensional scalar.
        let rho_b = reduced_density_matrix(&rho, &part, Region::B).unwrap();
        assert_eq!(rho_b.sections().len(), 0);
        assert!((rho_b.qtrace() - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn embed_identity_of_region_is_identity_on_system() {
        let geometry = fib_four_tau();
        let part = bipartition(
            &[
                ("t1", Region::A),
                ("t2", Region::B),
                ("t3", Region::B),
                ("t4", Region::A),
            ],
            Region::B,
        );
        let (ids, sections) = region_support(&geometry, &part, Region::A).unwrap();
        assert_eq!(sections.len(), 1);
        assert_eq!(sections[0].leaf_count(), 2);
        let mut obs = AnyonicOperator::zero_sections(
            geometry.model().clone(),
            ids,
            sections,
            None,
            BasisDescriptor {
                tree_order: vec![0, 1],
                word: BraidWord::identity(),
            },
        );
        for i in 0..obs.dim() as u32 {
            obs.set(i, i, C64::new(1.0, 0.0)).unwrap();
        }
        let basis = geometry.reference_descriptor();
        let embedded = embed_local_operator(&obs, &geometry, &basis).unwrap();
        let id = AnyonicOperator::identity_on(geometry.clone(), basis).unwrap();
        for (k, b, v) in id.entries() {
            assert!((embedded.get(k, b) - v).norm() < 1e-12);
        }
        assert_eq!(embedded.entry_count(), id.entry_count());
    }

    #[test]
    fn bipartition_validation_errors() {
        let geometry = fib_four_tau();
        let mut map = BTreeMap::new();
        map.insert(String::from("t1"), Region::A);
        let part = Bipartition::new(map.clone(), Some(Region::B));
        assert!(matches!(
            part.validate(&geometry),
            Err(ReduceError::UnassignedAnyon(_))
        ));
        for i in 2..=4 {
            map.insert(alloc::format!("t{i}"), Region::B);
        }
        let part = Bipartition::new(map.clone(), None);
        assert!(matches!(
            part.validate(&geometry),
            Err(ReduceError::BoundaryRegionRequired)
        ));
        map.insert(String::from("zz"), Region::A);
        let part = Bipartition::new(map, Some(Region::B));
        assert!(matches!(part.validate(&geometry), Err(ReduceError::UnknownAnyon(_))));
    }
}
