//! States, operators and density matrices on a genus-0 anyonic system.
//!
//! Every state and operator carries a [`BasisDescriptor`]: the fusion-tree
//! leaf order together with the braid word that transports the reference
//! arrangement (anyons in declaration order along a fixed reference arc)
//! into that leaf order. Two identical-looking trees with different words
//! denote different physical objects, and objects with different
//! descriptors are never combined without an explicit [`change_basis`].
//!
//! Operators on a region that is disjoint on the manifold are stored as a
//! forest: one caterpillar section per connected component, each with a
//! free root (the section's boundary charge). The quantum trace weights a
//! diagonal entry by the product of the quantum dimensions of its section
//! roots. Superselection is structural: coefficients exist only between
//! labellings with identical section root tuples.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::SparseMap;
use crate::model::{AnyonModel, Charge, ChargeSlot, ModelError};
use crate::tree::{
    braid_word_matrix, labelling_key, public_labelling, space_of, Labelling, Space, TreeError,
    TreeShape,
};
use crate::{C64, DENSITY_TOL, PRUNE_TOL};

pub use crate::reduce::embed_local_operator;
pub use crate::tree::{BraidLetter, BraidWord};

#[derive(Debug, Clone, PartialEq)]
pub enum OpsError {
    Model(ModelError),
    Tree(TreeError),
    DuplicateAnyonId(String),
    ReservedAnyonId(String),
    UnknownAnyonId(String),
    BoundaryOnSphere,
    GeometryMismatch,
    BasisMismatch,
    DescriptorMismatch,
    UnknownLabelling,
    CrossSectorCoefficient,
    NotDensityMatrix(&'static str),
    RegionMismatch,
}

impl fmt::Display for OpsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpsError::Model(e) => write!(f, "{e}"),
            OpsError::Tree(e) => write!(f, "{e}"),
            OpsError::DuplicateAnyonId(id) => write!(f, "duplicate anyon id `{id}`"),
            OpsError::ReservedAnyonId(id) => write!(f, "anyon id `{id}` is reserved"),
            OpsError::UnknownAnyonId(id) => write!(f, "unknown anyon id `{id}`"),
            OpsError::BoundaryOnSphere => write!(f, "a sphere has no boundary slot"),
            OpsError::GeometryMismatch => write!(f, "operands live on different systems"),
            OpsError::BasisMismatch => write!(f, "operands carry different basis descriptors"),
            OpsError::DescriptorMismatch => {
                write!(f, "braid word endpoint does not match the tree order")
            }
            OpsError::UnknownLabelling => write!(f, "labelling is not admissible for this basis"),
            OpsError::CrossSectorCoefficient => {
                write!(f, "coefficient couples different total-charge sectors")
            }
            OpsError::NotDensityMatrix(why) => write!(f, "not a density matrix: {why}"),
            OpsError::RegionMismatch => write!(f, "operator does not fit the region"),
        }
    }
}

impl From<ModelError> for OpsError {
    fn from(e: ModelError) -> Self {
        OpsError::Model(e)
    }
}

impl From<TreeError> for OpsError {
    fn from(e: TreeError) -> Self {
        OpsError::Tree(e)
    }
}

/// Reserved leaf id of the free boundary-charge slot of a disc.
pub const BOUNDARY_ID: &str = "boundary";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manifold {
    Disc,
    Sphere,
}

/// Boundary handling of the disc. A fixed boundary charge `b` pins the
/// anyon total to `dual(b)` and adds no leaf; a free boundary becomes an
/// ordinary extra leaf at the right end of the reference order. The sphere
/// carries neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySpec {
    None,
    Fixed(Charge),
    Free,
}

/// A genus-0 system: model, manifold, anyons in reference-manifold order
/// (left to right along the reference arc), and the boundary slot.
#[derive(Debug, Clone)]
pub struct SystemGeometry {
    model: Arc<AnyonModel>,
    manifold: Manifold,
    anyons: Vec<(String, ChargeSlot)>,
    boundary: BoundarySpec,
}

impl PartialEq for SystemGeometry {
    fn eq(&self, other: &Self) -> bool {
        *self.model == *other.model
            && self.manifold == other.manifold
            && self.anyons == other.anyons
            && self.boundary == other.boundary
    }
}

impl SystemGeometry {
    pub fn new(
        model: Arc<AnyonModel>,
        manifold: Manifold,
        anyons: Vec<(String, ChargeSlot)>,
        boundary: BoundarySpec,
    ) -> Result<Self, OpsError> {
        if manifold == Manifold::Sphere && boundary != BoundarySpec::None {
            return Err(OpsError::BoundaryOnSphere);
        }
        let mut seen: Vec<&str> = Vec::new();
        for (id, _) in &anyons {
            if id == BOUNDARY_ID {
                return Err(OpsError::ReservedAnyonId(id.clone()));
            }
            if seen.contains(&id.as_str()) {
                return Err(OpsError::DuplicateAnyonId(id.clone()));
            }
            seen.push(id);
        }
        if anyons.is_empty() && boundary != BoundarySpec::Free {
            return Err(OpsError::Tree(TreeError::EmptyTree));
        }
        Ok(SystemGeometry {
            model,
            manifold,
            anyons,
            boundary,
        })
    }

    pub fn model(&self) -> &Arc<AnyonModel> {
        &self.model
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn anyons(&self) -> &[(String, ChargeSlot)] {
        &self.anyons
    }

    pub fn boundary(&self) -> BoundarySpec {
        self.boundary
    }

    /// Leaf ids in reference order (anyons, then the free boundary slot).
    pub fn leaf_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.anyons.iter().map(|(id, _)| id.clone()).collect();
        if self.boundary == BoundarySpec::Free {
            ids.push(BOUNDARY_ID.to_string());
        }
        ids
    }

    pub fn leaf_count(&self) -> usize {
        self.anyons.len() + usize::from(self.boundary == BoundarySpec::Free)
    }

    pub fn leaf_slot(&self, leaf: usize) -> ChargeSlot {
        if leaf < self.anyons.len() {
            self.anyons[leaf].1
        } else {
            ChargeSlot::Free
        }
    }

    pub fn leaf_index(&self, id: &str) -> Result<usize, OpsError> {
        if id == BOUNDARY_ID && self.boundary == BoundarySpec::Free {
            return Ok(self.anyons.len());
        }
        self.anyons
            .iter()
            .position(|(a, _)| a == id)
            .ok_or_else(|| OpsError::UnknownAnyonId(id.to_string()))
    }

    /// The caterpillar over the reference order.
    pub fn reference_tree(&self) -> TreeShape {
        let mut leaves: Vec<ChargeSlot> = self.anyons.iter().map(|(_, s)| *s).collect();
        if self.boundary == BoundarySpec::Free {
            leaves.push(ChargeSlot::Free);
        }
        let total = match self.boundary {
            BoundarySpec::Fixed(b) => self.model.dual(b),
            _ => self.model.trivial(),
        };
        TreeShape {
            leaves,
            total: ChargeSlot::Fixed(total),
        }
    }

    pub fn reference_descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            tree_order: (0..self.leaf_count()).collect(),
            word: BraidWord::identity(),
        }
    }

    /// The caterpillar with leaves permuted by a descriptor's tree order.
    pub fn tree_in_basis(&self, basis: &BasisDescriptor) -> Result<TreeShape, OpsError> {
        basis.validate(self)?;
        let reference = self.reference_tree();
        let leaves = basis
            .tree_order
            .iter()
            .map(|&r| reference.leaves[r])
            .collect();
        Ok(TreeShape {
            leaves,
            total: reference.total,
        })
    }
}

/// A fusion-tree basis of the system: the leaf order of the caterpillar and
/// the braid word carrying the reference arrangement into it. The word is
/// the concrete stand-in for the projection of the tree onto the manifold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisDescriptor {
    /// `tree_order[k]` is the reference leaf index sitting at tree
    /// position `k`.
    pub tree_order: Vec<usize>,
    pub word: BraidWord,
}

impl BasisDescriptor {
    pub fn validate(&self, geometry: &SystemGeometry) -> Result<(), OpsError> {
        let n = geometry.leaf_count();
        if self.tree_order.len() != n {
            return Err(OpsError::DescriptorMismatch);
        }
        let mut seen = vec![false; n];
        for &r in &self.tree_order {
            if r >= n || seen[r] {
                return Err(OpsError::DescriptorMismatch);
            }
            seen[r] = true;
        }
        let perm = self.word.endpoint_permutation(n)?;
        for r in 0..n {
            if self.tree_order[perm[r]] != r {
                return Err(OpsError::DescriptorMismatch);
            }
        }
        Ok(())
    }

    /// Descriptor reached from this one by appending `word`.
    pub fn after(&self, word: &BraidWord, geometry: &SystemGeometry) -> Result<BasisDescriptor, OpsError> {
        let total = self.word.then(word);
        let n = geometry.leaf_count();
        let perm = total.endpoint_permutation(n)?;
        let mut tree_order = vec![0usize; n];
        for (r, &p) in perm.iter().enumerate() {
            tree_order[p] = r;
        }
        let d = BasisDescriptor {
            tree_order,
            word: total,
        };
        d.validate(geometry)?;
        Ok(d)
    }
}

/// Coefficient transform between two descriptors of the same geometry:
/// `coeffs_in_target = R coeffs_in_source`. The braid-word matrix of a
/// descriptor maps reference-order labellings to its tree-order
/// labellings, so the transform undoes the source word and applies the
/// target word: `R = M(w_target) M(w_source)^dag`.
pub(crate) fn descriptor_transform(
    geometry: &SystemGeometry,
    source: &BasisDescriptor,
    target: &BasisDescriptor,
) -> Result<SparseMap, OpsError> {
    source.validate(geometry)?;
    target.validate(geometry)?;
    let model = geometry.model();
    let reference = geometry.reference_tree();
    let (m_source, shape_s) = braid_word_matrix(model, &reference, &source.word)?;
    let (m_target, shape_t) = braid_word_matrix(model, &reference, &target.word)?;
    debug_assert_eq!(shape_s, geometry.tree_in_basis(source)?);
    debug_assert_eq!(shape_t, geometry.tree_in_basis(target)?);
    Ok(m_target.compose(&m_source.adjoint()))
}

/// A pure state: amplitudes over the labellings of one fusion-tree basis.
#[derive(Debug, Clone)]
pub struct AnyonicState {
    geometry: Arc<SystemGeometry>,
    basis: BasisDescriptor,
    space: Arc<Space>,
    amp: BTreeMap<u32, C64>,
}

impl AnyonicState {
    pub fn new(
        geometry: Arc<SystemGeometry>,
        basis: BasisDescriptor,
        amplitudes: &[(Labelling, C64)],
    ) -> Result<Self, OpsError> {
        let tree = geometry.tree_in_basis(&basis)?;
        let space = Arc::new(space_of(geometry.model(), &tree));
        let mut amp = BTreeMap::new();
        for (labelling, v) in amplitudes {
            let ix = space
                .index_of_key(&labelling_key(labelling))
                .ok_or(OpsError::UnknownLabelling)?;
            if v.norm_sqr() > 0.0 {
                *amp.entry(ix).or_insert(C64::new(0.0, 0.0)) += *v;
            }
        }
        Ok(AnyonicState {
            geometry,
            basis,
            space,
            amp,
        })
    }

    pub fn from_dense(
        geometry: Arc<SystemGeometry>,
        basis: BasisDescriptor,
        dense: &[C64],
    ) -> Result<Self, OpsError> {
        let tree = geometry.tree_in_basis(&basis)?;
        let space = Arc::new(space_of(geometry.model(), &tree));
        if dense.len() != space.dim() {
            return Err(OpsError::UnknownLabelling);
        }
        let amp = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm_sqr() > PRUNE_TOL * PRUNE_TOL)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        Ok(AnyonicState {
            geometry,
            basis,
            space,
            amp,
        })
    }

    pub fn geometry(&self) -> &Arc<SystemGeometry> {
        &self.geometry
    }

    pub fn basis(&self) -> &BasisDescriptor {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.values().map(|v| v.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = crate::math::sqrt(self.norm_sqr());
        if n > 0.0 {
            for v in self.amp.values_mut() {
                *v /= n;
            }
        }
    }

    pub fn amplitudes(&self) -> Vec<(Labelling, C64)> {
        self.amp
            .iter()
            .map(|(&ix, &v)| (public_labelling(&self.space, ix as usize), v))
            .collect()
    }

    pub fn dense(&self) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.space.dim()];
        for (&ix, &v) in &self.amp {
            out[ix as usize] = v;
        }
        out
    }

    /// Inner product `<self|other>` (same geometry and basis required).
    pub fn dot(&self, other: &AnyonicState) -> Result<C64, OpsError> {
        if *self.geometry != *other.geometry {
            return Err(OpsError::GeometryMismatch);
        }
        if self.basis != other.basis {
            return Err(OpsError::BasisMismatch);
        }
        let mut acc = C64::new(0.0, 0.0);
        for (ix, v) in &self.amp {
            if let Some(w) = other.amp.get(ix) {
                acc += v.conj() * w;
            }
        }
        Ok(acc)
    }

    /// The same physical state expressed in another basis.
    pub fn change_basis(&self, target: &BasisDescriptor) -> Result<AnyonicState, OpsError> {
        let r = descriptor_transform(&self.geometry, &self.basis, target)?;
        let dense = r.apply(&self.dense());
        AnyonicState::from_dense(self.geometry.clone(), target.clone(), &dense)
    }

    /// Transports the anyons along a braid word: the amplitudes stay fixed
    /// while the word joins the descriptor's projection data, so the same
    /// coefficient list now names a different physical state.
    pub fn braid(&self, word: &BraidWord) -> Result<AnyonicState, OpsError> {
        let basis = self.basis.after_tree_word(word, &self.geometry)?;
        let tree = self.geometry.tree_in_basis(&basis)?;
        let space = Arc::new(space_of(self.geometry.model(), &tree));
        // Tree positions permute with the word; amplitude keys carry over
        // through the permuted labelling spaces index by index only when
        // the slot layout is unchanged, so re-key by labelling.
        let mut amp = BTreeMap::new();
        for (&ix, &v) in &self.amp {
            let mut key = crate::tree::labelling_key(&public_labelling(&self.space, ix as usize));
            // Permute the leaf charges by the word's endpoint permutation.
            let perm = word.endpoint_permutation(tree.leaf_count())?;
            let n = tree.leaf_count();
            let leaves: Vec<_> = (0..n).map(|p| key[perm.iter().position(|&q| q == p).unwrap()]).collect();
            key[..n].copy_from_slice(&leaves);
            let new_ix = space.index_of_key(&key).ok_or(OpsError::UnknownLabelling)?;
            amp.insert(new_ix, v);
        }
        Ok(AnyonicState {
            geometry: self.geometry.clone(),
            basis,
            space,
            amp,
        })
    }

    pub(crate) fn space(&self) -> &Arc<Space> {
        &self.space
    }
}

impl BasisDescriptor {
    /// Descriptor after applying `word` to the current tree arrangement
    /// (word positions refer to current tree positions).
    pub fn after_tree_word(
        &self,
        word: &BraidWord,
        geometry: &SystemGeometry,
    ) -> Result<BasisDescriptor, OpsError> {
        self.after(word, geometry)
    }
}

/// An operator in coefficient form: a sparse map over (ket, bra) labelling
/// pairs sharing a section root tuple. Single-section operators live on a
/// full system basis; multi-section operators represent reduced objects on
/// disjoint regions.
#[derive(Debug, Clone)]
pub struct AnyonicOperator {
    model: Arc<AnyonModel>,
    /// Leaf ids, section by section, in tree order.
    leaf_ids: Vec<Vec<String>>,
    sections: Vec<TreeShape>,
    /// Basis bookkeeping for single-section system operators; reduced
    /// operators carry the identity descriptor of their own region.
    basis: BasisDescriptor,
    geometry: Option<Arc<SystemGeometry>>,
    spaces: Vec<Arc<Space>>,
    strides: Vec<u32>,
    coeff: BTreeMap<(u32, u32), C64>,
}

impl AnyonicOperator {
    /// Zero operator on a full system in the given basis.
    pub fn zero_on(geometry: Arc<SystemGeometry>, basis: BasisDescriptor) -> Result<Self, OpsError> {
        let tree = geometry.tree_in_basis(&basis)?;
        let space = Arc::new(space_of(geometry.model(), &tree));
        let ids = {
            let ids = geometry.leaf_ids();
            basis.tree_order.iter().map(|&r| ids[r].clone()).collect()
        };
        Ok(AnyonicOperator {
            model: geometry.model().clone(),
            leaf_ids: vec![ids],
            sections: vec![tree],
            basis,
            geometry: Some(geometry),
            spaces: vec![space],
            strides: vec![1],
            coeff: BTreeMap::new(),
        })
    }

    /// Identity operator on the full system.
    pub fn identity_on(geometry: Arc<SystemGeometry>, basis: BasisDescriptor) -> Result<Self, OpsError> {
        let mut op = AnyonicOperator::zero_on(geometry, basis)?;
        for i in 0..op.dim() as u32 {
            op.coeff.insert((i, i), C64::new(1.0, 0.0));
        }
        Ok(op)
    }

    /// Zero operator on an explicit forest of sections (reduced form).
    pub(crate) fn zero_sections(
        model: Arc<AnyonModel>,
        leaf_ids: Vec<Vec<String>>,
        sections: Vec<TreeShape>,
        geometry: Option<Arc<SystemGeometry>>,
        basis: BasisDescriptor,
    ) -> Self {
        let spaces: Vec<Arc<Space>> = sections
            .iter()
            .map(|s| Arc::new(space_of(&model, s)))
            .collect();
        let mut strides = vec![1u32; spaces.len()];
        for i in (0..spaces.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * spaces[i + 1].dim() as u32;
        }
        AnyonicOperator {
            model,
            leaf_ids,
            sections,
            basis,
            geometry,
            spaces,
            strides,
            coeff: BTreeMap::new(),
        }
    }

    pub fn model(&self) -> &Arc<AnyonModel> {
        &self.model
    }

    pub fn geometry(&self) -> Option<&Arc<SystemGeometry>> {
        self.geometry.as_ref()
    }

    pub fn basis(&self) -> &BasisDescriptor {
        &self.basis
    }

    pub fn sections(&self) -> &[TreeShape] {
        &self.sections
    }

    pub fn section_leaf_ids(&self) -> &[Vec<String>] {
        &self.leaf_ids
    }

    /// Total dimension of the forest labelling space.
    pub fn dim(&self) -> usize {
        self.spaces.iter().map(|s| s.dim()).product::<usize>().max(
            // An empty forest (region with no leaves) is one-dimensional.
            usize::from(self.spaces.is_empty()),
        )
    }

    pub(crate) fn spaces(&self) -> &[Arc<Space>] {
        &self.spaces
    }

    pub(crate) fn split_index(&self, ix: u32) -> Vec<u32> {
        let mut parts = Vec::with_capacity(self.spaces.len());
        let mut rest = ix;
        for (i, space) in self.spaces.iter().enumerate() {
            let d = space.dim() as u32;
            let _ = d;
            let q = rest / self.strides[i];
            rest %= self.strides[i];
            parts.push(q);
        }
        parts
    }

    pub(crate) fn join_index(&self, parts: &[u32]) -> u32 {
        parts
            .iter()
            .zip(self.strides.iter())
            .map(|(p, s)| p * s)
            .sum()
    }

    /// Section root charges of a forest labelling index.
    pub fn sector_of(&self, ix: u32) -> Vec<Charge> {
        self.split_index(ix)
            .iter()
            .zip(self.spaces.iter())
            .map(|(&p, space)| space.root_charge(p as usize))
            .collect()
    }

    /// Public labellings (one per section) of a forest index.
    pub fn labelling_of(&self, ix: u32) -> Vec<Labelling> {
        self.split_index(ix)
            .iter()
            .zip(self.spaces.iter())
            .map(|(&p, space)| public_labelling(space, p as usize))
            .collect()
    }

    pub fn index_of(&self, sections: &[Labelling]) -> Result<u32, OpsError> {
        if sections.len() != self.spaces.len() {
            return Err(OpsError::UnknownLabelling);
        }
        let mut parts = Vec::with_capacity(sections.len());
        for (l, space) in sections.iter().zip(self.spaces.iter()) {
            parts.push(
                space
                    .index_of_key(&labelling_key(l))
                    .ok_or(OpsError::UnknownLabelling)?,
            );
        }
        Ok(self.join_index(&parts))
    }

    /// Sets a coefficient, enforcing the superselection block structure.
    pub fn set(&mut self, ket: u32, bra: u32, value: C64) -> Result<(), OpsError> {
        if self.sector_of(ket) != self.sector_of(bra) {
            return Err(OpsError::CrossSectorCoefficient);
        }
        if value.norm_sqr() <= PRUNE_TOL * PRUNE_TOL {
            self.coeff.remove(&(ket, bra));
        } else {
            self.coeff.insert((ket, bra), value);
        }
        Ok(())
    }

    pub fn get(&self, ket: u32, bra: u32) -> C64 {
        self.coeff
            .get(&(ket, bra))
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, C64)> + '_ {
        self.coeff.iter().map(|(&(k, b), &v)| (k, b, v))
    }

    pub fn entry_count(&self) -> usize {
        self.coeff.len()
    }

    pub(crate) fn add_to(&mut self, ket: u32, bra: u32, value: C64) {
        let slot = self.coeff.entry((ket, bra)).or_insert(C64::new(0.0, 0.0));
        *slot += value;
    }

    pub(crate) fn prune(&mut self) {
        self.coeff.retain(|_, v| v.norm_sqr() > PRUNE_TOL * PRUNE_TOL);
    }

    fn same_support(&self, other: &AnyonicOperator) -> Result<(), OpsError> {
        if *self.model != *other.model || self.leaf_ids != other.leaf_ids {
            return Err(OpsError::GeometryMismatch);
        }
        if self.sections != other.sections || self.basis != other.basis {
            return Err(OpsError::BasisMismatch);
        }
        Ok(())
    }

    /// Quantum trace: diagonal sum weighted by the quantum dimensions of
    /// the section roots.
    pub fn qtrace(&self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (&(k, b), &v) in &self.coeff {
            if k != b {
                continue;
            }
            let weight: f64 = self
                .sector_of(k)
                .iter()
                .map(|&c| self.model.qdim(c))
                .product();
            acc += v * weight;
        }
        acc
    }

    /// Operator product `self o other`.
    pub fn compose(&self, other: &AnyonicOperator) -> Result<AnyonicOperator, OpsError> {
        self.same_support(other)?;
        let mut out = self.clone();
        out.coeff = BTreeMap::new();
        // Group `other` rows by ket for the middle contraction.
        let mut by_ket: BTreeMap<u32, Vec<(u32, C64)>> = BTreeMap::new();
        for (&(k, b), &v) in &other.coeff {
            by_ket.entry(k).or_default().push((b, v));
        }
        for (&(k, m), &v1) in &self.coeff {
            if let Some(row) = by_ket.get(&m) {
                for &(b, v2) in row {
                    out.add_to(k, b, v1 * v2);
                }
            }
        }
        out.prune();
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> AnyonicOperator {
        let mut out = self.clone();
        out.coeff = self
            .coeff
            .iter()
            .map(|(&(k, b), &v)| ((b, k), v.conj()))
            .collect();
        out
    }

    pub fn scale(&mut self, s: C64) {
        for v in self.coeff.values_mut() {
            *v *= s;
        }
        self.prune();
    }

    pub fn add(&self, other: &AnyonicOperator) -> Result<AnyonicOperator, OpsError> {
        self.same_support(other)?;
        let mut out = self.clone();
        for (&(k, b), &v) in &other.coeff {
            out.add_to(k, b, v);
        }
        out.prune();
        Ok(out)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (&(k, b), &v) in &self.coeff {
            worst = worst.max((v - self.get(b, k).conj()).norm());
        }
        worst
    }

    /// Checks hermiticity, unit quantum trace and positive semidefiniteness.
    pub fn validate_density(&self) -> Result<(), OpsError> {
        if self.hermiticity_residual() > DENSITY_TOL {
            return Err(OpsError::NotDensityMatrix("hermiticity violated"));
        }
        let tr = self.qtrace();
        if (tr - C64::new(1.0, 0.0)).norm() > DENSITY_TOL {
            return Err(OpsError::NotDensityMatrix("quantum trace differs from one"));
        }
        for (_, block) in self.sector_blocks() {
            let eigs = block.hermitian_eigenvalues();
            if let Some(min) = eigs.last() {
                if *min < -DENSITY_TOL {
                    return Err(OpsError::NotDensityMatrix("negative eigenvalue"));
                }
            }
        }
        Ok(())
    }

    /// Dense coefficient blocks per sector (root tuple), sectors ascending,
    /// rows/columns in enumeration order. Only sectors with support appear.
    pub(crate) fn sector_blocks(&self) -> Vec<(Vec<Charge>, crate::linalg::HermMatrix)> {
        let mut members: BTreeMap<Vec<Charge>, Vec<u32>> = BTreeMap::new();
        for ix in 0..self.dim() as u32 {
            members.entry(self.sector_of(ix)).or_default().push(ix);
        }
        let mut out = Vec::new();
        for (sector, ixs) in members {
            let pos: BTreeMap<u32, usize> = ixs.iter().enumerate().map(|(p, &i)| (i, p)).collect();
            let mut block = crate::linalg::HermMatrix::zero(ixs.len());
            let mut touched = false;
            for (&(k, b), &v) in &self.coeff {
                if let (Some(&i), Some(&j)) = (pos.get(&k), pos.get(&b)) {
                    block.set(i, j, v);
                    touched = true;
                }
            }
            if touched {
                out.push((sector, block));
            }
        }
        out
    }

    /// The operator re-expressed in another basis descriptor of the same
    /// system (single-section operators only).
    pub fn change_basis(&self, target: &BasisDescriptor) -> Result<AnyonicOperator, OpsError> {
        let geometry = self
            .geometry
            .as_ref()
            .ok_or(OpsError::RegionMismatch)?
            .clone();
        if target == &self.basis {
            return Ok(self.clone());
        }
        let r = descriptor_transform(&geometry, &self.basis, target)?;
        let mut out = AnyonicOperator::zero_on(geometry, target.clone())?;
        conjugate_into(&mut out, &self.coeff, &r);
        Ok(out)
    }

    /// Conjugates by an explicit unitary on the same support (used for
    /// within-basis transformations like local unitaries).
    pub(crate) fn conjugated_by(&self, u: &SparseMap) -> AnyonicOperator {
        let mut out = self.clone();
        out.coeff = BTreeMap::new();
        conjugate_into(&mut out, &self.coeff, u);
        out
    }
}

/// `out += U coeff U^dag`, entry by entry.
pub(crate) fn conjugate_into(
    out: &mut AnyonicOperator,
    coeff: &BTreeMap<(u32, u32), C64>,
    u: &SparseMap,
) {
    for (&(k, b), &v) in coeff {
        for &(i, r1) in u.column(k as usize) {
            for &(j, r2) in u.column(b as usize) {
                out.add_to(i, j, r1 * v * r2.conj());
            }
        }
    }
    out.prune();
}

/// `|psi><phi|`. Cross-sector products vanish by superselection; the two
/// states must share geometry, basis and tree shape.
pub fn outer_product(psi: &AnyonicState, phi: &AnyonicState) -> Result<AnyonicOperator, OpsError> {
    if *psi.geometry() != *phi.geometry() {
        return Err(OpsError::GeometryMismatch);
    }
    if psi.basis() != phi.basis() {
        return Err(OpsError::BasisMismatch);
    }
    let mut op = AnyonicOperator::zero_on(psi.geometry.clone(), psi.basis.clone())?;
    for (&k, &a) in &psi.amp {
        for (&b, &c) in &phi.amp {
            if op.sector_of(k) != op.sector_of(b) {
                continue;
            }
            let v = a * c.conj();
            if v.norm_sqr() > PRUNE_TOL * PRUNE_TOL {
                op.add_to(k, b, v);
            }
        }
    }
    Ok(op)
}

/// `qTr(rho . obs)`. Bases are reconciled internally when the operands are
/// single-section system operators with different descriptors.
pub fn expectation(rho: &AnyonicOperator, obs: &AnyonicOperator) -> Result<C64, OpsError> {
    let obs_aligned;
    let obs_ref = if rho.basis != obs.basis {
        match (&rho.geometry, &obs.geometry) {
            (Some(g1), Some(g2)) if **g1 == **g2 => {
                obs_aligned = obs.change_basis(&rho.basis)?;
                &obs_aligned
            }
            _ => return Err(OpsError::GeometryMismatch),
        }
    } else {
        obs
    };
    rho.same_support(obs_ref)?;
    // qTr(rho obs) without materializing the product.
    let mut acc = C64::new(0.0, 0.0);
    let mut obs_by_ket: BTreeMap<u32, Vec<(u32, C64)>> = BTreeMap::new();
    for (b, k2, v) in obs_ref.entries() {
        obs_by_ket.entry(b).or_default().push((k2, v));
    }
    for (&(k, b), &v1) in &rho.coeff {
        if let Some(row) = obs_by_ket.get(&b) {
            for &(k2, v2) in row {
                if k2 == k {
                    let weight: f64 = rho
                        .sector_of(k)
                        .iter()
                        .map(|&c| rho.model.qdim(c))
                        .product();
                    acc += v1 * v2 * weight;
                }
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;

    fn ising_six_sigma() -> Arc<SystemGeometry> {
        let model = Arc::new(builtin_model("ising", None).unwrap());
        let sigma = model.charge_by_label("sigma").unwrap();
        let anyons = (1..=6)
            .map(|i| (alloc::format!("a{i}"), ChargeSlot::Fixed(sigma)))
            .collect();
        Arc::new(SystemGeometry::new(model, Manifold::Disc, anyons, BoundarySpec::Fixed(Charge(0))).unwrap())
    }

    fn equal_amplitude_state(geometry: &Arc<SystemGeometry>) -> AnyonicState {
        let basis = geometry.reference_descriptor();
        let tree = geometry.tree_in_basis(&basis).unwrap();
        let space = space_of(geometry.model(), &tree);
        let dim = space.dim();
        let amp = vec![C64::new(1.0 / crate::math::sqrt(dim as f64), 0.0); dim];
        AnyonicState::from_dense(geometry.clone(), basis, &amp).unwrap()
    }

    #[test]
    fn outer_product_of_normalized_state_is_density_matrix() {
        let geometry = ising_six_sigma();
        let psi = equal_amplitude_state(&geometry);
        let rho = outer_product(&psi, &psi).unwrap();
        assert!(rho.hermiticity_residual() < 1e-14);
        assert!((rho.qtrace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        rho.validate_density().unwrap();
        // 4x4 coefficient block, all entries 1/4.
        assert_eq!(rho.entry_count(), 16);
        for (_, _, v) in rho.entries() {
            assert!((v - C64::new(0.25, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn orthogonal_outer_product_has_zero_qtrace() {
        let geometry = ising_six_sigma();
        let basis = geometry.reference_descriptor();
        let mut a = vec![C64::new(0.0, 0.0); 4];
        let mut b = a.clone();
        a[0] = C64::new(1.0, 0.0);
        b[1] = C64::new(1.0, 0.0);
        let psi = AnyonicState::from_dense(geometry.clone(), basis.clone(), &a).unwrap();
        let phi = AnyonicState::from_dense(geometry.clone(), basis, &b).unwrap();
        let op = outer_product(&psi, &phi).unwrap();
        assert!(op.qtrace().norm() < 1e-14);
    }

    #[test]
    fn qtrace_of_identity_weights_sectors_by_qdim() {
        // Identity on a single anyon of charge a with free total: qdim(a).
        let model = Arc::new(builtin_model("fibonacci", None).unwrap());
        let tau = model.charge_by_label("tau").unwrap();
        let geometry = Arc::new(
            SystemGeometry::new(
                model.clone(),
                Manifold::Disc,
                vec![("t".into(), ChargeSlot::Fixed(tau))],
                BoundarySpec::Fixed(model.dual(tau)),
            )
            .unwrap(),
        );
        let id = AnyonicOperator::identity_on(geometry.clone(), geometry.reference_descriptor()).unwrap();
        let phi = (1.0 + crate::math::sqrt(5.0)) / 2.0;
        assert!((id.qtrace() - C64::new(phi, 0.0)).norm() < 1e-12);

        // Identity on the six-sigma tree with trivial total: 4.
        let geometry = ising_six_sigma();
        let id = AnyonicOperator::identity_on(geometry.clone(), geometry.reference_descriptor()).unwrap();
        assert!((id.qtrace() - C64::new(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn expectation_of_identity_is_one_for_density_matrices() {
        let geometry = ising_six_sigma();
        let psi = equal_amplitude_state(&geometry);
        let rho = outer_product(&psi, &psi).unwrap();
        let id = AnyonicOperator::identity_on(geometry.clone(), geometry.reference_descriptor()).unwrap();
        let e = expectation(&rho, &id).unwrap();
        assert!((e - C64::new(1.0, 0.0)).norm() < 1e-12);
        let e_self = expectation(&rho, &rho).unwrap();
        assert!((e_self - C64::new(1.0, 0.0)).norm() < 1e-12, "pure state purity");
    }

    #[test]
    fn change_basis_round_trip_preserves_coefficients_and_qtrace() {
        let geometry = ising_six_sigma();
        let psi = equal_amplitude_state(&geometry);
        let rho = outer_product(&psi, &psi).unwrap();
        let word = BraidWord(vec![
            BraidLetter { position: 2, sign: 1 },
            BraidLetter { position: 4, sign: -1 },
            BraidLetter { position: 3, sign: 1 },
        ]);
        let target = geometry
            .reference_descriptor()
            .after(&word, &geometry)
            .unwrap();
        let moved = rho.change_basis(&target).unwrap();
        assert!((moved.qtrace() - rho.qtrace()).norm() < 1e-12);
        let back = moved.change_basis(&geometry.reference_descriptor()).unwrap();
        for (k, b, v) in rho.entries() {
            assert!((back.get(k, b) - v).norm() < 1e-12);
        }
        // Identity change of basis is the identity map.
        let same = rho.change_basis(rho.basis()).unwrap();
        for (k, b, v) in rho.entries() {
            assert!((same.get(k, b) - v).norm() < 1e-14);
        }
    }

    #[test]
    fn fig_five_descriptor_change_applies_double_exchange_phases() {
        let geometry = ising_six_sigma();
        let psi = equal_amplitude_state(&geometry);
        let twist = BraidWord(vec![
            BraidLetter { position: 3, sign: 1 },
            BraidLetter { position: 3, sign: 1 },
        ]);
        let target = geometry
            .reference_descriptor()
            .after(&twist, &geometry)
            .unwrap();
        assert_eq!(target.tree_order, vec![0, 1, 2, 3, 4, 5]);
        let moved = psi.change_basis(&target).unwrap();
        // Re-expressed in the twisted basis, the amplitudes acquire the
        // double-exchange phases exp(-i pi/4) and exp(3 i pi/4).
        for (labelling, v) in moved.amplitudes() {
            let expect = if labelling.internals[0] == labelling.internals[2] {
                C64::from_polar(0.5, -core::f64::consts::FRAC_PI_4)
            } else {
                C64::from_polar(0.5, 3.0 * core::f64::consts::FRAC_PI_4)
            };
            assert!((v - expect).norm() < 1e-12);
        }
        // The descriptor change preserves the physical state: overlap of
        // braided coefficients with the original equals the twist phases.
        let back = moved.change_basis(&geometry.reference_descriptor()).unwrap();
        for ((l1, v1), (_l2, v2)) in psi.amplitudes().iter().zip(back.amplitudes().iter()) {
            assert_eq!(l1.internals.len(), 4);
            assert!((v1 - v2).norm() < 1e-12);
        }
    }

    #[test]
    fn expectation_reconciles_bases_internally() {
        let geometry = ising_six_sigma();
        let psi = equal_amplitude_state(&geometry);
        let rho = outer_product(&psi, &psi).unwrap();
        let word = BraidWord(vec![BraidLetter { position: 2, sign: 1 }]);
        let target = geometry
            .reference_descriptor()
            .after(&word, &geometry)
            .unwrap();
        let rho2 = rho.change_basis(&target).unwrap();
        // <rho>_rho2 equals purity 1 after reconciliation.
        let e = expectation(&rho2, &rho).unwrap();
        assert!((e - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn conjugate_symmetry_of_expectation() {
        let geometry = ising_six_sigma();
        let psi = equal_amplitude_state(&geometry);
        let rho = outer_product(&psi, &psi).unwrap();
        // A non-hermitian observable.
        let mut obs = AnyonicOperator::zero_on(geometry.clone(), geometry.reference_descriptor()).unwrap();
        obs.set(0, 1, C64::new(0.3, 0.4)).unwrap();
        obs.set(2, 2, C64::new(0.0, -1.0)).unwrap();
        let e = expectation(&rho, &obs).unwrap();
        let e_dag = expectation(&rho, &obs.adjoint()).unwrap();
        assert!((e - e_dag.conj()).norm() < 1e-12);
    }

    #[test]
    fn cross_sector_coefficients_are_rejected() {
        // A region-style operator on two sigmas with a free root has two
        // boundary sectors; coherences between them are forbidden.
        let model = Arc::new(builtin_model("ising", None).unwrap());
        let sigma = model.charge_by_label("sigma").unwrap();
        let section = TreeShape {
            leaves: vec![ChargeSlot::Fixed(sigma), ChargeSlot::Fixed(sigma)],
            total: ChargeSlot::Free,
        };
        let mut op = AnyonicOperator::zero_sections(
            model,
            vec![vec!["a".into(), "b".into()]],
            vec![section],
            None,
            BasisDescriptor {
                tree_order: vec![0, 1],
                word: BraidWord::identity(),
            },
        );
        assert_eq!(op.dim(), 2);
        let sectors: Vec<Vec<Charge>> = (0..2).map(|i| op.sector_of(i)).collect();
        assert_ne!(sectors[0], sectors[1]);
        assert!(matches!(
            op.set(0, 1, C64::new(1.0, 0.0)),
            Err(OpsError::CrossSectorCoefficient)
        ));
        op.set(0, 0, C64::new(1.0, 0.0)).unwrap();
    }

    #[test]
    fn geometry_validation() {
        let model = Arc::new(builtin_model("ising", None).unwrap());
        let sigma = model.charge_by_label("sigma").unwrap();
        assert!(matches!(
            SystemGeometry::new(
                model.clone(),
                Manifold::Sphere,
                vec![("a".into(), ChargeSlot::Fixed(sigma))],
                BoundarySpec::Free,
            ),
            Err(OpsError::BoundaryOnSphere)
        ));
        assert!(matches!(
            SystemGeometry::new(
                model.clone(),
                Manifold::Disc,
                vec![
                    ("a".into(), ChargeSlot::Fixed(sigma)),
                    ("a".into(), ChargeSlot::Fixed(sigma)),
                ],
                BoundarySpec::Free,
            ),
            Err(OpsError::DuplicateAnyonId(_))
        ));
        assert!(matches!(
            SystemGeometry::new(
                model,
                Manifold::Disc,
                vec![(BOUNDARY_ID.into(), ChargeSlot::Fixed(sigma))],
                BoundarySpec::Free,
            ),
            Err(OpsError::ReservedAnyonId(_))
        ));
    }

    #[test]
    fn braid_extends_descriptor_and_keeps_state_physical() {
        let geometry = ising_six_sigma();
        let psi = equal_amplitude_state(&geometry);
        let word = BraidWord(vec![BraidLetter { position: 3, sign: 1 }]);
        let braided = psi.braid(&word).unwrap();
        assert_eq!(braided.basis().word.0.len(), 1);
        // Braiding is unitary.
        assert!((braided.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
