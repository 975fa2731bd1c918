//! Brute-force verifiers, independent of the diagrammatic trace pipeline.
//!
//! [`check_defining_property`] tests the relation that defines a reduced
//! density matrix: its weighted pairing with every basis element of the
//! region's local operator space must reproduce the expectation value of
//! the embedded operator on the full state. The right-hand side is
//! evaluated by naive index contraction of explicitly padded operators;
//! no partial-trace weights enter, so agreement with the reduction
//! pipeline is evidence rather than tautology.
//!
//! [`abelian_reference_entropy`] computes entropies of Abelian systems in
//! the conventional qudit register (labellings are charge strings there),
//! with the charge superselection of disjoint regions imposed by hand.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::entropy::{EntropyReport, SectorSpectrum};
use crate::linalg::HermMatrix;
use crate::math;
use crate::model::Charge;
use crate::ops::{AnyonicOperator, AnyonicState, BasisDescriptor, BraidWord, OpsError};
use crate::reduce::{region_support, Bipartition, Embedding, ReduceError, Region};
use crate::{C64, PRUNE_TOL};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    Ops(OpsError),
    Reduce(ReduceError),
    NonAbelianModel,
    RegionMismatch,
    InvalidOrder(f64),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::Ops(e) => write!(f, "{e}"),
            OracleError::Reduce(e) => write!(f, "{e}"),
            OracleError::NonAbelianModel => {
                write!(f, "the qudit reference applies to Abelian models only")
            }
            OracleError::RegionMismatch => {
                write!(f, "reduced operator does not live on the requested region")
            }
            OracleError::InvalidOrder(n) => write!(f, "invalid Renyi order {n}"),
        }
    }
}

impl From<OpsError> for OracleError {
    fn from(e: OpsError) -> Self {
        OracleError::Ops(e)
    }
}

impl From<ReduceError> for OracleError {
    fn from(e: ReduceError) -> Self {
        OracleError::Reduce(e)
    }
}

/// A complete basis of the operators local to a region: one matrix unit
/// per ordered pair of labellings within each boundary-charge sector.
pub struct OperatorBasis {
    pub elements: Vec<AnyonicOperator>,
    /// Sum over sectors of the squared sector dimension.
    pub expected_count: usize,
}

/// Matrix-unit basis of the local operator space of `(part, region)`.
pub fn operator_basis_local(
    geometry: &crate::ops::SystemGeometry,
    part: &Bipartition,
    region: Region,
) -> Result<OperatorBasis, OracleError> {
    let (leaf_ids, sections) = region_support(geometry, part, region)?;
    let template = region_template(geometry.model().clone(), leaf_ids, sections);
    let mut by_sector: BTreeMap<Vec<Charge>, Vec<u32>> = BTreeMap::new();
    for ix in 0..template.dim() as u32 {
        by_sector.entry(template.sector_of(ix)).or_default().push(ix);
    }
    let expected_count = by_sector.values().map(|v| v.len() * v.len()).sum();
    let mut elements = Vec::with_capacity(expected_count);
    for members in by_sector.values() {
        for &k in members {
            for &b in members {
                let mut unit = template.clone();
                unit.set(k, b, C64::new(1.0, 0.0))?;
                elements.push(unit);
            }
        }
    }
    Ok(OperatorBasis {
        elements,
        expected_count,
    })
}

fn region_template(
    model: alloc::sync::Arc<crate::model::AnyonModel>,
    leaf_ids: Vec<Vec<String>>,
    sections: Vec<crate::tree::TreeShape>,
) -> AnyonicOperator {
    let m: usize = sections.iter().map(|s| s.leaf_count()).sum();
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

/// Maximum deviation of `qTr(rho_A O)` from `qTr(rho pad(O))` over the
/// whole local operator basis of the region.
pub fn check_defining_property(
    rho: &AnyonicOperator,
    rho_a: &AnyonicOperator,
    part: &Bipartition,
    region: Region,
) -> Result<f64, OracleError> {
    let geometry = rho.geometry().ok_or(OracleError::RegionMismatch)?.clone();
    let (leaf_ids, sections) = region_support(&geometry, part, region)?;
    if rho_a.sections().is_empty() && sections.is_empty() {
        // Empty region: the only local operator is the scalar identity.
        let lhs = rho_a.qtrace();
        let rhs = rho.qtrace();
        return Ok((lhs - rhs).norm());
    }
    if rho_a.section_leaf_ids() != leaf_ids || rho_a.sections() != sections {
        return Err(OracleError::RegionMismatch);
    }

    let embedding = Embedding::new(&geometry, rho.basis(), part, region)?;
    let rho_split = embedding.rho_in_split(rho)?;
    // The split shape keeps the system's fixed total charge at its root.
    let root_weight = {
        let tree = geometry.reference_tree();
        match tree.total {
            crate::model::ChargeSlot::Fixed(c) => geometry.model().qdim(c),
            crate::model::ChargeSlot::Free => 1.0,
        }
    };

    let basis_ops = operator_basis_local(&geometry, part, region)?;
    let mut worst: f64 = 0.0;
    for op in &basis_ops.elements {
        // lhs: region-side weighted pairing.
        let lhs = {
            let composed = rho_a.compose(op)?;
            composed.qtrace()
        };
        // rhs: naive contraction of the padded operator against rho.
        let padded = embedding.pad(op)?;
        let mut rhs = C64::new(0.0, 0.0);
        for (&(k, b), &v) in &rho_split {
            if let Some(&p) = padded.get(&(b, k)) {
                rhs += v * p;
            }
        }
        rhs *= root_weight;
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

/// Entropies of an Abelian system computed in the conventional qudit
/// register: amplitudes are indexed by charge strings and the reduced
/// matrix is built by plain index contraction over the traced positions.
pub fn abelian_reference_entropy(
    state: &AnyonicState,
    part: &Bipartition,
    orders: &[f64],
) -> Result<EntropyReport, OracleError> {
    let geometry = state.geometry().clone();
    let model = geometry.model().clone();
    for a in model.all_charges() {
        for b in model.all_charges() {
            if model.fusion_products(a, b).len() != 1 {
                return Err(OracleError::NonAbelianModel);
            }
        }
    }
    part.validate(&geometry)?;

    // Canonical identification: amplitudes in the reference descriptor,
    // keyed by the string of leaf charges.
    let psi = state
        .change_basis(&geometry.reference_descriptor())
        .map_err(OracleError::Ops)?;
    let n = geometry.leaf_count();
    let amps: Vec<(Vec<Charge>, C64)> = psi
        .amplitudes()
        .into_iter()
        .map(|(l, v)| (l.leaves, v))
        .collect();

    let (leaf_ids, _) = region_support(&geometry, part, Region::A)?;
    let ids = geometry.leaf_ids();
    let kept: Vec<usize> = leaf_ids
        .iter()
        .flatten()
        .map(|id| ids.iter().position(|x| x == id).expect("region id"))
        .collect();
    let traced: Vec<usize> = (0..n).filter(|i| !kept.contains(i)).collect();

    // Conventional partial trace by index contraction.
    let mut rho: BTreeMap<(Vec<Charge>, Vec<Charge>), C64> = BTreeMap::new();
    for (s1, v1) in &amps {
        for (s2, v2) in &amps {
            if traced.iter().any(|&t| s1[t] != s2[t]) {
                continue;
            }
            let k: Vec<Charge> = kept.iter().map(|&i| s1[i]).collect();
            let b: Vec<Charge> = kept.iter().map(|&i| s2[i]).collect();
            *rho.entry((k, b)).or_insert(C64::new(0.0, 0.0)) += v1 * v2.conj();
        }
    }
    rho.retain(|_, v| v.norm_sqr() > PRUNE_TOL * PRUNE_TOL);

    // Fixed global charge makes the contraction block-diagonal in the
    // region's total charge; group the blocks by it.
    let fuse = |charges: &[Charge]| -> Charge {
        charges.iter().fold(model.trivial(), |acc, &c| {
            model.fusion_products(acc, c)[0]
        })
    };
    let sums = |s: &[Charge]| -> Vec<Charge> {
        if s.is_empty() {
            Vec::new()
        } else {
            alloc::vec![fuse(s)]
        }
    };
    let mut sector_members: BTreeMap<Vec<Charge>, Vec<Vec<Charge>>> = BTreeMap::new();
    for (k, _) in rho.keys() {
        let sec = sums(k);
        let members = sector_members.entry(sec).or_default();
        if !members.contains(k) {
            members.push(k.clone());
        }
    }
    let mut spectra = Vec::new();
    for (sec, mut members) in sector_members {
        members.sort();
        let dim = members.len();
        let mut block = HermMatrix::zero(dim);
        for (i, k) in members.iter().enumerate() {
            for (j, b) in members.iter().enumerate() {
                if let Some(&v) = rho.get(&(k.clone(), b.clone())) {
                    block.set(i, j, v);
                }
            }
        }
        let eigenvalues: Vec<f64> = block
            .hermitian_eigenvalues()
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        spectra.push(SectorSpectrum {
            sector: sec.iter().map(|&c| model.dual(c)).collect(),
            eigenvalues,
        });
    }

    // Entropies straight from the defining formulas.
    let probs: Vec<f64> = spectra
        .iter()
        .flat_map(|s| s.eigenvalues.iter().copied())
        .filter(|&p| p > 0.0)
        .collect();
    let s1 = -probs.iter().map(|&p| math::xlog2x(p)).sum::<f64>();
    let mut renyi = Vec::with_capacity(orders.len());
    for &order in orders {
        if !(order > 0.0) {
            return Err(OracleError::InvalidOrder(order));
        }
        let value = if order == 1.0 {
            s1
        } else {
            math::log2(probs.iter().map(|&p| math::powf(p, order)).sum::<f64>()) / (1.0 - order)
        };
        renyi.push((order, value));
    }
    Ok(EntropyReport { spectra, s1, renyi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, ChargeSlot};
    use crate::ops::{BoundarySpec, Manifold, SystemGeometry};
    use alloc::string::ToString;
    use alloc::sync::Arc;
    use alloc::vec;

    fn z2_pair() -> Arc<SystemGeometry> {
        let model = Arc::new(builtin_model("z_n", Some(2)).unwrap());
        Arc::new(
            SystemGeometry::new(
                model,
                Manifold::Disc,
                vec![
                    ("q1".to_string(), ChargeSlot::Free),
                    ("q2".to_string(), ChargeSlot::Free),
                ],
                BoundarySpec::Free,
            )
            .unwrap(),
        )
    }

    #[test]
    fn abelian_basis_counts() {
        // One anyon with a definite Abelian charge spans only the identity.
        let model = Arc::new(builtin_model("z_n", Some(3)).unwrap());
        let one = model.charge_by_label("1").unwrap();
        let geometry = Arc::new(
            SystemGeometry::new(
                model.clone(),
                Manifold::Disc,
                vec![
                    ("q1".to_string(), ChargeSlot::Fixed(one)),
                    ("q2".to_string(), ChargeSlot::Fixed(one)),
                ],
                BoundarySpec::Fixed(model.charge_by_label("2").unwrap()),
            )
            .unwrap(),
        );
        let mut region_of = BTreeMap::new();
        region_of.insert("q1".to_string(), Region::A);
        region_of.insert("q2".to_string(), Region::B);
        let part = Bipartition::new(region_of, Some(Region::B));
        let basis = operator_basis_local(&geometry, &part, Region::A).unwrap();
        assert_eq!(basis.elements.len(), 1);
        assert_eq!(basis.expected_count, 1);
    }

    #[test]
    fn ising_sigma_basis_counts() {
        let model = Arc::new(builtin_model("ising", None).unwrap());
        let sigma = model.charge_by_label("sigma").unwrap();
        let make = |count: usize| {
            let anyons = (1..=count + 1)
                .map(|i| (alloc::format!("a{i}"), ChargeSlot::Fixed(sigma)))
                .collect();
            Arc::new(
                SystemGeometry::new(model.clone(), Manifold::Sphere, anyons, BoundarySpec::None)
                    .unwrap(),
            )
        };
        // Two sigmas kept: sectors 1 and psi, one labelling each.
        let geometry = make(2);
        let mut region_of = BTreeMap::new();
        region_of.insert("a1".to_string(), Region::A);
        region_of.insert("a2".to_string(), Region::A);
        region_of.insert("a3".to_string(), Region::B);
        let part = Bipartition::new(region_of, Some(Region::B));
        let basis = operator_basis_local(&geometry, &part, Region::A).unwrap();
        assert_eq!(basis.elements.len(), 2);

        // Three sigmas kept: the sigma sector is two-dimensional, giving
        // four units from that sector alone.
        let geometry = make(3);
        let mut region_of = BTreeMap::new();
        for i in 1..=3 {
            region_of.insert(alloc::format!("a{i}"), Region::A);
        }
        region_of.insert("a4".to_string(), Region::B);
        let part = Bipartition::new(region_of, Some(Region::B));
        let basis = operator_basis_local(&geometry, &part, Region::A).unwrap();
        assert_eq!(basis.elements.len(), 4);
        assert_eq!(basis.expected_count, 4);
    }

    #[test]
    fn gram_matrix_of_basis_has_full_rank() {
        let model = Arc::new(builtin_model("ising", None).unwrap());
        let sigma = model.charge_by_label("sigma").unwrap();
        let anyons = (1..=4)
            .map(|i| (alloc::format!("a{i}"), ChargeSlot::Fixed(sigma)))
            .collect();
        let geometry = Arc::new(
            SystemGeometry::new(model, Manifold::Sphere, anyons, BoundarySpec::None).unwrap(),
        );
        let mut region_of = BTreeMap::new();
        for i in 1..=3 {
            region_of.insert(alloc::format!("a{i}"), Region::A);
        }
        region_of.insert("a4".to_string(), Region::B);
        let part = Bipartition::new(region_of, Some(Region::B));
        let basis = operator_basis_local(&geometry, &part, Region::A).unwrap();
        // Matrix units are orthogonal under qTr(X^dag Y) with positive
        // norms, so the Gram matrix is diagonal with full rank.
        for (i, x) in basis.elements.iter().enumerate() {
            for (j, y) in basis.elements.iter().enumerate() {
                let gram = x.adjoint().compose(y).unwrap().qtrace();
                if i == j {
                    assert!(gram.re > 0.0);
                } else {
                    assert!(gram.norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn bell_pair_reference_entropy_is_one_bit() {
        let geometry = z2_pair();
        let model = geometry.model().clone();
        let zero = model.charge_by_label("0").unwrap();
        let one = model.charge_by_label("1").unwrap();
        let basis = geometry.reference_descriptor();
        // (|00;0> + |11;0>)/sqrt(2): boundary leaf compensates to keep the
        // total trivial.
        let tree = geometry.tree_in_basis(&basis).unwrap();
        assert_eq!(tree.leaf_count(), 3);
        let amp = C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
        let labellings = crate::tree::enumerate_labellings(&model, &tree);
        let mut picks = Vec::new();
        for l in labellings {
            if l.leaves[0] == zero && l.leaves[1] == zero {
                picks.push((l, amp));
            } else if l.leaves[0] == one && l.leaves[1] == one {
                picks.push((l, amp));
            }
        }
        assert_eq!(picks.len(), 2);
        let psi = AnyonicState::new(geometry.clone(), basis, &picks).unwrap();
        let mut region_of = BTreeMap::new();
        region_of.insert("q1".to_string(), Region::A);
        region_of.insert("q2".to_string(), Region::B);
        let part = Bipartition::new(region_of, Some(Region::B));
        let report = abelian_reference_entropy(&psi, &part, &[2.0]).unwrap();
        assert!((report.s1 - 1.0).abs() < 1e-12);
        assert!((report.renyi[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_state_reference_entropy_is_zero() {
        let geometry = z2_pair();
        let model = geometry.model().clone();
        let zero = model.charge_by_label("0").unwrap();
        let basis = geometry.reference_descriptor();
        let tree = geometry.tree_in_basis(&basis).unwrap();
        let labellings = crate::tree::enumerate_labellings(&model, &tree);
        let pick: Vec<_> = labellings
            .into_iter()
            .filter(|l| l.leaves[0] == zero && l.leaves[1] == zero)
            .map(|l| (l, C64::new(1.0, 0.0)))
            .collect();
        let psi = AnyonicState::new(geometry.clone(), basis, &pick).unwrap();
        let mut region_of = BTreeMap::new();
        region_of.insert("q1".to_string(), Region::A);
        region_of.insert("q2".to_string(), Region::B);
        let part = Bipartition::new(region_of, Some(Region::B));
        let report = abelian_reference_entropy(&psi, &part, &[0.5, 2.0, 3.0]).unwrap();
        assert!(report.s1.abs() < 1e-12);
        for (_, v) in report.renyi {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn non_abelian_model_is_rejected() {
        let model = Arc::new(builtin_model("ising", None).unwrap());
        let sigma = model.charge_by_label("sigma").unwrap();
        let geometry = Arc::new(
            SystemGeometry::new(
                model,
                Manifold::Sphere,
                vec![
                    ("a1".to_string(), ChargeSlot::Fixed(sigma)),
                    ("a2".to_string(), ChargeSlot::Fixed(sigma)),
                    ("a3".to_string(), ChargeSlot::Fixed(sigma)),
                    ("a4".to_string(), ChargeSlot::Fixed(sigma)),
                ],
                BoundarySpec::None,
            )
            .unwrap(),
        );
        let basis = geometry.reference_descriptor();
        let tree = geometry.tree_in_basis(&basis).unwrap();
        let space_dim = crate::tree::enumerate_labellings(geometry.model(), &tree).len();
        let amp = vec![C64::new(1.0 / math::sqrt(space_dim as f64), 0.0); space_dim];
        let psi = AnyonicState::from_dense(geometry.clone(), basis, &amp).unwrap();
        let mut region_of = BTreeMap::new();
        for i in 1..=2 {
            region_of.insert(alloc::format!("a{i}"), Region::A);
        }
        for i in 3..=4 {
            region_of.insert(alloc::format!("a{i}"), Region::B);
        }
        let part = Bipartition::new(region_of, Some(Region::B));
        assert!(matches!(
            abelian_reference_entropy(&psi, &part, &[2.0]),
            Err(OracleError::NonAbelianModel)
        ));
    }
}
