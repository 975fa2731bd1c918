//! Matrix representations of reduced density matrices and the bipartite
//! entanglement entropies computed from their spectra.
//!
//! The coefficient block of a charge sector is multiplied by the quantum
//! dimension of the sector (the product of section root dimensions), so
//! that the matrix trace equals the quantum trace exactly. Eigenvalues of
//! all sectors are then pooled into one probability distribution and the
//! entropies are evaluated in bits:
//!
//! - Renyi: `S_n = log2(sum_i p_i^n) / (1 - n)` for `n > 0`, `n != 1`;
//! - von Neumann: `S_1 = -sum_i p_i log2 p_i`, the `n -> 1` limit.
//!
//! Sectors are reported by their boundary charge, the dual of the fusion
//! product of the section's leaves.

use alloc::vec::Vec;
use core::fmt;

use crate::linalg::HermMatrix;
use crate::math;
use crate::model::Charge;
use crate::ops::AnyonicOperator;
use crate::DENSITY_TOL;

#[derive(Debug, Clone, PartialEq)]
pub enum EntropyError {
    NotHermitian(f64),
    NegativeEigenvalue(f64),
    InvalidOrder(f64),
}

impl fmt::Display for EntropyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntropyError::NotHermitian(r) => write!(f, "operator is not hermitian (residual {r:e})"),
            EntropyError::NegativeEigenvalue(v) => {
                write!(f, "spectrum has a negative eigenvalue ({v:e}); upstream positivity bug")
            }
            EntropyError::InvalidOrder(n) => write!(f, "invalid Renyi order {n}"),
        }
    }
}

/// Eigenvalues of one boundary-charge sector, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorSpectrum {
    /// Boundary charge of each section (dual of the section's fusion
    /// product). Empty for the scalar reduction of an empty region.
    pub sector: Vec<Charge>,
    pub eigenvalues: Vec<f64>,
}

impl SectorSpectrum {
    pub fn weight(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// Spectra and entropies of one reduced density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub spectra: Vec<SectorSpectrum>,
    /// Von Neumann entropy in bits.
    pub s1: f64,
    /// Requested Renyi orders with their entropies in bits; an order of
    /// exactly one holds the von Neumann value.
    pub renyi: Vec<(f64, f64)>,
}

/// Dense hermitian blocks of the operator, one per populated sector, with
/// the sector quantum dimension absorbed. The sum of block traces equals
/// the quantum trace exactly; row order is the labelling enumeration.
pub fn to_matrix(rho: &AnyonicOperator) -> Result<Vec<(Vec<Charge>, HermMatrix)>, EntropyError> {
    let res = rho.hermiticity_residual();
    if res > DENSITY_TOL {
        return Err(EntropyError::NotHermitian(res));
    }
    let model = rho.model().clone();
    let mut blocks = rho.sector_blocks();
    for (sector, block) in blocks.iter_mut() {
        let weight: f64 = sector.iter().map(|&c| model.qdim(c)).product();
        block.scale(weight);
        // Report the boundary charge rather than the fusion product.
        for c in sector.iter_mut() {
            *c = model.dual(*c);
        }
    }
    Ok(blocks)
}

/// Per-sector eigenvalues of the matrix representation, descending within
/// each sector. Small negative noise (above `-1e-10`) is clipped to zero;
/// the pooled distribution is renormalized only when its total is already
/// within `1e-8` of one.
pub fn spectrum(rho: &AnyonicOperator) -> Result<Vec<SectorSpectrum>, EntropyError> {
    let blocks = to_matrix(rho)?;
    let mut spectra = Vec::with_capacity(blocks.len());
    let mut total = 0.0;
    for (sector, block) in blocks {
        let mut eigenvalues = block.hermitian_eigenvalues();
        for v in eigenvalues.iter_mut() {
            if *v < 0.0 {
                if *v < -DENSITY_TOL {
                    return Err(EntropyError::NegativeEigenvalue(*v));
                }
                *v = 0.0;
            }
            total += *v;
        }
        spectra.push(SectorSpectrum {
            sector,
            eigenvalues,
        });
    }
    if math::abs(total - 1.0) < 1e-8 && total > 0.0 {
        for s in &mut spectra {
            for v in &mut s.eigenvalues {
                *v /= total;
            }
        }
    }
    Ok(spectra)
}

fn pooled(spectra: &[SectorSpectrum]) -> impl Iterator<Item = f64> + '_ {
    spectra.iter().flat_map(|s| s.eigenvalues.iter().copied())
}

/// Renyi entropy of order `n` (bits) of the pooled spectrum.
pub fn renyi_entropy(spectra: &[SectorSpectrum], n: f64) -> Result<f64, EntropyError> {
    if !(n > 0.0) || n == 1.0 {
        return Err(EntropyError::InvalidOrder(n));
    }
    let sum: f64 = pooled(spectra)
        .filter(|&p| p > 0.0)
        .map(|p| math::powf(p, n))
        .sum();
    Ok(math::log2(sum) / (1.0 - n))
}

/// Von Neumann entropy (bits) of the pooled spectrum.
pub fn von_neumann_entropy(spectra: &[SectorSpectrum]) -> f64 {
    -pooled(spectra).map(math::xlog2x).sum::<f64>()
}

/// Spectrum plus entropies for the requested Renyi orders; an order of
/// exactly one is computed through the von Neumann formula.
pub fn entropy_report(rho: &AnyonicOperator, orders: &[f64]) -> Result<EntropyReport, EntropyError> {
    let spectra = spectrum(rho)?;
    let s1 = von_neumann_entropy(&spectra);
    let mut renyi = Vec::with_capacity(orders.len());
    for &n in orders {
        let value = if n == 1.0 {
            s1
        } else {
            renyi_entropy(&spectra, n)?
        };
        renyi.push((n, value));
    }
    Ok(EntropyReport { spectra, s1, renyi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec_of(values: &[f64]) -> Vec<SectorSpectrum> {
        alloc::vec![SectorSpectrum {
            sector: alloc::vec![Charge(0)],
            eigenvalues: values.to_vec(),
        }]
    }

    #[test]
    fn entropy_formula_values() {
        let pure = spec_of(&[1.0]);
        assert_eq!(von_neumann_entropy(&pure), 0.0);
        assert_eq!(renyi_entropy(&pure, 2.0).unwrap(), 0.0);

        let half = spec_of(&[0.5, 0.5]);
        assert!((von_neumann_entropy(&half) - 1.0).abs() < 1e-15);
        assert!((renyi_entropy(&half, 2.0).unwrap() - 1.0).abs() < 1e-15);

        let skew = spec_of(&[0.75, 0.25]);
        // Frozen oracle values: direct evaluation of the defining formulas.
        let s2 = -math::log2(0.0625 + 0.5625);
        assert!((renyi_entropy(&skew, 2.0).unwrap() - s2).abs() < 1e-12);
        assert!((renyi_entropy(&skew, 2.0).unwrap() - 0.6780719051126378).abs() < 1e-12);
        let s1 = -(0.25 * math::log2(0.25) + 0.75 * math::log2(0.75));
        assert!((von_neumann_entropy(&skew) - s1).abs() < 1e-12);
        assert!((von_neumann_entropy(&skew) - 0.8112781244591328).abs() < 1e-12);
    }

    #[test]
    fn invalid_orders_are_rejected() {
        let spec = spec_of(&[1.0]);
        assert!(renyi_entropy(&spec, 0.0).is_err());
        assert!(renyi_entropy(&spec, -2.0).is_err());
        assert!(renyi_entropy(&spec, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn renyi_approaches_von_neumann_near_order_one(raw in proptest::collection::vec(1e-6..1.0f64, 1..8)) {
            let total: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
            let spec = spec_of(&probs);
            let s1 = von_neumann_entropy(&spec);
            for n in [1.0 - 1e-4, 1.0 + 1e-4] {
                let sn = renyi_entropy(&spec, n).unwrap();
                prop_assert!((sn - s1).abs() < 1e-3, "S_{n} = {sn}, S_1 = {s1}");
            }
        }

        #[test]
        fn renyi_is_non_increasing_in_order(raw in proptest::collection::vec(1e-6..1.0f64, 1..8)) {
            let total: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
            let spec = spec_of(&probs);
            let mut last = renyi_entropy(&spec, 0.5).unwrap();
            for n in [0.9, 1.0000001, 2.0, 3.0, 10.0] {
                let sn = renyi_entropy(&spec, n).unwrap();
                prop_assert!(sn <= last + 1e-9);
                last = sn;
            }
            let s1 = von_neumann_entropy(&spec);
            prop_assert!(s1 >= -1e-12);
            prop_assert!(renyi_entropy(&spec, 0.5).unwrap() + 1e-9 >= s1);
        }
    }
}
