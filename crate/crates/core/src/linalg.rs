//! Minimal dense/sparse linear algebra for small complex matrices.
//!
//! Everything here is sized for fusion-tree labelling spaces (at most a few
//! hundred states), so the implementations favour clarity and determinism
//! over asymptotics: column-sparse maps for unitaries, and a cyclic Jacobi
//! sweep for hermitian eigenvalues.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::C64;

/// A sparse linear map stored column-compressed: `cols[j]` lists the
/// `(row, value)` pairs of column `j`, rows ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMap {
    rows: usize,
    cols: Vec<Vec<(u32, C64)>>,
}

impl SparseMap {
    pub fn zero(rows: usize, cols: usize) -> Self {
        SparseMap {
            rows,
            cols: vec![Vec::new(); cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SparseMap::zero(dim, dim);
        for j in 0..dim {
            m.cols[j].push((j as u32, C64::new(1.0, 0.0)));
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn push(&mut self, row: usize, col: usize, value: C64) {
        debug_assert!(row < self.rows);
        let col = &mut self.cols[col];
        match col.binary_search_by_key(&(row as u32), |&(r, _)| r) {
            Ok(i) => col[i].1 += value,
            Err(i) => col.insert(i, (row as u32, value)),
        }
    }

    pub fn column(&self, j: usize) -> &[(u32, C64)] {
        &self.cols[j]
    }

    /// `self o other` (apply `other` first).
    pub fn compose(&self, other: &SparseMap) -> SparseMap {
        debug_assert_eq!(other.rows, self.cols.len());
        let mut out = SparseMap::zero(self.rows, other.ncols());
        for j in 0..other.ncols() {
            let mut acc: Vec<(u32, C64)> = Vec::new();
            for &(k, v1) in &other.cols[j] {
								for &(i, v2) in &self.cols[k as usize] {
                    match acc.binary_search_by_key(&i, |&(r, _)| r) {
                        Ok(p) => acc[p].1 += v2 * v1,
                        Err(p) => acc.insert(p, (i, v2 * v1)),
                    }
                }
            }
            acc.retain(|&(_, v)| v.norm_sqr() > 0.0);
            out.cols[j] = acc;
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> SparseMap {
        let mut out = SparseMap::zero(self.ncols(), self.rows);
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                out.push(j, i as usize, v.conj());
            }
        }
        out
    }

    /// Applies the map to a dense vector.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        debug_assert_eq!(v.len(), self.ncols());
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        for (j, col) in self.cols.iter().enumerate() {
            if v[j].norm_sqr() == 0.0 {
                continue;
            }
            for &(i, m) in col {
                out[i as usize] += m * v[j];
            }
        }
        out
    }

    /// Maximum deviation of `self^dag self` from the identity.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.ncols();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for k in j..n {
                let mut acc = C64::new(0.0, 0.0);
                let (a, b) = (&self.cols[j], &self.cols[k]);
                let mut ia = 0;
                let mut ib = 0;
                while ia < a.len() && ib < b.len() {
                    match a[ia].0.cmp(&b[ib].0) {
                        core::cmp::Ordering::Less => ia += 1,
                        core::cmp::Ordering::Greater => ib += 1,
                        core::cmp::Ordering::Equal => {
                            acc += a[ia].1.conj() * b[ib].1;
                            ia += 1;
                            ib += 1;
                        }
                    }
                }
                let expect = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((acc - expect).norm());
            }
        }
        worst
    }

    /// Dense column-major copy, mainly for tests and small compositions.
    pub fn to_dense(&self) -> HermMatrix {
        let mut m = HermMatrix::zero(self.rows.max(self.ncols()));
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                m.set(i as usize, j, v);
            }
        }
        m
    }
}

/// Dense square complex matrix, row-major. Named for its main use as a
/// hermitian block of a density matrix; nothing enforces hermiticity.
#[derive(Debug, Clone, PartialEq)]
pub struct HermMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl HermMatrix {
    pub fn zero(dim: usize) -> Self {
        HermMatrix {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.dim + j] += v;
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of a hermitian matrix, descending, via cyclic Jacobi
    /// rotations. Input hermiticity is the caller's responsibility; the
    /// strictly lower triangle is taken as the conjugate of the upper.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let n = self.dim;
        if n == 0 {
            return Vec::new();
        }
        let mut a = self.clone();
        // Scale sentinel: absolute off-diagonal mass we drive to zero.
        let norm: f64 = a.data.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
        let tol = 1e-30 * norm * norm;
        for _sweep in 0..60 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a.get(p, q).norm_sqr();
                }
            }
            if off <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.norm_sqr() <= tol / (n * n) as f64 {
                        continue;
                    }
                    // Unitary 2x2 rotation eliminating the (p, q) element of
                    // a hermitian matrix: diagonalize [[app, apq], [apq*, aqq]].
                    let app = a.get(p, p).re;
                    let aqq = a.get(q, q).re;
                    let abs_apq = apq.norm();
                    let phase = apq / abs_apq;
                    let theta = (aqq - app) / (2.0 * abs_apq);
                    let t = {
                        let s = if theta >= 0.0 { 1.0 } else { -1.0 };
                        s / (math::abs(theta) + math::sqrt(theta * theta + 1.0))
                    };
                    let c = 1.0 / math::sqrt(t * t + 1.0);
                    let s = t * c;
                    // Column rotation: columns p, q mix with the phase folded in.
                    for i in 0..n {
                        let aip = a.get(i, p);
                        let aiq = a.get(i, q);
                        a.set(i, p, aip * c - aiq * phase.conj() * s);
                        a.set(i, q, aip * phase * s + aiq * c);
                    }
                    // Matching row rotation (conjugate).
                    for j in 0..n {
                        let apj = a.get(p, j);
                        let aqj = a.get(q, j);
                        a.set(p, j, apj * c - aqj * phase * s);
                        a.set(q, j, apj * phase.conj() * s + aqj * c);
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        eig
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn jacobi_matches_known_eigenvalues() {
        // [[2, i], [-i, 2]] has eigenvalues 3 and 1.
        let mut m = HermMatrix::zero(2);
        m.set(0, 0, c(2.0, 0.0));
        m.set(0, 1, c(0.0, 1.0));
        m.set(1, 0, c(0.0, -1.0));
        m.set(1, 1, c(2.0, 0.0));
        let eig = m.hermitian_eigenvalues();
        assert!((eig[0] - 3.0).abs() < 1e-12);
        assert!((eig[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_matches_nalgebra_on_random_hermitian() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for dim in [1usize, 2, 3, 4, 8, 13] {
            let mut m = HermMatrix::zero(dim);
            let mut na = nalgebra::DMatrix::<C64>::zeros(dim, dim);
            for i in 0..dim {
                let d: f64 = rng.gen_range(-1.0..1.0);
                m.set(i, i, c(d, 0.0));
                na[(i, i)] = c(d, 0.0);
                for j in (i + 1)..dim {
                    let v = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    m.set(i, j, v);
                    m.set(j, i, v.conj());
                    na[(i, j)] = v;
                    na[(j, i)] = v.conj();
                }
            }
            let mut mine = m.hermitian_eigenvalues();
            let mut theirs: Vec<f64> = na
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .collect();
            theirs.sort_by(|x, y| y.partial_cmp(x).unwrap());
            mine.sort_by(|x, y| y.partial_cmp(x).unwrap());
            for (a, b) in mine.iter().zip(theirs.iter()) {
                assert!((a - b).abs() < 1e-10, "dim {dim}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn sparse_compose_and_adjoint() {
        let mut u = SparseMap::zero(2, 2);
        u.push(0, 0, c(0.0, 1.0));
        u.push(1, 1, c(1.0, 0.0));
        let id = u.adjoint().compose(&u);
        assert!((id.to_dense().get(0, 0) - c(1.0, 0.0)).norm() < 1e-15);
        assert!(id.to_dense().get(0, 1).norm() < 1e-15);
        assert!(u.unitarity_residual() < 1e-15);
    }
}
