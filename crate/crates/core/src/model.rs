//! Multiplicity-free anyon models: charges, fusion rules, quantum dimensions,
//! F-symbols and R-symbols, plus exhaustive consistency checks.
//!
//! Built-in models ship in a fixed documented gauge:
//!
//! - **Ising** (`1, sigma, psi`): `d_sigma = sqrt(2)`,
//!   `[F^{sss}_s] = (1/sqrt 2) [[1, 1], [1, -1]]` over channels `(1, psi)`,
//!   `[F^{s p s}_p] = [F^{p s p}_s] = -1`, all other admissible entries `+1`;
//!   `R(s,s->1) = exp(-i pi/8)`, `R(s,s->psi) = exp(3 i pi/8)`,
//!   `R(s,psi->s) = R(psi,s->s) = -i`, `R(psi,psi->1) = -1`.
//! - **Fibonacci** (`1, tau`): `d_tau = (1+sqrt 5)/2`, real symmetric
//!   `[F^{ttt}_t] = [[1/phi, 1/sqrt phi], [1/sqrt phi, -1/phi]]`;
//!   `R(t,t->1) = exp(-4 pi i/5)`, `R(t,t->tau) = exp(3 pi i/5)`.
//! - **Z_N** (`0 .. N-1`): fusion is addition mod N, every `F = 1` and
//!   `R = 1` (the symmetric braiding, under which the model is exactly an
//!   N-level qudit register).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::{C64, AXIOM_TOL};

/// Index of a charge within its model's charge list.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Charge(pub u8);

impl Charge {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A leaf or root assignment: pinned to one charge, or free to range over
/// every charge of the model.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ChargeSlot {
    Fixed(Charge),
    Free,
}

impl ChargeSlot {
    pub fn fixed(self) -> Option<Charge> {
        match self {
            ChargeSlot::Fixed(c) => Some(c),
            ChargeSlot::Free => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    UnknownBuiltin(String),
    InvalidParameter(String),
    UnknownCharge(String),
    MissingTrivial,
    BadDual(String),
    BadFusion(String),
    AxiomViolation { axiom: &'static str, residual: f64 },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::UnknownBuiltin(name) => write!(f, "unknown builtin model `{name}`"),
            ModelError::InvalidParameter(msg) => write!(f, "invalid model parameter: {msg}"),
            ModelError::UnknownCharge(label) => write!(f, "unknown charge `{label}`"),
            ModelError::MissingTrivial => write!(f, "model has no trivial charge"),
            ModelError::BadDual(msg) => write!(f, "bad duality data: {msg}"),
            ModelError::BadFusion(msg) => write!(f, "bad fusion data: {msg}"),
            ModelError::AxiomViolation { axiom, residual } => {
                write!(f, "axiom violation: {axiom} residual {residual:e}")
            }
        }
    }
}

/// Residuals of every model axiom, as produced by [`AnyonModel::verify`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomResiduals {
    pub qdim: f64,
    pub f_unitarity: f64,
    pub r_modulus: f64,
    pub pentagon: f64,
    pub hexagon: f64,
}

impl AxiomResiduals {
    pub fn max(&self) -> f64 {
        self.qdim
            .max(self.f_unitarity)
            .max(self.r_modulus)
            .max(self.pentagon)
            .max(self.hexagon)
    }
}

/// A multiplicity-free unitary braided tensor category, given by explicit
/// tables. Immutable after construction; cheap to share behind an `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnyonModel {
    name: String,
    charges: Vec<String>,
    trivial: Charge,
    dual: Vec<Charge>,
    /// `fusion[a][b]` lists the admissible products of `a x b`, ascending.
    fusion: Vec<Vec<Vec<Charge>>>,
    qdim: Vec<f64>,
    f_symbols: BTreeMap<[u8; 6], C64>,
    r_symbols: BTreeMap<[u8; 3], C64>,
}

impl AnyonModel {
    /// Assembles a model from raw tables. Structural validation only; run
    /// [`AnyonModel::verify`] for the numerical axioms.
    #[allow(clippy::too_many_arguments)]
    pub fn from_tables(
        name: &str,
        charges: Vec<String>,
        trivial: &str,
        dual_pairs: &[(String, String)],
        fusion_triples: &[(String, String, String)],
        qdim: &[(String, f64)],
        f_entries: &[([String; 6], C64)],
        r_entries: &[([String; 3], C64)],
    ) -> Result<Self, ModelError> {
        if charges.len() > u8::MAX as usize {
            return Err(ModelError::InvalidParameter("too many charges".into()));
        }
        let lookup = |label: &str| -> Result<Charge, ModelError> {
            charges
                .iter()
                .position(|c| c == label)
                .map(|i| Charge(i as u8))
                .ok_or_else(|| ModelError::UnknownCharge(label.to_string()))
        };
        let trivial = lookup(trivial).map_err(|_| ModelError::MissingTrivial)?;

        let mut dual: Vec<Option<Charge>> = vec![None; charges.len()];
        for (a, abar) in dual_pairs {
            dual[lookup(a)?.index()] = Some(lookup(abar)?);
        }
        let dual: Vec<Charge> = dual
            .into_iter()
            .enumerate()
            .map(|(i, d)| d.ok_or_else(|| ModelError::BadDual(format!("no dual for `{}`", charges[i]))))
            .collect::<Result<_, _>>()?;

        let n = charges.len();
        let mut fusion = vec![vec![Vec::new(); n]; n];
        for (a, b, c) in fusion_triples {
            let (a, b, c) = (lookup(a)?, lookup(b)?, lookup(c)?);
            let out = &mut fusion[a.index()][b.index()];
            if out.contains(&c) {
                return Err(ModelError::BadFusion(format!(
                    "duplicate fusion triple ({}, {}, {})",
                    charges[a.index()],
                    charges[b.index()],
                    charges[c.index()]
                )));
            }
            out.push(c);
        }
        for row in &mut fusion {
            for out in row.iter_mut() {
                out.sort();
            }
        }

        let mut qdim_v = vec![f64::NAN; n];
        for (label, d) in qdim {
            qdim_v[lookup(label)?.index()] = *d;
        }
        for (i, d) in qdim_v.iter().enumerate() {
            if !(d.is_finite() && *d > 0.0) {
                return Err(ModelError::BadFusion(format!(
                    "missing or non-positive quantum dimension for `{}`",
                    charges[i]
                )));
            }
        }

        let mut f_symbols = BTreeMap::new();
        for (labels, v) in f_entries {
            let mut key = [0u8; 6];
            for (slot, label) in key.iter_mut().zip(labels.iter()) {
                *slot = lookup(label)?.0;
            }
            f_symbols.insert(key, *v);
        }
        let mut r_symbols = BTreeMap::new();
        for (labels, v) in r_entries {
            let mut key = [0u8; 3];
            for (slot, label) in key.iter_mut().zip(labels.iter()) {
                *slot = lookup(label)?.0;
            }
            r_symbols.insert(key, *v);
        }

        let model = AnyonModel {
            name: name.into(),
            charges,
            trivial,
            dual,
            fusion,
            qdim: qdim_v,
            f_symbols,
            r_symbols,
        };
        model.check_structure()?;
        Ok(model)
    }

    fn check_structure(&self) -> Result<(), ModelError> {
        let t = self.trivial;
        if self.dual[t.index()] != t {
            return Err(ModelError::BadDual("dual of the trivial charge must be itself".into()));
        }
        for a in self.all_charges() {
            let abar = self.dual(a);
            if self.dual(abar) != a {
                return Err(ModelError::BadDual(format!(
                    "dual is not an involution at `{}`",
                    self.label(a)
                )));
            }
            if !self.admissible(a, t, a) || !self.admissible(t, a, a) {
                return Err(ModelError::BadFusion(format!(
                    "`{}` does not fuse trivially with the vacuum",
                    self.label(a)
                )));
            }
            if self.fusion_products(a, t).len() != 1 || self.fusion_products(t, a).len() != 1 {
                return Err(ModelError::BadFusion(format!(
                    "vacuum fusion with `{}` is not unique",
                    self.label(a)
                )));
            }
            if !self.admissible(a, abar, t) {
                return Err(ModelError::BadFusion(format!(
                    "`{}` and its dual do not annihilate",
                    self.label(a)
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn charge_count(&self) -> usize {
        self.charges.len()
    }

    pub fn all_charges(&self) -> impl Iterator<Item = Charge> {
        (0..self.charges.len() as u8).map(Charge)
    }

    pub fn trivial(&self) -> Charge {
        self.trivial
    }

    pub fn label(&self, c: Charge) -> &str {
        &self.charges[c.index()]
    }

    pub fn charge_by_label(&self, label: &str) -> Result<Charge, ModelError> {
        self.charges
            .iter()
            .position(|c| c == label)
            .map(|i| Charge(i as u8))
            .ok_or_else(|| ModelError::UnknownCharge(label.to_string()))
    }

    pub fn dual(&self, a: Charge) -> Charge {
        self.dual[a.index()]
    }

    pub fn qdim(&self, a: Charge) -> f64 {
        self.qdim[a.index()]
    }

    /// Whether `a x b -> c` is an admissible fusion vertex.
    pub fn admissible(&self, a: Charge, b: Charge, c: Charge) -> bool {
        self.fusion[a.index()][b.index()].contains(&c)
    }

    /// Admissible products of `a x b`, ascending by charge index.
    pub fn fusion_products(&self, a: Charge, b: Charge) -> &[Charge] {
        &self.fusion[a.index()][b.index()]
    }

    /// `[F^{abc}_d]_{ef}`; zero for non-admissible index tuples.
    pub fn f_symbol(&self, a: Charge, b: Charge, c: Charge, d: Charge, e: Charge, f: Charge) -> C64 {
        self.f_symbols
            .get(&[a.0, b.0, c.0, d.0, e.0, f.0])
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    /// `R(a,b->c)`: phase acquired when `a` and `b`, fused into `c`,
    /// exchange counterclockwise.
    pub fn r_symbol(&self, a: Charge, b: Charge, c: Charge) -> C64 {
        self.r_symbols
            .get(&[a.0, b.0, c.0])
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    /// All `(a,b,c,d)` with at least one admissible recoupling channel pair,
    /// together with the admissible `(e, f)` index ranges.
    fn f_blocks(&self) -> Vec<(Charge, Charge, Charge, Charge, Vec<Charge>, Vec<Charge>)> {
        let mut blocks = Vec::new();
        for a in self.all_charges() {
            for b in self.all_charges() {
                for c in self.all_charges() {
                    for d in self.all_charges() {
                        let es: Vec<Charge> = self
                            .fusion_products(a, b)
                            .iter()
                            .copied()
                            .filter(|&e| self.admissible(e, c, d))
                            .collect();
                        let fs: Vec<Charge> = self
                            .fusion_products(b, c)
                            .iter()
                            .copied()
                            .filter(|&f| self.admissible(a, f, d))
                            .collect();
                        if !es.is_empty() || !fs.is_empty() {
                            blocks.push((a, b, c, d, es, fs));
                        }
                    }
                }
            }
        }
        blocks
    }

    /// Maximum deviation of admissible F-blocks from unitarity.
    pub fn check_f_unitarity(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, b, c, d, es, fs) in self.f_blocks() {
            if es.len() != fs.len() {
                return f64::INFINITY;
            }
            for (i, &e1) in es.iter().enumerate() {
                for (j, &e2) in es.iter().enumerate() {
                    // (F F^dag)_{e1 e2}
                    let mut acc = C64::new(0.0, 0.0);
                    for &f in &fs {
                        acc += self.f_symbol(a, b, c, d, e1, f) * self.f_symbol(a, b, c, d, e2, f).conj();
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((acc - expect).norm());
                }
            }
        }
        worst
    }

    /// Maximum deviation of `d_a d_b` from the dimension sum of `a x b`.
    pub fn check_qdim(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in self.all_charges() {
            for b in self.all_charges() {
                let sum: f64 = self.fusion_products(a, b).iter().map(|&c| self.qdim(c)).sum();
                worst = worst.max(math::abs(self.qdim(a) * self.qdim(b) - sum));
            }
        }
        worst
    }

    /// Maximum deviation of admissible R-symbols from unit modulus.
    pub fn check_r_modulus(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in self.all_charges() {
            for b in self.all_charges() {
                for &c in self.fusion_products(a, b) {
                    worst = worst.max(math::abs(self.r_symbol(a, b, c).norm() - 1.0));
                }
            }
        }
        worst
    }

    /// Maximum residual over every pentagon-equation instance:
    ///
    /// `sum_f [F^{bcd}_g]_{fh} [F^{afd}_e]_{yg} [F^{abc}_y]_{xf}
    ///   = [F^{abh}_e]_{xg} [F^{xcd}_e]_{yh}`.
    pub fn check_pentagon(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let charges: Vec<Charge> = self.all_charges().collect();
        for &a in &charges {
            for &b in &charges {
                for &c in &charges {
                    for &d in &charges {
                        for &e in &charges {
                            // g: channel of (b c d) attached to a; h: channel of (c d);
                            // x: channel of (a b); y: channel of ((a b) c).
                            for &g in &charges {
                                if !self.admissible(a, g, e) {
                                    continue;
                                }
                                for &h in self.fusion_products(c, d) {
                                    if !self.admissible(b, h, g) {
                                        continue;
                                    }
                                    for &x in self.fusion_products(a, b) {
                                        for &y in &charges {
                                            if !self.admissible(y, d, e) || !self.admissible(x, c, y) {
                                                continue;
                                            }
                                            let mut lhs = C64::new(0.0, 0.0);
                                            for &f in self.fusion_products(b, c) {
                                                lhs += self.f_symbol(b, c, d, g, f, h)
                                                    * self.f_symbol(a, f, d, e, y, g)
                                                    * self.f_symbol(a, b, c, y, x, f);
                                            }
                                            let rhs = self.f_symbol(a, b, h, e, x, g)
                                                * self.f_symbol(x, c, d, e, y, h);
                                            worst = worst.max((lhs - rhs).norm());
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        worst
    }

    /// Maximum residual over both hexagon orientations:
    ///
    /// `R^{ca}_e [F^{acb}_d]_{eg} R^{cb}_g
    ///   = sum_f [F^{cab}_d]_{ef} R^{cf}_d [F^{abc}_d]_{fg}`
    ///
    /// and the same equation with every R conjugated (the clockwise braid).
    pub fn check_hexagon(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let charges: Vec<Charge> = self.all_charges().collect();
        for &a in &charges {
            for &b in &charges {
                for &c in &charges {
                    for &d in &charges {
                        for &e in self.fusion_products(c, a) {
                            if !self.admissible(e, b, d) {
                                continue;
                            }
                            for &g in self.fusion_products(c, b) {
                                if !self.admissible(a, g, d) {
                                    continue;
                                }
                                let mut lhs_ccw = self.r_symbol(c, a, e)
                                    * self.f_symbol(a, c, b, d, e, g)
                                    * self.r_symbol(c, b, g);
                                let mut lhs_cw = self.r_symbol(a, c, e).conj()
                                    * self.f_symbol(a, c, b, d, e, g)
                                    * self.r_symbol(b, c, g).conj();
                                for &f in self.fusion_products(a, b) {
                                    if !self.admissible(c, f, d) {
                                        continue;
                                    }
                                    let wings = self.f_symbol(c, a, b, d, e, f)
                                        * self.f_symbol(a, b, c, d, f, g);
                                    lhs_ccw -= wings * self.r_symbol(c, f, d);
                                    lhs_cw -= wings * self.r_symbol(f, c, d).conj();
                                }
                                worst = worst.max(lhs_ccw.norm()).max(lhs_cw.norm());
                            }
                        }
                    }
                }
            }
        }
        worst
    }

    /// Runs every axiom check and demands each residual below [`AXIOM_TOL`].
    pub fn verify(&self) -> Result<AxiomResiduals, ModelError> {
        let residuals = AxiomResiduals {
            qdim: self.check_qdim(),
            f_unitarity: self.check_f_unitarity(),
            r_modulus: self.check_r_modulus(),
            pentagon: self.check_pentagon(),
            hexagon: self.check_hexagon(),
        };
        let checks: [(&'static str, f64); 5] = [
            ("qdim-consistency", residuals.qdim),
            ("F-unitarity", residuals.f_unitarity),
            ("R-modulus", residuals.r_modulus),
            ("pentagon", residuals.pentagon),
            ("hexagon", residuals.hexagon),
        ];
        for (axiom, residual) in checks {
            if !(residual < AXIOM_TOL) {
                return Err(ModelError::AxiomViolation { axiom, residual });
            }
        }
        Ok(residuals)
    }

    /// Raw tables, for serialization. F and R entries are keyed by charge
    /// labels in the order `(a,b,c,d,e,f)` and `(a,b,c)`.
    pub fn tables(&self) -> ModelTables<'_> {
        ModelTables { model: self }
    }
}

/// Borrowed view of a model's defining tables.
pub struct ModelTables<'a> {
    model: &'a AnyonModel,
}

impl<'a> ModelTables<'a> {
    pub fn charges(&self) -> &'a [String] {
        &self.model.charges
    }

    pub fn trivial(&self) -> &'a str {
        self.model.label(self.model.trivial)
    }

    pub fn dual_pairs(&self) -> Vec<(&'a str, &'a str)> {
        self.model
            .all_charges()
            .map(|a| (self.model.label(a), self.model.label(self.model.dual(a))))
            .collect()
    }

    pub fn fusion_triples(&self) -> Vec<(&'a str, &'a str, &'a str)> {
        let mut triples = Vec::new();
        for a in self.model.all_charges() {
            for b in self.model.all_charges() {
                for &c in self.model.fusion_products(a, b) {
                    triples.push((self.model.label(a), self.model.label(b), self.model.label(c)));
                }
            }
        }
        triples
    }

    pub fn qdims(&self) -> Vec<(&'a str, f64)> {
        self.model
            .all_charges()
            .map(|a| (self.model.label(a), self.model.qdim(a)))
            .collect()
    }

    pub fn f_entries(&self) -> Vec<([&'a str; 6], C64)> {
        self.model
            .f_symbols
            .iter()
            .map(|(k, v)| {
                let l = |i: usize| self.model.label(Charge(k[i]));
                ([l(0), l(1), l(2), l(3), l(4), l(5)], *v)
            })
            .collect()
    }

    pub fn r_entries(&self) -> Vec<([&'a str; 3], C64)> {
        self.model
            .r_symbols
            .iter()
            .map(|(k, v)| {
                let l = |i: usize| self.model.label(Charge(k[i]));
                ([l(0), l(1), l(2)], *v)
            })
            .collect()
    }
}

/// Built-in model selector for [`builtin_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Ising,
    Fibonacci,
    ZN(u8),
}

/// Constructs a built-in model. `parameter` is required for (and only for)
/// `z_n`, where it gives N >= 2.
pub fn builtin_model(name: &str, parameter: Option<u32>) -> Result<AnyonModel, ModelError> {
    match (name, parameter) {
        ("ising", None) => ising(),
        ("fibonacci", None) => fibonacci(),
        ("z_n", Some(n)) => {
            if !(2..=64).contains(&n) {
                return Err(ModelError::InvalidParameter(format!(
                    "z_n requires 2 <= N <= 64, got {n}"
                )));
            }
            z_n(n as u8)
        }
        ("z_n", None) => Err(ModelError::InvalidParameter("z_n requires a parameter N".into())),
        ("ising" | "fibonacci", Some(_)) => Err(ModelError::InvalidParameter(format!(
            "model `{name}` takes no parameter"
        ))),
        _ => Err(ModelError::UnknownBuiltin(name.into())),
    }
}

fn phase(turns: f64) -> C64 {
    let angle = 2.0 * core::f64::consts::PI * turns;
    C64::new(math::cos(angle), math::sin(angle))
}

fn ising() -> Result<AnyonModel, ModelError> {
    let s = |x: &str| x.to_string();
    let charges = vec![s("1"), s("sigma"), s("psi")];
    let dual = [("1", "1"), ("sigma", "sigma"), ("psi", "psi")]
        .map(|(a, b)| (s(a), s(b)))
        .to_vec();
    let fusion = [
        ("1", "1", "1"),
        ("1", "sigma", "sigma"),
        ("1", "psi", "psi"),
        ("sigma", "1", "sigma"),
        ("sigma", "sigma", "1"),
        ("sigma", "sigma", "psi"),
        ("sigma", "psi", "sigma"),
        ("psi", "1", "psi"),
        ("psi", "sigma", "sigma"),
        ("psi", "psi", "1"),
    ]
    .map(|(a, b, c)| (s(a), s(b), s(c)))
    .to_vec();
    let sqrt2 = math::sqrt(2.0);
    let qdim = vec![(s("1"), 1.0), (s("sigma"), sqrt2), (s("psi"), 1.0)];

    let mut f = Vec::new();
    // Everything admissible defaults to +1; the exceptions are set below.
    push_default_f(&charges, &fusion, &mut f);
    let inv = 1.0 / sqrt2;
    set_f(&mut f, ["sigma", "sigma", "sigma", "sigma", "1", "1"], C64::new(inv, 0.0));
    set_f(&mut f, ["sigma", "sigma", "sigma", "sigma", "1", "psi"], C64::new(inv, 0.0));
    set_f(&mut f, ["sigma", "sigma", "sigma", "sigma", "psi", "1"], C64::new(inv, 0.0));
    set_f(&mut f, ["sigma", "sigma", "sigma", "sigma", "psi", "psi"], C64::new(-inv, 0.0));
    set_f(&mut f, ["sigma", "psi", "sigma", "psi", "sigma", "sigma"], C64::new(-1.0, 0.0));
    set_f(&mut f, ["psi", "sigma", "psi", "sigma", "sigma", "sigma"], C64::new(-1.0, 0.0));

    let r = vec![
        ([s("1"), s("1"), s("1")], C64::new(1.0, 0.0)),
        ([s("1"), s("sigma"), s("sigma")], C64::new(1.0, 0.0)),
        ([s("1"), s("psi"), s("psi")], C64::new(1.0, 0.0)),
        ([s("sigma"), s("1"), s("sigma")], C64::new(1.0, 0.0)),
        ([s("psi"), s("1"), s("psi")], C64::new(1.0, 0.0)),
        ([s("sigma"), s("sigma"), s("1")], phase(-1.0 / 16.0)),
        ([s("sigma"), s("sigma"), s("psi")], phase(3.0 / 16.0)),
        ([s("sigma"), s("psi"), s("sigma")], phase(-0.25)),
        ([s("psi"), s("sigma"), s("sigma")], phase(-0.25)),
        ([s("psi"), s("psi"), s("1")], C64::new(-1.0, 0.0)),
    ];

    AnyonModel::from_tables("ising", charges, "1", &dual, &fusion, &qdim, &f, &r)
}

fn fibonacci() -> Result<AnyonModel, ModelError> {
    let s = |x: &str| x.to_string();
    let charges = vec![s("1"), s("tau")];
    let dual = [("1", "1"), ("tau", "tau")].map(|(a, b)| (s(a), s(b))).to_vec();
    let fusion = [
        ("1", "1", "1"),
        ("1", "tau", "tau"),
        ("tau", "1", "tau"),
        ("tau", "tau", "1"),
        ("tau", "tau", "tau"),
    ]
    .map(|(a, b, c)| (s(a), s(b), s(c)))
    .to_vec();
    let golden = (1.0 + math::sqrt(5.0)) / 2.0;
    let qdim = vec![(s("1"), 1.0), (s("tau"), golden)];

    let mut f = Vec::new();
    push_default_f(&charges, &fusion, &mut f);
    let inv = 1.0 / golden;
    let inv_sqrt = 1.0 / math::sqrt(golden);
    set_f(&mut f, ["tau", "tau", "tau", "tau", "1", "1"], C64::new(inv, 0.0));
    set_f(&mut f, ["tau", "tau", "tau", "tau", "1", "tau"], C64::new(inv_sqrt, 0.0));
    set_f(&mut f, ["tau", "tau", "tau", "tau", "tau", "1"], C64::new(inv_sqrt, 0.0));
    set_f(&mut f, ["tau", "tau", "tau", "tau", "tau", "tau"], C64::new(-inv, 0.0));

    let r = vec![
        ([s("1"), s("1"), s("1")], C64::new(1.0, 0.0)),
        ([s("1"), s("tau"), s("tau")], C64::new(1.0, 0.0)),
        ([s("tau"), s("1"), s("tau")], C64::new(1.0, 0.0)),
        ([s("tau"), s("tau"), s("1")], phase(-2.0 / 5.0)),
        ([s("tau"), s("tau"), s("tau")], phase(3.0 / 10.0)),
    ];

    AnyonModel::from_tables("fibonacci", charges, "1", &dual, &fusion, &qdim, &f, &r)
}

fn z_n(n: u8) -> Result<AnyonModel, ModelError> {
    let charges: Vec<String> = (0..n).map(|k| k.to_string()).collect();
    let dual: Vec<(String, String)> = (0..n)
        .map(|k| (k.to_string(), ((n - k) % n).to_string()))
        .collect();
    let mut fusion = Vec::new();
    for a in 0..n {
        for b in 0..n {
            fusion.push((a.to_string(), b.to_string(), ((a as u16 + b as u16) % n as u16).to_string()));
        }
    }
    let qdim: Vec<(String, f64)> = (0..n).map(|k| (k.to_string(), 1.0)).collect();

    let mut f = Vec::new();
    push_default_f(&charges, &fusion, &mut f);

    let mut r = Vec::new();
    for a in 0..n as u16 {
        for b in 0..n as u16 {
            let c = (a + b) % n as u16;
            r.push((
                [a.to_string(), b.to_string(), c.to_string()],
                C64::new(1.0, 0.0),
            ));
        }
    }

    AnyonModel::from_tables(
        &format!("z_{n}"),
        charges,
        "0",
        &dual,
        &fusion,
        &qdim,
        &f,
        &r,
    )
}

/// Emits `F = 1` for every admissible `(a,b,c,d,e,f)` of the given fusion
/// table; model-specific entries overwrite afterwards via [`set_f`].
fn push_default_f(
    charges: &[String],
    fusion: &[(String, String, String)],
    out: &mut Vec<([String; 6], C64)>,
) {
    let admissible = |a: &str, b: &str, c: &str| {
        fusion.iter().any(|(x, y, z)| x == a && y == b && z == c)
    };
    for a in charges {
        for b in charges {
            for c in charges {
                for d in charges {
                    for e in charges {
                        for f in charges {
                            if admissible(a, b, e)
                                && admissible(e, c, d)
                                && admissible(b, c, f)
                                && admissible(a, f, d)
                            {
                                out.push((
                                    [a.clone(), b.clone(), c.clone(), d.clone(), e.clone(), f.clone()],
                                    C64::new(1.0, 0.0),
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
}

fn set_f(entries: &mut [([String; 6], C64)], key: [&str; 6], value: C64) {
    for (k, v) in entries.iter_mut() {
        if k.iter().zip(key.iter()).all(|(a, b)| a == b) {
            *v = value;
            return;
        }
    }
    panic!("set_f: entry {key:?} not admissible");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_ising_passes_all_axioms() {
        let m = builtin_model("ising", None).unwrap();
        let res = m.verify().unwrap();
        assert!(res.pentagon < 1e-12, "pentagon residual {}", res.pentagon);
        assert!(res.hexagon < 1e-12, "hexagon residual {}", res.hexagon);
        assert!(res.qdim < 1e-12);
        let sigma = m.charge_by_label("sigma").unwrap();
        assert!((m.qdim(sigma) - math::sqrt(2.0)).abs() < 1e-15);
    }

    #[test]
    fn builtin_fibonacci_passes_all_axioms() {
        let m = builtin_model("fibonacci", None).unwrap();
        let res = m.verify().unwrap();
        assert!(res.pentagon < 1e-12, "pentagon residual {}", res.pentagon);
        assert!(res.hexagon < 1e-12, "hexagon residual {}", res.hexagon);
        let tau = m.charge_by_label("tau").unwrap();
        assert!((m.qdim(tau) - (1.0 + math::sqrt(5.0)) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn builtin_z2_z3_pass_all_axioms() {
        for n in [2, 3, 5] {
            let m = builtin_model("z_n", Some(n)).unwrap();
            let res = m.verify().unwrap();
            assert!(res.pentagon < 1e-12);
            assert!(res.hexagon < 1e-12, "z_{n} hexagon residual {}", res.hexagon);
            // Abelian: unique outcomes, unimodular F and R.
            for a in m.all_charges() {
                for b in m.all_charges() {
                    assert_eq!(m.fusion_products(a, b).len(), 1);
                    let c = m.fusion_products(a, b)[0];
                    assert!((m.r_symbol(a, b, c).norm() - 1.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn perturbed_fibonacci_f_breaks_pentagon() {
        let mut m = builtin_model("fibonacci", None).unwrap();
        let tau = m.charge_by_label("tau").unwrap().0;
        let key = [tau, tau, tau, tau, 0, 0];
        *m.f_symbols.get_mut(&key).unwrap() += C64::new(0.1, 0.0);
        assert!(m.check_pentagon() > 0.01);
    }

    #[test]
    fn negated_ising_r_breaks_hexagon() {
        let mut m = builtin_model("ising", None).unwrap();
        let sigma = m.charge_by_label("sigma").unwrap().0;
        let key = [sigma, sigma, 0];
        let v = *m.r_symbols.get(&key).unwrap();
        m.r_symbols.insert(key, -v);
        assert!(m.check_hexagon() > 0.01);
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(
            builtin_model("heisenberg", None),
            Err(ModelError::UnknownBuiltin(_))
        ));
        assert!(matches!(builtin_model("z_n", Some(1)), Err(ModelError::InvalidParameter(_))));
        assert!(matches!(builtin_model("z_n", None), Err(ModelError::InvalidParameter(_))));
        assert!(matches!(builtin_model("ising", Some(3)), Err(ModelError::InvalidParameter(_))));
    }
}
