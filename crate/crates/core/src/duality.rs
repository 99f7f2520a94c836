//! The duality algebra behind the packet pipeline: linearized (additive)
//! polynomials and the Moore-matrix solver, algebraic realization of
//! subgroups whose order is a power of q, twisted Laurent polynomials with
//! the `*` anti-involution, isotropic search, Lang-isogeny characters, the
//! finite Serre-Pontryagin pairing, alternating pairings on finite abelian
//! p-groups with Lagrangian subgroups, and quadratic refinements.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::cyclo::MuVal;
use crate::gf::{embed, frobenius, make_field, mod_inv, rel_trace, subfield_coords, Field, FieldElem, GfError};

#[derive(Debug, Error)]
pub enum DualityError {
    #[error(transparent)]
    Field(#[from] GfError),
    #[error("subgroup order {0} is not a power of q = {1}")]
    NotPowerOfQ(u64, u64),
    #[error("subgroup is not closed under addition")]
    NotAdditivelyClosed,
    #[error("ambient dimension mismatch")]
    AmbientMismatch,
    #[error("base field mismatch")]
    BaseMismatch,
    #[error("operand is not skewsymmetric")]
    NotSkewsymmetric,
    #[error("degenerate pairing")]
    DegeneratePairing,
    #[error("pairing table inconsistent with factor orders")]
    BadPairingTable,
    #[error("group size {0} exceeds the pairing cap {1}")]
    PairingTooLarge(u64, u64),
    #[error("Lang equation unsolvable within the extension bound (internal error)")]
    LangUnsolvable,
}

/// Exhaustive-verification cap for pairings on finite abelian p-groups.
const PAIRING_CAP: u64 = 1 << 10;

// ---------------------------------------------------------------------------
// F_p linear algebra (vectors as Vec<u64>)
// ---------------------------------------------------------------------------

/// Solve M x = rhs over F_p; columns of `m` index unknowns.
pub(crate) fn fp_solve(m: &[Vec<u64>], rhs: &[u64], p: u64) -> Option<Vec<u64>> {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut aug: Vec<Vec<u64>> = (0..rows)
        .map(|i| {
            let mut row = m[i].clone();
            row.push(rhs[i] % p);
            row
        })
        .collect();
    let mut pivots = Vec::new();
    let mut rank = 0usize;
    for col in 0..cols {
        let Some(pr) = (rank..rows).find(|&i| aug[i][col] % p != 0) else {
            continue;
        };
        aug.swap(rank, pr);
        let inv = mod_inv(aug[rank][col] % p, p);
        for v in aug[rank].iter_mut() {
            *v = (*v % p) * inv % p;
        }
        for i in 0..rows {
            if i != rank && aug[i][col] % p != 0 {
                let f = aug[i][col] % p;
                for j in 0..=cols {
                    let sub = f * (aug[rank][j] % p) % p;
                    aug[i][j] = (aug[i][j] % p + p - sub) % p;
                }
            }
        }
        pivots.push(col);
        rank += 1;
    }
    for row in aug.iter().skip(rank) {
        if row[cols] % p != 0 {
            return None;
        }
    }
    let mut x = vec![0u64; cols];
    for (i, &col) in pivots.iter().enumerate() {
        x[col] = aug[i][cols] % p;
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Linearized (additive) polynomials
// ---------------------------------------------------------------------------

/// Additive polynomial `sum_i c_i x^(p^i)` with coefficients in a base field.
/// Evaluation is F_p-linear on every extension of the base.
#[derive(Clone, PartialEq, Eq)]
pub struct LinearizedPoly {
    base: Field,
    coeffs: Vec<FieldElem>, // coeffs[i] multiplies x^(p^i)
}

impl LinearizedPoly {
    pub fn new(base: &Field, coeffs: Vec<FieldElem>) -> LinearizedPoly {
        let mut coeffs = coeffs;
        while coeffs.last().map_or(false, |c| c.is_zero()) {
            coeffs.pop();
        }
        LinearizedPoly {
            base: base.clone(),
            coeffs,
        }
    }

    pub fn zero(base: &Field) -> LinearizedPoly {
        LinearizedPoly::new(base, vec![])
    }

    pub fn identity(base: &Field) -> LinearizedPoly {
        LinearizedPoly::new(base, vec![base.one()])
    }

    pub fn base(&self) -> &Field {
        &self.base
    }

    pub fn coeffs(&self) -> &[FieldElem] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Evaluate at a point of any extension field of the base.
    pub fn eval(&self, x: &FieldElem) -> FieldElem {
        let target = x.field();
        let mut acc = target.zero();
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let ce = embed(c, target).expect("coefficient embeds into evaluation field");
            acc = acc.add(&ce.mul(&frobenius(x, i as i64)));
        }
        acc
    }
}

impl fmt::Debug for LinearizedPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let p = self.base.p();
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{:?}*x^{}", c, p.pow(i as u32))?;
        }
        Ok(())
    }
}

/// Solve for the unique linearized polynomial of p-degree < r agreeing with
/// the given F_p-linear map on all of GF(p^r). `matrix[i][j]` is coordinate
/// `i` of the image of the basis vector `x^j`.
pub fn moore_solve(field: &Field, matrix: &[Vec<u64>]) -> LinearizedPoly {
    let r = field.degree() as usize;
    assert_eq!(matrix.len(), r);
    assert!(matrix.iter().all(|row| row.len() == r));
    // Moore system: sum_i c_i (a^j)^(p^i) = image(a^j), unknowns c_i in the field
    let alpha = field.gen();
    let mut rows: Vec<Vec<FieldElem>> = Vec::with_capacity(r);
    let mut rhs: Vec<FieldElem> = Vec::with_capacity(r);
    for j in 0..r {
        let bj = alpha.pow(j as u64);
        rows.push((0..r).map(|i| frobenius(&bj, i as i64)).collect());
        let img_coords: Vec<u64> = (0..r).map(|i| matrix[i][j]).collect();
        rhs.push(field.from_coords(&img_coords));
    }
    // Gaussian elimination over the field; the Moore matrix of a basis is
    // always invertible, so failure here is a hard internal error.
    let n = r;
    for col in 0..n {
        let piv = (col..n)
            .find(|&i| !rows[i][col].is_zero())
            .expect("Moore matrix is invertible");
        rows.swap(col, piv);
        rhs.swap(col, piv);
        let inv = rows[col][col].inv();
        for v in rows[col].iter_mut() {
            *v = v.mul(&inv);
        }
        rhs[col] = rhs[col].mul(&inv);
        for i in 0..n {
            if i != col && !rows[i][col].is_zero() {
                let f = rows[i][col].clone();
                for j in 0..n {
                    let sub = f.mul(&rows[col][j]);
                    rows[i][j] = rows[i][j].sub(&sub);
                }
                let sub = f.mul(&rhs[col]);
                rhs[i] = rhs[i].sub(&sub);
            }
        }
    }
    LinearizedPoly::new(field, rhs)
}

/// The linearized polynomial of an F_p-linear map given pointwise.
pub fn moore_solve_map(field: &Field, map: impl Fn(&FieldElem) -> FieldElem) -> LinearizedPoly {
    let r = field.degree() as usize;
    let alpha = field.gen();
    let mut matrix = vec![vec![0u64; r]; r];
    for j in 0..r {
        let img = map(&alpha.pow(j as u64));
        for i in 0..r {
            matrix[i][j] = img.coords()[i];
        }
    }
    moore_solve(field, &matrix)
}

// ---------------------------------------------------------------------------
// Algebraic realization of subgroups of order q^k  (constructive Lemma on
// subgroups of p-torsion vector groups)
// ---------------------------------------------------------------------------

/// Witness that a subgroup `L` of `F_q^n` of order `q^k` is the image of the
/// coordinate subgroup `F_q^k` under a tuple of additive-polynomial maps.
/// Evaluating the same rows over `F_{q^m}` produces the base change of the
/// realized subgroup.
#[derive(Clone)]
pub struct Realization {
    pub base: Field,
    pub ambient_dim: usize,
    pub param_dim: usize,
    /// rows[c][j]: contribution of parameter j to ambient coordinate c.
    pub rows: Vec<Vec<LinearizedPoly>>,
    /// Largest extension degree m for which |image over F_{q^m}| = q^(k m)
    /// was verified by enumeration.
    pub base_change_checked: u32,
}

impl Realization {
    /// Image point for a parameter tuple over any extension of the base.
    pub fn eval(&self, params: &[FieldElem]) -> Vec<FieldElem> {
        assert_eq!(params.len(), self.param_dim);
        let target = params[0].field().clone();
        (0..self.ambient_dim)
            .map(|c| {
                let mut acc = target.zero();
                for (j, t) in params.iter().enumerate() {
                    acc = acc.add(&self.rows[c][j].eval(t));
                }
                acc
            })
            .collect()
    }

    /// Full image over `F_{q^m}`, as encoded coordinate tuples.
    pub fn image_points(&self, m: u32) -> Vec<Vec<FieldElem>> {
        let ext = make_field(self.base.p(), self.base.degree() * m).expect("extension field");
        let q_m = ext.order();
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let total = q_m.pow(self.param_dim as u32);
        for idx in 0..total {
            let mut v = idx;
            let params: Vec<FieldElem> = (0..self.param_dim)
                .map(|_| {
                    let e = ext.elem(v % q_m);
                    v /= q_m;
                    e
                })
                .collect();
            let pt = self.eval(&params);
            let key: Vec<u64> = pt.iter().map(|e| e.index()).collect();
            if seen.insert(key) {
                out.push(pt);
            }
        }
        out
    }
}

fn point_key(pt: &[FieldElem]) -> Vec<u64> {
    pt.iter().map(|e| e.index()).collect()
}

/// Realize an F_p-subgroup `L` of `F_q^n` with `|L| = q^k` as the image of
/// `F_q^k` under additive-polynomial rows. The returned witness base-changes:
/// evaluating over `F_{q^m}` yields a subgroup of order `q^(k m)` (verified
/// for small m, with deterministic fallback over basis assignments).
pub fn realize_subgroup(
    base: &Field,
    ambient_dim: usize,
    members: &[Vec<FieldElem>],
) -> Result<Realization, DualityError> {
    let q = base.order();
    let p = base.p();
    let r = base.degree() as usize;
    if members.iter().any(|pt| pt.len() != ambient_dim) {
        return Err(DualityError::AmbientMismatch);
    }
    // order must be q^k
    let size = members.len() as u64;
    let mut k = 0u32;
    let mut s = 1u64;
    while s < size {
        s *= q;
        k += 1;
    }
    if s != size {
        return Err(DualityError::NotPowerOfQ(size, q));
    }
    let k = k as usize;
    // additive closure (exponent p, so this is F_p-linearity)
    let member_set: HashSet<Vec<u64>> = members.iter().map(|pt| point_key(pt)).collect();
    if member_set.len() != members.len() {
        return Err(DualityError::NotAdditivelyClosed);
    }
    if !member_set.contains(&vec![0u64; ambient_dim]) {
        return Err(DualityError::NotAdditivelyClosed);
    }
    for a in members {
        for b in members {
            let sum: Vec<u64> = a
                .iter()
                .zip(b)
                .map(|(x, y)| x.add(y).index())
                .collect();
            if !member_set.contains(&sum) {
                return Err(DualityError::NotAdditivelyClosed);
            }
        }
    }
    // canonical F_p-basis of L: greedy over members sorted by encoding
    let mut sorted: Vec<&Vec<FieldElem>> = members.iter().collect();
    sorted.sort_by_key(|pt| point_key(pt));
    let mut basis: Vec<Vec<FieldElem>> = Vec::new();
    let mut span: HashSet<Vec<u64>> = HashSet::new();
    span.insert(vec![0u64; ambient_dim]);
    for pt in sorted {
        if span.contains(&point_key(pt)) {
            continue;
        }
        basis.push(pt.clone());
        // extend span: old span + all F_p multiples of pt
        let old: Vec<Vec<u64>> = span.iter().cloned().collect();
        for key in old {
            let v: Vec<FieldElem> = key
                .iter()
                .map(|&ix| base.elem(ix))
                .collect();
            let mut acc = v;
            for _ in 1..p {
                acc = acc
                    .iter()
                    .zip(pt)
                    .map(|(x, y)| x.add(y))
                    .collect();
                span.insert(point_key(&acc));
            }
        }
        if span.len() == members.len() {
            break;
        }
    }
    let dim_p = k * r;
    assert_eq!(basis.len(), dim_p, "basis of an F_p-space of order q^k");

    // basis of F_q^k over F_p: alpha^t e_j in canonical order (j outer)
    let build = |assignment: &[usize]| -> Realization {
        let mut rows = vec![vec![LinearizedPoly::zero(base); k]; ambient_dim];
        for c in 0..ambient_dim {
            for j in 0..k {
                // F_p-linear map F_q -> F_q: alpha^t -> basis[assignment[j*r+t]][c]
                let mut matrix = vec![vec![0u64; r]; r];
                for t in 0..r {
                    let img = &basis[assignment[j * r + t]][c];
                    for i in 0..r {
                        matrix[i][t] = img.coords()[i];
                    }
                }
                rows[c][j] = moore_solve(base, &matrix);
            }
        }
        Realization {
            base: base.clone(),
            ambient_dim,
            param_dim: k,
            rows,
            base_change_checked: 1,
        }
    };

    let verify = |rz: &Realization| -> Option<u32> {
        // m = 1: exact set equality with L
        let img: HashSet<Vec<u64>> = rz.image_points(1).iter().map(|pt| point_key(pt)).collect();
        if img != member_set {
            return None;
        }
        let mut checked = 1u32;
        for m in 2..=3u32 {
            let card = (q as u128).pow(m * k as u32);
            if card > (1u128 << 14) {
                break;
            }
            let img = rz.image_points(m);
            if img.len() as u128 != card {
                return None;
            }
            checked = m;
        }
        Some(checked)
    };

    // deterministic fallback: a handful of cyclic rotations of the basis
    // assignment, in case the first image map has extra geometric kernel
    let idx: Vec<usize> = (0..dim_p).collect();
    for rot in 0..dim_p.max(1) {
        let assignment: Vec<usize> = idx.iter().map(|&i| (i + rot) % dim_p).collect();
        let rz = build(&assignment);
        if let Some(checked) = verify(&rz) {
            let mut rz = rz;
            rz.base_change_checked = checked;
            return Ok(rz);
        }
    }
    // first assignment reproduces L at m = 1 by construction; reaching this
    // point means every rotation failed base-change verification
    let mut rz = build(&idx);
    rz.base_change_checked = 1;
    let img: HashSet<Vec<u64>> = rz.image_points(1).iter().map(|pt| point_key(pt)).collect();
    debug_assert_eq!(img, member_set);
    Ok(rz)
}

// ---------------------------------------------------------------------------
// Twisted Laurent polynomials k{tau, tau^-1},  tau c = c^p tau
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq)]
pub struct TwistedPoly {
    field: Field,
    coeffs: BTreeMap<i64, FieldElem>, // only nonzero coefficients
}

impl TwistedPoly {
    pub fn zero(field: &Field) -> TwistedPoly {
        TwistedPoly {
            field: field.clone(),
            coeffs: BTreeMap::new(),
        }
    }

    pub fn from_terms(field: &Field, terms: Vec<(i64, FieldElem)>) -> TwistedPoly {
        let mut f = TwistedPoly::zero(field);
        for (j, c) in terms {
            f.add_term(j, &c);
        }
        f
    }

    pub fn constant(c: &FieldElem) -> TwistedPoly {
        TwistedPoly::from_terms(c.field(), vec![(0, c.clone())])
    }

    pub fn one(field: &Field) -> TwistedPoly {
        TwistedPoly::constant(&field.one())
    }

    /// c * tau^j
    pub fn monomial(c: &FieldElem, j: i64) -> TwistedPoly {
        TwistedPoly::from_terms(c.field(), vec![(j, c.clone())])
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn coeff(&self, j: i64) -> FieldElem {
        self.coeffs
            .get(&j)
            .cloned()
            .unwrap_or_else(|| self.field.zero())
    }

    pub fn support(&self) -> Vec<i64> {
        self.coeffs.keys().cloned().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn add_term(&mut self, j: i64, c: &FieldElem) {
        if c.is_zero() {
            return;
        }
        let cur = self.coeffs.get(&j).cloned().unwrap_or_else(|| self.field.zero());
        let next = cur.add(c);
        if next.is_zero() {
            self.coeffs.remove(&j);
        } else {
            self.coeffs.insert(j, next);
        }
    }

    pub fn add(&self, other: &TwistedPoly) -> TwistedPoly {
        assert_eq!(self.field, other.field, "twisted ring base mismatch");
        let mut out = self.clone();
        for (&j, c) in &other.coeffs {
            out.add_term(j, c);
        }
        out
    }

    pub fn neg(&self) -> TwistedPoly {
        let mut out = TwistedPoly::zero(&self.field);
        for (&j, c) in &self.coeffs {
            out.add_term(j, &c.neg());
        }
        out
    }

    pub fn sub(&self, other: &TwistedPoly) -> TwistedPoly {
        self.add(&other.neg())
    }

    /// Product under `tau^i c = c^(p^i) tau^i`.
    pub fn mul(&self, other: &TwistedPoly) -> TwistedPoly {
        assert_eq!(self.field, other.field, "twisted ring base mismatch");
        let mut out = TwistedPoly::zero(&self.field);
        for (&i, ci) in &self.coeffs {
            for (&j, dj) in &other.coeffs {
                out.add_term(i + j, &ci.mul(&frobenius(dj, i)));
            }
        }
        out
    }

    /// The anti-involution determined by `c* = c`, `tau* = tau^-1`:
    /// `(c tau^j)* = c^(p^-j) tau^-j`.
    pub fn star(&self) -> TwistedPoly {
        let mut out = TwistedPoly::zero(&self.field);
        for (&j, c) in &self.coeffs {
            out.add_term(-j, &frobenius(c, -j));
        }
        out
    }

    /// Membership in the F_p-span of `{tau^j c - c tau^-j : j >= 1}`.
    /// Coefficientwise: the constant term vanishes and
    /// `c_(-j) = -(c_j)^(p^-j)` for every j >= 1. For p = 2 this is the
    /// span definition verbatim, which is strictly stronger than f* = -f
    /// (the constant term must vanish).
    pub fn is_skewsymmetric(&self) -> bool {
        if !self.coeff(0).is_zero() {
            return false;
        }
        for (&j, c) in &self.coeffs {
            if j <= 0 {
                continue;
            }
            if self.coeff(-j) != frobenius(c, -j).neg() {
                return false;
            }
        }
        // also reject negative-support coefficients without a positive mate
        for &j in self.coeffs.keys() {
            if j < 0 && self.coeff(-j).is_zero() {
                return false;
            }
        }
        true
    }

    /// Map the coefficients into an extension field of the base.
    pub fn lift(&self, ext: &Field) -> TwistedPoly {
        let mut out = TwistedPoly::zero(ext);
        for (&j, c) in &self.coeffs {
            out.add_term(j, &embed(c, ext).expect("coefficient lifts to extension"));
        }
        out
    }
}

impl fmt::Debug for TwistedPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (j, c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{:?}*t^{}", c, j)?;
        }
        Ok(())
    }
}

/// `F(x, y) = x* a x - y* b* x + x* b y + y* d y` for a skew 2x2 form
/// `[[a, b], [-b*, d]]`. Always satisfies `F* = -F`.
pub fn f_eval(
    a: &TwistedPoly,
    b: &TwistedPoly,
    d: &TwistedPoly,
    x: &TwistedPoly,
    y: &TwistedPoly,
) -> Result<TwistedPoly, DualityError> {
    if !a.is_skewsymmetric() || !d.is_skewsymmetric() {
        return Err(DualityError::NotSkewsymmetric);
    }
    let xs = x.star();
    let ys = y.star();
    let t1 = xs.mul(a).mul(x);
    let t2 = ys.mul(&b.star()).mul(x);
    let t3 = xs.mul(b).mul(y);
    let t4 = ys.mul(d).mul(y);
    Ok(t1.sub(&t2).add(&t3).add(&t4))
}

/// Outcome of a bounded isotropic-vector search. A miss is a statement about
/// the explored frontier only, never a nonexistence claim.
#[derive(Debug)]
pub struct IsotropicOutcome {
    pub found: Option<IsotropicWitness>,
    /// (extension degree m, strategy label) pairs explored, in order.
    pub frontier: Vec<(u32, String)>,
}

#[derive(Debug)]
pub struct IsotropicWitness {
    pub x: TwistedPoly,
    pub y: TwistedPoly,
    pub ext_degree: u32,
    pub strategy: String,
    /// F(x, y) recomputed over the extension; zero by construction.
    pub residual: TwistedPoly,
}

// --- dense polynomials over a Field (little-endian), for root finding ---

fn fpoly_trim(v: &mut Vec<FieldElem>) {
    while v.last().map_or(false, |c| c.is_zero()) {
        v.pop();
    }
}

fn fpoly_rem(a: &mut Vec<FieldElem>, m: &[FieldElem]) {
    let d = m.len() - 1;
    let lead_inv = m[d].inv();
    while a.len() > d {
        let lead = a.last().unwrap().mul(&lead_inv);
        let k = a.len() - 1 - d;
        if !lead.is_zero() {
            for i in 0..d {
                let sub = lead.mul(&m[i]);
                a[k + i] = a[k + i].sub(&sub);
            }
        }
        a.pop();
    }
    fpoly_trim(a);
}

fn fpoly_mul_mod(a: &[FieldElem], b: &[FieldElem], m: &[FieldElem], field: &Field) -> Vec<FieldElem> {
    let mut prod = vec![field.zero(); a.len() + b.len()];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            prod[i + j] = prod[i + j].add(&x.mul(y));
        }
    }
    fpoly_rem(&mut prod, m);
    prod
}

fn fpoly_gcd(a: &[FieldElem], b: &[FieldElem], _field: &Field) -> Vec<FieldElem> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    fpoly_trim(&mut a);
    fpoly_trim(&mut b);
    while !b.is_empty() {
        fpoly_rem(&mut a, &b);
        std::mem::swap(&mut a, &mut b);
    }
    if let Some(l) = a.last().cloned() {
        let inv = l.inv();
        for c in a.iter_mut() {
            *c = c.mul(&inv);
        }
    }
    a
}

fn fpoly_eval(a: &[FieldElem], x: &FieldElem, field: &Field) -> FieldElem {
    let mut acc = field.zero();
    for c in a.iter().rev() {
        acc = acc.mul(x).add(c);
    }
    acc
}

/// True iff the polynomial has a root in its coefficient field
/// (via gcd with X^|F| - X); callers scan only on a hit.
fn fpoly_has_root(a: &[FieldElem], field: &Field) -> bool {
    let mut a = a.to_vec();
    fpoly_trim(&mut a);
    if a.len() <= 1 {
        return a.is_empty(); // zero polynomial: every point is a root
    }
    // X^|F| mod a, minus X, then gcd
    let x = vec![field.zero(), field.one()];
    let mut acc = vec![field.one()];
    let mut b = x.clone();
    fpoly_rem(&mut b, &a);
    let mut e = field.order();
    while e > 0 {
        if e & 1 == 1 {
            acc = fpoly_mul_mod(&acc, &b, &a, field);
        }
        b = fpoly_mul_mod(&b, &b, &a, field);
        e >>= 1;
    }
    // acc - X
    let mut diff = acc;
    while diff.len() < 2 {
        diff.push(field.zero());
    }
    diff[1] = diff[1].sub(&field.one());
    fpoly_trim(&mut diff);
    let g = fpoly_gcd(&a, &diff, field);
    g.len() > 1
}

/// Bounded search for a nonzero isotropic pair of the skew form
/// `[[a, b], [-b*, d]]`. Strategies are tried in a fixed diagonal order over
/// the extension degree m <= m_max; coefficients of the witness live in
/// `F_(q^m)`. Support of candidate vectors stays within `[-n, n]`.
pub fn isotropic_search(
    a: &TwistedPoly,
    b: &TwistedPoly,
    d: &TwistedPoly,
    support_n: i64,
    m_max: u32,
) -> Result<IsotropicOutcome, DualityError> {
    if !a.is_skewsymmetric() || !d.is_skewsymmetric() {
        return Err(DualityError::NotSkewsymmetric);
    }
    let base = a.field().clone();
    assert_eq!(base, *b.field());
    assert_eq!(base, *d.field());
    let mut frontier = Vec::new();

    // degenerate diagonal entries give a coordinate vector immediately
    if a.is_zero() {
        let w = witness(a, b, d, TwistedPoly::one(&base), TwistedPoly::zero(&base), 1, "a = 0");
        frontier.push((1, "a = 0".to_string()));
        return Ok(IsotropicOutcome { found: Some(w), frontier });
    }
    if d.is_zero() {
        let w = witness(a, b, d, TwistedPoly::zero(&base), TwistedPoly::one(&base), 1, "d = 0");
        frontier.push((1, "d = 0".to_string()));
        return Ok(IsotropicOutcome { found: Some(w), frontier });
    }

    for m in 1..=m_max {
        let Ok(ext) = make_field(base.p(), base.degree() * m) else {
            break;
        };
        let (ae, be, de) = (a.lift(&ext), b.lift(&ext), d.lift(&ext));

        // strategy: x, y constant in F_(q^m); twisting both by the same
        // tau-power changes nothing, so this covers all monomial pairs of
        // equal twist within the support bound.
        frontier.push((m, "constant pair".to_string()));
        if let Some((xi, eta)) = constant_pair_search(&ae, &be, &de, &ext) {
            let w = witness(
                a,
                b,
                d,
                TwistedPoly::constant(&xi),
                TwistedPoly::constant(&eta),
                m,
                "constant pair",
            );
            return Ok(IsotropicOutcome { found: Some(w), frontier });
        }

        // strategy: full enumeration of coefficient vectors with support in
        // [-n, n], when the space is small enough to sweep exactly
        for n in 0..=support_n {
            let vars = 2 * (2 * n as u32 + 1);
            let space = (ext.order() as u128).checked_pow(vars);
            match space {
                Some(s) if s <= 1 << 18 => {
                    frontier.push((m, format!("enumeration |j| <= {n}")));
                    if let Some((x, y)) = enumerate_search(&ae, &be, &de, &ext, n) {
                        let w = witness(a, b, d, x, y, m, "enumeration");
                        return Ok(IsotropicOutcome { found: Some(w), frontier });
                    }
                }
                _ => break,
            }
        }
    }
    Ok(IsotropicOutcome { found: None, frontier })
}

fn witness(
    a: &TwistedPoly,
    b: &TwistedPoly,
    d: &TwistedPoly,
    x: TwistedPoly,
    y: TwistedPoly,
    m: u32,
    strategy: &str,
) -> IsotropicWitness {
    let ext = x.field().clone();
    let residual = f_eval(&a.lift(&ext), &b.lift(&ext), &d.lift(&ext), &x, &y)
        .expect("inputs already validated");
    assert!(residual.is_zero(), "isotropic witness must verify exactly");
    IsotropicWitness {
        x,
        y,
        ext_degree: m,
        strategy: strategy.to_string(),
        residual,
    }
}

/// For constant x = xi, y = eta the form reduces to the plane-curve system
/// `G_u(xi, eta) = a_u xi^(p^u + 1) + b_u xi eta^(p^u) - b_(-u)^(p^u) eta xi^(p^u)
///  + d_u eta^(p^u + 1) = 0` for every u >= 1 in the support. For each xi we
/// take the gcd of the resulting eta-polynomials and pick the least root.
fn constant_pair_search(
    a: &TwistedPoly,
    b: &TwistedPoly,
    d: &TwistedPoly,
    ext: &Field,
) -> Option<(FieldElem, FieldElem)> {
    let mut us: Vec<i64> = a
        .support()
        .into_iter()
        .chain(b.support())
        .chain(d.support())
        .map(|j| j.abs())
        .filter(|&j| j > 0)
        .collect();
    us.sort_unstable();
    us.dedup();
    if us.is_empty() {
        return None; // all constants: handled by the a = 0 / d = 0 shortcuts
    }
    let p = ext.p();
    if us.iter().any(|&u| p.checked_pow(u as u32 + 1).map_or(true, |d| d > 1 << 12)) {
        return None; // equation degree out of desk range
    }
    for xi_idx in 1..ext.order() {
        let xi = ext.elem(xi_idx);
        // build eta-polynomials per u and intersect by gcd
        let mut g: Option<Vec<FieldElem>> = None;
        for &u in &us {
            let pu = p.pow(u as u32) as usize;
            let au = a.coeff(u);
            let bu = b.coeff(u);
            let bmu = b.coeff(-u);
            let du = d.coeff(u);
            let mut poly = vec![ext.zero(); pu + 2];
            // d_u eta^(p^u+1)
            poly[pu + 1] = du.clone();
            // b_u xi eta^(p^u)
            poly[pu] = poly[pu].add(&bu.mul(&xi));
            // -b_(-u)^(p^u) xi^(p^u) eta
            poly[1] = poly[1].sub(&frobenius(&bmu, u).mul(&frobenius(&xi, u)));
            // a_u xi^(p^u+1)
            poly[0] = poly[0].add(&au.mul(&xi).mul(&frobenius(&xi, u)));
            fpoly_trim(&mut poly);
            g = Some(match g {
                None => poly,
                Some(prev) => fpoly_gcd(&prev, &poly, ext),
            });
            if g.as_ref().unwrap().len() == 1 {
                break; // gcd is a nonzero constant: no common root for this xi
            }
        }
        let g = g.unwrap();
        if g.len() == 1 {
            continue;
        }
        if g.is_empty() {
            // every eta works; pick eta = 0 gives (xi, 0) with xi != 0
            return Some((xi, ext.zero()));
        }
        if fpoly_has_root(&g, ext) {
            for eta_idx in 0..ext.order() {
                let eta = ext.elem(eta_idx);
                if fpoly_eval(&g, &eta, ext).is_zero() {
                    return Some((xi, eta));
                }
            }
        }
    }
    None
}

fn enumerate_search(
    a: &TwistedPoly,
    b: &TwistedPoly,
    d: &TwistedPoly,
    ext: &Field,
    n: i64,
) -> Option<(TwistedPoly, TwistedPoly)> {
    let positions: Vec<i64> = (-n..=n).collect();
    let q = ext.order();
    let vars = 2 * positions.len();
    let total = (q as u128).pow(vars as u32);
    for idx in 1..total {
        let mut v = idx;
        let mut coeffs = Vec::with_capacity(vars);
        for _ in 0..vars {
            coeffs.push(ext.elem((v % q as u128) as u64));
            v /= q as u128;
        }
        let x = TwistedPoly::from_terms(
            ext,
            positions.iter().cloned().zip(coeffs[..positions.len()].iter().cloned()).collect(),
        );
        let y = TwistedPoly::from_terms(
            ext,
            positions.iter().cloned().zip(coeffs[positions.len()..].iter().cloned()).collect(),
        );
        if x.is_zero() && y.is_zero() {
            continue;
        }
        if f_eval(a, b, d, &x, &y).ok()?.is_zero() {
            return Some((x, y));
        }
    }
    None
}

/// Seeded random skewsymmetric element with support in `[-max_j, max_j]`.
pub fn random_skew(field: &Field, max_j: i64, rng: &mut impl Rng) -> TwistedPoly {
    let mut f = TwistedPoly::zero(field);
    for j in 1..=max_j {
        let c = field.elem(rng.random_range(0..field.order()));
        if c.is_zero() {
            continue;
        }
        f.add_term(j, &c);
        f.add_term(-j, &frobenius(&c, -j).neg());
    }
    f
}

/// Seeded random element with support in `[-max_j, max_j]`.
pub fn random_twisted(field: &Field, max_j: i64, rng: &mut impl Rng) -> TwistedPoly {
    let mut f = TwistedPoly::zero(field);
    for j in -max_j..=max_j {
        let c = field.elem(rng.random_range(0..field.order()));
        f.add_term(j, &c);
    }
    f
}

// ---------------------------------------------------------------------------
// Lang-isogeny characters and the finite Serre-Pontryagin pairing
// ---------------------------------------------------------------------------

/// Additive character of `A(F_q) = F_q^n`:
/// `chi(x) = (1/p) Tr_(F_q/F_p)(sum_i dual_i x_i)` as a value of mu.
#[derive(Clone, PartialEq, Eq)]
pub struct AdditiveChar {
    base: Field,
    dual: Vec<FieldElem>,
}

impl AdditiveChar {
    pub fn new(base: &Field, dual: Vec<FieldElem>) -> AdditiveChar {
        assert!(dual.iter().all(|c| c.field() == base));
        AdditiveChar {
            base: base.clone(),
            dual,
        }
    }

    pub fn base(&self) -> &Field {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.dual.len()
    }

    pub fn dual_coords(&self) -> &[FieldElem] {
        &self.dual
    }

    pub fn eval(&self, x: &[FieldElem]) -> MuVal {
        assert_eq!(x.len(), self.dual.len());
        let p = self.base.p();
        let fp = make_field(p, 1).expect("prime field");
        let mut s = self.base.zero();
        for (a, xi) in self.dual.iter().zip(x) {
            s = s.add(&a.mul(xi));
        }
        let t = rel_trace(&s, &fp).expect("trace to the prime field");
        MuVal::new(p, 1, t.coords()[0])
    }
}

/// Transcript of a Lang-isogeny character evaluation: the cocycle route and
/// the trace route, which must agree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LangEval {
    pub value: MuVal,
    pub via_trace: MuVal,
    /// Degree over F_(q^m) of the field where the Lang equation was solved.
    pub solve_ext: u32,
}

/// Evaluate the Lang-pushforward character of `chi` at a point
/// `x in A(F_(q^m))` for the coordinatewise additive model `A = G_a^n`:
/// solve `Fr_q(g) - g = x` in a finite extension and return
/// `chi(Fr_(q^m)(g) - g)`. Cross-checked against `chi(Tr(x))`.
pub fn lang_character(
    chi: &AdditiveChar,
    x: &[FieldElem],
) -> Result<LangEval, DualityError> {
    assert_eq!(x.len(), chi.dim());
    let base = chi.base();
    let ext = x
        .first()
        .map(|e| e.field().clone())
        .unwrap_or_else(|| base.clone());
    assert_eq!(ext.degree() % base.degree(), 0, "point must live over an extension of the base");
    let m = ext.degree() / base.degree();

    let mut delta = Vec::with_capacity(x.len());
    let mut solve_ext = 1;
    for xi in x {
        let (g, s) = solve_lang_coordinate(base, &ext, xi)?;
        solve_ext = solve_ext.max(s);
        // delta = Fr_(q^m)(g) - g lies in F_q
        let d_big = frobenius(&g, (base.degree() * m) as i64).sub(&g);
        let d = subfield_coords(&d_big, base)?
            .ok_or(DualityError::LangUnsolvable)?;
        delta.push(d);
    }
    let value = chi.eval(&delta);

    // second route: chi(Tr_(F_(q^m)/F_q)(x))
    let traced: Vec<FieldElem> = x
        .iter()
        .map(|xi| rel_trace(xi, base))
        .collect::<Result<_, _>>()?;
    let via_trace = chi.eval(&traced);
    if value != via_trace {
        // the two routes agree by the telescoping identity; disagreement is
        // an internal arithmetic error
        return Err(DualityError::LangUnsolvable);
    }
    Ok(LangEval {
        value,
        via_trace,
        solve_ext,
    })
}

/// Solve `Fr_q(g) - g = x` for one coordinate, first over the field of x,
/// then over its degree-p extension (always solvable there).
fn solve_lang_coordinate(
    base: &Field,
    ext: &Field,
    x: &FieldElem,
) -> Result<(FieldElem, u32), DualityError> {
    let p = base.p();
    let r = base.degree();
    for s in [1u32, p as u32] {
        let Ok(big) = make_field(p, ext.degree() * s) else {
            continue;
        };
        let xe = embed(x, &big)?;
        let dim = big.degree() as usize;
        // matrix of g -> g^q - g on the F_p power basis
        let mut cols: Vec<Vec<u64>> = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut coords = vec![0u64; dim];
            coords[i] = 1;
            let bi = big.from_coords(&coords);
            let img = frobenius(&bi, r as i64).sub(&bi);
            cols.push(img.coords().to_vec());
        }
        let matrix: Vec<Vec<u64>> = (0..dim)
            .map(|row| (0..dim).map(|col| cols[col][row]).collect())
            .collect();
        if let Some(g) = fp_solve(&matrix, xe.coords(), p) {
            return Ok((big.from_coords(&g), s));
        }
    }
    Err(DualityError::LangUnsolvable)
}

/// The finite Serre-Pontryagin pairing on `A = G_a^n` over F_q:
/// `(x, a) -> (1/p) Tr_(F_q/F_p)(sum a_i x_i)`.
pub struct SerrePairing {
    pub base: Field,
    pub dim: usize,
    /// entries[row a][col x] over the lexicographic point enumeration.
    pub entries: Vec<Vec<MuVal>>,
}

pub fn serre_pairing_matrix(base: &Field, dim: usize) -> SerrePairing {
    let q = base.order();
    let total = q.pow(dim as u32);
    let decode = |mut v: u64| -> Vec<FieldElem> {
        (0..dim)
            .map(|_| {
                let e = base.elem(v % q);
                v /= q;
                e
            })
            .collect()
    };
    let mut entries = Vec::with_capacity(total as usize);
    for ai in 0..total {
        let chi = AdditiveChar::new(base, decode(ai));
        let row: Vec<MuVal> = (0..total).map(|xi| chi.eval(&decode(xi))).collect();
        entries.push(row);
    }
    SerrePairing {
        base: base.clone(),
        dim,
        entries,
    }
}

impl SerrePairing {
    /// Perfectness: the character matrix `psi(entries)` is invertible.
    /// Verified exactly via row orthogonality `M conj(M)^T = q^n I`.
    pub fn is_perfect(&self) -> bool {
        use crate::cyclo::{psi, CycloNum};
        let n = self.entries.len();
        let p = self.base.p();
        let qn = num_bigint::BigInt::from(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = CycloNum::zero(p, 1);
                for k in 0..n {
                    acc = acc.add(&psi(&self.entries[i][k]).mul(&psi(&self.entries[j][k]).conj()));
                }
                let expect = if i == j { qn.clone() } else { num_bigint::BigInt::from(0) };
                match acc.as_integer() {
                    Some(v) if v == expect => {}
                    _ => return false,
                }
            }
        }
        true
    }
}

// ---------------------------------------------------------------------------
// Finite abelian p-groups, pairings, quadratic forms, Lagrangian search
// ---------------------------------------------------------------------------

/// Finite abelian p-group presented as a product of cyclic factors of
/// p-power order. Elements are exponent vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinAb {
    p: u64,
    orders: Vec<u64>,
}

impl FinAb {
    pub fn new(p: u64, orders: Vec<u64>) -> FinAb {
        for &o in &orders {
            let mut v = o;
            while v % p == 0 {
                v /= p;
            }
            assert_eq!(v, 1, "factor orders must be powers of p");
            assert!(o > 1);
        }
        FinAb { p, orders }
    }

    pub fn trivial(p: u64) -> FinAb {
        FinAb { p, orders: vec![] }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn orders(&self) -> &[u64] {
        &self.orders
    }

    pub fn size(&self) -> u64 {
        self.orders.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.orders.len()
    }

    pub fn exponent(&self) -> u64 {
        self.orders.iter().cloned().max().unwrap_or(1)
    }

    pub fn zero(&self) -> Vec<u64> {
        vec![0; self.orders.len()]
    }

    pub fn add(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        a.iter()
            .zip(b)
            .zip(&self.orders)
            .map(|((&x, &y), &o)| (x + y) % o)
            .collect()
    }

    pub fn neg(&self, a: &[u64]) -> Vec<u64> {
        a.iter()
            .zip(&self.orders)
            .map(|(&x, &o)| (o - x) % o)
            .collect()
    }

    pub fn scale(&self, a: &[u64], n: u64) -> Vec<u64> {
        a.iter()
            .zip(&self.orders)
            .map(|(&x, &o)| x * (n % o) % o)
            .collect()
    }

    pub fn elem(&self, mut idx: u64) -> Vec<u64> {
        self.orders
            .iter()
            .map(|&o| {
                let d = idx % o;
                idx /= o;
                d
            })
            .collect()
    }

    pub fn index_of(&self, a: &[u64]) -> u64 {
        let mut idx = 0u64;
        for (&x, &o) in a.iter().zip(&self.orders).rev() {
            idx = idx * o + x;
        }
        idx
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<u64>> + '_ {
        (0..self.size()).map(move |i| self.elem(i))
    }

    pub fn elem_order(&self, a: &[u64]) -> u64 {
        a.iter()
            .zip(&self.orders)
            .map(|(&x, &o)| {
                if x == 0 {
                    1
                } else {
                    o / num_integer::gcd(x, o)
                }
            })
            .max()
            .unwrap_or(1)
    }
}

/// Bi-additive pairing `W x W -> mu`, stored on the generator basis.
#[derive(Clone, Debug)]
pub struct Pairing {
    pub group: FinAb,
    pub gram: Vec<Vec<MuVal>>,
}

impl Pairing {
    pub fn new(group: FinAb, gram: Vec<Vec<MuVal>>) -> Result<Pairing, DualityError> {
        if group.size() > PAIRING_CAP {
            return Err(DualityError::PairingTooLarge(group.size(), PAIRING_CAP));
        }
        let n = group.rank();
        if gram.len() != n || gram.iter().any(|row| row.len() != n) {
            return Err(DualityError::BadPairingTable);
        }
        // B(g_i, g_j) must be killed by both factor orders
        for i in 0..n {
            for j in 0..n {
                let v = &gram[i][j];
                if !v.scale(group.orders()[i] as i64).is_zero()
                    || !v.scale(group.orders()[j] as i64).is_zero()
                {
                    return Err(DualityError::BadPairingTable);
                }
            }
        }
        Ok(Pairing { group, gram })
    }

    pub fn eval(&self, a: &[u64], b: &[u64]) -> MuVal {
        let p = self.group.p();
        let mut acc = MuVal::zero(p);
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0 {
                continue;
            }
            for (j, &bj) in b.iter().enumerate() {
                if bj == 0 {
                    continue;
                }
                acc = acc.add(&self.gram[i][j].scale((ai * bj) as i64));
            }
        }
        acc
    }

    pub fn is_alternating(&self) -> bool {
        self.group.iter().all(|x| self.eval(&x, &x).is_zero())
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.group.rank();
        (0..n).all(|i| (0..n).all(|j| self.gram[i][j] == self.gram[j][i]))
    }

    /// Radical: elements pairing trivially with everything.
    pub fn radical(&self) -> Vec<Vec<u64>> {
        self.group
            .iter()
            .filter(|x| self.group.iter().all(|y| self.eval(x, &y).is_zero()))
            .collect()
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.radical().len() == 1
    }
}

/// Validated alternating pairing.
#[derive(Clone, Debug)]
pub struct AlternatingPairing(pub Pairing);

impl AlternatingPairing {
    pub fn new(pairing: Pairing) -> Result<AlternatingPairing, DualityError> {
        if !pairing.is_alternating() {
            return Err(DualityError::BadPairingTable);
        }
        Ok(AlternatingPairing(pairing))
    }

    pub fn group(&self) -> &FinAb {
        &self.0.group
    }

    pub fn eval(&self, a: &[u64], b: &[u64]) -> MuVal {
        self.0.eval(a, b)
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.0.is_nondegenerate()
    }
}

/// Hyperbolic-plane peeling: find a subgroup `L` with `B|_(L x L) = 0` and
/// `|L|^2 = |W|`. Requires a nondegenerate pairing.
pub fn find_lagrangian(pairing: &AlternatingPairing) -> Result<Vec<Vec<u64>>, DualityError> {
    let w = pairing.group();
    if !pairing.is_nondegenerate() {
        return Err(DualityError::DegeneratePairing);
    }
    let mut current: Vec<Vec<u64>> = w.iter().collect();
    let mut lagr_gens: Vec<Vec<u64>> = Vec::new();
    loop {
        if current.len() == 1 {
            break;
        }
        // first element of maximal order, in canonical order
        let max_ord = current.iter().map(|x| w.elem_order(x)).max().unwrap();
        let x = current
            .iter()
            .find(|e| w.elem_order(e) == max_ord)
            .unwrap()
            .clone();
        // partner with pairing value of full order
        let y = current
            .iter()
            .find(|yy| pairing.eval(&x, yy).order() == max_ord)
            .cloned()
            .ok_or(DualityError::DegeneratePairing)?;
        lagr_gens.push(x.clone());
        current.retain(|v| pairing.eval(&x, v).is_zero() && pairing.eval(&y, v).is_zero());
    }
    // subgroup generated by the isotropic generators
    let mut members: HashSet<Vec<u64>> = HashSet::new();
    members.insert(w.zero());
    for g in &lagr_gens {
        let snapshot: Vec<Vec<u64>> = members.iter().cloned().collect();
        for base_el in snapshot {
            let mut acc = base_el.clone();
            for _ in 0..w.elem_order(g) {
                acc = w.add(&acc, g);
                members.insert(acc.clone());
            }
        }
    }
    let mut l: Vec<Vec<u64>> = members.into_iter().collect();
    l.sort();
    // exhaustive verification of the defining properties
    let sz = l.len() as u64;
    if sz * sz != w.size() {
        return Err(DualityError::DegeneratePairing);
    }
    for a in &l {
        for b in &l {
            if !pairing.eval(a, b).is_zero() {
                return Err(DualityError::DegeneratePairing);
            }
        }
    }
    Ok(l)
}

/// Seeded random nondegenerate alternating pairing on `(Z/p)^(2n)`.
pub fn random_nondegenerate_alternating(
    p: u64,
    n: usize,
    rng: &mut impl Rng,
) -> AlternatingPairing {
    let group = FinAb::new(p, vec![p; 2 * n]);
    loop {
        let dim = 2 * n;
        let mut gram = vec![vec![MuVal::zero(p); dim]; dim];
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = rng.random_range(0..p);
                gram[i][j] = MuVal::new(p, 1, a);
                gram[j][i] = MuVal::new(p, 1, (p - a) % p);
            }
        }
        let pairing = Pairing::new(group.clone(), gram).expect("valid table");
        if pairing.is_nondegenerate() {
            return AlternatingPairing(pairing);
        }
    }
}

/// `mu`-valued quadratic form on a finite abelian p-group, tabulated per
/// element in the canonical enumeration.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    pub group: FinAb,
    pub table: Vec<MuVal>,
}

impl QuadraticForm {
    pub fn new(group: FinAb, table: Vec<MuVal>) -> Result<QuadraticForm, DualityError> {
        if group.size() > PAIRING_CAP {
            return Err(DualityError::PairingTooLarge(group.size(), PAIRING_CAP));
        }
        if table.len() as u64 != group.size() {
            return Err(DualityError::BadPairingTable);
        }
        Ok(QuadraticForm { group, table })
    }

    pub fn eval(&self, x: &[u64]) -> MuVal {
        self.table[self.group.index_of(x) as usize].clone()
    }

    /// The polarization `B(x, y) = q(x+y) - q(x) - q(y)`.
    pub fn polarization(&self, x: &[u64], y: &[u64]) -> MuVal {
        self.eval(&self.group.add(x, y))
            .sub(&self.eval(x))
            .sub(&self.eval(y))
    }
}

/// Verdict of the quadratic-refinement check: the two defining identities
/// plus nondegeneracy of the induced bi-additive map, exhaustively verified.
#[derive(Debug, Clone)]
pub struct RefinementVerdict {
    pub homogeneous: bool,
    pub homogeneity_counterexample: Option<(u64, Vec<u64>)>,
    pub polarization_matches: bool,
    pub polarization_counterexample: Option<(Vec<u64>, Vec<u64>)>,
    pub nondegenerate: bool,
    pub radical_witness: Option<Vec<u64>>,
}

impl RefinementVerdict {
    pub fn passes(&self) -> bool {
        self.homogeneous && self.polarization_matches && self.nondegenerate
    }
}

/// Check `q(n x) = n^2 q(x)` and `B(x, y) = q(x+y) - q(x) - q(y)` against
/// the supplied pairing, then nondegeneracy of the induced form.
pub fn check_quadratic_refinement(q: &QuadraticForm, pairing: &Pairing) -> RefinementVerdict {
    let w = &q.group;
    assert_eq!(*w, pairing.group, "forms must live on the same group");
    let mut verdict = RefinementVerdict {
        homogeneous: true,
        homogeneity_counterexample: None,
        polarization_matches: true,
        polarization_counterexample: None,
        nondegenerate: true,
        radical_witness: None,
    };
    let e = w.exponent();
    'homog: for x in w.iter() {
        for n in 0..=e {
            let lhs = q.eval(&w.scale(&x, n));
            let rhs = q.eval(&x).scale((n * n) as i64);
            if lhs != rhs {
                verdict.homogeneous = false;
                verdict.homogeneity_counterexample = Some((n, x));
                break 'homog;
            }
        }
    }
    'polar: for x in w.iter() {
        for y in w.iter() {
            if q.polarization(&x, &y) != pairing.eval(&x, &y) {
                verdict.polarization_matches = false;
                verdict.polarization_counterexample = Some((x, y));
                break 'polar;
            }
        }
    }
    for x in w.iter() {
        if w.elem_order(&x) == 1 {
            continue;
        }
        if w.iter().all(|y| q.polarization(&x, &y).is_zero()) {
            verdict.nondegenerate = false;
            verdict.radical_witness = Some(x);
            break;
        }
    }
    verdict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::make_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moore_identity_and_frobenius() {
        let f4 = make_field(2, 2).unwrap();
        let id = moore_solve_map(&f4, |x| x.clone());
        assert_eq!(id, LinearizedPoly::identity(&f4));
        let fr = moore_solve_map(&f4, |x| frobenius(x, 1));
        assert_eq!(fr.coeffs().len(), 2);
        assert!(fr.coeffs()[0].is_zero());
        assert_eq!(fr.coeffs()[1], f4.one());
    }

    #[test]
    fn moore_trace_map_is_x_plus_x_squared() {
        let f2 = make_field(2, 1).unwrap();
        let f4 = make_field(2, 2).unwrap();
        let tr = moore_solve_map(&f4, |x| {
            embed(&rel_trace(x, &f2).unwrap(), &f4).unwrap()
        });
        // x + x^2, checked pointwise on all four elements
        for x in f4.iter() {
            assert_eq!(tr.eval(&x), x.add(&x.mul(&x)));
        }
        assert_eq!(tr.coeffs()[0], f4.one());
        assert_eq!(tr.coeffs()[1], f4.one());
    }

    #[test]
    fn moore_bijection_small() {
        // every F_p-linear map corresponds to exactly one coefficient vector
        for (p, r) in [(2u64, 2u32), (3, 2)] {
            let f = make_field(p, r).unwrap();
            let n = (p.pow(r)).pow(r); // q^r coefficient vectors = p^(r^2) maps
            let mut seen = std::collections::HashSet::new();
            let q = f.order();
            for idx in 0..n {
                let mut v = idx;
                let coeffs: Vec<FieldElem> = (0..r)
                    .map(|_| {
                        let e = f.elem(v % q);
                        v /= q;
                        e
                    })
                    .collect();
                let lp = LinearizedPoly::new(&f, coeffs);
                let values: Vec<u64> = f.iter().map(|x| lp.eval(&x).index()).collect();
                assert!(seen.insert(values), "two coefficient vectors gave one map");
            }
            assert_eq!(seen.len() as u64, n);
        }
    }

    #[test]
    fn realize_coordinate_subgroup_is_identity_like() {
        let f4 = make_field(2, 2).unwrap();
        // L = F_q x {0} in F_q^2
        let members: Vec<Vec<FieldElem>> =
            f4.iter().map(|x| vec![x, f4.zero()]).collect();
        let rz = realize_subgroup(&f4, 2, &members).unwrap();
        assert_eq!(rz.param_dim, 1);
        let img: HashSet<Vec<u64>> = rz.image_points(1).iter().map(|p| point_key(p)).collect();
        let expect: HashSet<Vec<u64>> = members.iter().map(|p| point_key(p)).collect();
        assert_eq!(img, expect);
    }

    #[test]
    fn realize_diagonal() {
        let f3 = make_field(3, 1).unwrap();
        let members: Vec<Vec<FieldElem>> = f3.iter().map(|x| vec![x.clone(), x]).collect();
        let rz = realize_subgroup(&f3, 2, &members).unwrap();
        let img: HashSet<Vec<u64>> = rz.image_points(1).iter().map(|p| point_key(p)).collect();
        let expect: HashSet<Vec<u64>> = members.iter().map(|p| point_key(p)).collect();
        assert_eq!(img, expect);
    }

    #[test]
    fn realize_f2xf2_inside_f4_squared() {
        let f2 = make_field(2, 1).unwrap();
        let f4 = make_field(2, 2).unwrap();
        // order 4 = q^1, not F_4-linear
        let mut members = Vec::new();
        for a in f2.iter() {
            for b in f2.iter() {
                members.push(vec![embed(&a, &f4).unwrap(), embed(&b, &f4).unwrap()]);
            }
        }
        let rz = realize_subgroup(&f4, 2, &members).unwrap();
        assert_eq!(rz.param_dim, 1);
        let img: HashSet<Vec<u64>> = rz.image_points(1).iter().map(|p| point_key(p)).collect();
        let expect: HashSet<Vec<u64>> = members.iter().map(|p| point_key(p)).collect();
        assert_eq!(img, expect);
        // base change gives q^(km) points
        assert!(rz.base_change_checked >= 2);
        assert_eq!(rz.image_points(2).len(), 16);
    }

    #[test]
    fn realize_rejects_non_power_of_q() {
        let f4 = make_field(2, 2).unwrap();
        let members: Vec<Vec<FieldElem>> = vec![
            vec![f4.zero()],
            vec![f4.one()],
        ];
        assert!(matches!(
            realize_subgroup(&f4, 1, &members),
            Err(DualityError::NotPowerOfQ(2, 4))
        ));
    }

    #[test]
    fn twisted_commutation_rule() {
        // tau * c = c^p * tau
        let f9 = make_field(3, 2).unwrap();
        let c = f9.gen();
        let tau = TwistedPoly::monomial(&f9.one(), 1);
        let lhs = tau.mul(&TwistedPoly::constant(&c));
        let rhs = TwistedPoly::constant(&frobenius(&c, 1)).mul(&tau);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn twisted_star_of_monomial() {
        // (c tau^j)* = c^(p^-j) tau^-j
        let f9 = make_field(3, 2).unwrap();
        let c = f9.gen();
        for j in -3i64..=3 {
            let f = TwistedPoly::monomial(&c, j);
            let fs = f.star();
            assert_eq!(fs.coeff(-j), frobenius(&c, -j));
            assert_eq!(fs.support(), vec![-j]);
        }
    }

    #[test]
    fn twisted_ring_axioms_random() {
        let f9 = make_field(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let f = random_twisted(&f9, 4, &mut rng);
            let g = random_twisted(&f9, 4, &mut rng);
            let h = random_twisted(&f9, 4, &mut rng);
            // associativity and the anti-involution laws
            assert_eq!(f.mul(&g).mul(&h), f.mul(&g.mul(&h)));
            assert_eq!(f.mul(&g).star(), g.star().mul(&f.star()));
            assert_eq!(f.star().star(), f);
        }
    }

    #[test]
    fn skewsymmetric_basics() {
        let f9 = make_field(3, 2).unwrap();
        assert!(TwistedPoly::zero(&f9).is_skewsymmetric());
        // tau - tau^-1
        let f = TwistedPoly::from_terms(
            &f9,
            vec![(1, f9.one()), (-1, f9.one().neg())],
        );
        assert!(f.is_skewsymmetric());
        // the unit is not skew for odd p
        assert!(!TwistedPoly::one(&f9).is_skewsymmetric());
    }

    #[test]
    fn skewsymmetric_matches_span_membership() {
        // cross-check against the explicit F_p-span of {tau^j c - c tau^-j}
        let f4 = make_field(2, 2).unwrap();
        let max_j = 3i64;
        let positions: Vec<i64> = (-max_j..=max_j).collect();
        let dim = positions.len() * f4.degree() as usize;
        // span generators as F_2 coordinate vectors
        let encode = |f: &TwistedPoly| -> Vec<u64> {
            let mut v = vec![0u64; dim];
            for (k, &j) in positions.iter().enumerate() {
                let c = f.coeff(j);
                for (i, &ci) in c.coords().iter().enumerate() {
                    v[k * f4.degree() as usize + i] = ci;
                }
            }
            v
        };
        let mut gens = Vec::new();
        for j in 1..=max_j {
            for b in 0..f4.degree() as u64 {
                let mut coords = vec![0u64; f4.degree() as usize];
                coords[b as usize] = 1;
                let c = f4.from_coords(&coords);
                // tau^j c - c tau^-j = c^(p^j) tau^j - c tau^-j
                let gen = TwistedPoly::from_terms(
                    &f4,
                    vec![(j, frobenius(&c, j)), (-j, c.neg())],
                );
                gens.push(encode(&gen));
            }
        }
        let in_span = |v: &[u64]| -> bool {
            let rows = dim;
            let m: Vec<Vec<u64>> = (0..rows)
                .map(|i| gens.iter().map(|g| g[i]).collect())
                .collect();
            fp_solve(&m, v, 2).is_some()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let f = random_twisted(&f4, max_j, &mut rng);
            assert_eq!(f.is_skewsymmetric(), in_span(&encode(&f)));
        }
        // and every generator is accepted
        for j in 1..=max_j {
            let g = TwistedPoly::from_terms(
                &f4,
                vec![(j, frobenius(&f4.gen(), j)), (-j, f4.gen().neg())],
            );
            assert!(g.is_skewsymmetric());
        }
    }

    #[test]
    fn f_eval_zero_and_cancellation() {
        let f9 = make_field(3, 2).unwrap();
        let zero = TwistedPoly::zero(&f9);
        let out = f_eval(&zero, &zero, &zero, &TwistedPoly::one(&f9), &TwistedPoly::one(&f9)).unwrap();
        assert!(out.is_zero());
        // a = tau - tau^-1, d = -a, b = 0, x = y = c  =>  F = c*(a+d)c = 0
        let a = TwistedPoly::from_terms(&f9, vec![(1, f9.one()), (-1, f9.one().neg())]);
        let d = a.neg();
        let c = TwistedPoly::constant(&f9.gen());
        let out = f_eval(&a, &zero, &d, &c, &c).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn f_eval_star_antisymmetry_random() {
        let f9 = make_field(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let a = random_skew(&f9, 2, &mut rng);
            let d = random_skew(&f9, 2, &mut rng);
            let b = random_twisted(&f9, 2, &mut rng);
            let x = random_twisted(&f9, 2, &mut rng);
            let y = random_twisted(&f9, 2, &mut rng);
            let f = f_eval(&a, &b, &d, &x, &y).unwrap();
            assert_eq!(f.star(), f.neg());
        }
    }

    #[test]
    fn f_eval_rejects_non_skew() {
        let f9 = make_field(3, 2).unwrap();
        let unit = TwistedPoly::one(&f9);
        let zero = TwistedPoly::zero(&f9);
        assert!(matches!(
            f_eval(&unit, &zero, &zero, &unit, &unit),
            Err(DualityError::NotSkewsymmetric)
        ));
    }

    #[test]
    fn isotropic_zero_matrix() {
        let f9 = make_field(3, 2).unwrap();
        let zero = TwistedPoly::zero(&f9);
        let out = isotropic_search(&zero, &zero, &zero, 0, 1).unwrap();
        let w = out.found.unwrap();
        assert_eq!(w.x, TwistedPoly::one(&f9));
        assert!(w.y.is_zero());
    }

    #[test]
    fn isotropic_analytic_family() {
        // a = tau - tau^-1, d = -a, b = 0: found at (N, m) = (0, 1) with x = y
        let f9 = make_field(3, 2).unwrap();
        let a = TwistedPoly::from_terms(&f9, vec![(1, f9.one()), (-1, f9.one().neg())]);
        let d = a.neg();
        let b = TwistedPoly::zero(&f9);
        let out = isotropic_search(&a, &b, &d, 0, 1).unwrap();
        let w = out.found.expect("analytic family has constant solutions");
        assert_eq!(w.ext_degree, 1);
        assert_eq!(w.x, w.y);
        assert!(w.residual.is_zero());
    }

    #[test]
    fn lang_character_degree_one_is_chi() {
        let f4 = make_field(2, 2).unwrap();
        let chi = AdditiveChar::new(&f4, vec![f4.one()]);
        for x in f4.iter() {
            let ev = lang_character(&chi, &[x.clone()]).unwrap();
            assert_eq!(ev.value, chi.eval(&[x]));
        }
    }

    #[test]
    fn lang_character_trace_expansion_m2() {
        // m = 2, A = G_a: value = chi(x + x^q)
        let f3 = make_field(3, 1).unwrap();
        let f9 = make_field(3, 2).unwrap();
        let chi = AdditiveChar::new(&f3, vec![f3.one()]);
        for x in f9.iter() {
            let ev = lang_character(&chi, &[x.clone()]).unwrap();
            let traced = rel_trace(&x, &f3).unwrap();
            assert_eq!(ev.value, chi.eval(&[traced]));
            assert_eq!(ev.value, ev.via_trace);
        }
    }

    #[test]
    fn lang_character_additive_exhaustive() {
        // additivity in x for q^m <= 2^8 instances
        for (p, r, m) in [(2u64, 1u32, 3u32), (2, 2, 2), (3, 1, 2), (3, 2, 1)] {
            let base = make_field(p, r).unwrap();
            let ext = make_field(p, r * m).unwrap();
            let chi = AdditiveChar::new(&base, vec![base.gen()]);
            for x in ext.iter() {
                for y in ext.iter().take(16) {
                    let vx = lang_character(&chi, &[x.clone()]).unwrap().value;
                    let vy = lang_character(&chi, &[y.clone()]).unwrap().value;
                    let vxy = lang_character(&chi, &[x.add(&y)]).unwrap().value;
                    assert_eq!(vxy, vx.add(&vy));
                }
            }
        }
    }

    #[test]
    fn serre_pairing_q2_n1() {
        let f2 = make_field(2, 1).unwrap();
        let sp = serre_pairing_matrix(&f2, 1);
        // psi-image [[1, 1], [1, -1]]
        use crate::cyclo::{psi, CycloNum};
        let one = CycloNum::one(2, 1);
        assert_eq!(psi(&sp.entries[0][0]), one);
        assert_eq!(psi(&sp.entries[0][1]), one);
        assert_eq!(psi(&sp.entries[1][0]), one);
        assert_eq!(psi(&sp.entries[1][1]), CycloNum::from_integer(2, 1, -1));
        assert!(sp.is_perfect());
        // row of chi = 0 is constant one
        assert!(sp.entries[0].iter().all(|v| v.is_zero()));
    }

    #[test]
    fn serre_pairing_q4_orthogonal_rows() {
        let f4 = make_field(2, 2).unwrap();
        let sp = serre_pairing_matrix(&f4, 1);
        assert!(sp.is_perfect());
        // orthogonality gives det(M conj(M)^T) = 4^4, so |det|^2 = 4^4
    }

    #[test]
    fn lagrangian_standard_symplectic() {
        let p = 3u64;
        let group = FinAb::new(p, vec![p, p]);
        let mut gram = vec![vec![MuVal::zero(p); 2]; 2];
        gram[0][1] = MuVal::new(p, 1, 1);
        gram[1][0] = MuVal::new(p, 1, p - 1);
        let pairing = AlternatingPairing::new(Pairing::new(group, gram).unwrap()).unwrap();
        let l = find_lagrangian(&pairing).unwrap();
        assert_eq!(l.len(), 3);
        // <e1>
        assert!(l.contains(&vec![1, 0]));
        assert!(l.contains(&vec![2, 0]));
    }

    #[test]
    fn lagrangian_random_z3_4() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairing = random_nondegenerate_alternating(3, 2, &mut rng);
        let l = find_lagrangian(&pairing).unwrap();
        assert_eq!(l.len(), 9);
        for a in &l {
            for b in &l {
                assert!(pairing.eval(a, b).is_zero());
            }
        }
    }

    #[test]
    fn lagrangian_rejects_degenerate() {
        let p = 2u64;
        let group = FinAb::new(p, vec![p, p]);
        let gram = vec![vec![MuVal::zero(p); 2]; 2];
        let pairing = AlternatingPairing::new(Pairing::new(group, gram).unwrap()).unwrap();
        assert!(matches!(
            find_lagrangian(&pairing),
            Err(DualityError::DegeneratePairing)
        ));
    }

    #[test]
    fn lagrangian_on_nonhomogeneous_group() {
        // (Z/4 x Z/4) with the standard hyperbolic pairing at level 4
        let p = 2u64;
        let group = FinAb::new(p, vec![4, 4]);
        let mut gram = vec![vec![MuVal::zero(p); 2]; 2];
        gram[0][1] = MuVal::new(p, 2, 1);
        gram[1][0] = MuVal::new(p, 2, 3);
        let pairing = AlternatingPairing::new(Pairing::new(group, gram).unwrap()).unwrap();
        let l = find_lagrangian(&pairing).unwrap();
        assert_eq!(l.len(), 4);
    }

    #[test]
    fn quadratic_refinement_examples() {
        let p = 2u64;
        let w = FinAb::new(p, vec![2]);
        // q(1) = 1/4: homogeneous, polarization B(1,1) = -1/2, nondegenerate
        let q = QuadraticForm::new(w.clone(), vec![MuVal::zero(p), MuVal::new(p, 2, 1)]).unwrap();
        let b11 = q.polarization(&[1], &[1]);
        assert_eq!(b11, MuVal::new(p, 1, 1)); // -1/2 = 1/2 in mu
        let pairing = Pairing::new(w.clone(), vec![vec![b11.clone()]]).unwrap();
        let verdict = check_quadratic_refinement(&q, &pairing);
        assert!(verdict.passes(), "verdict: {verdict:?}");

        // q(1) = 1/2: identities hold but the induced pairing is zero
        let q2 = QuadraticForm::new(w.clone(), vec![MuVal::zero(p), MuVal::new(p, 1, 1)]).unwrap();
        let pairing0 = Pairing::new(w.clone(), vec![vec![MuVal::zero(p)]]).unwrap();
        let verdict2 = check_quadratic_refinement(&q2, &pairing0);
        assert!(verdict2.homogeneous);
        assert!(verdict2.polarization_matches);
        assert!(!verdict2.nondegenerate);

        // zero form on the trivial-pairing group: identities hold, degenerate
        let q0 = QuadraticForm::new(w.clone(), vec![MuVal::zero(p); 2]).unwrap();
        let verdict0 = check_quadratic_refinement(&q0, &pairing0);
        assert!(verdict0.homogeneous && verdict0.polarization_matches);
        assert!(!verdict0.nondegenerate);
    }
}
