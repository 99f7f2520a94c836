//! Finite-group engine over parameterized algebraic-group models:
//! enumeration of F_(q^m)-points, conjugacy classes, centers, commutator
//! subgroups, quotients, and Frobenius twists.
//!
//! Elements are canonical coordinate tuples (field-element indices), ordered
//! lexicographically; the identity is always element 0. All tie-breaking in
//! the crate is by this ordering, so reports are reproducible.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::duality::Realization;
use crate::gf::{frobenius, make_field, Field, FieldElem, GfError};

#[derive(Debug, Error)]
pub enum GroupError {
    #[error(transparent)]
    Field(#[from] GfError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("group order {order} exceeds the cap {cap}")]
    CapExceeded { order: u128, cap: u64 },
    #[error("subgroup is not normal")]
    NotNormal,
    #[error("not a subgroup of the given group")]
    NotSubgroup,
    #[error("map is not an automorphism")]
    NotAutomorphism,
}

/// Default cap on instantiated group order.
pub const DEFAULT_GROUP_CAP: u64 = 1 << 12;

const MUL_TABLE_CAP: usize = 1024;

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// Structure constants of a nilpotent associative algebra over the base:
/// `e_i e_j = sum_k constants[i][j][k] e_k`.
#[derive(Clone)]
pub struct AlgebraData {
    pub dim: usize,
    pub constants: Vec<Vec<Vec<FieldElem>>>,
}

#[derive(Clone)]
pub enum Family {
    /// Upper-triangular unipotent matrices of size n.
    Unitriangular(usize),
    /// 1 + J for a nilpotent associative algebra J given by structure constants.
    AlgebraGroup(AlgebraData),
    /// F x F with (x,u)(y,v) = (x+y, u+v+x y^(p^s)); requires p > 2.
    FakeHeisenberg { s: u32 },
    /// Maximal unipotent subgroup of Sp4 in characteristic 2.
    Sp4MaxUnipotent,
    DirectProduct(Vec<Family>),
}

/// An algebraic-group family together with its field of definition.
#[derive(Clone)]
pub struct GroupModel {
    pub family: Family,
    pub base: Field,
}

impl fmt::Debug for GroupModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} over {}", self.family.name(), self.base.name())
    }
}

impl Family {
    pub fn name(&self) -> String {
        match self {
            Family::Unitriangular(n) => format!("UL({n})"),
            Family::AlgebraGroup(a) => format!("AlgebraGroup(dim {})", a.dim),
            Family::FakeHeisenberg { s } => format!("FakeHeisenberg(s={s})"),
            Family::Sp4MaxUnipotent => "Sp4MaxUnipotent".to_string(),
            Family::DirectProduct(fs) => {
                let parts: Vec<String> = fs.iter().map(|f| f.name()).collect();
                format!("Product({})", parts.join(" x "))
            }
        }
    }

    /// Algebraic dimension: |points over F_(q^m)| = q^(m dim).
    pub fn dim(&self) -> usize {
        match self {
            Family::Unitriangular(n) => n * (n - 1) / 2,
            Family::AlgebraGroup(a) => a.dim,
            Family::FakeHeisenberg { .. } => 2,
            Family::Sp4MaxUnipotent => 4,
            Family::DirectProduct(fs) => fs.iter().map(|f| f.dim()).sum(),
        }
    }

    /// Length of the coordinate tuple encoding an element. Equals `dim`
    /// except for Sp4, whose points sit inside the 6 entries of UL(4).
    pub fn coord_len(&self) -> usize {
        match self {
            Family::Sp4MaxUnipotent => 6,
            Family::DirectProduct(fs) => fs.iter().map(|f| f.coord_len()).sum(),
            _ => self.dim(),
        }
    }
}

impl GroupModel {
    pub fn unitriangular(base: &Field, n: usize) -> GroupModel {
        GroupModel {
            family: Family::Unitriangular(n),
            base: base.clone(),
        }
    }

    pub fn fake_heisenberg(base: &Field, s: u32) -> GroupModel {
        GroupModel {
            family: Family::FakeHeisenberg { s },
            base: base.clone(),
        }
    }

    pub fn sp4_max_unipotent(base: &Field) -> GroupModel {
        GroupModel {
            family: Family::Sp4MaxUnipotent,
            base: base.clone(),
        }
    }

    pub fn algebra_group(base: &Field, data: AlgebraData) -> GroupModel {
        GroupModel {
            family: Family::AlgebraGroup(data),
            base: base.clone(),
        }
    }

    /// The vector group G_a^n as the algebra group of a null algebra.
    pub fn vector_group(base: &Field, n: usize) -> GroupModel {
        let zero = base.zero();
        let constants = vec![vec![vec![zero; n]; n]; n];
        Self::algebra_group(
            base,
            AlgebraData {
                dim: n,
                constants,
            },
        )
    }

    pub fn direct_product(base: &Field, families: Vec<Family>) -> GroupModel {
        GroupModel {
            family: Family::DirectProduct(families),
            base: base.clone(),
        }
    }

    fn validate(&self) -> Result<(), GroupError> {
        validate_family(&self.family, &self.base)
    }
}

fn validate_family(family: &Family, base: &Field) -> Result<(), GroupError> {
    match family {
        Family::Unitriangular(n) => {
            if *n < 2 {
                return Err(GroupError::InvalidModel(
                    "unitriangular size must be at least 2".into(),
                ));
            }
        }
        Family::FakeHeisenberg { .. } => {
            if base.p() == 2 {
                return Err(GroupError::InvalidModel(
                    "fake Heisenberg requires p > 2".into(),
                ));
            }
        }
        Family::Sp4MaxUnipotent => {
            if base.p() != 2 {
                return Err(GroupError::InvalidModel(
                    "Sp4 maximal unipotent model requires p = 2".into(),
                ));
            }
        }
        Family::AlgebraGroup(a) => {
            let d = a.dim;
            if a.constants.len() != d
                || a.constants.iter().any(|m| {
                    m.len() != d || m.iter().any(|row| row.len() != d)
                })
            {
                return Err(GroupError::InvalidModel(
                    "structure constant tensor has wrong shape".into(),
                ));
            }
            for slice in &a.constants {
                for row in slice {
                    for c in row {
                        if c.field() != base {
                            return Err(GroupError::InvalidModel(
                                "structure constants must live in the base field".into(),
                            ));
                        }
                    }
                }
            }
            check_algebra(a, base)?;
        }
        Family::DirectProduct(fs) => {
            if fs.is_empty() {
                return Err(GroupError::InvalidModel("empty product".into()));
            }
            for f in fs {
                validate_family(f, base)?;
            }
        }
    }
    Ok(())
}

/// Associativity on basis triples and nilpotency of the span.
fn check_algebra(a: &AlgebraData, base: &Field) -> Result<(), GroupError> {
    let d = a.dim;
    let mul_basis = |i: usize, j: usize| -> Vec<FieldElem> { a.constants[i][j].clone() };
    let mul_vec = |x: &[FieldElem], y: &[FieldElem]| -> Vec<FieldElem> {
        let mut out = vec![base.zero(); d];
        for i in 0..d {
            if x[i].is_zero() {
                continue;
            }
            for j in 0..d {
                if y[j].is_zero() {
                    continue;
                }
                let xy = x[i].mul(&y[j]);
                for k in 0..d {
                    out[k] = out[k].add(&xy.mul(&a.constants[i][j][k]));
                }
            }
        }
        out
    };
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let mut basis_k = vec![base.zero(); d];
                basis_k[k] = base.one();
                let mut basis_i = vec![base.zero(); d];
                basis_i[i] = base.one();
                let lhs = mul_vec(&mul_basis(i, j), &basis_k);
                let rhs = mul_vec(&basis_i, &mul_basis(j, k));
                if lhs != rhs {
                    return Err(GroupError::InvalidModel(format!(
                        "structure constants not associative at basis triple ({i},{j},{k})"
                    )));
                }
            }
        }
    }
    // nilpotency: powers of the span of basis products must die out
    let mut span: Vec<Vec<FieldElem>> = (0..d)
        .map(|i| {
            let mut v = vec![base.zero(); d];
            v[i] = base.one();
            v
        })
        .collect();
    for _ in 0..=d {
        let mut next: Vec<Vec<FieldElem>> = Vec::new();
        for x in &span {
            for i in 0..d {
                let mut basis_i = vec![base.zero(); d];
                basis_i[i] = base.one();
                let prod = mul_vec(x, &basis_i);
                if prod.iter().any(|c| !c.is_zero()) {
                    next.push(prod);
                }
            }
        }
        if next.is_empty() {
            return Ok(());
        }
        span = next;
    }
    Err(GroupError::InvalidModel("algebra is not nilpotent".into()))
}

// ---------------------------------------------------------------------------
// Model multiplication oracles
// ---------------------------------------------------------------------------

fn ul_decode(coords: &[FieldElem], n: usize, field: &Field) -> Vec<Vec<FieldElem>> {
    let mut m = vec![vec![field.zero(); n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = field.one();
    }
    let mut t = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            m[i][j] = coords[t].clone();
            t += 1;
        }
    }
    m
}

fn ul_encode(m: &[Vec<FieldElem>], n: usize) -> Vec<FieldElem> {
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(m[i][j].clone());
        }
    }
    out
}

fn mat_mul(a: &[Vec<FieldElem>], b: &[Vec<FieldElem>], field: &Field) -> Vec<Vec<FieldElem>> {
    let n = a.len();
    let mut out = vec![vec![field.zero(); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..n {
                if b[k][j].is_zero() {
                    continue;
                }
                out[i][j] = out[i][j].add(&a[i][k].mul(&b[k][j]));
            }
        }
    }
    out
}

fn unitriangular_inv(m: &[Vec<FieldElem>], field: &Field) -> Vec<Vec<FieldElem>> {
    // (I + N)^-1 = I - N + N^2 - ... for strictly upper N
    let n = m.len();
    let mut nil = m.to_vec();
    for (i, row) in nil.iter_mut().enumerate() {
        row[i] = field.zero();
    }
    let mut acc = vec![vec![field.zero(); n]; n];
    for (i, row) in acc.iter_mut().enumerate() {
        row[i] = field.one();
    }
    let mut pw = nil.clone();
    let mut sign_neg = true;
    for _ in 1..n {
        for i in 0..n {
            for j in 0..n {
                let term = if sign_neg { pw[i][j].neg() } else { pw[i][j].clone() };
                acc[i][j] = acc[i][j].add(&term);
            }
        }
        pw = mat_mul(&pw, &nil, field);
        sign_neg = !sign_neg;
    }
    acc
}

fn family_mul(
    family: &Family,
    field: &Field,
    a: &[FieldElem],
    b: &[FieldElem],
) -> Vec<FieldElem> {
    match family {
        Family::Unitriangular(n) => {
            let ma = ul_decode(a, *n, field);
            let mb = ul_decode(b, *n, field);
            ul_encode(&mat_mul(&ma, &mb, field), *n)
        }
        Family::Sp4MaxUnipotent => {
            let ma = ul_decode(a, 4, field);
            let mb = ul_decode(b, 4, field);
            ul_encode(&mat_mul(&ma, &mb, field), 4)
        }
        Family::AlgebraGroup(alg) => {
            // (1+x)(1+y) = 1 + x + y + xy
            let d = alg.dim;
            let mut out: Vec<FieldElem> = (0..d).map(|k| a[k].add(&b[k])).collect();
            for i in 0..d {
                if a[i].is_zero() {
                    continue;
                }
                for j in 0..d {
                    if b[j].is_zero() {
                        continue;
                    }
                    let xy = a[i].mul(&b[j]);
                    for k in 0..d {
                        let c = &alg.constants[i][j][k];
                        if !c.is_zero() {
                            let ce = crate::gf::embed(c, field).expect("constant embeds");
                            out[k] = out[k].add(&xy.mul(&ce));
                        }
                    }
                }
            }
            out
        }
        Family::FakeHeisenberg { s } => {
            let x = &a[0];
            let u = &a[1];
            let y = &b[0];
            let v = &b[1];
            let twist = x.mul(&frobenius(y, *s as i64));
            vec![x.add(y), u.add(v).add(&twist)]
        }
        Family::DirectProduct(fs) => {
            let mut out = Vec::with_capacity(a.len());
            let mut off = 0;
            for f in fs {
                let w = f.coord_len();
                out.extend(family_mul(f, field, &a[off..off + w], &b[off..off + w]));
                off += w;
            }
            out
        }
    }
}

fn family_inv(family: &Family, field: &Field, a: &[FieldElem]) -> Vec<FieldElem> {
    match family {
        Family::Unitriangular(n) => {
            let m = ul_decode(a, *n, field);
            ul_encode(&unitriangular_inv(&m, field), *n)
        }
        Family::Sp4MaxUnipotent => {
            let m = ul_decode(a, 4, field);
            ul_encode(&unitriangular_inv(&m, field), 4)
        }
        Family::AlgebraGroup(alg) => {
            // fixpoint y = -x - x y, stabilizes within the nilpotency degree
            let d = alg.dim;
            let mut y: Vec<FieldElem> = a.iter().map(|c| c.neg()).collect();
            for _ in 0..=d {
                let prod = {
                    let mut out = vec![field.zero(); d];
                    for i in 0..d {
                        if a[i].is_zero() {
                            continue;
                        }
                        for j in 0..d {
                            if y[j].is_zero() {
                                continue;
                            }
                            let xy = a[i].mul(&y[j]);
                            for k in 0..d {
                                let c = &alg.constants[i][j][k];
                                if !c.is_zero() {
                                    let ce = crate::gf::embed(c, field).expect("constant embeds");
                                    out[k] = out[k].add(&xy.mul(&ce));
                                }
                            }
                        }
                    }
                    out
                };
                let next: Vec<FieldElem> = (0..d).map(|k| a[k].neg().sub(&prod[k])).collect();
                if next == y {
                    break;
                }
                y = next;
            }
            y
        }
        Family::FakeHeisenberg { s } => {
            let x = &a[0];
            let u = &a[1];
            // (-x, -u + x^(1+p^s))
            vec![x.neg(), u.neg().add(&x.mul(&frobenius(x, *s as i64)))]
        }
        Family::DirectProduct(fs) => {
            let mut out = Vec::with_capacity(a.len());
            let mut off = 0;
            for f in fs {
                let w = f.coord_len();
                out.extend(family_inv(f, field, &a[off..off + w]));
                off += w;
            }
            out
        }
    }
}

/// Membership predicate for coordinate tuples; only Sp4 filters.
fn family_member(family: &Family, field: &Field, a: &[FieldElem]) -> bool {
    match family {
        Family::Sp4MaxUnipotent => {
            let m = ul_decode(a, 4, field);
            // M^T J M = J with J the antidiagonal (signs are irrelevant in char 2)
            let n = 4;
            let j_mat: Vec<Vec<FieldElem>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|jj| {
                            if i + jj == n - 1 {
                                field.one()
                            } else {
                                field.zero()
                            }
                        })
                        .collect()
                })
                .collect();
            let mt: Vec<Vec<FieldElem>> = (0..n)
                .map(|i| (0..n).map(|jj| m[jj][i].clone()).collect())
                .collect();
            let lhs = mat_mul(&mat_mul(&mt, &j_mat, field), &m, field);
            lhs == j_mat
        }
        Family::DirectProduct(fs) => {
            let mut off = 0;
            for f in fs {
                let w = f.coord_len();
                if !family_member(f, field, &a[off..off + w]) {
                    return false;
                }
                off += w;
            }
            true
        }
        _ => true,
    }
}

// ---------------------------------------------------------------------------
// FiniteGroup
// ---------------------------------------------------------------------------

pub type ElemId = usize;
type ElemCode = Vec<u32>;

pub type Group = Arc<FiniteGroup>;

enum GroupKind {
    Points {
        model: GroupModel,
        field: Field,
        m: u32,
    },
    Sub {
        parent: Group,
        to_parent: Vec<ElemId>,
    },
    Quotient {
        parent: Group,
        coset_of: Vec<u32>,
        reps: Vec<ElemId>,
    },
}

#[derive(Clone, Debug)]
pub struct ClassData {
    pub class_of: Vec<u32>,
    pub reps: Vec<ElemId>,
    pub sizes: Vec<u64>,
    pub inverse_class: Vec<usize>,
}

pub struct FiniteGroup {
    kind: GroupKind,
    codes: Vec<ElemCode>,
    index: HashMap<ElemCode, ElemId>,
    inv_table: Vec<u32>,
    mul_table: Option<Vec<u32>>, // row-major |G| x |G|
    classes: OnceLock<ClassData>,
    center: OnceLock<Vec<ElemId>>,
    commutator: OnceLock<Vec<ElemId>>,
    exponent: OnceLock<u64>,
}

impl fmt::Debug for FiniteGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (order {})", self.name(), self.order())
    }
}

impl FiniteGroup {
    pub fn order(&self) -> usize {
        self.codes.len()
    }

    pub fn id(&self) -> ElemId {
        0
    }

    pub fn elements(&self) -> impl Iterator<Item = ElemId> {
        0..self.order()
    }

    pub fn code(&self, g: ElemId) -> &[u32] {
        &self.codes[g]
    }

    pub fn name(&self) -> String {
        match &self.kind {
            GroupKind::Points { model, m, .. } => {
                if *m == 1 {
                    format!("{:?}", model)
                } else {
                    format!("{:?}, points over degree-{m} extension", model)
                }
            }
            GroupKind::Sub { parent, .. } => format!("subgroup of {}", parent.name()),
            GroupKind::Quotient { parent, .. } => format!("quotient of {}", parent.name()),
        }
    }

    /// The field the points live over (Points groups only).
    pub fn field(&self) -> Option<&Field> {
        match &self.kind {
            GroupKind::Points { field, .. } => Some(field),
            _ => None,
        }
    }

    pub fn model(&self) -> Option<&GroupModel> {
        match &self.kind {
            GroupKind::Points { model, .. } => Some(model),
            _ => None,
        }
    }

    pub fn extension_degree(&self) -> Option<u32> {
        match &self.kind {
            GroupKind::Points { m, .. } => Some(*m),
            _ => None,
        }
    }

    /// Decode an element into field coordinates (Points groups only).
    pub fn coords(&self, g: ElemId) -> Option<Vec<FieldElem>> {
        match &self.kind {
            GroupKind::Points { field, .. } => Some(
                self.codes[g]
                    .iter()
                    .map(|&ix| field.elem(ix as u64))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Element id for a coordinate tuple (Points groups only).
    pub fn elem_by_coords(&self, coords: &[FieldElem]) -> Option<ElemId> {
        let code: ElemCode = coords.iter().map(|e| e.index() as u32).collect();
        self.index.get(&code).copied()
    }

    pub fn mul(&self, a: ElemId, b: ElemId) -> ElemId {
        if let Some(table) = &self.mul_table {
            return table[a * self.order() + b] as ElemId;
        }
        self.mul_raw(a, b)
    }

    fn mul_raw(&self, a: ElemId, b: ElemId) -> ElemId {
        match &self.kind {
            GroupKind::Points { model, field, .. } => {
                let ca: Vec<FieldElem> = self.codes[a]
                    .iter()
                    .map(|&ix| field.elem(ix as u64))
                    .collect();
                let cb: Vec<FieldElem> = self.codes[b]
                    .iter()
                    .map(|&ix| field.elem(ix as u64))
                    .collect();
                let prod = family_mul(&model.family, field, &ca, &cb);
                let code: ElemCode = prod.iter().map(|e| e.index() as u32).collect();
                *self.index.get(&code).expect("product stays in the group")
            }
            GroupKind::Sub { parent, to_parent } => {
                let p = parent.mul(to_parent[a], to_parent[b]);
                to_parent
                    .binary_search(&p)
                    .expect("subgroup closed under multiplication")
            }
            GroupKind::Quotient {
                parent,
                coset_of,
                reps,
            } => {
                let p = parent.mul(reps[a], reps[b]);
                coset_of[p] as ElemId
            }
        }
    }

    pub fn inv(&self, a: ElemId) -> ElemId {
        self.inv_table[a] as ElemId
    }

    pub fn conj(&self, g: ElemId, by: ElemId) -> ElemId {
        // by^-1 g by
        self.mul(self.mul(self.inv(by), g), by)
    }

    pub fn commutator_elem(&self, a: ElemId, b: ElemId) -> ElemId {
        // a b a^-1 b^-1
        self.mul(self.mul(self.mul(a, b), self.inv(a)), self.inv(b))
    }

    pub fn elem_order(&self, g: ElemId) -> u64 {
        let mut n = 1u64;
        let mut cur = g;
        while cur != self.id() {
            cur = self.mul(cur, g);
            n += 1;
        }
        n
    }

    pub fn exponent(&self) -> u64 {
        *self.exponent.get_or_init(|| {
            self.elements()
                .map(|g| self.elem_order(g))
                .max()
                .unwrap_or(1)
        })
    }

    /// Conjugacy classes with least-element representatives, identity first.
    pub fn conj_classes(&self) -> &ClassData {
        self.classes.get_or_init(|| {
            let n = self.order();
            let mut class_of = vec![u32::MAX; n];
            let mut reps = Vec::new();
            let mut sizes = Vec::new();
            for g in 0..n {
                if class_of[g] != u32::MAX {
                    continue;
                }
                let cls = reps.len() as u32;
                reps.push(g);
                let mut size = 0u64;
                for h in 0..n {
                    let c = self.conj(g, h);
                    if class_of[c] == u32::MAX {
                        class_of[c] = cls;
                        size += 1;
                    }
                }
                sizes.push(size);
            }
            let inverse_class = reps
                .iter()
                .map(|&r| class_of[self.inv(r)] as usize)
                .collect();
            ClassData {
                class_of,
                reps,
                sizes,
                inverse_class,
            }
        })
    }

    pub fn class_of(&self, g: ElemId) -> usize {
        self.conj_classes().class_of[g] as usize
    }

    pub fn center(&self) -> &Vec<ElemId> {
        self.center.get_or_init(|| {
            self.elements()
                .filter(|&g| {
                    self.elements()
                        .all(|h| self.mul(g, h) == self.mul(h, g))
                })
                .collect()
        })
    }

    pub fn commutator_subgroup(&self) -> &Vec<ElemId> {
        self.commutator.get_or_init(|| {
            let mut gens = HashSet::new();
            for a in self.elements() {
                for b in self.elements() {
                    gens.insert(self.commutator_elem(a, b));
                }
            }
            let gens: Vec<ElemId> = gens.into_iter().collect();
            subgroup_closure(self, &gens)
        })
    }

    pub fn is_abelian(&self) -> bool {
        self.center().len() == self.order()
    }
}

/// Closure of a generating set under multiplication; sorted element ids.
pub fn subgroup_closure(group: &FiniteGroup, gens: &[ElemId]) -> Vec<ElemId> {
    let mut seen: HashSet<ElemId> = HashSet::new();
    seen.insert(group.id());
    let mut frontier: Vec<ElemId> = vec![group.id()];
    while let Some(x) = frontier.pop() {
        for &g in gens {
            for y in [group.mul(x, g), group.mul(x, group.inv(g))] {
                if seen.insert(y) {
                    frontier.push(y);
                }
            }
        }
    }
    let mut out: Vec<ElemId> = seen.into_iter().collect();
    out.sort_unstable();
    out
}

fn finish_group(kind: GroupKind, codes: Vec<ElemCode>) -> Group {
    let index: HashMap<ElemCode, ElemId> = codes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();
    let mut g = FiniteGroup {
        kind,
        codes,
        index,
        inv_table: Vec::new(),
        mul_table: None,
        classes: OnceLock::new(),
        center: OnceLock::new(),
        commutator: OnceLock::new(),
        exponent: OnceLock::new(),
    };
    let n = g.order();
    if n <= MUL_TABLE_CAP {
        let mut table = vec![0u32; n * n];
        for a in 0..n {
            for b in 0..n {
                table[a * n + b] = g.mul_raw(a, b) as u32;
            }
        }
        g.mul_table = Some(table);
    }
    let inv: Vec<u32> = match &g.kind {
        GroupKind::Points { model, field, .. } => (0..n)
            .map(|a| {
                let coords: Vec<FieldElem> =
                    g.codes[a].iter().map(|&ix| field.elem(ix as u64)).collect();
                let iv = family_inv(&model.family, field, &coords);
                let code: ElemCode = iv.iter().map(|e| e.index() as u32).collect();
                *g.index.get(&code).expect("inverse stays in the group") as u32
            })
            .collect(),
        GroupKind::Sub { parent, to_parent } => (0..n)
            .map(|a| {
                let p = parent.inv(to_parent[a]);
                to_parent.binary_search(&p).expect("subgroup closed under inverse") as u32
            })
            .collect(),
        GroupKind::Quotient {
            parent,
            coset_of,
            reps,
        } => (0..n).map(|a| coset_of[parent.inv(reps[a])]).collect(),
    };
    debug_assert!((0..n).all(|a| {
        let b = inv[a] as usize;
        g.mul(a, b) == 0 && g.mul(b, a) == 0
    }));
    g.inv_table = inv;
    debug_assert_eq!(g.mul(0, 0), 0);
    Arc::new(g)
}

/// Enumerate the group of F_(q^m)-points of a model.
pub fn points(model: &GroupModel, m: u32) -> Result<Group, GroupError> {
    points_with_cap(model, m, DEFAULT_GROUP_CAP)
}

pub fn points_with_cap(model: &GroupModel, m: u32, cap: u64) -> Result<Group, GroupError> {
    model.validate()?;
    if m == 0 {
        return Err(GroupError::InvalidModel("extension degree must be >= 1".into()));
    }
    let base = &model.base;
    let field = make_field(base.p(), base.degree() * m)?;
    let q_m = field.order();
    let dim = model.family.dim() as u32;
    let order = (q_m as u128).pow(dim);
    if order > cap as u128 {
        return Err(GroupError::CapExceeded { order, cap });
    }
    let coord_len = model.family.coord_len();
    let mut codes: Vec<ElemCode> = Vec::with_capacity(order as usize);
    let total = (q_m as u128).pow(coord_len as u32);
    // lexicographic on coordinate tuples: first coordinate most significant
    let mut tuple = vec![0u32; coord_len];
    let mut count = 0u128;
    loop {
        let coords: Vec<FieldElem> = tuple.iter().map(|&ix| field.elem(ix as u64)).collect();
        if family_member(&model.family, &field, &coords) {
            codes.push(tuple.clone());
        }
        count += 1;
        if count == total {
            break;
        }
        // increment from the last coordinate
        let mut pos = coord_len - 1;
        loop {
            tuple[pos] += 1;
            if (tuple[pos] as u64) < q_m {
                break;
            }
            tuple[pos] = 0;
            if pos == 0 {
                break;
            }
            pos -= 1;
        }
    }
    if codes.len() as u128 != order {
        return Err(GroupError::InvalidModel(format!(
            "expected q^(m dim) = {order} points, found {}",
            codes.len()
        )));
    }
    Ok(finish_group(
        GroupKind::Points {
            model: model.clone(),
            field,
            m,
        },
        codes,
    ))
}

// ---------------------------------------------------------------------------
// Subgroups
// ---------------------------------------------------------------------------

/// Subgroup of a parent group: a sorted member list, optionally with an
/// algebraic realization certificate (in model coordinates over the base
/// field) that defines its points over every extension.
#[derive(Clone)]
pub struct Subgroup {
    pub parent: Group,
    pub members: Vec<ElemId>,
    pub cert: Option<Realization>,
}

impl fmt::Debug for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Subgroup(order {}{})",
            self.members.len(),
            if self.cert.is_some() { ", certified" } else { "" }
        )
    }
}

impl Subgroup {
    pub fn new(parent: &Group, mut members: Vec<ElemId>) -> Result<Subgroup, GroupError> {
        members.sort_unstable();
        members.dedup();
        let set: HashSet<ElemId> = members.iter().copied().collect();
        if !set.contains(&parent.id()) {
            return Err(GroupError::NotSubgroup);
        }
        for &a in &members {
            if !set.contains(&parent.inv(a)) {
                return Err(GroupError::NotSubgroup);
            }
            for &b in &members {
                if !set.contains(&parent.mul(a, b)) {
                    return Err(GroupError::NotSubgroup);
                }
            }
        }
        Ok(Subgroup {
            parent: parent.clone(),
            members,
            cert: None,
        })
    }

    pub fn whole(parent: &Group) -> Subgroup {
        Subgroup {
            parent: parent.clone(),
            members: parent.elements().collect(),
            cert: None,
        }
    }

    pub fn trivial(parent: &Group) -> Subgroup {
        Subgroup {
            parent: parent.clone(),
            members: vec![parent.id()],
            cert: None,
        }
    }

    pub fn order(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, g: ElemId) -> bool {
        self.members.binary_search(&g).is_ok()
    }

    pub fn index_in_parent(&self) -> usize {
        self.parent.order() / self.order()
    }

    /// View the subgroup as a group in its own right. Element i of the view
    /// is `members[i]`.
    pub fn as_group(&self) -> Group {
        let codes: Vec<ElemCode> = self
            .members
            .iter()
            .map(|&g| self.parent.code(g).to_vec())
            .collect();
        finish_group(
            GroupKind::Sub {
                parent: self.parent.clone(),
                to_parent: self.members.clone(),
            },
            codes,
        )
    }

    /// Parent element id for an element id of the `as_group` view.
    pub fn to_parent(&self, sub_elem: ElemId) -> ElemId {
        self.members[sub_elem]
    }

    pub fn from_parent(&self, parent_elem: ElemId) -> Option<ElemId> {
        self.members.binary_search(&parent_elem).ok()
    }

    pub fn is_normal(&self) -> bool {
        self.parent.elements().all(|g| {
            self.members
                .iter()
                .all(|&h| self.contains(self.parent.conj(h, g)))
        })
    }

    /// `H^g = g^-1 H g`. Re-derives the realization certificate for the
    /// conjugated member set when one was present.
    pub fn conjugate(&self, g: ElemId) -> Subgroup {
        let mut members: Vec<ElemId> = self
            .members
            .iter()
            .map(|&h| self.parent.conj(h, g))
            .collect();
        members.sort_unstable();
        let mut out = Subgroup {
            parent: self.parent.clone(),
            members,
            cert: None,
        };
        if self.cert.is_some() {
            out.cert = realize_members(&self.parent, &out.members);
        }
        out
    }
}

/// Attempt an additive-polynomial realization of a member set of a Points
/// group, in model coordinates over the base field. Requires the member
/// coordinates to form an F_p-subspace of order q^k.
pub fn realize_members(parent: &Group, members: &[ElemId]) -> Option<Realization> {
    let model = parent.model()?;
    let m = parent.extension_degree()?;
    if m != 1 {
        return None; // certificates are recorded over the base field
    }
    let pts: Vec<Vec<FieldElem>> = members.iter().map(|&g| parent.coords(g).unwrap()).collect();
    crate::duality::realize_subgroup(&model.base, model.family.coord_len(), &pts).ok()
}

pub fn center_subgroup(group: &Group) -> Subgroup {
    let mut s = Subgroup {
        parent: group.clone(),
        members: group.center().clone(),
        cert: None,
    };
    s.cert = realize_members(group, &s.members);
    s
}

pub fn commutator_subgroup(group: &Group) -> Subgroup {
    let mut s = Subgroup {
        parent: group.clone(),
        members: group.commutator_subgroup().clone(),
        cert: None,
    };
    s.cert = realize_members(group, &s.members);
    s
}

pub fn normalizer(group: &Group, h: &Subgroup) -> Result<Subgroup, GroupError> {
    if !Arc::ptr_eq(group, &h.parent) {
        return Err(GroupError::NotSubgroup);
    }
    let members: Vec<ElemId> = group
        .elements()
        .filter(|&g| {
            h.members
                .iter()
                .all(|&x| h.contains(group.conj(x, g)))
        })
        .collect();
    Subgroup::new(group, members)
}

pub fn centralizer(group: &Group, g: ElemId) -> Subgroup {
    let members: Vec<ElemId> = group
        .elements()
        .filter(|&h| group.mul(g, h) == group.mul(h, g))
        .collect();
    Subgroup {
        parent: group.clone(),
        members,
        cert: None,
    }
}

/// Quotient by a normal subgroup; returns the coset group and the projection
/// map (parent element id -> quotient element id).
pub fn quotient(group: &Group, n: &Subgroup) -> Result<(Group, Vec<u32>), GroupError> {
    if !Arc::ptr_eq(group, &n.parent) {
        return Err(GroupError::NotSubgroup);
    }
    if !n.is_normal() {
        return Err(GroupError::NotNormal);
    }
    let order = group.order();
    let mut coset_of = vec![u32::MAX; order];
    let mut reps = Vec::new();
    for g in 0..order {
        if coset_of[g] != u32::MAX {
            continue;
        }
        let c = reps.len() as u32;
        reps.push(g);
        for &h in &n.members {
            coset_of[group.mul(g, h)] = c;
        }
    }
    let codes: Vec<ElemCode> = (0..reps.len()).map(|c| vec![c as u32]).collect();
    let q = finish_group(
        GroupKind::Quotient {
            parent: group.clone(),
            coset_of: coset_of.clone(),
            reps,
        },
        codes,
    );
    Ok((q, coset_of))
}

/// Abelianization: quotient by the commutator subgroup.
pub fn abelianization(group: &Group) -> (Group, Vec<u32>) {
    let derived = commutator_subgroup(group);
    quotient(group, &derived).expect("commutator subgroup is normal")
}

// ---------------------------------------------------------------------------
// Frobenius-twisted groups
// ---------------------------------------------------------------------------

/// A finite group with a distinguished automorphism, the finite stand-in for
/// a group over the algebraic closure with its Frobenius action.
pub struct FrobGroup {
    pub group: Group,
    pub phi: Vec<u32>,
}

impl FrobGroup {
    pub fn new(group: &Group, phi: Vec<u32>) -> Result<FrobGroup, GroupError> {
        let n = group.order();
        if phi.len() != n {
            return Err(GroupError::NotAutomorphism);
        }
        let mut seen = vec![false; n];
        for &img in &phi {
            let img = img as usize;
            if img >= n || seen[img] {
                return Err(GroupError::NotAutomorphism);
            }
            seen[img] = true;
        }
        for a in 0..n {
            for b in 0..n {
                if phi[group.mul(a, b)] != group.mul(phi[a] as usize, phi[b] as usize) as u32 {
                    return Err(GroupError::NotAutomorphism);
                }
            }
        }
        Ok(FrobGroup {
            group: group.clone(),
            phi,
        })
    }

    pub fn apply(&self, g: ElemId) -> ElemId {
        self.phi[g] as ElemId
    }

    /// Fixed-point subgroup.
    pub fn fixed(&self) -> Subgroup {
        let members: Vec<ElemId> = self
            .group
            .elements()
            .filter(|&g| self.apply(g) == g)
            .collect();
        Subgroup {
            parent: self.group.clone(),
            members,
            cert: None,
        }
    }
}

/// The coordinatewise q-power Frobenius of a Points group over F_(q^m).
pub fn frobenius_automorphism(group: &Group) -> Result<FrobGroup, GroupError> {
    let model = group.model().ok_or(GroupError::NotAutomorphism)?;
    let r = model.base.degree() as i64;
    let phi: Vec<u32> = group
        .elements()
        .map(|g| {
            let coords = group.coords(g).unwrap();
            let imgs: Vec<FieldElem> = coords.iter().map(|c| frobenius(c, r)).collect();
            group.elem_by_coords(&imgs).expect("Frobenius preserves the point set") as u32
        })
        .collect();
    FrobGroup::new(group, phi)
}

/// Conjugation by a fixed element as an (inner) automorphism.
pub fn inner_automorphism(group: &Group, h: ElemId) -> FrobGroup {
    let phi: Vec<u32> = group
        .elements()
        .map(|g| group.mul(group.mul(h, g), group.inv(h)) as u32)
        .collect();
    FrobGroup::new(group, phi).expect("conjugation is an automorphism")
}
