//! Exact arithmetic in the cyclotomic field `Q(zeta_{p^e})` and the additive
//! model `mu = (1/p^e)Z/Z` of the truncated `Q_p/Z_p`.
//!
//! Character values of the finite p-groups handled by this crate all live in
//! `Q(zeta_{p^e})` where `p^e` is the group exponent, so nothing more general
//! is needed. Coefficients are exact rationals throughout; there is no
//! floating point anywhere except the human-facing decimal rendering.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CycloError {
    #[error("mixed characteristics: {0} vs {1}")]
    CharMismatch(u64, u64),
    #[error("class data mismatch: {0} classes vs {1}")]
    ClassCountMismatch(usize, usize),
}

// ---------------------------------------------------------------------------
// MuVal: elements of (1/p^e)Z/Z
// ---------------------------------------------------------------------------

/// `a / p^e` in `Q_p/Z_p`, stored in lowest terms (`p` does not divide `a`
/// unless the value is zero, in which case `e = 0`).
#[derive(Clone, PartialEq, Eq, Hash, Serialize)]
pub struct MuVal {
    p: u64,
    e: u32,
    a: u64,
}

impl MuVal {
    pub fn new(p: u64, e: u32, a: u64) -> MuVal {
        let modulus = p.pow(e);
        let mut a = if modulus == 0 { 0 } else { a % modulus };
        let mut e = e;
        while e > 0 && a % p == 0 {
            a /= p;
            e -= 1;
        }
        if a == 0 {
            e = 0;
        }
        MuVal { p, e, a }
    }

    pub fn zero(p: u64) -> MuVal {
        MuVal { p, e: 0, a: 0 }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    /// Minimal level: p^e is the additive order of the value.
    pub fn level(&self) -> u32 {
        self.e
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0
    }

    /// Numerator after upward coercion to level `e` (requires `e >= level`).
    pub fn numerator_at(&self, e: u32) -> u64 {
        assert!(e >= self.e, "mu level coercion is upward only");
        self.a * self.p.pow(e - self.e)
    }

    pub fn add(&self, other: &MuVal) -> MuVal {
        assert_eq!(self.p, other.p, "mu characteristic mismatch");
        let e = self.e.max(other.e);
        MuVal::new(self.p, e, self.numerator_at(e) + other.numerator_at(e))
    }

    pub fn neg(&self) -> MuVal {
        if self.is_zero() {
            return self.clone();
        }
        MuVal::new(self.p, self.e, self.p.pow(self.e) - self.a)
    }

    pub fn sub(&self, other: &MuVal) -> MuVal {
        self.add(&other.neg())
    }

    pub fn scale(&self, n: i64) -> MuVal {
        if self.is_zero() {
            return self.clone();
        }
        let m = self.p.pow(self.e) as i64;
        let n = ((n % m) + m) % m;
        MuVal::new(self.p, self.e, self.a * n as u64)
    }

    /// Additive order of the value.
    pub fn order(&self) -> u64 {
        self.p.pow(self.e)
    }

    /// Value as an exact rational in [0, 1).
    pub fn as_rational(&self) -> BigRational {
        BigRational::new(BigInt::from(self.a), BigInt::from(self.p.pow(self.e)))
    }
}

impl PartialOrd for MuVal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical order: by value in [0, 1).
impl Ord for MuVal {
    fn cmp(&self, other: &Self) -> Ordering {
        let e = self.e.max(other.e);
        self.numerator_at(e).cmp(&other.numerator_at(e))
    }
}

impl fmt::Debug for MuVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}^{}", self.a, self.p, self.e)
    }
}

// ---------------------------------------------------------------------------
// CycloNum: Q(zeta_{p^e})
// ---------------------------------------------------------------------------

/// Element of `Q(zeta_{p^e})` on the power basis `1, z, ..., z^(phi(p^e)-1)`
/// modulo the p^e-th cyclotomic polynomial.
#[derive(Clone, PartialEq, Eq)]
pub struct CycloNum {
    p: u64,
    e: u32,
    coeffs: Vec<BigRational>,
}

pub fn phi_pe(p: u64, e: u32) -> usize {
    ((p - 1) * p.pow(e - 1)) as usize
}

impl CycloNum {
    pub fn zero(p: u64, e: u32) -> CycloNum {
        assert!(e >= 1);
        CycloNum {
            p,
            e,
            coeffs: vec![BigRational::zero(); phi_pe(p, e)],
        }
    }

    pub fn one(p: u64, e: u32) -> CycloNum {
        Self::from_rational(p, e, BigRational::one())
    }

    pub fn from_rational(p: u64, e: u32, r: BigRational) -> CycloNum {
        let mut c = Self::zero(p, e);
        c.coeffs[0] = r;
        c
    }

    pub fn from_integer(p: u64, e: u32, n: i64) -> CycloNum {
        Self::from_rational(p, e, BigRational::from(BigInt::from(n)))
    }

    /// zeta_{p^e}^t, reduced to the power basis.
    pub fn root_of_unity(p: u64, e: u32, t: u64) -> CycloNum {
        let n = p.pow(e);
        let t = (t % n) as usize;
        let mut c = Self::zero(p, e);
        c.add_power(t, &BigRational::one());
        c
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn level(&self) -> u32 {
        self.e
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    /// Add `r * zeta^t` (0 <= t < p^e), applying the basis reduction
    /// `zeta^((p-1)p^(e-1)+s) = -sum_{u<p-1} zeta^(u p^(e-1)+s)`.
    fn add_power(&mut self, t: usize, r: &BigRational) {
        let d = phi_pe(self.p, self.e);
        if t < d {
            self.coeffs[t] += r;
            return;
        }
        let pe1 = self.p.pow(self.e - 1) as usize;
        let s = t - d; // t = (p-1)p^(e-1) + s with 0 <= s < p^(e-1)
        debug_assert!(s < pe1);
        for u in 0..(self.p - 1) as usize {
            self.coeffs[u * pe1 + s] -= r;
        }
    }

    /// Coerce to a higher level with the same characteristic:
    /// `zeta_{p^e} = zeta_{p^f}^(p^(f-e))`.
    pub fn at_level(&self, f: u32) -> CycloNum {
        assert!(f >= self.e, "cyclotomic level coercion is upward only");
        if f == self.e {
            return self.clone();
        }
        let step = self.p.pow(f - self.e) as usize;
        let mut out = CycloNum::zero(self.p, f);
        for (t, r) in self.coeffs.iter().enumerate() {
            if !r.is_zero() {
                out.add_power(t * step, r);
            }
        }
        out
    }

    fn common_level(&self, other: &CycloNum) -> Result<(CycloNum, CycloNum), CycloError> {
        if self.p != other.p {
            return Err(CycloError::CharMismatch(self.p, other.p));
        }
        let e = self.e.max(other.e);
        Ok((self.at_level(e), other.at_level(e)))
    }

    pub fn add(&self, other: &CycloNum) -> CycloNum {
        let (mut a, b) = self.common_level(other).expect("cyclo characteristic mismatch");
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x += y;
        }
        a
    }

    pub fn neg(&self) -> CycloNum {
        let mut a = self.clone();
        for x in a.coeffs.iter_mut() {
            *x = -x.clone();
        }
        a
    }

    pub fn sub(&self, other: &CycloNum) -> CycloNum {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &CycloNum) -> CycloNum {
        let (a, b) = self.common_level(other).expect("cyclo characteristic mismatch");
        let n = a.p.pow(a.e) as usize;
        let mut out = CycloNum::zero(a.p, a.e);
        for (i, x) in a.coeffs.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.coeffs.iter().enumerate() {
                if y.is_zero() {
                    continue;
                }
                out.add_power((i + j) % n, &(x * y));
            }
        }
        out
    }

    pub fn scale(&self, r: &BigRational) -> CycloNum {
        let mut a = self.clone();
        for x in a.coeffs.iter_mut() {
            *x *= r;
        }
        a
    }

    /// Galois action `zeta -> zeta^k` for `gcd(k, p) = 1`.
    pub fn galois(&self, k: u64) -> CycloNum {
        let n = self.p.pow(self.e);
        assert_eq!(num_integer::gcd(k, self.p), 1);
        let mut out = CycloNum::zero(self.p, self.e);
        for (t, r) in self.coeffs.iter().enumerate() {
            if !r.is_zero() {
                out.add_power(((t as u64 * k) % n) as usize, r);
            }
        }
        out
    }

    /// Complex conjugation, `zeta -> zeta^(-1)`.
    pub fn conj(&self) -> CycloNum {
        let n = self.p.pow(self.e);
        self.galois(n - 1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn is_rational(&self) -> bool {
        self.coeffs[1..].iter().all(|c| c.is_zero())
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        if self.is_rational() {
            Some(self.coeffs[0].clone())
        } else {
            None
        }
    }

    pub fn as_integer(&self) -> Option<BigInt> {
        let r = self.as_rational()?;
        if r.is_integer() {
            Some(r.to_integer())
        } else {
            None
        }
    }

    /// Compare two values at a common level, coefficientwise. Total order,
    /// used only for deterministic tie-breaking.
    pub fn canonical_cmp(&self, other: &CycloNum) -> Ordering {
        let (a, b) = self.common_level(other).expect("cyclo characteristic mismatch");
        for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
            match x.cmp(y) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }

    /// Floating-point rendering for reports.
    pub fn to_complex_f64(&self) -> (f64, f64) {
        let n = self.p.pow(self.e) as f64;
        let mut re = 0.0;
        let mut im = 0.0;
        for (t, r) in self.coeffs.iter().enumerate() {
            if r.is_zero() {
                continue;
            }
            let x = rational_to_f64(r);
            let ang = 2.0 * std::f64::consts::PI * (t as f64) / n;
            re += x * ang.cos();
            im += x * ang.sin();
        }
        (re, im)
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    let num = r.numer();
    let den = r.denom();
    // exact for all values seen in desk-scale reports
    let n: f64 = num.to_string().parse().unwrap_or(f64::NAN);
    let d: f64 = den.to_string().parse().unwrap_or(f64::NAN);
    n / d
}

impl fmt::Debug for CycloNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = self.as_rational() {
            return write!(f, "{}", r);
        }
        let mut first = true;
        for (t, r) in self.coeffs.iter().enumerate() {
            if r.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if t == 0 {
                write!(f, "{}", r)?;
            } else {
                write!(f, "{}*z{}^{}", r, self.p.pow(self.e), t)?;
            }
        }
        Ok(())
    }
}

/// The fixed additive character `psi(a/p^e) = zeta_{p^e}^a`.
pub fn psi(v: &MuVal) -> CycloNum {
    let e = v.level().max(1);
    CycloNum::root_of_unity(v.p(), e, v.numerator_at(e))
}

/// Exact Hermitian inner product of two class functions:
/// `<f, g> = |G|^(-1) sum_C |C| f(C) conj(g(C))`.
pub fn hermitian_inner(
    values_f: &[CycloNum],
    values_g: &[CycloNum],
    class_sizes: &[u64],
    group_order: u64,
) -> Result<CycloNum, CycloError> {
    if values_f.len() != values_g.len() || values_f.len() != class_sizes.len() {
        return Err(CycloError::ClassCountMismatch(values_f.len(), values_g.len()));
    }
    let p = values_f.first().map(|c| c.p()).unwrap_or(2);
    let mut acc = CycloNum::zero(p, 1);
    for ((f, g), &sz) in values_f.iter().zip(values_g).zip(class_sizes) {
        let term = f
            .mul(&g.conj())
            .scale(&BigRational::from(BigInt::from(sz)));
        acc = acc.add(&term);
    }
    Ok(acc.scale(&BigRational::new(BigInt::one(), BigInt::from(group_order))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_identity_and_minus_one() {
        let z = MuVal::zero(5);
        assert_eq!(psi(&z), CycloNum::one(5, 1));
        let half = MuVal::new(2, 1, 1);
        assert_eq!(psi(&half), CycloNum::from_integer(2, 1, -1));
    }

    #[test]
    fn psi_additive_with_level_reduction() {
        // psi(1/9) * psi(2/9) = psi(3/9) = zeta_3
        let a = MuVal::new(3, 2, 1);
        let b = MuVal::new(3, 2, 2);
        let sum = a.add(&b);
        assert_eq!(sum, MuVal::new(3, 1, 1));
        let prod = psi(&a).mul(&psi(&b));
        assert_eq!(prod, psi(&sum).at_level(2));
        assert_eq!(prod, CycloNum::root_of_unity(3, 2, 3));
    }

    #[test]
    fn psi_injective_per_level() {
        for p in [2u64, 3] {
            let e = 2u32;
            let n = p.pow(e);
            let mut seen = Vec::new();
            for a in 0..n {
                let val = psi(&MuVal::new(p, e, a)).at_level(e);
                assert!(!seen.contains(&val));
                seen.push(val.clone());
                if a != 0 {
                    assert!(!val.sub(&CycloNum::one(p, e)).is_zero());
                }
            }
        }
    }

    #[test]
    fn conjugation_involution_and_unit_norm() {
        for a in 0..9u64 {
            let z = psi(&MuVal::new(3, 2, a));
            assert_eq!(z.conj().conj(), z);
            let norm = z.mul(&z.conj());
            assert_eq!(norm.at_level(2), CycloNum::one(3, 2));
        }
    }

    #[test]
    fn level_coercion_commutes_with_arithmetic() {
        let x = CycloNum::root_of_unity(3, 1, 1);
        let y = CycloNum::root_of_unity(3, 1, 2);
        assert_eq!(
            x.add(&y).at_level(2),
            x.at_level(2).add(&y.at_level(2))
        );
        assert_eq!(
            x.mul(&y).at_level(2),
            x.at_level(2).mul(&y.at_level(2))
        );
    }

    #[test]
    fn muval_normalizes() {
        assert_eq!(MuVal::new(3, 2, 3), MuVal::new(3, 1, 1));
        assert_eq!(MuVal::new(3, 2, 9), MuVal::zero(3));
        assert_eq!(MuVal::new(2, 3, 6), MuVal::new(2, 2, 3));
    }

    #[test]
    fn muval_scale_and_order() {
        let v = MuVal::new(3, 2, 1);
        assert_eq!(v.scale(9), MuVal::zero(3));
        assert_eq!(v.scale(3), MuVal::new(3, 1, 1));
        assert_eq!(v.order(), 9);
        assert_eq!(v.neg().add(&v), MuVal::zero(3));
    }

    #[test]
    fn hermitian_trivial_character() {
        // trivial character of any group: <chi, chi> = 1
        let ones = vec![CycloNum::one(2, 1); 3];
        let sizes = vec![1u64, 3, 4];
        let ip = hermitian_inner(&ones, &ones, &sizes, 8).unwrap();
        assert_eq!(ip, CycloNum::one(2, 1));
    }

    #[test]
    fn hermitian_trivial_in_regular() {
        // regular character: |G| at identity, 0 elsewhere
        let p = 2u64;
        let mut reg = vec![CycloNum::zero(p, 1); 3];
        reg[0] = CycloNum::from_integer(p, 1, 8);
        let ones = vec![CycloNum::one(p, 1); 3];
        let sizes = vec![1u64, 3, 4];
        let ip = hermitian_inner(&ones, &reg, &sizes, 8).unwrap();
        assert_eq!(ip, CycloNum::one(p, 1));
    }
}
