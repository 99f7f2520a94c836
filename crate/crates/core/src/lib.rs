//! Exact computational toolkit for representations of unipotent groups over
//! finite fields: character tables, admissible pairs, L-packets, Heisenberg
//! representations, and the supporting duality algebra (linearized
//! polynomials, twisted Laurent polynomials, alternating pairings,
//! Lagrangian subgroups), all in exact arithmetic.

pub mod cyclo;
pub mod duality;
pub mod gf;
pub mod group;

pub use cyclo::{hermitian_inner, psi, CycloNum, MuVal};
pub use duality::{
    check_quadratic_refinement, f_eval, find_lagrangian, isotropic_search, lang_character,
    moore_solve, realize_subgroup, serre_pairing_matrix, AdditiveChar, AlternatingPairing, FinAb,
    LinearizedPoly, Pairing, QuadraticForm, TwistedPoly,
};
pub use gf::{embed, frobenius, make_field, rel_trace, Field, FieldElem};
pub use group::{
    abelianization, centralizer, center_subgroup, commutator_subgroup, inner_automorphism,
    normalizer, points, quotient, FiniteGroup, FrobGroup, Group, GroupModel, Subgroup,
};
