//! Exact computer algebra for a rank-parameterized orbifold Toda setup:
//! a cyclotomic scalar tower with formal transcendental symbols, a K-theory
//! lattice with Euler and intersection pairings, calibrated period vectors,
//! vertex-operator phase factors, a truncated polynomial Fock model with
//! quadratic-Hamiltonian quantization, and the two residue pipelines
//! (sector residues in q-variables, wave-function bilinears in t-variables)
//! that must agree under the change of variables.
//!
//! All arithmetic is exact: rationals, cyclotomic integers over a fixed
//! root of unity, and monomials in a small alphabet of formal constants.
//! Every identity check in the test suite is an exact equality.

pub mod exec;
pub mod scalars;
pub mod klattice;
pub mod periods;
pub mod phase;
pub mod fock;
pub mod hqe;
pub mod dtoda;
pub mod report;
