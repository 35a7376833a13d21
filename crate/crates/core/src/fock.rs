//! Fock-space model: polynomial functions of the loop-space variables
//! `q_{i,p,k}` together with the Weyl-algebra action of linear and quadratic
//! Hamiltonians.
//!
//! A point of the symplectic loop space is written `f = sum_k f_k z^k` with
//! `f_k` a cohomology vector.  The nonnegative-power coefficients carry the
//! coordinates `q_{i,p,k}`; the Fock space consists of polynomials in those
//! coordinates (plus a distinguished translation variable `x`) with scalar
//! coefficients and half-integer powers of the dispersion parameter.  Basis
//! vectors act by
//!
//! ```text
//!   (phi_{i,p} z^k)^          = -sqrt(h) d/dq_{i,p,k}
//!   (phi^{i,p} (-z)^{-k-1})^  =  q_{i,p,k} / sqrt(h)
//! ```
//!
//! where `phi^{i,p}` is the Poincare-dual basis.
//!
//! Truncation discipline.  A `FockPoly` is the image of an (often infinite)
//! series under the projection that kills monomials of variable degree above
//! `caps.deg`, variable index above `caps.kmax`, or dispersion half-power
//! outside `[caps.hh_lo, caps.hh_hi]`.  All three projections are silent,
//! and all three commute with multiplication, with substitutions that only
//! raise indices, and with differentiation by in-window variables, because
//! the dropped monomials can never re-enter the window under those
//! operations.  They do NOT commute with differentiation applied after a
//! degree or dispersion truncation has bitten; identity tests that mix
//! creation and annihilation therefore either choose windows wide enough
//! that nothing is dropped, or compare only an inner window with a margin
//! for each annihilation step (see `s_conjugation_check`).  Differentiating
//! by a variable outside the index window is not defined on the projection
//! at all, so that one case fails loudly.

use std::collections::BTreeMap;
use std::fmt;

use num::BigRational;

use crate::klattice::{phi_index_pairs, poincare, CohVector};
use crate::scalars::{a_param, binomial, factorial, rat, rat_i, Cyclotomic, Scalar, Sym};

type Rat = BigRational;

// ---------------------------------------------------------------------------
// Variables and monomials
// ---------------------------------------------------------------------------

/// Universe tag offset for the time variables of the hierarchy; families
/// 0..=3 of loop-space variables live below it.
const T_UNIVERSE: u8 = 10;

/// Slot reserved for the simultaneous-substitution scratch space.
const SHADOW_SLOT: u8 = 9;

/// A polynomial variable.  `slot` distinguishes doubled variable sets
/// (0 = plain, 1 = primed, 2 = double-primed); `fam`/`sub` identify either a
/// basis pair `(i,p)` of the loop-space universe or a time-variable family;
/// `k` is the z-index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Var {
    pub slot: u8,
    pub fam: u8,
    pub sub: u8,
    pub k: u16,
}

impl Var {
    /// Loop-space variable `q_{i,p,k}` in the given slot.
    pub fn q(slot: u8, i: u8, p: u32, k: u16) -> Self {
        assert!(i <= 3, "family out of range");
        assert!(slot != SHADOW_SLOT, "slot 9 is reserved");
        Var { slot, fam: i, sub: p as u8, k }
    }

    /// Time variable `t_{family, ell}` in the given slot.
    pub fn t(slot: u8, family: u8, ell: u16) -> Self {
        assert!(family <= 3, "family out of range");
        assert!(slot != SHADOW_SLOT, "slot 9 is reserved");
        Var { slot, fam: T_UNIVERSE + family, sub: 0, k: ell }
    }

    pub fn is_q(&self) -> bool {
        self.fam < T_UNIVERSE
    }

    /// Basis pair `(i, p)` of a loop-space variable.
    pub fn phi_pair(&self) -> (u8, u32) {
        assert!(self.is_q());
        (self.fam, self.sub as u32)
    }

    /// Family of a time variable.
    pub fn t_family(&self) -> u8 {
        assert!(!self.is_q());
        self.fam - T_UNIVERSE
    }
}

/// A monomial: sorted variable powers, an `x`-power, and a half-integer
/// power `hh/2` of the dispersion parameter.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Mono {
    vars: Vec<(Var, u32)>,
    x: u32,
    hh: i32,
}

impl Mono {
    pub fn unit() -> Self {
        Mono { vars: Vec::new(), x: 0, hh: 0 }
    }

    pub fn var(v: Var) -> Self {
        Mono { vars: vec![(v, 1)], x: 0, hh: 0 }
    }

    pub fn var_pow(v: Var, e: u32) -> Self {
        if e == 0 {
            Self::unit()
        } else {
            Mono { vars: vec![(v, e)], x: 0, hh: 0 }
        }
    }

    pub fn with_hh(mut self, hh: i32) -> Self {
        self.hh = hh;
        self
    }

    pub fn with_x(mut self, x: u32) -> Self {
        self.x = x;
        self
    }

    pub fn vars(&self) -> &[(Var, u32)] {
        &self.vars
    }

    pub fn x_power(&self) -> u32 {
        self.x
    }

    /// Half-power of the dispersion parameter (the monomial carries `h^{hh/2}`).
    pub fn hh(&self) -> i32 {
        self.hh
    }

    /// Total degree in the polynomial variables (`x` excluded).
    pub fn q_degree(&self) -> u32 {
        self.vars.iter().map(|(_, e)| *e).sum()
    }

    pub fn exponent(&self, v: Var) -> u32 {
        self.vars
            .iter()
            .find(|(w, _)| *w == v)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    pub fn max_index(&self) -> Option<u16> {
        self.vars.iter().map(|(v, _)| v.k).max()
    }

    pub fn mul(&self, rhs: &Mono) -> Mono {
        let mut vars = Vec::with_capacity(self.vars.len() + rhs.vars.len());
        let (mut i, mut j) = (0, 0);
        while i < self.vars.len() && j < rhs.vars.len() {
            match self.vars[i].0.cmp(&rhs.vars[j].0) {
                std::cmp::Ordering::Less => {
                    vars.push(self.vars[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    vars.push(rhs.vars[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    vars.push((self.vars[i].0, self.vars[i].1 + rhs.vars[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        vars.extend_from_slice(&self.vars[i..]);
        vars.extend_from_slice(&rhs.vars[j..]);
        Mono { vars, x: self.x + rhs.x, hh: self.hh + rhs.hh }
    }

    /// Remove one power of `v`; returns the old exponent (0 if absent).
    fn lower(&self, v: Var) -> (Mono, u32) {
        let mut out = self.clone();
        for idx in 0..out.vars.len() {
            if out.vars[idx].0 == v {
                let e = out.vars[idx].1;
                if e == 1 {
                    out.vars.remove(idx);
                } else {
                    out.vars[idx].1 = e - 1;
                }
                return (out, e);
            }
        }
        (out, 0)
    }

    /// Remove the variable `v` entirely; returns its exponent.
    fn strip(&self, v: Var) -> (Mono, u32) {
        let mut out = self.clone();
        for idx in 0..out.vars.len() {
            if out.vars[idx].0 == v {
                let e = out.vars[idx].1;
                out.vars.remove(idx);
                return (out, e);
            }
        }
        (out, 0)
    }
}

/// Truncation data for a Fock polynomial; see the module notes for the
/// projection semantics.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Caps {
    /// Total-degree cap in the polynomial variables.
    pub deg: u32,
    /// Largest admissible variable index `k`.
    pub kmax: u16,
    /// Admissible window for half-powers of the dispersion parameter.
    pub hh_lo: i32,
    pub hh_hi: i32,
}

impl Caps {
    pub fn new(deg: u32, kmax: u16, hh_lo: i32, hh_hi: i32) -> Self {
        assert!(hh_lo <= 0 && 0 <= hh_hi, "window must contain 0");
        Caps { deg, kmax, hh_lo, hh_hi }
    }

    fn admits(&self, m: &Mono) -> bool {
        m.q_degree() <= self.deg
            && m.max_index().map_or(true, |k| k <= self.kmax)
            && m.hh >= self.hh_lo
            && m.hh <= self.hh_hi
    }
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum FockError {
    /// Differentiation by a variable whose index lies outside the window.
    IndexWindow { k: u16, kmax: u16 },
    /// The argument of `quantize_quadratic` does not preserve the symplectic form.
    NotInfinitesimallySymplectic(String),
    /// The two-variable numerator is not divisible by `z^{-1} + w^{-1}`.
    NotDivisible(String),
    /// Division by a series whose constant term is not an invertible monomial.
    NonInvertibleConstant(String),
    /// Text-format parse failure with 1-based position.
    Parse { line: usize, col: usize, msg: String },
    /// Construct not representable in the text format.
    Unsupported(String),
}

impl fmt::Display for FockError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FockError::IndexWindow { k, kmax } => {
                write!(f, "variable index {k} exceeds declared window {kmax}")
            }
            FockError::NotInfinitesimallySymplectic(m) => {
                write!(f, "not infinitesimally symplectic: {m}")
            }
            FockError::NotDivisible(m) => write!(f, "not divisible: {m}"),
            FockError::NonInvertibleConstant(m) => write!(f, "non-invertible constant term: {m}"),
            FockError::Parse { line, col, msg } => {
                write!(f, "parse error at line {line}, column {col}: {msg}")
            }
            FockError::Unsupported(m) => write!(f, "unsupported in text format: {m}"),
        }
    }
}

impl std::error::Error for FockError {}

// ---------------------------------------------------------------------------
// FockPoly
// ---------------------------------------------------------------------------

/// Polynomial in the loop-space variables with scalar coefficients,
/// an `x`-power, and half-integer dispersion powers, projected to `Caps`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FockPoly {
    n: u32,
    caps: Caps,
    terms: BTreeMap<Mono, Scalar>,
}

impl FockPoly {
    pub fn zero(n: u32, caps: Caps) -> Self {
        FockPoly { n, caps, terms: BTreeMap::new() }
    }

    pub fn one(n: u32, caps: Caps) -> Self {
        let mut p = Self::zero(n, caps);
        p.insert(Mono::unit(), Scalar::one(n));
        p
    }

    pub fn constant(n: u32, caps: Caps, s: Scalar) -> Self {
        let mut p = Self::zero(n, caps);
        p.insert(Mono::unit(), s);
        p
    }

    pub fn from_terms(
        n: u32,
        caps: Caps,
        it: impl IntoIterator<Item = (Mono, Scalar)>,
    ) -> Self {
        let mut p = Self::zero(n, caps);
        for (m, c) in it {
            p.insert(m, c);
        }
        p
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Scalar)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Mono) -> Scalar {
        self.terms.get(m).cloned().unwrap_or_else(|| Scalar::zero(self.n))
    }

    /// Add a term, projecting away anything outside the caps.
    pub fn insert(&mut self, m: Mono, c: Scalar) {
        if c.is_zero() || !self.caps.admits(&m) {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = e.get().add(&c);
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    fn assert_compatible(&self, rhs: &Self) {
        assert_eq!(self.n, rhs.n, "mixed basis sizes");
        assert_eq!(self.caps, rhs.caps, "mixed truncation caps");
    }

    pub fn add(&self, rhs: &Self) -> Self {
        self.assert_compatible(rhs);
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.insert(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.neg();
        }
        out
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        if s.is_zero() {
            return Self::zero(self.n, self.caps);
        }
        let mut out = Self::zero(self.n, self.caps);
        for (m, c) in &self.terms {
            out.insert(m.clone(), c.mul(s));
        }
        out
    }

    pub fn scale_rat(&self, r: &Rat) -> Self {
        self.scale(&Scalar::from_rat(self.n, r.clone()))
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        self.assert_compatible(rhs);
        let mut out = Self::zero(self.n, self.caps);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                if ma.q_degree() + mb.q_degree() > self.caps.deg {
                    continue;
                }
                out.insert(ma.mul(mb), ca.mul(cb));
            }
        }
        out
    }

    /// Multiply by `h^{dh/2}`.
    pub fn mul_hh(&self, dh: i32) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (m, c) in &self.terms {
            let mut m = m.clone();
            m.hh += dh;
            out.insert(m, c.clone());
        }
        out
    }

    pub fn mul_var(&self, v: Var) -> Self {
        let vm = Mono::var(v);
        let mut out = Self::zero(self.n, self.caps);
        for (m, c) in &self.terms {
            out.insert(m.mul(&vm), c.clone());
        }
        out
    }

    pub fn mul_x(&self) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (m, c) in &self.terms {
            let mut m = m.clone();
            m.x += 1;
            out.insert(m, c.clone());
        }
        out
    }

    /// Partial derivative with respect to a polynomial variable.
    pub fn derive(&self, v: Var) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (m, c) in &self.terms {
            let (lowered, e) = m.lower(v);
            if e > 0 {
                out.insert(lowered, c.scale(&rat_i(e as i64)));
            }
        }
        out
    }

    pub fn derive_x(&self) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (m, c) in &self.terms {
            if m.x > 0 {
                let mut m2 = m.clone();
                m2.x -= 1;
                out.insert(m2, c.scale(&rat_i(m.x as i64)));
            }
        }
        out
    }

    /// Substitute `x -> x + c*sqrt(h)`.
    pub fn shift_x(&self, c: i64) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (m, coeff) in &self.terms {
            let e = m.x;
            for t in 0..=e {
                let mut m2 = m.clone();
                m2.x = t;
                m2.hh += (e - t) as i32;
                let factor = binomial(e, t) * rat_i(c).pow((e - t) as i32);
                out.insert(m2, coeff.scale(&factor));
            }
        }
        out
    }

    /// Substitute a polynomial for a variable.
    pub fn substitute(&self, v: Var, rep: &Self) -> Self {
        self.assert_compatible(rep);
        let mut max_e = 0;
        for m in self.terms.keys() {
            max_e = max_e.max(m.exponent(v));
        }
        let mut powers = Vec::with_capacity(max_e as usize + 1);
        powers.push(Self::one(self.n, self.caps));
        for e in 1..=max_e as usize {
            let next = powers[e - 1].mul(rep);
            powers.push(next);
        }
        let mut out = Self::zero(self.n, self.caps);
        for (m, c) in &self.terms {
            let (rest, e) = m.strip(v);
            if e == 0 {
                out.insert(rest, c.clone());
            } else {
                let base = Self::from_terms(self.n, self.caps, [(rest, c.clone())]);
                out = out.add(&base.mul(&powers[e as usize]));
            }
        }
        out
    }

    /// Reproject into a different (usually smaller) set of caps.
    pub fn with_caps(&self, caps: Caps) -> Self {
        let mut out = Self::zero(self.n, caps);
        for (m, c) in &self.terms {
            out.insert(m.clone(), c.clone());
        }
        out
    }

    /// Restriction to an inner window, used when comparing two pipelines
    /// whose truncation errors are confined to the margins.
    pub fn restricted(&self, deg_max: u32, hh_lo: i32, hh_hi: i32) -> Self {
        let mut out = self.clone();
        out.terms
            .retain(|m, _| m.q_degree() <= deg_max && m.hh >= hh_lo && m.hh <= hh_hi);
        out
    }

    /// Drop every term containing a variable with index above `kmax`.
    pub fn truncate_high_k(&self, kmax: u16) -> Self {
        let mut out = self.clone();
        out.terms.retain(|m, _| m.max_index().map_or(true, |k| k <= kmax));
        out
    }

    /// Drop every term with `x`-power above `xmax`.
    pub fn truncate_high_x(&self, xmax: u32) -> Self {
        let mut out = self.clone();
        out.terms.retain(|m, _| m.x <= xmax);
        out
    }

    pub fn x_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.x).max().unwrap_or(0)
    }

    pub fn q_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.q_degree()).max().unwrap_or(0)
    }

    /// Multiplicative inverse as a series truncated at the degree cap and at
    /// `x`-degree `xmax`.  Requires the constant term to be an invertible
    /// monomial scalar and every other term to raise the variable or
    /// `x`-degree.
    pub fn inverse_trunc(&self, xmax: u32) -> Result<Self, FockError> {
        let c0 = self.coeff(&Mono::unit());
        if c0.is_zero() {
            return Err(FockError::NonInvertibleConstant("constant term is zero".into()));
        }
        let c0_inv = c0
            .inv_monomial()
            .map_err(|e| FockError::NonInvertibleConstant(format!("{e:?}")))?;
        let mut u = Self::one(self.n, self.caps).sub(&self.scale(&c0_inv));
        u = u.truncate_high_x(xmax);
        for m in u.terms.keys() {
            if m.q_degree() == 0 && m.x == 0 {
                return Err(FockError::NonInvertibleConstant(
                    "variable-free part is not a single monomial".into(),
                ));
            }
        }
        let mut acc = Self::one(self.n, self.caps);
        let mut pow = Self::one(self.n, self.caps);
        loop {
            pow = pow.mul(&u).truncate_high_x(xmax);
            if pow.is_zero() {
                break;
            }
            acc = acc.add(&pow);
        }
        Ok(acc.scale(&c0_inv))
    }
}

/// `exp` of a polynomial all of whose terms have positive variable degree:
/// the series terminates at the degree cap.
pub fn exp_of_poly(g: &FockPoly) -> FockPoly {
    for m in g.terms.keys() {
        assert!(m.q_degree() > 0, "exponential argument must raise the degree");
    }
    let mut acc = FockPoly::one(g.n, g.caps);
    let mut pow = FockPoly::one(g.n, g.caps);
    let mut j: u32 = 0;
    loop {
        j += 1;
        pow = pow.mul(g);
        if pow.is_zero() {
            break;
        }
        acc = acc.add(&pow.scale_rat(&(rat_i(1) / factorial(j))));
        assert!(j <= g.caps.deg + 1, "exponential did not terminate at the caps");
    }
    acc
}

// ---------------------------------------------------------------------------
// Windowed loop-space fields
// ---------------------------------------------------------------------------

/// Finite window of a loop-space field `f = sum_k f_k z^k`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct HField {
    n: u32,
    lo: i64,
    comps: Vec<CohVector>,
}

impl HField {
    pub fn zero(n: u32) -> Self {
        HField { n, lo: 0, comps: Vec::new() }
    }

    pub fn new(n: u32, lo: i64, comps: Vec<CohVector>) -> Self {
        for c in &comps {
            assert_eq!(c.n(), n);
        }
        HField { n, lo, comps }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Window `[lo, hi]` of potentially nonzero components.
    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.lo + self.comps.len() as i64 - 1)
    }

    pub fn component(&self, k: i64) -> CohVector {
        if k < self.lo || k >= self.lo + self.comps.len() as i64 {
            CohVector::zero(self.n)
        } else {
            self.comps[(k - self.lo) as usize].clone()
        }
    }

    pub fn set_component(&mut self, k: i64, v: CohVector) {
        assert_eq!(v.n(), self.n);
        if self.comps.is_empty() {
            self.lo = k;
            self.comps.push(v);
            return;
        }
        while k < self.lo {
            self.comps.insert(0, CohVector::zero(self.n));
            self.lo -= 1;
        }
        while k >= self.lo + self.comps.len() as i64 {
            self.comps.push(CohVector::zero(self.n));
        }
        self.comps[(k - self.lo) as usize] = v;
    }

    pub fn add_component(&mut self, k: i64, v: CohVector) {
        let cur = self.component(k);
        self.set_component(k, cur.add(&v));
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        if rhs.comps.is_empty() {
            return out;
        }
        let (lo, hi) = rhs.window();
        for k in lo..=hi {
            out.add_component(k, rhs.component(k));
        }
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            *c = c.neg();
        }
        out
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            *c = c.scale(s);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.is_zero())
    }

    /// Nonnegative-power part.
    pub fn plus_part(&self) -> Self {
        let (lo, hi) = self.window();
        let mut out = Self::zero(self.n);
        if self.comps.is_empty() {
            return out;
        }
        for k in lo.max(0)..=hi {
            out.set_component(k, self.component(k));
        }
        out
    }

    /// Negative-power part.
    pub fn minus_part(&self) -> Self {
        let (lo, hi) = self.window();
        let mut out = Self::zero(self.n);
        if self.comps.is_empty() {
            return out;
        }
        for k in lo..=hi.min(-1) {
            out.set_component(k, self.component(k));
        }
        out
    }

    /// Basis field `phi_{i,p} z^k`.
    pub fn e_plus(n: u32, i: u8, p: u32, k: i64) -> Self {
        assert!(k >= 0);
        let mut out = Self::zero(n);
        out.set_component(k, CohVector::phi(n, i, p));
        out
    }

    /// Basis field `phi^{i,p} (-z)^{-k-1}`.
    pub fn e_minus(n: u32, i: u8, p: u32, k: i64) -> Self {
        assert!(k >= 0);
        let sign = if k % 2 == 0 { -1 } else { 1 };
        let mut out = Self::zero(n);
        out.set_component(-k - 1, dual_vector(n, i, p).scale(&Scalar::from_int(n, sign)));
        out
    }
}

/// The Poincare-dual basis vector `phi^{i,p}` expressed in the `phi` basis.
pub fn dual_vector(n: u32, i: u8, p: u32) -> CohVector {
    match (i, p) {
        (0, 0) => CohVector::phi(n, 0, 1),
        (0, 1) => CohVector::phi(n, 0, 0),
        (j, p) => {
            let a = a_param(n, j);
            CohVector::phi(n, j, a - p).scale(&Scalar::from_int(n, a as i64))
        }
    }
}

/// Coefficient of `phi^{i,p}` in the dual-basis expansion of `v`.
pub fn dual_coeff(v: &CohVector, i: u8, p: u32) -> Scalar {
    poincare(v, &CohVector::phi(v.n(), i, p))
}

/// Symplectic pairing `Omega(f, g) = Res (f(-z), g(z)) dz`.
pub fn omega(f: &HField, g: &HField) -> Scalar {
    let n = f.n();
    assert_eq!(n, g.n());
    if f.comps.is_empty() {
        return Scalar::zero(n);
    }
    let (flo, fhi) = f.window();
    let mut acc = Scalar::zero(n);
    for k in flo..=fhi {
        let sign = if k.rem_euclid(2) == 0 { 1 } else { -1 };
        let term = poincare(&f.component(k), &g.component(-k - 1));
        acc = acc.add(&term.scale(&rat_i(sign)));
    }
    acc
}

// ---------------------------------------------------------------------------
// Linear Hamiltonians: vertex-operator building blocks
// ---------------------------------------------------------------------------

/// Annihilation data of a field: list of `(variable, coefficient)` such that
/// the nonnegative part acts as `sum -sqrt(h) * coeff * d/dq_var`.  Unlike
/// every other window boundary this one is loud: differentiating by a
/// variable the projection has removed is not a well-defined operation.
fn ann_list(f: &HField, slot: u8, caps: &Caps) -> Result<Vec<(Var, Scalar)>, FockError> {
    let n = f.n();
    let (_, hi) = f.window();
    let mut out = Vec::new();
    if f.comps.is_empty() {
        return Ok(out);
    }
    for k in 0..=hi.max(-1) {
        let comp = f.component(k);
        if comp.is_zero() {
            continue;
        }
        if k > caps.kmax as i64 {
            return Err(FockError::IndexWindow { k: k as u16, kmax: caps.kmax });
        }
        for (i, p) in phi_index_pairs(n) {
            let c = comp.component(i, p).clone();
            if !c.is_zero() {
                out.push((Var::q(slot, i, p, k as u16), c));
            }
        }
    }
    Ok(out)
}

/// Creation part of a field as a linear polynomial: the negative part acts
/// as multiplication by `sum coeff * q_var * h^{-1/2}` (projected to the
/// index window).
pub fn cre_linear(f: &HField, slot: u8, caps: Caps) -> FockPoly {
    let n = f.n();
    let (lo, _) = f.window();
    let mut out = FockPoly::zero(n, caps);
    if f.comps.is_empty() {
        return out;
    }
    for k in 0..=(-lo - 1).max(-1) {
        let comp = f.component(-k - 1);
        if comp.is_zero() {
            continue;
        }
        let sign = if k % 2 == 0 { -1 } else { 1 };
        for (i, p) in phi_index_pairs(n) {
            let d = dual_coeff(&comp, i, p).scale(&rat_i(sign));
            if !d.is_zero() {
                out.insert(Mono::var(Var::q(slot, i, p, k as u16)).with_hh(-1), d);
            }
        }
    }
    out
}

/// Action of the linear Hamiltonian attached to `f` (one application).
pub fn heisenberg_apply(f: &HField, tau: &FockPoly, slot: u8) -> Result<FockPoly, FockError> {
    let caps = tau.caps();
    let mut out = cre_linear(f, slot, caps).mul(tau);
    for (v, c) in ann_list(f, slot, &caps)? {
        out = out.add(&tau.derive(v).scale(&c).neg().mul_hh(1));
    }
    Ok(out)
}

/// `exp` of the annihilation part: the substitution
/// `q_var -> q_var - sqrt(h) * coeff` (exact on polynomials).
pub fn translate_plus(f: &HField, tau: &FockPoly, slot: u8) -> Result<FockPoly, FockError> {
    let caps = tau.caps();
    let mut out = tau.clone();
    for (v, c) in ann_list(f, slot, &caps)? {
        let mut rep = FockPoly::zero(tau.n(), caps);
        rep.insert(Mono::var(v), Scalar::one(tau.n()));
        rep.insert(Mono::unit().with_hh(1), c.neg());
        out = out.substitute(v, &rep);
    }
    Ok(out)
}

/// `exp` of the creation part: multiplication by the truncated exponential
/// of the creation linear form.
pub fn mult_exp_minus(f: &HField, tau: &FockPoly, slot: u8) -> FockPoly {
    exp_of_poly(&cre_linear(f, slot, tau.caps())).mul(tau)
}

/// Normal-ordered vertex operator: creation exponential after annihilation
/// exponential.
pub fn vertex_apply(f: &HField, tau: &FockPoly, slot: u8) -> Result<FockPoly, FockError> {
    Ok(mult_exp_minus(f, &translate_plus(f, tau, slot)?, slot))
}

/// `(creation part)^a / a!` applied to `tau`.
pub fn cre_power(f: &HField, a: u32, tau: &FockPoly, slot: u8) -> FockPoly {
    let g = cre_linear(f, slot, tau.caps());
    let mut out = tau.clone();
    for _ in 0..a {
        out = g.mul(&out);
    }
    out.scale_rat(&(rat_i(1) / factorial(a)))
}

/// `(annihilation part)^b / b!` applied to `tau`.
pub fn ann_power(f: &HField, b: u32, tau: &FockPoly, slot: u8) -> Result<FockPoly, FockError> {
    let list = ann_list(f, slot, &tau.caps())?;
    let mut out = tau.clone();
    for _ in 0..b {
        let mut next = FockPoly::zero(tau.n(), tau.caps());
        for (v, c) in &list {
            next = next.add(&out.derive(*v).scale(c).neg().mul_hh(1));
        }
        out = next;
    }
    Ok(out.scale_rat(&(rat_i(1) / factorial(b))))
}

/// Coefficient of `s^j` in the normal-ordered exponential `e^{s f^-} e^{s f^+}`
/// applied to `tau`.
pub fn vertex_power(f: &HField, j: u32, tau: &FockPoly, slot: u8) -> Result<FockPoly, FockError> {
    let mut out = FockPoly::zero(tau.n(), tau.caps());
    for a in 0..=j {
        let b = j - a;
        out = out.add(&cre_power(f, a, &ann_power(f, b, tau, slot)?, slot));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Matrices over the scalar ring, series in z^{-1}
// ---------------------------------------------------------------------------

fn slot_count(n: u32) -> usize {
    phi_index_pairs(n).len()
}

fn slot_of(n: u32, i: u8, p: u32) -> usize {
    phi_index_pairs(n)
        .iter()
        .position(|&(a, b)| a == i && b == p)
        .expect("basis pair")
}

/// Poincare partner slot and pairing value for a basis slot.
fn partner(n: u32, idx: usize) -> (usize, Rat) {
    let pairs = phi_index_pairs(n);
    let (i, p) = pairs[idx];
    match (i, p) {
        (0, 0) => (slot_of(n, 0, 1), rat_i(1)),
        (0, 1) => (slot_of(n, 0, 0), rat_i(1)),
        (j, p) => {
            let a = a_param(n, j);
            (slot_of(n, j, a - p), rat(1, a as i64))
        }
    }
}

/// Square matrix over the scalar ring, indexed by the cohomology basis.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Mat {
    n: u32,
    rows: Vec<Vec<Scalar>>,
}

impl Mat {
    pub fn zero(n: u32) -> Self {
        let d = slot_count(n);
        Mat { n, rows: vec![vec![Scalar::zero(n); d]; d] }
    }

    pub fn identity(n: u32) -> Self {
        let mut m = Self::zero(n);
        for i in 0..slot_count(n) {
            m.rows[i][i] = Scalar::one(n);
        }
        m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn entry(&self, r: usize, c: usize) -> &Scalar {
        &self.rows[r][c]
    }

    pub fn set_entry(&mut self, r: usize, c: usize, v: Scalar) {
        self.rows[r][c] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().flatten().all(|e| e.is_zero())
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        for (r, row) in rhs.rows.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                out.rows[r][c] = out.rows[r][c].add(e);
            }
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for row in out.rows.iter_mut() {
            for e in row.iter_mut() {
                *e = e.neg();
            }
        }
        out
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        let mut out = self.clone();
        for row in out.rows.iter_mut() {
            for e in row.iter_mut() {
                *e = e.mul(s);
            }
        }
        out
    }

    pub fn scale_rat(&self, r: &Rat) -> Self {
        self.scale(&Scalar::from_rat(self.n, r.clone()))
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let d = slot_count(self.n);
        let mut out = Self::zero(self.n);
        for r in 0..d {
            for c in 0..d {
                let mut acc = Scalar::zero(self.n);
                for t in 0..d {
                    if !self.rows[r][t].is_zero() && !rhs.rows[t][c].is_zero() {
                        acc = acc.add(&self.rows[r][t].mul(&rhs.rows[t][c]));
                    }
                }
                out.rows[r][c] = acc;
            }
        }
        out
    }

    pub fn apply(&self, v: &CohVector) -> CohVector {
        let n = self.n;
        let pairs = phi_index_pairs(n);
        let mut out = CohVector::zero(n);
        for (r, (i, p)) in pairs.iter().enumerate() {
            let mut acc = Scalar::zero(n);
            for (c, (j, q)) in pairs.iter().enumerate() {
                let vc = v.component(*j, *q);
                if !vc.is_zero() && !self.rows[r][c].is_zero() {
                    acc = acc.add(&self.rows[r][c].mul(vc));
                }
            }
            out.set_component(*i, *p, acc);
        }
        out
    }

    /// Matrix whose columns are the images of the basis under `op`.
    pub fn from_action(n: u32, mut op: impl FnMut(&CohVector) -> CohVector) -> Self {
        let pairs = phi_index_pairs(n);
        let mut out = Self::zero(n);
        for (c, (j, q)) in pairs.iter().enumerate() {
            let img = op(&CohVector::phi(n, *j, *q));
            for (r, (i, p)) in pairs.iter().enumerate() {
                out.rows[r][c] = img.component(*i, *p).clone();
            }
        }
        out
    }

    /// Transpose with respect to the Poincare pairing.
    pub fn star(&self) -> Self {
        let d = slot_count(self.n);
        let mut out = Self::zero(self.n);
        for r in 0..d {
            let (pr, gr) = partner(self.n, r);
            for c in 0..d {
                let (pc, gc) = partner(self.n, c);
                out.rows[r][c] = self.rows[pc][pr].scale(&(gc / gr.clone()));
            }
        }
        out
    }
}

/// Series `sum_{u >= 1} mats[u-1] z^{-u}` with no constant term.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MatSeries {
    n: u32,
    mats: Vec<Mat>,
}

impl MatSeries {
    pub fn zero(n: u32) -> Self {
        MatSeries { n, mats: Vec::new() }
    }

    pub fn new(n: u32, mut mats: Vec<Mat>) -> Self {
        for m in &mats {
            assert_eq!(m.n(), n);
        }
        while mats.last().map_or(false, Mat::is_zero) {
            mats.pop();
        }
        MatSeries { n, mats }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.mats.len()
    }

    /// Coefficient of `z^{-u}` for `u >= 1`.
    pub fn coeff(&self, u: usize) -> Mat {
        assert!(u >= 1);
        if u <= self.mats.len() {
            self.mats[u - 1].clone()
        } else {
            Mat::zero(self.n)
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let depth = self.depth().max(rhs.depth());
        let mats = (1..=depth).map(|u| self.coeff(u).add(&rhs.coeff(u))).collect();
        Self::new(self.n, mats)
    }

    pub fn neg(&self) -> Self {
        Self::new(self.n, self.mats.iter().map(Mat::neg).collect())
    }

    pub fn scale_rat(&self, r: &Rat) -> Self {
        Self::new(self.n, self.mats.iter().map(|m| m.scale_rat(r)).collect())
    }

    /// Product of two constant-free series, truncated at `depth`.
    pub fn mul(&self, rhs: &Self, depth: usize) -> Self {
        let mut mats = vec![Mat::zero(self.n); depth];
        for u in 1..=self.depth().min(depth) {
            for v in 1..=rhs.depth() {
                if u + v > depth {
                    break;
                }
                mats[u + v - 1] = mats[u + v - 1].add(&self.coeff(u).mul(&rhs.coeff(v)));
            }
        }
        Self::new(self.n, mats)
    }

    /// First failure of the adjoint condition `A_u^* = (-1)^{u+1} A_u`, if any.
    pub fn symplectic_defect(&self) -> Option<String> {
        for u in 1..=self.depth() {
            let a = self.coeff(u);
            let sign = if u % 2 == 1 { 1 } else { -1 };
            if a.star() != a.scale_rat(&rat_i(sign)) {
                return Some(format!("coefficient at z^-{u} fails the adjoint condition"));
            }
        }
        None
    }

    /// Apply the series (as multiplication by `A(z)`) to a windowed field.
    pub fn apply_h(&self, f: &HField) -> HField {
        let mut out = HField::zero(self.n);
        if f.comps.is_empty() || self.depth() == 0 {
            return out;
        }
        let (lo, hi) = f.window();
        for w in (lo - self.depth() as i64)..=hi {
            let mut acc = CohVector::zero(self.n);
            for u in 1..=self.depth() {
                let src = w + u as i64;
                if src >= lo && src <= hi {
                    acc = acc.add(&self.coeff(u).apply(&f.component(src)));
                }
            }
            if !acc.is_zero() {
                out.add_component(w, acc);
            }
        }
        out
    }

    /// Truncated exponential `1 + A + A^2/2 + ...` up to `depth`.
    pub fn exp(&self, depth: usize) -> SympSeries {
        let mut tail = MatSeries::zero(self.n);
        let mut pow = Self::new(self.n, self.mats.clone());
        let mut j = 1u32;
        while pow.depth() > 0 && (j as usize) <= depth {
            tail = tail.add(&pow.scale_rat(&(rat_i(1) / factorial(j))));
            pow = pow.mul(self, depth);
            j += 1;
        }
        let mats = (1..=depth).map(|u| tail.coeff(u)).collect();
        SympSeries { n: self.n, tail: MatSeries::new(self.n, mats) }
    }

    /// Random infinitesimally symplectic series built from a rational source.
    pub fn random_inf_symplectic(
        n: u32,
        depth: usize,
        mut draw: impl FnMut() -> Rat,
    ) -> Self {
        let d = slot_count(n);
        let mut mats = Vec::with_capacity(depth);
        for u in 1..=depth {
            let mut b = Mat::zero(n);
            for r in 0..d {
                for c in 0..d {
                    b.rows[r][c] = Scalar::from_rat(n, draw());
                }
            }
            let sign = if u % 2 == 1 { 1 } else { -1 };
            mats.push(b.add(&b.star().scale_rat(&rat_i(sign))));
        }
        Self::new(n, mats)
    }
}

/// Lower-triangular symplectic-type series `S(z) = 1 + S_1 z^{-1} + ...`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SympSeries {
    n: u32,
    tail: MatSeries,
}

impl SympSeries {
    pub fn identity(n: u32) -> Self {
        SympSeries { n, tail: MatSeries::zero(n) }
    }

    pub fn from_tail(tail: MatSeries) -> Self {
        SympSeries { n: tail.n(), tail }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.tail.depth()
    }

    pub fn tail(&self) -> &MatSeries {
        &self.tail
    }

    /// Coefficient of `z^{-u}`, including `u = 0`.
    pub fn coeff(&self, u: usize) -> Mat {
        if u == 0 {
            Mat::identity(self.n)
        } else {
            self.tail.coeff(u)
        }
    }

    /// Product, truncated at `depth`.
    pub fn mul(&self, rhs: &Self, depth: usize) -> Self {
        let mut tail = self.tail.add(&rhs.tail);
        tail = tail.add(&self.tail.mul(&rhs.tail, depth));
        let mats = (1..=depth).map(|u| tail.coeff(u)).collect();
        SympSeries { n: self.n, tail: MatSeries::new(self.n, mats) }
    }

    /// Series inverse, truncated at `depth`.
    pub fn inverse(&self, depth: usize) -> Self {
        let neg = self.tail.neg();
        let mut acc = MatSeries::zero(self.n);
        let mut pow = MatSeries::new(self.n, neg.mats.clone());
        while pow.depth() > 0 {
            acc = acc.add(&pow);
            pow = pow.mul(&neg, depth);
        }
        let mats = (1..=depth).map(|u| acc.coeff(u)).collect();
        SympSeries { n: self.n, tail: MatSeries::new(self.n, mats) }
    }

    /// Coefficient-wise Poincare transpose `S^*`.
    pub fn star(&self) -> Self {
        let mats = self.tail.mats.iter().map(Mat::star).collect();
        SympSeries { n: self.n, tail: MatSeries::new(self.n, mats) }
    }

    /// `S(-z)`: flips the sign of odd coefficients.
    pub fn neg_z(&self) -> Self {
        let mats = (1..=self.depth())
            .map(|u| {
                let sign = if u % 2 == 1 { -1 } else { 1 };
                self.coeff(u).scale_rat(&rat_i(sign))
            })
            .collect();
        SympSeries { n: self.n, tail: MatSeries::new(self.n, mats) }
    }

    /// Whether `S^*(-z) S(z) = 1` holds modulo `z^{-(order+1)}`.
    pub fn is_symplectic(&self, order: usize) -> bool {
        let prod = self.star().neg_z().mul(self, order);
        (1..=order).all(|u| prod.coeff(u).is_zero())
    }

    /// Truncated logarithm.
    pub fn log(&self, depth: usize) -> MatSeries {
        let mut acc = MatSeries::zero(self.n);
        let mut pow = MatSeries::new(self.n, self.tail.mats.clone());
        let mut j = 1i64;
        while pow.depth() > 0 && (j as usize) <= depth {
            acc = acc.add(&pow.scale_rat(&rat(if j % 2 == 1 { 1 } else { -1 }, j)));
            pow = pow.mul(&self.tail, depth);
            j += 1;
        }
        let mats = (1..=depth).map(|u| acc.coeff(u)).collect();
        MatSeries::new(self.n, mats)
    }

    /// Apply `S(z)` to a windowed field.
    pub fn apply(&self, f: &HField) -> HField {
        f.add(&self.tail.apply_h(f))
    }

    /// Random symplectic series modulo `z^{-(order+1)}`.
    pub fn random_symplectic(
        n: u32,
        gen_depth: usize,
        order: usize,
        draw: impl FnMut() -> Rat,
    ) -> Self {
        MatSeries::random_inf_symplectic(n, gen_depth, draw).exp(order)
    }
}

// ---------------------------------------------------------------------------
// The W-form: division of S*(w) S(z) - 1 by z^{-1} + w^{-1}
// ---------------------------------------------------------------------------

/// Matrix coefficients `W_{k,l}` of the quadratic form attached to `S`.
#[derive(Clone, Debug)]
pub struct WForm {
    n: u32,
    order: usize,
    blocks: BTreeMap<(usize, usize), Mat>,
}

impl WForm {
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Total order `k + l < order` to which the blocks are valid.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn block(&self, k: usize, l: usize) -> Mat {
        self.blocks.get(&(k, l)).cloned().unwrap_or_else(|| Mat::zero(self.n))
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&(usize, usize), &Mat)> {
        self.blocks.iter()
    }

    /// Value `W(f, g) = sum_{k,l} (W_{k,l} g_l, f_k)` on the nonnegative
    /// parts of two fields.
    pub fn value(&self, f: &HField, g: &HField) -> Scalar {
        let mut acc = Scalar::zero(self.n);
        for ((k, l), m) in &self.blocks {
            let gl = g.component(*l as i64);
            let fk = f.component(*k as i64);
            if gl.is_zero() || fk.is_zero() {
                continue;
            }
            acc = acc.add(&poincare(&m.apply(&gl), &fk));
        }
        acc
    }
}

/// Synthetic division of `S^*(w) S(z) - 1` by `z^{-1} + w^{-1}`, carried out
/// modulo total degree `order` in `(w^{-1}, z^{-1})`.  Fails with
/// `NotDivisible` exactly when `S` is not symplectic modulo that order.
pub fn w_form(s: &SympSeries, order: usize) -> Result<WForm, FockError> {
    let n = s.n();
    let star = s.star();
    let num = |a: usize, b: usize| -> Mat {
        if a == 0 && b == 0 {
            Mat::zero(n)
        } else {
            star.coeff(a).mul(&s.coeff(b))
        }
    };
    // N = (u + v) Q + R with u = w^{-1}, v = z^{-1}: collecting powers of u,
    //   N_a = Q_{a-1} + v Q_a, so Q_{a-1} = N_a - v Q_a descending from
    //   Q_order = 0; the remainder R(v) = N_0 - v Q_0 must vanish.
    let mut q: Vec<Vec<Mat>> = vec![vec![Mat::zero(n); order + 1]; order + 1];
    for a in (0..order).rev() {
        for b in 0..=order {
            let mut e = num(a + 1, b);
            if b >= 1 {
                e = e.sub(&q[a + 1][b - 1]);
            }
            q[a][b] = e;
        }
    }
    for b in 0..=order {
        let mut r = num(0, b);
        if b >= 1 {
            r = r.sub(&q[0][b - 1]);
        }
        if !r.is_zero() {
            return Err(FockError::NotDivisible(format!(
                "remainder at order z^-{b} is nonzero; the series is not symplectic"
            )));
        }
    }
    let mut blocks = BTreeMap::new();
    for a in 0..order {
        for b in 0..=order {
            if a + b < order && !q[a][b].is_zero() {
                blocks.insert((a, b), q[a][b].clone());
            }
        }
    }
    Ok(WForm { n, order, blocks })
}

// ---------------------------------------------------------------------------
// Quantized quadratic Hamiltonians
// ---------------------------------------------------------------------------

/// Quantization of the quadratic Hamiltonian `h_A(f) = Omega(Af, f)/2` for a
/// constant-free series `A`.  In the Darboux coordinates carried by the
/// nonnegative powers the Hamiltonian has only `qp`- and `qq`-terms,
/// quantized by `(q p)^ = q d/dq` and `(q q)^ = q q / h`.
#[derive(Clone, Debug)]
pub struct QuadHam {
    n: u32,
    slot: u8,
    /// terms `coeff * q_I * d/dq_J`
    qd: Vec<(Var, Var, Scalar)>,
    /// terms `coeff * q_I * q_J / h` (the 1/2 is folded into `coeff`)
    qq: Vec<(Var, Var, Scalar)>,
}

/// Build the quantized quadratic Hamiltonian of `A` on the index window
/// `k <= kmax`.  Fails when `A` is not infinitesimally symplectic.
pub fn quantize_quadratic(a: &MatSeries, kmax: u16, slot: u8) -> Result<QuadHam, FockError> {
    if let Some(msg) = a.symplectic_defect() {
        return Err(FockError::NotInfinitesimallySymplectic(msg));
    }
    let n = a.n();
    let pairs = phi_index_pairs(n);
    let mut qd = Vec::new();
    let mut qq = Vec::new();
    for u in 1..=a.depth() {
        let au = a.coeff(u);
        if au.is_zero() {
            continue;
        }
        // While the image power k - u stays nonnegative, A contributes
        // -a_{JI} q_I d_J with a_{JI} the (J, I) entry of A_u.
        if u as u16 <= kmax {
            for kj in 0..=kmax - u as u16 {
                let ki = kj + u as u16;
                for (ci, (ii, pi)) in pairs.iter().enumerate() {
                    for (cj, (ij, pj)) in pairs.iter().enumerate() {
                        let e = au.entry(cj, ci);
                        if !e.is_zero() {
                            qd.push((
                                Var::q(slot, *ii, *pi, ki),
                                Var::q(slot, *ij, *pj, kj),
                                e.neg(),
                            ));
                        }
                    }
                }
            }
        }
        // Once the image power drops below zero, the dual-basis component at
        // (-z)^{-v-1} with v + l + 1 = u contributes the symmetric block
        //   b_{IJ} = (-1)^{v+1} <A_u phi_J>^I
        // and the Hamiltonian term (1/2) b_{IJ} q_I q_J / h.
        for l in 0..u as u16 {
            let v = (u as u16) - l - 1;
            if l > kmax || v > kmax {
                continue;
            }
            let sign = if v % 2 == 0 { -1 } else { 1 };
            for (cj, (ij, pj)) in pairs.iter().enumerate() {
                let mut col = CohVector::zero(n);
                for (ci2, (i2, p2)) in pairs.iter().enumerate() {
                    col.set_component(*i2, *p2, au.entry(ci2, cj).clone());
                }
                for (ii, pi) in pairs.iter() {
                    let b = dual_coeff(&col, *ii, *pi).scale(&rat(sign, 2));
                    if !b.is_zero() {
                        qq.push((Var::q(slot, *ii, *pi, v), Var::q(slot, *ij, *pj, l), b));
                    }
                }
            }
        }
    }
    Ok(QuadHam { n, slot, qd, qq })
}

impl QuadHam {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn slot(&self) -> u8 {
        self.slot
    }

    /// One application of the quantized Hamiltonian.
    pub fn apply(&self, tau: &FockPoly) -> FockPoly {
        let mut out = FockPoly::zero(tau.n(), tau.caps());
        for (qi, dj, c) in &self.qd {
            let d = tau.derive(*dj);
            if !d.is_zero() {
                out = out.add(&d.mul_var(*qi).scale(c));
            }
        }
        for (qi, qj, c) in &self.qq {
            out = out.add(&tau.mul_var(*qi).mul_var(*qj).mul_hh(-2).scale(c));
        }
        out
    }

    /// Exponential of the quantized Hamiltonian.  Every generated term
    /// strictly raises the total variable index or the degree, so the series
    /// terminates inside the caps.
    pub fn exp_apply(&self, tau: &FockPoly) -> FockPoly {
        let caps = tau.caps();
        let budget = 4 * ((caps.deg as u64 + 2) * (caps.kmax as u64 + 2)
            + (caps.hh_hi - caps.hh_lo).unsigned_abs() as u64
            + 4);
        let mut acc = tau.clone();
        let mut term = tau.clone();
        let mut j: u64 = 1;
        loop {
            term = self.apply(&term).scale_rat(&rat(1, j as i64));
            if term.is_zero() {
                return acc;
            }
            acc = acc.add(&term);
            j += 1;
            assert!(j <= budget, "quadratic exponential did not terminate");
        }
    }
}

// ---------------------------------------------------------------------------
// The metaplectic action of a lower-triangular symplectic series
// ---------------------------------------------------------------------------

/// Substitution `q -> [S(z) q(z)]_+` on a polynomial: each variable
/// `q_{(i,p),k}` is replaced by `sum_u (S_u)_{(i,p),(j,q)} q_{(j,q),k+u}`,
/// projected to the index window.  All variables are replaced
/// simultaneously via a scratch slot.
fn substitute_series(s: &SympSeries, tau: &FockPoly, slot: u8) -> FockPoly {
    let n = tau.n();
    let caps = tau.caps();
    let pairs = phi_index_pairs(n);
    let mut vars: Vec<Var> = Vec::new();
    for (m, _) in tau.terms() {
        for (v, _) in m.vars() {
            assert!(v.slot != SHADOW_SLOT, "slot 9 is reserved");
            if v.slot == slot && v.is_q() && !vars.contains(v) {
                vars.push(*v);
            }
        }
    }
    let mut out = tau.clone();
    for v in &vars {
        let shadow = Var { slot: SHADOW_SLOT, ..*v };
        let mut rep = FockPoly::zero(n, caps);
        rep.insert(Mono::var(shadow), Scalar::one(n));
        out = out.substitute(*v, &rep);
    }
    for v in &vars {
        let shadow = Var { slot: SHADOW_SLOT, ..*v };
        let (i, p) = v.phi_pair();
        let ci = slot_of(n, i, p);
        let mut rep = FockPoly::zero(n, caps);
        for u in 0..=s.depth() {
            let k2 = v.k as usize + u;
            if k2 > caps.kmax as usize {
                continue;
            }
            let su = s.coeff(u);
            for (cj, (j, q)) in pairs.iter().enumerate() {
                let e = su.entry(ci, cj);
                if !e.is_zero() {
                    rep.insert(Mono::var(Var::q(slot, *j, *q, k2 as u16)), e.clone());
                }
            }
        }
        out = out.substitute(shadow, &rep);
    }
    out
}

/// The quadratic form of `S` as the polynomial
/// `sum_{k,l} (W_{k,l} q_l, q_k) / (2 h)` in the Fock variables.
fn w_quadratic_poly(w: &WForm, caps: Caps, slot: u8) -> FockPoly {
    let n = w.n();
    let pairs = phi_index_pairs(n);
    let mut out = FockPoly::zero(n, caps);
    for ((k, l), m) in &w.blocks {
        if *k > caps.kmax as usize || *l > caps.kmax as usize {
            continue;
        }
        for (j, q) in pairs.iter() {
            let img = m.apply(&CohVector::phi(n, *j, *q));
            for (i, p) in pairs.iter() {
                let c = poincare(&img, &CohVector::phi(n, *i, *p)).scale(&rat(1, 2));
                if !c.is_zero() {
                    let mono = Mono::var(Var::q(slot, *i, *p, *k as u16))
                        .mul(&Mono::var(Var::q(slot, *j, *q, *l as u16)))
                        .with_hh(-2);
                    out.insert(mono, c);
                }
            }
        }
    }
    out
}

/// Inverse metaplectic action: `tau -> e^{W(q,q)/(2h)} tau([S q]_+)`.
/// `w_order` bounds the total order of the W-form; faithfulness on the index
/// window requires `w_order > 2 * caps.kmax`.
pub fn s_hat_inv_apply(
    s: &SympSeries,
    tau: &FockPoly,
    slot: u8,
    w_order: usize,
) -> Result<FockPoly, FockError> {
    let w = w_form(s, w_order)?;
    let sub = substitute_series(s, tau, slot);
    let wq = w_quadratic_poly(&w, tau.caps(), slot);
    Ok(exp_of_poly(&wq).mul(&sub))
}

/// Metaplectic action of `S`: the inverse action of the truncated series
/// inverse.  `inv_depth` must cover the index window (`caps.kmax` at least).
pub fn s_hat_apply(
    s: &SympSeries,
    tau: &FockPoly,
    slot: u8,
    inv_depth: usize,
    w_order: usize,
) -> Result<FockPoly, FockError> {
    s_hat_inv_apply(&s.inverse(inv_depth), tau, slot, w_order)
}

/// One instance of the conjugation law for vertex operators: for each
/// `j <= jmax` compare the `s^j`-coefficients of
///
/// ```text
///   S^ e^{s f^} S^{-1}   and   e^{s^2 W(f^+, f^+)/2} e^{(s S f)^}
/// ```
///
/// (normal-ordered exponentials on both sides) applied to `tau`.  The
/// right-hand side is computed without truncation loss; the left-hand side's
/// truncation error is confined to degrees above `caps.deg - jmax` and
/// dispersion half-powers outside `[caps.hh_lo + jmax, caps.hh_hi - jmax]`,
/// so the comparison restricts both sides to the complementary inner window.
/// The caps must leave room for that margin: `caps.deg >= deg(tau) + 2*jmax`,
/// `caps.hh_hi >= 2*jmax`, `caps.hh_lo <= -2*jmax`, and
/// `w_order > 2*caps.kmax`.
pub fn s_conjugation_check(
    s: &SympSeries,
    f: &HField,
    tau: &FockPoly,
    jmax: u32,
    slot: u8,
    inv_depth: usize,
    w_order: usize,
) -> Result<(), String> {
    let caps = tau.caps();
    assert!(caps.deg >= tau.q_degree() + 2 * jmax, "degree cap too tight for the margin");
    assert!(caps.hh_hi >= 2 * jmax as i32, "upper dispersion window too tight");
    assert!(caps.hh_lo <= -2 * (jmax as i32), "lower dispersion window too tight");
    assert!(w_order > 2 * caps.kmax as usize, "w_order must exceed twice the index window");
    let err = |e: FockError| format!("window error: {e}");
    let w = w_form(s, w_order).map_err(|e| format!("w_form: {e}"))?;
    let c_w = w.value(&f.plus_part(), &f.plus_part());
    let sf = s.apply(f);
    let t0 = s_hat_inv_apply(s, tau, slot, w_order).map_err(err)?;
    let deg_inner = caps.deg - jmax;
    let hh_lo_inner = caps.hh_lo + jmax as i32;
    let hh_hi_inner = caps.hh_hi - jmax as i32;
    for j in 0..=jmax {
        let mid = vertex_power(f, j, &t0, slot).map_err(err)?;
        let lhs = s_hat_apply(s, &mid, slot, inv_depth, w_order).map_err(err)?;
        let mut rhs = FockPoly::zero(tau.n(), tau.caps());
        let mut u = 0u32;
        while 2 * u <= j {
            let scalar = c_w.scale(&rat(1, 2)).pow(u).scale(&(rat_i(1) / factorial(u)));
            let vp = vertex_power(&sf, j - 2 * u, tau, slot).map_err(err)?;
            rhs = rhs.add(&vp.scale(&scalar));
            u += 1;
        }
        let lhs = lhs.restricted(deg_inner, hh_lo_inner, hh_hi_inner);
        let rhs = rhs.restricted(deg_inner, hh_lo_inner, hh_hi_inner);
        if lhs != rhs {
            return Err(format!("conjugation law fails at order s^{j}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

/// Serialize a polynomial in the line format
/// `h-exponent | (i,p,k):e,... | scalar` (plain slot only).
pub fn poly_to_text(p: &FockPoly) -> Result<String, FockError> {
    let mut out = String::new();
    for (m, c) in p.terms() {
        if m.hh % 2 == 0 {
            out.push_str(&format!("{}", m.hh / 2));
        } else {
            out.push_str(&format!("{}/2", m.hh));
        }
        out.push_str(" | ");
        let mut parts: Vec<String> = Vec::new();
        for (v, e) in m.vars() {
            if v.slot != 0 || !v.is_q() {
                return Err(FockError::Unsupported(
                    "only plain-slot loop variables serialize".into(),
                ));
            }
            let (i, pp) = v.phi_pair();
            parts.push(format!("({},{},{}):{}", i, pp, v.k, e));
        }
        if m.x_power() > 0 {
            parts.push(format!("x:{}", m.x_power()));
        }
        if parts.is_empty() {
            out.push('1');
        } else {
            out.push_str(&parts.join(","));
        }
        out.push_str(" | ");
        out.push_str(&format!("{c}"));
        out.push('\n');
    }
    Ok(out)
}

struct Cursor<'a> {
    line: usize,
    text: &'a str,
    pos: usize,
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: usize, text: &'a str, offset: usize) -> Self {
        Cursor { line, text, pos: 0, offset }
    }

    fn err(&self, msg: &str) -> FockError {
        FockError::Parse {
            line: self.line,
            col: self.offset + self.pos + 1,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn eat(&mut self, c: char) -> Result<(), FockError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(&format!("expected '{c}'")))
        }
    }

    fn integer(&mut self) -> Result<i64, FockError> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.peek(), Some('-' | '+')) {
            self.bump();
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        self.text[start..self.pos]
            .parse::<i64>()
            .map_err(|_| self.err("expected integer"))
    }

    fn rational(&mut self) -> Result<Rat, FockError> {
        let num = self.integer()?;
        self.skip_ws();
        if self.peek() == Some('/') {
            self.bump();
            let den = self.integer()?;
            if den == 0 {
                return Err(self.err("zero denominator"));
            }
            Ok(rat(num, den))
        } else {
            Ok(rat_i(num))
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.bump();
        }
        self.text[start..self.pos].to_string()
    }

    fn done(&mut self) -> bool {
        self.skip_ws();
        self.peek().is_none()
    }
}

/// Parse a scalar: a signed sum of terms, each a rational number and/or a
/// `*`-separated product of symbol powers (`Q`, `pi`, `logQ`, `rt2`, `rtN`,
/// `EG`, `G[j,p]`, and the imaginary unit `i`).
fn parse_scalar(n: u32, cur: &mut Cursor) -> Result<Scalar, FockError> {
    let mut acc = Scalar::zero(n);
    loop {
        cur.skip_ws();
        let mut sign = 1i64;
        match cur.peek() {
            Some('+') => {
                cur.bump();
            }
            Some('-') => {
                cur.bump();
                sign = -1;
            }
            None => break,
            _ => {}
        }
        cur.skip_ws();
        let mut term = Scalar::from_rat(n, rat_i(sign));
        let mut saw_factor = false;
        if matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
            let r = cur.rational()?;
            term = term.scale(&r);
            saw_factor = true;
        }
        loop {
            cur.skip_ws();
            match cur.peek() {
                Some('*') => {
                    cur.bump();
                }
                Some(c) if c.is_ascii_alphabetic() && !saw_factor => {}
                _ => break,
            }
            let id = cur.ident();
            if id.is_empty() {
                return Err(cur.err("expected symbol"));
            }
            saw_factor = true;
            if id == "i" {
                term = term.scale_cyc(&Cyclotomic::imag(n));
                continue;
            }
            let sym = match id.as_str() {
                "Q" => Sym::Q,
                "pi" => Sym::Pi,
                "logQ" => Sym::LogQ,
                "rt2" => Sym::Sqrt2,
                "rtN" => Sym::RootN,
                "EG" => Sym::EulerG,
                "G" => {
                    cur.eat('[')?;
                    let j = cur.integer()?;
                    cur.eat(',')?;
                    let p = cur.integer()?;
                    cur.eat(']')?;
                    if !(1..=3).contains(&j) || p <= 0 {
                        return Err(cur.err("bad gamma-symbol index"));
                    }
                    Sym::Gamma(j as u8, p as u8)
                }
                other => return Err(cur.err(&format!("unknown symbol '{other}'"))),
            };
            let mut e = 1i64;
            cur.skip_ws();
            if cur.peek() == Some('^') {
                cur.bump();
                e = cur.integer()?;
            }
            term = term.mul(&Scalar::sym(n, sym, e as i32));
        }
        if !saw_factor {
            return Err(cur.err("expected term"));
        }
        acc = acc.add(&term);
        cur.skip_ws();
        if !matches!(cur.peek(), Some('+' | '-')) {
            break;
        }
    }
    if !cur.done() {
        return Err(cur.err("trailing input in scalar"));
    }
    Ok(acc)
}

/// Parse the line format produced by `poly_to_text`.  Blank lines and lines
/// starting with `#` are ignored.
pub fn poly_from_text(n: u32, caps: Caps, text: &str) -> Result<FockPoly, FockError> {
    let mut out = FockPoly::zero(n, caps);
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = Vec::new();
        let mut start = 0usize;
        for (idx, ch) in raw.char_indices() {
            if ch == '|' {
                fields.push((start, &raw[start..idx]));
                start = idx + 1;
            }
        }
        fields.push((start, &raw[start..]));
        if fields.len() != 3 {
            return Err(FockError::Parse {
                line: line_no,
                col: 1,
                msg: format!("expected 3 '|'-separated fields, found {}", fields.len()),
            });
        }
        let mut cur = Cursor::new(line_no, fields[0].1, fields[0].0);
        let h = cur.rational()?;
        if !cur.done() {
            return Err(cur.err("trailing input after exponent"));
        }
        let hh2 = h * rat_i(2);
        if !hh2.is_integer() {
            return Err(FockError::Parse {
                line: line_no,
                col: fields[0].0 + 1,
                msg: "exponent must be a half-integer".into(),
            });
        }
        let hh: i32 = hh2.to_integer().try_into().map_err(|_| FockError::Parse {
            line: line_no,
            col: fields[0].0 + 1,
            msg: "exponent out of range".into(),
        })?;
        let mut cur = Cursor::new(line_no, fields[1].1, fields[1].0);
        let mut mono = Mono::unit().with_hh(hh);
        cur.skip_ws();
        if cur.peek() == Some('1') {
            cur.bump();
            if !cur.done() {
                return Err(cur.err("trailing input after unit monomial"));
            }
        } else {
            loop {
                cur.skip_ws();
                match cur.peek() {
                    Some('(') => {
                        cur.bump();
                        let i = cur.integer()?;
                        cur.eat(',')?;
                        let p = cur.integer()?;
                        cur.eat(',')?;
                        let k = cur.integer()?;
                        cur.eat(')')?;
                        cur.eat(':')?;
                        let e = cur.integer()?;
                        if !(0..=3).contains(&i) || p < 0 || k < 0 || e <= 0 {
                            return Err(cur.err("bad variable"));
                        }
                        let v = Var::q(0, i as u8, p as u32, k as u16);
                        mono = mono.mul(&Mono::var_pow(v, e as u32));
                    }
                    Some('x') => {
                        cur.bump();
                        cur.eat(':')?;
                        let e = cur.integer()?;
                        if e <= 0 {
                            return Err(cur.err("bad x power"));
                        }
                        mono.x += e as u32;
                    }
                    _ => return Err(cur.err("expected variable")),
                }
                cur.skip_ws();
                if cur.peek() == Some(',') {
                    cur.bump();
                } else {
                    break;
                }
            }
            if !cur.done() {
                return Err(cur.err("trailing input in monomial"));
            }
        }
        let mut cur = Cursor::new(line_no, fields[2].1, fields[2].0);
        let c = parse_scalar(n, &mut cur)?;
        out.insert(mono, c);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn caps_for(deg: u32, kmax: u16, span: i32) -> Caps {
        Caps::new(deg, kmax, -span, span)
    }

    fn draw_rat(rng: &mut ChaCha8Rng) -> Rat {
        rat(rng.gen_range(-3..=3), rng.gen_range(1..=2))
    }

    fn random_field(n: u32, lo: i64, hi: i64, rng: &mut ChaCha8Rng) -> HField {
        let mut f = HField::zero(n);
        for k in lo..=hi {
            let mut v = CohVector::zero(n);
            for (i, p) in phi_index_pairs(n) {
                if rng.gen_bool(0.5) {
                    v.set_component(i, p, Scalar::from_rat(n, draw_rat(rng)));
                }
            }
            f.add_component(k, v);
        }
        f
    }

    fn random_poly(n: u32, caps: Caps, terms: usize, rng: &mut ChaCha8Rng) -> FockPoly {
        let pairs = phi_index_pairs(n);
        let mut p = FockPoly::zero(n, caps);
        for _ in 0..terms {
            let deg = rng.gen_range(0..=caps.deg.min(3));
            let mut m = Mono::unit();
            for _ in 0..deg {
                let (i, pp) = pairs[rng.gen_range(0..pairs.len())];
                let k = rng.gen_range(0..=caps.kmax.min(2));
                m = m.mul(&Mono::var(Var::q(0, i, pp, k)));
            }
            p.insert(m, Scalar::from_rat(n, draw_rat(rng)));
        }
        p
    }

    #[test]
    fn omega_darboux_table() {
        let n = 4;
        for (i, p) in phi_index_pairs(n) {
            for (j, q) in phi_index_pairs(n) {
                for k in 0..=2i64 {
                    for l in 0..=2i64 {
                        let ep = HField::e_plus(n, i, p, k);
                        let em = HField::e_minus(n, j, q, l);
                        let delta = if i == j && p == q && k == l { -1 } else { 0 };
                        assert!(omega(&ep, &em).eq_rat(&rat_i(delta)));
                        assert!(omega(&em, &ep).eq_rat(&rat_i(-delta)));
                        let ep2 = HField::e_plus(n, j, q, l);
                        let em2 = HField::e_minus(n, j, q, l);
                        assert!(omega(&ep, &ep2).is_zero());
                        assert!(omega(&em, &em2).is_zero());
                    }
                }
            }
        }
    }

    #[test]
    fn heisenberg_commutation_random() {
        let n = 4;
        let caps = caps_for(5, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let f = random_field(n, -3, 2, &mut rng);
            let g = random_field(n, -3, 2, &mut rng);
            let tau = random_poly(n, caps, 4, &mut rng);
            let fg = heisenberg_apply(&f, &heisenberg_apply(&g, &tau, 0).unwrap(), 0).unwrap();
            let gf = heisenberg_apply(&g, &heisenberg_apply(&f, &tau, 0).unwrap(), 0).unwrap();
            let comm = fg.sub(&gf);
            let expect = tau.scale(&omega(&f, &g));
            assert_eq!(comm, expect, "commutator must equal the symplectic pairing");
        }
    }

    #[test]
    fn normal_ordering_bidegree() {
        let n = 4;
        let caps = caps_for(8, 3, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..4 {
            let fp = random_field(n, 0, 2, &mut rng); // annihilation only
            let gm = random_field(n, -3, -1, &mut rng); // creation only
            let tau = random_poly(n, caps, 3, &mut rng);
            let om = omega(&fp, &gm);
            for a in 0..=3u32 {
                for b in 0..=3u32 {
                    let lhs = ann_power(&fp, a, &cre_power(&gm, b, &tau, 0), 0).unwrap();
                    let mut rhs = FockPoly::zero(n, caps);
                    for c in 0..=a.min(b) {
                        let scalar = om.pow(c).scale(&(rat_i(1) / factorial(c)));
                        let t = ann_power(&fp, a - c, &tau, 0).unwrap();
                        let t = cre_power(&gm, b - c, &t, 0);
                        rhs = rhs.add(&t.scale(&scalar));
                    }
                    assert_eq!(lhs, rhs, "normal ordering at bidegree ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn vertex_composition_bidegree() {
        let n = 4;
        let caps = caps_for(8, 3, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let f = random_field(n, -2, 1, &mut rng);
        let g = random_field(n, -2, 1, &mut rng);
        let tau = random_poly(n, caps, 3, &mut rng);
        let om = omega(&f.plus_part(), &g.minus_part());
        for j1 in 0..=2u32 {
            for j2 in 0..=2u32 {
                let lhs =
                    vertex_power(&f, j1, &vertex_power(&g, j2, &tau, 0).unwrap(), 0).unwrap();
                let mut rhs = FockPoly::zero(n, caps);
                for u in 0..=j1.min(j2) {
                    let scalar = om.pow(u).scale(&(rat_i(1) / factorial(u)));
                    let mut inner = FockPoly::zero(n, caps);
                    for b in 0..=(j1 - u) {
                        let a = j1 - u - b;
                        for d in 0..=(j2 - u) {
                            let c = j2 - u - d;
                            let t = ann_power(&g, d, &tau, 0).unwrap();
                            let t = ann_power(&f, b, &t, 0).unwrap();
                            let t = cre_power(&g, c, &t, 0);
                            let t = cre_power(&f, a, &t, 0);
                            inner = inner.add(&t);
                        }
                    }
                    rhs = rhs.add(&inner.scale(&scalar));
                }
                assert_eq!(lhs, rhs, "composition law at bidegree ({j1},{j2})");
            }
        }
    }

    #[test]
    fn translation_matches_power_series() {
        let n = 4;
        let caps = caps_for(5, 3, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..5 {
            let f = random_field(n, 0, 2, &mut rng);
            let tau = random_poly(n, caps, 4, &mut rng);
            let closed = translate_plus(&f, &tau, 0).unwrap();
            let mut series = FockPoly::zero(n, caps);
            for b in 0..=caps.deg {
                series = series.add(&ann_power(&f, b, &tau, 0).unwrap());
            }
            assert_eq!(closed, series);
        }
    }

    #[test]
    fn vertex_full_matches_graded_sum() {
        let n = 4;
        let caps = caps_for(4, 2, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let f = random_field(n, -2, 1, &mut rng);
        let tau = random_poly(n, caps, 3, &mut rng);
        let full = vertex_apply(&f, &tau, 0).unwrap();
        let mut graded = FockPoly::zero(n, caps);
        for j in 0..=caps.deg + 6 {
            graded = graded.add(&vertex_power(&f, j, &tau, 0).unwrap());
        }
        assert_eq!(full, graded);
    }

    #[test]
    fn quantize_rules_example() {
        // A = c E z^{-1} with E mapping phi_{0,1} -> phi_{0,0}; on
        // tau = q_{(0,0),1} the quantized Hamiltonian must produce
        // -c q_{(0,1),2} - (c/2) h^{-1} q_{(0,1),0}^2 q_{(0,0),1}.
        let n = 4;
        let caps = caps_for(4, 3, 6);
        let c = rat(3, 2);
        let mut a1 = Mat::zero(n);
        a1.set_entry(slot_of(n, 0, 0), slot_of(n, 0, 1), Scalar::from_rat(n, c.clone()));
        let a = MatSeries::new(n, vec![a1]);
        let ham = quantize_quadratic(&a, caps.kmax, 0).unwrap();
        let tau = FockPoly::from_terms(
            n,
            caps,
            [(Mono::var(Var::q(0, 0, 0, 1)), Scalar::one(n))],
        );
        let got = ham.apply(&tau);
        let mut want = FockPoly::zero(n, caps);
        want.insert(Mono::var(Var::q(0, 0, 1, 2)), Scalar::from_rat(n, -c.clone()));
        let qq = Mono::var(Var::q(0, 0, 1, 0))
            .mul(&Mono::var(Var::q(0, 0, 1, 0)))
            .mul(&Mono::var(Var::q(0, 0, 0, 1)))
            .with_hh(-2);
        want.insert(qq, Scalar::from_rat(n, -c / rat_i(2)));
        assert_eq!(got, want);
    }

    #[test]
    fn quantized_commutator_is_linear_action() {
        let n = 4;
        let caps = caps_for(5, 4, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..5 {
            let a = MatSeries::random_inf_symplectic(n, 2, || draw_rat(&mut rng));
            let ham = quantize_quadratic(&a, caps.kmax, 0).unwrap();
            let v = random_field(n, -2, 2, &mut rng);
            let tau = random_poly(n, caps, 3, &mut rng);
            let hv = ham.apply(&heisenberg_apply(&v, &tau, 0).unwrap());
            let vh = heisenberg_apply(&v, &ham.apply(&tau), 0).unwrap();
            let comm = hv.sub(&vh);
            let av = a.apply_h(&v);
            let expect = heisenberg_apply(&av, &tau, 0).unwrap();
            // the quantization only covers indices inside the window, so
            // compare below the reach of the series depth
            let inner = |p: &FockPoly| p.truncate_high_k(caps.kmax - 2);
            assert_eq!(inner(&comm), inner(&expect), "[A^, v^] must equal (Av)^");
        }
    }

    #[test]
    fn quantize_rejects_non_symplectic() {
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let good = MatSeries::random_inf_symplectic(n, 2, || draw_rat(&mut rng));
        let mut bad1 = good.coeff(1);
        bad1.set_entry(0, 2, bad1.entry(0, 2).add(&Scalar::one(n)));
        let bad = MatSeries::new(n, vec![bad1, good.coeff(2)]);
        match quantize_quadratic(&bad, 2, 0) {
            Err(FockError::NotInfinitesimallySymplectic(_)) => {}
            other => panic!("expected symplectic gate, got {other:?}"),
        }
    }

    #[test]
    fn w_form_of_nilpotent_order_one_series() {
        // S = 1 + c rho z^{-1} with rho the nilpotent degree-raising map is
        // exactly symplectic; its W-form is the single block W_00 = c rho.
        let n = 5;
        let c = rat(2, 3);
        let rho = Mat::from_action(n, |v| v.rho_apply());
        let s1 = rho.scale_rat(&c);
        let s = SympSeries::from_tail(MatSeries::new(n, vec![s1.clone()]));
        assert!(s.is_symplectic(6));
        let w = w_form(&s, 6).unwrap();
        assert_eq!(w.block(0, 0), s1);
        for ((k, l), m) in w.blocks() {
            if (*k, *l) != (0, 0) {
                assert!(m.is_zero(), "unexpected block at ({k},{l})");
            }
        }
    }

    #[test]
    fn w_form_matches_symplectic_pairing_oracle() {
        // W(f, g) = -( Omega([Sf]_-, [Sg]_+) + Omega([Sg]_-, [Sf]_+) ) / 2
        // for nonnegative fields f, g; this uses only the series action and
        // the residue pairing, so it is independent of the division routine.
        let n = 4;
        let order = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..4 {
            let s = SympSeries::random_symplectic(n, 2, order, || draw_rat(&mut rng));
            assert!(s.is_symplectic(order));
            let w = w_form(&s, order).unwrap();
            let f = random_field(n, 0, 2, &mut rng);
            let g = random_field(n, 0, 2, &mut rng);
            let sf = s.apply(&f);
            let sg = s.apply(&g);
            let o1 = omega(&sf.minus_part(), &sg.plus_part());
            let o2 = omega(&sg.minus_part(), &sf.plus_part());
            let oracle = o1.add(&o2).scale(&rat(-1, 2));
            assert_eq!(w.value(&f, &g), oracle, "W-form disagrees with the pairing oracle");
            assert_eq!(w.value(&f, &g), w.value(&g, &f), "W-form must be symmetric");
        }
    }

    #[test]
    fn w_form_divisibility_iff_symplectic() {
        let n = 4;
        let order = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let s = SympSeries::random_symplectic(n, 2, order, || draw_rat(&mut rng));
        assert!(s.is_symplectic(order));
        assert!(w_form(&s, order).is_ok());
        let mut m1 = s.coeff(1);
        m1.set_entry(1, 3, m1.entry(1, 3).add(&Scalar::one(n)));
        let mut mats = vec![m1];
        for u in 2..=s.depth() {
            mats.push(s.coeff(u));
        }
        let bad = SympSeries::from_tail(MatSeries::new(n, mats));
        assert!(!bad.is_symplectic(order));
        match w_form(&bad, order) {
            Err(FockError::NotDivisible(_)) => {}
            other => panic!("expected NotDivisible, got {other:?}"),
        }
    }

    #[test]
    fn s_hat_roundtrip() {
        let n = 4;
        let caps = caps_for(3, 4, 8);
        let order = 12; // > 2 kmax, so the quadratic cocycle cancels on the window
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let s = SympSeries::random_symplectic(n, 2, order, || draw_rat(&mut rng));
        let tau = random_poly(n, caps, 4, &mut rng);
        let fwd = s_hat_inv_apply(&s, &tau, 0, order).unwrap();
        let back = s_hat_apply(&s, &fwd, 0, order, order).unwrap();
        assert_eq!(back, tau);
    }

    #[test]
    fn metaplectic_action_commutes_with_projection() {
        // the inverse metaplectic action uses only multiplication and
        // index-raising substitution, so computing under wide caps and
        // reprojecting must agree with computing under narrow caps
        let n = 4;
        let wide = caps_for(6, 6, 10);
        let narrow = caps_for(4, 4, 6);
        let order = 14;
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..3 {
            let s = SympSeries::random_symplectic(n, 2, order, || draw_rat(&mut rng));
            let tau_wide = random_poly(n, narrow, 4, &mut rng).with_caps(wide);
            let tau_narrow = tau_wide.with_caps(narrow);
            let big = s_hat_inv_apply(&s, &tau_wide, 0, order).unwrap();
            let small = s_hat_inv_apply(&s, &tau_narrow, 0, order).unwrap();
            assert_eq!(big.with_caps(narrow), small);
        }
    }

    #[test]
    fn s_hat_matches_operator_exponential() {
        // The closed substitution formula for S^ must agree with the
        // terminating window-filtered exponential of the quantized quadratic
        // Hamiltonian of log S; both compute the projection of the exact
        // action.
        let n = 4;
        let caps = caps_for(3, 3, 8);
        let order = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..3 {
            let a = MatSeries::random_inf_symplectic(n, 2, || draw_rat(&mut rng));
            let s = a.exp(order);
            let tau = random_poly(n, caps, 3, &mut rng);
            let closed = s_hat_apply(&s, &tau, 0, order, order).unwrap();
            let ham = quantize_quadratic(&a, caps.kmax, 0).unwrap();
            let series = ham.exp_apply(&tau);
            assert_eq!(closed, series, "metaplectic action disagrees with exp of quantization");
        }
    }

    #[test]
    fn conjugation_law_many_random_instances() {
        let n = 4;
        let caps = caps_for(7, 3, 4);
        let order = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for inst in 0..8 {
            let s = SympSeries::random_symplectic(n, 2, order, || draw_rat(&mut rng));
            let f = random_field(n, -2, 1, &mut rng);
            let tau = random_poly(n, caps_for(3, 2, 4), 3, &mut rng).with_caps(caps);
            s_conjugation_check(&s, &f, &tau, 2, 0, order, order)
                .unwrap_or_else(|e| panic!("instance {inst}: {e}"));
        }
    }

    #[test]
    fn annihilation_outside_window_is_loud() {
        let n = 4;
        let caps = Caps::new(4, 1, -2, 2);
        let tau = FockPoly::one(n, caps);
        // annihilation component at index 2 exceeds kmax = 1
        let f = HField::e_plus(n, 0, 0, 2);
        match heisenberg_apply(&f, &tau, 0) {
            Err(FockError::IndexWindow { k: 2, kmax: 1 }) => {}
            other => panic!("expected index window error, got {other:?}"),
        }
        // creation beyond the window projects to zero silently
        let g = HField::e_minus(n, 0, 0, 2);
        let out = heisenberg_apply(&g, &tau, 0).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn serialization_roundtrip() {
        let n = 4;
        let caps = caps_for(4, 3, 6);
        let mut p = FockPoly::zero(n, caps);
        p.insert(
            Mono::var(Var::q(0, 1, 2, 1))
                .mul(&Mono::var(Var::q(0, 0, 0, 0)))
                .with_x(2)
                .with_hh(-1),
            Scalar::from_rat(n, rat(5, 7)),
        );
        p.insert(Mono::unit().with_hh(2), Scalar::sym(n, Sym::Q, 2));
        p.insert(Mono::var(Var::q(0, 2, 1, 0)), Scalar::two_pi_i(n));
        p.insert(
            Mono::var_pow(Var::q(0, 1, 1, 2), 3),
            Scalar::sym(n, Sym::Gamma(1, 1), 1).scale(&rat(-1, 3)),
        );
        let text = poly_to_text(&p).unwrap();
        let q = poly_from_text(n, caps, &text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn parse_errors_carry_position() {
        let n = 4;
        let caps = caps_for(4, 3, 6);
        match poly_from_text(n, caps, "0 | (0,0,0):1\n") {
            Err(FockError::Parse { line: 1, .. }) => {}
            other => panic!("expected field-count error, got {other:?}"),
        }
        match poly_from_text(n, caps, "0 | (9,0,0):1 | 1\n") {
            Err(FockError::Parse { line: 1, col, .. }) => assert!(col > 4),
            other => panic!("expected variable error, got {other:?}"),
        }
        match poly_from_text(n, caps, "0 | 1 | 3/4*bogus\n") {
            Err(FockError::Parse { line: 1, col, .. }) => assert!(col > 8),
            other => panic!("expected symbol error, got {other:?}"),
        }
        match poly_from_text(n, caps, "0 | 1 | 1\n1/3 | 1 | 1\n") {
            Err(FockError::Parse { line: 2, .. }) => {}
            other => panic!("expected half-integer error, got {other:?}"),
        }
    }

    #[test]
    fn inverse_truncated_series() {
        let n = 4;
        let caps = caps_for(4, 2, 8);
        let mut tau = FockPoly::one(n, caps);
        tau.insert(Mono::var(Var::q(0, 0, 1, 0)), Scalar::from_rat(n, rat(1, 2)));
        tau.insert(Mono::unit().with_x(1), Scalar::from_int(n, -1));
        let inv = tau.inverse_trunc(4).unwrap();
        let prod = tau.mul(&inv).truncate_high_x(4);
        assert_eq!(prod, FockPoly::one(n, caps));
        let zero = FockPoly::zero(n, caps);
        match zero.inverse_trunc(2) {
            Err(FockError::NonInvertibleConstant(_)) => {}
            other => panic!("expected constant-term error, got {other:?}"),
        }
    }
}
