//! Hirota quadratic equations of the extended hierarchy in the transformed
//! z-coordinates.
//!
//! After the substitution `lambda = z^{n-2}/(n-2)` on the first sector and
//! `lambda = z^2/2` on the other two, each vertex-operator kernel becomes a
//! Laurent series in `z` whose coefficients act polynomially on the doubled
//! Fock space, and the residues of the equations become exact coefficient
//! extractions.  Everything below is a finite computation in the capped
//! ring: creation sums run over time-variable indices up to `caps.kmax`,
//! which realizes the projection of the full residual onto the declared
//! variable window, and annihilation parts differentiate, so they terminate
//! on polynomials.

use std::collections::BTreeMap;
use std::fmt;

use crate::fock::{Caps, FockPoly, Mono, Var};
use crate::klattice::{phi_index_pairs, KClass};
use crate::phase::{b_tilde, identify_vertex_class, PhaseError};
use crate::scalars::{
    binomial, double_factorial_odd, factorial, harmonic, rat, rat_i, Rat, Scalar, Sym,
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum HqeError {
    /// The requested residue weight falls outside the creation window that
    /// the caps can represent.
    CapExceeded(String),
    /// The input polynomial is not admissible as a tau function argument.
    BadTau(String),
}

impl fmt::Display for HqeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HqeError::CapExceeded(msg) => write!(f, "cap exceeded: {msg}"),
            HqeError::BadTau(msg) => write!(f, "bad tau function: {msg}"),
        }
    }
}

impl std::error::Error for HqeError {}

// ---------------------------------------------------------------------------
// Tau functions
// ---------------------------------------------------------------------------

/// A tau function argument: a capped polynomial in the plain-slot variables
/// `q_{i,p,k}` and `x`, with half-integer dispersion powers.  The primary
/// direction enters through `x` only, never through `q_{0,0,0}`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TauFunction {
    n: u32,
    caps: Caps,
    poly: FockPoly,
}

impl TauFunction {
    pub fn new(poly: FockPoly) -> Result<Self, HqeError> {
        let n = poly.n();
        let pairs = phi_index_pairs(n);
        for (m, _) in poly.terms() {
            for (v, _) in m.vars() {
                if !v.is_q() {
                    return Err(HqeError::BadTau(format!(
                        "time variable t_{{{},{}}} in tau input",
                        v.fam - 10,
                        v.k
                    )));
                }
                if v.slot != 0 {
                    return Err(HqeError::BadTau(format!(
                        "doubled variable in slot {} in tau input",
                        v.slot
                    )));
                }
                let (i, p) = v.phi_pair();
                if i == 0 && p == 0 && v.k == 0 {
                    return Err(HqeError::BadTau(
                        "q_{0,0,0} must enter through x".into(),
                    ));
                }
                if !pairs.contains(&(i, p)) {
                    return Err(HqeError::BadTau(format!(
                        "no basis pair ({i},{p}) at n = {n}"
                    )));
                }
            }
        }
        Ok(TauFunction { n, caps: poly.caps(), poly })
    }

    pub fn one(n: u32, caps: Caps) -> Self {
        TauFunction { n, caps, poly: FockPoly::one(n, caps) }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn poly(&self) -> &FockPoly {
        &self.poly
    }

    /// Substitute `x -> x + c*sqrt(h)`.
    pub fn shifted_x(&self, c: i64) -> Self {
        TauFunction { n: self.n, caps: self.caps, poly: self.poly.shift_x(c) }
    }
}

/// Caps sized for the equations: the dispersion window is wide enough that
/// no intermediate product of the pipelines below is ever projected on it.
pub fn standard_caps(deg: u32, kmax: u16) -> Caps {
    Caps::new(deg, kmax, -64, 64)
}

// ---------------------------------------------------------------------------
// Change of variables
// ---------------------------------------------------------------------------

/// Direction of the coordinate dictionary between the loop-space variables
/// `q_{i,p,k}` and the hierarchy times `t_{a,j}`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VarMap {
    QtoT,
    TtoQ,
}

/// `prod_{k=0..l} (i + (n-2)k)`.
fn index_product(n: u32, i: u32, l: u32) -> Rat {
    let mut acc = rat_i(1);
    for k in 0..=l {
        acc *= rat_i((i + (n - 2) * k) as i64);
    }
    acc
}

/// `(n-2)^l * l!`.
fn pow_fact(n: u32, l: u32) -> Rat {
    let mut acc = factorial(l);
    for _ in 0..l {
        acc *= rat_i((n - 2) as i64);
    }
    acc
}

/// `2^l * l!`.
fn pow2_fact(l: u32) -> Rat {
    let mut acc = factorial(l);
    for _ in 0..l {
        acc *= rat_i(2);
    }
    acc
}

fn one_term(n: u32, caps: Caps, m: Mono, c: Scalar) -> FockPoly {
    FockPoly::from_terms(n, caps, [(m, c)])
}

/// Image of a single `q`-variable under the dictionary, dilaton shift
/// included: `q_{0,0,k} = eps t_{0,k} - delta_{k,1}` and the remaining
/// families are diagonal with monomial coefficients.
fn q_image(n: u32, caps: Caps, v: Var) -> FockPoly {
    let s = v.slot;
    let (i, p) = v.phi_pair();
    let k = v.k;
    match (i, p) {
        (0, 0) => {
            assert!(k >= 1, "q_{{0,0,0}} does not occur");
            let mut out = one_term(
                n,
                caps,
                Mono::var(Var::t(s, 0, k)).with_hh(1),
                Scalar::one(n),
            );
            if k == 1 {
                out = out.sub(&FockPoly::one(n, caps));
            }
            out
        }
        (0, 1) => {
            let j = (n - 2) as u16 * (k + 1);
            assert!(j <= caps.kmax, "time index {j} above the caps");
            one_term(
                n,
                caps,
                Mono::var(Var::t(s, 1, j)).with_hh(1),
                Scalar::from_rat(n, pow_fact(n, k as u32 + 1)),
            )
        }
        (1, i1) => {
            let j = (n - 2) as u16 * k + i1 as u16;
            assert!(j <= caps.kmax, "time index {j} above the caps");
            one_term(
                n,
                caps,
                Mono::var(Var::t(s, 1, j)).with_hh(1),
                Scalar::sym(n, Sym::RootN, i1 as i32)
                    .scale(&index_product(n, i1, k as u32)),
            )
        }
        (a @ (2 | 3), 1) => {
            let j = 2 * k + 1;
            assert!(j <= caps.kmax, "time index {j} above the caps");
            let c = Scalar::sym(n, Sym::Sqrt2, 1)
                .scale(&(double_factorial_odd(k as u32 + 1) * rat(1, 2)));
            let plus = Mono::var(Var::t(s, 2, j)).with_hh(1);
            let minus = Mono::var(Var::t(s, 3, j)).with_hh(1);
            let sgn = if a == 2 { c.clone() } else { c.neg() };
            FockPoly::from_terms(n, caps, [(plus, c), (minus, sgn)])
        }
        _ => panic!("no basis pair ({i},{p})"),
    }
}

/// Image of a single time variable under the inverse dictionary.
fn t_image(n: u32, caps: Caps, v: Var) -> FockPoly {
    let s = v.slot;
    let a = v.t_family();
    let j = v.k;
    match a {
        0 => {
            assert!(j >= 1, "t_{{0,0}} does not occur");
            let mut out = one_term(
                n,
                caps,
                Mono::var(Var::q(s, 0, 0, j)).with_hh(-1),
                Scalar::one(n),
            );
            if j == 1 {
                out = out.add(&one_term(n, caps, Mono::unit().with_hh(-1), Scalar::one(n)));
            }
            out
        }
        1 => {
            let d = (n - 2) as u16;
            assert!(j >= 1, "t_{{1,0}} does not occur");
            if j % d == 0 {
                let l = j / d;
                one_term(
                    n,
                    caps,
                    Mono::var(Var::q(s, 0, 1, l - 1)).with_hh(-1),
                    Scalar::from_rat(n, rat_i(1) / pow_fact(n, l as u32)),
                )
            } else {
                let i1 = (j % d) as u32;
                let l = j / d;
                one_term(
                    n,
                    caps,
                    Mono::var(Var::q(s, 1 as u8, i1, l)).with_hh(-1),
                    Scalar::sym(n, Sym::RootN, -(i1 as i32))
                        .scale(&(rat_i(1) / index_product(n, i1, l as u32))),
                )
            }
        }
        a @ (2 | 3) => {
            assert!(j % 2 == 1, "family-{a} times have odd index");
            let l = (j - 1) / 2;
            let c = Scalar::sym(n, Sym::Sqrt2, -1)
                .scale(&(rat_i(1) / double_factorial_odd(l as u32 + 1)));
            let plus = Mono::var(Var::q(s, 2, 1, l)).with_hh(-1);
            let minus = Mono::var(Var::q(s, 3, 1, l)).with_hh(-1);
            let sgn = if a == 2 { c.clone() } else { c.neg() };
            FockPoly::from_terms(n, caps, [(plus, c), (minus, sgn)])
        }
        _ => unreachable!(),
    }
}

/// Apply the dictionary to every variable of `f`, slot by slot.  The two
/// directions are exact inverses on the capped ring; indices whose images
/// fall above `caps.kmax` are rejected loudly rather than projected.
pub fn change_vars(dir: VarMap, f: &FockPoly) -> FockPoly {
    let n = f.n();
    let caps = f.caps();
    let mut vars: Vec<Var> = Vec::new();
    for (m, _) in f.terms() {
        for (v, _) in m.vars() {
            if !vars.contains(v) {
                vars.push(*v);
            }
        }
    }
    let mut out = f.clone();
    for v in vars {
        let rep = match dir {
            VarMap::QtoT => {
                assert!(v.is_q(), "QtoT input must be in q-variables");
                q_image(n, caps, v)
            }
            VarMap::TtoQ => {
                assert!(!v.is_q(), "TtoQ input must be in time variables");
                t_image(n, caps, v)
            }
        };
        out = out.substitute(v, &rep);
    }
    out
}

/// Relabel every variable of `f` into the given slot.
pub(crate) fn reslot(f: &FockPoly, slot: u8) -> FockPoly {
    FockPoly::from_terms(
        f.n(),
        f.caps(),
        f.terms().map(|(m, c)| {
            let mut mono = Mono::unit().with_x(m.x_power()).with_hh(m.hh());
            for (v, e) in m.vars() {
                let mut w = *v;
                w.slot = slot;
                mono = mono.mul(&Mono::var_pow(w, *e));
            }
            (mono, c.clone())
        }),
    )
}

// ---------------------------------------------------------------------------
// Laurent polynomials in z
// ---------------------------------------------------------------------------

/// Laurent polynomial in `z` with capped Fock-polynomial coefficients.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ZPoly {
    n: u32,
    caps: Caps,
    c: BTreeMap<i64, FockPoly>,
}

impl ZPoly {
    pub fn zero(n: u32, caps: Caps) -> Self {
        ZPoly { n, caps, c: BTreeMap::new() }
    }

    pub fn one(n: u32, caps: Caps) -> Self {
        Self::from_coeff(0, FockPoly::one(n, caps))
    }

    pub fn from_coeff(zpow: i64, p: FockPoly) -> Self {
        let mut out = ZPoly { n: p.n(), caps: p.caps(), c: BTreeMap::new() };
        out.insert(zpow, p);
        out
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    pub fn coeff(&self, zpow: i64) -> FockPoly {
        self.c
            .get(&zpow)
            .cloned()
            .unwrap_or_else(|| FockPoly::zero(self.n, self.caps))
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (i64, &FockPoly)> {
        self.c.iter().map(|(&z, p)| (z, p))
    }

    /// Smallest and largest occurring z-power.
    pub fn window(&self) -> Option<(i64, i64)> {
        let lo = self.c.keys().next()?;
        let hi = self.c.keys().next_back()?;
        Some((*lo, *hi))
    }

    fn insert(&mut self, zpow: i64, p: FockPoly) {
        if p.is_zero() {
            return;
        }
        match self.c.entry(zpow) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(p);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = e.get().add(&p);
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        for (z, p) in &rhs.c {
            out.insert(*z, p.clone());
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for p in out.c.values_mut() {
            *p = p.neg();
        }
        out
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (z, p) in &self.c {
            out.insert(*z, p.scale(s));
        }
        out
    }

    pub fn scale_rat(&self, r: &Rat) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (z, p) in &self.c {
            out.insert(*z, p.scale_rat(r));
        }
        out
    }

    pub fn shift_z(&self, d: i64) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (z, p) in &self.c {
            out.insert(z + d, p.clone());
        }
        out
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (za, pa) in &self.c {
            for (zb, pb) in &rhs.c {
                out.insert(za + zb, pa.mul(pb));
            }
        }
        out
    }

    pub fn mul_poly(&self, p: &FockPoly) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (z, q) in &self.c {
            out.insert(*z, q.mul(p));
        }
        out
    }

    pub fn mul_hh(&self, dh: i32) -> Self {
        let mut out = Self::zero(self.n, self.caps);
        for (z, q) in &self.c {
            out.insert(*z, q.mul_hh(dh));
        }
        out
    }
}

/// `exp` of a Laurent polynomial every term of which raises the variable
/// degree; the series terminates at the degree cap.
pub fn exp_z(g: &ZPoly) -> ZPoly {
    for (_, p) in g.coeffs() {
        for (m, _) in p.terms() {
            assert!(m.q_degree() > 0, "exponential argument must raise the degree");
        }
    }
    let mut acc = ZPoly::one(g.n(), g.caps());
    let mut pow = acc.clone();
    let mut j: u32 = 0;
    loop {
        j += 1;
        pow = pow.mul(g);
        if pow.is_zero() {
            break;
        }
        acc = acc.add(&pow.scale_rat(&(rat_i(1) / factorial(j))));
        assert!(j <= g.caps().deg + 1, "exponential did not terminate at the caps");
    }
    acc
}

/// Substitute `x -> x + p(z)` where every coefficient of `p` is x-free.
/// This is a shift in raw units of `x`: no dispersion powers are consumed,
/// unlike `FockPoly::shift_x`.
pub(crate) fn shift_x_by(f: &ZPoly, p: &ZPoly) -> ZPoly {
    for (_, c) in p.coeffs() {
        assert!(c.x_degree() == 0, "translation amount must be x-free");
    }
    let n = f.n();
    let caps = f.caps();
    let xmax = f.coeffs().map(|(_, c)| c.x_degree()).max().unwrap_or(0);
    let mut powers: Vec<ZPoly> = Vec::with_capacity(xmax as usize + 1);
    powers.push(ZPoly::one(n, caps));
    for e in 1..=xmax as usize {
        let next = powers[e - 1].mul(p);
        powers.push(next);
    }
    let mut out = ZPoly::zero(n, caps);
    for (zf, poly) in f.coeffs() {
        for (m, c) in poly.terms() {
            let e = m.x_power();
            for t in 0..=e {
                let base = one_term(
                    n,
                    caps,
                    m.clone().with_x(t),
                    c.scale(&binomial(e, t)),
                );
                out = out.add(&powers[(e - t) as usize].mul_poly(&base).shift_z(zf));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Vertex operators in the loop-space coordinates
// ---------------------------------------------------------------------------

/// For a family-1 time index `j >= 1`: the loop-space variable it maps to
/// and the monomial scalar `s_j` with `t_{1,j} = h^{-1/2} s_j q_{i,p,k}`.
fn f1_entry(n: u32, j: u16) -> (Var, Scalar) {
    let d = (n - 2) as u16;
    if j % d == 0 {
        let l = j / d;
        (
            Var::q(0, 0, 1, l - 1),
            Scalar::from_rat(n, rat_i(1) / pow_fact(n, l as u32)),
        )
    } else {
        let i1 = (j % d) as u32;
        let l = j / d;
        (
            Var::q(0, 1, i1, l),
            Scalar::sym(n, Sym::RootN, -(i1 as i32))
                .scale(&(rat_i(1) / index_product(n, i1, l as u32))),
        )
    }
}

fn at_slot(v: Var, slot: u8) -> Var {
    let mut w = v;
    w.slot = slot;
    w
}

/// Creation sum of the first-sector vertex operator with overall sign
/// `sign`: `sign * sum_j z^j t_{1,j}` written in the loop-space variables of
/// the given slot.
fn cre_sum_f1(n: u32, caps: Caps, slot: u8, sign: i64) -> ZPoly {
    let mut out = ZPoly::zero(n, caps);
    for j in 1..=caps.kmax {
        let (v, s) = f1_entry(n, j);
        let mono = Mono::var(at_slot(v, slot)).with_hh(-1);
        out.insert(
            j as i64,
            one_term(n, caps, mono, s.scale(&rat_i(sign))),
        );
    }
    out
}

/// One application of the derivation `sum_j z^{-j} (1/j) d/dt_{1,j}` in the
/// loop-space variables of the given slot.
fn ann_step_f1(slot: u8, f: &ZPoly) -> ZPoly {
    let n = f.n();
    let caps = f.caps();
    let mut out = ZPoly::zero(n, caps);
    for j in 1..=caps.kmax {
        let (v, s) = f1_entry(n, j);
        let s_inv = s.inv_monomial().expect("dictionary scalars are monomials");
        let v = at_slot(v, slot);
        for (zf, c) in f.coeffs() {
            let d = c.derive(v);
            if d.is_zero() {
                continue;
            }
            out.insert(
                zf - j as i64,
                d.mul_hh(1).scale(&s_inv).scale_rat(&rat(1, j as i64)),
            );
        }
    }
    out
}

/// Creation sum of a second- or third-sector vertex operator evaluated at
/// `argsign * z`.
fn cre_sum_f23(n: u32, caps: Caps, slot: u8, fam: u8, argsign: i64) -> ZPoly {
    let mut out = ZPoly::zero(n, caps);
    let mut l: u16 = 0;
    loop {
        let j = 2 * l + 1;
        if j > caps.kmax {
            break;
        }
        let c = Scalar::sym(n, Sym::Sqrt2, -1)
            .scale(&(rat_i(argsign) / double_factorial_odd(l as u32 + 1)));
        let plus = Mono::var(Var::q(slot, 2, 1, l)).with_hh(-1);
        let minus = Mono::var(Var::q(slot, 3, 1, l)).with_hh(-1);
        let sgn = if fam == 2 { c.clone() } else { c.neg() };
        out.insert(j as i64, FockPoly::from_terms(n, caps, [(plus, c), (minus, sgn)]));
        l += 1;
    }
    out
}

/// One application of the derivation
/// `sum_l z^{-2l-1} (2/(2l+1)) d/dt_{fam,2l+1}` in the loop-space variables.
fn ann_step_f23(slot: u8, fam: u8, f: &ZPoly) -> ZPoly {
    let n = f.n();
    let caps = f.caps();
    let mut out = ZPoly::zero(n, caps);
    let mut l: u16 = 0;
    loop {
        let j = 2 * l + 1;
        if j > caps.kmax {
            break;
        }
        let factor = Scalar::sym(n, Sym::Sqrt2, 1).scale(&double_factorial_odd(l as u32));
        for (zf, c) in f.coeffs() {
            let d2 = c.derive(Var::q(slot, 2, 1, l));
            let d3 = c.derive(Var::q(slot, 3, 1, l));
            let d = if fam == 2 { d2.add(&d3) } else { d2.sub(&d3) };
            if d.is_zero() {
                continue;
            }
            out.insert(zf - j as i64, d.mul_hh(1).scale(&factor));
        }
        l += 1;
    }
    out
}

/// Apply `exp(c * D)` for a derivation step; the series terminates because
/// each application consumes a variable.
fn exp_derivation(f: &ZPoly, c: i64, step: impl Fn(&ZPoly) -> ZPoly) -> ZPoly {
    let mut acc = f.clone();
    let mut cur = f.clone();
    let mut d: i64 = 0;
    loop {
        d += 1;
        cur = step(&cur).scale_rat(&rat(c, d));
        if cur.is_zero() {
            break;
        }
        acc = acc.add(&cur);
    }
    acc
}

/// First-sector vertex operator with overall sign `sign` applied to a
/// polynomial living in the given slot.
fn gamma1_apply(g: &FockPoly, slot: u8, sign: i64) -> ZPoly {
    let n = g.n();
    let caps = g.caps();
    let base = ZPoly::from_coeff(0, g.clone());
    let ann = exp_derivation(&base, -sign, |f| ann_step_f1(slot, f));
    exp_z(&cre_sum_f1(n, caps, slot, sign)).mul(&ann)
}

/// Second- or third-sector vertex operator evaluated at `argsign * z`,
/// applied to a polynomial living in the given slot.
fn gamma23_apply(g: &FockPoly, slot: u8, fam: u8, argsign: i64) -> ZPoly {
    let n = g.n();
    let caps = g.caps();
    let base = ZPoly::from_coeff(0, g.clone());
    let ann = exp_derivation(&base, -argsign, |f| ann_step_f23(slot, fam, f));
    exp_z(&cre_sum_f23(n, caps, slot, fam, argsign)).mul(&ann)
}

// ---------------------------------------------------------------------------
// Translation and dressing factors
// ---------------------------------------------------------------------------

/// `sum_l z^{(n-2)l} (q'_{0,0,l} - q''_{0,0,l}) / ((n-2)^l l!)`: the amount
/// by which the second factor of the first-sector integrand is translated
/// in `x`.
fn p_tilde_f1(n: u32, caps: Caps) -> ZPoly {
    let mut out = ZPoly::zero(n, caps);
    for l in 1..=caps.kmax {
        let c = Scalar::from_rat(n, rat_i(1) / pow_fact(n, l as u32));
        let p = FockPoly::from_terms(
            n,
            caps,
            [
                (Mono::var(Var::q(1, 0, 0, l)), c.clone()),
                (Mono::var(Var::q(2, 0, 0, l)), c.neg()),
            ],
        );
        out.insert((n - 2) as i64 * l as i64, p);
    }
    out
}

/// `sign * sum_l z^{(n-2)l} h_l (q'_{0,0,l} - q''_{0,0,l}) h^{-1/2} /
/// ((n-2)^l l!)` with `h_l = (1 + 1/2 + ... + 1/l)/(n-2)`: the scalar
/// dressing of the first-sector summands.
fn r_tilde_f1(n: u32, caps: Caps, sign: i64) -> ZPoly {
    let mut out = ZPoly::zero(n, caps);
    for l in 1..=caps.kmax {
        let hl = harmonic(l as u32) * rat(1, (n - 2) as i64);
        let c = Scalar::from_rat(n, rat_i(sign) * hl / pow_fact(n, l as u32));
        let p = FockPoly::from_terms(
            n,
            caps,
            [
                (Mono::var(Var::q(1, 0, 0, l)).with_hh(-1), c.clone()),
                (Mono::var(Var::q(2, 0, 0, l)).with_hh(-1), c.neg()),
            ],
        );
        out.insert((n - 2) as i64 * l as i64, p);
    }
    out
}

/// `sum_l z^{2l} (q'_{0,0,l} - q''_{0,0,l}) / (2l)!!`: the translation
/// amount of the second and third sectors.
fn p_tilde_f23(n: u32, caps: Caps) -> ZPoly {
    let mut out = ZPoly::zero(n, caps);
    for l in 1..=caps.kmax {
        let c = Scalar::from_rat(n, rat_i(1) / pow2_fact(l as u32));
        let p = FockPoly::from_terms(
            n,
            caps,
            [
                (Mono::var(Var::q(1, 0, 0, l)), c.clone()),
                (Mono::var(Var::q(2, 0, 0, l)), c.neg()),
            ],
        );
        out.insert(2 * l as i64, p);
    }
    out
}

/// `(QrtN)^e` as a scalar.
pub(crate) fn qrtn_pow(n: u32, e: i32) -> Scalar {
    Scalar::sym(n, Sym::Q, e).mul(&Scalar::sym(n, Sym::RootN, e))
}

/// The coefficient of `(z/C)^j` with `C = -(n-2)^{1/(n-2)} Q`:
/// `(-1)^j (QrtN)^{-j}`.
fn head_c_pow(n: u32, j: i64) -> Scalar {
    let j32 = i32::try_from(j).expect("head exponent out of range");
    let s = qrtn_pow(n, -j32);
    if j.rem_euclid(2) == 1 {
        s.neg()
    } else {
        s
    }
}

// ---------------------------------------------------------------------------
// Sector integrands and residues
// ---------------------------------------------------------------------------

fn check_pair(tau1: &TauFunction, tau2: &TauFunction) -> Result<(u32, Caps), HqeError> {
    if tau1.n != tau2.n {
        return Err(HqeError::BadTau("mismatched basis sizes".into()));
    }
    if tau1.caps != tau2.caps {
        return Err(HqeError::BadTau("mismatched caps".into()));
    }
    Ok((tau1.n, tau1.caps))
}

/// The two summands of the m-th first-sector integrand, as Laurent series
/// applied to the doubled Fock space: the first carries the head
/// `(z/C)^{m-1}`, the second `(z/C)^{-m-1}`.
pub fn sector1_summands(
    tau1: &TauFunction,
    tau2: &TauFunction,
    m: i64,
) -> Result<(ZPoly, ZPoly), HqeError> {
    let (n, caps) = check_pair(tau1, tau2)?;
    let t1 = reslot(&tau1.poly, 1);
    let t2 = reslot(&tau2.poly, 2);
    let ptil = p_tilde_f1(n, caps);

    let f = gamma1_apply(&t1.shift_x(-1), 1, 1);
    let g = shift_x_by(&gamma1_apply(&t2.shift_x(1), 2, -1), &ptil);
    let a = f
        .mul(&exp_z(&r_tilde_f1(n, caps, -1)))
        .mul(&g)
        .shift_z(m - 1)
        .scale(&head_c_pow(n, m - 1));

    let f = gamma1_apply(&t1.shift_x(1), 1, -1);
    let g = shift_x_by(&gamma1_apply(&t2.shift_x(-1), 2, 1), &ptil);
    let b = f
        .mul(&exp_z(&r_tilde_f1(n, caps, 1)))
        .mul(&g)
        .shift_z(-m - 1)
        .scale(&head_c_pow(n, -m - 1));

    Ok((a, b))
}

/// The m-th integrand of one sector of the equations, as a Laurent series
/// in the transformed coordinate of that sector.
pub fn sector_integrand(
    sector: u8,
    tau1: &TauFunction,
    tau2: &TauFunction,
    m: i64,
) -> Result<ZPoly, HqeError> {
    let (n, caps) = check_pair(tau1, tau2)?;
    match sector {
        1 => {
            let (a, b) = sector1_summands(tau1, tau2, m)?;
            Ok(a.add(&b))
        }
        2 => {
            let t1 = reslot(&tau1.poly, 1);
            let t2 = reslot(&tau2.poly, 2);
            let f = gamma23_apply(&t1, 1, 2, 1);
            let g = shift_x_by(&gamma23_apply(&t2, 2, 2, -1), &p_tilde_f23(n, caps));
            let i2 = f.mul(&g);
            Ok(if m.rem_euclid(2) == 1 { i2.neg() } else { i2 })
        }
        3 => {
            let t1 = reslot(&tau1.poly, 1);
            let t2 = reslot(&tau2.poly, 2);
            let f = gamma23_apply(&t1, 1, 3, 1);
            let g = shift_x_by(&gamma23_apply(&t2, 2, 3, -1), &p_tilde_f23(n, caps));
            Ok(f.mul(&g))
        }
        _ => panic!("sector index out of range: {sector}"),
    }
}

fn check_window(n: u32, caps: Caps, sector: u8, m: i64, r: u32) -> Result<(), HqeError> {
    let need = match sector {
        1 => (n - 2) as i64 * r as i64 + m.unsigned_abs() as i64 + 1,
        _ => 2 * r as i64 + 1,
    };
    if need > caps.kmax as i64 {
        return Err(HqeError::CapExceeded(format!(
            "sector {sector} residue at m = {m}, r = {r} needs creation index {need} > kmax = {}",
            caps.kmax
        )));
    }
    Ok(())
}

/// One sector's residue at weight `r`, an exact Laurent-coefficient
/// extraction: the first sector contributes
/// `[z^{-(n-2)r}] I_1 / ((n-2)^r r!)`, the second `[z^{-2r}] I_2 / (2 (2r)!!)`
/// and the third `-[z^{-2r}] I_3 / (2 (2r)!!)`, matching the orientations of
/// the residues at infinity.
pub fn sector_residual(
    sector: u8,
    tau1: &TauFunction,
    tau2: &TauFunction,
    m: i64,
    r: u32,
) -> Result<FockPoly, HqeError> {
    let (n, caps) = check_pair(tau1, tau2)?;
    check_window(n, caps, sector, m, r)?;
    let integrand = sector_integrand(sector, tau1, tau2, m)?;
    let value = match sector {
        1 => integrand
            .coeff(-((n - 2) as i64) * r as i64)
            .scale_rat(&(rat_i(1) / pow_fact(n, r))),
        2 => integrand
            .coeff(-2 * r as i64)
            .scale_rat(&(rat(1, 2) / pow2_fact(r))),
        3 => integrand
            .coeff(-2 * r as i64)
            .scale_rat(&(rat(1, 2) / pow2_fact(r)))
            .neg(),
        _ => unreachable!(),
    };
    Ok(value)
}

/// The full residual of the m-th equation at weight `r`.  The one-point
/// orbits of the rotations `z -> eta_1 z` and `z -> -z` collapse onto base
/// points with multiplicities `n-2`, `2`, `2`.
pub fn hqe_residual(
    tau1: &TauFunction,
    tau2: &TauFunction,
    m: i64,
    r: u32,
) -> Result<FockPoly, HqeError> {
    let n = tau1.n;
    let s1 = sector_residual(1, tau1, tau2, m, r)?;
    let s2 = sector_residual(2, tau1, tau2, m, r)?;
    let s3 = sector_residual(3, tau1, tau2, m, r)?;
    Ok(s1
        .scale_rat(&rat_i((n - 2) as i64))
        .add(&s2.scale_rat(&rat_i(2)))
        .add(&s3.scale_rat(&rat_i(2))))
}

// ---------------------------------------------------------------------------
// One-form pullbacks
// ---------------------------------------------------------------------------

/// Pull back the one-form `b~_eps dlambda/lambda` along the uniformization
/// of its sector (`lambda = z^{n-2}/(n-2)` on the first, `lambda = z^2/2` on
/// the others).  The result is a single monomial `c z^w dz`, returned as
/// `(w, c)`; these are exactly the heads that drive the integrands above.
pub fn pullback_one_form(eps: &KClass) -> Result<(i64, Scalar), PhaseError> {
    let n = eps.n();
    let (label, _) = identify_vertex_class(eps)?;
    let b = b_tilde(eps)?;
    let mut terms = b.terms();
    let (kr, e, coeff) = terms.next().expect("b~ has one term");
    assert!(terms.next().is_none(), "b~ has one term");
    assert_eq!(e, 0, "b~ carries no logarithm");
    match label.family {
        1 => {
            assert!(kr % 2 == 0, "first-sector exponents are half-integral in z");
            let rtn = Scalar::sym(n, Sym::RootN, i32::try_from(-kr / 2).unwrap());
            let c = coeff.mul(&rtn).scale(&rat_i((n - 2) as i64));
            Ok((kr / 2 - 1, c))
        }
        2 | 3 => {
            assert_eq!(kr, 0, "constant one-forms away from the first sector");
            Ok((-1, coeff.scale(&rat_i(2))))
        }
        f => panic!("vertex family out of range: {f}"),
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::klattice::eps_labels;

    fn caps4() -> Caps {
        standard_caps(3, 8)
    }

    fn q0(k: u16) -> Var {
        Var::q(0, 0, 0, k)
    }

    fn poly_of(n: u32, caps: Caps, terms: Vec<(Mono, Scalar)>) -> FockPoly {
        FockPoly::from_terms(n, caps, terms)
    }

    fn swap_slots(f: &ZPoly) -> ZPoly {
        let mut out = ZPoly::zero(f.n(), f.caps());
        for (z, p) in f.coeffs() {
            let q = FockPoly::from_terms(
                p.n(),
                p.caps(),
                p.terms().map(|(m, c)| {
                    let mut mono = Mono::unit().with_x(m.x_power()).with_hh(m.hh());
                    for (v, e) in m.vars() {
                        let mut w = *v;
                        w.slot = match v.slot {
                            1 => 2,
                            2 => 1,
                            s => s,
                        };
                        mono = mono.mul(&Mono::var_pow(w, *e));
                    }
                    (mono, c.clone())
                }),
            );
            out = out.add(&ZPoly::from_coeff(z, q));
        }
        out
    }

    #[test]
    fn dictionary_t21() {
        let n = 4;
        let caps = caps4();
        let f = poly_of(n, caps, vec![(Mono::var(Var::t(0, 2, 1)), Scalar::one(n))]);
        let got = change_vars(VarMap::TtoQ, &f);
        let c = Scalar::sym(n, Sym::Sqrt2, -1);
        let want = poly_of(
            n,
            caps,
            vec![
                (Mono::var(Var::q(0, 2, 1, 0)).with_hh(-1), c.clone()),
                (Mono::var(Var::q(0, 3, 1, 0)).with_hh(-1), c),
            ],
        );
        assert_eq!(got, want);
    }

    #[test]
    fn dictionary_t1_block() {
        let n = 5;
        let caps = caps4();
        let f = poly_of(n, caps, vec![(Mono::var(Var::t(0, 1, 3)), Scalar::one(n))]);
        let got = change_vars(VarMap::TtoQ, &f);
        let want = poly_of(
            n,
            caps,
            vec![(
                Mono::var(Var::q(0, 0, 1, 0)).with_hh(-1),
                Scalar::from_rat(n, rat(1, 3)),
            )],
        );
        assert_eq!(got, want);

        let f = poly_of(n, caps, vec![(Mono::var(Var::t(0, 1, 4)), Scalar::one(n))]);
        let got = change_vars(VarMap::TtoQ, &f);
        let want = poly_of(
            n,
            caps,
            vec![(
                Mono::var(Var::q(0, 1, 1, 1)).with_hh(-1),
                Scalar::sym(n, Sym::RootN, -1).scale(&rat(1, 4)),
            )],
        );
        assert_eq!(got, want);
    }

    #[test]
    fn dictionary_dilaton() {
        let n = 4;
        let caps = caps4();
        let f = poly_of(n, caps, vec![(Mono::var(q0(1)), Scalar::one(n))]);
        let got = change_vars(VarMap::QtoT, &f);
        let want = poly_of(
            n,
            caps,
            vec![
                (Mono::var(Var::t(0, 0, 1)).with_hh(1), Scalar::one(n)),
                (Mono::unit(), Scalar::from_int(n, -1)),
            ],
        );
        assert_eq!(got, want);
    }

    #[test]
    fn dictionary_roundtrip() {
        for n in [4u32, 5] {
            let caps = caps4();
            let samples = vec![
                poly_of(
                    n,
                    caps,
                    vec![
                        (Mono::var(q0(1)).mul(&Mono::var(q0(2))), Scalar::one(n)),
                        (Mono::var(Var::q(0, 2, 1, 1)).with_x(1), Scalar::sym(n, Sym::Q, 1)),
                        (Mono::var(Var::q(0, 1, 1, 0)).with_hh(1), Scalar::from_int(n, 3)),
                    ],
                ),
                poly_of(
                    n,
                    caps,
                    vec![
                        (Mono::var(Var::t(0, 0, 1)), Scalar::one(n)),
                        (
                            Mono::var(Var::t(0, 2, 3)).mul(&Mono::var(Var::t(0, 3, 1))),
                            Scalar::from_int(n, -2),
                        ),
                        (Mono::var(Var::t(0, 1, 2)).with_hh(-1), Scalar::one(n)),
                    ],
                ),
            ];
            let q_side = &samples[0];
            let rt = change_vars(VarMap::TtoQ, &change_vars(VarMap::QtoT, q_side));
            assert_eq!(&rt, q_side);
            let t_side = &samples[1];
            let rt = change_vars(VarMap::QtoT, &change_vars(VarMap::TtoQ, t_side));
            assert_eq!(&rt, t_side);
        }
    }

    #[test]
    fn trivial_tau_residues() {
        let n = 4;
        let caps = caps4();
        let tau = TauFunction::one(n, caps);
        let s1 = sector_residual(1, &tau, &tau, 0, 0).unwrap();
        assert!(s1.is_zero());
        let s2 = sector_residual(2, &tau, &tau, 0, 0).unwrap();
        assert_eq!(s2.coeff(&Mono::unit()), Scalar::from_rat(n, rat(1, 2)));
        let s3 = sector_residual(3, &tau, &tau, 0, 0).unwrap();
        assert_eq!(s3.coeff(&Mono::unit()), Scalar::from_rat(n, rat(-1, 2)));
        for m in [0i64, 1, 2] {
            let res = hqe_residual(&tau, &tau, m, 0).unwrap();
            let want = if m % 2 == 0 {
                Scalar::zero(n)
            } else {
                Scalar::from_int(n, -2)
            };
            assert_eq!(res.coeff(&Mono::unit()), want, "m = {m}");
        }
        let res = hqe_residual(&tau, &tau, 0, 1).unwrap();
        assert!(res.is_zero());
    }

    fn sample_tau(n: u32, caps: Caps) -> TauFunction {
        TauFunction::new(poly_of(
            n,
            caps,
            vec![
                (Mono::unit(), Scalar::one(n)),
                (Mono::var(q0(1)).with_x(1), Scalar::from_int(n, 2)),
                (Mono::var(Var::q(0, 1, 1, 0)), Scalar::one(n)),
                (
                    Mono::var(Var::q(0, 2, 1, 0)).mul(&Mono::var(Var::q(0, 3, 1, 0))),
                    Scalar::from_rat(n, rat(1, 3)),
                ),
            ],
        ))
        .unwrap()
    }

    #[test]
    fn summand_symmetry() {
        let n = 4;
        let caps = caps4();
        let tau1 = sample_tau(n, caps);
        let tau2 = TauFunction::new(poly_of(
            n,
            caps,
            vec![
                (Mono::unit(), Scalar::one(n)),
                (Mono::var(q0(2)), Scalar::from_int(n, -1)),
                (Mono::var(Var::q(0, 2, 1, 1)).with_hh(1), Scalar::one(n)),
            ],
        ))
        .unwrap();
        for m in [-1i64, 0, 2] {
            let (a_swapped, _) = sector1_summands(&tau2, &tau1, -m).unwrap();
            let (_, b) = sector1_summands(&tau1, &tau2, m).unwrap();
            let lhs = swap_slots(&a_swapped);
            let rhs = shift_x_by(&b, &p_tilde_f1(n, caps).neg());
            assert_eq!(lhs, rhs, "m = {m}");
        }
    }

    #[test]
    fn sector23_exchange() {
        let n = 4;
        let caps = caps4();
        // invariant under exchanging the second and third families
        let tau = TauFunction::new(poly_of(
            n,
            caps,
            vec![
                (Mono::unit(), Scalar::one(n)),
                (Mono::var(Var::q(0, 2, 1, 0)), Scalar::one(n)),
                (Mono::var(Var::q(0, 3, 1, 0)), Scalar::one(n)),
                (Mono::var(q0(1)).with_x(1), Scalar::from_rat(n, rat(1, 2))),
            ],
        ))
        .unwrap();
        let relabel = |f: &FockPoly| {
            FockPoly::from_terms(
                f.n(),
                f.caps(),
                f.terms().map(|(m, c)| {
                    let mut mono = Mono::unit().with_x(m.x_power()).with_hh(m.hh());
                    for (v, e) in m.vars() {
                        let mut w = *v;
                        w.fam = match v.fam {
                            2 => 3,
                            3 => 2,
                            fam => fam,
                        };
                        mono = mono.mul(&Mono::var_pow(w, *e));
                    }
                    (mono, c.clone())
                }),
            )
        };
        for (m, r) in [(0i64, 0u32), (0, 1), (1, 0)] {
            let s2 = sector_residual(2, &tau, &tau, m, r).unwrap();
            let s3 = sector_residual(3, &tau, &tau, m, r).unwrap();
            let sign = if m.rem_euclid(2) == 0 { -1 } else { 1 };
            assert_eq!(s2, relabel(&s3).scale_rat(&rat_i(sign)), "m = {m}, r = {r}");
        }
    }

    #[test]
    fn residual_grading() {
        let n = 4;
        let caps = caps4();
        let weight = |m: &Mono| m.q_degree() as i64 + m.x_power() as i64 + m.hh() as i64;
        let tau1 = TauFunction::new(poly_of(
            n,
            caps,
            vec![
                (Mono::unit(), Scalar::one(n)),
                (Mono::var(q0(1)).with_hh(1), Scalar::one(n)),
            ],
        ))
        .unwrap();
        let tau2 = TauFunction::new(poly_of(
            n,
            caps,
            vec![
                (Mono::unit(), Scalar::one(n)),
                (Mono::var(Var::q(0, 2, 1, 0)).with_x(1), Scalar::one(n)),
            ],
        ))
        .unwrap();
        // both inputs are homogeneous: 1 has weight 0 and the second
        // monomials both have weight 2
        for (m, r) in [(0i64, 0u32), (1, 0), (0, 1)] {
            let res = hqe_residual(&tau1, &tau2, m, r).unwrap();
            let weights: std::collections::BTreeSet<i64> =
                res.terms().map(|(mo, _)| weight(mo)).collect();
            for w in &weights {
                assert!(
                    [0i64, 2, 4].contains(w),
                    "m = {m}, r = {r}: stray weight {w}"
                );
            }
        }
    }

    #[test]
    fn dispersion_window_stability() {
        let n = 4;
        let narrow = Caps::new(3, 8, -32, 32);
        let wide = Caps::new(3, 8, -128, 128);
        let mk = |caps: Caps| {
            TauFunction::new(poly_of(
                n,
                caps,
                vec![
                    (Mono::unit(), Scalar::one(n)),
                    (Mono::var(q0(1)).with_x(1).with_hh(-1), Scalar::one(n)),
                    (Mono::var(Var::q(0, 1, 1, 1)), Scalar::from_int(n, 2)),
                ],
            ))
            .unwrap()
        };
        let res_n = hqe_residual(&mk(narrow), &mk(narrow), 1, 1).unwrap();
        let res_w = hqe_residual(&mk(wide), &mk(wide), 1, 1).unwrap();
        assert_eq!(res_w.with_caps(narrow), res_n);
        for (m, _) in res_w.terms() {
            assert!(m.hh().abs() <= 16, "dispersion power near the window edge");
        }
    }

    #[test]
    fn window_errors() {
        let n = 4;
        let caps = Caps::new(3, 4, -64, 64);
        let tau = TauFunction::one(n, caps);
        let err = sector_residual(1, &tau, &tau, 0, 2).unwrap_err();
        assert!(matches!(err, HqeError::CapExceeded(_)));
        let err = hqe_residual(&tau, &tau, 4, 0).unwrap_err();
        assert!(matches!(err, HqeError::CapExceeded(_)));
    }

    #[test]
    fn tau_validation() {
        let n = 4;
        let caps = caps4();
        let bad = poly_of(n, caps, vec![(Mono::var(Var::t(0, 1, 1)), Scalar::one(n))]);
        assert!(matches!(TauFunction::new(bad), Err(HqeError::BadTau(_))));
        let bad = poly_of(n, caps, vec![(Mono::var(q0(0)), Scalar::one(n))]);
        assert!(matches!(TauFunction::new(bad), Err(HqeError::BadTau(_))));
        let bad = poly_of(n, caps, vec![(Mono::var(Var::q(1, 0, 0, 1)), Scalar::one(n))]);
        assert!(matches!(TauFunction::new(bad), Err(HqeError::BadTau(_))));
    }

    #[test]
    fn pullback_matches_heads() {
        for n in [4u32, 5, 6] {
            for label in eps_labels(n) {
                let eps = crate::klattice::eps_vector(n, &label);
                let (w, c) = pullback_one_form(&eps).unwrap();
                match label.family {
                    1 => {
                        assert_eq!(w, -2);
                        let want = qrtn_pow(n, 1).scale_cyc(
                            &crate::scalars::Cyclotomic::eta_j_pow(
                                n,
                                1,
                                -(label.index as i32),
                            ),
                        );
                        assert_eq!(c, want);
                        if label.index == 0 {
                            // the head scalar of (z/C)^{-1} is -C = QrtN
                            assert_eq!(c, head_c_pow(n, -1).neg());
                        }
                    }
                    2 => {
                        assert_eq!((w, c.clone()), (-1, Scalar::from_rat(n, rat(-1, 2))));
                    }
                    3 => {
                        assert_eq!((w, c.clone()), (-1, Scalar::from_rat(n, rat(1, 2))));
                    }
                    f => panic!("family {f}"),
                }
            }
        }
    }
}
