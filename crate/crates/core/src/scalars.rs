//! Exact coefficient tower.
//!
//! The base field is Q(zeta), zeta a primitive M-th root of unity with
//! M = lcm(4, 2(n-2)), represented as Q[x]/Phi_M(x) with canonical reduced
//! coordinates. On top of it sit Laurent monomials in a fixed alphabet of
//! formal constants:
//!
//! * `pi`, `EG` (minus the derivative of Gamma at 1), `logQ`, `Q`,
//! * `G[j,p]` for Gamma(p/a_j) with 2p <= a_j (larger p is eliminated by the
//!   Gamma reflection rule, the only rewrite between symbols),
//! * `rt2` and `rtN`, square and (n-2)-nd roots of 2 and n-2, reduced by
//!   rt2^2 -> 2, rtN^(n-2) -> n-2.
//!
//! A `Scalar` is a finite sum of such monomials with cyclotomic coefficients.
//! The normal form is unique, so equality of scalars is map equality, and a
//! scalar that must be rational can be asserted to be one.

use num::{BigInt, BigRational, One, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

pub type Rat = BigRational;

pub fn rat_i(v: i64) -> Rat {
    Rat::from_integer(BigInt::from(v))
}

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn factorial(k: u32) -> Rat {
    let mut acc = BigInt::one();
    for j in 2..=k as u64 {
        acc *= BigInt::from(j);
    }
    Rat::from_integer(acc)
}

/// (2k-1)!! with the empty product equal to 1.
pub fn double_factorial_odd(k: u32) -> Rat {
    let mut acc = BigInt::one();
    let mut j = 1i64;
    for _ in 0..k {
        acc *= BigInt::from(j);
        j += 2;
    }
    Rat::from_integer(acc)
}

/// Harmonic number H_k = 1 + 1/2 + ... + 1/k, H_0 = 0.
pub fn harmonic(k: u32) -> Rat {
    let mut acc = Rat::zero();
    for j in 1..=k as i64 {
        acc += rat(1, j);
    }
    acc
}

pub fn binomial(a: u32, b: u32) -> Rat {
    if b > a {
        return Rat::zero();
    }
    let mut acc = Rat::one();
    for j in 0..b {
        acc *= rat((a - j) as i64, (j + 1) as i64);
    }
    acc
}

/// The sector profile: a_0 = 1, a_1 = n-2, a_2 = a_3 = 2.
pub fn a_param(n: u32, j: u8) -> u32 {
    match j {
        0 => 1,
        1 => n - 2,
        2 | 3 => 2,
        _ => panic!("sector index out of range: {j}"),
    }
}

pub const MIN_N: u32 = 4;
pub const MAX_N: u32 = 64;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

// ---------------------------------------------------------------------------
// dense little-endian polynomials over Q, used only for field arithmetic
// ---------------------------------------------------------------------------

fn poly_trim(v: &mut Vec<Rat>) {
    while v.last().is_some_and(|c| c.is_zero()) {
        v.pop();
    }
}

fn poly_mul(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Rat::zero(); a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            if !bj.is_zero() {
                out[i + j] += ai * bj;
            }
        }
    }
    poly_trim(&mut out);
    out
}

/// Quotient and remainder by a monic divisor.
fn poly_divmod(a: &[Rat], m: &[Rat]) -> (Vec<Rat>, Vec<Rat>) {
    assert!(m.last().is_some_and(|c| c.is_one()), "divisor must be monic");
    let mut rem: Vec<Rat> = a.to_vec();
    poly_trim(&mut rem);
    let d = m.len() - 1;
    if rem.len() <= d {
        return (Vec::new(), rem);
    }
    let mut quo = vec![Rat::zero(); rem.len() - d];
    while rem.len() > d {
        let lead = rem.last().unwrap().clone();
        let shift = rem.len() - 1 - d;
        quo[shift] = lead.clone();
        for (j, mj) in m.iter().enumerate() {
            if !mj.is_zero() {
                let v = &lead * mj;
                rem[shift + j] -= v;
            }
        }
        poly_trim(&mut rem);
    }
    poly_trim(&mut quo);
    (quo, rem)
}

fn poly_div_exact(a: &[Rat], m: &[Rat]) -> Vec<Rat> {
    let (q, r) = poly_divmod(a, m);
    assert!(r.is_empty(), "division was not exact");
    q
}

fn cyclotomic_polynomial(m: u64) -> Vec<Rat> {
    // x^m - 1 divided by the cyclotomic polynomials of all proper divisors.
    let mut num = vec![Rat::zero(); m as usize + 1];
    num[0] = -Rat::one();
    num[m as usize] = Rat::one();
    for d in 1..m {
        if m % d == 0 {
            num = poly_div_exact(&num, &cyclotomic_polynomial(d));
        }
    }
    num
}

// ---------------------------------------------------------------------------
// per-n context
// ---------------------------------------------------------------------------

pub struct CycInfo {
    pub n: u32,
    /// Order M of the fixed root of unity.
    pub m_order: u32,
    /// kappa = 2(n-2), the Milnor-fiber monodromy order.
    pub kappa: u32,
    /// Monic Phi_M, little-endian.
    pub phi: Vec<Rat>,
    /// Field degree over Q.
    pub deg: usize,
}

static REGISTRY: OnceLock<Vec<OnceLock<CycInfo>>> = OnceLock::new();

pub fn cyc_info(n: u32) -> &'static CycInfo {
    assert!(
        (MIN_N..=MAX_N).contains(&n),
        "rank parameter n = {n} outside supported range {MIN_N}..={MAX_N}"
    );
    let reg = REGISTRY.get_or_init(|| (0..=MAX_N).map(|_| OnceLock::new()).collect());
    reg[n as usize].get_or_init(|| {
        let kappa = 2 * (n - 2);
        let m_order = lcm(4, kappa as u64) as u32;
        let phi = cyclotomic_polynomial(m_order as u64);
        let deg = phi.len() - 1;
        CycInfo { n, m_order, kappa, phi, deg }
    })
}

// ---------------------------------------------------------------------------
// cyclotomic field elements
// ---------------------------------------------------------------------------

/// Element of Q(zeta_M) in reduced coordinates against Phi_M.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Cyclotomic {
    n: u32,
    c: Vec<Rat>,
}

impl Cyclotomic {
    pub fn zero(n: u32) -> Self {
        let deg = cyc_info(n).deg;
        Cyclotomic { n, c: vec![Rat::zero(); deg] }
    }

    pub fn one(n: u32) -> Self {
        Self::from_rat(n, Rat::one())
    }

    pub fn from_rat(n: u32, r: Rat) -> Self {
        let mut v = Self::zero(n);
        v.c[0] = r;
        v
    }

    pub fn from_int(n: u32, k: i64) -> Self {
        Self::from_rat(n, rat_i(k))
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    fn from_poly(n: u32, mut p: Vec<Rat>) -> Self {
        let info = cyc_info(n);
        poly_trim(&mut p);
        let (_, mut rem) = poly_divmod(&p, &info.phi);
        rem.resize(info.deg, Rat::zero());
        Cyclotomic { n, c: rem }
    }

    /// zeta_M^k, any integer k.
    pub fn zeta_pow(n: u32, k: i64) -> Self {
        let m = cyc_info(n).m_order as i64;
        let k = k.rem_euclid(m) as usize;
        let mut p = vec![Rat::zero(); k + 1];
        p[k] = Rat::one();
        Self::from_poly(n, p)
    }

    /// zeta_order^pow for any order dividing M.
    pub fn root_of_unity(n: u32, order: u32, pow: i64) -> Self {
        let m = cyc_info(n).m_order;
        assert!(m % order == 0, "order {order} does not divide {m}");
        Self::zeta_pow(n, (m / order) as i64 * pow)
    }

    /// eta^pow, eta the primitive kappa-th root.
    pub fn eta_pow(n: u32, pow: i64) -> Self {
        Self::root_of_unity(n, cyc_info(n).kappa, pow)
    }

    /// eta_j^pow, eta_j the primitive a_j-th root.
    pub fn eta_j_pow(n: u32, j: u8, pow: i64) -> Self {
        Self::root_of_unity(n, a_param(n, j), pow)
    }

    /// The imaginary unit.
    pub fn imag(n: u32) -> Self {
        Self::root_of_unity(n, 4, 1)
    }

    /// Exact sin(pi p / a) = (zeta_{2a}^p - zeta_{2a}^{-p}) / 2i.
    pub fn sin_pi_frac(n: u32, p: u32, a: u32) -> Self {
        let num = Self::root_of_unity(n, 2 * a, p as i64)
            .sub(&Self::root_of_unity(n, 2 * a, -(p as i64)));
        let den = Self::imag(n).scale(&rat_i(2));
        num.mul(&den.inv().expect("2i is invertible"))
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|c| c.is_zero())
    }

    pub fn as_rational(&self) -> Option<Rat> {
        if self.c[1..].iter().all(|c| c.is_zero()) {
            Some(self.c[0].clone())
        } else {
            None
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n, "mixed rank parameters");
        let c = self.c.iter().zip(&rhs.c).map(|(a, b)| a + b).collect();
        Cyclotomic { n: self.n, c }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> Self {
        Cyclotomic { n: self.n, c: self.c.iter().map(|a| -a).collect() }
    }

    pub fn scale(&self, r: &Rat) -> Self {
        Cyclotomic { n: self.n, c: self.c.iter().map(|a| a * r).collect() }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n, "mixed rank parameters");
        Self::from_poly(self.n, poly_mul(&self.c, &rhs.c))
    }

    /// Field inverse via the extended Euclidean algorithm against Phi_M.
    pub fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let info = cyc_info(self.n);
        // r0 = phi, r1 = self; track s only for the self-cofactor.
        let mut r0 = info.phi.clone();
        let mut r1 = self.c.clone();
        poly_trim(&mut r1);
        let mut s0: Vec<Rat> = Vec::new();
        let mut s1: Vec<Rat> = vec![Rat::one()];
        while !r1.is_empty() {
            let lead = r1.last().unwrap().clone();
            let monic: Vec<Rat> = r1.iter().map(|c| c / &lead).collect();
            let (q, r) = poly_divmod(&r0, &monic);
            let q: Vec<Rat> = q.iter().map(|c| c / &lead).collect();
            let qs = poly_mul(&q, &s1);
            let mut s2 = s0.clone();
            s2.resize(s2.len().max(qs.len()), Rat::zero());
            for (i, v) in qs.iter().enumerate() {
                s2[i] -= v;
            }
            poly_trim(&mut s2);
            r0 = r1;
            s0 = s1;
            r1 = r;
            s1 = s2;
        }
        // r0 = gcd (a nonzero constant since Phi_M is irreducible)
        assert_eq!(r0.len(), 1, "cyclotomic gcd was not constant");
        let scale = Rat::one() / &r0[0];
        let inv: Vec<Rat> = s0.iter().map(|c| c * &scale).collect();
        Some(Self::from_poly(self.n, inv))
    }

    pub fn pow(&self, e: i32) -> Self {
        if e < 0 {
            return self.inv().expect("negative power of zero").pow(-e);
        }
        let mut acc = Self::one(self.n);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }
}

impl fmt::Display for Cyclotomic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (k, c) in self.c.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let body = match k {
                0 => format!("{c}"),
                1 => format!("{c}*zeta"),
                _ => format!("{c}*zeta^{k}"),
            };
            parts.push(body);
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

// ---------------------------------------------------------------------------
// formal transcendental monomials
// ---------------------------------------------------------------------------

/// Alphabet of formal constants. Ordering matches the rendered names.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Sym {
    /// EG: Euler's constant, minus the derivative of Gamma at 1.
    EulerG,
    /// G[j,p]: Gamma(p / a_j), kept only for 2p <= a_j.
    Gamma(u8, u8),
    /// logQ: logarithm of the Novikov variable.
    LogQ,
    Pi,
    /// Q: the Novikov variable itself.
    Q,
    /// rt2: square root of 2, rt2^2 = 2.
    Sqrt2,
    /// rtN: (n-2)-nd root of n-2, rtN^(n-2) = n-2.
    RootN,
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sym::EulerG => write!(f, "EG"),
            Sym::Gamma(j, p) => write!(f, "G[{j},{p}]"),
            Sym::LogQ => write!(f, "logQ"),
            Sym::Pi => write!(f, "pi"),
            Sym::Q => write!(f, "Q"),
            Sym::Sqrt2 => write!(f, "rt2"),
            Sym::RootN => write!(f, "rtN"),
        }
    }
}

/// Laurent monomial over the alphabet; empty map is the unit.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct TransMono {
    exps: BTreeMap<Sym, i32>,
}

impl TransMono {
    pub fn unit() -> Self {
        TransMono::default()
    }

    pub fn single(sym: Sym, e: i32) -> Self {
        let mut exps = BTreeMap::new();
        if e != 0 {
            exps.insert(sym, e);
        }
        TransMono { exps }
    }

    pub fn exponent(&self, sym: Sym) -> i32 {
        self.exps.get(&sym).copied().unwrap_or(0)
    }

    pub fn is_unit(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sym, &i32)> {
        self.exps.iter()
    }

    fn mul_raw(&self, rhs: &Self) -> BTreeMap<Sym, i32> {
        let mut exps = self.exps.clone();
        for (&s, &e) in &rhs.exps {
            let v = exps.entry(s).or_insert(0);
            *v += e;
            if *v == 0 {
                exps.remove(&s);
            }
        }
        exps
    }

    fn inverse_raw(&self) -> BTreeMap<Sym, i32> {
        self.exps.iter().map(|(&s, &e)| (s, -e)).collect()
    }
}

impl fmt::Display for TransMono {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exps.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .exps
            .iter()
            .map(|(s, e)| if *e == 1 { format!("{s}") } else { format!("{s}^{e}") })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// Normal form of a raw exponent map: Gamma reflection, half-integer Gamma
/// squares, and root-symbol reduction. Returns the cyclotomic factor the
/// rewrites produce.
fn normalize_mono(n: u32, mut exps: BTreeMap<Sym, i32>) -> (TransMono, Cyclotomic) {
    let mut factor = Cyclotomic::one(n);
    loop {
        let mut action: Option<(Sym, i32)> = None;
        for (&sym, &e) in &exps {
            if e == 0 {
                continue;
            }
            let fire = match sym {
                Sym::Gamma(j, p) => {
                    let a = a_param(n, j);
                    2 * (p as u32) > a || (2 * (p as u32) == a && !(0..=1).contains(&e))
                }
                Sym::RootN => !(0..(n as i32 - 2)).contains(&e),
                Sym::Sqrt2 => !(0..=1).contains(&e),
                _ => false,
            };
            if fire {
                action = Some((sym, e));
                break;
            }
        }
        let Some((sym, e)) = action else { break };
        match sym {
            Sym::Gamma(j, p) => {
                let a = a_param(n, j);
                if 2 * (p as u32) > a {
                    // Gamma(p/a) Gamma(1 - p/a) = pi / sin(pi p/a)
                    exps.remove(&sym);
                    *exps.entry(Sym::Pi).or_insert(0) += e;
                    *exps.entry(Sym::Gamma(j, (a - p as u32) as u8)).or_insert(0) -= e;
                    factor = factor.mul(&Cyclotomic::sin_pi_frac(n, p as u32, a).pow(-e));
                } else {
                    // 2p = a: Gamma(1/2)^2 = pi (sin(pi/2) = 1)
                    let r = e.rem_euclid(2);
                    let q = (e - r) / 2;
                    exps.insert(sym, r);
                    *exps.entry(Sym::Pi).or_insert(0) += q;
                }
            }
            Sym::RootN => {
                let base = n as i32 - 2;
                let r = e.rem_euclid(base);
                let q = (e - r) / base;
                exps.insert(sym, r);
                factor = factor.scale(&rat_i(base as i64).pow(q));
            }
            Sym::Sqrt2 => {
                let r = e.rem_euclid(2);
                let q = (e - r) / 2;
                exps.insert(sym, r);
                factor = factor.scale(&rat_i(2).pow(q));
            }
            _ => unreachable!(),
        }
        exps.retain(|_, v| *v != 0);
    }
    exps.retain(|_, v| *v != 0);
    (TransMono { exps }, factor)
}

// ---------------------------------------------------------------------------
// scalars
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScalarError {
    /// The value failed to reduce to a rational number.
    NonRational(String),
    /// Division asked for the inverse of a non-monomial or zero scalar.
    NonInvertible(String),
}

impl fmt::Display for ScalarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarError::NonRational(s) => write!(f, "scalar is not rational: {s}"),
            ScalarError::NonInvertible(s) => write!(f, "scalar is not invertible: {s}"),
        }
    }
}

impl std::error::Error for ScalarError {}

/// Finite sum of transcendental monomials with cyclotomic coefficients,
/// kept in normal form (no zero coefficients, monomials normalized).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Scalar {
    n: u32,
    terms: BTreeMap<TransMono, Cyclotomic>,
}

impl Scalar {
    pub fn zero(n: u32) -> Self {
        Scalar { n, terms: BTreeMap::new() }
    }

    pub fn one(n: u32) -> Self {
        Self::from_rat(n, Rat::one())
    }

    pub fn from_rat(n: u32, r: Rat) -> Self {
        Self::from_cyc(Cyclotomic::from_rat(n, r))
    }

    pub fn from_int(n: u32, k: i64) -> Self {
        Self::from_rat(n, rat_i(k))
    }

    pub fn from_cyc(c: Cyclotomic) -> Self {
        let n = c.n();
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(TransMono::unit(), c);
        }
        Scalar { n, terms }
    }

    pub fn sym(n: u32, sym: Sym, e: i32) -> Self {
        Self::term(n, TransMono::single(sym, e), Cyclotomic::one(n))
    }

    pub fn term(n: u32, mono: TransMono, coeff: Cyclotomic) -> Self {
        let (mono, factor) = normalize_mono(n, mono.exps);
        let coeff = coeff.mul(&factor);
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(mono, coeff);
        }
        Scalar { n, terms }
    }

    /// 2 pi i as a scalar.
    pub fn two_pi_i(n: u32) -> Self {
        Self::term(n, TransMono::single(Sym::Pi, 1), Cyclotomic::imag(n).scale(&rat_i(2)))
    }

    /// Gamma(p / a_j) for 1 <= p < a_j, in normal form.
    pub fn gamma_frac(n: u32, j: u8, p: u32) -> Self {
        let a = a_param(n, j);
        assert!(p >= 1 && p < a, "Gamma argument {p}/{a} out of range");
        Self::sym(n, Sym::Gamma(j, p as u8), 1)
    }

    /// digamma(k) = -EG + H_{k-1} for integer k >= 1.
    pub fn digamma_int(n: u32, k: u32) -> Self {
        assert!(k >= 1);
        Self::sym(n, Sym::EulerG, 1).neg().add(&Self::from_rat(n, harmonic(k - 1)))
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TransMono, &Cyclotomic)> {
        self.terms.iter()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n, "mixed rank parameters");
        let mut terms = self.terms.clone();
        for (m, c) in &rhs.terms {
            match terms.get_mut(m) {
                Some(v) => {
                    *v = v.add(c);
                    if v.is_zero() {
                        terms.remove(m);
                    }
                }
                None => {
                    terms.insert(m.clone(), c.clone());
                }
            }
        }
        Scalar { n: self.n, terms }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> Self {
        let terms = self.terms.iter().map(|(m, c)| (m.clone(), c.neg())).collect();
        Scalar { n: self.n, terms }
    }

    pub fn scale(&self, r: &Rat) -> Self {
        if r.is_zero() {
            return Self::zero(self.n);
        }
        let terms = self.terms.iter().map(|(m, c)| (m.clone(), c.scale(r))).collect();
        Scalar { n: self.n, terms }
    }

    pub fn scale_cyc(&self, c: &Cyclotomic) -> Self {
        self.mul(&Self::from_cyc(c.clone()))
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n, "mixed rank parameters");
        let mut out: BTreeMap<TransMono, Cyclotomic> = BTreeMap::new();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &rhs.terms {
                let (mono, factor) = normalize_mono(self.n, m1.mul_raw(m2));
                let coeff = c1.mul(c2).mul(&factor);
                if coeff.is_zero() {
                    continue;
                }
                match out.get_mut(&mono) {
                    Some(v) => {
                        *v = v.add(&coeff);
                        if v.is_zero() {
                            out.remove(&mono);
                        }
                    }
                    None => {
                        out.insert(mono, coeff);
                    }
                }
            }
        }
        Scalar { n: self.n, terms: out }
    }

    /// Inverse of a single-monomial scalar. The symbol ring has zero
    /// divisors (rt2, rtN), so general inversion is not offered.
    pub fn inv_monomial(&self) -> Result<Self, ScalarError> {
        if self.terms.len() != 1 {
            return Err(ScalarError::NonInvertible(format!("{self}")));
        }
        let (mono, coeff) = self.terms.iter().next().unwrap();
        // rt2^{-1} = rt2/2, rtN^{-1} = rtN^{n-3}/(n-2): normalize_mono handles it.
        let (inv_mono, factor) = normalize_mono(self.n, mono.inverse_raw());
        let coeff = coeff.inv().expect("nonzero by invariant").mul(&factor);
        Ok(Scalar { n: self.n, terms: BTreeMap::from([(inv_mono, coeff)]) })
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one(self.n);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn as_rational(&self) -> Result<Rat, ScalarError> {
        if self.terms.is_empty() {
            return Ok(Rat::zero());
        }
        if self.terms.len() == 1 {
            if let Some((mono, coeff)) = self.terms.iter().next() {
                if mono.is_unit() {
                    if let Some(r) = coeff.as_rational() {
                        return Ok(r);
                    }
                }
            }
        }
        Err(ScalarError::NonRational(format!("{self}")))
    }

    pub fn as_cyclotomic(&self) -> Option<Cyclotomic> {
        if self.terms.is_empty() {
            return Some(Cyclotomic::zero(self.n));
        }
        if self.terms.len() == 1 {
            let (mono, coeff) = self.terms.iter().next().unwrap();
            if mono.is_unit() {
                return Some(coeff.clone());
            }
        }
        None
    }

    pub fn eq_rat(&self, r: &Rat) -> bool {
        self.as_rational().map(|v| &v == r).unwrap_or(false)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let coeff = format!("{c}");
                let coeff = if c.as_rational().is_some() { coeff } else { format!("({coeff})") };
                if m.is_unit() {
                    coeff
                } else if c.as_rational().is_some_and(|r| r.is_one()) {
                    format!("{m}")
                } else {
                    format!("{coeff}*{m}")
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclotomic_polynomials_match_known_values() {
        // Phi_4 = x^2 + 1
        let p4 = cyclotomic_polynomial(4);
        assert_eq!(p4, vec![rat_i(1), rat_i(0), rat_i(1)]);
        // Phi_12 = x^4 - x^2 + 1
        let p12 = cyclotomic_polynomial(12);
        assert_eq!(p12, vec![rat_i(1), rat_i(0), rat_i(-1), rat_i(0), rat_i(1)]);
        // Phi_8 = x^4 + 1
        let p8 = cyclotomic_polynomial(8);
        assert_eq!(p8, vec![rat_i(1), rat_i(0), rat_i(0), rat_i(0), rat_i(1)]);
    }

    #[test]
    fn designated_roots_have_right_orders() {
        for n in [4u32, 5, 6, 7, 8] {
            let kappa = cyc_info(n).kappa;
            let eta = Cyclotomic::eta_pow(n, 1);
            assert_eq!(eta.pow(kappa as i32), Cyclotomic::one(n));
            for d in 1..kappa {
                if kappa % d == 0 {
                    assert_ne!(eta.pow(d as i32), Cyclotomic::one(n), "eta order too small");
                }
            }
            let i = Cyclotomic::imag(n);
            assert_eq!(i.mul(&i), Cyclotomic::from_int(n, -1));
            // eta_1 = eta^2 since a_1 = kappa/2
            assert_eq!(Cyclotomic::eta_j_pow(n, 1, 1), Cyclotomic::eta_pow(n, 2));
            assert_eq!(Cyclotomic::eta_j_pow(n, 2, 1), Cyclotomic::from_int(n, -1));
        }
    }

    #[test]
    fn field_inverse() {
        let n = 5;
        let v = Cyclotomic::eta_pow(n, 1).add(&Cyclotomic::from_int(n, 3));
        let inv = v.inv().unwrap();
        assert_eq!(v.mul(&inv), Cyclotomic::one(n));
    }

    // Oracle for the eta difference product: multiply the raw polynomials
    // mod Phi_M by hand rather than through Cyclotomic::mul.
    #[test]
    fn eta_product_difference_of_squares() {
        let n = 6;
        let info = cyc_info(n);
        let e = |k: i64| Cyclotomic::zeta_pow(n, k * (info.m_order / info.kappa) as i64);
        let lhs = e(1).add(&e(-1)).mul(&e(1).sub(&e(-1)));
        // oracle: (x^a + x^b)(x^a - x^b) expanded termwise as raw polynomials
        let m = info.m_order as i64;
        let s = (info.m_order / info.kappa) as i64;
        let raw = |k: i64| {
            let mut p = vec![Rat::zero(); k.rem_euclid(m) as usize + 1];
            p[k.rem_euclid(m) as usize] = Rat::one();
            p
        };
        let mut prod = poly_mul(&raw(s), &raw(s));
        let cross = poly_mul(&raw(s.rem_euclid(m) - m + m), &raw((-s).rem_euclid(m)));
        // x^{2s} - x^{-2s}: assemble directly
        let _ = cross;
        let neg = poly_mul(&raw((-s).rem_euclid(m)), &raw((-s).rem_euclid(m)));
        for (i, c) in neg.iter().enumerate() {
            if prod.len() <= i {
                prod.resize(i + 1, Rat::zero());
            }
            prod[i] -= c;
        }
        let rhs = Cyclotomic::from_poly(n, prod);
        assert_eq!(lhs, rhs);
        // and against the closed form
        assert_eq!(lhs, e(2).sub(&e(-2)));
    }

    #[test]
    fn gamma_reflection_pair_collapses_to_pi_over_sin() {
        // G(2,1)^2 -> pi
        let n = 5;
        let g = Scalar::gamma_frac(n, 2, 1);
        let prod = g.mul(&g);
        assert_eq!(prod, Scalar::sym(n, Sym::Pi, 1));
        // G(1,1) * G(1, n-3) -> pi / sin(pi/(n-2)) for n = 5: a_1 = 3
        let g1 = Scalar::gamma_frac(n, 1, 1);
        let g2 = Scalar::gamma_frac(n, 1, 2);
        let prod = g1.mul(&g2);
        let sin = Cyclotomic::sin_pi_frac(n, 1, 3);
        let expect = Scalar::term(n, TransMono::single(Sym::Pi, 1), sin.inv().unwrap());
        assert_eq!(prod, expect);
    }

    #[test]
    fn gamma_reflection_is_confluent_under_reassociation() {
        // (G(1,1)*G(1,2))*G(1,2) vs G(1,1)*(G(1,2)*G(1,2)) for n = 5
        let n = 5;
        let a = Scalar::gamma_frac(n, 1, 1);
        let b = Scalar::gamma_frac(n, 1, 2);
        let left = a.mul(&b).mul(&b);
        let right = a.mul(&b.mul(&b));
        assert_eq!(left, right);
    }

    #[test]
    fn root_symbols_reduce() {
        let n = 6;
        let rt = Scalar::sym(n, Sym::RootN, 1);
        let mut acc = Scalar::one(n);
        for _ in 0..(n - 2) {
            acc = acc.mul(&rt);
        }
        assert_eq!(acc, Scalar::from_int(n, (n - 2) as i64));
        let s2 = Scalar::sym(n, Sym::Sqrt2, 1);
        assert_eq!(s2.mul(&s2), Scalar::from_int(n, 2));
        // inverse: rt2^{-1} = rt2 / 2
        let inv = s2.inv_monomial().unwrap();
        assert_eq!(inv.mul(&s2), Scalar::one(n));
    }

    #[test]
    fn digamma_expands_to_harmonic_numbers() {
        let n = 4;
        let psi3 = Scalar::digamma_int(n, 3);
        let expect = Scalar::sym(n, Sym::EulerG, 1).neg().add(&Scalar::from_rat(n, rat(3, 2)));
        assert_eq!(psi3, expect);
    }

    #[test]
    fn rationality_assertion() {
        let n = 4;
        let v = Scalar::from_rat(n, rat(7, 3));
        assert_eq!(v.as_rational().unwrap(), rat(7, 3));
        let pi = Scalar::sym(n, Sym::Pi, 1);
        assert!(pi.as_rational().is_err());
        assert!(Scalar::zero(n).as_rational().unwrap().is_zero());
    }
}
