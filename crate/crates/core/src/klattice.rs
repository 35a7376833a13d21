//! The Grothendieck ring of the target orbifold curve, its degree-2
//! cohomology model, and the maps between them.
//!
//! The ring K is Z[L1,L2,L3] modulo L_i^{a_i} = L_j^{a_j} =: L and
//! (L_i - 1)(L_j - 1) = 0 for i != j, with a_1 = n-2, a_2 = a_3 = 2. As a
//! module it is free of rank n+1 on B = {1, L1, ..., L1^{n-3}, L2, L3, L};
//! scalars are extended to Q because the orthonormal eps-vectors are
//! half-integral.
//!
//! The cohomology side H has basis phi_{0,0}, phi_{0,1}, phi_{1,1..n-3},
//! phi_{2,1}, phi_{3,1} with the orbifold Poincare pairing
//! (phi_{i,p}, phi_{j,q}) = delta_{ij} delta_{p+q,a_i} / a_i, the grading
//! operator theta with eigenvalue 1/2 - p/a_i, and the nilpotent rho mapping
//! phi_{0,0} to phi_{0,1}/(n-2).

use crate::scalars::{a_param, rat, rat_i, Cyclotomic, Rat, Scalar, ScalarError, Sym, TransMono};
use num::{One, Zero};
use std::fmt;

/// Basis element of K, in the order unit, L1^1..L1^(n-3), L2, L3, L.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BElem {
    Unit,
    L1(u32),
    L2,
    L3,
    LBig,
}

pub fn basis_size(n: u32) -> usize {
    (n + 1) as usize
}

pub fn basis_elem(n: u32, idx: usize) -> BElem {
    let n = n as usize;
    match idx {
        0 => BElem::Unit,
        k if (1..=n - 3).contains(&k) => BElem::L1(k as u32),
        k if k == n - 2 => BElem::L2,
        k if k == n - 1 => BElem::L3,
        k if k == n => BElem::LBig,
        _ => panic!("basis index {idx} out of range"),
    }
}

fn elem_index(n: u32, e: BElem) -> usize {
    let n = n as usize;
    match e {
        BElem::Unit => 0,
        BElem::L1(k) => {
            assert!((1..=n as u32 - 3).contains(&k), "L1 power {k} not a basis element");
            k as usize
        }
        BElem::L2 => n - 2,
        BElem::L3 => n - 1,
        BElem::LBig => n,
    }
}

/// Element of K with rational coefficients over the fixed basis.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct KClass {
    n: u32,
    c: Vec<Rat>,
}

impl KClass {
    pub fn zero(n: u32) -> Self {
        KClass { n, c: vec![Rat::zero(); basis_size(n)] }
    }

    pub fn unit(n: u32) -> Self {
        Self::basis(n, BElem::Unit)
    }

    pub fn basis(n: u32, e: BElem) -> Self {
        let mut v = Self::zero(n);
        v.c[elem_index(n, e)] = Rat::one();
        v
    }

    pub fn from_coeffs(n: u32, c: Vec<Rat>) -> Self {
        assert_eq!(c.len(), basis_size(n));
        KClass { n, c }
    }

    /// L1^k for any k >= 0, reduced to the basis.
    pub fn l1_pow(n: u32, k: u32) -> Self {
        let mut v = Self::zero(n);
        add_l1_power(&mut v, k, &Rat::one());
        v
    }

    /// The class of the tangent bundle, L1 + L2 + L3 - L - 1.
    pub fn tangent(n: u32) -> Self {
        let mut v = Self::zero(n);
        v.c[elem_index(n, BElem::L1(1))] = Rat::one();
        v.c[elem_index(n, BElem::L2)] = Rat::one();
        v.c[elem_index(n, BElem::L3)] = Rat::one();
        v.c[elem_index(n, BElem::LBig)] = -Rat::one();
        v.c[0] = -Rat::one();
        v
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }

    pub fn is_integral(&self) -> bool {
        self.c.iter().all(|x| x.is_integer())
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let c = self.c.iter().zip(&rhs.c).map(|(a, b)| a + b).collect();
        KClass { n: self.n, c }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> Self {
        KClass { n: self.n, c: self.c.iter().map(|a| -a).collect() }
    }

    pub fn scale(&self, r: &Rat) -> Self {
        KClass { n: self.n, c: self.c.iter().map(|a| a * r).collect() }
    }
}

impl fmt::Display for KClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..basis_size(self.n))
            .map(|i| match basis_elem(self.n, i) {
                BElem::Unit => "1".into(),
                BElem::L1(1) => "L1".into(),
                BElem::L1(k) => format!("L1^{k}"),
                BElem::L2 => "L2".into(),
                BElem::L3 => "L3".into(),
                BElem::LBig => "L".into(),
            })
            .collect();
        let mut parts = Vec::new();
        for (i, coeff) in self.c.iter().enumerate() {
            if coeff.is_zero() {
                continue;
            }
            if coeff.is_one() && i != 0 {
                parts.push(names[i].clone());
            } else if i == 0 {
                parts.push(format!("{coeff}"));
            } else {
                parts.push(format!("{coeff}*{}", names[i]));
            }
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

/// Accumulate coeff * L1^k into v, reducing high powers by
/// L1^((n-2)q + s) = L1^s + qL - q (s >= 1) and L1^((n-2)q) = qL - (q-1).
fn add_l1_power(v: &mut KClass, k: u32, coeff: &Rat) {
    let n = v.n;
    let base = n - 2;
    let q = (k / base) as i64;
    let s = k % base;
    if s == 0 {
        if q == 0 {
            v.c[0] += coeff;
        } else {
            v.c[elem_index(n, BElem::LBig)] += coeff * rat_i(q);
            v.c[0] -= coeff * rat_i(q - 1);
        }
    } else {
        // 1 <= s <= n-3, a basis slot
        v.c[elem_index(n, BElem::L1(s))] += coeff;
        if q > 0 {
            v.c[elem_index(n, BElem::LBig)] += coeff * rat_i(q);
            v.c[0] -= coeff * rat_i(q);
        }
    }
}

/// Product of two basis elements, reduced to the basis. Cross-family
/// products use x*y = x + y - 1, valid because (x-1)(y-1) = 0 whenever x, y
/// are powers of distinct generators.
fn basis_product(n: u32, a: BElem, b: BElem) -> KClass {
    let cross = |x: BElem, y: BElem| {
        let mut v = KClass::basis(n, x);
        v = v.add(&KClass::basis(n, y));
        v.c[0] -= Rat::one();
        v
    };
    match (a, b) {
        (BElem::Unit, e) | (e, BElem::Unit) => KClass::basis(n, e),
        (BElem::L1(p), BElem::L1(q)) => KClass::l1_pow(n, p + q),
        (BElem::L1(p), BElem::LBig) | (BElem::LBig, BElem::L1(p)) => {
            KClass::l1_pow(n, p + (n - 2))
        }
        (BElem::L2, BElem::L2) | (BElem::L3, BElem::L3) => KClass::basis(n, BElem::LBig),
        (BElem::LBig, BElem::LBig) => {
            let mut v = KClass::basis(n, BElem::LBig).scale(&rat_i(2));
            v.c[0] -= Rat::one();
            v
        }
        (x, y) => cross(x, y),
    }
}

pub fn k_mul(a: &KClass, b: &KClass) -> KClass {
    assert_eq!(a.n, b.n);
    let n = a.n;
    let mut out = KClass::zero(n);
    for (i, ca) in a.c.iter().enumerate() {
        if ca.is_zero() {
            continue;
        }
        for (j, cb) in b.c.iter().enumerate() {
            if cb.is_zero() {
                continue;
            }
            let prod = basis_product(n, basis_elem(n, i), basis_elem(n, j));
            let w = ca * cb;
            for (k, pc) in prod.c.iter().enumerate() {
                if !pc.is_zero() {
                    out.c[k] += pc * &w;
                }
            }
        }
    }
    out
}

pub fn k_pow(a: &KClass, e: u32) -> KClass {
    let mut acc = KClass::unit(a.n);
    for _ in 0..e {
        acc = k_mul(&acc, a);
    }
    acc
}

// ---------------------------------------------------------------------------
// rank, degree, twisted characters
// ---------------------------------------------------------------------------

pub fn rank(a: &KClass) -> Rat {
    a.c.iter().sum()
}

fn basis_degree(n: u32, e: BElem) -> Rat {
    match e {
        BElem::Unit => Rat::zero(),
        BElem::L1(k) => rat(k as i64, (n - 2) as i64),
        BElem::L2 | BElem::L3 => rat(1, 2),
        BElem::LBig => Rat::one(),
    }
}

pub fn degree(a: &KClass) -> Rat {
    let mut acc = Rat::zero();
    for (i, c) in a.c.iter().enumerate() {
        if !c.is_zero() {
            acc += c * basis_degree(a.n, basis_elem(a.n, i));
        }
    }
    acc
}

/// chi_{j,p} on a basis element: the character value eta_j^{-p e_j} where
/// e_j is the exponent of the j-th generator in the element.
fn basis_chi(n: u32, j: u8, p: u32, e: BElem) -> Cyclotomic {
    let pow = match (j, e) {
        (1, BElem::L1(k)) => -((p * k) as i64),
        (2, BElem::L2) | (3, BElem::L3) => -(p as i64),
        // L = L_j^{a_j}: character value 1; likewise for all cross cases.
        _ => 0,
    };
    Cyclotomic::eta_j_pow(n, j, pow)
}

pub fn chi(j: u8, p: u32, a: &KClass) -> Cyclotomic {
    let n = a.n;
    assert!((1..=3).contains(&j) && p >= 1 && p < a_param(n, j), "chi index out of range");
    let mut acc = Cyclotomic::zero(n);
    for (i, c) in a.c.iter().enumerate() {
        if !c.is_zero() {
            acc = acc.add(&basis_chi(n, j, p, basis_elem(n, i)).scale(c));
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// cohomology vectors
// ---------------------------------------------------------------------------

/// Index pairs (i, p) of the phi-basis, in storage order.
pub fn phi_index_pairs(n: u32) -> Vec<(u8, u32)> {
    let mut v = vec![(0u8, 0u32), (0, 1)];
    for p in 1..=(n - 3) {
        v.push((1, p));
    }
    v.push((2, 1));
    v.push((3, 1));
    v
}

fn phi_slot(n: u32, i: u8, p: u32) -> usize {
    match (i, p) {
        (0, 0) => 0,
        (0, 1) => 1,
        (1, p) if (1..=n - 3).contains(&p) => 1 + p as usize,
        (2, 1) => (n - 1) as usize,
        (3, 1) => n as usize,
        _ => panic!("phi index ({i},{p}) out of range"),
    }
}

/// Vector in the cohomology model with Scalar components.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CohVector {
    n: u32,
    comp: Vec<Scalar>,
}

impl CohVector {
    pub fn zero(n: u32) -> Self {
        CohVector { n, comp: vec![Scalar::zero(n); basis_size(n)] }
    }

    pub fn phi(n: u32, i: u8, p: u32) -> Self {
        let mut v = Self::zero(n);
        v.comp[phi_slot(n, i, p)] = Scalar::one(n);
        v
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn component(&self, i: u8, p: u32) -> &Scalar {
        &self.comp[phi_slot(self.n, i, p)]
    }

    pub fn set_component(&mut self, i: u8, p: u32, v: Scalar) {
        self.comp[phi_slot(self.n, i, p)] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.comp.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let comp = self.comp.iter().zip(&rhs.comp).map(|(a, b)| a.add(b)).collect();
        CohVector { n: self.n, comp }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> Self {
        CohVector { n: self.n, comp: self.comp.iter().map(|a| a.neg()).collect() }
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        CohVector { n: self.n, comp: self.comp.iter().map(|a| a.mul(s)).collect() }
    }

    /// theta, diagonal with eigenvalue 1/2 - p/a_i on phi_{i,p} (a_0 = 1).
    pub fn theta_apply(&self) -> Self {
        let mut out = self.clone();
        for (i, p) in phi_index_pairs(self.n) {
            let ev = rat(1, 2) - rat(p as i64, a_param(self.n, i) as i64);
            let slot = phi_slot(self.n, i, p);
            out.comp[slot] = self.comp[slot].scale(&ev);
        }
        out
    }

    /// rho, sending phi_{0,0} to phi_{0,1}/(n-2) and everything else to 0.
    pub fn rho_apply(&self) -> Self {
        let mut out = Self::zero(self.n);
        let v = self.component(0, 0).scale(&rat(1, (self.n - 2) as i64));
        out.set_component(0, 1, v);
        out
    }

    /// e^{pi i theta}: diagonal with exact root-of-unity entries.
    pub fn exp_pi_i_theta(&self, sign: i64) -> Self {
        let n = self.n;
        let mut out = self.clone();
        for (i, p) in phi_index_pairs(n) {
            // e^{sign*pi i (1/2 - p/a_i)} = i^{sign} * zeta_{2a_i}^{-sign*p}
            let a = a_param(n, i);
            let root = Cyclotomic::root_of_unity(n, 4, sign)
                .mul(&Cyclotomic::root_of_unity(n, 2 * a, -sign * p as i64));
            let slot = phi_slot(n, i, p);
            out.comp[slot] = self.comp[slot].scale_cyc(&root);
        }
        out
    }

    /// e^{pi i rho} = 1 + pi i rho exactly.
    pub fn exp_pi_i_rho(&self) -> Self {
        let n = self.n;
        let pi_i = Scalar::term(
            n,
            TransMono::single(Sym::Pi, 1),
            Cyclotomic::imag(n),
        );
        self.add(&self.rho_apply().scale(&pi_i))
    }

    /// Classical monodromy on H: phi_{0,0} gains (2 pi i/(n-2)) phi_{0,1},
    /// twisted sectors rotate by eta_i^{-p} (inverse uses eta_i^{p}).
    pub fn sigma_h(&self, inverse: bool) -> Self {
        let n = self.n;
        let sgn: i64 = if inverse { -1 } else { 1 };
        let mut out = self.clone();
        for (i, p) in phi_index_pairs(n) {
            if i == 0 {
                continue;
            }
            let slot = phi_slot(n, i, p);
            out.comp[slot] = self.comp[slot]
                .scale_cyc(&Cyclotomic::eta_j_pow(n, i, -sgn * p as i64));
        }
        let two_pi_i = Scalar::two_pi_i(n).scale(&rat(sgn, (n - 2) as i64));
        let extra = self.component(0, 0).mul(&two_pi_i);
        let slot = phi_slot(n, 0, 1);
        out.comp[slot] = out.comp[slot].add(&extra);
        out
    }
}

/// Orbifold Poincare pairing.
pub fn poincare(u: &CohVector, v: &CohVector) -> Scalar {
    assert_eq!(u.n, v.n);
    let n = u.n;
    let mut acc = Scalar::zero(n);
    for (i, p) in phi_index_pairs(n) {
        let a = a_param(n, i);
        // partner of (0,0) is (0,1) and vice versa; of (i,p) is (i, a_i - p)
        let (pi, pp) = if i == 0 { (0u8, 1 - p) } else { (i, a - p) };
        let w = u.component(i, p).mul(v.component(pi, pp)).scale(&rat(1, a as i64));
        acc = acc.add(&w);
    }
    acc
}

/// Euler-type pairing on H: (1/2pi)(a, e^{pi i theta} e^{pi i rho} b).
pub fn euler_pair_h(a: &CohVector, b: &CohVector) -> Scalar {
    let n = a.n;
    let tw = b.exp_pi_i_rho().exp_pi_i_theta(1);
    let inv_two_pi = Scalar::term(
        n,
        TransMono::single(Sym::Pi, -1),
        Cyclotomic::from_rat(n, rat(1, 2)),
    );
    poincare(a, &tw).mul(&inv_two_pi)
}

/// Symmetrized pairing on H.
pub fn inter_pair_h(a: &CohVector, b: &CohVector) -> Scalar {
    euler_pair_h(a, b).add(&euler_pair_h(b, a))
}

// ---------------------------------------------------------------------------
// the lattice-to-cohomology map
// ---------------------------------------------------------------------------

/// The map identifying K (x) C with H: rank and degree go to the untwisted
/// sector with the Gamma-class factor, the characters to the twisted ones.
pub fn psi_map(a: &KClass) -> CohVector {
    let n = a.n;
    let mut out = CohVector::zero(n);
    let rk = rank(a);
    let dg = degree(a);
    out.set_component(0, 0, Scalar::from_rat(n, rk.clone()));
    // -(rk/(n-2)) gamma + 2 pi i deg, gamma = EG + (n-2) logQ
    let gamma = Scalar::sym(n, Sym::EulerG, 1)
        .add(&Scalar::sym(n, Sym::LogQ, 1).scale(&rat_i((n - 2) as i64)));
    let p_comp = gamma
        .scale(&(-rk / rat_i((n - 2) as i64)))
        .add(&Scalar::two_pi_i(n).scale(&dg));
    out.set_component(0, 1, p_comp);
    for (j, p) in phi_index_pairs(n) {
        if j == 0 {
            continue;
        }
        let aj = a_param(n, j);
        // Gamma(1 - p/a_j) = Gamma((a_j - p)/a_j)
        let gfac = Scalar::term(
            n,
            TransMono::single(Sym::Gamma(j, (aj - p) as u8), 1),
            chi(j, p, a),
        );
        out.set_component(j, p, gfac);
    }
    out
}

/// Euler pairing on K, computed through the cohomology model; the
/// transcendental symbols must cancel, leaving a rational number.
pub fn euler_pair(a: &KClass, b: &KClass) -> Result<Rat, ScalarError> {
    euler_pair_h(&psi_map(a), &psi_map(b)).as_rational()
}

/// Symmetrization of the Euler pairing.
pub fn inter_pair(a: &KClass, b: &KClass) -> Result<Rat, ScalarError> {
    Ok(euler_pair(a, b)? + euler_pair(b, a)?)
}

// ---------------------------------------------------------------------------
// monodromy and the root system
// ---------------------------------------------------------------------------

/// Classical monodromy on K: multiplication by the tangent class.
pub fn sigma(a: &KClass) -> KClass {
    k_mul(a, &KClass::tangent(a.n))
}

/// Inverse monodromy: multiplication by the ring inverse of the tangent
/// class (the dualizing sheaf), computed by solving the linear system once.
pub fn sigma_inv(a: &KClass) -> KClass {
    k_mul(a, &tangent_inverse(a.n))
}

fn tangent_inverse(n: u32) -> KClass {
    let dim = basis_size(n);
    // columns of M are tangent * basis_elem
    let t = KClass::tangent(n);
    let mut m = vec![vec![Rat::zero(); dim]; dim];
    for j in 0..dim {
        let col = k_mul(&t, &KClass::basis(n, basis_elem(n, j)));
        for i in 0..dim {
            m[i][j] = col.c[i].clone();
        }
    }
    let mut rhs = vec![Rat::zero(); dim];
    rhs[0] = Rat::one();
    let sol = solve_linear(m, rhs).expect("tangent class is invertible");
    KClass::from_coeffs(n, sol)
}

/// Gaussian elimination over Q.
fn solve_linear(mut m: Vec<Vec<Rat>>, mut b: Vec<Rat>) -> Option<Vec<Rat>> {
    let dim = b.len();
    for col in 0..dim {
        let piv = (col..dim).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        b.swap(col, piv);
        let inv = Rat::one() / m[col][col].clone();
        for x in m[col].iter_mut() {
            *x *= &inv;
        }
        b[col] *= &inv;
        for r in 0..dim {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for cc in 0..dim {
                    let v = &m[col][cc] * &f;
                    m[r][cc] -= v;
                }
                let v = &b[col] * &f;
                b[r] -= v;
            }
        }
    }
    Some(b)
}

/// Labels for the orthonormal eps-vectors.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct EpsLabel {
    pub family: u8,
    pub index: u32,
}

pub fn eps_labels(n: u32) -> Vec<EpsLabel> {
    let mut v: Vec<EpsLabel> =
        (1..=n - 2).map(|i| EpsLabel { family: 1, index: i }).collect();
    v.push(EpsLabel { family: 2, index: 1 });
    v.push(EpsLabel { family: 3, index: 1 });
    v
}

/// eps^1_i = L1^i + (L2+L3)/2 - 1, eps^2_1 = (L2+L3)/2 - 1,
/// eps^3_1 = (L2-L3)/2.
pub fn eps_vector(n: u32, label: EpsLabel) -> KClass {
    let half = rat(1, 2);
    let l2 = KClass::basis(n, BElem::L2);
    let l3 = KClass::basis(n, BElem::L3);
    match label {
        EpsLabel { family: 1, index: i } => {
            assert!((1..=n - 2).contains(&i));
            let mut v = KClass::l1_pow(n, i);
            v = v.add(&l2.add(&l3).scale(&half));
            v.c[0] -= Rat::one();
            v
        }
        EpsLabel { family: 2, index: 1 } => {
            let mut v = l2.add(&l3).scale(&half);
            v.c[0] -= Rat::one();
            v
        }
        EpsLabel { family: 3, index: 1 } => l2.sub(&l3).scale(&half),
        _ => panic!("unknown eps label"),
    }
}

/// All roots +-(eps_a +- eps_b) + m(L-1), (a) != (b), |m| <= m_range.
pub fn reflection_vectors(n: u32, m_range: i64) -> Vec<KClass> {
    let labels = eps_labels(n);
    let l_minus_1 = {
        let mut v = KClass::basis(n, BElem::LBig);
        v.c[0] -= Rat::one();
        v
    };
    let mut out = Vec::new();
    for (ai, a) in labels.iter().enumerate() {
        for (bi, b) in labels.iter().enumerate() {
            if ai == bi {
                continue;
            }
            let ea = eps_vector(n, *a);
            let eb = eps_vector(n, *b);
            for diff in [ea.add(&eb), ea.sub(&eb)] {
                for signed in [diff.clone(), diff.neg()] {
                    for m in -m_range..=m_range {
                        let v = signed.add(&l_minus_1.scale(&rat_i(m)));
                        if !out.contains(&v) {
                            out.push(v);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Canonical representative modulo integer multiples of (L - 1): shift the
/// L-coefficient to zero (legitimate because it is an integer for every
/// root).
pub fn canonical_mod_l_minus_1(v: &KClass) -> KClass {
    let n = v.n;
    let l_idx = elem_index(n, BElem::LBig);
    let t = v.c[l_idx].clone();
    assert!(t.is_integer(), "L-coefficient not integral; class not in the root lattice");
    let mut out = v.clone();
    out.c[l_idx] = Rat::zero();
    out.c[0] += t;
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotARoot(pub String);

impl fmt::Display for NotARoot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "class has self-pairing != 2: {}", self.0)
    }
}

impl std::error::Error for NotARoot {}

/// Reflection x - (a|x) a in the root a.
pub fn reflect(a: &KClass, x: &KClass) -> Result<KClass, NotARoot> {
    let aa = inter_pair(a, a).map_err(|e| NotARoot(e.to_string()))?;
    if aa != rat_i(2) {
        return Err(NotARoot(format!("{a}")));
    }
    let ax = inter_pair(a, x).map_err(|e| NotARoot(e.to_string()))?;
    Ok(x.sub(&a.scale(&ax)))
}

/// sigma-average (1/kappa) sum_{s<kappa} sigma^s(beta).
pub fn beta_zero(beta: &KClass) -> KClass {
    let n = beta.n;
    let kappa = 2 * (n - 2);
    let mut acc = KClass::zero(n);
    let mut cur = beta.clone();
    for _ in 0..kappa {
        acc = acc.add(&cur);
        cur = sigma(&cur);
    }
    acc.scale(&rat(1, kappa as i64))
}

pub fn beta_twisted(beta: &KClass) -> KClass {
    beta.sub(&beta_zero(beta))
}
