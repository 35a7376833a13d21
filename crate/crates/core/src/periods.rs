//! Calibrated periods: for every class alpha and integer m a vector-valued
//! expression I~^(m)_alpha(lambda) whose components are finite sums
//! c * lambda^r (log lambda)^e with kappa*r integral and e in {0,1}.
//!
//! Negative m comes from the closed form; nonnegative m is produced by exact
//! lambda-differentiation, never by antidifferentiation. log lambda is a
//! formal symbol: analytic continuation around lambda = infinity is the
//! substitution log lambda -> log lambda + 2 pi i, lambda^r -> e^{2 pi i r}
//! lambda^r, and it must reproduce the period of the monodromy image sigma
//! alpha.

use crate::klattice::{chi, degree, phi_index_pairs, rank, CohVector, KClass};
use crate::scalars::{a_param, rat, rat_i, Cyclotomic, harmonic, Rat, Scalar, Sym, TransMono};
use num::{One, Zero};
use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

pub fn kappa(n: u32) -> i64 {
    2 * (n as i64 - 2)
}

/// Finite sum of c * lambda^(kr/kappa) (log lambda)^e, keyed by (kr, e).
/// `window`, when present, is the retained range of kr: terms outside have
/// been dropped and arithmetic propagates the window.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PuiseuxLog {
    n: u32,
    terms: BTreeMap<(i64, u8), Scalar>,
    window: Option<(i64, i64)>,
}

impl PuiseuxLog {
    pub fn zero(n: u32) -> Self {
        PuiseuxLog { n, terms: BTreeMap::new(), window: None }
    }

    pub fn term(n: u32, kr: i64, e: u8, coeff: Scalar) -> Self {
        assert!(e <= 1, "log exponent above 1 never appears");
        let mut p = Self::zero(n);
        p.add_term(kr, e, coeff);
        p
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn window(&self) -> Option<(i64, i64)> {
        self.window
    }

    fn in_window(&self, kr: i64) -> bool {
        match self.window {
            None => true,
            Some((lo, hi)) => (lo..=hi).contains(&kr),
        }
    }

    pub fn add_term(&mut self, kr: i64, e: u8, coeff: Scalar) {
        assert!(e <= 1);
        if coeff.is_zero() || !self.in_window(kr) {
            return;
        }
        let slot = self.terms.entry((kr, e)).or_insert_with(|| Scalar::zero(self.n));
        *slot = slot.add(&coeff);
        if slot.is_zero() {
            self.terms.remove(&(kr, e));
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, u8, &Scalar)> {
        self.terms.iter().map(|(&(kr, e), c)| (kr, e, c))
    }

    pub fn coeff(&self, kr: i64, e: u8) -> Scalar {
        self.terms.get(&(kr, e)).cloned().unwrap_or_else(|| Scalar::zero(self.n))
    }

    pub fn truncated(&self, lo: i64, hi: i64) -> Self {
        let mut out = Self::zero(self.n);
        out.window = Some(match self.window {
            None => (lo, hi),
            Some((a, b)) => (lo.max(a), hi.min(b)),
        });
        for (kr, e, c) in self.terms() {
            out.add_term(kr, e, c.clone());
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let window = match (self.window, rhs.window) {
            (None, w) | (w, None) => w,
            (Some((a, b)), Some((c, d))) => Some((a.max(c), b.min(d))),
        };
        let mut out = PuiseuxLog { n: self.n, terms: BTreeMap::new(), window };
        for (kr, e, c) in self.terms().chain(rhs.terms()) {
            out.add_term(kr, e, c.clone());
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
        let mut out = PuiseuxLog { n: self.n, terms: BTreeMap::new(), window: self.window };
        for (kr, e, c) in self.terms() {
            out.add_term(kr, e, c.mul(s));
        }
        out
    }

    /// Shift by a power of lambda: multiply by lambda^(dkr/kappa).
    pub fn shift(&self, dkr: i64) -> Self {
        let window = self.window.map(|(a, b)| (a + dkr, b + dkr));
        let mut out = PuiseuxLog { n: self.n, terms: BTreeMap::new(), window };
        for (kr, e, c) in self.terms() {
            out.add_term(kr + dkr, e, c.clone());
        }
        out
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        // truncated-Laurent rule: a factor without a window is exact, so only
        // its lower support shifts the other factor's truncation bound
        let lower = |p: &Self| -> i64 {
            p.window
                .map(|w| w.0)
                .or_else(|| p.terms.keys().map(|k| k.0).min())
                .unwrap_or(0)
        };
        let window = match (self.window, rhs.window) {
            (None, None) => None,
            (Some((a, b)), None) => Some((a + lower(rhs), b + lower(rhs))),
            (None, Some((c, d))) => Some((c + lower(self), d + lower(self))),
            (Some((a, b)), Some((c, d))) => Some((a + c, (b + c).min(d + a))),
        };
        let mut out = PuiseuxLog { n: self.n, terms: BTreeMap::new(), window };
        for (k1, e1, c1) in self.terms() {
            for (k2, e2, c2) in rhs.terms() {
                assert!(e1 + e2 <= 1, "(log lambda)^2 must not appear");
                out.add_term(k1 + k2, e1 + e2, c1.mul(c2));
            }
        }
        out
    }

    /// Exact d/d lambda.
    pub fn diff(&self) -> Self {
        let n = self.n;
        let k = kappa(n);
        let window = self.window.map(|(a, b)| (a - k, b - k));
        let mut out = PuiseuxLog { n, terms: BTreeMap::new(), window };
        for (kr, e, c) in self.terms() {
            out.add_term(kr - k, e, c.scale(&rat(kr, k)));
            if e == 1 {
                out.add_term(kr - k, 0, c.clone());
            }
        }
        out
    }

    /// Formal monodromy: log lambda -> log lambda + 2 pi i and
    /// lambda^r -> e^{2 pi i r} lambda^r.
    pub fn monodromy(&self) -> Self {
        let n = self.n;
        let mut out = PuiseuxLog { n, terms: BTreeMap::new(), window: self.window };
        let two_pi_i = Scalar::two_pi_i(n);
        for (kr, e, c) in self.terms() {
            let rot = c.scale_cyc(&Cyclotomic::eta_pow(n, kr));
            out.add_term(kr, e, rot.clone());
            if e == 1 {
                out.add_term(kr, 0, rot.mul(&two_pi_i));
            }
        }
        out
    }
}

impl std::fmt::Display for PuiseuxLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let k = kappa(self.n);
        let mut parts = Vec::new();
        for (kr, e, c) in self.terms() {
            let mut s = format!("({c})");
            if kr != 0 {
                let g = num::integer::gcd(kr, k);
                if kr % k == 0 {
                    s.push_str(&format!("*Y^{}", kr / k));
                } else {
                    s.push_str(&format!("*Y^({}/{})", kr / g, k / g));
                }
            }
            if e == 1 {
                s.push_str("*logY");
            }
            parts.push(s);
        }
        write!(f, "{}", parts.join(" + "))
    }
}

/// Vector over the phi-basis whose entries are PuiseuxLog series.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PeriodVector {
    n: u32,
    comps: Vec<PuiseuxLog>,
}

impl PeriodVector {
    pub fn zero(n: u32) -> Self {
        let dim = crate::klattice::basis_size(n);
        PeriodVector { n, comps: vec![PuiseuxLog::zero(n); dim] }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn component(&self, i: u8, p: u32) -> &PuiseuxLog {
        &self.comps[phi_slot_of(self.n, i, p)]
    }

    pub fn set_component(&mut self, i: u8, p: u32, v: PuiseuxLog) {
        self.comps[phi_slot_of(self.n, i, p)] = v;
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let comps = self.comps.iter().zip(&rhs.comps).map(|(a, b)| a.add(b)).collect();
        PeriodVector { n: self.n, comps }
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        PeriodVector { n: self.n, comps: self.comps.iter().map(|c| c.scale(s)).collect() }
    }

    pub fn scale_rat(&self, r: &Rat) -> Self {
        self.scale(&Scalar::from_rat(self.n, r.clone()))
    }

    pub fn diff(&self) -> Self {
        PeriodVector { n: self.n, comps: self.comps.iter().map(|c| c.diff()).collect() }
    }

    pub fn monodromy(&self) -> Self {
        PeriodVector { n: self.n, comps: self.comps.iter().map(|c| c.monodromy()).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.is_zero())
    }
}

fn phi_slot_of(n: u32, i: u8, p: u32) -> usize {
    phi_index_pairs(n)
        .iter()
        .position(|&(ii, pp)| (ii, pp) == (i, p))
        .unwrap_or_else(|| panic!("phi index ({i},{p}) out of range"))
}

/// A calibrated period: the class, the order m, and the component series.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CalPeriod {
    pub alpha: KClass,
    pub m: i64,
    pub value: PeriodVector,
}

impl CalPeriod {
    pub fn diff(&self) -> Self {
        CalPeriod { alpha: self.alpha.clone(), m: self.m + 1, value: self.value.diff() }
    }
}

/// C_l = (n-2) log Q + H_l, stored expanded.
pub fn c_const(n: u32, l: u32) -> Scalar {
    Scalar::sym(n, Sym::LogQ, 1)
        .scale(&rat_i((n - 2) as i64))
        .add(&Scalar::from_rat(n, harmonic(l)))
}

/// Closed form for m = -l-1 <= -1.
fn period_value_neg(alpha: &KClass, l: u32) -> PeriodVector {
    let n = alpha.n();
    let k = kappa(n);
    let rk = rank(alpha);
    let dg = degree(alpha);
    let mut out = PeriodVector::zero(n);

    // phi_{0,0}: rk * lambda^{l+1}/(l+1)!
    let fall = crate::scalars::factorial(l + 1);
    out.set_component(
        0,
        0,
        PuiseuxLog::term(n, k * (l as i64 + 1), 0, Scalar::from_rat(n, &rk / &fall)),
    );

    // phi_{0,1}: (lambda^l/l!)((log lambda - C_l) rk/(n-2) + 2 pi i deg)
    let lfact = crate::scalars::factorial(l);
    let mut p01 = PuiseuxLog::zero(n);
    let rk_scaled = &rk / (&lfact * rat_i((n - 2) as i64));
    p01.add_term(k * l as i64, 1, Scalar::from_rat(n, rk_scaled.clone()));
    let log_free = c_const(n, l)
        .scale(&-rk_scaled)
        .add(&Scalar::two_pi_i(n).scale(&(&dg / &lfact)));
    p01.add_term(k * l as i64, 0, log_free);
    out.set_component(0, 1, p01);

    // phi_{j,p}: lambda^{l+1-p/a_j} chi_{j,p}(alpha) / prod_{t=1}^{l+1}(t - p/a_j)
    for (j, p) in phi_index_pairs(n) {
        if j == 0 {
            continue;
        }
        let aj = a_param(n, j) as i64;
        let mut denom = Rat::one();
        for t in 1..=(l as i64 + 1) {
            denom *= rat(t * aj - p as i64, aj);
        }
        let kr = k * (l as i64 + 1) - k * p as i64 / aj;
        let coeff = Scalar::from_cyc(chi(j, p, alpha)).scale(&(Rat::one() / denom));
        out.set_component(j, p, PuiseuxLog::term(n, kr, 0, coeff));
    }
    out
}

fn basis_period(n: u32, idx: usize, m: i64) -> Arc<PeriodVector> {
    static CACHE: OnceLock<RwLock<HashMap<(u32, usize, i64), Arc<PeriodVector>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(hit) = cache.read().unwrap().get(&(n, idx, m)) {
        return hit.clone();
    }
    let alpha = KClass::basis(n, crate::klattice::basis_elem(n, idx));
    let value = if m < 0 {
        period_value_neg(&alpha, (-m - 1) as u32)
    } else {
        let mut v = period_value_neg(&alpha, 0);
        for _ in 0..=m {
            v = v.diff();
        }
        v
    };
    let arc = Arc::new(value);
    cache.write().unwrap().entry((n, idx, m)).or_insert_with(|| arc.clone());
    arc
}

/// The calibrated period of an arbitrary class, assembled linearly from the
/// memoized basis periods.
pub fn calibrated_period(alpha: &KClass, m: i64) -> CalPeriod {
    let n = alpha.n();
    let mut value = PeriodVector::zero(n);
    for (idx, c) in alpha.coeffs().iter().enumerate() {
        if !c.is_zero() {
            value = value.add(&basis_period(n, idx, m).scale_rat(c));
        }
    }
    CalPeriod { alpha: alpha.clone(), m, value }
}

/// I~^(0) applied to an arbitrary cohomology vector via
/// lambda^{theta - 1/2}/Gamma(theta + 1/2) + rho/lambda; the phi_{0,1} input
/// slot is annihilated (1/Gamma(0) = 0).
pub fn h_period_zero(a: &CohVector) -> PeriodVector {
    let n = a.n();
    let k = kappa(n);
    let mut out = PeriodVector::zero(n);
    // untwisted slots
    out.set_component(0, 0, PuiseuxLog::term(n, 0, 0, a.component(0, 0).clone()));
    out.set_component(
        0,
        1,
        PuiseuxLog::term(n, -k, 0, a.component(0, 0).scale(&rat(1, (n - 2) as i64))),
    );
    for (j, p) in phi_index_pairs(n) {
        if j == 0 {
            continue;
        }
        let aj = a_param(n, j) as i64;
        // 1/Gamma(1 - p/a_j) as a symbol with exponent -1
        let ginv = Scalar::term(
            n,
            TransMono::single(Sym::Gamma(j, (aj - p as i64) as u8), -1),
            Cyclotomic::one(n),
        );
        let kr = -(k * p as i64) / aj;
        out.set_component(j, p, PuiseuxLog::term(n, kr, 0, a.component(j, p).mul(&ginv)));
    }
    out
}

/// Coefficients of the vertex-operator series f~_alpha(lambda, z)
/// = sum_m I~^(m)(lambda) (-z)^m over a window of m.
pub fn f_tilde(alpha: &KClass, lo: i64, hi: i64) -> Vec<(i64, CalPeriod)> {
    assert!(lo <= hi);
    (lo..=hi).map(|m| (m, calibrated_period(alpha, m))).collect()
}

/// The annihilation half: nonnegative powers of z.
pub fn f_tilde_plus(alpha: &KClass, hi: i64) -> Vec<(i64, CalPeriod)> {
    f_tilde(alpha, 0, hi)
}

/// The creation half: negative powers of z.
pub fn f_tilde_minus(alpha: &KClass, lo: i64) -> Vec<(i64, CalPeriod)> {
    f_tilde(alpha, lo, -1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::klattice::{
        basis_elem, basis_size, eps_vector, sigma, BElem, EpsLabel,
    };

    #[test]
    fn unit_class_first_period_is_lambda() {
        for n in [4u32, 5, 7] {
            let p = calibrated_period(&KClass::unit(n), -1);
            let k = kappa(n);
            assert_eq!(p.value.component(0, 0), &PuiseuxLog::term(n, k, 0, Scalar::one(n)));
        }
    }

    #[test]
    fn zeroth_period_matrix_form() {
        // I~^(0) = lambda^{theta-1/2}/Gamma(theta+1/2) + rho/lambda applied
        // to the image of alpha: components rk, rk/((n-2) lambda),
        // chi_{j,p} lambda^{-p/a_j}.
        for n in [4u32, 5, 6] {
            let k = kappa(n);
            for idx in 0..basis_size(n) {
                let alpha = KClass::basis(n, basis_elem(n, idx));
                let p = calibrated_period(&alpha, 0);
                let rk = rank(&alpha);
                assert_eq!(
                    p.value.component(0, 0),
                    &PuiseuxLog::term(n, 0, 0, Scalar::from_rat(n, rk.clone()))
                );
                assert_eq!(
                    p.value.component(0, 1),
                    &PuiseuxLog::term(
                        n,
                        -k,
                        0,
                        Scalar::from_rat(n, rk / rat_i((n - 2) as i64))
                    )
                );
                for (j, pp) in phi_index_pairs(n) {
                    if j == 0 {
                        continue;
                    }
                    let aj = a_param(n, j) as i64;
                    let want = PuiseuxLog::term(
                        n,
                        -(k * pp as i64) / aj,
                        0,
                        Scalar::from_cyc(chi(j, pp, &alpha)),
                    );
                    assert_eq!(p.value.component(j, pp), &want, "n={n} idx={idx} ({j},{pp})");
                }
            }
        }
    }

    #[test]
    fn differentiation_shifts_order() {
        for n in [4u32, 6] {
            let dim = basis_size(n);
            let alpha = KClass::from_coeffs(
                n,
                (0..dim).map(|i| rat(2 * i as i64 - 3, 1 + (i as i64 % 2))).collect(),
            );
            for m in -5..=5 {
                let lhs = calibrated_period(&alpha, m).diff();
                let rhs = calibrated_period(&alpha, m + 1);
                assert_eq!(lhs.value, rhs.value, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn linearity() {
        let n = 5;
        let a = eps_vector(n, EpsLabel { family: 1, index: 2 });
        let b = KClass::basis(n, BElem::L3).scale(&rat(3, 2));
        for m in [-3i64, -1, 0, 2] {
            let sum = calibrated_period(&a.add(&b), m);
            let split = calibrated_period(&a, m).value.add(&calibrated_period(&b, m).value);
            assert_eq!(sum.value, split);
        }
    }

    #[test]
    fn monodromy_substitution_matches_sigma() {
        for n in [4u32, 5, 6] {
            for idx in 0..basis_size(n) {
                let alpha = KClass::basis(n, basis_elem(n, idx));
                for m in [-3i64, -1, 0, 2] {
                    let moved = calibrated_period(&alpha, m).value.monodromy();
                    let target = calibrated_period(&sigma(&alpha), m).value;
                    assert_eq!(moved, target, "n={n} idx={idx} m={m}");
                }
            }
        }
    }

    #[test]
    fn f_tilde_windows_and_splits() {
        let n = 4;
        let alpha = KClass::unit(n);
        let window = f_tilde(&alpha, -2, 2);
        assert_eq!(window.len(), 5);
        assert!(window.iter().all(|(m, p)| *m == p.m));
        assert!(f_tilde_plus(&alpha, 3).iter().all(|(m, _)| *m >= 0));
        assert!(f_tilde_minus(&alpha, -3).iter().all(|(m, _)| *m < 0));

        // rank-0, degree-0 class: untwisted components vanish identically
        let e3 = eps_vector(n, EpsLabel { family: 3, index: 1 });
        assert!(rank(&e3).is_zero());
        assert!(degree(&e3).is_zero());
        for (_, p) in f_tilde(&e3, -2, 2) {
            assert!(p.value.component(0, 0).is_zero());
            assert!(p.value.component(0, 1).is_zero());
        }
    }

    #[test]
    fn h_period_zero_on_phi_basis() {
        for n in [4u32, 5] {
            // phi_{0,1} is annihilated
            assert!(h_period_zero(&CohVector::phi(n, 0, 1)).is_zero());
            // phi_{0,0} produces the rho tail
            let p = h_period_zero(&CohVector::phi(n, 0, 0));
            assert_eq!(p.component(0, 0), &PuiseuxLog::term(n, 0, 0, Scalar::one(n)));
            assert_eq!(
                p.component(0, 1),
                &PuiseuxLog::term(
                    n,
                    -kappa(n),
                    0,
                    Scalar::from_rat(n, rat(1, (n - 2) as i64))
                )
            );
        }
    }

    #[test]
    fn puiseux_window_arithmetic() {
        let n = 4;
        let k = kappa(n);
        let a = PuiseuxLog::term(n, 0, 0, Scalar::one(n))
            .add(&PuiseuxLog::term(n, 3 * k, 0, Scalar::one(n)))
            .truncated(0, 2 * k);
        assert!(a.coeff(3 * k, 0).is_zero());
        assert_eq!(a.window(), Some((0, 2 * k)));
        let b = PuiseuxLog::term(n, k, 0, Scalar::one(n));
        let prod = a.mul(&b);
        // window shifts by the exact support of b
        assert_eq!(prod.window(), Some((k, 3 * k)));
        assert_eq!(prod.coeff(k, 0), Scalar::one(n));
    }

    #[test]
    fn degree_example_against_gamma_structure() {
        // the phi_{j,p} component of I~^(-1) carries chi/(1 - p/a_j)
        let n = 6;
        let alpha = KClass::l1_pow(n, 2);
        let p = calibrated_period(&alpha, -1);
        let aj = (n - 2) as i64;
        let expect = PuiseuxLog::term(
            n,
            kappa(n) - kappa(n) * 1 / aj,
            0,
            Scalar::from_cyc(chi(1, 1, &alpha)).scale(&rat(aj, aj - 1)),
        );
        assert_eq!(p.value.component(1, 1), &expect);
    }
}
