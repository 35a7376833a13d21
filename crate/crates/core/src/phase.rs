//! Phase factors of composed vertex operators.
//!
//! The symplectic pairing Omega(f~+_alpha(lambda_1), f~-_beta(lambda_2)) is
//! computed two independent ways: directly, as the alternating sum over m of
//! Poincare pairings of calibrated periods in two lambda variables, and in
//! closed form as
//!
//!   -2 pi i rk(alpha) deg(beta)
//!     + log( (Q lambda_2^{-1/(n-2)})^{rk rk}
//!            prod_{s=1}^{kappa} (1 - eta^{-s} x)^{(alpha|sigma^s beta)} ),
//!
//! where x = (lambda_2/lambda_1)^{1/kappa} is a formal variable. No branch
//! of x is ever chosen; the multivalued locality statement is certified only
//! through the branch-free finite-sum identity (see the lattice tests).
//!
//! The b~ coefficients attached to the vertex operators are pinned both by
//! their closed forms and by the limit lambda_2 -> lambda_1 of
//! (lambda_2 - lambda_1) e^{Omega}, where the product formula degenerates to
//! an evaluation at x = 1 with one vanishing factor.

use crate::klattice::{
    degree, eps_labels, eps_vector, euler_pair, inter_pair, inter_pair_h, rank, sigma,
    CohVector, EpsLabel, KClass,
};
use crate::periods::{calibrated_period, h_period_zero, kappa, PeriodVector, PuiseuxLog};
use crate::scalars::{rat, rat_i, Cyclotomic, Rat, Scalar, Sym, TransMono};
use std::collections::BTreeMap;
use std::fmt;

/// Truncated series in x = (lambda_2/lambda_1)^{1/kappa} with an affine head
/// c_log * log(lambda_2) + head (the head absorbs log Q through the symbol
/// alphabet).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PhaseSeries {
    n: u32,
    order: i64,
    head: Scalar,
    log_l2: Scalar,
    x: BTreeMap<i64, Scalar>,
}

impl PhaseSeries {
    pub fn zero(n: u32, order: i64) -> Self {
        PhaseSeries {
            n,
            order,
            head: Scalar::zero(n),
            log_l2: Scalar::zero(n),
            x: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn order(&self) -> i64 {
        self.order
    }

    pub fn head(&self) -> &Scalar {
        &self.head
    }

    pub fn log_l2(&self) -> &Scalar {
        &self.log_l2
    }

    pub fn x_coeff(&self, k: i64) -> Scalar {
        self.x.get(&k).cloned().unwrap_or_else(|| Scalar::zero(self.n))
    }

    pub fn x_coeffs(&self) -> impl Iterator<Item = (i64, &Scalar)> {
        self.x.iter().map(|(&k, c)| (k, c))
    }

    fn add_x(&mut self, k: i64, c: Scalar) {
        if k > self.order || c.is_zero() {
            return;
        }
        let slot = self.x.entry(k).or_insert_with(|| Scalar::zero(self.n));
        *slot = slot.add(&c);
        if slot.is_zero() {
            self.x.remove(&k);
        }
    }

    /// First x-power (or head slot) where the two series differ, for
    /// reporting; None when equal through min(order).
    pub fn first_difference(&self, other: &Self) -> Option<String> {
        if self.head != other.head {
            return Some("head".into());
        }
        if self.log_l2 != other.log_l2 {
            return Some("log-lambda2 coefficient".into());
        }
        let ord = self.order.min(other.order);
        for k in 1..=ord {
            if self.x_coeff(k) != other.x_coeff(k) {
                return Some(format!("x^{k}"));
            }
        }
        None
    }
}

impl fmt::Display for PhaseSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) + ({})*logY2", self.head, self.log_l2)?;
        for (k, c) in self.x_coeffs() {
            write!(f, " + ({c})*x^{k}")?;
        }
        Ok(())
    }
}

/// Direct route: Omega = sum_{m >= 0} (-1)^{m+1}
/// (I~^(m)_alpha(lambda_1), I~^(-m-1)_beta(lambda_2)); every term balances
/// into a power of x except the m = 0 head.
pub fn phase_direct(alpha: &KClass, beta: &KClass, order: i64) -> PhaseSeries {
    assert!(order >= 1);
    let n = alpha.n();
    assert_eq!(n, beta.n());
    let k = kappa(n);
    let mut out = PhaseSeries::zero(n, order);
    let m_max = order / k + 1;
    for m in 0..=m_max {
        let pa = calibrated_period(alpha, m).value;
        let pb = calibrated_period(beta, -m - 1).value;
        let sign = if m % 2 == 0 { rat_i(-1) } else { rat_i(1) };
        for (kr1, e1, kr2, e2, c) in poincare_bivariate(&pa, &pb) {
            let c = c.scale(&sign);
            assert_eq!(e1, 0, "no log lambda_1 may survive differentiation");
            if e2 == 1 {
                assert_eq!((kr1, kr2), (0, 0), "log lambda_2 appears only in the head");
                out.log_l2 = out.log_l2.add(&c);
            } else if kr1 == 0 && kr2 == 0 {
                out.head = out.head.add(&c);
            } else {
                assert_eq!(kr1 + kr2, 0, "unbalanced lambda powers in the phase");
                assert!(kr2 > 0);
                out.add_x(kr2, c);
            }
        }
    }
    out
}

/// All cross terms of the Poincare pairing of two period vectors living in
/// different lambda variables.
fn poincare_bivariate<'a>(
    u: &'a PeriodVector,
    v: &'a PeriodVector,
) -> Vec<(i64, u8, i64, u8, Scalar)> {
    let n = u.n();
    let mut out = Vec::new();
    for (i, p) in crate::klattice::phi_index_pairs(n) {
        let a = crate::scalars::a_param(n, i);
        let (pi, pp) = if i == 0 { (0u8, 1 - p) } else { (i, a - p) };
        for (kr1, e1, c1) in u.component(i, p).terms() {
            for (kr2, e2, c2) in v.component(pi, pp).terms() {
                out.push((kr1, e1, kr2, e2, c1.mul(c2).scale(&rat(1, a as i64))));
            }
        }
    }
    out
}

/// Exponents e_s = (alpha | sigma^s beta) for s = 1..kappa.
pub fn pairing_exponents(alpha: &KClass, beta: &KClass) -> Vec<Rat> {
    let n = alpha.n();
    let k = kappa(n);
    let mut cur = beta.clone();
    let mut out = Vec::with_capacity(k as usize);
    for _ in 1..=k {
        cur = sigma(&cur);
        out.push(inter_pair(alpha, &cur).expect("pairing must be rational"));
    }
    out
}

/// Closed route: head plus sum_s (alpha|sigma^s beta) log(1 - eta^{-s} x)
/// expanded to the requested order.
pub fn phase_closed(alpha: &KClass, beta: &KClass, order: i64) -> PhaseSeries {
    assert!(order >= 1);
    let n = alpha.n();
    assert_eq!(n, beta.n());
    let k = kappa(n);
    let mut out = PhaseSeries::zero(n, order);
    let rk_a = rank(alpha);
    let rk_b = rank(beta);
    let rkrk = &rk_a * &rk_b;
    // -2 pi i rk(alpha) deg(beta) + rk rk log Q - (rk rk/(n-2)) log lambda_2
    out.head = Scalar::two_pi_i(n)
        .scale(&-(&rk_a * degree(beta)))
        .add(&Scalar::sym(n, Sym::LogQ, 1).scale(&rkrk));
    out.log_l2 = Scalar::from_rat(n, -&rkrk / rat_i((n - 2) as i64));
    let exps = pairing_exponents(alpha, beta);
    for t in 1..=order {
        // coefficient of x^t in sum_s e_s log(1 - eta^{-s} x)
        let mut acc = Cyclotomic::zero(n);
        for (idx, e) in exps.iter().enumerate() {
            let s = idx as i64 + 1;
            acc = acc.add(&Cyclotomic::eta_pow(n, -s * t).scale(e));
        }
        out.add_x(t, Scalar::from_cyc(acc).scale(&rat(-1, t)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhaseError {
    /// the argument is not one of the distinguished +-eps classes
    NotInE(String),
    /// the product formula did not degenerate with a simple pole at x = 1
    PoleMismatch { expected: i64, got: i64 },
}

impl fmt::Display for PhaseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseError::NotInE(s) => write!(f, "not a distinguished vertex class: {s}"),
            PhaseError::PoleMismatch { expected, got } => {
                write!(f, "pole order at x=1 is {got}, expected {expected}")
            }
        }
    }
}

impl std::error::Error for PhaseError {}

/// Identify a class as +-eps_label, the admissible vertex-operator labels.
pub fn identify_vertex_class(eps: &KClass) -> Result<(EpsLabel, bool), PhaseError> {
    let n = eps.n();
    for label in eps_labels(n) {
        let v = eps_vector(n, label);
        if &v == eps {
            return Ok((label, true));
        }
        if v.neg() == *eps {
            return Ok((label, false));
        }
    }
    Err(PhaseError::NotInE(format!("{eps}")))
}

/// Closed-form b~ coefficient of a vertex operator: (Q/(n-2))
/// lambda^{-1/(n-2)} eta_1^{-i} for +-eps^1_i, -1/4 for +-eps^2_1, 1/4 for
/// +-eps^3_1. The formula is shared by eps and -eps.
pub fn b_tilde(eps: &KClass) -> Result<PuiseuxLog, PhaseError> {
    let n = eps.n();
    let (label, _) = identify_vertex_class(eps)?;
    Ok(match label.family {
        1 => PuiseuxLog::term(
            n,
            -2,
            0,
            Scalar::term(
                n,
                TransMono::single(Sym::Q, 1),
                Cyclotomic::eta_j_pow(n, 1, -(label.index as i64)),
            )
            .scale(&rat(1, (n - 2) as i64)),
        ),
        2 => PuiseuxLog::term(n, 0, 0, Scalar::from_rat(n, rat(-1, 4))),
        3 => PuiseuxLog::term(n, 0, 0, Scalar::from_rat(n, rat(1, 4))),
        _ => unreachable!(),
    })
}

/// The limit characterization: evaluates
/// lim_{mu->lambda} (mu - lambda) e^{Omega(f~+_eps(lambda), f~-_{-eps}(mu))}
/// times e^{2 pi i <eps, eps^3_1>}, which must equal lambda / b~_eps.
///
/// With x = (mu/lambda)^{1/kappa} the exponential is
/// (Q mu^{-1/(n-2)})^{rk rk} e^{-2 pi i rk deg} prod (1 - eta^{-s} x)^{e_s},
/// and (mu - lambda) = -lambda prod_s (1 - eta^{-s} x); the limit exists iff
/// the total multiplicity of the factor (1 - x) is zero, i.e. e_kappa = -1.
pub fn b_from_limit(eps: &KClass) -> Result<PuiseuxLog, PhaseError> {
    let n = eps.n();
    identify_vertex_class(eps)?;
    let k = kappa(n);
    let neg = eps.neg();
    let exps = pairing_exponents(eps, &neg);
    let ints: Vec<i64> = exps
        .iter()
        .map(|e| {
            assert!(e.is_integer(), "vertex pairing exponents must be integers");
            int_val(e)
        })
        .collect();
    let e_kappa = ints[(k - 1) as usize];
    if e_kappa != -1 {
        return Err(PhaseError::PoleMismatch { expected: -1, got: e_kappa });
    }
    // -lambda * prod_{s<kappa} (1 - eta^{-s})^{e_s + 1}
    let mut val = Cyclotomic::from_int(n, -1);
    for s in 1..k {
        let factor = Cyclotomic::one(n).sub(&Cyclotomic::eta_pow(n, -s));
        let e = ints[(s - 1) as usize] + 1;
        val = val.mul(&factor.pow(e as i32));
    }
    let mut coeff = Scalar::from_cyc(val);
    let mut kr = k; // the lambda from (mu - lambda)
    // head (Q lambda^{-1/(n-2)})^{rk(eps) rk(-eps)} at mu = lambda
    let rk = rank(eps);
    assert!(rk.is_integer());
    let t = -int_val(&rk) * int_val(&rk);
    if t != 0 {
        coeff = coeff.mul(&Scalar::sym(n, Sym::Q, t as i32));
        kr -= 2 * t; // lambda^{-t/(n-2)} in kappa-units is -2t
    }
    // e^{-2 pi i rk(eps) deg(-eps)} = e^{2 pi i rk(eps) deg(eps)}
    coeff = coeff.scale_cyc(&unit_phase(n, &(rk * degree(eps))));
    // e^{2 pi i <eps, eps^3_1>}
    let e3 = eps_vector(n, EpsLabel { family: 3, index: 1 });
    let pairing = euler_pair(eps, &e3).expect("rational pairing");
    coeff = coeff.scale_cyc(&unit_phase(n, &pairing));
    Ok(PuiseuxLog::term(n, kr, 0, coeff))
}

fn int_val(r: &Rat) -> i64 {
    use num::ToPrimitive;
    r.to_integer().to_i64().expect("value fits in i64")
}

/// e^{2 pi i v} for rational v whose denominator divides the cyclotomic
/// order.
fn unit_phase(n: u32, v: &Rat) -> Cyclotomic {
    let den = v.denom().clone();
    let num = v.numer().clone();
    use num::ToPrimitive;
    Cyclotomic::root_of_unity(
        n,
        den.to_u32().expect("denominator fits"),
        num.to_i64().expect("numerator fits"),
    )
}

/// Both sides of the pole-structure identity
///   (1/(lambda_1 - lambda_2)) (I~^(0)_a(lambda_1), (lambda_2 - rho)
///   I~^(0)_b(lambda_2))
///   = (1/kappa) sum_s (a|sigma^s b)
///     lambda_2^{1/kappa} lambda_1^{-1} / (eta^s lambda_1^{1/kappa} -
///     lambda_2^{1/kappa}),
/// returned as coefficient lists of lambda_1^{-1} x^t, t = 0..order, with
/// independent code paths for the two sides.
pub fn limit_identity_sides(
    a: &CohVector,
    b: &CohVector,
    order: i64,
) -> (Vec<Scalar>, Vec<Scalar>) {
    let n = a.n();
    let k = kappa(n);
    // LHS: P(x) from the bivariate pairing, then multiplied by the
    // geometric series of 1/(1 - x^kappa)
    let pa = h_period_zero(a);
    let pb = h_period_zero(b);
    // (lambda_2 - rho) applied to the period of b
    let mut pb_shift = PeriodVector::zero(n);
    for (i, p) in crate::klattice::phi_index_pairs(n) {
        let mut c = pb.component(i, p).shift(k);
        if (i, p) == (0, 1) {
            c = c.sub(&pb.component(0, 0).scale(&Scalar::from_rat(n, rat(1, (n - 2) as i64))));
        }
        pb_shift.set_component(i, p, c);
    }
    let mut pcoeffs: BTreeMap<i64, Scalar> = BTreeMap::new();
    for (kr1, e1, kr2, e2, c) in poincare_bivariate(&pa, &pb_shift) {
        assert_eq!((e1, e2), (0, 0), "no logs in the zeroth periods");
        assert_eq!(kr1 + kr2, 0, "unbalanced lambda powers");
        let slot = pcoeffs.entry(kr2).or_insert_with(|| Scalar::zero(n));
        *slot = slot.add(&c);
    }
    let mut lhs = vec![Scalar::zero(n); (order + 1) as usize];
    for t in 0..=order {
        let mut acc = Scalar::zero(n);
        let mut back = t;
        while back >= 0 {
            if let Some(c) = pcoeffs.get(&back) {
                acc = acc.add(c);
            }
            back -= k;
        }
        lhs[t as usize] = acc;
    }
    // RHS: (1/kappa) sum_s (a|sigma_h^s b) sum_{m>=1} eta^{-ms} x^m
    let mut rhs = vec![Scalar::zero(n); (order + 1) as usize];
    let mut cur = b.clone();
    for s in 1..=k {
        cur = cur.sigma_h(false);
        let pair = inter_pair_h(a, &cur);
        if pair.is_zero() {
            continue;
        }
        for m in 1..=order {
            let term = pair
                .scale_cyc(&Cyclotomic::eta_pow(n, -m * s))
                .scale(&rat(1, k));
            rhs[m as usize] = rhs[m as usize].add(&term);
        }
    }
    (lhs, rhs)
}

/// kappa-averaging: sum_{s=1}^{kappa} eta^{-ks} = kappa when kappa | k,
/// else 0 (used to certify the log prod(1 - eta^{-s} x) = log(1 - x^kappa)
/// collapse).
pub fn root_power_sum(n: u32, k: i64) -> Cyclotomic {
    let mut acc = Cyclotomic::zero(n);
    for s in 1..=kappa(n) {
        acc = acc.add(&Cyclotomic::eta_pow(n, -k * s));
    }
    acc
}
