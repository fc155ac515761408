//! Power-law reaction terms `f(t) = a0 t - sum_l a_l t^{p_l}` on `t >= 0`.
//!
//! Requirements on the family: `a0 > 0`, every `a_l >= 0` with `sum_l a_l > 0`,
//! every exponent `p_l > 1`. The antiderivative is exact,
//! `F(t) = a0 t^2/2 - sum_l a_l t^{p_l+1}/(p_l+1)`, and `f'(0) = a0` holds exactly
//! because every sink term carries at least one extra power of `t`.

use crate::{lit, Real};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ReactionError {
    #[error("linear coefficient a0 must be positive and finite, got {0}")]
    BadLinearCoefficient(f64),
    #[error("sink term {index}: coefficient must be >= 0 and finite, got {coeff}")]
    BadCoefficient { index: usize, coeff: f64 },
    #[error("sink term {index}: exponent must be > 1 and finite, got {exponent}")]
    BadExponent { index: usize, exponent: f64 },
    #[error("at least one sink term with positive coefficient is required")]
    NoSink,
    #[error("holder_beta must lie in (0, 1], got {0}")]
    BadHolderBeta(f64),
    #[error("reaction term evaluated at negative argument t = {0}; domain is t >= 0")]
    NegativeArgument(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct PowerTerm<T> {
    coeff: T,
    exponent: T,
    /// Set when the exponent is (numerically) an integer; enables `powi`.
    int_exp: Option<i32>,
}

impl<T: Real> PowerTerm<T> {
    fn new(coeff: T, exponent: T) -> Self {
        let p = exponent.to_f64().unwrap_or(f64::NAN);
        let int_exp = if (p - p.round()).abs() < 1e-12 && p.round().abs() < 2_147_483_000.0 {
            Some(p.round() as i32)
        } else {
            None
        };
        Self { coeff, exponent, int_exp }
    }

    #[inline]
    fn pow(&self, t: T) -> T {
        match self.int_exp {
            Some(k) => t.powi(k),
            None => t.powf(self.exponent),
        }
    }

    /// t^(exponent + shift) for small integer shifts, keeping the powi fast path.
    #[inline]
    fn pow_shifted(&self, t: T, shift: i32) -> T {
        match self.int_exp {
            Some(k) => t.powi(k + shift),
            None => t.powf(self.exponent + lit(f64::from(shift))),
        }
    }
}

/// The reaction family `f(t) = a0 t - sum_l a_l t^{p_l}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NonlinearityRepr<T>", into = "NonlinearityRepr<T>")]
#[serde(bound = "T: Real")]
pub struct Nonlinearity<T: Real> {
    a0: T,
    terms: Vec<PowerTerm<T>>,
    holder_beta: T,
}

/// Wire shape: `{ a0, terms: [[a, p], ...], holder_beta }`.
#[derive(Serialize, Deserialize)]
struct NonlinearityRepr<T> {
    a0: T,
    terms: Vec<(T, T)>,
    holder_beta: Option<T>,
}

impl<T: Real> TryFrom<NonlinearityRepr<T>> for Nonlinearity<T> {
    type Error = ReactionError;
    fn try_from(r: NonlinearityRepr<T>) -> Result<Self, ReactionError> {
        let nl = Nonlinearity::new(r.a0, &r.terms)?;
        match r.holder_beta {
            Some(b) => nl.with_holder_beta(b),
            None => Ok(nl),
        }
    }
}

impl<T: Real> From<Nonlinearity<T>> for NonlinearityRepr<T> {
    fn from(nl: Nonlinearity<T>) -> Self {
        NonlinearityRepr {
            a0: nl.a0,
            terms: nl.terms.iter().map(|t| (t.coeff, t.exponent)).collect(),
            holder_beta: Some(nl.holder_beta),
        }
    }
}

/// Structural facts about one family member, evaluated for a given dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HypothesisReport<T> {
    pub n: usize,
    /// `t f'(0) >= f(t)` on the sampled range (exact for the family: the slack is
    /// the sink sum, which is nonnegative term by term).
    pub kpp_bound: bool,
    /// Smallest sampled slack `t f'(0) - f(t)`.
    pub kpp_min_slack: T,
    /// `f` concave on `(0, delta)`.
    pub concave_near_zero: bool,
    /// True when concavity is certified from the sign of `f''` term by term
    /// (all exponents >= 2); false when certified by sampling.
    pub concavity_analytic: bool,
    /// Certified concavity radius (infinite for the analytic route).
    pub concavity_delta: T,
    /// `F` attains a negative value on `(0, t_max]`.
    pub f_dips_negative: bool,
    /// All exponents below `n/(n-2)` (vacuous for n <= 2).
    pub subcritical: bool,
}

impl<T: Real> Nonlinearity<T> {
    /// Build a family member from `(coefficient, exponent)` sink terms.
    ///
    /// `holder_beta` defaults to `min(1, min_l(p_l - 1))`.
    pub fn new(a0: T, terms: &[(T, T)]) -> Result<Self, ReactionError> {
        if !(a0 > T::zero()) || !a0.is_finite() {
            return Err(ReactionError::BadLinearCoefficient(a0.to_f64().unwrap_or(f64::NAN)));
        }
        let one = T::one();
        let mut sum = T::zero();
        let mut min_p = T::infinity();
        for (i, &(a, p)) in terms.iter().enumerate() {
            if !(a >= T::zero()) || !a.is_finite() {
                return Err(ReactionError::BadCoefficient {
                    index: i,
                    coeff: a.to_f64().unwrap_or(f64::NAN),
                });
            }
            if !(p > one) || !p.is_finite() {
                return Err(ReactionError::BadExponent {
                    index: i,
                    exponent: p.to_f64().unwrap_or(f64::NAN),
                });
            }
            sum += a;
            if a > T::zero() && p < min_p {
                min_p = p;
            }
        }
        if !(sum > T::zero()) {
            return Err(ReactionError::NoSink);
        }
        let holder_beta = one.min(min_p - one);
        let terms = terms
            .iter()
            .filter(|&&(a, _)| a > T::zero())
            .map(|&(a, p)| PowerTerm::new(a, p))
            .collect();
        Ok(Self { a0, terms, holder_beta })
    }

    pub fn with_holder_beta(mut self, beta: T) -> Result<Self, ReactionError> {
        if !(beta > T::zero() && beta <= T::one()) {
            return Err(ReactionError::BadHolderBeta(beta.to_f64().unwrap_or(f64::NAN)));
        }
        self.holder_beta = beta;
        Ok(self)
    }

    pub fn a0(&self) -> T {
        self.a0
    }

    pub fn holder_beta(&self) -> T {
        self.holder_beta
    }

    pub fn terms(&self) -> Vec<(T, T)> {
        self.terms.iter().map(|t| (t.coeff, t.exponent)).collect()
    }

    /// `f'(0)`, exactly `a0` for this family.
    pub fn fprime0(&self) -> T {
        self.a0
    }

    /// Tail decay rate `m = sqrt(f'(0))`: profiles decay like `e^{-m r}`.
    pub fn decay_rate(&self) -> T {
        self.a0.sqrt()
    }

    /// `1/m`, the length unit used for separations and box clearances.
    pub fn decay_length(&self) -> T {
        T::one() / self.decay_rate()
    }

    fn check_domain(&self, t: T) -> Result<(), ReactionError> {
        if t < T::zero() || !t.is_finite() {
            Err(ReactionError::NegativeArgument(t.to_f64().unwrap_or(f64::NAN)))
        } else {
            Ok(())
        }
    }

    /// Sink sum `sum_l a_l t^{p_l}` (equals `t f'(0) - f(t)`).
    #[inline]
    pub(crate) fn sink_raw(&self, t: T) -> T {
        debug_assert!(t >= T::zero());
        let mut s = T::zero();
        for term in &self.terms {
            s += term.coeff * term.pow(t);
        }
        s
    }

    #[inline]
    pub(crate) fn f_raw(&self, t: T) -> T {
        self.a0 * t - self.sink_raw(t)
    }

    #[inline]
    pub(crate) fn big_f_raw(&self, t: T) -> T {
        let half = lit::<T>(0.5);
        let mut s = half * self.a0 * t * t;
        for term in &self.terms {
            s -= term.coeff * term.pow_shifted(t, 1) / (term.exponent + T::one());
        }
        s
    }

    #[inline]
    pub(crate) fn df_raw(&self, t: T) -> T {
        let mut s = self.a0;
        for term in &self.terms {
            s -= term.coeff * term.exponent * term.pow_shifted(t, -1);
        }
        s
    }

    pub fn f(&self, t: T) -> Result<T, ReactionError> {
        self.check_domain(t)?;
        Ok(self.f_raw(t))
    }

    /// Exact antiderivative `F(t) = a0 t^2/2 - sum_l a_l t^{p_l+1}/(p_l+1)`, `F(0) = 0`.
    pub fn big_f(&self, t: T) -> Result<T, ReactionError> {
        self.check_domain(t)?;
        Ok(self.big_f_raw(t))
    }

    pub fn df(&self, t: T) -> Result<T, ReactionError> {
        self.check_domain(t)?;
        Ok(self.df_raw(t))
    }

    /// `f''(t) = -sum_l a_l p_l (p_l - 1) t^{p_l - 2}`; may be `-inf` at `t = 0`
    /// when an exponent below 2 is present.
    pub fn d2f(&self, t: T) -> Result<T, ReactionError> {
        self.check_domain(t)?;
        let mut s = T::zero();
        for term in &self.terms {
            s -= term.coeff * term.exponent * (term.exponent - T::one()) * term.pow_shifted(t, -2);
        }
        Ok(s)
    }

    /// `t f'(0) - f(t)`, the slack in the KPP-type bound; nonnegative on the family.
    pub fn sink(&self, t: T) -> Result<T, ReactionError> {
        self.check_domain(t)?;
        Ok(self.sink_raw(t))
    }

    /// Largest positive zero of `f` (unique for the family): `sum_l a_l t^{p_l-1} = a0`.
    pub fn positive_zero(&self) -> T {
        // g(t) = sink(t)/t - a0 is strictly increasing, negative at 0+.
        let g = |t: T| self.sink_raw(t) / t - self.a0;
        let mut hi = T::one();
        let mut guard = 0;
        while g(hi) < T::zero() && guard < 2000 {
            hi = hi * lit(2.0);
            guard += 1;
        }
        let mut lo = hi * lit(0.5);
        while g(lo) > T::zero() && guard < 4000 {
            lo = lo * lit(0.5);
            guard += 1;
        }
        for _ in 0..200 {
            let mid = (lo + hi) * lit(0.5);
            if mid == lo || mid == hi {
                break;
            }
            if g(mid) < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) * lit(0.5)
    }

    /// All exponents strictly below `n/(n-2)`; vacuously true for `n <= 2`.
    pub fn subcritical(&self, n: usize) -> bool {
        if n <= 2 {
            return true;
        }
        let critical = lit::<T>(n as f64) / lit::<T>((n - 2) as f64);
        self.terms.iter().all(|t| t.exponent < critical)
    }

    /// Certified radius of concavity of `f` on `(0, delta)`.
    ///
    /// Returns `(delta, analytic)`. When every exponent is >= 2 each term of
    /// `f''` is nonpositive on all of `(0, inf)`, so `delta = inf`. Otherwise
    /// the sign of `f''` is sampled on a geometric grid in `(0, t_max]` and the
    /// sampled range is certified.
    pub fn concavity_radius(&self, t_max: T, samples: usize) -> (T, bool) {
        let analytic = self.terms.iter().all(|t| t.exponent >= lit(2.0));
        if analytic {
            return (T::infinity(), true);
        }
        let mut t = t_max;
        let shrink = lit::<T>(0.85);
        for _ in 0..samples.max(16) {
            if self.d2f(t).unwrap() >= T::zero() {
                // Not concave at this sample; certify nothing beyond it.
                return (T::zero(), false);
            }
            t = t * shrink;
        }
        (t_max, false)
    }

    /// Evaluate the structural hypotheses the theory needs, for dimension `n`.
    pub fn check_hypotheses(&self, n: usize, t_max: T, samples: usize) -> HypothesisReport<T> {
        let k = samples.max(8);
        let mut kpp_min_slack = T::infinity();
        let mut f_dips_negative = false;
        for i in 1..=k {
            let t = t_max * lit::<T>(i as f64 / k as f64);
            let slack = self.sink_raw(t);
            if slack < kpp_min_slack {
                kpp_min_slack = slack;
            }
            if self.big_f_raw(t) < T::zero() {
                f_dips_negative = true;
            }
        }
        let (delta, analytic) = self.concavity_radius(t_max, k);
        HypothesisReport {
            n,
            kpp_bound: kpp_min_slack >= T::zero(),
            kpp_min_slack,
            concave_near_zero: delta > T::zero(),
            concavity_analytic: analytic,
            concavity_delta: delta,
            f_dips_negative,
            subcritical: self.subcritical(n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quadratic() -> Nonlinearity<f64> {
        Nonlinearity::new(1.0, &[(1.0, 2.0)]).unwrap()
    }

    fn cubic() -> Nonlinearity<f64> {
        Nonlinearity::new(1.0, &[(1.0, 3.0)]).unwrap()
    }

    #[test]
    fn exact_values() {
        let q = quadratic();
        assert_eq!(q.f(0.0).unwrap(), 0.0);
        assert_eq!(q.f(1.0).unwrap(), 0.0);
        assert_eq!(q.big_f(0.0).unwrap(), 0.0);
        assert!((q.big_f(3.0).unwrap() - (-4.5)).abs() < 1e-14);
        let c = cubic();
        assert!((c.f(0.5).unwrap() - 0.375).abs() < 1e-15);
        assert!((c.big_f(1.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn derivative_at_zero_is_exactly_a0() {
        let nl = Nonlinearity::new(2.25, &[(0.5, 1.5), (1.0, 2.0)]).unwrap();
        assert_eq!(nl.df(0.0).unwrap(), 2.25);
        assert_eq!(nl.fprime0(), 2.25);
        assert_eq!(nl.decay_rate(), 1.5);
    }

    #[test]
    fn negative_arguments_rejected() {
        let q = quadratic();
        assert!(matches!(q.f(-0.1), Err(ReactionError::NegativeArgument(_))));
        assert!(q.big_f(-1.0).is_err());
        assert!(q.df(-1e-12).is_err());
        assert!(q.sink(f64::NAN).is_err());
    }

    #[test]
    fn construction_validates_family() {
        assert!(Nonlinearity::new(0.0, &[(1.0, 2.0)]).is_err());
        assert!(Nonlinearity::new(-1.0, &[(1.0, 2.0)]).is_err());
        assert!(Nonlinearity::new(1.0, &[(-1.0, 2.0)]).is_err());
        assert!(Nonlinearity::new(1.0, &[(1.0, 1.0)]).is_err());
        assert!(Nonlinearity::new(1.0, &[(1.0, 0.5)]).is_err());
        assert!(Nonlinearity::<f64>::new(1.0, &[]).is_err());
        assert!(Nonlinearity::new(1.0, &[(0.0, 2.0)]).is_err());
        assert!(Nonlinearity::new(1.0, &[(1.0, f64::NAN)]).is_err());
    }

    fn random_family(rng: &mut ChaCha8Rng) -> Nonlinearity<f64> {
        let a0 = rng.gen_range(0.2..4.0);
        let k = rng.gen_range(1..=3);
        let terms: Vec<(f64, f64)> = (0..k)
            .map(|_| (rng.gen_range(0.05..2.0), rng.gen_range(1.1..4.0)))
            .collect();
        Nonlinearity::new(a0, &terms).unwrap()
    }

    #[test]
    fn finite_difference_of_antiderivative_recovers_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let step = 1e-5;
        for _ in 0..10 {
            let nl = random_family(&mut rng);
            for _ in 0..100 {
                let t: f64 = rng.gen_range(step..3.0);
                let fd = (nl.big_f(t + step).unwrap() - nl.big_f(t - step).unwrap()) / (2.0 * step);
                let exact = nl.f(t).unwrap();
                let denom = exact.abs().max(1.0);
                assert!(
                    (fd - exact).abs() / denom <= 1e-6,
                    "fd {fd} vs f {exact} at t={t}"
                );
            }
        }
    }

    #[test]
    fn kpp_slack_is_the_sink_sum_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let nl = random_family(&mut rng);
            for _ in 0..200 {
                let t: f64 = rng.gen_range(0.0..5.0);
                let slack = t * nl.fprime0() - nl.f(t).unwrap();
                assert!(slack >= 0.0);
                assert!((slack - nl.sink(t).unwrap()).abs() <= 1e-12 * slack.abs().max(1.0));
            }
        }
    }

    #[test]
    fn second_derivative_negative_on_positive_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let nl = random_family(&mut rng);
            for _ in 0..50 {
                let t: f64 = rng.gen_range(1e-6..4.0);
                assert!(nl.d2f(t).unwrap() < 0.0);
            }
        }
    }

    #[test]
    fn hypothesis_report_routes() {
        let analytic = Nonlinearity::<f64>::new(1.0, &[(1.0, 2.0), (0.5, 3.0)]).unwrap();
        let rep = analytic.check_hypotheses(3, 5.0, 64);
        assert!(rep.kpp_bound && rep.concave_near_zero && rep.concavity_analytic);
        assert!(rep.concavity_delta.is_infinite());
        assert!(rep.f_dips_negative);

        let sampled = Nonlinearity::<f64>::new(1.0, &[(1.0, 1.5)]).unwrap();
        let rep = sampled.check_hypotheses(3, 5.0, 64);
        assert!(rep.concave_near_zero && !rep.concavity_analytic);
        assert_eq!(rep.concavity_delta, 5.0);
    }

    #[test]
    fn subcriticality_threshold() {
        assert!(quadratic().subcritical(3)); // 2 < 3
        assert!(!cubic().subcritical(3)); // 3 is critical in n=3
        assert!(!quadratic().subcritical(4)); // 2 is critical in n=4
        assert!(cubic().subcritical(1));
        assert!(cubic().subcritical(2));
    }

    #[test]
    fn positive_zero_of_f() {
        assert!((quadratic().positive_zero() - 1.0).abs() < 1e-12);
        assert!((cubic().positive_zero() - 1.0).abs() < 1e-12);
        let nl = Nonlinearity::<f64>::new(4.0, &[(1.0, 3.0)]).unwrap();
        assert!((nl.positive_zero() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn holder_beta_default_and_override() {
        assert_eq!(quadratic().holder_beta(), 1.0);
        let nl = Nonlinearity::new(1.0, &[(1.0, 1.5), (1.0, 3.0)]).unwrap();
        assert_eq!(nl.holder_beta(), 0.5);
        let nl = nl.with_holder_beta(0.25).unwrap();
        assert_eq!(nl.holder_beta(), 0.25);
        assert!(nl.clone().with_holder_beta(0.0).is_err());
        assert!(nl.with_holder_beta(1.5).is_err());
    }

    #[test]
    fn serde_wire_shape_roundtrips() {
        let nl = Nonlinearity::new(1.0, &[(1.0, 2.0)]).unwrap();
        let json = serde_json::to_string(&nl).unwrap();
        assert_eq!(json, r#"{"a0":1.0,"terms":[[1.0,2.0]],"holder_beta":1.0}"#);
        let back: Nonlinearity<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, nl);
        // holder_beta omitted -> default
        let back: Nonlinearity<f64> =
            serde_json::from_str(r#"{"a0":1.0,"terms":[[1.0,1.5]]}"#).unwrap();
        assert_eq!(back.holder_beta(), 0.5);
        // invalid payloads are rejected at deserialization time
        assert!(serde_json::from_str::<Nonlinearity<f64>>(r#"{"a0":-1.0,"terms":[[1.0,2.0]]}"#)
            .is_err());
    }

    #[test]
    fn single_precision_instantiation() {
        let nl = Nonlinearity::<f32>::new(1.0, &[(1.0, 2.0)]).unwrap();
        assert!((nl.big_f(3.0).unwrap() + 4.5).abs() < 1e-5);
    }
}
