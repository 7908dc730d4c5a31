//! The canonical operator `S(P) = (δ+|P|)^{p-2} P`, the quantity
//! `F(P) = (δ+|P|)^{(p-2)/2} P`, and their A-approximations obtained by
//! continuing the potential `ω` with a C²-matched quadratic above `t = A`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nfunc::{check_nonneg, NFunction, Order, PDeltaParams};
use crate::tensor::SymTensor;

/// Selects the original operator or its A-approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Exact,
    Approx,
}

/// A-approximated potential `ω^A` with its cached quadratic-tail coefficients:
/// `ω^A(t) = α₂t² + α₁t + α₀` for `t > A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AApprox {
    pub params: PDeltaParams,
    pub threshold: f64,
    pub alpha2: f64,
    pub alpha1: f64,
    pub alpha0: f64,
    // ω, ω', ω'' at the threshold; the tail is evaluated as a Taylor
    // polynomial about A, which is the same quadratic.
    w0: f64,
    w1: f64,
    w2: f64,
}

pub fn build_a_approx(params: PDeltaParams, threshold: f64) -> Result<AApprox> {
    params.validate()?;
    if !(threshold >= 1.0) || !threshold.is_finite() {
        return Err(Error::domain("A", threshold, "must be finite and >= 1"));
    }
    let a = threshold;
    let w0 = params.omega(a);
    let w1 = params.omega_d1(a);
    let w2 = params.omega_d2(a);
    let alpha2 = 0.5 * w2;
    // ω'(A) − ω''(A) A = (2−p) A² (δ+A)^{p−3}, exact zero for p = 2
    let alpha1 = if params.p == 2.0 {
        0.0
    } else {
        (2.0 - params.p) * a * a * (params.delta + a).powf(params.p - 3.0)
    };
    let alpha0 = w0 - w1 * a + 0.5 * w2 * a * a;
    Ok(AApprox {
        params,
        threshold,
        alpha2,
        alpha1,
        alpha0,
        w0,
        w1,
        w2,
    })
}

impl AApprox {
    pub fn new(params: PDeltaParams, threshold: f64) -> Result<Self> {
        build_a_approx(params, threshold)
    }

    #[inline]
    pub fn p(&self) -> f64 {
        self.params.p
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        self.params.delta
    }

    /// `ω^A(t)`.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        if t <= self.threshold {
            self.params.omega(t)
        } else {
            let h = t - self.threshold;
            self.w0 + h * (self.w1 + 0.5 * self.w2 * h)
        }
    }

    /// `(ω^A)'(t)`.
    #[inline]
    pub fn d1(&self, t: f64) -> f64 {
        if t <= self.threshold {
            self.params.omega_d1(t)
        } else {
            self.w1 + self.w2 * (t - self.threshold)
        }
    }

    /// `(ω^A)''(t)`.
    #[inline]
    pub fn d2(&self, t: f64) -> f64 {
        if t <= self.threshold {
            self.params.omega_d2(t)
        } else {
            self.w2
        }
    }

    /// `a^A(t) = (ω^A)'(t)/t`, with `a^A(0) = δ^{p-2}`.
    #[inline]
    pub fn a_approx(&self, t: f64) -> f64 {
        if t <= self.threshold {
            self.params.a(t)
        } else {
            self.w2 + self.alpha1 / t
        }
    }

    #[inline]
    pub fn a_variant(&self, t: f64, variant: Variant) -> f64 {
        match variant {
            Variant::Exact => self.params.a(t),
            Variant::Approx => self.a_approx(t),
        }
    }

    /// `S^A(P)` or `S(P)`; the zero tensor maps to zero.
    pub fn stress(&self, p: &SymTensor, variant: Variant) -> SymTensor {
        let t = p.norm();
        if t == 0.0 {
            return SymTensor::zeros(p.dim());
        }
        p.scale(self.a_variant(t, variant))
    }

    /// `F^A(P)` or `F(P)`.
    pub fn f_map(&self, p: &SymTensor, variant: Variant) -> SymTensor {
        let t = p.norm();
        if t == 0.0 {
            return SymTensor::zeros(p.dim());
        }
        p.scale(self.a_variant(t, variant).sqrt())
    }

    /// Linearization of `S^A` at `P`, usable for many directions.
    pub fn tangent(&self, p: &SymTensor) -> Result<Tangent> {
        let t = p.norm();
        if t == 0.0 {
            if self.params.delta == 0.0 && self.params.p < 2.0 {
                return Err(Error::Singular("derivative of S at P = 0 with delta = 0"));
            }
            return Ok(Tangent {
                a: self.a_approx(0.0),
                radial: 0.0,
                p: *p,
            });
        }
        let a = self.a_approx(t);
        let radial = (self.d2(t) - a) / (t * t);
        Ok(Tangent { a, radial, p: *p })
    }
}

impl NFunction for AApprox {
    fn value(&self, t: f64) -> f64 {
        AApprox::value(self, t)
    }
    fn d1(&self, t: f64) -> f64 {
        AApprox::d1(self, t)
    }
    fn d2(&self, t: f64) -> f64 {
        AApprox::d2(self, t)
    }
}

/// `Q ↦ a Q + radial (P·Q) P`, the directional derivative `∂S^A(P)[Q]`.
#[derive(Debug, Clone, Copy)]
pub struct Tangent {
    a: f64,
    radial: f64,
    p: SymTensor,
}

impl Tangent {
    #[inline]
    pub fn apply(&self, q: &SymTensor) -> SymTensor {
        let mut out = q.scale(self.a);
        if self.radial != 0.0 {
            out += self.p.scale(self.radial * self.p.dot(q));
        }
        out
    }
}

pub fn ua_eval(ap: &AApprox, t: f64, order: Order) -> Result<f64> {
    check_nonneg("t", t)?;
    match order {
        Order::Value => Ok(ap.value(t)),
        Order::First => Ok(ap.d1(t)),
        Order::Second => {
            if t == 0.0 && ap.delta() == 0.0 && ap.p() < 2.0 {
                return Err(Error::Singular("(omega^A)'' at t = 0 with delta = 0"));
            }
            Ok(ap.d2(t))
        }
    }
}

pub fn a_small_eval(ap: &AApprox, t: f64, variant: Variant) -> Result<f64> {
    check_nonneg("t", t)?;
    if t == 0.0 && ap.delta() == 0.0 && ap.p() < 2.0 {
        return Err(Error::Singular("a(0) with delta = 0"));
    }
    Ok(ap.a_variant(t, variant))
}

pub fn s_eval(ap: &AApprox, p: &SymTensor, variant: Variant) -> SymTensor {
    ap.stress(p, variant)
}

pub fn f_eval(ap: &AApprox, p: &SymTensor, variant: Variant) -> SymTensor {
    ap.f_map(p, variant)
}

pub fn ds_apply(ap: &AApprox, p: &SymTensor, q: &SymTensor) -> Result<SymTensor> {
    Ok(ap.tangent(p)?.apply(q))
}

/// `∂S^A(P)[Q]·Q`.
pub fn pp_form(ap: &AApprox, p: &SymTensor, q: &SymTensor) -> Result<f64> {
    Ok(ds_apply(ap, p, q)?.dot(q))
}

/// Ratios of the monotonicity product `(S^A(P)−S^A(Q))·(P−Q)` to
/// `|F^A(P)−F^A(Q)|²` and to `a^A(|P|+|P−Q|)|P−Q|²`.
pub fn hammer_ratios(ap: &AApprox, p: &SymTensor, q: &SymTensor) -> Result<(f64, f64)> {
    let diff = *p - *q;
    let dist = diff.norm();
    if dist == 0.0 {
        return Err(Error::DegeneratePair);
    }
    let mono = (ap.stress(p, Variant::Approx) - ap.stress(q, Variant::Approx)).dot(&diff);
    let f_gap = (ap.f_map(p, Variant::Approx) - ap.f_map(q, Variant::Approx)).norm_sq();
    let weight = ap.a_approx(p.norm() + dist) * dist * dist;
    Ok((mono / f_gap, mono / weight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ap(p: f64, delta: f64, a: f64) -> AApprox {
        build_a_approx(PDeltaParams::new(p, delta, 3).unwrap(), a).unwrap()
    }

    #[test]
    fn coefficients_for_quadratic_potential() {
        let a = ap(2.0, 1.0, 5.0);
        assert_eq!((a.alpha2, a.alpha1), (0.5, 0.0));
        assert!(a.alpha0.abs() < 1e-14);
    }

    #[test]
    fn coefficients_for_pure_power() {
        let a = ap(1.5, 0.0, 1.0);
        assert_relative_eq!(a.alpha2, 0.25, max_relative = 1e-15);
        assert_relative_eq!(a.alpha1, 0.5, max_relative = 1e-15);
        assert_relative_eq!(a.alpha0, -1.0 / 12.0, max_relative = 1e-14);
    }

    #[test]
    fn alpha1_matches_defining_formula() {
        let a = ap(1.3, 0.01, 7.0);
        let ps = a.params;
        let direct = ps.omega_d1(7.0) - ps.omega_d2(7.0) * 7.0;
        assert_relative_eq!(a.alpha1, direct, max_relative = 1e-12);
    }

    #[test]
    fn c2_matching_at_threshold() {
        let a = ap(1.3, 0.01, 7.0);
        let ps = a.params;
        let t = 7.0;
        let tail_value = a.alpha2 * t * t + a.alpha1 * t + a.alpha0;
        let tail_slope = 2.0 * a.alpha2 * t + a.alpha1;
        assert_relative_eq!(tail_value, ps.omega(t), max_relative = 1e-10);
        assert_relative_eq!(tail_slope, ps.omega_d1(t), max_relative = 1e-10);
        assert_relative_eq!(2.0 * a.alpha2, ps.omega_d2(t), max_relative = 1e-10);
    }

    #[test]
    fn tail_polynomial_value() {
        let a = ap(1.5, 0.0, 1.0);
        assert_relative_eq!(ua_eval(&a, 4.0, Order::Value).unwrap(), 71.0 / 12.0, max_relative = 1e-14);
        assert_eq!(ua_eval(&a, 9.0, Order::Second).unwrap(), 2.0 * a.alpha2);
        assert_eq!(ua_eval(&a, 0.5, Order::Value).unwrap(), a.params.omega(0.5));
        assert!(ua_eval(&a, -1.0, Order::Value).is_err());
    }

    #[test]
    fn a_small_values() {
        let a = ap(1.5, 0.3, 4.0);
        assert_relative_eq!(
            a_small_eval(&a, 4.0, Variant::Approx).unwrap(),
            4.3_f64.powf(-0.5),
            max_relative = 1e-14
        );
        let limit = 4.3_f64.powf(-1.5) * (0.3 + 0.5 * 4.0);
        assert_relative_eq!(a_small_eval(&a, 1e12, Variant::Approx).unwrap(), limit, max_relative = 1e-6);
        let quad = ap(2.0, 0.3, 4.0);
        for t in [0.0, 1.0, 10.0, 1e6] {
            assert_eq!(a_small_eval(&quad, t, Variant::Approx).unwrap(), 1.0);
        }
        assert!(a_small_eval(&ap(1.5, 0.0, 2.0), 0.0, Variant::Exact).is_err());
    }

    #[test]
    fn stress_and_f_examples() {
        let a = ap(1.5, 1.0, 10.0);
        let p = SymTensor::diag(&[3.0, 0.0, 0.0]);
        let s = s_eval(&a, &p, Variant::Exact);
        assert_relative_eq!(s.get(0, 0), 1.5, max_relative = 1e-14);
        let f = f_eval(&a, &p, Variant::Exact);
        assert_relative_eq!(f.get(0, 0), 3.0 * 4.0_f64.powf(-0.25), max_relative = 1e-14);
        assert!(s_eval(&a, &SymTensor::zeros(3), Variant::Approx).is_zero());
        assert!(f_eval(&a, &SymTensor::zeros(3), Variant::Exact).is_zero());
        let lin = ap(2.0, 0.4, 3.0);
        let q = SymTensor::from_slots(3, &[1.0, -2.0, 0.5, 7.0, 3.0, -1.0]);
        assert_eq!(s_eval(&lin, &q, Variant::Approx), q);
        assert_eq!(f_eval(&lin, &q, Variant::Approx), q);
    }

    #[test]
    fn degenerate_zero_gradient() {
        let a = ap(1.5, 0.0, 2.0);
        assert!(s_eval(&a, &SymTensor::zeros(2), Variant::Exact).is_zero());
        assert!(ds_apply(&a, &SymTensor::zeros(2), &SymTensor::identity(2)).is_err());
        let b = ap(1.5, 0.25, 2.0);
        let q = SymTensor::identity(2);
        let d = ds_apply(&b, &SymTensor::zeros(2), &q).unwrap();
        assert_relative_eq!(d.get(0, 0), 0.25_f64.powf(-0.5), max_relative = 1e-14);
    }

    #[test]
    fn ds_apply_orthogonal_direction_and_linear_case() {
        let a = ap(1.4, 0.2, 3.0);
        let p = SymTensor::diag(&[2.0, 0.0]);
        let q = SymTensor::from_slots(2, &[0.0, 1.0, 0.0]);
        let d = ds_apply(&a, &p, &q).unwrap();
        assert_relative_eq!(d.get(0, 1), a.a_approx(2.0), max_relative = 1e-14);
        let lin = ap(2.0, 0.2, 3.0);
        let qq = SymTensor::from_slots(2, &[1.0, 2.0, -3.0]);
        assert_eq!(ds_apply(&lin, &p, &qq).unwrap(), qq);
        assert_eq!(pp_form(&lin, &p, &qq).unwrap(), qq.norm_sq());
        assert_eq!(pp_form(&a, &p, &SymTensor::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn hammer_ratios_linear_and_degenerate() {
        let lin = ap(2.0, 0.7, 1.0);
        let p = SymTensor::from_slots(3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
        let q = SymTensor::from_slots(3, &[0.0, 1.0, 1.0, 2.0, 0.0, -3.0]);
        let (r1, r2) = hammer_ratios(&lin, &p, &q).unwrap();
        assert_relative_eq!(r1, 1.0, max_relative = 1e-12);
        assert_relative_eq!(r2, 1.0, max_relative = 1e-12);
        assert!(matches!(hammer_ratios(&lin, &p, &p), Err(Error::DegeneratePair)));
    }

    #[test]
    fn r1_is_one_against_zero() {
        let a = ap(1.5, 1.0, 10.0);
        for scale in [1e-6, 1e-3, 1e-1] {
            let p = SymTensor::diag(&[scale, -0.5 * scale, 0.2 * scale]);
            let (r1, _) = hammer_ratios(&a, &p, &SymTensor::zeros(3)).unwrap();
            assert_relative_eq!(r1, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn build_rejects_small_threshold() {
        let ps = PDeltaParams::new(1.5, 0.1, 2).unwrap();
        assert!(build_a_approx(ps, 0.5).is_err());
        assert!(build_a_approx(ps, f64::NAN).is_err());
    }
}
