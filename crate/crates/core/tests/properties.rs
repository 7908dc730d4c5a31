//! Randomized invariants of the N-function, operator, grid and export layers.

use pdelta_core::export::fmt_real;
use pdelta_core::grid::{assemble_energy, assemble_hessian, sym_gradient_at};
use pdelta_core::nfunc::{conjugate_eval, shift_eval, Order};
use pdelta_core::operator::hammer_ratios;
use pdelta_core::{build_mesh, AApprox, Field, PDeltaParams, SymTensor, Variant};
use proptest::prelude::*;

fn exponent() -> impl Strategy<Value = f64> {
    1.05f64..=2.0
}

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.log10()..hi.log10()).prop_map(|e| 10f64.powf(e))
}

fn tensor(scale: f64) -> impl Strategy<Value = SymTensor> {
    prop::collection::vec(-1.0f64..1.0, 6).prop_map(move |s| SymTensor::from_slots(3, &s).scale(scale))
}

fn approx(p: f64, delta: f64, a: f64) -> AApprox {
    AApprox::new(PDeltaParams::new(p, delta, 3).unwrap(), a).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn balanced_bounds(p in exponent(), delta in log_uniform(1e-4, 1.0), t in log_uniform(1e-6, 1e6)) {
        let w = PDeltaParams::new(p, delta, 3).unwrap();
        let slack = 1e-12;
        prop_assert!(w.omega(t) <= w.omega_d1(t) * t * (1.0 + slack));
        prop_assert!(w.omega_d1(t) * t <= 2f64.powf(p + 1.0) * w.omega(t) * (1.0 + slack));
        prop_assert!((p - 1.0) * w.omega_d1(t) <= w.omega_d2(t) * t * (1.0 + slack));
        prop_assert!(w.omega_d2(t) * t <= w.omega_d1(t) * (1.0 + slack));
    }

    #[test]
    fn young_inequality(p in exponent(), delta in log_uniform(1e-4, 1.0), s in log_uniform(1e-3, 1e3), t in log_uniform(1e-3, 1e3)) {
        let w = PDeltaParams::new(p, delta, 3).unwrap();
        let conj = conjugate_eval(&w, t).unwrap();
        prop_assert!(s * t <= (w.omega(s) + conj) * (1.0 + 1e-12));
        let tight = w.omega_d1(s);
        let both = w.omega(s) + conj_at(&w, tight);
        prop_assert!((s * tight - both).abs() <= 1e-9 * both);
    }

    #[test]
    fn zero_shift_is_identity(p in exponent(), delta in 0.0f64..1.0, t in log_uniform(1e-6, 1e6)) {
        let w = PDeltaParams::new(p, delta, 3).unwrap();
        let v = shift_eval(&w, 0.0, t, Order::Value).unwrap();
        prop_assert!((v - w.omega(t)).abs() <= 1e-10 * w.omega(t));
        prop_assert_eq!(shift_eval(&w, 0.0, t, Order::First).unwrap(), w.omega_d1(t));
    }

    #[test]
    fn scaling_bound(p in exponent(), delta in log_uniform(1e-4, 1.0), a in log_uniform(1.0, 100.0), lambda in 0.0f64..100.0, t in log_uniform(1e-4, 1e4)) {
        let ap = approx(p, delta, a);
        let bound = lambda.max(lambda * lambda) * ap.value(t);
        prop_assert!(ap.value(lambda * t) <= bound * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn approximation_bounds(p in exponent(), delta in log_uniform(1e-4, 1.0), a in log_uniform(1.0, 100.0), t in log_uniform(1e-8, 1e8)) {
        let ap = approx(p, delta, a);
        let w = ap.params;
        let slack = 1.0 + 1e-12;
        prop_assert!((p - 1.0) * w.omega(t) <= ap.value(t) * slack);
        prop_assert!(ap.value(t) <= 0.5 * delta.powf(p - 2.0) * t * t * slack);
        prop_assert!((p - 1.0) * (delta + a).powf(p - 2.0) <= ap.a_approx(t) * slack);
        prop_assert!(ap.a_approx(t) <= delta.powf(p - 2.0) * slack);
        prop_assert!(ap.a_approx(t * 1.5) <= ap.a_approx(t) * slack);
        if t <= a {
            prop_assert_eq!(ap.value(t), w.omega(t));
        }
    }

    #[test]
    fn approximation_agrees_below_threshold(p in exponent(), delta in log_uniform(1e-4, 1.0), q in tensor(1.0), r in 0.0f64..50.0) {
        let ap = approx(p, delta, 50.0);
        let pt = if q.norm() > 0.0 { q.scale(r / q.norm()) } else { q };
        prop_assert_eq!(ap.stress(&pt, Variant::Approx), ap.stress(&pt, Variant::Exact));
    }

    #[test]
    fn monotone_stress(p in exponent(), delta in log_uniform(1e-4, 1.0), a in log_uniform(1.0, 1e3), s1 in log_uniform(1e-3, 1e3), s2 in log_uniform(1e-3, 1e3), x in tensor(1.0), y in tensor(1.0)) {
        prop_assume!(x.norm() > 1e-3 && y.norm() > 1e-3);
        let ap = approx(p, delta, a);
        let (pt, qt) = (x.scale(s1), y.scale(s2));
        let mono = (ap.stress(&pt, Variant::Approx) - ap.stress(&qt, Variant::Approx)).dot(&(pt - qt));
        prop_assert!(mono > 0.0);
        let (r1, r2) = hammer_ratios(&ap, &pt, &qt).unwrap();
        prop_assert!(r1.is_finite() && r1 > 0.0 && r2.is_finite() && r2 > 0.0);
    }

    #[test]
    fn quadratic_potential_has_unit_ratios(delta in log_uniform(1e-4, 1.0), x in tensor(3.0), y in tensor(3.0)) {
        prop_assume!((x - y).norm() > 1e-6);
        let ap = approx(2.0, delta, 10.0);
        let (r1, r2) = hammer_ratios(&ap, &x, &y).unwrap();
        prop_assert!((r1 - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_norm_properties(x in tensor(10.0)) {
        prop_assert!(x.norm() >= 0.0);
        prop_assert_eq!(x.norm() == 0.0, x.is_zero());
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(x.get(i, j), x.get(j, i));
            }
        }
    }

    #[test]
    fn fmt_real_round_trips(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt_real(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }
}

fn conj_at(w: &PDeltaParams, t: f64) -> f64 {
    conjugate_eval(w, t).unwrap()
}

fn field(mesh: &pdelta_core::Mesh, values: &[f64]) -> Field {
    let mut f = Field::zeros(mesh);
    for (v, s) in f.values_mut().iter_mut().zip(values.iter().cycle()) {
        *v = *s;
    }
    f.apply_dirichlet(mesh);
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn energy_is_convex(p in exponent(), delta in log_uniform(1e-3, 1.0), a in log_uniform(1.0, 100.0),
                        u in prop::collection::vec(-2.0f64..2.0, 50), v in prop::collection::vec(-2.0f64..2.0, 50),
                        f in prop::collection::vec(-5.0f64..5.0, 50)) {
        let mesh = build_mesh(2, 4, 1.0).unwrap();
        let ap = AApprox::new(PDeltaParams::new(p, delta, 2).unwrap(), a).unwrap();
        let (u, v, f) = (field(&mesh, &u), field(&mesh, &v), field(&mesh, &f));
        let mut mid = u.clone();
        mid.axpy(1.0, &v);
        mid.values_mut().iter_mut().for_each(|x| *x *= 0.5);
        let eu = assemble_energy(&mesh, &ap, &u, &f).unwrap();
        let ev = assemble_energy(&mesh, &ap, &v, &f).unwrap();
        let em = assemble_energy(&mesh, &ap, &mid, &f).unwrap();
        prop_assert!(em <= 0.5 * (eu + ev) + 1e-12 * (eu.abs() + ev.abs()));
    }

    #[test]
    fn hessian_is_symmetric(p in exponent(), u in prop::collection::vec(-2.0f64..2.0, 50)) {
        let mesh = build_mesh(2, 4, 1.0).unwrap();
        let ap = AApprox::new(PDeltaParams::new(p, 0.1, 2).unwrap(), 10.0).unwrap();
        let h = assemble_hessian(&mesh, &ap, &field(&mesh, &u)).unwrap();
        prop_assert_eq!(h.asymmetry(), 0.0);
        prop_assert!(h.diagonal().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn linear_fields_have_constant_strain(b in prop::collection::vec(-3.0f64..3.0, 9), c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let mesh = build_mesh(3, 2, 1.0).unwrap();
        let u = Field::from_fn(&mesh, |x| {
            let mut out = [0.0; 3];
            for i in 0..3 {
                out[i] = c[i] + (0..3).map(|j| b[3 * i + j] * x[j]).sum::<f64>();
            }
            out
        });
        let g: Vec<f64> = b.clone();
        let expected = SymTensor::sym_part(3, &g);
        for cell in 0..mesh.n_cells() {
            for qp in 0..mesh.n_quad() {
                let du = sym_gradient_at(&mesh, &u, cell, qp).unwrap();
                prop_assert!((du - expected).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn field_json_round_trips(u in prop::collection::vec(-1e3f64..1e3, 27)) {
        let mesh = build_mesh(2, 3, 2.0).unwrap();
        let f = field(&mesh, &u);
        let back = Field::from_json(&mesh, &f.to_json()).unwrap();
        prop_assert_eq!(back, f);
    }
}
