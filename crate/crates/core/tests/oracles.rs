//! Independent oracles for the scalar, operator and grid layers.

use approx::assert_relative_eq;
use pdelta_core::grid::{assemble_energy, assemble_gradient, assemble_hessian, energy_increment, lumped_mass};
use pdelta_core::nfunc::{conjugate_eval, log_grid, omega_eval, shift_eval, Order};
use pdelta_core::operator::{ds_apply, s_eval, ua_eval};
use pdelta_core::parabolic::{linear_parabolic_oracle, run_parabolic, InitialData};
use pdelta_core::solver::{builtin_load, linear_oracle, manufactured_load_p2, solve_steady, Builtin, SolverOptions};
use pdelta_core::{build_mesh, AApprox, Field, PDeltaParams, SymTensor, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Five-point Gauss-Legendre on `[a, b]`.
fn gl5<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [0.0, 0.538_469_310_105_683_1, -0.538_469_310_105_683_1, 0.906_179_845_938_664, -0.906_179_845_938_664];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    X.iter().zip(W).map(|(x, w)| w * f(m + r * x)).sum::<f64>() * r
}

/// `∫₀ᵗ (δ+s)^{p−2} s ds` by composite quadrature on geometrically graded
/// cells toward the origin, where the integrand is least smooth.
fn omega_oracle(p: f64, delta: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let integrand = |s: f64| (delta + s).powf(p - 2.0) * s;
    let mut total = 0.0;
    let mut hi = t;
    for _ in 0..200 {
        let lo = 0.8 * hi;
        for k in 0..4 {
            let a = lo + (hi - lo) * k as f64 / 4.0;
            let b = lo + (hi - lo) * (k + 1) as f64 / 4.0;
            total += gl5(&integrand, a, b);
        }
        hi = lo;
    }
    total + gl5(&integrand, 0.0, hi)
}

/// `sup_s (s t − ω(s))` by golden-section search on a bracket found by doubling.
fn conjugate_oracle(params: &PDeltaParams, t: f64) -> f64 {
    let g = |s: f64| s * t - params.omega(s);
    let mut hi = 1.0;
    while params.omega_d1(hi) < t {
        hi *= 2.0;
    }
    let (mut a, mut b) = (0.0, hi);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    g(0.5 * (a + b))
}

#[test]
fn omega_matches_graded_quadrature() {
    for &p in &[1.1, 1.5, 1.9, 2.0] {
        for &delta in &[0.0, 1e-4, 0.1, 1.0] {
            let params = PDeltaParams::new(p, delta, 3).unwrap();
            for &t in &log_grid(1e-6, 1e6, 37) {
                let oracle = omega_oracle(p, delta, t);
                assert_relative_eq!(params.omega(t), oracle, max_relative = 1e-9);
            }
        }
    }
}

#[test]
fn omega_derivatives_match_central_differences() {
    let params = PDeltaParams::new(1.5, 1.0, 3).unwrap();
    assert_relative_eq!(omega_eval(&params, 3.0, Order::Second).unwrap(), 0.3125, max_relative = 1e-14);
    for &t in &log_grid(1e-3, 1e3, 25) {
        let h = 1e-5 * t;
        let d1 = (params.omega(t + h) - params.omega(t - h)) / (2.0 * h);
        let d2 = (params.omega_d1(t + h) - params.omega_d1(t - h)) / (2.0 * h);
        assert_relative_eq!(params.omega_d1(t), d1, max_relative = 1e-7);
        assert_relative_eq!(params.omega_d2(t), d2, max_relative = 1e-7);
    }
}

#[test]
fn conjugate_matches_dense_supremum() {
    let params = PDeltaParams::new(1.5, 0.0, 3).unwrap();
    assert_relative_eq!(conjugate_eval(&params, 1.0).unwrap(), 1.0 / 3.0, max_relative = 1e-10);
    for &(p, delta) in &[(1.5, 0.0), (1.1, 0.1), (1.9, 1.0), (1.5, 1e-4)] {
        let params = PDeltaParams::new(p, delta, 3).unwrap();
        for &t in &log_grid(1e-4, 1e2, 13) {
            let oracle = conjugate_oracle(&params, t);
            assert_relative_eq!(conjugate_eval(&params, t).unwrap(), oracle, max_relative = 1e-8);
        }
    }
}

#[test]
fn shift_matches_definition() {
    // φ_a(t) = ∫₀ᵗ φ′(a+s) s/(a+s) ds
    let params = PDeltaParams::new(1.5, 0.1, 3).unwrap();
    for &a in &[0.0, 0.3, 2.0] {
        for &t in &[0.01, 0.5, 4.0] {
            let integrand = |s: f64| params.omega_d1(a + s) * s / (a + s);
            let n = 400;
            let oracle: f64 = (0..n)
                .map(|k| gl5(&integrand, t * k as f64 / n as f64, t * (k + 1) as f64 / n as f64))
                .sum();
            assert_relative_eq!(shift_eval(&params, a, t, Order::Value).unwrap(), oracle, max_relative = 1e-9);
            let d1 = params.omega_d1(a + t) * t / (a + t);
            assert_relative_eq!(shift_eval(&params, a, t, Order::First).unwrap(), d1, max_relative = 1e-12);
        }
    }
}

#[test]
fn tail_coefficients_from_the_threshold_values() {
    let params = PDeltaParams::new(1.5, 0.0, 3).unwrap();
    let ap = AApprox::new(params, 1.0).unwrap();
    assert_relative_eq!(ap.alpha2, 0.25, max_relative = 1e-14);
    assert_relative_eq!(ap.alpha1, 0.5, max_relative = 1e-14);
    assert_relative_eq!(ap.alpha0, -1.0 / 12.0, max_relative = 1e-13);
    assert_relative_eq!(ua_eval(&ap, 4.0, Order::Value).unwrap(), 71.0 / 12.0, max_relative = 1e-14);

    let ap = AApprox::new(PDeltaParams::new(2.0, 1.0, 3).unwrap(), 5.0).unwrap();
    assert_eq!((ap.alpha2, ap.alpha1, ap.alpha0), (0.5, 0.0, 0.0));
}

#[test]
fn stress_and_flux_closed_forms() {
    let ap = AApprox::new(PDeltaParams::new(1.5, 1.0, 3).unwrap(), 100.0).unwrap();
    let p = SymTensor::diag(&[3.0, 0.0, 0.0]);
    let s = s_eval(&ap, &p, Variant::Exact);
    assert_relative_eq!(s.get(0, 0), 1.5, max_relative = 1e-15);
    let f = ap.f_map(&p, Variant::Exact);
    assert_relative_eq!(f.get(0, 0), 3.0 * 4f64.powf(-0.25), max_relative = 1e-15);
}

#[test]
fn tangent_matches_stress_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let p_exp = rng.gen_range(1.05..2.0);
        let delta = 10f64.powf(rng.gen_range(-4.0..0.0));
        let threshold = 10f64.powf(rng.gen_range(0.0..2.0));
        let ap = AApprox::new(PDeltaParams::new(p_exp, delta, 3).unwrap(), threshold).unwrap();
        let scale = 10f64.powf(rng.gen_range(-2.0..2.5));
        let slots: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let dir: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = SymTensor::from_slots(3, &slots);
        let q = SymTensor::from_slots(3, &dir);
        if (p.norm() - threshold).abs() < 1e-3 * (1.0 + threshold) {
            continue;
        }
        let h = 1e-6 * (1.0 + p.norm());
        let plus = s_eval(&ap, &(p + q.scale(h)), Variant::Approx);
        let minus = s_eval(&ap, &(p - q.scale(h)), Variant::Approx);
        let fd = (plus - minus).scale(0.5 / h);
        let exact = ds_apply(&ap, &p, &q).unwrap();
        let err = (fd - exact).norm() / exact.norm();
        assert!(err < 1e-6, "relative error {err:e} at |P| = {}", p.norm());
    }
}

#[test]
fn manufactured_load_spot_value() {
    // u* = (s, s), s = sin πx sin πy; at (¼, ¼) both components of
    // −div Du* equal ½(3π²s − ∂₁∂₂s) = π²/2.
    let mesh = build_mesh(2, 8, 1.0).unwrap();
    let (u, f) = manufactured_load_p2(&mesh, Builtin::Manufactured).unwrap();
    let node = mesh.node_index(&[2, 2]);
    let expected = std::f64::consts::PI.powi(2) / 2.0;
    assert_relative_eq!(f.node_value(node)[0], expected, max_relative = 1e-14);
    assert_relative_eq!(f.node_value(node)[1], expected, max_relative = 1e-14);
    assert_relative_eq!(u.node_value(node)[0], 0.5, max_relative = 1e-14);
    assert!(u.is_dirichlet_conforming(&mesh));
}

#[test]
fn quadratic_energy_of_linear_field() {
    // u = B x on the unit square (no boundary condition needed for the
    // energy): ½∫|Bsym|² = ½|Bsym|².
    let mesh = build_mesh(2, 4, 1.0).unwrap();
    let u = Field::from_fn(&mesh, |x| [x[0] + 2.0 * x[1], 3.0 * x[0] - x[1], 0.0]);
    let ap = AApprox::new(PDeltaParams::new(2.0, 0.3, 2).unwrap(), 10.0).unwrap();
    let bsym_sq = 1.0 + 2.0 * 2.5f64.powi(2) + 1.0;
    let e = assemble_energy(&mesh, &ap, &u, &Field::zeros(&mesh)).unwrap();
    assert_relative_eq!(e, 0.5 * bsym_sq, max_relative = 1e-12);
}

#[test]
fn gradient_and_hessian_match_energy_differences() {
    let mesh = build_mesh(2, 6, 1.0).unwrap();
    let ap = AApprox::new(PDeltaParams::new(1.5, 0.1, 2).unwrap(), 10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut random = |amp: f64| {
        let mut f = Field::zeros(&mesh);
        f.values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-amp..amp));
        f.apply_dirichlet(&mesh);
        f
    };
    let (u, f, v) = (random(1.0), random(1.0), random(1.0));
    let g = assemble_gradient(&mesh, &ap, &u, &f).unwrap();
    let vd = v.to_dofs(&mesh);
    let exact: f64 = g.iter().zip(&vd).map(|(a, b)| a * b).sum();
    let h = 1e-5;
    let mut step = v.clone();
    step.values_mut().iter_mut().for_each(|x| *x *= h);
    let plus = energy_increment(&mesh, &ap, &u, &step, &f).unwrap();
    step.values_mut().iter_mut().for_each(|x| *x = -*x);
    let minus = energy_increment(&mesh, &ap, &u, &step, &f).unwrap();
    assert_relative_eq!((plus - minus) / (2.0 * h), exact, max_relative = 1e-6);

    let hv = assemble_hessian(&mesh, &ap, &u).unwrap().mul_vec(&vd);
    let mut up = u.clone();
    up.axpy(h, &v);
    let mut um = u.clone();
    um.axpy(-h, &v);
    let gp = assemble_gradient(&mesh, &ap, &up, &f).unwrap();
    let gm = assemble_gradient(&mesh, &ap, &um, &f).unwrap();
    let num: f64 = (0..hv.len()).map(|i| ((gp[i] - gm[i]) / (2.0 * h) - hv[i]).powi(2)).sum();
    let den: f64 = hv.iter().map(|x| x * x).sum();
    assert!((num / den).sqrt() < 1e-5);
}

#[test]
fn quadratic_solve_matches_linear_oracle() {
    for n in [8, 16] {
        let mesh = build_mesh(2, n, 1.0).unwrap();
        let ap = AApprox::new(PDeltaParams::new(2.0, 0.5, 2).unwrap(), 10.0).unwrap();
        let f = builtin_load(&mesh, Builtin::Smooth);
        let sol = solve_steady(&mesh, &ap, &f, &SolverOptions::default()).unwrap();
        let lin = linear_oracle(&mesh, &f).unwrap();
        assert!(sol.u.max_abs_diff(&lin) < 1e-10);
        assert!(sol.newton_iters <= 2);
    }
}

#[test]
fn quadratic_trajectory_matches_linear_stepping() {
    let mesh = build_mesh(2, 8, 1.0).unwrap();
    let params = PDeltaParams::new(2.0, 0.1, 2).unwrap();
    let u0 = Field::from_fn_dirichlet(&mesh, |x| [x[0] * (1.0 - x[0]) * x[1], 0.0, 0.0]);
    let f = builtin_load(&mesh, Builtin::Smooth);
    let load = |_t: f64| f.clone();
    let run = run_parabolic(&mesh, params, 50.0, &u0, InitialData::Prepared, load, 0.02, 0.002, &SolverOptions::default())
        .unwrap();
    let oracle = linear_parabolic_oracle(&mesh, &u0, load, 0.02, 0.002).unwrap();
    assert_eq!(run.trajectory.len(), oracle.len());
    for (a, b) in run.trajectory.iter().zip(&oracle) {
        assert!(a.max_abs_diff(b) < 1e-9);
    }
    let m = lumped_mass(&mesh);
    // two components per interior node, each carrying h² of mass
    assert_relative_eq!(m.iter().sum::<f64>(), 2.0 * 49.0 / 64.0, max_relative = 1e-14);
}
