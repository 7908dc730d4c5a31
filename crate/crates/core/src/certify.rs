//! Sampled property suites: the N-function and operator inequalities, the
//! equivalence-constant certification and the finite-difference consistency
//! of the discrete derivatives. `pdelta check` runs [`run_all`].

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::export::fmt_real;
use crate::grid::{
    assemble_gradient, assemble_hessian, assemble_linear_stiffness, build_mesh, energy_increment, Field, Mesh,
};
use crate::linalg::norm2;
use crate::nfunc::{
    characteristics_of, check_shift_change, check_shift_equivalence, conjugate_eval, empirical_delta2,
    legendre_conjugate, log_grid, omega_d1_inverse, shift_eval, Order, PDeltaParams,
};
use crate::operator::{hammer_ratios, AApprox, Variant};
use crate::solver::{linear_oracle, manufactured_load_p2, nodal_l2_error, solve_steady, Builtin, SolverOptions};
use crate::tensor::SymTensor;

/// Exponents of the inequality grid.
pub const P_VALUES: [f64; 4] = [1.1, 1.5, 1.9, 2.0];
pub const DELTA_VALUES: [f64; 3] = [1e-4, 0.1, 1.0];
pub const A_VALUES: [f64; 3] = [1.0, 10.0, 100.0];
/// Relative slack allowed in the sampled inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-12;
/// Factor by which sweep-fitted equivalence bounds are widened.
pub const HAMMER_MARGIN: f64 = 1.05;

/// Generator for an independent stream derived from one seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Relative amount by which `lhs ≤ rhs` is violated (negative when it holds).
pub fn rel_excess(lhs: f64, rhs: f64) -> f64 {
    if rhs != 0.0 {
        (lhs - rhs) / rhs.abs()
    } else if lhs <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Worst relative excess of one named inequality over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Worst {
    pub name: &'static str,
    pub excess: f64,
}

fn track(list: &mut Vec<Worst>, name: &'static str, lhs: f64, rhs: f64) {
    let e = rel_excess(lhs, rhs);
    let e = if e.is_nan() { f64::INFINITY } else { e };
    match list.iter_mut().find(|w| w.name == name) {
        Some(w) => w.excess = w.excess.max(e),
        None => list.push(Worst { name, excess: e }),
    }
}

/// Bounds on `a^A`, `ω^A` and the balanced characteristics of `ω` sampled
/// on `t_grid`. Every entry should be at most [`INEQUALITY_SLACK`].
pub fn inequality_worst(ap: &AApprox, t_grid: &[f64]) -> Vec<Worst> {
    let ps = ap.params;
    let (p, delta, a) = (ps.p, ps.delta, ap.threshold);
    let a_cap = delta.powf(p - 2.0);
    let a_floor = (p - 1.0) * (delta + a).powf(p - 2.0);
    let mut out = Vec::new();
    let mut prev: Option<f64> = None;
    for &t in t_grid {
        let aa = ap.a_approx(t);
        let wa = ap.value(t);
        let w = ps.omega(t);
        let w1 = ps.omega_d1(t);
        let w2 = ps.omega_d2(t);
        track(&mut out, "(p-1) a <= a^A", (p - 1.0) * ps.a(t), aa);
        track(&mut out, "a^A <= delta^(p-2)", aa, a_cap);
        track(&mut out, "(p-1)(delta+A)^(p-2) <= a^A", a_floor, aa);
        if let Some(before) = prev {
            track(&mut out, "a^A non-increasing", aa, before);
        }
        prev = Some(aa);
        track(&mut out, "(p-1) omega <= omega^A", (p - 1.0) * w, wa);
        track(&mut out, "omega^A <= delta^(p-2) t^2/2", wa, 0.5 * a_cap * t * t);
        track(&mut out, "(p-1)(delta+A)^(p-2) t^2/2 <= omega^A", 0.5 * a_floor * t * t, wa);
        track(&mut out, "omega <= omega' t", w, w1 * t);
        track(&mut out, "omega' t <= 2^(p+1) omega", w1 * t, 2f64.powf(p + 1.0) * w);
        track(&mut out, "(p-1) omega' <= omega'' t", (p - 1.0) * w1, w2 * t);
        track(&mut out, "omega'' t <= omega'", w2 * t, w1);
    }
    out
}

/// Largest relative mismatch of value, slope and curvature of the quadratic
/// tail `α₂t² + α₁t + α₀` against `ω` at `t = A`.
pub fn c2_mismatch(ap: &AApprox) -> f64 {
    let ps = ap.params;
    let t = ap.threshold;
    let rel = |x: f64, y: f64| ((x - y) / y).abs();
    let v = rel(ap.alpha2 * t * t + ap.alpha1 * t + ap.alpha0, ps.omega(t));
    let s = rel(2.0 * ap.alpha2 * t + ap.alpha1, ps.omega_d1(t));
    let c = rel(2.0 * ap.alpha2, ps.omega_d2(t));
    v.max(s).max(c)
}

/// Equivalence bounds `r1 ∈ [lo, hi]`, `r2 ∈ [lo, hi]` for one exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HammerBounds {
    pub p: f64,
    pub r1: (f64, f64),
    pub r2: (f64, f64),
}

impl HammerBounds {
    pub fn contains(&self, r1: f64, r2: f64) -> bool {
        r1 >= self.r1.0 && r1 <= self.r1.1 && r2 >= self.r2.0 && r2 <= self.r2.1
    }
}

fn planar_pair(r: f64, rho: f64, theta: f64) -> (SymTensor, SymTensor) {
    let e1 = SymTensor::from_slots(2, &[1.0, 0.0, 0.0]);
    let e2 = SymTensor::from_slots(2, &[0.0, 0.0, 1.0]);
    let p = e1.scale(r);
    let q = p + (e1.scale(theta.cos()) + e2.scale(theta.sin())).scale(rho * r);
    (p, q)
}

/// Dense sweep at `δ = 1` over `|P|`, `|P−Q|/|P|`, the angle between `P`
/// and `Q − P`, and `A`, including `A` beyond every sampled norm (the
/// unapproximated operator). The ratios are invariant under
/// `(P, Q, δ, A) ↦ λ(P, Q, δ, A)`, so the sweep covers every `δ`. The raw
/// extremes are widened by [`HAMMER_MARGIN`].
pub fn fit_hammer_bounds(p: f64) -> Result<HammerBounds> {
    let params = PDeltaParams::new(p, 1.0, 2)?;
    let mut thresholds = log_grid(1.0, 1e8, 17);
    thresholds.push(1e15);
    let norms = log_grid(1e-6, 1e10, 65);
    let rhos = log_grid(1e-6, 1e3, 37);
    let mut r1 = (f64::INFINITY, f64::NEG_INFINITY);
    let mut r2 = (f64::INFINITY, f64::NEG_INFINITY);
    let mut record = |(x1, x2): (f64, f64)| {
        r1 = (r1.0.min(x1), r1.1.max(x1));
        r2 = (r2.0.min(x2), r2.1.max(x2));
    };
    for &a in &thresholds {
        let ap = AApprox::new(params, a)?;
        for &r in &norms {
            let zero = SymTensor::zeros(2);
            let e1 = SymTensor::from_slots(2, &[r, 0.0, 0.0]);
            record(hammer_ratios(&ap, &e1, &zero)?);
            record(hammer_ratios(&ap, &zero, &e1)?);
            for &rho in &rhos {
                for k in 0..=16 {
                    let (pp, qq) = planar_pair(r, rho, PI * k as f64 / 16.0);
                    if pp == qq {
                        continue;
                    }
                    record(hammer_ratios(&ap, &pp, &qq)?);
                }
            }
        }
    }
    let ok = [r1.0, r1.1, r2.0, r2.1].iter().all(|v| v.is_finite() && *v > 0.0);
    if !ok {
        return Err(Error::Certification(format!("hammer sweep for p = {p} produced non-finite ratios")));
    }
    Ok(HammerBounds {
        p,
        r1: (r1.0 / HAMMER_MARGIN, r1.1 * HAMMER_MARGIN),
        r2: (r2.0 / HAMMER_MARGIN, r2.1 * HAMMER_MARGIN),
    })
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> SymTensor {
    let n = if dim == 2 { 3 } else { 6 };
    loop {
        let slots: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = SymTensor::from_slots(dim, &slots);
        let norm = t.norm();
        if norm > 1e-3 {
            return t.scale(1.0 / norm);
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Seeded pair `(P, Q)` of 3×3 symmetric tensors with `|P|` log-uniform in
/// `[1e-4, 1e4]`; one in ten pairs has `Q = 0`, one in ten `P = 0`, the rest
/// `|P−Q|/|P|` log-uniform in `[1e-4, 1e2]`.
pub fn sample_pair<R: Rng>(rng: &mut R) -> (SymTensor, SymTensor) {
    let r = log_uniform(rng, 1e-4, 1e4);
    let p = random_unit(rng, 3).scale(r);
    match rng.gen_range(0..10) {
        0 => (p, SymTensor::zeros(3)),
        1 => (SymTensor::zeros(3), p),
        _ => {
            let gap = random_unit(rng, 3).scale(r * log_uniform(rng, 1e-4, 1e2));
            (p, p + gap)
        }
    }
}

/// Observed ranges of `r1`, `r2` over seeded pairs for one `(p, δ, A)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HammerValidation {
    pub delta: f64,
    pub threshold: f64,
    pub samples: usize,
    pub r1: (f64, f64),
    pub r2: (f64, f64),
    pub outside: usize,
}

pub fn validate_hammer<R: Rng>(
    bounds: &HammerBounds,
    delta: f64,
    threshold: f64,
    samples: usize,
    rng: &mut R,
) -> Result<HammerValidation> {
    let ap = AApprox::new(PDeltaParams::new(bounds.p, delta, 3)?, threshold)?;
    let mut r1 = (f64::INFINITY, f64::NEG_INFINITY);
    let mut r2 = (f64::INFINITY, f64::NEG_INFINITY);
    let mut outside = 0;
    let mut done = 0;
    while done < samples {
        let (p, q) = sample_pair(rng);
        if p == q {
            continue;
        }
        let (x1, x2) = hammer_ratios(&ap, &p, &q)?;
        r1 = (r1.0.min(x1), r1.1.max(x1));
        r2 = (r2.0.min(x2), r2.1.max(x2));
        if !bounds.contains(x1, x2) {
            outside += 1;
        }
        done += 1;
    }
    Ok(HammerValidation {
        delta,
        threshold,
        samples,
        r1,
        r2,
        outside,
    })
}

/// Largest relative error of `∂S^A(P)[Q]` against central differences of
/// `S^A` over seeded unit directions `Q` and `|P|` log-uniform in
/// `[1e-3, 1e3]`.
pub fn ds_fd_worst<R: Rng>(ap: &AApprox, samples: usize, rng: &mut R) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let p = random_unit(rng, 3).scale(log_uniform(rng, 1e-3, 1e3));
        let q = random_unit(rng, 3);
        let h = 1e-6 * p.norm();
        let plus = ap.stress(&(p + q.scale(h)), Variant::Approx);
        let minus = ap.stress(&(p - q.scale(h)), Variant::Approx);
        let fd = (plus - minus).scale(0.5 / h);
        let exact = ap.tangent(&p)?.apply(&q);
        worst = worst.max((fd - exact).norm() / exact.norm());
    }
    Ok(worst)
}

/// Seeded Dirichlet-conforming field with entries in `[-amp, amp]`.
pub fn random_field<R: Rng>(mesh: &Mesh, amp: f64, rng: &mut R) -> Field {
    let mut f = Field::zeros(mesh);
    f.values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-amp..amp));
    f.apply_dirichlet(mesh);
    f
}

/// Relative error of `∇E(u)·v` against the central difference of `E`,
/// the energy difference taken from accurate increments.
pub fn gradient_fd_error(mesh: &Mesh, ap: &AApprox, u: &Field, f: &Field, v: &Field) -> Result<f64> {
    let g = assemble_gradient(mesh, ap, u, f)?;
    let vd = v.to_dofs(mesh);
    let exact: f64 = g.iter().zip(&vd).map(|(a, b)| a * b).sum();
    let h = 1e-5 * u.max_abs().max(1e-3) / v.max_abs();
    let mut plus = v.clone();
    plus.values_mut().iter_mut().for_each(|x| *x *= h);
    let mut minus = v.clone();
    minus.values_mut().iter_mut().for_each(|x| *x *= -h);
    let fd = (energy_increment(mesh, ap, u, &plus, f)? - energy_increment(mesh, ap, u, &minus, f)?) / (2.0 * h);
    Ok((fd - exact).abs() / exact.abs())
}

/// Relative error of `H(u) v` against central differences of the gradient.
pub fn hessian_fd_error(mesh: &Mesh, ap: &AApprox, u: &Field, f: &Field, v: &Field) -> Result<f64> {
    let hv = assemble_hessian(mesh, ap, u)?.mul_vec(&v.to_dofs(mesh));
    let h = 1e-5 * u.max_abs().max(1e-3) / v.max_abs();
    let mut up = u.clone();
    up.axpy(h, v);
    let mut um = u.clone();
    um.axpy(-h, v);
    let gp = assemble_gradient(mesh, ap, &up, f)?;
    let gm = assemble_gradient(mesh, ap, &um, f)?;
    let diff: Vec<f64> = (0..hv.len()).map(|i| (gp[i] - gm[i]) / (2.0 * h) - hv[i]).collect();
    Ok(norm2(&diff) / norm2(&hv))
}

/// Ratio of nodal `L²` errors of the `p = 2` manufactured solution on
/// `n_coarse` and `2 n_coarse` cells per side.
pub fn manufactured_error_ratio(n_coarse: usize) -> Result<f64> {
    let mut errs = [0.0; 2];
    for (i, n) in [n_coarse, 2 * n_coarse].into_iter().enumerate() {
        let mesh = build_mesh(2, n, 1.0)?;
        let (exact, f) = manufactured_load_p2(&mesh, Builtin::Manufactured)?;
        let u = linear_oracle(&mesh, &f)?;
        errs[i] = nodal_l2_error(&mesh, &u, &exact);
    }
    Ok(errs[0] / errs[1])
}

/// One line of a check report: the measured `value` must not exceed `limit`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl CheckLine {
    pub fn new(suite: &'static str, name: impl Into<String>, value: f64, limit: f64) -> Self {
        CheckLine {
            suite,
            name: name.into(),
            value,
            limit,
            pass: value <= limit,
        }
    }

    fn failed(suite: &'static str, name: impl Into<String>, err: &Error) -> Self {
        CheckLine {
            suite,
            name: format!("{} ({err})", name.into()),
            value: f64::NAN,
            limit: f64::NAN,
            pass: false,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "[{}] {:<4} {:<58} value={} limit={}",
            self.suite,
            if self.pass { "pass" } else { "FAIL" },
            self.name,
            fmt_real(self.value),
            fmt_real(self.limit)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub seed: u64,
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn failures(&self) -> Vec<&CheckLine> {
        self.lines.iter().filter(|l| !l.pass).collect()
    }

    pub fn render(&self) -> String {
        let mut out = format!("pdelta check seed={}\n", self.seed);
        for l in &self.lines {
            out.push_str(&l.render());
            out.push('\n');
        }
        let failed = self.failures().len();
        out.push_str(&format!(
            "summary: {} passed, {} failed\n",
            self.lines.len() - failed,
            failed
        ));
        out
    }
}

fn push<T>(lines: &mut Vec<CheckLine>, suite: &'static str, name: String, r: Result<T>, f: impl FnOnce(T) -> CheckLine) {
    match r {
        Ok(v) => lines.push(f(v)),
        Err(e) => lines.push(CheckLine::failed(suite, name, &e)),
    }
}

fn params(p: f64, delta: f64) -> PDeltaParams {
    PDeltaParams::new(p, delta, 3).expect("suite parameters are valid")
}

/// Scalar N-function properties of `ω_{p,δ}`.
pub fn nfunc_suite(seed: u64) -> Vec<CheckLine> {
    const S: &str = "nfunc";
    let mut lines = Vec::new();
    let grid = log_grid(1e-8, 1e8, 200);
    for (pi, &p) in P_VALUES.iter().enumerate() {
        let mut balanced: f64 = f64::NEG_INFINITY;
        let mut scaling: f64 = f64::NEG_INFINITY;
        let mut young: f64 = f64::NEG_INFINITY;
        let mut young_eq: f64 = 0.0;
        let mut biconj: f64 = 0.0;
        let mut shift0: f64 = 0.0;
        let mut chars: f64 = 0.0;
        let mut delta2: f64 = 0.0;
        let mut rng = rng_stream(seed, 100 + pi as u64);
        for &delta in &DELTA_VALUES {
            let ps = params(p, delta);
            for &t in &grid {
                let (w, w1, w2) = (ps.omega(t), ps.omega_d1(t), ps.omega_d2(t));
                balanced = balanced
                    .max(rel_excess(w, w1 * t))
                    .max(rel_excess(w1 * t, 2f64.powf(p + 1.0) * w))
                    .max(rel_excess((p - 1.0) * w1, w2 * t))
                    .max(rel_excess(w2 * t, w1));
            }
            for _ in 0..400 {
                let t = log_uniform(&mut rng, 1e-6, 1e6);
                let lambda = rng.gen_range(0.0..100.0);
                scaling = scaling.max(rel_excess(ps.omega(lambda * t), f64::max(lambda, lambda * lambda) * ps.omega(t)));
                let s = log_uniform(&mut rng, 1e-4, 1e4);
                let y = log_uniform(&mut rng, 1e-4, 1e4);
                let conj = conjugate_eval(&ps, y).unwrap_or(f64::NAN);
                young = young.max(rel_excess(s * y, ps.omega(s) + conj));
                let ys = ps.omega_d1(s);
                let at_eq = ps.omega(s) + conjugate_eval(&ps, ys).unwrap_or(f64::NAN);
                young_eq = young_eq.max(((s * ys - at_eq) / (s * ys)).abs());
                let x = log_uniform(&mut rng, 1e-3, 1e3);
                let back = legendre_conjugate(
                    |r| conjugate_eval(&ps, r).unwrap_or(f64::NAN),
                    |r| omega_d1_inverse(&ps, r),
                    x,
                    ps.omega_d1(x).max(1.0),
                );
                biconj = biconj.max(((back - ps.omega(x)) / ps.omega(x)).abs());
            }
            for &t in grid.iter().step_by(10) {
                let q = shift_eval(&ps, 0.0, t, Order::Value).unwrap_or(f64::NAN);
                shift0 = shift0.max(((q - ps.omega(t)) / ps.omega(t)).abs());
            }
            match characteristics_of(&ps, &grid) {
                Ok(c) => chars = chars.max((p - 1.0 - c.gamma1).max(c.gamma2 - 1.0)),
                Err(_) => chars = f64::INFINITY,
            }
            delta2 = delta2.max(empirical_delta2(&ps, &grid).unwrap_or(f64::INFINITY));
        }
        let tag = |s: &str| format!("{s} p={p}");
        lines.push(CheckLine::new(S, tag("balanced inequalities"), balanced, INEQUALITY_SLACK));
        lines.push(CheckLine::new(S, tag("omega(l t) <= max(l,l^2) omega(t)"), scaling, INEQUALITY_SLACK));
        lines.push(CheckLine::new(S, tag("Young s t <= omega(s)+omega*(t)"), young, 1e-9));
        lines.push(CheckLine::new(S, tag("Young equality at t=omega'(s)"), young_eq, 1e-9));
        lines.push(CheckLine::new(S, tag("bi-conjugation"), biconj, 1e-8));
        lines.push(CheckLine::new(S, tag("zero shift matches omega"), shift0, 1e-10));
        lines.push(CheckLine::new(S, tag("characteristics inside [p-1,1]"), chars, 1e-9));
        lines.push(CheckLine::new(S, tag("empirical Delta2 <= 4"), delta2, 4.0 * (1.0 + 1e-12)));
        let name = tag("shift equivalence constant");
        push(&mut lines, S, name.clone(), check_shift_equivalence(&params(p, 0.1), 2000, seed ^ 0x5e1f), |c| {
            CheckLine::new(S, name, c, 1e12)
        });
        let name = tag("change of shift constant eps=0.5");
        push(&mut lines, S, name.clone(), check_shift_change(&params(p, 0.1), 0.5, 2000, seed ^ 0xc4a9), |c| {
            CheckLine::new(S, name, c, 1e12)
        });
    }
    lines
}

/// Operator-level properties of `S^A`, `F^A` and `∂S^A`.
pub fn operator_suite(seed: u64) -> Vec<CheckLine> {
    const S: &str = "operator";
    let mut lines = Vec::new();
    let grid = log_grid(1e-8, 1e8, 200);
    for (pi, &p) in P_VALUES.iter().enumerate() {
        let tag = |s: &str| format!("{s} p={p}");
        let mut lemma: f64 = f64::NEG_INFINITY;
        let mut c2: f64 = 0.0;
        let mut fa_ratio = (f64::INFINITY, f64::NEG_INFINITY);
        let mut f_vs_fa: f64 = f64::NEG_INFINITY;
        let mut s_cap: f64 = f64::NEG_INFINITY;
        let mut scaling: f64 = f64::NEG_INFINITY;
        let mut mono: f64 = f64::INFINITY;
        let mut below: f64 = 0.0;
        let mut ds: f64 = 0.0;
        let mut rng = rng_stream(seed, 200 + pi as u64);
        for &delta in &DELTA_VALUES {
            for &a in &A_VALUES {
                let ap = AApprox::new(params(p, delta), a).expect("valid threshold");
                lemma = inequality_worst(&ap, &grid).iter().map(|w| w.excess).fold(lemma, f64::max);
                c2 = c2.max(c2_mismatch(&ap));
                for _ in 0..200 {
                    let (pp, qq) = sample_pair(&mut rng);
                    let t = pp.norm();
                    if t > 0.0 {
                        let fa = ap.f_map(&pp, Variant::Approx).norm_sq();
                        let r = fa / ap.value(t);
                        fa_ratio = (fa_ratio.0.min(r), fa_ratio.1.max(r));
                        let fe = ap.f_map(&pp, Variant::Exact).norm_sq();
                        f_vs_fa = f_vs_fa.max(rel_excess((p - 1.0) * fe, fa));
                        let sa = ap.stress(&pp, Variant::Approx).norm();
                        s_cap = s_cap.max(rel_excess(sa, delta.powf(p - 2.0) * t));
                        if t <= a {
                            below = below.max((ap.stress(&pp, Variant::Approx) - ap.stress(&pp, Variant::Exact)).max_abs());
                        }
                    }
                    let lambda = rng.gen_range(0.0..100.0);
                    let s = log_uniform(&mut rng, 1e-6, 1e6);
                    scaling = scaling.max(rel_excess(ap.value(lambda * s), f64::max(lambda, lambda * lambda) * ap.value(s)));
                    if pp != qq {
                        let m = (ap.stress(&pp, Variant::Approx) - ap.stress(&qq, Variant::Approx)).dot(&(pp - qq));
                        mono = mono.min(m);
                    }
                }
                match ds_fd_worst(&ap, 100, &mut rng) {
                    Ok(v) => ds = ds.max(v),
                    Err(_) => ds = f64::INFINITY,
                }
            }
        }
        lines.push(CheckLine::new(S, tag("a^A and omega^A bounds"), lemma, INEQUALITY_SLACK));
        lines.push(CheckLine::new(S, tag("C2 matching at t=A"), c2, 1e-10));
        lines.push(CheckLine::new(S, tag("|F^A|^2/omega^A >= 1"), 1.0 - fa_ratio.0, 1e-12));
        lines.push(CheckLine::new(S, tag("|F^A|^2/omega^A <= 2"), fa_ratio.1 - 2.0, 1e-12));
        lines.push(CheckLine::new(S, tag("(p-1)|F|^2 <= |F^A|^2"), f_vs_fa, INEQUALITY_SLACK));
        lines.push(CheckLine::new(S, tag("|S^A(P)| <= delta^(p-2)|P|"), s_cap, INEQUALITY_SLACK));
        lines.push(CheckLine::new(S, tag("omega^A(l t) <= max(l,l^2) omega^A(t)"), scaling, INEQUALITY_SLACK));
        lines.push(CheckLine::new(S, tag("strict monotonicity (negated min)"), -mono, 0.0 - f64::MIN_POSITIVE));
        lines.push(CheckLine::new(S, tag("S^A = S below threshold"), below, 0.0));
        lines.push(CheckLine::new(S, tag("dS^A vs central differences"), ds, 1e-6));

        let name = tag("hammer ratios inside fitted bounds");
        push(&mut lines, S, name.clone(), fit_hammer_bounds(p), |b| {
            let mut outside = 0usize;
            let mut hrng = rng_stream(seed, 300 + pi as u64);
            for &delta in &DELTA_VALUES {
                for a in [1.0, 10.0, 100.0, 1000.0] {
                    match validate_hammer(&b, delta, a, 1000, &mut hrng) {
                        Ok(v) => outside += v.outside,
                        Err(_) => outside += 1000,
                    }
                }
            }
            CheckLine::new(S, name, outside as f64, 0.0)
        });
    }
    let exact = AApprox::new(PDeltaParams::new(1.5, 0.0, 3).expect("valid"), 1.0).expect("valid");
    let coeff_err = (exact.alpha2 - 0.25).abs().max((exact.alpha1 - 0.5).abs()).max((exact.alpha0 + 1.0 / 12.0).abs());
    lines.push(CheckLine::new(S, "tail coefficients (0.25, 0.5, -1/12) p=1.5 delta=0 A=1", coeff_err, 1e-14));
    lines
}

/// Consistency of the assembled energy, gradient and Hessian, and the
/// `p = 2` oracles.
pub fn grid_suite(seed: u64) -> Vec<CheckLine> {
    const S: &str = "grid";
    let mut lines = Vec::new();
    let mut rng = rng_stream(seed, 400);
    for (dim, n) in [(2usize, 4usize), (3, 2)] {
        let mesh = build_mesh(dim, n, 1.0).expect("valid mesh");
        let mut grad: f64 = 0.0;
        let mut hess: f64 = 0.0;
        let mut sym: f64 = 0.0;
        let mut failure = None;
        for &(p, delta, a) in &[(1.5, 0.1, 10.0), (1.1, 1e-4, 1.0), (1.9, 1.0, 100.0), (1.5, 0.1, 1.0)] {
            let ap = AApprox::new(PDeltaParams::new(p, delta, dim).expect("valid"), a).expect("valid");
            for _ in 0..3 {
                let u = random_field(&mesh, 2.0, &mut rng);
                let v = random_field(&mesh, 1.0, &mut rng);
                let f = Field::from_fn(&mesh, |x| [1.0 + x[0], x[1] - 0.5, x[2]]);
                match gradient_fd_error(&mesh, &ap, &u, &f, &v) {
                    Ok(e) => grad = grad.max(e),
                    Err(e) => failure = Some(e),
                }
                match hessian_fd_error(&mesh, &ap, &u, &f, &v) {
                    Ok(e) => hess = hess.max(e),
                    Err(e) => failure = Some(e),
                }
                match assemble_hessian(&mesh, &ap, &u) {
                    Ok(h) => sym = sym.max(h.asymmetry()),
                    Err(e) => failure = Some(e),
                }
            }
        }
        let tag = |s: &str| format!("{s} d={dim} n={n}");
        if let Some(e) = failure {
            lines.push(CheckLine::failed(S, tag("derivative checks"), &e));
            continue;
        }
        lines.push(CheckLine::new(S, tag("gradient vs energy differences"), grad, 1e-6));
        lines.push(CheckLine::new(S, tag("Hessian vs gradient differences"), hess, 1e-5));
        lines.push(CheckLine::new(S, tag("Hessian asymmetry"), sym, 0.0));

        let ap2 = AApprox::new(PDeltaParams::new(2.0, 0.3, dim).expect("valid"), 5.0).expect("valid");
        let u = random_field(&mesh, 1.0, &mut rng);
        let name = tag("p=2 Hessian equals linear stiffness");
        push(&mut lines, S, name.clone(), assemble_hessian(&mesh, &ap2, &u), |h| {
            let k = assemble_linear_stiffness(&mesh);
            let mut worst: f64 = 0.0;
            for i in 0..h.n() {
                let (cols, vals) = h.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    worst = worst.max((v - k.get(i, j)).abs());
                }
            }
            CheckLine::new(S, name, worst, 1e-13)
        });
    }
    for n in [8usize, 16] {
        let mesh = build_mesh(2, n, 1.0).expect("valid mesh");
        let f = crate::solver::builtin_load(&mesh, Builtin::Smooth);
        let ap = AApprox::new(PDeltaParams::new(2.0, 0.5, 2).expect("valid"), 1.0).expect("valid");
        let name = format!("p=2 Newton vs linear oracle n={n}");
        let r = solve_steady(&mesh, &ap, &f, &SolverOptions::default()).and_then(|s| Ok((s, linear_oracle(&mesh, &f)?)));
        push(&mut lines, S, name.clone(), r, |(s, o)| CheckLine::new(S, name, s.u.max_abs_diff(&o), 1e-10));
    }
    let name = "manufactured |L2 ratio - 4| n=16/32".to_string();
    push(&mut lines, S, name.clone(), manufactured_error_ratio(16), |r| CheckLine::new(S, name, (r - 4.0).abs(), 0.4));
    lines
}

/// All suites, run concurrently and merged in a fixed order.
pub fn run_all(seed: u64) -> CheckReport {
    let suites: [fn(u64) -> Vec<CheckLine>; 3] = [nfunc_suite, operator_suite, grid_suite];
    let lines = std::thread::scope(|s| {
        let handles: Vec<_> = suites.iter().map(|suite| s.spawn(move || suite(seed))).collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("suite thread panicked"))
            .collect()
    });
    CheckReport { seed, lines }
}
