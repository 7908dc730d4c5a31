//! The N-function `ω_{p,δ}(t) = ∫₀ᵗ (δ+s)^{p-2} s ds` and the scalar
//! machinery built on it: complementary function, shifted N-functions and
//! sampled estimates of balanced characteristics.
//!
//! Everything here is a pure function of its arguments.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest regularization accepted on solver-facing paths.
pub const DELTA_MIN: f64 = 1e-8;

/// Relative tolerance of the monotone root finder behind [`conjugate_eval`].
pub const ROOT_REL_TOL: f64 = 1e-12;

/// Relative tolerance of the adaptive quadrature behind [`shift_eval`].
pub const QUAD_REL_TOL: f64 = 1e-10;

/// Exponent, regularization and spatial dimension of a `(p,δ)`-structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PDeltaParams {
    pub p: f64,
    pub delta: f64,
    pub dim: usize,
}

impl PDeltaParams {
    pub fn new(p: f64, delta: f64, dim: usize) -> Result<Self> {
        let params = PDeltaParams { p, delta, dim };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p <= 2.0) {
            return Err(Error::domain("p", self.p, "must lie in (1, 2]"));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::domain("delta", self.delta, "must be finite and >= 0"));
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::domain("dim", self.dim as f64, "must be 2 or 3"));
        }
        Ok(())
    }

    /// Extra check for anything that assembles Hessians or runs Newton.
    pub fn require_solver_ready(&self) -> Result<()> {
        self.validate()?;
        if self.delta < DELTA_MIN {
            return Err(Error::domain("delta", self.delta, "solver paths require delta >= 1e-8"));
        }
        Ok(())
    }

    /// Hölder conjugate exponent `p' = p/(p-1)`.
    pub fn p_conjugate(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// `ω(t)`, evaluated without cancellation for `t ≪ δ`.
    pub fn omega(&self, t: f64) -> f64 {
        omega_value(self.p, self.delta, t)
    }

    /// `ω'(t) = (δ+t)^{p-2} t`.
    pub fn omega_d1(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        if self.p == 2.0 {
            return t;
        }
        (self.delta + t).powf(self.p - 2.0) * t
    }

    /// `ω''(t) = (δ+t)^{p-3}((p-1)t + δ)`; infinite at `t = δ = 0` for `p < 2`.
    pub fn omega_d2(&self, t: f64) -> f64 {
        if self.p == 2.0 {
            return 1.0;
        }
        if t == 0.0 && self.delta == 0.0 {
            return f64::INFINITY;
        }
        (self.delta + t).powf(self.p - 3.0) * ((self.p - 1.0) * t + self.delta)
    }

    /// `a(t) = ω'(t)/t = (δ+t)^{p-2}`.
    pub fn a(&self, t: f64) -> f64 {
        if self.p == 2.0 {
            return 1.0;
        }
        (self.delta + t).powf(self.p - 2.0)
    }
}

fn omega_value(p: f64, delta: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if p == 2.0 {
        return 0.5 * t * t;
    }
    if delta == 0.0 {
        return t.powf(p) / p;
    }
    let x = t / delta;
    if x <= 0.25 {
        // ∫₀ˣ (1+y)^{p-2} y dy = Σ_k binom(p-2, k) x^{k+2}/(k+2)
        let mut coeff = 1.0;
        let mut power = 1.0;
        let mut sum = 0.5;
        for k in 0..80 {
            coeff *= (p - 2.0 - k as f64) / (k as f64 + 1.0);
            power *= x;
            let term = coeff * power / (k as f64 + 3.0);
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        delta.powf(p - 2.0) * t * t * sum
    } else {
        let l = x.ln_1p();
        let g = (p * l).exp_m1() / p - ((p - 1.0) * l).exp_m1() / (p - 1.0);
        delta.powf(p) * g
    }
}

/// Scalar profile of a regular N-function: value and first two derivatives.
pub trait NFunction {
    fn value(&self, t: f64) -> f64;
    fn d1(&self, t: f64) -> f64;
    fn d2(&self, t: f64) -> f64;
}

impl NFunction for PDeltaParams {
    fn value(&self, t: f64) -> f64 {
        self.omega(t)
    }
    fn d1(&self, t: f64) -> f64 {
        self.omega_d1(t)
    }
    fn d2(&self, t: f64) -> f64 {
        self.omega_d2(t)
    }
}

/// Derivative order selector for the scalar evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

pub(crate) fn check_nonneg(what: &'static str, t: f64) -> Result<()> {
    if !(t >= 0.0) || t.is_infinite() {
        return Err(Error::domain(what, t, "must be finite and >= 0"));
    }
    Ok(())
}

pub fn omega_eval(params: &PDeltaParams, t: f64, order: Order) -> Result<f64> {
    check_nonneg("t", t)?;
    match order {
        Order::Value => Ok(params.omega(t)),
        Order::First => Ok(params.omega_d1(t)),
        Order::Second => {
            if t == 0.0 && params.delta == 0.0 && params.p < 2.0 {
                return Err(Error::Singular("omega'' at t = 0 with delta = 0"));
            }
            Ok(params.omega_d2(t))
        }
    }
}

/// Legendre conjugate `sup_s (s t − f(s))` of a convex `f` with `f'(0) = 0`,
/// computed at the unique `s` with `f'(s) = t` found by bisection.
///
/// `hint` is an initial upper bracket; it is doubled until it brackets.
pub fn legendre_conjugate<F, D>(value: F, deriv: D, t: f64, hint: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if t == 0.0 {
        return 0.0;
    }
    let s = invert_increasing(&deriv, t, hint);
    s * t - value(s)
}

/// Solves `g(s) = y` for strictly increasing `g` with `g(0) = 0`.
pub fn invert_increasing<D: Fn(f64) -> f64>(g: &D, y: f64, hint: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = if hint.is_finite() && hint > 0.0 { hint } else { 1.0 };
    let mut expansions = 0;
    while g(hi) < y && expansions < 4000 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
    }
    for _ in 0..4000 {
        if hi - lo <= ROOT_REL_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(ω')^{-1}(t)`, the derivative of `ω*`.
pub fn omega_d1_inverse(params: &PDeltaParams, t: f64) -> f64 {
    invert_increasing(&|s| params.omega_d1(s), t, conjugate_bracket(params, t))
}

fn conjugate_bracket(params: &PDeltaParams, t: f64) -> f64 {
    let guess = t.powf(1.0 / (params.p - 1.0)) * (1.0 + params.delta);
    guess.max(1.0)
}

/// `ω*(t)`, the complementary N-function.
pub fn conjugate_eval(params: &PDeltaParams, t: f64) -> Result<f64> {
    check_nonneg("t", t)?;
    if params.p == 2.0 {
        return Ok(0.5 * t * t);
    }
    Ok(legendre_conjugate(
        |s| params.omega(s),
        |s| params.omega_d1(s),
        t,
        conjugate_bracket(params, t),
    ))
}

/// Shifted N-function `ω_a` (order 0) or its derivative `ω'(a+t) t/(a+t)`.
pub fn shift_eval(params: &PDeltaParams, a: f64, t: f64, order: Order) -> Result<f64> {
    check_nonneg("a", a)?;
    check_nonneg("t", t)?;
    match order {
        Order::First => Ok(shift_d1(params, a, t)),
        Order::Value => Ok(shift_value(params, a, t)),
        Order::Second => Err(Error::domain("order", 2.0, "shift_eval supports orders 0 and 1")),
    }
}

fn shift_d1(params: &PDeltaParams, a: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if a == 0.0 {
        return params.omega_d1(t);
    }
    params.omega_d1(a + t) * t / (a + t)
}

fn shift_value(params: &PDeltaParams, a: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    // The integrand changes scale at s ≈ a + δ: below it s = b v³ removes
    // the power singularity at 0, above it s = e^u makes it smooth.
    let scale = params.delta + a;
    let b = if scale > 0.0 { scale.min(t) } else { t };
    let head = |v: f64| {
        let v2 = v * v;
        shift_d1(params, a, b * v2 * v) * 3.0 * b * v2
    };
    let mut total = adaptive_simpson(&head, 0.0, 1.0, QUAD_REL_TOL);
    if b < t {
        let tail = |u: f64| {
            let s = u.exp();
            shift_d1(params, a, s) * s
        };
        total += adaptive_simpson(&tail, b.ln(), t.ln(), QUAD_REL_TOL);
    }
    total
}

/// Adaptive Simpson quadrature to a relative tolerance of the total.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    let mut panels = Vec::with_capacity(PANELS);
    let mut rough = 0.0;
    for i in 0..PANELS {
        let x0 = a + i as f64 * h;
        let x1 = if i + 1 == PANELS { b } else { x0 + h };
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (f(x0), f(xm), f(x1));
        let s = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        rough += s;
        panels.push((x0, x1, f0, fm, f1, s));
    }
    if rough == 0.0 {
        return 0.0;
    }
    let eps = rel_tol * rough.abs() / PANELS as f64;
    panels
        .into_iter()
        .map(|(x0, x1, f0, fm, f1, s)| simpson_refine(f, x0, x1, f0, fm, f1, s, eps, 48))
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * eps {
        return left + right + diff / 15.0;
    }
    simpson_refine(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + simpson_refine(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// Sampled balanced characteristics `(γ₁, γ₂)` of an N-function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicsEstimate {
    pub gamma1: f64,
    pub gamma2: f64,
    pub sample_count: usize,
    pub t_range: (f64, f64),
}

fn validate_grid(t_grid: &[f64]) -> Result<(f64, f64)> {
    if t_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &t in t_grid {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidGrid(format!("entry {t} is not finite and positive")));
        }
        lo = lo.min(t);
        hi = hi.max(t);
    }
    if hi / lo < 1e8 * (1.0 - 1e-12) {
        return Err(Error::InvalidGrid(format!(
            "grid spans [{lo:e}, {hi:e}], fewer than 8 decades"
        )));
    }
    Ok((lo, hi))
}

/// Min and max of `t φ''(t)/φ'(t)` over the grid.
pub fn characteristics_of<N: NFunction + ?Sized>(
    phi: &N,
    t_grid: &[f64],
) -> Result<CharacteristicsEstimate> {
    let t_range = validate_grid(t_grid)?;
    let mut gamma1 = f64::INFINITY;
    let mut gamma2 = f64::NEG_INFINITY;
    for &t in t_grid {
        let ratio = t * phi.d2(t) / phi.d1(t);
        if !ratio.is_finite() {
            return Err(Error::InvalidGrid(format!("non-finite ratio at t = {t:e}")));
        }
        gamma1 = gamma1.min(ratio);
        gamma2 = gamma2.max(ratio);
    }
    Ok(CharacteristicsEstimate {
        gamma1,
        gamma2,
        sample_count: t_grid.len(),
        t_range,
    })
}

pub fn empirical_characteristics(
    params: &PDeltaParams,
    t_grid: &[f64],
) -> Result<CharacteristicsEstimate> {
    characteristics_of(params, t_grid)
}

/// Empirical Δ₂ constant `max φ(2t)/φ(t)` over the grid.
pub fn empirical_delta2<N: NFunction + ?Sized>(phi: &N, t_grid: &[f64]) -> Result<f64> {
    validate_grid(t_grid)?;
    Ok(t_grid
        .iter()
        .map(|&t| phi.value(2.0 * t) / phi.value(t))
        .fold(2.0, f64::max))
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                (l0 + (l1 - l0) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Coefficient `c` needed for one `(|P|, |Q|, t)` triple in the change of
/// shift inequality, with the worst-case distance `|P−Q| = ||P|−|Q||`.
fn shift_change_need(params: &PDeltaParams, eps: f64, a: f64, b: f64, t: f64) -> f64 {
    let lhs = shift_value(params, a, t);
    let slack = eps * shift_value(params, a, (a - b).abs());
    let base = shift_value(params, b, t);
    if base == 0.0 {
        return if lhs <= slack { 0.0 } else { f64::INFINITY };
    }
    (lhs - slack) / base
}

/// Certifies `ω_{|P|}(t) ≤ c ω_{|Q|}(t) + ε ω_{|P|}(|P−Q|)`.
///
/// Pass one fits `c` on a dense log grid of `(|P|, |Q|, t)`; pass two draws
/// `samples` fresh triples from the seeded generator and raises `c` to cover
/// any violation. The returned `c` holds on both passes.
pub fn check_shift_change(params: &PDeltaParams, eps: f64, samples: usize, seed: u64) -> Result<f64> {
    params.validate()?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain("eps", eps, "must lie in (0, 1)"));
    }
    if samples < 1000 {
        return Err(Error::domain("samples", samples as f64, "need at least 1000"));
    }
    let mut norms = log_grid(1e-3, 1e3, 13);
    norms.insert(0, 0.0);
    let ts = log_grid(1e-3, 1e3, 13);
    let mut c: f64 = 1.0;
    for &a in &norms {
        for &b in &norms {
            for &t in &ts {
                c = c.max(shift_change_need(params, eps, a, b, t));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let a = log_uniform(&mut rng, 1e-4, 1e4);
        let b = log_uniform(&mut rng, 1e-4, 1e4);
        let t = log_uniform(&mut rng, 1e-4, 1e4);
        let need = shift_change_need(params, eps, a, b, t);
        if need > c * (1.0 + 1e-9) {
            log::debug!("shift change: validation raised c from {c} to {need}");
            c = need;
        }
    }
    if !c.is_finite() || c > 1e12 {
        return Err(Error::Certification(format!("no finite c <= 1e12 validates (got {c})")));
    }
    Ok(c)
}

/// Two-sided constant `c` with `ω_{|P|}(|P−Q|)/ω_{|Q|}(|P−Q|) ∈ [1/c, c]`,
/// fitted on a grid and validated on `samples` seeded triples
/// `(|P|, |Q|, |P−Q|)` with the distance inside its triangle range.
pub fn check_shift_equivalence(params: &PDeltaParams, samples: usize, seed: u64) -> Result<f64> {
    params.validate()?;
    let ratio = |a: f64, b: f64, r: f64| {
        let x = shift_value(params, a, r) / shift_value(params, b, r);
        x.max(1.0 / x)
    };
    let norms = log_grid(1e-3, 1e3, 13);
    let mut c: f64 = 1.0;
    for &a in &norms {
        for &b in &norms {
            for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let lo = (a - b).abs();
                let r = lo + frac * (a + b - lo);
                if r > 0.0 {
                    c = c.max(ratio(a, b, r));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let a = log_uniform(&mut rng, 1e-4, 1e4);
        let b = log_uniform(&mut rng, 1e-4, 1e4);
        let lo = (a - b).abs();
        let r = lo + rng.gen::<f64>() * (a + b - lo);
        if r > 0.0 {
            c = c.max(ratio(a, b, r));
        }
    }
    if !c.is_finite() || c > 1e12 {
        return Err(Error::Certification(format!("shift equivalence constant {c} not finite")));
    }
    Ok(c)
}
