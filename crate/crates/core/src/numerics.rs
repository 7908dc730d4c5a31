/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Three-point Gauss–Legendre rule on `[a, b]`.
#[inline]
pub fn gauss3<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    gauss3_span(f, a, b - a)
}

/// Three-point Gauss–Legendre rule on `[a, a + span]`, with the span given
/// directly so that a short interval keeps its full relative accuracy.
#[inline]
pub fn gauss3_span<F: Fn(f64) -> f64>(f: F, a: f64, span: f64) -> f64 {
    let half = 0.5 * span;
    let mid = a + half;
    let off = half * (0.6_f64).sqrt();
    half * (5.0 / 9.0 * f(mid - off) + 8.0 / 9.0 * f(mid) + 5.0 / 9.0 * f(mid + off))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-17);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-14).abs() < 1e-20);
    }

    #[test]
    fn gauss3_is_exact_for_quintics() {
        let v = gauss3(|x| x.powi(5) - 2.0 * x * x, 0.0, 2.0);
        assert!((v - (64.0 / 6.0 - 16.0 / 3.0)).abs() < 1e-13);
    }
}
