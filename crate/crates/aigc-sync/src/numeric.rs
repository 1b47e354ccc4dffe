//! Shared numerics: adaptive Gauss-Kronrod quadrature, the scaled complementary
//! error function, streaming log-sum-exp, golden-section search, and
//! permutation enumeration.

use crate::error::{Error, Result};

/// Abscissae of the 15-point Kronrod rule on [-1, 1] (positive half; the rule
/// is symmetric). Odd indices are the embedded 7-point Gauss nodes.
const XGK: [f64; 7] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
];
/// Kronrod weights paired with `XGK`; the last entry weights the midpoint.
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
/// Weights of the embedded 7-point Gauss rule; the last entry weights the midpoint.
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One Gauss-Kronrod 15(7) panel: returns (integral estimate, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (idx, &x) in XGK.iter().enumerate() {
        let v = f(c - h * x) + f(c + h * x);
        kronrod += WGK[idx] * v;
        if idx % 2 == 1 {
            gauss += WG[idx / 2] * v;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Maximum number of panels before giving up; 15 evaluations each.
const MAX_PANELS: usize = 4096;

/// Adaptive quadrature of `f` over the finite interval [a, b] to absolute
/// tolerance `abs_tol`, by globally bisecting the panel with the largest
/// error estimate. Panels are summed in left-to-right order so the result is
/// independent of the subdivision history.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if !a.is_finite() || !b.is_finite() || a > b {
        return Err(Error::InvalidParameter(format!(
            "integration interval [{a}, {b}] must be finite and ordered"
        )));
    }
    if !(abs_tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "integration tolerance {abs_tol} must be positive"
        )));
    }
    if a == b {
        return Ok(0.0);
    }

    struct Panel {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
    }
    let (value, error) = gk15(&f, a, b);
    let mut panels = vec![Panel { a, b, value, error }];
    let mut total_error = error;

    while total_error > abs_tol && panels.len() < MAX_PANELS {
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("panel list is never empty");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(p.a < mid && mid < p.b) {
            // Interval too narrow to split; keep it and stop refining.
            panels.push(p);
            break;
        }
        total_error -= p.error;
        let (v1, e1) = gk15(&f, p.a, mid);
        let (v2, e2) = gk15(&f, mid, p.b);
        total_error += e1 + e2;
        panels.push(Panel { a: p.a, b: mid, value: v1, error: e1 });
        panels.push(Panel { a: mid, b: p.b, value: v2, error: e2 });
    }

    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value: f64 = panels.iter().map(|p| p.value).sum();
    // The negated comparison also rejects NaN error estimates, which arise
    // when the integrand itself is non-finite somewhere.
    if !(total_error <= abs_tol) || !value.is_finite() {
        return Err(Error::QuadratureNonConvergence {
            requested: abs_tol,
            achieved: total_error,
        });
    }
    Ok(value)
}

const INV_SQRT_PI: f64 = 0.564189583547756287;

/// Scaled complementary error function exp(x^2) * erfc(x).
///
/// Direct evaluation overflows near x = 26.6, so large arguments switch to the
/// asymptotic series 1/(x sqrt(pi)) * (1 - u + 3u^2 - 15u^3 + 105u^4) with
/// u = 1/(2x^2), whose truncation error is below 1e-11 relative for x >= 20.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 20.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        let u = 1.0 / (2.0 * x * x);
        let series = 1.0 + u * (-1.0 + u * (3.0 + u * (-15.0 + u * 105.0)));
        series * INV_SQRT_PI / x
    }
}

/// Streaming log-sum-exp accumulator; ln(sum of exp(x_k)) without overflow.
/// Terms of -inf contribute nothing; an empty accumulator evaluates to -inf.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    max: f64,
    scaled_sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp { max: f64::NEG_INFINITY, scaled_sum: 0.0 }
    }

    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled_sum += (x - self.max).exp();
        } else {
            self.scaled_sum = self.scaled_sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled_sum.ln()
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

/// ln(sum of exp(x)) over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    for &x in xs {
        acc.push(x);
    }
    acc.value()
}

/// Golden-section search for the maximum of a unimodal `f` on [lo, hi];
/// returns the abscissa once the bracket is narrower than `tol`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618033988749894848;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Visit every permutation of {0, .., n-1} (Heap's algorithm, no allocation
/// per permutation). The slice passed to `visit` is only valid for the call.
pub fn for_each_permutation<F: FnMut(&[usize])>(n: usize, mut visit: F) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            visit(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// ln(n!) by direct summation; exact enough for the small n used here.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}
