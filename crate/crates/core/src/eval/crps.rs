use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::ssbn::Component;

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Continuous ranked probability score of `N(mu, variance)` at `y`, in closed form. Zero
/// variance scores the absolute error.
pub fn crps_gaussian(mu: f64, variance: f64, y: f64) -> f64 {
    if variance <= 0.0 {
        return (y - mu).abs();
    }
    let sigma = variance.sqrt();
    let z = (y - mu) / sigma;
    let n = standard();
    sigma * (z * (2.0 * n.cdf(z) - 1.0) + 2.0 * n.pdf(z) - 1.0 / std::f64::consts::PI.sqrt())
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
}

struct Mixture<'a> {
    components: &'a [Component],
    n: Normal,
}

impl Mixture<'_> {
    /// CDF at `x`; `Left` takes the limit from below at point masses.
    fn cdf(&self, x: f64, side: Side) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let f = if c.variance > 0.0 {
                    self.n.cdf((x - c.mean) / c.variance.sqrt())
                } else {
                    match side {
                        Side::Left => (x > c.mean) as u8 as f64,
                        Side::Right => (x >= c.mean) as u8 as f64,
                    }
                };
                c.weight * f
            })
            .sum()
    }
}

const MAX_DEPTH: u32 = 40;

fn simpson(f: &dyn Fn(f64, Side) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a, Side::Right), f(b, Side::Left));
    let m = 0.5 * (a + b);
    let fm = f(m, Side::Right);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn refine(f: &dyn Fn(f64, Side) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm, Side::Right), f(rm, Side::Right));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + refine(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// CRPS of a Gaussian mixture at `y`, by adaptive quadrature of
/// `∫ (F(x) − 1{x ≥ y})² dx`.
pub fn crps_mixture(components: &[Component], y: f64) -> f64 {
    if components.is_empty() {
        return f64::NAN;
    }
    let mix = Mixture {
        components,
        n: standard(),
    };
    let spread = components.iter().map(|c| c.variance.max(0.0).sqrt()).fold(0.0, f64::max);
    let lo = components.iter().map(|c| c.mean - 12.0 * c.variance.max(0.0).sqrt()).fold(y, f64::min) - 1.0;
    let hi = components.iter().map(|c| c.mean + 12.0 * c.variance.max(0.0).sqrt()).fold(y, f64::max) + 1.0;
    let mut cuts: Vec<f64> = components.iter().filter(|c| c.variance <= 0.0).map(|c| c.mean).collect();
    cuts.extend([lo, y, hi]);
    // Means split long ranges so narrow components are not stepped over.
    cuts.extend(components.iter().map(|c| c.mean));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let tol = 1e-10 * spread.max((hi - lo) * 1e-3).max(1e-12);
    cuts.windows(2)
        .map(|w| {
            let f = |x: f64, side: Side| {
                let p = mix.cdf(x, side);
                if w[0] >= y { (1.0 - p).powi(2) } else { p * p }
            };
            simpson(&f, w[0], w[1], tol)
        })
        .sum()
}
