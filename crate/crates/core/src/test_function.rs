//! Closed-form test functions with derivatives of every order, and the
//! one-dimensional `Smooth` abstraction used for exact operator evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::composite_legendre;

/// A real function on `R^d` evaluated pointwise.
pub trait Observable: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, z: &[f64]) -> f64;
    /// Analytic one-dimensional view, when available.
    fn smooth(&self) -> Option<&dyn Smooth> {
        None
    }
    /// Mixed partial derivative, when available analytically.
    fn partial(&self, _z: &[f64], _idx: &[usize]) -> Option<f64> {
        None
    }
}

/// A smooth function of one variable with derivatives of every order.
pub trait Smooth: Sync {
    /// `g^{(n)}(w)`.
    fn deriv(&self, w: f64, n: usize) -> f64;

    /// `E[g^{(n)}(m + sqrt(v) Z)]` for standard normal `Z`.
    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        numeric_gauss_expect(|x| self.deriv(x, n), self.support(), m, v)
    }

    /// Interval outside which the function vanishes identically.
    fn support(&self) -> Option<(f64, f64)> {
        None
    }
}

const GAUSS_SPAN: f64 = 10.0;

/// Gaussian smoothing of `h` by composite Gauss-Legendre quadrature over
/// `m +- 10 sqrt(v)` intersected with the support.
pub fn numeric_gauss_expect(
    h: impl Fn(f64) -> f64,
    support: Option<(f64, f64)>,
    m: f64,
    v: f64,
) -> f64 {
    if v <= 0.0 {
        return h(m);
    }
    let sd = v.sqrt();
    let (mut lo, mut hi) = (m - GAUSS_SPAN * sd, m + GAUSS_SPAN * sd);
    if let Some((a, b)) = support {
        lo = lo.max(a);
        hi = hi.min(b);
    }
    if lo >= hi {
        return 0.0;
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI * v).sqrt();
    composite_legendre(32, 16, lo, hi, |x| {
        let d = x - m;
        h(x) * norm * (-0.5 * d * d / v).exp()
    })
}

/// Evaluates a `Smooth` through the `Observable` interface.
#[derive(Clone, Copy)]
pub struct AsObservable<'a>(pub &'a dyn Smooth);

impl Observable for AsObservable<'_> {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, z: &[f64]) -> f64 {
        self.0.deriv(z[0], 0)
    }
    fn smooth(&self) -> Option<&dyn Smooth> {
        Some(self.0)
    }
    fn partial(&self, z: &[f64], idx: &[usize]) -> Option<f64> {
        Some(self.0.deriv(z[0], idx.len()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `a exp(-|z-c|^2 / (2 w^2))`
    Gaussian,
    /// `a exp(1 - 1 / (1 - |z-c|^2 / w^2))` inside the ball of radius `w`.
    Bump,
}

/// Radially symmetric test function `a phi(|z - c|^2 / w^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub profile: Profile,
    pub center: Vec<f64>,
    /// Standard deviation for the Gaussian, radius for the bump.
    pub width: f64,
    pub amplitude: f64,
}

impl TestFunction {
    pub fn gaussian(center: f64, width: f64, amplitude: f64) -> Self {
        TestFunction {
            profile: Profile::Gaussian,
            center: vec![center],
            width,
            amplitude,
        }
    }

    pub fn bump(center: f64, radius: f64, amplitude: f64) -> Self {
        TestFunction {
            profile: Profile::Bump,
            center: vec![center],
            width: radius,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.center.is_empty() {
            return Err(Error::InvalidArgument(
                "test function needs a center".into(),
            ));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "test function width must be positive, got {}",
                self.width
            )));
        }
        if !self.amplitude.is_finite() || self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "test function parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    fn q(&self, z: &[f64]) -> f64 {
        let w2 = self.width * self.width;
        z.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            / w2
    }

    /// `phi^{(m)}(q)` for the radial profile.
    pub fn profile_derivative(&self, q: f64, m: usize) -> f64 {
        match self.profile {
            Profile::Gaussian => (-0.5f64).powi(m as i32) * (-0.5 * q).exp(),
            Profile::Bump => {
                if q >= 1.0 {
                    return 0.0;
                }
                let inv = 1.0 / (1.0 - q);
                // h(q) = 1 - 1/(1-q), h^{(k)}(q) = -k! / (1-q)^{k+1} for k >= 1.
                let mut hk = vec![0.0; m + 1];
                let mut fact = 1.0;
                let mut pow = inv;
                for (k, slot) in hk.iter_mut().enumerate().skip(1) {
                    fact *= k as f64;
                    pow *= inv;
                    *slot = -fact * pow;
                }
                let mut f = vec![0.0; m + 1];
                f[0] = (1.0 - inv).exp();
                bell_recursion(&mut f, |k| hk[k]);
                f[m]
            }
        }
    }

    /// Mixed partial derivative `d^n f / dz_{i_1} ... dz_{i_n}`.
    ///
    /// Because `q` is quadratic, the chain rule expands over partitions of the
    /// index list into singletons (`dq/dz_i`) and pairs (`d2q/dz_i dz_j`).
    pub fn partial(&self, z: &[f64], idx: &[usize]) -> f64 {
        let q = self.q(z);
        if self.profile == Profile::Bump && q >= 1.0 {
            return 0.0;
        }
        let w2 = self.width * self.width;
        let grad: Vec<f64> = z
            .iter()
            .zip(&self.center)
            .map(|(a, c)| 2.0 * (a - c) / w2)
            .collect();
        let mut by_blocks = vec![0.0; idx.len() + 1];
        let mut remaining: Vec<usize> = (0..idx.len()).collect();
        partitions(
            &mut remaining,
            1.0,
            0,
            &mut |weight, blocks| {
                by_blocks[blocks] += weight;
            },
            &|i| grad[idx[i]],
            &|i, j| if idx[i] == idx[j] { 2.0 / w2 } else { 0.0 },
        );
        self.amplitude
            * by_blocks
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(m, w)| w * self.profile_derivative(q, m))
                .sum::<f64>()
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        (0..z.len()).map(|i| self.partial(z, &[i])).collect()
    }

    /// Radius beyond which `|f| <= delta`.
    pub fn decay_radius(&self, delta: f64) -> f64 {
        let a = self.amplitude.abs();
        if delta >= a {
            return 0.0;
        }
        if delta <= 0.0 {
            return match self.profile {
                Profile::Gaussian => f64::INFINITY,
                Profile::Bump => self.width,
            };
        }
        let l = (delta / a).ln();
        match self.profile {
            Profile::Gaussian => self.width * (-2.0 * l).sqrt(),
            Profile::Bump => self.width * (1.0 - 1.0 / (1.0 - l)).sqrt(),
        }
    }

    /// `sup |f^{(n)}|` in one dimension (grid scan refined by golden section),
    /// or an upper bound on every order-`n` partial in higher dimension.
    pub fn sup_norm(&self, n: usize) -> f64 {
        let span = match self.profile {
            Profile::Gaussian => 9.0 * self.width,
            Profile::Bump => self.width,
        };
        if self.center.len() == 1 {
            let c = self.center[0];
            let g = |x: f64| self.deriv(x, n).abs();
            let pts = 2000;
            let h = 2.0 * span / pts as f64;
            let (mut best_x, mut best) = (c, g(c));
            for i in 0..=pts {
                let x = c - span + h * i as f64;
                let v = g(x);
                if v > best {
                    best = v;
                    best_x = x;
                }
            }
            let (mut lo, mut hi) = (best_x - h, best_x + h);
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..60 {
                let x1 = hi - phi * (hi - lo);
                let x2 = lo + phi * (hi - lo);
                if g(x1) > g(x2) {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            best.max(g(0.5 * (lo + hi)))
        } else {
            // |partial| <= a sum_pi |phi^{(|pi|)}(q)| prod |block| with
            // |dq/dz_i| <= 2 rho / w^2, maximised over the radius rho.
            let w2 = self.width * self.width;
            let pts = 2000;
            (0..=pts)
                .map(|i| {
                    let rho = span * i as f64 / pts as f64;
                    let q = rho * rho / w2;
                    let mut by_blocks = vec![0.0; n + 1];
                    let mut remaining: Vec<usize> = (0..n).collect();
                    partitions(
                        &mut remaining,
                        1.0,
                        0,
                        &mut |w, b| by_blocks[b] += w.abs(),
                        &|_| 2.0 * rho / w2,
                        &|_, _| 2.0 / w2,
                    );
                    self.amplitude.abs()
                        * by_blocks
                            .iter()
                            .enumerate()
                            .map(|(m, w)| w * self.profile_derivative(q, m).abs())
                            .sum::<f64>()
                })
                .fold(0.0, f64::max)
        }
    }

    /// `||f|| + ||f'|| + ||f''||`, the norm of the once-smoother space.
    pub fn y1_norm(&self) -> f64 {
        self.sup_norm(0) + self.sup_norm(1) + self.sup_norm(2)
    }
}

/// Fills `f[1..]` from `f[0] = exp(h)` via
/// `F^{(n)} = sum_k C(n-1, k) h^{(k+1)} F^{(n-1-k)}`.
fn bell_recursion(f: &mut [f64], h: impl Fn(usize) -> f64) {
    for n in 1..f.len() {
        let mut binom = 1.0;
        let mut acc = 0.0;
        for k in 0..n {
            if k > 0 {
                binom = binom * (n - k) as f64 / k as f64;
            }
            acc += binom * h(k + 1) * f[n - 1 - k];
        }
        f[n] = acc;
    }
}

/// Enumerates partitions of `remaining` into blocks of size one or two,
/// reporting the product of block weights and the number of blocks.
fn partitions(
    remaining: &mut Vec<usize>,
    weight: f64,
    blocks: usize,
    emit: &mut dyn FnMut(f64, usize),
    single: &dyn Fn(usize) -> f64,
    pair: &dyn Fn(usize, usize) -> f64,
) {
    let Some(&first) = remaining.first() else {
        emit(weight, blocks);
        return;
    };
    let rest: Vec<usize> = remaining[1..].to_vec();
    let mut r = rest.clone();
    partitions(
        &mut r,
        weight * single(first),
        blocks + 1,
        emit,
        single,
        pair,
    );
    for (pos, &other) in rest.iter().enumerate() {
        let w = pair(first, other);
        if w == 0.0 {
            continue;
        }
        let mut r: Vec<usize> = rest.clone();
        r.remove(pos);
        partitions(&mut r, weight * w, blocks + 1, emit, single, pair);
    }
}

/// Probabilists' Hermite polynomial `He_n(y)`.
pub fn hermite_he(n: usize, y: f64) -> f64 {
    let (mut a, mut b) = (1.0, y);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = y * b - k as f64 * a;
        a = b;
        b = c;
    }
    b
}

impl Observable for TestFunction {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, z: &[f64]) -> f64 {
        self.amplitude * self.profile_derivative(self.q(z), 0)
    }

    fn smooth(&self) -> Option<&dyn Smooth> {
        if self.center.len() == 1 {
            Some(self)
        } else {
            None
        }
    }

    fn partial(&self, z: &[f64], idx: &[usize]) -> Option<f64> {
        Some(TestFunction::partial(self, z, idx))
    }
}

impl Smooth for TestFunction {
    fn deriv(&self, w: f64, n: usize) -> f64 {
        let c = self.center[0];
        let s = self.width;
        let y = (w - c) / s;
        match self.profile {
            Profile::Gaussian => {
                let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
                self.amplitude * sign * hermite_he(n, y) * (-0.5 * y * y).exp() / s.powi(n as i32)
            }
            Profile::Bump => {
                if y.abs() >= 1.0 {
                    return 0.0;
                }
                // g(y) = -1/(1-y^2) = -(1/(1-y) + 1/(1+y))/2 has closed-form derivatives.
                let (im, ip) = (1.0 / (1.0 - y), 1.0 / (1.0 + y));
                let mut gk = vec![0.0; n + 1];
                let mut fact = 1.0;
                let (mut pm, mut pp) = (im, ip);
                for (k, slot) in gk.iter_mut().enumerate().skip(1) {
                    fact *= k as f64;
                    pm *= im;
                    pp *= ip;
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    *slot = -0.5 * fact * (pm + sign * pp);
                }
                let mut f = vec![0.0; n + 1];
                f[0] = (1.0 - 1.0 / (1.0 - y * y)).exp();
                bell_recursion(&mut f, |k| gk[k]);
                self.amplitude * f[n] / s.powi(n as i32)
            }
        }
    }

    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        if v == 0.0 {
            return self.deriv(m, n);
        }
        match self.profile {
            Profile::Gaussian => {
                let s2 = self.width * self.width + v;
                let widened = TestFunction {
                    profile: Profile::Gaussian,
                    center: self.center.clone(),
                    width: s2.sqrt(),
                    amplitude: self.amplitude * self.width / s2.sqrt(),
                };
                widened.deriv(m, n)
            }
            Profile::Bump => numeric_gauss_expect(|x| self.deriv(x, n), self.support(), m, v),
        }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match self.profile {
            Profile::Gaussian => None,
            Profile::Bump => Some((self.center[0] - self.width, self.center[0] + self.width)),
        }
    }
}

/// `g^{(k)}` as a function in its own right.
pub struct Derivative<'a> {
    pub inner: &'a dyn Smooth,
    pub order: usize,
}

impl Smooth for Derivative<'_> {
    fn deriv(&self, w: f64, n: usize) -> f64 {
        self.inner.deriv(w, n + self.order)
    }
    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        self.inner.gauss_expect(m, v, n + self.order)
    }
    fn support(&self) -> Option<(f64, f64)> {
        self.inner.support()
    }
}

/// `w -> g(w + shift)`.
pub struct Shifted<'a> {
    pub inner: &'a dyn Smooth,
    pub shift: f64,
}

impl Smooth for Shifted<'_> {
    fn deriv(&self, w: f64, n: usize) -> f64 {
        self.inner.deriv(w + self.shift, n)
    }
    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        self.inner.gauss_expect(m + self.shift, v, n)
    }
    fn support(&self) -> Option<(f64, f64)> {
        self.inner
            .support()
            .map(|(a, b)| (a - self.shift, b - self.shift))
    }
}

/// Finite linear combination of smooth functions.
#[derive(Default)]
pub struct Linear<'a> {
    pub terms: Vec<(f64, Box<dyn Smooth + 'a>)>,
}

impl<'a> Linear<'a> {
    pub fn push(&mut self, c: f64, g: impl Smooth + 'a) {
        self.terms.push((c, Box::new(g)));
    }
}

impl Smooth for Linear<'_> {
    fn deriv(&self, w: f64, n: usize) -> f64 {
        self.terms.iter().map(|(c, g)| c * g.deriv(w, n)).sum()
    }
    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        self.terms
            .iter()
            .map(|(c, g)| c * g.gauss_expect(m, v, n))
            .sum()
    }
    fn support(&self) -> Option<(f64, f64)> {
        let mut hull: Option<(f64, f64)> = None;
        for (_, g) in &self.terms {
            let (a, b) = g.support()?;
            hull = Some(match hull {
                None => (a, b),
                Some((lo, hi)) => (lo.min(a), hi.max(b)),
            });
        }
        hull
    }
}

impl<T: Smooth + ?Sized> Smooth for &T {
    fn deriv(&self, w: f64, n: usize) -> f64 {
        (**self).deriv(w, n)
    }
    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        (**self).gauss_expect(m, v, n)
    }
    fn support(&self) -> Option<(f64, f64)> {
        (**self).support()
    }
}

impl<T: Smooth + ?Sized> Smooth for Box<T> {
    fn deriv(&self, w: f64, n: usize) -> f64 {
        (**self).deriv(w, n)
    }
    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        (**self).gauss_expect(m, v, n)
    }
    fn support(&self) -> Option<(f64, f64)> {
        (**self).support()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(g: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-5;
        (g(x + h) - g(x - h)) / (2.0 * h)
    }

    #[test]
    fn hermite_and_partition_routes_agree() {
        for f in [
            TestFunction::gaussian(0.3, 0.7, 1.5),
            TestFunction::bump(-0.2, 1.3, 2.0),
        ] {
            for &x in &[-0.9, -0.1, 0.35, 0.8] {
                for n in 0..=5 {
                    let a = f.deriv(x, n);
                    let b = f.partial(&[x], &vec![0; n]);
                    assert!(
                        (a - b).abs() <= 1e-9 * (1.0 + a.abs()),
                        "{f:?} n={n} x={x}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for f in [
            TestFunction::gaussian(0.0, 1.0, 1.0),
            TestFunction::bump(0.0, 1.5, 1.0),
        ] {
            for n in 0..4 {
                for &x in &[-0.7, 0.2, 1.1] {
                    let fd = central_diff(|y| f.deriv(y, n), x);
                    let an = f.deriv(x, n + 1);
                    assert!((fd - an).abs() < 1e-5 * (1.0 + an.abs()));
                }
            }
        }
    }

    #[test]
    fn gaussian_smoothing_closed_form_matches_quadrature() {
        let f = TestFunction::gaussian(0.4, 0.8, 1.0);
        for n in 0..4 {
            let closed = f.gauss_expect(0.1, 0.6, n);
            let numeric = numeric_gauss_expect(|x| f.deriv(x, n), None, 0.1, 0.6);
            assert!((closed - numeric).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn multivariate_partials_match_finite_differences() {
        let f = TestFunction {
            profile: Profile::Gaussian,
            center: vec![0.1, -0.3],
            width: 0.9,
            amplitude: 1.0,
        };
        let z = [0.4, 0.2];
        let h = 1e-5;
        let fd =
            (f.partial(&[z[0], z[1] + h], &[0]) - f.partial(&[z[0], z[1] - h], &[0])) / (2.0 * h);
        assert!((fd - f.partial(&z, &[0, 1])).abs() < 1e-8);
        let fd = (f.eval(&[z[0] + h, z[1]]) - f.eval(&[z[0] - h, z[1]])) / (2.0 * h);
        assert!((fd - f.gradient(&z)[0]).abs() < 1e-8);
    }

    #[test]
    fn sup_norms_of_unit_gaussian() {
        let f = TestFunction::gaussian(0.0, 1.0, 1.0);
        assert!((f.sup_norm(0) - 1.0).abs() < 1e-12);
        // |f'| peaks at y = 1 with value exp(-1/2).
        assert!((f.sup_norm(1) - (-0.5f64).exp()).abs() < 1e-10);
        assert!((f.sup_norm(2) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn decay_radius_bounds_the_tail() {
        for f in [
            TestFunction::gaussian(0.0, 1.0, 2.0),
            TestFunction::bump(0.0, 2.0, 1.0),
        ] {
            let r = f.decay_radius(0.05);
            assert!((f.eval(&[r]).abs() - 0.05).abs() < 1e-12);
            assert!(f.eval(&[r * 1.01]).abs() < 0.05);
        }
    }

    #[test]
    fn combinators_forward_derivatives() {
        let f = TestFunction::gaussian(0.0, 1.0, 1.0);
        let d = Derivative {
            inner: &f,
            order: 1,
        };
        let s = Shifted {
            inner: &f,
            shift: 0.5,
        };
        let mut lin = Linear::default();
        lin.push(2.0, &d);
        lin.push(-1.0, &s);
        let x = 0.3;
        let expect = 2.0 * f.deriv(x, 1) - f.deriv(x + 0.5, 0);
        assert!((lin.deriv(x, 0) - expect).abs() < 1e-15);
        let ge = 2.0 * f.gauss_expect(x, 0.2, 1) - f.gauss_expect(x + 0.5, 0.2, 0);
        assert!((lin.gauss_expect(x, 0.2, 0) - ge).abs() < 1e-15);
    }
}
