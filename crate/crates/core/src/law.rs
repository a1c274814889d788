//! Exact one-dimensional displacement laws as finite Gaussian mixtures.

use crate::test_function::Smooth;

/// Poisson tail mass below which compound-Poisson expansions are truncated.
pub const POISSON_TAIL: f64 = 1e-14;

/// Atoms lighter than this are dropped when a law is compacted.
const NEGLIGIBLE_WEIGHT: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

/// Mixture `sum_i w_i N(mean_i, var_i)`; point masses have zero variance.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomLaw {
    atoms: Vec<Atom>,
}

impl AtomLaw {
    /// Point mass at `x`.
    pub fn dirac(x: f64) -> Self {
        AtomLaw {
            atoms: vec![Atom {
                weight: 1.0,
                mean: x,
                var: 0.0,
            }],
        }
    }

    pub fn gaussian(mean: f64, var: f64) -> Self {
        AtomLaw {
            atoms: vec![Atom {
                weight: 1.0,
                mean,
                var,
            }],
        }
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Self {
        let mut law = AtomLaw { atoms };
        law.compact();
        law
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.mean).sum::<f64>() / self.total_mass()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms
            .iter()
            .map(|a| a.weight * (a.var + (a.mean - m).powi(2)))
            .sum::<f64>()
            / self.total_mass()
    }

    pub fn shift(&self, h: f64) -> Self {
        AtomLaw {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    mean: a.mean + h,
                    ..*a
                })
                .collect(),
        }
    }

    pub fn add_variance(&self, v: f64) -> Self {
        AtomLaw {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    var: a.var + v,
                    ..*a
                })
                .collect(),
        }
    }

    /// Drops the lightest atoms whose weights sum to at most `mass` and
    /// returns the reduced law with the mass actually dropped. Expectations
    /// of `g` move by at most that mass times `sup |g|`.
    pub fn pruned(&self, mass: f64) -> (Self, f64) {
        let mut order: Vec<usize> = (0..self.atoms.len()).collect();
        order.sort_by(|&i, &j| {
            self.atoms[i]
                .weight
                .abs()
                .total_cmp(&self.atoms[j].weight.abs())
        });
        let mut dropped = 0.0;
        let mut keep = vec![true; self.atoms.len()];
        for i in order {
            let w = self.atoms[i].weight.abs();
            if dropped + w > mass {
                break;
            }
            dropped += w;
            keep[i] = false;
        }
        let atoms = self
            .atoms
            .iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(a, _)| *a)
            .collect();
        (AtomLaw { atoms }, dropped)
    }

    /// Law of the sum of independent variables.
    pub fn convolve(&self, other: &AtomLaw) -> Self {
        if other.atoms.len() == 1 && other.atoms[0].weight == 1.0 {
            let o = other.atoms[0];
            return self.shift(o.mean).add_variance(o.var);
        }
        let mut atoms = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for a in &self.atoms {
            for b in &other.atoms {
                atoms.push(Atom {
                    weight: a.weight * b.weight,
                    mean: a.mean + b.mean,
                    var: a.var + b.var,
                });
            }
        }
        AtomLaw::from_atoms(atoms)
    }

    /// Law of `sum_{i <= N} J_i` with `N ~ Poisson(lambda)` and `J_i ~ jump`,
    /// truncated where the Poisson tail drops below [`POISSON_TAIL`].
    pub fn compound_poisson(lambda: f64, jump: &AtomLaw) -> Self {
        if lambda <= 0.0 {
            return AtomLaw::dirac(0.0);
        }
        let mut out = Vec::new();
        let mut power = AtomLaw::dirac(0.0);
        let mut pk = (-lambda).exp();
        let mut cumulative = 0.0;
        let mut k = 0u32;
        loop {
            for a in &power.atoms {
                out.push(Atom {
                    weight: pk * a.weight,
                    ..*a
                });
            }
            cumulative += pk;
            if 1.0 - cumulative < POISSON_TAIL || k > 10_000 {
                break;
            }
            // Past the mode a vanishing term means the remaining tail is negligible.
            if pk < POISSON_TAIL * 1e-3 && (k as f64) > lambda {
                break;
            }
            k += 1;
            pk *= lambda / k as f64;
            power = power.convolve(jump);
        }
        AtomLaw::from_atoms(out)
    }

    fn compact(&mut self) {
        self.atoms.retain(|a| a.weight.abs() > NEGLIGIBLE_WEIGHT);
        self.atoms.sort_by(|a, b| {
            a.mean
                .partial_cmp(&b.mean)
                .unwrap()
                .then(a.var.partial_cmp(&b.var).unwrap())
        });
        let mut merged: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for a in self.atoms.drain(..) {
            if let Some(last) = merged.last_mut() {
                let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs()));
                if close(last.mean, a.mean) && close(last.var, a.var) {
                    last.weight += a.weight;
                    continue;
                }
            }
            merged.push(a);
        }
        self.atoms = merged;
    }

    /// `E[g^{(n)}(z + X)]`.
    pub fn expect<S: Smooth + ?Sized>(&self, g: &S, z: f64, n: usize) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * g.gauss_expect(z + a.mean, a.var, n))
            .sum()
    }

    /// `E[g^{(n)}(z + X + Y)]` with `Y ~ other` independent, without building
    /// the convolved law.
    pub fn expect_convolved<S: Smooth + ?Sized>(
        &self,
        other: &AtomLaw,
        g: &S,
        z: f64,
        n: usize,
    ) -> f64 {
        other
            .atoms
            .iter()
            .map(|b| {
                b.weight
                    * self
                        .atoms
                        .iter()
                        .map(|a| a.weight * g.gauss_expect(z + a.mean + b.mean, a.var + b.var, n))
                        .sum::<f64>()
            })
            .sum()
    }

    /// `E[h(z + X)]` for a pointwise function, point masses only.
    pub fn expect_points(&self, h: impl Fn(f64) -> f64, z: f64) -> Option<f64> {
        if self.atoms.iter().any(|a| a.var > 0.0) {
            return None;
        }
        Some(self.atoms.iter().map(|a| a.weight * h(z + a.mean)).sum())
    }
}

/// The function `z -> E[g(z + X)]` with derivatives transported through the
/// expectation.
pub struct Propagated<'a> {
    pub law: AtomLaw,
    pub inner: &'a dyn Smooth,
}

impl Smooth for Propagated<'_> {
    fn deriv(&self, w: f64, n: usize) -> f64 {
        self.law.expect(self.inner, w, n)
    }

    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        self.law
            .atoms
            .iter()
            .map(|a| a.weight * self.inner.gauss_expect(m + a.mean, v + a.var, n))
            .sum()
    }

    fn support(&self) -> Option<(f64, f64)> {
        if self.law.atoms.iter().any(|a| a.var > 0.0) {
            return None;
        }
        let (a, b) = self.inner.support()?;
        let lo = self
            .law
            .atoms
            .iter()
            .map(|x| x.mean)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .law
            .atoms
            .iter()
            .map(|x| x.mean)
            .fold(f64::NEG_INFINITY, f64::max);
        Some((a - hi, b - lo))
    }
}
