use randevo_core::propagator::run_canonical_matrix;
use randevo_core::StreamKey;

#[test]
fn canonical_matrix_satisfies_every_identity() {
    let records = run_canonical_matrix(100_000, &StreamKey::root(7, "canonical"));
    let failed: Vec<_> = records.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!(
            "{} {:?} residual={:e} tol={:e}",
            r.check, r.params, r.residual, r.tolerance
        );
    }
    assert!(records.len() > 150);
    assert!(
        failed.is_empty(),
        "{} of {} records failed",
        failed.len(),
        records.len()
    );
}

mod perturbed {
    use randevo_core::mc::McEstimate;
    use randevo_core::propagator::{
        integral_representation_residual, t_derivative_residual, CheckContext,
        TranslationInvariant, DERIVATIVE_STEP, DERIVATIVE_TOL, INTEGRAL_TOL,
    };
    use randevo_core::rng::Rng;
    use randevo_core::{
        AtomLaw, CoefficientFn, FrozenGenerator, Generator, LevyModel, McBudget, Observable,
        Propagator, Result, StateLevy, StreamKey, TestFunction,
    };

    /// Evolves with one model and reports the generator of another.
    struct Mismatched {
        flow: LevyModel,
        claimed: LevyModel,
    }

    impl Propagator for Mismatched {
        fn dim(&self) -> usize {
            1
        }
        fn apply(
            &self,
            s: f64,
            t: f64,
            f: &dyn Observable,
            z: &[f64],
            budget: &McBudget,
            key: &StreamKey,
        ) -> Result<McEstimate> {
            Propagator::apply(
                &self.flow.propagator(0, randevo_core::EvalMode::Exact),
                s,
                t,
                f,
                z,
                budget,
                key,
            )
        }
    }

    impl TranslationInvariant for Mismatched {
        fn sample_increment(&self, s: f64, t: f64, rng: &mut Rng, out: &mut [f64]) -> Result<()> {
            self.flow.sample_increment_into(0, s, t, rng, out)
        }
        fn increment_law(&self, s: f64, t: f64) -> Option<AtomLaw> {
            self.flow.increment_law(0, s, t)
        }
    }

    impl Generator for Mismatched {
        fn dim(&self) -> usize {
            1
        }
        fn apply(&self, t: f64, f: &dyn Observable, z: &[f64]) -> Result<f64> {
            Ok(self.claimed.frozen(0, t).apply(f, z))
        }
        fn frozen(&self, t: f64) -> FrozenGenerator {
            self.claimed.frozen(0, t)
        }
        fn frozen_derivative(&self, t: f64) -> FrozenGenerator {
            self.claimed.frozen_derivative(0, t)
        }
        fn bound(&self, t0: f64, t1: f64) -> f64 {
            self.claimed.generator_bound(0, t0, t1)
        }
    }

    fn brownian(c: f64) -> LevyModel {
        LevyModel::new(1, vec![StateLevy::diffusion(CoefficientFn::Const(c))], 10.0).unwrap()
    }

    #[test]
    fn a_perturbed_generator_fails_the_identities() {
        let g = Mismatched {
            flow: brownian(1.0),
            claimed: brownian(1.05),
        };
        let f = TestFunction::gaussian(0.3, 1.0, 1.0);
        let ctx = CheckContext::exact();
        let d = t_derivative_residual(&g, 0.0, 0.5, &f, 0.4, DERIVATIVE_STEP, &ctx).unwrap();
        assert!(!d.within(DERIVATIVE_TOL), "{d:?}");
        let i = integral_representation_residual(&g, 0.0, 0.5, &f, 0.4, &ctx).unwrap();
        assert!(!i.within(INTEGRAL_TOL), "{i:?}");

        let honest = Mismatched {
            flow: brownian(1.0),
            claimed: brownian(1.0),
        };
        let d = t_derivative_residual(&honest, 0.0, 0.5, &f, 0.4, DERIVATIVE_STEP, &ctx).unwrap();
        assert!(d.within(DERIVATIVE_TOL), "{d:?}");
    }
}
