mod common;

use randevo_core::averaging::Averager;
use randevo_core::random_evolution::{
    jump_discontinuity_residual, rescaled_switch_rate, shift_bound_ratio,
};
use randevo_core::{
    CoefficientFn, EvalMode, JumpOperatorFamily, LevyModel, McBudget, Propagator, RandomEvolution,
    SemiMarkovModel, SojournLaw, StateLevy, StateSpace, StreamKey, TestFunction,
};

fn deterministic_chain(c: f64) -> SemiMarkovModel {
    SemiMarkovModel::new(
        StateSpace::indexed(2),
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        vec![SojournLaw::Deterministic { c }; 2],
        Some(vec![1.0, 0.0]),
    )
    .unwrap()
}

#[test]
fn hand_counted_shifts() {
    // Two switches on the rescaled clock up to t = 1, each shifting by 1/2.
    let sm = deterministic_chain(1.0);
    let levy = LevyModel::new(1, vec![StateLevy::zero(1), StateLevy::zero(1)], 10.0).unwrap();
    let alpha = JumpOperatorFamily::from_scalars(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let key = StreamKey::root(5, "hand");
    let d = evo.evolve_sample(0.0, 1.0, 0.5, &key, 0).unwrap();
    assert_eq!(d.per_switch.len(), 2);
    assert_eq!(d.total, vec![1.0]);
    let zero = evo.evolve_sample(0.0, 0.0, 0.5, &key, 0).unwrap();
    assert_eq!(zero.total, vec![0.0]);
}

#[test]
fn displacement_is_the_sum_of_its_parts() {
    let (sm, _, _) = common::drift_switching();
    let levy = LevyModel::new(
        1,
        vec![
            StateLevy {
                b: vec![CoefficientFn::Const(0.4)],
                c: vec![CoefficientFn::Affine { v0: 1.0, v1: 0.5 }],
                jumps: vec![],
            },
            StateLevy::drift(CoefficientFn::Trig {
                v0: -0.2,
                v1: 0.3,
                omega: 2.0,
            }),
        ],
        10.0,
    )
    .unwrap();
    let alpha = JumpOperatorFamily::from_scalars(vec![vec![0.1, -0.3], vec![0.5, 0.0]]).unwrap();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let key = StreamKey::root(6, "parts");
    for i in 0..50 {
        let d = evo.evolve_sample(0.0, 1.3, 0.1, &key, i).unwrap();
        let n = d.path.count(1.3);
        assert_eq!(d.per_switch.len(), n);
        assert_eq!(d.per_segment.len(), n + 1);
        let sum: f64 = d
            .per_segment
            .iter()
            .chain(&d.per_switch)
            .map(|v| v[0])
            .sum();
        assert!((sum - d.total[0]).abs() < 1e-12);
        // Same path and stream through the multi-time evolver.
        let path = evo.scaled_path(0.0, 1.3, 0.1, &key, i).unwrap();
        let multi = evo.evolve_on_path(&path, &[1.3], &key, i, None).unwrap();
        assert!((multi[0].0[0] - d.total[0]).abs() < 1e-12);
        assert_eq!(multi[0].1, n);
    }
}

#[test]
fn single_state_at_unit_scale_is_the_levy_propagator() {
    let sm = SemiMarkovModel::new(
        StateSpace::indexed(1),
        vec![vec![1.0]],
        vec![SojournLaw::Uniform { a: 0.0, b: 2.0 }],
        None,
    )
    .unwrap();
    let levy = LevyModel::new(
        1,
        vec![StateLevy {
            b: vec![CoefficientFn::Const(0.3)],
            c: vec![CoefficientFn::Affine { v0: 1.0, v1: 1.0 }],
            jumps: vec![],
        }],
        10.0,
    )
    .unwrap();
    let alpha = JumpOperatorFamily::zeros(1, 1);
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let f = TestFunction::gaussian(0.2, 0.7, 1.0);
    let budget = McBudget::samples(100_000);
    let key = StreamKey::root(7, "single");
    let v = evo
        .evaluate_v(0.0, 1.0, 1.0, &f, 0.4, &budget, &key)
        .unwrap();
    let exact = levy
        .propagator(0, EvalMode::Exact)
        .apply(0.0, 1.0, &f, &[0.4], &budget, &key)
        .unwrap();
    assert!(
        (v.mean - exact.mean).abs() < v.half_width() * 1.5,
        "{} vs {}",
        v.mean,
        exact.mean
    );
}

#[test]
fn zero_dynamics_leave_the_function_unchanged() {
    let sm = common::symmetric_chain();
    let levy = LevyModel::new(1, vec![StateLevy::zero(1), StateLevy::zero(1)], 10.0).unwrap();
    let alpha = JumpOperatorFamily::zeros(1, 2);
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let f = TestFunction::gaussian(0.0, 1.0, 1.0);
    let v = evo
        .evaluate_v(
            0.0,
            1.0,
            0.2,
            &f,
            0.3,
            &McBudget::samples(1000),
            &StreamKey::root(1, "zero"),
        )
        .unwrap();
    assert_eq!(v.mean, f.partial(&[0.3], &[]));
    assert_eq!(v.variance(), 0.0);
}

#[test]
fn drift_switching_approaches_the_averaged_model() {
    let (sm, levy, alpha) = common::drift_switching();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let avg = Averager::new(evo.clone()).unwrap();
    let f = TestFunction::gaussian(0.0, 1.0, 1.0);
    let key = StreamKey::root(8, "drift");
    let budget = McBudget::samples(100_000);
    let v = evo
        .evaluate_v(0.0, 1.0, 0.05, &f, 0.2, &budget, &key)
        .unwrap();
    let g = avg
        .limit_propagator(0.0, 1.0, &f, &[0.2], &budget, &key)
        .unwrap();
    // The bias at this scale is about (2/3) eps |f''|; the check allows it.
    let bias = 0.05 * 2.0 / 3.0;
    assert!(
        (v.mean - g.mean).abs() < v.half_width() + bias,
        "{} vs {}",
        v.mean,
        g.mean
    );
}

#[test]
fn pathwise_integral_representation() {
    let (sm, _, _) = common::drift_switching();
    let levy = LevyModel::new(
        1,
        vec![
            StateLevy {
                b: vec![CoefficientFn::Const(1.0)],
                c: vec![CoefficientFn::Affine { v0: 0.5, v1: 0.5 }],
                jumps: vec![],
            },
            StateLevy::drift(CoefficientFn::Const(-1.0)),
        ],
        10.0,
    )
    .unwrap();
    let alpha = JumpOperatorFamily::from_scalars(vec![vec![0.0, 0.7], vec![-0.4, 0.2]]).unwrap();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let f = TestFunction::gaussian(0.1, 0.8, 1.0);
    let key = StreamKey::root(9, "integral");
    for eps in [1.0, 0.25] {
        let mut worst: f64 = 0.0;
        for i in 0..40 {
            let path = evo.scaled_path(0.0, 1.5, eps, &key, i).unwrap();
            let (r, _) = evo
                .integral_representation_residual(&path, 1.5, &f, 0.3, 1e-9)
                .unwrap();
            worst = worst.max(r);
        }
        assert!(worst < 1e-6, "eps={eps}: {worst:e}");
    }
}

#[test]
fn jump_relation_holds_on_random_configs() {
    let key = StreamKey::root(10, "fuzz");
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = key.rng(seed);
        use rand::Rng;
        let p01: f64 = rng.random_range(0.1..0.9);
        let p10: f64 = rng.random_range(0.1..0.9);
        let sm = SemiMarkovModel::new(
            StateSpace::indexed(2),
            vec![vec![1.0 - p01, p01], vec![p10, 1.0 - p10]],
            vec![
                SojournLaw::Uniform {
                    a: 0.1,
                    b: rng.random_range(0.5..2.0)
                };
                2
            ],
            None,
        )
        .unwrap();
        let levy = LevyModel::new(
            1,
            (0..2)
                .map(|_| StateLevy {
                    b: vec![CoefficientFn::Const(rng.random_range(-1.0..1.0))],
                    c: vec![CoefficientFn::Const(rng.random_range(0.0..1.0))],
                    jumps: vec![],
                })
                .collect(),
            10.0,
        )
        .unwrap();
        let alpha = JumpOperatorFamily::from_scalars(
            (0..2)
                .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        )
        .unwrap();
        let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
        let path = evo.scaled_path(0.0, 2.0, 0.5, &key, seed).unwrap();
        let f = TestFunction::gaussian(0.0, 0.6, 1.0);
        for n in 1..=path.count(2.0) {
            worst = worst.max(jump_discontinuity_residual(&evo, &path, n, &f, 0.25).unwrap());
        }
    }
    assert!(worst <= 1e-10, "{worst:e}");
}

#[test]
fn rescaled_switch_count_follows_the_renewal_rate() {
    let (sm, levy, alpha) = common::drift_switching();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let est =
        rescaled_switch_rate(&evo, 0.0, 1.0, 0.01, 2000, &StreamKey::root(11, "rate")).unwrap();
    // (t - s) / M_rho = 1
    assert!((est.mean - 1.0).abs() < 0.02, "{}", est.mean);
}

#[test]
fn shifts_obey_the_jump_bound_and_contract() {
    let alpha = JumpOperatorFamily::from_scalars(vec![vec![0.0, 1.5], vec![-0.7, 0.3]]).unwrap();
    let f = TestFunction::bump(0.0, 1.0, 2.0);
    let grid: Vec<f64> = (0..201).map(|i| -2.0 + 0.02 * i as f64).collect();
    for eps in [1.0, 0.3, 0.05] {
        assert!(shift_bound_ratio(&alpha, eps, &f, f.sup_norm(1), &grid) <= 1.0 + 1e-12);
    }
    let (sm, levy, _) = common::drift_switching();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let key = StreamKey::root(12, "contract");
    for z in [-1.0, 0.0, 0.5] {
        let v = evo
            .evaluate_v(0.0, 1.0, 0.2, &f, z, &McBudget::samples(20_000), &key)
            .unwrap();
        assert!(v.mean.abs() <= f.sup_norm(0) + v.half_width());
    }
}

#[test]
fn pathwise_composition_for_drift_models() {
    let (sm, levy, _) = common::drift_switching();
    let alpha = JumpOperatorFamily::from_scalars(vec![vec![0.2, 0.6], vec![-0.5, 0.1]]).unwrap();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let key = StreamKey::root(13, "compose");
    for i in 0..100 {
        let path = evo.scaled_path(0.0, 2.0, 0.3, &key, i).unwrap();
        let split = evo
            .evolve_on_path(&path, &[0.8, 2.0], &key, i, None)
            .unwrap();
        let whole = evo.evolve_on_path(&path, &[2.0], &key, i, None).unwrap();
        assert!((split[1].0[0] - whole[0].0[0]).abs() < 1e-12);
    }
}

#[test]
fn identical_seeds_give_identical_displacements() {
    let (sm, levy, alpha) = common::drift_switching();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let key = StreamKey::root(14, "det");
    let a = evo.evolve_multi(0.0, &[0.5, 1.0], 0.1, 30, &key).unwrap();
    let b = evo.evolve_multi(0.0, &[0.5, 1.0], 0.1, 30, &key).unwrap();
    assert_eq!(a, b);
}

#[test]
fn horizon_and_scale_are_validated() {
    let (sm, levy, alpha) = common::drift_switching();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let key = StreamKey::root(15, "bad");
    assert!(evo.scaled_path(0.0, 1.0, 1.5, &key, 0).is_err());
    assert!(evo.scaled_path(0.0, 1.0, 0.0, &key, 0).is_err());
    let path = evo.scaled_path(0.0, 1.0, 0.5, &key, 0).unwrap();
    let beyond = path.horizon + 1.0;
    assert!(matches!(
        evo.evolve_on_path(&path, &[beyond], &key, 0, None),
        Err(randevo_core::Error::HorizonExceeded { .. })
    ));
}

#[test]
fn single_walk_laws_match_fresh_ones() {
    let (sm, levy, _) = common::drift_switching();
    let alpha = JumpOperatorFamily::from_scalars(vec![vec![0.1, 0.7], vec![-0.4, 0.2]]).unwrap();
    let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
    let f = TestFunction::gaussian(0.0, 0.5, 1.0);
    let key = StreamKey::root(4, "walk");
    for i in 0..20 {
        let path = evo.scaled_path(0.0, 1.2, 0.2, &key, i).unwrap();
        // Two grid times exactly on a switch.
        let mut ts = vec![0.0, 0.1, path.times[2], path.times[2], 0.8, 1.2];
        ts.sort_by(f64::total_cmp);
        let walked = evo.laws_at(&path, &ts).unwrap();
        for (&t, law) in ts.iter().zip(&walked) {
            let fresh = evo.path_law(&path, t, false).unwrap();
            assert!((law.expect(&f, 0.2, 0) - fresh.expect(&f, 0.2, 0)).abs() < 1e-12);
        }
    }
    let path = evo.scaled_path(0.0, 1.0, 0.2, &key, 0).unwrap();
    assert!(evo.laws_at(&path, &[0.5, 0.4]).is_err());
}
