//! Models shared by the benchmarks under `benches/`.

use randevo_core::{
    CoefficientFn, JumpLaw, JumpOperatorFamily, JumpPart, LevyModel, SemiMarkovModel, SojournLaw,
    StateLevy, StateSpace,
};

/// Two states, Uniform(0, 2) sojourns, drift `+1` and `-1`.
pub fn drift_switching() -> (SemiMarkovModel, LevyModel, JumpOperatorFamily) {
    let sm = SemiMarkovModel::new(
        StateSpace::indexed(2),
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        vec![SojournLaw::Uniform { a: 0.0, b: 2.0 }; 2],
        None,
    )
    .unwrap();
    let levy = LevyModel::new(
        1,
        vec![
            StateLevy::drift(CoefficientFn::Const(1.0)),
            StateLevy::drift(CoefficientFn::Const(-1.0)),
        ],
        10.0,
    )
    .unwrap();
    (sm, levy, JumpOperatorFamily::zeros(1, 2))
}

/// Three states with diffusion, compound Poisson jumps and switch shifts.
pub fn jump_diffusion() -> (SemiMarkovModel, LevyModel, JumpOperatorFamily) {
    let sm = SemiMarkovModel::new(
        StateSpace::indexed(3),
        vec![
            vec![0.2, 0.5, 0.3],
            vec![0.6, 0.1, 0.3],
            vec![0.3, 0.3, 0.4],
        ],
        vec![
            SojournLaw::Uniform { a: 0.0, b: 1.0 },
            SojournLaw::Deterministic { c: 0.7 },
            SojournLaw::Uniform { a: 0.5, b: 2.5 },
        ],
        None,
    )
    .unwrap();
    let levy = LevyModel::new(
        1,
        vec![
            StateLevy {
                b: vec![CoefficientFn::Trig {
                    v0: 0.3,
                    v1: 0.2,
                    omega: 1.5,
                }],
                c: vec![CoefficientFn::Affine { v0: 0.5, v1: 0.25 }],
                jumps: vec![],
            },
            StateLevy {
                b: vec![CoefficientFn::Const(-0.4)],
                c: vec![CoefficientFn::Const(0.2)],
                jumps: vec![JumpPart {
                    intensity: CoefficientFn::Trig {
                        v0: 1.0,
                        v1: 0.5,
                        omega: 2.0,
                    },
                    law: JumpLaw::TwoPoint {
                        h_plus: 0.6,
                        p: 0.3,
                        h_minus: -0.5,
                    },
                }],
            },
            StateLevy {
                b: vec![CoefficientFn::Const(0.1)],
                c: vec![CoefficientFn::zero()],
                jumps: vec![JumpPart {
                    intensity: CoefficientFn::Const(1.2),
                    law: JumpLaw::Gaussian {
                        mu: 0.1,
                        sigma: 0.3,
                    },
                }],
            },
        ],
        10.0,
    )
    .unwrap();
    let alpha = JumpOperatorFamily::from_scalars(vec![
        vec![0.0, 0.4, -0.2],
        vec![0.3, 0.0, 0.5],
        vec![-0.6, 0.1, 0.2],
    ])
    .unwrap();
    (sm, levy, alpha)
}

/// A dense ergodic chain on `n` states.
pub fn dense_chain(n: usize) -> SemiMarkovModel {
    let p = (0..n)
        .map(|i| {
            let w: Vec<f64> = (0..n).map(|j| 1.0 + ((i * 7 + j * 3) % 5) as f64).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|v| v / total).collect()
        })
        .collect();
    let sojourn = (0..n)
        .map(|i| SojournLaw::Uniform {
            a: 0.1,
            b: 1.0 + i as f64,
        })
        .collect();
    SemiMarkovModel::new(StateSpace::indexed(n), p, sojourn, None).unwrap()
}
