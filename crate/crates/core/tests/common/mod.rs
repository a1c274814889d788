#![allow(dead_code)]

use randevo_core::{
    CoefficientFn, JumpOperatorFamily, LevyModel, SemiMarkovModel, SojournLaw, StateLevy,
    StateSpace,
};

/// Two states with `P = [[1/2, 1/2], [1/2, 1/2]]` and Uniform(0, 2) sojourns,
/// so `rho = (1/2, 1/2)`, `m1 = (1, 1)` and `M_rho = 1`.
pub fn symmetric_chain() -> SemiMarkovModel {
    SemiMarkovModel::new(
        StateSpace::indexed(2),
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        vec![SojournLaw::Uniform { a: 0.0, b: 2.0 }; 2],
        None,
    )
    .unwrap()
}

/// Drift `+1` in state 0 and `-1` in state 1.
pub fn drift_switching() -> (SemiMarkovModel, LevyModel, JumpOperatorFamily) {
    let levy = LevyModel::new(
        1,
        vec![
            StateLevy::drift(CoefficientFn::Const(1.0)),
            StateLevy::drift(CoefficientFn::Const(-1.0)),
        ],
        10.0,
    )
    .unwrap();
    (symmetric_chain(), levy, JumpOperatorFamily::zeros(1, 2))
}

/// No Lévy dynamics; a unit shift at every change of state, so the averaged
/// drift is `1/2`.
pub fn alpha_driven() -> (SemiMarkovModel, LevyModel, JumpOperatorFamily) {
    let levy = LevyModel::new(1, vec![StateLevy::zero(1), StateLevy::zero(1)], 10.0).unwrap();
    let alpha = JumpOperatorFamily::from_scalars(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    (symmetric_chain(), levy, alpha)
}
