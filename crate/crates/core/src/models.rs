//! Small reference models used by tests, examples and the CLI.

use crate::model::{Bounds, ModelDefinition, ParameterSpace, ParameterSplit};
use crate::scalar::Scalar;

/// `u(t) = a·t²·x` with a single linear parameter `a` and fixed `x`.
pub fn scaled_square_model<T: Scalar>(x: T) -> ModelDefinition<T> {
    let space = ParameterSpace::new(
        vec!["a".into()],
        ParameterSplit::new(1, vec![0], vec![]).expect("static split"),
        vec![Bounds::unbounded()],
    )
    .expect("static space");
    ModelDefinition::partly_linear("scaled-square", space, move |t: T, _p2: &[T], out: &mut [T]| {
        out[0] = t * t * x;
    })
}

/// `u(t) = p1·exp(−p2·t)`, `p1` linear (unbounded), `p2` nonlinear within `p2_bounds`.
pub fn exponential_model<T: Scalar>(p2_bounds: Bounds<T>) -> ModelDefinition<T> {
    let space = ParameterSpace::new(
        vec!["p1".into(), "p2".into()],
        ParameterSplit::new(2, vec![0], vec![1]).expect("static split"),
        vec![Bounds::unbounded(), p2_bounds],
    )
    .expect("static space");
    ModelDefinition::new("exponential", space, |t: T, p: &[T]| p[0] * (-p[1] * t).exp()).with_basis(
        |t: T, p2: &[T], out: &mut [T]| {
            out[0] = (-p2[0] * t).exp();
        },
    )
}

/// `u(t) = p1·exp(−p2·t) + p3·exp(−p4·t)`: two linear and two nonlinear parameters.
pub fn double_exponential_model<T: Scalar>(rate_bounds: Bounds<T>) -> ModelDefinition<T> {
    let space = ParameterSpace::new(
        vec!["p1".into(), "p2".into(), "p3".into(), "p4".into()],
        ParameterSplit::new(4, vec![0, 2], vec![1, 3]).expect("static split"),
        vec![Bounds::unbounded(), rate_bounds, Bounds::unbounded(), rate_bounds],
    )
    .expect("static space");
    ModelDefinition::new("double-exponential", space, |t: T, p: &[T]| {
        p[0] * (-p[1] * t).exp() + p[2] * (-p[3] * t).exp()
    })
    .with_basis(|t: T, p2: &[T], out: &mut [T]| {
        out[0] = (-p2[0] * t).exp();
        out[1] = (-p2[1] * t).exp();
    })
}
