//! Models, residuals, merit functions and elimination of linearly entering parameters.
//!
//! A model maps `(t, p)` to a scalar response. When it is partly linear,
//! `u(t, p) = Σ_i p1_i · f_i(t, p2)`, the basis functions `f_i` let the linear block `p1`
//! be eliminated exactly at any fixed nonlinear block `p2` by one least-squares solve.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, DenseMatrix};
use crate::scalar::{norm_sq, Scalar};

/// Unit of the sampling times of one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Seconds,
    Minutes,
    Hours,
    Days,
    Dimensionless,
}

/// Strictly increasing, positive, finite sampling times.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSchedule<T> {
    times: Vec<T>,
    unit: TimeUnit,
}

impl<T: Scalar> SamplingSchedule<T> {
    pub fn new(times: Vec<T>, unit: TimeUnit) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidSchedule("no sampling times".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t <= T::zero() {
                return Err(Error::InvalidSchedule(format!(
                    "time {i} = {t} is not a positive finite number"
                )));
            }
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule(format!(
                "times not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { times, unit })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn unit(&self) -> TimeUnit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Measured (or simulated) values on a sampling schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSeries<T> {
    schedule: SamplingSchedule<T>,
    values: Vec<T>,
}

impl<T: Scalar> DataSeries<T> {
    pub fn new(schedule: SamplingSchedule<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != schedule.len() {
            return Err(Error::DimensionMismatch {
                what: "data values",
                expected: schedule.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSchedule(format!("data value {i} is not finite")));
        }
        Ok(Self { schedule, values })
    }

    pub fn schedule(&self) -> &SamplingSchedule<T> {
        &self.schedule
    }

    pub fn times(&self) -> &[T] {
        self.schedule.times()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Partition of parameter indices into linearly and nonlinearly entering blocks.
///
/// The order of `linear` is the column order of the design matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterSplit {
    linear: Vec<usize>,
    nonlinear: Vec<usize>,
}

impl ParameterSplit {
    pub fn new(parameter_count: usize, linear: Vec<usize>, nonlinear: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; parameter_count];
        for &i in linear.iter().chain(&nonlinear) {
            if i >= parameter_count {
                return Err(Error::InvalidSplit(format!(
                    "index {i} out of range for {parameter_count} parameters"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidSplit(format!("index {i} listed twice")));
            }
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidSplit(format!("index {i} not assigned")));
        }
        Ok(Self { linear, nonlinear })
    }

    /// Every parameter nonlinear (no basis structure).
    pub fn all_nonlinear(parameter_count: usize) -> Self {
        Self {
            linear: Vec::new(),
            nonlinear: (0..parameter_count).collect(),
        }
    }

    pub fn linear(&self) -> &[usize] {
        &self.linear
    }

    pub fn nonlinear(&self) -> &[usize] {
        &self.nonlinear
    }

    pub fn parameter_count(&self) -> usize {
        self.linear.len() + self.nonlinear.len()
    }

    pub fn is_linear(&self, index: usize) -> bool {
        self.linear.contains(&index)
    }
}

/// Closed interval `[lo, hi]`; infinite ends are allowed for unconstrained linear parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Bounds<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidParameter(format!("invalid bounds [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded() -> Self {
        Self {
            lo: T::neg_infinity(),
            hi: T::infinity(),
        }
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: T) -> T {
        x.max(self.lo).min(self.hi)
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Names, linear/nonlinear split and box bounds of a model's parameters (the domain D).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace<T> {
    names: Vec<String>,
    split: ParameterSplit,
    bounds: Vec<Bounds<T>>,
}

impl<T: Scalar> ParameterSpace<T> {
    pub fn new(names: Vec<String>, split: ParameterSplit, bounds: Vec<Bounds<T>>) -> Result<Self> {
        let m = names.len();
        if m == 0 {
            return Err(Error::InvalidParameter("model needs at least one parameter".into()));
        }
        if split.parameter_count() != m {
            return Err(Error::DimensionMismatch {
                what: "parameter split",
                expected: m,
                found: split.parameter_count(),
            });
        }
        if bounds.len() != m {
            return Err(Error::DimensionMismatch {
                what: "parameter bounds",
                expected: m,
                found: bounds.len(),
            });
        }
        Ok(Self {
            names,
            split,
            bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn split(&self) -> &ParameterSplit {
        &self.split
    }

    pub fn bounds(&self) -> &[Bounds<T>] {
        &self.bounds
    }

    /// Copy of this space with one parameter's bounds replaced.
    pub fn with_bounds(&self, index: usize, bounds: Bounds<T>) -> Result<Self> {
        if index >= self.len() {
            return Err(Error::InvalidParameter(format!("no parameter {index}")));
        }
        let mut out = self.clone();
        out.bounds[index] = bounds;
        Ok(out)
    }

    pub fn check(&self, values: &[T]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.len(),
                found: values.len(),
            });
        }
        for (index, (&value, b)) in values.iter().zip(&self.bounds).enumerate() {
            if !b.contains(value) {
                return Err(Error::OutOfBounds {
                    index,
                    value: value.to_f64_lossy(),
                    lo: b.lo.to_f64_lossy(),
                    hi: b.hi.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }

    /// Projects `values` onto the box; returns whether anything moved.
    pub fn project(&self, values: &mut [T]) -> bool {
        let mut moved = false;
        for (v, b) in values.iter_mut().zip(&self.bounds) {
            let c = b.clamp(*v);
            if c != *v {
                *v = c;
                moved = true;
            }
        }
        moved
    }
}

/// A point of the parameter domain. Always within bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector<T> {
    values: Vec<T>,
    space: Arc<ParameterSpace<T>>,
}

impl<T: Scalar> ParameterVector<T> {
    pub fn new(space: Arc<ParameterSpace<T>>, values: Vec<T>) -> Result<Self> {
        space.check(&values)?;
        Ok(Self { values, space })
    }

    /// Builds the full vector from its linear block (split order) and nonlinear block.
    pub fn assemble(space: Arc<ParameterSpace<T>>, linear: &[T], nonlinear: &[T]) -> Result<Self> {
        let split = space.split();
        if linear.len() != split.linear().len() {
            return Err(Error::DimensionMismatch {
                what: "linear block",
                expected: split.linear().len(),
                found: linear.len(),
            });
        }
        if nonlinear.len() != split.nonlinear().len() {
            return Err(Error::DimensionMismatch {
                what: "nonlinear block",
                expected: split.nonlinear().len(),
                found: nonlinear.len(),
            });
        }
        let mut values = vec![T::zero(); space.len()];
        for (&i, &v) in split.linear().iter().zip(linear) {
            values[i] = v;
        }
        for (&i, &v) in split.nonlinear().iter().zip(nonlinear) {
            values[i] = v;
        }
        Self::new(space, values)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, index: usize) -> T {
        self.values[index]
    }

    pub fn space(&self) -> &Arc<ParameterSpace<T>> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn linear_part(&self) -> Vec<T> {
        self.space.split().linear().iter().map(|&i| self.values[i]).collect()
    }

    pub fn nonlinear_part(&self) -> Vec<T> {
        self.space.split().nonlinear().iter().map(|&i| self.values[i]).collect()
    }

    pub fn with_value(&self, index: usize, value: T) -> Result<Self> {
        let mut values = self.values.clone();
        values[index] = value;
        Self::new(self.space.clone(), values)
    }
}

type EvalFn<T> = dyn Fn(T, &[T]) -> T + Send + Sync;
type BasisFn<T> = dyn Fn(T, &[T], &mut [T]) + Send + Sync;

/// Model solution `u(t, p)` with optional partly-linear basis `f_i(t, p2)`.
///
/// `evaluate` receives the full parameter vector in space order; `basis` receives only the
/// nonlinear block and writes one value per linear parameter, in split order.
#[derive(Clone)]
pub struct ModelDefinition<T> {
    name: String,
    space: Arc<ParameterSpace<T>>,
    evaluate: Arc<EvalFn<T>>,
    basis: Option<Arc<BasisFn<T>>>,
}

impl<T: Scalar> fmt::Debug for ModelDefinition<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelDefinition")
            .field("name", &self.name)
            .field("parameters", &self.space.names())
            .field("has_basis", &self.basis.is_some())
            .finish()
    }
}

impl<T: Scalar> ModelDefinition<T> {
    pub fn new(
        name: impl Into<String>,
        space: ParameterSpace<T>,
        evaluate: impl Fn(T, &[T]) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            space: Arc::new(space),
            evaluate: Arc::new(evaluate),
            basis: None,
        }
    }

    /// Partly-linear model whose response is derived from its basis.
    pub fn partly_linear(
        name: impl Into<String>,
        space: ParameterSpace<T>,
        basis: impl Fn(T, &[T], &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        let basis: Arc<BasisFn<T>> = Arc::new(basis);
        let b = basis.clone();
        let split = space.split().clone();
        let evaluate = move |t: T, p: &[T]| {
            let p2: Vec<T> = split.nonlinear().iter().map(|&i| p[i]).collect();
            let mut out = vec![T::zero(); split.linear().len()];
            b(t, &p2, &mut out);
            split.linear().iter().zip(&out).map(|(&i, &f)| p[i] * f).sum()
        };
        Self {
            name: name.into(),
            space: Arc::new(space),
            evaluate: Arc::new(evaluate),
            basis: Some(basis),
        }
    }

    /// Attaches a basis to a model with an independently written `evaluate`.
    pub fn with_basis(mut self, basis: impl Fn(T, &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.basis = Some(Arc::new(basis));
        self
    }

    /// Same model with a different parameter domain (names and split must agree).
    pub fn with_space(mut self, space: ParameterSpace<T>) -> Result<Self> {
        if space.names() != self.space.names() || space.split() != self.space.split() {
            return Err(Error::InvalidParameter(
                "replacement space must keep names and split".into(),
            ));
        }
        self.space = Arc::new(space);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &Arc<ParameterSpace<T>> {
        &self.space
    }

    pub fn split(&self) -> &ParameterSplit {
        self.space.split()
    }

    pub fn parameter_count(&self) -> usize {
        self.space.len()
    }

    pub fn has_basis(&self) -> bool {
        self.basis.is_some()
    }

    /// Raw evaluation without bound checks.
    pub fn evaluate(&self, t: T, values: &[T]) -> T {
        (self.evaluate)(t, values)
    }

    /// Raw basis evaluation at one time.
    pub fn basis(&self, t: T, nonlinear: &[T]) -> Result<Vec<T>> {
        let basis = self.basis.as_ref().ok_or(Error::MissingBasis)?;
        let mut out = vec![T::zero(); self.split().linear().len()];
        basis(t, nonlinear, &mut out);
        Ok(out)
    }
}

/// Residual `h(p) = f − u(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector<T> {
    pub entries: Vec<T>,
}

impl<T: Scalar> ResidualVector<T> {
    pub fn norm_sq(&self) -> T {
        norm_sq(&self.entries)
    }
}

pub(crate) fn response_values<T: Scalar>(
    model: &ModelDefinition<T>,
    values: &[T],
    times: &[T],
) -> Result<Vec<T>> {
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let u = model.evaluate(t, values);
            if u.is_finite() {
                Ok(u)
            } else {
                Err(Error::NonFiniteResponse { time_index: i })
            }
        })
        .collect()
}

pub(crate) fn residual_values<T: Scalar>(
    model: &ModelDefinition<T>,
    values: &[T],
    data: &DataSeries<T>,
) -> Result<Vec<T>> {
    let u = response_values(model, values, data.times())?;
    Ok(data.values().iter().zip(&u).map(|(&f, &u)| f - u).collect())
}

/// Model response vector `u(p)` on `schedule`.
pub fn response<T: Scalar>(
    model: &ModelDefinition<T>,
    p: &ParameterVector<T>,
    schedule: &SamplingSchedule<T>,
) -> Result<Vec<T>> {
    model.space().check(p.values())?;
    response_values(model, p.values(), schedule.times())
}

pub fn residual<T: Scalar>(
    model: &ModelDefinition<T>,
    p: &ParameterVector<T>,
    data: &DataSeries<T>,
) -> Result<ResidualVector<T>> {
    model.space().check(p.values())?;
    Ok(ResidualVector {
        entries: residual_values(model, p.values(), data)?,
    })
}

/// Real-life merit `F(p) = h(p)ᵀh(p)`.
pub fn merit<T: Scalar>(
    model: &ModelDefinition<T>,
    p: &ParameterVector<T>,
    data: &DataSeries<T>,
) -> Result<T> {
    Ok(residual(model, p, data)?.norm_sq())
}

/// Design matrix `A(p2)` with entries `f_j(t_i, p2)` (N x k).
pub fn design_matrix<T: Scalar>(
    model: &ModelDefinition<T>,
    nonlinear: &[T],
    schedule: &SamplingSchedule<T>,
) -> Result<DenseMatrix<T>> {
    if !model.has_basis() {
        return Err(Error::MissingBasis);
    }
    let k = model.split().linear().len();
    if k == 0 {
        return Err(Error::InvalidSplit("model has no linear parameters".into()));
    }
    check_len("nonlinear block", model.split().nonlinear().len(), nonlinear.len())?;
    let mut data = Vec::with_capacity(schedule.len() * k);
    for (i, &t) in schedule.times().iter().enumerate() {
        let row = model.basis(t, nonlinear)?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteResponse { time_index: i });
        }
        data.extend(row);
    }
    Ok(DenseMatrix::new(schedule.len(), k, data)?)
}

/// Outcome of the conditional minimization over the linear block at fixed `p2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Elimination<T> {
    /// Assembled `(p1*, p2)`.
    pub parameters: ParameterVector<T>,
    /// Linear block in split order (fixed entries included).
    pub linear: Vec<T>,
    /// Clever-section value `F[a(p2), p2]`.
    pub section_value: T,
    pub effective_rank: usize,
    /// Number of linear parameters actually solved for.
    pub free_count: usize,
}

/// Eliminates the linear block at fixed `p2`: `p1* = argmin ‖f − A(p2)·p1‖²`.
pub fn eliminate_linear<T: Scalar>(
    model: &ModelDefinition<T>,
    nonlinear: &[T],
    data: &DataSeries<T>,
    rank_tol: T,
) -> Result<Elimination<T>> {
    eliminate_with_fixed(model, nonlinear, &[], data, rank_tol)
}

/// Like [`eliminate_linear`] but with some linear parameters pinned to given values
/// (`fixed` holds `(parameter index, value)` pairs); only the rest are solved for.
///
/// This is what a clever section along a linear parameter needs.
pub fn eliminate_with_fixed<T: Scalar>(
    model: &ModelDefinition<T>,
    nonlinear: &[T],
    fixed: &[(usize, T)],
    data: &DataSeries<T>,
    rank_tol: T,
) -> Result<Elimination<T>> {
    let space = model.space();
    let split = space.split();
    check_len("nonlinear block", split.nonlinear().len(), nonlinear.len())?;
    for (&i, &v) in split.nonlinear().iter().zip(nonlinear) {
        let b = space.bounds()[i];
        if !b.contains(v) {
            return Err(out_of_bounds(i, v, b));
        }
    }
    for &(i, _) in fixed {
        if !split.is_linear(i) {
            return Err(Error::InvalidParameter(format!(
                "parameter {} is not linear and cannot be pinned during elimination",
                space.name(i)
            )));
        }
    }

    let linear = split.linear();
    let mut p1 = vec![T::zero(); linear.len()];
    let mut free = Vec::new();
    for (col, &idx) in linear.iter().enumerate() {
        match fixed.iter().find(|(i, _)| *i == idx) {
            Some(&(_, v)) => p1[col] = v,
            None => free.push(col),
        }
    }

    let mut rank = 0;
    if !linear.is_empty() {
        let a = design_matrix(model, nonlinear, data.schedule())?;
        // move pinned columns to the right-hand side
        let mut rhs = data.values().to_vec();
        for (col, &v) in p1.iter().enumerate() {
            if !free.contains(&col) && v != T::zero() {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= v * a.get(i, col);
                }
            }
        }
        if !free.is_empty() {
            let sub = DenseMatrix::from_fn(a.rows(), free.len(), |i, j| a.get(i, free[j]))?;
            let sol = lstsq_min_norm(&sub, &rhs, rank_tol)?;
            for (&col, &v) in free.iter().zip(&sol.solution) {
                p1[col] = v;
            }
            rank = sol.effective_rank;
        }
    }

    let parameters = ParameterVector::assemble(space.clone(), &p1, nonlinear)?;
    let h = residual_values(model, parameters.values(), data)?;
    Ok(Elimination {
        parameters,
        linear: p1,
        section_value: norm_sq(&h),
        effective_rank: rank,
        free_count: free.len(),
    })
}

/// Largest relative gap between the basis route `A(p2)·p1` and `evaluate` over the given
/// probe points.
pub fn basis_consistency_gap<T: Scalar>(
    model: &ModelDefinition<T>,
    probes: &[ParameterVector<T>],
    schedule: &SamplingSchedule<T>,
) -> Result<T> {
    let mut worst = T::zero();
    for p in probes {
        let direct = response(model, p, schedule)?;
        let a = design_matrix(model, &p.nonlinear_part(), schedule)?;
        let via_basis = a.mul_vec(&p.linear_part())?;
        for (&x, &y) in direct.iter().zip(&via_basis) {
            let gap = (x - y).abs() / (T::one() + x.abs().max(y.abs()));
            worst = worst.max(gap);
        }
    }
    Ok(worst)
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

fn out_of_bounds<T: Scalar>(index: usize, value: T, b: Bounds<T>) -> Error {
    Error::OutOfBounds {
        index,
        value: value.to_f64_lossy(),
        lo: b.lo.to_f64_lossy(),
        hi: b.hi.to_f64_lossy(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gram, is_positive_definite};
    use crate::models::{scaled_square_model, exponential_model};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn golden_data() -> DataSeries<f64> {
        let s = SamplingSchedule::new(vec![1.0, 2.0, 3.0], TimeUnit::Dimensionless).unwrap();
        DataSeries::new(s, vec![2.1, 7.8, 18.2]).unwrap()
    }

    fn point(model: &ModelDefinition<f64>, v: &[f64]) -> ParameterVector<f64> {
        ParameterVector::new(model.space().clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn golden_response_residual_merit() {
        let model = scaled_square_model(1.0);
        let data = golden_data();
        let u = response(&model, &point(&model, &[2.0]), data.schedule()).unwrap();
        assert_eq!(u, vec![2.0, 8.0, 18.0]);

        let h = residual(&model, &point(&model, &[2.0]), &data).unwrap();
        for (x, e) in h.entries.iter().zip([0.1, -0.2, 0.2]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(merit(&model, &point(&model, &[2.0]), &data).unwrap(), 0.09, epsilon = 1e-12);

        let h = residual(&model, &point(&model, &[2.011224]), &data).unwrap();
        for (x, e) in h.entries.iter().zip([0.088776, -0.244896, 0.098984]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-9);
        }
        // 0.088776² + 0.244896² + 0.098984² by hand
        assert_abs_diff_eq!(
            merit(&model, &point(&model, &[2.011224]), &data).unwrap(),
            0.077653,
            epsilon = 1e-6
        );
    }

    #[test]
    fn single_sample_and_zero_residual() {
        let model = scaled_square_model(1.0);
        let s = SamplingSchedule::new(vec![3.0], TimeUnit::Seconds).unwrap();
        let p = point(&model, &[2.0]);
        assert_eq!(response(&model, &p, &s).unwrap(), vec![18.0]);
        let data = DataSeries::new(s, vec![18.0]).unwrap();
        assert_eq!(merit(&model, &p, &data).unwrap(), 0.0);
    }

    #[test]
    fn design_matrix_examples() {
        let model = scaled_square_model(1.0);
        let s = SamplingSchedule::new(vec![1.0, 2.0, 3.0], TimeUnit::Seconds).unwrap();
        let a = design_matrix(&model, &[], &s).unwrap();
        assert_eq!(a.as_slice(), &[1.0, 4.0, 9.0]);

        let space = ParameterSpace::new(
            vec!["k".into()],
            ParameterSplit::new(1, vec![0], vec![]).unwrap(),
            vec![Bounds::unbounded()],
        )
        .unwrap();
        let constant = ModelDefinition::partly_linear("constant", space, |_, _, out: &mut [f64]| out[0] = 1.0);
        let s2 = SamplingSchedule::new(vec![0.5, 1.5], TimeUnit::Seconds).unwrap();
        assert_eq!(design_matrix(&constant, &[], &s2).unwrap().as_slice(), &[1.0, 1.0]);

        // general linear model a + b·t + c·sin t, elementwise oracle
        let space = ParameterSpace::new(
            vec!["a".into(), "b".into(), "c".into()],
            ParameterSplit::new(3, vec![0, 1, 2], vec![]).unwrap(),
            vec![Bounds::unbounded(); 3],
        )
        .unwrap();
        let general = ModelDefinition::partly_linear("general", space, |t: f64, _, out: &mut [f64]| {
            out[0] = 1.0;
            out[1] = t;
            out[2] = t.sin();
        });
        let s3 = SamplingSchedule::new(vec![0.3, 1.1, 2.0, 4.5], TimeUnit::Seconds).unwrap();
        let a = design_matrix(&general, &[], &s3).unwrap();
        for (i, &t) in s3.times().iter().enumerate() {
            assert_eq!(a[(i, 0)], 1.0);
            assert_eq!(a[(i, 1)], t);
            assert_eq!(a[(i, 2)], t.sin());
        }
    }

    #[test]
    fn missing_basis_and_bounds_errors() {
        let space = ParameterSpace::new(
            vec!["k".into()],
            ParameterSplit::all_nonlinear(1),
            vec![Bounds::new(0.0, 1.0).unwrap()],
        )
        .unwrap();
        let model = ModelDefinition::new("exp", space, |t: f64, p: &[f64]| (-p[0] * t).exp());
        let s = SamplingSchedule::new(vec![1.0], TimeUnit::Seconds).unwrap();
        assert_eq!(design_matrix(&model, &[0.5], &s), Err(Error::MissingBasis));
        assert!(matches!(
            ParameterVector::new(model.space().clone(), vec![2.0]),
            Err(Error::OutOfBounds { index: 0, .. })
        ));
    }

    #[test]
    fn non_finite_response_reports_time_index() {
        let space = ParameterSpace::new(
            vec!["k".into()],
            ParameterSplit::all_nonlinear(1),
            vec![Bounds::unbounded()],
        )
        .unwrap();
        let model = ModelDefinition::new("blowup", space, |t: f64, p: &[f64]| p[0] / (t - 2.0));
        let s = SamplingSchedule::new(vec![1.0, 2.0, 3.0], TimeUnit::Seconds).unwrap();
        let p = ParameterVector::new(model.space().clone(), vec![1.0]).unwrap();
        assert_eq!(
            response(&model, &p, &s),
            Err(Error::NonFiniteResponse { time_index: 1 })
        );
    }

    #[test]
    fn schedule_and_split_validation() {
        assert!(SamplingSchedule::<f64>::new(vec![], TimeUnit::Seconds).is_err());
        assert!(SamplingSchedule::new(vec![1.0, 1.0], TimeUnit::Seconds).is_err());
        assert!(SamplingSchedule::new(vec![0.0, 1.0], TimeUnit::Seconds).is_err());
        assert!(ParameterSplit::new(3, vec![0, 1], vec![1]).is_err());
        assert!(ParameterSplit::new(3, vec![0], vec![1]).is_err());
        assert!(ParameterSplit::new(2, vec![0], vec![2]).is_err());
        let s = SamplingSchedule::new(vec![1.0, 2.0], TimeUnit::Seconds).unwrap();
        assert!(DataSeries::new(s, vec![1.0]).is_err());
    }

    #[test]
    fn golden_elimination() {
        let model = scaled_square_model(1.0);
        let e = eliminate_linear(&model, &[], &golden_data(), 1e-12).unwrap();
        assert_abs_diff_eq!(e.linear[0], 2.011224, epsilon = 1e-6);
        assert_abs_diff_eq!(e.section_value, 396.49 - 197.1 * 197.1 / 98.0, epsilon = 1e-12);
        assert_eq!(e.effective_rank, 1);
    }

    #[test]
    fn data_in_basis_span_gives_zero_section() {
        let model = exponential_model(Bounds::new(0.01, 5.0).unwrap());
        let s = SamplingSchedule::new((1..=10).map(|i| i as f64 * 0.3).collect(), TimeUnit::Seconds).unwrap();
        let values = s.times().iter().map(|t| 1.7 * (-0.8 * t).exp()).collect();
        let data = DataSeries::new(s, values).unwrap();
        let e = eliminate_linear(&model, &[0.8], &data, 1e-12).unwrap();
        assert!(e.section_value < 1e-28);
        assert_abs_diff_eq!(e.linear[0], 1.7, epsilon = 1e-13);
    }

    #[test]
    fn exponential_elimination_matches_brute_force_sweep() {
        let model = exponential_model(Bounds::new(0.01, 5.0).unwrap());
        let s = SamplingSchedule::new((1..=12).map(|i| i as f64 * 0.25).collect(), TimeUnit::Seconds).unwrap();
        let noise = [0.03, -0.02, 0.01, 0.04, -0.05, 0.0, 0.02, -0.01, 0.03, -0.02, 0.01, 0.0];
        let values = s
            .times()
            .iter()
            .zip(noise)
            .map(|(t, z)| 3.0 * (-0.5 * t).exp() + z)
            .collect();
        let data = DataSeries::new(s, values).unwrap();
        let p2 = 0.62;
        let e = eliminate_linear(&model, &[p2], &data, 1e-12).unwrap();

        // 10⁵-point sweep over p1
        let (lo, hi, n) = (0.0, 6.0, 100_000);
        let step = (hi - lo) / (n - 1) as f64;
        let mut best = (f64::NAN, f64::INFINITY);
        for i in 0..n {
            let p1 = lo + i as f64 * step;
            let pv = ParameterVector::new(model.space().clone(), vec![p1, p2]).unwrap();
            let f = merit(&model, &pv, &data).unwrap();
            if f < best.1 {
                best = (p1, f);
            }
        }
        assert!((e.linear[0] - best.0).abs() <= step);
        assert!(e.section_value <= best.1 + 1e-12);
    }

    #[test]
    fn pinned_linear_parameters_move_to_the_rhs() {
        let model = scaled_square_model(1.0);
        let e = eliminate_with_fixed(&model, &[], &[(0, 2.0)], &golden_data(), 1e-12).unwrap();
        assert_eq!(e.free_count, 0);
        assert_eq!(e.linear, vec![2.0]);
        assert_abs_diff_eq!(e.section_value, 0.09, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn eliminated_block_is_conditionally_optimal(p2 in 0.05f64..4.0, d in -1.0f64..1.0, seed in 0u64..1000) {
            let model = exponential_model(Bounds::new(0.01, 5.0).unwrap());
            let s = SamplingSchedule::new((1..=8).map(|i| i as f64 * 0.4).collect(), TimeUnit::Seconds).unwrap();
            let values = s.times().iter().enumerate()
                .map(|(i, t)| 2.0 * (-0.7 * t).exp() + 0.01 * (((seed as usize + i) % 7) as f64 - 3.0))
                .collect();
            let data = DataSeries::new(s, values).unwrap();
            let e = eliminate_linear(&model, &[p2], &data, 1e-12).unwrap();
            let shifted = ParameterVector::new(model.space().clone(), vec![e.linear[0] + d, p2]).unwrap();
            prop_assert!(merit(&model, &shifted, &data).unwrap() >= e.section_value - 1e-10);
            let a = design_matrix(&model, &[p2], data.schedule()).unwrap();
            prop_assert!(is_positive_definite(&gram(&a), 1e-12).unwrap());
        }

        #[test]
        fn merit_is_nonnegative(a in -10.0f64..10.0) {
            let model = scaled_square_model(1.0);
            let f = merit(&model, &point(&model, &[a]), &golden_data()).unwrap();
            prop_assert!(f >= 0.0);
        }
    }
}
