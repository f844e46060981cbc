//! Coordinate-grid scans with linear elimination at every node, clever sections by
//! projection, and resolution of quasi-degenerate minima through the sampled implicit
//! function `g(x)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merit::{ErrorInterval, FollowerModel};
use crate::model::{eliminate_with_fixed, DataSeries, ModelDefinition, ParameterSpace, ParameterVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// One grid axis over a model parameter.
///
/// Axes over nonlinear parameters are mandatory; an axis over a linear parameter pins it
/// during elimination, which gives sections along linear parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis<T> {
    pub parameter_index: usize,
    pub lo: T,
    pub hi: T,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl<T: Scalar> GridAxis<T> {
    pub fn linear(parameter_index: usize, lo: T, hi: T, points: usize) -> Self {
        Self {
            parameter_index,
            lo,
            hi,
            points,
            spacing: Spacing::Linear,
        }
    }

    pub fn log(parameter_index: usize, lo: T, hi: T, points: usize) -> Self {
        Self {
            parameter_index,
            lo,
            hi,
            points,
            spacing: Spacing::Log,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::InvalidGrid(format!(
                "axis over parameter {} has no points",
                self.parameter_index
            )));
        }
        if !self.lo.is_finite() || !self.hi.is_finite() || self.lo > self.hi {
            return Err(Error::InvalidGrid(format!(
                "axis over parameter {} has invalid range [{}, {}]",
                self.parameter_index, self.lo, self.hi
            )));
        }
        if self.spacing == Spacing::Log && self.lo <= T::zero() {
            return Err(Error::InvalidGrid(format!(
                "log axis over parameter {} needs a positive lower end",
                self.parameter_index
            )));
        }
        Ok(())
    }

    /// Sample coordinates, `lo` and `hi` included exactly.
    pub fn values(&self) -> Vec<T> {
        let n = self.points;
        if n == 1 {
            return vec![self.lo];
        }
        let last = T::from_usize_lossy(n - 1);
        (0..n)
            .map(|i| {
                if i == 0 {
                    return self.lo;
                }
                if i == n - 1 {
                    return self.hi;
                }
                let w = T::from_usize_lossy(i) / last;
                match self.spacing {
                    Spacing::Linear => self.lo + w * (self.hi - self.lo),
                    Spacing::Log => (self.lo.ln() + w * (self.hi.ln() - self.lo.ln())).exp(),
                }
            })
            .collect()
    }
}

/// Tensor grid; node index is row-major with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub axes: Vec<GridAxis<T>>,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(axes: Vec<GridAxis<T>>) -> Result<Self> {
        for (i, a) in axes.iter().enumerate() {
            a.validate()?;
            if axes[..i].iter().any(|b| b.parameter_index == a.parameter_index) {
                return Err(Error::InvalidGrid(format!(
                    "parameter {} has two axes",
                    a.parameter_index
                )));
            }
        }
        let spec = Self { axes };
        spec.checked_node_count()?;
        Ok(spec)
    }

    /// `Π g_i` (1 for a grid without axes).
    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    fn checked_node_count(&self) -> Result<usize> {
        self.axes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.points))
            .ok_or_else(|| Error::InvalidGrid("node count overflows".into()))
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn axis_of(&self, parameter_index: usize) -> Option<usize> {
        self.axes.iter().position(|a| a.parameter_index == parameter_index)
    }

    /// Checks that every nonlinear parameter has an axis and every axis lies within bounds.
    pub fn validate_for(&self, space: &ParameterSpace<T>) -> Result<()> {
        for &i in space.split().nonlinear() {
            if self.axis_of(i).is_none() {
                return Err(Error::InvalidGrid(format!(
                    "nonlinear parameter {} has no axis",
                    space.name(i)
                )));
            }
        }
        for a in &self.axes {
            if a.parameter_index >= space.len() {
                return Err(Error::InvalidGrid(format!("no parameter {}", a.parameter_index)));
            }
            let b = space.bounds()[a.parameter_index];
            if !b.contains(a.lo) || !b.contains(a.hi) {
                return Err(Error::InvalidGrid(format!(
                    "axis over {} leaves the bounds [{}, {}]",
                    space.name(a.parameter_index),
                    b.lo,
                    b.hi
                )));
            }
        }
        Ok(())
    }
}

/// Whether a scan was run against measured data or the follower's simulated data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionSource {
    RealLife,
    Follower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridNode<T> {
    /// Multi-index, one entry per axis.
    pub index: Vec<usize>,
    /// Full parameter vector at the node (eliminated linear part included); empty if failed.
    pub parameters: Vec<T>,
    /// `F` at the node, `+∞` if failed.
    pub value: T,
    pub effective_rank: usize,
    pub failure: Option<String>,
}

impl<T> GridNode<T> {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScan<T> {
    pub grid: GridSpec<T>,
    pub axis_values: Vec<Vec<T>>,
    pub nodes: Vec<GridNode<T>>,
    pub global_min_node: Option<usize>,
    /// Number of linear eliminations performed (always the node count).
    pub evaluations: usize,
    pub source: SectionSource,
    space: Arc<ParameterSpace<T>>,
}

impl<T: Scalar> GridScan<T> {
    pub fn space(&self) -> &Arc<ParameterSpace<T>> {
        &self.space
    }

    pub fn failed_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.failed()).count()
    }
}

fn unravel(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for (k, &d) in dims.iter().enumerate().rev() {
        idx[k] = flat % d;
        flat /= d;
    }
    idx
}

/// Scans `grid`, eliminating all linear parameters without an axis at every node.
///
/// Nodes run in parallel; results are collected in node order so the outcome does not
/// depend on the worker count.
pub fn scan<T: Scalar>(
    model: &ModelDefinition<T>,
    data: &DataSeries<T>,
    grid: &GridSpec<T>,
    rank_tol: T,
) -> Result<GridScan<T>> {
    scan_with_source(model, data, grid, rank_tol, SectionSource::RealLife)
}

/// Scan of the follower merit: the same grid against the data simulated at `p_min`.
pub fn scan_follower<T: Scalar>(fm: &FollowerModel<T>, grid: &GridSpec<T>, rank_tol: T) -> Result<GridScan<T>> {
    scan_with_source(fm.model(), fm.simulated_data(), grid, rank_tol, SectionSource::Follower)
}

pub fn scan_with_source<T: Scalar>(
    model: &ModelDefinition<T>,
    data: &DataSeries<T>,
    grid: &GridSpec<T>,
    rank_tol: T,
    source: SectionSource,
) -> Result<GridScan<T>> {
    let space = model.space();
    grid.validate_for(space)?;
    if !space.split().linear().is_empty() && !model.has_basis() {
        return Err(Error::MissingBasis);
    }
    let dims = grid.dims();
    let axis_values: Vec<Vec<T>> = grid.axes.iter().map(GridAxis::values).collect();
    let split = space.split();
    let count = grid.node_count();

    let nodes: Vec<GridNode<T>> = (0..count)
        .into_par_iter()
        .map(|flat| {
            let index = unravel(flat, &dims);
            let mut nonlinear = Vec::with_capacity(split.nonlinear().len());
            for &p in split.nonlinear() {
                let k = grid.axis_of(p).expect("validated");
                nonlinear.push(axis_values[k][index[k]]);
            }
            let fixed: Vec<(usize, T)> = grid
                .axes
                .iter()
                .enumerate()
                .filter(|(_, a)| split.is_linear(a.parameter_index))
                .map(|(k, a)| (a.parameter_index, axis_values[k][index[k]]))
                .collect();
            match eliminate_with_fixed(model, &nonlinear, &fixed, data, rank_tol) {
                Ok(e) if e.section_value.is_finite() => GridNode {
                    index,
                    parameters: e.parameters.into_values(),
                    value: e.section_value,
                    effective_rank: e.effective_rank,
                    failure: None,
                },
                Ok(_) => GridNode {
                    index,
                    parameters: Vec::new(),
                    value: T::infinity(),
                    effective_rank: 0,
                    failure: Some("non-finite merit".into()),
                },
                Err(err) => GridNode {
                    index,
                    parameters: Vec::new(),
                    value: T::infinity(),
                    effective_rank: 0,
                    failure: Some(err.to_string()),
                },
            }
        })
        .collect();

    let global_min_node = argmin_nodes(&nodes, 0..nodes.len());
    Ok(GridScan {
        grid: grid.clone(),
        axis_values,
        nodes,
        global_min_node,
        evaluations: count,
        source,
        space: space.clone(),
    })
}

/// Lowest value among non-failed nodes; ties go to the first index in iteration order.
fn argmin_nodes<T: Scalar>(nodes: &[GridNode<T>], order: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in order {
        if nodes[i].failed() {
            continue;
        }
        match best {
            Some(b) if nodes[b].value <= nodes[i].value => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Winning node as a full parameter vector with its merit.
pub fn global_min<T: Scalar>(scan: &GridScan<T>) -> Result<(ParameterVector<T>, T)> {
    let i = scan.global_min_node.ok_or(Error::AllNodesFailed)?;
    let node = &scan.nodes[i];
    Ok((
        ParameterVector::new(scan.space.clone(), node.parameters.clone())?,
        node.value,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionSample<T> {
    pub x: T,
    /// Minimal `F` over all nodes with this coordinate (`+∞` if all failed).
    pub value: T,
    /// Winning node, if any succeeded.
    pub node: Option<usize>,
    /// Full parameter vector at the winning node: the sampled `(g(x), x)`.
    pub parameters: Vec<T>,
}

/// One-dimensional clever section `x ↦ min F` over the remaining coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CleverSection<T> {
    pub parameter_index: usize,
    pub samples: Vec<SectionSample<T>>,
    pub source: SectionSource,
    /// `basin_jumps[i]` is set when the argmin moves by more than one grid step on some other
    /// axis between samples `i` and `i + 1`.
    pub basin_jumps: Vec<bool>,
    space: Arc<ParameterSpace<T>>,
}

impl<T: Scalar> CleverSection<T> {
    pub fn space(&self) -> &Arc<ParameterSpace<T>> {
        &self.space
    }

    pub fn xs(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.x).collect()
    }

    pub fn values(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.value).collect()
    }

    pub fn has_basin_jump(&self) -> bool {
        self.basin_jumps.iter().any(|&b| b)
    }
}

pub fn clever_section<T: Scalar>(scan: &GridScan<T>, parameter_index: usize) -> Result<CleverSection<T>> {
    let axis = scan.grid.axis_of(parameter_index).ok_or_else(|| {
        Error::InvalidGrid(format!("parameter {parameter_index} is not a grid axis"))
    })?;
    let proj = project_scan(scan, &[axis])?;
    let samples: Vec<SectionSample<T>> = scan.axis_values[axis]
        .iter()
        .zip(&proj.argmin)
        .zip(&proj.values)
        .map(|((&x, &node), &value)| SectionSample {
            x,
            value,
            node,
            parameters: node.map(|n| scan.nodes[n].parameters.clone()).unwrap_or_default(),
        })
        .collect();
    let basin_jumps = samples
        .windows(2)
        .map(|w| match (w[0].node, w[1].node) {
            (Some(a), Some(b)) => scan.nodes[a]
                .index
                .iter()
                .zip(&scan.nodes[b].index)
                .enumerate()
                .any(|(k, (&i, &j))| k != axis && i.abs_diff(j) > 1),
            _ => false,
        })
        .collect();
    Ok(CleverSection {
        parameter_index,
        samples,
        source: scan.source,
        basin_jumps,
        space: scan.space.clone(),
    })
}

/// Minimum of a scan over all axes not in `kept`, tabulated over the kept axes
/// (row-major in the order of `kept`).
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub kept: Vec<usize>,
    pub dims: Vec<usize>,
    pub values: Vec<T>,
    /// Winning scan node per cell.
    pub argmin: Vec<Option<usize>>,
}

impl<T: Scalar> Projection<T> {
    /// Projects further onto `keep ⊆ self.kept`.
    pub fn project(&self, keep: &[usize]) -> Result<Projection<T>> {
        let positions: Vec<usize> = keep
            .iter()
            .map(|a| {
                self.kept
                    .iter()
                    .position(|k| k == a)
                    .ok_or_else(|| Error::InvalidGrid(format!("axis {a} not among the projected axes")))
            })
            .collect::<Result<_>>()?;
        let values: Vec<(T, Option<usize>)> = self.values.iter().copied().zip(self.argmin.iter().copied()).collect();
        let (dims, values, argmin) = reduce(&self.dims, &positions, &values);
        Ok(Projection {
            kept: keep.to_vec(),
            dims,
            values,
            argmin,
        })
    }
}

fn reduce<T: Scalar>(
    dims: &[usize],
    positions: &[usize],
    cells: &[(T, Option<usize>)],
) -> (Vec<usize>, Vec<T>, Vec<Option<usize>>) {
    let out_dims: Vec<usize> = positions.iter().map(|&p| dims[p]).collect();
    let n_out: usize = out_dims.iter().product();
    let mut values = vec![T::infinity(); n_out];
    let mut argmin = vec![None; n_out];
    for (flat, &(v, node)) in cells.iter().enumerate() {
        if node.is_none() {
            continue;
        }
        let idx = unravel(flat, dims);
        let out = positions.iter().fold(0, |acc, &p| acc * dims[p] + idx[p]);
        // strict comparison keeps the first cell in row-major order on ties
        if argmin[out].is_none() || v < values[out] {
            values[out] = v;
            argmin[out] = node;
        }
    }
    (out_dims, values, argmin)
}

/// Projection of a scan onto the axes `keep` (axis positions, not parameter indices).
pub fn project_scan<T: Scalar>(scan: &GridScan<T>, keep: &[usize]) -> Result<Projection<T>> {
    let n_axes = scan.grid.axes.len();
    for (i, &a) in keep.iter().enumerate() {
        if a >= n_axes || keep[..i].contains(&a) {
            return Err(Error::InvalidGrid(format!("invalid projection axes {keep:?}")));
        }
    }
    let cells: Vec<(T, Option<usize>)> = scan
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.value, (!n.failed()).then_some(i)))
        .collect();
    let (dims, values, argmin) = reduce(&scan.grid.dims(), keep, &cells);
    Ok(Projection {
        kept: keep.to_vec(),
        dims,
        values,
        argmin,
    })
}

/// Checks that projecting onto `inner` directly equals projecting onto `outer` first and
/// then onto `inner`, cell by cell.
pub fn nesting_check<T: Scalar>(scan: &GridScan<T>, inner: &[usize], outer: &[usize]) -> Result<bool> {
    if inner.iter().any(|a| !outer.contains(a)) {
        return Err(Error::InvalidGrid(format!("axes {inner:?} are not nested in {outer:?}")));
    }
    let direct = project_scan(scan, inner)?;
    let nested = project_scan(scan, outer)?.project(inner)?;
    Ok(direct.values.len() == nested.values.len()
        && direct
            .values
            .iter()
            .zip(&nested.values)
            .all(|(a, b)| a == b || (a.is_infinite() && b.is_infinite())))
}

/// Full parameter vector read off a section at the sample nearest to a known coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved<T> {
    pub parameters: ParameterVector<T>,
    pub sample_index: usize,
    /// `|x_known − x_sample|`.
    pub gap: T,
}

/// Resolves a quasi-degenerate minimum: given `x` from independent knowledge, returns
/// `(g(x), x)` from the nearest section sample (no interpolation across samples).
pub fn resolve_degenerate<T: Scalar>(section: &CleverSection<T>, x_known: T) -> Result<Resolved<T>> {
    let (first, last) = match (section.samples.first(), section.samples.last()) {
        (Some(f), Some(l)) => (f.x, l.x),
        _ => return Err(Error::InvalidGrid("empty section".into())),
    };
    if !(x_known >= first && x_known <= last) {
        return Err(Error::OutsideSampledRange {
            value: x_known.to_f64_lossy(),
            lo: first.to_f64_lossy(),
            hi: last.to_f64_lossy(),
        });
    }
    let (sample_index, gap) = section
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (i, (s.x - x_known).abs()))
        .fold((0, T::infinity()), |best, cur| if cur.1 < best.1 { cur } else { best });
    let sample = &section.samples[sample_index];
    if sample.node.is_none() {
        return Err(Error::InvalidGrid(format!(
            "every node failed at section sample {sample_index}"
        )));
    }
    Ok(Resolved {
        parameters: ParameterVector::new(section.space.clone(), sample.parameters.clone())?,
        sample_index,
        gap,
    })
}

/// Grid step proposal from a pilot follower-merit error domain: one fifth of its half-width.
pub fn propose_step<T: Scalar>(pilot: &ErrorInterval<T>) -> Option<T> {
    (pilot.half_width > T::zero()).then(|| pilot.half_width / T::lit(5.0))
}

/// Indices of local minima of a sampled curve, found from sign changes of the forward
/// differences (plateaus count once; endpoints count when the curve rises away from them).
pub fn local_minima<T: Scalar>(values: &[T]) -> Vec<usize> {
    let mut out = Vec::new();
    if values.is_empty() {
        return out;
    }
    // sign of the last nonzero difference and where the current descent bottomed out
    let mut last_sign = 0i8;
    let mut bottom = 0usize;
    for i in 1..values.len() {
        let d = values[i] - values[i - 1];
        let sign = if d > T::zero() {
            1
        } else if d < T::zero() {
            -1
        } else {
            0
        };
        if sign == 0 {
            continue;
        }
        if sign == 1 && last_sign <= 0 {
            out.push(bottom);
        }
        if sign == -1 {
            bottom = i;
        }
        last_sign = sign;
    }
    if last_sign <= 0 {
        // trailing descent, or a curve that is flat throughout
        out.push(bottom);
    }
    out
}

/// A single minimum (plateaus allowed) and no interior maximum.
pub fn is_unimodal<T: Scalar>(values: &[T]) -> bool {
    local_minima(values).len() <= 1
}
