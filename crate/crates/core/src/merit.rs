//! Follower merit, noise decomposition, similarity band and geometric error domains.
//!
//! The follower merit `F′(p) = Σ [u(t_i, p) − u(t_i, p_min)]²` is the noise-free
//! counterpart of the real-life merit `F`. With the noise `z = f − u(p_min)` and the follower
//! residual `h′(p) = u(p) − u(p_min)` the two are tied by the exact identity
//! `F(p) = F′(p) − 2·Σ h′_i z_i + ‖z‖²`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::CleverSection;
use crate::model::{response, DataSeries, ModelDefinition, ParameterVector};
use crate::scalar::{dot, norm, norm_sq, Scalar};

/// Identified minimizer together with the noise-free data it simulates.
#[derive(Debug, Clone)]
pub struct FollowerModel<T: Scalar> {
    model: ModelDefinition<T>,
    p_min: ParameterVector<T>,
    simulated: DataSeries<T>,
}

impl<T: Scalar> FollowerModel<T> {
    /// Simulates the response of `model` at `p_min` on the schedule of `data`.
    pub fn new(model: ModelDefinition<T>, p_min: ParameterVector<T>, data: &DataSeries<T>) -> Result<Self> {
        let values = response(&model, &p_min, data.schedule())?;
        let simulated = DataSeries::new(data.schedule().clone(), values)?;
        Ok(Self {
            model,
            p_min,
            simulated,
        })
    }

    pub fn model(&self) -> &ModelDefinition<T> {
        &self.model
    }

    pub fn p_min(&self) -> &ParameterVector<T> {
        &self.p_min
    }

    pub fn simulated_data(&self) -> &DataSeries<T> {
        &self.simulated
    }

    /// `h′(p) = u(p) − u(p_min)`.
    pub fn follower_residual(&self, p: &ParameterVector<T>) -> Result<Vec<T>> {
        let u = response(&self.model, p, self.simulated.schedule())?;
        Ok(u.iter()
            .zip(self.simulated.values())
            .map(|(&u, &s)| u - s)
            .collect())
    }

    pub fn follower_merit(&self, p: &ParameterVector<T>) -> Result<T> {
        Ok(norm_sq(&self.follower_residual(p)?))
    }

    /// `z = f − u(p_min)`; its squared norm equals `F(p_min)`.
    pub fn noise_decompose(&self, data: &DataSeries<T>) -> Result<NoiseVector<T>> {
        if data.times() != self.simulated.times() {
            return Err(Error::ScheduleMismatch);
        }
        Ok(NoiseVector::new(
            data.values()
                .iter()
                .zip(self.simulated.values())
                .map(|(&f, &s)| f - s)
                .collect(),
        ))
    }

    /// Both sides of `F(p) = F′(p) − 2·Σh′z + F(p_min)`.
    pub fn merit_relation_check(&self, data: &DataSeries<T>, p: &ParameterVector<T>) -> Result<RelationCheck<T>> {
        let z = self.noise_decompose(data)?;
        let hp = self.follower_residual(p)?;
        let lhs: T = data
            .values()
            .iter()
            .zip(response(&self.model, p, data.schedule())?)
            .map(|(&f, u)| (f - u) * (f - u))
            .sum();
        let cross = dot(&hp, &z.entries);
        let follower = norm_sq(&hp);
        Ok(RelationCheck {
            lhs,
            rhs: follower - T::lit(2.0) * cross + z.norm_sq,
            follower,
            cross_term: cross,
        })
    }

    /// Band `‖z‖² ± 2‖h′(p)‖‖z‖` that must contain `F(p) − F′(p)`.
    pub fn similarity_band(&self, z: &NoiseVector<T>, p: &ParameterVector<T>) -> Result<SimilarityBand<T>> {
        let hp = norm(&self.follower_residual(p)?);
        let zn = norm(&z.entries);
        let half = T::lit(2.0) * hp * zn;
        Ok(SimilarityBand {
            lower: z.norm_sq - half,
            upper: z.norm_sq + half,
        })
    }

    /// True iff `‖h′(p)‖² > ‖z‖²`.
    pub fn in_similarity_domain(&self, z: &NoiseVector<T>, p: &ParameterVector<T>) -> Result<bool> {
        Ok(self.follower_merit(p)? > z.norm_sq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseVector<T> {
    pub entries: Vec<T>,
    pub norm_sq: T,
}

impl<T: Scalar> NoiseVector<T> {
    pub fn new(entries: Vec<T>) -> Self {
        let norm_sq = norm_sq(&entries);
        Self { entries, norm_sq }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelationCheck<T> {
    /// Real-life merit `F(p)`.
    pub lhs: T,
    /// `F′(p) − 2·Σh′z + F(p_min)`.
    pub rhs: T,
    pub follower: T,
    pub cross_term: T,
}

impl<T: Scalar> RelationCheck<T> {
    pub fn gap(&self) -> T {
        (self.lhs - self.rhs).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarityBand<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> SimilarityBand<T> {
    pub fn contains(&self, x: T) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }
}

/// `|F(a) − F(b)|`: a pseudometric on parameter space (distinct points may be at distance 0).
pub fn pseudometric<T: Scalar>(fa: T, fb: T) -> T {
    (fa - fb).abs()
}

/// Sublevel set of a sampled one-dimensional section.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorInterval<T> {
    pub parameter_index: usize,
    pub level: T,
    /// Closed intervals `[lo, hi]` in increasing order.
    pub intervals: Vec<(T, T)>,
    /// Index into `intervals` of the one holding the section minimizer.
    pub containing_minimizer: Option<usize>,
    /// Half the diameter of the interval holding the minimizer (0 when empty).
    pub half_width: T,
}

impl<T: Scalar> ErrorInterval<T> {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn width(&self) -> T {
        self.half_width + self.half_width
    }
}

/// Error domain `{x : section(x) ≤ level}` from a clever section of the follower merit.
pub fn error_domain_1d<T: Scalar>(section: &CleverSection<T>, level: T) -> ErrorInterval<T> {
    let xs: Vec<T> = section.samples.iter().map(|s| s.x).collect();
    let fs: Vec<T> = section.samples.iter().map(|s| s.value).collect();
    error_domain_from_samples(section.parameter_index, &xs, &fs, level)
}

/// Same as [`error_domain_1d`] on raw `(x, F)` samples ordered by `x`.
///
/// Endpoints are refined by linear interpolation between the last sample inside and the
/// first sample outside the sublevel set.
pub fn error_domain_from_samples<T: Scalar>(
    parameter_index: usize,
    xs: &[T],
    fs: &[T],
    level: T,
) -> ErrorInterval<T> {
    let inside = |f: T| f.is_finite() && f <= level;
    let crossing = |i: usize, j: usize| {
        // i inside, j outside
        if !fs[j].is_finite() || fs[j] == fs[i] {
            return xs[i];
        }
        let w = (level - fs[i]) / (fs[j] - fs[i]);
        xs[i] + w * (xs[j] - xs[i])
    };

    let mut intervals = Vec::new();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        if !inside(fs[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < xs.len() && inside(fs[i + 1]) {
            i += 1;
        }
        let end = i;
        let lo = if start > 0 { crossing(start, start - 1) } else { xs[start] };
        let hi = if end + 1 < xs.len() { crossing(end, end + 1) } else { xs[end] };
        intervals.push((lo, hi));
        runs.push((start, end));
        i += 1;
    }

    let argmin = fs
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_finite())
        .fold(None, |best: Option<(usize, T)>, (i, &f)| match best {
            Some((_, b)) if b <= f => best,
            _ => Some((i, f)),
        })
        .map(|(i, _)| i);
    let containing_minimizer =
        argmin.and_then(|m| runs.iter().position(|&(s, e)| s <= m && m <= e));
    let half_width = containing_minimizer
        .map(|k| (intervals[k].1 - intervals[k].0) / T::lit(2.0))
        .unwrap_or_else(T::zero);

    ErrorInterval {
        parameter_index,
        level,
        intervals,
        containing_minimizer,
        half_width,
    }
}
