//! Closed-form 1D coupled consolidation: oedometric relaxation (ORT) and compression (OCT)
//! tests with a cubic initial pore-pressure profile, the logarithmic relaxation term, and the
//! H/HCRT/HCR/HC model versions as partly-linear models of total stress.
//!
//! ORT: `u(t, y) = Σ α_k [cos(kπy/H) − 1] e^{−k²π²T}`, `T = ct/H²`.
//! OCT: `u(t, y) = Σ β_k sin((2k−1)πy/(2H)) e^{−(2k−1)²π²T}`, `T = ct/(4H²)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Bounds, ModelDefinition, ParameterSpace, ParameterSplit};
use crate::scalar::Scalar;

/// Default series truncation.
pub const DEFAULT_TERMS: usize = 200;

/// Relative size below which the remaining series terms are dropped (for `T > 0`).
const EARLY_EXIT: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestType {
    /// Relaxation test: displacement load, stress relaxes.
    Ort,
    /// Compression test: stress load.
    Oct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Load<T> {
    /// Prescribed top displacement `v0` (m).
    Displacement(T),
    /// Prescribed stress `σ0` (kPa).
    Stress(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OedometerGeometry<T> {
    /// Drainage length (m).
    pub h: T,
    /// Oedometric modulus (kPa).
    pub e_oed: T,
    pub load: Load<T>,
}

impl<T: Scalar> OedometerGeometry<T> {
    pub fn new(h: T, e_oed: T, load: Load<T>) -> Result<Self> {
        positive("H", h)?;
        positive("E_oed", e_oed)?;
        Ok(Self { h, e_oed, load })
    }

    pub fn test_type(&self) -> TestType {
        match self.load {
            Load::Displacement(_) => TestType::Ort,
            Load::Stress(_) => TestType::Oct,
        }
    }
}

fn positive<T: Scalar>(name: &str, x: T) -> Result<()> {
    if x.is_finite() && x > T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {x}")))
    }
}

/// `u(0, y) = A·y³ + B·y² + C·y`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialCondition<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T: Scalar> InitialCondition<T> {
    pub fn new(a: T, b: T, c: T) -> Self {
        Self { a, b, c }
    }

    pub fn value(&self, y: T) -> T {
        ((self.a * y + self.b) * y + self.c) * y
    }

    /// Mean over `[0, H]`: `D = A·H³/4 + B·H²/3 + C·H/2`.
    pub fn mean(&self, h: T) -> T {
        self.a * h.powi(3) / T::lit(4.0) + self.b * h * h / T::lit(3.0) + self.c * h / T::lit(2.0)
    }
}

/// Empirical relaxation term parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation<T> {
    /// `Δσʳ = s·σ(0)/(1 − s·b)·L(t)` with `b = log10((t1 + t3)/t1)`.
    Full { s: T, t1: T, t3: T },
    /// `Δσʳ = sk·L(t)`, the `b = 0` form with `sk = s·σ(0)`.
    Linearized { sk: T, t1: T, t3: T },
}

impl<T: Scalar> Relaxation<T> {
    fn times(&self) -> (T, T) {
        match *self {
            Relaxation::Full { t1, t3, .. } | Relaxation::Linearized { t1, t3, .. } => (t1, t3),
        }
    }

    fn validate(&self) -> Result<()> {
        let (t1, t3) = self.times();
        positive("t1", t1)?;
        if !(t3.is_finite() && t3 >= T::zero()) {
            return Err(Error::InvalidParameter(format!("t3 must be nonnegative, got {t3}")));
        }
        Ok(())
    }
}

/// `b = log10((t1 + t3)/t1)`.
pub fn relaxation_b<T: Scalar>(t1: T, t3: T) -> T {
    ((t1 + t3) / t1).log10()
}

/// Relaxation shape `L(t) = log10((t + t1)/(t1 + t3))` for `t > t3`, otherwise 0.
pub fn relaxation_shape<T: Scalar>(t: T, t1: T, t3: T) -> T {
    if t > t3 {
        ((t + t1) / (t1 + t3)).log10()
    } else {
        T::zero()
    }
}

/// `Δσʳ(t)`.
pub fn relaxation_term<T: Scalar>(relax: &Relaxation<T>, sigma0: T, t: T) -> Result<T> {
    relax.validate()?;
    match *relax {
        Relaxation::Full { s, t1, t3 } => {
            let denom = T::one() - s * relaxation_b(t1, t3);
            if denom == T::zero() {
                return Err(Error::InvalidParameter("s·b = 1 makes the relaxation term singular".into()));
            }
            Ok(s * sigma0 / denom * relaxation_shape(t, t1, t3))
        }
        Relaxation::Linearized { sk, t1, t3 } => Ok(sk * relaxation_shape(t, t1, t3)),
    }
}

/// `T = c·t/H²` (ORT) or `c·t/(4H²)` (OCT).
pub fn time_factor<T: Scalar>(c: T, t: T, h: T, test: TestType) -> Result<T> {
    positive("c", c)?;
    positive("H", h)?;
    if !(t >= T::zero()) {
        return Err(Error::InvalidParameter(format!("time must be nonnegative, got {t}")));
    }
    let base = c * t / (h * h);
    Ok(match test {
        TestType::Ort => base,
        TestType::Oct => base / T::lit(4.0),
    })
}

/// `σ∞ = E_oed·v0/H`.
pub fn sigma_infinity<T: Scalar>(geom: &OedometerGeometry<T>) -> Result<T> {
    match geom.load {
        Load::Displacement(v0) => Ok(geom.e_oed * v0 / geom.h),
        Load::Stress(_) => Err(Error::InvalidParameter(
            "σ∞ needs a displacement load (relaxation test)".into(),
        )),
    }
}

/// Pore-pressure series of a cubic initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries<T> {
    pub test_type: TestType,
    pub h: T,
    /// `α_k` (ORT) or `β_k` (OCT), `k = 1..=K`.
    pub coefficients: Vec<T>,
    /// ORT: `α_0 = −Σ_{k≥1} α_k`, equal to the exact mean initial pore pressure `D`.
    pub alpha0: T,
    /// `max_{j ≥ k} |c_j|`, bounds the tail for early exit.
    tail_bound: Vec<T>,
}

impl<T: Scalar> FourierSeries<T> {
    pub fn terms(&self) -> usize {
        self.coefficients.len()
    }

    /// Spatial wavenumber of term `k` (1-based).
    pub fn wavenumber(&self, k: usize) -> T {
        let k = T::from_usize_lossy(k);
        match self.test_type {
            TestType::Ort => k * T::lit(PI) / self.h,
            TestType::Oct => (T::lit(2.0) * k - T::one()) * T::lit(PI) / (T::lit(2.0) * self.h),
        }
    }

    /// Displacement coefficients: ORT `a_k = α_k·H/(kπ·E_oed)`, OCT `b_k = −β_k·2H/((2k−1)π·E_oed)`.
    pub fn displacement_coefficients(&self, e_oed: T) -> Vec<T> {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let w = self.wavenumber(i + 1);
                match self.test_type {
                    TestType::Ort => c / (w * e_oed),
                    TestType::Oct => -c / (w * e_oed),
                }
            })
            .collect()
    }

    /// `exp(−λ_k²·c·t)`, the common decay of term `k`.
    fn decay(&self, k: usize, c: T, t: T) -> T {
        let w = self.wavenumber(k);
        (-(w * w) * c * t).exp()
    }

    /// `Σ_k c_k·g(k)·decay_k`, stopping once the remaining terms cannot matter.
    fn sum(&self, c: T, t: T, mut g: impl FnMut(usize) -> T) -> T {
        let mut acc = T::zero();
        for (i, &coef) in self.coefficients.iter().enumerate() {
            let d = self.decay(i + 1, c, t);
            if t > T::zero() && self.tail_bound[i] * d <= T::lit(EARLY_EXIT) * acc.abs() {
                break;
            }
            acc += coef * g(i + 1) * d;
        }
        acc
    }
}

/// Integrals `∫₀ᴴ yⁿ cos(ωy) dy` for `n = 1, 2, 3`, with `ω = kπ/H`.
fn cosine_moments<T: Scalar>(k: usize, h: T) -> [T; 3] {
    let w = T::from_usize_lossy(k) * T::lit(PI) / h;
    let s = if k.is_multiple_of(2) { T::one() } else { -T::one() };
    let w2 = w * w;
    [
        (s - T::one()) / w2,
        T::lit(2.0) * h * s / w2,
        T::lit(3.0) * h * h * s / w2 - T::lit(6.0) * (s - T::one()) / (w2 * w2),
    ]
}

/// Integrals `∫₀ᴴ yⁿ sin(λy) dy` for `n = 1, 2, 3`, with `λ = (2k−1)π/(2H)`.
fn sine_moments<T: Scalar>(k: usize, h: T) -> [T; 3] {
    let l = (T::lit(2.0) * T::from_usize_lossy(k) - T::one()) * T::lit(PI) / (T::lit(2.0) * h);
    let s = if k % 2 == 1 { T::one() } else { -T::one() };
    let l2 = l * l;
    [
        s / l2,
        T::lit(2.0) * h * s / l2 - T::lit(2.0) / (l2 * l),
        T::lit(3.0) * h * h * s / l2 - T::lit(6.0) * s / (l2 * l2),
    ]
}

/// Projects the cubic initial condition on the cosine (ORT) or quarter-wave sine (OCT)
/// basis with `K` terms.
pub fn fourier_coefficients<T: Scalar>(
    initial: &InitialCondition<T>,
    h: T,
    test: TestType,
    terms: usize,
) -> Result<FourierSeries<T>> {
    positive("H", h)?;
    if terms == 0 {
        return Err(Error::InvalidParameter("series needs at least one term".into()));
    }
    let scale = T::lit(2.0) / h;
    let coefficients: Vec<T> = (1..=terms)
        .map(|k| {
            let [m1, m2, m3] = match test {
                TestType::Ort => cosine_moments(k, h),
                TestType::Oct => sine_moments(k, h),
            };
            scale * (initial.a * m3 + initial.b * m2 + initial.c * m1)
        })
        .collect();
    let mut tail_bound = vec![T::zero(); terms];
    let mut running = T::zero();
    for i in (0..terms).rev() {
        running = running.max(coefficients[i].abs());
        tail_bound[i] = running;
    }
    Ok(FourierSeries {
        test_type: test,
        h,
        coefficients,
        alpha0: match test {
            TestType::Ort => initial.mean(h),
            TestType::Oct => T::zero(),
        },
        tail_bound,
    })
}

fn check_depth<T: Scalar>(y: T, h: T) -> Result<()> {
    if y >= T::zero() && y <= h {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("depth {y} outside [0, {h}]")))
    }
}

/// Pore pressure `u(t, y)`.
///
/// At `t = 0` the ORT series is evaluated as `α_0 + Σ α_k cos(kπy/H)` with the exact
/// `α_0`, which removes the slowly converging constant part of the truncation error.
pub fn pore_pressure<T: Scalar>(series: &FourierSeries<T>, c: T, t: T, y: T) -> Result<T> {
    time_factor(c, t, series.h, series.test_type)?;
    check_depth(y, series.h)?;
    Ok(match series.test_type {
        TestType::Ort if t == T::zero() => {
            series.alpha0 + series.sum(c, t, |k| (series.wavenumber(k) * y).cos())
        }
        TestType::Ort => series.sum(c, t, |k| (series.wavenumber(k) * y).cos() - T::one()),
        TestType::Oct => series.sum(c, t, |k| (series.wavenumber(k) * y).sin()),
    })
}

/// `u_mean(t) = (1/H)∫₀ᴴ u dy = −Σ α_k e^{−k²π²T}` (exactly `α_0 = D` at `t = 0`).
pub fn mean_pore_pressure<T: Scalar>(series: &FourierSeries<T>, c: T, t: T) -> Result<T> {
    if series.test_type != TestType::Ort {
        return Err(Error::InvalidParameter("mean pore pressure is defined for the relaxation test".into()));
    }
    time_factor(c, t, series.h, series.test_type)?;
    if t == T::zero() {
        return Ok(series.alpha0);
    }
    Ok(-series.sum(c, t, |_| T::one()))
}

/// Parameters of one relaxation stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationParams<T> {
    pub h: T,
    pub initial: InitialCondition<T>,
    /// Coefficient of consolidation (m²/s).
    pub c: T,
    /// Asymptotic total stress (kPa).
    pub sigma_inf: T,
    pub relaxation: Option<Relaxation<T>>,
}

impl<T: Scalar> ConsolidationParams<T> {
    /// Mean initial pore pressure `D`.
    pub fn d(&self) -> T {
        self.initial.mean(self.h)
    }

    /// `σ(0) = σ∞ + D`.
    pub fn sigma0(&self) -> T {
        self.sigma_inf + self.d()
    }
}

/// Total stress `σ(t) = σ∞ + σᵗ(t) − Δσʳ(t)`.
///
/// The transient part is summed as `Σ φ_k e^{−k²π²T}` with `φ_k = −α_k`, a separate route
/// from [`mean_pore_pressure`] to the same value.
pub fn total_stress<T: Scalar>(params: &ConsolidationParams<T>, series: &FourierSeries<T>, t: T) -> Result<T> {
    if series.test_type != TestType::Ort {
        return Err(Error::InvalidParameter("total stress model is defined for the relaxation test".into()));
    }
    time_factor(params.c, t, params.h, TestType::Ort)?;
    let transient = if t == T::zero() {
        params.d()
    } else {
        let pi2 = T::lit(PI * PI);
        let tf = params.c * t / (params.h * params.h);
        let mut acc = T::zero();
        for (i, &alpha) in series.coefficients.iter().enumerate() {
            let k = T::from_usize_lossy(i + 1);
            let d = (-(k * k) * pi2 * tf).exp();
            if series.tail_bound[i] * d <= T::lit(EARLY_EXIT) * acc.abs() {
                break;
            }
            let phi = -alpha;
            acc += phi * d;
        }
        acc
    };
    let relax = match &params.relaxation {
        Some(r) => relaxation_term(r, params.sigma0(), t)?,
        None => T::zero(),
    };
    Ok(params.sigma_inf + transient - relax)
}

/// Displacement `v(t, y)`: steady part plus transient sine (ORT) or cosine (OCT) series.
pub fn displacement_field<T: Scalar>(geom: &OedometerGeometry<T>, series: &FourierSeries<T>, c: T, t: T, y: T) -> Result<T> {
    time_factor(c, t, geom.h, series.test_type)?;
    check_depth(y, geom.h)?;
    if geom.test_type() != series.test_type {
        return Err(Error::InvalidParameter("load type does not match the series".into()));
    }
    let coef = series.displacement_coefficients(geom.e_oed);
    let (steady, transient) = match geom.load {
        Load::Displacement(v0) => (
            v0 * (T::one() - y / geom.h),
            sum_with(series, &coef, c, t, |k| (series.wavenumber(k) * y).sin()),
        ),
        Load::Stress(s0) => (
            s0 / geom.e_oed * (geom.h - y),
            sum_with(series, &coef, c, t, |k| (series.wavenumber(k) * y).cos()),
        ),
    };
    Ok(steady + transient)
}

fn sum_with<T: Scalar>(series: &FourierSeries<T>, coef: &[T], c: T, t: T, mut g: impl FnMut(usize) -> T) -> T {
    coef.iter()
        .enumerate()
        .map(|(i, &a)| a * g(i + 1) * series.decay(i + 1, c, t))
        .fold(T::zero(), |acc, x| acc + x)
}

/// Transient strain: ORT `εᵗ = −[u_mean − u]/E_oed`, OCT `εᵗ = u/E_oed`.
pub fn strain_field<T: Scalar>(series: &FourierSeries<T>, e_oed: T, c: T, t: T, y: T) -> Result<T> {
    positive("E_oed", e_oed)?;
    let u = pore_pressure(series, c, t, y)?;
    Ok(match series.test_type {
        TestType::Ort => -(mean_pore_pressure(series, c, t)? - u) / e_oed,
        TestType::Oct => u / e_oed,
    })
}

/// Model versions, from the most general to the simplest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelVersion {
    /// `[A, B, C, sigma_inf, c, s, t3, t1]`.
    H,
    /// `[A, B, C, sigma_inf, sk, c, t3]`, `t1` fixed, `b = 0`.
    #[serde(rename = "HCRT")]
    Hcrt,
    /// `[A, B, C, sigma_inf, sk, c]`, `t1` fixed, `t3 = 0`.
    #[serde(rename = "HCR")]
    Hcr,
    /// `[A, B, C, sigma_inf, c]`, no relaxation.
    #[serde(rename = "HC")]
    Hc,
}

impl ModelVersion {
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            ModelVersion::H => &["A", "B", "C", "sigma_inf", "c", "s", "t3", "t1"],
            ModelVersion::Hcrt => &["A", "B", "C", "sigma_inf", "sk", "c", "t3"],
            ModelVersion::Hcr => &["A", "B", "C", "sigma_inf", "sk", "c"],
            ModelVersion::Hc => &["A", "B", "C", "sigma_inf", "c"],
        }
    }

    pub fn linear_count(&self) -> usize {
        match self {
            ModelVersion::H | ModelVersion::Hc => 4,
            ModelVersion::Hcrt | ModelVersion::Hcr => 5,
        }
    }

    pub fn nonlinear_count(&self) -> usize {
        self.parameter_names().len() - self.linear_count()
    }

    fn needs_t1(&self) -> bool {
        matches!(self, ModelVersion::Hcrt | ModelVersion::Hcr)
    }
}

/// Values for parameters a version pins instead of identifying.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FixedValues<T> {
    pub t1: Option<T>,
}

/// Partly-linear model of total stress `σ(t)` for the given version.
///
/// The basis columns are the mean-pore-pressure responses to unit `A`, `B`, `C`, the
/// constant 1 for `σ∞` and `−L(t)` for `sk`; in version H the relaxation factor
/// `κ = s/(1 − s·b)` multiplies `σ(0) = σ∞ + D(A, B, C)`, which stays linear.
/// `evaluate` goes through [`total_stress`] independently of the basis.
pub fn build_model<T: Scalar>(
    version: ModelVersion,
    h: T,
    fixed: FixedValues<T>,
    terms: usize,
) -> Result<ModelDefinition<T>> {
    positive("H", h)?;
    if terms == 0 {
        return Err(Error::InvalidParameter("series needs at least one term".into()));
    }
    let t1_fixed = if version.needs_t1() {
        let t1 = fixed
            .t1
            .ok_or_else(|| Error::InvalidParameter(format!("{version:?} needs a fixed t1")))?;
        positive("t1", t1)?;
        t1
    } else {
        T::zero()
    };

    let names = version.parameter_names();
    let m = names.len();
    let l = version.linear_count();
    let split = ParameterSplit::new(m, (0..l).collect(), (l..m).collect())?;
    let tiny = T::min_positive_value();
    let bounds: Vec<Bounds<T>> = names
        .iter()
        .map(|&n| match n {
            "c" | "t1" => Bounds { lo: tiny, hi: T::infinity() },
            "t3" => Bounds { lo: T::zero(), hi: T::infinity() },
            _ => Bounds::unbounded(),
        })
        .collect();
    let space = ParameterSpace::new(names.iter().map(|s| s.to_string()).collect(), split, bounds)?;

    // unit-coefficient series for A, B, C
    let pi2 = T::lit(PI * PI);
    let scale = T::lit(2.0) / h;
    let unit: Vec<[T; 3]> = (1..=terms)
        .map(|k| {
            let [m1, m2, m3] = cosine_moments(k, h);
            [scale * m3, scale * m2, scale * m1]
        })
        .collect();
    let unit_bound: Vec<T> = {
        let mut out = vec![T::zero(); terms];
        let mut running = T::zero();
        for i in (0..terms).rev() {
            running = running.max(unit[i].iter().fold(T::zero(), |a, x| a.max(x.abs())));
            out[i] = running;
        }
        out
    };
    let d_unit = [h.powi(3) / T::lit(4.0), h * h / T::lit(3.0), h / T::lit(2.0)];

    let unit_means = move |t: T, c: T| -> [T; 3] {
        let tf = c * t / (h * h);
        let mut acc = [T::zero(); 3];
        for (i, coefs) in unit.iter().enumerate() {
            let k = T::from_usize_lossy(i + 1);
            let d = (-(k * k) * pi2 * tf).exp();
            let scale_now = acc.iter().fold(T::zero(), |a, x| a.max(x.abs()));
            if unit_bound[i] * d <= T::lit(EARLY_EXIT) * scale_now {
                break;
            }
            for j in 0..3 {
                acc[j] -= coefs[j] * d;
            }
        }
        acc
    };

    let basis = move |t: T, p2: &[T], out: &mut [T]| {
        let c = p2[0];
        let um = unit_means(t, c);
        match version {
            ModelVersion::H => {
                let (s, t3, t1) = (p2[1], p2[2], p2[3]);
                let kappa = s / (T::one() - s * relaxation_b(t1, t3));
                let kl = kappa * relaxation_shape(t, t1, t3);
                for j in 0..3 {
                    out[j] = um[j] - kl * d_unit[j];
                }
                out[3] = T::one() - kl;
            }
            ModelVersion::Hcrt | ModelVersion::Hcr => {
                let t3 = if version == ModelVersion::Hcrt { p2[1] } else { T::zero() };
                out[..3].copy_from_slice(&um);
                out[3] = T::one();
                out[4] = -relaxation_shape(t, t1_fixed, t3);
            }
            ModelVersion::Hc => {
                out[..3].copy_from_slice(&um);
                out[3] = T::one();
            }
        }
    };

    let evaluate = move |t: T, p: &[T]| -> T {
        let initial = InitialCondition::new(p[0], p[1], p[2]);
        let (c, relaxation) = match version {
            ModelVersion::H => (p[4], Some(Relaxation::Full { s: p[5], t3: p[6], t1: p[7] })),
            ModelVersion::Hcrt => (p[5], Some(Relaxation::Linearized { sk: p[4], t1: t1_fixed, t3: p[6] })),
            ModelVersion::Hcr => (p[5], Some(Relaxation::Linearized { sk: p[4], t1: t1_fixed, t3: T::zero() })),
            ModelVersion::Hc => (p[4], None),
        };
        let params = ConsolidationParams {
            h,
            initial,
            c,
            sigma_inf: p[3],
            relaxation,
        };
        fourier_coefficients(&initial, h, TestType::Ort, terms)
            .and_then(|series| total_stress(&params, &series, t))
            .unwrap_or_else(|_| T::nan())
    };

    let name = match version {
        ModelVersion::H => "consolidation-H",
        ModelVersion::Hcrt => "consolidation-HCRT",
        ModelVersion::Hcr => "consolidation-HCR",
        ModelVersion::Hc => "consolidation-HC",
    };
    Ok(ModelDefinition::new(name, space, evaluate).with_basis(basis))
}
