//! Lattice-valued forcing functions `f: ℝ → ℓ²`, their time translates
//! `f^h(t) = f(t + h)` and the compact-open metric on `C(ℝ, ℓ²)`.
//!
//! The main family is the quasi-periodic example
//! `f_i(t) = sin(ω_i t + ln(1 + t²)) / 2^{|i|}`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lattice::LatticeVector;

/// `Σ_{i∈ℤ} 4^{-|i|}`, the squared sup-norm bound of the example family.
pub const EXAMPLE_NORM_SQ_BOUND: f64 = 5.0 / 3.0;

/// Overstated value 11/3 sometimes quoted for the same geometric sum; kept for comparison.
/// Kept only so reports can show the discrepancy next to the computed value.
pub const EXAMPLE_NORM_SQ_PRINTED: f64 = 11.0 / 3.0;

/// Safety factor applied to sampled sup-norm estimates of custom forcings.
pub const SAMPLED_BOUND_INFLATION: f64 = 1.05;

const GEOMETRIC_TAIL_SEARCH: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForcingError {
    #[error("tail tolerance eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("no tail index up to {searched} satisfies the bound for eps = {eps}")]
    TailSearchExhausted { eps: f64, searched: usize },
    #[error("invalid metric arguments: L_max = {l_max}, grid step = {grid_step}")]
    InvalidMetricArgs { l_max: f64, grid_step: f64 },
    #[error("forcing windows differ: {0} vs {1}")]
    WindowMismatch(usize, usize),
    #[error("expected {expected} frequencies for window radius {radius}, got {got}")]
    FrequencyCount {
        radius: usize,
        expected: usize,
        got: usize,
    },
    #[error("window radius must be at least 1")]
    EmptyWindow,
    #[error("invalid sampling range for bound estimation")]
    InvalidSampling,
}

type ComponentFn = Arc<dyn Fn(f64, i64) -> f64 + Send + Sync>;

enum Source {
    Zero,
    Constant(LatticeVector),
    Example { omegas: Vec<f64> },
    Custom { component: ComponentFn, label: String },
}

/// Per-component sup bounds `b_i ≥ sup_t |f_i(t)|`.
#[derive(Clone, Debug)]
enum ComponentBounds {
    /// `b_i = 2^{-|i|}` on all of ℤ.
    Geometric,
    /// Bounds on the window, zero outside.
    Table(Vec<f64>),
}

/// A forcing function together with the constants the estimates need:
/// the sup-norm bound `C` and per-component bounds for the tail index.
#[derive(Clone)]
pub struct ForcingFunction {
    source: Arc<Source>,
    window: usize,
    shift: f64,
    sup_norm_bound: f64,
    bounds: ComponentBounds,
}

impl fmt::Debug for ForcingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForcingFunction")
            .field("kind", &self.kind_name())
            .field("window", &self.window)
            .field("shift", &self.shift)
            .field("sup_norm_bound", &self.sup_norm_bound)
            .finish()
    }
}

/// Default frequencies `ω_i = √(|i| + 1)`.
pub fn default_omegas(window: usize) -> Vec<f64> {
    let n = window as i64;
    (-n..=n).map(|i| ((i.abs() + 1) as f64).sqrt()).collect()
}

impl ForcingFunction {
    pub fn zero(window: usize) -> Self {
        Self {
            source: Arc::new(Source::Zero),
            window,
            shift: 0.0,
            sup_norm_bound: 0.0,
            bounds: ComponentBounds::Table(vec![0.0; 2 * window + 1]),
        }
    }

    /// Time-independent forcing; its window is the vector's window.
    pub fn constant(value: LatticeVector) -> Self {
        let bounds = value.coeffs().iter().map(|c| c.abs()).collect();
        Self {
            window: value.radius(),
            sup_norm_bound: value.norm(),
            source: Arc::new(Source::Constant(value)),
            shift: 0.0,
            bounds: ComponentBounds::Table(bounds),
        }
    }

    /// The quasi-periodic example family with `ω_i` given for `|i| ≤ window`
    /// (ordered from `-window` to `window`).
    pub fn example(window: usize, omegas: Vec<f64>) -> Result<Self, ForcingError> {
        if window == 0 {
            return Err(ForcingError::EmptyWindow);
        }
        if omegas.len() != 2 * window + 1 {
            return Err(ForcingError::FrequencyCount {
                radius: window,
                expected: 2 * window + 1,
                got: omegas.len(),
            });
        }
        Ok(Self {
            source: Arc::new(Source::Example { omegas }),
            window,
            shift: 0.0,
            sup_norm_bound: EXAMPLE_NORM_SQ_BOUND.sqrt(),
            bounds: ComponentBounds::Geometric,
        })
    }

    /// Example family with the default frequencies.
    pub fn example_default(window: usize) -> Self {
        Self::example(window, default_omegas(window)).expect("default frequencies match the window")
    }

    /// Arbitrary forcing given componentwise as `(t, i) ↦ f_i(t)`. The sup
    /// norm and per-component bounds are estimated by sampling
    /// `t ∈ [-horizon, horizon]` with the given step and inflated by
    /// [`SAMPLED_BOUND_INFLATION`]; they are estimates, not guarantees.
    pub fn custom(
        window: usize,
        label: impl Into<String>,
        component: impl Fn(f64, i64) -> f64 + Send + Sync + 'static,
        horizon: f64,
        step: f64,
    ) -> Result<Self, ForcingError> {
        if window == 0 {
            return Err(ForcingError::EmptyWindow);
        }
        if !(horizon > 0.0 && step > 0.0 && horizon.is_finite()) {
            return Err(ForcingError::InvalidSampling);
        }
        let n = window as i64;
        let mut sup = vec![0.0f64; 2 * window + 1];
        let mut norm_sq_max = 0.0f64;
        let steps = (2.0 * horizon / step).ceil() as usize;
        for k in 0..=steps {
            let t = (-horizon + k as f64 * step).min(horizon);
            let mut norm_sq = 0.0;
            for (slot, i) in (-n..=n).enumerate() {
                let v = component(t, i);
                sup[slot] = sup[slot].max(v.abs());
                norm_sq += v * v;
            }
            norm_sq_max = norm_sq_max.max(norm_sq);
        }
        Ok(Self {
            source: Arc::new(Source::Custom {
                component: Arc::new(component),
                label: label.into(),
            }),
            window,
            shift: 0.0,
            sup_norm_bound: norm_sq_max.sqrt() * SAMPLED_BOUND_INFLATION,
            bounds: ComponentBounds::Table(sup.into_iter().map(|b| b * SAMPLED_BOUND_INFLATION).collect()),
        })
    }

    pub fn kind_name(&self) -> &str {
        match &*self.source {
            Source::Zero => "zero",
            Source::Constant(_) => "constant",
            Source::Example { .. } => "example",
            Source::Custom { label, .. } => label,
        }
    }

    /// Identifier of this hull element, e.g. `example@h=1.5`.
    pub fn id(&self) -> String {
        format!("{}@h={}", self.kind_name(), self.shift)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn shift_offset(&self) -> f64 {
        self.shift
    }

    /// `C ≥ sup_t ‖f(t)‖`.
    pub fn sup_norm_bound(&self) -> f64 {
        self.sup_norm_bound
    }

    pub fn is_autonomous(&self) -> bool {
        matches!(&*self.source, Source::Zero | Source::Constant(_))
    }

    /// Frequencies of the example family.
    pub fn omegas(&self) -> Option<&[f64]> {
        match &*self.source {
            Source::Example { omegas } => Some(omegas),
            _ => None,
        }
    }

    /// `f(t + h)` where `h` is the accumulated shift.
    pub fn evaluate(&self, t: f64) -> LatticeVector {
        let mut out = LatticeVector::zeros(self.window);
        self.eval_into(t, out.coeffs_mut());
        out
    }

    /// Writes `f(t + h)` on the window into `out` (length `2N + 1`).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), 2 * self.window + 1);
        let s = t + self.shift;
        let n = self.window as i64;
        match &*self.source {
            Source::Zero => out.fill(0.0),
            Source::Constant(c) => {
                for (o, i) in out.iter_mut().zip(-n..=n) {
                    *o = c.get(i);
                }
            }
            Source::Example { omegas } => {
                let phase = (s * s).ln_1p();
                for ((o, &w), i) in out.iter_mut().zip(omegas).zip(-n..=n) {
                    *o = (w * s + phase).sin() * 0.5f64.powi(i.abs() as i32);
                }
            }
            Source::Custom { component, .. } => {
                for (o, i) in out.iter_mut().zip(-n..=n) {
                    *o = component(s, i);
                }
            }
        }
    }

    /// The translate `f^h`. Bounds are shift-invariant and carried over.
    pub fn shift(&self, h: f64) -> Self {
        Self {
            shift: self.shift + h,
            ..self.clone()
        }
    }

    /// Bound on `sup_t |f_i(t)|`.
    pub fn component_bound(&self, i: i64) -> f64 {
        match &self.bounds {
            ComponentBounds::Geometric => 0.5f64.powi(i.abs() as i32),
            ComponentBounds::Table(b) => {
                let n = self.window as i64;
                if i.abs() > n {
                    0.0
                } else {
                    b[(i + n) as usize]
                }
            }
        }
    }

    /// Upper bound on `sup_t Σ_{|i|≥n} |f_i(t)|²` from the component bounds.
    pub fn tail_energy_bound(&self, n: usize) -> f64 {
        match &self.bounds {
            ComponentBounds::Geometric => {
                if n == 0 {
                    EXAMPLE_NORM_SQ_BOUND
                } else {
                    // 2 · Σ_{j≥n} 4^{-j}
                    2.0 * 0.25f64.powi(n as i32) * (4.0 / 3.0)
                }
            }
            ComponentBounds::Table(_) => {
                let w = self.window as i64;
                (n as i64..=w)
                    .map(|j| match j {
                        0 => self.component_bound(0).powi(2),
                        _ => self.component_bound(-j).powi(2) + self.component_bound(j).powi(2),
                    })
                    .sum()
            }
        }
    }

    /// Smallest `n` with `Σ_{|i|≥n} b_i² < ε²/4`.
    pub fn tail_index(&self, eps: f64) -> Result<usize, ForcingError> {
        if !(eps > 0.0) {
            return Err(ForcingError::NonPositiveEps(eps));
        }
        let target = eps * eps / 4.0;
        let limit = match self.bounds {
            ComponentBounds::Geometric => GEOMETRIC_TAIL_SEARCH,
            ComponentBounds::Table(_) => self.window + 1,
        };
        (0..=limit)
            .find(|&n| self.tail_energy_bound(n) < target)
            .ok_or(ForcingError::TailSearchExhausted { eps, searched: limit })
    }
}

/// Free-function form of [`ForcingFunction::evaluate`].
pub fn evaluate(f: &ForcingFunction, t: f64) -> LatticeVector {
    f.evaluate(t)
}

/// Free-function form of [`ForcingFunction::shift`].
pub fn shift(f: &ForcingFunction, h: f64) -> ForcingFunction {
    f.shift(h)
}

/// Free-function form of [`ForcingFunction::tail_index`].
pub fn tail_index(f: &ForcingFunction, eps: f64) -> Result<usize, ForcingError> {
    f.tail_index(eps)
}

/// Finite sample `{f^h : h ∈ shifts}` of the hull; an empty list yields `[f]`.
pub fn hull_sample(f: &ForcingFunction, shifts: &[f64]) -> Vec<ForcingFunction> {
    if shifts.is_empty() {
        return vec![f.clone()];
    }
    shifts.iter().map(|&h| f.shift(h)).collect()
}

/// Result of [`compact_open_distance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompactOpenDistance {
    pub value: f64,
    /// `1/L_max`: contributions from `L > L_max` are below this.
    pub truncation_bound: f64,
    /// True when `value < 1/L_max`, i.e. the window may hide part of the sup.
    pub truncated: bool,
}

/// `d(f1, f2) = sup_{L>0} min{ max_{|t|≤L} ‖f1(t) − f2(t)‖, 1/L }` for
/// `L ≤ L_max`, with the inner max taken over the time grid `t = k·step`.
///
/// The running max is piecewise constant between consecutive grid radii,
/// so evaluating `min{·, 1/L}` at every grid radius gives the exact sup of
/// the discretized expression.
pub fn compact_open_distance(
    f1: &ForcingFunction,
    f2: &ForcingFunction,
    l_max: f64,
    grid_step: f64,
) -> Result<CompactOpenDistance, ForcingError> {
    if !(l_max > 0.0 && grid_step > 0.0 && l_max.is_finite()) {
        return Err(ForcingError::InvalidMetricArgs { l_max, grid_step });
    }
    if f1.window != f2.window {
        return Err(ForcingError::WindowMismatch(f1.window, f2.window));
    }
    let len = 2 * f1.window + 1;
    let mut a = vec![0.0; len];
    let mut b = vec![0.0; len];
    let mut gap = |t: f64| {
        f1.eval_into(t, &mut a);
        f2.eval_into(t, &mut b);
        a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };

    let mut running = gap(0.0);
    let mut value = running;
    let steps = (l_max / grid_step).floor() as usize;
    for k in 1..=steps {
        let radius = k as f64 * grid_step;
        running = running.max(gap(radius)).max(gap(-radius));
        value = value.max(running.min(1.0 / radius));
    }
    if (steps as f64) * grid_step < l_max {
        running = running.max(gap(l_max)).max(gap(-l_max));
        value = value.max(running.min(1.0 / l_max));
    }
    let truncation_bound = 1.0 / l_max;
    Ok(CompactOpenDistance {
        value,
        truncation_bound,
        truncated: value < truncation_bound,
    })
}

fn sample_grid(f: &ForcingFunction, t_min: f64, t_max: f64, step: f64) -> Vec<(f64, Vec<f64>)> {
    let count = ((t_max - t_min) / step).floor() as usize;
    (0..=count)
        .map(|k| {
            let t = t_min + k as f64 * step;
            let mut v = vec![0.0; 2 * f.window + 1];
            f.eval_into(t, &mut v);
            (t, v)
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sampled modulus of continuity: the max of `‖f(t+s) − f(t)‖` over grid
/// points `t ∈ [t_min, t_max]` and offsets `0 < s ≤ delta`.
pub fn modulus_of_continuity(f: &ForcingFunction, delta: f64, t_min: f64, t_max: f64, step: f64) -> f64 {
    let grid = sample_grid(f, t_min, t_max, step);
    let mut out = vec![0.0; 2 * f.window + 1];
    let mut worst = 0.0f64;
    let max_offset = (delta / step).floor() as usize;
    for (j, (t, v)) in grid.iter().enumerate() {
        for m in 1..=max_offset {
            if let Some((_, w)) = grid.get(j + m) {
                worst = worst.max(dist(v, w));
            }
        }
        f.eval_into(t + delta, &mut out);
        worst = worst.max(dist(v, &out));
    }
    worst
}

/// Largest `δ ∈ {2^{-j}}` for which the sampled modulus of continuity is
/// below `eps`, or `None` if 40 halvings do not suffice.
pub fn continuity_delta(f: &ForcingFunction, eps: f64, t_min: f64, t_max: f64, step: f64) -> Option<f64> {
    let mut delta = 1.0;
    for _ in 0..40 {
        if modulus_of_continuity(f, delta, t_min, t_max, step) < eps {
            return Some(delta);
        }
        delta *= 0.5;
    }
    None
}

/// Sampled checks of the example family's bounds.
#[derive(Clone, Debug)]
pub struct ExampleBoundsReport {
    pub samples: usize,
    pub max_norm_sq: f64,
    /// Computed value of `Σ 4^{-|i|}`.
    pub norm_sq_bound: f64,
    /// The overstated 11/3, reported alongside for comparison.
    pub printed_norm_sq_bound: f64,
    /// `max |f_i(t)| · 2^{|i|}`; must not exceed 1.
    pub max_component_ratio: f64,
    /// `max |f_i'(t)| / (2 + |ω_i|)` by central differences; must not exceed 1.
    pub max_derivative_ratio: f64,
}

impl ExampleBoundsReport {
    pub fn passed(&self) -> bool {
        self.max_norm_sq <= self.norm_sq_bound
            && self.max_component_ratio <= 1.0 + 1e-15
            && self.max_derivative_ratio <= 1.0
    }
}

/// Checks `‖f(t)‖² ≤ 5/3`, `|f_i(t)| ≤ 2^{-|i|}` and `|f_i'(t)| ≤ 2 + |ω_i|`
/// on the grid `t_min, t_min + step, …, t_max`. Returns `None` for forcings
/// outside the example family.
pub fn example_bounds_report(f: &ForcingFunction, t_min: f64, t_max: f64, step: f64) -> Option<ExampleBoundsReport> {
    let omegas = f.omegas()?;
    let n = f.window as i64;
    let h = 1e-6;
    let mut plus = vec![0.0; 2 * f.window + 1];
    let mut minus = vec![0.0; 2 * f.window + 1];
    let mut report = ExampleBoundsReport {
        samples: 0,
        max_norm_sq: 0.0,
        norm_sq_bound: EXAMPLE_NORM_SQ_BOUND,
        printed_norm_sq_bound: EXAMPLE_NORM_SQ_PRINTED,
        max_component_ratio: 0.0,
        max_derivative_ratio: 0.0,
    };
    for (t, v) in sample_grid(f, t_min, t_max, step) {
        report.samples += 1;
        report.max_norm_sq = report.max_norm_sq.max(v.iter().map(|x| x * x).sum());
        f.eval_into(t + h, &mut plus);
        f.eval_into(t - h, &mut minus);
        for (slot, i) in (-n..=n).enumerate() {
            let ratio = v[slot].abs() * 2f64.powi(i.abs() as i32);
            report.max_component_ratio = report.max_component_ratio.max(ratio);
            let derivative = (plus[slot] - minus[slot]) / (2.0 * h);
            let bound = 2.0 + omegas[slot].abs();
            report.max_derivative_ratio = report.max_derivative_ratio.max(derivative.abs() / bound);
        }
    }
    Some(report)
}
