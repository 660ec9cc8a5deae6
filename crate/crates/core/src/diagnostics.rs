//! Quantitative checks of the energy estimates along computed trajectories:
//! the Gronwall envelope, the absorbing ball and its entry time, and the
//! weighted-tail estimates built on a smooth cutoff.
//!
//! With `y(t) = ‖u(t)‖²`, `κ = λ + 2α` and `K = C²/(λκ)`,
//!
//! ```text
//! y' ≤ −κ y + C²/λ   ⇒   y(t) ≤ e^{−κt}(y(0) − K) + K,
//! ```
//!
//! the ball `Q = {‖u‖² ≤ R²}`, `R² = 1 + K`, absorbs the ball of radius `r`
//! after `L = ln(r² − R² + 1)/κ`. For the cutoff-weighted tail
//! `W(t) = Σ ξ_k(|i|) u_i(t)²`,
//!
//! ```text
//! W' + αW ≤ ν·4C₀‖Q‖²/k + (1/α) Σ_{|i|≥k} g_i(t)²,
//! ```
//!
//! which yields `W ≤ 2ε/α` after `T(ε) = ln(α‖Q‖²/ε)/α` once `k` is large
//! enough that the right-hand side is below `ε`.

use rayon::prelude::*;
use thiserror::Error;

use crate::forcing::{ForcingError, ForcingFunction};
use crate::integrator::{integrate_sampled, uniform_times, IntegrateError, IntegratorConfig, Trajectory};
use crate::lattice::{dplus, inner, LatticeVector, ModelParams};

/// `sup |ξ'|` of the smoothstep cutoff, attained at `s = 1.5`.
pub const CUTOFF_C0: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("cutoff scale k must be positive")]
    ZeroScale,
    #[error("cutoff argument must be nonnegative, got {0}")]
    NegativeArgument(f64),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("window radius {window} too small for k = {k}: need N >= 2k = {min_window}")]
    WindowTooSmall { k: usize, window: usize, min_window: usize },
    #[error("tail tolerance eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("no initial states or forcings supplied")]
    EmptyEnsemble,
    #[error("initial state {index} has ‖v‖² = {norm_sq}, outside the ball of radius² {radius_sq}")]
    InitialOutsideBall { index: usize, norm_sq: f64, radius_sq: f64 },
    #[error("no cutoff scale up to {0} satisfies the tail threshold")]
    ScaleSearchExhausted(usize),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Forcing(#[from] ForcingError),
}

/// The cutoff `ξ_k(s) = ξ(s/k)` with the cubic smoothstep
/// `ξ(s) = 3x² − 2x³`, `x = s − 1`, on `[1, 2]`; `ξ = 0` below, `1` above.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CutoffFunction {
    k: usize,
}

impl CutoffFunction {
    pub fn new(k: usize) -> Result<Self, DiagnosticsError> {
        if k == 0 {
            return Err(DiagnosticsError::ZeroScale);
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn c0(&self) -> f64 {
        CUTOFF_C0
    }

    /// Unscaled `ξ(s)`.
    pub fn base(s: f64) -> f64 {
        if s <= 1.0 {
            0.0
        } else if s >= 2.0 {
            1.0
        } else {
            let x = s - 1.0;
            x * x * (3.0 - 2.0 * x)
        }
    }

    /// Unscaled `ξ'(s)`.
    pub fn base_derivative(s: f64) -> f64 {
        if s <= 1.0 || s >= 2.0 {
            0.0
        } else {
            let x = s - 1.0;
            6.0 * x * (1.0 - x)
        }
    }

    /// `ξ_k(s)`.
    pub fn eval(&self, s: f64) -> f64 {
        Self::base(s / self.k as f64)
    }

    /// `ξ_k'(s) = ξ'(s/k)/k`.
    pub fn derivative(&self, s: f64) -> f64 {
        Self::base_derivative(s / self.k as f64) / self.k as f64
    }

    /// `v_i = ξ_k(|i|) u_i`.
    pub fn weight(&self, u: &LatticeVector) -> LatticeVector {
        LatticeVector::from_fn(u.radius(), |i| self.eval(i.abs() as f64) * u.get(i))
    }

    /// `Σ ξ_k(|i|) u_i²`.
    pub fn weighted_tail(&self, u: &LatticeVector) -> f64 {
        u.iter().map(|(i, x)| self.eval(i.abs() as f64) * x * x).sum()
    }

    /// `⟨D⁺u, D⁺v⟩` with `v = ξ_k(|·|) u`.
    pub fn cross_term(&self, u: &LatticeVector) -> f64 {
        inner(&dplus(u), &dplus(&self.weight(u)))
    }
}

pub fn cutoff_eval(xi: &CutoffFunction, s: f64) -> Result<f64, DiagnosticsError> {
    if !(s >= 0.0) {
        return Err(DiagnosticsError::NegativeArgument(s));
    }
    Ok(xi.eval(s))
}

/// `Σ_{|i|≥n} u_i²`.
pub fn raw_tail(u: &LatticeVector, n: usize) -> f64 {
    u.iter().filter(|(i, _)| i.unsigned_abs() as usize >= n).map(|(_, x)| x * x).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyRecord {
    pub times: Vec<f64>,
    /// `‖u(t)‖²`
    pub y: Vec<f64>,
    /// Gronwall bound, empty until [`EnergyRecord::with_envelope`] is called.
    pub envelope: Vec<f64>,
}

impl EnergyRecord {
    pub fn with_envelope(mut self, params: &ModelParams, c: f64) -> Self {
        self.envelope = gronwall_envelope(self.y[0], params, c, &self.times);
        self
    }

    /// `min_t (envelope(t) − y(t))`; negative means the bound was crossed.
    pub fn domination_margin(&self) -> f64 {
        self.y
            .iter()
            .zip(&self.envelope)
            .map(|(y, e)| e - y)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn energy_series(traj: &Trajectory) -> Result<EnergyRecord, DiagnosticsError> {
    if traj.is_empty() {
        return Err(DiagnosticsError::EmptyTrajectory);
    }
    Ok(EnergyRecord {
        times: traj.times.clone(),
        y: traj.states.iter().map(LatticeVector::norm_sq).collect(),
        envelope: Vec::new(),
    })
}

/// `e^{−κt}(y0 − K) + K` with `κ = λ + 2α`, `K = C²/(λκ)`.
pub fn gronwall_envelope(y0: f64, params: &ModelParams, c: f64, times: &[f64]) -> Vec<f64> {
    let kappa = params.decay_rate();
    let limit = c * c / (params.lambda() * kappa);
    times
        .iter()
        .map(|&t| (-kappa * t).exp() * (y0 - limit) + limit)
        .collect()
}

/// `R² = 1 + C²/(λ(λ + 2α))`.
pub fn absorbing_radius_sq(params: &ModelParams, c: f64) -> f64 {
    1.0 + c * c / (params.lambda() * params.decay_rate())
}

/// Entry time into the absorbing ball from the ball of radius `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntryTime {
    /// `ln(r² − R² + 1)/(λ + 2α)`, where the envelope reaches `R²`.
    pub derived: f64,
    /// `ln(r² − R² + 1)/(λ(λ + 2α))`; equals `derived` iff `λ = 1`.
    pub product_prefactor: f64,
}

pub fn entry_time(r: f64, params: &ModelParams, c: f64) -> EntryTime {
    let r_sq = absorbing_radius_sq(params, c);
    if r * r <= r_sq {
        return EntryTime {
            derived: 0.0,
            product_prefactor: 0.0,
        };
    }
    let log = (r * r - r_sq + 1.0).ln();
    EntryTime {
        derived: log / params.decay_rate(),
        product_prefactor: log / (params.lambda() * params.decay_rate()),
    }
}

/// One `(v0, g)` run of [`absorbing_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct AbsorbRun {
    pub forcing_id: String,
    pub initial_norm_sq: f64,
    /// First sample time with `‖φ‖² ≤ R²`, `None` if never reached.
    pub entry_time: Option<f64>,
    /// `max ‖φ(t)‖²` over samples after entry.
    pub max_after_entry: f64,
    pub held: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbsorbingReport {
    pub r_squared: f64,
    pub sup_norm_bound: f64,
    /// Radius of the smallest ball around 0 containing all initial states.
    pub initial_radius: f64,
    pub entry_time_pred: EntryTime,
    /// Latest observed entry time over all runs (infinite if any run never entered).
    pub entry_time_obs: f64,
    pub held_after_entry: bool,
    pub sample_dt: f64,
    pub tolerance: f64,
    pub runs: Vec<AbsorbRun>,
}

impl AbsorbingReport {
    /// Every run entered by the predicted time plus one sample step.
    pub fn entered_in_time(&self) -> bool {
        self.entry_time_obs <= self.entry_time_pred.derived + self.sample_dt
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbsorbOptions {
    pub sample_dt: f64,
    /// Integration continues this long past the predicted entry time.
    pub extra_time: f64,
    pub tolerance: f64,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        Self {
            sample_dt: 0.01,
            extra_time: 10.0,
            tolerance: 1e-6,
        }
    }
}

fn cartesian<'a, A: Sync, B: Sync>(a: &'a [A], b: &'a [B]) -> Vec<(usize, &'a A, usize, &'a B)> {
    a.iter()
        .enumerate()
        .flat_map(|(i, x)| b.iter().enumerate().map(move |(j, y)| (i, x, j, y)))
        .collect()
}

/// Integrates every `(v0, g)` pair and records when `‖φ(t)‖² ≤ R²` first
/// holds and whether it keeps holding (within tolerance) afterwards.
pub fn absorbing_check(
    params: &ModelParams,
    g_set: &[ForcingFunction],
    v0_set: &[LatticeVector],
    cfg: &IntegratorConfig,
    opts: &AbsorbOptions,
) -> Result<AbsorbingReport, DiagnosticsError> {
    if g_set.is_empty() || v0_set.is_empty() {
        return Err(DiagnosticsError::EmptyEnsemble);
    }
    let c = g_set.iter().map(ForcingFunction::sup_norm_bound).fold(0.0, f64::max);
    let r_sq = absorbing_radius_sq(params, c);
    let initial_radius = v0_set.iter().map(LatticeVector::norm).fold(0.0, f64::max);
    let pred = entry_time(initial_radius, params, c);
    let horizon = pred.derived + opts.extra_time;
    let times = uniform_times(horizon, opts.sample_dt);

    let runs = cartesian(v0_set, g_set)
        .into_par_iter()
        .map(|(_, v0, _, g)| -> Result<AbsorbRun, DiagnosticsError> {
            let traj = integrate_sampled(params, g, v0, &times, cfg)?;
            let energy = energy_series(&traj)?;
            let entry = energy.y.iter().position(|&y| y <= r_sq);
            let max_after = entry
                .map(|j| energy.y[j..].iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .unwrap_or(f64::INFINITY);
            Ok(AbsorbRun {
                forcing_id: traj.forcing_id.clone(),
                initial_norm_sq: energy.y[0],
                entry_time: entry.map(|j| energy.times[j]),
                max_after_entry: max_after,
                held: entry.is_some() && max_after <= r_sq + opts.tolerance,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let entry_time_obs = runs
        .iter()
        .map(|r| r.entry_time.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    Ok(AbsorbingReport {
        r_squared: r_sq,
        sup_norm_bound: c,
        initial_radius,
        entry_time_pred: pred,
        entry_time_obs,
        held_after_entry: runs.iter().all(|r| r.held),
        sample_dt: opts.sample_dt,
        tolerance: opts.tolerance,
        runs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailRecord {
    pub k: usize,
    pub times: Vec<f64>,
    /// `Σ ξ_k(|i|) u_i²`
    pub weighted_tail: Vec<f64>,
    /// `Σ_{|i|≥2k} u_i²`
    pub raw_tail: Vec<f64>,
}

pub fn tail_series(traj: &Trajectory, k: usize) -> Result<TailRecord, DiagnosticsError> {
    let xi = CutoffFunction::new(k)?;
    if traj.is_empty() {
        return Err(DiagnosticsError::EmptyTrajectory);
    }
    Ok(TailRecord {
        k,
        times: traj.times.clone(),
        weighted_tail: traj.states.iter().map(|u| xi.weighted_tail(u)).collect(),
        raw_tail: traj.states.iter().map(|u| raw_tail(u, 2 * k)).collect(),
    })
}

/// `T(ε) = ln(α‖Q‖²/ε)/α`; nonpositive when `ε ≥ α‖Q‖²`.
pub fn tail_decay_time(params: &ModelParams, q_radius_sq: f64, eps: f64) -> f64 {
    let alpha = params.alpha();
    (alpha * q_radius_sq / eps).ln() / alpha
}

/// Right-hand side of the weighted-tail inequality without the forcing
/// term: `cross_constant · ν · C₀ · ‖Q‖² / k`.
pub fn cross_term_budget(params: &ModelParams, q_radius_sq: f64, k: usize, cross_constant: f64) -> f64 {
    cross_constant * params.nu() * CUTOFF_C0 * q_radius_sq / k as f64
}

/// Smallest `k ≥ 1` with
/// `cross_constant·νC₀‖Q‖²/k + (1/α)·Σ_{|i|≥k} b_i² ≤ ε`,
/// where `b_i` are the forcing's component bounds.
pub fn select_cutoff_scale(
    params: &ModelParams,
    g: &ForcingFunction,
    q_radius_sq: f64,
    eps: f64,
    cross_constant: f64,
) -> Result<usize, DiagnosticsError> {
    if !(eps > 0.0) {
        return Err(DiagnosticsError::NonPositiveEps(eps));
    }
    const LIMIT: usize = 1 << 40;
    let lhs = |k: usize| {
        cross_term_budget(params, q_radius_sq, k, cross_constant) + g.tail_energy_bound(k) / params.alpha()
    };
    // both terms are nonincreasing in k
    let mut hi = 1usize;
    while lhs(hi) > eps {
        if hi >= LIMIT {
            return Err(DiagnosticsError::ScaleSearchExhausted(LIMIT));
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    if lo == 0 {
        return Ok(1);
    }
    // invariant: lhs(lo) > eps >= lhs(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if lhs(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailOptions {
    /// Constant in front of `νC₀‖Q‖²/k`.
    pub cross_constant: f64,
    pub sample_dt: f64,
    /// Integration continues this long past `max(T(ε), 0)`.
    pub extra_time: f64,
    pub tolerance: f64,
    /// Fixed cutoff scale; `None` selects the smallest admissible `k(ε)`.
    pub k: Option<usize>,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self {
            cross_constant: 4.0,
            sample_dt: 0.05,
            extra_time: 1.0,
            tolerance: 1e-4,
            k: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailDecayReport {
    pub eps: f64,
    pub k: usize,
    /// `n(ε)` of the forcing, for reference.
    pub forcing_tail_index: usize,
    pub decay_time: f64,
    /// `2ε/α`
    pub bound: f64,
    pub max_weighted_after: f64,
    /// `bound + tolerance − max_weighted_after`
    pub margin: f64,
    pub passed: bool,
    pub records: Vec<TailRecord>,
}

/// Picks `k(ε)`, integrates every `(v0, g)` pair past `T(ε)` and checks
/// `Σ ξ_k(|i|) u_i² ≤ 2ε/α` at every sample `t ≥ T(ε)`.
#[allow(clippy::too_many_arguments)]
pub fn tail_decay_check(
    params: &ModelParams,
    g_set: &[ForcingFunction],
    q_radius_sq: f64,
    eps: f64,
    initial: &[LatticeVector],
    cfg: &IntegratorConfig,
    opts: &TailOptions,
) -> Result<TailDecayReport, DiagnosticsError> {
    if g_set.is_empty() || initial.is_empty() {
        return Err(DiagnosticsError::EmptyEnsemble);
    }
    let k = match opts.k {
        Some(0) => return Err(DiagnosticsError::ZeroScale),
        Some(k) => k,
        None => select_cutoff_scale(params, &g_set[0], q_radius_sq, eps, opts.cross_constant)?,
    };
    let window = initial[0].radius();
    if 2 * k > window {
        return Err(DiagnosticsError::WindowTooSmall {
            k,
            window,
            min_window: 2 * k,
        });
    }
    for (index, v) in initial.iter().enumerate() {
        if v.norm_sq() > q_radius_sq * (1.0 + 1e-12) {
            return Err(DiagnosticsError::InitialOutsideBall {
                index,
                norm_sq: v.norm_sq(),
                radius_sq: q_radius_sq,
            });
        }
    }
    let forcing_tail_index = g_set[0].tail_index(eps)?;
    let decay_time = tail_decay_time(params, q_radius_sq, eps);
    let start = decay_time.max(0.0);
    let mut times = uniform_times(start + opts.extra_time, opts.sample_dt);
    if start > 0.0 && !times.contains(&start) {
        times.push(start);
        times.sort_by(f64::total_cmp);
    }

    let records = cartesian(initial, g_set)
        .into_par_iter()
        .map(|(_, v0, _, g)| -> Result<TailRecord, DiagnosticsError> {
            let traj = integrate_sampled(params, g, v0, &times, cfg)?;
            tail_series(&traj, k)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let max_weighted_after = records
        .iter()
        .flat_map(|r| r.times.iter().zip(&r.weighted_tail).filter(|(t, _)| **t >= start).map(|(_, w)| *w))
        .fold(0.0, f64::max);
    let bound = 2.0 * eps / params.alpha();
    let margin = bound + opts.tolerance - max_weighted_after;
    Ok(TailDecayReport {
        eps,
        k,
        forcing_tail_index,
        decay_time,
        bound,
        max_weighted_after,
        margin,
        passed: margin >= 0.0,
        records,
    })
}

/// One sample of the weighted-tail differential inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalitySample {
    pub t: f64,
    /// `ΔW/Δt + αW`
    pub lhs: f64,
    /// budget + forcing tail + slack
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailInequalityReport {
    pub k: usize,
    pub samples: usize,
    pub satisfied: usize,
    /// Largest `‖u‖²` met along the trajectories (should stay `≤ ‖Q‖²`).
    pub max_norm_sq: f64,
    pub violations: Vec<InequalitySample>,
    /// Smallest `rhs − lhs` over all samples.
    pub worst_margin: f64,
}

impl TailInequalityReport {
    pub fn fraction(&self) -> f64 {
        self.satisfied as f64 / self.samples.max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityOptions {
    pub cross_constant: f64,
    /// Sample spacing, also the finite-difference step.
    pub sample_dt: f64,
    pub horizon: f64,
    pub slack: f64,
}

impl Default for InequalityOptions {
    fn default() -> Self {
        Self {
            cross_constant: 4.0,
            sample_dt: 0.01,
            horizon: 5.0,
            slack: 1e-3,
        }
    }
}

/// Forward-difference check of `W' + αW ≤ budget + (1/α)Σ_{|i|≥k} g_i(t)²`
/// along trajectories started in `Q`.
pub fn tail_inequality_check(
    params: &ModelParams,
    g_set: &[ForcingFunction],
    initial: &[LatticeVector],
    k: usize,
    q_radius_sq: f64,
    cfg: &IntegratorConfig,
    opts: &InequalityOptions,
) -> Result<TailInequalityReport, DiagnosticsError> {
    if g_set.is_empty() || initial.is_empty() {
        return Err(DiagnosticsError::EmptyEnsemble);
    }
    let xi = CutoffFunction::new(k)?;
    let window = initial[0].radius();
    if 2 * k > window {
        return Err(DiagnosticsError::WindowTooSmall {
            k,
            window,
            min_window: 2 * k,
        });
    }
    let times = uniform_times(opts.horizon, opts.sample_dt);
    let budget = cross_term_budget(params, q_radius_sq, k, opts.cross_constant);
    let alpha = params.alpha();

    let per_run = cartesian(initial, g_set)
        .into_par_iter()
        .map(|(_, v0, _, g)| -> Result<(Vec<InequalitySample>, f64), DiagnosticsError> {
            let traj = integrate_sampled(params, g, v0, &times, cfg)?;
            let w: Vec<f64> = traj.states.iter().map(|u| xi.weighted_tail(u)).collect();
            let max_norm_sq = traj.states.iter().map(LatticeVector::norm_sq).fold(0.0, f64::max);
            let samples = (0..w.len() - 1)
                .map(|j| {
                    let (t0, t1) = (traj.times[j], traj.times[j + 1]);
                    let lhs = (w[j + 1] - w[j]) / (t1 - t0) + alpha * w[j];
                    let forcing_tail = raw_tail(&g.evaluate(t0), k) / alpha;
                    InequalitySample {
                        t: t0,
                        lhs,
                        rhs: budget + forcing_tail + opts.slack,
                    }
                })
                .collect();
            Ok((samples, max_norm_sq))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut report = TailInequalityReport {
        k,
        samples: 0,
        satisfied: 0,
        max_norm_sq: 0.0,
        violations: Vec::new(),
        worst_margin: f64::INFINITY,
    };
    for (samples, max_norm_sq) in per_run {
        report.max_norm_sq = report.max_norm_sq.max(max_norm_sq);
        for s in samples {
            report.samples += 1;
            report.worst_margin = report.worst_margin.min(s.rhs - s.lhs);
            if s.lhs <= s.rhs {
                report.satisfied += 1;
            } else {
                report.violations.push(s);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::integrate;
    use crate::lattice::NonlinearitySpec;

    fn params(nu: f64, lambda: f64, alpha: f64) -> ModelParams {
        let spec = if alpha == 1.0 {
            NonlinearitySpec::cubic()
        } else {
            NonlinearitySpec::linear(alpha).unwrap()
        };
        ModelParams::new(nu, lambda, spec).unwrap()
    }

    #[test]
    fn cutoff_shape() {
        let xi = CutoffFunction::new(1).unwrap();
        assert_eq!(xi.eval(1.0), 0.0);
        assert_eq!(xi.eval(2.0), 1.0);
        assert_eq!(xi.eval(1.5), 0.5);
        assert_eq!(xi.eval(0.3), 0.0);
        assert_eq!(xi.eval(7.0), 1.0);
        assert_eq!(CutoffFunction::base_derivative(1.5), CUTOFF_C0);
        assert!(CutoffFunction::new(0).is_err());
        assert!(cutoff_eval(&xi, -0.1).is_err());
    }

    #[test]
    fn scaled_cutoff_derivative_bound() {
        for k in [1usize, 3, 8, 20] {
            let xi = CutoffFunction::new(k).unwrap();
            let mut max_d = 0.0f64;
            let mut prev = 0.0;
            for j in 0..=20_000 {
                let s = 3.0 * k as f64 * j as f64 / 20_000.0;
                let v = xi.eval(s);
                assert!(v >= prev, "monotone");
                prev = v;
                max_d = max_d.max(xi.derivative(s).abs());
                if s <= k as f64 {
                    assert_eq!(v, 0.0);
                }
                if s >= 2.0 * k as f64 {
                    assert_eq!(v, 1.0);
                }
            }
            assert!(max_d <= CUTOFF_C0 / k as f64 + 1e-15);
            assert!(max_d >= 0.999 * CUTOFF_C0 / k as f64);
        }
    }

    #[test]
    fn envelope_endpoints() {
        let p = params(1.0, 1.0, 1.0);
        let env = gronwall_envelope(4.0, &p, 1.0, &[0.0, 1e3]);
        assert_eq!(env[0], 4.0);
        assert!((env[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absorbing_radius_values() {
        assert!((absorbing_radius_sq(&params(1.0, 1.0, 1.0), 1.0) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(absorbing_radius_sq(&params(1.0, 1.0, 1.0), 0.0), 1.0);
        assert!((absorbing_radius_sq(&params(1.0, 2.0, 0.5), 2.0) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn entry_time_values() {
        let p = params(1.0, 1.0, 1.0);
        let e = entry_time(2.0, &p, 1.0);
        assert!((e.derived - (11.0f64 / 3.0).ln() / 3.0).abs() < 1e-15);
        assert_eq!(e.derived, e.product_prefactor);
        assert!((e.derived - 0.433).abs() < 1e-3);
        let r = absorbing_radius_sq(&p, 1.0).sqrt();
        assert_eq!(entry_time(r, &p, 1.0).derived, 0.0);
    }

    #[test]
    fn entry_time_matches_envelope_crossing() {
        let p = params(1.0, 2.0, 1.0);
        let c = 1.3;
        let r = 3.0;
        let r_sq = absorbing_radius_sq(&p, c);
        let env = |t: f64| gronwall_envelope(r * r, &p, c, &[t])[0];
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if env(mid) > r_sq {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let e = entry_time(r, &p, c);
        assert!((e.derived - hi).abs() < 1e-12);
        assert!((e.product_prefactor - 0.5 * e.derived).abs() < 1e-15);
    }

    #[test]
    fn energy_of_unforced_cubic_decays() {
        let p = params(1.0, 1.0, 1.0);
        let tr = integrate(&p, &ForcingFunction::zero(5), &LatticeVector::unit(5, 0), 3.0, &IntegratorConfig::default())
            .unwrap();
        let rec = energy_series(&tr).unwrap();
        assert_eq!(rec.y[0], 1.0);
        assert!(rec.y.windows(2).all(|w| w[1] < w[0]));
        let zero = integrate(&p, &ForcingFunction::zero(5), &LatticeVector::zeros(5), 1.0, &IntegratorConfig::default())
            .unwrap();
        assert!(energy_series(&zero).unwrap().y.iter().all(|&y| y == 0.0));
    }

    #[test]
    fn absorbing_check_from_origin_enters_immediately() {
        let p = params(1.0, 1.0, 1.0);
        let g = ForcingFunction::example_default(6);
        let opts = AbsorbOptions {
            extra_time: 2.0,
            ..AbsorbOptions::default()
        };
        let rep = absorbing_check(&p, &[g], &[LatticeVector::zeros(6)], &IntegratorConfig::default(), &opts).unwrap();
        assert_eq!(rep.entry_time_obs, 0.0);
        assert!(rep.held_after_entry);
    }

    #[test]
    fn unforced_trajectories_decay_exponentially() {
        let p = params(1.0, 1.0, 1.0);
        let g = ForcingFunction::zero(6);
        let v0 = crate::sampling::sphere_points(6, 4, 3.0, 3);
        let opts = AbsorbOptions {
            extra_time: 3.0,
            sample_dt: 0.05,
            ..AbsorbOptions::default()
        };
        let rep = absorbing_check(&p, &[g.clone()], &v0, &IntegratorConfig::default(), &opts).unwrap();
        assert_eq!(rep.r_squared, 1.0);
        assert!(rep.held_after_entry && rep.entered_in_time());
        for v in &v0 {
            let tr = integrate_sampled(&p, &g, v, &uniform_times(2.0, 0.1), &IntegratorConfig::default()).unwrap();
            for (t, u) in tr.iter() {
                assert!(u.norm_sq() <= (-3.0 * t).exp() * 9.0 + 1e-9);
            }
        }
    }

    #[test]
    fn tail_series_examples() {
        let k = 3;
        let inner_support = LatticeVector::from_fn(10, |i| if i.abs() <= 3 { 1.0 } else { 0.0 });
        let spike = LatticeVector::unit(10, 6);
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![inner_support, spike],
            forcing_id: "test".into(),
        };
        let rec = tail_series(&traj, k).unwrap();
        assert_eq!(rec.weighted_tail, vec![0.0, 1.0]);
        assert_eq!(rec.raw_tail, vec![0.0, 1.0]);
        assert!(tail_series(&traj, 0).is_err());
    }

    #[test]
    fn decay_time_values() {
        let p = params(1.0, 1.0, 1.0);
        assert!((tail_decay_time(&p, 4.0 / 3.0, 0.1) - (40.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!(tail_decay_time(&p, 4.0 / 3.0, 2.0) <= 0.0);
    }

    #[test]
    fn cutoff_scale_selection_is_minimal() {
        let p = params(1.0, 1.0, 1.0);
        let g = ForcingFunction::example_default(8);
        let q = 14.0 / 9.0;
        for eps in [0.05, 0.5, 2.0] {
            let k = select_cutoff_scale(&p, &g, q, eps, 4.0).unwrap();
            let lhs = |k: usize| cross_term_budget(&p, q, k, 4.0) + g.tail_energy_bound(k);
            assert!(lhs(k) <= eps);
            assert!(k == 1 || lhs(k - 1) > eps);
        }
        // 4·1.5·(14/9)/k ≤ 0.05 forces k ≥ 187
        assert_eq!(select_cutoff_scale(&p, &g, q, 0.05, 4.0).unwrap(), 187);
    }

    #[test]
    fn tail_check_rejects_small_window() {
        let p = params(1.0, 1.0, 1.0);
        let g = ForcingFunction::example_default(16);
        let v0 = vec![LatticeVector::zeros(16)];
        let err = tail_decay_check(&p, &[g], 14.0 / 9.0, 0.05, &v0, &IntegratorConfig::default(), &TailOptions::default());
        assert!(matches!(err, Err(DiagnosticsError::WindowTooSmall { k: 187, min_window: 374, .. })));
    }

    #[test]
    fn tail_check_passes_with_large_eps() {
        // ε ≥ α‖Q‖² makes T(ε) ≤ 0: the bound must hold from t = 0
        let p = params(0.1, 1.0, 1.0);
        let g = ForcingFunction::example_default(24);
        let q = absorbing_radius_sq(&p, g.sup_norm_bound());
        let v0 = crate::sampling::ball_points(24, 3, q.sqrt(), 5);
        let rep = tail_decay_check(&p, &[g], q, 2.0, &v0, &IntegratorConfig::default(), &TailOptions::default()).unwrap();
        assert!(rep.decay_time <= 0.0);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn cross_term_lower_bound() {
        let q: f64 = 14.0 / 9.0;
        for k in [2usize, 5, 9] {
            let xi = CutoffFunction::new(k).unwrap();
            for p in crate::sampling::ball_points(20, 50, q.sqrt(), k as u64) {
                assert!(xi.cross_term(&p) >= -4.0 * CUTOFF_C0 * q / k as f64);
            }
        }
    }
}
