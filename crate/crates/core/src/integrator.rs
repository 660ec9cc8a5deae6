//! Time integration of `u' = νΛu − λu + F̃(u) + g(t)` on a truncated window,
//! i.e. the cocycle `φ(t, v, g)`.
//!
//! Two explicit methods are provided: classical fixed-step RK4 and the
//! Dormand–Prince 5(4) pair with local error control. Forcing is evaluated
//! at the exact stage times. Output times are hit exactly by clipping the
//! step, never by interpolation.

use thiserror::Error;

use crate::forcing::ForcingFunction;
use crate::lattice::{vector_field_into, LatticeVector, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("integration horizon must be a finite nonnegative time, got {0}")]
    InvalidHorizon(f64),
    #[error("sample times must be finite, nonnegative and strictly increasing")]
    InvalidSampleTimes,
    #[error("state window radius {state} differs from forcing window radius {forcing}")]
    WindowMismatch { state: usize, forcing: usize },
    #[error("initial state is not finite")]
    NonFiniteInitial,
    #[error("step size underflow at t = {t} (step {step:e}); tolerances cannot be met")]
    StepUnderflow { t: f64, step: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget of {steps} exhausted at t = {t}")]
    TooManySteps { t: f64, steps: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with fixed step `dt`.
    Rk4,
    /// Dormand–Prince embedded 5(4) pair; `dt` is the initial step.
    Dopri45,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Dopri45,
            dt: 1e-2,
            rel_tol: 1e-8,
            abs_tol: 1e-8,
            max_step: 0.5,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        Self {
            method: Method::Rk4,
            dt,
            max_step: dt,
            ..Self::default()
        }
    }

    pub fn adaptive(tol: f64) -> Self {
        Self {
            rel_tol: tol,
            abs_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |msg: &str| Err(IntegrateError::InvalidConfig(msg.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.max_step >= self.dt) {
            return bad("max_step must be at least dt");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}

/// Samples of `φ(·, v, g)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<LatticeVector>,
    /// Which hull element drove the trajectory.
    pub forcing_id: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &LatticeVector {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least the initial time")
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &LatticeVector)> {
        self.times.iter().copied().zip(&self.states)
    }
}

/// `dt, 2dt, …` up to and including `t_final` (the last gap may be shorter).
pub fn uniform_times(t_final: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 1usize;
    loop {
        let t = k as f64 * dt;
        if t >= t_final - 1e-12 * t_final.max(1.0) {
            out.push(t_final);
            break;
        }
        out.push(t);
        k += 1;
    }
    out
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
// difference between the 5th- and 4th-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper<'a> {
    params: &'a ModelParams,
    forcing: &'a ForcingFunction,
    cfg: &'a IntegratorConfig,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    force: Vec<f64>,
    h: f64,
    fsal_valid: bool,
    steps: usize,
}

impl<'a> Stepper<'a> {
    fn new(params: &'a ModelParams, forcing: &'a ForcingFunction, cfg: &'a IntegratorConfig, len: usize) -> Self {
        Self {
            params,
            forcing,
            cfg,
            k: std::array::from_fn(|_| vec![0.0; len]),
            stage: vec![0.0; len],
            y_new: vec![0.0; len],
            force: vec![0.0; len],
            h: cfg.dt.min(cfg.max_step),
            fsal_valid: false,
            steps: 0,
        }
    }

    fn rhs(&mut self, t: f64, y_is_stage: bool, y: &[f64], slot: usize) {
        self.forcing.eval_into(t, &mut self.force);
        let u = if y_is_stage { &self.stage } else { y };
        vector_field_into(self.params, &self.force, u, &mut self.k[slot]);
    }

    fn fill_stage(&mut self, y: &[f64], h: f64, coeffs: &[f64]) {
        for (j, s) in self.stage.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (m, &a) in coeffs.iter().enumerate() {
                acc += a * self.k[m][j];
            }
            *s = y[j] + h * acc;
        }
    }

    fn count_step(&mut self, t: f64) -> Result<(), IntegrateError> {
        self.steps += 1;
        if self.steps > self.cfg.max_steps {
            return Err(IntegrateError::TooManySteps {
                t,
                steps: self.cfg.max_steps,
            });
        }
        Ok(())
    }

    fn rk4_step(&mut self, t: f64, y: &mut [f64], h: f64) -> Result<(), IntegrateError> {
        self.rhs(t, false, y, 0);
        for (s, (yj, k)) in self.stage.iter_mut().zip(y.iter().zip(&self.k[0])) {
            *s = yj + 0.5 * h * k;
        }
        self.rhs(t + 0.5 * h, true, y, 1);
        for (s, (yj, k)) in self.stage.iter_mut().zip(y.iter().zip(&self.k[1])) {
            *s = yj + 0.5 * h * k;
        }
        self.rhs(t + 0.5 * h, true, y, 2);
        for (s, (yj, k)) in self.stage.iter_mut().zip(y.iter().zip(&self.k[2])) {
            *s = yj + h * k;
        }
        self.rhs(t + h, true, y, 3);
        for (j, yj) in y.iter_mut().enumerate() {
            *yj += h / 6.0 * (self.k[0][j] + 2.0 * self.k[1][j] + 2.0 * self.k[2][j] + self.k[3][j]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonFinite { t: t + h });
        }
        Ok(())
    }

    /// One attempted DP5(4) step; returns the scaled error norm.
    fn dopri_attempt(&mut self, t: f64, y: &[f64], h: f64) -> f64 {
        if !self.fsal_valid {
            self.rhs(t, false, y, 0);
            self.fsal_valid = true;
        }
        self.fill_stage(y, h, &A2);
        self.rhs(t + C[1] * h, true, y, 1);
        self.fill_stage(y, h, &A3);
        self.rhs(t + C[2] * h, true, y, 2);
        self.fill_stage(y, h, &A4);
        self.rhs(t + C[3] * h, true, y, 3);
        self.fill_stage(y, h, &A5);
        self.rhs(t + C[4] * h, true, y, 4);
        self.fill_stage(y, h, &A6);
        self.rhs(t + C[5] * h, true, y, 5);
        // stage now holds the 5th-order solution; k[6] = f(t + h, y_new)
        self.fill_stage(y, h, &B5);
        self.rhs(t + h, true, y, 6);
        self.y_new.copy_from_slice(&self.stage);

        let mut acc = 0.0;
        for j in 0..y.len() {
            let mut err = 0.0;
            for (m, &e) in E.iter().enumerate() {
                err += e * self.k[m][j];
            }
            let scale = self.cfg.abs_tol + self.cfg.rel_tol * y[j].abs().max(self.y_new[j].abs());
            let r = h * err / scale;
            acc += r * r;
        }
        (acc / y.len() as f64).sqrt()
    }

    /// Advances `y` from `t` to exactly `target`, calling `on_step` after each
    /// accepted step when `record_steps` is set.
    fn advance(
        &mut self,
        t: &mut f64,
        y: &mut [f64],
        target: f64,
        mut on_step: Option<&mut dyn FnMut(f64, &[f64])>,
    ) -> Result<(), IntegrateError> {
        let tiny = 1e-12 * target.abs().max(1.0);
        while *t < target {
            let remaining = target - *t;
            let (mut h, mut last) = (self.h.min(self.cfg.max_step), false);
            if h >= remaining - tiny {
                h = remaining;
                last = true;
            }
            match self.cfg.method {
                Method::Rk4 => {
                    self.count_step(*t)?;
                    self.rk4_step(*t, y, h)?;
                    *t = if last { target } else { *t + h };
                }
                Method::Dopri45 => {
                    let underflow = 16.0 * f64::EPSILON * t.abs().max(1.0);
                    let mut blew_up = false;
                    loop {
                        if h < underflow {
                            return Err(if blew_up {
                                IntegrateError::NonFinite { t: *t }
                            } else {
                                IntegrateError::StepUnderflow { t: *t, step: h }
                            });
                        }
                        self.count_step(*t)?;
                        let err = self.dopri_attempt(*t, y, h);
                        if err.is_finite() && err <= 1.0 {
                            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                            y.copy_from_slice(&self.y_new);
                            self.k.swap(0, 6);
                            // keep the controller's proposal even when this step was clipped
                            if !last || h * factor > self.h {
                                self.h = h * factor;
                            }
                            *t = if last { target } else { *t + h };
                            break;
                        }
                        blew_up = !err.is_finite();
                        let factor = if blew_up { 0.2 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) };
                        h *= factor;
                        self.h = h;
                        last = false;
                    }
                    if y.iter().any(|v| !v.is_finite()) {
                        return Err(IntegrateError::NonFinite { t: *t });
                    }
                }
            }
            if let Some(cb) = on_step.as_deref_mut() {
                cb(*t, y);
            }
        }
        Ok(())
    }
}

fn check_inputs(
    g: &ForcingFunction,
    v0: &LatticeVector,
    cfg: &IntegratorConfig,
) -> Result<(), IntegrateError> {
    cfg.validate()?;
    if g.window() != v0.radius() {
        return Err(IntegrateError::WindowMismatch {
            state: v0.radius(),
            forcing: g.window(),
        });
    }
    if !v0.is_finite() {
        return Err(IntegrateError::NonFiniteInitial);
    }
    Ok(())
}

/// Integrates over `[0, t_final]`, recording every accepted step. The last
/// step is clipped so the final time equals `t_final` exactly.
pub fn integrate(
    params: &ModelParams,
    g: &ForcingFunction,
    v0: &LatticeVector,
    t_final: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(IntegrateError::InvalidHorizon(t_final));
    }
    check_inputs(g, v0, cfg)?;
    let radius = v0.radius();
    let mut y = v0.coeffs().to_vec();
    let mut times = vec![0.0];
    let mut states = vec![v0.clone()];
    let mut stepper = Stepper::new(params, g, cfg, y.len());
    let mut t = 0.0;
    let mut record = |time: f64, state: &[f64]| {
        times.push(time);
        states.push(LatticeVector::from_raw(radius, state.to_vec()));
    };
    stepper.advance(&mut t, &mut y, t_final, Some(&mut record))?;
    Ok(Trajectory {
        times,
        states,
        forcing_id: g.id(),
    })
}

/// Integrates through the given output times (strictly increasing, `≥ 0`)
/// and records the state exactly at each of them. The trajectory always
/// starts with `(0, v0)`.
pub fn integrate_sampled(
    params: &ModelParams,
    g: &ForcingFunction,
    v0: &LatticeVector,
    sample_times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    check_inputs(g, v0, cfg)?;
    let valid = sample_times.iter().all(|t| t.is_finite() && *t >= 0.0)
        && sample_times.windows(2).all(|w| w[0] < w[1]);
    if !valid {
        return Err(IntegrateError::InvalidSampleTimes);
    }
    let radius = v0.radius();
    let mut y = v0.coeffs().to_vec();
    let mut times = vec![0.0];
    let mut states = vec![v0.clone()];
    let mut stepper = Stepper::new(params, g, cfg, y.len());
    let mut t = 0.0;
    for &target in sample_times.iter().filter(|&&s| s > 0.0) {
        stepper.advance(&mut t, &mut y, target, None)?;
        times.push(target);
        states.push(LatticeVector::from_raw(radius, y.clone()));
    }
    Ok(Trajectory {
        times,
        states,
        forcing_id: g.id(),
    })
}

/// `φ(t, v0, g)`. Returns `v0` itself at `t = 0`.
pub fn cocycle_eval(
    params: &ModelParams,
    g: &ForcingFunction,
    v0: &LatticeVector,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<LatticeVector, IntegrateError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(IntegrateError::InvalidHorizon(t));
    }
    check_inputs(g, v0, cfg)?;
    if t == 0.0 {
        return Ok(v0.clone());
    }
    let mut y = v0.coeffs().to_vec();
    let mut stepper = Stepper::new(params, g, cfg, y.len());
    let mut time = 0.0;
    stepper.advance(&mut time, &mut y, t, None)?;
    Ok(LatticeVector::from_raw(v0.radius(), y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::NonlinearitySpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cubic() -> ModelParams {
        ModelParams::new(1.0, 1.0, NonlinearitySpec::cubic()).unwrap()
    }

    fn linear() -> ModelParams {
        ModelParams::new(1.0, 1.0, NonlinearitySpec::linear(1.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_state_stays_zero_without_forcing() {
        let tr = integrate(&cubic(), &ForcingFunction::zero(6), &LatticeVector::zeros(6), 3.0, &IntegratorConfig::default())
            .unwrap();
        assert!(tr.states.iter().all(|s| s.norm_sq() == 0.0));
        assert_eq!(tr.final_time(), 3.0);
    }

    #[test]
    fn final_time_is_hit_exactly() {
        let g = ForcingFunction::example_default(4);
        let v0 = LatticeVector::unit(4, 1);
        for cfg in [IntegratorConfig::default(), IntegratorConfig::rk4(0.03)] {
            let tr = integrate(&cubic(), &g, &v0, 1.7, &cfg).unwrap();
            assert_eq!(tr.final_time(), 1.7);
            assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(tr.states[0], v0);
        }
    }

    #[test]
    fn sampled_output_lands_on_requested_times() {
        let g = ForcingFunction::example_default(4);
        let times = uniform_times(2.0, 0.3);
        assert_eq!(*times.last().unwrap(), 2.0);
        let tr = integrate_sampled(&cubic(), &g, &LatticeVector::unit(4, 0), &times, &IntegratorConfig::default()).unwrap();
        assert_eq!(tr.times.len(), times.len() + 1);
        assert_eq!(&tr.times[1..], &times[..]);
        assert!(integrate_sampled(&cubic(), &g, &LatticeVector::unit(4, 0), &[1.0, 0.5], &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn cocycle_at_zero_is_identity() {
        let v = LatticeVector::from_fn(3, |i| 0.1 * i as f64 + 0.3);
        let out = cocycle_eval(&cubic(), &ForcingFunction::example_default(3), &v, 0.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(out, v);
        assert!(cocycle_eval(&cubic(), &ForcingFunction::example_default(3), &v, -1.0, &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn input_validation() {
        let g = ForcingFunction::zero(3);
        let cfg = IntegratorConfig::default();
        assert!(matches!(
            integrate(&cubic(), &g, &LatticeVector::zeros(4), 1.0, &cfg),
            Err(IntegrateError::WindowMismatch { state: 4, forcing: 3 })
        ));
        assert!(integrate(&cubic(), &g, &LatticeVector::zeros(3), 0.0, &cfg).is_err());
        let bad = IntegratorConfig { dt: -1.0, ..cfg.clone() };
        assert!(matches!(integrate(&cubic(), &g, &LatticeVector::zeros(3), 1.0, &bad), Err(IntegrateError::InvalidConfig(_))));
        let bad = IntegratorConfig { max_step: 1e-3, dt: 1e-2, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn step_budget_is_enforced() {
        let cfg = IntegratorConfig {
            max_steps: 10,
            ..IntegratorConfig::rk4(0.01)
        };
        let r = integrate(&cubic(), &ForcingFunction::zero(2), &LatticeVector::unit(2, 0), 1.0, &cfg);
        assert!(matches!(r, Err(IntegrateError::TooManySteps { .. })));
    }

    #[test]
    fn blow_up_is_reported() {
        // explicit RK4 with an oversized step overflows on a huge cubic state
        let params = ModelParams::new(0.0, 1.0, NonlinearitySpec::cubic()).unwrap();
        let g = ForcingFunction::zero(1);
        let v0 = LatticeVector::unit(1, 0).scale(1e6);
        let r = integrate(&params, &g, &v0, 1.0, &IntegratorConfig::rk4(0.5));
        assert!(matches!(r, Err(IntegrateError::NonFinite { .. })), "{r:?}");
    }

    #[test]
    fn autonomous_forcing_is_shift_invariant() {
        let c = LatticeVector::from_fn(5, |i| 0.2 / (1.0 + (i * i) as f64));
        let g = ForcingFunction::constant(c);
        let v0 = LatticeVector::from_fn(5, |i| (i as f64 * 0.7).sin());
        let cfg = IntegratorConfig::default();
        let base = integrate(&cubic(), &g, &v0, 2.0, &cfg).unwrap();
        for h in [0.5, -3.0, 17.25] {
            let shifted = integrate(&cubic(), &g.shift(h), &v0, 2.0, &cfg).unwrap();
            assert_eq!(base.states, shifted.states);
        }
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let params = linear();
        let g = ForcingFunction::zero(12);
        let v0 = LatticeVector::unit(12, 0);
        let reference = cocycle_eval(&params, &g, &v0, 1.0, &IntegratorConfig::adaptive(1e-13)).unwrap();
        let errors: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| cocycle_eval(&params, &g, &v0, 1.0, &IntegratorConfig::rk4(dt)).unwrap().distance(&reference))
            .collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 3.5, "observed order {order}, errors {errors:?}");
        }
    }

    #[test]
    fn cocycle_law_holds_for_example_forcing() {
        let params = cubic();
        let g = ForcingFunction::example_default(8);
        let cfg = IntegratorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let v = LatticeVector::from_fn(8, |_| rng.random_range(-0.5..0.5));
            let direct = cocycle_eval(&params, &g, &v, 2.0, &cfg).unwrap();
            let mid = cocycle_eval(&params, &g, &v, 1.0, &cfg).unwrap();
            let composed = cocycle_eval(&params, &g.shift(1.0), &mid, 1.0, &cfg).unwrap();
            assert!(direct.distance(&composed) <= 1e-7);
        }
    }

    #[test]
    fn solution_map_is_continuous_in_initial_data() {
        let params = cubic();
        let g = ForcingFunction::example_default(6);
        let cfg = IntegratorConfig::default();
        let v = LatticeVector::from_fn(6, |i| 0.3 * (i as f64).cos());
        let dir = LatticeVector::from_fn(6, |i| (i as f64 + 0.5).sin()).scale(1.0);
        let dir = dir.scale(1.0 / dir.norm());
        let base = cocycle_eval(&params, &g, &v, 1.0, &cfg).unwrap();
        let gaps: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&d| cocycle_eval(&params, &g, &(&v + &dir.scale(d)), 1.0, &cfg).unwrap().distance(&base))
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 1e-4);
    }
}
