//! Finite point-cloud approximation of the attractor family `{I_g}` and the
//! set-level checks: Hausdorff semi-distance, attraction and invariance.
//!
//! The section over the hull element `g^h` is obtained by evolving seed
//! points for `T_settle` under `g^{h − T_settle}`, so that the evolved cloud
//! sits over `σ(T_settle, g^{h − T_settle}) = g^h`.

use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::entry_time;
use crate::forcing::ForcingFunction;
use crate::integrator::{cocycle_eval, IntegrateError, IntegratorConfig};
use crate::lattice::{LatticeVector, ModelParams};
use crate::sampling::ball_points;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttractorError {
    #[error("point set is empty")]
    EmptySet,
    #[error("settle time {given} is below the required minimum {minimum}")]
    SettleTooShort { given: f64, minimum: f64 },
    #[error("time {0} is not a multiple of the hull shift step")]
    ShiftNotOnGrid(f64),
    #[error("hull shifts must form a uniform grid with at least two entries")]
    NonUniformShifts,
    #[error("no pair of hull shifts is {0} apart")]
    NoShiftPair(f64),
    #[error("evolution time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// A finite set of lattice states.
#[derive(Clone, Debug, PartialEq)]
pub struct SetSample {
    points: Vec<LatticeVector>,
}

impl SetSample {
    pub fn new(points: Vec<LatticeVector>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[LatticeVector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_norm_sq(&self) -> f64 {
        self.points.iter().map(LatticeVector::norm_sq).fold(0.0, f64::max)
    }

    /// Largest nearest-neighbour gap inside the set; zero for singletons.
    pub fn resolution(&self) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                self.points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| p.distance(q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

impl FromIterator<LatticeVector> for SetSample {
    fn from_iter<I: IntoIterator<Item = LatticeVector>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// `β(A, B) = max_{a∈A} min_{b∈B} ‖a − b‖`.
pub fn semi_distance(a: &SetSample, b: &SetSample) -> Result<f64, AttractorError> {
    if a.is_empty() || b.is_empty() {
        return Err(AttractorError::EmptySet);
    }
    Ok(a.points
        .par_iter()
        .map(|p| b.points.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max))
}

/// `max(β(A, B), β(B, A))`.
pub fn hausdorff_distance(a: &SetSample, b: &SetSample) -> Result<f64, AttractorError> {
    Ok(semi_distance(a, b)?.max(semi_distance(b, a)?))
}

/// Pointwise image `{φ(t, s, g) : s ∈ S}`, order preserved.
pub fn evolve_set(
    params: &ModelParams,
    g: &ForcingFunction,
    set: &SetSample,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<SetSample, AttractorError> {
    if !(t >= 0.0) {
        return Err(AttractorError::NegativeTime(t));
    }
    let points = set
        .points
        .par_iter()
        .map(|p| cocycle_eval(params, g, p, t, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SetSample::new(points))
}

/// Parameters of the ensemble construction.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    /// Uniform grid `{0, Δh, …, (m − 1)Δh}` identifying the hull elements.
    pub hull_shifts: Vec<f64>,
    pub seed_ball_radius: f64,
    pub settle_time: f64,
    pub n_points: usize,
    pub seed: u64,
    /// Extra settling time demanded on top of the absorption time.
    pub tail_margin: f64,
}

impl EnsembleSpec {
    pub fn uniform(count: usize, step: f64, seed_ball_radius: f64, settle_time: f64, n_points: usize, seed: u64) -> Self {
        Self {
            hull_shifts: (0..count).map(|j| j as f64 * step).collect(),
            seed_ball_radius,
            settle_time,
            n_points,
            seed,
            tail_margin: 1.0,
        }
    }
}

/// Smallest admissible settle time: absorption time of the seed ball plus
/// the tail margin.
pub fn min_settle_time(params: &ModelParams, c: f64, seed_ball_radius: f64, tail_margin: f64) -> f64 {
    entry_time(seed_ball_radius, params, c).derived + tail_margin
}

#[derive(Clone, Debug)]
pub struct AttractorApprox {
    base: ForcingFunction,
    pub hull_shifts: Vec<f64>,
    /// `sections[j]` approximates `I_{g^{hull_shifts[j]}}`.
    pub sections: Vec<SetSample>,
    pub settle_time: f64,
}

impl AttractorApprox {
    pub fn base_forcing(&self) -> &ForcingFunction {
        &self.base
    }

    /// `𝓘 ≈` concatenation of all sections.
    pub fn union(&self) -> SetSample {
        self.sections.iter().flat_map(|s| s.points.iter().cloned()).collect()
    }

    pub fn max_norm_sq(&self) -> f64 {
        self.sections.iter().map(SetSample::max_norm_sq).fold(0.0, f64::max)
    }

    /// Largest per-section nearest-neighbour gap.
    pub fn resolution(&self) -> f64 {
        self.sections.iter().map(SetSample::resolution).fold(0.0, f64::max)
    }

    fn shift_step(&self) -> Result<f64, AttractorError> {
        let h = &self.hull_shifts;
        if h.len() < 2 {
            return Err(AttractorError::NonUniformShifts);
        }
        let step = h[1] - h[0];
        let uniform = step > 0.0
            && h.windows(2)
                .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.max(1.0));
        if !uniform {
            return Err(AttractorError::NonUniformShifts);
        }
        Ok(step)
    }
}

/// Builds the sections `I_{g^h}` for every `h` in the ensemble's shift grid.
pub fn approximate_attractor(
    params: &ModelParams,
    forcing: &ForcingFunction,
    spec: &EnsembleSpec,
    cfg: &IntegratorConfig,
) -> Result<AttractorApprox, AttractorError> {
    if spec.n_points == 0 || spec.hull_shifts.is_empty() {
        return Err(AttractorError::InvalidEnsemble("need at least one point and one shift".into()));
    }
    if !(spec.seed_ball_radius >= 0.0) {
        return Err(AttractorError::InvalidEnsemble("seed ball radius must be nonnegative".into()));
    }
    let minimum = min_settle_time(params, forcing.sup_norm_bound(), spec.seed_ball_radius, spec.tail_margin);
    if spec.settle_time < minimum {
        return Err(AttractorError::SettleTooShort {
            given: spec.settle_time,
            minimum,
        });
    }
    let seeds = SetSample::new(ball_points(forcing.window(), spec.n_points, spec.seed_ball_radius, spec.seed));
    let sections = spec
        .hull_shifts
        .iter()
        .map(|&h| {
            let g = forcing.shift(h - spec.settle_time);
            evolve_set(params, &g, &seeds, spec.settle_time, cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AttractorApprox {
        base: forcing.clone(),
        hull_shifts: spec.hull_shifts.clone(),
        sections,
        settle_time: spec.settle_time,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttractionReport {
    pub times: Vec<f64>,
    /// `sup_y β(φ(t, M, y), 𝓘)` over all test sets and sampled `y`, per time.
    pub betas: Vec<f64>,
    /// `[time][shift]` values before the sup over hull elements.
    pub per_shift: Vec<Vec<f64>>,
}

impl AttractionReport {
    /// `β(t_{j+1}) ≤ (1 + slack)·β(t_j)` along the ladder.
    pub fn nonincreasing(&self, slack: f64) -> bool {
        self.betas.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.betas.windows(2).all(|w| w[1] < w[0])
    }
}

/// For each `t` in the ladder, evolves every test set `M` for time `t`
/// under the hull elements `y = g^{h_j − t}` (whose `t`-translates are the
/// sampled sections) and reports `sup_y β(φ(t, M, y), 𝓘)`.
pub fn attraction_check(
    approx: &AttractorApprox,
    params: &ModelParams,
    test_sets: &[SetSample],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<AttractionReport, AttractorError> {
    let union = approx.union();
    let mut betas = Vec::with_capacity(times.len());
    let mut per_shift = Vec::with_capacity(times.len());
    for &t in times {
        let mut row = Vec::with_capacity(approx.hull_shifts.len());
        for &h in &approx.hull_shifts {
            let y = approx.base.shift(h - t);
            let mut worst = 0.0f64;
            for m in test_sets {
                let image = evolve_set(params, &y, m, t, cfg)?;
                worst = worst.max(semi_distance(&image, &union)?);
            }
            row.push(worst);
        }
        betas.push(row.iter().copied().fold(0.0, f64::max));
        per_shift.push(row);
    }
    Ok(AttractionReport {
        times: times.to_vec(),
        betas,
        per_shift,
    })
}

/// `max_j d_H(φ(t, I_{g^{h_j}}, g^{h_j}), I_{g^{h_j + t}})` over the shift
/// pairs available on the grid. `t` must be a multiple of the shift step.
pub fn invariance_residual(
    approx: &AttractorApprox,
    params: &ModelParams,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, AttractorError> {
    if t == 0.0 {
        return Ok(0.0);
    }
    if t < 0.0 {
        return Err(AttractorError::NegativeTime(t));
    }
    let step = approx.shift_step()?;
    let ratio = t / step;
    let offset = ratio.round();
    if (ratio - offset).abs() > 1e-9 * ratio.max(1.0) {
        return Err(AttractorError::ShiftNotOnGrid(t));
    }
    let offset = offset as usize;
    if offset >= approx.hull_shifts.len() {
        return Err(AttractorError::NoShiftPair(t));
    }
    let mut residual = 0.0f64;
    for j in 0..approx.hull_shifts.len() - offset {
        let g = approx.base.shift(approx.hull_shifts[j]);
        let image = evolve_set(params, &g, &approx.sections[j], t, cfg)?;
        residual = residual.max(hausdorff_distance(&image, &approx.sections[j + offset])?);
    }
    Ok(residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::NonlinearitySpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_beta(a: &SetSample, b: &SetSample) -> f64 {
        let mut sup = 0.0f64;
        for p in a.points() {
            let mut inf = f64::INFINITY;
            for q in b.points() {
                let d: f64 = p.indices().map(|i| (p.get(i) - q.get(i)).powi(2)).sum::<f64>().sqrt();
                inf = inf.min(d);
            }
            sup = sup.max(inf);
        }
        sup
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize) -> SetSample {
        (0..n).map(|_| LatticeVector::from_fn(8, |_| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn semi_distance_examples() {
        let a: SetSample = vec![LatticeVector::zeros(3), LatticeVector::unit(3, 0)].into_iter().collect();
        let b: SetSample = vec![LatticeVector::zeros(3)].into_iter().collect();
        assert_eq!(semi_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(semi_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(semi_distance(&b, &a).unwrap(), 0.0);
        assert_eq!(semi_distance(&SetSample::new(vec![]), &a), Err(AttractorError::EmptySet));
    }

    #[test]
    fn semi_distance_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = random_set(&mut rng, 10);
            let b = random_set(&mut rng, 10);
            assert!((semi_distance(&a, &b).unwrap() - brute_force_beta(&a, &b)).abs() <= 1e-12);
        }
    }

    #[test]
    fn semi_distance_triangle_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = random_set(&mut rng, 6);
            let b = random_set(&mut rng, 7);
            let c = random_set(&mut rng, 5);
            let lhs = semi_distance(&a, &c).unwrap();
            let rhs = semi_distance(&a, &b).unwrap() + hausdorff_distance(&b, &c).unwrap();
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn evolve_set_basics() {
        let params = ModelParams::new(1.0, 1.0, NonlinearitySpec::cubic()).unwrap();
        let g = ForcingFunction::example_default(4);
        let cfg = IntegratorConfig::default();
        let s: SetSample = crate::sampling::ball_points(4, 5, 2.0, 1).into_iter().collect();
        assert_eq!(evolve_set(&params, &g, &s, 0.0, &cfg).unwrap(), s);
        let single = SetSample::new(vec![s.points()[0].clone()]);
        let image = evolve_set(&params, &g, &single, 1.0, &cfg).unwrap();
        assert_eq!(image.points()[0], cocycle_eval(&params, &g, &s.points()[0], 1.0, &cfg).unwrap());

        // set-level cocycle law
        let direct = evolve_set(&params, &g, &s, 1.5, &cfg).unwrap();
        let mid = evolve_set(&params, &g, &s, 0.5, &cfg).unwrap();
        let composed = evolve_set(&params, &g.shift(0.5), &mid, 1.0, &cfg).unwrap();
        assert_eq!(composed.len(), s.len());
        assert!(hausdorff_distance(&direct, &composed).unwrap() <= 1e-7);
    }

    #[test]
    fn linear_unforced_attractor_is_origin() {
        let params = ModelParams::new(1.0, 1.0, NonlinearitySpec::linear(1.0).unwrap()).unwrap();
        let g = ForcingFunction::zero(6);
        let spec = EnsembleSpec::uniform(2, 0.5, 3.0, 20.0 / 3.0, 16, 2);
        let approx = approximate_attractor(&params, &g, &spec, &IntegratorConfig::default()).unwrap();
        assert!(approx.max_norm_sq().sqrt() <= 1e-4);
    }

    #[test]
    fn settle_time_is_enforced() {
        let params = ModelParams::new(1.0, 1.0, NonlinearitySpec::cubic()).unwrap();
        let g = ForcingFunction::example_default(4);
        let spec = EnsembleSpec::uniform(2, 0.5, 3.0, 0.1, 4, 1);
        assert!(matches!(
            approximate_attractor(&params, &g, &spec, &IntegratorConfig::default()),
            Err(AttractorError::SettleTooShort { .. })
        ));
    }

    #[test]
    fn invariance_residual_grid_checks() {
        let params = ModelParams::new(1.0, 1.0, NonlinearitySpec::cubic()).unwrap();
        let g = ForcingFunction::example_default(4);
        let spec = EnsembleSpec::uniform(3, 0.5, 2.0, 5.0, 6, 1);
        let cfg = IntegratorConfig::default();
        let approx = approximate_attractor(&params, &g, &spec, &cfg).unwrap();
        assert_eq!(invariance_residual(&approx, &params, 0.0, &cfg).unwrap(), 0.0);
        assert_eq!(invariance_residual(&approx, &params, 0.3, &cfg), Err(AttractorError::ShiftNotOnGrid(0.3)));
        assert_eq!(invariance_residual(&approx, &params, 1.5, &cfg), Err(AttractorError::NoShiftPair(1.5)));
        assert!(invariance_residual(&approx, &params, 0.5, &cfg).unwrap() < 1e-3);
    }
}
