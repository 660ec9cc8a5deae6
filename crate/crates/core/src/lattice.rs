//! Truncated ℓ² lattice vectors, the difference operators and the right-hand
//! side of the lattice reaction–diffusion system
//!
//! ```text
//! u_i' = ν (u_{i-1} - 2 u_i + u_{i+1}) - λ u_i + F(u_i) + g_i(t),   i ∈ ℤ.
//! ```
//!
//! A [`LatticeVector`] stores the coefficients on a symmetric window
//! `[-N, N]`; every coefficient outside the window is zero. The difference
//! operators widen the window by one index so that the summation-by-parts
//! identities hold exactly, without any clipping at the truncation edge.
//!
//! With `(D⁺u)_i = u_{i+1} − u_i` and `(D⁻u)_i = u_{i−1} − u_i`, `D⁻` is the
//! adjoint of `D⁺` and `Λ = −D⁺D⁻ = −D⁻D⁺`, hence `⟨Λu, u⟩ = −‖D⁺u‖²`.

use std::fmt;
use std::ops::{Add, Sub};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("window radius must be at least 1")]
    EmptyWindow,
    #[error("expected {expected} coefficients for the window, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("coefficient at index {index} is not finite")]
    NonFinite { index: i64 },
    #[error("linear damping lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("coupling nu must be nonnegative, got {0}")]
    NegativeNu(f64),
    #[error("dissipativity constant alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("nonlinearity must vanish at the origin, F(0) = {0}")]
    NonzeroAtOrigin(f64),
    #[error("dissipativity s*F(s) <= -alpha*s^2 violated at s = {s}: s*F(s) = {value}")]
    DissipativityViolated { s: f64, value: f64 },
    #[error("Lipschitz bound {bound} on [-{radius}, {radius}] violated: ratio {ratio} at ({s1}, {s2})")]
    LipschitzViolated {
        radius: f64,
        bound: f64,
        ratio: f64,
        s1: f64,
        s2: f64,
    },
}

/// A finitely supported lattice state `u = (u_i)`, `|i| ≤ N`, zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeVector {
    radius: usize,
    coeffs: Vec<f64>,
}

impl LatticeVector {
    /// Zero vector on `[-radius, radius]`.
    ///
    /// Panics if `radius == 0`.
    pub fn zeros(radius: usize) -> Self {
        assert!(radius >= 1, "lattice window radius must be at least 1");
        Self {
            radius,
            coeffs: vec![0.0; 2 * radius + 1],
        }
    }

    /// Unit vector `e_index`. Panics if `index` lies outside the window.
    pub fn unit(radius: usize, index: i64) -> Self {
        let mut v = Self::zeros(radius);
        let slot = v.slot(index).expect("unit index outside the window");
        v.coeffs[slot] = 1.0;
        v
    }

    pub fn from_fn(radius: usize, mut f: impl FnMut(i64) -> f64) -> Self {
        let mut v = Self::zeros(radius);
        let n = radius as i64;
        for (c, i) in v.coeffs.iter_mut().zip(-n..=n) {
            *c = f(i);
        }
        v
    }

    /// Builds a vector from coefficients ordered `u_{-N}, …, u_N`.
    pub fn from_coeffs(radius: usize, coeffs: Vec<f64>) -> Result<Self, ModelError> {
        if radius == 0 {
            return Err(ModelError::EmptyWindow);
        }
        if coeffs.len() != 2 * radius + 1 {
            return Err(ModelError::CoefficientCount {
                expected: 2 * radius + 1,
                got: coeffs.len(),
            });
        }
        if let Some(pos) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(ModelError::NonFinite {
                index: pos as i64 - radius as i64,
            });
        }
        Ok(Self { radius, coeffs })
    }

    pub(crate) fn from_raw(radius: usize, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(coeffs.len(), 2 * radius + 1);
        Self { radius, coeffs }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Coefficients ordered `u_{-N}, …, u_N`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i64> {
        let n = self.radius as i64;
        -n..=n
    }

    fn slot(&self, index: i64) -> Option<usize> {
        let n = self.radius as i64;
        (index.abs() <= n).then(|| (index + n) as usize)
    }

    /// `u_i`, zero outside the window.
    pub fn get(&self, index: i64) -> f64 {
        self.slot(index).map_or(0.0, |s| self.coeffs[s])
    }

    /// Iterator over `(i, u_i)` for `|i| ≤ N`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.indices().zip(self.coeffs.iter().copied())
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Re-windows to `radius`: zero-pads when growing, truncates when shrinking.
    pub fn resize(&self, radius: usize) -> Self {
        Self::from_fn(radius, |i| self.get(i))
    }

    /// Truncation to a smaller (or equal) window.
    pub fn restrict(&self, radius: usize) -> Self {
        debug_assert!(radius <= self.radius);
        self.resize(radius)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_raw(self.radius, self.coeffs.iter().map(|c| c * factor).collect())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::from_raw(self.radius, self.coeffs.iter().map(|&c| f(c)).collect())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let radius = self.radius.max(other.radius);
        Self::from_fn(radius, |i| f(self.get(i), other.get(i)))
    }

    /// `‖self − other‖` with zero extension of the shorter operand.
    pub fn distance(&self, other: &Self) -> f64 {
        if self.radius == other.radius {
            return self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
        (self - other).norm()
    }
}

impl Add for &LatticeVector {
    type Output = LatticeVector;
    fn add(self, rhs: &LatticeVector) -> LatticeVector {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &LatticeVector {
    type Output = LatticeVector;
    fn sub(self, rhs: &LatticeVector) -> LatticeVector {
        self.zip_with(rhs, |a, b| a - b)
    }
}

/// Forward difference `(D⁺u)_i = u_{i+1} − u_i`, window widened by one.
pub fn dplus(u: &LatticeVector) -> LatticeVector {
    LatticeVector::from_fn(u.radius + 1, |i| u.get(i + 1) - u.get(i))
}

/// Backward difference `(D⁻u)_i = u_{i−1} − u_i`, window widened by one.
pub fn dminus(u: &LatticeVector) -> LatticeVector {
    LatticeVector::from_fn(u.radius + 1, |i| u.get(i - 1) - u.get(i))
}

/// Discrete Laplacian `(Λu)_i = u_{i−1} − 2u_i + u_{i+1}`, window widened by one.
pub fn laplacian(u: &LatticeVector) -> LatticeVector {
    LatticeVector::from_fn(u.radius + 1, |i| u.get(i - 1) - 2.0 * u.get(i) + u.get(i + 1))
}

/// `⟨u, v⟩` over the common window (the rest is zero).
pub fn inner(u: &LatticeVector, v: &LatticeVector) -> f64 {
    let r = u.radius.min(v.radius) as i64;
    (-r..=r).map(|i| u.get(i) * v.get(i)).sum()
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum NonlinearityKind {
    Cubic,
    Linear,
    Custom {
        f: ScalarFn,
        lip: ScalarFn,
        label: String,
    },
}

/// Scalar nonlinearity `F` with its dissipativity constant `α` and ball-wise
/// Lipschitz bound. Only constructible through validated constructors, so
/// `F(0) = 0` always holds.
#[derive(Clone)]
pub struct NonlinearitySpec {
    kind: NonlinearityKind,
    alpha: f64,
}

impl fmt::Debug for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearitySpec")
            .field("name", &self.name())
            .field("alpha", &self.alpha)
            .finish()
    }
}

/// Sample radii used when checking a user-supplied nonlinearity.
const CHECK_RADII: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const CHECK_SAMPLES: usize = 2000;

impl NonlinearitySpec {
    /// `F(u) = −u − u³`, `α = 1`, `L(r) = 1 + 3r²`.
    pub fn cubic() -> Self {
        Self {
            kind: NonlinearityKind::Cubic,
            alpha: 1.0,
        }
    }

    /// `F(u) = −αu`.
    pub fn linear(alpha: f64) -> Result<Self, ModelError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ModelError::NonPositiveAlpha(alpha));
        }
        Ok(Self {
            kind: NonlinearityKind::Linear,
            alpha,
        })
    }

    /// User-supplied nonlinearity. The structural conditions are checked by
    /// seeded random sampling before the nonlinearity is accepted.
    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        alpha: f64,
        lip_bound: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, ModelError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ModelError::NonPositiveAlpha(alpha));
        }
        let at_zero = f(0.0);
        if at_zero != 0.0 {
            return Err(ModelError::NonzeroAtOrigin(at_zero));
        }
        let spec = Self {
            kind: NonlinearityKind::Custom {
                f: Arc::new(f),
                lip: Arc::new(lip_bound),
                label: label.into(),
            },
            alpha,
        };
        spec.check_conditions(0x5eed)?;
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            NonlinearityKind::Cubic => "cubic",
            NonlinearityKind::Linear => "linear",
            NonlinearityKind::Custom { label, .. } => label,
        }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Cubic => -s - s * s * s,
            NonlinearityKind::Linear => -self.alpha * s,
            NonlinearityKind::Custom { f, .. } => f(s),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Lipschitz constant of `F` on `[-r, r]`.
    pub fn lip_bound(&self, r: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Cubic => 1.0 + 3.0 * r * r,
            NonlinearityKind::Linear => self.alpha,
            NonlinearityKind::Custom { lip, .. } => lip(r),
        }
    }

    /// Randomized check of `F(0) = 0`, `sF(s) ≤ −αs²` and the Lipschitz
    /// bound on a few balls.
    pub fn check_conditions(&self, seed: u64) -> Result<(), ModelError> {
        let at_zero = self.eval(0.0);
        if at_zero != 0.0 {
            return Err(ModelError::NonzeroAtOrigin(at_zero));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &r in &CHECK_RADII {
            let bound = self.lip_bound(r);
            for _ in 0..CHECK_SAMPLES {
                let s1 = rng.random_range(-r..=r);
                let s2 = rng.random_range(-r..=r);
                let value = s1 * self.eval(s1);
                let target = -self.alpha * s1 * s1;
                if value > target + 1e-12 * (1.0 + target.abs()) {
                    return Err(ModelError::DissipativityViolated { s: s1, value });
                }
                let dx = (s1 - s2).abs();
                if dx > 0.0 {
                    let ratio = (self.eval(s1) - self.eval(s2)).abs() / dx;
                    if ratio > bound * (1.0 + 1e-9) + 1e-12 {
                        return Err(ModelError::LipschitzViolated {
                            radius: r,
                            bound,
                            ratio,
                            s1,
                            s2,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Componentwise application `(F̃u)_i = F(u_i)`.
pub fn nemytskii(spec: &NonlinearitySpec, u: &LatticeVector) -> LatticeVector {
    u.map(|s| spec.eval(s))
}

/// Coupling `ν`, damping `λ` and the nonlinearity.
#[derive(Clone, Debug)]
pub struct ModelParams {
    nu: f64,
    lambda: f64,
    nonlinearity: NonlinearitySpec,
}

impl ModelParams {
    pub fn new(nu: f64, lambda: f64, nonlinearity: NonlinearitySpec) -> Result<Self, ModelError> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(ModelError::NegativeNu(nu));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ModelError::NonPositiveLambda(lambda));
        }
        Ok(Self {
            nu,
            lambda,
            nonlinearity,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.nonlinearity.alpha
    }

    pub fn nonlinearity(&self) -> &NonlinearitySpec {
        &self.nonlinearity
    }

    /// Energy decay rate `λ + 2α` of the Gronwall estimate.
    pub fn decay_rate(&self) -> f64 {
        self.lambda + 2.0 * self.alpha()
    }
}

/// `νΛu − λu + F̃(u) + f_t`, truncated to the window of `u`.
///
/// `f_t` is zero-extended or truncated to that window.
pub fn vector_field(params: &ModelParams, f_t: &LatticeVector, u: &LatticeVector) -> LatticeVector {
    let n = u.radius();
    let diffusion = laplacian(u).restrict(n).scale(params.nu);
    let damping = u.scale(-params.lambda);
    let reaction = nemytskii(&params.nonlinearity, u);
    let forcing = f_t.resize(n);
    &(&(&diffusion + &damping) + &reaction) + &forcing
}

/// Slice version of [`vector_field`] used inside the integrator. All three
/// slices hold one window `u_{-N}, …, u_N`.
pub fn vector_field_into(params: &ModelParams, f_t: &[f64], u: &[f64], out: &mut [f64]) {
    let len = u.len();
    debug_assert_eq!(f_t.len(), len);
    debug_assert_eq!(out.len(), len);
    let (nu, lambda) = (params.nu, params.lambda);
    let spec = &params.nonlinearity;
    for j in 0..len {
        let left = if j > 0 { u[j - 1] } else { 0.0 };
        let right = if j + 1 < len { u[j + 1] } else { 0.0 };
        let uj = u[j];
        out[j] = nu * (left - 2.0 * uj + right) - lambda * uj + spec.eval(uj) + f_t[j];
    }
}
