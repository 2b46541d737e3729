//! Exponentiation of a stationary velocity field.
//!
//! The flow `dφ/dt = v(φ)`, `φ(0) = id` is integrated by Euler composition,
//! `φ(t + h) = (p + h v) ∘ φ(t)`, or by scaling and squaring when only
//! power-of-two step counts are needed. Each Euler step only samples `v` at
//! the current position of a voxel, so a voxel's trajectory is independent of
//! its neighbours and whole step sequences are applied voxel by voxel.

use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{compose, sample_field_unchecked, FieldKind, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum IntegrationMethod {
    #[default]
    Euler,
    ScalingSquaring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct IntegrationParams {
    pub steps_per_unit: u32,
    pub method: IntegrationMethod,
}

impl Default for IntegrationParams {
    fn default() -> Self {
        IntegrationParams {
            steps_per_unit: 32,
            method: IntegrationMethod::Euler,
        }
    }
}

impl IntegrationParams {
    pub fn euler(steps_per_unit: u32) -> Self {
        IntegrationParams {
            steps_per_unit,
            method: IntegrationMethod::Euler,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_unit == 0 {
            return Err(Error::invalid("steps_per_unit must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps used to reach time `t`.
    pub fn steps_for(&self, t: f64) -> usize {
        libm::ceil(t * self.steps_per_unit as f64) as usize
    }
}

/// The `N` regular integration times `k s / N`, `k = 1..=N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    s: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(s: f64, n: usize) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!("stopping point must be positive, got {s}")));
        }
        if n == 0 {
            return Err(Error::invalid("time grid needs at least one frame"));
        }
        Ok(TimeGrid { s, n })
    }

    pub fn stopping_point(&self) -> f64 {
        self.s
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.s / self.n as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n {
            self.s
        } else {
            self.s * k as f64 / self.n as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.n).map(|k| self.time(k)).collect()
    }
}

/// Advance every voxel of `u` by `steps` Euler steps of size `h` through `v`.
fn euler_advance(v: &VectorField, u: &mut VectorField, h: f64, steps: usize) {
    if steps == 0 {
        return;
    }
    let dims = u.dims();
    for (disp, p) in u.data_mut().iter_mut().zip(dims.points()) {
        let mut d = *disp;
        for _ in 0..steps {
            let w = sample_field_unchecked(v, [p[0] + d[0], p[1] + d[1], p[2] + d[2]]);
            d = [d[0] + h * w[0], d[1] + h * w[1], d[2] + h * w[2]];
        }
        *disp = d;
    }
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::invalid("integration time must be finite"));
    }
    if t < 0.0 {
        return Err(Error::invalid(
            "integration time must be non-negative; integrate -v for the inverse",
        ));
    }
    Ok(())
}

/// Displacement of `φ(t)` for the velocity `v`.
///
/// Euler uses `n = ceil(t * steps_per_unit)` steps of `h = t / n`. Scaling
/// and squaring requires `n` to be a power of two and squares `t v / n`
/// `log2 n` times.
pub fn exp_field(v: &VectorField, t: f64, params: &IntegrationParams) -> Result<VectorField> {
    params.validate()?;
    check_time(t)?;
    v.expect_kind(FieldKind::Velocity)?;
    let mut u = VectorField::zeros(v.dims(), FieldKind::Displacement).with_spacing(v.spacing());
    let n = params.steps_for(t);
    if n == 0 {
        return Ok(u);
    }
    match params.method {
        IntegrationMethod::Euler => {
            euler_advance(v, &mut u, t / n as f64, n);
            Ok(u)
        }
        IntegrationMethod::ScalingSquaring => {
            if !n.is_power_of_two() {
                return Err(Error::invalid(format!(
                    "scaling and squaring needs a power-of-two step count, got {n}"
                )));
            }
            square(v.scaled(t / n as f64), n.trailing_zeros())
        }
    }
}

/// `φ(1)` by halving `v` `squarings` times and self-composing as often.
pub fn exp_field_scaling_squaring(v: &VectorField, squarings: u32) -> Result<VectorField> {
    if squarings == 0 {
        return Err(Error::invalid("scaling and squaring needs at least one squaring"));
    }
    if squarings > 62 {
        return Err(Error::invalid("too many squarings"));
    }
    v.expect_kind(FieldKind::Velocity)?;
    square(v.scaled(1.0 / (1u64 << squarings) as f64), squarings)
}

fn square(initial: VectorField, times: u32) -> Result<VectorField> {
    let mut u = initial.with_kind(FieldKind::Displacement);
    for _ in 0..times {
        u = compose(&u, &u)?;
    }
    Ok(u)
}

/// `φ(t_k)` for every time of `grid`, built incrementally: frame `k` extends
/// frame `k - 1` by `ceil((t_k - t_{k-1}) * steps_per_unit)` Euler steps.
pub fn integrate_sequence(
    v: &VectorField,
    grid: &TimeGrid,
    params: &IntegrationParams,
) -> Result<Vec<VectorField>> {
    params.validate()?;
    if params.method != IntegrationMethod::Euler {
        return Err(Error::invalid(
            "regular time grids need the euler method; scaling and squaring only reaches powers of two",
        ));
    }
    v.expect_kind(FieldKind::Velocity)?;
    let mut frames = Vec::with_capacity(grid.len());
    let mut u = VectorField::zeros(v.dims(), FieldKind::Displacement).with_spacing(v.spacing());
    let mut prev = 0.0;
    for t in grid.times() {
        let dt = t - prev;
        let n = params.steps_for(dt).max(1);
        euler_advance(v, &mut u, dt / n as f64, n);
        frames.push(u.clone());
        prev = t;
    }
    Ok(frames)
}
