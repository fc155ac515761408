//! Numerical laboratory for the semilinear parabolic flow `du/dt = Lap u - f(u)`
//! with power-law reaction terms `f(t) = a0 t - sum_l a_l t^{p_l}`.
//!
//! The crate provides:
//! - [`reaction`]: the reaction-term family, its antiderivative and derivatives,
//!   and structural hypothesis checks (KPP-type bound, concavity near zero).
//! - [`ground_state`]: radial ground-state profiles of `Lap xi = f(xi)` by shooting.
//! - [`field`]: Cartesian and radial grids, quadrature, discrete energy, bubble sampling.
//! - [`flow`]: semi-implicit time stepping with an energy/dissipation ledger and
//!   vanish / converge / blow-up event detection.
//! - [`bubbles`]: best multi-bubble fit to a field, interaction integrals, weight
//!   systems, and energy-deficit diagnostics.
//! - [`spectral`]: the linearized operator `-Lap + f'(xi)` on radial sectors and
//!   Cartesian grids; eigenvalue counts and constrained coercivity.
//! - [`threshold`]: scaling-threshold bisection between vanishing and blow-up.
//! - [`geometry`]: separation certificates (a common direction seen at a uniform
//!   angle from a base point) for finite point sets.
//!
//! All numerics are generic over the scalar type through the [`Real`] trait; the
//! `*64` aliases at the crate root are the types the CLI and acceptance suite use.

pub mod acceptance;
pub mod bubbles;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod ground_state;
pub mod linalg;
pub mod reaction;
pub mod spectral;
pub mod threshold;

/// Scalar abstraction for every numeric routine in the crate.
///
/// `f32` and `f64` implement it; tolerances shipped with the acceptance suite
/// assume `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssignOps
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Default
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for injecting an `f64` literal into the generic scalar type.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Surface area of the unit sphere in `R^n`: 2, 2*pi, 4*pi, 2*pi^2, ...
/// (`n = 1` gives the two-point measure of `{-1, +1}`, so that
/// `int_{R^n} g(|x|) dx = sphere_area(n) * int_0^inf g(r) r^{n-1} dr` holds
/// for all n >= 1).
pub fn sphere_area<T: Real>(n: usize) -> T {
    assert!(n >= 1, "dimension must be >= 1");
    let two_pi = lit::<T>(2.0 * std::f64::consts::PI);
    match n {
        1 => lit(2.0),
        2 => two_pi,
        _ => two_pi * sphere_area::<T>(n - 2) / lit((n - 2) as f64),
    }
}

pub type Nonlinearity64 = reaction::Nonlinearity<f64>;
pub type RadialProfile64 = ground_state::RadialProfile<f64>;
pub type Grid64 = field::Grid<f64>;
pub type RadialGrid64 = field::RadialGrid<f64>;
pub type BoxGrid64 = field::BoxGrid<f64>;
pub type Field64 = field::Field<f64>;
pub type FlowParams64 = flow::FlowParams<f64>;
pub type FlowResult64 = flow::FlowResult<f64>;
pub type FlowEvent64 = flow::FlowEvent<f64>;
pub type MBubble64 = bubbles::MBubble<f64>;
pub type FitResult64 = bubbles::FitResult<f64>;
pub type RadialSector64 = spectral::RadialSector<f64>;
pub type SpectralReport64 = spectral::SpectralReport<f64>;
pub type ThresholdParams64 = threshold::ThresholdParams<f64>;
pub type ThresholdResult64 = threshold::ThresholdResult<f64>;
pub type SeparationCert64 = geometry::SeparationCert<f64>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_inject_into_both_float_widths() {
        assert_eq!(lit::<f64>(0.5), 0.5);
        assert_eq!(lit::<f32>(0.5), 0.5f32);
    }
}
