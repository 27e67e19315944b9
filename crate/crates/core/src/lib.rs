//! Numerics for the CR Nirenberg problem on the Heisenberg group.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases
//! below are the instantiations the CLI and the acceptance suite use.

pub mod audit;
pub mod bubbles;
pub mod error;
pub mod field;
pub mod fields;
pub mod functional;
pub mod group;
pub mod linalg;
pub mod multibump;
pub mod ops;

pub use error::{Error, Result};

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the library is generic over.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("literal representable")
}

/// Converts a scalar to `f64`.
#[inline(always)]
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("finite scalar")
}

pub type HPoint64 = group::HPoint<f64>;
pub type HPoint32 = group::HPoint<f32>;
pub type Constants64 = bubbles::Constants<f64>;
pub type BumpParams64 = bubbles::BumpParams<f64>;
pub type GridSpec64 = fields::GridSpec<f64>;
pub type GridField64 = fields::GridField<f64>;
pub type RSpec64 = multibump::RSpec<f64>;
pub type MultiBump64 = multibump::MultiBump<f64>;
pub type FlowConfig64 = multibump::FlowConfig<f64>;
pub type AuditReport64 = audit::AuditReport<f64>;
