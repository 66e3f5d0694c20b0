//! Scalar abstraction for network weights and real-valued metrics.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};

/// Floating-point type the networks are evaluated in.
///
/// Weights are stored and serialized in this type, so a genome evolved in
/// `f32` replays bit-exactly only in `f32`.
pub trait Scalar:
    Float + FromPrimitive + FromStr + Display + Debug + Default + Send + Sync + 'static
{
    /// Name written into genome files.
    const NAME: &'static str;

    fn from_unit(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any float scalar")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}
