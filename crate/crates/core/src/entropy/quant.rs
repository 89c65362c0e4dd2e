use crate::error::{Error, Result};

/// Uniform midtread scalar quantiser with an optional deadzone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub step: f64,
    /// Indices with `|q| <= deadzone` are forced to zero. `0` is the plain
    /// midtread quantiser.
    pub deadzone: u64,
}

impl Quantizer {
    pub fn new(step: f64) -> Result<Self> {
        Self::with_deadzone(step, 0)
    }

    pub fn with_deadzone(step: f64, deadzone: u64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParameter(format!("stepsize must be positive, got {step}")));
        }
        Ok(Self { step, deadzone })
    }

    /// `round(x / step)` with ties away from zero, then the deadzone.
    #[inline]
    pub fn quantize(&self, x: f64) -> i64 {
        let q = (x / self.step).round() as i64;
        if q.unsigned_abs() <= self.deadzone {
            0
        } else {
            q
        }
    }

    #[inline]
    pub fn dequantize(&self, q: i64) -> f64 {
        q as f64 * self.step
    }
}
