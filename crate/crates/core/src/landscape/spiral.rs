use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this radius the polar chart has no usable gradient.
pub const SPIRAL_ORIGIN_CUTOFF: f64 = 1e-9;

/// `f(r, θ) = r² + (A sin(F r − θ) + c)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralSpec {
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default = "default_offset")]
    pub offset: f64,
}

fn default_amplitude() -> f64 {
    20.0
}

fn default_frequency() -> f64 {
    4.0
}

fn default_offset() -> f64 {
    1.0
}

impl Default for SpiralSpec {
    fn default() -> Self {
        Self {
            amplitude: default_amplitude(),
            frequency: default_frequency(),
            offset: default_offset(),
        }
    }
}

impl SpiralSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::config("landscape.amplitude", "must be positive"));
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::config("landscape.frequency", "must be positive"));
        }
        if !self.offset.is_finite() {
            return Err(Error::config("landscape.offset", "must be finite"));
        }
        Ok(())
    }

    /// Loss as a function of polar coordinates.
    pub fn loss_polar(&self, r: f64, theta: f64) -> f64 {
        let s = self.amplitude * (self.frequency * r - theta).sin() + self.offset;
        r * r + s * s
    }

    /// Loss and Cartesian gradient.
    pub fn eval(&self, xy: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let [x, y] = xy;
        let r = x.hypot(y);
        if !(r > SPIRAL_ORIGIN_CUTOFF) {
            return Err(Error::DegeneratePolar { radius: r });
        }
        let theta = y.atan2(x);
        let phase = self.frequency * r - theta;
        let s = self.amplitude * phase.sin() + self.offset;
        let ds = 2.0 * s * self.amplitude * phase.cos();
        let df_dr = 2.0 * r + ds * self.frequency;
        let df_dtheta = -ds;
        let r2 = r * r;
        let gx = df_dr * x / r - df_dtheta * y / r2;
        let gy = df_dr * y / r + df_dtheta * x / r2;
        Ok((r * r + s * s, [gx, gy]))
    }
}

pub fn from_polar(r: f64, theta: f64) -> [f64; 2] {
    [r * theta.cos(), r * theta.sin()]
}
