use core::f64::consts::PI;

use crate::math;

/// Time dependence of an independent source or of a prescribed terminal voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    Dc(f64),
    /// `amplitude * sin(2 pi frequency t + phase)`, phase in radians.
    Sin {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
}

impl Default for Waveform {
    fn default() -> Self {
        Waveform::Dc(0.0)
    }
}

impl Waveform {
    pub fn sin(amplitude: f64, frequency: f64) -> Self {
        Waveform::Sin {
            amplitude,
            frequency,
            phase: 0.0,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Waveform::Dc(v) => v,
            Waveform::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude * math::sin(2.0 * PI * frequency * t + phase),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Waveform::Dc(_) => 0.0,
            Waveform::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude * 2.0 * PI * frequency * math::cos(2.0 * PI * frequency * t + phase),
        }
    }
}
