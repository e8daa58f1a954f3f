//! Built-in analytic coefficient families selectable from experiment configs.

use super::CellCoefficient;
use std::f64::consts::PI;

/// Space-time periodic coefficient families on the unit cell. All are
/// symmetric; ellipticity depends on the parameters and is checked by
/// validation, not construction.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientFamily {
    /// constant matrix
    Constant { a11: f64, a12: f64, a22: f64 },
    /// scalar two-phase medium: `alpha` for y1 < 0, `beta` for y1 >= 0
    Layered { alpha: f64, beta: f64 },
    /// scalar `(base + amp sin(2 pi y1)) I`
    Sinusoidal { base: f64, amp: f64 },
    /// scalar quadrant pattern: `alpha` where y1*y2 >= 0, `beta` elsewhere
    Checkerboard { alpha: f64, beta: f64 },
    /// separable `(base_y + amp_y sin(2 pi y1)) (base_t + amp_t sin(2 pi tau)) I`
    TimeModulated {
        base_y: f64,
        amp_y: f64,
        base_t: f64,
        amp_t: f64,
    },
    /// purely temporal `(base + amp sin(2 pi tau)) I`
    TimeOnly { base: f64, amp: f64 },
}

impl CoefficientFamily {
    pub fn eval(&self, y1: f64, y2: f64, tau: f64) -> [[f64; 2]; 2] {
        let scalar = |v: f64| [[v, 0.0], [0.0, v]];
        match *self {
            CoefficientFamily::Constant { a11, a12, a22 } => [[a11, a12], [a12, a22]],
            CoefficientFamily::Layered { alpha, beta } => {
                scalar(if y1.rem_euclid(1.0) < 0.5 { beta } else { alpha })
            }
            CoefficientFamily::Sinusoidal { base, amp } => scalar(base + amp * (2.0 * PI * y1).sin()),
            CoefficientFamily::Checkerboard { alpha, beta } => {
                let s1 = if y1.rem_euclid(1.0) < 0.5 { 1.0 } else { -1.0 };
                let s2 = if y2.rem_euclid(1.0) < 0.5 { 1.0 } else { -1.0 };
                scalar(if s1 * s2 > 0.0 { alpha } else { beta })
            }
            CoefficientFamily::TimeModulated {
                base_y,
                amp_y,
                base_t,
                amp_t,
            } => scalar((base_y + amp_y * (2.0 * PI * y1).sin()) * (base_t + amp_t * (2.0 * PI * tau).sin())),
            CoefficientFamily::TimeOnly { base, amp } => scalar(base + amp * (2.0 * PI * tau).sin()),
        }
    }

    /// Whether the family depends on the fast time variable at all; a purely
    /// spatial family needs no `dt <= eps/8` constraint.
    pub fn is_time_dependent(&self) -> bool {
        matches!(
            self,
            CoefficientFamily::TimeModulated { .. } | CoefficientFamily::TimeOnly { .. }
        )
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CoefficientFamily::Constant { .. })
    }

    pub fn sample(&self, n: usize, n_tau: usize) -> CellCoefficient {
        CellCoefficient::from_sampler(n, n_tau, |y1, y2, tau| self.eval(y1, y2, tau))
    }
}
