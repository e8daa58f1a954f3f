//! Oscillating forcing `f(y, tau, xi)` and its cell average
//! `fbar(xi) = int_{D_tau} f(y, tau, xi) dy dtau`.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::sync::Arc;

/// Bounded saturation shapes applied to the velocity argument; all are
/// globally 1-Lipschitz componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaturationKind {
    /// s(x) = tanh(x)
    Tanh,
    /// s(x) = x / (1 + |x|)
    Rational,
    /// s(x) = x (linear, growth-only Lipschitz)
    Identity,
}

impl SaturationKind {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            SaturationKind::Tanh => x.tanh(),
            SaturationKind::Rational => x / (1.0 + x.abs()),
            SaturationKind::Identity => x,
        }
    }
}

/// Built-in oscillating force families. Each declares its own Lipschitz and
/// growth constants; randomized certification happens in `average_force`.
#[derive(Debug, Clone, PartialEq)]
pub enum OscillatingForce {
    Zero,
    /// constant in (y, tau, xi)
    Constant { value: [f64; 2] },
    /// `(base + amp * cos(2 pi y2) + amp_t * sin(2 pi tau)) * s(xi)` per component
    ModulatedSaturation {
        base: f64,
        amp: f64,
        amp_t: f64,
        sat: SaturationKind,
    },
    /// zero-mean pure oscillation `amp * sin(2 pi y1) * (1 + xi)` per component
    OscillationOnly { amp: f64 },
}

impl OscillatingForce {
    pub fn eval(&self, y: [f64; 2], tau: f64, xi: [f64; 2]) -> [f64; 2] {
        match *self {
            OscillatingForce::Zero => [0.0, 0.0],
            OscillatingForce::Constant { value } => value,
            OscillatingForce::ModulatedSaturation { base, amp, amp_t, sat } => {
                let m = base + amp * (2.0 * PI * y[1]).cos() + amp_t * (2.0 * PI * tau).sin();
                [m * sat.apply(xi[0]), m * sat.apply(xi[1])]
            }
            OscillatingForce::OscillationOnly { amp } => {
                let m = amp * (2.0 * PI * y[0]).sin();
                [m * (1.0 + xi[0]), m * (1.0 + xi[1])]
            }
        }
    }

    /// Lipschitz constant in `xi` (the `c1` of the declared contract).
    pub fn lipschitz(&self) -> f64 {
        match *self {
            OscillatingForce::Zero | OscillatingForce::Constant { .. } => 0.0,
            OscillatingForce::ModulatedSaturation { base, amp, amp_t, .. } => {
                base.abs() + amp.abs() + amp_t.abs()
            }
            OscillatingForce::OscillationOnly { amp } => amp.abs(),
        }
    }

    /// Growth constant: `|f| <= c2 (1 + |xi|)`.
    pub fn growth(&self) -> f64 {
        match *self {
            OscillatingForce::Zero => 0.0,
            OscillatingForce::Constant { value } => (value[0].powi(2) + value[1].powi(2)).sqrt(),
            OscillatingForce::ModulatedSaturation { base, amp, amp_t, .. } => {
                std::f64::consts::SQRT_2 * (base.abs() + amp.abs() + amp_t.abs())
            }
            OscillatingForce::OscillationOnly { amp } => std::f64::consts::SQRT_2 * amp.abs(),
        }
    }

    /// The exact/analytic cell average, available for every built-in family.
    pub fn analytic_average(&self) -> AveragedForce {
        let c1 = self.lipschitz();
        match *self {
            OscillatingForce::Zero | OscillatingForce::OscillationOnly { .. } => AveragedForce {
                eval: Arc::new(|_| [0.0, 0.0]),
                c1,
            },
            OscillatingForce::Constant { value } => AveragedForce {
                eval: Arc::new(move |_| value),
                c1,
            },
            OscillatingForce::ModulatedSaturation { base, sat, .. } => AveragedForce {
                // cos and sin modulations average to zero over the cell
                eval: Arc::new(move |xi| [base * sat.apply(xi[0]), base * sat.apply(xi[1])]),
                c1,
            },
        }
    }
}

/// Cell-averaged force `fbar(xi)`; Lipschitz with the same constant as `f`.
#[derive(Clone)]
pub struct AveragedForce {
    eval: Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>,
    pub c1: f64,
}

impl AveragedForce {
    pub fn eval(&self, xi: [f64; 2]) -> [f64; 2] {
        (self.eval)(xi)
    }
}

impl std::fmt::Debug for AveragedForce {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AveragedForce").field("c1", &self.c1).finish()
    }
}

/// Quadrature average of an arbitrary sampler over the unit cell, midpoint
/// rule on a `quad_res^2 x quad_res` grid (spectrally accurate for smooth
/// periodic integrands). The declared Lipschitz constant is certified by
/// randomized sampling before the averaged closure is returned.
pub fn average_force<F>(f: F, quad_res: usize, declared_c1: f64) -> Result<AveragedForce>
where
    F: Fn([f64; 2], f64, [f64; 2]) -> [f64; 2] + Send + Sync + 'static,
{
    // randomized Lipschitz certification
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut worst: f64 = 0.0;
    for _ in 0..512 {
        let y = [next() - 0.5, next() - 0.5];
        let tau = next() - 0.5;
        let scale = 10.0f64.powf(next() * 3.0 - 1.0);
        let xi1 = [(next() - 0.5) * scale, (next() - 0.5) * scale];
        let xi2 = [(next() - 0.5) * scale, (next() - 0.5) * scale];
        let d = ((xi1[0] - xi2[0]).powi(2) + (xi1[1] - xi2[1]).powi(2)).sqrt();
        if d < 1e-12 {
            continue;
        }
        let f1 = f(y, tau, xi1);
        let f2 = f(y, tau, xi2);
        let df = ((f1[0] - f2[0]).powi(2) + (f1[1] - f2[1]).powi(2)).sqrt();
        worst = worst.max(df / d);
    }
    if worst > declared_c1 * 1.01 + 1e-14 {
        return Err(Error::LipschitzViolation {
            observed: worst,
            declared: declared_c1,
        });
    }

    let nq = quad_res;
    let f = Arc::new(f);
    let eval = move |xi: [f64; 2]| -> [f64; 2] {
        let mut acc = [0.0; 2];
        for s in 0..nq {
            let tau = -0.5 + (s as f64 + 0.5) / nq as f64;
            for j in 0..nq {
                let y2 = -0.5 + (j as f64 + 0.5) / nq as f64;
                for i in 0..nq {
                    let y1 = -0.5 + (i as f64 + 0.5) / nq as f64;
                    let v = f([y1, y2], tau, xi);
                    acc[0] += v[0];
                    acc[1] += v[1];
                }
            }
        }
        let k = 1.0 / (nq * nq * nq) as f64;
        [acc[0] * k, acc[1] * k]
    };
    Ok(AveragedForce {
        eval: Arc::new(eval),
        c1: declared_c1,
    })
}
