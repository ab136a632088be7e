//! Scalar kernel profiles `phi(t)` with slope and antiderivatives.
//!
//! Every family is normalised so that `phi(0) = 1`. The first antiderivative
//! is the odd primitive with value 0 at the origin; the second antiderivative
//! is the even primitive of that. The `*_scaled` variants drop the leading
//! `sgn(t)` / `|t|` term and replace `|t|` in the exponent with
//! `g(t) = |t| - offset`, which keeps distant-support covariances
//! representable.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const SQRT_5: f64 = 2.236_067_977_499_79;

/// `sgn` with `sgn(0) = 0`.
#[inline]
pub fn sgn(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    SquaredExponential,
    Exponential,
    Matern32,
    Matern52,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::SquaredExponential,
        KernelFamily::Exponential,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Exponential => "exp",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }

    /// Exponential decay rate `c` of the profile, `None` for the squared
    /// exponential which decays faster than any exponential.
    pub fn decay_rate(self) -> Option<f64> {
        match self {
            KernelFamily::SquaredExponential => None,
            KernelFamily::Exponential => Some(1.0),
            KernelFamily::Matern32 => Some(SQRT_3),
            KernelFamily::Matern52 => Some(SQRT_5),
        }
    }

    pub fn phi(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            KernelFamily::SquaredExponential => (-0.5 * t * t).exp(),
            KernelFamily::Exponential => (-a).exp(),
            KernelFamily::Matern32 => (1.0 + SQRT_3 * a) * (-SQRT_3 * a).exp(),
            KernelFamily::Matern52 => {
                (1.0 + SQRT_5 * a + 5.0 / 3.0 * t * t) * (-SQRT_5 * a).exp()
            }
        }
    }

    pub fn phi_prime(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            KernelFamily::SquaredExponential => -t * (-0.5 * t * t).exp(),
            KernelFamily::Exponential => -sgn(t) * (-a).exp(),
            KernelFamily::Matern32 => -3.0 * t * (-SQRT_3 * a).exp(),
            KernelFamily::Matern52 => {
                (-SQRT_5 * a).exp() * (10.0 * t - sgn(t) * (5.0 * SQRT_5 * t * t + 15.0 * a))
                    / 3.0
            }
        }
    }

    /// First antiderivative `Phi`, odd, `Phi(0) = 0`.
    pub fn antiderivative(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            KernelFamily::SquaredExponential => FRAC_PI_2.sqrt() * libm::erf(t / SQRT_2),
            KernelFamily::Exponential => sgn(t) * (1.0 - (-a).exp()),
            KernelFamily::Matern32 => {
                2.0 / SQRT_3 * sgn(t) * (1.0 - (1.0 + 0.5 * SQRT_3 * a) * (-SQRT_3 * a).exp())
            }
            KernelFamily::Matern52 => {
                sgn(t) / 3.0
                    * (8.0 / SQRT_5 - (8.0 / SQRT_5 + 5.0 * a + SQRT_5 * t * t) * (-SQRT_5 * a).exp())
            }
        }
    }

    /// Second antiderivative `Psi`, even.
    pub fn second_antiderivative(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            KernelFamily::SquaredExponential => {
                FRAC_PI_2.sqrt() * t * libm::erf(t / SQRT_2) + (-0.5 * t * t).exp()
            }
            KernelFamily::Exponential => a + (-a).exp(),
            KernelFamily::Matern32 => 2.0 / SQRT_3 * a + (1.0 + a / SQRT_3) * (-SQRT_3 * a).exp(),
            KernelFamily::Matern52 => {
                (8.0 / SQRT_5 * a + (3.0 + 7.0 / SQRT_5 * a + t * t) * (-SQRT_5 * a).exp()) / 3.0
            }
        }
    }

    fn scaled_exp(self, t: f64, offset: f64) -> Result<f64> {
        match self.decay_rate() {
            Some(c) => Ok((-c * (t.abs() - offset)).exp()),
            None => Err(Error::NoModifiedForm("squared exponential")),
        }
    }

    /// `phi(t) * exp(c * offset)` evaluated without forming either factor.
    pub fn phi_scaled(self, t: f64, offset: f64) -> Result<f64> {
        let e = self.scaled_exp(t, offset)?;
        let a = t.abs();
        Ok(match self {
            KernelFamily::Exponential => e,
            KernelFamily::Matern32 => (1.0 + SQRT_3 * a) * e,
            KernelFamily::Matern52 => (1.0 + SQRT_5 * a + 5.0 / 3.0 * t * t) * e,
            KernelFamily::SquaredExponential => unreachable!(),
        })
    }

    /// `phi_prime(t) * exp(c * offset)`.
    pub fn phi_prime_scaled(self, t: f64, offset: f64) -> Result<f64> {
        let e = self.scaled_exp(t, offset)?;
        let a = t.abs();
        Ok(match self {
            KernelFamily::Exponential => -sgn(t) * e,
            KernelFamily::Matern32 => -3.0 * t * e,
            KernelFamily::Matern52 => e * (10.0 * t - sgn(t) * (5.0 * SQRT_5 * t * t + 15.0 * a)) / 3.0,
            KernelFamily::SquaredExponential => unreachable!(),
        })
    }

    /// `(Phi(t) - sgn(t) * Phi(inf)) * exp(c * offset)`.
    pub fn antiderivative_scaled(self, t: f64, offset: f64) -> Result<f64> {
        self.antiderivative_scaled_side(t, sgn(t), offset)
    }

    /// As [`Self::antiderivative_scaled`] with the sign of the removed
    /// constant given explicitly, so that `t = 0` can be taken as the limit
    /// from either side.
    pub fn antiderivative_scaled_side(self, t: f64, side: f64, offset: f64) -> Result<f64> {
        let e = self.scaled_exp(t, offset)?;
        let a = t.abs();
        Ok(match self {
            KernelFamily::Exponential => -side * e,
            KernelFamily::Matern32 => -2.0 / SQRT_3 * side * (1.0 + 0.5 * SQRT_3 * a) * e,
            KernelFamily::Matern52 => -side / 3.0 * (8.0 / SQRT_5 + 5.0 * a + SQRT_5 * t * t) * e,
            KernelFamily::SquaredExponential => unreachable!(),
        })
    }

    /// `(Psi(t) - Phi(inf) * |t|) * exp(c * offset)`.
    pub fn second_antiderivative_scaled(self, t: f64, offset: f64) -> Result<f64> {
        let e = self.scaled_exp(t, offset)?;
        let a = t.abs();
        Ok(match self {
            KernelFamily::Exponential => e,
            KernelFamily::Matern32 => (1.0 + a / SQRT_3) * e,
            KernelFamily::Matern52 => (3.0 + 7.0 / SQRT_5 * a + t * t) * e / 3.0,
            KernelFamily::SquaredExponential => unreachable!(),
        })
    }
}

// Squared-exponential tails: the same leading-term removal as the scaled
// forms, evaluated through erfc so that far-apart supports keep their
// relative precision until the result underflows.
pub(crate) fn se_antiderivative_tail(t: f64, side: f64) -> f64 {
    -side * FRAC_PI_2.sqrt() * libm::erfc(t.abs() / SQRT_2)
}

pub(crate) fn se_second_antiderivative_tail(t: f64) -> f64 {
    let a = t.abs();
    (-0.5 * t * t).exp() - FRAC_PI_2.sqrt() * a * libm::erfc(a / SQRT_2)
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "se" => Ok(KernelFamily::SquaredExponential),
            "exp" => Ok(KernelFamily::Exponential),
            "matern32" => Ok(KernelFamily::Matern32),
            "matern52" => Ok(KernelFamily::Matern52),
            _ => Err(Error::UnknownKernel(s.to_string())),
        }
    }
}
