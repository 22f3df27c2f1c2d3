//! Normal and Beta distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::NumericsError;

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

const BETA_CF_MAX_ITER: usize = 10_000;
const BETA_CF_EPS: f64 = 1e-16;
const BETA_CF_TINY: f64 = 1e-300;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, computed through `erfc` so both tails keep full
/// relative precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation followed by one Halley step against
/// [`normal_cdf`]; the result is accurate to a few ulps away from the
/// extreme tails.
pub fn normal_quantile(p: f64) -> Result<f64, NumericsError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(NumericsError::Domain(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    if p == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }

    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// ln B(a, b)
pub fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Beta(a, b) distribution with its normalising constant cached, for
/// evaluating many CDF/PDF values of the same law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaDist {
    a: f64,
    b: f64,
    ln_norm: f64,
}

impl BetaDist {
    pub fn new(a: f64, b: f64) -> Result<Self, NumericsError> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(NumericsError::Domain(format!(
                "Beta parameters must be positive and finite, got ({a}, {b})"
            )));
        }
        Ok(Self {
            a,
            b,
            ln_norm: ln_beta(a, b),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.a
    }

    pub fn beta(&self) -> f64 {
        self.b
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn variance(&self) -> f64 {
        let n = self.a + self.b;
        self.a * self.b / (n * n * (n + 1.0))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        if x == 0.0 || x == 1.0 {
            return self.pdf_endpoint(x);
        }
        ((self.a - 1.0) * x.ln() + (self.b - 1.0) * (-x).ln_1p() - self.ln_norm).exp()
    }

    fn pdf_endpoint(&self, x: f64) -> f64 {
        let shape = if x == 0.0 { self.a } else { self.b };
        if shape < 1.0 {
            f64::INFINITY
        } else if shape > 1.0 {
            0.0
        } else {
            (-self.ln_norm).exp()
        }
    }

    /// Regularized incomplete beta I_x(a, b). Arguments outside [0, 1] are
    /// clamped, matching the distribution's support.
    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_sf(x).0
    }

    /// (I_x(a, b), 1 − I_x(a, b)). The smaller tail comes straight from the
    /// continued fraction, so both keep full relative accuracy.
    pub fn cdf_sf(&self, x: f64) -> (f64, f64) {
        if x <= 0.0 {
            return (0.0, 1.0);
        }
        if x >= 1.0 {
            return (1.0, 0.0);
        }
        // Symmetry switch keeps the continued fraction in its fast regime.
        if x > (self.a + 1.0) / (self.a + self.b + 2.0) {
            let upper = self.cf_tail(self.b, self.a, 1.0 - x, x);
            (1.0 - upper, upper)
        } else {
            let lower = self.cf_tail(self.a, self.b, x, 1.0 - x);
            (lower, 1.0 - lower)
        }
    }

    /// x^a (1-x)^b / (a B(a,b)) times the Lentz continued fraction.
    /// `y` is passed separately as 1 - x to avoid cancellation.
    fn cf_tail(&self, a: f64, b: f64, x: f64, y: f64) -> f64 {
        let front = (a * x.ln() + b * y.ln() - self.ln_norm).exp() / a;
        front * beta_continued_fraction(a, b, x)
    }

    /// Inverse CDF by safeguarded Newton iteration inside a shrinking
    /// bracket.
    pub fn quantile(&self, p: f64) -> Result<f64, NumericsError> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(NumericsError::Domain(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        if p == 1.0 {
            return Ok(1.0);
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut x = self.mean();
        for _ in 0..200 {
            let err = self.cdf(x) - p;
            if err.abs() <= 1e-13 {
                return Ok(x);
            }
            if err > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.max(f64::MIN_POSITIVE) {
                return Ok(0.5 * (lo + hi));
            }
            let density = self.pdf(x);
            let newton = x - err / density;
            x = if density.is_finite() && density > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(x)
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < BETA_CF_TINY {
        d = BETA_CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < BETA_CF_TINY {
            d = BETA_CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < BETA_CF_TINY {
            c = BETA_CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < BETA_CF_TINY {
            d = BETA_CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < BETA_CF_TINY {
            c = BETA_CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b), the Beta(a, b) CDF.
pub fn beta_cdf(x: f64, a: f64, b: f64) -> Result<f64, NumericsError> {
    if !(0.0..=1.0).contains(&x) || x.is_nan() {
        return Err(NumericsError::Domain(format!("x = {x} outside [0, 1]")));
    }
    Ok(BetaDist::new(a, b)?.cdf(x))
}

/// Inverse of [`beta_cdf`] in its first argument.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> Result<f64, NumericsError> {
    BetaDist::new(a, b)?.quantile(p)
}
