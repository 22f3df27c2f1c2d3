//! Bracketed root finding.

use super::NumericsError;

const MAX_ITER: usize = 400;

/// Root of an increasing function inside `[lo, hi]`.
///
/// Alternates Illinois false-position steps with bisection, so the bracket at
/// least halves every two iterations. Stops once the bracket is narrower than
/// 1e-13 (relative to max(1, |x|)) or an exact zero is hit.
pub fn find_root_increasing<G: FnMut(f64) -> f64>(
    mut g: G,
    lo: f64,
    hi: f64,
) -> Result<f64, NumericsError> {
    if !(lo < hi) {
        return Err(NumericsError::Bracket(format!(
            "empty bracket [{lo}, {hi}]"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut ga, mut gb) = (g(a), g(b));
    if ga == 0.0 {
        return Ok(a);
    }
    if gb == 0.0 {
        return Ok(b);
    }
    if !(ga < 0.0 && gb > 0.0) {
        return Err(NumericsError::Bracket(format!(
            "g({lo}) = {ga} and g({hi}) = {gb} do not bracket a sign change"
        )));
    }
    // which end was retained on the previous false-position step
    let mut stale = 0i8;
    for iter in 0..MAX_ITER {
        let width = b - a;
        if width <= 1e-13 * a.abs().max(b.abs()).max(1.0) {
            break;
        }
        let x = if iter % 2 == 0 {
            let x = (a * gb - b * ga) / (gb - ga);
            if x > a && x < b {
                x
            } else {
                0.5 * (a + b)
            }
        } else {
            0.5 * (a + b)
        };
        let gx = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx < 0.0 {
            a = x;
            ga = gx;
            if stale == -1 {
                gb *= 0.5;
            }
            stale = -1;
        } else {
            b = x;
            gb = gx;
            if stale == 1 {
                ga *= 0.5;
            }
            stale = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64, NumericsError> {
    if xs.len() != ys.len() {
        return Err(NumericsError::Domain(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(NumericsError::Domain(
            "need at least two observations".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(NumericsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
