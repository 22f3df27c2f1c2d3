//! Gauss–Kronrod quadrature: a composite fixed-panel rule with panel
//! doubling, and an adaptive bisection rule for vector-valued integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::NumericsError;

/// Abscissae of the 21-point Kronrod rule on [-1, 1] (non-negative half).
/// Odd indices are the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_99,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

/// 10-point Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

/// Largest panel multiplier [`integrate`] will try before giving up.
const MAX_REFINEMENT: usize = 64;
/// Piece budget of the adaptive rule.
const MAX_PIECES: usize = 2000;

/// Panel count and error target for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    node_count: usize,
    abs_tol: f64,
}

impl QuadratureSpec {
    pub fn new(node_count: usize, abs_tol: f64) -> Result<Self, NumericsError> {
        if node_count < 16 {
            return Err(NumericsError::Domain(format!(
                "quadrature needs at least 16 panels, got {node_count}"
            )));
        }
        if !(abs_tol > 0.0 && abs_tol.is_finite()) {
            return Err(NumericsError::Domain(format!(
                "abs_tol must be positive, got {abs_tol}"
            )));
        }
        Ok(Self {
            node_count,
            abs_tol,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            node_count: 512,
            abs_tol: 1e-10,
        }
    }
}

/// One Gauss–Kronrod 21 panel: (Kronrod estimate, |Kronrod − Gauss|).
fn gk21_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for (j, (&x, &w)) in XGK[..10].iter().zip(&WGK[..10]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn gk21_panel_vec<const N: usize, F: FnMut(f64) -> [f64; N]>(
    f: &mut F,
    a: f64,
    b: f64,
) -> ([f64; N], f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc.map(|v| v * WGK[10]);
    let mut gauss = [0.0; N];
    for (j, (&x, &w)) in XGK[..10].iter().zip(&WGK[..10]).enumerate() {
        let dx = half * x;
        let lo = f(center - dx);
        let hi = f(center + dx);
        for k in 0..N {
            let pair = lo[k] + hi[k];
            kronrod[k] += w * pair;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * pair;
            }
        }
    }
    let mut err = 0.0_f64;
    for k in 0..N {
        err = err.max(((kronrod[k] - gauss[k]) * half).abs());
        kronrod[k] *= half;
    }
    (kronrod, err)
}

/// ∫_lo^hi f(t) dt with a composite Gauss–Kronrod rule over
/// `spec.node_count()` equal panels. The panel count doubles until the summed
/// Kronrod–Gauss discrepancy is within `spec.abs_tol()`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    spec: &QuadratureSpec,
) -> Result<f64, NumericsError> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(NumericsError::Domain(format!(
            "non-finite interval [{lo}, {hi}]"
        )));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let mut panels = spec.node_count;
    let mut estimate = f64::INFINITY;
    while panels <= spec.node_count * MAX_REFINEMENT {
        let width = (hi - lo) / panels as f64;
        let mut total = 0.0;
        let mut err = 0.0;
        for i in 0..panels {
            let a = lo + width * i as f64;
            let b = if i + 1 == panels { hi } else { a + width };
            let (value, e) = gk21_panel(&mut f, a, b);
            total += value;
            err += e;
        }
        if !total.is_finite() {
            return Err(NumericsError::Domain(
                "integrand produced a non-finite value".into(),
            ));
        }
        if err <= spec.abs_tol {
            return Ok(total);
        }
        estimate = err;
        panels *= 2;
    }
    Err(NumericsError::NotConverged {
        estimate,
        tolerance: spec.abs_tol,
    })
}

/// Adaptive Gauss–Kronrod integration of a vector-valued integrand. The
/// piece with the largest Kronrod–Gauss discrepancy (max over components) is
/// bisected until the summed discrepancy is within `abs_tol`.
pub fn integrate_adaptive<const N: usize, F: FnMut(f64) -> [f64; N]>(
    f: F,
    lo: f64,
    hi: f64,
    abs_tol: f64,
) -> Result<[f64; N], NumericsError> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(NumericsError::Domain(format!(
            "non-finite interval [{lo}, {hi}]"
        )));
    }
    let (value, err) = integrate_adaptive_unchecked(f, &[lo, hi], abs_tol);
    if err > abs_tol {
        return Err(NumericsError::NotConverged {
            estimate: err,
            tolerance: abs_tol,
        });
    }
    Ok(value)
}

/// As [`integrate_adaptive`] over the partition given by the sorted
/// `breaks`, returning the estimate together with its summed error estimate.
/// Stops at [`MAX_PIECES`] pieces; the caller decides whether the remaining
/// error is acceptable.
pub(crate) fn integrate_adaptive_unchecked<const N: usize, F: FnMut(f64) -> [f64; N]>(
    mut f: F,
    breaks: &[f64],
    abs_tol: f64,
) -> ([f64; N], f64) {
    let mut heap = BinaryHeap::new();
    let mut err_total = 0.0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (value, err) = gk21_panel_vec(&mut f, w[0], w[1]);
            err_total += err;
            heap.push(Piece {
                a: w[0],
                b: w[1],
                value,
                err,
            });
        }
    }
    while err_total > abs_tol && heap.len() < MAX_PIECES {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // cannot split further in floating point
            heap.push(Piece { err: 0.0, ..worst });
            err_total -= worst.err;
            continue;
        }
        err_total -= worst.err;
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, err) = gk21_panel_vec(&mut f, a, b);
            err_total += err;
            heap.push(Piece { a, b, value, err });
        }
    }
    // Sum in position order so the result does not depend on heap layout.
    let mut pieces = heap.into_vec();
    pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut total = [0.0; N];
    let mut err = 0.0;
    for piece in &pieces {
        for k in 0..N {
            total[k] += piece.value[k];
        }
        err += piece.err;
    }
    (total, err)
}

struct Piece<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    err: f64,
}

impl<const N: usize> PartialEq for Piece<N> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<const N: usize> Eq for Piece<N> {}

impl<const N: usize> PartialOrd for Piece<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<const N: usize> Ord for Piece<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err
            .total_cmp(&other.err)
            .then(other.a.total_cmp(&self.a))
    }
}

/// Nodes and weights of a composite 10-point Gauss–Legendre rule on [0, 1].
/// Exact for polynomials of degree ≤ 19 on every panel.
pub fn gauss_legendre_grid(panels: usize) -> (Vec<f64>, Vec<f64>) {
    let panels = panels.max(1);
    let width = 1.0 / panels as f64;
    let mut nodes = Vec::with_capacity(panels * 10);
    let mut weights = Vec::with_capacity(panels * 10);
    for i in 0..panels {
        let center = width * (i as f64 + 0.5);
        let half = 0.5 * width;
        for (j, &w) in WG.iter().enumerate() {
            let x = XGK[2 * j + 1];
            nodes.push(center - half * x);
            weights.push(half * w);
            nodes.push(center + half * x);
            weights.push(half * w);
        }
    }
    (nodes, weights)
}
