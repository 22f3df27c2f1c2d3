//! Independent reference computations shared by the integration suites.
//! Nothing here calls the library's closed forms or recursions.

#![allow(dead_code)]

use std::collections::HashMap;

/// Polynomial in power basis, lowest degree first.
#[derive(Debug, Clone)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// ∫_lo^hi p(t) dt, exactly.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |t: f64| {
            self.0
                .iter()
                .enumerate()
                .map(|(k, c)| c * t.powi(k as i32 + 1) / (k as f64 + 1.0))
                .sum::<f64>()
        };
        anti(hi) - anti(lo)
    }
}

pub fn choose(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// CDF of Beta(a, b) for integer a, b as a polynomial:
/// I_t(a, b) = Σ_{j=a}^{n} C(n, j) t^j (1 − t)^{n−j}, n = a + b − 1.
pub fn beta_cdf_poly(a: u32, b: u32) -> Poly {
    let n = a + b - 1;
    let mut coeffs = vec![0.0; n as usize + 1];
    for j in a..=n {
        let c = choose(n, j);
        // (1 − t)^{n−j} = Σ_i C(n−j, i) (−t)^i
        for i in 0..=(n - j) {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[(j + i) as usize] += c * choose(n - j, i) * sign;
        }
    }
    Poly(coeffs)
}

/// E max(Beta(a1, b1), Beta(a2, b2)) = 1 − ∫ F₁F₂.
pub fn exact_e_max(a1: u32, b1: u32, a2: u32, b2: u32) -> f64 {
    1.0 - beta_cdf_poly(a1, b1)
        .mul(&beta_cdf_poly(a2, b2))
        .integral(0.0, 1.0)
}

/// E (θ − c)₊ for θ ~ Beta(a, b): ∫_c^1 (1 − F).
pub fn exact_excess(a: u32, b: u32, c: f64) -> f64 {
    let f = beta_cdf_poly(a, b);
    (1.0 - c) - f.integral(c, 1.0)
}

/// Minimizer and minimum of a unimodal function on [lo, hi].
pub fn golden_section<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
        if b - a < 1e-15 {
            break;
        }
    }
    let mut best = (0.5 * (a + b), f(0.5 * (a + b)));
    for x in [lo, hi] {
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

/// Brute-force squared-regret Bellman solver on the lattice of integer Beta
/// priors truncated at `m_bar`: solves for V itself, then reads off the
/// benefits V′ₖ = V − E[V after pulling k].
pub struct BruteForce {
    prior: [u32; 4],
    limits: [u32; 2],
    values: HashMap<[u32; 4], f64>,
}

impl BruteForce {
    pub fn new(prior: [u32; 4], m_bar: u32) -> Self {
        let limits = [m_bar - prior[0] - prior[1], m_bar - prior[2] - prior[3]];
        let mut solver = Self {
            prior,
            limits,
            values: HashMap::new(),
        };
        solver.value([0, 0, 0, 0]);
        solver
    }

    fn params(&self, key: [u32; 4]) -> [u32; 4] {
        [
            self.prior[0] + key[0],
            self.prior[1] + key[1],
            self.prior[2] + key[2],
            self.prior[3] + key[3],
        ]
    }

    fn known(&self, key: [u32; 4]) -> [bool; 2] {
        [
            key[0] + key[1] == self.limits[0],
            key[2] + key[3] == self.limits[1],
        ]
    }

    /// E V after pulling arm k (0 or 1).
    fn expected_next(&mut self, key: [u32; 4], k: usize) -> f64 {
        let p = self.params(key);
        let (a, b) = (p[2 * k] as f64, p[2 * k + 1] as f64);
        let mean = a / (a + b);
        let mut up = key;
        up[2 * k] += 1;
        let mut down = key;
        down[2 * k + 1] += 1;
        mean * self.value(up) + (1.0 - mean) * self.value(down)
    }

    pub fn value(&mut self, key: [u32; 4]) -> f64 {
        if let Some(&v) = self.values.get(&key) {
            return v;
        }
        let p = self.params(key);
        let means = [
            p[0] as f64 / (p[0] + p[1]) as f64,
            p[2] as f64 / (p[2] + p[3]) as f64,
        ];
        let v = match self.known(key) {
            [true, true] => 0.0,
            [false, true] | [true, false] => {
                // u: the unknown arm, c: the known arm's value
                let u = if self.known(key)[0] { 1 } else { 0 };
                let c = means[1 - u];
                let e_max = c + exact_excess(p[2 * u], p[2 * u + 1], c);
                let next = self.expected_next(key, u);
                // pulling the known arm changes nothing, so
                // V = E V(next) + min_q r(q)² / q
                let r = |q: f64| e_max - q * means[u] - (1.0 - q) * c;
                next + golden_section(|q| r(q).powi(2) / q, 1e-12, 1.0).1
            }
            [false, false] => {
                let e_max = exact_e_max(p[0], p[1], p[2], p[3]);
                let n1 = self.expected_next(key, 0);
                let n2 = self.expected_next(key, 1);
                let h = |q: f64| {
                    (e_max - q * means[0] - (1.0 - q) * means[1]).powi(2) + q * n1 + (1.0 - q) * n2
                };
                golden_section(h, 0.0, 1.0).1
            }
        };
        self.values.insert(key, v);
        v
    }

    /// (V′₁, V′₂) at `key`.
    pub fn benefits(&mut self, key: [u32; 4]) -> (f64, f64) {
        let v = self.value(key);
        let known = self.known(key);
        let b1 = if known[0] {
            0.0
        } else {
            v - self.expected_next(key, 0)
        };
        let b2 = if known[1] {
            0.0
        } else {
            v - self.expected_next(key, 1)
        };
        (b1, b2)
    }

    /// Optimal q₁ at an interior key, from the Bellman objective in V. The
    /// objective is quadratic in q, so three evaluations fix it exactly.
    pub fn policy_q1(&mut self, key: [u32; 4]) -> f64 {
        let p = self.params(key);
        let e_max = exact_e_max(p[0], p[1], p[2], p[3]);
        let m1 = p[0] as f64 / (p[0] + p[1]) as f64;
        let m2 = p[2] as f64 / (p[2] + p[3]) as f64;
        let n1 = self.expected_next(key, 0);
        let n2 = self.expected_next(key, 1);
        let h = |q: f64| (e_max - q * m1 - (1.0 - q) * m2).powi(2) + q * n1 + (1.0 - q) * n2;
        let (h0, hm, h1) = (h(0.0), h(0.5), h(1.0));
        // h(q) = a q² + b q + h0
        let a = 2.0 * (h0 - 2.0 * hm + h1);
        let b = h1 - h0 - a;
        if a > 0.0 {
            (-b / (2.0 * a)).clamp(0.0, 1.0)
        } else if h1 < h0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn limits(&self) -> [u32; 2] {
        self.limits
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// I_x(a, b) for integer a, b ≥ 1 as a binomial tail:
/// P(at least a successes in a + b − 1 trials with success probability x).
pub fn beta_cdf_int(x: f64, a: u32, b: u32) -> f64 {
    let n = a + b - 1;
    (a..=n)
        .map(|j| choose(n, j) * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32))
        .sum()
}

/// Beta(a, b) density for integer a, b ≥ 1; 1/B(a, b) = (a + b − 1) C(a + b − 2, a − 1).
pub fn beta_pdf_int(x: f64, a: u32, b: u32) -> f64 {
    (a + b - 1) as f64
        * choose(a + b - 2, a - 1)
        * x.powi(a as i32 - 1)
        * (1.0 - x).powi(b as i32 - 1)
}

/// Composite 5-point Gauss–Legendre rule on `panels` equal panels.
pub fn gauss_legendre_5<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (hi - lo) / panels as f64;
    (0..panels)
        .map(|i| {
            let mid = lo + (i as f64 + 0.5) * h;
            NODES
                .iter()
                .zip(WEIGHTS)
                .map(|(x, w)| w * f(mid + 0.5 * h * x))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

/// (P(θ₁ > θ₂), E(θ₁ − θ₂)₊) for independent integer-parameter Betas:
/// E(θ₁ − θ₂)₊ = ∫ f₁(x) (x F₂(x) − E θ₂ · I_x(a₂ + 1, b₂)) dx.
pub fn beta_gap_oracle(a1: u32, b1: u32, a2: u32, b2: u32) -> (f64, f64) {
    let m2 = a2 as f64 / (a2 + b2) as f64;
    let p = gauss_legendre_5(
        |x| beta_pdf_int(x, a1, b1) * beta_cdf_int(x, a2, b2),
        0.0,
        1.0,
        400,
    );
    let plus = gauss_legendre_5(
        |x| {
            beta_pdf_int(x, a1, b1)
                * (x * beta_cdf_int(x, a2, b2) - m2 * beta_cdf_int(x, a2 + 1, b2))
        },
        0.0,
        1.0,
        400,
    );
    (p, plus)
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Root of x Φ(x) + φ(x) + x by bisection on [−1, 0].
pub fn phase_root_oracle() -> f64 {
    let f = |x: f64| x * std_normal_cdf(x) + std_normal_pdf(x) + x;
    let (mut lo, mut hi) = (-1.0_f64, 0.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
