//! Benefit function V′ for the two-armed Bernoulli bandit under squared
//! regret, computed by backward recursion over a lattice truncated at M̄.
//!
//! V′ₖ at a state is the drop in optimal future squared regret from pulling
//! arm k once. An arm with α + β = M̄ is treated as known at its posterior
//! mean. With Eₖ = αₖ/(αₖ+βₖ), Ēₖ = 1 − Eₖ and E = E max(θ₁, θ₂):
//!
//! ```text
//! d   = E₂ V′₁(α₂+1) + Ē₂ V′₁(β₂+1) − E₁ V′₂(α₁+1) − Ē₁ V′₂(β₁+1)
//! V′₂ = min_p (E − p E₁ − (1−p) E₂)² − p d
//! V′₁ = V′₂ + d
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::numerics::{gauss_legendre_grid, BetaDist};
use crate::policies::one_armed_benefit;
use crate::posterior::{gap_stats, ArmBelief, BeliefState};

const MAGIC: &[u8; 8] = b"BNFTABLE";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 4 * 8 + 8;
const RECORD_LEN: usize = 4 * 2 + 2 * 8;
/// Panels of the 10-point Gauss–Legendre grid used for E max.
const GRID_PANELS: usize = 64;
/// Negative benefits down to this size are rounding noise.
const CLAMP_TOL: f64 = 1e-9;
/// Slack when deciding how many unit increments fit under M̄.
const LATTICE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("m_bar = {m_bar} is too small for prior {prior:?}; need at least {needed}")]
    MBarTooSmall {
        m_bar: u32,
        prior: [f64; 4],
        needed: f64,
    },
    #[error("invalid prior {0:?}: Beta parameters must be positive and finite")]
    InvalidPrior([f64; 4]),
    #[error("benefit {value} at {key:?} is negative beyond rounding")]
    NegativeBenefit { key: [u16; 4], value: f64 },
    #[error("state {0} is not on the table's lattice")]
    OffLattice(String),
    #[error("regularizer undefined for equal posterior means")]
    EqualMeans,
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed table file: {0}")]
    Format(String),
    #[error("table file does not match the request: {0}")]
    Mismatch(String),
}

/// Lattice of (benefit of pulling arm 1, benefit of pulling arm 2).
#[derive(Debug, Clone, PartialEq)]
pub struct BenefitTable {
    m_bar: u32,
    prior: [f64; 4],
    limits: [u16; 2],
    entries: Vec<(f64, f64)>,
}

/// Number of (s, f) pairs with s + f ≤ limit.
fn triangle_len(limit: u16) -> usize {
    let l = limit as usize;
    (l + 1) * (l + 2) / 2
}

fn triangle_index(s: u16, f: u16) -> usize {
    let n = (s + f) as usize;
    n * (n + 1) / 2 + s as usize
}

/// All (s, f) pairs with s + f ≤ limit, in index order.
fn triangle_keys(limit: u16) -> impl Iterator<Item = (u16, u16)> {
    (0..=limit).flat_map(|n| (0..=n).map(move |s| (s, n - s)))
}

fn lattice_limit(m_bar: u32, a: f64, b: f64) -> u16 {
    (m_bar as f64 - a - b + LATTICE_EPS).floor() as u16
}

fn clamp_benefit(value: f64, key: [u16; 4]) -> Result<f64, TableError> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -CLAMP_TOL {
        Ok(0.0)
    } else {
        Err(TableError::NegativeBenefit { key, value })
    }
}

/// Minimum over p ∈ [0, 1] of (gap_max − p·gap)² − p·d, where
/// gap_max = E max − E₂ and gap = E₁ − E₂.
fn min_benefit_objective(gap_max: f64, gap: f64, d: f64) -> f64 {
    let h = |p: f64| (gap_max - p * gap).powi(2) - p * d;
    if gap == 0.0 {
        return h(0.0).min(h(1.0));
    }
    let p = (gap_max / gap + d / (2.0 * gap * gap)).clamp(0.0, 1.0);
    h(p)
}

impl BenefitTable {
    /// Backward recursion from the truncation boundary.
    pub fn build(prior: [f64; 4], m_bar: u32) -> Result<Self, TableError> {
        if !prior.iter().all(|p| p.is_finite() && *p > 0.0) {
            return Err(TableError::InvalidPrior(prior));
        }
        let [a1, b1, a2, b2] = prior;
        let needed = (a1 + b1).max(a2 + b2) + 2.0;
        if m_bar < 4 || (m_bar as f64) < needed || m_bar as f64 - needed > u16::MAX as f64 {
            return Err(TableError::MBarTooSmall {
                m_bar,
                prior,
                needed: needed.max(4.0),
            });
        }
        let limits = [lattice_limit(m_bar, a1, b1), lattice_limit(m_bar, a2, b2)];
        let (nodes, weights) = gauss_legendre_grid(GRID_PANELS);
        let cdf_rows = |a: f64, b: f64, limit: u16| -> Vec<Vec<f64>> {
            triangle_keys(limit)
                .map(|(s, f)| {
                    let dist = BetaDist::new(a + s as f64, b + f as f64).expect("positive");
                    nodes
                        .iter()
                        .zip(&weights)
                        .map(|(&t, &w)| w * dist.cdf(t))
                        .collect()
                })
                .collect()
        };
        // arm 1 rows carry the quadrature weights; arm 2 rows are plain CDFs
        let weighted1 = cdf_rows(a1, b1, limits[0]);
        let cdf2: Vec<Vec<f64>> = triangle_keys(limits[1])
            .map(|(s, f)| {
                let dist = BetaDist::new(a2 + s as f64, b2 + f as f64).expect("positive");
                nodes.iter().map(|&t| dist.cdf(t)).collect()
            })
            .collect();

        let width2 = triangle_len(limits[1]);
        let mut entries = vec![(0.0, 0.0); triangle_len(limits[0]) * width2];
        let at = |s1: u16, f1: u16, s2: u16, f2: u16| {
            triangle_index(s1, f1) * width2 + triangle_index(s2, f2)
        };
        let mean = |a: f64, b: f64, s: u16, f: u16| (a + s as f64) / (a + b + (s + f) as f64);

        for n1 in (0..=limits[0]).rev() {
            for n2 in (0..=limits[1]).rev() {
                let known1 = n1 == limits[0];
                let known2 = n2 == limits[1];
                for s1 in 0..=n1 {
                    let f1 = n1 - s1;
                    for s2 in 0..=n2 {
                        let f2 = n2 - s2;
                        let key = [s1, f1, s2, f2];
                        let e1 = mean(a1, b1, s1, f1);
                        let e2 = mean(a2, b2, s2, f2);
                        let pair = match (known1, known2) {
                            (true, true) => (0.0, 0.0),
                            (true, false) => {
                                let state = BeliefState::new(
                                    ArmBelief::Point { value: e1 },
                                    ArmBelief::Beta {
                                        alpha: a2 + s2 as f64,
                                        beta: b2 + f2 as f64,
                                    },
                                    0.0,
                                )
                                .expect("valid lattice state");
                                let g = gap_stats(&state);
                                // E(θ₂ − c)₊ = E max − c and E θ₂ − c = −E Δ
                                let value = one_armed_benefit(g.e_max - e1, -g.e_gap);
                                (0.0, clamp_benefit(value, key)?)
                            }
                            (false, true) => {
                                let state = BeliefState::new(
                                    ArmBelief::Beta {
                                        alpha: a1 + s1 as f64,
                                        beta: b1 + f1 as f64,
                                    },
                                    ArmBelief::Point { value: e2 },
                                    0.0,
                                )
                                .expect("valid lattice state");
                                let g = gap_stats(&state);
                                let value = one_armed_benefit(g.e_gap_plus, g.e_gap);
                                (clamp_benefit(value, key)?, 0.0)
                            }
                            (false, false) => {
                                let row1 = &weighted1[triangle_index(s1, f1)];
                                let row2 = &cdf2[triangle_index(s2, f2)];
                                let e_max =
                                    1.0 - row1.iter().zip(row2).map(|(x, y)| x * y).sum::<f64>();
                                let d = (e2 * entries[at(s1, f1, s2 + 1, f2)].0
                                    + (1.0 - e2) * entries[at(s1, f1, s2, f2 + 1)].0)
                                    - (e1 * entries[at(s1 + 1, f1, s2, f2)].1
                                        + (1.0 - e1) * entries[at(s1, f1 + 1, s2, f2)].1);
                                let benefit2 = min_benefit_objective(e_max - e2, e1 - e2, d);
                                (
                                    clamp_benefit(benefit2 + d, key)?,
                                    clamp_benefit(benefit2, key)?,
                                )
                            }
                        };
                        entries[at(s1, f1, s2, f2)] = pair;
                    }
                }
            }
        }
        Ok(Self {
            m_bar,
            prior,
            limits,
            entries,
        })
    }

    pub fn m_bar(&self) -> u32 {
        self.m_bar
    }

    pub fn prior(&self) -> [f64; 4] {
        self.prior
    }

    /// Largest observation count per arm; an arm at its limit is known.
    pub fn limits(&self) -> [u16; 2] {
        self.limits
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn index(&self, key: [u16; 4]) -> Option<usize> {
        let [s1, f1, s2, f2] = key;
        if s1 as u32 + f1 as u32 > self.limits[0] as u32
            || s2 as u32 + f2 as u32 > self.limits[1] as u32
        {
            return None;
        }
        Some(triangle_index(s1, f1) * triangle_len(self.limits[1]) + triangle_index(s2, f2))
    }

    /// Benefits at the lattice key (s1, f1, s2, f2) of observations added
    /// to the prior.
    pub fn get(&self, key: [u16; 4]) -> Option<(f64, f64)> {
        self.index(key).map(|i| self.entries[i])
    }

    /// Lattice key of a Beta × Beta state, if it lies on the lattice.
    pub fn key_of(&self, state: &BeliefState) -> Result<[u16; 4], TableError> {
        let off = || TableError::OffLattice(state.to_string());
        let (
            ArmBelief::Beta {
                alpha: x1,
                beta: y1,
            },
            ArmBelief::Beta {
                alpha: x2,
                beta: y2,
            },
        ) = (*state.arm1(), *state.arm2())
        else {
            return Err(off());
        };
        let [a1, b1, a2, b2] = self.prior;
        let mut key = [0u16; 4];
        for (slot, delta) in key.iter_mut().zip([x1 - a1, y1 - b1, x2 - a2, y2 - b2]) {
            let rounded = delta.round();
            if (delta - rounded).abs() > LATTICE_EPS || rounded < 0.0 || rounded > u16::MAX as f64 {
                return Err(off());
            }
            *slot = rounded as u16;
        }
        self.index(key).ok_or_else(off)?;
        Ok(key)
    }

    /// (benefit of pulling arm 1, benefit of pulling arm 2) at `state`.
    pub fn query(&self, state: &BeliefState) -> Result<(f64, f64), TableError> {
        let key = self.key_of(state)?;
        Ok(self.get(key).expect("key validated"))
    }

    /// Entries in canonical order: arm 1 key outer, arm 2 key inner, each by
    /// observation count and then successes.
    pub fn iter(&self) -> impl Iterator<Item = ([u16; 4], (f64, f64))> + '_ {
        let limit2 = self.limits[1];
        triangle_keys(self.limits[0])
            .flat_map(move |(s1, f1)| triangle_keys(limit2).map(move |(s2, f2)| [s1, f1, s2, f2]))
            .zip(self.entries.iter().copied())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * self.entries.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.m_bar.to_le_bytes());
        for p in self.prior {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (key, (v1, v2)) in self.iter() {
            for k in key {
                out.extend_from_slice(&k.to_le_bytes());
            }
            out.extend_from_slice(&v1.to_le_bytes());
            out.extend_from_slice(&v2.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TableError> {
        let format = |msg: &str| TableError::Format(msg.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(format("file shorter than the header"));
        }
        if &bytes[..8] != MAGIC {
            return Err(format("bad magic"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let version = u32_at(8);
        if version != VERSION {
            return Err(TableError::Format(format!("unsupported version {version}")));
        }
        let m_bar = u32_at(12);
        let prior = [f64_at(16), f64_at(24), f64_at(32), f64_at(40)];
        let count = u64::from_le_bytes(bytes[48..56].try_into().expect("8 bytes"));
        if !prior.iter().all(|p| p.is_finite() && *p > 0.0) {
            return Err(TableError::InvalidPrior(prior));
        }
        let needed = (prior[0] + prior[1]).max(prior[2] + prior[3]) + 2.0;
        if m_bar < 4 || (m_bar as f64) < needed || m_bar as f64 - needed > u16::MAX as f64 {
            return Err(format("m_bar inconsistent with prior"));
        }
        let limits = [
            lattice_limit(m_bar, prior[0], prior[1]),
            lattice_limit(m_bar, prior[2], prior[3]),
        ];
        let expected = triangle_len(limits[0]) * triangle_len(limits[1]);
        if count != expected as u64 {
            return Err(TableError::Format(format!(
                "entry count {count} does not match lattice size {expected}"
            )));
        }
        if bytes.len() != HEADER_LEN + expected * RECORD_LEN {
            return Err(format("file length does not match entry count"));
        }
        let mut table = Self {
            m_bar,
            prior,
            limits,
            entries: vec![(0.0, 0.0); expected],
        };
        let keys: Vec<[u16; 4]> = table.iter().map(|(k, _)| k).collect();
        for (i, want) in keys.into_iter().enumerate() {
            let rec = &bytes[HEADER_LEN + i * RECORD_LEN..HEADER_LEN + (i + 1) * RECORD_LEN];
            let key: [u16; 4] =
                [0, 1, 2, 3].map(|j| u16::from_le_bytes([rec[2 * j], rec[2 * j + 1]]));
            if key != want {
                return Err(TableError::Format(format!(
                    "record {i} has key {key:?}, expected {want:?}"
                )));
            }
            let v1 = f64::from_le_bytes(rec[8..16].try_into().expect("8 bytes"));
            let v2 = f64::from_le_bytes(rec[16..24].try_into().expect("8 bytes"));
            if !(v1.is_finite() && v2.is_finite() && v1 >= 0.0 && v2 >= 0.0) {
                return Err(TableError::Format(format!(
                    "record {i} has invalid benefits"
                )));
            }
            table.entries[i] = (v1, v2);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), TableError> {
        let io = |e: std::io::Error| TableError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut file = fs::File::create(path).map_err(io)?;
        file.write_all(&self.to_bytes()).map_err(io)?;
        file.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        let bytes = fs::read(path).map_err(|e| TableError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }

    /// Load and check that the file was built for `prior` and `m_bar`.
    pub fn load_for(path: &Path, prior: [f64; 4], m_bar: u32) -> Result<Self, TableError> {
        let table = Self::load(path)?;
        if table.m_bar != m_bar {
            return Err(TableError::Mismatch(format!(
                "file has m_bar {}, expected {m_bar}",
                table.m_bar
            )));
        }
        if table.prior != prior {
            return Err(TableError::Mismatch(format!(
                "file has prior {:?}, expected {prior:?}",
                table.prior
            )));
        }
        Ok(table)
    }
}

/// Regularizer of the truncated squared-regret policy:
/// (V′₂ − V′₁) / (E θ₁ − E θ₂).
pub fn regularizer_mbar(table: &BenefitTable, state: &BeliefState) -> Result<f64, TableError> {
    let (b1, b2) = table.query(state)?;
    let (m1, m2) = state.means();
    if m1 == m2 {
        return Err(TableError::EqualMeans);
    }
    Ok((b2 - b1) / (m1 - m2))
}
