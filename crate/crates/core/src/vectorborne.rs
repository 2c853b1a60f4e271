//! Patch-level vector SEI dynamics coupled to the human population through
//! bites, with temperature-dependent incubation and zone-level vector
//! control.
//!
//! Rates are per day; steps take their length in days.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VectorParams {
    pub psi_v: f64,
    pub mu_v: f64,
    pub sigma_v: f64,
    pub sigma_h: f64,
    pub beta_vh: f64,
    pub beta_hv: f64,
}

impl Default for VectorParams {
    fn default() -> Self {
        Self {
            psi_v: 0.3,
            mu_v: 1.0 / 14.0,
            sigma_v: 0.5,
            sigma_h: 10.0,
            beta_vh: 0.33,
            beta_hv: 0.33,
        }
    }
}

impl VectorParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.psi_v, self.mu_v, self.sigma_v, self.sigma_h, self.beta_vh, self.beta_hv];
        if all.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || self.beta_vh > 1.0 || self.beta_hv > 1.0 {
            return Err(Error::config("scenario", "vector parameters must be non-negative with β ≤ 1"));
        }
        if self.psi_v <= self.mu_v {
            log::warn!("ψ_v ≤ μ_v: vector populations will die out");
        }
        Ok(())
    }
}

/// Emergence `h = N (ψ − (ψ − μ) N / K)`.
pub fn vector_birth(n_v: f64, k_v: f64, p: &VectorParams) -> f64 {
    if k_v <= 0.0 {
        return 0.0;
    }
    n_v * (p.psi_v - (p.psi_v - p.mu_v) * n_v / k_v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bites {
    pub total: f64,
    pub per_vector: f64,
    pub per_human: f64,
}

pub fn total_bites(n_v: f64, n_h: f64, p: &VectorParams) -> Bites {
    let a = p.sigma_v * n_v;
    let b = p.sigma_h * n_h;
    let total = if a + b > 0.0 { a * b / (a + b) } else { 0.0 };
    Bites {
        total,
        per_vector: if n_v > 0.0 { total / n_v } else { 0.0 },
        per_human: if n_h > 0.0 { total / n_h } else { 0.0 },
    }
}

/// `λ_v = b_v β_vh I_h / N_h`.
pub fn vector_force(b_v: f64, i_h: f64, n_h: f64, beta_vh: f64) -> f64 {
    if n_h > 0.0 {
        b_v * beta_vh * i_h / n_h
    } else {
        0.0
    }
}

/// `λ_h = b_h β_hv I_v / N_v`.
pub fn human_force(b_h: f64, i_v: f64, n_v: f64, beta_hv: f64) -> f64 {
    if n_v > 0.0 {
        b_h * beta_hv * i_v / n_v
    } else {
        0.0
    }
}

/// `1 − e^{−λ Δt}`, with `λ` and `Δt` in matching units.
pub fn infection_probability(lambda: f64, dt: f64) -> f64 {
    -(-lambda * dt).exp_m1()
}

/// Extrinsic incubation in days from a uniform `u`, and whether the
/// temperature was beyond the hottest defined band.
pub fn incubation_days(temperature_c: f64, u: f64) -> (f64, bool) {
    let (lo, hi, flagged) = if temperature_c < 21.0 {
        (10.0, 25.0, false)
    } else if temperature_c < 26.0 {
        (7.0, 10.0, false)
    } else if temperature_c < 31.0 {
        (4.0, 7.0, false)
    } else {
        (4.0, 7.0, true)
    };
    (lo + u * (hi - lo), flagged)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatchState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub k_v: f64,
    /// Exposed → infectious rate per day.
    pub nu: f64,
}

impl PatchState {
    pub fn n(&self) -> f64 {
        self.s + self.e + self.i
    }

    pub fn scale(&mut self, factor: f64) {
        self.s *= factor;
        self.e *= factor;
        self.i *= factor;
    }

    pub fn derivatives(&self, i_h: f64, n_h: f64, p: &VectorParams) -> [f64; 3] {
        let n = self.n();
        let h = vector_birth(n, self.k_v, p);
        let lambda = vector_force(total_bites(n, n_h, p).per_vector, i_h, n_h, p.beta_vh);
        [
            h - lambda * self.s - p.mu_v * self.s,
            lambda * self.s - self.nu * self.e - p.mu_v * self.e,
            self.nu * self.e - p.mu_v * self.i,
        ]
    }

    /// One forward-Euler step of `dt` days; returns whether any compartment
    /// had to be clamped at zero.
    pub fn step(&mut self, i_h: f64, n_h: f64, p: &VectorParams, dt: f64) -> bool {
        let d = self.derivatives(i_h, n_h, p);
        let mut next = [self.s + d[0] * dt, self.e + d[1] * dt, self.i + d[2] * dt];
        let clamped = next.iter().any(|&x| x < 0.0);
        if clamped {
            log::warn!("negative vector count clamped to zero: {next:?}");
            for x in next.iter_mut() {
                *x = x.max(0.0);
            }
        }
        [self.s, self.e, self.i] = next;
        clamped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VectorControlPolicy {
    pub every_days: u32,
    /// Weekly exposures in a zone must exceed this.
    pub threshold: u32,
    pub reduction_pct: f64,
}

impl Default for VectorControlPolicy {
    fn default() -> Self {
        Self {
            every_days: 7,
            threshold: 2,
            reduction_pct: 75.0,
        }
    }
}

impl VectorControlPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.every_days == 0 || !(0.0..=100.0).contains(&self.reduction_pct) {
            return Err(Error::config("scenario", "vector control: every_days ≥ 1 and reduction_pct in [0, 100]"));
        }
        Ok(())
    }

    /// Multiplier for the zone's patches, if control triggers.
    pub fn factor(&self, weekly_exposed: u32) -> Option<f64> {
        (weekly_exposed > self.threshold).then(|| 1.0 - self.reduction_pct / 100.0)
    }
}

/// Outbreak seeding around randomly chosen homes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VectorSeeding {
    /// Residential zone the homes are drawn from; any when absent.
    pub zone: Option<String>,
    pub homes: usize,
    pub max_exposed_per_home: usize,
    pub nearest_patches: usize,
    pub max_infected_vectors: u32,
}

impl Default for VectorSeeding {
    fn default() -> Self {
        Self {
            zone: None,
            homes: 6,
            max_exposed_per_home: 5,
            nearest_patches: 9,
            max_infected_vectors: 20,
        }
    }
}
