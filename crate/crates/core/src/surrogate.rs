//! Per-round convergence surrogate and the finite-horizon loss bound.
//!
//! `r(q, e; H)` couples two effects of scheduling: the data left out by
//! unselected users (first term) and the receiver-noise amplification caused
//! by the weakest selected user (second term). The training-loss gap after
//! `T` rounds is bounded by a recursion whose contraction factor grows with
//! `r`, so every round minimizes `r`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::linalg::inner;
use crate::ota::OtaConfig;
use crate::Real;

/// Constants of the loss-gap recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BoundConstants<T: Real> {
    /// Strong convexity `μ ≥ 0`.
    pub mu: T,
    /// Smoothness `L > 0`.
    pub lipschitz: T,
    pub alpha1: T,
    pub alpha2: T,
}

impl<T: Real> Default for BoundConstants<T> {
    fn default() -> Self {
        Self {
            mu: T::one(),
            lipschitz: T::lit(10.0),
            alpha1: T::one(),
            alpha2: T::one(),
        }
    }
}

/// Relaxed per-user participation values and their binary projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SelectionVector<T: Real> {
    pub relaxed: Vec<T>,
    pub binary: Vec<bool>,
}

impl<T: Real> SelectionVector<T> {
    pub fn from_binary(binary: Vec<bool>) -> Self {
        let relaxed = binary.iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
        Self { relaxed, binary }
    }

    /// Thresholds relaxed values (clamped to `[0, 1]`) at one half.
    pub fn from_relaxed(relaxed: Vec<T>) -> Self {
        let half = T::lit(0.5);
        let relaxed: Vec<T> = relaxed.into_iter().map(|x| x.max(T::zero()).min(T::one())).collect();
        let binary = relaxed.iter().map(|&x| x >= half).collect();
        Self { relaxed, binary }
    }

    pub fn count(&self) -> usize {
        self.binary.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        selected_indices(&self.binary)
    }
}

pub fn selected_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter_map(|(u, &b)| b.then_some(u)).collect()
}

/// `|q^H h_u|²` for every user.
pub fn effective_gains<T: Real>(q: &[Complex<T>], channels: &ChannelSet<T>) -> Vec<T> {
    channels.vectors.iter().map(|h| inner(q, h).norm_sqr()).collect()
}

/// Data-loss term `4/U² (Σ (1-e_u) S_u)²`.
pub fn exclusion_term<T: Real>(selection: &[bool], sample_counts: &[usize]) -> T {
    let users = T::from_count(selection.len());
    let missing = selection
        .iter()
        .zip(sample_counts)
        .filter(|(&e, _)| !e)
        .fold(T::zero(), |acc, (_, &s)| acc + T::from_count(s));
    T::lit(4.0) / (users * users) * missing * missing
}

/// Noise term `σ²/(P_a (Σ e_u S_u)²) · max_u e_u S_u²/g_u` from precomputed
/// gains `g_u = |q^H h_u|²`. `+∞` for an empty selection or a zero gain.
pub fn noise_term_from_gains<T: Real>(
    selection: &[bool],
    gains: &[T],
    sample_counts: &[usize],
    cfg: &OtaConfig<T>,
) -> T {
    let mut mass = T::zero();
    let mut worst = T::zero();
    for u in 0..selection.len() {
        if !selection[u] {
            continue;
        }
        let s = T::from_count(sample_counts[u]);
        mass += s;
        if !(gains[u] > T::zero()) {
            return T::infinity();
        }
        worst = worst.max(s * s / gains[u]);
    }
    if !(mass > T::zero()) {
        return T::infinity();
    }
    cfg.noise_power / (cfg.max_power * mass * mass) * worst
}

pub fn objective_from_gains<T: Real>(
    selection: &[bool],
    gains: &[T],
    sample_counts: &[usize],
    cfg: &OtaConfig<T>,
) -> T {
    let noise = noise_term_from_gains(selection, gains, sample_counts, cfg);
    if noise == T::infinity() {
        return noise;
    }
    exclusion_term::<T>(selection, sample_counts) + noise
}

/// The per-round surrogate `r(q, e; H)`.
///
/// Returns `+∞` when nobody is selected or a selected user has zero
/// effective gain, so candidates can be ranked without error handling.
pub fn objective_r<T: Real>(
    q: &[Complex<T>],
    selection: &[bool],
    channels: &ChannelSet<T>,
    sample_counts: &[usize],
    cfg: &OtaConfig<T>,
) -> T {
    let gains = effective_gains(q, channels);
    objective_from_gains(selection, &gains, sample_counts, cfg)
}

/// Second term of `r` alone (the aggregation-noise level).
pub fn noise_term<T: Real>(
    q: &[Complex<T>],
    selection: &[bool],
    channels: &ChannelSet<T>,
    sample_counts: &[usize],
    cfg: &OtaConfig<T>,
) -> T {
    let gains = effective_gains(q, channels);
    noise_term_from_gains(selection, &gains, sample_counts, cfg)
}

/// `φ = 1 - (μ/L)(1 - 2 α₂ r)`.
pub fn contraction_phi<T: Real>(r: T, k: &BoundConstants<T>) -> T {
    T::one() - k.mu / k.lipschitz * (T::one() - T::lit(2.0) * k.alpha2 * r)
}

/// Loss-gap bound after `T = r_sequence.len()` rounds:
/// `(Π φ_t) gap₀ + (α₁/L)(Σ_{t<T-1} (Π_{τ>t} φ_τ) r_t + r_{T-1})`.
pub fn bound_after_t<T: Real>(r_sequence: &[T], initial_gap: T, k: &BoundConstants<T>) -> T {
    let Some((&last, head)) = r_sequence.split_last() else {
        return initial_gap;
    };
    let phis: Vec<T> = r_sequence.iter().map(|&r| contraction_phi(r, k)).collect();
    let total: T = phis.iter().fold(T::one(), |acc, &p| acc * p);
    // Walk backwards keeping the suffix product Π_{τ>t} φ_τ.
    let mut suffix = T::one();
    let mut weighted = T::zero();
    for t in (0..head.len()).rev() {
        suffix *= phis[t + 1];
        weighted += suffix * head[t];
    }
    total * initial_gap + k.alpha1 / k.lipschitz * (weighted + last)
}
