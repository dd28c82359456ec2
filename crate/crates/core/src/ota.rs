//! Analog over-the-air gradient aggregation.
//!
//! Every selected user normalizes its gradient by `v_u = ‖g_u‖/√D`, scales it
//! by a transmit weight `a_u` and all users transmit simultaneously. The
//! server combines the superposed signal with a unit-norm beamformer `q`,
//! rescales by `1/√η`, keeps the real part and divides by the selected sample
//! mass. Transmit weights phase-align every user's effective channel so that
//! user `u` arrives with amplitude `√η S_u`, and `η` is the largest value that
//! keeps every weight inside the power budget.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::linalg::inner;
use crate::{Error, Real, Result};

/// Floor applied to the gradient normalization factor.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct OtaConfig<T: Real> {
    /// Per-user average transmit power budget `P_a` (W).
    pub max_power: T,
    /// Receiver noise power `σ_n²` per complex dimension (W).
    pub noise_power: T,
    pub wavelength: T,
}

impl<T: Real> OtaConfig<T> {
    pub fn new(max_power: T, noise_power: T, wavelength: T) -> Result<Self> {
        let cfg = Self {
            max_power,
            noise_power,
            wavelength,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// From dBm values, e.g. `P_a = 0 dBm`, `σ² = -20 dBm`.
    pub fn from_dbm(max_power_dbm: T, noise_power_dbm: T, wavelength: T) -> Result<Self> {
        Self::new(dbm_to_watts(max_power_dbm), dbm_to_watts(noise_power_dbm), wavelength)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_power > T::zero()) || !self.max_power.is_finite() {
            return Err(Error::config("max_power must be positive"));
        }
        if !(self.noise_power >= T::zero()) || !self.noise_power.is_finite() {
            return Err(Error::config("noise_power must be non-negative"));
        }
        if !(self.wavelength > T::zero()) {
            return Err(Error::config("wavelength must be positive"));
        }
        Ok(())
    }
}

/// `10^((dBm - 30)/10)` watts; `-∞` maps to zero.
pub fn dbm_to_watts<T: Real>(dbm: T) -> T {
    if dbm == T::neg_infinity() {
        return T::zero();
    }
    T::lit(10.0).powf((dbm - T::lit(30.0)) / T::lit(10.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AggregationOutcome<T: Real> {
    /// De-scaled global gradient estimate (length `D`).
    pub estimate: Vec<T>,
    /// Receive scaling `η > 0`.
    pub eta: T,
    /// Transmit weight `a_u` of each selected user, in selection order.
    pub per_user_weight: Vec<Complex<T>>,
}

/// `v = ‖g‖₂/√D`, floored at [`NORM_FLOOR`].
pub fn normalization_factor<T: Real>(gradient: &[T]) -> T {
    if gradient.is_empty() {
        return T::lit(NORM_FLOOR);
    }
    let norm = gradient.iter().fold(T::zero(), |acc, &g| acc + g * g).sqrt();
    let floor = T::lit(NORM_FLOOR);
    if norm < floor {
        return floor;
    }
    (norm / T::from_count(gradient.len()).sqrt()).max(floor)
}

/// `η = P_a · min_u |q^H h_u|² / (S_u² v_u²)` over the selected users.
/// `sample_counts` and `norms` are indexed by user.
pub fn receive_scaling<T: Real>(
    q: &[Complex<T>],
    channels: &ChannelSet<T>,
    selected: &[usize],
    sample_counts: &[usize],
    norms: &[T],
    cfg: &OtaConfig<T>,
) -> Result<T> {
    if selected.is_empty() {
        return Err(Error::invalid("receive scaling needs a non-empty selection"));
    }
    let mut best = T::infinity();
    for &u in selected {
        let gain = inner(q, &channels.vectors[u]).norm_sqr();
        if !(gain > T::zero()) {
            return Err(Error::DegenerateChannel { user: u });
        }
        let s = T::from_count(sample_counts[u]);
        best = best.min(gain / (s * s * norms[u] * norms[u]));
    }
    Ok(cfg.max_power * best)
}

/// Zero-forcing alignment weight `a_u = √η S_u v_u / (q^H h_u)`.
pub fn transmit_weight<T: Real>(
    q: &[Complex<T>],
    h: &[Complex<T>],
    sample_count: usize,
    norm: T,
    eta: T,
) -> Result<Complex<T>> {
    let effective = inner(q, h);
    if !(effective.norm_sqr() > T::zero()) {
        return Err(Error::DegenerateChannel { user: usize::MAX });
    }
    let amp = eta.sqrt() * T::from_count(sample_count) * norm;
    Ok(Complex::new(amp, T::zero()) / effective)
}

/// Runs one round of analog aggregation.
///
/// `gradients[i]` belongs to user `selected[i]`. Receiver noise is drawn
/// fresh for every gradient component as an `N_T`-dimensional circularly
/// symmetric Gaussian vector with variance `σ²` per complex entry.
pub fn aggregate<T: Real, R: Rng + ?Sized>(
    gradients: &[Vec<T>],
    channels: &ChannelSet<T>,
    q: &[Complex<T>],
    selected: &[usize],
    sample_counts: &[usize],
    cfg: &OtaConfig<T>,
    rng: &mut R,
) -> Result<AggregationOutcome<T>> {
    if gradients.len() != selected.len() {
        return Err(Error::invalid("one gradient per selected user is required"));
    }
    let dim = gradients.first().map_or(0, Vec::len);
    if gradients.iter().any(|g| g.len() != dim) {
        return Err(Error::invalid("gradient lengths differ"));
    }
    let mut norms = vec![T::one(); channels.users()];
    for (g, &u) in gradients.iter().zip(selected) {
        norms[u] = normalization_factor(g);
    }
    let eta = receive_scaling(q, channels, selected, sample_counts, &norms, cfg)?;
    let mut weights = Vec::with_capacity(selected.len());
    // Effective per-user coefficient q^H h_u a_u / v_u multiplying g_u[n].
    let mut coeffs = Vec::with_capacity(selected.len());
    for &u in selected {
        let h = &channels.vectors[u];
        let a =
            transmit_weight(q, h, sample_counts[u], norms[u], eta).map_err(|_| Error::DegenerateChannel { user: u })?;
        coeffs.push(inner(q, h) * a / norms[u]);
        weights.push(a);
    }
    let mass: T = selected
        .iter()
        .fold(T::zero(), |acc, &u| acc + T::from_count(sample_counts[u]));
    let inv_sqrt_eta = T::one() / eta.sqrt();
    let noise_sd = (cfg.noise_power / T::lit(2.0)).sqrt();
    let noisy = cfg.noise_power > T::zero();
    let n_ant = q.len();
    let mut noise = vec![Complex::new(T::zero(), T::zero()); n_ant];
    let estimate = (0..dim)
        .map(|n| {
            let mut combined = Complex::new(T::zero(), T::zero());
            for (coef, g) in coeffs.iter().zip(gradients) {
                combined += coef * g[n];
            }
            if noisy {
                for s in noise.iter_mut() {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    *s = Complex::new(T::lit(re) * noise_sd, T::lit(im) * noise_sd);
                }
                combined += inner(q, &noise);
            }
            (combined * inv_sqrt_eta).re / mass
        })
        .collect();
    Ok(AggregationOutcome {
        estimate,
        eta,
        per_user_weight: weights,
    })
}

/// Variance of each estimate component caused by receiver noise,
/// `σ²/(2η(ΣS)²)` for a unit-norm beamformer.
pub fn estimator_noise_variance<T: Real>(noise_power: T, eta: T, mass: T) -> T {
    noise_power / (T::lit(2.0) * eta * mass * mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{AntennaLayout, ChannelMode, UserLink};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn channels(vectors: Vec<Vec<Complex<f64>>>) -> ChannelSet<f64> {
        let n = vectors[0].len();
        let links = vectors
            .iter()
            .map(|_| UserLink {
                distance_m: 10.0,
                aoa_cos: 0.0,
                path_gain: Complex::new(1.0, 0.0),
                sample_count: 1,
            })
            .collect();
        ChannelSet {
            vectors,
            wavelength: 1.0,
            mode: ChannelMode::RayleighFpa,
            links,
            layout: AntennaLayout::spread(n, 0.0, 8.0, 0.5).unwrap(),
        }
    }

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn cfg(p: f64, s2: f64) -> OtaConfig<f64> {
        OtaConfig::new(p, s2, 1.0).unwrap()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalization_factor(&[1.0f64; 4]), 1.0);
        assert_eq!(normalization_factor(&[0.0f64; 7]), 1e-12);
        assert!((normalization_factor(&[3.0f64, 4.0]) - 5.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn receive_scaling_examples() {
        let ch = channels(vec![vec![c(1.0, 0.0)]]);
        let eta = receive_scaling(&[c(1.0, 0.0)], &ch, &[0], &[1], &[1.0], &cfg(1.0, 0.0)).unwrap();
        assert!((eta - 1.0).abs() < 1e-15);

        // |q^H h|²/(S² v²) = {4, 1}
        let ch = channels(vec![vec![c(2.0, 0.0)], vec![c(0.0, 1.0)]]);
        let eta = receive_scaling(&[c(1.0, 0.0)], &ch, &[0, 1], &[1, 1], &[1.0, 1.0], &cfg(2.0, 0.0)).unwrap();
        assert!((eta - 2.0).abs() < 1e-15);

        assert!(receive_scaling(&[c(1.0, 0.0)], &ch, &[], &[1, 1], &[1.0, 1.0], &cfg(2.0, 0.0)).is_err());

        let dead = channels(vec![vec![c(0.0, 0.0)]]);
        assert!(matches!(
            receive_scaling(&[c(1.0, 0.0)], &dead, &[0], &[1], &[1.0], &cfg(1.0, 0.0)),
            Err(Error::DegenerateChannel { user: 0 })
        ));
    }

    #[test]
    fn transmit_weight_examples() {
        let q = [c(1.0, 0.0)];
        let a = transmit_weight(&q, &[c(1.0, 0.0)], 1, 1.0, 1.0).unwrap();
        assert!((a - c(1.0, 0.0)).norm() < 1e-15);
        let a = transmit_weight(&q, &[c(0.0, 1.0)], 1, 1.0, 1.0).unwrap();
        assert!((a - c(0.0, -1.0)).norm() < 1e-15);
        assert!(transmit_weight(&q, &[c(0.0, 0.0)], 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn binding_user_transmits_at_full_power() {
        let q = vec![c(0.6, 0.0), c(0.0, 0.8)];
        let ch = channels(vec![vec![c(0.3, 0.1), c(-0.2, 0.5)], vec![c(1.0, -1.0), c(0.4, 0.4)]]);
        let counts = [270, 135];
        let norms = [0.02, 0.05];
        let p = 1e-3;
        let eta = receive_scaling(&q, &ch, &[0, 1], &counts, &norms, &cfg(p, 0.0)).unwrap();
        let powers: Vec<f64> = (0..2)
            .map(|u| {
                transmit_weight(&q, &ch.vectors[u], counts[u], norms[u], eta)
                    .unwrap()
                    .norm_sqr()
            })
            .collect();
        let top = powers.iter().cloned().fold(0.0, f64::max);
        assert!((top - p).abs() <= 1e-12 * p, "{powers:?}");
        assert!(powers.iter().all(|&x| x <= p * (1.0 + 1e-12)));
    }

    #[test]
    fn noiseless_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ch = channels(vec![vec![c(0.3, -0.4), c(1.0, 0.2)], vec![c(-0.7, 0.1), c(0.2, 0.9)]]);
        let q = vec![c(1.0 / 2f64.sqrt(), 0.0), c(0.0, 1.0 / 2f64.sqrt())];
        let g0 = vec![0.5, -1.0, 2.0];
        let g1 = vec![1.5, 3.0, -2.0];
        let out = aggregate(
            std::slice::from_ref(&g0),
            &ch,
            &q,
            &[0],
            &[1, 1],
            &cfg(1.0, 0.0),
            &mut rng,
        )
        .unwrap();
        for (a, b) in out.estimate.iter().zip(&g0) {
            assert!((a - b).abs() <= 1e-10 * b.abs());
        }
        let out = aggregate(
            &[g0.clone(), g1.clone()],
            &ch,
            &q,
            &[0, 1],
            &[1, 1],
            &cfg(1.0, 0.0),
            &mut rng,
        )
        .unwrap();
        for i in 0..3 {
            let mean = 0.5 * (g0[i] + g1[i]);
            assert!((out.estimate[i] - mean).abs() <= 1e-10 * mean.abs().max(1.0));
        }
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ch = channels(vec![vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]]);
        let q = vec![c(1.0, 0.0)];
        assert!(aggregate(
            &[vec![1.0], vec![1.0, 2.0]],
            &ch,
            &q,
            &[0, 1],
            &[1, 1],
            &cfg(1.0, 0.0),
            &mut rng
        )
        .is_err());
        assert!(aggregate(&[vec![1.0]], &ch, &q, &[0, 1], &[1, 1], &cfg(1.0, 0.0), &mut rng).is_err());
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(0.0f64) - 1e-3).abs() < 1e-18);
        assert!((dbm_to_watts(-20.0f64) - 1e-5).abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn noiseless_estimate_is_weighted_mean(
            seed in 0u64..1000,
            users in 1usize..6,
            dim in 1usize..12,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vectors: Vec<Vec<Complex<f64>>> = (0..users)
                .map(|_| (0..3).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect())
                .collect();
            let ch = channels(vectors);
            let q = crate::linalg::normalized(&[c(1.0, 0.2), c(-0.3, 0.5), c(0.1, 0.1)]).unwrap();
            let counts: Vec<usize> = (0..users).map(|_| 1 + (rng.random::<u32>() % 300) as usize).collect();
            let grads: Vec<Vec<f64>> = (0..users)
                .map(|_| (0..dim).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect())
                .collect();
            let sel: Vec<usize> = (0..users).collect();
            let out = aggregate(&grads, &ch, &q, &sel, &counts, &cfg(1e-3, 0.0), &mut rng).unwrap();
            let mass: f64 = counts.iter().map(|&s| s as f64).sum();
            let scale = grads.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
            for (n, est) in out.estimate.iter().enumerate() {
                let want: f64 = sel.iter().map(|&u| counts[u] as f64 * grads[u][n]).sum::<f64>() / mass;
                prop_assert!((est - want).abs() <= 1e-10 * scale);
            }
            for a in &out.per_user_weight {
                prop_assert!(a.norm_sqr() <= 1e-3 + 1e-12);
            }
        }

        #[test]
        fn noiseless_estimate_scales_linearly(seed in 0u64..1000, t in 0.01..100.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = channels(vec![vec![c(0.5, 0.5), c(1.0, 0.0)], vec![c(-0.2, 0.7), c(0.3, -0.1)]]);
            let q = crate::linalg::normalized(&[c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
            let g: Vec<Vec<f64>> = (0..2).map(|_| (0..5).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
            let gt: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| x * t).collect()).collect();
            let a = aggregate(&g, &ch, &q, &[0, 1], &[3, 5], &cfg(1.0, 0.0), &mut rng).unwrap();
            let b = aggregate(&gt, &ch, &q, &[0, 1], &[3, 5], &cfg(1.0, 0.0), &mut rng).unwrap();
            for (x, y) in a.estimate.iter().zip(&b.estimate) {
                prop_assert!((x * t - y).abs() <= 1e-10 * (x * t).abs().max(1e-12));
            }
        }
    }
}
