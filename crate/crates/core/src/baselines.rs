//! Comparison schedulers and a brute-force optimum for small instances.

use std::cmp::Ordering;

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{check_region_fits, AntennaLayout, ChannelSet};
use crate::linalg::normalized;
use crate::ota::OtaConfig;
use crate::pdd::{self, PddConfig, PddResult};
use crate::surrogate::{effective_gains, noise_term_from_gains, objective_from_gains};
use crate::{Error, Real, Result};

/// Largest instance the brute-force oracle accepts.
pub const ORACLE_MAX_USERS: usize = 12;
pub const ORACLE_MAX_ANTENNAS: usize = 2;

/// Tried positions before [`rma_layout`] falls back to an equispaced layout.
pub const RMA_MAX_TRIES: usize = 10_000;
/// Coordinate sweeps performed by [`aps_layout`] at most.
pub const APS_MAX_SWEEPS: usize = 10;

/// A comparison scheme and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", bound = "", deny_unknown_fields)]
pub enum BaselineSpec<T: Real> {
    SelectAll,
    Fpa,
    Rma {
        seed: u64,
    },
    Aps {
        /// Grid points per wavelength.
        #[serde(default = "default_aps_resolution")]
        grid_per_wavelength: usize,
    },
    Mrt,
    DcLikeGreedy {
        threshold: T,
    },
}

fn default_aps_resolution() -> usize {
    BaselineSpec::<f64>::DEFAULT_APS_RESOLUTION
}

impl<T: Real> BaselineSpec<T> {
    /// Grid points per wavelength when a configuration omits it.
    pub const DEFAULT_APS_RESOLUTION: usize = 50;

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Aps { grid_per_wavelength } if *grid_per_wavelength == 0 => {
                Err(Error::config("aps grid needs at least one point per wavelength"))
            }
            Self::DcLikeGreedy { threshold } if !(*threshold > T::zero()) => {
                Err(Error::config("dc-like-greedy threshold must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Selection, beamformer and surrogate value of a non-PDD scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Schedule<T: Real> {
    pub selection: Vec<bool>,
    pub beamformer: Vec<Complex<T>>,
    pub r_value: T,
}

impl<T: Real> Schedule<T> {
    pub fn selected_count(&self) -> usize {
        self.selection.iter().filter(|&&b| b).count()
    }
}

/// PDD with every user kept selected.
pub fn select_all<T: Real>(
    channels: &ChannelSet<T>,
    sample_counts: &[usize],
    ota: &OtaConfig<T>,
    cfg: &PddConfig<T>,
) -> Result<PddResult<T>> {
    let cfg = PddConfig {
        freeze_selection: true,
        ..cfg.clone()
    };
    pdd::solve(channels, sample_counts, ota, &cfg)
}

/// Unit vector along `Σ_{u selected} S_u h_u`.
pub fn mrt_beamformer<T: Real>(
    channels: &ChannelSet<T>,
    selected: &[bool],
    sample_counts: &[usize],
) -> Result<Vec<Complex<T>>> {
    let first = selected
        .iter()
        .position(|&b| b)
        .ok_or_else(|| Error::invalid("MRT needs a non-empty selection"))?;
    let n = channels.antennas();
    let mut sum = vec![Complex::new(T::zero(), T::zero()); n];
    for (u, h) in channels.vectors.iter().enumerate() {
        if selected[u] {
            let s = T::from_count(sample_counts[u]);
            for (acc, z) in sum.iter_mut().zip(h) {
                *acc += z * s;
            }
        }
    }
    normalized(&sum)
        .or_else(|| normalized(&channels.vectors[first]))
        .ok_or(Error::DegenerateChannel { user: first })
}

/// Fixed-position array at half-wavelength spacing, centred in the region.
pub fn fpa_layout<T: Real>(
    n: usize,
    region_lo: T,
    region_hi: T,
    min_gap: T,
    wavelength: T,
) -> Result<AntennaLayout<T>> {
    AntennaLayout::equispaced(n, region_lo, region_hi, min_gap, wavelength / T::lit(2.0))
}

/// Uniformly random layout satisfying the spacing bound, by rejection
/// sampling; equispaced if no draw succeeds.
pub fn rma_layout<T: Real, R: Rng + ?Sized>(
    n: usize,
    region_lo: T,
    region_hi: T,
    min_gap: T,
    rng: &mut R,
) -> Result<AntennaLayout<T>> {
    check_region_fits(n, region_lo, region_hi, min_gap)?;
    let width = region_hi - region_lo;
    for _ in 0..RMA_MAX_TRIES {
        let positions: Vec<T> = (0..n)
            .map(|_| region_lo + width * T::lit(rng.random::<f64>()))
            .collect();
        let layout = AntennaLayout::new(positions, region_lo, region_hi, min_gap)?;
        if layout.is_feasible() {
            return Ok(layout);
        }
    }
    AntennaLayout::spread(n, region_lo, region_hi, min_gap)
}

/// Surrogate with all users selected and an MRT beamformer.
fn all_selected_mrt_r<T: Real>(channels: &ChannelSet<T>, sample_counts: &[usize], ota: &OtaConfig<T>) -> T {
    let all = vec![true; channels.users()];
    match mrt_beamformer(channels, &all, sample_counts) {
        Ok(q) => objective_from_gains(&all, &effective_gains(&q, channels), sample_counts, ota),
        Err(_) => T::infinity(),
    }
}

/// Alternating position selection: one antenna at a time over a grid of the
/// region, keeping the point that minimizes `r` (all users, MRT beamformer).
pub fn aps_layout<T: Real>(
    channels: &ChannelSet<T>,
    sample_counts: &[usize],
    ota: &OtaConfig<T>,
    grid_per_wavelength: usize,
) -> Result<AntennaLayout<T>> {
    if grid_per_wavelength == 0 {
        return Err(Error::config("aps grid needs at least one point per wavelength"));
    }
    let base = &channels.layout;
    check_region_fits(base.len(), base.region_lo, base.region_hi, base.min_gap)?;
    let mut layout = if base.is_feasible() {
        base.clone()
    } else {
        AntennaLayout::spread(base.len(), base.region_lo, base.region_hi, base.min_gap)?
    };
    let step = channels.wavelength / T::from_count(grid_per_wavelength);
    let width = base.region_hi - base.region_lo;
    let points = (width / step).floor().to_usize().unwrap_or(0) + 1;
    let mut best = all_selected_mrt_r(&channels.at_layout(&layout)?, sample_counts, ota);
    for _ in 0..APS_MAX_SWEEPS {
        let mut improved = false;
        for n in 0..layout.len() {
            for i in 0..points {
                let x = (base.region_lo + step * T::from_count(i)).min(base.region_hi);
                let mut probe = layout.clone();
                probe.positions[n] = x;
                if !probe.is_feasible() {
                    continue;
                }
                let r = all_selected_mrt_r(&channels.at_layout(&probe)?, sample_counts, ota);
                if r < best {
                    best = r;
                    layout = probe;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(layout)
}

/// Greedy stand-in for threshold-constrained device maximization: drop the
/// user with the largest `S_u²/|q^H h_u|²` and re-run MRT until the noise
/// term of `r` is at most `threshold` or one user remains.
pub fn dc_like_greedy<T: Real>(
    channels: &ChannelSet<T>,
    sample_counts: &[usize],
    ota: &OtaConfig<T>,
    threshold: T,
) -> Result<Schedule<T>> {
    if !(threshold > T::zero()) {
        return Err(Error::config("dc-like-greedy threshold must be positive"));
    }
    let users = channels.users();
    if users == 0 {
        return Err(Error::invalid("no users"));
    }
    let mut selection = vec![true; users];
    loop {
        let q = mrt_beamformer(channels, &selection, sample_counts)?;
        let gains = effective_gains(&q, channels);
        let noise = noise_term_from_gains(&selection, &gains, sample_counts, ota);
        let count = selection.iter().filter(|&&b| b).count();
        if noise <= threshold || count <= 1 {
            let r_value = objective_from_gains(&selection, &gains, sample_counts, ota);
            return Ok(Schedule {
                selection,
                beamformer: q,
                r_value,
            });
        }
        let worst = (0..users)
            .filter(|&u| selection[u])
            .max_by(|&a, &b| {
                let ratio = |u: usize| {
                    let s = T::from_count(sample_counts[u]);
                    s * s / gains[u]
                };
                ratio(a).partial_cmp(&ratio(b)).unwrap_or(Ordering::Equal)
            })
            .expect("selection is non-empty");
        selection[worst] = false;
    }
}

/// Global minimizer of `r` over selections and beamformers on tiny instances.
///
/// For one antenna `|q^H h_u| = |h_u|` and all `2^U - 1` selections are
/// enumerated. For two antennas `q = [cos ψ, sin ψ e^{iφ}]` is scanned on a
/// grid of `step` radians; for each `q` only the selections that keep every
/// user at least as strong (in `|q^H h_u|²/S_u²`) as the weakest selected one
/// can be optimal, which leaves `U` candidates per grid point.
pub fn brute_force_oracle<T: Real>(
    channels: &ChannelSet<T>,
    sample_counts: &[usize],
    ota: &OtaConfig<T>,
    step: T,
) -> Result<Schedule<T>> {
    let users = channels.users();
    let n = channels.antennas();
    if users == 0 || users > ORACLE_MAX_USERS {
        return Err(Error::config(format!(
            "oracle supports 1..={ORACLE_MAX_USERS} users, got {users}"
        )));
    }
    if n == 0 || n > ORACLE_MAX_ANTENNAS {
        return Err(Error::config(format!(
            "oracle supports 1..={ORACLE_MAX_ANTENNAS} antennas, got {n}"
        )));
    }
    if sample_counts.len() != users {
        return Err(Error::invalid("sample counts do not match users"));
    }
    if n == 1 {
        let q = vec![Complex::new(T::one(), T::zero())];
        let gains = effective_gains(&q, channels);
        let mut best = (T::infinity(), vec![true; users]);
        for mask in 1u32..(1u32 << users) {
            let sel: Vec<bool> = (0..users).map(|u| mask >> u & 1 == 1).collect();
            let r = objective_from_gains(&sel, &gains, sample_counts, ota);
            if r < best.0 {
                best = (r, sel);
            }
        }
        return Ok(Schedule {
            selection: best.1,
            beamformer: q,
            r_value: best.0,
        });
    }

    if !(step > T::zero()) {
        return Err(Error::config("oracle grid step must be positive"));
    }
    let psi_points = (T::FRAC_PI_2() / step).floor().to_usize().unwrap_or(0) + 1;
    let phi_points = (T::TAU() / step).ceil().to_usize().unwrap_or(1).max(1);
    let mut best: Option<Schedule<T>> = None;
    let mut order: Vec<usize> = (0..users).collect();
    for i in 0..psi_points {
        let psi = (step * T::from_count(i)).min(T::FRAC_PI_2());
        for j in 0..phi_points {
            let phi = step * T::from_count(j);
            let q = vec![Complex::new(psi.cos(), T::zero()), Complex::from_polar(psi.sin(), phi)];
            let gains = effective_gains(&q, channels);
            let strength = |u: usize| {
                let s = T::from_count(sample_counts[u]);
                gains[u] / (s * s)
            };
            order.sort_by(|&a, &b| strength(b).partial_cmp(&strength(a)).unwrap_or(Ordering::Equal));
            let mut sel = vec![false; users];
            for &u in &order {
                sel[u] = true;
                let r = objective_from_gains(&sel, &gains, sample_counts, ota);
                if best.as_ref().is_none_or(|b| r < b.r_value) {
                    best = Some(Schedule {
                        selection: sel.clone(),
                        beamformer: q.clone(),
                        r_value: r,
                    });
                }
            }
            if psi == T::zero() {
                break;
            }
        }
    }
    best.ok_or_else(|| Error::config("oracle grid is empty"))
}
