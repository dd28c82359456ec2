use num_complex::Complex;

use crate::channel::{phase_slope, AntennaLayout, ChannelSet};
use crate::linalg::inner;
use crate::ota::OtaConfig;
use crate::{Error, Real, Result};

use super::{LayoutMode, PddConfig};

/// Immutable data of one PDD instance, already rescaled.
///
/// Sample counts are divided by their mean `s̄`, channels by the gain scale
/// `ρ` and then each by its own `√g_u`, and `c` by `c_ref`. The noise weight
/// becomes `ν = σ² c_ref/(P_a ρ² s̄²)` and the surrogate in original units is
/// `s̄²` times the rescaled one.
#[derive(Debug, Clone)]
pub struct PddProblem<T: Real> {
    pub(crate) users: usize,
    pub(crate) antennas: usize,
    pub(crate) samples: Vec<T>,
    /// `S_u² / (g_u c_ref)`, the coefficient of `ē_u` in the cap `ē S² ≤ α̂`
    /// after each user's channel is scaled to unit mean per-antenna gain.
    pub(crate) cap: Vec<T>,
    pub(crate) mass: T,
    pub(crate) sample_scale: T,
    pub(crate) nu: T,
    /// Weights of the two objective terms after dividing by the objective
    /// scale of the instance.
    pub(crate) mass_weight: T,
    pub(crate) noise_weight: T,
    /// `β_u / ρ` for position-dependent channels.
    pub(crate) beta: Vec<Complex<T>>,
    /// `2π/λ · cos θ_u`.
    pub(crate) slopes: Vec<T>,
    /// `h_u / ρ` when antenna coordinates are not optimized.
    pub(crate) frozen_channels: Option<Vec<Vec<Complex<T>>>>,
    /// Users coupled to each layout copy.
    pub(crate) groups: Vec<Vec<usize>>,
    pub(crate) group_of: Vec<usize>,
    /// Antenna index pairs `(n, m)` with `n < m`.
    pub(crate) pairs: Vec<(usize, usize)>,
    pub(crate) initial_layout: AntennaLayout<T>,
    pub(crate) channels: ChannelSet<T>,
    pub(crate) sample_counts: Vec<usize>,
    pub(crate) ota: OtaConfig<T>,
    pub(crate) cfg: PddConfig<T>,
    /// Lower bound on `η̄`.
    pub(crate) eta_floor: T,
}

impl<T: Real> PddProblem<T> {
    pub fn new(
        channels: &ChannelSet<T>,
        sample_counts: &[usize],
        ota: &OtaConfig<T>,
        cfg: &PddConfig<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        ota.validate()?;
        let users = channels.users();
        let antennas = channels.antennas();
        if users == 0 || antennas == 0 {
            return Err(Error::invalid("need at least one user and one antenna"));
        }
        if sample_counts.len() != users {
            return Err(Error::invalid(format!(
                "{} sample counts for {users} users",
                sample_counts.len()
            )));
        }
        if let Some(u) = sample_counts.iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("user {u} holds no samples")));
        }
        if channels.vectors.iter().any(|h| h.len() != antennas) {
            return Err(Error::invalid("channel vectors differ in length"));
        }
        if channels.layout.len() != antennas {
            return Err(Error::invalid("layout size differs from channel dimension"));
        }

        let raw: Vec<T> = sample_counts.iter().map(|&s| T::from_count(s)).collect();
        let sample_scale = raw.iter().fold(T::zero(), |a, &s| a + s) / T::from_count(users);
        let samples: Vec<T> = raw.iter().map(|&s| s / sample_scale).collect();
        let mass = samples.iter().fold(T::zero(), |a, &s| a + s);

        let optimize = cfg.optimize_positions && channels.position_dependent();
        let nt = T::from_count(antennas);
        let gain_scale = channels
            .vectors
            .iter()
            .map(|h| (crate::linalg::norm_sqr(h) / nt).sqrt())
            .fold(T::zero(), T::max);
        if !(gain_scale > T::zero()) || !gain_scale.is_finite() {
            return Err(Error::DegenerateChannel { user: 0 });
        }
        for (u, h) in channels.vectors.iter().enumerate() {
            if crate::linalg::norm_sqr(h) == T::zero() {
                return Err(Error::DegenerateChannel { user: u });
            }
        }
        // Per-user gains `g_u` relative to the strongest user. Each channel is
        // divided by `ρ √g_u`, so `γ`, `α` and their copies are O(1) for every
        // user and the path loss moves into `cap`. `c` is measured in units
        // of `c_ref`, the requirement of the weakest user at unit gain.
        let rel_gain: Vec<T> = channels
            .vectors
            .iter()
            .map(|h| crate::linalg::norm_sqr(h) / (nt * gain_scale * gain_scale))
            .collect();
        let c_ref = (0..users)
            .map(|u| samples[u] * samples[u] / rel_gain[u])
            .fold(T::zero(), T::max);
        let cap = (0..users)
            .map(|u| samples[u] * samples[u] / (rel_gain[u] * c_ref))
            .collect();
        let nu = ota.noise_power * c_ref / (ota.max_power * gain_scale * gain_scale * sample_scale * sample_scale);

        let (beta, slopes, frozen_channels) = if optimize {
            let beta = channels
                .links
                .iter()
                .zip(&rel_gain)
                .map(|(l, &g)| l.path_gain / (gain_scale * g.sqrt()))
                .collect();
            let slopes = channels
                .links
                .iter()
                .map(|l| phase_slope(channels.wavelength, l.aoa_cos))
                .collect();
            (beta, slopes, None)
        } else {
            let fixed = channels
                .vectors
                .iter()
                .zip(&rel_gain)
                .map(|(h, &g)| h.iter().map(|z| z / (gain_scale * g.sqrt())).collect())
                .collect();
            (
                vec![Complex::new(T::one(), T::zero()); users],
                vec![T::zero(); users],
                Some(fixed),
            )
        };

        let (groups, group_of) = match cfg.layout_mode {
            LayoutMode::Shared => (vec![(0..users).collect()], vec![0; users]),
            LayoutMode::PerUser => ((0..users).map(|u| vec![u]).collect(), (0..users).collect()),
        };
        let pairs = (0..antennas)
            .flat_map(|n| (n + 1..antennas).map(move |m| (n, m)))
            .collect();

        let layout = &channels.layout;
        let initial_layout = if cfg.warm_start && layout.is_feasible() {
            layout.clone()
        } else {
            AntennaLayout::spread(antennas, layout.region_lo, layout.region_hi, layout.min_gap)?
        };

        let mut problem = Self {
            users,
            antennas,
            samples,
            cap,
            mass,
            sample_scale,
            nu,
            mass_weight: T::lit(4.0) / (T::from_count(users) * T::from_count(users)),
            noise_weight: nu,
            beta,
            slopes,
            frozen_channels,
            groups,
            group_of,
            pairs,
            initial_layout,
            channels: channels.clone(),
            sample_counts: sample_counts.to_vec(),
            ota: *ota,
            cfg: cfg.clone(),
            eta_floor: T::lit(1e-9) * mass * mass,
        };
        problem.normalize_objective();
        Ok(problem)
    }

    /// Divides the objective by the larger of its two natural scales: the
    /// noise term at the starting point and the cost of dropping the smallest
    /// user. Penalty parameters then mean the same across instances.
    fn normalize_objective(&mut self) {
        let start = self.initial_state();
        let noise = self.noise_weight * start.c / start.eta_bar;
        let smallest = self.samples.iter().copied().fold(T::infinity(), T::min);
        let drop_cost = self.mass_weight * smallest * smallest;
        let scale = noise.max(drop_cost);
        if scale > T::zero() && scale.is_finite() {
            self.mass_weight /= scale;
            self.noise_weight /= scale;
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// Mean sample count used to rescale the problem.
    pub fn sample_scale(&self) -> T {
        self.sample_scale
    }

    pub fn config(&self) -> &PddConfig<T> {
        &self.cfg
    }

    /// True when antenna coordinates are decision variables.
    pub fn optimizes_positions(&self) -> bool {
        self.frozen_channels.is_none()
    }

    pub(crate) fn layout_groups(&self) -> usize {
        self.groups.len()
    }

    /// Steering vector for `user` at raw coordinates `x`.
    pub(crate) fn steering(&self, user: usize, x: &[T]) -> Vec<Complex<T>> {
        let k = self.slopes[user];
        x.iter().map(|&p| Complex::from_polar(T::one(), k * p)).collect()
    }

    /// Rescaled effective gain `β_u q^H b_u` (or `q^H h_u / ρ` when frozen).
    pub(crate) fn effective(&self, user: usize, q: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
        match &self.frozen_channels {
            Some(h) => inner(q, &h[user]),
            None => inner(q, b) * self.beta[user],
        }
    }

    /// Column `w_u` of the effective-gain map, `β_u b_u` or the frozen channel.
    pub(crate) fn gain_vector(&self, user: usize, b: &[Complex<T>]) -> Vec<Complex<T>> {
        match &self.frozen_channels {
            Some(h) => h[user].clone(),
            None => b.iter().map(|z| z * self.beta[user]).collect(),
        }
    }

    /// Scaled `4/U² (M - m)²`.
    pub(crate) fn mass_term(&self, m: T) -> T {
        self.mass_weight * (self.mass - m) * (self.mass - m)
    }
}
