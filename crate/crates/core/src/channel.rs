//! Uplink channel construction for a server-side linear array of movable
//! antennas (MAs).
//!
//! In line-of-sight mode the channel of user `u` is `h_u = β_u a(x)`, where
//! `a(x)` is the steering vector of the current antenna coordinates `x` for the
//! user's angle of arrival. The Rayleigh mode draws `h_u ~ CN(0, I/PL)` and
//! ignores antenna positions; it is the fixed-position comparison channel.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Coordinates of the movable antennas on the segment `[region_lo, region_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AntennaLayout<T: Real> {
    /// Antenna coordinates in meters.
    pub positions: Vec<T>,
    pub region_lo: T,
    pub region_hi: T,
    /// Minimum pairwise separation `v`.
    pub min_gap: T,
}

impl<T: Real> AntennaLayout<T> {
    pub fn new(positions: Vec<T>, region_lo: T, region_hi: T, min_gap: T) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("layout needs at least one antenna"));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite antenna position"));
        }
        if !(region_lo.is_finite() && region_hi.is_finite() && region_lo <= region_hi) {
            return Err(Error::invalid("movement region must be a finite, non-empty segment"));
        }
        if !(min_gap >= T::zero()) {
            return Err(Error::invalid("minimum gap must be non-negative"));
        }
        Ok(Self {
            positions,
            region_lo,
            region_hi,
            min_gap,
        })
    }

    /// `n` antennas spaced `gap` apart, centred in the region.
    pub fn equispaced(n: usize, region_lo: T, region_hi: T, min_gap: T, gap: T) -> Result<Self> {
        check_region_fits(n, region_lo, region_hi, min_gap)?;
        let gap = gap.max(min_gap);
        let span = gap * T::from_count(n.saturating_sub(1));
        let width = region_hi - region_lo;
        let (start, gap) = if span <= width {
            (region_lo + (width - span) / T::lit(2.0), gap)
        } else {
            (region_lo, min_gap)
        };
        let positions = (0..n).map(|i| start + gap * T::from_count(i)).collect();
        let mut layout = Self::new(positions, region_lo, region_hi, min_gap)?;
        layout.repair();
        Ok(layout)
    }

    /// Default warm-start layout: gap `max(v, |C|/N)`.
    pub fn spread(n: usize, region_lo: T, region_hi: T, min_gap: T) -> Result<Self> {
        let gap = (region_hi - region_lo) / T::from_count(n.max(1));
        Self::equispaced(n, region_lo, region_hi, min_gap, gap)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn in_region(&self) -> bool {
        self.positions
            .iter()
            .all(|&p| p >= self.region_lo && p <= self.region_hi)
    }

    /// Smallest pairwise distance, `+∞` for a single antenna.
    pub fn smallest_gap(&self) -> T {
        let mut best = T::infinity();
        for (i, &a) in self.positions.iter().enumerate() {
            for &b in &self.positions[i + 1..] {
                best = best.min((a - b).abs());
            }
        }
        best
    }

    pub fn is_feasible(&self) -> bool {
        self.in_region() && self.smallest_gap() >= self.min_gap
    }

    /// Projects onto the feasible set: sort, push right until every gap is at
    /// least `v`, then pull back from the right end of the region. The result
    /// satisfies the spacing bound exactly in floating point.
    pub fn repair(&mut self) {
        let n = self.positions.len();
        if n == 0 {
            return;
        }
        let v = self.min_gap;
        let p = &mut self.positions;
        p.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        p[0] = p[0].max(self.region_lo).min(self.region_hi);
        for i in 1..n {
            p[i] = p[i].max(p[i - 1] + v);
        }
        if p[n - 1] > self.region_hi {
            p[n - 1] = self.region_hi;
            for i in (0..n - 1).rev() {
                p[i] = p[i].min(p[i + 1] - v);
            }
        }
        // Rounding in `a + v` can leave a gap one ulp short of `v`.
        for i in 1..n {
            let mut guard = 0;
            while p[i] - p[i - 1] < v && guard < 64 {
                let bump = T::epsilon() * p[i].abs().max(T::one());
                if p[i] + bump <= self.region_hi {
                    p[i] += bump;
                } else {
                    p[i - 1] -= bump;
                }
                guard += 1;
            }
        }
    }
}

/// Errors unless `n` antennas fit in the region at spacing `v`.
pub fn check_region_fits<T: Real>(n: usize, lo: T, hi: T, min_gap: T) -> Result<()> {
    if n == 0 {
        return Err(Error::config("need at least one antenna"));
    }
    let needed = min_gap * T::from_count(n - 1);
    if hi - lo < needed {
        return Err(Error::config(format!(
            "movement region of length {} cannot hold {n} antennas at spacing {}",
            hi - lo,
            min_gap
        )));
    }
    Ok(())
}

/// Geometry of one user's link to the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct UserLink<T: Real> {
    pub distance_m: T,
    /// `cos θ` of the line-of-sight angle of arrival.
    pub aoa_cos: T,
    /// Complex path gain `β_u`.
    pub path_gain: Complex<T>,
    /// Local dataset size `S_u`.
    pub sample_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// Line-of-sight channel that depends on the antenna coordinates.
    LosMa,
    /// i.i.d. Rayleigh channel that ignores antenna positions.
    RayleighFpa,
}

/// Per-user channel vectors together with the parameters that generated them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ChannelSet<T: Real> {
    /// `h_u`, one vector of length `N_T` per user.
    pub vectors: Vec<Vec<Complex<T>>>,
    pub wavelength: T,
    pub mode: ChannelMode,
    pub links: Vec<UserLink<T>>,
    /// Layout the vectors were evaluated at (meaningful in `LosMa` mode).
    pub layout: AntennaLayout<T>,
}

impl<T: Real> ChannelSet<T> {
    pub fn users(&self) -> usize {
        self.vectors.len()
    }

    pub fn antennas(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn sample_counts(&self) -> Vec<usize> {
        self.links.iter().map(|l| l.sample_count).collect()
    }

    /// True when moving the antennas changes the channel.
    pub fn position_dependent(&self) -> bool {
        self.mode == ChannelMode::LosMa
    }

    /// Re-evaluates the channel at another layout. Rayleigh channels are
    /// returned unchanged apart from the recorded layout.
    pub fn at_layout(&self, layout: &AntennaLayout<T>) -> Result<Self> {
        match self.mode {
            ChannelMode::LosMa => build_los_channel(layout, &self.links, self.wavelength),
            ChannelMode::RayleighFpa => {
                if layout.len() != self.antennas() {
                    return Err(Error::invalid("layout size differs from channel dimension"));
                }
                Ok(Self {
                    layout: layout.clone(),
                    ..self.clone()
                })
            }
        }
    }
}

/// `2π/λ · cos θ`, the phase slope of the steering vector along the array.
#[inline]
pub fn phase_slope<T: Real>(wavelength: T, aoa_cos: T) -> T {
    T::TAU() / wavelength * aoa_cos
}

/// Steering vector on raw coordinates.
pub fn steering_from_positions<T: Real>(positions: &[T], wavelength: T, aoa_cos: T) -> Vec<Complex<T>> {
    let k = phase_slope(wavelength, aoa_cos);
    positions
        .iter()
        .map(|&x| Complex::from_polar(T::one(), k * x))
        .collect()
}

/// Array response `a(x)` with entries `exp(j 2π/λ · x_n · cos θ)`.
pub fn steering_vector<T: Real>(layout: &AntennaLayout<T>, wavelength: T, aoa_cos: T) -> Result<Vec<Complex<T>>> {
    if !(wavelength > T::zero()) || !wavelength.is_finite() {
        return Err(Error::invalid("wavelength must be positive"));
    }
    if !aoa_cos.is_finite() {
        return Err(Error::invalid("non-finite angle-of-arrival cosine"));
    }
    if layout.positions.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("non-finite antenna position"));
    }
    Ok(steering_from_positions(&layout.positions, wavelength, aoa_cos))
}

/// COST-Hata path loss in dB, `139.1 + 35.22 log10(d / 1 km)`.
pub fn cost_hata_pl_db<T: Real>(distance_m: T) -> Result<T> {
    if !(distance_m > T::zero()) || !distance_m.is_finite() {
        return Err(Error::invalid("distance must be positive"));
    }
    Ok(T::lit(139.1) + T::lit(35.22) * (distance_m / T::lit(1000.0)).log10())
}

/// Linear power gain `10^(-PL/10)`.
pub fn pl_db_to_gain<T: Real>(pl_db: T) -> T {
    if pl_db == T::infinity() {
        return T::zero();
    }
    T::lit(10.0).powf(-pl_db / T::lit(10.0))
}

pub fn build_los_channel<T: Real>(
    layout: &AntennaLayout<T>,
    links: &[UserLink<T>],
    wavelength: T,
) -> Result<ChannelSet<T>> {
    let mut vectors = Vec::with_capacity(links.len());
    for (u, link) in links.iter().enumerate() {
        if !(link.aoa_cos.abs() <= T::one()) {
            return Err(Error::invalid(format!("user {u}: |cos θ| exceeds 1")));
        }
        if !(link.path_gain.re.is_finite() && link.path_gain.im.is_finite()) {
            return Err(Error::invalid(format!("user {u}: non-finite path gain")));
        }
        let a = steering_vector(layout, wavelength, link.aoa_cos)?;
        vectors.push(a.into_iter().map(|z| z * link.path_gain).collect());
    }
    Ok(ChannelSet {
        vectors,
        wavelength,
        mode: ChannelMode::LosMa,
        links: links.to_vec(),
        layout: layout.clone(),
    })
}

/// `CN(0, 10^(-pl_db/10) I)` vector; `pl_db = +∞` yields zeros.
pub fn sample_rayleigh<T: Real, R: Rng + ?Sized>(pl_db: T, n_antennas: usize, rng: &mut R) -> Vec<Complex<T>> {
    let gain = pl_db_to_gain(pl_db);
    let sd = (gain / T::lit(2.0)).sqrt();
    (0..n_antennas)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(T::lit(re) * sd, T::lit(im) * sd)
        })
        .collect()
}

/// How user geometry is drawn for an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct LinkProfile<T: Real> {
    /// Distances are uniform on this interval (meters).
    pub distance_m: (T, T),
}

impl<T: Real> Default for LinkProfile<T> {
    fn default() -> Self {
        Self {
            distance_m: (T::lit(10.0), T::lit(100.0)),
        }
    }
}

impl<T: Real> LinkProfile<T> {
    /// Draws `users` links: uniform distance, `cos θ ~ U[-1, 1]`, path-gain
    /// phase uniform on `[0, 2π)` and magnitude from the COST-Hata loss.
    pub fn sample<R: Rng + ?Sized>(&self, users: usize, sample_count: usize, rng: &mut R) -> Result<Vec<UserLink<T>>> {
        let (lo, hi) = self.distance_m;
        if !(lo > T::zero() && hi >= lo) {
            return Err(Error::config("distance range must satisfy 0 < lo <= hi"));
        }
        (0..users)
            .map(|_| {
                let d = lo + (hi - lo) * T::lit(rng.random::<f64>());
                let aoa_cos = T::lit(2.0 * rng.random::<f64>() - 1.0);
                let phase = T::lit(rng.random::<f64>()) * T::TAU();
                let amp = pl_db_to_gain(cost_hata_pl_db(d)?).sqrt();
                Ok(UserLink {
                    distance_m: d,
                    aoa_cos,
                    path_gain: Complex::from_polar(amp, phase),
                    sample_count,
                })
            })
            .collect()
    }
}

/// Rayleigh channel set for the given links (their distances set the loss).
pub fn build_rayleigh_channel<T: Real, R: Rng + ?Sized>(
    layout: &AntennaLayout<T>,
    links: &[UserLink<T>],
    wavelength: T,
    rng: &mut R,
) -> Result<ChannelSet<T>> {
    let vectors = links
        .iter()
        .map(|l| Ok(sample_rayleigh(cost_hata_pl_db(l.distance_m)?, layout.len(), rng)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelSet {
        vectors,
        wavelength,
        mode: ChannelMode::RayleighFpa,
        links: links.to_vec(),
        layout: layout.clone(),
    })
}
