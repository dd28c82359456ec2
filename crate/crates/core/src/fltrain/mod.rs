//! FedSGD on MNIST over the analog uplink.
//!
//! Each round the configured scheme picks the selected users, the receive
//! beamformer and the antenna layout; the selected users compute full-batch
//! gradients of a multinomial logistic regression on their shards, the
//! gradients are aggregated over the air and the server takes one step.

mod data;
mod model;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, BaselineSpec};
use crate::channel::{
    build_los_channel, build_rayleigh_channel, AntennaLayout, ChannelMode, ChannelSet, LinkProfile, UserLink,
};
use crate::ota::{self, OtaConfig};
use crate::pdd::{self, PddConfig};
use crate::surrogate::{effective_gains, objective_from_gains};
use crate::{csv_real, Error, Real, Result};

pub use data::{
    dataset_from_idx, load_mnist_idx, parse_idx_images, parse_idx_labels, partition_iid, Dataset, CLASSES, FEATURES,
    IMAGE_MAGIC, LABEL_MAGIC,
};
pub use model::{evaluate, local_loss_grad, PARAMS};

/// Random streams derived from the experiment seed.
const PARTITION_STREAM: u64 = 0;
const CHANNEL_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const FADING_STREAM: u64 = 3;

/// How the scheduler for a round is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SchemeRepr<T>", into = "SchemeRepr<T>", bound = "")]
pub enum Scheme<T: Real> {
    /// Joint selection, beamforming and positioning by PDD.
    Pdd,
    Baseline(BaselineSpec<T>),
}

/// Flat serialized form, so an unknown `kind` lists every valid one.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", bound = "", deny_unknown_fields)]
enum SchemeRepr<T: Real> {
    Pdd,
    SelectAll,
    Fpa,
    Rma {
        seed: u64,
    },
    Aps {
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

impl<T: Real> From<SchemeRepr<T>> for Scheme<T> {
    fn from(r: SchemeRepr<T>) -> Self {
        let b = match r {
            SchemeRepr::Pdd => return Self::Pdd,
            SchemeRepr::SelectAll => BaselineSpec::SelectAll,
            SchemeRepr::Fpa => BaselineSpec::Fpa,
            SchemeRepr::Rma { seed } => BaselineSpec::Rma { seed },
            SchemeRepr::Aps { grid_per_wavelength } => BaselineSpec::Aps { grid_per_wavelength },
            SchemeRepr::Mrt => BaselineSpec::Mrt,
            SchemeRepr::DcLikeGreedy { threshold } => BaselineSpec::DcLikeGreedy { threshold },
        };
        Self::Baseline(b)
    }
}

impl<T: Real> From<Scheme<T>> for SchemeRepr<T> {
    fn from(s: Scheme<T>) -> Self {
        match s {
            Scheme::Pdd => Self::Pdd,
            Scheme::Baseline(BaselineSpec::SelectAll) => Self::SelectAll,
            Scheme::Baseline(BaselineSpec::Fpa) => Self::Fpa,
            Scheme::Baseline(BaselineSpec::Rma { seed }) => Self::Rma { seed },
            Scheme::Baseline(BaselineSpec::Aps { grid_per_wavelength }) => Self::Aps { grid_per_wavelength },
            Scheme::Baseline(BaselineSpec::Mrt) => Self::Mrt,
            Scheme::Baseline(BaselineSpec::DcLikeGreedy { threshold }) => Self::DcLikeGreedy { threshold },
        }
    }
}

impl<T: Real> Scheme<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Pdd => "pdd",
            Self::Baseline(b) => match b {
                BaselineSpec::SelectAll => "select-all",
                BaselineSpec::Fpa => "fpa",
                BaselineSpec::Rma { .. } => "rma",
                BaselineSpec::Aps { .. } => "aps",
                BaselineSpec::Mrt => "mrt",
                BaselineSpec::DcLikeGreedy { .. } => "dc-like-greedy",
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Pdd => Ok(()),
            Self::Baseline(b) => b.validate(),
        }
    }
}

/// Whether channels change between rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelDynamics {
    /// Channels are drawn once and kept for the whole run.
    #[default]
    Static,
    /// Every round redraws the path-gain phases (or the whole Rayleigh
    /// vectors).
    Fading,
}

/// Where the MNIST files live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub images: PathBuf,
    pub labels: PathBuf,
    /// Separate test files; when absent the test set is held out from the
    /// tail of the training files.
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub test_samples: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            images: PathBuf::from("data/mnist/mnist10k-images-idx3-ubyte.gz"),
            labels: PathBuf::from("data/mnist/mnist10k-labels-idx1-ubyte.gz"),
            test_images: None,
            test_labels: None,
            test_samples: 2000,
        }
    }
}

impl DataConfig {
    /// Loads the training pool and the test set.
    pub fn load<T: Real>(&self) -> Result<(Dataset<T>, Dataset<T>)> {
        let pool = load_mnist_idx(&self.images, &self.labels)?;
        match (&self.test_images, &self.test_labels) {
            (Some(images), Some(labels)) => Ok((pool, load_mnist_idx(images, labels)?)),
            (None, None) => pool.split_tail(self.test_samples),
            _ => Err(Error::config("test_images and test_labels must be given together")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default, deny_unknown_fields)]
pub struct TrainConfig<T: Real> {
    pub rounds: usize,
    pub learning_rate: T,
    pub users: usize,
    pub per_user_samples: usize,
    pub antennas: usize,
    pub region_lo: T,
    pub region_hi: T,
    pub min_gap: T,
    pub ota: OtaConfig<T>,
    pub links: LinkProfile<T>,
    pub channel_model: ChannelMode,
    pub dynamics: ChannelDynamics,
    pub scheme: Scheme<T>,
    pub pdd: PddConfig<T>,
    pub data: DataConfig,
    pub seed: u64,
    /// Fill the `wall_ms` column; off by default so outputs are reproducible.
    pub record_wall_time: bool,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            rounds: 50,
            learning_rate: T::lit(0.05),
            users: 10,
            per_user_samples: 270,
            antennas: 4,
            region_lo: T::zero(),
            region_hi: T::lit(8.0),
            min_gap: T::lit(0.5),
            ota: OtaConfig::from_dbm(T::zero(), T::lit(-20.0), T::one()).expect("default power settings are valid"),
            links: LinkProfile::default(),
            channel_model: ChannelMode::LosMa,
            dynamics: ChannelDynamics::Static,
            scheme: Scheme::Pdd,
            pdd: PddConfig::default(),
            data: DataConfig::default(),
            seed: 0,
            record_wall_time: false,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::config("rounds must be at least 1"));
        }
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.users == 0 || self.per_user_samples == 0 || self.antennas == 0 {
            return Err(Error::config("users, per_user_samples and antennas must be at least 1"));
        }
        crate::channel::check_region_fits(self.antennas, self.region_lo, self.region_hi, self.min_gap)?;
        self.ota.validate()?;
        self.pdd.validate()?;
        self.scheme.validate()
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn initial_layout(&self) -> Result<AntennaLayout<T>> {
        AntennaLayout::spread(self.antennas, self.region_lo, self.region_hi, self.min_gap)
    }

    fn fpa_layout(&self) -> Result<AntennaLayout<T>> {
        baselines::fpa_layout(
            self.antennas,
            self.region_lo,
            self.region_hi,
            self.min_gap,
            self.ota.wavelength,
        )
    }
}

/// One row of the per-round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RoundMetrics<T: Real> {
    pub round: usize,
    pub scheme: String,
    pub r: T,
    pub selected: usize,
    pub eta: T,
    pub test_loss: T,
    pub test_acc: T,
    /// Coupling violation reported by the solver; zero for closed-form schemes.
    pub violation: T,
    pub wall_ms: u64,
}

pub const METRICS_HEADER: &str = "round,scheme,r,selected,eta,test_loss,test_acc,violation,wall_ms";

/// Renders rows as CSV with a header line.
pub fn metrics_csv<T: Real>(rows: &[RoundMetrics<T>]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            m.round,
            m.scheme,
            csv_real(m.r),
            m.selected,
            csv_real(m.eta),
            csv_real(m.test_loss),
            csv_real(m.test_acc),
            csv_real(m.violation),
            m.wall_ms
        );
    }
    out
}

/// Per-round metrics together with the final model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T: Real> {
    pub rounds: Vec<RoundMetrics<T>>,
    pub weights: Vec<T>,
}

/// Selection, beamformer and channels used for one round.
#[derive(Debug, Clone)]
pub struct RoundSchedule<T: Real> {
    pub selection: Vec<bool>,
    pub beamformer: Vec<Complex<T>>,
    /// Channels evaluated at the layout the scheme chose.
    pub channels: ChannelSet<T>,
    pub r_value: T,
    pub violation: T,
}

impl<T: Real> RoundSchedule<T> {
    pub fn selected(&self) -> Vec<usize> {
        crate::surrogate::selected_indices(&self.selection)
    }
}

fn fixed_position_pdd<T: Real>(
    channels: &ChannelSet<T>,
    layout: &AntennaLayout<T>,
    counts: &[usize],
    cfg: &TrainConfig<T>,
) -> Result<RoundSchedule<T>> {
    let channels = channels.at_layout(layout)?;
    let pdd_cfg = PddConfig {
        optimize_positions: false,
        ..cfg.pdd.clone()
    };
    let res = pdd::solve(&channels, counts, &cfg.ota, &pdd_cfg)?;
    Ok(RoundSchedule {
        selection: res.selection.binary,
        beamformer: res.beamformer,
        channels,
        r_value: res.r_value,
        violation: res.violation,
    })
}

fn closed_form<T: Real>(channels: ChannelSet<T>, schedule: baselines::Schedule<T>) -> RoundSchedule<T> {
    RoundSchedule {
        selection: schedule.selection,
        beamformer: schedule.beamformer,
        channels,
        r_value: schedule.r_value,
        violation: T::zero(),
    }
}

/// Runs the configured scheme on `channels` (evaluated at the current layout).
pub fn schedule_round<T: Real>(
    scheme: &Scheme<T>,
    channels: &ChannelSet<T>,
    counts: &[usize],
    cfg: &TrainConfig<T>,
) -> Result<RoundSchedule<T>> {
    let ota = &cfg.ota;
    let pdd_result = |res: pdd::PddResult<T>| -> Result<RoundSchedule<T>> {
        Ok(RoundSchedule {
            channels: channels.at_layout(&res.layout)?,
            selection: res.selection.binary,
            beamformer: res.beamformer,
            r_value: res.r_value,
            violation: res.violation,
        })
    };
    match scheme {
        Scheme::Pdd => pdd_result(pdd::solve(channels, counts, ota, &cfg.pdd)?),
        Scheme::Baseline(spec) => match spec {
            BaselineSpec::SelectAll => pdd_result(baselines::select_all(channels, counts, ota, &cfg.pdd)?),
            BaselineSpec::Fpa => fixed_position_pdd(channels, &cfg.fpa_layout()?, counts, cfg),
            BaselineSpec::Rma { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let layout = baselines::rma_layout(cfg.antennas, cfg.region_lo, cfg.region_hi, cfg.min_gap, &mut rng)?;
                fixed_position_pdd(channels, &layout, counts, cfg)
            }
            BaselineSpec::Aps { grid_per_wavelength } => {
                let layout = baselines::aps_layout(channels, counts, ota, *grid_per_wavelength)?;
                fixed_position_pdd(channels, &layout, counts, cfg)
            }
            BaselineSpec::Mrt => {
                let channels = channels.at_layout(&cfg.fpa_layout()?)?;
                let all = vec![true; channels.users()];
                let q = baselines::mrt_beamformer(&channels, &all, counts)?;
                let r_value = objective_from_gains(&all, &effective_gains(&q, &channels), counts, ota);
                Ok(closed_form(
                    channels,
                    baselines::Schedule {
                        selection: all,
                        beamformer: q,
                        r_value,
                    },
                ))
            }
            BaselineSpec::DcLikeGreedy { threshold } => {
                let channels = channels.at_layout(&cfg.fpa_layout()?)?;
                let schedule = baselines::dc_like_greedy(&channels, counts, ota, *threshold)?;
                Ok(closed_form(channels, schedule))
            }
        },
    }
}

/// Draws the users' links and the round-zero channels.
pub fn initial_channels<T: Real>(cfg: &TrainConfig<T>) -> Result<ChannelSet<T>> {
    cfg.validate()?;
    let mut rng = cfg.rng(CHANNEL_STREAM);
    let links = cfg.links.sample(cfg.users, cfg.per_user_samples, &mut rng)?;
    let layout = cfg.initial_layout()?;
    match cfg.channel_model {
        ChannelMode::LosMa => build_los_channel(&layout, &links, cfg.ota.wavelength),
        ChannelMode::RayleighFpa => build_rayleigh_channel(&layout, &links, cfg.ota.wavelength, &mut rng),
    }
}

fn redraw<T: Real, R: Rng + ?Sized>(
    channels: &ChannelSet<T>,
    layout: &AntennaLayout<T>,
    rng: &mut R,
) -> Result<ChannelSet<T>> {
    match channels.mode {
        ChannelMode::LosMa => {
            let links: Vec<UserLink<T>> = channels
                .links
                .iter()
                .map(|l| UserLink {
                    path_gain: Complex::from_polar(l.path_gain.norm(), T::lit(rng.random::<f64>()) * T::TAU()),
                    ..l.clone()
                })
                .collect();
            build_los_channel(layout, &links, channels.wavelength)
        }
        ChannelMode::RayleighFpa => build_rayleigh_channel(layout, &channels.links, channels.wavelength, rng),
    }
}

/// Loads the data named in the config and trains.
pub fn train<T: Real>(cfg: &TrainConfig<T>) -> Result<Vec<RoundMetrics<T>>> {
    let (pool, test) = cfg.data.load()?;
    Ok(train_on(cfg, &pool, &test)?.rounds)
}

/// Trains on shards drawn IID from `pool`.
pub fn train_on<T: Real>(cfg: &TrainConfig<T>, pool: &Dataset<T>, test: &Dataset<T>) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let shards = partition_iid(pool, cfg.users, cfg.per_user_samples, &mut cfg.rng(PARTITION_STREAM))?;
    train_with_shards(cfg, pool, &shards, test)
}

/// Trains with the given shards (row indices into `pool`, one per user).
pub fn train_with_shards<T: Real>(
    cfg: &TrainConfig<T>,
    pool: &Dataset<T>,
    shards: &[Vec<usize>],
    test: &Dataset<T>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if shards.len() != cfg.users {
        return Err(Error::config(format!(
            "{} shards for {} users",
            shards.len(),
            cfg.users
        )));
    }
    if shards.iter().any(Vec::is_empty) {
        return Err(Error::config("every shard needs at least one sample"));
    }
    if shards.iter().flatten().any(|&i| i >= pool.len()) {
        return Err(Error::invalid("shard index outside the training pool"));
    }
    let counts: Vec<usize> = shards.iter().map(Vec::len).collect();
    let mut channels = initial_channels(cfg)?;
    for (link, &s) in channels.links.iter_mut().zip(&counts) {
        link.sample_count = s;
    }
    let mut noise_rng = cfg.rng(NOISE_STREAM);
    let mut fading_rng = cfg.rng(FADING_STREAM);
    let name = cfg.scheme.name();

    let mut w = vec![T::zero(); PARAMS];
    let mut rows = Vec::with_capacity(cfg.rounds);
    let mut cached: Option<RoundSchedule<T>> = None;
    for round in 0..cfg.rounds {
        let started = Instant::now();
        if cfg.dynamics == ChannelDynamics::Fading && round > 0 {
            channels = redraw(&channels, &channels.layout, &mut fading_rng)?;
            cached = None;
        }
        let schedule = match cached.take() {
            Some(s) => s,
            None => schedule_round(&cfg.scheme, &channels, &counts, cfg)?,
        };
        if cfg.scheme == Scheme::Pdd || matches!(cfg.scheme, Scheme::Baseline(BaselineSpec::SelectAll)) {
            channels.layout = schedule.channels.layout.clone();
        }

        let selected = schedule.selected();
        let gradients: Vec<Vec<T>> = selected
            .iter()
            .map(|&u| local_loss_grad(&w, pool, &shards[u]).1)
            .collect();
        let outcome = ota::aggregate(
            &gradients,
            &schedule.channels,
            &schedule.beamformer,
            &selected,
            &counts,
            &cfg.ota,
            &mut noise_rng,
        )?;
        for (wi, &g) in w.iter_mut().zip(&outcome.estimate) {
            *wi -= cfg.learning_rate * g;
        }
        let (test_loss, test_acc) = evaluate(&w, test);
        rows.push(RoundMetrics {
            round: round + 1,
            scheme: name.to_string(),
            r: schedule.r_value,
            selected: selected.len(),
            eta: outcome.eta,
            test_loss,
            test_acc,
            violation: schedule.violation,
            wall_ms: if cfg.record_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        });
        if cfg.dynamics == ChannelDynamics::Static {
            cached = Some(schedule);
        }
    }
    Ok(TrainOutcome {
        rounds: rows,
        weights: w,
    })
}
