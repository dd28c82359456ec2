use airfl_core::baselines::{aps_layout, brute_force_oracle, dc_like_greedy, mrt_beamformer, rma_layout, select_all};
use airfl_core::channel::{build_los_channel, AntennaLayout, ChannelMode, ChannelSet, LinkProfile, UserLink};
use airfl_core::ota::OtaConfig;
use airfl_core::pdd::{self, PddConfig};
use airfl_core::surrogate::{effective_gains, objective_r};
use airfl_core::Error;
use num_complex::Complex;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type C = Complex<f64>;

fn ota() -> OtaConfig<f64> {
    OtaConfig::from_dbm(0.0, -20.0, 1.0).unwrap()
}

fn los(users: usize, antennas: usize, seed: u64) -> ChannelSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let links = LinkProfile::default().sample(users, 270, &mut rng).unwrap();
    let layout = AntennaLayout::spread(antennas, 0.0, 8.0, 0.5).unwrap();
    build_los_channel(&layout, &links, 1.0).unwrap()
}

/// Position-independent channels with the given vectors and sample counts.
fn fixed(vectors: Vec<Vec<C>>, counts: &[usize]) -> ChannelSet<f64> {
    let n = vectors[0].len();
    let links = counts
        .iter()
        .map(|&s| UserLink {
            distance_m: 10.0,
            aoa_cos: 0.0,
            path_gain: C::new(1.0, 0.0),
            sample_count: s,
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

fn all_mrt_r(ch: &ChannelSet<f64>) -> f64 {
    let all = vec![true; ch.users()];
    let counts = ch.sample_counts();
    let q = mrt_beamformer(ch, &all, &counts).unwrap();
    objective_r(&q, &all, ch, &counts, &ota())
}

#[test]
fn mrt_single_user_is_the_normalized_channel() {
    let h = vec![C::new(3.0, 1.0), C::new(-1.0, 2.0), C::new(0.5, 0.0)];
    let ch = fixed(vec![h.clone()], &[10]);
    let q = mrt_beamformer(&ch, &[true], &[10]).unwrap();
    let norm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for (qi, hi) in q.iter().zip(&h) {
        assert!((qi - hi / norm).norm() < 1e-12);
    }
}

#[test]
fn mrt_balances_orthogonal_equal_channels() {
    let ch = fixed(
        vec![
            vec![C::new(1.0, 0.0), C::new(0.0, 0.0)],
            vec![C::new(0.0, 0.0), C::new(1.0, 0.0)],
        ],
        &[50, 50],
    );
    let q = mrt_beamformer(&ch, &[true, true], &[50, 50]).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!((q[0] - C::new(r, 0.0)).norm() < 1e-12);
    assert!((q[1] - C::new(r, 0.0)).norm() < 1e-12);
    let g = effective_gains(&q, &ch);
    assert!((g[0] - g[1]).abs() < 1e-12 && (g[0] - 0.5).abs() < 1e-12);
}

#[test]
fn mrt_falls_back_when_channels_cancel() {
    let h = vec![C::new(1.0, 0.0), C::new(0.0, 1.0)];
    let minus: Vec<C> = h.iter().map(|z| -z).collect();
    let ch = fixed(vec![h.clone(), minus], &[5, 5]);
    let q = mrt_beamformer(&ch, &[true, true], &[5, 5]).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert!((q[0] - h[0] * s).norm() < 1e-12 && (q[1] - h[1] * s).norm() < 1e-12);
    assert!(mrt_beamformer(&ch, &[false, false], &[5, 5]).is_err());
}

#[test]
fn select_all_on_one_user_matches_solve() {
    for seed in 0..5 {
        let ch = los(1, 2, seed);
        let counts = ch.sample_counts();
        let cfg = PddConfig::default();
        let a = select_all(&ch, &counts, &ota(), &cfg).unwrap();
        let b = pdd::solve(&ch, &counts, &ota(), &cfg).unwrap();
        assert_eq!(a.selection.binary, vec![true]);
        assert_eq!(b.selection.binary, vec![true]);
        assert!(
            (a.r_value - b.r_value).abs() <= 1e-9 * b.r_value,
            "{} vs {}",
            a.r_value,
            b.r_value
        );
    }
}

#[test]
fn joint_selection_rarely_loses_to_select_all() {
    let cfg = PddConfig::default();
    let mut wins = 0;
    for seed in 0..50 {
        let ch = los(5, 2, 100 + seed);
        let counts = ch.sample_counts();
        let all = select_all(&ch, &counts, &ota(), &cfg).unwrap();
        assert_eq!(all.selected_count(), 5);
        let joint = pdd::solve(&ch, &counts, &ota(), &cfg).unwrap();
        if all.r_value >= joint.r_value * (1.0 - 1e-9) {
            wins += 1;
        }
    }
    assert!(wins >= 45, "select-all r >= solve r on {wins}/50");
}

#[test]
fn pdd_beamformer_rarely_loses_to_mrt_at_its_selection() {
    let cfg = PddConfig::default();
    let mut wins = 0;
    for seed in 0..50 {
        let ch = los(5, 2, 200 + seed);
        let counts = ch.sample_counts();
        let res = pdd::solve(&ch, &counts, &ota(), &cfg).unwrap();
        let at = ch.at_layout(&res.layout).unwrap();
        let sel = &res.selection.binary;
        let mrt = mrt_beamformer(&at, sel, &counts).unwrap();
        let r_pdd = objective_r(&res.beamformer, sel, &at, &counts, &ota());
        let r_mrt = objective_r(&mrt, sel, &at, &counts, &ota());
        if r_pdd <= r_mrt * (1.0 + 1e-9) {
            wins += 1;
        }
    }
    assert!(wins >= 45, "r(pdd q) <= r(mrt q) on {wins}/50");
}

proptest! {
    #[test]
    fn rma_layouts_respect_spacing(seed in any::<u64>(), n in 1usize..6, width in 3.0f64..12.0, gap in 0.1f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = rma_layout(n, 0.0, width, gap, &mut rng).unwrap();
        prop_assert_eq!(layout.len(), n);
        prop_assert!(layout.is_feasible());
    }
}

#[test]
fn rma_rejects_a_region_that_cannot_fit_the_array() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(rma_layout(5, 0.0, 1.0, 0.5, &mut rng), Err(Error::Config(_))));
}

#[test]
fn aps_with_one_antenna_is_the_grid_argmin() {
    let ch = los(4, 1, 3);
    let counts = ch.sample_counts();
    let layout = aps_layout(&ch, &counts, &ota(), 50).unwrap();
    let chosen = all_mrt_r(&ch.at_layout(&layout).unwrap());
    let best = (0..=400)
        .map(|i| {
            let probe = AntennaLayout::new(vec![i as f64 * 0.02], 0.0, 8.0, 0.5).unwrap();
            all_mrt_r(&ch.at_layout(&probe).unwrap())
        })
        .fold(f64::INFINITY, f64::min);
    assert!(chosen <= best * (1.0 + 1e-12), "{chosen} vs {best}");
}

#[test]
fn aps_rarely_loses_to_random_positions() {
    let mut wins = 0;
    for seed in 0..50 {
        let ch = los(6, 3, 300 + seed);
        let counts = ch.sample_counts();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rma = rma_layout(3, 0.0, 8.0, 0.5, &mut rng).unwrap();
        let aps = aps_layout(&ch, &counts, &ota(), 50).unwrap();
        assert!(aps.is_feasible());
        let r_aps = all_mrt_r(&ch.at_layout(&aps).unwrap());
        let r_rma = all_mrt_r(&ch.at_layout(&rma).unwrap());
        if r_aps <= r_rma {
            wins += 1;
        }
    }
    assert!(wins >= 45, "r(aps) <= r(rma) on {wins}/50");
}

#[test]
fn greedy_threshold_extremes() {
    for seed in 0..10 {
        let ch = los(8, 2, 400 + seed);
        let counts = ch.sample_counts();
        let keep = dc_like_greedy(&ch, &counts, &ota(), f64::INFINITY).unwrap();
        assert_eq!(keep.selected_count(), 8);
        let one = dc_like_greedy(&ch, &counts, &ota(), 1e-300).unwrap();
        assert_eq!(one.selected_count(), 1);
    }
    assert!(matches!(
        dc_like_greedy(&los(3, 1, 0), &[270; 3], &ota(), 0.0),
        Err(Error::Config(_))
    ));
}

#[test]
fn greedy_with_one_antenna_keeps_the_strongest_user_last() {
    for seed in 0..10 {
        let ch = los(6, 1, 500 + seed);
        let counts = ch.sample_counts();
        let one = dc_like_greedy(&ch, &counts, &ota(), 1e-300).unwrap();
        let strongest = (0..6)
            .max_by(|&a, &b| {
                let g = |u: usize| ch.vectors[u][0].norm_sqr() / (counts[u] as f64).powi(2);
                g(a).partial_cmp(&g(b)).unwrap()
            })
            .unwrap();
        assert!(one.selection[strongest]);
    }
}

#[test]
fn greedy_count_shrinks_with_the_threshold() {
    for seed in 0..10 {
        let ch = los(10, 4, 600 + seed);
        let counts = ch.sample_counts();
        let mut prev = usize::MAX;
        for k in 0..40 {
            let j = 10f64.powf(12.0 - 0.5 * k as f64);
            let n = dc_like_greedy(&ch, &counts, &ota(), j).unwrap().selected_count();
            assert!(n <= prev, "J={j}: {n} after {prev}");
            prev = n;
        }
    }
}

#[test]
fn oracle_single_user_closed_form() {
    let cfg = ota();
    for seed in 0..5 {
        let ch = los(1, 1, 700 + seed);
        let best = brute_force_oracle(&ch, &ch.sample_counts(), &cfg, 0.01).unwrap();
        assert_eq!(best.selection, vec![true]);
        let expected = cfg.noise_power / (cfg.max_power * ch.vectors[0][0].norm_sqr());
        assert!((best.r_value - expected).abs() <= 1e-12 * expected);
    }
}

#[test]
fn oracle_drops_a_weak_user_only_when_it_pays() {
    // r({1,2}) = σ²/(P_a 4S²)·S²/g_weak, r({strong}) = S² + σ²/(P_a g_strong).
    let s = 10usize;
    let weak: f64 = 1e-6;
    let ch = fixed(vec![vec![C::new(weak.sqrt(), 0.0)], vec![C::new(1.0, 0.0)]], &[s, s]);
    let s2 = (s * s) as f64;
    for noise in [1e-6, 1e-4, 1e-3, 1e-2] {
        let cfg = OtaConfig::new(1.0, noise, 1.0).unwrap();
        let keep = noise / (4.0 * s2) * s2 / weak;
        let drop = s2 + noise;
        let best = brute_force_oracle(&ch, &[s, s], &cfg, 0.01).unwrap();
        let expect_drop = drop < keep;
        assert_eq!(best.selection, vec![!expect_drop, true], "noise {noise}");
        assert!((best.r_value - keep.min(drop)).abs() <= 1e-9 * keep.min(drop));
    }
}

#[test]
fn oracle_is_never_beaten_by_pdd() {
    let cfg = PddConfig::default();
    for seed in 0..10 {
        let ch = los(5, 1, 800 + seed);
        let counts = ch.sample_counts();
        let best = brute_force_oracle(&ch, &counts, &ota(), 0.01).unwrap();
        let res = pdd::solve(&ch, &counts, &ota(), &cfg).unwrap();
        assert!(best.r_value <= res.r_value * (1.0 + 1e-9), "seed {seed}");
    }
    for seed in 0..5 {
        let ch = los(4, 2, 900 + seed);
        let counts = ch.sample_counts();
        let best = brute_force_oracle(&ch, &counts, &ota(), 0.01).unwrap();
        let cfg = PddConfig {
            optimize_positions: false,
            ..PddConfig::default()
        };
        let res = pdd::solve(&ch, &counts, &ota(), &cfg).unwrap();
        // The beamformer grid costs at most a few tenths of a percent.
        assert!(best.r_value <= res.r_value * 1.01, "seed {seed}");
    }
}

#[test]
fn oracle_limits_are_config_errors() {
    let many = los(13, 1, 0);
    assert!(matches!(
        brute_force_oracle(&many, &many.sample_counts(), &ota(), 0.01),
        Err(Error::Config(_))
    ));
    let wide = los(3, 3, 0);
    assert!(matches!(
        brute_force_oracle(&wide, &wide.sample_counts(), &ota(), 0.01),
        Err(Error::Config(_))
    ));
}
