//! Exact block minimizers of the augmented Lagrangian.
//!
//! Every function below minimizes `F + 1/(2κ) Σ |residual + κλ|²` over its
//! own variables with all other variables fixed, subject to the hard
//! constraints kept inside that block. Penalties are written as
//! `|residual + κλ|²`, so each block sees "targets" of the form
//! `copy ∓ κλ`.

use num_complex::Complex;

use crate::linalg::{depressed_cubic_roots, normalized, phase, CMatrix};
use crate::Real;

use super::state::dot;
use super::{EUpdateMode, PddProblem, PddState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    /// `e`
    Selection,
    /// `{α, γ}` under `α ≤ |γ|²`
    GainPair,
    /// `c ≥ 0`
    MaxRatio,
    /// `{ē, α̂}` under `ē S² ≤ α̂`
    SelectionCap,
    /// pair differences `d` under the linearized spacing bound
    Spacing,
    /// `q̃` on the unit sphere
    BeamCopy,
    /// unit-modulus steering copies `b_u`
    Steering,
    /// `{ẽ, η̂}` under `η̂ = Σ ẽ S`
    SelectionMass,
    /// `{ê, η̃}` under `η̃ = Σ ê S`
    SelectionMassCopy,
    /// `α̃`
    GainCopy,
    /// `q`
    Beamformer,
    /// antenna coordinates `x`
    Positions,
    /// `η̄ ≥ ε`
    MassProduct,
    /// `c̃`
    MaxRatioCopy,
}

pub const ROUND1: [Block; 7] = [
    Block::Selection,
    Block::GainPair,
    Block::MaxRatio,
    Block::SelectionCap,
    Block::Spacing,
    Block::BeamCopy,
    Block::Steering,
];
pub const ROUND2: [Block; 5] = [
    Block::SelectionMass,
    Block::SelectionMassCopy,
    Block::GainCopy,
    Block::Beamformer,
    Block::Positions,
];
pub const ROUND3: [Block; 2] = [Block::MassProduct, Block::MaxRatioCopy];

pub fn apply_block<T: Real>(block: Block, s: &mut PddState<T>, p: &PddProblem<T>) {
    match block {
        Block::Selection => update_e(s, p),
        Block::GainPair => gain_pair(s, p),
        Block::MaxRatio => max_ratio(s, p),
        Block::SelectionCap => selection_cap(s, p),
        Block::Spacing => spacing(s, p),
        Block::BeamCopy => beam_copy(s),
        Block::Steering => steering(s, p),
        Block::SelectionMass => selection_mass(s, p),
        Block::SelectionMassCopy => selection_mass_copy(s, p),
        Block::GainCopy => gain_copy(s),
        Block::Beamformer => beamformer(s, p),
        Block::Positions => positions(s, p),
        Block::MassProduct => mass_product(s, p),
        Block::MaxRatioCopy => max_ratio_copy(s),
    }
}

pub fn update_round1<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    ROUND1.iter().for_each(|&b| apply_block(b, s, p));
}

pub fn update_round2<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    ROUND2.iter().for_each(|&b| apply_block(b, s, p));
    s.eta = p.nu * s.c / s.eta_bar;
}

pub fn update_round3<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    ROUND3.iter().for_each(|&b| apply_block(b, s, p));
    s.eta = p.nu * s.c / s.eta_bar;
}

/// Selection update. `e` only appears in `|e - copy + κλ|²` for its three
/// copies, so the minimizer is driven by the mean of the targets
/// `copy - κλ`.
pub fn update_e<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    if p.cfg.freeze_selection {
        s.e.iter_mut().for_each(|e| *e = T::one());
        return;
    }
    let k = s.kappa;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let half = T::lit(0.5);
    for u in 0..p.users {
        let sum =
            s.e_tilde[u] + s.e_hat[u] + s.e_bar[u] - k * (s.duals.e_tilde[u] + s.duals.e_hat[u] + s.duals.e_bar[u]);
        match p.cfg.e_update_mode {
            EUpdateMode::BinaryExact => {
                let mean = sum / three;
                if mean > half {
                    s.e[u] = T::one();
                } else if mean < half {
                    s.e[u] = T::zero();
                }
            }
            EUpdateMode::PaperClosedForm => {
                let mult = T::zero().max(-two * (three + sum)).max(two * sum);
                let e = (mult / two + sum) / (three + mult);
                s.e[u] = e.max(T::zero()).min(T::one());
            }
        }
    }
}

/// Minimizes `(α - p)² + |γ - z|²` subject to `0 ≤ α ≤ |γ|²`.
pub(crate) fn project_gain_pair<T: Real>(p: T, z: Complex<T>, fallback: Complex<T>) -> (T, Complex<T>) {
    if p < T::zero() {
        return (T::zero(), z);
    }
    let rz = z.norm();
    if p <= rz * rz {
        return (p, z);
    }
    // On the boundary α = ρ², γ = ρ·phase(z): minimize (ρ² - p)² + (ρ - |z|)².
    let cost = |r: T| (r * r - p) * (r * r - p) + (r - rz) * (r - rz);
    let half = T::lit(0.5);
    let mut best = (cost(T::zero()), T::zero());
    for r in depressed_cubic_roots((T::one() - T::lit(2.0) * p) * half, -rz * half) {
        if r > T::zero() && r.is_finite() {
            let c = cost(r);
            if c < best.0 {
                best = (c, r);
            }
        }
    }
    let rho = best.1;
    let dir = phase(z)
        .or_else(|| phase(fallback))
        .unwrap_or(Complex::new(T::one(), T::zero()));
    (rho * rho, dir * rho)
}

fn gain_pair<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    let k = s.kappa;
    for u in 0..p.users {
        let target_alpha = s.alpha_tilde[u] - k * s.duals.alpha_tilde[u];
        let b = s.b.get(u).map_or(&[][..], Vec::as_slice);
        let target_gamma = p.effective(u, &s.q, b) - s.duals.gamma[u] * k;
        let (a, g) = project_gain_pair(target_alpha, target_gamma, s.gamma[u]);
        s.alpha[u] = a;
        s.gamma[u] = g;
    }
}

fn max_ratio<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    let k = s.kappa;
    s.c = (s.c_tilde - k * s.duals.c_tilde - k * p.noise_weight / s.eta_bar).max(T::zero());
}

fn selection_cap<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    let k = s.kappa;
    for u in 0..p.users {
        let pe = s.e[u] + k * s.duals.e_bar[u];
        let pa = s.alpha_tilde[u] * s.c_tilde - k * s.duals.alpha_hat[u];
        let w = p.cap[u];
        let excess = w * pe - pa;
        if excess > T::zero() {
            let t = excess / (w * w + T::one());
            s.e_bar[u] = pe - t * w;
            s.alpha_hat[u] = pa + t;
        } else {
            s.e_bar[u] = pe;
            s.alpha_hat[u] = pa;
        }
    }
}

fn spacing<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    if !p.optimizes_positions() {
        return;
    }
    let k = s.kappa;
    let v = p.initial_layout.min_gap;
    for g in 0..p.layout_groups() {
        for (i, &(n, m)) in p.pairs.iter().enumerate() {
            let t = (s.x[g][m] - s.x[g][n]) - k * s.duals.spacing[g][i];
            s.dx[g][i] = if s.anchors[g][i] >= T::zero() {
                t.max(v)
            } else {
                t.min(-v)
            };
        }
    }
}

fn beam_copy<T: Real>(s: &mut PddState<T>) {
    let k = s.kappa;
    let target: Vec<Complex<T>> = s.q.iter().zip(&s.duals.q).map(|(q, l)| q + l * k).collect();
    if let Some(v) = normalized(&target) {
        s.q_tilde = v;
    }
}

fn steering<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    if !p.optimizes_positions() {
        return;
    }
    let k = s.kappa;
    for u in 0..p.users {
        let a = p.steering(u, &s.x[p.group_of[u]]);
        let goal = s.gamma[u] + s.duals.gamma[u] * k;
        let coeff: Vec<Complex<T>> = s.q.iter().map(|q| q.conj() * p.beta[u]).collect();
        let mut total = coeff
            .iter()
            .zip(&s.b[u])
            .fold(Complex::new(T::zero(), T::zero()), |acc, (c, b)| acc + c * b);
        for i in 0..p.antennas {
            let rest = total - coeff[i] * s.b[u][i];
            let t = goal - rest;
            let m = a[i] + s.duals.steering[u][i] * k + coeff[i].conj() * t;
            if let Some(ph) = phase(m) {
                s.b[u][i] = ph;
            }
            total = rest + coeff[i] * s.b[u][i];
        }
    }
}

/// Minimizes `Σ (y_u - p_u)² + a m² - 2 b m` with `m = Σ S_u y_u`.
fn mass_coupled_copy<T: Real>(targets: &[T], w: &[T], a: T, b: T) -> (Vec<T>, T) {
    let big_p = dot(w, targets);
    let big_q = dot(w, w);
    let m = (big_p + b * big_q) / (T::one() + a * big_q);
    let shift = a * m - b;
    let y = targets.iter().zip(w).map(|(&t, &s)| t - shift * s).collect();
    (y, m)
}

fn selection_mass<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    let k = s.kappa;
    let two_k = T::lit(2.0) * k;
    let w = p.mass_weight;
    let a = two_k * w + T::one() + s.eta_tilde * s.eta_tilde;
    let b =
        two_k * w * p.mass + (s.eta_tilde + k * s.duals.eta_tilde) + s.eta_tilde * (s.eta_bar + k * s.duals.eta_bar);
    let targets: Vec<T> = (0..p.users).map(|i| s.e[i] + k * s.duals.e_tilde[i]).collect();
    let (y, m) = mass_coupled_copy(&targets, &p.samples, a, b);
    s.e_tilde = y;
    s.eta_hat = m;
}

fn selection_mass_copy<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    let k = s.kappa;
    let a = T::one() + s.eta_hat * s.eta_hat;
    let b = (s.eta_hat - k * s.duals.eta_tilde) + s.eta_hat * (s.eta_bar + k * s.duals.eta_bar);
    let targets: Vec<T> = (0..p.users).map(|i| s.e[i] + k * s.duals.e_hat[i]).collect();
    let (y, m) = mass_coupled_copy(&targets, &p.samples, a, b);
    s.e_hat = y;
    s.eta_tilde = m;
}

fn gain_copy<T: Real>(s: &mut PddState<T>) {
    let k = s.kappa;
    let c = s.c_tilde;
    for u in 0..s.alpha_tilde.len() {
        let from_alpha = s.alpha[u] + k * s.duals.alpha_tilde[u];
        let from_hat = s.alpha_hat[u] + k * s.duals.alpha_hat[u];
        s.alpha_tilde[u] = ((from_alpha + c * from_hat) / (T::one() + c * c)).max(T::zero());
    }
}

fn beamformer<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    let k = s.kappa;
    let mut gram = CMatrix::identity(p.antennas);
    let mut rhs: Vec<Complex<T>> = s.q_tilde.iter().zip(&s.duals.q).map(|(q, l)| q - l * k).collect();
    for u in 0..p.users {
        let b = s.b.get(u).map_or(&[][..], Vec::as_slice);
        let w = p.gain_vector(u, b);
        gram.add_outer(&w, T::one());
        let goal = (s.gamma[u] + s.duals.gamma[u] * k).conj();
        for (r, wi) in rhs.iter_mut().zip(&w) {
            *r += wi * goal;
        }
    }
    if let Some(q) = gram.solve_hpd(&rhs) {
        if q.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            s.q = q;
        }
    }
}

/// Penalty terms of one antenna coordinate: `Σ_u |e^{j A_u x} - t_u|²` plus
/// `Σ (x - τ)²` from the pair differences it enters.
struct CoordinateCost<T: Real> {
    waves: Vec<(T, T, T)>,
    quads: Vec<T>,
    constant: T,
}

impl<T: Real> CoordinateCost<T> {
    /// `(slope, |t|, ∠t)` per user.
    fn eval(&self, x: T) -> T {
        let two = T::lit(2.0);
        let mut j = self.constant;
        for &(a, r, ph) in &self.waves {
            j -= two * r * (a * x - ph).cos();
        }
        for &tau in &self.quads {
            j += (x - tau) * (x - tau);
        }
        j
    }

    /// Minimizer of the phase-linearized cost around `x0`.
    fn linearized_minimizer(&self, x0: T) -> Option<T> {
        let mut num = T::zero();
        let mut den = T::zero();
        for &(a, r, ph) in &self.waves {
            if r == T::zero() {
                continue;
            }
            let wrap = ((a * x0 - ph) / T::TAU()).round();
            let unwrapped = ph + T::TAU() * wrap;
            num += a * unwrapped;
            den += a * a;
        }
        for &tau in &self.quads {
            num += tau;
            den += T::one();
        }
        (den > T::zero()).then(|| num / den).filter(|x| x.is_finite())
    }
}

fn golden_min<T: Real>(f: &impl Fn(T) -> T, mut lo: T, mut hi: T, iters: usize) -> T {
    let ratio = T::lit(0.618_033_988_749_894_8);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

fn positions<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    if !p.optimizes_positions() {
        return;
    }
    let k = s.kappa;
    let lo = p.initial_layout.region_lo;
    let hi = p.initial_layout.region_hi;
    let step = p.channels.wavelength / T::from_count(p.cfg.position_grid_per_wavelength);
    let points = ((hi - lo) / step).ceil().to_usize().unwrap_or(0).clamp(1, 4096) + 1;
    let grid_step = if points > 1 {
        (hi - lo) / T::from_count(points - 1)
    } else {
        T::zero()
    };
    for g in 0..p.layout_groups() {
        for n in 0..p.antennas {
            let mut waves = Vec::with_capacity(p.groups[g].len());
            let mut constant = T::zero();
            for &u in &p.groups[g] {
                let t = s.b[u][n] - s.duals.steering[u][n] * k;
                constant += T::one() + t.norm_sqr();
                waves.push((p.slopes[u], t.norm(), t.arg()));
            }
            let mut quads = Vec::new();
            for (i, &(a, b)) in p.pairs.iter().enumerate() {
                let d = s.dx[g][i] + k * s.duals.spacing[g][i];
                if a == n {
                    quads.push(s.x[g][b] - d);
                } else if b == n {
                    quads.push(s.x[g][a] + d);
                }
            }
            let cost = CoordinateCost { waves, quads, constant };
            let f = |x: T| cost.eval(x);
            let current = s.x[g][n];
            let mut best = (f(current), current);
            let consider = |x: T, best: &mut (T, T)| {
                let x = x.max(lo).min(hi);
                let v = f(x);
                if v < best.0 {
                    *best = (v, x);
                }
            };
            if let Some(x) = cost.linearized_minimizer(current) {
                if x < lo || x > hi {
                    let pick = if f(lo) <= f(hi) { lo } else { hi };
                    consider(pick, &mut best);
                } else {
                    consider(x, &mut best);
                }
            }
            let mut grid_best = (T::infinity(), lo);
            for i in 0..points {
                let x = lo + grid_step * T::from_count(i);
                let v = f(x);
                if v < grid_best.0 {
                    grid_best = (v, x);
                }
            }
            consider(grid_best.1, &mut best);
            if grid_step > T::zero() {
                let a = (grid_best.1 - grid_step).max(lo);
                let b = (grid_best.1 + grid_step).min(hi);
                consider(golden_min(&f, a, b, 60), &mut best);
            }
            s.x[g][n] = best.1;
        }
    }
}

fn mass_product<T: Real>(s: &mut PddState<T>, p: &PddProblem<T>) {
    let k = s.kappa;
    let t = s.eta_hat * s.eta_tilde - k * s.duals.eta_bar;
    let load = k * p.noise_weight * s.c;
    let y = if load > T::zero() {
        // Positive root of y³ - t y² - load = 0; Newton from above converges
        // monotonically because the cubic is convex and increasing there.
        let mut y = t.max(T::zero()) + load.cbrt();
        for _ in 0..200 {
            let g = y * y * y - t * y * y - load;
            let dg = T::lit(3.0) * y * y - T::lit(2.0) * t * y;
            if !(dg > T::zero()) {
                break;
            }
            let next = y - g / dg;
            if !(next < y) {
                break;
            }
            y = next;
        }
        y
    } else {
        t
    };
    s.eta_bar = y.max(p.eta_floor);
}

fn max_ratio_copy<T: Real>(s: &mut PddState<T>) {
    let k = s.kappa;
    let mut num = s.c + k * s.duals.c_tilde;
    let mut den = T::one();
    for u in 0..s.alpha_tilde.len() {
        num += s.alpha_tilde[u] * (s.alpha_hat[u] + k * s.duals.alpha_hat[u]);
        den += s.alpha_tilde[u] * s.alpha_tilde[u];
    }
    s.c_tilde = (num / den).max(T::zero());
}
