use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{normalized, CMatrix};
use crate::Real;

use super::PddProblem;

/// One value per equality coupling of the augmented Lagrangian. Used both
/// for the residuals and for the scaled multipliers `λ`.
///
/// | field         | residual                          |
/// |---------------|-----------------------------------|
/// | `e_tilde`     | `e - ẽ`                           |
/// | `e_hat`       | `e - ê`                           |
/// | `e_bar`       | `e - ē`                           |
/// | `gamma`       | `γ_u - β_u q^H b_u`               |
/// | `steering`    | `a(x; θ_u) - b_u`                 |
/// | `alpha_tilde` | `α - α̃`                           |
/// | `alpha_hat`   | `α̂ - α̃ c̃`                         |
/// | `c_tilde`     | `c - c̃`                           |
/// | `eta_tilde`   | `η̃ - η̂`                           |
/// | `eta_bar`     | `η̄ - η̂ η̃`                         |
/// | `q`           | `q - q̃`                           |
/// | `spacing`     | `d_nm - (x_m - x_n)` per layout   |
#[derive(Debug, Clone, PartialEq)]
pub struct Couplings<T: Real> {
    pub e_tilde: Vec<T>,
    pub e_hat: Vec<T>,
    pub e_bar: Vec<T>,
    pub gamma: Vec<Complex<T>>,
    pub steering: Vec<Vec<Complex<T>>>,
    pub alpha_tilde: Vec<T>,
    pub alpha_hat: Vec<T>,
    pub c_tilde: T,
    pub eta_tilde: T,
    pub eta_bar: T,
    pub q: Vec<Complex<T>>,
    pub spacing: Vec<Vec<T>>,
}

impl<T: Real> Couplings<T> {
    pub fn zeros(problem: &PddProblem<T>) -> Self {
        let u = problem.users;
        let z = Complex::new(T::zero(), T::zero());
        let (steering, spacing) = if problem.optimizes_positions() {
            (
                vec![vec![z; problem.antennas]; u],
                vec![vec![T::zero(); problem.pairs.len()]; problem.layout_groups()],
            )
        } else {
            (Vec::new(), Vec::new())
        };
        Self {
            e_tilde: vec![T::zero(); u],
            e_hat: vec![T::zero(); u],
            e_bar: vec![T::zero(); u],
            gamma: vec![z; u],
            steering,
            alpha_tilde: vec![T::zero(); u],
            alpha_hat: vec![T::zero(); u],
            c_tilde: T::zero(),
            eta_tilde: T::zero(),
            eta_bar: T::zero(),
            q: vec![z; problem.antennas],
            spacing,
        }
    }

    /// Every entry as a complex number, in a fixed order.
    pub fn flatten(&self) -> Vec<Complex<T>> {
        let re = |x: &T| Complex::new(*x, T::zero());
        let mut out = Vec::new();
        out.extend(self.e_tilde.iter().map(re));
        out.extend(self.e_hat.iter().map(re));
        out.extend(self.e_bar.iter().map(re));
        out.extend(self.gamma.iter().copied());
        out.extend(self.steering.iter().flatten().copied());
        out.extend(self.alpha_tilde.iter().map(re));
        out.extend(self.alpha_hat.iter().map(re));
        out.push(re(&self.c_tilde));
        out.push(re(&self.eta_tilde));
        out.push(re(&self.eta_bar));
        out.extend(self.q.iter().copied());
        out.extend(self.spacing.iter().flatten().map(re));
        out
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        fn real<T: Real>(a: &mut [T], b: &[T], s: T) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += *y * s);
        }
        fn cplx<T: Real>(a: &mut [Complex<T>], b: &[Complex<T>], s: T) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y * s);
        }
        real(&mut self.e_tilde, &other.e_tilde, scale);
        real(&mut self.e_hat, &other.e_hat, scale);
        real(&mut self.e_bar, &other.e_bar, scale);
        cplx(&mut self.gamma, &other.gamma, scale);
        for (a, b) in self.steering.iter_mut().zip(&other.steering) {
            cplx(a, b, scale);
        }
        real(&mut self.alpha_tilde, &other.alpha_tilde, scale);
        real(&mut self.alpha_hat, &other.alpha_hat, scale);
        self.c_tilde += other.c_tilde * scale;
        self.eta_tilde += other.eta_tilde * scale;
        self.eta_bar += other.eta_bar * scale;
        cplx(&mut self.q, &other.q, scale);
        for (a, b) in self.spacing.iter_mut().zip(&other.spacing) {
            real(a, b, scale);
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.flatten().iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }
}

/// Primal variables, scaled multipliers and penalty of the solver.
///
/// Hard constraints kept inside the blocks: `e ∈ {0,1}` (or `[0,1]`),
/// `η̂ = Σ ẽ S`, `η̃ = Σ ê S`, `ē S² ≤ α̂`, `α ≤ |γ|²`, `c ≥ 0`,
/// `η̄ ≥ ε`, `‖q̃‖ = 1`, `|b_un| = 1`, `x` inside the region and the
/// linearized spacing `sgn(anchor)·d ≥ v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PddState<T: Real> {
    pub e: Vec<T>,
    pub e_tilde: Vec<T>,
    pub e_hat: Vec<T>,
    pub e_bar: Vec<T>,
    pub alpha: Vec<T>,
    pub alpha_tilde: Vec<T>,
    pub alpha_hat: Vec<T>,
    pub gamma: Vec<Complex<T>>,
    pub c: T,
    pub c_tilde: T,
    pub eta_hat: T,
    pub eta_tilde: T,
    pub eta_bar: T,
    /// Receive scaling implied by the current iterate, `ν c / η̄`.
    pub eta: T,
    pub q: Vec<Complex<T>>,
    pub q_tilde: Vec<Complex<T>>,
    /// Unit-modulus steering copies, one per user (empty when positions are frozen).
    pub b: Vec<Vec<Complex<T>>>,
    /// Antenna coordinates per layout group.
    pub x: Vec<Vec<T>>,
    /// Pair differences per layout group.
    pub dx: Vec<Vec<T>>,
    /// Linearization points for the spacing constraint.
    pub anchors: Vec<Vec<T>>,
    pub duals: Couplings<T>,
    pub kappa: T,
}

impl<T: Real> PddState<T> {
    /// Residual of every coupling at the current iterate.
    pub fn residuals(&self, p: &PddProblem<T>) -> Couplings<T> {
        let mut r = Couplings::zeros(p);
        for u in 0..p.users {
            r.e_tilde[u] = self.e[u] - self.e_tilde[u];
            r.e_hat[u] = self.e[u] - self.e_hat[u];
            r.e_bar[u] = self.e[u] - self.e_bar[u];
            let b = self.b.get(u).map_or(&[][..], Vec::as_slice);
            r.gamma[u] = self.gamma[u] - p.effective(u, &self.q, b);
            r.alpha_tilde[u] = self.alpha[u] - self.alpha_tilde[u];
            r.alpha_hat[u] = self.alpha_hat[u] - self.alpha_tilde[u] * self.c_tilde;
        }
        if p.optimizes_positions() {
            for u in 0..p.users {
                let a = p.steering(u, &self.x[p.group_of[u]]);
                for ((r, a), b) in r.steering[u].iter_mut().zip(&a).zip(&self.b[u]) {
                    *r = a - b;
                }
            }
            for g in 0..p.layout_groups() {
                for (k, &(n, m)) in p.pairs.iter().enumerate() {
                    r.spacing[g][k] = self.dx[g][k] - (self.x[g][m] - self.x[g][n]);
                }
            }
        }
        r.c_tilde = self.c - self.c_tilde;
        r.eta_tilde = self.eta_tilde - self.eta_hat;
        r.eta_bar = self.eta_bar - self.eta_hat * self.eta_tilde;
        for n in 0..p.antennas {
            r.q[n] = self.q[n] - self.q_tilde[n];
        }
        r
    }

    pub fn violation(&self, p: &PddProblem<T>) -> T {
        self.residuals(p).max_abs()
    }

    /// Rescaled objective `4/U²(M - η̂)² + ν c / η̄`, divided by the
    /// instance's objective scale.
    pub fn objective(&self, p: &PddProblem<T>) -> T {
        p.mass_term(self.eta_hat) + p.noise_weight * self.c / self.eta_bar
    }

    /// Draws an iterate that satisfies every hard constraint but none of the
    /// couplings, with random multipliers and penalty. Intended for testing
    /// that individual block updates never increase the augmented Lagrangian.
    pub fn random<R: Rng + ?Sized>(p: &PddProblem<T>, rng: &mut R) -> Self {
        let mut normal = || -> T { T::lit(StandardNormal.sample(&mut *rng)) };
        let mut cn = Vec::new();
        for _ in 0..4 * p.users * (p.antennas + 4) + 8 * p.antennas + 64 {
            cn.push(normal());
        }
        let mut it = cn.into_iter();
        let mut g = || it.next().unwrap_or(T::zero());
        let u = p.users;
        let e: Vec<T> = (0..u)
            .map(|_| if g() > T::zero() { T::one() } else { T::zero() })
            .collect();
        let e_tilde: Vec<T> = (0..u).map(|_| g() * T::lit(0.5) + T::lit(0.5)).collect();
        let e_hat: Vec<T> = (0..u).map(|_| g() * T::lit(0.5) + T::lit(0.5)).collect();
        let alpha_hat: Vec<T> = (0..u).map(|_| g().abs() + T::lit(0.01)).collect();
        let e_bar: Vec<T> = (0..u)
            .map(|k| (g() * T::lit(0.5)).min(alpha_hat[k] / p.cap[k]))
            .collect();
        let gamma: Vec<Complex<T>> = (0..u).map(|_| Complex::new(g(), g())).collect();
        let alpha: Vec<T> = (0..u).map(|k| gamma[k].norm_sqr() * g().abs().min(T::one())).collect();
        let alpha_tilde = (0..u).map(|_| g().abs()).collect();
        let q: Vec<Complex<T>> = (0..p.antennas).map(|_| Complex::new(g(), g())).collect();
        let q_tilde_raw: Vec<Complex<T>> = (0..p.antennas).map(|_| Complex::new(g(), g())).collect();
        let q_tilde = normalized(&q_tilde_raw).unwrap_or_else(|| unit(p.antennas));
        let eta_hat = dot(&e_tilde, &p.samples);
        let eta_tilde = dot(&e_hat, &p.samples);

        let mut rng_vals = Vec::new();
        let mut b = Vec::new();
        let mut x = Vec::new();
        let mut dx = Vec::new();
        let mut anchors = Vec::new();
        if p.optimizes_positions() {
            let lo = p.initial_layout.region_lo;
            let hi = p.initial_layout.region_hi;
            let v = p.initial_layout.min_gap;
            for _ in 0..u {
                b.push(
                    (0..p.antennas)
                        .map(|_| Complex::from_polar(T::one(), T::TAU() * T::lit(rng.random::<f64>())))
                        .collect::<Vec<_>>(),
                );
            }
            for _ in 0..p.layout_groups() {
                let xs: Vec<T> = (0..p.antennas)
                    .map(|_| lo + (hi - lo) * T::lit(rng.random::<f64>()))
                    .collect();
                let mut d = Vec::new();
                let mut a = Vec::new();
                for _ in &p.pairs {
                    let sign = if rng.random::<bool>() { T::one() } else { -T::one() };
                    let mag = v * (T::one() + T::lit(rng.random::<f64>()));
                    a.push(sign * mag);
                    d.push(sign * (v + v * T::lit(rng.random::<f64>())));
                }
                x.push(xs);
                dx.push(d);
                anchors.push(a);
            }
        }
        let mut duals = Couplings::zeros(p);
        let len = duals.flatten().len();
        for _ in 0..len * 2 {
            rng_vals.push(T::lit(StandardNormal.sample(&mut *rng)));
        }
        let mut vals = rng_vals.into_iter();
        let mut next = || vals.next().unwrap_or(T::zero());
        fill_duals(&mut duals, &mut next);

        let c = T::lit(rng.random::<f64>()) * T::lit(3.0);
        let eta_bar = p.eta_floor + T::lit(rng.random::<f64>()) * p.mass * p.mass;
        let mut st = Self {
            e,
            e_tilde,
            e_hat,
            e_bar,
            alpha,
            alpha_tilde,
            alpha_hat,
            gamma,
            c,
            c_tilde: T::lit(rng.random::<f64>()) * T::lit(3.0),
            eta_hat,
            eta_tilde,
            eta_bar,
            eta: T::zero(),
            q,
            q_tilde,
            b,
            x,
            dx,
            anchors,
            duals,
            kappa: T::lit(0.05 + 5.0 * rng.random::<f64>()),
        };
        st.eta = p.nu * st.c / st.eta_bar;
        st
    }
}

fn fill_duals<T: Real>(d: &mut Couplings<T>, next: &mut impl FnMut() -> T) {
    for v in d.e_tilde.iter_mut().chain(d.e_hat.iter_mut()).chain(d.e_bar.iter_mut()) {
        *v = next();
    }
    for z in d
        .gamma
        .iter_mut()
        .chain(d.steering.iter_mut().flatten())
        .chain(d.q.iter_mut())
    {
        *z = Complex::new(next(), next());
    }
    for v in d
        .alpha_tilde
        .iter_mut()
        .chain(d.alpha_hat.iter_mut())
        .chain(d.spacing.iter_mut().flatten())
    {
        *v = next();
    }
    d.c_tilde = next();
    d.eta_tilde = next();
    d.eta_bar = next();
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn unit<T: Real>(n: usize) -> Vec<Complex<T>> {
    let mut v = vec![Complex::new(T::zero(), T::zero()); n];
    v[0] = Complex::new(T::one(), T::zero());
    v
}

/// `F + 1/(2κ) Σ |residual + κ λ|²` at the current iterate.
pub fn augmented_lagrangian<T: Real>(state: &PddState<T>, p: &PddProblem<T>) -> T {
    let r = state.residuals(p).flatten();
    let l = state.duals.flatten();
    let k = state.kappa;
    let penalty = r
        .iter()
        .zip(&l)
        .fold(T::zero(), |acc, (ri, li)| acc + (ri + li * k).norm_sqr());
    state.objective(p) + penalty / (T::lit(2.0) * k)
}

/// Multiplier ascent `λ += residual/κ`; shrinks `κ` when the violation did not
/// fall below 90% of `prev_violation`; refreshes the spacing anchors. Returns
/// the violation measured before the update.
pub fn dual_penalty_update<T: Real>(state: &mut PddState<T>, p: &PddProblem<T>, prev_violation: T) -> T {
    let r = state.residuals(p);
    let violation = r.max_abs();
    let inv = T::one() / state.kappa;
    state.duals.add_scaled(&r, inv);
    if violation > T::lit(0.9) * prev_violation {
        state.kappa *= p.cfg.penalty_decay;
    }
    state.anchors = state.dx.clone();
    violation
}

impl<T: Real> PddProblem<T> {
    /// Deterministic starting point that satisfies every hard constraint:
    /// everyone selected, the configured warm-start layout and the principal
    /// eigenvector of the channel Gram matrix as beamformer.
    pub fn initial_state(&self) -> PddState<T> {
        self.starting_state(&vec![true; self.users], None, None)
    }

    /// Consistent starting point for a given selection, optionally warm
    /// started from antenna coordinates and a beamformer.
    pub fn starting_state(
        &self,
        selection: &[bool],
        positions: Option<&[T]>,
        beamformer: Option<&[Complex<T>]>,
    ) -> PddState<T> {
        let u = self.users;
        let e: Vec<T> = selection
            .iter()
            .map(|&b| if b { T::one() } else { T::zero() })
            .collect();
        let (b, x, dx) = if self.optimizes_positions() {
            let pos = positions.map_or_else(|| self.initial_layout.positions.clone(), <[T]>::to_vec);
            let b: Vec<Vec<Complex<T>>> = (0..u).map(|k| self.steering(k, &pos)).collect();
            let x = vec![pos.clone(); self.layout_groups()];
            let d: Vec<T> = self.pairs.iter().map(|&(n, m)| pos[m] - pos[n]).collect();
            (b, x, vec![d; self.layout_groups()])
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };

        let q = beamformer.and_then(normalized).unwrap_or_else(|| {
            let mut gram = CMatrix::zeros(self.antennas);
            for k in (0..u).filter(|&k| selection[k]) {
                let bk = b.get(k).map_or(&[][..], Vec::as_slice);
                gram.add_outer(&self.gain_vector(k, bk), T::one());
            }
            gram.principal_eigenvector(500)
        });
        let gamma: Vec<Complex<T>> = (0..u)
            .map(|k| self.effective(k, &q, b.get(k).map_or(&[][..], Vec::as_slice)))
            .collect();
        let alpha: Vec<T> = gamma.iter().map(|g| g.norm_sqr()).collect();
        let c = (0..u)
            .filter(|&k| selection[k] && alpha[k] > T::zero())
            .map(|k| self.cap[k] / alpha[k])
            .fold(T::zero(), T::max);
        let c = if c > T::zero() { c } else { T::one() };
        let alpha_hat: Vec<T> = alpha.iter().map(|&a| a * c).collect();
        let e_bar = (0..u).map(|k| e[k].min(alpha_hat[k] / self.cap[k])).collect();
        let mass = dot(&e, &self.samples);
        let eta_bar = (mass * mass).max(self.eta_floor);
        PddState {
            e_tilde: e.clone(),
            e_hat: e.clone(),
            e,
            e_bar,
            alpha_tilde: alpha.clone(),
            alpha,
            alpha_hat,
            gamma,
            c,
            c_tilde: c,
            eta_hat: mass,
            eta_tilde: mass,
            eta_bar,
            eta: self.nu * c / eta_bar,
            q: q.clone(),
            q_tilde: q,
            b,
            x,
            anchors: dx.clone(),
            dx,
            duals: Couplings::zeros(self),
            kappa: self.cfg.kappa0,
        }
    }
}
