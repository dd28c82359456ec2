//! Small dense complex linear algebra used by the beamforming updates.
//!
//! Problem sizes are tiny (a handful of antennas), so everything is plain
//! row-major `Vec`s without a matrix crate.

use num_complex::Complex;

use crate::Real;

/// `a^H b`.
pub fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

pub fn norm<T: Real>(a: &[Complex<T>]) -> T {
    norm_sqr(a).sqrt()
}

/// Returns `v / ‖v‖`, or `None` when `v` is (numerically) zero.
pub fn normalized<T: Real>(v: &[Complex<T>]) -> Option<Vec<Complex<T>>> {
    let n = norm(v);
    if !(n > T::min_positive_value()) || !n.is_finite() {
        return None;
    }
    Some(v.iter().map(|z| z / n).collect())
}

/// Unit-modulus phase of `z`, or `None` for `z == 0`.
pub fn phase<T: Real>(z: Complex<T>) -> Option<Complex<T>> {
    let r = z.norm();
    if r > T::zero() && r.is_finite() {
        Some(z / r)
    } else {
        None
    }
}

/// Square complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    pub n: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex::new(T::zero(), T::zero()); n * n];
        for i in 0..n {
            data[i * n + i] = Complex::new(T::one(), T::zero());
        }
        Self { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::new(T::zero(), T::zero()); n * n],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.n + j]
    }

    /// `self += weight · v v^H`.
    pub fn add_outer(&mut self, v: &[Complex<T>], weight: T) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                self.data[i * n + j] += v[i] * v[j].conj() * weight;
            }
        }
    }

    pub fn mul_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.n)
            .map(|i| (0..self.n).fold(Complex::new(T::zero(), T::zero()), |acc, j| acc + self.at(i, j) * v[j]))
            .collect()
    }

    /// Solves `self · x = rhs` for a Hermitian positive-definite matrix via
    /// Cholesky. Returns `None` if a pivot is not positive.
    pub fn solve_hpd(&self, rhs: &[Complex<T>]) -> Option<Vec<Complex<T>>> {
        let n = self.n;
        let zero = Complex::new(T::zero(), T::zero());
        let mut l = vec![zero; n * n];
        for j in 0..n {
            let mut d = self.at(j, j).re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > T::zero()) {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = Complex::new(d, T::zero());
            for i in j + 1..n {
                let mut s = self.at(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / d;
            }
        }
        // L y = rhs
        let mut y = vec![zero; n];
        for i in 0..n {
            let mut s = rhs[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i].re;
        }
        // L^H x = y
        let mut x = vec![zero; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i].conj() * x[k];
            }
            x[i] = s / l[i * n + i].re;
        }
        Some(x)
    }

    /// Unit-norm dominant eigenvector of a Hermitian positive-semidefinite
    /// matrix by power iteration from a deterministic start.
    pub fn principal_eigenvector(&self, max_iter: usize) -> Vec<Complex<T>> {
        let n = self.n;
        let scale = T::one() / T::from_count(n).sqrt();
        // Start off the all-ones direction slightly so it cannot be exactly
        // orthogonal to the dominant eigenvector of a structured matrix.
        let mut v: Vec<Complex<T>> = (0..n)
            .map(|i| Complex::new(scale, scale * T::lit(0.1) * T::from_count(i)))
            .collect();
        v = normalized(&v).unwrap_or(v);
        for _ in 0..max_iter {
            let w = self.mul_vec(&v);
            let Some(w) = normalized(&w) else {
                break;
            };
            // Fix the global phase so convergence is measurable.
            let anchor = phase(w.iter().copied().fold(Complex::new(T::zero(), T::zero()), |a, z| a + z))
                .unwrap_or(Complex::new(T::one(), T::zero()));
            let w: Vec<_> = w.iter().map(|z| z * anchor.conj()).collect();
            let diff = w.iter().zip(&v).fold(T::zero(), |acc, (a, b)| acc + (a - b).norm_sqr());
            v = w;
            if diff < T::epsilon() * T::epsilon() {
                break;
            }
        }
        v
    }
}

/// Real roots of `t³ + p t + q = 0`, polished with a Newton step.
pub fn depressed_cubic_roots<T: Real>(p: T, q: T) -> Vec<T> {
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let mut roots = Vec::with_capacity(3);
    let disc = (q / two).powi(2) + (p / three).powi(3);
    if disc > T::zero() {
        let sq = disc.sqrt();
        let u = (-q / two + sq).cbrt();
        let v = (-q / two - sq).cbrt();
        roots.push(u + v);
    } else if p == T::zero() {
        roots.push(T::zero());
    } else {
        // Three real roots (p < 0): trigonometric form.
        let m = two * (-p / three).sqrt();
        let arg = (three * q / (p * m)).max(-T::one()).min(T::one());
        let theta = arg.acos() / three;
        let tau = two * T::PI() / three;
        for k in 0..3 {
            roots.push(m * (theta - tau * T::from_count(k)).cos());
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..2 {
            let f = *r * *r * *r + p * *r + q;
            let df = three * *r * *r + p;
            if df != T::zero() {
                let step = f / df;
                if step.is_finite() {
                    *r -= step;
                }
            }
        }
    }
    roots
}
