use std::cmp::Ordering;

use crate::channel::AntennaLayout;
use crate::linalg::{normalized, CMatrix};
use crate::surrogate::{effective_gains, objective_from_gains, SelectionVector};
use crate::Real;

use super::{PddProblem, PddResult, PddState};

/// Turns a (possibly infeasible) iterate into a feasible triple.
///
/// The layout is projected onto the region and spacing bound, `q` is
/// normalized and `e` thresholded at `1/2`. The selection is then refined
/// greedily against the exact surrogate: users are dropped one by one in
/// order of increasing `|q^H h_u|²/S_u²` and the best selection along that
/// path is kept, after which unselected users are offered back in the
/// reverse order whenever that lowers `r`. An
/// empty threshold result is replaced by the user with the largest
/// `|q^H h_u|²/S_u²`.
pub fn recover_feasible<T: Real>(state: &PddState<T>, p: &PddProblem<T>) -> PddResult<T> {
    let layout = recovered_layout(state, p);
    let channels = p.channels.at_layout(&layout).unwrap_or_else(|_| p.channels.clone());

    let q = normalized(&state.q)
        .or_else(|| normalized(&state.q_tilde))
        .unwrap_or_else(|| {
            let mut gram = CMatrix::zeros(p.antennas);
            for h in &channels.vectors {
                gram.add_outer(h, T::one());
            }
            gram.principal_eigenvector(500)
        });
    let gains = effective_gains(&q, &channels);
    let counts = &p.sample_counts;
    let r_of = |sel: &[bool]| objective_from_gains(sel, &gains, counts, &p.ota);

    let selection: Vec<bool> = if p.cfg.freeze_selection {
        vec![true; p.users]
    } else {
        let mut sel: Vec<bool> = state.e.iter().map(|&e| e >= T::lit(0.5)).collect();
        if !sel.iter().any(|&b| b) {
            sel = strongest_user(&gains, counts);
        }
        let strength = |u: usize| {
            let s = T::from_count(counts[u]);
            gains[u] / (s * s)
        };
        let mut order: Vec<usize> = (0..p.users).collect();
        order.sort_by(|&a, &b| strength(a).partial_cmp(&strength(b)).unwrap_or(Ordering::Equal));

        // Walk the whole drop path and keep its best point.
        let mut current = r_of(&sel);
        let mut trial = sel.clone();
        for &u in &order {
            if !trial[u] || trial.iter().filter(|&&b| b).count() <= 1 {
                continue;
            }
            trial[u] = false;
            let r = r_of(&trial);
            if r < current {
                current = r;
                sel.clone_from(&trial);
            }
        }
        for &u in order.iter().rev() {
            if sel[u] {
                continue;
            }
            sel[u] = true;
            let r = r_of(&sel);
            if r < current {
                current = r;
            } else {
                sel[u] = false;
            }
        }
        sel
    };

    let r_value = r_of(&selection);
    let relaxed = state.e.iter().map(|&e| e.max(T::zero()).min(T::one())).collect();
    PddResult {
        beamformer: q,
        selection: SelectionVector {
            relaxed,
            binary: selection,
        },
        layout,
        r_value,
        violation: state.violation(p),
        outer_iterations: 0,
        inner_iterations: 0,
        converged: false,
        diagnostics: Vec::new(),
    }
}

fn strongest_user<T: Real>(gains: &[T], counts: &[usize]) -> Vec<bool> {
    let mut best = (T::neg_infinity(), 0);
    for (u, (&g, &s)) in gains.iter().zip(counts).enumerate() {
        let s = T::from_count(s);
        let ratio = g / (s * s);
        if ratio > best.0 {
            best = (ratio, u);
        }
    }
    let mut sel = vec![false; gains.len()];
    sel[best.1] = true;
    sel
}

fn recovered_layout<T: Real>(state: &PddState<T>, p: &PddProblem<T>) -> AntennaLayout<T> {
    if !p.optimizes_positions() || state.x.is_empty() {
        return p.channels.layout.clone();
    }
    let groups = T::from_count(state.x.len());
    let positions: Vec<T> = (0..p.antennas)
        .map(|n| state.x.iter().fold(T::zero(), |acc, x| acc + x[n]) / groups)
        .collect();
    let base = &p.initial_layout;
    let mut layout = AntennaLayout {
        positions,
        region_lo: base.region_lo,
        region_hi: base.region_hi,
        min_gap: base.min_gap,
    };
    if layout.positions.iter().any(|x| !x.is_finite()) {
        return base.clone();
    }
    layout.repair();
    layout
}
