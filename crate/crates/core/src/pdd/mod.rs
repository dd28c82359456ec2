//! Penalty dual decomposition (PDD) for joint user selection, receive
//! beamforming and antenna positioning within one communication round.
//!
//! The surrogate `r(q, e; H)` is rewritten with auxiliary copies so that
//! every coupling becomes an equality that is moved into an augmented
//! Lagrangian with penalty `1/(2κ)` and scaled multipliers. The inner loop
//! sweeps three rounds of block updates; each block update is the exact
//! minimizer of the augmented Lagrangian over its own variables, which makes
//! the inner loop monotone. The outer loop updates the multipliers and shrinks
//! `κ` whenever the constraint violation stalls. A final recovery step returns
//! a binary selection, a unit-norm beamformer and a feasible layout.
//!
//! Internally the problem is rescaled (sample counts by their mean, channels
//! by the strongest path gain) so that all variables are of order one; the
//! reported `r_value` is in the original units.

mod blocks;
mod problem;
mod recover;
mod state;

use std::fmt::Write as _;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::{AntennaLayout, ChannelSet};
use crate::ota::OtaConfig;
use crate::surrogate::{objective_r, selected_indices, SelectionVector};
use crate::{Real, Result};

pub use blocks::{apply_block, update_e, update_round1, update_round2, update_round3, Block, ROUND1, ROUND2, ROUND3};
pub use problem::PddProblem;
pub use recover::recover_feasible;
pub use state::{augmented_lagrangian, dual_penalty_update, Couplings, PddState};

/// How the selection variable `e` is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EUpdateMode {
    /// Literal Lagrange-multiplier expression for `e`, clamped to `[0, 1]`.
    PaperClosedForm,
    /// Exact minimizer over the binary set `{0, 1}`.
    #[default]
    BinaryExact,
}

/// Whether all users share one antenna layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutMode {
    /// One server-side layout coupled to every user's steering copy.
    #[default]
    Shared,
    /// A separate layout per user.
    PerUser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default, deny_unknown_fields)]
pub struct PddConfig<T: Real> {
    pub kappa0: T,
    /// Factor `c ∈ (0, 1)` applied to `κ` when the violation stalls.
    pub penalty_decay: T,
    /// Relative change of the augmented Lagrangian that ends the inner loop.
    pub inner_tol: T,
    /// Maximum coupling violation that ends the outer loop.
    pub outer_tol: T,
    pub max_inner: usize,
    pub max_outer: usize,
    pub e_update_mode: EUpdateMode,
    pub layout_mode: LayoutMode,
    /// Optimize antenna coordinates (ignored for position-independent channels).
    pub optimize_positions: bool,
    /// Keep every user selected (the "select all" scheme).
    pub freeze_selection: bool,
    /// Start from the layout the channels were evaluated at.
    pub warm_start: bool,
    /// Extra PDD runs seeded from the previous recovered solution.
    pub max_refinements: usize,
    /// Grid density of the one-dimensional position search, points per λ.
    pub position_grid_per_wavelength: usize,
    pub record_diagnostics: bool,
}

impl<T: Real> Default for PddConfig<T> {
    fn default() -> Self {
        Self {
            kappa0: T::lit(10.0),
            penalty_decay: T::lit(0.7),
            inner_tol: T::lit(1e-6),
            outer_tol: T::lit(1e-4),
            max_inner: 200,
            max_outer: 60,
            e_update_mode: EUpdateMode::BinaryExact,
            layout_mode: LayoutMode::Shared,
            optimize_positions: true,
            freeze_selection: false,
            warm_start: true,
            max_refinements: 10,
            position_grid_per_wavelength: 8,
            record_diagnostics: false,
        }
    }
}

impl<T: Real> PddConfig<T> {
    pub fn validate(&self) -> Result<()> {
        use crate::Error;
        if !(self.kappa0 > T::zero()) {
            return Err(Error::config("kappa0 must be positive"));
        }
        if !(self.penalty_decay > T::zero() && self.penalty_decay < T::one()) {
            return Err(Error::config("penalty_decay must lie in (0, 1)"));
        }
        if !(self.inner_tol > T::zero() && self.outer_tol > T::zero()) {
            return Err(Error::config("tolerances must be positive"));
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::config("iteration limits must be at least 1"));
        }
        if self.position_grid_per_wavelength == 0 {
            return Err(Error::config("position grid needs at least one point per wavelength"));
        }
        Ok(())
    }
}

/// One inner iteration of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DiagnosticRow<T: Real> {
    pub outer: usize,
    pub inner: usize,
    pub lagrangian: T,
    pub violation: T,
    pub kappa: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PddResult<T: Real> {
    /// Unit-norm receive beamformer.
    pub beamformer: Vec<Complex<T>>,
    pub selection: SelectionVector<T>,
    pub layout: AntennaLayout<T>,
    /// Surrogate at the recovered triple, in original units.
    pub r_value: T,
    /// Largest coupling residual when the outer loop stopped.
    pub violation: T,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub diagnostics: Vec<DiagnosticRow<T>>,
}

impl<T: Real> PddResult<T> {
    pub fn selected_count(&self) -> usize {
        self.selection.count()
    }

    /// Per-iteration diagnostics as CSV (`outer,inner,lagrangian,violation,kappa`).
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("outer,inner,lagrangian,violation,kappa\n");
        for row in &self.diagnostics {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.outer,
                row.inner,
                crate::csv_real(row.lagrangian),
                crate::csv_real(row.violation),
                crate::csv_real(row.kappa)
            );
        }
        out
    }
}

/// Runs the full solver: inner block rounds until the augmented Lagrangian
/// settles, multiplier/penalty updates until the couplings hold, then
/// recovery of a feasible binary solution.
pub fn solve<T: Real>(
    channels: &ChannelSet<T>,
    sample_counts: &[usize],
    ota: &OtaConfig<T>,
    cfg: &PddConfig<T>,
) -> Result<PddResult<T>> {
    let problem = PddProblem::new(channels, sample_counts, ota, cfg)?;
    Ok(problem.solve())
}

impl<T: Real> PddProblem<T> {
    /// Solves from the all-selected starting point, then refines. Recovery
    /// may change the selection after `q` and the layout have settled, so
    /// each refinement first polishes `q` and the layout for the recovered
    /// selection, then runs freely from that point; the better outcome is
    /// kept while it lowers `r`.
    pub fn solve(&self) -> PddResult<T> {
        let mut best = self.run(self.initial_state());
        if self.cfg.freeze_selection {
            return best;
        }
        for _ in 0..self.cfg.max_refinements {
            let start = |res: &PddResult<T>| {
                self.starting_state(
                    &res.selection.binary,
                    Some(&res.layout.positions),
                    Some(&res.beamformer),
                )
            };
            let polished = self.polish(&best).unwrap_or_else(|| best.clone());
            let free = self.run(start(&polished));
            let mut next = if free.r_value < polished.r_value {
                Self::merge_counts(free, &polished)
            } else {
                Self::merge_counts(polished, &free)
            };
            next.outer_iterations += best.outer_iterations;
            next.inner_iterations += best.inner_iterations;
            let improved = next.r_value < best.r_value;
            if improved {
                let mut diagnostics = std::mem::take(&mut best.diagnostics);
                diagnostics.append(&mut next.diagnostics);
                next.diagnostics = diagnostics;
                best = next;
            } else {
                best.outer_iterations = next.outer_iterations;
                best.inner_iterations = next.inner_iterations;
                break;
            }
        }
        best
    }

    /// Re-solves on the sub-instance of the selected users with the
    /// selection held fixed. Unselected users then neither pull on `q` nor
    /// enter the problem's scaling.
    fn polish(&self, base: &PddResult<T>) -> Option<PddResult<T>> {
        let idx = selected_indices(&base.selection.binary);
        let at = self.channels.at_layout(&base.layout).ok()?;
        let sub = ChannelSet {
            vectors: idx.iter().map(|&u| at.vectors[u].clone()).collect(),
            links: idx.iter().map(|&u| at.links[u].clone()).collect(),
            ..at
        };
        let counts: Vec<usize> = idx.iter().map(|&u| self.sample_counts[u]).collect();
        let cfg = PddConfig {
            freeze_selection: true,
            warm_start: true,
            record_diagnostics: false,
            ..self.cfg.clone()
        };
        let p = PddProblem::new(&sub, &counts, &self.ota, &cfg).ok()?;
        let start = p.starting_state(
            &vec![true; idx.len()],
            Some(&base.layout.positions),
            Some(&base.beamformer),
        );
        let res = p.run(start);
        let full = self.channels.at_layout(&res.layout).ok()?;
        let r_value = objective_r(
            &res.beamformer,
            &base.selection.binary,
            &full,
            &self.sample_counts,
            &self.ota,
        );
        Some(PddResult {
            r_value,
            selection: base.selection.clone(),
            ..res
        })
    }

    fn merge_counts(mut kept: PddResult<T>, other: &PddResult<T>) -> PddResult<T> {
        kept.outer_iterations += other.outer_iterations;
        kept.inner_iterations += other.inner_iterations;
        kept
    }

    /// One PDD run from `state` followed by recovery.
    pub fn run(&self, mut state: PddState<T>) -> PddResult<T> {
        let cfg = &self.cfg;
        let mut diagnostics = Vec::new();
        let mut inner_total = 0;
        let mut prev_violation = T::infinity();
        let mut best: Option<(T, PddState<T>)> = None;
        let mut outer_done = 0;
        let mut converged = false;

        for outer in 0..cfg.max_outer {
            outer_done = outer + 1;
            let mut prev = augmented_lagrangian(&state, self);
            for inner in 0..cfg.max_inner {
                update_round1(&mut state, self);
                update_round2(&mut state, self);
                update_round3(&mut state, self);
                inner_total += 1;
                let al = augmented_lagrangian(&state, self);
                if cfg.record_diagnostics {
                    diagnostics.push(DiagnosticRow {
                        outer,
                        inner,
                        lagrangian: al,
                        violation: state.violation(self),
                        kappa: state.kappa,
                    });
                }
                let settled = (prev - al).abs() <= cfg.inner_tol * prev.abs().max(T::one());
                prev = al;
                if settled {
                    break;
                }
            }
            let violation = state.violation(self);
            if best.as_ref().is_none_or(|(v, _)| violation < *v) {
                best = Some((violation, state.clone()));
            }
            if violation < cfg.outer_tol {
                converged = true;
                break;
            }
            prev_violation = dual_penalty_update(&mut state, self, prev_violation);
        }

        let final_state = if converged {
            state
        } else {
            best.map(|(_, s)| s).unwrap_or(state)
        };
        let mut result = recover_feasible(&final_state, self);
        result.outer_iterations = outer_done;
        result.inner_iterations = inner_total;
        result.converged = converged;
        result.diagnostics = diagnostics;
        result
    }
}
