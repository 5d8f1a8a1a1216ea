//! The two oscillator experiments and their convergence sweeps.
//!
//! Gauss schemes run on the oscillator in `(q, p)` form, Lobatto pairs on
//! the partitioned oscillator; both share the same vector field.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::collocation::{CollocationScheme, SchemeKind};
use crate::energy::{order_fit, DampedFree, EnergyReport, LosslessForced, OrderFit, Reference};
use crate::error::Result;
use crate::integrator::{simulate, step, PortLaw, SolverConfig, Trajectory};
use crate::models::{oscillator, partitioned_oscillator, FeedbackConfig, FeedbackMode, PhModel, Pulse, ZeroInput};

/// Step sizes of the sweeps; every entry divides both horizons and the
/// pulse breakpoints.
pub const DEFAULT_H_LIST: [f64; 9] = [0.5, 0.25, 0.2, 0.1, 0.05, 0.025, 0.02, 0.01, 0.005];

/// Start of the single-step local error probe: the pulse maximum.
pub const LOCAL_PROBE_T0: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Experiment {
    /// Lossless oscillator, pulse input, `t ∈ [0, 18]`.
    LosslessForced,
    /// Damping injection `u = -r y`, no external input, `t ∈ [0, 10]`.
    Damped { gain: f64, mode: FeedbackMode },
}

impl Experiment {
    pub const DAMPED_GAIN: f64 = 0.1;

    pub fn damped() -> Self {
        Experiment::Damped { gain: Self::DAMPED_GAIN, mode: FeedbackMode::Stagewise }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::LosslessForced => "lossless",
            Experiment::Damped { .. } => "damped",
        }
    }

    pub fn t_end(&self) -> f64 {
        match self {
            Experiment::LosslessForced => 18.0,
            Experiment::Damped { .. } => 10.0,
        }
    }

    pub fn initial_state(&self) -> [f64; 2] {
        self.reference().initial_state()
    }

    pub fn reference(&self) -> Reference {
        match self {
            Experiment::LosslessForced => Reference::LosslessForced(LosslessForced),
            Experiment::Damped { gain, .. } => Reference::DampedFree(DampedFree { gain: *gain }),
        }
    }

    /// Model matching the scheme family.
    pub fn model_for(scheme: &CollocationScheme) -> Box<dyn PhModel + Send + Sync> {
        match scheme.kind() {
            SchemeKind::GaussLegendre => Box::new(oscillator()),
            SchemeKind::LobattoPair => Box::new(partitioned_oscillator()),
        }
    }

    pub fn run(&self, scheme: &CollocationScheme, h: f64, cfg: &SolverConfig, retain: bool) -> Result<(Box<dyn PhModel + Send + Sync>, Trajectory)> {
        let model = Self::model_for(scheme);
        let x0 = self.initial_state();
        let traj = match self {
            Experiment::LosslessForced => {
                simulate(model.as_ref(), scheme, &x0, PortLaw::Open(&Pulse), h, self.t_end(), cfg, retain)?
            }
            Experiment::Damped { gain, mode } => {
                let zero = ZeroInput { dim: 1 };
                let fb = FeedbackConfig::new(*gain, *mode, &zero)?;
                simulate(model.as_ref(), scheme, &x0, PortLaw::Feedback(fb), h, self.t_end(), cfg, retain)?
            }
        };
        Ok((model, traj))
    }

    pub fn report(&self, scheme: &CollocationScheme, h: f64, cfg: &SolverConfig) -> Result<EnergyReport> {
        let (model, traj) = self.run(scheme, h, cfg, false)?;
        EnergyReport::new(model.as_ref(), scheme.order(), &traj, Some(&self.reference()))
    }

    pub fn convergence_point(&self, scheme: &CollocationScheme, h: f64, cfg: &SolverConfig) -> Result<ConvergencePoint> {
        let rep = self.report(scheme, h, cfg)?;
        let (eps_tilde, eps_bar) = rep.relative_errors()?;
        Ok(ConvergencePoint {
            h,
            steps: rep.steps(),
            dh_ref: rep.dh_exact_tot.expect("experiments carry a reference"),
            dh_tilde_tot: rep.dh_tilde_tot,
            dh_bar_tot: rep.dh_bar_tot,
            eps_tilde,
            eps_bar,
        })
    }

    pub fn sweep(&self, scheme: &CollocationScheme, h_list: &[f64], cfg: &SolverConfig) -> Result<Vec<ConvergencePoint>> {
        h_list.iter().map(|h| self.convergence_point(scheme, *h, cfg)).collect()
    }
}

/// One `(scheme, h)` row of a convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    pub h: f64,
    pub steps: usize,
    pub dh_ref: f64,
    pub dh_tilde_tot: f64,
    pub dh_bar_tot: f64,
    pub eps_tilde: f64,
    pub eps_bar: f64,
}

impl ConvergencePoint {
    /// `|ΔH̄_tot - ΔH̃_tot|`
    pub fn balance_gap(&self) -> f64 {
        (self.dh_bar_tot - self.dh_tilde_tot).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeSummary {
    pub eps_tilde: Result<OrderFit>,
    pub eps_bar: Result<OrderFit>,
}

pub fn fit_slopes(points: &[ConvergencePoint]) -> SlopeSummary {
    let tilde: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.eps_tilde)).collect();
    let bar: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.eps_bar)).collect();
    SlopeSummary { eps_tilde: order_fit(&tilde), eps_bar: order_fit(&bar) }
}

/// `|ΔH̄¹ - ΔH¹|` for one step of size `h` from the exact state at
/// [`LOCAL_PROBE_T0`] of the forced experiment.
pub fn local_energy_error(scheme: &CollocationScheme, h: f64, cfg: &SolverConfig) -> Result<f64> {
    let model = Experiment::model_for(scheme);
    let reference = Reference::LosslessForced(LosslessForced);
    let t0 = LOCAL_PROBE_T0;
    let x0 = reference.state(t0)?;
    let sol = step(model.as_ref(), scheme, &x0, PortLaw::Open(&Pulse), t0, h, cfg)?;
    let dh_bar = model.hamiltonian(&sol.x_end) - model.hamiltonian(&x0);
    let dh = reference.hamiltonian(t0 + h)? - reference.hamiltonian(t0)?;
    Ok((dh_bar - dh).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::make_scheme;

    #[test]
    fn defaults_divide_horizons() {
        for h in DEFAULT_H_LIST {
            for t in [18.0, 10.0, Pulse::START] {
                crate::integrator::step_count(h, t).unwrap();
            }
        }
    }

    #[test]
    fn gauss_tilde_and_bar_coincide() {
        let sch = make_scheme(SchemeKind::GaussLegendre, 2).unwrap();
        let p = Experiment::LosslessForced.convergence_point(&sch, 0.1, &SolverConfig::default()).unwrap();
        assert_eq!(p.steps, 180);
        assert!((p.eps_tilde - p.eps_bar).abs() < 1e-12);
        assert!(p.dh_ref > 0.0);
    }

    #[test]
    fn damped_run_loses_energy() {
        let sch = make_scheme(SchemeKind::GaussLegendre, 1).unwrap();
        let p = Experiment::damped().convergence_point(&sch, 0.1, &SolverConfig::default()).unwrap();
        assert!(p.dh_ref < 0.0 && p.dh_bar_tot < 0.0);
    }
}
