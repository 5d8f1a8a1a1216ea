//! Energy accounting of discrete-time PH runs.
//!
//! Three stored-energy increments are tracked per interval:
//!
//! * `ΔH̃ = -h eᵀ (M ⊗ I) f`, the increment seen by the discrete Dirac structure,
//! * `ΔH̄ = H(x_end) - H(x0)`, the increment of the numerical state,
//! * `ΔH`, the exact increment along a reference solution.
//!
//! When the discrete structure is Dirac, `ΔH̃ = h yᵀu`.

mod reference;

pub use reference::{DampedFree, LosslessForced, Reference};

use alloc::vec::Vec;

use crate::collocation::CollocationScheme;
use crate::dirac::{assemble_blocks, discrete_output, BlockStructure};
use crate::error::{Error, Result};
use crate::integrator::{StageSolution, Trajectory};
use crate::linalg::dot;
use crate::models::{FeedbackMode, PhModel};

/// Errors below this magnitude are treated as rounding noise by [`order_fit`].
pub const ROUNDING_FLOOR: f64 = 1e-12;

/// Per-interval energy triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEnergy {
    pub dh_tilde: f64,
    pub dh_bar: f64,
    pub supplied: f64,
}

/// `-h eᵀ (M ⊗ I) f`
pub fn delta_h_tilde(sol: &StageSolution, scheme: &CollocationScheme) -> f64 {
    let n = sol.state_dim();
    let s = sol.stages();
    let mut acc = 0.0;
    for i in 0..s {
        for j in 0..s {
            let w = scheme.mass().get(i, j);
            if w != 0.0 {
                acc += w * dot(sol.effort(i), &sol.f[j * n..(j + 1) * n]);
            }
        }
    }
    -sol.h * acc
}

/// `h yᵀ u` with the discrete output `y = Gᵀ M e`.
pub fn supplied_energy(sol: &StageSolution, blocks: &BlockStructure) -> Result<f64> {
    let y = discrete_output(blocks, &sol.e)?;
    Ok(sol.h * dot(&y, &sol.u))
}

pub fn delta_h_bar(model: &dyn PhModel, x0: &[f64], x_end: &[f64]) -> f64 {
    model.hamiltonian(x_end) - model.hamiltonian(x0)
}

pub fn step_energy(model: &dyn PhModel, scheme: &CollocationScheme, sol: &StageSolution) -> Result<StepEnergy> {
    let supplied = if model.port_dim() == 0 {
        0.0
    } else {
        supplied_energy(sol, &assemble_blocks(model, &sol.stage_x, scheme)?)?
    };
    Ok(StepEnergy {
        dh_tilde: delta_h_tilde(sol, scheme),
        dh_bar: delta_h_bar(model, &sol.x0, &sol.x_end),
        supplied,
    })
}

/// The two terms of `ΔH̃ = -r h yᵀy + h yᵀv` under port-level feedback
/// `u = -r y + v`. Returns `(dissipated, external)`.
pub fn dissipation_decomposition(
    sol: &StageSolution,
    blocks: &BlockStructure,
    mode: FeedbackMode,
    gain: f64,
) -> Result<(f64, f64)> {
    if mode != FeedbackMode::Portlevel {
        return Err(Error::Mode("port-level decomposition needs portlevel feedback"));
    }
    let y = discrete_output(blocks, &sol.e)?;
    if sol.external.len() != y.len() {
        return Err(Error::Dimension { expected: y.len(), found: sol.external.len(), context: "external input" });
    }
    Ok((-gain * sol.h * dot(&y, &y), sol.h * dot(&y, &sol.external)))
}

/// Stage-wise analogue of the dissipated term:
/// `-r h Σ_ij m_ij (G_iᵀ e_i)ᵀ (G_jᵀ e_j)`.
pub fn stagewise_dissipation(sol: &StageSolution, blocks: &BlockStructure, gain: f64) -> Result<f64> {
    let ge = blocks.apply_input_transpose(&sol.e)?;
    let m = blocks.port_dim();
    let s = blocks.stages();
    let mut acc = 0.0;
    for i in 0..s {
        for j in 0..s {
            acc += blocks.mass().get(i, j) * dot(&ge[i * m..(i + 1) * m], &ge[j * m..(j + 1) * m]);
        }
    }
    Ok(-gain * sol.h * acc)
}

/// `(ε̃, ε̄) = ((ΔH̃_tot - ΔH_tot) / ΔH_tot, (ΔH̄_tot - ΔH_tot) / ΔH_tot)`
pub fn relative_errors(dh_tilde_tot: f64, dh_bar_tot: f64, dh_ref: f64) -> Result<(f64, f64)> {
    if dh_ref == 0.0 || !dh_ref.is_finite() {
        return Err(Error::UndefinedMetric);
    }
    Ok(((dh_tilde_tot - dh_ref) / dh_ref, (dh_bar_tot - dh_ref) / dh_ref))
}

/// Energy summary of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub h: f64,
    pub order: usize,
    pub dh_tilde: Vec<f64>,
    pub dh_bar: Vec<f64>,
    pub supplied: Vec<f64>,
    pub dh_exact: Option<Vec<f64>>,
    pub dh_tilde_tot: f64,
    pub dh_bar_tot: f64,
    pub supplied_tot: f64,
    pub dh_exact_tot: Option<f64>,
    /// `H(x_N) - H(x_0)`
    pub dh_endpoints: f64,
}

impl EnergyReport {
    pub fn new(model: &dyn PhModel, order: usize, traj: &Trajectory, reference: Option<&Reference>) -> Result<Self> {
        let dh_tilde: Vec<f64> = traj.energy.iter().map(|e| e.dh_tilde).collect();
        let dh_bar: Vec<f64> = traj.energy.iter().map(|e| e.dh_bar).collect();
        let supplied: Vec<f64> = traj.energy.iter().map(|e| e.supplied).collect();
        let dh_exact = match reference {
            Some(r) => Some(
                traj.times
                    .windows(2)
                    .map(|w| Ok(r.hamiltonian(w[1])? - r.hamiltonian(w[0])?))
                    .collect::<Result<Vec<f64>>>()?,
            ),
            None => None,
        };
        let dh_exact_tot = match reference {
            Some(r) => Some(r.hamiltonian(*traj.times.last().expect("times are never empty"))? - r.hamiltonian(0.0)?),
            None => None,
        };
        let first = &traj.states[0];
        let last = traj.states.last().expect("states are never empty");
        Ok(Self {
            h: traj.h,
            order,
            dh_tilde_tot: dh_tilde.iter().sum(),
            dh_bar_tot: dh_bar.iter().sum(),
            supplied_tot: supplied.iter().sum(),
            dh_tilde,
            dh_bar,
            supplied,
            dh_exact,
            dh_exact_tot,
            dh_endpoints: model.hamiltonian(last) - model.hamiltonian(first),
        })
    }

    pub fn steps(&self) -> usize {
        self.dh_bar.len()
    }

    /// Relative deviation of the summed `ΔH̄ᵏ` from `H(x_N) - H(x_0)`.
    pub fn telescoping_defect(&self) -> f64 {
        (self.dh_bar_tot - self.dh_endpoints).abs() / self.dh_endpoints.abs().max(1.0)
    }

    pub fn relative_errors(&self) -> Result<(f64, f64)> {
        relative_errors(self.dh_tilde_tot, self.dh_bar_tot, self.dh_exact_tot.ok_or(Error::UndefinedMetric)?)
    }

    /// Average transferred power `ΔH_tot / (N h)`.
    pub fn average_power(&self) -> Option<f64> {
        self.dh_exact_tot.map(|d| d / (self.steps() as f64 * self.h))
    }

    /// `max_k |ΔH̄ᵏ - ΔHᵏ| / h^(p+1)`, an estimate of the constant in the
    /// global bound `|ε̄| ≤ (max_k |cᵏ| / |P_av|) hᵖ`.
    pub fn error_constant(&self) -> Option<f64> {
        let exact = self.dh_exact.as_ref()?;
        let scale = libm::pow(self.h, (self.order + 1) as f64);
        Some(self.dh_bar.iter().zip(exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale)
    }

    /// `max_k |ΔH̄ᵏ - h yᵏᵀuᵏ|`
    pub fn balance_defect(&self) -> f64 {
        self.dh_bar.iter().zip(&self.supplied).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Least-squares line through `(ln h, ln |err|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest vertical distance of a used point from the line, in `ln` units.
    pub max_deviation: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn order_fit(points: &[(f64, f64)]) -> Result<OrderFit> {
    let used: Vec<(f64, f64)> =
        points.iter().copied().filter(|(h, e)| *h > 0.0 && e.abs() >= ROUNDING_FLOOR && e.is_finite()).collect();
    if used.len() < 3 {
        return Err(Error::InsufficientPoints { usable: used.len(), required: 3 });
    }
    let logs: Vec<(f64, f64)> = used.iter().map(|(h, e)| (libm::log(*h), libm::log(e.abs()))).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints { usable: 1, required: 3 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_deviation = logs.iter().map(|(x, y)| (y - intercept - slope * x).abs()).fold(0.0, f64::max);
    Ok(OrderFit { slope, intercept, max_deviation, points: used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::{make_scheme, SchemeKind};
    use crate::integrator::{simulate, step, PortLaw, SolverConfig};
    use crate::models::{oscillator, partitioned_oscillator, pulse_input, rigid_body, FeedbackConfig, ZeroInput};
    use alloc::vec;

    const ZERO1: ZeroInput = ZeroInput { dim: 1 };

    #[test]
    fn tilde_vanishes_without_input() {
        let sch = make_scheme(SchemeKind::GaussLegendre, 3).unwrap();
        let rb = rigid_body();
        let sol = step(&rb, &sch, &[1.0, -0.5, 0.2], PortLaw::Open(&ZeroInput { dim: 0 }), 0.0, 0.2, &SolverConfig::default())
            .unwrap();
        let scale = sol.h * crate::linalg::norm2(&sol.e) * crate::linalg::norm2(&sol.f);
        assert!(delta_h_tilde(&sol, &sch).abs() <= 1e-13 * scale);
        let mut zero = sol.clone();
        zero.f.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(delta_h_tilde(&zero, &sch), 0.0);
        let e = step_energy(&rb, &sch, &sol).unwrap();
        assert_eq!(e.supplied, 0.0);
    }

    #[test]
    fn single_stage_pulse_step_matches_supplied() {
        let sch = make_scheme(SchemeKind::GaussLegendre, 1).unwrap();
        let osc = oscillator();
        let sol = step(&osc, &sch, &[0.3, -0.9], PortLaw::Open(&pulse_input()), 8.6, 0.1, &SolverConfig::default())
            .unwrap();
        let e = step_energy(&osc, &sch, &sol).unwrap();
        // hand oracle: y = b1 gᵀ e1 = p1, u1 = pulse(t0 + h/2)
        let u = crate::models::Pulse::value(8.65);
        let oracle = 0.1 * sol.stage_x[0][1] * u;
        assert!((e.supplied - oracle).abs() < 1e-15);
        assert!((e.dh_tilde - oracle).abs() < 1e-13);
        assert!((e.dh_bar - e.dh_tilde).abs() < 1e-13 * (1.0 + e.dh_bar.abs()));
    }

    #[test]
    fn supplied_equals_tilde_for_every_scheme_on_oscillator() {
        let osc = oscillator();
        let pm = partitioned_oscillator();
        for (kind, s) in crate::collocation::catalogue() {
            let sch = make_scheme(kind, s).unwrap();
            for model in [&osc as &dyn PhModel, &pm] {
                let sol = step(model, &sch, &[0.1, -1.0], PortLaw::Open(&pulse_input()), 8.4, 0.25, &SolverConfig::default())
                    .unwrap();
                let e = step_energy(model, &sch, &sol).unwrap();
                assert!((e.supplied - e.dh_tilde).abs() < 1e-14, "{}: {:?}", sch.label(), e);
            }
        }
    }

    #[test]
    fn lobatto_step_balance_is_inexact() {
        let sch = make_scheme(SchemeKind::LobattoPair, 3).unwrap();
        let pm = partitioned_oscillator();
        let sol = step(&pm, &sch, &[0.1, -1.0], PortLaw::Open(&pulse_input()), 8.4, 0.25, &SolverConfig::default())
            .unwrap();
        let e = step_energy(&pm, &sch, &sol).unwrap();
        assert!((e.dh_bar - e.dh_tilde).abs() > 1e-8);
    }

    #[test]
    fn portlevel_decomposition() {
        let sch = make_scheme(SchemeKind::GaussLegendre, 1).unwrap();
        let osc = oscillator();
        let cfg = SolverConfig::default();
        let fb = FeedbackConfig::new(0.1, FeedbackMode::Portlevel, &ZERO1).unwrap();
        let sol = step(&osc, &sch, &[0.0, -1.0], PortLaw::Feedback(fb), 0.0, 0.1, &cfg).unwrap();
        let blocks = assemble_blocks(&osc, &sol.stage_x, &sch).unwrap();
        let (diss, ext) = dissipation_decomposition(&sol, &blocks, FeedbackMode::Portlevel, 0.1).unwrap();
        let y = 1.0 * sol.stage_x[0][1];
        assert!((diss - -0.1 * 0.1 * y * y).abs() < 1e-16);
        assert_eq!(ext, 0.0);
        let tilde = delta_h_tilde(&sol, &sch);
        assert!(diss <= 0.0 && (diss + ext - tilde).abs() <= 1e-12 * tilde.abs());
        assert!(matches!(
            dissipation_decomposition(&sol, &blocks, FeedbackMode::Stagewise, 0.1),
            Err(Error::Mode(_))
        ));

        let fb0 = FeedbackConfig::new(0.0, FeedbackMode::Portlevel, &crate::models::Pulse).unwrap();
        let sol = step(&osc, &sch, &[0.0, -1.0], PortLaw::Feedback(fb0), 8.5, 0.1, &cfg).unwrap();
        let blocks = assemble_blocks(&osc, &sol.stage_x, &sch).unwrap();
        let (diss, ext) = dissipation_decomposition(&sol, &blocks, FeedbackMode::Portlevel, 0.0).unwrap();
        assert_eq!(diss, 0.0);
        assert!((ext - delta_h_tilde(&sol, &sch)).abs() < 1e-14);
    }

    #[test]
    fn stagewise_dissipation_matches_tilde() {
        let sch = make_scheme(SchemeKind::LobattoPair, 3).unwrap();
        let osc = oscillator();
        let fb = FeedbackConfig::new(0.1, FeedbackMode::Stagewise, &ZERO1).unwrap();
        let sol = step(&osc, &sch, &[0.0, -1.0], PortLaw::Feedback(fb), 0.0, 0.1, &SolverConfig::default()).unwrap();
        let blocks = assemble_blocks(&osc, &sol.stage_x, &sch).unwrap();
        let d = stagewise_dissipation(&sol, &blocks, 0.1).unwrap();
        // with v = 0 the supplied power is -r Σ m_ij e_iᵀ g gᵀ e_j
        assert!((d - delta_h_tilde(&sol, &sch)).abs() < 1e-15);
        assert!(d < 0.0);
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_errors(2.0, 2.5, 2.0).unwrap(), (0.0, 0.25));
        assert_eq!(relative_errors(1.0, 1.0, 0.0), Err(Error::UndefinedMetric));
    }

    #[test]
    fn fit_exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|h: &f64| (*h, 3.0 * libm::pow(*h, 4.0))).collect();
        let fit = order_fit(&pts).unwrap();
        assert!((fit.slope - 4.0).abs() < 1e-10);
        assert!((fit.intercept - libm::log(3.0)).abs() < 1e-10);
        assert!(fit.max_deviation < 1e-10);
        let floor = vec![(0.2, 1e-3), (0.1, 1e-13), (0.05, 1e-14)];
        assert!(matches!(order_fit(&floor), Err(Error::InsufficientPoints { usable: 1, .. })));
    }

    #[test]
    fn report_totals_and_telescoping() {
        let osc = oscillator();
        let sch = make_scheme(SchemeKind::GaussLegendre, 2).unwrap();
        let traj = simulate(&osc, &sch, &[0.0, -1.0], PortLaw::Open(&pulse_input()), 0.1, 18.0, &SolverConfig::default(), false)
            .unwrap();
        let reference = Reference::LosslessForced(LosslessForced);
        let rep = EnergyReport::new(&osc, sch.order(), &traj, Some(&reference)).unwrap();
        assert_eq!(rep.steps(), 180);
        assert!(rep.telescoping_defect() <= 1e-13);
        let sum: f64 = rep.dh_exact.as_ref().unwrap().iter().sum();
        assert!((sum - rep.dh_exact_tot.unwrap()).abs() <= 1e-13 * rep.dh_exact_tot.unwrap().abs());
        let (et, eb) = rep.relative_errors().unwrap();
        assert!((et - eb).abs() < 1e-12);
        assert!(rep.balance_defect() < 1e-12);
        assert!(rep.average_power().unwrap() > 0.0);
        assert!(rep.error_constant().unwrap().is_finite());
    }
}
