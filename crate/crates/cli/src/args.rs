use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dtphs_core::collocation::{make_scheme, CollocationScheme, SchemeKind};
use dtphs_core::energy::{DampedFree, LosslessForced, Reference};
use dtphs_core::integrator::{step_count, SolveMethod, SolverConfig};
use dtphs_core::models::{model_by_name, FeedbackMode, InputSignal, PhModel, Pulse, ZeroInput, MODEL_NAMES};

use crate::UsageError;

#[derive(Parser, Debug)]
#[command(name = "dtphs", version, about = "Discrete-time port-Hamiltonian simulation via collocation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dump nodes, coefficients and mass matrix of a scheme
    Tableau(TableauArgs),
    /// Run one simulation and write trajectory and energy CSVs
    Simulate(RunArgs),
    /// Step-size sweep of the energy errors with fitted slopes
    Converge(RunArgs),
    /// Check the discrete Dirac structure along a run
    Check(RunArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Gauss,
    Lobatto,
}

impl SchemeArg {
    pub fn kind(self) -> SchemeKind {
        match self {
            SchemeArg::Gauss => SchemeKind::GaussLegendre,
            SchemeArg::Lobatto => SchemeKind::LobattoPair,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputArg {
    Pulse,
    Zero,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Stagewise,
    Portlevel,
}

impl From<ModeArg> for FeedbackMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Stagewise => FeedbackMode::Stagewise,
            ModeArg::Portlevel => FeedbackMode::Portlevel,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Oscillator, pulse input, h=0.1, t_end=18, x0=(0,-1)
    Lossless,
    /// Damping injection r=0.1, v=0, t_end=10, x0=(0,-1)
    Damped,
}

#[derive(Args, Debug)]
pub struct TableauArgs {
    #[arg(long, value_enum, default_value = "gauss")]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 2)]
    pub stages: usize,
    /// Output file (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// oscillator, partitioned-oscillator or rigid-body
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Stage count (default 2 for Gauss, 3 for Lobatto)
    #[arg(long)]
    pub stages: Option<usize>,
    /// Step size; must divide the horizon (default 0.1)
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Comma-separated step sizes for `converge`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub h_list: Option<Vec<f64>>,
    /// Horizon (default 18, or 10 for the damped preset)
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    #[arg(long, value_enum)]
    pub input: Option<InputArg>,
    /// Damping injection gain; enables output feedback
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
    #[arg(long, value_enum, default_value = "stagewise")]
    pub feedback_mode: ModeArg,
    /// Comma-separated initial state
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Output directory for `simulate`, output file otherwise
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-stage variables (`simulate`)
    #[arg(long)]
    pub retain_stages: bool,
    /// Newton residual tolerance
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Newton iteration limit
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
}

pub const DEFAULT_H: f64 = 0.1;
pub const LOSSLESS_T_END: f64 = 18.0;
pub const DAMPED_T_END: f64 = 10.0;
pub const DAMPED_GAIN: f64 = 0.1;

/// A fully resolved single-run configuration.
pub struct RunConfig {
    pub model: Box<dyn PhModel + Send + Sync>,
    pub scheme: CollocationScheme,
    pub h: f64,
    pub t_end: f64,
    pub input: Box<dyn InputSignal + Send + Sync>,
    pub feedback: Option<(f64, FeedbackMode)>,
    pub x0: Vec<f64>,
    pub solver: SolverConfig,
    pub exact: Option<ExactEnergy>,
}

/// Source of the exact per-step energy increment.
pub enum ExactEnergy {
    Closed(Reference),
    /// Lossless and unforced: `ΔH = 0`.
    Conserved,
}

impl ExactEnergy {
    pub fn increment(&self, t0: f64, t1: f64) -> dtphs_core::Result<f64> {
        match self {
            ExactEnergy::Closed(r) => Ok(r.hamiltonian(t1)? - r.hamiltonian(t0)?),
            ExactEnergy::Conserved => Ok(0.0),
        }
    }
}

pub fn solver_config(args: &RunArgs) -> Result<SolverConfig, UsageError> {
    if !(args.tol > 0.0) || args.max_iter == 0 {
        return Err(UsageError("--tol must be positive and --max-iter at least 1".into()));
    }
    Ok(SolverConfig { tol: args.tol, max_iter: args.max_iter, method: SolveMethod::Auto })
}

pub fn scheme(kind: SchemeKind, s: usize) -> Result<CollocationScheme, UsageError> {
    make_scheme(kind, s).map_err(|e| UsageError(format!("unsupported scheme {}-{s}: {e}", kind.name())))
}

fn default_stages(kind: SchemeKind) -> usize {
    match kind {
        SchemeKind::GaussLegendre => 2,
        SchemeKind::LobattoPair => 3,
    }
}

fn check_gain(r: f64) -> Result<f64, UsageError> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(UsageError(format!("--r must be finite and non-negative, got {r}")));
    }
    Ok(r)
}

pub fn resolve_run(args: &RunArgs) -> Result<RunConfig, UsageError> {
    let kind = args.scheme.unwrap_or(SchemeArg::Gauss).kind();
    let scheme = scheme(kind, args.stages.unwrap_or_else(|| default_stages(kind)))?;

    let model_name = match &args.model {
        Some(m) => m.clone(),
        None if kind == SchemeKind::LobattoPair => "partitioned-oscillator".into(),
        None => "oscillator".into(),
    };
    let model = model_by_name(&model_name).ok_or_else(|| {
        UsageError(format!("unknown model `{model_name}` (expected one of {})", MODEL_NAMES.join(", ")))
    })?;
    let m = model.port_dim();
    let n = model.state_dim();

    let damped = args.preset == Some(Preset::Damped);
    let gain = match (args.r, damped) {
        (Some(r), _) => Some(check_gain(r)?),
        (None, true) => Some(DAMPED_GAIN),
        (None, false) => None,
    };
    if gain.is_some() && m == 0 {
        return Err(UsageError(format!("model `{model_name}` has no port for feedback")));
    }
    let feedback = gain.map(|r| (r, FeedbackMode::from(args.feedback_mode)));

    let input_arg = match args.input {
        Some(i) => i,
        None if m == 0 || damped || feedback.is_some() => InputArg::Zero,
        None => InputArg::Pulse,
    };
    let input: Box<dyn InputSignal + Send + Sync> = match input_arg {
        InputArg::Pulse if m != 1 => {
            return Err(UsageError(format!("the pulse input needs a scalar port, `{model_name}` has {m}")))
        }
        InputArg::Pulse => Box::new(Pulse),
        InputArg::Zero => Box::new(ZeroInput { dim: m }),
    };

    let x0 = match &args.x0 {
        Some(x) if x.len() != n => {
            return Err(UsageError(format!("--x0 has {} entries, model `{model_name}` needs {n}", x.len())))
        }
        Some(x) => x.clone(),
        None if n == 2 => LosslessForced::X0.to_vec(),
        None => vec![1.0; n],
    };

    let h = args.h.unwrap_or(DEFAULT_H);
    let t_end = args.t_end.unwrap_or(if damped { DAMPED_T_END } else { LOSSLESS_T_END });
    step_count(h, t_end).map_err(|e| UsageError(e.to_string()))?;

    let oscillator_like = model_name == "oscillator" || model_name == "partitioned-oscillator";
    let from_rest_point = x0 == LosslessForced::X0;
    let exact = match (input_arg, feedback) {
        (InputArg::Zero, None) => Some(ExactEnergy::Conserved),
        (InputArg::Zero, Some((r, _))) if r == 0.0 => Some(ExactEnergy::Conserved),
        (InputArg::Pulse, None) if oscillator_like && from_rest_point => {
            Some(ExactEnergy::Closed(Reference::LosslessForced(LosslessForced)))
        }
        (InputArg::Zero, Some((r, _))) if oscillator_like && from_rest_point && r < 2.0 => {
            Some(ExactEnergy::Closed(Reference::DampedFree(DampedFree { gain: r })))
        }
        _ => None,
    };

    Ok(RunConfig {
        model,
        scheme,
        h,
        t_end,
        input,
        feedback,
        x0,
        solver: solver_config(args)?,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(extra: &[&str]) -> RunArgs {
        let mut argv = vec!["dtphs", "simulate"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Simulate(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn lossless_defaults() {
        let cfg = resolve_run(&parse(&[])).unwrap();
        assert_eq!(cfg.model.name(), "oscillator");
        assert_eq!(cfg.scheme.label(), "gauss-2");
        assert_eq!((cfg.h, cfg.t_end), (0.1, 18.0));
        assert_eq!(cfg.x0, vec![0.0, -1.0]);
        assert_eq!(cfg.input.name(), "pulse");
        assert!(cfg.feedback.is_none());
        assert!(matches!(cfg.exact, Some(ExactEnergy::Closed(Reference::LosslessForced(_)))));
    }

    #[test]
    fn damped_preset() {
        let cfg = resolve_run(&parse(&["--preset", "damped"])).unwrap();
        assert_eq!(cfg.t_end, 10.0);
        assert_eq!(cfg.feedback, Some((0.1, FeedbackMode::Stagewise)));
        assert_eq!(cfg.input.name(), "zero");
        let cfg = resolve_run(&parse(&["--preset", "damped", "--feedback-mode", "portlevel", "--r", "0.3"])).unwrap();
        assert_eq!(cfg.feedback, Some((0.3, FeedbackMode::Portlevel)));
    }

    #[test]
    fn lobatto_defaults_to_partitioned_model() {
        let cfg = resolve_run(&parse(&["--scheme", "lobatto"])).unwrap();
        assert_eq!(cfg.model.name(), "partitioned-oscillator");
        assert_eq!(cfg.scheme.label(), "lobatto-3");
    }

    #[test]
    fn rigid_body_defaults() {
        let cfg = resolve_run(&parse(&["--model", "rigid-body"])).unwrap();
        assert_eq!(cfg.x0, vec![1.0; 3]);
        assert_eq!(cfg.input.port_dim(), 0);
        assert!(matches!(cfg.exact, Some(ExactEnergy::Conserved)));
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            &["--model", "pendulum"][..],
            &["--stages", "9"],
            &["--h", "0.7"],
            &["--x0", "1,2,3"],
            &["--model", "rigid-body", "--input", "pulse"],
            &["--model", "rigid-body", "--r", "0.1"],
            &["--r", "-1"],
        ] {
            assert!(resolve_run(&parse(bad)).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn negative_x0_parses() {
        let a = parse(&["--x0", "-0.5,-1"]);
        assert_eq!(a.x0, Some(vec![-0.5, -1.0]));
    }
}
