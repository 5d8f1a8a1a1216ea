//! Stage solver and time stepping for discrete-time PH systems.
//!
//! One sampling interval `[t0, t0 + h]` is advanced by solving the coupled
//! stage system
//!
//! ```text
//! f_i = -(J(x_i) - R(x_i)) ∇H(x_i) - G(x_i) u_i
//! x_i = x0 - h Σ_j a_ij f_j
//! ```
//!
//! for the stacked stage states, then setting `x_end = x0 - h Σ_j b_j f_j`.
//! Partitioned Lobatto pairs use the IIIA coefficients on the `q` rows and
//! the IIIB coefficients on the `p` rows. Flows follow the sign convention
//! `f = -ẋ`.

use alloc::vec;
use alloc::vec::Vec;

use crate::collocation::{CollocationScheme, SchemeKind};
use crate::energy::{step_energy, StepEnergy};
use crate::error::{Error, Result};
use crate::linalg::{norm_max, Lu, Matrix};
use crate::models::{FeedbackConfig, FeedbackMode, InputSignal, PhModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Direct solve when the model is linear with constant structure,
    /// Newton otherwise.
    Auto,
    DirectLinear,
    Newton,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50, method: SolveMethod::Auto }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("solver needs tol > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }
}

/// How the port input is produced inside each interval.
#[derive(Clone, Copy, Debug)]
pub enum PortLaw<'a> {
    /// `u_i = u(t0 + c_i h)`
    Open(&'a dyn InputSignal),
    /// Damping injection around the external input `v`.
    Feedback(FeedbackConfig<'a>),
}

impl PortLaw<'_> {
    fn signal(&self) -> &dyn InputSignal {
        match self {
            PortLaw::Open(u) => *u,
            PortLaw::Feedback(cfg) => cfg.external,
        }
    }
}

/// The discrete variables of one sampling interval.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    pub t0: f64,
    pub h: f64,
    pub x0: Vec<f64>,
    /// `s` stage states `x_i`.
    pub stage_x: Vec<Vec<f64>>,
    /// Stacked stage flows, `s·n`.
    pub f: Vec<f64>,
    /// Stacked stage efforts `e_i = ∇H(x_i)`, `s·n`.
    pub e: Vec<f64>,
    /// Stacked port inputs actually applied, `s·m`.
    pub u: Vec<f64>,
    /// Stacked samples of the external signal, `s·m` (equal to `u` for
    /// open-loop runs).
    pub external: Vec<f64>,
    pub x_end: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Lobatto IIIA/IIIB split applied.
    pub partitioned: bool,
}

impl StageSolution {
    pub fn stages(&self) -> usize {
        self.stage_x.len()
    }

    pub fn state_dim(&self) -> usize {
        self.x0.len()
    }

    pub fn port_dim(&self) -> usize {
        self.u.len() / self.stages()
    }

    pub fn flow(&self, i: usize) -> &[f64] {
        let n = self.state_dim();
        &self.f[i * n..(i + 1) * n]
    }

    pub fn effort(&self, i: usize) -> &[f64] {
        let n = self.state_dim();
        &self.e[i * n..(i + 1) * n]
    }

    /// Largest deviation from `x_i = x0 - h Σ a_ij f_j` and
    /// `x_end = x0 - h Σ b_j f_j`.
    pub fn reconstruction_defect(&self, scheme: &CollocationScheme) -> f64 {
        let n = self.state_dim();
        let s = self.stages();
        let coeffs = StageCoefficients::new(scheme, n, self.partitioned);
        let mut d: f64 = 0.0;
        for i in 0..s {
            for c in 0..n {
                let mut v = self.x0[c];
                for j in 0..s {
                    v -= self.h * coeffs.get(i, j, c) * self.f[j * n + c];
                }
                d = d.max((v - self.stage_x[i][c]).abs());
            }
        }
        for c in 0..n {
            let v = self.x0[c] - self.h * (0..s).map(|j| scheme.b()[j] * self.f[j * n + c]).sum::<f64>();
            d = d.max((v - self.x_end[c]).abs());
        }
        d
    }
}

/// Per-row coefficient selection: IIIA for `q`, IIIB for `p`.
struct StageCoefficients<'a> {
    a: &'a Matrix,
    a_hat: Option<&'a Matrix>,
    split: usize,
}

impl<'a> StageCoefficients<'a> {
    fn new(scheme: &'a CollocationScheme, n: usize, partitioned: bool) -> Self {
        let a_hat = if partitioned { scheme.a_hat() } else { None };
        Self { a: scheme.a(), a_hat, split: n / 2 }
    }

    fn get(&self, i: usize, j: usize, component: usize) -> f64 {
        match self.a_hat {
            Some(ah) if component >= self.split => ah[(i, j)],
            _ => self.a[(i, j)],
        }
    }
}

struct StageSystem<'a> {
    model: &'a dyn PhModel,
    scheme: &'a CollocationScheme,
    coeffs: StageCoefficients<'a>,
    law: PortLaw<'a>,
    x0: &'a [f64],
    h: f64,
    /// External signal sampled at the stage times, `s·m`.
    samples: Vec<f64>,
    n: usize,
    m: usize,
    s: usize,
}

struct StageVariables {
    f: Vec<f64>,
    e: Vec<f64>,
    u: Vec<f64>,
}

impl StageSystem<'_> {
    fn evaluate(&self, xs: &[f64]) -> StageVariables {
        let (n, m, s) = (self.n, self.m, self.s);
        let mut e = Vec::with_capacity(s * n);
        let mut js = Vec::with_capacity(s);
        let mut gs = Vec::with_capacity(s);
        let mut rs = Vec::with_capacity(s);
        for i in 0..s {
            let x = &xs[i * n..(i + 1) * n];
            e.extend(self.model.gradient(x));
            js.push(self.model.structure(x));
            gs.push(self.model.input_map(x));
            rs.push(self.model.dissipation(x));
        }

        let mut u = self.samples.clone();
        if let PortLaw::Feedback(cfg) = self.law {
            for i in 0..s {
                let y_i = match cfg.mode {
                    FeedbackMode::Stagewise => gs[i].tr_matvec(&e[i * n..(i + 1) * n]),
                    FeedbackMode::Portlevel => {
                        let mut me = vec![0.0; n];
                        for l in 0..s {
                            let ml = self.scheme.mass().get(i, l);
                            for c in 0..n {
                                me[c] += ml * e[l * n + c];
                            }
                        }
                        gs[i].tr_matvec(&me)
                    }
                };
                for k in 0..m {
                    u[i * m + k] -= cfg.gain * y_i[k];
                }
            }
        }

        let mut f = Vec::with_capacity(s * n);
        for i in 0..s {
            let ei = &e[i * n..(i + 1) * n];
            let mut drift = js[i].matvec(ei);
            if let Some(r) = &rs[i] {
                for (d, v) in drift.iter_mut().zip(r.matvec(ei)) {
                    *d -= v;
                }
            }
            let gu = gs[i].matvec(&u[i * m..(i + 1) * m]);
            f.extend(drift.iter().zip(&gu).map(|(d, g)| -d - g));
        }
        StageVariables { f, e, u }
    }

    fn residual(&self, xs: &[f64]) -> Vec<f64> {
        let (n, s) = (self.n, self.s);
        let f = self.evaluate(xs).f;
        let mut r = Vec::with_capacity(s * n);
        for i in 0..s {
            for c in 0..n {
                let mut v = xs[i * n + c] - self.x0[c];
                for j in 0..s {
                    v += self.h * self.coeffs.get(i, j, c) * f[j * n + c];
                }
                r.push(v);
            }
        }
        r
    }

    /// Exact Jacobian `I + h 𝔸 F` of the (affine) residual for linear
    /// constant-structure models.
    fn linear_jacobian(&self) -> Option<Matrix> {
        let (n, m, s) = (self.n, self.m, self.s);
        let q = self.model.quadratic_form()?;
        let probe = vec![0.0; n];
        let j = self.model.structure(&probe);
        let g = self.model.input_map(&probe);
        let jr = match self.model.dissipation(&probe) {
            Some(r) => j.sub(&r),
            None => j,
        };
        let drift = jr.matmul(q);
        let ggq = g.matmul(&g.transpose()).matmul(q);

        // f = F X + c, F assembled blockwise
        let mut big_f = Matrix::zeros(s * n, s * n);
        for i in 0..s {
            big_f.set_block(i * n, i * n, &drift.scale(-1.0));
        }
        if let PortLaw::Feedback(cfg) = self.law {
            if m > 0 {
                for i in 0..s {
                    for l in 0..s {
                        let w = match cfg.mode {
                            FeedbackMode::Stagewise if i == l => cfg.gain,
                            FeedbackMode::Stagewise => 0.0,
                            FeedbackMode::Portlevel => cfg.gain * self.scheme.mass().get(i, l),
                        };
                        if w != 0.0 {
                            let blk = big_f.block(i * n, l * n, n, n).add(&ggq.scale(w));
                            big_f.set_block(i * n, l * n, &blk);
                        }
                    }
                }
            }
        }

        let mut coef = Matrix::zeros(s * n, s * n);
        for i in 0..s {
            for jj in 0..s {
                for c in 0..n {
                    coef[(i * n + c, jj * n + c)] = self.coeffs.get(i, jj, c);
                }
            }
        }
        Some(Matrix::identity(s * n).add(&coef.matmul(&big_f).scale(self.h)))
    }

    fn fd_jacobian(&self, xs: &[f64], r0: &[f64]) -> Matrix {
        let dim = xs.len();
        let step = libm::sqrt(f64::EPSILON) * (1.0 + norm_max(xs));
        let mut jac = Matrix::zeros(dim, dim);
        let mut xp = xs.to_vec();
        for k in 0..dim {
            let keep = xp[k];
            xp[k] = keep + step;
            let dx = xp[k] - keep;
            let rp = self.residual(&xp);
            for i in 0..dim {
                jac[(i, k)] = (rp[i] - r0[i]) / dx;
            }
            xp[k] = keep;
        }
        jac
    }
}

fn sample_stage_inputs(signal: &dyn InputSignal, nodes: &[f64], t0: f64, h: f64, m: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(nodes.len() * m);
    for c in nodes {
        let v = signal.eval(t0 + c * h);
        if v.len() != m {
            return Err(Error::Dimension { expected: m, found: v.len(), context: "input signal" });
        }
        out.extend(v);
    }
    Ok(out)
}

/// Samples `signal` at the collocation times of `[t0, t0 + h]`, stacked.
pub fn sample_input(signal: &dyn InputSignal, scheme: &CollocationScheme, t0: f64, h: f64) -> Result<Vec<f64>> {
    sample_stage_inputs(signal, scheme.nodes(), t0, h, signal.port_dim())
}

fn solve_impl(
    model: &dyn PhModel,
    scheme: &CollocationScheme,
    x0: &[f64],
    law: PortLaw<'_>,
    t0: f64,
    h: f64,
    cfg: &SolverConfig,
    partitioned: bool,
) -> Result<StageSolution> {
    cfg.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Config("step size must be positive and finite".into()));
    }
    let (n, m, s) = (model.state_dim(), model.port_dim(), scheme.stages());
    if x0.len() != n {
        return Err(Error::Dimension { expected: n, found: x0.len(), context: "initial state" });
    }
    if law.signal().port_dim() != m {
        return Err(Error::Dimension { expected: m, found: law.signal().port_dim(), context: "input signal" });
    }
    let samples = sample_stage_inputs(law.signal(), scheme.nodes(), t0, h, m)?;
    let sys = StageSystem {
        model,
        scheme,
        coeffs: StageCoefficients::new(scheme, n, partitioned),
        law,
        x0,
        h,
        samples,
        n,
        m,
        s,
    };

    let linear = model.constant_structure() && model.quadratic_form().is_some();
    let direct = match cfg.method {
        SolveMethod::Auto => linear,
        SolveMethod::DirectLinear if linear => true,
        SolveMethod::DirectLinear => {
            return Err(Error::Config("direct-linear solve needs a linear constant-structure model".into()))
        }
        SolveMethod::Newton => false,
    };

    let mut xs: Vec<f64> = (0..s).flat_map(|_| x0.iter().copied()).collect();
    let mut r = sys.residual(&xs);
    let mut res = norm_max(&r);
    let mut iterations = 0;

    let fixed_jac = if direct {
        let jac = sys.linear_jacobian().expect("linear model has a quadratic form");
        Some(Lu::factor(&jac)?)
    } else {
        None
    };

    let mut last_lu = None;
    while res > cfg.tol || (direct && iterations == 0) {
        if iterations >= cfg.max_iter {
            return Err(Error::Divergence { iterations, residual: res });
        }
        let lu = match &fixed_jac {
            Some(lu) => lu.clone(),
            None => Lu::factor(&sys.fd_jacobian(&xs, &r))?,
        };
        let dx = lu.solve(&r);
        for (x, d) in xs.iter_mut().zip(&dx) {
            *x -= d;
        }
        r = sys.residual(&xs);
        let new_res = norm_max(&r);
        iterations += 1;
        if !new_res.is_finite() {
            return Err(Error::Divergence { iterations, residual: new_res });
        }
        res = new_res;
        last_lu = Some(lu);
    }

    // polish down to the rounding floor with the last factorization
    if let Some(lu) = last_lu.or(fixed_jac) {
        for _ in 0..2 {
            let dx = lu.solve(&r);
            let trial: Vec<f64> = xs.iter().zip(&dx).map(|(x, d)| x - d).collect();
            let rt = sys.residual(&trial);
            let rt_norm = norm_max(&rt);
            if rt_norm < res {
                xs = trial;
                r = rt;
                res = rt_norm;
            } else {
                break;
            }
        }
    }

    let vars = sys.evaluate(&xs);
    let x_end: Vec<f64> = (0..n)
        .map(|c| x0[c] - h * (0..s).map(|j| scheme.b()[j] * vars.f[j * n + c]).sum::<f64>())
        .collect();
    let stage_x = xs.chunks(n).map(<[f64]>::to_vec).collect();
    Ok(StageSolution {
        t0,
        h,
        x0: x0.to_vec(),
        stage_x,
        f: vars.f,
        e: vars.e,
        u: vars.u,
        external: sys.samples,
        x_end,
        iterations,
        residual: res,
        partitioned,
    })
}

/// Collocation step with the scheme's own tableau applied to every state
/// component.
pub fn solve_stages(
    model: &dyn PhModel,
    scheme: &CollocationScheme,
    x0: &[f64],
    law: PortLaw<'_>,
    t0: f64,
    h: f64,
    cfg: &SolverConfig,
) -> Result<StageSolution> {
    solve_impl(model, scheme, x0, law, t0, h, cfg, false)
}

/// Lobatto IIIA/IIIB step on a partitioned model with `x0 = (q0, p0)`.
pub fn solve_stages_partitioned(
    model: &dyn PhModel,
    scheme: &CollocationScheme,
    x0: &[f64],
    law: PortLaw<'_>,
    t0: f64,
    h: f64,
    cfg: &SolverConfig,
) -> Result<StageSolution> {
    if scheme.kind() != SchemeKind::LobattoPair {
        return Err(Error::Config("partitioned stepping needs a Lobatto pair".into()));
    }
    if model.partition().is_none() {
        return Err(Error::Config("partitioned stepping needs a partitioned model".into()));
    }
    solve_impl(model, scheme, x0, law, t0, h, cfg, true)
}

/// One step of the discrete-time PH system. Lobatto pairs on partitioned
/// models use the IIIA/IIIB split; every other combination is plain
/// collocation.
pub fn step(
    model: &dyn PhModel,
    scheme: &CollocationScheme,
    x0: &[f64],
    law: PortLaw<'_>,
    t0: f64,
    h: f64,
    cfg: &SolverConfig,
) -> Result<StageSolution> {
    if scheme.kind() == SchemeKind::LobattoPair && model.partition().is_some() {
        solve_stages_partitioned(model, scheme, x0, law, t0, h, cfg)
    } else {
        solve_stages(model, scheme, x0, law, t0, h, cfg)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(alloc::format!("normalized time {tau} outside [0, 1]")));
    }
    Ok(())
}

/// Collocation polynomial `x̃(t0 + τh) = x0 - h Σ_j f_j ∫_0^τ ℓ_j`.
pub fn dense_eval(sol: &StageSolution, scheme: &CollocationScheme, tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let n = sol.state_dim();
    let mut x = sol.x0.clone();
    for j in 0..sol.stages() {
        let w = sol.h * scheme.basis_integral(j, tau);
        for c in 0..n {
            x[c] -= w * sol.f[j * n + c];
        }
    }
    Ok(x)
}

/// Time derivative of the collocation polynomial, `-Σ_j f_j ℓ_j(τ)`.
pub fn dense_derivative(sol: &StageSolution, scheme: &CollocationScheme, tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let n = sol.state_dim();
    let mut dx = vec![0.0; n];
    for j in 0..sol.stages() {
        let l = scheme.basis_value(j, tau);
        for c in 0..n {
            dx[c] -= l * sol.f[j * n + c];
        }
    }
    Ok(dx)
}

/// A fixed-step run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scheme: alloc::string::String,
    pub model: alloc::string::String,
    pub h: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub energy: Vec<StepEnergy>,
    pub stages: Option<Vec<StageSolution>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.energy.len()
    }
}

/// Number of steps `N = t_end / h`, which must be an integer.
pub fn step_count(h: f64, t_end: f64) -> Result<usize> {
    if !(h > 0.0) || !(t_end > 0.0) || !h.is_finite() || !t_end.is_finite() {
        return Err(Error::Config("h and t_end must be positive".into()));
    }
    let ratio = t_end / h;
    let n = libm::round(ratio);
    if (ratio - n).abs() > 1e-9 * ratio || n < 1.0 {
        return Err(Error::Config(alloc::format!("t_end = {t_end} is not an integer multiple of h = {h}")));
    }
    Ok(n as usize)
}

/// Runs `N = t_end / h` steps from `x0`, chaining `x0ᵏ⁺¹ = x_endᵏ`.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    model: &dyn PhModel,
    scheme: &CollocationScheme,
    x0: &[f64],
    law: PortLaw<'_>,
    h: f64,
    t_end: f64,
    cfg: &SolverConfig,
    retain_stages: bool,
) -> Result<Trajectory> {
    let steps = step_count(h, t_end)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut energy = Vec::with_capacity(steps);
    let mut stages = retain_stages.then(|| Vec::with_capacity(steps));
    times.push(0.0);
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    for k in 0..steps {
        let t0 = k as f64 * h;
        let sol = step(model, scheme, &x, law, t0, h, cfg)
            .map_err(|e| Error::AtStep { step: k, source: alloc::boxed::Box::new(e) })?;
        energy.push(step_energy(model, scheme, &sol)?);
        x = sol.x_end.clone();
        times.push((k + 1) as f64 * h);
        states.push(x.clone());
        if let Some(st) = stages.as_mut() {
            st.push(sol);
        }
    }
    Ok(Trajectory {
        scheme: scheme.label(),
        model: model.name().into(),
        h,
        times,
        states,
        energy,
        stages,
    })
}
