//! Explicit port-Hamiltonian models `ẋ = (J(x) - R(x)) ∇H(x) + G(x) u`,
//! `y = G(x)ᵀ ∇H(x)`, plus input signals and damping feedback.
//!
//! State layout for mechanical models is always `x = (q, p)`.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};

/// An explicit port-Hamiltonian system. `J(x)` must be skew-symmetric;
/// lossy models report their resistive part through [`PhModel::dissipation`].
pub trait PhModel {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn port_dim(&self) -> usize;
    fn hamiltonian(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Interconnection matrix `J(x)`, `n × n`.
    fn structure(&self, x: &[f64]) -> Matrix;
    /// Input map `G(x)`, `n × m`.
    fn input_map(&self, x: &[f64]) -> Matrix;

    /// Resistive matrix `R(x) = R(x)ᵀ ⪰ 0`, if any.
    fn dissipation(&self, _x: &[f64]) -> Option<Matrix> {
        None
    }

    /// `J`, `G` (and `R`) do not depend on the state: condition (C2).
    fn constant_structure(&self) -> bool;

    /// `Q` such that `∇H(x) = Q x`, for quadratic Hamiltonians.
    fn quadratic_form(&self) -> Option<&Matrix>;

    /// The `(q, p)` split used by partitioned Lobatto schemes.
    fn partition(&self) -> Option<&PartitionedPhModel> {
        None
    }

    /// Collocated output `y = Gᵀ ∇H`.
    fn output(&self, x: &[f64]) -> Vec<f64> {
        self.input_map(x).tr_matvec(&self.gradient(x))
    }
}

/// A model with constant `J`, `G` and `H = ½ xᵀ Q x`.
#[derive(Debug, Clone)]
pub struct LinearPhModel {
    name: String,
    j: Matrix,
    g: Matrix,
    q: Matrix,
}

impl LinearPhModel {
    pub fn new(name: impl Into<String>, j: Matrix, g: Matrix, q: Matrix) -> Result<Self> {
        let n = j.rows();
        if !j.is_square() || g.rows() != n || q.rows() != n || !q.is_square() {
            return Err(Error::Dimension { expected: n, found: g.rows(), context: "linear model" });
        }
        if j.skew_defect() > 1e-13 {
            return Err(Error::Config("structure matrix J is not skew-symmetric".into()));
        }
        cholesky(&q, "energy matrix Q")?;
        Ok(Self { name: name.into(), j, g, q })
    }
}

impl PhModel for LinearPhModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn state_dim(&self) -> usize {
        self.j.rows()
    }
    fn port_dim(&self) -> usize {
        self.g.cols()
    }
    fn hamiltonian(&self, x: &[f64]) -> f64 {
        0.5 * crate::linalg::dot(x, &self.q.matvec(x))
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.q.matvec(x)
    }
    fn structure(&self, _x: &[f64]) -> Matrix {
        self.j.clone()
    }
    fn input_map(&self, _x: &[f64]) -> Matrix {
        self.g.clone()
    }
    fn constant_structure(&self) -> bool {
        true
    }
    fn quadratic_form(&self) -> Option<&Matrix> {
        Some(&self.q)
    }
}

/// Lossless oscillator with `J = [0 1; -1 0]`, `g = [0; 1]`, `Q = I`.
pub fn oscillator() -> LinearPhModel {
    LinearPhModel::new(
        "oscillator",
        Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]),
        Matrix::from_rows(&[[0.0], [1.0]]),
        Matrix::identity(2),
    )
    .expect("oscillator data is valid")
}

/// Linear mechanical system `q̇ = P p`, `ṗ = -Q q + G u` with
/// `H = ½ qᵀ Q q + ½ pᵀ P p`.
#[derive(Debug, Clone)]
pub struct PartitionedPhModel {
    name: String,
    stiffness: Matrix,
    inverse_mass: Matrix,
    g: Matrix,
    full_j: Matrix,
    full_g: Matrix,
    full_q: Matrix,
}

impl PartitionedPhModel {
    pub fn new(name: impl Into<String>, stiffness: Matrix, inverse_mass: Matrix, g: Matrix) -> Result<Self> {
        let n = stiffness.rows();
        if inverse_mass.rows() != n || g.rows() != n {
            return Err(Error::Dimension { expected: n, found: g.rows(), context: "partitioned model" });
        }
        cholesky(&stiffness, "stiffness matrix Q")?;
        cholesky(&inverse_mass, "inverse mass matrix P")?;
        let m = g.cols();
        let mut full_j = Matrix::zeros(2 * n, 2 * n);
        full_j.set_block(0, n, &Matrix::identity(n));
        full_j.set_block(n, 0, &Matrix::identity(n).scale(-1.0));
        let mut full_g = Matrix::zeros(2 * n, m);
        full_g.set_block(n, 0, &g);
        let mut full_q = Matrix::zeros(2 * n, 2 * n);
        full_q.set_block(0, 0, &stiffness);
        full_q.set_block(n, n, &inverse_mass);
        Ok(Self { name: name.into(), stiffness, inverse_mass, g, full_j, full_g, full_q })
    }

    /// Half dimension: `q, p ∈ ℝⁿ`.
    pub fn half_dim(&self) -> usize {
        self.stiffness.rows()
    }

    pub fn effort_q(&self, q: &[f64]) -> Vec<f64> {
        self.stiffness.matvec(q)
    }

    pub fn effort_p(&self, p: &[f64]) -> Vec<f64> {
        self.inverse_mass.matvec(p)
    }

    /// `(f_q, f_p) = (-e_p, e_q - G u)`
    pub fn flows(&self, q: &[f64], p: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let eq = self.effort_q(q);
        let ep = self.effort_p(p);
        let gu = self.g.matvec(u);
        let fq = ep.iter().map(|v| -v).collect();
        let fp = eq.iter().zip(&gu).map(|(a, b)| a - b).collect();
        (fq, fp)
    }

    pub fn port_matrix(&self) -> &Matrix {
        &self.g
    }
}

impl PhModel for PartitionedPhModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn state_dim(&self) -> usize {
        2 * self.half_dim()
    }
    fn port_dim(&self) -> usize {
        self.g.cols()
    }
    fn hamiltonian(&self, x: &[f64]) -> f64 {
        0.5 * crate::linalg::dot(x, &self.full_q.matvec(x))
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.full_q.matvec(x)
    }
    fn structure(&self, _x: &[f64]) -> Matrix {
        self.full_j.clone()
    }
    fn input_map(&self, _x: &[f64]) -> Matrix {
        self.full_g.clone()
    }
    fn constant_structure(&self) -> bool {
        true
    }
    fn quadratic_form(&self) -> Option<&Matrix> {
        Some(&self.full_q)
    }
    fn partition(&self) -> Option<&PartitionedPhModel> {
        Some(self)
    }
}

/// The oscillator in mechanical form: `n = 1`, `Q = P = G = 1`.
pub fn partitioned_oscillator() -> PartitionedPhModel {
    let one = Matrix::identity(1);
    PartitionedPhModel::new("partitioned-oscillator", one.clone(), one.clone(), one)
        .expect("oscillator data is valid")
}

/// Free rigid body in body-frame angular momentum `x`, with the
/// state-dependent structure `J(x) = [x]×`. Autonomous (`m = 0`).
#[derive(Debug, Clone)]
pub struct RigidBody {
    q: Matrix,
}

impl RigidBody {
    pub const INERTIA: [f64; 3] = [1.0, 2.0, 3.0];

    pub fn new(inertia: [f64; 3]) -> Result<Self> {
        if inertia.iter().any(|i| !(*i > 0.0)) {
            return Err(Error::NotPositiveDefinite { context: "inertia tensor" });
        }
        Ok(Self { q: Matrix::diagonal(&inertia.map(|i| 1.0 / i)) })
    }

    /// Casimir `½ ‖x‖²`.
    pub fn casimir(x: &[f64]) -> f64 {
        0.5 * crate::linalg::dot(x, x)
    }
}

impl PhModel for RigidBody {
    fn name(&self) -> &str {
        "rigid-body"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn port_dim(&self) -> usize {
        0
    }
    fn hamiltonian(&self, x: &[f64]) -> f64 {
        0.5 * crate::linalg::dot(x, &self.q.matvec(x))
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.q.matvec(x)
    }
    fn structure(&self, x: &[f64]) -> Matrix {
        Matrix::from_rows(&[[0.0, -x[2], x[1]], [x[2], 0.0, -x[0]], [-x[1], x[0], 0.0]])
    }
    fn input_map(&self, _x: &[f64]) -> Matrix {
        Matrix::zeros(3, 0)
    }
    fn constant_structure(&self) -> bool {
        false
    }
    fn quadratic_form(&self) -> Option<&Matrix> {
        Some(&self.q)
    }
}

pub fn rigid_body() -> RigidBody {
    RigidBody::new(RigidBody::INERTIA).expect("positive inertias")
}

/// A time signal `u(t) ∈ ℝᵐ`, defined for `t ≥ 0`.
pub trait InputSignal {
    fn name(&self) -> &str;
    fn port_dim(&self) -> usize;
    fn eval(&self, t: f64) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroInput {
    pub dim: usize,
}

impl InputSignal for ZeroInput {
    fn name(&self) -> &str {
        "zero"
    }
    fn port_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _t: f64) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

/// Scalar `sin²` pulse: zero outside `[8, 10]`, `sin²(π (t - 8) / 2)` inside.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pulse;

impl Pulse {
    pub const START: f64 = 8.0;
    pub const END: f64 = 10.0;

    pub fn value(t: f64) -> f64 {
        if t < Self::START || t > Self::END {
            0.0
        } else {
            let s = libm::sin(core::f64::consts::PI * (t - Self::START) / (Self::END - Self::START));
            s * s
        }
    }
}

impl InputSignal for Pulse {
    fn name(&self) -> &str {
        "pulse"
    }
    fn port_dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64) -> Vec<f64> {
        vec![Self::value(t)]
    }
}

pub fn pulse_input() -> Pulse {
    Pulse
}

/// An input given by a closure.
pub struct FnInput<F> {
    name: String,
    dim: usize,
    f: F,
}

impl<F: Fn(f64) -> Vec<f64>> FnInput<F> {
    pub fn new(name: impl Into<String>, dim: usize, f: F) -> Self {
        Self { name: name.into(), dim, f }
    }
}

impl<F: Fn(f64) -> Vec<f64>> InputSignal for FnInput<F> {
    fn name(&self) -> &str {
        &self.name
    }
    fn port_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64) -> Vec<f64> {
        (self.f)(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    /// `u_i = -r Gᵀ e_i + v(t_i)` at every stage: the collocation
    /// discretization of the closed-loop ODE.
    Stagewise,
    /// `u = -r y + v` with the discrete output `y = Gᵀ M e`, coupling the
    /// stages through the mass matrix.
    Portlevel,
}

impl FeedbackMode {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackMode::Stagewise => "stagewise",
            FeedbackMode::Portlevel => "portlevel",
        }
    }
}

/// Damping injection `u = -r y + v`.
#[derive(Clone, Copy, Debug)]
pub struct FeedbackConfig<'a> {
    pub gain: f64,
    pub mode: FeedbackMode,
    pub external: &'a dyn InputSignal,
}

impl<'a> FeedbackConfig<'a> {
    pub fn new(gain: f64, mode: FeedbackMode, external: &'a dyn InputSignal) -> Result<Self> {
        if !(gain >= 0.0) || !gain.is_finite() {
            return Err(Error::Config("damping gain must be finite and non-negative".into()));
        }
        Ok(Self { gain, mode, external })
    }
}

impl core::fmt::Debug for dyn InputSignal + '_ {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// The damped model `ẋ = (J - R) ∇H + G v` with `R = r G Gᵀ`.
pub struct ClosedLoop<M> {
    inner: M,
    gain: f64,
    name: String,
}

/// Closes the port of `model` with stagewise damping injection.
pub fn closed_loop<M: PhModel>(model: M, cfg: &FeedbackConfig<'_>) -> Result<ClosedLoop<M>> {
    if model.port_dim() == 0 {
        return Err(Error::MissingPort);
    }
    if cfg.mode != FeedbackMode::Stagewise {
        return Err(Error::Mode("closed_loop realizes stagewise feedback only"));
    }
    let name = alloc::format!("{}+damping", model.name());
    Ok(ClosedLoop { inner: model, gain: cfg.gain, name })
}

impl<M: PhModel> ClosedLoop<M> {
    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    /// `(J - R) Q` for linear constant-structure models.
    pub fn drift_matrix(&self) -> Option<Matrix> {
        if !self.inner.constant_structure() {
            return None;
        }
        let q = self.inner.quadratic_form()?;
        let x0 = vec![0.0; self.inner.state_dim()];
        let r = self.dissipation(&x0).expect("closed loop always dissipates");
        Some(self.inner.structure(&x0).sub(&r).matmul(q))
    }
}

impl<M: PhModel> PhModel for ClosedLoop<M> {
    fn name(&self) -> &str {
        &self.name
    }
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn port_dim(&self) -> usize {
        self.inner.port_dim()
    }
    fn hamiltonian(&self, x: &[f64]) -> f64 {
        self.inner.hamiltonian(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.inner.gradient(x)
    }
    fn structure(&self, x: &[f64]) -> Matrix {
        self.inner.structure(x)
    }
    fn input_map(&self, x: &[f64]) -> Matrix {
        self.inner.input_map(x)
    }
    fn dissipation(&self, x: &[f64]) -> Option<Matrix> {
        let g = self.inner.input_map(x);
        let r = g.matmul(&g.transpose()).scale(self.gain);
        Some(match self.inner.dissipation(x) {
            Some(r0) => r0.add(&r),
            None => r,
        })
    }
    fn constant_structure(&self) -> bool {
        self.inner.constant_structure()
    }
    fn quadratic_form(&self) -> Option<&Matrix> {
        self.inner.quadratic_form()
    }
}

/// Resolves a model name from the CLI vocabulary.
pub fn model_by_name(name: &str) -> Option<Box<dyn PhModel + Send + Sync>> {
    match name {
        "oscillator" => Some(Box::new(oscillator())),
        "partitioned-oscillator" => Some(Box::new(partitioned_oscillator())),
        "rigid-body" => Some(Box::new(rigid_body())),
        _ => None,
    }
}

pub const MODEL_NAMES: [&str; 3] = ["oscillator", "partitioned-oscillator", "rigid-body"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillator_examples() {
        let m = oscillator();
        assert_eq!((m.state_dim(), m.port_dim()), (2, 1));
        assert!(m.constant_structure());
        assert_eq!(m.hamiltonian(&[0.0, -1.0]), 0.5);
        assert_eq!(m.gradient(&[3.0, 4.0]), vec![3.0, 4.0]);
        let x = [0.0, -1.0];
        assert_eq!(m.structure(&x).matvec(&m.gradient(&x)), vec![-1.0, 0.0]);
        assert_eq!(m.output(&[2.0, 5.0]), vec![5.0]);
    }

    #[test]
    fn partitioned_oscillator_examples() {
        let m = partitioned_oscillator();
        assert_eq!(m.hamiltonian(&[0.0, -1.0]), 0.5);
        assert_eq!(m.effort_q(&[2.0]), vec![2.0]);
        assert_eq!(m.effort_p(&[3.0]), vec![3.0]);
        let (fq, fp) = m.flows(&[1.0], &[0.0], &[0.0]);
        assert_eq!(fq, vec![0.0]);
        assert_eq!(fp, vec![1.0]);
        // same vector field as the unpartitioned oscillator
        let osc = oscillator();
        let x = [0.3, -0.7];
        assert_eq!(m.structure(&x), osc.structure(&x));
        assert_eq!(m.input_map(&x), osc.input_map(&x));
    }

    #[test]
    fn partitioned_rejects_indefinite() {
        let one = Matrix::identity(1);
        let neg = Matrix::from_rows(&[[-1.0]]);
        assert!(PartitionedPhModel::new("bad", neg, one.clone(), one).is_err());
    }

    #[test]
    fn rigid_body_examples() {
        let m = rigid_body();
        assert_eq!(m.structure(&[1.0, 0.0, 0.0]).skew_defect(), 0.0);
        assert!((m.hamiltonian(&[1.0, 1.0, 1.0]) - 11.0 / 12.0).abs() < 1e-15);
        let x = [0.3, -1.2, 0.8];
        let e = m.gradient(&x);
        let power = crate::linalg::dot(&e, &m.structure(&x).matvec(&e));
        assert!(power.abs() < 1e-15);
        assert!(!m.constant_structure());
    }

    #[test]
    fn pulse_examples() {
        let u = pulse_input();
        assert_eq!(u.eval(5.0), vec![0.0]);
        assert!((u.eval(9.0)[0] - 1.0).abs() < 1e-15);
        assert!((u.eval(8.5)[0] - 0.5).abs() < 1e-15);
        assert_eq!(u.eval(10.5), vec![0.0]);
        for t in [Pulse::START, Pulse::END] {
            assert!((Pulse::value(t - 1e-12) - Pulse::value(t + 1e-12)).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_loop_drift() {
        let zero = ZeroInput { dim: 1 };
        let cfg = FeedbackConfig::new(0.1, FeedbackMode::Stagewise, &zero).unwrap();
        let cl = closed_loop(oscillator(), &cfg).unwrap();
        let d = cl.drift_matrix().unwrap();
        let want = Matrix::from_rows(&[[0.0, 1.0], [-1.0, -0.1]]);
        assert!(d.sub(&want).max_abs() < 1e-16);

        // eigenvalues of a 2×2 via the quadratic formula: λ² - tr λ + det
        let tr = d[(0, 0)] + d[(1, 1)];
        let det = d[(0, 0)] * d[(1, 1)] - d[(0, 1)] * d[(1, 0)];
        let disc = tr * tr - 4.0 * det;
        assert!(disc < 0.0);
        assert!((tr / 2.0 - (-0.05)).abs() < 1e-16);

        let cfg0 = FeedbackConfig::new(0.0, FeedbackMode::Stagewise, &zero).unwrap();
        let open = closed_loop(oscillator(), &cfg0).unwrap();
        assert_eq!(open.drift_matrix().unwrap(), oscillator().structure(&[0.0, 0.0]));
    }

    #[test]
    fn closed_loop_errors() {
        let zero = ZeroInput { dim: 1 };
        let cfg = FeedbackConfig::new(0.1, FeedbackMode::Stagewise, &zero).unwrap();
        assert!(matches!(closed_loop(rigid_body(), &cfg), Err(Error::MissingPort)));
        let port = FeedbackConfig::new(0.1, FeedbackMode::Portlevel, &zero).unwrap();
        assert!(matches!(closed_loop(oscillator(), &port), Err(Error::Mode(_))));
        assert!(FeedbackConfig::new(-1.0, FeedbackMode::Stagewise, &zero).is_err());
    }

    #[test]
    fn names_resolve() {
        for name in MODEL_NAMES {
            assert_eq!(model_by_name(name).unwrap().name(), name);
        }
        assert!(model_by_name("pendulum").is_none());
    }
}
