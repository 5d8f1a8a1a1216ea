//! Collocation node sets, Butcher tableaux and Lagrange mass matrices.
//!
//! Everything is derived from the node set: the Lagrange basis `ℓ_j` is
//! built in a (centered) monomial basis, and both the Runge-Kutta coefficients
//! `a_ij = ∫_0^{c_i} ℓ_j`, `b_j = ∫_0^1 ℓ_j` and the mass matrix
//! `m_ij = ∫_0^1 ℓ_i ℓ_j` come from exact antidifferentiation.
//!
//! Two families are supported:
//!
//! * Gauss-Legendre (`1 ≤ s ≤ 8`): nodes are the zeros of the shifted
//!   Legendre polynomial, the mass matrix is diagonal with `m_ii = b_i`.
//! * Lobatto IIIA/IIIB pairs (`2 ≤ s ≤ 4`): nodes include both endpoints;
//!   the IIIA tableau is the collocation tableau and the IIIB coefficients
//!   follow from the symplectic pair condition
//!   `b_i â_ij + b_j a_ji = b_i b_j`.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::poly::Poly;

pub const MAX_GAUSS_STAGES: usize = 8;
pub const MIN_LOBATTO_STAGES: usize = 2;
pub const MAX_LOBATTO_STAGES: usize = 4;

const ROW_SUM_TOL: f64 = 1e-13;
const C1_TOL: f64 = 1e-14;

/// Construction-time tolerance for the Gauss orthogonality checks. The
/// monomial basis loses about one digit between `s = 4` and `s = 8`.
fn gauss_tolerance(s: usize) -> f64 {
    C1_TOL * s.max(1) as f64
}
const PAIR_TOL: f64 = 1e-13;

/// Normalized collocation points `0 ≤ c_1 < … < c_s ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    c: Vec<f64>,
}

impl NodeSet {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::Range { what: "stage count", value: 0, min: 1, max: usize::MAX });
        }
        let in_unit = c.iter().all(|v| (0.0..=1.0).contains(v));
        let increasing = c.windows(2).all(|w| w[0] < w[1]);
        if !in_unit || !increasing {
            return Err(Error::Config("collocation points must be strictly increasing in [0, 1]".into()));
        }
        Ok(Self { c })
    }

    pub fn stages(&self) -> usize {
        self.c.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.c
    }
}

/// Zeros of `d^s/dτ^s (τ^s (τ-1)^s)` on `(0, 1)`, ascending.
pub fn gauss_legendre_nodes(s: usize) -> Result<NodeSet> {
    let c = match s {
        1 => alloc::vec![0.5],
        2 => {
            let d = libm::sqrt(3.0) / 6.0;
            alloc::vec![0.5 - d, 0.5 + d]
        }
        3 => {
            let d = libm::sqrt(15.0) / 10.0;
            alloc::vec![0.5 - d, 0.5, 0.5 + d]
        }
        4..=MAX_GAUSS_STAGES => legendre_roots_unit(s),
        _ => {
            return Err(Error::Range { what: "Gauss-Legendre stages", value: s, min: 1, max: MAX_GAUSS_STAGES })
        }
    };
    NodeSet::new(c)
}

/// Lobatto points: endpoints plus the extrema of the degree `s-1`
/// Legendre polynomial, mapped to `[0, 1]`.
pub fn lobatto_nodes(s: usize) -> Result<NodeSet> {
    let c = match s {
        2 => alloc::vec![0.0, 1.0],
        3 => alloc::vec![0.0, 0.5, 1.0],
        4 => {
            let d = libm::sqrt(5.0) / 10.0;
            alloc::vec![0.0, 0.5 - d, 0.5 + d, 1.0]
        }
        _ => {
            return Err(Error::Range {
                what: "Lobatto stages",
                value: s,
                min: MIN_LOBATTO_STAGES,
                max: MAX_LOBATTO_STAGES,
            })
        }
    };
    NodeSet::new(c)
}

/// `(P_s(x), P_s'(x))` by the three-term recurrence.
fn legendre_with_derivative(s: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=s {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = s as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Roots of `P_s` by Newton iteration from Chebyshev points, mapped to
/// `(0, 1)` symmetrically about `1/2`.
fn legendre_roots_unit(s: usize) -> Vec<f64> {
    let mut c = alloc::vec![0.0; s];
    let half = s / 2;
    for i in 0..half {
        // i-th largest root
        let mut x = libm::cos(core::f64::consts::PI * (2 * i + 1) as f64 / (2 * s) as f64);
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(s, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        c[s - 1 - i] = 0.5 + 0.5 * x;
        c[i] = 0.5 - 0.5 * x;
    }
    if s % 2 == 1 {
        c[half] = 0.5;
    }
    c
}

/// The Lagrange basis polynomial `ℓ_i` (zero-based `i`) for `nodes`, in
/// the monomial basis of `τ`.
pub fn lagrange_polynomial(nodes: &NodeSet, i: usize) -> Result<Poly> {
    let c = nodes.points();
    if i >= c.len() {
        return Err(Error::Range { what: "Lagrange index", value: i, min: 0, max: c.len() - 1 });
    }
    let mut p = Poly::constant(1.0);
    for (j, cj) in c.iter().enumerate() {
        if j != i {
            p = p.mul(&Poly::linear_factor(*cj)).scale(1.0 / (c[i] - cj));
        }
    }
    Ok(p)
}

/// Lagrange basis in the centered variable `u = τ - 1/2`. Coefficients
/// stay O(1) this way, which keeps the exact integrals accurate to a few
/// ulps up to `s = 8`.
fn centered_basis(nodes: &NodeSet) -> Vec<Poly> {
    let c = nodes.points();
    (0..c.len())
        .map(|i| {
            let mut p = Poly::constant(1.0);
            for (j, cj) in c.iter().enumerate() {
                if j != i {
                    p = p.mul(&Poly::linear_factor(cj - 0.5)).scale(1.0 / (c[i] - cj));
                }
            }
            p
        })
        .collect()
}

/// `∫_0^τ p` for a centered polynomial `p`, as a function of `τ`.
#[derive(Debug, Clone)]
struct CenteredPrimitive {
    prim: Poly,
    at_zero: f64,
}

impl CenteredPrimitive {
    fn new(p: &Poly) -> Self {
        let prim = p.antiderivative();
        let at_zero = prim.eval(-0.5);
        Self { prim, at_zero }
    }

    fn eval(&self, tau: f64) -> f64 {
        self.prim.eval(tau - 0.5) - self.at_zero
    }
}

/// Runge-Kutta coefficients `(c, A, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub nodes: NodeSet,
    pub a: Matrix,
    pub b: Vec<f64>,
}

impl ButcherTableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// `max_i |Σ_j a_ij - c_i|`
    pub fn row_sum_defect(&self) -> f64 {
        let c = self.nodes.points();
        (0..self.stages())
            .map(|i| (self.a.row(i).iter().sum::<f64>() - c[i]).abs())
            .fold(0.0, f64::max)
    }

    /// `|Σ_j b_j - 1|`
    pub fn weight_sum_defect(&self) -> f64 {
        (self.b.iter().sum::<f64>() - 1.0).abs()
    }
}

/// Collocation tableau from exact integrals of the Lagrange basis.
pub fn butcher_from_nodes(nodes: &NodeSet) -> ButcherTableau {
    let s = nodes.stages();
    let prims: Vec<CenteredPrimitive> = centered_basis(nodes).iter().map(CenteredPrimitive::new).collect();
    let mut a = Matrix::zeros(s, s);
    for (i, ci) in nodes.points().iter().enumerate() {
        for (j, pj) in prims.iter().enumerate() {
            a[(i, j)] = pj.eval(*ci);
        }
    }
    let b = prims.iter().map(|p| p.eval(1.0)).collect();
    ButcherTableau { nodes: nodes.clone(), a, b }
}

/// Symmetric Gram matrix `m_ij = ∫_0^1 ℓ_i ℓ_j` of the Lagrange basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix(Matrix);

impl MassMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn stages(&self) -> usize {
        self.0.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Largest off-diagonal magnitude.
    pub fn max_off_diagonal(&self) -> f64 {
        let s = self.stages();
        let mut d: f64 = 0.0;
        for i in 0..s {
            for j in 0..s {
                if i != j {
                    d = d.max(self.0[(i, j)].abs());
                }
            }
        }
        d
    }
}

pub fn mass_matrix(nodes: &NodeSet) -> MassMatrix {
    let basis = centered_basis(nodes);
    let s = basis.len();
    let mut m = Matrix::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            let v = basis[i].mul(&basis[j]).integrate_symmetric(0.5);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    MassMatrix(m)
}

/// Partner coefficients `â_ij = b_j - (b_j / b_i) a_ji` completing a
/// symplectic partitioned pair.
pub fn iiib_from_iiia(tableau: &ButcherTableau) -> Result<Matrix> {
    let b = &tableau.b;
    if let Some(index) = b.iter().position(|w| *w == 0.0) {
        return Err(Error::ZeroWeight { index });
    }
    let s = b.len();
    let mut a_hat = Matrix::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            a_hat[(i, j)] = b[j] - b[j] / b[i] * tableau.a[(j, i)];
        }
    }
    Ok(a_hat)
}

/// `max_{i,j} |b_i â_ij + b_j a_ji - b_i b_j|`
pub fn pair_condition_residual(a: &Matrix, a_hat: &Matrix, b: &[f64]) -> f64 {
    let s = b.len();
    let mut r: f64 = 0.0;
    for i in 0..s {
        for j in 0..s {
            r = r.max((b[i] * a_hat[(i, j)] + b[j] * a[(j, i)] - b[i] * b[j]).abs());
        }
    }
    r
}

/// Condition (C1): the Lagrange basis is orthogonal.
pub fn check_c1(mass: &MassMatrix, tol: f64) -> bool {
    mass.max_off_diagonal() <= tol
}

/// `max_{i,j} |a_ij b_i + a_ji b_j - b_i b_j|`; zero exactly for schemes
/// that conserve quadratic invariants.
pub fn quadratic_invariant_residual(tableau: &ButcherTableau) -> f64 {
    pair_condition_residual(&tableau.a, &tableau.a, &tableau.b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    GaussLegendre,
    LobattoPair,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::GaussLegendre => "gauss",
            SchemeKind::LobattoPair => "lobatto",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully assembled collocation scheme. Immutable after construction.
#[derive(Debug, Clone)]
pub struct CollocationScheme {
    kind: SchemeKind,
    tableau: ButcherTableau,
    a_hat: Option<Matrix>,
    mass: MassMatrix,
    order: usize,
    primitives: Vec<CenteredPrimitive>,
    basis: Vec<Poly>,
}

impl CollocationScheme {
    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn stages(&self) -> usize {
        self.tableau.stages()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        self.tableau.nodes.points()
    }

    pub fn tableau(&self) -> &ButcherTableau {
        &self.tableau
    }

    /// Coefficients applied to the q-partition (the collocation tableau).
    pub fn a(&self) -> &Matrix {
        &self.tableau.a
    }

    /// Coefficients applied to the p-partition of a Lobatto pair.
    pub fn a_hat(&self) -> Option<&Matrix> {
        self.a_hat.as_ref()
    }

    pub fn b(&self) -> &[f64] {
        &self.tableau.b
    }

    pub fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    pub fn satisfies_c1(&self) -> bool {
        check_c1(&self.mass, gauss_tolerance(self.stages()))
    }

    /// `∫_0^τ ℓ_j(σ) dσ`
    pub fn basis_integral(&self, j: usize, tau: f64) -> f64 {
        self.primitives[j].eval(tau)
    }

    /// `ℓ_j(τ)`
    pub fn basis_value(&self, j: usize, tau: f64) -> f64 {
        self.basis[j].eval(tau - 0.5)
    }

    pub fn label(&self) -> alloc::string::String {
        alloc::format!("{}-{}", self.kind.name(), self.stages())
    }
}

/// Builds and validates a scheme from the catalogue.
pub fn make_scheme(kind: SchemeKind, s: usize) -> Result<CollocationScheme> {
    let nodes = match kind {
        SchemeKind::GaussLegendre => gauss_legendre_nodes(s)?,
        SchemeKind::LobattoPair => lobatto_nodes(s)?,
    };
    let tableau = butcher_from_nodes(&nodes);
    let mass = mass_matrix(&nodes);

    let defect = tableau.row_sum_defect();
    if defect > ROW_SUM_TOL {
        return Err(Error::Invariant { check: "row sums equal nodes", defect });
    }
    let defect = tableau.weight_sum_defect();
    if defect > ROW_SUM_TOL {
        return Err(Error::Invariant { check: "weights sum to one", defect });
    }

    let (a_hat, order) = match kind {
        SchemeKind::GaussLegendre => {
            let tol = gauss_tolerance(s);
            let defect = mass.max_off_diagonal();
            if defect > tol {
                return Err(Error::Invariant { check: "(C1) diagonal mass matrix", defect });
            }
            let defect = (0..s).map(|i| (mass.get(i, i) - tableau.b[i]).abs()).fold(0.0, f64::max);
            if defect > tol {
                return Err(Error::Invariant { check: "m_ii = b_i", defect });
            }
            (None, 2 * s)
        }
        SchemeKind::LobattoPair => {
            let a_hat = iiib_from_iiia(&tableau)?;
            let defect = pair_condition_residual(&tableau.a, &a_hat, &tableau.b);
            if defect > PAIR_TOL {
                return Err(Error::Invariant { check: "symplectic pair condition", defect });
            }
            (Some(a_hat), 2 * s - 2)
        }
    };

    let basis = centered_basis(&nodes);
    let primitives = basis.iter().map(CenteredPrimitive::new).collect();

    Ok(CollocationScheme { kind, tableau, a_hat, mass, order, primitives, basis })
}

/// The schemes exercised by the experiments: Gauss s=1,2,3 and Lobatto
/// pairs s=3,4.
pub fn catalogue() -> [(SchemeKind, usize); 5] {
    [
        (SchemeKind::GaussLegendre, 1),
        (SchemeKind::GaussLegendre, 2),
        (SchemeKind::GaussLegendre, 3),
        (SchemeKind::LobattoPair, 3),
        (SchemeKind::LobattoPair, 4),
    ]
}
