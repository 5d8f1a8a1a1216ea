//! Discrete-time Dirac structure on one sampling interval.
//!
//! The stage structure matrices are kept as `s` diagonal blocks plus the
//! `s × s` mass matrix; the Kronecker block `M ⊗ I_n` is only applied, not
//! stored. Dense assembly happens in [`kernel_check`], which needs the
//! explicit kernel representation
//!
//! ```text
//! F = I,  E = [ J M⁻¹   G ]
//!             [ -Gᵀ     0 ]
//! ```
//!
//! The structure is Dirac iff `E Fᵀ + F Eᵀ = 0`, i.e. iff `M J` is skew,
//! which holds under (C1) (diagonal `M`) or (C2) (constant `J`).

use alloc::vec;
use alloc::vec::Vec;

use crate::collocation::{CollocationScheme, MassMatrix};
use crate::error::{Error, Result};
use crate::integrator::StageSolution;
use crate::linalg::{dot, rank, Lu, Matrix};
use crate::models::PhModel;

/// Rank threshold for the `[F E]` full-row-rank test.
pub const RANK_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BlockStructure {
    n: usize,
    m: usize,
    j_blocks: Vec<Matrix>,
    g_blocks: Vec<Matrix>,
    mass: MassMatrix,
}

/// Evaluates `J` and `G` at the stage states.
pub fn assemble_blocks(
    model: &dyn PhModel,
    stage_states: &[Vec<f64>],
    scheme: &CollocationScheme,
) -> Result<BlockStructure> {
    let (n, s) = (model.state_dim(), scheme.stages());
    if stage_states.len() != s {
        return Err(Error::Dimension { expected: s, found: stage_states.len(), context: "stage count" });
    }
    if let Some(bad) = stage_states.iter().find(|x| x.len() != n) {
        return Err(Error::Dimension { expected: n, found: bad.len(), context: "stage state" });
    }
    Ok(BlockStructure {
        n,
        m: model.port_dim(),
        j_blocks: stage_states.iter().map(|x| model.structure(x)).collect(),
        g_blocks: stage_states.iter().map(|x| model.input_map(x)).collect(),
        mass: scheme.mass().clone(),
    })
}

impl BlockStructure {
    pub fn stages(&self) -> usize {
        self.j_blocks.len()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn port_dim(&self) -> usize {
        self.m
    }

    pub fn j_block(&self, i: usize) -> &Matrix {
        &self.j_blocks[i]
    }

    pub fn g_block(&self, i: usize) -> &Matrix {
        &self.g_blocks[i]
    }

    pub fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    fn check_len(&self, v: &[f64], per_stage: usize, context: &'static str) -> Result<()> {
        let expected = per_stage * self.stages();
        if v.len() != expected {
            return Err(Error::Dimension { expected, found: v.len(), context });
        }
        Ok(())
    }

    /// `(M ⊗ I_n) e`
    pub fn apply_mass(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.check_len(e, self.n, "effort vector")?;
        let (n, s) = (self.n, self.stages());
        let mut out = vec![0.0; s * n];
        for i in 0..s {
            for l in 0..s {
                let w = self.mass.get(i, l);
                for c in 0..n {
                    out[i * n + c] += w * e[l * n + c];
                }
            }
        }
        Ok(out)
    }

    /// `blockdiag(J_i) e`
    pub fn apply_structure(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.check_len(e, self.n, "effort vector")?;
        let n = self.n;
        Ok(self.j_blocks.iter().enumerate().flat_map(|(i, j)| j.matvec(&e[i * n..(i + 1) * n])).collect())
    }

    /// `blockdiag(G_i) u`
    pub fn apply_input(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u, self.m, "input vector")?;
        let m = self.m;
        Ok(self.g_blocks.iter().enumerate().flat_map(|(i, g)| g.matvec(&u[i * m..(i + 1) * m])).collect())
    }

    /// `blockdiag(G_i)ᵀ w`
    pub fn apply_input_transpose(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_len(w, self.n, "effort vector")?;
        let n = self.n;
        Ok(self.g_blocks.iter().enumerate().flat_map(|(i, g)| g.tr_matvec(&w[i * n..(i + 1) * n])).collect())
    }

    pub fn dense_structure(&self) -> Matrix {
        let (n, s) = (self.n, self.stages());
        let mut out = Matrix::zeros(s * n, s * n);
        for (i, j) in self.j_blocks.iter().enumerate() {
            out.set_block(i * n, i * n, j);
        }
        out
    }

    pub fn dense_input(&self) -> Matrix {
        let (n, m, s) = (self.n, self.m, self.stages());
        let mut out = Matrix::zeros(s * n, s * m);
        for (i, g) in self.g_blocks.iter().enumerate() {
            out.set_block(i * n, i * m, g);
        }
        out
    }

    pub fn dense_mass(&self) -> Matrix {
        self.mass.matrix().kron(&Matrix::identity(self.n))
    }
}

/// Stacked port variables of one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBond {
    pub f: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

impl DiscreteBond {
    pub fn from_solution(blocks: &BlockStructure, sol: &StageSolution) -> Result<Self> {
        let y = discrete_output(blocks, &sol.e)?;
        Ok(Self { f: sol.f.clone(), e: sol.e.clone(), u: sol.u.clone(), y })
    }
}

/// `y = Gᵀ M e`
pub fn discrete_output(blocks: &BlockStructure, e: &[f64]) -> Result<Vec<f64>> {
    blocks.apply_input_transpose(&blocks.apply_mass(e)?)
}

/// `max |-f - J e - G u|`. Only meaningful for lossless models; a
/// resistive part shows up here as a nonzero residual.
pub fn structure_residual(blocks: &BlockStructure, bond: &DiscreteBond) -> Result<f64> {
    let je = blocks.apply_structure(&bond.e)?;
    let gu = blocks.apply_input(&bond.u)?;
    Ok(bond.f.iter().zip(je.iter().zip(&gu)).map(|(f, (a, b))| (-f - a - b).abs()).fold(0.0, f64::max))
}

/// `h (M e)ᵀ f + h yᵀ u`, zero whenever the discrete Dirac structure holds.
pub fn power_residual(blocks: &BlockStructure, bond: &DiscreteBond, h: f64) -> Result<f64> {
    let me = blocks.apply_mass(&bond.e)?;
    if bond.y.len() != bond.u.len() {
        return Err(Error::Dimension { expected: bond.u.len(), found: bond.y.len(), context: "output vector" });
    }
    Ok(h * dot(&me, &bond.f) + h * dot(&bond.y, &bond.u))
}

/// Scale for the power residual tolerance: `max(1, h ‖e‖ ‖f‖)`.
pub fn power_scale(bond: &DiscreteBond, h: f64) -> f64 {
    let ne = crate::linalg::norm2(&bond.e);
    let nf = crate::linalg::norm2(&bond.f);
    (h * ne * nf).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelCheck {
    /// `max |E Fᵀ + F Eᵀ|`
    pub skew_defect: f64,
    /// `[F E]` has full row rank `s (n + m)`.
    pub rank_ok: bool,
}

/// The kernel matrix `E` of the representation `F (f, y) + E (M e, u) = 0`.
pub fn kernel_matrix(blocks: &BlockStructure) -> Result<Matrix> {
    let (n, m, s) = (blocks.n, blocks.m, blocks.stages());
    let minv = Lu::factor(blocks.mass.matrix())
        .map_err(|_| Error::Singular { context: "mass matrix" })?
        .inverse()
        .kron(&Matrix::identity(n));
    let jminv = blocks.dense_structure().matmul(&minv);
    let g = blocks.dense_input();
    let dim = s * (n + m);
    let mut e = Matrix::zeros(dim, dim);
    e.set_block(0, 0, &jminv);
    e.set_block(0, s * n, &g);
    e.set_block(s * n, 0, &g.transpose().scale(-1.0));
    Ok(e)
}

pub fn kernel_check(blocks: &BlockStructure) -> Result<KernelCheck> {
    let e = kernel_matrix(blocks)?;
    let dim = e.rows();
    let skew_defect = e.skew_defect();
    let mut fe = Matrix::zeros(dim, 2 * dim);
    fe.set_block(0, 0, &Matrix::identity(dim));
    fe.set_block(0, dim, &e);
    let rank_ok = rank(&fe, RANK_THRESHOLD) == dim;
    Ok(KernelCheck { skew_defect, rank_ok })
}

/// `(M ⊗ I) blockdiag(J_i)`; skew exactly when the structure is Dirac.
pub fn mass_structure_product(blocks: &BlockStructure) -> Matrix {
    blocks.dense_mass().matmul(&blocks.dense_structure())
}

/// Which sufficient condition makes the interval structure Dirac.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiracCondition {
    /// Orthogonal Lagrange basis.
    C1,
    /// Constant interconnection.
    C2,
    Both,
    Neither,
}

impl DiracCondition {
    pub fn classify(scheme: &CollocationScheme, model: &dyn PhModel) -> Self {
        match (scheme.satisfies_c1(), model.constant_structure()) {
            (true, true) => DiracCondition::Both,
            (true, false) => DiracCondition::C1,
            (false, true) => DiracCondition::C2,
            (false, false) => DiracCondition::Neither,
        }
    }

    pub fn holds(self) -> bool {
        self != DiracCondition::Neither
    }

    pub fn label(self) -> &'static str {
        match self {
            DiracCondition::C1 => "C1",
            DiracCondition::C2 => "C2",
            DiracCondition::Both => "C1+C2",
            DiracCondition::Neither => "none",
        }
    }
}
