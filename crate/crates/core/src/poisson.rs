//! Mixed Dirichlet/Neumann elliptic problems `lambda^2 Laplace(u) = g`.
//!
//! One five-point finite-volume matrix serves the Poisson equation, the
//! stationary potential, the harmonic weights and the Green operator, so the
//! superposition `V = V_A + w_1 u_D^1 + w_2 u_D^2 + L[n - p - D]` holds to
//! solver precision.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{BoundaryTag, Mesh};
use crate::linalg::{self, BandedLu, CsrMatrix};
use crate::FaceField;

/// Above this many band entries the operator falls back to conjugate gradients.
const DIRECT_BAND_LIMIT: usize = 1 << 25;
const CG_REL_TOL: f64 = 1e-12;

pub const TERMINALS: [BoundaryTag; 2] = [BoundaryTag::D1, BoundaryTag::D2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverChoice {
    /// Banded LU when it fits in memory, conjugate gradients otherwise.
    Auto,
    Direct,
    ConjugateGradient { rel_tol: f64, max_iter: usize },
}

#[derive(Debug, Clone)]
enum Solver {
    Direct(Arc<BandedLu>),
    Iterative { rel_tol: f64, max_iter: usize },
}

#[derive(Debug, Clone)]
pub struct EllipticOperator {
    mesh: Arc<Mesh>,
    lambda2: f64,
    dirichlet: Vec<BoundaryTag>,
    // sum_f T_f (u_c - u_nb) plus T_f u_c on Dirichlet faces; symmetric positive definite
    matrix: Arc<CsrMatrix>,
    solver: Solver,
}

pub fn assemble_operator(mesh: Arc<Mesh>, lambda2: f64, dirichlet_tags: &[BoundaryTag]) -> Result<EllipticOperator> {
    EllipticOperator::assemble(mesh, lambda2, dirichlet_tags, SolverChoice::Auto)
}

impl EllipticOperator {
    pub fn assemble(
        mesh: Arc<Mesh>,
        lambda2: f64,
        dirichlet_tags: &[BoundaryTag],
        choice: SolverChoice,
    ) -> Result<Self> {
        if !(lambda2 > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("lambda^2 must be positive, got {lambda2}")));
        }
        // insulating faces never carry Dirichlet data
        let dirichlet: Vec<BoundaryTag> = dirichlet_tags.iter().copied().filter(|t| t.terminal().is_some()).collect();
        if !mesh.faces.iter().any(|f| f.tag.is_some_and(|t| dirichlet.contains(&t))) {
            return Err(Error::SingularOperator);
        }
        let n = mesh.n_cells();
        let mut triplets = Vec::with_capacity(5 * n);
        for f in &mesh.faces {
            let t = f.transmissibility();
            match (f.neighbor, f.tag) {
                (Some(nb), _) => {
                    triplets.push((f.owner, f.owner, t));
                    triplets.push((nb, nb, t));
                    triplets.push((f.owner, nb, -t));
                    triplets.push((nb, f.owner, -t));
                }
                (None, Some(tag)) if dirichlet.contains(&tag) => triplets.push((f.owner, f.owner, t)),
                _ => {}
            }
        }
        let matrix = CsrMatrix::from_triplets(n, triplets);
        let band = {
            let (lo, up) = matrix.bandwidth();
            n * (lo + up + 1)
        };
        let solver = match choice {
            SolverChoice::Direct => Solver::Direct(Arc::new(BandedLu::factor(&matrix)?)),
            SolverChoice::Auto if band <= DIRECT_BAND_LIMIT => Solver::Direct(Arc::new(BandedLu::factor(&matrix)?)),
            SolverChoice::Auto => Solver::Iterative {
                rel_tol: CG_REL_TOL,
                max_iter: 20 * n,
            },
            SolverChoice::ConjugateGradient { rel_tol, max_iter } => Solver::Iterative { rel_tol, max_iter },
        };
        Ok(Self {
            mesh,
            lambda2,
            dirichlet,
            matrix: Arc::new(matrix),
            solver,
        })
    }

    /// Same operator and factorization with a different scale.
    pub fn with_lambda2(&self, lambda2: f64) -> Self {
        Self {
            lambda2,
            ..self.clone()
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn dirichlet_tags(&self) -> &[BoundaryTag] {
        &self.dirichlet
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.solver, Solver::Direct(_))
    }

    fn is_dirichlet(&self, tag: Option<BoundaryTag>) -> bool {
        tag.is_some_and(|t| self.dirichlet.contains(&t))
    }

    fn rhs(&self, g: &[f64], boundary: &[f64]) -> Result<Vec<f64>> {
        self.mesh.check_cells(g)?;
        self.mesh.check_faces(boundary)?;
        let scale = -self.mesh.cell_area() / self.lambda2;
        let mut b: Vec<f64> = g.iter().map(|v| scale * v).collect();
        for (k, f) in self.mesh.faces.iter().enumerate() {
            if f.is_boundary() && self.is_dirichlet(f.tag) {
                b[f.owner] += f.transmissibility() * boundary[k];
            }
        }
        Ok(b)
    }

    /// Solves `lambda^2 Laplace(u) = g` with `u = boundary` on the Dirichlet
    /// faces and zero normal derivative on the others.
    pub fn solve(&self, g: &[f64], boundary: &[f64]) -> Result<Vec<f64>> {
        let b = self.rhs(g, boundary)?;
        match &self.solver {
            Solver::Direct(lu) => Ok(lu.solve(&b)),
            Solver::Iterative { rel_tol, max_iter } => linalg::conjugate_gradient(&self.matrix, &b, *rel_tol, *max_iter),
        }
    }

    /// Solves the screened problem `lambda^2 Laplace(u) - sigma u = g` with the
    /// same boundary conditions; `sigma >= 0` cellwise.
    pub fn solve_screened(&self, sigma: &[f64], g: &[f64], boundary: &[f64]) -> Result<Vec<f64>> {
        self.mesh.check_cells(sigma)?;
        let b = self.rhs(g, boundary)?;
        let scale = self.mesh.cell_area() / self.lambda2;
        let shift: Vec<f64> = sigma.iter().map(|s| scale * s).collect();
        let matrix = self.matrix.with_added_diagonal(&shift);
        match &self.solver {
            Solver::Direct(_) => Ok(BandedLu::factor(&matrix)?.solve(&b)),
            Solver::Iterative { rel_tol, max_iter } => linalg::conjugate_gradient(&matrix, &b, *rel_tol, *max_iter),
        }
    }

    /// Max-norm of the discrete equation residual, relative to the right-hand side.
    pub fn residual(&self, u: &[f64], g: &[f64], boundary: &[f64]) -> Result<f64> {
        let b = self.rhs(g, boundary)?;
        let mut ku = vec![0.0; u.len()];
        self.matrix.matvec(u, &mut ku);
        let r = ku.iter().zip(&b).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Ok(r / linalg::max_abs(&b).max(f64::MIN_POSITIVE))
    }

    pub fn face_gradient(&self, u: &[f64], boundary: &[f64]) -> Vec<f64> {
        self.mesh.face_gradient(u, boundary, &self.dirichlet)
    }

    /// Face field equal to `value` on every face tagged `tag`.
    pub fn indicator(&self, tag: BoundaryTag, value: f64) -> FaceField {
        self.mesh
            .faces
            .iter()
            .map(|f| if f.tag == Some(tag) { value } else { 0.0 })
            .collect()
    }

    /// Harmonic weight of terminal `j` (0-based): 1 on that terminal, 0 on the
    /// other one, insulated elsewhere.
    pub fn harmonic_weight(&self, j: usize) -> Result<Vec<f64>> {
        let tag = *TERMINALS
            .get(j)
            .ok_or_else(|| Error::InvalidParameter(alloc::format!("terminal index {j} out of range")))?;
        if !(self.dirichlet.contains(&BoundaryTag::D1) && self.dirichlet.contains(&BoundaryTag::D2)) {
            return Err(Error::InvalidParameter("harmonic weights need Dirichlet data on both terminals".into()));
        }
        self.solve(&vec![0.0; self.mesh.n_cells()], &self.indicator(tag, 1.0))
    }
}

pub fn solve_poisson(
    op: &EllipticOperator,
    n: &[f64],
    p: &[f64],
    d: &[f64],
    doping: &[f64],
    vbar: &[f64],
) -> Result<Vec<f64>> {
    let mesh = op.mesh();
    for f in [n, p, d, doping] {
        mesh.check_cells(f)?;
    }
    let g: Vec<f64> = (0..mesh.n_cells()).map(|c| n[c] - p[c] - d[c] + doping[c]).collect();
    op.solve(&g, vbar)
}

/// Stationary potential: `lambda^2 Laplace(V_A) = A`, `V_A = V_bi` on the terminals.
pub fn solve_stationary(op: &EllipticOperator, doping: &[f64], vbi_trace: &[f64]) -> Result<Vec<f64>> {
    op.solve(doping, vbi_trace)
}

pub fn solve_harmonic_weight(mesh: Arc<Mesh>, j: usize) -> Result<Vec<f64>> {
    assemble_operator(mesh, 1.0, &TERMINALS)?.harmonic_weight(j)
}

/// Green operator `f = L[g]`: `lambda^2 Laplace(f) = g`, `f = 0` on the
/// Dirichlet faces. Returns `f` and its face gradient.
pub fn green_apply(op: &EllipticOperator, g: &[f64]) -> Result<(Vec<f64>, FaceField)> {
    let zero = vec![0.0; op.mesh().n_faces()];
    let f = op.solve(g, &zero)?;
    let grad = op.face_gradient(&f, &zero);
    Ok((f, grad))
}

#[derive(Debug, Clone)]
pub struct PotentialDecomposition {
    pub v_a: Vec<f64>,
    pub w: [Vec<f64>; 2],
    pub grad_w: [FaceField; 2],
    pub m: [[f64; 2]; 2],
}

impl PotentialDecomposition {
    pub fn new(op: &EllipticOperator, doping: &[f64], vbi_trace: &[f64]) -> Result<Self> {
        let v_a = solve_stationary(op, doping, vbi_trace)?;
        let w = [op.harmonic_weight(0)?, op.harmonic_weight(1)?];
        let grad_w = [
            op.face_gradient(&w[0], &op.indicator(BoundaryTag::D1, 1.0)),
            op.face_gradient(&w[1], &op.indicator(BoundaryTag::D2, 1.0)),
        ];
        let m = crate::coupling::compute_m(op.mesh(), &grad_w, op.lambda2());
        Ok(Self { v_a, w, grad_w, m })
    }
}

/// `V = V_A + w_1 u_D^1 + w_2 u_D^2 + correction`, with `correction = L[n - p - D]`.
pub fn superpose_potential(decomp: &PotentialDecomposition, u_d: [f64; 2], correction: &[f64]) -> Result<Vec<f64>> {
    let n = decomp.v_a.len();
    if correction.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: correction.len(),
        });
    }
    Ok((0..n)
        .map(|c| decomp.v_a[c] + decomp.w[0][c] * u_d[0] + decomp.w[1][c] * u_d[1] + correction[c])
        .collect())
}
