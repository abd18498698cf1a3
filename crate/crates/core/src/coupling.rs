//! Device/circuit coupling: terminal currents into the network and the
//! boundary potential fed back to the device.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::{BoundaryTag, Mesh};
use crate::math;
use crate::network::MnaStructure;
use crate::poisson::{green_apply, EllipticOperator, PotentialDecomposition};
use crate::waveform::Waveform;
use crate::FaceField;

/// `M_jk = lambda^2 (grad w_j, grad w_k)` by face quadrature, symmetrized.
pub fn compute_m(mesh: &Mesh, grad_w: &[FaceField; 2], lambda2: f64) -> [[f64; 2]; 2] {
    let mut m = [[0.0; 2]; 2];
    for (j, row) in m.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = lambda2 * mesh.face_inner(&grad_w[j], &grad_w[k]);
        }
    }
    let off = 0.5 * (m[0][1] + m[1][0]);
    m[0][1] = off;
    m[1][0] = off;
    m
}

/// Harmonic weights, their gradients and `M` for one device geometry.
#[derive(Debug, Clone)]
pub struct CouplingOperators {
    pub poisson: EllipticOperator,
    pub w: [Vec<f64>; 2],
    pub grad_w: [FaceField; 2],
    pub m: [[f64; 2]; 2],
}

impl CouplingOperators {
    pub fn new(poisson: EllipticOperator) -> Result<Self> {
        let w = [poisson.harmonic_weight(0)?, poisson.harmonic_weight(1)?];
        let grad_w = [
            poisson.face_gradient(&w[0], &poisson.indicator(BoundaryTag::D1, 1.0)),
            poisson.face_gradient(&w[1], &poisson.indicator(BoundaryTag::D2, 1.0)),
        ];
        let m = compute_m(poisson.mesh(), &grad_w, poisson.lambda2());
        Ok(Self { poisson, w, grad_w, m })
    }

    pub fn from_decomposition(poisson: EllipticOperator, d: &PotentialDecomposition) -> Self {
        Self {
            poisson,
            w: d.w.clone(),
            grad_w: d.grad_w.clone(),
            m: d.m,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        self.poisson.mesh()
    }

    pub fn lambda2(&self) -> f64 {
        self.poisson.lambda2()
    }

    /// `lambda^2 |grad w_1|^2 [[1, -1], [-1, 1]]`.
    pub fn m_closed_form(&self) -> [[f64; 2]; 2] {
        let a = self.lambda2() * self.mesh().face_inner(&self.grad_w[0], &self.grad_w[0]);
        [[a, -a], [-a, a]]
    }
}

/// `I_j = -(grad w_j, J - lambda^2 grad L[div J])`.
pub fn script_i(j_total: &[f64], ops: &CouplingOperators) -> Result<[f64; 2]> {
    let mesh = ops.mesh();
    let div = mesh.divergence(j_total)?;
    let (_, grad_f) = green_apply(&ops.poisson, &div)?;
    let l2 = ops.lambda2();
    let corrected: Vec<f64> = j_total.iter().zip(&grad_f).map(|(j, g)| j - l2 * g).collect();
    Ok([
        -mesh.face_inner(&ops.grad_w[0], &corrected),
        -mesh.face_inner(&ops.grad_w[1], &corrected),
    ])
}

/// `I_D = M du_D/dt + I`.
pub fn terminal_currents(script_i: [f64; 2], m: [[f64; 2]; 2], dudt_d: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * dudt_d[0] + m[0][1] * dudt_d[1] + script_i[0],
        m[1][0] * dudt_d[0] + m[1][1] * dudt_d[1] + script_i[1],
    ]
}

/// `F = -pi^T S I`, nonzero only in the node-potential block.
pub fn compute_f(script_i: [f64; 2], st: &MnaStructure) -> DVector<f64> {
    let mut f = DVector::zeros(st.dim());
    for r in 0..st.m {
        f[r] = -(st.s[(r, 0)] * script_i[0] + st.s[(r, 1)] * script_i[1]);
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltInPotential {
    pub cells: Vec<f64>,
    /// Value of the adjacent cell on every boundary face.
    pub trace: FaceField,
    pub n_i: f64,
}

impl BuiltInPotential {
    /// `V_bi = asinh(A / (2 n_i))` cellwise.
    pub fn from_doping(mesh: &Mesh, doping: &[f64], n_i: f64) -> Result<Self> {
        if !(n_i > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("intrinsic density must be positive, got {n_i}")));
        }
        mesh.check_cells(doping)?;
        let cells: Vec<f64> = doping.iter().map(|a| math::asinh(a / (2.0 * n_i))).collect();
        let trace = mesh.boundary_trace(&cells)?;
        Ok(Self { cells, trace, n_i })
    }

    /// Equilibrium densities `n_i e^{V}` and `n_i e^{-V}` for a boundary potential.
    pub fn equilibrium_densities(&self, vbar: &[f64]) -> (FaceField, FaceField) {
        let n = vbar.iter().map(|v| self.n_i * math::exp(*v)).collect();
        let p = vbar.iter().map(|v| self.n_i * math::exp(-*v)).collect();
        (n, p)
    }
}

/// `Vbar = V_bi + u_D^j` on the faces of terminal `j`, zero elsewhere.
pub fn boundary_potential(mesh: &Mesh, vbi: &BuiltInPotential, u_d: [f64; 2]) -> FaceField {
    mesh.faces
        .iter()
        .zip(&vbi.trace)
        .map(|(f, t)| match f.tag.and_then(BoundaryTag::terminal) {
            Some(j) => t + u_d[j],
            None => 0.0,
        })
        .collect()
}

/// `u_D = S^T pi y`.
pub fn terminal_voltages(y: &DVector<f64>, st: &MnaStructure) -> [f64; 2] {
    let mut u = [0.0; 2];
    for r in 0..st.m {
        u[0] += st.s[(r, 0)] * y[r];
        u[1] += st.s[(r, 1)] * y[r];
    }
    u
}

/// Open-loop terminal drive: terminal 1 follows `waveform`, terminal 2 is grounded.
/// Returns `u_D(t)` and its exact time derivative.
pub fn drive_mode(waveform: &Waveform, t: f64) -> ([f64; 2], [f64; 2]) {
    ([waveform.value(t), 0.0], [waveform.derivative(t), 0.0])
}

/// Harmonic lift `V_bi + w_1 u_D^1 + w_2 u_D^2` of the boundary potential.
pub fn extended_boundary_potential(vbi: &BuiltInPotential, ops: &CouplingOperators, u_d: [f64; 2]) -> Vec<f64> {
    let mut v = vbi.cells.clone();
    for (c, x) in v.iter_mut().enumerate() {
        *x += ops.w[0][c] * u_d[0] + ops.w[1][c] * u_d[1];
    }
    v
}

/// Zero face field, handy for homogeneous boundary data.
pub fn zero_faces(mesh: &Mesh) -> FaceField {
    vec![0.0; mesh.n_faces()]
}
