//! Modified nodal analysis of the surrounding circuit and its index-1 decoupling.
//!
//! With `x = (u, i_L, i_V)` the network reads `E x' = A x + F + s(t)`. The
//! projector `Q = diag(Q_CS, 0, I)` singles out the algebraic part, `P = I - Q`
//! the differential part `y = P x`, and with `E_1 = E - A Q`, `A_1 = A P`:
//!
//! ```text
//! y' = P E_1^{-1} (A_1 y + F + s),    z = Q E_1^{-1} (A_1 y + s).
//! ```
//!
//! Node 0 is ground. Incidence columns carry `+1` at the first node of an
//! element and `-1` at the second; ground rows are dropped.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, null_space, RANK_TOL};
use crate::waveform::Waveform;

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor(f64),
    Capacitor(f64),
    Inductor(f64),
    VoltageSource(Waveform),
    CurrentSource(Waveform),
    /// The drift-diffusion device; `device` points at its configuration.
    Memristor { device: String },
}

impl ElementKind {
    pub fn letter(&self) -> char {
        match self {
            ElementKind::Resistor(_) => 'R',
            ElementKind::Capacitor(_) => 'C',
            ElementKind::Inductor(_) => 'L',
            ElementKind::VoltageSource(_) => 'V',
            ElementKind::CurrentSource(_) => 'I',
            ElementKind::Memristor { .. } => 'M',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub pos: usize,
    pub neg: usize,
    pub kind: ElementKind,
}

/// Initial value of one network unknown; unspecified unknowns start at zero.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    NodePotential { node: usize, value: f64 },
    /// Current through a named inductor or voltage source.
    BranchCurrent { name: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Netlist {
    pub elements: Vec<Element>,
    pub initial: Vec<InitialCondition>,
}

impl Netlist {
    pub fn memristor(&self) -> Option<&Element> {
        self.elements.iter().find(|e| matches!(e.kind, ElementKind::Memristor { .. }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnaStructure {
    pub m: usize,
    pub a_c: DMatrix<f64>,
    pub a_r: DMatrix<f64>,
    pub a_l: DMatrix<f64>,
    pub a_v: DMatrix<f64>,
    pub a_i: DMatrix<f64>,
    /// Terminal selection, `m x 2`.
    pub s: DMatrix<f64>,
    pub capacitance: DVector<f64>,
    pub inductance: DVector<f64>,
    /// Conductances `1 / R`.
    pub conductance: DVector<f64>,
    pub inductor_names: Vec<String>,
    pub vsource_names: Vec<String>,
    pub vsources: Vec<Waveform>,
    pub isources: Vec<Waveform>,
}

fn incidence(m: usize, branches: &[(usize, usize)]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, branches.len());
    for (k, &(pos, neg)) in branches.iter().enumerate() {
        if pos > 0 {
            a[(pos - 1, k)] += 1.0;
        }
        if neg > 0 {
            a[(neg - 1, k)] -= 1.0;
        }
    }
    a
}

pub fn build_structure(netlist: &Netlist) -> Result<MnaStructure> {
    let bad = |msg: String| Err(Error::InvalidNetlist(msg));
    let mut names: Vec<&str> = Vec::new();
    let mut memristors = 0;
    let mut m = 0;
    for e in &netlist.elements {
        if names.contains(&e.name.as_str()) {
            return bad(format!("duplicate element name '{}'", e.name));
        }
        names.push(&e.name);
        if e.pos == e.neg {
            return bad(format!("element '{}' connects node {} to itself", e.name, e.pos));
        }
        m = m.max(e.pos).max(e.neg);
        match &e.kind {
            ElementKind::Resistor(v) | ElementKind::Capacitor(v) | ElementKind::Inductor(v) => {
                if !(*v > 0.0 && v.is_finite()) {
                    return bad(format!("element '{}' needs a positive value, got {v}", e.name));
                }
            }
            ElementKind::Memristor { .. } => memristors += 1,
            _ => {}
        }
    }
    if memristors != 1 {
        return bad(format!("expected exactly one memristor, found {memristors}"));
    }
    let mut degree = vec![0usize; m + 1];
    for e in &netlist.elements {
        degree[e.pos] += 1;
        degree[e.neg] += 1;
    }
    for (node, &deg) in degree.iter().enumerate().skip(1) {
        if deg == 0 {
            return bad(format!("node {node} is not used (nodes must be numbered 1..={m})"));
        }
        if deg == 1 {
            return bad(format!("node {node} is dangling (only one element attached)"));
        }
    }

    let pick = |f: fn(&ElementKind) -> bool| -> Vec<&Element> { netlist.elements.iter().filter(|e| f(&e.kind)).collect() };
    let nodes = |els: &[&Element]| -> Vec<(usize, usize)> { els.iter().map(|e| (e.pos, e.neg)).collect() };
    let values = |els: &[&Element]| -> DVector<f64> {
        DVector::from_iterator(
            els.len(),
            els.iter().map(|e| match e.kind {
                ElementKind::Resistor(r) => 1.0 / r,
                ElementKind::Capacitor(v) | ElementKind::Inductor(v) => v,
                _ => 0.0,
            }),
        )
    };
    let waves = |els: &[&Element]| -> Vec<Waveform> {
        els.iter()
            .map(|e| match e.kind {
                ElementKind::VoltageSource(w) | ElementKind::CurrentSource(w) => w,
                _ => Waveform::default(),
            })
            .collect()
    };

    let caps = pick(|k| matches!(k, ElementKind::Capacitor(_)));
    let res = pick(|k| matches!(k, ElementKind::Resistor(_)));
    let inds = pick(|k| matches!(k, ElementKind::Inductor(_)));
    let vs = pick(|k| matches!(k, ElementKind::VoltageSource(_)));
    let is = pick(|k| matches!(k, ElementKind::CurrentSource(_)));
    let mem = netlist.memristor().expect("checked above");

    let mut s = DMatrix::zeros(m, 2);
    for (j, node) in [mem.pos, mem.neg].into_iter().enumerate() {
        if node > 0 {
            s[(node - 1, j)] = 1.0;
        }
    }

    Ok(MnaStructure {
        m,
        a_c: incidence(m, &nodes(&caps)),
        a_r: incidence(m, &nodes(&res)),
        a_l: incidence(m, &nodes(&inds)),
        a_v: incidence(m, &nodes(&vs)),
        a_i: incidence(m, &nodes(&is)),
        s,
        capacitance: values(&caps),
        inductance: values(&inds),
        conductance: values(&res),
        inductor_names: inds.iter().map(|e| e.name.clone()).collect(),
        vsource_names: vs.iter().map(|e| e.name.clone()).collect(),
        vsources: waves(&vs),
        isources: waves(&is),
    })
}

impl MnaStructure {
    pub fn n_l(&self) -> usize {
        self.a_l.ncols()
    }

    pub fn n_v(&self) -> usize {
        self.a_v.ncols()
    }

    /// Size of `x = (u, i_L, i_V)`.
    pub fn dim(&self) -> usize {
        self.m + self.n_l() + self.n_v()
    }

    /// Projection `pi x = u` as an `m x n` matrix.
    pub fn pi(&self) -> DMatrix<f64> {
        let mut pi = DMatrix::zeros(self.m, self.dim());
        pi.view_mut((0, 0), (self.m, self.m)).fill_with_identity();
        pi
    }

    fn hcat(blocks: &[&DMatrix<f64>], rows: usize) -> DMatrix<f64> {
        let cols = blocks.iter().map(|b| b.ncols()).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut at = 0;
        for b in blocks {
            out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
            at += b.ncols();
        }
        out
    }

    /// Orthogonal projector onto `ker (A_C, S)^T`.
    pub fn q_cs(&self) -> DMatrix<f64> {
        linalg::kernel_projector(&Self::hcat(&[&self.a_c, &self.s], self.m).transpose())
    }

    /// Index of the unknown `x_k` holding the current of the named inductor or source.
    pub fn branch_index(&self, name: &str) -> Option<usize> {
        if let Some(k) = self.inductor_names.iter().position(|n| n == name) {
            return Some(self.m + k);
        }
        self.vsource_names
            .iter()
            .position(|n| n == name)
            .map(|k| self.m + self.n_l() + k)
    }
}

/// Outcome of the topological index-1 tests. Failed tests carry a kernel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyReport {
    /// `ker (S, A_C, A_R, A_V)^T = {0}`.
    pub no_li_cutset: bool,
    pub li_cutset_witness: Option<DVector<f64>>,
    /// `ker Q_CS^T A_V = {0}`.
    pub no_cv_loop: bool,
    pub cv_loop_witness: Option<DVector<f64>>,
    /// Every potential vector without capacitor or device energy satisfies
    /// `S^T u = 0`, i.e. `ker (A_C C A_C^T + S M S^T) = ker (A_C, S)^T` for the
    /// rank-one device matrix `M`. Fails when both terminals float and no
    /// capacitor fixes their common potential.
    pub terminal_common_mode_fixed: bool,
    pub common_mode_witness: Option<DVector<f64>>,
}

impl TopologyReport {
    pub fn is_index1(&self) -> bool {
        self.no_li_cutset && self.no_cv_loop && self.terminal_common_mode_fixed
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.no_li_cutset {
            out.push("LI-cutset: ker(S, A_C, A_R, A_V)^T is nontrivial");
        }
        if !self.no_cv_loop {
            out.push("CV-loop: ker(Q_CS^T A_V) is nontrivial");
        }
        if !self.terminal_common_mode_fixed {
            out.push("floating terminals: common terminal potential has no capacitive path");
        }
        out
    }
}

fn first_column(n: &DMatrix<f64>) -> Option<DVector<f64>> {
    (n.ncols() > 0).then(|| n.column(0).into_owned())
}

pub fn check_index1(st: &MnaStructure) -> TopologyReport {
    let cut = null_space(&MnaStructure::hcat(&[&st.s, &st.a_c, &st.a_r, &st.a_v], st.m).transpose());
    let q_cs = st.q_cs();
    let cv = null_space(&(q_cs.transpose() * &st.a_v));

    let diff = &st.s * DVector::from_vec(vec![1.0, -1.0]);
    let diff = DMatrix::from_column_slice(st.m, 1, diff.as_slice());
    let free = null_space(&MnaStructure::hcat(&[&st.a_c, &diff], st.m).transpose());
    let mut common_mode_witness = None;
    if free.ncols() > 0 {
        let seen = st.s.transpose() * &free;
        let (best, size) = (0..free.ncols())
            .map(|j| (j, seen.column(j).norm()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if size > RANK_TOL {
            common_mode_witness = Some(free.column(best).into_owned());
        }
    }

    TopologyReport {
        no_li_cutset: cut.ncols() == 0,
        li_cutset_witness: first_column(&cut),
        no_cv_loop: cv.ncols() == 0,
        cv_loop_witness: first_column(&cv),
        terminal_common_mode_fixed: common_mode_witness.is_none(),
        common_mode_witness,
    }
}

fn block_diag3(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows() + b.nrows() + c.nrows();
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.nrows()), b.shape()).copy_from(b);
    let off = a.nrows() + b.nrows();
    out.view_mut((off, off), c.shape()).copy_from(c);
    out
}

fn m_matrix(m: [[f64; 2]; 2]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
}

/// `E = diag(A_C C A_C^T + S M S^T, L, 0)` and the MNA matrix `A`.
pub fn assemble_ea(st: &MnaStructure, m: [[f64; 2]; 2]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if st.s.shape() != (st.m, 2) {
        return Err(Error::InvalidNetlist(format!("selection matrix has shape {:?}", st.s.shape())));
    }
    let (nl, nv, mm) = (st.n_l(), st.n_v(), st.m);
    let cap = &st.a_c * DMatrix::from_diagonal(&st.capacitance) * st.a_c.transpose();
    let dev = &st.s * m_matrix(m) * st.s.transpose();
    let e = block_diag3(&(cap + dev), &DMatrix::from_diagonal(&st.inductance), &DMatrix::zeros(nv, nv));

    let n = st.dim();
    let mut a = DMatrix::zeros(n, n);
    let res = &st.a_r * DMatrix::from_diagonal(&st.conductance) * st.a_r.transpose();
    a.view_mut((0, 0), (mm, mm)).copy_from(&(-res));
    a.view_mut((0, mm), (mm, nl)).copy_from(&(-&st.a_l));
    a.view_mut((0, mm + nl), (mm, nv)).copy_from(&(-&st.a_v));
    a.view_mut((mm, 0), (nl, mm)).copy_from(&st.a_l.transpose());
    a.view_mut((mm + nl, 0), (nv, mm)).copy_from(&st.a_v.transpose());
    Ok((e, a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projectors {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_cs: DMatrix<f64>,
}

pub fn build_projectors(st: &MnaStructure) -> Projectors {
    let q_cs = st.q_cs();
    let q = block_diag3(&q_cs, &DMatrix::zeros(st.n_l(), st.n_l()), &DMatrix::identity(st.n_v(), st.n_v()));
    let p = DMatrix::identity(st.dim(), st.dim()) - &q;
    Projectors { p, q, q_cs }
}

/// `s(t) = (A_I i_I(t), 0, v_V(t))`.
pub fn source_vector(t: f64, st: &MnaStructure) -> DVector<f64> {
    let mut s = DVector::zeros(st.dim());
    if !st.isources.is_empty() {
        let i = DVector::from_iterator(st.isources.len(), st.isources.iter().map(|w| w.value(t)));
        s.rows_mut(0, st.m).copy_from(&(&st.a_i * i));
    }
    let off = st.m + st.n_l();
    for (k, w) in st.vsources.iter().enumerate() {
        s[off + k] = w.value(t);
    }
    s
}

#[derive(Debug, Clone)]
pub struct DecoupledSystem {
    pub structure: MnaStructure,
    pub m: [[f64; 2]; 2],
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_cs: DMatrix<f64>,
    pub e1: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    e1_inv: DMatrix<f64>,
    pub e1_condition: f64,
}

/// Builds `E_1 = E - A Q` and `A_1 = A P` and inverts `E_1`.
pub fn build_decoupled(st: &MnaStructure, e: DMatrix<f64>, a: DMatrix<f64>, proj: Projectors) -> Result<DecoupledSystem> {
    let e1 = &e - &a * &proj.q;
    let a1 = &a * &proj.p;
    let cond = linalg::condition_number(&e1);
    let inverse = if cond.is_finite() { e1.clone().try_inverse() } else { None };
    let Some(e1_inv) = inverse else {
        let report = check_index1(st);
        let why = if report.is_index1() {
            "topology checks passed".to_string()
        } else {
            report.failures().join("; ")
        };
        return Err(Error::SingularE1(why));
    };
    Ok(DecoupledSystem {
        structure: st.clone(),
        m: [[0.0; 2]; 2],
        e,
        a,
        p: proj.p,
        q: proj.q,
        q_cs: proj.q_cs,
        e1,
        a1,
        e1_inv,
        e1_condition: cond,
    })
}

impl DecoupledSystem {
    /// Assembles `E`, `A` and the projectors for device matrix `m` and decouples.
    pub fn new(st: &MnaStructure, m: [[f64; 2]; 2]) -> Result<Self> {
        let (e, a) = assemble_ea(st, m)?;
        let mut sys = build_decoupled(st, e, a, build_projectors(st))?;
        sys.m = m;
        Ok(sys)
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    pub fn e1_inverse(&self) -> &DMatrix<f64> {
        &self.e1_inv
    }

    /// `u_D = S^T pi x`.
    pub fn terminal_voltages(&self, x: &DVector<f64>) -> [f64; 2] {
        let st = &self.structure;
        let u = x.rows(0, st.m);
        let ud = st.s.transpose() * u;
        [ud[0], ud[1]]
    }

    /// `P E_1^{-1} (A_1 y + F + s)`.
    pub fn y_rate(&self, y: &DVector<f64>, f: &DVector<f64>, s: &DVector<f64>) -> DVector<f64> {
        &self.p * (&self.e1_inv * (&self.a1 * y + f + s))
    }

    /// `E_1 - pi^T S M S^T pi`, the matrix of the network energy.
    pub fn energy_matrix(&self) -> DMatrix<f64> {
        let st = &self.structure;
        let sp = st.s.transpose() * st.pi();
        &self.e1 - sp.transpose() * m_matrix(self.m) * sp
    }

    /// Orthonormal basis of `range P`.
    pub fn range_p_basis(&self) -> DMatrix<f64> {
        null_space(&self.q)
    }

    /// Smallest `c` with `y^T B y >= c |y|^2` on `range P`, for the symmetric part of `B`.
    pub fn definiteness_on_range_p(&self, b: &DMatrix<f64>) -> f64 {
        let basis = self.range_p_basis();
        if basis.ncols() == 0 {
            return f64::INFINITY;
        }
        let sym = (b + b.transpose()) * 0.5;
        let r = basis.transpose() * sym * &basis;
        r.symmetric_eigenvalues().iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// `|Q x0 - Q E_1^{-1}(A_1 P x0 + s0)|_inf`.
    pub residual: f64,
    pub consistent: bool,
    /// `P x0 + Q E_1^{-1}(A_1 P x0 + s0)`.
    pub repaired: DVector<f64>,
}

pub fn check_consistency(x0: &DVector<f64>, s0: &DVector<f64>, sys: &DecoupledSystem, tol: f64) -> ConsistencyReport {
    let y0 = &sys.p * x0;
    let z = recover_z(&y0, s0, sys);
    let residual = linalg::max_norm_vec(&(&sys.q * x0 - &z));
    ConsistencyReport {
        residual,
        consistent: residual <= tol,
        repaired: y0 + z,
    }
}

/// Backward Euler in `A_1 y` with `F` and `s` frozen at the new time level,
/// followed by a projection back onto `range P`.
pub fn advance_y(
    y: &DVector<f64>,
    f: &DVector<f64>,
    s_next: &DVector<f64>,
    dt: f64,
    sys: &DecoupledSystem,
) -> Result<DVector<f64>> {
    let n = sys.dim();
    let pe = &sys.p * &sys.e1_inv;
    let step = DMatrix::identity(n, n) - (&pe * &sys.a1) * dt;
    let rhs = y + (&pe * (f + s_next)) * dt;
    let next = step.lu().solve(&rhs).ok_or(Error::SingularStep(dt))?;
    Ok(&sys.p * next)
}

/// Algebraic component `z = Q E_1^{-1}(A_1 y + s)`.
pub fn recover_z(y: &DVector<f64>, s: &DVector<f64>, sys: &DecoupledSystem) -> DVector<f64> {
    &sys.q * (&sys.e1_inv * (&sys.a1 * y + s))
}

/// Network unknowns split by block.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

impl NetworkState {
    pub fn x(&self) -> DVector<f64> {
        &self.y + &self.z
    }

    pub fn u(&self, st: &MnaStructure) -> DVector<f64> {
        self.x().rows(0, st.m).into_owned()
    }

    pub fn i_l(&self, st: &MnaStructure) -> DVector<f64> {
        self.x().rows(st.m, st.n_l()).into_owned()
    }

    pub fn i_v(&self, st: &MnaStructure) -> DVector<f64> {
        self.x().rows(st.m + st.n_l(), st.n_v()).into_owned()
    }
}

/// Initial vector `x0` from the netlist's initial conditions (zero elsewhere).
pub fn initial_vector(netlist: &Netlist, st: &MnaStructure) -> Result<DVector<f64>> {
    let mut x0 = DVector::zeros(st.dim());
    for ic in &netlist.initial {
        match ic {
            InitialCondition::NodePotential { node, value } => {
                if *node == 0 || *node > st.m {
                    return Err(Error::InvalidNetlist(format!("initial condition for unknown node {node}")));
                }
                x0[node - 1] = *value;
            }
            InitialCondition::BranchCurrent { name, value } => {
                let k = st
                    .branch_index(name)
                    .ok_or_else(|| Error::InvalidNetlist(format!("no inductor or voltage source named '{name}'")))?;
                x0[k] = *value;
            }
        }
    }
    Ok(x0)
}
