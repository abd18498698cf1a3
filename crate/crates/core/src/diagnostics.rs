//! Free energy, dissipation, positivity bounds and conservation checks.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::Mesh;
use crate::math;
use crate::network::DecoupledSystem;
use crate::poisson::EllipticOperator;
use crate::transport::{DeviceState, FaceCurrents, Species};
use crate::FaceField;

/// Closed forms of the regularized entropy densities
/// `g(u) = int_0^u int_1^v dw / (T_k(w) + alpha) dv`, their Bregman distances
/// and `h(u) = int_0^u dw / sqrt(T_k(w) + alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyFunctions {
    /// Truncation level, `f64::INFINITY` for none.
    pub k: f64,
    pub alpha: f64,
}

impl Default for EnergyFunctions {
    fn default() -> Self {
        Self::untruncated()
    }
}

impl EnergyFunctions {
    pub fn new(k: f64, alpha: f64) -> Result<Self> {
        if !(k > 0.0) || !(alpha >= 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("need k > 0 and alpha >= 0, got k = {k}, alpha = {alpha}")));
        }
        Ok(Self { k, alpha })
    }

    pub fn untruncated() -> Self {
        Self {
            k: f64::INFINITY,
            alpha: 0.0,
        }
    }

    /// `int dw / (T_k(w) + alpha)`, normalized to `ln(w + alpha)` below `k`.
    fn primitive(&self, w: f64) -> f64 {
        let (k, a) = (self.k, self.alpha);
        if w <= k {
            math::ln(w + a)
        } else {
            math::ln(k + a) + (w - k) / (k + a)
        }
    }

    /// `int_0^u primitive`.
    fn antiderivative(&self, u: f64) -> f64 {
        let (k, a) = (self.k, self.alpha);
        let below = |v: f64| math::xlnx(v + a) - math::xlnx(a) - v;
        if u <= k {
            below(u)
        } else {
            let e = u - k;
            below(k) + e * math::ln(k + a) + e * e / (2.0 * (k + a))
        }
    }

    pub fn g(&self, u: f64) -> f64 {
        self.antiderivative(u) - u * self.primitive(1.0)
    }

    pub fn g_prime(&self, u: f64) -> f64 {
        self.primitive(u) - self.primitive(1.0)
    }

    /// Bregman distance `g(u) - g(ubar) - g'(ubar)(u - ubar)`.
    pub fn bregman(&self, u: f64, ubar: f64) -> f64 {
        if u == ubar {
            return 0.0;
        }
        let slope = self.primitive(ubar);
        if slope == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        (self.antiderivative(u) - self.antiderivative(ubar)) - slope * (u - ubar)
    }

    pub fn h(&self, u: f64) -> f64 {
        let (k, a) = (self.k, self.alpha);
        let below = |v: f64| 2.0 * (math::sqrt(v + a) - math::sqrt(a));
        if u <= k {
            below(u)
        } else {
            below(k) + (u - k) / math::sqrt(k + a)
        }
    }
}

/// Reference fields of the relative free energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFields {
    pub n_bar: Vec<f64>,
    pub p_bar: Vec<f64>,
    pub d_bar: Vec<f64>,
    pub v_a: Vec<f64>,
    /// Dirichlet values of `V - V_A` on the terminal faces, i.e. `u_D^j`.
    pub boundary_shift: FaceField,
}

impl ReferenceFields {
    fn density(&self, s: Species) -> &[f64] {
        match s {
            Species::Electrons => &self.n_bar,
            Species::Holes => &self.p_bar,
            Species::Vacancies => &self.d_bar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyReport {
    pub t: f64,
    pub total: f64,
    /// Sum of the Bregman integrals `G(n|nbar) + G(p|pbar) + G(D|Dbar)`.
    pub internal: f64,
    pub electric: f64,
    pub network: f64,
    /// `int c (ln(c / cbar) - 1)` summed over species.
    pub raw_internal: f64,
}

pub fn free_energy(
    op: &EllipticOperator,
    state: &DeviceState,
    refs: &ReferenceFields,
    network: Option<(&DecoupledSystem, &DVector<f64>)>,
    energy: &EnergyFunctions,
    t: f64,
) -> Result<EnergyReport> {
    let mesh = op.mesh();
    let area = mesh.cell_area();
    let mut internal = 0.0;
    let mut raw_internal = 0.0;
    for s in Species::ALL {
        let (c, cbar) = (state.density(s), refs.density(s));
        mesh.check_cells(cbar)?;
        if let Some(bad) = cbar.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::NonPositiveBoundaryData(*bad));
        }
        for (u, ub) in c.iter().zip(cbar) {
            internal += area * energy.bregman(*u, *ub);
            raw_internal += area * (math::xlnx(*u) - u * math::ln(*ub) - u);
        }
    }

    let diff: Vec<f64> = state.v.iter().zip(&refs.v_a).map(|(v, a)| v - a).collect();
    let grad = op.face_gradient(&diff, &refs.boundary_shift);
    let electric = 0.5 * op.lambda2() * mesh.face_inner(&grad, &grad);

    let network = match network {
        Some((sys, y)) => 0.5 * y.dot(&(sys.energy_matrix() * y)),
        None => 0.0,
    };
    Ok(EnergyReport {
        t,
        total: internal + electric + network,
        internal,
        electric,
        network,
        raw_internal,
    })
}

/// Instantaneous dissipation rates `int |2 grad sqrt(c) -+ sqrt(c) grad V|^2`
/// for `n`, `p`, `D` over the interior faces.
pub fn dissipation(mesh: &Mesh, state: &DeviceState) -> [f64; 3] {
    Species::ALL.map(|s| {
        let c = state.density(s);
        let sign = s.sign();
        mesh.faces
            .iter()
            .filter_map(|f| f.neighbor.map(|nb| (f, nb)))
            .map(|(f, nb)| {
                let o = f.owner;
                let root = |x: f64| math::sqrt(x.max(0.0));
                let grad_root = (root(c[nb]) - root(c[o])) / f.dist;
                let grad_v = (state.v[nb] - state.v[o]) / f.dist;
                let r = 2.0 * grad_root - sign * root(0.5 * (c[o] + c[nb])) * grad_v;
                f.quadrature_weight() * r * r
            })
            .sum()
    })
}

/// `mu = 2 (M + |A|_inf) / lambda^2`.
pub fn decay_rate(upper_bound: f64, a_sup: f64, lambda2: f64) -> f64 {
    2.0 * (upper_bound + a_sup) / lambda2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport {
    pub t: f64,
    pub mu: f64,
    /// `m_0 e^{-mu t}`.
    pub threshold: f64,
    pub minima: [f64; 3],
    pub maxima: [f64; 3],
    /// Smallest `min(c) - threshold` over the species.
    pub margin: f64,
    pub satisfied: bool,
}

pub fn bounds_monitor(state: &DeviceState, t: f64, m0: f64, upper_bound: f64, lambda2: f64, a_sup: f64) -> BoundsReport {
    let mu = decay_rate(upper_bound, a_sup, lambda2);
    let threshold = m0 * math::exp(-mu * t);
    let minima = state.minima();
    let margin = minima.iter().fold(f64::INFINITY, |m, v| m.min(v - threshold));
    BoundsReport {
        t,
        mu,
        threshold,
        minima,
        maxima: state.maxima(),
        margin,
        satisfied: margin >= 0.0,
    }
}

/// `m_0 = min(c_0, min over species of the initial minima)`.
pub fn lower_bound_start(c0: f64, initial: &DeviceState) -> f64 {
    initial.minima().iter().fold(c0, |m, v| m.min(*v))
}

/// Net boundary inflow `sum_f |f| F_f . nu` of each species flux `F`.
pub fn boundary_inflow(mesh: &Mesh, currents: &FaceCurrents) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, f) in mesh.faces.iter().enumerate() {
        if f.is_boundary() {
            out[0] += f.length * currents.jn[k];
            out[1] -= f.length * currents.jp[k];
            out[2] -= f.length * currents.jd[k];
        }
    }
    out
}

/// What a time step contributes to the conservation report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub masses: [f64; 3],
    /// Boundary inflow rates over the step that produced this record.
    pub inflow: [f64; 3],
    pub terminal_currents: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    /// `|int D_m - int D_{m-1}| / int D_0` per step.
    pub d_drift: Vec<f64>,
    /// `|int D_m - int D_0| / int D_0` at the end.
    pub d_total_drift: f64,
    /// `|Delta mass - dt * inflow|` for electrons and holes per step.
    pub n_balance: Vec<f64>,
    pub p_balance: Vec<f64>,
    /// `|I_D^1 + I_D^2|` per record.
    pub charge_balance: Vec<f64>,
}

pub fn conservation_report(history: &[StepRecord]) -> Result<ConservationReport> {
    if history.len() < 2 {
        return Err(Error::InvalidParameter("conservation report needs at least two records".into()));
    }
    let d0 = history[0].masses[2];
    let scale = if d0 != 0.0 { d0.abs() } else { 1.0 };
    let mut report = ConservationReport {
        d_drift: Vec::new(),
        d_total_drift: (history[history.len() - 1].masses[2] - d0).abs() / scale,
        n_balance: Vec::new(),
        p_balance: Vec::new(),
        charge_balance: history
            .iter()
            .map(|r| (r.terminal_currents[0] + r.terminal_currents[1]).abs())
            .collect(),
    };
    for w in history.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        report.d_drift.push((b.masses[2] - a.masses[2]).abs() / scale);
        report.n_balance.push((b.masses[0] - a.masses[0] - dt * b.inflow[0]).abs());
        report.p_balance.push((b.masses[1] - a.masses[1] - dt * b.inflow[1]).abs());
    }
    Ok(report)
}
