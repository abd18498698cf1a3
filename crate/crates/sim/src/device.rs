//! Discretized device built from a [`DeviceConfig`].

use std::sync::Arc;

use memristor_core::coupling::{boundary_potential, extended_boundary_potential, BuiltInPotential, CouplingOperators};
use memristor_core::diagnostics::ReferenceFields;
use memristor_core::grid::{build_mesh, DomainSpec, Mesh};
use memristor_core::poisson::{assemble_operator, solve_poisson, solve_stationary, EllipticOperator, TERMINALS};
use memristor_core::transport::{
    gummel_solve, DeviceBoundary, DeviceProblem, DeviceState, GummelOutcome, GummelSettings, Truncation,
};
use memristor_core::{FaceField, Result};

use crate::config::{DeviceConfig, PiecewiseField, TerminalData};

#[derive(Debug, Clone)]
pub struct Device {
    pub config: DeviceConfig,
    pub mesh: Arc<Mesh>,
    pub poisson: EllipticOperator,
    pub coupling: CouplingOperators,
    pub doping: Vec<f64>,
    /// `max |A|`.
    pub doping_sup: f64,
    pub vbi: BuiltInPotential,
    /// Stationary potential for `V = V_bi` on the terminals.
    pub v_a: Vec<f64>,
    pub n_bar: FaceField,
    pub p_bar: FaceField,
    /// Cell extensions of the boundary densities, used as energy references.
    pub n_ref: Vec<f64>,
    pub p_ref: Vec<f64>,
    pub truncation: Truncation,
    pub gummel: GummelSettings,
}

impl Device {
    pub fn new(config: &DeviceConfig) -> Result<Self> {
        let spec = DomainSpec::rectangle(config.length_x, config.length_y).with_layout(config.layout.clone());
        let mesh = Arc::new(build_mesh(&spec, config.nx, config.ny)?);
        let poisson = assemble_operator(mesh.clone(), config.lambda2, &TERMINALS)?;
        let coupling = CouplingOperators::new(poisson.clone())?;
        let doping = sample(&mesh, &config.doping);
        let doping_sup = doping.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let vbi = BuiltInPotential::from_doping(&mesh, &doping, config.n_i)?;
        let v_a = solve_stationary(&poisson, &doping, &vbi.trace)?;

        let (n_eq, p_eq) = vbi.equilibrium_densities(&vbi.trace);
        let on_terminals = |f: &dyn Fn(usize, usize) -> f64| -> FaceField {
            mesh.faces
                .iter()
                .enumerate()
                .map(|(k, face)| face.tag.and_then(|t| t.terminal()).map_or(0.0, |j| f(k, j)))
                .collect()
        };
        let faces = |data: TerminalData, eq: &FaceField| -> FaceField {
            match data {
                TerminalData::Constant(c) => on_terminals(&|_, _| c),
                TerminalData::PerTerminal(v) => on_terminals(&|_, j| v[j]),
                TerminalData::Equilibrium => on_terminals(&|k, _| eq[k]),
            }
        };
        let cells = |data: TerminalData, sign: f64| -> Vec<f64> {
            match data {
                TerminalData::Constant(c) => vec![c; mesh.n_cells()],
                TerminalData::PerTerminal([a, b]) => (0..mesh.n_cells()).map(|c| a * coupling.w[0][c] + b * coupling.w[1][c]).collect(),
                TerminalData::Equilibrium => vbi.cells.iter().map(|v| config.n_i * (sign * v).exp()).collect(),
            }
        };
        let n_bar = faces(config.n_bar, &n_eq);
        let p_bar = faces(config.p_bar, &p_eq);
        let n_ref = cells(config.n_bar, 1.0);
        let p_ref = cells(config.p_bar, -1.0);

        Ok(Self {
            config: config.clone(),
            mesh: mesh.clone(),
            poisson,
            coupling,
            doping,
            doping_sup,
            vbi,
            v_a,
            n_bar,
            p_bar,
            n_ref,
            p_ref,
            truncation: config.k_trunc.map_or(Truncation::Off, Truncation::Level),
            gummel: GummelSettings {
                tol: config.gummel_tol,
                max_iter: config.gummel_max_iter,
            },
        })
    }

    pub fn lambda2(&self) -> f64 {
        self.poisson.lambda2()
    }

    pub fn boundary(&self, u_d: [f64; 2]) -> DeviceBoundary {
        DeviceBoundary {
            n_bar: self.n_bar.clone(),
            p_bar: self.p_bar.clone(),
            vbar: boundary_potential(&self.mesh, &self.vbi, u_d),
        }
    }

    /// Initial densities from the configuration and the matching potential.
    pub fn initial_state(&self, u_d: [f64; 2]) -> Result<DeviceState> {
        let n = sample(&self.mesh, &self.config.n0);
        let p = sample(&self.mesh, &self.config.p0);
        let d = sample(&self.mesh, &self.config.d0);
        let v = solve_poisson(&self.poisson, &n, &p, &d, &self.doping, &self.boundary(u_d).vbar)?;
        Ok(DeviceState { n, p, d, v })
    }

    pub fn step(&self, old: &DeviceState, u_d: [f64; 2], dt: f64) -> Result<GummelOutcome> {
        let problem = DeviceProblem {
            poisson: &self.poisson,
            doping: &self.doping,
            truncation: self.truncation,
        };
        gummel_solve(old, &problem, &self.boundary(u_d), dt, &self.gummel)
    }

    /// Free-energy references for terminal voltages `u_d`, with
    /// `Dbar = exp(-(V_bi + w_1 u_D^1 + w_2 u_D^2))`.
    pub fn references(&self, u_d: [f64; 2]) -> ReferenceFields {
        let lift = extended_boundary_potential(&self.vbi, &self.coupling, u_d);
        let shift = self
            .mesh
            .faces
            .iter()
            .map(|f| f.tag.and_then(|t| t.terminal()).map_or(0.0, |j| u_d[j]))
            .collect();
        ReferenceFields {
            n_bar: self.n_ref.clone(),
            p_bar: self.p_ref.clone(),
            d_bar: lift.iter().map(|v| (-v).exp()).collect(),
            v_a: self.v_a.clone(),
            boundary_shift: shift,
        }
    }
}

pub fn sample(mesh: &Mesh, field: &PiecewiseField) -> Vec<f64> {
    mesh.cell_centers().map(|(x, y)| field.eval(x, y)).collect()
}
