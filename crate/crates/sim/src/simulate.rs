//! The coupled time loop.

use memristor_core::coupling::{compute_f, drive_mode, script_i, terminal_currents};
use memristor_core::diagnostics::{
    boundary_inflow, bounds_monitor, dissipation, free_energy, lower_bound_start, BoundsReport, EnergyFunctions,
    EnergyReport, StepRecord,
};
use memristor_core::nalgebra::DVector;
use memristor_core::network::{
    advance_y, build_structure, check_consistency, check_index1, initial_vector, recover_z, source_vector,
    ConsistencyReport, DecoupledSystem, MnaStructure, Netlist, TopologyReport,
};
use memristor_core::transport::{face_currents, DeviceState, FaceCurrents};
use memristor_core::waveform::Waveform;
use memristor_core::Error;
use thiserror::Error;

use crate::device::Device;

/// Residual below which `x0` counts as consistent.
pub const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Store a field snapshot every this many steps (and at step 0).
    pub fields_every: Option<usize>,
    pub repair: bool,
}

impl RunConfig {
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !(self.t_end >= self.dt) {
            return Err(Error::InvalidParameter(format!("need dt > 0 and t_end >= dt, got dt = {}, t_end = {}", self.dt, self.t_end)).into());
        }
        Ok(())
    }
}

/// The network side of a coupled run.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub netlist: Netlist,
    pub structure: MnaStructure,
    pub topology: TopologyReport,
    pub system: DecoupledSystem,
    pub consistency: ConsistencyReport,
}

impl Circuit {
    /// Builds and decouples the MNA system with the device's `M`.
    pub fn new(netlist: &Netlist, m: [[f64; 2]; 2]) -> Result<Self, SimError> {
        let structure = build_structure(netlist)?;
        let topology = check_index1(&structure);
        let system = DecoupledSystem::new(&structure, m)?;
        let x0 = initial_vector(netlist, &structure)?;
        let consistency = check_consistency(&x0, &source_vector(0.0, &structure), &system, CONSISTENCY_TOL);
        Ok(Self {
            netlist: netlist.clone(),
            structure,
            topology,
            system,
            consistency,
        })
    }

    /// `x0` as given, or repaired when asked to.
    pub fn initial_state(&self, repair: bool) -> Result<DVector<f64>, SimError> {
        if self.consistency.consistent {
            return Ok(initial_vector(&self.netlist, &self.structure)?);
        }
        if repair {
            Ok(self.consistency.repaired.clone())
        } else {
            Err(SimError::Inconsistent {
                residual: self.consistency.residual,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub enum Mode {
    Coupled(Box<Circuit>),
    /// Terminal 1 follows the waveform, terminal 2 is grounded.
    Drive(Waveform),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub t: f64,
    /// Network unknowns `(u, i_L, i_V)`; in drive mode just `u_D`.
    pub x: Vec<f64>,
    pub u_d: [f64; 2],
    pub i_d: [f64; 2],
    pub energy: EnergyReport,
    /// Running `1/2 int_0^t` of the dissipation rates.
    pub dissipation: [f64; 3],
    pub masses: [f64; 3],
    pub minima: [f64; 3],
    pub maxima: [f64; 3],
    pub gummel_iterations: usize,
    /// Boundary inflow of `n`, `p`, `D` over the step that produced the row.
    pub inflow: [f64; 3],
}

impl StepRow {
    pub fn record(&self) -> StepRecord {
        StepRecord {
            t: self.t,
            masses: self.masses,
            inflow: self.inflow,
            terminal_currents: self.i_d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub state: DeviceState,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub rows: Vec<StepRow>,
    pub fields: Vec<FieldSnapshot>,
    /// Sizes of the `u`, `i_L`, `i_V` blocks of `x`.
    pub blocks: [usize; 3],
    pub grid: (usize, usize, f64, f64),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("initial network state violates the consistency condition (residual {residual:e}); use --repair-consistency")]
    Inconsistent { residual: f64 },
    #[error("step {step} (t = {t}): {source}")]
    Step {
        step: usize,
        t: f64,
        source: Error,
        /// Last accepted row, if any.
        last: Option<Box<StepRow>>,
    },
}

/// Step-by-step driver; [`run_transient`] wraps it in a loop.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub device: &'a Device,
    pub mode: Mode,
    pub dt: f64,
    pub energy: EnergyFunctions,
    pub step: usize,
    pub t: f64,
    pub state: DeviceState,
    /// `(y, z)` in coupled mode.
    pub network: Option<(DVector<f64>, DVector<f64>)>,
    pub currents: FaceCurrents,
    cumulative: [f64; 3],
}

impl<'a> Simulator<'a> {
    pub fn new(device: &'a Device, mode: Mode, dt: f64, repair: bool) -> Result<Self, SimError> {
        let energy = match device.config.k_trunc {
            Some(k) => EnergyFunctions::new(k, 0.0)?,
            None => EnergyFunctions::untruncated(),
        };
        let (network, u_d) = match &mode {
            Mode::Coupled(c) => {
                let x0 = c.initial_state(repair)?;
                let sys = &c.system;
                let y = &sys.p * &x0;
                let z = &x0 - &y;
                let u_d = sys.terminal_voltages(&y);
                (Some((y, z)), u_d)
            }
            Mode::Drive(w) => (None, drive_mode(w, 0.0).0),
        };
        let state = device.initial_state(u_d)?;
        let currents = face_currents(&device.mesh, &state, &state.v, &device.boundary(u_d), device.truncation);
        Ok(Self {
            device,
            mode,
            dt,
            energy,
            step: 0,
            t: 0.0,
            state,
            network,
            currents,
            cumulative: [0.0; 3],
        })
    }

    fn system(&self) -> Option<&DecoupledSystem> {
        match &self.mode {
            Mode::Coupled(c) => Some(&c.system),
            Mode::Drive(_) => None,
        }
    }

    /// Terminal voltages seen by the device at the current time level.
    pub fn terminal_voltages(&self) -> [f64; 2] {
        match (&self.mode, &self.network) {
            (Mode::Coupled(c), Some((y, _))) => c.system.terminal_voltages(y),
            (Mode::Drive(w), _) => drive_mode(w, self.t).0,
            _ => unreachable!("coupled mode always carries a network state"),
        }
    }

    /// `I_D` for the current state, with `du_D/dt` from the network right-hand side.
    fn device_currents(&self) -> Result<[f64; 2], Error> {
        let ops = &self.device.coupling;
        let iota = script_i(&self.currents.total, ops)?;
        let dudt = match (&self.mode, &self.network) {
            (Mode::Coupled(c), Some((y, _))) => {
                let st = &c.structure;
                let rate = c.system.y_rate(y, &compute_f(iota, st), &source_vector(self.t, st));
                c.system.terminal_voltages(&rate)
            }
            (Mode::Drive(w), _) => drive_mode(w, self.t).1,
            _ => unreachable!(),
        };
        Ok(terminal_currents(iota, ops.m, dudt))
    }

    /// Diagnostics row for the current state. `u_d` is the terminal data the
    /// state was computed with.
    fn row(&self, u_d: [f64; 2], iterations: usize) -> Result<StepRow, Error> {
        let dev = self.device;
        let network = self.system().zip(self.network.as_ref().map(|(y, _)| y));
        let energy = free_energy(&dev.poisson, &self.state, &dev.references(u_d), network, &self.energy, self.t)?;
        let x = match &self.network {
            Some((y, z)) => (y + z).iter().copied().collect(),
            None => u_d.to_vec(),
        };
        Ok(StepRow {
            t: self.t,
            x,
            u_d,
            i_d: self.device_currents()?,
            energy,
            dissipation: self.cumulative,
            masses: self.state.masses(&dev.mesh),
            minima: self.state.minima(),
            maxima: self.state.maxima(),
            gummel_iterations: iterations,
            inflow: boundary_inflow(&dev.mesh, &self.currents),
        })
    }

    pub fn initial_row(&self) -> Result<StepRow, Error> {
        self.row(self.terminal_voltages(), 0)
    }

    /// One time step: device solve with the terminal voltages of `y_m`, then
    /// the network update with `F` from the new currents.
    pub fn advance(&mut self) -> Result<StepRow, Error> {
        let t_next = (self.step + 1) as f64 * self.dt;
        let u_d = match &self.mode {
            Mode::Coupled(_) => self.terminal_voltages(),
            // the drive is known in advance, so the device sees it implicitly
            Mode::Drive(w) => drive_mode(w, t_next).0,
        };
        let outcome = self.device.step(&self.state, u_d, self.dt)?;
        if let (Mode::Coupled(c), Some((y, _))) = (&self.mode, &self.network) {
            let st = &c.structure;
            let f = compute_f(script_i(&outcome.currents.total, &self.device.coupling)?, st);
            let s_next = source_vector(t_next, st);
            let y_next = advance_y(y, &f, &s_next, self.dt, &c.system)?;
            let z_next = recover_z(&y_next, &s_next, &c.system);
            self.network = Some((y_next, z_next));
        }
        let rates = dissipation(&self.device.mesh, &outcome.state);
        for (acc, r) in self.cumulative.iter_mut().zip(rates) {
            *acc += 0.5 * self.dt * r;
        }
        self.state = outcome.state;
        self.currents = outcome.currents;
        self.step += 1;
        self.t = t_next;
        self.row(u_d, outcome.iterations)
    }
}

/// Runs `run.steps()` steps and collects rows and field snapshots.
pub fn run_transient(device: &Device, mode: Mode, run: &RunConfig) -> Result<History, SimError> {
    run.validate()?;
    let blocks = match &mode {
        Mode::Coupled(c) => [c.structure.m, c.structure.n_l(), c.structure.n_v()],
        Mode::Drive(_) => [2, 0, 0],
    };
    let mut sim = Simulator::new(device, mode, run.dt, run.repair)?;
    let mesh = &device.mesh;
    let mut history = History {
        blocks,
        grid: (mesh.nx, mesh.ny, mesh.hx, mesh.hy),
        ..History::default()
    };
    let snapshot = |sim: &Simulator, history: &mut History| {
        if run.fields_every.is_some_and(|k| k > 0 && sim.step.is_multiple_of(k)) {
            history.fields.push(FieldSnapshot {
                t: sim.t,
                state: sim.state.clone(),
            });
        }
    };
    history.rows.push(sim.initial_row().map_err(|source| SimError::Step {
        step: 0,
        t: 0.0,
        source,
        last: None,
    })?);
    snapshot(&sim, &mut history);
    for step in 1..=run.steps() {
        let row = sim.advance().map_err(|source| SimError::Step {
            step,
            t: sim.t,
            source,
            last: history.rows.last().cloned().map(Box::new),
        })?;
        history.rows.push(row);
        snapshot(&sim, &mut history);
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyOutcome {
    pub history: History,
    pub pseudo_steps: usize,
    /// Max-norm density change per unit pseudo time at the last step.
    pub rate: f64,
}

/// Pseudo-time continuation to a steady state with sources frozen at `t = 0`.
/// The step grows by half each accepted step up to `dt_max`.
pub fn run_steady(device: &Device, mode: Mode, dt0: f64, dt_max: f64, tol: f64, max_steps: usize) -> Result<SteadyOutcome, SimError> {
    let frozen = match mode {
        Mode::Drive(w) => Mode::Drive(Waveform::Dc(w.value(0.0))),
        Mode::Coupled(mut c) => {
            c.system.structure.vsources.iter_mut().chain(c.structure.vsources.iter_mut()).for_each(|w| *w = Waveform::Dc(w.value(0.0)));
            c.system.structure.isources.iter_mut().chain(c.structure.isources.iter_mut()).for_each(|w| *w = Waveform::Dc(w.value(0.0)));
            Mode::Coupled(c)
        }
    };
    let blocks = match &frozen {
        Mode::Coupled(c) => [c.structure.m, c.structure.n_l(), c.structure.n_v()],
        Mode::Drive(_) => [2, 0, 0],
    };
    let mut sim = Simulator::new(device, frozen, dt0, true)?;
    let mut rate = f64::INFINITY;
    let mut steps = 0;
    let mut last = sim.initial_row()?;
    while steps < max_steps {
        let before = sim.state.clone();
        // sources are frozen, so only the step size matters
        sim.step = 0;
        sim.t = 0.0;
        last = sim.advance().map_err(|source| SimError::Step {
            step: steps + 1,
            t: sim.t,
            source,
            last: Some(Box::new(last.clone())),
        })?;
        steps += 1;
        rate = [(&before.n, &sim.state.n), (&before.p, &sim.state.p), (&before.d, &sim.state.d)]
            .iter()
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0f64, f64::max)
            / sim.dt;
        if rate <= tol {
            break;
        }
        sim.dt = (sim.dt * 1.5).min(dt_max);
    }
    let mesh = &device.mesh;
    last.t = 0.0;
    Ok(SteadyOutcome {
        history: History {
            rows: vec![last],
            fields: vec![FieldSnapshot {
                t: 0.0,
                state: sim.state.clone(),
            }],
            blocks,
            grid: (mesh.nx, mesh.ny, mesh.hx, mesh.hy),
        },
        pseudo_steps: steps,
        rate,
    })
}

/// Lower-bound monitor over a run, `m_0 = min(c0, initial minima)` and the
/// upper bound taken from the largest density seen.
pub fn bounds_over(history: &History, initial: &DeviceState, c0: f64, device: &Device) -> Vec<BoundsReport> {
    let m0 = lower_bound_start(c0, initial);
    let upper = history.rows.iter().flat_map(|r| r.maxima).fold(0.0f64, f64::max);
    history
        .rows
        .iter()
        .map(|r| {
            let probe = DeviceState {
                n: vec![r.minima[0], r.maxima[0]],
                p: vec![r.minima[1], r.maxima[1]],
                d: vec![r.minima[2], r.maxima[2]],
                v: vec![0.0; 2],
            };
            bounds_monitor(&probe, r.t, m0, upper, device.lambda2(), device.doping_sup)
        })
        .collect()
}
