//! Implicit Scharfetter-Gummel transport for electrons, holes and oxide vacancies.
//!
//! Every species obeys `d_t c = div F` with `F = grad c - c grad psi`, where the
//! drift potential is `psi = V` for electrons and `psi = -V` for holes and
//! vacancies. The physical current densities are `J_n = F_n`, `J_p = -F_p`
//! and `J_D = -F_D`. Electrons and holes take Dirichlet data on the terminals
//! and are insulated elsewhere; vacancies never cross the boundary.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Mesh;
use crate::linalg::{Anderson, BandedLu, CsrMatrix};
use crate::math;
use crate::poisson::{solve_poisson, EllipticOperator};
use crate::FaceField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Species {
    Electrons,
    Holes,
    Vacancies,
}

impl Species {
    pub const ALL: [Species; 3] = [Species::Electrons, Species::Holes, Species::Vacancies];

    /// `psi = sign * V`; the same sign maps the flux `F` to the current `J`.
    pub fn sign(self) -> f64 {
        match self {
            Species::Electrons => 1.0,
            Species::Holes | Species::Vacancies => -1.0,
        }
    }
}

/// Drift truncation level `k` of `T_k(s) = max(0, min(k, s))`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Truncation {
    #[default]
    Off,
    Level(f64),
}

/// `x / (e^x - 1)`, continued by `B(0) = 1`.
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 - 0.5 * x + x * x / 12.0
    } else if x > 40.0 {
        x * math::exp(-x)
    } else if x < -40.0 {
        -x
    } else {
        x / math::expm1(x)
    }
}

pub fn truncate(s: f64, k: f64) -> f64 {
    s.min(k).max(0.0)
}

// Weight of the downstream value in the face density that reproduces the SG
// drift term: (1 - B(x)) / x, in (0, 1).
fn upwind_weight(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        0.5 - x / 12.0
    } else {
        (1.0 - bernoulli(x)) / x
    }
}

/// Face density `a c_hi + (1 - a) c_lo` implied by the SG flux.
pub fn sg_face_density(c_lo: f64, c_hi: f64, dpsi: f64) -> f64 {
    let a = upwind_weight(dpsi);
    a * c_hi + (1.0 - a) * c_lo
}

/// Coefficients `(a_hi, a_lo)` with `F = a_hi c_hi - a_lo c_lo` across a face
/// of center distance `h`. `theta` in `[0, 1]` scales the drift part; `theta = 1`
/// is the plain SG flux.
fn sg_coefficients(dpsi: f64, h: f64, theta: f64) -> (f64, f64) {
    if theta == 1.0 {
        (bernoulli(dpsi) / h, bernoulli(-dpsi) / h)
    } else {
        let keep = 1.0 - theta;
        ((keep + theta * bernoulli(dpsi)) / h, (keep + theta * bernoulli(-dpsi)) / h)
    }
}

// Drift scaling that replaces the SG face density c_f by T_k(c_f).
fn truncation_factor(k: Truncation, c_lo: f64, c_hi: f64, dpsi: f64) -> f64 {
    match k {
        Truncation::Off => 1.0,
        Truncation::Level(k) => {
            let cf = sg_face_density(c_lo, c_hi, dpsi);
            if cf <= k {
                1.0
            } else {
                k / cf
            }
        }
    }
}

/// Flux `F = grad c - c grad psi` from `c_left` to `c_right` per unit face length,
/// with `dpsi = psi_right - psi_left`.
pub fn sg_face_flux(c_left: f64, c_right: f64, dpsi: f64, h: f64, k: Truncation) -> f64 {
    if let Truncation::Level(level) = k {
        let cf = sg_face_density(c_left, c_right, dpsi);
        if cf > level {
            return (c_right - c_left) / h - truncate(cf, level) * dpsi / h;
        }
    }
    (bernoulli(dpsi) * c_right - bernoulli(-dpsi) * c_left) / h
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpeciesBoundary {
    /// Values on the terminal faces; other boundary faces are insulating.
    Dirichlet(FaceField),
    /// Zero flux on the whole boundary.
    NoFlux,
}

impl SpeciesBoundary {
    fn value(&self, mesh: &Mesh, f: usize) -> Option<f64> {
        match self {
            SpeciesBoundary::Dirichlet(v) if mesh.is_terminal_face(f) => Some(v[f]),
            _ => None,
        }
    }

    fn check(&self, mesh: &Mesh) -> Result<()> {
        if let SpeciesBoundary::Dirichlet(v) = self {
            mesh.check_faces(v)?;
            for f in 0..mesh.n_faces() {
                if mesh.is_terminal_face(f) && !(v[f] > 0.0) {
                    return Err(Error::NonPositiveBoundaryData(v[f]));
                }
            }
        }
        Ok(())
    }
}

// Per-face (a_hi, a_lo, boundary value) for the current drift potential.
fn face_coefficients(
    mesh: &Mesh,
    lag: &[f64],
    psi: &[f64],
    psi_boundary: &[f64],
    bc: &SpeciesBoundary,
    k: Truncation,
) -> Vec<Option<(f64, f64, f64)>> {
    mesh.faces
        .iter()
        .enumerate()
        .map(|(id, f)| {
            let (dpsi, lo, hi, cb) = match f.neighbor {
                Some(nb) => (psi[nb] - psi[f.owner], lag[f.owner], lag[nb], 0.0),
                None => {
                    let cb = bc.value(mesh, id)?;
                    (psi_boundary[id] - psi[f.owner], lag[f.owner], cb, cb)
                }
            };
            let theta = truncation_factor(k, lo, hi, dpsi);
            let (a_hi, a_lo) = sg_coefficients(dpsi, f.dist, theta);
            Some((a_hi, a_lo, cb))
        })
        .collect()
}

/// One backward-Euler step of `d_t c = div F` for the drift potential `psi`
/// (cell values plus terminal-face values in `psi_boundary`).
///
/// The truncation factor is lagged on `c_old`, which keeps the system linear and
/// an M-matrix; with `k` above every face density it is the plain SG step.
pub fn advance_species(
    mesh: &Mesh,
    c_old: &[f64],
    psi: &[f64],
    psi_boundary: &[f64],
    dt: f64,
    bc: &SpeciesBoundary,
    k: Truncation,
) -> Result<Vec<f64>> {
    mesh.check_cells(c_old)?;
    mesh.check_cells(psi)?;
    mesh.check_faces(psi_boundary)?;
    bc.check(mesh)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("time step must be positive, got {dt}")));
    }
    let n = mesh.n_cells();
    let area_dt = mesh.cell_area() / dt;
    let mut rhs: Vec<f64> = c_old.iter().map(|c| area_dt * c).collect();
    let mut triplets = Vec::with_capacity(5 * n);
    for c in 0..n {
        triplets.push((c, c, area_dt));
    }
    let coeffs = face_coefficients(mesh, c_old, psi, psi_boundary, bc, k);
    for (f, coeff) in mesh.faces.iter().zip(coeffs) {
        let Some((a_hi, a_lo, cb)) = coeff else { continue };
        let l = f.length;
        triplets.push((f.owner, f.owner, l * a_lo));
        match f.neighbor {
            Some(nb) => {
                triplets.push((f.owner, nb, -l * a_hi));
                triplets.push((nb, nb, l * a_hi));
                triplets.push((nb, f.owner, -l * a_lo));
            }
            None => rhs[f.owner] += l * a_hi * cb,
        }
    }
    let a = CsrMatrix::from_triplets(n, triplets);
    let lu = BandedLu::factor(&a)?;
    Ok(lu.solve(&rhs))
}

/// Face flux field `F` of one species, normal components as stored by the mesh.
pub fn species_flux(
    mesh: &Mesh,
    c: &[f64],
    lag: &[f64],
    psi: &[f64],
    psi_boundary: &[f64],
    bc: &SpeciesBoundary,
    k: Truncation,
) -> FaceField {
    face_coefficients(mesh, lag, psi, psi_boundary, bc, k)
        .into_iter()
        .zip(&mesh.faces)
        .map(|(coeff, f)| match coeff {
            None => 0.0,
            Some((a_hi, a_lo, cb)) => {
                let hi = f.neighbor.map_or(cb, |nb| c[nb]);
                a_hi * hi - a_lo * c[f.owner]
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub n: Vec<f64>,
    pub p: Vec<f64>,
    pub d: Vec<f64>,
    pub v: Vec<f64>,
}

impl DeviceState {
    pub fn uniform(cells: usize, n: f64, p: f64, d: f64) -> Self {
        Self {
            n: vec![n; cells],
            p: vec![p; cells],
            d: vec![d; cells],
            v: vec![0.0; cells],
        }
    }

    pub fn density(&self, s: Species) -> &[f64] {
        match s {
            Species::Electrons => &self.n,
            Species::Holes => &self.p,
            Species::Vacancies => &self.d,
        }
    }

    pub fn masses(&self, mesh: &Mesh) -> [f64; 3] {
        let a = mesh.cell_area();
        Species::ALL.map(|s| self.density(s).iter().sum::<f64>() * a)
    }

    pub fn minima(&self) -> [f64; 3] {
        Species::ALL.map(|s| self.density(s).iter().fold(f64::INFINITY, |m, v| m.min(*v)))
    }

    pub fn maxima(&self) -> [f64; 3] {
        Species::ALL.map(|s| self.density(s).iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)))
    }
}

/// Terminal data of the device: densities and potential on the `D1`/`D2` faces.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceBoundary {
    pub n_bar: FaceField,
    pub p_bar: FaceField,
    pub vbar: FaceField,
}

impl DeviceBoundary {
    fn species(&self, s: Species) -> SpeciesBoundary {
        match s {
            Species::Electrons => SpeciesBoundary::Dirichlet(self.n_bar.clone()),
            Species::Holes => SpeciesBoundary::Dirichlet(self.p_bar.clone()),
            Species::Vacancies => SpeciesBoundary::NoFlux,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceCurrents {
    pub jn: FaceField,
    pub jp: FaceField,
    pub jd: FaceField,
    pub total: FaceField,
}

fn currents_with_lag(
    mesh: &Mesh,
    state: &DeviceState,
    lag: &DeviceState,
    v: &[f64],
    bc: &DeviceBoundary,
    k: Truncation,
) -> FaceCurrents {
    let [jn, jp, jd] = Species::ALL.map(|s| {
        let sign = s.sign();
        let psi: Vec<f64> = v.iter().map(|x| sign * x).collect();
        let psi_b: Vec<f64> = bc.vbar.iter().map(|x| sign * x).collect();
        let flux = species_flux(mesh, state.density(s), lag.density(s), &psi, &psi_b, &bc.species(s), k);
        flux.into_iter().map(|f| sign * f).collect::<Vec<f64>>()
    });
    let total = (0..mesh.n_faces()).map(|f| jn[f] + jp[f] + jd[f]).collect();
    FaceCurrents { jn, jp, jd, total }
}

/// SG current densities `J_n`, `J_p`, `J_D` and their sum for potential `v`.
pub fn face_currents(mesh: &Mesh, state: &DeviceState, v: &[f64], bc: &DeviceBoundary, k: Truncation) -> FaceCurrents {
    currents_with_lag(mesh, state, state, v, bc, k)
}

/// History length of the Anderson mixing applied to the potential iterates.
const ANDERSON_DEPTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GummelSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GummelSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

/// Everything about the device that stays fixed during a time step.
#[derive(Debug, Clone, Copy)]
pub struct DeviceProblem<'a> {
    /// Poisson operator with Dirichlet data on both terminals.
    pub poisson: &'a EllipticOperator,
    pub doping: &'a [f64],
    pub truncation: Truncation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GummelOutcome {
    pub state: DeviceState,
    /// Currents evaluated with the potential of the last transport sweep, so
    /// their divergence matches the density update exactly.
    pub currents: FaceCurrents,
    pub iterations: usize,
    /// Max-norm potential change of every sweep.
    pub residuals: Vec<f64>,
}

/// One implicit time step of the coupled drift-diffusion-Poisson system,
/// solved by alternating Poisson and per-species transport solves.
pub fn gummel_solve(
    old: &DeviceState,
    problem: &DeviceProblem<'_>,
    bc: &DeviceBoundary,
    dt: f64,
    settings: &GummelSettings,
) -> Result<GummelOutcome> {
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidParameter("Gummel tolerance must be positive".into()));
    }
    let mesh = problem.poisson.mesh().as_ref();
    let mut v_prev = solve_poisson(problem.poisson, &old.n, &old.p, &old.d, problem.doping, &bc.vbar)?;
    let mut residuals = Vec::new();
    let mut mixer = Anderson::new(ANDERSON_DEPTH);
    for it in 1..=settings.max_iter {
        let [n, p, d] = Species::ALL.map(|s| {
            let sign = s.sign();
            let psi: Vec<f64> = v_prev.iter().map(|x| sign * x).collect();
            let psi_b: Vec<f64> = bc.vbar.iter().map(|x| sign * x).collect();
            advance_species(mesh, old.density(s), &psi, &psi_b, dt, &bc.species(s), problem.truncation)
        });
        let (n, p, d) = (n?, p?, d?);
        // Poisson with the carrier response linearized around v_prev,
        // lambda^2 Laplace(V) = g + sigma (V - v_prev); without it the sweep
        // diverges once dt exceeds the dielectric relaxation time.
        let sigma: Vec<f64> = (0..mesh.n_cells()).map(|c| n[c] + p[c] + d[c]).collect();
        let g: Vec<f64> = (0..mesh.n_cells())
            .map(|c| n[c] - p[c] - d[c] + problem.doping[c] - sigma[c] * v_prev[c])
            .collect();
        let v = problem.poisson.solve_screened(&sigma, &g, &bc.vbar)?;
        let change = v.iter().zip(&v_prev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        residuals.push(change);
        if change <= settings.tol {
            let v = solve_poisson(problem.poisson, &n, &p, &d, problem.doping, &bc.vbar)?;
            let state = DeviceState { n, p, d, v };
            let currents = currents_with_lag(mesh, &state, old, &v_prev, bc, problem.truncation);
            return Ok(GummelOutcome {
                state,
                currents,
                iterations: it,
                residuals,
            });
        }
        v_prev = mixer.next(&v_prev, &v);
    }
    Err(Error::MaxIterExceeded {
        iterations: settings.max_iter,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}
