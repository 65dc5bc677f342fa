//! 2D Boussinesq solver on a staggered (MAC) grid.
//!
//! `p` and `T` live at cell centres, `u` on x-faces and `w` on z-faces.
//! The domain is periodic in x; in z it is either bounded by no-slip
//! isothermal plates (`T = 1` below, `T = 0` above) or periodic.
//!
//! Time stepping is Heun's method with a projection after each stage.
//! Momentum uses second-order central differences; temperature uses a
//! flux form with van Leer limited upwind reconstruction so it stays within
//! the plate temperatures. The pressure Poisson problem is solved directly:
//! FFT in x and a tridiagonal solve per mode in z (FFT in z when periodic).

use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::dataset::{Axis, FieldKind, SnapshotDb};
use crate::physics::SpatialDim;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("solution became unstable at step {step} (t = {t:.4}): {reason}")]
    Unstable { step: u64, t: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerticalBoundary {
    /// No-slip plates at `T = 1` (bottom) and `T = 0` (top).
    Walls,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    /// Conductive profile `T = 1 − z` plus seeded noise of the given
    /// amplitude, fluid at rest.
    Conductive { noise: f64 },
    /// `u = sin 2πx cos 2πz`, `w = −cos 2πx sin 2πz` on the unit box, `T = 0`.
    TaylorGreen,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub nx: usize,
    pub nz: usize,
    pub lx: f64,
    pub lz: f64,
    pub dt: f64,
    pub ra: f64,
    pub pr: f64,
    pub boundary: VerticalBoundary,
    pub initial: InitialCondition,
    /// Include the `Pr·T` buoyancy force.
    pub buoyancy: bool,
    /// Time integrated before the first snapshot.
    pub spinup: f64,
    pub n_snapshots: usize,
    pub snapshot_dt: f64,
    pub seed: u64,
}

impl SolverConfig {
    /// Rayleigh–Bénard between plates at `Ra = 10⁶`, `Pr = 4.3`, 64²,
    /// 100 snapshots every 0.1 time units after 40 units of spin-up.
    pub fn rayleigh_benard() -> Self {
        SolverConfig {
            nx: 64,
            nz: 64,
            lx: 1.0,
            lz: 1.0,
            dt: 0.005,
            ra: 1e6,
            pr: 4.3,
            boundary: VerticalBoundary::Walls,
            initial: InitialCondition::Conductive { noise: 0.01 },
            buoyancy: true,
            spinup: 40.0,
            n_snapshots: 100,
            snapshot_dt: 0.1,
            seed: 1,
        }
    }

    /// Decaying Taylor–Green vortex on the periodic unit box.
    pub fn taylor_green(n: usize, nu: f64, dt: f64) -> Self {
        SolverConfig {
            nx: n,
            nz: n,
            lx: 1.0,
            lz: 1.0,
            dt,
            ra: 1.0 / (nu * nu),
            pr: 1.0,
            boundary: VerticalBoundary::Periodic,
            initial: InitialCondition::TaylorGreen,
            buoyancy: false,
            spinup: 0.0,
            n_snapshots: 1,
            snapshot_dt: dt,
            seed: 0,
        }
    }

    pub fn nu(&self) -> f64 {
        self.pr / self.ra.sqrt()
    }

    pub fn kappa(&self) -> f64 {
        1.0 / self.ra.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SolverError::Config(m.to_string()));
        if self.nx < 4 || self.nz < 4 {
            return bad("grid must have at least 4 cells per direction");
        }
        if !(self.ra > 0.0 && self.pr > 0.0) {
            return bad("Ra and Pr must be positive");
        }
        if !(self.lx > 0.0 && self.lz > 0.0 && self.dt > 0.0) {
            return bad("lengths and dt must be positive");
        }
        if self.n_snapshots == 0 || !(self.snapshot_dt > 0.0) || self.spinup < 0.0 {
            return bad("need at least one snapshot and a positive cadence");
        }
        let ratio = self.snapshot_dt / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return bad("snapshot_dt must be a positive multiple of dt");
        }
        let spin = self.spinup / self.dt;
        if (spin - spin.round()).abs() > 1e-9 {
            return bad("spinup must be a multiple of dt");
        }
        let (dx, dz) = (self.lx / self.nx as f64, self.lz / self.nz as f64);
        let h2 = dx.min(dz).powi(2);
        let diff = self.nu().max(self.kappa());
        if self.dt * diff * 4.0 / h2 > 0.9 {
            return bad("time step violates the explicit diffusion bound dt < h²/(4ν)");
        }
        if self.initial == InitialCondition::TaylorGreen && self.boundary != VerticalBoundary::Periodic {
            return bad("Taylor–Green needs periodic boundaries");
        }
        Ok(())
    }
}

struct Poisson {
    nx: usize,
    nz: usize,
    dz: f64,
    periodic_z: bool,
    fx: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    fz: Arc<dyn Fft<f64>>,
    iz: Arc<dyn Fft<f64>>,
    lam_x: Vec<f64>,
    lam_z: Vec<f64>,
    buf: Vec<Complex<f64>>,
    col: Vec<Complex<f64>>,
    cp: Vec<f64>,
}

impl Poisson {
    fn new(nx: usize, nz: usize, dx: f64, dz: f64, periodic_z: bool) -> Self {
        let mut planner = FftPlanner::new();
        let eig = |n: usize, h: f64| -> Vec<f64> {
            (0..n)
                .map(|m| (2.0 * (2.0 * std::f64::consts::PI * m as f64 / n as f64).cos() - 2.0) / (h * h))
                .collect()
        };
        Poisson {
            nx,
            nz,
            dz,
            periodic_z,
            fx: planner.plan_fft_forward(nx),
            ix: planner.plan_fft_inverse(nx),
            fz: planner.plan_fft_forward(nz),
            iz: planner.plan_fft_inverse(nz),
            lam_x: eig(nx, dx),
            lam_z: eig(nz, dz),
            buf: vec![Complex::new(0.0, 0.0); nx * nz],
            col: vec![Complex::new(0.0, 0.0); nz],
            cp: vec![0.0; nz],
        }
    }

    /// Solves `L φ = rhs` (rhs and φ at cell centres, x fastest). The
    /// constant mode is fixed by `φ = 0` in the first cell row of the
    /// mean mode.
    fn solve(&mut self, rhs: &[f64], phi: &mut [f64]) {
        let (nx, nz) = (self.nx, self.nz);
        for (b, &r) in self.buf.iter_mut().zip(rhs) {
            *b = Complex::new(r, 0.0);
        }
        for row in self.buf.chunks_exact_mut(nx) {
            self.fx.process(row);
        }
        let idz2 = 1.0 / (self.dz * self.dz);
        for m in 0..nx {
            for k in 0..nz {
                self.col[k] = self.buf[k * nx + m];
            }
            if self.periodic_z {
                self.fz.process(&mut self.col);
                for n in 0..nz {
                    let l = self.lam_x[m] + self.lam_z[n];
                    self.col[n] = if m == 0 && n == 0 { Complex::new(0.0, 0.0) } else { self.col[n] / l };
                }
                self.iz.process(&mut self.col);
                let s = 1.0 / nz as f64;
                self.col.iter_mut().for_each(|c| *c *= s);
            } else {
                // Thomas algorithm, real tridiagonal, Neumann ends.
                let lam = self.lam_x[m];
                let pin = m == 0;
                let coef = |k: usize| -> (f64, f64, f64) {
                    if pin && k == 0 {
                        return (0.0, 1.0, 0.0);
                    }
                    let a = if k > 0 { idz2 } else { 0.0 };
                    let c = if k + 1 < nz { idz2 } else { 0.0 };
                    (a, lam - a - c, c)
                };
                if pin {
                    self.col[0] = Complex::new(0.0, 0.0);
                }
                let (_, b0, c0) = coef(0);
                self.cp[0] = c0 / b0;
                self.col[0] /= b0;
                for k in 1..nz {
                    let (a, b, c) = coef(k);
                    let den = b - a * self.cp[k - 1];
                    self.cp[k] = c / den;
                    let prev = self.col[k - 1];
                    self.col[k] = (self.col[k] - prev * a) / den;
                }
                for k in (0..nz - 1).rev() {
                    let next = self.col[k + 1];
                    self.col[k] -= next * self.cp[k];
                }
            }
            for k in 0..nz {
                self.buf[k * nx + m] = self.col[k];
            }
        }
        let s = 1.0 / nx as f64;
        for (row, out) in self.buf.chunks_exact_mut(nx).zip(phi.chunks_exact_mut(nx)) {
            self.ix.process(row);
            for (o, c) in out.iter_mut().zip(row.iter()) {
                *o = c.re * s;
            }
        }
    }
}

/// Statistics gathered during a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub steps: u64,
    pub t_final: f64,
    /// Largest discrete divergence after any projection.
    pub max_divergence: f64,
    pub max_cfl: f64,
    pub t_min: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub db: SnapshotDb,
    pub stats: SolverStats,
}

/// Time-stepping state of the staggered solver.
pub struct Solver {
    cfg: SolverConfig,
    nx: usize,
    nz: usize,
    /// Number of w-face rows: `nz + 1` with walls, `nz` periodic.
    nw: usize,
    dx: f64,
    dz: f64,
    walls: bool,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub temp: Vec<f64>,
    poisson: Poisson,
    time: f64,
    step: u64,
    stats: SolverStats,
    scratch_div: Vec<f64>,
    scratch_phi: Vec<f64>,
}

const T_BOTTOM: f64 = 1.0;
const T_TOP: f64 = 0.0;

fn van_leer(r: f64) -> f64 {
    (r + r.abs()) / (1.0 + r.abs())
}

/// Limited face value for flow from `up` towards `down`, with `upup`
/// behind `up`.
fn limited(upup: f64, up: f64, down: f64) -> f64 {
    let d = down - up;
    if d.abs() < 1e-300 {
        return up;
    }
    up + 0.5 * van_leer((up - upup) / d) * d
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let (nx, nz) = (cfg.nx, cfg.nz);
        let walls = cfg.boundary == VerticalBoundary::Walls;
        let nw = if walls { nz + 1 } else { nz };
        let dx = cfg.lx / nx as f64;
        let dz = cfg.lz / nz as f64;
        let mut s = Solver {
            nx,
            nz,
            nw,
            dx,
            dz,
            walls,
            u: vec![0.0; nx * nz],
            w: vec![0.0; nx * nw],
            temp: vec![0.0; nx * nz],
            poisson: Poisson::new(nx, nz, dx, dz, !walls),
            time: 0.0,
            step: 0,
            stats: SolverStats::default(),
            scratch_div: vec![0.0; nx * nz],
            scratch_phi: vec![0.0; nx * nz],
            cfg,
        };
        s.initialise();
        Ok(s)
    }

    fn initialise(&mut self) {
        let (nx, nz) = (self.nx, self.nz);
        let tau = 2.0 * std::f64::consts::PI;
        match self.cfg.initial {
            InitialCondition::Conductive { noise } => {
                let mut rng = crate::seed::rng(self.cfg.seed, &[0x52_42]);
                for k in 0..nz {
                    let z = (k as f64 + 0.5) * self.dz / self.cfg.lz;
                    for i in 0..nx {
                        let n = noise * rng.gen_range(-1.0..1.0);
                        self.temp[k * nx + i] = (1.0 - z + n).clamp(0.0, 1.0);
                    }
                }
            }
            InitialCondition::TaylorGreen => {
                for k in 0..nz {
                    for i in 0..nx {
                        let (xf, zc) = (i as f64 * self.dx, (k as f64 + 0.5) * self.dz);
                        self.u[k * nx + i] = (tau * xf).sin() * (tau * zc).cos();
                        let (xc, zf) = ((i as f64 + 0.5) * self.dx, k as f64 * self.dz);
                        self.w[k * nx + i] = -(tau * xc).cos() * (tau * zf).sin();
                    }
                }
            }
        }
        let (mut u, mut w) = (std::mem::take(&mut self.u), std::mem::take(&mut self.w));
        self.project(&mut u, &mut w);
        self.u = u;
        self.w = w;
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn stats(&self) -> &SolverStats {
        &self.stats
    }

    fn xm(&self, i: usize) -> usize {
        (i + self.nx - 1) % self.nx
    }

    fn xp(&self, i: usize) -> usize {
        (i + 1) % self.nx
    }

    /// Discrete divergence at cell centres.
    pub fn divergence(&self, u: &[f64], w: &[f64], out: &mut [f64]) {
        let (nx, nz) = (self.nx, self.nz);
        for k in 0..nz {
            let kp = if self.walls { k + 1 } else { (k + 1) % nz };
            for i in 0..nx {
                out[k * nx + i] = (u[k * nx + self.xp(i)] - u[k * nx + i]) / self.dx
                    + (w[kp * nx + i] - w[k * nx + i]) / self.dz;
            }
        }
    }

    pub fn max_divergence(&self) -> f64 {
        let mut d = vec![0.0; self.nx * self.nz];
        self.divergence(&self.u, &self.w, &mut d);
        d.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Removes the gradient part of `(u, w)`; returns the potential `φ`
    /// with `(u, w) ← (u, w) − ∇φ`, mean-free.
    fn project(&mut self, u: &mut [f64], w: &mut [f64]) -> Vec<f64> {
        let (nx, nz) = (self.nx, self.nz);
        let mut div = std::mem::take(&mut self.scratch_div);
        let mut phi = std::mem::take(&mut self.scratch_phi);
        self.divergence(u, w, &mut div);
        self.poisson.solve(&div, &mut phi);
        for k in 0..nz {
            for i in 0..nx {
                u[k * nx + i] -= (phi[k * nx + i] - phi[k * nx + self.xm(i)]) / self.dx;
            }
        }
        let krange = if self.walls { 1..nz } else { 0..nz };
        for k in krange {
            let km = if k == 0 { nz - 1 } else { k - 1 };
            for i in 0..nx {
                w[k * nx + i] -= (phi[k * nx + i] - phi[km * nx + i]) / self.dz;
            }
        }
        self.divergence(u, w, &mut div);
        let m = div.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        self.stats.max_divergence = self.stats.max_divergence.max(m);
        let mean = phi.iter().sum::<f64>() / phi.len() as f64;
        let out: Vec<f64> = phi.iter().map(|p| p - mean).collect();
        self.scratch_div = div;
        self.scratch_phi = phi;
        out
    }

    /// Right-hand sides of momentum (without pressure) and temperature.
    fn rhs(&self, u: &[f64], w: &[f64], t: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (nx, nz, nw) = (self.nx, self.nz, self.nw);
        let (dx, dz) = (self.dx, self.dz);
        let nu = self.cfg.nu();
        let kappa = self.cfg.kappa();
        let pr = self.cfg.pr;
        let mut ru = vec![0.0; nx * nz];
        let mut rw = vec![0.0; nx * nw];
        let mut rt = vec![0.0; nx * nz];

        // u at (i, k) with ghost rows mirrored for no-slip walls.
        let u_at = |i: usize, k: isize| -> f64 {
            if k < 0 {
                if self.walls {
                    -u[i]
                } else {
                    u[(nz - 1) * nx + i]
                }
            } else if k as usize >= nz {
                if self.walls {
                    -u[(nz - 1) * nx + i]
                } else {
                    u[i]
                }
            } else {
                u[k as usize * nx + i]
            }
        };
        let w_at = |i: usize, k: isize| -> f64 {
            if self.walls {
                if k <= 0 || k as usize >= nz {
                    0.0
                } else {
                    w[k as usize * nx + i]
                }
            } else {
                w[k.rem_euclid(nz as isize) as usize * nx + i]
            }
        };

        for k in 0..nz {
            let ki = k as isize;
            for i in 0..nx {
                let (im, ip) = (self.xm(i), self.xp(i));
                let uc = u[k * nx + i];
                let wbar = 0.25 * (w_at(i, ki) + w_at(i, ki + 1) + w_at(im, ki) + w_at(im, ki + 1));
                let dudx = (u[k * nx + ip] - u[k * nx + im]) / (2.0 * dx);
                let dudz = (u_at(i, ki + 1) - u_at(i, ki - 1)) / (2.0 * dz);
                let lap = (u[k * nx + ip] - 2.0 * uc + u[k * nx + im]) / (dx * dx)
                    + (u_at(i, ki + 1) - 2.0 * uc + u_at(i, ki - 1)) / (dz * dz);
                ru[k * nx + i] = -(uc * dudx + wbar * dudz) + nu * lap;
            }
        }

        let krange = if self.walls { 1..nz } else { 0..nz };
        for k in krange {
            let ki = k as isize;
            let km = (ki - 1).rem_euclid(nz as isize) as usize;
            for i in 0..nx {
                let (im, ip) = (self.xm(i), self.xp(i));
                let wc = w[k * nx + i];
                let ubar = 0.25 * (u_at(i, ki) + u_at(ip, ki) + u_at(i, ki - 1) + u_at(ip, ki - 1));
                let dwdx = (w[k * nx + ip] - w[k * nx + im]) / (2.0 * dx);
                let dwdz = (w_at(i, ki + 1) - w_at(i, ki - 1)) / (2.0 * dz);
                let lap = (w[k * nx + ip] - 2.0 * wc + w[k * nx + im]) / (dx * dx)
                    + (w_at(i, ki + 1) - 2.0 * wc + w_at(i, ki - 1)) / (dz * dz);
                let mut r = -(ubar * dwdx + wc * dwdz) + nu * lap;
                if self.cfg.buoyancy {
                    r += pr * 0.5 * (t[k * nx + i] + t[km * nx + i]);
                }
                rw[k * nx + i] = r;
            }
        }

        // Temperature with ghost cells reflecting the plate values.
        let t_at = |i: usize, k: isize| -> f64 {
            if self.walls {
                if k < 0 {
                    let inner = t[((-k - 1) as usize).min(nz - 1) * nx + i];
                    2.0 * T_BOTTOM - inner
                } else if k as usize >= nz {
                    let inner = t[(2 * nz - 1 - k as usize).min(nz - 1) * nx + i];
                    2.0 * T_TOP - inner
                } else {
                    t[k as usize * nx + i]
                }
            } else {
                t[k.rem_euclid(nz as isize) as usize * nx + i]
            }
        };
        // x-face fluxes: face i sits between cells i-1 and i.
        let mut fx = vec![0.0; nx * nz];
        for k in 0..nz {
            for i in 0..nx {
                let (im, ip) = (self.xm(i), self.xp(i));
                let imm = self.xm(im);
                let vel = u[k * nx + i];
                let tf = if vel >= 0.0 {
                    limited(t[k * nx + imm], t[k * nx + im], t[k * nx + i])
                } else {
                    limited(t[k * nx + ip], t[k * nx + i], t[k * nx + im])
                };
                fx[k * nx + i] = vel * tf - kappa * (t[k * nx + i] - t[k * nx + im]) / dx;
            }
        }
        // z-face fluxes: face k sits between cells k-1 and k.
        let mut fz = vec![0.0; nx * nw];
        for k in 0..nw {
            let ki = k as isize;
            for i in 0..nx {
                let vel = w_at(i, ki);
                let adv = if vel == 0.0 {
                    0.0
                } else if vel > 0.0 {
                    vel * limited(t_at(i, ki - 2), t_at(i, ki - 1), t_at(i, ki))
                } else {
                    vel * limited(t_at(i, ki + 1), t_at(i, ki), t_at(i, ki - 1))
                };
                fz[k * nx + i] = adv - kappa * (t_at(i, ki) - t_at(i, ki - 1)) / dz;
            }
        }
        for k in 0..nz {
            let kp = if self.walls { k + 1 } else { (k + 1) % nz };
            for i in 0..nx {
                let ip = self.xp(i);
                rt[k * nx + i] =
                    -(fx[k * nx + ip] - fx[k * nx + i]) / dx - (fz[kp * nx + i] - fz[k * nx + i]) / dz;
            }
        }
        (ru, rw, rt)
    }

    fn cfl(&self) -> f64 {
        let umax = self.u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let wmax = self.w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        self.cfg.dt * (umax / self.dx + wmax / self.dz)
    }

    /// Advances one time step.
    pub fn advance(&mut self) -> Result<()> {
        let dt = self.cfg.dt;
        let (ru0, rw0, rt0) = self.rhs(&self.u, &self.w, &self.temp);
        let mut u1: Vec<f64> = self.u.iter().zip(&ru0).map(|(a, r)| a + dt * r).collect();
        let mut w1: Vec<f64> = self.w.iter().zip(&rw0).map(|(a, r)| a + dt * r).collect();
        let t1: Vec<f64> = self.temp.iter().zip(&rt0).map(|(a, r)| a + dt * r).collect();
        self.project(&mut u1, &mut w1);
        let (ru1, rw1, rt1) = self.rhs(&u1, &w1, &t1);
        let mut u2: Vec<f64> = (0..u1.len()).map(|j| 0.5 * self.u[j] + 0.5 * (u1[j] + dt * ru1[j])).collect();
        let mut w2: Vec<f64> = (0..w1.len()).map(|j| 0.5 * self.w[j] + 0.5 * (w1[j] + dt * rw1[j])).collect();
        let t2: Vec<f64> = (0..t1.len()).map(|j| 0.5 * self.temp[j] + 0.5 * (t1[j] + dt * rt1[j])).collect();
        self.project(&mut u2, &mut w2);
        self.u = u2;
        self.w = w2;
        self.temp = t2;
        self.step += 1;
        self.time = self.step as f64 * dt;

        let cfl = self.cfl();
        self.stats.max_cfl = self.stats.max_cfl.max(cfl);
        let finite = self.u.iter().chain(&self.w).chain(&self.temp).all(|x| x.is_finite());
        if !finite || cfl > 1.0 {
            return Err(SolverError::Unstable {
                step: self.step,
                t: self.time,
                reason: if finite {
                    format!("CFL number {cfl:.3} exceeds 1")
                } else {
                    "non-finite field".into()
                },
            });
        }
        Ok(())
    }

    /// Kinetic energy `½∫|v|²` on the staggered grid.
    pub fn kinetic_energy(&self) -> f64 {
        let cell = self.dx * self.dz;
        0.5 * cell * (self.u.iter().map(|x| x * x).sum::<f64>() + self.w.iter().map(|x| x * x).sum::<f64>())
    }

    /// Pressure consistent with the current state: the potential removed
    /// when projecting the momentum right-hand side.
    pub fn pressure(&mut self) -> Vec<f64> {
        let (mut ru, mut rw, _) = self.rhs(&self.u, &self.w, &self.temp);
        self.project(&mut ru, &mut rw)
    }

    /// Cell-centred `(u, w, p, T)`.
    pub fn cell_fields(&mut self) -> [Vec<f64>; 4] {
        let (nx, nz) = (self.nx, self.nz);
        let mut uc = vec![0.0; nx * nz];
        let mut wc = vec![0.0; nx * nz];
        for k in 0..nz {
            let kp = if self.walls { k + 1 } else { (k + 1) % nz };
            for i in 0..nx {
                uc[k * nx + i] = 0.5 * (self.u[k * nx + i] + self.u[k * nx + self.xp(i)]);
                wc[k * nx + i] = 0.5 * (self.w[k * nx + i] + self.w[kp * nx + i]);
            }
        }
        let p = self.pressure();
        [uc, wc, p, self.temp.clone()]
    }

    /// Cell-centre grid axes.
    pub fn axes(&self) -> Vec<Axis> {
        vec![
            Axis::new(0.5 * self.dx, self.cfg.lx - 0.5 * self.dx, self.nx),
            Axis::new(0.5 * self.dz, self.cfg.lz - 0.5 * self.dz, self.nz),
        ]
    }
}

/// Runs the configured simulation and collects the snapshot database.
pub fn solve_boussinesq_2d(cfg: &SolverConfig) -> Result<SolverOutput> {
    let mut s = Solver::new(cfg.clone())?;
    let spin = (cfg.spinup / cfg.dt).round() as u64;
    let every = (cfg.snapshot_dt / cfg.dt).round() as u64;
    for _ in 0..spin {
        s.advance()?;
    }
    let axes = s.axes();
    let times: Vec<f64> = (0..cfg.n_snapshots).map(|j| cfg.spinup + j as f64 * cfg.snapshot_dt).collect();
    let mut db = SnapshotDb::zeros(SpatialDim::Two, axes, times, cfg.ra, cfg.pr);
    db.provenance = format!(
        "staggered-2d nx={} nz={} dt={} Ra={} Pr={} seed={}",
        cfg.nx, cfg.nz, cfg.dt, cfg.ra, cfg.pr, cfg.seed
    );
    let g = cfg.nx * cfg.nz;
    let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..cfg.n_snapshots {
        if j > 0 {
            for _ in 0..every {
                s.advance()?;
            }
        }
        let fields = s.cell_fields();
        for (kind, data) in
            [FieldKind::Vx, FieldKind::Vz, FieldKind::P, FieldKind::T].into_iter().zip(&fields)
        {
            db.field_mut(kind).expect("stored")[j * g..(j + 1) * g].copy_from_slice(data);
        }
        for &t in &fields[3] {
            tmin = tmin.min(t);
            tmax = tmax.max(t);
        }
    }
    let mut stats = s.stats().clone();
    stats.steps = s.steps();
    stats.t_final = s.time();
    stats.t_min = tmin;
    stats.t_max = tmax;
    Ok(SolverOutput { db, stats })
}
