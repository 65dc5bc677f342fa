//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion outside `KNOWN_RED` fails.
//!
//! ```text
//! cargo test --release -p plumenet-cli --test acceptance            # all
//! cargo test --release -p plumenet-cli --test acceptance -- padding # by name
//! ```
//!
//! Thresholds are the constants below; every experiment is seeded.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use ndarray::{concatenate, Array2, Axis as NdAxis};
use plumenet::autodiff::{Bindings, Expr, Graph, InputVar};
use plumenet::dataset::{
    all_records, Axis, Face, LabelSet, LabelSpec, PaddingMode, PaddingSpec, Placement, Region, ResidualSpec,
    SnapshotDb, TrainingSet,
};
use plumenet::metrics::{aggregate, center_per_time, field_stats, mor_baseline, FieldStats};
use plumenet::network::{xavier_init, Architecture, InputScaling, NetworkParams};
use plumenet::physics::{build_residuals, Coords, FluidParams, Forcing, SpatialDim};
use plumenet::refsolver::{
    solve_boussinesq_2d, ManufacturedParams, ManufacturedSolution, Solver, SolverConfig,
};
use plumenet::training::{LossConfig, LossHistory, Schedule, Session, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AUTODIFF_REL_TOL: f64 = 1e-6;
const AUTODIFF_MIN_CASES: usize = 100;
const AUTODIFF_MAX_SECS: f64 = 60.0;
const RESIDUAL_TOL: f64 = 1e-10;
const RESIDUAL_POINTS: usize = 1000;
const REFERENCE_WEIGHTS: usize = 813_000;
const REFERENCE_DB_SIZES: [(usize, usize); 3] = [(100, 2_568_800), (50, 1_284_400), (25, 642_200)];
const METRICS_TOL: f64 = 1e-12;
const REFERENCE_ARMSE: f64 = 2.255e-3;
const HIDDEN_MAX_EPOCHS: usize = 200;
const HIDDEN_MIN_VELOCITY_R2: f64 = 0.95;
const HIDDEN_MAX_PRESSURE_L2: f64 = 10.0;
const HIDDEN_MAX_SECS: f64 = 30.0 * 60.0;
const PADDING_SEEDS: u64 = 5;
const RELAX_LAMBDA: f64 = 0.1;
/// Minimum gain in velocity R² of the PINN over the linear baseline that
/// counts as "dramatically higher".
const ORDERING_MIN_R2_GAIN: f64 = 0.2;
const TAYLOR_GREEN_TOL: f64 = 0.01;
const SOLVER_DIV_TOL: f64 = 1e-10;
const SOLVER_ORDER: (f64, f64) = (1.8, 2.3);

/// Criteria that do not hold at desk scale. They still run and print FAIL,
/// but do not fail the target; see the README.
const KNOWN_RED: &[&str] = &["padding"];

type Check = fn() -> Result<(bool, String), String>;

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, Check); 10] = [
        ("autodiff", autodiff),
        ("residual-oracle", residual_oracle),
        ("parameter-counting", parameter_counting),
        ("metrics-oracle", metrics_oracle),
        ("hidden-state", hidden_state),
        ("padding", padding),
        ("relaxation", relaxation),
        ("baseline-ordering", baseline_ordering),
        ("solver", solver),
        ("determinism", determinism),
    ];
    let (mut failed, mut known, mut ran) = (0, 0, 0);
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let secs = t0.elapsed().as_secs_f64();
        let expected = KNOWN_RED.contains(&name);
        let tag = match (pass, expected) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        if !pass {
            if expected {
                known += 1;
            } else {
                failed += 1;
            }
        }
        println!("{tag} {name}: {detail} [{secs:.1} s]");
    }
    println!("acceptance: {} of {ran} criteria passed, {known} known failure(s)", ran - failed - known);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- autodiff

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

struct Net {
    g: Graph,
    net: NetworkParams,
    vars: Vec<InputVar>,
    out: Expr,
    params: Vec<Arc<Array2<f64>>>,
    points: Array2<f64>,
}

impl Net {
    fn new(seed: u64) -> Result<Net, String> {
        let arch = Architecture::mlp(3, 20, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scaling = InputScaling {
            ranges: (0..3)
                .map(|_| {
                    let lo = rng.gen_range(-1.0..0.5);
                    (lo, lo + rng.gen_range(0.5..2.0))
                })
                .collect(),
        };
        let mut g = Graph::new();
        let net = NetworkParams::declare(&mut g, &arch);
        let vars =
            ["x", "z", "t"].iter().map(|n| g.input(n, 1)).collect::<Result<Vec<_>, _>>().map_err(err)?;
        let out = net.forward(&mut g, &arch, &scaling, &vars).map_err(err)?;
        let mut params = xavier_init(&arch, seed).arrays;
        for p in params.iter_mut().skip(1).step_by(2) {
            p.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
        }
        Ok(Net {
            g,
            net,
            vars,
            out,
            params: params.into_iter().map(Arc::new).collect(),
            points: Array2::from_shape_fn((3, 3), |_| rng.gen_range(-1.0..1.5)),
        })
    }

    fn bindings(&self, points: &Array2<f64>, params: &[Arc<Array2<f64>>]) -> Bindings {
        let mut b = Bindings::new();
        self.net.bind(&mut b, params);
        for (k, v) in self.vars.iter().enumerate() {
            b.bind_input(v.id, points.column(k).to_owned().insert_axis(NdAxis(1)));
        }
        b
    }

    fn eval(&self, e: Expr, points: &Array2<f64>) -> Result<Array2<f64>, String> {
        self.g.eval(e, &self.bindings(points, &self.params)).map_err(err)
    }

    fn shifted(&self, var: usize, h: f64) -> Array2<f64> {
        let mut p = self.points.clone();
        p.column_mut(var).mapv_inplace(|x| x + h);
        p
    }
}

fn autodiff() -> Result<(bool, String), String> {
    let t0 = Instant::now();
    let (mut input_cases, mut param_cases) = (0, 0);
    let (mut worst_in, mut worst_param) = (0.0f64, 0.0f64);
    for seed in 0..40 {
        let mut s = Net::new(seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for _ in 0..3 {
            let (k, i) = (rng.gen_range(0..5), rng.gen_range(0..3));
            let col = s.g.column(s.out, k);
            let d1 = s.g.d_input(col, s.vars[i], 1).map_err(err)?;
            let d2 = s.g.d_input(col, s.vars[i], 2).map_err(err)?;
            let h = 1e-5;
            let (ad1, ad2) = (s.eval(d1, &s.points)?, s.eval(d2, &s.points)?);
            let (fp, fm) = (s.eval(col, &s.shifted(i, h))?, s.eval(col, &s.shifted(i, -h))?);
            let (gp, gm) = (s.eval(d1, &s.shifted(i, h))?, s.eval(d1, &s.shifted(i, -h))?);
            for r in 0..s.points.nrows() {
                worst_in = worst_in
                    .max(rel_err(ad1[[r, 0]], (fp[[r, 0]] - fm[[r, 0]]) / (2.0 * h)))
                    .max(rel_err(ad2[[r, 0]], (gp[[r, 0]] - gm[[r, 0]]) / (2.0 * h)));
            }
            input_cases += 1;
        }
    }
    for seed in 0..25 {
        let mut s = Net::new(100 + seed)?;
        let loss = {
            let g = &mut s.g;
            let u = g.column(s.out, 0);
            let w = g.column(s.out, 1);
            let (x, z, t) = (s.vars[0], s.vars[1], s.vars[2]);
            let ut = g.d_input(u, t, 1).map_err(err)?;
            let ux = g.d_input(u, x, 1).map_err(err)?;
            let uxx = g.d_input(u, x, 2).map_err(err)?;
            let uzz = g.d_input(u, z, 2).map_err(err)?;
            let wz = g.d_input(w, z, 1).map_err(err)?;
            let adv = g.mul(u, ux);
            let lap = g.add(uxx, uzz);
            let diff = g.scale(0.3, lap);
            let a = g.add(ut, adv);
            let r1 = g.sub(a, diff);
            let r2 = g.add(ux, wz);
            let s1 = g.square(r1);
            let s2 = g.square(r2);
            let sum = g.add(s1, s2);
            let m = g.mean_rows(sum);
            g.sum_all(m)
        };
        let grads = s.g.grad_params(loss, &s.bindings(&s.points, &s.params)).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let pi = rng.gen_range(0..s.params.len());
            let (nr, nc) = s.params[pi].dim();
            let (r, c) = (rng.gen_range(0..nr), rng.gen_range(0..nc));
            let at = |delta: f64| -> Result<f64, String> {
                let mut ps = s.params.clone();
                Arc::make_mut(&mut ps[pi])[[r, c]] += delta;
                s.g.eval_scalar(loss, &s.bindings(&s.points, &ps)).map_err(err)
            };
            let h = 1e-6;
            let fd = (at(h)? - at(-h)?) / (2.0 * h);
            worst_param = worst_param.max(rel_err(grads.0[pi][[r, c]], fd));
            param_cases += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_in < AUTODIFF_REL_TOL
        && worst_param < AUTODIFF_REL_TOL
        && input_cases >= AUTODIFF_MIN_CASES
        && param_cases >= AUTODIFF_MIN_CASES
        && secs < AUTODIFF_MAX_SECS;
    Ok((
        pass,
        format!(
            "input derivatives {input_cases} cases worst {worst_in:.1e}, parameter gradients {param_cases} cases worst {worst_param:.1e} (< {AUTODIFF_REL_TOL:.0e}), {secs:.1} s"
        ),
    ))
}

// ---------------------------------------------------------- residual oracle

fn residual_oracle() -> Result<(bool, String), String> {
    let mut worst = 0.0f64;
    let cases = [(SpatialDim::Two, 1e4, 1.0), (SpatialDim::Two, 1e6, 4.3), (SpatialDim::Three, 1e5, 0.7)];
    for (k, (dim, ra, pr)) in cases.into_iter().enumerate() {
        let fp = FluidParams::new(ra, pr, dim).map_err(err)?;
        let ms = match dim {
            SpatialDim::Two => ManufacturedSolution::default_2d(fp, ManufacturedParams::default()),
            SpatialDim::Three => ManufacturedSolution::default_3d(fp, ManufacturedParams::default()),
        };
        let mut g = Graph::new();
        let coords = Coords::declare(&mut g, dim, "r_").map_err(err)?;
        let fields = ms.fields_expr(&mut g, &coords);
        let set = build_residuals(&mut g, &fields, &coords, &fp, &ms.clone().into_forcing()).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let d = dim.n();
        let pts = Array2::from_shape_fn((RESIDUAL_POINTS, d + 1), |(_, j)| {
            if j < d {
                rng.gen::<f64>()
            } else {
                2.0 * rng.gen::<f64>()
            }
        });
        let mut b = Bindings::new();
        coords.bind(&mut b, &pts);
        set.bind_forcing(&mut b, &pts);
        for &(_, e) in &set.residuals {
            let v = g.eval(e, &b).map_err(err)?;
            worst = v.iter().fold(worst, |m, x| m.max(x.abs()));
        }
    }
    Ok((
        worst < RESIDUAL_TOL,
        format!("max |residual| {worst:.1e} over {RESIDUAL_POINTS} points × 3 cases (< {RESIDUAL_TOL:.0e})"),
    ))
}

// ------------------------------------------------------- parameter counting

fn parameter_counting() -> Result<(bool, String), String> {
    let (weights, total) = Architecture::mlp(4, 300, 10, 6).param_count();
    let mut ok = weights == REFERENCE_WEIGHTS;
    let mut sizes = Vec::new();
    for (snaps, want) in REFERENCE_DB_SIZES {
        let axes = [26, 26, 38].iter().map(|&n| Axis::new(0.0, 1.0, n)).collect();
        let times = (0..snaps).map(|i| i as f64).collect();
        let got = SnapshotDb::zeros(SpatialDim::Three, axes, times, 2e7, 0.7).size();
        ok &= got == want;
        sizes.push(got.to_string());
    }
    Ok((
        ok,
        format!("(4, 300×10, 6): {weights} weights ({total} with biases); databases {}", sizes.join(" / ")),
    ))
}

// ----------------------------------------------------------- metrics oracle

fn brute_stats(p: &[f64], r: &[f64]) -> [f64; 5] {
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mr = r.iter().sum::<f64>() / n;
    let (mut se, mut ae, mut cov, mut vp, mut vr) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..p.len() {
        se += (p[i] - r[i]).powi(2);
        ae += (p[i] - r[i]).abs();
        cov += (p[i] - mp) * (r[i] - mr);
        vp += (p[i] - mp).powi(2);
        vr += (r[i] - mr).powi(2);
    }
    [
        (se / n).sqrt(),
        ae / n,
        cov / (vp * vr).sqrt(),
        1.0 - se / vr,
        ((vp / n).sqrt() - (vr / n).sqrt()).abs() / (vr / n).sqrt() * 100.0,
    ]
}

fn round_sig(x: f64, digits: i32) -> f64 {
    let e = x.abs().log10().floor() as i32;
    let s = 10f64.powi(digits - 1 - e);
    (x * s).round() / s
}

fn metrics_oracle() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let trials = 500;
    for _ in 0..trials {
        let n = rng.gen_range(2..400);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let noise = rng.gen_range(0.001..2.0);
        let p: Vec<f64> = r.iter().map(|x| x + noise * rng.gen_range(-1.0..1.0)).collect();
        let s = field_stats(&p, &r, false).map_err(err)?;
        let got = [
            s.rmse,
            s.mae,
            s.r_corr.unwrap_or(f64::NAN),
            s.r2.unwrap_or(f64::NAN),
            s.sigma_err.unwrap_or(f64::NAN),
        ];
        for (a, b) in got.iter().zip(brute_stats(&p, &r)) {
            worst = worst.max((a - b).abs() / (1.0 + b.abs()));
        }
    }
    // Per-field RMSE of the reference model: T, vx, vy, vz, p.
    let rmse = [3.336e-3, 1.778e-3, 1.953e-3, 3.316e-3, 8.904e-4];
    let stats: Vec<FieldStats> = rmse
        .iter()
        .map(|&rmse| FieldStats { rmse, mae: 0.0, mu_err: None, sigma_err: None, r_corr: None, r2: None })
        .collect();
    let a = aggregate(&stats).a_rmse;
    let pass = worst < METRICS_TOL && round_sig(a, 4) == REFERENCE_ARMSE;
    Ok((
        pass,
        format!("{trials} random pairs, worst deviation {worst:.1e} (< {METRICS_TOL:.0e}); reference aRMSE {a:.4e} → {:.3e}", round_sig(a, 4)),
    ))
}

// ------------------------------------------------------------ hidden state

fn lr_scaled(epochs: usize, minibatch: usize, lr_mult: f64) -> Schedule {
    let mut s = Schedule::default().with_total_epochs(epochs);
    s.minibatch = minibatch;
    for c in &mut s.cycles {
        c.lr *= lr_mult;
    }
    s
}

fn train(
    ts: &TrainingSet,
    fp: &FluidParams,
    forcing: &Forcing,
    cfg: &TrainConfig,
) -> Result<Session, String> {
    let mut s = Session::new(ts, fp, forcing, cfg).map_err(err)?;
    s.run(ts, None, |_| {}).map_err(err)?;
    Ok(s)
}

/// Field statistics of columns `cols` of `pred` against `reference`; the
/// pressure column is centred per snapshot first.
fn scores(
    pred: &Array2<f64>,
    reference: &Array2<f64>,
    times: &[f64],
    cols: &[usize],
    p_col: usize,
) -> Result<Vec<FieldStats>, String> {
    cols.iter()
        .map(|&c| {
            let (mut a, mut b) = (pred.column(c).to_vec(), reference.column(c).to_vec());
            if c == p_col {
                a = center_per_time(&a, times).map_err(err)?;
                b = center_per_time(&b, times).map_err(err)?;
            }
            field_stats(&a, &b, false).map_err(err)
        })
        .collect()
}

fn hidden_state() -> Result<(bool, String), String> {
    let t0 = Instant::now();
    let fp = FluidParams::new(1e4, 1.0, SpatialDim::Two).map_err(err)?;
    let ms = ManufacturedSolution::default_2d(fp, ManufacturedParams::default());
    let n = 41;
    let times = Axis::new(0.0, 2.0, n);
    let db = ms.sample_db(vec![Axis::new(0.0, 1.0, n), Axis::new(0.0, 1.0, n)], times.coords());
    // Temperature in the bulk; velocity and temperature on the four walls.
    let labels = LabelSpec {
        bulk_fraction: 0.3,
        boundary_faces: Face::all(SpatialDim::Two).to_vec(),
        boundary_fraction: 1.0,
        ic_fraction: 0.0,
        seed: 1,
    };
    let mut pad = Region::of_db(&db);
    pad.time = Axis::new(-0.3, 2.3, n);
    let residuals = ResidualSpec {
        n_r: 60_000,
        padding: PaddingSpec::new(PaddingMode::Temporal, pad),
        placement: Placement::UniformRandom,
        seed: 2,
    };
    let ts = TrainingSet::build(&db, &labels, &residuals).map_err(err)?;
    let bulk_velocity = (0..ts.labels.len()).filter(|&r| {
        let p = ts.labels.points.row(r);
        ts.labels.mask[[r, 0]] != 0.0 && p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0
    });
    let pressure = (0..ts.labels.len()).filter(|&r| ts.labels.mask[[r, 2]] != 0.0).count();
    if bulk_velocity.count() + pressure > 0 {
        return Err("training set carries interior velocity or pressure labels".into());
    }
    let mut cfg = TrainConfig::new(Architecture::mlp(3, 50, 6, 5), 7);
    cfg.schedule = lr_scaled(HIDDEN_MAX_EPOCHS, 256, 6.0);
    let session = train(&ts, &fp, &ms.clone().into_forcing(), &cfg)?;
    let model = session.model();

    // Held-out: random interior positions at the stored times.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let m = 4000;
    let pts = Array2::from_shape_fn((m, 3), |_| 0.0);
    let mut pts = pts;
    for mut row in pts.rows_mut() {
        row[0] = rng.gen();
        row[1] = rng.gen();
        row[2] = times.coord(rng.gen_range(0..n));
    }
    let reference =
        Array2::from_shape_fn((m, 5), |(i, j)| ms.outputs(pts.row(i).as_slice().expect("row"))[j]);
    let pred = model.predict(&pts);
    let t = pts.column(2).to_vec();
    let st = scores(&pred, &reference, &t, &[0, 1, 3], 2)?;
    let r2 = [st[0].r2.unwrap_or(f64::NAN), st[1].r2.unwrap_or(f64::NAN)];
    let pc = center_per_time(&pred.column(2).to_vec(), &t).map_err(err)?;
    let rc = center_per_time(&reference.column(2).to_vec(), &t).map_err(err)?;
    let p_l2 = plumenet::metrics::relative_l2(&pc, &rc, false).map_err(err)?;
    let identity = (0..m).map(|i| (pred[[i, 3]] + pred[[i, 4]] - 1.0).abs()).fold(0.0, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    let pass = r2.iter().all(|&r| r > HIDDEN_MIN_VELOCITY_R2)
        && p_l2 < HIDDEN_MAX_PRESSURE_L2
        && secs <= HIDDEN_MAX_SECS;
    Ok((
        pass,
        format!(
            "{} labels, {HIDDEN_MAX_EPOCHS} epochs: R² vx {:.4} vz {:.4} (> {HIDDEN_MIN_VELOCITY_R2}), centred pressure L₂ {p_l2:.2}% (< {HIDDEN_MAX_PRESSURE_L2}%), T R² {:.4}, max |T+T̄−1| {identity:.1e}",
            ts.labels.len(),
            r2[0],
            r2[1],
            st[2].r2.unwrap_or(f64::NAN)
        ),
    ))
}

// ----------------------------------------------------------------- padding

fn padding() -> Result<(bool, String), String> {
    let fp = FluidParams::new(1e4, 1.0, SpatialDim::Two).map_err(err)?;
    let ms = ManufacturedSolution::default_2d(fp, ManufacturedParams::default());
    let (ng, nt) = (PAD_GRID, PAD_SNAPSHOTS);
    let db = ms
        .sample_db(vec![Axis::new(0.0, 1.0, ng), Axis::new(0.0, 1.0, ng)], Axis::new(0.0, 2.0, nt).coords());
    let forcing = ms.clone().into_forcing();
    let test = all_records(&db);
    let times = test.points.column(2).to_vec();
    let all: Vec<usize> = (0..test.len()).collect();
    let shell: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| {
            let p = test.points.row(i);
            [p[0], p[1], p[2] / 2.0].iter().any(|&c| !(0.1 + 1e-9..=0.9 - 1e-9).contains(&c))
        })
        .collect();
    let a_rmse = |pred: &Array2<f64>, rows: &[usize]| -> Result<f64, String> {
        let sub = |a: &Array2<f64>| a.select(NdAxis(0), rows);
        let t: Vec<f64> = rows.iter().map(|&i| times[i]).collect();
        Ok(aggregate(&scores(&sub(pred), &sub(&test.values), &t, &[0, 1, 2, 3], 2)?).a_rmse)
    };
    let h = PAD_WIDTH;
    let variants: [(&str, usize); 4] =
        [("none", PAD_NR), ("temporal", PAD_NR), ("spatial", PAD_NR), ("half", PAD_NR / 2)];
    // [variant][seed] = (aRMSE, shell aRMSE)
    let mut res = vec![Vec::new(); variants.len()];
    for seed in 0..PADDING_SEEDS {
        for (v, &(name, n_r)) in variants.iter().enumerate() {
            let mut r = Region::of_db(&db);
            let padding = match name {
                "temporal" => {
                    r.time = Axis::new(-h, 2.0 + h, nt);
                    PaddingSpec::new(PaddingMode::Temporal, r)
                }
                "spatial" => {
                    for a in &mut r.space {
                        *a = Axis::new(-h / 2.0, 1.0 + h / 2.0, ng);
                    }
                    PaddingSpec::new(PaddingMode::Custom, r)
                }
                _ => PaddingSpec::none(),
            };
            let labels = LabelSpec {
                bulk_fraction: 0.3,
                boundary_faces: Face::all(SpatialDim::Two).to_vec(),
                boundary_fraction: 1.0,
                ic_fraction: 0.0,
                seed: 100 + seed,
            };
            let residuals =
                ResidualSpec { n_r, padding, placement: Placement::UniformRandom, seed: 200 + seed };
            let ts = TrainingSet::build(&db, &labels, &residuals).map_err(err)?;
            let mut cfg = TrainConfig::new(Architecture::mlp(3, 32, 4, 5), 300 + seed);
            cfg.schedule = lr_scaled(PAD_EPOCHS, 128, 3.0);
            let pred = train(&ts, &fp, &forcing, &cfg)?.model().predict(&test.points);
            res[v].push((a_rmse(&pred, &all)?, a_rmse(&pred, &shell)?));
        }
    }
    let mean = |v: usize, k: usize| {
        res[v].iter().map(|x| if k == 0 { x.0 } else { x.1 }).sum::<f64>() / PADDING_SEEDS as f64
    };
    let wins = |v: usize| res[v].iter().zip(&res[0]).filter(|(a, b)| a.0 <= b.0).count();
    let majority = PADDING_SEEDS as usize / 2 + 1;
    let mut detail = Vec::new();
    let mut any = false;
    #[allow(clippy::needless_range_loop)]
    for v in 1..=2 {
        let ok = wins(v) >= majority && mean(v, 1) < mean(0, 1) && mean(3, 0) > mean(v, 0);
        any |= ok;
        detail.push(format!(
            "{}: aRMSE {:.3e} (≤ none on {}/{PADDING_SEEDS} seeds), shell {:.3e}",
            variants[v].0,
            mean(v, 0),
            wins(v),
            mean(v, 1)
        ));
    }
    let control = mean(3, 0) > mean(0, 0);
    Ok((
        any && control,
        format!(
            "none: aRMSE {:.3e}, shell {:.3e}; {}; halved N_R: aRMSE {:.3e}",
            mean(0, 0),
            mean(0, 1),
            detail.join("; "),
            mean(3, 0)
        ),
    ))
}

const PAD_GRID: usize = 21;
const PAD_SNAPSHOTS: usize = 11;
const PAD_NR: usize = 1000;
const PAD_EPOCHS: usize = 300;
const PAD_WIDTH: f64 = 0.3;

// ------------------------------------------------------ Rayleigh–Bénard runs

/// Ra = 10⁶ convection, 64², 21 snapshots 0.2 apart after spin-up,
/// restricted to the interior 48² cells.
fn rb_db() -> Result<&'static SnapshotDb, String> {
    static DB: OnceLock<Result<SnapshotDb, String>> = OnceLock::new();
    DB.get_or_init(|| {
        let cfg = SolverConfig {
            spinup: 40.0,
            n_snapshots: 21,
            snapshot_dt: 0.2,
            ..SolverConfig::rayleigh_benard()
        };
        let full = solve_boussinesq_2d(&cfg).map_err(err)?.db;
        full.subset(&[(8, 56), (8, 56)], (0, 21)).map_err(err)
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn rb_trainset(db: &SnapshotDb) -> Result<TrainingSet, String> {
    let labels = LabelSpec {
        bulk_fraction: 0.3,
        boundary_faces: Face::all(SpatialDim::Two).to_vec(),
        boundary_fraction: 1.0,
        ic_fraction: 0.0,
        seed: 1,
    };
    let residuals = ResidualSpec {
        n_r: 15_000,
        padding: PaddingSpec::none(),
        placement: Placement::UniformRandom,
        seed: 2,
    };
    TrainingSet::build(db, &labels, &residuals).map_err(err)
}

fn rb_config(epochs: usize, loss: LossConfig) -> TrainConfig {
    let mut cfg = TrainConfig::new(Architecture::mlp(3, 50, 6, 5), 7);
    cfg.schedule = lr_scaled(epochs, 128, 3.0);
    cfg.loss = loss;
    cfg
}

fn log_variance(h: &LossHistory, cycle: u32) -> (f64, f64) {
    let d: Vec<f64> = h.cycle(cycle).map(|r| r.pde_div).collect();
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let logs: Vec<f64> = d.iter().map(|x| x.log10()).collect();
    (var(&logs), var(&d))
}

fn final_epoch_total(h: &LossHistory) -> f64 {
    let last = h.last().map_or(0, |r| r.epoch);
    let v: Vec<f64> = h.records.iter().filter(|r| r.epoch == last).map(|r| r.total).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn relaxation() -> Result<(bool, String), String> {
    let db = rb_db()?;
    let ts = rb_trainset(db)?;
    let fp = FluidParams::new(db.ra, db.pr, SpatialDim::Two).map_err(err)?;
    let standard = train(&ts, &fp, &Forcing::None, &rb_config(50, LossConfig::standard()))?;
    let relaxed = train(&ts, &fp, &Forcing::None, &rb_config(50, LossConfig::relaxed(RELAX_LAMBDA)))?;
    let (hs, hr) = (standard.history(), relaxed.history());
    if hs.len() != hr.len() {
        return Err("runs differ in iteration count".into());
    }
    let last = hs.last().map_or(0, |r| r.cycle);
    let (ls, rs) = (final_epoch_total(hs), final_epoch_total(hr));
    let (vs, raw_s) = log_variance(hs, last);
    let (vr, raw_r) = log_variance(hr, last);
    Ok((
        rs < ls && vr < vs,
        format!(
            "{} iterations each; final-epoch total loss {rs:.4e} vs standard {ls:.4e}; final-cycle variance of log10 divergence loss {vr:.2e} vs {vs:.2e} (raw variance {raw_r:.1e} vs {raw_s:.1e})",
            hs.len()
        ),
    ))
}

// ------------------------------------------------------- baseline ordering

fn baseline_ordering() -> Result<(bool, String), String> {
    let db = rb_db()?;
    let ts = rb_trainset(db)?;
    let fp = FluidParams::new(db.ra, db.pr, SpatialDim::Two).map_err(err)?;
    let all = all_records(db);
    let test_rows: Vec<usize> = (1..all.len()).step_by(3).collect();
    let train_rows: Vec<usize> = (0..all.len()).step_by(3).collect();
    let test = all.select(&test_rows);
    let times = test.points.column(2).to_vec();

    let pinn = train(&ts, &fp, &Forcing::None, &rb_config(300, LossConfig::standard()))?.model();
    let pinn_stats = scores(&pinn.predict(&test.points), &test.values, &times, &[0, 1, 3], 2)?;

    // Supervised temperature regression on the temperature-only labels.
    let mut t_only = ts.clone();
    let rows: Vec<usize> = (0..ts.labels.len()).filter(|&r| ts.labels.mask[[r, 0]] == 0.0).collect();
    t_only.labels = ts.labels.select(&rows);
    let plain = train(&t_only, &fp, &Forcing::None, &rb_config(300, LossConfig::plain_dnn()))?.model();
    let plain_t = scores(&plain.predict(&test.points), &test.values, &times, &[3], 2)?[0];

    // Linear regression of velocity on (x, z, t, T).
    let design = |ls: &LabelSet| {
        let t = ls.values.column(3).to_owned().insert_axis(NdAxis(1));
        concatenate![NdAxis(1), ls.points, t]
    };
    let tr = all.select(&train_rows);
    let vel = |ls: &LabelSet| ls.values.select(NdAxis(1), &[0, 1]);
    let mor =
        mor_baseline(&design(&tr), &vel(&tr), &design(&test), &vel(&test), &[false, false]).map_err(err)?;

    let r2 = |s: &FieldStats| s.r2.unwrap_or(f64::NAN);
    let gain = [r2(&pinn_stats[0]) - r2(&mor[0]), r2(&pinn_stats[1]) - r2(&mor[1])];
    let pass = plain_t.rmse < pinn_stats[2].rmse && gain.iter().all(|&g| g >= ORDERING_MIN_R2_GAIN);
    Ok((
        pass,
        format!(
            "T RMSE plain {:.3e} < PINN {:.3e}; velocity R² PINN ({:.3}, {:.3}) vs linear ({:.3}, {:.3}), gain ≥ {ORDERING_MIN_R2_GAIN}",
            plain_t.rmse,
            pinn_stats[2].rmse,
            r2(&pinn_stats[0]),
            r2(&pinn_stats[1]),
            r2(&mor[0]),
            r2(&mor[1])
        ),
    ))
}

// ------------------------------------------------------------------ solver

fn taylor_green(n: usize) -> Result<(f64, f64), String> {
    let nu = 0.01;
    let mut s = Solver::new(SolverConfig::taylor_green(n, nu, 0.001)).map_err(err)?;
    let e0 = s.kinetic_energy();
    while s.time() < 1.0 - 1e-9 {
        s.advance().map_err(err)?;
    }
    let exact = (-16.0 * std::f64::consts::PI.powi(2) * nu * s.time()).exp();
    Ok(((s.kinetic_energy() / e0 - exact).abs() / exact, s.stats().max_divergence))
}

fn solver() -> Result<(bool, String), String> {
    let (e16, _) = taylor_green(16)?;
    let (e32, _) = taylor_green(32)?;
    let (e64, div) = taylor_green(64)?;
    let orders = [(e16 / e32).log2(), (e32 / e64).log2()];
    let pass = e64 < TAYLOR_GREEN_TOL
        && div < SOLVER_DIV_TOL
        && orders.iter().all(|o| (SOLVER_ORDER.0..SOLVER_ORDER.1).contains(o));
    Ok((
        pass,
        format!(
            "Taylor–Green energy error {:.2e} at 64² (< {TAYLOR_GREEN_TOL}), max divergence {div:.1e}, observed orders {:.2} {:.2}",
            e64, orders[0], orders[1]
        ),
    ))
}

// ------------------------------------------------------------- determinism

fn plumenet(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_plumenet")).args(args).output().map_err(err)?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Every file of `a` except the run manifest, which carries timestamps.
fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        for entry in std::fs::read_dir(a.join(&rel)).map_err(err)? {
            let entry = entry.map_err(err)?;
            let name = rel.join(entry.file_name());
            if entry.file_type().map_err(err)?.is_dir() {
                stack.push(name);
            } else if entry.file_name() != "run.toml" {
                let (x, y) =
                    (std::fs::read(a.join(&name)).map_err(err)?, std::fs::read(b.join(&name)).map_err(err)?);
                if x != y {
                    return Err(format!("{} differs", name.display()));
                }
                n += 1;
            }
        }
    }
    Ok(n)
}

fn determinism() -> Result<(bool, String), String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let d = dir.path();
    let w = |name: &str, text: String| -> Result<PathBuf, String> {
        let f = d.join(name);
        std::fs::write(&f, text).map_err(err)?;
        Ok(f)
    };
    let gen = w(
        "gen.toml",
        "kind = \"manufactured\"\ndim = 2\nra = 1e4\npr = 1.0\naxes = [{ min = 0.0, max = 1.0, n = 11 }, { min = 0.0, max = 1.0, n = 11 }]\ntimes = { start = 0.0, end = 1.0, n = 6 }\n".into(),
    )?;
    let rb = w(
        "rb.toml",
        "kind = \"rayleigh-benard\"\n[solver]\nnx = 16\nnz = 16\nlx = 1.0\nlz = 1.0\ndt = 0.01\nra = 1e5\npr = 1.0\nboundary = \"walls\"\ninitial = { kind = \"conductive\", noise = 0.01 }\nbuoyancy = true\nspinup = 0.5\nn_snapshots = 4\nsnapshot_dt = 0.05\nseed = 4\n".into(),
    )?;
    let ts = w(
        "ts.toml",
        format!(
            "db = \"{}\"\n[labels]\nbulk_fraction = 0.4\nboundary_faces = [\"XMin\", \"XMax\", \"ZMin\", \"ZMax\"]\nboundary_fraction = 1.0\nic_fraction = 0.0\nseed = 1\n[residuals]\nn_r = 300\nplacement = \"uniform-random\"\nseed = 2\n[residuals.padding]\nmode = \"none\"\n",
            p(&d.join("gen/db.bin"))
        ),
    )?;
    let tr = w(
        "train.toml",
        format!(
            "trainset = \"{}\"\nforcing = {{ kind = \"manufactured\" }}\n[train]\nseed = 3\narch = {{ sizes = [3, 12, 12, 5], activation = \"tanh\" }}\n[train.loss]\nlambda_label = 1.0\ndiv_penalty = {{ kind = \"square\" }}\n[train.loss.weights]\nmx = 1.0\nmy = 0.0\nmz = 1.0\nT = 1.0\nTbar = 1.0\ndiv = 0.1\n[train.schedule]\nminibatch = 64\nbeta1 = 0.9\nbeta2 = 0.999\ndelta = 1e-8\ncycles = [{{ epochs = 6, lr = 1e-2 }}, {{ epochs = 3, lr = 3e-3 }}, {{ epochs = 3, lr = 1e-3 }}]\n",
            p(&d.join("ts/trainset.bin"))
        ),
    )?;
    let ev = w(
        "eval.toml",
        format!(
            "model = \"{}\"\ndb = \"{}\"\ntrainset = \"{}\"\nprobe = [5, 5]\n",
            p(&d.join("train/model.bin")),
            p(&d.join("gen/db.bin")),
            p(&d.join("ts/trainset.bin"))
        ),
    )?;
    let pr = w(
        "predict.toml",
        format!(
            "model = \"{}\"\naxes = [{{ min = 0.0, max = 1.0, n = 15 }}, {{ min = 0.0, max = 1.0, n = 15 }}]\ntimes = {{ start = 0.0, end = 1.0, n = 4 }}\nformat = \"db\"\n",
            p(&d.join("train/model.bin"))
        ),
    )?;
    let rep = w(
        "report.toml",
        format!("histories = [{{ name = \"a\", path = \"{}\" }}]\n", p(&d.join("train/history.csv"))),
    )?;
    let steps = [
        ("gen-data", gen, "gen"),
        ("gen-data", rb, "rb"),
        ("make-trainset", ts, "ts"),
        ("train", tr, "train"),
        ("evaluate", ev, "eval"),
        ("predict", pr, "predict"),
        ("report", rep, "report"),
    ];
    for (cmd, cfg, out) in &steps {
        plumenet(&[cmd, "--config", p(cfg), "--out", p(&d.join(out))])?;
    }
    let mut files = 0;
    for (cmd, _, out) in &steps {
        let again = d.join(format!("{out}_again"));
        plumenet(&[cmd, "--config", p(&d.join(out).join("run.toml")), "--out", p(&again)])?;
        files += compare_dirs(&d.join(out), &again)?;
    }
    Ok((
        true,
        format!("{} commands re-run from their manifests, {files} output files bit-identical", steps.len()),
    ))
}
