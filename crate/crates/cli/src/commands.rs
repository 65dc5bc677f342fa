use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use plumenet::dataset::{FieldKind, PaddingMode, PaddingSpec, Region, SnapshotDb, TrainingSet};
use plumenet::metrics::{
    aggregate, aggregate_csv, center_per_time, field_stats, pdf_estimate, power_spectrum_at, relative_l2,
    stats_csv, temporal_l2_profile,
};
use plumenet::network::Model;
use plumenet::physics::{FluidParams, Forcing, SpatialDim};
use plumenet::refsolver::{solve_boussinesq_2d, ManufacturedSolution};
use plumenet::training::{Checkpoint, LossHistory, Session};

use crate::config::*;
use crate::error::{CliError, Result};
use crate::manifest::{parse, ConfigSource, RunManifest};

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Common {
    pub source: ConfigSource,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl Common {
    fn seed(&self) -> Option<u64> {
        self.seed.or_else(|| self.source.from_manifest.as_ref().and_then(|m| m.seed))
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, &self.source, self.seed())
    }
}

fn dim_of(n: usize) -> Result<SpatialDim> {
    SpatialDim::from_n(n).ok_or_else(|| CliError::Config(format!("dimension must be 2 or 3, got {n}")))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn manufactured(fp: FluidParams, params: plumenet::refsolver::ManufacturedParams) -> ManufacturedSolution {
    match fp.dim {
        SpatialDim::Two => ManufacturedSolution::default_2d(fp, params),
        SpatialDim::Three => ManufacturedSolution::default_3d(fp, params),
    }
}

pub fn gen_data(c: &Common) -> Result<()> {
    let cfg: GenDataConfig = parse(&c.source)?;
    let mut m = c.manifest("gen-data");
    // Everything is computed before the output directory is touched, so a
    // failed run leaves no partial files.
    let db = match cfg {
        GenDataConfig::Manufactured { dim, ra, pr, params, axes, times } => {
            let fp = FluidParams::new(ra, pr, dim_of(dim)?)?;
            if axes.len() != fp.dim.n() {
                return Err(CliError::Config(format!("{} axes for a {dim}-dimensional problem", axes.len())));
            }
            for (i, a) in axes.iter().enumerate() {
                if a.n == 0 || !(a.max > a.min) {
                    return Err(CliError::Config(format!("axis {i} is empty or inverted")));
                }
            }
            if times.n == 0 {
                return Err(CliError::Config("no snapshot times".into()));
            }
            manufactured(fp, params).sample_db(axes, times.times())
        }
        GenDataConfig::RayleighBenard { mut solver } => {
            if let Some(s) = c.seed() {
                solver.seed = s;
            }
            let out = solve_boussinesq_2d(&solver)?;
            eprintln!(
                "solver: {} steps, max divergence {:.2e}, max CFL {:.3}",
                out.stats.steps, out.stats.max_divergence, out.stats.max_cfl
            );
            out.db
        }
    };
    db.validate()?;
    create_out(&c.out)?;
    let path = c.out.join("db.bin");
    db.save(&path)?;
    println!(
        "wrote {} ({} snapshots × {} points)",
        path.display(),
        db.n_snapshots(),
        db.points_per_snapshot()
    );
    m.outputs.push(path_str(&path));
    m.write(&c.out)
}

pub fn make_trainset(c: &Common) -> Result<()> {
    let mut cfg: TrainsetConfig = parse(&c.source)?;
    if let Some(s) = c.seed() {
        cfg.labels.seed = s;
        cfg.residuals.seed = s;
    }
    let mut m = c.manifest("make-trainset");
    let db = SnapshotDb::load(&cfg.db)?;
    m.inputs.push(path_str(&cfg.db));
    if let Some(rdb) = &cfg.residual_db {
        let other = SnapshotDb::load(rdb)?;
        m.inputs.push(path_str(rdb));
        if cfg.residuals.padding.region.is_none() {
            let mode = if cfg.residuals.padding.mode == PaddingMode::None {
                PaddingMode::Custom
            } else {
                cfg.residuals.padding.mode
            };
            cfg.residuals.padding = PaddingSpec::new(mode, Region::of_db(&other));
        }
    }
    let ts = TrainingSet::build(&db, &cfg.labels, &cfg.residuals)?;
    create_out(&c.out)?;
    let path = c.out.join("trainset.bin");
    ts.save(&path)?;
    let ranges = ts.input_ranges();
    println!(
        "wrote {}: N_L = {}, N_R = {}, time range [{}, {}]",
        path.display(),
        ts.labels.len(),
        ts.residuals.nrows(),
        ranges.last().map_or(0.0, |r| r.0),
        ranges.last().map_or(0.0, |r| r.1)
    );
    m.outputs.push(path_str(&path));
    m.write(&c.out)
}

pub fn train(c: &Common, resume: Option<&Path>) -> Result<()> {
    let mut cfg: TrainCmdConfig = parse(&c.source)?;
    if let Some(s) = c.seed() {
        cfg.train.seed = s;
    }
    let resume: Option<PathBuf> = resume
        .map(Path::to_path_buf)
        .or_else(|| c.source.from_manifest.as_ref().and_then(|m| m.resume.as_ref().map(PathBuf::from)));
    let mut m = c.manifest("train");
    m.resume = resume.as_ref().map(|p| path_str(p));
    let ts = TrainingSet::load(&cfg.trainset)?;
    m.inputs.push(path_str(&cfg.trainset));
    let fp = FluidParams::new(ts.manifest.ra, ts.manifest.pr, ts.dim)?;
    let forcing = match cfg.forcing {
        ForcingConfig::None => Forcing::None,
        ForcingConfig::Manufactured { params } => manufactured(fp, params).into_forcing(),
    };
    let mut session = match &resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            m.inputs.push(path_str(p));
            Session::resume(&ts, &fp, &forcing, &cfg.train, ck)?
        }
        None => Session::new(&ts, &fp, &forcing, &cfg.train)?,
    };
    create_out(&c.out)?;
    let ck_dir = c.out.join("checkpoints");
    session.run(&ts, Some(&ck_dir), |s| {
        println!(
            "cycle {} ({} epochs, lr {:.3e}): {} iterations, mean loss {:.4e}, last {:.4e} (label {:.3e}, div {:.3e})",
            s.cycle, s.epochs, s.lr, s.iterations, s.mean_total, s.last.total, s.last.label, s.last.pde_div
        );
    })?;
    let model_path = c.out.join("model.bin");
    session.model().save(&model_path)?;
    let hist_path = c.out.join("history.csv");
    std::fs::write(&hist_path, session.history().to_csv())?;
    m.outputs.push(path_str(&model_path));
    m.outputs.push(path_str(&hist_path));
    m.outputs.push(path_str(&ck_dir));
    m.write(&c.out)
}

fn gauge(values: &[f64], times: &[f64], g: PressureGauge) -> Result<Vec<f64>> {
    Ok(match g {
        PressureGauge::PerSnapshot => center_per_time(values, times)?,
        PressureGauge::Global => {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            values.iter().map(|v| v - mean).collect()
        }
    })
}

fn all_points(db: &SnapshotDb) -> Array2<f64> {
    let d1 = db.dim.n_inputs();
    let mut pts = Array2::zeros((db.size(), d1));
    for flat in 0..db.size() {
        for (j, x) in db.point(flat).into_iter().enumerate() {
            pts[[flat, j]] = x;
        }
    }
    pts
}

pub fn evaluate(c: &Common) -> Result<()> {
    let cfg: EvaluateConfig = parse(&c.source)?;
    let mut m = c.manifest("evaluate");
    let model = Model::load(&cfg.model)?;
    let db = SnapshotDb::load(&cfg.db)?;
    m.inputs.push(path_str(&cfg.model));
    m.inputs.push(path_str(&cfg.db));
    let pts = all_points(&db);
    let out = model.predict(&pts);
    if out.ncols() < db.dim.n_outputs() || pts.ncols() != model.arch.inputs() {
        return Err(CliError::Config("model does not match the database dimension".into()));
    }
    let times: Vec<f64> = pts.column(db.dim.n()).to_vec();

    let mut rows = Vec::new();
    let mut l2 = String::from("field,relative_l2_pct\n");
    let mut pdf = String::from("field,source,bin_center,density\n");
    for &f in FieldKind::stored(db.dim) {
        let col = f.output_column(db.dim);
        let mut pred = out.column(col).to_vec();
        let mut reference = db.field(f).expect("stored field").to_vec();
        if f == FieldKind::P {
            pred = gauge(&pred, &times, cfg.pressure_gauge)?;
            reference = gauge(&reference, &times, cfg.pressure_gauge)?;
        }
        let st = field_stats(&pred, &reference, false)?;
        let _ = writeln!(l2, "{},{:e}", f.tag(), relative_l2(&pred, &reference, false)?);
        for (name, v) in [("pred", &pred), ("ref", &reference)] {
            if let Ok(d) = pdf_estimate(v, cfg.pdf_bins) {
                for (x, y) in d.centers().iter().zip(&d.density) {
                    let _ = writeln!(pdf, "{},{name},{x:e},{y:e}", f.tag());
                }
            }
        }
        rows.push((f.tag().to_string(), st));
    }
    let stats: Vec<_> = rows.iter().map(|r| r.1).collect();
    create_out(&c.out)?;
    let mut write = |name: &str, text: String| -> Result<()> {
        let p = c.out.join(name);
        std::fs::write(&p, text)?;
        m.outputs.push(path_str(&p));
        Ok(())
    };
    write("field_stats.csv", stats_csv(&rows))?;
    write("aggregate.csv", aggregate_csv(&[("model".into(), aggregate(&stats))]))?;
    write("relative_l2.csv", l2)?;
    write("pdf.csv", pdf)?;

    // Per-snapshot errors, on the database grid.
    let pred_db =
        SnapshotDb::from_model(&model, db.dim, db.axes.clone(), db.times.clone(), db.ra, db.pr, 4096)?;
    let fields = FieldKind::stored(db.dim);
    let profiles = fields
        .iter()
        .map(|&f| temporal_l2_profile(&pred_db, &db, f))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut prof = String::from("time");
    for f in fields {
        let _ = write!(prof, ",{}", f.tag());
    }
    prof.push('\n');
    for (i, t) in db.times.iter().enumerate() {
        let _ = write!(prof, "{t:e}");
        for p in &profiles {
            if p[i].is_nan() {
                prof.push_str(",NA");
            } else {
                let _ = write!(prof, ",{:e}", p[i]);
            }
        }
        prof.push('\n');
    }
    write("temporal_l2.csv", prof)?;

    // T + T̄ − 1 over the grid.
    let (tc, bc) = (db.dim.n() + 1, db.dim.n() + 2);
    let dev: Vec<f64> = out.rows().into_iter().map(|r| r[tc] + r[bc] - 1.0).collect();
    let max = dev.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let rms = (dev.iter().map(|x| x * x).sum::<f64>() / dev.len() as f64).sqrt();
    let mut diag = format!("quantity,value\ntbar_identity_max,{max:e}\ntbar_identity_rms,{rms:e}\n");

    if let Some(probe) = &cfg.probe {
        if probe.len() != db.dim.n() || probe.iter().zip(&db.axes).any(|(&i, a)| i >= a.n) {
            return Err(CliError::Config("probe index outside the grid".into()));
        }
        let s = db.spatial_index(probe);
        let g = db.points_per_snapshot();
        let pick = |v: &[f64]| (0..db.n_snapshots()).map(|t| v[t * g + s]).collect::<Vec<f64>>();
        let tp = pick(pred_db.field(FieldKind::T).expect("T"));
        let tr = pick(db.field(FieldKind::T).expect("T"));
        let sp = power_spectrum_at(&db.times, &tp, cfg.window)?;
        let sr = power_spectrum_at(&db.times, &tr, cfg.window)?;
        let mut text = String::from("frequency,power_pred,power_ref\n");
        for i in 0..sp.freqs.len() {
            let _ = writeln!(text, "{:e},{:e},{:e}", sp.freqs[i], sp.power[i], sr.power[i]);
        }
        write("spectrum.csv", text)?;
        let _ = write!(diag, "f_max_pred,{:e}\nf_max_ref,{:e}\n", sp.f_max, sr.f_max);
    }

    if let Some(tp) = &cfg.trainset {
        let ts = TrainingSet::load(tp)?;
        m.inputs.push(path_str(tp));
        let p = model.predict(&ts.labels.points);
        let err = (&p - &ts.labels.values).mapv(|x| x * x) * &ts.labels.mask;
        let loss = err.sum() / ts.labels.len().max(1) as f64;
        let _ = write!(diag, "label_loss,{loss:e}\nn_labels,{}\n", ts.labels.len());
    }
    write("diagnostics.csv", diag)?;
    for (name, st) in &rows {
        println!("{name:>3}: RMSE {:.3e}  R² {}", st.rmse, st.r2.map_or("NA".into(), |r| format!("{r:.5}")));
    }
    m.write(&c.out)
}

pub fn predict(c: &Common) -> Result<()> {
    let cfg: PredictConfig = parse(&c.source)?;
    let mut m = c.manifest("predict");
    let model = Model::load(&cfg.model)?;
    m.inputs.push(path_str(&cfg.model));
    let dim = dim_of(model.arch.inputs() - 1)?;
    let db = SnapshotDb::from_model(&model, dim, cfg.axes.clone(), cfg.times.times(), 0.0, 0.0, 4096)?;
    create_out(&c.out)?;
    let path = match cfg.format {
        PredictFormat::Db => {
            let p = c.out.join("prediction.bin");
            db.save(&p)?;
            p
        }
        PredictFormat::Csv => {
            let p = c.out.join("prediction.csv");
            let pts = all_points(&db);
            let out = model.predict(&pts);
            let mut text = String::new();
            let names: Vec<&str> = dim.axis_names().iter().copied().chain(["t"]).collect();
            let _ = write!(text, "{}", names.join(","));
            for f in FieldKind::stored(dim) {
                let _ = write!(text, ",{}", f.tag());
            }
            text.push_str(",Tbar\n");
            for (p, o) in pts.rows().into_iter().zip(out.rows()) {
                let cells: Vec<String> =
                    p.iter().chain(o.iter().take(dim.n_outputs())).map(|x| format!("{x:e}")).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            std::fs::write(&p, text)?;
            p
        }
    };
    println!("wrote {} ({} points)", path.display(), db.size());
    m.outputs.push(path_str(&path));
    m.write(&c.out)
}

pub fn report(c: &Common) -> Result<()> {
    let cfg: ReportConfig = parse(&c.source)?;
    if cfg.histories.is_empty() {
        return Err(CliError::Config("no histories to report".into()));
    }
    let mut m = c.manifest("report");
    let mut text =
        String::from("run,cycle,iterations,lr,mean_total,final_total,mean_label,mean_pde_div,var_pde_div\n");
    for h in &cfg.histories {
        let csv = std::fs::read_to_string(&h.path)
            .map_err(|e| CliError::Io(format!("{}: {e}", h.path.display())))?;
        let hist = LossHistory::from_csv(&csv)?;
        m.inputs.push(path_str(&h.path));
        let mut cycles: Vec<u32> = hist.records.iter().map(|r| r.cycle).collect();
        cycles.dedup();
        for cy in cycles {
            let recs: Vec<_> = hist.cycle(cy).collect();
            let n = recs.len() as f64;
            let mean = |f: fn(&plumenet::training::Record) -> f64| recs.iter().map(|r| f(r)).sum::<f64>() / n;
            let md = mean(|r| r.pde_div);
            let var = recs.iter().map(|r| (r.pde_div - md).powi(2)).sum::<f64>() / n;
            let _ = writeln!(
                text,
                "{},{cy},{},{:e},{:e},{:e},{:e},{md:e},{var:e}",
                h.name,
                recs.len(),
                recs[0].lr,
                mean(|r| r.total),
                recs.last().expect("non-empty").total,
                mean(|r| r.label),
            );
        }
    }
    create_out(&c.out)?;
    let p = c.out.join("report.csv");
    std::fs::write(&p, &text)?;
    print!("{text}");
    m.outputs.push(path_str(&p));
    m.write(&c.out)
}
