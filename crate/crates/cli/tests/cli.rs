use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plumenet::dataset::{SnapshotDb, TrainingSet};
use plumenet::training::LossHistory;

fn plumenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plumenet"))
        .args(args)
        .env("PLUMENET_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = plumenet(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    plumenet(args).status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MANUFACTURED: &str = r#"
kind = "manufactured"
dim = 2
ra = 1e4
pr = 1.0
axes = [{ min = 0.0, max = 1.0, n = 9 }, { min = 0.0, max = 1.0, n = 9 }]
times = { start = 0.0, end = 1.0, n = 5 }
"#;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn db(&self) -> PathBuf {
        let cfg = write(self.dir.path(), "gen.toml", MANUFACTURED);
        ok(&["gen-data", "--config", s(&cfg), "--out", s(&self.path("db"))]);
        self.path("db/db.bin")
    }

    fn trainset(&self, db: &Path, extra: &str) -> PathBuf {
        let text = format!(
            r#"
db = "{}"
[labels]
bulk_fraction = 0.5
boundary_faces = ["XMin", "XMax", "ZMin", "ZMax"]
boundary_fraction = 1.0
ic_fraction = 0.0
seed = 1
[residuals]
n_r = 150
placement = "uniform-random"
seed = 2
[residuals.padding]
mode = "none"
{extra}
"#,
            s(db)
        );
        let cfg = write(self.dir.path(), "ts.toml", &text);
        ok(&["make-trainset", "--config", s(&cfg), "--out", s(&self.path("ts"))]);
        self.path("ts/trainset.bin")
    }

    fn train_config(&self, ts: &Path, loss: &str) -> PathBuf {
        self.train_config_scaled(ts, loss, 1)
    }

    fn train_config_scaled(&self, ts: &Path, loss: &str, k: usize) -> PathBuf {
        let text = format!(
            r#"
trainset = "{}"
forcing = {{ kind = "manufactured" }}
[train]
seed = 3
arch = {{ sizes = [3, 8, 8, 5], activation = "tanh" }}
{loss}
[train.schedule]
minibatch = 64
beta1 = 0.9
beta2 = 0.999
delta = 1e-8
cycles = [
  {{ epochs = {e2}, lr = 1e-2 }}, {{ epochs = {k}, lr = 5e-3 }}, {{ epochs = {k}, lr = 3e-3 }},
  {{ epochs = {k}, lr = 1e-3 }}, {{ epochs = {k}, lr = 5e-4 }}, {{ epochs = {k}, lr = 1e-4 }},
  {{ epochs = {k}, lr = 1e-5 }},
]
"#,
            s(ts),
            e2 = 2 * k,
        );
        write(self.dir.path(), "train.toml", &text)
    }
}

#[test]
fn gen_data_writes_a_valid_database_and_manifest() {
    let f = Fixture::new();
    let db = SnapshotDb::load(&f.db()).unwrap();
    db.validate().unwrap();
    assert_eq!(db.n_snapshots(), 5);
    let manifest = std::fs::read_to_string(f.path("db/run.toml")).unwrap();
    assert!(manifest.contains("command = \"gen-data\""));
    assert!(manifest.contains("config_hash"));
}

#[test]
fn invalid_rayleigh_number_is_a_config_error_without_output() {
    let f = Fixture::new();
    let cfg = write(f.dir.path(), "bad.toml", &MANUFACTURED.replace("ra = 1e4", "ra = -1.0"));
    assert_eq!(code(&["gen-data", "--config", s(&cfg), "--out", s(&f.path("out"))]), 2);
    assert!(!f.path("out").exists());
}

#[test]
fn rayleigh_benard_config_gives_requested_snapshots() {
    let f = Fixture::new();
    let cfg = write(
        f.dir.path(),
        "rb.toml",
        r#"
kind = "rayleigh-benard"
[solver]
nx = 16
nz = 16
lx = 1.0
lz = 1.0
dt = 0.01
ra = 1e5
pr = 1.0
boundary = "walls"
initial = { kind = "conductive", noise = 0.01 }
buoyancy = true
spinup = 0.5
n_snapshots = 6
snapshot_dt = 0.05
seed = 4
"#,
    );
    ok(&["gen-data", "--config", s(&cfg), "--out", s(&f.path("rb"))]);
    let db = SnapshotDb::load(&f.path("rb/db.bin")).unwrap();
    assert_eq!(db.n_snapshots(), 6);
    assert_eq!(db.points_per_snapshot(), 256);
}

#[test]
fn trainset_variants() {
    let f = Fixture::new();
    let db = f.db();
    let full = SnapshotDb::load(&db).unwrap();

    // Same database for labels and residuals: N_R = N_L on the grid.
    let all_faces = r#"
db = "DB"
[labels]
bulk_fraction = 1.0
boundary_faces = []
boundary_fraction = 1.0
ic_fraction = 0.0
seed = 1
[residuals]
n_r = NR
placement = "on-grid"
seed = 2
[residuals.padding]
mode = "none"
"#
    .replace("DB", s(&db));
    let n = full.size();
    for (nr, name) in [(n, "same"), (n / 2, "half")] {
        let cfg = write(f.dir.path(), &format!("{name}.toml"), &all_faces.replace("NR", &nr.to_string()));
        ok(&["make-trainset", "--config", s(&cfg), "--out", s(&f.path(name))]);
        let ts = TrainingSet::load(&f.path(&format!("{name}/trainset.bin"))).unwrap();
        assert_eq!(ts.labels.len(), n);
        assert_eq!(ts.residuals.nrows(), nr);
    }

    // Residuals on a temporally longer grid from a second database.
    let longer = write(
        f.dir.path(),
        "gen2.toml",
        &MANUFACTURED.replace("start = 0.0, end = 1.0, n = 5", "start = -0.5, end = 1.5, n = 9"),
    );
    ok(&["gen-data", "--config", s(&longer), "--out", s(&f.path("db2"))]);
    let ts = f.trainset(&db, "");
    let base = TrainingSet::load(&ts).unwrap();
    let cfg = std::fs::read_to_string(f.path("ts.toml"))
        .unwrap()
        .replace("mode = \"none\"", "mode = \"temporal\"")
        .replace("[labels]", &format!("residual_db = \"{}\"\n[labels]", s(&f.path("db2/db.bin"))));
    let cfg = write(f.dir.path(), "padded.toml", &cfg);
    ok(&["make-trainset", "--config", s(&cfg), "--out", s(&f.path("padded"))]);
    let padded = TrainingSet::load(&f.path("padded/trainset.bin")).unwrap();
    let span = |ts: &TrainingSet| {
        let t = ts.residuals.column(2);
        t.fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - t.fold(f64::INFINITY, |a, &b| a.min(b))
    };
    assert!(span(&padded) > 1.0 + 1e-9, "{}", span(&padded));
    assert!(span(&base) <= 1.0);
    assert_eq!(padded.labels, base.labels);
}

#[test]
fn train_resume_manifest_rerun_and_reports() {
    let f = Fixture::new();
    let db = f.db();
    let ts = f.trainset(&db, "");
    let cfg = f.train_config(&ts, "");
    let out = ok(&["train", "--config", s(&cfg), "--out", s(&f.path("run"))]);
    assert_eq!(out.lines().filter(|l| l.starts_with("cycle ")).count(), 7);
    let cks: Vec<_> = std::fs::read_dir(f.path("run/checkpoints")).unwrap().collect();
    assert_eq!(cks.len(), 7);
    let hist = std::fs::read(f.path("run/history.csv")).unwrap();
    let model = std::fs::read(f.path("run/model.bin")).unwrap();

    // Interrupted at cycle 4, then resumed.
    let ck = f.path("run/checkpoints/cycle_04.ckpt");
    ok(&["train", "--config", s(&cfg), "--out", s(&f.path("resumed")), "--resume", s(&ck)]);
    assert_eq!(std::fs::read(f.path("resumed/history.csv")).unwrap(), hist);
    assert_eq!(std::fs::read(f.path("resumed/model.bin")).unwrap(), model);

    // Re-run from the manifest alone.
    let manifest = f.path("run/run.toml");
    ok(&["train", "--config", s(&manifest), "--out", s(&f.path("rerun"))]);
    assert_eq!(std::fs::read(f.path("rerun/history.csv")).unwrap(), hist);
    assert_eq!(std::fs::read(f.path("rerun/model.bin")).unwrap(), model);
    assert_eq!(
        std::fs::read(f.path("rerun/checkpoints/cycle_07.ckpt")).unwrap(),
        std::fs::read(f.path("run/checkpoints/cycle_07.ckpt")).unwrap()
    );
    // A manifest of another command is refused.
    assert_eq!(code(&["evaluate", "--config", s(&manifest), "--out", s(&f.path("x"))]), 2);

    // A different seed changes the result.
    ok(&["train", "--config", s(&cfg), "--out", s(&f.path("seeded")), "--seed", "99"]);
    assert_ne!(std::fs::read(f.path("seeded/history.csv")).unwrap(), hist);

    let rep = write(
        f.dir.path(),
        "report.toml",
        &format!(
            "[[histories]]\nname = \"a\"\npath = \"{}\"\n[[histories]]\nname = \"b\"\npath = \"{}\"\n",
            s(&f.path("run/history.csv")),
            s(&f.path("seeded/history.csv"))
        ),
    );
    ok(&["report", "--config", s(&rep), "--out", s(&f.path("report"))]);
    let text = std::fs::read_to_string(f.path("report/report.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 14);
}

#[test]
fn plain_mode_logs_zero_residuals() {
    let f = Fixture::new();
    let db = f.db();
    let ts = f.trainset(&db, "");
    let loss = "[train.loss]\nlambda_label = 1.0\ndiv_penalty = { kind = \"square\" }\n[train.loss.weights]\nmx = 0.0\nmy = 0.0\nmz = 0.0\nT = 0.0\nTbar = 0.0\ndiv = 0.0\n";
    let cfg = f.train_config(&ts, loss);
    ok(&["train", "--config", s(&cfg), "--out", s(&f.path("plain"))]);
    let h = LossHistory::from_csv(&std::fs::read_to_string(f.path("plain/history.csv")).unwrap()).unwrap();
    assert!(!h.records.is_empty());
    for r in &h.records {
        assert_eq!([r.pde_t, r.pde_tbar, r.pde_mx, r.pde_my, r.pde_mz, r.pde_div], [0.0; 6]);
        assert_eq!(r.total, r.label);
    }
}

#[test]
fn evaluate_and_predict() {
    let f = Fixture::new();
    let db = f.db();
    let ts = f.trainset(&db, "");
    let cfg = f.train_config_scaled(&ts, "", 25);
    ok(&["train", "--config", s(&cfg), "--out", s(&f.path("run"))]);
    let model = f.path("run/model.bin");

    // Times the model never saw.
    let other = write(
        f.dir.path(),
        "gen3.toml",
        &MANUFACTURED.replace("start = 0.0, end = 1.0, n = 5", "start = 0.1, end = 0.9, n = 4"),
    );
    ok(&["gen-data", "--config", s(&other), "--out", s(&f.path("test"))]);
    let ev = write(
        f.dir.path(),
        "eval.toml",
        &format!(
            "model = \"{}\"\ndb = \"{}\"\ntrainset = \"{}\"\nprobe = [4, 4]\n",
            s(&model),
            s(&f.path("test/db.bin")),
            s(&ts)
        ),
    );
    ok(&["evaluate", "--config", s(&ev), "--out", s(&f.path("eval"))]);
    for name in [
        "field_stats.csv",
        "aggregate.csv",
        "relative_l2.csv",
        "pdf.csv",
        "temporal_l2.csv",
        "spectrum.csv",
        "diagnostics.csv",
        "run.toml",
    ] {
        assert!(f.path("eval").join(name).exists(), "{name}");
    }
    let stats = std::fs::read_to_string(f.path("eval/field_stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 5);
    let diag = std::fs::read_to_string(f.path("eval/diagnostics.csv")).unwrap();
    let label_loss: f64 = diag.lines().find_map(|l| l.strip_prefix("label_loss,")).unwrap().parse().unwrap();
    let h = LossHistory::from_csv(&std::fs::read_to_string(f.path("run/history.csv")).unwrap()).unwrap();
    assert!(label_loss < 0.1 * h.records[0].label, "{label_loss}");

    // Twice the training resolution.
    let pr = write(
        f.dir.path(),
        "predict.toml",
        &format!(
            "model = \"{}\"\naxes = [{{ min = 0.0, max = 1.0, n = 17 }}, {{ min = 0.0, max = 1.0, n = 17 }}]\ntimes = {{ start = 0.0, end = 1.0, n = 9 }}\n",
            s(&model)
        ),
    );
    ok(&["predict", "--config", s(&pr), "--out", s(&f.path("pred"))]);
    let csv = std::fs::read_to_string(f.path("pred/prediction.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "x,z,t,vx,vz,p,T,Tbar");
    assert_eq!(lines.count(), 17 * 17 * 9);
    let db_fmt = std::fs::read_to_string(&pr).unwrap() + "format = \"db\"\n";
    let pr = write(f.dir.path(), "predict_db.toml", &db_fmt);
    ok(&["predict", "--config", s(&pr), "--out", s(&f.path("pred_db"))]);
    let p = SnapshotDb::load(&f.path("pred_db/prediction.bin")).unwrap();
    assert_eq!(p.size(), 17 * 17 * 9);
}

#[test]
fn exit_codes_by_failure_class() {
    let f = Fixture::new();
    let db = f.db();
    assert_eq!(code(&["gen-data", "--config", s(&f.path("nope.toml")), "--out", s(&f.path("o"))]), 5);
    let bad = write(f.dir.path(), "bad.toml", "kind = ");
    assert_eq!(code(&["gen-data", "--config", s(&bad), "--out", s(&f.path("o"))]), 2);

    let ts = f.trainset(&db, "");
    let text = std::fs::read_to_string(f.path("ts.toml")).unwrap();
    let mut bytes = std::fs::read(&db).unwrap();
    bytes[0] ^= 0xff;
    let corrupt = f.path("corrupt.bin");
    std::fs::write(&corrupt, bytes).unwrap();
    let cfg = write(f.dir.path(), "ts_bad.toml", &text.replace(s(&db), s(&corrupt)));
    assert_eq!(code(&["make-trainset", "--config", s(&cfg), "--out", s(&f.path("o"))]), 3);

    // Non-finite labels abort training.
    let mut set = TrainingSet::load(&ts).unwrap();
    set.labels.values.fill(f64::NAN);
    let poisoned = f.path("poisoned.bin");
    set.save(&poisoned).unwrap();
    let cfg = f.train_config(&poisoned, "");
    assert_eq!(code(&["train", "--config", s(&cfg), "--out", s(&f.path("o"))]), 4);

    assert_eq!(code(&["train", "--config", s(&cfg), "--out", s(&f.path("o")), "--threads", "0"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}
