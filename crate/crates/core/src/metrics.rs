//! Accuracy statistics, error profiles, densities, spectra and the
//! multi-output linear regression baseline.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dataset::{FieldKind, SnapshotDb};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} predictions vs {1} references")]
    Length(usize, usize),
    #[error("need at least {0} samples")]
    TooFew(usize),
    #[error("reference has zero norm")]
    ZeroReference,
    #[error("degenerate sample range")]
    DegenerateRange,
    #[error("timestamps are not uniformly spaced")]
    NonUniform,
    #[error("grids or times differ between the two databases")]
    GridMismatch,
    #[error("design matrix is rank deficient (rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Per-field accuracy. `None` marks a statistic that is not computable
/// (mean error of a centred field, zero-variance reference).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldStats {
    pub rmse: f64,
    pub mae: f64,
    /// `|mean(pred) − mean(ref)| / |mean(ref)|`, percent.
    pub mu_err: Option<f64>,
    /// `|σ(pred) − σ(ref)| / σ(ref)`, percent, population σ.
    pub sigma_err: Option<f64>,
    pub r_corr: Option<f64>,
    pub r2: Option<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn centered(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

/// Statistics of `pred` against `reference`. When `center` is set (the
/// pressure gauge), both series are shifted to zero mean first and the mean
/// error is reported as not computable.
pub fn field_stats(pred: &[f64], reference: &[f64], center: bool) -> Result<FieldStats> {
    if pred.len() != reference.len() {
        return Err(MetricsError::Length(pred.len(), reference.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::TooFew(1));
    }
    let (p, r): (Vec<f64>, Vec<f64>) =
        if center { (centered(pred), centered(reference)) } else { (pred.to_vec(), reference.to_vec()) };
    let n = p.len() as f64;
    let (mp, mr) = (mean(&p), mean(&r));
    let (mut se, mut ae, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(&r) {
        let e = a - b;
        se += e * e;
        ae += e.abs();
        sxy += (a - mp) * (b - mr);
        sxx += (a - mp) * (a - mp);
        syy += (b - mr) * (b - mr);
    }
    let (sp, sr) = ((sxx / n).sqrt(), (syy / n).sqrt());
    Ok(FieldStats {
        rmse: (se / n).sqrt(),
        mae: ae / n,
        mu_err: (!center && mr != 0.0).then(|| (mp - mr).abs() / mr.abs() * 100.0),
        sigma_err: (sr > 0.0).then(|| (sp - sr).abs() / sr * 100.0),
        r_corr: (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt()),
        r2: (syy > 0.0).then(|| 1.0 - se / syy),
    })
}

/// Field-averaged statistics. Optional entries average the computable
/// fields only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateStats {
    pub a_rmse: f64,
    pub a_mae: f64,
    pub a_mu_err: Option<f64>,
    pub a_sigma_err: Option<f64>,
    pub a_r_corr: Option<f64>,
    pub a_r2: Option<f64>,
}

fn mean_opt(it: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = it.flatten().collect();
    (!v.is_empty()).then(|| mean(&v))
}

pub fn aggregate(stats: &[FieldStats]) -> AggregateStats {
    let rm: Vec<f64> = stats.iter().map(|s| s.rmse).collect();
    let ma: Vec<f64> = stats.iter().map(|s| s.mae).collect();
    AggregateStats {
        a_rmse: mean(&rm),
        a_mae: mean(&ma),
        a_mu_err: mean_opt(stats.iter().map(|s| s.mu_err)),
        a_sigma_err: mean_opt(stats.iter().map(|s| s.sigma_err)),
        a_r_corr: mean_opt(stats.iter().map(|s| s.r_corr)),
        a_r2: mean_opt(stats.iter().map(|s| s.r2)),
    }
}

/// `‖pred − ref‖₂ / ‖ref‖₂`, percent.
pub fn relative_l2(pred: &[f64], reference: &[f64], center: bool) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(MetricsError::Length(pred.len(), reference.len()));
    }
    let (p, r) =
        if center { (centered(pred), centered(reference)) } else { (pred.to_vec(), reference.to_vec()) };
    let num: f64 = p.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = r.iter().map(|b| b * b).sum();
    if den == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    Ok((num / den).sqrt() * 100.0)
}

/// Subtracts from each value the mean over all samples sharing its time
/// stamp. Pressure is only defined up to an additive function of time, so
/// this is the gauge used when samples span several snapshots.
pub fn center_per_time(values: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    if values.len() != times.len() {
        return Err(MetricsError::Length(values.len(), times.len()));
    }
    let mut groups: std::collections::BTreeMap<u64, (f64, usize)> = Default::default();
    for (&v, &t) in values.iter().zip(times) {
        let e = groups.entry(t.to_bits()).or_default();
        e.0 += v;
        e.1 += 1;
    }
    Ok(values
        .iter()
        .zip(times)
        .map(|(&v, t)| {
            let (s, n) = groups[&t.to_bits()];
            v - s / n as f64
        })
        .collect())
}

/// Per-snapshot spatial relative L₂ error (percent) of one field; NaN for
/// snapshots where the reference is identically zero.
pub fn temporal_l2_profile(pred: &SnapshotDb, reference: &SnapshotDb, f: FieldKind) -> Result<Vec<f64>> {
    if pred.axes != reference.axes || pred.times != reference.times {
        return Err(MetricsError::GridMismatch);
    }
    let (a, b) = match (pred.field(f), reference.field(f)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(MetricsError::GridMismatch),
    };
    let g = pred.points_per_snapshot();
    (0..pred.n_snapshots())
        .map(|t| match relative_l2(&a[t * g..(t + 1) * g], &b[t * g..(t + 1) * g], f == FieldKind::P) {
            Err(MetricsError::ZeroReference) => Ok(f64::NAN),
            r => r,
        })
        .collect()
}

/// Divides a profile by `scale` (typically the maximum of a baseline run).
pub fn normalize_profile(profile: &[f64], scale: f64) -> Vec<f64> {
    profile.iter().map(|x| x / scale).collect()
}

/// Histogram density over the sample range.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Density {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }
}

pub fn pdf_estimate(samples: &[f64], bins: usize) -> Result<Density> {
    if samples.len() < 2 || bins < 2 {
        return Err(MetricsError::TooFew(2));
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(MetricsError::DegenerateRange);
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let b = (((x - lo) / w) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = samples.len() as f64;
    Ok(Density {
        edges: (0..=bins).map(|i| lo + w * i as f64).collect(),
        density: counts.iter().map(|&c| c as f64 / (n * w)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hann,
}

/// One-sided periodogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    /// Frequency of the largest power, excluding zero unless the signal is
    /// constant.
    pub f_max: f64,
}

/// Periodogram `|X_k|²/N` of a uniformly sampled series at `k/(NΔt)`,
/// `k = 0..=N/2`.
pub fn power_spectrum(series: &[f64], dt: f64, window: Window) -> Result<Spectrum> {
    let n = series.len();
    if n < 2 {
        return Err(MetricsError::TooFew(2));
    }
    let w: Vec<f64> = match window {
        Window::None => vec![1.0; n],
        Window::Hann => {
            (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
        }
    };
    let mut buf: Vec<Complex<f64>> = series.iter().zip(&w).map(|(&x, &w)| Complex::new(x * w, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let freqs: Vec<f64> = (0..=half).map(|k| k as f64 / (n as f64 * dt)).collect();
    let power: Vec<f64> = buf[..=half].iter().map(|c| c.norm_sqr() / n as f64).collect();
    let nonzero =
        power[1..]
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |(bi, bp), (i, &p)| if p > bp { (i + 1, p) } else { (bi, bp) });
    let f_max = if nonzero.1 > 1e-12 * power[0].max(1e-300) { freqs[nonzero.0] } else { 0.0 };
    Ok(Spectrum { freqs, power, f_max })
}

/// Power spectrum from timestamps, checking uniform spacing.
pub fn power_spectrum_at(times: &[f64], series: &[f64], window: Window) -> Result<Spectrum> {
    if times.len() != series.len() {
        return Err(MetricsError::Length(times.len(), series.len()));
    }
    if times.len() < 2 {
        return Err(MetricsError::TooFew(2));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
        return Err(MetricsError::NonUniform);
    }
    power_spectrum(series, dt, window)
}

/// Ordinary least squares per target column, with intercept.
#[derive(Debug, Clone)]
pub struct MorModel {
    /// `(k+1) × m`: intercept row first.
    pub coef: DMatrix<f64>,
}

impl MorModel {
    pub fn fit(x: &ndarray::Array2<f64>, y: &ndarray::Array2<f64>) -> Result<Self> {
        let (n, k) = x.dim();
        if y.nrows() != n {
            return Err(MetricsError::Length(n, y.nrows()));
        }
        if n <= k {
            return Err(MetricsError::TooFew(k + 1));
        }
        let a = design(x);
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * (n.max(k + 1) as f64) * f64::EPSILON * 1e3;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < k + 1 {
            return Err(MetricsError::RankDeficient { rank, cols: k + 1 });
        }
        let b = DMatrix::from_row_iterator(n, y.ncols(), y.iter().copied());
        let coef = svd.solve(&b, tol).expect("u and v were computed");
        Ok(MorModel { coef })
    }

    pub fn predict(&self, x: &ndarray::Array2<f64>) -> ndarray::Array2<f64> {
        let p = design(x) * &self.coef;
        ndarray::Array2::from_shape_fn((p.nrows(), p.ncols()), |(i, j)| p[(i, j)])
    }
}

fn design(x: &ndarray::Array2<f64>) -> DMatrix<f64> {
    let (n, k) = x.dim();
    DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] })
}

/// Fits the linear baseline on `(x_train, y_train)` and scores it on the
/// test set. Columns of `y` flagged in `center` are treated as pressure.
pub fn mor_baseline(
    x_train: &ndarray::Array2<f64>,
    y_train: &ndarray::Array2<f64>,
    x_test: &ndarray::Array2<f64>,
    y_test: &ndarray::Array2<f64>,
    center: &[bool],
) -> Result<Vec<FieldStats>> {
    let m = MorModel::fit(x_train, y_train)?;
    let p = m.predict(x_test);
    (0..y_test.ncols())
        .map(|j| {
            let a: Vec<f64> = p.column(j).to_vec();
            let b: Vec<f64> = y_test.column(j).to_vec();
            field_stats(&a, &b, center.get(j).copied().unwrap_or(false))
        })
        .collect()
}

/// Coefficient vector of a single-target fit; convenience for tests.
pub fn ols(x: &ndarray::Array2<f64>, y: &[f64]) -> Result<DVector<f64>> {
    let yy = ndarray::Array2::from_shape_vec((y.len(), 1), y.to_vec()).expect("column");
    Ok(MorModel::fit(x, &yy)?.coef.column(0).into_owned())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:e}"))
}

/// CSV table of per-field statistics.
pub fn stats_csv(rows: &[(String, FieldStats)]) -> String {
    let mut s = String::from("field,rmse,mae,mu_err_pct,sigma_err_pct,r_corr,r2\n");
    for (name, st) in rows {
        let _ = writeln!(
            s,
            "{name},{:e},{:e},{},{},{},{}",
            st.rmse,
            st.mae,
            opt(st.mu_err),
            opt(st.sigma_err),
            opt(st.r_corr),
            opt(st.r2)
        );
    }
    s
}

/// CSV table of aggregate statistics, one row per model.
pub fn aggregate_csv(rows: &[(String, AggregateStats)]) -> String {
    let mut s = String::from("model,a_rmse,a_mae,a_mu_err_pct,a_sigma_err_pct,a_r_corr,a_r2\n");
    for (name, a) in rows {
        let _ = writeln!(
            s,
            "{name},{:e},{:e},{},{},{},{}",
            a.a_rmse,
            a.a_mae,
            opt(a.a_mu_err),
            opt(a.a_sigma_err),
            opt(a.a_r_corr),
            opt(a.a_r2)
        );
    }
    s
}

/// Two-column CSV with the given header.
pub fn series_csv(header: (&str, &str), x: &[f64], y: &[f64]) -> String {
    let mut s = format!("{},{}\n", header.0, header.1);
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(s, "{a:e},{b:e}");
    }
    s
}
