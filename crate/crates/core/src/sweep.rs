//! Reproducible parameter sweeps, records files, and trade-off fits.
//!
//! A sweep samples detector parameters uniformly and independently from
//! configured ranges, runs the full per-point pipeline in parallel, and
//! persists one flat record per sample. Sampling is keyed by (seed, sample
//! index) through a counter-based RNG stream, so results are bitwise
//! reproducible and independent of worker count and execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::metrics::{compute_metrics, MetricsOptions, MetricsReport};
use crate::model::DetectorParams;
use crate::{Error, Result};

/// Uniform sampling domain of one parameter: a single interval or a union
/// of disjoint bands (bands are drawn with equal probability, then uniform
/// within the band).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum SampleSpace {
    Range([f64; 2]),
    Bands(Vec<[f64; 2]>),
}

impl SampleSpace {
    pub fn single(v: f64) -> Self {
        SampleSpace::Range([v, v])
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let check = |b: &[f64; 2]| -> Result<()> {
            if !(b[0] <= b[1]) || !b[0].is_finite() || !b[1].is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name}: bounds [{}, {}] must be finite with lower <= upper",
                    b[0], b[1]
                )));
            }
            Ok(())
        };
        match self {
            SampleSpace::Range(b) => check(b),
            SampleSpace::Bands(bands) => {
                if bands.is_empty() {
                    return Err(Error::InvalidConfig(format!("{name}: empty band list")));
                }
                bands.iter().try_for_each(check)
            }
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            SampleSpace::Range(b) => {
                let u: f64 = rng.gen();
                b[0] + u * (b[1] - b[0])
            }
            SampleSpace::Bands(bands) => {
                let pick: f64 = rng.gen();
                let k = ((pick * bands.len() as f64) as usize).min(bands.len() - 1);
                let u: f64 = rng.gen();
                bands[k][0] + u * (bands[k][1] - bands[k][0])
            }
        }
    }
}

/// Sweep configuration: per-parameter sampling ranges, fixed energy scale,
/// sample count and seed, and the near-threshold virtual-temperature line.
///
/// The virtual temperature is sampled in `[T_V_lower, -T_C E_H/E_C]`, whose
/// upper bound depends on the sampled `T_C` and `f_EC`; a configurable
/// fraction of samples is instead pinned to the near-threshold line
/// `T_V = -T_C E_H/E_C (1 + epsilon)`, where the detector is driven
/// hardest. If the per-sample upper bound falls below `T_V_lower`, the
/// sample degenerates to the bound itself so that every sampled `T_V`
/// respects it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Number of samples.
    pub n: usize,
    pub seed: u64,
    /// Fixed target energy (the energy unit).
    #[serde(rename = "E_S", default = "default_e_s")]
    pub e_s: f64,
    /// Fixed energy gain G = E_G/E_S.
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(rename = "T_C")]
    pub t_c: SampleSpace,
    #[serde(rename = "T_V_lower", default = "default_t_v_lower")]
    pub t_v_lower: f64,
    #[serde(rename = "g_SG")]
    pub g_sg: SampleSpace,
    #[serde(rename = "g_MG")]
    pub g_mg: SampleSpace,
    #[serde(rename = "gamma_M")]
    pub gamma_m: SampleSpace,
    #[serde(rename = "gamma_G")]
    pub gamma_g: SampleSpace,
    #[serde(rename = "gamma_D")]
    pub gamma_d: SampleSpace,
    #[serde(rename = "f_EC")]
    pub f_ec: SampleSpace,
    /// Fraction of samples pinned to the near-threshold T_V line.
    #[serde(default)]
    pub threshold_fraction: f64,
    /// Relative offset epsilon of the near-threshold line.
    #[serde(default = "default_threshold_epsilon")]
    pub threshold_epsilon: f64,
    /// Filter predicates audited in the sweep summary (numeric ranges on
    /// record columns, e.g. `"0.72<eta_D<0.7358"`).
    #[serde(default)]
    pub filters: Vec<String>,
}

fn default_e_s() -> f64 {
    1.0
}
fn default_gain() -> f64 {
    9.0
}
fn default_t_v_lower() -> f64 {
    -10.0
}
fn default_threshold_epsilon() -> f64 {
    1e-6
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if !(self.e_s > 0.0) || !(self.gain > 0.0) {
            return Err(Error::InvalidConfig("E_S and gain must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold_fraction) {
            return Err(Error::InvalidConfig(
                "threshold_fraction must be in [0, 1]".into(),
            ));
        }
        self.t_c.validate("T_C")?;
        self.g_sg.validate("g_SG")?;
        self.g_mg.validate("g_MG")?;
        self.gamma_m.validate("gamma_M")?;
        self.gamma_g.validate("gamma_G")?;
        self.gamma_d.validate("gamma_D")?;
        self.f_ec.validate("f_EC")?;
        for f in &self.filters {
            Filter::parse(f)?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: SweepConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("sweep config serializes")
    }

    /// Draw the parameter point of one sample. Every sample owns its own
    /// RNG stream, so samples are independent of each other and of the
    /// execution schedule.
    pub fn sample_one(&self, index: usize) -> DetectorParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let t_c = self.t_c.draw(&mut rng);
        let f_ec = self.f_ec.draw(&mut rng);
        let g_sg = self.g_sg.draw(&mut rng);
        let g_mg = self.g_mg.draw(&mut rng);
        let gamma_m = self.gamma_m.draw(&mut rng);
        let gamma_g = self.gamma_g.draw(&mut rng);
        let gamma_d = self.gamma_d.draw(&mut rng);
        let u_threshold: f64 = rng.gen();
        let u_tv: f64 = rng.gen();

        // Upper bound of the engine-regime virtual temperature window,
        // evaluated with the sampled T_C and f_EC.
        let e_h_over_e_c = 1.0 + 1.0 / f_ec;
        let bound = -t_c * e_h_over_e_c;
        let t_v = if u_threshold < self.threshold_fraction {
            bound * (1.0 + self.threshold_epsilon)
        } else {
            let lo = self.t_v_lower.min(bound);
            lo + u_tv * (bound - lo)
        };

        let e_g = self.gain * self.e_s;
        DetectorParams {
            e_s: self.e_s,
            e_g,
            f_ec,
            t_c,
            t_v,
            g_mg,
            g_sg,
            gamma_m,
            gamma_g,
            gamma_d,
        }
    }

    /// Materialize all sample parameter points.
    pub fn sample(&self) -> Vec<DetectorParams> {
        (0..self.n).map(|i| self.sample_one(i)).collect()
    }
}

/// Outcome of one sweep sample.
#[derive(Debug, Clone)]
pub enum RecordStatus {
    Ok(Box<MetricsReport>),
    Rejected(String),
}

/// One sampled point: the full parameter echo and either the metrics
/// report or a rejection tag.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub index: usize,
    pub params: DetectorParams,
    pub status: RecordStatus,
}

impl SweepRecord {
    pub fn report(&self) -> Option<&MetricsReport> {
        match &self.status {
            RecordStatus::Ok(r) => Some(r),
            RecordStatus::Rejected(_) => None,
        }
    }

    pub fn status_string(&self) -> String {
        match &self.status {
            RecordStatus::Ok(_) => "ok".into(),
            RecordStatus::Rejected(tag) => format!("rejected:{tag}"),
        }
    }
}

/// Evaluate one parameter point into a record; physical rejections are
/// tagged, they never abort a sweep.
pub fn run_point(index: usize, params: DetectorParams, options: MetricsOptions) -> SweepRecord {
    let status = match compute_metrics(&params, options) {
        Ok(report) => RecordStatus::Ok(Box::new(report)),
        Err(err) => RecordStatus::Rejected(err.status_tag().to_string()),
    };
    SweepRecord {
        index,
        params,
        status,
    }
}

/// Run a sweep over the configured samples. Work items execute in parallel
/// on the ambient rayon pool; the result is ordered by sample index and
/// identical to serial execution.
pub fn run_sweep(config: &SweepConfig, options: MetricsOptions) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let records: Vec<SweepRecord> = (0..config.n)
        .into_par_iter()
        .map(|i| run_point(i, config.sample_one(i), options))
        .collect();
    Ok(records)
}

/// Scan the energy gain at a fixed base point: for each G the gain-medium
/// energies are rederived as `E_G = G E_S`, `E_C = f_EC E_G`.
pub fn gain_scan(
    base: &DetectorParams,
    g_values: &[f64],
    options: MetricsOptions,
) -> Vec<SweepRecord> {
    g_values
        .par_iter()
        .enumerate()
        .map(|(i, &g)| {
            let params = DetectorParams {
                e_g: g * base.e_s,
                ..*base
            };
            run_point(i, params, options)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Records file
// ---------------------------------------------------------------------------

/// Column names of the records file, in order.
pub const RECORD_COLUMNS: [&str; 30] = [
    "idx",
    "status",
    "E_S",
    "E_G",
    "f_EC",
    "T_C",
    "T_V",
    "g_MG",
    "g_SG",
    "gamma_M",
    "gamma_G",
    "gamma_D",
    "T_H",
    "gain",
    "eta_D",
    "eta_max",
    "R_dc",
    "jitter",
    "jitter_rms",
    "mean_time",
    "dead_time",
    "lambda1_re",
    "lambda1_im",
    "Sigma_ss_rate",
    "Sigma_trans",
    "Sigma_tot",
    "I0",
    "I1",
    "I2",
    "inequality_ok",
];

/// Decimal with 17 significant digits: round-trips f64 exactly and keeps
/// records byte-stable.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// Write records as comma-separated values with a header row.
pub fn write_records_csv<W: Write>(out: &mut W, records: &[SweepRecord]) -> Result<()> {
    writeln!(out, "{}", RECORD_COLUMNS.join(","))?;
    for rec in records {
        let p = &rec.params;
        let m = rec.report();
        let fields: Vec<String> = vec![
            rec.index.to_string(),
            rec.status_string(),
            format_float(p.e_s),
            format_float(p.e_g),
            format_float(p.f_ec),
            format_float(p.t_c),
            format_float(p.t_v),
            format_float(p.g_mg),
            format_float(p.g_sg),
            format_float(p.gamma_m),
            format_float(p.gamma_g),
            format_float(p.gamma_d),
            opt_float(m.map(|m| m.t_h)),
            opt_float(m.map(|m| m.gain)),
            opt_float(m.map(|m| m.eta_d)),
            opt_float(m.map(|m| m.eta_max)),
            opt_float(m.map(|m| m.r_dc)),
            opt_float(m.and_then(|m| m.jitter)),
            opt_float(m.and_then(|m| m.jitter_rms)),
            opt_float(m.and_then(|m| m.mean_detection_time)),
            opt_float(m.map(|m| m.dead_time)),
            opt_float(m.map(|m| m.lambda1.re)),
            opt_float(m.map(|m| m.lambda1.im)),
            opt_float(m.map(|m| m.sigma_ss_rate)),
            opt_float(m.map(|m| m.sigma_trans)),
            opt_float(m.map(|m| m.sigma_tot)),
            opt_float(m.map(|m| m.population_integrals.i0)),
            opt_float(m.map(|m| m.population_integrals.i1)),
            opt_float(m.map(|m| m.population_integrals.i2)),
            m.map(|m| if m.population_integrals.inequality_ok { "1" } else { "0" })
                .unwrap_or("")
                .to_string(),
        ];
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn save_records(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write_records_csv(&mut out, records)
}

/// In-memory table of a records file; numeric cells parse to floats, empty
/// cells to None.
#[derive(Debug, Clone)]
pub struct RecordsTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub status: Vec<String>,
}

impl RecordsTable {
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Records(e.to_string()))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Records(e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        let status_col = headers.iter().position(|h| h == "status");
        let mut rows = Vec::new();
        let mut status = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Records(e.to_string()))?;
            let mut row = Vec::with_capacity(headers.len());
            for (k, field) in record.iter().enumerate() {
                if Some(k) == status_col {
                    status.push(field.to_string());
                    row.push(None);
                } else if field.is_empty() {
                    row.push(None);
                } else {
                    row.push(field.parse::<f64>().ok());
                }
            }
            rows.push(row);
        }
        Ok(RecordsTable {
            headers,
            rows,
            status,
        })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Paired (x, y) values over rows passing all filters; rows with a
    /// missing coordinate are skipped.
    pub fn xy(&self, x: &str, y: &str, filters: &[Filter]) -> Result<Vec<(f64, f64)>> {
        let xi = self.column_index(x)?;
        let yi = self.column_index(y)?;
        let filter_cols: Vec<usize> = filters
            .iter()
            .map(|f| self.column_index(&f.column))
            .collect::<Result<_>>()?;
        let mut points = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            if self.status.get(r).map(|s| s != "ok").unwrap_or(false) {
                continue;
            }
            let pass = filters
                .iter()
                .zip(&filter_cols)
                .all(|(f, &c)| row[c].map(|v| f.accepts(v)).unwrap_or(false));
            if !pass {
                continue;
            }
            if let (Some(xv), Some(yv)) = (row[xi], row[yi]) {
                points.push((xv, yv));
            }
        }
        Ok(points)
    }
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

/// Numeric range predicate on one record column. Accepted forms:
/// `a<col<b`, `col<b`, `col>a`, with `<=`/`>=` variants.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub column: String,
    pub lower: Option<(f64, bool)>,
    pub upper: Option<(f64, bool)>,
}

impl Filter {
    pub fn parse(expr: &str) -> Result<Filter> {
        let bad = |reason: &str| Error::InvalidFilter {
            expr: expr.to_string(),
            reason: reason.to_string(),
        };
        // Tokenize into operands separated by comparison operators.
        let mut parts: Vec<String> = Vec::new();
        let mut ops: Vec<(char, bool)> = Vec::new(); // (direction, inclusive)
        let mut current = String::new();
        let chars: Vec<char> = expr.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c == '<' || c == '>' {
                let inclusive = chars.get(i + 1) == Some(&'=');
                parts.push(current.trim().to_string());
                current = String::new();
                ops.push((c, inclusive));
                i += if inclusive { 2 } else { 1 };
            } else {
                current.push(c);
                i += 1;
            }
        }
        parts.push(current.trim().to_string());
        if ops.is_empty() || ops.len() > 2 || parts.iter().any(|p| p.is_empty()) {
            return Err(bad("expected 'a<col<b', 'col<b', or 'col>a'"));
        }

        let is_number = |s: &str| s.parse::<f64>().is_ok();
        let mut filter = Filter {
            column: String::new(),
            lower: None,
            upper: None,
        };
        match ops.len() {
            1 => {
                let (dir, inclusive) = ops[0];
                let (lhs, rhs) = (&parts[0], &parts[1]);
                match (is_number(lhs), is_number(rhs)) {
                    (false, true) => {
                        filter.column = lhs.clone();
                        let v = rhs.parse().unwrap();
                        if dir == '<' {
                            filter.upper = Some((v, inclusive));
                        } else {
                            filter.lower = Some((v, inclusive));
                        }
                    }
                    (true, false) => {
                        filter.column = rhs.clone();
                        let v = lhs.parse().unwrap();
                        if dir == '<' {
                            filter.lower = Some((v, inclusive));
                        } else {
                            filter.upper = Some((v, inclusive));
                        }
                    }
                    _ => return Err(bad("exactly one side must be a column name")),
                }
            }
            _ => {
                // a < col < b (both operators must point the same way)
                let (d0, inc0) = ops[0];
                let (d1, inc1) = ops[1];
                if d0 != d1 {
                    return Err(bad("mixed comparison directions"));
                }
                if !is_number(&parts[0]) || is_number(&parts[1]) || !is_number(&parts[2]) {
                    return Err(bad("expected number OP column OP number"));
                }
                let a: f64 = parts[0].parse().unwrap();
                let b: f64 = parts[2].parse().unwrap();
                filter.column = parts[1].clone();
                if d0 == '<' {
                    filter.lower = Some((a, inc0));
                    filter.upper = Some((b, inc1));
                } else {
                    filter.upper = Some((a, inc0));
                    filter.lower = Some((b, inc1));
                }
            }
        }
        Ok(filter)
    }

    pub fn accepts(&self, v: f64) -> bool {
        if let Some((lo, inclusive)) = self.lower {
            if v < lo || (!inclusive && v == lo) {
                return false;
            }
        }
        if let Some((hi, inclusive)) = self.upper {
            if v > hi || (!inclusive && v == hi) {
                return false;
            }
        }
        true
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        if let Some((lo, inc)) = self.lower {
            s.push_str(&format!("{lo}{}", if inc { "<=" } else { "<" }));
        }
        s.push_str(&self.column);
        if let Some((hi, inc)) = self.upper {
            s.push_str(&format!("{}{hi}", if inc { "<=" } else { "<" }));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    /// y = a / x
    Inverse,
    /// y = a x + b
    Linear,
}

impl FitModel {
    pub fn tag(&self) -> &'static str {
        match self {
            FitModel::Inverse => "inverse",
            FitModel::Linear => "linear",
        }
    }
}

/// Fitted coefficients of one trade-off law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Leading coefficient (a in y = a/x or the slope of y = a x + b).
    pub a: f64,
    /// Intercept; zero by construction for the inverse model.
    pub b: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// Human-readable description of the filters that selected the points.
    pub filter: String,
    /// Log-log regression slope, a shape cross-check for inverse laws
    /// (a clean y = a/x gives slope -1).
    pub loglog_slope: Option<f64>,
}

fn r_squared(points: &[(f64, f64)], predict: impl Fn(f64) -> f64) -> f64 {
    let n = points.len() as f64;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.1 - predict(p.0)).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (var > 0.0).then(|| cov / var)
}

/// Least-squares fit of `y = a/x` on untransformed residuals.
pub fn fit_inverse(points: &[(f64, f64)], filter: &str) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: points.len(),
        });
    }
    if points.iter().any(|(x, _)| *x <= 0.0) {
        return Err(Error::InvalidConfig(
            "inverse fit requires all x > 0".into(),
        ));
    }
    let num: f64 = points.iter().map(|(x, y)| y / x).sum();
    let den: f64 = points.iter().map(|(x, _)| 1.0 / (x * x)).sum();
    let a = num / den;
    Ok(FitResult {
        model: FitModel::Inverse,
        a,
        b: 0.0,
        r_squared: r_squared(points, |x| a / x),
        n_points: points.len(),
        filter: filter.to_string(),
        loglog_slope: loglog_slope(points),
    })
}

/// Ordinary least squares `y = a x + b`.
pub fn fit_linear(points: &[(f64, f64)], filter: &str) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if var == 0.0 {
        return Err(Error::InvalidConfig(
            "linear fit requires non-degenerate x values".into(),
        ));
    }
    let a = cov / var;
    let b = my - a * mx;
    Ok(FitResult {
        model: FitModel::Linear,
        a,
        b,
        r_squared: r_squared(points, |x| a * x + b),
        n_points: points.len(),
        filter: filter.to_string(),
        loglog_slope: None,
    })
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(points: &[(f64, f64)]) -> f64 {
    fn ranks(values: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let mut ranks = vec![0.0; values.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                ranks[order[k]] = avg;
            }
            i = j + 1;
        }
        ranks
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let rx = ranks(&xs);
    let ry = ranks(&ys);
    let n = points.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

/// Slack allowed on the efficiency-bound audit, covering numerical error.
pub const ETA_BOUND_SLACK: f64 = 2e-3;

/// Aggregate counts and audits over one sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepSummary {
    pub total: usize,
    pub ok: usize,
    pub rejections: HashMap<String, usize>,
    /// ok-records with eta_D above the conjectured bound plus slack.
    pub eta_bound_violations: usize,
    /// ok-records violating the thermal population-integral inequality.
    pub inequality_violations: usize,
    pub max_eta_d: Option<f64>,
    /// Per configured filter: how many ok-records pass.
    pub filter_counts: Vec<(String, usize)>,
}

pub fn summarize(records: &[SweepRecord], filters: &[String]) -> Result<SweepSummary> {
    let mut summary = SweepSummary {
        total: records.len(),
        ..Default::default()
    };
    let parsed: Vec<Filter> = filters
        .iter()
        .map(|f| Filter::parse(f))
        .collect::<Result<_>>()?;
    let mut filter_counts = vec![0usize; parsed.len()];
    for rec in records {
        match &rec.status {
            RecordStatus::Rejected(tag) => {
                *summary.rejections.entry(tag.clone()).or_insert(0) += 1;
            }
            RecordStatus::Ok(report) => {
                summary.ok += 1;
                if report.eta_d > report.eta_max + ETA_BOUND_SLACK {
                    summary.eta_bound_violations += 1;
                }
                if !report.population_integrals.inequality_ok {
                    summary.inequality_violations += 1;
                }
                summary.max_eta_d = Some(summary.max_eta_d.map_or(report.eta_d, |m: f64| m.max(report.eta_d)));
                for (k, f) in parsed.iter().enumerate() {
                    if record_field(rec, &f.column)
                        .map(|v| f.accepts(v))
                        .unwrap_or(false)
                    {
                        filter_counts[k] += 1;
                    }
                }
            }
        }
    }
    summary.filter_counts = filters
        .iter()
        .cloned()
        .zip(filter_counts)
        .collect();
    Ok(summary)
}

/// Look up a record field by records-file column name.
pub fn record_field(rec: &SweepRecord, column: &str) -> Option<f64> {
    let p = &rec.params;
    let m = rec.report();
    match column {
        "idx" => Some(rec.index as f64),
        "E_S" => Some(p.e_s),
        "E_G" => Some(p.e_g),
        "f_EC" => Some(p.f_ec),
        "T_C" => Some(p.t_c),
        "T_V" => Some(p.t_v),
        "g_MG" => Some(p.g_mg),
        "g_SG" => Some(p.g_sg),
        "gamma_M" => Some(p.gamma_m),
        "gamma_G" => Some(p.gamma_g),
        "gamma_D" => Some(p.gamma_d),
        "T_H" => m.map(|m| m.t_h),
        "gain" => m.map(|m| m.gain),
        "eta_D" => m.map(|m| m.eta_d),
        "eta_max" => m.map(|m| m.eta_max),
        "R_dc" => m.map(|m| m.r_dc),
        "jitter" => m.and_then(|m| m.jitter),
        "jitter_rms" => m.and_then(|m| m.jitter_rms),
        "mean_time" => m.and_then(|m| m.mean_detection_time),
        "dead_time" => m.map(|m| m.dead_time),
        "lambda1_re" => m.map(|m| m.lambda1.re),
        "lambda1_im" => m.map(|m| m.lambda1.im),
        "Sigma_ss_rate" => m.map(|m| m.sigma_ss_rate),
        "Sigma_trans" => m.map(|m| m.sigma_trans),
        "Sigma_tot" => m.map(|m| m.sigma_tot),
        "I0" => m.map(|m| m.population_integrals.i0),
        "I1" => m.map(|m| m.population_integrals.i1),
        "I2" => m.map(|m| m.population_integrals.i2),
        "inequality_ok" => m.map(|m| m.population_integrals.inequality_ok as u8 as f64),
        _ => None,
    }
}

/// Select (x, y) points from in-memory records through filters.
pub fn select_xy(
    records: &[SweepRecord],
    x: &str,
    y: &str,
    filters: &[Filter],
) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter(|r| r.report().is_some())
        .filter(|r| {
            filters.iter().all(|f| {
                record_field(r, &f.column)
                    .map(|v| f.accepts(v))
                    .unwrap_or(false)
            })
        })
        .filter_map(|r| {
            match (record_field(r, x), record_field(r, y)) {
                (Some(xv), Some(yv)) => Some((xv, yv)),
                _ => None,
            }
        })
        .collect()
}

/// Write the key-value summary file: counts, rejection reasons, audits,
/// and any fit coefficients computed for the sweep.
pub fn write_summary<W: Write>(
    out: &mut W,
    summary: &SweepSummary,
    fits: &[FitResult],
) -> Result<()> {
    writeln!(out, "total = {}", summary.total)?;
    writeln!(out, "ok = {}", summary.ok)?;
    writeln!(out, "rejected = {}", summary.total - summary.ok)?;
    let mut reasons: Vec<_> = summary.rejections.iter().collect();
    reasons.sort();
    for (tag, count) in reasons {
        writeln!(out, "rejected.{tag} = {count}")?;
    }
    writeln!(out, "eta_bound_violations = {}", summary.eta_bound_violations)?;
    writeln!(
        out,
        "inequality_violations = {}",
        summary.inequality_violations
    )?;
    if let Some(max) = summary.max_eta_d {
        writeln!(out, "max_eta_D = {}", format_float(max))?;
    }
    for (expr, count) in &summary.filter_counts {
        writeln!(out, "filter_pass(\"{expr}\") = {count}")?;
    }
    for (k, fit) in fits.iter().enumerate() {
        write_fit_entry(out, &format!("fit{k}."), fit)?;
    }
    Ok(())
}

/// Write one fit as `prefix`-scoped key-value lines.
pub fn write_fit_entry<W: Write>(out: &mut W, prefix: &str, fit: &FitResult) -> Result<()> {
    writeln!(out, "{prefix}model = {}", fit.model.tag())?;
    writeln!(out, "{prefix}a = {}", format_float(fit.a))?;
    if fit.model == FitModel::Linear {
        writeln!(out, "{prefix}b = {}", format_float(fit.b))?;
    }
    writeln!(out, "{prefix}r_squared = {}", format_float(fit.r_squared))?;
    writeln!(out, "{prefix}n_points = {}", fit.n_points)?;
    writeln!(out, "{prefix}filter = {}", fit.filter)?;
    if let Some(slope) = fit.loglog_slope {
        writeln!(out, "{prefix}loglog_slope = {}", format_float(slope))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Named sweep campaigns reproducing the published scatter/scan data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Efficiency vs total entropy, three pinned detection couplings.
    Fig3,
    /// Jitter vs dark counts near maximal efficiency, three g_SG bands.
    Fig4,
    /// Dark counts vs inverse spectral gap near maximal efficiency.
    Fig5,
    /// Jitter vs inverse spectral gap, per-band linear scaling.
    AppD,
    /// Gain scan at a fixed base point over several cold temperatures.
    AppE,
}

impl Preset {
    pub fn from_name(name: &str) -> Option<Preset> {
        match name {
            "fig3" => Some(Preset::Fig3),
            "fig4" => Some(Preset::Fig4),
            "fig5" => Some(Preset::Fig5),
            "appD" | "appd" => Some(Preset::AppD),
            "appE" | "appe" => Some(Preset::AppE),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::AppD => "appD",
            Preset::AppE => "appE",
        }
    }

    pub const ALL_NAMES: [&'static str; 5] = ["fig3", "fig4", "fig5", "appD", "appE"];
}

/// The g_SG bands used by the banded scatter campaigns.
pub const G_SG_BANDS: [[f64; 2]; 3] = [[0.1, 0.2], [0.4, 0.5], [1.5, 2.0]];

/// Detection couplings pinned by the efficiency-bound campaign.
pub const FIG3_GAMMA_D: [f64; 3] = [0.45, 0.95, 1.95];

/// Efficiency window selecting near-maximal points for the trade-off fits
/// (gamma_G = 0.7; the window tops out at the gamma_D = 1.95 bound).
pub const EFFICIENCY_WINDOW: &str = "0.72<eta_D<0.7358";

/// Dark-count floor for inverse fits against R_dc: below the eigensolver's
/// resolution the steady detection current is numerically zero and cannot
/// enter a 1/x law.
pub const R_DC_FLOOR: &str = "R_dc>1e-12";

/// Base point of the gain scan campaign.
pub fn gain_scan_base() -> DetectorParams {
    DetectorParams {
        e_s: 1.0,
        e_g: 9.0,
        f_ec: 0.2,
        t_c: 0.2,
        t_v: -3.0,
        g_mg: 1.0,
        g_sg: 1.0,
        gamma_m: 1.0,
        gamma_g: 0.7,
        gamma_d: 0.8,
    }
}

/// Cold temperatures of the gain scan campaign.
pub const GAIN_SCAN_T_C: [f64; 3] = [0.1, 0.2, 0.5];

/// Gain values of the gain scan campaign: 3, 6, ..., 30.
pub fn gain_scan_values() -> Vec<f64> {
    (1..=10).map(|k| 3.0 * k as f64).collect()
}

/// Materialize the sweep configuration of a scatter preset.
///
/// Scatter ranges: `T_C in [0.05, 1]`, `T_V in [-10, -T_C E_H/E_C]`,
/// `g_MG in [0.1, 2]`, `gamma_M in [0.1, 2]`, `f_EC in [0.1, 2]`, fixed
/// `gamma_G = 0.7` and gain 9, with preset-specific `g_SG` and `gamma_D`
/// domains. Half of the samples sit on the near-threshold T_V line, which
/// populates the high-efficiency region the trade-off windows select.
pub fn preset_config(preset: Preset, n: usize, seed: u64) -> Option<SweepConfig> {
    let base = SweepConfig {
        n,
        seed,
        e_s: 1.0,
        gain: 9.0,
        t_c: SampleSpace::Range([0.05, 1.0]),
        t_v_lower: -10.0,
        g_sg: SampleSpace::Range([0.1, 1.0]),
        g_mg: SampleSpace::Range([0.1, 2.0]),
        gamma_m: SampleSpace::Range([0.1, 2.0]),
        gamma_g: SampleSpace::single(0.7),
        gamma_d: SampleSpace::Range([0.1, 2.0]),
        f_ec: SampleSpace::Range([0.1, 2.0]),
        threshold_fraction: 0.5,
        threshold_epsilon: 1e-6,
        filters: vec![],
    };
    match preset {
        Preset::Fig3 => Some(SweepConfig {
            gamma_d: SampleSpace::Bands(FIG3_GAMMA_D.map(|g| [g, g]).to_vec()),
            ..base
        }),
        Preset::Fig4 => Some(SweepConfig {
            g_sg: SampleSpace::Bands(G_SG_BANDS.to_vec()),
            filters: vec![EFFICIENCY_WINDOW.to_string()],
            ..base
        }),
        Preset::Fig5 => Some(SweepConfig {
            g_sg: SampleSpace::Range([0.1, 2.0]),
            filters: vec![EFFICIENCY_WINDOW.to_string()],
            ..base
        }),
        Preset::AppD => Some(SweepConfig {
            g_sg: SampleSpace::Range([0.1, 2.0]),
            filters: vec!["eta_D>0.4".to_string()],
            ..base
        }),
        // The gain scan is a deterministic grid, not a random sweep.
        Preset::AppE => None,
    }
}

/// Run the gain-scan campaign: for each configured cold temperature, scan
/// the gain grid at the fixed base point. Record indices run consecutively
/// over (T_C, G) pairs.
pub fn run_gain_scan_campaign(options: MetricsOptions) -> Vec<SweepRecord> {
    let mut all = Vec::new();
    for &t_c in &GAIN_SCAN_T_C {
        let base = DetectorParams {
            t_c,
            ..gain_scan_base()
        };
        let mut records = gain_scan(&base, &gain_scan_values(), options);
        let offset = all.len();
        for r in &mut records {
            r.index += offset;
        }
        all.extend(records);
    }
    all
}

/// Canonical fits evaluated for each preset and reported in its summary.
pub fn preset_fits(preset: Preset, records: &[SweepRecord]) -> Vec<FitResult> {
    let mut fits = Vec::new();
    let band_filters = |lo: f64, hi: f64, extra: &[&str]| -> (Vec<Filter>, String) {
        let mut fs = vec![Filter::parse(&format!("{lo}<=g_SG<={hi}")).unwrap()];
        for e in extra {
            fs.push(Filter::parse(e).unwrap());
        }
        let label = fs.iter().map(|f| f.describe()).collect::<Vec<_>>().join(" & ");
        (fs, label)
    };
    match preset {
        Preset::Fig3 => {}
        Preset::Fig4 => {
            for [lo, hi] in G_SG_BANDS {
                let (filters, label) =
                    band_filters(lo, hi, &[EFFICIENCY_WINDOW, R_DC_FLOOR]);
                let points = select_xy(records, "R_dc", "jitter_rms", &filters);
                if let Ok(fit) = fit_inverse(&points, &label) {
                    fits.push(fit);
                }
            }
        }
        Preset::Fig5 => {
            for [lo, hi] in G_SG_BANDS {
                let (filters, label) =
                    band_filters(lo, hi, &[EFFICIENCY_WINDOW, R_DC_FLOOR]);
                let points = select_xy(records, "dead_time", "R_dc", &filters);
                if let Ok(fit) = fit_inverse(&points, &label) {
                    fits.push(fit);
                }
            }
        }
        Preset::AppD => {
            for [lo, hi] in G_SG_BANDS {
                let (filters, label) = band_filters(lo, hi, &["eta_D>0.4"]);
                let points = select_xy(records, "dead_time", "jitter_rms", &filters);
                if let Ok(fit) = fit_linear(&points, &label) {
                    fits.push(fit);
                }
            }
        }
        Preset::AppE => {
            for &t_c in &GAIN_SCAN_T_C {
                let filters = vec![
                    Filter::parse(&format!("{}<=T_C<={}", t_c - 1e-9, t_c + 1e-9)).unwrap(),
                ];
                let points = select_xy(records, "gain", "Sigma_tot", &filters);
                if let Ok(fit) = fit_linear(&points, &format!("T_C={t_c}")) {
                    fits.push(fit);
                }
            }
        }
    }
    fits
}
