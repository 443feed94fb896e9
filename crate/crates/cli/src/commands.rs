//! Implementations of the CLI subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use serde::Deserialize;
use serde_json::json;

use qdet_core::dynamics::{detection_trace_grid, transient_current};
use qdet_core::liouville::dump_liouvillian;
use qdet_core::metrics::{MetricsOptions, MetricsReport, Pipeline};
use qdet_core::model::DetectorParams;
use qdet_core::sweep::{
    self, format_float, preset_config, preset_fits, run_gain_scan_campaign, run_sweep, summarize,
    write_fit_entry, write_records_csv, write_summary, Filter, FitModel, FitResult, Preset,
    RecordsTable, SweepConfig, SweepRecord,
};

use crate::manifest::RunManifest;
use crate::{FitModelArg, JitterConvention, ParamFlags};

/// Parameter-file shape: the same keys as the inline flags, all optional so
/// that flags can fill the gaps.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialParams {
    #[serde(rename = "E_S")]
    e_s: Option<f64>,
    #[serde(rename = "E_G")]
    e_g: Option<f64>,
    #[serde(rename = "f_EC")]
    f_ec: Option<f64>,
    #[serde(rename = "T_C")]
    t_c: Option<f64>,
    #[serde(rename = "T_V")]
    t_v: Option<f64>,
    #[serde(rename = "g_MG")]
    g_mg: Option<f64>,
    #[serde(rename = "g_SG")]
    g_sg: Option<f64>,
    #[serde(rename = "gamma_M")]
    gamma_m: Option<f64>,
    #[serde(rename = "gamma_G")]
    gamma_g: Option<f64>,
    #[serde(rename = "gamma_D")]
    gamma_d: Option<f64>,
}

fn resolve_params(config: Option<&Path>, flags: &ParamFlags) -> anyhow::Result<DetectorParams> {
    let mut partial = PartialParams::default();
    if let Some(path) = config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("read parameter file {}", path.display()))?;
        partial = toml::from_str(&text)
            .with_context(|| format!("parse parameter file {}", path.display()))?;
    }
    let take = |flag: Option<f64>, file: Option<f64>, key: &'static str| -> anyhow::Result<f64> {
        flag.or(file)
            .ok_or_else(|| anyhow::anyhow!("missing required parameter key '{key}'"))
    };
    Ok(DetectorParams {
        e_s: take(flags.e_s, partial.e_s, "E_S")?,
        e_g: take(flags.e_g, partial.e_g, "E_G")?,
        f_ec: take(flags.f_ec, partial.f_ec, "f_EC")?,
        t_c: take(flags.t_c, partial.t_c, "T_C")?,
        t_v: take(flags.t_v, partial.t_v, "T_V")?,
        g_mg: take(flags.g_mg, partial.g_mg, "g_MG")?,
        g_sg: take(flags.g_sg, partial.g_sg, "g_SG")?,
        gamma_m: take(flags.gamma_m, partial.gamma_m, "gamma_M")?,
        gamma_g: take(flags.gamma_g, partial.gamma_g, "gamma_G")?,
        gamma_d: take(flags.gamma_d, partial.gamma_d, "gamma_D")?,
    })
}

fn write_report_file(path: &Path, report: &MetricsReport) -> anyhow::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let p = &report.params;
    writeln!(out, "status = ok")?;
    for (key, value) in [
        ("E_S", p.e_s),
        ("E_G", p.e_g),
        ("f_EC", p.f_ec),
        ("T_C", p.t_c),
        ("T_V", p.t_v),
        ("g_MG", p.g_mg),
        ("g_SG", p.g_sg),
        ("gamma_M", p.gamma_m),
        ("gamma_G", p.gamma_g),
        ("gamma_D", p.gamma_d),
        ("T_H", report.t_h),
        ("gain", report.gain),
        ("eta_D", report.eta_d),
        ("eta_max", report.eta_max),
        ("R_dc", report.r_dc),
        ("dead_time", report.dead_time),
        ("lambda1_re", report.lambda1.re),
        ("lambda1_im", report.lambda1.im),
        ("Sigma_ss_rate", report.sigma_ss_rate),
        ("Sigma_trans", report.sigma_trans),
        ("Sigma_tot", report.sigma_tot),
        ("I0", report.population_integrals.i0),
        ("I1", report.population_integrals.i1),
        ("I2", report.population_integrals.i2),
        ("max_imag_residue", report.max_imag_residue),
    ] {
        writeln!(out, "{key} = {}", format_float(value))?;
    }
    for (key, value) in [
        ("jitter", report.jitter),
        ("jitter_rms", report.jitter_rms),
        ("mean_time", report.mean_detection_time),
    ] {
        match value {
            Some(v) => writeln!(out, "{key} = {}", format_float(v))?,
            None => writeln!(out, "{key} = undefined")?,
        }
    }
    writeln!(
        out,
        "inequality_ok = {}",
        report.population_integrals.inequality_ok
    )?;
    Ok(())
}

pub fn simulate(
    config: Option<PathBuf>,
    flags: ParamFlags,
    out_dir: PathBuf,
    dump: Option<PathBuf>,
) -> anyhow::Result<()> {
    let start = Instant::now();
    let params = resolve_params(config.as_deref(), &flags)?;
    std::fs::create_dir_all(&out_dir)?;
    let pipeline = Pipeline::run(&params, MetricsOptions::default())?;
    let report = pipeline.metrics()?;

    let report_path = out_dir.join("metrics.txt");
    write_report_file(&report_path, &report)?;
    let mut outputs = vec![report_path];
    if let Some(dump_path) = dump {
        dump_liouvillian(&pipeline.liouvillian, Some(&pipeline.spectral), &dump_path)?;
        outputs.push(dump_path);
    }

    let mut manifest = RunManifest::new("simulate", json!({ "params": params }));
    manifest.seed = None;
    manifest.finish(outputs, start.elapsed(), &out_dir)?;
    Ok(())
}

pub fn trace(
    config: Option<PathBuf>,
    flags: ParamFlags,
    out_dir: PathBuf,
    t_max_mult: f64,
    grid_points: usize,
) -> anyhow::Result<()> {
    let start = Instant::now();
    let params = resolve_params(config.as_deref(), &flags)?;
    if !(t_max_mult > 0.0) {
        bail!("--t-max-mult must be > 0");
    }
    if grid_points < 8 {
        bail!("--grid must be at least 8");
    }
    std::fs::create_dir_all(&out_dir)?;
    let pipeline = Pipeline::run(&params, MetricsOptions::default())?;
    let report = pipeline.metrics()?;
    let t_max = t_max_mult * report.dead_time;
    let grid = detection_trace_grid(
        &pipeline.spectral,
        &pipeline.liouvillian,
        &pipeline.rho0.rho0,
        t_max,
        grid_points,
    );
    let trace = transient_current(
        &pipeline.spectral,
        &pipeline.liouvillian,
        &pipeline.rho0.rho0,
        &grid,
    );

    let path = out_dir.join("trace.csv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "# transient detection-event trace")?;
    writeln!(
        out,
        "# columns: t, J_D, J_D_ss, J_MC, J_G10, J_G21, P0, P1, P2"
    )?;
    writeln!(
        out,
        "# steady state: J_D_ss={} J_MC_ss={} J_G10_ss={} J_G21_ss={} P0_ss={} P1_ss={} P2_ss={}",
        format_float(trace.j_d_ss),
        format_float(trace.j_mc_ss),
        format_float(trace.j_g10_ss),
        format_float(trace.j_g21_ss),
        format_float(trace.p_ss[0]),
        format_float(trace.p_ss[1]),
        format_float(trace.p_ss[2]),
    )?;
    writeln!(out, "t,J_D,J_D_ss,J_MC,J_G10,J_G21,P0,P1,P2")?;
    for (k, &t) in trace.times.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            format_float(t),
            format_float(trace.j_d[k]),
            format_float(trace.j_d_ss),
            format_float(trace.j_mc[k]),
            format_float(trace.j_g10[k]),
            format_float(trace.j_g21[k]),
            format_float(trace.p0[k]),
            format_float(trace.p1[k]),
            format_float(trace.p2[k]),
        )?;
    }
    drop(out);

    let mut manifest = RunManifest::new(
        "trace",
        json!({ "params": params, "t_max_mult": t_max_mult, "grid": grid_points }),
    );
    manifest.seed = None;
    manifest.finish(vec![path], start.elapsed(), &out_dir)?;
    Ok(())
}

fn thread_pool(jobs: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let threads = jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("build worker pool")
}

pub fn sweep(
    config_path: Option<PathBuf>,
    preset_name: Option<String>,
    n: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    out_dir: PathBuf,
) -> anyhow::Result<()> {
    let start = Instant::now();
    std::fs::create_dir_all(&out_dir)?;
    let pool = thread_pool(jobs)?;
    let options = MetricsOptions::default();

    let preset = match (&config_path, &preset_name) {
        (None, Some(name)) => Some(
            Preset::from_name(name)
                .ok_or_else(|| anyhow::anyhow!(
                    "unknown preset '{name}'; expected one of {:?}",
                    Preset::ALL_NAMES
                ))?,
        ),
        (Some(_), None) => None,
        _ => bail!("exactly one of --config or --preset is required"),
    };

    let (records, config_json, fits, filters, resolved_seed): (
        Vec<SweepRecord>,
        serde_json::Value,
        Vec<FitResult>,
        Vec<String>,
        Option<u64>,
    ) = match preset {
        Some(Preset::AppE) => {
            // Deterministic grid campaign; no sampling, no seed.
            let records = pool.install(|| run_gain_scan_campaign(options));
            let fits = preset_fits(Preset::AppE, &records);
            (records, json!({ "preset": "appE" }), fits, vec![], None)
        }
        Some(p) => {
            let config = preset_config(p, n.unwrap_or(5000), seed.unwrap_or(42))
                .expect("scatter presets have configs");
            let records = pool.install(|| run_sweep(&config, options))?;
            let fits = preset_fits(p, &records);
            let filters = config.filters.clone();
            let resolved_seed = config.seed;
            (
                records,
                serde_json::to_value(&config)?,
                fits,
                filters,
                Some(resolved_seed),
            )
        }
        None => {
            let path = config_path.as_ref().unwrap();
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("read sweep config {}", path.display()))?;
            let mut config = SweepConfig::from_toml(&text)?;
            if let Some(n) = n {
                config.n = n;
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let records = pool.install(|| run_sweep(&config, options))?;
            let filters = config.filters.clone();
            let resolved_seed = config.seed;
            (
                records,
                serde_json::to_value(&config)?,
                vec![],
                filters,
                Some(resolved_seed),
            )
        }
    };

    let records_path = out_dir.join("records.csv");
    let mut records_file = std::io::BufWriter::new(std::fs::File::create(&records_path)?);
    write_records_csv(&mut records_file, &records)?;
    drop(records_file);

    let summary = summarize(&records, &filters)?;
    let summary_path = out_dir.join("summary.txt");
    let mut summary_file = std::io::BufWriter::new(std::fs::File::create(&summary_path)?);
    write_summary(&mut summary_file, &summary, &fits)?;
    drop(summary_file);

    let mut manifest = RunManifest::new("sweep", config_json);
    manifest.seed = resolved_seed;
    manifest.jobs = jobs;
    manifest.finish(
        vec![records_path, summary_path],
        start.elapsed(),
        &out_dir,
    )?;
    Ok(())
}

fn resolve_jitter_alias(name: &str, convention: JitterConvention) -> String {
    if name == "jitter" {
        match convention {
            JitterConvention::Rms => "jitter_rms".to_string(),
            JitterConvention::Variance => "jitter".to_string(),
        }
    } else {
        name.to_string()
    }
}

pub fn fit(
    records_path: PathBuf,
    model: FitModelArg,
    x: String,
    y: String,
    filter_exprs: Vec<String>,
    convention: JitterConvention,
    out_dir: PathBuf,
) -> anyhow::Result<()> {
    let start = Instant::now();
    std::fs::create_dir_all(&out_dir)?;
    let table = RecordsTable::load(&records_path)?;

    let x_col = resolve_jitter_alias(&x, convention);
    let y_col = resolve_jitter_alias(&y, convention);
    let mut filters = Vec::new();
    for expr in &filter_exprs {
        let mut f = Filter::parse(expr)?;
        f.column = resolve_jitter_alias(&f.column, convention);
        filters.push(f);
    }
    let points = table.xy(&x_col, &y_col, &filters)?;
    let description = if filter_exprs.is_empty() {
        "none".to_string()
    } else {
        filter_exprs.join(" & ")
    };
    let result = match model {
        FitModelArg::Inverse => sweep::fit_inverse(&points, &description)?,
        FitModelArg::Linear => sweep::fit_linear(&points, &description)?,
    };

    let fit_path = out_dir.join("fit.txt");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&fit_path)?);
    writeln!(out, "x = {x_col}")?;
    writeln!(out, "y = {y_col}")?;
    write_fit_entry(&mut out, "", &result)?;
    writeln!(out, "spearman = {}", format_float(sweep::spearman(&points)))?;
    drop(out);

    let model_tag = match model {
        FitModelArg::Inverse => FitModel::Inverse.tag(),
        FitModelArg::Linear => FitModel::Linear.tag(),
    };
    let manifest = RunManifest::new(
        "fit",
        json!({
            "records": records_path,
            "model": model_tag,
            "x": x_col,
            "y": y_col,
            "filters": filter_exprs,
            "jitter_convention": match convention {
                JitterConvention::Rms => "rms",
                JitterConvention::Variance => "variance",
            },
        }),
    );
    manifest.finish(vec![fit_path], start.elapsed(), &out_dir)?;
    Ok(())
}
