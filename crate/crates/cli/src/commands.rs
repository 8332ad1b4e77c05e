//! The four subcommands.

use std::io::Write;
use std::path::Path;

use gplinear::draws::{dense_grid, observed_grid};
use gplinear::inference::Method;
use gplinear::sim::{summarize, GridSpec};
use gplinear::{
    draw_functions_posterior, log_bf01_importance, log_bf01_quadrature, one_sided_test,
    residualize_x, run_grid, sample_posterior, validate_dataset, Dataset, Scale, SimRow,
    TestConfig,
};

use crate::args::{
    parse_h, parse_n, parse_scales, DataArgs, DrawsArgs, OneSidedArgs, PriorArgs, ScaleArg,
    SimulateArgs, TestArgs,
};
use crate::error::{CliError, CliResult};
use crate::ingest::{load_dataset, Columns};
use crate::report::{ConfigEcho, DatasetSummary, RunReport, ScaleResult};

/// Loaded dataset plus its summary for the report.
fn prepare(args: &DataArgs) -> CliResult<(Dataset, DatasetSummary)> {
    let cols = Columns {
        y: args.y.clone(),
        x: args.x.clone(),
        z: args.z.clone(),
    };
    let mut d = load_dataset(&args.data, &cols)?;
    if args.intercept {
        d = d.with_intercept();
    }
    if args.center {
        if d.k() == 0 {
            return Err(CliError::Usage(
                "--center residualizes x on the covariates; give --z or --intercept".into(),
            ));
        }
        d = residualize_x(&d)?;
    }
    let diagnostics = validate_dataset(&d)?;
    let summary = DatasetSummary {
        n: d.n(),
        k: d.k(),
        range_x: d.range_x(),
        diagnostics,
    };
    Ok((d, summary))
}

fn echo(args: &DataArgs, prior: &PriorArgs, d: &Dataset) -> ConfigEcho {
    ConfigEcho {
        data: Some(args.data.display().to_string()),
        y: Some(args.y.clone()),
        x: Some(args.x.clone()),
        z: args.z.clone(),
        intercept: args.intercept,
        center: args.center,
        g: Some(prior.g.unwrap_or(d.n() as f64)),
        n_quad: Some(prior.n_quad),
        ..Default::default()
    }
}

/// One config per requested prior scale; an explicit `--s-xi` gives a
/// single unnamed one.
fn configs(
    d: &Dataset,
    prior: &PriorArgs,
    default: ScaleArg,
    allow_all: bool,
) -> CliResult<Vec<(Option<Scale>, TestConfig)>> {
    let finish = |mut cfg: TestConfig| -> CliResult<TestConfig> {
        if let Some(g) = prior.g {
            cfg.g = g;
        }
        cfg.n_quad = prior.n_quad;
        cfg.seed = prior.seed;
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    };
    if let Some(s) = prior.s_xi {
        let e = s * d.range_x() / 6.0;
        return Ok(vec![(None, finish(TestConfig::for_dataset(d, e).with_s_xi(s))?)]);
    }
    let scale = prior.scale.unwrap_or(default);
    if scale == ScaleArg::All && !allow_all {
        return Err(CliError::Usage("this command takes a single --scale".into()));
    }
    scale
        .scales()
        .into_iter()
        .map(|sc| Ok((Some(sc), finish(TestConfig::for_dataset(d, sc.e()))?)))
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn report_json(report: &RunReport) -> String {
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    json
}

pub fn write_report(report: &RunReport, path: &Path) -> CliResult<()> {
    write_file(path, report_json(report).as_bytes())
}

/// Plain notation for moderate values, scientific otherwise.
fn fmt_num(v: f64) -> String {
    if v.is_finite() && (v == 0.0 || (1e-3..1e6).contains(&v.abs())) {
        format!("{v:.4}")
    } else {
        format!("{v:.4e}")
    }
}

fn print_dataset(out: &mut dyn Write, s: &DatasetSummary) -> std::io::Result<()> {
    writeln!(out, "dataset: n = {}, k = {}, range(x) = {:.6}", s.n, s.k, s.range_x)?;
    for diag in &s.diagnostics {
        if diag.status == gplinear::model::CheckStatus::Warn {
            writeln!(out, "warning: {}", diag.message)?;
        }
    }
    Ok(())
}

fn scale_label(s: Option<Scale>) -> &'static str {
    s.map(Scale::label).unwrap_or("custom")
}

fn evaluation_grid(d: &Dataset, grid: Option<usize>) -> CliResult<Vec<f64>> {
    match grid {
        None => Ok(observed_grid(d.x.as_slice())),
        Some(m) if m >= 2 => {
            let lo = d.x.min();
            let hi = d.x.max();
            Ok(dense_grid(lo, hi, m))
        }
        Some(m) => Err(CliError::Usage(format!("--grid needs at least 2 points, got {m}"))),
    }
}

pub fn test(args: &TestArgs, out: &mut dyn Write) -> CliResult<RunReport> {
    let (d, summary) = prepare(&args.data)?;
    let method: Method = args.method.into();
    let cfgs = configs(&d, &args.prior, ScaleArg::All, true)?;
    let mut config = echo(&args.data, &args.prior, &d);
    config.method = Some(method);
    if method == Method::Importance {
        config.n_is = Some(args.n_is);
    }
    let mut report = RunReport::new("test", args.prior.seed, config);
    for (scale, mut cfg) in cfgs {
        cfg.n_is = args.n_is;
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let result = match method {
            Method::Quadrature => log_bf01_quadrature(&d, &cfg)?,
            Method::Importance => log_bf01_importance(&d, &cfg)?,
        };
        let (p_m0, p_m1) = result.posterior_model_probs();
        report.bayes_factors.push(ScaleResult {
            scale,
            result,
            p_m0,
            p_m1,
        });
    }

    let io = |e: std::io::Error| CliError::Usage(format!("cannot write output: {e}"));
    print_dataset(out, &summary).map_err(io)?;
    writeln!(out, "seed: {}", report.seed).map_err(io)?;
    writeln!(
        out,
        "{:<8} {:>12} {:>12} {:>12} {:>9} {:>9}",
        "scale", "s_xi", "log B01", "B01", "P(M0|y)", "P(M1|y)"
    )
    .map_err(io)?;
    for r in &report.bayes_factors {
        let mc = r
            .result
            .mc_se
            .map(|se| format!("  (mc se {se:.2e})"))
            .unwrap_or_default();
        writeln!(
            out,
            "{:<8} {:>12.6} {:>12.4} {:>12} {:>9.4} {:>9.4}{mc}",
            scale_label(r.scale),
            r.result.s_xi,
            r.result.log_bf01,
            fmt_num(r.result.bf01()),
            r.p_m0,
            r.p_m1
        )
        .map_err(io)?;
    }
    report.dataset = Some(summary);
    Ok(report)
}

pub fn onesided(args: &OneSidedArgs, out: &mut dyn Write) -> CliResult<RunReport> {
    if args.draws == 0 {
        return Err(CliError::Usage("--draws must be positive".into()));
    }
    let (d, summary) = prepare(&args.data)?;
    let grid = evaluation_grid(&d, args.grid)?;
    let (scale, cfg) = configs(&d, &args.prior, ScaleArg::Medium, false)?.remove(0);
    let result = one_sided_test(&d, &cfg, args.draws, &grid)?;

    let mut config = echo(&args.data, &args.prior, &d);
    config.draws = Some(args.draws);
    config.grid = args.grid;
    let mut report = RunReport::new("onesided", cfg.seed, config);

    let io = |e: std::io::Error| CliError::Usage(format!("cannot write output: {e}"));
    print_dataset(out, &summary).map_err(io)?;
    writeln!(
        out,
        "seed: {}, scale: {} (s_xi = {:.6}), draws: {}, grid points: {}",
        cfg.seed,
        scale_label(scale),
        cfg.s_xi,
        args.draws,
        grid.len()
    )
    .map_err(io)?;
    writeln!(out, "{:<10} {:>8} {:>8} {:>8}", "", "pos", "neg", "comp").map_err(io)?;
    for (name, s) in [("prior", &result.prior), ("posterior", &result.posterior)] {
        writeln!(out, "{name:<10} {:>8.4} {:>8.4} {:>8.4}", s.p_pos, s.p_neg, s.p_comp).map_err(io)?;
    }
    for (name, v) in [
        ("B(pos)u", result.bf_pos_u),
        ("B(neg)u", result.bf_neg_u),
        ("B(comp)u", result.bf_comp_u),
        ("B(pos)(neg)", result.bf_pos_neg),
        ("B(pos)(comp)", result.bf_pos_comp),
        ("B(neg)(comp)", result.bf_neg_comp),
    ] {
        writeln!(out, "{name:<13} {}", fmt_num(v)).map_err(io)?;
    }
    for f in &result.degenerate {
        if f.value.is_nan() {
            writeln!(
                out,
                "note: {} is undefined (0/0); zero proportions: {}",
                f.name,
                f.zero_proportions.join(", ")
            )
            .map_err(io)?;
            continue;
        }
        writeln!(
            out,
            "note: {} = {} because {} is zero; lower bound with 3/T in its place: {:.4}",
            f.name,
            f.value,
            f.zero_proportions.join(" and "),
            f.lower_bound
        )
        .map_err(io)?;
    }
    report.dataset = Some(summary);
    report.one_sided = Some(result);
    Ok(report)
}

/// Long-format draws: `series,draw,x,value`, observed points first (with an
/// empty draw index), then for each draw its mean function and its slope.
pub fn draws_csv(d: &Dataset, draws: &gplinear::FunctionDraws) -> CliResult<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Usage(format!("cannot write CSV: {e}"));
    wtr.write_record(["series", "draw", "x", "value"]).map_err(err)?;
    for i in 0..d.n() {
        wtr.write_record(["observed", "", &d.x[i].to_string(), &d.y[i].to_string()])
            .map_err(err)?;
    }
    for t in 0..draws.n_draws() {
        let ts = t.to_string();
        for (series, m) in [("mean_fn", &draws.mean_fn), ("slope", &draws.slope)] {
            for (j, x) in draws.grid.iter().enumerate() {
                wtr.write_record([series, &ts, &x.to_string(), &m[(t, j)].to_string()])
                    .map_err(err)?;
            }
        }
    }
    wtr.into_inner()
        .map_err(|e| CliError::Usage(format!("cannot write CSV: {e}")))
}

pub fn draws(args: &DrawsArgs, out: &mut dyn Write) -> CliResult<RunReport> {
    if args.draws == 0 {
        return Err(CliError::Usage("--draws must be positive".into()));
    }
    let (d, summary) = prepare(&args.data)?;
    let grid = evaluation_grid(&d, args.grid)?;
    let (scale, cfg) = configs(&d, &args.prior, ScaleArg::Medium, false)?.remove(0);
    let samples = sample_posterior(&d, &cfg, args.draws)?;
    let fd = draw_functions_posterior(&d, &cfg, &samples, &grid)?;
    let bytes = draws_csv(&d, &fd)?;
    write_file(&args.out, &bytes)?;

    let mut config = echo(&args.data, &args.prior, &d);
    config.draws = Some(args.draws);
    config.grid = args.grid;
    let mut report = RunReport::new("draws", cfg.seed, config);
    report.dataset = Some(summary);
    report.artifacts.push(args.out.display().to_string());
    writeln!(
        out,
        "wrote {} posterior draws on {} grid points ({} scale, s_xi = {:.6}, seed {}) to {}",
        args.draws,
        grid.len(),
        scale_label(scale),
        cfg.s_xi,
        cfg.seed,
        args.out.display()
    )
    .map_err(|e| CliError::Usage(format!("cannot write output: {e}")))?;
    Ok(report)
}

/// Tidy simulation table: `kind,h,n,scale,rep,log_bf01,mc_se`.
pub fn sim_csv(rows: &[SimRow]) -> CliResult<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Usage(format!("cannot write CSV: {e}"));
    wtr.write_record(["kind", "h", "n", "scale", "rep", "log_bf01", "mc_se"])
        .map_err(err)?;
    for r in rows {
        wtr.write_record([
            r.kind.label().to_string(),
            r.h.to_string(),
            r.n.to_string(),
            r.scale.label().to_string(),
            r.rep.to_string(),
            r.log_bf01.to_string(),
            r.mc_se.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    wtr.into_inner()
        .map_err(|e| CliError::Usage(format!("cannot write CSV: {e}")))
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<RunReport> {
    let mut spec = GridSpec::new(
        args.kind.kinds(),
        parse_h(&args.h)?,
        parse_n(&args.n)?,
        parse_scales(&args.scales)?,
    );
    spec.replications = args.reps;
    spec.seed = args.seed;
    spec.sigma = args.sigma;
    spec.n_quad = args.n_quad;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let rows = run_grid(&spec)?;
    let csv = sim_csv(&rows)?;
    let summary = summarize(&rows);

    let config = ConfigEcho {
        n_quad: Some(args.n_quad),
        ..Default::default()
    };
    let mut report = RunReport::new("simulate", args.seed, config);
    // With the table on standard output the summary goes to standard error.
    let human: &mut dyn Write = match &args.out {
        Some(p) => {
            write_file(p, &csv)?;
            report.artifacts.push(p.display().to_string());
            out
        }
        None => {
            out.write_all(&csv)
                .map_err(|e| CliError::Usage(format!("cannot write output: {e}")))?;
            err
        }
    };
    let io = |e: std::io::Error| CliError::Usage(format!("cannot write output: {e}"));
    writeln!(human, "seed: {}, rows: {}", args.seed, rows.len()).map_err(io)?;
    writeln!(
        human,
        "{:<5} {:>6} {:>5} {:<7} {:>12} {:>9} {:>7}",
        "kind", "h", "n", "scale", "mean logB01", "se", "failed"
    )
    .map_err(io)?;
    for c in &summary {
        writeln!(
            human,
            "{:<5} {:>6} {:>5} {:<7} {:>12.4} {:>9.4} {:>7}",
            c.kind.label(),
            c.h,
            c.n,
            c.scale.label(),
            c.mean_log_bf01,
            c.se,
            c.n_failed
        )
        .map_err(io)?;
    }
    report.simulation = Some(summary);
    Ok(report)
}
