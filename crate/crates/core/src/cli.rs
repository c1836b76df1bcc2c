//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use asynclc::bandwidth::{
    auto_smoothing, default_candidates, select, Candidate, CvPlan, Evaluation, Stage, DEFAULT_FOLDS,
};
use asynclc::estimators::{
    default_grid, first_stage_grid, fit_curve, normalize_longitudinal, validate_grid, CoefName,
    ColumnSelector, CurveEstimate, Method, NormalizeMode, Smoothing, TwoStepPipeline,
};
use asynclc::io::{
    emit_plot_data, ingest, write_curve_csv, write_curve_table, write_cv_csv, write_dataset,
    write_json, write_point_table, BandMetadata, RunMetadata, TimeScale,
};
use asynclc::kernels::{BandwidthSpec, KernelFamily};
use asynclc::scb::{
    BootstrapProcess, Contrast, MultiplierLaw, ScbConfig, ScbResult, Target, DEFAULT_REPLICATES,
};
use asynclc::simulation::{run_monte_carlo, DgpConfig, EstimatorSpec, McConfig, Setting};
use asynclc::{Dataset, Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "asynclc",
    version,
    about = "Varying-coefficient regression with asynchronous longitudinal covariates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit coefficient curves on a grid.
    Fit(FitCmd),
    /// Fit and add wild-bootstrap simultaneous confidence bands.
    Scb(ScbCmd),
    /// Cross-validate bandwidths.
    SelectBandwidth(SelectCmd),
    /// Monte Carlo study on simulated data.
    Simulate(SimulateCmd),
    /// Preset Monte Carlo tables.
    Reproduce(ReproduceCmd),
    /// Standardize one covariate column and write new CSVs.
    Normalize(NormalizeCmd),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CSV with subject_id,time,y,x1..xp
    #[arg(long = "sync")]
    sync: PathBuf,
    /// CSV with subject_id,time,z1..zq
    #[arg(long = "async")]
    asynchronous: Option<PathBuf>,
    /// Times are already in [0,1]; skip rescaling.
    #[arg(long)]
    unit_time: bool,
    /// key = value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// one-step, two-step (centering) or two-step-vcm
    #[arg(long, default_value = "two-step")]
    method: String,
    /// epanechnikov or uniform
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    /// First-stage bandwidth: a number, a rule like n^-0.6, or auto
    #[arg(long, default_value = "auto")]
    h: String,
    #[arg(long, default_value = "auto")]
    h1: String,
    #[arg(long, default_value = "auto")]
    h2: String,
    /// default (181 points on [0.05,0.95]), full (201 on [0,1]) or lo:hi:count
    #[arg(long, default_value = "default")]
    grid: String,
    /// Seed for cross-validation folds when a bandwidth is auto.
    #[arg(long, default_value_t = 0)]
    cv_seed: u64,
    /// Output CSV ('-' for standard output).
    #[arg(long, default_value = "-")]
    out: String,
    /// Directory for per-coefficient plot data.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct ScbCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// beta, gamma or all
    #[arg(long, default_value = "all")]
    target: String,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// rademacher or normal
    #[arg(long, default_value = "rademacher")]
    multiplier: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SelectCmd {
    #[command(flatten)]
    data: DataArgs,
    /// first, second or one-step
    #[arg(long, default_value = "first")]
    stage: String,
    /// two-step (centering) or two-step-vcm; first-stage method for the second stage
    #[arg(long, default_value = "two-step")]
    method: String,
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    /// First-stage bandwidth for the second stage (number, rule or auto).
    #[arg(long, default_value = "auto")]
    h: String,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated bandwidths, or h1:h2 pairs; default grid when absent.
    #[arg(long)]
    candidates: Option<String>,
    /// integrated, or a single time in [0,1]
    #[arg(long, default_value = "integrated")]
    eval: String,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// i or ii
    #[arg(long)]
    setting: Option<String>,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Bootstrap replicates for bands.
    #[arg(long, default_value_t = 500)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Output prefix: writes <out>_points.csv, <out>_curves.csv and <out>.json.
    #[arg(long, default_value = "simulation")]
    out: String,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateCmd {
    #[command(flatten)]
    study: StudyArgs,
    #[arg(long, default_value = "two-step")]
    method: String,
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    #[arg(long, default_value = "n^-0.6")]
    h: String,
    #[arg(long, default_value = "n^-0.5")]
    h1: String,
    #[arg(long, default_value = "n^-0.5")]
    h2: String,
    /// Also build simultaneous bands.
    #[arg(long)]
    scb: bool,
}

#[derive(Args, Debug)]
struct ReproduceCmd {
    /// table1, table2, tables1 or tables2
    table: String,
    #[command(flatten)]
    study: StudyArgs,
    /// Add rows with cross-validated bandwidths (slow).
    #[arg(long)]
    auto: bool,
}

#[derive(Args, Debug)]
struct NormalizeCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Column to standardize: x1.. or z1..
    #[arg(long)]
    column: String,
    /// longitudinal, baseline or auto
    #[arg(long, default_value = "auto")]
    mode: String,
    #[arg(long, default_value = "0.1")]
    h: f64,
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    #[arg(long)]
    out_sync: PathBuf,
    #[arg(long)]
    out_async: Option<PathBuf>,
}

fn info(msg: impl AsRef<str>) {
    eprintln!("INFO {}", msg.as_ref());
}

fn warn(msg: impl AsRef<str>) {
    eprintln!("WARN {}", msg.as_ref());
}

/// Expands `--config FILE` into flags that were not given on the command line.
fn apply_config(args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| Error::InvalidParameter("--config needs a file".into()))?,
    };
    let sub_name = args
        .iter()
        .skip(1)
        .find(|a| !a.starts_with('-'))
        .cloned()
        .unwrap_or_default();
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(&sub_name)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown command '{sub_name}'")))?;
    let flags: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(|l| l.replace('-', "_")))
        .filter(|l| l != "config" && l != "help")
        .collect();
    let allowed: Vec<&str> = flags.iter().map(String::as_str).collect();
    let cfg = asynclc::io::read_config(Path::new(&path), &allowed)?;
    let mut out = args.clone();
    for (key, value) in cfg {
        let flag = format!("--{}", key.replace('_', "-"));
        let given = args
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        let is_switch = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(flag.trim_start_matches('-')))
            .is_some_and(|a| !a.get_action().takes_values());
        if is_switch {
            match value.as_str() {
                "true" | "yes" | "1" => out.push(flag),
                "false" | "no" | "0" => {}
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "config key '{key}' expects true/false, got '{other}'"
                    )))
                }
            }
        } else {
            out.push(flag);
            out.push(value);
        }
    }
    Ok(out)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ASYNCLC_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| {
            Error::InvalidParameter(format!("ASYNCLC_THREADS must be a count, got '{v}'"))
        })?;
        if n > 0 {
            // fails only if a pool already exists, which is harmless
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    match run_inner(args) {
        Ok(()) => 0,
        Err(Exit::Clap(e)) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    let msg = e.to_string();
                    let first = msg
                        .lines()
                        .next()
                        .unwrap_or("")
                        .trim_start_matches("error: ");
                    eprintln!("ERROR BAD_PARAM: {first}");
                    1
                }
            }
        }
        Err(Exit::App(e)) => {
            eprintln!("ERROR {}: {e}", e.code());
            e.exit_code()
        }
    }
}

enum Exit {
    Clap(clap::Error),
    App(Error),
}

impl From<Error> for Exit {
    fn from(e: Error) -> Self {
        Exit::App(e)
    }
}

fn run_inner(args: Vec<String>) -> std::result::Result<(), Exit> {
    configure_threads()?;
    let args = apply_config(args)?;
    let cli = Cli::try_parse_from(args).map_err(Exit::Clap)?;
    match cli.command {
        Command::Fit(c) => cmd_fit(c)?,
        Command::Scb(c) => cmd_scb(c)?,
        Command::SelectBandwidth(c) => cmd_select(c)?,
        Command::Simulate(c) => cmd_simulate(c)?,
        Command::Reproduce(c) => cmd_reproduce(c)?,
        Command::Normalize(c) => cmd_normalize(c)?,
    }
    Ok(())
}

fn load(data: &DataArgs) -> Result<Dataset> {
    let scale = if data.unit_time {
        TimeScale::Unit
    } else {
        TimeScale::Rescale
    };
    let ds = ingest(&data.sync, data.asynchronous.as_deref(), scale)?;
    info(format!("loaded n={} p={} q={}", ds.n(), ds.p(), ds.q()));
    if let Some(m) = ds.time_map() {
        info(format!("time rescaled: [{}, {}] -> [0, 1]", m.min, m.max));
    }
    Ok(ds)
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let grid = match text {
        "default" => default_grid(),
        "full" => first_stage_grid(),
        other => {
            let bad = || Error::InvalidParameter(format!("bad grid '{other}' (use lo:hi:count)"));
            let parts: Vec<&str> = other.split(':').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            let lo: f64 = parts[0].parse().map_err(|_| bad())?;
            let hi: f64 = parts[1].parse().map_err(|_| bad())?;
            let m: usize = parts[2].parse().map_err(|_| bad())?;
            if m == 0 {
                return Err(bad());
            }
            if m == 1 {
                vec![lo]
            } else {
                (0..m)
                    .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
                    .collect()
            }
        }
    };
    validate_grid(&grid)?;
    Ok(grid)
}

/// Resolves bandwidths, running cross-validation for the `auto` ones.
fn resolve_smoothing(ds: &Dataset, args: &FitArgs) -> Result<(Method, Smoothing<f64>)> {
    let method = Method::parse(&args.method)?;
    let kernel = KernelFamily::parse(&args.kernel)?;
    let n = ds.n();
    let h = if method.is_two_step() {
        BandwidthSpec::parse(&args.h)?.resolve(n)?
    } else {
        None
    };
    let h1 = BandwidthSpec::parse(&args.h1)?.resolve(n)?;
    let h2 = BandwidthSpec::parse(&args.h2)?.resolve(n)?;
    let needs_cv = (method.is_two_step() && h.is_none()) || h1.is_none() || h2.is_none();
    let smoothing = if needs_cv {
        if method != Method::OneStep && ds.q() == 0 && (h1.is_none() || h2.is_none()) {
            return Err(Error::InvalidParameter(
                "h1/h2 cross-validation needs asynchronous covariates".into(),
            ));
        }
        let (s, runs) = auto_smoothing(ds, method, kernel, h, h1, h2, args.cv_seed)?;
        for r in &runs {
            for w in &r.warnings {
                warn(w);
            }
            info(format!(
                "{} bandwidth chosen by cross-validation: {:?}",
                r.stage, r.chosen
            ));
        }
        s
    } else {
        Smoothing {
            kernel,
            h,
            h1: h1.expect("given"),
            h2: h2.expect("given"),
        }
    };
    Ok((method, smoothing))
}

fn metadata(
    ds: &Dataset,
    curve: &CurveEstimate<f64>,
    bands: &[(CoefName, ScbResult<f64>)],
) -> RunMetadata {
    let s = &curve.smoothing;
    RunMetadata {
        method: curve.method.to_string(),
        kernel: format!("{:?}", s.kernel).to_lowercase(),
        h: s.h,
        h1: s.h1,
        h2: s.h2,
        n: ds.n(),
        p: ds.p(),
        q: ds.q(),
        grid_points: curve.grid.len(),
        failed_points: curve.n_failed(),
        time_map: ds.time_map(),
        bands: bands
            .iter()
            .map(|(n, b)| BandMetadata::new(*n, b))
            .collect(),
        warnings: curve
            .points
            .iter()
            .filter(|p| !p.is_ok())
            .map(|p| {
                let errs: Vec<String> = p.errors().iter().map(|e| e.to_string()).collect();
                format!("t={}: {}", p.t, errs.join("; "))
            })
            .collect(),
    }
}

/// Writes the grid table (to a file or standard output), its metadata and plot data.
fn emit_fit(
    ds: &Dataset,
    curve: &CurveEstimate<f64>,
    bands: &[(CoefName, ScbResult<f64>)],
    args: &FitArgs,
) -> Result<()> {
    let refs: Vec<(CoefName, &ScbResult<f64>)> = bands.iter().map(|(n, b)| (*n, b)).collect();
    let meta = metadata(ds, curve, bands);
    if curve.n_failed() > 0 {
        warn(format!(
            "{} grid points failed; their cells are blank",
            curve.n_failed()
        ));
    }
    if args.out == "-" {
        let dir = tempdir_path()?;
        let tmp = dir.join("fit.csv");
        write_curve_csv(curve, &refs, &tmp)?;
        let text = std::fs::read_to_string(&tmp).map_err(|e| Error::Io {
            path: tmp.display().to_string(),
            msg: e.to_string(),
        })?;
        let _ = std::fs::remove_dir_all(&dir);
        std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io {
                path: "stdout".into(),
                msg: e.to_string(),
            })?;
        for b in &meta.bands {
            info(format!("{} c_alpha = {}", b.coefficient, b.c_alpha));
        }
    } else {
        let out = PathBuf::from(&args.out);
        write_curve_csv(curve, &refs, &out)?;
        write_json(&meta, &PathBuf::from(format!("{}.json", args.out)))?;
    }
    if let Some(dir) = &args.plot_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            msg: e.to_string(),
        })?;
        emit_plot_data(curve, &refs, dir, "curve")?;
    }
    Ok(())
}

fn tempdir_path() -> Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("asynclc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(dir)
}

fn cmd_fit(c: FitCmd) -> Result<()> {
    let ds = load(&c.data)?;
    let grid = parse_grid(&c.fit.grid)?;
    let (method, smoothing) = resolve_smoothing(&ds, &c.fit)?;
    let curve = fit_curve(&ds, method, &grid, smoothing)?;
    emit_fit(&ds, &curve, &[], &c.fit)
}

fn cmd_scb(c: ScbCmd) -> Result<()> {
    let cfg = ScbConfig {
        replicates: c.replicates,
        alpha: c.alpha,
        law: MultiplierLaw::parse(&c.multiplier)?,
        seed: c.seed,
    };
    let targets: Vec<Target> = match c.target.as_str() {
        "beta" => vec![Target::Beta],
        "gamma" => vec![Target::Gamma],
        "all" => vec![Target::Beta, Target::Gamma],
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown band target '{other}'"
            )))
        }
    };
    // validate before any expensive work
    if cfg.replicates < 100 || !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need replicates >= 100 and alpha in (0,1), got {} and {}",
            cfg.replicates, cfg.alpha
        )));
    }
    let ds = load(&c.data)?;
    let grid = parse_grid(&c.fit.grid)?;
    let (method, smoothing) = resolve_smoothing(&ds, &c.fit)?;
    let pipeline = TwoStepPipeline::new(&ds, method, smoothing)?;
    let curve = pipeline.fit_grid(&grid)?;
    let mut bands = Vec::new();
    for target in targets {
        let dim = match target {
            Target::Beta => ds.p(),
            Target::Gamma => ds.q(),
        };
        if dim == 0 {
            continue;
        }
        let process = BootstrapProcess::new(&ds, &curve, target)?;
        for k in 0..dim {
            let band = process.band(&Contrast::Coordinate(k), &cfg)?;
            let name = match target {
                Target::Beta => CoefName::Beta(k),
                Target::Gamma => CoefName::Gamma(k),
            };
            bands.push((name, band));
        }
    }
    emit_fit(&ds, &curve, &bands, &c.fit)
}

fn parse_candidates(text: &str) -> Result<Vec<Candidate<f64>>> {
    text.split(',')
        .map(|item| {
            let bad = || Error::InvalidParameter(format!("bad candidate '{item}'"));
            match item.split_once(':') {
                Some((a, b)) => Ok(Candidate::Pair(
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                )),
                None => Ok(Candidate::Single(item.trim().parse().map_err(|_| bad())?)),
            }
        })
        .collect()
}

fn cmd_select(c: SelectCmd) -> Result<()> {
    let kernel = KernelFamily::parse(&c.kernel)?;
    let evaluation = match c.eval.as_str() {
        "integrated" => Evaluation::default_integrated(),
        t => Evaluation::Pointwise(
            t.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad evaluation time '{t}'")))?,
        ),
    };
    let ds = load(&c.data)?;
    let method = Method::parse(&c.method)?;
    let pipeline;
    let stage = match c.stage.as_str() {
        "first" => Stage::FirstStage,
        "one-step" => Stage::OneStep,
        "second" => {
            if !method.is_two_step() {
                return Err(Error::InvalidParameter(
                    "the second stage needs a two-step method".into(),
                ));
            }
            let h = match BandwidthSpec::parse(&c.h)?.resolve(ds.n())? {
                Some(h) => h,
                None => {
                    let stage = Stage::FirstStage;
                    let plan = CvPlan::default_for(&ds, &stage, kernel, c.seed)?;
                    let res = select(&plan, &ds, stage)?;
                    info(format!(
                        "first-stage h chosen by cross-validation: {}",
                        res.chosen.h1()
                    ));
                    res.chosen.h1()
                }
            };
            pipeline = TwoStepPipeline::new(
                &ds,
                method,
                Smoothing::two_step(h, 0.1, 0.1).with_kernel(kernel),
            )?;
            Stage::SecondStage(pipeline.beta_curve().expect("two-step pipeline"))
        }
        other => return Err(Error::InvalidParameter(format!("unknown stage '{other}'"))),
    };
    let candidates = match &c.candidates {
        Some(text) => parse_candidates(text)?,
        None => default_candidates(ds.n(), &stage),
    };
    let plan = CvPlan::new(ds.n(), c.folds, c.seed, candidates, evaluation, kernel)?;
    let res = select(&plan, &ds, stage)?;
    for w in &res.warnings {
        warn(w);
    }
    if c.out == "-" {
        let dir = tempdir_path()?;
        let tmp = dir.join("cv.csv");
        write_cv_csv(&res, &tmp)?;
        let text = std::fs::read_to_string(&tmp).unwrap_or_default();
        let _ = std::fs::remove_dir_all(&dir);
        print!("{text}");
    } else {
        write_cv_csv(&res, Path::new(&c.out))?;
        write_json(&res, &PathBuf::from(format!("{}.json", c.out)))?;
    }
    Ok(())
}

fn run_study(
    study: &StudyArgs,
    default_setting: &str,
    estimators: Vec<EstimatorSpec>,
) -> Result<()> {
    if !(study.alpha > 0.0 && study.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in (0,1), got {}",
            study.alpha
        )));
    }
    let setting = Setting::parse(study.setting.as_deref().unwrap_or(default_setting))?;
    let mut mc = McConfig::new(study.reps, estimators, study.seed);
    mc.scb.replicates = study.b;
    mc.scb.alpha = study.alpha;
    mc.validate()?;
    let dgp = DgpConfig::new(study.n, setting);
    dgp.validate()?;
    info(format!(
        "running {} replicates of {} estimator(s), n={}",
        study.reps,
        mc.estimators.len(),
        study.n
    ));
    let report = run_monte_carlo(&mc, &dgp)?;
    for w in &report.warnings {
        warn(w);
    }
    write_point_table(&report, Path::new(&format!("{}_points.csv", study.out)))?;
    write_curve_table(&report, Path::new(&format!("{}_curves.csv", study.out)))?;
    write_json(&report, Path::new(&format!("{}.json", study.out)))?;
    info(format!(
        "wrote {0}_points.csv, {0}_curves.csv, {0}.json",
        study.out
    ));
    Ok(())
}

fn cmd_simulate(c: SimulateCmd) -> Result<()> {
    let method = Method::parse(&c.method)?;
    let mut spec = match method {
        Method::OneStep => {
            EstimatorSpec::one_step(BandwidthSpec::parse(&c.h1)?, BandwidthSpec::parse(&c.h2)?)
        }
        _ => EstimatorSpec::two_step(
            BandwidthSpec::parse(&c.h)?,
            BandwidthSpec::parse(&c.h1)?,
            BandwidthSpec::parse(&c.h2)?,
        ),
    };
    spec.method = method;
    spec.kernel = KernelFamily::parse(&c.kernel)?;
    if method == Method::TwoStepVcm {
        spec.label = spec.label.replacen("two-step", "two-step-vcm", 1);
    }
    if c.scb {
        spec = spec.with_scb();
    }
    run_study(&c.study, "i", vec![spec])
}

fn preset(table: &str, auto: bool) -> Result<(&'static str, Vec<EstimatorSpec>)> {
    let r = BandwidthSpec::rule;
    let centering = |h| EstimatorSpec::two_step(r(h), r(0.5), r(0.5));
    let vcm = |h| {
        let mut s = EstimatorSpec::two_step(r(h), r(0.5), r(0.5));
        s.method = Method::TwoStepVcm;
        s.label = s.label.replacen("two-step", "two-step-vcm", 1);
        s
    };
    let one = |h| EstimatorSpec::one_step(r(h), r(h));
    let auto_c = EstimatorSpec::two_step(
        BandwidthSpec::Auto,
        BandwidthSpec::Auto,
        BandwidthSpec::Auto,
    );
    let auto_v = {
        let mut s = auto_c.clone();
        s.method = Method::TwoStepVcm;
        s.label = s.label.replacen("two-step", "two-step-vcm", 1);
        s
    };
    let auto_o = EstimatorSpec::one_step(BandwidthSpec::Auto, BandwidthSpec::Auto);
    let (setting, mut specs, autos) = match table {
        "table1" => (
            "i",
            vec![centering(0.6), centering(0.7), one(0.45), one(0.5)],
            vec![auto_c, auto_o],
        ),
        "table2" => (
            "i",
            vec![centering(0.6), centering(0.7), one(0.45), one(0.5)]
                .into_iter()
                .map(EstimatorSpec::with_scb)
                .collect(),
            vec![],
        ),
        "tables1" => ("i", vec![vcm(0.6), vcm(0.7)], vec![auto_v]),
        "tables2" => (
            "ii",
            vec![
                centering(0.6),
                centering(0.7),
                vcm(0.6),
                vcm(0.7),
                one(0.45),
                one(0.5),
            ],
            vec![auto_c, auto_v, auto_o],
        ),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown table '{other}' (table1, table2, tables1, tables2)"
            )))
        }
    };
    if auto {
        specs.extend(autos);
    }
    Ok((setting, specs))
}

fn cmd_reproduce(c: ReproduceCmd) -> Result<()> {
    let (setting, specs) = preset(&c.table, c.auto)?;
    run_study(&c.study, setting, specs)
}

fn cmd_normalize(c: NormalizeCmd) -> Result<()> {
    let column = ColumnSelector::parse(&c.column)?;
    let mode = NormalizeMode::parse(&c.mode)?;
    let kernel = KernelFamily::parse(&c.kernel)?;
    if matches!(column, ColumnSelector::Async(_)) && c.data.asynchronous.is_none() {
        return Err(Error::InvalidParameter("z columns need --async".into()));
    }
    let ds = load(&c.data)?;
    let out = normalize_longitudinal(&ds, kernel, c.h, column, mode)?;
    // back to the original time scale
    let out = match ds.time_map() {
        Some(m) => out.map_subjects(|s| {
            let mut s = s.clone();
            for t in s.sync_times.iter_mut().chain(s.async_times.iter_mut()) {
                *t = m.from_unit(*t);
            }
            s
        }),
        None => out,
    };
    let async_out = if out.q() > 0 {
        c.out_async.as_deref()
    } else {
        None
    };
    if out.q() > 0 && c.out_async.is_none() {
        warn("no --out-async given; asynchronous covariates not written");
    }
    write_dataset(&out, &c.out_sync, async_out)
}
