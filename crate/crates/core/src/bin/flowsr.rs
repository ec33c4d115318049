use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use flowsr::config::{parse_mre, parse_triple, KernelKind, PhantomKind, RunConfig};
use flowsr::io::{calibration_text, load_dataset, save_dataset, solve_reports_csv, write_atomic};
use flowsr::metrics::{evaluate_methods, EvalConfig, FlowMask};
use flowsr::oracle::{oracle_matrix, run_oracle_matrix, ORACLE_GRIDS, ORACLE_RATES, ORACLE_TOLERANCE};
use flowsr::pipeline::run_pipeline;
use flowsr::{
    degrade_dataset, superresolve_dataset, upsample_dataset, Decimation, DegradationConfig, Error, Grid3, InterpMethod,
    KernelChoice, PriorMode, SolverConfig,
};

#[derive(Parser)]
#[command(name = "flowsr", version, about = "Fourier-domain super-resolution for 4D flow MRI velocity volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an analytic phantom dataset.
    Simulate(SimulateArgs),
    /// Blur, decimate and add k-space noise to a dataset.
    Degrade(DegradeArgs),
    /// Super-resolve a low-resolution dataset.
    Sr(SrArgs),
    /// Score super-resolved datasets against ground truth.
    Eval(EvalArgs),
    /// Compare the fast solver against the dense reference.
    OracleCheck(OracleArgs),
    /// Run simulate, degrade, sr and eval from one configuration.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "poiseuille")]
    phantom: String,
    /// m,n,s
    #[arg(long, default_value = "64,64,64")]
    dims: String,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    /// cm/s
    #[arg(long, default_value_t = 150.0)]
    venc: f64,
    /// Peak centreline speed, cm/s.
    #[arg(long, default_value_t = 100.0)]
    vmax: f64,
    /// Tube radius in voxels; defaults to 0.3 of the smaller cross-section side.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value = "4,4,4")]
    factor: String,
    #[arg(long, default_value = "ideal")]
    kernel: String,
    /// Gaussian FWHM in HR voxels per axis; defaults to the decimation rates.
    #[arg(long)]
    fwhm: Option<String>,
}

impl KernelArgs {
    fn resolve(&self) -> flowsr::Result<(Decimation, KernelChoice)> {
        let f: [usize; 3] = parse_triple(&self.factor)?;
        let d = Decimation::new(f[0], f[1], f[2])?;
        let kind: KernelKind = self.kernel.parse()?;
        let fwhm = self.fwhm.as_deref().map(parse_triple::<f64>).transpose()?;
        Ok((d, kind.choice(d, fwhm)))
    }
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Target PSNR in dB, or "none" for a noiseless degradation.
    #[arg(long, default_value = "15")]
    noise_psnr: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SrArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// fsr | trilinear | tricubic
    #[arg(long, default_value = "fsr")]
    method: String,
    #[arg(long, default_value_t = flowsr::solver::DEFAULT_TAU)]
    tau: f64,
    /// trilinear | zero-fill
    #[arg(long, default_value = "trilinear")]
    prior: String,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Solve report CSV; defaults to <out>.solve.csv.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    sr: PathBuf,
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = flowsr::metrics::DEFAULT_MASK_THRESHOLD)]
    mask_threshold: f64,
    /// Volume file whose first-frame magnitude (> 0) marks the flow region.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// peak | per-voxel
    #[arg(long, default_value = "peak")]
    mre: String,
}

#[derive(Args)]
struct OracleArgs {
    /// Restrict the check to one grid.
    #[arg(long)]
    dims: Option<String>,
    /// Restrict the check to one decimation.
    #[arg(long)]
    factor: Option<String>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Drop the decimation factor from the solver denominator (negative control).
    #[arg(long, hide = true)]
    break_constant: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set tau=0.05.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn simulate(a: SimulateArgs) -> flowsr::Result<()> {
    let cfg = RunConfig {
        phantom: a.phantom.parse::<PhantomKind>()?,
        dims: parse_triple(&a.dims)?,
        frames: a.frames,
        venc: a.venc,
        vmax: a.vmax,
        radius: a.radius,
        factor: [1, 1, 1],
        ..RunConfig::default()
    };
    cfg.validate()?;
    let ds = cfg.build_phantom()?;
    save_dataset(&a.out, &ds)?;
    println!("wrote {} ({} frames, {:?})", a.out.display(), ds.frames().len(), ds.grid().dims());
    Ok(())
}

fn degrade(a: DegradeArgs) -> flowsr::Result<()> {
    let (d, kernel) = a.kernel.resolve()?;
    let noise_psnr_db = match a.noise_psnr.as_str() {
        "none" => None,
        s => Some(s.parse::<f64>().map_err(|_| Error::Config(format!("bad --noise-psnr '{s}'")))?),
    };
    let cfg = DegradationConfig { d, kernel, noise_psnr_db, rng_seed: a.seed };
    cfg.validate()?;
    let hr = load_dataset(&a.input)?;
    d.check_divides(hr.grid())?;
    let (lr, cal) = degrade_dataset(&hr, &cfg)?;
    save_dataset(&a.out, &lr)?;
    let sidecar = with_suffix(&a.out, ".cal");
    write_atomic(&sidecar, calibration_text(&cal).as_bytes())?;
    println!("wrote {} and {}; achieved PSNR {:.3} dB", a.out.display(), sidecar.display(), cal.achieved_psnr_db);
    Ok(())
}

fn sr(a: SrArgs) -> flowsr::Result<()> {
    let (d, kernel) = a.kernel.resolve()?;
    let lr = load_dataset(&a.input)?;
    let hr_grid: Grid3 = lr.grid().refined(d)?;
    let out = if a.method == "fsr" {
        let prior: PriorMode = a.prior.parse()?;
        let cfg = SolverConfig::new(a.tau, kernel, d, prior)?;
        let (ds, reports) = superresolve_dataset(&lr, &cfg, hr_grid)?;
        let report = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".solve.csv"));
        write_atomic(&report, solve_reports_csv(&reports).as_bytes())?;
        ds
    } else {
        let method: InterpMethod = a.method.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        upsample_dataset(&lr, d, method)?
    };
    save_dataset(&a.out, &out)?;
    println!("wrote {} ({:?})", a.out.display(), out.grid().dims());
    Ok(())
}

fn eval(a: EvalArgs) -> flowsr::Result<()> {
    let normalization = parse_mre(&a.mre)?;
    if !(a.mask_threshold > 0.0 && a.mask_threshold < 1.0) {
        return Err(Error::Config(format!("--mask-threshold must be in (0, 1), got {}", a.mask_threshold)));
    }
    let truth = load_dataset(&a.truth)?;
    let external_mask = match &a.mask {
        Some(p) => {
            let m = load_dataset(p)?;
            Some(FlowMask::from_positive(m.frames()[0].magnitude())?)
        }
        None => None,
    };
    let cfg = EvalConfig { threshold_fraction: a.mask_threshold, external_mask, normalization };
    let sr = load_dataset(&a.sr)?;
    let baseline = a.baseline.as_ref().map(load_dataset).transpose()?;
    let mut methods = vec![("fsr", &sr)];
    if let Some(b) = &baseline {
        methods.push(("baseline", b));
    }
    let report = evaluate_methods(&truth, &methods, &cfg)?;
    write_atomic(&a.out, report.to_csv_string().as_bytes())?;
    print!("{}", report.summary_table());
    Ok(())
}

/// Returns whether every case passed.
fn oracle_check(a: OracleArgs) -> flowsr::Result<bool> {
    let grids = match &a.dims {
        Some(s) => vec![parse_triple::<usize>(s)?],
        None => ORACLE_GRIDS.to_vec(),
    };
    let rates = match &a.factor {
        Some(s) => vec![parse_triple::<usize>(s)?],
        None => ORACLE_RATES.to_vec(),
    };
    let cases = oracle_matrix(&grids, &rates)?;
    let start = Instant::now();
    let check = run_oracle_matrix(&cases, a.seed, a.break_constant)?;
    for c in &check.cases {
        let status = if c.rel_error <= ORACLE_TOLERANCE { "ok" } else { "FAIL" };
        println!(
            "{status:4} grid={:?} d={:?} kernel={} tau={:e} rel_error={:.3e}",
            c.hr.dims(),
            c.d.rates(),
            c.kernel.name(),
            c.tau,
            c.rel_error
        );
    }
    println!(
        "{} cases, max relative error {:.3e} (tolerance {:e}), {:.2} s: {}",
        check.cases.len(),
        check.max_rel_error,
        ORACLE_TOLERANCE,
        start.elapsed().as_secs_f64(),
        if check.passed { "PASS" } else { "FAIL" }
    );
    Ok(check.passed)
}

fn pipeline(a: PipelineArgs) -> flowsr::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    for o in &a.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{o}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(dir) = a.out_dir {
        cfg.out_dir = dir;
    }
    let start = Instant::now();
    let (exp, files) = run_pipeline(&cfg)?;
    print!("{}", exp.report.summary_table());
    println!(
        "achieved noise PSNR {:.3} dB; FSR beats baseline on every frame: {}; {:.1} s; outputs in {}",
        exp.calibration.achieved_psnr_db,
        exp.fsr_dominates(),
        start.elapsed().as_secs_f64(),
        files.summary.parent().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

fn is_usage(e: &Error) -> bool {
    matches!(e.root(), Error::Config(_) | Error::Parameter(_))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Degrade(a) => degrade(a).map(|_| true),
        Command::Sr(a) => sr(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::OracleCheck(a) => oracle_check(a),
        Command::Pipeline(a) => pipeline(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
