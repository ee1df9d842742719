use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tactile_flow::ablation::{run_ablation, to_csv};
use tactile_flow::flo::{encode_flo, read_flo};
use tactile_flow::gradcheck::{self, GradCheckConfig};
use tactile_flow::io::{encode_rgb_png, encode_png, read_image, StagedWrites};
use tactile_flow::metrics::{evaluate_pair, EvalReport, DEFAULT_EPE_MARGIN};
use tactile_flow::synth::{make_case, ColorPattern, Deformation, DeformationKind, DotGrid, Pattern, SceneSpec};
use tactile_flow::viz::flow_to_rgb;
use tactile_flow::{config, estimate_flow, Error, LossBreakdown, SolverConfig};

/// Dense optical flow for elastic gel deformation in vision-based tactile
/// sensors.
#[derive(Parser)]
#[command(name = "tactile-flow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the flow from I1 to I2.
    Estimate(EstimateArgs),
    /// Render a synthetic marker pair with ground-truth flow.
    Synth(SynthArgs),
    /// Score an existing flow for an image pair.
    Eval(EvalArgs),
    /// Compare energy-term configurations on a synthetic case directory.
    Ablate(AblateArgs),
    /// Check the analytic energy gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

/// Solver settings. Each flag overrides the same key of `--config`.
#[derive(Args, Default)]
struct SolverFlags {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight of SSIM against L1 in the photometric term.
    #[arg(long)]
    alpha: Option<f64>,
    /// Edge sensitivity of the anti-edge weight.
    #[arg(long)]
    beta: Option<f64>,
    /// Weight of shear in the decomposition term.
    #[arg(long)]
    lambda_theta: Option<f64>,
    /// Weight of rotation in the decomposition term.
    #[arg(long)]
    lambda_z: Option<f64>,
    /// Weight of the decomposition term.
    #[arg(long)]
    lambda_dc: Option<f64>,
    /// Weight of the deformation term.
    #[arg(long)]
    lambda_df: Option<f64>,
    /// Comma-separated per-scale weights, finest first.
    #[arg(long)]
    lambda_s: Option<String>,
    /// Requested pyramid depth.
    #[arg(long)]
    levels: Option<usize>,
    /// Iteration cap per pyramid level.
    #[arg(long)]
    max_iters_per_level: Option<usize>,
    /// Initial and largest step length.
    #[arg(long)]
    step_init: Option<f64>,
    /// Step shrink factor on rejection.
    #[arg(long)]
    backtrack_factor: Option<f64>,
    /// Smallest step tried before a level stops.
    #[arg(long)]
    min_step: Option<f64>,
    /// Relative energy decrease below which a level stops.
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Local flow fusion window: 0 (off), 3 or 5.
    #[arg(long)]
    lffm_window: Option<usize>,
}

impl SolverFlags {
    fn resolve(&self) -> Result<SolverConfig, Error> {
        let mut cfg = SolverConfig::default();
        if let Some(path) = &self.config {
            config::load(path, &mut cfg)?;
        }
        let overrides: [(&str, Option<String>); 14] = [
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("lambda_theta", self.lambda_theta.map(|v| v.to_string())),
            ("lambda_z", self.lambda_z.map(|v| v.to_string())),
            ("lambda_dc", self.lambda_dc.map(|v| v.to_string())),
            ("lambda_df", self.lambda_df.map(|v| v.to_string())),
            ("lambda_s", self.lambda_s.clone()),
            ("levels", self.levels.map(|v| v.to_string())),
            ("max_iters_per_level", self.max_iters_per_level.map(|v| v.to_string())),
            ("step_init", self.step_init.map(|v| v.to_string())),
            ("backtrack_factor", self.backtrack_factor.map(|v| v.to_string())),
            ("min_step", self.min_step.map(|v| v.to_string())),
            ("rel_tol", self.rel_tol.map(|v| v.to_string())),
            ("lffm_window", self.lffm_window.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                config::apply(&mut cfg, key, &value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EstimateArgs {
    i1: PathBuf,
    i2: PathBuf,
    /// Output `.flo` file.
    #[arg(long, short)]
    out: PathBuf,
    /// JSON report (metrics, loss terms, effective config).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Colour-wheel PNG of the flow.
    #[arg(long)]
    viz: Option<PathBuf>,
    /// Ground-truth `.flo`; adds endpoint error to the report.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Border band excluded from endpoint error.
    #[arg(long, default_value_t = DEFAULT_EPE_MARGIN)]
    margin: usize,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Translation,
    Rotation,
    Shrink,
    Stretch,
    Bump,
}

impl From<KindArg> for DeformationKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Translation => DeformationKind::Translation,
            KindArg::Rotation => DeformationKind::Rotation,
            KindArg::Shrink => DeformationKind::Shrink,
            KindArg::Stretch => DeformationKind::Stretch,
            KindArg::Bump => DeformationKind::Bump,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Dots,
    Color,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed of the marker layout.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, value_enum, default_value = "dots")]
    pattern: PatternArg,
    /// Translation along x in pixels.
    #[arg(long)]
    tx: Option<f64>,
    /// Translation along y in pixels.
    #[arg(long)]
    ty: Option<f64>,
    /// Rotation angle in radians.
    #[arg(long)]
    theta: Option<f64>,
    /// Scale factor of shrink (< 1) or stretch (> 1).
    #[arg(long)]
    factor: Option<f64>,
    /// Peak bump displacement in pixels.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Bump radius in pixels.
    #[arg(long)]
    sigma: Option<f64>,
    /// Deformation centre x (default: image centre).
    #[arg(long)]
    cx: Option<f64>,
    /// Deformation centre y (default: image centre).
    #[arg(long)]
    cy: Option<f64>,
    /// Dot grid spacing in pixels.
    #[arg(long)]
    pitch: Option<f64>,
    /// Dot radius in pixels.
    #[arg(long)]
    radius: Option<f64>,
    /// Maximum dot offset from its grid site.
    #[arg(long)]
    jitter: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    i1: PathBuf,
    i2: PathBuf,
    /// Flow to score (`.flo`).
    flow: PathBuf,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EPE_MARGIN)]
    margin: usize,
    /// Write the JSON report here instead of standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Directory with i1.png, i2.png and gt.flo.
    case_dir: PathBuf,
    /// Output JSON table.
    #[arg(long, short)]
    out: PathBuf,
    /// Optional CSV copy of the table.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EPE_MARGIN)]
    margin: usize,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 6)]
    size: usize,
    /// Write the JSON report here as well as to standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Internal(_) => 3,
        _ => 2,
    }
}

/// Fails unless the directory that will receive `path` exists.
fn check_output(path: &Path) -> Result<(), Error> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(Error::InvalidInput(format!(
            "output directory {} does not exist",
            parent.display()
        )));
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Error> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    i1: String,
    i2: String,
    #[serde(flatten)]
    eval: EvalReport,
    breakdown: &'a LossBreakdown,
    iterations_per_level: Vec<usize>,
    config: &'a SolverConfig,
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), Error> {
    let cfg = args.solver.resolve()?;
    for out in [Some(&args.out), args.report.as_ref(), args.viz.as_ref()].into_iter().flatten() {
        check_output(out)?;
    }
    let i1 = read_image(&args.i1)?;
    let i2 = read_image(&args.i2)?;
    let gt = args.gt.as_ref().map(read_flo).transpose()?;
    let result = estimate_flow(&i1, &i2, &cfg)?;
    let eval = evaluate_pair(&i1, &i2, &result.flow, gt.as_ref(), args.margin)?;

    let mut staged = StagedWrites::new();
    staged.stage(&args.out, &encode_flo(&result.flow))?;
    if let Some(path) = &args.report {
        let report = EstimateReport {
            i1: args.i1.display().to_string(),
            i2: args.i2.display().to_string(),
            eval: eval.clone(),
            breakdown: &result.breakdown,
            iterations_per_level: result.iterations_used(),
            config: &cfg,
        };
        staged.stage(path, &to_json(&report)?)?;
    }
    if let Some(path) = &args.viz {
        let rgb = flow_to_rgb(&result.flow);
        staged.stage(path, &encode_rgb_png(result.flow.width(), result.flow.height(), rgb)?)?;
    }
    staged.commit()?;
    println!("{}", eval.to_json_line());
    Ok(())
}

#[derive(Serialize)]
struct CaseRecord<'a> {
    width: usize,
    height: usize,
    deformation: &'a Deformation,
    scene: &'a SceneSpec,
}

fn synth_deformation(args: &SynthArgs) -> Deformation {
    let kind = DeformationKind::from(args.kind);
    let mut d = Deformation::default_for(kind, args.width, args.height);
    match &mut d {
        Deformation::Translation { tx, ty } => {
            *tx = args.tx.unwrap_or(*tx);
            *ty = args.ty.unwrap_or(*ty);
        }
        Deformation::Rotation { theta, cx, cy } => {
            *theta = args.theta.unwrap_or(*theta);
            *cx = args.cx.unwrap_or(*cx);
            *cy = args.cy.unwrap_or(*cy);
        }
        Deformation::Shrink { factor, cx, cy } | Deformation::Stretch { factor, cx, cy } => {
            *factor = args.factor.unwrap_or(*factor);
            *cx = args.cx.unwrap_or(*cx);
            *cy = args.cy.unwrap_or(*cy);
        }
        Deformation::Bump {
            amplitude,
            sigma,
            cx,
            cy,
        } => {
            *amplitude = args.amplitude.unwrap_or(*amplitude);
            *sigma = args.sigma.unwrap_or(*sigma);
            *cx = args.cx.unwrap_or(*cx);
            *cy = args.cy.unwrap_or(*cy);
        }
    }
    d
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Error> {
    if !args.out_dir.is_dir() {
        return Err(Error::InvalidInput(format!(
            "output directory {} does not exist",
            args.out_dir.display()
        )));
    }
    let pattern = match args.pattern {
        PatternArg::Dots => {
            let base = DotGrid::default();
            Pattern::Dots(DotGrid {
                pitch: args.pitch.unwrap_or(base.pitch),
                radius: args.radius.unwrap_or(base.radius),
                jitter: args.jitter.unwrap_or(base.jitter),
                ..base
            })
        }
        PatternArg::Color => Pattern::Color(ColorPattern::default()),
    };
    let scene = SceneSpec {
        pattern,
        seed: args.seed,
    };
    let deformation = synth_deformation(args);
    let case = make_case(&deformation, args.height, args.width, &scene)?;
    let record = CaseRecord {
        width: args.width,
        height: args.height,
        deformation: &case.deformation,
        scene: &case.scene,
    };
    let mut staged = StagedWrites::new();
    staged.stage(args.out_dir.join("i1.png"), &encode_png(&case.i1)?)?;
    staged.stage(args.out_dir.join("i2.png"), &encode_png(&case.i2)?)?;
    staged.stage(args.out_dir.join("gt.flo"), &encode_flo(&case.gt_flow))?;
    staged.stage(args.out_dir.join("case.json"), &to_json(&record)?)?;
    staged.commit()
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    if let Some(out) = &args.out {
        check_output(out)?;
    }
    let i1 = read_image(&args.i1)?;
    let i2 = read_image(&args.i2)?;
    let flow = read_flo(&args.flow)?;
    let gt = args.gt.as_ref().map(read_flo).transpose()?;
    let report = evaluate_pair(&i1, &i2, &flow, gt.as_ref(), args.margin)?;
    match &args.out {
        Some(out) => {
            let mut staged = StagedWrites::new();
            staged.stage(out, &to_json(&report)?)?;
            staged.commit()
        }
        None => {
            println!("{}", report.to_json_line());
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AblationTable<'a> {
    case_dir: String,
    rows: &'a [tactile_flow::ablation::AblationRow],
    config: &'a SolverConfig,
}

fn cmd_ablate(args: &AblateArgs) -> Result<(), Error> {
    let cfg = args.solver.resolve()?;
    for out in [Some(&args.out), args.csv.as_ref()].into_iter().flatten() {
        check_output(out)?;
    }
    let gt_path = args.case_dir.join("gt.flo");
    if !gt_path.is_file() {
        return Err(Error::InvalidInput(format!(
            "{} has no ground truth (gt.flo)",
            args.case_dir.display()
        )));
    }
    let gt = read_flo(&gt_path)?;
    let i1 = read_image(args.case_dir.join("i1.png"))?;
    let i2 = read_image(args.case_dir.join("i2.png"))?;
    let rows = run_ablation(&i1, &i2, &gt, &cfg, args.margin)?;
    let table = AblationTable {
        case_dir: args.case_dir.display().to_string(),
        rows: &rows,
        config: &cfg,
    };
    let mut staged = StagedWrites::new();
    staged.stage(&args.out, &to_json(&table)?)?;
    if let Some(csv) = &args.csv {
        staged.stage(csv, to_csv(&rows).as_bytes())?;
    }
    staged.commit()?;
    for r in &rows {
        println!(
            "{:<20} epe_mean {:.4} epe_median {:.4} psnr {:.2} ssim {:.4}",
            r.name, r.epe_mean, r.epe_median, r.psnr_db, r.ssim
        );
    }
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<bool, Error> {
    if let Some(out) = &args.out {
        check_output(out)?;
    }
    let cfg = GradCheckConfig {
        seeds: args.seeds,
        size: args.size,
        ..Default::default()
    };
    let report = gradcheck::run(&cfg)?;
    let bytes = to_json(&report)?;
    if let Some(out) = &args.out {
        let mut staged = StagedWrites::new();
        staged.stage(out, &bytes)?;
        staged.commit()?;
    }
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a).map(|_| true),
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Ablate(a) => cmd_ablate(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("tactile-flow: gradient check failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("tactile-flow: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
