//! `vfp`: batch driver for the Vlasov-Fokker-Planck solver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vfp_core::collision::{assemble_frozen_operator, gershgorin_columns, imaginary_extent_bound};
use vfp_core::diagnostics::{fit_damping, RateKind};
use vfp_core::driver::BUILTIN_NAMES;
use vfp_core::io::{
    read_snapshot, write_matrix, write_plotspec, write_real_trace, write_series, write_snapshot,
    write_stability_scan, write_steps,
};
use vfp_core::rkc::{real_trace, stability_scan};
use vfp_core::{
    Error, Integrator, RkcCoeffs, RkcMethod, RunOutput, Scenario, Simulation, Splitting,
    VelocityGrid,
};

#[derive(Parser)]
#[command(name = "vfp", version, about = "Vlasov-Fokker-Planck simulations with RKC time stepping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named scenario or a TOML scenario file.
    Run(Box<RunArgs>),
    /// Scan |R(z)| of an RKC method over the complex plane.
    Stability(StabilityArgs),
    /// Export the frozen collision matrix for external eigen-analysis.
    Eigenexport(EigenArgs),
    /// Print RKC coefficients at full precision.
    Coeffs(CoeffArgs),
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in scenario name.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Scenario file (flat TOML; `base = "<name>"` starts from a built-in).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Resume from a snapshot written by a previous run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Local error tolerance; enables adaptive stepping when ν > 0.
    #[arg(long)]
    tol: Option<f64>,
    /// Use the fixed step `--dt` even if the scenario sets a tolerance.
    #[arg(long, conflicts_with = "tol")]
    fixed: bool,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    nv: Option<usize>,
    #[arg(long)]
    vmax: Option<f64>,
    /// rkc1, rkc2 or rk2.
    #[arg(long, value_parser = parse_integrator)]
    integrator: Option<Integrator>,
    /// homogeneous, sl-rkc, sl-rk2-rkc or strang-2dv.
    #[arg(long, value_parser = parse_splitting)]
    splitting: Option<Splitting>,
    /// Collision discretization order (2 or 4).
    #[arg(long)]
    order: Option<u32>,
    #[arg(long)]
    eta: Option<f64>,
    /// Fixed RKC stage count.
    #[arg(long)]
    stages: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "vfp-out")]
    out: PathBuf,
    /// Diagnostics interval in time (0: every accepted step).
    #[arg(long)]
    cadence: Option<f64>,
    /// Worker threads for the library kernels; 1 gives bitwise-reproducible runs.
    #[arg(long)]
    threads: Option<usize>,
    /// Fail unless the invariants stay within `--drift-tol`.
    #[arg(long)]
    strict: bool,
    /// Relative drift allowed on mass, momentum and (when conserved) total energy.
    #[arg(long, default_value_t = 1e-10)]
    drift_tol: f64,
    /// Fit the electric-energy rate over this time window (field-amplitude rate).
    #[arg(long, num_args = 2, value_names = ["T0", "T1"])]
    fit: Option<Vec<f64>>,
}

#[derive(Args)]
struct StabilityArgs {
    /// rkc1 or rkc2.
    #[arg(long, value_parser = parse_method, default_value = "rkc2")]
    method: RkcMethod,
    #[arg(long)]
    stages: usize,
    /// Damping; the method default when omitted.
    #[arg(long)]
    eta: Option<f64>,
    /// Half-height of the scanned strip.
    #[arg(long, default_value_t = 10.0)]
    im_max: f64,
    #[arg(long, default_value_t = 400)]
    n_re: usize,
    #[arg(long, default_value_t = 161)]
    n_im: usize,
    /// Output directory for `stability.csv` and `real_trace.csv`.
    #[arg(long, default_value = "vfp-out")]
    out: PathBuf,
}

#[derive(Args)]
struct EigenArgs {
    #[arg(long, default_value_t = 512)]
    nv: usize,
    #[arg(long, default_value_t = 12.0)]
    vmax: f64,
    #[arg(long, default_value_t = 0.5)]
    nu: f64,
    #[arg(long, default_value_t = 1.88)]
    temperature: f64,
    #[arg(long, default_value_t = 0.0)]
    u: f64,
    #[arg(long, default_value = "frozen_operator.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct CoeffArgs {
    #[arg(long, value_parser = parse_method, default_value = "rkc2")]
    method: RkcMethod,
    #[arg(long)]
    stages: usize,
    #[arg(long)]
    eta: Option<f64>,
}

fn parse_integrator(s: &str) -> Result<Integrator, String> {
    Integrator::parse(s).ok_or_else(|| format!("unknown integrator `{s}`"))
}

fn parse_splitting(s: &str) -> Result<Splitting, String> {
    Splitting::parse(s).ok_or_else(|| format!("unknown splitting `{s}`"))
}

fn parse_method(s: &str) -> Result<RkcMethod, String> {
    match Integrator::parse(s).and_then(Integrator::rkc_method) {
        Some(m) => Ok(m),
        None => Err(format!("unknown RKC method `{s}`")),
    }
}

/// Failure printed as `error: <Name>: <message>`.
struct Failure {
    name: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            name: e.name(),
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Stability(args) => cmd_stability(args),
        Command::Eigenexport(args) => cmd_eigenexport(args),
        Command::Coeffs(args) => cmd_coeffs(args),
        Command::Scenarios => {
            for name in BUILTIN_NAMES {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.name, f.message);
            ExitCode::FAILURE
        }
    }
}

fn scenario_for(args: &RunArgs) -> Result<Scenario, Error> {
    let mut s = match (&args.scenario, &args.config) {
        (Some(name), _) => Scenario::builtin(name)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|source| Error::IoFailure {
                path: path.clone(),
                source,
            })?;
            Scenario::from_toml(&text)?
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "one of --scenario or --config is required".into(),
            ))
        }
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = args.$flag { s.$field = v; })*
        };
    }
    set!(t_end => t_end, dt => dt, nu => nu, nx => n_x, nv => n_v, vmax => v_max,
         integrator => integrator, splitting => splitting, order => order, cadence => cadence);
    if args.tol.is_some() {
        s.tol = args.tol;
    }
    if args.fixed {
        s.tol = None;
    }
    if args.eta.is_some() {
        s.eta = args.eta;
    }
    if args.stages.is_some() {
        s.stages = args.stages;
    }
    s.validate()?;
    Ok(s)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                name: "InvalidConfig",
                message: e.to_string(),
            })?;
    }
    let scenario = scenario_for(&args)?;
    let mut sim = match &args.resume {
        Some(path) => {
            let snap = read_snapshot(path)?;
            Simulation::from_state(scenario.clone(), snap.state, snap.field)?
        }
        None => Simulation::new(scenario.clone())?,
    };
    create_dir(&args.out)?;
    write_snapshot(&args.out.join("initial.snap"), &sim.f, sim.e_field())?;
    let output = sim.run()?;
    write_outputs(&args.out, &scenario, &output)?;

    let s = &output.summary;
    println!(
        "scenario={} t_end={} steps={} rejected={} rhs_evals={} max_dt={:.6e} wall={:.3}s",
        scenario.name,
        output.final_state.t,
        s.accepted,
        s.rejected,
        s.rhs_evals,
        s.max_dt,
        s.wall_time
    );
    if let Some(w) = &args.fit {
        let rate = fit_damping(
            &output.series.times(),
            &output.series.electric(),
            (w[0], w[1]),
            RateKind::Field,
        )?;
        println!("rate={rate:.6e}");
    }
    if args.strict {
        check_drift(&scenario, &output, args.drift_tol)?;
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::IoFailure {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_outputs(dir: &Path, scenario: &Scenario, output: &RunOutput) -> Result<(), Error> {
    write_series(&dir.join("series.csv"), &output.series)?;
    write_plotspec(&dir.join("plotspec.txt"), "series.csv", &output.series)?;
    write_steps(&dir.join("steps.csv"), &output.records)?;
    write_snapshot(&dir.join("final.snap"), &output.final_state, output.field.as_deref())?;
    let path = dir.join("scenario.toml");
    fs::write(&path, scenario.to_toml()).map_err(|source| Error::IoFailure { path, source })
}

fn check_drift(scenario: &Scenario, output: &RunOutput, tol: f64) -> Result<(), Failure> {
    let rows = &output.series.rows;
    let Some(first) = rows.first() else {
        return Ok(());
    };
    let energy_exact = matches!(
        scenario.splitting,
        Splitting::Homogeneous | Splitting::SlRk2Rkc
    );
    let mass0 = first.inv.mass.abs().max(f64::MIN_POSITIVE);
    let energy0 = first.inv.total.abs().max(f64::MIN_POSITIVE);
    let mut worst: [f64; 3] = [0.0; 3];
    for r in rows {
        worst[0] = worst[0].max((r.inv.mass - first.inv.mass).abs() / mass0);
        worst[1] = worst[1].max((r.inv.momentum_x - first.inv.momentum_x).abs() / mass0);
        if energy_exact {
            worst[2] = worst[2].max((r.inv.total - first.inv.total).abs() / energy0);
        }
    }
    for (label, w) in ["mass", "momentum", "energy"].iter().zip(worst) {
        if !(w <= tol) {
            return Err(Failure {
                name: "InvariantDrift",
                message: format!("{label} drift {w:.3e} exceeds {tol:.1e}"),
            });
        }
    }
    Ok(())
}

fn coeffs_for(method: RkcMethod, stages: usize, eta: Option<f64>) -> Result<RkcCoeffs, Error> {
    RkcCoeffs::new(method, stages, eta.unwrap_or(method.default_eta()))
}

fn cmd_stability(args: StabilityArgs) -> Result<(), Failure> {
    let c = coeffs_for(args.method, args.stages, args.eta)?;
    create_dir(&args.out)?;
    let re = (-c.beta - 5.0, 1.0);
    let scan = stability_scan(&c, re, (-args.im_max, args.im_max), args.n_re, args.n_im);
    write_stability_scan(&args.out.join("stability.csv"), &scan)?;
    write_real_trace(&args.out.join("real_trace.csv"), &real_trace(&c, 4 * args.n_re))?;
    println!("beta={:.16e} c_eta={:.16e}", c.beta, c.c_eta());
    Ok(())
}

fn cmd_eigenexport(args: EigenArgs) -> Result<(), Failure> {
    let vg = VelocityGrid::new(args.vmax, args.nv, 1)?;
    let a = assemble_frozen_operator(1.0, args.u, args.temperature, args.nu, &vg)?;
    write_matrix(&args.out, args.nv, &a)?;
    let discs = gershgorin_columns(&a);
    println!(
        "dim={} gershgorin_re=[{:.6e}, {:.6e}] gershgorin_radius={:.6e} bendixson_im={:.6e}",
        a.n,
        discs.min_real,
        discs.max_real,
        discs.max_radius,
        imaginary_extent_bound(&a)
    );
    Ok(())
}

fn cmd_coeffs(args: CoeffArgs) -> Result<(), Failure> {
    let c = coeffs_for(args.method, args.stages, args.eta)?;
    println!("method={:?} s={} eta={:.16e}", c.method, c.s, c.eta);
    println!("w0={:.16e} w1={:.16e} beta={:.16e} c_eta={:.16e}", c.w0, c.w1, c.beta, c.c_eta());
    let has_ab = !c.a.is_empty();
    print!("l,mu,nu,kappa,gamma");
    println!("{}", if has_ab { ",a,b" } else { "" });
    for l in 0..=c.s {
        print!(
            "{l},{:.16e},{:.16e},{:.16e},{:.16e}",
            c.mu[l], c.nu[l], c.kappa[l], c.gamma[l]
        );
        if has_ab {
            print!(",{:.16e},{:.16e}", c.a[l], c.b[l]);
        }
        println!();
    }
    Ok(())
}
