//! `prandtl3d` command line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prandtl3d_core::background::check_assumptions;
use prandtl3d_core::blasius::{solve_blasius, DEFAULT_STEP, DEFAULT_TOL, DEFAULT_ZETA_MAX};
use prandtl3d_core::boundary::synthesize;
use prandtl3d_core::config::RunConfig;
use prandtl3d_core::plot::{emit_plot_data, PlotInput, Slice};
use prandtl3d_core::report::DiagnosticsReport;
use prandtl3d_core::snapshot::{read_snapshot, write_snapshot, Snapshot};
use prandtl3d_core::solver::{eps0_continuation_observed, SolveTrace};
use prandtl3d_core::suites::{self, SUITES};
use prandtl3d_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "prandtl3d",
    version,
    about = "Steady 3D Prandtl boundary-layer laboratory"
)]
struct Cli {
    /// Run configuration (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `io.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to PRANDTL3D_THREADS, then `solver.threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Blasius profile as `zeta,f,fp,fpp`.
    Blasius,
    /// Lifted background snapshot and its assumption margins.
    Background {
        /// Lift ε₀; defaults to the first schedule entry.
        #[arg(long)]
        eps0: Option<f64>,
    },
    /// Boundary data for the configured perturbation.
    Bcgen {
        #[arg(long)]
        eps0: Option<f64>,
    },
    /// Picard solve over the ε₀ schedule.
    Solve,
    /// Run a verification suite and write its report.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// ε₀ continuation with the consecutive-solution gap report.
    Sweep,
    /// One plane of a quantity as `coord1,coord2,value` on stdout.
    PlotData {
        #[arg(long)]
        quantity: String,
        /// `x=<v>`, `y=<v>` or `z=<v>`.
        #[arg(long)]
        slice: String,
        /// State snapshot; defaults to u = v = ū.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        eps0: Option<f64>,
        /// β of the barrier margins.
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
    },
}

/// Outcome of a subcommand: `true` when every check passed.
type Verdict = Result<bool>;

fn load(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Err(Error::InvalidInput(
            "this subcommand needs --config PATH".into(),
        )),
    }
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = match (&cli.out, cfg) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => c.io.out_dir.clone(),
        (None, None) => PathBuf::from("out"),
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn thread_count(cli: &Cli, cfg: Option<&RunConfig>) -> Result<usize> {
    if let Some(n) = cli.threads {
        return Ok(n);
    }
    if let Ok(v) = std::env::var("PRANDTL3D_THREADS") {
        return v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("PRANDTL3D_THREADS=`{v}` is not a count")));
    }
    Ok(cfg.map_or(0, |c| c.solver.threads))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_report(dir: &Path, name: &str, rep: &DiagnosticsReport) -> Result<()> {
    write(&dir.join(format!("{name}.csv")), &rep.to_csv())?;
    write(&dir.join(format!("{name}.meta")), &rep.meta_text())
}

fn first_eps0(cfg: &RunConfig, eps0: Option<f64>) -> f64 {
    eps0.unwrap_or(cfg.physics.eps0_schedule[0])
}

fn eps_tag(e: f64) -> String {
    format!("{e:e}")
}

fn cmd_blasius(cli: &Cli) -> Verdict {
    let cfg = cli
        .config
        .as_ref()
        .map(|p| RunConfig::load(p))
        .transpose()?;
    let b = match &cfg {
        Some(c) => c.blasius()?,
        None => solve_blasius(DEFAULT_ZETA_MAX, DEFAULT_STEP, DEFAULT_TOL)?,
    };
    let dir = out_dir(cli, cfg.as_ref())?;
    write(&dir.join("blasius.csv"), &b.to_csv())?;
    Ok(true)
}

fn cmd_background(cli: &Cli, eps0: Option<f64>) -> Verdict {
    let cfg = load(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let g = cfg.build_grid()?;
    let bg = cfg.background(&cfg.blasius()?, &g, first_eps0(&cfg, eps0))?;
    write_snapshot(
        &Snapshot::from_background(&bg)?,
        &dir.join("background.p3ds"),
    )?;
    println!("wrote {}", dir.join("background.p3ds").display());
    let mut rep = check_assumptions(&bg);
    rep.meta.config_hash = Some(cfg.hash());
    write_report(&dir, "assumptions", &rep)?;
    Ok(rep.all_pass())
}

fn cmd_bcgen(cli: &Cli, eps0: Option<f64>) -> Verdict {
    let cfg = load(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let g = cfg.build_grid()?;
    let bg = cfg.background(&cfg.blasius()?, &g, first_eps0(&cfg, eps0))?;
    let state = suites::background_state(&bg)?;
    let (bd, mut env) = synthesize(
        &cfg.perturbation_spec(),
        &bg,
        &state,
        cfg.physics.transpiration,
    )?;
    let mut snap = Snapshot::new(g);
    snap.push("bd_u", bd.u)?;
    snap.push("bd_v", bd.v)?;
    write_snapshot(&snap, &dir.join("boundary.p3ds"))?;
    println!("wrote {}", dir.join("boundary.p3ds").display());
    env.meta.config_hash = Some(cfg.hash());
    write_report(&dir, "envelopes", &env)?;
    // with perturbation.strict a failing envelope has already aborted synthesis
    Ok(true)
}

fn run_schedule(
    cfg: &RunConfig,
    dir: &Path,
) -> Result<prandtl3d_core::solver::ContinuationOutcome> {
    let g = cfg.build_grid()?;
    let every = cfg.io.snapshot_every;
    let mut observe = |e0: f64, s: &prandtl3d_core::grid::FieldState| -> Result<()> {
        if every > 0 && s.iterate_index.is_multiple_of(every) {
            let p = dir.join(format!(
                "state_eps0_{}_n{}.p3ds",
                eps_tag(e0),
                s.iterate_index
            ));
            write_snapshot(&Snapshot::from_state(&g, s)?, &p)?;
        }
        Ok(())
    };
    let out = eps0_continuation_observed(
        &cfg.solver_config(),
        &cfg.blasius()?,
        &g,
        &cfg.perturbation_spec(),
        None,
        &mut observe,
    )?;
    let mut trace = SolveTrace::default();
    for m in &out.members {
        let s = &m.outcome.state;
        let p = dir.join(format!(
            "state_eps0_{}_n{}.p3ds",
            eps_tag(m.eps0),
            s.iterate_index
        ));
        write_snapshot(&Snapshot::from_state(&g, s)?, &p)?;
        println!("wrote {}", p.display());
        trace
            .records
            .extend(m.outcome.trace.records.iter().cloned());
    }
    write(&dir.join("trace.csv"), &trace.to_csv())?;
    Ok(out)
}

fn cmd_solve(cli: &Cli) -> Verdict {
    let cfg = load(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    run_schedule(&cfg, &dir)?;
    Ok(true)
}

fn cmd_sweep(cli: &Cli) -> Verdict {
    let cfg = load(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let out = run_schedule(&cfg, &dir)?;
    let mut rep = suites::continuation_report(&out, &cfg.build_grid()?);
    rep.meta.config_hash = Some(cfg.hash());
    write_report(&dir, "sweep", &rep)?;
    Ok(rep.all_pass())
}

fn run_suite(cfg: &RunConfig, name: &str) -> Result<DiagnosticsReport> {
    let g = cfg.build_grid()?;
    let e0 = cfg.physics.eps0_schedule[0];
    let bg = || cfg.background(&cfg.blasius()?, &g, e0);
    let mut rep = match name {
        "blasius" => suites::blasius_suite(&cfg.blasius()?),
        "assumptions" => check_assumptions(&bg()?),
        "commutator" => suites::commutator_suite(&[16, 32, 64])?,
        "brackets" => suites::bracket_suite(&[16, 32, 64])?,
        "barriers" => suites::barrier_suite(
            &bg()?,
            &cfg.barrier_params(e0),
            cfg.physics.eps,
            cfg.physics.transpiration,
        )?,
        "mp" => suites::mp_suite(&bg()?, &cfg.barrier_params(e0), cfg.physics.transpiration)?,
        "ledger" => suites::stability_run(cfg, &bg()?)?.report,
        _ => {
            return Err(Error::InvalidInput(format!(
                "unknown suite `{name}` (expected all or one of {})",
                SUITES.join(", ")
            )))
        }
    };
    rep.meta.config_hash = Some(cfg.hash());
    let d = g.dims();
    if rep.meta.grid.is_empty() {
        rep.meta.grid = format!("{}x{}x{}", d.nx, d.ny, d.nz);
    }
    Ok(rep)
}

fn cmd_verify(cli: &Cli, suite: &str) -> Verdict {
    let cfg = load(cli)?;
    let dir = out_dir(cli, Some(&cfg))?;
    let names: Vec<&str> = if suite == "all" {
        SUITES.to_vec()
    } else {
        vec![suite]
    };
    let mut pass = true;
    for name in names {
        let rep = run_suite(&cfg, name)?;
        if name == "barriers" {
            write(
                &dir.join("verify_barriers_margins.csv"),
                &rep.to_barrier_csv(),
            )?;
        }
        write_report(&dir, &format!("verify_{name}"), &rep)?;
        for e in rep.failing() {
            eprintln!(
                "FAIL {name}: {} ({}) margin {:e}",
                e.check_id, e.zone, e.margin
            );
        }
        pass &= rep.all_pass();
    }
    Ok(pass)
}

fn cmd_plot(
    cli: &Cli,
    quantity: &str,
    slice: &str,
    snapshot: Option<&Path>,
    eps0: Option<f64>,
    beta: f64,
) -> Verdict {
    let cfg = load(cli)?;
    let slice: Slice = slice.parse()?;
    let g = cfg.build_grid()?;
    let e0 = first_eps0(&cfg, eps0);
    let bg = cfg.background(&cfg.blasius()?, &g, e0)?;
    let state = match snapshot {
        Some(p) => {
            let snap = read_snapshot(p)?;
            if !snap.grid.same_as(&g) {
                return Err(Error::GridMismatch);
            }
            snap.to_state(0)?
        }
        None => suites::background_state(&bg)?,
    };
    let inp = PlotInput {
        grid: &g,
        state: &state,
        background: Some(&bg),
        barrier: cfg.barrier_params(e0),
        beta,
        u_floor: cfg.solver_config().u_floor(e0),
        transpiration: cfg.physics.transpiration,
    };
    print!("{}", emit_plot_data(&inp, quantity, slice)?);
    Ok(true)
}

fn run(cli: &Cli) -> Verdict {
    let cfg = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let threads = thread_count(cli, cfg.as_ref())?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    match &cli.cmd {
        Cmd::Blasius => cmd_blasius(cli),
        Cmd::Background { eps0 } => cmd_background(cli, *eps0),
        Cmd::Bcgen { eps0 } => cmd_bcgen(cli, *eps0),
        Cmd::Solve => cmd_solve(cli),
        Cmd::Verify { suite } => cmd_verify(cli, suite),
        Cmd::Sweep => cmd_sweep(cli),
        Cmd::PlotData {
            quantity,
            slice,
            snapshot,
            eps0,
            beta,
        } => cmd_plot(cli, quantity, slice, snapshot.as_deref(), *eps0, *beta),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
