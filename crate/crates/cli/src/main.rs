use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use onsager_pn::config::ScenarioConfig;
use onsager_pn::mc::{free_streaming_reference, simulate, McOptions};
use onsager_pn::nalgebra::DMatrix;
use onsager_pn::onsager::{marshak_matrix, onsager_bc, Face, Side};
use onsager_pn::output::{read_snapshot, snapshot_file, write_mc, write_run};
use onsager_pn::pn::PnSystem;
use onsager_pn::solver::{energy_bound_check, RunOptions, Simulation};
use onsager_pn::sphharm::Axis;
use onsager_pn::verify::{run_all, Tamper};
use onsager_pn::Error;

#[derive(Parser)]
#[command(
    name = "pnsolve",
    version,
    about = "P_N transport solver with energy-stable boundary conditions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the operator self-checks.
    Verify {
        /// Corrupt the (Y_1^1, Y_0^0) entry of A^(x) by this amount first.
        #[arg(long)]
        tamper: Option<f64>,
    },
    /// Integrate a scenario and write snapshots, energy history and metadata.
    Run {
        config: PathBuf,
        /// Override the moment order.
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo reference tallies for a scenario.
    Oracle {
        config: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        n: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Compare against the snapshots of a finished run directory.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Tally window width in time units (default: smallest cell size).
        #[arg(long)]
        window: Option<f64>,
    },
    /// Dump the assembled matrices for order N as CSV.
    Assemble {
        order: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_)
        | Error::Config(_)
        | Error::PenaltyOutOfRange(_)
        | Error::CflViolation { .. }
        | Error::NotSampleable(_) => 1,
        Error::Io { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify { tamper } => verify(tamper),
        Command::Run { config, order, out } => run(&config, order, out),
        Command::Oracle {
            config,
            n,
            seed,
            out,
            compare,
            window,
        } => oracle(&config, n, seed, out, compare, window),
        Command::Assemble { order, out } => assemble(order, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn verify(tamper: Option<f64>) -> Result<u8, Error> {
    let checks = run_all(tamper.map_or(Tamper::None, Tamper::Transport));
    let mut failed = 0;
    for c in &checks {
        println!(
            "{} {:<34} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        failed += usize::from(!c.pass);
    }
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    Ok(if failed == 0 { 0 } else { 2 })
}

fn load(path: &Path) -> Result<ScenarioConfig, Error> {
    ScenarioConfig::load(path)
}

fn run(path: &Path, order: Option<usize>, out: Option<PathBuf>) -> Result<u8, Error> {
    let mut cfg = load(path)?;
    if let Some(n) = order {
        cfg.model.order = n;
        cfg.validate()?;
    }
    let dir = out.or_else(|| cfg.outputs.dir.clone()).unwrap_or_else(|| {
        let suffix = order.map(|n| format!("_p{n}")).unwrap_or_default();
        PathBuf::from("runs").join(format!("{}{suffix}", cfg.name))
    });
    let start = Instant::now();
    let sim = Simulation::new(cfg)?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let opts = RunOptions {
        dump_path: Some(dir.join("last_finite_state.json")),
        end: None,
    };
    let output = sim.run(&opts)?;
    let runtime = start.elapsed().as_secs_f64();
    write_run(&dir, &sim, &output, runtime)?;
    let check = energy_bound_check(&output.log, sim.disc.bound_constant());
    println!(
        "{}: P{} {} steps, dt {:.4e}, E {:.6e} -> {:.6e}, bound {}, {:.2} s, output in {}",
        sim.config.name,
        sim.config.model.order,
        output.steps,
        output.dt,
        output.log.initial(),
        output.log.last(),
        if check.pass { "holds" } else { "VIOLATED" },
        runtime,
        dir.display()
    );
    Ok(if check.pass { 0 } else { 2 })
}

fn oracle(
    path: &Path,
    n: u64,
    seed: u64,
    out: Option<PathBuf>,
    compare: Option<PathBuf>,
    window: Option<f64>,
) -> Result<u8, Error> {
    let cfg = load(path)?;
    let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(format!("{}_mc", cfg.name)));
    let mut opts = McOptions::new(n, seed);
    opts.window = window;
    let start = Instant::now();
    let result = simulate(&cfg, &opts)?;
    let axes: Vec<&str> = cfg.domain.axes.iter().map(String::as_str).collect();
    write_mc(&dir, &axes, &result)?;
    println!(
        "{}: {n} particles, seed {seed}, {:.2} s, output in {}",
        cfg.name,
        start.elapsed().as_secs_f64(),
        dir.display()
    );
    for tally in &result.tallies {
        let Some(exact) = free_streaming_reference(&cfg, tally) else {
            break;
        };
        // bins without hits have no error estimate; low-count bins are reported as-is
        let z: Vec<f64> = exact
            .iter()
            .zip(tally.value.iter().zip(&tally.std_err))
            .filter(|(_, (_, s))| **s > 0.0)
            .map(|(e, (v, s))| (v - e).abs() / s)
            .collect();
        let worst = z.iter().cloned().fold(0.0, f64::max);
        let outside = z.iter().filter(|v| **v > 3.0).count();
        println!(
            "label {:>10}: analytic free streaming, worst {worst:.2} stderr, {outside} of {} bins beyond 3 stderr, {} bins without hits",
            tally.label,
            z.len(),
            exact.len() - z.len()
        );
    }
    let Some(run_dir) = compare else {
        return Ok(0);
    };
    for tally in &result.tallies {
        let snap = read_snapshot(&run_dir.join(snapshot_file(tally.label)), tally.label)?;
        let peak = tally.value.iter().cloned().fold(0.0, f64::max);
        let mut worst = 0.0f64;
        let mut worst_sigma = 0.0f64;
        for (c, (v, s)) in tally
            .coords
            .iter()
            .zip(tally.value.iter().zip(&tally.std_err))
        {
            let hit = snap.coords.iter().position(|p| {
                p.iter()
                    .zip(c)
                    .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()))
            });
            if let Some(j) = hit {
                let diff = (snap.u00[j] - v).abs();
                if diff > worst {
                    worst = diff;
                    worst_sigma = *s;
                }
            }
        }
        println!(
            "label {:>10}: max |solver - MC| = {:.4e} ({:.2}% of MC peak, local stderr {:.2e})",
            tally.label,
            worst,
            if peak > 0.0 {
                100.0 * worst / peak
            } else {
                0.0
            },
            worst_sigma
        );
    }
    Ok(0)
}

fn csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.16e}", m[(i, j)]))
            .collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

fn assemble(order: usize, out: Option<PathBuf>) -> Result<u8, Error> {
    let sys = PnSystem::assemble(order)?;
    let basis = sys.basis();
    let dir = out.unwrap_or_else(|| PathBuf::from(format!("assemble_p{order}")));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let write = |name: String, m: &DMatrix<f64>| -> Result<(), Error> {
        let path = dir.join(name);
        fs::write(&path, csv(m)).map_err(|e| Error::io(&path, e))
    };
    let mut index = String::from("position,l,k\n");
    for p in 0..basis.dim() {
        let idx = basis.index(p);
        let _ = writeln!(index, "{p},{},{}", idx.l(), idx.k());
    }
    let path = dir.join("basis.csv");
    fs::write(&path, index).map_err(|e| Error::io(&path, e))?;
    for axis in Axis::ALL {
        let a = axis.name();
        write(format!("A_{a}.csv"), sys.transport(axis))?;
        write(format!("Ahat_{a}.csv"), sys.a_hat(axis))?;
        for side in [Side::Low, Side::High] {
            let face = Face::new(axis, side);
            let bc = onsager_bc(&sys, face)?;
            let mt = marshak_matrix(basis, face, &basis.quadrature(face.outgoing()))?;
            let label = face.label().replace('-', "lo").replace('+', "hi");
            write(format!("L_{label}.csv"), &bc.l)?;
            write(format!("M_{label}.csv"), &bc.m)?;
            write(format!("Mtilde_{label}.csv"), &mt.matrix)?;
        }
    }
    println!(
        "P{order}: {} moments, matrices in {}",
        basis.dim(),
        dir.display()
    );
    Ok(0)
}
