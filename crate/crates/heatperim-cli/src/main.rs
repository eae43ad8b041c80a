//! Command-line driver: space construction, single-functional ladders,
//! curvature reports, identity checks, and config-driven runs.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical failure,
//! 4 acceptance violation (only with --assert).

use clap::{Args, Parser, Subcommand};
use heatperim::harness::{self, ExperimentConfig, FunctionSpec, LadderSpec, SetSpec, SpaceSpec};
use heatperim::ladder::WindowPolicy;
use heatperim::{bv, curvature, functionals, Error};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "heatperim", version, about = "Heat-semigroup perimeter laboratory")]
struct Cli {
    /// Experiment config file (for `run`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for sampled diagnostics.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (falls back to HEATPERIM_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Numerical tolerance for semigroup application.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SpaceArgs {
    /// Builder name: circle, interval, torus2d, weightedLine, pointCloud,
    /// shrinkingBallsUnion.
    #[arg(long)]
    builder: String,
    /// Builder parameters as a JSON object.
    #[arg(long, default_value = "{}")]
    params: String,
}

impl SpaceArgs {
    fn spec(&self) -> Result<SpaceSpec, Error> {
        Ok(SpaceSpec {
            builder: self.builder.clone(),
            params: serde_json::from_str(&self.params)?,
        })
    }
}

#[derive(Args, Clone)]
struct LadderArgs {
    #[arg(long)]
    hi: f64,
    #[arg(long)]
    lo: f64,
    #[arg(long, default_value_t = 12)]
    count: usize,
    /// Trusted-window factor over the grid resolution.
    #[arg(long, default_value_t = 8.0)]
    window_factor: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Build a space and write its JSON document.
    BuildSpace {
        #[command(flatten)]
        space: SpaceArgs,
    },
    /// Apply the heat semigroup to a function at one time.
    Heat {
        #[command(flatten)]
        space: SpaceArgs,
        /// Function spec as JSON.
        #[arg(long)]
        function: String,
        #[arg(long)]
        t: f64,
        /// Fail (exit 4) if conservation drifts beyond tol.
        #[arg(long)]
        assert: bool,
    },
    /// Perimeter of a set, both TV flavors.
    Perimeter {
        #[command(flatten)]
        space: SpaceArgs,
        /// Set spec as JSON.
        #[arg(long)]
        set: String,
    },
    /// Heat-content ladder (global, or localized with --local).
    Ledoux {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        set: String,
        #[command(flatten)]
        ladder: LadderArgs,
        #[arg(long)]
        local: bool,
        /// Fail (exit 4) if an in-window value exceeds the perimeter
        /// upper bound by more than 5%.
        #[arg(long)]
        assert: bool,
    },
    /// Heat-regularized total variation ladder.
    Degiorgi {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        function: String,
        #[command(flatten)]
        ladder: LadderArgs,
    },
    /// Near-diagonal strip energy ladder.
    KsEnergy {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        function: String,
        #[command(flatten)]
        ladder: LadderArgs,
    },
    /// Per-vertex curvature bounds.
    Curvature {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value_t = 2)]
        radius: usize,
    },
    /// Co-area identity check for a function.
    Coarea {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        function: String,
        /// Fail (exit 4) if the residual exceeds 1e-10 relative.
        #[arg(long)]
        assert: bool,
    },
    /// Run a config-driven experiment suite.
    Run,
    /// Re-render an SVG plot from a ladder CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    harness::configure_workers(cli.workers);
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Config(_)
                | Error::InvalidParam(_)
                | Error::UnknownBuilder(_)
                | Error::Json(_)
                | Error::Io(_) => 2,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::BuildSpace { space } => {
            let spec = space.spec()?;
            let built = heatperim::builders::build(&spec.builder, &spec.params)?;
            std::fs::create_dir_all(&cli.out)?;
            std::fs::write(cli.out.join("space.json"), built.space.to_json()?)?;
            if let Some(indicator) = &built.indicator {
                std::fs::write(
                    cli.out.join("indicator.json"),
                    serde_json::to_string(indicator)?,
                )?;
            }
            println!(
                "wrote {} ({} points, diameter {:.6})",
                cli.out.join("space.json").display(),
                built.space.n(),
                built.space.diameter()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Heat {
            space,
            function,
            t,
            assert,
        } => {
            let (built, _gen, op) = harness::prepare_space(&space.spec()?, cli.tol)?;
            let f: FunctionSpec = serde_json::from_str(function)?;
            let u = harness::realize_function(&built, &f)?;
            let heated = op.apply(&u, *t)?;
            std::fs::create_dir_all(&cli.out)?;
            std::fs::write(
                cli.out.join("heat.jsonl"),
                harness::vector_to_jsonl("heat", &heated),
            )?;
            let ones = vec![1.0; built.space.n()];
            let conserved = op.apply(&ones, *t)?;
            let drift = conserved
                .iter()
                .map(|v| (v - 1.0).abs())
                .fold(0.0_f64, f64::max);
            println!("applied semigroup at t={t}; conservation drift {drift:.3e}");
            if *assert && drift > cli.tol {
                eprintln!("conservation drift {drift:.3e} above tolerance {}", cli.tol);
                return Ok(ExitCode::from(4));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Perimeter { space, set } => {
            let (built, gen, _op) = harness::prepare_space(&space.spec()?, cli.tol)?;
            let s: SetSpec = serde_json::from_str(set)?;
            let indices = harness::realize_set(&built, &s)?;
            let p = bv::perimeter(&gen, &indices, None);
            let mut chi = vec![0.0; built.space.n()];
            for &x in &indices {
                chi[x] = 1.0;
            }
            let pg = bv::gamma_tv(&gen, &chi, None);
            println!("perimeter(edge) = {p:.12}");
            println!("perimeter(gamma) = {pg:.12}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Ledoux {
            space,
            set,
            ladder,
            local,
            assert,
        } => {
            let (built, gen, op) = harness::prepare_space(&space.spec()?, cli.tol)?;
            let s: SetSpec = serde_json::from_str(set)?;
            let indices = harness::realize_set(&built, &s)?;
            let params = LadderSpec {
                param: "sqrtT".into(),
                hi: ladder.hi,
                lo: ladder.lo,
                count: ladder.count,
            }
            .params()?;
            let window =
                WindowPolicy::spatial(built.space.resolution(), ladder.window_factor);
            let name = if *local { "ledouxLocal" } else { "ledouxGlobal" };
            let mut samples = Vec::new();
            for &p in &params {
                let t = p * p;
                let v = if *local {
                    functionals::ledoux_local(&op, &indices, t)?
                } else {
                    functionals::ledoux_global(&op, &indices, t)?
                };
                samples.push((p, v));
            }
            let ladder_out =
                heatperim::FunctionalLadder::from_samples(name, samples, window)?;
            write_ladder(&cli.out, built.space.label(), &ladder_out)?;
            if *assert && !*local {
                let perim = bv::perimeter(&gen, &indices, None);
                let violation = ladder_out
                    .samples
                    .iter()
                    .filter(|s| s.in_window)
                    .any(|s| s.value > perim * 1.05);
                if violation {
                    eprintln!("an in-window value exceeds the perimeter bound {perim} by over 5%");
                    return Ok(ExitCode::from(4));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Degiorgi {
            space,
            function,
            ladder,
        } => {
            let (built, _gen, op) = harness::prepare_space(&space.spec()?, cli.tol)?;
            let f: FunctionSpec = serde_json::from_str(function)?;
            let u = harness::realize_function(&built, &f)?;
            let params = LadderSpec {
                param: "sqrtT".into(),
                hi: ladder.hi,
                lo: ladder.lo,
                count: ladder.count,
            }
            .params()?;
            let window =
                WindowPolicy::spatial(built.space.resolution(), ladder.window_factor);
            let mut samples = Vec::new();
            for &p in &params {
                samples.push((p, functionals::de_giorgi(&op, &u, p * p)?));
            }
            let ladder_out =
                heatperim::FunctionalLadder::from_samples("deGiorgi", samples, window)?;
            write_ladder(&cli.out, built.space.label(), &ladder_out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::KsEnergy {
            space,
            function,
            ladder,
        } => {
            let (built, _gen, _op) = harness::prepare_space(&space.spec()?, cli.tol)?;
            let f: FunctionSpec = serde_json::from_str(function)?;
            let u = harness::realize_function(&built, &f)?;
            let params = LadderSpec {
                param: "eps".into(),
                hi: ladder.hi,
                lo: ladder.lo,
                count: ladder.count,
            }
            .params()?;
            let window =
                WindowPolicy::spatial(built.space.resolution(), ladder.window_factor);
            let ladder_out = heatperim::ladder::ladder_scan(
                "ksEnergy",
                |eps| functionals::near_diagonal_energy(&built.space, &u, eps),
                &params,
                window,
            )?;
            write_ladder(&cli.out, built.space.label(), &ladder_out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Curvature { space, radius } => {
            let (built, gen, _op) = harness::prepare_space(&space.spec()?, cli.tol)?;
            let report = curvature::best_k(&gen, *radius)?;
            std::fs::create_dir_all(&cli.out)?;
            std::fs::write(cli.out.join("curvature.csv"), report.to_csv())?;
            std::fs::write(cli.out.join("curvature.json"), report.summary_json())?;
            println!(
                "globalK = {:.9e} over {} vertices ({})",
                report.global_k,
                built.space.n(),
                report.method
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Coarea {
            space,
            function,
            assert,
        } => {
            let (built, gen, _op) = harness::prepare_space(&space.spec()?, cli.tol)?;
            let f: FunctionSpec = serde_json::from_str(function)?;
            let u = harness::realize_function(&built, &f)?;
            let check = bv::coarea_check(&gen, &u, None);
            println!(
                "coarea: lhs={:.12e} rhs={:.12e} residual={:.3e}",
                check.lhs, check.rhs, check.residual
            );
            if *assert && check.residual > 1e-10 * check.rhs.max(1e-300) {
                eprintln!("co-area residual above 1e-10 relative");
                return Ok(ExitCode::from(4));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::Config("run needs --config".into()))?;
            let text = std::fs::read_to_string(path)?;
            let config = ExperimentConfig::from_json(&text)?;
            let manifest = harness::run_experiment(&config, &cli.out)?;
            let failed: Vec<&str> = manifest
                .results
                .iter()
                .filter(|r| r.error.is_some())
                .map(|r| r.name.as_str())
                .collect();
            println!(
                "ran {} functionals, hash {}",
                manifest.results.len(),
                manifest.config_hash
            );
            if !failed.is_empty() {
                eprintln!("failed stages: {}", failed.join(", "));
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { csv } => {
            let text = std::fs::read_to_string(csv)?;
            let (_space, ladder) = harness::ladder_from_csv(&text)?;
            let out = csv.with_extension("svg");
            std::fs::write(&out, harness::plot::emit_plot(&ladder))?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_ladder(
    out: &PathBuf,
    space_label: &str,
    ladder: &heatperim::FunctionalLadder,
) -> Result<(), Error> {
    std::fs::create_dir_all(out)?;
    let base = out.join(&ladder.name);
    std::fs::write(
        base.with_extension("csv"),
        harness::ladder_to_csv(space_label, ladder),
    )?;
    std::fs::write(base.with_extension("dat"), harness::ladder_to_dat(ladder))?;
    std::fs::write(base.with_extension("svg"), harness::plot::emit_plot(ladder))?;
    match ladder.limit_est {
        Some(est) => println!(
            "{}: limit estimate {est:.9} (min in window {:?})",
            ladder.name, ladder.min_in_window
        ),
        None => println!("{}: no plateau", ladder.name),
    }
    Ok(())
}
