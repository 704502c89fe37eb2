//! Command-line front end: run experiments, the common-atom demo, tensor
//! printing and the verification suite.
//!
//! Exit codes: 0 success, 1 config error, 2 solver failure, 3 acceptance
//! violation (verify).

use clap::{Parser, Subcommand};
use lamina::harness::{
    presets, run_common_atom_demo, run_convergence, verify, RawConfig, RunError,
};
use lamina::tensors::EffectiveLaw;
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lamina",
    version,
    about = "Solvers and verification harness for stratified high-contrast elliptic problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence experiment from a config file or built-in preset.
    Run {
        /// Experiment config (TOML). Optional when --preset is given.
        config: Option<PathBuf>,
        /// Built-in preset name (E1, E2, E3, E4).
        #[arg(long)]
        preset: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the solver tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Force strictly serial execution (always on; flag kept for
        /// compatibility with scripted invocations).
        #[arg(long)]
        serial: bool,
    },
    /// Run the common-atom demonstration (two nested families).
    DemoCommonAtom {
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        serial: bool,
    },
    /// Print the effective tensors of a law config.
    Tensors {
        /// TOML file with a [law] section (and optional [grid] dimension).
        config: PathBuf,
    },
    /// Run the full acceptance property suite.
    Verify {
        /// Also write the per-criterion lines to DIR/verify.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn load_config(
    config: Option<PathBuf>,
    preset: Option<String>,
    out: Option<PathBuf>,
    tol: Option<f64>,
) -> Result<lamina::harness::Experiment, RunError> {
    let mut raw = match (config, preset) {
        (Some(path), None) => RawConfig::from_path(&path)?,
        (None, Some(name)) => presets::preset(&name).ok_or_else(|| {
            lamina::harness::ConfigError::Invalid(format!(
                "unknown preset {name:?}; available: {}",
                presets::NAMES.join(", ")
            ))
        })?,
        (Some(path), Some(name)) => {
            // explicit config wins; the preset only names the run
            let mut raw = RawConfig::from_path(&path)?;
            raw.preset = Some(name);
            raw
        }
        (None, None) => {
            return Err(lamina::harness::ConfigError::Invalid(
                "give a config file or --preset NAME".into(),
            )
            .into())
        }
    };
    if let Some(dir) = out {
        raw.output.dir = dir.display().to_string();
    }
    if let Some(t) = tol {
        raw.solver.tol = t;
    }
    let exp = raw.validate()?;
    for w in &exp.warnings {
        eprintln!("warning: {w}");
    }
    Ok(exp)
}

fn dispatch(cli: Cli) -> Result<ExitCode, RunError> {
    match cli.command {
        Command::Run {
            config,
            preset,
            out,
            tol,
            serial: _,
        } => {
            let exp = load_config(config, preset, out, tol)?;
            let report = run_convergence(&exp)?;
            let written = report.emit(&exp.out_dir, &exp.formats, "convergence")?;
            for path in written {
                eprintln!("wrote {path}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::DemoCommonAtom {
            config,
            preset,
            out,
            tol,
            serial: _,
        } => {
            let exp = load_config(config, preset.or(Some("E4".into())), out, tol)?;
            let report = run_common_atom_demo(&exp)?;
            let written = report.emit(&exp.out_dir, &exp.formats, "demo")?;
            for path in written {
                eprintln!("wrote {path}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Tensors { config } => {
            print_tensors(&config)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { out } => {
            let results = verify::run_all_criteria();
            let mut lines = String::new();
            for r in &results {
                println!("{}", r.line());
                lines.push_str(&r.line());
                lines.push('\n');
            }
            let all_pass = results.iter().all(|r| r.pass);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).ok();
                std::fs::write(dir.join("verify.txt"), lines).ok();
            }
            if all_pass {
                println!("all {} criteria pass", results.len());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("acceptance violation");
                Ok(ExitCode::from(3))
            }
        }
    }
}

#[derive(Deserialize)]
struct LawConfig {
    law: lamina::harness::config::LawSpec,
    #[serde(default)]
    grid: Option<DimOnly>,
}

#[derive(Deserialize)]
struct DimOnly {
    dimension: usize,
}

fn print_tensors(path: &PathBuf) -> Result<(), RunError> {
    use lamina::harness::ConfigError;
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let law_config: LawConfig =
        toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    // reuse the full validator with a stub sweep/grid
    let dim = law_config
        .grid
        .as_ref()
        .map(|g| g.dimension)
        .or_else(|| law_config.law.a.as_ref().map(|rows| rows.len()))
        .unwrap_or(3);
    let raw = RawConfig {
        preset: Some("tensors".into()),
        profile: None,
        profile2: None,
        law: law_config.law,
        grid: lamina::harness::config::GridSpec {
            dimension: dim,
            resolution: 2,
            transverse_extent: 1.0,
            k_min: 2,
        },
        solver: Default::default(),
        source: Default::default(),
        sweep: lamina::harness::config::SweepSpec { eps: vec![0.1] },
        output: Default::default(),
        measures: None,
    };
    let exp = raw.validate()?;
    let law = &exp.eff_law;
    let (n, d) = (law.n(), law.d());
    let a_perp = law.a_perp_grad();
    let a_par = law.a_par_grad();
    let iface = law.iface();

    println!("# effective tensors (n = {n}, d = {d}; indices 1-based)");
    match law {
        EffectiveLaw::Iso(l) => println!("# isotropic law, l = {}", l.l),
        EffectiveLaw::System(_) => println!("# system law"),
    }
    for (name, tensor) in [("a_perp", &a_perp), ("a_par", &a_par)] {
        println!("\n{name}:");
        for i in 0..n {
            for j in 0..d {
                print!("   ");
                for p in 0..n {
                    for q in 0..d {
                        print!(" {:>12.6}", tensor.get(i, j, p, q));
                    }
                }
                println!();
            }
        }
    }
    println!("\ninterface matrix A:");
    for i in 0..n {
        print!("   ");
        for p in 0..n {
            print!(" {:>12.6}", iface[(i, p)]);
        }
        println!();
    }
    println!("\n# machine-readable rows: tensor i j p q value");
    for (name, tensor) in [("aperp", &a_perp), ("apar", &a_par)] {
        for i in 0..n {
            for j in 0..d {
                for p in 0..n {
                    for q in 0..d {
                        println!(
                            "{name} {} {} {} {} {}",
                            i + 1,
                            j + 1,
                            p + 1,
                            q + 1,
                            tensor.get(i, j, p, q)
                        );
                    }
                }
            }
        }
    }
    for i in 0..n {
        for p in 0..n {
            println!("iface {} {} {}", i + 1, p + 1, iface[(i, p)]);
        }
    }
    Ok(())
}
