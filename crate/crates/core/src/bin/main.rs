use std::path::PathBuf;
use std::process::ExitCode;

use chaos_uncertainty::experiments::{
    emit_report, run_experiment, CelestialConfig, CelestialModel, EnergyGrid, ExperimentConfig,
    ExperimentKind, Summary, TodaPoincareConfig, TodaSweepConfig, ToyRunConfig,
};
use chaos_uncertainty::{Error, Indicator};
use clap::{Parser, Subcommand};
use serde_json::Value;

/// Run the toy, Toda and celestial stability experiments and write CSV
/// tables, SVG plots and a manifest.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// JSON experiment configuration; its fields override command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deviation under the time-dependent toy matrix.
    Toy {
        #[arg(long)]
        delta_t: Option<f64>,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uncertainty product of the Toda system over an energy grid.
    TodaSweep {
        #[arg(long)]
        e_min: Option<f64>,
        #[arg(long)]
        e_max: Option<f64>,
        #[arg(long)]
        e_steps: Option<usize>,
        #[arg(long)]
        ensemble: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Poincaré section of the Toda system at one energy.
    TodaPoincare {
        #[arg(long)]
        energy: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kepler or Sun-Jupiter-Earth orbit with both stability spectra.
    Celestial {
        #[arg(long)]
        model: Option<CelestialModel>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        ecc: Option<f64>,
        #[arg(long)]
        indicator: Option<Indicator>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn from_flags(cmd: Command) -> ExperimentConfig {
    let (kind, seed, out) = match cmd {
        Command::Toy {
            delta_t,
            t_final,
            step,
            out,
        } => {
            let mut c = ToyRunConfig::default();
            if let Some(v) = delta_t {
                c.toy.delta_t = v;
            }
            if let Some(v) = t_final {
                c.t_final = v;
            }
            if let Some(v) = step {
                c.step = v;
            }
            (ExperimentKind::ToyRun(c), None, out)
        }
        Command::TodaSweep {
            e_min,
            e_max,
            e_steps,
            ensemble,
            seed,
            out,
        } => {
            let d = TodaSweepConfig::default();
            let c = TodaSweepConfig {
                energies: EnergyGrid {
                    min: e_min.unwrap_or(d.energies.min),
                    max: e_max.unwrap_or(d.energies.max),
                    steps: e_steps.unwrap_or(d.energies.steps),
                },
                ensemble: ensemble.unwrap_or(d.ensemble),
                ..d
            };
            (ExperimentKind::TodaSweep(c), seed, out)
        }
        Command::TodaPoincare { energy, out } => {
            let mut c = TodaPoincareConfig::default();
            if let Some(v) = energy {
                c.energy = v;
            }
            (ExperimentKind::TodaPoincare(c), None, out)
        }
        Command::Celestial {
            model,
            a,
            ecc,
            indicator,
            out,
        } => {
            let d = CelestialConfig::default();
            let c = CelestialConfig {
                model: model.unwrap_or(d.model),
                a: a.unwrap_or(d.a),
                ecc: ecc.unwrap_or(d.ecc),
                indicator: indicator.unwrap_or(d.indicator),
                ..d
            };
            (ExperimentKind::CelestialRun(c), None, out)
        }
    };
    let mut cfg = ExperimentConfig::new(kind);
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    cfg
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn build_config(cli: Cli) -> Result<ExperimentConfig, Error> {
    let flags = cli.command.map(from_flags);
    let Some(path) = cli.config else {
        return flags.ok_or_else(|| {
            Error::Config("no experiment given (use a subcommand or --config)".into())
        });
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let file: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut value = match flags {
        Some(f) => serde_json::to_value(&f)?,
        None => Value::Object(Default::default()),
    };
    // A file naming a different experiment replaces the flags entirely.
    if file.get("kind").is_some() && file.get("kind") != value.get("kind") {
        value = Value::Object(Default::default());
    }
    merge(&mut value, file);
    ExperimentConfig::from_json(&value.to_string())
}

fn describe(summary: &Summary) -> String {
    match summary {
        Summary::Toy(s) => format!(
            "max|xi1| = {:.6} at t = {:.4}; max product = {:.6}",
            s.max_abs_xi1, s.argmax_t_xi1, s.verdict.max_product
        ),
        Summary::TodaSweep(s) => {
            let mut out = String::from("energy  max_product  cumulative_product");
            for p in &s.points {
                out += &format!("\n{:.4}  {:.6}  {:.6}", p.energy, p.max_product, p.cumulative_product);
            }
            match s.threshold_energy {
                Some(e) => out += &format!("\nthreshold energy ≈ {e:.4}"),
                None => out += "\nmax product stays below 1 on this grid",
            }
            out
        }
        Summary::TodaPoincare(s) => format!(
            "{} section points; max product = {:.6}",
            s.n_points, s.verdict.max_product
        ),
        Summary::Celestial(s) => format!(
            "lyapunov: positive fraction {:.4}, max product {:.6}; gem: {} intervals, max product {:.6}",
            s.lyapunov.positive_fraction,
            s.lyapunov.verdict.max_product,
            s.gem.verdict.intervals.len(),
            s.gem.verdict.max_product
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = run_experiment(&cfg).and_then(|mut rec| {
        let dir = emit_report(&mut rec, None)?;
        Ok((rec, dir))
    });
    match result {
        Ok((rec, dir)) => {
            println!("{}", describe(&rec.summary));
            let failed = rec.runs.iter().filter(|r| !r.ok).count();
            if failed > 0 {
                println!("{failed} of {} runs failed (see manifest)", rec.runs.len());
            }
            println!(
                "wrote {} files to {} in {:.2} s",
                rec.artifacts.len(),
                dir.display(),
                rec.wall_time_s
            );
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
