//! `ifskit` — analyse affine iterated function systems from the command
//! line. Exit codes: 0 success, 1 a computation or check failed, 2 usage or
//! config error.

mod config;

use clap::{Parser, Subcommand};
use config::{ConfigError, IfsConfig};
use ifskit::fibres::{
    classify_fibre, fibre_sequence, strongly_fibred_report, Address, FibreClass,
    DEFAULT_COLLINEARITY_TOL, DEFAULT_POINT_TOL,
};
use ifskit::measure::{iterate_to_invariance_with, GridMeasure};
use ifskit::points::{chaos_game, OrbitConfig};
use ifskit::verify::{verify_all_with_fault, Scale};
use ifskit::Vec2;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ifskit", version, about = "Affine IFS analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-map and per-iterate contractivity analysis of a system.
    Analyze {
        config: PathBuf,
        /// Largest iterate order to average over.
        #[arg(long, default_value_t = 3)]
        max_k: u32,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the parsed system back out as a normalised config.
        #[arg(long)]
        emit_config: Option<PathBuf>,
    },
    /// Run the chaos game and write the orbit as CSV.
    Chaos {
        config: PathBuf,
        /// Starting point as "x,y".
        #[arg(long, default_value = "0.3,0.3")]
        start: String,
        /// Number of recorded samples.
        #[arg(long, default_value_t = 100_000)]
        n: u64,
        #[arg(long, default_value_t = 100)]
        burn_in: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Independent orbit chunks (results are concatenated).
        #[arg(long, default_value_t = 1)]
        chunks: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Iterate the Markov operator on a grid until invariance.
    Measure {
        config: PathBuf,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long, default_value_t = 500)]
        iters: u32,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Start from a point mass at "x,y" instead of the uniform start.
        #[arg(long)]
        start_point: Option<String>,
        /// Renormalise retained mass each step (conditions the limit on
        /// orbits that stay inside the bounds).
        #[arg(long)]
        renormalize: bool,
        /// Output prefix; writes <prefix>.pgm, <prefix>.csv, <prefix>.log.
        #[arg(long)]
        out: String,
    },
    /// Approximate a fibre of the invariant region along an address.
    Fibre {
        config: PathBuf,
        /// Address digits, e.g. "1222" or periodic "prefix:tail" like "2:2".
        #[arg(long)]
        address: String,
        #[arg(long, default_value_t = 40)]
        depth: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in verification suite.
    Verify {
        #[arg(long, default_value = "full")]
        scale: String,
        /// Emit the report as JSON instead of text.
        #[arg(long)]
        json: bool,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

enum CliError {
    /// Bad input: config, flags, addresses. Exit 2.
    Usage(String),
    /// The computation itself failed or a check did not pass. Exit 1.
    Failed(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Analyze {
            config,
            max_k,
            out,
            emit_config,
        } => cmd_analyze(&config, max_k, out.as_deref(), emit_config.as_deref()),
        Cmd::Chaos {
            config,
            start,
            n,
            burn_in,
            seed,
            chunks,
            out,
        } => cmd_chaos(&config, &start, n, burn_in, seed, chunks, &out),
        Cmd::Measure {
            config,
            grid,
            iters,
            tol,
            start_point,
            renormalize,
            out,
        } => cmd_measure(&config, grid, iters, tol, start_point.as_deref(), renormalize, &out),
        Cmd::Fibre {
            config,
            address,
            depth,
            out,
        } => cmd_fibre(&config, &address, depth, out.as_deref()),
        Cmd::Verify {
            scale,
            json,
            inject_fault,
        } => cmd_verify(&scale, json, inject_fault.as_deref()),
    }
}

fn parse_point(text: &str) -> Result<Vec2, CliError> {
    let err = || CliError::Usage(format!("expected a point as \"x,y\", got {text:?}"));
    let (x, y) = text.split_once(',').ok_or_else(err)?;
    let x: f64 = x.trim().parse().map_err(|_| err())?;
    let y: f64 = y.trim().parse().map_err(|_| err())?;
    if !x.is_finite() || !y.is_finite() {
        return Err(err());
    }
    Ok(Vec2::new(x, y))
}

fn emit(report: &serde_json::Value, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).expect("report serialises") + "\n";
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_analyze(
    config_path: &Path,
    max_k: u32,
    out: Option<&Path>,
    emit_config: Option<&Path>,
) -> Result<(), CliError> {
    let config = IfsConfig::load(config_path)?;
    let system = config.system()?;
    if let Some(path) = emit_config {
        std::fs::write(path, config.to_json())?;
    }

    let per_map: Vec<f64> = system.maps().iter().map(|f| f.lipschitz()).collect();
    let averages: Vec<serde_json::Value> = if system.probs().is_some() {
        (1..=max_k)
            .map(|k| {
                let avg = system
                    .average_contractivity(k)
                    .map_err(|e| CliError::Failed(e.to_string()))?;
                Ok(json!({ "k": k, "average": avg }))
            })
            .collect::<Result<_, CliError>>()?
    } else {
        Vec::new()
    };
    let min_k = if system.probs().is_some() {
        system
            .min_average_contractive_k(max_k)
            .map_err(|e| CliError::Failed(e.to_string()))?
    } else {
        None
    };
    let word = system.find_contractive_word(max_k).map(|(w, lip)| {
        json!({
            "word": w.letters().iter().map(u8::to_string).collect::<String>(),
            "lipschitz": lip,
        })
    });
    let critical = if system.len() == 2 {
        system
            .critical_probability(2)
            .map_err(|e| CliError::Failed(e.to_string()))?
    } else {
        None
    };

    emit(
        &json!({
            "per_map_lipschitz": per_map,
            "average_contractivity": averages,
            "min_contractive_k": min_k,
            "contractive_word": word,
            "critical_p1": critical,
        }),
        out,
    )
}

fn cmd_chaos(
    config_path: &Path,
    start: &str,
    n: u64,
    burn_in: u64,
    seed: u64,
    chunks: u64,
    out: &Path,
) -> Result<(), CliError> {
    let config = IfsConfig::load(config_path)?;
    let system = config.system()?;
    if chunks == 0 {
        return Err(CliError::Usage("--chunks must be at least 1".into()));
    }
    let start = parse_point(start)?;
    let cfg = OrbitConfig {
        burn_in,
        samples: n,
        rng_seed: seed,
        chunk_count: chunks,
    };
    let sys = if system.probs().is_some() {
        system
    } else {
        system.with_uniform_probs()
    };
    let cloud = chaos_game(&sys, start, &cfg).map_err(|e| CliError::Failed(e.to_string()))?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(out)?);
    cloud.write_csv(&mut file)?;
    file.flush()?;
    eprintln!("wrote {} points to {}", cloud.len(), out.display());
    Ok(())
}

fn cmd_measure(
    config_path: &Path,
    grid: usize,
    iters: u32,
    tol: f64,
    start_point: Option<&str>,
    renormalize: bool,
    out_prefix: &str,
) -> Result<(), CliError> {
    let config = IfsConfig::load(config_path)?;
    let system = config.system()?;
    let bounds = config.grid_bounds();
    if grid == 0 {
        return Err(CliError::Usage("--grid must be positive".into()));
    }
    let start = match start_point {
        Some(text) => {
            let p = parse_point(text)?;
            GridMeasure::point_mass(bounds, grid, p)
                .map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => match config.hint_polygon()? {
            Some(hint) => GridMeasure::uniform_on_polygon(&hint, bounds, grid)
                .map_err(|e| CliError::Usage(e.to_string()))?,
            None => GridMeasure::uniform(bounds, grid),
        },
    };
    let (limit, report) = iterate_to_invariance_with(&system, &start, tol, iters as usize, renormalize)
        .map_err(|e| CliError::Failed(e.to_string()))?;

    let mut pgm = std::io::BufWriter::new(std::fs::File::create(format!("{out_prefix}.pgm"))?);
    limit.write_pgm(&mut pgm)?;
    pgm.flush()?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(format!("{out_prefix}.csv"))?);
    limit.write_csv(&mut csv)?;
    csv.flush()?;
    let mut log = std::io::BufWriter::new(std::fs::File::create(format!("{out_prefix}.log"))?);
    writeln!(log, "iteration,residual")?;
    for (i, r) in report.residuals.iter().enumerate() {
        writeln!(log, "{},{:.16e}", i + 1, r)?;
    }
    log.flush()?;

    emit(
        &json!({
            "grid": grid,
            "iterations": report.iterations,
            "converged": report.converged,
            "final_residual": report.residuals.last(),
            "escaped_mass": if renormalize { report.escaped_total } else { limit.escaped_mass() },
            "outputs": [format!("{out_prefix}.pgm"), format!("{out_prefix}.csv"), format!("{out_prefix}.log")],
        }),
        None,
    )?;
    if !report.converged {
        return Err(CliError::Failed(format!(
            "did not reach tolerance {tol} within {iters} iterations"
        )));
    }
    Ok(())
}

fn cmd_fibre(
    config_path: &Path,
    address: &str,
    depth: u32,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let config = IfsConfig::load(config_path)?;
    let system = config.system()?;
    let hint = config.hint_polygon()?.ok_or_else(|| {
        CliError::Usage("fibre analysis needs invariant_hint in the config".into())
    })?;
    if depth == 0 {
        return Err(CliError::Usage("--depth must be at least 1".into()));
    }
    let address = Address::parse(address).map_err(|e| CliError::Usage(e.to_string()))?;
    let seq = fibre_sequence(&system, &hint, &address, depth)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let class = classify_fibre(&seq, DEFAULT_POINT_TOL, DEFAULT_COLLINEARITY_TOL);
    let kieninger = strongly_fibred_report(&system, &hint, 3)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let class_json = match &class {
        FibreClass::Point(p) => json!({ "class": "point", "witness": [p.x, p.y] }),
        FibreClass::Segment(a, b) => {
            json!({ "class": "segment", "witness": [[a.x, a.y], [b.x, b.y]] })
        }
        FibreClass::Undecided => json!({ "class": "undecided" }),
    };
    let table: Vec<serde_json::Value> = seq
        .iter()
        .map(|a| json!({ "depth": a.depth, "area": a.area, "diameter": a.diameter }))
        .collect();
    let last = seq.last().expect("depth >= 1");
    emit(
        &json!({
            "address": address.to_string(),
            "depth": depth,
            "classification": class_json,
            "strongly_fibred": kieninger.strongly_fibred.is_some(),
            "final_polygon": last
                .polygon
                .vertices()
                .iter()
                .map(|v| [v.x, v.y])
                .collect::<Vec<_>>(),
            "table": table,
        }),
        out,
    )
}

fn cmd_verify(scale: &str, as_json: bool, fault: Option<&str>) -> Result<(), CliError> {
    let scale: Scale = scale.parse().map_err(CliError::Usage)?;
    let report = verify_all_with_fault(scale, fault);
    if as_json {
        let value = serde_json::to_value(&report).expect("report serialises");
        emit(&value, None)?;
    } else {
        let mut out = std::io::stdout().lock();
        report.write_text(&mut out)?;
    }
    if report.all_pass() {
        Ok(())
    } else {
        Err(CliError::Failed("verification checks failed".into()))
    }
}
