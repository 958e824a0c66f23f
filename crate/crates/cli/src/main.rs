//! `gsf`: fit symmetry and asymmetry models to square contingency tables,
//! decompose symmetry, run power studies and dump design matrices.
//!
//! Exit codes: 0 success, 2 unreadable or invalid input, 3 a fit did not
//! converge, 4 the model cannot be used as requested.

mod format;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use gsf_core::design::{design_matrix, AsymmetryFamily};
use gsf_core::io::{read_json, write_json, FitReport, TableDocument};
use gsf_core::simulate::{self, FULL_SCALE_REPS};
use gsf_core::{decompose, fit_model, CountTable, Error, FFunction, ModelFamily, ModelSpec, SimConfig};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "gsf", version, about = "f-divergence symmetry models for square contingency tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one model and print G², df and the p-value.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// s, gs, els, ls, me2, me, ve or ce.
        #[arg(long)]
        model: ModelFamily,
        /// kl, pearson, hellinger or power:LAMBDA; needed by gs, els and ls.
        #[arg(long = "f")]
        ff: Option<FFunction>,
        /// Comma-separated category scores replacing those of the input.
        #[arg(long, value_delimiter = ',')]
        scores: Option<Vec<f64>>,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Partition symmetry into GS[f] and ME₂ with G² and Wald statistics.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "f", default_value = "kl")]
        ff: FFunction,
        #[arg(long)]
        json: bool,
    },
    /// Monte Carlo rejection rates for a scenario file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of replicates.
        #[arg(long)]
        reps: Option<usize>,
        /// 10,000 replicates of 10,000 observations.
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the results here; `.csv` gives CSV, anything else JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write X, X^S, U and M as CSV plus a layout manifest.
    Design {
        #[arg(long)]
        r: usize,
        #[arg(long = "T")]
        t: usize,
        /// gs, els or ls.
        #[arg(long)]
        model: AsymmetryFamily,
        #[arg(long)]
        out: PathBuf,
    },
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence { .. } | Error::Positivity { .. } | Error::Infeasible(_) => 3,
            Error::Config(_) | Error::RankDeficient { .. } => 4,
            Error::Shape(_) | Error::CellRange { .. } | Error::Dimension(_) | Error::InvalidTable(_) | Error::Io(_) => 2,
            _ => 1,
        };
        Failure { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_table(path: &Path, scores: Option<&[f64]>) -> CliResult<CountTable> {
    let doc: TableDocument = read_json(path).map_err(Failure::input)?;
    doc.to_table_with_scores(scores).map_err(Failure::input)
}

fn model_spec(family: ModelFamily, ff: Option<FFunction>) -> CliResult<ModelSpec> {
    ModelSpec::new(family, ff).map_err(|e| Failure { code: 4, error: e.into() })
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).context("serialising output")?;
    println!("{text}");
    Ok(())
}

fn cmd_fit(input: &Path, family: ModelFamily, ff: Option<FFunction>, scores: Option<&[f64]>, json: bool) -> CliResult<()> {
    let spec = model_spec(family, ff)?;
    let table = load_table(input, scores)?;
    let fit = fit_model(&table, &spec)?;
    if json {
        return print_json(&FitReport::from_fit(&fit));
    }
    println!("model       {}", spec.label());
    println!("G2          {}", format::sig3(fit.g2));
    println!("df          {}", fit.df);
    println!("p-value     {}", format::pvalue(fit.pvalue));
    println!("converged   {} ({} iterations, residual {:.1e})", fit.converged, fit.iterations, fit.constraint_residual);
    Ok(())
}

fn cmd_decompose(input: &Path, ff: FFunction, json: bool) -> CliResult<()> {
    let table = load_table(input, None)?;
    let report = decompose(&table, ff)?;
    if json {
        return print_json(&report);
    }
    let rows: Vec<Vec<String>> = report
        .partition
        .iter()
        .map(|row| {
            vec![
                row.model.clone(),
                row.df.to_string(),
                format::sig3(row.g2),
                format::pvalue(row.pvalue),
                row.wald.map(format::sig3).unwrap_or_else(|| "-".into()),
                row.wald_pvalue.map(format::pvalue).unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    print!("{}", format::table(&["model", "df", "G2", "p", "W", "p(W)"], &rows));
    println!();
    println!("G2(S) - G2(GS) - G2(ME2)   {:.4}", report.g2_gap);
    println!("|W(S) - W(GS) - W(ME2)|    {:.4}", report.additivity_gap);
    println!("orthogonality residual     {:.2e}", report.orthogonality_residual);
    if report.smoothed {
        println!("note: Wald statistics use proportions smoothed by 0.5 per cell");
    }
    if report.ridged {
        println!("note: a ridge was added to an ill-conditioned Wald matrix");
    }
    Ok(())
}

fn cmd_simulate(path: &Path, reps: Option<usize>, full_scale: bool, seed: Option<u64>, out: Option<&Path>) -> CliResult<()> {
    let mut config: SimConfig = read_json(path).map_err(Failure::input)?;
    if full_scale {
        config.n_reps = FULL_SCALE_REPS;
        config.n_obs = 10_000;
    }
    if let Some(r) = reps {
        config.n_reps = r;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate().map_err(Failure::input)?;
    let report = simulate::power_study(&config)?;

    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.df.to_string(),
                format!("{:.4}", r.rate),
                format!("[{:.4}, {:.4}]", r.ci_low, r.ci_high),
                r.failures.to_string(),
            ]
        })
        .collect();
    println!(
        "{} replicates of n = {}, alpha = {}, seed = {}",
        report.n_reps, report.n_obs, report.alpha, report.seed
    );
    print!("{}", format::table(&["model", "df", "rate", "95% CI", "failed"], &rows));

    if let Some(out) = out {
        if out.extension().is_some_and(|e| e == "csv") {
            let mut w = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
            for row in &report.rows {
                w.serialize(row).context("writing CSV row")?;
            }
            w.flush().context("flushing CSV")?;
        } else {
            write_json(out, &report)?;
        }
    }
    Ok(())
}

fn write_matrix(path: &Path, m: &gsf_core::nalgebra::DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))
            .context("writing CSV row")?;
    }
    w.flush().context("flushing CSV")?;
    Ok(())
}

#[derive(Serialize)]
struct Layout {
    r: usize,
    #[serde(rename = "T")]
    t: usize,
    model: String,
    rows: usize,
    columns: usize,
    constraints: usize,
    blocks: Vec<(String, usize, usize)>,
    pair_chain: Vec<(usize, usize)>,
    files: Vec<&'static str>,
}

fn cmd_design(r: usize, t: usize, family: AsymmetryFamily, out: &Path) -> CliResult<()> {
    let shape = gsf_core::TableShape::equally_spaced(r, t)?;
    let ds = design_matrix(&shape, family)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_matrix(&out.join("x.csv"), &ds.x)?;
    write_matrix(&out.join("xs.csv"), &ds.xs)?;
    write_matrix(&out.join("u.csv"), &ds.u)?;
    write_matrix(&out.join("m.csv"), &ds.m)?;
    let l = &ds.layout;
    let blocks = [("alpha", &l.alpha), ("beta_diag", &l.beta_diag), ("beta_offdiag", &l.beta_offdiag), ("gamma", &l.gamma)]
        .into_iter()
        .map(|(name, range)| (name.to_string(), range.start, range.end))
        .collect();
    let layout = Layout {
        r,
        t,
        model: family.name().to_string(),
        rows: ds.x.nrows(),
        columns: ds.x.ncols(),
        constraints: ds.n_constraints(),
        blocks,
        pair_chain: ds.pair_chain.clone(),
        files: vec!["x.csv", "xs.csv", "u.csv", "m.csv"],
    };
    write_json(&out.join("layout.json"), &layout)?;
    println!(
        "{} design for r = {r}, T = {t}: X is {} x {}, {} constraints, written to {}",
        family.name(),
        ds.x.nrows(),
        ds.x.ncols(),
        ds.n_constraints(),
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit { input, model, ff, scores, json } => cmd_fit(&input, model, ff, scores.as_deref(), json),
        Command::Decompose { input, ff, json } => cmd_decompose(&input, ff, json),
        Command::Simulate { config, reps, full_scale, seed, out } => {
            cmd_simulate(&config, reps, full_scale, seed, out.as_deref())
        }
        Command::Design { r, t, model, out } => cmd_design(r, t, model, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = writeln!(std::io::stderr(), "error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
