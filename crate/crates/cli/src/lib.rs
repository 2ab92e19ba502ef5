//! Command-line front end: operator distances, certificates, graph spectra
//! and strip sweeps.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use opdist::io::{self, map_to_json, operator_to_json, write_atomic};
use opdist::{
    assemble_graph_laplacian, d_hausdorff_spec, d_spec, d_uni_equal_dim, eig_sym, graph_spectrum,
    que_certify, run_sweep, symmetrize_pair, Error, FatPair, HermOperator, IdentificationPair,
    Matrix, MetricGraph, OperatorKind, PowerOptions, SweepOptions,
};

const SEED_ENV: &str = "OPDIST_SEED";

#[derive(Parser, Debug)]
#[command(name = "opdist", version, about = "Distances between operators on different spaces")]
pub struct Cli {
    /// Seed for every randomised estimate; OPDIST_SEED takes precedence.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Relative tolerance of the power iteration.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Iteration cap of the power iteration.
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Metric {
    Spec,
    Hausdorff,
    Uni,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Distance between the spectra of two operators.
    Dist {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Spec)]
        metric: Metric,
    },
    /// Quasi-unitary certificate for a pair of operators and identification maps.
    Certify {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        j: PathBuf,
        #[arg(long)]
        jprime: Option<PathBuf>,
        /// Also recertify with J' replaced by the adjoint of J.
        #[arg(long)]
        symmetrize: bool,
    },
    /// Lowest eigenvalues of the Kirchhoff Laplacian of a metric graph.
    Spectrum {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        h: f64,
        #[arg(short = 'k', default_value_t = 5)]
        k: usize,
    },
    /// Thin-strip sweep over a list of widths; writes CSV and prints slopes.
    Sweep {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 6)]
        nt: usize,
        #[arg(short = 'k', default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes the graph Laplacian, strip Laplacian and J of one width as files.
    Export {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 6)]
        nt: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// What a command printed and how the process should exit.
#[derive(Debug)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: u8,
}

/// Parse and validation failures exit with 2, shape and contract failures
/// with 3, everything else with 1.
pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Parse(_) | Error::Validation(_) => 2,
        Error::Shape(_) | Error::Contract(_) => 3,
        _ => 1,
    }
}

fn seed(cli: &Cli) -> Result<u64, Error> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(cli.seed),
    }
}

fn power_options(cli: &Cli) -> Result<PowerOptions, Error> {
    let mut opts = PowerOptions::seeded(seed(cli)?);
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Validation(format!("--tol must lie in (0, 1), got {t}")));
        }
        opts.rel_tol = t;
    }
    if let Some(m) = cli.max_iter {
        if m == 0 {
            return Err(Error::Validation("--max-iter must be positive".into()));
        }
        opts.max_iter = m;
    }
    Ok(opts)
}

fn read_graph(path: &Path) -> Result<MetricGraph, Error> {
    MetricGraph::from_json(&io::read_to_string(path)?)
        .map_err(|e| e.context(path.display().to_string()))
}

fn cmd_dist(a: &Path, b: &Path, metric: Metric) -> Result<String, Error> {
    let a = io::read_operator(a, false)?.to_resolvent()?;
    let b = io::read_operator(b, false)?.to_resolvent()?;
    Ok(match metric {
        Metric::Spec => {
            let d = d_spec(&eig_sym(&a)?.sequence()?, &eig_sym(&b)?.sequence()?);
            format!("{:e}\nindex {}\n", d.value, d.index + 1)
        }
        Metric::Hausdorff => {
            let d = d_hausdorff_spec(&eig_sym(&a)?.sequence()?, &eig_sym(&b)?.sequence()?);
            format!("{d:e}\n")
        }
        Metric::Uni => format!("{:e}\n", d_uni_equal_dim(&a, &b)?.value),
    })
}

fn cmd_certify(
    a: &Path,
    b: &Path,
    j: &Path,
    jprime: Option<&Path>,
    symmetrize: bool,
    opts: &PowerOptions,
) -> Result<String, Error> {
    let r = io::read_operator(a, false)?;
    let rt = io::read_operator(b, false)?;
    let j = io::read_map(j)?;
    let jp = jprime.map(io::read_map).transpose()?;
    let pair = IdentificationPair::new(j, jp)?;
    if pair.source_dim() != r.dim() || pair.target_dim() != rt.dim() {
        return Err(Error::Shape(format!(
            "J is {}x{}, operators have dimensions {} and {}",
            pair.target_dim(),
            pair.source_dim(),
            r.dim(),
            rt.dim()
        )));
    }
    let report = que_certify(&r, &rt, &pair, opts)?;
    let json = if symmetrize {
        let sym = symmetrize_pair(&r, &rt, &pair, report.delta, opts)?;
        let bound = 3.0 * report.delta;
        serde_json::json!({
            "report": report,
            "symmetrized": sym,
            "bound": bound,
            "within_bound": sym.delta <= bound + 1e-9,
        })
    } else {
        serde_json::to_value(report).expect("report serialises")
    };
    Ok(format!("{}\n", serde_json::to_string_pretty(&json).expect("json serialises")))
}

fn cmd_spectrum(graph: &Path, h: f64, k: usize) -> Result<String, Error> {
    let g = read_graph(graph)?;
    let model = assemble_graph_laplacian(&g, h)?;
    let mut out = String::new();
    for l in graph_spectrum(&model, k)? {
        writeln!(out, "{l:e}").unwrap();
    }
    Ok(out)
}

pub fn cmd_sweep(
    graph: &Path,
    eps: &[f64],
    nt: usize,
    k: usize,
    out: &Path,
    seed: u64,
) -> Result<(String, bool), Error> {
    let g = read_graph(graph)?;
    let result = run_sweep(&g, eps, &SweepOptions { n_t: nt, k, seed })?;
    write_atomic(out, &result.to_csv())?;
    let mut text = String::new();
    writeln!(
        text,
        "ell0 {:e} lambda2 {:e} c_vol {:e}",
        result.ell0, result.lambda2, result.c_vol
    )
    .unwrap();
    for (name, slope) in result.slopes() {
        match slope {
            Some(s) => writeln!(text, "slope {name} {s:e}").unwrap(),
            None => writeln!(text, "slope {name} indeterminate").unwrap(),
        }
    }
    for row in result.rows.iter().filter(|r| !r.ok()) {
        writeln!(text, "row eps={:e} failed: {}", row.eps, row.error.as_deref().unwrap_or("")).unwrap();
    }
    Ok((text, result.all_ok()))
}

fn cmd_export(graph: &Path, eps: f64, nt: usize, out_dir: &Path) -> Result<String, Error> {
    let g = read_graph(graph)?;
    let fp = FatPair::new(&g, eps, nt)?;
    std::fs::create_dir_all(out_dir)?;
    let graph_op = HermOperator::new(
        Matrix::Sparse(fp.gm.laplacian().clone()),
        fp.gm.weights().to_vec(),
        OperatorKind::Laplacian,
        false,
    )?;
    let strip_op = HermOperator::new(
        Matrix::Sparse(fp.fm.laplacian().clone()),
        fp.fm.weights().to_vec(),
        OperatorKind::Laplacian,
        false,
    )?;
    let files = [
        ("graph.json", operator_to_json(&graph_op)),
        ("strip.json", operator_to_json(&strip_op)),
        ("j.json", map_to_json(fp.j())),
    ];
    let mut text = String::new();
    for (name, body) in files {
        let p = out_dir.join(name);
        write_atomic(&p, &body)?;
        writeln!(text, "{}", p.display()).unwrap();
    }
    Ok(text)
}

fn dispatch(cli: &Cli) -> Result<(String, bool), Error> {
    let opts = power_options(cli)?;
    let text = match &cli.command {
        Command::Dist { a, b, metric } => cmd_dist(a, b, *metric)?,
        Command::Certify {
            a,
            b,
            j,
            jprime,
            symmetrize,
        } => cmd_certify(a, b, j, jprime.as_deref(), *symmetrize, &opts)?,
        Command::Spectrum { graph, h, k } => cmd_spectrum(graph, *h, *k)?,
        Command::Sweep {
            graph,
            eps,
            nt,
            k,
            out,
        } => return cmd_sweep(graph, eps, *nt, *k, out, opts.seed),
        Command::Export {
            graph,
            eps,
            nt,
            out_dir,
        } => cmd_export(graph, *eps, *nt, out_dir)?,
    };
    Ok((text, true))
}

/// Runs a parsed command line. A sweep with a failed row exits with 1.
pub fn execute(cli: &Cli) -> Outcome {
    match dispatch(cli) {
        Ok((stdout, ok)) => Outcome {
            stdout,
            stderr: String::new(),
            code: if ok { 0 } else { 1 },
        },
        Err(e) => Outcome {
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
            code: exit_code(&e),
        },
    }
}

/// Parses `args` (program name first) and runs the command. Usage errors
/// exit with 2, help and version with 0.
pub fn run_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let text = e.render().to_string();
            let (stdout, stderr) = if e.use_stderr() {
                (String::new(), text)
            } else {
                (text, String::new())
            };
            Outcome {
                stdout,
                stderr,
                code: e.exit_code() as u8,
            }
        }
    }
}
