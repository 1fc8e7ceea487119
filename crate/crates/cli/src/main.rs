use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphval::experiments::{pairwise_matrix, proxy_vs_direct, split_graph, SplitMode};
use graphval::io::{load_dataset, load_edge_list};
use graphval::protocol::{read_trace, run_session, verify_trace, write_trace, SessionConfig};
use graphval::valuation::{rank_sellers, score_candidates, Preference};
use graphval::{Error, GraphSet};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "graphval",
    version,
    about = "Blind valuation of graph datasets"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one buyer/seller session and write the report.
    Value {
        buyer: PathBuf,
        seller: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Write the session's message log (NDJSON) here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Score several sellers against one buyer and aggregate their ranks.
    Rank {
        buyer: PathBuf,
        #[arg(required = true, num_args = 2..)]
        sellers: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Preferred direction per metric.
        #[arg(long, default_value = "d=high,r=high,s=low")]
        prefer: Preference,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Pairwise set-level distances between datasets.
    Matrix {
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Matrix written in CSV mode.
        #[arg(long, value_enum, default_value_t = Metric::Gwd)]
        metric: Metric,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Split one graph into a baseline and candidates and compare proxy
    /// ranking with direct ranking.
    ProxyCheck {
        dataset: PathBuf,
        /// Number of candidates (the baseline is extra).
        #[arg(long, default_value_t = 3)]
        candidates: usize,
        #[arg(long, value_enum, default_value_t = Split::Random)]
        split: Split,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Recompute a session report from its trace.
    Verify { trace: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Random-walk steps.
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Laplacian eigenvectors per node.
    #[arg(long, default_value_t = 8)]
    k_prime: usize,
    /// Proxy graph seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Proxy node count (default: largest graph on either side).
    #[arg(long)]
    proxy_nodes: Option<usize>,
    /// Proxy edge probability.
    #[arg(long, default_value_t = 0.5)]
    proxy_p: f64,
}

impl RunArgs {
    fn config(&self) -> Result<SessionConfig, Error> {
        let config = SessionConfig {
            alpha: self.alpha,
            k: self.k,
            k_prime: self.k_prime,
            proxy_seed: self.seed,
            proxy_edge_probability: self.proxy_p,
            proxy_nodes: self.proxy_nodes,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct OutArgs {
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Gwd,
    S,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Random,
    Copies,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 1,
        Error::Verification(_) => 3,
        _ => 2,
    }
}

/// An `.edges` file is a one-graph dataset; anything else goes through the
/// manifest / TU loader.
fn load_input(path: &Path) -> Result<GraphSet, Error> {
    if path.extension().is_some_and(|e| e == "edges") {
        GraphSet::new(vec![load_edge_list(path)?])
    } else {
        load_dataset(path)
    }
}

fn dataset_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem().map_or_else(
                || p.display().to_string(),
                |s| s.to_string_lossy().into_owned(),
            )
        })
        .collect();
    let unique = {
        let mut sorted = stems.clone();
        sorted.sort();
        sorted.dedup();
        sorted.len() == stems.len()
    };
    if unique {
        stems
    } else {
        paths.iter().map(|p| p.display().to_string()).collect()
    }
}

fn emit(out: &OutArgs, text: &str) -> Result<(), Error> {
    match &out.out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, Error> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn csv_text(rows: Vec<Vec<String>>) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_value(
    buyer: &Path,
    seller: &Path,
    run: &RunArgs,
    trace: Option<&Path>,
    out: &OutArgs,
) -> Result<(), Error> {
    let config = run.config()?;
    let (buyer, seller) = (load_input(buyer)?, load_input(seller)?);
    let (report, transcript) = run_session(&buyer, &seller, &config)?;
    if let Some(reason) = &report.featural_skipped {
        log::warn!("featural scores skipped: {reason}");
    }
    if let Some(path) = trace {
        write_trace(path, transcript.messages())?;
    }
    emit(out, &json(&report)?)
}

#[derive(Serialize)]
struct RankOutput {
    preference: String,
    per_seller: Vec<graphval::valuation::SellerRanks>,
    final_order: Vec<String>,
}

fn cmd_rank(
    buyer: &Path,
    sellers: &[PathBuf],
    run: &RunArgs,
    prefer: &Preference,
    format: Format,
    out: &OutArgs,
) -> Result<(), Error> {
    let config = run.config()?;
    let buyer = load_input(buyer)?;
    let sets = sellers
        .iter()
        .map(|p| load_input(p))
        .collect::<Result<Vec<_>, _>>()?;
    let reports = score_candidates(&buyer, &sets, &config)?;
    let named: Vec<_> = dataset_names(sellers).into_iter().zip(reports).collect();
    let ranking = rank_sellers(&named, prefer)?;
    let text = match format {
        Format::Json => json(&RankOutput {
            preference: prefer.to_string(),
            per_seller: ranking.per_seller,
            final_order: ranking.final_order,
        })?,
        Format::Csv => {
            let mut rows = vec![[
                "seller",
                "rank_d",
                "rank_r",
                "rank_s",
                "average_rank",
                "position",
            ]
            .map(String::from)
            .to_vec()];
            for r in &ranking.per_seller {
                let position = ranking
                    .final_order
                    .iter()
                    .position(|s| *s == r.seller)
                    .expect("every seller is ordered")
                    + 1;
                rows.push(vec![
                    r.seller.clone(),
                    opt(r.rank_d),
                    opt(r.rank_r),
                    r.rank_s.to_string(),
                    r.average_rank.to_string(),
                    position.to_string(),
                ]);
            }
            csv_text(rows)?
        }
    };
    emit(out, &text)
}

#[derive(Serialize)]
struct MatrixOutput<'a> {
    datasets: &'a [String],
    gwd: &'a [Vec<f64>],
    s: &'a [Vec<f64>],
}

fn cmd_matrix(
    datasets: &[PathBuf],
    run: &RunArgs,
    metric: Metric,
    format: Format,
    out: &OutArgs,
) -> Result<(), Error> {
    let config = run.config()?;
    let sets = datasets
        .iter()
        .map(|p| load_input(p))
        .collect::<Result<Vec<_>, _>>()?;
    let names = dataset_names(datasets);
    let m = pairwise_matrix(&sets, &config)?;
    let text = match format {
        Format::Json => json(&MatrixOutput {
            datasets: &names,
            gwd: &m.gwd,
            s: &m.s,
        })?,
        Format::Csv => {
            let values = match metric {
                Metric::Gwd => &m.gwd,
                Metric::S => &m.s,
            };
            let mut header = vec!["dataset".to_string()];
            header.extend(names.iter().cloned());
            let mut rows = vec![header];
            for (name, row) in names.iter().zip(values) {
                let mut r = vec![name.clone()];
                r.extend(row.iter().map(f64::to_string));
                rows.push(r);
            }
            csv_text(rows)?
        }
    };
    emit(out, &text)
}

fn cmd_proxy_check(
    dataset: &Path,
    candidates: usize,
    split: Split,
    run: &RunArgs,
    format: Format,
    out: &OutArgs,
) -> Result<(), Error> {
    let config = run.config()?;
    if candidates == 0 {
        return Err(Error::InvalidArgument("need at least one candidate".into()));
    }
    let set = load_input(dataset)?;
    let graph = set
        .graphs()
        .iter()
        .rev()
        .max_by_key(|g| g.node_count())
        .expect("graph sets are non-empty");
    let mode = match split {
        Split::Random => SplitMode::Random,
        Split::Copies => SplitMode::Copies,
    };
    let parts = split_graph(graph, candidates + 1, mode, config.proxy_seed)?;
    let cmp = proxy_vs_direct(&parts[0], &parts[1..], &config)?;
    let text = match format {
        Format::Json => json(&cmp)?,
        Format::Csv => {
            let mut rows = vec![[
                "candidate",
                "proxy_gwd",
                "direct_gwd",
                "proxy_rank",
                "direct_rank",
                "spearman",
            ]
            .map(String::from)
            .to_vec()];
            for i in 0..cmp.proxy_gwd.len() {
                rows.push(vec![
                    (i + 1).to_string(),
                    cmp.proxy_gwd[i].to_string(),
                    cmp.direct_gwd[i].to_string(),
                    cmp.proxy_ranks[i].to_string(),
                    cmp.direct_ranks[i].to_string(),
                    cmp.spearman.to_string(),
                ]);
            }
            csv_text(rows)?
        }
    };
    emit(out, &text)
}

fn cmd_verify(trace: &Path) -> Result<(), Error> {
    let messages = read_trace(trace).map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::Verification(other.to_string()),
    })?;
    let report = verify_trace(&messages)?;
    println!(
        "ok: {} messages, S={} gwd={}",
        messages.len(),
        report.s(),
        report.gwd()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    match &cli.command {
        Command::Value {
            buyer,
            seller,
            run,
            trace,
            out,
        } => cmd_value(buyer, seller, run, trace.as_deref(), out),
        Command::Rank {
            buyer,
            sellers,
            run,
            prefer,
            format,
            out,
        } => cmd_rank(buyer, sellers, run, prefer, *format, out),
        Command::Matrix {
            datasets,
            run,
            metric,
            format,
            out,
        } => cmd_matrix(datasets, run, *metric, *format, out),
        Command::ProxyCheck {
            dataset,
            candidates,
            split,
            run,
            format,
            out,
        } => cmd_proxy_check(dataset, *candidates, *split, run, *format, out),
        Command::Verify { trace } => cmd_verify(trace),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("graphval: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
