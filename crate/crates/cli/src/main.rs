use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ergokit::io::{chain_to_csv, chain_to_json, ChainFormat};
use ergokit_cli::{
    cmd_analyze, cmd_couple, cmd_mix, cmd_report, cmd_stationary, parse_methods, ChainSpec, CliError, Outcome,
    ReportOptions, EXIT_OK, EXIT_USAGE,
};

#[derive(Parser)]
#[command(name = "ergokit", version, about = "Ergodicity analysis for finite Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Chain file (.json or .csv).
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    chain: Option<PathBuf>,
    /// Built-in generator name.
    #[arg(long = "gen")]
    gen: Option<String>,
    /// Generator parameters, `k=v,k=v`.
    #[arg(long, default_value = "")]
    params: String,
    /// Chain file format; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
}

impl Source {
    fn spec(&self) -> Result<ChainSpec, CliError> {
        match (&self.chain, &self.gen) {
            (Some(path), _) => Ok(ChainSpec::file(path, parse_format(self.format.as_deref())?)),
            (None, Some(name)) => ChainSpec::generator(name, &self.params),
            (None, None) => Err(CliError::Usage("one of --chain or --gen is required".into())),
        }
    }
}

fn parse_format(text: Option<&str>) -> Result<Option<ChainFormat>, CliError> {
    text.map(|t| t.parse().map_err(|e: ergokit::Error| CliError::Usage(e.to_string()))).transpose()
}

#[derive(Subcommand)]
enum Command {
    /// Irreducibility, periods and primitivity exponent.
    Analyze {
        #[command(flatten)]
        source: Source,
    },
    /// Stationary distribution by several methods, cross-checked.
    Stationary {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "all")]
        methods: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Empirical mixing time against the envelope bound.
    Mix {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0.25)]
        epsilon: f64,
        #[arg(long)]
        horizon: Option<u64>,
        /// Write the distance curve here instead of into the JSON output.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write per-column envelope traces here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Coupling-lemma check by simulation.
    Couple {
        #[command(flatten)]
        source: Source,
        /// Starting state of the second copy; defaults to the first state.
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 30)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print a generated chain.
    Generate {
        #[arg(long = "gen")]
        gen: String,
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Every check at once.
    Report {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 0.25)]
        epsilon: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 30)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        start: Option<String>,
    },
}

fn start_index(p: &ergokit::StochasticMatrix, start: Option<&str>) -> Result<usize, CliError> {
    match start {
        None => Ok(0),
        Some(label) => p.space().index_of(label).map_err(|e| CliError::Usage(e.to_string())),
    }
}

fn run(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Analyze { source } => {
            let spec = source.spec()?;
            Ok(cmd_analyze(&spec.id(), &spec.resolve()?))
        }
        Command::Stationary { source, methods, tol } => {
            let spec = source.spec()?;
            let methods = parse_methods(&methods)?;
            Ok(cmd_stationary(&spec.id(), &spec.resolve()?, &methods, tol))
        }
        Command::Mix { source, epsilon, horizon, csv, trace } => {
            let spec = source.spec()?;
            cmd_mix(&spec.id(), &spec.resolve()?, epsilon, horizon, csv.as_deref(), trace.as_deref())
        }
        Command::Couple { source, start, trials, horizon, seed, csv } => {
            let spec = source.spec()?;
            let p = spec.resolve()?;
            let start = start_index(&p, start.as_deref())?;
            cmd_couple(&spec.id(), &p, start, trials, horizon, seed, csv.as_deref())
        }
        Command::Generate { gen, params, format } => {
            let p = ChainSpec::generator(&gen, &params)?.resolve()?;
            let text = match parse_format(Some(&format))?.unwrap_or(ChainFormat::Json) {
                ChainFormat::Json => serde_json::to_string_pretty(&chain_to_json(&p)).expect("json"),
                ChainFormat::Csv => chain_to_csv(&p),
            };
            print!("{}", text.trim_end());
            println!();
            Ok(Outcome { json: serde_json::Value::Null, code: EXIT_OK })
        }
        Command::Report { source, tol, epsilon, trials, horizon, seed, start } => {
            let spec = source.spec()?;
            let p = spec.resolve()?;
            let start = start_index(&p, start.as_deref())?;
            let opts = ReportOptions { tol, epsilon, trials, horizon, seed, start };
            Ok(cmd_report(&spec.id(), &p, &opts))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    if let Some(threads) = std::env::var("ERGOKIT_THREADS").ok().and_then(|t| t.parse().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(cli.command) {
        Ok(out) => {
            if !out.json.is_null() {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("json"));
            }
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
