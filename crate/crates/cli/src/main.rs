use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use semflow_cli::{
    backend_from_name, cli_bench, cli_compile_nl_file, cli_gen, cli_run, serve, BenchOptions, CliError, EXIT_RUNTIME,
};
use semflow_core::harness::{GenConfig, Suite};

#[derive(Parser)]
#[command(name = "semflow", version, about = "Semantic streaming dataflow engine")]
struct Cli {
    /// Model backend: `sim`, or `http` when built with the http feature.
    #[arg(long, global = true, default_value = "sim")]
    backend: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Allowed browser origin; any origin when omitted.
        #[arg(long)]
        cors_origin: Option<String>,
    },
    /// Stream a JSONL file through a pipeline spec.
    Run {
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Report path; the other artifacts are written beside it.
        #[arg(long, default_value = "report.json")]
        report: PathBuf,
    },
    /// Compile a natural-language task file into a pipeline spec.
    CompileNl {
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_rounds: usize,
    },
    /// Run an evaluation suite and write suite_report.json.
    Bench {
        #[arg(long)]
        suite: Suite,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Oracle suite case count.
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value = "suite_report.json")]
        out: PathBuf,
    },
    /// Write a synthetic labelled document stream.
    Gen {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        entities: usize,
        #[arg(long, default_value_t = 6)]
        docs_per_entity: usize,
        #[arg(long, default_value_t = 5)]
        planted: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{e}");
    ExitCode::from(e.exit)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let backend = match backend_from_name(&cli.backend) {
        Ok(b) => b,
        Err(e) => return fail(&e),
    };
    match cli.command {
        Command::Serve {
            port,
            data_dir,
            host,
            cors_origin,
        } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let addr: SocketAddr = match format!("{host}:{port}").parse() {
                Ok(a) => a,
                Err(e) => return fail(&CliError::new(2, "UsageError", format!("bad address: {e}"))),
            };
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            match rt.block_on(serve(addr, data_dir, backend, cors_origin)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&CliError::new(EXIT_RUNTIME, e.code(), e.to_string())),
            }
        }
        Command::Run { pipeline, input, report } => match cli_run(&pipeline, &input, &report, backend) {
            Ok(out) => {
                println!(
                    "{} matches, {} model tokens; artifacts in {}",
                    out.matches,
                    out.report.totals.total_tokens,
                    out.out_dir.display()
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::CompileNl { task, max_rounds } => match cli_compile_nl_file(&task, backend.as_ref(), max_rounds) {
            Ok(out) => {
                println!("{}", out.render());
                ExitCode::from(out.exit_code())
            }
            Err(e) => fail(&e),
        },
        Command::Bench { suite, seed, cases, out } => {
            let opts = BenchOptions {
                seed,
                cases,
                ..BenchOptions::default()
            };
            match cli_bench(suite, &opts, &out) {
                Ok(_) => {
                    println!("wrote {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Gen {
            seed,
            entities,
            docs_per_entity,
            planted,
            out,
            truth,
        } => {
            let config = GenConfig {
                entities,
                docs_per_entity,
                planted_patterns: planted,
                ..GenConfig::default()
            };
            match cli_gen(seed, &config, &out, truth.as_deref()) {
                Ok(n) => {
                    println!("wrote {n} documents to {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
