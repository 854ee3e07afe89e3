use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use treeround::bench::{csv_header, BenchmarkCase, Function, InputCache, SAMPLE_POINTS};
use treeround::driver::{round_traced, Method, SearchConfig};
use treeround::network::{deserialize, serialize};
use treeround::{Error, Target, TreeNetwork};

#[derive(Parser)]
#[command(
    name = "treeround",
    version,
    about = "Structural rounding of tree tensor networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Round a serialized network within a relative error tolerance.
    Round(RoundArgs),
    /// Run one benchmark function with one or all methods and emit CSV.
    Bench(BenchArgs),
    /// Contract a serialized network to a dense tensor.
    Contract(ContractArgs),
}

#[derive(clap::Args)]
struct RoundArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_eps)]
    eps: f64,
    #[arg(long, default_value = "hiss", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of search iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Output network path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Write one JSON object per search event.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_parser = parse_function)]
    function: Function,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 1e-2, value_parser = parse_eps)]
    eps: f64,
    /// One method name, or `all`.
    #[arg(long, default_value = "all", value_parser = parse_method_set)]
    method: MethodSet,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid points per dimension; chosen from the dimension when absent.
    #[arg(long)]
    grid: Option<usize>,
    /// CSV path; stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ContractArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = TargetArg::Native)]
    target: TargetArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Native,
    Current,
}

#[derive(Clone)]
struct MethodSet(Vec<Method>);

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
        format!(
            "unknown method `{s}` (expected one of {})",
            names.join(", ")
        )
    })
}

fn parse_method_set(s: &str) -> std::result::Result<MethodSet, String> {
    if s == "all" {
        return Ok(MethodSet(Method::ALL.to_vec()));
    }
    parse_method(s).map(|m| MethodSet(vec![m]))
}

fn parse_eps(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("eps must be a finite number >= 0, got `{s}`")),
    }
}

fn parse_function(s: &str) -> std::result::Result<Function, String> {
    Function::parse(s).ok_or_else(|| format!("unknown function `{s}`"))
}

#[derive(Serialize)]
struct RoundMetrics {
    method: &'static str,
    eps: f64,
    seed: u64,
    input_size: usize,
    output_size: usize,
    cr_over_input: f64,
    search_time_s: f64,
    /// Relative error against the input network; exact when both fit in
    /// memory as dense tensors, sampled otherwise.
    relative_error: f64,
    error_is_sampled: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Round(args) => run_round(args),
        Command::Bench(args) => run_bench(args),
        Command::Contract(args) => run_contract(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_network(path: &Path) -> Result<TreeNetwork> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    deserialize(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn run_round(args: RoundArgs) -> Result<()> {
    let input = read_network(&args.input)?;
    let mut cfg = SearchConfig {
        eps: args.eps,
        seed: args.seed,
        ..SearchConfig::default()
    };
    if let Some(t) = args.iterations {
        cfg.iterations = t;
    }
    cfg.validate()?;

    let mut trace_sink = match &args.trace {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => None,
    };
    let mut trace_error: Option<io::Error> = None;
    let start = Instant::now();
    let output = round_traced(&input, args.method, &cfg, &mut |event| {
        if let (Some(sink), None) = (trace_sink.as_mut(), trace_error.as_ref()) {
            let line = serde_json::to_string(&event).expect("trace events serialize");
            if let Err(e) = writeln!(sink, "{line}") {
                trace_error = Some(e);
            }
        }
    })?;
    let search_time_s = start.elapsed().as_secs_f64();
    if let Some(e) = trace_error {
        return Err(e).context("writing trace");
    }
    if let Some(mut sink) = trace_sink {
        sink.flush().context("writing trace")?;
    }

    write_text(args.out.as_deref(), &serialize(&output))?;

    if let Some(path) = &args.metrics {
        let (relative_error, error_is_sampled) = relative_error(&input, &output, args.seed)?;
        let metrics = RoundMetrics {
            method: args.method.name(),
            eps: args.eps,
            seed: args.seed,
            input_size: input.size(),
            output_size: output.size(),
            cr_over_input: input.size() as f64 / output.size() as f64,
            search_time_s,
            relative_error,
            error_is_sampled,
        };
        write_text(Some(path), &serde_json::to_string_pretty(&metrics)?)?;
    }
    Ok(())
}

fn relative_error(input: &TreeNetwork, output: &TreeNetwork, seed: u64) -> Result<(f64, bool)> {
    match (
        input.contract_to_dense(Target::Native),
        output.contract_to_dense(Target::Native),
    ) {
        (Ok(a), Ok(b)) => {
            let diff: f64 = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            let norm = a.frobenius_norm();
            Ok((
                if norm > 0.0 {
                    diff.sqrt() / norm
                } else {
                    diff.sqrt()
                },
                false,
            ))
        }
        (Err(Error::TooLarge { .. }), _) | (_, Err(Error::TooLarge { .. })) => {
            let shape: Vec<usize> = input.native_sizes().into_iter().map(|(_, n)| n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut diff, mut norm) = (0.0, 0.0);
            let mut point = vec![0; shape.len()];
            for _ in 0..SAMPLE_POINTS {
                for (p, &n) in point.iter_mut().zip(&shape) {
                    *p = rng.gen_range(0..n);
                }
                let want = input.evaluate_native(&point);
                diff += (output.evaluate_native(&point) - want).powi(2);
                norm += want * want;
            }
            Ok((
                if norm > 0.0 {
                    (diff / norm).sqrt()
                } else {
                    diff.sqrt()
                },
                true,
            ))
        }
        (Err(e), _) | (_, Err(e)) => Err(e.into()),
    }
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let sink: Box<dyn Write> = match &args.csv {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(csv_header())?;
    let mut cache = InputCache::new();
    for method in args.method.0 {
        let mut case = BenchmarkCase::new(args.function, args.dim, args.eps, method, args.seed);
        if let Some(g) = args.grid {
            case.grid = g;
        }
        let report = cache.run(&case).with_context(|| {
            format!(
                "{} d={} method {}",
                args.function.name(),
                args.dim,
                method.name()
            )
        })?;
        writer.write_record(report.csv_record())?;
        writer.flush()?;
    }
    writer.flush()?;
    Ok(())
}

fn run_contract(args: ContractArgs) -> Result<()> {
    let net = read_network(&args.input)?;
    let target = match args.target {
        TargetArg::Native => Target::Native,
        TargetArg::Current => Target::Current,
    };
    let dense = net.contract_to_dense(target)?;
    write_text(args.out.as_deref(), &serde_json::to_string(&dense)?)
}
