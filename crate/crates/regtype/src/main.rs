use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

use regtype::analyzer::{analyze, analyze_all, AnalysisOptions};
use regtype::bench::bench;
use regtype::parser::parse_program;
use regtype::printer::{format_result, json_report};
use regtype::widen::WideningKind;

/// Regular type inference for logic programs.
#[derive(Parser)]
#[command(name = "regtype", version)]
struct Args {
    /// Program file to analyze (omit with --bench)
    file: Option<PathBuf>,

    /// Widening operator
    #[arg(long, default_value = "struct")]
    widening: String,

    /// Merge depth for the depth-k widening
    #[arg(long, default_value_t = 2)]
    depth_k: u32,

    /// Growing widening steps allowed before the fallback engages
    #[arg(long, default_value_t = 4)]
    widen_bound: u32,

    /// Entry point as name/arity; default analyzes every predicate with
    /// an all-any call
    #[arg(long)]
    entry: Option<String>,

    /// Merge equivalent inferred types in the output
    #[arg(long)]
    simplify: bool,

    /// Run the benchmark harness over a corpus directory
    #[arg(long, value_name = "DIR")]
    bench: Option<PathBuf>,

    /// Output format
    #[arg(long, default_value = "text")]
    format: String,

    /// Treat unknown predicates and builtins as identity with a warning
    #[arg(long)]
    permissive: bool,
}

fn parse_entry(s: &str) -> Result<(String, usize), String> {
    let (name, arity) = s
        .rsplit_once('/')
        .ok_or_else(|| format!("entry '{s}' is not name/arity"))?;
    let arity: usize = arity
        .parse()
        .map_err(|_| format!("entry '{s}' has a non-numeric arity"))?;
    if name.is_empty() {
        return Err(format!("entry '{s}' has an empty name"));
    }
    Ok((name.to_string(), arity))
}

fn run(args: &Args) -> Result<(), (u8, String)> {
    let kind = match args.widening.parse::<WideningKind>() {
        Ok(WideningKind::DepthK(_)) => WideningKind::DepthK(args.depth_k),
        Ok(k) => k,
        Err(e) => return Err((1, e)),
    };
    if args.format != "text" && args.format != "json" {
        return Err((1, format!("unknown format '{}'", args.format)));
    }
    let opts = AnalysisOptions {
        kind,
        widen_bound: args.widen_bound,
        permissive: args.permissive,
    };

    if let Some(dir) = &args.bench {
        // The harness always compares all widening operators.
        let kinds = [
            WideningKind::Functor,
            WideningKind::Jungle,
            WideningKind::Shorten,
            WideningKind::RShorten,
            WideningKind::DepthK(args.depth_k),
            WideningKind::Clash,
            WideningKind::Structural,
        ];
        let report = bench(dir, &kinds, opts).map_err(|e| (1, e.to_string()))?;
        if args.format == "json" {
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
        } else {
            print!("{}", report.text_table());
        }
        return Ok(());
    }

    let file = args
        .file
        .as_ref()
        .ok_or_else(|| (1, "no program file given".to_string()))?;
    let name = file
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file.display().to_string());
    let src = std::fs::read_to_string(file)
        .map_err(|e| (2, format!("{}: {e}", file.display())))?;
    let (program, warnings) = parse_program(&src, &name).map_err(|e| (2, e.to_string()))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let result = match &args.entry {
        Some(spec) => {
            let entry = parse_entry(spec).map_err(|e| (1, e))?;
            analyze(&program, &entry, vec![], opts).map_err(|e| (1, e.to_string()))?
        }
        None => analyze_all(&program, opts).map_err(|e| (1, e.to_string()))?,
    };

    if args.format == "json" {
        let rep = json_report(&result, &name, args.simplify);
        println!("{}", serde_json::to_string_pretty(&rep).unwrap());
    } else {
        print!("{}", format_result(&result, &name, args.simplify));
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
