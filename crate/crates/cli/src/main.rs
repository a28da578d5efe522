//! `xtinyunet`: pick a lightweight U-Net width from untrained sensitivity.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xtinyunet_core::family::net_config;
use xtinyunet_core::oracle::{gradient_check, random_input};
use xtinyunet_core::pipeline::{
    emit_curve_csv, emit_report, load_dataset, run_curve, run_selection, sample_images,
    write_atomic, RunConfig,
};
use xtinyunet_core::{
    build_family, member_seed, CandidateSet, DetectorMode, DetectorOptions, Error, FamilyConfig,
    NetworkInstance, TieBreak,
};

#[derive(Parser, Debug)]
#[command(name = "xtinyunet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score the family and select the collapse boundary.
    Select(SelectArgs),
    /// Score the family only.
    Curve(CurveArgs),
    /// Compare input gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Print channel schedules and parameter counts.
    Family(FamilyArgs),
}

#[derive(Args, Debug, Clone)]
struct NetArgs {
    /// Channels of the first stage.
    #[arg(long, default_value_t = 32)]
    base_channels: usize,
    /// Widest stage of the base configuration (power of two).
    #[arg(long, default_value_t = 512)]
    max_channels: usize,
    /// Number of stages; derived from the input size when omitted.
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    in_channels: Option<usize>,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Input size as HxW.
    #[arg(long, value_parser = parse_size)]
    size: Option<(usize, usize)>,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Directory of .pgm / .xtrt images.
    #[arg(long)]
    data: PathBuf,
    /// Number of images K to sample.
    #[arg(long, default_value_t = 8)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    net: NetArgs,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mean-split", value_parser = parse_mode)]
    mode: DetectorMode,
    #[arg(long, default_value = "largest", value_parser = parse_tie_break)]
    tie_break: TieBreak,
    /// Use the split candidates 2..=N-1 instead of 1..=N-2.
    #[arg(long)]
    paper_candidates: bool,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Images to differentiate at; random z-scored input when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    cap_index: usize,
    #[arg(long, default_value_t = 50)]
    positions: usize,
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[command(flatten)]
    net: NetArgs,
}

#[derive(Args, Debug)]
struct FamilyArgs {
    #[command(flatten)]
    net: NetArgs,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h = h.trim().parse().map_err(|e| format!("bad height: {e}"))?;
    let w = w.trim().parse().map_err(|e| format!("bad width: {e}"))?;
    Ok((h, w))
}

fn parse_mode(s: &str) -> Result<DetectorMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_tie_break(s: &str) -> Result<TieBreak, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl DataArgs {
    fn run_config(&self, detector: DetectorOptions) -> RunConfig {
        RunConfig {
            data_dir: self.data.clone(),
            samples: self.samples,
            seed: self.seed,
            base_channels: self.net.base_channels,
            max_channels: self.net.max_channels,
            stages: self.net.stages,
            in_channels: self.net.in_channels,
            out_classes: self.net.classes,
            input_size: self.net.size,
            detector,
        }
    }
}

impl NetArgs {
    fn family(&self, in_channels: usize, size: (usize, usize)) -> Result<FamilyConfig, Error> {
        let mut fc = FamilyConfig::for_input(in_channels, self.classes, size);
        fc.base_channels = self.base_channels;
        fc.max_channels_base = self.max_channels;
        if let Some(l) = self.stages {
            fc.stages = l;
        }
        fc.validate()?;
        Ok(fc)
    }
}

fn select(args: &SelectArgs) -> Result<ExitCode, Error> {
    let detector = DetectorOptions {
        mode: args.mode,
        tie_break: args.tie_break,
        candidates: if args.paper_candidates {
            CandidateSet::PaperLiteral
        } else {
            CandidateSet::Interior
        },
    };
    let out = run_selection(&args.data.run_config(detector))?;
    let json = out.report.to_json()?;
    match &args.out {
        Some(path) => emit_report(&out.report, path)?,
        None => print!("{json}"),
    }
    if let Some(csv) = &args.csv {
        emit_curve_csv(&out.curve, &out.configs, csv)?;
    }
    let sel = &out.report.selected;
    eprintln!(
        "k* = {} ({}), channels {:?}, {} parameters",
        out.report.k_star,
        out.report.mode.as_str(),
        sel.channels,
        sel.param_count
    );
    for w in &out.report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ExitCode::SUCCESS)
}

fn curve(args: &CurveArgs) -> Result<ExitCode, Error> {
    let (_, configs, curve, report) = run_curve(&args.data.run_config(DetectorOptions::default()))?;
    let json = report.to_json()?;
    match &args.out {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => print!("{json}"),
    }
    if let Some(csv) = &args.csv {
        emit_curve_csv(&curve, &configs, csv)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(args: &GradcheckArgs) -> Result<ExitCode, Error> {
    let (fc, x) = match &args.data {
        Some(dir) => {
            let ds = load_dataset(dir, None)?;
            let (c, h, w) = ds.image_dims();
            if args.net.size.is_some_and(|s| s != (h, w)) {
                return Err(Error::Validation(format!("images are {h}x{w}")));
            }
            let fc = args.net.family(args.net.in_channels.unwrap_or(c), (h, w))?;
            (fc, sample_images(&ds, args.samples, args.seed)?)
        }
        None => {
            let size = args
                .net
                .size
                .ok_or_else(|| Error::Validation("--size is required without --data".into()))?;
            let c = args.net.in_channels.unwrap_or(1);
            let fc = args.net.family(c, size)?;
            (
                fc,
                random_input(&[args.samples, c, size.0, size.1], args.seed),
            )
        }
    };
    let cfg = net_config(&fc, args.cap_index)?;
    let net = NetworkInstance::init(&cfg, &fc, member_seed(args.seed, cfg.cap_index))?;
    let check = gradient_check(&net, &x, args.positions, args.step, args.seed)?;
    println!("position,analytic,numeric,rel_err");
    for s in &check.samples {
        println!("{},{},{},{}", s.position, s.analytic, s.numeric, s.rel_err);
    }
    let ok = check.max_rel_err < args.tolerance && !check.samples.is_empty();
    eprintln!(
        "cap index {}: {} positions checked, {} skipped at kinks, max rel err {:.3e} ({})",
        cfg.cap_index,
        check.samples.len(),
        check.skipped,
        check.max_rel_err,
        if ok { "ok" } else { "FAILED" }
    );
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn family(args: &FamilyArgs) -> Result<ExitCode, Error> {
    let size = args
        .net
        .size
        .ok_or_else(|| Error::Validation("--size is required".into()))?;
    let fc = args.net.family(args.net.in_channels.unwrap_or(1), size)?;
    println!("cap_index\tcap\tparam_count\tchannels");
    for cfg in build_family(&fc)? {
        println!(
            "{}\t{}\t{}\t{:?}",
            cfg.cap_index, cfg.cap, cfg.param_count, cfg.channels
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Numerical { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Select(a) => select(a),
        Command::Curve(a) => curve(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Family(a) => family(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}
