use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbqe_core::corpus::{build_corpus, JpegBackend};
use rbqe_core::eval::{evaluate, read_manifest, EvalOptions};
use rbqe_core::flopsmodel::{
    decoder_path_ratio, ArchConfig, CostReport, REFERENCE_GMACS_EXIT2, REFERENCE_GMACS_EXIT6,
    REFERENCE_LAST_OVER_FIRST,
};
use rbqe_core::imagecore::{load_plane_auto, save_plane, ImageFormat};
use rbqe_core::iqam::{assess, IqamParams};
use rbqe_core::pipeline::{run, PipelineConfig};
use rbqe_core::{init_threads_from_env, CodecKind, Error, Result};
use serde_json::json;

const SCHEMA_VERSION: u32 = 1;

/// Quality-gated early-exit enhancement for compressed images.
#[derive(Parser)]
#[command(name = "rbqe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one image with the no-reference quality model.
    Assess(AssessArgs),
    /// Run a stage pipeline with quality-gated early exit.
    Enhance(EnhanceArgs),
    /// Report per-exit MACs of the backbone.
    Flops(FlopsArgs),
    /// Build a JPEG quality ladder and its manifest.
    Corpus(CorpusArgs),
    /// Evaluate a manifest against full-reference metrics.
    Eval(EvalArgs),
}

#[derive(Args)]
struct ParamArgs {
    /// Codec whose block grid is assessed: jpeg or hevc_msp.
    #[arg(long)]
    codec: Option<CodecKind>,
    /// JSON parameter document (alpha, beta, c_stab, t_e, t_sstm, t_q, codec, mode).
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct AssessArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    /// JSON pipeline document with a `stages` list.
    #[arg(long)]
    stages: PathBuf,
    /// Exit threshold; overrides the parameter document.
    #[arg(long)]
    tq: Option<f64>,
    /// Enhanced image; `.png` writes PNG, anything else 16-bit PGM.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Trace path stem; writes `<stem>.csv` and `<stem>.json`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct FlopsArgs {
    /// JSON architecture document; defaults to the full 6-level model.
    #[arg(long)]
    arch: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    height: u64,
    #[arg(long, default_value_t = 512)]
    width: u64,
    /// Exit index or `all`.
    #[arg(long, default_value = "all")]
    exit: String,
    /// Per-exit CSV instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct CorpusArgs {
    /// Directory of raw `.pgm`/`.png` images.
    #[arg(long)]
    raw: PathBuf,
    /// Comma-separated JPEG quality factors.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
    qf: Vec<u8>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// builtin or pil.
    #[arg(long, default_value = "builtin")]
    encoder: JpegBackend,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    /// Optional pipeline run on every compressed image.
    #[arg(long)]
    stages: Option<PathBuf>,
    /// Per-row CSV; the summary goes to `<out>.summary.json` and stdout.
    #[arg(long)]
    out: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_params(args: &ParamArgs) -> Result<IqamParams> {
    let fallback = args.codec.unwrap_or(CodecKind::Jpeg);
    let params = match &args.params {
        Some(p) => IqamParams::from_json(&read_text(p)?, fallback)?,
        None => IqamParams::for_codec(fallback),
    };
    if let Some(c) = args.codec {
        if c != params.codec {
            return Err(Error::Config(format!(
                "--codec {c} contradicts codec {} in the parameter document",
                params.codec
            )));
        }
    }
    Ok(params)
}

fn load_stages(path: &Path) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::from_json(&read_text(path)?)?;
    cfg.resolve_relative_to(path.parent().unwrap_or(Path::new("")));
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn cmd_assess(a: AssessArgs) -> Result<()> {
    let params = load_params(&a.params)?;
    let plane = load_plane_auto(&a.input)?;
    let r = assess(&plane, &params)?;
    if a.csv {
        println!("schema_version,input,q,q_s_bar,q_t_bar,n_smooth,n_textured");
        let input = a.input.display().to_string().replace('"', "\"\"");
        println!(
            "{SCHEMA_VERSION},\"{input}\",{},{},{},{},{}",
            r.q, r.q_s_bar, r.q_t_bar, r.n_smooth, r.n_textured
        );
    } else if a.json {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "input": a.input,
            "codec": params.codec,
            "q": r.q,
            "q_s_bar": r.q_s_bar,
            "q_t_bar": r.q_t_bar,
            "n_smooth": r.n_smooth,
            "n_textured": r.n_textured,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    } else {
        println!("Q        {:.6}", r.q);
        println!("Q_S mean {:.6}  ({} smooth patches)", r.q_s_bar, r.n_smooth);
        println!(
            "Q_T mean {:.6}  ({} textured patches)",
            r.q_t_bar, r.n_textured
        );
    }
    Ok(())
}

fn cmd_enhance(a: EnhanceArgs) -> Result<()> {
    let mut params = load_params(&a.params)?;
    if let Some(tq) = a.tq {
        params.t_q = tq;
    }
    params.validate()?;
    let cfg = load_stages(&a.stages)?;
    let input = load_plane_auto(&a.input)?;
    let (out, trace) = run(&input, &cfg, &params)?;
    if let Some(path) = &a.output {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("png") => ImageFormat::PngGray,
            _ => ImageFormat::Pgm16,
        };
        save_plane(&out, path, format)?;
    }
    if let Some(stem) = &a.trace {
        write_file(&stem.with_extension("csv"), &trace.to_csv()?)?;
        write_file(&stem.with_extension("json"), &trace.to_json())?;
    }
    println!(
        "chosen exit {} of {}, {} MACs",
        trace.chosen_exit,
        cfg.stages.len(),
        trace.accumulated_cost
    );
    Ok(())
}

fn cmd_flops(a: FlopsArgs) -> Result<()> {
    let arch = match &a.arch {
        Some(p) => ArchConfig::from_json(&read_text(p)?)?,
        None => ArchConfig::default(),
    };
    let mut report = CostReport::build(&arch, a.height, a.width)?;
    let gmacs = |r: &CostReport, j: usize| r.exit(j).map(|e| e.cumulative_macs as f64 / 1e9);
    let reference =
        (arch == ArchConfig::default() && (a.height, a.width) == (512, 512)).then(|| {
            json!({
                "exit2_gmacs_model": gmacs(&report, 2),
                "exit2_gmacs_published": REFERENCE_GMACS_EXIT2,
                "exit6_gmacs_model": gmacs(&report, 6),
                "exit6_gmacs_published": REFERENCE_GMACS_EXIT6,
                "last_over_first_published": REFERENCE_LAST_OVER_FIRST,
            })
        });
    if a.exit != "all" {
        let j: usize = a.exit.parse().map_err(|_| {
            Error::Config(format!("--exit takes an index or 'all', got '{}'", a.exit))
        })?;
        if report.exit(j).is_none() {
            return Err(Error::Config(format!(
                "exit {j} outside {}..={}",
                arch.exits().start(),
                arch.exits().end()
            )));
        }
        report.exits.retain(|e| e.exit == j);
    }
    if a.csv {
        print!("{}", report.exits_csv()?);
        return Ok(());
    }
    let mut doc = serde_json::to_value(&report).expect("json");
    doc["decoder_path_ratio"] = json!(decoder_path_ratio(&arch, a.height, a.width)?);
    if let Some(r) = reference {
        doc["reference"] = r;
    }
    println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    Ok(())
}

fn cmd_corpus(a: CorpusArgs) -> Result<()> {
    let rows = build_corpus(&a.raw, &a.qf, &a.out, &a.manifest, a.encoder)?;
    println!("wrote {} rows to {}", rows.len(), a.manifest.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let params = load_params(&a.params)?;
    let stages = a.stages.as_deref().map(load_stages).transpose()?;
    let manifest = read_manifest(&a.manifest)?;
    let ev = evaluate(&manifest, &params, &EvalOptions { stages })?;
    for w in &ev.warnings {
        eprintln!("warning: {w}");
    }
    write_file(&a.out, &ev.to_csv()?)?;
    let summary = ev.summary().to_json();
    let mut summary_path = a.out.clone().into_os_string();
    summary_path.push(".summary.json");
    write_file(Path::new(&summary_path), &summary)?;
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads_from_env().and_then(|()| match cli.command {
        Command::Assess(a) => cmd_assess(a),
        Command::Enhance(a) => cmd_enhance(a),
        Command::Flops(a) => cmd_flops(a),
        Command::Corpus(a) => cmd_corpus(a),
        Command::Eval(a) => cmd_eval(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rbqe: {e}");
            match e {
                Error::MissingDependency(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
