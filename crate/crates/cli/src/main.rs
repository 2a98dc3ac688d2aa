//! `brickir`: batch front end for the brick-structure toolchain.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use brickir::eval::{dataset_stats, mean_valid_steps, p_invalid_reports, survival_curve, StepMode, SurvivalCurve};
use brickir::graph::{sample_corpus_paths, CorpusSampling};
use brickir::ldraw::{parse_structure, write_ldraw, ParseOptions};
use brickir::program::{execute, parse_program_strict};
use brickir::{match_connectors, sample_path, serialize, validate_prefix, Catalog, ConnectivityGraph, Error, MatchTolerances, NodeId, PartInstance, ValidityReport};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

const EXIT_CODES: &str = "Exit codes: 0 success, 1 I/O error, 2 parse error, 3 catalog or annotation error, 4 validation failure under --strict.";

#[derive(Parser, Debug)]
#[command(name = "brickir", version, about = "Brick structures as connectivity graphs and build programs", after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// LDraw library directory. Without one the built-in demo catalog is used.
    #[arg(long, env = "BRICKIR_CATALOG", global = true)]
    catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..), global = true)]
    max_parts: u64,
    /// Connector position tolerance in LDU.
    #[arg(long, default_value_t = 1.0, global = true)]
    pos_tol: f64,
    /// Connector axis tolerance in degrees.
    #[arg(long, default_value_t = 2.0, global = true)]
    axis_tol: f64,
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file (or directory for `sample`). Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
    Text,
    /// LDraw model (`execute` and `demo` only).
    Ldr,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Flatten LDraw models into posed part instances.
    Parse { inputs: Vec<PathBuf> },
    /// Detect connections and emit connectivity graphs.
    Graph { inputs: Vec<PathBuf> },
    /// Draw build programs from a corpus of models or graphs.
    Sample {
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Cut each path at its first colliding step.
        #[arg(long)]
        collisions: bool,
    },
    /// Serialize one spanning-tree traversal of a model or graph.
    Serialize {
        input: PathBuf,
        /// Root node id; random when omitted.
        #[arg(long)]
        root: Option<u32>,
    },
    /// Execute a build program into part poses.
    Execute { input: PathBuf },
    /// Validate build programs step by step.
    Check {
        inputs: Vec<PathBuf>,
        /// Only check connectivity.
        #[arg(long)]
        no_collisions: bool,
    },
    /// Corpus statistics of models or graphs.
    Stats { inputs: Vec<PathBuf> },
    /// Step-validity metrics over a set of build programs.
    Eval {
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Connectivity)]
        mode: Mode,
        #[arg(long)]
        no_collisions: bool,
    },
    /// Report connector annotations of every catalog part.
    Catalog,
    /// Write a random interpenetration-free structure built from the demo catalog.
    Demo {
        #[arg(long, default_value_t = 12)]
        parts: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Connectivity,
    Collision,
}

impl From<Mode> for StepMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Connectivity => StepMode::Connectivity,
            Mode::Collision => StepMode::Collision,
        }
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure { code: 1, message: format!("{}: {e}", path.display()) }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn strict(message: impl Into<String>) -> Self {
        Failure { code: 4, message: message.into() }
    }

    fn at(self, path: &Path) -> Self {
        Failure { message: format!("{}: {}", path.display(), self.message), ..self }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => 1,
            Error::UnknownPart(_)
            | Error::UnknownColor(_)
            | Error::MissingAnnotation(_)
            | Error::Annotation { .. }
            | Error::DuplicateSite { .. }
            | Error::DataFile { .. }
            | Error::Unresolved(_) => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

type Res<T> = std::result::Result<T, Failure>;

struct Ctx {
    g: Global,
    catalog: Catalog,
    builtin: bool,
}

impl Ctx {
    fn tolerances(&self) -> MatchTolerances {
        MatchTolerances { position: self.g.pos_tol, axis_deg: self.g.axis_tol }
    }

    fn emit(&self, body: &str) -> Res<()> {
        match &self.g.out {
            Some(p) => fs::write(p, body).map_err(|e| Failure::io(p, e)),
            None => {
                print!("{body}");
                Ok(())
            }
        }
    }

    fn emit_json(&self, v: &impl Serialize) -> Res<()> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::usage(e.to_string()))?;
        s.push('\n');
        self.emit(&s)
    }
}

fn read(path: &Path) -> Res<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

fn read_text(path: &Path) -> Res<String> {
    Ok(brickir::ldraw::decode_text(&read(path)?))
}

/// Files named on the command line; directories expand to their files,
/// sorted by path.
fn expand(inputs: &[PathBuf]) -> Res<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(Failure::usage("no input files"));
    }
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Failure::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file())
                .collect();
            files.sort();
            out.extend(files);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(Failure::io(p, "no such file"));
        }
    }
    Ok(out)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn parse_model(ctx: &Ctx, path: &Path) -> Res<brickir::ldraw::Structure> {
    let bytes = read(path)?;
    let opts = ParseOptions { strict: ctx.g.strict };
    parse_structure(&bytes, &ctx.catalog, &opts).map_err(|e| Failure::from(e).at(path))
}

/// A model file, an instance list or a graph, as a connectivity graph.
fn load_graph(ctx: &Ctx, path: &Path) -> Res<ConnectivityGraph> {
    let instances: Vec<PartInstance> = if is_json(path) {
        let text = read_text(path)?;
        if let Ok(g) = serde_json::from_str::<ConnectivityGraph>(&text) {
            return Ok(g);
        }
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: not a graph or instance list: {e}", path.display())))?
    } else {
        parse_model(ctx, path)?.instances
    };
    match_connectors(&instances, &ctx.catalog, &ctx.tolerances()).map_err(|e| Failure::from(e).at(path))
}

fn load_all<T: Send>(files: &[PathBuf], f: impl Fn(&Path) -> Res<T> + Sync) -> Res<Vec<T>> {
    files.par_iter().map(|p| f(p)).collect::<Vec<_>>().into_iter().collect()
}

fn labelled(files: &[PathBuf], items: Vec<Value>, key: &str) -> Value {
    if files.len() == 1 {
        return items.into_iter().next().unwrap_or(Value::Null);
    }
    Value::Array(
        files
            .iter()
            .zip(items)
            .map(|(f, v)| json!({ "file": f.display().to_string(), key: v }))
            .collect(),
    )
}

fn cmd_parse(ctx: &Ctx, inputs: &[PathBuf]) -> Res<()> {
    let files = expand(inputs)?;
    let parsed = load_all(&files, |p| parse_model(ctx, p))?;
    for (f, s) in files.iter().zip(&parsed) {
        for w in &s.warnings {
            eprintln!("{}: line {}: {}", f.display(), w.line, w.message);
        }
    }
    let items = parsed.iter().map(|s| json!(s.instances)).collect();
    ctx.emit_json(&labelled(&files, items, "instances"))
}

fn cmd_graph(ctx: &Ctx, inputs: &[PathBuf]) -> Res<()> {
    let files = expand(inputs)?;
    let graphs = load_all(&files, |p| load_graph(ctx, p))?;
    let items = graphs.iter().map(|g| json!(g)).collect();
    ctx.emit_json(&labelled(&files, items, "graph"))
}

fn cmd_sample(ctx: &Ctx, inputs: &[PathBuf], count: usize, collisions: bool) -> Res<()> {
    let files = expand(inputs)?;
    let corpus = load_all(&files, |p| load_graph(ctx, p))?;
    let opts = CorpusSampling { count, max_parts: ctx.g.max_parts as usize, seed: ctx.g.seed };
    let paths = sample_corpus_paths(&corpus, &opts, collisions.then_some(&ctx.catalog))?;
    let programs: Vec<(usize, String)> = paths
        .iter()
        .map(|(gi, path)| Ok((*gi, serialize(path, &corpus[*gi], &ctx.catalog)?)))
        .collect::<Result<_, Error>>()?;
    if let Some(dir) = &ctx.g.out {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        for (k, (_, text)) in programs.iter().enumerate() {
            let p = dir.join(format!("sample_{k:06}.txt"));
            fs::write(&p, text).map_err(|e| Failure::io(&p, e))?;
        }
        return Ok(());
    }
    match ctx.g.format {
        Format::Text => {
            let mut s = String::new();
            for (k, (_, text)) in programs.iter().enumerate() {
                if k > 0 {
                    s.push('\n');
                }
                s.push_str(text);
            }
            ctx.emit(&s)
        }
        _ => {
            let v: Vec<Value> = programs
                .iter()
                .map(|(gi, text)| json!({ "source": files[*gi].display().to_string(), "program": text }))
                .collect();
            ctx.emit_json(&v)
        }
    }
}

fn cmd_serialize(ctx: &Ctx, input: &Path, root: Option<u32>) -> Res<()> {
    let g = load_graph(ctx, input)?;
    let path = sample_path(&g, root.map(NodeId), ctx.g.max_parts as usize, ctx.g.seed)?;
    let text = serialize(&path, &g, &ctx.catalog)?;
    match ctx.g.format {
        Format::Json => ctx.emit_json(&json!({ "path": path, "program": text })),
        _ => ctx.emit(&text),
    }
}

fn cmd_execute(ctx: &Ctx, input: &Path) -> Res<()> {
    let text = read_text(input)?;
    let program = parse_program_strict(&text, &ctx.catalog).map_err(|e| Failure::from(Error::from(e)).at(input))?;
    let run = execute(&program, &ctx.catalog).map_err(|e| Failure::from(Error::from(e)).at(input))?;
    let instances: Vec<PartInstance> = run
        .nodes
        .iter()
        .enumerate()
        .map(|(k, n)| PartInstance {
            node_id: NodeId(k as u32),
            part_id: n.part_id.clone(),
            color: n.color,
            pose: n.pose,
            nonrigid: false,
        })
        .collect();
    match ctx.g.format {
        Format::Ldr => ctx.emit(&write_ldraw(&instances)),
        Format::Json => {
            let v: Vec<Value> = run.nodes.iter().zip(&instances).map(|(n, i)| json!({ "id": n.id, "instance": i })).collect();
            ctx.emit_json(&v)
        }
        f => Err(Failure::usage(format!("execute does not support --format {f:?}"))),
    }
}

fn check_files(ctx: &Ctx, inputs: &[PathBuf], collisions: bool) -> Res<(Vec<PathBuf>, Vec<ValidityReport>)> {
    let files = expand(inputs)?;
    let reports = load_all(&files, |p| Ok(validate_prefix(&read_text(p)?, &ctx.catalog, collisions)))?;
    Ok((files, reports))
}

fn cmd_check(ctx: &Ctx, inputs: &[PathBuf], collisions: bool) -> Res<()> {
    let (files, reports) = check_files(ctx, inputs, collisions)?;
    match ctx.g.format {
        Format::Text => {
            let mut s = String::new();
            for (f, r) in files.iter().zip(&reports) {
                let status = r.first_error.as_ref().map_or_else(|| "ok".to_string(), |e| e.to_string());
                let _ = writeln!(s, "{}\t{}\t{}\t{}", f.display(), r.connectivity_steps, r.collision_steps, status);
            }
            ctx.emit(&s)?;
        }
        _ => {
            let items = reports.iter().map(|r| json!(r)).collect();
            ctx.emit_json(&labelled(&files, items, "report"))?;
        }
    }
    let bad = reports.iter().filter(|r| r.first_error.is_some()).count();
    if ctx.g.strict && bad > 0 {
        return Err(Failure::strict(format!("{bad} of {} programs are invalid", reports.len())));
    }
    Ok(())
}

fn curve_json(c: &SurvivalCurve) -> Value {
    json!(c.points().into_iter().map(|(_, p)| p).collect::<Vec<_>>())
}

fn cmd_eval(ctx: &Ctx, inputs: &[PathBuf], mode: Mode, collisions: bool) -> Res<()> {
    let (files, reports) = check_files(ctx, inputs, collisions)?;
    let conn = survival_curve(&reports, StepMode::Connectivity)?;
    let coll = survival_curve(&reports, StepMode::Collision)?;
    let p_inv = p_invalid_reports(&reports).ok();
    match ctx.g.format {
        Format::Csv => ctx.emit(&survival_curve(&reports, mode.into())?.to_csv()),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "programs\t{}", reports.len());
            let _ = writeln!(s, "mean_valid_steps_connectivity\t{}", mean_valid_steps(&reports, StepMode::Connectivity)?);
            let _ = writeln!(s, "mean_valid_steps_collision\t{}", mean_valid_steps(&reports, StepMode::Collision)?);
            if let Some(p) = p_inv {
                let _ = writeln!(s, "p_invalid\t{p}");
            }
            ctx.emit(&s)
        }
        _ => {
            let per_file: Vec<Value> = files
                .iter()
                .zip(&reports)
                .map(|(f, r)| json!({ "file": f.display().to_string(), "report": r }))
                .collect();
            ctx.emit_json(&json!({
                "files": per_file,
                "aggregate": {
                    "programs": reports.len(),
                    "mean_valid_steps": {
                        "connectivity": mean_valid_steps(&reports, StepMode::Connectivity)?,
                        "collision": mean_valid_steps(&reports, StepMode::Collision)?,
                    },
                    "p_invalid": p_inv,
                    "survival": { "connectivity": curve_json(&conn), "collision": curve_json(&coll) },
                }
            }))
        }
    }
}

fn cmd_stats(ctx: &Ctx, inputs: &[PathBuf]) -> Res<()> {
    let files = expand(inputs)?;
    let corpus = load_all(&files, |p| load_graph(ctx, p))?;
    let stats = dataset_stats(&corpus)?;
    match ctx.g.format {
        Format::Csv => {
            let mut s = String::from("part,name,relative_frequency,sample_proportion\n");
            for (id, f) in &stats.part_frequency {
                let name = ctx.catalog.part_name(id).unwrap_or("");
                let _ = writeln!(s, "{id},{name},{},{}", f.relative_frequency, f.sample_proportion);
            }
            ctx.emit(&s)
        }
        _ => ctx.emit_json(&stats),
    }
}

fn cmd_catalog(ctx: &Ctx) -> Res<()> {
    let review = ctx.catalog.review();
    match ctx.g.format {
        Format::Text | Format::Csv => {
            let mut s = String::new();
            for r in &review {
                let flag = if r.needs_attention() { "!" } else { "" };
                let _ = writeln!(s, "{}\t{}\t{}{flag}", r.id, r.name, r.connectors);
            }
            ctx.emit(&s)?;
        }
        _ => ctx.emit_json(&review)?,
    }
    let bad = review.iter().filter(|r| r.needs_attention()).count();
    if ctx.g.strict && bad > 0 {
        return Err(Failure::strict(format!("{bad} parts need review")));
    }
    Ok(())
}

fn cmd_demo(ctx: &Ctx, parts: usize) -> Res<()> {
    if !ctx.builtin {
        return Err(Failure { code: 3, message: "demo needs the built-in catalog".into() });
    }
    if parts == 0 {
        return Err(Failure::usage("--parts must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.g.seed);
    let s = brickir::synth::random_clear_structure(&ctx.catalog, parts, &mut rng)?;
    match ctx.g.format {
        Format::Json => ctx.emit_json(&s.instances),
        _ => ctx.emit(&write_ldraw(&s.instances)),
    }
}

fn run(cli: Cli) -> Res<()> {
    if let Some(n) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let (catalog, builtin) = match &cli.global.catalog {
        Some(dir) => {
            let cat = Catalog::load_dir(dir).map_err(|e| Failure { code: 3, message: format!("catalog: {e}") })?;
            (cat, false)
        }
        None => (brickir::synth::synthetic_catalog(), true),
    };
    let ctx = Ctx { g: cli.global, catalog, builtin };
    log::debug!("catalog with {} parts", ctx.catalog.len());
    match &cli.command {
        Command::Parse { inputs } => cmd_parse(&ctx, inputs),
        Command::Graph { inputs } => cmd_graph(&ctx, inputs),
        Command::Sample { inputs, count, collisions } => cmd_sample(&ctx, inputs, *count, *collisions),
        Command::Serialize { input, root } => cmd_serialize(&ctx, input, *root),
        Command::Execute { input } => cmd_execute(&ctx, input),
        Command::Check { inputs, no_collisions } => cmd_check(&ctx, inputs, !no_collisions),
        Command::Stats { inputs } => cmd_stats(&ctx, inputs),
        Command::Eval { inputs, mode, no_collisions } => cmd_eval(&ctx, inputs, *mode, !no_collisions),
        Command::Catalog => cmd_catalog(&ctx),
        Command::Demo { parts } => cmd_demo(&ctx, *parts),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
