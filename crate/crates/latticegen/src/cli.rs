//! The `latticegen` command line.
//!
//! Exit status is 0 on success, 1 when resources, files or a test run fail,
//! and 2 for usage errors.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use latticegen_core::multilingual::{contrastive_view, extract, import_segment, merge, sharing_stats, Selector};
use latticegen_core::regions::{fragment_to_dot, region_graph, region_view};
use latticegen_core::resources::validate_resources;
use latticegen_core::suite::{examples_for, record_example, run_suite, Suite, Verdict};
use latticegen_core::trace::{diff_traces, where_introduced, Aspect};
use latticegen_core::ResourceSet;
use serde::Serialize;

use crate::files::{generate_spl, read_suite, read_trace, write_suite, write_trace};
use crate::io::{self, canonical_json, load_resources, Loaded};
use crate::service::{self, AppState};
use crate::workspace::{read_patch, write_patch, Change, Gate, Workspace};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "latticegen", version, about = "Generate, inspect and maintain system-network grammars")]
pub struct Cli {
    /// Resource files; several files are merged.
    #[arg(short, long = "resources", global = true, env = "LATTICEGEN_RESOURCES", value_delimiter = ',')]
    pub resources: Vec<PathBuf>,
    /// Language to generate in; defaults to the first declared language.
    #[arg(short, long, global = true)]
    pub lang: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Print warnings as well as errors.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sentence from an SPL file (or inline SPL text).
    Generate {
        spl: String,
        /// Also write the full result as a `.trace.json` file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Regenerate every example of a suite file.
    Test { suite: PathBuf },
    /// Generate an SPL input and add it to a suite file.
    Record {
        suite: PathBuf,
        #[arg(long)]
        name: String,
        spl: String,
    },
    /// List the examples of a suite that select a feature.
    Examples { suite: PathBuf, feature: String },
    /// Validate the resources.
    Validate,
    /// Merge resource files into one multilingual file.
    Merge {
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Keep only some languages of the resources.
    Extract {
        #[arg(long, value_delimiter = ',', required = true)]
        langs: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Copy a region or a set of systems from one language into another.
    ImportSegment(ImportArgs),
    /// Sharing statistics for a merge of the given files.
    Stats { inputs: Vec<PathBuf> },
    /// Contrast the languages of the resources in one region.
    Contrast {
        region: String,
        #[arg(long, value_delimiter = ',')]
        langs: Vec<String>,
    },
    /// Region graph and region views.
    Regions {
        #[command(subcommand)]
        command: RegionsCommand,
    },
    /// Explain where an aspect of a saved result was introduced.
    Focus { trace: PathBuf, unit: String, aspect: String },
    /// Compare two saved results.
    DiffTraces { a: PathBuf, b: PathBuf },
    /// Create and accept patches against a single resource file.
    Patch {
        #[command(subcommand)]
        command: PatchCommand,
    },
    /// Run the inspection service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Suite used by `/suite/run` and to gate region replacements.
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Directory with the built UI, served at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub src_lang: String,
    #[arg(long, conflicts_with = "systems", required_unless_present = "systems")]
    pub region: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub systems: Vec<String>,
    #[arg(long)]
    pub into: PathBuf,
    #[arg(long)]
    pub dst_lang: String,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RegionsCommand {
    Graph,
    View { name: String },
}

#[derive(Debug, Subcommand)]
pub enum PatchCommand {
    /// Apply a JSON array of changes and freeze them into `<id>.patch.json`.
    Create {
        edits: PathBuf,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Apply patch files and make them the new base version.
    Accept {
        patches: Vec<PathBuf>,
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Accept a region replacement without a passing suite.
        #[arg(long)]
        force: bool,
    },
}

/// A failed command: what to print and which exit status to use.
struct Failure {
    status: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let mut message = format!("error: {e}");
        if let Error::ValidationFailed(report) = &e {
            for d in &report.errors {
                message.push_str(&format!("\n  {} {}: {}", d.code, d.object, d.message));
            }
        }
        Failure { status: 1, message }
    }
}

macro_rules! fail_from {
    ($($t:path),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

fail_from!(
    latticegen_core::multilingual::MultilingualError,
    latticegen_core::regions::RegionError,
    latticegen_core::resources::ResourceError,
    latticegen_core::suite::SuiteError,
    latticegen_core::trace::TraceError
);

fn usage(message: String) -> Failure {
    Failure { status: 2, message }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let status = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if status == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return status;
        }
    };
    match execute(&cli, out, err) {
        Ok(status) => status,
        Err(f) => {
            let _ = writeln!(err, "{}", f.message);
            f.status
        }
    }
}

fn emit<T: Serialize>(
    out: &mut dyn Write,
    format: Format,
    value: &T,
    text: impl FnOnce() -> String,
) -> Result<(), Failure> {
    let s = match format {
        Format::Json => canonical_json(value),
        Format::Text => {
            let mut t = text();
            if !t.ends_with('\n') {
                t.push('\n');
            }
            t
        }
    };
    out.write_all(s.as_bytes()).map_err(|e| Failure { status: 1, message: format!("error: {e}") })
}

fn spl_text(arg: &str) -> Result<String, Error> {
    if arg.trim_start().starts_with('(') {
        Ok(arg.to_owned())
    } else {
        io::read_text(Path::new(arg))
    }
}

fn langs(codes: &[String]) -> BTreeSet<String> {
    codes.iter().cloned().collect()
}

fn write_or_print(out: &mut dyn Write, output: Option<&Path>, res: &ResourceSet) -> Result<(), Failure> {
    match output {
        Some(p) => Ok(io::write_json(p, res)?),
        None => emit(out, Format::Json, res, String::new),
    }
}

impl Cli {
    fn load(&self) -> Result<Loaded, Error> {
        load_resources(&self.resources)
    }

    fn language(&self, res: &ResourceSet) -> Result<String, Failure> {
        match &self.lang {
            Some(l) if res.language_codes.contains(l) => Ok(l.clone()),
            Some(l) => Err(usage(format!(
                "error: language `{l}` is not declared (declared: {})",
                res.language_codes.iter().cloned().collect::<Vec<_>>().join(", ")
            ))),
            None => res
                .language_codes
                .first()
                .cloned()
                .ok_or_else(|| usage("error: the resources declare no language".into())),
        }
    }

    fn workspace(&self) -> Result<Workspace, Failure> {
        match self.resources.as_slice() {
            [one] => Ok(Workspace::open(one)?),
            _ => Err(usage("error: patches apply to exactly one resource file (--resources)".into())),
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let fmt = cli.format;
    match &cli.command {
        Command::Generate { spl, trace } => {
            let text = spl_text(spl)?;
            let loaded = cli.load()?;
            let lang = cli.language(&loaded.resources)?;
            let version = crate::workspace::Version { base: loaded.hash.clone(), patches: Vec::new() };
            let result = generate_spl(&loaded.resources, &lang, &text, &version.to_string())?;
            if let Some(path) = trace {
                write_trace(path, &result)?;
            }
            for issue in &result.issues {
                let _ = writeln!(err, "{}: {} ({})", issue.code, issue.message, issue.unit);
            }
            if cli.verbose > 0 {
                for w in &result.warnings {
                    let _ = writeln!(err, "warning: {}: {}", w.code, w.message);
                }
            }
            emit(out, fmt, &result, || result.string.clone())?;
            Ok(0)
        }
        Command::Test { suite } => {
            let suite = read_suite(suite)?;
            let loaded = cli.load()?;
            let version = crate::workspace::Version { base: loaded.hash.clone(), patches: Vec::new() };
            let report = run_suite(&loaded.resources, &suite, &version.to_string());
            emit(out, fmt, &report.rows, || {
                format!("{report}{}/{} PASS", report.count(Verdict::Pass), report.rows.len())
            })?;
            if cli.verbose > 0 && !report.uncovered.is_empty() {
                let _ = writeln!(err, "features without examples: {}", report.uncovered.join(", "));
            }
            Ok(if report.all_pass() { 0 } else { 1 })
        }
        Command::Record { suite: path, name, spl } => {
            let text = spl_text(spl)?;
            let loaded = cli.load()?;
            let lang = cli.language(&loaded.resources)?;
            let mut suite = if path.exists() { read_suite(path)? } else { Suite::default() };
            let result = generate_spl(&loaded.resources, &lang, &text, "")?;
            let example = record_example(&mut suite, name, &text, &result)?.clone();
            write_suite(path, &suite)?;
            emit(out, fmt, &example, || format!("recorded {}: {}", example.name, example.expected))?;
            Ok(0)
        }
        Command::Examples { suite, feature } => {
            let suite = read_suite(suite)?;
            let loaded = cli.load()?;
            let lookup = examples_for(&loaded.resources, &suite, feature)?;
            if let Some(w) = &lookup.warning {
                let _ = writeln!(err, "warning: {w}");
            }
            emit(out, fmt, &lookup, || lookup.examples.join("\n"))?;
            Ok(0)
        }
        Command::Validate => {
            let mut parts = Vec::new();
            for p in &cli.resources {
                parts.push(io::read_json::<ResourceSet>(p)?);
            }
            let res = merge(&parts)?;
            let mut report = validate_resources(&res);
            if res.systems.is_empty() && !report.has_code("MISSING-ROOT") {
                report.error("MISSING-ROOT", "", "the resources define no systems".into());
            }
            emit(out, fmt, &report, || {
                let mut lines: Vec<String> =
                    report.errors.iter().map(|d| format!("error {} {}: {}", d.code, d.object, d.message)).collect();
                if cli.verbose > 0 {
                    lines.extend(
                        report.warnings.iter().map(|d| format!("warning {} {}: {}", d.code, d.object, d.message)),
                    );
                }
                lines.push(format!("{} errors, {} warnings", report.errors.len(), report.warnings.len()));
                lines.join("\n")
            })?;
            Ok(if report.is_ok() { 0 } else { 1 })
        }
        Command::Merge { inputs, output } => {
            let mut parts = Vec::new();
            for p in inputs {
                parts.push(io::read_json::<ResourceSet>(p)?);
            }
            let merged = merge(&parts)?;
            write_or_print(out, output.as_deref(), &merged)?;
            Ok(0)
        }
        Command::Extract { langs: codes, output } => {
            let loaded = cli.load()?;
            let res = extract(&loaded.resources, &langs(codes))?;
            write_or_print(out, output.as_deref(), &res)?;
            Ok(0)
        }
        Command::ImportSegment(a) => {
            let src = io::read_json::<ResourceSet>(&a.from)?;
            let dst = io::read_json::<ResourceSet>(&a.into)?;
            let selector = match &a.region {
                Some(r) => Selector::Region(r.clone()),
                None => Selector::Systems(langs(&a.systems)),
            };
            let res = import_segment(&src, &selector, &a.src_lang, &dst, &a.dst_lang)?;
            write_or_print(out, a.output.as_deref(), &res)?;
            Ok(0)
        }
        Command::Stats { inputs } => {
            let mut parts = Vec::new();
            for p in inputs {
                parts.push(io::read_json::<ResourceSet>(p)?);
            }
            let merged = merge(&parts)?;
            let report = sharing_stats(&merged, &parts);
            emit(out, fmt, &report, || report.to_string())?;
            Ok(0)
        }
        Command::Contrast { region, langs: codes } => {
            let loaded = cli.load()?;
            let scope = if codes.is_empty() { loaded.resources.language_codes.clone() } else { langs(codes) };
            let view = contrastive_view(&loaded.resources, &scope, region)?;
            emit(out, fmt, &view, || {
                let mut lines = Vec::new();
                for s in &view.systems {
                    lines.push(format!("{} [{}]", s.system, s.label));
                    for f in &s.features {
                        lines.push(format!("  {} [{}]", f.feature, f.label));
                    }
                }
                lines.join("\n")
            })?;
            Ok(0)
        }
        Command::Regions { command } => {
            let loaded = cli.load()?;
            let lang = cli.language(&loaded.resources)?;
            let view = loaded.resources.view(&lang)?;
            match command {
                RegionsCommand::Graph => {
                    let g = region_graph(&view.network)?;
                    emit(out, fmt, &g, || g.to_dot())?;
                }
                RegionsCommand::View { name } => {
                    let f = region_view(&view.network, name)?;
                    emit(out, fmt, &f, || fragment_to_dot(&f))?;
                }
            }
            Ok(0)
        }
        Command::Focus { trace, unit, aspect } => {
            let result = read_trace(trace)?;
            let aspect: Aspect = aspect.parse()?;
            let loaded = cli.load()?;
            let view = loaded.resources.view(&result.language)?;
            let report = where_introduced(&result, &view.network, unit, &aspect)?;
            emit(out, fmt, &report, || {
                let mut lines = vec![format!("{} in {}", report.aspect, report.unit)];
                for e in &report.entries {
                    lines.push(format!(
                        "  {} {} <- {}/{} when {}",
                        e.statement, e.constraint, e.system, e.feature, e.context
                    ));
                }
                lines.join("\n")
            })?;
            Ok(0)
        }
        Command::DiffTraces { a, b } => {
            let diff = diff_traces(&read_trace(a)?, &read_trace(b)?);
            for w in &diff.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            emit(out, fmt, &diff, || diff.to_string())?;
            Ok(0)
        }
        Command::Patch { command } => {
            let mut ws = cli.workspace()?;
            match command {
                PatchCommand::Create { edits, note, out_dir } => {
                    let changes: Vec<Change> = io::read_json(edits)?;
                    for c in changes {
                        ws.record_edit(c)?;
                    }
                    let patch = ws.create_patch(note)?;
                    let path = write_patch(out_dir, &patch)?;
                    emit(out, fmt, &patch, || {
                        format!("{} ({} edits) -> {}", patch.id, patch.edits.len(), path.display())
                    })?;
                }
                PatchCommand::Accept { patches, suite, force } => {
                    for p in patches {
                        ws.queue_patch(read_patch(p)?)?;
                    }
                    let suite = suite.as_deref().map(read_suite).transpose()?;
                    let version =
                        ws.accept_patches(Gate { suite: suite.as_ref(), force: *force }).inspect_err(|e| {
                            if let Error::SuiteRegression(report) = e {
                                let _ = write!(err, "{report}");
                            }
                        })?;
                    emit(out, fmt, version, || format!("accepted; version {version}"))?;
                }
            }
            Ok(0)
        }
        Command::Serve { port, host, suite, ui } => {
            let ws = match cli.resources.as_slice() {
                [one] => Workspace::open(one)?,
                _ => Workspace::new(cli.load()?.resources)?,
            };
            let lang = cli.language(ws.current())?;
            let suite = suite.as_deref().map(read_suite).transpose()?;
            let state = AppState::new(ws, &lang, suite);
            let runtime =
                tokio::runtime::Runtime::new().map_err(|e| Failure { status: 1, message: format!("error: {e}") })?;
            runtime
                .block_on(service::serve(state, SocketAddr::new(*host, *port), ui.clone()))
                .map_err(|e| Failure { status: 1, message: format!("error: {e}") })?;
            Ok(0)
        }
    }
}
