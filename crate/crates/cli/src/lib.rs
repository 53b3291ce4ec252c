//! The `iproto` command line: validate → verify → simulate → export.
//!
//! Every command writes machine-readable JSON and signals its outcome through
//! the exit code:
//!
//! | command  | 0 | 1 | 2 | 3 | 4 |
//! |----------|---|---|---|---|---|
//! | validate | well-formed | findings | unreadable or unparsable | | |
//! | verify   | all properties hold | a property fails | bad input | bounds hit | |
//! | simulate | completed, conformant | stuck, deadline, unverified | bad input | | trace does not replay |
//! | export   | written | | bad input or usage | | |

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use iproto_core::net::{
    export_net, translate, verify, Bounds, ColoredPetriNet, ExportFormat, MarkingView, Verdict,
};
use iproto_core::protocol::{
    parse_document, validate_well_formedness, InteractionProtocol, RoleKind, Severity,
};
use iproto_core::runtime::{
    create_session, trace_conformance, AgentId, Divergence, EventKind, SessionOptions,
    SessionStatus, Task,
};
use iproto_core::services::{Registry, SelectionPolicy};

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAIL: i32 = 1;
    pub const INPUT: i32 = 2;
    pub const INCONCLUSIVE: i32 = 3;
    pub const NONCONFORMANT: i32 = 4;
}

#[derive(Debug, Parser)]
#[command(
    name = "iproto",
    version,
    about = "Validate, verify, simulate and export interaction protocols"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a protocol document for well-formedness.
    Validate { protocol: PathBuf },
    /// Translate to a colored Petri net and model-check it.
    Verify {
        protocol: PathBuf,
        #[command(flatten)]
        bounds: BoundsArgs,
        /// Also write report.json, net.pnml and net.dot here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the protocol with agents and write trace.ndjson and summary.json.
    Simulate(SimulateArgs),
    /// Write the protocol's net as PNML or DOT.
    Export {
        protocol: PathBuf,
        #[arg(long, default_value = "pnml")]
        format: ExportFormat,
        /// Directory for `<id>.<ext>`; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct BoundsArgs {
    #[arg(long, default_value_t = Bounds::default().max_nodes)]
    pub bounds_nodes: usize,
    #[arg(long, default_value_t = Bounds::default().max_tokens)]
    pub bounds_tokens: u32,
}

impl From<BoundsArgs> for Bounds {
    fn from(b: BoundsArgs) -> Self {
        Bounds {
            max_nodes: b.bounds_nodes,
            max_tokens: b.bounds_tokens,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    pub protocol: PathBuf,
    /// Service registry (TOML) for service roles.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: u64,
    #[command(flatten)]
    pub bounds: BoundsArgs,
    #[arg(long, default_value = "min-cost")]
    pub policy: SelectionPolicy,
    /// Further service candidates to try after a failed invocation.
    #[arg(long, default_value_t = 0)]
    pub retries: u32,
    /// Run even if verification does not establish proper termination.
    #[arg(long)]
    pub force: bool,
    /// Task description announced with the first message.
    #[arg(long, default_value = "")]
    pub task: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return exit::INPUT;
            }
            let _ = write!(stdout, "{}", e.render());
            return exit::OK;
        }
    };
    let result = match cli.command {
        Command::Validate { protocol } => cmd_validate(&protocol, stdout),
        Command::Verify {
            protocol,
            bounds,
            out,
        } => cmd_verify(&protocol, bounds.into(), out.as_deref(), stdout),
        Command::Simulate(args) => cmd_simulate(&args, stdout),
        Command::Export {
            protocol,
            format,
            out,
        } => cmd_export(&protocol, format, out.as_deref(), stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            exit::INPUT
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_protocol(path: &Path) -> Result<InteractionProtocol> {
    let text = read(path)?;
    let doc = parse_document(&text).with_context(|| format!("{}", path.display()))?;
    let report = validate_well_formedness(&doc.protocol);
    if !report.ok {
        let codes: Vec<&str> = report.error_codes().into_iter().collect();
        anyhow::bail!(
            "{}: protocol is not well-formed: {}",
            path.display(),
            codes.join(", ")
        );
    }
    Ok(doc.protocol)
}

fn load_net(path: &Path) -> Result<(InteractionProtocol, ColoredPetriNet)> {
    let ip = load_protocol(path)?;
    let net = translate(&ip).with_context(|| format!("{}", path.display()))?;
    Ok((ip, net))
}

fn print_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[derive(Serialize)]
struct PositionedFinding<'a> {
    severity: Severity,
    code: &'a str,
    location: &'a str,
    detail: &'a str,
    line: usize,
    column: usize,
}

#[derive(Serialize)]
struct ValidateOutput<'a> {
    protocol: &'a str,
    ok: bool,
    findings: Vec<PositionedFinding<'a>>,
}

pub fn cmd_validate(path: &Path, out: &mut dyn Write) -> Result<i32> {
    let text = read(path)?;
    let doc = parse_document(&text).with_context(|| format!("{}", path.display()))?;
    let report = validate_well_formedness(&doc.protocol);
    let findings = report
        .findings
        .iter()
        .map(|f| {
            let pos = doc.position_of(&f.location);
            PositionedFinding {
                severity: f.severity,
                code: &f.code,
                location: &f.location,
                detail: &f.detail,
                line: pos.line,
                column: pos.column,
            }
        })
        .collect();
    print_json(
        out,
        &ValidateOutput {
            protocol: &doc.protocol.id,
            ok: report.ok,
            findings,
        },
    )?;
    Ok(if report.ok { exit::OK } else { exit::FAIL })
}

pub fn cmd_verify(
    path: &Path,
    bounds: Bounds,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let (_, net) = load_net(path)?;
    let report = verify(&net, bounds);
    print_json(out, &report)?;
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
        std::fs::write(dir.join("net.pnml"), export_net(&net, ExportFormat::Pnml))?;
        std::fs::write(dir.join("net.dot"), export_net(&net, ExportFormat::Dot))?;
    }
    Ok(if report.inconclusive() {
        exit::INCONCLUSIVE
    } else if report.passed() {
        exit::OK
    } else {
        exit::FAIL
    })
}

#[derive(Debug, Serialize)]
pub struct ConformanceSummary {
    pub conformant: bool,
    pub divergence: Option<Divergence>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub protocol: String,
    pub conversation: String,
    pub seed: u64,
    pub status: SessionStatus,
    pub reason: Option<String>,
    pub ticks: u64,
    pub events: usize,
    pub messages: BTreeMap<String, usize>,
    pub verified: bool,
    pub forced: bool,
    pub conformance: ConformanceSummary,
    /// Net marking the run ended in, when it did not complete.
    pub stuck_marking: Option<MarkingView>,
}

/// The sender of the first message is the Integrator; every other process
/// role gets an enterprise agent named after it.
pub fn default_bindings(ip: &InteractionProtocol) -> BTreeMap<String, AgentId> {
    let first = ip.messages.first().and_then(|m| m.sender()).unwrap_or("");
    ip.roles
        .iter()
        .filter(|r| r.kind == RoleKind::PrivateProcess)
        .map(|r| {
            let agent = if r.name == first {
                AgentId::integrator(&r.name)
            } else {
                AgentId::enterprise(&r.name)
            };
            (r.name.clone(), agent)
        })
        .collect()
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let (ip, net) = load_net(&args.protocol)?;
    let registry = match &args.registry {
        Some(p) => Some(
            Registry::load(p).with_context(|| format!("cannot load registry {}", p.display()))?,
        ),
        None => None,
    };
    let report = verify(&net, args.bounds.into());
    let verified = report.proper_termination == Verdict::Holds;
    let options = SessionOptions {
        verification: Some(report),
        force: args.force,
        registry,
        policy: args.policy,
        retries: args.retries,
        skills: BTreeMap::new(),
    };
    let mut session = match create_session(&ip, &net, &default_bindings(&ip), args.seed, options) {
        Ok(s) => s,
        Err(e) => {
            writeln!(out, "{e}")?;
            return Ok(if e.code() == "UNVERIFIED" {
                exit::FAIL
            } else {
                exit::INPUT
            });
        }
    };
    if let Err(e) = session.announce(Task::new(&args.task)) {
        writeln!(out, "{e}")?;
        return Ok(exit::INPUT);
    }
    let status = session.run_to_completion(args.max_steps);
    let trace = session.trace();
    let conformance = trace_conformance(trace, &net);

    let mut messages = BTreeMap::new();
    for e in trace.of_kind(EventKind::Sent) {
        let act = e
            .message
            .as_ref()
            .map(|m| m.performative.as_str())
            .unwrap_or("?");
        *messages.entry(act.to_string()).or_insert(0) += 1;
    }
    let summary = Summary {
        protocol: ip.id.clone(),
        conversation: trace.conversation_id.clone(),
        seed: args.seed,
        status,
        reason: session.reason().map(str::to_string),
        ticks: session.now(),
        events: trace.len(),
        messages,
        verified,
        forced: args.force,
        conformance: ConformanceSummary {
            conformant: conformance.conformant,
            divergence: conformance.divergence.clone(),
        },
        stuck_marking: (status != SessionStatus::Completed)
            .then(|| conformance.end_marking().map(|m| net.view(m)))
            .flatten(),
    };

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    std::fs::write(args.out.join("trace.ndjson"), trace.to_ndjson())?;
    let summary_json = serde_json::to_string_pretty(&summary)? + "\n";
    std::fs::write(args.out.join("summary.json"), &summary_json)?;
    out.write_all(summary_json.as_bytes())?;

    Ok(if !conformance.conformant {
        exit::NONCONFORMANT
    } else if status == SessionStatus::Completed {
        exit::OK
    } else {
        exit::FAIL
    })
}

pub fn cmd_export(
    path: &Path,
    format: ExportFormat,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let (ip, net) = load_net(path)?;
    let doc = export_net(&net, format);
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
            let file = dir.join(format!("{}.{}", ip.id, format.extension()));
            std::fs::write(&file, doc)?;
            writeln!(out, "{}", file.display())?;
        }
        None => out.write_all(doc.as_bytes())?,
    }
    Ok(exit::OK)
}
