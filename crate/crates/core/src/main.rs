// SPDX-License-Identifier: Apache-2.0
//! `fluxsynth` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fluxsynth::balancer::{balance_paths, insert_splitters, CombNetlist};
use fluxsynth::fsm::{parse_stimulus, FiniteStateMachine, PulseEvent};
use fluxsynth::mapping::{report, Netlist, NetlistFormat, Pdk};
use fluxsynth::netsim::{check_equivalence, simulate, write_vcd, Counterexample};
use fluxsynth::synth::{synthesize, synthesize_counter, tables_for, SynthConfig, SynthError};

#[derive(Parser)]
#[command(
    name = "fluxsynth",
    version,
    about = "Synthesize pulse-driven FSMs into RSFQ netlists"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an FSM into a gate netlist.
    Synth(SynthArgs),
    /// Simulate a netlist (or an FSM) on a stimulus file.
    Simulate(SimulateArgs),
    /// Check a netlist against its FSM on all short input sequences.
    Check(CheckArgs),
    /// Print the cost report of a netlist.
    Report(ReportArgs),
    /// Path-balance a combinational netlist with DFFs.
    Balance(BalanceArgs),
}

#[derive(Args)]
struct PdkArg {
    /// Cell library; falls back to the built-in sample library.
    #[arg(long, env = "FLUXSYNTH_PDK")]
    pdk: Option<PathBuf>,
}

impl PdkArg {
    fn load(&self) -> Result<Pdk, Failure> {
        match &self.pdk {
            Some(p) => Pdk::load_path(p).map_err(|e| Failure::new("pdk", e)),
            None => Ok(Pdk::sample()),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Data,
    Hdl,
}

impl From<Format> for NetlistFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Data => NetlistFormat::Data,
            Format::Hdl => NetlistFormat::Hdl,
        }
    }
}

/// Splitter fanout limit, `None` for `off`.
#[derive(Clone, Copy)]
struct Fanout(Option<usize>);

fn parse_splitters(s: &str) -> Result<Fanout, String> {
    if s == "off" {
        return Ok(Fanout(None));
    }
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(Fanout(Some(n))),
        _ => Err(format!("expected a fanout limit >= 1 or `off`, got `{s}`")),
    }
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("expected an integer >= 1, got `{s}`")),
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, required_unless_present = "counter", conflicts_with = "counter")]
    fsm: Option<PathBuf>,
    /// Build an N-bit up-counter bit slice by bit slice instead of reading an FSM.
    #[arg(long, value_name = "N")]
    counter: Option<usize>,
    #[command(flatten)]
    pdk: PdkArg,
    /// Output netlist; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = positive)]
    jobs: Option<usize>,
    /// Take the first success any worker finds.
    #[arg(long)]
    fast: bool,
    #[arg(long, value_parser = positive, default_value_t = fluxsynth::encoding::DEFAULT_MAX_ENCODINGS)]
    max_encodings: usize,
    /// 0 skips the post-synthesis equivalence check.
    #[arg(long, default_value_t = 5)]
    check_depth: usize,
    #[arg(long, value_parser = parse_splitters, default_value = "off")]
    splitters: Fanout,
    /// Also print the transition, output and per-bit tables of the chosen encoding.
    #[arg(long)]
    dump_tables: bool,
    #[arg(long, value_enum, default_value = "data")]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, required_unless_present = "fsm")]
    netlist: Option<PathBuf>,
    /// Run the FSM interpreter instead of a netlist.
    #[arg(long, conflicts_with = "netlist")]
    fsm: Option<PathBuf>,
    #[arg(long)]
    stimulus: PathBuf,
    #[command(flatten)]
    pdk: PdkArg,
    /// Last tick to simulate; defaults to the last stimulus tick plus 8.
    #[arg(long)]
    horizon: Option<u64>,
    /// Write a waveform file.
    #[arg(long)]
    vcd: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    fsm: PathBuf,
    #[arg(long)]
    netlist: PathBuf,
    #[command(flatten)]
    pdk: PdkArg,
    #[arg(long, default_value_t = 5)]
    check_depth: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    netlist: PathBuf,
    #[command(flatten)]
    pdk: PdkArg,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BalanceArgs {
    /// Combinational netlist (`.inputs`, `.outputs`, `.gate` lines).
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    pdk: PdkArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_splitters, default_value = "off")]
    splitters: Fanout,
    #[arg(long, value_enum, default_value = "data")]
    format: Format,
}

/// Error reported as a JSON payload on stderr.
struct Failure {
    kind: &'static str,
    message: String,
    detail: Value,
}

impl Failure {
    fn new(kind: &'static str, e: impl std::fmt::Display) -> Self {
        Failure {
            kind,
            message: e.to_string(),
            detail: Value::Null,
        }
    }

    fn with(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

/// Writes via a sibling temp file and a rename so readers never see a partial file.
fn write_atomic(path: &Path, text: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::new("io", format!("{}: {e}", path.display()));
    let name = path
        .file_name()
        .ok_or_else(|| Failure::new("io", format!("{}: not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, text).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

fn load_fsm(path: &Path) -> Result<FiniteStateMachine, Failure> {
    FiniteStateMachine::parse(&read(path)?).map_err(|e| Failure::new("fsm", e))
}

fn load_netlist(path: &Path) -> Result<Netlist, Failure> {
    Netlist::read(&read(path)?).map_err(|e| Failure::new("netlist", e))
}

fn events(v: &[PulseEvent]) -> Value {
    v.iter().map(|e| json!([e.tick, e.name])).collect()
}

fn counterexample(cx: &Counterexample) -> Value {
    json!({ "inputs": cx.inputs, "expected": events(&cx.expected), "actual": events(&cx.actual) })
}

fn synth_failure(e: SynthError) -> Failure {
    let detail = match &e {
        SynthError::NotEquivalent(cx) => json!({ "counterexample": counterexample(cx) }),
        SynthError::Exhausted { attempts, causes } => json!({
            "attempts": attempts,
            "causes": causes.iter().map(|(k, n)| json!({ "cause": k, "count": n })).collect::<Vec<_>>(),
        }),
        _ => Value::Null,
    };
    let kind = match e {
        SynthError::Exhausted { .. } => "exhausted",
        SynthError::NotEquivalent(_) => "not-equivalent",
        _ => "synth",
    };
    Failure::new(kind, e).with(detail)
}

fn run_synth(a: SynthArgs) -> Result<String, Failure> {
    let pdk = a.pdk.load()?;
    let mut config = SynthConfig {
        deterministic: !a.fast,
        max_encodings: a.max_encodings,
        check_depth: a.check_depth,
        splitters: a.splitters.0,
        ..SynthConfig::default()
    };
    if let Some(j) = a.jobs {
        config.jobs = j;
    }
    let mut out = String::new();
    let result = match (a.counter, &a.fsm) {
        (Some(bits), _) => {
            if bits == 0 {
                return Err(Failure::new("usage", "--counter needs at least one bit"));
            }
            synthesize_counter(bits, &pdk, &config).map_err(synth_failure)?
        }
        (None, Some(path)) => {
            let fsm = load_fsm(path)?;
            for w in fsm.warnings() {
                eprintln!("warning: {w}");
            }
            let r = synthesize(&fsm, &pdk, &config).map_err(synth_failure)?;
            if a.dump_tables {
                out.push_str(&tables_for(&fsm, &r.encoding));
            }
            r
        }
        (None, None) => return Err(Failure::new("usage", "either --fsm or --counter is required")),
    };
    let text = result.netlist.emit(a.format.into());
    let mut summary = format!(
        "{}: {} gates, {} JJs*, width {}, encoding #{} after {} attempt(s)\n",
        result.netlist.name, result.report.gates, result.report.jj_count, result.width, result.ordinal, result.attempts
    );
    if let Some(eq) = &result.equivalence {
        summary.push_str(&format!("equivalent up to depth {}\n", eq.depth));
    }
    match &a.out {
        Some(path) => {
            write_atomic(path, &text)?;
            out.push_str(&summary);
        }
        None => {
            eprint!("{summary}");
            out.push_str(&text);
        }
    }
    Ok(out)
}

fn run_simulate(a: SimulateArgs) -> Result<String, Failure> {
    let stimulus = parse_stimulus(&read(&a.stimulus)?).map_err(|e| Failure::new("stimulus", e))?;
    let horizon = a.horizon.unwrap_or_else(|| stimulus.last().map_or(0, |e| e.tick) + 8);
    let (name, inputs, outputs, trace) = if let Some(path) = &a.fsm {
        let fsm = load_fsm(path)?;
        let trace = fsm.run(&stimulus).map_err(|e| Failure::new("stimulus", e))?;
        (fsm.name.clone(), fsm.inputs.clone(), fsm.outputs.clone(), trace)
    } else {
        let path = a.netlist.as_ref().expect("clap requires --netlist or --fsm");
        let netlist = load_netlist(path)?;
        let pdk = a.pdk.load()?;
        let trace = simulate(&netlist, &pdk, &stimulus, horizon).map_err(|e| Failure::new("simulation", e))?;
        (
            netlist.name.clone(),
            netlist.inputs.clone(),
            netlist.outputs.clone(),
            trace,
        )
    };
    if let Some(path) = &a.vcd {
        write_atomic(path, &write_vcd(&name, &inputs, &outputs, &trace))?;
    }
    Ok(trace
        .outputs
        .iter()
        .map(|e| format!("{} {}\n", e.tick, e.name))
        .collect())
}

fn run_check(a: CheckArgs) -> Result<String, Failure> {
    let fsm = load_fsm(&a.fsm)?;
    let netlist = load_netlist(&a.netlist)?;
    let pdk = a.pdk.load()?;
    let eq = check_equivalence(&fsm, &netlist, &pdk, a.check_depth).map_err(|e| Failure::new("simulation", e))?;
    match eq.counterexample {
        None => Ok(format!("equivalent up to depth {}\n", eq.depth)),
        Some(cx) => Err(Failure::new(
            "not-equivalent",
            format!("netlist differs from the FSM on {:?}", cx.inputs),
        )
        .with(json!({ "counterexample": counterexample(&cx) }))),
    }
}

fn run_report(a: ReportArgs) -> Result<String, Failure> {
    let netlist = load_netlist(&a.netlist)?;
    let pdk = a.pdk.load()?;
    netlist.validate().map_err(|e| Failure::new("netlist", e))?;
    let r = report(&netlist, &pdk);
    if a.json {
        let mut v = serde_json::to_value(&r).map_err(|e| Failure::new("internal", e))?;
        v["illustrative"] = Value::Bool(true);
        return Ok(format!("{v}\n"));
    }
    Ok(format!("{r}\n"))
}

fn run_balance(a: BalanceArgs) -> Result<String, Failure> {
    let pdk = a.pdk.load()?;
    let comb = CombNetlist::parse(&read(&a.input)?).map_err(|e| Failure::new("balance", e))?;
    let b = balance_paths(&comb, &pdk).map_err(|e| Failure::new("balance", e))?;
    let mut netlist = b.netlist;
    if let Some(k) = a.splitters.0 {
        netlist = insert_splitters(&netlist, &pdk, k).map_err(|e| Failure::new("balance", e))?;
    }
    let mut out = format!("{} DFF inserted, latency {}\n", b.dffs_inserted, b.latency);
    for (src, dst, k) in &b.padded_edges {
        out.push_str(&format!("  {src} -> {dst}: {k}\n"));
    }
    let text = netlist.emit(a.format.into());
    match &a.out {
        Some(path) => write_atomic(path, &text)?,
        None => out.push_str(&text),
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Check(a) => run_check(a),
        Command::Report(a) => run_report(a),
        Command::Balance(a) => run_balance(a),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            let mut payload = json!({ "error": { "kind": f.kind, "message": f.message } });
            if !f.detail.is_null() {
                payload["error"]["detail"] = f.detail;
            }
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
