use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use busrank_core::case::{five_bus, parse_contingency_list, FIVE_BUS_CONTINGENCIES};
use busrank_core::fuzzy::FuzzyConfig;
use busrank_core::ranking::{evaluate_critical, RankingError, RankingOptions};
use busrank_core::report::{render, Format, ReportDocument};
use busrank_core::stress::{
    find_critical_load, screen_contingencies, RampMode, RampOptions, StressError,
};
use busrank_core::{
    line_flows, parse_case, run_ranking, solve, BusId, BusKind, Case, Contingency, LfFormula,
    LoadDelta, LoadOverrides, PowerFlowOptions, PowerFlowOutcome, SeverityEngine,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "busrank",
    version,
    about = "Rank load buses by criticality near voltage collapse"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one power flow.
    Solve(SolveArgs),
    /// Find the critical reactive load of one bus.
    Stress(StressArgs),
    /// Rank load buses for every contingency.
    Rank(RankArgs),
    /// Order single and double line outages by base-load LF index.
    Screen(ScreenArgs),
}

#[derive(Args)]
struct Common {
    /// Case file. The bundled five-bus system is used when omitted.
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutFormat::Human)]
    format: OutFormat,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Power-flow mismatch tolerance, pu.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 30)]
    max_iter: usize,
}

#[derive(Args)]
struct RampArgs {
    #[arg(long, default_value_t = 0.05)]
    coarse_step: f64,
    #[arg(long, default_value_t = 0.005)]
    refinement_step: f64,
    #[arg(long, value_enum, default_value_t = Ramp::Q)]
    ramp: Ramp,
    /// Solve every ramp point from a flat start.
    #[arg(long)]
    cold: bool,
    #[arg(long, value_enum, default_value_t = Formula::MaxTransfer)]
    lf_formula: Formula,
    /// Fuzzy configuration (TOML). The bundled default is used when omitted.
    #[arg(long)]
    fuzzy: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Outaged branches, e.g. "1-2,2-3".
    #[arg(long, default_value = "")]
    outage: String,
    /// Extra load as BUS:DQ or BUS:DP:DQ (pu); repeatable.
    #[arg(long = "load")]
    loads: Vec<String>,
}

#[derive(Args)]
struct StressArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    ramp: RampArgs,
    #[arg(long)]
    bus: u32,
    #[arg(long, default_value = "")]
    outage: String,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    ramp: RampArgs,
    /// Contingency list, one per line. Only the intact network is ranked
    /// when neither this nor --bundled-contingencies is given.
    #[arg(long, conflicts_with = "bundled_contingencies")]
    contingencies: Option<PathBuf>,
    /// Use the twelve contingencies shipped with the five-bus system.
    #[arg(long)]
    bundled_contingencies: bool,
    /// Buses to stress, comma separated. Defaults to every load bus.
    #[arg(long, value_delimiter = ',')]
    buses: Option<Vec<u32>>,
}

#[derive(Args)]
struct ScreenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    max_order: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Human,
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Human => Format::Human,
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Ramp {
    /// Reactive load only.
    Q,
    /// Real and reactive load at constant power factor.
    Pf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Formula {
    MaxTransfer,
    ImpedanceAngle,
    Printed,
}

enum Failure {
    Input(String),
    BaseInsolvable(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::BaseInsolvable(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::BaseInsolvable(m) | Failure::Internal(m) => m,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn internal<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Internal(e.to_string())
}

fn from_stress(e: StressError) -> Failure {
    match e {
        StressError::BaseInsolvable { .. } => Failure::BaseInsolvable(e.to_string()),
        StressError::RampExhausted { .. } => Failure::Internal(e.to_string()),
        _ => Failure::Input(e.to_string()),
    }
}

fn from_ranking(e: RankingError) -> Failure {
    match e {
        RankingError::BaseInsolvable(_) => Failure::BaseInsolvable(e.to_string()),
        RankingError::Stress { source, .. } => from_stress(source),
        RankingError::Case(_) | RankingError::PowerFlow(_) | RankingError::Fuzzy(_) => input(e),
        RankingError::Index(_) => internal(e),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

impl Common {
    fn load_case(&self) -> Result<Case, Failure> {
        match &self.case {
            Some(p) => {
                parse_case(&read(p)?).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))
            }
            None => Ok(five_bus()),
        }
    }

    fn pf(&self) -> Result<PowerFlowOptions, Failure> {
        let o = PowerFlowOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            flat_start: false,
        };
        o.validate().map_err(input)?;
        Ok(o)
    }

    fn emit(&self, text: &str) -> Result<(), Failure> {
        match &self.output {
            Some(p) => {
                fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))
            }
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

impl RampArgs {
    fn options(&self) -> Result<RampOptions, Failure> {
        let o = RampOptions {
            coarse_step: self.coarse_step,
            refinement_step: self.refinement_step,
            mode: match self.ramp {
                Ramp::Q => RampMode::ReactiveOnly,
                Ramp::Pf => RampMode::ConstantPowerFactor,
            },
            warm_start: !self.cold,
            ..Default::default()
        };
        o.validate().map_err(input)?;
        Ok(o)
    }

    fn formula(&self) -> LfFormula {
        match self.lf_formula {
            Formula::MaxTransfer => LfFormula::MaxTransfer,
            Formula::ImpedanceAngle => LfFormula::ImpedanceAngle,
            Formula::Printed => LfFormula::Printed,
        }
    }

    fn fuzzy(&self) -> Result<FuzzyConfig, Failure> {
        match &self.fuzzy {
            Some(p) => FuzzyConfig::from_toml(&read(p)?)
                .map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
            None => Ok(FuzzyConfig::default()),
        }
    }
}

fn parse_outage(case: &Case, s: &str) -> Result<Contingency, Failure> {
    let c: Contingency = s.parse().map_err(input)?;
    case.canonical_contingency(&c).map_err(input)
}

fn parse_load(s: &str) -> Result<(BusId, LoadDelta), Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Failure::Input(format!("bad load '{s}'")))
    };
    let bus = parts[0]
        .trim()
        .parse::<u32>()
        .map_err(|_| Failure::Input(format!("bad load '{s}'")))?;
    let delta = match parts.len() {
        2 => LoadDelta {
            dp: 0.0,
            dq: num(parts[1])?,
        },
        3 => LoadDelta {
            dp: num(parts[1])?,
            dq: num(parts[2])?,
        },
        _ => {
            return Err(Failure::Input(format!(
                "bad load '{s}', expected BUS:DQ or BUS:DP:DQ"
            )))
        }
    };
    Ok((BusId(bus), delta))
}

fn json<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(internal)?;
    s.push('\n');
    Ok(s)
}

fn cmd_solve(a: SolveArgs) -> Result<(), Failure> {
    let case = a.common.load_case()?;
    let outage = parse_outage(&case, &a.outage)?;
    let mut overrides = LoadOverrides::new();
    for l in &a.loads {
        let (bus, d) = parse_load(l)?;
        overrides.insert(bus, d);
    }
    let outcome = solve(&case, &outage, &overrides, &a.common.pf()?).map_err(input)?;
    let sol = match outcome {
        PowerFlowOutcome::Converged(s) => s,
        PowerFlowOutcome::Diverged(d) => {
            return Err(Failure::BaseInsolvable(format!(
                "power flow diverged: {:?} after {} iterations, mismatch {:e}",
                d.reason, d.iterations, d.last_mismatch
            )))
        }
    };
    let flows = line_flows(&case, &outage, &sol).map_err(internal)?;
    let text = match a.common.format {
        OutFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                solution: &'a busrank_core::PowerFlowSolution,
                flows: &'a [busrank_core::BranchFlow],
            }
            json(&Doc {
                solution: &sol,
                flows: &flows,
            })?
        }
        OutFormat::Csv => {
            let mut s = String::from("bus,vm_pu,va_rad\n");
            for (i, b) in sol.bus_ids.iter().enumerate() {
                let _ = writeln!(s, "{b},{},{}", sol.state.vm[i], sol.state.va[i]);
            }
            s
        }
        OutFormat::Human => {
            let mut s = format!(
                "Converged in {} iterations, max mismatch {:.2e} pu\n\n   bus      V pu    angle deg\n",
                sol.iterations, sol.max_mismatch
            );
            for (i, b) in sol.bus_ids.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "  {:>4}  {:>8.4}  {:>11.4}",
                    b.to_string(),
                    sol.state.vm[i],
                    sol.state.va[i].to_degrees()
                );
            }
            s.push_str("\n  branch  from  to      P send    Q send    P recv    Q recv\n");
            for f in &flows {
                let _ = writeln!(
                    s,
                    "  {:>6}  {:>4}  {:>4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
                    f.branch.as_str(),
                    f.sending.to_string(),
                    f.receiving.to_string(),
                    f.p_send,
                    f.q_send,
                    f.p_recv,
                    f.q_recv
                );
            }
            s
        }
    };
    a.common.emit(&text)
}

fn cmd_stress(a: StressArgs) -> Result<(), Failure> {
    let case = a.common.load_case()?;
    let outage = parse_outage(&case, &a.outage)?;
    let engine = SeverityEngine::new(a.ramp.fuzzy()?).map_err(input)?;
    let critical = find_critical_load(
        &case,
        &outage,
        BusId(a.bus),
        &a.ramp.options()?,
        &a.common.pf()?,
    )
    .map_err(from_stress)?;
    let r = evaluate_critical(&case, critical, a.ramp.formula(), &engine).map_err(from_ranking)?;
    let text = match a.common.format {
        OutFormat::Json => json(&r)?,
        OutFormat::Csv => {
            let mut s = String::from("branch,sending,receiving,lf,fvsi,si_lf\n");
            for (rec, sev) in r.lines.iter().zip(&r.severity.lines) {
                let fv = rec.fvsi.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{fv},{}",
                    rec.branch.as_str(),
                    rec.sending,
                    rec.receiving,
                    rec.lf,
                    sev.severity
                );
            }
            s
        }
        OutFormat::Human => {
            let mut s = format!(
                "Bus {} under {}: critical Q = {:.4} pu (added {:.4}, diverges at +{:.4}), {} solves\n\n",
                r.scenario.bus, r.scenario.contingency, r.q_critical, r.delta_q, r.delta_q_diverged, r.solves
            );
            s.push_str("   bus      V pu     SI_VP\n");
            for b in &r.severity.buses {
                let _ = writeln!(
                    s,
                    "  {:>4}  {:>8.4}  {:>8.3}",
                    b.bus.to_string(),
                    b.voltage,
                    b.severity
                );
            }
            s.push_str("\n  branch        LF      FVSI     SI_LF\n");
            for (rec, sev) in r.lines.iter().zip(&r.severity.lines) {
                let fv = rec.fvsi.map_or("-".to_string(), |v| format!("{v:.4}"));
                let _ = writeln!(
                    s,
                    "  {:>6}  {:>8.4}  {:>8}  {:>8.3}",
                    rec.branch.as_str(),
                    rec.lf,
                    fv,
                    sev.severity
                );
            }
            let _ = writeln!(
                s,
                "\nSum SI_VP {:.3}, sum SI_LF {:.3}, CI {:.3}, bus FVSI {:.4}",
                r.severity.sum_si_vp, r.severity.sum_si_lf, r.ci, r.fvsi
            );
            s
        }
    };
    a.common.emit(&text)
}

fn cmd_rank(a: RankArgs) -> Result<(), Failure> {
    let case = a.common.load_case()?;
    let contingencies = match (&a.contingencies, a.bundled_contingencies) {
        (Some(p), _) => parse_contingency_list(&read(p)?)
            .map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?,
        (None, true) => parse_contingency_list(FIVE_BUS_CONTINGENCIES).map_err(internal)?,
        (None, false) => Vec::new(),
    };
    let buses: Vec<BusId> = match &a.buses {
        Some(b) => b.iter().map(|&id| BusId(id)).collect(),
        None => case
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Load)
            .map(|b| b.id)
            .collect(),
    };
    let fuzzy = a.ramp.fuzzy()?;
    let engine = SeverityEngine::new(fuzzy.clone()).map_err(input)?;
    let options = RankingOptions {
        power_flow: a.common.pf()?,
        ramp: a.ramp.options()?,
        lf_formula: a.ramp.formula(),
    };
    let run =
        run_ranking(&case, &contingencies, &buses, &options, &engine).map_err(from_ranking)?;
    let doc = ReportDocument::new(run, options, fuzzy);
    let text = render(&doc, a.common.format.into()).map_err(internal)?;
    a.common.emit(&text)
}

fn cmd_screen(a: ScreenArgs) -> Result<(), Failure> {
    let case = a.common.load_case()?;
    let screened = screen_contingencies(&case, usize::from(a.max_order), &a.common.pf()?)
        .map_err(from_stress)?;
    let text = match a.common.format {
        OutFormat::Json => json(&screened)?,
        OutFormat::Csv => {
            let mut s = String::from("contingency,max_lf,worst_branch\n");
            for c in &screened {
                let _ = writeln!(
                    s,
                    "\"{}\",{},{}",
                    c.contingency,
                    c.max_lf,
                    c.worst_branch.as_deref().unwrap_or("")
                );
            }
            s
        }
        OutFormat::Human => {
            let mut s = String::from("  contingency     max LF  line\n");
            for c in &screened {
                let _ = writeln!(
                    s,
                    "  {:<12}  {:>8.4}  {}",
                    c.contingency.to_string(),
                    c.max_lf,
                    c.worst_branch.as_deref().unwrap_or("-")
                );
            }
            s
        }
    };
    a.common.emit(&text)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; exit code 2 is reserved
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Stress(a) => cmd_stress(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Screen(a) => cmd_screen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("busrank: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
