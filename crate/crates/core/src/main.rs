use std::collections::BTreeSet;
use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dfa_core::analyses::AnalysisKind;
use dfa_core::augmented::{self, AnalysisVisitor, AugmentedSemantics};
use dfa_core::fuzz::{self, GenConfig};
use dfa_core::interp::{self, Outcome, DEFAULT_MAX_STEPS};
use dfa_core::optimizer;
use dfa_core::parser::{parse, print};
use dfa_core::render;
use dfa_core::syntax::{Program, Var};

const EXIT_USAGE: u8 = 1;
const EXIT_STUCK: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "dfa", version, about = "Dataflow analyses for a small labeled imperative language")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pass {
    Dce,
    Constprop,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a program and print its canonical form
    Parse { file: PathBuf },
    /// Execute a program
    Run {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
        /// Print every configuration
        #[arg(long)]
        trace: bool,
    },
    /// Solve an analysis and print the facts at every label
    Analyze {
        file: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        analysis: AnalysisKind,
        /// Variables observed at exit (live variables only)
        #[arg(long, value_delimiter = ',')]
        observe: Option<Vec<String>>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Audit a solved analysis and check it against the program's run
    Check {
        file: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        analysis: AnalysisKind,
        /// Accept any prediction below the threaded one
        #[arg(long)]
        metarule: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
        #[arg(long, value_delimiter = ',')]
        observe: Option<Vec<String>>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Apply an optimization pass
    Opt {
        file: PathBuf,
        #[arg(long, value_enum)]
        pass: Pass,
        #[arg(long, value_delimiter = ',')]
        observe: Option<Vec<String>>,
        /// Write the transformed program here instead of standard output
        #[arg(short = 'o')]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Generate programs and run every check on them
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = GenConfig::default().max_commands)]
        max_cmds: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

fn parse_kind(s: &str) -> Result<AnalysisKind, String> {
    s.parse()
}

struct Failure(u8, String);

type CmdResult = Result<u8, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

fn color_enabled() -> bool {
    std::env::var("DFA_COLOR").map_or(true, |v| v != "0") && std::io::stdout().is_terminal()
}

/// Colors a leading PASS or FAIL.
fn paint(text: String) -> String {
    if !color_enabled() {
        return text;
    }
    for (word, code) in [("PASS", "32"), ("FAIL", "31")] {
        if let Some(rest) = text.strip_prefix(word) {
            return format!("\x1b[{code}m{word}\x1b[0m{rest}");
        }
    }
    text
}

fn load(path: &Path) -> Result<Program, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|errors| {
        let lines: Vec<String> = errors.iter().map(|e| format!("{}:{e}", path.display())).collect();
        usage(lines.join("\n"))
    })
}

fn observe_set(
    observe: Option<Vec<String>>,
    allowed: bool,
    context: &str,
) -> Result<BTreeSet<Var>, Failure> {
    match observe {
        None => Ok(BTreeSet::new()),
        Some(_) if !allowed => Err(usage(format!("--observe is not accepted with {context}"))),
        Some(names) => Ok(names
            .iter()
            .map(|n| n.trim())
            .filter(|n| !n.is_empty())
            .map(Var::new)
            .collect()),
    }
}

fn outcome_code(outcome: &Outcome) -> u8 {
    match outcome {
        Outcome::Done => 0,
        Outcome::Stuck { .. } | Outcome::Overflow { .. } => EXIT_STUCK,
        Outcome::BudgetExhausted => EXIT_BUDGET,
    }
}

struct Analyze<'a> {
    program: &'a Program,
    kind: AnalysisKind,
    format: Format,
}

impl AnalysisVisitor for Analyze<'_> {
    type Output = Result<String, String>;

    fn visit<A: AugmentedSemantics>(self, a: A) -> Self::Output {
        let result = a.solve(self.program).map_err(|e| e.to_string())?;
        Ok(match self.format {
            Format::Text => render::analysis_text(self.program, self.kind, &result),
            Format::Json => format!("{:#}\n", render::analysis_json(self.program, self.kind, &result)),
        })
    }
}

struct Check<'a> {
    program: &'a Program,
    metarule: bool,
    max_steps: usize,
}

impl AnalysisVisitor for Check<'_> {
    type Output = Result<augmented::CheckReport, String>;

    fn visit<A: AugmentedSemantics>(self, a: A) -> Self::Output {
        augmented::check_analysis(&a, self.program, self.metarule, self.max_steps).map_err(|e| e.to_string())
    }
}

fn execute(cmd: Cmd) -> CmdResult {
    match cmd {
        Cmd::Parse { file } => {
            print!("{}", print(&load(&file)?));
            Ok(0)
        }
        Cmd::Run {
            file,
            max_steps,
            trace,
        } => {
            let program = load(&file)?;
            let t = interp::run(&program, max_steps);
            if trace {
                print!("{}", t.to_text());
            } else {
                println!("{}", t.outcome);
            }
            println!("final state: {}", t.last().state);
            Ok(outcome_code(&t.outcome))
        }
        Cmd::Analyze {
            file,
            analysis,
            observe,
            format,
        } => {
            let program = load(&file)?;
            let observe = observe_set(observe, analysis == AnalysisKind::LiveVars, analysis.name())?;
            let visitor = Analyze {
                program: &program,
                kind: analysis,
                format,
            };
            let out = augmented::dispatch(analysis, &observe, visitor).map_err(usage)?;
            print!("{out}");
            Ok(0)
        }
        Cmd::Check {
            file,
            analysis,
            metarule,
            max_steps,
            observe,
            format,
        } => {
            let program = load(&file)?;
            let observe = observe_set(observe, analysis == AnalysisKind::LiveVars, analysis.name())?;
            let visitor = Check {
                program: &program,
                metarule,
                max_steps,
            };
            let report = augmented::dispatch(analysis, &observe, visitor).map_err(usage)?;
            match format {
                Format::Text => print!("{}", paint(report.to_text())),
                Format::Json => println!("{:#}", report.to_json()),
            }
            Ok(if report.passed() { 0 } else { EXIT_CHECK })
        }
        Cmd::Opt {
            file,
            pass,
            observe,
            out,
            format,
        } => {
            let program = load(&file)?;
            let observe = observe_set(observe, pass == Pass::Dce, "constprop")?;
            let (transformed, log) = match pass {
                Pass::Dce => optimizer::dead_store_elim(&program, &observe),
                Pass::Constprop => optimizer::const_prop(&program),
            }
            .map_err(|e| usage(e.to_string()))?;
            let log_text = match format {
                Format::Text => log.to_text(),
                Format::Json => format!("{:#}\n", log.to_json()),
            };
            match out {
                Some(path) => {
                    fs::write(&path, print(&transformed))
                        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                    print!("{log_text}");
                }
                None => {
                    print!("{}", print(&transformed));
                    // The log follows as comment lines so the output still parses.
                    for line in log_text.lines() {
                        println!("# {line}");
                    }
                }
            }
            Ok(0)
        }
        Cmd::Fuzz {
            seed,
            count,
            max_cmds,
            max_steps,
            format,
        } => {
            let cfg = GenConfig {
                seed,
                max_commands: max_cmds,
                ..GenConfig::default()
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let programs = fuzz::generate_many(&cfg, count);
            let report = fuzz::run_seeded_suite(&programs, max_steps);
            match format {
                Format::Text => print!("{}", report.summary_table()),
                Format::Json => println!("{:#}", report.to_json()),
            }
            Ok(if report.passed() { 0 } else { EXIT_CHECK })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
