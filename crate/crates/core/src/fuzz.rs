//! Seeded program generator and the property suite run over its output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analyses::{
    self, DefinedVariables, LiveVariables, ReachingDefinitions, VeryBusyExpressions,
};
use crate::augmented::{self, AugmentedSemantics, CheckReport, Policy};
use crate::interp::{self, Trace};
use crate::lattice::Def;
use crate::optimizer::{self, Verdict};
use crate::parser::print;
use crate::solver::{self, AnalysisResult};
use crate::syntax::{AExp, ArithOp, BExp, CmpOp, Command, Label, Program, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub max_commands: usize,
    pub max_vars: usize,
    pub literal_range: RangeInclusive<i64>,
    pub branch_prob: f64,
    pub goto_prob: f64,
    pub max_expr_depth: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            max_commands: 20,
            max_vars: 3,
            literal_range: -5..=10,
            branch_prob: 0.3,
            goto_prob: 0.1,
            max_expr_depth: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GenConfigError {
    #[error("max_commands and max_vars must be positive")]
    NonPositiveBound,
    #[error("literal range is empty")]
    EmptyLiteralRange,
    #[error("branch and goto probabilities must lie in [0, 1] and sum to at most 1")]
    BadProbability,
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        GenConfig {
            seed,
            ..GenConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenConfigError> {
        if self.max_commands == 0 || self.max_vars == 0 {
            return Err(GenConfigError::NonPositiveBound);
        }
        if self.literal_range.is_empty() {
            return Err(GenConfigError::EmptyLiteralRange);
        }
        let p = |x: f64| (0.0..=1.0).contains(&x);
        if !p(self.branch_prob) || !p(self.goto_prob) || self.branch_prob + self.goto_prob > 1.0 {
            return Err(GenConfigError::BadProbability);
        }
        Ok(())
    }
}

/// Share of variable reads that pick a variable assigned earlier in the text.
const DEFINED_READ_BIAS: f64 = 0.7;

struct Generator<'a> {
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
    vars: Vec<Var>,
    assigned: Vec<Var>,
}

impl Generator<'_> {
    fn var(&mut self) -> Var {
        if !self.assigned.is_empty() && self.rng.gen_bool(DEFINED_READ_BIAS) {
            let i = self.rng.gen_range(0..self.assigned.len());
            self.assigned[i].clone()
        } else {
            let i = self.rng.gen_range(0..self.vars.len());
            self.vars[i].clone()
        }
    }

    fn aexp(&mut self, depth: usize) -> AExp {
        if depth == 0 || self.rng.gen_bool(0.5) {
            if self.rng.gen_bool(0.5) {
                AExp::Num(self.rng.gen_range(self.cfg.literal_range.clone()))
            } else {
                AExp::Var(self.var())
            }
        } else {
            let op = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul][self.rng.gen_range(0..3)];
            let l = self.aexp(depth - 1);
            let r = self.aexp(depth - 1);
            AExp::bin(op, l, r)
        }
    }

    fn bexp(&mut self, depth: usize) -> BExp {
        let roll: f64 = self.rng.gen();
        if depth > 0 && roll < 0.1 {
            BExp::not(self.bexp(depth - 1))
        } else if depth > 0 && roll < 0.2 {
            BExp::and(self.bexp(depth - 1), self.bexp(depth - 1))
        } else if depth > 0 && roll < 0.3 {
            BExp::or(self.bexp(depth - 1), self.bexp(depth - 1))
        } else if roll < 0.33 {
            if self.rng.gen_bool(0.5) {
                BExp::True
            } else {
                BExp::False
            }
        } else {
            let op = if self.rng.gen_bool(0.5) { CmpOp::Eq } else { CmpOp::Leq };
            let l = self.aexp(self.cfg.max_expr_depth.saturating_sub(1));
            let r = self.aexp(self.cfg.max_expr_depth.saturating_sub(1));
            BExp::cmp(op, l, r)
        }
    }
}

/// A well-formed program drawn from `cfg.seed`: up to `max_commands` body
/// commands followed by `halt` and `done`.
pub fn generate(cfg: &GenConfig) -> Program {
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        vars: (0..cfg.max_vars).map(|i| Var::new(format!("v{i}"))).collect(),
        assigned: Vec::new(),
    };
    let body = g.rng.gen_range(1..=cfg.max_commands);
    let total = body + 2;
    let label = |i: usize| Label::new(format!("l{i}"));
    let mut commands = Vec::with_capacity(total);
    for i in 0..body {
        let roll: f64 = g.rng.gen();
        let c = if roll < cfg.branch_prob {
            let b = g.bexp(1);
            Command::Branch(b, label(g.rng.gen_range(0..total)))
        } else if roll < cfg.branch_prob + cfg.goto_prob {
            Command::Goto(label(g.rng.gen_range(0..total)))
        } else if g.rng.gen_bool(0.05) {
            Command::Skip
        } else {
            let e = g.aexp(cfg.max_expr_depth);
            let v = g.vars[g.rng.gen_range(0..g.vars.len())].clone();
            if !g.assigned.contains(&v) {
                g.assigned.push(v.clone());
            }
            Command::Assign(v, e)
        };
        commands.push((label(i), c));
    }
    commands.push((label(body), Command::Halt));
    commands.push((label(body + 1), Command::Done));
    Program::new(commands)
}

/// `count` programs with seeds `seed, seed + 1, …`.
pub fn generate_many(base: &GenConfig, count: usize) -> Vec<(u64, Program)> {
    (0..count as u64)
        .map(|i| {
            let seed = base.seed.wrapping_add(i);
            let cfg = GenConfig {
                seed,
                ..base.clone()
            };
            (seed, generate(&cfg))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail { step: Option<usize>, detail: String },
    /// The check does not apply to this program's run.
    Excluded { reason: String },
}

impl Status {
    pub fn is_fail(&self) -> bool {
        matches!(self, Status::Fail { .. })
    }

    fn from_report(r: &CheckReport) -> Status {
        match r.failures.first() {
            None => Status::Pass,
            Some(f) => Status::Fail {
                step: f.step,
                detail: f.to_string(),
            },
        }
    }

    fn from_verdict(v: Verdict) -> Status {
        match v {
            Verdict::Agree => Status::Pass,
            Verdict::Excluded(reason) => Status::Excluded { reason },
            Verdict::Disagree(detail) => Status::Fail { step: None, detail },
        }
    }

    fn fail(detail: impl Into<String>) -> Status {
        Status::Fail {
            step: None,
            detail: detail.into(),
        }
    }
}

/// Check names in report order.
pub const CHECKS: &[&str] = &[
    "audit-lv",
    "audit-vbe",
    "audit-dv",
    "audit-rd",
    "reads-live",
    "killed-not-busy",
    "preservation-lv",
    "preservation-vbe",
    "preservation-dv",
    "preservation-rd",
    "progress-lv",
    "progress-vbe",
    "progress-dv",
    "progress-rd",
    "theorems-lv",
    "theorems-vbe",
    "theorems-dv",
    "theorems-rd",
    "dce-observe-none",
    "dce-observe-last",
    "dce-idempotent",
    "constprop",
    "constprop-idempotent",
];

/// Analysis results to use instead of solving, for negative controls.
#[derive(Clone, Debug, Default)]
pub struct Solutions {
    pub lv: Option<AnalysisResult<Var>>,
    pub vbe: Option<AnalysisResult<AExp>>,
    pub dv: Option<AnalysisResult<Var>>,
    pub rd: Option<AnalysisResult<Def>>,
}

impl Solutions {
    pub fn is_empty(&self) -> bool {
        self.lv.is_none() && self.vbe.is_none() && self.dv.is_none() && self.rd.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProgramReport {
    pub index: usize,
    pub seed: Option<u64>,
    pub source: String,
    pub checks: BTreeMap<&'static str, Status>,
    /// Smallest failing variant found by shrinking, if any check failed.
    pub shrunk: Option<String>,
}

impl ProgramReport {
    pub fn passed(&self) -> bool {
        !self.checks.values().any(Status::is_fail)
    }

    pub fn failing_checks(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|(_, s)| s.is_fail())
            .map(|(k, _)| *k)
            .collect()
    }
}

/// Audit, Preservation, Progress and theorem checks for one analysis.
fn analysis_checks<A: AugmentedSemantics>(
    a: &A,
    suffix: &str,
    program: &Program,
    trace: &Trace,
    given: Option<&AnalysisResult<A::Elem>>,
    checks: &mut BTreeMap<&'static str, Status>,
) -> Option<AnalysisResult<A::Elem>> {
    let name = |prefix: &str| -> &'static str {
        let full = format!("{prefix}-{suffix}");
        CHECKS.iter().find(|c| **c == full).copied().expect("known check name")
    };
    let spec = match a.spec(program) {
        Ok(s) => s,
        Err(e) => {
            for p in ["audit", "preservation", "progress", "theorems"] {
                checks.insert(name(p), Status::fail(e.to_string()));
            }
            return None;
        }
    };
    let result = match given {
        Some(r) => r.clone(),
        None => match solver::solve(program, &spec) {
            Ok(r) => r,
            Err(e) => {
                for p in ["audit", "preservation", "progress", "theorems"] {
                    checks.insert(name(p), Status::fail(e.to_string()));
                }
                return None;
            }
        },
    };
    let violations = solver::audit(program, &spec, &result);
    checks.insert(
        name("audit"),
        match violations.first() {
            None => Status::Pass,
            Some(v) => Status::fail(v.to_string()),
        },
    );
    // An augmented run under the analysis policy, started from the solved
    // entry fact, must project onto standard steps.
    let first = program.first().expect("nonempty program");
    let run = augmented::aug_run(
        a,
        program,
        Policy::Analysis(&result),
        result.before(first).clone(),
        false,
        trace.transitions().max(1),
    );
    checks.insert(
        name("preservation"),
        Status::from_report(&augmented::check_preservation(program, &run.configs)),
    );
    checks.insert(
        name("progress"),
        Status::from_report(&augmented::check_progress_along(a, program, &result, trace, false)),
    );
    checks.insert(
        name("theorems"),
        Status::from_report(&augmented::check_trace_theorems(a, program, &result, trace)),
    );
    Some(result)
}

fn last_assigned(program: &Program) -> Option<Var> {
    program
        .commands()
        .iter()
        .rev()
        .find_map(|(_, c)| c.assigned().cloned())
}

fn optimizer_checks(program: &Program, budget: usize, checks: &mut BTreeMap<&'static str, Status>) {
    let none = BTreeSet::new();
    let last: BTreeSet<Var> = last_assigned(program).into_iter().collect();
    let mut idempotent = Status::Pass;
    for (name, observe) in [("dce-observe-none", &none), ("dce-observe-last", &last)] {
        let status = match optimizer::dead_store_elim(program, observe) {
            Err(e) => Status::fail(e.to_string()),
            Ok((q, _)) => {
                // Observed variables whose every mention was a dead store are
                // gone from the output.
                let still_there: BTreeSet<Var> = observe.intersection(&q.all_variables()).cloned().collect();
                let again = optimizer::dead_store_elim(&q, &still_there).map(|(_, log)| log.len());
                if again != Ok(0) && !idempotent.is_fail() {
                    idempotent = Status::fail(match again {
                        Ok(n) => format!("{n} further rewrites"),
                        Err(e) => e.to_string(),
                    });
                }
                if q.validate().is_empty() {
                    Status::from_verdict(optimizer::compare_dead_store(program, &q, observe, budget))
                } else {
                    Status::fail("output does not validate")
                }
            }
        };
        checks.insert(name, status);
    }
    checks.insert("dce-idempotent", idempotent);

    match optimizer::const_prop(program) {
        Err(e) => {
            checks.insert("constprop", Status::fail(e.to_string()));
            checks.insert("constprop-idempotent", Status::fail(e.to_string()));
        }
        Ok((q, _)) => {
            let status = if q.validate().is_empty() {
                Status::from_verdict(optimizer::compare_const_prop(program, &q, budget))
            } else {
                Status::fail("output does not validate")
            };
            checks.insert("constprop", status);
            let again = optimizer::const_prop(&q).map(|(_, log)| log.len()).unwrap_or(usize::MAX);
            checks.insert(
                "constprop-idempotent",
                if again == 0 {
                    Status::Pass
                } else {
                    Status::fail(format!("{again} further rewrites"))
                },
            );
        }
    }
}

/// Every suite check on one program. Entries of `given` replace the solved
/// results of the corresponding analysis.
pub fn check_program(program: &Program, budget: usize, given: &Solutions) -> BTreeMap<&'static str, Status> {
    let mut checks = BTreeMap::new();
    let trace = interp::run(program, budget);
    let lv = analysis_checks(&LiveVariables::new(), "lv", program, &trace, given.lv.as_ref(), &mut checks);
    let vbe = analysis_checks(&VeryBusyExpressions, "vbe", program, &trace, given.vbe.as_ref(), &mut checks);
    analysis_checks(&DefinedVariables, "dv", program, &trace, given.dv.as_ref(), &mut checks);
    analysis_checks(&ReachingDefinitions, "rd", program, &trace, given.rd.as_ref(), &mut checks);

    let status = match lv {
        None => Status::fail("live variables unavailable"),
        Some(r) => match analyses::unlive_reads(program, &r).first() {
            None => Status::Pass,
            Some((l, v)) => Status::fail(format!("{l} reads {v}, which is not live before it")),
        },
    };
    checks.insert("reads-live", status);
    let status = match vbe {
        None => Status::fail("very busy expressions unavailable"),
        Some(r) => match analyses::killed_yet_busy(program, &r).first() {
            None => Status::Pass,
            Some((l, e)) => Status::fail(format!("{e} very busy before {l}, which kills it")),
        },
    };
    checks.insert("killed-not-busy", status);

    optimizer_checks(program, budget, &mut checks);
    checks
}

/// Greedy one-pass shrink: each body command in turn is replaced by `skip`
/// and the replacement kept if `check` still fails.
pub fn shrink(program: &Program, budget: usize, check: &str) -> Program {
    shrink_by(program, |candidate| {
        check_program(candidate, budget, &Solutions::default())
            .get(check)
            .is_some_and(Status::is_fail)
    })
}

pub fn shrink_by(program: &Program, still_fails: impl Fn(&Program) -> bool) -> Program {
    let mut current = program.clone();
    for (l, c) in program.commands() {
        if matches!(c, Command::Skip | Command::Halt | Command::Done) {
            continue;
        }
        let candidate = current.with_command(l, Command::Skip);
        if still_fails(&candidate) {
            current = candidate;
        }
    }
    current
}

pub fn report_program(
    index: usize,
    seed: Option<u64>,
    program: &Program,
    budget: usize,
    given: &Solutions,
) -> ProgramReport {
    let checks = check_program(program, budget, given);
    let first_fail = checks.iter().find(|(_, s)| s.is_fail()).map(|(k, _)| *k);
    // Injected results are tied to this program's labels, so only genuine
    // failures are shrunk.
    let shrunk = match first_fail {
        Some(check) if given.is_empty() => Some(print(&shrink(program, budget, check))),
        _ => None,
    };
    ProgramReport {
        index,
        seed,
        source: print(program),
        checks,
        shrunk,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub budget: usize,
    pub programs: Vec<ProgramReport>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub pass: usize,
    pub fail: usize,
    pub excluded: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.programs.iter().all(ProgramReport::passed)
    }

    pub fn failed_programs(&self) -> Vec<&ProgramReport> {
        self.programs.iter().filter(|p| !p.passed()).collect()
    }

    pub fn tallies(&self) -> BTreeMap<&'static str, Tally> {
        let mut out: BTreeMap<&'static str, Tally> = CHECKS.iter().map(|c| (*c, Tally::default())).collect();
        for p in &self.programs {
            for (k, s) in &p.checks {
                let t = out.entry(k).or_default();
                match s {
                    Status::Pass => t.pass += 1,
                    Status::Fail { .. } => t.fail += 1,
                    Status::Excluded { .. } => t.excluded += 1,
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let failures: Vec<Value> = self
            .failed_programs()
            .into_iter()
            .flat_map(|p| {
                p.checks.iter().filter(|(_, s)| s.is_fail()).map(move |(k, s)| {
                    let (step, detail) = match s {
                        Status::Fail { step, detail } => (*step, detail.clone()),
                        _ => unreachable!(),
                    };
                    json!({
                        "index": p.index,
                        "seed": p.seed,
                        "check": k,
                        "step": step,
                        "detail": detail,
                        "source": p.source,
                        "shrunk": p.shrunk,
                    })
                })
            })
            .collect();
        json!({
            "budget": self.budget,
            "programs": self.programs.len(),
            "passed": self.programs.iter().filter(|p| p.passed()).count(),
            "failed": self.failed_programs().len(),
            "checks": self.tallies(),
            "failures": failures,
        })
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let failed = self.failed_programs().len();
        let _ = writeln!(
            out,
            "programs: {}  passed: {}  failed: {}  budget: {}",
            self.programs.len(),
            self.programs.len() - failed,
            failed,
            self.budget
        );
        let _ = writeln!(out, "{:<22}{:>8}{:>8}{:>10}", "check", "pass", "fail", "excluded");
        for (k, t) in self.tallies() {
            let _ = writeln!(out, "{k:<22}{:>8}{:>8}{:>10}", t.pass, t.fail, t.excluded);
        }
        for p in self.failed_programs() {
            let seed = p.seed.map(|s| format!(" (seed {s})")).unwrap_or_default();
            for (k, s) in p.checks.iter().filter(|(_, s)| s.is_fail()) {
                if let Status::Fail { step, detail } = s {
                    let at = step.map(|i| format!(" at step {i}")).unwrap_or_default();
                    let _ = writeln!(out, "\nprogram #{}{seed} failed {k}{at}: {detail}", p.index);
                }
            }
            let _ = writeln!(out, "source:\n{}", p.source.trim_end());
            if let Some(s) = &p.shrunk {
                let _ = writeln!(out, "shrunk:\n{}", s.trim_end());
            }
        }
        out
    }
}

/// Runs every check on every program in parallel; the report keeps input order.
pub fn run_suite(programs: &[Program], budget: usize) -> SuiteReport {
    let reports = programs
        .par_iter()
        .enumerate()
        .map(|(i, p)| report_program(i, None, p, budget, &Solutions::default()))
        .collect();
    SuiteReport {
        budget,
        programs: reports,
    }
}

/// Like [`run_suite`], recording each program's seed.
pub fn run_seeded_suite(programs: &[(u64, Program)], budget: usize) -> SuiteReport {
    let reports = programs
        .par_iter()
        .enumerate()
        .map(|(i, (seed, p))| report_program(i, Some(*seed), p, budget, &Solutions::default()))
        .collect();
    SuiteReport {
        budget,
        programs: reports,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_programs_validate() {
        for seed in 0..200 {
            let p = generate(&GenConfig::with_seed(seed));
            assert!(p.validate().is_empty(), "seed {seed}:\n{}", print(&p));
            let cmds = p.commands();
            assert!(matches!(cmds[cmds.len() - 2].1, Command::Halt));
        }
    }

    #[test]
    fn same_seed_same_program() {
        let cfg = GenConfig::with_seed(42);
        assert_eq!(generate(&cfg), generate(&cfg));
    }

    #[test]
    fn minimal_shape() {
        let cfg = GenConfig {
            seed: 1,
            max_commands: 1,
            ..GenConfig::default()
        };
        assert_eq!(generate(&cfg).len(), 3);
    }

    #[test]
    fn seeds_give_varied_programs_with_branches() {
        let programs: Vec<Program> = (1..=100).map(|s| generate(&GenConfig::with_seed(s))).collect();
        let distinct: BTreeSet<String> = programs.iter().map(print).collect();
        assert_eq!(distinct.len(), 100);
        let branches: usize = programs
            .iter()
            .map(|p| p.commands().iter().filter(|(_, c)| matches!(c, Command::Branch(..))).count())
            .sum();
        assert!(branches as f64 / 100.0 >= 1.0, "{branches} branches");
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig::default().validate().is_ok());
        let bad = GenConfig {
            branch_prob: 0.8,
            goto_prob: 0.5,
            ..GenConfig::default()
        };
        assert_eq!(bad.validate(), Err(GenConfigError::BadProbability));
        let bad = GenConfig {
            max_vars: 0,
            ..GenConfig::default()
        };
        assert_eq!(bad.validate(), Err(GenConfigError::NonPositiveBound));
    }

    #[test]
    fn small_suite_passes_and_is_reproducible() {
        let programs = generate_many(&GenConfig::with_seed(7), 20);
        let a = run_seeded_suite(&programs, 2000);
        let b = run_seeded_suite(&programs, 2000);
        assert!(a.passed(), "{}", a.summary_table());
        assert_eq!(a.to_json().to_string(), b.to_json().to_string());
        assert_eq!(a.tallies().len(), CHECKS.len());
    }
}
