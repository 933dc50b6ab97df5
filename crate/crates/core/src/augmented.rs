//! Augmented semantics `<l, σ, π> ⇒ <l', σ', π'>` and the checkers built on
//! it: Preservation, Progress, bisimulation and the trace-level theorems.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::analyses::{
    Analysis, AnalysisError, AnalysisKind, DefinedVariables, LiveVariables, ReachingDefinitions,
    VeryBusyExpressions,
};
use crate::interp::{self, eval_a, step_with, Config, Fault, Outcome, State, Step, Trace};
use crate::lattice::{Def, Element, Fact};
use crate::solver::{self, AnalysisResult};
use crate::syntax::{AExp, Command, Label, Program, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugConfig<T: Element> {
    pub label: Label,
    pub state: State,
    pub pi: Fact<T>,
}

impl<T: Element> AugConfig<T> {
    pub fn new(label: Label, state: State, pi: Fact<T>) -> Self {
        AugConfig { label, state, pi }
    }

    /// The standard configuration obtained by projecting out `π`.
    pub fn standard(&self) -> Config {
        Config {
            label: self.label.clone(),
            state: self.state.clone(),
        }
    }
}

/// The set of next values a rule admits, as a constraint on member sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Bound<T: Element> {
    Equal(Fact<T>),
    Subset(Fact<T>),
    Superset(Fact<T>),
}

impl<T: Element> Bound<T> {
    pub fn admits(&self, f: &Fact<T>) -> bool {
        match self {
            Bound::Equal(b) => f.members() == b.members(),
            Bound::Subset(b) => f.members().is_subset(b.members()),
            Bound::Superset(b) => f.members().is_superset(b.members()),
        }
    }

    pub fn fact(&self) -> &Fact<T> {
        match self {
            Bound::Equal(b) | Bound::Subset(b) | Bound::Superset(b) => b,
        }
    }

    pub fn rule(&self) -> &'static str {
        match self {
            Bound::Equal(_) => "prediction-equal",
            Bound::Subset(_) => "prediction-subset",
            Bound::Superset(_) => "prediction-superset",
        }
    }
}

/// Why an augmented step was not taken.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Refusal {
    #[error("{rule}: {detail}")]
    PreconditionViolated {
        rule: &'static str,
        detail: String,
        expected: Value,
        actual: Value,
    },
    #[error("{rule}: proposed {actual} is not admitted by {expected}")]
    PredictionInconsistent {
        rule: &'static str,
        expected: Value,
        actual: Value,
    },
    #[error("standard semantics is stuck: {0}")]
    Stuck(Fault),
    #[error("configuration is terminal")]
    Terminal,
}

impl From<Fault> for Refusal {
    fn from(f: Fault) -> Self {
        Refusal::Stuck(f)
    }
}

impl Refusal {
    pub fn rule(&self) -> &'static str {
        match self {
            Refusal::PreconditionViolated { rule, .. } | Refusal::PredictionInconsistent { rule, .. } => {
                rule
            }
            Refusal::Stuck(_) => "standard-stuck",
            Refusal::Terminal => "terminal",
        }
    }

    fn into_failure(self, step: usize) -> Failure {
        let detail = self.to_string();
        let rule = self.rule().to_string();
        let (expected, actual) = match self {
            Refusal::PreconditionViolated {
                expected, actual, ..
            }
            | Refusal::PredictionInconsistent {
                expected, actual, ..
            } => (expected, actual),
            Refusal::Stuck(_) | Refusal::Terminal => (Value::Null, Value::Null),
        };
        Failure {
            step: Some(step),
            rule,
            expected,
            actual,
            detail,
        }
    }
}

/// One analysis' augmented rules.
pub trait AugmentedSemantics: Analysis {
    /// `π₀` for history analyses; prophecy analyses start anywhere.
    fn initial(&self, _universe: &Arc<BTreeSet<Self::Elem>>) -> Option<Fact<Self::Elem>> {
        None
    }

    /// Precondition on each variable read during evaluation.
    fn check_read(&self, _v: &Var, _pi: &Fact<Self::Elem>) -> Result<(), Refusal> {
        Ok(())
    }

    /// Precondition on `π` for the command as a whole.
    fn check_command(&self, _c: &Command, _pi: &Fact<Self::Elem>) -> Result<(), Refusal> {
        Ok(())
    }

    /// Next values of `π` the rule for `l: c` admits.
    fn bound(&self, l: &Label, c: &Command, pi: &Fact<Self::Elem>, metarule: bool)
        -> Bound<Self::Elem>;

    /// Evaluates this analysis' correctness theorems along `trace`.
    fn trace_theorems(
        &self,
        program: &Program,
        result: &AnalysisResult<Self::Elem>,
        trace: &Trace,
    ) -> Vec<Failure>;
}

/// Attempts `<l, σ, π> ⇒ <l', σ', π'>` with the proposed `π'`.
pub fn aug_step<A: AugmentedSemantics>(
    a: &A,
    program: &Program,
    c: &AugConfig<A::Elem>,
    pi_next: &Fact<A::Elem>,
    metarule: bool,
) -> Result<AugConfig<A::Elem>, Refusal> {
    let cmd = program
        .command(&c.label)
        .unwrap_or_else(|| panic!("label {} not in program", c.label));
    let step = step_with(program, &c.standard(), &mut |v| a.check_read(v, &c.pi))?;
    let Step::Next(next) = step else {
        return Err(Refusal::Terminal);
    };
    a.check_command(cmd, &c.pi)?;
    let bound = a.bound(&c.label, cmd, &c.pi, metarule);
    if !bound.admits(pi_next) {
        return Err(Refusal::PredictionInconsistent {
            rule: bound.rule(),
            expected: bound.fact().to_json(),
            actual: pi_next.to_json(),
        });
    }
    Ok(AugConfig::new(next.label, next.state, pi_next.clone()))
}

fn plus<T: Element>(pi: &Fact<T>, extra: impl IntoIterator<Item = T>) -> Fact<T> {
    let mut out = pi.clone();
    for t in extra {
        out.insert(t);
    }
    out
}

fn minus<T: Element>(pi: &Fact<T>, gone: &BTreeSet<T>) -> Fact<T> {
    pi.with_members(pi.members().difference(gone).cloned())
}

fn names<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> Value {
    Value::Array(items.into_iter().map(|t| json!(t.to_string())).collect())
}

impl AugmentedSemantics for LiveVariables {
    fn check_read(&self, v: &Var, pi: &Fact<Var>) -> Result<(), Refusal> {
        if pi.contains(v) {
            Ok(())
        } else {
            Err(Refusal::PreconditionViolated {
                rule: "lv-read-live",
                detail: format!("{v} is read but not predicted live"),
                expected: names([v]),
                actual: pi.to_json(),
            })
        }
    }

    fn bound(&self, _l: &Label, c: &Command, pi: &Fact<Var>, metarule: bool) -> Bound<Var> {
        match c {
            Command::Assign(v, _) => Bound::Subset(plus(pi, [v.clone()])),
            Command::Branch(..) => Bound::Subset(pi.clone()),
            _ if metarule => Bound::Subset(pi.clone()),
            _ => Bound::Equal(pi.clone()),
        }
    }

    fn trace_theorems(&self, program: &Program, result: &AnalysisResult<Var>, trace: &Trace) -> Vec<Failure> {
        lv_intervening_write(program, result, trace)
    }
}

impl AugmentedSemantics for VeryBusyExpressions {
    fn check_command(&self, c: &Command, pi: &Fact<AExp>) -> Result<(), Refusal> {
        match c {
            Command::Assign(v, e) => {
                let subs = e.subexpressions();
                let bad: Vec<&AExp> = pi
                    .members()
                    .iter()
                    .filter(|e2| !subs.contains(*e2) && e2.reads(v))
                    .collect();
                if bad.is_empty() {
                    Ok(())
                } else {
                    Err(Refusal::PreconditionViolated {
                        rule: "vbe-assign",
                        detail: format!(
                            "{} predicted very busy but read {v} and are not evaluated",
                            bad.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
                        ),
                        expected: Value::Array(vec![]),
                        actual: names(bad),
                    })
                }
            }
            Command::Halt if !pi.is_empty() => Err(Refusal::PreconditionViolated {
                rule: "vbe-halt",
                detail: "expressions are still predicted very busy at halt".to_string(),
                expected: Value::Array(vec![]),
                actual: pi.to_json(),
            }),
            _ => Ok(()),
        }
    }

    fn bound(&self, _l: &Label, c: &Command, pi: &Fact<AExp>, metarule: bool) -> Bound<AExp> {
        match c {
            Command::Assign(_, e) => Bound::Superset(minus(pi, &e.subexpressions())),
            Command::Branch(b, _) => Bound::Superset(minus(pi, &b.subexpressions())),
            _ if metarule => Bound::Superset(pi.clone()),
            _ => Bound::Equal(pi.clone()),
        }
    }

    fn trace_theorems(&self, program: &Program, result: &AnalysisResult<AExp>, trace: &Trace) -> Vec<Failure> {
        vbe_evaluated_first(program, result, trace)
    }
}

impl AugmentedSemantics for DefinedVariables {
    fn initial(&self, universe: &Arc<BTreeSet<Var>>) -> Option<Fact<Var>> {
        Some(Fact::empty(self.kind().order(), universe.clone()))
    }

    fn bound(&self, _l: &Label, c: &Command, pi: &Fact<Var>, _metarule: bool) -> Bound<Var> {
        match c {
            Command::Assign(v, _) => Bound::Subset(plus(pi, [v.clone()])),
            _ => Bound::Subset(pi.clone()),
        }
    }

    fn trace_theorems(&self, program: &Program, result: &AnalysisResult<Var>, trace: &Trace) -> Vec<Failure> {
        dv_underapproximates(program, result, trace)
    }
}

impl AugmentedSemantics for ReachingDefinitions {
    fn initial(&self, universe: &Arc<BTreeSet<Def>>) -> Option<Fact<Def>> {
        Some(Fact::empty(self.kind().order(), universe.clone()))
    }

    fn bound(&self, l: &Label, c: &Command, pi: &Fact<Def>, _metarule: bool) -> Bound<Def> {
        match c {
            Command::Assign(v, _) => Bound::Superset(pi.strong_update(v, l)),
            _ => Bound::Superset(pi.clone()),
        }
    }

    fn trace_theorems(&self, program: &Program, result: &AnalysisResult<Def>, trace: &Trace) -> Vec<Failure> {
        rd_provenance(program, result, trace)
    }
}

/// A violated rule or theorem. `step` indexes the configuration in the trace;
/// equation violations have none.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub step: Option<usize>,
    pub rule: String,
    pub expected: Value,
    pub actual: Value,
    #[serde(skip)]
    pub detail: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(i) => write!(f, "step {i}: {}: {}", self.rule, self.detail),
            None => write!(f, "{}: {}", self.rule, self.detail),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckReport {
    pub failures: Vec<Failure>,
    /// Transitions examined, when a trace was involved.
    pub steps_checked: usize,
    /// How the underlying standard run ended, when there was one.
    pub trace_outcome: Option<Outcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn outcome(&self) -> &'static str {
        if self.passed() {
            "pass"
        } else {
            "fail"
        }
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.failures.extend(other.failures);
        self.steps_checked = self.steps_checked.max(other.steps_checked);
        if self.trace_outcome.is_none() {
            self.trace_outcome = other.trace_outcome;
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "outcome": self.outcome(), "failures": self.failures })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if self.passed() {
            out.push_str("PASS\n");
        } else {
            out.push_str(&format!("FAIL ({} failures)\n", self.failures.len()));
            for f in &self.failures {
                out.push_str(&format!("  {f}\n"));
            }
        }
        if let Some(o) = &self.trace_outcome {
            out.push_str(&format!("checked {} steps; run outcome: {o}\n", self.steps_checked));
        }
        out
    }
}

fn failure(step: usize, rule: &str, expected: Value, actual: Value, detail: String) -> Failure {
    Failure {
        step: Some(step),
        rule: rule.to_string(),
        expected,
        actual,
        detail,
    }
}

/// Passes iff each consecutive pair of augmented configurations projects to
/// a standard step.
pub fn check_preservation<T: Element>(program: &Program, trace: &[AugConfig<T>]) -> CheckReport {
    let mut report = CheckReport {
        steps_checked: trace.len().saturating_sub(1),
        ..CheckReport::default()
    };
    for (i, pair) in trace.windows(2).enumerate() {
        let (from, to) = (pair[0].standard(), pair[1].standard());
        let ok = program.contains(&from.label)
            && matches!(interp::step(program, &from), Ok(Step::Next(ref c)) if *c == to);
        if !ok {
            report.failures.push(failure(
                i,
                "preservation",
                json!(format!("{} {}", to.label, to.state)),
                json!(match program.contains(&from.label).then(|| interp::step(program, &from)) {
                    Some(Ok(Step::Next(c))) => format!("{} {}", c.label, c.state),
                    Some(Ok(Step::Terminal)) => "terminal".to_string(),
                    Some(Err(f)) => f.to_string(),
                    None => "unknown label".to_string(),
                }),
                format!("augmented step to {} {} has no standard counterpart", to.label, to.state),
            ));
        }
    }
    report
}

/// Progress along an existing standard trace: every step is matched by an
/// augmented step whose `π` values are the solved before-facts.
pub fn check_progress_along<A: AugmentedSemantics>(
    a: &A,
    program: &Program,
    result: &AnalysisResult<A::Elem>,
    trace: &Trace,
    metarule: bool,
) -> CheckReport {
    let mut report = CheckReport {
        steps_checked: trace.transitions(),
        trace_outcome: Some(trace.outcome.clone()),
        ..CheckReport::default()
    };
    let first = &trace.steps[0].label;
    if let Some(pi0) = a.initial(result.before(first).universe()) {
        // Histories start at π₀, so the solved entry fact must sit above it.
        if !pi0.leq(result.before(first)).unwrap_or(false) {
            report.failures.push(failure(
                0,
                "initial-history",
                pi0.to_json(),
                result.before(first).to_json(),
                format!("before({first}) does not lie above the initial history"),
            ));
        }
    }
    for (i, pair) in trace.steps.windows(2).enumerate() {
        let (from, to) = (&pair[0], &pair[1]);
        let c = AugConfig::new(from.label.clone(), from.state.clone(), result.before(&from.label).clone());
        match aug_step(a, program, &c, result.before(&to.label), metarule) {
            Ok(next) if next.standard() == *to => {}
            Ok(next) => report.failures.push(failure(
                i,
                "progress-mismatch",
                json!(format!("{} {}", to.label, to.state)),
                json!(format!("{} {}", next.label, next.state)),
                "augmented step disagrees with the standard step".to_string(),
            )),
            Err(r) => report.failures.push(r.into_failure(i)),
        }
    }
    report
}

pub fn check_progress<A: AugmentedSemantics>(
    a: &A,
    program: &Program,
    result: &AnalysisResult<A::Elem>,
    max_steps: usize,
    metarule: bool,
) -> CheckReport {
    check_progress_along(a, program, result, &interp::run(program, max_steps), metarule)
}

pub fn check_trace_theorems<A: AugmentedSemantics>(
    a: &A,
    program: &Program,
    result: &AnalysisResult<A::Elem>,
    trace: &Trace,
) -> CheckReport {
    CheckReport {
        failures: a.trace_theorems(program, result, trace),
        steps_checked: trace.transitions(),
        trace_outcome: Some(trace.outcome.clone()),
    }
}

/// For `i ≤ j` with `v ∉ before(lᵢ)` and `v` read at `lⱼ`, some `k ∈ [i, j)`
/// assigns `v`.
fn lv_intervening_write(program: &Program, result: &AnalysisResult<Var>, trace: &Trace) -> Vec<Failure> {
    let mut out = Vec::new();
    // dead_since[v]: earliest index since v's last write where v was not live.
    let mut dead_since: BTreeMap<Var, usize> = BTreeMap::new();
    for (j, cfg) in trace.steps.iter().enumerate() {
        let before = result.before(&cfg.label);
        for v in before.universe().iter() {
            if !before.contains(v) {
                dead_since.entry(v.clone()).or_insert(j);
            }
        }
        let c = program.command(&cfg.label).expect("trace label in program");
        for v in c.variables() {
            if let Some(&i) = dead_since.get(&v) {
                out.push(failure(
                    j,
                    "lv-intervening-write",
                    names([&v]),
                    result.before(&trace.steps[i].label).to_json(),
                    format!("{v} read at {} without a write since step {i}, where it was dead", cfg.label),
                ));
            }
        }
        if let Some(v) = c.assigned() {
            dead_since.remove(v);
        }
    }
    out
}

/// Very busy expressions are evaluated before any of their variables is
/// reassigned, and before `done` is reached.
fn vbe_evaluated_first(program: &Program, result: &AnalysisResult<AExp>, trace: &Trace) -> Vec<Failure> {
    let mut out = Vec::new();
    // pending[e′] = earliest index where e′ was very busy and not yet evaluated since.
    let mut pending: BTreeMap<AExp, usize> = BTreeMap::new();
    for (j, cfg) in trace.steps.iter().enumerate() {
        let c = program.command(&cfg.label).expect("trace label in program");
        if matches!(c, Command::Done) {
            for (e, i) in &pending {
                out.push(failure(
                    j,
                    "vbe-evaluated-before-done",
                    names([e]),
                    Value::Array(vec![]),
                    format!("{e}, very busy at step {i}, was never evaluated before done"),
                ));
            }
        }
        for e in result.before(&cfg.label).members() {
            pending.entry(e.clone()).or_insert(j);
        }
        for e in c.subexpressions() {
            pending.remove(&e);
        }
        if let Some(v) = c.assigned() {
            for (e, i) in pending.iter().filter(|(e, _)| e.reads(v)) {
                out.push(failure(
                    j,
                    "vbe-evaluated-before-kill",
                    names([e]),
                    Value::Array(vec![]),
                    format!("{v} reassigned at {} before {e}, very busy at step {i}, was evaluated", cfg.label),
                ));
            }
        }
    }
    out
}

/// `before(lᵢ) ⊆ dom(σᵢ)`, and no undefined read where the command's
/// variables are all known defined.
fn dv_underapproximates(program: &Program, result: &AnalysisResult<Var>, trace: &Trace) -> Vec<Failure> {
    let mut out = Vec::new();
    for (i, cfg) in trace.steps.iter().enumerate() {
        let before = result.before(&cfg.label);
        if before.members().iter().any(|v| !cfg.state.contains(v)) {
            out.push(failure(
                i,
                "dv-underapproximates",
                before.to_json(),
                names(cfg.state.domain()),
                format!("before({}) is not contained in the defined variables", cfg.label),
            ));
        }
    }
    if let Outcome::Stuck { label, var } = &trace.outcome {
        let c = program.command(label).expect("trace label in program");
        let before = result.before(label);
        if c.variables().iter().all(|v| before.contains(v)) {
            out.push(failure(
                trace.transitions(),
                "dv-not-stuck",
                before.to_json(),
                names(trace.last().state.domain()),
                format!("stuck reading {var} at {label} although every variable read is known defined"),
            ));
        }
    }
    out
}

fn literal_of(c: &Command) -> Option<i64> {
    match c {
        Command::Assign(_, AExp::Num(n)) => Some(*n),
        _ => None,
    }
}

/// Each defined value traces back to an executed assignment recorded in the
/// reaching definitions, and constant reaching definitions give the value.
fn rd_provenance(program: &Program, result: &AnalysisResult<Def>, trace: &Trace) -> Vec<Failure> {
    let mut out = Vec::new();
    let mut writers: BTreeMap<Var, Vec<usize>> = BTreeMap::new();
    for (i, cfg) in trace.steps.iter().enumerate() {
        let before = result.before(&cfg.label);
        for (v, n) in cfg.state.bindings() {
            let defs = before.defs_of(v);
            let found = writers.get(v).into_iter().flatten().rev().any(|&k| {
                let lk = &trace.steps[k].label;
                let Some(Command::Assign(_, e)) = program.command(lk) else {
                    return false;
                };
                defs.contains(lk) && eval_a(e, &trace.steps[k].state) == Ok(n)
            });
            if !found {
                out.push(failure(
                    i,
                    "rd-provenance",
                    json!({ v.to_string(): defs.iter().map(|l| l.to_string()).collect::<Vec<_>>() }),
                    json!(n),
                    format!("no recorded definition of {v} at {} produced {n}", cfg.label),
                ));
            }
            let literals: BTreeSet<Option<i64>> = defs
                .iter()
                .map(|g| program.command(g).and_then(literal_of))
                .collect();
            if let [Some(m)] = literals.into_iter().collect::<Vec<_>>()[..] {
                if m != n {
                    out.push(failure(
                        i,
                        "rd-constant",
                        json!(m),
                        json!(n),
                        format!("every reaching definition of {v} at {} assigns {m} but it holds {n}", cfg.label),
                    ));
                }
            }
        }
        let c = program.command(&cfg.label).expect("trace label in program");
        if let (Some(v), true) = (c.assigned(), i + 1 < trace.steps.len()) {
            writers.entry(v.clone()).or_default().push(i);
        }
    }
    out
}

/// Where the next prophecy or history value comes from during an augmented run.
#[derive(Clone, Copy, Debug)]
pub enum Policy<'a, T: Element> {
    /// `π` at `l` is the solved `β_before(l)`.
    Analysis(&'a AnalysisResult<T>),
    /// `π` at `l` is whatever the caller supplied.
    Explicit(&'a BTreeMap<Label, Fact<T>>),
}

impl<T: Element> Policy<'_, T> {
    fn at(&self, l: &Label) -> Option<&Fact<T>> {
        match self {
            Policy::Analysis(r) => r.before.get(l),
            Policy::Explicit(m) => m.get(l),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AugOutcome {
    Done,
    Refused(Refusal),
    /// The policy had no value for this label.
    NoPrediction(Label),
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugTrace<T: Element> {
    pub configs: Vec<AugConfig<T>>,
    pub outcome: AugOutcome,
}

/// Runs the augmented semantics from `<first(P), ∅, π₀>` under `policy`.
pub fn aug_run<A: AugmentedSemantics>(
    a: &A,
    program: &Program,
    policy: Policy<'_, A::Elem>,
    pi0: Fact<A::Elem>,
    metarule: bool,
    max_steps: usize,
) -> AugTrace<A::Elem> {
    let first = program.first().expect("program has a first command").clone();
    let mut configs = vec![AugConfig::new(first, State::new(), pi0)];
    let outcome = loop {
        let current = configs.last().unwrap();
        let next_label = match interp::step(program, &current.standard()) {
            Ok(Step::Terminal) => break AugOutcome::Done,
            Err(f) => break AugOutcome::Refused(Refusal::Stuck(f)),
            Ok(Step::Next(c)) => c.label,
        };
        if configs.len() > max_steps {
            break AugOutcome::BudgetExhausted;
        }
        let Some(pi_next) = policy.at(&next_label) else {
            break AugOutcome::NoPrediction(next_label);
        };
        match aug_step(a, program, current, pi_next, metarule) {
            Ok(c) => configs.push(c),
            Err(r) => break AugOutcome::Refused(r),
        }
    };
    AugTrace { configs, outcome }
}

/// Largest universe [`explore`] and full-candidate bisimulation accept.
pub const ENUMERATION_LIMIT: usize = 4;
pub const BISIMULATION_ENUMERATION_LIMIT: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExploreError {
    #[error("universe has {0} elements; enumeration is limited to {ENUMERATION_LIMIT}")]
    TooLarge(usize),
}

/// Every fact over `universe`, in a fixed order.
pub fn all_facts<T: Element>(template: &Fact<T>) -> Vec<Fact<T>> {
    let elems: Vec<&T> = template.universe().iter().collect();
    assert!(elems.len() < 32, "powerset of {} elements is too large", elems.len());
    (0u32..1 << elems.len())
        .map(|mask| {
            template.with_members(
                elems
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, t)| (*t).clone()),
            )
        })
        .collect()
}

/// Result of breadth-first search over the augmented relation.
#[derive(Clone, Debug)]
pub struct Exploration<T: Element> {
    /// Every accepted transition found.
    pub transitions: Vec<(AugConfig<T>, AugConfig<T>)>,
    pub configs: usize,
}

/// Explores all `π` choices along the (unique) standard execution for at
/// most `depth` steps. Prophecy analyses start from every `π₀`.
pub fn explore<A: AugmentedSemantics>(
    a: &A,
    program: &Program,
    metarule: bool,
    depth: usize,
) -> Result<Exploration<A::Elem>, ExploreError> {
    let universe = Arc::new(a.universe(program));
    if universe.len() > ENUMERATION_LIMIT {
        return Err(ExploreError::TooLarge(universe.len()));
    }
    let template = Fact::empty(a.kind().order(), universe.clone());
    let candidates = all_facts(&template);
    let first = program.first().expect("program has a first command").clone();
    let starts = match a.initial(&universe) {
        Some(pi0) => vec![pi0],
        None => candidates.clone(),
    };
    let mut seen: BTreeSet<(usize, Vec<String>)> = BTreeSet::new();
    let mut queue: VecDeque<(usize, AugConfig<A::Elem>)> = starts
        .into_iter()
        .map(|pi| (0, AugConfig::new(first.clone(), State::new(), pi)))
        .collect();
    let mut transitions = Vec::new();
    let mut configs = 0;
    while let Some((d, c)) = queue.pop_front() {
        // The state at depth d is determined, so (d, π) identifies the config.
        let key = (d, c.pi.members().iter().map(|t| t.to_string()).collect());
        if !seen.insert(key) {
            continue;
        }
        configs += 1;
        if d >= depth {
            continue;
        }
        for pi_next in &candidates {
            if let Ok(next) = aug_step(a, program, &c, pi_next, metarule) {
                transitions.push((c.clone(), next.clone()));
                queue.push_back((d + 1, next));
            }
        }
    }
    Ok(Exploration {
        transitions,
        configs,
    })
}

/// Checks `<l, σ> ~ <l, σ, β_before(l)>` in both directions at every
/// configuration of the standard run. From the augmented side every accepted
/// step must match the standard one; from the standard side the step to
/// `β_before(l')` must be accepted.
pub fn check_bisimulation<A: AugmentedSemantics>(
    a: &A,
    program: &Program,
    result: &AnalysisResult<A::Elem>,
    max_steps: usize,
    metarule: bool,
) -> CheckReport {
    let trace = interp::run(program, max_steps);
    let mut report = check_progress_along(a, program, result, &trace, metarule);
    let template = result.before(&trace.steps[0].label).clone();
    let exhaustive = template.universe().len() <= BISIMULATION_ENUMERATION_LIMIT;
    let all = if exhaustive { all_facts(&template) } else { Vec::new() };
    for (i, cfg) in trace.steps.iter().enumerate() {
        let c = AugConfig::new(cfg.label.clone(), cfg.state.clone(), result.before(&cfg.label).clone());
        let standard = interp::step(program, cfg);
        let candidates: Vec<Fact<A::Elem>> = if exhaustive {
            all.clone()
        } else {
            sampled_candidates(result, &c)
        };
        for pi_next in &candidates {
            match (aug_step(a, program, &c, pi_next, metarule), &standard) {
                (Ok(next), Ok(Step::Next(s))) if next.standard() == *s => {}
                (Err(_), _) => {}
                (Ok(next), _) => report.failures.push(failure(
                    i,
                    "bisimulation",
                    json!(match &standard {
                        Ok(Step::Next(s)) => format!("{} {}", s.label, s.state),
                        Ok(Step::Terminal) => "terminal".to_string(),
                        Err(f) => f.to_string(),
                    }),
                    json!(format!("{} {}", next.label, next.state)),
                    "augmented step without a matching standard step".to_string(),
                )),
            }
        }
    }
    report
}

fn sampled_candidates<T: Element>(result: &AnalysisResult<T>, c: &AugConfig<T>) -> Vec<Fact<T>> {
    let mut out = vec![
        c.pi.clone(),
        c.pi.complement(),
        c.pi.with_members(std::iter::empty()),
        c.pi.with_members(c.pi.universe().iter().cloned()),
    ];
    out.extend(result.before.values().cloned());
    for t in c.pi.universe().iter() {
        let mut f = c.pi.clone();
        if !f.remove(t) {
            f.insert(t.clone());
        }
        out.push(f);
    }
    out
}

/// Solves, audits, checks Progress and the trace theorems.
pub fn check_analysis<A: AugmentedSemantics>(
    a: &A,
    program: &Program,
    metarule: bool,
    max_steps: usize,
) -> Result<CheckReport, AnalysisError> {
    let spec = a.spec(program)?;
    let result = solver::solve(program, &spec)?;
    Ok(check_result(a, program, &result, metarule, max_steps))
}

/// The combined check against a given (possibly corrupted) result.
pub fn check_result<A: AugmentedSemantics>(
    a: &A,
    program: &Program,
    result: &AnalysisResult<A::Elem>,
    metarule: bool,
    max_steps: usize,
) -> CheckReport {
    let mut report = CheckReport::default();
    if let Ok(spec) = a.spec(program) {
        for v in solver::audit(program, &spec, result) {
            report.failures.push(Failure {
                step: None,
                rule: format!("equation-{}", v.side),
                expected: v.expected.to_json(),
                actual: v.actual.as_ref().map_or(Value::Null, |f| f.to_json()),
                detail: v.to_string(),
            });
        }
    }
    let trace = interp::run(program, max_steps);
    report.merge(check_progress_along(a, program, result, &trace, metarule));
    report.merge(check_trace_theorems(a, program, result, &trace));
    report
}

/// Generic code run for a kind chosen at run time.
pub trait AnalysisVisitor {
    type Output;
    fn visit<A: AugmentedSemantics>(self, analysis: A) -> Self::Output;
}

/// Instantiates the analysis for `kind` and hands it to `visitor`. `observe`
/// only affects live variables.
pub fn dispatch<V: AnalysisVisitor>(kind: AnalysisKind, observe: &BTreeSet<Var>, visitor: V) -> V::Output {
    match kind {
        AnalysisKind::LiveVars => visitor.visit(LiveVariables::observing(observe.iter().cloned())),
        AnalysisKind::VeryBusy => visitor.visit(VeryBusyExpressions),
        AnalysisKind::DefinedVars => visitor.visit(DefinedVariables),
        AnalysisKind::ReachingDefs => visitor.visit(ReachingDefinitions),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn l(s: &str) -> Label {
        Label::new(s)
    }

    fn var_fact<A: Analysis<Elem = Var>>(a: &A, p: &Program, names: &[&str]) -> Fact<Var> {
        Fact::new(a.kind().order(), Arc::new(a.universe(p)), names.iter().map(Var::new)).unwrap()
    }

    fn state(bindings: &[(&str, i64)]) -> State {
        bindings.iter().map(|(v, n)| (Var::new(v), *n)).collect()
    }

    #[test]
    fn lv_read_precondition() {
        let p = parse("l0: y := x\nl1: halt\nl2: done").unwrap();
        let lv = LiveVariables::new();
        let c = AugConfig::new(l("l0"), state(&[("x", 3)]), var_fact(&lv, &p, &["x"]));
        let next = aug_step(&lv, &p, &c, &var_fact(&lv, &p, &[]), false).unwrap();
        assert_eq!(next.state, state(&[("x", 3), ("y", 3)]));

        let c = AugConfig::new(l("l0"), state(&[("x", 3)]), var_fact(&lv, &p, &[]));
        let err = aug_step(&lv, &p, &c, &var_fact(&lv, &p, &[]), false).unwrap_err();
        assert_eq!(err.rule(), "lv-read-live");
        assert!(err.to_string().contains('x'));

        // Undefined reads are standard stuckness, not a prophecy failure.
        let c = AugConfig::new(l("l0"), State::new(), var_fact(&lv, &p, &[]));
        assert_eq!(
            aug_step(&lv, &p, &c, &var_fact(&lv, &p, &[]), false),
            Err(Refusal::Stuck(Fault::UndefinedRead(Var::new("x"))))
        );
    }

    #[test]
    fn lv_threading_and_metarule() {
        let p = parse("l0: x := 1\nl1: halt\nl2: done").unwrap();
        let lv = LiveVariables::new();
        let c = AugConfig::new(l("l1"), state(&[("x", 1)]), var_fact(&lv, &p, &["x"]));
        let empty = var_fact(&lv, &p, &[]);
        assert!(matches!(
            aug_step(&lv, &p, &c, &empty, false),
            Err(Refusal::PredictionInconsistent { rule: "prediction-equal", .. })
        ));
        assert!(aug_step(&lv, &p, &c, &empty, true).is_ok());
    }

    #[test]
    fn vbe_preconditions() {
        let p = parse("l0: x := x + 1\nl1: y := 2\nl2: halt\nl3: done").unwrap();
        let vbe = VeryBusyExpressions;
        let u = Arc::new(vbe.universe(&p));
        let f = |es: Vec<AExp>| Fact::new(vbe.kind().order(), u.clone(), es).unwrap();
        let x1 = AExp::add(AExp::var("x"), AExp::num(1));
        let c = AugConfig::new(l("l2"), state(&[("x", 1)]), f(vec![x1.clone()]));
        assert_eq!(aug_step(&vbe, &p, &c, &f(vec![]), false).unwrap_err().rule(), "vbe-halt");
        // x + 1 reads x but is evaluated by the assignment itself.
        let c = AugConfig::new(l("l0"), state(&[("x", 1)]), f(vec![x1.clone()]));
        assert!(aug_step(&vbe, &p, &c, &f(vec![]), false).is_ok());
        // At l1, x + 1 is not killed and must survive into π'.
        let c = AugConfig::new(l("l1"), state(&[("x", 1)]), f(vec![x1.clone()]));
        assert!(aug_step(&vbe, &p, &c, &f(vec![]), false).is_err());
        assert!(aug_step(&vbe, &p, &c, &f(vec![x1]), false).is_ok());
    }

    #[test]
    fn rd_strong_update_step() {
        let p = parse("l0: x := 0\nl1: skip\nl2: skip\nl3: skip\nl4: skip\nl5: skip\nl6: skip\nl7: x := 1\nl8: halt\nl9: done").unwrap();
        let rd = ReachingDefinitions;
        let u = Arc::new(rd.universe(&p));
        let f = |ls: &[&str]| {
            Fact::new(rd.kind().order(), u.clone(), ls.iter().map(|g| Def::new(Var::new("x"), l(g)))).unwrap()
        };
        let c = AugConfig::new(l("l7"), state(&[("x", 0)]), f(&["l0"]));
        let next = aug_step(&rd, &p, &c, &f(&["l7"]), false).unwrap();
        assert_eq!(next.pi, f(&["l7"]));
        assert!(aug_step(&rd, &p, &c, &f(&["l0"]), false).is_err());
        assert!(aug_step(&rd, &p, &c, &f(&["l0", "l7"]), false).is_ok());
    }

    fn report_for<A: AugmentedSemantics>(a: &A, src: &str) -> CheckReport {
        check_analysis(a, &parse(src).unwrap(), false, 1000).unwrap()
    }

    const LOOP: &str = "l0: i := 3\nl1: s := 0\nl2: if i = 0 then l6\nl3: s := s + i\nl4: i := i - 1\nl5: goto l2\nl6: halt\nl7: done";

    #[test]
    fn solved_results_pass_every_check() {
        for src in [LOOP, "l0: x := 1\nl1: y := x\nl2: halt\nl3: done", "l0: y := x\nl1: halt\nl2: done"] {
            assert!(report_for(&LiveVariables::new(), src).passed(), "{src}");
            assert!(report_for(&VeryBusyExpressions, src).passed(), "{src}");
            assert!(report_for(&DefinedVariables, src).passed(), "{src}");
            assert!(report_for(&ReachingDefinitions, src).passed(), "{src}");
        }
    }

    #[test]
    fn deleting_a_live_read_fails_progress() {
        let p = parse("l0: x := 1\nl1: y := x\nl2: halt\nl3: done").unwrap();
        let lv = LiveVariables::new();
        let mut r = lv.solve(&p).unwrap();
        let mut f = r.before(&l("l1")).clone();
        f.remove(&Var::new("x"));
        r.before.insert(l("l1"), f);
        let report = check_progress(&lv, &p, &r, 100, false);
        assert_eq!(report.failures[0].rule, "lv-read-live");
        assert_eq!(report.failures[0].step, Some(1));
    }

    #[test]
    fn budget_bounded_progress() {
        let p = parse("l0: x := 0\nl1: x := x + 1\nl2: goto l1\nl3: halt\nl4: done").unwrap();
        let r = LiveVariables::new().solve(&p).unwrap();
        let report = check_progress(&LiveVariables::new(), &p, &r, 100, false);
        assert!(report.passed());
        assert_eq!(report.steps_checked, 100);
        assert_eq!(report.trace_outcome, Some(Outcome::BudgetExhausted));
        assert!(report.to_text().contains("budget exhausted"));
    }

    #[test]
    fn preservation_detects_fabricated_states() {
        let p = parse("l0: x := 1\nl1: halt\nl2: done").unwrap();
        let dv = DefinedVariables;
        let r = dv.solve(&p).unwrap();
        let pi0 = dv.initial(r.before(&l("l0")).universe()).unwrap();
        let run = aug_run(&dv, &p, Policy::Analysis(&r), pi0, false, 100);
        assert_eq!(run.outcome, AugOutcome::Done);
        assert!(check_preservation(&p, &run.configs).passed());
        assert!(check_preservation::<Var>(&p, &[]).passed());
        let mut bad = run.configs.clone();
        bad[2].state = state(&[("x", 2)]);
        let report = check_preservation(&p, &bad);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].step, Some(1));
    }

    #[test]
    fn explored_steps_satisfy_preservation() {
        let p = parse("l0: x := 1\nl1: if x = 1 then l3\nl2: y := x\nl3: halt\nl4: done").unwrap();
        for metarule in [false, true] {
            let ex = explore(&LiveVariables::new(), &p, metarule, 10).unwrap();
            assert!(!ex.transitions.is_empty());
            for (a, b) in &ex.transitions {
                assert!(check_preservation(&p, &[a.clone(), b.clone()]).passed());
            }
            let ex = explore(&DefinedVariables, &p, metarule, 10).unwrap();
            for (_, b) in &ex.transitions {
                assert!(b.pi.members().iter().all(|v| b.state.contains(v)));
            }
        }
        assert!(explore(&ReachingDefinitions, &p, false, 3).is_err());
    }

    #[test]
    fn bisimulation_on_small_programs() {
        let p = parse("l0: x := 1\nl1: if x = 1 then l3\nl2: y := x\nl3: halt\nl4: done").unwrap();
        let lv = LiveVariables::new();
        assert!(check_bisimulation(&lv, &p, &lv.solve(&p).unwrap(), 100, false).passed());
        let rd = ReachingDefinitions;
        assert!(check_bisimulation(&rd, &p, &rd.solve(&p).unwrap(), 100, false).passed());
    }

    #[test]
    fn report_serialization() {
        let mut r = CheckReport::default();
        assert_eq!(r.to_json(), json!({"outcome": "pass", "failures": []}));
        r.failures.push(failure(2, "x", json!(["a"]), json!([]), "d".into()));
        assert_eq!(
            r.to_json(),
            json!({"outcome": "fail", "failures": [{"step": 2, "rule": "x", "expected": ["a"], "actual": []}]})
        );
    }

    #[test]
    fn dv_trace_example() {
        let p = parse("l0: x := 1\nl1: y := x\nl2: halt\nl3: done").unwrap();
        let r = DefinedVariables.solve(&p).unwrap();
        let t = interp::run(&p, 100);
        assert_eq!(r.before(&l("l1")).to_string(), "{x}");
        assert!(t.steps[1].state.contains(&Var::new("x")));
        assert!(check_trace_theorems(&DefinedVariables, &p, &r, &t).passed());
    }
}
