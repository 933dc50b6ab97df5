//! Live variables, very busy expressions, defined variables and reaching
//! definitions as equation systems for the solver.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::lattice::{Def, Element, Fact, LatticeOrder};
use crate::solver::{self, AnalysisResult, AnalysisSpec, Direction, SolveError};
use crate::syntax::{AExp, Command, Label, Program, Var, WellFormednessError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisKind {
    LiveVars,
    VeryBusy,
    DefinedVars,
    ReachingDefs,
}

impl AnalysisKind {
    pub const ALL: [AnalysisKind; 4] = [
        AnalysisKind::LiveVars,
        AnalysisKind::VeryBusy,
        AnalysisKind::DefinedVars,
        AnalysisKind::ReachingDefs,
    ];

    /// Short name used on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            AnalysisKind::LiveVars => "lv",
            AnalysisKind::VeryBusy => "vbe",
            AnalysisKind::DefinedVars => "dv",
            AnalysisKind::ReachingDefs => "rd",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnalysisKind::LiveVars => "live-vars",
            AnalysisKind::VeryBusy => "very-busy",
            AnalysisKind::DefinedVars => "defined-vars",
            AnalysisKind::ReachingDefs => "reaching-defs",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            AnalysisKind::LiveVars | AnalysisKind::VeryBusy => Direction::Backward,
            AnalysisKind::DefinedVars | AnalysisKind::ReachingDefs => Direction::Forward,
        }
    }

    pub fn order(self) -> LatticeOrder {
        match self {
            AnalysisKind::LiveVars => LatticeOrder::Subset,
            AnalysisKind::VeryBusy | AnalysisKind::DefinedVars => LatticeOrder::ReverseSubset,
            AnalysisKind::ReachingDefs => LatticeOrder::PointwiseSubset,
        }
    }

    /// Prophecy analyses predict the future; history analyses record the past.
    pub fn is_prophecy(self) -> bool {
        self.direction() == Direction::Backward
    }
}

impl fmt::Display for AnalysisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnalysisKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnalysisKind::ALL
            .into_iter()
            .find(|k| k.short_name() == s || k.name() == s)
            .ok_or_else(|| format!("unknown analysis `{s}` (expected lv, vbe, dv or rd)"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("observed variable {0} does not occur in the program")]
    UnknownObserveVariable(Var),
    #[error("program is not well formed: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidProgram(Vec<WellFormednessError>),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// One of the four analyses, as a family of equation systems indexed by
/// program.
pub trait Analysis: Clone + Send + Sync + 'static {
    type Elem: Element;

    fn kind(&self) -> AnalysisKind;

    fn universe(&self, program: &Program) -> BTreeSet<Self::Elem>;

    /// `f(l, β)` for the command at `l`.
    fn transfer(&self, l: &Label, c: &Command, beta: &Fact<Self::Elem>) -> Fact<Self::Elem>;

    /// Boundary facts, keyed by the labels they anchor to.
    fn boundary(
        &self,
        program: &Program,
        universe: &Arc<BTreeSet<Self::Elem>>,
    ) -> Result<BTreeMap<Label, Fact<Self::Elem>>, AnalysisError>;

    /// The `(D, U)` pair with `f(l, β) = (β − D) ∪ U` on member sets.
    fn defs_uses(
        &self,
        program: &Program,
        l: &Label,
        c: &Command,
    ) -> (BTreeSet<Self::Elem>, BTreeSet<Self::Elem>);

    fn spec(&self, program: &Program) -> Result<AnalysisSpec<Self::Elem>, AnalysisError> {
        let errors = program.validate();
        if !errors.is_empty() {
            return Err(AnalysisError::InvalidProgram(errors));
        }
        let universe = Arc::new(self.universe(program));
        let boundary = self.boundary(program, &universe)?;
        let (this, p) = (self.clone(), program.clone());
        Ok(AnalysisSpec {
            direction: self.kind().direction(),
            order: self.kind().order(),
            universe,
            boundary,
            transfer: Arc::new(move |l, beta| {
                let c = p.command(l).unwrap_or_else(|| panic!("label {l} not in program"));
                this.transfer(l, c, beta)
            }),
        })
    }

    fn solve(&self, program: &Program) -> Result<AnalysisResult<Self::Elem>, AnalysisError> {
        Ok(solver::solve(program, &self.spec(program)?)?)
    }
}

fn extended<T: Element>(beta: &Fact<T>, extra: impl IntoIterator<Item = T>) -> Fact<T> {
    let mut out = beta.clone();
    for t in extra {
        out.insert(t);
    }
    out
}

fn labels_at<'a>(
    program: &'a Program,
    pred: impl Fn(&Command) -> bool + 'a,
) -> impl Iterator<Item = &'a Label> + 'a {
    program
        .commands()
        .iter()
        .filter(move |(_, c)| pred(c))
        .map(|(l, _)| l)
}

/// Live variables. `observe` generalizes the empty fact after `halt` to a
/// set of output variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LiveVariables {
    pub observe: BTreeSet<Var>,
}

impl LiveVariables {
    pub fn new() -> Self {
        LiveVariables::default()
    }

    pub fn observing(observe: impl IntoIterator<Item = Var>) -> Self {
        LiveVariables {
            observe: observe.into_iter().collect(),
        }
    }
}

pub fn transfer_lv(c: &Command, beta: &Fact<Var>) -> Fact<Var> {
    match c {
        Command::Assign(v, e) => {
            let mut out = beta.clone();
            out.remove(v);
            extended(&out, e.variables())
        }
        Command::Branch(b, _) => extended(beta, b.variables()),
        _ => beta.clone(),
    }
}

impl Analysis for LiveVariables {
    type Elem = Var;

    fn kind(&self) -> AnalysisKind {
        AnalysisKind::LiveVars
    }

    fn universe(&self, program: &Program) -> BTreeSet<Var> {
        program.all_variables()
    }

    fn transfer(&self, _l: &Label, c: &Command, beta: &Fact<Var>) -> Fact<Var> {
        transfer_lv(c, beta)
    }

    // Anchored at halt and at done, so the fact handed to done by the halt
    // step is the observe set on both sides.
    fn boundary(
        &self,
        program: &Program,
        universe: &Arc<BTreeSet<Var>>,
    ) -> Result<BTreeMap<Label, Fact<Var>>, AnalysisError> {
        if let Some(v) = self.observe.iter().find(|v| !universe.contains(*v)) {
            return Err(AnalysisError::UnknownObserveVariable(v.clone()));
        }
        let fact = Fact::clamped(LatticeOrder::Subset, universe.clone(), self.observe.clone());
        Ok(labels_at(program, |c| matches!(c, Command::Halt | Command::Done))
            .map(|l| (l.clone(), fact.clone()))
            .collect())
    }

    fn defs_uses(&self, _p: &Program, _l: &Label, c: &Command) -> (BTreeSet<Var>, BTreeSet<Var>) {
        match c {
            Command::Assign(v, e) => ([v.clone()].into(), e.variables()),
            Command::Branch(b, _) => (BTreeSet::new(), b.variables()),
            _ => Default::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VeryBusyExpressions;

pub fn transfer_vbe(c: &Command, beta: &Fact<AExp>) -> Fact<AExp> {
    match c {
        Command::Assign(v, e) => {
            let mut out = beta.clone();
            out.retain(|e2| !e2.reads(v));
            extended(&out, e.subexpressions())
        }
        Command::Branch(b, _) => extended(beta, b.subexpressions()),
        _ => beta.clone(),
    }
}

impl Analysis for VeryBusyExpressions {
    type Elem = AExp;

    fn kind(&self) -> AnalysisKind {
        AnalysisKind::VeryBusy
    }

    fn universe(&self, program: &Program) -> BTreeSet<AExp> {
        program.all_subexpressions()
    }

    fn transfer(&self, _l: &Label, c: &Command, beta: &Fact<AExp>) -> Fact<AExp> {
        transfer_vbe(c, beta)
    }

    fn boundary(
        &self,
        program: &Program,
        universe: &Arc<BTreeSet<AExp>>,
    ) -> Result<BTreeMap<Label, Fact<AExp>>, AnalysisError> {
        let empty = Fact::empty(LatticeOrder::ReverseSubset, universe.clone());
        Ok(labels_at(program, |c| matches!(c, Command::Done))
            .map(|l| (l.clone(), empty.clone()))
            .collect())
    }

    fn defs_uses(&self, p: &Program, _l: &Label, c: &Command) -> (BTreeSet<AExp>, BTreeSet<AExp>) {
        match c {
            Command::Assign(v, e) => {
                let killed = p.all_subexpressions().into_iter().filter(|e2| e2.reads(v));
                (killed.collect(), e.subexpressions())
            }
            Command::Branch(b, _) => (BTreeSet::new(), b.subexpressions()),
            _ => Default::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DefinedVariables;

pub fn transfer_dv(c: &Command, beta: &Fact<Var>) -> Fact<Var> {
    match c {
        Command::Assign(v, _) => extended(beta, [v.clone()]),
        _ => beta.clone(),
    }
}

impl Analysis for DefinedVariables {
    type Elem = Var;

    fn kind(&self) -> AnalysisKind {
        AnalysisKind::DefinedVars
    }

    fn universe(&self, program: &Program) -> BTreeSet<Var> {
        program.all_variables()
    }

    fn transfer(&self, _l: &Label, c: &Command, beta: &Fact<Var>) -> Fact<Var> {
        transfer_dv(c, beta)
    }

    fn boundary(
        &self,
        program: &Program,
        universe: &Arc<BTreeSet<Var>>,
    ) -> Result<BTreeMap<Label, Fact<Var>>, AnalysisError> {
        let empty = Fact::empty(LatticeOrder::ReverseSubset, universe.clone());
        Ok(program.first().map(|l| (l.clone(), empty)).into_iter().collect())
    }

    fn defs_uses(&self, _p: &Program, _l: &Label, c: &Command) -> (BTreeSet<Var>, BTreeSet<Var>) {
        match c {
            Command::Assign(v, _) => (BTreeSet::new(), [v.clone()].into()),
            _ => Default::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReachingDefinitions;

pub fn transfer_rd(l: &Label, c: &Command, beta: &Fact<Def>) -> Fact<Def> {
    match c {
        Command::Assign(v, _) => beta.strong_update(v, l),
        _ => beta.clone(),
    }
}

impl Analysis for ReachingDefinitions {
    type Elem = Def;

    fn kind(&self) -> AnalysisKind {
        AnalysisKind::ReachingDefs
    }

    fn universe(&self, program: &Program) -> BTreeSet<Def> {
        let labels: Vec<Label> = program.labels().cloned().collect();
        program
            .all_variables()
            .into_iter()
            .flat_map(|v| labels.iter().map(move |l| Def::new(v.clone(), l.clone())))
            .collect()
    }

    fn transfer(&self, l: &Label, c: &Command, beta: &Fact<Def>) -> Fact<Def> {
        transfer_rd(l, c, beta)
    }

    fn boundary(
        &self,
        program: &Program,
        universe: &Arc<BTreeSet<Def>>,
    ) -> Result<BTreeMap<Label, Fact<Def>>, AnalysisError> {
        let empty = Fact::empty(LatticeOrder::PointwiseSubset, universe.clone());
        Ok(program.first().map(|l| (l.clone(), empty)).into_iter().collect())
    }

    fn defs_uses(&self, p: &Program, l: &Label, c: &Command) -> (BTreeSet<Def>, BTreeSet<Def>) {
        match c {
            Command::Assign(v, _) => {
                let killed = p.labels().map(|g| Def::new(v.clone(), g.clone()));
                (killed.collect(), [Def::new(v.clone(), l.clone())].into())
            }
            _ => Default::default(),
        }
    }
}

/// Labels whose command reads a variable that is not live before it.
/// Empty for every correctly solved live-variables result.
pub fn unlive_reads(program: &Program, lv: &AnalysisResult<Var>) -> Vec<(Label, Var)> {
    let mut out = Vec::new();
    for (l, c) in program.commands() {
        for v in c.variables() {
            if !lv.before(l).contains(&v) {
                out.push((l.clone(), v));
            }
        }
    }
    out
}

/// `(l, e′)` where `l: v := e`, `e′` reads `v`, `e′ ∉ subexpressions(e)` and
/// yet `e′` is very busy before `l`. Empty for every correct result.
pub fn killed_yet_busy(program: &Program, vbe: &AnalysisResult<AExp>) -> Vec<(Label, AExp)> {
    let mut out = Vec::new();
    for (l, c) in program.commands() {
        if let Command::Assign(v, e) = c {
            let subs = e.subexpressions();
            for e2 in vbe.before(l).members() {
                if e2.reads(v) && !subs.contains(e2) {
                    out.push((l.clone(), e2.clone()));
                }
            }
        }
    }
    out
}
