//! Standard small-step semantics `<l, σ> → <l', σ'>`.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::syntax::{AExp, ArithOp, BExp, CmpOp, Command, Label, Program, Var};

pub const DEFAULT_MAX_STEPS: usize = 100_000;

/// Variable bindings. Unbound variables are undefined, not zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct State(BTreeMap<Var, i64>);

impl State {
    pub fn new() -> Self {
        State::default()
    }

    pub fn get(&self, v: &Var) -> Option<i64> {
        self.0.get(v).copied()
    }

    pub fn contains(&self, v: &Var) -> bool {
        self.0.contains_key(v)
    }

    pub fn with(&self, v: Var, n: i64) -> State {
        let mut next = self.0.clone();
        next.insert(v, n);
        State(next)
    }

    pub fn domain(&self) -> impl Iterator<Item = &Var> {
        self.0.keys()
    }

    pub fn bindings(&self) -> impl Iterator<Item = (&Var, i64)> {
        self.0.iter().map(|(v, n)| (v, *n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bindings restricted to `vars`.
    pub fn restrict<'a>(&self, vars: impl IntoIterator<Item = &'a Var>) -> BTreeMap<Var, i64> {
        vars.into_iter()
            .filter_map(|v| self.get(v).map(|n| (v.clone(), n)))
            .collect()
    }
}

impl FromIterator<(Var, i64)> for State {
    fn from_iter<I: IntoIterator<Item = (Var, i64)>>(iter: I) -> Self {
        State(iter.into_iter().collect())
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, n)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}={n}")?;
        }
        f.write_str("}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Config {
    pub label: Label,
    pub state: State,
}

/// Why evaluation or a step could not proceed.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Fault {
    #[error("read of undefined {0}")]
    UndefinedRead(Var),
    #[error("arithmetic overflow")]
    Overflow,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Next(Config),
    /// The configuration is at a `done` command.
    Terminal,
}

pub fn eval_a(e: &AExp, state: &State) -> Result<i64, Fault> {
    eval_a_with(e, state, &mut |_| Ok(()))
}

/// Evaluates `e`, calling `on_read` for every variable read in evaluation
/// order before its value is looked up. The hook can veto a read.
pub fn eval_a_with<E>(
    e: &AExp,
    state: &State,
    on_read: &mut impl FnMut(&Var) -> Result<(), E>,
) -> Result<i64, E>
where
    E: From<Fault>,
{
    match e {
        AExp::Num(n) => Ok(*n),
        AExp::Var(v) => {
            let n = state.get(v).ok_or_else(|| Fault::UndefinedRead(v.clone()))?;
            on_read(v)?;
            Ok(n)
        }
        AExp::Bin(op, l, r) => {
            let a = eval_a_with(l, state, on_read)?;
            let b = eval_a_with(r, state, on_read)?;
            let n = match op {
                ArithOp::Add => a.checked_add(b),
                ArithOp::Sub => a.checked_sub(b),
                ArithOp::Mul => a.checked_mul(b),
            };
            Ok(n.ok_or(Fault::Overflow)?)
        }
    }
}

pub fn eval_b(b: &BExp, state: &State) -> Result<bool, Fault> {
    eval_b_with(b, state, &mut |_| Ok(()))
}

/// Both operands of `and`/`or` are always evaluated.
pub fn eval_b_with<E>(
    b: &BExp,
    state: &State,
    on_read: &mut impl FnMut(&Var) -> Result<(), E>,
) -> Result<bool, E>
where
    E: From<Fault>,
{
    Ok(match b {
        BExp::True => true,
        BExp::False => false,
        BExp::Cmp(op, l, r) => {
            let a = eval_a_with(l, state, on_read)?;
            let c = eval_a_with(r, state, on_read)?;
            match op {
                CmpOp::Eq => a == c,
                CmpOp::Leq => a <= c,
            }
        }
        BExp::Not(inner) => !eval_b_with(inner, state, on_read)?,
        BExp::And(l, r) => {
            let a = eval_b_with(l, state, on_read)?;
            let c = eval_b_with(r, state, on_read)?;
            a && c
        }
        BExp::Or(l, r) => {
            let a = eval_b_with(l, state, on_read)?;
            let c = eval_b_with(r, state, on_read)?;
            a || c
        }
    })
}

/// Successor of a configuration under the standard rules.
///
/// Panics if `config.label` is not a label of `program` or the program is
/// missing a fall-through command; both are ruled out by validation.
pub fn step(program: &Program, config: &Config) -> Result<Step, Fault> {
    step_with(program, config, &mut |_| Ok(()))
}

pub(crate) fn step_with<E>(
    program: &Program,
    config: &Config,
    on_read: &mut impl FnMut(&Var) -> Result<(), E>,
) -> Result<Step, E>
where
    E: From<Fault>,
{
    let l = &config.label;
    let cmd = program
        .command(l)
        .unwrap_or_else(|| panic!("label {l} not in program"));
    let next = || {
        program
            .next(l)
            .cloned()
            .unwrap_or_else(|| panic!("{l} has no next command"))
    };
    let to = |label: Label, state: State| Ok(Step::Next(Config { label, state }));
    match cmd {
        Command::Done => Ok(Step::Terminal),
        Command::Assign(v, e) => {
            let n = eval_a_with(e, &config.state, on_read)?;
            to(next(), config.state.with(v.clone(), n))
        }
        Command::Branch(b, g) => {
            if eval_b_with(b, &config.state, on_read)? {
                to(g.clone(), config.state.clone())
            } else {
                to(next(), config.state.clone())
            }
        }
        Command::Goto(g) => to(g.clone(), config.state.clone()),
        Command::Skip => to(next(), config.state.clone()),
        Command::Halt => {
            let n = next();
            assert!(
                matches!(program.command(&n), Some(Command::Done)),
                "halt at {l} not followed by done"
            );
            to(n, config.state.clone())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Stuck { label: Label, var: Var },
    Overflow { label: Label },
    BudgetExhausted,
}

impl Outcome {
    pub fn class(&self) -> &'static str {
        match self {
            Outcome::Done => "done",
            Outcome::Stuck { .. } => "stuck",
            Outcome::Overflow { .. } => "overflow",
            Outcome::BudgetExhausted => "budget-exhausted",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Done => f.write_str("done"),
            Outcome::Stuck { label, var } => write!(f, "stuck at {label}: read of undefined {var}"),
            Outcome::Overflow { label } => write!(f, "arithmetic overflow at {label}"),
            Outcome::BudgetExhausted => f.write_str("budget exhausted"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub steps: Vec<Config>,
    pub outcome: Outcome,
}

impl Trace {
    pub fn last(&self) -> &Config {
        self.steps.last().expect("trace has an initial configuration")
    }

    pub fn transitions(&self) -> usize {
        self.steps.len() - 1
    }

    /// One line per configuration followed by the outcome.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.steps.iter().enumerate() {
            out.push_str(&format!("{i}: {} {}\n", c.label, c.state));
        }
        out.push_str(&format!("outcome: {}\n", self.outcome));
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let outcome = match &self.outcome {
            Outcome::Done | Outcome::BudgetExhausted => {
                serde_json::json!({ "kind": self.outcome.class() })
            }
            Outcome::Stuck { label, var } => {
                serde_json::json!({ "kind": "stuck", "label": label, "var": var })
            }
            Outcome::Overflow { label } => {
                serde_json::json!({ "kind": "overflow", "label": label })
            }
        };
        serde_json::json!({ "outcome": outcome, "steps": self.steps })
    }
}

/// Runs from `<first(P), ∅>` for at most `max_steps` transitions.
pub fn run(program: &Program, max_steps: usize) -> Trace {
    let first = program.first().expect("program has a first command").clone();
    let mut steps = vec![Config {
        label: first,
        state: State::new(),
    }];
    loop {
        let current = steps.last().unwrap();
        let result = step(program, current);
        let outcome = match result {
            Ok(Step::Terminal) => Outcome::Done,
            Err(Fault::UndefinedRead(var)) => Outcome::Stuck {
                label: current.label.clone(),
                var,
            },
            Err(Fault::Overflow) => Outcome::Overflow {
                label: current.label.clone(),
            },
            Ok(Step::Next(_)) if steps.len() > max_steps => Outcome::BudgetExhausted,
            Ok(Step::Next(c)) => {
                steps.push(c);
                continue;
            }
        };
        return Trace { steps, outcome };
    }
}
