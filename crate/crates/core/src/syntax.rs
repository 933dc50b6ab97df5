//! Abstract syntax of the labeled imperative language and the structural
//! functions (read variables, subexpressions, control flow) that every
//! analysis is defined in terms of.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

/// A program variable.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: impl AsRef<str>) -> Self {
        Var(Arc::from(name.as_ref()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Var {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

/// A command label. Labels order lexicographically by name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(Arc<str>);

impl Label {
    pub fn new(name: impl AsRef<str>) -> Self {
        Label(Arc::from(name.as_ref()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
        }
    }
}

/// Arithmetic expressions. Structural equality is the identity used for
/// expression sets (no algebraic normalization).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AExp {
    Num(i64),
    Var(Var),
    Bin(ArithOp, Box<AExp>, Box<AExp>),
}

impl AExp {
    pub fn num(n: i64) -> Self {
        AExp::Num(n)
    }

    pub fn var(name: &str) -> Self {
        AExp::Var(Var::new(name))
    }

    pub fn bin(op: ArithOp, lhs: AExp, rhs: AExp) -> Self {
        AExp::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn add(lhs: AExp, rhs: AExp) -> Self {
        AExp::bin(ArithOp::Add, lhs, rhs)
    }

    pub fn sub(lhs: AExp, rhs: AExp) -> Self {
        AExp::bin(ArithOp::Sub, lhs, rhs)
    }

    pub fn mul(lhs: AExp, rhs: AExp) -> Self {
        AExp::bin(ArithOp::Mul, lhs, rhs)
    }

    /// Variables read by this expression.
    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<Var>) {
        match self {
            AExp::Num(_) => {}
            AExp::Var(v) => {
                out.insert(v.clone());
            }
            AExp::Bin(_, l, r) => {
                l.collect_variables(out);
                r.collect_variables(out);
            }
        }
    }

    /// Every node of the expression tree, including the expression itself,
    /// its literals and its variables.
    pub fn subexpressions(&self) -> BTreeSet<AExp> {
        let mut out = BTreeSet::new();
        self.collect_subexpressions(&mut out);
        out
    }

    fn collect_subexpressions(&self, out: &mut BTreeSet<AExp>) {
        out.insert(self.clone());
        if let AExp::Bin(_, l, r) = self {
            l.collect_subexpressions(out);
            r.collect_subexpressions(out);
        }
    }

    pub fn reads(&self, v: &Var) -> bool {
        match self {
            AExp::Num(_) => false,
            AExp::Var(w) => w == v,
            AExp::Bin(_, l, r) => l.reads(v) || r.reads(v),
        }
    }

    /// Replaces every read of `v` with the literal `n`.
    pub fn substitute(&self, v: &Var, n: i64) -> AExp {
        match self {
            AExp::Var(w) if w == v => AExp::Num(n),
            AExp::Num(_) | AExp::Var(_) => self.clone(),
            AExp::Bin(op, l, r) => AExp::bin(*op, l.substitute(v, n), r.substitute(v, n)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Leq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Leq => "<=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BExp {
    True,
    False,
    Cmp(CmpOp, AExp, AExp),
    Not(Box<BExp>),
    And(Box<BExp>, Box<BExp>),
    Or(Box<BExp>, Box<BExp>),
}

impl BExp {
    pub fn cmp(op: CmpOp, lhs: AExp, rhs: AExp) -> Self {
        BExp::Cmp(op, lhs, rhs)
    }

    pub fn not(b: BExp) -> Self {
        BExp::Not(Box::new(b))
    }

    pub fn and(l: BExp, r: BExp) -> Self {
        BExp::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: BExp, r: BExp) -> Self {
        BExp::Or(Box::new(l), Box::new(r))
    }

    /// Arithmetic operands of every comparison, left to right.
    pub fn operands(&self) -> Vec<&AExp> {
        let mut out = Vec::new();
        self.collect_operands(&mut out);
        out
    }

    fn collect_operands<'a>(&'a self, out: &mut Vec<&'a AExp>) {
        match self {
            BExp::True | BExp::False => {}
            BExp::Cmp(_, l, r) => {
                out.push(l);
                out.push(r);
            }
            BExp::Not(b) => b.collect_operands(out),
            BExp::And(l, r) | BExp::Or(l, r) => {
                l.collect_operands(out);
                r.collect_operands(out);
            }
        }
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        self.operands().into_iter().flat_map(AExp::variables).collect()
    }

    /// Arithmetic subexpressions only; boolean nodes are not members of the
    /// expression universe.
    pub fn subexpressions(&self) -> BTreeSet<AExp> {
        self.operands()
            .into_iter()
            .flat_map(AExp::subexpressions)
            .collect()
    }

    pub fn substitute(&self, v: &Var, n: i64) -> BExp {
        match self {
            BExp::True | BExp::False => self.clone(),
            BExp::Cmp(op, l, r) => BExp::Cmp(*op, l.substitute(v, n), r.substitute(v, n)),
            BExp::Not(b) => BExp::not(b.substitute(v, n)),
            BExp::And(l, r) => BExp::and(l.substitute(v, n), r.substitute(v, n)),
            BExp::Or(l, r) => BExp::or(l.substitute(v, n), r.substitute(v, n)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    Skip,
    Assign(Var, AExp),
    Branch(BExp, Label),
    Goto(Label),
    Halt,
    Done,
}

impl Command {
    pub fn assign(v: &str, e: AExp) -> Self {
        Command::Assign(Var::new(v), e)
    }

    pub fn branch(b: BExp, target: &str) -> Self {
        Command::Branch(b, Label::new(target))
    }

    pub fn goto(target: &str) -> Self {
        Command::Goto(Label::new(target))
    }

    /// Variables the command reads. The target of an assignment is a write.
    pub fn variables(&self) -> BTreeSet<Var> {
        match self {
            Command::Assign(_, e) => e.variables(),
            Command::Branch(b, _) => b.variables(),
            _ => BTreeSet::new(),
        }
    }

    pub fn subexpressions(&self) -> BTreeSet<AExp> {
        match self {
            Command::Assign(_, e) => e.subexpressions(),
            Command::Branch(b, _) => b.subexpressions(),
            _ => BTreeSet::new(),
        }
    }

    pub fn assigned(&self) -> Option<&Var> {
        match self {
            Command::Assign(v, _) => Some(v),
            _ => None,
        }
    }

    pub fn target(&self) -> Option<&Label> {
        match self {
            Command::Branch(_, g) | Command::Goto(g) => Some(g),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum WellFormednessError {
    #[error("duplicate label {0}")]
    DuplicateLabel(Label),
    #[error("{at}: jump target {target} is not a label of the program")]
    MissingTarget { at: Label, target: Label },
    #[error("{0}: halt must be immediately followed by done")]
    HaltNotFollowedByDone(Label),
    #[error("program must end with a done command")]
    MissingTerminalDone,
    #[error("{0}: done may only appear as the final command")]
    MisplacedDone(Label),
}

impl WellFormednessError {
    /// Label the error is attached to, if any.
    pub fn label(&self) -> Option<&Label> {
        match self {
            WellFormednessError::DuplicateLabel(l)
            | WellFormednessError::HaltNotFollowedByDone(l)
            | WellFormednessError::MisplacedDone(l) => Some(l),
            WellFormednessError::MissingTarget { at, .. } => Some(at),
            WellFormednessError::MissingTerminalDone => None,
        }
    }

    pub fn rule(&self) -> &'static str {
        match self {
            WellFormednessError::DuplicateLabel(_) => "duplicate-label",
            WellFormednessError::MissingTarget { .. } => "missing-target",
            WellFormednessError::HaltNotFollowedByDone(_) => "halt-not-followed-by-done",
            WellFormednessError::MissingTerminalDone => "missing-terminal-done",
            WellFormednessError::MisplacedDone(_) => "misplaced-done",
        }
    }
}

/// A sequence of uniquely labeled commands together with its derived
/// control-flow maps.
#[derive(Clone, Debug)]
pub struct Program {
    commands: Vec<(Label, Command)>,
    index: HashMap<Label, usize>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.commands == other.commands
    }
}

impl Eq for Program {}

impl Program {
    /// Builds a program without checking well-formedness. Use
    /// [`Program::checked`] or [`Program::validate`] before analysing it.
    pub fn new(commands: Vec<(Label, Command)>) -> Self {
        let mut index = HashMap::with_capacity(commands.len());
        for (i, (l, _)) in commands.iter().enumerate() {
            index.entry(l.clone()).or_insert(i);
        }
        Program { commands, index }
    }

    pub fn checked(commands: Vec<(Label, Command)>) -> Result<Self, Vec<WellFormednessError>> {
        let p = Program::new(commands);
        let errors = p.validate();
        if errors.is_empty() {
            Ok(p)
        } else {
            Err(errors)
        }
    }

    /// Convenience constructor from `(label, command)` pairs.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Command)>) -> Self {
        Program::new(pairs.into_iter().map(|(l, c)| (Label::new(l), c)).collect())
    }

    pub fn validate(&self) -> Vec<WellFormednessError> {
        let mut errors = Vec::new();
        let mut seen = BTreeSet::new();
        for (l, _) in &self.commands {
            if !seen.insert(l) {
                errors.push(WellFormednessError::DuplicateLabel(l.clone()));
            }
        }
        let last = self.commands.len().checked_sub(1);
        for (i, (l, c)) in self.commands.iter().enumerate() {
            if let Some(g) = c.target() {
                if !self.index.contains_key(g) {
                    errors.push(WellFormednessError::MissingTarget {
                        at: l.clone(),
                        target: g.clone(),
                    });
                }
            }
            match c {
                Command::Halt => {
                    if !matches!(self.commands.get(i + 1), Some((_, Command::Done))) {
                        errors.push(WellFormednessError::HaltNotFollowedByDone(l.clone()));
                    }
                }
                Command::Done if Some(i) != last => {
                    errors.push(WellFormednessError::MisplacedDone(l.clone()));
                }
                _ => {}
            }
        }
        if !matches!(self.commands.last(), Some((_, Command::Done))) {
            errors.push(WellFormednessError::MissingTerminalDone);
        }
        errors
    }

    pub fn commands(&self) -> &[(Label, Command)] {
        &self.commands
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.commands.iter().map(|(l, _)| l)
    }

    /// Labels in lexicographic order.
    pub fn sorted_labels(&self) -> Vec<Label> {
        let mut ls: Vec<Label> = self.labels().cloned().collect();
        ls.sort();
        ls
    }

    pub fn contains(&self, l: &Label) -> bool {
        self.index.contains_key(l)
    }

    pub fn position(&self, l: &Label) -> Option<usize> {
        self.index.get(l).copied()
    }

    pub fn command(&self, l: &Label) -> Option<&Command> {
        self.index.get(l).map(|&i| &self.commands[i].1)
    }

    pub fn first(&self) -> Option<&Label> {
        self.commands.first().map(|(l, _)| l)
    }

    /// Label of the next command in listing order.
    pub fn next(&self, l: &Label) -> Option<&Label> {
        let i = *self.index.get(l)?;
        self.commands.get(i + 1).map(|(l, _)| l)
    }

    pub fn successors(&self, l: &Label) -> Result<BTreeSet<Label>, UnknownLabel> {
        let c = self.command(l).ok_or_else(|| UnknownLabel(l.clone()))?;
        let mut out = BTreeSet::new();
        match c {
            Command::Assign(..) | Command::Skip | Command::Halt => {
                out.extend(self.next(l).cloned());
            }
            Command::Goto(g) => {
                out.insert(g.clone());
            }
            Command::Branch(_, g) => {
                out.extend(self.next(l).cloned());
                out.insert(g.clone());
            }
            Command::Done => {}
        }
        Ok(out)
    }

    pub fn predecessors(&self, l: &Label) -> Result<BTreeSet<Label>, UnknownLabel> {
        if !self.contains(l) {
            return Err(UnknownLabel(l.clone()));
        }
        Ok(self.control_flow().preds.remove(l).unwrap_or_default())
    }

    /// Successor and predecessor maps for every label.
    pub fn control_flow(&self) -> ControlFlow {
        let mut succs = BTreeMap::new();
        let mut preds: BTreeMap<Label, BTreeSet<Label>> =
            self.labels().map(|l| (l.clone(), BTreeSet::new())).collect();
        for l in self.labels() {
            let ss = self.successors(l).unwrap_or_default();
            for s in &ss {
                if let Some(p) = preds.get_mut(s) {
                    p.insert(l.clone());
                }
            }
            succs.insert(l.clone(), ss);
        }
        ControlFlow { succs, preds }
    }

    /// Labels reachable from `first` by following successors.
    pub fn reachable(&self) -> BTreeSet<Label> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<Label> = self.first().cloned().into_iter().collect();
        while let Some(l) = stack.pop() {
            if seen.insert(l.clone()) {
                stack.extend(self.successors(&l).unwrap_or_default());
            }
        }
        seen
    }

    /// Every variable mentioned by the program, read or written.
    pub fn all_variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for (_, c) in &self.commands {
            out.extend(c.variables());
            out.extend(c.assigned().cloned());
        }
        out
    }

    pub fn all_subexpressions(&self) -> BTreeSet<AExp> {
        self.commands
            .iter()
            .flat_map(|(_, c)| c.subexpressions())
            .collect()
    }

    /// Returns a copy with the command at `l` replaced.
    pub fn with_command(&self, l: &Label, c: Command) -> Program {
        let mut commands = self.commands.clone();
        if let Some(&i) = self.index.get(l) {
            commands[i].1 = c;
        }
        Program::new(commands)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown label {0}")]
pub struct UnknownLabel(pub Label);

#[derive(Clone, Debug, Default)]
pub struct ControlFlow {
    pub succs: BTreeMap<Label, BTreeSet<Label>>,
    pub preds: BTreeMap<Label, BTreeSet<Label>>,
}
