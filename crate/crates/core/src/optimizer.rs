//! Dead-store elimination and constant propagation, each justified by
//! analysis facts recorded in a [`RewriteLog`].

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};

use crate::analyses::{
    Analysis, AnalysisError, DefinedVariables, LiveVariables, ReachingDefinitions,
};
use crate::interp::{self, Outcome};
use crate::syntax::{AExp, BExp, Command, Label, Program, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewriteKind {
    DeadStore,
    ConstProp,
}

impl fmt::Display for RewriteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewriteKind::DeadStore => "dead-store",
            RewriteKind::ConstProp => "const-prop",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RewriteEntry {
    /// Fixpoint round in which the rewrite happened, from 1.
    pub round: usize,
    pub label: Label,
    pub kind: RewriteKind,
    pub from: String,
    pub to: String,
    /// The analysis facts that license the rewrite.
    pub justification: Value,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RewriteLog {
    pub entries: Vec<RewriteEntry>,
}

impl RewriteLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn to_json(&self) -> Value {
        json!({ "rewrites": self.entries })
    }

    pub fn to_text(&self) -> String {
        if self.entries.is_empty() {
            return "no rewrites\n".to_string();
        }
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "round {} {}: {} {} => {}  {}\n",
                e.round, e.label, e.kind, e.from, e.to, e.justification
            ));
        }
        out
    }
}

fn names<'a>(vs: impl IntoIterator<Item = &'a Var>) -> Vec<String> {
    vs.into_iter().map(|v| v.to_string()).collect()
}

/// Replaces `l: v := e` with `l: skip` whenever `v` is dead after `l` and
/// every variable of `e` is defined before `l`. Repeats until no store is
/// dead, since removing one store can kill the stores feeding it.
pub fn dead_store_elim(
    program: &Program,
    observe: &BTreeSet<Var>,
) -> Result<(Program, RewriteLog), AnalysisError> {
    LiveVariables::observing(observe.iter().cloned()).spec(program)?;
    let mut current = program.clone();
    let mut log = RewriteLog::default();
    for round in 1.. {
        // A skipped store can take the last mention of an observed variable
        // with it; such a variable is unconstrained from then on.
        let lv = LiveVariables::observing(
            observe
                .iter()
                .filter(|v| current.all_variables().contains(*v))
                .cloned(),
        )
        .solve(&current)?;
        let dv = DefinedVariables.solve(&current)?;
        let mut next = current.clone();
        let mut changed = false;
        for (l, c) in current.commands() {
            let Command::Assign(v, e) = c else { continue };
            let (after, before) = (lv.after(l), dv.before(l));
            let reads = e.variables();
            if !after.contains(v) && reads.iter().all(|x| before.contains(x)) {
                next = next.with_command(l, Command::Skip);
                changed = true;
                log.entries.push(RewriteEntry {
                    round,
                    label: l.clone(),
                    kind: RewriteKind::DeadStore,
                    from: c.to_string(),
                    to: Command::Skip.to_string(),
                    justification: json!({
                        "live-after": after.to_json(),
                        "defined-before": before.to_json(),
                        "reads": names(&reads),
                    }),
                });
            }
        }
        if !changed {
            break;
        }
        current = next;
    }
    Ok((current, log))
}

/// The literal every reaching definition of `v` at `l` assigns, if there is
/// exactly one such literal and `v` is known defined.
fn constant_at(
    program: &Program,
    rd: &crate::solver::AnalysisResult<crate::lattice::Def>,
    dv: &crate::solver::AnalysisResult<Var>,
    l: &Label,
    v: &Var,
) -> Option<(i64, BTreeSet<Label>)> {
    if !dv.before(l).contains(v) {
        return None;
    }
    let defs = rd.before(l).defs_of(v);
    let mut value = None;
    for g in &defs {
        let n = match program.command(g) {
            Some(Command::Assign(w, AExp::Num(n))) if w == v => *n,
            _ => return None,
        };
        if value.is_some_and(|m| m != n) {
            return None;
        }
        value = Some(n);
    }
    value.map(|n| (n, defs))
}

fn substitute_reads(c: &Command, v: &Var, n: i64) -> Command {
    match c {
        Command::Assign(w, e) => Command::Assign(w.clone(), e.substitute(v, n)),
        Command::Branch(b, g) => Command::Branch(BExp::substitute(b, v, n), g.clone()),
        other => other.clone(),
    }
}

/// Replaces reads of `v` at `l` by `n` when `v` is defined at `l` and all of
/// its reaching definitions assign the same literal `n`. Re-solves and repeats
/// until nothing changes.
pub fn const_prop(program: &Program) -> Result<(Program, RewriteLog), AnalysisError> {
    let mut current = program.clone();
    let mut log = RewriteLog::default();
    for round in 1.. {
        let rd = ReachingDefinitions.solve(&current)?;
        let dv = DefinedVariables.solve(&current)?;
        let mut next = current.clone();
        let mut changed = false;
        for (l, c) in current.commands() {
            let mut rewritten = c.clone();
            let mut facts = serde_json::Map::new();
            for v in c.variables() {
                if let Some((n, defs)) = constant_at(&current, &rd, &dv, l, &v) {
                    rewritten = substitute_reads(&rewritten, &v, n);
                    facts.insert(
                        v.to_string(),
                        json!({
                            "value": n,
                            "reaching": defs.iter().map(|g| g.to_string()).collect::<Vec<_>>(),
                            "defined-before": dv.before(l).to_json(),
                        }),
                    );
                }
            }
            if rewritten != *c {
                log.entries.push(RewriteEntry {
                    round,
                    label: l.clone(),
                    kind: RewriteKind::ConstProp,
                    from: c.to_string(),
                    to: rewritten.to_string(),
                    justification: Value::Object(facts),
                });
                next = next.with_command(l, rewritten);
                changed = true;
            }
        }
        if !changed {
            break;
        }
        current = next;
    }
    Ok((current, log))
}

/// How an original and a transformed program compare when run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Agree,
    /// The comparison falls outside what the pass promises.
    Excluded(String),
    Disagree(String),
}

impl Verdict {
    pub fn is_disagreement(&self) -> bool {
        matches!(self, Verdict::Disagree(_))
    }
}

fn same_class(a: &Outcome, b: &Outcome) -> Result<(), String> {
    let ok = match (a, b) {
        (Outcome::Stuck { label: l1, .. }, Outcome::Stuck { label: l2, .. }) => l1 == l2,
        (Outcome::Overflow { label: l1 }, Outcome::Overflow { label: l2 }) => l1 == l2,
        _ => a.class() == b.class(),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("outcome {a} became {b}"))
    }
}

/// Differential check for dead-store elimination: same outcome class and
/// stuck label, and on completion the same values of `observe`.
///
/// A removed store may have been the computation that overflowed, which the
/// liveness argument does not account for; such runs are excluded.
pub fn compare_dead_store(
    original: &Program,
    transformed: &Program,
    observe: &BTreeSet<Var>,
    max_steps: usize,
) -> Verdict {
    let a = interp::run(original, max_steps);
    if let Outcome::Overflow { label } = &a.outcome {
        return Verdict::Excluded(format!("original overflows at {label}"));
    }
    let b = interp::run(transformed, max_steps);
    if let Err(e) = same_class(&a.outcome, &b.outcome) {
        return Verdict::Disagree(e);
    }
    if a.outcome == Outcome::Done {
        let (sa, sb) = (a.last().state.restrict(observe), b.last().state.restrict(observe));
        if sa != sb {
            return Verdict::Disagree(format!("observed state {sa:?} became {sb:?}"));
        }
    }
    Verdict::Agree
}

/// Differential check for constant propagation: identical outcome and
/// identical final state.
pub fn compare_const_prop(original: &Program, transformed: &Program, max_steps: usize) -> Verdict {
    let a = interp::run(original, max_steps);
    let b = interp::run(transformed, max_steps);
    if let Err(e) = same_class(&a.outcome, &b.outcome) {
        return Verdict::Disagree(e);
    }
    if a.outcome != b.outcome {
        return Verdict::Disagree(format!("outcome {} became {}", a.outcome, b.outcome));
    }
    if a.last().state != b.last().state {
        return Verdict::Disagree(format!("final state {} became {}", a.last().state, b.last().state));
    }
    Verdict::Agree
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse, print};

    fn vars(names: &[&str]) -> BTreeSet<Var> {
        names.iter().map(Var::new).collect()
    }

    const STORES: &str = "l0: x := 1\nl1: x := 2\nl2: y := x\nl3: halt\nl4: done";

    #[test]
    fn dead_store_with_observe() {
        let p = parse(STORES).unwrap();
        let (q, log) = dead_store_elim(&p, &vars(&["y"])).unwrap();
        assert_eq!(print(&q), "l0: skip\nl1: x := 2\nl2: y := x\nl3: halt\nl4: done\n");
        assert_eq!(log.len(), 1);
        assert_eq!(log.entries[0].label, Label::new("l0"));
    }

    #[test]
    fn dead_store_observing_nothing() {
        let p = parse(STORES).unwrap();
        let (q, _) = dead_store_elim(&p, &BTreeSet::new()).unwrap();
        assert_eq!(print(&q), "l0: skip\nl1: skip\nl2: skip\nl3: halt\nl4: done\n");
        let (r, log) = dead_store_elim(&q, &BTreeSet::new()).unwrap();
        assert_eq!(r, q);
        assert!(log.is_empty());
    }

    #[test]
    fn dead_store_keeps_undefined_reads() {
        let p = parse("l0: y := x\nl1: halt\nl2: done").unwrap();
        let (q, log) = dead_store_elim(&p, &BTreeSet::new()).unwrap();
        assert_eq!(q, p);
        assert!(log.is_empty());
        assert!(dead_store_elim(&p, &vars(&["zz"])).is_err());
    }

    const DIAMOND: &str = "l0: if c = 0 then l3\nl1: x := 5\nl2: goto l4\nl3: x := 5\nl4: y := x + 1\nl5: halt\nl6: done";

    #[test]
    fn const_prop_through_diamond() {
        let src = format!("l9: c := 0\n{DIAMOND}");
        let p = parse(&src).unwrap();
        let (q, log) = const_prop(&p).unwrap();
        assert_eq!(q.command(&Label::new("l4")).unwrap().to_string(), "y := 5 + 1");
        // c := 0 also reaches l0.
        assert_eq!(q.command(&Label::new("l0")).unwrap().to_string(), "if 0 = 0 then l3");
        assert_eq!(log.len(), 2);
        assert_eq!(compare_const_prop(&p, &q, 1000), Verdict::Agree);
        let (r, log) = const_prop(&q).unwrap();
        assert_eq!(r, q);
        assert!(log.is_empty());
    }

    #[test]
    fn const_prop_needs_one_literal() {
        let p = parse(&format!("l9: c := 0\n{}", DIAMOND.replacen("x := 5", "x := 6", 1))).unwrap();
        let (q, _) = const_prop(&p).unwrap();
        assert_eq!(q.command(&Label::new("l4")).unwrap().to_string(), "y := x + 1");

        let p = parse("l0: y := 1\nl1: x := y + 1\nl2: z := x\nl3: halt\nl4: done").unwrap();
        let (q, _) = const_prop(&p).unwrap();
        // y is constant, x is not a literal assignment.
        assert_eq!(q.command(&Label::new("l1")).unwrap().to_string(), "x := 1 + 1");
        assert_eq!(q.command(&Label::new("l2")).unwrap().to_string(), "z := x");
    }

    #[test]
    fn const_prop_chains_across_rounds() {
        let p = parse("l0: a := 3\nl1: b := a\nl2: c := b * b\nl3: halt\nl4: done").unwrap();
        let (q, log) = const_prop(&p).unwrap();
        assert_eq!(q.command(&Label::new("l2")).unwrap().to_string(), "c := 3 * 3");
        assert_eq!(log.entries.iter().map(|e| e.round).max(), Some(2));
    }

    #[test]
    fn rewrite_log_rendering() {
        let p = parse(STORES).unwrap();
        let (_, log) = dead_store_elim(&p, &vars(&["y"])).unwrap();
        assert!(log.to_text().starts_with("round 1 l0: dead-store x := 1 => skip"));
        assert_eq!(log.to_json()["rewrites"][0]["kind"], "dead-store");
        assert_eq!(RewriteLog::default().to_text(), "no rewrites\n");
    }

    #[test]
    fn overflowing_stores_are_excluded() {
        let p = parse("l0: x := 9223372036854775807 + 1\nl1: halt\nl2: done").unwrap();
        let (q, _) = dead_store_elim(&p, &BTreeSet::new()).unwrap();
        assert!(matches!(compare_dead_store(&p, &q, &BTreeSet::new(), 100), Verdict::Excluded(_)));
    }
}
