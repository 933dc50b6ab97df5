//! Worklist solver for forward and backward dataflow equation systems.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::lattice::{Element, Fact, LatticeOrder};
use crate::syntax::{Label, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `β_after(l) = f(l, β_before(l))`, combining over predecessors.
    Forward,
    /// `β_before(l) = f(l, β_after(l))`, combining over successors.
    Backward,
}

pub type Transfer<T> = Arc<dyn Fn(&Label, &Fact<T>) -> Fact<T> + Send + Sync>;

/// One equation system over a program.
///
/// The combined side of label `l` is the join of `boundary(l)` (if any) with
/// the facts flowing in from `l`'s neighbors. The join of no facts is the
/// order's bottom.
#[derive(Clone)]
pub struct AnalysisSpec<T: Element> {
    pub direction: Direction,
    pub order: LatticeOrder,
    pub universe: Arc<BTreeSet<T>>,
    pub boundary: BTreeMap<Label, Fact<T>>,
    pub transfer: Transfer<T>,
}

impl<T: Element> AnalysisSpec<T> {
    pub fn bottom(&self) -> Fact<T> {
        Fact::bottom(self.order, self.universe.clone())
    }

    pub fn apply(&self, l: &Label, fact: &Fact<T>) -> Fact<T> {
        (self.transfer)(l, fact)
    }

    /// Joins `facts` under the spec's order without requiring shared
    /// universes; the result lives in the spec's universe.
    pub fn combine<'a>(&self, facts: impl IntoIterator<Item = &'a Fact<T>>) -> Fact<T> {
        let mut acc = self.bottom();
        for f in facts {
            acc = match self.order {
                LatticeOrder::Subset | LatticeOrder::PointwiseSubset => {
                    acc.with_members(acc.members().union(f.members()).cloned())
                }
                LatticeOrder::ReverseSubset => {
                    acc.with_members(acc.members().intersection(f.members()).cloned())
                }
            };
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalysisResult<T: Element> {
    pub before: BTreeMap<Label, Fact<T>>,
    pub after: BTreeMap<Label, Fact<T>>,
}

impl<T: Element> AnalysisResult<T> {
    pub fn before(&self, l: &Label) -> &Fact<T> {
        &self.before[l]
    }

    pub fn after(&self, l: &Label) -> &Fact<T> {
        &self.after[l]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("transfer at {0} is not monotone: a relaxation decreased its output")]
    NonMonotone(Label),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WorklistOrder {
    #[default]
    Fifo,
    Lifo,
}

/// Least solution of the system, reached from bottom.
pub fn solve<T: Element>(
    program: &Program,
    spec: &AnalysisSpec<T>,
) -> Result<AnalysisResult<T>, SolveError> {
    solve_with(program, spec, WorklistOrder::Fifo)
}

pub fn solve_with<T: Element>(
    program: &Program,
    spec: &AnalysisSpec<T>,
    order: WorklistOrder,
) -> Result<AnalysisResult<T>, SolveError> {
    let cfg = program.control_flow();
    let (inflow, outflow) = match spec.direction {
        Direction::Forward => (&cfg.preds, &cfg.succs),
        Direction::Backward => (&cfg.succs, &cfg.preds),
    };
    let labels: Vec<Label> = program.labels().cloned().collect();
    // `input` is the combined side, `output` the transferred side.
    let mut input: BTreeMap<Label, Fact<T>> =
        labels.iter().map(|l| (l.clone(), spec.bottom())).collect();
    let mut output = input.clone();

    let mut work: VecDeque<Label> = labels.iter().cloned().collect();
    let mut queued: BTreeSet<Label> = labels.iter().cloned().collect();
    loop {
        let next = match order {
            WorklistOrder::Fifo => work.pop_front(),
            WorklistOrder::Lifo => work.pop_back(),
        };
        let Some(l) = next else { break };
        queued.remove(&l);

        let incoming = inflow[&l].iter().map(|n| &output[n]);
        let combined = spec.combine(spec.boundary.get(&l).into_iter().chain(incoming));
        let out = spec.apply(&l, &combined);
        let old = &output[&l];
        if out != *old {
            if !old.leq(&out).unwrap_or(false) {
                return Err(SolveError::NonMonotone(l));
            }
            output.insert(l.clone(), out);
            for n in &outflow[&l] {
                if queued.insert(n.clone()) {
                    work.push_back(n.clone());
                }
            }
        }
        input.insert(l, combined);
    }

    Ok(match spec.direction {
        Direction::Forward => AnalysisResult {
            before: input,
            after: output,
        },
        Direction::Backward => AnalysisResult {
            before: output,
            after: input,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Before,
    After,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Before => "before",
            Side::After => "after",
        })
    }
}

/// An equation that does not hold: `actual` is what the result stores,
/// `expected` what the right-hand side evaluates to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquationViolation<T: Element> {
    pub label: Label,
    pub side: Side,
    pub expected: Fact<T>,
    pub actual: Option<Fact<T>>,
}

impl<T: Element> fmt::Display for EquationViolation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.actual {
            Some(a) => write!(
                f,
                "{} {}: expected {} but found {}",
                self.label, self.side, self.expected, a
            ),
            None => write!(f, "{} {}: missing fact", self.label, self.side),
        }
    }
}

/// Re-evaluates every equation against `result`.
pub fn audit<T: Element>(
    program: &Program,
    spec: &AnalysisSpec<T>,
    result: &AnalysisResult<T>,
) -> Vec<EquationViolation<T>> {
    let cfg = program.control_flow();
    let (inflow, in_side, out_side) = match spec.direction {
        Direction::Forward => (&cfg.preds, Side::Before, Side::After),
        Direction::Backward => (&cfg.succs, Side::After, Side::Before),
    };
    let facts = |side: Side| match side {
        Side::Before => &result.before,
        Side::After => &result.after,
    };
    let (ins, outs) = (facts(in_side), facts(out_side));

    let mut violations = Vec::new();
    for l in program.labels() {
        let incoming: Vec<&Fact<T>> = inflow[l].iter().filter_map(|n| outs.get(n)).collect();
        let expected_in = spec.combine(spec.boundary.get(l).into_iter().chain(incoming));
        let actual_in = ins.get(l);
        if actual_in != Some(&expected_in) {
            violations.push(EquationViolation {
                label: l.clone(),
                side: in_side,
                expected: expected_in.clone(),
                actual: actual_in.cloned(),
            });
        }
        // The transfer equation is judged from the stored input fact, so one
        // perturbation is reported where it was made.
        let base = actual_in.cloned().unwrap_or(expected_in);
        let expected_out = spec.apply(l, &base);
        let actual_out = outs.get(l);
        if actual_out != Some(&expected_out) {
            violations.push(EquationViolation {
                label: l.clone(),
                side: out_side,
                expected: expected_out,
                actual: actual_out.cloned(),
            });
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::syntax::{Command, Var};

    // Live variables written out directly so the solver is tested on its own.
    fn liveness(program: &Program) -> AnalysisSpec<Var> {
        let universe = Arc::new(program.all_variables());
        let p = program.clone();
        let mut boundary = BTreeMap::new();
        for (l, c) in program.commands() {
            if matches!(c, Command::Halt | Command::Done) {
                boundary.insert(l.clone(), Fact::empty(LatticeOrder::Subset, universe.clone()));
            }
        }
        AnalysisSpec {
            direction: Direction::Backward,
            order: LatticeOrder::Subset,
            universe,
            boundary,
            transfer: Arc::new(move |l, beta| match p.command(l).unwrap() {
                Command::Assign(v, e) => {
                    let mut out = beta.clone();
                    out.remove(v);
                    for x in e.variables() {
                        out.insert(x);
                    }
                    out
                }
                Command::Branch(b, _) => {
                    let mut out = beta.clone();
                    for x in b.variables() {
                        out.insert(x);
                    }
                    out
                }
                _ => beta.clone(),
            }),
        }
    }

    fn names(f: &Fact<Var>) -> Vec<String> {
        f.members().iter().map(|v| v.to_string()).collect()
    }

    #[test]
    fn straight_line_liveness() {
        let p = parse("l0: x := 1\nl1: y := x + 2\nl2: halt\nl3: done").unwrap();
        let spec = liveness(&p);
        let r = solve(&p, &spec).unwrap();
        assert_eq!(names(r.before(&Label::new("l1"))), ["x"]);
        assert!(r.before(&Label::new("l0")).is_empty());
        assert!(r.after(&Label::new("l1")).is_empty());
        assert!(audit(&p, &spec, &r).is_empty());
    }

    #[test]
    fn loop_reaches_fixpoint_in_either_order() {
        let p = parse(
            "l0: i := 3\nl1: if i = 0 then l4\nl2: i := i - 1\nl3: goto l1\nl4: halt\nl5: done",
        )
        .unwrap();
        let spec = liveness(&p);
        let fifo = solve_with(&p, &spec, WorklistOrder::Fifo).unwrap();
        let lifo = solve_with(&p, &spec, WorklistOrder::Lifo).unwrap();
        assert_eq!(fifo, lifo);
        assert_eq!(names(fifo.before(&Label::new("l3"))), ["i"]);
        assert!(audit(&p, &spec, &fifo).is_empty());
    }

    #[test]
    fn audit_flags_perturbations() {
        let p = parse("l0: x := 1\nl1: y := x + 2\nl2: halt\nl3: done").unwrap();
        let spec = liveness(&p);
        let mut r = solve(&p, &spec).unwrap();
        let l0 = Label::new("l0");
        let mut bumped = r.after(&l0).clone();
        bumped.remove(&Var::new("x"));
        r.after.insert(l0.clone(), bumped);
        let v = audit(&p, &spec, &r);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].label.clone(), v[0].side), (l0, Side::After));

        let mut r = solve(&p, &spec).unwrap();
        let l2 = Label::new("l2");
        let full = Fact::full(LatticeOrder::Subset, spec.universe.clone());
        r.after.insert(l2.clone(), full);
        let v = audit(&p, &spec, &r);
        assert_eq!(v[0].label, l2);
    }

    #[test]
    fn decreasing_transfer_is_rejected() {
        let p = parse("l0: goto l0\nl1: halt\nl2: done").unwrap();
        let universe: Arc<BTreeSet<Var>> = Arc::new([Var::new("x")].into_iter().collect());
        // Flips between ∅ and {x}: the second visit shrinks the output.
        let spec = AnalysisSpec {
            direction: Direction::Forward,
            order: LatticeOrder::Subset,
            universe: universe.clone(),
            boundary: BTreeMap::new(),
            transfer: Arc::new(move |_, beta: &Fact<Var>| beta.complement()),
        };
        assert_eq!(solve(&p, &spec), Err(SolveError::NonMonotone(Label::new("l0"))));
    }
}
