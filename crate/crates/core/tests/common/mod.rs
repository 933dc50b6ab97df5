//! Fixture loading and a brute-force leastness oracle shared by the
//! integration tests. The oracle tries every boolean assignment of facts and
//! requires the solver's answer to be the least one satisfying the
//! equations; transfer functions are restated here from the definitions
//! rather than taken from the library.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;

use dfa_core::analyses::{
    Analysis, DefinedVariables, LiveVariables, ReachingDefinitions, VeryBusyExpressions,
};
use dfa_core::lattice::{Element, Fact};
use dfa_core::parser::parse;
use dfa_core::solver::AnalysisResult;
use dfa_core::syntax::{AExp, BExp, Command, Program};

pub fn fixtures() -> Vec<(String, Program)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut out: Vec<(String, Program)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "imp"))
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p.file_name().unwrap().to_string_lossy().into_owned(), parse(&text).unwrap())
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn small(p: &Program) -> bool {
    p.len() <= 6 && p.all_variables().len() <= 3
}

pub fn succs(p: &Program, i: usize) -> Vec<usize> {
    let idx = |l| p.position(l).unwrap();
    match &p.commands()[i].1 {
        Command::Done => vec![],
        Command::Goto(t) => vec![idx(t)],
        Command::Branch(_, t) => vec![i + 1, idx(t)],
        _ => vec![i + 1],
    }
}

pub fn preds(p: &Program, i: usize) -> Vec<usize> {
    (0..p.len()).filter(|&j| succs(p, j).contains(&i)).collect()
}

pub fn aexp_vars(e: &AExp, out: &mut BTreeSet<String>) {
    match e {
        AExp::Num(_) => {}
        AExp::Var(v) => {
            out.insert(v.to_string());
        }
        AExp::Bin(_, a, b) => {
            aexp_vars(a, out);
            aexp_vars(b, out);
        }
    }
}

pub fn bexp_aexps(b: &BExp) -> Vec<&AExp> {
    match b {
        BExp::True | BExp::False => vec![],
        BExp::Cmp(_, x, y) => vec![x, y],
        BExp::Not(x) => bexp_aexps(x),
        BExp::And(x, y) | BExp::Or(x, y) => [bexp_aexps(x), bexp_aexps(y)].concat(),
    }
}

/// Every node of the expression tree, as printed.
pub fn nodes(e: &AExp, out: &mut BTreeSet<String>) {
    out.insert(e.to_string());
    if let AExp::Bin(_, a, b) = e {
        nodes(a, out);
        nodes(b, out);
    }
}

pub fn cmd_vars(c: &Command) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    match c {
        Command::Assign(_, e) => aexp_vars(e, &mut out),
        Command::Branch(b, _) => bexp_aexps(b).into_iter().for_each(|e| aexp_vars(e, &mut out)),
        _ => {}
    }
    out
}

pub fn cmd_subexps(c: &Command) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    match c {
        Command::Assign(_, e) => nodes(e, &mut out),
        Command::Branch(b, _) => bexp_aexps(b).into_iter().for_each(|e| nodes(e, &mut out)),
        _ => {}
    }
    out
}

/// Combined and transferred bits per label.
pub type Solution = (Vec<bool>, Vec<bool>);

/// One analysis as a per-element boolean system.
pub struct System<'a> {
    pub p: &'a Program,
    pub backward: bool,
    /// Whether the combining operator is intersection.
    pub must: bool,
    pub elems: Vec<String>,
    /// Membership of element `e` in the boundary fact at label `i`, if any.
    pub boundary: Box<dyn Fn(usize, &str) -> Option<bool> + 'a>,
    /// Transferred bit at label `i` for element `e` given the input bit.
    pub transfer: Box<dyn Fn(usize, &str, bool) -> bool + 'a>,
}

impl System<'_> {
    /// `ins[i]`, `outs[i]` are the combined and transferred sides.
    pub fn holds(&self, e: &str, ins: &[bool], outs: &[bool]) -> bool {
        (0..self.p.len()).all(|i| {
            let nbrs = if self.backward { succs(self.p, i) } else { preds(self.p, i) };
            let mut acc = self.must;
            for n in nbrs {
                acc = if self.must { acc && outs[n] } else { acc || outs[n] };
            }
            if let Some(b) = (self.boundary)(i, e) {
                acc = if self.must { acc && b } else { acc || b };
            }
            ins[i] == acc && outs[i] == (self.transfer)(i, e, ins[i])
        })
    }

    /// All solutions for one element, each as (ins, outs).
    pub fn solutions(&self, e: &str) -> Vec<Solution> {
        let n = self.p.len();
        assert!(2 * n <= 16);
        (0u32..1 << (2 * n))
            .map(|m| {
                let ins: Vec<bool> = (0..n).map(|i| m >> i & 1 == 1).collect();
                let outs: Vec<bool> = (0..n).map(|i| m >> (n + i) & 1 == 1).collect();
                (ins, outs)
            })
            .filter(|(ins, outs)| self.holds(e, ins, outs))
            .collect()
    }

    /// Bitwise order in the analysis lattice.
    pub fn leq(&self, a: &[bool], b: &[bool]) -> bool {
        a.iter().zip(b).all(|(x, y)| if self.must { *x || !*y } else { !*x || *y })
    }
}

pub fn bits<T: Element>(
    p: &Program,
    r: &AnalysisResult<T>,
    backward: bool,
    e: &str,
) -> (Vec<bool>, Vec<bool>) {
    let has = |side: &BTreeMap<_, Fact<T>>| -> Vec<bool> {
        p.labels().map(|l| side[l].members().iter().any(|m| m.to_string() == e)).collect()
    };
    if backward {
        (has(&r.after), has(&r.before))
    } else {
        (has(&r.before), has(&r.after))
    }
}

/// Checks that `r` is the least solution of `sys`, element by element.
pub fn least<T: Element>(sys: &System, r: &AnalysisResult<T>) -> Result<(), String> {
    for e in &sys.elems {
        let sols = sys.solutions(e);
        let (ins, outs) = bits(sys.p, r, sys.backward, e);
        let mine = [ins, outs].concat();
        if !sols.iter().any(|(i, o)| [i.clone(), o.clone()].concat() == mine) {
            return Err(format!("solver answer for {e} does not satisfy the equations"));
        }
        if let Some((i, o)) = sols.iter().find(|(i, o)| !sys.leq(&mine, &[i.clone(), o.clone()].concat())) {
            return Err(format!("a solution not above the solver's exists for {e}: {i:?} {o:?}"));
        }
    }
    Ok(())
}

pub fn assert_least<T: Element>(name: &str, sys: &System, r: &AnalysisResult<T>) {
    if let Err(e) = least(sys, r) {
        panic!("{name}: {e}");
    }
}

/// Leastness of all four solved analyses on `p`.
pub fn all_least(p: &Program) -> Result<(), String> {
    least(&lv_system(p), &LiveVariables::new().solve(p).unwrap()).map_err(|e| format!("lv: {e}"))?;
    least(&vbe_system(p), &VeryBusyExpressions.solve(p).unwrap()).map_err(|e| format!("vbe: {e}"))?;
    least(&dv_system(p), &DefinedVariables.solve(p).unwrap()).map_err(|e| format!("dv: {e}"))?;
    least(&rd_system(p), &ReachingDefinitions.solve(p).unwrap()).map_err(|e| format!("rd: {e}"))
}

pub fn lv_system(p: &Program) -> System<'_> {
    System {
        p,
        backward: true,
        must: false,
        elems: p.all_variables().iter().map(|v| v.to_string()).collect(),
        boundary: Box::new(move |i, _| matches!(p.commands()[i].1, Command::Halt | Command::Done).then_some(false)),
        transfer: Box::new(move |i, e, after| {
            let c = &p.commands()[i].1;
            let killed = matches!(c, Command::Assign(v, _) if v.name() == e);
            cmd_vars(c).contains(e) || (after && !killed)
        }),
    }
}

pub fn vbe_system(p: &Program) -> System<'_> {
    let elems: BTreeSet<String> = p.commands().iter().flat_map(|(_, c)| cmd_subexps(c)).collect();
    let vars_of: BTreeMap<String, BTreeSet<String>> = p
        .commands()
        .iter()
        .flat_map(|(_, c)| match c {
            Command::Assign(_, e) => vec![e],
            Command::Branch(b, _) => bexp_aexps(b),
            _ => vec![],
        })
        .flat_map(|e| {
            let mut subs = Vec::new();
            collect_nodes(e, &mut subs);
            subs
        })
        .map(|e| {
            let mut vs = BTreeSet::new();
            aexp_vars(e, &mut vs);
            (e.to_string(), vs)
        })
        .collect();
    System {
        p,
        backward: true,
        must: true,
        elems: elems.into_iter().collect(),
        boundary: Box::new(move |i, _| matches!(p.commands()[i].1, Command::Done).then_some(false)),
        transfer: Box::new(move |i, e, after| {
            let c = &p.commands()[i].1;
            let killed = matches!(c, Command::Assign(v, _) if vars_of[e].contains(v.name()));
            cmd_subexps(c).contains(e) || (after && !killed)
        }),
    }
}

pub fn collect_nodes<'a>(e: &'a AExp, out: &mut Vec<&'a AExp>) {
    out.push(e);
    if let AExp::Bin(_, a, b) = e {
        collect_nodes(a, out);
        collect_nodes(b, out);
    }
}

pub fn dv_system(p: &Program) -> System<'_> {
    System {
        p,
        backward: false,
        must: true,
        elems: p.all_variables().iter().map(|v| v.to_string()).collect(),
        boundary: Box::new(|i, _| (i == 0).then_some(false)),
        transfer: Box::new(move |i, e, before| {
            before || matches!(&p.commands()[i].1, Command::Assign(v, _) if v.name() == e)
        }),
    }
}

pub fn rd_system(p: &Program) -> System<'_> {
    let mut elems = Vec::new();
    for v in p.all_variables() {
        for l in p.labels() {
            elems.push(format!("{v}@{l}"));
        }
    }
    System {
        p,
        backward: false,
        must: false,
        elems,
        boundary: Box::new(|i, _| (i == 0).then_some(false)),
        transfer: Box::new(move |i, e, before| {
            let (var, label) = e.split_once('@').unwrap();
            let (l, c) = &p.commands()[i];
            match c {
                Command::Assign(v, _) if v.name() == var => l.name() == label,
                _ => before,
            }
        }),
    }
}

