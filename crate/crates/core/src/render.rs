//! Text and JSON renderings of solved analyses.

use serde_json::{json, Map, Value};

use crate::analyses::AnalysisKind;
use crate::lattice::Element;
use crate::parser::print;
use crate::solver::AnalysisResult;
use crate::syntax::Program;

/// One line per label in program order, `l1: before={x} after={}`.
///
/// Reaching definitions print one block per label instead, since their
/// facts span several lines. Labels unreachable from the entry are marked.
pub fn analysis_text<T: Element>(program: &Program, kind: AnalysisKind, result: &AnalysisResult<T>) -> String {
    let reachable = program.reachable();
    let mut out = String::new();
    for l in program.labels() {
        let mark = if reachable.contains(l) { "" } else { " (unreachable)" };
        let (before, after) = (result.before(l), result.after(l));
        if kind == AnalysisKind::ReachingDefs {
            out.push_str(&format!("{l}:{mark}\n"));
            for (side, fact) in [("before", before), ("after", after)] {
                out.push_str(&format!("  {side}:\n"));
                for line in fact.to_string().lines() {
                    out.push_str(&format!("    {line}\n"));
                }
            }
        } else {
            out.push_str(&format!("{l}: before={before} after={after}{mark}\n"));
        }
    }
    out
}

pub fn analysis_json<T: Element>(program: &Program, kind: AnalysisKind, result: &AnalysisResult<T>) -> Value {
    let side = |facts: &std::collections::BTreeMap<_, crate::lattice::Fact<T>>| -> Value {
        let map: Map<String, Value> = program
            .labels()
            .map(|l| (l.to_string(), facts[l].to_json()))
            .collect();
        Value::Object(map)
    };
    json!({
        "program": print(program),
        "analysis": kind.name(),
        "before": side(&result.before),
        "after": side(&result.after),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyses::{Analysis, LiveVariables, ReachingDefinitions};
    use crate::parser::parse;

    #[test]
    fn live_variables_lines() {
        let p = parse("l0: x := 1\nl1: y := x + 2\nl2: halt\nl3: done").unwrap();
        let r = LiveVariables::new().solve(&p).unwrap();
        let text = analysis_text(&p, AnalysisKind::LiveVars, &r);
        assert!(text.lines().any(|l| l == "l1: before={x} after={}"), "{text}");
        let v = analysis_json(&p, AnalysisKind::LiveVars, &r);
        assert_eq!(v["before"]["l1"], json!(["x"]));
        assert_eq!(v["analysis"], "live-vars");
    }

    #[test]
    fn unreachable_marked_and_definitions_blocked() {
        let p = parse("l0: goto l2\nl1: x := 1\nl2: halt\nl3: done").unwrap();
        let r = ReachingDefinitions.solve(&p).unwrap();
        let text = analysis_text(&p, AnalysisKind::ReachingDefs, &r);
        assert!(text.contains("l1: (unreachable)\n"), "{text}");
        assert!(text.contains("  after:\n    x: {l1}\n"), "{text}");
    }
}
