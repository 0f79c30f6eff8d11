mod common;

use std::collections::BTreeSet;

use common::{en, gen, SENTENCES};
use latticegen_core::network::EntryCondition;
use latticegen_core::spl::parse_spl;
use latticegen_core::trace::{
    conditional_trace, decision_path, diff_traces, selection_expression, where_introduced, Aspect, SelectionView,
    ViewKind, WatchEvent,
};

const DECLARATIVE: &str = SENTENCES[0].1;
const QUESTION: &str = SENTENCES[1].1;

#[test]
fn list_view_of_the_clause() {
    let view = en();
    let r = gen(&view, DECLARATIVE);
    let SelectionView::List { items } = selection_expression(&r, &view.network, "root", ViewKind::List).unwrap() else {
        panic!()
    };
    let features: Vec<&str> = items.iter().map(|i| i.feature.as_str()).collect();
    assert_eq!(features[..4], ["start", "clause", "indicative", "declarative"]);
    assert_eq!(items[0].system, None);
    assert_eq!(items[1].system.as_deref(), Some("RANK"));
    assert_eq!(selection_expression(&r, &view.network, "u9", ViewKind::List).unwrap_err().code(), "UNKNOWN-UNIT");
}

#[test]
fn views_agree_with_each_other() {
    let view = en();
    for (_, spl, _) in SENTENCES {
        let r = gen(&view, spl);
        for u in &r.units {
            let SelectionView::List { items } = selection_expression(&r, &view.network, &u.id, ViewKind::List).unwrap()
            else {
                panic!()
            };
            let SelectionView::Replay { events } =
                selection_expression(&r, &view.network, &u.id, ViewKind::Replay).unwrap()
            else {
                panic!()
            };
            let SelectionView::Subgraph { fragment, marked } =
                selection_expression(&r, &view.network, &u.id, ViewKind::Subgraph).unwrap()
            else {
                panic!()
            };
            assert_eq!(events.len(), u.fired().count());
            assert_eq!(marked.len(), u.selection.len());
            assert_eq!(fragment.systems.len(), u.fired().count());
            let decided: Vec<&str> = items.iter().filter(|i| i.system.is_some()).map(|i| i.feature.as_str()).collect();
            let replayed: Vec<&str> = events.iter().map(|e| e.feature.as_str()).collect();
            assert_eq!(decided, replayed);
        }
        let seqs: Vec<usize> = r.events.iter().map(|e| e.seq).collect();
        assert_eq!(seqs, (0..r.events.len()).collect::<Vec<_>>(), "gapless sequence");
    }
}

#[test]
fn subject_before_finite_comes_from_mood_type() {
    let view = en();
    let r = gen(&view, DECLARATIVE);
    let report = where_introduced(&r, &view.network, "root", &"ordering:Subject<Finite".parse().unwrap()).unwrap();
    assert_eq!(report.entries.len(), 1);
    let e = &report.entries[0];
    assert_eq!(e.system, "MOOD-TYPE");
    assert_eq!(e.feature, "declarative");
    assert_eq!(e.context, EntryCondition::feature("indicative"));
    assert_eq!(view.network.system(&e.system).unwrap().region, "MOOD");
}

#[test]
fn lexical_classes_of_a_noun_head() {
    let view = en();
    let r = gen(&view, "(e / like :actor (d / dog) :actee (t / time))");
    assert_eq!(r.string, "The dog likes the time.");
    let unit = r.units.iter().find(|u| u.entity == "t").unwrap();
    let report = where_introduced(&r, &view.network, &unit.id, &Aspect::LexicalClass("Thing".into())).unwrap();
    let classes: BTreeSet<&str> = report.entries.iter().map(|e| e.constraint.as_str()).collect();
    assert!(classes.iter().any(|c| c.contains("NOUN") && !c.contains("COMMON") && !c.contains("PROPER")));
    assert!(classes.iter().any(|c| c.contains("COMMON-NOUN")));
    assert!(report.entries.iter().all(|e| e.system == "HEAD-SUBSTITUTION"));
    let token = r.tokens.iter().position(|t| t.text == "time").unwrap();
    let report = where_introduced(&r, &view.network, "root", &Aspect::Token(token)).unwrap();
    assert!(report.entries.iter().any(|e| e.system == "HEAD-SUBSTITUTION"));
    assert!(report.entries.iter().any(|e| e.system == "SENSER-SUBJECT"), "the Phenomenon conflation is on the path");
}

#[test]
fn function_aspects_cover_every_constraint() {
    let view = en();
    for (name, spl, _) in SENTENCES {
        let r = gen(&view, spl);
        for u in &r.units {
            let functions: BTreeSet<&str> = u.constraints.iter().flat_map(|c| c.op.functions()).collect();
            let mut covered = BTreeSet::new();
            for f in functions {
                let report = where_introduced(&r, &view.network, &u.id, &Aspect::Function(f.into())).unwrap();
                for e in report.entries {
                    assert!(u.constraint(&e.statement).is_some());
                    covered.insert(e.statement);
                }
            }
            let all: BTreeSet<String> = u.constraints.iter().map(|c| c.statement.clone()).collect();
            assert_eq!(covered, all, "{name} {}", u.path);
        }
    }
}

#[test]
fn unresolvable_aspects() {
    let view = en();
    let r = gen(&view, DECLARATIVE);
    let bad = |a: &str| where_introduced(&r, &view.network, "root", &a.parse().unwrap()).unwrap_err().code();
    assert_eq!(bad("function:Nonexistent"), "UNKNOWN-ASPECT");
    assert_eq!(bad("token:99"), "UNKNOWN-ASPECT");
    assert_eq!(bad("ordering:Subject<Negator"), "UNKNOWN-ASPECT");
}

#[test]
fn aspect_on_a_unit_without_constraints_is_empty() {
    let mut view = en();
    view.network = latticegen_core::SystemNetwork::new("start", Vec::new());
    let r = latticegen_core::generate(&view, &parse_spl("(e / chase)").unwrap());
    let report = where_introduced(&r, &view.network, "root", &Aspect::Function("Subject".into())).unwrap();
    assert!(report.entries.is_empty());
}

#[test]
fn decision_paths() {
    let view = en();
    let r = gen(&view, QUESTION);
    let outcome = decision_path(&r, "root", "MOOD-TYPE").unwrap();
    assert_eq!(outcome.feature, "interrogative");
    let last = outcome.path.last().unwrap();
    assert_eq!(last.inquiry, "command-query");
    assert_eq!(last.answer, "question");
    assert!(decision_path(&r, "root", "DO-SUPPORT").unwrap().path.is_empty());
    assert_eq!(decision_path(&r, "root", "THEME-SELECTION").unwrap_err().code(), "SYSTEM-NOT-FIRED");
}

#[test]
fn declarative_and_question_diverge_at_mood_type() {
    let view = en();
    let a = gen(&view, DECLARATIVE);
    let b = gen(&view, QUESTION);
    assert!(diff_traces(&a, &a).is_empty());
    let d = diff_traces(&a, &b);
    let first = d.first_divergence.clone().unwrap();
    assert_eq!((first.unit_path.as_str(), first.system.as_str()), ("root", "MOOD-TYPE"));
    assert_eq!(first.feature_a.as_deref(), Some("declarative"));
    assert_eq!(first.feature_b.as_deref(), Some("interrogative"));
    let root = d.units.iter().find(|u| u.unit_path == "root").unwrap();
    assert!(root.only_a.contains(&"declarative".to_owned()));
    assert!(root.only_b.contains(&"do-support".to_owned()));
}

#[test]
fn different_lineages_warn() {
    let view = en();
    let mut a = gen(&view, DECLARATIVE);
    let mut b = a.clone();
    a.resource_version = "aaaa".into();
    b.resource_version = "bbbb+p1".into();
    assert_eq!(diff_traces(&a, &b).warnings.len(), 1);
    b.resource_version = "aaaa+p1".into();
    assert!(diff_traces(&a, &b).warnings.is_empty());
}

#[test]
fn watched_objects() {
    let view = en();
    let graph = parse_spl(QUESTION).unwrap();
    let (_, events) = conditional_trace(&view, &graph, &["MOOD-TYPE".into()]).unwrap();
    assert_eq!(events.len(), 1);
    assert!(matches!(&events[0], WatchEvent::SystemFired { feature, .. } if feature == "interrogative"));

    let (_, none) = conditional_trace(&view, &graph, &[]).unwrap();
    assert!(none.is_empty());

    for (_, spl, _) in SENTENCES {
        let graph = parse_spl(spl).unwrap();
        let (r, events) = conditional_trace(&view, &graph, &["command-query".into()]).unwrap();
        let replayed = r.events.iter().flat_map(|e| &e.path).filter(|s| s.inquiry == "command-query").count();
        let inquiries = events.iter().filter(|e| matches!(e, WatchEvent::InquiryEvaluated { .. })).count();
        assert_eq!(inquiries, replayed);
    }
    assert_eq!(conditional_trace(&view, &graph, &["NO-SUCH-THING".into()]).unwrap_err().code(), "UNKNOWN-WATCH-ID");
}

#[test]
fn watched_statement() {
    let view = en();
    let graph = parse_spl(DECLARATIVE).unwrap();
    let id = view.network.system("MOOD-TYPE").unwrap().outputs[0].realizations[0].id.clone();
    let (_, events) = conditional_trace(&view, &graph, std::slice::from_ref(&id)).unwrap();
    assert_eq!(events.len(), 1);
    assert!(
        matches!(&events[0], WatchEvent::StatementApplied { statement, system, .. } if *statement == id && system == "MOOD-TYPE")
    );
}
