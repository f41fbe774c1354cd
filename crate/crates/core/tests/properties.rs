use std::path::Path;

use proptest::prelude::*;
use serde_json::{json, Value};

use cnc_advisor::analysis::ToolRegistry;
use cnc_advisor::eval::metrics::score_tool_selection;
use cnc_advisor::kg::{select_candidates, RetrievalConfig, Scored};
use cnc_advisor::router::{validate_routing, ROUTING_FIELDS};
use cnc_advisor::session::{AgentId, CriticDecision, SessionState, StateEvent};

fn event() -> impl Strategy<Value = StateEvent> {
    prop_oneof![
        "[a-z ]{0,12}".prop_map(|query| StateEvent::QueryReceived { query }),
        ("[a-c]", "[0-9a-f]{4}").prop_map(|(key, digest)| StateEvent::ArtifactCached {
            key,
            digest,
            produced_by: "rb_compute_average".into()
        }),
        "[a-z]{0,8}".prop_map(|instruction| StateEvent::AgentInvoked { agent: AgentId::Analysis, instruction }),
        (0u8..3, 0.0..1.0f64).prop_map(|(d, score)| StateEvent::CriticDecided {
            decision: [CriticDecision::Accept, CriticDecision::Revise, CriticDecision::Escalate][d as usize],
            failed_checks: vec![],
            score
        }),
        Just(StateEvent::Reset),
        "[a-z]{1,6}".prop_map(|label| StateEvent::Annotated { label, detail: json!({"n": 1}) }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trail_is_append_only_and_replays(events in prop::collection::vec(event(), 0..40), budget in 0u32..4) {
        let mut s = SessionState::new("p", budget);
        let mut accepted = 0;
        for e in events {
            let before = s.audit().events().to_vec();
            let digest = s.digest();
            match s.apply(e) {
                Ok(()) => {
                    accepted += 1;
                    prop_assert_eq!(&s.audit().events()[..before.len()], &before[..]);
                }
                Err(_) => {
                    prop_assert_eq!(s.audit().events(), &before[..]);
                    prop_assert_eq!(s.digest(), digest);
                }
            }
            prop_assert!(s.critic_count() <= budget + 1);
        }
        prop_assert_eq!(s.audit().len(), accepted);
        let r = SessionState::replay("p", budget, s.audit(), s.payloads()).unwrap();
        prop_assert_eq!(r.digest(), s.digest());
    }

    #[test]
    fn routing_validation_names_every_bad_field(
        agent in prop::option::of(prop_oneof![Just(json!("analysis")), Just(json!("kg")), Just(json!("planner")), Just(json!(3))]),
        instruction in prop::option::of(prop_oneof![Just(json!("do it")), Just(json!("")), Just(json!(null))]),
        refs in prop::option::of(prop_oneof![Just(json!([])), Just(json!(["a.csv"])), Just(json!("a.csv"))]),
        cats in prop::option::of(prop_oneof![Just(json!([])), Just(json!(["statistics"])), Just(json!(["bogus"])), Just(json!(1))]),
    ) {
        let mut obj = serde_json::Map::new();
        for (k, v) in ROUTING_FIELDS.iter().zip([agent, instruction, refs, cats]) {
            if let Some(v) = v {
                obj.insert(k.to_string(), v);
            }
        }
        let registry = ToolRegistry::default();
        match validate_routing(&Value::Object(obj.clone()), &registry) {
            Ok(d) => {
                prop_assert!(!d.instruction.trim().is_empty());
                prop_assert_eq!(json!(d.agent_id.as_str()), obj["agent"].clone());
            }
            Err(v) => {
                prop_assert!(!v.fields.is_empty());
                for f in v.field_names() {
                    prop_assert!(ROUTING_FIELDS.contains(&f));
                }
                for f in ROUTING_FIELDS {
                    if !obj.contains_key(f) {
                        prop_assert!(v.field_names().contains(&f), "{} missing but unreported", f);
                    }
                }
            }
        }
    }

    #[test]
    fn selection_respects_bounds(
        scores in prop::collection::vec(-5.0..5.0f64, 0..60),
        z in -2.0..3.0f64,
        k_min in 1usize..5,
        extra in 0usize..10,
        k0 in 1usize..8,
        min_pool in 1usize..30,
    ) {
        let cfg = RetrievalConfig { z, k_min, k_max: k_min + extra, k0, min_pool, ..RetrievalConfig::default() };
        let scored: Vec<Scored> = scores.iter().enumerate()
            .map(|(i, &s)| Scored { id: format!("t{i}"), base: s, score: s })
            .collect();
        let sel = select_candidates(&scored, &cfg);
        prop_assert!(sel.selected.len() <= cfg.k_max);
        prop_assert!(sel.selected.len() >= cfg.k_min.min(scored.len()));
        let mut ids: Vec<&str> = sel.selected.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), sel.selected.len());
        for w in sel.selected.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn selection_scores_bounded(
        req in prop::collection::btree_set("[a-f]", 0..6),
        called in prop::collection::vec("[a-h]", 0..8),
    ) {
        let req: Vec<String> = req.into_iter().collect();
        let s = score_tool_selection(&req, &called, &[]);
        for x in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        prop_assert!(s.missing <= req.len());
        if !req.is_empty() {
            prop_assert_eq!(s.missing == 0, s.recall == 1.0);
        }
    }
}

fn rust_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            rust_files(&p, out);
        } else if p.extension().is_some_and(|x| x == "rs") {
            out.push(p);
        }
    }
}

#[test]
fn network_client_only_in_gateway() {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let mut files = Vec::new();
    rust_files(&src, &mut files);
    let gateway = src.join("gateway");
    let offenders: Vec<_> = files
        .iter()
        .filter(|p| !p.starts_with(&gateway))
        .filter(|p| std::fs::read_to_string(p).unwrap().contains("reqwest"))
        .collect();
    assert!(offenders.is_empty(), "{offenders:?}");
}
