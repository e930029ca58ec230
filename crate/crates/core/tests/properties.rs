mod common;

use std::collections::BTreeMap;

use common::{jaro_winkler_oracle, levenshtein_oracle};
use eventschema::dot::{parse_dot, DotDocument, DotEdge, DotLabel};
use eventschema::eval::{evaluate, Prf};
use eventschema::finalize::{finalize_chapter, transitive_reduce, WeightedDigraph};
use eventschema::llm::CompletionResponse;
use eventschema::prompts::{parse_event_list, parse_yes_no};
use eventschema::relation::{edge_weight, resolve, PairRelation, RelationScores, RelationThresholds};
use eventschema::schema::{Edge, EdgeKind, EventId, Provenance, SchemaGraph};
use eventschema::similarity::{
    compare_texts, jaro_winkler, levenshtein, DuplicateThresholds, EmbeddingProvider, EventText, TrigramEmbedder,
};
use proptest::prelude::*;

fn mirror(r: PairRelation) -> PairRelation {
    match r {
        PairRelation::Before => PairRelation::After,
        PairRelation::After => PairRelation::Before,
        PairRelation::ChildOf => PairRelation::ParentOf,
        PairRelation::ParentOf => PairRelation::ChildOf,
        other => other,
    }
}

prop_compose! {
    fn dot_document()(
        ids in proptest::sample::subsequence((0usize..40).collect::<Vec<_>>(), 1..12),
        descs in proptest::collection::vec("[A-Za-z][A-Za-z0-9 ,'\"()%-]{0,30}[A-Za-z.]", 12),
        raw_edges in proptest::collection::vec((0usize..12, 0usize..12, any::<bool>()), 0..20),
        header in proptest::option::of("[a-z][a-z ]{0,15}[a-z]"),
    ) -> DotDocument {
        let n = ids.len();
        let events: Vec<(usize, String)> = ids.iter().zip(&descs).map(|(i, d)| (*i, d.clone())).collect();
        let mut seen = std::collections::BTreeSet::new();
        let edges = raw_edges
            .into_iter()
            .filter_map(|(a, b, h)| {
                let (a, b) = (ids[a % n], ids[b % n]);
                (a != b && seen.insert((a, b))).then_some(DotEdge {
                    src: a,
                    dst: b,
                    label: if h { DotLabel::Hierarchical } else { DotLabel::Temporal },
                })
            })
            .collect();
        DotDocument { header, events, edges }
    }
}

prop_compose! {
    fn dag()(n in 1usize..9, bits in proptest::collection::vec(any::<bool>(), 28), perm_seed in any::<u64>())
        -> WeightedDigraph<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let mut g = WeightedDigraph::from_parts(0..n, []);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                if bits[k % bits.len()] {
                    g.add_edge(order[i], order[j], 1.0);
                }
                k += 1;
            }
        }
        g
    }
}

proptest! {
    #[test]
    fn jaro_winkler_symmetric_and_bounded(a in "[a-dA-D ]{0,12}", b in "[a-dA-D ]{0,12}") {
        let (x, y) = (jaro_winkler(&a, &b), jaro_winkler(&b, &a));
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((x - jaro_winkler_oracle(&a, &b)).abs() < 1e-12);
        if !a.is_empty() {
            prop_assert_eq!(jaro_winkler(&a, &a), 1.0);
        }
    }

    #[test]
    fn levenshtein_metric(a in "[abc]{0,7}", b in "[abc]{0,7}", c in "[abc]{0,7}") {
        let ab = levenshtein(&a, &b);
        prop_assert_eq!(ab, levenshtein_oracle(&a, &b));
        prop_assert_eq!(ab == 0, a == b);
        prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
    }

    #[test]
    fn duplicate_test_symmetric(
        da in "[a-z ]{1,30}", db in "[a-z ]{1,30}",
        na in "[A-Za-z ]{1,12}", nb in "[A-Za-z ]{1,12}",
    ) {
        let e = TrigramEmbedder::default();
        let (va, vb) = (e.embed(&da).unwrap(), e.embed(&db).unwrap());
        let t = DuplicateThresholds::default();
        let a = EventText { name: Some(&na), description: &da };
        let b = EventText { name: Some(&nb), description: &db };
        let x = compare_texts(a, &va, b, &vb, &t).unwrap();
        let y = compare_texts(b, &vb, a, &va, &t).unwrap();
        prop_assert_eq!(x.is_duplicate, y.is_duplicate);
    }

    #[test]
    fn event_list_parse_idempotent(text in "([-*0-9. ]{0,4}[A-Za-z][A-Za-z .,]{0,40}\n){0,6}") {
        let once = parse_event_list(&text);
        let twice = parse_event_list(&once.items.join("\n"));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn answer_masses_normalized(lps in proptest::collection::vec(-20.0f64..0.0, 5), which in proptest::collection::vec(0usize..6, 5)) {
        let tokens = [" Yes", " no", "UNKNOWN", " Maybe", "yes", " the"];
        let mut top = BTreeMap::new();
        for (lp, w) in lps.iter().zip(&which) {
            top.insert(tokens[*w].to_string(), *lp);
        }
        let resp = CompletionResponse { text: String::new(), token_logprobs: vec![top] };
        if let Ok(d) = parse_yes_no(&resp) {
            prop_assert!(d.yes >= 0.0 && d.no >= 0.0 && d.unknown >= 0.0);
            prop_assert!((d.yes + d.no + d.unknown - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn dot_round_trip(d in dot_document()) {
        let parsed = parse_dot(&d.to_string()).unwrap();
        prop_assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
        prop_assert_eq!(parsed.doc, d);
    }

    #[test]
    fn resolve_antisymmetric(sb in 0.0f64..=1.0, eb in 0.0f64..=1.0, d in 0.0f64..=1.0) {
        let s = RelationScores::new(sb, eb, d);
        let t = RelationThresholds::default();
        let r = resolve(&s, &t);
        prop_assert_eq!(resolve(&s.swapped(), &t), mirror(r));
        match r {
            PairRelation::Overlap | PairRelation::None => {}
            edge => {
                let w = edge_weight(&s, edge).unwrap();
                prop_assert!((0.0..=1.0).contains(&w));
            }
        }
    }

    #[test]
    fn reduction_idempotent(g in dag()) {
        let (once, _) = transitive_reduce(&g).unwrap();
        let (twice, removed) = transitive_reduce(&once).unwrap();
        prop_assert!(removed.is_empty());
        let a: Vec<_> = once.edges().map(|(x, y, _)| (*x, *y)).collect();
        let b: Vec<_> = twice.edges().map(|(x, y, _)| (*x, *y)).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn finalized_chapter_is_clean(
        n in 2usize..8,
        raw in proptest::collection::vec((0usize..8, 0usize..8, any::<bool>(), 1u32..100), 0..30),
    ) {
        let mut g = SchemaGraph::new("drill", None).unwrap();
        let c = EventId::from("drill");
        let ids: Vec<EventId> = (0..n)
            .map(|i| g.add_child(&c, &format!("event {i}"), &format!("thing {i} happens"), Provenance::Expansion).unwrap())
            .collect();
        for (a, b, hier, w) in raw {
            let (a, b) = (&ids[a % n], &ids[b % n]);
            if a != b {
                let kind = if hier { EdgeKind::Hierarchical } else { EdgeKind::Temporal };
                g.upsert_edge(Edge::new(a.clone(), b.clone(), kind, w as f64 / 100.0)).unwrap();
            }
        }
        finalize_chapter(&mut g, &c);
        prop_assert!(g.check_integrity().is_empty(), "{:?}", g.check_integrity());
        for e in g.edges() {
            let other = match e.kind {
                EdgeKind::Temporal => EdgeKind::Hierarchical,
                EdgeKind::Hierarchical => EdgeKind::Temporal,
            };
            prop_assert!(!g.has_edge(&e.src, &e.dst, other));
        }
        let json = g.to_json();
        prop_assert_eq!(SchemaGraph::from_json(&json).unwrap().to_json(), json);
    }
}

#[test]
fn f1_is_harmonic_mean() {
    for (p, r) in [(0.5, 0.25), (1.0, 1.0), (0.0, 0.0), (0.3, 0.9)] {
        let m = Prf::new(p, r);
        let want = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        assert!((m.f1 - want).abs() < 1e-12);
    }
}

#[test]
fn relation_scores_ignore_event_ids() {
    let golds = common::gold_schemas();
    let e = TrigramEmbedder::default();
    for (_, g) in golds {
        let renamed = g.relabel(|id| EventId::new(format!("{id}-x")));
        let (a, _) = evaluate(&g, &g, &e, None).unwrap();
        let (b, _) = evaluate(&renamed, &g, &e, None).unwrap();
        assert_eq!(a, b);
    }
}
