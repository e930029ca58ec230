use std::fs;
use std::path::{Path, PathBuf};

use eventschema::llm::{CompletionRequest, Provider, Sampling};
use eventschema::prompts::{parse_yes_no, TemplateId, TemplateSet};
use toyworld::{disease_outbreak, generate, overflow_drill, resample_drill, ToyModel};

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data")
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for sub in ["toy", "fixtures", "gold"] {
        for e in fs::read_dir(root.join(sub)).unwrap() {
            out.push(Path::new(sub).join(e.unwrap().file_name()));
        }
    }
    out.sort();
    out
}

/// The checked-in data must be exactly what the generator produces; rerun
/// `cargo run -p toyworld --bin toyworld-gen` after changing the world.
#[test]
fn bundled_data_matches_generator() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path()).unwrap();
    let fresh = files(tmp.path());
    assert_eq!(fresh, files(&bundled()));
    for f in fresh {
        let a = fs::read(tmp.path().join(&f)).unwrap();
        let b = fs::read(bundled().join(&f)).unwrap();
        assert!(a == b, "{} is stale", f.display());
    }
}

#[test]
fn gold_schemas_are_well_formed() {
    for w in [disease_outbreak(), resample_drill(), overflow_drill()] {
        let g = w.gold();
        assert!(g.check_integrity().is_empty(), "{}: {:?}", w.scenario, g.check_integrity());
        assert_eq!(g.events().filter(|e| !e.is_chapter).count(), w.events.len());
    }
    assert!(toyworld::chemical_spill_gold().check_integrity().is_empty());
}

#[test]
fn interval_answers() {
    let m = ToyModel::new(disease_outbreak());
    let t = TemplateSet::default();
    let ask = |id, a: &str, b: &str| {
        let prompt = t.render(id, &[("e1.description", a), ("e2.description", b)]).unwrap();
        let resp = m.complete(&CompletionRequest::new(prompt, &Sampling::default(), 8)).unwrap();
        parse_yes_no(&resp).unwrap()
    };
    let spread = "The disease spreads quickly through crowded areas.";
    let transmit = "Infected people pass the virus to their close contacts.";
    assert!(ask(TemplateId::RelStart, spread, transmit).yes > 0.5);
    assert!(ask(TemplateId::RelEnd, spread, transmit).no > 0.5);
    assert!(ask(TemplateId::RelDuration, spread, transmit).yes > 0.5);
    assert!(ask(TemplateId::RelStartAfter, spread, transmit).no > 0.5);
    let stranger = ask(TemplateId::RelStart, spread, "Aliens land.");
    assert!(stranger.unknown > 0.5);
}

#[test]
fn corpus_shape() {
    let docs = toyworld::corpus();
    assert_eq!(docs.len(), 50);
    let short = docs
        .iter()
        .filter(|(_, t)| eventschema::retrieval::split_sentences(t).len() < 4)
        .count();
    assert_eq!(short, 10);
}
