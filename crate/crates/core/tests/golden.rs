//! Byte-stable outputs checked against files under `data/golden`. Run with
//! `UPDATE_GOLDEN=1` to rewrite them after an intended change.

mod common;

use std::path::Path;
use std::process::Command;

use common::data;
use eventschema::prompts::{TemplateId, TemplateSet};

fn compare(name: &str, actual: &str) {
    let path = data("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from golden file; rerun with UPDATE_GOLDEN=1 if intended");
}

const SLOTS: [(&str, &str); 10] = [
    ("scenario", "chemical spill"),
    ("evt.name", "Evacuate"),
    ("evt.description", "Residents leave the area around the spill."),
    ("chapter_evt.name", "Response"),
    ("chapter_evt.description", "Authorities contain the spill and protect residents."),
    ("e1.name", "Contain Spill"),
    ("e1.description", "Crews contain the spilled chemicals."),
    ("e2.name", "Clean Up"),
    ("e2.description", "Workers clean up the contaminated soil."),
    ("passages", ""),
];

#[test]
fn template_renders() {
    let t = TemplateSet::default();
    for id in TemplateId::ALL {
        let text = t.render(id, &SLOTS).unwrap();
        compare(&format!("templates/{}.txt", id.as_str()), &text);
    }
}

fn run(args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_eventschema")).args(args).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn toy_induction_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    run(&[
        "induce",
        "--scenario",
        "disease outbreak",
        "--chapters",
        data("toy/chapters.json").to_str().unwrap(),
        "--fixtures",
        data("fixtures/toy.jsonl").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    compare("toy/schema.json", &read(&out.join("schema.json")));
    compare("toy/schema.dot", &read(&out.join("schema.dot")));
    compare("toy/trace.jsonl", &read(&out.join("trace.jsonl")));
}

#[test]
fn baseline_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    run(&[
        "baseline-dot",
        "--scenario",
        "disease outbreak",
        "--chapters",
        data("toy/chapters.json").to_str().unwrap(),
        "--fixtures",
        data("fixtures/baseline_dot.jsonl").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    compare("baseline/completion.txt", &read(&out.join("completion.txt")));
    compare("baseline/schema.json", &read(&out.join("schema.json")));
}
