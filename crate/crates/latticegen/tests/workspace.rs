use std::fs;
use std::path::{Path, PathBuf};

use latticegen::files::{generate_spl, read_suite};
use latticegen::io::{canonical_json, load_resources};
use latticegen::workspace::{object, read_patch, write_patch, Change, Gate, ObjectKind, Workspace, MANIFEST};
use latticegen::Error;
use serde_json::Value;

const DECLARATIVE: &str = "(e / chase :actor (c / cat) :actee (m / mouse))";

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

/// A scratch copy of the English resources.
fn scratch() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy-en.json");
    fs::copy(fixture("toy-en.json"), &path).unwrap();
    (dir, path)
}

fn get(ws: &Workspace, kind: ObjectKind, name: &str) -> Value {
    object(ws.current(), kind, name).unwrap().unwrap()
}

/// The same object with every occurrence of `from` replaced inside strings.
fn rewrite(v: &Value, from: &str, to: &str) -> Value {
    serde_json::from_str(&v.to_string().replace(from, to)).unwrap()
}

fn change(kind: ObjectKind, name: &str, after: Value) -> Change {
    Change { kind, name: name.into(), after: Some(after) }
}

fn flip_mood_type(ws: &Workspace) -> Change {
    let c = get(ws, ObjectKind::Chooser, "mood-type-chooser");
    change(ObjectKind::Chooser, "mood-type-chooser", rewrite(&c, "\"declarative\"", "\"interrogative\""))
}

fn say(ws: &Workspace, spl: &str) -> String {
    generate_spl(ws.current(), "en", spl, "").unwrap().string
}

#[test]
fn loading() {
    let loaded = load_resources(&[fixture("toy-en.json")]).unwrap();
    assert_eq!(loaded.resources.systems.len(), 25);
    assert_eq!(loaded.hash.len(), 64);
    let both = load_resources(&[fixture("toy-en.json"), fixture("toy-de.json")]).unwrap();
    assert_eq!(both.resources.language_codes.len(), 2);

    let none: [&Path; 0] = [];
    let Err(Error::ValidationFailed(report)) = load_resources(&none) else { panic!() };
    assert!(report.has_code("MISSING-ROOT"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"systems\": [\n    {,}\n  ]\n}\n").unwrap();
    match load_resources(&[&bad]).unwrap_err() {
        Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 6)),
        other => panic!("{other}"),
    }
}

#[test]
fn canonical_round_trip() {
    let (_dir, path) = scratch();
    let before = fs::read(&path).unwrap();
    Workspace::open(&path).unwrap().save().unwrap();
    assert_eq!(fs::read(&path).unwrap(), before);

    // A reformatted file saves back to the canonical bytes.
    let value: Value = serde_json::from_slice(&before).unwrap();
    fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
    Workspace::open(&path).unwrap().save().unwrap();
    assert_eq!(fs::read(&path).unwrap(), before);
    assert_eq!(canonical_json(&value).as_bytes(), &before[..]);
}

#[test]
fn an_edit_changes_generation() {
    let (_dir, path) = scratch();
    let mut ws = Workspace::open(&path).unwrap();
    assert_eq!(say(&ws, DECLARATIVE), "The cat chases the mouse.");
    let c = flip_mood_type(&ws);
    let edit = ws.record_edit(c).unwrap();
    assert!(edit.before.is_some());
    assert_eq!(ws.pending().len(), 1);
    assert_eq!(say(&ws, DECLARATIVE), "Does the cat chase the mouse?");
    assert!(ws.current_label().contains("+pending-"));
    assert_eq!(generate_spl(ws.base(), "en", DECLARATIVE, "").unwrap().string, "The cat chases the mouse.");
}

#[test]
fn an_inverse_edit_restores_the_base() {
    let (_dir, path) = scratch();
    let mut ws = Workspace::open(&path).unwrap();
    let original = get(&ws, ObjectKind::Chooser, "mood-type-chooser");
    let c = flip_mood_type(&ws);
    ws.record_edit(c).unwrap();
    ws.record_edit(change(ObjectKind::Chooser, "mood-type-chooser", original)).unwrap();
    assert_eq!(ws.current(), ws.base());
    assert_eq!(canonical_json(ws.current()), canonical_json(ws.base()));
}

#[test]
fn invalid_edits_roll_back() {
    let (_dir, path) = scratch();
    let mut ws = Workspace::open(&path).unwrap();
    // RANK is entered by the root; making it depend on MOOD closes a cycle.
    let mut rank = get(&ws, ObjectKind::System, "RANK");
    rank["entry"] = Value::String("indicative".into());
    let before = ws.current().clone();
    let Err(Error::ValidationFailed(report)) = ws.record_edit(change(ObjectKind::System, "RANK", rank)) else {
        panic!()
    };
    assert!(report.has_code("CYCLE"), "{report:?}");
    assert_eq!(ws.current(), &before);
    assert!(ws.pending().is_empty());

    let renamed = rewrite(&get(&ws, ObjectKind::Lexeme, "cat"), "\"cat\"", "\"kitty\"");
    let err = ws.record_edit(change(ObjectKind::Lexeme, "cat", renamed)).unwrap_err();
    assert_eq!(err.code(), "MALFORMED-OBJECT");
    let err = ws.record_edit(Change { kind: ObjectKind::Lexeme, name: "unicorn".into(), after: None }).unwrap_err();
    assert_eq!(err.code(), "UNKNOWN-OBJECT");
}

#[test]
fn patches_keep_edit_order() {
    let (_dir, path) = scratch();
    let mut ws = Workspace::open(&path).unwrap();
    assert_eq!(ws.create_patch("nothing").unwrap_err().code(), "EMPTY-PATCH");
    let c = flip_mood_type(&ws);
    ws.record_edit(c).unwrap();
    let mut dog = get(&ws, ObjectKind::Lexeme, "dog");
    dog["name"] = "hound".into();
    ws.record_edit(change(ObjectKind::Lexeme, "hound", dog)).unwrap();
    let patch = ws.create_patch("two edits").unwrap();
    let names: Vec<&str> = patch.edits.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["mood-type-chooser", "hound"]);
    assert_eq!(patch.edits[1].before, None);
    assert!(ws.pending().is_empty());
    assert_eq!(say(&ws, DECLARATIVE), "Does the cat chase the mouse?", "the shadow stays active");

    let dir = tempfile::tempdir().unwrap();
    let file = write_patch(dir.path(), &patch).unwrap();
    assert!(file.to_string_lossy().ends_with(".patch.json"));
    assert_eq!(read_patch(&file).unwrap(), patch);
}

#[test]
fn accept_reload_and_stale_patches() {
    let (dir, path) = scratch();
    let mut ws = Workspace::open(&path).unwrap();
    let base = ws.version().base.clone();
    let c = flip_mood_type(&ws);
    ws.record_edit(c).unwrap();
    let patch = ws.create_patch("ask everything").unwrap();
    let file = write_patch(dir.path(), &patch).unwrap();
    let version = ws.accept_patches(Gate::default()).unwrap().clone();
    assert_eq!(version.patches, std::slice::from_ref(&patch.id));
    assert_eq!(version.base, base);
    assert!(dir.path().join(MANIFEST).exists());

    // The rewritten file and the manifest describe the accepted state.
    let reopened = Workspace::open(&path).unwrap();
    assert_eq!(reopened.version(), &version);
    assert_eq!(say(&reopened, DECLARATIVE), "Does the cat chase the mouse?");
    assert_eq!(reopened.current(), ws.current());

    // The same patch again, in this workspace and in a fresh one.
    let mut again = Workspace::open(&path).unwrap();
    assert_eq!(again.queue_patch(read_patch(&file).unwrap()).unwrap_err().code(), "STALE-PATCH");
    let mut other = Workspace::new(reopened.current().clone()).unwrap();
    assert_eq!(other.queue_patch(read_patch(&file).unwrap()).unwrap_err().code(), "STALE-PATCH");

    // A patch recorded against the original file is stale after the accept.
    let (_d2, pristine) = scratch();
    let mut old = Workspace::open(&pristine).unwrap();
    let mut chooser = get(&old, ObjectKind::Chooser, "mood-type-chooser");
    chooser["tree"] = serde_json::json!({ "actions": [{ "choose": "declarative" }] });
    old.record_edit(change(ObjectKind::Chooser, "mood-type-chooser", chooser)).unwrap();
    let competing = old.create_patch("").unwrap();
    match again.queue_patch(competing).unwrap_err() {
        Error::StalePatch { name, .. } => assert_eq!(name, "mood-type-chooser"),
        other => panic!("{other}"),
    }
}

#[test]
fn inverse_patch_restores_the_base() {
    let (_dir, path) = scratch();
    let mut ws = Workspace::open(&path).unwrap();
    let base = ws.base().clone();
    let c = flip_mood_type(&ws);
    ws.record_edit(c).unwrap();
    ws.record_edit(Change { kind: ObjectKind::Lexeme, name: "cheese".into(), after: None }).unwrap();
    let patch = ws.create_patch("").unwrap();
    for undo in patch.inverse(&base).unwrap() {
        ws.record_edit(undo).unwrap();
    }
    assert_eq!(ws.current(), &base);
}

/// Rewrites every THEME system. `keep_fronting` decides whether marked
/// Themes still go first, which the recorded `yesterday-marked` example
/// depends on.
fn replace_theme(ws: &mut Workspace, keep_fronting: bool) {
    let names: Vec<String> =
        ws.current().systems.iter().filter(|s| s.region == "THEME").map(|s| s.name.clone()).collect();
    assert_eq!(names.len(), 4);
    for name in names {
        let mut s = rewrite(&get(ws, ObjectKind::System, &name), ".1\"", ".v2\"");
        if name == "THEME-SELECTION" && !keep_fronting {
            let marked = &mut s["outputs"][1]["realizations"];
            marked.as_array_mut().unwrap().retain(|r| r["op"] != "order-at-front");
        }
        ws.record_edit(change(ObjectKind::System, &name, s)).unwrap();
    }
}

#[test]
fn region_replacement_is_gated_by_the_suite() {
    let suite = read_suite(&fixture("toy-en.suite.json")).unwrap();
    let (_dir, path) = scratch();
    let mut ws = Workspace::open(&path).unwrap();
    replace_theme(&mut ws, false);
    let patch = ws.create_patch("THEME v2").unwrap();
    assert_eq!(latticegen::workspace::replaced_regions(ws.base(), &patch).into_iter().collect::<Vec<_>>(), ["THEME"]);

    assert_eq!(ws.accept_patches(Gate::default()).unwrap_err().code(), "SUITE-REQUIRED");
    let gate = Gate { suite: Some(&suite), force: false };
    let Err(Error::SuiteRegression(report)) = ws.accept_patches(gate) else { panic!() };
    let failing: Vec<&str> = report.rows.iter().filter(|r| r.diff.is_some()).map(|r| r.name.as_str()).collect();
    assert_eq!(failing, ["yesterday-marked"]);
    assert!(ws.version().patches.is_empty(), "a blocked accept changes nothing");

    // Restore the fronting statement; the suite now passes and the
    // replacement goes in together with the fix.
    let mut fixed = get(&ws, ObjectKind::System, "THEME-SELECTION");
    fixed["outputs"][1]["realizations"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!({ "id": "marked-theme.v3", "op": "order-at-front", "function": "Theme" }));
    ws.record_edit(change(ObjectKind::System, "THEME-SELECTION", fixed)).unwrap();
    let version = ws.accept_patches(gate).unwrap();
    assert_eq!(version.patches.len(), 2);
}

#[test]
fn forcing_skips_the_gate() {
    let (_dir, path) = scratch();
    let mut ws = Workspace::open(&path).unwrap();
    replace_theme(&mut ws, false);
    let version = ws.accept_patches(Gate { suite: None, force: true }).unwrap();
    assert_eq!(version.patches.len(), 1);
}

#[test]
fn edits_outside_a_whole_region_need_no_suite() {
    let (_dir, path) = scratch();
    let mut ws = Workspace::open(&path).unwrap();
    let c = flip_mood_type(&ws);
    ws.record_edit(c).unwrap();
    assert!(ws.accept_patches(Gate::default()).is_ok());
}
