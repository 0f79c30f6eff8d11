#![allow(dead_code)]

use latticegen_core::resources::{LanguageView, ResourceSet};
use latticegen_core::spl::parse_spl;
use latticegen_core::GenerationResult;

pub fn load(name: &str) -> ResourceSet {
    let path = format!("{}/fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn en() -> LanguageView {
    load("toy-en").view("en").unwrap()
}

pub fn de() -> LanguageView {
    load("toy-de").view("de").unwrap()
}

pub fn gen(view: &LanguageView, spl: &str) -> GenerationResult {
    latticegen_core::generate(view, &parse_spl(spl).unwrap())
}

/// The fifteen reference inputs and the strings they must produce.
pub const SENTENCES: [(&str, &str, &str); 15] = [
    ("chase-declarative", "(e / chase :actor (c / cat) :actee (m / mouse))", "The cat chases the mouse."),
    ("chase-question", "(e / chase :actor (c / cat) :actee (m / mouse) :speech-act question)", "Does the cat chase the mouse?"),
    ("chase-negative", "(e / chase :actor (c / cat) :actee (m / mouse) :polarity negative)", "The cat does not chase the mouse."),
    ("chase-past", "(e / chase :actor (c / cat) :actee (m / mouse) :tense past)", "The cat chased the mouse."),
    ("cats-plural", "(e / chase :actor (c / cat :number plural) :actee (m / mouse))", "The cats chase the mouse."),
    ("dog-bites-mice", "(e / bite :actor (d / dog) :actee (m / mouse :number plural))", "The dog bites the mice."),
    ("felix-named", "(e / chase :actor (f / felix) :actee (m / mouse))", "Felix chases the mouse."),
    ("cat-sees-bird", "(e / see :actor (c / cat) :actee (b / bird))", "The cat sees the bird."),
    ("rex-knows-question", "(e / know :actor (r / rex) :actee (c / cat) :speech-act question)", "Does Rex know the cat?"),
    ("cat-sleeps", "(e / sleep :actor (c / cat))", "The cat sleeps."),
    ("chase-imperative", "(e / chase :actee (m / mouse) :speech-act command)", "Chase the mouse."),
    ("yesterday-marked", "(e / chase :actor (c / cat) :actee (m / mouse) :tense past :time (t / yesterday) :theme time)", "Yesterday the cat chased the mouse."),
    ("today-unmarked", "(e / eat :actor (d / dog) :actee (k / cheese) :tense past :time (t / today))", "The dog ate the cheese today."),
    ("dog-runs-quickly", "(e / run :actor (d / dog) :manner (q / quickly))", "The dog runs quickly."),
    (
        "big-cat-birds",
        "(e / catch :actor (c / cat :identifiability unidentifiable :quality (g / big :intensity high)) :actee (b / bird :proximity near :number plural :quality (s / small)))",
        "A very big cat catches these small birds.",
    ),
];
