//! A small annotated sentence used by tests and documentation.

use super::document::{Document, Sentence};
use super::labels::Label;

pub const EXAMPLE_WORDS: [&str; 16] = [
    "In", "August", "that", "year", ",", "militantly", "aggressive", "Kurmis", "mowed", "down",
    "14", "Dalits", "in", "Nalanda", "district", ".",
];

pub const EXAMPLE_LABELS: [&str; 16] = [
    "B-etime",
    "I-etime",
    "I-etime",
    "I-etime",
    "O",
    "O",
    "O",
    "B-participant",
    "B-trigger",
    "I-trigger",
    "O",
    "B-target",
    "O",
    "B-place",
    "I-place",
    "O",
];

pub fn example_labels() -> Vec<Label> {
    EXAMPLE_LABELS
        .iter()
        .map(|s| Label::parse(s).expect("valid label"))
        .collect()
}

pub fn example_sentence() -> Sentence {
    Sentence::labeled(&EXAMPLE_WORDS, &example_labels())
}

pub fn example_document(id: &str) -> Document {
    Document::new(id, vec![example_sentence()])
}
