use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::labels::{Label, LabelScheme};
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub gold_label: Option<Label>,
}

impl Token {
    pub fn new(text: impl Into<String>, gold_label: Option<Label>) -> Self {
        Self {
            text: text.into(),
            gold_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub gold_positive: Option<bool>,
}

impl Sentence {
    /// Builds an annotated sentence from parallel word and label lists.
    pub fn labeled(words: &[&str], labels: &[Label]) -> Self {
        assert_eq!(words.len(), labels.len());
        Self {
            tokens: words
                .iter()
                .zip(labels)
                .map(|(w, &l)| Token::new(*w, Some(l)))
                .collect(),
            gold_positive: None,
        }
    }

    pub fn unlabeled(words: &[&str]) -> Self {
        Self {
            tokens: words.iter().map(|w| Token::new(*w, None)).collect(),
            gold_positive: None,
        }
    }

    pub fn labels(&self) -> Option<Vec<Label>> {
        self.tokens.iter().map(|t| t.gold_label).collect()
    }

    pub fn has_annotation(&self) -> bool {
        self.tokens
            .iter()
            .any(|t| t.gold_label.is_some_and(|l| !l.is_outside()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
    pub gold_positive: Option<bool>,
    pub has_token_annotations: bool,
}

impl Document {
    /// A document whose annotation flag is inferred from its tokens.
    pub fn new(id: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        let has_token_annotations = !sentences.is_empty()
            && sentences
                .iter()
                .all(|s| s.tokens.iter().all(|t| t.gold_label.is_some()));
        Self {
            id: id.into(),
            sentences,
            gold_positive: None,
            has_token_annotations,
        }
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    /// Sets sentence labels from token annotations and the document label from
    /// the sentences.
    pub fn derive_coarse(&mut self) -> Result<()> {
        if !self.has_token_annotations {
            return contract(format!("document {} has no token annotations", self.id));
        }
        let mut any = false;
        for s in &mut self.sentences {
            let positive = s.has_annotation();
            s.gold_positive = Some(positive);
            any |= positive;
        }
        self.gold_positive = Some(any);
        Ok(())
    }

    /// Drops token labels, keeping only coarse supervision.
    pub fn into_coarse(mut self, keep_sentence_labels: bool) -> Self {
        for s in &mut self.sentences {
            for t in &mut s.tokens {
                t.gold_label = None;
            }
            if !keep_sentence_labels {
                s.gold_positive = None;
            }
        }
        self.has_token_annotations = false;
        self
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.sentences.is_empty() {
            return Err(format!("document {} has no sentences", self.id));
        }
        for (i, s) in self.sentences.iter().enumerate() {
            if s.tokens.is_empty() {
                return Err(format!("document {}: sentence {i} is empty", self.id));
            }
            let labeled = s.tokens.iter().filter(|t| t.gold_label.is_some()).count();
            if self.has_token_annotations && labeled != s.tokens.len() {
                return Err(format!("document {}: sentence {i} lacks labels", self.id));
            }
            if !self.has_token_annotations && labeled != 0 {
                return Err(format!("document {}: sentence {i} has partial labels", self.id));
            }
        }
        if self.gold_positive == Some(false) {
            if self.sentences.iter().any(|s| s.has_annotation()) {
                return Err(format!("document {} is negative but has annotations", self.id));
            }
            if self.sentences.iter().any(|s| s.gold_positive == Some(true)) {
                return Err(format!("document {} is negative but has a positive sentence", self.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub scheme: LabelScheme,
    pub provenance: String,
}

impl Corpus {
    /// Validates documents and id uniqueness.
    pub fn new(documents: Vec<Document>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &documents {
            d.check().map_err(Error::Data)?;
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Data(format!("duplicate document id {}", d.id)));
            }
        }
        Ok(Self {
            documents,
            scheme: LabelScheme,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.documents.iter().map(|d| d.id.as_str()).collect()
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    /// Reads the JSONL document format.
    pub fn parse_bio(reader: impl BufRead, provenance: impl Into<String>) -> Result<Self> {
        let mut documents = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let record: DocRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            let doc = record.into_document().map_err(err)?;
            doc.check().map_err(err)?;
            if !seen.insert(doc.id.clone()) {
                return Err(err(format!("duplicate document id {}", doc.id)));
            }
            documents.push(doc);
        }
        Ok(Self {
            documents,
            scheme: LabelScheme,
            provenance: provenance.into(),
        })
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::parse_bio(text.as_bytes(), "inline")
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for d in &self.documents {
            serde_json::to_writer(&mut w, &DocRecord::from_document(d))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Applies [`Document::derive_coarse`] to every document.
    pub fn derive_coarse_labels(mut self) -> Result<Self> {
        for d in &mut self.documents {
            d.derive_coarse()?;
        }
        Ok(self)
    }

    /// Subset by document indices, in the given order.
    pub fn select(&self, indices: &[usize], provenance: impl Into<String>) -> Self {
        Self {
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            scheme: self.scheme,
            provenance: provenance.into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentenceRecord {
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positive: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocRecord {
    id: String,
    sentences: Vec<SentenceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positive: Option<bool>,
}

impl DocRecord {
    fn from_document(d: &Document) -> Self {
        Self {
            id: d.id.clone(),
            sentences: d
                .sentences
                .iter()
                .map(|s| SentenceRecord {
                    tokens: s.tokens.iter().map(|t| t.text.clone()).collect(),
                    labels: d
                        .has_token_annotations
                        .then(|| s.tokens.iter().map(|t| label_str(t.gold_label)).collect()),
                    positive: s.gold_positive,
                })
                .collect(),
            positive: d.gold_positive,
        }
    }

    fn into_document(self) -> std::result::Result<Document, String> {
        let labeled = self.sentences.iter().filter(|s| s.labels.is_some()).count();
        if labeled != 0 && labeled != self.sentences.len() {
            return Err(format!("document {} mixes labeled and unlabeled sentences", self.id));
        }
        let mut sentences = Vec::with_capacity(self.sentences.len());
        for (i, s) in self.sentences.into_iter().enumerate() {
            if s.tokens.is_empty() {
                return Err(format!("document {}: sentence {i} is empty", self.id));
            }
            let labels: Vec<Option<Label>> = match s.labels {
                None => vec![None; s.tokens.len()],
                Some(ls) => {
                    if ls.len() != s.tokens.len() {
                        return Err(format!(
                            "document {}: sentence {i} has {} tokens but {} labels",
                            self.id,
                            s.tokens.len(),
                            ls.len()
                        ));
                    }
                    ls.iter()
                        .map(|l| {
                            Label::parse(l)
                                .map(Some)
                                .ok_or_else(|| format!("unknown label {l:?}"))
                        })
                        .collect::<std::result::Result<_, _>>()?
                }
            };
            sentences.push(Sentence {
                tokens: s
                    .tokens
                    .into_iter()
                    .zip(labels)
                    .map(|(text, gold_label)| Token { text, gold_label })
                    .collect(),
                gold_positive: s.positive,
            });
        }
        Ok(Document {
            id: self.id,
            sentences,
            gold_positive: self.positive,
            has_token_annotations: labeled > 0,
        })
    }
}

fn label_str(l: Option<Label>) -> String {
    l.expect("annotated document has every label").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sample::{EXAMPLE_LABELS, EXAMPLE_WORDS};

    fn figure_line() -> String {
        serde_json::json!({"id": "fig", "sentences": [{"tokens": EXAMPLE_WORDS, "labels": EXAMPLE_LABELS}]})
            .to_string()
    }

    #[test]
    fn parses_the_bio_example() {
        let c = Corpus::parse_str(&figure_line()).unwrap();
        assert_eq!(c.len(), 1);
        let d = &c.documents[0];
        assert!(d.has_token_annotations);
        let got: Vec<String> = d.sentences[0]
            .labels()
            .unwrap()
            .iter()
            .map(|l| l.to_string())
            .collect();
        assert_eq!(got, EXAMPLE_LABELS);
        let derived = c.derive_coarse_labels().unwrap();
        assert_eq!(derived.documents[0].sentences[0].gold_positive, Some(true));
        assert_eq!(derived.documents[0].gold_positive, Some(true));
    }

    #[test]
    fn all_outside_is_valid_and_negative() {
        let line = r#"{"id":"a","sentences":[{"tokens":["x","y"],"labels":["O","O"]},{"tokens":["z"],"labels":["O"]},{"tokens":["w"],"labels":["O"]}]}"#;
        let c = Corpus::parse_str(line).unwrap().derive_coarse_labels().unwrap();
        let d = &c.documents[0];
        assert!(d.sentences.iter().all(|s| s.gold_positive == Some(false)));
        assert_eq!(d.gold_positive, Some(false));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let good = r#"{"id":"a","sentences":[{"tokens":["x"],"labels":["O"]}]}"#;
        let cases = [
            r#"{"id":"b","sentences":[{"tokens":["x"],"labels":["B-weapon"]}]}"#,
            r#"{"id":"b","sentences":[{"tokens":[]}]}"#,
            r#"{"id":"b","sentences":[{"tokens":["x","y"],"labels":["O"]}]}"#,
            r#"{"id":"a","sentences":[{"tokens":["x"]}]}"#,
            r#"{"id":"b","sentences":[]}"#,
            r#"{"id":"b","sentences":[{"tokens":["x"],"labels":["O"]},{"tokens":["y"]}]}"#,
            r#"{"id":"b","positive":false,"sentences":[{"tokens":["x"],"labels":["B-place"]}]}"#,
            r#"not json"#,
        ];
        for bad in cases {
            let text = format!("{good}\n\n{bad}\n");
            match Corpus::parse_str(&text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, 3, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn round_trips_through_jsonl() {
        let text = format!(
            "{}\n{}\n",
            figure_line(),
            r#"{"id":"n","sentences":[{"tokens":["a","b"],"positive":false}],"positive":false}"#
        );
        let c = Corpus::parse_str(&text).unwrap();
        assert_eq!(Corpus::parse_str(&c.to_jsonl()).unwrap(), c);
        let d = c.clone().derive_coarse_labels();
        assert!(d.is_err(), "unannotated document must be rejected");
    }

    #[test]
    fn derivation_is_idempotent() {
        let c = Corpus::parse_str(&figure_line()).unwrap();
        let once = c.derive_coarse_labels().unwrap();
        let twice = once.clone().derive_coarse_labels().unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn coarse_conversion_drops_token_labels() {
        let c = Corpus::parse_str(&figure_line()).unwrap().derive_coarse_labels().unwrap();
        let coarse = c.documents[0].clone().into_coarse(true);
        assert!(!coarse.has_token_annotations);
        assert_eq!(coarse.sentences[0].gold_positive, Some(true));
        assert!(coarse.sentences[0].tokens.iter().all(|t| t.gold_label.is_none()));
        assert_eq!(c.documents[0].clone().into_coarse(false).sentences[0].gold_positive, None);
    }
}
