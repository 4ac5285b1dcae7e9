use crate::corpus::{EventType, Label, Tag};

/// A typed half-open token span within one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chunk {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub kind: EventType,
}

/// Chunks of one label sequence, conlleval style: `I-X` after `O` or after a
/// different type opens a new chunk instead of being rejected.
pub fn extract_chunks(labels: &[Label]) -> Vec<Chunk> {
    extract_chunks_in(labels, 0)
}

pub fn extract_chunks_in(labels: &[Label], sentence: usize) -> Vec<Chunk> {
    let mut out = Vec::new();
    let mut open: Option<(EventType, usize)> = None;
    let mut close = |open: &mut Option<(EventType, usize)>, end: usize| {
        if let Some((kind, start)) = open.take() {
            out.push(Chunk { sentence, start, end, kind });
        }
    };
    for (i, label) in labels.iter().enumerate() {
        match label.tag() {
            Tag::Outside => close(&mut open, i),
            Tag::Begin(t) => {
                close(&mut open, i);
                open = Some((t, i));
            }
            Tag::Inside(t) => {
                if !matches!(open, Some((cur, _)) if cur == t) {
                    close(&mut open, i);
                    open = Some((t, i));
                }
            }
        }
    }
    close(&mut open, labels.len());
    out
}
