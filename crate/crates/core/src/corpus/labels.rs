use std::fmt;

/// Annotation types in label-id order.
pub const EVENT_TYPES: [&str; 7] = [
    "etime",
    "fname",
    "organizer",
    "participant",
    "place",
    "target",
    "trigger",
];

pub const NUM_TYPES: usize = EVENT_TYPES.len();
pub const NUM_LABELS: usize = 1 + 2 * NUM_TYPES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventType(u8);

impl EventType {
    pub fn from_index(i: usize) -> Option<Self> {
        (i < NUM_TYPES).then_some(Self(i as u8))
    }

    pub fn from_name(name: &str) -> Option<Self> {
        EVENT_TYPES.iter().position(|&t| t == name).map(|i| Self(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        EVENT_TYPES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = EventType> {
        (0..NUM_TYPES).map(|i| Self(i as u8))
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Position of a label within the BIO scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Outside,
    Begin(EventType),
    Inside(EventType),
}

/// A BIO label. Id 0 is `O`; type `k` has `B` at `1 + 2k` and `I` at `2 + 2k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(u8);

impl Label {
    pub const O: Label = Label(0);

    pub fn begin(t: EventType) -> Self {
        Self(1 + 2 * t.0)
    }

    pub fn inside(t: EventType) -> Self {
        Self(2 + 2 * t.0)
    }

    pub fn from_id(id: usize) -> Option<Self> {
        (id < NUM_LABELS).then_some(Self(id as u8))
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn tag(self) -> Tag {
        match self.0 {
            0 => Tag::Outside,
            n if n % 2 == 1 => Tag::Begin(EventType((n - 1) / 2)),
            n => Tag::Inside(EventType((n - 2) / 2)),
        }
    }

    pub fn event_type(self) -> Option<EventType> {
        match self.tag() {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }

    pub fn is_outside(self) -> bool {
        self.0 == 0
    }

    /// Parses the exact strings `O`, `B-<type>` and `I-<type>`.
    pub fn parse(s: &str) -> Option<Self> {
        if s == "O" {
            return Some(Self::O);
        }
        let (prefix, ty) = s.split_once('-')?;
        let ty = EventType::from_name(ty)?;
        match prefix {
            "B" => Some(Self::begin(ty)),
            "I" => Some(Self::inside(ty)),
            _ => None,
        }
    }

    pub fn all() -> impl Iterator<Item = Label> {
        (0..NUM_LABELS).map(|i| Self(i as u8))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tag() {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

/// The fixed label inventory shared by every corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelScheme;

impl LabelScheme {
    pub fn types(&self) -> &'static [&'static str] {
        &EVENT_TYPES
    }

    pub fn len(&self) -> usize {
        NUM_LABELS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> Vec<String> {
        Label::all().map(|l| l.to_string()).collect()
    }

    pub fn parse(&self, s: &str) -> Option<Label> {
        Label::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_labels_in_bijection_with_strings() {
        let names = LabelScheme.labels();
        assert_eq!(names.len(), 15);
        for (id, name) in names.iter().enumerate() {
            let l = Label::parse(name).unwrap();
            assert_eq!(l.id(), id);
            assert_eq!(&l.to_string(), name);
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 15);
    }

    #[test]
    fn id_layout() {
        assert_eq!(names_at(&[0, 1, 2, 13, 14]), ["O", "B-etime", "I-etime", "B-trigger", "I-trigger"]);
    }

    fn names_at(ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| Label::from_id(i).unwrap().to_string()).collect()
    }

    #[test]
    fn rejects_unknown_strings() {
        for bad in ["B-weapon", "o", "B-", "E-place", "I-Trigger", "", "B_place"] {
            assert_eq!(Label::parse(bad), None, "{bad}");
        }
        assert_eq!(Label::from_id(15), None);
    }
}
