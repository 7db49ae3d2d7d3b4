//! Trace paths used to align evaluations across devices.
//!
//! Every export entry is keyed by the structural path of the builtin call
//! that wrote it: the call sites of enclosing aggregate functions, loop
//! iteration indices, branch outcomes and spawned-process keys. Devices only
//! exchange state at identical paths. On the wire a path travels as a
//! 4-byte FNV-1a digest.

use std::fmt;
use std::panic::Location;

use super::wire::Fnv32;

/// One segment of a trace path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    /// A source location, captured through `#[track_caller]`.
    Site(u32),
    /// An explicit call-site tag chosen by the program author.
    Named(u32),
    /// Loop iteration index; required when a call site runs more than once.
    Iter(u32),
    /// Outcome of an aligned conditional branch.
    Branch(bool),
    /// Digest of the key of a spawned process instance.
    Process(u32),
    /// Private slot of a builtin (e.g. spawn bookkeeping), never user-visible.
    Slot(u8),
}

impl Tag {
    pub fn site(location: &Location<'_>) -> Tag {
        let mut h = Fnv32::new();
        h.write(location.file().as_bytes());
        h.write(&location.line().to_le_bytes());
        h.write(&location.column().to_le_bytes());
        Tag::Site(h.finish())
    }

    fn feed(&self, h: &mut Fnv32) {
        let (discriminant, payload) = match *self {
            Tag::Site(v) => (0u8, v),
            Tag::Named(v) => (1, v),
            Tag::Iter(v) => (2, v),
            Tag::Branch(b) => (3, u32::from(b)),
            Tag::Process(v) => (4, v),
            Tag::Slot(v) => (5, u32::from(v)),
        };
        h.write(&[discriminant]);
        h.write(&payload.to_le_bytes());
    }
}

/// Full structural path of a builtin evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceKey {
    pub path: Vec<Tag>,
}

impl TraceKey {
    pub fn root() -> Self {
        TraceKey::default()
    }

    pub fn child(&self, tag: Tag) -> Self {
        let mut path = self.path.clone();
        path.push(tag);
        TraceKey { path }
    }

    pub fn digest(&self) -> TraceId {
        let mut h = Fnv32::new();
        for tag in &self.path {
            tag.feed(&mut h);
        }
        TraceId(h.finish())
    }

    pub fn in_branch(&self) -> bool {
        self.path.iter().any(|t| matches!(t, Tag::Branch(_)))
    }

    pub fn in_process(&self) -> bool {
        self.path.iter().any(|t| matches!(t, Tag::Process(_)))
    }
}

impl fmt::Display for TraceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/")?;
        for (i, tag) in self.path.iter().enumerate() {
            if i > 0 {
                write!(f, "/")?;
            }
            match tag {
                Tag::Site(v) => write!(f, "@{v:08x}")?,
                Tag::Named(v) => write!(f, "#{v}")?,
                Tag::Iter(v) => write!(f, "[{v}]")?,
                Tag::Branch(b) => write!(f, "?{b}")?,
                Tag::Process(v) => write!(f, "p{v:08x}")?,
                Tag::Slot(v) => write!(f, "${v}")?,
            }
        }
        Ok(())
    }
}

/// Wire form of a trace path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceId(pub u32);

impl fmt::Display for TraceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}", self.0)
    }
}

/// Incremental path builder: keeps the FNV state of every prefix so that
/// hashing a child path costs one tag, not the whole path.
#[derive(Debug, Clone)]
pub(crate) struct Cursor {
    tags: Vec<Tag>,
    states: Vec<Fnv32>,
}

impl Cursor {
    pub(crate) fn new() -> Self {
        Cursor {
            tags: Vec::new(),
            states: vec![Fnv32::new()],
        }
    }

    pub(crate) fn push(&mut self, tag: Tag) {
        let mut h = *self.states.last().expect("root state");
        tag.feed(&mut h);
        self.tags.push(tag);
        self.states.push(h);
    }

    #[cfg(test)]
    pub(crate) fn pop(&mut self) {
        self.tags.pop();
        self.states.pop();
    }

    pub(crate) fn depth(&self) -> usize {
        self.tags.len()
    }

    pub(crate) fn truncate(&mut self, depth: usize) {
        self.tags.truncate(depth);
        self.states.truncate(depth + 1);
    }

    /// Digest and full path of the current path extended by `tag`.
    pub(crate) fn peek(&self, tag: Tag) -> (TraceId, TraceKey) {
        let mut h = *self.states.last().expect("root state");
        tag.feed(&mut h);
        let mut path = self.tags.clone();
        path.push(tag);
        (TraceId(h.finish()), TraceKey { path })
    }
}
