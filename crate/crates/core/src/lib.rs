//! Conversational entity linking.
//!
//! Links explicit mentions (named entities and concepts) to a knowledge base and
//! resolves personal mentions such as "my cars" to the explicit mentions they refer
//! to, inheriting their entities.

pub mod annotation;
pub mod checkpoint;
pub mod ed;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod md;
pub mod nn;
pub mod pel;
pub mod pem;
pub mod pipeline;
pub mod synth;
pub mod tokenize;
pub mod types;

pub use annotation::{ConversationAnnotation, Split, TurnAnnotation};
pub use error::{Error, Result};
pub use types::{Conversation, EntityLink, MentionKind, MentionSpan, PersonalEntityLink, Pos, Speaker, Token, Turn};
