//! Storage and analysis engine for geo-tagged social-media status streams.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod error;
pub mod fulltext;
pub mod geocluster;
pub mod htm;
pub mod jsonstream;
pub mod langid;
pub mod model;
pub mod pipeline;
pub mod query;
pub mod regions;
pub mod store;
pub mod synth;

pub use codec::{Key, Record, TableId};
pub use error::{Error, Result};
pub use model::{ClusterSummary, Lang, MentionEdge, RetweetEdge, TweetRow, UserRow, UserSnapshot, UserUpdateRow};
