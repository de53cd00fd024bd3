//! The catalog of one committed warehouse generation.
//!
//! `MANIFEST-<gen>` holds `{"checksum": crc32, "body": {...}}` where the
//! checksum covers the compact JSON serialization of the body. A manifest
//! is written to a temporary name, synced and renamed; the highest
//! generation that parses and verifies is the live one.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::TableId;
use crate::error::{Error, Result};

pub const MANIFEST_PREFIX: &str = "MANIFEST-";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMeta {
    /// Path relative to the warehouse root.
    pub file: String,
    pub rows: u64,
    pub generation: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    TweetByUser,
    TweetByHtm,
    MentionInverse,
    RetweetInverse,
    TextFiltered,
    TextUnfiltered,
}

impl IndexKind {
    pub const ALL: [IndexKind; 6] = [
        IndexKind::TweetByUser,
        IndexKind::TweetByHtm,
        IndexKind::MentionInverse,
        IndexKind::RetweetInverse,
        IndexKind::TextFiltered,
        IndexKind::TextUnfiltered,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::TweetByUser => "tweet_by_user",
            IndexKind::TweetByHtm => "tweet_by_htm",
            IndexKind::MentionInverse => "mention_inverse",
            IndexKind::RetweetInverse => "retweet_inverse",
            IndexKind::TextFiltered => "text",
            IndexKind::TextUnfiltered => "text_unfiltered",
        }
    }

    /// The base table an index is derived from.
    pub fn table(self) -> TableId {
        match self {
            IndexKind::MentionInverse => TableId::Mention,
            IndexKind::RetweetInverse => TableId::Retweet,
            _ => TableId::Tweet,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub kind: IndexKind,
    pub file: String,
    pub entries: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub generation: u64,
    /// Live segments per table name.
    pub tables: BTreeMap<String, Vec<SegmentMeta>>,
    pub indexes: Vec<IndexMeta>,
    /// Stage names folded into this generation; leftovers are deleted on open.
    pub consumed_stages: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    checksum: u32,
    body: Manifest,
}

impl Manifest {
    pub fn segments(&self, table: TableId) -> &[SegmentMeta] {
        self.tables.get(table.name()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn index(&self, kind: IndexKind) -> Option<&IndexMeta> {
        self.indexes.iter().find(|i| i.kind == kind)
    }

    pub fn file_name(generation: u64) -> String {
        format!("{MANIFEST_PREFIX}{generation}")
    }

    fn checksum(&self) -> u32 {
        crc32fast::hash(&serde_json::to_vec(self).expect("manifest serializes"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec(&Envelope { checksum: self.checksum(), body: self.clone() }).expect("serializes");
        v.push(b'\n');
        v
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Manifest> {
        let env: Envelope = serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if env.body.checksum() != env.checksum {
            return Err(Error::Format("manifest checksum mismatch".into()));
        }
        Ok(env.body)
    }

    /// Write `MANIFEST-<gen>.tmp`, sync it, and return its path. The caller
    /// renames it with [`Manifest::publish`].
    pub fn write_tmp(&self, root: &Path) -> Result<PathBuf> {
        let tmp = root.join(format!("{}.tmp", Manifest::file_name(self.generation)));
        let mut f = File::create(&tmp).map_err(Error::at(&tmp))?;
        f.write_all(&self.to_bytes()).map_err(Error::at(&tmp))?;
        f.sync_all().map_err(Error::at(&tmp))?;
        Ok(tmp)
    }

    pub fn publish(&self, root: &Path, tmp: &Path) -> Result<()> {
        let dst = root.join(Manifest::file_name(self.generation));
        fs::rename(tmp, &dst).map_err(Error::at(&dst))?;
        if let Ok(d) = File::open(root) {
            let _ = d.sync_all();
        }
        Ok(())
    }
}

/// Generations of every `MANIFEST-<gen>` file in `root`, highest first.
pub fn manifest_generations(root: &Path) -> Result<Vec<u64>> {
    let mut gens = Vec::new();
    for e in fs::read_dir(root).map_err(Error::at(root))? {
        let e = e.map_err(Error::at(root))?;
        let name = e.file_name();
        let name = name.to_string_lossy();
        if let Some(g) = name.strip_prefix(MANIFEST_PREFIX).and_then(|g| g.parse::<u64>().ok()) {
            gens.push(g);
        }
    }
    gens.sort_unstable_by(|a, b| b.cmp(a));
    Ok(gens)
}

/// The newest manifest that verifies.
pub fn load_latest(root: &Path) -> Result<Manifest> {
    for g in manifest_generations(root)? {
        let path = root.join(Manifest::file_name(g));
        let Ok(bytes) = fs::read(&path) else { continue };
        match Manifest::from_bytes(&bytes) {
            Ok(m) if m.generation == g => return Ok(m),
            Ok(_) => log::warn!("{}: generation mismatch, skipped", path.display()),
            Err(e) => log::warn!("{}: {e}, skipped", path.display()),
        }
    }
    Err(Error::NoManifest(root.to_path_buf()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_checksum() {
        let mut m = Manifest { generation: 4, ..Manifest::default() };
        m.tables.insert("tweet".into(), vec![SegmentMeta { file: "tweet/seg-4-0.twseg".into(), rows: 9, generation: 4 }]);
        m.indexes.push(IndexMeta { kind: IndexKind::TweetByHtm, file: "idx/x".into(), entries: 3 });
        let bytes = m.to_bytes();
        assert_eq!(Manifest::from_bytes(&bytes).unwrap(), m);
        let tampered = String::from_utf8(bytes).unwrap().replace("\"rows\":9", "\"rows\":8");
        assert!(Manifest::from_bytes(tampered.as_bytes()).is_err());
    }

    #[test]
    fn newest_valid_wins() {
        let dir = tempfile::tempdir().unwrap();
        for g in [1, 2] {
            let m = Manifest { generation: g, ..Manifest::default() };
            let tmp = m.write_tmp(dir.path()).unwrap();
            m.publish(dir.path(), &tmp).unwrap();
        }
        fs::write(dir.path().join("MANIFEST-3"), b"{garbage").unwrap();
        fs::write(dir.path().join("MANIFEST-5.tmp"), b"{}").unwrap();
        assert_eq!(load_latest(dir.path()).unwrap().generation, 2);
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_latest(empty.path()), Err(Error::NoManifest(_))));
    }
}
