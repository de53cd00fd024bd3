//! Sorted-segment table storage.
//!
//! Bulk files are staged verbatim as unsorted segments under
//! `<root>/stage/<table>/`, sorted in place, then folded into the live
//! tables by a batch merge that rewrites each touched table as one new
//! segment. Rewriting the whole table on every merge takes the place of
//! leaving slack in index pages for mid-keyspace inserts: historical tweets
//! land in the middle of the key order at no extra cost. The `user` and
//! `user_update` tables are recreated from the full snapshot history each
//! time `user_snapshot` changes.
//!
//! A merge (or index rebuild) becomes visible only when its manifest is
//! renamed into place; files of older generations are deleted afterwards.
//! One writer at a time holds `<root>/LOCK`. Readers take a [`Snapshot`],
//! which keeps its own file handles and is unaffected by later commits.

pub mod index;
pub mod manifest;
pub mod merge;
pub mod segment;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::ops::{Bound, RangeBounds};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::codec::{decode_bulk, read_bulk_header, Key, Record, TableId};
use crate::error::{Error, Result};
use crate::fulltext::{FilterConfig, TextIndex, TextIndexBuilder};
use crate::model::{ClusterSummary, MentionEdge, RetweetEdge, TweetRow, UserRow, UserSnapshot, UserUpdateRow};

pub use index::{ByHtmEntry, ByUserEntry, IndexEntry, MentionInvEntry, RetweetInvEntry};
pub use manifest::{IndexKind, IndexMeta, Manifest, SegmentMeta};
pub use merge::MergeCounts;
pub use segment::{Segment, SegmentInfo, SegmentWriter};

pub const STAGE_DIR: &str = "stage";
pub const INDEX_DIR: &str = "idx";
pub const LOCK_FILE: &str = "LOCK";

/// Run `$body` with `$R` bound to the row type of `$table`.
#[macro_export]
macro_rules! with_record {
    ($table:expr, $R:ident => $body:expr) => {
        match $table {
            $crate::codec::TableId::Tweet => {
                type $R = $crate::model::TweetRow;
                $body
            }
            $crate::codec::TableId::UserSnapshot => {
                type $R = $crate::model::UserSnapshot;
                $body
            }
            $crate::codec::TableId::Mention => {
                type $R = $crate::model::MentionEdge;
                $body
            }
            $crate::codec::TableId::Retweet => {
                type $R = $crate::model::RetweetEdge;
                $body
            }
            $crate::codec::TableId::ClusterSummary => {
                type $R = $crate::model::ClusterSummary;
                $body
            }
            $crate::codec::TableId::User => {
                type $R = $crate::model::UserRow;
                $body
            }
            $crate::codec::TableId::UserUpdate => {
                type $R = $crate::model::UserUpdateRow;
                $body
            }
        }
    };
}

/// Places in a merge where a test can simulate a crash.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultPoint {
    AfterSegmentsWritten,
    AfterManifestTmp,
    AfterCommitBeforeCleanup,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageInfo {
    pub table: TableId,
    pub name: String,
    pub path: PathBuf,
    pub rows: u64,
    pub sorted: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MergeReport {
    pub generation: u64,
    pub stages: usize,
    pub tables: BTreeMap<TableId, MergeCounts>,
}

impl MergeReport {
    pub fn duplicates_dropped(&self) -> u64 {
        self.tables.values().map(|c| c.duplicates_dropped).sum()
    }
}

/// Options for [`Warehouse::rebuild_secondary_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[derive(Default)]
pub struct IndexOptions {
    pub text_filter: FilterConfig,
    /// Also build a text index with the noise filter off, for size comparison.
    pub unfiltered_text: bool,
}


struct LockFile {
    path: PathBuf,
}

impl LockFile {
    fn acquire(root: &Path) -> Result<LockFile> {
        let path = root.join(LOCK_FILE);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    f.write_all(std::process::id().to_string().as_bytes()).map_err(Error::at(&path))?;
                    f.sync_all().map_err(Error::at(&path))?;
                    return Ok(LockFile { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).ok().and_then(|s| s.trim().parse::<u32>().ok());
                    let alive = holder.is_some_and(|pid| Path::new(&format!("/proc/{pid}")).exists());
                    if alive {
                        return Err(Error::Locked(root.to_path_buf()));
                    }
                    log::warn!("removing stale lock {}", path.display());
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(Error::IoAt { path, source: e }),
            }
        }
        Err(Error::Locked(root.to_path_buf()))
    }
}

impl Drop for LockFile {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn rel(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).to_string_lossy().into_owned()
}

/// New segments of one table and what the merge did.
type TableMerge = (Vec<(TableId, SegmentMeta)>, MergeCounts);

/// Writer handle on a warehouse directory.
pub struct Warehouse {
    root: PathBuf,
    manifest: Manifest,
    fault: Option<FaultPoint>,
    next_stage: u64,
    _lock: LockFile,
}

impl Warehouse {
    /// Open (creating if needed) and recover: the newest valid manifest
    /// wins, and files no manifest refers to are removed.
    pub fn open(root: impl AsRef<Path>) -> Result<Warehouse> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(Error::at(&root))?;
        let lock = LockFile::acquire(&root)?;
        let manifest = match manifest::load_latest(&root) {
            Ok(m) => Some(m),
            Err(Error::NoManifest(_)) => None,
            Err(e) => return Err(e),
        };
        let mut wh = Warehouse { root, manifest: Manifest::default(), fault: None, next_stage: 0, _lock: lock };
        match manifest {
            Some(m) => wh.manifest = m,
            None => {
                let mut m = Manifest::default();
                for t in TableId::ALL {
                    m.tables.insert(t.name().to_string(), Vec::new());
                }
                wh.commit(m)?;
            }
        }
        wh.cleanup()?;
        wh.next_stage = wh.stages()?.len() as u64;
        while wh.stage_names().contains(&wh.stage_name(wh.next_stage)) {
            wh.next_stage += 1;
        }
        Ok(wh)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn generation(&self) -> u64 {
        self.manifest.generation
    }

    pub fn inject_fault(&mut self, point: Option<FaultPoint>) {
        self.fault = point;
    }

    fn check_fault(&self, point: FaultPoint) -> Result<()> {
        if self.fault == Some(point) {
            return Err(Error::Injected(format!("{point:?}")));
        }
        Ok(())
    }

    fn stage_name(&self, n: u64) -> String {
        format!("{}-{n}", self.manifest.generation)
    }

    fn stage_names(&self) -> BTreeSet<String> {
        self.stages().unwrap_or_default().into_iter().map(|s| s.name).collect()
    }

    fn stage_path(&self, table: TableId, name: &str) -> PathBuf {
        self.root.join(STAGE_DIR).join(table.name()).join(format!("{name}.twseg"))
    }

    /// Stage bulk files verbatim, one unsorted segment per file. A file whose
    /// header, table or row count does not check out is rejected.
    pub fn bulk_insert<P: AsRef<Path>>(&mut self, files: &[P]) -> Result<Vec<StageInfo>> {
        let mut out = Vec::with_capacity(files.len());
        for f in files {
            let f = f.as_ref();
            let bytes = fs::read(f).map_err(Error::at(f))?;
            let (table, _) = read_bulk_header(&bytes).map_err(|e| Error::Format(format!("{}: {e}", f.display())))?;
            if !table.is_loadable() {
                return Err(Error::Invalid(format!("{}: table {table} is derived and cannot be loaded", f.display())));
            }
            let info = with_record!(table, R => {
                let rows: Vec<R> = decode_bulk(&bytes).map_err(|e| Error::Format(format!("{}: {e}", f.display())))?;
                self.stage_rows(&rows)?
            });
            out.push(info);
        }
        Ok(out)
    }

    /// Stage rows directly.
    pub fn stage_rows<R: Record>(&mut self, rows: &[R]) -> Result<StageInfo> {
        let name = self.stage_name(self.next_stage);
        self.next_stage += 1;
        let path = self.stage_path(R::TABLE, &name);
        let info = segment::write_segment(&path, rows, false)?;
        Ok(StageInfo { table: R::TABLE, name, path, rows: info.rows, sorted: false })
    }

    /// Staged segments in table then name order.
    pub fn stages(&self) -> Result<Vec<StageInfo>> {
        let mut out = Vec::new();
        for t in TableId::ALL {
            let dir = self.root.join(STAGE_DIR).join(t.name());
            let Ok(rd) = fs::read_dir(&dir) else { continue };
            let mut names = Vec::new();
            for e in rd {
                let e = e.map_err(Error::at(&dir))?;
                let n = e.file_name().to_string_lossy().into_owned();
                if let Some(stem) = n.strip_suffix(".twseg") {
                    names.push(stem.to_string());
                }
            }
            names.sort_by_key(|n| {
                let mut it = n.split('-').map(|p| p.parse::<u64>().unwrap_or(u64::MAX));
                (it.next(), it.next())
            });
            for name in names {
                let path = self.stage_path(t, &name);
                let seg = Segment::open(&path)?;
                out.push(StageInfo { table: t, name, path, rows: seg.rows(), sorted: seg.sorted() });
            }
        }
        Ok(out)
    }

    /// Sort one stage by clustered key and collapse duplicate rows. The
    /// sorted segment replaces the unsorted one atomically.
    pub fn sort_stage(&self, stage: &StageInfo) -> Result<(StageInfo, u64)> {
        let seg = Segment::open(&stage.path)?;
        let dropped = with_record!(stage.table, R => {
            let mut rows: Vec<R> = seg.read_all()?;
            drop(seg);
            let dropped = merge::sort_dedup(&mut rows);
            segment::write_segment(&stage.path, &rows, true)?;
            dropped
        });
        let seg = Segment::open(&stage.path)?;
        Ok((StageInfo { rows: seg.rows(), sorted: true, ..stage.clone() }, dropped))
    }

    /// Sort every unsorted stage (in parallel). Returns duplicates dropped.
    pub fn sort_stages(&self) -> Result<u64> {
        let pending: Vec<StageInfo> = self.stages()?.into_iter().filter(|s| !s.sorted).collect();
        let results: Vec<Result<(StageInfo, u64)>> = pending.par_iter().map(|s| self.sort_stage(s)).collect();
        let mut dropped = 0;
        for r in results {
            dropped += r?.1;
        }
        Ok(dropped)
    }

    fn open_segments(&self, metas: &[SegmentMeta]) -> Result<Vec<Segment>> {
        metas.iter().map(|m| Segment::open(self.root.join(&m.file))).collect()
    }

    fn merge_table<R: Record>(
        &self,
        generation: u64,
        stages: &[&StageInfo],
        replace: bool,
    ) -> Result<(Vec<(TableId, SegmentMeta)>, MergeCounts)> {
        let mut inputs = if replace { Vec::new() } else { self.open_segments(self.manifest.segments(R::TABLE))? };
        for s in stages {
            inputs.push(Segment::open(&s.path)?);
        }
        let out_path = |t: TableId| self.root.join(t.name()).join(format!("seg-{generation}-0.twseg"));
        let meta = |info: SegmentInfo| SegmentMeta { file: rel(&self.root, &info.path), rows: info.rows, generation };
        let sources: Vec<_> = inputs.iter().map(|s| s.iter::<R>()).collect();
        let mut writer = SegmentWriter::<R>::create(out_path(R::TABLE), true)?;
        if R::TABLE == TableId::UserSnapshot {
            let mut rebuild = merge::UserRebuilder::new(
                SegmentWriter::create(out_path(TableId::User), true)?,
                SegmentWriter::create(out_path(TableId::UserUpdate), true)?,
            );
            let counts = merge::merge_into(sources, &mut writer, |row: &R| {
                let any: &dyn std::any::Any = row;
                rebuild.push(any.downcast_ref::<UserSnapshot>().expect("user_snapshot rows"))
            })?;
            let (users, updates) = rebuild.finish()?;
            let snaps = writer.finish()?;
            return Ok((
                vec![(TableId::UserSnapshot, meta(snaps)), (TableId::User, meta(users)), (TableId::UserUpdate, meta(updates))],
                counts,
            ));
        }
        let counts = merge::merge_into(sources, &mut writer, |_| Ok(()))?;
        Ok((vec![(R::TABLE, meta(writer.finish()?))], counts))
    }

    /// Fold all (sorted) stages into the live tables and commit a new
    /// generation. Tables without stages keep their segment files.
    pub fn merge_batch(&mut self) -> Result<MergeReport> {
        let stages = self.stages()?;
        if let Some(s) = stages.iter().find(|s| !s.sorted) {
            return Err(Error::Invalid(format!("stage {}/{} is not sorted", s.table, s.name)));
        }
        let generation = self.manifest.generation + 1;
        let touched: Vec<TableId> =
            TableId::ALL.into_iter().filter(|t| stages.iter().any(|s| s.table == *t)).collect();
        let results: Vec<Result<TableMerge>> = touched
            .par_iter()
            .map(|&t| {
                let mine: Vec<&StageInfo> = stages.iter().filter(|s| s.table == t).collect();
                let replace = t == TableId::ClusterSummary;
                with_record!(t, R => self.merge_table::<R>(generation, &mine, replace))
            })
            .collect();
        let mut next = self.manifest.clone();
        next.generation = generation;
        next.consumed_stages = stages.iter().map(|s| format!("{}/{}", s.table, s.name)).collect();
        let mut report = MergeReport { generation, stages: stages.len(), tables: BTreeMap::new() };
        for (t, r) in touched.iter().zip(results) {
            let (metas, counts) = r?;
            report.tables.insert(*t, counts);
            for (table, meta) in metas {
                next.tables.insert(table.name().to_string(), vec![meta]);
            }
        }
        next.indexes.retain(|i| !touched.contains(&i.kind.table()));
        self.check_fault(FaultPoint::AfterSegmentsWritten)?;
        self.commit(next)?;
        self.check_fault(FaultPoint::AfterCommitBeforeCleanup)?;
        self.cleanup()?;
        self.next_stage = 0;
        Ok(report)
    }

    fn commit(&mut self, next: Manifest) -> Result<()> {
        let tmp = next.write_tmp(&self.root)?;
        self.check_fault(FaultPoint::AfterManifestTmp)?;
        next.publish(&self.root, &tmp)?;
        self.manifest = next;
        Ok(())
    }

    /// Remove consumed stages, temporary files, older manifests and any
    /// segment or index file the live manifest does not reference.
    fn cleanup(&self) -> Result<()> {
        for s in &self.manifest.consumed_stages {
            if let Some((table, name)) = s.split_once('/') {
                if let Ok(t) = TableId::from_name(table) {
                    let _ = fs::remove_file(self.stage_path(t, name));
                }
            }
        }
        let mut live: BTreeSet<PathBuf> = BTreeSet::new();
        for metas in self.manifest.tables.values() {
            live.extend(metas.iter().map(|m| self.root.join(&m.file)));
        }
        live.extend(self.manifest.indexes.iter().map(|i| self.root.join(&i.file)));
        let mut dirs: Vec<PathBuf> = TableId::ALL.iter().map(|t| self.root.join(t.name())).collect();
        dirs.push(self.root.join(INDEX_DIR));
        for dir in &dirs {
            let Ok(rd) = fs::read_dir(dir) else { continue };
            for e in rd.flatten() {
                let p = e.path();
                if p.is_file() && !live.contains(&p) {
                    let _ = fs::remove_file(&p);
                }
            }
        }
        for t in TableId::ALL {
            let dir = self.root.join(STAGE_DIR).join(t.name());
            let Ok(rd) = fs::read_dir(&dir) else { continue };
            for e in rd.flatten() {
                if e.file_name().to_string_lossy().ends_with(".tmp") {
                    let _ = fs::remove_file(e.path());
                }
            }
        }
        let Ok(rd) = fs::read_dir(&self.root) else { return Ok(()) };
        let current = Manifest::file_name(self.manifest.generation);
        for e in rd.flatten() {
            let n = e.file_name().to_string_lossy().into_owned();
            if n.starts_with(manifest::MANIFEST_PREFIX) && n != current {
                let _ = fs::remove_file(e.path());
            }
        }
        Ok(())
    }

    /// Rebuild every secondary index with default options.
    pub fn rebuild_secondary(&mut self) -> Result<Manifest> {
        self.rebuild_secondary_with(IndexOptions::default())
    }

    /// Build the tweet-by-user, tweet-by-HTM, inverse edge and text indexes
    /// from the live tables, then commit them as a new generation.
    pub fn rebuild_secondary_with(&mut self, opts: IndexOptions) -> Result<Manifest> {
        let snap = self.snapshot()?;
        let generation = self.manifest.generation + 1;
        let dir = self.root.join(INDEX_DIR);
        fs::create_dir_all(&dir).map_err(Error::at(&dir))?;
        let path = |kind: IndexKind, ext: &str| dir.join(format!("{}-{generation}.{ext}", kind.name()));

        struct Part {
            by_user: Vec<ByUserEntry>,
            by_htm: Vec<ByHtmEntry>,
            text: TextIndexBuilder,
            raw_text: Option<TextIndexBuilder>,
        }
        let empty = || Part {
            by_user: Vec::new(),
            by_htm: Vec::new(),
            text: TextIndexBuilder::new(opts.text_filter),
            raw_text: opts.unfiltered_text.then(|| TextIndexBuilder::new(FilterConfig::unfiltered())),
        };
        let frames: Vec<(usize, usize)> = snap
            .segments(TableId::Tweet)
            .iter()
            .enumerate()
            .flat_map(|(s, seg)| (0..seg.frames().len()).map(move |f| (s, f)))
            .collect();
        let tweets = snap.segments(TableId::Tweet);
        let part = frames
            .par_iter()
            .map(|&(s, f)| -> Result<Part> {
                let seg = &tweets[s];
                let first = seg.frames()[f].first_row;
                let mut p = empty();
                for (i, t) in seg.frame_rows::<TweetRow>(f)?.into_iter().enumerate() {
                    let loc = index::locator(s, first + i as u64);
                    p.by_user.push(ByUserEntry {
                        user_id: t.user_id,
                        created_at: t.created_at,
                        run_id: t.run_id,
                        tweet_id: t.tweet_id,
                        locator: loc,
                    });
                    if let (Some((lon, lat)), Some(htm_id)) = (t.coords(), t.htm_id) {
                        p.by_htm.push(ByHtmEntry {
                            run_id: t.run_id,
                            htm_id,
                            tweet_id: t.tweet_id,
                            locator: loc,
                            user_id: t.user_id,
                            created_at: t.created_at,
                            lon,
                            lat,
                        });
                    }
                    p.text.add(&t);
                    if let Some(raw) = &mut p.raw_text {
                        raw.add(&t);
                    }
                }
                Ok(p)
            })
            .try_reduce(empty, |mut a, mut b| {
                a.by_user.append(&mut b.by_user);
                a.by_htm.append(&mut b.by_htm);
                a.text = a.text.merge(b.text);
                a.raw_text = match (a.raw_text, b.raw_text) {
                    (Some(x), Some(y)) => Some(x.merge(y)),
                    (x, y) => x.or(y),
                };
                Ok(a)
            })?;
        let mut mentions: Vec<MentionInvEntry> = Vec::new();
        for seg in snap.segments(TableId::Mention) {
            for m in seg.iter::<MentionEdge>() {
                let m = m?;
                mentions.push(MentionInvEntry {
                    run_id: m.run_id,
                    mentioned_user_id: m.mentioned_user_id,
                    source_user_id: m.source_user_id,
                    tweet_id: m.tweet_id,
                    created_at: m.created_at,
                });
            }
        }
        let mut retweets: Vec<RetweetInvEntry> = Vec::new();
        for seg in snap.segments(TableId::Retweet) {
            for r in seg.iter::<RetweetEdge>() {
                let r = r?;
                retweets.push(RetweetInvEntry {
                    run_id: r.run_id,
                    source_user_id: r.source_user_id,
                    original_user_id: r.original_user_id,
                    tweet_id: r.tweet_id,
                    original_tweet_id: r.original_tweet_id,
                    created_at: r.created_at,
                });
            }
        }
        let Part { mut by_user, mut by_htm, text, raw_text } = part;
        let mut metas = Vec::new();
        let mut add = |kind: IndexKind, p: PathBuf, entries: u64| {
            metas.push(IndexMeta { kind, file: rel(&self.root, &p), entries });
        };
        let p = path(IndexKind::TweetByUser, "twix");
        add(IndexKind::TweetByUser, p.clone(), index::write_index(&p, &mut by_user)?);
        let p = path(IndexKind::TweetByHtm, "twix");
        add(IndexKind::TweetByHtm, p.clone(), index::write_index(&p, &mut by_htm)?);
        let p = path(IndexKind::MentionInverse, "twix");
        add(IndexKind::MentionInverse, p.clone(), index::write_index(&p, &mut mentions)?);
        let p = path(IndexKind::RetweetInverse, "twix");
        add(IndexKind::RetweetInverse, p.clone(), index::write_index(&p, &mut retweets)?);
        let p = path(IndexKind::TextFiltered, "twft");
        add(IndexKind::TextFiltered, p.clone(), text.write(&p)?);
        if let Some(raw) = raw_text {
            let p = path(IndexKind::TextUnfiltered, "twft");
            add(IndexKind::TextUnfiltered, p.clone(), raw.write(&p)?);
        }
        let mut next = self.manifest.clone();
        next.generation = generation;
        next.consumed_stages.clear();
        next.indexes = metas;
        self.commit(next)?;
        self.cleanup()?;
        Ok(self.manifest.clone())
    }

    /// A read view pinned to the current generation.
    pub fn snapshot(&self) -> Result<Snapshot> {
        Snapshot::from_manifest(&self.root, self.manifest.clone())
    }
}

/// Read-only view of one committed generation.
pub struct Snapshot {
    root: PathBuf,
    manifest: Manifest,
    segments: BTreeMap<TableId, Vec<Segment>>,
    indexes: BTreeMap<IndexKind, (PathBuf, File)>,
}

impl Snapshot {
    /// Pin the newest committed generation.
    pub fn open(root: impl AsRef<Path>) -> Result<Snapshot> {
        let root = root.as_ref();
        let mut last_err = None;
        // a concurrent commit may remove files between reading the manifest
        // and opening them; retry against the newer manifest
        for _ in 0..5 {
            let m = manifest::load_latest(root)?;
            match Snapshot::from_manifest(root, m) {
                Ok(s) => return Ok(s),
                Err(e) if e.is_io() => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    fn from_manifest(root: &Path, manifest: Manifest) -> Result<Snapshot> {
        let mut segments = BTreeMap::new();
        for t in TableId::ALL {
            let segs: Vec<Segment> =
                manifest.segments(t).iter().map(|m| Segment::open(root.join(&m.file))).collect::<Result<_>>()?;
            segments.insert(t, segs);
        }
        let mut indexes = BTreeMap::new();
        for i in &manifest.indexes {
            let p = root.join(&i.file);
            let f = File::open(&p).map_err(Error::at(&p))?;
            indexes.insert(i.kind, (p, f));
        }
        Ok(Snapshot { root: root.to_path_buf(), manifest, segments, indexes })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn generation(&self) -> u64 {
        self.manifest.generation
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn segments(&self, table: TableId) -> &[Segment] {
        self.segments.get(&table).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn row_count(&self, table: TableId) -> u64 {
        self.segments(table).iter().map(Segment::rows).sum()
    }

    /// Rows with clustered key in `range`, in key order.
    pub fn scan<R: Record>(&self, range: impl RangeBounds<Key>) -> Box<dyn Iterator<Item = Result<R>> + Send> {
        let lo = match range.start_bound() {
            Bound::Included(k) | Bound::Excluded(k) => Some(*k),
            Bound::Unbounded => None,
        };
        let lo_bound = range.start_bound().cloned();
        let hi_bound = range.end_bound().cloned();
        let sources: Vec<_> = self
            .segments(R::TABLE)
            .iter()
            .map(|s| match &lo {
                Some(k) => s.iter_from::<R>(k),
                None => s.iter::<R>(),
            })
            .collect();
        let merged = merge::KMerge::new(sources);
        Box::new(
            merged
                .take_while(move |r| match r {
                    Ok(row) => (Bound::Unbounded, hi_bound).contains(&row.key()),
                    Err(_) => true,
                })
                .filter(move |r| match r {
                    Ok(row) => (lo_bound, Bound::Unbounded).contains(&row.key()),
                    Err(_) => true,
                }),
        )
    }

    /// Every row in key order.
    pub fn scan_all<R: Record>(&self) -> Box<dyn Iterator<Item = Result<R>> + Send> {
        self.scan::<R>(..)
    }

    /// Range scan with a predicate applied after reading.
    pub fn scan_where<R: Record>(
        &self,
        range: impl RangeBounds<Key>,
        pred: impl Fn(&R) -> bool + Send + 'static,
    ) -> Box<dyn Iterator<Item = Result<R>> + Send> {
        Box::new(self.scan::<R>(range).filter(move |r| r.as_ref().map_or(true, &pred)))
    }

    /// Run `f` over every frame of `R`'s table in parallel and collect the
    /// per-frame results in storage order.
    pub fn par_frames<R: Record, T: Send>(&self, f: impl Fn(Vec<R>) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        let segs = self.segments(R::TABLE);
        let frames: Vec<(usize, usize)> =
            segs.iter().enumerate().flat_map(|(s, seg)| (0..seg.frames().len()).map(move |i| (s, i))).collect();
        frames.par_iter().map(|&(s, i)| f(segs[s].frame_rows::<R>(i)?)).collect()
    }

    pub fn row_at<R: Record>(&self, locator: u64) -> Result<R> {
        let (s, row) = index::split_locator(locator);
        let seg = self
            .segments(R::TABLE)
            .get(s)
            .ok_or_else(|| Error::Invalid(format!("locator {locator:#x} names a missing segment")))?;
        seg.row_at(row)
    }

    /// Write the canonical TSV dump of one table. Returns the row count.
    pub fn dump(&self, table: TableId, out: &mut dyn Write) -> Result<u64> {
        with_record!(table, R => self.dump_rows::<R>(out))
    }

    fn dump_rows<R: Record>(&self, out: &mut dyn Write) -> Result<u64> {
        let mut line = String::with_capacity(256);
        let mut n = 0;
        for r in self.scan_all::<R>() {
            line.clear();
            r?.write_tsv(&mut line);
            line.push('\n');
            out.write_all(line.as_bytes())?;
            n += 1;
        }
        Ok(n)
    }

    pub fn dump_string(&self, table: TableId) -> Result<String> {
        let mut buf = Vec::new();
        self.dump(table, &mut buf)?;
        Ok(String::from_utf8(buf).expect("dump is UTF-8"))
    }

    pub fn has_index(&self, kind: IndexKind) -> bool {
        self.indexes.contains_key(&kind)
    }

    fn index_file(&self, kind: IndexKind) -> Result<&(PathBuf, File)> {
        self.indexes.get(&kind).ok_or(Error::MissingIndex(kind.name()))
    }

    pub fn read_index<E: IndexEntry>(&self) -> Result<Vec<E>> {
        let (p, f) = self.index_file(E::KIND)?;
        index::read_index(f, p)
    }

    pub fn text_index(&self, filtered: bool) -> Result<TextIndex> {
        let kind = if filtered { IndexKind::TextFiltered } else { IndexKind::TextUnfiltered };
        let (p, f) = self.index_file(kind)?;
        TextIndex::from_file(f.try_clone().map_err(Error::at(p))?, p.clone())
    }

    pub fn index_bytes(&self, kind: IndexKind) -> Result<u64> {
        let (p, f) = self.index_file(kind)?;
        Ok(f.metadata().map_err(Error::at(p))?.len())
    }

    pub fn users(&self) -> Box<dyn Iterator<Item = Result<UserRow>> + Send> {
        self.scan_all::<UserRow>()
    }

    pub fn user_updates(&self) -> Box<dyn Iterator<Item = Result<UserUpdateRow>> + Send> {
        self.scan_all::<UserUpdateRow>()
    }

    pub fn cluster_summaries(&self) -> Box<dyn Iterator<Item = Result<ClusterSummary>> + Send> {
        self.scan_all::<ClusterSummary>()
    }
}
