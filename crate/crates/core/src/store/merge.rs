//! Sorting of staged rows, k-way merge with duplicate resolution, and the
//! rebuild of the derived user tables from snapshot history.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::codec::Record;
use crate::error::Result;
use crate::model::{UserRow, UserSnapshot, UserUpdateRow};
use crate::store::segment::SegmentWriter;

/// Sort rows by clustered key (then tie order) and collapse duplicates.
/// Returns the number of rows dropped.
pub fn sort_dedup<R: Record>(rows: &mut Vec<R>) -> u64 {
    rows.sort_by(|a, b| a.row_cmp(b));
    let before = rows.len();
    let mut out: Vec<R> = Vec::with_capacity(rows.len());
    for r in rows.drain(..) {
        match out.last_mut() {
            Some(last) if last.row_cmp(&r) == Ordering::Equal => {
                let prev = std::mem::replace(last, r.clone());
                *last = R::resolve(prev, r);
            }
            _ => out.push(r),
        }
    }
    *rows = out;
    (before - rows.len()) as u64
}

struct HeapItem<R: Record> {
    row: R,
    src: usize,
}

impl<R: Record> PartialEq for HeapItem<R> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<R: Record> Eq for HeapItem<R> {}

impl<R: Record> PartialOrd for HeapItem<R> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<R: Record> Ord for HeapItem<R> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.row.row_cmp(&self.row).then(other.src.cmp(&self.src))
    }
}

/// Merge sorted sources into one ordered stream without deduplication.
pub struct KMerge<R: Record, I: Iterator<Item = Result<R>>> {
    sources: Vec<I>,
    heap: BinaryHeap<HeapItem<R>>,
    primed: bool,
}

impl<R: Record, I: Iterator<Item = Result<R>>> KMerge<R, I> {
    pub fn new(sources: Vec<I>) -> Self {
        KMerge { heap: BinaryHeap::with_capacity(sources.len()), sources, primed: false }
    }

    fn pull(&mut self, src: usize) -> Result<()> {
        if let Some(r) = self.sources[src].next() {
            self.heap.push(HeapItem { row: r?, src });
        }
        Ok(())
    }
}

impl<R: Record, I: Iterator<Item = Result<R>>> Iterator for KMerge<R, I> {
    type Item = Result<R>;

    fn next(&mut self) -> Option<Result<R>> {
        if !self.primed {
            self.primed = true;
            for i in 0..self.sources.len() {
                if let Err(e) = self.pull(i) {
                    return Some(Err(e));
                }
            }
        }
        let item = self.heap.pop()?;
        if let Err(e) = self.pull(item.src) {
            return Some(Err(e));
        }
        Some(Ok(item.row))
    }
}

/// Counts from one table merge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MergeCounts {
    pub rows_in: u64,
    pub rows_out: u64,
    pub duplicates_dropped: u64,
}

/// Merge sorted sources into `out`, resolving duplicates. Every surviving
/// row is also handed to `sink`.
pub fn merge_into<R, I, F>(sources: Vec<I>, out: &mut SegmentWriter<R>, mut sink: F) -> Result<MergeCounts>
where
    R: Record,
    I: Iterator<Item = Result<R>>,
    F: FnMut(&R) -> Result<()>,
{
    let mut counts = MergeCounts::default();
    let mut pending: Option<R> = None;
    for row in KMerge::new(sources) {
        let row = row?;
        counts.rows_in += 1;
        pending = Some(match pending {
            Some(p) if p.row_cmp(&row) == Ordering::Equal => {
                counts.duplicates_dropped += 1;
                R::resolve(p, row)
            }
            Some(p) => {
                out.push(&p)?;
                sink(&p)?;
                counts.rows_out += 1;
                row
            }
            None => row,
        });
    }
    if let Some(p) = pending {
        out.push(&p)?;
        sink(&p)?;
        counts.rows_out += 1;
    }
    Ok(counts)
}

/// Derives `user` and `user_update` rows from the ordered snapshot history.
pub struct UserRebuilder {
    users: SegmentWriter<UserRow>,
    updates: SegmentWriter<UserUpdateRow>,
    current: Option<(UserSnapshot, i64, u32)>,
}

impl UserRebuilder {
    pub fn new(users: SegmentWriter<UserRow>, updates: SegmentWriter<UserUpdateRow>) -> Self {
        UserRebuilder { users, updates, current: None }
    }

    /// Feed snapshots in (user_id, observed_at, profile) order.
    pub fn push(&mut self, s: &UserSnapshot) -> Result<()> {
        match &mut self.current {
            Some((prev, _, seq)) if prev.user_id == s.user_id => {
                if !prev.same_profile(s) {
                    self.updates.push(&UserUpdateRow {
                        user_id: s.user_id,
                        observed_at: s.observed_at,
                        seq: *seq,
                        prior: prev.clone(),
                    })?;
                    *seq += 1;
                }
                *prev = s.clone();
            }
            _ => {
                self.flush()?;
                self.current = Some((s.clone(), s.observed_at, 0));
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Some((latest, first_seen_at, _)) = self.current.take() {
            self.users.push(&UserRow { latest, first_seen_at })?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(crate::store::SegmentInfo, crate::store::SegmentInfo)> {
        self.flush()?;
        Ok((self.users.finish()?, self.updates.finish()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Lang, MentionEdge, TweetRow};
    use crate::store::segment::{write_segment, Segment};

    fn tweet(id: u64, embedded: bool, text: &str) -> TweetRow {
        TweetRow {
            tweet_id: id,
            run_id: 1,
            created_at: 0,
            user_id: 1,
            text: text.into(),
            in_reply_to_tweet_id: None,
            in_reply_to_user_id: None,
            lon: None,
            lat: None,
            htm_id: None,
            lang: Lang::UND,
            embedded,
        }
    }

    #[test]
    fn sort_dedup_prefers_direct_tweets() {
        let mut rows = vec![tweet(3, true, "b"), tweet(1, false, "a"), tweet(3, false, "c"), tweet(2, true, "x")];
        let dropped = sort_dedup(&mut rows);
        assert_eq!(dropped, 1);
        assert_eq!(rows.iter().map(|t| t.tweet_id).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(!rows[2].embedded);
        let mut sorted = rows.clone();
        assert_eq!(sort_dedup(&mut sorted), 0);
        assert_eq!(sorted, rows);
    }

    #[test]
    fn sort_matches_oracle() {
        let mut rows: Vec<MentionEdge> = (0..5000u64)
            .map(|i| MentionEdge {
                run_id: (i % 3) as u32,
                tweet_id: (i * 7919) % 10007,
                source_user_id: (i * 31) % 97 + 1,
                mentioned_user_id: i % 5 + 1,
                created_at: 0,
            })
            .collect();
        let mut oracle: Vec<(u32, u64, u64, u64)> =
            rows.iter().map(|m| (m.run_id, m.source_user_id, m.mentioned_user_id, m.tweet_id)).collect();
        oracle.sort();
        oracle.dedup();
        sort_dedup(&mut rows);
        let got: Vec<_> = rows.iter().map(|m| (m.run_id, m.source_user_id, m.mentioned_user_id, m.tweet_id)).collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn kmerge_dedups_across_sources() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_segment(dir.path().join("a"), &[tweet(1, false, "a"), tweet(5, true, "e")], true).unwrap();
        let b = write_segment(dir.path().join("b"), &[tweet(2, false, "b"), tweet(5, false, "E")], true).unwrap();
        let sources = vec![Segment::open(&a.path).unwrap().iter(), Segment::open(&b.path).unwrap().iter()];
        let mut w = SegmentWriter::<TweetRow>::create(dir.path().join("o"), true).unwrap();
        let mut seen = 0;
        let counts = merge_into(sources, &mut w, |_| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        let out = w.finish().unwrap();
        assert_eq!(counts, MergeCounts { rows_in: 4, rows_out: 3, duplicates_dropped: 1 });
        assert_eq!(seen, 3);
        let rows: Vec<TweetRow> = Segment::open(&out.path).unwrap().read_all().unwrap();
        assert_eq!(rows[2].text, "E");
    }

    #[test]
    fn user_history_rebuild() {
        let dir = tempfile::tempdir().unwrap();
        let snap = |user, at, followers| UserSnapshot {
            user_id: user,
            screen_name: format!("u{user}"),
            location: String::new(),
            account_created_at: 0,
            statuses_count: 1,
            friends_count: 1,
            followers_count: followers,
            observed_at: at,
        };
        let mut rb = UserRebuilder::new(
            SegmentWriter::create(dir.path().join("u"), true).unwrap(),
            SegmentWriter::create(dir.path().join("uu"), true).unwrap(),
        );
        for s in [snap(1, 5, 10), snap(1, 6, 10), snap(1, 9, 12), snap(2, 3, 0)] {
            rb.push(&s).unwrap();
        }
        let (u, uu) = rb.finish().unwrap();
        let users: Vec<UserRow> = Segment::open(&u.path).unwrap().read_all().unwrap();
        let updates: Vec<UserUpdateRow> = Segment::open(&uu.path).unwrap().read_all().unwrap();
        assert_eq!(users.len(), 2);
        assert_eq!(users[0].latest.followers_count, 12);
        assert_eq!(users[0].first_seen_at, 5);
        assert_eq!(updates.len(), 1);
        assert_eq!((updates[0].observed_at, updates[0].prior.followers_count), (9, 10));
    }
}
