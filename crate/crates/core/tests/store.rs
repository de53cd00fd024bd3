use std::fs;

use twdb::codec::{write_bulk_file, Record, TableId};
use twdb::htm::{cover_circle, latlon_to_htm, ranges_contain};
use twdb::model::{Lang, MentionEdge, TweetRow, UserRow, UserSnapshot, UserUpdateRow};
use twdb::store::{ByHtmEntry, ByUserEntry, FaultPoint, IndexKind, Snapshot, Warehouse};
use twdb::Error;

fn tweet(id: u64, user: u64, embedded: bool, geo: Option<(f64, f64)>) -> TweetRow {
    TweetRow {
        tweet_id: id,
        run_id: 1,
        created_at: 1_000_000 + id as i64,
        user_id: user,
        text: format!("tweet number {id} about networks"),
        in_reply_to_tweet_id: None,
        in_reply_to_user_id: None,
        lon: geo.map(|g| g.0),
        lat: geo.map(|g| g.1),
        htm_id: geo.map(|(lon, lat)| latlon_to_htm(lon, lat, 20).unwrap().raw()),
        lang: Lang::UND,
        embedded,
    }
}

fn snap(user: u64, at: i64, followers: u64) -> UserSnapshot {
    UserSnapshot {
        user_id: user,
        screen_name: format!("user{user}"),
        location: "somewhere".into(),
        account_created_at: 0,
        statuses_count: 1,
        friends_count: 2,
        followers_count: followers,
        observed_at: at,
    }
}

fn load_merge(wh: &mut Warehouse, dir: &std::path::Path, tweets: &[TweetRow], users: &[UserSnapshot]) {
    let t = dir.join(format!("t{}.twbl", wh.generation()));
    let u = dir.join(format!("u{}.twbl", wh.generation()));
    write_bulk_file(&t, tweets).unwrap();
    write_bulk_file(&u, users).unwrap();
    wh.bulk_insert(&[t, u]).unwrap();
    wh.sort_stages().unwrap();
    wh.merge_batch().unwrap();
}

#[test]
fn staged_rows_read_back_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let mut wh = Warehouse::open(dir.path().join("w")).unwrap();
    let rows = vec![tweet(5, 1, false, None), tweet(2, 1, false, None), tweet(5, 1, true, None)];
    let f = dir.path().join("t.twbl");
    write_bulk_file(&f, &rows).unwrap();
    let empty = dir.path().join("e.twbl");
    write_bulk_file::<TweetRow>(&empty, &[]).unwrap();
    let staged = wh.bulk_insert(&[&f, &empty]).unwrap();
    assert_eq!(staged.len(), 2);
    assert_eq!(staged[1].rows, 0);
    let seg = twdb::store::Segment::open(&staged[0].path).unwrap();
    assert!(!seg.sorted());
    assert_eq!(seg.read_all::<TweetRow>().unwrap(), rows);
    assert!(matches!(wh.merge_batch(), Err(Error::Invalid(_))));
    assert_eq!(wh.sort_stages().unwrap(), 1);
    wh.merge_batch().unwrap();
    let s = wh.snapshot().unwrap();
    let got: Vec<TweetRow> = s.scan_all().collect::<Result<_, _>>().unwrap();
    assert_eq!(got.iter().map(|t| t.tweet_id).collect::<Vec<_>>(), vec![2, 5]);
    assert!(!got[1].embedded);
}

#[test]
fn bad_bulk_files_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut wh = Warehouse::open(dir.path().join("w")).unwrap();
    let f = dir.path().join("t.twbl");
    write_bulk_file(&f, &[tweet(1, 1, false, None)]).unwrap();
    let mut bytes = fs::read(&f).unwrap();
    bytes[7] = 9; // declared row count
    fs::write(&f, &bytes).unwrap();
    assert!(wh.bulk_insert(&[&f]).is_err());
    let u = dir.path().join("u.twbl");
    write_bulk_file::<UserRow>(&u, &[]).unwrap();
    assert!(wh.bulk_insert(&[&u]).is_err());
    assert!(wh.stages().unwrap().is_empty());
}

#[test]
fn identity_merge_keeps_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("w");
    let mut wh = Warehouse::open(&root).unwrap();
    load_merge(&mut wh, dir.path(), &[tweet(1, 1, false, None)], &[snap(1, 10, 3)]);
    let before: Vec<Vec<u8>> =
        TableId::ALL.iter().map(|t| wh.snapshot().unwrap().dump_string(*t).unwrap().into_bytes()).collect();
    let files_before = wh.manifest().tables.clone();
    let g = wh.generation();
    wh.merge_batch().unwrap();
    assert_eq!(wh.generation(), g + 1);
    assert_eq!(wh.manifest().tables, files_before);
    let after: Vec<Vec<u8>> =
        TableId::ALL.iter().map(|t| wh.snapshot().unwrap().dump_string(*t).unwrap().into_bytes()).collect();
    assert_eq!(before, after);
}

#[test]
fn user_followers_change() {
    let dir = tempfile::tempdir().unwrap();
    let mut wh = Warehouse::open(dir.path().join("w")).unwrap();
    load_merge(&mut wh, dir.path(), &[], &[snap(7, 100, 10)]);
    load_merge(&mut wh, dir.path(), &[], &[snap(7, 200, 12), snap(8, 50, 0)]);
    let s = wh.snapshot().unwrap();
    let users: Vec<UserRow> = s.users().collect::<Result<_, _>>().unwrap();
    assert_eq!(users.len(), 2);
    assert_eq!(users[0].latest.followers_count, 12);
    assert_eq!(users[0].first_seen_at, 100);
    let updates: Vec<UserUpdateRow> = s.user_updates().collect::<Result<_, _>>().unwrap();
    assert_eq!(updates.len(), 1);
    assert_eq!(updates[0].prior.followers_count, 10);
    // an older snapshot arriving late lowers first_seen_at and is ordered into history
    load_merge(&mut wh, dir.path(), &[], &[snap(7, 40, 10)]);
    let s = wh.snapshot().unwrap();
    let users: Vec<UserRow> = s.users().collect::<Result<_, _>>().unwrap();
    assert_eq!((users[0].first_seen_at, users[0].latest.followers_count), (40, 12));
    assert_eq!(s.user_updates().count(), 1);
}

#[test]
fn writer_lock_is_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("w");
    let wh = Warehouse::open(&root).unwrap();
    assert!(matches!(Warehouse::open(&root), Err(Error::Locked(_))));
    drop(wh);
    fs::write(root.join("LOCK"), "999999999").unwrap();
    Warehouse::open(&root).unwrap();
}

#[test]
fn crash_points_recover_to_last_commit() {
    for point in [FaultPoint::AfterSegmentsWritten, FaultPoint::AfterManifestTmp, FaultPoint::AfterCommitBeforeCleanup] {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("w");
        let mut wh = Warehouse::open(&root).unwrap();
        load_merge(&mut wh, dir.path(), &[tweet(1, 1, false, None)], &[snap(1, 1, 1)]);
        let committed = wh.snapshot().unwrap().dump_string(TableId::Tweet).unwrap();
        let f = dir.path().join("b.twbl");
        write_bulk_file(&f, &[tweet(9, 2, false, None)]).unwrap();
        wh.bulk_insert(&[&f]).unwrap();
        wh.sort_stages().unwrap();
        wh.inject_fault(Some(point));
        assert!(matches!(wh.merge_batch(), Err(Error::Injected(_))));
        drop(wh);
        let mut wh = Warehouse::open(&root).unwrap();
        let dump = wh.snapshot().unwrap().dump_string(TableId::Tweet).unwrap();
        if point == FaultPoint::AfterCommitBeforeCleanup {
            assert_eq!(dump.lines().count(), 2);
            assert!(wh.stages().unwrap().is_empty(), "consumed stage removed on reopen");
        } else {
            assert_eq!(dump, committed);
            assert_eq!(wh.stages().unwrap().len(), 1);
            wh.merge_batch().unwrap();
            assert_eq!(wh.snapshot().unwrap().dump_string(TableId::Tweet).unwrap().lines().count(), 2);
        }
        let live: Vec<_> = fs::read_dir(root.join("tweet")).unwrap().collect();
        assert_eq!(live.len(), 1, "{point:?}: orphan segments collected");
    }
}

#[test]
fn snapshot_survives_later_commits() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("w");
    let mut wh = Warehouse::open(&root).unwrap();
    load_merge(&mut wh, dir.path(), &[tweet(1, 1, false, None)], &[]);
    let old = Snapshot::open(&root).unwrap();
    load_merge(&mut wh, dir.path(), &[tweet(2, 1, false, None)], &[]);
    assert_eq!(old.dump_string(TableId::Tweet).unwrap().lines().count(), 1);
    assert_eq!(Snapshot::open(&root).unwrap().row_count(TableId::Tweet), 2);
}

#[test]
fn scans_and_indexes_match_full_scan() {
    let dir = tempfile::tempdir().unwrap();
    let mut wh = Warehouse::open(dir.path().join("w")).unwrap();
    let mut rows = Vec::new();
    for i in 1..=30_000u64 {
        let geo = (i % 3 == 0).then(|| (-74.5 + (i % 1000) as f64 / 1000.0, 40.2 + (i % 777) as f64 / 777.0));
        rows.push(tweet(i * 7 % 40_009 + 1, i % 50 + 1, false, geo));
    }
    load_merge(&mut wh, dir.path(), &rows, &[]);
    let edges: Vec<MentionEdge> = (0..500u64)
        .map(|i| MentionEdge { run_id: 1, tweet_id: i + 1, source_user_id: i % 9 + 1, mentioned_user_id: i % 4 + 1, created_at: 0 })
        .collect();
    let f = dir.path().join("m.twbl");
    write_bulk_file(&f, &edges).unwrap();
    wh.bulk_insert(&[&f]).unwrap();
    wh.sort_stages().unwrap();
    wh.merge_batch().unwrap();
    let s = wh.snapshot().unwrap();
    assert!(matches!(s.read_index::<ByUserEntry>(), Err(Error::MissingIndex(_))));
    wh.rebuild_secondary().unwrap();
    let s = wh.snapshot().unwrap();
    let all: Vec<TweetRow> = s.scan_all().collect::<Result<_, _>>().unwrap();
    assert_eq!(all.len(), rows.len());
    // range scan equals filtered full scan
    let lo = [1, 5000, 0, 0];
    let hi = [1, 9000, 0, 0];
    let ranged: Vec<u64> = s.scan::<TweetRow>(lo..=hi).map(|r| r.unwrap().tweet_id).collect();
    let oracle: Vec<u64> = all.iter().filter(|t| (lo..=hi).contains(&t.key())).map(|t| t.tweet_id).collect();
    assert_eq!(ranged, oracle);
    let single: Vec<_> = s.scan::<TweetRow>(all[10].key()..=all[10].key()).collect();
    assert_eq!(single.len(), 1);
    // every row reachable through the by-user index
    let by_user: Vec<ByUserEntry> = s.read_index().unwrap();
    assert_eq!(by_user.len(), all.len());
    for e in by_user.iter().step_by(97) {
        let t: TweetRow = s.row_at(e.locator).unwrap();
        assert_eq!((t.user_id, t.created_at, t.tweet_id), (e.user_id, e.created_at, e.tweet_id));
    }
    // htm range scan equals filter
    let by_htm: Vec<ByHtmEntry> = s.read_index().unwrap();
    assert_eq!(by_htm.len(), all.iter().filter(|t| t.htm_id.is_some()).count());
    let cover = cover_circle(-74.0, 40.72, 10.0, 64).unwrap();
    let via_index = by_htm.iter().filter(|e| ranges_contain(&cover, e.htm_id)).count();
    let via_scan = all.iter().filter(|t| t.htm_id.is_some_and(|h| ranges_contain(&cover, h))).count();
    assert_eq!(via_index, via_scan);
    assert!(via_scan > 0);
    let inv: Vec<twdb::store::MentionInvEntry> = s.read_index().unwrap();
    assert_eq!(inv.len(), 500);
    assert!(inv.windows(2).all(|w| w[0].mentioned_user_id <= w[1].mentioned_user_id));
    let text = s.text_index(true).unwrap();
    assert_eq!(text.search("networks", 1).unwrap().len(), all.len());
    assert!(s.has_index(IndexKind::TweetByHtm));
}

#[test]
fn empty_warehouse_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let mut wh = Warehouse::open(dir.path().join("w")).unwrap();
    wh.merge_batch().unwrap();
    wh.rebuild_secondary().unwrap();
    let s = wh.snapshot().unwrap();
    for t in TableId::ALL {
        assert_eq!(s.dump_string(t).unwrap(), "");
    }
    assert!(s.read_index::<ByUserEntry>().unwrap().is_empty());
    assert_eq!(s.scan_all::<TweetRow>().count(), 0);
}
