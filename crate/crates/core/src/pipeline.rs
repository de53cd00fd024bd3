//! Resumable batch loading: parse, load, sort, merge, index, cluster and
//! region assignment, driven by a `key = value` configuration file.
//!
//! Completed steps are recorded in `<work>/state`; a rerun skips them. Each
//! executed step appends `step\trows\tseconds` to `<work>/run.log`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::codec::{write_bulk_file, TableId};
use crate::error::{Error, Result};
use crate::fulltext::FilterConfig;
use crate::geocluster::{cluster_all_users, ClusterConfig};
use crate::jsonstream::{ingest, DEFAULT_CHUNK_DOCS};
use crate::langid::LanguageId;
use crate::model::ClusterSummary;
use crate::regions::{assign_regions, load_regions, DEFAULT_SIMPLIFY_KM};
use crate::store::{FaultPoint, IndexOptions, Warehouse};

pub const STATE_FILE: &str = "state";
pub const RUN_LOG: &str = "run.log";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Step {
    Parse,
    Load,
    Sort,
    Merge,
    Index,
    Cluster,
    Regions,
}

impl Step {
    pub const ALL: [Step; 7] =
        [Step::Parse, Step::Load, Step::Sort, Step::Merge, Step::Index, Step::Cluster, Step::Regions];

    pub fn name(self) -> &'static str {
        match self {
            Step::Parse => "parse",
            Step::Load => "load",
            Step::Sort => "sort",
            Step::Merge => "merge",
            Step::Index => "index",
            Step::Cluster => "cluster",
            Step::Regions => "regions",
        }
    }
}

impl FromStr for Step {
    type Err = Error;

    fn from_str(s: &str) -> Result<Step> {
        Step::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown pipeline step {s:?}")))
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub root: PathBuf,
    /// Work directory for chunks, bulk files, state and log.
    pub work: Option<PathBuf>,
    pub batch: Option<String>,
    pub run_id: u32,
    pub chunk_docs: usize,
    /// 0 uses every core.
    pub workers: usize,
    pub linking_km: f64,
    pub top_k: usize,
    pub cluster: bool,
    pub regions: Option<PathBuf>,
    pub region_level: u8,
    pub simplify_km: f64,
    pub text_filter: FilterConfig,
    pub unfiltered_text: bool,
    pub langid_profiles: Option<PathBuf>,
    /// Simulate a crash inside this step (merge steps only).
    pub fail_at: Option<Step>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            root: PathBuf::from("warehouse"),
            work: None,
            batch: None,
            run_id: 1,
            chunk_docs: DEFAULT_CHUNK_DOCS,
            workers: 0,
            linking_km: crate::geocluster::DEFAULT_LINKING_KM,
            top_k: crate::geocluster::DEFAULT_TOP_K,
            cluster: true,
            regions: None,
            region_level: 1,
            simplify_km: DEFAULT_SIMPLIFY_KM,
            text_filter: FilterConfig::default(),
            unfiltered_text: false,
            langid_profiles: None,
            fail_at: None,
        }
    }
}

fn parse_val<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Invalid(format!("bad value for {key}: {v:?}")))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl PipelineConfig {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("config line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(Error::at(path))?;
        let mut cfg = PipelineConfig::parse(&text)?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.input, &mut cfg.work, &mut cfg.regions, &mut cfg.langid_profiles].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.root.is_relative() {
            cfg.root = base.join(&cfg.root);
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "input" => self.input = opt_path(v),
            "root" => self.root = PathBuf::from(v),
            "work" => self.work = opt_path(v),
            "batch" => self.batch = (!v.is_empty()).then(|| v.to_string()),
            "run_id" => self.run_id = parse_val(key, v)?,
            "chunk_docs" => self.chunk_docs = parse_val(key, v)?,
            "workers" => self.workers = parse_val(key, v)?,
            "linking_km" => self.linking_km = parse_val(key, v)?,
            "top_k" => self.top_k = parse_val(key, v)?,
            "cluster" => self.cluster = parse_val(key, v)?,
            "regions" => self.regions = opt_path(v),
            "region_level" => self.region_level = parse_val(key, v)?,
            "simplify_km" => self.simplify_km = parse_val(key, v)?,
            "text_filter" => self.text_filter.enabled = parse_val(key, v)?,
            "text_min_chars" => self.text_filter.min_chars = parse_val(key, v)?,
            "text_high_unicode" => {
                let h = v.strip_prefix("0x").or_else(|| v.strip_prefix("0X"));
                self.text_filter.high_unicode = match h {
                    Some(hex) => u32::from_str_radix(hex, 16)
                        .map_err(|_| Error::Invalid(format!("bad value for {key}: {v:?}")))?,
                    None => parse_val(key, v)?,
                };
            }
            "text_max_run" => self.text_filter.max_run = parse_val(key, v)?,
            "unfiltered_text" => self.unfiltered_text = parse_val(key, v)?,
            "langid_profiles" => self.langid_profiles = opt_path(v),
            "fail_at" => self.fail_at = if v.is_empty() { None } else { Some(v.parse()?) },
            _ => return Err(Error::Invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("override {:?} is not key=value", o.as_ref())))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_docs == 0 {
            return Err(Error::Invalid("chunk_docs must be at least 1".into()));
        }
        if !(self.linking_km > 0.0) {
            return Err(Error::Invalid("linking_km must be positive".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Invalid("top_k must be at least 1".into()));
        }
        if !(self.simplify_km >= 0.0) {
            return Err(Error::Invalid("simplify_km must not be negative".into()));
        }
        Ok(())
    }

    pub fn batch_name(&self) -> String {
        if let Some(b) = &self.batch {
            return b.clone();
        }
        self.input
            .as_ref()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "empty".into())
    }

    pub fn work_dir(&self) -> PathBuf {
        self.work.clone().unwrap_or_else(|| self.root.join("work").join(self.batch_name()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: Step,
    pub rows: u64,
    pub seconds: f64,
    /// Already done by an earlier run, or not configured.
    pub skipped: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineReport {
    pub steps: Vec<StepLog>,
    pub generation: u64,
}

fn read_state(path: &Path) -> Result<Vec<Step>> {
    match fs::read_to_string(path) {
        Ok(s) => s.lines().filter(|l| !l.trim().is_empty()).map(|l| l.trim().parse()).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(Error::IoAt { path: path.to_path_buf(), source: e }),
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(Error::at(path))?;
    writeln!(f, "{line}").map_err(Error::at(path))?;
    f.sync_all().map_err(Error::at(path))
}

fn bulk_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let Ok(rd) = fs::read_dir(dir) else { return Ok(out) };
    let mut chunks: Vec<PathBuf> = rd.flatten().map(|e| e.path()).filter(|p| p.is_dir()).collect();
    chunks.sort();
    for c in chunks {
        let mut files: Vec<PathBuf> = fs::read_dir(&c)
            .map_err(Error::at(&c))?
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "twbl"))
            .collect();
        files.sort();
        out.extend(files);
    }
    Ok(out)
}

fn merge_fault(cfg: &PipelineConfig, step: Step) -> Option<FaultPoint> {
    (cfg.fail_at == Some(step)).then_some(FaultPoint::AfterManifestTmp)
}

/// Run every pending step. With `workers > 0` parallel work is confined to
/// a pool of that size; results do not depend on it.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
        pool.install(|| run_steps(cfg))
    } else {
        run_steps(cfg)
    }
}

fn run_steps(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let work = cfg.work_dir();
    fs::create_dir_all(&work).map_err(Error::at(&work))?;
    let state_path = work.join(STATE_FILE);
    let log_path = work.join(RUN_LOG);
    if !log_path.exists() {
        append_line(&log_path, "step\trows\tseconds")?;
    }
    let done = read_state(&state_path)?;
    let mut wh = Warehouse::open(&cfg.root)?;
    let mut report = PipelineReport::default();
    for step in Step::ALL {
        if done.contains(&step) {
            report.steps.push(StepLog { step, rows: 0, seconds: 0.0, skipped: true });
            continue;
        }
        let t = Instant::now();
        let rows = run_step(cfg, step, &work, &mut wh)?;
        let seconds = t.elapsed().as_secs_f64();
        match rows {
            Some(rows) => {
                log::info!("{step}: {rows} rows in {seconds:.3} s");
                append_line(&log_path, &format!("{step}\t{rows}\t{seconds:.3}"))?;
                report.steps.push(StepLog { step, rows, seconds, skipped: false });
            }
            None => report.steps.push(StepLog { step, rows: 0, seconds, skipped: true }),
        }
        append_line(&state_path, step.name())?;
    }
    report.generation = wh.generation();
    Ok(report)
}

/// `None` when the step has nothing configured to do.
fn run_step(cfg: &PipelineConfig, step: Step, work: &Path, wh: &mut Warehouse) -> Result<Option<u64>> {
    let bulk_root = work.join("bulk");
    match step {
        Step::Parse => {
            for d in ["chunks", "bulk"] {
                let p = work.join(d);
                if p.exists() {
                    fs::remove_dir_all(&p).map_err(Error::at(&p))?;
                }
            }
            let Some(input) = &cfg.input else {
                fs::create_dir_all(&bulk_root).map_err(Error::at(&bulk_root))?;
                return Ok(Some(0));
            };
            let langid = match &cfg.langid_profiles {
                Some(dir) => LanguageId::load_dir(dir)?,
                None => LanguageId::seeded(),
            };
            let r = ingest(input, cfg.run_id, work, cfg.chunk_docs, &langid)?;
            if !r.rejects.is_empty() {
                log::info!("parse: {} of {} documents rejected", r.rejects.len(), r.documents);
            }
            Ok(Some(r.documents))
        }
        Step::Load => {
            let files = bulk_files(&bulk_root)?;
            let staged = wh.bulk_insert(&files)?;
            Ok(Some(staged.iter().map(|s| s.rows).sum()))
        }
        Step::Sort => {
            let rows = wh.stages()?.iter().map(|s| s.rows).sum();
            wh.sort_stages()?;
            Ok(Some(rows))
        }
        Step::Merge => merge(cfg, step, wh),
        Step::Index => {
            wh.rebuild_secondary_with(IndexOptions { text_filter: cfg.text_filter, unfiltered_text: cfg.unfiltered_text })?;
            let m = wh.manifest();
            Ok(Some(m.indexes.iter().map(|i| i.entries).sum()))
        }
        Step::Cluster => {
            if !cfg.cluster {
                return Ok(None);
            }
            let snap = wh.snapshot()?;
            let path = work.join("cluster_summary.twbl");
            let ccfg = ClusterConfig { linking_km: cfg.linking_km, k: cfg.top_k, user_range: None };
            let rep = cluster_all_users(&snap, &ccfg, &path)?;
            drop(snap);
            wh.bulk_insert(&[&path])?;
            wh.sort_stages()?;
            merge(cfg, step, wh)?;
            Ok(Some(rep.rows))
        }
        Step::Regions => {
            let Some(path) = &cfg.regions else { return Ok(None) };
            if !cfg.cluster {
                return Ok(None);
            }
            let (set, rep) = load_regions(path, cfg.region_level)?;
            for s in &rep.skipped {
                log::warn!("regions: skipped {s}");
            }
            let set = if cfg.simplify_km > 0.0 { set.simplified(cfg.simplify_km) } else { set };
            let snap = wh.snapshot()?;
            let summaries: Vec<ClusterSummary> = snap.cluster_summaries().collect::<Result<_>>()?;
            drop(snap);
            let assigned = assign_regions(&summaries, &set);
            let out = work.join("cluster_regions.twbl");
            write_bulk_file(&out, &assigned)?;
            wh.bulk_insert(&[&out])?;
            wh.sort_stages()?;
            merge(cfg, step, wh)?;
            Ok(Some(assigned.iter().filter(|s| s.region_id.is_some()).count() as u64))
        }
    }
}

fn merge(cfg: &PipelineConfig, step: Step, wh: &mut Warehouse) -> Result<Option<u64>> {
    wh.inject_fault(merge_fault(cfg, step));
    let r = wh.merge_batch();
    wh.inject_fault(None);
    let r = r?;
    Ok(Some(r.tables.values().map(|c| c.rows_out).sum()))
}

/// Read a run log back as (step, rows, seconds) rows.
pub fn read_run_log(path: impl AsRef<Path>) -> Result<Vec<(String, u64, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::at(path))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::Format(format!("{}: bad run log line {line:?}", path.display())));
        }
        out.push((f[0].to_string(), parse_val("rows", f[1])?, parse_val("seconds", f[2])?));
    }
    Ok(out)
}

/// Canonical dump of every table, keyed by table name.
pub fn dump_all(root: impl AsRef<Path>) -> Result<BTreeMap<TableId, String>> {
    let snap = crate::store::Snapshot::open(root)?;
    TableId::ALL.iter().map(|&t| Ok((t, snap.dump_string(t)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg = PipelineConfig::parse(
            "# demo\ninput = a.jsonl\nroot = wh\nrun_id = 7\nworkers=2\ntext_high_unicode = 0x3000\nfail_at = merge\n",
        )
        .unwrap();
        assert_eq!(cfg.input, Some(PathBuf::from("a.jsonl")));
        assert_eq!(cfg.run_id, 7);
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.text_filter.high_unicode, 0x3000);
        assert_eq!(cfg.fail_at, Some(Step::Merge));
        assert_eq!(cfg.batch_name(), "a.jsonl");
        assert!(PipelineConfig::parse("bogus = 1").is_err());
        assert!(PipelineConfig::parse("run_id = x").is_err());
        assert!(PipelineConfig::parse("no equals sign").is_err());
        let mut c = cfg.clone();
        c.apply_overrides(&["run_id=9", "fail_at="]).unwrap();
        assert_eq!((c.run_id, c.fail_at), (9, None));
    }

    #[test]
    fn empty_input_gives_valid_warehouse() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig { root: dir.path().join("wh"), ..PipelineConfig::default() };
        let rep = run_pipeline(&cfg).unwrap();
        assert_eq!(rep.steps.len(), Step::ALL.len());
        let dumps = dump_all(&cfg.root).unwrap();
        assert!(dumps.values().all(String::is_empty));
        let log = read_run_log(cfg.work_dir().join(RUN_LOG)).unwrap();
        assert_eq!(log[0].0, "parse");
        // a rerun has nothing left to do
        let again = run_pipeline(&cfg).unwrap();
        assert!(again.steps.iter().all(|s| s.skipped));
    }
}
