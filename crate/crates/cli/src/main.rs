use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flate2::write::GzEncoder;
use flate2::Compression;

use twdb::geocluster::{cluster_all_users, ClusterConfig};
use twdb::htm::{cover_circle_with, latlon_to_htm, CoverConfig, HtmId};
use twdb::jsonstream::{ingest, DEFAULT_CHUNK_DOCS};
use twdb::langid::{train_profile, LanguageId};
use twdb::pipeline::{run_pipeline, PipelineConfig};
use twdb::query::{self, CircleMode, DegreeMode, Direction, EdgeKind, View};
use twdb::regions::{assign_regions, load_regions, DEFAULT_SIMPLIFY_KM};
use twdb::store::{IndexOptions, Snapshot, Warehouse};
use twdb::synth::{gen_synthetic, GenConfig};
use twdb::{ClusterSummary, Error, TableId};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "twdb", version, about = "Warehouse for geo-tagged status streams")]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic NDJSON stream and its ground-truth manifest.
    Gen(GenArgs),
    /// Split a stream into chunks and write bulk-load files.
    Ingest(IngestArgs),
    /// Stage bulk files (or directories of them) into a warehouse.
    Load(LoadArgs),
    /// Sort staged data and merge it into the live tables.
    Merge(RootArg),
    /// Rebuild secondary and text indexes.
    Index(IndexArgs),
    /// Print a table as canonical TSV.
    Dump(DumpArgs),
    /// Cluster users' geo points and replace the cluster_summary table.
    Cluster(ClusterArgs),
    /// Region boundaries.
    #[command(subcommand)]
    Regions(RegionsCmd),
    /// Statistics and network queries.
    Query(QueryArgs),
    /// HTM lookups and circle covers.
    #[command(subcommand)]
    Htm(HtmCmd),
    /// Language identification.
    #[command(subcommand)]
    Langid(LangidCmd),
    /// Run the resumable load pipeline from a key = value config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct RootArg {
    #[arg(long)]
    root: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth manifest (JSON).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Gzip the stream (also implied by a .gz suffix).
    #[arg(long)]
    gzip: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    tweets: Option<usize>,
    /// Any other generator field as key=value (JSON value syntax).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    run_id: u32,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CHUNK_DOCS)]
    chunk_docs: usize,
    /// Directory of *.twlp language profiles (default: bundled).
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Args)]
struct LoadArgs {
    #[arg(long)]
    root: PathBuf,
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    root: PathBuf,
    /// Also build the text index without the noise filter.
    #[arg(long)]
    unfiltered: bool,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    table: String,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    root: PathBuf,
    #[arg(long, default_value_t = twdb::geocluster::DEFAULT_LINKING_KM)]
    linking_km: f64,
    #[arg(long, default_value_t = twdb::geocluster::DEFAULT_TOP_K)]
    top_k: usize,
    /// Inclusive user-id range LO-HI.
    #[arg(long)]
    users: Option<String>,
}

#[derive(Subcommand)]
enum RegionsCmd {
    /// Parse a GeoJSON file and list its regions.
    Load {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        level: u8,
    },
    /// Assign cluster centroids to regions.
    Assign {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        level: u8,
        #[arg(long, default_value_t = DEFAULT_SIMPLIFY_KM)]
        simplify_km: f64,
    },
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    root: PathBuf,
    #[command(subcommand)]
    q: QueryCmd,
}

#[derive(Subcommand)]
enum QueryCmd {
    /// Tweets per UTC hour.
    Q1 {
        #[arg(long)]
        run: u32,
    },
    /// Tweets containing a term per UTC date.
    Q2 {
        #[arg(long)]
        run: u32,
        #[arg(long)]
        term: String,
    },
    /// Degree distribution.
    Q3 {
        #[arg(long)]
        run: u32,
        #[arg(long, default_value = "mention")]
        kind: String,
        #[arg(long, default_value = "out")]
        direction: String,
        #[arg(long, default_value = "events")]
        mode: String,
    },
    /// Geo-tweets within a circle.
    Q4 {
        #[arg(long)]
        run: u32,
        #[arg(long, allow_negative_numbers = true)]
        lon: f64,
        #[arg(long, allow_negative_numbers = true)]
        lat: f64,
        /// Radius in arc minutes.
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value = "range")]
        mode: String,
    },
    /// Cumulative distinct users by first-seen date.
    Discovery {
        /// Fit N = c + a(1 - exp(-t/t0)) + b t over hourly samples from this epoch second.
        #[arg(long)]
        fit_from: Option<i64>,
        #[arg(long)]
        fit_to: Option<i64>,
    },
    /// Network edge lists.
    Edges {
        #[arg(long)]
        run: u32,
        #[arg(long, default_value = "mention")]
        kind: String,
        #[arg(long, default_value = "directed")]
        view: String,
    },
    /// GeoJSON points inside a circle.
    ExportGeo {
        #[arg(long)]
        run: u32,
        /// LON LAT RADIUS_ARCMIN
        #[arg(long, num_args = 3, allow_negative_numbers = true, value_names = ["LON", "LAT", "R"])]
        circle: Vec<f64>,
        #[arg(long, default_value = "exact")]
        mode: String,
    },
}

#[derive(Subcommand)]
enum HtmCmd {
    /// Trixel id of a point.
    Lookup {
        #[arg(long, allow_negative_numbers = true)]
        lon: f64,
        #[arg(long, allow_negative_numbers = true)]
        lat: f64,
        #[arg(long, default_value_t = twdb::htm::MAX_LEVEL)]
        level: u8,
    },
    /// Level-20 id ranges covering a circle.
    Cover {
        #[arg(long, allow_negative_numbers = true)]
        lon: f64,
        #[arg(long, allow_negative_numbers = true)]
        lat: f64,
        /// Radius in arc minutes.
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = twdb::htm::DEFAULT_MAX_RANGES)]
        max_ranges: usize,
        #[arg(long, default_value_t = twdb::htm::DEFAULT_COVER_LEVEL)]
        max_level: u8,
    },
    /// Corner vertices of a trixel.
    Trixel { id: u64 },
}

#[derive(Subcommand)]
enum LangidCmd {
    /// Identify the language of a text.
    Identify {
        text: String,
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Train a trigram profile from a corpus file.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PipelineArgs {
    config: PathBuf,
    /// Override a config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Usage(_) => EXIT_USAGE,
        CliError::Io(_) => EXIT_IO,
        CliError::Core(e) if e.is_io() => EXIT_IO,
        CliError::Core(_) => EXIT_DATA,
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn stdout() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::new(io::stdout().lock())
}

fn run(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Ingest(a) => {
            let langid = match &a.profiles {
                Some(d) => LanguageId::load_dir(d)?,
                None => LanguageId::seeded(),
            };
            if a.chunk_docs == 0 {
                return Err(usage("--chunk-docs must be at least 1"));
            }
            let r = ingest(&a.input, a.run_id, &a.out, a.chunk_docs, &langid)?;
            let mut out = stdout();
            writeln!(out, "documents\t{}", r.documents)?;
            writeln!(out, "accepted\t{}", r.accepted)?;
            writeln!(out, "rejected\t{}", r.rejects.len())?;
            for (t, n) in [TableId::Tweet, TableId::UserSnapshot, TableId::Mention, TableId::Retweet].iter().zip(r.rows) {
                writeln!(out, "{t}\t{n}")?;
            }
            for (off, why) in r.rejects.iter().take(20) {
                log::info!("rejected at byte {off}: {why}");
            }
            out.flush()?;
            Ok(())
        }
        Cmd::Load(a) => {
            let mut files = Vec::new();
            for f in &a.files {
                collect_bulk_files(f, &mut files)?;
            }
            let mut wh = Warehouse::open(&a.root)?;
            let staged = wh.bulk_insert(&files)?;
            let mut out = stdout();
            for s in staged {
                writeln!(out, "{}\t{}\t{}", s.table, s.name, s.rows)?;
            }
            out.flush()?;
            Ok(())
        }
        Cmd::Merge(a) => {
            let mut wh = Warehouse::open(&a.root)?;
            let dropped = wh.sort_stages()?;
            let r = wh.merge_batch()?;
            let mut out = stdout();
            writeln!(out, "generation\t{}", r.generation)?;
            writeln!(out, "stages\t{}", r.stages)?;
            writeln!(out, "sort_duplicates\t{dropped}")?;
            for (t, c) in &r.tables {
                writeln!(out, "{t}\t{}\t{}\t{}", c.rows_in, c.rows_out, c.duplicates_dropped)?;
            }
            out.flush()?;
            Ok(())
        }
        Cmd::Index(a) => {
            let mut wh = Warehouse::open(&a.root)?;
            let m = wh.rebuild_secondary_with(IndexOptions { unfiltered_text: a.unfiltered, ..IndexOptions::default() })?;
            let mut out = stdout();
            for i in &m.indexes {
                writeln!(out, "{}\t{}", i.kind.name(), i.entries)?;
            }
            out.flush()?;
            Ok(())
        }
        Cmd::Dump(a) => {
            let table = TableId::from_name(&a.table).map_err(|_| usage(format!("unknown table {:?}", a.table)))?;
            let snap = Snapshot::open(&a.root)?;
            let mut out = stdout();
            snap.dump(table, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Cmd::Cluster(a) => {
            let user_range = match &a.users {
                None => None,
                Some(s) => {
                    let (lo, hi) = s.split_once('-').ok_or_else(|| usage("--users expects LO-HI"))?;
                    let p = |v: &str| v.trim().parse::<u64>().map_err(|_| usage(format!("bad user id {v:?}")));
                    Some((p(lo)?, p(hi)?))
                }
            };
            let mut wh = Warehouse::open(&a.root)?;
            let snap = wh.snapshot()?;
            let path = a.root.join("stage").join("cluster_summary.twbl");
            fs::create_dir_all(path.parent().expect("has parent"))?;
            let cfg = ClusterConfig { linking_km: a.linking_km, k: a.top_k, user_range };
            let rep = cluster_all_users(&snap, &cfg, &path)?;
            drop(snap);
            wh.bulk_insert(&[&path])?;
            let _ = fs::remove_file(&path);
            wh.sort_stages()?;
            wh.merge_batch()?;
            println!("users\t{}\nclusters\t{}", rep.users, rep.rows);
            Ok(())
        }
        Cmd::Regions(RegionsCmd::Load { file, level }) => {
            let (set, rep) = load_regions(&file, level)?;
            let mut out = stdout();
            for r in set.regions() {
                writeln!(out, "{}\t{}\t{}\t{}", r.region_id, r.name, r.outer_ring_count(), r.vertex_count())?;
            }
            out.flush()?;
            for s in &rep.skipped {
                eprintln!("skipped: {s}");
            }
            Ok(())
        }
        Cmd::Regions(RegionsCmd::Assign { root, file, level, simplify_km }) => {
            let (set, _) = load_regions(&file, level)?;
            let set = if simplify_km > 0.0 { set.simplified(simplify_km) } else { set };
            let mut wh = Warehouse::open(&root)?;
            let snap = wh.snapshot()?;
            let summaries: Vec<ClusterSummary> = snap.cluster_summaries().collect::<twdb::Result<_>>()?;
            drop(snap);
            let assigned = assign_regions(&summaries, &set);
            let matched = assigned.iter().filter(|s| s.region_id.is_some()).count();
            wh.stage_rows(&assigned)?;
            wh.sort_stages()?;
            wh.merge_batch()?;
            println!("clusters\t{}\nassigned\t{matched}", assigned.len());
            Ok(())
        }
        Cmd::Query(a) => run_query(&a.root, a.q),
        Cmd::Htm(c) => run_htm(c),
        Cmd::Langid(LangidCmd::Identify { text, profiles }) => {
            let id = match profiles {
                Some(d) => LanguageId::load_dir(d)?,
                None => LanguageId::seeded(),
            };
            let (lang, conf) = id.identify(&text)?;
            println!("{lang}\t{conf:.3}");
            Ok(())
        }
        Cmd::Langid(LangidCmd::Train { corpus, lang, out }) => {
            let text = fs::read_to_string(&corpus)?;
            let p = train_profile(&text, &lang)?;
            p.save(&out)?;
            println!("{}\t{}", p.lang, p.len());
            Ok(())
        }
        Cmd::Pipeline(a) => {
            let mut cfg = PipelineConfig::load(&a.config)?;
            cfg.apply_overrides(&a.set)?;
            if let Some(w) = a.workers {
                cfg.workers = w;
            }
            let rep = run_pipeline(&cfg)?;
            let mut out = stdout();
            writeln!(out, "step\trows\tseconds")?;
            for s in &rep.steps {
                if s.skipped {
                    writeln!(out, "{}\t-\tskipped", s.step)?;
                } else {
                    writeln!(out, "{}\t{}\t{:.3}", s.step, s.rows, s.seconds)?;
                }
            }
            writeln!(out, "generation\t{}", rep.generation)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn collect_bulk_files(p: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    if p.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(p)
            ?
            .flatten()
            .map(|e| e.path())
            .collect();
        entries.sort();
        for e in entries {
            if e.is_dir() || e.extension().is_some_and(|x| x == "twbl") {
                collect_bulk_files(&e, out)?;
            }
        }
    } else {
        out.push(p.to_path_buf());
    }
    Ok(())
}

fn gen(a: GenArgs) -> CliResult<()> {
    let mut cfg = GenConfig::default();
    let mut v = serde_json::to_value(&cfg).map_err(|e| usage(e.to_string()))?;
    for s in &a.set {
        let (k, val) = s.split_once('=').ok_or_else(|| usage(format!("--set {s:?} is not key=value")))?;
        let obj = v.as_object_mut().expect("config is an object");
        if !obj.contains_key(k) {
            return Err(usage(format!("unknown generator field {k:?}")));
        }
        let parsed: serde_json::Value =
            serde_json::from_str(val).unwrap_or_else(|_| serde_json::Value::String(val.to_string()));
        obj.insert(k.to_string(), parsed);
    }
    cfg = serde_json::from_value(v).map_err(|e| usage(format!("generator config: {e}")))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(u) = a.users {
        cfg.n_users = u;
    }
    if let Some(t) = a.tweets {
        cfg.n_tweets = t;
    }
    cfg.validate()?;
    let file = File::create(&a.out)?;
    let gz = a.gzip || a.out.extension().is_some_and(|x| x == "gz");
    let gt = if gz {
        let mut w = GzEncoder::new(BufWriter::new(file), Compression::fast());
        let gt = gen_synthetic(&cfg, &mut w)?;
        w.finish()?.flush()?;
        gt
    } else {
        let mut w = BufWriter::new(file);
        let gt = gen_synthetic(&cfg, &mut w)?;
        w.flush()?;
        gt
    };
    if let Some(t) = &a.truth {
        let text = serde_json::to_string_pretty(&gt).map_err(|e| Error::Invalid(e.to_string()))?;
        fs::write(t, text)?;
    }
    println!("documents\t{}\nstatuses\t{}", gt.documents, gt.statuses);
    Ok(())
}

fn run_query(root: &Path, q: QueryCmd) -> CliResult<()> {
    let snap = Snapshot::open(root)?;
    let mut out = stdout();
    match q {
        QueryCmd::Q1 { run } => query::write_histogram(&query::hourly_histogram(&snap, run)?, &mut out)?,
        QueryCmd::Q2 { run, term } => query::write_histogram(&query::term_daily_histogram(&snap, run, &term)?, &mut out)?,
        QueryCmd::Q3 { run, kind, direction, mode } => {
            let kind: EdgeKind = kind.parse().map_err(to_usage)?;
            let dir: Direction = direction.parse().map_err(to_usage)?;
            let mode: DegreeMode = mode.parse().map_err(to_usage)?;
            query::write_histogram(&query::degree_distribution(&snap, run, kind, dir, mode)?, &mut out)?
        }
        QueryCmd::Q4 { run, lon, lat, radius, mode } => {
            let mode: CircleMode = mode.parse().map_err(to_usage)?;
            writeln!(out, "{}", query::circle_count(&snap, run, lon, lat, radius, mode)?)?;
        }
        QueryCmd::Discovery { fit_from, fit_to } => {
            let times = query::first_seen_times(&snap)?;
            if let Some(from) = fit_from {
                let to = fit_to.or(times.last().copied()).unwrap_or(from);
                let fit = query::fit_discovery_curve(&query::discovery_samples(&times, from, to, 3600))?;
                eprintln!("fit\tc={:.3}\ta={:.3}\tb={:.3}\tt0_days={:.4}\trms={:.3}", fit.c, fit.a, fit.b, fit.t0_days, fit.rms);
            }
            query::write_histogram(&query::cumulative_by_date(&times), &mut out)?;
        }
        QueryCmd::Edges { run, kind, view } => {
            let kind: EdgeKind = kind.parse().map_err(to_usage)?;
            let view: View = view.parse().map_err(to_usage)?;
            let r = query::network_edges(&snap, kind, view, run)?;
            r.network.write_tsv(&mut out)?;
            if r.unresolved > 0 {
                log::warn!("{} reply edges with unknown target skipped", r.unresolved);
            }
        }
        QueryCmd::ExportGeo { run, circle, mode } => {
            let mode: CircleMode = mode.parse().map_err(to_usage)?;
            let pts = query::circle_points(&snap, run, circle[0], circle[1], circle[2], mode)?;
            writeln!(out, "{}", query::points_geojson(&pts))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn to_usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn run_htm(c: HtmCmd) -> CliResult<()> {
    let mut out = stdout();
    match c {
        HtmCmd::Lookup { lon, lat, level } => {
            let id = latlon_to_htm(lon, lat, level)?;
            let r = id.range();
            writeln!(out, "{}\t{}\t{}", id.raw(), r.start, r.end)?;
        }
        HtmCmd::Cover { lon, lat, radius, max_ranges, max_level } => {
            for r in cover_circle_with(lon, lat, radius, &CoverConfig { max_level, max_ranges })? {
                writeln!(out, "{}\t{}", r.start, r.end)?;
            }
        }
        HtmCmd::Trixel { id } => {
            let t = HtmId::new(id)?.trixel();
            for v in t.v {
                let (lon, lat) = v.to_lonlat();
                writeln!(out, "{lon}\t{lat}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
