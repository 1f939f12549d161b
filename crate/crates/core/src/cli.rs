//! Command-line pipeline: each stage reads its predecessor's files from the
//! output directory and writes its own.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::dedup::{self, PairClassifier, PairwiseScore};
use crate::diagnose::{aggregate_report, write_diagnoses, DiagnosisReport, DistrictDiagnosis};
use crate::index::{self, IndexCell, IndexPoint, IndexSeries, SizeClass};
use crate::ingest::{self, PropertyType};
use crate::report::{self, CellFit, FitsDocument};
use crate::synth::{self, AfterTc, BubbleDraw, CorpusSpec, MarketSpec, SeriesSpec};
use crate::quarter::Quarter;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "bubble-diag", version, about = "Real-estate bubble diagnostics from classified-ad listings")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ClassifierArgs {
    /// Labelled pairs file (id_a,id_b,label) to train the pair classifier
    #[arg(long, conflicts_with = "model")]
    train: Option<PathBuf>,
    /// Previously trained classifier (classifier.json)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Ground-truth sidecar (listing_id,true_cluster_id) for scoring
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate raw listings
    Ingest {
        input: PathBuf,
    },
    /// Detect duplicate ads and keep one representative per cluster
    Dedup {
        /// Listings file (default: <out>/listings.csv)
        #[arg(long)]
        listings: Option<PathBuf>,
        #[command(flatten)]
        classifier: ClassifierArgs,
    },
    /// Build quarterly median price series
    Index {
        /// Deduplicated listings (default: <out>/deduplicated.csv)
        #[arg(long)]
        listings: Option<PathBuf>,
    },
    /// Calibrate the bubble model on every series
    Fit {
        /// Series file (default: <out>/series.csv)
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Turn fits into district verdicts
    Diagnose {
        /// Fit records (default: <out>/fits.json)
        #[arg(long)]
        fits: Option<PathBuf>,
    },
    /// Run every stage from raw listings to the diagnosis
    Report {
        input: PathBuf,
        #[command(flatten)]
        classifier: ClassifierArgs,
    },
    /// Generate synthetic inputs with known ground truth
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
}

#[derive(Subcommand, Debug)]
enum SynthKind {
    /// Listing corpus with planted duplicate clusters
    Corpus {
        #[arg(long, default_value_t = 1000)]
        n_listings: usize,
        #[arg(long, default_value_t = 0.3)]
        dup_rate: f64,
        #[arg(long, default_value_t = 0.2)]
        strength: f64,
        #[arg(long, default_value_t = 0.1)]
        sibling_rate: f64,
        #[arg(long, default_value_t = 2000)]
        training_pairs: usize,
        #[arg(long, default_value_t = 20)]
        districts: usize,
    },
    /// District market with planted bubbles and linear growth
    Market {
        #[arg(long, default_value_t = 20)]
        districts: usize,
        #[arg(long, default_value_t = 3)]
        bubbles: usize,
        #[arg(long, default_value_t = 0)]
        bursts: usize,
        #[arg(long, default_value_t = 0.1)]
        dup_rate: f64,
        #[arg(long, default_value_t = 0.2)]
        strength: f64,
    },
    /// A single bubble price series
    Series {
        #[arg(long, default_value_t = 32)]
        quarters: usize,
        /// Log-noise as a fraction of the clean log-price range
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Critical time relative to the last quarter, in years (default: random)
        #[arg(long, allow_hyphen_values = true)]
        tc_offset: Option<f64>,
        #[arg(long, default_value = "2005Q1")]
        start: Quarter,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Precondition(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Precondition(_) => EXIT_PRECONDITION,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Precondition(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", cli.out.display())))?;
    let ctx = Ctx { cfg, out: cli.out };
    pool.install(|| match cli.command {
        Command::Ingest { input } => ctx.ingest(&input),
        Command::Dedup { listings, classifier } => ctx.dedup(listings.as_deref(), &classifier),
        Command::Index { listings } => ctx.index(listings.as_deref()),
        Command::Fit { series } => ctx.fit(series.as_deref()),
        Command::Diagnose { fits } => ctx.diagnose(fits.as_deref()),
        Command::Report { input, classifier } => {
            ctx.ingest(&input)?;
            ctx.dedup(None, &classifier)?;
            ctx.index(None)?;
            ctx.fit(None)?;
            ctx.diagnose(None)
        }
        Command::Synth { kind } => ctx.synth(kind),
    })
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn finish(path: &Path, w: BufWriter<File>, res: std::io::Result<()>) -> Result<(), CliError> {
    res.map_err(|e| io_err(path, e))?;
    w.into_inner().map_err(|e| io_err(path, e.error()))?;
    Ok(())
}

/// Writes `path` through `body`, which receives the buffered file.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    let res = body(&mut w).and_then(|_| w.flush());
    finish(path, w, res)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

fn comment_lines(w: &mut impl Write, lines: &[String]) -> std::io::Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// An explicit input must exist; a default upstream artifact that is
    /// missing means the producing stage has not run.
    fn upstream(&self, explicit: Option<&Path>, default: &str, stage: &str) -> Result<PathBuf, CliError> {
        match explicit {
            Some(p) => Ok(p.to_path_buf()),
            None => {
                let p = self.path(default);
                if p.exists() {
                    Ok(p)
                } else {
                    Err(CliError::Precondition(format!("{} not found; run `bubble-diag {stage}` first", p.display())))
                }
            }
        }
    }

    fn preamble(&self, stage: &str, inputs: &[(&str, &Path)]) -> Vec<String> {
        let mut lines = self.cfg.preamble(stage);
        for (name, p) in inputs {
            lines.push(format!("input.{name} = {:?}", p.display().to_string()));
        }
        lines
    }

    fn read_listings(&self, path: &Path) -> Result<ingest::Parsed, CliError> {
        ingest::parse_listings(open(path)?, self.cfg.window).map_err(|e| match e {
            ingest::IngestError::Header { .. } => CliError::Precondition(format!("{}: {e}", path.display())),
            _ => io_err(path, e),
        })
    }

    fn ingest(&self, input: &Path) -> Result<(), CliError> {
        let parsed = self.read_listings(input)?;
        let lines = self.preamble("ingest", &[("listings", input)]);
        let (lp, rp) = (self.path("listings.csv"), self.path("rejects.csv"));
        write_file(&lp, |w| ingest::write_listings(w, &lines, &parsed.listings))?;
        write_file(&rp, |w| ingest::write_rejects(w, &lines, &parsed.rejects))?;
        println!("ingest: {} admitted, {} rejected -> {}", parsed.listings.len(), parsed.rejects.len(), lp.display());
        Ok(())
    }

    fn classifier(&self, args: &ClassifierArgs, listings: &[ingest::Listing]) -> Result<PairClassifier, CliError> {
        if let Some(model) = &args.model {
            return serde_json::from_reader(open(model)?).map_err(|e| CliError::Precondition(format!("{}: {e}", model.display())));
        }
        let Some(train) = &args.train else {
            return Err(CliError::Precondition("dedup needs --train <pairs.csv> or --model <classifier.json>".into()));
        };
        let pairs = dedup::read_training_pairs(open(train)?).map_err(|e| CliError::Precondition(format!("{}: {e}", train.display())))?;
        let samples = dedup::labelled_features(&pairs, listings).map_err(|e| CliError::Precondition(format!("{}: {e}", train.display())))?;
        dedup::train_classifier(&samples, &self.cfg.dedup).map_err(|e| CliError::Precondition(format!("{}: {e}", train.display())))
    }

    fn dedup(&self, listings: Option<&Path>, args: &ClassifierArgs) -> Result<(), CliError> {
        let input = self.upstream(listings, "listings.csv", "ingest")?;
        if args.model.is_none() && args.train.is_none() {
            return Err(CliError::Precondition("dedup needs --train <pairs.csv> or --model <classifier.json>".into()));
        }
        let parsed = self.read_listings(&input)?;
        let ls = parsed.listings;
        let clf = if ls.is_empty() { PairClassifier::default() } else { self.classifier(args, &ls)? };
        let outcome = dedup::deduplicate(&ls, &clf);
        let score = match &args.truth {
            Some(p) => {
                let truth = dedup::read_truth(open(p)?).map_err(|e| io_err(p, e))?;
                Some(dedup::pairwise_f1(&outcome.clusters, &truth))
            }
            None => None,
        };
        let mut inputs = vec![("listings", input.as_path())];
        if let Some(t) = &args.train {
            inputs.push(("train", t.as_path()));
        }
        if let Some(m) = &args.model {
            inputs.push(("model", m.as_path()));
        }
        let lines = self.preamble("dedup", &inputs);
        let reps: Vec<ingest::Listing> = outcome.representatives(&ls).into_iter().cloned().collect();
        write_file(&self.path("clusters.csv"), |w| dedup::write_cluster_report(w, &lines, &outcome.clusters))?;
        write_file(&self.path("deduplicated.csv"), |w| ingest::write_listings(w, &lines, &reps))?;
        write_json(&self.path("classifier.json"), &clf)?;
        let summary = DedupSummary {
            config: &self.cfg,
            input_listings: ls.len(),
            candidate_pairs: outcome.judged.len(),
            duplicate_pairs: outcome.judged.iter().filter(|j| j.duplicate).count(),
            exact_copy_pairs: outcome.judged.iter().filter(|j| j.features.is_none()).count(),
            clusters: outcome.clusters.len(),
            score,
        };
        write_json(&self.path("dedup_summary.json"), &summary)?;
        println!("dedup: {} listings -> {} clusters ({} candidate pairs)", ls.len(), outcome.clusters.len(), summary.candidate_pairs);
        if let Some(s) = score {
            println!("dedup: pairwise precision {:.4} recall {:.4} F1 {:.4}", s.precision, s.recall, s.f1);
        }
        Ok(())
    }

    fn index(&self, listings: Option<&Path>) -> Result<(), CliError> {
        let input = self.upstream(listings, "deduplicated.csv", "dedup")?;
        let ls = self.read_listings(&input)?.listings;
        let icfg = self.cfg.index_config();
        let series: Vec<IndexSeries> = index::cells(&ls)
            .par_iter()
            .map(|c| index::build_series(&ls, c, &icfg))
            .filter(|s| !s.points.is_empty())
            .collect();
        let lines = self.preamble("index", &[("listings", &input)]);
        write_file(&self.path("series.csv"), |w| index::write_series(w, &lines, &series))?;
        let heat = report::heatmap_rows(&series, self.cfg.index.change_from, self.cfg.index.change_to);
        write_file(&self.path("heatmap.csv"), |w| report::write_heatmap(w, &lines, &heat))?;
        write_file(&self.path("district_values.csv"), |w| report::write_district_values(w, &lines, &series))?;
        println!("index: {} listings -> {} series", ls.len(), series.len());
        Ok(())
    }

    fn fit(&self, series: Option<&Path>) -> Result<(), CliError> {
        let input = self.upstream(series, "series.csv", "index")?;
        let all = index::read_series(open(&input)?).map_err(|e| CliError::Precondition(format!("{}: {e}", input.display())))?;
        let d = &self.cfg.diagnose;
        let chosen: Vec<&IndexSeries> =
            all.iter().filter(|s| d.property_types.contains(&s.cell.property_type) && d.sizes.contains(&s.cell.size)).collect();
        let outcomes: Vec<report::CellOutcome> = chosen
            .par_iter()
            .map(|s| report::fit_cell(s, &self.cfg).unwrap_or_else(|e| failed_fit(s, &e.to_string(), &self.cfg)))
            .collect();
        let lines = self.preamble("fit", &[("series", &input)]);
        let fits: Vec<CellFit> = outcomes.iter().map(|o| o.fit.clone()).collect();
        let plot: Vec<report::PlotRow> = outcomes.iter().flat_map(|o| o.plot.iter().cloned()).collect();
        write_json(&self.path("fits.json"), &FitsDocument { config: self.cfg.clone(), cells: fits.clone() })?;
        write_file(&self.path("fits.csv"), |w| report::write_fits_table(w, &lines, &fits))?;
        write_file(&self.path("fit_plot.csv"), |w| report::write_plot(w, &lines, &plot))?;
        write_file(&self.path("tc_bands.csv"), |w| report::write_tc_bands(w, &lines, &fits))?;
        let qualified = fits.iter().filter(|f| f.qualified).count();
        println!("fit: {} series, {} qualified", fits.len(), qualified);
        Ok(())
    }

    fn diagnose(&self, fits: Option<&Path>) -> Result<(), CliError> {
        let input = self.upstream(fits, "fits.json", "fit")?;
        let doc: FitsDocument =
            serde_json::from_reader(open(&input)?).map_err(|e| CliError::Precondition(format!("{}: {e}", input.display())))?;
        let diagnoses: Vec<DistrictDiagnosis> = doc.cells.iter().map(|f| report::diagnose_cell_fit(f, &self.cfg)).collect();
        let summary = aggregate_report(&diagnoses);
        let lines = self.preamble("diagnose", &[("fits", &input)]);
        write_file(&self.path("diagnosis.csv"), |w| write_diagnoses(w, &lines, &diagnoses))?;
        write_json(&self.path("diagnosis.json"), &DiagnosisDocument { config: &self.cfg, report: &summary, cells: &diagnoses })?;
        let c = summary.counts;
        println!("diagnose: {} critical, {} burst, {} none", c.critical, c.burst, c.none);
        for s in &summary.critical {
            let cells: Vec<String> = s
                .cells
                .iter()
                .map(|c| match c.window {
                    Some(w) => format!("{} {} [{} - {}]", c.property_type, c.size, w.start, w.end),
                    None => format!("{} {}", c.property_type, c.size),
                })
                .collect();
            println!("  critical {}: {}", s.district_id, cells.join(", "));
        }
        for s in &summary.watch {
            println!("  watch {}", s.district_id);
        }
        Ok(())
    }

    fn synth(&self, kind: SynthKind) -> Result<(), CliError> {
        let seed = self.cfg.seed;
        match kind {
            SynthKind::Corpus { n_listings, dup_rate, strength, sibling_rate, training_pairs, districts } => {
                let spec = CorpusSpec {
                    seed,
                    n_listings,
                    dup_rate,
                    perturbation_strength: strength,
                    sibling_rate,
                    training_pairs,
                    window: self.cfg.window,
                    n_districts: districts,
                };
                let corpus = synth::gen_listing_corpus(&spec);
                let lines = self.synth_preamble("corpus", &spec);
                self.write_corpus(&lines, &corpus)?;
                println!(
                    "synth: {} listings, {} planted duplicates in {} clusters",
                    corpus.listings.len(),
                    corpus.planted_duplicates,
                    corpus.planted_clusters
                );
            }
            SynthKind::Market { districts, bubbles, bursts, dup_rate, strength } => {
                let spec = MarketSpec {
                    seed,
                    n_districts: districts,
                    bubbles,
                    bursts,
                    window: self.cfg.window,
                    dup_rate,
                    perturbation_strength: strength,
                    ..MarketSpec::default()
                };
                let market = synth::gen_market(&spec);
                let lines = self.synth_preamble("market", &spec);
                self.write_corpus(&lines, &market.corpus)?;
                write_file(&self.path("trends.csv"), |w| {
                    comment_lines(w, &lines)?;
                    synth::write_trends(w, &market.trends)
                })?;
                println!("synth: {} listings across {} districts ({} bubbles, {} bursts)", market.corpus.listings.len(), districts, bubbles, bursts);
            }
            SynthKind::Series { quarters, noise, tc_offset, start } => {
                if quarters < 2 {
                    return Err(CliError::Usage("--quarters must be at least 2".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let draw = match tc_offset {
                    Some(off) => BubbleDraw { tc_offset: (off, off), ..BubbleDraw::default() },
                    None => BubbleDraw::default(),
                };
                let params = draw.draw(&mut rng, start, quarters);
                let spec = SeriesSpec {
                    seed,
                    start,
                    n_quarters: quarters,
                    params,
                    noise_sigma: noise,
                    after_tc: if tc_offset.is_some_and(|o| o <= 0.0) { AfterTc::Level } else { AfterTc::Reject },
                };
                let s = synth::gen_lppl_series(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
                let series = IndexSeries {
                    cell: IndexCell::new("SYN", PropertyType::Apartment, SizeClass::All),
                    points: s
                        .quarters
                        .iter()
                        .zip(s.prices())
                        .map(|(&quarter, value)| IndexPoint { quarter, value, count: 0, fallback: false })
                        .collect(),
                };
                let lines = self.synth_preamble("series", &spec);
                write_file(&self.path("series.csv"), |w| index::write_series(w, &lines, &[series]))?;
                write_json(&self.path("true_params.json"), &spec)?;
                println!("synth: series of {quarters} quarters, tc {:.3}, m {:.3}, omega {:.3}", params.tc, params.m, params.omega);
            }
        }
        Ok(())
    }

    fn synth_preamble<S: Serialize>(&self, kind: &str, spec: &S) -> Vec<String> {
        let mut lines = self.cfg.preamble(&format!("synth-{kind}"));
        lines.push(format!("spec = {}", serde_json::to_string(spec).expect("spec serializes")));
        lines
    }

    fn write_corpus(&self, lines: &[String], corpus: &synth::SynthCorpus) -> Result<(), CliError> {
        write_file(&self.path("listings_raw.csv"), |w| ingest::write_listings(w, lines, &corpus.listings))?;
        write_file(&self.path("truth.csv"), |w| {
            comment_lines(w, lines)?;
            synth::write_truth(w, &corpus.truth)
        })?;
        write_file(&self.path("training_pairs.csv"), |w| {
            comment_lines(w, lines)?;
            dedup::write_training_pairs(w, &corpus.labelled)
        })
    }
}

fn failed_fit(s: &IndexSeries, msg: &str, cfg: &RunConfig) -> report::CellOutcome {
    let fit = CellFit {
        cell: s.cell.clone(),
        n_points: s.points.len(),
        params: None,
        sse: None,
        oscillations: None,
        t_first: None,
        t_last: None,
        qualified: false,
        rejections: vec!["fit_error".into()],
        interval: None,
        bootstrap_ok: 0,
        bootstrap_failed: 0,
        note: Some(msg.to_string()),
    };
    let diagnosis = report::diagnose_cell_fit(&fit, cfg);
    report::CellOutcome { fit, diagnosis, plot: Vec::new() }
}

#[derive(Serialize)]
struct DedupSummary<'a> {
    config: &'a RunConfig,
    input_listings: usize,
    candidate_pairs: usize,
    duplicate_pairs: usize,
    exact_copy_pairs: usize,
    clusters: usize,
    score: Option<PairwiseScore>,
}

#[derive(Serialize)]
struct DiagnosisDocument<'a> {
    config: &'a RunConfig,
    #[serde(flatten)]
    report: &'a DiagnosisReport,
    cells: &'a [DistrictDiagnosis],
}
