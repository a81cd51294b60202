use std::fmt::{Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gtnc::{
    evaluate, fidelity_matrix, hilbert_distance_matrix, load_idx, raw_distance_matrix,
    train_all_classes, train_discriminative, ClassPairMatrix, Classifier, ClassifierBundle,
    Dataset, Evaluation, LabeledMps, LazyBundle, Manifest, PairStats, TrainConfig, TrainReport,
};

use crate::args::{
    CompareArgs, DataArgs, DistancesArgs, EntropyArgs, EvalArgs, IngestArgs, Space, TrainArgs,
    TrainDiscArgs,
};

/// A pipeline failure attributed to the module that raised it.
#[derive(Debug)]
pub struct Failure {
    pub module: &'static str,
    pub message: String,
}

pub type Outcome<T> = std::result::Result<T, Failure>;

pub trait Tag<T> {
    fn tag(self, module: &'static str) -> Outcome<T>;
}

impl<T, E: Display> Tag<T> for std::result::Result<T, E> {
    fn tag(self, module: &'static str) -> Outcome<T> {
        self.map_err(|e| Failure {
            module,
            message: e.to_string(),
        })
    }
}

fn fail<T>(module: &'static str, message: impl Into<String>) -> Outcome<T> {
    Err(Failure {
        module,
        message: message.into(),
    })
}

pub const DISC_MODEL: &str = "model_disc.mps";
const DATASET_MANIFEST: &str = "dataset.manifest";

/// Tab-separated table built in memory and written in one go.
struct Tsv(String);

impl Tsv {
    fn new<S: AsRef<str>>(header: impl IntoIterator<Item = S>) -> Self {
        let mut t = Tsv(String::new());
        t.row(header);
        t
    }

    fn row<S: AsRef<str>>(&mut self, cells: impl IntoIterator<Item = S>) {
        let cells: Vec<String> = cells.into_iter().map(|c| c.as_ref().to_string()).collect();
        writeln!(self.0, "{}", cells.join("\t")).unwrap();
    }

    fn write(&self, dir: &Path, name: &str) -> Outcome<()> {
        fs::write(dir.join(name), &self.0).tag("cli")
    }
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map_or("-".into(), |v| v.to_string())
}

/// Creates the run directory. An existing non-empty directory is replaced
/// only with `force`, and only if it holds a `run.manifest`.
pub fn prepare_run_dir(dir: &Path, force: bool) -> Outcome<()> {
    if dir.exists() {
        let empty = fs::read_dir(dir).tag("cli")?.next().is_none();
        if !empty {
            if !force {
                return fail(
                    "cli",
                    format!(
                        "run directory {} exists; pass --force to replace it",
                        dir.display()
                    ),
                );
            }
            if !dir.join("run.manifest").is_file() {
                return fail(
                    "cli",
                    format!(
                        "{} is not a run directory; refusing to replace it",
                        dir.display()
                    ),
                );
            }
            fs::remove_dir_all(dir).tag("cli")?;
        }
    }
    fs::create_dir_all(dir).tag("cli")
}

/// Dataset selection resolved from flags or an ingest directory.
struct DataSpec {
    images: PathBuf,
    labels: PathBuf,
    downsample: usize,
    per_class: Option<usize>,
    seed: u64,
}

impl DataSpec {
    fn resolve(args: &DataArgs, seed: u64) -> Outcome<Self> {
        if let Some(dir) = &args.data {
            let man = Manifest::read(dir.join(DATASET_MANIFEST)).tag("data_io")?;
            let get = |k: &str| {
                man.get(k).map(str::to_string).ok_or_else(|| Failure {
                    module: "data_io",
                    message: format!("{} lacks `{k}`", dir.join(DATASET_MANIFEST).display()),
                })
            };
            let per_class = match get("per_class")?.as_str() {
                "all" => None,
                n => Some(n.parse().tag("data_io")?),
            };
            let seed = if per_class.is_some() {
                get("subsample_seed")?.parse().tag("data_io")?
            } else {
                seed
            };
            return Ok(DataSpec {
                images: get("images")?.into(),
                labels: get("labels")?.into(),
                downsample: man.parse("downsample").tag("data_io")?,
                per_class,
                seed,
            });
        }
        let (Some(images), Some(labels)) = (&args.images, &args.labels) else {
            return fail(
                "cli",
                "either --data or both --images and --labels are required",
            );
        };
        Ok(DataSpec {
            images: images.clone(),
            labels: labels.clone(),
            downsample: args.downsample,
            per_class: args.per_class,
            seed,
        })
    }

    fn load(&self) -> Outcome<Dataset> {
        let mut d = load_idx(&self.images, &self.labels).tag("data_io")?;
        if self.downsample != 1 {
            d = d.downsample(self.downsample).tag("data_io")?;
        }
        if let Some(n) = self.per_class {
            d = d.subsample(n, self.seed);
        }
        Ok(d)
    }

    fn key_values(&self, prefix: &str) -> KeyValues {
        vec![
            (format!("{prefix}images"), self.images.display().to_string()),
            (format!("{prefix}labels"), self.labels.display().to_string()),
            (format!("{prefix}downsample"), self.downsample.to_string()),
            (format!("{prefix}per_class"), opt(self.per_class)),
            (format!("{prefix}subsample_seed"), self.seed.to_string()),
        ]
    }
}

type KeyValues = Vec<(String, String)>;

fn config_values(cfg: &TrainConfig, prefix: &str) -> KeyValues {
    cfg.key_values()
        .into_iter()
        .map(|(k, v)| (format!("{prefix}{k}"), v))
        .collect()
}

fn write_run_manifest(dir: &Path, command: &str, entries: KeyValues) -> Outcome<()> {
    let mut man = Manifest::new();
    man.set("command", command)
        .set("gtnc_version", gtnc::VERSION);
    man.extend(entries);
    man.write(dir.join("run.manifest")).tag("cli")
}

fn history_tables(report: &TrainReport) -> (Tsv, Tsv) {
    let mut hist = Tsv::new(["sweep", "cost", "alpha", "accepted", "best_cost"]);
    let best = report.best_costs();
    let rows = report
        .cost_history
        .iter()
        .zip(&report.step_history)
        .zip(&report.accepted)
        .zip(&best);
    for (i, (((cost, step), accepted), best)) in rows.take(report.sweeps_run).enumerate() {
        hist.row([
            i.to_string(),
            cost.to_string(),
            step.to_string(),
            accepted.to_string(),
            best.to_string(),
        ]);
    }
    let mut timing = Tsv::new(["sweep", "seconds"]);
    for (i, s) in report.sweep_seconds.iter().enumerate() {
        timing.row([i.to_string(), format!("{s:.6}")]);
    }
    (hist, timing)
}

pub fn ingest(a: &IngestArgs) -> Outcome<()> {
    let spec = DataSpec::resolve(&a.data, a.seed)?;
    let d = spec.load()?;
    let dir = &a.run.out;
    let mut man = Manifest::new();
    man.extend(d.provenance.key_values());
    man.set("count", d.len())
        .set("height", d.height())
        .set("width", d.width())
        .set("classes", d.num_classes());
    man.write(dir.join(DATASET_MANIFEST)).tag("cli")?;
    let mut t = Tsv::new(["class", "count"]);
    for (c, n) in d.class_counts().iter().enumerate() {
        t.row([c.to_string(), n.to_string()]);
    }
    t.write(dir, "classes.tsv")?;
    write_run_manifest(dir, "ingest", spec.key_values(""))
}

pub fn train(a: &TrainArgs) -> Outcome<()> {
    let cfg = a.train.config();
    cfg.validate().tag("generative_trainer")?;
    let spec = DataSpec::resolve(&a.data, a.data_seed)?;
    let mut d = spec.load()?;
    if let Some(k) = a.class {
        let parts = d.split_by_class();
        match parts.into_iter().nth(k) {
            Some(p) if !p.is_empty() => d = p,
            _ => return fail("data_io", format!("class {k} has no samples")),
        }
    }
    let bundle = train_all_classes(&d, &cfg).tag("generative_trainer")?;
    let dir = &a.run.out;
    bundle.save(dir).tag("mps_model")?;
    for (&c, r) in bundle.classes().iter().zip(&bundle.provenance.reports) {
        let (hist, timing) = history_tables(r);
        hist.write(dir, &format!("class{c}.history.tsv"))?;
        timing.write(dir, &format!("class{c}.timing.tsv"))?;
    }
    let mut kv = spec.key_values("data.");
    kv.push(("class".into(), opt(a.class)));
    kv.extend(config_values(&cfg, ""));
    write_run_manifest(dir, "train", kv)
}

pub fn train_disc(a: &TrainDiscArgs) -> Outcome<()> {
    let cfg = a.train.config();
    cfg.validate().tag("discriminative_trainer")?;
    let spec = DataSpec::resolve(&a.data, a.data_seed)?;
    let d = spec.load()?;
    let (m, report) = train_discriminative(&d, &cfg).tag("discriminative_trainer")?;
    let dir = &a.run.out;
    m.save(dir.join(DISC_MODEL)).tag("mps_model")?;
    let mut man = Manifest::new();
    man.set("sites", m.len())
        .set("classes", m.num_classes())
        .set("label_site", m.label_site())
        .set("max_bond", m.max_bond_dim())
        .set("sweeps", report.sweeps_run)
        .set("converged", report.converged)
        .set("initial_cost", format!("{:e}", report.initial_cost))
        .set("final_cost", format!("{:e}", report.final_cost));
    man.extend(cfg.key_values());
    man.extend(
        d.provenance
            .key_values()
            .into_iter()
            .map(|(k, v)| (format!("data.{k}"), v)),
    );
    man.write(dir.join("model_disc.manifest")).tag("cli")?;
    let (hist, timing) = history_tables(&report);
    hist.write(dir, "history.tsv")?;
    timing.write(dir, "timing.tsv")?;
    let mut kv = spec.key_values("data.");
    kv.extend(config_values(&cfg, ""));
    write_run_manifest(dir, "train-disc", kv)
}

/// A trained model found in a run directory.
enum Loaded {
    Bundle(ClassifierBundle),
    Disc(LabeledMps),
}

impl Loaded {
    fn open(dir: &Path) -> Outcome<Self> {
        let disc = dir.join(DISC_MODEL);
        if disc.is_file() {
            return Ok(Loaded::Disc(LabeledMps::load(disc).tag("mps_model")?));
        }
        Ok(Loaded::Bundle(
            ClassifierBundle::load(dir).tag("mps_model")?,
        ))
    }

    fn classifier(&self) -> &dyn Classifier {
        match self {
            Loaded::Bundle(b) => b,
            Loaded::Disc(m) => m,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Loaded::Bundle(_) => "gtnc",
            Loaded::Disc(_) => "disc",
        }
    }
}

fn eval_inputs(a: &EvalArgs) -> Outcome<(Loaded, Dataset, KeyValues)> {
    let model = Loaded::open(&a.models)?;
    let spec = DataSpec::resolve(&a.data, a.data_seed)?;
    let mut d = spec.load()?;
    if let Some(n) = a.limit {
        d = d.take(n);
    }
    let mut kv = vec![
        ("models".to_string(), a.models.display().to_string()),
        ("model_kind".to_string(), model.kind().to_string()),
    ];
    kv.extend(spec.key_values("data."));
    kv.push(("limit".into(), opt(a.limit)));
    Ok((model, d, kv))
}

pub fn classify(a: &EvalArgs) -> Outcome<()> {
    let (model, d, kv) = eval_inputs(a)?;
    let ev = evaluate(model.classifier(), &d).tag("classifier")?;
    let mut t = Tsv::new(["sample", "label", "predicted", "undecidable"]);
    for (i, s) in ev.samples.iter().enumerate() {
        t.row([
            i.to_string(),
            s.label.to_string(),
            s.decision.class.to_string(),
            s.decision.undecidable.to_string(),
        ]);
    }
    t.write(&a.run.out, "predictions.tsv")?;
    write_run_manifest(&a.run.out, "classify", kv)
}

fn metrics_table(ev: &Evaluation) -> Tsv {
    let mut t = Tsv::new(["metric", "class", "value"]);
    t.row(["accuracy".into(), "all".into(), ev.accuracy.to_string()]);
    t.row(["samples".into(), "all".into(), ev.samples.len().to_string()]);
    t.row([
        "undecidable".into(),
        "all".into(),
        ev.undecidable.to_string(),
    ]);
    for (i, c) in ev.classes.iter().enumerate() {
        t.row(["precision".into(), c.to_string(), opt(ev.precision(i))]);
        t.row(["recall".into(), c.to_string(), opt(ev.recall(i))]);
    }
    t
}

fn confusion_table(ev: &Evaluation) -> Tsv {
    let mut t = Tsv::new(
        std::iter::once("true".to_string()).chain(ev.classes.iter().map(|c| format!("pred{c}"))),
    );
    for (i, c) in ev.classes.iter().enumerate() {
        t.row(std::iter::once(c.to_string()).chain(ev.confusion[i].iter().map(|n| n.to_string())));
    }
    t
}

fn scores_table(ev: &Evaluation, prefix: &str) -> Tsv {
    let header = ["sample", "label", "predicted"]
        .into_iter()
        .map(String::from)
        .chain(ev.classes.iter().map(|c| format!("{prefix}{c}")));
    let mut t = Tsv::new(header);
    for (i, s) in ev.samples.iter().enumerate() {
        t.row(
            [
                i.to_string(),
                s.label.to_string(),
                s.decision.class.to_string(),
            ]
            .into_iter()
            .chain(s.decision.scores.iter().map(|x| x.to_string())),
        );
    }
    t
}

pub fn eval(a: &EvalArgs) -> Outcome<()> {
    let (model, d, kv) = eval_inputs(a)?;
    let ev = evaluate(model.classifier(), &d).tag("classifier")?;
    let dir = &a.run.out;
    metrics_table(&ev).write(dir, "metrics.tsv")?;
    confusion_table(&ev).write(dir, "confusion.tsv")?;
    match model {
        Loaded::Bundle(_) => scores_table(&ev, "ln_f").write(dir, "logfid.tsv")?,
        Loaded::Disc(_) => scores_table(&ev, "out").write(dir, "outputs.tsv")?,
    }
    write_run_manifest(dir, "eval", kv)
}

fn matrix_table(m: &ClassPairMatrix) -> Tsv {
    let mut t = Tsv::new(
        std::iter::once("class".to_string()).chain(m.classes.iter().map(|c| c.to_string())),
    );
    for (i, c) in m.classes.iter().enumerate() {
        t.row(std::iter::once(c.to_string()).chain(m.values[i].iter().map(|x| x.to_string())));
    }
    t
}

fn stats_rows(t: &mut Tsv, prefix: &str, s: &PairStats) {
    for (k, v) in [
        ("min_diag", s.min_diag),
        ("max_diag", s.max_diag),
        ("min_off", s.min_off),
        ("max_off", s.max_off),
        ("ratio", s.ratio),
        ("spread", s.spread),
    ] {
        t.row([format!("{prefix}{k}"), v.to_string()]);
    }
}

pub fn distances(a: &DistancesArgs) -> Outcome<()> {
    let spec = DataSpec::resolve(&a.data, a.seed)?;
    let d = spec.load()?;
    let dir = &a.run.out;
    let mut summary = Tsv::new(["key", "value"]);
    summary.row(["space", a.space.name()]);
    match a.space {
        Space::Raw => {
            let m = raw_distance_matrix(&d).tag("analysis")?;
            matrix_table(&m).write(dir, "matrix.tsv")?;
            summary.row(["kind".into(), m.kind.name().to_string()]);
            for (c, n) in m.classes.iter().zip(&m.counts) {
                summary.row([format!("count{c}"), n.to_string()]);
            }
            stats_rows(&mut summary, "", &PairStats::of(&m));
            summary.row(["max_asymmetry".into(), m.max_asymmetry().to_string()]);
        }
        Space::Hilbert => {
            let f = fidelity_matrix(&d).tag("analysis")?;
            let h = hilbert_distance_matrix(&f).tag("analysis")?;
            matrix_table(&f).write(dir, "matrix.tsv")?;
            matrix_table(&h.exact).write(dir, "distance.tsv")?;
            matrix_table(&h.approx).write(dir, "distance_approx.tsv")?;
            summary.row(["kind".into(), f.kind.name().to_string()]);
            for (c, n) in f.classes.iter().zip(&f.counts) {
                summary.row([format!("count{c}"), n.to_string()]);
            }
            let fs = PairStats::of(&f);
            stats_rows(&mut summary, "", &fs);
            summary.row(["clustered".into(), (fs.min_diag > fs.max_off).to_string()]);
            summary.row(["max_asymmetry".into(), f.max_asymmetry().to_string()]);
            for (c, n) in f.classes.iter().zip(&h.norms) {
                summary.row([format!("norm{c}"), n.to_string()]);
            }
            let min_d = h
                .exact
                .values
                .iter()
                .flatten()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            let max_res = h
                .residual
                .values
                .iter()
                .flatten()
                .fold(0.0f64, |a, &b| a.max(b.abs()));
            summary.row(["distance_min".into(), min_d.to_string()]);
            summary.row(["approx_max_abs_residual".into(), max_res.to_string()]);
        }
    }
    summary.write(dir, "summary.tsv")?;
    let mut kv = spec.key_values("data.");
    kv.push(("space".into(), a.space.name().into()));
    write_run_manifest(dir, "distances", kv)
}

/// One row per (class, bond): `H₂`, `ln χ` of that bond and the slack.
pub fn entropy_rows(bundle: &ClassifierBundle) -> gtnc::Result<Vec<(usize, usize, f64, f64)>> {
    let mut rows = Vec::new();
    for (&c, m) in bundle.classes().iter().zip(bundle.models()) {
        for (b, &chi) in m.bond_dims().iter().enumerate().take(m.len()).skip(1) {
            let h = m.renyi2_entropy(b)?;
            rows.push((c, b, h, (chi as f64).ln()));
        }
    }
    Ok(rows)
}

pub fn entropy(a: &EntropyArgs) -> Outcome<()> {
    let bundle = match Loaded::open(&a.models)? {
        Loaded::Bundle(b) => b,
        Loaded::Disc(_) => return fail("mps_model", "entropy needs per-class generative models"),
    };
    let mut t = Tsv::new(["class", "bond", "H2", "ln_chi", "slack"]);
    for (c, b, h, lnchi) in entropy_rows(&bundle).tag("mps_model")? {
        t.row([
            c.to_string(),
            b.to_string(),
            h.to_string(),
            lnchi.to_string(),
            (lnchi - h).to_string(),
        ]);
    }
    t.write(&a.run.out, "entropy.tsv")?;
    write_run_manifest(
        &a.run.out,
        "entropy",
        vec![("models".into(), a.models.display().to_string())],
    )
}

struct Row {
    model: &'static str,
    accuracy: f64,
    undecidable: usize,
    sweeps: usize,
    converged: bool,
    train_seconds: f64,
    eval_seconds: f64,
}

fn timed_eval(c: &dyn Classifier, test: &Dataset) -> Outcome<(Evaluation, f64)> {
    let t = Instant::now();
    let ev = evaluate(c, test).tag("classifier")?;
    Ok((ev, t.elapsed().as_secs_f64()))
}

pub fn compare(a: &CompareArgs) -> Outcome<()> {
    let cfg = a.train.config();
    cfg.validate().tag("generative_trainer")?;
    let disc_cfg = TrainConfig {
        max_sweeps: a.disc_max_sweeps.unwrap_or(cfg.max_sweeps),
        alpha: a.disc_alpha.unwrap_or(cfg.alpha),
        ..cfg.clone()
    };
    disc_cfg.validate().tag("discriminative_trainer")?;
    let spec = DataSpec::resolve(&a.data, a.data_seed)?;
    let train = spec.load()?;
    let mut test = load_idx(&a.test_images, &a.test_labels).tag("data_io")?;
    if spec.downsample != 1 {
        test = test.downsample(spec.downsample).tag("data_io")?;
    }
    if let Some(n) = a.test_limit {
        test = test.take(n);
    }

    let mut rows = Vec::new();

    let t = Instant::now();
    let bundle = train_all_classes(&train, &cfg).tag("generative_trainer")?;
    let train_seconds = t.elapsed().as_secs_f64();
    let (ev, eval_seconds) = timed_eval(&bundle, &test)?;
    let reports = &bundle.provenance.reports;
    rows.push(Row {
        model: "gtnc",
        accuracy: ev.accuracy,
        undecidable: ev.undecidable,
        sweeps: reports.iter().map(|r| r.sweeps_run).max().unwrap_or(0),
        converged: reports.iter().all(|r| r.converged),
        train_seconds,
        eval_seconds,
    });

    let t = Instant::now();
    let lazy = LazyBundle::from_dataset(&train).tag("classifier")?;
    let train_seconds = t.elapsed().as_secs_f64();
    let (ev, eval_seconds) = timed_eval(&lazy, &test)?;
    rows.push(Row {
        model: "lazy",
        accuracy: ev.accuracy,
        undecidable: ev.undecidable,
        sweeps: 0,
        converged: true,
        train_seconds,
        eval_seconds,
    });

    let t = Instant::now();
    let (disc, report) = train_discriminative(&train, &disc_cfg).tag("discriminative_trainer")?;
    let train_seconds = t.elapsed().as_secs_f64();
    let (ev, eval_seconds) = timed_eval(&disc, &test)?;
    rows.push(Row {
        model: "disc",
        accuracy: ev.accuracy,
        undecidable: ev.undecidable,
        sweeps: report.sweeps_run,
        converged: report.converged,
        train_seconds,
        eval_seconds,
    });

    let dir = &a.run.out;
    let mut t = Tsv::new([
        "model",
        "chi",
        "accuracy",
        "undecidable",
        "sweeps",
        "converged",
    ]);
    let mut timing = Tsv::new(["model", "train_seconds", "eval_seconds"]);
    for r in &rows {
        t.row([
            r.model.to_string(),
            cfg.chi.to_string(),
            r.accuracy.to_string(),
            r.undecidable.to_string(),
            r.sweeps.to_string(),
            r.converged.to_string(),
        ]);
        timing.row([
            r.model.to_string(),
            format!("{:.3}", r.train_seconds),
            format!("{:.3}", r.eval_seconds),
        ]);
    }
    t.write(dir, "compare.tsv")?;
    timing.write(dir, "compare.timing.tsv")?;

    let mut kv = spec.key_values("data.");
    kv.push(("test_images".into(), a.test_images.display().to_string()));
    kv.push(("test_labels".into(), a.test_labels.display().to_string()));
    kv.push(("test_limit".into(), opt(a.test_limit)));
    kv.extend(config_values(&cfg, ""));
    kv.extend(config_values(&disc_cfg, "disc."));
    write_run_manifest(dir, "compare", kv)
}
