//! Fidelity-based classification with per-class generative models, the
//! untrained "lazy" baseline, and accuracy evaluation.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::discriminative::LabeledMps;
use crate::error::{Error, Result};
use crate::feature::{log_product_overlap, ProductState};
use crate::generative::{TrainConfig, TrainReport};
use crate::manifest::Manifest;
use crate::mps::{model_paths, Mps};

/// Floor added to fidelities before taking logs in reports, so that zero
/// fidelities stay finite in output tables.
pub const LOG_FLOOR: f64 = 1e-300;

/// Index of the largest entry; ties and NaNs resolve to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] || (xs[best].is_nan() && !x.is_nan()) {
            best = i;
        }
    }
    best
}

/// `ln(e^a + e^b)`.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(f + 1e-300)` from `ln f`.
pub fn reported_log(log_f: f64) -> f64 {
    log_add_exp(log_f, LOG_FLOOR.ln())
}

/// Outcome of classifying one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    /// Predicted class label.
    pub class: usize,
    /// Per-class scores in bundle order: `ln(f_c + 1e-300)` for fidelity
    /// classifiers, the raw output vector for the labeled model.
    pub scores: Vec<f64>,
    /// Every class scored zero; `class` is then the first class.
    pub undecidable: bool,
}

pub trait Classifier: Sync {
    /// Class labels in score order.
    fn classes(&self) -> Vec<usize>;

    fn decide(&self, v: &ProductState) -> Result<Decision>;
}

fn decide_from_logs(classes: &[usize], logs: Vec<f64>) -> Decision {
    let undecidable = logs.iter().all(|&x| x == f64::NEG_INFINITY);
    let best = argmax(&logs);
    Decision {
        class: classes[best],
        scores: logs.into_iter().map(reported_log).collect(),
        undecidable,
    }
}

/// Training settings and outcomes carried alongside a bundle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BundleProvenance {
    pub config: Option<TrainConfig>,
    /// One report per model, in bundle order (empty for loaded bundles).
    pub reports: Vec<TrainReport>,
    /// Description of the training data.
    pub dataset: Manifest,
}

/// One generative model per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierBundle {
    classes: Vec<usize>,
    models: Vec<Mps>,
    norms: Vec<f64>,
    pub provenance: BundleProvenance,
}

impl ClassifierBundle {
    pub fn new(classes: Vec<usize>, models: Vec<Mps>) -> Result<Self> {
        if classes.is_empty() || classes.len() != models.len() {
            return Err(Error::Consistency(format!(
                "{} class labels for {} models",
                classes.len(),
                models.len()
            )));
        }
        let mut sorted = classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != classes.len() {
            return Err(Error::Consistency("duplicate class labels".into()));
        }
        let (len, d) = (models[0].len(), models[0].local_dim());
        if models.iter().any(|m| m.len() != len || m.local_dim() != d) {
            return Err(Error::dim("models disagree on length or local dimension"));
        }
        let norms = models.iter().map(Mps::norm).collect::<Vec<_>>();
        if let Some(i) = norms.iter().position(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(Error::Class {
                class: classes[i],
                source: Box::new(Error::DegenerateState),
            });
        }
        Ok(ClassifierBundle {
            classes,
            models,
            norms,
            provenance: BundleProvenance::default(),
        })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn models(&self) -> &[Mps] {
        &self.models
    }

    pub fn model(&self, class: usize) -> Option<&Mps> {
        self.classes
            .iter()
            .position(|&c| c == class)
            .map(|i| &self.models[i])
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Sites per model.
    pub fn sites(&self) -> usize {
        self.models[0].len()
    }

    /// `ln f_c = ln|vᵀΨ_c| − ln‖Ψ_c‖`; `-∞` for zero overlap.
    pub fn log_fidelity(&self, v: &ProductState) -> Result<Vec<f64>> {
        self.models
            .iter()
            .zip(&self.norms)
            .map(|(m, n)| {
                let (sign, log) = m.log_overlap(v)?;
                Ok(if sign == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    log - n.ln()
                })
            })
            .collect()
    }

    /// `f_c = |vᵀΨ_c| / ‖Ψ_c‖`, each in `[0, 1]` for unit-norm samples.
    pub fn fidelity(&self, v: &ProductState) -> Result<Vec<f64>> {
        Ok(self.log_fidelity(v)?.into_iter().map(f64::exp).collect())
    }

    /// `|vᵀΨ_c|` without normalization.
    pub fn raw_fidelity(&self, v: &ProductState) -> Result<Vec<f64>> {
        self.models
            .iter()
            .map(|m| Ok(m.overlap(v)?.abs()))
            .collect()
    }

    pub fn classify(&self, v: &ProductState) -> Result<Decision> {
        Ok(decide_from_logs(&self.classes, self.log_fidelity(v)?))
    }

    /// Writes `model_class<k>.mps` and `model_class<k>.manifest` per class.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (i, (&c, m)) in self.classes.iter().zip(&self.models).enumerate() {
            let (mps_path, manifest_path) = model_paths(dir, c);
            m.save(&mps_path)?;
            let mut man = Manifest::new();
            man.set("class", c)
                .set("sites", m.len())
                .set("local_dim", m.local_dim())
                .set("max_bond", m.max_bond_dim())
                .set("parameters", m.num_parameters())
                .set("norm", format!("{:e}", self.norms[i]));
            if let Some(cfg) = &self.provenance.config {
                man.extend(cfg.key_values());
            }
            if let Some(r) = self.provenance.reports.get(i) {
                man.set("sweeps", r.sweeps_run)
                    .set("converged", r.converged)
                    .set("initial_cost", format!("{:e}", r.initial_cost))
                    .set("final_cost", format!("{:e}", r.final_cost));
            }
            man.extend(
                self.provenance
                    .dataset
                    .entries()
                    .iter()
                    .map(|(k, v)| (format!("data.{k}"), v.clone())),
            );
            man.write(&manifest_path)?;
        }
        Ok(())
    }

    /// Loads every `model_class<k>.mps` in `dir`, ordered by class.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut classes = Vec::new();
        for entry in fs::read_dir(dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(k) = name
                .strip_prefix("model_class")
                .and_then(|r| r.strip_suffix(".mps"))
                .and_then(|k| k.parse::<usize>().ok())
            {
                classes.push(k);
            }
        }
        if classes.is_empty() {
            return Err(Error::arg(format!("no model files in {}", dir.display())));
        }
        classes.sort_unstable();
        let models = classes
            .iter()
            .map(|&c| {
                Mps::load(model_paths(dir, c).0).map_err(|e| Error::Class {
                    class: c,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut bundle = ClassifierBundle::new(classes, models)?;
        let (_, first_manifest) = model_paths(dir, bundle.classes[0]);
        if let Ok(man) = Manifest::read(first_manifest) {
            let mut data = Manifest::new();
            for (k, v) in man.entries() {
                if let Some(k) = k.strip_prefix("data.") {
                    data.set(k, v);
                }
            }
            bundle.provenance.dataset = data;
        }
        Ok(bundle)
    }
}

impl Classifier for ClassifierBundle {
    fn classes(&self) -> Vec<usize> {
        self.classes.clone()
    }

    fn decide(&self, v: &ProductState) -> Result<Decision> {
        self.classify(v)
    }
}

/// The untrained reference state of each class, `Ψ̃_c = Σ_{u∈c} u / √N_c`,
/// kept as its list of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct LazyBundle {
    classes: Vec<usize>,
    samples: Vec<Vec<ProductState>>,
}

/// `(sign, ln|Σ_u vᵀu|)` accumulated in the log domain.
pub(crate) fn log_abs_sum_overlaps<'a>(
    v: &ProductState,
    us: impl IntoIterator<Item = &'a ProductState>,
) -> Result<(f64, f64)> {
    let mut pos = f64::NEG_INFINITY;
    let mut neg = f64::NEG_INFINITY;
    for u in us {
        let (sign, log) = log_product_overlap(v, u)?;
        if sign > 0.0 {
            pos = log_add_exp(pos, log);
        } else if sign < 0.0 {
            neg = log_add_exp(neg, log);
        }
    }
    Ok(signed_log_difference(pos, neg))
}

/// `(sign, ln|e^p − e^n|)`.
pub(crate) fn signed_log_difference(p: f64, n: f64) -> (f64, f64) {
    if p == n {
        return (0.0, f64::NEG_INFINITY);
    }
    let (hi, lo, sign) = if p > n { (p, n, 1.0) } else { (n, p, -1.0) };
    (sign, hi + (-(lo - hi).exp()).ln_1p())
}

impl LazyBundle {
    pub fn new(classes: Vec<usize>, samples: Vec<Vec<ProductState>>) -> Result<Self> {
        if classes.is_empty() || classes.len() != samples.len() {
            return Err(Error::Consistency(
                "class labels and sample groups differ in count".into(),
            ));
        }
        if let Some(i) = samples.iter().position(Vec::is_empty) {
            return Err(Error::arg(format!("class {} has no samples", classes[i])));
        }
        let first = &samples[0][0];
        for v in samples.iter().flatten() {
            v.check_geometry(first.len(), first.local_dim())?;
        }
        Ok(LazyBundle { classes, samples })
    }

    /// Groups the dataset by class; empty classes are left out.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let states = dataset.product_states()?;
        let mut groups: Vec<Vec<ProductState>> = vec![Vec::new(); dataset.num_classes()];
        for (v, &c) in states.into_iter().zip(dataset.labels()) {
            groups[c].push(v);
        }
        let (classes, samples): (Vec<usize>, Vec<_>) = groups
            .into_iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty())
            .unzip();
        LazyBundle::new(classes, samples)
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn counts(&self) -> Vec<usize> {
        self.samples.iter().map(Vec::len).collect()
    }

    pub fn samples(&self, i: usize) -> &[ProductState] {
        &self.samples[i]
    }

    /// `ln f̃_c` with `f̃_c = |Σ_{u∈c} vᵀu| / √N_c`.
    pub fn log_fidelity(&self, v: &ProductState) -> Result<Vec<f64>> {
        self.samples
            .iter()
            .map(|us| {
                let (_, log) = log_abs_sum_overlaps(v, us)?;
                Ok(log - 0.5 * (us.len() as f64).ln())
            })
            .collect()
    }

    pub fn fidelity(&self, v: &ProductState) -> Result<Vec<f64>> {
        Ok(self.log_fidelity(v)?.into_iter().map(f64::exp).collect())
    }

    pub fn classify(&self, v: &ProductState) -> Result<Decision> {
        Ok(decide_from_logs(&self.classes, self.log_fidelity(v)?))
    }
}

impl Classifier for LazyBundle {
    fn classes(&self) -> Vec<usize> {
        self.classes.clone()
    }

    fn decide(&self, v: &ProductState) -> Result<Decision> {
        self.classify(v)
    }
}

impl Classifier for LabeledMps {
    fn classes(&self) -> Vec<usize> {
        (0..self.num_classes()).collect()
    }

    fn decide(&self, v: &ProductState) -> Result<Decision> {
        let scores = self.predict_vector(v)?;
        Ok(Decision {
            class: argmax(&scores),
            undecidable: scores.iter().all(|&x| x == 0.0),
            scores,
        })
    }
}

/// Per-sample outcome inside an [`Evaluation`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleResult {
    pub label: usize,
    pub decision: Decision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Classifier class labels, in score order.
    pub classes: Vec<usize>,
    pub accuracy: f64,
    /// `confusion[true][predicted]`, indexed by class label, square with side
    /// `max(dataset classes, largest classifier label + 1)`.
    pub confusion: Vec<Vec<usize>>,
    pub samples: Vec<SampleResult>,
    pub undecidable: usize,
}

impl Evaluation {
    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    /// Fraction of predictions of class `c` that are correct; `None` when
    /// nothing was predicted as `c`.
    pub fn precision(&self, c: usize) -> Option<f64> {
        let predicted: usize = self.confusion.iter().map(|row| row[c]).sum();
        (predicted > 0).then(|| self.confusion[c][c] as f64 / predicted as f64)
    }

    /// Fraction of samples of class `c` classified correctly; `None` when the
    /// test set holds no such sample.
    pub fn recall(&self, c: usize) -> Option<f64> {
        let actual: usize = self.confusion[c].iter().sum();
        (actual > 0).then(|| self.confusion[c][c] as f64 / actual as f64)
    }
}

/// Classifies every sample of `test`; results are in dataset order.
pub fn evaluate(classifier: &dyn Classifier, test: &Dataset) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::arg("test set is empty"));
    }
    let states = test.product_states()?;
    let decisions = states
        .par_iter()
        .map(|v| classifier.decide(v))
        .collect::<Result<Vec<_>>>()?;
    let classes = classifier.classes();
    let k = classes
        .iter()
        .map(|&c| c + 1)
        .max()
        .unwrap_or(0)
        .max(test.num_classes());
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0;
    let mut undecidable = 0;
    let samples: Vec<SampleResult> = decisions
        .into_iter()
        .zip(test.labels())
        .map(|(decision, &label)| {
            confusion[label][decision.class] += 1;
            correct += usize::from(decision.class == label);
            undecidable += usize::from(decision.undecidable);
            SampleResult { label, decision }
        })
        .collect();
    Ok(Evaluation {
        classes,
        accuracy: correct as f64 / test.len() as f64,
        confusion,
        samples,
        undecidable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::map_image;

    #[test]
    fn argmax_ties_and_nan() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        assert_eq!(argmax(&[f64::NAN, 1.0]), 1);
        assert_eq!(argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), 0);
    }

    #[test]
    fn signed_difference() {
        let (s, l) = signed_log_difference(3f64.ln(), 1f64.ln());
        assert_eq!(s, 1.0);
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let (s, l) = signed_log_difference(1f64.ln(), 3f64.ln());
        assert_eq!(s, -1.0);
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(signed_log_difference(0.5, 0.5).0, 0.0);
    }

    #[test]
    fn reported_log_is_floored() {
        assert!((reported_log(f64::NEG_INFINITY) - LOG_FLOOR.ln()).abs() < 1e-12);
        assert!((reported_log(-1.0) + 1.0).abs() < 1e-15);
    }

    fn bundle() -> (ClassifierBundle, Vec<ProductState>) {
        let a = map_image(&[0.0, 0.1, 0.2, 0.1]).unwrap();
        let b = map_image(&[0.9, 1.0, 0.8, 1.0]).unwrap();
        let models = vec![Mps::from_product_state(&a), Mps::from_product_state(&b)];
        (
            ClassifierBundle::new(vec![0, 1], models).unwrap(),
            vec![a, b],
        )
    }

    #[test]
    fn own_sample_has_unit_fidelity() {
        let (bundle, s) = bundle();
        let f = bundle.fidelity(&s[0]).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert!(f[1] < 1.0);
        assert_eq!(bundle.classify(&s[1]).unwrap().class, 1);
    }

    #[test]
    fn scaling_a_model_keeps_decision() {
        let (bundle, s) = bundle();
        let mut m1 = bundle.models()[1].clone();
        m1.normalize_in_place().unwrap();
        let scaled = Mps::from_sites(
            m1.sites()
                .iter()
                .enumerate()
                .map(|(l, t)| if l == 0 { t.scaled(1e6) } else { t.clone() })
                .collect(),
        )
        .unwrap();
        let b2 =
            ClassifierBundle::new(vec![0, 1], vec![bundle.models()[0].clone(), scaled]).unwrap();
        for v in &s {
            assert_eq!(
                bundle.classify(v).unwrap().class,
                b2.classify(v).unwrap().class
            );
        }
    }

    #[test]
    fn orthogonal_everything_is_undecidable() {
        let a = ProductState::from_local_vectors(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = ProductState::from_local_vectors(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let bundle = ClassifierBundle::new(
            vec![3, 5],
            vec![Mps::from_product_state(&a), Mps::from_product_state(&a)],
        )
        .unwrap();
        let d = bundle.classify(&b).unwrap();
        assert!(d.undecidable);
        assert_eq!(d.class, 3);
        assert!(d.scores.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn lazy_single_sample() {
        let a = map_image(&[0.3, 0.6]).unwrap();
        let b = map_image(&[0.9, 0.1]).unwrap();
        let lz = LazyBundle::new(vec![0, 1], vec![vec![a.clone()], vec![b]]).unwrap();
        let f = lz.fidelity(&a).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert_eq!(lz.classify(&a).unwrap().class, 0);
        assert!(LazyBundle::new(vec![0], vec![vec![]]).is_err());
    }

    #[test]
    fn evaluate_counts() {
        let (bundle, _) = bundle();
        let ds = Dataset::new(
            vec![
                vec![0.0, 0.1, 0.2, 0.1],
                vec![0.9, 1.0, 0.8, 1.0],
                vec![1.0, 1.0, 1.0, 1.0],
            ],
            vec![0, 1, 0],
            2,
            2,
            None,
        )
        .unwrap();
        let ev = evaluate(&bundle, &ds).unwrap();
        assert!((ev.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ev.confusion, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(ev.precision(1), Some(0.5));
        assert_eq!(ev.recall(0), Some(0.5));
    }

    #[test]
    fn save_load_roundtrip() {
        let (bundle, s) = bundle();
        let dir = tempfile::tempdir().unwrap();
        bundle.save(dir.path()).unwrap();
        let back = ClassifierBundle::load(dir.path()).unwrap();
        assert_eq!(back.classes(), bundle.classes());
        assert_eq!(back.models(), bundle.models());
        assert_eq!(
            back.classify(&s[0]).unwrap(),
            bundle.classify(&s[0]).unwrap()
        );
    }
}
