//! Per-class generative MPS training.
//!
//! The model `Ψ` assigns every sample `v` the Born probability
//! `P(v) = (vᵀΨ)² / Z` with `Z = ‖Ψ‖²`; training minimizes the negative
//! log-likelihood
//!
//! ```text
//! Γ = -(1/J) Σ_j ln(P_j / Z) - ln J
//! ```
//!
//! by sweeping a single-site gradient step along the chain. The step has a
//! fixed size relative to the site tensor, `T ← T - α‖T‖ g/‖g‖`, and the
//! canonical center follows the sweep through QR decompositions, so `Z` is
//! always the squared norm of the site being updated. Sweeps alternate
//! direction. A sweep that raises `Γ` is undone and `α` is divided by `β`.

use std::time::{Duration, Instant};

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::ClassifierBundle;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::feature::ProductState;
use crate::mps::{absorb_site, absorb_site_from_right, dims3, Mps};
use crate::par::{chunked_sum, chunked_sum_scalar, chunks};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Maximum bond dimension.
    pub chi: usize,
    /// Relative step size.
    pub alpha: f64,
    /// Factor by which `alpha` shrinks after a rejected sweep (> 1).
    pub beta: f64,
    pub max_sweeps: usize,
    /// Stop once an accepted sweep lowers the cost by less than this fraction.
    pub convergence_tol: f64,
    /// Samples per sweep; 0 uses every sample.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            chi: 16,
            alpha: 0.05,
            beta: 2.0,
            max_sweeps: 50,
            convergence_tol: 1e-4,
            batch_size: 0,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chi == 0 {
            return Err(Error::arg("chi must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::arg(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::arg(format!("beta must exceed 1, got {}", self.beta)));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return Err(Error::arg("convergence_tol must be positive"));
        }
        Ok(())
    }

    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("chi", self.chi.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("max_sweeps", self.max_sweeps.to_string()),
            ("tol", self.convergence_tol.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Cost after each sweep attempt, including rejected ones.
    pub cost_history: Vec<f64>,
    /// Step size used by each sweep attempt.
    pub step_history: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Wall-clock seconds spent in each sweep attempt.
    pub sweep_seconds: Vec<f64>,
    pub sweeps_run: usize,
    pub wall_time: Duration,
    pub initial_cost: f64,
    /// Cost of the returned model.
    pub final_cost: f64,
    pub converged: bool,
}

impl TrainReport {
    /// Cost of the kept model after every sweep; non-increasing because
    /// rejected sweeps are rolled back.
    pub fn best_costs(&self) -> Vec<f64> {
        let mut best = self.initial_cost;
        self.cost_history
            .iter()
            .zip(&self.accepted)
            .map(|(&c, &ok)| {
                if ok {
                    best = c;
                }
                best
            })
            .collect()
    }

    pub(crate) fn record(&mut self, cost: f64, alpha: f64, accepted: bool, seconds: f64) {
        self.cost_history.push(cost);
        self.step_history.push(alpha);
        self.accepted.push(accepted);
        self.sweep_seconds.push(seconds);
        self.sweeps_run += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Right,
    Left,
}

/// State after one sweep, passed to training observers.
#[derive(Debug)]
pub struct SweepEvent<'a, M> {
    pub sweep: usize,
    pub direction: Direction,
    /// Cost of the sweep's trial model.
    pub cost: f64,
    pub alpha: f64,
    pub accepted: bool,
    /// The model kept after the accept / roll-back decision.
    pub model: &'a M,
}

/// `T ← T − α‖T‖ g/‖g‖`; returns `‖ΔT‖`. A zero gradient leaves `T` unchanged.
pub fn update_step(t: &mut Tensor, g: &Tensor, alpha: f64) -> Result<f64> {
    let gn = g.frobenius_norm();
    if gn == 0.0 {
        return Ok(0.0);
    }
    let step = alpha * t.frobenius_norm();
    t.axpy(-step / gn, g)?;
    Ok(step)
}

fn check_samples(samples: &[ProductState]) -> Result<(usize, usize)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::arg("training needs at least one sample"))?;
    let (len, d) = (first.len(), first.local_dim());
    for s in samples {
        s.check_geometry(len, d)?;
    }
    Ok((len, d))
}

/// Negative log-likelihood of `samples` under the Born distribution of `m`.
///
/// Returns `+∞` when some sample has exactly zero amplitude.
pub fn nll_cost(m: &Mps, samples: &[ProductState]) -> Result<f64> {
    let refs: Vec<&ProductState> = samples.iter().collect();
    nll_cost_refs(m, &refs)
}

fn nll_cost_refs(m: &Mps, samples: &[&ProductState]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::arg("cost needs at least one sample"));
    }
    for s in samples {
        s.check_geometry(m.len(), m.local_dim())?;
    }
    let z = m.norm_sqr();
    if z == 0.0 || !z.is_finite() {
        return Err(Error::DegenerateState);
    }
    let j = samples.len() as f64;
    let log_amp_sum = chunked_sum_scalar(samples.len(), |r| {
        let mut acc = 0.0;
        for k in r {
            let (sign, log) = m.log_overlap(samples[k])?;
            if sign == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            acc += log;
        }
        Ok(acc)
    })?;
    Ok(-2.0 * log_amp_sum / j + z.ln() - j.ln())
}

/// Normalized environment vectors of every sample, stored sample-major.
#[derive(Clone, Debug)]
struct Envs {
    dim: usize,
    data: Vec<f64>,
}

impl Envs {
    fn ones(count: usize) -> Self {
        Envs {
            dim: 1,
            data: vec![1.0; count],
        }
    }

    fn get(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    /// Applies `step` to every sample's environment and renormalizes.
    fn advance<F>(&self, count: usize, new_dim: usize, step: F) -> Result<Envs>
    where
        F: Fn(usize, &[f64]) -> Vec<f64> + Sync,
    {
        let mut data = vec![0.0; count * new_dim];
        let ranges = chunks(count);
        let slots: Vec<&mut [f64]> = data.chunks_mut(crate::par::CHUNK * new_dim).collect();
        ranges.into_par_iter().zip(slots).try_for_each(|(r, out)| {
            for (k, j) in r.enumerate() {
                let mut v = step(j, self.get(j));
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n == 0.0 {
                    return Err(Error::ZeroAmplitude { sample: j });
                }
                v.iter_mut().for_each(|x| *x /= n);
                out[k * new_dim..(k + 1) * new_dim].copy_from_slice(&v);
            }
            Ok(())
        })?;
        Ok(Envs { dim: new_dim, data })
    }
}

/// Environments to the left of every site: `lefts[l]` covers sites `0..l`.
fn left_envs(m: &Mps, samples: &[&ProductState], upto: usize) -> Result<Vec<Envs>> {
    let mut out = vec![Envs::ones(samples.len())];
    for l in 0..upto {
        let t = m.site(l);
        let next = out[l].advance(samples.len(), dims3(t).2, |j, env| {
            absorb_site(env, t, samples[j].site(l))
        })?;
        out.push(next);
    }
    Ok(out)
}

/// Environments to the right of every site from `from` on: `rights[l - from]`
/// covers sites `l+1..L`.
fn right_envs(m: &Mps, samples: &[&ProductState], from: usize) -> Result<Vec<Envs>> {
    let len = m.len();
    let mut rev = vec![Envs::ones(samples.len())];
    for l in (from + 1..len).rev() {
        let t = m.site(l);
        let next = rev
            .last()
            .unwrap()
            .advance(samples.len(), dims3(t).0, |j, env| {
                absorb_site_from_right(env, t, samples[j].site(l))
            })?;
        rev.push(next);
    }
    rev.reverse();
    Ok(rev)
}

/// `Σ_j E_j / ψ_j` for the center tensor `t` at `site`.
fn amplitude_ratio_sum(
    t: &Tensor,
    site: usize,
    lefts: &Envs,
    rights: &Envs,
    samples: &[&ProductState],
) -> Result<Vec<f64>> {
    let (_, d, chr) = dims3(t);
    let data = t.data();
    chunked_sum(samples.len(), t.len(), |range, acc| {
        let mut w = vec![0.0; d * chr];
        for j in range {
            let (l, r, v) = (lefts.get(j), rights.get(j), samples[j].site(site));
            w.iter_mut().for_each(|x| *x = 0.0);
            for (a, &la) in l.iter().enumerate() {
                if la == 0.0 {
                    continue;
                }
                for (x, y) in w.iter_mut().zip(&data[a * d * chr..(a + 1) * d * chr]) {
                    *x += la * y;
                }
            }
            let psi: f64 = (0..d)
                .map(|s| {
                    v[s] * w[s * chr..(s + 1) * chr]
                        .iter()
                        .zip(r)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .sum();
            if psi == 0.0 {
                return Err(Error::ZeroAmplitude { sample: j });
            }
            for (a, &la) in l.iter().enumerate() {
                let la = la / psi;
                for (s, &vs) in v.iter().enumerate() {
                    let c = la * vs;
                    let row = &mut acc[(a * d + s) * chr..(a * d + s + 1) * chr];
                    for (x, &rb) in row.iter_mut().zip(r) {
                        *x += c * rb;
                    }
                }
            }
        }
        Ok(())
    })
}

fn site_gradient(
    t: &Tensor,
    site: usize,
    lefts: &Envs,
    rights: &Envs,
    samples: &[&ProductState],
) -> Result<Tensor> {
    let sum = amplitude_ratio_sum(t, site, lefts, rights, samples)?;
    let z = t.norm_sqr();
    if z == 0.0 {
        return Err(Error::DegenerateState);
    }
    let j = samples.len() as f64;
    let data = t
        .data()
        .iter()
        .zip(sum)
        .map(|(&x, s)| 2.0 * x / z - 2.0 * s / j)
        .collect();
    Ok(Tensor::from_parts(t.shape().to_vec(), data))
}

/// `dΓ/dT` for the tensor at the canonical center of `m`.
///
/// `g = 2T/Z − (2/J) Σ_j E_j / (v_jᵀΨ)`, where `E_j` is the contraction of
/// everything except the center tensor with sample `j`.
pub fn nll_gradient(m: &Mps, samples: &[ProductState]) -> Result<Tensor> {
    check_samples(samples)?;
    samples[0].check_geometry(m.len(), m.local_dim())?;
    let l = m
        .center()
        .ok_or_else(|| Error::arg("gradient needs a canonical center"))?;
    let refs: Vec<&ProductState> = samples.iter().collect();
    let lefts = left_envs(m, &refs, l)?;
    let rights = right_envs(m, &refs, l)?;
    site_gradient(m.site(l), l, &lefts[l], &rights[0], &refs)
}

/// One pass over every site in `dir`, starting with the center at the
/// corresponding end of the chain.
fn sweep(m: &mut Mps, samples: &[&ProductState], alpha: f64, dir: Direction) -> Result<()> {
    let len = m.len();
    match dir {
        Direction::Right => {
            debug_assert_eq!(m.center(), Some(0));
            let rights = right_envs(m, samples, 0)?;
            let mut left = Envs::ones(samples.len());
            for l in 0..len {
                let g = site_gradient(m.site(l), l, &left, &rights[l], samples)?;
                update_step(m.site_mut(l), &g, alpha)?;
                if l + 1 < len {
                    m.move_center_right(l)?;
                    let t = m.site(l);
                    left = left.advance(samples.len(), dims3(t).2, |j, env| {
                        absorb_site(env, t, samples[j].site(l))
                    })?;
                }
            }
        }
        Direction::Left => {
            debug_assert_eq!(m.center(), Some(len - 1));
            let lefts = left_envs(m, samples, len - 1)?;
            let mut right = Envs::ones(samples.len());
            for l in (0..len).rev() {
                let g = site_gradient(m.site(l), l, &lefts[l], &right, samples)?;
                update_step(m.site_mut(l), &g, alpha)?;
                if l > 0 {
                    m.move_center_left(l)?;
                    let t = m.site(l);
                    right = right.advance(samples.len(), dims3(t).0, |j, env| {
                        absorb_site_from_right(env, t, samples[j].site(l))
                    })?;
                }
            }
        }
    }
    Ok(())
}

/// Sorted indices of the samples used by one sweep.
pub(crate) fn batch_indices(count: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if size == 0 || size >= count {
        (0..count).collect()
    } else {
        let mut idx = sample_indices(rng, count, size).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Trains a generative MPS on `samples` from a seeded random start.
pub fn train_generative(
    samples: &[ProductState],
    config: &TrainConfig,
) -> Result<(Mps, TrainReport)> {
    train_generative_observed(samples, config, |_| {})
}

/// [`train_generative`] with a callback after every sweep.
pub fn train_generative_observed(
    samples: &[ProductState],
    config: &TrainConfig,
    observer: impl FnMut(&SweepEvent<'_, Mps>),
) -> Result<(Mps, TrainReport)> {
    config.validate()?;
    let (len, d) = check_samples(samples)?;
    let init = Mps::random(len, d, config.chi, config.seed)?;
    train_generative_from(init, samples, config, observer)
}

/// Continues training from a given model.
pub fn train_generative_from(
    init: Mps,
    samples: &[ProductState],
    config: &TrainConfig,
    mut observer: impl FnMut(&SweepEvent<'_, Mps>),
) -> Result<(Mps, TrainReport)> {
    config.validate()?;
    let (len, d) = check_samples(samples)?;
    if init.len() != len || init.local_dim() != d {
        return Err(Error::dim(
            "initial model does not match the sample geometry",
        ));
    }
    let started = Instant::now();
    let mut m = init;
    // Sweeps start from an end of the chain.
    match m.center() {
        Some(c) if c == len - 1 => {}
        _ => m.canonicalize_in_place(0)?,
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c);
    let mut alpha = config.alpha;
    let mut report = TrainReport::default();

    let full: Vec<&ProductState> = samples.iter().collect();
    let mut cost = nll_cost_refs(&m, &full)?;
    report.initial_cost = cost;
    if !cost.is_finite() {
        report.final_cost = cost;
        return Err(Error::Diverged {
            reason: "initial cost is not finite".into(),
            report: Box::new(report),
        });
    }

    for t in 0..config.max_sweeps {
        let tick = Instant::now();
        let set: Vec<&ProductState> = batch_indices(samples.len(), config.batch_size, &mut rng)
            .into_iter()
            .map(|i| &samples[i])
            .collect();
        let before = if set.len() == samples.len() {
            cost
        } else {
            nll_cost_refs(&m, &set)?
        };
        let dir = if m.center() == Some(0) {
            Direction::Right
        } else {
            Direction::Left
        };
        let mut trial = m.clone();
        sweep(&mut trial, &set, alpha, dir)?;
        let after = nll_cost_refs(&trial, &set)?;
        if !after.is_finite() {
            report.record(after, alpha, false, tick.elapsed().as_secs_f64());
            report.final_cost = cost;
            report.wall_time = started.elapsed();
            return Err(Error::Diverged {
                reason: format!("cost became {after} in sweep {t}"),
                report: Box::new(report),
            });
        }
        let accepted = after <= before;
        let used_alpha = alpha;
        let mut converged = false;
        if accepted {
            converged = before - after <= config.convergence_tol * before.abs();
            m = trial;
            cost = if set.len() == samples.len() {
                after
            } else {
                nll_cost_refs(&m, &full)?
            };
        } else {
            alpha /= config.beta;
        }
        report.record(after, used_alpha, accepted, tick.elapsed().as_secs_f64());
        observer(&SweepEvent {
            sweep: t,
            direction: dir,
            cost: after,
            alpha: used_alpha,
            accepted,
            model: &m,
        });
        if converged {
            report.converged = true;
            break;
        }
    }
    report.final_cost = cost;
    report.wall_time = started.elapsed();
    Ok((m, report))
}

/// Seed used for the model of `class`.
pub fn class_seed(seed: u64, class: usize) -> u64 {
    seed.wrapping_add(class as u64)
}

/// Trains one generative model per class present in `dataset`. Classes are
/// independent and trained in parallel; each uses seed `seed + class`.
pub fn train_all_classes(dataset: &Dataset, config: &TrainConfig) -> Result<ClassifierBundle> {
    config.validate()?;
    let parts: Vec<(usize, Dataset)> = dataset
        .split_by_class()
        .into_iter()
        .enumerate()
        .filter(|(_, d)| !d.is_empty())
        .collect();
    if parts.is_empty() {
        return Err(Error::arg("dataset has no samples"));
    }
    let trained = parts
        .into_par_iter()
        .map(|(class, part)| {
            let wrap = |e: Error| Error::Class {
                class,
                source: Box::new(e),
            };
            let states = part.product_states().map_err(wrap)?;
            let cfg = TrainConfig {
                seed: class_seed(config.seed, class),
                ..config.clone()
            };
            let (m, report) = train_generative(&states, &cfg).map_err(wrap)?;
            Ok((class, m, report))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut classes = Vec::new();
    let mut models = Vec::new();
    let mut reports = Vec::new();
    for (c, m, r) in trained {
        classes.push(c);
        models.push(m);
        reports.push(r);
    }
    let mut bundle = ClassifierBundle::new(classes, models)?;
    bundle.provenance.config = Some(config.clone());
    bundle.provenance.reports = reports;
    bundle
        .provenance
        .dataset
        .extend(dataset.provenance.key_values());
    Ok(bundle)
}
