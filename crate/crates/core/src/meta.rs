//! Two-loop training of a [`LiftModel`].
//!
//! The inner loop starts every signal from zero latents and takes a few
//! plain gradient steps on the reconstruction loss, changing only the
//! latents. The outer loop updates shared weights (bank, generator and,
//! with Meta-SGD, the inner step sizes) with Adam, differentiating through
//! the unrolled inner steps. A smoothness term pulls each signal's
//! `Z_alpha` toward its nearest neighbours in the batch.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use ndgrad::{Adam, Tape, Tensor, Var};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{LiftError, Result};
use crate::hlg::LatentHierarchy;
use crate::model::LiftModel;
use crate::nets::coords_tensor;
use crate::partition::grid_partition;
use crate::rng::{rng_for_step, stream};
use crate::signals::SignalGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub meta_sgd: bool,
    /// Drop second-order terms of the outer gradient.
    pub first_order: bool,
    pub neighbors: usize,
    pub smooth_weight: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            inner_steps: 3,
            inner_lr: 1.0,
            outer_lr: 5e-5,
            meta_sgd: true,
            first_order: false,
            neighbors: 8,
            smooth_weight: 1e-4,
            batch_size: 16,
            iterations: 2000,
            seed: 0,
            threads: 1,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LiftError::Config(m.to_string()));
        if self.neighbors == 0 {
            return bad("neighbors must be >= 1");
        }
        if !(self.smooth_weight >= 0.0) {
            return bad("smooth_weight must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.inner_lr.is_finite() && self.outer_lr > 0.0) {
            return bad("learning rates must be finite and outer_lr > 0");
        }
        Ok(())
    }
}

/// A signal pre-split into the model's regions.
#[derive(Clone, Debug)]
pub struct Task {
    pub id: String,
    pub spatial: Vec<usize>,
    /// `[R, n, D]` region-local coordinates.
    pub coords: Tensor,
    /// `[R, n, C]` target values.
    pub target: Tensor,
}

impl Task {
    pub fn new(model: &LiftModel, id: impl Into<String>, signal: &SignalGrid) -> Result<Self> {
        let c = model.bank.shape.out_dim;
        if signal.channels() != c || signal.dims() != model.spec().dims() {
            return Err(LiftError::Config(format!(
                "signal {:?} does not fit a {}-D model with {} channels",
                signal.values.shape(),
                model.spec().dims(),
                c
            )));
        }
        let part = grid_partition(signal.spatial(), &model.spec())?;
        let target = Tensor::new(
            &[part.region_count(), part.points_per_region, c],
            part.scatter(signal.values.data(), c)?,
        )?;
        Ok(Self {
            id: id.into(),
            spatial: signal.spatial().to_vec(),
            coords: coords_tensor(&part)?,
            target,
        })
    }
}

pub(crate) fn mse(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let sq = tape.square(d)?;
    Ok(tape.mean(sq))
}

/// Runs the inner loop on `tape` and returns the adapted latents.
fn adapt(
    model: &LiftModel,
    tape: &mut Tape,
    vars: &crate::model::ModelVars,
    coords: Var,
    target: Var,
    steps: usize,
    create_graph: bool,
) -> Result<[Var; 3]> {
    let shape = *model.latent_shape();
    let zeros = LatentHierarchy::zeros(&shape);
    let mut lat: [Var; 3] = zeros.tensors().map(|t| tape.leaf(t.clone()));
    let adapted = model.adapted_latents();
    for _ in 0..steps {
        let (_, pred) = model.decode(tape, vars, lat, coords)?;
        let loss = mse(tape, pred, target)?;
        let wrt: Vec<Var> = adapted.iter().map(|&i| lat[i]).collect();
        let grads = tape.gradients(loss, &wrt, create_graph)?;
        for (&i, g) in adapted.iter().zip(grads) {
            let rate = tape.abs(vars.rates[i]);
            let step = tape.mul(g, rate)?;
            lat[i] = tape.sub(lat[i], step)?;
        }
    }
    Ok(lat)
}

/// Fits latents for one signal with frozen weights: zero initialization and
/// `cfg.inner_steps` gradient steps.
pub fn inner_fit(model: &LiftModel, signal: &SignalGrid, cfg: &MetaConfig) -> Result<LatentHierarchy> {
    let task = Task::new(model, "", signal)?;
    Ok(fit_task(model, &task, cfg.inner_steps)?.0)
}

/// Fitted latents, `Z_alpha` and final reconstruction MSE for one task.
fn fit_task(model: &LiftModel, task: &Task, steps: usize) -> Result<(LatentHierarchy, Tensor, f64)> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, false, false);
    let coords = tape.constant(task.coords.clone());
    let target = tape.constant(task.target.clone());
    let lat = adapt(model, &mut tape, &vars, coords, target, steps, false)?;
    let latents = LatentHierarchy::from_tensors(lat.map(|v| tape.value(v).clone()));
    // Decode from the stored values so the recorded loss is exactly what a
    // fresh decode of the record gives.
    let pred = model.predict_regions(&latents, &grid_partition(&task.spatial, &model.spec())?)?;
    let loss = rec_loss(&pred, &task.target)?;
    let alpha = model.hlg.compose_values(&latents)?;
    Ok((latents, alpha, loss))
}

/// Mean squared error over all points and channels.
pub fn rec_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(LiftError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / pred.len() as f64)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest other latents of each latent; ties go to the lower index.
pub fn nearest_neighbors(latents: &[Tensor], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = latents.len();
    if n <= k {
        return Err(LiftError::Config(format!(
            "smoothness needs more than {k} latents in a batch, got {n}"
        )));
    }
    Ok((0..n)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(latents[i].data(), latents[j].data()), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect())
}

/// Batch mean over latents of the mean squared distance to their `k`
/// nearest neighbours.
pub fn smoothness_loss(latents: &[Tensor], k: usize) -> Result<f64> {
    Ok(smoothness_with_grad(latents, k)?.0)
}

/// The smoothness loss and its gradient with respect to each latent, with
/// neighbour sets held fixed.
pub fn smoothness_with_grad(latents: &[Tensor], k: usize) -> Result<(f64, Vec<Tensor>)> {
    let nn = nearest_neighbors(latents, k)?;
    let b = latents.len() as f64;
    let scale = 1.0 / (b * k as f64);
    let mut loss = 0.0;
    let mut grads: Vec<Tensor> = latents.iter().map(|t| Tensor::zeros(t.shape())).collect();
    for (i, ns) in nn.iter().enumerate() {
        for &j in ns {
            loss += scale * sq_dist(latents[i].data(), latents[j].data());
            let diff = latents[i].zip_map(&latents[j], |x, y| 2.0 * scale * (x - y))?;
            grads[i].axpy(1.0, &diff)?;
            grads[j].axpy(-1.0, &diff)?;
        }
    }
    Ok((loss, grads))
}

/// Maps `f` over `items` on up to `threads` scoped threads, preserving order.
fn par_map<T, R, F>(items: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut groups: Vec<Vec<T>> = Vec::new();
    let mut it = items.into_iter().peekable();
    while it.peek().is_some() {
        groups.push(it.by_ref().take(chunk).collect());
    }
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = groups
            .into_iter()
            .map(|g| s.spawn(move || g.into_iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iter: u64,
    pub rec: f64,
    pub smooth: f64,
    pub total: f64,
    pub wall_ms: f64,
}

pub const LOG_HEADER: &str = "iter,L_Rec,L_Smooth,L_Total,wall_ms";

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:.10e},{:.10e},{:.10e},{:.3}",
            self.iter, self.rec, self.smooth, self.total, self.wall_ms
        )
    }
}

/// Outer-loop state: model, optimizer and iteration counter. Everything
/// needed to resume bit-exactly.
#[derive(Clone, Debug)]
pub struct MetaTrainer {
    pub model: LiftModel,
    pub adam: Adam,
    pub iteration: u64,
    pub cfg: MetaConfig,
}

struct Unrolled {
    tape: Tape,
    alpha: Var,
    rec: Var,
    trainable: Vec<Var>,
}

impl MetaTrainer {
    pub fn new(model: LiftModel, cfg: MetaConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            adam: Adam::new(cfg.outer_lr),
            model,
            iteration: 0,
            cfg,
        })
    }

    fn unroll(&self, task: &Task) -> Result<Unrolled> {
        let cfg = &self.cfg;
        let mut tape = Tape::new();
        let vars = self.model.bind(&mut tape, true, cfg.meta_sgd);
        let coords = tape.constant(task.coords.clone());
        let target = tape.constant(task.target.clone());
        let lat = adapt(
            &self.model,
            &mut tape,
            &vars,
            coords,
            target,
            cfg.inner_steps,
            !cfg.first_order,
        )?;
        let (alpha, pred) = self.model.decode(&mut tape, &vars, lat, coords)?;
        let rec = mse(&mut tape, pred, target)?;
        Ok(Unrolled {
            tape,
            alpha,
            rec,
            trainable: vars.trainable,
        })
    }

    /// The batch the next [`MetaTrainer::step`] will use.
    pub fn batch<'a>(&self, tasks: &'a [Task]) -> Vec<&'a Task> {
        let mut rng = rng_for_step(self.cfg.seed, stream::BATCH, self.iteration);
        let b = self.cfg.batch_size.min(tasks.len());
        sample(&mut rng, tasks.len(), b).into_iter().map(|i| &tasks[i]).collect()
    }

    /// Outer objective on `batch` and its gradient with respect to
    /// [`LiftModel::trainable_params_mut`], differentiated through the
    /// unrolled inner loop. Returns `(L_Rec, L_Smooth, grads)`.
    pub fn outer_gradients(&self, batch: &[&Task]) -> Result<(f64, f64, Vec<Tensor>)> {
        if batch.is_empty() {
            return Err(LiftError::Config("meta-training needs at least one signal".into()));
        }
        let cfg = self.cfg.clone();
        let b = batch.len();
        let batch = batch.to_vec();

        let unrolled: Vec<Result<Unrolled>> = par_map(batch, cfg.threads, |t| self.unroll(t));
        let mut unrolled = unrolled.into_iter().collect::<Result<Vec<_>>>()?;

        let recs: Vec<f64> = unrolled
            .iter()
            .map(|u| u.tape.value(u.rec).item())
            .collect::<std::result::Result<_, _>>()?;
        let rec = recs.iter().sum::<f64>() / b as f64;
        let alphas: Vec<Tensor> = unrolled.iter().map(|u| u.tape.value(u.alpha).clone()).collect();
        let (smooth, smooth_grads) = if cfg.smooth_weight > 0.0 {
            smoothness_with_grad(&alphas, cfg.neighbors)?
        } else {
            (0.0, alphas.iter().map(|a| Tensor::zeros(a.shape())).collect())
        };

        let work: Vec<(Unrolled, Tensor)> = unrolled.drain(..).zip(smooth_grads).collect();
        let per_task: Vec<Result<Vec<Tensor>>> = par_map(work, cfg.threads, |(mut u, g)| {
            let tape = &mut u.tape;
            let rec = tape.scale(u.rec, 1.0 / b as f64);
            let objective = if cfg.smooth_weight > 0.0 {
                let g = tape.constant(g);
                let inner = tape.mul(g, u.alpha)?;
                let s = tape.sum(inner);
                let s = tape.scale(s, cfg.smooth_weight);
                tape.add(rec, s)?
            } else {
                rec
            };
            let grads = tape.gradients(objective, &u.trainable, false)?;
            Ok(grads.iter().map(|&g| tape.value(g).clone()).collect())
        });
        let mut sum: Option<Vec<Tensor>> = None;
        for g in per_task {
            let g = g?;
            match &mut sum {
                None => sum = Some(g),
                Some(acc) => {
                    for (a, x) in acc.iter_mut().zip(&g) {
                        a.axpy(1.0, x)?;
                    }
                }
            }
        }
        Ok((rec, smooth, sum.expect("batch is nonempty")))
    }

    /// One outer iteration on a batch drawn from `tasks`.
    pub fn step(&mut self, tasks: &[Task]) -> Result<LogRow> {
        if tasks.is_empty() {
            return Err(LiftError::Config("meta-training needs at least one signal".into()));
        }
        let start = Instant::now();
        let batch = self.batch(tasks);
        let (rec, smooth, grads) = self.outer_gradients(&batch)?;
        let total = rec + self.cfg.smooth_weight * smooth;
        if !total.is_finite() {
            return Err(LiftError::Numeric(format!(
                "non-finite outer loss at iteration {} (L_Rec {rec}, L_Smooth {smooth})",
                self.iteration
            )));
        }
        if grads.iter().any(|g| !g.all_finite()) {
            return Err(LiftError::Numeric(format!(
                "non-finite outer gradient at iteration {}",
                self.iteration
            )));
        }
        let mut params = self.model.trainable_params_mut(self.cfg.meta_sgd);
        self.adam.step(&mut params, &grads)?;
        self.iteration += 1;
        Ok(LogRow {
            iter: self.iteration,
            rec,
            smooth,
            total,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Runs until `cfg.iterations`, calling `on_step` after every iteration.
    pub fn train(
        &mut self,
        tasks: &[Task],
        mut on_step: impl FnMut(&Self, &LogRow) -> Result<()>,
    ) -> Result<Vec<LogRow>> {
        let mut log = Vec::new();
        while self.iteration < self.cfg.iterations {
            let row = self.step(tasks)?;
            on_step(self, &row)?;
            log.push(row);
        }
        Ok(log)
    }
}

/// Meta-trains `model` on `dataset` for `cfg.iterations` outer steps.
pub fn outer_train(
    model: LiftModel,
    dataset: &[SignalGrid],
    cfg: &MetaConfig,
) -> Result<(LiftModel, Vec<LogRow>)> {
    let tasks = dataset
        .iter()
        .enumerate()
        .map(|(i, s)| Task::new(&model, i.to_string(), s))
        .collect::<Result<Vec<_>>>()?;
    let mut trainer = MetaTrainer::new(model, cfg.clone())?;
    let log = trainer.train(&tasks, |_, _| Ok(()))?;
    Ok((trainer.model, log))
}

/// Fitted latents for one signal.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationRecord {
    pub id: String,
    pub latents: LatentHierarchy,
    pub alpha: Tensor,
    pub mse: f64,
}

pub fn fit_record(
    model: &LiftModel,
    id: &str,
    signal: &SignalGrid,
    cfg: &MetaConfig,
) -> Result<ModulationRecord> {
    let task = Task::new(model, id, signal)?;
    let (latents, alpha, mse) = fit_task(model, &task, cfg.inner_steps)?;
    Ok(ModulationRecord {
        id: id.to_string(),
        latents,
        alpha,
        mse,
    })
}

/// One record per signal, fitted with frozen weights.
pub fn build_modulation_dataset(
    model: &LiftModel,
    signals: &[(String, SignalGrid)],
    cfg: &MetaConfig,
) -> Result<Vec<ModulationRecord>> {
    let fits = par_map(signals.iter().collect(), cfg.threads, |(id, s)| {
        fit_record(model, id, s, cfg)
    });
    fits.into_iter().collect()
}

/// Decodes `(1 - t) a + t b`.
pub fn interpolate_latents(
    model: &LiftModel,
    a: &ModulationRecord,
    b: &ModulationRecord,
    t: f64,
    spatial: &[usize],
) -> Result<SignalGrid> {
    if !(0.0..=1.0).contains(&t) {
        return Err(LiftError::Config(format!("interpolation weight {t} outside [0, 1]")));
    }
    let shape = model.latent_shape();
    a.latents.check(shape)?;
    b.latents.check(shape)?;
    let mix = LatentHierarchy::lerp(&a.latents, &b.latents, t)?;
    SignalGrid::new(model.reconstruct(&mix, spatial)?, format!("interp {} {} t={t}", a.id, b.id))
}

const LFTM_MAGIC: &[u8; 4] = b"LFTM";
const LFTM_VERSION: u32 = 1;

/// Writes records as: magic `LFTM`, u32 version, u32 fingerprint length and
/// bytes, u64 record count, then per record u32 id length and bytes, four
/// `LFT1` tensors (global, mid, local, alpha) and an f64 MSE.
pub fn write_modulations<W: Write>(w: &mut W, fingerprint: &str, records: &[ModulationRecord]) -> Result<()> {
    w.write_all(LFTM_MAGIC)?;
    w.write_all(&LFTM_VERSION.to_le_bytes())?;
    w.write_all(&(fingerprint.len() as u32).to_le_bytes())?;
    w.write_all(fingerprint.as_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        w.write_all(&(r.id.len() as u32).to_le_bytes())?;
        w.write_all(r.id.as_bytes())?;
        for t in r.latents.tensors() {
            t.write_to(w)?;
        }
        r.alpha.write_to(w)?;
        w.write_all(&r.mse.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_modulations(path: &Path, fingerprint: &str, records: &[ModulationRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_modulations(&mut w, fingerprint, records)?;
    w.flush()?;
    Ok(())
}

pub fn read_modulations<R: Read>(r: &mut R, name: &str) -> Result<(String, Vec<ModulationRecord>)> {
    let mut off = 0u64;
    let take = |r: &mut R, n: usize, off: &mut u64| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)
            .map_err(|_| LiftError::parse(name, *off, "unexpected end of file"))?;
        *off += n as u64;
        Ok(buf)
    };
    if take(r, 4, &mut off)? != LFTM_MAGIC {
        return Err(LiftError::parse(name, 0, "bad magic, expected LFTM"));
    }
    let version = u32::from_le_bytes(take(r, 4, &mut off)?.try_into().expect("4 bytes"));
    if version != LFTM_VERSION {
        return Err(LiftError::parse(name, 4, format!("unsupported version {version}")));
    }
    let fl = u32::from_le_bytes(take(r, 4, &mut off)?.try_into().expect("4 bytes")) as usize;
    let fp = String::from_utf8(take(r, fl, &mut off)?)
        .map_err(|_| LiftError::parse(name, off, "fingerprint is not UTF-8"))?;
    let count = u64::from_le_bytes(take(r, 8, &mut off)?.try_into().expect("8 bytes"));
    let mut records = Vec::new();
    for _ in 0..count {
        let il = u32::from_le_bytes(take(r, 4, &mut off)?.try_into().expect("4 bytes")) as usize;
        let id = String::from_utf8(take(r, il, &mut off)?)
            .map_err(|_| LiftError::parse(name, off, "record id is not UTF-8"))?;
        let mut read_t = |r: &mut R| -> Result<Tensor> {
            Tensor::read_from(r, &mut off).map_err(|e| match e {
                ndgrad::GradError::Format { offset, msg } => LiftError::parse(name, offset, msg),
                other => other.into(),
            })
        };
        let g = read_t(r)?;
        let m = read_t(r)?;
        let l = read_t(r)?;
        let alpha = read_t(r)?;
        let mse = f64::from_le_bytes(take(r, 8, &mut off)?.try_into().expect("8 bytes"));
        records.push(ModulationRecord {
            id,
            latents: LatentHierarchy::from_tensors([g, m, l]),
            alpha,
            mse,
        });
    }
    Ok((fp, records))
}

pub fn load_modulations(path: &Path) -> Result<(String, Vec<ModulationRecord>)> {
    if !path.exists() {
        return Err(LiftError::MissingInput(path.to_path_buf()));
    }
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_modulations(&mut r, &path.display().to_string())
}
