use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndgrad::Tensor;

use super::config::{ModelKind, RunConfig, TaskKind};
use super::manifest::{Manifest, Outputs};
use crate::analysis::plot::{heatmap_png, line_plot_png, Series};
use crate::analysis::{
    activation_histograms, bessel_expand, dft_spectrum, harmonic_net, histograms_csv, iou, masked_psnr, psnr,
    psnr_from_mse, ssim, track_spectral_bias,
};
use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Network};
use crate::error::{LiftError, Result};
use crate::fit::{FitData, Fitter, FIT_LOG_HEADER};
use crate::meta::{
    build_modulation_dataset, interpolate_latents, load_modulations, save_modulations, MetaTrainer, ModulationRecord,
    Task, LOG_HEADER,
};
use crate::model::LiftModel;
use crate::nets::Mlp;
use crate::rng::{rng_for, stream};
use crate::signals::io::{load_audio_with_rate, load_signal, save_signal};
use crate::signals::synth::{blob_image, chirp, shapes_volume, spectral_target, test_image, SPECTRAL_PROBES};
use crate::signals::{degrade, dense_query, LiftField, SignalGrid};

const DEFAULT_RATE: u32 = 16_000;

/// A loaded signal with the WAV rate to write it back at.
struct Loaded {
    signal: SignalGrid,
    rate: u32,
}

fn load_task_signal(cfg: &RunConfig) -> Result<Loaded> {
    let task = cfg.run.task;
    let signal = match (&cfg.run.input, task) {
        (_, TaskKind::Spectral) => spectral_target(300)?,
        (Some(path), TaskKind::Audio) => {
            let (signal, rate) = load_audio_with_rate(path)?;
            return Ok(Loaded { signal, rate });
        }
        (Some(path), _) => load_signal(path)?,
        (None, TaskKind::Image) => test_image(64)?,
        (None, TaskKind::Audio) => chirp(4096)?,
        (None, TaskKind::Volume) => shapes_volume(32, cfg.run.seed)?,
    };
    if signal.dims() != task.dims() {
        return Err(LiftError::Config(format!(
            "{} is {}-D but task {:?} expects {}-D signals",
            signal.source,
            signal.dims(),
            task,
            task.dims()
        )));
    }
    Ok(Loaded {
        signal,
        rate: DEFAULT_RATE,
    })
}

fn extension(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Image => "png",
        TaskKind::Audio => "wav",
        TaskKind::Volume => "lftv",
        TaskKind::Spectral => "csv",
    }
}

/// Network output at the signal's own sample positions.
fn predict_like(net: &Mlp, like: &SignalGrid) -> Result<SignalGrid> {
    let mut shape = like.spatial().to_vec();
    shape.push(net.shape.out_dim);
    let values = net.predict(&like.coords())?.reshape(&shape)?;
    Ok(SignalGrid::new(values, "reconstruction")?.with_sampling(like.sampling))
}

fn write_signal(out: &mut Outputs, name: &str, grid: &SignalGrid, rate: u32) -> Result<PathBuf> {
    if name.ends_with(".csv") {
        let mut text = String::from("x,value\n");
        let n = grid.points();
        let c = grid.channels();
        for i in 0..n {
            write!(text, "{:.10}", grid.coordinate(i, n)).expect("string write");
            for v in &grid.values.data()[i * c..(i + 1) * c] {
                write!(text, ",{v:.10e}").expect("string write");
            }
            text.push('\n');
        }
        return out.bytes(name, text.as_bytes());
    }
    out.file(name, |p| save_signal(grid, p, rate))
}

fn metrics_csv(rows: &[(String, f64)]) -> String {
    let mut text = String::from("metric,value\n");
    for (k, v) in rows {
        if v.is_infinite() && *v > 0.0 {
            writeln!(text, "{k},inf").expect("string write");
        } else {
            writeln!(text, "{k},{v}").expect("string write");
        }
    }
    text
}

/// PSNR plus SSIM for images and IoU for occupancy volumes.
fn quality(task: TaskKind, pred: &SignalGrid, target: &SignalGrid, prefix: &str) -> Result<Vec<(String, f64)>> {
    let peak = if task == TaskKind::Audio || task == TaskKind::Spectral { 2.0 } else { 1.0 };
    let mut rows = vec![(format!("{prefix}psnr"), psnr(&pred.values, &target.values, peak)?)];
    if task == TaskKind::Image && target.spatial().iter().all(|&n| n >= 8) {
        rows.push((format!("{prefix}ssim"), ssim(&pred.values, &target.values, 1.0)?));
    }
    if task == TaskKind::Volume {
        rows.push((format!("{prefix}iou"), iou(&pred.values, &target.values, 0.5)?));
    }
    Ok(rows)
}

/// Trains one network on one signal.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let Loaded { signal, rate } = load_task_signal(cfg)?;
    let mut out = Outputs::create(&cfg.run.output, "fit", cfg)?;
    out.bytes("config.toml", cfg.artifact_toml()?.as_bytes())?;
    let net = cfg.build_mlp(signal.channels())?;
    let task = cfg.run.task;

    if task == TaskKind::Spectral {
        let every = (cfg.fit.steps / 40).max(1);
        let (trace, net) = track_spectral_bias(net, &signal, &SPECTRAL_PROBES, &cfg.fit, every)?;
        out.bytes("spectral_trace.csv", trace.to_csv().as_bytes())?;
        let steps: Vec<f64> = trace.steps.iter().map(|&s| s as f64).collect();
        let columns: Vec<Vec<f64>> = (0..trace.probes.len()).map(|j| trace.column(j)).collect();
        let series: Vec<Series> = columns.iter().map(|y| Series { x: &steps, y }).collect();
        out.bytes("spectral_trace.png", &line_plot_png(&series, 480, 300, true)?)?;
        let pred = predict_like(&net, &signal)?;
        write_signal(&mut out, "reconstruction.csv", &pred, rate)?;
        let mut rows = quality(task, &pred, &signal, "")?;
        for (b, e) in trace.bins.iter().zip(trace.last().unwrap_or(&[])) {
            rows.push((format!("error_bin{b}"), *e));
        }
        out.bytes("metrics.csv", metrics_csv(&rows).as_bytes())?;
        let ck = Checkpoint {
            network: Network::Mlp(net),
            step: cfg.fit.steps,
            optimizer: None,
        };
        out.file("checkpoint.lftc", |p| save_checkpoint(p, &ck))?;
        return out.finish();
    }

    let (train, observed, eval) = match &cfg.degrade {
        Some(d) => {
            let dg = degrade(&signal, d)?;
            (dg.train, dg.observed, dg.eval)
        }
        None => (signal.clone(), None, signal.clone()),
    };
    let data = match &observed {
        Some(mask) => FitData::observed(&train, mask)?,
        None => FitData::from_grid(&train),
    };
    let mut fitter = Fitter::new(net, cfg.fit.lr);
    let log = fitter.run(&data, cfg.fit.steps, |_, row| {
        if row.step % 100 == 0 {
            log::info!("step {} loss {:.6e}", row.step, row.loss);
        }
        Ok(())
    })?;
    let mut loss = String::from("step,loss\n");
    let mut timing = format!("{FIT_LOG_HEADER}\n");
    for row in &log {
        writeln!(loss, "{},{:.10e}", row.step, row.loss).expect("string write");
        timing.push_str(&row.csv());
        timing.push('\n');
    }
    out.bytes("loss.csv", loss.as_bytes())?;
    out.diagnostic("timing.csv", &timing)?;

    let pred = predict_like(&fitter.net, &eval)?;
    write_signal(&mut out, &format!("reconstruction.{}", extension(task)), &pred, rate)?;
    let mut rows = quality(task, &pred, &eval, "")?;
    if let Some(mask) = &observed {
        let withheld: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        rows.push(("withheld_psnr".into(), masked_psnr(&pred.values, &eval.values, &withheld, 1.0)?));
    } else if train.values != eval.values && train.values.shape() == eval.values.shape() {
        rows.extend(quality(task, &train, &eval, "input_")?);
    }
    out.bytes("metrics.csv", metrics_csv(&rows).as_bytes())?;
    let ck = Checkpoint {
        network: Network::Mlp(fitter.net),
        step: fitter.step,
        optimizer: Some(fitter.adam),
    };
    out.file("checkpoint.lftc", |p| save_checkpoint(p, &ck))?;
    out.finish()
}

/// Where meta-training and modulation read their signals from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataSource {
    /// Every signal file in a directory, sorted by name.
    Dir(PathBuf),
    /// Synthetic signals with indices `start..start + count`.
    Synthetic { count: u64, start: u64, size: usize },
}

pub fn load_dataset(task: TaskKind, source: &DataSource) -> Result<Vec<(String, SignalGrid)>> {
    let signals = match source {
        DataSource::Dir(dir) => {
            if !dir.is_dir() {
                return Err(LiftError::MissingInput(dir.clone()));
            }
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            paths.sort();
            paths
                .iter()
                .map(|p| {
                    let id = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    Ok((id, load_signal(p)?))
                })
                .collect::<Result<Vec<_>>>()?
        }
        DataSource::Synthetic { count, start, size } => (*start..start + count)
            .map(|i| {
                let s = match task {
                    TaskKind::Image => blob_image(*size, i, 0)?,
                    TaskKind::Volume => shapes_volume(*size, i)?,
                    _ => {
                        return Err(LiftError::Config(format!(
                            "no synthetic dataset for task {task:?}; pass --input DIR"
                        )))
                    }
                };
                Ok((format!("synthetic{i}"), s))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    if signals.is_empty() {
        return Err(LiftError::Config("dataset is empty".into()));
    }
    let reference = signals[0].1.values.shape().to_vec();
    let odd: Vec<String> = signals
        .iter()
        .filter(|(_, s)| s.values.shape() != reference.as_slice())
        .map(|(id, s)| format!("{id} {:?}", s.values.shape()))
        .collect();
    if !odd.is_empty() {
        return Err(LiftError::Config(format!(
            "signals must share one shape (first is {reference:?}); offenders: {}",
            odd.join(", ")
        )));
    }
    Ok(signals)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaOptions {
    pub data: DataSource,
    pub resume: Option<PathBuf>,
    /// Write a numbered checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: u64,
}

/// Meta-trains a LIFT model.
pub fn cmd_meta(cfg: &RunConfig, opts: &MetaOptions) -> Result<Manifest> {
    cfg.validate()?;
    let dataset = load_dataset(cfg.run.task, &opts.data)?;
    let channels = dataset[0].1.channels();
    let mut model = cfg.build_lift(channels)?;
    let mut adam = None;
    let mut start = 0;
    if let Some(path) = &opts.resume {
        let ck = load_checkpoint(path)?;
        ck.expect_fingerprint(&model.fingerprint())?;
        start = ck.step;
        adam = ck.optimizer.clone();
        model = ck.into_lift()?;
    }
    let tasks = dataset
        .iter()
        .map(|(id, s)| Task::new(&model, id.clone(), s))
        .collect::<Result<Vec<_>>>()?;
    let mut trainer = MetaTrainer::new(model, cfg.meta.clone())?;
    trainer.iteration = start;
    if let Some(a) = adam {
        trainer.adam = a;
    }
    let mut out = Outputs::create(&cfg.run.output, "meta", cfg)?;
    out.bytes("config.toml", cfg.artifact_toml()?.as_bytes())?;
    let mut periodic = Vec::new();
    let log = trainer.train(&tasks, |t, row| {
        if row.iter % 100 == 0 || row.iter == t.cfg.iterations {
            log::info!("iter {} L_Rec {:.6e} train PSNR {:.2}", row.iter, row.rec, psnr_from_mse(row.rec, 1.0));
        }
        if opts.checkpoint_every > 0 && row.iter % opts.checkpoint_every == 0 {
            let name = format!("checkpoints/iter{:06}.lftc", row.iter);
            let ck = trainer_checkpoint(t);
            std::fs::create_dir_all(cfg.run.output.join("checkpoints"))?;
            save_checkpoint(&cfg.run.output.join(&name), &ck)?;
            periodic.push(name);
        }
        Ok(())
    })?;
    for name in periodic {
        out.file(&name, |_| Ok(()))?;
    }
    let mut losses = String::from("iter,L_Rec,L_Smooth,L_Total\n");
    let mut timing = format!("{LOG_HEADER}\n");
    for row in &log {
        writeln!(losses, "{},{:.10e},{:.10e},{:.10e}", row.iter, row.rec, row.smooth, row.total)
            .expect("string write");
        timing.push_str(&row.csv());
        timing.push('\n');
    }
    out.bytes("loss.csv", losses.as_bytes())?;
    out.diagnostic("log.csv", &timing)?;
    if let Some(last) = log.last() {
        let rows = vec![
            ("final_L_Rec".to_string(), last.rec),
            ("final_train_psnr".to_string(), psnr_from_mse(last.rec, 1.0)),
        ];
        out.bytes("metrics.csv", metrics_csv(&rows).as_bytes())?;
    }
    let ck = trainer_checkpoint(&trainer);
    out.file("checkpoint.lftc", |p| save_checkpoint(p, &ck))?;
    out.finish()
}

fn trainer_checkpoint(t: &MetaTrainer) -> Checkpoint {
    Checkpoint {
        network: Network::Lift(t.model.clone()),
        step: t.iteration,
        optimizer: Some(t.adam.clone()),
    }
}

/// Loads a LIFT checkpoint and, when the caller's configuration describes
/// an architecture, checks it matches.
fn load_lift(path: &Path, expect: Option<&RunConfig>, channels: Option<usize>) -> Result<LiftModel> {
    let ck = load_checkpoint(path)?;
    if let (Some(cfg), Some(c)) = (expect, channels) {
        ck.expect_fingerprint(&cfg.build_lift(c)?.fingerprint())?;
    }
    ck.into_lift()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulateOptions {
    pub checkpoint: PathBuf,
    pub data: DataSource,
    /// Compare the checkpoint against the configured architecture.
    pub check_config: bool,
}

/// Fits latents for every signal with frozen weights.
pub fn cmd_modulate(cfg: &RunConfig, opts: &ModulateOptions) -> Result<Manifest> {
    cfg.validate()?;
    let dataset = load_dataset(cfg.run.task, &opts.data)?;
    let expect = opts.check_config.then_some(cfg);
    let model = load_lift(&opts.checkpoint, expect, Some(dataset[0].1.channels()))?;
    let records = build_modulation_dataset(&model, &dataset, &cfg.meta)?;
    let mut out = Outputs::create(&cfg.run.output, "modulate", cfg)?;
    out.bytes("config.toml", cfg.artifact_toml()?.as_bytes())?;
    let fp = model.fingerprint();
    out.file("modulations.lftm", |p| save_modulations(p, &fp, &records))?;
    let mut text = String::from("id,mse,psnr\n");
    for r in &records {
        writeln!(text, "{},{:.10e},{:.4}", r.id, r.mse, psnr_from_mse(r.mse, 1.0)).expect("string write");
    }
    out.bytes("records.csv", text.as_bytes())?;
    let mean = records.iter().map(|r| psnr_from_mse(r.mse, 1.0)).sum::<f64>() / records.len() as f64;
    out.bytes("metrics.csv", metrics_csv(&[("mean_psnr".into(), mean)]).as_bytes())?;
    out.finish()
}

fn find_record<'a>(records: &'a [ModulationRecord], id: &str) -> Result<&'a ModulationRecord> {
    records
        .iter()
        .find(|r| r.id == id)
        .or_else(|| id.parse::<usize>().ok().and_then(|i| records.get(i)))
        .ok_or_else(|| {
            let known: Vec<&str> = records.iter().take(8).map(|r| r.id.as_str()).collect();
            LiftError::Config(format!("no record `{id}` (first ids: {})", known.join(", ")))
        })
}

fn load_records(model: &LiftModel, path: &Path) -> Result<Vec<ModulationRecord>> {
    let (fp, records) = load_modulations(path)?;
    if fp != model.fingerprint() {
        return Err(LiftError::Fingerprint {
            expected: fp,
            found: model.fingerprint(),
        });
    }
    Ok(records)
}

fn task_of(dims: usize) -> TaskKind {
    match dims {
        1 => TaskKind::Audio,
        3 => TaskKind::Volume,
        _ => TaskKind::Image,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryOptions {
    pub checkpoint: PathBuf,
    /// Needed for LIFT checkpoints.
    pub modulations: Option<PathBuf>,
    pub id: Option<String>,
    pub resolution: Vec<usize>,
}

/// Samples a fitted network or one modulated LIFT signal on a grid.
pub fn cmd_query(cfg: &RunConfig, opts: &QueryOptions) -> Result<Manifest> {
    let ck = load_checkpoint(&opts.checkpoint)?;
    let grid = match &ck.network {
        Network::Mlp(net) => dense_query(net, &opts.resolution)?,
        Network::Lift(model) => {
            let path = opts
                .modulations
                .as_ref()
                .ok_or_else(|| LiftError::Config("querying a LIFT checkpoint needs --modulations".into()))?;
            let records = load_records(model, path)?;
            let record = find_record(&records, opts.id.as_deref().unwrap_or("0"))?;
            let field = LiftField {
                model,
                latents: &record.latents,
            };
            dense_query(&field, &opts.resolution)?
        }
    };
    let mut out = Outputs::create(&cfg.run.output, "query", cfg)?;
    let task = task_of(grid.dims());
    write_signal(&mut out, &format!("query.{}", extension(task)), &grid, DEFAULT_RATE)?;
    out.finish()
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterpOptions {
    pub checkpoint: PathBuf,
    pub modulations: PathBuf,
    pub from: String,
    pub to: String,
    /// Frames at `t = k / frames` for `k = 0..=frames`.
    pub frames: usize,
    pub resolution: Vec<usize>,
}

/// Decodes latent interpolations between two records.
pub fn cmd_interp(cfg: &RunConfig, opts: &InterpOptions) -> Result<Manifest> {
    if opts.frames == 0 {
        return Err(LiftError::Config("--frames must be >= 1".into()));
    }
    let model = load_checkpoint(&opts.checkpoint)?.into_lift()?;
    let records = load_records(&model, &opts.modulations)?;
    let a = find_record(&records, &opts.from)?;
    let b = find_record(&records, &opts.to)?;
    let mut out = Outputs::create(&cfg.run.output, "interp", cfg)?;
    let task = task_of(model.spec().dims());
    for k in 0..=opts.frames {
        let t = k as f64 / opts.frames as f64;
        let grid = interpolate_latents(&model, a, b, t, &opts.resolution)?;
        let range = grid.value_range();
        if !(range.0.is_finite() && range.1.is_finite()) {
            return Err(LiftError::Numeric(format!("non-finite frame at t = {t}")));
        }
        write_signal(&mut out, &format!("frame{k:03}.{}", extension(task)), &grid, DEFAULT_RATE)?;
    }
    out.finish()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectraOptions {
    pub features: usize,
    pub frequencies: usize,
    pub s_max: usize,
    pub residual: bool,
    pub samples: usize,
}

impl Default for SpectraOptions {
    fn default() -> Self {
        Self {
            features: 2,
            frequencies: 2,
            s_max: 8,
            residual: true,
            samples: 1024,
        }
    }
}

/// Bessel-expansion report and DFT plots for a random two-layer toy net.
pub fn cmd_spectra(cfg: &RunConfig, opts: &SpectraOptions) -> Result<Manifest> {
    use rand::Rng as _;
    if opts.features == 0 || opts.frequencies == 0 || opts.samples < 4 {
        return Err(LiftError::Config("spectra needs features, frequencies >= 1 and samples >= 4".into()));
    }
    let gamma = cfg.arch.gamma;
    let mut rng = rng_for(cfg.run.seed, stream::PROBE);
    let pi = std::f64::consts::PI;
    let omegas: Vec<f64> = (0..opts.frequencies).map(|_| pi * rng.gen_range(1..=4) as f64).collect();
    let w1: Vec<Vec<f64>> = (0..opts.features)
        .map(|_| (0..opts.frequencies).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let w2: Vec<f64> = (0..opts.features).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let net = harmonic_net(&omegas, &w1, &w2, gamma, opts.residual)?;
    let expansion = bessel_expand(&net, opts.s_max)?;
    // One period of every component: frequencies are integer multiples of pi.
    let n = opts.samples;
    let coords: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
    let direct = net.predict(&Tensor::new(&[n, 1], coords.clone())?)?;
    let deviation = coords
        .iter()
        .zip(direct.data())
        .map(|(&r, &y)| (expansion.evaluate(r) - y).abs())
        .fold(0.0, f64::max);

    let mut out = Outputs::create(&cfg.run.output, "spectra", cfg)?;
    let mut report = String::from("frequency,coefficient\n");
    for (f, c) in expansion.frequencies.iter().zip(&expansion.coefficients) {
        writeln!(report, "{f:.12},{c:.12e}").expect("string write");
    }
    out.bytes("expansion.csv", report.as_bytes())?;
    let mut net_text = String::from("frequencies");
    for w in &omegas {
        write!(net_text, ",{w:.12}").expect("string write");
    }
    writeln!(net_text, "\ngamma,{gamma}\nresidual,{}", opts.residual).expect("string write");
    out.bytes("network.csv", net_text.as_bytes())?;

    // Output spectrum of the network against the expansion's predicted lines.
    let mags = dft_spectrum(direct.data());
    let bins: Vec<f64> = (0..mags.len()).map(|k| k as f64).collect();
    let mut predicted = vec![0.0; mags.len()];
    for (f, c) in expansion.frequencies.iter().zip(&expansion.coefficients) {
        let k = (f / pi).round() as usize;
        if k < predicted.len() {
            predicted[k] += c.abs() * n as f64 / 2.0;
        }
    }
    let mut spectrum = String::from("bin,dft_magnitude,expansion_magnitude\n");
    for k in 0..mags.len() {
        writeln!(spectrum, "{k},{:.10e},{:.10e}", mags[k], predicted[k]).expect("string write");
    }
    out.bytes("spectrum.csv", spectrum.as_bytes())?;
    let shown = mags.len().min(64);
    out.bytes(
        "spectrum.png",
        &line_plot_png(
            &[
                Series { x: &bins[..shown], y: &mags[..shown] },
                Series { x: &bins[..shown], y: &predicted[..shown] },
            ],
            480,
            300,
            true,
        )?,
    )?;

    // First-layer outputs: row t holds |DFT| of sin(gamma * omega_t * r).
    let first: Vec<Vec<f64>> = omegas
        .iter()
        .map(|w| {
            let x: Vec<f64> = coords.iter().map(|r| (gamma * w * r).sin()).collect();
            dft_spectrum(&x)[..shown].to_vec()
        })
        .collect();
    out.bytes("first_layer.png", &heatmap_png(&first, 6)?)?;
    let hist = activation_histograms(&net, &Tensor::new(&[n, 1], coords)?, 32)?;
    out.bytes("activations.csv", histograms_csv(&hist).as_bytes())?;

    let rows = vec![
        ("max_deviation".to_string(), deviation),
        ("tail_bound".to_string(), expansion.tail_bound),
        ("terms".to_string(), expansion.frequencies.len() as f64),
        ("s_max".to_string(), opts.s_max as f64),
    ];
    out.bytes("metrics.csv", metrics_csv(&rows).as_bytes())?;
    log::info!("max |expansion - network| = {deviation:.3e}");
    out.finish()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareOptions {
    pub models: Vec<ModelKind>,
    /// PSNR is recorded every this many steps.
    pub every: u64,
}

/// Fits the same signal with several single networks and tabulates PSNR
/// against step.
pub fn cmd_compare(cfg: &RunConfig, opts: &CompareOptions) -> Result<Manifest> {
    cfg.validate()?;
    if opts.models.is_empty() || opts.models.iter().any(|m| m.is_lift()) {
        return Err(LiftError::Config("compare takes a list of single-network models (siren, relift)".into()));
    }
    if cfg.run.task == TaskKind::Spectral {
        return Err(LiftError::Config("compare works on image, audio or volume signals".into()));
    }
    let Loaded { signal, .. } = load_task_signal(cfg)?;
    let data = FitData::from_grid(&signal);
    let every = opts.every.max(1);
    let mut steps: Vec<u64> = Vec::new();
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for &model in &opts.models {
        let mut c = cfg.clone();
        c.run.model = model;
        let mut fitter = Fitter::new(c.build_mlp(signal.channels())?, cfg.fit.lr);
        let mut curve = Vec::new();
        let mut at = Vec::new();
        fitter.run(&data, cfg.fit.steps, |f, row| {
            if row.step % every == 0 || row.step == cfg.fit.steps {
                let pred = predict_like(&f.net, &signal)?;
                curve.push(quality(cfg.run.task, &pred, &signal, "")?[0].1);
                at.push(row.step);
            }
            Ok(())
        })?;
        steps = at;
        curves.push(curve);
    }
    let mut out = Outputs::create(&cfg.run.output, "compare", cfg)?;
    out.bytes("config.toml", cfg.artifact_toml()?.as_bytes())?;
    let names: Vec<String> = opts.models.iter().map(|m| model_name(*m).to_string()).collect();
    let mut text = format!("step,{}\n", names.join(","));
    for (i, s) in steps.iter().enumerate() {
        write!(text, "{s}").expect("string write");
        for c in &curves {
            write!(text, ",{:.4}", c[i]).expect("string write");
        }
        text.push('\n');
    }
    out.bytes("psnr.csv", text.as_bytes())?;
    let xs: Vec<f64> = steps.iter().map(|&s| s as f64).collect();
    let series: Vec<Series> = curves.iter().map(|y| Series { x: &xs, y }).collect();
    out.bytes("psnr.png", &line_plot_png(&series, 480, 300, false)?)?;
    let rows: Vec<(String, f64)> = names
        .iter()
        .zip(&curves)
        .map(|(n, c)| (format!("{n}_final_psnr"), *c.last().unwrap_or(&f64::NAN)))
        .collect();
    out.bytes("metrics.csv", metrics_csv(&rows).as_bytes())?;
    out.finish()
}

pub fn model_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Siren => "siren",
        ModelKind::Relift => "relift",
        ModelKind::Lift => "lift",
        ModelKind::LiftRelift => "lift-relift",
    }
}
