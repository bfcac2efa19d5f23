//! Training and evaluation protocols: the four-term loss, the patch-pool
//! SGD loop, scene-disjoint protocol runs with repeat averaging,
//! cross-database transfer, and single-image scoring.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    self, load_sample, make_split, tile_patches, write_split_csv, DataError, DatasetManifest,
    MosLabels, SplitPlan, StereoSample, TrainFraction,
};
use crate::metrics::{metric_triple, EvalReport, EvalRow, MetricTriple, MetricsError};
use crate::model::{
    load_checkpoint, save_checkpoint, ModelError, MultiScoreNet, ScoreBatch, ScoreQuad,
};
use crate::tensor::{self, sgd_step, Parameter, SgdConfig, Tensor, TensorError};
use crate::PATCH_SIZE;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: u32, batch: usize },
    #[error("cross-database test refused: both manifests are `{name}`")]
    SameManifest { name: String },
    #[error("sample id `{id}` is not in the manifest")]
    UnknownSampleId { id: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Which loss terms train, and which score is reported at evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    /// All four terms; the global score is the headline quality.
    Full,
    /// No global term; the global head stays untrained and the stereo
    /// score is reported instead.
    NoGlobalScore,
    /// No left/right terms; the model trains on stereo MOS only.
    NoLrMos,
}

impl AblationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoGlobalScore => "no_global_score",
            AblationMode::NoLrMos => "no_lr_mos",
        }
    }

    pub fn parse(s: &str) -> Option<AblationMode> {
        match s {
            "full" => Some(AblationMode::Full),
            "no_global_score" => Some(AblationMode::NoGlobalScore),
            "no_lr_mos" => Some(AblationMode::NoLrMos),
            _ => None,
        }
    }
}

/// Term weights of the training loss; (2,1,1,1) unless experimenting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub global: f32,
    pub stereo: f32,
    pub left: f32,
    pub right: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            global: 2.0,
            stereo: 1.0,
            left: 1.0,
            right: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub sgd: SgdConfig,
    pub epochs: u32,
    pub seed: u64,
    pub ablation: AblationMode,
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sgd: SgdConfig::default(),
            epochs: 1,
            seed: 0,
            ablation: AblationMode::Full,
            loss_weights: LossWeights::default(),
        }
    }
}

/// Per-patch MOS targets as [N,1] tensors.
pub struct BatchLabels {
    pub left: Tensor,
    pub right: Tensor,
    pub stereo: Tensor,
}

impl BatchLabels {
    pub fn from_labels(labels: &[MosLabels]) -> Result<BatchLabels> {
        let n = labels.len();
        let column = |f: fn(&MosLabels) -> f64| -> Result<Tensor> {
            let data: Vec<f32> = labels.iter().map(|l| f(l) as f32).collect();
            Ok(Tensor::from_vec(&[n, 1], data)?)
        };
        Ok(BatchLabels {
            left: column(|l| l.left)?,
            right: column(|l| l.right)?,
            stereo: column(|l| l.stereo)?,
        })
    }
}

/// The training loss. In full mode:
///
/// ```text
/// loss = 2*L1(q_global, m_stereo) + L1(q_stereo, m_stereo)
///      + L1(q_left, m_left) + L1(q_right, m_right)
/// ```
///
/// `no_lr_mos` erases the two per-view terms; `no_global_score` erases the
/// global term (leaving its head untrained).
pub fn multiscore_loss(
    scores: &ScoreBatch,
    labels: &BatchLabels,
    mode: AblationMode,
    weights: &LossWeights,
) -> Result<Tensor> {
    let term = |pred: &Tensor, target: &Tensor, w: f32| -> Result<Tensor> {
        Ok(tensor::scale(&tensor::l1_loss(pred, target)?, w)?)
    };
    let loss = match mode {
        AblationMode::Full => {
            let g = term(&scores.q_global, &labels.stereo, weights.global)?;
            let s = term(&scores.q_stereo, &labels.stereo, weights.stereo)?;
            let l = term(&scores.q_left, &labels.left, weights.left)?;
            let r = term(&scores.q_right, &labels.right, weights.right)?;
            tensor::add(&tensor::add(&g, &s)?, &tensor::add(&l, &r)?)?
        }
        AblationMode::NoLrMos => {
            let g = term(&scores.q_global, &labels.stereo, weights.global)?;
            let s = term(&scores.q_stereo, &labels.stereo, weights.stereo)?;
            tensor::add(&g, &s)?
        }
        AblationMode::NoGlobalScore => {
            let s = term(&scores.q_stereo, &labels.stereo, weights.stereo)?;
            let l = term(&scores.q_left, &labels.left, weights.left)?;
            let r = term(&scores.q_right, &labels.right, weights.right)?;
            tensor::add(&s, &tensor::add(&l, &r)?)?
        }
    };
    Ok(loss)
}

/// Parameters updated by the optimizer under a given ablation: erased loss
/// terms leave their heads untouched, matching what the loss structure
/// already implies for the global head and keeping even weight decay away
/// from frozen parameters.
pub fn trainable_parameters(net: &mut MultiScoreNet, mode: AblationMode) -> Vec<&mut Parameter> {
    net.parameters_mut()
        .into_iter()
        .filter(|p| match mode {
            AblationMode::Full => true,
            AblationMode::NoGlobalScore => !p.name().starts_with("global/"),
            AblationMode::NoLrMos => {
                !p.name().starts_with("left/score/") && !p.name().starts_with("right/score/")
            }
        })
        .collect()
}

/// All training patches pooled across images, stored as raw bytes.
struct PatchPool {
    left: Vec<u8>,
    right: Vec<u8>,
    labels: Vec<MosLabels>,
}

const PATCH_LEN: usize = 3 * PATCH_SIZE * PATCH_SIZE;

impl PatchPool {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn build(manifest: &DatasetManifest, ids: &[String]) -> Result<PatchPool> {
        let mut pool = PatchPool {
            left: Vec::new(),
            right: Vec::new(),
            labels: Vec::new(),
        };
        for id in ids {
            let record = manifest
                .sample(id)
                .ok_or_else(|| HarnessError::UnknownSampleId { id: id.clone() })?;
            let sample = load_sample(manifest, record)?;
            pool.append_sample(&sample)?;
        }
        Ok(pool)
    }

    fn append_sample(&mut self, sample: &StereoSample) -> Result<()> {
        let (w, h) = (sample.left.width, sample.left.height);
        if w < PATCH_SIZE || h < PATCH_SIZE {
            return Err(DataError::ImageTooSmall {
                id: sample.record.id.clone(),
                width: w,
                height: h,
            }
            .into());
        }
        let labels = MosLabels {
            left: sample.record.mos_left,
            right: sample.record.mos_right,
            stereo: sample.record.mos_stereo,
        };
        for (row, col) in data::patch_grid(w, h) {
            for (img, buf) in [(&sample.left, &mut self.left), (&sample.right, &mut self.right)] {
                let start = buf.len();
                buf.resize(start + PATCH_LEN, 0);
                extract_patch_bytes(img, row, col, &mut buf[start..]);
            }
            self.labels.push(labels);
        }
        Ok(())
    }

    fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor, BatchLabels)> {
        let n = indices.len();
        let mut left = vec![0.0f32; n * PATCH_LEN];
        let mut right = vec![0.0f32; n * PATCH_LEN];
        let mut labels = Vec::with_capacity(n);
        for (slot, &idx) in indices.iter().enumerate() {
            for (src, dst) in [(&self.left, &mut left), (&self.right, &mut right)] {
                let bytes = &src[idx * PATCH_LEN..][..PATCH_LEN];
                let out = &mut dst[slot * PATCH_LEN..][..PATCH_LEN];
                for (o, &b) in out.iter_mut().zip(bytes) {
                    *o = b as f32;
                }
            }
            labels.push(self.labels[idx]);
        }
        let shape = [n, 3, PATCH_SIZE, PATCH_SIZE];
        Ok((
            Tensor::from_vec(&shape, left)?,
            Tensor::from_vec(&shape, right)?,
            BatchLabels::from_labels(&labels)?,
        ))
    }
}

fn extract_patch_bytes(img: &data::RgbImage, row: usize, col: usize, out: &mut [u8]) {
    for c in 0..3 {
        for y in 0..PATCH_SIZE {
            let src_base = ((row + y) * img.width + col) * 3 + c;
            let dst_base = (c * PATCH_SIZE + y) * PATCH_SIZE;
            for x in 0..PATCH_SIZE {
                out[dst_base + x] = img.data[src_base + x * 3];
            }
        }
    }
}

const TRAIN_SHUFFLE_STREAM: u64 = 0x545241494E_00;

/// Trains a fresh network on the given samples: patches from all images
/// pooled, reshuffled every epoch, consumed in `batch_size` mini-batches
/// (the final short batch is kept). Returns the network and the per-epoch
/// mean training loss.
pub fn train(
    manifest: &DatasetManifest,
    train_ids: &[String],
    config: &TrainConfig,
) -> Result<(MultiScoreNet, Vec<f64>)> {
    config.sgd.validate()?;
    if train_ids.is_empty() {
        return Err(HarnessError::EmptyTrainSet);
    }
    let pool = PatchPool::build(manifest, train_ids)?;
    if pool.len() == 0 {
        return Err(HarnessError::EmptyTrainSet);
    }
    let mut net = MultiScoreNet::build(config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(TRAIN_SHUFFLE_STREAM);

    let mut epoch_losses = Vec::with_capacity(config.epochs as usize);
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for (batch_idx, chunk) in indices.chunks(config.sgd.batch_size).enumerate() {
            let (left, right, labels) = pool.batch(chunk)?;
            let step = (|| -> Result<f64> {
                let scores = net.forward(&left, &right)?;
                let loss = multiscore_loss(&scores, &labels, config.ablation, &config.loss_weights)?;
                let value = loss.item()? as f64;
                tensor::backward(&loss)?;
                let mut params = trainable_parameters(&mut net, config.ablation);
                sgd_step(&mut params, &config.sgd)?;
                Ok(value)
            })();
            let value = step.map_err(|e| match e {
                HarnessError::Tensor(TensorError::NonFinite { .. })
                | HarnessError::Model(ModelError::Tensor(TensorError::NonFinite { .. })) => {
                    HarnessError::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    }
                }
                other => other,
            })?;
            // Frozen heads keep gradient buffers; clear everything so the
            // next step starts clean.
            net.zero_grads();
            loss_sum += value * chunk.len() as f64;
        }
        epoch_losses.push(loss_sum / pool.len() as f64);
    }
    Ok((net, epoch_losses))
}

/// The score a checkpoint reports for an image under a given ablation.
fn reported_score(quad: &ScoreQuad, mode: AblationMode) -> f64 {
    match mode {
        AblationMode::NoGlobalScore => quad.q_stereo,
        _ => quad.q_global,
    }
}

const EVAL_CHUNK: usize = 128;

/// Forward all patches of one batch in inference mode, in fixed chunks.
pub fn score_patch_batch(net: &MultiScoreNet, batch: &data::PatchBatch) -> Result<Vec<ScoreQuad>> {
    let _guard = tensor::no_grad();
    let n = batch.len();
    let mut quads = Vec::with_capacity(n);
    let left = batch.left_patches.data();
    let right = batch.right_patches.data();
    let mut start = 0;
    while start < n {
        let count = EVAL_CHUNK.min(n - start);
        let shape = [count, 3, PATCH_SIZE, PATCH_SIZE];
        let l = Tensor::from_vec(&shape, left[start * PATCH_LEN..][..count * PATCH_LEN].to_vec())?;
        let r = Tensor::from_vec(&shape, right[start * PATCH_LEN..][..count * PATCH_LEN].to_vec())?;
        let scores = net.forward(&l, &r)?;
        quads.extend(scores.quads());
        start += count;
    }
    Ok(quads)
}

/// One evaluated test image.
#[derive(Debug, Clone)]
pub struct ImagePrediction {
    pub id: String,
    pub predicted: f64,
    pub mos_stereo: f64,
    pub patches: usize,
}

fn evaluate_one(
    net: &MultiScoreNet,
    manifest: &DatasetManifest,
    id: &str,
    mode: AblationMode,
) -> Result<ImagePrediction> {
    let record = manifest
        .sample(id)
        .ok_or_else(|| HarnessError::UnknownSampleId { id: id.to_string() })?;
    let sample = load_sample(manifest, record)?;
    let batch = tile_patches(&sample)?;
    let quads = score_patch_batch(net, &batch)?;
    let aggregated = data::aggregate_score(&quads)?;
    Ok(ImagePrediction {
        id: id.to_string(),
        predicted: reported_score(&aggregated, mode),
        mos_stereo: record.mos_stereo,
        patches: quads.len(),
    })
}

/// Scores every test image (tile, forward, aggregate) and correlates the
/// reported qualities against the stereo MOS. Predictions come back sorted
/// by sample id regardless of `threads`, which only parallelizes the
/// per-image work.
pub fn evaluate(
    net: &MultiScoreNet,
    manifest: &DatasetManifest,
    test_ids: &[String],
    mode: AblationMode,
    threads: usize,
) -> Result<(MetricTriple, Vec<ImagePrediction>)> {
    if test_ids.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    let mut ids: Vec<String> = test_ids.to_vec();
    ids.sort();

    let predictions = if threads <= 1 {
        let mut out = Vec::with_capacity(ids.len());
        for id in &ids {
            out.push(evaluate_one(net, manifest, id, mode)?);
        }
        out
    } else {
        evaluate_parallel(net, manifest, &ids, mode, threads)?
    };

    let predicted: Vec<f64> = predictions.iter().map(|p| p.predicted).collect();
    let subjective: Vec<f64> = predictions.iter().map(|p| p.mos_stereo).collect();
    let metrics = metric_triple(&predicted, &subjective)?;
    Ok((metrics, predictions))
}

fn evaluate_parallel(
    net: &MultiScoreNet,
    manifest: &DatasetManifest,
    ids: &[String],
    mode: AblationMode,
    threads: usize,
) -> Result<Vec<ImagePrediction>> {
    let exported = net.export_parameters();
    let workers = threads.min(ids.len());
    let chunk_size = ids.len().div_ceil(workers);
    let chunks: Vec<&[String]> = ids.chunks(chunk_size).collect();
    let mut results: Vec<Vec<ImagePrediction>> = Vec::new();
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for chunk in &chunks {
            let exported = &exported;
            let handle = scope.spawn(move || -> Result<Vec<ImagePrediction>> {
                let mut local = MultiScoreNet::build(0);
                local.import_parameters(exported)?;
                chunk
                    .iter()
                    .map(|id| evaluate_one(&local, manifest, id, mode))
                    .collect()
            });
            handles.push(handle);
        }
        for handle in handles {
            results.push(handle.join().expect("evaluation thread panicked")?);
        }
        Ok(())
    })?;
    Ok(results.into_iter().flatten().collect())
}

/// Correlates an externally produced (id, predicted, mos) table; the
/// plumbing path behind prediction-file evaluation.
pub fn evaluate_prediction_pairs(pairs: &[(String, f64, f64)]) -> Result<MetricTriple> {
    if pairs.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    let predicted: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let subjective: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    Ok(metric_triple(&predicted, &subjective)?)
}

/// Everything a finished training run leaves on disk.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub partition: String,
    pub repeat_index: u32,
    pub epoch_losses: Vec<f64>,
    pub metrics: MetricTriple,
    pub n_test: usize,
    pub directory: Option<PathBuf>,
}

fn derive_seed(seed: u64, repeat: u32) -> u64 {
    seed.wrapping_add((repeat as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn write_run_record(
    dir: &Path,
    config: &TrainConfig,
    partition: &str,
    repeat: u32,
    split: Option<(&SplitPlan, &DatasetManifest)>,
    epoch_losses: &[f64],
    net: &MultiScoreNet,
    report: &EvalReport,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io {
            path: path.clone(),
            source,
        }
    };

    let config_path = dir.join("config.txt");
    let mut cfg = String::new();
    cfg.push_str(&format!("ablation={}\n", config.ablation.as_str()));
    cfg.push_str(&format!("batch_size={}\n", config.sgd.batch_size));
    cfg.push_str(&format!("epochs={}\n", config.epochs));
    cfg.push_str(&format!("learning_rate={}\n", config.sgd.learning_rate));
    cfg.push_str(&format!(
        "loss_weights={},{},{},{}\n",
        config.loss_weights.global,
        config.loss_weights.stereo,
        config.loss_weights.left,
        config.loss_weights.right
    ));
    cfg.push_str(&format!("momentum={}\n", config.sgd.momentum));
    cfg.push_str(&format!("partition={partition}\n"));
    cfg.push_str(&format!("repeat={repeat}\n"));
    cfg.push_str(&format!("seed={}\n", config.seed));
    cfg.push_str(&format!("weight_decay={}\n", config.sgd.weight_decay));
    std::fs::write(&config_path, cfg).map_err(io_err(&config_path))?;

    if let Some((plan, manifest)) = split {
        write_split_csv(plan, manifest, &dir.join("split.csv"))?;
    }

    let loss_path = dir.join("loss.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&loss_path).map_err(io_err(&loss_path))?);
    writeln!(w, "epoch,mean_loss").map_err(io_err(&loss_path))?;
    for (epoch, loss) in epoch_losses.iter().enumerate() {
        writeln!(w, "{epoch},{loss}").map_err(io_err(&loss_path))?;
    }
    w.flush().map_err(io_err(&loss_path))?;

    save_checkpoint(net, &dir.join("model.msqa"))?;
    report.write_csv(&dir.join("report.csv"))?;
    Ok(())
}

/// The partition protocol: `repeats` independent scene-disjoint splits at
/// the given fraction, one train+evaluate per repeat, reported per repeat
/// and as the arithmetic mean.
pub fn run_protocol(
    manifest: &DatasetManifest,
    fraction: TrainFraction,
    repeats: u32,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(EvalReport, Vec<RunRecord>)> {
    if repeats == 0 {
        return Err(HarnessError::EmptyTestSet);
    }
    let mut rows = Vec::with_capacity(repeats as usize);
    let mut records = Vec::with_capacity(repeats as usize);
    for repeat in 0..repeats {
        let plan = make_split(manifest, fraction, repeat, config.seed)?;
        let repeat_config = TrainConfig {
            seed: derive_seed(config.seed, repeat),
            ..*config
        };
        let (net, epoch_losses) = train(manifest, &plan.train_ids, &repeat_config)?;
        let (metrics, predictions) = evaluate(&net, manifest, &plan.test_ids, config.ablation, 1)?;
        let row = EvalRow {
            repeat,
            n: predictions.len(),
            metrics,
        };
        let repeat_dir = out_dir.map(|d| d.join(format!("repeat_{repeat:02}")));
        if let Some(dir) = &repeat_dir {
            let single = EvalReport::new(fraction.as_str(), vec![row.clone()]);
            write_run_record(
                dir,
                &repeat_config,
                fraction.as_str(),
                repeat,
                Some((&plan, manifest)),
                &epoch_losses,
                &net,
                &single,
            )?;
        }
        records.push(RunRecord {
            partition: fraction.as_str().to_string(),
            repeat_index: repeat,
            epoch_losses,
            metrics,
            n_test: row.n,
            directory: repeat_dir,
        });
        rows.push(row);
    }
    let report = EvalReport::new(fraction.as_str(), rows);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        report.write_csv(&dir.join("report.csv"))?;
    }
    Ok((report, records))
}

/// Trains on the entirety of one database and evaluates on the entirety of
/// another. Refuses to run a database against itself.
pub fn cross_database(
    train_manifest: &DatasetManifest,
    test_manifest: &DatasetManifest,
    config: &TrainConfig,
    threads: usize,
    out_dir: Option<&Path>,
) -> Result<(EvalReport, Vec<ImagePrediction>)> {
    if train_manifest.name == test_manifest.name {
        return Err(HarnessError::SameManifest {
            name: train_manifest.name.clone(),
        });
    }
    let train_ids: Vec<String> = train_manifest.samples.iter().map(|s| s.id.clone()).collect();
    let test_ids: Vec<String> = test_manifest.samples.iter().map(|s| s.id.clone()).collect();
    let (net, epoch_losses) = train(train_manifest, &train_ids, config)?;
    let (metrics, predictions) = evaluate(&net, test_manifest, &test_ids, config.ablation, threads)?;
    let report = EvalReport::new(
        "cross",
        vec![EvalRow {
            repeat: 0,
            n: predictions.len(),
            metrics,
        }],
    );
    if let Some(dir) = out_dir {
        write_run_record(dir, config, "cross", 0, None, &epoch_losses, &net, &report)?;
    }
    Ok((report, predictions))
}

/// Scores one stereo pair with a saved checkpoint: tiles, forwards every
/// patch, and averages the four score channels. Returns the aggregated
/// quad and the patch count.
pub fn score_image(
    checkpoint: &Path,
    left_path: &Path,
    right_path: &Path,
) -> Result<(ScoreQuad, usize)> {
    let net = load_checkpoint(checkpoint)?;
    score_image_with(&net, left_path, right_path)
}

pub fn score_image_with(
    net: &MultiScoreNet,
    left_path: &Path,
    right_path: &Path,
) -> Result<(ScoreQuad, usize)> {
    let left = data::decode_ppm(left_path)?;
    let right = data::decode_ppm(right_path)?;
    if left.width != right.width || left.height != right.height {
        return Err(DataError::EyeDimMismatch {
            id: left_path.display().to_string(),
            left_w: left.width,
            left_h: left.height,
            right_w: right.width,
            right_h: right.height,
        }
        .into());
    }
    let record = data::SampleRecord {
        id: left_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into()),
        left_path: left_path.to_path_buf(),
        right_path: right_path.to_path_buf(),
        mos_left: 50.0,
        mos_right: 50.0,
        mos_stereo: 50.0,
        reference_id: "adhoc".into(),
        distortion_type: data::DistortionType::Synthetic,
        level_left: 0.0,
        level_right: 0.0,
    };
    let sample = StereoSample {
        record,
        left,
        right,
    };
    let batch = tile_patches(&sample)?;
    let quads = score_patch_batch(net, &batch)?;
    let aggregated = data::aggregate_score(&quads)?;
    Ok((aggregated, quads.len()))
}
