use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{fuse_forward, fusion_inputs, fusion_loss, FusionArch, FusionNet, ROTATION_WEIGHT};
use super::FusionError;
use crate::geometry::{accumulate, Trajectory};
use crate::mdn::CameraMdn;
use crate::neuralcore::{EpochRecord, Graph, NnError, ParamStore, PlateauScheduler, Tensor};
use crate::seeding::rng_for;
use crate::simulator::SimScenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionTrainConfig {
    pub epochs: usize,
    /// Sequences per batch.
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub decay: f64,
    pub rotation_weight: f64,
    /// Per step, probability of blanking one random camera's block.
    pub camera_dropout: f64,
    /// Training sequences are cut into chunks of this many steps, each
    /// starting from a zero recurrent state. Zero keeps whole sequences.
    pub chunk_len: usize,
}

impl Default for FusionTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            lr: 1e-3,
            patience: 8,
            decay: 0.7,
            rotation_weight: ROTATION_WEIGHT,
            camera_dropout: 0.1,
            chunk_len: 20,
        }
    }
}

/// One sequence of concatenated mixtures (T × W) with its true relative poses.
#[derive(Debug, Clone, Copy)]
pub struct FusionSeries<'a> {
    pub inputs: &'a Array2<f64>,
    pub targets: &'a [[f64; 6]],
}

fn check_series(arch: &FusionArch, data: &[FusionSeries]) -> Result<(), FusionError> {
    for s in data {
        if s.inputs.nrows() == 0 || s.inputs.nrows() != s.targets.len() || s.inputs.ncols() != arch.input_width() {
            return Err(FusionError::Invalid(format!(
                "series of shape {:?} with {} targets does not fit input width {}",
                s.inputs.dim(),
                s.targets.len(),
                arch.input_width()
            )));
        }
    }
    Ok(())
}

/// Step-major batch of equal-length sequences: one B × W tensor and one B × 6 target per step.
fn batch_steps(net: &FusionNet, data: &[FusionSeries], members: &[usize]) -> Result<(Vec<Tensor>, Vec<Tensor>), FusionError> {
    let steps = data[members[0]].targets.len();
    let w = net.arch.input_width();
    let standardized: Vec<Array2<f64>> = members
        .iter()
        .map(|&i| net.standardize(data[i].inputs))
        .collect::<Result<_, _>>()?;
    let inputs = (0..steps)
        .map(|t| Array2::from_shape_fn((members.len(), w), |(b, k)| standardized[b][[t, k]]))
        .collect();
    let targets = (0..steps)
        .map(|t| Array2::from_shape_fn((members.len(), 6), |(b, k)| data[members[b]].targets[t][k]))
        .collect();
    Ok((inputs, targets))
}

/// Zeroes one random camera block (the training mean after standardization).
fn drop_cameras<R: Rng>(steps: &mut [Tensor], arch: &FusionArch, p: f64, rng: &mut R) {
    if p <= 0.0 {
        return;
    }
    let block = 8 * arch.components;
    for x in steps.iter_mut() {
        for mut row in x.rows_mut() {
            if rng.random::<f64>() < p {
                let c = rng.random_range(0..arch.cameras);
                row.slice_mut(ndarray::s![c * block..(c + 1) * block]).fill(0.0);
            }
        }
    }
}

/// Splits each series into consecutive pieces of at most `len` steps.
fn chunk_series(data: &[FusionSeries], len: usize) -> Vec<(Array2<f64>, Vec<[f64; 6]>)> {
    let mut out = Vec::new();
    for s in data {
        let n = s.targets.len();
        let step = if len == 0 { n } else { len };
        let mut start = 0;
        while start < n {
            let end = (start + step).min(n);
            out.push((
                s.inputs.slice(ndarray::s![start..end, ..]).to_owned(),
                s.targets[start..end].to_vec(),
            ));
            start = end;
        }
    }
    out
}

/// Groups sequence indices into batches of equal length.
fn batches(data: &[FusionSeries], order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut sorted = order.to_vec();
    sorted.sort_by_key(|&i| data[i].targets.len());
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let len = data[sorted[i]].targets.len();
        let mut j = i;
        while j < sorted.len() && data[sorted[j]].targets.len() == len {
            j += 1;
        }
        out.extend(sorted[i..j].chunks(size).map(<[usize]>::to_vec));
        i = j;
    }
    out
}

fn mean_loss(net: &FusionNet, store: &ParamStore, data: &[FusionSeries], weight: f64) -> Result<f64, FusionError> {
    let mut total = 0.0;
    let mut count = 0usize;
    let all: Vec<usize> = (0..data.len()).collect();
    let mut rng = rng_for(0, 0);
    for members in batches(data, &all, 16) {
        let (x, y) = batch_steps(net, data, &members)?;
        let mut g = Graph::new();
        let preds = net.forward_with(&mut g, store, &x, false, &mut rng)?;
        let l = fusion_loss(&mut g, &preds, &y, weight)?;
        let n = members.len() * y.len();
        total += g.scalar(l) * n as f64;
        count += n;
    }
    Ok(total / count.max(1) as f64)
}

/// Trains the fusion network on whole sequences with Adam and plateau decay.
///
/// Returns the parameters with the lowest validation loss (training loss when
/// `val` is empty) and one log record per epoch.
pub fn train_fusion(
    arch: FusionArch,
    cfg: &FusionTrainConfig,
    train: &[FusionSeries],
    val: &[FusionSeries],
    seed: u64,
) -> Result<(FusionNet, Vec<EpochRecord>), FusionError> {
    check_series(&arch, train)?;
    check_series(&arch, val)?;
    if train.is_empty() {
        return Err(FusionError::Invalid("empty training set".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(cfg.rotation_weight > 0.0) {
        return Err(FusionError::Invalid(
            "batch size, learning rate and rotation weight must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.camera_dropout) {
        return Err(FusionError::Invalid(format!("camera dropout {} outside [0, 1]", cfg.camera_dropout)));
    }
    let mut net = FusionNet::new(arch, seed)?;
    let inputs: Vec<&Array2<f64>> = train.iter().map(|s| s.inputs).collect();
    net.fit_normalization(&inputs)?;
    let n: usize = train.iter().map(|s| s.targets.len()).sum();
    let mean: [f64; 6] =
        std::array::from_fn(|k| train.iter().flat_map(|s| s.targets.iter()).map(|t| t[k]).sum::<f64>() / n as f64);
    net.init_output_bias(&mean);

    let chunks = chunk_series(train, cfg.chunk_len);
    let pieces: Vec<FusionSeries> = chunks
        .iter()
        .map(|(x, y)| FusionSeries {
            inputs: x,
            targets: y,
        })
        .collect();
    let train = &pieces[..];
    let mut rng = rng_for(seed, 0x6675_7472);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.patience, cfg.decay);
    let mut best: Option<(f64, ParamStore)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let lr = sched.lr();
        order.shuffle(&mut rng);
        let mut plan = batches(train, &order, cfg.batch_size);
        plan.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for members in plan {
            let (mut x, y) = batch_steps(&net, train, &members)?;
            drop_cameras(&mut x, &arch, cfg.camera_dropout, &mut rng);
            let mut g = Graph::new();
            let preds = net.forward_with(&mut g, net.store(), &x, true, &mut rng)?;
            let loss = fusion_loss(&mut g, &preds, &y, cfg.rotation_weight)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(NnError::Diverged(format!("fusion training loss {value} at epoch {epoch}")).into());
            }
            let k = members.len() * y.len();
            total += value * k as f64;
            count += k;
            let grads = g.backward(loss)?.for_store(net.store());
            net.store_mut().adam_step(&grads, lr)?;
        }
        let train_loss = total / count as f64;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            mean_loss(&net, net.store(), val, cfg.rotation_weight)?
        };
        if !val_loss.is_finite() {
            return Err(NnError::Diverged(format!("fusion validation loss {val_loss} at epoch {epoch}")).into());
        }
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, net.store().clone()));
        }
        sched.observe(val_loss);
    }
    if let Some((_, store)) = best {
        *net.store_mut() = store;
    }
    Ok((net, log))
}

/// Per-camera mixtures for a scenario, in the order of `heads`.
pub fn scenario_mixtures(
    scenario: &SimScenario,
    heads: &[CameraMdn],
) -> Result<Vec<Vec<crate::mdn::MixtureParams>>, FusionError> {
    heads
        .iter()
        .map(|h| {
            let seq = scenario
                .sequences
                .iter()
                .find(|s| s.camera == h.camera)
                .ok_or_else(|| FusionError::Invalid(format!("scenario has no camera {}", h.camera)))?;
            Ok(h.predict(&seq.features)?)
        })
        .collect()
}

/// Fused trajectory for a scenario, starting from its first ground-truth pose.
pub fn predict_sequence(scenario: &SimScenario, heads: &[CameraMdn], net: &FusionNet) -> Result<Trajectory, FusionError> {
    let inputs = fusion_inputs(&scenario_mixtures(scenario, heads)?)?;
    let rels = fuse_forward(net, &inputs)?;
    let start = scenario
        .trajectory
        .poses()
        .first()
        .ok_or_else(|| FusionError::Invalid("scenario has no poses".into()))?;
    accumulate(start, &rels)
        .with_timestamps(scenario.trajectory.timestamps().to_vec())
        .map_err(|e| FusionError::Invalid(e.to_string()))
}
