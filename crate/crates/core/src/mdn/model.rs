use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mixture::{activate_head, MixtureParams, Normalizer};
use super::nll::nll_loss;
use super::MdnError;
use crate::neuralcore::{
    bilstm_window_last, Checkpoint, Dense, EpochRecord, Graph, Lstm, NodeId, ParamStore,
    PlateauScheduler, Tensor,
};
use crate::seeding::rng_for;

/// Shape of a per-camera network: windowed BiLSTM encoder plus mixture head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdnArch {
    pub feature_dim: usize,
    pub hidden: usize,
    pub window: usize,
    pub components: usize,
}

impl Default for MdnArch {
    fn default() -> Self {
        Self {
            feature_dim: 32,
            hidden: 64,
            window: 5,
            components: 5,
        }
    }
}

impl MdnArch {
    pub fn head_width(&self) -> usize {
        8 * self.components
    }

    fn validate(&self) -> Result<(), MdnError> {
        if self.feature_dim == 0 || self.hidden == 0 || self.window == 0 || self.components == 0 {
            return Err(MdnError::Invalid(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdnTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub decay: f64,
    pub normalizer: Normalizer,
}

impl Default for MdnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            patience: 8,
            decay: 0.7,
            normalizer: Normalizer::SixDim,
        }
    }
}

/// One camera's feature rows with the relative pose each row should predict.
#[derive(Debug, Clone, Copy)]
pub struct SeriesRef<'a> {
    pub features: &'a Array2<f64>,
    pub targets: &'a [[f64; 6]],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MdnMeta {
    camera: String,
    arch: MdnArch,
    normalizer: Normalizer,
}

/// Per-camera mixture density network. Cameras never share parameters.
#[derive(Debug, Clone)]
pub struct CameraMdn {
    pub camera: String,
    pub arch: MdnArch,
    pub normalizer: Normalizer,
    store: ParamStore,
}

/// Inputs for the window ending at each requested row, oldest first. Rows
/// before the start of the sequence repeat the first row.
pub fn window_batch(features: &Array2<f64>, rows: &[usize], window: usize) -> Vec<Tensor> {
    (0..window)
        .map(|k| {
            let lag = window - 1 - k;
            let mut x = Array2::zeros((rows.len(), features.ncols()));
            for (b, &t) in rows.iter().enumerate() {
                x.row_mut(b).assign(&features.row(t.saturating_sub(lag)));
            }
            x
        })
        .collect()
}

impl CameraMdn {
    fn layers(arch: &MdnArch) -> (Lstm, Lstm, Dense) {
        (
            Lstm::new("fwd", arch.feature_dim, arch.hidden),
            Lstm::new("bwd", arch.feature_dim, arch.hidden),
            Dense::new("head", 2 * arch.hidden, arch.head_width()),
        )
    }

    pub fn new(camera: &str, arch: MdnArch, normalizer: Normalizer, seed: u64) -> Result<Self, MdnError> {
        arch.validate()?;
        let mut rng = rng_for(seed, 0x6d64_6e69);
        let mut store = ParamStore::new();
        let (fwd, bwd, head) = Self::layers(&arch);
        fwd.init(&mut store, &mut rng)?;
        bwd.init(&mut store, &mut rng)?;
        head.init(&mut store, &mut rng)?;
        Ok(Self {
            camera: camera.to_string(),
            arch,
            normalizer,
            store,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Starts every component at the target mean with a spread matching the
    /// targets' average per-axis std-dev.
    pub fn init_head_bias(&mut self, targets: &[[f64; 6]]) {
        if targets.is_empty() {
            return;
        }
        let n = targets.len() as f64;
        let mean: [f64; 6] = std::array::from_fn(|k| targets.iter().map(|t| t[k]).sum::<f64>() / n);
        let var = targets
            .iter()
            .map(|t| (0..6).map(|k| (t[k] - mean[k]).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (6.0 * n);
        let m = self.arch.components;
        let bias = self.store.get_mut("head.b").expect("head bias");
        for i in 0..m {
            for k in 0..6 {
                bias[[0, m + 6 * i + k]] = mean[k];
            }
            bias[[0, 7 * m + i]] = 0.5 * var.max(1e-12).ln();
        }
    }

    /// Raw B × 8M head output for a batch of windows, using parameters from `store`.
    pub fn forward_with(&self, g: &mut Graph, store: &ParamStore, window: &[Tensor]) -> Result<NodeId, MdnError> {
        let (fwd, bwd, head) = Self::layers(&self.arch);
        let f = fwd.bind(g, store)?;
        let b = bwd.bind(g, store)?;
        let h = head.bind(g, store)?;
        let inputs: Vec<NodeId> = window.iter().map(|x| g.constant(x.clone())).collect();
        let encoded = bilstm_window_last(g, &inputs, &f, &b)?;
        Ok(h.forward(g, encoded)?)
    }

    /// Mean NLL of `targets` (B × 6) for a batch of windows.
    pub fn loss_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        window: &[Tensor],
        targets: &Tensor,
    ) -> Result<NodeId, MdnError> {
        let raw = self.forward_with(g, store, window)?;
        let t = g.constant(targets.clone());
        Ok(nll_loss(g, raw, t, self.normalizer)?)
    }

    /// Mixture for every row of `features`.
    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<MixtureParams>, MdnError> {
        if features.ncols() != self.arch.feature_dim {
            return Err(MdnError::Invalid(format!(
                "camera {} expects {} features, got {}",
                self.camera,
                self.arch.feature_dim,
                features.ncols()
            )));
        }
        let mut out = Vec::with_capacity(features.nrows());
        let rows: Vec<usize> = (0..features.nrows()).collect();
        for chunk in rows.chunks(512) {
            let mut g = Graph::new();
            let raw = self.forward_with(&mut g, &self.store, &window_batch(features, chunk, self.arch.window))?;
            for row in g.value(raw).rows() {
                out.push(activate_head(row.as_slice().expect("contiguous"))?);
            }
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = MdnMeta {
            camera: self.camera.clone(),
            arch: self.arch,
            normalizer: self.normalizer,
        };
        Checkpoint::from_store(&self.store, &serde_json::to_string(&meta).expect("meta serializes"))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, MdnError> {
        let meta: MdnMeta = serde_json::from_str(&ckpt.meta)
            .map_err(|e| MdnError::Invalid(format!("checkpoint metadata: {e}")))?;
        let mut model = Self::new(&meta.camera, meta.arch, meta.normalizer, 0)?;
        ckpt.restore_into(&mut model.store)?;
        Ok(model)
    }
}

fn mean_loss(model: &CameraMdn, store: &ParamStore, data: &[SeriesRef], batch: usize) -> Result<f64, MdnError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for series in data {
        let rows: Vec<usize> = (0..series.targets.len()).collect();
        for chunk in rows.chunks(batch.max(256)) {
            let mut g = Graph::new();
            let window = window_batch(series.features, chunk, model.arch.window);
            let targets = target_batch(series.targets, chunk);
            let l = model.loss_with(&mut g, store, &window, &targets)?;
            total += g.scalar(l) * chunk.len() as f64;
            count += chunk.len();
        }
    }
    Ok(total / count.max(1) as f64)
}

fn target_batch(targets: &[[f64; 6]], rows: &[usize]) -> Tensor {
    Array2::from_shape_fn((rows.len(), 6), |(b, k)| targets[rows[b]][k])
}

fn check_series(arch: &MdnArch, data: &[SeriesRef]) -> Result<(), MdnError> {
    for s in data {
        if s.features.nrows() != s.targets.len() || s.features.ncols() != arch.feature_dim {
            return Err(MdnError::Invalid(format!(
                "series of shape {:?} with {} targets does not fit feature width {}",
                s.features.dim(),
                s.targets.len(),
                arch.feature_dim
            )));
        }
    }
    Ok(())
}

/// Trains one camera's network on windowed features with the mixture NLL.
///
/// Returns the parameters with the lowest validation loss (training loss when
/// `val` is empty) and one log record per epoch.
pub fn train_mdn(
    camera: &str,
    arch: MdnArch,
    cfg: &MdnTrainConfig,
    train: &[SeriesRef],
    val: &[SeriesRef],
    seed: u64,
) -> Result<(CameraMdn, Vec<EpochRecord>), MdnError> {
    check_series(&arch, train)?;
    check_series(&arch, val)?;
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(MdnError::Invalid("batch size and learning rate must be positive".into()));
    }
    let index: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .flat_map(|(s, series)| (0..series.targets.len()).map(move |t| (s, t)))
        .collect();
    if index.is_empty() {
        return Err(MdnError::Invalid("empty training set".into()));
    }
    let mut model = CameraMdn::new(camera, arch, cfg.normalizer, seed)?;
    let all_targets: Vec<[f64; 6]> = train.iter().flat_map(|s| s.targets.iter().copied()).collect();
    model.init_head_bias(&all_targets);

    let mut rng = rng_for(seed, 0x7368_7566);
    let mut order = index;
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.patience, cfg.decay);
    let mut best: Option<(f64, ParamStore)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    let d = arch.feature_dim;
    for epoch in 1..=cfg.epochs {
        let lr = sched.lr();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let window: Vec<Tensor> = (0..arch.window)
                .map(|k| {
                    let lag = arch.window - 1 - k;
                    let mut x = Array2::zeros((chunk.len(), d));
                    for (b, &(s, t)) in chunk.iter().enumerate() {
                        x.row_mut(b).assign(&train[s].features.slice(s![t.saturating_sub(lag), ..]));
                    }
                    x
                })
                .collect();
            let targets = Array2::from_shape_fn((chunk.len(), 6), |(b, k)| {
                let (s, t) = chunk[b];
                train[s].targets[t][k]
            });
            let mut g = Graph::new();
            let loss = model.loss_with(&mut g, &model.store, &window, &targets)?;
            total += g.scalar(loss) * chunk.len() as f64;
            let grads = g.backward(loss)?.for_store(&model.store);
            model.store.adam_step(&grads, lr)?;
        }
        let train_loss = total / order.len() as f64;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            mean_loss(&model, &model.store, val, cfg.batch_size)?
        };
        if !val_loss.is_finite() {
            return Err(MdnError::Nn(crate::neuralcore::NnError::Diverged(format!(
                "camera {camera} validation loss {val_loss} at epoch {epoch}"
            ))));
        }
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.store.clone()));
        }
        sched.observe(val_loss);
    }
    if let Some((_, store)) = best {
        model.store = store;
    }
    Ok((model, log))
}
