use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::geometry::RelativePose6;
use crate::mdn::MixtureParams;
use crate::neuralcore::{Checkpoint, Dense, Graph, Lstm, LstmState, NnError, NodeId, ParamStore, Tensor};
use crate::seeding::rng_for;

/// Weight on squared rotation error relative to squared translation error.
pub const ROTATION_WEIGHT: f64 = 100.0;

const NORM_MEAN: &str = "norm.mean";
const NORM_STD: &str = "norm.std";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionArch {
    pub cameras: usize,
    pub components: usize,
    pub latent: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for FusionArch {
    fn default() -> Self {
        Self {
            cameras: 6,
            components: 5,
            latent: 64,
            hidden: 64,
            dropout: 0.1,
        }
    }
}

impl FusionArch {
    /// Width of one step's input: every camera's flattened mixture.
    pub fn input_width(&self) -> usize {
        self.cameras * 8 * self.components
    }

    fn validate(&self) -> Result<(), FusionError> {
        if self.cameras == 0 || self.components == 0 || self.latent == 0 || self.hidden == 0 {
            return Err(FusionError::Invalid(format!("degenerate architecture {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(FusionError::Invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Concatenates per-camera mixtures step by step, cameras in the given order.
///
/// Each block is `[alphas | means | sigmas]` as in [`MixtureParams::to_flat`].
pub fn fusion_inputs(per_camera: &[Vec<MixtureParams>]) -> Result<Array2<f64>, FusionError> {
    let first = per_camera
        .first()
        .ok_or_else(|| FusionError::Invalid("no cameras".into()))?;
    let steps = first.len();
    let m = first
        .first()
        .map(|p| p.components())
        .ok_or_else(|| FusionError::Invalid("empty mixture sequence".into()))?;
    let block = 8 * m;
    let mut out = Array2::zeros((steps, per_camera.len() * block));
    for (c, seq) in per_camera.iter().enumerate() {
        if seq.len() != steps {
            return Err(FusionError::Invalid(format!(
                "camera {c} has {} steps, expected {steps}",
                seq.len()
            )));
        }
        for (t, p) in seq.iter().enumerate() {
            if p.components() != m {
                return Err(FusionError::Invalid(format!(
                    "camera {c} step {t} has {} components, expected {m}",
                    p.components()
                )));
            }
            for (j, v) in p.to_flat().into_iter().enumerate() {
                out[[t, c * block + j]] = v;
            }
        }
    }
    Ok(out)
}

/// `(1/(T B)) Σ_t Σ_b ‖Δρ‖² + λ ‖Δφ‖²` over per-step B × 6 predictions.
pub fn fusion_loss(
    g: &mut Graph,
    preds: &[NodeId],
    targets: &[Tensor],
    rotation_weight: f64,
) -> Result<NodeId, NnError> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(NnError::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let batch = targets[0].nrows();
    let w = [1.0, 1.0, 1.0, rotation_weight, rotation_weight, rotation_weight];
    let mut total: Option<NodeId> = None;
    for (&p, y) in preds.iter().zip(targets) {
        if g.value(p).dim() != y.dim() || y.ncols() != 6 || y.nrows() != batch {
            return Err(NnError::Shape(format!(
                "prediction {:?} vs target {:?}",
                g.value(p).dim(),
                y.dim()
            )));
        }
        let y = g.constant(y.clone());
        let d = g.sub(p, y)?;
        let sq = g.square(d);
        let weighted = g.scale_cols(sq, &w)?;
        let s = g.sum(weighted);
        total = Some(match total {
            Some(acc) => g.add(acc, s)?,
            None => s,
        });
    }
    let total = total.expect("nonempty");
    Ok(g.scale(total, 1.0 / (preds.len() * batch) as f64))
}

/// Input MLP, LSTM and output layer, plus the input standardization it was trained with.
#[derive(Debug, Clone)]
pub struct FusionNet {
    pub arch: FusionArch,
    store: ParamStore,
}

impl FusionNet {
    fn layers(arch: &FusionArch) -> (Dense, Dense, Lstm, Dense) {
        (
            Dense::new("in1", arch.input_width(), arch.latent),
            Dense::new("in2", arch.latent, arch.latent),
            Lstm::new("rnn", arch.latent, arch.hidden),
            Dense::new("out", arch.hidden, 6),
        )
    }

    pub fn new(arch: FusionArch, seed: u64) -> Result<Self, FusionError> {
        arch.validate()?;
        let mut rng = rng_for(seed, 0x6675_736e);
        let mut store = ParamStore::new();
        let (in1, in2, rnn, out) = Self::layers(&arch);
        in1.init(&mut store, &mut rng)?;
        in2.init(&mut store, &mut rng)?;
        rnn.init(&mut store, &mut rng)?;
        out.init(&mut store, &mut rng)?;
        let w = arch.input_width();
        store.add(NORM_MEAN, Array2::zeros((1, w)))?;
        store.add(NORM_STD, Array2::ones((1, w)))?;
        Ok(Self { arch, store })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Sets the per-column standardization from training inputs. Constant
    /// columns keep unit scale.
    pub fn fit_normalization(&mut self, rows: &[&Array2<f64>]) -> Result<(), FusionError> {
        let w = self.arch.input_width();
        let n: usize = rows.iter().map(|r| r.nrows()).sum();
        if n == 0 {
            return Err(FusionError::Invalid("no rows to standardize".into()));
        }
        let mut sum = Array1::<f64>::zeros(w);
        for r in rows {
            if r.ncols() != w {
                return Err(FusionError::Invalid(format!("input width {} != {w}", r.ncols())));
            }
            sum += &r.sum_axis(ndarray::Axis(0));
        }
        let mean = sum / n as f64;
        let mut var = Array1::<f64>::zeros(w);
        for r in rows {
            for row in r.rows() {
                var.zip_mut_with(&(&row - &mean), |v, d| *v += d * d);
            }
        }
        let std = var.mapv(|v| {
            let s = (v / n as f64).sqrt();
            if s > 1e-8 {
                s
            } else {
                1.0
            }
        });
        self.store.get_mut(NORM_MEAN).expect("mean").row_mut(0).assign(&mean);
        self.store.get_mut(NORM_STD).expect("std").row_mut(0).assign(&std);
        Ok(())
    }

    /// Sets the output bias so an untrained net predicts `mean`.
    pub fn init_output_bias(&mut self, mean: &[f64; 6]) {
        let b = self.store.get_mut("out.b").expect("output bias");
        for k in 0..6 {
            b[[0, k]] = mean[k];
        }
    }

    pub fn standardize(&self, inputs: &Array2<f64>) -> Result<Array2<f64>, FusionError> {
        let w = self.arch.input_width();
        if inputs.ncols() != w {
            return Err(FusionError::Nn(NnError::Shape(format!(
                "fusion input width {} != {w}",
                inputs.ncols()
            ))));
        }
        let mean = self.store.get(NORM_MEAN).expect("mean");
        let std = self.store.get(NORM_STD).expect("std");
        Ok((inputs - mean) / std)
    }

    /// One B × 6 prediction per step. `steps` are standardized B × W inputs;
    /// the recurrent state starts at zero.
    pub fn forward_with<R: Rng>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        steps: &[Tensor],
        training: bool,
        rng: &mut R,
    ) -> Result<Vec<NodeId>, FusionError> {
        let first = steps
            .first()
            .ok_or_else(|| FusionError::Invalid("empty sequence".into()))?;
        let (in1, in2, rnn, out) = Self::layers(&self.arch);
        let in1 = in1.bind(g, store)?;
        let in2 = in2.bind(g, store)?;
        let rnn_p = rnn.bind(g, store)?;
        let out = out.bind(g, store)?;
        let mut state = LstmState::zeros(g, first.nrows(), self.arch.hidden);
        let mut preds = Vec::with_capacity(steps.len());
        for x in steps {
            if x.ncols() != self.arch.input_width() || x.nrows() != first.nrows() {
                return Err(FusionError::Nn(NnError::Shape(format!(
                    "fusion step {:?}, expected (_, {})",
                    x.dim(),
                    self.arch.input_width()
                ))));
            }
            let x = g.constant(x.clone());
            let p = in1.forward(g, x)?;
            let p = g.relu(p);
            let p = g.dropout(p, self.arch.dropout, training, rng)?;
            let q = in2.forward(g, p)?;
            let q = g.relu(q);
            let q = g.dropout(q, self.arch.dropout, training, rng)?;
            state = crate::neuralcore::lstm_cell(g, q, state, &rnn_p)?;
            preds.push(out.forward(g, state.hidden)?);
        }
        Ok(preds)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(&self.store, &serde_json::to_string(&self.arch).expect("arch serializes"))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, FusionError> {
        let arch: FusionArch = serde_json::from_str(&ckpt.meta)
            .map_err(|e| FusionError::Invalid(format!("checkpoint metadata: {e}")))?;
        let mut net = Self::new(arch, 0)?;
        ckpt.restore_into(&mut net.store)?;
        Ok(net)
    }
}

/// Fused relative pose for every row of raw (unstandardized) `inputs`, dropout off.
pub fn fuse_forward(net: &FusionNet, inputs: &Array2<f64>) -> Result<Vec<RelativePose6>, FusionError> {
    if inputs.nrows() == 0 {
        return Err(FusionError::Invalid("empty sequence".into()));
    }
    let x = net.standardize(inputs)?;
    let steps: Vec<Tensor> = x.rows().into_iter().map(|r| r.to_owned().insert_axis(ndarray::Axis(0))).collect();
    let mut g = Graph::new();
    let mut rng = rng_for(0, 0);
    let preds = net.forward_with(&mut g, net.store(), &steps, false, &mut rng)?;
    preds
        .into_iter()
        .map(|p| {
            let v = g.value(p);
            RelativePose6::from_array(std::array::from_fn(|k| v[[0, k]]))
                .map_err(|e| FusionError::Nn(NnError::Diverged(e.to_string())))
        })
        .collect()
}
