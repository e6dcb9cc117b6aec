use ndarray::Array2;
use rand::Rng;

use super::{Graph, NnError, NodeId, ParamStore, Tensor};

fn xavier_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

/// `x W + b` for a batch of row vectors.
pub fn dense(g: &mut Graph, x: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId, NnError> {
    let xw = g.matmul(x, weights)?;
    g.add_bias(xw, bias)
}

/// Parameter names for a fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub prefix: String,
    pub input: usize,
    pub output: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundDense {
    pub weights: NodeId,
    pub bias: NodeId,
}

impl Dense {
    pub fn new(prefix: &str, input: usize, output: usize) -> Self {
        Self {
            prefix: prefix.to_string(),
            input,
            output,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.prefix)
    }

    /// Xavier-uniform weights, zero bias.
    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<(), NnError> {
        store.add(&self.weight_name(), xavier_uniform(self.input, self.output, rng))?;
        store.add(&self.bias_name(), Array2::zeros((1, self.output)))
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> Result<BoundDense, NnError> {
        Ok(BoundDense {
            weights: g.param(store, &self.weight_name())?,
            bias: g.param(store, &self.bias_name())?,
        })
    }

    pub fn shapes(&self) -> Vec<(String, (usize, usize))> {
        vec![
            (self.weight_name(), (self.input, self.output)),
            (self.bias_name(), (1, self.output)),
        ]
    }
}

impl BoundDense {
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, NnError> {
        dense(g, x, self.weights, self.bias)
    }
}

/// Hidden and cell state of an LSTM, one row per batch entry.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub hidden: NodeId,
    pub cell: NodeId,
}

impl LstmState {
    pub fn zeros(g: &mut Graph, batch: usize, hidden: usize) -> Self {
        Self {
            hidden: g.constant(Array2::zeros((batch, hidden))),
            cell: g.constant(Array2::zeros((batch, hidden))),
        }
    }
}

/// LSTM layer parameters. Gate column order is input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLstm {
    pub wx: NodeId,
    pub wh: NodeId,
    pub bias: NodeId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            prefix: prefix.to_string(),
            input,
            hidden,
        }
    }

    fn names(&self) -> [String; 3] {
        [
            format!("{}.wx", self.prefix),
            format!("{}.wh", self.prefix),
            format!("{}.b", self.prefix),
        ]
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<(), NnError> {
        let [wx, wh, b] = self.names();
        let h4 = 4 * self.hidden;
        store.add(&wx, xavier_uniform(self.input, h4, rng))?;
        store.add(&wh, xavier_uniform(self.hidden, h4, rng))?;
        store.add(&b, Array2::zeros((1, h4)))
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> Result<BoundLstm, NnError> {
        let [wx, wh, b] = self.names();
        Ok(BoundLstm {
            wx: g.param(store, &wx)?,
            wh: g.param(store, &wh)?,
            bias: g.param(store, &b)?,
            hidden: self.hidden,
        })
    }

    pub fn shapes(&self) -> Vec<(String, (usize, usize))> {
        let [wx, wh, b] = self.names();
        let h4 = 4 * self.hidden;
        vec![
            (wx, (self.input, h4)),
            (wh, (self.hidden, h4)),
            (b, (1, h4)),
        ]
    }
}

/// One LSTM step: `i, f, o = sigmoid(.)`, `g = tanh(.)`, `c' = f c + i g`, `h' = o tanh(c')`.
pub fn lstm_cell(
    g: &mut Graph,
    x: NodeId,
    state: LstmState,
    params: &BoundLstm,
) -> Result<LstmState, NnError> {
    let h = params.hidden;
    let xw = g.matmul(x, params.wx)?;
    let hw = g.matmul(state.hidden, params.wh)?;
    let pre = g.add(xw, hw)?;
    let pre = g.add_bias(pre, params.bias)?;
    let i_pre = g.slice_cols(pre, 0, h)?;
    let f_pre = g.slice_cols(pre, h, 2 * h)?;
    let c_pre = g.slice_cols(pre, 2 * h, 3 * h)?;
    let o_pre = g.slice_cols(pre, 3 * h, 4 * h)?;
    let input_gate = g.sigmoid(i_pre);
    let forget_gate = g.sigmoid(f_pre);
    let candidate = g.tanh(c_pre);
    let output_gate = g.sigmoid(o_pre);
    let kept = g.mul(forget_gate, state.cell)?;
    let written = g.mul(input_gate, candidate)?;
    let cell = g.add(kept, written)?;
    let squashed = g.tanh(cell);
    let hidden = g.mul(output_gate, squashed)?;
    Ok(LstmState { hidden, cell })
}

fn check_window(window: &[NodeId]) -> Result<(), NnError> {
    if window.is_empty() {
        return Err(NnError::Shape("empty window".into()));
    }
    Ok(())
}

/// Bidirectional LSTM over a window of inputs, each state starting at zero.
///
/// Returns one `[forward, backward]` concatenation (width `2H`) per window position.
pub fn bilstm_window(
    g: &mut Graph,
    window: &[NodeId],
    forward: &BoundLstm,
    backward: &BoundLstm,
) -> Result<Vec<NodeId>, NnError> {
    check_window(window)?;
    let batch = g.value(window[0]).nrows();
    let mut state = LstmState::zeros(g, batch, forward.hidden);
    let mut fwd = Vec::with_capacity(window.len());
    for &x in window {
        state = lstm_cell(g, x, state, forward)?;
        fwd.push(state.hidden);
    }
    let mut state = LstmState::zeros(g, batch, backward.hidden);
    let mut bwd = vec![state.hidden; window.len()];
    for (k, &x) in window.iter().enumerate().rev() {
        state = lstm_cell(g, x, state, backward)?;
        bwd[k] = state.hidden;
    }
    fwd.iter()
        .zip(&bwd)
        .map(|(&f, &b)| g.concat_cols(&[f, b]))
        .collect()
}

/// Output of [`bilstm_window`] at the last window position only.
///
/// The backward direction at the last position has seen only the last input,
/// so it needs a single cell instead of a full pass.
pub fn bilstm_window_last(
    g: &mut Graph,
    window: &[NodeId],
    forward: &BoundLstm,
    backward: &BoundLstm,
) -> Result<NodeId, NnError> {
    check_window(window)?;
    let batch = g.value(window[0]).nrows();
    let mut state = LstmState::zeros(g, batch, forward.hidden);
    for &x in window {
        state = lstm_cell(g, x, state, forward)?;
    }
    let zero = LstmState::zeros(g, batch, backward.hidden);
    let last = *window.last().expect("non-empty window");
    let back = lstm_cell(g, last, zero, backward)?;
    g.concat_cols(&[state.hidden, back.hidden])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::gradient_check;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn dense_identity_and_constant() {
        let mut g = Graph::new();
        let x = g.constant(array![[1.0, -2.0, 3.0]]);
        let w = g.constant(Array2::eye(3));
        let b = g.constant(Array2::zeros((1, 3)));
        let y = dense(&mut g, x, w, b).unwrap();
        assert_eq!(g.value(y), &array![[1.0, -2.0, 3.0]]);
        let w0 = g.constant(Array2::zeros((3, 2)));
        let c = g.constant(array![[4.0, 5.0]]);
        let y = dense(&mut g, x, w0, c).unwrap();
        assert_eq!(g.value(y), &array![[4.0, 5.0]]);
        let bad = g.constant(Array2::zeros((2, 2)));
        assert!(dense(&mut g, x, bad, c).is_err());
    }

    #[test]
    fn dense_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layer = Dense::new("d", 4, 3);
        let mut store = ParamStore::new();
        layer.init(&mut store, &mut rng).unwrap();
        let x = rand_tensor(&mut rng, 5, 4);
        let err = gradient_check(&store, 1e-6, |g, s| {
            let p = layer.bind(g, s)?;
            let xi = g.constant(x.clone());
            let y = p.forward(g, xi)?;
            Ok(g.sum(y))
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_lstm_gives_zero_hidden() {
        let layer = Lstm::new("l", 3, 4);
        let mut store = ParamStore::new();
        for (name, shape) in layer.shapes() {
            store.add(&name, Array2::zeros(shape)).unwrap();
        }
        let mut g = Graph::new();
        let p = layer.bind(&mut g, &store).unwrap();
        let x = g.constant(array![[0.3, -0.2, 0.9]]);
        let s0 = LstmState::zeros(&mut g, 1, 4);
        let s1 = lstm_cell(&mut g, x, s0, &p).unwrap();
        assert!(g.value(s1.hidden).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hidden = 3;
        let layer = Lstm::new("l", 2, hidden);
        let mut store = ParamStore::new();
        for (name, shape) in layer.shapes() {
            store.add(&name, Array2::zeros(shape)).unwrap();
        }
        // forget bias 50, input gate bias -50: the cell is carried unchanged
        let b = store.get_mut("l.b").unwrap();
        for j in 0..hidden {
            b[[0, j]] = -50.0;
            b[[0, hidden + j]] = 50.0;
        }
        let mut g = Graph::new();
        let p = layer.bind(&mut g, &store).unwrap();
        let x = g.constant(rand_tensor(&mut rng, 1, 2));
        let cell0 = array![[0.7, -1.3, 0.2]];
        let state = LstmState {
            hidden: g.constant(rand_tensor(&mut rng, 1, hidden)),
            cell: g.constant(cell0.clone()),
        };
        let next = lstm_cell(&mut g, x, state, &p).unwrap();
        for (a, b) in g.value(next.cell).iter().zip(cell0.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layer = Lstm::new("l", 3, 4);
            let mut store = ParamStore::new();
            layer.init(&mut store, &mut rng).unwrap();
            let xs: Vec<Tensor> = (0..3).map(|_| rand_tensor(&mut rng, 2, 3)).collect();
            let err = gradient_check(&store, 1e-6, |g, s| {
                let p = layer.bind(g, s)?;
                let mut st = LstmState::zeros(g, 2, 4);
                for x in &xs {
                    let xi = g.constant(x.clone());
                    st = lstm_cell(g, xi, st, &p)?;
                }
                let sq = g.square(st.hidden);
                Ok(g.sum(sq))
            })
            .unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    fn bilstm_setup(seed: u64) -> (ParamStore, Lstm, Lstm, Vec<Tensor>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = Lstm::new("f", 3, 4);
        let b = Lstm::new("b", 3, 4);
        let mut store = ParamStore::new();
        f.init(&mut store, &mut rng).unwrap();
        b.init(&mut store, &mut rng).unwrap();
        let xs = (0..5).map(|_| rand_tensor(&mut rng, 2, 3)).collect();
        (store, f, b, xs)
    }

    #[test]
    fn bilstm_shape_and_last_position() {
        let (store, f, b, xs) = bilstm_setup(1);
        let mut g = Graph::new();
        let pf = f.bind(&mut g, &store).unwrap();
        let pb = b.bind(&mut g, &store).unwrap();
        let inputs: Vec<NodeId> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let outs = bilstm_window(&mut g, &inputs, &pf, &pb).unwrap();
        assert_eq!(outs.len(), 5);
        assert!(outs.iter().all(|o| g.value(*o).dim() == (2, 8)));
        let last = bilstm_window_last(&mut g, &inputs, &pf, &pb).unwrap();
        let diff = (g.value(last) - g.value(outs[4])).mapv(f64::abs);
        assert!(diff.iter().all(|d| *d < 1e-15));
        assert!(bilstm_window(&mut g, &[], &pf, &pb).is_err());
    }

    #[test]
    fn bilstm_single_step_window() {
        let (mut store, f, b, xs) = bilstm_setup(2);
        let fwd = store.get("f.wx").unwrap().clone();
        *store.get_mut("b.wx").unwrap() = fwd;
        let (wh, bias) = (store.get("f.wh").unwrap().clone(), store.get("f.b").unwrap().clone());
        *store.get_mut("b.wh").unwrap() = wh;
        *store.get_mut("b.b").unwrap() = bias;
        let mut g = Graph::new();
        let pf = f.bind(&mut g, &store).unwrap();
        let pb = b.bind(&mut g, &store).unwrap();
        let x = g.constant(xs[0].clone());
        let out = bilstm_window(&mut g, &[x], &pf, &pb).unwrap();
        let v = g.value(out[0]);
        for r in 0..2 {
            for j in 0..4 {
                assert_eq!(v[[r, j]], v[[r, 4 + j]]);
            }
        }
    }

    #[test]
    fn bilstm_reversal_symmetry() {
        let (store, f, b, xs) = bilstm_setup(3);
        // mirrored weights: swap forward and backward parameter sets
        let mut mirrored = ParamStore::new();
        for (name, value) in store.iter() {
            let swapped = if let Some(rest) = name.strip_prefix("f.") {
                format!("b.{rest}")
            } else {
                format!("f.{}", name.strip_prefix("b.").unwrap())
            };
            mirrored.add(&swapped, value.clone()).unwrap();
        }
        let run = |s: &ParamStore, inputs: &[Tensor]| {
            let mut g = Graph::new();
            let pf = f.bind(&mut g, s).unwrap();
            let pb = b.bind(&mut g, s).unwrap();
            let ids: Vec<NodeId> = inputs.iter().map(|x| g.constant(x.clone())).collect();
            let outs = bilstm_window(&mut g, &ids, &pf, &pb).unwrap();
            outs.iter().map(|o| g.value(*o).clone()).collect::<Vec<_>>()
        };
        let original = run(&store, &xs);
        let reversed_inputs: Vec<Tensor> = xs.iter().rev().cloned().collect();
        let reversed = run(&mirrored, &reversed_inputs);
        let w = xs.len();
        for k in 0..w {
            let a = &original[k];
            let b = &reversed[w - 1 - k];
            for r in 0..2 {
                for j in 0..4 {
                    assert!((a[[r, j]] - b[[r, 4 + j]]).abs() < 1e-14);
                    assert!((a[[r, 4 + j]] - b[[r, j]]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn bilstm_position_depends_on_whole_window() {
        let (store, f, b, mut xs) = bilstm_setup(4);
        let eval = |xs: &[Tensor]| {
            let mut g = Graph::new();
            let pf = f.bind(&mut g, &store).unwrap();
            let pb = b.bind(&mut g, &store).unwrap();
            let ids: Vec<NodeId> = xs.iter().map(|x| g.constant(x.clone())).collect();
            let outs = bilstm_window(&mut g, &ids, &pf, &pb).unwrap();
            outs.iter().map(|o| g.value(*o).clone()).collect::<Vec<_>>()
        };
        let before = eval(&xs);
        xs[0][[0, 0]] += 0.5;
        let after_first = eval(&xs);
        // perturbing the first input changes the output at the last position
        assert!((&before[4] - &after_first[4]).iter().any(|d| d.abs() > 1e-8));
        xs[4][[0, 0]] += 0.5;
        let after_last = eval(&xs);
        assert!((&after_first[0] - &after_last[0]).iter().any(|d| d.abs() > 1e-8));
    }

    #[test]
    fn bilstm_gradient_check() {
        let (store, f, b, xs) = bilstm_setup(9);
        let err = gradient_check(&store, 1e-6, |g, s| {
            let pf = f.bind(g, s)?;
            let pb = b.bind(g, s)?;
            let ids: Vec<NodeId> = xs.iter().map(|x| g.constant(x.clone())).collect();
            let out = bilstm_window_last(g, &ids, &pf, &pb)?;
            let sq = g.square(out);
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
