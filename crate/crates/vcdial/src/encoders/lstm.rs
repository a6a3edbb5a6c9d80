use super::EncoderError;
use crate::numerics::{Graph, ParameterStore, Tensor, Var};

/// One LSTM cell's parameter names: four gate weight matrices of shape
/// (input_dim + hidden) x hidden and four bias rows.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub prefix: String,
    pub input_dim: usize,
    pub hidden: usize,
}

const GATES: [&str; 4] = ["i", "f", "o", "g"];

impl LstmCell {
    pub fn new(prefix: &str, input_dim: usize, hidden: usize) -> Self {
        LstmCell {
            prefix: prefix.to_string(),
            input_dim,
            hidden,
        }
    }

    /// Create this cell's parameters in the store.
    pub fn register(&self, store: &mut ParameterStore, scale: f64) {
        for gate in GATES {
            store.insert_uniform(
                &format!("{}.w_{gate}", self.prefix),
                &[self.input_dim + self.hidden, self.hidden],
                scale,
            );
            store.insert_uniform(&format!("{}.b_{gate}", self.prefix), &[1, self.hidden], scale);
        }
    }

    pub fn init(store: &mut ParameterStore, prefix: &str, input_dim: usize, hidden: usize, scale: f64) -> Self {
        let cell = LstmCell::new(prefix, input_dim, hidden);
        cell.register(store, scale);
        cell
    }

    pub fn bind(&self, g: &Graph, store: &ParameterStore) -> Result<BoundLstm, EncoderError> {
        let mut w = Vec::with_capacity(4);
        let mut b = Vec::with_capacity(4);
        for gate in GATES {
            w.push(g.param(store, &format!("{}.w_{gate}", self.prefix))?);
            b.push(g.param(store, &format!("{}.b_{gate}", self.prefix))?);
        }
        Ok(BoundLstm {
            w_i: w[0],
            w_f: w[1],
            w_o: w[2],
            w_g: w[3],
            b_i: b[0],
            b_f: b[1],
            b_o: b[2],
            b_g: b[3],
            hidden: self.hidden,
        })
    }
}

/// Cell parameters resolved into one graph's vars.
pub struct BoundLstm {
    w_i: Var,
    w_f: Var,
    w_o: Var,
    w_g: Var,
    b_i: Var,
    b_f: Var,
    b_o: Var,
    b_g: Var,
    pub hidden: usize,
}

impl BoundLstm {
    pub fn zero_state(&self, g: &Graph) -> (Var, Var) {
        let h = g.leaf(Tensor::zeros(&[1, self.hidden]));
        let c = g.leaf(Tensor::zeros(&[1, self.hidden]));
        (h, c)
    }

    /// One recurrence step: returns (h', c').
    pub fn step(&self, g: &Graph, x: Var, h: Var, c: Var) -> Result<(Var, Var), EncoderError> {
        let z = g.concat(&[x, h], 1)?;
        let gate = |w: Var, b: Var| -> Result<Var, EncoderError> {
            let lin = g.matmul(z, w)?;
            Ok(g.add(lin, b)?)
        };
        let i = g.sigmoid(gate(self.w_i, self.b_i)?);
        let f = g.sigmoid(gate(self.w_f, self.b_f)?);
        let o = g.sigmoid(gate(self.w_o, self.b_o)?);
        let cand = g.tanh(gate(self.w_g, self.b_g)?);
        let c_new = g.add(g.mul(f, c)?, g.mul(i, cand)?)?;
        let h_new = g.mul(o, g.tanh(c_new))?;
        Ok((h_new, c_new))
    }
}

/// How the sequence-level summary vector is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStateMode {
    /// Concatenate the forward final state with the backward final state.
    ConcatFinals,
    /// Take the last row of the (possibly concatenated) state matrix.
    LastStep,
}

/// Per-step encoder states plus the sequence summary.
pub struct EncodedSequence {
    /// T x H' matrix (H' = 2 * hidden when bidirectional).
    pub states: Var,
    /// 1 x H' summary vector.
    pub final_state: Var,
    /// Individual 1 x H' rows of `states`.
    pub step_states: Vec<Var>,
}

/// Stacked, optionally bidirectional LSTM over a list of 1 x input_dim steps.
#[derive(Clone, Debug)]
pub struct SequenceEncoder {
    pub prefix: String,
    pub layers: usize,
    pub bidirectional: bool,
    pub input_dim: usize,
    pub hidden: usize,
}

impl SequenceEncoder {
    pub fn new(prefix: &str, input_dim: usize, hidden: usize, layers: usize, bidirectional: bool) -> Self {
        SequenceEncoder {
            prefix: prefix.to_string(),
            layers,
            bidirectional,
            input_dim,
            hidden,
        }
    }

    /// Create every layer's cell parameters in the store.
    pub fn register(&self, store: &mut ParameterStore, scale: f64) {
        for l in 0..self.layers {
            self.cell(l, "fwd").register(store, scale);
            if self.bidirectional {
                self.cell(l, "bwd").register(store, scale);
            }
        }
    }

    pub fn init(
        store: &mut ParameterStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        layers: usize,
        bidirectional: bool,
        scale: f64,
    ) -> Self {
        let enc = SequenceEncoder::new(prefix, input_dim, hidden, layers, bidirectional);
        enc.register(store, scale);
        enc
    }

    pub fn state_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    fn cell(&self, layer: usize, dir: &str) -> LstmCell {
        let in_dim = if layer == 0 {
            self.input_dim
        } else {
            self.state_dim()
        };
        LstmCell {
            prefix: format!("{}.l{layer}.{dir}", self.prefix),
            input_dim: in_dim,
            hidden: self.hidden,
        }
    }

    /// Run the full stack over `steps`. Empty input is a contract error.
    pub fn encode(
        &self,
        g: &Graph,
        store: &ParameterStore,
        steps: &[Var],
        mode: FinalStateMode,
    ) -> Result<EncodedSequence, EncoderError> {
        if steps.is_empty() {
            return Err(EncoderError::EmptySequence);
        }
        let mut inputs: Vec<Var> = steps.to_vec();
        let mut fwd_final = inputs[0];
        let mut bwd_final: Option<Var> = None;

        for l in 0..self.layers {
            let fwd = self.cell(l, "fwd").bind(g, store)?;
            let mut fwd_states = Vec::with_capacity(inputs.len());
            let (mut h, mut c) = fwd.zero_state(g);
            for x in &inputs {
                let (nh, nc) = fwd.step(g, *x, h, c)?;
                h = nh;
                c = nc;
                fwd_states.push(h);
            }
            fwd_final = h;

            if self.bidirectional {
                let bwd = self.cell(l, "bwd").bind(g, store)?;
                let mut bwd_states = vec![fwd_states[0]; inputs.len()];
                let (mut h, mut c) = bwd.zero_state(g);
                for (t, x) in inputs.iter().enumerate().rev() {
                    let (nh, nc) = bwd.step(g, *x, h, c)?;
                    h = nh;
                    c = nc;
                    bwd_states[t] = h;
                }
                bwd_final = Some(h);
                inputs = fwd_states
                    .iter()
                    .zip(&bwd_states)
                    .map(|(f, b)| g.concat(&[*f, *b], 1))
                    .collect::<Result<Vec<Var>, _>>()?;
            } else {
                inputs = fwd_states;
            }
        }

        let states = g.concat(&inputs, 0)?;
        let final_state = match (mode, bwd_final) {
            (FinalStateMode::ConcatFinals, Some(b)) => g.concat(&[fwd_final, b], 1)?,
            (FinalStateMode::LastStep, _) => *inputs.last().expect("non-empty"),
            (FinalStateMode::ConcatFinals, None) => fwd_final,
        };
        Ok(EncodedSequence {
            states,
            final_state,
            step_states: inputs,
        })
    }
}

/// Split a T x d matrix var into T row vars.
pub fn split_rows(g: &Graph, m: Var) -> Result<Vec<Var>, EncoderError> {
    let rows = g.shape_of(m)[0];
    (0..rows).map(|i| Ok(g.rows(m, &[i])?)).collect()
}
