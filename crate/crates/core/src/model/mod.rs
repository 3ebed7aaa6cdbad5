//! The network: `tanh`-bounded MLP encoder, symmetric Hopfield dynamics with
//! a constant external input, and an MLP decoder.
//!
//! Every forward function exists twice: once on plain [`Tensor`]s for
//! inference and once on a [`Graph`] for training. Both paths perform the
//! same floating-point operations in the same order, so their values agree
//! bit for bit.

mod checkpoint;
mod dynamics;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dynamics::{
    clip_rate, continuous_step, descent_check, energy, DescentReport, HopfieldSystem,
};

use serde::{Deserialize, Serialize};

use crate::data::Rng;
use crate::error::{Error, Result};
use crate::ndgrad::{gelu, Graph, Param, Tensor, Var};

/// Layer widths. `n_neurons` is the latent size and Hopfield neuron count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_img: usize,
    pub hidden_enc: usize,
    pub n_neurons: usize,
    pub hidden_dec: usize,
}

impl ModelDims {
    pub fn new(d_img: usize, n_neurons: usize) -> Self {
        Self {
            d_img,
            hidden_enc: 512,
            n_neurons,
            hidden_dec: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_img == 0 || self.hidden_enc == 0 || self.n_neurons == 0 || self.hidden_dec == 0 {
            return Err(Error::Invalid(format!("all model dims must be positive: {self:?}")));
        }
        Ok(())
    }
}

pub const PARAM_NAMES: [&str; 11] = [
    "w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4", "a", "w_in", "b_in",
];

/// Learnable tensors. The recurrent weight is `W = (A + Aᵀ) / 2`, which is
/// exactly symmetric for any `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
    pub w3: Param,
    pub b3: Param,
    pub w4: Param,
    pub b4: Param,
    pub a: Param,
    pub w_in: Param,
    pub b_in: Param,
}

impl ModelParams {
    pub fn iter(&self) -> [&Param; 11] {
        [
            &self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3, &self.w4, &self.b4,
            &self.a, &self.w_in, &self.b_in,
        ]
    }

    pub fn iter_mut(&mut self) -> [&mut Param; 11] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
            &mut self.w4,
            &mut self.b4,
            &mut self.a,
            &mut self.w_in,
            &mut self.b_in,
        ]
    }

    pub fn zero_grad(&mut self) {
        for p in self.iter_mut() {
            p.zero_grad();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.iter().iter().all(|p| p.value.all_finite())
    }
}

/// Graph handles for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub w3: Var,
    pub b3: Var,
    pub w4: Var,
    pub b4: Var,
    pub w_in: Var,
    pub b_in: Var,
    /// Symmetrized recurrent weight.
    pub w: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lshn {
    pub dims: ModelDims,
    pub params: ModelParams,
    /// Mask the diagonal of `W` to zero.
    pub zero_diagonal: bool,
}

fn gaussian(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = std * rng.normal();
    }
    t
}

impl Lshn {
    /// Encoder and decoder maps drawn from `N(0, 1/fan_in)`; the recurrent
    /// matrix `A` and the input map `W_I` from `N(0, 1e-6)`, so the dynamics
    /// start close to the identity. Biases zero.
    pub fn init(dims: ModelDims, rng: &mut Rng) -> Result<Self> {
        dims.validate()?;
        let ModelDims {
            d_img,
            hidden_enc,
            n_neurons: n,
            hidden_dec,
        } = dims;
        let lin = |rows: usize, cols: usize, rng: &mut Rng| {
            Param::new(gaussian(&[rows, cols], 1.0 / (rows as f64).sqrt(), rng))
        };
        let bias = |cols: usize| Param::new(Tensor::zeros(&[1, cols]));
        let params = ModelParams {
            w1: lin(d_img, hidden_enc, rng),
            b1: bias(hidden_enc),
            w2: lin(hidden_enc, n, rng),
            b2: bias(n),
            w3: lin(n, hidden_dec, rng),
            b3: bias(hidden_dec),
            w4: lin(hidden_dec, d_img, rng),
            b4: bias(d_img),
            a: Param::new(gaussian(&[n, n], 1e-3, rng)),
            w_in: Param::new(gaussian(&[n, n], 1e-3, rng)),
            b_in: bias(n),
        };
        Ok(Self {
            dims,
            params,
            zero_diagonal: false,
        })
    }

    /// Every parameter zero.
    pub fn zeros(dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let z = |r: usize, c: usize| Param::new(Tensor::zeros(&[r, c]));
        let ModelDims {
            d_img,
            hidden_enc: he,
            n_neurons: n,
            hidden_dec: hd,
        } = dims;
        Ok(Self {
            dims,
            params: ModelParams {
                w1: z(d_img, he),
                b1: z(1, he),
                w2: z(he, n),
                b2: z(1, n),
                w3: z(n, hd),
                b3: z(1, hd),
                w4: z(hd, d_img),
                b4: z(1, d_img),
                a: z(n, n),
                w_in: z(n, n),
                b_in: z(1, n),
            },
            zero_diagonal: false,
        })
    }

    fn check_cols(&self, x: &Tensor, want: usize, op: &'static str) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != want {
            return Err(Error::Shape {
                op,
                lhs: x.shape().to_vec(),
                rhs: vec![x.rows(), want],
            });
        }
        Ok(())
    }

    /// `tanh(gelu(x·W1 + b1)·W2 + b2)` for each row of `x`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.check_cols(x, self.dims.d_img, "encode")?;
        let p = &self.params;
        let h = x.matmul(&p.w1.value)?.add_row(&p.b1.value)?.map(gelu);
        Ok(h.matmul(&p.w2.value)?.add_row(&p.b2.value)?.map(f64::tanh))
    }

    /// `tanh(gelu(v·W3 + b3)·W4 + b4)` for each row of `v`.
    pub fn decode(&self, v: &Tensor) -> Result<Tensor> {
        self.check_cols(v, self.dims.n_neurons, "decode")?;
        let p = &self.params;
        let h = v.matmul(&p.w3.value)?.add_row(&p.b3.value)?.map(gelu);
        Ok(h.matmul(&p.w4.value)?.add_row(&p.b4.value)?.map(f64::tanh))
    }

    /// `I = z0·W_I + b_I`, computed once from the initial latent.
    pub fn external_input(&self, z0: &Tensor) -> Result<Tensor> {
        self.check_cols(z0, self.dims.n_neurons, "external_input")?;
        z0.matmul(&self.params.w_in.value)?
            .add_row(&self.params.b_in.value)
    }

    /// Materialized `W = (A + Aᵀ) / 2`.
    pub fn recurrent_weights(&self) -> Tensor {
        let a = &self.params.a.value;
        let at = a.transpose().expect("A is square");
        let w = a.add(&at).expect("A is square").scale(0.5);
        if self.zero_diagonal {
            w.mul(&off_diagonal_mask(self.dims.n_neurons))
                .expect("mask shape")
        } else {
            w
        }
    }

    /// One discrete update `v ← clamp(v + v·W + I)` on each row.
    pub fn hopfield_step(&self, v: &Tensor, w: &Tensor, input: &Tensor) -> Result<Tensor> {
        hopfield_step(v, w, input)
    }

    /// Runs `steps` discrete updates from `v0`; see [`run_dynamics`].
    pub fn run_dynamics(
        &self,
        v0: &Tensor,
        input: &Tensor,
        steps: usize,
        opts: DynamicsOptions,
    ) -> Result<DynamicsOutcome> {
        run_dynamics(v0, &self.recurrent_weights(), input, steps, opts)
    }

    pub fn bind(&self, g: &mut Graph) -> Result<BoundParams> {
        let leaves: Vec<Var> = self
            .params
            .iter()
            .into_iter()
            .enumerate()
            .map(|(slot, p)| g.param(slot, p))
            .collect();
        self.bind_leaves(g, &leaves)
    }

    /// Builds the forward handles from existing leaves, one per parameter in
    /// declared order. Only the values of the leaves are used, not `self.params`.
    pub fn bind_leaves(&self, g: &mut Graph, leaves: &[Var]) -> Result<BoundParams> {
        let &[w1, b1, w2, b2, w3, b3, w4, b4, a, w_in, b_in] = leaves else {
            return Err(Error::Invalid(format!("expected 11 parameter leaves, got {}", leaves.len())));
        };
        let at = g.transpose(a)?;
        let s = g.add(a, at)?;
        let mut w = g.scale(s, 0.5);
        if self.zero_diagonal {
            let mask = g.constant(off_diagonal_mask(self.dims.n_neurons));
            w = g.mul(w, mask)?;
        }
        Ok(BoundParams {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            w4,
            b4,
            w_in,
            b_in,
            w,
        })
    }

    pub fn encode_g(&self, g: &mut Graph, bp: &BoundParams, x: Var) -> Result<Var> {
        self.check_cols(g.value(x), self.dims.d_img, "encode")?;
        let l1 = g.matmul(x, bp.w1)?;
        let l1 = g.add_row(l1, bp.b1)?;
        let a1 = g.gelu(l1);
        let l2 = g.matmul(a1, bp.w2)?;
        let l2 = g.add_row(l2, bp.b2)?;
        Ok(g.tanh(l2))
    }

    pub fn decode_g(&self, g: &mut Graph, bp: &BoundParams, v: Var) -> Result<Var> {
        self.check_cols(g.value(v), self.dims.n_neurons, "decode")?;
        let l3 = g.matmul(v, bp.w3)?;
        let l3 = g.add_row(l3, bp.b3)?;
        let a3 = g.gelu(l3);
        let l4 = g.matmul(a3, bp.w4)?;
        let l4 = g.add_row(l4, bp.b4)?;
        Ok(g.tanh(l4))
    }

    pub fn external_input_g(&self, g: &mut Graph, bp: &BoundParams, z0: Var) -> Result<Var> {
        let l = g.matmul(z0, bp.w_in)?;
        g.add_row(l, bp.b_in)
    }

    pub fn hopfield_step_g(&self, g: &mut Graph, bp: &BoundParams, v: Var, input: Var) -> Result<Var> {
        hopfield_step_g(g, v, bp.w, input)
    }
}

fn off_diagonal_mask(n: usize) -> Tensor {
    let mut m = Tensor::ones(&[n, n]);
    for i in 0..n {
        m.set(i, i, 0.0);
    }
    m
}

/// `clamp(v + v·W + I)` rowwise; `W` is symmetric so `v·W` is `W v`.
pub fn hopfield_step(v: &Tensor, w: &Tensor, input: &Tensor) -> Result<Tensor> {
    let vw = v.matmul(w)?;
    Ok(v.add(&vw)?.add(input)?.map(|x| x.clamp(-1.0, 1.0)))
}

pub fn hopfield_step_g(g: &mut Graph, v: Var, w: Var, input: Var) -> Result<Var> {
    let vw = g.matmul(v, w)?;
    let s = g.add(v, vw)?;
    let s = g.add(s, input)?;
    g.clamp(s, -1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsOptions {
    /// Stop a row once `‖v[t+1] − v[t]‖∞ < tol`; `None` forces the full unroll.
    pub early_stop: Option<f64>,
    /// Keep every intermediate state.
    pub record: bool,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self {
            early_stop: Some(1e-9),
            record: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DynamicsOutcome {
    pub final_state: Tensor,
    /// Updates applied to each row before it stopped.
    pub steps_used: Vec<usize>,
    /// `v[0], v[1], …` when recording. Rows that stopped early hold their
    /// final value in later entries.
    pub trajectory: Option<Vec<Tensor>>,
}

/// Iterates [`hopfield_step`] for up to `steps` updates. Each row stops
/// independently once its sup-norm change falls below the early-stop
/// tolerance; stopped rows are frozen.
pub fn run_dynamics(
    v0: &Tensor,
    w: &Tensor,
    input: &Tensor,
    steps: usize,
    opts: DynamicsOptions,
) -> Result<DynamicsOutcome> {
    if steps == 0 {
        return Err(Error::Invalid("dynamics need at least one step".into()));
    }
    let rows = v0.rows();
    let mut v = v0.clone();
    let mut steps_used = vec![0usize; rows];
    let mut active = vec![true; rows];
    let mut trajectory = opts.record.then(|| vec![v.clone()]);
    for _ in 0..steps {
        if !active.iter().any(|&a| a) {
            break;
        }
        let next = hopfield_step(&v, w, input)?;
        for (r, alive) in active.iter_mut().enumerate() {
            if !*alive {
                continue;
            }
            let delta = next
                .row_slice(r)
                .iter()
                .zip(v.row_slice(r))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v.row_slice_mut(r).copy_from_slice(next.row_slice(r));
            steps_used[r] += 1;
            if opts.early_stop.is_some_and(|tol| delta < tol) {
                *alive = false;
            }
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(v.clone());
        }
    }
    Ok(DynamicsOutcome {
        final_state: v,
        steps_used,
        trajectory,
    })
}

/// A single latent vector with every component in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState(Vec<f64>);

impl LatentState {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = v.iter().find(|x| !(x.abs() <= 1.0)) {
            return Err(Error::Domain { value: bad });
        }
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_row(&self) -> Tensor {
        Tensor::row(self.0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dims() -> ModelDims {
        ModelDims {
            d_img: 4,
            hidden_enc: 3,
            n_neurons: 2,
            hidden_dec: 3,
        }
    }

    #[test]
    fn encode_range_and_zero_weights() {
        let model = Lshn::init(ModelDims::new(16, 8), &mut Rng::new(1)).unwrap();
        let x = Tensor::full(&[3, 16], 50.0);
        assert!(model.encode(&x).unwrap().data().iter().all(|v| v.abs() <= 1.0));

        let mut z = Lshn::zeros(toy_dims()).unwrap();
        z.params.b2.value = Tensor::row(vec![0.3, -2.0]);
        let out = z.encode(&Tensor::row(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[0.3f64.tanh(), (-2.0f64).tanh()]);
        z.params.b4.value = Tensor::row(vec![0.1, 0.2, -0.3, 0.0]);
        let dec = z.decode(&Tensor::row(vec![0.5, -0.5])).unwrap();
        assert_eq!(dec.data(), &[0.1f64.tanh(), 0.2f64.tanh(), (-0.3f64).tanh(), 0.0]);
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let model = Lshn::zeros(toy_dims()).unwrap();
        assert!(model.encode(&Tensor::zeros(&[1, 5])).is_err());
        assert!(model.decode(&Tensor::zeros(&[1, 3])).is_err());
    }

    #[test]
    fn recurrent_weights_exactly_symmetric() {
        let mut model = Lshn::init(ModelDims::new(4, 9), &mut Rng::new(3)).unwrap();
        for v in model.params.a.value.data_mut().iter_mut() {
            *v *= 1e3;
        }
        let w = model.recurrent_weights();
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(w.get(i, j).to_bits(), w.get(j, i).to_bits());
            }
        }
        model.zero_diagonal = true;
        let w = model.recurrent_weights();
        assert!((0..9).all(|i| w.get(i, i) == 0.0));
    }

    #[test]
    fn external_input_examples() {
        let mut m = Lshn::zeros(ModelDims::new(4, 3)).unwrap();
        m.params.b_in.value = Tensor::row(vec![0.1, 0.2, 0.3]);
        let z0 = Tensor::row(vec![0.5, -0.5, 0.9]);
        assert_eq!(m.external_input(&z0).unwrap().data(), &[0.1, 0.2, 0.3]);
        m.params.b_in.value = Tensor::zeros(&[1, 3]);
        m.params.w_in.value = Tensor::eye(3);
        assert_eq!(m.external_input(&z0).unwrap(), z0);
        // random 3-neuron case against direct arithmetic
        let w_in = [[0.2, -0.4, 1.1], [0.7, 0.3, -0.6], [-0.9, 0.5, 0.05]];
        let b_in = [0.01, -0.02, 0.03];
        m.params.w_in.value = Tensor::from_rows(&w_in.map(|r| r.to_vec())).unwrap();
        m.params.b_in.value = Tensor::row(b_in.to_vec());
        let out = m.external_input(&z0).unwrap();
        let z = [0.5, -0.5, 0.9];
        for j in 0..3 {
            let expect = z[0] * w_in[0][j] + z[1] * w_in[1][j] + z[2] * w_in[2][j] + b_in[j];
            assert!((out.data()[j] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn hopfield_step_examples() {
        let zero = Tensor::zeros(&[3, 3]);
        let v = Tensor::row(vec![0.3, -0.9, 1.0]);
        let i0 = Tensor::zeros(&[1, 3]);
        assert_eq!(hopfield_step(&v, &zero, &i0).unwrap(), v);

        let w = Tensor::zeros(&[1, 1]);
        let out = hopfield_step(&Tensor::row(vec![0.9]), &w, &Tensor::row(vec![0.5])).unwrap();
        assert_eq!(out.data(), &[1.0]);

        let w = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let v = Tensor::row(vec![1.0, 1.0]);
        assert_eq!(hopfield_step(&v, &w, &Tensor::zeros(&[1, 2])).unwrap(), v);
    }

    #[test]
    fn run_dynamics_contract() {
        let w = Tensor::from_rows(&[vec![0.05, 0.2], vec![0.2, -0.1]]).unwrap();
        let v0 = Tensor::row(vec![0.1, -0.3]);
        let input = Tensor::row(vec![0.02, 0.01]);
        let one = run_dynamics(&v0, &w, &input, 1, DynamicsOptions::default()).unwrap();
        assert_eq!(one.final_state, hopfield_step(&v0, &w, &input).unwrap());

        let full = run_dynamics(
            &v0,
            &w,
            &input,
            7,
            DynamicsOptions {
                early_stop: None,
                record: true,
            },
        )
        .unwrap();
        assert_eq!(full.trajectory.as_ref().unwrap().len(), 8);
        assert_eq!(full.steps_used, vec![7]);

        // a saturated fixed point stops after one update
        let w = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let fp = Tensor::row(vec![1.0, 1.0]);
        let out = run_dynamics(&fp, &w, &Tensor::zeros(&[1, 2]), 1000, DynamicsOptions::default())
            .unwrap();
        assert_eq!(out.steps_used, vec![1]);
        assert_eq!(out.final_state, fp);
    }

    #[test]
    fn graph_and_tensor_paths_agree() {
        let model = Lshn::init(ModelDims::new(12, 6), &mut Rng::new(11)).unwrap();
        let mut rng = Rng::new(2);
        let x = Tensor::new(vec![3, 12], (0..36).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
            .unwrap();
        let z = model.encode(&x).unwrap();
        let input = model.external_input(&z).unwrap();
        let w = model.recurrent_weights();
        let v1 = hopfield_step(&z, &w, &input).unwrap();
        let d = model.decode(&v1).unwrap();

        let mut g = Graph::new();
        let bp = model.bind(&mut g).unwrap();
        let xv = g.constant(x);
        let zg = model.encode_g(&mut g, &bp, xv).unwrap();
        let ig = model.external_input_g(&mut g, &bp, zg).unwrap();
        let vg = model.hopfield_step_g(&mut g, &bp, zg, ig).unwrap();
        let dg = model.decode_g(&mut g, &bp, vg).unwrap();
        assert_eq!(g.value(zg), &z);
        assert_eq!(g.value(bp.w), &w);
        assert_eq!(g.value(vg), &v1);
        assert_eq!(g.value(dg), &d);
    }

    #[test]
    fn toy_encode_decode_by_hand() {
        let mut m = Lshn::zeros(toy_dims()).unwrap();
        let p = &mut m.params;
        let w1 = [[0.1, -0.2, 0.3], [0.4, 0.5, -0.6], [-0.7, 0.8, 0.9], [1.0, -1.1, 0.2]];
        let b1 = [0.05, -0.05, 0.1];
        let w2 = [[0.3, -0.1], [0.2, 0.4], [-0.5, 0.6]];
        let b2 = [0.01, -0.02];
        let w3 = [[0.7, -0.3, 0.2], [0.1, 0.9, -0.4]];
        let b3 = [0.0, 0.1, -0.1];
        let w4 = [[0.5, -0.5, 0.2, 0.1], [0.3, 0.3, -0.2, 0.6], [-0.4, 0.8, 0.1, -0.9]];
        let b4 = [0.02, 0.0, -0.03, 0.04];
        p.w1.value = Tensor::from_rows(&w1.map(|r| r.to_vec())).unwrap();
        p.b1.value = Tensor::row(b1.to_vec());
        p.w2.value = Tensor::from_rows(&w2.map(|r| r.to_vec())).unwrap();
        p.b2.value = Tensor::row(b2.to_vec());
        p.w3.value = Tensor::from_rows(&w3.map(|r| r.to_vec())).unwrap();
        p.b3.value = Tensor::row(b3.to_vec());
        p.w4.value = Tensor::from_rows(&w4.map(|r| r.to_vec())).unwrap();
        p.b4.value = Tensor::row(b4.to_vec());

        let x = [0.5, -1.0, 0.25, 0.75];
        let mut a1 = [0.0; 3];
        for j in 0..3 {
            let mut s = b1[j];
            for i in 0..4 {
                s += x[i] * w1[i][j];
            }
            a1[j] = gelu(s);
        }
        let mut z = [0.0; 2];
        for j in 0..2 {
            let mut s = b2[j];
            for i in 0..3 {
                s += a1[i] * w2[i][j];
            }
            z[j] = s.tanh();
        }
        let enc = m.encode(&Tensor::row(x.to_vec())).unwrap();
        for j in 0..2 {
            assert!((enc.data()[j] - z[j]).abs() < 1e-12);
        }

        let mut a3 = [0.0; 3];
        for j in 0..3 {
            let mut s = b3[j];
            for i in 0..2 {
                s += z[i] * w3[i][j];
            }
            a3[j] = gelu(s);
        }
        let dec = m.decode(&enc).unwrap();
        for j in 0..4 {
            let mut s = b4[j];
            for i in 0..3 {
                s += a3[i] * w4[i][j];
            }
            assert!((dec.data()[j] - s.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn latent_state_domain() {
        assert!(LatentState::new(vec![1.0, -1.0, 0.0]).is_ok());
        assert!(LatentState::new(vec![1.0001]).is_err());
        assert!(LatentState::new(vec![f64::NAN]).is_err());
    }
}
