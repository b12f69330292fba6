//! A small differentiable-computation kernel: parameter storage, a
//! reverse-mode tape, MLPs, weighted BCE, Adam and a warm-restart cosine
//! learning-rate schedule.

pub mod kernels;
mod optim;
mod tape;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use optim::{Adam, AdamConfig, CosineWarmRestarts};
pub use tape::{bce_pos_weight, Tape, Var, PROB_CLAMP};

/// Dense tensor with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape { expected: shape, got: vec![data.len()] });
        }
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: vec![T::zero(); len], grad: None }
    }

    /// Treats the tensor as a matrix; 1-D tensors are a single row.
    pub fn rows_cols(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [c] => (1, *c),
            [r, c] => (*r, *c),
            s => (s[..s.len() - 1].iter().product(), s[s.len() - 1]),
        }
    }
}

/// Handle to a tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named learnable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            tensors: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|x| x.as_f64()).collect(),
                })
                .collect(),
        }
    }

    /// Overwrites values from a checkpoint. Every tensor must be present with
    /// an identical shape, and the checkpoint must hold nothing else.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        if ckpt.tensors.len() != self.tensors.len() {
            return Err(Error::Shape {
                expected: vec![self.tensors.len()],
                got: vec![ckpt.tensors.len()],
            });
        }
        for (i, name) in self.names.iter().enumerate() {
            let saved = ckpt
                .tensors
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {name}")))?;
            let t = &self.tensors[i];
            if saved.shape != t.shape || saved.data.len() != t.data.len() {
                return Err(Error::Shape { expected: t.shape.clone(), got: saved.shape.clone() });
            }
        }
        for (i, name) in self.names.clone().iter().enumerate() {
            let saved = ckpt.tensors.iter().find(|t| &t.name == name).expect("checked");
            self.tensors[i].data = saved.data.iter().map(|&x| T::lit(x)).collect();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        self.load_checkpoint(&ckpt)
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads(self.tensors.iter().map(|t| vec![T::zero(); t.data.len()]).collect())
    }
}

pub const CHECKPOINT_FORMAT: &str = "rcisep-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Serialized parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<NamedTensor>,
}

/// Gradients aligned with the tensors of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T>(pub Vec<Vec<T>>);

impl<T: Scalar> Grads<T> {
    pub fn get(&self, id: ParamId) -> &[T] {
        &self.0[id.0]
    }

    pub fn add_scaled(&mut self, other: &Grads<T>, scale: T) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn norm(&self) -> T {
        self.0
            .iter()
            .flatten()
            .map(|&g| g * g)
            .sum::<T>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

/// Fully connected layer `y = x W + b`, `W` stored `fan_in × fan_out`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    /// Registers a layer with weights uniform in ±√(6 / (fan_in + fan_out))
    /// and zero bias.
    pub fn init<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| T::lit(rng.gen_range(-bound..=bound)))
            .collect();
        let weight = store.add(
            format!("{name}.weight"),
            Tensor { shape: vec![fan_in, fan_out], data: w, grad: None },
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![fan_out]));
        Dense { weight, bias, fan_in, fan_out }
    }
}

/// Multi-layer perceptron: affine layers with rectifiers in between and a
/// configurable output activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output: Activation,
}

impl Mlp {
    /// `dims = [input, hidden…, output]`.
    pub fn init<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        dims: &[usize],
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::init(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Mlp { layers, output }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    /// Records the forward pass on `tape`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        self.forward_from(tape, x, 0)
    }

    /// Runs layers `start..` only; `x` is the input of layer `start`.
    pub fn forward_from<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, start: usize) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate().skip(start) {
            h = tape.affine(h, layer.weight, layer.bias)?;
            let act = if i == last { self.output } else { Activation::Relu };
            h = match act {
                Activation::Identity => h,
                Activation::Relu => tape.relu(h),
                Activation::Sigmoid => tape.sigmoid(h),
            };
        }
        Ok(h)
    }
}

/// Applies `mlp` to the rows of `input` without recording gradients.
pub fn mlp_forward<T: Scalar>(mlp: &Mlp, store: &ParamStore<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, cols) = input.rows_cols();
    if cols != mlp.input_dim() {
        return Err(Error::Shape {
            expected: vec![rows, mlp.input_dim()],
            got: input.shape.clone(),
        });
    }
    let mut tape = Tape::new(store);
    let x = tape.input(rows, cols, input.data.clone())?;
    let y = mlp.forward(&mut tape, x)?;
    let (r, c) = tape.dims(y);
    Tensor::new(vec![r, c], tape.value(y).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_layer(out: Activation) -> (ParamStore<f64>, Mlp) {
        let mut store = ParamStore::default();
        let weight = store.add("w", Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let bias = store.add("b", Tensor::zeros(vec![2]));
        let mlp = Mlp { layers: vec![Dense { weight, bias, fan_in: 2, fan_out: 2 }], output: out };
        (store, mlp)
    }

    #[test]
    fn identity_mlp() {
        let (store, mlp) = identity_layer(Activation::Identity);
        let x = Tensor::new(vec![1, 2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(mlp_forward(&mlp, &store, &x).unwrap().data, vec![-1.0, 2.0]);
        let (store, mlp) = identity_layer(Activation::Relu);
        assert_eq!(mlp_forward(&mlp, &store, &x).unwrap().data, vec![0.0, 2.0]);
        let (store, mlp) = identity_layer(Activation::Sigmoid);
        let zero = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        assert_eq!(mlp_forward(&mlp, &store, &zero).unwrap().data, vec![0.5, 0.5]);
    }

    #[test]
    fn shape_error_names_both_shapes() {
        let (store, mlp) = identity_layer(Activation::Identity);
        let x = Tensor::new(vec![1, 3], vec![0.0; 3]).unwrap();
        let err = mlp_forward(&mlp, &store, &x).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2]") && msg.contains("[1, 3]"), "{msg}");
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = ParamStore::<f64>::default();
        Mlp::init(&mut a, "m", &[3, 4, 1], Activation::Sigmoid, &mut rng);
        let ckpt = a.to_checkpoint();
        let mut b = ParamStore::<f64>::default();
        Mlp::init(&mut b, "m", &[3, 4, 1], Activation::Sigmoid, &mut rng);
        assert_ne!(a, b);
        b.load_checkpoint(&ckpt).unwrap();
        assert_eq!(a, b);
        let mut c = ParamStore::<f64>::default();
        Mlp::init(&mut c, "m", &[3, 5, 1], Activation::Sigmoid, &mut rng);
        assert!(matches!(c.load_checkpoint(&ckpt), Err(Error::Shape { .. })));
    }

    #[test]
    fn init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::<f32>::default();
        let d = Dense::init(&mut s, "d", 10, 20, &mut rng);
        let bound = (6.0f32 / 30.0).sqrt();
        assert!(s.get(d.weight).data.iter().all(|w| w.abs() <= bound));
        assert!(s.get(d.bias).data.iter().all(|&b| b == 0.0));
    }
}
