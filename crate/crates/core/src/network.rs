//! Fully connected tanh network expressed as a graph, plus Xavier
//! initialisation and the model file format.
//!
//! Layer `l` maps a row vector `h` to `h·Wˡ + bˡ` with `Wˡ` of shape
//! `n^{l-1} × nˡ` and `bˡ` of shape `1 × nˡ`. Hidden layers apply the
//! activation; the output layer is affine.
//!
//! # Model file layout
//!
//! All integers and floats little-endian.
//!
//! ```text
//! magic        8 bytes  "PLUMENN\0"
//! version      u32      = 1
//! activation   u32 len + UTF-8 name
//! n_layers     u32      number of entries in the size sequence
//! sizes        u32 × n_layers
//! ranges       (f64 min, f64 max) × sizes[0]   input normalisation
//! seed         u64
//! per layer    W (row-major f64, sizes[l-1]·sizes[l]) then b (f64 × sizes[l])
//! ```

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Axis};
use rand::Rng;

use crate::autodiff::{Bindings, Expr, Graph, InputVar, ParamId};

const MODEL_MAGIC: &[u8; 8] = b"PLUMENN\0";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("parameter shapes do not match the architecture: {0}")]
    Shape(String),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model file is truncated or malformed: {0}")]
    Truncated(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// No nonlinearity; used to check the affine plumbing.
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, g: &mut Graph, e: Expr) -> Expr {
        match self {
            Activation::Tanh => g.tanh(e),
            Activation::Identity => e,
        }
    }
}

/// Layer-size sequence `(n⁰, n¹, …, n^ℓ, n_u)` and the activation.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub sizes: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    /// `inputs`, then `depth` hidden layers of `width`, then `outputs`.
    pub fn mlp(inputs: usize, width: usize, depth: usize, outputs: usize) -> Self {
        let mut sizes = vec![inputs];
        sizes.extend(std::iter::repeat_n(width, depth));
        sizes.push(outputs);
        Architecture { sizes, activation: Activation::Tanh }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 3 {
            return Err(NetworkError::Architecture("need at least one hidden layer".into()));
        }
        if self.sizes.contains(&0) {
            return Err(NetworkError::Architecture("layer sizes must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// `(weights only, weights and biases)`.
    pub fn param_count(&self) -> (usize, usize) {
        let w: usize = self.sizes.windows(2).map(|p| p[0] * p[1]).sum();
        let b: usize = self.sizes[1..].iter().sum();
        (w, w + b)
    }
}

/// Affine map of each input column from `[min, max]` to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    pub ranges: Vec<(f64, f64)>,
}

impl InputScaling {
    pub fn identity(n: usize) -> Self {
        InputScaling { ranges: vec![(-1.0, 1.0); n] }
    }

    /// Scale and shift `(a, c)` so that `a·x + c` maps the range to `[-1, 1]`.
    pub fn affine(&self, i: usize) -> (f64, f64) {
        let (lo, hi) = self.ranges[i];
        let span = hi - lo;
        if span <= 0.0 {
            return (1.0, -lo);
        }
        (2.0 / span, -1.0 - 2.0 * lo / span)
    }
}

/// Weights and biases, `[W¹, b¹, W², b², …]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub arrays: Vec<Array2<f64>>,
    pub seed: u64,
}

impl Parameters {
    pub fn weight(&self, l: usize) -> &Array2<f64> {
        &self.arrays[2 * l]
    }

    pub fn bias(&self, l: usize) -> &Array2<f64> {
        &self.arrays[2 * l + 1]
    }

    pub fn check(&self, arch: &Architecture) -> Result<()> {
        if self.arrays.len() != 2 * arch.layers() {
            return Err(NetworkError::Shape(format!(
                "{} arrays for {} layers",
                self.arrays.len(),
                arch.layers()
            )));
        }
        for (l, p) in arch.sizes.windows(2).enumerate() {
            if self.weight(l).dim() != (p[0], p[1]) || self.bias(l).dim() != (1, p[1]) {
                return Err(NetworkError::Shape(format!("layer {}", l + 1)));
            }
        }
        if !self.arrays.iter().all(|a| a.iter().all(|x| x.is_finite())) {
            return Err(NetworkError::Shape("non-finite entry".into()));
        }
        Ok(())
    }

    pub fn weight_entries(&self) -> usize {
        self.arrays.iter().step_by(2).map(|a| a.len()).sum()
    }
}

/// Xavier uniform weights on `±√(6/(n_in+n_out))`, zero biases.
pub fn xavier_init(arch: &Architecture, seed: u64) -> Parameters {
    let mut rng = crate::seed::rng(seed, &[0x5841_5649]);
    let mut arrays = Vec::with_capacity(2 * arch.layers());
    for p in arch.sizes.windows(2) {
        let (n_in, n_out) = (p[0], p[1]);
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((n_in, n_out), || rng.gen_range(-limit..=limit));
        arrays.push(w);
        arrays.push(Array2::zeros((1, n_out)));
    }
    Parameters { arrays, seed }
}

/// Parameter handles of one network declared in a graph.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub ids: Vec<ParamId>,
    exprs: Vec<Expr>,
}

impl NetworkParams {
    pub fn declare(g: &mut Graph, arch: &Architecture) -> Self {
        let mut ids = Vec::new();
        let mut exprs = Vec::new();
        for (l, p) in arch.sizes.windows(2).enumerate() {
            let (wi, we) = g.param(&format!("W{}", l + 1), p[0], p[1]);
            let (bi, be) = g.param(&format!("b{}", l + 1), 1, p[1]);
            ids.extend([wi, bi]);
            exprs.extend([we, be]);
        }
        NetworkParams { ids, exprs }
    }

    /// Binds parameter values, sharing the arrays.
    pub fn bind(&self, b: &mut Bindings, params: &[Arc<Array2<f64>>]) {
        for (id, v) in self.ids.iter().zip(params) {
            b.bind_param_shared(*id, v.clone());
        }
    }

    /// Builds the network output (`rows × n_u`) over single-column
    /// inputs, applying the input scaling inside the graph so input
    /// derivatives are taken in physical coordinates.
    pub fn forward(
        &self,
        g: &mut Graph,
        arch: &Architecture,
        scaling: &InputScaling,
        inputs: &[InputVar],
    ) -> Result<Expr> {
        if inputs.len() != arch.inputs() || scaling.ranges.len() != arch.inputs() {
            return Err(NetworkError::Shape(format!(
                "{} inputs for a {}-input network",
                inputs.len(),
                arch.inputs()
            )));
        }
        let cols: Vec<Expr> = inputs
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (a, c) = scaling.affine(i);
                let ax = g.scale(a, v.expr);
                let k = g.constant(c);
                g.add(ax, k)
            })
            .collect();
        let mut h = g.concat(&cols);
        let last = arch.layers() - 1;
        for l in 0..arch.layers() {
            let z = g.matmul(h, self.exprs[2 * l]);
            let z = g.add(z, self.exprs[2 * l + 1]);
            h = if l < last { arch.activation.apply(g, z) } else { z };
        }
        Ok(h)
    }
}

/// A trained (or initialised) network with its input normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub scaling: InputScaling,
    pub params: Parameters,
}

impl Model {
    pub fn new(arch: Architecture, scaling: InputScaling, seed: u64) -> Result<Self> {
        arch.validate()?;
        if scaling.ranges.len() != arch.inputs() {
            return Err(NetworkError::Shape("scaling ranges vs inputs".into()));
        }
        let params = xavier_init(&arch, seed);
        Ok(Model { arch, scaling, params })
    }

    /// Direct forward pass on `n × n⁰` points, without building a graph.
    pub fn predict(&self, points: &Array2<f64>) -> Array2<f64> {
        let mut h = points.clone();
        for (i, mut c) in h.axis_iter_mut(Axis(1)).enumerate() {
            let (a, s) = self.scaling.affine(i);
            c.mapv_inplace(|x| a * x + s);
        }
        let last = self.arch.layers() - 1;
        for l in 0..self.arch.layers() {
            let mut z = h.dot(self.params.weight(l));
            z += self.params.bias(l);
            if l < last && self.arch.activation == Activation::Tanh {
                z.mapv_inplace(f64::tanh);
            }
            h = z;
        }
        h
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LE>(MODEL_VERSION)?;
        let name = self.arch.activation.name().as_bytes();
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name)?;
        w.write_u32::<LE>(self.arch.sizes.len() as u32)?;
        for &s in &self.arch.sizes {
            w.write_u32::<LE>(s as u32)?;
        }
        for &(lo, hi) in &self.scaling.ranges {
            w.write_f64::<LE>(lo)?;
            w.write_f64::<LE>(hi)?;
        }
        w.write_u64::<LE>(self.params.seed)?;
        for a in &self.params.arrays {
            for &x in a.iter() {
                w.write_f64::<LE>(x)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let trunc = |e: std::io::Error| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                NetworkError::Truncated(e.to_string())
            } else {
                NetworkError::Io(e)
            }
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(trunc)?;
        if &magic != MODEL_MAGIC {
            return Err(NetworkError::BadMagic);
        }
        let version = r.read_u32::<LE>().map_err(trunc)?;
        if version != MODEL_VERSION {
            return Err(NetworkError::Version(version));
        }
        let n = r.read_u32::<LE>().map_err(trunc)? as usize;
        if n > 64 {
            return Err(NetworkError::Truncated("activation name too long".into()));
        }
        let mut name = vec![0u8; n];
        r.read_exact(&mut name).map_err(trunc)?;
        let activation = std::str::from_utf8(&name)
            .ok()
            .and_then(Activation::from_name)
            .ok_or_else(|| NetworkError::Truncated("unknown activation".into()))?;
        let nl = r.read_u32::<LE>().map_err(trunc)? as usize;
        if nl > 1024 {
            return Err(NetworkError::Truncated("layer count".into()));
        }
        let sizes = (0..nl)
            .map(|_| r.read_u32::<LE>().map(|s| s as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(trunc)?;
        let arch = Architecture { sizes, activation };
        arch.validate()?;
        let ranges = (0..arch.inputs())
            .map(|_| Ok((r.read_f64::<LE>()?, r.read_f64::<LE>()?)))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(trunc)?;
        let seed = r.read_u64::<LE>().map_err(trunc)?;
        let mut arrays = Vec::new();
        for p in arch.sizes.windows(2) {
            for shape in [(p[0], p[1]), (1, p[1])] {
                let mut v = vec![0.0; shape.0 * shape.1];
                r.read_f64_into::<LE>(&mut v).map_err(trunc)?;
                arrays.push(Array2::from_shape_vec(shape, v).expect("sized"));
            }
        }
        let params = Parameters { arrays, seed };
        params.check(&arch)?;
        Ok(Model { arch, scaling: InputScaling { ranges }, params })
    }

    pub fn shared_params(&self) -> Vec<Arc<Array2<f64>>> {
        self.params.arrays.iter().cloned().map(Arc::new).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_collapse_to_bias_image() {
        let arch = Architecture::mlp(2, 3, 1, 1);
        let mut m = Model::new(arch, InputScaling::identity(2), 1).unwrap();
        for a in &mut m.params.arrays {
            a.fill(0.0);
        }
        m.params.arrays[1] = ndarray::array![[0.5, -0.2, 0.1]];
        m.params.arrays[2] = ndarray::array![[1.0], [2.0], [3.0]];
        m.params.arrays[3] = ndarray::array![[0.25]];
        let out = m.predict(&ndarray::array![[0.3, -0.7]]);
        let expect = 0.5f64.tanh() + 2.0 * (-0.2f64).tanh() + 3.0 * 0.1f64.tanh() + 0.25;
        assert!((out[[0, 0]] - expect).abs() < 1e-15);
    }
}
