//! Learnable parameter storage, the Adam update, and the `GLWT`
//! checkpoint container.
//!
//! Checkpoint layout (little-endian):
//! magic `GLWT`, version u16, parameter count u32, then per parameter in
//! name order: name (u32 length + UTF-8), ndim u32, dims u32 each,
//! float32 value data, float32 Adam m, float32 Adam v, step count u64.
//! The step count is written per record and must agree across records.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const CHECKPOINT_MAGIC: [u8; 4] = *b"GLWT";
const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

/// Named parameter tensors plus per-parameter Adam state and the shared
/// step counter.
#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    params: BTreeMap<String, Param<T>>,
    step_count: u64,
}

/// Gradients keyed by parameter name.
pub type Grads<T> = BTreeMap<String, Tensor<T>>;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            params: BTreeMap::new(),
            step_count: 0,
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) {
        let m = Tensor::zeros(value.shape());
        let v = Tensor::zeros(value.shape());
        self.params.insert(name.to_string(), Param { value, m, v });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Input(format!("unknown parameter '{}'", name)))
    }

    pub fn set_value(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Input(format!("unknown parameter '{}'", name)))?;
        p.value = value;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn total_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Standard Adam with bias correction. The step counter is shared
    /// across parameters and increments once per call.
    pub fn adam_step(&mut self, grads: &Grads<T>, cfg: &AdamConfig) -> Result<()> {
        for name in grads.keys() {
            if !self.params.contains_key(name) {
                return Err(Error::Input(format!(
                    "gradient for unknown parameter '{}'",
                    name
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);

        for (name, param) in self.params.iter_mut() {
            let grad = grads
                .get(name)
                .ok_or_else(|| Error::Input(format!("missing gradient for parameter '{}'", name)))?;
            if grad.shape() != param.value.shape() {
                return Err(Error::Input(format!(
                    "gradient shape {:?} does not match parameter '{}' shape {:?}",
                    grad.shape(),
                    name,
                    param.value.shape()
                )));
            }
            if !grad.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter '{}'",
                    name
                )));
            }
            let n = param.value.len();
            let (values, ms, vs) = (
                param.value.data_mut(),
                param.m.data_mut(),
                param.v.data_mut(),
            );
            let g = grad.data();
            for i in 0..n {
                let gi = g[i].to_f64();
                let m = cfg.beta1 * ms[i].to_f64() + (1.0 - cfg.beta1) * gi;
                let v = cfg.beta2 * vs[i].to_f64() + (1.0 - cfg.beta2) * gi * gi;
                ms[i] = T::from_f64(m);
                vs[i] = T::from_f64(v);
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                let update = cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
                values[i] = T::from_f64(values[i].to_f64() - update);
            }
        }
        Ok(())
    }

    /// Convert parameter values to another precision; Adam state carries over.
    pub fn convert<U: Scalar>(&self) -> ParamSet<U> {
        let mut out = ParamSet::new();
        for (name, p) in &self.params {
            out.params.insert(
                name.clone(),
                Param {
                    value: Tensor::from_f64_tensor(&p.value.to_f64_tensor()),
                    m: Tensor::from_f64_tensor(&p.m.to_f64_tensor()),
                    v: Tensor::from_f64_tensor(&p.v.to_f64_tensor()),
                },
            );
        }
        out.step_count = self.step_count;
        out
    }
}

impl ParamSet<f32> {
    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, p) in &self.params {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            let shape = p.value.shape();
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for &d in shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for tensor in [&p.value, &p.m, &p.v] {
                for &v in tensor.data() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            w.write_all(&self.step_count.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut r = CountingReader::new(BufReader::new(file));

        let mut magic = [0u8; 4];
        r.read_exact_or_corrupt(&mut magic, "checkpoint magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!(
                "bad checkpoint magic {:?}, expected {:?}",
                magic, CHECKPOINT_MAGIC
            )));
        }
        let version = r.read_u16("checkpoint version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                version
            )));
        }
        let count = r.read_u32("parameter count")?;
        let mut set = ParamSet::new();
        let mut shared_t: Option<u64> = None;
        for _ in 0..count {
            let name = r.read_string("parameter name")?;
            let ndim = r.read_u32("parameter ndim")? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.read_u32("parameter dim")? as usize);
            }
            let len: usize = shape.iter().product();
            let value = r.read_f32_tensor(&shape, len, "parameter values")?;
            let m = r.read_f32_tensor(&shape, len, "adam m")?;
            let v = r.read_f32_tensor(&shape, len, "adam v")?;
            let t = r.read_u64("adam step count")?;
            match shared_t {
                None => shared_t = Some(t),
                Some(prev) if prev != t => {
                    return Err(Error::Format(format!(
                        "inconsistent step counts in checkpoint: {} vs {}",
                        prev, t
                    )))
                }
                _ => {}
            }
            set.params.insert(name, Param { value, m, v });
        }
        set.step_count = shared_t.unwrap_or(0);
        Ok(set)
    }
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    fn read_exact_or_corrupt(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::Corrupt {
                offset: at,
                detail: format!("truncated while reading {}", what),
            }),
            Err(e) => Err(e.into()),
        }
    }

    fn read_u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact_or_corrupt(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_or_corrupt(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact_or_corrupt(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn read_string(&mut self, what: &str) -> Result<String> {
        let len = self.read_u32(what)? as usize;
        if len > 1 << 20 {
            return Err(Error::Format(format!("unreasonable {} length {}", what, len)));
        }
        let mut buf = vec![0u8; len];
        self.read_exact_or_corrupt(&mut buf, what)?;
        String::from_utf8(buf).map_err(|_| Error::Format(format!("{} is not UTF-8", what)))
    }

    fn read_f32_tensor(&mut self, shape: &[usize], len: usize, what: &str) -> Result<Tensor<f32>> {
        let mut buf = vec![0u8; len * 4];
        self.read_exact_or_corrupt(&mut buf, what)?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::from_vec(shape, data)
    }
}
