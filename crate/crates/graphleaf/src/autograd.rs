//! Minimal reverse-mode tape.
//!
//! Each operation evaluates eagerly and records a node; [`Tape::backward`]
//! walks the nodes in reverse creation order and accumulates gradients.
//! The op set is exactly what the graph models need, no more. All
//! accumulation loops run in a fixed index order so that forward and
//! backward are bit-deterministic for a given input.

use std::collections::BTreeMap;
use std::rc::Rc;

use crate::nn::leaky_relu_grad_factor;
use crate::optim::Grads;
use crate::sparse::CsrMatrix;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

enum Op<T> {
    Leaf,
    MatMul {
        a: VarId,
        b: VarId,
    },
    AddRowBias {
        h: VarId,
        bias: VarId,
    },
    LeakyRelu {
        x: VarId,
        slope: f64,
    },
    /// Multiply by a constant sparse operator. The operator must be
    /// symmetric (true for the normalized adjacency), which lets the
    /// backward pass reuse it directly.
    SpmmFixed {
        adj: Rc<CsrMatrix<T>>,
        h: VarId,
    },
    GatherRows {
        x: VarId,
        idx: Rc<Vec<usize>>,
    },
    Add {
        a: VarId,
        b: VarId,
    },
    /// Softmax over contiguous groups of a 1-D score vector.
    SegmentSoftmax {
        x: VarId,
        seg_starts: Rc<Vec<usize>>,
    },
    /// out[dst] += alpha_e * wh[src] over directed edges.
    AttnAggregate {
        alpha: VarId,
        wh: VarId,
        edges: Rc<Vec<(u32, u32)>>,
    },
    ConcatCols {
        parts: Vec<VarId>,
    },
    MeanOf {
        parts: Vec<VarId>,
    },
    MeanPoolRows {
        h: VarId,
        graph_of: Rc<Vec<u32>>,
        n_graphs: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    param_names: BTreeMap<String, VarId>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct TapeGrads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> TapeGrads<T> {
    pub fn get(&self, id: VarId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            param_names: BTreeMap::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> VarId {
        self.nodes.push(Node { value, op });
        VarId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> VarId {
        self.push(value, Op::Leaf)
    }

    /// A leaf remembered by name, so its gradient can be collected into a
    /// [`Grads`] map after backward.
    pub fn param(&mut self, name: &str, value: Tensor<T>) -> VarId {
        let id = self.push(value, Op::Leaf);
        self.param_names.insert(name.to_string(), id);
        id
    }

    pub fn value(&self, id: VarId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul { a, b })
    }

    pub fn add_row_bias(&mut self, h: VarId, bias: VarId) -> VarId {
        let hv = self.value(h);
        let bv = self.value(bias);
        let (rows, cols) = (hv.rows(), hv.cols());
        assert_eq!(bv.len(), cols, "bias length mismatch");
        let mut out = hv.clone();
        for r in 0..rows {
            let dst = &mut out.data_mut()[r * cols..(r + 1) * cols];
            for (d, &b) in dst.iter_mut().zip(bv.data().iter()) {
                *d = T::from_f64(d.to_f64() + b.to_f64());
            }
        }
        self.push(out, Op::AddRowBias { h, bias })
    }

    pub fn leaky_relu(&mut self, x: VarId, slope: f64) -> VarId {
        let value = crate::nn::leaky_relu(self.value(x), slope);
        self.push(value, Op::LeakyRelu { x, slope })
    }

    pub fn spmm(&mut self, adj: Rc<CsrMatrix<T>>, h: VarId) -> VarId {
        debug_assert!(adj.is_symmetric(), "spmm operator must be symmetric");
        let value = adj.matmul_dense(self.value(h));
        self.push(value, Op::SpmmFixed { adj, h })
    }

    pub fn gather_rows(&mut self, x: VarId, idx: Rc<Vec<usize>>) -> VarId {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            data.extend_from_slice(xv.row(i));
        }
        let value = Tensor::from_vec(&[idx.len(), cols], data).expect("gather shape");
        self.push(value, Op::GatherRows { x, idx })
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.shape(), bv.shape(), "add shape mismatch");
        let mut out = av.clone();
        out.add_assign(bv);
        self.push(out, Op::Add { a, b })
    }

    /// `seg_starts` has one entry per group plus a trailing total length.
    pub fn segment_softmax(&mut self, x: VarId, seg_starts: Rc<Vec<usize>>) -> VarId {
        let xv = self.value(x);
        let mut out = vec![T::ZERO; xv.len()];
        for w in seg_starts.windows(2) {
            let (s, e) = (w[0], w[1]);
            let scores = &xv.data()[s..e];
            let max = scores
                .iter()
                .fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64()));
            let mut sum = 0.0f64;
            for (o, v) in out[s..e].iter_mut().zip(scores.iter()) {
                let ex = (v.to_f64() - max).exp();
                *o = T::from_f64(ex);
                sum += ex;
            }
            for o in out[s..e].iter_mut() {
                *o = T::from_f64(o.to_f64() / sum);
            }
        }
        let shape = xv.shape().to_vec();
        let value = Tensor::from_vec(&shape, out).expect("segment softmax shape");
        self.push(value, Op::SegmentSoftmax { x, seg_starts })
    }

    pub fn attn_aggregate(
        &mut self,
        alpha: VarId,
        wh: VarId,
        edges: Rc<Vec<(u32, u32)>>,
        n_out: usize,
    ) -> VarId {
        let av = self.value(alpha);
        let whv = self.value(wh);
        assert_eq!(av.len(), edges.len(), "one alpha per edge");
        let f = whv.cols();
        let mut out = Tensor::zeros(&[n_out, f]);
        for (e, &(src, dst)) in edges.iter().enumerate() {
            let a = av.data()[e].to_f64();
            let src_row = whv.row(src as usize);
            let dst_range = dst as usize * f..(dst as usize + 1) * f;
            let dst_row: &mut [T] = &mut out.data_mut()[dst_range];
            for j in 0..f {
                dst_row[j] = T::from_f64(dst_row[j].to_f64() + a * src_row[j].to_f64());
            }
        }
        self.push(out, Op::AttnAggregate { alpha, wh, edges })
    }

    pub fn concat_cols(&mut self, parts: &[VarId]) -> VarId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::from_vec(&[rows, total], data).expect("concat shape");
        self.push(
            value,
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
        )
    }

    pub fn mean_of(&mut self, parts: &[VarId]) -> VarId {
        assert!(!parts.is_empty());
        let shape = self.value(parts[0]).shape().to_vec();
        let mut out: Tensor<T> = Tensor::zeros(&shape);
        let k = parts.len() as f64;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.shape(), &shape[..]);
            for (o, v) in out.data_mut().iter_mut().zip(pv.data().iter()) {
                *o = T::from_f64(o.to_f64() + v.to_f64() / k);
            }
        }
        self.push(
            out,
            Op::MeanOf {
                parts: parts.to_vec(),
            },
        )
    }

    pub fn mean_pool_rows(&mut self, h: VarId, graph_of: Rc<Vec<u32>>, n_graphs: usize) -> VarId {
        let hv = self.value(h);
        assert_eq!(hv.rows(), graph_of.len(), "membership length mismatch");
        let f = hv.cols();
        let mut counts = vec![0usize; n_graphs];
        for &g in graph_of.iter() {
            counts[g as usize] += 1;
        }
        let mut out = Tensor::zeros(&[n_graphs, f]);
        for (i, &g) in graph_of.iter().enumerate() {
            let src = hv.row(i);
            let dst: &mut [T] = &mut out.data_mut()[g as usize * f..(g as usize + 1) * f];
            for j in 0..f {
                dst[j] = T::from_f64(dst[j].to_f64() + src[j].to_f64());
            }
        }
        for g in 0..n_graphs {
            let c = counts[g].max(1) as f64;
            let dst = &mut out.data_mut()[g * f..(g + 1) * f];
            for d in dst.iter_mut() {
                *d = T::from_f64(d.to_f64() / c);
            }
        }
        self.push(
            out,
            Op::MeanPoolRows {
                h,
                graph_of,
                n_graphs,
            },
        )
    }

    /// Reverse pass seeded with `d(objective)/d(value(from))`.
    pub fn backward(&self, from: VarId, seed: Tensor<T>) -> TapeGrads<T> {
        assert_eq!(
            seed.shape(),
            self.value(from).shape(),
            "backward seed shape mismatch"
        );
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[from.0] = Some(seed);

        for i in (0..=from.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            match &self.nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul { a, b } => {
                    let ga = g.matmul_nt(self.value(*b));
                    let gb = self.value(*a).matmul_tn(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRowBias { h, bias } => {
                    let cols = g.cols();
                    let mut gb: Tensor<T> = Tensor::zeros(&[cols]);
                    for r in 0..g.rows() {
                        let row = g.row(r);
                        for (d, &v) in gb.data_mut().iter_mut().zip(row.iter()) {
                            *d = T::from_f64(d.to_f64() + v.to_f64());
                        }
                    }
                    accumulate(&mut grads, *h, g);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = self.value(*x);
                    let mut gx = g;
                    for (d, &v) in gx.data_mut().iter_mut().zip(xv.data().iter()) {
                        let f = leaky_relu_grad_factor(v, *slope);
                        *d = T::from_f64(d.to_f64() * f.to_f64());
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::SpmmFixed { adj, h } => {
                    // adj is symmetric, so adjᵀ·g == adj·g
                    let gh = adj.matmul_dense(&g);
                    accumulate(&mut grads, *h, gh);
                }
                Op::GatherRows { x, idx } => {
                    let xv = self.value(*x);
                    let cols = xv.cols();
                    let mut gx = Tensor::zeros(xv.shape());
                    for (row, &src) in idx.iter().enumerate() {
                        let grow = g.row(row);
                        let dst: &mut [T] = &mut gx.data_mut()[src * cols..(src + 1) * cols];
                        for j in 0..cols {
                            dst[j] = T::from_f64(dst[j].to_f64() + grow[j].to_f64());
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::SegmentSoftmax { x, seg_starts } => {
                    let alpha = &self.nodes[i].value;
                    let mut gx = Tensor::zeros(alpha.shape());
                    for w in seg_starts.windows(2) {
                        let (s, e) = (w[0], w[1]);
                        let mut dot = 0.0f64;
                        for j in s..e {
                            dot += g.data()[j].to_f64() * alpha.data()[j].to_f64();
                        }
                        for j in s..e {
                            let a = alpha.data()[j].to_f64();
                            gx.data_mut()[j] = T::from_f64(a * (g.data()[j].to_f64() - dot));
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::AttnAggregate { alpha, wh, edges } => {
                    let av = self.value(*alpha);
                    let whv = self.value(*wh);
                    let f = whv.cols();
                    let mut galpha = Tensor::zeros(av.shape());
                    let mut gwh = Tensor::zeros(whv.shape());
                    for (e, &(src, dst)) in edges.iter().enumerate() {
                        let gout = g.row(dst as usize);
                        let src_row = whv.row(src as usize);
                        let mut dot = 0.0f64;
                        for j in 0..f {
                            dot += gout[j].to_f64() * src_row[j].to_f64();
                        }
                        galpha.data_mut()[e] = T::from_f64(dot);
                        let a = av.data()[e].to_f64();
                        let dst_range = src as usize * f..(src as usize + 1) * f;
                        let dst_row: &mut [T] = &mut gwh.data_mut()[dst_range];
                        for j in 0..f {
                            dst_row[j] =
                                T::from_f64(dst_row[j].to_f64() + a * gout[j].to_f64());
                        }
                    }
                    accumulate(&mut grads, *alpha, galpha);
                    accumulate(&mut grads, *wh, gwh);
                }
                Op::ConcatCols { parts } => {
                    let rows = g.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let mut gp = Tensor::zeros(&[rows, pc]);
                        for r in 0..rows {
                            let src = &g.row(r)[offset..offset + pc];
                            gp.data_mut()[r * pc..(r + 1) * pc].copy_from_slice(src);
                        }
                        accumulate(&mut grads, p, gp);
                        offset += pc;
                    }
                }
                Op::MeanOf { parts } => {
                    let k = parts.len() as f64;
                    for &p in parts {
                        let gp = g.map(|v| T::from_f64(v.to_f64() / k));
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::MeanPoolRows {
                    h,
                    graph_of,
                    n_graphs,
                } => {
                    let hv = self.value(*h);
                    let f = hv.cols();
                    let mut counts = vec![0usize; *n_graphs];
                    for &gid in graph_of.iter() {
                        counts[gid as usize] += 1;
                    }
                    let mut gh = Tensor::zeros(hv.shape());
                    for (row, &gid) in graph_of.iter().enumerate() {
                        let c = counts[gid as usize].max(1) as f64;
                        let src = g.row(gid as usize);
                        let dst = &mut gh.data_mut()[row * f..(row + 1) * f];
                        for j in 0..f {
                            dst[j] = T::from_f64(src[j].to_f64() / c);
                        }
                    }
                    accumulate(&mut grads, *h, gh);
                }
            }
        }

        TapeGrads { grads }
    }

    /// Collect gradients of all named params into a [`Grads`] map; params
    /// unreached by backward get zero gradients.
    pub fn param_grads(&self, grads: &TapeGrads<T>) -> Grads<T> {
        let mut out = Grads::new();
        for (name, &id) in &self.param_names {
            let g = grads
                .get(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(self.value(id).shape()));
            out.insert(name.clone(), g);
        }
        out
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: VarId, g: Tensor<T>) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
