//! The three graph classifiers: GCN, GAT and the GCN->GAT hybrid.
//!
//! All variants share the same scaffolding: a stack of graph layers over
//! the block-diagonal batch, mean readout per graph, then a classifier
//! head (LeakyReLU followed by a linear map to the class logits).
//!
//! * GCN layers propagate through the symmetric-normalized adjacency with
//!   self-loops, `D^{-1/2} (A + I) D^{-1/2}`, followed by a learned linear
//!   map and (on hidden layers) LeakyReLU.
//! * GAT layers score each neighbor pair (j -> i, including i -> i) with
//!   LeakyReLU(a_src . W h_j + a_dst . W h_i), softmax-normalize the
//!   scores over each destination's neighborhood, and aggregate. Hidden
//!   layers concatenate the heads; the final GAT layer averages them.
//! * During training each graph's edge list is stochastically perturbed:
//!   with probability p one absent edge is inserted, then with independent
//!   probability p one existing edge is removed.

use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, VarId};
use crate::batch::GraphBatch;
use crate::error::{Error, Result};
use crate::nn::{he_uniform_init, softmax_cross_entropy, LEAKY_RELU_SLOPE};
use crate::optim::{Grads, ParamSet};
use crate::rng::Rng;
use crate::sparse::CsrMatrix;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Gcn,
    Gat,
    Hybrid,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Gcn => "gcn",
            Variant::Gat => "gat",
            Variant::Hybrid => "hybrid",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Variant::Gcn),
            "gat" => Ok(Variant::Gat),
            "hybrid" => Ok(Variant::Hybrid),
            other => Err(Error::Usage(format!(
                "unknown model variant '{}' (expected gcn, gat or hybrid)",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub gcn_layers: usize,
    #[serde(default = "default_layers")]
    pub gat_layers: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    pub num_classes: usize,
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default = "default_edge_aug_p")]
    pub edge_aug_p: f64,
}

fn default_hidden() -> usize {
    512
}
fn default_layers() -> usize {
    2
}
fn default_heads() -> usize {
    2
}
fn default_input_dim() -> usize {
    3
}
fn default_edge_aug_p() -> f64 {
    0.5
}

impl ModelConfig {
    pub fn new(variant: Variant, num_classes: usize) -> Self {
        ModelConfig {
            variant,
            hidden_dim: default_hidden(),
            gcn_layers: default_layers(),
            gat_layers: default_layers(),
            heads: default_heads(),
            num_classes,
            input_dim: default_input_dim(),
            edge_aug_p: default_edge_aug_p(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim < 1 {
            return Err(Error::Input("hidden_dim must be >= 1".into()));
        }
        if self.heads < 1 {
            return Err(Error::Input("heads must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Input("num_classes must be >= 2".into()));
        }
        if self.input_dim < 1 {
            return Err(Error::Input("input_dim must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_aug_p) {
            return Err(Error::Input(format!(
                "edge_aug_p must be in [0, 1], got {}",
                self.edge_aug_p
            )));
        }
        let uses_gcn = matches!(self.variant, Variant::Gcn | Variant::Hybrid);
        let uses_gat = matches!(self.variant, Variant::Gat | Variant::Hybrid);
        if uses_gcn && self.gcn_layers < 1 {
            return Err(Error::Input("gcn_layers must be >= 1".into()));
        }
        if uses_gat && self.gat_layers < 1 {
            return Err(Error::Input("gat_layers must be >= 1".into()));
        }
        // hidden GAT layers concatenate their heads into hidden_dim
        if uses_gat && self.gat_layers > 1 && !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(Error::Input(format!(
                "hidden_dim {} must be divisible by heads {} for concatenating GAT layers",
                self.hidden_dim, self.heads
            )));
        }
        Ok(())
    }

    fn gat_input_dim(&self) -> usize {
        match self.variant {
            Variant::Gat => self.input_dim,
            _ => self.hidden_dim,
        }
    }

    /// Head output width of GAT layer `layer`. Hidden layers split
    /// hidden_dim across concatenated heads; the final layer averages
    /// full-width heads.
    fn gat_head_dim(&self, layer: usize) -> usize {
        if layer + 1 < self.gat_layers {
            self.hidden_dim / self.heads
        } else {
            self.hidden_dim
        }
    }

    fn gat_layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.gat_input_dim()
        } else {
            self.hidden_dim
        }
    }

    /// (name, shape, fan_in) for every parameter; fan_in 0 means a
    /// zero-initialized bias.
    pub fn param_spec(&self) -> Vec<(String, Vec<usize>, usize)> {
        let mut spec = Vec::new();
        if matches!(self.variant, Variant::Gcn | Variant::Hybrid) {
            for layer in 0..self.gcn_layers {
                let f_in = if layer == 0 {
                    self.input_dim
                } else {
                    self.hidden_dim
                };
                spec.push((
                    format!("gcn.{}.weight", layer),
                    vec![f_in, self.hidden_dim],
                    f_in,
                ));
                spec.push((format!("gcn.{}.bias", layer), vec![self.hidden_dim], 0));
            }
        }
        if matches!(self.variant, Variant::Gat | Variant::Hybrid) {
            for layer in 0..self.gat_layers {
                let f_in = self.gat_layer_input(layer);
                let head_dim = self.gat_head_dim(layer);
                for head in 0..self.heads {
                    let base = format!("gat.{}.head{}", layer, head);
                    spec.push((format!("{}.weight", base), vec![f_in, head_dim], f_in));
                    spec.push((format!("{}.att_src", base), vec![head_dim, 1], head_dim));
                    spec.push((format!("{}.att_dst", base), vec![head_dim, 1], head_dim));
                }
            }
        }
        spec.push((
            "classifier.weight".to_string(),
            vec![self.hidden_dim, self.num_classes],
            self.hidden_dim,
        ));
        spec.push(("classifier.bias".to_string(), vec![self.num_classes], 0));
        spec
    }
}

/// He-initialize every weight; biases start at zero. The draw order is
/// the order of [`ModelConfig::param_spec`], so a fixed seed gives a
/// fixed model.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, rng: &mut Rng) -> Result<ParamSet<T>> {
    cfg.validate()?;
    let mut params = ParamSet::new();
    for (name, shape, fan_in) in cfg.param_spec() {
        let tensor = if fan_in == 0 {
            Tensor::zeros(&shape)
        } else {
            he_uniform_init(&shape, fan_in, rng)?
        };
        params.insert(&name, tensor);
    }
    Ok(params)
}

/// Check that a loaded parameter set matches what `cfg` expects.
pub fn check_params<T: Scalar>(cfg: &ModelConfig, params: &ParamSet<T>) -> Result<()> {
    let spec = cfg.param_spec();
    if spec.len() != params.len() {
        return Err(Error::Input(format!(
            "model expects {} parameters, checkpoint has {}",
            spec.len(),
            params.len()
        )));
    }
    for (name, shape, _) in spec {
        let t = params.get(&name)?;
        if t.shape() != shape {
            return Err(Error::Input(format!(
                "parameter '{}' has shape {:?}, expected {:?}",
                name,
                t.shape(),
                shape
            )));
        }
    }
    Ok(())
}

/// Symmetric-normalized adjacency with self-loops over `n` nodes:
/// `D^{-1/2} (A + I) D^{-1/2}` where D is the degree of A + I.
pub fn normalize_adjacency<T: Scalar>(edges: &[(u32, u32)], n: usize) -> CsrMatrix<T> {
    let mut degree = vec![1.0f64; n]; // self-loop
    for &(u, v) in edges {
        degree[u as usize] += 1.0;
        degree[v as usize] += 1.0;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut triplets = Vec::with_capacity(2 * edges.len() + n);
    for i in 0..n {
        triplets.push((i, i, T::from_f64(inv_sqrt[i] * inv_sqrt[i])));
    }
    for &(u, v) in edges {
        let (u, v) = (u as usize, v as usize);
        let w = T::from_f64(inv_sqrt[u] * inv_sqrt[v]);
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    CsrMatrix::from_triplets(n, triplets)
}

/// What one augmentation pass did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentOutcome {
    pub edges: Vec<(u32, u32)>,
    pub added: Option<(u32, u32)>,
    pub removed: Option<(u32, u32)>,
}

/// Stochastic edge perturbation used during training: one insertion draw
/// (skipped when the graph is complete) then one removal draw (skipped
/// when there is nothing to remove), each firing with probability `p`.
/// The removal draws from the post-insertion edge list.
pub fn augment_edges(edges: &[(u32, u32)], n: usize, p: f64, rng: &mut Rng) -> Vec<(u32, u32)> {
    augment_edges_detailed(edges, n, p, rng).edges
}

/// [`augment_edges`] plus a record of which actions fired.
pub fn augment_edges_detailed(
    edges: &[(u32, u32)],
    n: usize,
    p: f64,
    rng: &mut Rng,
) -> AugmentOutcome {
    debug_assert!((0.0..=1.0).contains(&p), "edge_aug_p out of range");
    let mut out = edges.to_vec();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let mut added = None;
    let mut removed = None;

    if out.len() < total_pairs && rng.uniform_f64() < p {
        let absent = total_pairs - out.len();
        let target = rng.range(absent as u64) as usize;
        // walk pairs in lexicographic order counting the absent ones;
        // `out` is sorted so a single cursor suffices
        let mut cursor = 0usize;
        let mut seen_absent = 0usize;
        'outer: for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if cursor < out.len() && out[cursor] == (u, v) {
                    cursor += 1;
                    continue;
                }
                if seen_absent == target {
                    out.insert(cursor, (u, v));
                    added = Some((u, v));
                    break 'outer;
                }
                seen_absent += 1;
            }
        }
    }

    if !out.is_empty() && rng.uniform_f64() < p {
        let idx = rng.range_usize(out.len());
        removed = Some(out.remove(idx));
    }
    AugmentOutcome {
        edges: out,
        added,
        removed,
    }
}

/// Arithmetic mean of each graph's node rows.
pub fn readout_mean<T: Scalar>(
    h: &Tensor<T>,
    membership: &[u32],
    n_graphs: usize,
) -> Result<Tensor<T>> {
    if h.rows() != membership.len() {
        return Err(Error::Input(format!(
            "readout: {} rows but membership of length {}",
            h.rows(),
            membership.len()
        )));
    }
    let mut counts = vec![0usize; n_graphs];
    for &g in membership {
        counts[g as usize] += 1;
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Input(format!("graph {} has zero nodes", g)));
    }
    let f = h.cols();
    let mut out = Tensor::zeros(&[n_graphs, f]);
    for (i, &g) in membership.iter().enumerate() {
        let src = h.row(i);
        let dst: &mut [T] = &mut out.data_mut()[g as usize * f..(g as usize + 1) * f];
        for j in 0..f {
            dst[j] = T::from_f64(dst[j].to_f64() + src[j].to_f64());
        }
    }
    for g in 0..n_graphs {
        let inv = 1.0 / counts[g] as f64;
        let dst: &mut [T] = &mut out.data_mut()[g * f..(g + 1) * f];
        for d in dst.iter_mut() {
            *d = T::from_f64(d.to_f64() * inv);
        }
    }
    Ok(out)
}

/// One GCN propagation: Â · H · W + b, optionally LeakyReLU-activated.
pub fn gcn_layer<T: Scalar>(
    tape: &mut Tape<T>,
    h: VarId,
    adj: Rc<CsrMatrix<T>>,
    weight: VarId,
    bias: VarId,
    activate: bool,
) -> VarId {
    let propagated = tape.spmm(adj, h);
    let transformed = tape.matmul(propagated, weight);
    let with_bias = tape.add_row_bias(transformed, bias);
    if activate {
        tape.leaky_relu(with_bias, LEAKY_RELU_SLOPE)
    } else {
        with_bias
    }
}

/// Directed attention edges (src -> dst) with self-loops, grouped by
/// destination, plus the gather index lists derived from them.
struct AttentionEdges {
    directed: Rc<Vec<(u32, u32)>>,
    seg_starts: Rc<Vec<usize>>,
    src_idx: Rc<Vec<usize>>,
    dst_idx: Rc<Vec<usize>>,
}

fn attention_edges(edges: &[(u32, u32)], n: usize) -> AttentionEdges {
    let mut directed: Vec<(u32, u32)> = Vec::with_capacity(2 * edges.len() + n);
    for &(u, v) in edges {
        directed.push((u, v));
        directed.push((v, u));
    }
    for i in 0..n as u32 {
        directed.push((i, i));
    }
    directed.sort_unstable_by_key(|&(src, dst)| (dst, src));

    let mut seg_starts = Vec::with_capacity(n + 1);
    let mut current = 0u32;
    seg_starts.push(0);
    for (i, &(_, dst)) in directed.iter().enumerate() {
        while current < dst {
            // every node has a self-loop so groups are never empty, but
            // stay robust to gaps anyway
            seg_starts.push(i);
            current += 1;
        }
    }
    while (seg_starts.len() as u32) <= n as u32 {
        seg_starts.push(directed.len());
    }

    let src_idx: Vec<usize> = directed.iter().map(|&(s, _)| s as usize).collect();
    let dst_idx: Vec<usize> = directed.iter().map(|&(_, d)| d as usize).collect();
    AttentionEdges {
        directed: Rc::new(directed),
        seg_starts: Rc::new(seg_starts),
        src_idx: Rc::new(src_idx),
        dst_idx: Rc::new(dst_idx),
    }
}

pub struct GatHeadParams {
    pub weight: VarId,
    pub att_src: VarId,
    pub att_dst: VarId,
}

pub struct GatLayerOutput {
    pub output: VarId,
    /// Attention coefficients per head, one entry per directed edge.
    pub alphas: Vec<VarId>,
}

/// Multi-head attention layer. Scores e = LeakyReLU(a_src.Wh_src +
/// a_dst.Wh_dst) are softmax-normalized over each destination's incoming
/// edges (self-loop included), heads are concatenated or averaged.
pub fn gat_layer<T: Scalar>(
    tape: &mut Tape<T>,
    h: VarId,
    edges: &[(u32, u32)],
    n: usize,
    heads: &[GatHeadParams],
    concat: bool,
) -> GatLayerOutput {
    let AttentionEdges {
        directed,
        seg_starts,
        src_idx,
        dst_idx,
    } = attention_edges(edges, n);
    let mut head_outputs = Vec::with_capacity(heads.len());
    let mut alphas = Vec::with_capacity(heads.len());
    for head in heads {
        let wh = tape.matmul(h, head.weight);
        let s_src = tape.matmul(wh, head.att_src);
        let s_dst = tape.matmul(wh, head.att_dst);
        let src_scores = tape.gather_rows(s_src, Rc::clone(&src_idx));
        let dst_scores = tape.gather_rows(s_dst, Rc::clone(&dst_idx));
        let raw = tape.add(src_scores, dst_scores);
        let activated = tape.leaky_relu(raw, LEAKY_RELU_SLOPE);
        let alpha = tape.segment_softmax(activated, Rc::clone(&seg_starts));
        let aggregated = tape.attn_aggregate(alpha, wh, Rc::clone(&directed), n);
        head_outputs.push(aggregated);
        alphas.push(alpha);
    }
    let output = if head_outputs.len() == 1 {
        head_outputs[0]
    } else if concat {
        tape.concat_cols(&head_outputs)
    } else {
        tape.mean_of(&head_outputs)
    };
    GatLayerOutput { output, alphas }
}

fn batch_features<T: Scalar>(batch: &GraphBatch) -> Tensor<T> {
    let mut data = Vec::with_capacity(batch.node_count() * 3);
    for f in &batch.node_features {
        data.extend(f.iter().map(|&v| T::from_f64(v as f64)));
    }
    Tensor::from_vec(&[batch.node_count(), 3], data).expect("batch feature shape")
}

/// Build the full forward pass for `cfg.variant` on the tape and return
/// the logits variable (shape graphs x classes). During training each
/// graph's edges are independently augmented first.
pub fn model_forward<T: Scalar>(
    tape: &mut Tape<T>,
    batch: &GraphBatch,
    params: &ParamSet<T>,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut Rng,
) -> Result<VarId> {
    cfg.validate()?;
    check_params(cfg, params)?;
    if cfg.input_dim != 3 {
        return Err(Error::Input(format!(
            "region graphs carry 3 features per node, config says {}",
            cfg.input_dim
        )));
    }

    let work;
    let batch = if training {
        let per_graph: Vec<Vec<(u32, u32)>> = (0..batch.graph_count())
            .map(|g| {
                let local = batch.local_edges(g);
                let n_local = batch.node_offsets[g + 1] - batch.node_offsets[g];
                augment_edges(&local, n_local, cfg.edge_aug_p, rng)
            })
            .collect();
        let mut augmented = batch.clone();
        augmented.replace_edges(per_graph);
        work = augmented;
        &work
    } else {
        batch
    };

    let n = batch.node_count();
    let mut h = tape.leaf(batch_features::<T>(batch));

    if matches!(cfg.variant, Variant::Gcn | Variant::Hybrid) {
        let adj = Rc::new(normalize_adjacency::<T>(&batch.edges, n));
        for layer in 0..cfg.gcn_layers {
            let weight = tape.param(
                &format!("gcn.{}.weight", layer),
                params.get(&format!("gcn.{}.weight", layer))?.clone(),
            );
            let bias = tape.param(
                &format!("gcn.{}.bias", layer),
                params.get(&format!("gcn.{}.bias", layer))?.clone(),
            );
            // in the pure-GCN variant the last layer feeds the readout
            // directly and stays pre-activation
            let activate = !(cfg.variant == Variant::Gcn && layer + 1 == cfg.gcn_layers);
            h = gcn_layer(tape, h, Rc::clone(&adj), weight, bias, activate);
        }
    }

    if matches!(cfg.variant, Variant::Gat | Variant::Hybrid) {
        for layer in 0..cfg.gat_layers {
            let mut heads = Vec::with_capacity(cfg.heads);
            for head in 0..cfg.heads {
                let base = format!("gat.{}.head{}", layer, head);
                heads.push(GatHeadParams {
                    weight: tape.param(
                        &format!("{}.weight", base),
                        params.get(&format!("{}.weight", base))?.clone(),
                    ),
                    att_src: tape.param(
                        &format!("{}.att_src", base),
                        params.get(&format!("{}.att_src", base))?.clone(),
                    ),
                    att_dst: tape.param(
                        &format!("{}.att_dst", base),
                        params.get(&format!("{}.att_dst", base))?.clone(),
                    ),
                });
            }
            let concat = layer + 1 < cfg.gat_layers;
            h = gat_layer(tape, h, &batch.edges, n, &heads, concat).output;
        }
    }

    let membership = Rc::new(batch.membership.clone());
    let pooled = tape.mean_pool_rows(h, membership, batch.graph_count());
    let activated = tape.leaky_relu(pooled, LEAKY_RELU_SLOPE);
    let cls_weight = tape.param(
        "classifier.weight",
        params.get("classifier.weight")?.clone(),
    );
    let cls_bias = tape.param("classifier.bias", params.get("classifier.bias")?.clone());
    let projected = tape.matmul(activated, cls_weight);
    let logits = tape.add_row_bias(projected, cls_bias);

    if !tape.value(logits).all_finite() {
        return Err(Error::Numeric("non-finite logits in forward pass".into()));
    }
    Ok(logits)
}

/// Scalar training loss plus parameter gradients for one batch.
pub struct LossValue<T> {
    pub loss: f64,
    pub grads: Grads<T>,
    pub logits: Tensor<T>,
}

pub fn forward_loss<T: Scalar>(
    batch: &GraphBatch,
    params: &ParamSet<T>,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut Rng,
) -> Result<LossValue<T>> {
    let mut tape = Tape::new();
    let logits = model_forward(&mut tape, batch, params, cfg, training, rng)?;
    let ce = softmax_cross_entropy(tape.value(logits), &batch.labels)?;
    let tape_grads = tape.backward(logits, ce.grad_logits);
    let grads = tape.param_grads(&tape_grads);
    Ok(LossValue {
        loss: ce.loss,
        grads,
        logits: tape.value(logits).clone(),
    })
}

/// Evaluation-mode logits (no augmentation, no gradients).
pub fn forward_logits<T: Scalar>(
    batch: &GraphBatch,
    params: &ParamSet<T>,
    cfg: &ModelConfig,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let mut rng = Rng::seed_from_u64(0); // unused: augmentation is off
    let logits = model_forward(&mut tape, batch, params, cfg, false, &mut rng)?;
    Ok(tape.value(logits).clone())
}
