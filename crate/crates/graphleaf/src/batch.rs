//! Block-diagonal graph batching: several graphs packed into one
//! disjoint-union graph so a single forward pass covers the whole batch.

use crate::error::{Error, Result};
use crate::rag::RegionGraph;
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct GraphBatch {
    /// Stacked node features, one row per node across all graphs.
    pub node_features: Vec<[f32; 3]>,
    /// Node id range of each graph, length = graph count + 1.
    pub node_offsets: Vec<usize>,
    /// Undirected edges in global node ids, grouped per graph, u < v inside
    /// each graph's local numbering.
    pub edges: Vec<(u32, u32)>,
    /// Edge range of each graph, length = graph count + 1.
    pub edge_offsets: Vec<usize>,
    /// Node to graph index, monotone non-decreasing.
    pub membership: Vec<u32>,
    pub labels: Vec<u32>,
}

impl GraphBatch {
    pub fn graph_count(&self) -> usize {
        self.labels.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_features.len()
    }

    pub fn from_graphs(graphs: &[&RegionGraph]) -> Result<Self> {
        let mut batch = GraphBatch {
            node_features: Vec::new(),
            node_offsets: vec![0],
            edges: Vec::new(),
            edge_offsets: vec![0],
            membership: Vec::new(),
            labels: Vec::new(),
        };
        for (gi, g) in graphs.iter().enumerate() {
            if g.node_count() == 0 {
                return Err(Error::Input(format!("graph {} in batch has no nodes", gi)));
            }
            let offset = batch.node_features.len() as u32;
            batch.node_features.extend_from_slice(&g.node_features);
            batch
                .membership
                .extend(std::iter::repeat_n(gi as u32, g.node_count()));
            batch
                .edges
                .extend(g.edges.iter().map(|&(u, v)| (u + offset, v + offset)));
            batch.node_offsets.push(batch.node_features.len());
            batch.edge_offsets.push(batch.edges.len());
            batch.labels.push(g.label);
        }
        Ok(batch)
    }

    /// Edges of one graph translated back to its local node ids.
    pub fn local_edges(&self, graph: usize) -> Vec<(u32, u32)> {
        let base = self.node_offsets[graph] as u32;
        self.edges[self.edge_offsets[graph]..self.edge_offsets[graph + 1]]
            .iter()
            .map(|&(u, v)| (u - base, v - base))
            .collect()
    }

    /// Replace one graph's edge list (local ids) with a new one, keeping
    /// the batch layout intact.
    pub fn replace_edges(&mut self, per_graph: Vec<Vec<(u32, u32)>>) {
        assert_eq!(per_graph.len(), self.graph_count());
        let mut edges = Vec::new();
        let mut edge_offsets = vec![0usize];
        for (gi, local) in per_graph.into_iter().enumerate() {
            let base = self.node_offsets[gi] as u32;
            edges.extend(local.into_iter().map(|(u, v)| (u + base, v + base)));
            edge_offsets.push(edges.len());
        }
        self.edges = edges;
        self.edge_offsets = edge_offsets;
    }
}

/// Partition graphs into batches of at most `batch_size`, optionally
/// shuffled. The composition is a pure function of (input order,
/// batch_size, shuffle, seed).
pub fn make_batches(
    graphs: &[RegionGraph],
    batch_size: usize,
    shuffle: bool,
    seed: u64,
) -> Result<Vec<GraphBatch>> {
    if batch_size == 0 {
        return Err(Error::Input("batch size must be >= 1".into()));
    }
    if graphs.is_empty() {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    if shuffle {
        Rng::substream(seed, "shuffle").shuffle(&mut order);
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let refs: Vec<&RegionGraph> = chunk.iter().map(|&i| &graphs[i]).collect();
            GraphBatch::from_graphs(&refs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: Vec<(u32, u32)>, label: u32) -> RegionGraph {
        RegionGraph {
            node_features: vec![[0.1, 0.2, 0.3]; n],
            edges,
            label,
        }
    }

    #[test]
    fn seventy_graphs_batch_32_gives_32_32_6() {
        let graphs: Vec<RegionGraph> = (0..70).map(|i| graph(3, vec![(0, 1)], i % 2)).collect();
        let batches = make_batches(&graphs, 32, false, 0).unwrap();
        let sizes: Vec<usize> = batches.iter().map(|b| b.graph_count()).collect();
        assert_eq!(sizes, vec![32, 32, 6]);
    }

    #[test]
    fn second_graph_edges_are_offset() {
        let graphs = vec![
            graph(3, vec![(0, 1), (1, 2)], 0),
            graph(4, vec![(0, 3), (1, 2)], 1),
        ];
        let batches = make_batches(&graphs, 32, false, 0).unwrap();
        let b = &batches[0];
        assert_eq!(b.node_count(), 7);
        assert_eq!(b.edges, vec![(0, 1), (1, 2), (3, 6), (4, 5)]);
        assert_eq!(b.membership, vec![0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(b.local_edges(1), vec![(0, 3), (1, 2)]);
    }

    #[test]
    fn same_seed_same_composition() {
        let graphs: Vec<RegionGraph> = (0..25).map(|i| graph(2 + i % 3, vec![], 0)).collect();
        let a = make_batches(&graphs, 8, true, 42).unwrap();
        let b = make_batches(&graphs, 8, true, 42).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.node_offsets, y.node_offsets);
            assert_eq!(x.labels, y.labels);
        }
        let c = make_batches(&graphs, 8, true, 43).unwrap();
        let shuffled_differently = a
            .iter()
            .zip(c.iter())
            .any(|(x, y)| x.node_offsets != y.node_offsets || x.labels != y.labels);
        assert!(shuffled_differently);
    }

    #[test]
    fn empty_input_gives_empty_list() {
        let batches = make_batches(&[], 32, true, 0).unwrap();
        assert!(batches.is_empty());
    }

    #[test]
    fn membership_is_monotone() {
        let graphs: Vec<RegionGraph> = (0..10).map(|i| graph(1 + i % 4, vec![], 0)).collect();
        for b in make_batches(&graphs, 4, true, 7).unwrap() {
            assert!(b.membership.windows(2).all(|w| w[0] <= w[1]));
            // every edge stays inside its graph's node range
            for (gi, _) in b.labels.iter().enumerate() {
                let (lo, hi) = (b.node_offsets[gi], b.node_offsets[gi + 1]);
                for &(u, v) in &b.edges[b.edge_offsets[gi]..b.edge_offsets[gi + 1]] {
                    assert!((lo..hi).contains(&(u as usize)));
                    assert!((lo..hi).contains(&(v as usize)));
                }
            }
        }
    }
}
