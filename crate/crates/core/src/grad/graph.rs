//! Layer graph: a DAG of layers executed forward once and backward once.
//!
//! Nodes are appended in topological order and may only reference earlier
//! nodes or external inputs, so the graph is acyclic by construction and a
//! single forward/reverse sweep visits every layer exactly once.

use rand_chacha::ChaCha8Rng;

use super::error::{GradError, Result};
use super::layer::{LayerOp, Mode};
use super::param::Param;
use super::tensor::{Scalar, Tensor};

pub type NodeId = usize;

/// Where a node's input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    /// One of the graph's external input tensors.
    External(usize),
    /// The output of an earlier node.
    Node(NodeId),
}

struct Node<S: Scalar> {
    layer: Box<dyn LayerOp<S>>,
    inputs: Vec<Port>,
    name: String,
}

/// Node outputs from one forward pass, consumed by the matching backward.
pub struct Activations<S: Scalar> {
    values: Vec<Tensor<S>>,
}

impl<S: Scalar> Activations<S> {
    pub fn value(&self, node: NodeId) -> &Tensor<S> {
        &self.values[node]
    }
}

pub struct LayerGraph<S: Scalar> {
    nodes: Vec<Node<S>>,
    n_external: usize,
}

impl<S: Scalar> LayerGraph<S> {
    pub fn new(n_external: usize) -> Self {
        LayerGraph {
            nodes: Vec::new(),
            n_external,
        }
    }

    /// Append a layer fed by `inputs`. Returns the new node's id.
    pub fn add(
        &mut self,
        name: impl Into<String>,
        layer: Box<dyn LayerOp<S>>,
        inputs: Vec<Port>,
    ) -> Result<NodeId> {
        let id = self.nodes.len();
        for port in &inputs {
            let ok = match port {
                Port::External(i) => *i < self.n_external,
                Port::Node(n) => *n < id,
            };
            if !ok {
                return Err(GradError::BadWiring {
                    node: id,
                    port: format!("{port:?}"),
                });
            }
        }
        self.nodes.push(Node {
            layer,
            inputs,
            name: name.into(),
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id].name
    }

    fn gather<'a>(
        ports: &[Port],
        externals: &'a [Tensor<S>],
        values: &'a [Tensor<S>],
    ) -> Vec<&'a Tensor<S>> {
        ports
            .iter()
            .map(|p| match p {
                Port::External(i) => &externals[*i],
                Port::Node(n) => &values[*n],
            })
            .collect()
    }

    /// Run every layer once, in insertion order. Each node's output is
    /// checked for non-finite values so numeric failures name their layer.
    pub fn forward(
        &mut self,
        externals: &[Tensor<S>],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Activations<S>> {
        assert_eq!(externals.len(), self.n_external, "external input count");
        let mut values: Vec<Tensor<S>> = Vec::with_capacity(self.nodes.len());
        for node in self.nodes.iter_mut() {
            let inputs = Self::gather(&node.inputs, externals, &values);
            let out = node.layer.forward(&inputs, mode, rng)?;
            if !out.all_finite() {
                return Err(GradError::NonFinite {
                    layer: node.name.clone(),
                });
            }
            values.push(out);
        }
        Ok(Activations { values })
    }

    /// Reverse sweep. `seeds` are (node, dL/d output) pairs; parameter
    /// gradients accumulate into each `Param::grad` and the gradients with
    /// respect to the external inputs are returned.
    ///
    /// Must follow a `forward` with the same externals and mode: layers reuse
    /// cached state (dropout masks, pooling gates) from that pass.
    pub fn backward(
        &mut self,
        externals: &[Tensor<S>],
        acts: &Activations<S>,
        seeds: &[(NodeId, Tensor<S>)],
    ) -> Result<Vec<Tensor<S>>> {
        let mut node_grads: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        for (id, seed) in seeds {
            if seed.shape() != acts.values[*id].shape() {
                return Err(GradError::ShapeMismatch {
                    op: format!("backward seed for `{}`", self.nodes[*id].name),
                    expected: acts.values[*id].shape().to_vec(),
                    got: seed.shape().to_vec(),
                });
            }
            match &mut node_grads[*id] {
                Some(g) => g.add_assign(seed),
                slot => *slot = Some(seed.clone()),
            }
        }
        let mut ext_grads: Vec<Tensor<S>> = externals
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect();
        for id in (0..self.nodes.len()).rev() {
            let upstream = match node_grads[id].take() {
                Some(g) => g,
                None => continue, // no loss depends on this node
            };
            let node = &mut self.nodes[id];
            let inputs: Vec<&Tensor<S>> = node
                .inputs
                .iter()
                .map(|p| match p {
                    Port::External(i) => &externals[*i],
                    Port::Node(n) => &acts.values[*n],
                })
                .collect();
            let input_grads = node.layer.backward(&inputs, &acts.values[id], &upstream)?;
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (port, grad) in node.inputs.iter().zip(input_grads) {
                match port {
                    Port::External(i) => ext_grads[*i].add_assign(&grad),
                    Port::Node(n) => match &mut node_grads[*n] {
                        Some(g) => g.add_assign(&grad),
                        slot => *slot = Some(grad),
                    },
                }
            }
        }
        Ok(ext_grads)
    }

    /// All parameters in a stable order (node order, then layer order).
    pub fn params(&self) -> Vec<&Param<S>> {
        self.nodes.iter().flat_map(|n| n.layer.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.nodes
            .iter_mut()
            .flat_map(|n| n.layer.params_mut())
            .collect()
    }

    /// Parameters of a single node, with the owning node's name.
    pub fn node_params_mut(&mut self, id: NodeId) -> Vec<&mut Param<S>> {
        self.nodes[id].layer.params_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}
