use std::collections::{HashMap, HashSet};

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorId};

/// Recorded operations reachable from a loss, in topological order
/// (every node after all of its inputs).
pub struct Graph<S: Scalar> {
    nodes: Vec<Tensor<S>>,
}

impl<S: Scalar> Graph<S> {
    pub fn from_root(root: &Tensor<S>) -> Self {
        let mut order = Vec::new();
        let mut visited: HashSet<TensorId> = HashSet::new();
        // Iterative post-order DFS; the bool marks "children already pushed".
        let mut stack: Vec<(Tensor<S>, bool)> = vec![(root.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            let parents: Vec<Tensor<S>> = match t.inner.node.lock().expect("node lock").as_ref() {
                Some(node) => node.parents.clone(),
                None => Vec::new(),
            };
            stack.push((t, true));
            for p in parents.into_iter().rev() {
                if p.requires_grad() && !visited.contains(&p.id()) {
                    stack.push((p, false));
                }
            }
        }
        Graph { nodes: order }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Op names in topological order; leaves appear as "leaf".
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes
            .iter()
            .map(|t| match t.inner.node.lock().expect("node lock").as_ref() {
                Some(n) => n.op,
                None => "leaf",
            })
            .collect()
    }
}

/// Gradients of the leaves reachable from a loss.
#[derive(Default)]
pub struct Gradients<S: Scalar> {
    grads: HashMap<TensorId, Vec<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, t: &Tensor<S>) -> Option<&[S]> {
        self.grads.get(&t.id()).map(|g| g.as_slice())
    }

    /// Gradient of `t`, or zeros when `t` was unreachable from the loss.
    pub fn get_or_zeros(&self, t: &Tensor<S>) -> Vec<S> {
        self.get(t)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![S::zero(); t.numel()])
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn accumulate<S: Scalar>(dst: &mut Vec<S>, src: Vec<S>) {
    if dst.is_empty() {
        *dst = src;
    } else {
        for (d, s) in dst.iter_mut().zip(src) {
            *d = *d + s;
        }
    }
}

impl<S: Scalar> Tensor<S> {
    /// Reverse-mode accumulation from a one-element loss. The recorded graph
    /// is consumed: a second call on the same loss is a usage error.
    pub fn backward(&self) -> Result<Gradients<S>> {
        if self.numel() != 1 {
            return Err(TensorError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(TensorError::Usage(
                "backward on a tensor with no gradient history".into(),
            ));
        }
        if self.inner.recorded && !self.has_node() {
            return Err(TensorError::Usage(
                "graph already consumed by an earlier backward".into(),
            ));
        }
        let graph = Graph::from_root(self);

        let mut pending: HashMap<TensorId, Vec<S>> = HashMap::new();
        pending.insert(self.id(), vec![S::one()]);
        let mut leaves = HashMap::new();

        for t in graph.nodes.iter().rev() {
            let node = t.inner.node.lock().expect("node lock").take();
            let Some(grad) = pending.remove(&t.id()) else {
                continue;
            };
            match node {
                None => {
                    leaves.insert(t.id(), grad);
                }
                Some(node) => {
                    let parent_grads = (node.backward)(&grad, &node.parents);
                    debug_assert_eq!(parent_grads.len(), node.parents.len(), "{}", node.op);
                    for (p, g) in node.parents.iter().zip(parent_grads) {
                        if let Some(g) = g {
                            if p.requires_grad() {
                                debug_assert_eq!(g.len(), p.numel(), "{}", node.op);
                                accumulate(pending.entry(p.id()).or_default(), g);
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    #[test]
    fn sum_gives_ones() {
        let x = Tensor::<f64>::leaf(vec![1.0, -2.0, 3.0], &[3]).unwrap();
        let g = x.sum().backward().unwrap();
        assert_eq!(g.get(&x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_sum_gives_twice_x() {
        let x = Tensor::<f64>::leaf(vec![1.0, -2.0, 3.0], &[3]).unwrap();
        let g = x.mul(&x).unwrap().sum().backward().unwrap();
        assert_eq!(g.get(&x).unwrap(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn shared_subexpression_visited_once() {
        let x = Tensor::<f64>::leaf(vec![2.0], &[1]).unwrap();
        let y = x.mul_scalar(3.0);
        let z = y.add(&y).unwrap().sum();
        let g = z.backward().unwrap();
        assert_eq!(g.get(&x).unwrap(), &[6.0]);
    }

    #[test]
    fn non_scalar_backward_is_usage_error() {
        let x = Tensor::<f64>::leaf(vec![1.0, 2.0], &[2]).unwrap();
        let y = x.mul_scalar(2.0);
        assert!(y.backward().is_err());
    }

    #[test]
    fn second_backward_fails() {
        let x = Tensor::<f64>::leaf(vec![1.0, 2.0], &[2]).unwrap();
        let loss = x.mul_scalar(2.0).sum();
        loss.backward().unwrap();
        assert!(loss.backward().is_err());
    }

    #[test]
    fn unreachable_leaf_has_zero_grad() {
        let x = Tensor::<f64>::leaf(vec![1.0, 2.0], &[2]).unwrap();
        let unused = Tensor::<f64>::leaf(vec![5.0], &[1]).unwrap();
        let g = x.sum().backward().unwrap();
        assert!(g.get(&unused).is_none());
        assert_eq!(g.get_or_zeros(&unused), vec![0.0]);
    }
}
