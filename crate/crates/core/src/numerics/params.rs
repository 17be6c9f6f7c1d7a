//! Parameter blocks: structured collections of tensors that can be bound
//! into a graph, flattened for optimizers, and perturbed coordinate-wise.
//!
//! One ordering invariant everything else leans on: `bind`, `visit`,
//! `visit_mut`, and `leaf_ids` all traverse fields in declaration order, so
//! a flat coordinate index means the same thing to the finite-difference
//! oracle, the optimizer state, and checkpoint serialization.

use crate::error::Result;
use crate::numerics::dense::{Matrix, Vector};
use crate::numerics::graph::{DiffGraph, Gradients, NodeId};

/// A tree of named tensors with a fixed traversal order.
pub trait ParamBlock {
    /// Graph handles for the leaves, shaped like the block itself.
    type Nodes: Copy;

    /// Registers every leaf as a trainable graph node, in traversal order.
    fn bind(&self, g: &mut DiffGraph) -> Self::Nodes;

    /// Calls `f` on each leaf's flat data, in traversal order.
    fn visit(&self, f: &mut dyn FnMut(&[f64]));

    /// Mutable variant of [`ParamBlock::visit`].
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    /// Appends the leaf node ids in traversal order.
    fn leaf_ids(nodes: &Self::Nodes, out: &mut Vec<NodeId>);
}

impl ParamBlock for Vector {
    type Nodes = NodeId;

    fn bind(&self, g: &mut DiffGraph) -> NodeId {
        g.param_vector(self.clone())
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.as_slice());
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.as_mut_slice());
    }

    fn leaf_ids(nodes: &NodeId, out: &mut Vec<NodeId>) {
        out.push(*nodes);
    }
}

impl ParamBlock for Matrix {
    type Nodes = NodeId;

    fn bind(&self, g: &mut DiffGraph) -> NodeId {
        g.param_matrix(self.clone())
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.as_slice());
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.as_mut_slice());
    }

    fn leaf_ids(nodes: &NodeId, out: &mut Vec<NodeId>) {
        out.push(*nodes);
    }
}

/// Defines a parameter struct plus its node-handle twin and a
/// declaration-order [`ParamBlock`] impl. Fields may be `Vector`, `Matrix`,
/// or another block.
macro_rules! param_block {
    ($(#[$meta:meta])* pub struct $name:ident, nodes $nodes:ident {
        $($(#[$fmeta:meta])* pub $field:ident : $ty:ty,)*
    }) => {
        $(#[$meta])*
        #[derive(Debug, Clone)]
        pub struct $name {
            $($(#[$fmeta])* pub $field: $ty,)*
        }

        #[derive(Debug, Clone, Copy)]
        pub struct $nodes {
            $(pub $field: <$ty as $crate::numerics::ParamBlock>::Nodes,)*
        }

        impl $crate::numerics::ParamBlock for $name {
            type Nodes = $nodes;

            fn bind(&self, g: &mut $crate::numerics::DiffGraph) -> $nodes {
                $nodes { $($field: self.$field.bind(g),)* }
            }

            fn visit(&self, f: &mut dyn FnMut(&[f64])) {
                $(self.$field.visit(f);)*
            }

            fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
                $(self.$field.visit_mut(f);)*
            }

            fn leaf_ids(nodes: &$nodes, out: &mut Vec<$crate::numerics::NodeId>) {
                $(<$ty as $crate::numerics::ParamBlock>::leaf_ids(&nodes.$field, out);)*
            }
        }
    };
}
pub(crate) use param_block;

/// Total number of scalar coordinates in a block.
pub fn coord_count<P: ParamBlock>(p: &P) -> usize {
    let mut n = 0;
    p.visit(&mut |s| n += s.len());
    n
}

/// Coordinate `index` under the flat traversal order.
pub fn read_coord<P: ParamBlock>(p: &P, index: usize) -> f64 {
    let mut off = 0;
    let mut out = None;
    p.visit(&mut |s| {
        if out.is_none() && index < off + s.len() {
            out = Some(s[index - off]);
        }
        off += s.len();
    });
    out.unwrap_or_else(|| panic!("coordinate {index} out of bounds for {off} coordinates"))
}

/// Overwrites coordinate `index` with `value`.
pub fn set_coord<P: ParamBlock>(p: &mut P, index: usize, value: f64) {
    let mut off = 0;
    let mut done = false;
    p.visit_mut(&mut |s| {
        if !done && index < off + s.len() {
            s[index - off] = value;
            done = true;
        }
        off += s.len();
    });
    assert!(done, "coordinate {index} out of bounds for {off} coordinates");
}

/// Adds `delta` to coordinate `index`.
pub fn shift_coord<P: ParamBlock>(p: &mut P, index: usize, delta: f64) {
    let v = read_coord(p, index);
    set_coord(p, index, v + delta);
}

/// Concatenates the gradients of a block's leaves in traversal order,
/// aligned with the flat coordinate index used by `read_coord`.
pub fn flatten_gradients<P: ParamBlock>(nodes: &P::Nodes, grads: &Gradients) -> Vec<f64> {
    let mut ids = Vec::new();
    P::leaf_ids(nodes, &mut ids);
    let mut out = Vec::new();
    for id in ids {
        out.extend_from_slice(grads.data(id));
    }
    out
}

/// Central-difference gradient of `f` with respect to every coordinate:
/// `(f(p + eps e_i) - f(p - eps e_i)) / (2 eps)`. `f` must be deterministic.
pub fn finite_difference_gradient<P, F>(params: &P, mut f: F, eps: f64) -> Result<Vec<f64>>
where
    P: ParamBlock + Clone,
    F: FnMut(&P) -> Result<f64>,
{
    assert!(eps > 0.0, "eps must be positive");
    let n = coord_count(params);
    let mut work = params.clone();
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let orig = read_coord(&work, i);
        set_coord(&mut work, i, orig + eps);
        let plus = f(&work)?;
        set_coord(&mut work, i, orig - eps);
        let minus = f(&work)?;
        set_coord(&mut work, i, orig);
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Relative error guarded against near-zero denominators:
/// `|a - b| / max(|a|, |b|, 1e-4)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

#[cfg(test)]
mod tests {
    use super::*;

    param_block! {
        /// Affine layer used only by these tests.
        pub struct Affine, nodes AffineNodes {
            pub w: Matrix,
            pub b: Vector,
        }
    }

    param_block! {
        pub struct Nested, nodes NestedNodes {
            pub first: Affine,
            pub gain: Vector,
        }
    }

    fn affine() -> Affine {
        Affine {
            w: Matrix::new(2, 3, vec![0.3, -0.2, 0.8, 0.5, -0.6, 0.1]).unwrap(),
            b: Vector::new(vec![0.05, -0.1]),
        }
    }

    #[test]
    fn coordinates_traverse_in_declaration_order() {
        let mut p = affine();
        assert_eq!(coord_count(&p), 8);
        assert_eq!(read_coord(&p, 0), 0.3);
        assert_eq!(read_coord(&p, 5), 0.1);
        assert_eq!(read_coord(&p, 6), 0.05);
        set_coord(&mut p, 7, 9.0);
        assert_eq!(p.b[1], 9.0);
        shift_coord(&mut p, 0, 0.7);
        assert!((p.w.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nested_blocks_flatten_depth_first() {
        let p = Nested { first: affine(), gain: Vector::new(vec![2.0]) };
        assert_eq!(coord_count(&p), 9);
        assert_eq!(read_coord(&p, 8), 2.0);
    }

    #[test]
    fn fd_on_a_quadratic_matches_the_analytic_gradient() {
        let p = Vector::new(vec![1.0, -2.0, 3.0]);
        let grad = finite_difference_gradient(
            &p,
            |v| Ok(v.as_slice().iter().map(|x| x * x).sum()),
            1e-5,
        )
        .unwrap();
        for (g, x) in grad.iter().zip(p.as_slice()) {
            assert!(relative_error(*g, 2.0 * x) < 1e-9, "{g} vs {}", 2.0 * x);
        }
    }

    #[test]
    fn fd_simple_scalar_cases() {
        let w = Vector::new(vec![3.0]);
        let g = finite_difference_gradient(&w, |v| Ok(v[0] * v[0]), 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);

        let w = Vector::new(vec![0.0]);
        let g = finite_difference_gradient(&w, |v| Ok(v[0].tanh()), 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn graph_backward_matches_fd_through_a_bound_block() {
        let p = Nested { first: affine(), gain: Vector::new(vec![1.3]) };
        let x = Vector::new(vec![0.5, -0.2, 0.8]);

        let eval = |p: &Nested| -> crate::error::Result<(f64, Option<Vec<f64>>)> {
            let mut g = DiffGraph::new();
            let nodes = p.bind(&mut g);
            let xn = g.constant(x.clone());
            let wx = g.matvec(nodes.first.w, xn)?;
            let pre = g.add(wx, nodes.first.b)?;
            let h = g.tanh(pre)?;
            let scaled = g.mul_scalar(nodes.gain, h)?;
            let loss = g.dot(scaled, scaled)?;
            let value = g.value_vec(loss)?[0];
            let grads = g.backward(loss)?;
            Ok((value, Some(flatten_gradients::<Nested>(&nodes, &grads))))
        };

        let (_, analytic) = eval(&p).unwrap();
        let analytic = analytic.unwrap();
        let fd = finite_difference_gradient(&p, |q| eval(q).map(|(v, _)| v), 1e-5).unwrap();
        assert_eq!(analytic.len(), 9);
        for i in 0..analytic.len() {
            let e = relative_error(analytic[i], fd[i]);
            assert!(e < 1e-8, "coord {i}: analytic {} fd {} err {e}", analytic[i], fd[i]);
        }
    }

    #[test]
    fn loss_dot_w_x_has_gradient_x() {
        let w = Vector::new(vec![0.4, -1.1, 2.2]);
        let x = [5.0, 7.0, -3.0];
        let mut g = DiffGraph::new();
        let wn = w.bind(&mut g);
        let xn = g.constant(Vector::new(x.to_vec()));
        let loss = g.dot(wn, xn).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.vector(wn).as_slice(), &x);
    }

    #[test]
    fn loss_norm_squared_has_gradient_two_w() {
        let w = Vector::new(vec![0.4, -1.1, 2.2]);
        let mut g = DiffGraph::new();
        let wn = w.bind(&mut g);
        let loss = g.dot(wn, wn).unwrap();
        let grads = g.backward(loss).unwrap();
        for (got, x) in grads.vector(wn).as_slice().iter().zip(w.as_slice()) {
            assert!((got - 2.0 * x).abs() < 1e-15);
        }
    }
}
