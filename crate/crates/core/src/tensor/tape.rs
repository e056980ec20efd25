use std::cell::RefCell;
use std::rc::Rc;

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Append-only record of tensor operations.
///
/// Backward passes are expressed with the same recorded operations, so the
/// gradients returned by [`Tape::grad`] are themselves `Var`s on this tape
/// and can be differentiated again.
pub struct Tape<T: Element = f32> {
    nodes: RefCell<Vec<Node<T>>>,
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
}

#[derive(Clone)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    Exp(usize),
    Sqrt(usize),
    SafeRecip(usize),
    LeakyRelu(usize, T),
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    SumAxis(usize, usize),
    ExpandAxis(usize, usize),
    SumTo(usize),
    BroadcastTo(usize),
    Gather(usize, Rc<[usize]>),
    ScatterAdd(usize, Rc<[usize]>),
    Reshape(usize),
}

impl<T> Op<T> {
    fn inputs(&self) -> [Option<usize>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul { a, b, .. } => [Some(a), Some(b)],
            Scale(x, _)
            | AddScalar(x)
            | Exp(x)
            | Sqrt(x)
            | SafeRecip(x)
            | LeakyRelu(x, _)
            | SumAxis(x, _)
            | ExpandAxis(x, _)
            | SumTo(x)
            | BroadcastTo(x)
            | Gather(x, _)
            | ScatterAdd(x, _)
            | Reshape(x) => [Some(x), None],
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Element = f32> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records `value` as a leaf. Leaves are the points gradients are taken
    /// with respect to (parameters, inputs) or plain constants.
    pub fn var(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: T) -> Var<'_, T> {
        self.var(Tensor::scalar(value))
    }

    fn value(&self, id: usize) -> Rc<Tensor<T>> {
        self.nodes.borrow()[id].value.clone()
    }

    fn handle(&self, id: usize) -> Var<'_, T> {
        Var { tape: self, id }
    }

    fn check_owner(&self, v: &Var<'_, T>) -> Result<()> {
        if std::ptr::eq(self, v.tape) {
            Ok(())
        } else {
            Err(Error::NotOnTape("variable belongs to a different tape"))
        }
    }

    /// Gradients of the scalar `y` with respect to each of `wrt`.
    ///
    /// The backward computation is recorded, so every returned gradient is a
    /// differentiable function of the tape's leaves. Leaves that `y` does not
    /// depend on get a zero gradient.
    pub fn grad<'t>(&'t self, y: Var<'t, T>, wrt: &[Var<'t, T>]) -> Result<Vec<Var<'t, T>>> {
        self.check_owner(&y)?;
        for w in wrt {
            self.check_owner(w)?;
        }
        let y_shape = self.value(y.id).shape().to_vec();
        if y_shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(y_shape));
        }

        let n = y.id + 1;
        // A node is relevant if it lies on some path from a `wrt` leaf.
        let mut relevant = vec![false; n];
        for w in wrt {
            if w.id < n {
                relevant[w.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for i in 0..n {
                if !relevant[i] {
                    relevant[i] = nodes[i].op.inputs().iter().flatten().any(|&j| relevant[j]);
                }
            }
        }

        let mut grads: Vec<Option<usize>> = vec![None; n];
        if relevant[y.id] {
            grads[y.id] = Some(self.var(Tensor::ones(y_shape)).id);
        }

        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !relevant[i] {
                continue;
            }
            let op = self.nodes.borrow()[i].op.clone();
            let g = self.handle(g);
            for (input, contrib) in self.backward_op(i, &op, g, &relevant)? {
                grads[input] = Some(match grads[input] {
                    Some(prev) => self.handle(prev).add(&contrib)?.id,
                    None => contrib.id,
                });
            }
        }

        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => Ok(self.handle(g)),
                None => Ok(self.var(Tensor::zeros(self.value(w.id).shape().to_vec()))),
            })
            .collect()
    }

    /// Vector-Jacobian products of node `i` for each relevant input.
    fn backward_op<'t>(
        &'t self,
        i: usize,
        op: &Op<T>,
        g: Var<'t, T>,
        relevant: &[bool],
    ) -> Result<Vec<(usize, Var<'t, T>)>> {
        let h = |id| self.handle(id);
        let shape_of = |id| self.value(id).shape().to_vec();
        let reduce = |grad: Var<'t, T>, id: usize| -> Result<Var<'t, T>> {
            let target = shape_of(id);
            if grad.shape() == target {
                Ok(grad)
            } else {
                grad.sum_to(&target)
            }
        };
        let mut out = Vec::with_capacity(2);
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if relevant[*a] {
                    out.push((*a, reduce(g, *a)?));
                }
                if relevant[*b] {
                    out.push((*b, reduce(g, *b)?));
                }
            }
            Op::Sub(a, b) => {
                if relevant[*a] {
                    out.push((*a, reduce(g, *a)?));
                }
                if relevant[*b] {
                    out.push((*b, reduce(g.neg(), *b)?));
                }
            }
            Op::Mul(a, b) => {
                if relevant[*a] {
                    out.push((*a, reduce(g.mul(&h(*b))?, *a)?));
                }
                if relevant[*b] {
                    out.push((*b, reduce(g.mul(&h(*a))?, *b)?));
                }
            }
            Op::Scale(x, c) => out.push((*x, g.scale(*c))),
            Op::AddScalar(x) => out.push((*x, g)),
            Op::Exp(x) => out.push((*x, g.mul(&h(i))?)),
            Op::Sqrt(x) => {
                // d sqrt(u) = 1/(2 sqrt(u)); zero subgradient where the root is 0
                let inv = h(i).safe_recip().scale(T::from_f64(0.5));
                out.push((*x, g.mul(&inv)?));
            }
            Op::SafeRecip(x) => {
                let r = h(i);
                out.push((*x, g.mul(&r.mul(&r)?)?.neg()));
            }
            Op::LeakyRelu(x, alpha) => {
                let mask = self
                    .value(*x)
                    .map(|v| if v > T::zero() { T::one() } else { *alpha });
                out.push((*x, g.mul(&self.var(mask))?));
            }
            Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (h(*a), h(*b));
                if relevant[*a] {
                    let ga = if *ta {
                        bv.matmul_t(&g, *tb, true)?
                    } else {
                        g.matmul_t(&bv, false, !*tb)?
                    };
                    out.push((*a, ga));
                }
                if relevant[*b] {
                    let gb = if *tb {
                        g.matmul_t(&av, true, *ta)?
                    } else {
                        av.matmul_t(&g, !*ta, false)?
                    };
                    out.push((*b, gb));
                }
            }
            Op::SumAxis(x, axis) => {
                let size = shape_of(*x)[*axis];
                out.push((*x, g.expand_axis(*axis, size)?));
            }
            Op::ExpandAxis(x, axis) => out.push((*x, g.sum_axis(*axis)?)),
            Op::SumTo(x) => out.push((*x, g.broadcast_to(&shape_of(*x))?)),
            Op::BroadcastTo(x) => out.push((*x, g.sum_to(&shape_of(*x))?)),
            Op::Gather(x, idx) => out.push((*x, g.scatter_add(idx.clone(), shape_of(*x))?)),
            Op::ScatterAdd(x, idx) => out.push((*x, g.gather(idx.clone(), shape_of(*x))?)),
            Op::Reshape(x) => out.push((*x, g.reshape(shape_of(*x))?)),
        }
        Ok(out)
    }
}

impl<'t, T: Element> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Scalar value of a one-element variable.
    pub fn item(&self) -> T {
        self.value().item()
    }

    fn same_tape(&self, other: &Var<'t, T>) -> Result<()> {
        self.tape.check_owner(other)
    }

    fn unary(&self, value: Tensor<T>, op: Op<T>) -> Var<'t, T> {
        self.tape.push(value, op)
    }

    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(other)?;
        let v = self.value().add(&other.value())?;
        Ok(self.tape.push(v, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(other)?;
        let v = self.value().sub(&other.value())?;
        Ok(self.tape.push(v, Op::Sub(self.id, other.id)))
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(other)?;
        let v = self.value().mul(&other.value())?;
        Ok(self.tape.push(v, Op::Mul(self.id, other.id)))
    }

    pub fn scale(&self, c: T) -> Var<'t, T> {
        self.unary(self.value().scale(c), Op::Scale(self.id, c))
    }

    pub fn neg(&self) -> Var<'t, T> {
        self.scale(-T::one())
    }

    pub fn add_scalar(&self, c: T) -> Var<'t, T> {
        self.unary(self.value().map(|x| x + c), Op::AddScalar(self.id))
    }

    pub fn exp(&self) -> Var<'t, T> {
        self.unary(self.value().exp(), Op::Exp(self.id))
    }

    pub fn sqrt(&self) -> Var<'t, T> {
        self.unary(self.value().map(T::sqrt), Op::Sqrt(self.id))
    }

    /// `1/x`, defined as 0 where `x == 0`.
    pub fn safe_recip(&self) -> Var<'t, T> {
        let v = self
            .value()
            .map(|x| if x == T::zero() { T::zero() } else { x.recip() });
        self.unary(v, Op::SafeRecip(self.id))
    }

    pub fn leaky_relu(&self, alpha: T) -> Var<'t, T> {
        self.unary(self.value().leaky_relu(alpha), Op::LeakyRelu(self.id, alpha))
    }

    pub fn square(&self) -> Result<Var<'t, T>> {
        self.mul(self)
    }

    pub fn matmul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.matmul_t(other, false, false)
    }

    pub fn matmul_t(&self, other: &Var<'t, T>, ta: bool, tb: bool) -> Result<Var<'t, T>> {
        self.same_tape(other)?;
        let v = self.value().matmul_t(&other.value(), ta, tb)?;
        Ok(self.tape.push(
            v,
            Op::MatMul {
                a: self.id,
                b: other.id,
                ta,
                tb,
            },
        ))
    }

    pub fn sum(&self) -> Result<Var<'t, T>> {
        self.sum_to(&[])
    }

    pub fn mean(&self) -> Result<Var<'t, T>> {
        let n = self.value().numel();
        Ok(self.sum()?.scale(T::from_f64(1.0 / n as f64)))
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Var<'t, T>> {
        let v = self.value().sum_axis(axis)?;
        Ok(self.unary(v, Op::SumAxis(self.id, axis)))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t, T>> {
        let size = *self
            .shape()
            .get(axis)
            .ok_or(Error::Axis {
                axis,
                rank: self.shape().len(),
            })?;
        Ok(self.sum_axis(axis)?.scale(T::from_f64(1.0 / size as f64)))
    }

    pub fn expand_axis(&self, axis: usize, size: usize) -> Result<Var<'t, T>> {
        let v = self.value().expand_axis(axis, size)?;
        Ok(self.unary(v, Op::ExpandAxis(self.id, axis)))
    }

    /// Max along `axis`; the gradient flows only to the arg-max entries.
    pub fn max_axis(&self, axis: usize) -> Result<Var<'t, T>> {
        let (v, arg) = self.value().max_axis(axis)?;
        Ok(self.unary(v, Op::Gather(self.id, arg.into())))
    }

    pub fn min_axis(&self, axis: usize) -> Result<Var<'t, T>> {
        Ok(self.neg().max_axis(axis)?.neg())
    }

    pub fn sum_to(&self, target: &[usize]) -> Result<Var<'t, T>> {
        let v = self.value().sum_to(target)?;
        Ok(self.unary(v, Op::SumTo(self.id)))
    }

    pub fn broadcast_to(&self, target: &[usize]) -> Result<Var<'t, T>> {
        let v = self.value().broadcast_to(target)?;
        Ok(self.unary(v, Op::BroadcastTo(self.id)))
    }

    pub fn gather(&self, index: Rc<[usize]>, shape: Vec<usize>) -> Result<Var<'t, T>> {
        let v = self.value().gather(&index, shape)?;
        Ok(self.unary(v, Op::Gather(self.id, index)))
    }

    pub fn scatter_add(&self, index: Rc<[usize]>, shape: Vec<usize>) -> Result<Var<'t, T>> {
        let v = self.value().scatter_add(&index, shape)?;
        Ok(self.unary(v, Op::ScatterAdd(self.id, index)))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t, T>> {
        let v = self.value().reshape(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }

    /// Euclidean norm along `axis`, removing it.
    pub fn l2_norm(&self, axis: usize) -> Result<Var<'t, T>> {
        Ok(self.square()?.sum_axis(axis)?.sqrt())
    }

    /// Concatenates rank-2 variables along columns.
    pub fn concat_cols(parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero parts".into()))?;
        let rows = first.shape()[0];
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let s = p.shape();
                if s.len() != 2 || s[0] != rows {
                    Err(Error::Dimension {
                        op: "concat_cols",
                        lhs: first.shape(),
                        rhs: s,
                    })
                } else {
                    Ok(s[1])
                }
            })
            .collect::<Result<_>>()?;
        let total: usize = widths.iter().sum();
        let mut acc: Option<Var<'t, T>> = None;
        let mut offset = 0;
        for (part, &w) in parts.iter().zip(&widths) {
            let index: Rc<[usize]> = (0..rows)
                .flat_map(|r| (0..w).map(move |c| r * total + offset + c))
                .collect();
            let placed = part.scatter_add(index, vec![rows, total])?;
            acc = Some(match acc {
                Some(a) => a.add(&placed)?,
                None => placed,
            });
            offset += w;
        }
        Ok(acc.expect("nonempty"))
    }

    /// Repeats each row `factor` times consecutively: row `r` of the output
    /// is row `r / factor` of the input.
    pub fn repeat_rows(&self, factor: usize) -> Result<Var<'t, T>> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "repeat_rows expects rank 2, got {shape:?}"
            )));
        }
        if factor == 1 {
            return Ok(*self);
        }
        let (rows, cols) = (shape[0], shape[1]);
        let index: Rc<[usize]> = (0..rows * factor)
            .flat_map(|r| (0..cols).map(move |c| (r / factor) * cols + c))
            .collect();
        self.gather(index, vec![rows * factor, cols])
    }

    /// Leaf copy of this value with no link to the graph that produced it.
    pub fn detach(&self) -> Var<'t, T> {
        self.tape.var((*self.value()).clone())
    }
}
