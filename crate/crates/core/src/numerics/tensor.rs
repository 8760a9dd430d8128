use super::Real;
use crate::error::{Error, Result};

/// Dense row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::ZERO; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim("tensor", shape, &[data.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<F>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&x| F::of(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading extent for a 2-D tensor, 1 for a vector.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Trailing extent (columns of a matrix, length of a vector).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| G::of(x.to_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor<F>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// Trainable value with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<F> {
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub frozen: bool,
}

impl<F: Real> Parameter<F> {
    pub fn new(value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            value,
            grad,
            frozen: false,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::ZERO);
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }
}

/// Hidden and cell vectors of one LSTM layer. Either `[hidden]` or
/// `[batch, hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellState<F> {
    pub h: Tensor<F>,
    pub c: Tensor<F>,
}

impl<F: Real> LstmCellState<F> {
    pub fn zeros(hidden: usize) -> Self {
        LstmCellState {
            h: Tensor::zeros(&[hidden]),
            c: Tensor::zeros(&[hidden]),
        }
    }

    pub fn zeros_batch(batch: usize, hidden: usize) -> Self {
        LstmCellState {
            h: Tensor::zeros(&[batch, hidden]),
            c: Tensor::zeros(&[batch, hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.h.cols()
    }

    pub fn batch(&self) -> usize {
        self.h.rows()
    }

    pub fn reset(&mut self) {
        self.h.fill(F::ZERO);
        self.c.fill(F::ZERO);
    }

    pub fn reset_row(&mut self, row: usize) {
        let n = self.hidden();
        self.h.data_mut()[row * n..(row + 1) * n].fill(F::ZERO);
        self.c.data_mut()[row * n..(row + 1) * n].fill(F::ZERO);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named parameters in insertion order. Names are dotted group paths such as
/// `rnn_task.w1`; the order is the checkpoint order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    params: Vec<Parameter<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<F>) -> ParamId {
        assert!(
            self.id(name).is_none(),
            "duplicate parameter name {name}"
        );
        self.names.push(name.to_string());
        self.params.push(Parameter::new(value));
        ParamId(self.params.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<F> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[F] {
        self.params[id.0].value.data()
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<F>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Parameter<F>> {
        self.id(name).map(|id| &mut self.params[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter<F>)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter<F>)> {
        self.names.iter().map(String::as_str).zip(&mut self.params)
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Moves every gradient buffer out so values can be read while gradients
    /// are written. Pair with [`ParamStore::restore_grads`].
    pub fn take_grads(&mut self) -> Vec<Tensor<F>> {
        self.params
            .iter_mut()
            .map(|p| std::mem::replace(&mut p.grad, Tensor::zeros(&[0])))
            .collect()
    }

    pub fn restore_grads(&mut self, grads: Vec<Tensor<F>>) {
        assert_eq!(grads.len(), self.params.len());
        for (p, g) in self.params.iter_mut().zip(grads) {
            debug_assert_eq!(p.value.shape(), g.shape());
            p.grad = g;
        }
    }

    /// Scalar count over parameters whose name equals one of `groups` or lies
    /// below it (`rnn_task` matches `rnn_task.w1`). Empty filter counts all.
    pub fn count(&self, groups: &[&str]) -> usize {
        self.iter()
            .filter(|(name, _)| groups.is_empty() || groups.iter().any(|g| in_group(name, g)))
            .map(|(_, p)| p.value.len())
            .sum()
    }

    /// Freezes every parameter for which `keep_trainable` is false, unfreezes
    /// the rest.
    pub fn freeze_except(&mut self, keep_trainable: impl Fn(&str) -> bool) {
        for (name, p) in self.iter_mut() {
            p.frozen = !keep_trainable(name);
        }
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            names: self.names.clone(),
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                    frozen: p.frozen,
                })
                .collect(),
        }
    }

    /// L2 norm over gradients of trainable parameters.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| !p.frozen)
            .flat_map(|p| p.grad.data())
            .map(|g| g.to_f64() * g.to_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn value_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.value.data())
            .map(|g| g.to_f64() * g.to_f64())
            .sum::<f64>()
            .sqrt()
    }
}

/// Whether `name` is `group` or a dotted child of it.
pub fn in_group(name: &str, group: &str) -> bool {
    name == group
        || (name.len() > group.len()
            && name.starts_with(group)
            && name.as_bytes()[group.len()] == b'.')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        let err = Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).unwrap_err();
        assert!(err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn group_matching_respects_dots() {
        assert!(in_group("rnn_task.w1", "rnn_task"));
        assert!(in_group("rnn_task.w1", "rnn_task.w1"));
        assert!(!in_group("rnn_task_x.w1", "rnn_task"));
        assert!(!in_group("rnn", "rnn_task"));
    }

    #[test]
    fn count_by_group() {
        let mut s = ParamStore::<f32>::new();
        s.insert("e_task.emb", Tensor::zeros(&[7, 32]));
        s.insert("head.pol.w", Tensor::zeros(&[6, 4]));
        s.insert("head.pol.b", Tensor::zeros(&[6]));
        assert_eq!(s.count(&["e_task"]), 224);
        assert_eq!(s.count(&["head"]), 30);
        assert_eq!(s.count(&[]), 254);
    }

    #[test]
    fn take_and_restore_grads() {
        let mut s = ParamStore::<f64>::new();
        let id = s.insert("w", Tensor::zeros(&[2]));
        let mut g = s.take_grads();
        g[0].data_mut()[1] = 3.0;
        s.restore_grads(g);
        assert_eq!(s.get(id).grad.data(), &[0.0, 3.0]);
    }
}
