use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use super::NeuralError;

/// Named parameter arrays plus AMSGrad state.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    pub tensors: Vec<Tensor>,
    state: Vec<MomentState>,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq)]
struct MomentState {
    m: Vec<f64>,
    v: Vec<f64>,
    v_max: Vec<f64>,
}

impl MomentState {
    fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            v_max: vec![0.0; n],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Parameter leaves recorded on a tape for one forward pass.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
    index: BTreeMap<String, usize>,
}

impl Bound {
    /// Binds already-recorded leaves, one per name, in order.
    pub fn from_vars(names: &[String], vars: &[Var]) -> Self {
        assert_eq!(names.len(), vars.len(), "one var per parameter");
        Self {
            vars: vars.to_vec(),
            index: names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Var {
        self.vars[*self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named `{name}`"))]
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelParams {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            index: BTreeMap::new(),
            tensors: Vec::new(),
            state: Vec::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        assert!(!self.index.contains_key(name), "duplicate parameter `{name}`");
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.state.push(MomentState::zeros(t.len()));
        self.tensors.push(t);
    }

    /// Adds a `rows x cols` parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn insert_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, Tensor::new(vec![rows, cols], data));
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| tape.leaf(t)).collect(),
            index: self.index.clone(),
        }
    }

    /// Copies the gradients of a backward pass into each tensor's `grad`.
    pub fn collect_grads(&mut self, bound: &Bound, grads: &Gradients) {
        for (t, &v) in self.tensors.iter_mut().zip(&bound.vars) {
            t.grad = Some(grads.of(v).to_vec());
        }
    }

    /// Adds `scale` times the gradients of a backward pass to each `grad`.
    pub fn accumulate_grads(&mut self, bound: &Bound, grads: &Gradients, scale: f64) {
        for (t, &v) in self.tensors.iter_mut().zip(&bound.vars) {
            let g = grads.of(v);
            match &mut t.grad {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, x)| *a += scale * x),
                None => t.grad = Some(g.iter().map(|x| scale * x).collect()),
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }

    /// Max-second-moment buffer of parameter `name`.
    pub fn v_max(&self, name: &str) -> Option<&[f64]> {
        self.index.get(name).map(|&i| self.state[i].v_max.as_slice())
    }

    /// One AMSGrad step with decoupled weight decay using the stored
    /// gradients. A non-finite gradient rejects the whole step.
    pub fn optimizer_step(&mut self, cfg: &OptimizerConfig) -> Result<(), NeuralError> {
        for (name, t) in self.names.iter().zip(&self.tensors) {
            if let Some(g) = &t.grad {
                if g.len() != t.len() {
                    return Err(NeuralError::Shape(format!(
                        "gradient of `{name}` has {} entries, expected {}",
                        g.len(),
                        t.len()
                    )));
                }
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(NeuralError::NonFiniteGradient(name.clone()));
                }
            }
        }
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for (t, s) in self.tensors.iter_mut().zip(&mut self.state) {
            let Some(g) = &t.grad else { continue };
            for i in 0..t.data.len() {
                t.data[i] *= 1.0 - cfg.learning_rate * cfg.weight_decay;
                s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g[i];
                s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                s.v_max[i] = s.v_max[i].max(s.v[i]);
                let denom = (s.v_max[i] / bc2).sqrt() + cfg.eps;
                t.data[i] -= cfg.learning_rate * (s.m[i] / bc1) / denom;
            }
        }
        if let Some((name, _)) = self.names.iter().zip(&self.tensors).find(|(_, t)| !t.is_finite()) {
            return Err(NeuralError::Divergence(format!("parameter `{name}` became non-finite")));
        }
        Ok(())
    }

    /// Clears optimizer moments and the step counter.
    pub fn reset_optimizer(&mut self) {
        self.step = 0;
        for (s, t) in self.state.iter_mut().zip(&self.tensors) {
            *s = MomentState::zeros(t.len());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("w", Tensor::row(vec![v]));
        p
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = single(0.7);
        let cfg = OptimizerConfig {
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        };
        for _ in 0..10 {
            p.get_mut("w").unwrap().grad = Some(vec![0.0]);
            p.optimizer_step(&cfg).unwrap();
        }
        assert_eq!(p.get("w").unwrap().data, vec![0.7]);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let mut p = single(0.0);
        let cfg = OptimizerConfig {
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        };
        let mut last = 0.0;
        let mut delta = 0.0;
        for _ in 0..2000 {
            p.get_mut("w").unwrap().grad = Some(vec![2.5]);
            p.optimizer_step(&cfg).unwrap();
            let now = p.get("w").unwrap().data[0];
            delta = (now - last).abs();
            last = now;
        }
        assert!((delta - cfg.learning_rate).abs() < 1e-9, "{delta}");
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = single(1.0);
        p.get_mut("w").unwrap().grad = Some(vec![f64::NAN]);
        assert!(matches!(
            p.optimizer_step(&OptimizerConfig::default()),
            Err(NeuralError::NonFiniteGradient(_))
        ));
        assert_eq!(p.get("w").unwrap().data, vec![1.0]);
        assert_eq!(p.step, 0);
    }
}
