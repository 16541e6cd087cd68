//! Adam over a named subset of a `VarMap`, with moment buffers that can be
//! exported to and restored from checkpoints.

use std::collections::HashMap;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use candle_nn::VarMap;

use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug)]
pub struct Adam {
    params: AdamParams,
    vars: Vec<(String, Var)>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    /// Optimizes every variable whose name starts with one of `prefixes`
    /// followed by a dot.
    pub fn new(varmap: &VarMap, prefixes: &[&str], params: AdamParams) -> Result<Self> {
        let data = varmap.data().lock().expect("varmap lock poisoned");
        let mut vars: Vec<(String, Var)> = data
            .iter()
            .filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(&format!("{p}."))))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        vars.sort_by(|a, b| a.0.cmp(&b.0));
        let zeros = |v: &Var| v.as_tensor().zeros_like();
        let m = vars.iter().map(|(_, v)| zeros(v)).collect::<candle_core::Result<_>>()?;
        let v = vars.iter().map(|(_, v)| zeros(v)).collect::<candle_core::Result<_>>()?;
        Ok(Self {
            params,
            vars,
            m,
            v,
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// One update from `grads`; variables without a gradient keep their value
    /// and moments.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.t += 1;
        let AdamParams { lr, beta1, beta2, eps } = self.params;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, (_, var)) in self.vars.iter().enumerate() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let m = ((&self.m[i] * beta1)? + (g * (1.0 - beta1))?)?;
            let v = ((&self.v[i] * beta2)? + (g.sqr()? * (1.0 - beta2))?)?;
            let m_hat = (&m / bc1)?;
            let v_hat = (&v / bc2)?;
            let update = (m_hat / (v_hat.sqrt()? + eps)?)?;
            var.set(&(var.as_tensor() - (update * lr)?)?)?;
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }

    /// Moment buffers keyed `"{tag}.m.{var}"` and `"{tag}.v.{var}"`.
    pub fn state(&self, tag: &str) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(2 * self.vars.len());
        for (i, (name, _)) in self.vars.iter().enumerate() {
            out.push((format!("{tag}.m.{name}"), self.m[i].clone()));
            out.push((format!("{tag}.v.{name}"), self.v[i].clone()));
        }
        out
    }

    pub fn load_state(&mut self, tag: &str, tensors: &HashMap<String, Tensor>, steps: u64) -> Result<()> {
        for (i, (name, var)) in self.vars.iter().enumerate() {
            for (kind, slot) in [("m", &mut self.m[i]), ("v", &mut self.v[i])] {
                let key = format!("{tag}.{kind}.{name}");
                let t = tensors
                    .get(&key)
                    .ok_or_else(|| shape_err!("checkpoint lacks optimizer state {key}"))?;
                if t.dims() != var.dims() {
                    return Err(shape_err!("{key}: {:?} != {:?}", t.dims(), var.dims()));
                }
                *slot = t.to_dtype(var.dtype())?;
            }
        }
        self.t = steps;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use candle_nn::{Init, VarBuilder};

    const P: AdamParams = AdamParams {
        lr: 0.1,
        beta1: 0.5,
        beta2: 0.999,
        eps: 1e-8,
    };

    fn scalar_var(vm: &VarMap, name: &str, init: f64) -> Tensor {
        let vb = VarBuilder::from_varmap(vm, DType::F64, &Device::Cpu);
        vb.get_with_hints(1, name, Init::Const(init)).unwrap()
    }

    /// Plain-float Adam on f(x) = (x - 3)^2.
    fn reference(steps: usize) -> f64 {
        let (mut x, mut m, mut v) = (0.0f64, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * (x - 3.0);
            m = P.beta1 * m + (1.0 - P.beta1) * g;
            v = P.beta2 * v + (1.0 - P.beta2) * g * g;
            let mh = m / (1.0 - P.beta1.powi(t as i32));
            let vh = v / (1.0 - P.beta2.powi(t as i32));
            x -= P.lr * mh / (vh.sqrt() + P.eps);
        }
        x
    }

    #[test]
    fn matches_scalar_reference() {
        let vm = VarMap::new();
        let x = scalar_var(&vm, "p.x", 0.0);
        let mut opt = Adam::new(&vm, &["p"], P).unwrap();
        for _ in 0..25 {
            let loss = (&x - 3.0).unwrap().sqr().unwrap().sum_all().unwrap();
            opt.step(&loss.backward().unwrap()).unwrap();
        }
        let got: f64 = x.to_vec1::<f64>().unwrap()[0];
        assert!((got - reference(25)).abs() < 1e-12, "{got} vs {}", reference(25));
    }

    #[test]
    fn prefix_selects_vars_and_state_round_trips() {
        let vm = VarMap::new();
        let a = scalar_var(&vm, "a.w", 1.0);
        let _b = scalar_var(&vm, "b.w", 1.0);
        let _ab = scalar_var(&vm, "ab.w", 1.0);
        let mut opt = Adam::new(&vm, &["a"], P).unwrap();
        assert_eq!(opt.len(), 1);
        let loss = a.sqr().unwrap().sum_all().unwrap();
        opt.step(&loss.backward().unwrap()).unwrap();
        let state: HashMap<String, Tensor> = opt.state("g").into_iter().collect();
        assert!(state.contains_key("g.m.a.w") && state.contains_key("g.v.a.w"));

        let mut fresh = Adam::new(&vm, &["a"], P).unwrap();
        fresh.load_state("g", &state, opt.steps()).unwrap();
        assert_eq!(fresh.steps(), 1);
        for ((k1, t1), (k2, t2)) in opt.state("g").iter().zip(fresh.state("g").iter()) {
            assert_eq!(k1, k2);
            assert_eq!(t1.to_vec1::<f64>().unwrap(), t2.to_vec1::<f64>().unwrap());
        }
    }

    #[test]
    fn missing_state_is_an_error() {
        let vm = VarMap::new();
        let _a = scalar_var(&vm, "a.w", 1.0);
        let mut opt = Adam::new(&vm, &["a"], P).unwrap();
        assert!(opt.load_state("g", &HashMap::new(), 1).is_err());
    }
}
