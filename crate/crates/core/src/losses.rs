//! Training objectives. Each returns a scalar tensor that can be
//! backpropagated; a non-finite value is reported as [`Error::Numerical`].

use candle_core::{DType, Module, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub adv: f64,
    pub adv2: f64,
    pub cycle: f64,
    pub identity: f64,
    /// The identity term is dropped from this step on.
    pub identity_steps: usize,
    pub nce: f64,
    pub nce_temperature: f64,
    /// Adds an NCE term on target-domain inputs passed through the generator.
    pub nce_identity: bool,
    pub l1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adv: 1.0,
            adv2: 1.0,
            cycle: 10.0,
            identity: 5.0,
            identity_steps: 10_000,
            nce: 1.0,
            nce_temperature: 0.07,
            nce_identity: false,
            l1: 100.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("adv", self.adv),
            ("adv2", self.adv2),
            ("cycle", self.cycle),
            ("identity", self.identity),
            ("nce", self.nce),
            ("l1", self.l1),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(config_err!("loss weight {name} must be finite and >= 0, got {w}"));
            }
        }
        if !(self.nce_temperature > 0.0 && self.nce_temperature.is_finite()) {
            return Err(config_err!(
                "nce_temperature must be positive, got {}",
                self.nce_temperature
            ));
        }
        Ok(())
    }

    /// Identity weight in effect at `step`.
    pub fn identity_at(&self, step: usize) -> f64 {
        if step < self.identity_steps {
            self.identity
        } else {
            0.0
        }
    }
}

/// Reads a scalar loss back as `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn finite(loss: Tensor, what: &str) -> Result<Tensor> {
    let v = scalar(&loss)?;
    if v.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Numerical(format!("{what} loss is {v}")))
    }
}

/// `mean((D(real) - 1)^2) + mean(D(fake)^2)`.
pub fn lsgan_discriminator(real: &Tensor, fake: &Tensor) -> Result<Tensor> {
    let r = (real - 1.0)?.sqr()?.mean_all()?;
    let f = fake.sqr()?.mean_all()?;
    finite((r + f)?, "discriminator")
}

/// `mean((D(fake) - 1)^2)`.
pub fn lsgan_generator(fake: &Tensor) -> Result<Tensor> {
    finite((fake - 1.0)?.sqr()?.mean_all()?, "generator")
}

/// Least-squares adversarial loss from discriminator outputs. The generator
/// side ignores `real`.
pub fn adversarial_loss(real: &Tensor, fake: &Tensor, side: Side) -> Result<Tensor> {
    match side {
        Side::Discriminator => lsgan_discriminator(real, fake),
        Side::Generator => lsgan_generator(fake),
    }
}

/// Adversarial loss on cycled outputs judged by an extra discriminator.
/// On the discriminator side the cycled input is detached.
pub fn second_adversarial_loss<M: Module + ?Sized>(
    real: &Tensor,
    cycled: &Tensor,
    d_prime: &M,
    side: Side,
) -> Result<Tensor> {
    if real.dims() != cycled.dims() {
        return Err(shape_err!("real {:?} vs cycled {:?}", real.dims(), cycled.dims()));
    }
    match side {
        Side::Generator => lsgan_generator(&d_prime.forward(cycled)?),
        Side::Discriminator => lsgan_discriminator(
            &d_prime.forward(real)?,
            &d_prime.forward(&cycled.detach())?,
        ),
    }
}

fn mean_abs(a: &Tensor, b: &Tensor, what: &str) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(shape_err!("{what}: {:?} vs {:?}", a.dims(), b.dims()));
    }
    finite((a - b)?.abs()?.mean_all()?, what)
}

pub fn cycle_loss(real: &Tensor, cycled: &Tensor) -> Result<Tensor> {
    mean_abs(real, cycled, "cycle")
}

pub fn identity_loss(real: &Tensor, mapped: &Tensor) -> Result<Tensor> {
    mean_abs(real, mapped, "identity")
}

pub fn l1_supervised_loss(generated: &Tensor, target: &Tensor) -> Result<Tensor> {
    mean_abs(generated, target, "l1")
}

/// Per-query contrastive loss for `(N, D)` queries and keys: row `i` is
/// `logsumexp_j(q_i . k_j / tau) - q_i . k_i / tau`.
pub fn patchnce_per_query(queries: &Tensor, keys: &Tensor, temperature: f64) -> Result<Tensor> {
    let (n, d) = queries.dims2()?;
    if keys.dims2()? != (n, d) {
        return Err(shape_err!("queries {:?} vs keys {:?}", queries.dims(), keys.dims()));
    }
    if n < 2 {
        return Err(config_err!("PatchNCE needs at least 2 patches, got {n}"));
    }
    if !(temperature > 0.0) {
        return Err(config_err!("temperature must be positive"));
    }
    let logits = (queries.matmul(&keys.t()?)? / temperature)?;
    let positive = ((queries * keys)?.sum(D::Minus1)? / temperature)?;
    Ok((logits.log_sum_exp(D::Minus1)? - positive)?)
}

pub fn patchnce_loss(queries: &Tensor, keys: &Tensor, temperature: f64) -> Result<Tensor> {
    finite(
        patchnce_per_query(queries, keys, temperature)?.mean_all()?,
        "patchnce",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(v: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_slice(v, shape, &Device::Cpu).unwrap()
    }

    fn val(x: Result<Tensor>) -> f64 {
        scalar(&x.unwrap()).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn normalize_rows(v: &mut [f64], d: usize) {
        for row in v.chunks_mut(d) {
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.iter_mut().for_each(|x| *x /= n);
        }
    }

    /// Softmax cross-entropy with diagonal targets, in plain f64.
    fn nce_oracle(q: &[f64], k: &[f64], n: usize, d: usize, tau: f64) -> f64 {
        let dot = |i: usize, j: usize| (0..d).map(|c| q[i * d + c] * k[j * d + c]).sum::<f64>();
        let mut total = 0.0;
        for i in 0..n {
            let logits: Vec<f64> = (0..n).map(|j| dot(i, j) / tau).collect();
            let denom: f64 = logits.iter().map(|l| l.exp()).sum();
            total += -(logits[i].exp() / denom).ln();
        }
        total / n as f64
    }

    /// Central-difference gradient check of `f` at `x`.
    fn grad_check(x: &[f64], shape: &[usize], f: impl Fn(&Tensor) -> Tensor) {
        let var = Var::from_tensor(&t(x, shape)).unwrap();
        let loss = f(var.as_tensor());
        let grads = loss.backward().unwrap();
        let analytic: Vec<f64> = grads
            .get(var.as_tensor())
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1()
            .unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let fp = scalar(&f(&t(&plus, shape))).unwrap();
            let fm = scalar(&f(&t(&minus, shape))).unwrap();
            let numeric = (fp - fm) / (2.0 * h);
            let scale = numeric.abs().max(analytic[i].abs()).max(1e-6);
            let rel = (numeric - analytic[i]).abs() / scale;
            assert!(rel <= 1e-3, "element {i}: analytic {} numeric {numeric}", analytic[i]);
        }
    }

    #[test]
    fn lsgan_ideal_cases_are_zero() {
        let ones = t(&[1.0; 4], &[2, 2]);
        let zeros = t(&[0.0; 4], &[2, 2]);
        assert_eq!(val(adversarial_loss(&ones, &zeros, Side::Discriminator)), 0.0);
        assert_eq!(val(adversarial_loss(&zeros, &ones, Side::Generator)), 0.0);
    }

    #[test]
    fn lsgan_half_case() {
        let half = t(&[0.5], &[1]);
        let v = val(adversarial_loss(&half, &half, Side::Discriminator));
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nan_is_numerical_error() {
        let bad = t(&[f64::NAN, 0.0], &[2]);
        let ok = t(&[0.0, 0.0], &[2]);
        assert!(matches!(
            adversarial_loss(&ok, &bad, Side::Discriminator),
            Err(Error::Numerical(_))
        ));
        assert!(matches!(lsgan_generator(&bad), Err(Error::Numerical(_))));
    }

    #[test]
    fn second_adversarial_two_by_two_hand_value() {
        // D' scales its input by 0.5 and adds 0.25
        let d = |x: &Tensor| (x * 0.5)? + 0.25;
        let real = t(&[1.0, 0.5, 0.0, -1.0], &[1, 1, 2, 2]);
        let cycled = t(&[0.5, 0.5, -0.5, 1.0], &[1, 1, 2, 2]);
        // D'(real) = [0.75, 0.5, 0.25, -0.25], D'(cycled) = [0.5, 0.5, 0, 0.75]
        let disc_expected = (0.0625 + 0.25 + 0.5625 + 1.5625) / 4.0 + (0.25 + 0.25 + 0.0 + 0.5625) / 4.0;
        let gen_expected = (0.25 + 0.25 + 1.0 + 0.0625) / 4.0;
        let disc = val(second_adversarial_loss(&real, &cycled, &d, Side::Discriminator));
        let gen = val(second_adversarial_loss(&real, &cycled, &d, Side::Generator));
        assert!((disc - disc_expected).abs() < 1e-12, "{disc}");
        assert!((gen - gen_expected).abs() < 1e-12, "{gen}");
    }

    #[test]
    fn second_adversarial_ideal_cases() {
        let real = t(&[0.3, -0.2], &[1, 2]);
        let fooled = |x: &Tensor| x.ones_like();
        assert_eq!(val(second_adversarial_loss(&real, &real, &fooled, Side::Generator)), 0.0);
        // a perfect D' outputs 1 on the real tensor and 0 on the cycled one
        let cycled = t(&[5.0, 5.0], &[1, 2]);
        let perfect = |x: &Tensor| x.lt(1.0)?.to_dtype(DType::F64);
        assert_eq!(val(second_adversarial_loss(&real, &cycled, &perfect, Side::Discriminator)), 0.0);
        assert!(second_adversarial_loss(&real, &t(&[1.0], &[1, 1]), &fooled, Side::Generator).is_err());
    }

    #[test]
    fn l1_losses_offsets_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 64);
        let b = random(&mut rng, 64);
        let oracle = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 64.0;
        let shifted: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        let ta = t(&a, &[4, 16]);
        for f in [cycle_loss, identity_loss, l1_supervised_loss] {
            assert_eq!(val(f(&ta, &ta)), 0.0);
            assert!((val(f(&ta, &t(&shifted, &[4, 16]))) - 0.3).abs() < 1e-12);
            assert!((val(f(&ta, &t(&b, &[4, 16]))) - oracle).abs() < 1e-7);
            assert!(matches!(f(&ta, &t(&b, &[8, 8])), Err(Error::Shape(_))));
        }
    }

    #[test]
    fn patchnce_two_orthogonal_keys() {
        let q = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        let per = patchnce_per_query(&q, &q, 1.0).unwrap().to_vec1::<f64>().unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((per[0] - expected).abs() < 1e-12);
        assert!((per[0] - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn patchnce_needs_two_patches() {
        let q = t(&[1.0, 0.0], &[1, 2]);
        assert!(matches!(patchnce_loss(&q, &q, 0.07), Err(Error::Config(_))));
    }

    #[test]
    fn patchnce_sharp_positive_tends_to_zero() {
        let q = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        assert!(val(patchnce_loss(&q, &q, 0.01)) < 1e-40);
    }

    #[test]
    fn patchnce_matches_softmax_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, d) = (8, 5);
        let mut q = random(&mut rng, n * d);
        let mut k = random(&mut rng, n * d);
        normalize_rows(&mut q, d);
        normalize_rows(&mut k, d);
        let got = val(patchnce_loss(&t(&q, &[n, d]), &t(&k, &[n, d]), 0.07));
        assert!((got - nce_oracle(&q, &k, n, d, 0.07)).abs() < 1e-6);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 12);
        let other = t(&random(&mut rng, 12), &[3, 4]);
        grad_check(&x, &[3, 4], |v| lsgan_generator(v).unwrap());
        grad_check(&x, &[3, 4], |v| lsgan_discriminator(v, &other).unwrap());
        grad_check(&x, &[3, 4], |v| lsgan_discriminator(&other, v).unwrap());
        grad_check(&x, &[3, 4], |v| cycle_loss(v, &other).unwrap());
        grad_check(&x, &[3, 4], |v| identity_loss(&other, v).unwrap());
        grad_check(&x, &[3, 4], |v| l1_supervised_loss(v, &other).unwrap());
        let d = |x: &Tensor| (x * 0.7)?.tanh();
        grad_check(&x, &[3, 4], |v| {
            second_adversarial_loss(&other, v, &d, Side::Generator).unwrap()
        });
        grad_check(&x, &[3, 4], |v| patchnce_loss(v, &other, 0.5).unwrap());
        grad_check(&x, &[3, 4], |v| patchnce_loss(&other, v, 0.5).unwrap());
    }

    #[test]
    fn weights_validate() {
        assert!(LossWeights::default().validate().is_ok());
        let bad = LossWeights { cycle: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = LossWeights { nce_temperature: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let w = LossWeights::default();
        assert_eq!(w.identity_at(9_999), 5.0);
        assert_eq!(w.identity_at(10_000), 0.0);
    }

    proptest! {
        #[test]
        fn losses_are_nonnegative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = t(&random(&mut rng, 6), &[2, 3]);
            let b = t(&random(&mut rng, 6), &[2, 3]);
            prop_assert!(val(lsgan_discriminator(&a, &b)) >= 0.0);
            prop_assert!(val(lsgan_generator(&a)) >= 0.0);
            prop_assert!(val(cycle_loss(&a, &b)) >= 0.0);
            prop_assert!(val(patchnce_loss(&a, &b, 0.3)) >= 0.0);
        }

        #[test]
        fn patchnce_is_permutation_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, d) = (6, 4);
            let q = random(&mut rng, n * d);
            let k = random(&mut rng, n * d);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let permute = |v: &[f64]| perm.iter().flat_map(|&i| v[i * d..(i + 1) * d].to_vec()).collect::<Vec<_>>();
            let base = val(patchnce_loss(&t(&q, &[n, d]), &t(&k, &[n, d]), 0.2));
            let permuted = val(patchnce_loss(&t(&permute(&q), &[n, d]), &t(&permute(&k), &[n, d]), 0.2));
            prop_assert!((base - permuted).abs() < 1e-12);
        }
    }
}
