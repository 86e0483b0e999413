//! Small dense numeric core: f64 tensors, transformer-encoder layers with
//! hand-written reverse passes, loss functions, Adam, and a
//! finite-difference gradient checker.

mod adam;
mod attention;
mod encoder;
mod gradcheck;
mod layers;
mod loss;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use attention::{multi_head_self_attention, AttentionCache, MultiHeadAttention};
pub use encoder::{encoder_forward, BlockCache, Encoder, EncoderBlock, EncoderCache, EncoderConfig};
pub use gradcheck::finite_difference_check;
pub use layers::{FeedForward, LayerNorm, Linear, Module, Param, LAYER_NORM_EPS};
pub use loss::{binary_cross_entropy, softmax, softmax_cross_entropy, BCE_CLAMP};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

#[cfg(test)]
mod tests {
    use super::tensor::dot;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn small_config(seed: u64) -> EncoderConfig {
        EncoderConfig { model_dim: 12, layers: 2, heads: 3, ffn_dim: 20, seed }
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mha = MultiHeadAttention::new("a", 12, 4, &mut rng).unwrap();
        let x = random_tensor(&[7, 12], &mut rng);
        let (_, a) = multi_head_self_attention(&x, &mha).unwrap();
        assert_eq!(a.shape(), &[4, 7, 7]);
        for row in a.data().chunks(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_token_attention_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mha = MultiHeadAttention::new("a", 8, 2, &mut rng).unwrap();
        let x = random_tensor(&[1, 8], &mut rng);
        let (y, a) = multi_head_self_attention(&x, &mha).unwrap();
        assert_eq!(a.data(), &[1.0, 1.0]);
        // y = Wo(V row): evaluated by hand from the parameters
        let v = mha.value.forward(&x);
        let expected = mha.output.forward(&v);
        for (a, b) in y.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mha = MultiHeadAttention::new("a", 8, 2, &mut rng).unwrap();
        assert!(matches!(mha.forward(&Tensor::zeros(&[3, 6])), Err(NnError::ShapeMismatch(_))));
        let enc = Encoder::new(small_config(0)).unwrap();
        assert!(matches!(enc.forward(&Tensor::zeros(&[0, 12])), Err(NnError::ShapeMismatch(_))));
        assert!(matches!(
            Encoder::new(EncoderConfig { model_dim: 10, heads: 3, ..small_config(0) }),
            Err(NnError::InvalidConfig(_))
        ));
    }

    fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
        let (n, d) = x.dims2();
        let mut out = Tensor::zeros(&[n, d]);
        for (i, &p) in perm.iter().enumerate() {
            out.row_mut(i).copy_from_slice(x.row(p));
        }
        out
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = Encoder::new(small_config(9)).unwrap();
        let x = random_tensor(&[6, 12], &mut rng);
        let perm = [3, 0, 5, 1, 4, 2];
        let (y, a) = encoder_forward(&x, &enc).unwrap();
        let (yp, ap) = encoder_forward(&permute_rows(&x, &perm), &enc).unwrap();
        assert_eq!(y.shape(), &[6, 12]);
        for (i, &p) in perm.iter().enumerate() {
            for (u, v) in yp.row(i).iter().zip(y.row(p)) {
                assert!((u - v).abs() < 1e-9);
            }
        }
        let n = 6;
        for h in 0..3 {
            for (i, &pi) in perm.iter().enumerate() {
                for (j, &pj) in perm.iter().enumerate() {
                    let lhs = ap.data()[h * n * n + i * n + j];
                    let rhs = a.data()[h * n * n + pi * n + pj];
                    assert!((lhs - rhs).abs() < 1e-9);
                }
            }
        }
        for row in a.data().chunks(n) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn encoder_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&[4, 12], &mut rng);
        let a = encoder_forward(&x, &Encoder::new(small_config(3)).unwrap()).unwrap();
        let b = encoder_forward(&x, &Encoder::new(small_config(3)).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    /// Linear functional of the output so every layer gets a scalar loss.
    fn probe_loss(y: &Tensor, weights: &Tensor) -> f64 {
        dot(y.data(), weights.data())
    }

    #[test]
    fn linear_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut layer = Linear::new("l", 5, 3, &mut rng);
        let x = random_tensor(&[4, 5], &mut rng);
        let c = random_tensor(&[4, 3], &mut rng);
        let err = finite_difference_check(
            &mut layer,
            |l| {
                let y = l.forward(&x);
                l.backward(&x, &c);
                probe_loss(&y, &c)
            },
            15,
            1e-5,
            0,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn layer_norm_and_ffn_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut ln = LayerNorm::new("n", 6);
        ln.gamma.value.data_mut().iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
        let x = random_tensor(&[3, 6], &mut rng);
        let c = random_tensor(&[3, 6], &mut rng);
        let err = finite_difference_check(
            &mut ln,
            |l| {
                let (y, cache) = l.forward(&x);
                l.backward(&cache, &c);
                probe_loss(&y, &c)
            },
            12,
            1e-5,
            1,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");

        let mut ffn = FeedForward::new("f", 6, 10, 6, &mut rng);
        let err = finite_difference_check(
            &mut ffn,
            |f| {
                let (y, cache) = f.forward(&x);
                f.backward(&cache, &c);
                probe_loss(&y, &c)
            },
            30,
            1e-5,
            2,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn attention_gradients_including_attention_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut mha = MultiHeadAttention::new("a", 8, 2, &mut rng).unwrap();
        let x = random_tensor(&[5, 8], &mut rng);
        let c = random_tensor(&[5, 8], &mut rng);
        let e = random_tensor(&[2, 5, 5], &mut rng);
        let err = finite_difference_check(
            &mut mha,
            |m| {
                let (y, cache) = m.forward(&x).unwrap();
                let loss = probe_loss(&y, &c) + probe_loss(cache.attention(), &e);
                m.backward(&cache, &c, Some(&e));
                loss
            },
            40,
            1e-5,
            3,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn encoder_gradients_including_final_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut enc = Encoder::new(small_config(11)).unwrap();
        let x = random_tensor(&[5, 12], &mut rng);
        let c = random_tensor(&[5, 12], &mut rng);
        let e = random_tensor(&[3, 5, 5], &mut rng);
        let err = finite_difference_check(
            &mut enc,
            |m| {
                let (y, cache) = m.forward(&x).unwrap();
                let loss = probe_loss(&y, &c) + probe_loss(cache.final_attention(), &e);
                m.backward(&cache, &c, Some(&e));
                loss
            },
            60,
            1e-5,
            4,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    struct Quadratic {
        x: Param,
    }

    impl Module for Quadratic {
        fn visit(&self, f: &mut dyn FnMut(&Param)) {
            f(&self.x);
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
            f(&mut self.x);
        }
    }

    fn quadratic_loss(q: &mut Quadratic) -> f64 {
        let vals = q.x.value.data().to_vec();
        q.x.grad.data_mut().iter_mut().zip(&vals).for_each(|(g, v)| *g += v);
        0.5 * vals.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn quadratic_gradient_check_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut q = Quadratic { x: Param::zeros("x", &[10]) };
        q.x.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
        let err = finite_difference_check(&mut q, quadratic_loss, 10, 1e-5, 0).unwrap();
        assert!(err < 1e-9, "{err}");
        assert_eq!(finite_difference_check(&mut q, quadratic_loss, 10, 0.0, 0), Err(NnError::InvalidStep(0.0)));
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut q = Quadratic { x: Param::zeros("x", &[3]) };
        q.x.value.data_mut().copy_from_slice(&[1.0, -2.0, 3.0]);
        let mut state = AdamState::new(AdamConfig::default());
        adam_step(&mut q, &mut state);
        assert_eq!(q.x.value.data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_sign() {
        let mut q = Quadratic { x: Param::zeros("x", &[2]) };
        q.x.grad.data_mut().copy_from_slice(&[0.3, -5.0]);
        let mut state = AdamState::new(AdamConfig::default());
        adam_step(&mut q, &mut state);
        // m̂ = g, v̂ = g², so Δ = −lr·g/(|g|+ε)
        let lr = 1e-4;
        let expected = [-lr * 0.3 / (0.3 + 1e-8), lr * 5.0 / (5.0 + 1e-8)];
        for (v, e) in q.x.value.data().iter().zip(expected) {
            assert!((v - e).abs() < 1e-15);
        }
        assert_eq!(q.x.grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn adam_trajectories_are_deterministic() {
        let run = || {
            let mut q = Quadratic { x: Param::zeros("x", &[4]) };
            q.x.value.data_mut().copy_from_slice(&[1.0, 2.0, -1.0, 0.5]);
            let mut state = AdamState::new(AdamConfig { learning_rate: 0.1, ..AdamConfig::default() });
            let mut traj = Vec::new();
            for _ in 0..20 {
                quadratic_loss(&mut q);
                adam_step(&mut q, &mut state);
                traj.push(q.x.value.data().to_vec());
            }
            traj
        };
        assert_eq!(run(), run());
    }
}
