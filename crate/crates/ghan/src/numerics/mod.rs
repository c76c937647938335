//! Minimal dense tensor engine with reverse-mode gradients.
//!
//! [`Tensor`] is an immutable shape + row-major `f64` buffer. [`Tape`]
//! records primitive operations and replays adjoints in reverse; every
//! primitive's gradient is checked against [`finite_diff_grad`] in the
//! test suite. [`AdamState`] implements Adam with bias correction and
//! decoupled weight decay.

mod adam;
mod finite_diff;
pub mod rng;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use finite_diff::{finite_diff_grad, max_relative_error};
pub use tape::{Gradients, Tape, TensorRef};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random_tensor(rng: &mut rng::Rng, shape: Vec<usize>) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        Tensor::new(shape, data).unwrap()
    }

    // ── matmul ──────────────────────────────────────────────────────────

    #[test]
    fn matmul_identity_passthrough() {
        let mut tape = Tape::new();
        let eye = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let m = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let out = tape.matmul(eye, m).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_row_times_column() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = tape.leaf(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = rng::seeded_rng(7);
        let a = random_tensor(&mut rng, vec![5, 4]);
        let b = random_tensor(&mut rng, vec![4, 3]);
        // Independent naive oracle.
        let mut expect = vec![0.0; 5 * 3];
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += a.at(i, k) * b.at(k, j);
                }
                expect[i * 3 + j] = s;
            }
        }
        let mut tape = Tape::new();
        let (ra, rb) = (tape.leaf(a), tape.leaf(b));
        let out = tape.matmul(ra, rb).unwrap();
        for (got, want) in tape.value(out).data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 3]));
        let b = tape.leaf(Tensor::zeros(vec![2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "error should name shapes: {err}");
    }

    // ── leaky_relu ──────────────────────────────────────────────────────

    #[test]
    fn leaky_relu_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![2.0, -1.0]));
        let y = tape.leaky_relu(x, 0.2);
        assert_eq!(tape.value(y).data(), &[2.0, -0.2]);
    }

    #[test]
    fn leaky_relu_gradient_matches_finite_difference() {
        let x = Tensor::from_vec(vec![-3.0]);
        let eval = |t: &Tensor| {
            let mut tape = Tape::new();
            let r = tape.leaf(t.clone());
            let y = tape.leaky_relu(r, 0.2);
            let s = tape.sum(y);
            tape.scalar_value(s)
        };
        let fd = finite_diff_grad(eval, &x, 1e-5);
        assert!((fd.data()[0] - 0.2).abs() < 1e-8);

        let mut tape = Tape::new();
        let r = tape.leaf(x);
        let y = tape.leaky_relu(r, 0.2);
        let s = tape.sum(y);
        let grads = tape.backward(s);
        assert!((grads.get(r).data()[0] - 0.2).abs() < 1e-12);
    }

    // ── softmax ─────────────────────────────────────────────────────────

    #[test]
    fn softmax_singleton_is_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![-17.3]));
        let y = tape.softmax(x).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0]);
    }

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![0.0, 0.0, 0.0]));
        let y = tape.softmax(x).unwrap();
        for v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_inputs_stay_finite() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1000.0, 1000.5]));
        let y = tape.softmax(x).unwrap();
        let out = tape.value(y);
        assert!(out.is_finite());
        // Oracle: shift both logits by their max, evaluate directly.
        let e = 0.5f64.exp();
        let expect = [1.0 / (1.0 + e), e / (1.0 + e)];
        for (got, want) in out.data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_empty_vector_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![]));
        assert!(tape.softmax(x).is_err());
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant() {
        let mut rng = rng::seeded_rng(11);
        for _ in 0..200 {
            let n = rng.random_range(1..9);
            let x = random_tensor(&mut rng, vec![n]);
            let shift = rng.random_range(-5.0..5.0);
            let shifted = Tensor::from_vec(x.data().iter().map(|v| v + shift).collect());

            let mut tape = Tape::new();
            let rx = tape.leaf(x);
            let rs = tape.leaf(shifted);
            let y = tape.softmax(rx).unwrap();
            let ys = tape.softmax(rs).unwrap();
            let sum: f64 = tape.value(y).data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for (a, b) in tape.value(y).data().iter().zip(tape.value(ys).data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    // ── dropout ─────────────────────────────────────────────────────────

    #[test]
    fn dropout_inference_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let y = tape.dropout(x, 0.5, 1, false).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_zero_probability_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let y = tape.dropout(x, 0.0, 1, true).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_survival_fraction_near_half() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0; 100_000]));
        let y = tape.dropout(x, 0.5, 42, true).unwrap();
        let survivors = tape.value(y).data().iter().filter(|&&v| v != 0.0).count();
        let fraction = survivors as f64 / 100_000.0;
        assert!((fraction - 0.5).abs() < 0.01, "fraction {fraction}");
        // Survivors carry the inverted-dropout scale.
        let kept = tape.value(y).data().iter().find(|&&v| v != 0.0).unwrap();
        assert_eq!(*kept, 2.0);
    }

    #[test]
    fn dropout_rejects_probability_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0]));
        assert!(tape.dropout(x, 1.0, 1, true).is_err());
    }

    #[test]
    fn dropout_deterministic_for_seed() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::from_vec(vec![1.0; 64]));
            let y = tape.dropout(x, 0.3, 99, true).unwrap();
            tape.value(y).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    // ── adam ────────────────────────────────────────────────────────────

    #[test]
    fn adam_zero_gradient_zero_decay_leaves_params() {
        let mut state = AdamState::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        let mut theta = Tensor::from_vec(vec![1.5, -0.5]);
        let grad = Tensor::from_vec(vec![0.0, 0.0]);
        state
            .step(vec![("theta".to_string(), &mut theta, &grad)])
            .unwrap();
        assert_eq!(theta.data(), &[1.5, -0.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // Hand evaluation of the recurrence with g=1:
        // m_hat = v_hat = 1, so the update is lr / (1 + eps) ~ lr.
        let mut state = AdamState::new(AdamConfig {
            learning_rate: 5e-4,
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        let mut theta = Tensor::from_vec(vec![1.0]);
        let grad = Tensor::from_vec(vec![1.0]);
        state
            .step(vec![("theta".to_string(), &mut theta, &grad)])
            .unwrap();
        let delta = 1.0 - theta.data()[0];
        assert!((delta - 5e-4).abs() < 1e-9, "delta {delta}");
    }

    #[test]
    fn adam_contracts_quadratic_objective() {
        let mut state = AdamState::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        let mut theta = Tensor::from_vec(vec![1.0]);
        let mut prev = 1.0f64;
        for _ in 0..100 {
            let grad = Tensor::from_vec(vec![2.0 * theta.data()[0]]);
            state
                .step(vec![("theta".to_string(), &mut theta, &grad)])
                .unwrap();
            let now = theta.data()[0].abs();
            assert!(now < prev, "|theta| must strictly decrease: {now} vs {prev}");
            prev = now;
        }
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut state = AdamState::new(AdamConfig::default());
        let mut theta = Tensor::from_vec(vec![1.0, 2.0]);
        let grad = Tensor::from_vec(vec![1.0]);
        assert!(state
            .step(vec![("theta".to_string(), &mut theta, &grad)])
            .is_err());
    }

    #[test]
    fn adam_is_bitwise_deterministic() {
        let run = || {
            let mut state = AdamState::new(AdamConfig::default());
            let mut theta = Tensor::from_vec(vec![0.3, -0.7, 1.1]);
            for step in 0..25 {
                let grad =
                    Tensor::from_vec(theta.data().iter().map(|v| v * 0.1 + step as f64).collect());
                state
                    .step(vec![("theta".to_string(), &mut theta, &grad)])
                    .unwrap();
            }
            theta.data().to_vec()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    // ── finite differences ──────────────────────────────────────────────

    #[test]
    fn finite_diff_of_sum_is_ones() {
        let x = Tensor::from_vec(vec![0.3, -1.2, 4.0]);
        let fd = finite_diff_grad(|t| t.data().iter().sum(), &x, 1e-5);
        for v in fd.data() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn finite_diff_of_square_at_three() {
        let x = Tensor::from_vec(vec![3.0]);
        let fd = finite_diff_grad(|t| t.data()[0] * t.data()[0], &x, 1e-5);
        assert!((fd.data()[0] - 6.0).abs() < 1e-6);
    }

    // ── tape structure ──────────────────────────────────────────────────

    #[test]
    fn unreachable_tensor_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let unused = tape.leaf(Tensor::from_vec(vec![5.0]));
        let s = tape.sum(x);
        let grads = tape.backward(s);
        assert_eq!(grads.get(unused).data(), &[0.0]);
        assert_eq!(grads.get(x).data(), &[1.0, 1.0]);
    }

    // ── per-primitive gradient checks against the oracle ────────────────

    /// Builds the computation twice: once on a tape for backward, and once
    /// per finite-difference probe. The output is contracted to a scalar
    /// with fixed random weights so errors cannot cancel.
    fn check_gradients<B>(inputs: &[Tensor], build: B, label: &str)
    where
        B: Fn(&mut Tape, &[TensorRef]) -> TensorRef,
    {
        let mut rng = rng::seeded_rng(0xC0FFEE);
        let probe_weights: Vec<f64> = {
            let mut tape = Tape::new();
            let refs: Vec<TensorRef> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
            let out = build(&mut tape, &refs);
            (0..tape.value(out).len())
                .map(|_| rng.random_range(0.5..1.5))
                .collect()
        };

        let eval = |replaced: usize, replacement: &Tensor| -> f64 {
            let mut tape = Tape::new();
            let refs: Vec<TensorRef> = inputs
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    tape.leaf(if k == replaced {
                        replacement.clone()
                    } else {
                        t.clone()
                    })
                })
                .collect();
            let out = build(&mut tape, &refs);
            let shape = tape.value(out).shape().to_vec();
            let w = tape.leaf(Tensor::new(shape, probe_weights.clone()).unwrap());
            let prod = tape.mul(out, w).unwrap();
            let s = tape.sum(prod);
            tape.scalar_value(s)
        };

        let mut tape = Tape::new();
        let refs: Vec<TensorRef> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &refs);
        let shape = tape.value(out).shape().to_vec();
        let w = tape.leaf(Tensor::new(shape, probe_weights.clone()).unwrap());
        let prod = tape.mul(out, w).unwrap();
        let s = tape.sum(prod);
        let grads = tape.backward(s);

        for (k, input) in inputs.iter().enumerate() {
            let fd = finite_diff_grad(|t| eval(k, t), input, 1e-5);
            let err = max_relative_error(grads.get(refs[k]), &fd, 1e-7);
            assert!(
                err <= 1e-4,
                "{label}: input {k} tape/oracle relative error {err:.3e}"
            );
        }
    }

    #[test]
    fn gradients_match_oracle_for_every_primitive() {
        let mut rng = rng::seeded_rng(314159);
        let t = |shape: Vec<usize>, rng: &mut rng::Rng| random_tensor(rng, shape);

        check_gradients(
            &[t(vec![3, 4], &mut rng), t(vec![4, 2], &mut rng)],
            |tape, r| tape.matmul(r[0], r[1]).unwrap(),
            "matmul",
        );
        check_gradients(
            &[t(vec![2, 3], &mut rng), t(vec![2, 3], &mut rng)],
            |tape, r| tape.add(r[0], r[1]).unwrap(),
            "add",
        );
        check_gradients(
            &[t(vec![2, 3], &mut rng), t(vec![2, 3], &mut rng)],
            |tape, r| tape.mul(r[0], r[1]).unwrap(),
            "mul",
        );
        check_gradients(
            &[t(vec![5], &mut rng)],
            |tape, r| tape.scale(r[0], -1.7),
            "scale",
        );
        check_gradients(
            &[t(vec![3], &mut rng), t(vec![2], &mut rng)],
            |tape, r| tape.concat(&[r[0], r[1]]).unwrap(),
            "concat",
        );
        check_gradients(
            &[t(vec![2, 3], &mut rng), t(vec![1, 3], &mut rng)],
            |tape, r| tape.vstack(&[r[0], r[1]]).unwrap(),
            "vstack",
        );
        check_gradients(
            &[t(vec![4, 3], &mut rng)],
            |tape, r| tape.gather_rows(r[0], &[2, 0, 2, 3]).unwrap(),
            "gather_rows (with repeats)",
        );
        check_gradients(
            &[t(vec![6], &mut rng)],
            |tape, r| tape.gather_rows(r[0], &[5, 1, 1]).unwrap(),
            "gather elements",
        );
        check_gradients(
            &[t(vec![2, 3], &mut rng)],
            |tape, r| tape.sum(r[0]),
            "sum",
        );
        // Keep inputs away from the kink at zero.
        let lr_in = Tensor::from_vec(vec![-1.9, -0.7, 0.6, 1.3, -1.1, 0.9]);
        check_gradients(
            &[lr_in],
            |tape, r| tape.leaky_relu(r[0], 0.2),
            "leaky_relu",
        );
        check_gradients(
            &[t(vec![5], &mut rng)],
            |tape, r| tape.softmax(r[0]).unwrap(),
            "softmax",
        );
        let groups = vec![vec![0, 2, 4], vec![1, 3]];
        check_gradients(
            &[t(vec![5], &mut rng)],
            |tape, r| tape.segment_softmax(r[0], &groups).unwrap(),
            "segment_softmax",
        );
        let row_for = vec![0, 2, 1, 2, 0];
        let sw_groups = vec![vec![0, 3], vec![1, 2, 4], vec![]];
        check_gradients(
            &[t(vec![5], &mut rng), t(vec![3, 4], &mut rng)],
            |tape, r| {
                tape.segment_weighted_rows(r[0], r[1], &row_for, &sw_groups)
                    .unwrap()
            },
            "segment_weighted_rows",
        );
        check_gradients(
            &[t(vec![3, 4], &mut rng)],
            |tape, r| tape.dropout(r[0], 0.4, 77, true).unwrap(),
            "dropout",
        );
        check_gradients(
            &[t(vec![3, 2], &mut rng), t(vec![2], &mut rng)],
            |tape, r| tape.add_bias_row(r[0], r[1]).unwrap(),
            "add_bias_row",
        );
        check_gradients(
            &[t(vec![6], &mut rng)],
            |tape, r| tape.reshape(r[0], vec![2, 3]).unwrap(),
            "reshape",
        );
        check_gradients(
            &[t(vec![3, 4], &mut rng)],
            |tape, r| tape.cross_entropy_softmax(r[0], &[1, 0, 3]).unwrap(),
            "cross_entropy_softmax",
        );
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_classes() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::matrix(1, 3, vec![0.0, 0.0, 0.0]).unwrap());
        let loss = tape.cross_entropy_softmax(logits, &[2]).unwrap();
        assert!((tape.scalar_value(loss) - 3f64.ln()).abs() < 1e-12);
    }
}
