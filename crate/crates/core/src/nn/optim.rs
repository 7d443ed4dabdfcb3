//! Adam with bias correction, and the MSE loss used everywhere.

use rayon::prelude::*;

use super::tensor::{Scalar, Tensor};
use super::NnError;

const ELEM_CHUNK: usize = 1 << 16;

/// Per-parameter first/second moment accumulators plus the shared step count.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// (m, v) aligned with the parameter list the state was built for.
    pub moments: Vec<(Tensor<S>, Tensor<S>)>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(lr: f64, params: &[&Tensor<S>]) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: params
                .iter()
                .map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
                .collect(),
        }
    }
}

/// One bias-corrected Adam update over aligned parameter/gradient lists.
/// `names` is consulted only to report a non-finite gradient.
pub fn adam_step<S: Scalar>(
    params: &mut [&mut Tensor<S>],
    grads: &[Tensor<S>],
    names: &[String],
    state: &mut AdamState<S>,
) -> Result<(), NnError> {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.moments.len());
    for (i, g) in grads.iter().enumerate() {
        if !g.all_finite() {
            return Err(NnError::NonFinite {
                context: format!(
                    "gradient for parameter {}",
                    names.get(i).map(String::as_str).unwrap_or("?")
                ),
            });
        }
    }
    state.step += 1;
    let b1 = S::from_f64(state.beta1);
    let b2 = S::from_f64(state.beta2);
    let one_m_b1 = S::from_f64(1.0 - state.beta1);
    let one_m_b2 = S::from_f64(1.0 - state.beta2);
    let bc1 = S::from_f64(1.0 - state.beta1.powi(state.step as i32));
    let bc2 = S::from_f64(1.0 - state.beta2.powi(state.step as i32));
    let lr = S::from_f64(state.lr);
    let eps = S::from_f64(state.eps);
    for ((param, grad), (m, v)) in params.iter_mut().zip(grads).zip(&mut state.moments) {
        param
            .data_mut()
            .par_chunks_mut(ELEM_CHUNK)
            .zip(m.data_mut().par_chunks_mut(ELEM_CHUNK))
            .zip(v.data_mut().par_chunks_mut(ELEM_CHUNK))
            .zip(grad.data().par_chunks(ELEM_CHUNK))
            .for_each(|(((p_chunk, m_chunk), v_chunk), g_chunk)| {
                for i in 0..p_chunk.len() {
                    m_chunk[i] = b1 * m_chunk[i] + one_m_b1 * g_chunk[i];
                    v_chunk[i] = b2 * v_chunk[i] + one_m_b2 * g_chunk[i] * g_chunk[i];
                    let m_hat = m_chunk[i] / bc1;
                    let v_hat = v_chunk[i] / bc2;
                    p_chunk[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            });
    }
    Ok(())
}

/// Mean squared error over all elements, with its gradient `2(pred-y)/n`.
pub fn mse_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<(f64, Tensor<S>), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::Shape {
            layer: usize::MAX,
            message: format!(
                "mse_loss shape mismatch: {:?} vs {:?}",
                pred.shape(),
                target.shape()
            ),
        });
    }
    let n = pred.numel() as f64;
    let mut acc = 0.0f64;
    let mut grad = Tensor::zeros(pred.shape());
    let scale = S::from_f64(2.0 / n);
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        acc += d.to_f64() * d.to_f64();
        *g = scale * d;
    }
    Ok((acc / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_matches_hand_values() {
        let p = Tensor::from_vec(&[1], vec![3.0f64]);
        let t = Tensor::from_vec(&[1], vec![1.0f64]);
        let (loss, grad) = mse_loss(&p, &t).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(grad.data(), &[4.0]);

        let p = Tensor::from_vec(&[2], vec![1.0f64, 2.0]);
        let t = Tensor::from_vec(&[2], vec![0.0f64, 0.0]);
        let (loss, grad) = mse_loss(&p, &t).unwrap();
        assert_eq!(loss, 2.5);
        assert_eq!(grad.data(), &[1.0, 2.0]);

        let (zero, _) = mse_loss(&p, &p).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn mse_rejects_shape_mismatch() {
        let p = Tensor::<f64>::zeros(&[2]);
        let t = Tensor::<f64>::zeros(&[3]);
        assert!(mse_loss(&p, &t).is_err());
    }

    #[test]
    fn adam_unit_step() {
        // theta=1, g=1, lr=1e-3, first step: bias-corrected update is exactly lr.
        let mut theta = Tensor::from_vec(&[1], vec![1.0f64]);
        let grad = Tensor::from_vec(&[1], vec![1.0f64]);
        let mut state = AdamState::new(1e-3, &[&theta]);
        adam_step(
            &mut [&mut theta],
            &[grad],
            &["theta".into()],
            &mut state,
        )
        .unwrap();
        let expect = 1.0 - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((theta.data()[0] - expect).abs() < 1e-12, "{}", theta.data()[0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters_and_decays_moments() {
        let mut theta = Tensor::from_vec(&[2], vec![0.5f64, -0.25]);
        let before = theta.clone();
        let mut state = AdamState::new(1e-2, &[&theta]);
        let zero = Tensor::zeros(&[2]);
        adam_step(&mut [&mut theta], &[zero], &["t".into()], &mut state).unwrap();
        // Fresh moments stay zero, so the update is exactly zero.
        assert_eq!(theta.data(), before.data());

        let g = Tensor::from_vec(&[2], vec![1.0f64, 1.0]);
        adam_step(&mut [&mut theta], &[g], &["t".into()], &mut state).unwrap();
        let m_after_g = state.moments[0].0.data()[0];
        let zero = Tensor::zeros(&[2]);
        adam_step(&mut [&mut theta], &[zero], &["t".into()], &mut state).unwrap();
        let m_after_zero = state.moments[0].0.data()[0];
        assert!(m_after_zero.abs() < m_after_g.abs(), "first moment decays");
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut theta = Tensor::from_vec(&[1], vec![1.0f64]);
        let mut state = AdamState::new(1e-3, &[&theta]);
        let bad = Tensor::from_vec(&[1], vec![f64::NAN]);
        let err = adam_step(&mut [&mut theta], &[bad], &["theta".into()], &mut state);
        match err {
            Err(NnError::NonFinite { context }) => assert!(context.contains("theta")),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut theta = Tensor::from_vec(&[3], vec![0.1f32, -0.2, 0.3]);
            let mut state = AdamState::new(1e-3, &[&theta]);
            for step in 0..10 {
                let g = Tensor::from_vec(
                    &[3],
                    vec![0.01 * step as f32, -0.02, 0.5 - 0.1 * step as f32],
                );
                adam_step(&mut [&mut theta], &[g], &["t".into()], &mut state).unwrap();
            }
            theta.data().to_vec()
        };
        assert_eq!(run(), run());
    }
}
