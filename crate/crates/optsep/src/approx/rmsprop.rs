//! RMSprop with a running average of squared gradients.

use super::ApproxError;

/// Denominator guard in the RMSprop update.
pub const RMSPROP_EPSILON: f64 = 1e-5;

/// Per-parameter accumulator state.
#[derive(Debug, Clone, Default)]
pub struct RmsPropState {
    v: Vec<f64>,
}

impl RmsPropState {
    pub fn new(num_params: usize) -> Self {
        Self {
            v: vec![0.0; num_params],
        }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.v
    }
}

/// One RMSprop update in place:
/// `v <- smoothing * v + (1 - smoothing) * g^2`,
/// `p <- p - lr * g / (sqrt(v) + epsilon)`.
pub fn rmsprop_step(
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    smoothing: f64,
    state: &mut RmsPropState,
) -> Result<(), ApproxError> {
    if params.len() != grads.len() || params.len() != state.v.len() {
        return Err(ApproxError::ShapeMismatch(format!(
            "params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.v.len()
        )));
    }
    for i in 0..params.len() {
        let g = grads[i];
        state.v[i] = smoothing * state.v[i] + (1.0 - smoothing) * g * g;
        params[i] -= lr * g / (state.v[i].sqrt() + RMSPROP_EPSILON);
    }
    Ok(())
}
