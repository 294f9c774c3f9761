//! Flat parameter vectors, fixed-topology multilayer perceptrons with an
//! exact reverse pass, and first-order optimizers.
//!
//! Every network in the crate (policy, potential, learned embedding) stores
//! its weights in a [`ParamVector`]: one contiguous `f64` buffer plus a
//! [`Layout`] of named slices. Gradients carry the same layout, so optimizer
//! errors can name the slice that went non-finite.

mod mlp;
mod optim;
mod params;

pub use mlp::{mlp_backward, mlp_forward, Activation, MlpSpec, OutputHead, Trace};
pub use optim::{adam_step, sgd_step, sgd_step_in_place, sgd_step_per_param, AdamConfig, AdamState};
pub use params::{Gradient, Layout, ParamVector, Slice};

/// Central finite-difference gradient of `f` at `params`.
///
/// Kept in the library (rather than only in tests) so the acceptance suite
/// and downstream users can audit their own losses with it.
pub fn finite_difference<F>(params: &ParamVector, step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&ParamVector) -> f64,
{
    let mut probe = params.clone();
    (0..params.len())
        .map(|i| {
            let original = probe.values()[i];
            probe.values_mut()[i] = original + step;
            let up = f(&probe);
            probe.values_mut()[i] = original - step;
            let down = f(&probe);
            probe.values_mut()[i] = original;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Relative error used for gradient audits: `|a - b| / max(|a|, |b|, 1e-3)`.
///
/// The floor keeps coordinates whose true derivative is ~0 from amplifying
/// finite-difference rounding.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1e-3f64.max(a.abs()).max(b.abs())
}
