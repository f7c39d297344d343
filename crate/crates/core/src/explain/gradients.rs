use ndarray::{Array1, ArrayView1};

use super::check_width;
use crate::error::{Error, Result};
use crate::models::Predictor;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedGradients {
    pub values: Vec<f64>,
    /// `sum(values) - (f(x) - f(baseline))`.
    pub completeness_gap: f64,
}

/// Path integral of the output gradient from `baseline` to `x`, midpoint rule.
pub fn integrated_gradients(
    model: &dyn Predictor,
    x: ArrayView1<f64>,
    baseline: ArrayView1<f64>,
    n_steps: usize,
) -> Result<IntegratedGradients> {
    check_width(model, x.len())?;
    if baseline.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: baseline.len(),
        });
    }
    if n_steps < 2 {
        return Err(Error::invalid("n_steps must be at least 2"));
    }
    let diff = &x - &baseline;
    let mut total = Array1::<f64>::zeros(x.len());
    for k in 0..n_steps {
        let alpha = (k as f64 + 0.5) / n_steps as f64;
        let point = &baseline + &(&diff * alpha);
        let g = model
            .gradient(point.view())
            .ok_or_else(|| Error::IncompatibleTask("integrated gradients need a differentiable model".into()))?;
        total += &g;
    }
    let values: Vec<f64> = (total / n_steps as f64 * &diff).to_vec();
    let fx = model.output_row(x);
    let fb = model.output_row(baseline);
    let gap = values.iter().sum::<f64>() - (fx - fb);
    Ok(IntegratedGradients {
        values,
        completeness_gap: gap,
    })
}
