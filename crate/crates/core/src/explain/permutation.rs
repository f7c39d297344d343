use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_width, AttributionVector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::models::{oriented_score, Predictor};

/// Drop in the (higher-is-better) metric when one column is shuffled.
///
/// Loss metrics (`mse`, `mae`, `mape`) are negated first, so importance is
/// always "how much worse the model gets". Column `j` uses ChaCha stream `j`
/// of `seed`, which makes every column reproducible on its own.
pub fn permutation_importance(
    model: &dyn Predictor,
    data: &Dataset,
    metric: Metric,
    n_repeats: usize,
    seed: u64,
) -> Result<AttributionVector> {
    if data.n_samples() == 0 {
        return Err(Error::invalid("permutation importance on an empty dataset"));
    }
    if n_repeats == 0 {
        return Err(Error::invalid("n_repeats must be at least 1"));
    }
    metric.check_task(data.task)?;
    check_width(model, data.n_features())?;

    let baseline = oriented_score(model, data, metric)?;
    let n = data.n_samples();
    let mut shuffled = data.clone();
    let mut values = Vec::with_capacity(data.n_features());
    let mut dispersion = Vec::with_capacity(data.n_features());
    for j in 0..data.n_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let original = data.features.column(j).to_owned();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut drops = Vec::with_capacity(n_repeats);
        for _ in 0..n_repeats {
            perm.shuffle(&mut rng);
            for (i, &p) in perm.iter().enumerate() {
                shuffled.features[[i, j]] = original[p];
            }
            drops.push(baseline - oriented_score(model, &shuffled, metric)?);
        }
        shuffled.features.column_mut(j).assign(&original);
        let mean = drops.iter().sum::<f64>() / n_repeats as f64;
        let var = drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n_repeats as f64;
        values.push(mean);
        dispersion.push(var.sqrt());
    }
    AttributionVector::new(data.feature_names(), values, dispersion)
}

