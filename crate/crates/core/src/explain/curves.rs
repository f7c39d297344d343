use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::check_width;
use crate::error::{Error, Result};
use crate::models::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    /// One value per grid point.
    Mean(Vec<f64>),
    /// One curve per sample, each with one value per grid point.
    PerSample(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub feature: usize,
    pub grid: Vec<f64>,
    pub response: Response,
}

/// Linear-interpolation quantile of sorted data (`p` in [0, 1]).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_column(data: ArrayView2<f64>, feature: usize) -> Result<Vec<f64>> {
    if feature >= data.ncols() {
        return Err(Error::invalid(format!("feature index {feature} out of range")));
    }
    if data.nrows() == 0 {
        return Err(Error::invalid("curve over an empty dataset"));
    }
    let mut v = data.column(feature).to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Strictly increasing quantiles at `k / (points - 1)`.
fn quantile_grid(sorted: &[f64], points: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..points)
        .map(|k| quantile(sorted, k as f64 / (points - 1) as f64))
        .collect();
    g.dedup();
    g
}

/// Partial dependence and individual conditional expectation curves.
///
/// The grid holds the feature's quantiles at equally spaced levels with
/// duplicates removed. The PDP is the pointwise mean of the ICE curves.
pub fn pdp_ice(model: &dyn Predictor, data: ArrayView2<f64>, feature: usize, grid_size: usize) -> Result<(Curve, Curve)> {
    check_width(model, data.ncols())?;
    if grid_size < 2 {
        return Err(Error::invalid("grid_size must be at least 2"));
    }
    let sorted = sorted_column(data, feature)?;
    let grid = quantile_grid(&sorted, grid_size);
    if grid.len() < 2 {
        return Err(Error::invalid(format!("feature {feature} is constant; no curve to draw")));
    }
    let n = data.nrows();
    let g = grid.len();
    let mut rows = Array2::zeros((n * g, data.ncols()));
    for i in 0..n {
        for (k, &v) in grid.iter().enumerate() {
            let mut r = rows.row_mut(i * g + k);
            r.assign(&data.row(i));
            r[feature] = v;
        }
    }
    let y = model.output(rows.view());
    let ice: Vec<Vec<f64>> = (0..n).map(|i| y.slice(ndarray::s![i * g..(i + 1) * g]).to_vec()).collect();
    let pdp: Vec<f64> = (0..g).map(|k| ice.iter().map(|c| c[k]).sum::<f64>() / n as f64).collect();
    Ok((
        Curve {
            feature,
            grid: grid.clone(),
            response: Response::Mean(pdp),
        },
        Curve {
            feature,
            grid,
            response: Response::PerSample(ice),
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ale {
    /// Grid holds the bin edges; the response is centred so that its
    /// sample-weighted mean over bins is zero.
    pub curve: Curve,
    pub bin_counts: Vec<usize>,
}

/// First-order accumulated local effects over quantile bins.
///
/// Bin `b` is `(edge[b], edge[b+1]]`, the first bin also holding its left
/// edge. Empty bins are merged into their left neighbour.
pub fn ale(model: &dyn Predictor, data: ArrayView2<f64>, feature: usize, n_bins: usize) -> Result<Ale> {
    check_width(model, data.ncols())?;
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be at least 1"));
    }
    let sorted = sorted_column(data, feature)?;
    let mut edges = quantile_grid(&sorted, n_bins + 1);
    if edges.len() < 2 {
        return Err(Error::invalid(format!("feature {feature} is constant; no curve to draw")));
    }
    let bin_of = |edges: &[f64], v: f64| edges[1..edges.len() - 1].partition_point(|&e| e < v);
    loop {
        let mut counts = vec![0usize; edges.len() - 1];
        for &v in &sorted {
            counts[bin_of(&edges, v)] += 1;
        }
        match counts.iter().position(|&c| c == 0) {
            // bin 0 holds the minimum, so an empty bin always has a left neighbour
            Some(b) => {
                edges.remove(b);
            }
            None => break,
        }
    }
    let k = edges.len() - 1;
    let n = data.nrows();
    let bins: Vec<usize> = data.column(feature).iter().map(|&v| bin_of(&edges, v)).collect();
    let mut rows = Array2::zeros((2 * n, data.ncols()));
    for i in 0..n {
        let b = bins[i];
        for (side, edge) in [edges[b], edges[b + 1]].into_iter().enumerate() {
            let mut r = rows.row_mut(2 * i + side);
            r.assign(&data.row(i));
            r[feature] = edge;
        }
    }
    let y = model.output(rows.view());
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for i in 0..n {
        sums[bins[i]] += y[2 * i + 1] - y[2 * i];
        counts[bins[i]] += 1;
    }
    let mut acc = vec![0.0; k + 1];
    for b in 0..k {
        acc[b + 1] = acc[b] + sums[b] / counts[b] as f64;
    }
    let centre = (0..k)
        .map(|b| counts[b] as f64 * (acc[b] + acc[b + 1]) / 2.0)
        .sum::<f64>()
        / n as f64;
    let response = acc.iter().map(|a| a - centre).collect();
    Ok(Ale {
        curve: Curve {
            feature,
            grid: edges,
            response: Response::Mean(response),
        },
        bin_counts: counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn empty_bins_merge_left() {
        // Heavy ties put several quantile edges on the same value.
        let data = ndarray::Array2::from_shape_vec((6, 1), vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let model = crate::explain::FnModel::regression(1, |x| 3.0 * x[0]);
        let a = ale(&model, data.view(), 0, 4).unwrap();
        assert_eq!(a.bin_counts.iter().sum::<usize>(), 6);
        assert!(a.bin_counts.iter().all(|&c| c > 0));
    }
}
