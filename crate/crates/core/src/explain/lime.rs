use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::curves::quantile;
use super::check_width;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Predictor;

/// Which way a rule pushes the explained output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Towards class 1, or a larger regression output.
    Positive,
    /// Towards class 0, or a smaller regression output.
    Negative,
}

/// An interval condition `lower < value <= upper` on one feature, with its
/// surrogate weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub feature: usize,
    pub lower: f64,
    pub upper: f64,
    pub weight: f64,
    pub direction: Direction,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub sample_id: usize,
    /// Surrogate coefficient per feature; zero for features without a bin change.
    pub attribution: Vec<f64>,
    /// Strongest rules first.
    pub rules: Vec<Rule>,
    /// Class probabilities, or the single regression output.
    pub prediction: Vec<f64>,
    pub intercept: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_perturbations: usize,
    pub n_rules: usize,
    /// `None` uses `0.75 * sqrt(n_features)`.
    pub kernel_width: Option<f64>,
    pub ridge_alpha: f64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_perturbations: 5000,
            n_rules: 10,
            kernel_width: None,
            ridge_alpha: 1.0,
        }
    }
}

/// Rule text with two decimals, e.g. `-0.50 < ST_Slope <= 0.50`.
pub fn render_rule(name: &str, lower: f64, upper: f64) -> String {
    match (lower.is_finite(), upper.is_finite()) {
        (false, false) => format!("{name} is any value"),
        (false, true) => format!("{name} <= {upper:.2}"),
        (true, false) => format!("{name} > {lower:.2}"),
        (true, true) => format!("{lower:.2} < {name} <= {upper:.2}"),
    }
}

struct FeatureBins {
    /// Sorted distinct quartile edges; bin `b` is `(edges[b-1], edges[b]]`.
    edges: Vec<f64>,
    /// Training values per bin.
    members: Vec<Vec<f64>>,
    /// Fewer than two populated bins: never perturbed, attribution zero.
    frozen: bool,
}

impl FeatureBins {
    fn bin_of(&self, v: f64) -> usize {
        self.edges.partition_point(|&e| e < v)
    }

    fn interval(&self, b: usize) -> (f64, f64) {
        let lower = if b == 0 { f64::NEG_INFINITY } else { self.edges[b - 1] };
        let upper = self.edges.get(b).copied().unwrap_or(f64::INFINITY);
        (lower, upper)
    }
}

/// Quartile discretizer fitted on training data, reused across samples.
pub struct LimeExplainer {
    names: Vec<String>,
    bins: Vec<FeatureBins>,
    config: LimeConfig,
}

impl LimeExplainer {
    pub fn fit(train: &Dataset, config: LimeConfig) -> Result<Self> {
        if train.n_samples() == 0 {
            return Err(Error::invalid("LIME needs training data"));
        }
        if config.n_perturbations < 2 {
            return Err(Error::invalid("LIME needs at least 2 perturbations"));
        }
        let bins = train
            .features
            .columns()
            .into_iter()
            .map(|col| {
                let mut sorted = col.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mut edges: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|&p| quantile(&sorted, p)).collect();
                edges.dedup();
                let mut fb = FeatureBins {
                    members: vec![Vec::new(); edges.len() + 1],
                    edges,
                    frozen: false,
                };
                for &v in &sorted {
                    let b = fb.bin_of(v);
                    fb.members[b].push(v);
                }
                fb.frozen = fb.members.iter().filter(|m| !m.is_empty()).count() < 2;
                fb
            })
            .collect();
        Ok(LimeExplainer {
            names: train.feature_names(),
            bins,
            config,
        })
    }

    /// Explains one sample. The surrogate target is the class-1 probability
    /// for classifiers and the output itself for regression.
    pub fn explain(&self, model: &dyn Predictor, x: ArrayView1<f64>, sample_id: usize, seed: u64) -> Result<LocalExplanation> {
        let d = self.bins.len();
        check_width(model, d)?;
        if x.len() != d {
            return Err(Error::Dimension { expected: d, got: x.len() });
        }
        let n = self.config.n_perturbations;
        let active: Vec<usize> = (0..d).filter(|&j| !self.bins[j].frozen).collect();
        let x_bins: Vec<usize> = (0..d).map(|j| self.bins[j].bin_of(x[j])).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Array2::zeros((n, d));
        let mut z = Array2::<f64>::ones((n, active.len()));
        rows.row_mut(0).assign(&x);
        for i in 1..n {
            let mut r = rows.row_mut(i);
            r.assign(&x);
            for (a, &j) in active.iter().enumerate() {
                let fb = &self.bins[j];
                let total: usize = fb.members.iter().map(Vec::len).sum();
                let mut u = rng.gen_range(0..total);
                let mut b = 0;
                while u >= fb.members[b].len() {
                    u -= fb.members[b].len();
                    b += 1;
                }
                r[j] = fb.members[b][rng.gen_range(0..fb.members[b].len())];
                if b != x_bins[j] {
                    z[[i, a]] = 0.0;
                }
            }
        }

        let y = model.output(rows.view());
        let width = self.config.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
        let w: Vec<f64> = z
            .rows()
            .into_iter()
            .map(|r| {
                let dist2 = r.iter().filter(|&&v| v == 0.0).count() as f64;
                (-dist2 / (width * width)).exp().sqrt()
            })
            .collect();

        let (coef, intercept) = weighted_ridge(&z, y.as_slice().expect("contiguous"), &w, self.config.ridge_alpha)?;
        let mut attribution = vec![0.0; d];
        for (a, &j) in active.iter().enumerate() {
            attribution[j] = coef[a];
        }

        let mut order: Vec<usize> = active.clone();
        order.sort_by(|&a, &b| attribution[b].abs().total_cmp(&attribution[a].abs()).then(a.cmp(&b)));
        let rules = order
            .into_iter()
            .take(self.config.n_rules)
            .map(|j| {
                let (lower, upper) = self.bins[j].interval(x_bins[j]);
                Rule {
                    feature: j,
                    lower,
                    upper,
                    weight: attribution[j],
                    direction: if attribution[j] >= 0.0 { Direction::Positive } else { Direction::Negative },
                    text: render_rule(&self.names[j], lower, upper),
                }
            })
            .collect();

        let x2 = x.insert_axis(ndarray::Axis(0));
        let prediction = match model.task() {
            crate::data::TaskKind::Classification => {
                let p1 = model.output(x2)[0];
                vec![1.0 - p1, p1]
            }
            crate::data::TaskKind::Regression => vec![model.output(x2)[0]],
        };
        Ok(LocalExplanation {
            sample_id,
            attribution,
            rules,
            prediction,
            intercept,
        })
    }
}

/// One-shot convenience over [`LimeExplainer`].
pub fn lime_explain(
    model: &dyn Predictor,
    x: ArrayView1<f64>,
    train: &Dataset,
    config: LimeConfig,
    seed: u64,
) -> Result<LocalExplanation> {
    LimeExplainer::fit(train, config)?.explain(model, x, 0, seed)
}

/// Minimizes `sum w_i (y_i - b - z_i.beta)^2 + alpha |beta|^2` with an
/// unpenalized intercept.
fn weighted_ridge(z: &Array2<f64>, y: &[f64], w: &[f64], alpha: f64) -> Result<(Vec<f64>, f64)> {
    let p = z.ncols();
    let sw: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    if p == 0 {
        return Ok((Vec::new(), ybar));
    }
    let zbar: Vec<f64> = (0..p)
        .map(|k| z.column(k).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw)
        .collect();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let mut zc = vec![0.0; p];
    for (i, row) in z.rows().into_iter().enumerate() {
        for k in 0..p {
            zc[k] = row[k] - zbar[k];
        }
        let yc = y[i] - ybar;
        for k in 0..p {
            b[k] += w[i] * zc[k] * yc;
            for l in k..p {
                a[(k, l)] += w[i] * zc[k] * zc[l];
            }
        }
    }
    for k in 0..p {
        a[(k, k)] += alpha;
        for l in 0..k {
            a[(k, l)] = a[(l, k)];
        }
    }
    let beta = a
        .cholesky()
        .ok_or_else(|| Error::invalid("LIME ridge system is not positive definite"))?
        .solve(&b);
    let intercept = ybar - beta.iter().zip(&zbar).map(|(c, m)| c * m).sum::<f64>();
    Ok((beta.iter().copied().collect(), intercept))
}
