//! Scott-rule kernel density estimates, multi-way Jensen–Shannon divergence
//! and Pearson/Spearman correlation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::CurvatureSeries;
use crate::metrics::Outcome;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("density integrates to {integral} on the grid; refine the grid")]
    GridTooCoarse { integral: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("need at least two densities, got {0}")]
    TooFewDensities(usize),
    #[error("category {category} has {count} rollouts; at least 2 are needed")]
    InsufficientCategory { category: usize, count: usize },
    #[error("{0} series but {1} outcomes")]
    LengthMismatch(usize, usize),
}

/// Sample standard deviation (n − 1 denominator).
fn sample_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `h = σ̂ · n^{−1/5}` (the one-dimensional power-law form).
pub fn scott_bandwidth(samples: &[f64]) -> Result<f64, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::DegenerateSample(format!("{} samples", samples.len())));
    }
    let s = sample_std(samples);
    if !(s > 0.0) || !s.is_finite() {
        return Err(StatsError::DegenerateSample("zero variance".into()));
    }
    Ok(s * (samples.len() as f64).powf(-0.2))
}

/// Gaussian kernel density estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Kde1d {
    samples: Vec<f64>,
    bandwidth: f64,
}

impl Kde1d {
    pub fn new(samples: Vec<f64>, bandwidth: f64) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::DegenerateSample("no samples".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(StatsError::DegenerateSample(format!("bandwidth {bandwidth}")));
        }
        Ok(Self { samples, bandwidth })
    }

    pub fn scott(samples: Vec<f64>) -> Result<Self, StatsError> {
        let h = scott_bandwidth(&samples)?;
        Self::new(samples, h)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        self.samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>() * norm
    }
}

/// Quadrature nodes with trapezoid weights: one uniform interval, or several
/// disjoint uniform patches (zero weight in the gaps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub const DEFAULT_POINTS: usize = 2048;

    pub fn uniform(lo: f64, hi: f64, n_points: usize) -> Result<Self, StatsError> {
        Self::patches(&[(lo, hi)], n_points)
    }

    /// Trapezoid rules on disjoint, increasing intervals sharing `n_points`
    /// in proportion to length, each with at least 16 nodes.
    pub fn patches(intervals: &[(f64, f64)], n_points: usize) -> Result<Self, StatsError> {
        if intervals.is_empty() || n_points < 16 {
            return Err(StatsError::InvalidGrid("need an interval and at least 16 points".into()));
        }
        for (k, &(a, b)) in intervals.iter().enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() || (k > 0 && a <= intervals[k - 1].1) {
                return Err(StatsError::InvalidGrid(format!("interval {k} = [{a}, {b}] is empty or overlaps")));
            }
        }
        let total: f64 = intervals.iter().map(|(a, b)| b - a).sum();
        let (mut points, mut weights) = (Vec::new(), Vec::new());
        for &(a, b) in intervals {
            let n = ((n_points as f64 * (b - a) / total).round() as usize).max(16);
            let dx = (b - a) / (n - 1) as f64;
            for i in 0..n {
                points.push(if i == n - 1 { b } else { a + dx * i as f64 });
                weights.push(if i == 0 || i == n - 1 { dx / 2.0 } else { dx });
            }
        }
        let n_points = points.len();
        Ok(Self { lo: intervals[0].0, hi: intervals[intervals.len() - 1].1, n_points, points, weights })
    }

    /// Pooled samples `± pad·h`; a single uniform interval when the padded
    /// sample neighbourhoods overlap, otherwise one patch per connected piece.
    pub fn covering(samples: &[f64], h: f64, pad: f64, n_points: usize) -> Result<Self, StatsError> {
        if samples.is_empty() || !(h > 0.0) {
            return Err(StatsError::InvalidGrid("no samples or non-positive bandwidth".into()));
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let r = pad * h;
        let mut pieces: Vec<(f64, f64)> = vec![(s[0] - r, s[0] + r)];
        for &x in &s[1..] {
            let last = pieces.last_mut().expect("nonempty");
            if x - r <= last.1 {
                last.1 = x + r;
            } else {
                pieces.push((x - r, x + r));
            }
        }
        Self::patches(&pieces, n_points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Differential entropy in nats, with `0·ln 0 = 0`.
fn entropy(grid: &Grid, p: &[f64]) -> f64 {
    let integrand: Vec<f64> = p.iter().map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 }).collect();
    grid.integrate(&integrand)
}

/// `H(mean) − mean(H)` of densities renormalized on `grid`; lies in
/// `[0, ln m]` up to quadrature error.
pub fn js_divergence(densities: &[Kde1d], grid: &Grid) -> Result<f64, StatsError> {
    if densities.len() < 2 {
        return Err(StatsError::TooFewDensities(densities.len()));
    }
    let mut values = Vec::with_capacity(densities.len());
    for d in densities {
        let mut v: Vec<f64> = grid.points().iter().map(|&x| d.density(x)).collect();
        let integral = grid.integrate(&v);
        if (integral - 1.0).abs() > 1e-2 {
            return Err(StatsError::GridTooCoarse { integral });
        }
        v.iter_mut().for_each(|x| *x /= integral);
        values.push(v);
    }
    let m = values.len() as f64;
    let mix: Vec<f64> = (0..grid.points().len()).map(|i| values.iter().map(|v| v[i]).sum::<f64>() / m).collect();
    let mean_h = values.iter().map(|v| entropy(grid, v)).sum::<f64>() / m;
    Ok(entropy(grid, &mix) - mean_h)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(StatsError::DegenerateSample(format!("lengths {} and {}", x.len(), y.len())));
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(StatsError::DegenerateSample("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; ties receive the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesStatistic {
    Mean,
    Max,
}

impl SeriesStatistic {
    /// `None` for an empty series.
    pub fn of(self, series: &CurvatureSeries) -> Option<f64> {
        let k = series.points.iter().map(|p| p.kretschmann);
        match self {
            _ if series.points.is_empty() => None,
            SeriesStatistic::Mean => Some(k.sum::<f64>() / series.points.len() as f64),
            SeriesStatistic::Max => Some(k.fold(f64::NEG_INFINITY, f64::max)),
        }
    }
}

/// Three-way JS divergence between the per-rollout curvature statistic
/// conditioned on outcomes I, II and III (full failures are excluded).
pub fn outcome_conditioned_js(
    series: &[CurvatureSeries],
    outcomes: &[Outcome],
    statistic: SeriesStatistic,
) -> Result<f64, StatsError> {
    if series.len() != outcomes.len() {
        return Err(StatsError::LengthMismatch(series.len(), outcomes.len()));
    }
    let cats = [Outcome::FullSuccess, Outcome::SingleGripper, Outcome::BoxDrop];
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for (s, o) in series.iter().zip(outcomes) {
        if let (Some(k), Some(c)) = (statistic.of(s), cats.iter().position(|c| c == o)) {
            groups[c].push(k);
        }
    }
    for (c, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(StatsError::InsufficientCategory { category: c + 1, count: g.len() });
        }
    }
    let kdes = groups.into_iter().map(Kde1d::scott).collect::<Result<Vec<_>, _>>()?;
    let hmax = kdes.iter().map(Kde1d::bandwidth).fold(0.0, f64::max);
    let pooled: Vec<f64> = kdes.iter().flat_map(|k| k.samples().iter().copied()).collect();
    let grid = Grid::covering(&pooled, hmax, 3.0, Grid::DEFAULT_POINTS)?;
    js_divergence(&kdes, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::CurvaturePoint;

    #[test]
    fn scott_rule() {
        // σ̂ = 2 exactly: alternating ±a around zero with a chosen accordingly
        let n = 100;
        let a = 2.0 * ((n - 1) as f64 / n as f64).sqrt();
        let x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { a } else { -a }).collect();
        assert!((scott_bandwidth(&x).unwrap() - 0.79621).abs() < 1e-5);
        let y: Vec<f64> = x.iter().map(|v| 3.5 * v).collect();
        assert!((scott_bandwidth(&y).unwrap() - 3.5 * scott_bandwidth(&x).unwrap()).abs() < 1e-12);
        assert!(scott_bandwidth(&[1.0; 10]).is_err() && scott_bandwidth(&[1.0]).is_err());
    }

    #[test]
    fn kde_is_a_density() {
        let k = Kde1d::scott(vec![0.1, 0.5, -0.3, 2.0, 1.1]).unwrap();
        let g = Grid::covering(k.samples(), k.bandwidth(), 6.0, 2048).unwrap();
        let v: Vec<f64> = g.points().iter().map(|&x| k.density(x)).collect();
        assert!(v.iter().all(|&d| d >= 0.0));
        assert!((g.integrate(&v) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn js_extremes() {
        let a = Kde1d::scott(vec![0.0, 1.0, 3.0, 3.5]).unwrap();
        let g = Grid::covering(a.samples(), a.bandwidth(), 3.0, 2048).unwrap();
        assert!(js_divergence(&[a.clone(), a.clone(), a.clone()], &g).unwrap().abs() < 1e-6);
        let d: Vec<Kde1d> = [0.0, 1e6, 2e6].iter().map(|&c| Kde1d::new(vec![c], 1.0).unwrap()).collect();
        let g = Grid::covering(&[0.0, 1e6, 2e6], 1.0, 3.0, 2048).unwrap();
        assert!((js_divergence(&d, &g).unwrap() - 3f64.ln()).abs() < 1e-3);
        assert!((js_divergence(&d[..2], &g).unwrap() - 2f64.ln()).abs() < 1e-3);
        // permutation symmetry is exact
        let b = Kde1d::scott(vec![0.5, 2.0, 2.2]).unwrap();
        let g = Grid::covering(&[0.0, 3.5, 0.5, 2.2], 1.0, 3.0, 2048).unwrap();
        assert_eq!(js_divergence(&[a.clone(), b.clone()], &g).unwrap(), js_divergence(&[b, a], &g).unwrap());
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let d = Kde1d::new(vec![0.0], 1e-3).unwrap();
        let g = Grid::uniform(-1.0, 1.0, 16).unwrap();
        assert!(matches!(js_divergence(&[d.clone(), d], &g), Err(StatsError::GridTooCoarse { .. })));
    }

    #[test]
    fn correlations() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let ny: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &ny).unwrap() + 1.0).abs() < 1e-15);
        // {(1,2),(2,1),(3,4),(4,3),(5,5)}: Sxy = 8, Sxx = Syy = 10
        assert!((pearson(&x, &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap() - 0.8).abs() < 1e-12);
        let cubic: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
        assert!((spearman(&x, &cubic).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&x, &ny).unwrap() + 1.0).abs() < 1e-15);
        // one tie pair: ranks of y = [1, 2.5, 2.5, 4, 5]
        let ty = [10.0, 20.0, 20.0, 30.0, 40.0];
        assert_eq!(average_ranks(&ty), vec![1.0, 2.5, 2.5, 4.0, 5.0]);
        let want = pearson(&x, &[1.0, 2.5, 2.5, 4.0, 5.0]).unwrap();
        assert!((spearman(&x, &ty).unwrap() - want).abs() < 1e-12);
        assert!(pearson(&x, &[1.0; 5]).is_err() && pearson(&x[..1], &x[..1]).is_err());
        let ax: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let cy: Vec<f64> = [2.0, 1.0, 4.0, 3.0, 5.0].iter().map(|v| 0.5 * v + 7.0).collect();
        assert!((pearson(&ax, &cy).unwrap() - 0.8).abs() < 1e-12);
    }

    fn series(ks: &[f64]) -> CurvatureSeries {
        CurvatureSeries {
            points: ks
                .iter()
                .enumerate()
                .map(|(t, &k)| CurvaturePoint { t, kretschmann: k, residual: 0.0, cond_j: 1.0 })
                .collect(),
            gaps: vec![],
        }
    }

    #[test]
    fn conditioned_js() {
        let set = [series(&[1.0, 2.0]), series(&[3.0, 3.5]), series(&[0.5, 4.0])];
        let mut all = Vec::new();
        let mut outs = Vec::new();
        for o in [Outcome::FullSuccess, Outcome::SingleGripper, Outcome::BoxDrop] {
            all.extend(set.iter().cloned());
            outs.extend([o; 3]);
        }
        all.push(series(&[100.0]));
        outs.push(Outcome::FullFailure);
        for stat in [SeriesStatistic::Mean, SeriesStatistic::Max] {
            assert!(outcome_conditioned_js(&all, &outs, stat).unwrap().abs() < 1e-6);
        }
        let spread = |c: f64| vec![series(&[c]), series(&[c + 1.0])];
        let all: Vec<CurvatureSeries> = [0.0, 1e6, 2e6].iter().flat_map(|&c| spread(c)).collect();
        let outs = [
            Outcome::FullSuccess,
            Outcome::FullSuccess,
            Outcome::SingleGripper,
            Outcome::SingleGripper,
            Outcome::BoxDrop,
            Outcome::BoxDrop,
        ];
        assert!((outcome_conditioned_js(&all, &outs, SeriesStatistic::Mean).unwrap() - 3f64.ln()).abs() < 1e-3);
        assert!(matches!(
            outcome_conditioned_js(&all[..5], &outs[..5], SeriesStatistic::Mean),
            Err(StatsError::InsufficientCategory { category: 3, count: 1 })
        ));
    }
}
