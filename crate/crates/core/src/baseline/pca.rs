use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PcaTarget {
    Components { count: usize },
    /// Smallest count whose explained variance reaches `fraction`, at most `max`.
    Variance { fraction: f64, max: usize },
}

impl Default for PcaTarget {
    fn default() -> Self {
        PcaTarget::Variance { fraction: 0.95, max: 256 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Row-major, one orthonormal component per row.
    pub components: Vec<f64>,
    pub dim: usize,
    /// Per kept component, in non-increasing order.
    pub explained: Vec<f64>,
}

impl PcaModel {
    pub fn count(&self) -> usize {
        self.explained.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.dim..(i + 1) * self.dim]
    }

    pub fn project(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!("vector of {} values, model expects {}", x.len(), self.dim)));
        }
        let centred: Vec<f64> = x.iter().zip(&self.mean).map(|(&v, m)| v as f64 - m).collect();
        Ok((0..self.count()).map(|i| self.component(i).iter().zip(&centred).map(|(a, b)| a * b).sum()).collect())
    }

    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (i, &zi) in z.iter().enumerate() {
            for (xv, c) in x.iter_mut().zip(self.component(i)) {
                *xv += zi * c;
            }
        }
        x
    }
}

/// Principal components of `rows` (each of length `dim`) from the SVD of
/// the centred data matrix. Each component's first nonzero entry is made
/// positive; directions beyond the data's rank are dropped.
pub fn pca_fit(rows: &[Vec<f32>], target: PcaTarget) -> Result<PcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InsufficientPool { requested: 2, available: n });
    }
    let dim = rows[0].len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("PCA rows must share one non-zero length".into()));
    }
    let mut mean = vec![0.0f64; dim];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, dim, |i, j| rows[i][j] as f64 - mean[j]);
    let svd = x.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let sv = &svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let variances: Vec<f64> = order.iter().map(|&i| sv[i] * sv[i]).collect();
    let total: f64 = variances.iter().sum();
    let rank_tol = sv.iter().fold(0.0f64, |m, &s| m.max(s)) * (n.max(dim) as f64) * f64::EPSILON;
    let rank = order.iter().take_while(|&&i| sv[i] > rank_tol).count();

    let wanted = match target {
        PcaTarget::Components { count } => {
            if count > dim {
                return Err(Error::Config(format!("{count} components requested from {dim}-dimensional data")));
            }
            count
        }
        PcaTarget::Variance { fraction, max } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::Config(format!("variance fraction {fraction} outside (0, 1]")));
            }
            let mut acc = 0.0;
            let mut k = 0;
            while k < rank && acc < fraction * total {
                acc += variances[k];
                k += 1;
            }
            k.min(max)
        }
    };
    let keep = wanted.min(rank);

    let mut components = Vec::with_capacity(keep * dim);
    for &i in &order[..keep] {
        let row: Vec<f64> = vt.row(i).iter().copied().collect();
        let sign = row.iter().find(|v| **v != 0.0).map_or(1.0, |v| v.signum());
        components.extend(row.into_iter().map(|v| v * sign));
    }
    let explained = variances[..keep].iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
    Ok(PcaModel { mean, components, dim, explained })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f32>> {
        use rand::Rng;
        let mut rng = crate::rng::SeedStream::new(seed).rng();
        (0..n).map(|_| (0..d).map(|_| rng.random::<f32>()).collect()).collect()
    }

    #[test]
    fn points_on_a_line_need_one_component() {
        let rows: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32, 2.0 * i as f32 + 1.0]).collect();
        let m = pca_fit(&rows, PcaTarget::Variance { fraction: 0.999, max: 2 }).unwrap();
        assert_eq!(m.count(), 1);
        assert!((m.explained[0] - 1.0).abs() < 1e-12);
        let c = m.component(0);
        assert!(c[0] > 0.0 && (c[1] / c[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn mean_projects_to_zero() {
        let rows = random_rows(20, 6, 1);
        let m = pca_fit(&rows, PcaTarget::Components { count: 4 }).unwrap();
        let mean: Vec<f32> = m.mean.iter().map(|&v| v as f32).collect();
        assert!(m.project(&mean).unwrap().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn orthonormal_non_increasing_and_lossless_at_full_rank() {
        for (n, d) in [(30, 8), (5, 12)] {
            let rows = random_rows(n, d, 2);
            let m = pca_fit(&rows, PcaTarget::Components { count: d }).unwrap();
            assert_eq!(m.count(), d.min(n - 1));
            for i in 0..m.count() {
                for j in 0..m.count() {
                    let dot: f64 = m.component(i).iter().zip(m.component(j)).map(|(a, b)| a * b).sum();
                    assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
                }
                assert!(m.component(i).iter().find(|v| **v != 0.0).unwrap() > &0.0);
            }
            assert!(m.explained.windows(2).all(|w| w[0] >= w[1]));
            assert!(m.explained.iter().sum::<f64>() <= 1.0 + 1e-12);
            for r in &rows {
                let back = m.reconstruct(&m.project(r).unwrap());
                assert!(back.iter().zip(r).all(|(a, &b)| (a - b as f64).abs() < 1e-6));
            }
        }
    }

    #[test]
    fn zero_variance_yields_no_components() {
        let rows = vec![vec![1.0f32, 2.0]; 5];
        let m = pca_fit(&rows, PcaTarget::Components { count: 2 }).unwrap();
        assert_eq!(m.count(), 0);
        assert!(pca_fit(&rows[..1], PcaTarget::default()).is_err());
    }
}
