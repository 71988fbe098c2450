//! Haar-random subspaces of `R^n` and orthogonal projection onto them.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{SubspaceBasis, Validate};
use crate::rng::{chunk_rng, derive_seed, Purpose, CHUNK_SIZE};
use crate::samplers::{SampleBatch, SampleSource};

/// Uniformly distributed `l`-dimensional subspace of `R^n`.
///
/// Rows are the Gram-Schmidt orthonormalization (applied twice) of an `l × n`
/// gaussian matrix, so each row has positive inner product with its raw row.
pub fn random_subspace(n: usize, l: usize, seed: u64) -> Result<SubspaceBasis> {
    if l == 0 || l > n {
        return Err(Error::Dimension(format!("need 1 <= l <= n, got l={l} n={n}")));
    }
    let mut rng = chunk_rng(derive_seed(seed, Purpose::Basis, 0), 0);
    let raw: Vec<Vec<f64>> = (0..l)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(l);
    for a in &raw {
        let mut v = a.clone();
        for _pass in 0..2 {
            for q in &rows {
                let d = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
            }
        }
        let len = dot(&v, &v).sqrt();
        if !(len > 1e-8 * dot(a, a).sqrt()) {
            return Err(Error::Dimension("gaussian rows are numerically dependent".into()));
        }
        v.iter_mut().for_each(|x| *x /= len);
        rows.push(v);
    }
    debug_assert!(rows.iter().zip(&raw).all(|(q, a)| dot(q, a) > 0.0));
    SubspaceBasis {
        ambient_dim: n,
        subspace_dim: l,
        rows,
    }
    .validate()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coordinates of each row of `data` (row-major, width `basis.ambient_dim`)
/// in the basis.
pub fn project_rows(basis: &SubspaceBasis, data: &[f64]) -> Vec<f64> {
    let n = basis.ambient_dim;
    let l = basis.subspace_dim;
    let mut out = vec![0.0; data.len() / n * l];
    for (x, y) in data.chunks_exact(n).zip(out.chunks_exact_mut(l)) {
        for (k, row) in basis.rows.iter().enumerate() {
            y[k] = dot(row, x);
        }
    }
    out
}

pub fn project(batch: &SampleBatch, basis: &SubspaceBasis) -> Result<SampleBatch> {
    if batch.dimension != basis.ambient_dim {
        return Err(Error::Dimension(format!(
            "batch dimension {} != basis ambient dimension {}",
            batch.dimension, basis.ambient_dim
        )));
    }
    let n = basis.ambient_dim;
    let data: Vec<f64> = batch
        .data
        .par_chunks(CHUNK_SIZE * n)
        .map(|chunk| project_rows(basis, chunk))
        .collect::<Vec<_>>()
        .concat();
    Ok(SampleBatch {
        dimension: basis.subspace_dim,
        count: batch.count,
        data,
        seed: batch.seed,
        source: SampleSource::Projected {
            base: Box::new(batch.source.clone()),
            ambient_dim: n,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BodyKind, BodySpec, GaussianSpec};
    use crate::samplers::{sample_body, sample_gaussian};

    #[test]
    fn full_dimension_spans_space() {
        let b = random_subspace(5, 5, 1).unwrap();
        assert!(b.gram_deviation() < 1e-10);
        // orthonormal square matrix: columns are orthonormal too
        for i in 0..5 {
            for j in 0..5 {
                let s: f64 = (0..5).map(|k| b.rows[k][i] * b.rows[k][j]).sum();
                let t = if i == j { 1.0 } else { 0.0 };
                assert!((s - t).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn direction_on_sphere_has_zero_mean() {
        let mut mean = [0.0f64; 3];
        let draws = 100_000;
        for seed in 0..draws {
            let b = random_subspace(3, 1, seed).unwrap();
            mean.iter_mut().zip(&b.rows[0]).for_each(|(m, v)| *m += v);
        }
        for m in mean {
            assert!((m / draws as f64).abs() < 0.01);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(random_subspace(4, 2, 9).unwrap(), random_subspace(4, 2, 9).unwrap());
        assert_ne!(random_subspace(4, 2, 9).unwrap(), random_subspace(4, 2, 10).unwrap());
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(random_subspace(3, 4, 0), Err(Error::Dimension(_))));
        assert!(random_subspace(3, 0, 0).is_err());
    }

    #[test]
    fn axis_aligned_projection() {
        let x = sample_body(&BodySpec::new(BodyKind::Cube, 6).unwrap(), 100, 1).unwrap();
        let b = SubspaceBasis::coordinate(6, 2).unwrap();
        let p = project(&x, &b).unwrap();
        for i in 0..100 {
            assert_eq!(p.row(i), &x.row(i)[..2]);
        }
    }

    #[test]
    fn zero_maps_to_zero_and_mismatch_errors() {
        let b = random_subspace(4, 2, 3).unwrap();
        let zero = SampleBatch::from_rows(&[vec![0.0; 4]], 0, SampleSource::External).unwrap();
        assert_eq!(project(&zero, &b).unwrap().data, vec![0.0, 0.0]);
        let wrong = SampleBatch::from_rows(&[vec![0.0; 3]], 0, SampleSource::External).unwrap();
        assert!(matches!(project(&wrong, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn projected_gaussian_is_isotropic() {
        let g = sample_gaussian(&GaussianSpec::new(20, 1.0).unwrap(), 1_000_000, 3).unwrap();
        let b = random_subspace(20, 3, 4).unwrap();
        let (mean_dev, cov_dev) = project(&g, &b).unwrap().moments().isotropy_deviation();
        assert!(mean_dev < 0.01 && cov_dev < 0.02);
    }
}
