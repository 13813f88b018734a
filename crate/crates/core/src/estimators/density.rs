use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mc::log_sum_exp;
use crate::sources::{ProjectionDraw, VectorSource};

/// Isotropic Gaussian `N(0, variance·I_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianReference {
    pub k: usize,
    pub variance: f64,
}

impl GaussianReference {
    pub fn new(k: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(invalid("variance", "must be positive"));
        }
        Ok(GaussianReference { k, variance })
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        log_gauss(sq_norm(y), self.variance, self.k)
    }
}

pub(crate) fn sq_norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum()
}

/// `log φ_v(y)` for an isotropic `k`-dimensional Gaussian given `‖y‖²`.
pub(crate) fn log_gauss(sq: f64, variance: f64, k: usize) -> f64 {
    -0.5 * sq / variance - 0.5 * k as f64 * (2.0 * PI * variance).ln()
}

/// The density `y ↦ Σ_m w_m φ_t(y − z_m)`: exact for finite-support sources,
/// a Monte Carlo average over projected draws otherwise.
#[derive(Debug, Clone)]
pub struct ConditionalMixture {
    centers: Array2<f64>,
    log_weights: Vec<f64>,
    t: f64,
    exact: bool,
}

/// A density value with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub density: f64,
    pub se: f64,
    pub log_density: f64,
    /// Every kernel term underflowed in linear scale; only `log_density` is meaningful.
    pub underflow: bool,
}

impl ConditionalMixture {
    /// Equal-weight mixture over the rows of `centers` (`m × k`).
    pub fn from_centers(centers: Array2<f64>, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(invalid("t", "must be positive"));
        }
        let m = centers.nrows();
        if m == 0 {
            return Err(invalid("centers", "need at least one center"));
        }
        Ok(ConditionalMixture {
            centers,
            log_weights: vec![-(m as f64).ln(); m],
            t,
            exact: false,
        })
    }

    /// Density of `θX + √t N` given `θ`: exact over the source's atoms when it
    /// has finite support, otherwise an `m`-sample Monte Carlo average.
    pub fn for_source<R: Rng + ?Sized>(
        theta: &ProjectionDraw,
        source: &VectorSource,
        t: f64,
        m: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if let Some((weights, atoms)) = source.atoms() {
            if theta.n() != source.n() {
                return Err(Error::DimensionMismatch {
                    expected: source.n(),
                    got: theta.n(),
                });
            }
            let projected = atoms.dot(&theta.entries.t());
            let keep: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
            let mut centers = Array2::zeros((keep.len(), theta.k()));
            for (row, &i) in keep.iter().enumerate() {
                centers.row_mut(row).assign(&projected.row(i));
            }
            let mut mix = ConditionalMixture::from_centers(centers, t)?;
            mix.log_weights = keep.iter().map(|&i| weights[i].ln()).collect();
            mix.exact = true;
            return Ok(mix);
        }
        ConditionalMixture::from_centers(source.sample_projected(theta, rng, m)?, t)
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn len(&self) -> usize {
        self.centers.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.nrows() == 0
    }

    pub fn k(&self) -> usize {
        self.centers.ncols()
    }

    pub fn centers(&self) -> ArrayView2<'_, f64> {
        self.centers.view()
    }

    fn log_kernels(&self, y: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let inv = 0.5 / self.t;
        for (row, lw) in self.centers.rows().into_iter().zip(&self.log_weights) {
            let d: f64 = row.iter().zip(y).map(|(c, v)| (v - c) * (v - c)).sum();
            out.push(lw - inv * d);
        }
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.len());
        self.log_density_buf(y, &mut buf)
    }

    /// As [`Self::log_density`], reusing `buf` as scratch space.
    pub fn log_density_buf(&self, y: &[f64], buf: &mut Vec<f64>) -> f64 {
        self.log_kernels(y, buf);
        log_sum_exp(buf.iter().copied()) - 0.5 * self.k() as f64 * (2.0 * PI * self.t).ln()
    }

    /// Density, its standard error across mixture components (zero when exact),
    /// and the log-density.
    pub fn density(&self, y: &[f64]) -> DensityEstimate {
        let mut buf = Vec::with_capacity(self.len());
        self.log_kernels(y, &mut buf);
        let norm = -0.5 * self.k() as f64 * (2.0 * PI * self.t).ln();
        let log_density = log_sum_exp(buf.iter().copied()) + norm;
        let density = log_density.exp();
        let se = if self.exact {
            0.0
        } else {
            let m = self.len() as f64;
            // kernel values φ_t(y − z_m) = exp(buf + ln m + norm)
            let vals: Vec<f64> = buf.iter().map(|l| (l + m.ln() + norm).exp()).collect();
            (crate::mc::variance(&vals) / m).sqrt()
        };
        DensityEstimate {
            density,
            se,
            log_density,
            underflow: density == 0.0,
        }
    }
}

/// `p̂_{Y|θ}(y) = (1/m) Σ φ_t(y − θx_m)` over the rows of `x_samples`.
pub fn conditional_density_y(
    theta: &ProjectionDraw,
    t: f64,
    x_samples: &Array2<f64>,
    y: &[f64],
) -> Result<DensityEstimate> {
    if x_samples.ncols() != theta.n() {
        return Err(Error::DimensionMismatch {
            expected: theta.n(),
            got: x_samples.ncols(),
        });
    }
    if y.len() != theta.k() {
        return Err(Error::DimensionMismatch {
            expected: theta.k(),
            got: y.len(),
        });
    }
    let centers = x_samples.dot(&theta.entries.t());
    Ok(ConditionalMixture::from_centers(centers, t)?.density(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedPath;
    use crate::sources::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_projection_gives_noise_density() {
        let theta = ProjectionDraw::from_entries(Array2::zeros((2, 5)), SeedPath::root(0));
        let src = make_iid(5, crate::sources::Marginal::StandardNormal).unwrap();
        let xs = src.sample_x(&mut SeedPath::root(1).rng(), 50).unwrap();
        let y = [0.3, -1.2];
        let d = conditional_density_y(&theta, 0.7, &xs, &y).unwrap();
        let want = GaussianReference::new(2, 0.7).unwrap().log_density(&y).exp();
        assert_relative_eq!(d.density, want, max_relative = 1e-12);
        assert!(d.se < 1e-15);
    }

    #[test]
    fn integrates_to_one_in_one_dimension() {
        let src = make_sphere(20, 1.0).unwrap();
        let theta = sample_theta(1, 20, &SeedPath::root(4)).unwrap();
        let mix = ConditionalMixture::for_source(&theta, &src, 0.5, 500, &mut SeedPath::root(5).rng()).unwrap();
        let total = crate::quadrature::integrate(|y| mix.log_density(&[y]).exp(), -12.0, 12.0, 400);
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn exact_atoms_for_orthogonal_support() {
        let src = make_orthogonal_support(6, &[0.5, 0.25, 0.25], 2.0).unwrap();
        let theta = sample_theta(2, 6, &SeedPath::root(8)).unwrap();
        let mix = ConditionalMixture::for_source(&theta, &src, 1.0, 10, &mut SeedPath::root(9).rng()).unwrap();
        assert!(mix.is_exact());
        assert_eq!(mix.len(), 3);
        let y = [0.2, 0.1];
        let r = (6.0f64 * 2.0).sqrt();
        let want: f64 = [0.5, 0.25, 0.25]
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let z = [theta.entries[[0, i]] * r, theta.entries[[1, i]] * r];
                w * GaussianReference::new(2, 1.0).unwrap().log_density(&[y[0] - z[0], y[1] - z[1]]).exp()
            })
            .sum();
        assert_relative_eq!(mix.density(&y).density, want, max_relative = 1e-12);
    }
}
