//! `∫ √Var_Θ(p_{Y|Θ}(y)) dy` for `k = 1`.

use serde::{Deserialize, Serialize};

use super::density::ConditionalMixture;
use super::{replicate, EstimateReport, Quantity};
use crate::error::{invalid, Error, Result};
use crate::mc::{mean, variance};
use crate::rng::SeedPath;
use crate::sources::{sample_theta, VectorSource};

/// Uniform grid over `±half_width_sd·√(γ+t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VdiGrid {
    pub half_width_sd: f64,
    pub nodes: usize,
}

impl Default for VdiGrid {
    fn default() -> Self {
        VdiGrid {
            half_width_sd: 8.0,
            nodes: 401,
        }
    }
}

impl VdiGrid {
    fn points(&self, sd: f64) -> Vec<f64> {
        let h = self.half_width_sd * sd;
        (0..self.nodes)
            .map(|i| -h + 2.0 * h * i as f64 / (self.nodes - 1) as f64)
            .collect()
    }
}

pub const MIN_MASS: f64 = 0.999;

fn trapezoid(y: &[f64], dx: f64) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    dx * (y.iter().sum::<f64>() - 0.5 * (y[0] + y[y.len() - 1]))
}

/// Per-replicate density and inner-MC variance of the density on the grid.
pub struct RepDensity {
    pub density: Vec<f64>,
    pub inner_var: Vec<f64>,
}

fn integral_of(reps: &[&RepDensity], dx: f64) -> f64 {
    let nodes = reps[0].density.len();
    let root_var: Vec<f64> = (0..nodes)
        .map(|i| {
            let col: Vec<f64> = reps.iter().map(|r| r.density[i]).collect();
            let inner: Vec<f64> = reps.iter().map(|r| r.inner_var[i]).collect();
            (variance(&col) - mean(&inner)).max(0.0).sqrt()
        })
        .collect();
    trapezoid(&root_var, dx)
}

/// Integral and grouped-jackknife standard error from replicate densities on a
/// uniform grid with spacing `dx`. Also returns the mass of the mean density.
pub fn var_density_integral_from_densities(reps: &[RepDensity], dx: f64) -> Result<(f64, f64, f64)> {
    if reps.len() < 2 {
        return Err(invalid("reps", "need at least 2 replicates for a variance"));
    }
    let all: Vec<&RepDensity> = reps.iter().collect();
    let value = integral_of(&all, dx);
    let nodes = reps[0].density.len();
    let mean_density: Vec<f64> = (0..nodes).map(|i| mean(&reps.iter().map(|r| r.density[i]).collect::<Vec<_>>())).collect();
    let mass = trapezoid(&mean_density, dx);

    let groups = reps.len().min(16);
    let se = if reps.len() >= 4 {
        let leave_out: Vec<f64> = (0..groups)
            .map(|g| {
                let kept: Vec<&RepDensity> = reps.iter().enumerate().filter(|(i, _)| i % groups != g).map(|(_, r)| r).collect();
                integral_of(&kept, dx)
            })
            .collect();
        let m = mean(&leave_out);
        let gf = groups as f64;
        ((gf - 1.0) / gf * leave_out.iter().map(|v| (v - m) * (v - m)).sum::<f64>()).sqrt()
    } else {
        f64::NAN
    };
    Ok((value, se, mass))
}

/// `∫ √Var_Θ(p_{Y|Θ}(y)) dy` at `k = 1`: the variance across `reps` projection
/// draws of the `m_inner`-sample density, minus the mean inner-sample variance,
/// floored at zero, integrated by the trapezoid rule. The grid is widened once
/// by half if the mean density carries less than [`MIN_MASS`].
pub fn var_density_integral(
    source: &VectorSource,
    t: f64,
    grid: &VdiGrid,
    reps: usize,
    m_inner: usize,
    seed: &SeedPath,
) -> Result<EstimateReport> {
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    if grid.nodes < 400 || grid.half_width_sd < 8.0 {
        return Err(invalid("grid", "need at least 400 nodes covering ±8 standard deviations"));
    }
    let sd = (source.gamma() + t).sqrt();
    let mut current = *grid;
    for attempt in 0..2 {
        let ys = current.points(sd);
        let dx = ys[1] - ys[0];
        let per_rep = replicate(reps, seed, |_, s| {
            let theta = sample_theta(1, source.n(), &s.child_named("theta"))?;
            let mix = ConditionalMixture::for_source(&theta, source, t, m_inner, &mut s.child_named("density").rng())?;
            let (density, inner_var) = ys
                .iter()
                .map(|&y| {
                    let d = mix.density(&[y]);
                    (d.density, d.se * d.se)
                })
                .unzip();
            Ok(RepDensity { density, inner_var })
        })?;
        let (value, se, mass) = var_density_integral_from_densities(&per_rep, dx)?;
        if mass >= MIN_MASS {
            let mut notes = Vec::new();
            if attempt > 0 {
                notes.push(format!("grid widened to ±{} sd", current.half_width_sd));
            }
            return Ok(EstimateReport {
                quantity: Quantity::VarDensityIntegral,
                value,
                se,
                reps_outer: reps,
                samples_inner: m_inner,
                method: "trapezoid/jackknife".into(),
                seed_path: seed.clone(),
                bias: None,
                corrected: None,
                notes,
            });
        }
        if attempt == 1 {
            return Err(Error::GridTooNarrow { mass });
        }
        current.half_width_sd *= 1.5;
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_densities_give_zero() {
        let density: Vec<f64> = (0..401).map(|i| (-(i as f64 - 200.0).powi(2) / 800.0).exp()).collect();
        let reps: Vec<RepDensity> = (0..8)
            .map(|_| RepDensity {
                density: density.clone(),
                inner_var: vec![0.0; 401],
            })
            .collect();
        let (v, se, _) = var_density_integral_from_densities(&reps, 0.1).unwrap();
        assert!(v < 1e-12 && se < 1e-12, "{v} {se}");
    }

    #[test]
    fn rejects_coarse_grids() {
        let src = crate::sources::make_sphere(4, 1.0).unwrap();
        let g = VdiGrid {
            half_width_sd: 8.0,
            nodes: 100,
        };
        assert!(var_density_integral(&src, 1.0, &g, 4, 10, &SeedPath::root(0)).is_err());
    }
}
