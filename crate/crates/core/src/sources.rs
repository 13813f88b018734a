//! Laws for the input vector `X` and the Gaussian projection/noise channel.
//!
//! A [`VectorSource`] couples a sampler with whatever closed-form metadata its
//! law admits (second moment, collision probability, mean norm). The channel is
//! `Z = ΘX` followed by `Y = Z + √t·N` with `Θ` a `k × n` matrix of i.i.d.
//! `N(0, 1/n)` entries.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SeedPath;

/// Marginal law of one coordinate for i.i.d. sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Marginal {
    StandardNormal,
    Normal { variance: f64 },
    Rademacher,
    /// `±value` with probability `p/2` each, zero otherwise.
    Sparse { p: f64, value: f64 },
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
}

impl Marginal {
    pub fn second_moment(&self) -> f64 {
        match *self {
            Marginal::StandardNormal => 1.0,
            Marginal::Normal { variance } => variance,
            Marginal::Rademacher => 1.0,
            Marginal::Sparse { p, value } => p * value * value,
            Marginal::Uniform { half_width } => half_width * half_width / 3.0,
        }
    }

    pub fn fourth_moment(&self) -> f64 {
        match *self {
            Marginal::StandardNormal => 3.0,
            Marginal::Normal { variance } => 3.0 * variance * variance,
            Marginal::Rademacher => 1.0,
            Marginal::Sparse { p, value } => p * value.powi(4),
            Marginal::Uniform { half_width } => half_width.powi(4) / 5.0,
        }
    }

    /// Whether `|x|` is almost surely constant.
    pub fn constant_magnitude(&self) -> bool {
        matches!(self, Marginal::Rademacher)
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Marginal::StandardNormal | Marginal::Rademacher => Ok(()),
            Marginal::Normal { variance } if ok(variance) => Ok(()),
            Marginal::Normal { variance } => {
                Err(invalid("variance", format!("{variance} must be finite and positive")))
            }
            Marginal::Sparse { p, value } if p > 0.0 && p <= 1.0 && ok(value.abs()) => Ok(()),
            Marginal::Sparse { p, value } => Err(invalid(
                "sparse",
                format!("need p in (0,1] and finite nonzero value, got p={p}, value={value}"),
            )),
            Marginal::Uniform { half_width } if ok(half_width) => Ok(()),
            Marginal::Uniform { half_width } => Err(invalid(
                "half_width",
                format!("{half_width} must be finite and positive"),
            )),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::StandardNormal => rng.sample(StandardNormal),
            Marginal::Normal { variance } => variance.sqrt() * rng.sample::<f64, _>(StandardNormal),
            Marginal::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Marginal::Sparse { p, value } => {
                let u: f64 = rng.random();
                if u < 0.5 * p {
                    value
                } else if u < p {
                    -value
                } else {
                    0.0
                }
            }
            Marginal::Uniform { half_width } => rng.random_range(-half_width..=half_width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Iid(Marginal),
    /// Uniform on the sphere of radius `√(nγ)`.
    Sphere,
    /// Atoms `√(nγ)·e_i`, `i < weights.len()`, drawn with the given weights.
    OrthogonalSupport { weights: Vec<f64> },
    DeterministicPoint { point: Array1<f64> },
    Empirical {
        rows: Array2<f64>,
        with_replacement: bool,
    },
}

/// Law of the `n`-dimensional input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSource {
    n: usize,
    gamma: f64,
    gamma_exact: bool,
    kind: SourceKind,
}

pub fn make_iid(n: usize, marginal: Marginal) -> Result<VectorSource> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    marginal.validate()?;
    let gamma = marginal.second_moment();
    if !gamma.is_finite() || !marginal.fourth_moment().is_finite() {
        return Err(invalid("marginal", "moments must be finite"));
    }
    Ok(VectorSource {
        n,
        gamma,
        gamma_exact: true,
        kind: SourceKind::Iid(marginal),
    })
}

pub fn make_sphere(n: usize, gamma: f64) -> Result<VectorSource> {
    if n < 2 {
        return Err(invalid("n", "sphere sources need n >= 2"));
    }
    check_gamma(gamma)?;
    Ok(VectorSource {
        n,
        gamma,
        gamma_exact: true,
        kind: SourceKind::Sphere,
    })
}

pub fn make_orthogonal_support(n: usize, weights: &[f64], gamma: f64) -> Result<VectorSource> {
    let d = weights.len();
    if d == 0 || d > n {
        return Err(invalid("d", format!("need 1 <= d <= n, got d={d}, n={n}")));
    }
    check_gamma(gamma)?;
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(invalid("weights", "must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid("weights", format!("must sum to 1, got {total}")));
    }
    Ok(VectorSource {
        n,
        gamma,
        gamma_exact: true,
        kind: SourceKind::OrthogonalSupport {
            weights: weights.to_vec(),
        },
    })
}

pub fn make_deterministic(point: Array1<f64>) -> Result<VectorSource> {
    let n = point.len();
    if n == 0 {
        return Err(invalid("point", "must be nonempty"));
    }
    let gamma = point.dot(&point) / n as f64;
    check_gamma(gamma)?;
    Ok(VectorSource {
        n,
        gamma,
        gamma_exact: true,
        kind: SourceKind::DeterministicPoint { point },
    })
}

/// Source backed by a `rows × n` sample matrix. `γ` is the dataset average of
/// `‖x‖²/n` and is flagged as estimated.
pub fn make_empirical(rows: Array2<f64>, with_replacement: bool) -> Result<VectorSource> {
    let (m, n) = rows.dim();
    if m < 2 || n == 0 {
        return Err(invalid("rows", "need at least two rows and one column"));
    }
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(invalid("rows", "contains non-finite values"));
    }
    let gamma = rows.rows().into_iter().map(|r| r.dot(&r)).sum::<f64>() / (m * n) as f64;
    check_gamma(gamma)?;
    Ok(VectorSource {
        n,
        gamma,
        gamma_exact: false,
        kind: SourceKind::Empirical {
            rows,
            with_replacement,
        },
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(invalid("gamma", format!("{gamma} must be finite and positive")))
    }
}

impl VectorSource {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `E‖X‖²/n`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_is_exact(&self) -> bool {
        self.gamma_exact
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    /// Short label for reports.
    pub fn label(&self) -> String {
        match &self.kind {
            SourceKind::Iid(m) => match m {
                Marginal::StandardNormal => "iid-normal".into(),
                Marginal::Normal { variance } => format!("iid-normal(var={variance})"),
                Marginal::Rademacher => "iid-rademacher".into(),
                Marginal::Sparse { p, value } => format!("iid-sparse(p={p},v={value})"),
                Marginal::Uniform { half_width } => format!("iid-uniform(a={half_width})"),
            },
            SourceKind::Sphere => "sphere".into(),
            SourceKind::OrthogonalSupport { weights } => format!("orthogonal(d={})", weights.len()),
            SourceKind::DeterministicPoint { .. } => "deterministic".into(),
            SourceKind::Empirical { rows, .. } => format!("empirical(rows={})", rows.nrows()),
        }
    }

    /// `λ = Σ wᵢ²` for finite-support sources built from orthogonal atoms.
    pub fn collision_probability(&self) -> Option<f64> {
        match &self.kind {
            SourceKind::OrthogonalSupport { weights } => Some(weights.iter().map(|w| w * w).sum()),
            SourceKind::DeterministicPoint { .. } => Some(1.0),
            _ => None,
        }
    }

    /// Weighted atoms when the law has small finite support.
    pub fn atoms(&self) -> Option<(Vec<f64>, Array2<f64>)> {
        match &self.kind {
            SourceKind::OrthogonalSupport { weights } => {
                let radius = (self.n as f64 * self.gamma).sqrt();
                let mut atoms = Array2::zeros((weights.len(), self.n));
                for i in 0..weights.len() {
                    atoms[[i, i]] = radius;
                }
                Some((weights.clone(), atoms))
            }
            SourceKind::DeterministicPoint { point } => {
                Some((vec![1.0], point.clone().insert_axis(ndarray::Axis(0))))
            }
            _ => None,
        }
    }

    /// Whether `‖X‖²/n = γ` almost surely.
    pub fn constant_norm(&self) -> bool {
        match &self.kind {
            SourceKind::Iid(m) => m.constant_magnitude(),
            SourceKind::Sphere
            | SourceKind::OrthogonalSupport { .. }
            | SourceKind::DeterministicPoint { .. } => true,
            SourceKind::Empirical { .. } => false,
        }
    }

    /// Closed form of `‖E X‖²/n` when known.
    pub fn mean_sq_norm_over_n(&self) -> Option<f64> {
        match &self.kind {
            SourceKind::Iid(_) | SourceKind::Sphere => Some(0.0),
            SourceKind::OrthogonalSupport { .. } => {
                Some(self.gamma * self.collision_probability().unwrap_or(0.0))
            }
            SourceKind::DeterministicPoint { .. } => Some(self.gamma),
            SourceKind::Empirical { .. } => None,
        }
    }

    /// Almost-sure range of `‖X‖²/n` when bounded.
    pub fn norm_range(&self) -> Option<(f64, f64)> {
        match &self.kind {
            SourceKind::Empirical { rows, .. } => {
                let n = self.n as f64;
                let (lo, hi) = rows.rows().into_iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
                    let s = r.dot(&r) / n;
                    (lo.min(s), hi.max(s))
                });
                Some((lo, hi))
            }
            SourceKind::Iid(Marginal::Uniform { half_width }) => Some((0.0, half_width * half_width)),
            SourceKind::Iid(Marginal::Sparse { value, .. }) => Some((0.0, value * value)),
            _ if self.constant_norm() => Some((self.gamma, self.gamma)),
            _ => None,
        }
    }

    /// Fill `out` (length `n`) with one draw. Empirical sources draw a uniform
    /// row here regardless of the replacement flag; use [`Self::sample_x`] for
    /// batches that must not repeat rows.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n);
        match &self.kind {
            SourceKind::Iid(m) => out.iter_mut().for_each(|v| *v = m.sample(rng)),
            SourceKind::Sphere => {
                let mut sq = 0.0;
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                    sq += *v * *v;
                }
                let scale = (self.n as f64 * self.gamma / sq).sqrt();
                out.iter_mut().for_each(|v| *v *= scale);
            }
            SourceKind::OrthogonalSupport { weights } => {
                let i = pick_weighted(weights, rng.random());
                out.iter_mut().for_each(|v| *v = 0.0);
                out[i] = (self.n as f64 * self.gamma).sqrt();
            }
            SourceKind::DeterministicPoint { point } => {
                out.iter_mut().zip(point.iter()).for_each(|(o, p)| *o = *p)
            }
            SourceKind::Empirical { rows, .. } => {
                let i = rng.random_range(0..rows.nrows());
                out.iter_mut().zip(rows.row(i).iter()).for_each(|(o, p)| *o = *p)
            }
        }
    }

    /// Row indices for a batch of `count` empirical draws.
    fn empirical_indices<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Option<Vec<usize>>> {
        match &self.kind {
            SourceKind::Empirical {
                rows,
                with_replacement,
            } => {
                let m = rows.nrows();
                if *with_replacement {
                    Ok(Some((0..count).map(|_| rng.random_range(0..m)).collect()))
                } else if count > m {
                    Err(Error::InsufficientSamples {
                        requested: count,
                        available: m,
                    })
                } else {
                    Ok(Some(index::sample(rng, m, count).into_vec()))
                }
            }
            _ => Ok(None),
        }
    }

    /// `count` i.i.d. rows (`count × n`).
    pub fn sample_x<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Array2<f64>> {
        if count == 0 {
            return Err(invalid("count", "must be at least 1"));
        }
        let mut out = Array2::zeros((count, self.n));
        if let (Some(idx), SourceKind::Empirical { rows, .. }) =
            (self.empirical_indices(rng, count)?, &self.kind)
        {
            for (mut dst, &i) in out.rows_mut().into_iter().zip(idx.iter()) {
                dst.assign(&rows.row(i));
            }
            return Ok(out);
        }
        for mut row in out.rows_mut() {
            self.sample_into(rng, row.as_slice_mut().expect("standard layout"));
        }
        Ok(out)
    }

    /// Draws `count` vectors and returns their projections `θx` (`count × k`)
    /// without materializing the `count × n` sample.
    pub fn sample_projected<R: Rng + ?Sized>(
        &self,
        theta: &ProjectionDraw,
        rng: &mut R,
        count: usize,
    ) -> Result<Array2<f64>> {
        if theta.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: theta.n(),
            });
        }
        let k = theta.k();
        let mut out = Array2::zeros((count, k));
        let idx = self.empirical_indices(rng, count)?;
        let mut buf = vec![0.0; self.n];
        for c in 0..count {
            let x: ArrayView1<f64> = match (&idx, &self.kind) {
                (Some(idx), SourceKind::Empirical { rows, .. }) => rows.row(idx[c]),
                _ => {
                    self.sample_into(rng, &mut buf);
                    ArrayView1::from(&buf[..])
                }
            };
            for j in 0..k {
                out[[c, j]] = theta.entries.row(j).dot(&x);
            }
        }
        Ok(out)
    }

    /// `count` draws of `‖X‖²/n`.
    pub fn sample_sq_norms<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<f64>> {
        let n = self.n as f64;
        if self.constant_norm() {
            return Ok(vec![self.gamma; count]);
        }
        if let (Some(idx), SourceKind::Empirical { rows, .. }) =
            (self.empirical_indices(rng, count)?, &self.kind)
        {
            return Ok(idx.iter().map(|&i| rows.row(i).dot(&rows.row(i)) / n).collect());
        }
        let mut buf = vec![0.0; self.n];
        Ok((0..count)
            .map(|_| {
                self.sample_into(rng, &mut buf);
                buf.iter().map(|v| v * v).sum::<f64>() / n
            })
            .collect())
    }
}

fn pick_weighted(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// One realization of the `k × n` projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionDraw {
    pub entries: Array2<f64>,
    pub seed_path: SeedPath,
}

impl ProjectionDraw {
    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn from_entries(entries: Array2<f64>, seed_path: SeedPath) -> Self {
        ProjectionDraw { entries, seed_path }
    }

    /// `θθᵀ` (`k × k`).
    pub fn gram(&self) -> Array2<f64> {
        self.entries.dot(&self.entries.t())
    }
}

/// Draws `Θ` with i.i.d. `N(0, 1/n)` entries from the stream at `seed_path`.
pub fn sample_theta(k: usize, n: usize, seed_path: &SeedPath) -> Result<ProjectionDraw> {
    if k == 0 || n == 0 {
        return Err(invalid("k/n", "must be at least 1"));
    }
    let mut rng = seed_path.rng();
    let sd = (1.0 / n as f64).sqrt();
    let entries = Array2::from_shape_simple_fn((k, n), || sd * rng.sample::<f64, _>(StandardNormal));
    Ok(ProjectionDraw {
        entries,
        seed_path: seed_path.clone(),
    })
}

/// Additive white Gaussian noise of power `t` on `k` outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseChannel {
    t: f64,
    k: usize,
}

impl NoiseChannel {
    pub fn new(t: f64, k: usize) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(invalid("t", format!("noise power {t} must be finite and positive")));
        }
        if k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        Ok(NoiseChannel { t, k })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// `z = θx` and `y = z + √t·N`.
pub fn project_and_noise<R: Rng + ?Sized>(
    theta: &ProjectionDraw,
    x: ArrayView1<f64>,
    channel: &NoiseChannel,
    rng: &mut R,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if x.len() != theta.n() {
        return Err(Error::DimensionMismatch {
            expected: theta.n(),
            got: x.len(),
        });
    }
    if channel.k != theta.k() {
        return Err(Error::DimensionMismatch {
            expected: theta.k(),
            got: channel.k,
        });
    }
    let z = theta.entries.dot(&x);
    let sd = channel.t.sqrt();
    let y = z.mapv(|zi| zi + sd * { let e: f64 = StandardNormal.sample(rng); e });
    Ok((z, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn rng(i: u64) -> crate::rng::StreamRng {
        SeedPath::root(99).child(i).rng()
    }

    #[test]
    fn iid_gamma_from_marginal() {
        assert_eq!(make_iid(100, Marginal::StandardNormal).unwrap().gamma(), 1.0);
        assert_eq!(make_iid(100, Marginal::Rademacher).unwrap().gamma(), 1.0);
        let s = make_iid(64, Marginal::Sparse { p: 0.1, value: 10f64.sqrt() }).unwrap();
        assert_relative_eq!(s.gamma(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn iid_rejects_bad_marginals() {
        assert!(make_iid(10, Marginal::Normal { variance: f64::INFINITY }).is_err());
        assert!(make_iid(10, Marginal::Normal { variance: -1.0 }).is_err());
        assert!(make_iid(10, Marginal::Sparse { p: 0.0, value: 1.0 }).is_err());
        assert!(make_iid(0, Marginal::Rademacher).is_err());
    }

    #[test]
    fn sphere_rows_have_exact_norm() {
        let s = make_sphere(10, 2.0).unwrap();
        let xs = s.sample_x(&mut rng(0), 50).unwrap();
        for r in xs.rows() {
            assert_relative_eq!(r.dot(&r), 20.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn orthogonal_support_metadata() {
        let s = make_orthogonal_support(20, &[0.1; 10], 1.0).unwrap();
        assert_relative_eq!(s.collision_probability().unwrap(), 0.1, epsilon = 1e-12);
        let mut w = vec![0.0; 5];
        w[0] = 1.0;
        let s = make_orthogonal_support(5, &w, 1.0).unwrap();
        assert_eq!(s.collision_probability().unwrap(), 1.0);
        let s = make_orthogonal_support(4, &[0.5, 0.5], 3.0).unwrap();
        assert_relative_eq!(s.collision_probability().unwrap(), 0.5);
        let (_, atoms) = s.atoms().unwrap();
        assert_eq!(atoms.row(0).dot(&atoms.row(1)), 0.0);
        assert_relative_eq!(atoms.row(0).dot(&atoms.row(0)), 12.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_support_rejects_bad_input() {
        assert!(make_orthogonal_support(3, &[0.25; 4], 1.0).is_err());
        assert!(make_orthogonal_support(4, &[0.5, 0.6], 1.0).is_err());
        assert!(make_orthogonal_support(4, &[1.5, -0.5], 1.0).is_err());
    }

    #[test]
    fn same_seed_same_matrix() {
        let s = make_iid(8, Marginal::StandardNormal).unwrap();
        let a = s.sample_x(&mut rng(3), 4).unwrap();
        let b = s.sample_x(&mut rng(3), 4).unwrap();
        assert_eq!(a, b);
        let p = SeedPath::root(1).child(2);
        assert_eq!(sample_theta(3, 8, &p).unwrap(), sample_theta(3, 8, &p).unwrap());
    }

    #[test]
    fn empirical_without_replacement_respects_size() {
        let rows = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64 + 1.0);
        let s = make_empirical(rows.clone(), false).unwrap();
        assert!(matches!(
            s.sample_x(&mut rng(0), 6),
            Err(Error::InsufficientSamples { requested: 6, available: 5 })
        ));
        let x = s.sample_x(&mut rng(0), 5).unwrap();
        let mut firsts: Vec<i64> = x.column(0).iter().map(|v| *v as i64).collect();
        firsts.sort();
        assert_eq!(firsts, vec![1, 4, 7, 10, 13]);
        let s = make_empirical(rows, true).unwrap();
        assert_eq!(s.sample_x(&mut rng(0), 50).unwrap().nrows(), 50);
    }

    #[test]
    fn projection_dimension_checks() {
        let theta = sample_theta(2, 4, &SeedPath::root(0)).unwrap();
        let ch = NoiseChannel::new(1.0, 2).unwrap();
        let x = array![1.0, 2.0, 3.0];
        assert!(project_and_noise(&theta, x.view(), &ch, &mut rng(0)).is_err());
        assert!(NoiseChannel::new(0.0, 1).is_err());
    }

    #[test]
    fn tiny_noise_leaves_projection() {
        let theta = sample_theta(3, 5, &SeedPath::root(4)).unwrap();
        let ch = NoiseChannel::new(1e-300, 3).unwrap();
        let x = array![1.0, -2.0, 0.5, 0.0, 3.0];
        let (z, y) = project_and_noise(&theta, x.view(), &ch, &mut rng(1)).unwrap();
        for (a, b) in z.iter().zip(y.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-100);
        }
        let zero = Array1::zeros(5);
        let (z, _) = project_and_noise(&theta, zero.view(), &ch, &mut rng(1)).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sample_projected_matches_explicit_product() {
        let s = make_iid(6, Marginal::StandardNormal).unwrap();
        let theta = sample_theta(2, 6, &SeedPath::root(5)).unwrap();
        let zs = s.sample_projected(&theta, &mut rng(8), 4).unwrap();
        let xs = s.sample_x(&mut rng(8), 4).unwrap();
        let expect = xs.dot(&theta.entries.t());
        for (a, b) in zs.iter().zip(expect.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }
}
