//! Modulation classification: Gaussian mixture models fitted by EM, their
//! single-Gaussian moment approximations, and the symmetric Kullback-Leibler
//! divergence to each scheme in a template database.
//!
//! Points are real (`d = 1`, BPSK projected onto the real axis) or
//! `(re, im)` pairs (`d = 2`).

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel;
use crate::equalize::{self, Deconvolution, LsConfig, TrainingBlock};
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::SampledSignal;
use crate::waveform::{self, Scheme};

/// Flat row-major collection of `d`-dimensional points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid("data length is not a multiple of the dimension"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dim, data })
    }

    /// Real parts for `dim = 1`, `(re, im)` pairs for `dim = 2`.
    pub fn from_complex(samples: &[Complex64], dim: usize) -> Result<Self> {
        let data = match dim {
            1 => samples.iter().map(|z| z.re).collect(),
            _ => samples.iter().flat_map(|z| [z.re, z.im]).collect(),
        };
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for p in self.points() {
            for (k, v) in p.iter().enumerate() {
                m[k] += v;
            }
        }
        m / self.len() as f64
    }

    /// Biased (`1/M`) sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = DMatrix::zeros(self.dim, self.dim);
        for p in self.points() {
            for a in 0..self.dim {
                for b in 0..self.dim {
                    c[(a, b)] += (p[a] - m[a]) * (p[b] - m[b]);
                }
            }
        }
        c / self.len() as f64
    }

    /// Mean per-coordinate variance.
    pub fn scalar_variance(&self) -> f64 {
        self.covariance().trace() / self.dim as f64
    }

    /// Root mean square distance from the origin.
    pub fn rms(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() / self.len() as f64).sqrt()
    }
}

/// `u(x) = sum_q pi_q N(x; mu_q, Sigma_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
}

impl Gmm {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covs: Vec<DMatrix<f64>>) -> Result<Self> {
        let q = weights.len();
        if q == 0 || means.len() != q || covs.len() != q {
            return Err(Error::invalid("weights, means and covariances must be non-empty and equally long"));
        }
        let dim = means[0].len();
        if dim != 1 && dim != 2 {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("mixture weights must be >= 0 and sum to 1"));
        }
        for (m, c) in means.iter().zip(&covs) {
            if m.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.len(),
                });
            }
            if c.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.nrows(),
                });
            }
            check_spd(c)?;
        }
        Ok(Self {
            dim,
            weights,
            means,
            covs,
        })
    }

    /// Equal-weight mixture with isotropic components.
    pub fn isotropic(means: Vec<DVector<f64>>, variance: f64) -> Result<Self> {
        let q = means.len();
        let dim = means.first().map_or(1, |m| m.len());
        let covs = vec![DMatrix::identity(dim, dim) * variance; q];
        Self::new(vec![1.0 / q as f64; q], means, covs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covs
    }

    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        gmm_pdf(self, x)
    }

    /// Draws `n` points.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let chols: Vec<DMatrix<f64>> = self
            .covs
            .iter()
            .map(|c| c.clone().cholesky().map(|ch| ch.l()).ok_or(Error::SingularCovariance))
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut q = self.components() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    q = i;
                    break;
                }
            }
            let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &self.means[q] + &chols[q] * z;
            data.extend(x.iter());
        }
        Dataset::new(self.dim, data)
    }
}

fn check_spd(c: &DMatrix<f64>) -> Result<()> {
    let asym = (c - c.transpose()).abs().max();
    if !(asym <= 1e-12 * c.abs().max().max(1.0)) || c.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    if c.clone().cholesky().is_none() {
        return Err(Error::SingularCovariance);
    }
    Ok(())
}

/// Precomputed inverse and normalizer of one component, for `d <= 2`.
#[derive(Debug, Clone, Copy)]
struct Component {
    log_weight: f64,
    mean: [f64; 2],
    // inverse covariance entries (a, b; b, c)
    inv: [f64; 3],
    log_norm: f64,
}

impl Component {
    fn new(dim: usize, weight: f64, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let (inv, det) = if dim == 1 {
            let v = cov[(0, 0)];
            ([1.0 / v, 0.0, 0.0], v)
        } else {
            let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
            let det = a * c - b * b;
            ([c / det, -b / det, a / det], det)
        };
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::SingularCovariance);
        }
        Ok(Self {
            log_weight: weight.ln(),
            mean: [mean[0], if dim == 2 { mean[1] } else { 0.0 }],
            inv,
            log_norm: -0.5 * (dim as f64 * (2.0 * PI).ln() + det.ln()),
        })
    }

    #[inline]
    fn log_density(&self, x: &[f64]) -> f64 {
        let dx = x[0] - self.mean[0];
        let maha = if x.len() == 1 {
            dx * dx * self.inv[0]
        } else {
            let dy = x[1] - self.mean[1];
            dx * dx * self.inv[0] + 2.0 * dx * dy * self.inv[1] + dy * dy * self.inv[2]
        };
        self.log_norm - 0.5 * maha
    }
}

fn components(model: &Gmm) -> Result<Vec<Component>> {
    (0..model.components())
        .map(|q| Component::new(model.dim, model.weights[q], &model.means[q], &model.covs[q]))
        .collect()
}

pub fn gmm_pdf(model: &Gmm, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: x.len(),
        });
    }
    Ok(components(model)?
        .iter()
        .map(|c| (c.log_weight + c.log_density(x)).exp())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once the total log-likelihood gains less than this.
    pub epsilon: f64,
    /// Added to covariance diagonals, relative to the sample variance.
    pub covariance_floor: f64,
    /// Components whose responsibility mass falls below this share of the
    /// data are re-seeded.
    pub empty_fraction: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            epsilon: 1e-4,
            covariance_floor: 1e-8,
            empty_fraction: 1e-8,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.covariance_floor > 0.0) || self.max_iterations == 0 {
            return Err(Error::invalid("EM needs epsilon > 0, floor > 0 and at least one iteration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: Gmm,
    /// Total log-likelihood of the parameters entering each iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations at which an empty component was re-seeded.
    pub rescues: Vec<usize>,
}

/// Expectation-maximization from `init`.
///
/// Each iteration computes responsibilities and the log-likelihood under the
/// current parameters, then updates weights `N_q / M`, means, and
/// covariances around the new means. Iteration stops when the likelihood
/// gain drops below `epsilon`.
pub fn em_fit(data: &Dataset, init: &Gmm, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    let d = data.dim();
    if init.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: init.dim(),
        });
    }
    let m = data.len();
    let q = init.components();
    if m < q {
        return Err(Error::invalid(format!("{m} points cannot fit {q} components")));
    }
    let sample_var = data.scalar_variance();
    let floor = cfg.covariance_floor * if sample_var > 0.0 { sample_var } else { 1.0 };

    let mut model = init.clone();
    let mut resp = vec![0.0; m * q];
    let mut trace = Vec::new();
    let mut rescues = Vec::new();
    let mut prev: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iterations {
        iterations = it;
        let comps = components(&model)?;
        // E-step
        let mut ll = 0.0;
        for (i, x) in data.points().enumerate() {
            let row = &mut resp[i * q..(i + 1) * q];
            let mut top = f64::NEG_INFINITY;
            for (r, c) in row.iter_mut().zip(&comps) {
                *r = c.log_weight + c.log_density(x);
                top = top.max(*r);
            }
            let mut s = 0.0;
            for r in row.iter_mut() {
                *r = (*r - top).exp();
                s += *r;
            }
            ll += top + s.ln();
            row.iter_mut().for_each(|r| *r /= s);
        }
        trace.push(ll);

        // M-step, accumulated in fixed arrays (d <= 2)
        let mut mass = vec![0.0; q];
        let mut mu = vec![[0.0f64; 2]; q];
        for (i, x) in data.points().enumerate() {
            let row = &resp[i * q..(i + 1) * q];
            for k in 0..q {
                let r = row[k];
                mass[k] += r;
                mu[k][0] += r * x[0];
                if d == 2 {
                    mu[k][1] += r * x[1];
                }
            }
        }
        let mut empty = Vec::new();
        for k in 0..q {
            if mass[k] < cfg.empty_fraction * m as f64 || mass[k] == 0.0 {
                empty.push(k);
            } else {
                mu[k][0] /= mass[k];
                mu[k][1] /= mass[k];
            }
        }
        // (xx, xy, yy)
        let mut acc = vec![[0.0f64; 3]; q];
        for (i, x) in data.points().enumerate() {
            let row = &resp[i * q..(i + 1) * q];
            for k in 0..q {
                let r = row[k];
                let dx = x[0] - mu[k][0];
                acc[k][0] += r * dx * dx;
                if d == 2 {
                    let dy = x[1] - mu[k][1];
                    acc[k][1] += r * dx * dy;
                    acc[k][2] += r * dy * dy;
                }
            }
        }
        let mut means: Vec<DVector<f64>> = mu.iter().map(|v| DVector::from_column_slice(&v[..d])).collect();
        let mut covs: Vec<DMatrix<f64>> = acc
            .iter()
            .zip(&mass)
            .map(|(a, &w)| {
                let a = if w > 0.0 { a.map(|v| v / w) } else { *a };
                if d == 1 {
                    DMatrix::from_element(1, 1, a[0] + floor)
                } else {
                    DMatrix::from_row_slice(2, 2, &[a[0] + floor, a[1], a[1], a[2] + floor])
                }
            })
            .collect();
        let mut weights: Vec<f64> = mass.iter().map(|w| w / m as f64).collect();
        if !empty.is_empty() {
            rescues.push(it);
            for &k in &empty {
                let far = farthest_point(data, &means, &empty);
                means[k] = DVector::from_column_slice(data.point(far));
                covs[k] = DMatrix::identity(d, d) * (sample_var.max(floor) / q as f64);
                weights[k] = 1.0 / m as f64;
            }
            let s: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= s);
        }
        model = Gmm {
            dim: d,
            weights,
            means,
            covs,
        };

        if let Some(p) = prev {
            if ll - p < cfg.epsilon {
                converged = true;
                break;
            }
        }
        prev = Some(ll);
    }
    Ok(EmFit {
        model,
        log_likelihood: trace,
        iterations,
        converged,
        rescues,
    })
}

fn farthest_point(data: &Dataset, means: &[DVector<f64>], skip: &[usize]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in data.points().enumerate() {
        let dist = means
            .iter()
            .enumerate()
            .filter(|(k, _)| !skip.contains(k))
            .map(|(_, mu)| x.iter().zip(mu.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if dist > best.1 {
            best = (i, dist);
        }
    }
    best.0
}

/// Means at `points` scaled by the data RMS, equal weights, isotropic
/// covariance of one `Q`-th of the sample variance.
pub fn template_init(points: &[Complex64], data: &Dataset) -> Result<Gmm> {
    let d = data.dim();
    let rms = data.rms();
    let scale = if rms > 0.0 { rms } else { 1.0 };
    let var = data.scalar_variance();
    let var = if var > 0.0 { var } else { 1.0 };
    let means = project(points, d).into_iter().map(|m| m * scale).collect();
    Gmm::isotropic(means, var / points.len() as f64)
}

fn project(points: &[Complex64], d: usize) -> Vec<DVector<f64>> {
    points
        .iter()
        .map(|z| match d {
            1 => DVector::from_vec(vec![z.re]),
            _ => DVector::from_vec(vec![z.re, z.im]),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianSummary {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        check_spd(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Places a `d = 1` summary on the real axis of the plane, with
    /// `imag_variance` on the imaginary axis.
    pub fn embed_real(&self, imag_variance: f64) -> Self {
        if self.dim() == 2 {
            return self.clone();
        }
        Self {
            mean: DVector::from_vec(vec![self.mean[0], 0.0]),
            cov: DMatrix::from_row_slice(2, 2, &[self.cov[(0, 0)], 0.0, 0.0, imag_variance]),
        }
    }
}

/// The single Gaussian with the mixture's first two moments.
pub fn gaussian_approx(model: &Gmm) -> GaussianSummary {
    let d = model.dim;
    let mut mean = DVector::zeros(d);
    for (w, m) in model.weights.iter().zip(&model.means) {
        mean += m * *w;
    }
    let mut cov = DMatrix::zeros(d, d);
    for ((w, m), c) in model.weights.iter().zip(&model.means).zip(&model.covs) {
        let dm = m - &mean;
        cov += (c + &dm * dm.transpose()) * *w;
    }
    GaussianSummary { mean, cov }
}

/// `D(p || q) = 1/2 [ln(|Sq|/|Sp|) + tr(Sq^-1 Sp) + (mp-mq)^T Sq^-1 (mp-mq) - d]`.
pub fn kld_gaussian(p: &GaussianSummary, q: &GaussianSummary) -> Result<f64> {
    let d = p.dim();
    if q.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: q.dim(),
        });
    }
    if p == q {
        return Ok(0.0);
    }
    let cp = p.cov.clone().cholesky().ok_or(Error::SingularCovariance)?;
    let cq = q.cov.clone().cholesky().ok_or(Error::SingularCovariance)?;
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ld_p = logdet(&cp.l());
    let ld_q = logdet(&cq.l());
    let trace = cq.solve(&p.cov).trace();
    let dm = &p.mean - &q.mean;
    let maha = dm.dot(&cq.solve(&dm));
    let kl = 0.5 * (ld_q - ld_p + trace + maha - d as f64);
    if !kl.is_finite() {
        return Err(Error::SingularCovariance);
    }
    // rounding can leave a tiny negative residue for near-identical inputs
    Ok(kl.max(0.0))
}

pub fn symmetric_kld(p: &GaussianSummary, q: &GaussianSummary) -> Result<f64> {
    Ok(0.5 * (kld_gaussian(p, q)? + kld_gaussian(q, p)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub scheme: Scheme,
    pub points: Vec<Complex64>,
}

impl Template {
    /// Equal-weight mixture with one isotropic component of variance
    /// `component_variance` per constellation point, in the scheme's
    /// dimension.
    pub fn gmm(&self, component_variance: f64) -> Result<Gmm> {
        Gmm::isotropic(project(&self.points, self.scheme.dim()), component_variance)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TemplateFile {
    template: Vec<TemplateEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TemplateEntry {
    name: String,
    points: Vec<[f64; 2]>,
}

/// Known constellations the classifier compares against.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateDatabase {
    templates: Vec<Template>,
}

impl TemplateDatabase {
    pub fn new(templates: Vec<Template>) -> Result<Self> {
        if templates.is_empty() {
            return Err(Error::invalid("template database is empty"));
        }
        for (i, t) in templates.iter().enumerate() {
            if templates[..i].iter().any(|u| u.scheme == t.scheme) {
                return Err(Error::invalid(format!("duplicate template {}", t.scheme)));
            }
            if t.points.is_empty() {
                return Err(Error::invalid(format!("template {} has no points", t.scheme)));
            }
        }
        Ok(Self { templates })
    }

    /// BPSK, QPSK, 8-PSK and 16-QAM.
    pub fn standard() -> Self {
        Self::for_schemes(&[Scheme::Bpsk, Scheme::Qpsk, Scheme::Psk8, Scheme::Qam16])
    }

    pub fn for_schemes(schemes: &[Scheme]) -> Self {
        Self {
            templates: schemes
                .iter()
                .map(|&s| Template {
                    scheme: s,
                    points: waveform::constellation(s).points,
                })
                .collect(),
        }
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn schemes(&self) -> Vec<Scheme> {
        self.templates.iter().map(|t| t.scheme).collect()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Parses `[[template]]` tables with `name` and `points = [[re, im], ...]`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: TemplateFile = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        let templates = file
            .template
            .into_iter()
            .map(|e| {
                Ok(Template {
                    scheme: e.name.parse()?,
                    points: e.points.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
                })
            })
            .collect::<Result<_>>()?;
        Self::new(templates)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        let file = TemplateFile {
            template: self
                .templates
                .iter()
                .map(|t| TemplateEntry {
                    name: t.scheme.name().to_string(),
                    points: t.points.iter().map(|z| [z.re, z.im]).collect(),
                })
                .collect(),
        };
        toml::to_string(&file).unwrap_or_default()
    }
}

/// Component variance the templates are built with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemplateVariance {
    /// Known per-coordinate noise variance.
    Known(f64),
    /// Weighted mean per-coordinate variance of each hypothesis fit.
    Fitted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub declared: Scheme,
    pub index: usize,
    /// `D_sym` per template, in database order.
    pub divergences: Vec<f64>,
    pub iterations: Vec<usize>,
}

/// Divergences within `TIE_TOL * (1 + min)` of the minimum count as ties,
/// resolved toward the earlier template.
const TIE_TOL: f64 = 1e-9;

/// For every template, fits a mixture with one component per constellation
/// point (seeded at the template points), Gaussian-approximates the fit and
/// the template, and scores them by symmetric KLD. The smallest score wins.
pub fn classify(
    samples: &[Complex64],
    db: &TemplateDatabase,
    em: &EmConfig,
    variance: TemplateVariance,
) -> Result<Classification> {
    let mut divergences = Vec::with_capacity(db.len());
    let mut iterations = Vec::with_capacity(db.len());
    for t in db.templates() {
        let data = Dataset::from_complex(samples, t.scheme.dim())?;
        let init = template_init(&t.points, &data)?;
        let fit = em_fit(&data, &init, em)?;
        let v = match variance {
            TemplateVariance::Known(v) => v,
            TemplateVariance::Fitted => fitted_variance(&fit.model),
        };
        let y = gaussian_approx(&fit.model);
        let z = gaussian_approx(&t.gmm(v)?);
        divergences.push(symmetric_kld(&y, &z)?);
        iterations.push(fit.iterations);
    }
    let min = divergences.iter().copied().fold(f64::INFINITY, f64::min);
    let index = divergences
        .iter()
        .position(|&v| v <= min + TIE_TOL * (1.0 + min.abs()))
        .unwrap_or(0);
    Ok(Classification {
        declared: db.templates()[index].scheme,
        index,
        divergences,
        iterations,
    })
}

fn fitted_variance(m: &Gmm) -> f64 {
    m.weights
        .iter()
        .zip(&m.covs)
        .map(|(w, c)| w * c.trace() / m.dim as f64)
        .sum()
}

/// Pairwise template `D_sym` at a common component variance; `d = 1`
/// templates are embedded in the plane with that variance on the imaginary
/// axis when compared with `d = 2` ones.
pub fn template_divergences(db: &TemplateDatabase, component_variance: f64) -> Result<Vec<Vec<f64>>> {
    let summaries: Vec<GaussianSummary> = db
        .templates()
        .iter()
        .map(|t| Ok(gaussian_approx(&t.gmm(component_variance)?)))
        .collect::<Result<_>>()?;
    summaries
        .iter()
        .map(|a| {
            summaries
                .iter()
                .map(|b| {
                    if a.dim() == b.dim() {
                        symmetric_kld(a, b)
                    } else {
                        symmetric_kld(&a.embed_real(component_variance), &b.embed_real(component_variance))
                    }
                })
                .collect()
        })
        .collect()
}

/// Mean `D_sym` between a template whose means carry zero-mean Gaussian
/// errors of standard deviation `std` and every clean template.
pub fn perturbation_divergences(
    db: &TemplateDatabase,
    true_index: usize,
    component_variance: f64,
    std: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let t = db
        .templates()
        .get(true_index)
        .ok_or_else(|| Error::invalid("template index out of range"))?;
    let clean: Vec<GaussianSummary> = db
        .templates()
        .iter()
        .map(|u| Ok(gaussian_approx(&u.gmm(component_variance)?)))
        .collect::<Result<_>>()?;
    let base = t.gmm(component_variance)?;
    let mut rng = rng::from_seed(seed);
    let mut acc = vec![0.0; db.len()];
    for _ in 0..trials.max(1) {
        let means = base
            .means
            .iter()
            .map(|m| m.map(|v| v + std * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let noisy = Gmm::new(base.weights.clone(), means, base.covs.clone())?;
        let y = gaussian_approx(&noisy);
        for (a, z) in acc.iter_mut().zip(&clean) {
            *a += if y.dim() == z.dim() {
                symmetric_kld(&y, z)?
            } else {
                symmetric_kld(&y.embed_real(component_variance), &z.embed_real(component_variance))?
            };
        }
    }
    Ok(acc.into_iter().map(|a| a / trials.max(1) as f64).collect())
}

/// Channel between the symbol source and the classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifyChannel {
    /// Noise only.
    Awgn,
    /// Symbol-spaced multipath taps, estimated by least squares from a BPSK
    /// training prefix and removed by deconvolution before classification.
    Thz {
        taps: Vec<Complex64>,
        training_len: usize,
        deconvolution: Deconvolution,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PccConfig {
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub symbols: usize,
    pub channel: ClassifyChannel,
    pub em: EmConfig,
    /// Use the known noise variance for the templates; otherwise the
    /// hypothesis fits supply it.
    pub genie_variance: bool,
    pub seed: u64,
}

impl PccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.schemes.is_empty() || self.snr_db.is_empty() {
            return Err(Error::invalid("scheme list and SNR grid must be non-empty"));
        }
        if self.snr_db.windows(2).any(|w| w[1] <= w[0]) || self.snr_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("SNR grid must be finite and strictly increasing"));
        }
        if self.symbols < 16 {
            return Err(Error::invalid("need at least 16 symbols per trial"));
        }
        if let ClassifyChannel::Thz { taps, training_len, .. } = &self.channel {
            if taps.is_empty() {
                return Err(Error::invalid("THz channel needs at least one tap"));
            }
            TrainingBlock::new(vec![Complex64::new(1.0, 0.0); *training_len], 0).check_rank_condition(taps.len() - 1)?;
        }
        self.em.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub snr_db: f64,
    pub true_scheme: Scheme,
    pub declared: Scheme,
    pub divergences: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PccPoint {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub correct: usize,
    pub trials: usize,
}

impl PccPoint {
    pub fn pcc(&self) -> f64 {
        self.correct as f64 / self.trials as f64
    }

    /// Binomial standard error of [`PccPoint::pcc`].
    pub fn std_err(&self) -> f64 {
        let p = self.pcc();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Received symbols for one trial at noise variance `sigma2` (SNR `1/sigma2`
/// for unit-energy constellations).
pub fn simulate_symbols<R: Rng + ?Sized>(
    scheme: Scheme,
    n: usize,
    sigma2: f64,
    channel: &ClassifyChannel,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let c = waveform::constellation(scheme);
    match channel {
        ClassifyChannel::Awgn => {
            let clean = SampledSignal::new(c.random_symbols(n, rng), 1.0, 0.0)?;
            Ok(waveform::add_complex_awgn_with(&clean, sigma2.sqrt(), rng)?.into_samples())
        }
        ClassifyChannel::Thz {
            taps,
            training_len,
            deconvolution,
        } => {
            let l = taps.len() - 1;
            let bpsk = waveform::constellation(Scheme::Bpsk);
            let training = bpsk.random_symbols(*training_len, rng);
            let mut tx = training.clone();
            tx.extend(c.random_symbols(n, rng));
            let x = SampledSignal::new(tx, 1.0, 0.0)?;
            let h = SampledSignal::new(taps.clone(), 1.0, 0.0)?;
            let y = channel::convolve(&x, &h)?;
            let r = waveform::add_complex_awgn_with(&y, sigma2.sqrt(), rng)?;
            let block = TrainingBlock::new(training, 0);
            let window = &r.samples()[block.observation_range(l)];
            let est = equalize::ls_estimate(window, &block, l, LsConfig::default())?;
            let eq = equalize::deconvolve(&r, &est, *deconvolution)?;
            Ok(eq.samples()[*training_len..*training_len + n].to_vec())
        }
    }
}

/// Monte-Carlo probability of correct classification per scheme and SNR.
/// Trial `t` of cell `c` draws from stream `t` of `derive_seed(seed, c)`, so
/// results are independent of the worker count.
pub fn pcc_sweep(cfg: &PccConfig, db: &TemplateDatabase) -> Result<(Vec<PccPoint>, Vec<TrialRecord>)> {
    cfg.validate()?;
    let cells: Vec<(Scheme, f64)> = cfg
        .schemes
        .iter()
        .flat_map(|&s| cfg.snr_db.iter().map(move |&snr| (s, snr)))
        .collect();
    let tasks = cells.len() * cfg.trials;
    let records: Vec<TrialRecord> = (0..tasks)
        .into_par_iter()
        .map(|task| {
            let cell = task / cfg.trials;
            let trial = task % cfg.trials;
            let (scheme, snr_db) = cells[cell];
            let mut r = rng::stream(rng::derive_seed(cfg.seed, cell as u64), trial as u64);
            let sigma2 = 10f64.powf(-snr_db / 10.0);
            let rx = simulate_symbols(scheme, cfg.symbols, sigma2, &cfg.channel, &mut r)?;
            let variance = if cfg.genie_variance {
                TemplateVariance::Known(sigma2 / 2.0)
            } else {
                TemplateVariance::Fitted
            };
            let out = classify(&rx, db, &cfg.em, variance)?;
            Ok(TrialRecord {
                trial,
                snr_db,
                true_scheme: scheme,
                declared: out.declared,
                divergences: out.divergences,
            })
        })
        .collect::<Result<_>>()?;
    let points = cells
        .iter()
        .enumerate()
        .map(|(c, &(scheme, snr_db))| PccPoint {
            scheme,
            snr_db,
            correct: records[c * cfg.trials..(c + 1) * cfg.trials]
                .iter()
                .filter(|r| r.declared == r.true_scheme)
                .count(),
            trials: cfg.trials,
        })
        .collect();
    Ok((points, records))
}

/// Writes `trial,snr_db,true_scheme,declared_scheme,dsym_<scheme>...`.
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], db: &TemplateDatabase, mut out: W) -> Result<()> {
    write!(out, "trial,snr_db,true_scheme,declared_scheme")?;
    for s in db.schemes() {
        write!(out, ",dsym_{}", s.key())?;
    }
    writeln!(out)?;
    for r in records {
        write!(out, "{},{},{},{}", r.trial, r.snr_db, r.true_scheme, r.declared)?;
        for d in &r.divergences {
            write!(out, ",{d:.10e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
