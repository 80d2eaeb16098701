//! Maximum-pseudolikelihood fitting of the Gibbs model.
//!
//! Each point contributes its conditional density given its own fixed
//! neighbourhoods,
//!
//! ```text
//! log PL(theta) = sum_x [ -E(x | N(x)) - log Z(x) ]
//! ```
//!
//! where `E` is [`crate::gibbs::conditional_energy`] and `Z(x)` integrates
//! `exp(-E(z | N(x)))` over the half-plane. `E` is linear in `theta`, so each
//! `log Z(x)` is a log-partition function and its gradient and Hessian are
//! available in closed form from the same quadrature nodes.

mod optimize;
pub mod quadrature;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagram::{ModelConfig, ProjectedDiagram};
use crate::error::{Error, Result};
use crate::gibbs::{LocalNeighborhoods, NeighborList, Site, Theta};
use optimize::{nelder_mead, newton_maximize, NewtonOptions, SimplexOptions};
pub use quadrature::{gauss_legendre, gaussian_normalizer, QuadratureRule, QuadratureSpec};
use quadrature::{tensor_box_log_normalizer, LocalNodes};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    /// Simplex plus Newton iterations of the winning start.
    pub iterations: usize,
    /// Objective evaluations over all starts.
    pub evaluations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub simplex_size: f64,
    pub starts: usize,
    pub best_start: usize,
    /// Cluster parameters with no non-empty neighbourhood in the data; held at zero.
    #[serde(default)]
    pub unidentified: Vec<String>,
    /// Cluster parameters removed by information-criterion pruning.
    #[serde(default)]
    pub pruned: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneCriterion {
    Aic,
    Bic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Number of starts: one at the Gaussian moment estimate, the rest jittered.
    pub starts: usize,
    pub max_iterations: usize,
    pub rel_f_tol: f64,
    pub rel_x_tol: f64,
    /// Seed for the jittered starts.
    pub jitter_seed: u64,
    pub prune: Option<PruneCriterion>,
    /// Polish from this point only, falling back to the multi-start search
    /// if that fails.
    #[serde(skip)]
    pub warm_start: Option<Theta>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            starts: 5,
            max_iterations: 10_000,
            rel_f_tol: 1e-8,
            rel_x_tol: 1e-6,
            jitter_seed: 0x5eed_0001,
            prune: None,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub theta: Theta,
    pub config: ModelConfig,
    pub log_pl: f64,
    pub trace: OptimizerTrace,
    pub data_fingerprint: String,
    /// The data the model was fitted to. Not serialized; see [`FittedModel::attach`].
    #[serde(skip)]
    pub ppd_snapshot: ProjectedDiagram,
}

impl FittedModel {
    /// Mean first coordinate of the fitted data: the centre of the horizontal term.
    pub fn xbar1(&self) -> f64 {
        let pts = self.ppd_snapshot.points();
        pts.iter().map(|p| p[0]).sum::<f64>() / pts.len().max(1) as f64
    }

    /// Re-attaches the data after deserialization, checking the fingerprint.
    pub fn attach(&mut self, ppd: ProjectedDiagram) -> Result<()> {
        let fp = fingerprint(&ppd);
        if fp != self.data_fingerprint {
            return Err(Error::invalid(format!(
                "diagram fingerprint {fp} does not match the model's {}",
                self.data_fingerprint
            )));
        }
        self.ppd_snapshot = ppd;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// SHA-256 over the little-endian bytes of every coordinate.
pub fn fingerprint(ppd: &ProjectedDiagram) -> String {
    let mut h = Sha256::new();
    for p in ppd.points() {
        h.update(p[0].to_le_bytes());
        h.update(p[1].to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// The log-pseudolikelihood of one data set, with its quadrature geometry
/// built once.
#[derive(Debug, Clone)]
pub struct PseudoLikelihood {
    k_max: usize,
    delta: f64,
    xbar1: f64,
    n_points: usize,
    /// Sum over points of `[(x1 - m)^2, x2^2, L_1(x), ..., L_K(x)]`.
    data_stat: Vec<f64>,
    neighborhoods: Vec<LocalNeighborhoods>,
    nodes: Vec<LocalNodes>,
    /// Points whose neighbourhoods are all empty: their normalizer is analytic.
    n_isolated: usize,
    /// `identified[k - 1]`: some point has a non-empty order-`k` neighbourhood.
    identified: Vec<bool>,
    quad: QuadratureSpec,
}

impl PseudoLikelihood {
    pub fn new(ppd: &ProjectedDiagram, config: &ModelConfig, quad: &QuadratureSpec) -> Result<Self> {
        config.validate()?;
        let n = ppd.len();
        if n < 2 {
            return Err(Error::invalid(format!(
                "pseudolikelihood needs at least 2 points, got {n}"
            )));
        }
        let k_max = config.k_max;
        let delta = config.delta;
        let pts = ppd.points();
        let xbar1 = pts.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let mut data_stat = vec![0.0; 2 + k_max];
        let mut identified = vec![false; k_max];
        let mut neighborhoods = Vec::with_capacity(n);
        for (i, &x) in pts.iter().enumerate() {
            let list = NeighborList::search(pts, x, Some(i), delta, k_max);
            data_stat[0] += (x[0] - xbar1).powi(2);
            data_stat[1] += x[1] * x[1];
            for k in 1..=k_max {
                data_stat[1 + k] += list.cluster_length(k);
                identified[k - 1] |= list.order(k).is_some();
            }
            neighborhoods.push(LocalNeighborhoods::from_list(&list, pts, k_max));
        }
        let nodes: Vec<LocalNodes> = if quad.rule == QuadratureRule::LocalCorrection {
            neighborhoods
                .par_iter()
                .filter(|nb| nb.active_orders() > 0)
                .map(|nb| LocalNodes::build(nb, xbar1, delta, quad))
                .collect()
        } else {
            Vec::new()
        };
        let n_isolated = neighborhoods.iter().filter(|nb| nb.active_orders() == 0).count();
        Ok(Self {
            k_max,
            delta,
            xbar1,
            n_points: n,
            data_stat,
            neighborhoods,
            nodes,
            n_isolated,
            identified,
            quad: *quad,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn xbar1(&self) -> f64 {
        self.xbar1
    }

    /// Which cluster parameters the data can inform.
    pub fn identified(&self) -> &[bool] {
        &self.identified
    }

    /// Sufficient statistics of the data, `[sigma_H^2, sigma_V^2, L_1, ..., L_K]`.
    pub fn data_statistics(&self) -> &[f64] {
        &self.data_stat
    }

    fn check(&self, theta: &Theta) -> Result<()> {
        if theta.k_max() != self.k_max {
            return Err(Error::invalid(format!(
                "theta has {} cluster parameters but K = {}",
                theta.k_max(),
                self.k_max
            )));
        }
        theta.check_normalizable()
    }

    fn linear_term(&self, theta: &Theta) -> f64 {
        theta
            .to_vec()
            .iter()
            .zip(&self.data_stat)
            .map(|(t, s)| t * s)
            .sum()
    }

    pub fn value(&self, theta: &Theta) -> Result<f64> {
        self.check(theta)?;
        let zg = gaussian_normalizer(theta.theta_h, theta.theta_v);
        let log_z: f64 = match self.quad.rule {
            QuadratureRule::LocalCorrection => {
                let mut total = self.n_isolated as f64 * zg.ln();
                for nodes in &self.nodes {
                    let z = zg + nodes.correction(theta, None, None);
                    if !(z > 0.0) {
                        return Err(Error::Numeric(format!(
                            "local normalizer is not positive at theta = {:?}",
                            theta.to_vec()
                        )));
                    }
                    total += z.ln();
                }
                total
            }
            QuadratureRule::TensorBox => self
                .neighborhoods
                .iter()
                .map(|nb| {
                    if nb.active_orders() == 0 {
                        zg.ln()
                    } else {
                        tensor_box_log_normalizer(nb, self.xbar1, theta, self.delta, &self.quad)
                    }
                })
                .sum(),
        };
        Ok(-self.linear_term(theta) - log_z)
    }

    /// Value, gradient and row-major Hessian in the natural parameters
    /// `[theta_H, theta_V, theta_1, ...]`.
    ///
    /// Exact derivatives of the discretized objective for the local rule;
    /// central differences for the tensor rule.
    pub fn value_grad_hess(&self, theta: &Theta) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.check(theta)?;
        if self.quad.rule == QuadratureRule::TensorBox {
            return self.numeric_grad_hess(theta);
        }
        let dim = 2 + self.k_max;
        let (th, tv) = (theta.theta_h, theta.theta_v);
        let zg = gaussian_normalizer(th, tv);
        let zg_grad = [-0.5 * zg / th, -0.5 * zg / tv];
        let zg_hess = [0.75 * zg / (th * th), 0.25 * zg / (th * tv), 0.75 * zg / (tv * tv)];

        let mut value = -self.linear_term(theta);
        let mut grad: Vec<f64> = self.data_stat.iter().map(|s| -s).collect();
        let mut hess = vec![0.0; dim * dim];

        // Isolated points: log Z = log Zg, a function of theta_H and theta_V alone.
        let ni = self.n_isolated as f64;
        value -= ni * zg.ln();
        grad[0] += ni * 0.5 / th;
        grad[1] += ni * 0.5 / tv;
        hess[0] -= ni * 0.5 / (th * th);
        hess[dim + 1] -= ni * 0.5 / (tv * tv);

        let mut zgrad = vec![0.0; dim];
        let mut zhess = vec![0.0; dim * dim];
        for nodes in &self.nodes {
            zgrad.iter_mut().for_each(|v| *v = 0.0);
            zhess.iter_mut().for_each(|v| *v = 0.0);
            let z = zg + nodes.correction(theta, Some(&mut zgrad), Some(&mut zhess));
            if !(z > 0.0) {
                return Err(Error::Numeric("local normalizer is not positive".into()));
            }
            zgrad[0] += zg_grad[0];
            zgrad[1] += zg_grad[1];
            zhess[0] += zg_hess[0];
            zhess[1] += zg_hess[1];
            zhess[dim] += zg_hess[1];
            zhess[dim + 1] += zg_hess[2];
            value -= z.ln();
            for i in 0..dim {
                grad[i] -= zgrad[i] / z;
                for j in 0..dim {
                    hess[i * dim + j] -= zhess[i * dim + j] / z - zgrad[i] * zgrad[j] / (z * z);
                }
            }
        }
        Ok((value, grad, hess))
    }

    fn numeric_grad_hess(&self, theta: &Theta) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let x = theta.to_vec();
        let dim = x.len();
        let f = |v: &[f64]| self.value(&Theta::from_slice(v));
        let f0 = f(&x)?;
        let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1e-2)).collect();
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        let shifted = |i: usize, si: f64, j: usize, sj: f64| {
            let mut v = x.clone();
            v[i] += si * h[i];
            v[j] += sj * h[j];
            f(&v)
        };
        for i in 0..dim {
            let fp = shifted(i, 1.0, i, 0.0)?;
            let fm = shifted(i, -1.0, i, 0.0)?;
            grad[i] = (fp - fm) / (2.0 * h[i]);
            hess[i * dim + i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
            for j in 0..i {
                let v = (shifted(i, 1.0, j, 1.0)? - shifted(i, 1.0, j, -1.0)?
                    - shifted(i, -1.0, j, 1.0)?
                    + shifted(i, -1.0, j, -1.0)?)
                    / (4.0 * h[i] * h[j]);
                hess[i * dim + j] = v;
                hess[j * dim + i] = v;
            }
        }
        Ok((f0, grad, hess))
    }
}

/// `log` of the local normalizer of configuration point `index`.
pub fn local_log_normalizer(
    index: usize,
    theta: &Theta,
    config: &ModelConfig,
    ppd: &ProjectedDiagram,
    quad: &QuadratureSpec,
) -> Result<f64> {
    theta.check_normalizable()?;
    config.validate()?;
    let nb = LocalNeighborhoods::at(Site::Member(index), ppd, config.delta, config.k_max)?;
    let xbar1 = crate::gibbs::spread_terms(ppd)?.xbar1;
    let zg = gaussian_normalizer(theta.theta_h, theta.theta_v);
    if nb.active_orders() == 0 {
        return Ok(zg.ln());
    }
    match quad.rule {
        QuadratureRule::LocalCorrection => {
            let nodes = LocalNodes::build(&nb, xbar1, config.delta, quad);
            let z = zg + nodes.correction(theta, None, None);
            if z > 0.0 {
                Ok(z.ln())
            } else {
                Err(Error::Numeric("local normalizer is not positive".into()))
            }
        }
        QuadratureRule::TensorBox => Ok(tensor_box_log_normalizer(&nb, xbar1, theta, config.delta, quad)),
    }
}

pub fn log_pseudolikelihood(
    theta: &Theta,
    ppd: &ProjectedDiagram,
    config: &ModelConfig,
    quad: &QuadratureSpec,
) -> Result<f64> {
    PseudoLikelihood::new(ppd, config, quad)?.value(theta)
}

/// Closed-form maximizer when every cluster parameter is zero.
pub fn gaussian_moment_estimate(ppd: &ProjectedDiagram, k_max: usize) -> Result<Theta> {
    let s = crate::gibbs::spread_terms(ppd)?;
    let n = ppd.len() as f64;
    if s.sigma_h_sq <= 0.0 || s.sigma_v_sq <= 0.0 {
        return Err(Error::invalid("degenerate diagram: zero horizontal or vertical spread"));
    }
    Ok(Theta::new(n / (2.0 * s.sigma_h_sq), n / (2.0 * s.sigma_v_sq), vec![0.0; k_max]))
}

struct StartOutcome {
    theta: Theta,
    log_pl: f64,
    iterations: usize,
    evals: usize,
    converged: bool,
    grad_norm: f64,
    simplex_size: f64,
}

/// Which coordinates of `[theta_H, theta_V, theta_1..]` are free.
struct Layout {
    free_k: Vec<usize>,
    k_max: usize,
}

impl Layout {
    /// Natural parameters from the search vector `(log theta_H, log theta_V, free theta_k)`.
    fn theta_from_search(&self, u: &[f64]) -> Theta {
        let mut tk = vec![0.0; self.k_max];
        for (slot, &k) in self.free_k.iter().enumerate() {
            tk[k] = u[2 + slot];
        }
        Theta::new(u[0].exp(), u[1].exp(), tk)
    }

    fn theta_from_natural(&self, v: &[f64]) -> Theta {
        let mut tk = vec![0.0; self.k_max];
        for (slot, &k) in self.free_k.iter().enumerate() {
            tk[k] = v[2 + slot];
        }
        Theta::new(v[0], v[1], tk)
    }

    fn natural(&self, theta: &Theta) -> Vec<f64> {
        let mut v = vec![theta.theta_h, theta.theta_v];
        v.extend(self.free_k.iter().map(|&k| theta.theta_k[k]));
        v
    }

    fn restrict(&self, grad: &[f64], hess: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let full = 2 + self.k_max;
        let idx: Vec<usize> = [0, 1].into_iter().chain(self.free_k.iter().map(|k| k + 2)).collect();
        let g = idx.iter().map(|&i| grad[i]).collect();
        let h = idx
            .iter()
            .flat_map(|&i| idx.iter().map(move |&j| hess[i * full + j]))
            .collect();
        (g, h)
    }
}

fn run_start(
    pl: &PseudoLikelihood,
    layout: &Layout,
    start: &Theta,
    settings: &OptimizerSettings,
    delta: f64,
    with_simplex: bool,
) -> Option<StartOutcome> {
    let n = pl.n_points() as f64;
    let mut evals = 0;
    let mut iterations = 0;
    let mut simplex_size = 0.0;
    let mut theta = start.clone();

    if with_simplex {
        let mut u0 = vec![start.theta_h.ln(), start.theta_v.ln()];
        u0.extend(layout.free_k.iter().map(|&k| start.theta_k[k]));
        let mut steps = vec![0.5, 0.5];
        steps.extend(layout.free_k.iter().map(|_| 0.5 / delta));
        let objective = |u: &[f64]| -> f64 {
            pl.value(&layout.theta_from_search(u))
                .map(|v| -v / n)
                .unwrap_or(f64::INFINITY)
        };
        let r = nelder_mead(
            objective,
            &u0,
            &steps,
            SimplexOptions {
                max_evals: (settings.max_iterations / 2).max(50),
                x_tol: 1e-3,
                f_tol: 1e-9,
            },
        );
        evals += r.evals;
        iterations += r.iterations;
        simplex_size = r.size;
        theta = layout.theta_from_search(&r.x);
    }

    let remaining = settings.max_iterations.saturating_sub(iterations).max(1);
    let newton = newton_maximize(
        |v| {
            let th = layout.theta_from_natural(v);
            let (f, g, h) = pl.value_grad_hess(&th).ok()?;
            let (g, h) = layout.restrict(&g, &h);
            Some((f, g, h))
        },
        |v| v[0] > 0.0 && v[1] > 0.0 && v.iter().all(|x| x.is_finite()),
        &layout.natural(&theta),
        NewtonOptions {
            max_iterations: remaining.min(500),
            rel_f_tol: settings.rel_f_tol,
            rel_x_tol: settings.rel_x_tol,
        },
    )?;
    Some(StartOutcome {
        theta: layout.theta_from_natural(&newton.x),
        log_pl: newton.f,
        iterations: iterations + newton.iterations,
        evals: evals + newton.evals,
        converged: newton.converged,
        grad_norm: newton.grad_norm,
        simplex_size,
    })
}

fn jittered_starts(base: &Theta, layout: &Layout, count: usize, seed: u64, delta: f64) -> Vec<Theta> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![base.clone()];
    for _ in 1..count {
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut t = base.clone();
        t.theta_h *= (0.5 * z()).exp();
        t.theta_v *= (0.5 * z()).exp();
        for &k in &layout.free_k {
            t.theta_k[k] = z() / delta;
        }
        out.push(t);
    }
    out
}

fn fit_layout(
    pl: &PseudoLikelihood,
    ppd: &ProjectedDiagram,
    config: &ModelConfig,
    settings: &OptimizerSettings,
    layout: &Layout,
) -> Result<(Theta, f64, OptimizerTrace)> {
    let names = Theta::names(config.k_max);
    let unidentified: Vec<String> = (0..config.k_max)
        .filter(|k| !pl.identified()[*k])
        .map(|k| names[k + 2].clone())
        .collect();

    if let Some(warm) = &settings.warm_start {
        if warm.k_max() == config.k_max && warm.check_normalizable().is_ok() {
            let mut w = warm.clone();
            for k in 0..config.k_max {
                if !layout.free_k.contains(&k) {
                    w.theta_k[k] = 0.0;
                }
            }
            if let Some(out) = run_start(pl, layout, &w, settings, config.delta, false) {
                if out.converged {
                    let trace = OptimizerTrace {
                        iterations: out.iterations,
                        evaluations: out.evals,
                        converged: true,
                        gradient_norm: out.grad_norm,
                        simplex_size: 0.0,
                        starts: 1,
                        best_start: 0,
                        unidentified,
                        pruned: Vec::new(),
                    };
                    return Ok((out.theta, out.log_pl, trace));
                }
            }
        }
    }

    let base = gaussian_moment_estimate(ppd, config.k_max)?;
    let starts = jittered_starts(&base, layout, settings.starts.max(1), settings.jitter_seed, config.delta);
    let outcomes: Vec<Option<StartOutcome>> = starts
        .par_iter()
        .map(|s| run_start(pl, layout, s, settings, config.delta, true))
        .collect();
    let evaluations: usize = outcomes.iter().flatten().map(|o| o.evals).sum();
    let (best_start, best) = outcomes
        .into_iter()
        .enumerate()
        .filter_map(|(i, o)| o.map(|o| (i, o)))
        .filter(|(_, o)| o.log_pl.is_finite())
        .fold(None::<(usize, StartOutcome)>, |acc, (i, o)| match acc {
            Some((j, b)) if b.log_pl >= o.log_pl => Some((j, b)),
            _ => Some((i, o)),
        })
        .ok_or_else(|| Error::Numeric("no optimizer start produced a finite pseudolikelihood".into()))?;
    let trace = OptimizerTrace {
        iterations: best.iterations,
        evaluations,
        converged: best.converged,
        gradient_norm: best.grad_norm,
        simplex_size: best.simplex_size,
        starts: starts.len(),
        best_start,
        unidentified,
        pruned: Vec::new(),
    };
    Ok((best.theta, best.log_pl, trace))
}

/// Maximum-pseudolikelihood estimate of `theta`.
pub fn fit(
    ppd: &ProjectedDiagram,
    config: &ModelConfig,
    quad: &QuadratureSpec,
    settings: &OptimizerSettings,
) -> Result<FittedModel> {
    config.validate()?;
    let n = ppd.len();
    if n < config.k_max + 2 {
        return Err(Error::invalid(format!(
            "need at least K + 2 = {} points to fit, got {n}",
            config.k_max + 2
        )));
    }
    let pts = ppd.points();
    if pts.iter().all(|p| p[1] == pts[0][1]) {
        return Err(Error::Numeric("degenerate diagram: all persistences are equal".into()));
    }
    if pts.iter().all(|p| p[0] == pts[0][0]) {
        return Err(Error::Numeric("degenerate diagram: all births are equal".into()));
    }
    let pl = PseudoLikelihood::new(ppd, config, quad)?;
    let free_k: Vec<usize> = (0..config.k_max).filter(|&k| pl.identified()[k]).collect();
    let layout = Layout {
        free_k,
        k_max: config.k_max,
    };
    let (mut theta, mut log_pl, mut trace) = fit_layout(&pl, ppd, config, settings, &layout)?;

    if let Some(criterion) = settings.prune {
        let penalty = |p: usize| match criterion {
            PruneCriterion::Aic => 2.0 * p as f64,
            PruneCriterion::Bic => p as f64 * (n as f64).ln(),
        };
        let mut free = layout.free_k.clone();
        let names = Theta::names(config.k_max);
        for k in (0..config.k_max).rev() {
            let Some(pos) = free.iter().position(|&f| f == k) else {
                continue;
            };
            let mut reduced = free.clone();
            reduced.remove(pos);
            let smaller = Layout {
                free_k: reduced.clone(),
                k_max: config.k_max,
            };
            let mut s = settings.clone();
            s.warm_start = Some(theta.clone());
            let (t2, l2, tr2) = fit_layout(&pl, ppd, config, &s, &smaller)?;
            if tr2.converged && -2.0 * l2 + penalty(2 + reduced.len()) < -2.0 * log_pl + penalty(2 + free.len()) {
                let mut pruned = trace.pruned.clone();
                pruned.push(names[k + 2].clone());
                theta = t2;
                log_pl = l2;
                trace = OptimizerTrace { pruned, ..tr2 };
                free = reduced;
            }
        }
    }

    if !trace.converged {
        return Err(Error::NonConvergence {
            iterations: trace.iterations,
            trace: Box::new(trace),
        });
    }
    Ok(FittedModel {
        theta,
        config: *config,
        log_pl,
        trace,
        data_fingerprint: fingerprint(ppd),
        ppd_snapshot: ppd.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::DataDim;
    use crate::gibbs::conditional_energy;
    use rand::Rng;

    fn config(k: usize, delta: f64) -> ModelConfig {
        ModelConfig::with_delta(k, 1.0, DataDim::Unknown, 0, delta).unwrap()
    }

    /// Analytic Gaussian part plus a midpoint rule for the cluster correction
    /// on the square around the nearest neighbour. Outside that square the
    /// cluster terms vanish.
    fn rectangle_log_normalizer(ppd: &ProjectedDiagram, i: usize, theta: &Theta, cfg: &ModelConfig) -> f64 {
        let nb = LocalNeighborhoods::at(Site::Member(i), ppd, cfg.delta, cfg.k_max).unwrap();
        let pts = ppd.points();
        let m = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
        let zg = gaussian_normalizer(theta.theta_h, theta.theta_v);
        let Some(&y1) = nb.order(1).first() else {
            return zg.ln();
        };
        let gauss = Theta::new(theta.theta_h, theta.theta_v, vec![0.0; cfg.k_max]);
        let n = 2000;
        let d = cfg.delta;
        let h = 2.0 * d / n as f64;
        let mut total = 0.0;
        for a in 0..n {
            let z1 = y1[0] - d + (a as f64 + 0.5) * h;
            for b in 0..n {
                let z2 = y1[1] - d + (b as f64 + 0.5) * h;
                if z2 < 0.0 {
                    continue;
                }
                let full = conditional_energy([z1, z2], &nb, m, theta, d);
                let base = conditional_energy([z1, z2], &nb, m, &gauss, d);
                total += (-full).exp() - (-base).exp();
            }
        }
        (zg + total * h * h).ln()
    }

    fn clustered() -> ProjectedDiagram {
        ProjectedDiagram::new(vec![
            [0.0, 0.3],
            [0.22, 0.41],
            [0.1, 0.1],
            [0.9, 0.5],
            [-0.6, 0.2],
            [1.5, 0.05],
            [0.3, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn isolated_normalizer_is_gaussian() {
        let ppd = ProjectedDiagram::new(vec![[0.0, 1.0], [10.0, 2.0]]).unwrap();
        let cfg = config(1, 0.5);
        let spec = QuadratureSpec::default();
        let v = local_log_normalizer(0, &Theta::new(1.0, 1.0, vec![3.0]), &cfg, &ppd, &spec).unwrap();
        assert!((v - (std::f64::consts::PI / 2.0).ln()).abs() < 1e-12);
        assert!((v - 0.45158).abs() < 1e-5);
        let v = local_log_normalizer(1, &Theta::new(2.0, 2.0, vec![3.0]), &cfg, &ppd, &spec).unwrap();
        assert!((v + 0.24157).abs() < 1e-5);
    }

    #[test]
    fn local_rule_matches_rectangle_reference() {
        let ppd = clustered();
        let cfg = config(3, 0.45);
        let spec = QuadratureSpec::default();
        for theta in [
            Theta::new(1.0, 1.0, vec![2.0, -1.0, 0.5]),
            Theta::new(3.0, 0.5, vec![-4.0, 1.0, 2.0]),
        ] {
            for i in [0, 2, 5] {
                let got = local_log_normalizer(i, &theta, &cfg, &ppd, &spec).unwrap();
                let want = rectangle_log_normalizer(&ppd, i, &theta, &cfg);
                assert!(
                    (got - want).abs() <= 1e-4 * want.abs().max(1.0),
                    "point {i}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn gaussian_only_log_pl_is_closed_form() {
        let ppd = clustered();
        let cfg = config(2, 0.3);
        let theta = Theta::new(1.7, 0.8, vec![0.0, 0.0]);
        let s = crate::gibbs::spread_terms(&ppd).unwrap();
        let n = ppd.len() as f64;
        let want = -1.7 * s.sigma_h_sq - 0.8 * s.sigma_v_sq - n * gaussian_normalizer(1.7, 0.8).ln();
        let got = log_pseudolikelihood(&theta, &ppd, &cfg, &QuadratureSpec::default()).unwrap();
        assert!((got - want).abs() < 1e-9 * want.abs(), "{got} vs {want}");
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let ppd = clustered();
        let cfg = config(3, 0.45);
        let pl = PseudoLikelihood::new(&ppd, &cfg, &QuadratureSpec::default()).unwrap();
        let theta = Theta::new(1.3, 2.1, vec![1.5, -0.7, 0.4]);
        let (f0, g, h) = pl.value_grad_hess(&theta).unwrap();
        assert!((f0 - pl.value(&theta).unwrap()).abs() < 1e-12 * f0.abs());
        let x = theta.to_vec();
        let dim = x.len();
        let eps = 1e-5;
        for i in 0..dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += eps;
            xm[i] -= eps;
            let (fp, gp, _) = pl.value_grad_hess(&Theta::from_slice(&xp)).unwrap();
            let (fm, gm, _) = pl.value_grad_hess(&Theta::from_slice(&xm)).unwrap();
            let num = (fp - fm) / (2.0 * eps);
            assert!((num - g[i]).abs() <= 1e-3 * g[i].abs().max(1.0), "grad {i}: {num} vs {}", g[i]);
            for j in 0..dim {
                let num = (gp[j] - gm[j]) / (2.0 * eps);
                let an = h[i * dim + j];
                assert!((num - an).abs() <= 1e-3 * an.abs().max(1.0), "hess {i},{j}: {num} vs {an}");
            }
        }
        // Concave in the natural parameters.
        let m = nalgebra::DMatrix::from_row_slice(dim, dim, &h).map(|v| -v);
        assert!(m.cholesky().is_some());
    }

    #[test]
    fn tensor_rule_agrees_on_smooth_case() {
        // With a wide interaction disc the tensor grid resolves the clusters too.
        let ppd = clustered();
        let cfg = config(1, 2.0);
        let theta = Theta::new(1.0, 1.0, vec![0.3]);
        let a = log_pseudolikelihood(&theta, &ppd, &cfg, &QuadratureSpec::default()).unwrap();
        let b = log_pseudolikelihood(&theta, &ppd, &cfg, &QuadratureSpec::tensor_box()).unwrap();
        assert!((a - b).abs() < 1e-2 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn log_pl_is_translation_invariant_in_birth() {
        let ppd = clustered();
        let shifted = ProjectedDiagram::new(ppd.points().iter().map(|p| [p[0] + 12.5, p[1]]).collect()).unwrap();
        let cfg = config(2, 0.45);
        let theta = Theta::new(1.1, 0.9, vec![1.0, -0.5]);
        let a = log_pseudolikelihood(&theta, &ppd, &cfg, &QuadratureSpec::default()).unwrap();
        let b = log_pseudolikelihood(&theta, &shifted, &cfg, &QuadratureSpec::default()).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn isolated_points_fit_to_moment_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f64; 2]> = (0..30)
            .map(|i| [i as f64 * 10.0 + rng.random_range(0.0..1.0), rng.random_range(0.5..20.0)])
            .collect();
        let ppd = ProjectedDiagram::new(pts).unwrap();
        let cfg = config(2, 0.1);
        let fitted = fit(&ppd, &cfg, &QuadratureSpec::default(), &OptimizerSettings::default()).unwrap();
        let want = gaussian_moment_estimate(&ppd, 2).unwrap();
        assert!((fitted.theta.theta_h / want.theta_h - 1.0).abs() < 1e-5);
        assert!((fitted.theta.theta_v / want.theta_v - 1.0).abs() < 1e-5);
        assert_eq!(fitted.theta.theta_k, vec![0.0, 0.0]);
        assert_eq!(fitted.trace.unidentified, vec!["theta_1".to_string(), "theta_2".to_string()]);
    }

    #[test]
    fn fit_recovers_a_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 2]> = (0..120)
            .map(|_| [rng.random_range(0.0..4.0), rng.random_range(0.0..2.0)])
            .collect();
        let ppd = ProjectedDiagram::new(pts).unwrap();
        let cfg = ModelConfig::resolve(&ppd, 3, 1.0, DataDim::Unknown, 0).unwrap();
        let spec = QuadratureSpec::default();
        let fitted = fit(&ppd, &cfg, &spec, &OptimizerSettings::default()).unwrap();
        assert!(fitted.trace.converged);
        let pl = PseudoLikelihood::new(&ppd, &cfg, &spec).unwrap();
        let (_, g, _) = pl.value_grad_hess(&fitted.theta).unwrap();
        let scale: f64 = pl.data_statistics().iter().map(|s| s.abs()).fold(1.0, f64::max);
        assert!(g.iter().all(|v| v.abs() < 1e-4 * scale), "{g:?}");
        // Any perturbation lowers the objective.
        let x = fitted.theta.to_vec();
        for i in 0..x.len() {
            for s in [-1e-2, 1e-2] {
                let mut y = x.clone();
                y[i] *= 1.0 + s;
                if let Ok(v) = pl.value(&Theta::from_slice(&y)) {
                    assert!(v <= fitted.log_pl + 1e-9 * fitted.log_pl.abs());
                }
            }
        }
        // Warm start lands at the same point.
        let settings = OptimizerSettings {
            warm_start: Some(Theta::new(x[0] * 1.1, x[1] * 0.9, x[2..].to_vec())),
            ..Default::default()
        };
        let again = fit(&ppd, &cfg, &spec, &settings).unwrap();
        for (a, b) in again.theta.to_vec().iter().zip(&x) {
            assert!((a - b).abs() < 1e-4 * b.abs().max(1.0));
        }
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        let spec = QuadratureSpec::default();
        let s = OptimizerSettings::default();
        let flat = ProjectedDiagram::new(vec![[0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [3.0, 1.0]]).unwrap();
        assert!(fit(&flat, &config(1, 0.5), &spec, &s).is_err());
        let few = ProjectedDiagram::new(vec![[0.0, 1.0], [1.0, 2.0]]).unwrap();
        assert!(fit(&few, &config(1, 0.5), &spec, &s).is_err());
        let column = ProjectedDiagram::new(vec![[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]]).unwrap();
        assert!(fit(&column, &config(1, 0.5), &spec, &s).is_err());
    }

    #[test]
    fn fingerprint_detects_changes() {
        let ppd = clustered();
        let cfg = config(1, 0.45);
        let mut model = fit(&ppd, &cfg, &QuadratureSpec::default(), &OptimizerSettings::default()).unwrap();
        let json = model.to_json().unwrap();
        let mut back: FittedModel = serde_json::from_str(&json).unwrap();
        back.attach(ppd.clone()).unwrap();
        assert_eq!(back, model);
        let other = ProjectedDiagram::new(vec![[0.0, 1.0], [1.0, 2.0]]).unwrap();
        assert!(model.attach(other).is_err());
    }
}
