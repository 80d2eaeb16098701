//! Monte Carlo tests against replicate ensembles, and two-diagram parameter comparison.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::diagram::{project, DataDim, ModelConfig, PersistenceDiagram};
use crate::error::{Error, Result};
use crate::estimation::{fit, FittedModel, OptimizerSettings, QuadratureSpec};
use crate::gibbs::Theta;
use crate::replication::{replicate, ChainOptions, ReplicateEnsemble, Schedule};

/// The `j` largest finite persistences, descending.
pub fn order_statistics(pd: &PersistenceDiagram, j: usize) -> Result<Vec<f64>> {
    let mut p: Vec<f64> = pd.finite_points().map(|p| p.persistence()).collect();
    if j > p.len() {
        return Err(Error::invalid(format!(
            "asked for {j} order statistics of a diagram with {} finite points",
            p.len()
        )));
    }
    p.sort_by(|a, b| b.total_cmp(a));
    p.truncate(j);
    Ok(p)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStatRow {
    pub j: usize,
    pub observed: f64,
    pub p_value: f64,
    /// Replicates with `T_j` at least the observed value.
    pub exceed: usize,
    pub q50: f64,
    pub q95: f64,
    pub q99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStatReport {
    pub n: usize,
    pub rows: Vec<OrderStatRow>,
    /// `replicate_t[j - 1]` holds `T_j` of every replicate, in ensemble order.
    pub replicate_t: Vec<Vec<f64>>,
}

impl OrderStatReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "order statistics against {} replicates", self.n);
        let _ = writeln!(
            out,
            "{:>3}  {:>12}  {:>10}  {:>12}  {:>12}  {:>12}",
            "j", "T_j", "p", "q50", "q95", "q99"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>3}  {:>12.6}  {:>10.6}  {:>12.6}  {:>12.6}  {:>12.6}",
                r.j, r.observed, r.p_value, r.q50, r.q95, r.q99
            );
        }
        out
    }
}

/// Add-one Monte Carlo p-values of the `J` largest persistences of `pd`.
pub fn order_stat_test(pd: &PersistenceDiagram, replicates: &[PersistenceDiagram], j: usize) -> Result<OrderStatReport> {
    if replicates.is_empty() {
        return Err(Error::invalid("empty replicate ensemble"));
    }
    let observed = order_statistics(pd, j)?;
    let reps: Vec<Vec<f64>> = replicates
        .iter()
        .map(|r| order_statistics(r, j))
        .collect::<Result<_>>()?;
    let n = reps.len();
    let mut replicate_t = vec![Vec::with_capacity(n); j];
    for r in &reps {
        for (k, &t) in r.iter().enumerate() {
            replicate_t[k].push(t);
        }
    }
    let rows = (0..j)
        .map(|k| {
            let mut sorted = replicate_t[k].clone();
            sorted.sort_by(f64::total_cmp);
            let exceed = sorted.iter().filter(|&&t| t >= observed[k]).count();
            OrderStatRow {
                j: k + 1,
                observed: observed[k],
                p_value: (1 + exceed) as f64 / (n + 1) as f64,
                exceed,
                q50: quantile(&sorted, 0.5),
                q95: quantile(&sorted, 0.95),
                q99: quantile(&sorted, 0.99),
            }
        })
        .collect();
    Ok(OrderStatReport { n, rows, replicate_t })
}

fn check_pvals(pvals: &[f64]) -> Result<()> {
    match pvals.iter().position(|p| !(0.0..=1.0).contains(p)) {
        Some(i) => Err(Error::invalid(format!("p-value {i} = {} is outside [0, 1]", pvals[i]))),
        None => Ok(()),
    }
}

/// Benjamini-Hochberg step-up procedure; returns rejected indices in ascending order.
pub fn bh_fdr(pvals: &[f64], alpha: f64) -> Result<Vec<usize>> {
    check_pvals(pvals)?;
    let m = pvals.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    let cutoff = (0..m)
        .rev()
        .find(|&r| pvals[idx[r]] <= (r + 1) as f64 * alpha / m as f64)
        .map_or(0, |r| r + 1);
    let mut out: Vec<usize> = idx[..cutoff].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Rejects `p <= alpha / m`.
pub fn bonferroni(pvals: &[f64], alpha: f64) -> Result<Vec<usize>> {
    check_pvals(pvals)?;
    let m = pvals.len() as f64;
    Ok((0..pvals.len()).filter(|&i| pvals[i] <= alpha / m).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    Bh,
    Bonferroni,
}

impl std::str::FromStr for Correction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bh" | "fdr" => Ok(Self::Bh),
            "bonferroni" => Ok(Self::Bonferroni),
            other => Err(Error::invalid(format!("unknown correction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSettings {
    pub k_max: usize,
    pub delta_star: f64,
    pub data_dim: DataDim,
    pub degree: usize,
    pub quadrature: QuadratureSpec,
    pub optimizer: OptimizerSettings,
    pub schedule: Schedule,
    pub chain: ChainOptions,
    pub alpha: f64,
    pub corrections: Vec<Correction>,
    /// Largest tolerated fraction of failed replicate refits.
    pub max_refit_failure: f64,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self {
            k_max: 2,
            delta_star: 1.0,
            data_dim: DataDim::Unknown,
            degree: 0,
            quadrature: QuadratureSpec::default(),
            optimizer: OptimizerSettings::default(),
            schedule: Schedule::default(),
            chain: ChainOptions::default(),
            alpha: 0.05,
            corrections: vec![Correction::Bh, Correction::Bonferroni],
            max_refit_failure: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub estimate_a: f64,
    pub estimate_b: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub z: f64,
    pub p_value: f64,
    pub reject_bh: bool,
    pub reject_bonferroni: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub parameters: Vec<ParameterRow>,
    pub bh_rejections: Option<usize>,
    pub bonferroni_rejections: Option<usize>,
    pub refits_a: usize,
    pub refits_b: usize,
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8}  {:>11}  {:>11}  {:>10}  {:>10}  {:>8}  {:>9}  {:>3}  {:>4}",
            "param", "A", "B", "se A", "se B", "z", "p", "BH", "Bonf"
        );
        let mark = |b: bool| if b { "*" } else { "" };
        for r in &self.parameters {
            let _ = writeln!(
                out,
                "{:<8}  {:>11.4}  {:>11.4}  {:>10.4}  {:>10.4}  {:>8.3}  {:>9.5}  {:>3}  {:>4}",
                r.name,
                r.estimate_a,
                r.estimate_b,
                r.se_a,
                r.se_b,
                r.z,
                r.p_value,
                mark(r.reject_bh),
                mark(r.reject_bonferroni)
            );
        }
        if let Some(n) = self.bh_rejections {
            let _ = writeln!(out, "significant at {} (BH): {n}", self.alpha);
        }
        if let Some(n) = self.bonferroni_rejections {
            let _ = writeln!(out, "significant at {} (Bonferroni): {n}", self.alpha);
        }
        out
    }
}

/// Sampling spread of a fitted model: refit on every replicate, keeping `delta`.
///
/// Returns the per-parameter standard deviation, the number of successful
/// refits and a warning when some failed.
pub fn replicate_standard_errors(
    ensemble: &ReplicateEnsemble,
    quad: &QuadratureSpec,
    optimizer: &OptimizerSettings,
    max_failure: f64,
) -> Result<(Vec<f64>, usize, Option<String>)> {
    let fitted = &ensemble.fitted;
    let settings = OptimizerSettings {
        warm_start: Some(fitted.theta.clone()),
        ..optimizer.clone()
    };
    let estimates: Vec<Option<Vec<f64>>> = ensemble
        .replicates
        .par_iter()
        .map(|pd| {
            let ppd = project(pd).ok()?;
            fit(&ppd, &fitted.config, quad, &settings).ok().map(|m| m.theta.to_vec())
        })
        .collect();
    let n = estimates.len();
    let ok: Vec<Vec<f64>> = estimates.into_iter().flatten().collect();
    let failed = n - ok.len();
    if failed as f64 > max_failure * n as f64 || ok.len() < 2 {
        return Err(Error::Numeric(format!(
            "{failed} of {n} replicate refits failed (limit {:.0}%)",
            100.0 * max_failure
        )));
    }
    let dim = ok[0].len();
    let m = ok.len() as f64;
    let se = (0..dim)
        .map(|i| {
            let mean = ok.iter().map(|v| v[i]).sum::<f64>() / m;
            (ok.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect();
    let warning = (failed > 0).then(|| format!("{failed} of {n} replicate refits failed and were excluded"));
    Ok((se, ok.len(), warning))
}

/// Fits `pd`, simulates its ensemble and returns the model with replicate standard errors.
pub fn fit_with_errors(
    pd: &PersistenceDiagram,
    settings: &CompareSettings,
) -> Result<(FittedModel, Vec<f64>, usize, Option<String>)> {
    let ppd = project(pd)?;
    let config = ModelConfig::resolve(&ppd, settings.k_max, settings.delta_star, settings.data_dim, settings.degree)?;
    let model = fit(&ppd, &config, &settings.quadrature, &settings.optimizer)?;
    let ensemble = replicate(&ppd, &model, &settings.schedule, settings.chain)?;
    let (se, n, warning) =
        replicate_standard_errors(&ensemble, &settings.quadrature, &settings.optimizer, settings.max_refit_failure)?;
    Ok((model, se, n, warning))
}

/// Per-parameter two-sample z-tests between the models of two diagrams.
pub fn parameter_compare(
    pd_a: &PersistenceDiagram,
    pd_b: &PersistenceDiagram,
    settings: &CompareSettings,
) -> Result<ComparisonReport> {
    let (a, se_a, n_a, warn_a) = fit_with_errors(pd_a, settings)?;
    let (b, se_b, n_b, warn_b) = fit_with_errors(pd_b, settings)?;
    compare_estimates(&a.theta, &se_a, &b.theta, &se_b, settings.alpha, &settings.corrections).map(|mut r| {
        r.refits_a = n_a;
        r.refits_b = n_b;
        r.warnings = [warn_a.map(|w| format!("A: {w}")), warn_b.map(|w| format!("B: {w}"))]
            .into_iter()
            .flatten()
            .collect();
        r
    })
}

/// z-tests and corrections from estimates and standard errors.
pub fn compare_estimates(
    a: &Theta,
    se_a: &[f64],
    b: &Theta,
    se_b: &[f64],
    alpha: f64,
    corrections: &[Correction],
) -> Result<ComparisonReport> {
    if a.k_max() != b.k_max() {
        return Err(Error::invalid("models have different numbers of cluster parameters"));
    }
    let normal = Normal::standard();
    let (va, vb) = (a.to_vec(), b.to_vec());
    let names = Theta::names(a.k_max());
    let mut rows: Vec<ParameterRow> = (0..va.len())
        .map(|i| {
            let diff = va[i] - vb[i];
            let se = (se_a[i].powi(2) + se_b[i].powi(2)).sqrt();
            let z = if diff == 0.0 {
                0.0
            } else if se > 0.0 {
                diff / se
            } else {
                diff.signum() * f64::INFINITY
            };
            ParameterRow {
                name: names[i].clone(),
                estimate_a: va[i],
                estimate_b: vb[i],
                se_a: se_a[i],
                se_b: se_b[i],
                z,
                p_value: (2.0 * normal.sf(z.abs())).min(1.0),
                reject_bh: false,
                reject_bonferroni: false,
            }
        })
        .collect();
    let pvals: Vec<f64> = rows.iter().map(|r| r.p_value).collect();
    let mut bh_count = None;
    let mut bonf_count = None;
    if corrections.contains(&Correction::Bh) {
        let rej = bh_fdr(&pvals, alpha)?;
        for &i in &rej {
            rows[i].reject_bh = true;
        }
        bh_count = Some(rej.len());
    }
    if corrections.contains(&Correction::Bonferroni) {
        let rej = bonferroni(&pvals, alpha)?;
        for &i in &rej {
            rows[i].reject_bonferroni = true;
        }
        bonf_count = Some(rej.len());
    }
    Ok(ComparisonReport {
        alpha,
        parameters: rows,
        bh_rejections: bh_count,
        bonferroni_rejections: bonf_count,
        refits_a: 0,
        refits_b: 0,
        warnings: Vec::new(),
    })
}
