//! Metropolis-Hastings simulation of replicate diagrams from a fitted model.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagram::{read_diagram_csv, unproject, write_diagram_csv, ModelConfig, PersistenceDiagram, ProjectedDiagram};
use crate::error::{Error, Result};
use crate::estimation::{fingerprint, FittedModel};
use crate::gibbs::{conditional_energy, LocalNeighborhoods, NeighborList, Point, Theta};

/// Mean and covariance of the folded-Gaussian proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalMoments {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

impl ProposalMoments {
    /// Empirical mean and (1/N) covariance of the points.
    pub fn from_points(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("proposal moments of an empty configuration"));
        }
        let mut acc = MomentSums::new(points[0]);
        for &p in points {
            acc.add(p);
        }
        Ok(acc.moments())
    }

    /// Adds `eps * I` with `eps = 1e-9 * trace` when the covariance is singular.
    fn regularized(mut self) -> Self {
        let c = &mut self.covariance;
        c[0][0] = c[0][0].max(0.0);
        c[1][1] = c[1][1].max(0.0);
        let tr = c[0][0] + c[1][1];
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        if det <= 1e-12 * tr * tr || tr == 0.0 {
            let eps = if tr > 0.0 { 1e-9 * tr } else { 1e-9 };
            c[0][0] += eps;
            c[1][1] += eps;
        }
        self
    }

    /// Lower Cholesky factor `(l11, l21, l22)` of the regularized covariance.
    fn cholesky(&self) -> (f64, f64, f64) {
        let c = &self.covariance;
        let l11 = c[0][0].sqrt();
        let l21 = c[1][0] / l11;
        let l22 = (c[1][1] - l21 * l21).max(0.0).sqrt();
        (l11, l21, l22)
    }
}

/// Running sums of a configuration, shifted for numerical stability.
#[derive(Debug, Clone, Copy)]
struct MomentSums {
    shift: Point,
    n: f64,
    s: [f64; 2],
    ss: [f64; 3],
}

impl MomentSums {
    fn new(shift: Point) -> Self {
        Self {
            shift,
            n: 0.0,
            s: [0.0; 2],
            ss: [0.0; 3],
        }
    }

    fn add(&mut self, p: Point) {
        self.update(p, 1.0);
    }

    fn update(&mut self, p: Point, sign: f64) {
        let (u, v) = (p[0] - self.shift[0], p[1] - self.shift[1]);
        self.n += sign;
        self.s[0] += sign * u;
        self.s[1] += sign * v;
        self.ss[0] += sign * u * u;
        self.ss[1] += sign * u * v;
        self.ss[2] += sign * v * v;
    }

    fn replaced(&self, old: Point, new: Point) -> Self {
        let mut out = *self;
        out.update(old, -1.0);
        out.update(new, 1.0);
        out
    }

    fn mean1(&self) -> f64 {
        self.shift[0] + self.s[0] / self.n
    }

    fn moments(&self) -> ProposalMoments {
        let n = self.n;
        let (mu, mv) = (self.s[0] / n, self.s[1] / n);
        let cuu = self.ss[0] / n - mu * mu;
        let cuv = self.ss[1] / n - mu * mv;
        let cvv = self.ss[2] / n - mv * mv;
        ProposalMoments {
            mean: [self.shift[0] + mu, self.shift[1] + mv],
            covariance: [[cuu, cuv], [cuv, cvv]],
        }
        .regularized()
    }
}

/// Draws `(g1, |g2|)` with `(g1, g2)` Gaussian under `moments`.
pub fn proposal_sample<R: Rng + ?Sized>(moments: &ProposalMoments, rng: &mut R) -> Point {
    let m = moments.regularized();
    let (l11, l21, l22) = m.cholesky();
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    [m.mean[0] + l11 * a, (m.mean[1] + l21 * a + l22 * b).abs()]
}

/// Folded density `phi(z1, z2) + phi(z1, -z2)` on `z2 >= 0`, zero below.
pub fn proposal_density(z: Point, moments: &ProposalMoments) -> f64 {
    if z[1] < 0.0 {
        return 0.0;
    }
    let m = moments.regularized();
    let c = &m.covariance;
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let phi = |x: f64, y: f64| {
        let (dx, dy) = (x - m.mean[0], y - m.mean[1]);
        let q = (c[1][1] * dx * dx - 2.0 * c[0][1] * dx * dy + c[0][0] * dy * dy) / det;
        (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
    };
    phi(z[0], z[1]) + phi(z[0], -z[1])
}

/// Metropolis-Hastings acceptance probability for moving member `index` to `x_star`.
///
/// Both energies use the neighbourhoods of the current point, so the local
/// normalizer cancels. `xbar1` centres the horizontal term.
#[allow(clippy::too_many_arguments)]
pub fn acceptance_ratio(
    index: usize,
    x_star: Point,
    ppd: &ProjectedDiagram,
    theta: &Theta,
    config: &ModelConfig,
    xbar1: f64,
    moments_now: &ProposalMoments,
    moments_after: &ProposalMoments,
) -> Result<f64> {
    let pts = ppd.points();
    let x = *pts
        .get(index)
        .ok_or_else(|| Error::invalid(format!("member index {index} out of range")))?;
    let list = NeighborList::search(pts, x, Some(index), config.delta, config.k_max);
    let nb = LocalNeighborhoods::from_list(&list, pts, config.k_max);
    let e_now = conditional_energy(x, &nb, xbar1, theta, config.delta);
    let e_star = conditional_energy(x_star, &nb, xbar1, theta, config.delta);
    let q_back = proposal_density(x, moments_after);
    let q_fwd = proposal_density(x_star, moments_now);
    Ok(((e_now - e_star).exp() * q_back / q_fwd).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepOrder {
    #[default]
    Sequential,
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterMode {
    /// Centre the horizontal term at the mean of the starting configuration.
    #[default]
    Frozen,
    /// Recompute the mean from the current configuration at every evaluation.
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainOptions {
    pub order: SweepOrder,
    pub center: CenterMode,
}

/// Uniform bucket grid with cell size `delta` for neighbour queries.
#[derive(Debug, Clone)]
struct CellGrid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl CellGrid {
    fn new(points: &[Point], cell: f64) -> Self {
        let mut g = Self {
            cell,
            buckets: HashMap::new(),
        };
        for (i, &p) in points.iter().enumerate() {
            g.buckets.entry(g.key(p)).or_default().push(i);
        }
        g
    }

    fn key(&self, p: Point) -> (i64, i64) {
        ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64)
    }

    fn relocate(&mut self, i: usize, from: Point, to: Point) {
        let (a, b) = (self.key(from), self.key(to));
        if a == b {
            return;
        }
        if let Some(v) = self.buckets.get_mut(&a) {
            if let Some(pos) = v.iter().position(|&j| j == i) {
                v.swap_remove(pos);
            }
            if v.is_empty() {
                self.buckets.remove(&a);
            }
        }
        self.buckets.entry(b).or_default().push(i);
    }

    fn candidates(&self, p: Point, out: &mut Vec<usize>) {
        out.clear();
        let (cx, cy) = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = self.buckets.get(&(cx + dx, cy + dy)) {
                    out.extend_from_slice(v);
                }
            }
        }
    }
}

/// One Metropolis-Hastings chain over configurations of fixed size.
#[derive(Debug, Clone)]
pub struct Chain {
    points: Vec<Point>,
    theta: Theta,
    delta: f64,
    k_max: usize,
    xbar1: f64,
    options: ChainOptions,
    grid: CellGrid,
    sums: MomentSums,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    scratch: Vec<usize>,
    proposed: u64,
    accepted: u64,
}

impl Chain {
    pub fn new(start: &ProjectedDiagram, theta: &Theta, config: &ModelConfig, options: ChainOptions, seed: u64) -> Result<Self> {
        config.validate()?;
        if theta.k_max() != config.k_max {
            return Err(Error::invalid(format!(
                "theta has {} cluster parameters but K = {}",
                theta.k_max(),
                config.k_max
            )));
        }
        let points = start.points().to_vec();
        if points.is_empty() {
            return Err(Error::invalid("cannot run a chain on an empty configuration"));
        }
        let mut sums = MomentSums::new(points[0]);
        for &p in &points {
            sums.add(p);
        }
        Ok(Self {
            grid: CellGrid::new(&points, config.delta),
            xbar1: sums.mean1(),
            order: (0..points.len()).collect(),
            points,
            theta: theta.clone(),
            delta: config.delta,
            k_max: config.k_max,
            options,
            sums,
            rng: ChaCha8Rng::seed_from_u64(seed),
            scratch: Vec::new(),
            proposed: 0,
            accepted: 0,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn configuration(&self) -> ProjectedDiagram {
        ProjectedDiagram::new(self.points.clone()).expect("chain states stay in the half-plane")
    }

    pub fn acceptance_counts(&self) -> (u64, u64) {
        (self.accepted, self.proposed)
    }

    /// One pass over every point; returns the number of accepted moves.
    pub fn sweep(&mut self) -> usize {
        if self.options.order == SweepOrder::Shuffled {
            self.order.shuffle(&mut self.rng);
        }
        let mut accepted = 0;
        for step in 0..self.points.len() {
            let i = self.order[step];
            if self.step(i) {
                accepted += 1;
            }
        }
        accepted
    }

    fn step(&mut self, i: usize) -> bool {
        let x = self.points[i];
        let now = self.sums.moments();
        let x_star = proposal_sample(&now, &mut self.rng);
        let u: f64 = self.rng.random();
        self.proposed += 1;

        let after_sums = self.sums.replaced(x, x_star);
        let after = after_sums.moments();
        let (c_now, c_after) = match self.options.center {
            CenterMode::Frozen => (self.xbar1, self.xbar1),
            CenterMode::Live => (self.sums.mean1(), after_sums.mean1()),
        };
        self.grid.candidates(x, &mut self.scratch);
        let list = NeighborList::search_among(&self.points, self.scratch.iter().copied(), x, Some(i), self.delta, self.k_max);
        let nb = LocalNeighborhoods::from_list(&list, &self.points, self.k_max);
        let e_now = conditional_energy(x, &nb, c_now, &self.theta, self.delta);
        let e_star = conditional_energy(x_star, &nb, c_after, &self.theta, self.delta);
        let log_rho = e_now - e_star + proposal_density(x, &after).ln() - proposal_density(x_star, &now).ln();
        if log_rho >= 0.0 || u.ln() < log_rho {
            self.points[i] = x_star;
            self.grid.relocate(i, x, x_star);
            self.sums = after_sums;
            self.accepted += 1;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub burn_in: usize,
    /// Sweeps between emitted configurations.
    pub n_b: usize,
    /// Emissions per chain.
    pub n_r: usize,
    /// Independent chains.
    #[serde(rename = "n_R")]
    pub n_chains: usize,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            n_b: 500,
            n_r: 20,
            n_chains: 50,
            seed: 0,
        }
    }
}

impl Schedule {
    pub fn new(burn_in: usize, n_b: usize, n_r: usize, n_chains: usize, seed: u64) -> Result<Self> {
        let s = Self {
            burn_in,
            n_b,
            n_r,
            n_chains,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in == 0 || self.n_b == 0 || self.n_r == 0 || self.n_chains == 0 {
            return Err(Error::invalid(format!(
                "schedule entries must be positive, got burn-in {} and {},{},{}",
                self.burn_in, self.n_b, self.n_r, self.n_chains
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_r * self.n_chains
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateEnsemble {
    /// Chain-major: replicate `c * n_r + b` is block `b` of chain `c`.
    pub replicates: Vec<PersistenceDiagram>,
    pub fitted: FittedModel,
    pub schedule: Schedule,
    pub options: ChainOptions,
    pub acceptance_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct EnsembleManifest {
    schedule: Schedule,
    options: ChainOptions,
    acceptance_rate: f64,
    replicates: usize,
    fitted: FittedModel,
}

/// Runs every chain of `schedule` from the fitted data and collects the
/// emitted configurations as diagrams.
pub fn replicate(
    ppd: &ProjectedDiagram,
    fitted: &FittedModel,
    schedule: &Schedule,
    options: ChainOptions,
) -> Result<ReplicateEnsemble> {
    schedule.validate()?;
    if !fitted.trace.converged {
        return Err(Error::invalid("model fit did not converge"));
    }
    if fingerprint(ppd) != fitted.data_fingerprint {
        return Err(Error::invalid("diagram does not match the data the model was fitted to"));
    }
    let chains: Vec<Result<(Vec<PersistenceDiagram>, u64, u64)>> = (0..schedule.n_chains)
        .into_par_iter()
        .map(|c| {
            let seed = schedule.seed.wrapping_add(c as u64);
            let mut chain = Chain::new(ppd, &fitted.theta, &fitted.config, options, seed)?;
            for _ in 0..schedule.burn_in {
                chain.sweep();
            }
            let mut out = Vec::with_capacity(schedule.n_r);
            for _ in 0..schedule.n_r {
                for _ in 0..schedule.n_b {
                    chain.sweep();
                }
                out.push(unproject(&chain.configuration(), fitted.config.degree)?);
            }
            let (a, p) = chain.acceptance_counts();
            Ok((out, a, p))
        })
        .collect();
    let mut replicates = Vec::with_capacity(schedule.total());
    let (mut acc, mut prop) = (0u64, 0u64);
    for r in chains {
        let (reps, a, p) = r?;
        replicates.extend(reps);
        acc += a;
        prop += p;
    }
    Ok(ReplicateEnsemble {
        replicates,
        fitted: fitted.clone(),
        schedule: *schedule,
        options,
        acceptance_rate: acc as f64 / prop.max(1) as f64,
    })
}

fn replicate_name(i: usize, n_r: usize) -> String {
    format!("replicate_{}_{}.csv", i / n_r, i % n_r)
}

/// Writes `replicate_<chain>_<block>.csv` files and `ensemble.json` into `dir`.
pub fn write_ensemble(ensemble: &ReplicateEnsemble, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    for (i, pd) in ensemble.replicates.iter().enumerate() {
        write_diagram_csv(pd, &dir.join(replicate_name(i, ensemble.schedule.n_r)))?;
    }
    let manifest = EnsembleManifest {
        schedule: ensemble.schedule,
        options: ensemble.options,
        acceptance_rate: ensemble.acceptance_rate,
        replicates: ensemble.replicates.len(),
        fitted: ensemble.fitted.clone(),
    };
    let path = dir.join("ensemble.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|source| Error::Write { path, source })
}

/// Reads an ensemble directory. The fitted model comes back without its data attached.
pub fn read_ensemble(dir: &Path) -> Result<ReplicateEnsemble> {
    let path = dir.join("ensemble.json");
    let text = fs::read_to_string(&path).map_err(|source| Error::Read { path: path.clone(), source })?;
    let manifest: EnsembleManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let replicates = (0..manifest.replicates)
        .map(|i| {
            let pd = read_diagram_csv(&dir.join(replicate_name(i, manifest.schedule.n_r)))?;
            // An empty file reads back as degree 0.
            Ok(if pd.is_empty() {
                PersistenceDiagram::empty(manifest.fitted.config.degree)
            } else {
                pd
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateEnsemble {
        replicates,
        fitted: manifest.fitted,
        schedule: manifest.schedule,
        options: manifest.options,
        acceptance_rate: manifest.acceptance_rate,
    })
}
