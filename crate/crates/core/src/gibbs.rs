//! The cluster-expansion Hamiltonian on projected diagrams.
//!
//! For a configuration of points in `R x R+`, the energy is
//!
//! ```text
//! H = theta_H * sum (x1 - mean x1)^2 + theta_V * sum x2^2 + sum_k theta_k * L_k
//! ```
//!
//! where `L_k` totals, over every point, the distances to its `k` nearest
//! neighbours, provided all of them lie within the interaction distance
//! `delta` (otherwise that point contributes nothing to `L_k`).

use serde::{Deserialize, Serialize};

use crate::diagram::{ModelConfig, ProjectedDiagram};
use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Interaction parameters `(theta_H, theta_V, theta_1..theta_K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    #[serde(rename = "theta_H")]
    pub theta_h: f64,
    #[serde(rename = "theta_V")]
    pub theta_v: f64,
    pub theta_k: Vec<f64>,
}

impl Theta {
    pub fn new(theta_h: f64, theta_v: f64, theta_k: Vec<f64>) -> Self {
        Self {
            theta_h,
            theta_v,
            theta_k,
        }
    }

    pub fn zeros(k_max: usize) -> Self {
        Self::new(0.0, 0.0, vec![0.0; k_max])
    }

    pub fn k_max(&self) -> usize {
        self.theta_k.len()
    }

    /// Flat view `[theta_H, theta_V, theta_1, ...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.theta_h, self.theta_v];
        v.extend_from_slice(&self.theta_k);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2..].to_vec())
    }

    /// Parameter names in [`Theta::to_vec`] order.
    pub fn names(k_max: usize) -> Vec<String> {
        let mut names = vec!["theta_H".to_string(), "theta_V".to_string()];
        names.extend((1..=k_max).map(|k| format!("theta_{k}")));
        names
    }

    pub(crate) fn check_normalizable(&self) -> Result<()> {
        if !(self.theta_h > 0.0 && self.theta_v > 0.0) {
            return Err(Error::invalid(format!(
                "theta_H and theta_V must be positive for a normalizable density, got ({}, {})",
                self.theta_h, self.theta_v
            )));
        }
        if !self.to_vec().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("theta has non-finite components"));
        }
        Ok(())
    }
}

/// Where a neighbourhood is centred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Site {
    /// The configuration point with this index; it is never its own neighbour.
    Member(usize),
    /// An arbitrary location; every configuration point is a candidate.
    Free(Point),
}

/// The `k` nearest neighbours of a centre, all within `delta`, or nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub center: Point,
    pub members: Vec<Point>,
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl Neighborhood {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.distances.iter().sum()
    }
}

/// Up to `k_max` nearest candidates within `delta`, sorted by `(distance, index)`.
///
/// The order-`k` neighbourhood is the first `k` entries when at least `k`
/// exist, and empty otherwise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborList {
    pub(crate) entries: Vec<(f64, usize)>,
}

impl NeighborList {
    pub fn search(points: &[Point], center: Point, exclude: Option<usize>, delta: f64, k_max: usize) -> Self {
        Self::search_among(points, 0..points.len(), center, exclude, delta, k_max)
    }

    /// As [`NeighborList::search`], restricted to `candidates` (any order).
    pub fn search_among(
        points: &[Point],
        candidates: impl IntoIterator<Item = usize>,
        center: Point,
        exclude: Option<usize>,
        delta: f64,
        k_max: usize,
    ) -> Self {
        let mut entries: Vec<(f64, usize)> = Vec::with_capacity(k_max + 1);
        if k_max == 0 {
            return Self { entries };
        }
        for j in candidates {
            if Some(j) == exclude {
                continue;
            }
            let d = dist(center, points[j]);
            if d > delta {
                continue;
            }
            let key = (d, j);
            if entries.len() == k_max {
                if key >= entries[k_max - 1] {
                    continue;
                }
                entries.pop();
            }
            let pos = entries.partition_point(|e| *e < key);
            entries.insert(pos, key);
        }
        Self { entries }
    }

    /// Indices of the order-`k` neighbourhood, if it is non-empty.
    pub fn order(&self, k: usize) -> Option<&[(f64, usize)]> {
        (k >= 1 && self.entries.len() >= k).then(|| &self.entries[..k])
    }

    pub fn cluster_length(&self, k: usize) -> f64 {
        self.order(k).map_or(0.0, |e| e.iter().map(|x| x.0).sum())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn site_center(ppd: &ProjectedDiagram, site: Site) -> Result<(Point, Option<usize>)> {
    match site {
        Site::Member(i) => ppd
            .points()
            .get(i)
            .map(|&p| (p, Some(i)))
            .ok_or_else(|| Error::invalid(format!("member index {i} out of range"))),
        Site::Free(p) => Ok((p, None)),
    }
}

pub fn neighborhood(site: Site, k: usize, ppd: &ProjectedDiagram, delta: f64) -> Result<Neighborhood> {
    if k < 1 {
        return Err(Error::invalid("neighbourhood order must be at least 1"));
    }
    let (center, exclude) = site_center(ppd, site)?;
    let list = NeighborList::search(ppd.points(), center, exclude, delta, k);
    let entries = list.order(k).unwrap_or(&[]);
    Ok(Neighborhood {
        center,
        members: entries.iter().map(|&(_, j)| ppd.points()[j]).collect(),
        indices: entries.iter().map(|&(_, j)| j).collect(),
        distances: entries.iter().map(|&(d, _)| d).collect(),
    })
}

/// Sum of distances from the centre to its order-`k` neighbourhood.
pub fn cluster_length(site: Site, k: usize, ppd: &ProjectedDiagram, delta: f64) -> Result<f64> {
    Ok(neighborhood(site, k, ppd, delta)?.length())
}

/// `L_k` summed over every configuration point.
pub fn total_cluster_length(k: usize, ppd: &ProjectedDiagram, delta: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::invalid("neighbourhood order must be at least 1"));
    }
    let pts = ppd.points();
    Ok((0..pts.len())
        .map(|i| NeighborList::search(pts, pts[i], Some(i), delta, k).cluster_length(k))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadTerms {
    /// Centred sum of squares of first coordinates.
    pub sigma_h_sq: f64,
    /// Uncentred sum of squares of second coordinates.
    pub sigma_v_sq: f64,
    pub xbar1: f64,
}

pub fn spread_terms(ppd: &ProjectedDiagram) -> Result<SpreadTerms> {
    let pts = ppd.points();
    if pts.is_empty() {
        return Err(Error::invalid("spread terms of an empty diagram"));
    }
    let xbar1 = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
    Ok(SpreadTerms {
        sigma_h_sq: pts.iter().map(|p| (p[0] - xbar1).powi(2)).sum(),
        sigma_v_sq: pts.iter().map(|p| p[1] * p[1]).sum(),
        xbar1,
    })
}

fn check_dims(theta: &Theta, config: &ModelConfig) -> Result<()> {
    if theta.k_max() != config.k_max {
        return Err(Error::invalid(format!(
            "theta has {} cluster parameters but K = {}",
            theta.k_max(),
            config.k_max
        )));
    }
    Ok(())
}

/// Total energy of a configuration.
pub fn hamiltonian(ppd: &ProjectedDiagram, theta: &Theta, config: &ModelConfig) -> Result<f64> {
    check_dims(theta, config)?;
    if ppd.is_empty() {
        return Ok(0.0);
    }
    let s = spread_terms(ppd)?;
    let pts = ppd.points();
    let mut cluster = vec![0.0; config.k_max];
    for i in 0..pts.len() {
        let list = NeighborList::search(pts, pts[i], Some(i), config.delta, config.k_max);
        for (k, c) in cluster.iter_mut().enumerate() {
            *c += list.cluster_length(k + 1);
        }
    }
    Ok(theta.theta_h * s.sigma_h_sq
        + theta.theta_v * s.sigma_v_sq
        + theta.theta_k.iter().zip(&cluster).map(|(t, l)| t * l).sum::<f64>())
}

/// The fixed conditioning sets `N_1(x), ..., N_K(x)` of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalNeighborhoods {
    /// Nearest-first members of the largest available neighbourhood.
    members: Vec<Point>,
    k_max: usize,
}

impl LocalNeighborhoods {
    pub fn at(site: Site, ppd: &ProjectedDiagram, delta: f64, k_max: usize) -> Result<Self> {
        let (center, exclude) = site_center(ppd, site)?;
        Ok(Self::from_list(
            &NeighborList::search(ppd.points(), center, exclude, delta, k_max),
            ppd.points(),
            k_max,
        ))
    }

    pub(crate) fn from_list(list: &NeighborList, points: &[Point], k_max: usize) -> Self {
        Self {
            members: list.entries.iter().map(|&(_, j)| points[j]).collect(),
            k_max,
        }
    }

    /// Members of the order-`k` set; empty when fewer than `k` qualified.
    pub fn order(&self, k: usize) -> &[Point] {
        if k >= 1 && self.members.len() >= k {
            &self.members[..k]
        } else {
            &[]
        }
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Number of non-empty orders.
    pub fn active_orders(&self) -> usize {
        self.members.len().min(self.k_max)
    }

    /// Cluster lengths `L_k(z | N_k(x))` for `k = 1..=K`, written into `out`.
    ///
    /// A term is zero unless every member of the fixed set lies within
    /// `delta` of `z`.
    pub fn cluster_lengths_at(&self, z: Point, delta: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut running = 0.0;
        for (j, &y) in self.members.iter().enumerate().take(self.k_max) {
            let d = dist(z, y);
            if d > delta {
                // Every higher order contains this member as well.
                return;
            }
            running += d;
            out[j] = running;
        }
    }
}

/// Single-point energy of `z` against the fixed neighbourhoods of some point.
pub fn conditional_energy(
    z: Point,
    nbhds: &LocalNeighborhoods,
    xbar1: f64,
    theta: &Theta,
    delta: f64,
) -> f64 {
    let mut lengths = [0.0; 8];
    let k_max = theta.k_max().min(nbhds.k_max());
    let cluster: f64 = if k_max <= lengths.len() {
        nbhds.cluster_lengths_at(z, delta, &mut lengths[..k_max]);
        theta.theta_k.iter().zip(&lengths[..k_max]).map(|(t, l)| t * l).sum()
    } else {
        let mut v = vec![0.0; k_max];
        nbhds.cluster_lengths_at(z, delta, &mut v);
        theta.theta_k.iter().zip(&v).map(|(t, l)| t * l).sum()
    };
    theta.theta_h * (z[0] - xbar1).powi(2) + theta.theta_v * z[1] * z[1] + cluster
}
