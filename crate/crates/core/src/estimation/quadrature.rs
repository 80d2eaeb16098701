//! Quadrature for the local normalizers
//!
//! ```text
//! Z(x) = int_R int_R+ exp(-theta_H (z1 - m)^2 - theta_V z2^2 - sum_k theta_k L_k(z | N(x))) dz
//! ```
//!
//! The cluster factor differs from one only inside the disc of radius
//! `delta` around the nearest fixed neighbour, so `Z` splits into the
//! analytic Gaussian x half-Gaussian integral plus a correction supported on
//! that disc. The correction is integrated in polar coordinates about the
//! nearest neighbour, with angular panels and radial pieces cut exactly where
//! the integrand switches terms on or off. Node positions depend only on the
//! geometry, never on `theta`, so they are built once per data set.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::gibbs::{LocalNeighborhoods, Point, Theta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Analytic Gaussian part plus a polar correction on the interaction disc.
    LocalCorrection,
    /// Tensor-product Gauss-Legendre on a box in standardized coordinates.
    TensorBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: QuadratureRule,
    /// Box half-width in Gaussian standard units (tensor rule).
    pub half_width: f64,
    /// Nodes per axis (tensor rule).
    pub nodes_per_axis: usize,
    /// Gauss-Legendre order per angular panel and radial piece (local rule).
    pub panel_nodes: usize,
    /// Minimum number of angular panels around the disc (local rule).
    pub min_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::LocalCorrection,
            half_width: 8.0,
            nodes_per_axis: 64,
            panel_nodes: 6,
            min_panels: 12,
        }
    }
}

impl QuadratureSpec {
    pub fn tensor_box() -> Self {
        Self {
            rule: QuadratureRule::TensorBox,
            ..Self::default()
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        ws[i] = w;
        xs[n - 1 - i] = x;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

/// `int_R int_R+ exp(-theta_H u^2 - theta_V v^2) du dv`.
pub fn gaussian_normalizer(theta_h: f64, theta_v: f64) -> f64 {
    (PI / theta_h).sqrt() * 0.5 * (PI / theta_v).sqrt()
}

/// Precomputed correction nodes for one point.
///
/// `a = (z1 - m)^2`, `b = z2^2`, and `lengths[n * K + k]` is `L_{k+1}` at node `n`.
#[derive(Debug, Clone, Default)]
pub(crate) struct LocalNodes {
    pub weights: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub lengths: Vec<f64>,
    pub k_max: usize,
}

impl LocalNodes {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn build(nb: &LocalNeighborhoods, xbar1: f64, delta: f64, spec: &QuadratureSpec) -> Self {
        let k_max = nb.k_max();
        let mut out = LocalNodes {
            k_max,
            ..Default::default()
        };
        let members = nb.order(nb.active_orders());
        let Some(&y1) = members.first() else {
            return out;
        };
        let others = &members[1..];
        let (gx, gw) = gauss_legendre(spec.panel_nodes.max(2));

        let angles = critical_angles(y1, others, delta, spec.min_panels.max(4));
        let mut lengths = vec![0.0; k_max];
        let mut breaks: Vec<f64> = Vec::with_capacity(8);
        for pair in angles.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            if half <= 0.0 {
                continue;
            }
            for (&ta, &wa) in gx.iter().zip(&gw) {
                let phi = mid + half * ta;
                let u = [phi.cos(), phi.sin()];
                let r_max = if u[1] < 0.0 {
                    delta.min(y1[1] / -u[1])
                } else {
                    delta
                };
                if r_max <= 0.0 {
                    continue;
                }
                breaks.clear();
                breaks.push(0.0);
                breaks.push(r_max);
                for y in others {
                    let w = [y1[0] - y[0], y1[1] - y[1]];
                    let uw = u[0] * w[0] + u[1] * w[1];
                    let ww = w[0] * w[0] + w[1] * w[1];
                    breaks.push(-uw);
                    let disc = uw * uw - ww + delta * delta;
                    if disc > 0.0 {
                        let s = disc.sqrt();
                        breaks.push(-uw - s);
                        breaks.push(-uw + s);
                    }
                }
                breaks.retain(|&r| (0.0..=r_max).contains(&r));
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                for piece in breaks.windows(2) {
                    let (r0, r1) = (piece[0], piece[1]);
                    let (rm, rh) = (0.5 * (r0 + r1), 0.5 * (r1 - r0));
                    if rh <= 0.0 {
                        continue;
                    }
                    for (&tr, &wr) in gx.iter().zip(&gw) {
                        let r = rm + rh * tr;
                        let z: Point = [y1[0] + r * u[0], y1[1] + r * u[1]];
                        if z[1] < 0.0 {
                            continue;
                        }
                        nb.cluster_lengths_at(z, delta, &mut lengths);
                        out.weights.push(wa * half * wr * rh * r);
                        out.a.push((z[0] - xbar1).powi(2));
                        out.b.push(z[1] * z[1]);
                        out.lengths.extend_from_slice(&lengths);
                    }
                }
            }
        }
        out
    }

    /// Correction to the Gaussian normalizer, with first and second
    /// derivatives in the natural parameters when requested.
    ///
    /// Derivative slots follow `[theta_H, theta_V, theta_1, ...]`.
    pub fn correction(&self, theta: &Theta, grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let k = self.k_max;
        let mut total = 0.0;
        match (grad, hess) {
            (None, _) => {
                for n in 0..self.len() {
                    let g = (-theta.theta_h * self.a[n] - theta.theta_v * self.b[n]).exp();
                    let c: f64 = (0..k).map(|j| theta.theta_k[j] * self.lengths[n * k + j]).sum();
                    total += self.weights[n] * g * (-c).exp_m1();
                }
            }
            (Some(grad), hess) => {
                let dim = 2 + k;
                let mut hess = hess;
                let mut stat = vec![0.0; dim];
                for n in 0..self.len() {
                    let g = (-theta.theta_h * self.a[n] - theta.theta_v * self.b[n]).exp();
                    let ls = &self.lengths[n * k..(n + 1) * k];
                    let c: f64 = theta.theta_k.iter().zip(ls).map(|(t, l)| t * l).sum();
                    let wg = self.weights[n] * g;
                    let em1 = (-c).exp_m1();
                    let e = em1 + 1.0;
                    total += wg * em1;
                    stat[0] = self.a[n];
                    stat[1] = self.b[n];
                    stat[2..].copy_from_slice(ls);
                    // d/dtheta_i of g * (e^-c - 1) = -s_i * g * (e^-c - 1) for the Gaussian
                    // statistics and -s_i * g * e^-c for the cluster ones.
                    let factor = |i: usize| if i < 2 { em1 } else { e };
                    for i in 0..dim {
                        grad[i] -= wg * stat[i] * factor(i);
                    }
                    if let Some(h) = hess.as_deref_mut() {
                        for i in 0..dim {
                            for j in 0..=i {
                                let f = if i < 2 && j < 2 { em1 } else { e };
                                h[i * dim + j] += wg * stat[i] * stat[j] * f;
                            }
                        }
                    }
                }
                if let Some(h) = hess {
                    for i in 0..dim {
                        for j in 0..i {
                            h[j * dim + i] = h[i * dim + j];
                        }
                    }
                }
            }
        }
        total
    }
}

/// Angles (from `y1`) where the radial integral changes form, plus a uniform
/// floor of `min_panels` panels. Sorted, covering `[a0, a0 + 2 pi]`.
fn critical_angles(y1: Point, others: &[Point], delta: f64, min_panels: usize) -> Vec<f64> {
    let mut angles: Vec<f64> = Vec::new();
    let angle_to = |p: Point| (p[1] - y1[1]).atan2(p[0] - y1[0]);
    let h = y1[1];
    if h < delta {
        let s = (-h / delta).asin();
        angles.push(s);
        angles.push(PI - s);
    }
    for (j, &y) in others.iter().enumerate() {
        let dx = [y[0] - y1[0], y[1] - y1[1]];
        let d = dx[0].hypot(dx[1]);
        if d == 0.0 {
            continue;
        }
        let phi = dx[1].atan2(dx[0]);
        angles.push(phi);
        if d > delta {
            let t = (delta / d).asin();
            angles.push(phi - t);
            angles.push(phi + t);
        }
        if d <= 2.0 * delta {
            let t = (d / (2.0 * delta)).acos();
            angles.push(phi - t);
            angles.push(phi + t);
        }
        if y[1].abs() < delta {
            let s = (delta * delta - y[1] * y[1]).sqrt();
            angles.push(angle_to([y[0] - s, 0.0]));
            angles.push(angle_to([y[0] + s, 0.0]));
        }
        for &q in &others[j + 1..] {
            for p in circle_intersections(y, q, delta) {
                angles.push(angle_to(p));
            }
        }
    }
    let mut angles: Vec<f64> = angles.into_iter().map(|a| a.rem_euclid(TAU)).collect();
    angles.push(0.0);
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    angles.push(angles[0] + TAU);

    let max_width = TAU / min_panels as f64;
    let mut out = Vec::with_capacity(angles.len() + min_panels);
    for pair in angles.windows(2) {
        let pieces = ((pair[1] - pair[0]) / max_width).ceil().max(1.0) as usize;
        for s in 0..pieces {
            out.push(pair[0] + (pair[1] - pair[0]) * s as f64 / pieces as f64);
        }
    }
    out.push(*angles.last().unwrap());
    out
}

fn circle_intersections(p: Point, q: Point, r: f64) -> Vec<Point> {
    let d = (q[0] - p[0]).hypot(q[1] - p[1]);
    if d == 0.0 || d > 2.0 * r {
        return Vec::new();
    }
    let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
    let h = (r * r - 0.25 * d * d).max(0.0).sqrt();
    let n = [-(q[1] - p[1]) / d, (q[0] - p[0]) / d];
    vec![[m[0] + h * n[0], m[1] + h * n[1]], [m[0] - h * n[0], m[1] - h * n[1]]]
}

/// Direct tensor-product evaluation of `log Z` (no precomputation).
pub(crate) fn tensor_box_log_normalizer(
    nb: &LocalNeighborhoods,
    xbar1: f64,
    theta: &Theta,
    delta: f64,
    spec: &QuadratureSpec,
) -> f64 {
    let (gx, gw) = gauss_legendre(spec.nodes_per_axis.max(2));
    let m = spec.half_width;
    let (sh, sv) = (theta.theta_h.sqrt(), theta.theta_v.sqrt());
    let mut lengths = vec![0.0; nb.k_max()];
    let mut total = 0.0;
    for (&tu, &wu) in gx.iter().zip(&gw) {
        let s = m * tu;
        let z1 = xbar1 + s / sh;
        for (&tv, &wv) in gx.iter().zip(&gw) {
            let t = 0.5 * m * (tv + 1.0);
            let z2 = t / sv;
            nb.cluster_lengths_at([z1, z2], delta, &mut lengths);
            let c: f64 = theta.theta_k.iter().zip(&lengths).map(|(a, b)| a * b).sum();
            total += wu * m * wv * 0.5 * m * (-s * s - t * t - c).exp();
        }
    }
    (total / (sh * sv)).ln()
}
