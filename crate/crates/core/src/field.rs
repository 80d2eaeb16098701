//! Gridded scalar fields, kernel density estimates and superlevel-set persistence.
//!
//! Superlevel filtrations run from high to low values. Diagrams are stored
//! with negated values so that `death >= birth` as for any other filtration:
//! a class alive on `A_u = {f >= u}` for `d < u <= b` becomes the point
//! `(-b, -d)`.

use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagram::{PersistenceDiagram, PersistencePoint};
use crate::error::{Error, Result};
use crate::union_find::UnionFind;

const GRID_MAGIC: &[u8; 4] = b"RSTG";

/// Values at the nodes of a regular grid, row-major (`values[row * width + col]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid {
    width: usize,
    height: usize,
    origin: [f64; 2],
    cell: [f64; 2],
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(width: usize, height: usize, origin: [f64; 2], cell: [f64; 2], values: Vec<f64>) -> Result<Self> {
        if width < 1 || height < 1 || width * height < 2 {
            return Err(Error::invalid(format!("grid {width}x{height} is too small")));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "grid {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("grid value {i} is not finite")));
        }
        if !(cell[0] > 0.0 && cell[1] > 0.0) {
            return Err(Error::invalid("grid cell size must be positive"));
        }
        Ok(Self {
            width,
            height,
            origin,
            cell,
            values,
        })
    }

    /// Unit-spaced grid at the origin.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(width, height, [0.0, 0.0], [1.0, 1.0], values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell(&self) -> [f64; 2] {
        self.cell
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Physical position of node `(col, row)`.
    pub fn position(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.origin[0] + col as f64 * self.cell[0],
            self.origin[1] + row as f64 * self.cell[1],
        ]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `g` to every value.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.origin,
            self.cell,
            self.values.iter().map(|&v| g(v)).collect(),
        )
    }

    fn on_boundary(&self, i: usize) -> bool {
        let (c, r) = (i % self.width, i / self.width);
        c == 0 || r == 0 || c + 1 == self.width || r + 1 == self.height
    }

    fn neighbors(&self, i: usize, diagonal: bool, out: &mut Vec<usize>) {
        out.clear();
        let (w, h) = (self.width as isize, self.height as isize);
        let (c, r) = ((i % self.width) as isize, (i / self.width) as isize);
        for dr in -1..=1isize {
            for dc in -1..=1isize {
                if (dr == 0 && dc == 0) || (!diagonal && dr != 0 && dc != 0) {
                    continue;
                }
                let (cc, rr) = (c + dc, r + dr);
                if cc >= 0 && rr >= 0 && cc < w && rr < h {
                    out.push((rr * w + cc) as usize);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 2]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Points at uniform angles on two concentric circles centred at the origin.
///
/// `jitter` adds isotropic Gaussian noise with that standard deviation.
pub fn sample_two_circles(
    n_large: usize,
    n_small: usize,
    diam_large: f64,
    diam_small: f64,
    jitter: Option<f64>,
    seed: u64,
) -> Result<PointCloud> {
    if !(diam_large > 0.0 && diam_small > 0.0) {
        return Err(Error::invalid("circle diameters must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_large + n_small);
    for (n, d) in [(n_large, diam_large), (n_small, diam_small)] {
        for _ in 0..n {
            let a = rng.random_range(0.0..2.0 * PI);
            let mut p = [0.5 * d * a.cos(), 0.5 * d * a.sin()];
            if let Some(s) = jitter {
                let (u, v): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                p[0] += s * u;
                p[1] += s * v;
            }
            points.push(p);
        }
    }
    Ok(PointCloud::new(points))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
        }
    }
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    /// `"128"` or `"128x96"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("grid must be N or WxH, got {s:?}"));
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let (w, h) = match s.split_once(['x', 'X']) {
            Some((a, b)) => (parse(a)?, parse(b)?),
            None => {
                let n = parse(s)?;
                (n, n)
            }
        };
        if w < 2 || h < 2 {
            return Err(bad());
        }
        Ok(Self { width: w, height: h })
    }
}

/// Gaussian kernel density estimate at every node of a grid covering the
/// cloud's bounding box padded by three bandwidths.
pub fn kde_grid(cloud: &PointCloud, bandwidth: f64, spec: GridSpec) -> Result<ScalarGrid> {
    if cloud.is_empty() {
        return Err(Error::invalid("kernel density estimate of an empty point cloud"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if spec.width < 2 || spec.height < 2 {
        return Err(Error::invalid("KDE grid needs at least 2x2 nodes"));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &cloud.points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let pad = 3.0 * bandwidth;
    let origin = [lo[0] - pad, lo[1] - pad];
    let cell = [
        (hi[0] - lo[0] + 2.0 * pad) / (spec.width - 1) as f64,
        (hi[1] - lo[1] + 2.0 * pad) / (spec.height - 1) as f64,
    ];
    let norm = 1.0 / (cloud.len() as f64 * 2.0 * PI * bandwidth * bandwidth);
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let values: Vec<f64> = (0..spec.width * spec.height)
        .into_par_iter()
        .map(|i| {
            let x = origin[0] + (i % spec.width) as f64 * cell[0];
            let y = origin[1] + (i / spec.width) as f64 * cell[1];
            norm * cloud
                .points
                .iter()
                .map(|p| (-((x - p[0]).powi(2) + (y - p[1]).powi(2)) * inv).exp())
                .sum::<f64>()
        })
        .collect();
    ScalarGrid::new(spec.width, spec.height, origin, cell, values)
}

/// Cell indices in filtration order: by value (descending when `desc`), ties by index.
fn filtration_order(values: &[f64], desc: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].total_cmp(&values[b]);
        (if desc { c.reverse() } else { c }).then(a.cmp(&b))
    });
    order
}

/// Degree-0 diagram of the superlevel filtration, 4-connectivity.
///
/// The component of the global maximum is essential, truncated at the grid minimum.
pub fn superlevel_h0(grid: &ScalarGrid) -> PersistenceDiagram {
    let v = &grid.values;
    let order = filtration_order(v, true);
    let mut rank = vec![usize::MAX; v.len()];
    let mut uf = UnionFind::new(v.len());
    // Birth cell of each root, as a filtration rank.
    let mut birth = vec![usize::MAX; v.len()];
    let mut nbrs = Vec::with_capacity(4);
    let mut points = Vec::new();
    for (t, &c) in order.iter().enumerate() {
        rank[c] = t;
        birth[c] = t;
        grid.neighbors(c, false, &mut nbrs);
        for &n in &nbrs {
            if rank[n] == usize::MAX {
                continue;
            }
            let (ra, rb) = (uf.find(c), uf.find(n));
            if ra == rb {
                continue;
            }
            let (elder, younger) = if birth[ra] < birth[rb] { (birth[ra], birth[rb]) } else { (birth[rb], birth[ra]) };
            points.push(PersistencePoint::finite(0, -v[order[younger]], -v[c]));
            let r = uf.union(ra, rb);
            birth[r] = elder;
        }
    }
    points.push(PersistencePoint::essential(0, -grid.max(), -grid.min()));
    PersistenceDiagram::new(0, points).expect("elder-rule pairs are ordered")
}

/// Degree-1 diagram of the superlevel filtration, via the sublevel filtration
/// of the complement with 8-connectivity and an unbounded outside component.
pub fn superlevel_h1(grid: &ScalarGrid) -> PersistenceDiagram {
    let v = &grid.values;
    let n = v.len();
    let outside = n;
    let order = filtration_order(v, false);
    let mut added = vec![false; n];
    let mut uf = UnionFind::new(n + 1);
    let mut birth = vec![usize::MAX; n + 1];
    // The outside is older than every cell.
    birth[outside] = 0;
    let mut nbrs = Vec::with_capacity(9);
    let mut points = Vec::new();
    for (t, &c) in order.iter().enumerate() {
        added[c] = true;
        birth[c] = t + 1;
        grid.neighbors(c, true, &mut nbrs);
        nbrs.retain(|&m| added[m]);
        if grid.on_boundary(c) {
            nbrs.push(outside);
        }
        for &m in &nbrs {
            let (ra, rb) = (uf.find(c), uf.find(m));
            if ra == rb {
                continue;
            }
            let (elder, younger) = if birth[ra] < birth[rb] { (birth[ra], birth[rb]) } else { (birth[rb], birth[ra]) };
            // A bounded dual component born at value `b` and merged at `w`
            // is a hole of the superlevel set for `b < u <= w`.
            let b = v[order[younger - 1]];
            points.push(PersistencePoint::finite(1, -v[c], -b));
            let r = uf.union(ra, rb);
            birth[r] = elder;
        }
    }
    PersistenceDiagram::new(1, points).expect("dual pairs are ordered")
}

/// Number of diagram classes alive on `A_u`: points with `b >= u > d` in
/// superlevel values. Essential classes count whenever `b >= u`.
pub fn betti_from_diagram(pd: &PersistenceDiagram, u: f64) -> usize {
    pd.points()
        .iter()
        .filter(|p| {
            let (b, d) = (-p.birth, -p.death);
            b >= u && (p.essential || u > d)
        })
        .count()
}

pub fn betti_at_level(grid: &ScalarGrid, u: f64, degree: usize) -> Result<usize> {
    match degree {
        0 => Ok(betti_from_diagram(&superlevel_h0(grid), u)),
        1 => Ok(betti_from_diagram(&superlevel_h1(grid), u)),
        d => Err(Error::invalid(format!("Betti numbers of a planar grid need degree 0 or 1, got {d}"))),
    }
}

/// Points of `pd` with persistence at least `threshold`.
pub fn prominent_count(pd: &PersistenceDiagram, threshold: f64) -> usize {
    pd.points().iter().filter(|p| p.persistence() >= threshold).count()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Plain CSV matrix, one grid row per line.
pub fn write_grid_csv(grid: &ScalarGrid, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in grid.values.chunks(grid.width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Reads a CSV matrix as a unit-spaced grid.
pub fn read_grid_csv(path: &Path) -> Result<ScalarGrid> {
    let text = String::from_utf8(read_file(path)?).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let perr = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| perr(format!("bad value {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => return Err(perr(format!("expected {w} values, got {}", row.len()))),
            _ => {}
        }
        values.extend(row);
        height += 1;
    }
    ScalarGrid::from_values(width.unwrap_or(0), height, values).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })
}

/// Binary grid: `RSTG`, width and height as u64, origin and cell size, then
/// the values; all little-endian.
pub fn write_grid_binary(grid: &ScalarGrid, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(4 + 16 + 32 + 8 * grid.values.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&(grid.width as u64).to_le_bytes());
    out.extend_from_slice(&(grid.height as u64).to_le_bytes());
    for v in grid.origin.iter().chain(&grid.cell).chain(&grid.values) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &out)
}

pub fn read_grid_binary(path: &Path) -> Result<ScalarGrid> {
    let bytes = read_file(path)?;
    let perr = |message: &str| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: message.to_string(),
    };
    if bytes.len() < 52 || &bytes[..4] != GRID_MAGIC {
        return Err(perr("not an RSTG grid file"));
    }
    let u = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (w, h) = (u(4) as usize, u(12) as usize);
    let n = w.checked_mul(h).ok_or_else(|| perr("grid dimensions overflow"))?;
    if bytes.len() != 52 + 8 * n {
        return Err(perr("grid file length does not match its dimensions"));
    }
    let values = (0..n).map(|i| f(52 + 8 * i)).collect();
    ScalarGrid::new(w, h, [f(20), f(28)], [f(36), f(44)], values).map_err(|e| perr(&e.to_string()))
}

pub fn write_cloud_csv(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::from("x,y\n");
    for p in &cloud.points {
        out.push_str(&format!("{},{}\n", p[0], p[1]));
    }
    write_file(path, out.as_bytes())
}

pub fn read_cloud_csv(path: &Path) -> Result<PointCloud> {
    let bytes = read_file(path)?;
    let origin = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: origin.clone(),
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != ["x", "y"] {
        return Err(Error::Parse {
            path: origin,
            line: 1,
            message: "expected header `x,y`".into(),
        });
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let perr = |line: usize, message: String| Error::Parse {
            path: origin.clone(),
            line,
            message,
        };
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(perr(line, format!("expected 2 fields, got {}", rec.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(line, format!("bad coordinate {s:?}")))
        };
        points.push([num(&rec[0])?, num(&rec[1])?]);
    }
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(pd: &PersistenceDiagram) -> Vec<(f64, f64, bool)> {
        let mut v: Vec<_> = pd.points().iter().map(|p| (p.birth, p.death, p.essential)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn three_cell_example() {
        let g = ScalarGrid::from_values(3, 1, vec![2.0, 1.0, 3.0]).unwrap();
        assert_eq!(pairs(&superlevel_h0(&g)), vec![(-3.0, -1.0, true), (-2.0, -1.0, false)]);
        assert!(superlevel_h1(&g).is_empty());
    }

    #[test]
    fn constant_grid_has_one_essential_class() {
        let g = ScalarGrid::from_values(4, 3, vec![1.5; 12]).unwrap();
        let pd = superlevel_h0(&g);
        assert_eq!(pd.len(), 1);
        assert!(pd.points()[0].essential);
        assert_eq!(betti_at_level(&g, 1.5, 0).unwrap(), 1);
        assert_eq!(betti_at_level(&g, 1.6, 0).unwrap(), 0);
        assert!(superlevel_h1(&g).is_empty());
    }

    #[test]
    fn ring_has_one_hole() {
        // Hand-built 5x5 ring of height 3 around a centre of height 1, floor 0.
        #[rustfmt::skip]
        let v = vec![
            0.0, 0.0, 0.0, 0.0, 0.0,
            0.0, 3.0, 3.1, 3.2, 0.0,
            0.0, 2.9, 1.0, 3.3, 0.0,
            0.0, 2.8, 2.7, 3.4, 0.0,
            0.0, 0.0, 0.0, 0.0, 0.0,
        ];
        let g = ScalarGrid::from_values(5, 5, v).unwrap();
        assert_eq!(pairs(&superlevel_h1(&g)), vec![(-2.7, -1.0, false)]);
        assert_eq!(betti_at_level(&g, 2.0, 1).unwrap(), 1);
        assert_eq!(betti_at_level(&g, 2.75, 1).unwrap(), 0);
    }

    #[test]
    fn diagonal_contact_does_not_close_a_loop() {
        // The superlevel set is 4-connected; a diagonal step leaves the
        // complement 8-connected to the outside.
        #[rustfmt::skip]
        let v = vec![
            0.0, 0.0, 0.0, 0.0,
            0.0, 2.0, 2.0, 0.0,
            0.0, 2.0, 0.5, 2.0,
            0.0, 0.0, 2.0, 0.0,
        ];
        let g = ScalarGrid::from_values(4, 4, v).unwrap();
        assert!(superlevel_h1(&g).is_empty());
    }

    #[test]
    fn radial_bump_has_no_hole() {
        let cloud = PointCloud::new(vec![[0.0, 0.0]]);
        let g = kde_grid(&cloud, 1.0, GridSpec { width: 33, height: 33 }).unwrap();
        assert!(superlevel_h1(&g).is_empty());
        assert_eq!(superlevel_h0(&g).len(), 1);
    }

    #[test]
    fn kde_values() {
        let cloud = PointCloud::new(vec![[0.0, 0.0]]);
        let g = kde_grid(&cloud, 1.0, GridSpec { width: 61, height: 61 }).unwrap();
        // Grid spans [-3, 3] in both axes, so node 30 is the origin.
        assert!((g.get(30, 30) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((g.get(30, 30) - 0.159155).abs() < 1e-6);

        let far = PointCloud::new(vec![[0.0, 0.0], [10.0, 0.0]]);
        let g = kde_grid(&far, 0.5, GridSpec { width: 9, height: 101 }).unwrap();
        let p = g.position(0, 50);
        assert!((p[0] + 1.5).abs() < 1e-12 && p[1].abs() < 1e-12);

        let cloud = sample_two_circles(50, 20, 4.0, 2.0, None, 3).unwrap();
        let g = kde_grid(&cloud, 0.3, GridSpec { width: 200, height: 200 }).unwrap();
        let mass = g.values().iter().sum::<f64>() * g.cell()[0] * g.cell()[1];
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }

    #[test]
    fn kde_decays_far_from_data() {
        let cloud = PointCloud::new(vec![[0.0, 0.0], [3.0, 0.0]]);
        let g = kde_grid(&cloud, 0.1, GridSpec { width: 31, height: 3 }).unwrap();
        let p = g.position(15, 1);
        assert!((p[0] - 1.5).abs() < 1e-12 && p[1].abs() < 1e-12);
        assert!(g.get(15, 1) < 1e-20 * g.max());
    }

    #[test]
    fn circles_lie_on_their_radii() {
        let c = sample_two_circles(500, 300, 4.0, 2.0, None, 9).unwrap();
        assert_eq!(c.len(), 800);
        for (i, p) in c.points.iter().enumerate() {
            let r = if i < 500 { 2.0 } else { 1.0 };
            assert!((p[0].hypot(p[1]) - r).abs() < 1e-12);
        }
        assert_eq!(sample_two_circles(10, 0, 4.0, 2.0, None, 1).unwrap().len(), 10);
        assert_eq!(c, sample_two_circles(500, 300, 4.0, 2.0, None, 9).unwrap());
        assert!(sample_two_circles(1, 1, 0.0, 2.0, None, 1).is_err());
    }

    #[test]
    fn two_circles_have_two_holes() {
        let c = sample_two_circles(500, 300, 4.0, 2.0, None, 0).unwrap();
        let g = kde_grid(&c, 0.3, GridSpec::default()).unwrap();
        let h1 = superlevel_h1(&g);
        assert_eq!(prominent_count(&h1, 0.1 * (g.max() - g.min())), 2, "{:?}", pairs(&h1));
    }

    #[test]
    fn monotone_maps_carry_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = ScalarGrid::from_values(7, 6, (0..42).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let t = g.map(|v: f64| (2.0 * v).exp()).unwrap();
        for (a, b) in [(superlevel_h0(&g), superlevel_h0(&t)), (superlevel_h1(&g), superlevel_h1(&t))] {
            let mapped: Vec<_> = pairs(&a)
                .into_iter()
                .map(|(b0, d0, e)| (-(-2.0 * b0).exp(), -(-2.0 * d0).exp(), e))
                .collect();
            let mut mapped = mapped;
            mapped.sort_by(|x, y| x.partial_cmp(y).unwrap());
            assert_eq!(mapped.len(), b.len());
            for (x, y) in mapped.iter().zip(pairs(&b)) {
                assert!((x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12 && x.2 == y.2);
            }
        }
    }

    #[test]
    fn grid_files_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = ScalarGrid::new(5, 3, [-1.5, 2.0], [0.25, 0.5], (0..15).map(|_| rng.random::<f64>()).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("g.rstg");
        write_grid_binary(&g, &bin).unwrap();
        assert_eq!(read_grid_binary(&bin).unwrap(), g);
        let csv = dir.path().join("g.csv");
        write_grid_csv(&g, &csv).unwrap();
        let back = read_grid_csv(&csv).unwrap();
        assert_eq!(back.values(), g.values());
        assert_eq!((back.width(), back.height()), (5, 3));

        let cloud = sample_two_circles(5, 3, 4.0, 2.0, Some(0.1), 2).unwrap();
        let path = dir.path().join("c.csv");
        write_cloud_csv(&cloud, &path).unwrap();
        assert_eq!(read_cloud_csv(&path).unwrap(), cloud);

        fs::write(&bin, b"NOPE").unwrap();
        assert!(matches!(read_grid_binary(&bin), Err(Error::Parse { .. })));
    }
}
