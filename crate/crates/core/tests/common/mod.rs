//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use rst_core::field::ScalarGrid;

/// Connected components of the cells selected by `keep`, by breadth-first search.
/// Returns a label per cell (`usize::MAX` for unselected cells).
pub fn label_components(w: usize, h: usize, keep: &dyn Fn(usize) -> bool, diagonal: bool) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if !keep(start) || label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            let (x, y) = ((c % w) as isize, (c / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if (dx == 0 && dy == 0) || (!diagonal && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if keep(n) && label[n] == usize::MAX {
                        label[n] = next;
                        queue.push_back(n);
                    }
                }
            }
        }
        next += 1;
    }
    (label, next)
}

fn distinct_levels(v: &[f64]) -> Vec<f64> {
    let mut levels = v.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
}

/// Superlevel H0 pairs `(birth, death)` in field values, plus the essential birth,
/// by relabelling the superlevel set at every distinct level.
pub fn h0_oracle(grid: &ScalarGrid) -> (Vec<(f64, f64)>, f64) {
    let (w, h, v) = (grid.width(), grid.height(), grid.values());
    // Alive components, keyed by their representative (highest) cell.
    let mut alive: Vec<usize> = Vec::new();
    let mut pairs = Vec::new();
    let elder = |a: usize, b: usize| v[a] > v[b] || (v[a] == v[b] && a < b);
    for &u in distinct_levels(v).iter().rev() {
        let (label, n) = label_components(w, h, &|c| v[c] >= u, false);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &rep in &alive {
            groups[label[rep]].push(rep);
        }
        let mut next = Vec::new();
        for (comp, reps) in groups.into_iter().enumerate() {
            if reps.is_empty() {
                let top = (0..w * h)
                    .filter(|&c| label[c] == comp)
                    .reduce(|a, b| if elder(a, b) { a } else { b })
                    .unwrap();
                next.push(top);
                continue;
            }
            let oldest = reps.iter().copied().reduce(|a, b| if elder(a, b) { a } else { b }).unwrap();
            for &r in &reps {
                if r != oldest && v[r] > u {
                    pairs.push((v[r], u));
                }
            }
            next.push(oldest);
        }
        alive = next;
    }
    assert_eq!(alive.len(), 1);
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (pairs, v[alive[0]])
}

/// Superlevel H1 pairs `(birth, death)` in field values, by tracking bounded
/// components of the closed sublevel sets (8-connectivity) at every level.
pub fn h1_oracle(grid: &ScalarGrid) -> Vec<(f64, f64)> {
    let (w, h, v) = (grid.width(), grid.height(), grid.values());
    const OUTSIDE: usize = usize::MAX;
    let boundary = |c: usize| {
        let (x, y) = (c % w, c / w);
        x == 0 || y == 0 || x + 1 == w || y + 1 == h
    };
    // Bounded components alive, keyed by their lowest cell.
    let mut alive: Vec<usize> = Vec::new();
    let mut pairs = Vec::new();
    let elder = |a: usize, b: usize| v[a] < v[b] || (v[a] == v[b] && a < b);
    for &t in &distinct_levels(v) {
        let (label, n) = label_components(w, h, &|c| v[c] <= t, true);
        let mut unbounded = vec![false; n];
        for c in 0..w * h {
            if label[c] != usize::MAX && boundary(c) {
                unbounded[label[c]] = true;
            }
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &rep in &alive {
            groups[label[rep]].push(rep);
        }
        let mut next = Vec::new();
        for comp in 0..n {
            let reps = &groups[comp];
            let survivor = if unbounded[comp] {
                OUTSIDE
            } else if reps.is_empty() {
                (0..w * h)
                    .filter(|&c| label[c] == comp)
                    .reduce(|a, b| if elder(a, b) { a } else { b })
                    .unwrap()
            } else {
                reps.iter().copied().reduce(|a, b| if elder(a, b) { a } else { b }).unwrap()
            };
            for &r in reps {
                if r != survivor && v[r] < t {
                    pairs.push((t, v[r]));
                }
            }
            if survivor != OUTSIDE {
                next.push(survivor);
            }
        }
        alive = next;
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pairs
}

/// Components of `{f >= u}` (4-connectivity).
pub fn betti0_direct(grid: &ScalarGrid, u: f64) -> usize {
    let v = grid.values();
    label_components(grid.width(), grid.height(), &|c| v[c] >= u, false).1
}

/// Bounded components of `{f < u}` (8-connectivity): the holes of `{f >= u}`.
pub fn betti1_direct(grid: &ScalarGrid, u: f64) -> usize {
    let (w, h, v) = (grid.width(), grid.height(), grid.values());
    let (label, n) = label_components(w, h, &|c| v[c] < u, true);
    let mut unbounded = vec![false; n];
    for c in 0..w * h {
        let (x, y) = (c % w, c / w);
        if label[c] != usize::MAX && (x == 0 || y == 0 || x + 1 == w || y + 1 == h) {
            unbounded[label[c]] = true;
        }
    }
    unbounded.iter().filter(|b| !**b).count()
}

/// Finite `(birth, death)` pairs of a superlevel diagram, back in field values.
pub fn field_pairs(pd: &rst_core::diagram::PersistenceDiagram) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = pd.finite_points().map(|p| (-p.birth, -p.death)).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Histogram of values, for comparing multisets with repeated entries.
pub fn multiset(v: &[(f64, f64)]) -> BTreeMap<(u64, u64), usize> {
    let mut m = BTreeMap::new();
    for &(a, b) in v {
        *m.entry((a.to_bits(), b.to_bits())).or_insert(0) += 1;
    }
    m
}
