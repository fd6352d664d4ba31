//! Nearest-neighbour distances and the per-cell statistics `X0`, `X1`, `X'_p`.
//!
//! Nuclei are bucketed by lattice cell in a compressed grid; a query visits
//! Chebyshev rings of cells around the query cell until no unvisited cell
//! can hold a closer nucleus.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Aabb, LatticeSpec, NuclearConfiguration, Nucleus, Site};
use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Default truncation length `eps` of `delta' = min(delta, eps)`.
pub const DEFAULT_EPSILON: f64 = 0.5;
/// Default exponents of `X'_p`.
pub const DEFAULT_P_LIST: [f64; 2] = [1.0, 2.0];

pub const CELL_CSV_HEADER: [&str; 7] = ["i", "j", "k", "X0", "X1", "Xp2", "flag"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeighborDistance {
    pub delta: f64,
    /// No neighbour was found within the sampled region; `delta` is the
    /// distance to its boundary.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct CellIndex {
    lattice: LatticeSpec,
    window: Aabb,
    region: Aabb,
    nuclei: Vec<Nucleus>,
    grid_lo: Site,
    dims: [usize; 3],
    /// CSR offsets into `order`, one bucket per grid cell.
    offsets: Vec<u32>,
    order: Vec<u32>,
    /// Positions in bucket order, for cache-friendly scans.
    packed: Vec<Vec3>,
    h_min: f64,
}

impl CellIndex {
    pub fn build(config: &NuclearConfiguration) -> Result<CellIndex> {
        let lattice = config.lattice.clone();
        let region = config.sampled_region();
        let n = config.nuclei.len();
        if n > u32::MAX as usize {
            return Err(Error::invalid("too many nuclei for one index"));
        }
        let cells: Vec<Site> = config.nuclei.iter().map(|nu| lattice.cell_of(nu.position)).collect();
        let mut lo = [0i64; 3];
        let mut hi = [-1i64; 3];
        if let Some(first) = cells.first() {
            lo = *first;
            hi = *first;
            for c in &cells {
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
        }
        let dims = [
            (hi[0] - lo[0] + 1).max(0) as usize,
            (hi[1] - lo[1] + 1).max(0) as usize,
            (hi[2] - lo[2] + 1).max(0) as usize,
        ];
        let total = dims[0] * dims[1] * dims[2];
        let flat = |c: &Site| -> usize {
            ((c[0] - lo[0]) as usize * dims[1] + (c[1] - lo[1]) as usize) * dims[2]
                + (c[2] - lo[2]) as usize
        };
        let mut counts = vec![0u32; total + 1];
        for c in &cells {
            counts[flat(c) + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut order = vec![0u32; n];
        for (i, c) in cells.iter().enumerate() {
            let b = flat(c);
            order[fill[b] as usize] = i as u32;
            fill[b] += 1;
        }
        let packed = order.iter().map(|&i| config.nuclei[i as usize].position).collect();
        Ok(CellIndex {
            h_min: lattice.min_face_width(),
            lattice,
            window: config.window,
            region,
            nuclei: config.nuclei.clone(),
            grid_lo: lo,
            dims,
            offsets,
            order,
            packed,
        })
    }

    pub fn len(&self) -> usize {
        self.nuclei.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nuclei.is_empty()
    }

    pub fn nuclei(&self) -> &[Nucleus] {
        &self.nuclei
    }

    pub fn window(&self) -> Aabb {
        self.window
    }

    pub fn region(&self) -> Aabb {
        self.region
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    /// Number of non-empty buckets.
    pub fn occupied_buckets(&self) -> usize {
        self.offsets.windows(2).filter(|w| w[1] > w[0]).count()
    }

    fn bucket_range(&self, c: Site) -> Option<std::ops::Range<usize>> {
        let mut idx = 0usize;
        for a in 0..3 {
            let d = c[a] - self.grid_lo[a];
            if d < 0 || d as usize >= self.dims[a] {
                return None;
            }
            idx = idx * self.dims[a] + d as usize;
        }
        Some(self.offsets[idx] as usize..self.offsets[idx + 1] as usize)
    }

    /// Indices (into the configuration order) of the nuclei in cell `c`.
    pub fn bucket(&self, c: Site) -> impl Iterator<Item = usize> + '_ {
        self.bucket_range(c)
            .into_iter()
            .flat_map(move |r| self.order[r].iter().map(|&i| i as usize))
    }

    /// Index of the nucleus at exactly `position`, if present.
    pub fn find(&self, position: Vec3) -> Option<usize> {
        let c = self.lattice.cell_of(position);
        self.bucket(c).find(|&i| self.nuclei[i].position == position)
    }

    /// Nearest-neighbour distance of the `i`-th nucleus.
    pub fn delta(&self, i: usize) -> Result<NeighborDistance> {
        if self.nuclei.len() < 2 {
            return Err(Error::precondition(
                "nearest-neighbour distance is undefined with fewer than two nuclei",
            ));
        }
        let x = self.nuclei.get(i).ok_or_else(|| Error::invalid(format!("no nucleus {i}")))?.position;
        let c0 = self.lattice.cell_of(x);
        let max_ring = (0..3)
            .map(|a| {
                let d0 = c0[a] - self.grid_lo[a];
                let d1 = self.grid_lo[a] + self.dims[a] as i64 - 1 - c0[a];
                d0.max(d1)
            })
            .max()
            .unwrap_or(0);
        let mut best2 = f64::INFINITY;
        let mut m = 0i64;
        loop {
            self.scan_ring(c0, m, x, &mut best2);
            let bound = m as f64 * self.h_min;
            if best2.sqrt() <= bound || m >= max_ring {
                break;
            }
            m += 1;
        }
        Ok(self.finish(x, best2.sqrt()))
    }

    #[inline]
    fn finish(&self, x: Vec3, found: f64) -> NeighborDistance {
        let limit = self.region.depth(x);
        if found <= limit {
            NeighborDistance { delta: found, truncated: false }
        } else {
            NeighborDistance { delta: limit, truncated: true }
        }
    }

    fn scan_ring(&self, c0: Site, m: i64, x: Vec3, best2: &mut f64) {
        let mut visit = |c: Site| {
            if let Some(r) = self.bucket_range(c) {
                for &y in &self.packed[r] {
                    let d2 = (y - x).norm2();
                    if d2 > 0.0 && d2 < *best2 {
                        *best2 = d2;
                    }
                }
            }
        };
        if m == 0 {
            visit(c0);
            return;
        }
        for di in -m..=m {
            for dj in -m..=m {
                let on_shell = di.abs() == m || dj.abs() == m;
                if on_shell {
                    for dk in -m..=m {
                        visit([c0[0] + di, c0[1] + dj, c0[2] + dk]);
                    }
                } else {
                    visit([c0[0] + di, c0[1] + dj, c0[2] - m]);
                    visit([c0[0] + di, c0[1] + dj, c0[2] + m]);
                }
            }
        }
    }

    /// Nearest-neighbour distances of all nuclei, in configuration order.
    pub fn all_deltas(&self) -> Result<Vec<NeighborDistance>> {
        if self.nuclei.len() < 2 && !self.nuclei.is_empty() {
            return Err(Error::precondition(
                "nearest-neighbour distance is undefined with fewer than two nuclei",
            ));
        }
        (0..self.nuclei.len()).into_par_iter().map(|i| self.delta(i)).collect()
    }

    /// True when the cell `W + j` lies inside the window.
    pub fn cell_in_window(&self, j: Site) -> bool {
        let b = self.lattice.cell_bounds(j);
        (0..3).all(|a| b.lo[a] >= self.window.lo[a] && b.hi[a] <= self.window.hi[a])
    }

    /// Sites `j` whose cell lies inside the window, in lexicographic order.
    pub fn window_cells(&self) -> Vec<Site> {
        let (lo, hi) = self.lattice.site_range(&self.window);
        let mut out = Vec::new();
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    if self.cell_in_window([i, j, k]) {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }
}

/// `build_index` of the configuration.
pub fn build_index(config: &NuclearConfiguration) -> Result<CellIndex> {
    CellIndex::build(config)
}

/// `delta` of the given nucleus, which must belong to the indexed configuration.
pub fn nearest_neighbor_distance(index: &CellIndex, nucleus: &Nucleus) -> Result<NeighborDistance> {
    let i = index
        .find(nucleus.position)
        .ok_or_else(|| Error::invalid("nucleus does not belong to the indexed configuration"))?;
    index.delta(i)
}

/// `O(n^2)` reference scan with the same truncation rule as the index.
pub fn brute_force_delta(config: &NuclearConfiguration, i: usize) -> Result<NeighborDistance> {
    if config.nuclei.len() < 2 {
        return Err(Error::precondition(
            "nearest-neighbour distance is undefined with fewer than two nuclei",
        ));
    }
    let x = config.nuclei[i].position;
    let mut best2 = f64::INFINITY;
    for (k, n) in config.nuclei.iter().enumerate() {
        if k != i {
            let d2 = (n.position - x).norm2();
            if d2 > 0.0 && d2 < best2 {
                best2 = d2;
            }
        }
    }
    let found = best2.sqrt();
    let limit = config.sampled_region().depth(x);
    Ok(if found <= limit {
        NeighborDistance { delta: found, truncated: false }
    } else {
        NeighborDistance { delta: limit, truncated: true }
    })
}

/// `X'_p(eps)` at one `(p, eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncatedMoment {
    pub p: f64,
    pub eps: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStatistics {
    pub cell: Site,
    pub x0: usize,
    pub x1: f64,
    pub xp: Vec<TruncatedMoment>,
    pub deltas: Vec<f64>,
    /// Some nucleus of the cell had a margin-truncated `delta`.
    pub truncated: bool,
}

impl CellStatistics {
    pub fn from_deltas(cell: Site, deltas: Vec<f64>, truncated: bool, eps: f64, p_list: &[f64]) -> Self {
        let x1 = deltas.iter().map(|d| 1.0 / d).sum();
        let xp = p_list
            .iter()
            .map(|&p| TruncatedMoment {
                p,
                eps,
                value: deltas.iter().map(|d| d.min(eps).powf(-p)).sum(),
            })
            .collect();
        CellStatistics { cell, x0: deltas.len(), x1, xp, deltas, truncated }
    }

    pub fn xp(&self, p: f64) -> Option<f64> {
        self.xp.iter().find(|m| m.p == p).map(|m| m.value)
    }
}

fn check_eps(eps: f64, p_list: &[f64]) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("eps must be a positive length (got {eps})")));
    }
    if let Some(p) = p_list.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::invalid(format!("exponent p must be positive (got {p})")));
    }
    Ok(())
}

/// Statistics of the nuclei lying in the cell `W + j`, which must be inside the window.
pub fn cell_statistics(index: &CellIndex, j: Site, eps: f64, p_list: &[f64]) -> Result<CellStatistics> {
    check_eps(eps, p_list)?;
    if !index.cell_in_window(j) {
        return Err(Error::invalid(format!(
            "cell {j:?} is not inside the window; margin cells have biased statistics"
        )));
    }
    let mut deltas = Vec::new();
    let mut truncated = false;
    for i in index.bucket(j) {
        let d = index.delta(i)?;
        truncated |= d.truncated;
        deltas.push(d.delta);
    }
    Ok(CellStatistics::from_deltas(j, deltas, truncated, eps, p_list))
}

/// Statistics of every cell inside the window, in lexicographic cell order.
pub fn window_statistics(index: &CellIndex, eps: f64, p_list: &[f64]) -> Result<Vec<CellStatistics>> {
    check_eps(eps, p_list)?;
    index
        .window_cells()
        .into_par_iter()
        .map(|j| cell_statistics(index, j, eps, p_list))
        .collect()
}

/// Writes `i,j,k,X0,X1,Xp2,flag`; `Xp2` is `X'_2` at the statistics' `eps`.
pub fn write_cell_csv<W: Write>(stats: &[CellStatistics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CELL_CSV_HEADER)?;
    for s in stats {
        let xp2 = s.xp(2.0).unwrap_or_else(|| {
            let eps = s.xp.first().map(|m| m.eps).unwrap_or(DEFAULT_EPSILON);
            s.deltas.iter().map(|d| d.min(eps).powi(-2)).sum()
        });
        w.write_record([
            s.cell[0].to_string(),
            s.cell[1].to_string(),
            s.cell[2].to_string(),
            s.x0.to_string(),
            s.x1.to_string(),
            xp2.to_string(),
            (s.truncated as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Statistics of the origin cell `W` by direct scan, for configurations
/// small enough that building an index is not worth it.
pub fn origin_statistics(config: &NuclearConfiguration, eps: f64, p_list: &[f64]) -> Result<CellStatistics> {
    let lattice = &config.lattice;
    let mut deltas = Vec::new();
    let mut truncated = false;
    for (i, n) in config.nuclei.iter().enumerate() {
        if lattice.cell_of(n.position) == [0, 0, 0] {
            let d = brute_force_delta(config, i)?;
            truncated |= d.truncated;
            deltas.push(d.delta);
        }
    }
    Ok(CellStatistics::from_deltas([0, 0, 0], deltas, truncated, eps, p_list))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{sample_configuration, ChargeLaw, DisplacementLaw};

    fn lattice_config(l: f64, margin: f64) -> NuclearConfiguration {
        sample_configuration(
            &LatticeSpec::cubic(),
            &DisplacementLaw::PointMass,
            &ChargeLaw::Constant { z: 1.0 },
            Aabb::cube(-0.5, l - 0.5),
            margin,
            0,
        )
        .unwrap()
    }

    #[test]
    fn perfect_lattice_buckets_and_deltas() {
        let c = lattice_config(8.0, 0.0);
        let idx = build_index(&c).unwrap();
        assert_eq!(idx.len(), 512);
        assert_eq!(idx.occupied_buckets(), 512);
        let c = lattice_config(8.0, 1.5);
        let idx = build_index(&c).unwrap();
        for s in window_statistics(&idx, 0.5, &[1.0, 2.0]).unwrap() {
            assert_eq!(s.x0, 1);
            assert_eq!(s.x1, 1.0);
            assert_eq!(s.xp(2.0), Some(4.0));
            assert!(!s.truncated);
        }
    }

    #[test]
    fn two_nuclei() {
        let c = NuclearConfiguration::from_points(
            &[Vec3::ZERO, Vec3::new(0.3, 0.0, 0.0)],
            Aabb::cube(-1.0, 1.0),
            0.0,
        )
        .unwrap();
        let idx = build_index(&c).unwrap();
        for n in &c.nuclei {
            let d = nearest_neighbor_distance(&idx, n).unwrap();
            assert!((d.delta - 0.3).abs() < 1e-10);
            assert!(!d.truncated);
        }
    }

    #[test]
    fn single_nucleus_is_an_error() {
        let c = NuclearConfiguration::from_points(&[Vec3::ZERO], Aabb::cube(-1.0, 1.0), 0.0).unwrap();
        let idx = build_index(&c).unwrap();
        assert!(idx.delta(0).is_err());
    }

    #[test]
    fn empty_index() {
        let c = NuclearConfiguration::from_points(&[], Aabb::cube(-1.0, 1.0), 0.0).unwrap();
        let idx = build_index(&c).unwrap();
        assert!(idx.is_empty());
        assert_eq!(idx.occupied_buckets(), 0);
        assert!(idx.all_deltas().unwrap().is_empty());
    }

    #[test]
    fn margin_cell_rejected() {
        let c = lattice_config(4.0, 1.0);
        let idx = build_index(&c).unwrap();
        assert!(cell_statistics(&idx, [-1, 0, 0], 0.5, &[2.0]).is_err());
        assert!(cell_statistics(&idx, [0, 0, 0], 0.5, &[2.0]).is_ok());
    }

    #[test]
    fn truncation_flag_at_region_edge() {
        let c = NuclearConfiguration::from_points(
            &[Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.9, 0.0, 0.0)],
            Aabb::cube(-0.5, 1.5),
            0.0,
        )
        .unwrap();
        let idx = build_index(&c).unwrap();
        let d = idx.delta(0).unwrap();
        assert!(d.truncated);
        assert!((d.delta - 0.5).abs() < 1e-12);
    }
}
