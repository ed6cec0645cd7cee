//! Deterministic/stochastic plane splitting, subarray tiling, zero-row
//! squeezing, and ensemble packing.
//!
//! A layer's lowered matrix W_i decomposes as W_i = W^D + W_i^S: W^D holds
//! the fixed synapses (shared by every ensemble), W_i^S holds the sampled
//! ones. Only rows of W_i^S with at least one probabilistic entry need to be
//! mapped, so each subarray-sized tile is squeezed to its non-zero rows and
//! the squeezed blocks of all ensembles are packed into physical subarrays.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// One probabilistic position in a lowered layer matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpEntry {
    pub row: usize,
    pub col: usize,
    pub p: f32,
}

/// Deterministic plane plus the stochastic-plane template.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSplit {
    /// W^D: +1/-1 where p_w is 1/0, else 0.
    pub det: Matrix<i8>,
    /// Probabilistic positions, row-major order.
    pub template: Vec<SpEntry>,
}

/// Split a lowered probability matrix into planes.
pub fn split_dp_sp(prob: &Matrix<f32>) -> PlaneSplit {
    let mut det = Matrix::zeros(prob.rows, prob.cols);
    let mut template = Vec::new();
    for r in 0..prob.rows {
        for c in 0..prob.cols {
            let p = prob.get(r, c);
            if p == 0.0 {
                det.set(r, c, -1);
            } else if p == 1.0 {
                det.set(r, c, 1);
            } else {
                template.push(SpEntry { row: r, col: c, p });
            }
        }
    }
    PlaneSplit { det, template }
}

/// y = W^D x + W_i^S x, with the SP values read from the sampled ensemble
/// matrix. Exact integer arithmetic.
pub fn decomposed_mvm(
    split: &PlaneSplit,
    ensemble: &Matrix<i8>,
    x: &[i64],
) -> Result<Vec<i64>> {
    if x.len() != split.det.rows {
        return Err(Error::Shape(format!(
            "input length {} does not match {} rows",
            x.len(),
            split.det.rows
        )));
    }
    let mut y = vec![0i64; split.det.cols];
    for r in 0..split.det.rows {
        let xv = x[r];
        if xv == 0 {
            continue;
        }
        for c in 0..split.det.cols {
            y[c] += split.det.get(r, c) as i64 * xv;
        }
    }
    for e in &split.template {
        y[e.col] += ensemble.get(e.row, e.col) as i64 * x[e.row];
    }
    Ok(y)
}

/// One subarray-sized tile of a lowered matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileDesc {
    pub id: usize,
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Partition a rows x cols matrix into tiles of at most sub_rows x sub_cols.
pub fn tile(rows: usize, cols: usize, sub_rows: usize, sub_cols: usize) -> Vec<TileDesc> {
    assert!(sub_rows >= 1 && sub_cols >= 1);
    let mut tiles = Vec::new();
    let mut id = 0;
    let mut r0 = 0;
    while r0 < rows {
        let tr = sub_rows.min(rows - r0);
        let mut c0 = 0;
        while c0 < cols {
            let tc = sub_cols.min(cols - c0);
            tiles.push(TileDesc { id, row0: r0, col0: c0, rows: tr, cols: tc });
            id += 1;
            c0 += tc;
        }
        r0 += tr;
    }
    tiles
}

/// One probabilistic position inside a squeezed tile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezedEntry {
    pub local_col: usize,
    pub abs_row: usize,
    pub abs_col: usize,
    pub p: f32,
}

/// A tile with its all-deterministic rows removed.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezedSubmatrix {
    pub tile: TileDesc,
    /// Retained tile-local row indices, strictly increasing.
    pub gather: Vec<usize>,
    /// CSR offsets into `entries`, one span per retained row.
    pub row_ptr: Vec<usize>,
    pub entries: Vec<SqueezedEntry>,
    /// Retained rows / tile rows.
    pub f_p: f64,
}

impl SqueezedSubmatrix {
    pub fn retained_rows(&self) -> usize {
        self.gather.len()
    }
}

/// Drop the zero rows of one tile of the SP template.
pub fn squeeze_rows(template: &[SpEntry], tile: &TileDesc) -> SqueezedSubmatrix {
    let mut per_row: Vec<Vec<SqueezedEntry>> = vec![Vec::new(); tile.rows];
    for e in template {
        if e.row >= tile.row0
            && e.row < tile.row0 + tile.rows
            && e.col >= tile.col0
            && e.col < tile.col0 + tile.cols
        {
            per_row[e.row - tile.row0].push(SqueezedEntry {
                local_col: e.col - tile.col0,
                abs_row: e.row,
                abs_col: e.col,
                p: e.p,
            });
        }
    }
    let mut gather = Vec::new();
    let mut row_ptr = vec![0];
    let mut entries = Vec::new();
    for (local, row) in per_row.into_iter().enumerate() {
        if !row.is_empty() {
            gather.push(local);
            entries.extend(row);
            row_ptr.push(entries.len());
        }
    }
    let f_p = gather.len() as f64 / tile.rows as f64;
    SqueezedSubmatrix { tile: *tile, gather, row_ptr, entries, f_p }
}

/// A physical subarray holding squeezed row blocks from one or more ensembles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedSubarray {
    pub rows: usize,
    pub cols: usize,
    pub segments: Vec<Segment>,
    pub used_rows: usize,
}

/// A contiguous run of squeezed rows for one ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    /// 1-based ensemble index.
    pub ensemble: usize,
    pub tile_id: usize,
    /// First physical row occupied in the subarray.
    pub subarray_row0: usize,
    /// Half-open range into the tile's gather map.
    pub gather_lo: usize,
    pub gather_hi: usize,
}

/// Pack the squeezed tiles of all ensembles into subarrays. Ensemble blocks
/// may split across subarray boundaries; partial column sums add digitally.
pub fn pack_ensembles(
    sq: &SqueezedSubmatrix,
    n_mc: usize,
    sub_rows: usize,
    sub_cols: usize,
) -> Result<Vec<PackedSubarray>> {
    if sq.tile.cols > sub_cols {
        return Err(Error::Shape(format!(
            "tile column extent {} exceeds subarray width {sub_cols}",
            sq.tile.cols
        )));
    }
    let k = sq.retained_rows();
    if k == 0 || n_mc == 0 {
        return Ok(Vec::new());
    }
    let mut subarrays: Vec<PackedSubarray> = Vec::new();
    let mut cur = PackedSubarray { rows: sub_rows, cols: sub_cols, segments: Vec::new(), used_rows: 0 };
    for ensemble in 1..=n_mc {
        let mut lo = 0;
        while lo < k {
            if cur.used_rows == sub_rows {
                subarrays.push(std::mem::replace(
                    &mut cur,
                    PackedSubarray { rows: sub_rows, cols: sub_cols, segments: Vec::new(), used_rows: 0 },
                ));
            }
            let take = (k - lo).min(sub_rows - cur.used_rows);
            cur.segments.push(Segment {
                ensemble,
                tile_id: sq.tile.id,
                subarray_row0: cur.used_rows,
                gather_lo: lo,
                gather_hi: lo + take,
            });
            cur.used_rows += take;
            lo += take;
        }
    }
    if cur.used_rows > 0 {
        subarrays.push(cur);
    }
    Ok(subarrays)
}

/// SP partial sums for ensemble `i`: gathers x through the segments of the
/// packed subarrays and accumulates exact integer column sums of W_i^S x.
/// Output has `total_cols` entries (absolute column indexing).
pub fn sp_mvm(
    packed: &[PackedSubarray],
    sq: &SqueezedSubmatrix,
    ensemble_values: &Matrix<i8>,
    x: &[i64],
    ensemble: usize,
    total_cols: usize,
) -> Result<Vec<i64>> {
    let mut y = vec![0i64; total_cols];
    if sq.retained_rows() == 0 {
        return Ok(y);
    }
    let mut seen = false;
    for sub in packed {
        for seg in sub.segments.iter().filter(|s| s.ensemble == ensemble) {
            seen = true;
            for j in seg.gather_lo..seg.gather_hi {
                let xv = x[sq.tile.row0 + sq.gather[j]];
                if xv == 0 {
                    continue;
                }
                for e in &sq.entries[sq.row_ptr[j]..sq.row_ptr[j + 1]] {
                    y[e.abs_col] += ensemble_values.get(e.abs_row, e.abs_col) as i64 * xv;
                }
            }
        }
    }
    if !seen {
        return Err(Error::Range(format!("ensemble {ensemble} not present in packing")));
    }
    Ok(y)
}

/// Complete SP mapping of one layer: tiles, squeezed tiles, and packing.
#[derive(Debug, Clone)]
pub struct LayerSpMapping {
    pub tiles: Vec<TileDesc>,
    pub squeezed: Vec<SqueezedSubmatrix>,
    /// Packed subarrays per tile position.
    pub packed: Vec<Vec<PackedSubarray>>,
}

impl LayerSpMapping {
    pub fn subarray_count(&self) -> usize {
        self.packed.iter().map(|p| p.len()).sum()
    }

    pub fn retained_rows_per_ensemble(&self) -> usize {
        self.squeezed.iter().map(|s| s.retained_rows()).sum()
    }
}

/// Tile, squeeze, and pack a layer's SP template for n_mc ensembles.
pub fn map_layer_sp(
    split: &PlaneSplit,
    sub_rows: usize,
    sub_cols: usize,
    n_mc: usize,
) -> Result<LayerSpMapping> {
    let tiles = tile(split.det.rows, split.det.cols, sub_rows, sub_cols);
    let mut squeezed = Vec::with_capacity(tiles.len());
    let mut packed = Vec::with_capacity(tiles.len());
    for t in &tiles {
        let sq = squeeze_rows(&split.template, t);
        packed.push(pack_ensembles(&sq, n_mc, sub_rows, sub_cols)?);
        squeezed.push(sq);
    }
    Ok(LayerSpMapping { tiles, squeezed, packed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob_matrix(rows: usize, cols: usize, entries: &[(usize, usize, f32)]) -> Matrix<f32> {
        // deterministic background: +1 (p=1)
        let mut m = Matrix::filled(rows, cols, 1.0f32);
        for &(r, c, p) in entries {
            m.set(r, c, p);
        }
        m
    }

    #[test]
    fn split_matches_definition() {
        let mut p = Matrix::filled(2, 2, 1.0f32);
        p.set(0, 0, 0.7);
        p.set(1, 0, 0.0);
        let s = split_dp_sp(&p);
        assert_eq!(s.det.data, vec![0, 1, -1, 1]);
        assert_eq!(s.template, vec![SpEntry { row: 0, col: 0, p: 0.7 }]);
    }

    #[test]
    fn fully_deterministic_split() {
        let p = prob_matrix(3, 3, &[]);
        let s = split_dp_sp(&p);
        assert!(s.template.is_empty());
        assert!(s.det.data.iter().all(|&w| w == 1));
    }

    #[test]
    fn fully_probabilistic_split() {
        let p = Matrix::filled(3, 3, 0.5f32);
        let s = split_dp_sp(&p);
        assert_eq!(s.template.len(), 9);
        assert!(s.det.data.iter().all(|&w| w == 0));
    }

    #[test]
    fn decomposed_mvm_zero_input() {
        let p = prob_matrix(4, 2, &[(1, 0, 0.5)]);
        let s = split_dp_sp(&p);
        let ens = Matrix::filled(4, 2, 1i8);
        assert_eq!(decomposed_mvm(&s, &ens, &[0; 4]).unwrap(), vec![0, 0]);
    }

    #[test]
    fn decomposed_mvm_dimension_mismatch() {
        let p = prob_matrix(4, 2, &[]);
        let s = split_dp_sp(&p);
        let ens = Matrix::filled(4, 2, 1i8);
        assert!(decomposed_mvm(&s, &ens, &[1; 3]).is_err());
    }

    #[test]
    fn tiling_counts() {
        assert_eq!(tile(256, 256, 128, 128).len(), 4);
        let t = tile(130, 128, 128, 128);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].rows, 128);
        assert_eq!(t[1].rows, 2);
        assert_eq!(tile(100, 100, 128, 128).len(), 1);
    }

    #[test]
    fn squeeze_counts_and_round_trip() {
        let t = TileDesc { id: 0, row0: 0, col0: 0, rows: 128, cols: 128 };
        let template: Vec<SpEntry> =
            (0..42).map(|i| SpEntry { row: i * 3, col: i % 128, p: 0.5 }).collect();
        let sq = squeeze_rows(&template, &t);
        assert_eq!(sq.retained_rows(), 42);
        assert!((sq.f_p - 42.0 / 128.0).abs() < 1e-12);
        // Round-trip: entries reconstruct the template positions exactly.
        let mut back: Vec<SpEntry> = sq
            .entries
            .iter()
            .map(|e| SpEntry { row: e.abs_row, col: e.abs_col, p: e.p })
            .collect();
        back.sort_by_key(|e| (e.row, e.col));
        let mut orig = template.clone();
        orig.sort_by_key(|e| (e.row, e.col));
        assert_eq!(back, orig);
    }

    #[test]
    fn squeeze_empty_and_full() {
        let t = TileDesc { id: 0, row0: 0, col0: 0, rows: 8, cols: 4 };
        let sq = squeeze_rows(&[], &t);
        assert_eq!(sq.retained_rows(), 0);
        assert_eq!(sq.f_p, 0.0);

        let template: Vec<SpEntry> =
            (0..8).map(|r| SpEntry { row: r, col: 0, p: 0.5 }).collect();
        let sq = squeeze_rows(&template, &t);
        assert_eq!(sq.f_p, 1.0);
        assert_eq!(sq.gather, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn packing_fixture_42_rows_10_ensembles() {
        let t = TileDesc { id: 0, row0: 0, col0: 0, rows: 128, cols: 128 };
        let template: Vec<SpEntry> =
            (0..42).map(|i| SpEntry { row: i, col: 0, p: 0.5 }).collect();
        let sq = squeeze_rows(&template, &t);
        let packed = pack_ensembles(&sq, 10, 128, 128).unwrap();
        assert_eq!(packed.len(), 4); // ceil(420 / 128)
        let total: usize = packed.iter().map(|s| s.used_rows).sum();
        assert_eq!(total, 420);
    }

    #[test]
    fn packing_13_rows_needs_two_12_needs_one() {
        let t = TileDesc { id: 0, row0: 0, col0: 0, rows: 128, cols: 128 };
        for (k, expect) in [(13usize, 2usize), (12, 1)] {
            let template: Vec<SpEntry> =
                (0..k).map(|i| SpEntry { row: i, col: 0, p: 0.5 }).collect();
            let sq = squeeze_rows(&template, &t);
            assert_eq!(pack_ensembles(&sq, 10, 128, 128).unwrap().len(), expect);
        }
    }

    #[test]
    fn packing_empty_template_zero_subarrays() {
        let t = TileDesc { id: 0, row0: 0, col0: 0, rows: 128, cols: 128 };
        let sq = squeeze_rows(&[], &t);
        assert!(pack_ensembles(&sq, 1, 128, 128).unwrap().is_empty());
    }

    #[test]
    fn packing_rejects_wide_tile() {
        let t = TileDesc { id: 0, row0: 0, col0: 0, rows: 8, cols: 64 };
        let sq = squeeze_rows(&[SpEntry { row: 0, col: 0, p: 0.5 }], &t);
        assert!(pack_ensembles(&sq, 1, 8, 32).is_err());
    }

    #[test]
    fn sp_mvm_matches_dense_oracle_across_split_segments() {
        // 20 retained rows, subarray of 8 rows: segments split across subarrays.
        let t = TileDesc { id: 0, row0: 0, col0: 0, rows: 32, cols: 8 };
        let template: Vec<SpEntry> = (0..20)
            .flat_map(|i| {
                [
                    SpEntry { row: i, col: i % 8, p: 0.5 },
                    SpEntry { row: i, col: (i + 3) % 8, p: 0.5 },
                ]
            })
            .collect();
        let sq = squeeze_rows(&template, &t);
        let packed = pack_ensembles(&sq, 3, 8, 8).unwrap();
        assert!(packed.len() > 1);

        let mut ens = Matrix::filled(32, 8, 0i8);
        for (n, e) in template.iter().enumerate() {
            ens.set(e.row, e.col, if n % 2 == 0 { 1 } else { -1 });
        }
        let x: Vec<i64> = (0..32).map(|i| i as i64 - 16).collect();
        for ensemble in 1..=3 {
            let y = sp_mvm(&packed, &sq, &ens, &x, ensemble, 8).unwrap();
            // dense W^S oracle
            let mut want = vec![0i64; 8];
            for e in &template {
                want[e.col] += ens.get(e.row, e.col) as i64 * x[e.row];
            }
            assert_eq!(y, want);
        }
    }

    #[test]
    fn sp_mvm_unknown_ensemble_rejected() {
        let t = TileDesc { id: 0, row0: 0, col0: 0, rows: 4, cols: 2 };
        let sq = squeeze_rows(&[SpEntry { row: 0, col: 0, p: 0.5 }], &t);
        let packed = pack_ensembles(&sq, 2, 4, 2).unwrap();
        let ens = Matrix::filled(4, 2, 1i8);
        assert!(sp_mvm(&packed, &sq, &ens, &[1; 4], 5, 2).is_err());
    }

    #[test]
    fn sp_mvm_zero_on_deterministic_rows() {
        let t = TileDesc { id: 0, row0: 0, col0: 0, rows: 4, cols: 2 };
        let sq = squeeze_rows(&[SpEntry { row: 1, col: 0, p: 0.5 }], &t);
        let packed = pack_ensembles(&sq, 1, 4, 2).unwrap();
        let ens = Matrix::filled(4, 2, 1i8);
        // x nonzero only at dropped rows
        let y = sp_mvm(&packed, &sq, &ens, &[5, 0, 7, 9], 1, 2).unwrap();
        assert_eq!(y, vec![0, 0]);
    }
}
