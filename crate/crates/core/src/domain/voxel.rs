use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{distance, BallDomain};
use crate::error::{Error, Result};

/// Facet directions in the order `-x, +x, -y, +y, -z, +z`.
pub const DIRECTIONS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryLabel {
    /// Facet belongs to `Γ`.
    Dirichlet,
    /// Facet belongs to `∂D \ Γ`.
    Neumann,
}

/// A connected set of cubic cells of side `h` on a regular 3D lattice.
///
/// Cell `(i, j, k)` is centred at `origin + h (i, j, k)`; storage is x-fastest.
/// Every facet between an occupied and an unoccupied cell (or the outside of
/// the box) is a boundary facet; its label is Dirichlet iff the corresponding
/// bit of `dirichlet[cell]` is set.
#[derive(Clone, Debug)]
pub struct VoxelDomain {
    pub origin: [f64; 3],
    pub h: f64,
    pub dims: [usize; 3],
    occupancy: Vec<bool>,
    dirichlet: Vec<u8>,
    cells: Vec<usize>,
    index: Vec<u32>,
}

impl PartialEq for VoxelDomain {
    fn eq(&self, other: &Self) -> bool {
        self.origin == other.origin
            && self.h == other.h
            && self.dims == other.dims
            && self.occupancy == other.occupancy
            && self.dirichlet == other.dirichlet
    }
}

impl VoxelDomain {
    pub fn new(
        origin: [f64; 3],
        h: f64,
        dims: [usize; 3],
        occupancy: Vec<bool>,
        dirichlet: Vec<u8>,
    ) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::param("h", "must be positive and finite"));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("origin", "must be finite"));
        }
        let total = dims[0] * dims[1] * dims[2];
        if occupancy.len() != total {
            return Err(Error::param("mask", format!("expected {total} cells, got {}", occupancy.len())));
        }
        if dirichlet.len() != total {
            return Err(Error::param("labels", format!("expected {total} cells, got {}", dirichlet.len())));
        }
        let mut dom = VoxelDomain {
            origin,
            h,
            dims,
            occupancy,
            dirichlet,
            cells: Vec::new(),
            index: Vec::new(),
        };
        dom.cells = (0..total).filter(|&c| dom.occupancy[c]).collect();
        if dom.cells.is_empty() {
            return Err(Error::EmptyMask);
        }
        let mut index = vec![u32::MAX; total];
        for (i, &c) in dom.cells.iter().enumerate() {
            index[c] = i as u32;
        }
        dom.index = index;

        for c in 0..total {
            let bits = dom.dirichlet[c];
            if bits & !0x3f != 0 {
                return Err(Error::param("labels", format!("cell {c} has invalid label bits")));
            }
            for d in 0..6 {
                if bits & (1 << d) != 0 && (!dom.occupancy[c] || dom.neighbor(c, d).is_some()) {
                    return Err(Error::param(
                        "labels",
                        format!("cell {c} labels a non-boundary facet in direction {d}"),
                    ));
                }
            }
        }
        let components = dom.count_components();
        if components != 1 {
            return Err(Error::Disconnected(components));
        }
        Ok(dom)
    }

    /// Builds a domain from an occupancy predicate on cell centres and a
    /// labelling function `(cell centre, direction) -> label` for boundary facets.
    pub fn from_fn(
        origin: [f64; 3],
        h: f64,
        dims: [usize; 3],
        occupied: impl Fn([f64; 3]) -> bool,
        label: impl Fn([f64; 3], usize) -> BoundaryLabel,
    ) -> Result<Self> {
        let total = dims[0] * dims[1] * dims[2];
        let center = |c: usize| {
            let (i, j, k) = unravel(c, dims);
            [
                origin[0] + h * i as f64,
                origin[1] + h * j as f64,
                origin[2] + h * k as f64,
            ]
        };
        let occupancy: Vec<bool> = (0..total).map(|c| occupied(center(c))).collect();
        let mut dirichlet = vec![0u8; total];
        for c in 0..total {
            if !occupancy[c] {
                continue;
            }
            let (i, j, k) = unravel(c, dims);
            for (d, off) in DIRECTIONS.iter().enumerate() {
                let nb = [i as i64 + off[0], j as i64 + off[1], k as i64 + off[2]];
                let inside = in_box(nb, dims) && occupancy[ravel(nb, dims)];
                if !inside && label(center(c), d) == BoundaryLabel::Dirichlet {
                    dirichlet[c] |= 1 << d;
                }
            }
        }
        VoxelDomain::new(origin, h, dims, occupancy, dirichlet)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Linear indices of occupied cells in storage order.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn dirichlet_bits(&self) -> &[u8] {
        &self.dirichlet
    }

    /// Compact index of an occupied cell.
    pub fn compact(&self, cell: usize) -> Option<usize> {
        match self.index[cell] {
            u32::MAX => None,
            i => Some(i as usize),
        }
    }

    pub fn unravel(&self, cell: usize) -> (usize, usize, usize) {
        unravel(cell, self.dims)
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 3] {
        let (i, j, k) = unravel(cell, self.dims);
        [
            self.origin[0] + self.h * i as f64,
            self.origin[1] + self.h * j as f64,
            self.origin[2] + self.h * k as f64,
        ]
    }

    /// Centre of the facet of `cell` facing direction `dir`.
    pub fn facet_center(&self, cell: usize, dir: usize) -> [f64; 3] {
        let mut c = self.cell_center(cell);
        for (a, o) in c.iter_mut().zip(DIRECTIONS[dir]) {
            *a += 0.5 * self.h * o as f64;
        }
        c
    }

    pub fn is_occupied(&self, ijk: [i64; 3]) -> bool {
        in_box(ijk, self.dims) && self.occupancy[ravel(ijk, self.dims)]
    }

    pub fn linear(&self, ijk: [i64; 3]) -> Option<usize> {
        in_box(ijk, self.dims).then(|| ravel(ijk, self.dims))
    }

    /// Occupied neighbour of an occupied cell, or `None` across a boundary facet.
    pub fn neighbor(&self, cell: usize, dir: usize) -> Option<usize> {
        let (i, j, k) = unravel(cell, self.dims);
        let o = DIRECTIONS[dir];
        let nb = [i as i64 + o[0], j as i64 + o[1], k as i64 + o[2]];
        if in_box(nb, self.dims) {
            let n = ravel(nb, self.dims);
            self.occupancy[n].then_some(n)
        } else {
            None
        }
    }

    /// Label of a facet, or `None` if it is not a boundary facet.
    pub fn facet_label(&self, cell: usize, dir: usize) -> Option<BoundaryLabel> {
        if !self.occupancy[cell] || self.neighbor(cell, dir).is_some() {
            return None;
        }
        Some(if self.dirichlet[cell] & (1 << dir) != 0 {
            BoundaryLabel::Dirichlet
        } else {
            BoundaryLabel::Neumann
        })
    }

    /// All boundary facets as `(cell, direction, label)` in storage order.
    pub fn boundary_facets(&self) -> impl Iterator<Item = (usize, usize, BoundaryLabel)> + '_ {
        self.cells.iter().flat_map(move |&c| {
            (0..6).filter_map(move |d| self.facet_label(c, d).map(|l| (c, d, l)))
        })
    }

    pub fn gamma_empty(&self) -> bool {
        self.dirichlet.iter().all(|&b| b == 0)
    }

    /// Total area of the boundary facets labelled `label`.
    pub fn boundary_area(&self, label: BoundaryLabel) -> f64 {
        self.boundary_facets().filter(|f| f.2 == label).count() as f64 * self.h * self.h
    }

    /// Lattice index of the cell containing `x` (may lie outside the box).
    pub fn locate(&self, x: &[f64]) -> [i64; 3] {
        let mut ijk = [0i64; 3];
        for a in 0..3 {
            ijk[a] = ((x[a] - self.origin[a]) / self.h).round() as i64;
        }
        ijk
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == 3 && self.is_occupied(self.locate(x))
    }

    /// Whether every cell in the `(2 layers + 1)^3` block around `x` is occupied.
    pub fn has_clearance(&self, x: &[f64], layers: i64) -> bool {
        let c = self.locate(x);
        for di in -layers..=layers {
            for dj in -layers..=layers {
                for dk in -layers..=layers {
                    if !self.is_occupied([c[0] + di, c[1] + dj, c[2] + dk]) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Integer shift mapping lattice indices of `self` to those of `other`,
    /// if both live on the same lattice.
    pub fn lattice_shift(&self, other: &VoxelDomain) -> Option<[i64; 3]> {
        if (self.h - other.h).abs() > 1e-12 * self.h {
            return None;
        }
        let mut shift = [0i64; 3];
        for a in 0..3 {
            let s = (self.origin[a] - other.origin[a]) / self.h;
            if (s - s.round()).abs() > 1e-9 {
                return None;
            }
            shift[a] = s.round() as i64;
        }
        Some(shift)
    }

    fn count_components(&self) -> usize {
        let mut seen = vec![false; self.occupancy.len()];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for &start in &self.cells {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(c) = queue.pop_front() {
                for d in 0..6 {
                    if let Some(n) = self.neighbor(c, d) {
                        if !seen[n] {
                            seen[n] = true;
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
        components
    }
}

fn in_box(ijk: [i64; 3], dims: [usize; 3]) -> bool {
    (0..3).all(|a| ijk[a] >= 0 && (ijk[a] as usize) < dims[a])
}

fn ravel(ijk: [i64; 3], dims: [usize; 3]) -> usize {
    ijk[0] as usize + dims[0] * (ijk[1] as usize + dims[1] * ijk[2] as usize)
}

fn unravel(c: usize, dims: [usize; 3]) -> (usize, usize, usize) {
    (c % dims[0], (c / dims[0]) % dims[1], c / (dims[0] * dims[1]))
}

/// Voxelizes a ball domain on the global lattice `h Z^3`, so that voxelizations
/// of different domains at the same `h` share cells.
pub(crate) fn voxelize_domain(dom: &BallDomain, h: f64) -> Result<VoxelDomain> {
    let ball = &dom.ball;
    if ball.dim() != 3 {
        return Err(Error::Unsupported(format!(
            "voxel grids are three-dimensional, domain has n = {}",
            ball.dim()
        )));
    }
    if !(h > 0.0) || !(h < ball.radius / 4.0) {
        return Err(Error::param(
            "h",
            format!("need 0 < h < radius/4 = {}, got {h}", ball.radius / 4.0),
        ));
    }
    let c = ball.center.coords();
    let mut lo = [0i64; 3];
    let mut dims = [0usize; 3];
    for a in 0..3 {
        lo[a] = ((c[a] - ball.radius) / h).floor() as i64 - 1;
        let hi = ((c[a] + ball.radius) / h).ceil() as i64 + 1;
        dims[a] = (hi - lo[a] + 1) as usize;
    }
    let origin = [lo[0] as f64 * h, lo[1] as f64 * h, lo[2] as f64 * h];
    let in_ball = |x: &[f64]| distance(x, c) < ball.radius;
    VoxelDomain::from_fn(
        origin,
        h,
        dims,
        |x| dom.contains(&x),
        |x, d| {
            if let Some(cut) = &dom.cut {
                let mut nb = x;
                for (a, o) in nb.iter_mut().zip(DIRECTIONS[d]) {
                    *a += h * o as f64;
                }
                if in_ball(&nb) && !cut.keeps(c, &nb) {
                    return cut.face;
                }
            }
            if dom.gamma.selects(c, &x) {
                BoundaryLabel::Dirichlet
            } else {
                BoundaryLabel::Neumann
            }
        },
    )
}

/// Run-length encoding as `[count, value]` byte pairs with `count` in `1..=255`.
pub fn rle_encode(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut iter = bytes.iter().peekable();
    while let Some(&v) = iter.next() {
        let mut run = 1u8;
        while run < u8::MAX && iter.peek() == Some(&&v) {
            iter.next();
            run += 1;
        }
        out.push(run);
        out.push(v);
    }
    out
}

pub fn rle_decode(rle: &[u8], expected: usize) -> std::result::Result<Vec<u8>, String> {
    if rle.len() % 2 != 0 {
        return Err("run-length data must have an even number of bytes".into());
    }
    let mut out = Vec::with_capacity(expected);
    for pair in rle.chunks_exact(2) {
        if pair[0] == 0 {
            return Err("zero-length run".into());
        }
        out.extend(std::iter::repeat(pair[1]).take(pair[0] as usize));
    }
    if out.len() != expected {
        return Err(format!("decoded {} cells, expected {expected}", out.len()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{voxelize_ball, BallSpec, Point, VoxelGamma};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_ball_cell_count_matches_center_count() {
        let h = 1.0 / 8.0;
        let v = voxelize_ball(&BallSpec::unit(3), h, &VoxelGamma::FullDirichlet).unwrap();
        // oracle: count lattice points h Z^3 with |c| < 1
        let n = (1.0 / h) as i64 + 1;
        let mut count = 0;
        for i in -n..=n {
            for j in -n..=n {
                for k in -n..=n {
                    let r2 = ((i * i + j * j + k * k) as f64) * h * h;
                    if r2 < 1.0 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(v.n_cells(), count);
        let expected = 4.0 / 3.0 * PI / h.powi(3);
        assert!((v.n_cells() as f64 - expected).abs() / expected < 0.1);
        assert!(v.boundary_facets().all(|f| f.2 == BoundaryLabel::Dirichlet));
    }

    #[test]
    fn neumann_is_label_swap() {
        let h = 1.0 / 8.0;
        let d = voxelize_ball(&BallSpec::unit(3), h, &VoxelGamma::FullDirichlet).unwrap();
        let n = voxelize_ball(&BallSpec::unit(3), h, &VoxelGamma::FullNeumann).unwrap();
        assert_eq!(d.occupancy(), n.occupancy());
        assert!(n.gamma_empty());
        assert_eq!(
            d.boundary_facets().count(),
            n.boundary_facets().filter(|f| f.2 == BoundaryLabel::Neumann).count()
        );
    }

    #[test]
    fn coarse_spacing_rejected() {
        let e = voxelize_ball(&BallSpec::unit(3), 1.0, &VoxelGamma::FullDirichlet);
        assert!(e.is_err());
    }

    #[test]
    fn mask_symmetric_about_center_cell() {
        let ball = BallSpec::new(Point::from([0.25, -0.5, 0.125]), 0.8).unwrap();
        let v = voxelize_ball(&ball, 1.0 / 16.0, &VoxelGamma::FullDirichlet).unwrap();
        let c = v.locate(ball.center.coords());
        for &cell in v.cells() {
            let (i, j, k) = v.unravel(cell);
            let mirrored = [2 * c[0] - i as i64, 2 * c[1] - j as i64, 2 * c[2] - k as i64];
            assert!(v.is_occupied(mirrored));
        }
    }

    #[test]
    fn rejects_disconnected_mask() {
        let dims = [5, 1, 1];
        let occ = vec![true, false, false, false, true];
        let e = VoxelDomain::new([0.0; 3], 1.0, dims, occ, vec![0; 5]).unwrap_err();
        assert!(matches!(e, Error::Disconnected(2)));
    }

    #[test]
    fn rejects_label_on_interior_facet() {
        let dims = [2, 1, 1];
        let occ = vec![true, true];
        // bit 1 = +x facet of cell 0, which faces an occupied cell
        let e = VoxelDomain::new([0.0; 3], 1.0, dims, occ, vec![0b10, 0]).unwrap_err();
        assert!(matches!(e, Error::InvalidParameter { .. }));
    }

    proptest! {
        #[test]
        fn rle_roundtrip(bytes in proptest::collection::vec(0u8..4, 0..2000)) {
            let enc = rle_encode(&bytes);
            prop_assert_eq!(rle_decode(&enc, bytes.len()).unwrap(), bytes);
        }
    }
}
