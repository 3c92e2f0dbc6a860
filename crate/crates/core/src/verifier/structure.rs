//! Set conditions on domains and their Dirichlet parts, decided analytically
//! for whole balls and facet by facet on a shared voxel lattice otherwise.

use std::collections::HashSet;
use std::sync::Arc;

use crate::domain::{BallSpec, BoundaryLabel, DomainSpec, GammaRule, VoxelDomain, DIRECTIONS};
use crate::error::{Error, Result};

/// Relation of a whole ball `a` to a whole ball `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum BallRelation {
    Same,
    StrictlyInside,
    Other,
}

pub(crate) fn whole_ball(d: &DomainSpec) -> Option<(&BallSpec, &GammaRule)> {
    match d {
        DomainSpec::Ball(b) if b.cut.is_none() => Some((&b.ball, &b.gamma)),
        _ => None,
    }
}

pub(crate) fn relation(a: &BallSpec, b: &BallSpec) -> BallRelation {
    let d = a.center.distance(&b.center);
    if d == 0.0 && a.radius == b.radius {
        BallRelation::Same
    } else if d + a.radius < b.radius * (1.0 - 1e-12) {
        BallRelation::StrictlyInside
    } else {
        BallRelation::Other
    }
}

pub(crate) fn is_full(g: &GammaRule, radius: f64) -> bool {
    GammaRule::Full.subset_of(g, radius)
}

pub(crate) fn is_empty(g: &GammaRule, radius: f64) -> bool {
    g.subset_of(&GammaRule::Empty, radius)
}

/// Spacing for facet-level checks: the spacing of any voxel domain, else the
/// finest preferred spacing, refined until every ball spans several cells.
pub(crate) fn check_spacing(domains: &[&DomainSpec], default_h: f64) -> Result<f64> {
    let mut h = default_h;
    let mut fixed: Option<f64> = None;
    for d in domains {
        match d {
            DomainSpec::Voxel(v) => {
                if let Some(f) = fixed {
                    if (f - v.h).abs() > 1e-12 * f {
                        return Err(Error::param("h", "voxel domains use different spacings"));
                    }
                }
                fixed = Some(v.h);
            }
            DomainSpec::Ball(b) => {
                if let Some(p) = b.h {
                    h = h.min(p);
                }
            }
        }
    }
    if let Some(f) = fixed {
        return Ok(f);
    }
    for d in domains {
        if let DomainSpec::Ball(b) = d {
            while !(h < b.ball.radius / 4.0) {
                h /= 2.0;
            }
        }
    }
    Ok(h)
}

/// A voxel domain placed on a reference lattice.
pub(crate) struct Placed {
    dom: Arc<VoxelDomain>,
    shift: [i64; 3],
}

impl Placed {
    pub(crate) fn new(d: &DomainSpec, h: f64, reference: Option<&VoxelDomain>) -> Result<Self> {
        if d.dim() != 3 {
            return Err(Error::Unsupported(
                "facet-level checks need three-dimensional domains".into(),
            ));
        }
        let dom = d.voxelize(h)?;
        let shift = match reference {
            Some(r) => dom
                .lattice_shift(r)
                .ok_or_else(|| Error::param("origin", "voxel domains do not share a lattice"))?,
            None => [0; 3],
        };
        Ok(Placed { dom, shift })
    }

    pub(crate) fn voxels(&self) -> &VoxelDomain {
        &self.dom
    }

    fn global(&self, cell: usize) -> [i64; 3] {
        let (i, j, k) = self.dom.unravel(cell);
        [
            i as i64 + self.shift[0],
            j as i64 + self.shift[1],
            k as i64 + self.shift[2],
        ]
    }

    fn cell_at(&self, g: [i64; 3]) -> Option<usize> {
        let local = [g[0] - self.shift[0], g[1] - self.shift[1], g[2] - self.shift[2]];
        self.dom
            .linear(local)
            .filter(|&c| self.dom.occupancy()[c])
    }

    pub(crate) fn occupied(&self, g: [i64; 3]) -> bool {
        self.cell_at(g).is_some()
    }

    pub(crate) fn cell_set(&self) -> HashSet<[i64; 3]> {
        self.dom.cells().iter().map(|&c| self.global(c)).collect()
    }

    /// Boundary facets as `(global cell index, direction, label)`.
    pub(crate) fn facets(&self) -> Vec<([i64; 3], usize, BoundaryLabel)> {
        self.dom
            .boundary_facets()
            .map(|(c, d, l)| (self.global(c), d, l))
            .collect()
    }

    pub(crate) fn label(&self, g: [i64; 3], dir: usize) -> Option<BoundaryLabel> {
        self.cell_at(g).and_then(|c| self.dom.facet_label(c, dir))
    }
}

pub(crate) fn step(g: [i64; 3], dir: usize) -> [i64; 3] {
    let o = DIRECTIONS[dir];
    [g[0] + o[0], g[1] + o[1], g[2] + o[2]]
}

pub(crate) fn structural(condition: &str, detail: impl Into<String>) -> Error {
    Error::Structural {
        condition: condition.into(),
        detail: detail.into(),
    }
}

/// `inner ⊆ outer`, analytically for balls where possible.
pub(crate) fn check_containment(
    inner: &DomainSpec,
    outer: &DomainSpec,
    h: f64,
    label: &str,
) -> Result<()> {
    if let (DomainSpec::Ball(a), DomainSpec::Ball(b)) = (inner, outer) {
        if b.cut.is_none() {
            if a.ball.inside(&b.ball) {
                return Ok(());
            }
            if a.cut.is_none() {
                return Err(Error::Containment(format!("{label} is not inside its parent")));
            }
        }
    }
    let po = Placed::new(outer, h, None)?;
    let pi = Placed::new(inner, h, Some(po.voxels()))?;
    if pi.cell_set().iter().all(|g| po.occupied(*g)) {
        Ok(())
    } else {
        Err(Error::Containment(format!("{label} has cells outside its parent")))
    }
}

/// Pairwise disjointness of the given domains.
pub(crate) fn check_disjoint(domains: &[&DomainSpec], h: f64) -> Result<()> {
    for i in 0..domains.len() {
        for j in (i + 1)..domains.len() {
            let (a, b) = (domains[i], domains[j]);
            if let (Some((ba, _)), Some((bb, _))) = (whole_ball(a), whole_ball(b)) {
                if ba.disjoint_from(bb) {
                    continue;
                }
                return Err(Error::Overlap(format!("parts {i} and {j}")));
            }
            let pa = Placed::new(a, h, None)?;
            let pb = Placed::new(b, h, Some(pa.voxels()))?;
            let sa = pa.cell_set();
            if pb.cell_set().iter().any(|g| sa.contains(g)) {
                return Err(Error::Overlap(format!("parts {i} and {j} share cells")));
            }
        }
    }
    Ok(())
}
