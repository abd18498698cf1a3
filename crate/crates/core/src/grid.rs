//! Uniform cell-centered mesh on an axis-aligned rectangle.
//!
//! Cells are numbered row-major (`c = j * nx + i`). Faces are stored in a fixed
//! order: interior x-normal faces, interior y-normal faces, then the boundary
//! faces of the left, right, bottom and top edges. Every face carries a unit
//! normal along `+x`/`+y` for interior faces and pointing outward for boundary
//! faces; all face fields in this crate are components along that normal.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// First terminal.
    D1,
    /// Second terminal.
    D2,
    /// Insulating boundary.
    N,
}

impl BoundaryTag {
    /// Terminal index (0 or 1) for `D1`/`D2`.
    pub fn terminal(self) -> Option<usize> {
        match self {
            BoundaryTag::D1 => Some(0),
            BoundaryTag::D2 => Some(1),
            BoundaryTag::N => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    fn index(self) -> usize {
        match self {
            Edge::Left => 0,
            Edge::Right => 1,
            Edge::Bottom => 2,
            Edge::Top => 3,
        }
    }
}

/// Part of an edge, in fractions of the edge length (measured along `+x` or `+y`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub tag: BoundaryTag,
}

impl Segment {
    pub fn new(start: f64, end: f64, tag: BoundaryTag) -> Self {
        Self { start, end, tag }
    }

    pub fn whole(tag: BoundaryTag) -> Self {
        Self::new(0.0, 1.0, tag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLayout {
    edges: [Vec<Segment>; 4],
}

impl Default for BoundaryLayout {
    /// Left edge is terminal 1, right edge terminal 2, top and bottom insulate.
    fn default() -> Self {
        Self::uniform(BoundaryTag::D1, BoundaryTag::D2, BoundaryTag::N, BoundaryTag::N)
    }
}

impl BoundaryLayout {
    pub fn uniform(left: BoundaryTag, right: BoundaryTag, bottom: BoundaryTag, top: BoundaryTag) -> Self {
        Self {
            edges: [
                vec![Segment::whole(left)],
                vec![Segment::whole(right)],
                vec![Segment::whole(bottom)],
                vec![Segment::whole(top)],
            ],
        }
    }

    pub fn set_edge(&mut self, edge: Edge, segments: Vec<Segment>) {
        self.edges[edge.index()] = segments;
    }

    pub fn edge(&self, edge: Edge) -> &[Segment] {
        &self.edges[edge.index()]
    }

    fn tag_at(&self, edge: Edge, frac: f64) -> BoundaryTag {
        let segs = self.edge(edge);
        segs.iter()
            .find(|s| frac >= s.start && frac < s.end)
            .unwrap_or(&segs[segs.len() - 1])
            .tag
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub length_x: f64,
    pub length_y: f64,
    pub layout: BoundaryLayout,
}

impl DomainSpec {
    pub fn rectangle(length_x: f64, length_y: f64) -> Self {
        Self {
            length_x,
            length_y,
            layout: BoundaryLayout::default(),
        }
    }

    pub fn unit_square() -> Self {
        Self::rectangle(1.0, 1.0)
    }

    pub fn with_layout(mut self, layout: BoundaryLayout) -> Self {
        self.layout = layout;
        self
    }

    fn edge_length(&self, edge: Edge) -> f64 {
        match edge {
            Edge::Left | Edge::Right => self.length_y,
            Edge::Bottom | Edge::Top => self.length_x,
        }
    }

    /// Checks positive extents, that every edge is partitioned by its segments,
    /// and that both terminals have positive length.
    pub fn validate(&self) -> Result<()> {
        if !(self.length_x > 0.0 && self.length_y > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "extents must be positive, got {} x {}",
                self.length_x, self.length_y
            )));
        }
        let mut terminal_length = [0.0f64; 2];
        for edge in Edge::ALL {
            let segs = self.layout.edge(edge);
            if segs.is_empty() {
                return Err(Error::InvalidDomain(format!("{edge:?} edge has no label")));
            }
            let mut cursor = 0.0;
            for s in segs {
                if s.start != cursor || !(s.end > s.start) || s.end > 1.0 {
                    return Err(Error::InvalidDomain(format!(
                        "{edge:?} edge segments must tile [0, 1] in order with positive length"
                    )));
                }
                cursor = s.end;
                if let Some(t) = s.tag.terminal() {
                    terminal_length[t] += (s.end - s.start) * self.edge_length(edge);
                }
            }
            if cursor != 1.0 {
                return Err(Error::InvalidDomain(format!("{edge:?} edge is not fully labeled")));
            }
        }
        for (t, len) in terminal_length.iter().enumerate() {
            if *len <= 0.0 {
                return Err(Error::InvalidDomain(format!("terminal D{} has zero length", t + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub owner: usize,
    pub neighbor: Option<usize>,
    pub axis: Axis,
    /// Sign of the face normal along its axis (`-1` only on left/bottom boundary faces).
    pub normal_sign: f64,
    pub length: f64,
    /// Owner-to-neighbor center distance, or owner center to face for boundary faces.
    pub dist: f64,
    pub midpoint: (f64, f64),
    pub tag: Option<BoundaryTag>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.neighbor.is_none()
    }

    /// `+1` if the face normal points out of `cell`, `-1` otherwise.
    #[inline]
    pub fn outward_sign(&self, cell: usize) -> f64 {
        if cell == self.owner {
            1.0
        } else {
            -1.0
        }
    }

    /// Weight of this face in the discrete `L^2(Omega)` product of face fields.
    #[inline]
    pub fn quadrature_weight(&self) -> f64 {
        self.length * self.dist
    }

    /// Coupling coefficient of the two-point flux across the face.
    #[inline]
    pub fn transmissibility(&self) -> f64 {
        self.length / self.dist
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub length_x: f64,
    pub length_y: f64,
    pub faces: Vec<Face>,
    /// West, east, south, north face of every cell.
    pub cell_faces: Vec<[usize; 4]>,
}

pub fn build_mesh(spec: &DomainSpec, nx: usize, ny: usize) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::MeshTooCoarse { nx, ny });
    }
    spec.validate()?;
    let hx = spec.length_x / nx as f64;
    let hy = spec.length_y / ny as f64;
    let n_faces = nx * (ny - 1) + (nx - 1) * ny + 2 * (nx + ny);
    let mut faces = Vec::with_capacity(n_faces);
    let mut cell_faces = vec![[usize::MAX; 4]; nx * ny];
    let cell = |i: usize, j: usize| j * nx + i;

    for j in 0..ny {
        for i in 1..nx {
            let (l, r) = (cell(i - 1, j), cell(i, j));
            cell_faces[l][1] = faces.len();
            cell_faces[r][0] = faces.len();
            faces.push(Face {
                owner: l,
                neighbor: Some(r),
                axis: Axis::X,
                normal_sign: 1.0,
                length: hy,
                dist: hx,
                midpoint: (i as f64 * hx, (j as f64 + 0.5) * hy),
                tag: None,
            });
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let (b, t) = (cell(i, j - 1), cell(i, j));
            cell_faces[b][3] = faces.len();
            cell_faces[t][2] = faces.len();
            faces.push(Face {
                owner: b,
                neighbor: Some(t),
                axis: Axis::Y,
                normal_sign: 1.0,
                length: hx,
                dist: hy,
                midpoint: ((i as f64 + 0.5) * hx, j as f64 * hy),
                tag: None,
            });
        }
    }
    for edge in Edge::ALL {
        let count = match edge {
            Edge::Left | Edge::Right => ny,
            Edge::Bottom | Edge::Top => nx,
        };
        for s in 0..count {
            let (owner, slot, axis, sign, length, dist, midpoint, frac) = match edge {
                Edge::Left => {
                    let y = (s as f64 + 0.5) * hy;
                    (cell(0, s), 0, Axis::X, -1.0, hy, 0.5 * hx, (0.0, y), y / spec.length_y)
                }
                Edge::Right => {
                    let y = (s as f64 + 0.5) * hy;
                    (cell(nx - 1, s), 1, Axis::X, 1.0, hy, 0.5 * hx, (spec.length_x, y), y / spec.length_y)
                }
                Edge::Bottom => {
                    let x = (s as f64 + 0.5) * hx;
                    (cell(s, 0), 2, Axis::Y, -1.0, hx, 0.5 * hy, (x, 0.0), x / spec.length_x)
                }
                Edge::Top => {
                    let x = (s as f64 + 0.5) * hx;
                    (cell(s, ny - 1), 3, Axis::Y, 1.0, hx, 0.5 * hy, (x, spec.length_y), x / spec.length_x)
                }
            };
            cell_faces[owner][slot] = faces.len();
            faces.push(Face {
                owner,
                neighbor: None,
                axis,
                normal_sign: sign,
                length,
                dist,
                midpoint,
                tag: Some(spec.layout.tag_at(edge, frac)),
            });
        }
    }
    debug_assert_eq!(faces.len(), n_faces);

    let mesh = Mesh {
        nx,
        ny,
        hx,
        hy,
        length_x: spec.length_x,
        length_y: spec.length_y,
        faces,
        cell_faces,
    };
    for tag in [BoundaryTag::D1, BoundaryTag::D2] {
        if mesh.count_tagged(tag) == 0 {
            return Err(Error::InvalidDomain(format!(
                "terminal {tag:?} is not resolved by a {nx}x{ny} mesh"
            )));
        }
    }
    Ok(mesh)
}

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, c: usize) -> (f64, f64) {
        let (i, j) = (c % self.nx, c / self.nx);
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn cell_centers(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.n_cells()).map(|c| self.cell_center(c))
    }

    pub fn count_tagged(&self, tag: BoundaryTag) -> usize {
        self.faces.iter().filter(|f| f.tag == Some(tag)).count()
    }

    /// Ids of boundary faces carrying `tag`.
    pub fn tagged_faces(&self, tag: BoundaryTag) -> impl Iterator<Item = usize> + '_ {
        self.faces
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.tag == Some(tag))
            .map(|(i, _)| i)
    }

    pub fn is_terminal_face(&self, f: usize) -> bool {
        matches!(self.faces[f].tag, Some(BoundaryTag::D1 | BoundaryTag::D2))
    }

    pub fn check_cells(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.n_cells() {
            return Err(Error::SizeMismatch {
                expected: self.n_cells(),
                got: field.len(),
            });
        }
        Ok(())
    }

    pub fn check_faces(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.n_faces() {
            return Err(Error::SizeMismatch {
                expected: self.n_faces(),
                got: field.len(),
            });
        }
        Ok(())
    }

    /// Midpoint-rule integral of a cell field.
    pub fn integrate_cells(&self, field: &[f64]) -> Result<f64> {
        self.check_cells(field)?;
        Ok(field.iter().sum::<f64>() * self.cell_area())
    }

    /// Discrete `L^2` inner product of two face fields.
    pub fn face_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.faces
            .iter()
            .zip(a.iter().zip(b))
            .map(|(f, (x, y))| f.quadrature_weight() * x * y)
            .sum()
    }

    /// Cellwise discrete divergence of a face flux field.
    pub fn divergence(&self, flux: &[f64]) -> Result<Vec<f64>> {
        self.check_faces(flux)?;
        let inv_area = 1.0 / self.cell_area();
        Ok(self
            .cell_faces
            .iter()
            .enumerate()
            .map(|(c, fs)| {
                fs.iter()
                    .map(|&f| {
                        let face = &self.faces[f];
                        face.outward_sign(c) * face.length * flux[f]
                    })
                    .sum::<f64>()
                    * inv_area
            })
            .collect())
    }

    /// Face field holding the adjacent cell value on every boundary face (zero elsewhere).
    pub fn boundary_trace(&self, cells: &[f64]) -> Result<Vec<f64>> {
        self.check_cells(cells)?;
        Ok(self
            .faces
            .iter()
            .map(|f| if f.is_boundary() { cells[f.owner] } else { 0.0 })
            .collect())
    }

    /// Normal derivative on every face. Boundary faces whose tag is in
    /// `dirichlet` use `boundary` values; the others get zero.
    pub fn face_gradient(&self, cells: &[f64], boundary: &[f64], dirichlet: &[BoundaryTag]) -> Vec<f64> {
        self.faces
            .iter()
            .enumerate()
            .map(|(k, f)| match (f.neighbor, f.tag) {
                (Some(nb), _) => (cells[nb] - cells[f.owner]) / f.dist,
                (None, Some(tag)) if dirichlet.contains(&tag) => (boundary[k] - cells[f.owner]) / f.dist,
                _ => 0.0,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_unit_square_counts() {
        let m = build_mesh(&DomainSpec::unit_square(), 2, 2).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.n_faces(), 12);
        assert_eq!(m.faces.iter().filter(|f| f.is_boundary()).count(), 8);
        assert_eq!(m.count_tagged(BoundaryTag::D1), 2);
        assert_eq!(m.count_tagged(BoundaryTag::D2), 2);
        assert_eq!(m.count_tagged(BoundaryTag::N), 4);
    }

    #[test]
    fn default_layout_puts_terminal_one_on_the_left() {
        let m = build_mesh(&DomainSpec::unit_square(), 5, 7).unwrap();
        for f in &m.faces {
            if f.is_boundary() && f.midpoint.0 == 0.0 {
                assert_eq!(f.tag, Some(BoundaryTag::D1));
            }
        }
    }

    #[test]
    fn empty_second_terminal_is_rejected() {
        let layout = BoundaryLayout::uniform(BoundaryTag::D1, BoundaryTag::N, BoundaryTag::N, BoundaryTag::N);
        let spec = DomainSpec::unit_square().with_layout(layout);
        assert!(matches!(build_mesh(&spec, 4, 4), Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn coarse_mesh_is_rejected() {
        assert_eq!(
            build_mesh(&DomainSpec::unit_square(), 1, 4).unwrap_err(),
            Error::MeshTooCoarse { nx: 1, ny: 4 }
        );
    }

    #[test]
    fn terminal_too_short_for_mesh_is_rejected() {
        let mut layout = BoundaryLayout::default();
        layout.set_edge(
            Edge::Right,
            vec![
                Segment::new(0.0, 0.01, BoundaryTag::N),
                Segment::new(0.01, 0.02, BoundaryTag::D2),
                Segment::new(0.02, 1.0, BoundaryTag::N),
            ],
        );
        let spec = DomainSpec::unit_square().with_layout(layout);
        assert!(spec.validate().is_ok());
        assert!(build_mesh(&spec, 4, 4).is_err());
        assert!(build_mesh(&spec, 4, 200).is_ok());
    }

    #[test]
    fn gapped_layout_is_rejected() {
        let mut layout = BoundaryLayout::default();
        layout.set_edge(Edge::Top, vec![Segment::new(0.0, 0.5, BoundaryTag::N)]);
        assert!(DomainSpec::unit_square().with_layout(layout).validate().is_err());
    }

    #[test]
    fn integrals() {
        let m = build_mesh(&DomainSpec::unit_square(), 3, 3).unwrap();
        assert!((m.integrate_cells(&[1.0; 9]).unwrap() - 1.0).abs() < 1e-15);
        let m = build_mesh(&DomainSpec::rectangle(2.0, 1.0), 4, 2).unwrap();
        assert!((m.integrate_cells(&[3.0; 8]).unwrap() - 6.0).abs() < 1e-14);
        let m = build_mesh(&DomainSpec::unit_square(), 64, 64).unwrap();
        let x: Vec<f64> = m.cell_centers().map(|c| c.0).collect();
        assert!((m.integrate_cells(&x).unwrap() - 0.5).abs() < 1e-12);
        assert!(m.integrate_cells(&[1.0]).is_err());
    }

    #[test]
    fn every_cell_has_four_faces_and_faces_point_outward() {
        let m = build_mesh(&DomainSpec::rectangle(1.5, 0.7), 4, 3).unwrap();
        for (c, fs) in m.cell_faces.iter().enumerate() {
            let (cx, cy) = m.cell_center(c);
            for &f in fs {
                let face = &m.faces[f];
                assert!(face.owner == c || face.neighbor == Some(c));
                let (mx, my) = face.midpoint;
                let out = face.outward_sign(c) * face.normal_sign;
                let along = match face.axis {
                    Axis::X => mx - cx,
                    Axis::Y => my - cy,
                };
                assert!(along * out > 0.0);
            }
        }
    }

    #[test]
    fn divergence_of_constant_flux_vanishes_inside() {
        let m = build_mesh(&DomainSpec::unit_square(), 4, 4).unwrap();
        let flux: Vec<f64> = m
            .faces
            .iter()
            .map(|f| if f.axis == Axis::X { f.normal_sign } else { 0.0 })
            .collect();
        let div = m.divergence(&flux).unwrap();
        assert!(div.iter().all(|d| d.abs() < 1e-12));
    }
}
