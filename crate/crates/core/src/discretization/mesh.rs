use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points are stored with three slots; in 2D the third is zero.
pub type Point = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Sigma1,
    Sigma2,
    Rest,
}

/// Named tagging predicates. Each maps a boundary facet to a tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TagRule {
    /// Bottom face is Σ₁, everything else Σ₂.
    BottomSigma1,
    /// Every facet is Σ₂ (pure Dirichlet problem).
    AllSigma2,
    /// Bottom is Σ₁, top is Σ₂, the sides are `Rest` (homogeneous Dirichlet).
    BottomSigma1TopSigma2,
    /// Σ₁ is the central `fraction` of the bottom face, the remainder of the bottom is `Rest`,
    /// all other faces are Σ₂.
    BottomPatch { fraction: f64 },
}

impl Default for TagRule {
    fn default() -> Self {
        TagRule::BottomSigma1
    }
}

impl TagRule {
    pub fn name(&self) -> &'static str {
        match self {
            TagRule::BottomSigma1 => "bottom-sigma1",
            TagRule::AllSigma2 => "all-sigma2",
            TagRule::BottomSigma1TopSigma2 => "bottom-sigma1-top-sigma2",
            TagRule::BottomPatch { .. } => "bottom-patch",
        }
    }

    fn tag(&self, mesh: &Mesh, f: &Facet) -> BoundaryTag {
        let vert = mesh.dim - 1;
        let bottom = f.axis == vert && f.side == 0;
        match self {
            TagRule::BottomSigma1 => {
                if bottom {
                    BoundaryTag::Sigma1
                } else {
                    BoundaryTag::Sigma2
                }
            }
            TagRule::AllSigma2 => BoundaryTag::Sigma2,
            TagRule::BottomSigma1TopSigma2 => {
                if bottom {
                    BoundaryTag::Sigma1
                } else if f.axis == vert {
                    BoundaryTag::Sigma2
                } else {
                    BoundaryTag::Rest
                }
            }
            TagRule::BottomPatch { fraction } => {
                if !bottom {
                    return BoundaryTag::Sigma2;
                }
                let c = mesh.facet_centroid(f);
                let inside = (0..vert).all(|j| {
                    let mid = mesh.lo[j] + 0.5 * mesh.lengths[j];
                    (c[j] - mid).abs() <= 0.5 * fraction * mesh.lengths[j] + 1e-12
                });
                if inside {
                    BoundaryTag::Sigma1
                } else {
                    BoundaryTag::Rest
                }
            }
        }
    }
}

/// A boundary facet: the face of `cell` with outward normal `±e_axis` (`side` 0 is the low face).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub axis: usize,
    pub side: u8,
    pub cell: usize,
    pub tag: BoundaryTag,
}

/// Serializable recipe for a mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub lengths: Vec<f64>,
    pub cells: Vec<usize>,
    #[serde(default = "default_grading")]
    pub grading: f64,
    /// Lower corner of the horizontal axes (the vertical axis always starts at 0).
    #[serde(default)]
    pub horizontal_origin: Option<Vec<f64>>,
    #[serde(default)]
    pub tags: TagRule,
}

fn default_grading() -> f64 {
    0.7
}

impl MeshSpec {
    pub fn new(lengths: &[f64], cells: &[usize], grading: f64) -> Self {
        Self { lengths: lengths.to_vec(), cells: cells.to_vec(), grading, horizontal_origin: None, tags: TagRule::default() }
    }

    pub fn centered(mut self) -> Self {
        let d = self.lengths.len();
        self.horizontal_origin = Some(self.lengths[..d - 1].iter().map(|l| -l / 2.0).collect());
        self
    }

    pub fn with_tags(mut self, tags: TagRule) -> Self {
        self.tags = tags;
        self
    }

    /// Uniform refinement: cells doubled on each axis, each graded layer split in two
    /// (the per-layer ratio becomes the square root).
    pub fn refined(&self) -> Self {
        let mut out = self.clone();
        out.cells = self.cells.iter().map(|c| 2 * c).collect();
        out.grading = self.grading.sqrt();
        out
    }

    pub fn build(&self) -> Result<Mesh> {
        let mut m = build_graded_box(&self.lengths, &self.cells, self.grading)?;
        if let Some(o) = &self.horizontal_origin {
            if o.len() + 1 != m.dim {
                return Err(Error::InvalidInput("horizontal origin has wrong length".into()));
            }
            for (j, &oj) in o.iter().enumerate() {
                m.lo[j] = oj;
                m.hi[j] = oj + m.lengths[j];
                for c in m.coords[j].iter_mut() {
                    *c += oj;
                }
            }
        }
        m.retag(self.tags.clone());
        Ok(m)
    }
}

/// Tensor-product box mesh in the closed upper half space with multilinear cells.
/// Nodes and cells are numbered lexicographically with axis 0 fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub dim: usize,
    pub lengths: [f64; 3],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    /// Node coordinates per axis.
    pub coords: Vec<Vec<f64>>,
    pub grading: f64,
    pub facets: Vec<Facet>,
    pub tag_rule: TagRule,
}

/// Builds `Π [0, L_j]` with geometric vertical layers; Σ₁ is the bottom face.
pub fn build_graded_box(lengths: &[f64], cells_per_axis: &[usize], grading_ratio: f64) -> Result<Mesh> {
    let dim = lengths.len();
    if !(2..=3).contains(&dim) || cells_per_axis.len() != dim {
        return Err(Error::UnsupportedDimension(dim));
    }
    for (axis, &l) in lengths.iter().enumerate() {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::NonPositiveExtent { axis, extent: l });
        }
    }
    for (axis, &c) in cells_per_axis.iter().enumerate() {
        if c < 2 {
            return Err(Error::TooFewCells { axis, cells: c });
        }
    }
    if !(grading_ratio > 0.0 && grading_ratio <= 1.0) {
        return Err(Error::InvalidGrading(grading_ratio));
    }
    let mut coords = Vec::with_capacity(dim);
    for j in 0..dim {
        let n = cells_per_axis[j];
        let c = if j == dim - 1 {
            crate::quadrature::graded_breaks(lengths[j], n, grading_ratio)
        } else {
            (0..=n).map(|i| lengths[j] * i as f64 / n as f64).collect()
        };
        coords.push(c);
    }
    let mut l3 = [0.0; 3];
    let mut hi = [0.0; 3];
    l3[..dim].copy_from_slice(lengths);
    hi[..dim].copy_from_slice(lengths);
    let mut mesh =
        Mesh { dim, lengths: l3, lo: [0.0; 3], hi, coords, grading: grading_ratio, facets: vec![], tag_rule: TagRule::default() };
    mesh.facets = mesh.enumerate_facets();
    mesh.retag(TagRule::default());
    Ok(mesh)
}

impl Mesh {
    pub fn vertical(&self) -> usize {
        self.dim - 1
    }

    pub fn cells_on(&self, axis: usize) -> usize {
        self.coords[axis].len() - 1
    }

    pub fn nodes_on(&self, axis: usize) -> usize {
        self.coords[axis].len()
    }

    pub fn n_nodes(&self) -> usize {
        (0..self.dim).map(|j| self.nodes_on(j)).product()
    }

    pub fn n_cells(&self) -> usize {
        (0..self.dim).map(|j| self.cells_on(j)).product()
    }

    pub fn node_multi(&self, mut i: usize) -> [usize; 3] {
        let mut m = [0; 3];
        for (j, mj) in m.iter_mut().enumerate().take(self.dim) {
            let n = self.nodes_on(j);
            *mj = i % n;
            i /= n;
        }
        m
    }

    pub fn node_index(&self, m: [usize; 3]) -> usize {
        let mut idx = 0;
        for j in (0..self.dim).rev() {
            idx = idx * self.nodes_on(j) + m[j];
        }
        idx
    }

    pub fn cell_multi(&self, mut c: usize) -> [usize; 3] {
        let mut m = [0; 3];
        for (j, mj) in m.iter_mut().enumerate().take(self.dim) {
            let n = self.cells_on(j);
            *mj = c % n;
            c /= n;
        }
        m
    }

    pub fn cell_index(&self, m: [usize; 3]) -> usize {
        let mut idx = 0;
        for j in (0..self.dim).rev() {
            idx = idx * self.cells_on(j) + m[j];
        }
        idx
    }

    pub fn vertex(&self, i: usize) -> Point {
        let m = self.node_multi(i);
        let mut p = [0.0; 3];
        for j in 0..self.dim {
            p[j] = self.coords[j][m[j]];
        }
        p
    }

    pub fn vertices(&self) -> Vec<Point> {
        (0..self.n_nodes()).map(|i| self.vertex(i)).collect()
    }

    /// Number of local nodes per cell (`2^dim`).
    pub fn nodes_per_cell(&self) -> usize {
        1 << self.dim
    }

    /// Local node `b` of a cell sits at offset `(b >> j) & 1` along axis `j`.
    pub fn cell_nodes(&self, c: usize) -> Vec<usize> {
        let m = self.cell_multi(c);
        (0..self.nodes_per_cell())
            .map(|b| {
                let mut nm = m;
                for (j, v) in nm.iter_mut().enumerate().take(self.dim) {
                    *v += (b >> j) & 1;
                }
                self.node_index(nm)
            })
            .collect()
    }

    pub fn cell_bounds(&self, c: usize) -> (Point, Point) {
        let m = self.cell_multi(c);
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        for j in 0..self.dim {
            a[j] = self.coords[j][m[j]];
            b[j] = self.coords[j][m[j] + 1];
        }
        (a, b)
    }

    pub fn cell_centroid(&self, c: usize) -> Point {
        let (a, b) = self.cell_bounds(c);
        let mut p = [0.0; 3];
        for j in 0..self.dim {
            p[j] = 0.5 * (a[j] + b[j]);
        }
        p
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        let (a, b) = self.cell_bounds(c);
        (0..self.dim).map(|j| b[j] - a[j]).product()
    }

    /// Largest cell extent along `axis`.
    pub fn max_spacing(&self, axis: usize) -> f64 {
        self.coords[axis].windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Vertical layer heights, bottom to top.
    pub fn layer_heights(&self) -> Vec<f64> {
        self.coords[self.vertical()].windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn enumerate_facets(&self) -> Vec<Facet> {
        let mut out = vec![];
        for axis in 0..self.dim {
            for side in 0..2u8 {
                let fixed = if side == 0 { 0 } else { self.cells_on(axis) - 1 };
                for c in 0..self.n_cells() {
                    if self.cell_multi(c)[axis] == fixed {
                        out.push(Facet { axis, side, cell: c, tag: BoundaryTag::Sigma2 });
                    }
                }
            }
        }
        out
    }

    pub fn retag(&mut self, rule: TagRule) {
        let tags: Vec<BoundaryTag> = self.facets.iter().map(|f| rule.tag(self, f)).collect();
        for (f, t) in self.facets.iter_mut().zip(tags) {
            f.tag = t;
        }
        self.tag_rule = rule;
    }

    /// Overrides tags with an arbitrary predicate on `(facet, centroid)`.
    pub fn retag_with(&mut self, pred: impl Fn(&Facet, &Point) -> BoundaryTag) {
        let tags: Vec<BoundaryTag> = self.facets.iter().map(|f| pred(f, &self.facet_centroid(f))).collect();
        for (f, t) in self.facets.iter_mut().zip(tags) {
            f.tag = t;
        }
    }

    pub fn facet_nodes(&self, f: &Facet) -> Vec<usize> {
        let m = self.cell_multi(f.cell);
        let free: Vec<usize> = (0..self.dim).filter(|&j| j != f.axis).collect();
        (0..(1usize << free.len()))
            .map(|b| {
                let mut nm = m;
                nm[f.axis] += f.side as usize;
                for (k, &j) in free.iter().enumerate() {
                    nm[j] += (b >> k) & 1;
                }
                self.node_index(nm)
            })
            .collect()
    }

    pub fn facet_bounds(&self, f: &Facet) -> (Point, Point) {
        let (mut a, mut b) = self.cell_bounds(f.cell);
        let x = if f.side == 0 { a[f.axis] } else { b[f.axis] };
        a[f.axis] = x;
        b[f.axis] = x;
        (a, b)
    }

    pub fn facet_centroid(&self, f: &Facet) -> Point {
        let (a, b) = self.facet_bounds(f);
        let mut p = [0.0; 3];
        for j in 0..self.dim {
            p[j] = 0.5 * (a[j] + b[j]);
        }
        p
    }

    pub fn facet_area(&self, f: &Facet) -> f64 {
        let (a, b) = self.cell_bounds(f.cell);
        (0..self.dim).filter(|&j| j != f.axis).map(|j| b[j] - a[j]).product()
    }

    pub fn facets_tagged(&self, tag: BoundaryTag) -> impl Iterator<Item = &Facet> {
        self.facets.iter().filter(move |f| f.tag == tag)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let v = self.vertical();
        if self.coords[v][0] != 0.0 || self.coords[v].iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidInput("vertical coordinate must start at 0".into()));
        }
        for f in self.facets_tagged(BoundaryTag::Sigma1) {
            if !(f.axis == v && f.side == 0) {
                return Err(Error::InvalidInput("Σ₁ facet off the bottom face".into()));
            }
        }
        if (0..self.n_cells()).any(|c| self.cell_volume(c) <= 0.0) {
            return Err(Error::InvalidInput("non-positive cell volume".into()));
        }
        Ok(())
    }

    pub fn partition(&self) -> DofPartition {
        DofPartition::new(self)
    }

    /// Axis-aligned sub-box of whole cells: for each axis the cell index range `[a, b)`.
    pub fn cells_in_range(&self, range: &[(usize, usize)]) -> Vec<usize> {
        (0..self.n_cells())
            .filter(|&c| {
                let m = self.cell_multi(c);
                (0..self.dim).all(|j| m[j] >= range[j].0 && m[j] < range[j].1)
            })
            .collect()
    }
}

/// Splits the nodes by boundary role. Dirichlet data wins at shared edges/corners.
#[derive(Clone, Debug, PartialEq)]
pub struct DofPartition {
    /// Unknowns: interior nodes and nodes only on Σ₁.
    pub free: Vec<usize>,
    /// Σ₂ trace dofs (Dirichlet nodes not touching a `Rest` facet).
    pub sigma2: Vec<usize>,
    /// Homogeneous Dirichlet nodes (touching a `Rest` facet).
    pub zero: Vec<usize>,
    /// All nodes on a Σ₁ facet, including corners shared with Σ₂.
    pub sigma1: Vec<usize>,
    /// All boundary nodes.
    pub boundary: Vec<usize>,
    /// Per node: position in `free`, or `usize::MAX`.
    pub free_pos: Vec<usize>,
    /// Per node: position in `sigma2`, or `usize::MAX`.
    pub sigma2_pos: Vec<usize>,
}

impl DofPartition {
    fn new(mesh: &Mesh) -> Self {
        let n = mesh.n_nodes();
        let mut mask = vec![0u8; n];
        for f in &mesh.facets {
            let bit = match f.tag {
                BoundaryTag::Sigma1 => 1,
                BoundaryTag::Sigma2 => 2,
                BoundaryTag::Rest => 4,
            };
            for i in mesh.facet_nodes(f) {
                mask[i] |= bit | 8;
            }
        }
        let (mut free, mut sigma2, mut zero, mut sigma1, mut boundary) = (vec![], vec![], vec![], vec![], vec![]);
        for (i, &m) in mask.iter().enumerate() {
            if m & 8 != 0 {
                boundary.push(i);
            }
            if m & 1 != 0 {
                sigma1.push(i);
            }
            if m & 4 != 0 {
                zero.push(i);
            } else if m & 2 != 0 {
                sigma2.push(i);
            } else {
                free.push(i);
            }
        }
        let mut free_pos = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            free_pos[i] = k;
        }
        let mut sigma2_pos = vec![usize::MAX; n];
        for (k, &i) in sigma2.iter().enumerate() {
            sigma2_pos[i] = k;
        }
        Self { free, sigma2, zero, sigma1, boundary, free_pos, sigma2_pos }
    }
}
