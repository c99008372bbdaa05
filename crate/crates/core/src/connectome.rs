//! Grid parcellation, connectome vectorization and the zero-padding
//! augmentation that turns the connectome Laplacian into a block-circulant
//! operator.
//!
//! Nodes live on an `Nx x Ny x Nz` lattice; only the sites marked in the
//! support mask are real (brain) nodes. Nodes are numbered in lexicographic
//! order of their lattice coordinates, which coincides with increasing
//! row-major lattice index. An edge is the unordered node pair `(a, b)` with
//! `a > b`; edges are numbered by a column-major scan of the strictly lower
//! triangle of the node-by-node correlation matrix.
//!
//! The augmented array has shape `(Nx, Ny, Nz, Nx, Ny, Nz)`: edge `(a, b)`
//! sits at `(site(a), site(b))`. Every other position (ghost nodes, the
//! diagonal and the upper triangle) is structurally zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Each masked forward-difference row of the augmented operator stands for
/// one unordered neighbor pair, which the double sum over `j` and `k in N_j`
/// visits twice.
pub const DIRECTED_PAIR_MULTIPLICITY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GridParcellation {
    dims: [usize; 3],
    support: Vec<bool>,
    spacing_mm: f64,
    /// Lattice (row-major) index of each node, increasing.
    sites: Vec<usize>,
    /// Node index of each lattice site, if the site is in the support.
    node_at: Vec<Option<usize>>,
}

/// On-disk form: `{dims: [Nx,Ny,Nz], support: flat 0/1 array, spacing_mm}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParcellationFile {
    pub dims: [usize; 3],
    pub support: Vec<u8>,
    #[serde(default = "default_spacing")]
    pub spacing_mm: f64,
}

fn default_spacing() -> f64 {
    18.0
}

impl GridParcellation {
    pub fn new(dims: [usize; 3], support: Vec<bool>, spacing_mm: f64) -> Result<Self> {
        let lattice: usize = dims.iter().product();
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::structural(format!("grid dims must be positive, got {dims:?}")));
        }
        if support.len() != lattice {
            return Err(Error::structural(format!(
                "support has {} entries, lattice {:?} has {lattice}",
                support.len(),
                dims
            )));
        }
        let sites: Vec<usize> = (0..lattice).filter(|&s| support[s]).collect();
        if sites.len() < 2 {
            return Err(Error::structural(format!(
                "need at least 2 nodes in the support, got {}",
                sites.len()
            )));
        }
        let mut node_at = vec![None; lattice];
        for (node, &s) in sites.iter().enumerate() {
            node_at[s] = Some(node);
        }
        Ok(Self { dims, support, spacing_mm, sites, node_at })
    }

    /// Every lattice site is a node.
    pub fn full(dims: [usize; 3]) -> Result<Self> {
        let lattice = dims.iter().product();
        Self::new(dims, vec![true; lattice], default_spacing())
    }

    /// The default 66-node axial slice: a 10 x 8 x 1 lattice (rows then
    /// columns) numbered row by row from the bottom-left, so node `k`
    /// (0-based) is node `k+1` of the reference layout.
    pub fn slice66() -> Self {
        // (first column, last column) of each row, bottom to top
        const ROWS: [(usize, usize); 10] = [
            (2, 6),
            (1, 6),
            (0, 7),
            (0, 7),
            (0, 7),
            (0, 7),
            (0, 7),
            (1, 7),
            (1, 6),
            (3, 4),
        ];
        let dims = [10, 8, 1];
        let mut support = vec![false; 80];
        for (row, &(lo, hi)) in ROWS.iter().enumerate() {
            for col in lo..=hi {
                support[row * 8 + col] = true;
            }
        }
        Self::new(dims, support, default_spacing()).expect("static layout is valid")
    }

    pub fn from_file(file: &ParcellationFile) -> Result<Self> {
        let support = file
            .support
            .iter()
            .map(|&v| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::structural(format!("support entries must be 0/1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.dims, support, file.spacing_mm)
    }

    pub fn to_file(&self) -> ParcellationFile {
        ParcellationFile {
            dims: self.dims,
            support: self.support.iter().map(|&b| u8::from(b)).collect(),
            spacing_mm: self.spacing_mm,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    /// `d_brain`, the number of real nodes.
    pub fn node_count(&self) -> usize {
        self.sites.len()
    }

    /// `D = Nx * Ny * Nz`, lattice size including ghost nodes.
    pub fn lattice_size(&self) -> usize {
        self.support.len()
    }

    /// Feature dimension `p = d (d - 1) / 2`.
    pub fn feature_dim(&self) -> usize {
        let d = self.node_count();
        d * (d - 1) / 2
    }

    pub fn site_of(&self, node: usize) -> usize {
        self.sites[node]
    }

    pub fn node_at_site(&self, site: usize) -> Option<usize> {
        self.node_at[site]
    }

    pub fn coords_of_site(&self, site: usize) -> [usize; 3] {
        let [_, ny, nz] = self.dims;
        [site / (ny * nz), (site / nz) % ny, site % nz]
    }

    pub fn node_coords(&self, node: usize) -> [usize; 3] {
        self.coords_of_site(self.sites[node])
    }

    fn site_at(&self, c: [usize; 3]) -> usize {
        let [_, ny, nz] = self.dims;
        (c[0] * ny + c[1]) * nz + c[2]
    }

    /// Edge index of the node pair `(a, b)`; order of the arguments is
    /// irrelevant but they must differ.
    pub fn edge_index(&self, a: usize, b: usize) -> Result<usize> {
        let d = self.node_count();
        if a == b || a >= d || b >= d {
            return Err(Error::structural(format!("invalid node pair ({a}, {b}) for {d} nodes")));
        }
        Ok(lower_tri_index(d, a.max(b), a.min(b)))
    }

    /// Node pair `(a, b)`, `a > b`, of edge `j`.
    pub fn edge_nodes(&self, j: usize) -> Result<(usize, usize)> {
        let p = self.feature_dim();
        if j >= p {
            return Err(Error::structural(format!("edge index {j} out of range (p = {p})")));
        }
        Ok(lower_tri_pair(self.node_count(), j))
    }

    /// In-support lattice neighbors (±1 along one axis) of a node.
    pub fn node_neighbors(&self, node: usize) -> Vec<usize> {
        let c = self.node_coords(node);
        let mut out = Vec::with_capacity(6);
        for axis in 0..3 {
            for delta in [-1isize, 1] {
                let v = c[axis] as isize + delta;
                if v < 0 || v >= self.dims[axis] as isize {
                    continue;
                }
                let mut cn = c;
                cn[axis] = v as usize;
                if let Some(nb) = self.node_at[self.site_at(cn)] {
                    out.push(nb);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }
}

/// Column-major strictly-lower-triangular index of `(row, col)`, `row > col`.
fn lower_tri_index(d: usize, row: usize, col: usize) -> usize {
    col * d - col * (col + 1) / 2 + (row - col - 1)
}

fn lower_tri_pair(d: usize, mut j: usize) -> (usize, usize) {
    let mut col = 0;
    loop {
        let len = d - col - 1;
        if j < len {
            return (col + 1 + j, col);
        }
        j -= len;
        col += 1;
    }
}

/// A vectorized connectome: the strictly lower triangle of a `d x d`
/// correlation matrix in canonical edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectomeVector {
    pub values: Vec<f64>,
    nodes: usize,
}

impl ConnectomeVector {
    pub fn new(values: Vec<f64>, nodes: usize) -> Result<Self> {
        if nodes < 2 || values.len() != nodes * (nodes - 1) / 2 {
            return Err(Error::structural(format!(
                "{} values do not form the lower triangle of a {nodes}-node matrix",
                values.len()
            )));
        }
        Ok(Self { values, nodes })
    }

    /// Infers the node count from the vector length.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let p = values.len();
        let d = ((1.0 + (1.0 + 8.0 * p as f64).sqrt()) / 2.0).round() as usize;
        Self::new(values, d)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn vectorize_connectome(corr: &DMatrix<f64>, parc: &GridParcellation) -> Result<ConnectomeVector> {
    let d = parc.node_count();
    if corr.nrows() != d || corr.ncols() != d {
        return Err(Error::structural(format!(
            "correlation matrix is {}x{}, parcellation has {d} nodes",
            corr.nrows(),
            corr.ncols()
        )));
    }
    let mut values = Vec::with_capacity(parc.feature_dim());
    for col in 0..d {
        for row in col + 1..d {
            values.push(corr[(row, col)]);
        }
    }
    ConnectomeVector::new(values, d)
}

/// Symmetric matrix with zero diagonal whose lower triangle is `x`.
pub fn matricize(x: &ConnectomeVector) -> DMatrix<f64> {
    let d = x.nodes;
    let mut m = DMatrix::zeros(d, d);
    let mut j = 0;
    for col in 0..d {
        for row in col + 1..d {
            m[(row, col)] = x.values[j];
            m[(col, row)] = x.values[j];
            j += 1;
        }
    }
    m
}

/// First-order neighborhood of edge `j` in connectome space: edges obtained by
/// moving one endpoint one lattice step, staying inside the support and on the
/// strictly-lower side of the diagonal (the only side the augmented array
/// populates).
pub fn neighborhood(j: usize, parc: &GridParcellation) -> Result<Vec<usize>> {
    let (a, b) = parc.edge_nodes(j)?;
    let mut out = Vec::new();
    for a2 in parc.node_neighbors(a) {
        if a2 > b {
            out.push(lower_tri_index(parc.node_count(), a2, b));
        }
    }
    for b2 in parc.node_neighbors(b) {
        if a > b2 {
            out.push(lower_tri_index(parc.node_count(), a, b2));
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Index maps realizing `A = A2 A1` and the mask `B`.
#[derive(Debug, Clone)]
pub struct AugmentationMap {
    forward_index: Vec<usize>,
    /// Shape of the augmented 6-D array, row-major.
    shape: [usize; 6],
    strides: [usize; 6],
    p_aug: usize,
    mask: Vec<bool>,
}

pub fn build_augmentation(parc: &GridParcellation) -> AugmentationMap {
    let [nx, ny, nz] = parc.dims();
    let big_d = parc.lattice_size();
    let shape = [nx, ny, nz, nx, ny, nz];
    let mut strides = [1usize; 6];
    for a in (0..5).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let p_aug = big_d * big_d;

    let p = parc.feature_dim();
    let mut forward_index = Vec::with_capacity(p);
    let mut populated = vec![false; p_aug];
    for j in 0..p {
        let (a, b) = lower_tri_pair(parc.node_count(), j);
        let pos = parc.site_of(a) * big_d + parc.site_of(b);
        forward_index.push(pos);
        populated[pos] = true;
    }

    let mut mask = vec![false; 6 * p_aug];
    for axis in 0..6 {
        let (n, s) = (shape[axis], strides[axis]);
        for i in 0..p_aug {
            if !populated[i] || (i / s) % n + 1 >= n {
                continue;
            }
            if populated[i + s] {
                mask[axis * p_aug + i] = true;
            }
        }
    }

    AugmentationMap { forward_index, shape, strides, p_aug, mask }
}

impl AugmentationMap {
    pub fn feature_dim(&self) -> usize {
        self.forward_index.len()
    }

    /// `p~ = D^2`.
    pub fn augmented_dim(&self) -> usize {
        self.p_aug
    }

    /// `e~ = 6 p~`, the number of rows of the circulant difference operator.
    pub fn difference_dim(&self) -> usize {
        6 * self.p_aug
    }

    pub fn shape(&self) -> [usize; 6] {
        self.shape
    }

    pub fn forward_index(&self) -> &[usize] {
        &self.forward_index
    }

    /// Diagonal of `B`.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of unmasked difference rows, i.e. unordered neighbor pairs.
    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(Error::structural(format!("{what}: expected length {want}, got {got}")));
        }
        Ok(())
    }

    /// `A w`: scatter into the augmented array.
    pub fn augment(&self, w: &[f64]) -> Result<Vec<f64>> {
        Self::check_len("augment", w.len(), self.feature_dim())?;
        let mut out = vec![0.0; self.p_aug];
        for (&pos, &v) in self.forward_index.iter().zip(w) {
            out[pos] = v;
        }
        Ok(out)
    }

    /// `A^T w~`: gather the populated entries.
    pub fn adjoint_augment(&self, w_aug: &[f64]) -> Result<Vec<f64>> {
        Self::check_len("adjoint_augment", w_aug.len(), self.p_aug)?;
        Ok(self.forward_index.iter().map(|&pos| w_aug[pos]).collect())
    }

    pub(crate) fn add_augmented(&self, w: &[f64], out: &mut [f64]) {
        for (&pos, &v) in self.forward_index.iter().zip(w) {
            out[pos] += v;
        }
    }

    pub(crate) fn gather_into(&self, w_aug: &[f64], out: &mut [f64]) {
        for (o, &pos) in out.iter_mut().zip(&self.forward_index) {
            *o = w_aug[pos];
        }
    }

    /// `C~ w~`: for each of the six axes, the periodic forward difference
    /// `w~[i + e_axis] - w~[i]`. Row `axis * p~ + i`.
    pub fn apply_difference(&self, w_aug: &[f64]) -> Result<Vec<f64>> {
        Self::check_len("apply_difference", w_aug.len(), self.p_aug)?;
        let mut out = vec![0.0; 6 * self.p_aug];
        self.difference_into(w_aug, &mut out);
        Ok(out)
    }

    /// `C~^T z`: `sum_axis z[axis, i - e_axis] - z[axis, i]` (periodic).
    pub fn apply_difference_adjoint(&self, z: &[f64]) -> Result<Vec<f64>> {
        Self::check_len("apply_difference_adjoint", z.len(), 6 * self.p_aug)?;
        let mut out = vec![0.0; self.p_aug];
        self.difference_adjoint_into(z, &mut out);
        Ok(out)
    }

    pub(crate) fn difference_into(&self, w_aug: &[f64], out: &mut [f64]) {
        let p = self.p_aug;
        for axis in 0..6 {
            let (n, s) = (self.shape[axis], self.strides[axis]);
            let rows = &mut out[axis * p..(axis + 1) * p];
            if n == 1 {
                rows.fill(0.0);
                continue;
            }
            let block = n * s;
            // blocks of `n` hyper-slices along this axis
            for base in (0..p).step_by(block) {
                for c in 0..n {
                    let here = base + c * s;
                    let next = if c + 1 < n { here + s } else { base };
                    for t in 0..s {
                        rows[here + t] = w_aug[next + t] - w_aug[here + t];
                    }
                }
            }
        }
    }

    pub(crate) fn difference_adjoint_into(&self, z: &[f64], out: &mut [f64]) {
        let p = self.p_aug;
        out.fill(0.0);
        for axis in 0..6 {
            let (n, s) = (self.shape[axis], self.strides[axis]);
            if n == 1 {
                continue;
            }
            let rows = &z[axis * p..(axis + 1) * p];
            let block = n * s;
            for base in (0..p).step_by(block) {
                for c in 0..n {
                    let here = base + c * s;
                    let prev = if c > 0 { here - s } else { base + (n - 1) * s };
                    for t in 0..s {
                        out[here + t] += rows[prev + t] - rows[here + t];
                    }
                }
            }
        }
    }

    /// `||B C~ A w||_q^q` counted once per unordered neighbor pair.
    pub fn masked_difference_norm(&self, w: &[f64], q: u32) -> Result<f64> {
        let diffs = self.apply_difference(&self.augment(w)?)?;
        let sum = match q {
            1 => diffs.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(d, _)| d.abs()).sum(),
            2 => diffs.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(d, _)| d * d).sum(),
            _ => return Err(Error::Domain(format!("q must be 1 or 2, got {q}"))),
        };
        Ok(sum)
    }
}

/// `sum_j sum_{k in N_j} |w_j - w_k|^q`, evaluated through the masked
/// augmented pipeline.
pub fn spatial_penalty(w: &[f64], map: &AugmentationMap, q: u32) -> Result<f64> {
    Ok(DIRECTED_PAIR_MULTIPLICITY * map.masked_difference_norm(w, q)?)
}
