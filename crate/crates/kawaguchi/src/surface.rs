//! Discretized parameterized submanifolds on rectangular grids.
//!
//! A [`Surface`] stores node values `x^μ(s)` over a box `S ⊂ ℝ^{n+1}`. The staggered
//! layout fixed here is load-bearing for everything downstream:
//!
//! - `K`, its gradients and cell Jacobians are evaluated at *cell centers*; partials
//!   `∂x^μ/∂s^a` at a cell center average the 2ⁿ node differences of the cell in
//!   direction `a` (a symmetric, second-order stencil, exact on linear embeddings);
//! - pulled-back n-form coefficients `c_a` live on the two faces of each cell normal
//!   to direction `a`; `c_a` is the coefficient of `ds^0∧…∧ds^{a-1}∧ds^{a+1}∧…∧ds^n`;
//! - the discrete exterior derivative differences faces across each cell:
//!   `(dω)_cell = Σ_a (-1)^a [c_a(face_a^+) - c_a(face_a^-)] / h_a`, which makes the
//!   discrete Stokes identity exact to round-off.
//!
//! Residual and current evaluations are interior-only; boundary nodes are data.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::Expression;
use crate::kform::{describe_eval_error, KawaguchiForm};
use crate::multivector::{
    all_sorted, det, jacobian_multivector, Dims, MultiIndex, PluckerVector,
};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Surface {
    dims: Dims,
    /// node counts per parameter axis (length `degree`), each ≥ 2
    shape: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    /// node-major values: `values[node_lin * coord_count + mu]`
    values: Vec<f64>,
    orientation_reversed: bool,
}

/// Sidecar descriptor for the CSV surface format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceDescriptor {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
}

impl Surface {
    /// Build from a closure mapping parameters `s` to all coordinates `x`.
    pub fn from_fn(
        dims: Dims,
        shape: &[usize],
        spacing: &[f64],
        origin: &[f64],
        f: impl Fn(&[f64], &mut [f64]),
    ) -> Self {
        assert_eq!(shape.len(), dims.degree);
        assert_eq!(spacing.len(), dims.degree);
        assert_eq!(origin.len(), dims.degree);
        assert!(shape.iter().all(|&m| m >= 2), "need at least 2 nodes per axis");
        assert!(spacing.iter().all(|&h| h > 0.0), "spacings must be positive");
        let count: usize = shape.iter().product();
        let mut values = vec![0.0; count * dims.coord_count];
        let mut s = vec![0.0; dims.degree];
        let mut idx = vec![0usize; dims.degree];
        for lin in 0..count {
            decompose(lin, shape, &mut idx);
            for a in 0..dims.degree {
                s[a] = origin[a] + idx[a] as f64 * spacing[a];
            }
            f(&s, &mut values[lin * dims.coord_count..(lin + 1) * dims.coord_count]);
        }
        Surface {
            dims,
            shape: shape.to_vec(),
            spacing: spacing.to_vec(),
            origin: origin.to_vec(),
            values,
            orientation_reversed: false,
        }
    }

    /// Conventional parameterization: `x^a = s^a` for the base coordinates, fiber
    /// coordinates from the closure.
    pub fn conventional(
        dims: Dims,
        shape: &[usize],
        spacing: &[f64],
        origin: &[f64],
        fields: impl Fn(&[f64], &mut [f64]),
    ) -> Self {
        let degree = dims.degree;
        Surface::from_fn(dims, shape, spacing, origin, |s, x| {
            x[..degree].copy_from_slice(s);
            fields(s, &mut x[degree..]);
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn orientation_reversed(&self) -> bool {
        self.orientation_reversed
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn cell_shape(&self) -> Vec<usize> {
        self.shape.iter().map(|m| m - 1).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.cell_shape().iter().product()
    }

    /// Cell volume `Π_a h_a`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn node_lin(&self, idx: &[usize]) -> usize {
        compose(idx, &self.shape)
    }

    pub fn node_x(&self, lin: usize) -> &[f64] {
        &self.values[lin * self.dims.coord_count..(lin + 1) * self.dims.coord_count]
    }

    pub fn node_x_mut(&mut self, lin: usize) -> &mut [f64] {
        &mut self.values[lin * self.dims.coord_count..(lin + 1) * self.dims.coord_count]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Parameter coordinates of a node.
    pub fn node_s(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.origin)
            .zip(&self.spacing)
            .map(|((i, o), h)| o + *i as f64 * h)
            .collect()
    }

    /// Interior nodes have every index in `1..shape-1`.
    pub fn node_is_interior(&self, idx: &[usize]) -> bool {
        idx.iter()
            .zip(&self.shape)
            .all(|(i, m)| *i >= 1 && *i + 1 < *m)
    }

    /// New surface with parameter axis 0 reversed (orientation flip).
    pub fn reverse_orientation(&self) -> Surface {
        let mut out = self.clone();
        out.orientation_reversed = !self.orientation_reversed;
        let count = self.node_count();
        let cc = self.dims.coord_count;
        let mut idx = vec![0usize; self.dims.degree];
        for lin in 0..count {
            decompose(lin, &self.shape, &mut idx);
            idx[0] = self.shape[0] - 1 - idx[0];
            let src = compose(&idx, &self.shape);
            out.values[lin * cc..(lin + 1) * cc]
                .copy_from_slice(&self.values[src * cc..(src + 1) * cc]);
        }
        out
    }

    // ---- cell geometry -------------------------------------------------------

    /// Partials matrix (coord_count × degree, row-major) at the cell center: the
    /// direction-a column averages the cell's 2ⁿ node differences along a.
    pub fn cell_partials(&self, cell: &[usize], out: &mut [f64]) {
        let deg = self.dims.degree;
        let cc = self.dims.coord_count;
        debug_assert_eq!(out.len(), cc * deg);
        out.fill(0.0);
        let corners = 1usize << deg;
        let mut idx = vec![0usize; deg];
        for mask in 0..corners {
            for a in 0..deg {
                idx[a] = cell[a] + ((mask >> a) & 1);
            }
            let x = self.node_x(compose(&idx, &self.shape));
            for a in 0..deg {
                let sign = if (mask >> a) & 1 == 1 { 1.0 } else { -1.0 };
                for mu in 0..cc {
                    out[mu * deg + a] += sign * x[mu];
                }
            }
        }
        let half = (corners >> 1) as f64;
        for a in 0..deg {
            let scale = 1.0 / (half * self.spacing[a]);
            for mu in 0..cc {
                out[mu * deg + a] *= scale;
            }
        }
    }

    /// Cell-center coordinates: corner average.
    pub fn cell_center_x(&self, cell: &[usize], out: &mut [f64]) {
        let deg = self.dims.degree;
        let cc = self.dims.coord_count;
        out.fill(0.0);
        let corners = 1usize << deg;
        let mut idx = vec![0usize; deg];
        for mask in 0..corners {
            for a in 0..deg {
                idx[a] = cell[a] + ((mask >> a) & 1);
            }
            let x = self.node_x(compose(&idx, &self.shape));
            for mu in 0..cc {
                out[mu] += x[mu];
            }
        }
        let inv = 1.0 / corners as f64;
        for v in out.iter_mut() {
            *v *= inv;
        }
    }

    /// Cell-center coordinates and the Plücker vector of the cell Jacobian.
    pub fn cell_jacobian(&self, cell: &[usize]) -> Result<(Vec<f64>, PluckerVector)> {
        let cs = self.cell_shape();
        if cell.len() != cs.len() || cell.iter().zip(&cs).any(|(c, m)| c >= m) {
            return Err(Error::Dimension(format!(
                "cell {cell:?} outside grid of {cs:?} cells"
            )));
        }
        let mut x = vec![0.0; self.dims.coord_count];
        self.cell_center_x(cell, &mut x);
        let mut partials = vec![0.0; self.dims.coord_count * self.dims.degree];
        self.cell_partials(cell, &mut partials);
        let j = jacobian_multivector(self.dims, &partials)?;
        Ok((x, j))
    }

    // ---- face geometry -------------------------------------------------------

    /// Number of faces normal to direction `a`: `shape[a]` positions along `a`,
    /// cells elsewhere.
    pub fn face_extent(&self, a: usize) -> Vec<usize> {
        let mut e = self.cell_shape();
        e[a] = self.shape[a];
        e
    }

    /// Geometry at the center of face `face` (normal direction `a`): coordinates,
    /// the full partials matrix and whether the normal stencil was one-sided.
    ///
    /// Tangential partials stay inside the face; the normal partial uses nodes one
    /// step on each side (one-sided at the two boundary positions).
    pub fn face_geometry(&self, a: usize, face: &[usize], geo: &mut FaceGeometry) {
        let deg = self.dims.degree;
        let cc = self.dims.coord_count;
        geo.x.fill(0.0);
        geo.partials.fill(0.0);
        let tangents: Vec<usize> = (0..deg).filter(|b| *b != a).collect();
        let fcorners = 1usize << tangents.len();
        let pos_a = face[a];
        let (lo, hi, denom) = if pos_a == 0 {
            (0usize, 1usize, self.spacing[a])
        } else if pos_a == self.shape[a] - 1 {
            (pos_a - 1, pos_a, self.spacing[a])
        } else {
            (pos_a - 1, pos_a + 1, 2.0 * self.spacing[a])
        };
        let mut idx = vec![0usize; deg];
        for mask in 0..fcorners {
            idx[a] = pos_a;
            for (bit, &b) in tangents.iter().enumerate() {
                idx[b] = face[b] + ((mask >> bit) & 1);
            }
            let x = self.node_x(compose(&idx, &self.shape));
            for (gx, xv) in geo.x.iter_mut().zip(x) {
                *gx += xv;
            }
            // tangential differences within the face
            for (bit, &b) in tangents.iter().enumerate() {
                let sign = if (mask >> bit) & 1 == 1 { 1.0 } else { -1.0 };
                for (mu, xv) in x.iter().enumerate() {
                    geo.partials[mu * deg + b] += sign * xv;
                }
            }
            // normal difference across the face
            idx[a] = hi;
            let xh = self.node_x(compose(&idx, &self.shape));
            idx[a] = lo;
            let xl = self.node_x(compose(&idx, &self.shape));
            for mu in 0..cc {
                geo.partials[mu * deg + a] += xh[mu] - xl[mu];
            }
        }
        let inv_corners = 1.0 / fcorners as f64;
        for v in geo.x.iter_mut() {
            *v *= inv_corners;
        }
        for (bit_count, &b) in tangents.iter().enumerate() {
            let _ = bit_count;
            let pairs = (fcorners >> 1) as f64;
            let scale = 1.0 / (pairs.max(1.0) * self.spacing[b]);
            for mu in 0..cc {
                geo.partials[mu * deg + b] *= scale;
            }
        }
        let scale_n = inv_corners / denom;
        for mu in 0..cc {
            geo.partials[mu * deg + a] *= scale_n;
        }
    }

    /// Minors `∂(x^J)/∂(s^{b≠a})` for every sorted (degree-1)-tuple `J`, from a face
    /// partials matrix. Output is indexed by the lexicographic rank of `J`.
    pub fn face_minors(&self, a: usize, partials: &[f64], out: &mut [f64]) {
        let deg = self.dims.degree;
        let n = deg - 1;
        let tangents: Vec<usize> = (0..deg).filter(|b| *b != a).collect();
        let tuples = all_sorted(self.dims.coord_count, n);
        debug_assert_eq!(out.len(), tuples.len());
        let mut sub = vec![0.0f64; n * n];
        for (rank, j) in tuples.iter().enumerate() {
            for (r, &mu) in j.indices().iter().enumerate() {
                for (c, &b) in tangents.iter().enumerate() {
                    sub[r * n + c] = partials[mu * deg + b];
                }
            }
            out[rank] = det(&mut sub, n);
        }
    }

    // ---- discrete action -------------------------------------------------------

    /// `Σ_cells K(x̄, J_cell) · Π h_a` with deterministic pairwise summation.
    /// Degenerate cells abort with their index and reason.
    pub fn discrete_action(&self, form: &KawaguchiForm) -> Result<f64> {
        if form.dims() != self.dims {
            return Err(Error::Dimension(
                "form and surface dimensions differ".into(),
            ));
        }
        let prepared = form.prepared()?;
        let cells = self.cell_count();
        let cshape = self.cell_shape();
        let vol = self.cell_volume();
        let terms: Vec<Result<f64>> = (0..cells)
            .into_par_iter()
            .map(|lin| {
                let mut cell = vec![0usize; self.dims.degree];
                decompose(lin, &cshape, &mut cell);
                let (x, j) = self.cell_jacobian(&cell)?;
                match prepared.eval(&x, &j) {
                    Ok(v) => Ok(v * vol),
                    Err(e) => Err(Error::SingularCell {
                        cell: cell.clone(),
                        reason: describe_eval_error(&e).to_string(),
                    }),
                }
            })
            .collect();
        let mut vals = Vec::with_capacity(cells);
        for t in terms {
            vals.push(t?);
        }
        Ok(pairwise_sum(&vals))
    }

    // ---- n-form pullback and discrete exterior derivative -----------------------

    /// Pull an n-form field back to the staggered face layout:
    /// `c_a(face) = Σ_J f_J(x̄, dx) · minor_{J,a}`.
    pub fn pullback_nform(&self, field: &dyn NFormField) -> Result<GridNForm> {
        if field.dims() != self.dims {
            return Err(Error::Dimension(
                "field and surface dimensions differ".into(),
            ));
        }
        let deg = self.dims.degree;
        let n_minors = self.dims.minor_count();
        let mut coeffs = Vec::with_capacity(deg);
        for a in 0..deg {
            let extent = self.face_extent(a);
            let total: usize = extent.iter().product();
            let vals: Vec<Result<f64>> = (0..total)
                .into_par_iter()
                .map(|lin| {
                    let mut face = vec![0usize; deg];
                    decompose(lin, &extent, &mut face);
                    let mut geo = FaceGeometry::new(self.dims);
                    self.face_geometry(a, &face, &mut geo);
                    let dx = jacobian_multivector(self.dims, &geo.partials)?;
                    let mut f = vec![0.0; n_minors];
                    field.coeffs(&geo.x, &dx, &mut f).map_err(|e| {
                        Error::SingularFace {
                            dir: a,
                            face: face.clone(),
                            reason: e.to_string(),
                        }
                    })?;
                    let mut minors = vec![0.0; n_minors];
                    self.face_minors(a, &geo.partials, &mut minors);
                    Ok(f.iter().zip(&minors).map(|(fj, m)| fj * m).sum())
                })
                .collect();
            let mut arr = Vec::with_capacity(total);
            for v in vals {
                arr.push(v?);
            }
            coeffs.push(arr);
        }
        Ok(GridNForm {
            cells: self.cell_shape(),
            spacing: self.spacing.clone(),
            coeffs,
        })
    }
}

/// Scratch for face-center geometry.
pub struct FaceGeometry {
    pub x: Vec<f64>,
    /// coord_count × degree, row-major
    pub partials: Vec<f64>,
}

impl FaceGeometry {
    pub fn new(dims: Dims) -> Self {
        FaceGeometry {
            x: vec![0.0; dims.coord_count],
            partials: vec![0.0; dims.coord_count * dims.degree],
        }
    }
}

/// An n-form with evaluable coefficients `f_J(x, dx)`, one per sorted
/// (degree-1)-tuple `J` in lexicographic order.
pub trait NFormField: Sync {
    fn dims(&self) -> Dims;
    fn coeffs(&self, x: &[f64], dx: &PluckerVector, out: &mut [f64]) -> Result<()>;
}

/// n-form with expression coefficients (absent entries are 0).
pub struct ExprNForm {
    dims: Dims,
    params: BTreeMap<String, f64>,
    coeffs: Vec<Option<Expression>>,
}

impl ExprNForm {
    pub fn new(dims: Dims, params: BTreeMap<String, f64>) -> Self {
        ExprNForm {
            dims,
            params,
            coeffs: (0..dims.minor_count()).map(|_| None).collect(),
        }
    }

    /// Set the coefficient of `dx^J`.
    pub fn set(&mut self, j: &MultiIndex, e: Expression) {
        let rank = crate::multivector::lex_rank(self.dims.coord_count, j.indices());
        self.coeffs[rank] = Some(e);
    }

    pub fn coeff(&self, rank: usize) -> Option<&Expression> {
        self.coeffs[rank].as_ref()
    }
}

impl NFormField for ExprNForm {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn coeffs(&self, x: &[f64], dx: &PluckerVector, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        for (rank, c) in self.coeffs.iter().enumerate() {
            if let Some(e) = c {
                out[rank] = e.prepare(&self.params)?.eval(x, dx)?;
            }
        }
        Ok(())
    }
}

/// Face-resident coefficients of a pulled-back n-form.
#[derive(Clone, Debug)]
pub struct GridNForm {
    /// cells per axis
    cells: Vec<usize>,
    spacing: Vec<f64>,
    /// `coeffs[a]` over faces normal to `a`: extent `cells` with axis `a` replaced
    /// by `cells[a] + 1`, row-major
    coeffs: Vec<Vec<f64>>,
}

impl GridNForm {
    pub fn new_zero(cells: &[usize], spacing: &[f64]) -> Self {
        let deg = cells.len();
        let coeffs = (0..deg)
            .map(|a| {
                let mut e = cells.to_vec();
                e[a] += 1;
                vec![0.0; e.iter().product()]
            })
            .collect();
        GridNForm {
            cells: cells.to_vec(),
            spacing: spacing.to_vec(),
            coeffs,
        }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn degree(&self) -> usize {
        self.cells.len()
    }

    pub fn face_extent(&self, a: usize) -> Vec<usize> {
        let mut e = self.cells.clone();
        e[a] += 1;
        e
    }

    pub fn coeffs(&self, a: usize) -> &[f64] {
        &self.coeffs[a]
    }

    pub fn coeffs_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.coeffs[a]
    }

    pub fn face_value(&self, a: usize, face: &[usize]) -> f64 {
        self.coeffs[a][compose(face, &self.face_extent(a))]
    }

    /// Discrete exterior derivative, one value per cell (row-major):
    /// `Σ_a (-1)^a [c_a(face_a^+) - c_a(face_a^-)] / h_a`.
    pub fn discrete_d(&self) -> Vec<f64> {
        let deg = self.degree();
        let total: usize = self.cells.iter().product();
        let mut out = vec![0.0; total];
        let extents: Vec<Vec<usize>> = (0..deg).map(|a| self.face_extent(a)).collect();
        let mut cell = vec![0usize; deg];
        for (lin, o) in out.iter_mut().enumerate() {
            decompose(lin, &self.cells, &mut cell);
            let mut acc = 0.0;
            for a in 0..deg {
                let mut f = cell.clone();
                let lo = self.coeffs[a][compose(&f, &extents[a])];
                f[a] += 1;
                let hi = self.coeffs[a][compose(&f, &extents[a])];
                let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * (hi - lo) / self.spacing[a];
            }
            *o = acc;
        }
        out
    }

    /// Oriented boundary flux `Σ_a (-1)^a (Σ_top c_a - Σ_bottom c_a) Π_{b≠a} h_b`;
    /// equals `Σ_cells (dω) · Π h` exactly (telescoping).
    pub fn boundary_flux(&self) -> f64 {
        let deg = self.degree();
        let mut acc = 0.0;
        for a in 0..deg {
            let extent = self.face_extent(a);
            let area: f64 = self
                .spacing
                .iter()
                .enumerate()
                .filter(|(b, _)| *b != a)
                .map(|(_, h)| h)
                .product();
            let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
            let mut idx = vec![0usize; deg];
            let total: usize = extent.iter().product();
            let mut top = Vec::new();
            let mut bottom = Vec::new();
            for lin in 0..total {
                decompose(lin, &extent, &mut idx);
                if idx[a] == 0 {
                    bottom.push(self.coeffs[a][lin]);
                } else if idx[a] == extent[a] - 1 {
                    top.push(self.coeffs[a][lin]);
                }
            }
            acc += sign * (pairwise_sum(&top) - pairwise_sum(&bottom)) * area;
        }
        acc
    }

    /// Sum of `c_a` over the slice of faces at position `k` along direction `a`,
    /// times the transverse face measure (a discrete charge).
    pub fn slice_charge(&self, a: usize, k: usize) -> f64 {
        let extent = self.face_extent(a);
        let area: f64 = self
            .spacing
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != a)
            .map(|(_, h)| h)
            .product();
        let mut idx = vec![0usize; self.degree()];
        let total: usize = extent.iter().product();
        let mut vals = Vec::new();
        for lin in 0..total {
            decompose(lin, &extent, &mut idx);
            if idx[a] == k {
                vals.push(self.coeffs[a][lin]);
            }
        }
        pairwise_sum(&vals) * area
    }
}

// ---- CSV + descriptor I/O ------------------------------------------------------

impl Surface {
    /// Write the node table as CSV: header `s0,…,sn,x0,…,xN`, row-major node order
    /// (last parameter index fastest). Values print exactly (shortest round-trip
    /// float representation).
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let deg = self.dims.degree;
        let cc = self.dims.coord_count;
        let mut header = Vec::new();
        for a in 0..deg {
            header.push(format!("s{a}"));
        }
        for mu in 0..cc {
            header.push(format!("x{mu}"));
        }
        writeln!(w, "{}", header.join(","))?;
        let mut idx = vec![0usize; deg];
        for lin in 0..self.node_count() {
            decompose(lin, &self.shape, &mut idx);
            let s = self.node_s(&idx);
            let x = self.node_x(lin);
            let mut row: Vec<String> = s.iter().map(|v| format!("{v}")).collect();
            row.extend(x.iter().map(|v| format!("{v}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn descriptor(&self) -> SurfaceDescriptor {
        SurfaceDescriptor {
            shape: self.shape.clone(),
            spacing: self.spacing.clone(),
            origin: self.origin.clone(),
        }
    }

    /// Read a surface from CSV plus its descriptor. The `s` columns are ignored
    /// (grid geometry comes from the descriptor); the `x` column count fixes the
    /// coordinate count, `degree` comes from the descriptor shape.
    pub fn read_csv(r: &mut impl BufRead, desc: &SurfaceDescriptor) -> Result<Surface> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::SurfaceFile("empty file".into()))?
            .map_err(|e| Error::SurfaceFile(e.to_string()))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let deg = desc.shape.len();
        let s_cols = cols.iter().take_while(|c| c.starts_with('s')).count();
        if s_cols != deg {
            return Err(Error::SurfaceFile(format!(
                "{s_cols} parameter columns in header, descriptor shape has {deg}"
            )));
        }
        let cc = cols.len() - s_cols;
        if cc == 0 {
            return Err(Error::SurfaceFile("no coordinate columns".into()));
        }
        for (mu, c) in cols[s_cols..].iter().enumerate() {
            if *c != format!("x{mu}") {
                return Err(Error::SurfaceFile(format!(
                    "unexpected column '{c}', expected x{mu}"
                )));
            }
        }
        if deg > cc {
            return Err(Error::SurfaceFile(
                "descriptor degree exceeds coordinate count".into(),
            ));
        }
        if desc.spacing.len() != deg || desc.origin.len() != deg {
            return Err(Error::SurfaceFile(
                "descriptor shape/spacing/origin lengths differ".into(),
            ));
        }
        let dims = Dims::new(cc, deg);
        let count: usize = desc.shape.iter().product();
        let mut values = vec![0.0; count * cc];
        let mut row_count = 0usize;
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::SurfaceFile(e.to_string()))?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if row_count >= count {
                return Err(Error::SurfaceFile("more rows than descriptor nodes".into()));
            }
            let fields: Vec<&str> = t.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::SurfaceFile(format!(
                    "row {} has {} fields, expected {}",
                    i + 2,
                    fields.len(),
                    cols.len()
                )));
            }
            for mu in 0..cc {
                values[row_count * cc + mu] = fields[s_cols + mu].trim().parse().map_err(|_| {
                    Error::SurfaceFile(format!("row {}: bad number '{}'", i + 2, fields[s_cols + mu]))
                })?;
            }
            row_count += 1;
        }
        if row_count != count {
            return Err(Error::SurfaceFile(format!(
                "{row_count} data rows, descriptor shape wants {count}"
            )));
        }
        Ok(Surface {
            dims,
            shape: desc.shape.clone(),
            spacing: desc.spacing.clone(),
            origin: desc.origin.clone(),
            values,
            orientation_reversed: false,
        })
    }
}

// ---- shared index helpers ---------------------------------------------------

/// Row-major linearization (last index fastest).
pub fn compose(idx: &[usize], extent: &[usize]) -> usize {
    let mut lin = 0usize;
    for (i, m) in idx.iter().zip(extent) {
        debug_assert!(i < m);
        lin = lin * m + i;
    }
    lin
}

/// Inverse of [`compose`].
pub fn decompose(mut lin: usize, extent: &[usize], out: &mut [usize]) {
    for a in (0..extent.len()).rev() {
        out[a] = lin % extent[a];
        lin /= extent[a];
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}
