//! Sorted multi-index bookkeeping and Plücker coordinates.
//!
//! An (n+1)-multivector on a manifold with coordinates `x^0 … x^N` is stored by its
//! components on strictly increasing index tuples `μ0 < μ1 < … < μn` only; every
//! formula that sums over all index orderings with `1/(n+1)!` factors is rewritten as
//! a plain sum over sorted tuples, with the factor absorbed. Components on unsorted
//! tuples are recovered through the permutation sign of [`sort_index`].

use crate::{Error, Result};

/// Dimension bookkeeping shared by every geometric object in the crate.
///
/// `coord_count` is the number of coordinates `x^0 … x^N` (that is, N + 1), and
/// `degree` is the multivector degree (the surface dimension n + 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub coord_count: usize,
    pub degree: usize,
}

impl Dims {
    pub fn new(coord_count: usize, degree: usize) -> Self {
        assert!(degree >= 1 && coord_count >= degree, "need N+1 >= n+1 >= 1");
        Dims {
            coord_count,
            degree,
        }
    }

    /// From the (N, n) convention: coordinates `x^0 … x^N`, surfaces of dimension n+1.
    pub fn from_spec(n_upper: usize, n: usize) -> Self {
        Dims::new(n_upper + 1, n + 1)
    }

    /// Number of sorted index tuples of length `degree`, i.e. C(coord_count, degree).
    pub fn component_count(&self) -> usize {
        binomial(self.coord_count, self.degree)
    }

    /// Number of sorted index tuples of length `degree - 1` (the n-form index set).
    pub fn minor_count(&self) -> usize {
        binomial(self.coord_count, self.degree - 1)
    }

    pub fn n_upper(&self) -> usize {
        self.coord_count - 1
    }

    pub fn surface_dim(&self) -> usize {
        self.degree - 1
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// A strictly increasing tuple of `n+1` distinct indices in `[0, N]`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    indices: Vec<usize>,
}

impl MultiIndex {
    /// Wrap an already sorted, duplicate-free tuple. Panics if the invariant fails;
    /// use [`sort_index`] for raw tuples.
    pub fn new(indices: Vec<usize>) -> Self {
        assert!(
            indices.windows(2).all(|w| w[0] < w[1]),
            "multi-index must be strictly increasing: {indices:?}"
        );
        MultiIndex { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, mu: usize) -> bool {
        self.indices.binary_search(&mu).is_ok()
    }

    /// Position of `mu` in the tuple, if present.
    pub fn position(&self, mu: usize) -> Option<usize> {
        self.indices.binary_search(&mu).ok()
    }

    /// The tuple with `mu` removed (must be present).
    pub fn without(&self, mu: usize) -> MultiIndex {
        let mut v = self.indices.clone();
        let p = self.position(mu).expect("index not in multi-index");
        v.remove(p);
        MultiIndex { indices: v }
    }
}

impl std::fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "d{:?}", self.indices)
    }
}

/// Canonicalize a raw index tuple: returns the sorted tuple and the permutation
/// parity (+1 or -1), or sign 0 when an index repeats (the component is then 0 and
/// the returned tuple is meaningless).
pub fn sort_index(raw: &[usize], coord_count: usize) -> Result<(MultiIndex, i32)> {
    for &i in raw {
        if i >= coord_count {
            return Err(Error::IndexRange(format!(
                "index {i} out of range for coordinates x0..x{}",
                coord_count - 1
            )));
        }
    }
    let mut v = raw.to_vec();
    // insertion sort, counting inversions; tuples are tiny
    let mut inversions = 0usize;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            inversions += 1;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return Ok((MultiIndex { indices: v }, 0));
    }
    let sign = if inversions.is_multiple_of(2) { 1 } else { -1 };
    Ok((MultiIndex { indices: v }, sign))
}

/// Lexicographic rank of a sorted `k`-tuple among all sorted `k`-subsets of
/// `0..coord_count`. Inverse of [`unrank`].
pub fn lex_rank(dims_coords: usize, indices: &[usize]) -> usize {
    let k = indices.len();
    let mut rank = 0usize;
    let mut prev: isize = -1;
    for (pos, &idx) in indices.iter().enumerate() {
        for skipped in (prev + 1) as usize..idx {
            rank += binomial(dims_coords - skipped - 1, k - pos - 1);
        }
        prev = idx as isize;
    }
    rank
}

/// The sorted `k`-tuple with lexicographic rank `rank`.
pub fn unrank(dims_coords: usize, k: usize, mut rank: usize) -> MultiIndex {
    let mut out = Vec::with_capacity(k);
    let mut next = 0usize;
    for pos in 0..k {
        let mut idx = next;
        loop {
            let below = binomial(dims_coords - idx - 1, k - pos - 1);
            if rank < below {
                break;
            }
            rank -= below;
            idx += 1;
        }
        out.push(idx);
        next = idx + 1;
    }
    MultiIndex { indices: out }
}

/// All sorted `k`-tuples over `0..coord_count` in lexicographic order.
pub fn all_sorted(coord_count: usize, k: usize) -> Vec<MultiIndex> {
    (0..binomial(coord_count, k))
        .map(|r| unrank(coord_count, k, r))
        .collect()
}

/// Dense antisymmetric (n+1)-vector: one real component per sorted multi-index,
/// lexicographic order. Missing (never-set) entries are 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PluckerVector {
    dims: Dims,
    comps: Vec<f64>,
}

impl PluckerVector {
    pub fn zero(dims: Dims) -> Self {
        PluckerVector {
            dims,
            comps: vec![0.0; dims.component_count()],
        }
    }

    pub fn from_components(dims: Dims, comps: Vec<f64>) -> Self {
        assert_eq!(comps.len(), dims.component_count());
        PluckerVector { dims, comps }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn components(&self) -> &[f64] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [f64] {
        &mut self.comps
    }

    pub fn get(&self, idx: &MultiIndex) -> f64 {
        self.comps[lex_rank(self.dims.coord_count, idx.indices())]
    }

    pub fn set(&mut self, idx: &MultiIndex, value: f64) {
        self.comps[lex_rank(self.dims.coord_count, idx.indices())] = value;
    }

    /// Component on a raw (possibly unsorted) tuple, with the permutation sign applied.
    pub fn get_raw(&self, raw: &[usize]) -> Result<f64> {
        let (sorted, sign) = sort_index(raw, self.dims.coord_count)?;
        if sign == 0 {
            return Ok(0.0);
        }
        Ok(sign as f64 * self.get(&sorted))
    }

    pub fn scale(&self, lambda: f64) -> PluckerVector {
        PluckerVector {
            dims: self.dims,
            comps: self.comps.iter().map(|c| c * lambda).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

/// Plücker coordinates of the decomposable (n+1)-vector spanned by the columns of a
/// parameterization Jacobian.
///
/// `partials` is row-major `coord_count x degree`: entry `(μ, a)` is `∂x^μ/∂s^a`.
/// The component on a sorted tuple `μ0 < … < μn` is the determinant of the
/// corresponding row submatrix.
pub fn jacobian_multivector(dims: Dims, partials: &[f64]) -> Result<PluckerVector> {
    if partials.len() != dims.coord_count * dims.degree {
        return Err(Error::Dimension(format!(
            "partials matrix is {} entries, expected {} x {}",
            partials.len(),
            dims.coord_count,
            dims.degree
        )));
    }
    let k = dims.degree;
    let mut out = PluckerVector::zero(dims);
    let mut sub = vec![0.0f64; k * k];
    for (rank, comp) in out.comps.iter_mut().enumerate() {
        let idx = unrank(dims.coord_count, k, rank);
        for (r, &mu) in idx.indices().iter().enumerate() {
            sub[r * k..r * k + k].copy_from_slice(&partials[mu * k..mu * k + k]);
        }
        *comp = det(&mut sub, k);
    }
    Ok(out)
}

/// Determinant of a k×k row-major matrix. Closed form up to 3×3, LU with partial
/// pivoting above. The buffer is clobbered for k > 3.
pub fn det(m: &mut [f64], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => lu_det(m, k),
    }
}

fn lu_det(m: &mut [f64], k: usize) -> f64 {
    let mut sign = 1.0f64;
    for col in 0..k {
        let mut piv = col;
        let mut best = m[col * k + col].abs();
        for row in col + 1..k {
            let v = m[row * k + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..k {
                m.swap(col * k + j, piv * k + j);
            }
            sign = -sign;
        }
        let d = m[col * k + col];
        for row in col + 1..k {
            let f = m[row * k + col] / d;
            if f != 0.0 {
                for j in col..k {
                    m[row * k + j] -= f * m[col * k + j];
                }
            }
        }
    }
    let mut acc = sign;
    for i in 0..k {
        acc *= m[i * k + i];
    }
    acc
}

/// Cofactor matrix (row-major k×k): entry (r, c) is the signed minor obtained by
/// deleting row r and column c, so that `d det / d m[r,c] = cof[r,c]`.
pub fn cofactor_matrix(m: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; k * k];
    if k == 1 {
        out[0] = 1.0;
        return out;
    }
    let mut minor = vec![0.0f64; (k - 1) * (k - 1)];
    for r in 0..k {
        for c in 0..k {
            let mut mi = 0;
            for rr in 0..k {
                if rr == r {
                    continue;
                }
                for cc in 0..k {
                    if cc == c {
                        continue;
                    }
                    minor[mi] = m[rr * k + cc];
                    mi += 1;
                }
            }
            let s = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            out[r * k + c] = s * det(&mut minor, k - 1);
        }
    }
    out
}

/// Largest violation of the Grassmann–Plücker relations: the antisymmetrization
/// identity `dx^{[μμ'}dx^{ν]ν'} = 0` evaluated over all sorted choices of the
/// antisymmetrized (n+2)-set and the free n-tuple. Zero (to round-off) exactly on
/// decomposable vectors such as Jacobian multivectors.
pub fn plucker_residual(p: &PluckerVector) -> f64 {
    let dims = p.dims();
    let deg = dims.degree;
    if dims.coord_count < deg + 1 {
        return 0.0; // no room for a relation
    }
    let anti_sets = all_sorted(dims.coord_count, deg + 1);
    let free_sets = all_sorted(dims.coord_count, deg - 1);
    let mut worst = 0.0f64;
    let mut raw = Vec::with_capacity(deg);
    for a in &anti_sets {
        for f in &free_sets {
            let mut acc = 0.0f64;
            for (k, &alpha) in a.indices().iter().enumerate() {
                let rest = a.without(alpha);
                let sign_k = if k % 2 == 0 { 1.0 } else { -1.0 };
                raw.clear();
                raw.push(alpha);
                raw.extend_from_slice(f.indices());
                let second = p.get_raw(&raw).expect("indices in range");
                if second != 0.0 {
                    acc += sign_k * p.get(&rest) * second;
                }
            }
            worst = worst.max(acc.abs());
        }
    }
    worst
}
