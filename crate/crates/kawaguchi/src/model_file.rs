//! Plain-text model files.
//!
//! ```text
//! # realified complex scalar, m = 1
//! N 3
//! n 1
//! coords t x u v
//! param m 1.0
//! K (d[1,2]^2 + d[1,3]^2 - d[0,2]^2 - d[0,3]^2)/d[0,1] - m^2*(u^2 + v^2)*d[0,1]
//! vector v0
//!   0: 1
//! vector w
//!   2: -v
//!   3: u
//! ```
//!
//! Sections: `N`, `n` (dimensions), optional `coords` (aliases usable in
//! expressions), repeated `param NAME VALUE`, one `K EXPR` (lines ending in `\`
//! continue), and any number of `vector NAME` / `bterm NAME` blocks whose bodies are
//! indented `index: expression` lines. A vector component may use `d[...]` symbols,
//! which makes the field generalized. A `bterm` with the same name as a vector is
//! used as its B term in Killing checks.

use std::collections::BTreeMap;

use crate::expr::{Expression, ParseContext};
use crate::kform::KawaguchiForm;
use crate::multivector::{Dims, MultiIndex};
use crate::noether::{BTerm, VectorField};
use crate::{Error, Result};

/// Raw `index: expression` component lines of a vector block.
pub type VectorComponents = Vec<(usize, String)>;
/// Raw `tuple: expression` coefficient lines of a bterm block.
pub type BTermCoefficients = Vec<(Vec<usize>, String)>;

#[derive(Clone, Debug)]
pub struct ModelFile {
    pub dims: Dims,
    pub coord_names: Vec<String>,
    pub params: BTreeMap<String, f64>,
    pub k_text: String,
    pub vectors: Vec<(String, VectorComponents)>,
    pub bterms: Vec<(String, BTermCoefficients)>,
}

/// A fully built model: the form plus named generators and B terms.
#[derive(Debug)]
pub struct LoadedModel {
    pub form: KawaguchiForm,
    pub vectors: Vec<(String, VectorField)>,
    pub bterms: Vec<(String, BTerm)>,
}

impl LoadedModel {
    pub fn bterm_for(&self, vector_name: &str) -> Option<&BTerm> {
        self.bterms
            .iter()
            .find(|(n, _)| n == vector_name)
            .map(|(_, b)| b)
    }
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<ModelFile> {
        let mut n_upper: Option<usize> = None;
        let mut n: Option<usize> = None;
        let mut coord_names = Vec::new();
        let mut params = BTreeMap::new();
        let mut k_text: Option<String> = None;
        let mut vectors: Vec<(String, VectorComponents)> = Vec::new();
        let mut bterms: Vec<(String, BTermCoefficients)> = Vec::new();

        enum Block {
            None,
            Vector(usize),
            BTerm(usize),
        }
        let mut block = Block::None;

        let err = |line_no: usize, msg: String| Error::ModelFile(format!("line {line_no}: {msg}"));

        // join continuation lines first
        let mut logical: Vec<(usize, String)> = Vec::new();
        let mut pending: Option<(usize, String)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let without_comment = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let mut piece = without_comment.trim_end().to_string();
            let continued = piece.ends_with('\\');
            if continued {
                piece.pop();
            }
            match pending.take() {
                Some((start, mut acc)) => {
                    acc.push(' ');
                    acc.push_str(piece.trim_start());
                    if continued {
                        pending = Some((start, acc));
                    } else {
                        logical.push((start, acc));
                    }
                }
                None => {
                    if continued {
                        pending = Some((line_no, piece));
                    } else {
                        logical.push((line_no, piece));
                    }
                }
            }
        }
        if let Some((start, acc)) = pending {
            logical.push((start, acc));
        }

        for (line_no, line) in logical {
            let indented = line.starts_with(' ') || line.starts_with('\t');
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            // component lines belong to the open block
            if indented {
                let (idx_part, expr_part) = t
                    .split_once(':')
                    .ok_or_else(|| err(line_no, "expected 'index: expression'".into()))?;
                let expr_text = expr_part.trim().to_string();
                match &block {
                    Block::Vector(slot) => {
                        let mu: usize = idx_part.trim().parse().map_err(|_| {
                            err(line_no, format!("bad component index '{idx_part}'"))
                        })?;
                        vectors[*slot].1.push((mu, expr_text));
                    }
                    Block::BTerm(slot) => {
                        let idx_text = idx_part.trim().trim_start_matches('[').trim_end_matches(']');
                        let tuple: Vec<usize> = idx_text
                            .split(',')
                            .map(|p| p.trim().parse())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| {
                                err(line_no, format!("bad index tuple '{idx_part}'"))
                            })?;
                        bterms[*slot].1.push((tuple, expr_text));
                    }
                    Block::None => {
                        return Err(err(line_no, "component line outside a block".into()))
                    }
                }
                continue;
            }
            block = Block::None;
            let (key, rest) = match t.split_once(char::is_whitespace) {
                Some((k, r)) => (k, r.trim()),
                None => (t, ""),
            };
            match key {
                "N" => {
                    n_upper = Some(rest.parse().map_err(|_| {
                        err(line_no, format!("bad manifold dimension '{rest}'"))
                    })?)
                }
                "n" => {
                    n = Some(rest.parse().map_err(|_| {
                        err(line_no, format!("bad surface dimension '{rest}'"))
                    })?)
                }
                "coords" => {
                    coord_names = rest.split_whitespace().map(String::from).collect();
                }
                "param" => {
                    let (name, value) = rest
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| err(line_no, "expected 'param NAME VALUE'".into()))?;
                    let v: f64 = value.trim().parse().map_err(|_| {
                        err(line_no, format!("bad parameter value '{value}'"))
                    })?;
                    params.insert(name.to_string(), v);
                }
                "K" => {
                    if k_text.is_some() {
                        return Err(err(line_no, "duplicate K line".into()));
                    }
                    if rest.is_empty() {
                        return Err(err(line_no, "K needs an expression".into()));
                    }
                    k_text = Some(rest.to_string());
                }
                "vector" => {
                    if rest.is_empty() {
                        return Err(err(line_no, "vector needs a name".into()));
                    }
                    vectors.push((rest.to_string(), Vec::new()));
                    block = Block::Vector(vectors.len() - 1);
                }
                "bterm" => {
                    if rest.is_empty() {
                        return Err(err(line_no, "bterm needs a name".into()));
                    }
                    bterms.push((rest.to_string(), Vec::new()));
                    block = Block::BTerm(bterms.len() - 1);
                }
                other => return Err(err(line_no, format!("unknown keyword '{other}'"))),
            }
        }

        let n_upper = n_upper.ok_or_else(|| Error::ModelFile("missing 'N' line".into()))?;
        let n = n.ok_or_else(|| Error::ModelFile("missing 'n' line".into()))?;
        if n + 1 > n_upper + 1 {
            return Err(Error::ModelFile("need N + 1 > n".into()));
        }
        let dims = Dims::from_spec(n_upper, n);
        if !coord_names.is_empty() && coord_names.len() != dims.coord_count {
            return Err(Error::ModelFile(format!(
                "{} coordinate names for {} coordinates",
                coord_names.len(),
                dims.coord_count
            )));
        }
        let k_text = k_text.ok_or_else(|| Error::ModelFile("missing 'K' line".into()))?;
        Ok(ModelFile {
            dims,
            coord_names,
            params,
            k_text,
            vectors,
            bterms,
        })
    }

    fn context(&self) -> ParseContext {
        ParseContext::new(self.dims)
            .with_params(self.params.keys().cloned().collect::<Vec<_>>())
            .with_coord_names(self.coord_names.clone())
    }

    /// Build the form, vector fields and B terms.
    pub fn load(&self) -> Result<LoadedModel> {
        let ctx = self.context();
        let k = Expression::parse(&self.k_text, &ctx).map_err(Error::Parse)?;
        let form = KawaguchiForm::new(k, self.params.clone());

        let mut vectors = Vec::new();
        for (name, comps) in &self.vectors {
            let mut exprs: Vec<Expression> = (0..self.dims.coord_count)
                .map(|_| Expression::constant(self.dims, 0.0))
                .collect();
            let mut generalized = false;
            for (mu, text) in comps {
                if *mu >= self.dims.coord_count {
                    return Err(Error::ModelFile(format!(
                        "vector '{name}': component index {mu} out of range"
                    )));
                }
                let e = Expression::parse(text, &ctx).map_err(Error::Parse)?;
                generalized |= e.uses_plucker_symbols();
                exprs[*mu] = e;
            }
            let field = if generalized {
                VectorField::generalized(exprs, self.params.clone())?
            } else {
                VectorField::strict(exprs, self.params.clone())?
            };
            vectors.push((name.clone(), field));
        }

        let mut bterms = Vec::new();
        for (name, coeffs) in &self.bterms {
            let mut b = BTerm::new(self.dims, self.params.clone());
            for (tuple, text) in coeffs {
                if tuple.len() != self.dims.degree - 1 {
                    return Err(Error::ModelFile(format!(
                        "bterm '{name}': index tuple {tuple:?} must have length {}",
                        self.dims.degree - 1
                    )));
                }
                let e = Expression::parse(text, &ctx).map_err(Error::Parse)?;
                b.set(&MultiIndex::new(tuple.clone()), e)?;
            }
            bterms.push((name.clone(), b));
        }
        Ok(LoadedModel {
            form,
            vectors,
            bterms,
        })
    }
}
