//! Flat evaluation tape compiled from an expression tree.
//!
//! Gradients use batched forward mode: every op carries one dual lane per active
//! symbol (coordinates and Plücker components actually present in the tree), so a
//! single sweep yields the full gradient. Scratch buffers are thread-local; values
//! are bit-identical across calls and threads.

use std::cell::RefCell;

use super::{Ast, EvalError};
use crate::multivector::Dims;

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Param(u32),
    // leaf loads carry their active-lane slot
    Coord { mu: u32, lane: u32 },
    Plucker { rank: u32, lane: u32 },
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, i32),
    Sqrt(u32),
    Abs(u32),
}

pub(crate) struct Tape {
    ops: Vec<Op>,
    /// active coordinate symbols, lane order
    coords: Vec<usize>,
    /// active Plücker ranks, lane order (after coordinate lanes)
    pluckers: Vec<usize>,
}

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

impl Tape {
    pub fn compile(ast: &Ast, dims: Dims) -> Tape {
        let mut coords = Vec::new();
        let mut pluckers = Vec::new();
        super::collect(ast, &mut |a| match a {
            Ast::Coord(m) => coords.push(*m),
            Ast::Plucker(r) => pluckers.push(*r),
            _ => {}
        });
        coords.sort_unstable();
        coords.dedup();
        pluckers.sort_unstable();
        pluckers.dedup();
        let _ = dims;
        let mut tape = Tape {
            ops: Vec::new(),
            coords,
            pluckers,
        };
        tape.emit(ast);
        tape
    }

    fn lane_of_coord(&self, mu: usize) -> u32 {
        self.coords.binary_search(&mu).unwrap() as u32
    }

    fn lane_of_plucker(&self, rank: usize) -> u32 {
        (self.coords.len() + self.pluckers.binary_search(&rank).unwrap()) as u32
    }

    fn emit(&mut self, ast: &Ast) -> u32 {
        let op = match ast {
            Ast::Const(c) => Op::Const(*c),
            Ast::Param(s) => Op::Param(*s as u32),
            Ast::Coord(m) => Op::Coord {
                mu: *m as u32,
                lane: self.lane_of_coord(*m),
            },
            Ast::Plucker(r) => Op::Plucker {
                rank: *r as u32,
                lane: self.lane_of_plucker(*r),
            },
            Ast::Neg(a) => Op::Neg(self.emit(a)),
            Ast::Add(a, b) => {
                let (x, y) = (self.emit(a), self.emit(b));
                Op::Add(x, y)
            }
            Ast::Sub(a, b) => {
                let (x, y) = (self.emit(a), self.emit(b));
                Op::Sub(x, y)
            }
            Ast::Mul(a, b) => {
                let (x, y) = (self.emit(a), self.emit(b));
                Op::Mul(x, y)
            }
            Ast::Div(a, b) => {
                let (x, y) = (self.emit(a), self.emit(b));
                Op::Div(x, y)
            }
            Ast::Pow(a, k) => Op::Pow(self.emit(a), *k),
            Ast::Sqrt(a) => Op::Sqrt(self.emit(a)),
            Ast::Abs(a) => Op::Abs(self.emit(a)),
        };
        self.ops.push(op);
        (self.ops.len() - 1) as u32
    }

    pub fn eval(&self, x: &[f64], dx: &[f64], params: &[f64]) -> Result<f64, EvalError> {
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            let vals = &mut s.0;
            vals.clear();
            vals.resize(self.ops.len(), 0.0);
            for (i, op) in self.ops.iter().enumerate() {
                vals[i] = match *op {
                    Op::Const(c) => c,
                    Op::Param(p) => params[p as usize],
                    Op::Coord { mu, .. } => x[mu as usize],
                    Op::Plucker { rank, .. } => dx[rank as usize],
                    Op::Neg(a) => -vals[a as usize],
                    Op::Add(a, b) => vals[a as usize] + vals[b as usize],
                    Op::Sub(a, b) => vals[a as usize] - vals[b as usize],
                    Op::Mul(a, b) => vals[a as usize] * vals[b as usize],
                    Op::Div(a, b) => {
                        let d = vals[b as usize];
                        if d == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        vals[a as usize] / d
                    }
                    Op::Pow(a, k) => {
                        let v = vals[a as usize];
                        if v == 0.0 && k < 0 {
                            return Err(EvalError::ZeroToNegativePower(k));
                        }
                        v.powi(k)
                    }
                    Op::Sqrt(a) => {
                        let v = vals[a as usize];
                        if v < 0.0 {
                            return Err(EvalError::SqrtNegative(v));
                        }
                        v.sqrt()
                    }
                    Op::Abs(a) => vals[a as usize].abs(),
                };
            }
            Ok(*vals.last().unwrap())
        })
    }

    /// Forward-mode value + gradient. `grad_x` has `coord_count` entries, `grad_dx`
    /// one entry per sorted Plücker tuple; inactive entries are set to 0.
    pub fn eval_gradient(
        &self,
        x: &[f64],
        dx: &[f64],
        params: &[f64],
        grad_x: &mut [f64],
        grad_dx: &mut [f64],
    ) -> Result<f64, EvalError> {
        let n_lanes = self.coords.len() + self.pluckers.len();
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            let (vals, ders) = &mut *s;
            vals.clear();
            vals.resize(self.ops.len(), 0.0);
            ders.clear();
            ders.resize(self.ops.len() * n_lanes, 0.0);

            for (i, op) in self.ops.iter().enumerate() {
                // split so `row(i)` can borrow disjoint slices
                let (done, rest) = ders.split_at_mut(i * n_lanes);
                let row = &mut rest[..n_lanes];
                let dof = |j: u32| &done[j as usize * n_lanes..j as usize * n_lanes + n_lanes];
                vals[i] = match *op {
                    Op::Const(c) => c,
                    Op::Param(p) => params[p as usize],
                    Op::Coord { mu, lane } => {
                        row[lane as usize] = 1.0;
                        x[mu as usize]
                    }
                    Op::Plucker { rank, lane } => {
                        row[lane as usize] = 1.0;
                        dx[rank as usize]
                    }
                    Op::Neg(a) => {
                        let da = dof(a);
                        for (r, d) in row.iter_mut().zip(da) {
                            *r = -d;
                        }
                        -vals[a as usize]
                    }
                    Op::Add(a, b) => {
                        let (da, db) = (dof(a), dof(b));
                        for ((r, u), v) in row.iter_mut().zip(da).zip(db) {
                            *r = u + v;
                        }
                        vals[a as usize] + vals[b as usize]
                    }
                    Op::Sub(a, b) => {
                        let (da, db) = (dof(a), dof(b));
                        for ((r, u), v) in row.iter_mut().zip(da).zip(db) {
                            *r = u - v;
                        }
                        vals[a as usize] - vals[b as usize]
                    }
                    Op::Mul(a, b) => {
                        let (va, vb) = (vals[a as usize], vals[b as usize]);
                        let (da, db) = (dof(a), dof(b));
                        for ((r, u), v) in row.iter_mut().zip(da).zip(db) {
                            *r = u * vb + va * v;
                        }
                        va * vb
                    }
                    Op::Div(a, b) => {
                        let (va, vb) = (vals[a as usize], vals[b as usize]);
                        if vb == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        let inv = 1.0 / vb;
                        let val = va * inv;
                        let (da, db) = (dof(a), dof(b));
                        for ((r, u), v) in row.iter_mut().zip(da).zip(db) {
                            *r = (u - val * v) * inv;
                        }
                        val
                    }
                    Op::Pow(a, k) => {
                        let v = vals[a as usize];
                        if v == 0.0 && k < 1 {
                            if k < 0 {
                                return Err(EvalError::ZeroToNegativePower(k));
                            }
                            // 0^0: constant 1, zero derivative
                            1.0
                        } else {
                            let factor = k as f64 * v.powi(k - 1);
                            let da = dof(a);
                            for (r, u) in row.iter_mut().zip(da) {
                                *r = factor * u;
                            }
                            v.powi(k)
                        }
                    }
                    Op::Sqrt(a) => {
                        let v = vals[a as usize];
                        if v < 0.0 {
                            return Err(EvalError::SqrtNegative(v));
                        }
                        if v == 0.0 {
                            return Err(EvalError::SqrtZeroDerivative);
                        }
                        let sq = v.sqrt();
                        let factor = 0.5 / sq;
                        let da = dof(a);
                        for (r, u) in row.iter_mut().zip(da) {
                            *r = factor * u;
                        }
                        sq
                    }
                    Op::Abs(a) => {
                        let v = vals[a as usize];
                        // derivative convention at 0: sign(0) = 0
                        let sg = if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        let da = dof(a);
                        for (r, u) in row.iter_mut().zip(da) {
                            *r = sg * u;
                        }
                        v.abs()
                    }
                };
            }

            grad_x.fill(0.0);
            grad_dx.fill(0.0);
            let last = (self.ops.len() - 1) * n_lanes;
            let out_row = &ders[last..last + n_lanes];
            for (lane, &mu) in self.coords.iter().enumerate() {
                grad_x[mu] = out_row[lane];
            }
            for (lane, &rank) in self.pluckers.iter().enumerate() {
                grad_dx[rank] = out_row[self.coords.len() + lane];
            }
            Ok(*vals.last().unwrap())
        })
    }
}
