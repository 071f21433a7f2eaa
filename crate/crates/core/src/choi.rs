//! Choi-operator channel calculus.
//!
//! Convention: the Choi operator of `E: L(H_in) -> L(H_out)` is the
//! unnormalized `J = sum_ij E(|i><j|) (x) |i><j|` with the OUT factor first,
//! so `E(rho) = Tr_in[J (I (x) rho^T)]`, CP is `J >= 0` and TP is
//! `Tr_out J = I_in`.
//!
//! Channels with many wires are handled by [`Labeled`] operators whose tensor
//! factors carry system ids; [`Labeled::link`] is the link product, which
//! contracts every system the two operands share.

use nalgebra::DMatrix;

use crate::error::{LosrError, Result};
use crate::linalg::{
    self, offsets, partial_trace, permute_factors, strides_of, CMatrix, C64, ZERO,
};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiOperator {
    matrix: CMatrix,
    dim_out: usize,
    dim_in: usize,
}

impl ChoiOperator {
    pub fn new(matrix: CMatrix, dim_out: usize, dim_in: usize) -> Result<Self> {
        if dim_out == 0 || dim_in == 0 {
            return Err(LosrError::DimensionMismatch("zero Choi dimension".into()));
        }
        if !matrix.is_square() || matrix.rows() != dim_out * dim_in {
            return Err(LosrError::DimensionMismatch(format!(
                "Choi matrix {}x{} for out={} in={}",
                matrix.rows(),
                matrix.cols(),
                dim_out,
                dim_in
            )));
        }
        if !matrix.is_finite() {
            return Err(LosrError::InvalidChannel("non-finite Choi entries".into()));
        }
        let herm = matrix.hermiticity_error();
        if herm > 1e-8 * matrix.max_abs().max(1.0) {
            return Err(LosrError::NotHermitian(herm));
        }
        Ok(ChoiOperator {
            matrix,
            dim_out,
            dim_in,
        })
    }

    pub(crate) fn new_unchecked(matrix: CMatrix, dim_out: usize, dim_in: usize) -> Self {
        debug_assert_eq!(matrix.rows(), dim_out * dim_in);
        ChoiOperator {
            matrix,
            dim_out,
            dim_in,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn identity(d: usize) -> Self {
        let w = linalg::states::omega(d);
        Self::new_unchecked(CMatrix::projector(&w), d, d)
    }

    /// Choi operator of `rho -> sum_k K_k rho K_k^dagger`.
    pub fn from_kraus(kraus: &[CMatrix]) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| LosrError::InvalidChannel("empty Kraus list".into()))?;
        let (dout, din) = (first.rows(), first.cols());
        let mut j = CMatrix::zeros(dout * din, dout * din);
        for k in kraus {
            if (k.rows(), k.cols()) != (dout, din) {
                return Err(LosrError::DimensionMismatch(
                    "Kraus operators of different shapes".into(),
                ));
            }
            // |K>> = sum_i K|i> (x) |i>
            let mut v = vec![ZERO; dout * din];
            for o in 0..dout {
                for i in 0..din {
                    v[o * din + i] = k[(o, i)];
                }
            }
            let p = CMatrix::projector(&v);
            j.add_scaled(&p, 1.0);
        }
        Ok(Self::new_unchecked(j, dout, din))
    }

    /// Measurement channel `rho -> sum_k Tr(E_k rho) |k><k|`.
    pub fn measurement(effects: &[CMatrix]) -> Result<Self> {
        let d = effects
            .first()
            .ok_or_else(|| LosrError::InvalidChannel("empty POVM".into()))?
            .rows();
        let n = effects.len();
        let mut j = CMatrix::zeros(n * d, n * d);
        for (k, e) in effects.iter().enumerate() {
            if e.rows() != d || !e.is_square() {
                return Err(LosrError::DimensionMismatch("POVM effects of different sizes".into()));
            }
            let et = e.transpose();
            for r in 0..d {
                for c in 0..d {
                    j[(k * d + r, k * d + c)] = et[(r, c)];
                }
            }
        }
        Ok(Self::new_unchecked(j, n, d))
    }

    /// Classical-to-quantum channel `|x><x| -> rho_x`, dephasing its input.
    pub fn preparation(states: &[CMatrix]) -> Result<Self> {
        let d = states
            .first()
            .ok_or_else(|| LosrError::InvalidChannel("empty state list".into()))?
            .rows();
        let n = states.len();
        let mut j = CMatrix::zeros(d * n, d * n);
        for (x, s) in states.iter().enumerate() {
            if s.rows() != d || !s.is_square() {
                return Err(LosrError::DimensionMismatch("states of different sizes".into()));
            }
            for r in 0..d {
                for c in 0..d {
                    j[(r * n + x, c * n + x)] = s[(r, c)];
                }
            }
        }
        Ok(Self::new_unchecked(j, d, n))
    }

    /// Classical channel from a column-stochastic kernel `k[out][in]`.
    pub fn classical(kernel: &[Vec<f64>]) -> Result<Self> {
        let nout = kernel.len();
        let nin = kernel.first().map_or(0, |r| r.len());
        if nout == 0 || nin == 0 || kernel.iter().any(|r| r.len() != nin) {
            return Err(LosrError::InvalidChannel("ragged or empty kernel".into()));
        }
        let states: Vec<CMatrix> = (0..nin)
            .map(|i| CMatrix::from_real_diag(&(0..nout).map(|o| kernel[o][i]).collect::<Vec<_>>()))
            .collect();
        Self::preparation(&states)
    }

    /// Constant channel preparing `rho` regardless of the (traced) input.
    pub fn constant(rho: &CMatrix, dim_in: usize) -> Self {
        let m = linalg::tensor(rho, &CMatrix::identity(dim_in));
        Self::new_unchecked(m, rho.rows(), dim_in)
    }

    pub fn labeled(&self, out: &[(SysId, usize)], inp: &[(SysId, usize)]) -> Result<Labeled> {
        let po: usize = out.iter().map(|s| s.1).product();
        let pi: usize = inp.iter().map(|s| s.1).product();
        if po != self.dim_out || pi != self.dim_in {
            return Err(LosrError::DimensionMismatch(format!(
                "labels {:?} <- {:?} for Choi out={} in={}",
                out, inp, self.dim_out, self.dim_in
            )));
        }
        Labeled::new(
            self.matrix.clone(),
            out.iter().chain(inp).copied().collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new_unchecked(self.matrix.scale(s), self.dim_out, self.dim_in)
    }
}

/// `E(rho) = Tr_in[J (I (x) rho^T)]`
pub fn choi_of_channel_apply(j: &ChoiOperator, rho: &CMatrix) -> Result<CMatrix> {
    if !rho.is_square() || rho.rows() != j.dim_in {
        return Err(LosrError::DimensionMismatch(format!(
            "input {}x{} for channel with input dim {}",
            rho.rows(),
            rho.cols(),
            j.dim_in
        )));
    }
    let (dout, din) = (j.dim_out, j.dim_in);
    let m = &j.matrix;
    Ok(CMatrix::from_fn(dout, dout, |o, p| {
        let mut acc = ZERO;
        for t in 0..din {
            for s in 0..din {
                acc += m[(o * din + t, p * din + s)] * rho[(t, s)];
            }
        }
        acc
    }))
}

/// Choi of `E2 o E1` via the link product.
pub fn compose_sequential(j2: &ChoiOperator, j1: &ChoiOperator) -> Result<ChoiOperator> {
    if j1.dim_out != j2.dim_in {
        return Err(LosrError::DimensionMismatch(format!(
            "cannot feed output dim {} into input dim {}",
            j1.dim_out, j2.dim_in
        )));
    }
    let (x, s, y) = (0, 1, 2);
    let l1 = j1.labeled(&[(s, j1.dim_out)], &[(x, j1.dim_in)])?;
    let l2 = j2.labeled(&[(y, j2.dim_out)], &[(s, j2.dim_in)])?;
    let out = l2.link(&l1)?.reorder(&[y, x])?;
    Ok(ChoiOperator::new_unchecked(out.op, j2.dim_out, j1.dim_in))
}

/// Choi of `Ea (x) Eb`, factors ordered (out_a, out_b, in_a, in_b).
pub fn compose_parallel(ja: &ChoiOperator, jb: &ChoiOperator) -> ChoiOperator {
    let t = linalg::tensor(&ja.matrix, &jb.matrix);
    let dims = [ja.dim_out, ja.dim_in, jb.dim_out, jb.dim_in];
    let m = permute_factors(&t, &dims, &[0, 2, 1, 3]).expect("consistent dims");
    ChoiOperator::new_unchecked(m, ja.dim_out * jb.dim_out, ja.dim_in * jb.dim_in)
}

pub fn min_eigenvalue(j: &ChoiOperator) -> f64 {
    linalg::min_eigenvalue(&j.matrix).unwrap_or(f64::NEG_INFINITY)
}

pub fn is_cp(j: &ChoiOperator, tol: f64) -> bool {
    min_eigenvalue(j) >= -tol
}

/// Frobenius distance of `Tr_out J` from the identity.
pub fn tp_error(j: &ChoiOperator) -> f64 {
    let r = partial_trace(&j.matrix, &[j.dim_out, j.dim_in], &[1]).expect("consistent dims");
    r.dist(&CMatrix::identity(j.dim_in))
}

pub fn is_tp(j: &ChoiOperator, tol: f64) -> bool {
    tp_error(j) <= tol
}

/// System label used by [`Labeled`] operators.
pub type SysId = u32;

/// Operator on a tensor product of labeled systems.
#[derive(Clone, Debug)]
pub struct Labeled {
    pub op: CMatrix,
    pub systems: Vec<(SysId, usize)>,
}

impl Labeled {
    pub fn new(op: CMatrix, systems: Vec<(SysId, usize)>) -> Result<Self> {
        let total: usize = systems.iter().map(|s| s.1).product();
        if !op.is_square() || op.rows() != total {
            return Err(LosrError::DimensionMismatch(format!(
                "operator {}x{} for systems {:?}",
                op.rows(),
                op.cols(),
                systems
            )));
        }
        for (i, a) in systems.iter().enumerate() {
            if systems[i + 1..].iter().any(|b| b.0 == a.0) {
                return Err(LosrError::DimensionMismatch(format!("duplicate system {}", a.0)));
            }
        }
        Ok(Labeled { op, systems })
    }

    pub fn scalar(v: C64) -> Self {
        Labeled {
            op: CMatrix::from_vec(1, 1, vec![v]).expect("1x1"),
            systems: vec![],
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.systems.iter().map(|s| s.1).collect()
    }

    fn position(&self, id: SysId) -> Option<usize> {
        self.systems.iter().position(|s| s.0 == id)
    }

    pub fn has(&self, id: SysId) -> bool {
        self.position(id).is_some()
    }

    pub fn rename(mut self, from: SysId, to: SysId) -> Self {
        for s in &mut self.systems {
            if s.0 == from {
                s.0 = to;
            }
        }
        self
    }

    /// Permute factors into the given order (must be a permutation of the current ids).
    pub fn reorder(&self, order: &[SysId]) -> Result<Labeled> {
        if order.len() != self.systems.len() {
            return Err(LosrError::DimensionMismatch(format!(
                "reorder {:?} vs systems {:?}",
                order, self.systems
            )));
        }
        let perm: Vec<usize> = order
            .iter()
            .map(|id| {
                self.position(*id).ok_or_else(|| {
                    LosrError::DimensionMismatch(format!("system {} not present", id))
                })
            })
            .collect::<Result<_>>()?;
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let op = permute_factors(&self.op, &self.dims(), &perm)?;
        Ok(Labeled {
            op,
            systems: perm.iter().map(|&p| self.systems[p]).collect(),
        })
    }

    /// Link product `self * other`: contracts all shared systems,
    /// `sum_{t,s} A[(f1,t),(f1',s)] B[(t,f2),(s,f2')]`.
    /// Result factors are `self`'s free systems followed by `other`'s.
    pub fn link(&self, other: &Labeled) -> Result<Labeled> {
        let shared: Vec<SysId> = self
            .systems
            .iter()
            .filter(|s| other.has(s.0))
            .map(|s| s.0)
            .collect();
        for id in &shared {
            let da = self.systems[self.position(*id).unwrap()].1;
            let db = other.systems[other.position(*id).unwrap()].1;
            if da != db {
                return Err(LosrError::DimensionMismatch(format!(
                    "shared system {} has dims {} and {}",
                    id, da, db
                )));
            }
        }
        let a_dims = self.dims();
        let b_dims = other.dims();
        let a_str = strides_of(&a_dims);
        let b_str = strides_of(&b_dims);

        let a_free: Vec<usize> = (0..self.systems.len())
            .filter(|&k| !shared.contains(&self.systems[k].0))
            .collect();
        let b_free: Vec<usize> = (0..other.systems.len())
            .filter(|&k| !shared.contains(&other.systems[k].0))
            .collect();
        let a_sh: Vec<usize> = shared.iter().map(|id| self.position(*id).unwrap()).collect();
        let b_sh: Vec<usize> = shared.iter().map(|id| other.position(*id).unwrap()).collect();

        let fa_dims: Vec<usize> = a_free.iter().map(|&k| a_dims[k]).collect();
        let fb_dims: Vec<usize> = b_free.iter().map(|&k| b_dims[k]).collect();
        let sh_dims: Vec<usize> = a_sh.iter().map(|&k| a_dims[k]).collect();

        let afo = offsets(&a_free, &fa_dims, &a_str);
        let bfo = offsets(&b_free, &fb_dims, &b_str);
        let aso = offsets(&a_sh, &sh_dims, &a_str);
        let bso = offsets(&b_sh, &sh_dims, &b_str);
        let (f1, f2, s) = (afo.len(), bfo.len(), aso.len());

        // Reshape into (F1^2 x S^2) * (S^2 x F2^2) and multiply.
        let a = &self.op;
        let b = &other.op;
        let am = DMatrix::<C64>::from_fn(f1 * f1, s * s, |rc, ts| {
            let (r, c) = (rc / f1, rc % f1);
            let (t, u) = (ts / s, ts % s);
            a[(afo[r] + aso[t], afo[c] + aso[u])]
        });
        let bm = DMatrix::<C64>::from_fn(s * s, f2 * f2, |ts, rc| {
            let (t, u) = (ts / s, ts % s);
            let (r, c) = (rc / f2, rc % f2);
            b[(bso[t] + bfo[r], bso[u] + bfo[c])]
        });
        let prod = am * bm;
        let n = f1 * f2;
        let op = CMatrix::from_fn(n, n, |i, j| {
            let (r1, r2) = (i / f2, i % f2);
            let (c1, c2) = (j / f2, j % f2);
            prod[(r1 * f1 + c1, r2 * f2 + c2)]
        });
        let systems = a_free
            .iter()
            .map(|&k| self.systems[k])
            .chain(b_free.iter().map(|&k| other.systems[k]))
            .collect();
        Ok(Labeled { op, systems })
    }

    /// Partial trace over the listed systems.
    pub fn trace_out(&self, ids: &[SysId]) -> Result<Labeled> {
        let keep: Vec<usize> = (0..self.systems.len())
            .filter(|&k| !ids.contains(&self.systems[k].0))
            .collect();
        let op = partial_trace(&self.op, &self.dims(), &keep)?;
        Ok(Labeled {
            op,
            systems: keep.iter().map(|&k| self.systems[k]).collect(),
        })
    }

    pub fn transpose(&self) -> Labeled {
        Labeled {
            op: self.op.transpose(),
            systems: self.systems.clone(),
        }
    }

    pub fn dephase(&self, ids: &[SysId]) -> Result<Labeled> {
        let dims = self.dims();
        let mut op = self.op.clone();
        for id in ids {
            if let Some(k) = self.position(*id) {
                op = linalg::dephase(&op, &dims, k)?;
            }
        }
        Ok(Labeled {
            op,
            systems: self.systems.clone(),
        })
    }
}

/// Link a list of operators left to right.
pub fn link_all(ops: &[&Labeled]) -> Result<Labeled> {
    let mut it = ops.iter();
    let first = it
        .next()
        .ok_or_else(|| LosrError::DimensionMismatch("empty link".into()))?;
    let mut acc = (*first).clone();
    for op in it {
        acc = acc.link(op)?;
    }
    Ok(acc)
}
