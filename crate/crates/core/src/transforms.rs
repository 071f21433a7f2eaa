//! LOSR transformations: shared-randomness mixtures of per-party local combs.
//!
//! A comb wraps one use of the resource. Its `pre` stage maps the party's new
//! input into the resource input plus a memory, and its `post` stage maps the
//! resource output plus that memory into the new output.
//!
//! Operations are stored as [`LocalOp`] templates and instantiated against the
//! party's current systems when applied, so a canonical operation such as the
//! semiquantum encoder is one fixed object independent of the resource.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choi::{self, ChoiOperator, Labeled, SysId};
use crate::error::{LosrError, Result};
use crate::linalg::{self, paulis, CMatrix, C64, ZERO};
use crate::resources::{check_density, Party, PartySystems, PartyWiring, Resource};
use crate::types::{SystemKind, SystemType};

/// System labels used while linking a party's comb with a resource.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PartyIds {
    pub res_out: SysId,
    pub res_in: SysId,
    pub mem: SysId,
    pub new_out: SysId,
    pub new_in: SysId,
}

pub(crate) fn party_ids(p: Party) -> PartyIds {
    let k = match p {
        Party::A => 0,
        Party::B => 1,
    };
    PartyIds {
        res_out: k,
        res_in: 2 + k,
        mem: 10 + k,
        new_out: 20 + k,
        new_in: 22 + k,
    }
}

/// One party's comb with concrete Choi operators.
///
/// `pre` has factors `(res_in, mem, new_in)`, `post` has `(new_out, res_out, mem)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalComb {
    pub res_in: SystemType,
    pub res_out: SystemType,
    pub new_in: SystemType,
    pub new_out: SystemType,
    pub mem: SystemType,
    pub pre: CMatrix,
    pub post: CMatrix,
}

impl LocalComb {
    pub fn new(
        res: PartySystems,
        new: PartySystems,
        mem: SystemType,
        pre: CMatrix,
        post: CMatrix,
    ) -> Result<Self> {
        let c = LocalComb {
            res_in: res.input,
            res_out: res.output,
            new_in: new.input,
            new_out: new.output,
            mem,
            pre,
            post,
        };
        c.check_dims()?;
        Ok(c)
    }

    pub fn resource_systems(&self) -> PartySystems {
        PartySystems::new(self.res_in, self.res_out)
    }

    pub fn new_systems(&self) -> PartySystems {
        PartySystems::new(self.new_in, self.new_out)
    }

    fn check_dims(&self) -> Result<()> {
        let pre_n = self.res_in.dim() * self.mem.dim() * self.new_in.dim();
        let post_n = self.new_out.dim() * self.res_out.dim() * self.mem.dim();
        if self.pre.rows() != pre_n || !self.pre.is_square() {
            return Err(LosrError::InvalidTransform(format!(
                "pre stage is {}x{}, expected {}",
                self.pre.rows(),
                self.pre.cols(),
                pre_n
            )));
        }
        if self.post.rows() != post_n || !self.post.is_square() {
            return Err(LosrError::InvalidTransform(format!(
                "post stage is {}x{}, expected {}",
                self.post.rows(),
                self.post.cols(),
                post_n
            )));
        }
        Ok(())
    }

    pub fn pre_choi(&self) -> ChoiOperator {
        ChoiOperator::new_unchecked(
            self.pre.clone(),
            self.res_in.dim() * self.mem.dim(),
            self.new_in.dim(),
        )
    }

    pub fn post_choi(&self) -> ChoiOperator {
        ChoiOperator::new_unchecked(
            self.post.clone(),
            self.new_out.dim(),
            self.res_out.dim() * self.mem.dim(),
        )
    }

    /// Both stages CP and TP within `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        self.check_dims()?;
        for (name, j) in [("pre", self.pre_choi()), ("post", self.post_choi())] {
            if j.matrix().hermiticity_error() > tol {
                return Err(LosrError::InvalidTransform(format!("{} stage not Hermitian", name)));
            }
            let m = choi::min_eigenvalue(&j);
            if m < -tol {
                return Err(LosrError::InvalidTransform(format!(
                    "{} stage not CP (eigenvalue {:.3e})",
                    name, m
                )));
            }
            let e = choi::tp_error(&j);
            if e > tol {
                return Err(LosrError::InvalidTransform(format!(
                    "{} stage not TP (error {:.3e})",
                    name, e
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn pre_labeled(&self, ids: PartyIds) -> Labeled {
        Labeled {
            op: self.pre.clone(),
            systems: vec![
                (ids.res_in, self.res_in.dim()),
                (ids.mem, self.mem.dim()),
                (ids.new_in, self.new_in.dim()),
            ],
        }
    }

    pub(crate) fn post_labeled(&self, ids: PartyIds) -> Labeled {
        Labeled {
            op: self.post.clone(),
            systems: vec![
                (ids.new_out, self.new_out.dim()),
                (ids.res_out, self.res_out.dim()),
                (ids.mem, self.mem.dim()),
            ],
        }
    }

    pub fn identity(sys: PartySystems) -> Self {
        LocalComb {
            res_in: sys.input,
            res_out: sys.output,
            new_in: sys.input,
            new_out: sys.output,
            mem: SystemType::TRIVIAL,
            pre: ChoiOperator::identity(sys.input.dim()).into_matrix(),
            post: ChoiOperator::identity(sys.output.dim()).into_matrix(),
        }
    }

    /// `outer` applied around `self`: the result wraps the resource with `self`
    /// innermost. Memories are stacked as `(self.mem, outer.mem)`.
    pub fn then(&self, outer: &LocalComb) -> Result<LocalComb> {
        if outer.res_in != self.new_in || outer.res_out != self.new_out {
            return Err(LosrError::TypeMismatch(format!(
                "cannot wrap comb with signature {} -> {} around {} -> {}",
                outer.res_in, outer.res_out, self.new_in, self.new_out
            )));
        }
        const R: SysId = 200;
        const S: SysId = 201;
        const M1: SysId = 202;
        const M2: SysId = 203;
        const X: SysId = 204;
        const Y: SysId = 205;
        const N: SysId = 206;
        const O: SysId = 207;
        let inner_pre = Labeled {
            op: self.pre.clone(),
            systems: vec![(R, self.res_in.dim()), (M1, self.mem.dim()), (X, self.new_in.dim())],
        };
        let outer_pre = Labeled {
            op: outer.pre.clone(),
            systems: vec![(X, outer.res_in.dim()), (M2, outer.mem.dim()), (N, outer.new_in.dim())],
        };
        let pre = outer_pre.link(&inner_pre)?.reorder(&[R, M1, M2, N])?;
        let inner_post = Labeled {
            op: self.post.clone(),
            systems: vec![(Y, self.new_out.dim()), (S, self.res_out.dim()), (M1, self.mem.dim())],
        };
        let outer_post = Labeled {
            op: outer.post.clone(),
            systems: vec![(O, outer.new_out.dim()), (Y, outer.res_out.dim()), (M2, outer.mem.dim())],
        };
        let post = inner_post.link(&outer_post)?.reorder(&[O, S, M1, M2])?;
        Ok(LocalComb {
            res_in: self.res_in,
            res_out: self.res_out,
            new_in: outer.new_in,
            new_out: outer.new_out,
            mem: self.mem.group(outer.mem),
            pre: pre.op,
            post: post.op,
        })
    }
}

/// A local operation template, instantiated against a party's systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum LocalOp {
    Identity,
    /// Measure the output with a POVM; the output becomes classical.
    MeasureOutput { effects: Vec<CMatrix> },
    /// New classical input `x` selects the POVM `povms[x]` applied to the
    /// output. Needs a trivial resource input.
    MeasureWithSetting { povms: Vec<Vec<CMatrix>> },
    /// New classical input `j` prepares `states[j]` into the resource input.
    PrepareFromClassical { states: Vec<CMatrix> },
    /// Feed the first half of `phi` into the input, keep the second half as an
    /// extra output factor. `dims` are the two local dims of `phi`.
    EntangleAssist { phi: Vec<C64>, dims: [usize; 2] },
    /// Column-stochastic preprocessing `kernel[x][x']` of the input.
    StochasticInput { kernel: Vec<Vec<f64>> },
    /// Column-stochastic postprocessing `kernel[a'][a]` of a classical output.
    RelabelOutput { kernel: Vec<Vec<f64>> },
    /// Bell measurement of the output against a new quantum input.
    SqEncode { d: usize },
    /// Teleport back: inverse of `SqEncode` with the same `d`.
    SqDecode { d: usize },
    Comb(LocalComb),
    /// Apply operations in order, the first one innermost.
    Sequence { ops: Vec<LocalOp> },
}

fn check_povm(effects: &[CMatrix], d: usize) -> Result<()> {
    if effects.is_empty() {
        return Err(LosrError::InvalidTransform("empty POVM".into()));
    }
    let mut sum = CMatrix::zeros(d, d);
    for e in effects {
        if !e.is_square() || e.rows() != d {
            return Err(LosrError::DimensionMismatch(format!(
                "effect of size {} on a system of dim {}",
                e.rows(),
                d
            )));
        }
        if !e.is_hermitian(1e-9) || linalg::min_eigenvalue(e)? < -1e-9 {
            return Err(LosrError::InvalidTransform("POVM effect not PSD".into()));
        }
        sum.add_scaled(e, 1.0);
    }
    let err = sum.dist(&CMatrix::identity(d));
    if err > 1e-9 {
        return Err(LosrError::InvalidTransform(format!(
            "effects do not sum to identity (error {:.3e})",
            err
        )));
    }
    Ok(())
}

fn check_kernel(kernel: &[Vec<f64>], n_out: Option<usize>, n_in: Option<usize>) -> Result<()> {
    let rows = kernel.len();
    let cols = kernel.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 || kernel.iter().any(|r| r.len() != cols) {
        return Err(LosrError::InvalidTransform("ragged or empty kernel".into()));
    }
    if n_out.is_some_and(|n| n != rows) || n_in.is_some_and(|n| n != cols) {
        return Err(LosrError::DimensionMismatch(format!(
            "kernel {}x{} does not fit the system",
            rows, cols
        )));
    }
    for c in 0..cols {
        if kernel.iter().any(|r| r[c] < -1e-12 || !r[c].is_finite()) {
            return Err(LosrError::InvalidTransform("negative kernel entry".into()));
        }
        let s: f64 = kernel.iter().map(|r| r[c]).sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(LosrError::InvalidTransform(format!(
                "kernel column {} sums to {}",
                c, s
            )));
        }
    }
    Ok(())
}

/// Channel controlled by a classical input factor; `control_first` selects
/// whether the control precedes the quantum input in the input ordering.
fn classically_controlled(channels: &[ChoiOperator], control_first: bool) -> CMatrix {
    let n = channels.len();
    let dout = channels[0].dim_out();
    let din = channels[0].dim_in();
    let size = dout * n * din;
    let mut j = CMatrix::zeros(size, size);
    for (k, ch) in channels.iter().enumerate() {
        let m = ch.matrix();
        for o in 0..dout {
            for i in 0..din {
                let row_in = if control_first { k * din + i } else { i * n + k };
                for o2 in 0..dout {
                    for i2 in 0..din {
                        let col_in = if control_first { k * din + i2 } else { i2 * n + k };
                        j[(o * n * din + row_in, o2 * n * din + col_in)] = m[(o * din + i, o2 * din + i2)];
                    }
                }
            }
        }
    }
    j
}

/// Bell basis vector `(I (x) X^a Z^b)|Omega_d> / sqrt(d)`, `k = a d + b`.
pub fn bell_vector(d: usize, k: usize) -> Vec<C64> {
    let p = paulis::weyl(d, k / d, k % d);
    let s = 1.0 / (d as f64).sqrt();
    let mut v = vec![ZERO; d * d];
    for i in 0..d {
        for m in 0..d {
            v[i * d + m] = p[(m, i)] * s;
        }
    }
    v
}

/// Decoder correction for Bell outcome `k = a d + b`: `(X^a Z^b)^T`.
pub fn sq_correction(d: usize, k: usize) -> CMatrix {
    paulis::weyl(d, k / d, k % d).transpose()
}

/// Semiquantum encoder comb on a party whose output is `Q:d`.
pub fn sq_encode_comb(sys: PartySystems, d: usize) -> Result<LocalComb> {
    if sys.output.kind() != SystemKind::Quantum || sys.output.dim() != d {
        return Err(LosrError::TypeMismatch(format!(
            "sq_encode with d={} needs a quantum output of dim {}, got {}",
            d, d, sys.output
        )));
    }
    let q = SystemType::quantum(d);
    let din = sys.input.dim();
    let effects: Vec<CMatrix> = (0..d * d).map(|k| CMatrix::projector(&bell_vector(d, k))).collect();
    LocalComb::new(
        sys,
        PartySystems::new(sys.input.group(q), SystemType::classical(d * d)),
        q,
        ChoiOperator::identity(din * d).into_matrix(),
        ChoiOperator::measurement(&effects)?.into_matrix(),
    )
}

/// Semiquantum decoder comb with an explicit correction family.
pub fn sq_decode_comb_with(
    sys: PartySystems,
    d: usize,
    correction: impl Fn(usize) -> CMatrix,
) -> Result<LocalComb> {
    if sys.output.kind() != SystemKind::Classical || sys.output.dim() != d * d {
        return Err(LosrError::TypeMismatch(format!(
            "sq_decode with d={} needs a classical output of dim {}, got {}",
            d,
            d * d,
            sys.output
        )));
    }
    if sys.input.kind() != SystemKind::Quantum || !sys.input.dim().is_multiple_of(d) {
        return Err(LosrError::TypeMismatch(format!(
            "sq_decode with d={} needs a quantum input divisible by {}, got {}",
            d, d, sys.input
        )));
    }
    let d_old = sys.input.dim() / d;
    let old = if d_old == 1 {
        SystemType::TRIVIAL
    } else {
        SystemType::quantum(d_old)
    };
    let q = SystemType::quantum(d);
    // pre: old -> (old, q) (x) mem with |Omega><Omega|/d on (q, mem)
    let omega = CMatrix::projector(&linalg::states::omega(d)).scale(1.0 / d as f64);
    let t = linalg::tensor(ChoiOperator::identity(d_old).matrix(), &omega);
    // (old_out, old_in, q, mem) -> (old_out, q, mem, old_in)
    let pre = linalg::permute_factors(&t, &[d_old, d_old, d, d], &[0, 2, 3, 1])?;
    let fixes: Vec<ChoiOperator> = (0..d * d)
        .map(|k| ChoiOperator::from_kraus(&[correction(k)]))
        .collect::<Result<_>>()?;
    let post = classically_controlled(&fixes, true);
    LocalComb::new(sys, PartySystems::new(old, q), q, pre, post)
}

pub fn sq_decode_comb(sys: PartySystems, d: usize) -> Result<LocalComb> {
    sq_decode_comb_with(sys, d, |k| sq_correction(d, k))
}

impl LocalOp {
    /// Concrete comb for a party with resource systems `sys`.
    pub fn instantiate(&self, sys: PartySystems) -> Result<LocalComb> {
        match self {
            LocalOp::Identity => Ok(LocalComb::identity(sys)),
            LocalOp::MeasureOutput { effects } => {
                check_povm(effects, sys.output.dim())?;
                let post = ChoiOperator::measurement(effects)?;
                LocalComb::new(
                    sys,
                    PartySystems::new(sys.input, SystemType::at_least(SystemKind::Classical, effects.len())),
                    SystemType::TRIVIAL,
                    ChoiOperator::identity(sys.input.dim()).into_matrix(),
                    post.into_matrix(),
                )
            }
            LocalOp::MeasureWithSetting { povms } => {
                if sys.input.dim() != 1 {
                    return Err(LosrError::TypeMismatch(format!(
                        "measurement with setting needs a trivial input, got {}",
                        sys.input
                    )));
                }
                let nx = povms.len();
                let na = povms.first().map_or(0, |p| p.len());
                if nx == 0 || povms.iter().any(|p| p.len() != na) {
                    return Err(LosrError::InvalidTransform("ragged POVM family".into()));
                }
                for p in povms {
                    check_povm(p, sys.output.dim())?;
                }
                let meas: Vec<ChoiOperator> = povms
                    .iter()
                    .map(|p| ChoiOperator::measurement(p))
                    .collect::<Result<_>>()?;
                // pre copies x into the memory
                let kernel: Vec<Vec<f64>> = (0..nx)
                    .map(|o| (0..nx).map(|i| if o == i { 1.0 } else { 0.0 }).collect())
                    .collect();
                let pre = ChoiOperator::classical(&kernel)?;
                let mem = SystemType::at_least(SystemKind::Classical, nx);
                LocalComb::new(
                    sys,
                    PartySystems::new(mem, SystemType::at_least(SystemKind::Classical, na)),
                    mem,
                    pre.into_matrix(),
                    classically_controlled(&meas, false),
                )
            }
            LocalOp::PrepareFromClassical { states } => {
                if states.is_empty() {
                    return Err(LosrError::InvalidTransform("no states to prepare".into()));
                }
                for s in states {
                    if s.rows() != sys.input.dim() {
                        return Err(LosrError::DimensionMismatch(format!(
                            "state of dim {} for input {}",
                            s.rows(),
                            sys.input
                        )));
                    }
                    check_density(s)?;
                }
                let pre = ChoiOperator::preparation(states)?;
                LocalComb::new(
                    sys,
                    PartySystems::new(SystemType::at_least(SystemKind::Classical, states.len()), sys.output),
                    SystemType::TRIVIAL,
                    pre.into_matrix(),
                    ChoiOperator::identity(sys.output.dim()).into_matrix(),
                )
            }
            LocalOp::EntangleAssist { phi, dims } => {
                let [d1, d2] = *dims;
                if phi.len() != d1 * d2 {
                    return Err(LosrError::DimensionMismatch(format!(
                        "phi has {} amplitudes for dims {}x{}",
                        phi.len(),
                        d1,
                        d2
                    )));
                }
                let n: f64 = phi.iter().map(|c| c.norm_sqr()).sum();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(LosrError::InvalidState(format!("phi has squared norm {}", n)));
                }
                if sys.input.dim() != d1 {
                    return Err(LosrError::DimensionMismatch(format!(
                        "first half of phi has dim {}, input is {}",
                        d1, sys.input
                    )));
                }
                let second = SystemType::at_least(SystemKind::Quantum, d2);
                let mem = second;
                // pre: prepare phi on (res_in, mem), new input trivial
                let pre = CMatrix::projector(phi);
                let post = ChoiOperator::identity(sys.output.dim() * d2).into_matrix();
                LocalComb::new(
                    sys,
                    PartySystems::new(SystemType::TRIVIAL, sys.output.group(second)),
                    mem,
                    pre,
                    post,
                )
            }
            LocalOp::StochasticInput { kernel } => {
                check_kernel(kernel, Some(sys.input.dim()), None)?;
                let pre = ChoiOperator::classical(kernel)?;
                let n_in = kernel[0].len();
                LocalComb::new(
                    sys,
                    PartySystems::new(SystemType::at_least(SystemKind::Classical, n_in), sys.output),
                    SystemType::TRIVIAL,
                    pre.into_matrix(),
                    ChoiOperator::identity(sys.output.dim()).into_matrix(),
                )
            }
            LocalOp::RelabelOutput { kernel } => {
                if sys.output.is_quantum() {
                    return Err(LosrError::TypeMismatch("relabeling needs a classical output".into()));
                }
                check_kernel(kernel, None, Some(sys.output.dim()))?;
                let post = ChoiOperator::classical(kernel)?;
                LocalComb::new(
                    sys,
                    PartySystems::new(sys.input, SystemType::at_least(SystemKind::Classical, kernel.len())),
                    SystemType::TRIVIAL,
                    ChoiOperator::identity(sys.input.dim()).into_matrix(),
                    post.into_matrix(),
                )
            }
            LocalOp::SqEncode { d } => sq_encode_comb(sys, *d),
            LocalOp::SqDecode { d } => sq_decode_comb(sys, *d),
            LocalOp::Comb(c) => {
                if c.res_in != sys.input || c.res_out != sys.output {
                    return Err(LosrError::TypeMismatch(format!(
                        "comb expects {} -> {}, party has {} -> {}",
                        c.res_in, c.res_out, sys.input, sys.output
                    )));
                }
                c.check(1e-9)?;
                Ok(c.clone())
            }
            LocalOp::Sequence { ops } => {
                let mut acc = LocalComb::identity(sys);
                for op in ops {
                    let next = op.instantiate(acc.new_systems())?;
                    acc = acc.then(&next)?;
                }
                Ok(acc)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub p: f64,
    #[serde(rename = "A")]
    pub a: LocalOp,
    #[serde(rename = "B")]
    pub b: LocalOp,
}

/// Mixture of product local operations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LosrTransform {
    pub branches: Vec<Branch>,
}

impl LosrTransform {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        let t = LosrTransform { branches };
        t.check_weights()?;
        Ok(t)
    }

    fn check_weights(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(LosrError::InvalidTransform("no branches".into()));
        }
        if self.branches.iter().any(|b| b.p < 0.0 || !b.p.is_finite()) {
            return Err(LosrError::InvalidTransform("negative branch weight".into()));
        }
        let s: f64 = self.branches.iter().map(|b| b.p).sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(LosrError::InvalidTransform(format!("branch weights sum to {}", s)));
        }
        Ok(())
    }

    pub fn product(a: LocalOp, b: LocalOp) -> Self {
        LosrTransform {
            branches: vec![Branch { p: 1.0, a, b }],
        }
    }

    pub fn identity() -> Self {
        Self::product(LocalOp::Identity, LocalOp::Identity)
    }

    /// `op` on `party`, identity on the other.
    pub fn local(party: Party, op: LocalOp) -> Self {
        match party {
            Party::A => Self::product(op, LocalOp::Identity),
            Party::B => Self::product(LocalOp::Identity, op),
        }
    }

    /// Canonical transform by name: `identity`, `sq-encode:<party>:<d>`,
    /// `sq-decode:<party>:<d>`, `sq-encode-both:<d>`, `sq-decode-both:<d>`.
    pub fn from_name(name: &str) -> Result<Self> {
        let parts: Vec<&str> = name.split(':').collect();
        let dim = |s: &str| -> Result<usize> {
            let d: usize = s
                .parse()
                .map_err(|_| LosrError::Parse(format!("bad dimension '{}'", s)))?;
            if d < 2 {
                return Err(LosrError::Parse("dimension must be at least 2".into()));
            }
            Ok(d)
        };
        match parts.as_slice() {
            ["identity"] => Ok(Self::identity()),
            ["sq-encode", p, d] => Ok(sq_encode(p.parse()?, dim(d)?)),
            ["sq-decode", p, d] => Ok(sq_decode(p.parse()?, dim(d)?)),
            ["sq-encode-both", d] => {
                let d = dim(d)?;
                Ok(Self::product(LocalOp::SqEncode { d }, LocalOp::SqEncode { d }))
            }
            ["sq-decode-both", d] => {
                let d = dim(d)?;
                Ok(Self::product(LocalOp::SqDecode { d }, LocalOp::SqDecode { d }))
            }
            _ => Err(LosrError::Parse(format!("unknown transform '{}'", name))),
        }
    }

    /// Concrete combs per branch for a resource with the given wiring.
    pub fn instantiate(&self, wiring: &PartyWiring) -> Result<Vec<(f64, LocalComb, LocalComb)>> {
        self.check_weights()?;
        let mut out = Vec::with_capacity(self.branches.len());
        let mut sig: Option<PartyWiring> = None;
        for br in &self.branches {
            let ca = br.a.instantiate(wiring.a)?;
            let cb = br.b.instantiate(wiring.b)?;
            let w = PartyWiring::new(ca.new_systems(), cb.new_systems());
            match sig {
                None => sig = Some(w),
                Some(s) if s != w => {
                    return Err(LosrError::InvalidTransform(format!(
                        "branches disagree on the output type: {} vs {}",
                        s, w
                    )))
                }
                _ => {}
            }
            out.push((br.p, ca, cb));
        }
        Ok(out)
    }

    /// Wiring of the transformed resource.
    pub fn output_wiring(&self, wiring: &PartyWiring) -> Result<PartyWiring> {
        let (_, a, b) = self
            .instantiate(wiring)?
            .into_iter()
            .next()
            .expect("non-empty");
        Ok(PartyWiring::new(a.new_systems(), b.new_systems()))
    }
}

/// Link one pair of combs around a resource Choi (factors A_out, B_out, A_in, B_in).
pub(crate) fn link_branch(r: &Labeled, ca: &LocalComb, cb: &LocalComb) -> Result<CMatrix> {
    let ia = party_ids(Party::A);
    let ib = party_ids(Party::B);
    let j = r
        .link(&ca.pre_labeled(ia))?
        .link(&ca.post_labeled(ia))?
        .link(&cb.pre_labeled(ib))?
        .link(&cb.post_labeled(ib))?
        .reorder(&[ia.new_out, ib.new_out, ia.new_in, ib.new_in])?;
    Ok(j.op)
}

/// `R' = sum_l p(l) (comb_A(l) (x) comb_B(l)) * R`
pub fn apply(t: &LosrTransform, r: &Resource) -> Result<Resource> {
    let branches = t.instantiate(r.wiring())?;
    let wiring = PartyWiring::new(branches[0].1.new_systems(), branches[0].2.new_systems());
    let lr = r.labeled();
    let parts: Vec<CMatrix> = branches
        .par_iter()
        .map(|(p, ca, cb)| link_branch(&lr, ca, cb).map(|m| m.scale(*p)))
        .collect::<Result<_>>()?;
    let mut acc = CMatrix::zeros(parts[0].rows(), parts[0].cols());
    for m in &parts {
        acc.add_scaled(m, 1.0);
    }
    Resource::new_unchecked(wiring, acc.hermitian_part())
}

/// `compose(t2, t1)` applies `t1` first.
pub fn compose(t2: &LosrTransform, t1: &LosrTransform) -> LosrTransform {
    let mut branches = Vec::with_capacity(t1.branches.len() * t2.branches.len());
    for b1 in &t1.branches {
        for b2 in &t2.branches {
            branches.push(Branch {
                p: b1.p * b2.p,
                a: LocalOp::Sequence {
                    ops: vec![b1.a.clone(), b2.a.clone()],
                },
                b: LocalOp::Sequence {
                    ops: vec![b1.b.clone(), b2.b.clone()],
                },
            });
        }
    }
    LosrTransform { branches }
}

pub fn measure_output(party: Party, effects: Vec<CMatrix>) -> Result<LosrTransform> {
    let d = effects.first().map_or(0, |e| e.rows());
    check_povm(&effects, d)?;
    Ok(LosrTransform::local(party, LocalOp::MeasureOutput { effects }))
}

pub fn measure_with_setting(party: Party, povms: Vec<Vec<CMatrix>>) -> Result<LosrTransform> {
    for p in &povms {
        let d = p.first().map_or(0, |e| e.rows());
        check_povm(p, d)?;
    }
    Ok(LosrTransform::local(party, LocalOp::MeasureWithSetting { povms }))
}

pub fn prepare_from_classical(party: Party, states: Vec<CMatrix>) -> Result<LosrTransform> {
    for s in &states {
        check_density(s)?;
    }
    if states.is_empty() {
        return Err(LosrError::InvalidTransform("no states to prepare".into()));
    }
    Ok(LosrTransform::local(party, LocalOp::PrepareFromClassical { states }))
}

pub fn entangle_assist(party: Party, phi: Vec<C64>, dims: [usize; 2]) -> Result<LosrTransform> {
    let n: f64 = phi.iter().map(|c| c.norm_sqr()).sum();
    if (n - 1.0).abs() > 1e-9 {
        return Err(LosrError::InvalidState(format!("phi has squared norm {}", n)));
    }
    if phi.len() != dims[0] * dims[1] {
        return Err(LosrError::DimensionMismatch(format!(
            "phi has {} amplitudes for dims {:?}",
            phi.len(),
            dims
        )));
    }
    Ok(LosrTransform::local(party, LocalOp::EntangleAssist { phi, dims }))
}

pub fn stochastic_input(party: Party, kernel: Vec<Vec<f64>>) -> Result<LosrTransform> {
    check_kernel(&kernel, None, None)?;
    Ok(LosrTransform::local(party, LocalOp::StochasticInput { kernel }))
}

pub fn relabel_output(party: Party, kernel: Vec<Vec<f64>>) -> Result<LosrTransform> {
    check_kernel(&kernel, None, None)?;
    Ok(LosrTransform::local(party, LocalOp::RelabelOutput { kernel }))
}

pub fn sq_encode(party: Party, d: usize) -> LosrTransform {
    LosrTransform::local(party, LocalOp::SqEncode { d })
}

pub fn sq_decode(party: Party, d: usize) -> LosrTransform {
    LosrTransform::local(party, LocalOp::SqDecode { d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::states;
    use crate::random;
    use crate::resources::{boxes, from_box, from_state, to_assemblage, to_box, validate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z_povm() -> Vec<CMatrix> {
        vec![CMatrix::basis_projector(2, 0), CMatrix::basis_projector(2, 1)]
    }

    #[test]
    fn identity_leaves_resource_unchanged() {
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        let out = apply(&LosrTransform::identity(), &r).unwrap();
        assert!(out.matrix().dist(r.matrix()) < 1e-12);
        assert_eq!(out.wiring(), r.wiring());
    }

    #[test]
    fn z_measurements_on_phi_plus() {
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        let t = LosrTransform::product(
            LocalOp::MeasureOutput { effects: z_povm() },
            LocalOp::MeasureOutput { effects: z_povm() },
        );
        let out = apply(&t, &r).unwrap();
        assert_eq!(out.global_type().to_string(), "II->CC");
        let p = to_box(&out).unwrap();
        assert!((p.get(0, 0, 0, 0) - 0.5).abs() < 1e-12);
        assert!((p.get(1, 1, 0, 0) - 0.5).abs() < 1e-12);
        assert!(p.get(0, 1, 0, 0).abs() < 1e-12);
    }

    #[test]
    fn z_measurement_gives_assemblage() {
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        let out = apply(&measure_output(Party::A, z_povm()).unwrap(), &r).unwrap();
        let a = to_assemblage(&out).unwrap();
        assert!(a.sigma[0][0].dist(&CMatrix::basis_projector(2, 0).scale(0.5)) < 1e-12);
        assert!(a.sigma[0][1].dist(&CMatrix::basis_projector(2, 1).scale(0.5)) < 1e-12);
    }

    #[test]
    fn trivial_povm_discards() {
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        let out = apply(&measure_output(Party::A, vec![CMatrix::identity(2)]).unwrap(), &r).unwrap();
        assert_eq!(out.wiring().a.output, SystemType::TRIVIAL);
        assert!(out.matrix().dist(&CMatrix::identity(2).scale(0.5)) < 1e-12);
    }

    #[test]
    fn bad_povm_rejected() {
        assert!(measure_output(Party::A, vec![CMatrix::identity(2), CMatrix::identity(2)]).is_err());
    }

    #[test]
    fn mixing_relabelings_averages() {
        let p = boxes::pr_box();
        let r = from_box(&p).unwrap();
        let flip = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let keep = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let t = LosrTransform::new(vec![
            Branch {
                p: 0.5,
                a: LocalOp::RelabelOutput { kernel: flip },
                b: LocalOp::Identity,
            },
            Branch {
                p: 0.5,
                a: LocalOp::RelabelOutput { kernel: keep },
                b: LocalOp::Identity,
            },
        ])
        .unwrap();
        let q = to_box(&apply(&t, &r).unwrap()).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        let avg = 0.5 * p.get(a, b, x, y) + 0.5 * p.get(1 - a, b, x, y);
                        assert!((q.get(a, b, x, y) - avg).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn prepare_then_identity_is_classical_identity() {
        // A: identity channel Q2 -> Q2; B trivial
        let w = PartyWiring::new(
            PartySystems::new(SystemType::quantum(2), SystemType::quantum(2)),
            PartySystems::new(SystemType::TRIVIAL, SystemType::TRIVIAL),
        );
        let r = Resource::from_channel(ChoiOperator::identity(2), w).unwrap();
        let states = vec![CMatrix::basis_projector(2, 0), CMatrix::basis_projector(2, 1)];
        let out = apply(&prepare_from_classical(Party::A, states).unwrap(), &r).unwrap();
        let expect = ChoiOperator::classical(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(out.matrix().dist(expect.matrix()) < 1e-12);
        assert!(prepare_from_classical(Party::A, vec![CMatrix::identity(2)]).is_err());
    }

    #[test]
    fn entangle_assist_turns_sink_into_source() {
        // A discards a qubit input: type Q->I
        let w = PartyWiring::new(
            PartySystems::new(SystemType::quantum(2), SystemType::TRIVIAL),
            PartySystems::new(SystemType::TRIVIAL, SystemType::TRIVIAL),
        );
        let r = Resource::from_channel(ChoiOperator::new(CMatrix::identity(2), 1, 2).unwrap(), w).unwrap();
        let phi: Vec<C64> = states::omega(2).iter().map(|c| c / 2f64.sqrt()).collect();
        let out = apply(&entangle_assist(Party::A, phi, [2, 2]).unwrap(), &r).unwrap();
        assert_eq!(out.global_type().to_string(), "II->QI");
        assert!(out.matrix().dist(&CMatrix::identity(2).scale(0.5)) < 1e-12);
        assert!(entangle_assist(Party::A, vec![C64::new(1.0, 0.0); 4], [2, 2]).is_err());
    }

    #[test]
    fn stochastic_input_relabels() {
        let p = boxes::pr_box();
        let r = from_box(&p).unwrap();
        let swap = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let q = to_box(&apply(&stochastic_input(Party::A, swap).unwrap(), &r).unwrap()).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        assert!((q.get(a, b, x, y) - p.get(a, b, 1 - x, y)).abs() < 1e-12);
                    }
                }
            }
        }
        assert!(stochastic_input(Party::A, vec![vec![0.5, 0.5], vec![0.0, 0.5]]).is_err());
        let uniform = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let u = to_box(&apply(&stochastic_input(Party::A, uniform).unwrap(), &r).unwrap()).unwrap();
        assert!((u.get(0, 0, 0, 0) - u.get(0, 0, 1, 0)).abs() < 1e-12);
    }

    #[test]
    fn bell_basis_is_orthonormal() {
        for d in 2..5 {
            for k in 0..d * d {
                for l in 0..d * d {
                    let u = bell_vector(d, k);
                    let v = bell_vector(d, l);
                    let ip: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                    let e = if k == l { 1.0 } else { 0.0 };
                    assert!((ip - C64::new(e, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sq_round_trip_on_phi_plus() {
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        let enc = LosrTransform::from_name("sq-encode-both:2").unwrap();
        let e = apply(&enc, &r).unwrap();
        assert_eq!(e.global_type().to_string(), "QQ->CC");
        assert!(validate(&e, 1e-9).is_empty());
        let back = apply(&LosrTransform::from_name("sq-decode-both:2").unwrap(), &e).unwrap();
        assert!(back.matrix().dist(r.matrix()) < 1e-9);
        assert_eq!(back.wiring(), r.wiring());
    }

    #[test]
    fn sq_round_trip_random_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2, 3] {
            let w = PartyWiring::new(
                PartySystems::new(SystemType::quantum(2), SystemType::quantum(d)),
                PartySystems::new(SystemType::classical(2), SystemType::quantum(2)),
            );
            let r = random::resource(&w, 2, &mut rng).unwrap();
            let e = apply(&sq_encode(Party::A, d), &r).unwrap();
            let back = apply(&sq_decode(Party::A, d), &e).unwrap();
            assert!(back.matrix().dist(r.matrix()) < 1e-9);
        }
    }

    #[test]
    fn sq_encode_needs_quantum_output() {
        let r = from_box(&boxes::pr_box()).unwrap();
        assert!(apply(&sq_encode(Party::A, 2), &r).is_err());
    }

    #[test]
    fn wrong_correction_breaks_teleportation() {
        let d = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random::pure_state(d * 2, &mut rng);
        let r = from_state(&CMatrix::projector(&v), d, 2).unwrap();
        let e = apply(&sq_encode(Party::A, d), &r).unwrap();
        let wrong = sq_decode_comb_with(e.wiring().a, d, |k| {
            paulis::power(&paulis::clock(d), k % d).matmul(&paulis::power(&paulis::shift(d), k / d))
        })
        .unwrap();
        let t = LosrTransform::local(Party::A, LocalOp::Comb(wrong));
        let back = apply(&t, &e).unwrap();
        assert!(back.matrix().dist(r.matrix()) > 0.1);
    }

    #[test]
    fn compose_matches_sequential_application() {
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        let t1 = sq_encode(Party::A, 2);
        let t2 = measure_output(Party::B, z_povm()).unwrap();
        let seq = apply(&t2, &apply(&t1, &r).unwrap()).unwrap();
        let one = apply(&compose(&t2, &t1), &r).unwrap();
        assert!(seq.matrix().dist(one.matrix()) < 1e-10);
        assert_eq!(seq.wiring(), one.wiring());
    }

    #[test]
    fn transform_json_round_trip() {
        let t = LosrTransform::product(LocalOp::SqEncode { d: 2 }, LocalOp::MeasureOutput { effects: z_povm() });
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.starts_with(r#"{"branches":[{"p":1.0,"A":{"op":"sq-encode","d":2}"#));
        let back: LosrTransform = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
