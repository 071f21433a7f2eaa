//! Bipartite nonsignaling resources as validated Choi operators.
//!
//! Every resource is a channel `(A_in, B_in) -> (A_out, B_out)` whose Choi
//! operator has factor order `A_out, B_out, A_in, B_in`. Trivial systems have
//! dimension one; classical systems are quantum systems on which the Choi
//! operator is diagonal.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::choi::{self, ChoiOperator, Labeled, SysId};
use crate::error::{LosrError, Result};
use crate::linalg::{self, dephase, partial_trace, CMatrix, C64};
use crate::types::{GlobalType, PartitionType, SystemKind, SystemType};

pub const A_OUT: SysId = 0;
pub const B_OUT: SysId = 1;
pub const A_IN: SysId = 2;
pub const B_IN: SysId = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Party {
    A,
    B,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::A => Party::B,
            Party::B => Party::A,
        }
    }
}

impl std::str::FromStr for Party {
    type Err = LosrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Party::A),
            "B" | "b" => Ok(Party::B),
            _ => Err(LosrError::Parse(format!("unknown party '{}'", s))),
        }
    }
}

/// Input and output system of one party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartySystems {
    #[serde(rename = "in")]
    pub input: SystemType,
    #[serde(rename = "out")]
    pub output: SystemType,
}

impl PartySystems {
    pub fn new(input: SystemType, output: SystemType) -> Self {
        PartySystems { input, output }
    }

    pub fn partition_type(&self) -> PartitionType {
        PartitionType::new(self.input.kind(), self.output.kind())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartyWiring {
    #[serde(rename = "A")]
    pub a: PartySystems,
    #[serde(rename = "B")]
    pub b: PartySystems,
}

impl PartyWiring {
    pub fn new(a: PartySystems, b: PartySystems) -> Self {
        PartyWiring { a, b }
    }

    pub fn party(&self, p: Party) -> &PartySystems {
        match p {
            Party::A => &self.a,
            Party::B => &self.b,
        }
    }

    pub fn party_mut(&mut self, p: Party) -> &mut PartySystems {
        match p {
            Party::A => &mut self.a,
            Party::B => &mut self.b,
        }
    }

    /// Factor dims in the order A_out, B_out, A_in, B_in.
    pub fn dims(&self) -> [usize; 4] {
        [
            self.a.output.dim(),
            self.b.output.dim(),
            self.a.input.dim(),
            self.b.input.dim(),
        ]
    }

    pub fn systems(&self) -> [SystemType; 4] {
        [self.a.output, self.b.output, self.a.input, self.b.input]
    }

    pub fn dim_out(&self) -> usize {
        self.a.output.dim() * self.b.output.dim()
    }

    pub fn dim_in(&self) -> usize {
        self.a.input.dim() * self.b.input.dim()
    }

    pub fn global_type(&self) -> GlobalType {
        GlobalType::new(vec![self.a.partition_type(), self.b.partition_type()])
            .expect("two parties")
    }

    pub fn labels(&self) -> Vec<(SysId, usize)> {
        let d = self.dims();
        vec![(A_OUT, d[0]), (B_OUT, d[1]), (A_IN, d[2]), (B_IN, d[3])]
    }

    pub fn is_fully_classical(&self) -> bool {
        self.systems().iter().all(|s| s.kind() != SystemKind::Quantum)
    }
}

impl fmt::Display for PartyWiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [A: {} -> {}, B: {} -> {}]",
            self.global_type(),
            self.a.input,
            self.a.output,
            self.b.input,
            self.b.output
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "check")]
pub enum ViolationKind {
    Hermitian,
    CompletelyPositive,
    TracePreserving,
    /// A's input influences B's marginal.
    SignalingAToB,
    /// B's input influences A's marginal.
    SignalingBToA,
    /// A classical factor carries coherences.
    ClassicalCoherence { system: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(flatten)]
    pub kind: ViolationKind,
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            ViolationKind::Hermitian => "hermitian".to_string(),
            ViolationKind::CompletelyPositive => "completely-positive".to_string(),
            ViolationKind::TracePreserving => "trace-preserving".to_string(),
            ViolationKind::SignalingAToB => "no-signaling A->B".to_string(),
            ViolationKind::SignalingBToA => "no-signaling B->A".to_string(),
            ViolationKind::ClassicalCoherence { system } => format!("classical {}", system),
        };
        write!(f, "{} violated by {:.3e}", name, self.magnitude)
    }
}

/// A typed bipartite channel. Construct through the validating constructors;
/// [`Resource::new_unchecked`] exists for file loading and validation reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ResourceRepr", into = "ResourceRepr")]
pub struct Resource {
    wiring: PartyWiring,
    choi: ChoiOperator,
}

#[derive(Serialize, Deserialize)]
struct ResourceRepr {
    wiring: PartyWiring,
    choi: CMatrix,
}

impl TryFrom<ResourceRepr> for Resource {
    type Error = LosrError;
    fn try_from(r: ResourceRepr) -> Result<Self> {
        Resource::new_unchecked(r.wiring, r.choi)
    }
}

impl From<Resource> for ResourceRepr {
    fn from(r: Resource) -> Self {
        ResourceRepr {
            wiring: r.wiring,
            choi: r.choi.into_matrix(),
        }
    }
}

impl Resource {
    /// Wrap a Choi matrix after a dimension check only.
    pub fn new_unchecked(wiring: PartyWiring, choi: CMatrix) -> Result<Self> {
        if !choi.is_square() || choi.rows() != wiring.dim_out() * wiring.dim_in() {
            return Err(LosrError::DimensionMismatch(format!(
                "Choi {}x{} for wiring {}",
                choi.rows(),
                choi.cols(),
                wiring
            )));
        }
        if !choi.is_finite() {
            return Err(LosrError::InvalidChannel("non-finite Choi entries".into()));
        }
        Ok(Resource {
            choi: ChoiOperator::new_unchecked(choi, wiring.dim_out(), wiring.dim_in()),
            wiring,
        })
    }

    /// Generic constructor: the channel must pass [`validate`].
    pub fn from_channel(j: ChoiOperator, wiring: PartyWiring) -> Result<Self> {
        Self::from_channel_tol(j, wiring, choi::DEFAULT_TOL)
    }

    pub fn from_channel_tol(j: ChoiOperator, wiring: PartyWiring, tol: f64) -> Result<Self> {
        if j.dim_out() != wiring.dim_out() || j.dim_in() != wiring.dim_in() {
            return Err(LosrError::DimensionMismatch(format!(
                "Choi out={} in={} for wiring {}",
                j.dim_out(),
                j.dim_in(),
                wiring
            )));
        }
        let r = Resource::new_unchecked(wiring, j.into_matrix())?;
        let v = validate(&r, tol);
        if v.is_empty() {
            Ok(r)
        } else {
            Err(LosrError::InvalidResource(v))
        }
    }

    pub fn wiring(&self) -> &PartyWiring {
        &self.wiring
    }

    pub fn choi(&self) -> &ChoiOperator {
        &self.choi
    }

    pub fn matrix(&self) -> &CMatrix {
        self.choi.matrix()
    }

    pub fn global_type(&self) -> GlobalType {
        self.wiring.global_type()
    }

    pub fn labeled(&self) -> Labeled {
        Labeled::new(self.matrix().clone(), self.wiring.labels()).expect("consistent wiring")
    }

    /// Convex mixture of resources sharing one wiring.
    pub fn mix(parts: &[(f64, &Resource)]) -> Result<Resource> {
        let first = parts
            .first()
            .ok_or_else(|| LosrError::InvalidChannel("empty mixture".into()))?
            .1;
        let mut m = CMatrix::zeros(first.matrix().rows(), first.matrix().cols());
        let mut total = 0.0;
        for (p, r) in parts {
            if r.wiring != first.wiring {
                return Err(LosrError::TypeMismatch("mixing resources of different wiring".into()));
            }
            if *p < 0.0 {
                return Err(LosrError::InvalidChannel("negative mixture weight".into()));
            }
            m.add_scaled(r.matrix(), *p);
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(LosrError::InvalidChannel(format!("weights sum to {}", total)));
        }
        Resource::new_unchecked(first.wiring, m)
    }

    /// Output state for the product input `rho_a (x) rho_b`.
    pub fn output_state(&self, rho_a: &CMatrix, rho_b: &CMatrix) -> Result<CMatrix> {
        choi::choi_of_channel_apply(&self.choi, &linalg::tensor(rho_a, rho_b))
    }
}

/// All four invariant families: CP, TP, two-way nonsignaling, classical diagonality.
pub fn validate(r: &Resource, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let j = r.matrix();
    let dims = r.wiring.dims();

    let herm = j.hermiticity_error();
    if herm > tol {
        out.push(Violation {
            kind: ViolationKind::Hermitian,
            magnitude: herm,
        });
        // the remaining checks need a Hermitian operator
        return out;
    }

    let min = linalg::min_eigenvalue(j).unwrap_or(f64::NEG_INFINITY);
    if min < -tol {
        out.push(Violation {
            kind: ViolationKind::CompletelyPositive,
            magnitude: -min,
        });
    }

    let tp = choi::tp_error(r.choi());
    if tp > tol {
        out.push(Violation {
            kind: ViolationKind::TracePreserving,
            magnitude: tp,
        });
    }

    // B -> A: Tr_{B_out} J on (A_out, A_in, B_in) = (Tr_{B_out,B_in} J / d_Bin) (x) I_Bin
    let ns = |keep_out: usize, keep_in: usize, other_in: usize| -> f64 {
        let reduced = partial_trace(j, &dims, &[keep_out, keep_in, other_in]).expect("dims");
        let marg = partial_trace(j, &dims, &[keep_out, keep_in]).expect("dims");
        let d_other = dims[other_in] as f64;
        // order of kept factors is ascending index; other_in may sit before keep_in
        let expected = if other_in > keep_in {
            linalg::tensor(&marg.scale(1.0 / d_other), &CMatrix::identity(dims[other_in]))
        } else {
            let t = linalg::tensor(&marg.scale(1.0 / d_other), &CMatrix::identity(dims[other_in]));
            // (keep_out, keep_in, other) -> (keep_out, other, keep_in)
            linalg::permute_factors(&t, &[dims[keep_out], dims[keep_in], dims[other_in]], &[0, 2, 1])
                .expect("dims")
        };
        reduced.dist(&expected)
    };
    let b_to_a = ns(0, 2, 3);
    if b_to_a > tol {
        out.push(Violation {
            kind: ViolationKind::SignalingBToA,
            magnitude: b_to_a,
        });
    }
    let a_to_b = ns(1, 3, 2);
    if a_to_b > tol {
        out.push(Violation {
            kind: ViolationKind::SignalingAToB,
            magnitude: a_to_b,
        });
    }

    let names = ["A_out", "B_out", "A_in", "B_in"];
    for (k, sys) in r.wiring.systems().iter().enumerate() {
        if sys.kind() == SystemKind::Classical {
            let deph = dephase(j, &dims, k).expect("dims");
            let err = deph.dist(j);
            if err > tol {
                out.push(Violation {
                    kind: ViolationKind::ClassicalCoherence {
                        system: names[k].to_string(),
                    },
                    magnitude: err,
                });
            }
        }
    }
    out
}

fn check_state(rho: &CMatrix, tol: f64) -> Result<()> {
    if !rho.is_square() {
        return Err(LosrError::InvalidState("state must be square".into()));
    }
    let herm = rho.hermiticity_error();
    if herm > tol {
        return Err(LosrError::InvalidState(format!("not Hermitian ({:.3e})", herm)));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        return Err(LosrError::InvalidState(format!("trace {} != 1", tr.re)));
    }
    let min = linalg::min_eigenvalue(rho)?;
    if min < -tol {
        return Err(LosrError::InvalidState(format!("negative eigenvalue {:.3e}", min)));
    }
    Ok(())
}

pub(crate) fn check_density(rho: &CMatrix) -> Result<()> {
    check_state(rho, choi::DEFAULT_TOL)
}

/// Bipartite state as a resource of type II->QQ.
pub fn from_state(rho: &CMatrix, d_a: usize, d_b: usize) -> Result<Resource> {
    if rho.rows() != d_a * d_b {
        return Err(LosrError::DimensionMismatch(format!(
            "state of size {} for dims {}x{}",
            rho.rows(),
            d_a,
            d_b
        )));
    }
    check_state(rho, choi::DEFAULT_TOL)?;
    let wiring = PartyWiring::new(
        PartySystems::new(SystemType::TRIVIAL, SystemType::new(SystemKind::Quantum, d_a)?),
        PartySystems::new(SystemType::TRIVIAL, SystemType::new(SystemKind::Quantum, d_b)?),
    );
    Resource::from_channel(ChoiOperator::new(rho.clone(), d_a * d_b, 1)?, wiring)
}

/// Conditional distribution `P(ab|xy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationTable {
    na: usize,
    nb: usize,
    nx: usize,
    ny: usize,
    p: Vec<f64>,
}

impl CorrelationTable {
    /// Table from a function of `(a, b, x, y)`; no validation.
    pub fn from_fn(na: usize, nb: usize, nx: usize, ny: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut p = Vec::with_capacity(na * nb * nx * ny);
        for a in 0..na {
            for b in 0..nb {
                for x in 0..nx {
                    for y in 0..ny {
                        p.push(f(a, b, x, y));
                    }
                }
            }
        }
        CorrelationTable { na, nb, nx, ny, p }
    }

    /// Flat data in `[a][b][x][y]` order.
    pub fn from_flat(dims: [usize; 4], p: Vec<f64>) -> Result<Self> {
        let [na, nb, nx, ny] = dims;
        if dims.contains(&0) || p.len() != na * nb * nx * ny {
            return Err(LosrError::InvalidTable(format!(
                "{} entries for dims {:?}",
                p.len(),
                dims
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(LosrError::InvalidTable("non-finite entry".into()));
        }
        Ok(CorrelationTable { na, nb, nx, ny, p })
    }

    /// `[na, nb, nx, ny]`
    pub fn dims(&self) -> [usize; 4] {
        [self.na, self.nb, self.nx, self.ny]
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        ((a * self.nb + b) * self.nx + x) * self.ny + y
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.p[self.index(a, b, x, y)]
    }

    pub fn flat(&self) -> &[f64] {
        &self.p
    }

    pub fn max_diff(&self, other: &CorrelationTable) -> f64 {
        if self.dims() != other.dims() {
            return f64::INFINITY;
        }
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Positivity, normalization and nonsignaling within `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let [na, nb, nx, ny] = self.dims();
        if let Some(v) = self.p.iter().find(|&&v| v < -tol) {
            return Err(LosrError::InvalidTable(format!("negative entry {}", v)));
        }
        for x in 0..nx {
            for y in 0..ny {
                let s: f64 = (0..na)
                    .flat_map(|a| (0..nb).map(move |b| (a, b)))
                    .map(|(a, b)| self.get(a, b, x, y))
                    .sum();
                if (s - 1.0).abs() > tol {
                    return Err(LosrError::InvalidTable(format!(
                        "sum over outcomes for (x={},y={}) is {}",
                        x, y, s
                    )));
                }
            }
        }
        for x in 0..nx {
            for a in 0..na {
                let m0: f64 = (0..nb).map(|b| self.get(a, b, x, 0)).sum();
                for y in 1..ny {
                    let m: f64 = (0..nb).map(|b| self.get(a, b, x, y)).sum();
                    if (m - m0).abs() > tol {
                        return Err(LosrError::InvalidTable(format!(
                            "A's marginal depends on y (x={}, a={}): {} vs {}",
                            x, a, m0, m
                        )));
                    }
                }
            }
        }
        for y in 0..ny {
            for b in 0..nb {
                let m0: f64 = (0..na).map(|a| self.get(a, b, 0, y)).sum();
                for x in 1..nx {
                    let m: f64 = (0..na).map(|a| self.get(a, b, x, y)).sum();
                    if (m - m0).abs() > tol {
                        return Err(LosrError::InvalidTable(format!(
                            "B's marginal depends on x (y={}, b={}): {} vs {}",
                            y, b, m0, m
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn wiring(&self) -> PartyWiring {
        PartyWiring::new(
            PartySystems::new(
                SystemType::at_least(SystemKind::Classical, self.nx),
                SystemType::at_least(SystemKind::Classical, self.na),
            ),
            PartySystems::new(
                SystemType::at_least(SystemKind::Classical, self.ny),
                SystemType::at_least(SystemKind::Classical, self.nb),
            ),
        )
    }

    /// Mixture `sum_i w_i P_i`.
    pub fn mix(parts: &[(f64, &CorrelationTable)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| LosrError::InvalidTable("empty mixture".into()))?
            .1;
        let mut p = vec![0.0; first.p.len()];
        for (w, t) in parts {
            if t.dims() != first.dims() {
                return Err(LosrError::InvalidTable("mixing tables of different shape".into()));
            }
            for (acc, v) in p.iter_mut().zip(&t.p) {
                *acc += w * v;
            }
        }
        CorrelationTable::from_flat(first.dims(), p)
    }
}

pub type Nested4 = Vec<Vec<Vec<Vec<f64>>>>;

/// Flat `[a][b][x][y]` data to nested vectors.
pub fn nest4(dims: [usize; 4], flat: &[f64]) -> Nested4 {
    let [na, nb, nx, ny] = dims;
    (0..na)
        .map(|a| {
            (0..nb)
                .map(|b| {
                    (0..nx)
                        .map(|x| (0..ny).map(|y| flat[((a * nb + b) * nx + x) * ny + y]).collect())
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn flatten4(nested: &Nested4) -> std::result::Result<([usize; 4], Vec<f64>), String> {
    let na = nested.len();
    let nb = nested.first().map_or(0, |v| v.len());
    let nx = nested.first().and_then(|v| v.first()).map_or(0, |v| v.len());
    let ny = nested
        .first()
        .and_then(|v| v.first())
        .and_then(|v| v.first())
        .map_or(0, |v| v.len());
    let mut flat = Vec::with_capacity(na * nb * nx * ny);
    for va in nested {
        if va.len() != nb {
            return Err("ragged table".into());
        }
        for vb in va {
            if vb.len() != nx {
                return Err("ragged table".into());
            }
            for vx in vb {
                if vx.len() != ny {
                    return Err("ragged table".into());
                }
                flat.extend_from_slice(vx);
            }
        }
    }
    Ok(([na, nb, nx, ny], flat))
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    #[serde(rename = "P")]
    p: Nested4,
}

impl Serialize for CorrelationTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TableRepr {
            p: nest4(self.dims(), &self.p),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CorrelationTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = TableRepr::deserialize(d)?;
        let (dims, flat) = flatten4(&r.p).map_err(serde::de::Error::custom)?;
        CorrelationTable::from_flat(dims, flat).map_err(serde::de::Error::custom)
    }
}

/// Box as a CC->CC resource with diagonal Choi blocks.
pub fn from_box(p: &CorrelationTable) -> Result<Resource> {
    p.check(choi::DEFAULT_TOL)?;
    let wiring = p.wiring();
    let [na, nb, nx, ny] = p.dims();
    let n = na * nb * nx * ny;
    let mut j = CMatrix::zeros(n, n);
    for (k, &v) in p.flat().iter().enumerate() {
        j[(k, k)] = C64::new(v, 0.0);
    }
    let r = Resource::new_unchecked(wiring, j)?;
    let v = validate(&r, choi::DEFAULT_TOL);
    if v.is_empty() {
        Ok(r)
    } else {
        Err(LosrError::InvalidResource(v))
    }
}

/// Read a box off a resource with classical (or trivial) systems.
pub fn to_box(r: &Resource) -> Result<CorrelationTable> {
    if r.wiring.systems().iter().any(|s| s.is_quantum()) {
        return Err(LosrError::TypeMismatch(format!(
            "to_box needs classical systems, got {}",
            r.global_type()
        )));
    }
    let [na, nb, nx, ny] = r.wiring.dims();
    let diag = r.matrix().diagonal_re();
    CorrelationTable::from_flat([na, nb, nx, ny], diag)
}

/// Steering assemblage `sigma[x][a]` on B's quantum output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assemblage {
    pub sigma: Vec<Vec<CMatrix>>,
}

impl Assemblage {
    pub fn new(sigma: Vec<Vec<CMatrix>>) -> Result<Self> {
        let a = Assemblage { sigma };
        a.shape()?;
        Ok(a)
    }

    /// `(settings, outcomes, dim)`
    pub fn shape(&self) -> Result<(usize, usize, usize)> {
        let nx = self.sigma.len();
        let na = self.sigma.first().map_or(0, |v| v.len());
        let d = self
            .sigma
            .first()
            .and_then(|v| v.first())
            .map_or(0, |m| m.rows());
        if nx == 0 || na == 0 || d == 0 {
            return Err(LosrError::InvalidAssemblage("empty assemblage".into()));
        }
        for row in &self.sigma {
            if row.len() != na || row.iter().any(|m| !m.is_square() || m.rows() != d) {
                return Err(LosrError::InvalidAssemblage("ragged assemblage".into()));
            }
        }
        Ok((nx, na, d))
    }

    pub fn reduced_state(&self, x: usize) -> CMatrix {
        let d = self.sigma[x][0].rows();
        let mut acc = CMatrix::zeros(d, d);
        for s in &self.sigma[x] {
            acc.add_scaled(s, 1.0);
        }
        acc
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let (nx, _, _) = self.shape()?;
        for (x, row) in self.sigma.iter().enumerate() {
            for (a, s) in row.iter().enumerate() {
                if !s.is_hermitian(tol) {
                    return Err(LosrError::InvalidAssemblage(format!("sigma[{}][{}] not Hermitian", x, a)));
                }
                let m = linalg::min_eigenvalue(s)?;
                if m < -tol {
                    return Err(LosrError::InvalidAssemblage(format!(
                        "sigma[{}][{}] has eigenvalue {:.3e}",
                        x, a, m
                    )));
                }
            }
        }
        let rho = self.reduced_state(0);
        let tr = rho.trace().re;
        if (tr - 1.0).abs() > tol {
            return Err(LosrError::InvalidAssemblage(format!("reduced state has trace {}", tr)));
        }
        for x in 1..nx {
            let d = self.reduced_state(x).dist(&rho);
            if d > tol {
                return Err(LosrError::InvalidAssemblage(format!(
                    "signaling: reduced state for x={} differs by {:.3e}",
                    x, d
                )));
            }
        }
        Ok(())
    }

    /// `sigma_{a|x} = Tr_A[(M_{a|x} (x) I) rho]` for measurements on A's half.
    pub fn from_state_measurements(rho: &CMatrix, d_a: usize, d_b: usize, povms: &[Vec<CMatrix>]) -> Result<Self> {
        check_state(rho, choi::DEFAULT_TOL)?;
        let sigma = povms
            .iter()
            .map(|povm| {
                povm.iter()
                    .map(|m| {
                        let op = linalg::tensor(m, &CMatrix::identity(d_b)).matmul(rho);
                        partial_trace(&op, &[d_a, d_b], &[1])
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Assemblage::new(sigma)
    }
}

/// Assemblage as a CI->CQ resource.
pub fn from_assemblage(a: &Assemblage, n_settings: usize) -> Result<Resource> {
    let (nx, na, d) = a.shape()?;
    if nx != n_settings {
        return Err(LosrError::InvalidAssemblage(format!(
            "{} settings declared, {} present",
            n_settings, nx
        )));
    }
    a.check(choi::DEFAULT_TOL)?;
    let wiring = PartyWiring::new(
        PartySystems::new(
            SystemType::at_least(SystemKind::Classical, nx),
            SystemType::at_least(SystemKind::Classical, na),
        ),
        PartySystems::new(SystemType::TRIVIAL, SystemType::new(SystemKind::Quantum, d)?),
    );
    // index (a, b, x) with B_in of dim 1
    let n = na * d * nx;
    let mut j = CMatrix::zeros(n, n);
    for x in 0..nx {
        for aa in 0..na {
            let s = &a.sigma[x][aa];
            for b in 0..d {
                for b2 in 0..d {
                    j[((aa * d + b) * nx + x, (aa * d + b2) * nx + x)] = s[(b, b2)];
                }
            }
        }
    }
    let r = Resource::new_unchecked(wiring, j)?;
    let v = validate(&r, choi::DEFAULT_TOL);
    if v.is_empty() {
        Ok(r)
    } else {
        Err(LosrError::InvalidResource(v))
    }
}

pub fn to_assemblage(r: &Resource) -> Result<Assemblage> {
    let w = r.wiring();
    if w.b.input.dim() != 1 || w.a.output.is_quantum() || w.a.input.is_quantum() {
        return Err(LosrError::TypeMismatch(format!(
            "to_assemblage needs type CI->CQ, got {}",
            r.global_type()
        )));
    }
    let [na, d, nx, _] = w.dims();
    let j = r.matrix();
    let sigma = (0..nx)
        .map(|x| {
            (0..na)
                .map(|aa| {
                    CMatrix::from_fn(d, d, |b, b2| j[((aa * d + b) * nx + x, (aa * d + b2) * nx + x)])
                })
                .collect()
        })
        .collect();
    Assemblage::new(sigma)
}

/// Standard boxes.
pub mod boxes {
    use super::*;

    /// P(ab|xy) = 1/2 [a xor b = x and y]
    pub fn pr_box() -> CorrelationTable {
        CorrelationTable::from_fn(2, 2, 2, 2, |a, b, x, y| {
            if (a ^ b) == (x & y) {
                0.5
            } else {
                0.0
            }
        })
    }

    /// Deterministic local box with response functions `alpha[x]`, `beta[y]`.
    pub fn deterministic(na: usize, nb: usize, alpha: &[usize], beta: &[usize]) -> CorrelationTable {
        CorrelationTable::from_fn(na, nb, alpha.len(), beta.len(), |a, b, x, y| {
            if alpha[x] == a && beta[y] == b {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn uniform(na: usize, nb: usize, nx: usize, ny: usize) -> CorrelationTable {
        let v = 1.0 / (na * nb) as f64;
        CorrelationTable::from_fn(na, nb, nx, ny, |_, _, _, _| v)
    }

    /// Born-rule box from local POVM families `povms_a[x]`, `povms_b[y]`.
    pub fn from_quantum(rho: &CMatrix, povms_a: &[Vec<CMatrix>], povms_b: &[Vec<CMatrix>]) -> CorrelationTable {
        let na = povms_a[0].len();
        let nb = povms_b[0].len();
        CorrelationTable::from_fn(na, nb, povms_a.len(), povms_b.len(), |a, b, x, y| {
            linalg::tensor(&povms_a[x][a], &povms_b[y][b]).trace_product_re(rho)
        })
    }

    /// Projective qubit measurement along the x-z Bloch direction at angle `theta`.
    pub fn xz_projective(theta: f64) -> Vec<CMatrix> {
        let up = linalg::states::qubit_xz(theta);
        let down = linalg::states::qubit_xz(theta + std::f64::consts::PI);
        vec![CMatrix::projector(&up), CMatrix::projector(&down)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::states;

    #[test]
    fn phi_plus_is_valid() {
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        assert!(validate(&r, 1e-9).is_empty());
        assert_eq!(r.global_type().to_string(), "II->QQ");
    }

    #[test]
    fn maximally_mixed_state_is_valid() {
        let r = from_state(&CMatrix::identity(4).scale(0.25), 2, 2).unwrap();
        assert!(validate(&r, 1e-9).is_empty());
    }

    #[test]
    fn unnormalized_state_rejected() {
        assert!(from_state(&CMatrix::identity(4).scale(0.5), 2, 2).is_err());
    }

    #[test]
    fn signaling_identity_flagged() {
        // identity channel A_in -> B_out, A_out and B_in trivial
        let wiring = PartyWiring::new(
            PartySystems::new(SystemType::quantum(2), SystemType::TRIVIAL),
            PartySystems::new(SystemType::TRIVIAL, SystemType::quantum(2)),
        );
        let r = Resource::new_unchecked(wiring, ChoiOperator::identity(2).into_matrix()).unwrap();
        let v = validate(&r, 1e-9);
        assert!(v.iter().any(|v| v.kind == ViolationKind::SignalingAToB));
        assert!(matches!(
            Resource::from_channel(ChoiOperator::identity(2), wiring),
            Err(LosrError::InvalidResource(_))
        ));
    }

    #[test]
    fn subnormalized_box_reports_tp() {
        let p = boxes::pr_box();
        let scaled = CorrelationTable::from_flat(p.dims(), p.flat().iter().map(|v| v * 0.9).collect()).unwrap();
        let n = 16;
        let mut j = CMatrix::zeros(n, n);
        for (k, v) in scaled.flat().iter().enumerate() {
            j[(k, k)] = C64::new(*v, 0.0);
        }
        let r = Resource::new_unchecked(scaled.wiring(), j).unwrap();
        let v = validate(&r, 1e-9);
        let tp = v.iter().find(|v| v.kind == ViolationKind::TracePreserving).unwrap();
        // Tr_out J = 0.9 I_4, Frobenius distance 0.1 * 2
        assert!((tp.magnitude - 0.2).abs() < 1e-12);
        assert!(from_box(&scaled).is_err());
    }

    #[test]
    fn box_round_trip() {
        let p = boxes::pr_box();
        // marginals of PR are uniform
        for x in 0..2 {
            for a in 0..2 {
                let m: f64 = (0..2).map(|b| p.get(a, b, x, 0)).sum();
                assert_eq!(m, 0.5);
            }
        }
        let r = from_box(&p).unwrap();
        assert_eq!(to_box(&r).unwrap(), p);
        let coins = boxes::uniform(2, 2, 2, 2);
        assert!(from_box(&coins).is_ok());
    }

    #[test]
    fn signaling_box_rejected() {
        // b = x
        let p = CorrelationTable::from_fn(2, 2, 2, 2, |a, b, x, _| if a == 0 && b == x { 1.0 } else { 0.0 });
        assert!(from_box(&p).is_err());
    }

    fn zx() -> Vec<Vec<CMatrix>> {
        vec![boxes::xz_projective(0.0), boxes::xz_projective(std::f64::consts::FRAC_PI_2)]
    }

    #[test]
    fn singlet_assemblage() {
        let a = Assemblage::from_state_measurements(&states::singlet(), 2, 2, &zx()).unwrap();
        // outcome 0 of Z on A leaves B in |1>, with probability 1/2
        let s = &a.sigma[0][0];
        assert!(s.dist(&CMatrix::basis_projector(2, 1).scale(0.5)) < 1e-14);
        // X outcome +: B in |->
        let minus = CMatrix::projector(&states::qubit_xz(-std::f64::consts::FRAC_PI_2));
        assert!(a.sigma[1][0].dist(&minus.scale(0.5)) < 1e-14);
        let r = from_assemblage(&a, 2).unwrap();
        assert!(validate(&r, 1e-9).is_empty());
        let back = to_assemblage(&r).unwrap();
        for x in 0..2 {
            for k in 0..2 {
                assert!(back.sigma[x][k].dist(&a.sigma[x][k]) < 1e-12);
            }
        }
    }

    #[test]
    fn product_assemblage_valid() {
        let rho_b = CMatrix::from_real_diag(&[0.7, 0.3]);
        let sigma = vec![
            vec![rho_b.scale(0.2), rho_b.scale(0.8)],
            vec![rho_b.scale(0.5), rho_b.scale(0.5)],
        ];
        let a = Assemblage::new(sigma).unwrap();
        assert!(from_assemblage(&a, 2).is_ok());
    }

    #[test]
    fn signaling_assemblage_rejected() {
        let sigma = vec![
            vec![CMatrix::basis_projector(2, 0), CMatrix::zeros(2, 2)],
            vec![CMatrix::basis_projector(2, 1), CMatrix::zeros(2, 2)],
        ];
        let a = Assemblage::new(sigma).unwrap();
        assert!(from_assemblage(&a, 2).is_err());
    }

    #[test]
    fn swap_channel_rejected() {
        // A_in -> B_out and B_in -> A_out
        let wiring = PartyWiring::new(
            PartySystems::new(SystemType::quantum(2), SystemType::quantum(2)),
            PartySystems::new(SystemType::quantum(2), SystemType::quantum(2)),
        );
        let mut swap = CMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                swap[(i * 2 + j, j * 2 + i)] = C64::new(1.0, 0.0);
            }
        }
        let j = ChoiOperator::from_kraus(&[swap]).unwrap();
        let err = Resource::from_channel(j, wiring).unwrap_err();
        match err {
            LosrError::InvalidResource(v) => {
                assert!(v.iter().any(|v| v.kind == ViolationKind::SignalingAToB));
                assert!(v.iter().any(|v| v.kind == ViolationKind::SignalingBToA));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn local_identity_with_discard_is_valid() {
        // A: identity Q2 -> Q2; B: input Q2 discarded, trivial output
        let wiring = PartyWiring::new(
            PartySystems::new(SystemType::quantum(2), SystemType::quantum(2)),
            PartySystems::new(SystemType::quantum(2), SystemType::TRIVIAL),
        );
        let discard = ChoiOperator::new(CMatrix::identity(2), 1, 2).unwrap();
        let j = choi::compose_parallel(&ChoiOperator::identity(2), &discard);
        assert!(Resource::from_channel(j, wiring).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let r = from_box(&boxes::pr_box()).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains(r#""A":{"in":"C:2","out":"C:2"}"#));
        let back: Resource = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        let t = serde_json::to_string(&boxes::pr_box()).unwrap();
        let back: CorrelationTable = serde_json::from_str(&t).unwrap();
        assert_eq!(back, boxes::pr_box());
    }
}
