//! Games on resources of a fixed type.
//!
//! A game fixes an analyzer (preparations on every input, a POVM on every
//! output) and a payoff table; its value on a resource is the payoff-weighted
//! sum of the induced correlations. Equivalently it is `Tr(J W)` for the game
//! operator `W = sum F(a,b,x,y) M_a (x) N_b (x) rho_x^T (x) rho_y^T`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choi::{self, ChoiOperator, Labeled};
use crate::error::{LosrError, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::random;
use crate::resources::{
    flatten4, nest4, CorrelationTable, Nested4, Party, PartySystems, PartyWiring, Resource,
};
use crate::transforms::{self, party_ids, LosrTransform};
use crate::types::{GlobalType, SystemKind, SystemType};

/// Preparations for one party's input and a POVM on its output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalAnalyzer {
    pub preparations: Vec<CMatrix>,
    pub povm: Vec<CMatrix>,
}

/// The d^2 states |j>, (|j>+|k>)/sqrt2, (|j>+i|k>)/sqrt2 for j<k.
pub fn tomographic_states(d: usize) -> Vec<CMatrix> {
    let s = 1.0 / 2f64.sqrt();
    let mut out: Vec<CMatrix> = (0..d).map(|j| CMatrix::basis_projector(d, j)).collect();
    for j in 0..d {
        for k in j + 1..d {
            let mut v = vec![C64::new(0.0, 0.0); d];
            v[j] = C64::new(s, 0.0);
            v[k] = C64::new(s, 0.0);
            out.push(CMatrix::projector(&v));
        }
    }
    for j in 0..d {
        for k in j + 1..d {
            let mut v = vec![C64::new(0.0, 0.0); d];
            v[j] = C64::new(s, 0.0);
            v[k] = C64::new(0.0, s);
            out.push(CMatrix::projector(&v));
        }
    }
    out
}

/// Informationally complete POVM `S^{-1/2} psi_k S^{-1/2}` from [`tomographic_states`].
pub fn tomographic_povm(d: usize) -> Vec<CMatrix> {
    let states = tomographic_states(d);
    let mut s = CMatrix::zeros(d, d);
    for p in &states {
        s.add_scaled(p, 1.0);
    }
    let r = linalg::inv_sqrt(&s).expect("frame operator is positive definite");
    states.iter().map(|p| r.matmul(p).matmul(&r).hermitian_part()).collect()
}

fn default_inputs(t: SystemType) -> Vec<CMatrix> {
    match t.kind() {
        SystemKind::Trivial => vec![CMatrix::identity(1)],
        SystemKind::Classical => (0..t.dim()).map(|k| CMatrix::basis_projector(t.dim(), k)).collect(),
        SystemKind::Quantum => tomographic_states(t.dim()),
    }
}

fn default_outputs(t: SystemType) -> Vec<CMatrix> {
    match t.kind() {
        SystemKind::Trivial => vec![CMatrix::identity(1)],
        SystemKind::Classical => (0..t.dim()).map(|k| CMatrix::basis_projector(t.dim(), k)).collect(),
        SystemKind::Quantum => tomographic_povm(t.dim()),
    }
}

impl LocalAnalyzer {
    pub fn default_for(sys: PartySystems) -> Self {
        LocalAnalyzer {
            preparations: default_inputs(sys.input),
            povm: default_outputs(sys.output),
        }
    }

    fn check(&self, sys: PartySystems, tol: f64) -> Result<()> {
        if self.preparations.is_empty() || self.povm.is_empty() {
            return Err(LosrError::InvalidAnalyzer("empty preparation set or POVM".into()));
        }
        let din = sys.input.dim();
        for p in &self.preparations {
            if !p.is_square() || p.rows() != din {
                return Err(LosrError::InvalidAnalyzer(format!(
                    "preparation of size {} for input {}",
                    p.rows(),
                    sys.input
                )));
            }
            crate::resources::check_density(p)
                .map_err(|e| LosrError::InvalidAnalyzer(format!("preparation: {}", e)))?;
        }
        let dout = sys.output.dim();
        let mut sum = CMatrix::zeros(dout, dout);
        for e in &self.povm {
            if !e.is_square() || e.rows() != dout {
                return Err(LosrError::InvalidAnalyzer(format!(
                    "effect of size {} for output {}",
                    e.rows(),
                    sys.output
                )));
            }
            if !e.is_hermitian(tol) || linalg::min_eigenvalue(e)? < -tol {
                return Err(LosrError::InvalidAnalyzer("POVM effect not PSD".into()));
            }
            sum.add_scaled(e, 1.0);
        }
        if sum.dist(&CMatrix::identity(dout)) > tol {
            return Err(LosrError::InvalidAnalyzer("effects do not sum to identity".into()));
        }
        Ok(())
    }
}

/// Rank of the real span of a family of Hermitian operators.
fn span_rank(ops: &[CMatrix]) -> usize {
    let g = gram(ops);
    let eig = g.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    eig.eigenvalues.iter().filter(|v| **v > 1e-10 * max.max(1.0)).count()
}

fn gram(ops: &[CMatrix]) -> DMatrix<f64> {
    DMatrix::from_fn(ops.len(), ops.len(), |i, j| ops[i].trace_product_re(&ops[j]))
}

/// Dimension of the operator space a system of type `t` can carry.
fn required_rank(t: SystemType) -> usize {
    match t.kind() {
        SystemKind::Quantum => t.dim() * t.dim(),
        _ => t.dim(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completeness {
    pub a_input: bool,
    pub a_output: bool,
    pub b_input: bool,
    pub b_output: bool,
}

impl Completeness {
    pub fn all(&self) -> bool {
        self.a_input && self.a_output && self.b_input && self.b_output
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analyzer {
    #[serde(rename = "A")]
    pub a: LocalAnalyzer,
    #[serde(rename = "B")]
    pub b: LocalAnalyzer,
}

impl Analyzer {
    /// Canonical complete analyzer: deltas and computational readout on
    /// classical systems, [`tomographic_states`] / [`tomographic_povm`] on
    /// quantum ones.
    pub fn default_for(w: &PartyWiring) -> Self {
        Analyzer {
            a: LocalAnalyzer::default_for(w.a),
            b: LocalAnalyzer::default_for(w.b),
        }
    }

    /// `[na, nb, nx, ny]` label counts.
    pub fn counts(&self) -> [usize; 4] {
        [
            self.a.povm.len(),
            self.b.povm.len(),
            self.a.preparations.len(),
            self.b.preparations.len(),
        ]
    }

    pub fn local(&self, p: Party) -> &LocalAnalyzer {
        match p {
            Party::A => &self.a,
            Party::B => &self.b,
        }
    }

    /// Check shapes and POVM normalization; report tomographic completeness
    /// relative to the operator space of each system type.
    pub fn check(&self, w: &PartyWiring) -> Result<Completeness> {
        self.a.check(w.a, 1e-9)?;
        self.b.check(w.b, 1e-9)?;
        Ok(Completeness {
            a_input: span_rank(&self.a.preparations) >= required_rank(w.a.input),
            a_output: span_rank(&self.a.povm) >= required_rank(w.a.output),
            b_input: span_rank(&self.b.preparations) >= required_rank(w.b.input),
            b_output: span_rank(&self.b.povm) >= required_rank(w.b.output),
        })
    }

    /// Input-side dims and output-side dims implied by the operators.
    fn dims(&self) -> [usize; 4] {
        [
            self.a.povm[0].rows(),
            self.b.povm[0].rows(),
            self.a.preparations[0].rows(),
            self.b.preparations[0].rows(),
        ]
    }
}

/// Real payoff weights `F(a,b,x,y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffTable {
    dims: [usize; 4],
    f: Vec<f64>,
}

impl PayoffTable {
    pub fn from_fn(dims: [usize; 4], f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let [na, nb, nx, ny] = dims;
        let mut v = Vec::with_capacity(na * nb * nx * ny);
        for a in 0..na {
            for b in 0..nb {
                for x in 0..nx {
                    for y in 0..ny {
                        v.push(f(a, b, x, y));
                    }
                }
            }
        }
        PayoffTable { dims, f: v }
    }

    pub fn from_flat(dims: [usize; 4], f: Vec<f64>) -> Result<Self> {
        if f.len() != dims.iter().product::<usize>() || dims.contains(&0) {
            return Err(LosrError::InvalidAnalyzer(format!(
                "payoff with {} entries for dims {:?}",
                f.len(),
                dims
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(LosrError::InvalidAnalyzer("non-finite payoff".into()));
        }
        Ok(PayoffTable { dims, f })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        PayoffTable {
            dims,
            f: vec![0.0; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn flat(&self) -> &[f64] {
        &self.f
    }

    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        let [_, nb, nx, ny] = self.dims;
        self.f[((a * nb + b) * nx + x) * ny + y]
    }

    /// `sum F P`
    pub fn dot(&self, p: &CorrelationTable) -> f64 {
        self.f.iter().zip(p.flat()).map(|(f, p)| f * p).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct PayoffRepr {
    #[serde(rename = "F")]
    f: Nested4,
}

impl Serialize for PayoffTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PayoffRepr {
            f: nest4(self.dims, &self.f),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PayoffTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PayoffRepr::deserialize(d)?;
        let (dims, flat) = flatten4(&r.f).map_err(serde::de::Error::custom)?;
        PayoffTable::from_flat(dims, flat).map_err(serde::de::Error::custom)
    }
}

/// Analyzer plus payoff on a fixed wiring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameRepr", into = "GameRepr")]
pub struct Game {
    wiring: PartyWiring,
    analyzer: Analyzer,
    payoff: PayoffTable,
}

#[derive(Serialize, Deserialize)]
struct GameRepr {
    #[serde(rename = "type")]
    ty: GlobalType,
    analyzer: Analyzer,
    payoff: PayoffTable,
}

impl TryFrom<GameRepr> for Game {
    type Error = LosrError;
    fn try_from(r: GameRepr) -> Result<Self> {
        let parties = r.ty.parties();
        if parties.len() != 2 {
            return Err(LosrError::InvalidType("games are bipartite".into()));
        }
        if r.analyzer.a.povm.is_empty()
            || r.analyzer.b.povm.is_empty()
            || r.analyzer.a.preparations.is_empty()
            || r.analyzer.b.preparations.is_empty()
        {
            return Err(LosrError::InvalidAnalyzer("empty analyzer".into()));
        }
        let [dao, dbo, dai, dbi] = r.analyzer.dims();
        let wiring = PartyWiring::new(
            PartySystems::new(
                SystemType::new(parties[0].input, dai)?,
                SystemType::new(parties[0].output, dao)?,
            ),
            PartySystems::new(
                SystemType::new(parties[1].input, dbi)?,
                SystemType::new(parties[1].output, dbo)?,
            ),
        );
        Game::new(wiring, r.analyzer, r.payoff)
    }
}

impl From<Game> for GameRepr {
    fn from(g: Game) -> Self {
        GameRepr {
            ty: g.wiring.global_type(),
            analyzer: g.analyzer,
            payoff: g.payoff,
        }
    }
}

impl Game {
    pub fn new(wiring: PartyWiring, analyzer: Analyzer, payoff: PayoffTable) -> Result<Self> {
        analyzer.check(&wiring)?;
        if payoff.dims() != analyzer.counts() {
            return Err(LosrError::InvalidAnalyzer(format!(
                "payoff dims {:?} do not match analyzer labels {:?}",
                payoff.dims(),
                analyzer.counts()
            )));
        }
        Ok(Game {
            wiring,
            analyzer,
            payoff,
        })
    }

    pub fn wiring(&self) -> &PartyWiring {
        &self.wiring
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn payoff(&self) -> &PayoffTable {
        &self.payoff
    }

    pub fn global_type(&self) -> GlobalType {
        self.wiring.global_type()
    }

    /// Built-in games by name; currently `chsh`.
    pub fn builtin(name: &str) -> Result<Game> {
        match name {
            "chsh" => Ok(chsh()),
            _ => Err(LosrError::Parse(format!("unknown built-in game '{}'", name))),
        }
    }
}

/// CHSH with uniform inputs folded in: `F = 1/4 [a xor b = x and y]`.
pub fn chsh() -> Game {
    let w = PartyWiring::new(
        PartySystems::new(SystemType::classical(2), SystemType::classical(2)),
        PartySystems::new(SystemType::classical(2), SystemType::classical(2)),
    );
    let payoff = PayoffTable::from_fn([2, 2, 2, 2], |a, b, x, y| {
        if (a ^ b) == (x & y) {
            0.25
        } else {
            0.0
        }
    });
    Game::new(w, Analyzer::default_for(&w), payoff).expect("valid CHSH game")
}

fn check_wiring(expected: &PartyWiring, got: &PartyWiring) -> Result<()> {
    if expected != got {
        let hint = if expected.global_type() != got.global_type() {
            " (convert the resource explicitly, e.g. with the semiquantum encoder)"
        } else {
            ""
        };
        return Err(LosrError::TypeMismatch(format!(
            "game is defined on {}, resource is {}{}",
            expected, got, hint
        )));
    }
    Ok(())
}

/// `P(ab|xy) = Tr[(M_a (x) N_b) E(rho_x (x) rho_y)]` for an operator in Choi form.
fn raw_correlations(z: &Analyzer, j: &ChoiOperator) -> Result<CorrelationTable> {
    let [na, nb, nx, ny] = z.counts();
    let [dao, dbo, _, _] = z.dims();
    let effects: Vec<CMatrix> = (0..na * nb)
        .map(|ab| linalg::tensor(&z.a.povm[ab / nb], &z.b.povm[ab % nb]))
        .collect();
    let mut p = vec![0.0; na * nb * nx * ny];
    let outs: Vec<CMatrix> = (0..nx * ny)
        .into_par_iter()
        .map(|xy| {
            let rho = linalg::tensor(&z.a.preparations[xy / ny], &z.b.preparations[xy % ny]);
            choi::choi_of_channel_apply(j, &rho)
        })
        .collect::<Result<_>>()?;
    debug_assert_eq!(outs[0].rows(), dao * dbo);
    for (xy, sigma) in outs.iter().enumerate() {
        let (x, y) = (xy / ny, xy % ny);
        for (ab, e) in effects.iter().enumerate() {
            let (a, b) = (ab / nb, ab % nb);
            p[((a * nb + b) * nx + x) * ny + y] = e.trace_product_re(sigma);
        }
    }
    CorrelationTable::from_flat([na, nb, nx, ny], p)
}

pub fn correlations(z: &Analyzer, r: &Resource) -> Result<CorrelationTable> {
    let w = r.wiring();
    let dims = z.dims();
    if dims != w.dims() {
        return Err(LosrError::TypeMismatch(format!(
            "analyzer dims {:?} do not fit resource {}",
            dims, w
        )));
    }
    raw_correlations(z, r.choi())
}

/// `sum F(abxy) P(ab|xy)` with `P` from the game's analyzer.
pub fn evaluate(g: &Game, r: &Resource) -> Result<f64> {
    check_wiring(&g.wiring, r.wiring())?;
    Ok(g.payoff.dot(&correlations(&g.analyzer, r)?))
}

/// Game operator with factors `A_out, B_out, A_in, B_in`.
pub fn game_operator(g: &Game) -> CMatrix {
    let z = &g.analyzer;
    let [na, nb, _, ny] = z.counts();
    let [dao, dbo, dai, dbi] = z.dims();
    let ta: Vec<CMatrix> = z.a.preparations.iter().map(|p| p.transpose()).collect();
    let tb: Vec<CMatrix> = z.b.preparations.iter().map(|p| p.transpose()).collect();
    // L_{by} = N_b (x) rho_y^T on (B_out, B_in)
    let lb: Vec<CMatrix> = (0..nb * ny)
        .map(|by| linalg::tensor(&z.b.povm[by / ny], &tb[by % ny]))
        .collect();
    let nbig = dao * dai * dbo * dbi;
    let mut w = CMatrix::zeros(nbig, nbig);
    for a in 0..na {
        for (x, tax) in ta.iter().enumerate() {
            let mut gsum = CMatrix::zeros(dbo * dbi, dbo * dbi);
            let mut any = false;
            for b in 0..nb {
                for y in 0..ny {
                    let f = g.payoff.get(a, b, x, y);
                    if f != 0.0 {
                        gsum.add_scaled(&lb[b * ny + y], f);
                        any = true;
                    }
                }
            }
            if any {
                let k = linalg::tensor(&z.a.povm[a], tax);
                w.add_scaled(&linalg::tensor(&k, &gsum), 1.0);
            }
        }
    }
    // (A_out, A_in, B_out, B_in) -> (A_out, B_out, A_in, B_in)
    linalg::permute_factors(&w, &[dao, dai, dbo, dbi], &[0, 2, 1, 3]).expect("dims")
}

/// Apply the 4 per-index matrices `m[k]` to a flat `[a][b][x][y]` tensor.
fn mode_products(v: &[f64], dims: [usize; 4], m: &[DMatrix<f64>; 4]) -> Vec<f64> {
    let mut cur = v.to_vec();
    for k in 0..4 {
        let mut next = vec![0.0; cur.len()];
        let stride: usize = dims[k + 1..].iter().product();
        let n = dims[k];
        let outer = cur.len() / (n * stride);
        for o in 0..outer {
            for i in 0..n {
                for s in 0..stride {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += m[k][(i, j)] * cur[(o * n + j) * stride + s];
                    }
                    next[(o * n + i) * stride + s] = acc;
                }
            }
        }
        cur = next;
    }
    cur
}

/// Game whose operator is the orthogonal projection of `w` onto the
/// analyzer's span, with payoff from dual-frame coefficients.
pub fn game_from_operator(w: &CMatrix, wiring: &PartyWiring, analyzer: Analyzer) -> Result<Game> {
    let n = wiring.dim_out() * wiring.dim_in();
    if !w.is_square() || w.rows() != n {
        return Err(LosrError::DimensionMismatch(format!(
            "operator of size {} for wiring {}",
            w.rows(),
            wiring
        )));
    }
    let herm = w.hermiticity_error();
    if herm > 1e-9 * w.max_abs().max(1.0) {
        return Err(LosrError::NotHermitian(herm));
    }
    analyzer.check(wiring)?;
    let j = ChoiOperator::new_unchecked(w.hermitian_part(), wiring.dim_out(), wiring.dim_in());
    let v = raw_correlations(&analyzer, &j)?;
    let grams = [
        linalg::real_pinv(&gram(&analyzer.a.povm)),
        linalg::real_pinv(&gram(&analyzer.b.povm)),
        linalg::real_pinv(&gram(&analyzer.a.preparations)),
        linalg::real_pinv(&gram(&analyzer.b.preparations)),
    ];
    let dims = analyzer.counts();
    let f = mode_products(v.flat(), dims, &grams);
    Game::new(*wiring, analyzer, PayoffTable::from_flat(dims, f)?)
}

/// Game on states with value `Tr(W rho)` on `from_state(rho)`.
pub fn witness_game_on_states(w: &CMatrix, d_a: usize, d_b: usize) -> Result<Game> {
    if !w.is_square() || w.rows() != d_a * d_b {
        return Err(LosrError::DimensionMismatch(format!(
            "witness of size {} for dims {}x{}",
            w.rows(),
            d_a,
            d_b
        )));
    }
    let herm = w.hermiticity_error();
    if herm > 1e-9 * w.max_abs().max(1.0) {
        return Err(LosrError::NotHermitian(herm));
    }
    let wiring = PartyWiring::new(
        PartySystems::new(SystemType::TRIVIAL, SystemType::new(SystemKind::Quantum, d_a)?),
        PartySystems::new(SystemType::TRIVIAL, SystemType::new(SystemKind::Quantum, d_b)?),
    );
    game_from_operator(w, &wiring, Analyzer::default_for(&wiring))
}

/// `W_T` with `Tr(J W_T) = Tr(t(J) W)` for every resource `J` of wiring `w`.
pub fn adjoint_operator(t: &LosrTransform, w: &PartyWiring, op: &CMatrix) -> Result<CMatrix> {
    let branches = t.instantiate(w)?;
    let ia = party_ids(Party::A);
    let ib = party_ids(Party::B);
    let out = PartyWiring::new(branches[0].1.new_systems(), branches[0].2.new_systems());
    let [dao, dbo, dai, dbi] = out.dims();
    let wt = Labeled::new(
        op.transpose(),
        vec![(ia.new_out, dao), (ib.new_out, dbo), (ia.new_in, dai), (ib.new_in, dbi)],
    )?;
    let n = w.dim_out() * w.dim_in();
    let mut acc = CMatrix::zeros(n, n);
    for (p, ca, cb) in &branches {
        let l = wt
            .link(&ca.post_labeled(ia))?
            .link(&ca.pre_labeled(ia))?
            .link(&cb.post_labeled(ib))?
            .link(&cb.pre_labeled(ib))?
            .reorder(&[ia.res_out, ib.res_out, ia.res_in, ib.res_in])?;
        acc.add_scaled(&l.op.transpose(), *p);
    }
    Ok(acc)
}

/// Largest Frobenius error of `dec(enc(r))` against `r` on seeded probes of wiring `w`.
pub fn decoder_error(enc: &LosrTransform, dec: &LosrTransform, w: &PartyWiring) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_dec0);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let r = random::resource(w, 2, &mut rng)?;
        let back = transforms::apply(dec, &transforms::apply(enc, &r)?)?;
        if back.wiring().dims() != w.dims() {
            return Err(LosrError::TypeMismatch(format!(
                "decoder returns {}, expected {}",
                back.wiring(),
                w
            )));
        }
        worst = worst.max(back.matrix().dist(r.matrix()));
    }
    Ok(worst)
}

/// Game on `enc`'s output type with `G_T(E) = g(dec(E))`. The decoder must
/// invert the encoder on a probe set.
pub fn pushforward(g: &Game, enc: &LosrTransform, dec: &LosrTransform) -> Result<Game> {
    let err = decoder_error(enc, dec, &g.wiring)?;
    if err > 1e-8 {
        return Err(LosrError::UnverifiedDecoder(err));
    }
    let target = enc.output_wiring(&g.wiring)?;
    let back = dec.output_wiring(&target)?;
    if back.dims() != g.wiring.dims() {
        return Err(LosrError::TypeMismatch(format!(
            "decoder maps {} to {}, game needs {}",
            target, back, g.wiring
        )));
    }
    let wt = adjoint_operator(dec, &target, &game_operator(g))?;
    game_from_operator(&wt, &target, Analyzer::default_for(&target))
}

/// Semiquantum encoder/decoder pair for every quantum output in `w`.
pub fn sq_pair(w: &PartyWiring) -> (LosrTransform, LosrTransform) {
    use crate::transforms::LocalOp;
    let op = |s: &PartySystems, enc: bool| {
        if s.output.is_quantum() {
            let d = s.output.dim();
            if enc {
                LocalOp::SqEncode { d }
            } else {
                LocalOp::SqDecode { d }
            }
        } else {
            LocalOp::Identity
        }
    };
    (
        LosrTransform::product(op(&w.a, true), op(&w.b, true)),
        LosrTransform::product(op(&w.a, false), op(&w.b, false)),
    )
}

/// Mixed-radix counter over `len` digits of radix `radix`.
fn next_digits(d: &mut [usize], radix: usize) -> bool {
    for v in d.iter_mut().rev() {
        *v += 1;
        if *v < radix {
            return true;
        }
        *v = 0;
    }
    false
}

const MAX_WIRINGS: u128 = 20_000_000;

/// Optimal value over shared randomness and deterministic local wirings
/// `x = f(x')`, `a' = g(a, x')`. Both types must be free of quantum systems.
pub fn performance_exact_classical(g: &Game, r: &Resource) -> Result<f64> {
    if !g.wiring.is_fully_classical() || !r.wiring().is_fully_classical() {
        return Err(LosrError::TypeMismatch(
            "exact performance needs classical or trivial systems only".into(),
        ));
    }
    let [na2, nb2, nx2, ny2] = g.wiring.dims();
    let [na, nb, nx, ny] = r.wiring().dims();
    let w = game_operator(g);
    let raw: Vec<f64> = w.diagonal_re();
    let rr = |a2: usize, b2: usize, x2: usize, y2: usize| raw[((a2 * nb2 + b2) * nx2 + x2) * ny2 + y2];
    let p = r.matrix().diagonal_re();
    let pp = |a: usize, b: usize, x: usize, y: usize| p[((a * nb + b) * nx + x) * ny + y];

    let count = (nx as u128).pow(nx2 as u32) * (na2 as u128).pow((na * nx2) as u32);
    if count > MAX_WIRINGS {
        return Err(LosrError::TooLarge(format!("{} wirings for party A", count)));
    }
    let mut fs = Vec::new();
    let mut f = vec![0usize; nx2];
    loop {
        fs.push(f.clone());
        if !next_digits(&mut f, nx) {
            break;
        }
    }
    let mut gs = Vec::new();
    let mut ga = vec![0usize; na * nx2];
    loop {
        gs.push(ga.clone());
        if !next_digits(&mut ga, na2) {
            break;
        }
    }
    let best = fs
        .par_iter()
        .map(|f| {
            let mut best = f64::NEG_INFINITY;
            for ga in &gs {
                let mut total = 0.0;
                for y2 in 0..ny2 {
                    let mut by_y = f64::NEG_INFINITY;
                    for y in 0..ny {
                        let mut s = 0.0;
                        for b in 0..nb {
                            let mut bb = f64::NEG_INFINITY;
                            for b2 in 0..nb2 {
                                let mut c = 0.0;
                                for x2 in 0..nx2 {
                                    for a in 0..na {
                                        c += rr(ga[a * nx2 + x2], b2, x2, y2) * pp(a, b, f[x2], y);
                                    }
                                }
                                bb = bb.max(c);
                            }
                            s += bb;
                        }
                        by_y = by_y.max(s);
                    }
                    total += by_y;
                }
                best = best.max(total);
            }
            best
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::states;
    use crate::resources::{boxes, from_box, from_state};
    use crate::transforms::{apply, measure_with_setting, sq_encode, LocalOp};
    use std::f64::consts::PI;

    #[test]
    fn tomographic_sets_span() {
        for d in 2..5 {
            let s = tomographic_states(d);
            assert_eq!(s.len(), d * d);
            assert_eq!(span_rank(&s), d * d);
            let m = tomographic_povm(d);
            assert_eq!(span_rank(&m), d * d);
            let mut sum = CMatrix::zeros(d, d);
            for e in &m {
                sum.add_scaled(e, 1.0);
            }
            assert!(sum.dist(&CMatrix::identity(d)) < 1e-12);
        }
    }

    #[test]
    fn chsh_values() {
        let g = chsh();
        let pr = from_box(&boxes::pr_box()).unwrap();
        assert_eq!(evaluate(&g, &pr).unwrap(), 1.0);
        let mut best: f64 = 0.0;
        for code in 0..16usize {
            let alpha = [code & 1, (code >> 1) & 1];
            let beta = [(code >> 2) & 1, (code >> 3) & 1];
            let r = from_box(&boxes::deterministic(2, 2, &alpha, &beta)).unwrap();
            best = best.max(evaluate(&g, &r).unwrap());
        }
        assert!((best - 0.75).abs() < 1e-15);
    }

    #[test]
    fn chsh_on_phi_plus() {
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        let t = LosrTransform::product(
            LocalOp::MeasureWithSetting {
                povms: vec![boxes::xz_projective(0.0), boxes::xz_projective(PI / 2.0)],
            },
            LocalOp::MeasureWithSetting {
                povms: vec![boxes::xz_projective(PI / 4.0), boxes::xz_projective(-PI / 4.0)],
            },
        );
        let v = evaluate(&chsh(), &apply(&t, &r).unwrap()).unwrap();
        assert!((v - (PI / 8.0).cos().powi(2)).abs() < 1e-12);
        assert!(measure_with_setting(Party::A, vec![vec![CMatrix::identity(3)]]).is_ok());
    }

    #[test]
    fn game_operator_matches_evaluate() {
        let r = from_box(&boxes::pr_box()).unwrap();
        let g = chsh();
        let w = game_operator(&g);
        assert!((r.matrix().trace_product_re(&w) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn witness_examples() {
        let phi = states::phi_plus();
        let r = from_state(&phi, 2, 2).unwrap();
        let g = witness_game_on_states(&CMatrix::identity(4), 2, 2).unwrap();
        assert!((evaluate(&g, &r).unwrap() - 1.0).abs() < 1e-10);
        let g = witness_game_on_states(&phi, 2, 2).unwrap();
        assert!((evaluate(&g, &r).unwrap() - 1.0).abs() < 1e-10);
        let mut swap = CMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                swap[(i * 2 + j, j * 2 + i)] = C64::new(1.0, 0.0);
            }
        }
        // |Phi+> is symmetric, so SWAP leaves it invariant
        let g = witness_game_on_states(&swap, 2, 2).unwrap();
        assert!((evaluate(&g, &r).unwrap() - 1.0).abs() < 1e-10);
        let singlet = from_state(&states::singlet(), 2, 2).unwrap();
        assert!((evaluate(&g, &singlet).unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn non_hermitian_witness_rejected() {
        let mut w = CMatrix::identity(4);
        w[(0, 1)] = C64::new(1.0, 0.0);
        assert!(witness_game_on_states(&w, 2, 2).is_err());
    }

    #[test]
    fn type_mismatch_rejected() {
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        let err = evaluate(&chsh(), &r).unwrap_err();
        assert!(err.to_string().contains("encoder"));
    }

    #[test]
    fn pushforward_of_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random::hermitian(4, &mut rng);
        let g = witness_game_on_states(&w, 2, 2).unwrap();
        let (enc, dec) = sq_pair(g.wiring());
        let pg = pushforward(&g, &enc, &dec).unwrap();
        assert_eq!(pg.global_type().to_string(), "QQ->CC");
        let rho = random::density_matrix(4, &mut rng);
        let r = from_state(&rho, 2, 2).unwrap();
        let v = evaluate(&pg, &apply(&enc, &r).unwrap()).unwrap();
        assert!((v - w.trace_product_re(&rho)).abs() < 1e-8);
    }

    #[test]
    fn pushforward_rejects_bad_decoder() {
        let g = witness_game_on_states(&CMatrix::identity(4), 2, 2).unwrap();
        let enc = sq_encode(Party::A, 2);
        let err = pushforward(&g, &enc, &LosrTransform::identity()).unwrap_err();
        assert!(matches!(err, LosrError::TypeMismatch(_) | LosrError::UnverifiedDecoder(_)));
    }

    #[test]
    fn exact_performance_chsh() {
        let g = chsh();
        let pr = from_box(&boxes::pr_box()).unwrap();
        assert!((performance_exact_classical(&g, &pr).unwrap() - 1.0).abs() < 1e-12);
        let local = from_box(&boxes::deterministic(2, 2, &[0, 1], &[1, 1])).unwrap();
        assert!((performance_exact_classical(&g, &local).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn game_json_round_trip() {
        let g = chsh();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.starts_with(r#"{"type":"CC->CC","analyzer":"#));
        let back: Game = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }
}
