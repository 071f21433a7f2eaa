//! The trivial / classical / quantum type algebra and the encodability order
//! over partition-types.
//!
//! The order is derived from a handful of base facts (embeddings, the two
//! top-class results for `Q->C`, and the two separations between states and
//! boxes) closed under transitivity. [`table_fixture`] holds the expected
//! grid as literal data so the derivation can be checked against it.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{LosrError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    #[serde(rename = "I")]
    Trivial,
    #[serde(rename = "C")]
    Classical,
    #[serde(rename = "Q")]
    Quantum,
}

impl SystemKind {
    pub const ALL: [SystemKind; 3] = [SystemKind::Trivial, SystemKind::Classical, SystemKind::Quantum];

    pub fn symbol(self) -> char {
        match self {
            SystemKind::Trivial => 'I',
            SystemKind::Classical => 'C',
            SystemKind::Quantum => 'Q',
        }
    }

    pub fn from_symbol(c: char) -> Result<Self> {
        match c {
            'I' => Ok(SystemKind::Trivial),
            'C' => Ok(SystemKind::Classical),
            'Q' => Ok(SystemKind::Quantum),
            other => Err(LosrError::Parse(format!("unknown system kind '{}'", other))),
        }
    }
}

/// Quantum systems embed classical ones, which embed trivial ones.
pub fn embeds(a: SystemKind, b: SystemKind) -> bool {
    a >= b
}

/// A system with its kind and dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SystemType {
    kind: SystemKind,
    dim: usize,
}

impl SystemType {
    pub fn new(kind: SystemKind, dim: usize) -> Result<Self> {
        match kind {
            SystemKind::Trivial if dim != 1 => Err(LosrError::InvalidType(format!(
                "trivial system must have dim 1, got {}",
                dim
            ))),
            SystemKind::Classical | SystemKind::Quantum if dim < 2 => Err(LosrError::InvalidType(
                format!("{:?} system needs dim >= 2, got {}", kind, dim),
            )),
            _ => Ok(SystemType { kind, dim }),
        }
    }

    pub const TRIVIAL: SystemType = SystemType {
        kind: SystemKind::Trivial,
        dim: 1,
    };

    pub fn classical(dim: usize) -> Self {
        Self::new(SystemKind::Classical, dim).expect("classical dim >= 2")
    }

    pub fn quantum(dim: usize) -> Self {
        Self::new(SystemKind::Quantum, dim).expect("quantum dim >= 2")
    }

    /// Least expressive type of the given kind that fits `dim`; dim 1 is always trivial.
    pub fn at_least(kind: SystemKind, dim: usize) -> Self {
        if dim == 1 {
            Self::TRIVIAL
        } else {
            SystemType {
                kind: kind.max(SystemKind::Classical),
                dim,
            }
        }
    }

    /// Group two systems into one factor (`self` major).
    pub fn group(self, other: SystemType) -> Self {
        Self::at_least(self.kind.max(other.kind), self.dim * other.dim)
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_classical(&self) -> bool {
        self.kind == SystemKind::Classical
    }

    pub fn is_quantum(&self) -> bool {
        self.kind == SystemKind::Quantum
    }
}

impl fmt::Display for SystemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.symbol(), self.dim)
    }
}

impl FromStr for SystemType {
    type Err = LosrError;

    /// `<kind>:<dim>`, or a bare `I`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "I" {
            return Ok(Self::TRIVIAL);
        }
        let (k, d) = s
            .split_once(':')
            .ok_or_else(|| LosrError::Parse(format!("system '{}' is not <kind>:<dim>", s)))?;
        let mut chars = k.chars();
        let kind = match (chars.next(), chars.next()) {
            (Some(c), None) => SystemKind::from_symbol(c)?,
            _ => return Err(LosrError::Parse(format!("bad system kind '{}'", k))),
        };
        let dim: usize = d
            .parse()
            .map_err(|_| LosrError::Parse(format!("bad system dimension '{}'", d)))?;
        Self::new(kind, dim)
    }
}

impl Serialize for SystemType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SystemType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One party's input -> output kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PartitionType {
    pub input: SystemKind,
    pub output: SystemKind,
}

impl PartitionType {
    pub const fn new(input: SystemKind, output: SystemKind) -> Self {
        PartitionType { input, output }
    }

    /// All nine partition-types in the order I->I, I->C, I->Q, C->I, ...
    pub fn all() -> [PartitionType; 9] {
        let mut out = [PartitionType::new(SystemKind::Trivial, SystemKind::Trivial); 9];
        for (i, x) in SystemKind::ALL.iter().enumerate() {
            for (j, y) in SystemKind::ALL.iter().enumerate() {
                out[3 * i + j] = PartitionType::new(*x, *y);
            }
        }
        out
    }

    /// The six nontrivial partition-types in table order.
    pub fn nontrivial() -> Vec<PartitionType> {
        Self::all()
            .into_iter()
            .filter(|t| !is_trivial_partition(*t))
            .collect()
    }

    fn index(self) -> usize {
        3 * self.input as usize + self.output as usize
    }
}

impl fmt::Display for PartitionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.input.symbol(), self.output.symbol())
    }
}

impl FromStr for PartitionType {
    type Err = LosrError;
    fn from_str(s: &str) -> Result<Self> {
        let g: GlobalType = s.parse()?;
        match g.parties() {
            [p] => Ok(*p),
            _ => Err(LosrError::Parse(format!("'{}' is not a single partition-type", s))),
        }
    }
}

/// A partition-type whose output is trivial never carries nonclassicality.
pub fn is_trivial_partition(t: PartitionType) -> bool {
    t.output == SystemKind::Trivial
}

/// Ordered partition-types, one per party.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GlobalType(Vec<PartitionType>);

impl GlobalType {
    pub fn new(parties: Vec<PartitionType>) -> Result<Self> {
        if parties.is_empty() {
            return Err(LosrError::InvalidType("global type needs at least one party".into()));
        }
        Ok(GlobalType(parties))
    }

    pub fn parties(&self) -> &[PartitionType] {
        &self.0
    }
}

impl fmt::Display for GlobalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.input.symbol())?;
        }
        write!(f, "->")?;
        for p in &self.0 {
            write!(f, "{}", p.output.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for GlobalType {
    type Err = LosrError;

    /// `<X>+ "->" <Y>+` with equal lengths.
    fn from_str(s: &str) -> Result<Self> {
        let (ins, outs) = s
            .trim()
            .split_once("->")
            .ok_or_else(|| LosrError::Parse(format!("type '{}' lacks '->'", s)))?;
        let ins: Vec<SystemKind> = ins.chars().map(SystemKind::from_symbol).collect::<Result<_>>()?;
        let outs: Vec<SystemKind> = outs.chars().map(SystemKind::from_symbol).collect::<Result<_>>()?;
        if ins.is_empty() || ins.len() != outs.len() {
            return Err(LosrError::Parse(format!(
                "type '{}' must have equally many (>= 1) inputs and outputs",
                s
            )));
        }
        GlobalType::new(
            ins.into_iter()
                .zip(outs)
                .map(|(i, o)| PartitionType::new(i, o))
                .collect(),
        )
    }
}

impl Serialize for GlobalType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GlobalType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
    Unknown,
}

/// Where an encodability verdict comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Embed,
    WernerStates,
    LosrCannotEntangle,
    Trans,
    SemiquantumGames,
    UniversalEncoder,
    Open,
}

impl Provenance {
    pub fn key(self) -> &'static str {
        match self {
            Provenance::Embed => "embed",
            Provenance::WernerStates => "werner-states",
            Provenance::LosrCannotEntangle => "losr-cannot-entangle",
            Provenance::Trans => "trans",
            Provenance::SemiquantumGames => "semiquantum-games",
            Provenance::UniversalEncoder => "universal-encoder",
            Provenance::Open => "open",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeVerdict {
    pub value: Verdict,
    pub provenance: Provenance,
}

impl EncodeVerdict {
    const fn new(value: Verdict, provenance: Provenance) -> Self {
        EncodeVerdict { value, provenance }
    }
}

impl fmt::Display for EncodeVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{}", self.value, self.provenance.key())
    }
}

type Grid = [[Option<EncodeVerdict>; 9]; 9];

fn derive_grid() -> Grid {
    use SystemKind::*;
    let pt = PartitionType::new;
    let mut g: Grid = [[None; 9]; 9];
    let all = PartitionType::all();

    // Embeddings, with the output-trivial types forming the bottom class.
    for &hi in &all {
        for &lo in &all {
            let embedded = embeds(hi.input, lo.input) && embeds(hi.output, lo.output);
            if embedded || is_trivial_partition(lo) {
                g[hi.index()][lo.index()] = Some(EncodeVerdict::new(Verdict::Yes, Provenance::Embed));
            } else if is_trivial_partition(hi) {
                // the bottom class only holds free resources
                g[hi.index()][lo.index()] = Some(EncodeVerdict::new(Verdict::No, Provenance::Embed));
            }
        }
    }
    let mut set = |hi: PartitionType, lo: PartitionType, v: Verdict, p: Provenance| {
        g[hi.index()][lo.index()] = Some(EncodeVerdict::new(v, p));
    };
    // Semiquantum encoding of states, and the universal encoder.
    set(pt(Quantum, Classical), pt(Trivial, Quantum), Verdict::Yes, Provenance::SemiquantumGames);
    set(pt(Quantum, Classical), pt(Classical, Quantum), Verdict::Yes, Provenance::UniversalEncoder);
    set(pt(Quantum, Classical), pt(Quantum, Quantum), Verdict::Yes, Provenance::UniversalEncoder);
    // Separations between states and boxes.
    set(pt(Classical, Classical), pt(Trivial, Quantum), Verdict::No, Provenance::WernerStates);
    set(pt(Trivial, Quantum), pt(Classical, Classical), Verdict::No, Provenance::LosrCannotEntangle);

    // Close under transitivity until nothing changes.
    loop {
        let mut changed = false;
        for a in 0..9 {
            for b in 0..9 {
                for c in 0..9 {
                    let ab = g[a][b].map(|v| v.value);
                    let bc = g[b][c].map(|v| v.value);
                    let ac = g[a][c].map(|v| v.value);
                    // a >= b, b >= c  =>  a >= c
                    if ab == Some(Verdict::Yes) && bc == Some(Verdict::Yes) && ac.is_none() {
                        g[a][c] = Some(EncodeVerdict::new(Verdict::Yes, Provenance::Trans));
                        changed = true;
                    }
                    // a >= b, not a >= c  =>  not b >= c
                    if ab == Some(Verdict::Yes) && ac == Some(Verdict::No) && bc.is_none() {
                        g[b][c] = Some(EncodeVerdict::new(Verdict::No, Provenance::Trans));
                        changed = true;
                    }
                    // b >= c, not a >= c  =>  not a >= b
                    if bc == Some(Verdict::Yes) && ac == Some(Verdict::No) && ab.is_none() {
                        g[a][b] = Some(EncodeVerdict::new(Verdict::No, Provenance::Trans));
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    g
}

fn grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(derive_grid)
}

/// Does partition-type `t` encode the nonclassicality of partition-type `u`?
pub fn partition_encodes(t: PartitionType, u: PartitionType) -> EncodeVerdict {
    grid()[t.index()][u.index()]
        .unwrap_or(EncodeVerdict::new(Verdict::Unknown, Provenance::Open))
}

/// Sufficient partition-wise test for the order over global types.
pub fn global_encodes_sufficient(t: &GlobalType, u: &GlobalType) -> Result<EncodeVerdict> {
    if t.parties().len() != u.parties().len() {
        return Err(LosrError::TypeMismatch(format!(
            "{} has {} parties, {} has {}",
            t,
            t.parties().len(),
            u,
            u.parties().len()
        )));
    }
    use SystemKind::*;
    let state = PartitionType::new(Trivial, Quantum);
    let boxp = PartitionType::new(Classical, Classical);
    let all_of = |g: &GlobalType, p: PartitionType| g.parties().iter().all(|q| *q == p) && g.parties().len() == 2;
    if all_of(t, boxp) && all_of(u, state) {
        return Ok(EncodeVerdict::new(Verdict::No, Provenance::WernerStates));
    }
    if all_of(t, state) && all_of(u, boxp) {
        return Ok(EncodeVerdict::new(Verdict::No, Provenance::LosrCannotEntangle));
    }
    let cells: Vec<EncodeVerdict> = t
        .parties()
        .iter()
        .zip(u.parties())
        .map(|(a, b)| partition_encodes(*a, *b))
        .collect();
    if cells.iter().all(|c| c.value == Verdict::Yes) {
        let prov = cells
            .iter()
            .map(|c| c.provenance)
            .find(|p| *p != Provenance::Embed)
            .unwrap_or(Provenance::Embed);
        return Ok(EncodeVerdict::new(Verdict::Yes, prov));
    }
    Ok(EncodeVerdict::new(Verdict::Unknown, Provenance::Open))
}

/// Literal encodability grid over the six nontrivial partition-types.
/// `TABLE[i][j]` answers "does column type `j` encode row type `i`", both
/// indexed in [`PartitionType::nontrivial`] order (I->C, I->Q, C->C, C->Q, Q->C, Q->Q).
pub fn table_fixture() -> [[EncodeVerdict; 6]; 6] {
    use Provenance::*;
    use Verdict::*;
    let y = |p| EncodeVerdict::new(Yes, p);
    let n = |p| EncodeVerdict::new(No, p);
    let u = EncodeVerdict::new(Unknown, Open);
    [
        // row I->C
        [y(Embed), y(Embed), y(Embed), y(Embed), y(Embed), y(Embed)],
        // row I->Q
        [n(Trans), y(Embed), n(WernerStates), y(Embed), y(SemiquantumGames), y(Embed)],
        // row C->C
        [n(Trans), n(LosrCannotEntangle), y(Embed), y(Embed), y(Embed), y(Embed)],
        // row C->Q
        [n(Trans), n(Trans), n(Trans), y(Embed), y(UniversalEncoder), y(Embed)],
        // row Q->C
        [n(Trans), n(Trans), n(Trans), u, y(Embed), y(Embed)],
        // row Q->Q
        [n(Trans), n(Trans), n(Trans), u, y(UniversalEncoder), y(Embed)],
    ]
}
