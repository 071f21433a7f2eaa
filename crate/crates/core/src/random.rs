//! Seeded random states, channels and resources for tests and benchmarks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::choi::{ChoiOperator, Labeled};
use crate::error::Result;
use crate::linalg::{self, CMatrix, C64};
use crate::resources::{PartyWiring, Resource, A_IN, A_OUT, B_IN, B_OUT};
use crate::types::SystemKind;

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Complex Ginibre matrix with i.i.d. standard normal entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-distributed unitary (QR of a Ginibre matrix with phase fix).
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(d, d, rng).to_nalgebra();
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = DMatrix::<C64>::zeros(d, d);
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            u[(i, j)] = q[(i, j)] * phase;
        }
    }
    CMatrix::from_nalgebra(&u)
}

/// Haar-random unit vector.
pub fn pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let v: Vec<C64> = (0..d).map(|_| gaussian(rng)).collect();
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / n).collect()
}

/// Hilbert-Schmidt random density matrix of full rank.
pub fn density_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(d, d, rng);
    let rho = g.matmul(&g.adjoint()).hermitian_part();
    let tr = rho.trace().re;
    rho.scale(1.0 / tr)
}

/// Random Hermitian matrix with Gaussian entries.
pub fn hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    ginibre(d, d, rng).hermitian_part()
}

/// Random isometry `d_in -> d_out`, requires `d_out >= d_in`.
pub fn isometry<R: Rng + ?Sized>(d_out: usize, d_in: usize, rng: &mut R) -> CMatrix {
    assert!(d_out >= d_in, "isometry needs d_out >= d_in");
    let u = haar_unitary(d_out, rng);
    CMatrix::from_fn(d_out, d_in, |i, j| u[(i, j)])
}

/// Random CPTP map from a random Stinespring isometry with environment of dim `env`.
pub fn channel<R: Rng + ?Sized>(d_out: usize, d_in: usize, env: usize, rng: &mut R) -> ChoiOperator {
    let env = env.max(d_in.div_ceil(d_out)).max(1);
    let v = isometry(d_out * env, d_in, rng);
    let kraus: Vec<CMatrix> = (0..env)
        .map(|e| CMatrix::from_fn(d_out, d_in, |i, j| v[(i * env + e, j)]))
        .collect();
    ChoiOperator::from_kraus(&kraus).expect("square Kraus set")
}

/// Common-cause resource: a random shared state of local dims `(e, e)` fed into
/// random local channels, then dephased on classical factors.
pub fn resource<R: Rng + ?Sized>(wiring: &PartyWiring, e: usize, rng: &mut R) -> Result<Resource> {
    const E: u32 = 100;
    const F: u32 = 101;
    let [dao, dbo, dai, dbi] = wiring.dims();
    let shared = Labeled::new(density_matrix(e * e, rng), vec![(E, e), (F, e)])?;
    let ca = channel(dao, dai * e, 2, rng);
    let cb = channel(dbo, dbi * e, 2, rng);
    let la = Labeled::new(ca.into_matrix(), vec![(A_OUT, dao), (A_IN, dai), (E, e)])?;
    let lb = Labeled::new(cb.into_matrix(), vec![(B_OUT, dbo), (B_IN, dbi), (F, e)])?;
    let j = shared.link(&la)?.link(&lb)?.reorder(&[A_OUT, B_OUT, A_IN, B_IN])?;
    let dims = wiring.dims();
    let mut m = j.op;
    for (k, s) in wiring.systems().iter().enumerate() {
        if s.kind() == SystemKind::Classical {
            m = linalg::dephase(&m, &dims, k)?;
        }
    }
    Resource::new_unchecked(*wiring, m.hermitian_part())
}
