//! See-saw lower bounds on a game's value over LOSR transformations of a resource.
//!
//! A product strategy is four channel blocks (pre and post stage per party).
//! The objective is linear in each block, so blocks are improved one at a
//! time: exactly when the block's inputs are classical, by projected gradient
//! otherwise. Shared randomness cannot beat the best product strategy, so
//! restarts are independent and the best one is kept. The reported value is
//! re-evaluated on the transformed resource.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choi::{link_all, Labeled, SysId};
use crate::error::{LosrError, Result};
use crate::games::{self, Game};
use crate::linalg::{self, CMatrix};
use crate::random;
use crate::resources::{Party, PartySystems, Resource};
use crate::transforms::{self, party_ids, LocalComb, LocalOp, LosrTransform};
use crate::types::{SystemKind, SystemType};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeesawConfig {
    pub mem_a: SystemType,
    pub mem_b: SystemType,
    pub restarts: usize,
    /// Rounds over all four blocks.
    pub iters: usize,
    /// Projected-gradient steps per block update.
    pub inner_iters: usize,
    pub seed: u64,
    /// Initial step, relative to the block's norm.
    pub step: f64,
    /// Stop a restart once a round improves by less than this.
    pub stall: f64,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        SeesawConfig {
            mem_a: SystemType::TRIVIAL,
            mem_b: SystemType::TRIVIAL,
            restarts: 8,
            iters: 200,
            inner_iters: 10,
            seed: 0,
            step: 1.0,
            stall: 1e-7,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeesawResult {
    /// Value of the game on `transform(resource)`.
    pub lower_bound: f64,
    pub transform: LosrTransform,
    /// Best value after each round of the winning restart.
    pub history: Vec<f64>,
    /// Final value of every restart.
    pub restart_values: Vec<f64>,
}

/// One CPTP block with its first `n_out` factors as outputs.
#[derive(Clone, Debug)]
struct Block {
    systems: Vec<(SysId, usize)>,
    kinds: Vec<SystemKind>,
    n_out: usize,
    op: CMatrix,
}

impl Block {
    fn dims(&self) -> Vec<usize> {
        self.systems.iter().map(|s| s.1).collect()
    }

    fn d_out(&self) -> usize {
        self.systems[..self.n_out].iter().map(|s| s.1).product()
    }

    fn d_in(&self) -> usize {
        self.systems[self.n_out..].iter().map(|s| s.1).product()
    }

    fn classical_inputs(&self) -> bool {
        self.kinds[self.n_out..].iter().all(|k| *k != SystemKind::Quantum)
    }

    fn labeled(&self) -> Labeled {
        Labeled {
            op: self.op.clone(),
            systems: self.systems.clone(),
        }
    }

    fn dephase(&self, m: &CMatrix) -> Result<CMatrix> {
        let dims = self.dims();
        let mut m = m.clone();
        for (k, kind) in self.kinds.iter().enumerate() {
            if *kind == SystemKind::Classical {
                m = linalg::dephase(&m, &dims, k)?;
            }
        }
        Ok(m)
    }

    fn partial_out(&self, m: &CMatrix) -> Result<CMatrix> {
        let keep: Vec<usize> = (self.n_out..self.systems.len()).collect();
        linalg::partial_trace(m, &self.dims(), &keep)
    }

    /// Orthogonal projection onto dephased operators with `Tr_out X = I`.
    fn project_affine(&self, m: &CMatrix) -> Result<CMatrix> {
        let m = self.dephase(&m.hermitian_part())?;
        let mut s = self.partial_out(&m)?;
        s.add_scaled(&CMatrix::identity(self.d_in()), -1.0);
        let mut out = m;
        out.add_scaled(&linalg::tensor(&CMatrix::identity(self.d_out()), &s), -1.0 / self.d_out() as f64);
        Ok(out)
    }

    /// Exact feasibility: PSD, dephased, `Tr_out X = I`.
    fn repair(&self, m: &CMatrix) -> Result<CMatrix> {
        let mut x = self.dephase(&linalg::project_psd(&m.hermitian_part())?)?;
        let s = self.partial_out(&x)?;
        let a = match linalg::inv_sqrt(&s) {
            Ok(a) => a,
            Err(_) => {
                let eps = 1e-9;
                x = x.scale(1.0 - eps);
                x.add_scaled(&CMatrix::identity(x.rows()), eps / self.d_out() as f64);
                linalg::inv_sqrt(&self.partial_out(&x)?)?
            }
        };
        let big = linalg::tensor(&CMatrix::identity(self.d_out()), &a);
        Ok(big.matmul(&x).matmul(&big).hermitian_part())
    }

    /// Dykstra projection onto the feasible set, then exact repair.
    fn project(&self, z: &CMatrix, rounds: usize) -> Result<CMatrix> {
        let n = z.rows();
        let mut y = z.clone();
        let mut p = CMatrix::zeros(n, n);
        let mut q = CMatrix::zeros(n, n);
        let scale = z.frobenius_norm().max(1.0);
        for _ in 0..rounds {
            let a = self.project_affine(&(&y + &p))?;
            p = &(&y + &p) - &a;
            let yk = linalg::project_psd(&(&a + &q))?;
            q = &(&a + &q) - &yk;
            let moved = yk.dist(&y);
            y = yk;
            if moved < 1e-9 * scale {
                break;
            }
        }
        self.repair(&y)
    }

    /// Block maximizer of `Tr(X G)` when every input is classical.
    fn exact_max(&self, g: &CMatrix) -> Result<CMatrix> {
        let g = self.dephase(&g.hermitian_part())?;
        let (d_out, d_in) = (self.d_out(), self.d_in());
        let mut x = CMatrix::zeros(d_out * d_in, d_out * d_in);
        for i in 0..d_in {
            let gi = CMatrix::from_fn(d_out, d_out, |o, o2| g[(o * d_in + i, o2 * d_in + i)]);
            let (_, vecs) = linalg::eigh(&gi)?;
            let v = vecs.column(d_out - 1);
            for o in 0..d_out {
                for o2 in 0..d_out {
                    x[(o * d_in + i, o2 * d_in + i)] = v[o] * v[o2].conj();
                }
            }
        }
        self.dephase(&x)
    }
}

struct Problem {
    resource: Labeled,
    wt: Labeled,
}

fn value_of(x: &CMatrix, g: &CMatrix) -> f64 {
    x.trace_product_re(g)
}

impl Problem {
    /// `G` with `Tr(X G)` the objective as a function of block `k`.
    fn gradient(&self, blocks: &[Block; 4], k: usize) -> Result<CMatrix> {
        // contract each party's own blocks first so intermediates stay small
        let party = |lo: usize| -> Result<Option<Labeled>> {
            let parts: Vec<Labeled> = (lo..lo + 2).filter(|&j| j != k).map(|j| blocks[j].labeled()).collect();
            let refs: Vec<&Labeled> = parts.iter().collect();
            Ok(if refs.is_empty() { None } else { Some(link_all(&refs)?) })
        };
        let mut acc = self.resource.clone();
        for side in [party(0)?, party(2)?].into_iter().flatten() {
            acc = acc.link(&side)?;
        }
        let ids: Vec<SysId> = blocks[k].systems.iter().map(|s| s.0).collect();
        let l = acc.link(&self.wt)?.reorder(&ids)?;
        Ok(l.op.transpose().hermitian_part())
    }
}

fn init_block<R: rand::Rng + ?Sized>(systems: Vec<(SysId, usize)>, kinds: Vec<SystemKind>, n_out: usize, rng: &mut R) -> Result<Block> {
    let mut b = Block {
        systems,
        kinds,
        n_out,
        op: CMatrix::zeros(1, 1),
    };
    let j = random::channel(b.d_out(), b.d_in(), 2, rng).into_matrix();
    b.op = b.repair(&b.dephase(&j)?)?;
    Ok(b)
}

fn party_blocks<R: rand::Rng + ?Sized>(p: Party, res: PartySystems, new: PartySystems, mem: SystemType, rng: &mut R) -> Result<(Block, Block)> {
    let ids = party_ids(p);
    let pre = init_block(
        vec![(ids.res_in, res.input.dim()), (ids.mem, mem.dim()), (ids.new_in, new.input.dim())],
        vec![res.input.kind(), mem.kind(), new.input.kind()],
        2,
        rng,
    )?;
    let post = init_block(
        vec![(ids.new_out, new.output.dim()), (ids.res_out, res.output.dim()), (ids.mem, mem.dim())],
        vec![new.output.kind(), res.output.kind(), mem.kind()],
        1,
        rng,
    )?;
    Ok((pre, post))
}

struct Run {
    value: f64,
    blocks: [Block; 4],
    history: Vec<f64>,
}

fn improve_block(prob: &Problem, blocks: &mut [Block; 4], k: usize, cfg: &SeesawConfig) -> Result<()> {
    let g = prob.gradient(blocks, k)?;
    let cur = value_of(&blocks[k].op, &g);
    if blocks[k].classical_inputs() {
        let x = blocks[k].exact_max(&g)?;
        if value_of(&x, &g) >= cur {
            blocks[k].op = x;
        }
        return Ok(());
    }
    let gn = g.frobenius_norm();
    if gn < 1e-14 {
        return Ok(());
    }
    let mut step = cfg.step * blocks[k].op.frobenius_norm().max(1.0) / gn;
    let mut best = cur;
    for _ in 0..cfg.inner_iters {
        let mut z = blocks[k].op.clone();
        z.add_scaled(&g, step);
        let x = blocks[k].project(&z, 60)?;
        let v = value_of(&x, &g);
        if v > best + 1e-13 {
            best = v;
            blocks[k].op = x;
        } else {
            step *= 0.5;
            if step * gn < 1e-10 {
                break;
            }
        }
    }
    Ok(())
}

fn run_one(prob: &Problem, g: &Game, r: &Resource, cfg: &SeesawConfig, restart: usize) -> Result<Run> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let rw = r.wiring();
    let gw = g.wiring();
    let (pa, qa) = party_blocks(Party::A, rw.a, gw.a, cfg.mem_a, &mut rng)?;
    let (pb, qb) = party_blocks(Party::B, rw.b, gw.b, cfg.mem_b, &mut rng)?;
    let mut blocks = [pa, qa, pb, qb];
    let mut history = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for _ in 0..cfg.iters {
        for k in 0..4 {
            improve_block(prob, &mut blocks, k, cfg)?;
        }
        let g0 = prob.gradient(&blocks, 0)?;
        let v = value_of(&blocks[0].op, &g0);
        history.push(v);
        if v - last < cfg.stall {
            last = last.max(v);
            break;
        }
        last = v;
    }
    Ok(Run {
        value: last,
        blocks,
        history,
    })
}

fn comb_from(res: PartySystems, new: PartySystems, mem: SystemType, pre: &Block, post: &Block) -> Result<LocalComb> {
    LocalComb::new(res, new, mem, pre.op.clone(), post.op.clone())
}

/// Best value found for `g` on LOSR transformations of `r` with the given memories.
pub fn performance_seesaw(g: &Game, r: &Resource, cfg: &SeesawConfig) -> Result<SeesawResult> {
    if cfg.restarts == 0 || cfg.iters == 0 {
        return Err(LosrError::InvalidTransform("see-saw needs at least one restart and one round".into()));
    }
    let ia = party_ids(Party::A);
    let ib = party_ids(Party::B);
    let [dao, dbo, dai, dbi] = g.wiring().dims();
    let prob = Problem {
        resource: r.labeled(),
        wt: Labeled::new(
            games::game_operator(g).transpose(),
            vec![(ia.new_out, dao), (ib.new_out, dbo), (ia.new_in, dai), (ib.new_in, dbi)],
        )?,
    };
    let runs: Vec<Run> = (0..cfg.restarts)
        .into_par_iter()
        .map(|k| run_one(&prob, g, r, cfg, k))
        .collect::<Result<_>>()?;
    let restart_values: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let best = runs
        .into_iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one restart");
    let rw = r.wiring();
    let gw = g.wiring();
    let [pa, qa, pb, qb] = &best.blocks;
    let transform = LosrTransform::product(
        LocalOp::Comb(comb_from(rw.a, gw.a, cfg.mem_a, pa, qa)?),
        LocalOp::Comb(comb_from(rw.b, gw.b, cfg.mem_b, pb, qb)?),
    );
    let lower_bound = games::evaluate(g, &transforms::apply(&transform, r)?)?;
    Ok(SeesawResult {
        lower_bound,
        transform,
        history: best.history,
        restart_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freeset::{box_is_local, MembershipVerdict};
    use crate::linalg::states;
    use crate::resources::{boxes, from_box, from_state};

    #[test]
    fn pr_box_reaches_one() {
        let r = from_box(&boxes::pr_box()).unwrap();
        let cfg = SeesawConfig {
            restarts: 4,
            ..Default::default()
        };
        let res = performance_seesaw(&games::chsh(), &r, &cfg).unwrap();
        assert!((res.lower_bound - 1.0).abs() < 1e-9, "{}", res.lower_bound);
    }

    #[test]
    fn local_box_stays_classical() {
        let r = from_box(&boxes::uniform(2, 2, 2, 2)).unwrap();
        let res = performance_seesaw(&games::chsh(), &r, &SeesawConfig::default()).unwrap();
        assert!(res.lower_bound <= 0.75 + 1e-9);
        assert!(res.lower_bound >= 0.75 - 1e-9);
    }

    #[test]
    fn memoryless_measurement_loses_the_setting() {
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        let res = performance_seesaw(&games::chsh(), &r, &SeesawConfig::default()).unwrap();
        assert!(res.lower_bound <= 0.75 + 1e-9);
    }

    #[test]
    fn reported_value_matches_internal_objective() {
        let r = from_box(&boxes::pr_box()).unwrap();
        let cfg = SeesawConfig {
            restarts: 1,
            iters: 1,
            ..Default::default()
        };
        let res = performance_seesaw(&games::chsh(), &r, &cfg).unwrap();
        assert!((res.lower_bound - res.history[0]).abs() < 1e-9);
    }

    #[test]
    fn entangled_state_with_measurements_is_nonlocal() {
        // the setting reaches the measurement through a classical memory
        let r = from_state(&states::phi_plus(), 2, 2).unwrap();
        let cfg = SeesawConfig {
            mem_a: SystemType::classical(2),
            mem_b: SystemType::classical(2),
            restarts: 4,
            seed: 7,
            ..Default::default()
        };
        let res = performance_seesaw(&games::chsh(), &r, &cfg).unwrap();
        assert!(res.lower_bound > 0.85, "{}", res.lower_bound);
        let p = games::correlations(games::chsh().analyzer(), &transforms::apply(&res.transform, &r).unwrap()).unwrap();
        assert_eq!(box_is_local(&p, 1e-9).unwrap().verdict, MembershipVerdict::NonFree);
    }
}
