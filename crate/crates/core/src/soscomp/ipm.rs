//! Primal-dual interior-point method for block SDPs with free variables.
//!
//! Infeasible-start path following with the HKM search direction and a Mehrotra
//! predictor-corrector step. The Schur complement `M_ij = tr(A_i X A_j S^{-1})` is
//! assembled from the sparse constraint entries; free variables are eliminated from the
//! Newton system through `B^T M^{-1} B`, with a pivoted LU of the augmented system as
//! fallback. Each direction is refined against the exact constraint operator and finally
//! projected onto `A(dX) + B dw = rp`, which keeps the iterates primal feasible after the
//! Schur complement has become too ill-conditioned to be solved accurately.

use std::time::Instant;

use log::{debug, trace};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::sdp::{SdpProblem, SdpSolution, SolveStatus, SolverInfo};
use super::{ConicSolver, SolverSettings};

/// The built-in conic backend.
#[derive(Debug, Default, Clone, Copy)]
pub struct InteriorPoint;

impl ConicSolver for InteriorPoint {
    fn name(&self) -> &'static str {
        "ipm"
    }

    fn solve(&self, sdp: &SdpProblem, settings: &SolverSettings) -> SdpSolution {
        let start = Instant::now();
        let mut sol = match Scaled::new(sdp) {
            Some(scaled) => scaled.run(sdp, settings),
            None => SdpSolution::failed(SolveStatus::Infeasible, sdp, self.name()),
        };
        sol.info.backend = self.name().to_string();
        sol.info.seconds = start.elapsed().as_secs_f64();
        sol
    }
}

/// Full symmetric entries `(p, q, a)` of one constraint matrix restricted to one block.
type Entries = Vec<(u32, u32, f64)>;

struct BlockData {
    dim: usize,
    /// Rows touching this block with their full (both-triangle) entries.
    rows: Vec<(usize, Entries)>,
    cost: DMatrix<f64>,
}

/// Row-normalized copy of the problem.
struct Scaled {
    m: usize,
    nfree: usize,
    blocks: Vec<BlockData>,
    /// Dense `m x nfree` free-variable coefficients.
    bmat: DMatrix<f64>,
    b: DVector<f64>,
    c_free: DVector<f64>,
    row_scale: Vec<f64>,
    cost_scale: f64,
    /// Factor of `[A B][A B]^T`, used to restore `A(dX) + B dw = rp` exactly.
    projector: Option<Cholesky<f64, Dyn>>,
}

impl Scaled {
    /// `None` when a structurally empty row has a nonzero right-hand side.
    fn new(sdp: &SdpProblem) -> Option<Scaled> {
        let m = sdp.rows.len();
        let mut row_scale = vec![1.0; m];
        for (i, r) in sdp.rows.iter().enumerate() {
            if r.is_structurally_empty() {
                if r.rhs.abs() > 1e-12 {
                    return None;
                }
                continue;
            }
            row_scale[i] = 1.0 / r.max_abs();
        }
        let mut cmax = sdp.cost_free.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        for e in sdp.cost_blocks.iter().flatten() {
            cmax = cmax.max(e.2.abs());
        }
        let cost_scale = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };

        let mut blocks: Vec<BlockData> = sdp
            .block_dims
            .iter()
            .map(|&n| BlockData {
                dim: n,
                rows: Vec::new(),
                cost: DMatrix::zeros(n, n),
            })
            .collect();
        let mut bmat = DMatrix::zeros(m, sdp.num_free);
        let mut b = DVector::zeros(m);
        for (i, r) in sdp.rows.iter().enumerate() {
            let s = row_scale[i];
            b[i] = r.rhs * s;
            for &(j, a) in &r.free {
                bmat[(i, j)] += a * s;
            }
            let mut per_block: Vec<(usize, Entries)> = Vec::new();
            for &(k, p, q, a) in &r.psd {
                let v = a * s;
                let slot = match per_block.iter_mut().find(|e| e.0 == k) {
                    Some(e) => e,
                    None => {
                        per_block.push((k, Vec::new()));
                        per_block.last_mut().unwrap()
                    }
                };
                slot.1.push((p as u32, q as u32, v));
                if p != q {
                    slot.1.push((q as u32, p as u32, v));
                }
            }
            for (k, e) in per_block {
                blocks[k].rows.push((i, e));
            }
        }
        for (k, entries) in sdp.cost_blocks.iter().enumerate() {
            for &(p, q, c) in entries {
                blocks[k].cost[(p, q)] = c * cost_scale;
                blocks[k].cost[(q, p)] = c * cost_scale;
            }
        }
        let c_free = DVector::from_iterator(sdp.num_free, sdp.cost_free.iter().map(|c| c * cost_scale));
        let mut scaled = Scaled {
            m,
            nfree: sdp.num_free,
            blocks,
            bmat,
            b,
            c_free,
            row_scale,
            cost_scale,
            projector: None,
        };
        scaled.projector = regularized_cholesky(&scaled.row_gram());
        Some(scaled)
    }

    /// `[A B][A B]^T`: Frobenius inner products of the constraint matrices plus the free
    /// parts. Every matrix position is touched by few rows, so this is assembled per
    /// position.
    fn row_gram(&self) -> DMatrix<f64> {
        let mut g = &self.bmat * self.bmat.transpose();
        for blk in &self.blocks {
            let mut by_pos: std::collections::BTreeMap<(u32, u32), Vec<(usize, f64)>> = std::collections::BTreeMap::new();
            for (i, e) in &blk.rows {
                for &(p, q, a) in e {
                    by_pos.entry((p, q)).or_default().push((*i, a));
                }
            }
            for list in by_pos.values() {
                for &(i, a) in list {
                    for &(j, b) in list {
                        g[(i, j)] += a * b;
                    }
                }
            }
        }
        g
    }

    /// Minimal-norm change of `(dx, dw)` that makes `A(dx) + B dw = rp` hold to working
    /// precision. Near the optimum the Schur complement is too ill-conditioned for the
    /// Newton solve alone to keep the iterates primal feasible.
    fn restore_primal(&self, rp: &DVector<f64>, dx: &mut [DMatrix<f64>], dw: &mut DVector<f64>) {
        let Some(p) = &self.projector else {
            return;
        };
        for _ in 0..2 {
            let mut adx = &self.bmat * &*dw;
            self.apply_a(dx, &mut adx);
            let e = rp - adx;
            let v = p.solve(&e);
            for (d, c) in dx.iter_mut().zip(self.apply_at(&v)) {
                *d += c;
            }
            *dw += self.bmat.transpose() * v;
        }
    }

    /// `rp - A(dx) - B dw`.
    fn primal_error(&self, rp: &DVector<f64>, dx: &[DMatrix<f64>], dw: &DVector<f64>) -> DVector<f64> {
        let mut adx = &self.bmat * dw;
        self.apply_a(dx, &mut adx);
        rp - adx
    }

    /// `A(Y)` for symmetric block matrices `Y`.
    fn apply_a(&self, ys: &[DMatrix<f64>], out: &mut DVector<f64>) {
        for (blk, y) in self.blocks.iter().zip(ys) {
            for (i, e) in &blk.rows {
                let mut v = 0.0;
                for &(p, q, a) in e {
                    v += a * y[(p as usize, q as usize)];
                }
                out[*i] += v;
            }
        }
    }

    /// `A^*(y)` per block.
    fn apply_at(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|blk| {
                let mut s = DMatrix::zeros(blk.dim, blk.dim);
                for (i, e) in &blk.rows {
                    let yi = y[*i];
                    if yi == 0.0 {
                        continue;
                    }
                    for &(p, q, a) in e {
                        s[(p as usize, q as usize)] += a * yi;
                    }
                }
                s
            })
            .collect()
    }

    fn schur(&self, xs: &[DMatrix<f64>], zs: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut mm = DMatrix::zeros(self.m, self.m);
        for ((blk, x), z) in self.blocks.iter().zip(xs).zip(zs) {
            let n = blk.dim;
            let xv = x.as_slice();
            let zv = z.as_slice();
            for (a_idx, (i, ei)) in blk.rows.iter().enumerate() {
                for (j, ej) in &blk.rows[a_idx..] {
                    let mut v = 0.0;
                    for &(p, q, a) in ei {
                        let (p, q) = (p as usize, q as usize);
                        let mut inner = 0.0;
                        for &(r, s, bb) in ej {
                            // X[q][r] * Z[s][p], column-major storage
                            inner += bb * xv[q + r as usize * n] * zv[s as usize + p * n];
                        }
                        v += a * inner;
                    }
                    mm[(*i, *j)] += v;
                    if i != j {
                        mm[(*j, *i)] += v;
                    }
                }
            }
        }
        mm
    }

    fn run(&self, sdp: &SdpProblem, settings: &SolverSettings) -> SdpSolution {
        let nblocks = self.blocks.len();
        let total_dim: usize = self.blocks.iter().map(|b| b.dim).sum::<usize>().max(1);
        let bnorm = self.b.norm();
        let cnorm = (self.c_free.norm_squared() + self.blocks.iter().map(|b| b.cost.norm_squared()).sum::<f64>()).sqrt();

        let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(nblocks);
        let mut ss: Vec<DMatrix<f64>> = Vec::with_capacity(nblocks);
        for blk in &self.blocks {
            let n = blk.dim as f64;
            let mut amax: f64 = 0.0;
            let mut ratio: f64 = 0.0;
            for (i, e) in &blk.rows {
                let fro = e.iter().map(|t| t.2 * t.2).sum::<f64>().sqrt();
                amax = amax.max(fro);
                ratio = ratio.max((1.0 + self.b[*i].abs()) / (1.0 + fro));
            }
            let xi = 10f64.max(n.sqrt()).max(n * ratio);
            let eta = 10f64.max(n.sqrt()).max(amax).max(blk.cost.norm());
            xs.push(DMatrix::identity(blk.dim, blk.dim) * xi);
            ss.push(DMatrix::identity(blk.dim, blk.dim) * eta);
        }
        let mut y = DVector::zeros(self.m);
        let mut w = DVector::zeros(self.nfree);

        let mut status = SolveStatus::Unknown;
        let (mut pinf, mut dinf, mut gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut dobj = 0.0;
        let mut iterations = 0;
        // Iterates can degrade once the Schur complement becomes too ill-conditioned, so
        // the best one seen is kept.
        let mut best: Option<Best> = None;

        for iter in 0..settings.max_iterations {
            iterations = iter;
            // residuals
            let mut ax = DVector::zeros(self.m);
            self.apply_a(&xs, &mut ax);
            let rp = &self.b - &ax - &self.bmat * &w;
            let aty = self.apply_at(&y);
            let rd: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &self.blocks[k].cost - &aty[k] - &ss[k]).collect();
            let rf = &self.c_free - self.bmat.transpose() * &y;

            let pobj = self.c_free.dot(&w) + (0..nblocks).map(|k| self.blocks[k].cost.dot(&xs[k])).sum::<f64>();
            dobj = self.b.dot(&y);
            let xs_dot: f64 = (0..nblocks).map(|k| xs[k].dot(&ss[k])).sum();
            let mu = xs_dot / total_dim as f64;
            let rd_norm = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rf.norm_squared()).sqrt();
            pinf = rp.norm() / (1.0 + bnorm);
            dinf = rd_norm / (1.0 + cnorm);
            gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            // complementarity also counts when the objective gap closes trivially
            let comp = xs_dot / (1.0 + pobj.abs() + dobj.abs());
            debug!(
                "ipm {iter:3}: pobj {pobj:+.8e} dobj {dobj:+.8e} pinf {pinf:.2e} dinf {dinf:.2e} gap {gap:.2e} mu {mu:.2e}"
            );
            let score = pinf.max(dinf).max(gap).max(comp);
            if score < settings.tolerance {
                status = SolveStatus::Optimal;
                break;
            }
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(Best {
                    score,
                    iter,
                    xs: xs.clone(),
                    y: y.clone(),
                    w: w.clone(),
                    measures: (pinf, dinf, gap, dobj),
                    gap_comp: gap.max(comp),
                });
            } else if best.as_ref().is_some_and(|b| iter > b.iter + 10) {
                debug!("ipm: no progress for 10 iterations");
                break;
            }

            // infeasibility certificates
            if dobj > 0.0 {
                let farkas = (aty.iter().zip(&ss).map(|(a, s)| (a + s).norm_squared()).sum::<f64>()
                    + (self.bmat.transpose() * &y).norm_squared())
                .sqrt()
                    / dobj;
                if farkas < settings.infeasibility_tolerance && dobj > 1e-3 {
                    status = SolveStatus::Infeasible;
                    break;
                }
            }
            if pobj < 0.0 {
                let ray = (&ax + &self.bmat * &w).norm() / -pobj;
                if ray < settings.infeasibility_tolerance && -pobj > 1e-3 {
                    status = SolveStatus::Unbounded;
                    break;
                }
            }
            if dobj > 1e12 * (1.0 + cnorm) {
                status = SolveStatus::Infeasible;
                break;
            }

            let zs: Vec<DMatrix<f64>> = match ss.iter().map(spd_inverse).collect::<Option<Vec<_>>>() {
                Some(z) => z,
                None => break,
            };
            let t0 = Instant::now();
            let mmat = self.schur(&xs, &zs);
            let t1 = Instant::now();
            let Some(newton) = NewtonSystem::new(mmat, &self.bmat) else {
                break;
            };
            trace!("schur {:.2}s factor {:.2}s", (t1 - t0).as_secs_f64(), t1.elapsed().as_secs_f64());
            let t2 = Instant::now();

            // predictor
            let g_aff: Vec<DMatrix<f64>> = xs.iter().map(|x| -x).collect();
            let Some(dir_aff) = self.direction(&newton, &xs, &zs, &rp, &rd, &rf, &g_aff) else {
                break;
            };
            let ap = (0..nblocks).map(|k| max_step(&xs[k], &dir_aff.dx[k])).fold(1.0f64, f64::min);
            let ad = (0..nblocks).map(|k| max_step(&ss[k], &dir_aff.ds[k])).fold(1.0f64, f64::min);
            let mu_aff: f64 = (0..nblocks)
                .map(|k| (&xs[k] + &dir_aff.dx[k] * ap).dot(&(&ss[k] + &dir_aff.ds[k] * ad)))
                .sum::<f64>()
                / total_dim as f64;
            let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

            // corrector
            let g: Vec<DMatrix<f64>> = (0..nblocks)
                .map(|k| {
                    let corr = &dir_aff.dx[k] * &dir_aff.ds[k] * &zs[k];
                    let corr = (&corr + corr.transpose()) * 0.5;
                    &zs[k] * (sigma * mu) - &xs[k] - corr
                })
                .collect();
            let Some(dir) = self.direction(&newton, &xs, &zs, &rp, &rd, &rf, &g) else {
                break;
            };
            let ap_max = (0..nblocks).map(|k| max_step(&xs[k], &dir.dx[k])).fold(f64::INFINITY, f64::min);
            let ad_max = (0..nblocks).map(|k| max_step(&ss[k], &dir.ds[k])).fold(f64::INFINITY, f64::min);
            let gamma = 0.9 + 0.09 * ap_max.min(ad_max).min(1.0);
            let ap = (gamma * ap_max).min(1.0);
            let ad = (gamma * ad_max).min(1.0);
            trace!("ipm {iter}: sigma {sigma:.3e} steps {ap:.3e} {ad:.3e} directions {:.2}s", t2.elapsed().as_secs_f64());
            if ap < 1e-12 && ad < 1e-12 {
                debug!("ipm: step lengths collapsed");
                break;
            }
            for k in 0..nblocks {
                xs[k] += &dir.dx[k] * ap;
                ss[k] += &dir.ds[k] * ad;
            }
            w += &dir.dw * ap;
            y += &dir.dy * ad;
        }

        if status == SolveStatus::Unknown {
            if let Some(b) = best {
                if b.measures.0.max(b.measures.1) < settings.near_tolerance && b.gap_comp < settings.near_gap {
                    status = SolveStatus::NearOptimal;
                }
                xs = b.xs;
                y = b.y;
                w = b.w;
                (pinf, dinf, gap, dobj) = b.measures;
            }
        }

        let free: Vec<f64> = w.iter().copied().collect();
        let objective = sdp.objective_value(&free, &xs);
        let dual: Vec<f64> = y.iter().zip(&self.row_scale).map(|(v, s)| v * s / self.cost_scale).collect();
        let min_eigenvalues = xs
            .iter()
            .map(|x| {
                if x.nrows() == 0 {
                    0.0
                } else {
                    x.clone().symmetric_eigenvalues().min()
                }
            })
            .collect();
        SdpSolution {
            status,
            free,
            blocks: xs,
            dual,
            objective,
            min_eigenvalues,
            info: SolverInfo {
                backend: String::new(),
                iterations,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                relative_gap: gap,
                dual_objective: dobj / self.cost_scale,
                seconds: 0.0,
            },
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        newton: &NewtonSystem,
        xs: &[DMatrix<f64>],
        zs: &[DMatrix<f64>],
        rp: &DVector<f64>,
        rd: &[DMatrix<f64>],
        rf: &DVector<f64>,
        g: &[DMatrix<f64>],
    ) -> Option<Direction> {
        let nblocks = self.blocks.len();
        // h = rp - A(G - X Rd Z)
        let t: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &g[k] - &xs[k] * &rd[k] * &zs[k]).collect();
        let mut at = DVector::zeros(self.m);
        self.apply_a(&t, &mut at);
        let h = rp - at;
        let (mut dy, mut dw) = newton.solve(&self.bmat, &h, rf)?;
        let atdy = self.apply_at(&dy);
        let mut ds: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &rd[k] - &atdy[k]).collect();
        let mut dx: Vec<DMatrix<f64>> = (0..nblocks)
            .map(|k| {
                let v = &g[k] - &xs[k] * &ds[k] * &zs[k];
                (&v + v.transpose()) * 0.5
            })
            .collect();
        // Refine against the exact operator: the Schur complement is formed and solved
        // inexactly, and corrections through it keep the scaling of the cone.
        let target = 1e-13 * (1.0 + rp.norm());
        let mut err = self.primal_error(rp, &dx, &dw);
        for _ in 0..4 {
            let en = err.norm();
            if en <= target {
                break;
            }
            let Some((vy, vw)) = newton.solve(&self.bmat, &err, &DVector::zeros(self.nfree)) else {
                break;
            };
            let atv = self.apply_at(&vy);
            let cx: Vec<DMatrix<f64>> = (0..nblocks)
                .map(|k| {
                    let v = &xs[k] * &atv[k] * &zs[k];
                    (&v + v.transpose()) * 0.5
                })
                .collect();
            let trial: Vec<DMatrix<f64>> = dx.iter().zip(&cx).map(|(a, c)| a + c).collect();
            let trial_w = &dw + &vw;
            let next = self.primal_error(rp, &trial, &trial_w);
            if next.norm() >= en {
                break;
            }
            dx = trial;
            dw = trial_w;
            dy += &vy;
            for (d, a) in ds.iter_mut().zip(&atv) {
                *d -= a;
            }
            err = next;
        }
        trace!("primal error after refinement {:.2e} (rp {:.2e})", err.norm(), rp.norm());
        self.restore_primal(rp, &mut dx, &mut dw);
        if dy.iter().chain(dw.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        Some(Direction { dx, ds, dy, dw })
    }
}

struct Best {
    score: f64,
    iter: usize,
    xs: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    w: DVector<f64>,
    measures: (f64, f64, f64, f64),
    gap_comp: f64,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dw: DVector<f64>,
}

/// `[M B; B^T 0]`, factorized by Cholesky of `M` and of `B^T M^{-1} B`, with a pivoted LU
/// of the whole system as fallback when refinement cannot reach working accuracy.
struct NewtonSystem {
    mmat: DMatrix<f64>,
    m_chol: Option<Cholesky<f64, Dyn>>,
    k_chol: Option<Cholesky<f64, Dyn>>,
    lu: std::cell::OnceCell<Option<nalgebra::LU<f64, Dyn, Dyn>>>,
}

impl NewtonSystem {
    fn new(mmat: DMatrix<f64>, bmat: &DMatrix<f64>) -> Option<NewtonSystem> {
        let m_chol = regularized_cholesky(&mmat);
        let k_chol = match (&m_chol, bmat.ncols()) {
            (Some(c), nf) if nf > 0 => {
                let mut v = bmat.clone();
                c.l_dirty().solve_lower_triangular_mut(&mut v);
                regularized_cholesky(&(v.transpose() * &v))
            }
            _ => None,
        };
        let m_chol = if bmat.ncols() > 0 && k_chol.is_none() { None } else { m_chol };
        Some(NewtonSystem {
            mmat,
            m_chol,
            k_chol,
            lu: std::cell::OnceCell::new(),
        })
    }

    fn augmented_lu(&self, bmat: &DMatrix<f64>) -> Option<&nalgebra::LU<f64, Dyn, Dyn>> {
        self.lu
            .get_or_init(|| {
                let (m, nf) = (self.mmat.nrows(), bmat.ncols());
                let mut aug = DMatrix::zeros(m + nf, m + nf);
                aug.view_mut((0, 0), (m, m)).copy_from(&self.mmat);
                aug.view_mut((0, m), (m, nf)).copy_from(bmat);
                aug.view_mut((m, 0), (nf, m)).copy_from(&bmat.transpose());
                let lu = aug.lu();
                lu.is_invertible().then_some(lu)
            })
            .as_ref()
    }

    fn solve_chol(&self, bmat: &DMatrix<f64>, h: &DVector<f64>, rf: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let mc = self.m_chol.as_ref()?;
        let minv_h = mc.solve(h);
        Some(match &self.k_chol {
            Some(k) => {
                let dw = k.solve(&(bmat.transpose() * &minv_h - rf));
                (mc.solve(&(h - bmat * &dw)), dw)
            }
            None => (minv_h, DVector::zeros(0)),
        })
    }

    fn solve_lu(&self, bmat: &DMatrix<f64>, h: &DVector<f64>, rf: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let lu = self.augmented_lu(bmat)?;
        let m = h.len();
        let mut rhs = DVector::zeros(m + rf.len());
        rhs.rows_mut(0, m).copy_from(h);
        rhs.rows_mut(m, rf.len()).copy_from(rf);
        let sol = lu.solve(&rhs)?;
        Some((sol.rows(0, m).into_owned(), sol.rows(m, rf.len()).into_owned()))
    }

    fn residual_norm(&self, bmat: &DMatrix<f64>, h: &DVector<f64>, rf: &DVector<f64>, dy: &DVector<f64>, dw: &DVector<f64>) -> (DVector<f64>, DVector<f64>, f64) {
        let r1 = h - &self.mmat * dy - bmat * dw;
        let r2 = rf - bmat.transpose() * dy;
        let n = (r1.norm_squared() + r2.norm_squared()).sqrt();
        (r1, r2, n)
    }

    fn refine(
        &self,
        bmat: &DMatrix<f64>,
        h: &DVector<f64>,
        rf: &DVector<f64>,
        once: impl Fn(&DVector<f64>, &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)>,
    ) -> Option<(DVector<f64>, DVector<f64>, f64)> {
        let (mut dy, mut dw) = once(h, rf)?;
        let (mut r1, mut r2, mut res) = self.residual_norm(bmat, h, rf, &dy, &dw);
        for _ in 0..3 {
            let (cy, cw) = once(&r1, &r2)?;
            let (ny, nw) = (&dy + cy, &dw + cw);
            let (n1, n2, nres) = self.residual_norm(bmat, h, rf, &ny, &nw);
            if !(nres < res) {
                break;
            }
            (dy, dw, r1, r2, res) = (ny, nw, n1, n2, nres);
        }
        Some((dy, dw, res))
    }

    /// `[M B; B^T 0] [dy; dw] = [h; rf]` with iterative refinement.
    fn solve(&self, bmat: &DMatrix<f64>, h: &DVector<f64>, rf: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let scale = (h.norm_squared() + rf.norm_squared()).sqrt().max(1e-300);
        let chol = self.refine(bmat, h, rf, |a, b| self.solve_chol(bmat, a, b));
        if let Some((dy, dw, res)) = &chol {
            if *res <= 1e-10 * scale {
                return Some((dy.clone(), dw.clone()));
            }
        }
        let lu = self.refine(bmat, h, rf, |a, b| self.solve_lu(bmat, a, b));
        trace!(
            "newton residuals: cholesky {:.2e}, lu {:.2e} (rhs {scale:.2e})",
            chol.as_ref().map_or(f64::NAN, |c| c.2),
            lu.as_ref().map_or(f64::NAN, |c| c.2)
        );
        match (chol, lu) {
            (Some(c), Some(l)) => Some(if l.2 < c.2 { (l.0, l.1) } else { (c.0, c.1) }),
            (Some(c), None) => Some((c.0, c.1)),
            (None, Some(l)) => Some((l.0, l.1)),
            (None, None) => None,
        }
    }
}

fn regularized_cholesky(mat: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = mat.nrows();
    if n == 0 {
        return Cholesky::new(mat.clone());
    }
    let dmax = mat.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut trial = mat.clone();
        if reg > 0.0 {
            for i in 0..n {
                trial[(i, i)] += reg;
            }
        }
        if let Some(c) = Cholesky::new(trial) {
            return Some(c);
        }
        reg = if reg == 0.0 { 1e-14 * dmax } else { reg * 100.0 };
    }
    None
}

fn spd_inverse(s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if s.nrows() == 0 {
        return Some(s.clone());
    }
    let inv = Cholesky::new(s.clone())?.inverse();
    Some((&inv + inv.transpose()) * 0.5)
}

/// Largest `alpha` with `x + alpha * dx ⪰ 0` (infinite when `dx ⪰ 0`).
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    if x.nrows() == 0 {
        return f64::INFINITY;
    }
    let Some(chol) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = chol.l();
    let mut t = dx.clone();
    l.solve_lower_triangular_mut(&mut t);
    let mut w = t.transpose();
    l.solve_lower_triangular_mut(&mut w);
    let w = (&w + w.transpose()) * 0.5;
    let lmin = w.symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}
