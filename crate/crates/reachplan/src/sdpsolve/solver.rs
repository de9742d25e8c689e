//! Primal-dual path-following interior-point solver for block-diagonal SDPs
//! with free variables, in the homogeneous self-dual embedding.
//!
//! Per iteration: Nesterov–Todd scaling per block, a Mehrotra
//! predictor-corrector direction, and a Schur-complement solve. Rows that
//! share no PSD block land in independent Schur groups, so the Schur matrix
//! factors group-by-group with a dense border for the free variables.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::dense;
use super::nt::NtBlock;
use super::problem::SdpProblem;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative primal/dual residual and gap tolerance for `Optimal`.
    pub tol: f64,
    /// Certificate quality for infeasibility/unboundedness declarations.
    pub tol_infeas: f64,
    pub max_iter: usize,
    /// Static Schur-diagonal regularization.
    pub static_reg: f64,
    /// Print per-iteration residual CSV to stderr.
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-7,
            tol_infeas: 1e-9,
            max_iter: 200,
            static_reg: 1e-10,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Primal infeasible; `dual_y`/`dual_blocks` hold the Farkas ray.
    InfeasibleCertificate,
    /// Dual infeasible (primal unbounded); `primal_blocks`/`free_values`
    /// hold the improving ray.
    UnboundedCertificate,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct IterLog {
    pub iter: usize,
    pub mu: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub tau: f64,
    pub kappa: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub primal_blocks: Vec<DMatrix<f64>>,
    pub free_values: Vec<f64>,
    pub dual_y: Vec<f64>,
    pub dual_blocks: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub log: Vec<IterLog>,
}

// --- Schur machinery ---------------------------------------------------------

struct Group {
    rows: Vec<u32>,
    blocks: Vec<usize>,
    /// Free columns with support in this group's rows.
    free_cols: Vec<u32>,
    mat: Vec<f64>,
    dim: usize,
}

struct Schur {
    groups: Vec<Group>,
    /// row → (group, local index)
    row_map: Vec<(u32, u32)>,
    /// per block: local index of each of its rows within its group
    block_local: Vec<Vec<u32>>,
    /// per block: entry values pre-scaled by 2 for off-diagonal coords
    scaled_vals: Vec<Vec<f64>>,
    n_free: usize,
    /// Cholesky factor of F_reduced ᵀ Φ⁻¹ F_reduced + δI.
    sf_factor: Vec<f64>,
    /// Per group: dense L_g⁻¹ F_g (n_g × active cols, column-major).
    t_panels: Vec<Vec<f64>>,
}

fn build_groups(p: &SdpProblem) -> (Vec<Group>, Vec<(u32, u32)>, Vec<Vec<u32>>) {
    let m = p.num_rows();
    // union-find over rows
    let mut parent: Vec<u32> = (0..m as u32).collect();
    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    for be in &p.blocks {
        if let Some((&first, rest)) = be.rows.split_first() {
            let fr = find(&mut parent, first);
            for &r in rest {
                let rr = find(&mut parent, r);
                parent[rr as usize] = fr;
            }
        }
    }
    let mut root_to_group: std::collections::HashMap<u32, u32> = Default::default();
    let mut groups: Vec<Group> = Vec::new();
    let mut row_map = vec![(0u32, 0u32); m];
    for r in 0..m as u32 {
        let root = find(&mut parent, r);
        let g = *root_to_group.entry(root).or_insert_with(|| {
            groups.push(Group {
                rows: Vec::new(),
                blocks: Vec::new(),
                free_cols: Vec::new(),
                mat: Vec::new(),
                dim: 0,
            });
            (groups.len() - 1) as u32
        });
        let local = groups[g as usize].rows.len() as u32;
        groups[g as usize].rows.push(r);
        row_map[r as usize] = (g, local);
    }
    for g in &mut groups {
        g.dim = g.rows.len();
    }
    // block membership and local row indices
    let mut block_local = Vec::with_capacity(p.blocks.len());
    for (bi, be) in p.blocks.iter().enumerate() {
        let mut locals = Vec::with_capacity(be.rows.len());
        if let Some(&first) = be.rows.first() {
            let g = row_map[first as usize].0 as usize;
            groups[g].blocks.push(bi);
            for &r in &be.rows {
                debug_assert_eq!(row_map[r as usize].0 as usize, g);
                locals.push(row_map[r as usize].1);
            }
        }
        block_local.push(locals);
    }
    // free-column support per group
    for g in groups.iter_mut() {
        let mut cols: Vec<u32> = Vec::new();
        for &r in &g.rows {
            let r = r as usize;
            for e in p.free_rows.ptr[r]..p.free_rows.ptr[r + 1] {
                cols.push(p.free_rows.cols[e]);
            }
        }
        cols.sort_unstable();
        cols.dedup();
        g.free_cols = cols;
    }
    (groups, row_map, block_local)
}

impl Schur {
    fn new(p: &SdpProblem) -> Self {
        let (groups, row_map, block_local) = build_groups(p);
        let scaled_vals = p
            .blocks
            .iter()
            .map(|be| {
                be.coords
                    .iter()
                    .zip(&be.vals)
                    .map(|(&(i, j), &v)| if i == j { v } else { 2.0 * v })
                    .collect()
            })
            .collect();
        Schur {
            groups,
            row_map,
            block_local,
            scaled_vals,
            n_free: p.n_free,
            sf_factor: Vec::new(),
            t_panels: Vec::new(),
        }
    }

    /// Form Φ = A W Aᵀ W group-by-group and factor, then build the free-
    /// variable border. Returns Err on Cholesky breakdown after retries.
    fn factor(&mut self, p: &SdpProblem, nt: &[NtBlock], reg: f64) -> Result<(), String> {
        let timing = std::env::var_os("REACHPLAN_TIMING").is_some();
        let t_start = std::time::Instant::now();
        // formation
        for gi in 0..self.groups.len() {
            let dim = self.groups[gi].dim;
            self.groups[gi].mat.clear();
            self.groups[gi].mat.resize(dim * dim, 0.0);
        }
        for (bi, be) in p.blocks.iter().enumerate() {
            if be.rows.is_empty() {
                continue;
            }
            let gi = self.row_map[be.rows[0] as usize].0 as usize;
            let dim = self.groups[gi].dim;
            let n = p.block_dims[bi];
            // flat row-major copy of W for fast random access
            let wm = &nt[bi].w;
            let mut w = vec![0.0f64; n * n];
            for i in 0..n {
                for j in 0..n {
                    w[i * n + j] = wm[(i, j)];
                }
            }
            let locals = &self.block_local[bi];
            let svals = &self.scaled_vals[bi];
            let nrows = be.rows.len();
            // accumulate into a scratch (upper triangle in local indices),
            // parallel over the first row index
            let mut scratch = vec![0.0f64; dim * dim];
            scratch
                .par_chunks_mut(dim)
                .enumerate()
                .for_each(|(l1, out_row)| {
                    // find which block-row has local index l1, if any
                    // (locals is sorted because rows are sorted within a group)
                    let ri1 = match locals.binary_search(&(l1 as u32)) {
                        Ok(i) => i,
                        Err(_) => return,
                    };
                    let span1 = be.ptr[ri1]..be.ptr[ri1 + 1];
                    for ri2 in ri1..nrows {
                        let l2 = locals[ri2] as usize;
                        let mut acc = 0.0;
                        for e1 in span1.clone() {
                            let (i, j) = be.coords[e1];
                            let (i, j) = (i as usize, j as usize);
                            let v1 = svals[e1];
                            let wj = &w[j * n..(j + 1) * n];
                            let wi = &w[i * n..(i + 1) * n];
                            for e2 in be.ptr[ri2]..be.ptr[ri2 + 1] {
                                let (pq, q) = be.coords[e2];
                                let (pq, q) = (pq as usize, q as usize);
                                let v2 = svals[e2];
                                acc += 0.5
                                    * v1
                                    * v2
                                    * (wj[pq] * wi[q] + wj[q] * wi[pq]);
                            }
                        }
                        out_row[l2] += acc;
                    }
                });
            let mat = &mut self.groups[gi].mat;
            for (idx, v) in scratch.into_iter().enumerate() {
                if v != 0.0 {
                    mat[idx] += v;
                }
            }
        }
        let t_formed = std::time::Instant::now();
        // mirror upper → lower and factor each group
        let reg_eff = reg;
        let results: Vec<Result<(), String>> = self
            .groups
            .par_iter_mut()
            .map(|g| {
                let dim = g.dim;
                for i in 0..dim {
                    for j in (i + 1)..dim {
                        g.mat[j * dim + i] = g.mat[i * dim + j];
                    }
                }
                let mut attempt_reg = reg_eff;
                for _ in 0..4 {
                    let mut m = g.mat.clone();
                    match dense::cholesky_in_place(&mut m, dim, attempt_reg) {
                        Ok(()) => {
                            g.mat = m;
                            return Ok(());
                        }
                        Err(_) => attempt_reg = (attempt_reg * 1e4).max(1e-12),
                    }
                }
                Err("Schur Cholesky breakdown after regularization retries".to_string())
            })
            .collect();
        for r in results {
            r?;
        }
        let t_factored = std::time::Instant::now();
        // free-variable border: T_g = L_g⁻¹ F_g and S_f = Σ T_gᵀ T_g + δI
        self.t_panels.clear();
        let nf = self.n_free;
        let mut sf = vec![0.0f64; nf * nf];
        for g in &self.groups {
            let dim = g.dim;
            let ncols = g.free_cols.len();
            let mut panel = vec![0.0f64; dim * ncols];
            for (ci, &col) in g.free_cols.iter().enumerate() {
                let dst = &mut panel[ci * dim..(ci + 1) * dim];
                for (li, &r) in g.rows.iter().enumerate() {
                    let r = r as usize;
                    for e in p.free_rows.ptr[r]..p.free_rows.ptr[r + 1] {
                        if p.free_rows.cols[e] == col {
                            dst[li] = p.free_rows.vals[e];
                        }
                    }
                }
            }
            dense::solve_lower_multi(&g.mat, dim, &mut panel, ncols);
            // S_f contribution (active columns only)
            for ci in 0..ncols {
                let colv = &panel[ci * dim..(ci + 1) * dim];
                for cj in ci..ncols {
                    let colw = &panel[cj * dim..(cj + 1) * dim];
                    let mut acc = 0.0;
                    for l in 0..dim {
                        acc += colv[l] * colw[l];
                    }
                    let (a, b) = (g.free_cols[ci] as usize, g.free_cols[cj] as usize);
                    sf[a * nf + b] += acc;
                    if a != b {
                        sf[b * nf + a] += acc;
                    }
                }
            }
            self.t_panels.push(panel);
        }
        if nf > 0 {
            let mut attempt_reg = reg_eff.max(1e-12);
            let mut ok = false;
            for _ in 0..4 {
                let mut m = sf.clone();
                if dense::cholesky_in_place(&mut m, nf, attempt_reg).is_ok() {
                    sf = m;
                    ok = true;
                    break;
                }
                attempt_reg *= 1e4;
            }
            if !ok {
                return Err("free-variable Schur breakdown".to_string());
            }
        }
        self.sf_factor = sf;
        if timing {
            eprintln!(
                "schur: form {:.2}s chol {:.2}s border {:.2}s",
                (t_formed - t_start).as_secs_f64(),
                (t_factored - t_formed).as_secs_f64(),
                t_factored.elapsed().as_secs_f64()
            );
        }
        Ok(())
    }

    /// Apply Φ⁻¹ (per-group Cholesky solves) to a global row vector.
    fn phi_solve(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for g in &self.groups {
            let dim = g.dim;
            let mut local = vec![0.0; dim];
            for (li, &row) in g.rows.iter().enumerate() {
                local[li] = r[row as usize];
            }
            dense::solve_cholesky(&g.mat, dim, &mut local);
            for (li, &row) in g.rows.iter().enumerate() {
                out[row as usize] = local[li];
            }
        }
        out
    }

    /// Solve the bordered system [Φ F; Fᵀ 0] (Δy, Δx_f) = (r_y, r_f).
    fn solve(&self, p: &SdpProblem, r_y: &[f64], r_f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let a0 = self.phi_solve(r_y);
        if self.n_free == 0 {
            return (a0, Vec::new());
        }
        let nf = self.n_free;
        let mut rhs_f = vec![0.0; nf];
        let fta0 = p.apply_ft(&a0);
        for c in 0..nf {
            rhs_f[c] = fta0[c] - r_f[c];
        }
        let mut xf = rhs_f;
        dense::solve_cholesky(&self.sf_factor, nf, &mut xf);
        // Δy = Φ⁻¹(r_y − F Δx_f)
        let mut ry2 = r_y.to_vec();
        for (r, v) in ry2.iter_mut().enumerate() {
            for e in p.free_rows.ptr[r]..p.free_rows.ptr[r + 1] {
                *v -= p.free_rows.vals[e] * xf[p.free_rows.cols[e] as usize];
            }
        }
        let dy = self.phi_solve(&ry2);
        (dy, xf)
    }
}

// --- HSD state ---------------------------------------------------------------

struct State {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    x_free: Vec<f64>,
    y: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dx_hat: Vec<DMatrix<f64>>,
    ds_hat: Vec<DMatrix<f64>>,
    dx_free: Vec<f64>,
    dy: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// ⟨A_r, M⟩ for all rows of one block, accumulated into `out`.
fn apply_a_block_dense(p: &SdpProblem, bi: usize, m: &DMatrix<f64>, out: &mut [f64]) {
    let be = &p.blocks[bi];
    for (ri, &row) in be.rows.iter().enumerate() {
        let mut acc = 0.0;
        for e in be.ptr[ri]..be.ptr[ri + 1] {
            let (i, j) = be.coords[e];
            let v = be.vals[e];
            let mij = m[(i as usize, j as usize)];
            acc += if i == j { v * mij } else { 2.0 * v * mij };
        }
        out[row as usize] += acc;
    }
}

fn obj_inner(p: &SdpProblem, bi: usize, m: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for &(i, j, v) in &p.obj_blocks[bi] {
        let mij = m[(i as usize, j as usize)];
        acc += if i == j { v * mij } else { 2.0 * v * mij };
    }
    acc
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Largest α ∈ (0, cap] keeping Λ + αD ⪰ 0, where Λ is the diagonal scaled
/// point and D a scaled direction.
fn max_step(lambda: &nalgebra::DVector<f64>, d: &DMatrix<f64>, cap: f64) -> f64 {
    let n = d.nrows();
    let mut e = d.clone();
    for i in 0..n {
        for j in 0..n {
            e[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
        }
    }
    let eig = e.symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        cap
    } else {
        cap.min(-1.0 / min)
    }
}

pub fn solve(p: &SdpProblem, opts: &SolveOptions) -> SdpSolution {
    if let Err(e) = p.validate() {
        return failure_solution(p, SdpStatus::NumericalFailure, &format!("invalid: {e}"), opts);
    }
    let nb = p.block_dims.len();
    let m = p.num_rows();
    let nu: f64 = p.block_dims.iter().map(|&d| d as f64).sum();

    let mut st = State {
        x: p.block_dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
        s: p.block_dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
        x_free: vec![0.0; p.n_free],
        y: vec![0.0; m],
        tau: 1.0,
        kappa: 1.0,
    };
    let mut schur = Schur::new(p);
    let mut log: Vec<IterLog> = Vec::new();
    let norm_b = inf_norm(&p.b);
    let norm_c = {
        let mut n = inf_norm(&p.obj_free);
        for ob in &p.obj_blocks {
            for &(_, _, v) in ob {
                n = n.max(v.abs());
            }
        }
        n
    };

    if opts.verbose {
        eprintln!("iter,mu,pres,dres,gap,tau,kappa,step");
    }

    let mut last_metrics = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for iter in 0..opts.max_iter {
        // residuals at the current homogeneous point
        let ax = p.apply_a(
            &st.x.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>(),
            &st.x_free,
        );
        let mut rp = vec![0.0; m];
        for r in 0..m {
            rp[r] = ax[r] - p.b[r] * st.tau;
        }
        let mut rd_blocks: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for bi in 0..nb {
            let aty = p.apply_at_block(bi, &st.y);
            let n = p.block_dims[bi];
            let mut rd = DMatrix::zeros(n, n);
            let cb = p.obj_block_dense(bi);
            for i in 0..n {
                for j in 0..n {
                    rd[(i, j)] = cb[i * n + j] * st.tau - aty[i * n + j] - st.s[bi][(i, j)];
                }
            }
            rd_blocks.push(rd);
        }
        let fty = p.apply_ft(&st.y);
        let mut rd_free = vec![0.0; p.n_free];
        for c in 0..p.n_free {
            rd_free[c] = p.obj_free[c] * st.tau - fty[c];
        }
        let cobj: f64 = (0..nb).map(|bi| obj_inner(p, bi, &st.x[bi])).sum::<f64>()
            + p.obj_free.iter().zip(&st.x_free).map(|(c, x)| c * x).sum::<f64>();
        let bty: f64 = p.b.iter().zip(&st.y).map(|(b, y)| b * y).sum();
        let rg = bty - cobj - st.kappa;

        let gap_inner: f64 = (0..nb).map(|bi| inner(&st.x[bi], &st.s[bi])).sum();
        let mu = (gap_inner + st.tau * st.kappa) / (nu + 1.0);

        // unscaled convergence metrics
        let tau = st.tau;
        let pres = inf_norm(&rp) / tau / (1.0 + norm_b);
        let mut dres: f64 = inf_norm(&rd_free) / tau / (1.0 + norm_c);
        for rd in &rd_blocks {
            dres = dres.max(rd.amax() / tau / (1.0 + norm_c));
        }
        let pobj = cobj / tau;
        let dobj = bty / tau;
        let gap_rel = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let compl = gap_inner / (tau * tau) / (1.0 + pobj.abs() + dobj.abs());
        last_metrics = (pres, dres, gap_rel.max(compl));

        if opts.verbose {
            eprintln!(
                "{iter},{mu:.3e},{pres:.3e},{dres:.3e},{gap_rel:.3e},{tau:.3e},{:.3e},-",
                st.kappa
            );
        }
        log.push(IterLog {
            iter,
            mu,
            primal_residual: pres,
            dual_residual: dres,
            gap: gap_rel,
            tau,
            kappa: st.kappa,
            step: 0.0,
        });

        if pres <= opts.tol && dres <= opts.tol && gap_rel.max(compl) <= opts.tol {
            return finish(p, &st, SdpStatus::Optimal, iter, log, pres, dres, gap_rel);
        }

        // infeasibility certificates
        if bty > 0.0 {
            let mut q = inf_norm(&fty) / bty;
            for bi in 0..nb {
                let aty = p.apply_at_block(bi, &st.y);
                let n = p.block_dims[bi];
                let mut worst: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        worst = worst.max((aty[i * n + j] + st.s[bi][(i, j)]).abs());
                    }
                }
                q = q.max(worst / bty);
            }
            if q <= opts.tol_infeas.max(opts.tol * 1e-1) {
                let scale = 1.0 / bty;
                let mut sol =
                    finish(p, &st, SdpStatus::InfeasibleCertificate, iter, log, pres, dres, gap_rel);
                for v in &mut sol.dual_y {
                    *v *= scale * st.tau;
                }
                for sblk in &mut sol.dual_blocks {
                    *sblk *= scale * st.tau;
                }
                return sol;
            }
        }
        if -cobj > 0.0 {
            let scale = -cobj;
            let q = inf_norm(&ax) / scale;
            if q <= opts.tol_infeas.max(opts.tol * 1e-1) {
                let mut sol =
                    finish(p, &st, SdpStatus::UnboundedCertificate, iter, log, pres, dres, gap_rel);
                for xb in &mut sol.primal_blocks {
                    *xb *= st.tau / scale;
                }
                for v in &mut sol.free_values {
                    *v *= st.tau / scale;
                }
                return sol;
            }
        }

        // NT scalings
        let nt: Vec<NtBlock> = match (0..nb)
            .map(|bi| NtBlock::compute(&st.x[bi], &st.s[bi]).map_err(|e| e.0))
            .collect::<Result<Vec<_>, _>>()
        {
            Ok(v) => v,
            Err(e) => return failure_solution(p, SdpStatus::NumericalFailure, &e, opts),
        };

        if let Err(e) = schur.factor(p, &nt, opts.static_reg) {
            return failure_solution(p, SdpStatus::NumericalFailure, &e, opts);
        }

        // Δτ-coefficient system: G (p2, q2) = (b + A(WCW), c_f)
        let mut u2 = p.b.clone();
        if p.has_psd_objective() {
            for bi in 0..nb {
                let cb = DMatrix::from_row_slice(
                    p.block_dims[bi],
                    p.block_dims[bi],
                    &p.obj_block_dense(bi),
                );
                let wcw = &nt[bi].w * &cb * &nt[bi].w;
                apply_a_block_dense(p, bi, &wcw, &mut u2);
            }
        }
        let (p2, q2) = schur.solve(p, &u2, &p.obj_free);

        let solve_direction = |rc: &[DMatrix<f64>],
                               rp_t: &[f64],
                               rd_t: &[DMatrix<f64>],
                               rd_free_t: &[f64],
                               rg_t: f64,
                               rtk: f64|
         -> Direction {
            // u1 = Rp − A(R Rc Rᵀ + W Rd W)
            let mut u1 = rp_t.to_vec();
            let mut rrcr: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
            for bi in 0..nb {
                let g1 = nt[bi].unscale_primal(&rc[bi]);
                let g2 = &nt[bi].w * &rd_t[bi] * &nt[bi].w;
                let e = &g1 + &g2;
                let mut neg = vec![0.0; m];
                apply_a_block_dense(p, bi, &e, &mut neg);
                for r in 0..m {
                    u1[r] -= neg[r];
                }
                rrcr.push(g1);
            }
            let v1: Vec<f64> = rd_free_t.iter().map(|v| -v).collect();
            let (p1, q1) = schur.solve(p, &u1, &v1);

            // scalar elimination for Δτ
            let btp1: f64 = p.b.iter().zip(&p1).map(|(b, y)| b * y).sum();
            let btp2: f64 = p.b.iter().zip(&p2).map(|(b, y)| b * y).sum();
            let cftq1: f64 = p.obj_free.iter().zip(&q1).map(|(c, x)| c * x).sum();
            let cftq2: f64 = p.obj_free.iter().zip(&q2).map(|(c, x)| c * x).sum();
            let mut c_terms_1 = 0.0; // ⟨C, RRcRᵀ + W(Aᵀp1)W + W Rd W⟩
            let mut c_terms_2 = 0.0; // ⟨C, W(Aᵀp2)W⟩ and ⟨C,WCW⟩
            if p.has_psd_objective() {
                for bi in 0..nb {
                    let n = p.block_dims[bi];
                    let cb = DMatrix::from_row_slice(n, n, &p.obj_block_dense(bi));
                    let atp1 =
                        DMatrix::from_row_slice(n, n, &p.apply_at_block(bi, &p1));
                    let atp2 =
                        DMatrix::from_row_slice(n, n, &p.apply_at_block(bi, &p2));
                    let w = &nt[bi].w;
                    c_terms_1 += inner(&cb, &(w * &atp1 * w))
                        + inner(&cb, &rrcr[bi])
                        + inner(&cb, &(w * &rd_t[bi] * w));
                    c_terms_2 += inner(&cb, &(w * &atp2 * w)) - inner(&cb, &(w * &cb * w));
                }
            }
            let g0 = btp1 - c_terms_1 - cftq1 - rtk / st.tau - rg_t;
            let g1 = btp2 - c_terms_2 - cftq2 + st.kappa / st.tau;
            let dtau = -g0 / g1;

            let dy: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a + dtau * b).collect();
            let dx_free: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| a + dtau * b).collect();
            let mut dx = Vec::with_capacity(nb);
            let mut ds = Vec::with_capacity(nb);
            let mut dx_hat = Vec::with_capacity(nb);
            let mut ds_hat = Vec::with_capacity(nb);
            for bi in 0..nb {
                let n = p.block_dims[bi];
                let aty = DMatrix::from_row_slice(n, n, &p.apply_at_block(bi, &dy));
                let cb = DMatrix::from_row_slice(n, n, &p.obj_block_dense(bi));
                let dsb = -&aty + &cb * dtau - &rd_t[bi];
                let dsb = super::nt::symmetrize(dsb);
                let dsh = nt[bi].scale_dual(&dsb);
                let dxh = &rc[bi] - &dsh;
                let dxb = nt[bi].unscale_primal(&dxh);
                dx.push(dxb);
                ds.push(dsb);
                dx_hat.push(dxh);
                ds_hat.push(dsh);
            }
            let dkappa = (rtk - st.kappa * dtau) / st.tau;
            Direction { dx, ds, dx_hat, ds_hat, dx_free, dy, dtau, dkappa }
        };

        // affine direction: Rc = −Λ, targets annihilate residuals
        let rc_aff: Vec<DMatrix<f64>> = nt
            .iter()
            .map(|b| -DMatrix::from_diagonal(&b.lambda))
            .collect();
        let rp_aff: Vec<f64> = rp.iter().map(|v| -v).collect();
        let rd_aff: Vec<DMatrix<f64>> = rd_blocks.iter().map(|r| -r).collect();
        let rd_free_aff: Vec<f64> = rd_free.iter().map(|v| -v).collect();
        let aff = solve_direction(
            &rc_aff,
            &rp_aff,
            &rd_aff,
            &rd_free_aff,
            -rg,
            -st.tau * st.kappa,
        );

        let mut alpha_aff: f64 = 1.0;
        for bi in 0..nb {
            alpha_aff = max_step(&nt[bi].lambda, &aff.dx_hat[bi], alpha_aff);
            alpha_aff = max_step(&nt[bi].lambda, &aff.ds_hat[bi], alpha_aff);
        }
        if aff.dtau < 0.0 {
            alpha_aff = alpha_aff.min(-st.tau / aff.dtau);
        }
        if aff.dkappa < 0.0 {
            alpha_aff = alpha_aff.min(-st.kappa / aff.dkappa);
        }

        // Mehrotra centering parameter
        let mut gap_aff = (st.tau + alpha_aff * aff.dtau) * (st.kappa + alpha_aff * aff.dkappa);
        for bi in 0..nb {
            let xa = &st.x[bi] + &aff.dx[bi] * alpha_aff;
            let sa = &st.s[bi] + &aff.ds[bi] * alpha_aff;
            gap_aff += inner(&xa, &sa);
        }
        let mu_aff = gap_aff / (nu + 1.0);
        let sigma = ((mu_aff / mu).max(0.0).min(1.0)).powi(3);

        // combined direction
        let one_minus = -(1.0 - sigma);
        let rc_comb: Vec<DMatrix<f64>> = (0..nb)
            .map(|bi| {
                let n = p.block_dims[bi];
                let eta = {
                    let prod = &aff.dx_hat[bi] * &aff.ds_hat[bi];
                    super::nt::symmetrize(prod)
                };
                let mut target = -eta;
                for i in 0..n {
                    target[(i, i)] += sigma * mu - nt[bi].lambda[i] * nt[bi].lambda[i];
                }
                nt[bi].lambda_op_inv(&mut target);
                target
            })
            .collect();
        let rp_c: Vec<f64> = rp.iter().map(|v| one_minus * v).collect();
        let rd_c: Vec<DMatrix<f64>> = rd_blocks.iter().map(|r| r * one_minus).collect();
        let rd_free_c: Vec<f64> = rd_free.iter().map(|v| one_minus * v).collect();
        let rtk_c = sigma * mu - st.tau * st.kappa - alpha_aff_sq_guard(aff.dtau, aff.dkappa, alpha_aff);
        let dir = solve_direction(&rc_comb, &rp_c, &rd_c, &rd_free_c, one_minus * rg, rtk_c);

        let mut alpha: f64 = 1.0;
        for bi in 0..nb {
            alpha = max_step(&nt[bi].lambda, &dir.dx_hat[bi], alpha);
            alpha = max_step(&nt[bi].lambda, &dir.ds_hat[bi], alpha);
        }
        if dir.dtau < 0.0 {
            alpha = alpha.min(-st.tau / dir.dtau);
        }
        if dir.dkappa < 0.0 {
            alpha = alpha.min(-st.kappa / dir.dkappa);
        }
        let alpha = 0.99 * alpha;
        if let Some(l) = log.last_mut() {
            l.step = alpha;
        }

        for bi in 0..nb {
            st.x[bi] += &dir.dx[bi] * alpha;
            st.s[bi] += &dir.ds[bi] * alpha;
        }
        for (x, d) in st.x_free.iter_mut().zip(&dir.dx_free) {
            *x += alpha * d;
        }
        for (y, d) in st.y.iter_mut().zip(&dir.dy) {
            *y += alpha * d;
        }
        st.tau += alpha * dir.dtau;
        st.kappa += alpha * dir.dkappa;

        if st.tau <= 1e-12 || !st.tau.is_finite() {
            return failure_solution(p, SdpStatus::NumericalFailure, "tau collapsed", opts);
        }
    }

    let (pres, dres, gap) = last_metrics;
    let mut sol = finish(p, &State { ..st }, SdpStatus::MaxIterations, opts.max_iter, log, pres, dres, gap);
    sol.status = SdpStatus::MaxIterations;
    sol
}

/// Second-order τκ correction term Δτ_aff·Δκ_aff (safeguarded).
fn alpha_aff_sq_guard(dtau: f64, dkappa: f64, _alpha: f64) -> f64 {
    dtau * dkappa
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &SdpProblem,
    st: &State,
    status: SdpStatus,
    iterations: usize,
    log: Vec<IterLog>,
    pres: f64,
    dres: f64,
    gap: f64,
) -> SdpSolution {
    let tau = if st.tau > 0.0 { st.tau } else { 1.0 };
    let primal_blocks: Vec<DMatrix<f64>> = st.x.iter().map(|x| x / tau).collect();
    let dual_blocks: Vec<DMatrix<f64>> = st.s.iter().map(|s| s / tau).collect();
    let free_values: Vec<f64> = st.x_free.iter().map(|v| v / tau).collect();
    let dual_y: Vec<f64> = st.y.iter().map(|v| v / tau).collect();
    let pobj = p.objective_value(
        &primal_blocks.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>(),
        &free_values,
    );
    let dobj: f64 = p.b.iter().zip(&dual_y).map(|(b, y)| b * y).sum();
    SdpSolution {
        status,
        primal_blocks,
        free_values,
        dual_y,
        dual_blocks,
        primal_objective: pobj,
        dual_objective: dobj,
        primal_residual: pres,
        dual_residual: dres,
        duality_gap: gap,
        iterations,
        log,
    }
}

fn failure_solution(
    p: &SdpProblem,
    status: SdpStatus,
    msg: &str,
    opts: &SolveOptions,
) -> SdpSolution {
    if opts.verbose {
        eprintln!("solver failure: {msg}");
    }
    SdpSolution {
        status,
        primal_blocks: p.block_dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
        free_values: vec![0.0; p.n_free],
        dual_y: vec![0.0; p.num_rows()],
        dual_blocks: p.block_dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        duality_gap: f64::INFINITY,
        iterations: 0,
        log: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdpsolve::problem::SdpProblemBuilder;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn trace_min_with_pinned_corner() {
        // min ⟨I, X⟩ s.t. X00 = 1, X ⪰ 0 (2×2) → optimum 1 at diag(1, 0)
        let mut b = SdpProblemBuilder::new(vec![2], 0, 1);
        b.b = vec![1.0];
        b.add_entry(0, 0, 0, 0, 1.0);
        b.add_obj_block(0, 0, 0, 1.0);
        b.add_obj_block(0, 1, 1, 1.0);
        let p = b.finish();
        let sol = solve(&p, &opts());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_objective - 1.0).abs() < 1e-6, "obj {}", sol.primal_objective);
        let x = &sol.primal_blocks[0];
        assert!((x[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(x[(1, 1)].abs() < 1e-6);
        assert!(x[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn lp_embedding_min_x_geq_one() {
        // min x s.t. x − X = 1 with 1×1 slack block X ⪰ 0 → optimum 1
        let mut b = SdpProblemBuilder::new(vec![1], 1, 1);
        b.b = vec![1.0];
        b.add_entry(0, 0, 0, 0, -1.0);
        b.add_free(0, 0, 1.0);
        b.obj_free = vec![1.0];
        let p = b.finish();
        let sol = solve(&p, &opts());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_objective - 1.0).abs() < 1e-6);
        assert!((sol.free_values[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn primal_infeasible_produces_certificate() {
        // X00 = −1 with X ⪰ 0 is infeasible
        let mut b = SdpProblemBuilder::new(vec![1], 0, 1);
        b.b = vec![-1.0];
        b.add_entry(0, 0, 0, 0, 1.0);
        let p = b.finish();
        let sol = solve(&p, &opts());
        assert_eq!(sol.status, SdpStatus::InfeasibleCertificate);
        // Farkas ray: bᵀy > 0 and Aᵀy ⪯ 0
        let bty: f64 = p.b.iter().zip(&sol.dual_y).map(|(b, y)| b * y).sum();
        assert!(bty > 0.5);
        assert!(sol.dual_y[0] < 0.0);
    }

    #[test]
    fn unbounded_produces_ray() {
        // min −X00 s.t. X11 = 1 → unbounded below
        let mut b = SdpProblemBuilder::new(vec![2], 0, 1);
        b.b = vec![1.0];
        b.add_entry(0, 0, 1, 1, 1.0);
        b.add_obj_block(0, 0, 0, -1.0);
        let p = b.finish();
        let sol = solve(&p, &opts());
        assert_eq!(sol.status, SdpStatus::UnboundedCertificate);
        // ray: A(X) ≈ 0, ⟨C, X⟩ < 0
        let ax = p.apply_a(&[sol.primal_blocks[0].as_slice().to_vec()], &[]);
        assert!(ax[0].abs() < 1e-6);
    }

    #[test]
    fn deterministic_bitwise() {
        let mut b = SdpProblemBuilder::new(vec![3], 1, 2);
        b.b = vec![1.0, 0.3];
        b.add_entry(0, 0, 0, 0, 1.0);
        b.add_entry(0, 0, 1, 1, 1.0);
        b.add_entry(1, 0, 0, 2, 0.5);
        b.add_free(1, 0, 1.0);
        b.add_obj_block(0, 2, 2, 1.0);
        b.obj_free = vec![0.1];
        let p = b.finish();
        let s1 = solve(&p, &opts());
        let s2 = solve(&p, &opts());
        assert_eq!(s1.iterations, s2.iterations);
        assert_eq!(s1.primal_objective.to_bits(), s2.primal_objective.to_bits());
        assert_eq!(s1.free_values, s2.free_values);
    }
}
