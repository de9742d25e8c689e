//! Standard-form SDP data: minimize Σ_b ⟨C_b, X_b⟩ + c_fᵀ x_f subject to
//! per-row equalities Σ_b ⟨A_{r,b}, X_b⟩ + f_rᵀ x_f = b_r with X_b ⪰ 0 and
//! x_f free.
//!
//! Symmetric matrices are stored as upper-triangle entry triplets (i ≤ j);
//! an off-diagonal value v means the matrix holds v at both (i, j) and
//! (j, i), so ⟨A, X⟩ contributes 2·v·X_ij for i < j.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("row {0} touches no PSD block")]
    FreeOnlyRow(usize),
    #[error("entry out of bounds: {0}")]
    OutOfBounds(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// All equality-row entries touching one PSD block, grouped by row.
#[derive(Debug, Clone, Default)]
pub struct BlockEntries {
    /// Global row ids with at least one entry here, ascending.
    pub rows: Vec<u32>,
    /// CSR offsets into `coords`/`vals`, one span per entry of `rows`.
    pub ptr: Vec<usize>,
    /// Upper-triangle coordinates (i ≤ j).
    pub coords: Vec<(u32, u32)>,
    pub vals: Vec<f64>,
}

/// Sparse m × n_free matrix in CSR form.
#[derive(Debug, Clone, Default)]
pub struct CsrRows {
    pub ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrRows {
    pub fn empty(m: usize) -> Self {
        CsrRows { ptr: vec![0; m + 1], cols: vec![], vals: vec![] }
    }
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub n_free: usize,
    pub b: Vec<f64>,
    pub blocks: Vec<BlockEntries>,
    pub free_rows: CsrRows,
    /// Objective on PSD blocks, upper-triangle triplets per block.
    pub obj_blocks: Vec<Vec<(u32, u32, f64)>>,
    /// Objective on free variables.
    pub obj_free: Vec<f64>,
}

impl SdpProblem {
    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let m = self.num_rows();
        if self.blocks.len() != self.block_dims.len() {
            return Err(ProblemError::Dimension("blocks vs block_dims".into()));
        }
        if self.obj_blocks.len() != self.block_dims.len() {
            return Err(ProblemError::Dimension("obj_blocks vs block_dims".into()));
        }
        if self.obj_free.len() != self.n_free {
            return Err(ProblemError::Dimension("obj_free vs n_free".into()));
        }
        if self.free_rows.ptr.len() != m + 1 {
            return Err(ProblemError::Dimension("free_rows ptr".into()));
        }
        let mut touched = vec![false; m];
        for (b, be) in self.blocks.iter().enumerate() {
            let dim = self.block_dims[b] as u32;
            if be.ptr.len() != be.rows.len() + 1 {
                return Err(ProblemError::Dimension(format!("block {b} csr")));
            }
            for &r in &be.rows {
                if r as usize >= m {
                    return Err(ProblemError::OutOfBounds(format!("row {r}")));
                }
                touched[r as usize] = true;
            }
            for &(i, j) in &be.coords {
                if i > j || j >= dim {
                    return Err(ProblemError::OutOfBounds(format!(
                        "block {b} coord ({i},{j})"
                    )));
                }
            }
        }
        for c in &self.free_rows.cols {
            if *c as usize >= self.n_free {
                return Err(ProblemError::OutOfBounds(format!("free col {c}")));
            }
        }
        if let Some(r) = touched.iter().position(|t| !t) {
            return Err(ProblemError::FreeOnlyRow(r));
        }
        Ok(())
    }

    /// ⟨A_r, X⟩ summed over blocks plus the free part, for all rows.
    pub fn apply_a(&self, x_blocks: &[Vec<f64>], x_free: &[f64]) -> Vec<f64> {
        let m = self.num_rows();
        let mut out = vec![0.0; m];
        for (b, be) in self.blocks.iter().enumerate() {
            let n = self.block_dims[b];
            let xb = &x_blocks[b];
            for (ri, &row) in be.rows.iter().enumerate() {
                let mut acc = 0.0;
                for e in be.ptr[ri]..be.ptr[ri + 1] {
                    let (i, j) = be.coords[e];
                    let v = be.vals[e];
                    let xij = xb[i as usize * n + j as usize];
                    acc += if i == j { v * xij } else { 2.0 * v * xij };
                }
                out[row as usize] += acc;
            }
        }
        for r in 0..m {
            for e in self.free_rows.ptr[r]..self.free_rows.ptr[r + 1] {
                out[r] += self.free_rows.vals[e] * x_free[self.free_rows.cols[e] as usize];
            }
        }
        out
    }

    /// Adjoint on the PSD side: (Aᵀy)_b as a full symmetric matrix.
    pub fn apply_at_block(&self, b: usize, y: &[f64]) -> Vec<f64> {
        let n = self.block_dims[b];
        let mut out = vec![0.0; n * n];
        let be = &self.blocks[b];
        for (ri, &row) in be.rows.iter().enumerate() {
            let w = y[row as usize];
            if w == 0.0 {
                continue;
            }
            for e in be.ptr[ri]..be.ptr[ri + 1] {
                let (i, j) = be.coords[e];
                let v = be.vals[e] * w;
                out[i as usize * n + j as usize] += v;
                if i != j {
                    out[j as usize * n + i as usize] += v;
                }
            }
        }
        out
    }

    /// Adjoint on the free side: Fᵀy.
    pub fn apply_ft(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for r in 0..self.num_rows() {
            let w = y[r];
            if w == 0.0 {
                continue;
            }
            for e in self.free_rows.ptr[r]..self.free_rows.ptr[r + 1] {
                out[self.free_rows.cols[e] as usize] += self.free_rows.vals[e] * w;
            }
        }
        out
    }

    /// Objective block C_b as a full symmetric matrix.
    pub fn obj_block_dense(&self, b: usize) -> Vec<f64> {
        let n = self.block_dims[b];
        let mut out = vec![0.0; n * n];
        for &(i, j, v) in &self.obj_blocks[b] {
            out[i as usize * n + j as usize] += v;
            if i != j {
                out[j as usize * n + i as usize] += v;
            }
        }
        out
    }

    /// Σ_b ⟨C_b, X_b⟩ + c_fᵀ x_f.
    pub fn objective_value(&self, x_blocks: &[Vec<f64>], x_free: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (b, entries) in self.obj_blocks.iter().enumerate() {
            let n = self.block_dims[b];
            for &(i, j, v) in entries {
                let xij = x_blocks[b][i as usize * n + j as usize];
                acc += if i == j { v * xij } else { 2.0 * v * xij };
            }
        }
        for (c, x) in self.obj_free.iter().zip(x_free) {
            acc += c * x;
        }
        acc
    }

    pub fn has_psd_objective(&self) -> bool {
        self.obj_blocks.iter().any(|e| !e.is_empty())
    }

    // --- sparse text format --------------------------------------------------
    //
    // Line-oriented; `#` starts a comment. Sections:
    //   sdp v1
    //   dims: <m> <n_free> <n_blocks>
    //   block <idx> <dim>
    //   rhs <row> <val>
    //   objf <col> <val>
    //   objb <block> <i> <j> <val>
    //   a <row> <block> <i> <j> <val>
    //   f <row> <col> <val>

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "sdp v1").unwrap();
        writeln!(
            s,
            "dims: {} {} {}",
            self.num_rows(),
            self.n_free,
            self.block_dims.len()
        )
        .unwrap();
        for (i, d) in self.block_dims.iter().enumerate() {
            writeln!(s, "block {i} {d}").unwrap();
        }
        for (r, v) in self.b.iter().enumerate() {
            if *v != 0.0 {
                writeln!(s, "rhs {r} {v:.17e}").unwrap();
            }
        }
        for (c, v) in self.obj_free.iter().enumerate() {
            if *v != 0.0 {
                writeln!(s, "objf {c} {v:.17e}").unwrap();
            }
        }
        for (b, entries) in self.obj_blocks.iter().enumerate() {
            for &(i, j, v) in entries {
                writeln!(s, "objb {b} {i} {j} {v:.17e}").unwrap();
            }
        }
        for (b, be) in self.blocks.iter().enumerate() {
            for (ri, &row) in be.rows.iter().enumerate() {
                for e in be.ptr[ri]..be.ptr[ri + 1] {
                    let (i, j) = be.coords[e];
                    writeln!(s, "a {row} {b} {i} {j} {:.17e}", be.vals[e]).unwrap();
                }
            }
        }
        for r in 0..self.num_rows() {
            for e in self.free_rows.ptr[r]..self.free_rows.ptr[r + 1] {
                writeln!(s, "f {r} {} {:.17e}", self.free_rows.cols[e], self.free_rows.vals[e])
                    .unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ProblemError> {
        let mut m = 0usize;
        let mut n_free = 0usize;
        let mut block_dims: Vec<usize> = Vec::new();
        let mut b_vec: Vec<f64> = Vec::new();
        let mut obj_free: Vec<f64> = Vec::new();
        let mut obj_blocks: Vec<Vec<(u32, u32, f64)>> = Vec::new();
        let mut a_entries: Vec<(usize, usize, u32, u32, f64)> = Vec::new();
        let mut f_entries: Vec<(usize, u32, f64)> = Vec::new();
        let err = |line: usize, msg: &str| ProblemError::Parse { line, msg: msg.to_string() };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "sdp" => {}
                "dims:" => {
                    if toks.len() != 4 {
                        return Err(err(ln, "dims: wants 3 fields"));
                    }
                    m = toks[1].parse().map_err(|_| err(ln, "bad m"))?;
                    n_free = toks[2].parse().map_err(|_| err(ln, "bad n_free"))?;
                    let nb: usize = toks[3].parse().map_err(|_| err(ln, "bad n_blocks"))?;
                    block_dims = vec![0; nb];
                    b_vec = vec![0.0; m];
                    obj_free = vec![0.0; n_free];
                    obj_blocks = vec![Vec::new(); nb];
                }
                "block" => {
                    let i: usize = toks[1].parse().map_err(|_| err(ln, "bad idx"))?;
                    block_dims[i] = toks[2].parse().map_err(|_| err(ln, "bad dim"))?;
                }
                "rhs" => {
                    let r: usize = toks[1].parse().map_err(|_| err(ln, "bad row"))?;
                    b_vec[r] = toks[2].parse().map_err(|_| err(ln, "bad val"))?;
                }
                "objf" => {
                    let c: usize = toks[1].parse().map_err(|_| err(ln, "bad col"))?;
                    obj_free[c] = toks[2].parse().map_err(|_| err(ln, "bad val"))?;
                }
                "objb" => {
                    let b: usize = toks[1].parse().map_err(|_| err(ln, "bad block"))?;
                    obj_blocks[b].push((
                        toks[2].parse().map_err(|_| err(ln, "bad i"))?,
                        toks[3].parse().map_err(|_| err(ln, "bad j"))?,
                        toks[4].parse().map_err(|_| err(ln, "bad val"))?,
                    ));
                }
                "a" => a_entries.push((
                    toks[1].parse().map_err(|_| err(ln, "bad row"))?,
                    toks[2].parse().map_err(|_| err(ln, "bad block"))?,
                    toks[3].parse().map_err(|_| err(ln, "bad i"))?,
                    toks[4].parse().map_err(|_| err(ln, "bad j"))?,
                    toks[5].parse().map_err(|_| err(ln, "bad val"))?,
                )),
                "f" => f_entries.push((
                    toks[1].parse().map_err(|_| err(ln, "bad row"))?,
                    toks[2].parse().map_err(|_| err(ln, "bad col"))?,
                    toks[3].parse().map_err(|_| err(ln, "bad val"))?,
                )),
                other => return Err(err(ln, &format!("unknown record {other}"))),
            }
        }
        let mut builder = SdpProblemBuilder::new(block_dims, n_free, m);
        builder.b = b_vec;
        builder.obj_free = obj_free;
        for (b, entries) in obj_blocks.into_iter().enumerate() {
            for (i, j, v) in entries {
                builder.add_obj_block(b, i, j, v);
            }
        }
        for (r, b, i, j, v) in a_entries {
            builder.add_entry(r, b, i, j, v);
        }
        for (r, c, v) in f_entries {
            builder.add_free(r, c as usize, v);
        }
        Ok(builder.finish())
    }
}

/// Incremental builder; entries may arrive in any order.
#[derive(Debug)]
pub struct SdpProblemBuilder {
    block_dims: Vec<usize>,
    n_free: usize,
    pub b: Vec<f64>,
    pub obj_free: Vec<f64>,
    obj_blocks: Vec<Vec<(u32, u32, f64)>>,
    entries: Vec<Vec<(u32, u32, u32, f64)>>, // per block: (row, i, j, val)
    free: Vec<(u32, u32, f64)>,
}

impl SdpProblemBuilder {
    pub fn new(block_dims: Vec<usize>, n_free: usize, m: usize) -> Self {
        let nb = block_dims.len();
        SdpProblemBuilder {
            block_dims,
            n_free,
            b: vec![0.0; m],
            obj_free: vec![0.0; n_free],
            obj_blocks: vec![Vec::new(); nb],
            entries: vec![Vec::new(); nb],
            free: Vec::new(),
        }
    }

    pub fn add_entry(&mut self, row: usize, block: usize, i: u32, j: u32, val: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.entries[block].push((row as u32, i, j, val));
    }

    pub fn add_free(&mut self, row: usize, col: usize, val: f64) {
        self.free.push((row as u32, col as u32, val));
    }

    pub fn add_obj_block(&mut self, block: usize, i: u32, j: u32, val: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.obj_blocks[block].push((i, j, val));
    }

    pub fn finish(mut self) -> SdpProblem {
        let m = self.b.len();
        let mut blocks = Vec::with_capacity(self.entries.len());
        for ent in &mut self.entries {
            ent.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
            let mut rows = Vec::new();
            let mut ptr = vec![0usize];
            let mut coords: Vec<(u32, u32)> = Vec::new();
            let mut vals: Vec<f64> = Vec::new();
            let mut k = 0usize;
            while k < ent.len() {
                let r = ent[k].0;
                rows.push(r);
                let row_start = coords.len();
                while k < ent.len() && ent[k].0 == r {
                    let (_, i, j, v) = ent[k];
                    if coords.len() > row_start && *coords.last().unwrap() == (i, j) {
                        *vals.last_mut().unwrap() += v;
                    } else {
                        coords.push((i, j));
                        vals.push(v);
                    }
                    k += 1;
                }
                ptr.push(coords.len());
            }
            blocks.push(BlockEntries { rows, ptr, coords, vals });
        }
        // merge duplicate free entries per (row, col)
        self.free.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        self.free.dedup_by(|next, prev| {
            if next.0 == prev.0 && next.1 == prev.1 {
                prev.2 += next.2;
                true
            } else {
                false
            }
        });
        let mut fr = CsrRows::empty(m);
        let mut ptr = vec![0usize; m + 1];
        for &(r, _, _) in &self.free {
            ptr[r as usize + 1] += 1;
        }
        for i in 0..m {
            ptr[i + 1] += ptr[i];
        }
        fr.ptr = ptr;
        fr.cols = self.free.iter().map(|&(_, c, _)| c).collect();
        fr.vals = self.free.iter().map(|&(_, _, v)| v).collect();
        for obj in &mut self.obj_blocks {
            obj.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        }
        SdpProblem {
            block_dims: self.block_dims,
            n_free: self.n_free,
            b: self.b,
            blocks,
            free_rows: fr,
            obj_blocks: self.obj_blocks,
            obj_free: self.obj_free,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SdpProblem {
        // one 2×2 block, one free var, rows: X00 = 1, 2X01 + u = 0.5
        let mut b = SdpProblemBuilder::new(vec![2], 1, 2);
        b.b = vec![1.0, 0.5];
        b.add_entry(0, 0, 0, 0, 1.0);
        b.add_entry(1, 0, 0, 1, 1.0);
        b.add_free(1, 0, 1.0);
        b.add_obj_block(0, 0, 0, 1.0);
        b.add_obj_block(0, 1, 1, 1.0);
        b.finish()
    }

    #[test]
    fn apply_operators() {
        let p = tiny();
        p.validate().unwrap();
        let x = vec![vec![2.0, 0.3, 0.3, 1.0]];
        let xf = vec![0.25];
        let ax = p.apply_a(&x, &xf);
        assert_eq!(ax, vec![2.0, 2.0 * 0.3 + 0.25]);
        let aty = p.apply_at_block(0, &[1.0, 2.0]);
        // y0·E00 + y1·(E01+E10): [[1, 2], [2, 0]]
        assert_eq!(aty, vec![1.0, 2.0, 2.0, 0.0]);
        assert_eq!(p.apply_ft(&[1.0, 2.0]), vec![2.0]);
        assert_eq!(p.objective_value(&x, &xf), 3.0);
    }

    #[test]
    fn text_round_trip() {
        let p = tiny();
        let text = p.to_text();
        let q = SdpProblem::from_text(&text).unwrap();
        assert_eq!(p.block_dims, q.block_dims);
        assert_eq!(p.b, q.b);
        let x = vec![vec![1.0, -0.5, -0.5, 2.0]];
        let xf = vec![1.5];
        assert_eq!(p.apply_a(&x, &xf), q.apply_a(&x, &xf));
        assert_eq!(p.objective_value(&x, &xf), q.objective_value(&x, &xf));
    }

    #[test]
    fn free_only_row_rejected() {
        let mut b = SdpProblemBuilder::new(vec![1], 1, 1);
        b.b = vec![1.0];
        b.add_free(0, 0, 1.0);
        let p = b.finish();
        assert!(matches!(p.validate(), Err(ProblemError::FreeOnlyRow(0))));
    }
}
