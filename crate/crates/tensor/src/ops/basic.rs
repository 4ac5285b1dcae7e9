use crate::error::{contract, shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::tensor::dims2;

impl Graph<'_> {
    /// `(m, k) × (k, n) → (m, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n) = match (sa, sb) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            _ => return shape_err("matmul", &[sa, sb]),
        };
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err("add", &[self.shape(a), self.shape(b)]);
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Add(a, b), &[a, b]))
    }

    /// Adds a length-`c` bias to every row of an `(r, c)` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        let cols = match (dims2(sx), sb) {
            (Some((_, c)), [n]) if *n == c && sx.len() == 2 => c,
            _ => return shape_err("add_row", &[sx, sb]),
        };
        let b = self.value(bias);
        let out = self
            .value(x)
            .chunks(cols)
            .flat_map(|row| row.iter().zip(b).map(|(v, w)| v + w))
            .collect();
        let shape = sx.to_vec();
        Ok(self.push(shape, out, Op::AddRow(x, bias), &[x, bias]))
    }

    /// Elementwise product of equal-shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err("mul", &[self.shape(a), self.shape(b)]);
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * factor).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Scale(x, factor), &[x])
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return contract("concat_cols", "no inputs");
        }
        let rows = self.shape(parts[0]).first().copied().unwrap_or(0);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            match self.shape(p) {
                [r, c] if *r == rows => widths.push(*c),
                _ => {
                    let shapes: Vec<&[usize]> = parts.iter().map(|&p| self.shape(p)).collect();
                    return shape_err("concat_cols", &shapes);
                }
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push(vec![rows, total], out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Stacks rank-2 tensors with equal column counts along rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return contract("concat_rows", "no inputs");
        }
        let cols = match self.shape(parts[0]) {
            [_, c] => *c,
            s => return shape_err("concat_rows", &[s]),
        };
        let mut rows = 0;
        for &p in parts {
            match self.shape(p) {
                [r, c] if *c == cols => rows += r,
                _ => {
                    let shapes: Vec<&[usize]> = parts.iter().map(|&p| self.shape(p)).collect();
                    return shape_err("concat_rows", &shapes);
                }
            }
        }
        let mut out = Vec::with_capacity(rows * cols);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(vec![rows, cols], out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Rows `start..end` of a rank-2 tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let cols = match self.shape(x) {
            [r, c] if start < end && end <= *r => *c,
            s => return shape_err("slice_rows", &[s, &[start, end]]),
        };
        let out = self.value(x)[start * cols..end * cols].to_vec();
        Ok(self.push(vec![end - start, cols], out, Op::SliceRows(x, start), &[x]))
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = match self.shape(x) {
            [r, c] if start < end && end <= *c => (*r, *c),
            s => return shape_err("slice_cols", &[s, &[start, end]]),
        };
        let v = self.value(x);
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&v[r * cols + start..r * cols + end]);
        }
        Ok(self.push(vec![rows, end - start], out, Op::SliceCols(x, start), &[x]))
    }

    /// Embedding lookup: row `indices[i]` of `table` becomes output row `i`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (rows, cols) = match self.shape(table) {
            [r, c] => (*r, *c),
            s => return shape_err("gather_rows", &[s]),
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return contract("gather_rows", format!("index {bad} out of range for {rows} rows"));
        }
        let v = self.value(table);
        let mut out = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            out.extend_from_slice(&v[i * cols..(i + 1) * cols]);
        }
        Ok(self.push(
            vec![indices.len(), cols],
            out,
            Op::GatherRows(table, indices.to_vec()),
            &[table],
        ))
    }

    /// Places row `i` of `x` at output row `indices[i]` of a `total_rows`
    /// matrix; untouched rows are zero.
    pub fn scatter_rows(&mut self, x: Var, indices: &[usize], total_rows: usize) -> Result<Var> {
        let cols = match self.shape(x) {
            [r, c] if *r == indices.len() => *c,
            s => return shape_err("scatter_rows", &[s, &[indices.len()]]),
        };
        let mut seen = vec![false; total_rows];
        for &i in indices {
            if i >= total_rows || std::mem::replace(&mut seen[i], true) {
                return contract("scatter_rows", format!("invalid or repeated target row {i}"));
            }
        }
        let v = self.value(x);
        let mut out = vec![0.0; total_rows * cols];
        for (src, &dst) in indices.iter().enumerate() {
            out[dst * cols..(dst + 1) * cols].copy_from_slice(&v[src * cols..(src + 1) * cols]);
        }
        Ok(self.push(
            vec![total_rows, cols],
            out,
            Op::ScatterRows(x, indices.to_vec()),
            &[x],
        ))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(Vec::new(), vec![s], Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Mean over the elements whose mask entry is set.
    pub fn masked_mean(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        if mask.len() != self.value(x).len() {
            return shape_err("masked_mean", &[self.shape(x), &[mask.len()]]);
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return contract("masked_mean", "mask selects no elements");
        }
        let s: f64 = self
            .value(x)
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v)
            .sum();
        Ok(self.push(
            Vec::new(),
            vec![s / count as f64],
            Op::MaskedMean(x, mask.to_vec()),
            &[x],
        ))
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aik * bv;
            }
        }
    }
    out
}

/// `da += g × bᵀ` for `g: (m, n)`, `b: (k, n)`.
pub(crate) fn acc_grad_lhs(da: &mut [f64], g: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `db += aᵀ × g` for `a: (m, k)`, `g: (m, n)`.
pub(crate) fn acc_grad_rhs(db: &mut [f64], a: &[f64], g: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (d, &gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *d += aip * gv;
            }
        }
    }
}

pub(crate) fn backward(op: &Op, out_shape: &[usize], g: &[f64], sink: &mut GradSink<'_, '_>) {
    match op {
        Op::MatMul(a, b) => {
            let (m, k) = (sink.shape(*a)[0], sink.shape(*a)[1]);
            let n = sink.shape(*b)[1];
            if sink.wants(*a) {
                let bv = sink.value(*b);
                acc_grad_lhs(sink.slot(*a).unwrap(), g, bv, m, k, n);
            }
            if sink.wants(*b) {
                let av = sink.value(*a);
                acc_grad_rhs(sink.slot(*b).unwrap(), av, g, m, k, n);
            }
        }
        Op::Add(a, b) => {
            sink.add(*a, g);
            sink.add(*b, g);
        }
        Op::AddRow(x, bias) => {
            sink.add(*x, g);
            let cols = sink.shape(*bias)[0];
            if let Some(db) = sink.slot(*bias) {
                for row in g.chunks(cols) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
            }
        }
        Op::Mul(a, b) => {
            if sink.wants(*a) {
                let d: Vec<f64> = g.iter().zip(sink.value(*b)).map(|(x, y)| x * y).collect();
                sink.add(*a, &d);
            }
            if sink.wants(*b) {
                let d: Vec<f64> = g.iter().zip(sink.value(*a)).map(|(x, y)| x * y).collect();
                sink.add(*b, &d);
            }
        }
        Op::Scale(x, f) => {
            let d: Vec<f64> = g.iter().map(|v| v * f).collect();
            sink.add(*x, &d);
        }
        Op::ConcatCols(parts) => {
            let (rows, total) = (out_shape[0], out_shape[1]);
            let mut offset = 0;
            for &p in parts {
                let w = sink.shape(p)[1];
                if let Some(dp) = sink.slot(p) {
                    for r in 0..rows {
                        for c in 0..w {
                            dp[r * w + c] += g[r * total + offset + c];
                        }
                    }
                }
                offset += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = sink.value(p).len();
                sink.add(p, &g[offset..offset + n]);
                offset += n;
            }
        }
        Op::SliceRows(x, start) => {
            let cols = out_shape[1];
            if let Some(dx) = sink.slot(*x) {
                for (d, v) in dx[start * cols..].iter_mut().zip(g) {
                    *d += v;
                }
            }
        }
        Op::SliceCols(x, start) => {
            let (rows, w) = (out_shape[0], out_shape[1]);
            let cols = sink.shape(*x)[1];
            if let Some(dx) = sink.slot(*x) {
                for r in 0..rows {
                    for c in 0..w {
                        dx[r * cols + start + c] += g[r * w + c];
                    }
                }
            }
        }
        Op::GatherRows(table, indices) => {
            let cols = out_shape[1];
            if let Some(dt) = sink.slot(*table) {
                for (src, &i) in indices.iter().enumerate() {
                    for c in 0..cols {
                        dt[i * cols + c] += g[src * cols + c];
                    }
                }
            }
        }
        Op::ScatterRows(x, indices) => {
            let cols = out_shape[1];
            if let Some(dx) = sink.slot(*x) {
                for (src, &dst) in indices.iter().enumerate() {
                    for c in 0..cols {
                        dx[src * cols + c] += g[dst * cols + c];
                    }
                }
            }
        }
        Op::Sum(x) => {
            if let Some(dx) = sink.slot(*x) {
                dx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::MaskedMean(x, mask) => {
            let count = mask.iter().filter(|&&m| m).count() as f64;
            if let Some(dx) = sink.slot(*x) {
                for (d, &m) in dx.iter_mut().zip(mask) {
                    if m {
                        *d += g[0] / count;
                    }
                }
            }
        }
        _ => unreachable!("not a basic op"),
    }
}

#[cfg(test)]
mod tests {
    use crate::{Graph, Tensor};

    #[test]
    fn add_vectors() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c), &[4.0, 6.0]);
    }

    #[test]
    fn matmul_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![2, 3]));
        let b = g.constant(Tensor::zeros(vec![3, 4]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.shape(c), &[2, 4]);
        let err = g.matmul(b, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[3, 4]"), "{err}");
    }

    #[test]
    fn matmul_values() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.constant(Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &[17.0, 39.0]);
    }

    #[test]
    fn slicing_and_concat_round_trip() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 3, (0..6).map(f64::from).collect()).unwrap());
        let left = g.slice_cols(x, 0, 1).unwrap();
        let right = g.slice_cols(x, 1, 3).unwrap();
        let back = g.concat_cols(&[left, right]).unwrap();
        assert_eq!(g.value(back), g.value(x));
        let top = g.slice_rows(x, 0, 1).unwrap();
        let bottom = g.slice_rows(x, 1, 2).unwrap();
        let back = g.concat_rows(&[top, bottom]).unwrap();
        assert_eq!(g.value(back), g.value(x));
        assert!(g.slice_rows(x, 1, 1).is_err());
        assert!(g.slice_cols(x, 0, 4).is_err());
    }

    #[test]
    fn gather_then_scatter() {
        let mut g = Graph::new();
        let t = g.constant(Tensor::matrix(3, 2, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap());
        let picked = g.gather_rows(t, &[2, 0]).unwrap();
        assert_eq!(g.value(picked), &[3.0, 3.0, 1.0, 1.0]);
        let placed = g.scatter_rows(picked, &[0, 3], 4).unwrap();
        assert_eq!(g.value(placed), &[3.0, 3.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert!(g.gather_rows(t, &[3]).is_err());
        assert!(g.scatter_rows(picked, &[1, 1], 4).is_err());
    }

    #[test]
    fn masked_mean_ignores_unset_positions() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1.0, 100.0, 3.0]));
        let m = g.masked_mean(x, &[true, false, true]).unwrap();
        assert_eq!(g.scalar(m), 2.0);
        assert!(g.masked_mean(x, &[false; 3]).is_err());
    }
}
