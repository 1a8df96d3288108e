//! Dense message-passing encoders and factorized action heads with
//! hand-written backpropagation over a flat parameter vector.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::AgentKind;
use crate::brep::{FaceGraph, NODE_FEATURES};

pub const OPS: usize = 4;

/// `C = op(A)·op(B) + beta·C` for row-major matrices, where `op(A)` is
/// `m×k` and `op(B)` is `k×n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold at least the addressed extents checked above.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

/// Tensor slots in the flat parameter vector.
pub mod slot {
    pub const CURRENT: usize = 0;
    pub const TARGET: usize = 6;
    pub const EMBED_W: usize = 0;
    pub const EMBED_B: usize = 1;
    pub const LAYER_W: [usize; 2] = [2, 4];
    pub const LAYER_B: [usize; 2] = [3, 5];
    pub const OP_HW: usize = 12;
    pub const OP_HB: usize = 13;
    pub const OP_OW: usize = 14;
    pub const OP_OB: usize = 15;
    pub const START_HW: usize = 16;
    pub const START_HB: usize = 17;
    pub const START_OW: usize = 18;
    pub const START_OB: usize = 19;
    pub const END_HW: usize = 20;
    pub const END_HB: usize = 21;
    pub const END_OW: usize = 22;
    pub const END_OB: usize = 23;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub offsets: Vec<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(hidden: usize) -> Self {
        let h = hidden;
        let mut entries: Vec<(String, Vec<usize>)> = Vec::new();
        for enc in ["current", "target"] {
            entries.push((format!("{enc}.embed.w"), vec![NODE_FEATURES, h]));
            entries.push((format!("{enc}.embed.b"), vec![h]));
            for l in 1..=2 {
                entries.push((format!("{enc}.layer{l}.w"), vec![h, h]));
                entries.push((format!("{enc}.layer{l}.b"), vec![h]));
            }
        }
        for (head, inputs, outputs) in [("op", 1, OPS), ("start", 2, 1), ("end", 3, 1)] {
            entries.push((format!("{head}.hidden.w"), vec![inputs * h, h]));
            entries.push((format!("{head}.hidden.b"), vec![h]));
            entries.push((format!("{head}.out.w"), vec![h, outputs]));
            entries.push((format!("{head}.out.b"), vec![outputs]));
        }
        let mut offsets = Vec::with_capacity(entries.len());
        let mut total = 0;
        for (_, s) in &entries {
            offsets.push(total);
            total += s.iter().product::<usize>();
        }
        let (names, shapes) = entries.into_iter().unzip();
        Layout { names, shapes, offsets, total }
    }

    pub fn range(&self, slot: usize) -> std::ops::Range<usize> {
        let len: usize = self.shapes[slot].iter().product();
        self.offsets[slot]..self.offsets[slot] + len
    }

    /// Fan-in of a tensor, used to scale the uniform initialization.
    pub fn fan_in(&self, slot: usize) -> usize {
        let s = &self.shapes[slot];
        if s.len() == 2 {
            s[0]
        } else {
            // biases share the fan-in of the weight before them
            self.shapes[slot - 1][0]
        }
    }
}

/// Node features plus the propagation operator of a batch of graphs.
pub struct GraphBatch {
    pub n: usize,
    pub x: Vec<f64>,
    /// Row-sparse propagation matrix, symmetric within each graph.
    pub prop: Vec<Vec<(usize, f64)>>,
    pub segments: Vec<(usize, usize)>,
    pub planar: Vec<bool>,
}

impl GraphBatch {
    pub fn new(graphs: &[&FaceGraph]) -> Self {
        let n: usize = graphs.iter().map(|g| g.nodes.len()).sum();
        let mut x = Vec::with_capacity(n * NODE_FEATURES);
        let mut prop = Vec::with_capacity(n);
        let mut segments = Vec::with_capacity(graphs.len());
        let mut planar = Vec::with_capacity(n);
        let mut base = 0;
        for g in graphs {
            let adj = g.adjacency();
            let deg: Vec<f64> = adj.iter().map(|a| (a.len() + 1) as f64).collect();
            for (i, node) in g.nodes.iter().enumerate() {
                x.extend(node.features());
                planar.push(node.is_planar());
                let mut row = vec![(base + i, 1.0 / deg[i])];
                row.extend(adj[i].iter().map(|&j| (base + j, 1.0 / (deg[i] * deg[j]).sqrt())));
                prop.push(row);
            }
            segments.push((base, g.nodes.len()));
            base += g.nodes.len();
        }
        GraphBatch { n, x, prop, segments, planar }
    }

    fn propagate(&self, h: &[f64], width: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n * width];
        for (i, row) in self.prop.iter().enumerate() {
            let dst = &mut out[i * width..(i + 1) * width];
            for &(j, w) in row {
                for (d, s) in dst.iter_mut().zip(&h[j * width..(j + 1) * width]) {
                    *d += w * s;
                }
            }
        }
        out
    }
}

struct LayerCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
}

pub struct Encoding {
    pub h: Vec<f64>,
    layers: Vec<LayerCache>,
}

/// Dropout probability and the generator drawing the masks.
pub struct Dropout<'a> {
    pub p: f64,
    pub rng: &'a mut ChaCha8Rng,
}

pub struct Net<'a> {
    pub kind: AgentKind,
    pub hidden: usize,
    pub layout: &'a Layout,
    pub data: &'a [f64],
}

fn add_bias(m: &mut [f64], b: &[f64]) {
    for row in m.chunks_mut(b.len()) {
        row.iter_mut().zip(b).for_each(|(v, bb)| *v += bb);
    }
}

fn col_sum_into(m: &[f64], width: usize, out: &mut [f64]) {
    for row in m.chunks(width) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Masked softmax; masked entries are exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Option<Vec<f64>> {
    let max = logits.iter().zip(mask).filter(|(_, &m)| m).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut p: Vec<f64> = logits.iter().zip(mask).map(|(l, &m)| if m { (l - max).exp() } else { 0.0 }).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    Some(p)
}

/// Scores from a one-hidden-layer head: `relu(base_j + shared)·v + c`.
fn head_scores(base: &[f64], shared: &[f64], v: &[f64], c: f64, width: usize) -> Vec<f64> {
    base.chunks(width)
        .map(|row| row.iter().zip(shared).zip(v).map(|((a, b), w)| relu(a + b) * w).sum::<f64>() + c)
        .collect()
}

impl<'a> Net<'a> {
    fn t(&self, slot: usize) -> &'a [f64] {
        &self.data[self.layout.range(slot)]
    }

    pub fn encode(&self, encoder: usize, g: &GraphBatch, mut dropout: Option<&mut Dropout>) -> Encoding {
        let h = self.hidden;
        let mut cur = vec![0.0; g.n * h];
        gemm(g.n, NODE_FEATURES, h, &g.x, false, self.t(encoder + slot::EMBED_W), false, &mut cur, 0.0);
        add_bias(&mut cur, self.t(encoder + slot::EMBED_B));
        let mut layers = Vec::with_capacity(2);
        for l in 0..2 {
            let input = match self.kind {
                AgentKind::Gcn => g.propagate(&cur, h),
                _ => cur,
            };
            let mut pre = vec![0.0; g.n * h];
            gemm(g.n, h, h, &input, false, self.t(encoder + slot::LAYER_W[l]), false, &mut pre, 0.0);
            add_bias(&mut pre, self.t(encoder + slot::LAYER_B[l]));
            let mut out: Vec<f64> = pre.iter().map(|&v| relu(v)).collect();
            let mask = dropout.as_deref_mut().map(|d| {
                let keep = 1.0 / (1.0 - d.p);
                let m: Vec<f64> = (0..out.len()).map(|_| if d.rng.random::<f64>() < d.p { 0.0 } else { keep }).collect();
                out.iter_mut().zip(&m).for_each(|(o, k)| *o *= k);
                m
            });
            layers.push(LayerCache { input, pre, mask });
            cur = out;
        }
        Encoding { h: cur, layers }
    }

    fn encode_backward(&self, encoder: usize, g: &GraphBatch, enc: &Encoding, mut dh: Vec<f64>, grad: &mut [f64]) {
        let h = self.hidden;
        for l in (0..2).rev() {
            let c = &enc.layers[l];
            let mut dz = dh;
            if let Some(m) = &c.mask {
                dz.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
            }
            dz.iter_mut().zip(&c.pre).for_each(|(d, &p)| {
                if p <= 0.0 {
                    *d = 0.0
                }
            });
            let wr = self.layout.range(encoder + slot::LAYER_W[l]);
            gemm(h, g.n, h, &c.input, true, &dz, false, &mut grad[wr.clone()], 1.0);
            col_sum_into(&dz, h, &mut grad[self.layout.range(encoder + slot::LAYER_B[l])]);
            let mut din = vec![0.0; g.n * h];
            gemm(g.n, h, h, &dz, false, &self.data[wr], true, &mut din, 0.0);
            dh = match self.kind {
                AgentKind::Gcn => g.propagate(&din, h),
                _ => din,
            };
        }
        gemm(NODE_FEATURES, g.n, h, &g.x, true, &dh, false, &mut grad[self.layout.range(encoder + slot::EMBED_W)], 1.0);
        col_sum_into(&dh, h, &mut grad[self.layout.range(encoder + slot::EMBED_B)]);
    }

    fn pooled(&self, enc: &Encoding, seg: (usize, usize)) -> Vec<f64> {
        let h = self.hidden;
        let mut out = vec![0.0; h];
        col_sum_into(&enc.h[seg.0 * h..(seg.0 + seg.1) * h], h, &mut out);
        out
    }

    /// `x·W[rows]` for a row vector and a row block of a weight matrix.
    fn row_times_block(&self, x: &[f64], w_slot: usize, block: usize) -> Vec<f64> {
        let h = self.hidden;
        let w = &self.t(w_slot)[block * h * h..(block + 1) * h * h];
        let mut out = vec![0.0; h];
        gemm(1, h, h, x, false, w, false, &mut out, 0.0);
        out
    }

    fn op_logits(&self, hc: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut u = self.row_times_block(hc, slot::OP_HW, 0);
        u.iter_mut().zip(self.t(slot::OP_HB)).for_each(|(a, b)| *a += b);
        let r: Vec<f64> = u.iter().map(|&v| relu(v)).collect();
        let mut logits = self.t(slot::OP_OB).to_vec();
        gemm(1, self.hidden, OPS, &r, false, self.t(slot::OP_OW), false, &mut logits, 1.0);
        (u, logits)
    }

    /// Per-target-node products with the first row block of a head.
    fn node_block(&self, ht: &[f64], n: usize, w_slot: usize) -> Vec<f64> {
        let h = self.hidden;
        let mut out = vec![0.0; n * h];
        gemm(n, h, h, ht, false, &self.t(w_slot)[..h * h], false, &mut out, 0.0);
        out
    }

    fn start_shared(&self, hc: &[f64]) -> Vec<f64> {
        let mut s = self.row_times_block(hc, slot::START_HW, 1);
        s.iter_mut().zip(self.t(slot::START_HB)).for_each(|(a, b)| *a += b);
        s
    }

    fn end_shared(&self, hs: &[f64], hc: &[f64]) -> Vec<f64> {
        let mut s = self.row_times_block(hs, slot::END_HW, 1);
        let c = self.row_times_block(hc, slot::END_HW, 2);
        s.iter_mut().zip(&c).zip(self.t(slot::END_HB)).for_each(|((a, b), bb)| *a += b + bb);
        s
    }
}

/// Target-side quantities reused across every state of one search.
pub struct TargetContext {
    pub n: usize,
    pub ht: Vec<f64>,
    start_base: Vec<f64>,
    end_base: Vec<f64>,
    pub planar: Vec<bool>,
}

/// Logits of one state: op, start, and end for every start.
pub struct StateLogits {
    pub op: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<Vec<f64>>,
}

impl<'a> Net<'a> {
    pub fn target_context(&self, target: &FaceGraph) -> TargetContext {
        let g = GraphBatch::new(&[target]);
        let enc = self.encode(slot::TARGET, &g, None);
        TargetContext {
            n: g.n,
            start_base: self.node_block(&enc.h, g.n, slot::START_HW),
            end_base: self.node_block(&enc.h, g.n, slot::END_HW),
            ht: enc.h,
            planar: g.planar,
        }
    }

    pub fn current_vector(&self, current: &FaceGraph) -> Vec<f64> {
        let g = GraphBatch::new(&[current]);
        let enc = self.encode(slot::CURRENT, &g, None);
        self.pooled(&enc, (0, g.n))
    }

    /// Logits for a state; end logits are computed only for starts in `starts`.
    pub fn logits(&self, ctx: &TargetContext, hc: &[f64], starts: &[bool]) -> StateLogits {
        let h = self.hidden;
        let (_, op) = self.op_logits(hc);
        let start = head_scores(&ctx.start_base, &self.start_shared(hc), self.t(slot::START_OW), self.t(slot::START_OB)[0], h);
        let end = (0..ctx.n)
            .map(|s| {
                if !starts[s] {
                    return Vec::new();
                }
                let shared = self.end_shared(&ctx.ht[s * h..(s + 1) * h], hc);
                head_scores(&ctx.end_base, &shared, self.t(slot::END_OW), self.t(slot::END_OB)[0], h)
            })
            .collect();
        StateLogits { op, start, end }
    }
}

/// One training example resolved to indices.
pub struct Label {
    pub op: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug)]
pub enum LabelIssue {
    Masked(&'static str),
    NoValidAction,
}

/// Softmax cross-entropy gradient `p - onehot`, scaled, and the loss term.
fn ce(logits: &[f64], mask: &[bool], label: usize, what: &'static str) -> Result<(f64, Vec<f64>), LabelIssue> {
    if !mask[label] {
        return Err(LabelIssue::Masked(what));
    }
    let mut p = masked_softmax(logits, mask).ok_or(LabelIssue::NoValidAction)?;
    let loss = -p[label].ln();
    p[label] -= 1.0;
    Ok((loss, p))
}

/// Backward through a head hidden layer given per-row score gradients.
/// Returns the pre-activation gradient rows and their column sum.
fn head_backward(base: &[f64], shared: &[f64], dlogits: &[f64], v: &[f64], dv: &mut [f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let mut du = vec![0.0; base.len()];
    let mut sum = vec![0.0; width];
    for ((row, drow), &dl) in base.chunks(width).zip(du.chunks_mut(width)).zip(dlogits) {
        if dl == 0.0 {
            continue;
        }
        for k in 0..width {
            let u = row[k] + shared[k];
            if u > 0.0 {
                dv[k] += dl * u;
                drow[k] = dl * v[k];
                sum[k] += drow[k];
            }
        }
    }
    (du, sum)
}

fn outer_add(x: &[f64], y: &[f64], out: &mut [f64]) {
    let n = y.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            out[i * n..(i + 1) * n].iter_mut().zip(y).for_each(|(o, yj)| *o += xi * yj);
        }
    }
}

impl<'a> Net<'a> {
    /// Mean loss over a batch and its gradient accumulated into `grad`.
    pub fn loss_and_grad(
        &self,
        currents: &[&FaceGraph],
        targets: &[&FaceGraph],
        labels: &[Label],
        mut dropout: Option<&mut Dropout>,
        grad: &mut [f64],
    ) -> Result<f64, (usize, LabelIssue)> {
        let h = self.hidden;
        let b = labels.len();
        let scale = 1.0 / b as f64;
        let gc = GraphBatch::new(currents);
        let gt = GraphBatch::new(targets);
        let ec = self.encode(slot::CURRENT, &gc, dropout.as_deref_mut());
        let et = self.encode(slot::TARGET, &gt, dropout);
        let start_base = self.node_block(&et.h, gt.n, slot::START_HW);
        let end_base = self.node_block(&et.h, gt.n, slot::END_HW);

        let mut d_start_base = vec![0.0; gt.n * h];
        let mut d_end_base = vec![0.0; gt.n * h];
        let mut dht = vec![0.0; gt.n * h];
        let mut dhc_rows = vec![0.0; gc.n * h];
        let mut total = 0.0;

        for (e, lab) in labels.iter().enumerate() {
            let (cs, cn) = gc.segments[e];
            let (ts, tn) = gt.segments[e];
            let hc = self.pooled(&ec, (cs, cn));
            let mut dhc = vec![0.0; h];

            let op_mask: Vec<bool> = (0..OPS).map(|k| cn > 0 || k == 0).collect();
            let (u, op_logits) = self.op_logits(&hc);
            let (l_op, mut d_op) = ce(&op_logits, &op_mask, lab.op, "op").map_err(|i| (e, i))?;
            d_op.iter_mut().for_each(|v| *v *= scale);
            let r: Vec<f64> = u.iter().map(|&v| relu(v)).collect();
            outer_add(&r, &d_op, &mut grad[self.layout.range(slot::OP_OW)]);
            grad[self.layout.range(slot::OP_OB)].iter_mut().zip(&d_op).for_each(|(g, d)| *g += d);
            let ow = self.t(slot::OP_OW);
            let du: Vec<f64> = (0..h).map(|k| if u[k] > 0.0 { (0..OPS).map(|o| ow[k * OPS + o] * d_op[o]).sum() } else { 0.0 }).collect();
            outer_add(&hc, &du, &mut grad[self.layout.range(slot::OP_HW)]);
            grad[self.layout.range(slot::OP_HB)].iter_mut().zip(&du).for_each(|(g, d)| *g += d);
            let hw = self.t(slot::OP_HW);
            for i in 0..h {
                dhc[i] += hw[i * h..(i + 1) * h].iter().zip(&du).map(|(w, d)| w * d).sum::<f64>();
            }

            let planar = &gt.planar[ts..ts + tn];
            let sbase = &start_base[ts * h..(ts + tn) * h];
            let sshared = self.start_shared(&hc);
            let s_logits = head_scores(sbase, &sshared, self.t(slot::START_OW), self.t(slot::START_OB)[0], h);
            let (l_start, mut d_s) = ce(&s_logits, planar, lab.start, "start").map_err(|i| (e, i))?;
            d_s.iter_mut().for_each(|v| *v *= scale);
            grad[self.layout.range(slot::START_OB)][0] += d_s.iter().sum::<f64>();
            let ow_r = self.layout.range(slot::START_OW);
            let (du_rows, du_sum) = head_backward(sbase, &sshared, &d_s, &self.data[ow_r.clone()], &mut grad[ow_r], h);
            d_start_base[ts * h..(ts + tn) * h].iter_mut().zip(&du_rows).for_each(|(a, b)| *a += b);
            let hw_r = self.layout.range(slot::START_HW);
            outer_add(&hc, &du_sum, &mut grad[hw_r.start + h * h..hw_r.start + 2 * h * h]);
            grad[self.layout.range(slot::START_HB)].iter_mut().zip(&du_sum).for_each(|(g, d)| *g += d);
            gemm(1, h, h, &du_sum, false, &self.t(slot::START_HW)[h * h..2 * h * h], true, &mut dhc, 1.0);

            let ebase = &end_base[ts * h..(ts + tn) * h];
            let hs = &et.h[(ts + lab.start) * h..(ts + lab.start + 1) * h];
            let eshared = self.end_shared(hs, &hc);
            let e_logits = head_scores(ebase, &eshared, self.t(slot::END_OW), self.t(slot::END_OB)[0], h);
            let (l_end, mut d_e) = ce(&e_logits, &super::end_mask(planar, lab.start), lab.end, "end").map_err(|i| (e, i))?;
            d_e.iter_mut().for_each(|v| *v *= scale);
            grad[self.layout.range(slot::END_OB)][0] += d_e.iter().sum::<f64>();
            let ow_r = self.layout.range(slot::END_OW);
            let (du_rows, du_sum) = head_backward(ebase, &eshared, &d_e, &self.data[ow_r.clone()], &mut grad[ow_r], h);
            d_end_base[ts * h..(ts + tn) * h].iter_mut().zip(&du_rows).for_each(|(a, b)| *a += b);
            let hw_r = self.layout.range(slot::END_HW);
            outer_add(hs, &du_sum, &mut grad[hw_r.start + h * h..hw_r.start + 2 * h * h]);
            outer_add(&hc, &du_sum, &mut grad[hw_r.start + 2 * h * h..hw_r.end]);
            grad[self.layout.range(slot::END_HB)].iter_mut().zip(&du_sum).for_each(|(g, d)| *g += d);
            let ew = self.t(slot::END_HW);
            let row = ts + lab.start;
            gemm(1, h, h, &du_sum, false, &ew[h * h..2 * h * h], true, &mut dht[row * h..(row + 1) * h], 1.0);
            gemm(1, h, h, &du_sum, false, &ew[2 * h * h..], true, &mut dhc, 1.0);

            for i in cs..cs + cn {
                dhc_rows[i * h..(i + 1) * h].copy_from_slice(&dhc);
            }
            total += l_op + l_start + l_end;
        }

        for (d, w_slot) in [(&d_start_base, slot::START_HW), (&d_end_base, slot::END_HW)] {
            let r = self.layout.range(w_slot);
            gemm(h, gt.n, h, &et.h, true, d, false, &mut grad[r.start..r.start + h * h], 1.0);
            gemm(gt.n, h, h, d, false, &self.data[r.start..r.start + h * h], true, &mut dht, 1.0);
        }
        self.encode_backward(slot::TARGET, &gt, &et, dht, grad);
        if gc.n > 0 {
            self.encode_backward(slot::CURRENT, &gc, &ec, dhc_rows, grad);
        }
        Ok(total * scale)
    }
}
