//! A plain character-only transformer encoder written directly over slices,
//! with no tape. It is the reference the glyph- and pinyin-free fusion model
//! must match exactly.

use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharShape {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub vocab: usize,
    pub max_len: usize,
}

impl CharShape {
    /// Closed-form parameter count: embeddings, per-layer attention
    /// (query/value/output with bias, key without), two norms, the
    /// feed-forward pair, and the MLM head.
    pub fn param_count(&self) -> usize {
        let (d, v) = (self.hidden, self.vocab);
        let attention = 4 * d * d + 3 * d;
        let ffn = 2 * d * 4 * d + 4 * d + d;
        let norms = 2 * 2 * d;
        let head = d * d + d + 2 * d + d * v + v;
        v * d + self.max_len * d + self.layers * (attention + ffn + norms) + head
    }

    /// Every tensor name and shape, listed by hand in sorted order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>)> {
        let (d, v) = (self.hidden, self.vocab);
        let mut out =
            vec![("embed.char".to_string(), vec![v, d]), ("embed.position".to_string(), vec![self.max_len, d])];
        for l in 0..self.layers {
            let p = |s: &str| format!("layer.{l}.{s}");
            out.extend([
                (p("attn.key.weight"), vec![d, d]),
                (p("attn.norm.bias"), vec![d]),
                (p("attn.norm.gain"), vec![d]),
                (p("attn.output.bias"), vec![d]),
                (p("attn.output.weight"), vec![d, d]),
                (p("attn.query.bias"), vec![d]),
                (p("attn.query.weight"), vec![d, d]),
                (p("attn.value.bias"), vec![d]),
                (p("attn.value.weight"), vec![d, d]),
                (p("ffn.inner.bias"), vec![4 * d]),
                (p("ffn.inner.weight"), vec![d, 4 * d]),
                (p("ffn.norm.bias"), vec![d]),
                (p("ffn.norm.gain"), vec![d]),
                (p("ffn.outer.bias"), vec![d]),
                (p("ffn.outer.weight"), vec![4 * d, d]),
            ]);
        }
        out.extend([
            ("mlm.dense.bias".to_string(), vec![d]),
            ("mlm.dense.weight".to_string(), vec![d, d]),
            ("mlm.norm.bias".to_string(), vec![d]),
            ("mlm.norm.gain".to_string(), vec![d]),
            ("mlm.output.bias".to_string(), vec![v]),
            ("mlm.output.weight".to_string(), vec![d, v]),
        ]);
        out.sort();
        out
    }
}

/// Row-major matrix with its column count.
#[derive(Debug, Clone, PartialEq)]
struct Mat {
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone)]
struct Layer {
    query: (Mat, Vec<f64>),
    key: Mat,
    value: (Mat, Vec<f64>),
    output: (Mat, Vec<f64>),
    attn_norm: (Vec<f64>, Vec<f64>),
    inner: (Mat, Vec<f64>),
    outer: (Mat, Vec<f64>),
    ffn_norm: (Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct CharEncoder {
    pub shape: CharShape,
    chars: Mat,
    positions: Mat,
    layers: Vec<Layer>,
    norm_eps: f64,
}

impl CharEncoder {
    /// Reads the tensors named by [`CharShape::tensors`] out of `params`.
    pub fn from_params(shape: CharShape, params: &ParamStore, norm_eps: f64) -> Result<Self> {
        for (name, dims) in shape.tensors() {
            let t = params.get(&name)?;
            if t.shape() != dims.as_slice() {
                return Err(Error::Checkpoint {
                    tensor: name,
                    msg: format!("shape {:?}, expected {dims:?}", t.shape()),
                });
            }
        }
        let mat = |n: &str| -> Result<Mat> {
            let t = params.get(n)?;
            Ok(Mat { cols: t.last_dim(), data: t.data().to_vec() })
        };
        let vec = |n: &str| -> Result<Vec<f64>> { Ok(params.get(n)?.data().to_vec()) };
        let mut layers = Vec::with_capacity(shape.layers);
        for l in 0..shape.layers {
            let p = |s: &str| format!("layer.{l}.{s}");
            let affine = |s: &str| -> Result<(Mat, Vec<f64>)> {
                Ok((mat(&p(&format!("{s}.weight")))?, vec(&p(&format!("{s}.bias")))?))
            };
            let ln = |s: &str| -> Result<(Vec<f64>, Vec<f64>)> {
                Ok((vec(&p(&format!("{s}.gain")))?, vec(&p(&format!("{s}.bias")))?))
            };
            layers.push(Layer {
                query: affine("attn.query")?,
                key: mat(&p("attn.key.weight"))?,
                value: affine("attn.value")?,
                output: affine("attn.output")?,
                attn_norm: ln("attn.norm")?,
                inner: affine("ffn.inner")?,
                outer: affine("ffn.outer")?,
                ffn_norm: ln("ffn.norm")?,
            });
        }
        Ok(CharEncoder { shape, chars: mat("embed.char")?, positions: mat("embed.position")?, layers, norm_eps })
    }

    /// Final hidden states `[T × D]`; `keep[t] == false` hides key `t`.
    pub fn forward(&self, ids: &[u32], keep: &[bool]) -> Result<Tensor> {
        let t = ids.len();
        let d = self.shape.hidden;
        if t > self.shape.max_len {
            return Err(Error::Length { what: "sequence", len: t, max: self.shape.max_len });
        }
        if keep.len() != t || !keep.iter().any(|&k| k) {
            return Err(Error::dim("attention mask", &[t], &[keep.len()]));
        }
        let mut x = Mat { cols: d, data: Vec::with_capacity(t * d) };
        for (pos, &id) in ids.iter().enumerate() {
            let id = id as usize;
            if id >= self.shape.vocab {
                return Err(Error::Vocab { id, size: self.shape.vocab });
            }
            let (c, p) = (self.chars.row(id), self.positions.row(pos));
            x.data.extend(c.iter().zip(p).map(|(a, b)| a + b));
        }
        for layer in &self.layers {
            x = self.layer(layer, &x, keep);
        }
        Tensor::new(&[t, d], x.data)
    }

    fn layer(&self, w: &Layer, x: &Mat, keep: &[bool]) -> Mat {
        let d = self.shape.hidden;
        let heads = self.shape.heads;
        let dh = d / heads;
        let t = x.rows();
        let q = affine(x, &w.query.0, Some(&w.query.1));
        let k = affine(x, &w.key, None);
        let v = affine(x, &w.value.0, Some(&w.value.1));
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Mat { cols: d, data: vec![0.0; t * d] };
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..t {
                let qi = &q.row(i)[cols.clone()];
                let mut scores = vec![0.0; t];
                for (j, s) in scores.iter_mut().enumerate() {
                    let kj = &k.row(j)[cols.clone()];
                    let mut dot = 0.0;
                    for (a, b) in qi.iter().zip(kj) {
                        dot += a * b;
                    }
                    *s = dot * scale;
                }
                let probs = masked_softmax(&scores, keep);
                let out = &mut ctx.data[i * d + h * dh..i * d + (h + 1) * dh];
                for (c, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, &p) in probs.iter().enumerate() {
                        acc += p * v.row(j)[h * dh + c];
                    }
                    *o = acc;
                }
            }
        }
        let attn = affine(&ctx, &w.output.0, Some(&w.output.1));
        let x = norm(&add(x, &attn), &w.attn_norm, self.norm_eps);
        let mut inner = affine(&x, &w.inner.0, Some(&w.inner.1));
        for z in &mut inner.data {
            *z *= normal_cdf(*z);
        }
        let outer = affine(&inner, &w.outer.0, Some(&w.outer.1));
        norm(&add(&x, &outer), &w.ffn_norm, self.norm_eps)
    }
}

fn affine(x: &Mat, w: &Mat, b: Option<&Vec<f64>>) -> Mat {
    let n = w.cols;
    let mut out = Vec::with_capacity(x.rows() * n);
    for r in 0..x.rows() {
        let xr = x.row(r);
        for c in 0..n {
            let mut s = 0.0;
            for (k, &xv) in xr.iter().enumerate() {
                s += xv * w.data[k * n + c];
            }
            out.push(match b {
                Some(b) => s + b[c],
                None => s,
            });
        }
    }
    Mat { cols: n, data: out }
}

fn add(a: &Mat, b: &Mat) -> Mat {
    Mat { cols: a.cols, data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect() }
}

fn norm(x: &Mat, (gain, bias): &(Vec<f64>, Vec<f64>), eps: f64) -> Mat {
    let d = x.cols;
    let mut out = Vec::with_capacity(x.data.len());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for j in 0..d {
            out.push((row[j] - mean) * inv * gain[j] + bias[j]);
        }
    }
    Mat { cols: d, data: out }
}

fn masked_softmax(scores: &[f64], keep: &[bool]) -> Vec<f64> {
    let max = scores.iter().zip(keep).filter(|(_, &k)| k).map(|(&s, _)| s).fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().zip(keep).map(|(&s, &k)| if k { (s - max).exp() } else { 0.0 }).collect();
    let sum: f64 = out.iter().zip(keep).filter(|(_, &k)| k).map(|(&e, _)| e).sum();
    for o in &mut out {
        *o /= sum;
    }
    out
}
