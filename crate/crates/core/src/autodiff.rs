//! Minimal reverse-mode automatic differentiation over `f64` tensors.
//!
//! A [`Tape`] records every value produced during a forward pass together with
//! the operation that produced it. [`Tape::backward`] walks the record in
//! reverse and accumulates gradients. Shapes are checked with assertions: a
//! mismatch here is a wiring bug in the calling module, and the modules that
//! accept external tensors validate them before they reach the tape.
//!
//! Spatial tensors are unbatched `[C, H, W]`; token sequences are `[N, D]`.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3, ArrayD, Axis, Ix1, Ix2, Ix3, IxDyn};

use crate::params::{ParamGroup, ParamKey};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geometry: ConvGeometry,
        cols: Array2<f64>,
    },
    Silu(Var),
    GlobalAvgPool(Var),
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    ConcatBroadcast {
        embedding: Var,
        feature: Var,
    },
    AddChannelBias {
        input: Var,
        bias: Var,
    },
    Add(Var, Var),
    AddRowBroadcast {
        input: Var,
        row: Var,
    },
    MeanRows(Var),
    ConcatRows(Var, Var),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    ChannelDot {
        input: Var,
        query: Var,
    },
    Resize {
        input: Var,
        plan: ResizePlan,
    },
    Project {
        input: Var,
        direction: ArrayD<f64>,
    },
    ExternalGrad {
        input: Var,
        grad: ArrayD<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: ArrayD<f64>,
    op: Op,
}

/// Records a forward computation for later differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<ParamKey, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that is not tracked as a parameter.
    pub fn constant(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers a named parameter. Registering the same key twice returns the
    /// existing leaf, so a tensor reused within one forward pass accumulates a
    /// single gradient.
    pub fn param(&mut self, group: ParamGroup, name: &str, value: &ArrayD<f64>) -> Var {
        let key = ParamKey::new(group, name);
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let v = self.push(value.clone(), Op::Leaf);
        self.params.insert(key, v);
        v
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn params(&self) -> impl Iterator<Item = (&ParamKey, Var)> {
        self.params.iter().map(|(k, &v)| (k, v))
    }

    fn value3(&self, v: Var) -> Array3<f64> {
        self.value(v)
            .clone()
            .into_dimensionality::<Ix3>()
            .expect("expected a [C, H, W] tensor")
    }

    /// 2-D convolution with square kernel `weight: [Cout, Cin, k, k]`, zero padding.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Var {
        let x = self.value3(input);
        let w = self.value(weight);
        assert_eq!(w.ndim(), 4, "conv weight must be [Cout, Cin, k, k]");
        let (cout, cin, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        assert_eq!(w.shape()[3], k, "conv kernel must be square");
        assert_eq!(x.dim().0, cin, "conv input channels");
        assert_eq!(self.shape(bias), &[cout], "conv bias shape");
        let geometry = ConvGeometry::new(x.dim(), k, stride, padding);
        let cols = im2col(&x, &geometry);
        let wmat = w.to_shape((cout, cin * k * k)).expect("weight reshape");
        let mut out = wmat.dot(&cols);
        let b = self.value(bias);
        for (mut row, &bv) in out.axis_iter_mut(Axis(0)).zip(b.iter()) {
            row += bv;
        }
        let out = out
            .into_shape_with_order(IxDyn(&[cout, geometry.out_h, geometry.out_w]))
            .expect("conv output shape");
        self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geometry,
                cols,
            },
        )
    }

    /// `x * sigmoid(x)`; smooth, with `silu(0) = 0`.
    pub fn silu(&mut self, input: Var) -> Var {
        let out = self.value(input).mapv(|x| x * sigmoid(x));
        self.push(out, Op::Silu(input))
    }

    /// `[C, H, W] -> [C]` spatial mean.
    pub fn global_avg_pool(&mut self, input: Var) -> Var {
        let x = self.value3(input);
        let out = x
            .mean_axis(Axis(2))
            .and_then(|m| m.mean_axis(Axis(1)))
            .expect("non-empty spatial grid");
        self.push(out.into_dyn(), Op::GlobalAvgPool(input))
    }

    /// `y = x Wᵀ + b` for `x: [in]` or `x: [N, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let w = self.value(weight).view().into_dimensionality::<Ix2>().expect("linear weight [out, in]");
        let b = self.value(bias).view().into_dimensionality::<Ix1>().expect("linear bias [out]");
        assert_eq!(b.len(), w.nrows(), "linear bias length");
        let x = self.value(input);
        let out = match x.ndim() {
            1 => {
                let x = x.view().into_dimensionality::<Ix1>().unwrap();
                assert_eq!(x.len(), w.ncols(), "linear input width");
                (w.dot(&x) + b).into_dyn()
            }
            2 => {
                let x = x.view().into_dimensionality::<Ix2>().unwrap();
                assert_eq!(x.ncols(), w.ncols(), "linear input width");
                (x.dot(&w.t()) + b).into_dyn()
            }
            n => panic!("linear input must be 1-D or 2-D, got {n}-D"),
        };
        self.push(out, Op::Linear { input, weight, bias })
    }

    /// Appends `feature: [G]` to every pixel of `embedding: [C, H, W]`.
    pub fn concat_broadcast(&mut self, embedding: Var, feature: Var) -> Var {
        let e = self.value3(embedding);
        let g = self.value(feature).view().into_dimensionality::<Ix1>().expect("feature vector").to_owned();
        let out = concat_broadcast_array(&e, &g);
        self.push(out.into_dyn(), Op::ConcatBroadcast { embedding, feature })
    }

    /// `[C, H, W] + [C]` broadcast over pixels.
    pub fn add_channel_bias(&mut self, input: Var, bias: Var) -> Var {
        let mut x = self.value3(input);
        let b = self.value(bias);
        assert_eq!(b.shape(), &[x.dim().0], "channel bias length");
        for (mut plane, &bv) in x.axis_iter_mut(Axis(0)).zip(b.iter()) {
            plane += bv;
        }
        self.push(x.into_dyn(), Op::AddChannelBias { input, bias })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add operands");
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    /// `[N, D] + [D]` broadcast over rows.
    pub fn add_row_broadcast(&mut self, input: Var, row: Var) -> Var {
        let x = self.value(input).view().into_dimensionality::<Ix2>().expect("[N, D] input");
        let r = self.value(row).view().into_dimensionality::<Ix1>().expect("[D] row");
        assert_eq!(x.ncols(), r.len(), "row broadcast width");
        let out = (&x + &r).into_dyn();
        self.push(out, Op::AddRowBroadcast { input, row })
    }

    /// `[N, D] -> [D]` mean over rows.
    pub fn mean_rows(&mut self, input: Var) -> Var {
        let x = self.value(input).view().into_dimensionality::<Ix2>().expect("[N, D] input");
        let out = x.mean_axis(Axis(0)).expect("at least one row");
        self.push(out.into_dyn(), Op::MeanRows(input))
    }

    /// Stacks `[N, D]` on top of `[M, D]`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).view().into_dimensionality::<Ix2>().expect("[N, D]");
        let bv = self.value(b).view().into_dimensionality::<Ix2>().expect("[M, D]");
        let out = ndarray::concatenate(Axis(0), &[av, bv]).expect("matching widths");
        self.push(out.into_dyn(), Op::ConcatRows(a, b))
    }

    /// Row lookup into `table: [V, D]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table).view().into_dimensionality::<Ix2>().expect("[V, D] table");
        let out = t.select(Axis(0), ids);
        self.push(
            out.into_dyn(),
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// `[C, H, W] · [C] -> [H, W]`: per-pixel inner product with a query vector.
    pub fn channel_dot(&mut self, input: Var, query: Var) -> Var {
        let x = self.value3(input);
        let q = self.value(query).view().into_dimensionality::<Ix1>().expect("[C] query").to_owned();
        assert_eq!(q.len(), x.dim().0, "query length");
        let (_, h, w) = x.dim();
        let mut out = Array2::<f64>::zeros((h, w));
        for (plane, &qc) in x.axis_iter(Axis(0)).zip(q.iter()) {
            out.scaled_add(qc, &plane);
        }
        self.push(out.into_dyn(), Op::ChannelDot { input, query })
    }

    /// Bilinear resize of a `[h, w]` grid to `[out_h, out_w]`.
    pub fn resize_bilinear(&mut self, input: Var, out_h: usize, out_w: usize) -> Var {
        let x = self.value(input).view().into_dimensionality::<Ix2>().expect("[h, w] grid");
        let plan = ResizePlan::new(x.dim(), (out_h, out_w));
        let out = plan.apply(&x);
        self.push(out.into_dyn(), Op::Resize { input, plan })
    }

    /// Scalar `Σ input ⊙ direction`.
    pub fn project(&mut self, input: Var, direction: &ArrayD<f64>) -> Var {
        assert_eq!(self.shape(input), direction.shape(), "projection direction shape");
        let s = (self.value(input) * direction).sum();
        self.push(
            ArrayD::from_elem(IxDyn(&[]), s),
            Op::Project {
                input,
                direction: direction.clone(),
            },
        )
    }

    /// A scalar whose value and gradient with respect to `input` were
    /// computed outside the tape (closed-form loss gradients).
    pub fn external_scalar(&mut self, input: Var, value: f64, grad: ArrayD<f64>) -> Var {
        assert_eq!(self.shape(input), grad.shape(), "external gradient shape");
        self.push(ArrayD::from_elem(IxDyn(&[]), value), Op::ExternalGrad { input, grad })
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).len(), 1, "backward requires a scalar output");
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(ArrayD::ones(self.value(output).raw_dim()));

        for idx in (0..=output.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => grads[idx] = Some(dy),
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geometry,
                    cols,
                } => {
                    let w = self.value(*weight);
                    let (cout, cin, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
                    let dy2 = dy
                        .to_shape((cout, geometry.out_h * geometry.out_w))
                        .expect("conv grad shape");
                    let dw = dy2.dot(&cols.t());
                    accumulate(&mut grads, *weight, dw.to_shape(IxDyn(w.shape())).unwrap().into_owned());
                    accumulate(&mut grads, *bias, dy2.sum_axis(Axis(1)).into_dyn());
                    let wmat = w.to_shape((cout, cin * k * k)).unwrap();
                    let dcols = wmat.t().dot(&dy2);
                    accumulate(&mut grads, *input, col2im(&dcols, geometry).into_dyn());
                }
                Op::Silu(input) => {
                    let x = self.value(*input);
                    let mut dx = dy;
                    ndarray::Zip::from(&mut dx).and(x).for_each(|d, &xv| {
                        let s = sigmoid(xv);
                        *d *= s * (1.0 + xv * (1.0 - s));
                    });
                    accumulate(&mut grads, *input, dx);
                }
                Op::GlobalAvgPool(input) => {
                    let shape = self.shape(*input);
                    let (c, h, w) = (shape[0], shape[1], shape[2]);
                    let scale = 1.0 / (h * w) as f64;
                    let mut dx = Array3::<f64>::zeros((c, h, w));
                    for (mut plane, &g) in dx.axis_iter_mut(Axis(0)).zip(dy.iter()) {
                        plane.fill(g * scale);
                    }
                    accumulate(&mut grads, *input, dx.into_dyn());
                }
                Op::Linear { input, weight, bias } => {
                    let w = self.value(*weight).view().into_dimensionality::<Ix2>().unwrap();
                    let x = self.value(*input);
                    match x.ndim() {
                        1 => {
                            let x = x.view().into_dimensionality::<Ix1>().unwrap();
                            let g = dy.view().into_dimensionality::<Ix1>().unwrap();
                            let dw = outer(&g.to_owned(), &x.to_owned());
                            accumulate(&mut grads, *weight, dw.into_dyn());
                            accumulate(&mut grads, *bias, g.to_owned().into_dyn());
                            accumulate(&mut grads, *input, g.dot(&w).into_dyn());
                        }
                        _ => {
                            let x = x.view().into_dimensionality::<Ix2>().unwrap();
                            let g = dy.view().into_dimensionality::<Ix2>().unwrap();
                            accumulate(&mut grads, *weight, g.t().dot(&x).into_dyn());
                            accumulate(&mut grads, *bias, g.sum_axis(Axis(0)).into_dyn());
                            accumulate(&mut grads, *input, g.dot(&w).into_dyn());
                        }
                    }
                }
                Op::ConcatBroadcast { embedding, feature } => {
                    let c = self.shape(*embedding)[0];
                    let dy3 = dy.view().into_dimensionality::<Ix3>().unwrap();
                    let de = dy3.slice(ndarray::s![..c, .., ..]).to_owned();
                    let dg = dy3
                        .slice(ndarray::s![c.., .., ..])
                        .sum_axis(Axis(2))
                        .sum_axis(Axis(1));
                    accumulate(&mut grads, *embedding, de.into_dyn());
                    accumulate(&mut grads, *feature, dg.into_dyn());
                }
                Op::AddChannelBias { input, bias } => {
                    let db = dy
                        .view()
                        .into_dimensionality::<Ix3>()
                        .unwrap()
                        .sum_axis(Axis(2))
                        .sum_axis(Axis(1));
                    accumulate(&mut grads, *bias, db.into_dyn());
                    accumulate(&mut grads, *input, dy);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, dy.clone());
                    accumulate(&mut grads, *b, dy);
                }
                Op::AddRowBroadcast { input, row } => {
                    let dr = dy.view().into_dimensionality::<Ix2>().unwrap().sum_axis(Axis(0));
                    accumulate(&mut grads, *row, dr.into_dyn());
                    accumulate(&mut grads, *input, dy);
                }
                Op::MeanRows(input) => {
                    let shape = self.shape(*input);
                    let (n, d) = (shape[0], shape[1]);
                    let g = dy.view().into_dimensionality::<Ix1>().unwrap();
                    let row = &g / n as f64;
                    let dx = row.broadcast((n, d)).unwrap().to_owned();
                    accumulate(&mut grads, *input, dx.into_dyn());
                }
                Op::ConcatRows(a, b) => {
                    let n = self.shape(*a)[0];
                    let g = dy.view().into_dimensionality::<Ix2>().unwrap();
                    accumulate(&mut grads, *a, g.slice(ndarray::s![..n, ..]).to_owned().into_dyn());
                    accumulate(&mut grads, *b, g.slice(ndarray::s![n.., ..]).to_owned().into_dyn());
                }
                Op::GatherRows { table, ids } => {
                    let mut dt = ArrayD::<f64>::zeros(IxDyn(self.shape(*table)));
                    let g = dy.view().into_dimensionality::<Ix2>().unwrap();
                    for (row, &id) in g.axis_iter(Axis(0)).zip(ids) {
                        let mut target = dt.index_axis_mut(Axis(0), id);
                        target += &row;
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::ChannelDot { input, query } => {
                    let x = self.value(*input).view().into_dimensionality::<Ix3>().unwrap();
                    let q = self.value(*query);
                    let g = dy.view().into_dimensionality::<Ix2>().unwrap();
                    let mut dx = Array3::<f64>::zeros(x.dim());
                    let mut dq = Array1::<f64>::zeros(q.len());
                    for (c, (plane, mut dplane)) in x.axis_iter(Axis(0)).zip(dx.axis_iter_mut(Axis(0))).enumerate() {
                        dq[c] = (&plane * &g).sum();
                        dplane.scaled_add(q[c], &g);
                    }
                    accumulate(&mut grads, *input, dx.into_dyn());
                    accumulate(&mut grads, *query, dq.into_dyn());
                }
                Op::Resize { input, plan } => {
                    let g = dy.view().into_dimensionality::<Ix2>().unwrap();
                    accumulate(&mut grads, *input, plan.apply_transpose(&g).into_dyn());
                }
                Op::Project { input, direction } => {
                    let s = dy.iter().next().copied().unwrap_or(0.0);
                    accumulate(&mut grads, *input, direction * s);
                }
                Op::ExternalGrad { input, grad } => {
                    let s = dy.iter().next().copied().unwrap_or(0.0);
                    accumulate(&mut grads, *input, grad * s);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<ArrayD<f64>>], v: Var, g: ArrayD<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => {
            *slot = Some(if g.is_standard_layout() {
                g
            } else {
                g.as_standard_layout().into_owned()
            })
        }
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`, `None` if `v` does not
    /// influence the output.
    ///
    /// Only leaves keep their accumulated gradient; interior nodes read as `None`.
    pub fn get(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients for every parameter registered on `tape`.
    pub fn params(&self, tape: &Tape) -> BTreeMap<ParamKey, ArrayD<f64>> {
        tape.params()
            .map(|(k, v)| {
                let g = self
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| ArrayD::zeros(tape.value(v).raw_dim()));
                (k.clone(), g)
            })
            .collect()
    }
}

/// Output geometry of a strided, zero-padded square convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new((channels, in_h, in_w): (usize, usize, usize), kernel: usize, stride: usize, padding: usize) -> Self {
        assert!(stride >= 1 && kernel >= 1);
        assert!(
            in_h + 2 * padding >= kernel && in_w + 2 * padding >= kernel,
            "input {in_h}x{in_w} smaller than kernel {kernel} with padding {padding}"
        );
        ConvGeometry {
            channels,
            in_h,
            in_w,
            kernel,
            stride,
            padding,
            out_h: (in_h + 2 * padding - kernel) / stride + 1,
            out_w: (in_w + 2 * padding - kernel) / stride + 1,
        }
    }
}

fn im2col(x: &Array3<f64>, g: &ConvGeometry) -> Array2<f64> {
    let k = g.kernel;
    let n_out = g.out_h * g.out_w;
    let mut cols = Array2::<f64>::zeros((g.channels * k * k, n_out));
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().expect("fresh array");
    for c in 0..g.channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * n_out;
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let src = (c * g.in_h + iy as usize) * g.in_w;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        cs[row + oy * g.out_w + ox] = xs[src + ix as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &Array2<f64>, g: &ConvGeometry) -> Array3<f64> {
    let k = g.kernel;
    let n_out = g.out_h * g.out_w;
    let mut x = Array3::<f64>::zeros((g.channels, g.in_h, g.in_w));
    let cols = cols.as_standard_layout();
    let cs = cols.as_slice().expect("standard layout");
    let xs = x.as_slice_mut().expect("fresh array");
    for c in 0..g.channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * n_out;
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = (c * g.in_h + iy as usize) * g.in_w;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        xs[dst + ix as usize] += cs[row + oy * g.out_w + ox];
                    }
                }
            }
        }
    }
    x
}

/// `[C, H, W]` ⧺ `[G]` → `[C + G, H, W]`, the suffix identical at every pixel.
pub fn concat_broadcast_array(embedding: &Array3<f64>, feature: &Array1<f64>) -> Array3<f64> {
    let (c, h, w) = embedding.dim();
    let g = feature.len();
    let mut out = Array3::<f64>::zeros((c + g, h, w));
    out.slice_mut(ndarray::s![..c, .., ..]).assign(embedding);
    for (k, mut plane) in out.slice_mut(ndarray::s![c.., .., ..]).axis_iter_mut(Axis(0)).enumerate() {
        plane.fill(feature[k]);
    }
    out
}

/// Separable bilinear interpolation weights with half-pixel centres
/// (`src = (dst + 0.5) · in/out − 0.5`, clamped to the valid range).
#[derive(Debug, Clone)]
pub struct ResizePlan {
    rows: Vec<Tap>,
    cols: Vec<Tap>,
    in_dim: (usize, usize),
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            let frac = if hi == lo { 0.0 } else { src - lo as f64 };
            Tap { lo, hi, frac }
        })
        .collect()
}

impl ResizePlan {
    pub fn new(in_dim: (usize, usize), out_dim: (usize, usize)) -> Self {
        assert!(in_dim.0 > 0 && in_dim.1 > 0 && out_dim.0 > 0 && out_dim.1 > 0, "empty resize");
        ResizePlan {
            rows: taps(in_dim.0, out_dim.0),
            cols: taps(in_dim.1, out_dim.1),
            in_dim,
        }
    }

    pub fn apply(&self, x: &ndarray::ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.dim(), self.in_dim, "resize input");
        Array2::from_shape_fn((self.rows.len(), self.cols.len()), |(r, c)| {
            let (tr, tc) = (self.rows[r], self.cols[c]);
            let top = x[[tr.lo, tc.lo]] * (1.0 - tc.frac) + x[[tr.lo, tc.hi]] * tc.frac;
            let bottom = x[[tr.hi, tc.lo]] * (1.0 - tc.frac) + x[[tr.hi, tc.hi]] * tc.frac;
            top * (1.0 - tr.frac) + bottom * tr.frac
        })
    }

    fn apply_transpose(&self, g: &ndarray::ArrayView2<f64>) -> Array2<f64> {
        let mut dx = Array2::<f64>::zeros(self.in_dim);
        for (r, tr) in self.rows.iter().enumerate() {
            for (c, tc) in self.cols.iter().enumerate() {
                let v = g[[r, c]];
                dx[[tr.lo, tc.lo]] += v * (1.0 - tr.frac) * (1.0 - tc.frac);
                dx[[tr.lo, tc.hi]] += v * (1.0 - tr.frac) * tc.frac;
                dx[[tr.hi, tc.lo]] += v * tr.frac * (1.0 - tc.frac);
                dx[[tr.hi, tc.hi]] += v * tr.frac * tc.frac;
            }
        }
        dx
    }
}
