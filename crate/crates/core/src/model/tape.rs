//! Minimal reverse-mode automatic differentiation over `f64` batch
//! matrices, sized for the small dense networks in this crate.
//!
//! A [`Tape`] evaluates eagerly: every builder call computes its value
//! immediately and records the operation. [`Tape::backward`] then walks
//! the record once in reverse, producing gradients for every parameter
//! that participated. Parameters live outside the tape in a
//! [`ParamStore`], so a training step is: build tape → backward →
//! optimizer applies [`Gradients`] to the store.
//!
//! Convention: all tensors are `(batch, features)` matrices; losses are
//! `1×1`.

use std::rc::Rc;

use ndarray::{Array2, Axis};

use crate::linsys::{LinearOp, SketchOperator};

/// Handle to a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named parameter matrices, owned outside any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Array2<f64>)>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        self.entries.push((name.into(), value));
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.entries[id.0].1
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.entries[id.0].1
    }

    /// Total scalar parameter count.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Array2<f64>)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }
}

/// Per-parameter gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_param: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a parameter, if it
    /// participated in the graph.
    pub fn of(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.by_param.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor(usize);

enum Op {
    Input,
    Param(ParamId),
    /// `y = x · wᵀ` — the linear-layer product.
    MatmulT {
        x: Tensor,
        w: Tensor,
    },
    /// Broadcast row addition (bias).
    AddRow {
        x: Tensor,
        row: Tensor,
    },
    Tanh(Tensor),
    Relu(Tensor),
    Exp(Tensor),
    Neg(Tensor),
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f64),
    ConcatCols(Tensor, Tensor),
    SliceCols {
        x: Tensor,
        start: usize,
        len: usize,
    },
    PermuteCols {
        x: Tensor,
        perm: Rc<Vec<usize>>,
    },
    /// Row-wise measurement-operator application (or its adjoint).
    OpApply {
        x: Tensor,
        op: Rc<SketchOperator>,
        adjoint: bool,
    },
    /// Mean squared error over all entries.
    Mse(Tensor, Tensor),
    /// Mean absolute value over all entries.
    L1Mean(Tensor),
    /// Biased V-statistic maximum mean discrepancy with a fixed-width
    /// Gaussian kernel mixture.
    Mmd {
        x: Tensor,
        y: Tensor,
        widths: Vec<f64>,
    },
    /// Squared gap between per-dimension means and variances.
    MomentMatch(Tensor, Tensor),
    WeightedSum(Vec<(Tensor, f64)>),
}

struct Node {
    op: Op,
    value: Array2<f64>,
}

/// Eager forward evaluator with one-pass reverse differentiation.
pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

/// Mixture-kernel value `(1/|W|) Σ_w exp(−d² / (2w))`.
fn kernel_mix(dist_sq: f64, widths: &[f64]) -> f64 {
    widths
        .iter()
        .map(|w| (-dist_sq / (2.0 * w)).exp())
        .sum::<f64>()
        / widths.len() as f64
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
        }
    }

    /// Value of a recorded tensor.
    pub fn value(&self, t: Tensor) -> &Array2<f64> {
        &self.nodes[t.0].value
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> Tensor {
        self.nodes.push(Node { op, value });
        Tensor(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Array2<f64>) -> Tensor {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, id: ParamId) -> Tensor {
        let value = self.store.value(id).clone();
        self.push(Op::Param(id), value)
    }

    pub fn matmul_t(&mut self, x: Tensor, w: Tensor) -> Tensor {
        let value = self.nodes[x.0].value.dot(&self.nodes[w.0].value.t());
        self.push(Op::MatmulT { x, w }, value)
    }

    pub fn add_row(&mut self, x: Tensor, row: Tensor) -> Tensor {
        let value = &self.nodes[x.0].value + &self.nodes[row.0].value;
        self.push(Op::AddRow { x, row }, value)
    }

    pub fn tanh(&mut self, x: Tensor) -> Tensor {
        let value = self.nodes[x.0].value.mapv(f64::tanh);
        self.push(Op::Tanh(x), value)
    }

    pub fn relu(&mut self, x: Tensor) -> Tensor {
        let value = self.nodes[x.0].value.mapv(|v| v.max(0.0));
        self.push(Op::Relu(x), value)
    }

    pub fn exp(&mut self, x: Tensor) -> Tensor {
        let value = self.nodes[x.0].value.mapv(f64::exp);
        self.push(Op::Exp(x), value)
    }

    pub fn neg(&mut self, x: Tensor) -> Tensor {
        let value = self.nodes[x.0].value.mapv(|v| -v);
        self.push(Op::Neg(x), value)
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Tensor {
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Tensor {
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(Op::Sub(a, b), value)
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Tensor {
        let value = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(Op::Mul(a, b), value)
    }

    pub fn scale(&mut self, x: Tensor, c: f64) -> Tensor {
        let value = self.nodes[x.0].value.mapv(|v| v * c);
        self.push(Op::Scale(x, c), value)
    }

    pub fn concat_cols(&mut self, a: Tensor, b: Tensor) -> Tensor {
        let left = &self.nodes[a.0].value;
        let right = &self.nodes[b.0].value;
        assert_eq!(left.nrows(), right.nrows(), "batch sizes must match");
        let mut value = Array2::zeros((left.nrows(), left.ncols() + right.ncols()));
        value
            .slice_mut(ndarray::s![.., ..left.ncols()])
            .assign(left);
        value
            .slice_mut(ndarray::s![.., left.ncols()..])
            .assign(right);
        self.push(Op::ConcatCols(a, b), value)
    }

    pub fn slice_cols(&mut self, x: Tensor, start: usize, len: usize) -> Tensor {
        let value = self.nodes[x.0]
            .value
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        self.push(Op::SliceCols { x, start, len }, value)
    }

    pub fn permute_cols(&mut self, x: Tensor, perm: Rc<Vec<usize>>) -> Tensor {
        let src = &self.nodes[x.0].value;
        assert_eq!(src.ncols(), perm.len(), "permutation length");
        let mut value = Array2::zeros(src.raw_dim());
        for (dst_col, &src_col) in perm.iter().enumerate() {
            value.column_mut(dst_col).assign(&src.column(src_col));
        }
        self.push(Op::PermuteCols { x, perm }, value)
    }

    /// Applies the measurement operator (or its adjoint) to every row.
    pub fn op_apply(&mut self, x: Tensor, op: Rc<SketchOperator>, adjoint: bool) -> Tensor {
        let src = &self.nodes[x.0].value;
        let (in_dim, out_dim) = if adjoint {
            (op.rows(), op.cols())
        } else {
            (op.cols(), op.rows())
        };
        assert_eq!(src.ncols(), in_dim, "operator input width");
        let mut value = Array2::zeros((src.nrows(), out_dim));
        for (i, row) in src.outer_iter().enumerate() {
            let input: Vec<f64> = row.to_vec();
            let out = if adjoint {
                op.apply_transpose(&input)
            } else {
                op.apply(&input)
            };
            for (j, v) in out.into_iter().enumerate() {
                value[(i, j)] = v;
            }
        }
        self.push(Op::OpApply { x, op, adjoint }, value)
    }

    pub fn mse(&mut self, a: Tensor, b: Tensor) -> Tensor {
        let da = &self.nodes[a.0].value;
        let db = &self.nodes[b.0].value;
        assert_eq!(da.dim(), db.dim(), "mse shapes");
        let count = da.len() as f64;
        let total: f64 = da
            .iter()
            .zip(db.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        self.push(Op::Mse(a, b), Array2::from_elem((1, 1), total / count))
    }

    pub fn l1_mean(&mut self, x: Tensor) -> Tensor {
        let v = &self.nodes[x.0].value;
        let mean = v.iter().map(|a| a.abs()).sum::<f64>() / v.len() as f64;
        self.push(Op::L1Mean(x), Array2::from_elem((1, 1), mean))
    }

    /// Maximum mean discrepancy between the rows of `x` and `y` under a
    /// fixed-width kernel mixture (biased V-statistic, hence ≥ 0 up to
    /// rounding and exactly 0 for identical batches).
    pub fn mmd(&mut self, x: Tensor, y: Tensor, widths: Vec<f64>) -> Tensor {
        assert!(!widths.is_empty(), "need at least one kernel width");
        assert!(widths.iter().all(|w| *w > 0.0), "widths must be positive");
        let xa = &self.nodes[x.0].value;
        let ya = &self.nodes[y.0].value;
        assert_eq!(xa.ncols(), ya.ncols(), "mmd dimensionality");
        let (n, m) = (xa.nrows(), ya.nrows());
        assert!(n >= 2 && m >= 2, "mmd needs batches of at least 2");
        let mut total = 0.0;
        let dist_sq = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
            a.iter()
                .zip(b.iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
        };
        for i in 0..n {
            for j in 0..n {
                total += kernel_mix(dist_sq(xa.row(i), xa.row(j)), &widths) / (n * n) as f64;
            }
        }
        for i in 0..m {
            for j in 0..m {
                total += kernel_mix(dist_sq(ya.row(i), ya.row(j)), &widths) / (m * m) as f64;
            }
        }
        for i in 0..n {
            for j in 0..m {
                total -= 2.0 * kernel_mix(dist_sq(xa.row(i), ya.row(j)), &widths) / (n * m) as f64;
            }
        }
        self.push(Op::Mmd { x, y, widths }, Array2::from_elem((1, 1), total))
    }

    /// Mean squared gap of per-dimension means and (population)
    /// variances between two batches — a cheap two-moment discrepancy.
    pub fn moment_match(&mut self, x: Tensor, y: Tensor) -> Tensor {
        let xa = &self.nodes[x.0].value;
        let ya = &self.nodes[y.0].value;
        assert_eq!(xa.ncols(), ya.ncols(), "moment-match dimensionality");
        let d = xa.ncols() as f64;
        let mx = xa.mean_axis(Axis(0)).expect("non-empty batch");
        let my = ya.mean_axis(Axis(0)).expect("non-empty batch");
        let vx = xa.var_axis(Axis(0), 0.0);
        let vy = ya.var_axis(Axis(0), 0.0);
        let total = mx
            .iter()
            .zip(my.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / d
            + vx.iter()
                .zip(vy.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / d;
        self.push(Op::MomentMatch(x, y), Array2::from_elem((1, 1), total))
    }

    /// `Σ cᵢ · termᵢ` over scalar tensors.
    pub fn weighted_sum(&mut self, terms: Vec<(Tensor, f64)>) -> Tensor {
        assert!(!terms.is_empty());
        let total: f64 = terms
            .iter()
            .map(|(t, c)| {
                let v = &self.nodes[t.0].value;
                assert_eq!(v.dim(), (1, 1), "weighted_sum needs scalars");
                v[(0, 0)] * c
            })
            .sum();
        self.push(Op::WeightedSum(terms), Array2::from_elem((1, 1), total))
    }

    /// Reverse pass from a `1×1` loss tensor.
    pub fn backward(&self, root: Tensor) -> Gradients {
        assert_eq!(
            self.nodes[root.0].value.dim(),
            (1, 1),
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::from_elem((1, 1), 1.0));
        let mut by_param: Vec<Option<Array2<f64>>> = vec![None; self.store.len()];

        let add_to = |slot: &mut Option<Array2<f64>>, delta: Array2<f64>| match slot {
            Some(existing) => *existing += &delta,
            None => *slot = Some(delta),
        };

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(id) => add_to(&mut by_param[id.0], g),
                Op::MatmulT { x, w } => {
                    let dx = g.dot(&self.nodes[w.0].value);
                    let dw = g.t().dot(&self.nodes[x.0].value);
                    add_to(&mut grads[x.0], dx);
                    add_to(&mut grads[w.0], dw);
                }
                Op::AddRow { x, row } => {
                    let drow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    add_to(&mut grads[x.0], g);
                    add_to(&mut grads[row.0], drow);
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[idx].value;
                    add_to(&mut grads[x.0], &g * &y.mapv(|v| 1.0 - v * v));
                }
                Op::Relu(x) => {
                    let mask = self.nodes[x.0].value.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    add_to(&mut grads[x.0], &g * &mask);
                }
                Op::Exp(x) => {
                    add_to(&mut grads[x.0], &g * &self.nodes[idx].value);
                }
                Op::Neg(x) => add_to(&mut grads[x.0], g.mapv(|v| -v)),
                Op::Add(a, b) => {
                    add_to(&mut grads[a.0], g.clone());
                    add_to(&mut grads[b.0], g);
                }
                Op::Sub(a, b) => {
                    add_to(&mut grads[a.0], g.clone());
                    add_to(&mut grads[b.0], g.mapv(|v| -v));
                }
                Op::Mul(a, b) => {
                    let da = &g * &self.nodes[b.0].value;
                    let db = &g * &self.nodes[a.0].value;
                    add_to(&mut grads[a.0], da);
                    add_to(&mut grads[b.0], db);
                }
                Op::Scale(x, c) => add_to(&mut grads[x.0], g.mapv(|v| v * c)),
                Op::ConcatCols(a, b) => {
                    let left_cols = self.nodes[a.0].value.ncols();
                    let da = g.slice(ndarray::s![.., ..left_cols]).to_owned();
                    let db = g.slice(ndarray::s![.., left_cols..]).to_owned();
                    add_to(&mut grads[a.0], da);
                    add_to(&mut grads[b.0], db);
                }
                Op::SliceCols { x, start, len } => {
                    let mut dx = Array2::zeros(self.nodes[x.0].value.raw_dim());
                    dx.slice_mut(ndarray::s![.., *start..start + len]).assign(&g);
                    add_to(&mut grads[x.0], dx);
                }
                Op::PermuteCols { x, perm } => {
                    let mut dx = Array2::zeros(self.nodes[x.0].value.raw_dim());
                    for (dst_col, &src_col) in perm.iter().enumerate() {
                        dx.column_mut(src_col).assign(&g.column(dst_col));
                    }
                    add_to(&mut grads[x.0], dx);
                }
                Op::OpApply { x, op, adjoint } => {
                    let src = &self.nodes[x.0].value;
                    let mut dx = Array2::zeros(src.raw_dim());
                    for (i, grow) in g.outer_iter().enumerate() {
                        let gin: Vec<f64> = grow.to_vec();
                        let back = if *adjoint {
                            op.apply(&gin)
                        } else {
                            op.apply_transpose(&gin)
                        };
                        for (j, v) in back.into_iter().enumerate() {
                            dx[(i, j)] = v;
                        }
                    }
                    add_to(&mut grads[x.0], dx);
                }
                Op::Mse(a, b) => {
                    let da = &self.nodes[a.0].value;
                    let db = &self.nodes[b.0].value;
                    let factor = g[(0, 0)] * 2.0 / da.len() as f64;
                    let diff = (da - db).mapv(|v| v * factor);
                    add_to(&mut grads[b.0], diff.mapv(|v| -v));
                    add_to(&mut grads[a.0], diff);
                }
                Op::L1Mean(x) => {
                    let src = &self.nodes[x.0].value;
                    let factor = g[(0, 0)] / src.len() as f64;
                    add_to(
                        &mut grads[x.0],
                        src.mapv(|v| {
                            if v > 0.0 {
                                factor
                            } else if v < 0.0 {
                                -factor
                            } else {
                                0.0
                            }
                        }),
                    );
                }
                Op::Mmd { x, y, widths } => {
                    let xa = &self.nodes[x.0].value;
                    let ya = &self.nodes[y.0].value;
                    let g0 = g[(0, 0)];
                    let (dx, dy) = mmd_input_grads(xa, ya, widths, g0);
                    add_to(&mut grads[x.0], dx);
                    add_to(&mut grads[y.0], dy);
                }
                Op::MomentMatch(x, y) => {
                    let xa = &self.nodes[x.0].value;
                    let ya = &self.nodes[y.0].value;
                    let g0 = g[(0, 0)];
                    add_to(&mut grads[x.0], moment_match_grad(xa, ya, g0));
                    add_to(&mut grads[y.0], moment_match_grad(ya, xa, g0));
                }
                Op::WeightedSum(terms) => {
                    let g0 = g[(0, 0)];
                    for (t, c) in terms {
                        add_to(&mut grads[t.0], Array2::from_elem((1, 1), g0 * c));
                    }
                }
            }
        }
        Gradients { by_param }
    }
}

/// Kernel-mixture derivative factor `dk/d(d²) = −(1/|W|) Σ_w e^{−d²/2w} / (2w)`.
fn kernel_mix_deriv(dist_sq: f64, widths: &[f64]) -> f64 {
    -widths
        .iter()
        .map(|w| (-dist_sq / (2.0 * w)).exp() / (2.0 * w))
        .sum::<f64>()
        / widths.len() as f64
}

/// Input gradients of the biased-V-statistic discrepancy.
///
/// With `K` the mixture kernel as a function of squared distance,
/// `∂K(‖a−b‖²)/∂a = K′·2(a−b)`. The same-sample double sums touch each
/// point in both slots, doubling their contribution:
///
/// ```text
/// ∂/∂xᵢ = (4/n²) Σⱼ K′(xᵢ,xⱼ)(xᵢ−xⱼ) − (4/nm) Σⱼ K′(xᵢ,yⱼ)(xᵢ−yⱼ)
/// ∂/∂yⱼ = (4/m²) Σᵢ K′(yⱼ,yᵢ)(yⱼ−yᵢ) − (4/nm) Σᵢ K′(xᵢ,yⱼ)(yⱼ−xᵢ)
/// ```
fn mmd_input_grads(
    xa: &Array2<f64>,
    ya: &Array2<f64>,
    widths: &[f64],
    g0: f64,
) -> (Array2<f64>, Array2<f64>) {
    let (n, m) = (xa.nrows(), ya.nrows());
    let d = xa.ncols();
    let mut dx = Array2::zeros((n, d));
    let mut dy = Array2::zeros((m, d));
    let dist_sq = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
        a.iter()
            .zip(b.iter())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
    };
    for i in 0..n {
        for j in 0..n {
            let kd = kernel_mix_deriv(dist_sq(xa.row(i), xa.row(j)), widths);
            let coeff = g0 * 4.0 * kd / (n * n) as f64;
            for c in 0..d {
                dx[(i, c)] += coeff * (xa[(i, c)] - xa[(j, c)]);
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            let kd = kernel_mix_deriv(dist_sq(ya.row(i), ya.row(j)), widths);
            let coeff = g0 * 4.0 * kd / (m * m) as f64;
            for c in 0..d {
                dy[(i, c)] += coeff * (ya[(i, c)] - ya[(j, c)]);
            }
        }
    }
    for i in 0..n {
        for j in 0..m {
            let kd = kernel_mix_deriv(dist_sq(xa.row(i), ya.row(j)), widths);
            let coeff = -g0 * 4.0 * kd / (n * m) as f64;
            for c in 0..d {
                let diff = xa[(i, c)] - ya[(j, c)];
                dx[(i, c)] += coeff * diff;
                dy[(j, c)] -= coeff * diff;
            }
        }
    }
    (dx, dy)
}

/// Gradient of the two-moment discrepancy with respect to its first
/// argument (symmetric in roles, so callers pass both orders).
fn moment_match_grad(xa: &Array2<f64>, ya: &Array2<f64>, g0: f64) -> Array2<f64> {
    let (b, d) = (xa.nrows() as f64, xa.ncols());
    let mx = xa.mean_axis(Axis(0)).expect("non-empty");
    let my = ya.mean_axis(Axis(0)).expect("non-empty");
    let vx = xa.var_axis(Axis(0), 0.0);
    let vy = ya.var_axis(Axis(0), 0.0);
    let mut out = Array2::zeros(xa.raw_dim());
    for i in 0..xa.nrows() {
        for c in 0..d {
            let mean_term = 2.0 * (mx[c] - my[c]) / (d as f64) / b;
            let var_term = (2.0 * (vx[c] - vy[c]) / (d as f64)) * (2.0 * (xa[(i, c)] - mx[c]) / b);
            out[(i, c)] = g0 * (mean_term + var_term);
        }
    }
    out
}
