use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{AdError, FlatVector, GradVector, Layout, ParamVector, Result, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive recorded on the tape, with its input node ids.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    Input,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Sum(Var),
    Mean(Var),
    /// Mean binary cross-entropy of logits against {0,1} targets.
    BceWithLogits(Var, Var),
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Input => "input",
            OpKind::Param(_) => "param",
            OpKind::MatMul(..) => "matmul",
            OpKind::Add(..) => "add",
            OpKind::Sub(..) => "sub",
            OpKind::Mul(..) => "mul",
            OpKind::Scale(..) => "scale",
            OpKind::Relu(_) => "relu",
            OpKind::Sigmoid(_) => "sigmoid",
            OpKind::Sum(_) => "sum",
            OpKind::Mean(_) => "mean",
            OpKind::BceWithLogits(..) => "bce_with_logits",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: OpKind,
    value: Tensor,
    /// Leaf excluded from differentiation.
    frozen: bool,
}

/// Define-by-run trace. Nodes are appended in evaluation order, so every
/// node's inputs precede it.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Option<(Arc<Layout>, Vec<Var>)>,
}

/// Per-node gradients of one scalar output.
#[derive(Clone, Debug)]
pub struct Adjoints {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Adjoints {
    /// Gradient with respect to `var`; zeros if the output does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let shape = &self.shapes[var.0];
                Tensor::from_parts(shape.clone(), vec![0.0; shape.iter().product()])
            }
        }
    }
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> AdError {
    AdError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

/// `b` broadcasts over the rows of `a` when it is a row vector of matching width.
fn row_broadcast(a: &Tensor, b: &Tensor) -> bool {
    a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]
}

fn elementwise(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
    allow_broadcast: bool,
) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor::from_parts(a.shape().to_vec(), data));
    }
    if allow_broadcast && row_broadcast(a, b) {
        let cols = b.len();
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, b.data()[i % cols]))
            .collect();
        return Ok(Tensor::from_parts(a.shape().to_vec(), data));
    }
    Err(shape_err(op, a, b))
}

fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() == 0 {
        return Err(shape_err("matmul", a, b));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = b.dims2();
    if k != k2 {
        return Err(shape_err("matmul", a, b));
    }
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    let shape = if b.rank() == 1 { vec![m] } else { vec![m, n] };
    Ok(Tensor::from_parts(shape, out))
}

fn bce_with_logits(z: &Tensor, y: &Tensor) -> Result<Tensor> {
    if z.shape() != y.shape() {
        return Err(shape_err("bce_with_logits", z, y));
    }
    if z.is_empty() {
        return Err(AdError::Empty("bce_with_logits"));
    }
    if let Some(&bad) = y.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(AdError::Target(bad));
    }
    let total: f64 = z
        .data()
        .iter()
        .zip(y.data())
        .map(|(&z, &y)| z.max(0.0) - z * y + libm::log1p(libm::exp(-libm::fabs(z))))
        .sum();
    Ok(Tensor::scalar(total / z.len() as f64))
}

fn evaluate(op: &OpKind, nodes: &[Node]) -> Result<Tensor> {
    let v = |var: &Var| &nodes[var.0].value;
    match op {
        OpKind::Input | OpKind::Param(_) => unreachable!("leaves carry their own value"),
        OpKind::MatMul(a, b) => matmul(v(a), v(b)),
        OpKind::Add(a, b) => elementwise("add", v(a), v(b), |x, y| x + y, true),
        OpKind::Sub(a, b) => elementwise("sub", v(a), v(b), |x, y| x - y, true),
        OpKind::Mul(a, b) => elementwise("mul", v(a), v(b), |x, y| x * y, false),
        OpKind::Scale(a, c) => {
            let t = v(a);
            Ok(Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|x| x * c).collect()))
        }
        OpKind::Relu(a) => {
            let t = v(a);
            Ok(Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&x| x.max(0.0)).collect()))
        }
        OpKind::Sigmoid(a) => {
            let t = v(a);
            Ok(Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&x| sigmoid(x)).collect()))
        }
        OpKind::Sum(a) => Ok(Tensor::scalar(v(a).data().iter().sum())),
        OpKind::Mean(a) => {
            let t = v(a);
            if t.is_empty() {
                return Err(AdError::Empty("mean"));
            }
            Ok(Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64))
        }
        OpKind::BceWithLogits(z, y) => bce_with_logits(v(z), v(y)),
    }
}

fn accumulate(frozen: bool, slot: &mut Option<Tensor>, shape: &[usize], delta: impl FnOnce(&mut [f64])) {
    if frozen {
        return;
    }
    let t = slot.get_or_insert_with(|| Tensor::from_parts(shape.to_vec(), vec![0.0; shape.iter().product()]));
    delta(t.data_mut());
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn op(&self, var: Var) -> OpKind {
        self.nodes[var.0].op
    }

    fn push(&mut self, op: OpKind) -> Result<Var> {
        let value = evaluate(&op, &self.nodes)?;
        if !value.is_finite() {
            return Err(AdError::NonFinite(op.name()));
        }
        self.nodes.push(Node { op, value, frozen: false });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a constant; non-finite data is rejected.
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(AdError::NonFinite("input"));
        }
        self.nodes.push(Node { op: OpKind::Input, value, frozen: false });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Like [`Tape::input`], but no adjoint is accumulated for the node, so
    /// `wrt` reports zeros. Use for data that never needs a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        let v = self.input(value)?;
        self.nodes[v.0].frozen = true;
        Ok(v)
    }

    /// Binds every segment of `params` as a leaf; returns one var per segment.
    pub fn params(&mut self, params: &ParamVector) -> Result<Vec<Var>> {
        if self.params.is_some() {
            return Err(AdError::ParamsBound);
        }
        if !params.is_finite() {
            return Err(AdError::NonFinite("param"));
        }
        let layout = params.layout().clone();
        let mut vars = Vec::with_capacity(layout.segments().len());
        for (i, spec) in layout.segments().iter().enumerate() {
            let value = Tensor::from_parts(spec.shape.clone(), params.segment_values(i).to_vec());
            self.nodes.push(Node { op: OpKind::Param(i), value, frozen: false });
            vars.push(Var(self.nodes.len() - 1));
        }
        self.params = Some((layout, vars.clone()));
        Ok(vars)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(OpKind::MatMul(a, b))
    }

    /// Elementwise sum; a rank-1 `b` broadcasts over the rows of a matrix `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(OpKind::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(OpKind::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(OpKind::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        if !c.is_finite() {
            return Err(AdError::NonFinite("scale"));
        }
        self.push(OpKind::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.push(OpKind::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.push(OpKind::Sigmoid(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(OpKind::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.push(OpKind::Mean(a))
    }

    pub fn bce_with_logits(&mut self, logits: Var, targets: Var) -> Result<Var> {
        self.push(OpKind::BceWithLogits(logits, targets))
    }

    /// Re-evaluates every node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut fresh: Vec<Node> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match node.op {
                OpKind::Input | OpKind::Param(_) => node.value.clone(),
                op => evaluate(&op, &fresh)?,
            };
            fresh.push(Node { op: node.op, value, frozen: node.frozen });
        }
        Ok(fresh.into_iter().map(|n| n.value).collect())
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn adjoints(&self, loss: Var) -> Result<Adjoints> {
        let out = &self.nodes[loss.0].value;
        if out.len() != 1 {
            return Err(AdError::NonScalarLoss(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::from_parts(out.shape().to_vec(), vec![1.0]));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Adjoints {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let gd = g.data();
        match node.op {
            OpKind::Input | OpKind::Param(_) => {}
            OpKind::MatMul(a, b) => {
                let (at, bt) = (val(a), val(b));
                let (m, k) = (at.shape()[0], at.shape()[1]);
                let (_, n) = bt.dims2();
                let (ad, bd) = (at.data(), bt.data());
                accumulate(self.nodes[a.0].frozen, &mut grads[a.0], at.shape(), |ga| {
                    for r in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for c in 0..n {
                                s += gd[r * n + c] * bd[p * n + c];
                            }
                            ga[r * k + p] += s;
                        }
                    }
                });
                accumulate(self.nodes[b.0].frozen, &mut grads[b.0], bt.shape(), |gb| {
                    for r in 0..m {
                        for p in 0..k {
                            let arp = ad[r * k + p];
                            if arp == 0.0 {
                                continue;
                            }
                            for c in 0..n {
                                gb[p * n + c] += arp * gd[r * n + c];
                            }
                        }
                    }
                });
            }
            OpKind::Add(a, b) | OpKind::Sub(a, b) => {
                let sign = if matches!(node.op, OpKind::Add(..)) { 1.0 } else { -1.0 };
                accumulate(self.nodes[a.0].frozen, &mut grads[a.0], val(a).shape(), |ga| {
                    for (x, &d) in ga.iter_mut().zip(gd) {
                        *x += d;
                    }
                });
                let bt = val(b);
                let cols = bt.len();
                let broadcast = val(a).shape() != bt.shape();
                accumulate(self.nodes[b.0].frozen, &mut grads[b.0], bt.shape(), |gb| {
                    if broadcast {
                        for (j, &d) in gd.iter().enumerate() {
                            gb[j % cols] += sign * d;
                        }
                    } else {
                        for (x, &d) in gb.iter_mut().zip(gd) {
                            *x += sign * d;
                        }
                    }
                });
            }
            OpKind::Mul(a, b) => {
                let (at, bt) = (val(a), val(b));
                accumulate(self.nodes[a.0].frozen, &mut grads[a.0], at.shape(), |ga| {
                    for ((x, &d), &bv) in ga.iter_mut().zip(gd).zip(bt.data()) {
                        *x += d * bv;
                    }
                });
                accumulate(self.nodes[b.0].frozen, &mut grads[b.0], bt.shape(), |gb| {
                    for ((x, &d), &av) in gb.iter_mut().zip(gd).zip(at.data()) {
                        *x += d * av;
                    }
                });
            }
            OpKind::Scale(a, c) => accumulate(self.nodes[a.0].frozen, &mut grads[a.0], val(a).shape(), |ga| {
                for (x, &d) in ga.iter_mut().zip(gd) {
                    *x += c * d;
                }
            }),
            OpKind::Relu(a) => {
                let at = val(a);
                accumulate(self.nodes[a.0].frozen, &mut grads[a.0], at.shape(), |ga| {
                    for ((x, &d), &inp) in ga.iter_mut().zip(gd).zip(at.data()) {
                        if inp > 0.0 {
                            *x += d;
                        }
                    }
                });
            }
            OpKind::Sigmoid(a) => {
                let out = &node.value;
                accumulate(self.nodes[a.0].frozen, &mut grads[a.0], val(a).shape(), |ga| {
                    for ((x, &d), &s) in ga.iter_mut().zip(gd).zip(out.data()) {
                        *x += d * s * (1.0 - s);
                    }
                });
            }
            OpKind::Sum(a) => accumulate(self.nodes[a.0].frozen, &mut grads[a.0], val(a).shape(), |ga| {
                for x in ga.iter_mut() {
                    *x += gd[0];
                }
            }),
            OpKind::Mean(a) => {
                let n = val(a).len() as f64;
                accumulate(self.nodes[a.0].frozen, &mut grads[a.0], val(a).shape(), |ga| {
                    for x in ga.iter_mut() {
                        *x += gd[0] / n;
                    }
                })
            }
            OpKind::BceWithLogits(z, y) => {
                let (zt, yt) = (val(z), val(y));
                let scale = gd[0] / zt.len() as f64;
                accumulate(self.nodes[z.0].frozen, &mut grads[z.0], zt.shape(), |gz| {
                    for ((x, &zv), &yv) in gz.iter_mut().zip(zt.data()).zip(yt.data()) {
                        *x += scale * (sigmoid(zv) - yv);
                    }
                });
                accumulate(self.nodes[y.0].frozen, &mut grads[y.0], yt.shape(), |gy| {
                    for (x, &zv) in gy.iter_mut().zip(zt.data()) {
                        *x -= scale * zv;
                    }
                });
            }
        }
    }

    /// Gradient of `loss` with respect to the bound parameters. Segments the
    /// loss does not depend on receive exact zeros.
    pub fn backward(&self, loss: Var) -> Result<GradVector> {
        let adjoints = self.adjoints(loss)?;
        let Some((layout, vars)) = &self.params else {
            let empty = Arc::new(Layout::new(Vec::new())?);
            return Ok(GradVector::zeros(empty));
        };
        let mut flat = Vec::with_capacity(layout.total_dim());
        for &v in vars {
            flat.extend_from_slice(adjoints.wrt(v).data());
        }
        Ok(GradVector::from_parts(layout.clone(), flat))
    }
}
