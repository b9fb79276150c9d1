use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),
    #[error("dot product of ranges with different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("external node has {args} arguments but {partials} partials")]
    ArityMismatch { args: usize, partials: usize },
    #[error("non-finite gradient entry {value} at index {index}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("parameter vector has {params} entries but gradient has {grad}")]
    DimensionMismatch { params: usize, grad: usize },
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A run of consecutive nodes, e.g. a parameter block or a layer's activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarRange {
    pub start: usize,
    pub len: usize,
}

impl VarRange {
    pub fn get(&self, i: usize) -> Var {
        assert!(
            i < self.len,
            "index {i} out of range of length {}",
            self.len
        );
        Var(self.start + i)
    }

    pub fn slice(&self, offset: usize, len: usize) -> VarRange {
        assert!(offset + len <= self.len);
        VarRange {
            start: self.start + offset,
            len,
        }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn iter(&self) -> impl Iterator<Item = Var> {
        (self.start..self.end()).map(Var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    Neg,
    /// `a * x + b` with constant coefficients.
    Affine(f64, f64),
    Tanh,
    Exp,
    Sin,
    Cos,
    Sqrt,
    Powi(i32),
    Powf(f64),
}

impl UnaryOp {
    // Kept out of line so the compiler cannot merge `sin` and `cos` of the
    // same argument into one `sincos` call, which rounds differently.
    #[inline(never)]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Affine(a, b) => a * x + b,
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Powi(n) => x.powi(n),
            UnaryOp::Powf(p) => x.powf(p),
        }
    }

    /// Local derivative given the input and the already computed output.
    #[inline]
    fn partial(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryOp::Neg => -1.0,
            UnaryOp::Affine(a, _) => a,
            UnaryOp::Tanh => 1.0 - y * y,
            UnaryOp::Exp => y,
            UnaryOp::Sin => x.cos(),
            UnaryOp::Cos => -x.sin(),
            UnaryOp::Sqrt => 0.5 / y,
            UnaryOp::Powi(0) => 0.0,
            UnaryOp::Powi(n) => n as f64 * x.powi(n - 1),
            UnaryOp::Powf(p) => p * x.powf(p - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    #[inline]
    pub fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf,
    Unary {
        op: UnaryOp,
        arg: usize,
        partial: f64,
    },
    Binary {
        op: BinaryOp,
        lhs: usize,
        rhs: usize,
        dl: f64,
        dr: f64,
    },
    /// `Σ_k v[lhs+k] v[rhs+k] (+ v[bias])`
    Dot {
        lhs: usize,
        rhs: usize,
        len: usize,
        bias: Option<usize>,
    },
    /// Sum of the nodes listed in `side[start..start+len]`.
    Sum {
        start: usize,
        len: usize,
    },
    /// A function evaluated outside the tape. Arguments live in
    /// `side[start..start+len]`, their partials in `partials[pstart..]`.
    External {
        start: usize,
        len: usize,
        pstart: usize,
    },
    Stop {
        arg: usize,
    },
}

/// Deterministic dot product shared by the tape and plain forward passes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Append-only record of a scalar computation.
///
/// Nodes are stored in evaluation order, so every input precedes the node
/// that consumes it and a single reverse pass yields all adjoints.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
    side: Vec<usize>,
    partials: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            nodes: Vec::with_capacity(nodes),
            values: Vec::with_capacity(nodes),
            side: Vec::new(),
            partials: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    fn push(&mut self, node: Node, value: f64) -> Var {
        self.nodes.push(node);
        self.values.push(value);
        Var(self.nodes.len() - 1)
    }

    #[inline]
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn values(&self, r: VarRange) -> &[f64] {
        &self.values[r.start..r.end()]
    }

    /// An independent input (parameter or constant).
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(Node::Leaf, value)
    }

    pub fn leaves(&mut self, values: &[f64]) -> VarRange {
        let start = self.nodes.len();
        self.nodes
            .extend(std::iter::repeat_n(Node::Leaf, values.len()));
        self.values.extend_from_slice(values);
        VarRange {
            start,
            len: values.len(),
        }
    }

    pub fn unary(&mut self, op: UnaryOp, x: Var) -> Result<Var, AdError> {
        let xv = self.values[x.0];
        if op == UnaryOp::Sqrt && xv < 0.0 {
            return Err(AdError::NegativeSqrt(xv));
        }
        Ok(self.unary_unchecked(op, x))
    }

    #[inline]
    fn unary_unchecked(&mut self, op: UnaryOp, x: Var) -> Var {
        let xv = self.values[x.0];
        let y = op.eval(xv);
        let partial = op.partial(xv, y);
        self.push(
            Node::Unary {
                op,
                arg: x.0,
                partial,
            },
            y,
        )
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary_unchecked(UnaryOp::Neg, x)
    }

    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        self.unary_unchecked(UnaryOp::Affine(a, b), x)
    }

    pub fn scale(&mut self, x: Var, a: f64) -> Var {
        self.affine(x, a, 0.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary_unchecked(UnaryOp::Tanh, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary_unchecked(UnaryOp::Exp, x)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary_unchecked(UnaryOp::Sin, x)
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary_unchecked(UnaryOp::Cos, x)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var, AdError> {
        self.unary(UnaryOp::Sqrt, x)
    }

    pub fn powi(&mut self, x: Var, n: i32) -> Var {
        self.unary_unchecked(UnaryOp::Powi(n), x)
    }

    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        self.unary_unchecked(UnaryOp::Powf(p), x)
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var, AdError> {
        let (av, bv) = (self.values[a.0], self.values[b.0]);
        let (dl, dr) = match op {
            BinaryOp::Add => (1.0, 1.0),
            BinaryOp::Sub => (1.0, -1.0),
            BinaryOp::Mul => (bv, av),
            BinaryOp::Div => {
                if bv == 0.0 {
                    return Err(AdError::DivisionByZero);
                }
                (1.0 / bv, -av / (bv * bv))
            }
        };
        Ok(self.push(
            Node::Binary {
                op,
                lhs: a.0,
                rhs: b.0,
                dl,
                dr,
            },
            op.eval(av, bv),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinaryOp::Add, a, b).expect("add cannot fail")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinaryOp::Sub, a, b).expect("sub cannot fail")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinaryOp::Mul, a, b).expect("mul cannot fail")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary(BinaryOp::Div, a, b)
    }

    /// Inner product of two equally long ranges, plus an optional bias.
    pub fn dot(&mut self, a: VarRange, b: VarRange, bias: Option<Var>) -> Result<Var, AdError> {
        if a.len != b.len {
            return Err(AdError::LengthMismatch(a.len, b.len));
        }
        let mut v = dot(
            &self.values[a.start..a.end()],
            &self.values[b.start..b.end()],
        );
        if let Some(c) = bias {
            v += self.values[c.0];
        }
        Ok(self.push(
            Node::Dot {
                lhs: a.start,
                rhs: b.start,
                len: a.len,
                bias: bias.map(|c| c.0),
            },
            v,
        ))
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let start = self.side.len();
        self.side.extend(terms.iter().map(|v| v.0));
        let v = sum_values(&self.values, &self.side[start..]);
        self.push(
            Node::Sum {
                start,
                len: terms.len(),
            },
            v,
        )
    }

    /// Record `f(args)` computed elsewhere, with its gradient as fixed partials.
    pub fn external(&mut self, args: &[Var], value: f64, partials: &[f64]) -> Result<Var, AdError> {
        if args.len() != partials.len() {
            return Err(AdError::ArityMismatch {
                args: args.len(),
                partials: partials.len(),
            });
        }
        let start = self.side.len();
        let pstart = self.partials.len();
        self.side.extend(args.iter().map(|v| v.0));
        self.partials.extend_from_slice(partials);
        Ok(self.push(
            Node::External {
                start,
                len: args.len(),
                pstart,
            },
            value,
        ))
    }

    /// Identity in value, zero derivative in the reverse sweep.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let v = self.values[x.0];
        self.push(Node::Stop { arg: x.0 }, v)
    }

    /// Adjoints `∂root/∂node` for every node on the tape.
    pub fn backward(&self, root: Var) -> Vec<f64> {
        let mut adj = vec![0.0; root.0 + 1];
        adj[root.0] = 1.0;
        for i in (0..=root.0).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            match self.nodes[i] {
                Node::Leaf | Node::Stop { .. } => {}
                Node::Unary { arg, partial, .. } => adj[arg] += a * partial,
                Node::Binary {
                    lhs, rhs, dl, dr, ..
                } => {
                    adj[lhs] += a * dl;
                    adj[rhs] += a * dr;
                }
                Node::Dot {
                    lhs,
                    rhs,
                    len,
                    bias,
                } => {
                    if let Some(c) = bias {
                        adj[c] += a;
                    }
                    dot_backward(&mut adj, &self.values, lhs, rhs, len, a);
                }
                Node::Sum { start, len } => {
                    for &j in &self.side[start..start + len] {
                        adj[j] += a;
                    }
                }
                Node::External { start, len, pstart } => {
                    for k in 0..len {
                        adj[self.side[start + k]] += a * self.partials[pstart + k];
                    }
                }
            }
        }
        adj.resize(self.nodes.len(), 0.0);
        adj
    }

    /// Gradient of `root` restricted to a range of leaves.
    pub fn gradient(&self, root: Var, wrt: VarRange) -> Vec<f64> {
        let mut adj = self.backward(root);
        adj.truncate(wrt.end().max(wrt.start));
        if adj.len() < wrt.end() {
            adj.resize(wrt.end(), 0.0);
        }
        adj.drain(..wrt.start);
        adj
    }

    /// Recompute every non-leaf value from its recorded inputs.
    ///
    /// External nodes keep their stored value, since the function behind
    /// them is not on the tape.
    pub fn replay(&self) -> Vec<f64> {
        let mut vals = self.values.clone();
        for (i, node) in self.nodes.iter().enumerate() {
            vals[i] = match *node {
                Node::Leaf | Node::External { .. } => vals[i],
                Node::Unary { op, arg, .. } => op.eval(vals[arg]),
                Node::Binary { op, lhs, rhs, .. } => op.eval(vals[lhs], vals[rhs]),
                Node::Dot {
                    lhs,
                    rhs,
                    len,
                    bias,
                } => {
                    let mut v = dot(&vals[lhs..lhs + len], &vals[rhs..rhs + len]);
                    if let Some(c) = bias {
                        v += vals[c];
                    }
                    v
                }
                Node::Sum { start, len } => sum_values(&vals, &self.side[start..start + len]),
                Node::Stop { arg } => vals[arg],
            };
        }
        vals
    }

    /// Checks that every node only reads earlier nodes.
    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes.iter().enumerate().all(|(i, node)| match *node {
            Node::Leaf => true,
            Node::Unary { arg, .. } | Node::Stop { arg } => arg < i,
            Node::Binary { lhs, rhs, .. } => lhs < i && rhs < i,
            Node::Dot {
                lhs,
                rhs,
                len,
                bias,
            } => lhs + len <= i && rhs + len <= i && bias.is_none_or(|c| c < i),
            Node::Sum { start, len } | Node::External { start, len, .. } => {
                self.side[start..start + len].iter().all(|&j| j < i)
            }
        })
    }

    pub fn stored_values(&self) -> &[f64] {
        &self.values
    }
}

fn sum_values(values: &[f64], idx: &[usize]) -> f64 {
    idx.iter().fold(0.0, |acc, &j| acc + values[j])
}

fn dot_backward(adj: &mut [f64], values: &[f64], lhs: usize, rhs: usize, len: usize, a: f64) {
    let disjoint = lhs + len <= rhs || rhs + len <= lhs;
    if !disjoint {
        for k in 0..len {
            let (l, r) = (values[lhs + k], values[rhs + k]);
            adj[lhs + k] += a * r;
            adj[rhs + k] += a * l;
        }
        return;
    }
    let vl = &values[lhs..lhs + len];
    let vr = &values[rhs..rhs + len];
    let (al, ar) = if lhs < rhs {
        let (lo, hi) = adj.split_at_mut(rhs);
        (&mut lo[lhs..lhs + len], &mut hi[..len])
    } else {
        let (lo, hi) = adj.split_at_mut(lhs);
        (&mut hi[..len], &mut lo[rhs..rhs + len])
    };
    for k in 0..len {
        al[k] += a * vr[k];
        ar[k] += a * vl[k];
    }
}
