//! Endpoint-pinned continuous paths `x(t) = b(t) + t(1 - t) g(t)`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{dot, Tape, UnaryOp, Var, VarRange};
use crate::csvfmt::num;
use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("path parameter t = {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("Lagrange base path needs at least two control points")]
    TooFewPoints,
    #[error("non-finite control point {0}")]
    NonFinitePoint(usize),
    #[error("expected {expected} conditioning features, got {got}")]
    ConditionMismatch { expected: usize, got: usize },
    #[error("malformed parameter file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasePath {
    Linear {
        a: Vec2,
        b: Vec2,
    },
    /// Interpolating polynomial through `points[j]` at `t_j = j / n`.
    Lagrange {
        points: Vec<Vec2>,
    },
}

impl BasePath {
    pub fn linear(a: Vec2, b: Vec2) -> Self {
        BasePath::Linear { a, b }
    }

    pub fn start(&self) -> Vec2 {
        match self {
            BasePath::Linear { a, .. } => *a,
            BasePath::Lagrange { points } => points[0],
        }
    }

    pub fn end(&self) -> Vec2 {
        match self {
            BasePath::Linear { b, .. } => *b,
            BasePath::Lagrange { points } => points[points.len() - 1],
        }
    }

    /// Position and derivative in `t`.
    pub fn eval(&self, t: f64) -> (Vec2, Vec2) {
        match self {
            BasePath::Linear { a, b } => ((1.0 - t) * a + t * b, b - a),
            BasePath::Lagrange { points } => lagrange_eval(points, t),
        }
    }
}

pub fn make_lagrange_base(points: Vec<Vec2>) -> Result<BasePath, PathError> {
    if points.len() < 2 {
        return Err(PathError::TooFewPoints);
    }
    if let Some(i) = points
        .iter()
        .position(|p| !p.x.is_finite() || !p.y.is_finite())
    {
        return Err(PathError::NonFinitePoint(i));
    }
    Ok(BasePath::Lagrange { points })
}

fn lagrange_eval(points: &[Vec2], t: f64) -> (Vec2, Vec2) {
    let n = points.len() - 1;
    let knot = |j: usize| j as f64 / n as f64;
    let mut x = Vec2::zeros();
    let mut dx = Vec2::zeros();
    for (j, pj) in points.iter().enumerate() {
        let tj = knot(j);
        let mut basis = 1.0;
        for k in (0..=n).filter(|&k| k != j) {
            basis *= (t - knot(k)) / (tj - knot(k));
        }
        let mut dbasis = 0.0;
        for m in (0..=n).filter(|&m| m != j) {
            let mut term = 1.0 / (tj - knot(m));
            for k in (0..=n).filter(|&k| k != j && k != m) {
                term *= (t - knot(k)) / (tj - knot(k));
            }
            dbasis += term;
        }
        x += pj * basis;
        dx += pj * dbasis;
    }
    (x, dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    #[default]
    FanIn,
    /// Weights uniform in `±sqrt(6/(fan_in + fan_out))`, zero biases.
    Glorot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub output_dim: usize,
    pub init: InitScheme,
    pub zero_output: bool,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            input_dim: 1,
            width: 256,
            depth: 3,
            output_dim: 2,
            init: InitScheme::FanIn,
            zero_output: false,
            seed: 0,
        }
    }
}

/// Fully connected tanh network with a linear output layer.
///
/// Parameters are one flat vector; each layer stores its weight matrix row
/// by row followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
    seed: u64,
}

impl Mlp {
    pub fn new(cfg: &MlpConfig) -> Self {
        let mut sizes = vec![cfg.input_dim];
        sizes.extend(std::iter::repeat_n(cfg.width, cfg.depth));
        sizes.push(cfg.output_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = Vec::with_capacity(param_count(&sizes));
        let n_layers = sizes.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let (wb, bb) = match cfg.init {
                InitScheme::FanIn => {
                    let b = 1.0 / (fan_in as f64).sqrt();
                    (b, b)
                }
                InitScheme::Glorot => ((6.0 / (fan_in + fan_out) as f64).sqrt(), 0.0),
            };
            let zero = cfg.zero_output && l == n_layers - 1;
            for _ in 0..fan_in * fan_out {
                let w = rng.gen_range(-wb..=wb);
                params.push(if zero { 0.0 } else { w });
            }
            for _ in 0..fan_out {
                let b = if bb > 0.0 {
                    rng.gen_range(-bb..=bb)
                } else {
                    0.0
                };
                params.push(if zero { 0.0 } else { b });
            }
        }
        Mlp {
            sizes,
            params,
            seed: cfg.seed,
        }
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>, seed: u64) -> Result<Self, PathError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(PathError::Parse(format!("bad layer sizes {sizes:?}")));
        }
        let expected = param_count(&sizes);
        if params.len() != expected {
            return Err(PathError::Parse(format!(
                "expected {expected} parameters, found {}",
                params.len()
            )));
        }
        Ok(Mlp {
            sizes,
            params,
            seed,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Offsets of (weights, biases) for layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += (self.sizes[k] + 1) * self.sizes[k + 1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    /// Plain forward pass. With `tangent`, also propagates the directional
    /// derivative of the output along that input direction.
    pub fn forward(&self, input: &[f64], tangent: Option<&[f64]>) -> (Vec<f64>, Option<Vec<f64>>) {
        forward_params(&self.sizes, &self.params, input, tangent)
    }

    /// Record the forward pass on `tape` with parameters `theta`.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        theta: VarRange,
        input: &[f64],
        tangent: Option<&[f64]>,
    ) -> (Vec<Var>, Option<Vec<Var>>) {
        assert_eq!(theta.len, self.params.len());
        assert_eq!(input.len(), self.input_dim());
        let mut h = tape.leaves(input);
        let mut ht = tangent.map(|d| tape.leaves(d));
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let last = l == n_layers - 1;
            let row = |j: usize| theta.slice(w_off + j * n_in, n_in);
            let z_start = tape.len();
            for j in 0..n_out {
                let bias = theta.get(b_off + j);
                tape.dot(row(j), h, Some(bias)).expect("layer widths agree");
            }
            let z = VarRange {
                start: z_start,
                len: n_out,
            };
            let a = if last {
                z
            } else {
                let start = tape.len();
                for v in z.iter() {
                    tape.tanh(v);
                }
                VarRange { start, len: n_out }
            };
            if let Some(prev) = ht {
                let dz_start = tape.len();
                for j in 0..n_out {
                    tape.dot(row(j), prev, None).expect("layer widths agree");
                }
                let dz = VarRange {
                    start: dz_start,
                    len: n_out,
                };
                ht = Some(if last {
                    dz
                } else {
                    let q: Vec<Var> = a
                        .iter()
                        .map(|v| {
                            let sq = tape.powi(v, 2);
                            tape.affine(sq, -1.0, 1.0)
                        })
                        .collect();
                    let start = tape.len();
                    for j in 0..n_out {
                        tape.mul(q[j], dz.get(j));
                    }
                    VarRange { start, len: n_out }
                });
            }
            h = a;
        }
        (h.iter().collect(), ht.map(|r| r.iter().collect()))
    }

    /// Text serialization: a small header followed by one value per line.
    pub fn to_text(&self, conditioned: bool) -> String {
        let mut out = String::new();
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "# neuralmep mlp");
        let _ = writeln!(out, "sizes {}", sizes.join(","));
        let _ = writeln!(out, "conditioned {}", conditioned as u8);
        let _ = writeln!(out, "seed {}", self.seed);
        for p in &self.params {
            let _ = writeln!(out, "{}", num(*p));
        }
        out
    }

    /// Inverse of [`Mlp::to_text`]; returns the network and the conditioned flag.
    pub fn from_text(text: &str) -> Result<(Self, bool), PathError> {
        let mut lines = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let mut header = |key: &str| -> Result<String, PathError> {
            let line = lines
                .next()
                .ok_or_else(|| PathError::Parse(format!("missing `{key}`")))?;
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| PathError::Parse(format!("expected `{key}`, found `{line}`")))
        };
        let sizes = header("sizes")?
            .split(',')
            .map(|s| s.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PathError::Parse(e.to_string()))?;
        let conditioned = match header("conditioned")?.as_str() {
            "0" => false,
            "1" => true,
            v => return Err(PathError::Parse(format!("bad conditioned flag `{v}`"))),
        };
        let seed = header("seed")?
            .parse::<u64>()
            .map_err(|e| PathError::Parse(e.to_string()))?;
        let params = lines
            .map(|l| l.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PathError::Parse(e.to_string()))?;
        Ok((Mlp::from_parts(sizes, params, seed)?, conditioned))
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Forward pass for an arbitrary parameter vector with the given layer sizes.
///
/// Performs the same floating-point operations in the same order as
/// [`Mlp::forward_tape`], so both give identical values.
pub fn forward_params(
    sizes: &[usize],
    params: &[f64],
    input: &[f64],
    tangent: Option<&[f64]>,
) -> (Vec<f64>, Option<Vec<f64>>) {
    let mut h = input.to_vec();
    let mut ht = tangent.map(|d| d.to_vec());
    let mut off = 0;
    let n_layers = sizes.len() - 1;
    for l in 0..n_layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + (n_in + 1) * n_out];
        off += (n_in + 1) * n_out;
        let last = l == n_layers - 1;
        let mut z: Vec<f64> = (0..n_out)
            .map(|j| dot(&w[j * n_in..(j + 1) * n_in], &h) + b[j])
            .collect();
        if !last {
            for v in z.iter_mut() {
                *v = v.tanh();
            }
        }
        if let Some(prev) = &ht {
            let mut dz: Vec<f64> = (0..n_out)
                .map(|j| dot(&w[j * n_in..(j + 1) * n_in], prev))
                .collect();
            if !last {
                for (d, a) in dz.iter_mut().zip(&z) {
                    let q = UnaryOp::Affine(-1.0, 1.0).eval(UnaryOp::Powi(2).eval(*a));
                    *d *= q;
                }
            }
            ht = Some(dz);
        }
        h = z;
    }
    (h, ht)
}

/// `x(t) = b(t) + t(1-t) g(t; c)` for a network `g` and fixed conditioning `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathModel {
    pub base: BasePath,
    pub mlp: Mlp,
    pub condition: Vec<f64>,
}

fn check_t(t: f64) -> Result<(), PathError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(PathError::OutOfRange(t))
    }
}

fn network_input(t: f64, condition: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut input = Vec::with_capacity(condition.len() + 1);
    input.push(t);
    input.extend_from_slice(condition);
    let mut tangent = vec![0.0; input.len()];
    tangent[0] = 1.0;
    (input, tangent)
}

/// Combine base path and network output at `t`.
#[inline]
fn pin(t: f64, b: Vec2, db: Vec2, g: [f64; 2], dg: [f64; 2]) -> (Vec2, Vec2) {
    let s = t * (1.0 - t);
    let ds = 1.0 - 2.0 * t;
    let mut x = Vec2::zeros();
    let mut dx = Vec2::zeros();
    for k in 0..2 {
        x[k] = UnaryOp::Affine(s, b[k]).eval(g[k]);
        dx[k] = UnaryOp::Affine(ds, 0.0).eval(g[k]) + UnaryOp::Affine(s, db[k]).eval(dg[k]);
    }
    (x, dx)
}

impl PathModel {
    pub fn new(base: BasePath, mlp: Mlp) -> Self {
        PathModel {
            base,
            mlp,
            condition: Vec::new(),
        }
    }

    pub fn conditioned(base: BasePath, mlp: Mlp, condition: Vec<f64>) -> Result<Self, PathError> {
        let expected = mlp.input_dim() - 1;
        if condition.len() != expected {
            return Err(PathError::ConditionMismatch {
                expected,
                got: condition.len(),
            });
        }
        Ok(PathModel {
            base,
            mlp,
            condition,
        })
    }

    pub fn start(&self) -> Vec2 {
        self.base.start()
    }

    pub fn end(&self) -> Vec2 {
        self.base.end()
    }

    /// Position and tangent `dx/dt`.
    pub fn eval(&self, t: f64) -> Result<(Vec2, Vec2), PathError> {
        eval_with(
            &self.base,
            &self.mlp.sizes,
            &self.mlp.params,
            &self.condition,
            t,
        )
    }

    /// Position only; skips the tangent channel but rounds exactly like `eval`.
    pub fn position(&self, t: f64) -> Result<Vec2, PathError> {
        check_t(t)?;
        let (input, _) = network_input(t, &self.condition);
        let (g, _) = forward_params(&self.mlp.sizes, &self.mlp.params, &input, None);
        let (b, _) = self.base.eval(t);
        let s = t * (1.0 - t);
        Ok(Vec2::new(
            UnaryOp::Affine(s, b[0]).eval(g[0]),
            UnaryOp::Affine(s, b[1]).eval(g[1]),
        ))
    }

    /// Positions at `n` equidistant `t_i = i/(n-1)`.
    pub fn discretize(&self, n: usize) -> Vec<Vec2> {
        crate::sampling::equidistant(n)
            .into_iter()
            .map(|t| self.position(t).expect("grid inside [0, 1]"))
            .collect()
    }

    /// Record position and tangent on `tape`.
    pub fn eval_tape(
        &self,
        tape: &mut Tape,
        theta: VarRange,
        t: f64,
    ) -> Result<([Var; 2], [Var; 2]), PathError> {
        check_t(t)?;
        let (input, dinput) = network_input(t, &self.condition);
        let (g, dg) = self.mlp.forward_tape(tape, theta, &input, Some(&dinput));
        let dg = dg.expect("tangent requested");
        let (b, db) = self.base.eval(t);
        let s = t * (1.0 - t);
        let ds = 1.0 - 2.0 * t;
        let mut x = [g[0]; 2];
        let mut dx = [g[0]; 2];
        for k in 0..2 {
            x[k] = tape.affine(g[k], s, b[k]);
            let u = tape.affine(g[k], ds, 0.0);
            let v = tape.affine(dg[k], s, db[k]);
            dx[k] = tape.add(u, v);
        }
        Ok((x, dx))
    }

    /// Record position only, for losses that never touch the tangent.
    pub fn position_tape(
        &self,
        tape: &mut Tape,
        theta: VarRange,
        t: f64,
    ) -> Result<[Var; 2], PathError> {
        check_t(t)?;
        let (input, _) = network_input(t, &self.condition);
        let (g, _) = self.mlp.forward_tape(tape, theta, &input, None);
        let (b, _) = self.base.eval(t);
        let s = t * (1.0 - t);
        Ok([tape.affine(g[0], s, b[0]), tape.affine(g[1], s, b[1])])
    }
}

/// Evaluate a path for an explicit parameter vector.
pub fn eval_with(
    base: &BasePath,
    sizes: &[usize],
    params: &[f64],
    condition: &[f64],
    t: f64,
) -> Result<(Vec2, Vec2), PathError> {
    check_t(t)?;
    let (input, dinput) = network_input(t, condition);
    let (g, dg) = forward_params(sizes, params, &input, Some(&dinput));
    let dg = dg.expect("tangent requested");
    let (b, db) = base.eval(t);
    Ok(pin(t, b, db, [g[0], g[1]], [dg[0], dg[1]]))
}
