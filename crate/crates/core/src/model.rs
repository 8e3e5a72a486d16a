//! Model parameters, the composition function and the rule energies.
//!
//! A parent phrase is `pa = f(W [c1; c2])` and every rule (leaf or binary)
//! carries an energy `E = g(u . pa)`. The unnormalized rule factor is
//! `exp(-E)`, times the structural weight `theta` for binary rules. There is a
//! single nonterminal, so `theta` is one shared constant.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textio::{self, Lines};

/// Elementwise nonlinearity applied to composed phrases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Tanh,
    Sigmoid,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => z.tanh(),
            Nonlinearity::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation value `y = f(z)`.
    #[inline]
    pub fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => 1.0 - y * y,
            Nonlinearity::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Map from the score `u . pa` to the rule energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyMap {
    #[default]
    Identity,
    Tanh,
}

impl EnergyMap {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            EnergyMap::Identity => a,
            EnergyMap::Tanh => a.tanh(),
        }
    }

    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            EnergyMap::Identity => 1.0,
            EnergyMap::Tanh => 1.0 - a.tanh().powi(2),
        }
    }
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::InvalidConfig(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

text_enum!(Nonlinearity { Tanh => "tanh", Sigmoid => "sigmoid" });
text_enum!(EnergyMap { Identity => "identity", Tanh => "tanh" });

/// The parameter triple `(u, X, W)` and the fixed model choices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    /// Word embeddings, one row per vocabulary id (`|V| x d`).
    pub x: Array2<f64>,
    /// Composition weights (`d x 2d`).
    pub w: Array2<f64>,
    /// Scoring vector (`d`).
    pub u: Array1<f64>,
    pub f: Nonlinearity,
    pub g: EnergyMap,
    /// Structural weight of the single binary production.
    pub theta: f64,
}

/// Leaf or binary rule instance anchored to a span (0-based, inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct RuleInstance {
    pub kind: RuleKind,
    pub span: (usize, usize),
    pub parent_embedding: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Leaf,
    /// Binary rule whose left child ends at `split`.
    Binary {
        split: usize,
    },
}

impl ModelParams {
    /// Builds parameters from explicit matrices, validating shapes and finiteness.
    pub fn new(x: Array2<f64>, w: Array2<f64>, u: Array1<f64>) -> Result<Self> {
        let p = ModelParams {
            d: u.len(),
            x,
            w,
            u,
            f: Nonlinearity::default(),
            g: EnergyMap::default(),
            theta: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn vocab_size(&self) -> usize {
        self.x.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        check_len("u", d, self.u.len())?;
        check_len("W rows", d, self.w.nrows())?;
        check_len("W cols", 2 * d, self.w.ncols())?;
        check_len("X cols", d, self.x.ncols())?;
        let finite = self
            .x
            .iter()
            .chain(&self.w)
            .chain(&self.u)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("model parameters".into()));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "theta must be positive and finite, got {}",
                self.theta
            )));
        }
        Ok(())
    }

    /// `pa = f(W [c1; c2])`.
    pub fn compose(&self, c1: ArrayView1<f64>, c2: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("left child", self.d, c1.len())?;
        check_len("right child", self.d, c2.len())?;
        let mut out = vec![0.0; self.d];
        self.compose_into(&c1.to_vec(), &c2.to_vec(), &mut out);
        Ok(Array1::from(out))
    }

    /// Slice form of [`compose`](Self::compose) with no shape checks.
    #[inline]
    pub(crate) fn compose_into(&self, c1: &[f64], c2: &[f64], out: &mut [f64]) {
        let d = self.d;
        let w = self.w.as_slice().expect("W is contiguous");
        for (a, o) in out.iter_mut().enumerate() {
            let row = &w[a * 2 * d..(a + 1) * 2 * d];
            let z = dot(&row[..d], c1) + dot(&row[d..], c2);
            *o = self.f.apply(z);
        }
    }

    /// `u . pa`, the argument of the energy map.
    #[inline]
    pub(crate) fn score_arg(&self, pa: &[f64]) -> f64 {
        dot(self.u.as_slice().expect("u is contiguous"), pa)
    }

    /// `E = g(u . pa)`.
    pub fn rule_energy(&self, pa: ArrayView1<f64>) -> f64 {
        self.g.apply(self.u.dot(&pa))
    }

    #[inline]
    pub(crate) fn energy_of(&self, pa: &[f64]) -> f64 {
        self.g.apply(self.score_arg(pa))
    }

    pub(crate) fn ln_theta(&self) -> f64 {
        self.theta.ln()
    }

    /// Log of the rule factor: `-E` for leaves, `-E + ln theta` for binary rules.
    pub fn rule_log_score(&self, r: &RuleInstance) -> f64 {
        let e = self.rule_energy(r.parent_embedding.view());
        match r.kind {
            RuleKind::Leaf => -e,
            RuleKind::Binary { .. } => -e + self.ln_theta(),
        }
    }

    pub(crate) fn embedding(&self, id: usize) -> &[f64] {
        let d = self.d;
        &self.x.as_slice().expect("X is contiguous")[id * d..(id + 1) * d]
    }

    pub fn check_ids(&self, ids: &[usize]) -> Result<()> {
        let vocab_size = self.vocab_size();
        match ids.iter().find(|&&id| id >= vocab_size) {
            Some(&id) => Err(Error::InvalidToken { id, vocab_size }),
            None => Ok(()),
        }
    }

    /// Sum of squares over every parameter.
    pub fn squared_norm(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.w)
            .chain(&self.u)
            .map(|v| v * v)
            .sum()
    }

    /// Serializes with the fingerprint of the vocabulary the model was trained on.
    pub fn to_text(&self, vocab_fingerprint: &str) -> String {
        let mut out = String::new();
        self.write_text(&mut out, vocab_fingerprint);
        out
    }

    pub(crate) fn write_text(&self, out: &mut String, vocab_fingerprint: &str) {
        writeln!(out, "{MODEL_MAGIC}").unwrap();
        writeln!(out, "d {}", self.d).unwrap();
        writeln!(out, "vocab_size {}", self.vocab_size()).unwrap();
        writeln!(out, "vocab_hash {vocab_fingerprint}").unwrap();
        writeln!(out, "theta {:e}", self.theta).unwrap();
        writeln!(out, "nonlinearity {}", self.f).unwrap();
        writeln!(out, "energy_map {}", self.g).unwrap();
        textio::write_vector(out, "u", &self.u);
        textio::write_matrix(out, "W", &self.w);
        textio::write_matrix(out, "X", &self.x);
    }

    /// Parses the text form, returning the parameters and the recorded vocab fingerprint.
    pub fn from_text(text: &str) -> Result<(Self, String)> {
        let mut lines = Lines::new(text);
        let (params, hash) = Self::read_text(&mut lines)?;
        if !lines.peek_is_end() {
            return Err(Error::parse(lines.line_no() + 1, "trailing content"));
        }
        Ok((params, hash))
    }

    pub(crate) fn read_text(lines: &mut Lines<'_>) -> Result<(Self, String)> {
        if lines.next_line()? != MODEL_MAGIC {
            return Err(Error::parse(lines.line_no(), "missing model header"));
        }
        let d: usize = lines.parsed("d")?;
        let vocab_size: usize = lines.parsed("vocab_size")?;
        let hash = lines.field("vocab_hash")?.to_owned();
        let theta: f64 = lines.parsed("theta")?;
        let f: Nonlinearity = lines.parsed("nonlinearity")?;
        let g: EnergyMap = lines.parsed("energy_map")?;
        let u = lines.vector("u")?;
        let w = lines.matrix("W")?;
        let x = lines.matrix("X")?;
        let params = ModelParams {
            d,
            x,
            w,
            u,
            f,
            g,
            theta,
        };
        params.validate()?;
        check_len("X rows", vocab_size, params.vocab_size())?;
        Ok((params, hash))
    }
}

const MODEL_MAGIC: &str = "#clm-model 1";

/// Draws `X` and `W` uniformly in `[-1/sqrt(d), 1/sqrt(d)]` and `u` in `[-0.1, 0.1]`.
pub fn init_params(vocab_size: usize, d: usize, seed: u64) -> Result<ModelParams> {
    if d == 0 {
        return Err(Error::InvalidConfig("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / (d as f64).sqrt();
    let emb = Uniform::new_inclusive(-bound, bound);
    let score = Uniform::new_inclusive(-0.1, 0.1);
    let x = Array2::from_shape_simple_fn((vocab_size, d), || rng.sample(emb));
    let w = Array2::from_shape_simple_fn((d, 2 * d), || rng.sample(emb));
    let u = Array1::from_shape_simple_fn(d, || rng.sample(score));
    ModelParams::new(x, w, u)
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what,
            expected,
            got,
        })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn tiny(w: Array2<f64>, u: Array1<f64>) -> ModelParams {
        let d = u.len();
        ModelParams::new(Array2::zeros((3, d)), w, u).unwrap()
    }

    #[test]
    fn zero_weights_compose_to_zero() {
        let p = tiny(Array2::zeros((2, 4)), array![0.3, 0.2]);
        let out = p
            .compose(array![0.4, -0.9].view(), array![1.0, 2.0].view())
            .unwrap();
        assert_eq!(out, array![0.0, 0.0]);
    }

    #[test]
    fn compose_hand_value() {
        let p = tiny(array![[1.0, 1.0]], array![1.0]);
        let out = p.compose(array![0.5].view(), array![0.5].view()).unwrap();
        assert_abs_diff_eq!(out[0], 0.761_594_155_955_764_9, epsilon = 1e-12);
    }

    #[test]
    fn compose_zero_children() {
        let p = init_params(4, 3, 11).unwrap();
        let z = Array1::zeros(3);
        assert_eq!(
            p.compose(z.view(), z.view()).unwrap(),
            Array1::<f64>::zeros(3)
        );
    }

    #[test]
    fn compose_rejects_bad_shapes() {
        let p = init_params(4, 3, 11).unwrap();
        let bad = p.compose(array![1.0, 2.0].view(), array![1.0, 2.0, 3.0].view());
        assert!(matches!(bad, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn energies() {
        let p = tiny(Array2::zeros((2, 4)), array![1.0, -1.0]);
        let pa = array![0.3, 0.1];
        assert_abs_diff_eq!(p.rule_energy(pa.view()), 0.2, epsilon = 1e-15);
        assert_eq!(p.rule_energy((-&pa).view()), -p.rule_energy(pa.view()));
        let z = tiny(Array2::zeros((2, 4)), array![0.0, 0.0]);
        assert_eq!(z.rule_energy(pa.view()), 0.0);
    }

    #[test]
    fn log_scores_by_kind() {
        let p = tiny(Array2::zeros((1, 2)), array![1.0]);
        let leaf = RuleInstance {
            kind: RuleKind::Leaf,
            span: (0, 0),
            parent_embedding: array![0.7],
        };
        assert_abs_diff_eq!(p.rule_log_score(&leaf), -0.7, epsilon = 1e-15);
        let bin = RuleInstance {
            kind: RuleKind::Binary { split: 0 },
            span: (0, 1),
            parent_embedding: array![0.2],
        };
        assert_abs_diff_eq!(p.rule_log_score(&bin), -0.2, epsilon = 1e-15);
        let mut q = p.clone();
        q.theta = 0.5;
        assert_abs_diff_eq!(q.rule_log_score(&bin), -0.2 + 0.5f64.ln(), epsilon = 1e-15);
        q.u.fill(0.0);
        q.theta = 1.0;
        assert_eq!(q.rule_log_score(&bin), 0.0);
        assert_eq!(q.rule_log_score(&leaf), 0.0);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_params(10, 25, 5).unwrap();
        let b = init_params(10, 25, 5).unwrap();
        assert_eq!(a.to_text("h"), b.to_text("h"));
        assert_eq!(a.x.dim(), (10, 25));
        assert_eq!(a.w.dim(), (25, 50));
        assert_eq!(a.u.len(), 25);
        let bound = 1.0 / 5.0;
        assert!(a.x.iter().chain(&a.w).all(|v| v.abs() <= bound));
        assert!(a.u.iter().all(|v| v.abs() <= 0.1));
        assert_ne!(a, init_params(10, 25, 6).unwrap());
    }

    #[test]
    fn tanh_compose_is_bounded_and_odd() {
        let p = init_params(4, 4, 2).unwrap();
        let c1 = array![3.0, -2.0, 5.0, 1.0];
        let c2 = array![-4.0, 2.0, 0.5, 9.0];
        let a = p.compose(c1.view(), c2.view()).unwrap();
        let b = p.compose((-&c1).view(), (-&c2).view()).unwrap();
        assert!(a.iter().all(|v| v.abs() < 1.0));
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(*x, -*y, epsilon = 1e-15);
        }
    }

    #[test]
    fn model_text_round_trip() {
        let mut p = init_params(7, 3, 9).unwrap();
        p.theta = 0.3;
        p.f = Nonlinearity::Sigmoid;
        let text = p.to_text("abc");
        let (q, hash) = ModelParams::from_text(&text).unwrap();
        assert_eq!(hash, "abc");
        assert_eq!(q, p);
        assert_eq!(q.to_text("abc"), text);
    }

    #[test]
    fn model_parse_rejects_truncation() {
        let text = init_params(3, 2, 1).unwrap().to_text("h");
        let cut = &text[..text.trim_end().rfind('\n').unwrap()];
        assert!(ModelParams::from_text(cut).is_err());
        let extra = format!("{text}junk\n");
        assert!(ModelParams::from_text(&extra).is_err());
    }
}
