//! Symbolic form of the learned right-hand side: products of linear forms in
//! the state and its stencil derivatives, expanded into a polynomial.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::field::{Field, PaddingMode};
use crate::model::PercnnModel;
use crate::scalar::Real;
use crate::stencil::{apply, DiffOp};

const CHANNEL_NAMES: [&str; 3] = ["u", "v", "w"];
const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

fn channel_name(c: usize) -> String {
    CHANNEL_NAMES.get(c).map(|s| s.to_string()).unwrap_or_else(|| format!("c{c}"))
}

fn channel_index(name: &str) -> Option<usize> {
    CHANNEL_NAMES
        .iter()
        .position(|&n| n == name)
        .or_else(|| name.strip_prefix('c').and_then(|d| d.parse().ok()).filter(|&c| c >= CHANNEL_NAMES.len()))
}

/// A factor of a monomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    /// State channel, `u`.
    State(usize),
    /// First derivative of a channel along an axis, `u_x`.
    Derivative(usize, usize),
    /// Laplacian of a channel, `Δu`.
    Laplacian(usize),
}

impl Symbol {
    pub fn name(&self) -> String {
        match *self {
            Symbol::State(c) => channel_name(c),
            Symbol::Derivative(c, a) => format!("{}_{}", channel_name(c), AXIS_NAMES[a]),
            Symbol::Laplacian(c) => format!("Δ{}", channel_name(c)),
        }
    }

    pub fn parse(s: &str) -> Result<Symbol> {
        let unknown = || Error::UnknownSymbol(s.to_string());
        if let Some(rest) = s.strip_prefix('Δ') {
            return channel_index(rest).map(Symbol::Laplacian).ok_or_else(unknown);
        }
        if let Some((c, a)) = s.split_once('_') {
            let c = channel_index(c).ok_or_else(unknown)?;
            let a = AXIS_NAMES.iter().position(|&n| n == a).ok_or_else(unknown)?;
            return Ok(Symbol::Derivative(c, a));
        }
        channel_index(s).map(Symbol::State).ok_or_else(unknown)
    }

    fn channel(&self) -> usize {
        match *self {
            Symbol::State(c) | Symbol::Derivative(c, _) | Symbol::Laplacian(c) => c,
        }
    }

    fn op(&self) -> DiffOp {
        match *self {
            Symbol::State(_) => DiffOp::Identity,
            Symbol::Derivative(_, a) => DiffOp::Derivative(a),
            Symbol::Laplacian(_) => DiffOp::Laplacian,
        }
    }

    fn of_op(channel: usize, op: DiffOp) -> Symbol {
        match op {
            DiffOp::Identity => Symbol::State(channel),
            DiffOp::Derivative(a) => Symbol::Derivative(channel, a),
            DiffOp::Laplacian => Symbol::Laplacian(channel),
        }
    }
}

/// `coeff * Π monomial`; an empty monomial is the constant term.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicTerm {
    pub coeff: f64,
    /// Sorted factors, repeated for powers.
    pub monomial: Vec<Symbol>,
}

impl SymbolicTerm {
    pub fn degree(&self) -> usize {
        self.monomial.len()
    }
}

/// Polynomial right-hand side per output channel, terms in graded
/// lexicographic order with like terms merged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymbolicRhs {
    channels: Vec<Vec<SymbolicTerm>>,
}

/// Terms removed by a prune.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pruned {
    pub dropped: Vec<Vec<SymbolicTerm>>,
    /// `Σ |coeff|` of the dropped terms.
    pub dropped_mass: f64,
}

fn canonical(a: &[Symbol], b: &[Symbol]) -> std::cmp::Ordering {
    b.len().cmp(&a.len()).then_with(|| a.cmp(b))
}

/// Accumulates contributions per monomial and sums them in sorted order, so
/// the result does not depend on the order contributions arrive in.
#[derive(Default)]
struct Poly(BTreeMap<Vec<Symbol>, Vec<f64>>);

impl Poly {
    fn push(&mut self, mono: Vec<Symbol>, c: f64) {
        self.0.entry(mono).or_default().push(c);
    }

    fn collapse(self) -> BTreeMap<Vec<Symbol>, f64> {
        self.0
            .into_iter()
            .map(|(m, mut cs)| {
                cs.sort_by(f64::total_cmp);
                (m, cs.iter().sum())
            })
            .collect()
    }
}

fn multiply(a: &BTreeMap<Vec<Symbol>, f64>, b: &BTreeMap<Vec<Symbol>, f64>) -> BTreeMap<Vec<Symbol>, f64> {
    let mut out = Poly::default();
    for (ma, &ca) in a {
        for (mb, &cb) in b {
            let mut m = ma.clone();
            m.extend_from_slice(mb);
            m.sort();
            out.push(m, ca * cb);
        }
    }
    out.collapse()
}

impl SymbolicRhs {
    /// Builds a canonical expression from raw terms; like terms are merged and
    /// exact zeros removed.
    pub fn new(channels: Vec<Vec<SymbolicTerm>>) -> Result<Self> {
        let mut out = Vec::with_capacity(channels.len());
        for terms in channels {
            let mut poly = Poly::default();
            for t in terms {
                if !t.coeff.is_finite() {
                    return Err(Error::NonFinite("symbolic coefficient".into()));
                }
                let mut m = t.monomial;
                m.sort();
                poly.push(m, t.coeff);
            }
            out.push(Self::terms_of(poly.collapse()));
        }
        Ok(SymbolicRhs { channels: out })
    }

    fn terms_of(map: BTreeMap<Vec<Symbol>, f64>) -> Vec<SymbolicTerm> {
        let mut terms: Vec<SymbolicTerm> = map
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(monomial, coeff)| SymbolicTerm { coeff, monomial })
            .collect();
        terms.sort_by(|a, b| canonical(&a.monomial, &b.monomial));
        terms
    }

    pub fn channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &[SymbolicTerm] {
        &self.channels[c]
    }

    /// Coefficient of `monomial` (in any factor order) in channel `c`, zero if absent.
    pub fn coeff(&self, c: usize, monomial: &[Symbol]) -> f64 {
        let mut m = monomial.to_vec();
        m.sort();
        self.channels[c].iter().find(|t| t.monomial == m).map_or(0.0, |t| t.coeff)
    }

    /// Drops terms with `|coeff| < threshold`.
    pub fn prune(&self, threshold: f64) -> Result<(SymbolicRhs, Pruned)> {
        if !(threshold >= 0.0) {
            return Err(Error::InvalidArgument(format!("prune threshold must be >= 0, got {threshold}")));
        }
        Ok(self.prune_by(|_| threshold))
    }

    /// Drops terms below `fraction` of the largest `|coeff|` of their channel.
    pub fn prune_relative(&self, fraction: f64) -> Result<(SymbolicRhs, Pruned)> {
        if !(fraction >= 0.0) {
            return Err(Error::InvalidArgument(format!("prune fraction must be >= 0, got {fraction}")));
        }
        Ok(self.prune_by(|terms| fraction * terms.iter().fold(0.0f64, |m, t| m.max(t.coeff.abs()))))
    }

    fn prune_by(&self, threshold: impl Fn(&[SymbolicTerm]) -> f64) -> (SymbolicRhs, Pruned) {
        let mut kept = Vec::new();
        let mut pruned = Pruned::default();
        for terms in &self.channels {
            let th = threshold(terms);
            let (k, d): (Vec<_>, Vec<_>) = terms.iter().cloned().partition(|t| t.coeff.abs() >= th);
            pruned.dropped_mass += d.iter().map(|t| t.coeff.abs()).sum::<f64>();
            kept.push(k);
            pruned.dropped.push(d);
        }
        (SymbolicRhs { channels: kept }, pruned)
    }

    /// Plain-text equations with four significant digits, one line per channel.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (c, terms) in self.channels.iter().enumerate() {
            let _ = write!(out, "{}_t =", channel_name(c));
            if terms.is_empty() {
                out.push_str(" 0");
            }
            for (i, t) in terms.iter().enumerate() {
                let sign = match (i, t.coeff < 0.0) {
                    (0, false) => " ",
                    (0, true) => " -",
                    (_, false) => " + ",
                    (_, true) => " - ",
                };
                let _ = write!(out, "{sign}{}", format_sig(t.coeff.abs(), 4));
                let m = monomial_text(&t.monomial);
                if !m.is_empty() {
                    let _ = write!(out, " {m}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// `{channel: [{coeff, monomial: [symbol, ...]}, ...], ...}`.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (c, terms) in self.channels.iter().enumerate() {
            let list: Vec<Value> = terms
                .iter()
                .map(|t| json!({"coeff": t.coeff, "monomial": t.monomial.iter().map(Symbol::name).collect::<Vec<_>>()}))
                .collect();
            map.insert(channel_name(c), Value::Array(list));
        }
        Value::Object(map)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("symbolic JSON: {m}"));
        let obj = value.as_object().ok_or_else(|| bad("expected an object"))?;
        let mut channels: Vec<Option<Vec<SymbolicTerm>>> = vec![None; obj.len()];
        for (name, list) in obj {
            let c = channel_index(name).filter(|&c| c < obj.len()).ok_or_else(|| Error::UnknownSymbol(name.clone()))?;
            let mut terms = Vec::new();
            for t in list.as_array().ok_or_else(|| bad("channel entry must be a list"))? {
                let coeff = t.get("coeff").and_then(Value::as_f64).ok_or_else(|| bad("term without coeff"))?;
                let mono = t.get("monomial").and_then(Value::as_array).ok_or_else(|| bad("term without monomial"))?;
                let mut monomial = Vec::new();
                for s in mono {
                    let s = s.as_str().ok_or_else(|| bad("symbols must be strings"))?;
                    if s != "1" {
                        monomial.push(Symbol::parse(s)?);
                    }
                }
                terms.push(SymbolicTerm { coeff, monomial });
            }
            channels[c] = Some(terms);
        }
        SymbolicRhs::new(channels.into_iter().map(Option::unwrap_or_default).collect())
    }
}

fn monomial_text(m: &[Symbol]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < m.len() {
        let j = m[i..].iter().take_while(|s| **s == m[i]).count();
        let name = m[i].name();
        parts.push(if j > 1 { format!("{name}^{j}") } else { name });
        i += j;
    }
    parts.join("·")
}

/// `x` rounded to `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.prec$e}", prec = digits - 1)
    }
}

/// Expands the model's product block and highway into a polynomial.
///
/// Trainable layers must use pointwise (size 1) filters; fixed-stencil layers
/// contribute their derivative symbols.
pub fn extract<T: Real>(model: &PercnnModel<T>) -> Result<SymbolicRhs> {
    let cfg = model.config();
    let s = model.channels();
    let nc = cfg.pi.n_channels;
    let frozen = cfg.pi.frozen_first_layer.as_ref();
    let offenders: Vec<String> = (0..cfg.pi.n_layers)
        .filter(|&l| !(l == 0 && frozen.is_some()) && cfg.pi.kernel != 1)
        .map(|l| format!("pi.layer{l} (trainable {k}x{k} filters)", k = cfg.pi.kernel))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Uninterpretable(offenders));
    }
    let value = |name: &str| model.param(name).map(|p| p.value.iter().map(|v| v.as_f64()).collect::<Vec<f64>>());

    let mut products: Vec<BTreeMap<Vec<Symbol>, f64>> = vec![BTreeMap::from([(Vec::new(), 1.0)]); nc];
    for l in 0..cfg.pi.n_layers {
        let forms: Vec<BTreeMap<Vec<Symbol>, f64>> = if let (0, Some(fz)) = (l, frozen) {
            fz.iter().map(|f| BTreeMap::from([(vec![Symbol::of_op(f.input, f.op)], 1.0)])).collect()
        } else {
            let w = value(&format!("pi.layer{l}.weight")).unwrap();
            let b = value(&format!("pi.layer{l}.bias"));
            (0..nc)
                .map(|c| {
                    let mut form = BTreeMap::new();
                    for i in 0..s {
                        form.insert(vec![Symbol::State(i)], w[c * s + i]);
                    }
                    if let Some(b) = &b {
                        form.insert(Vec::new(), b[c]);
                    }
                    form
                })
                .collect()
        };
        for (p, f) in products.iter_mut().zip(&forms) {
            *p = multiply(p, f);
        }
    }
    let mix = value("pi.mix.weight").unwrap();
    let mix_b = value("pi.mix.bias");
    let coeffs = model.highway_coefficients();
    let channels = (0..s)
        .map(|o| {
            let mut poly = Poly::default();
            for (c, prod) in products.iter().enumerate() {
                for (m, &v) in prod {
                    poly.push(m.clone(), mix[o * nc + c] * v);
                }
            }
            if let Some(b) = &mix_b {
                poly.push(Vec::new(), b[o]);
            }
            if let Some(&mu) = coeffs.get(o) {
                poly.push(vec![Symbol::Laplacian(o)], mu);
            }
            SymbolicRhs::terms_of(poly.collapse())
        })
        .collect();
    Ok(SymbolicRhs { channels })
}

/// Evaluates the polynomial pointwise on `state`, computing derivative
/// symbols with the finite-difference stencils under boundary `bc`.
pub fn evaluate<T: Real>(sym: &SymbolicRhs, state: &Field<T>, bc: &PaddingMode) -> Result<Field<T>> {
    let grid = state.grid();
    let mut cache: BTreeMap<DiffOp, Field<T>> = BTreeMap::new();
    for terms in &sym.channels {
        for t in terms {
            for s in &t.monomial {
                if s.channel() >= state.channels() {
                    return Err(Error::UnknownSymbol(s.name()));
                }
                if let Symbol::Derivative(_, a) = s {
                    if *a >= grid.ndim() {
                        return Err(Error::UnknownSymbol(s.name()));
                    }
                }
                if !cache.contains_key(&s.op()) {
                    let f = if s.op() == DiffOp::Identity { state.clone() } else { apply(s.op(), state, bc)? };
                    cache.insert(s.op(), f);
                }
            }
        }
    }
    let n = grid.len();
    let mut out = Field::zeros(grid.clone(), sym.channels());
    for (c, terms) in sym.channels.iter().enumerate() {
        let factors: Vec<(T, Vec<&[T]>)> = terms
            .iter()
            .map(|t| (T::of(t.coeff), t.monomial.iter().map(|s| cache[&s.op()].channel(s.channel())).collect()))
            .collect();
        let dst = out.channel_mut(c);
        for (i, d) in dst.iter_mut().enumerate().take(n) {
            let mut acc = T::zero();
            for (coeff, fs) in &factors {
                acc = acc + fs.iter().fold(*coeff, |p, f| p * f[i]);
            }
            *d = acc;
        }
    }
    Ok(out)
}
