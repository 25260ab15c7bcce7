//! User-defined coefficient fields from expression strings.
//!
//! Expressions see the variables `y1 … yd` and `pi` and the functions
//! `sin cos tan exp ln sqrt abs`. Write real literals (`0.5`, not `1/2`):
//! integer division truncates.

use std::fmt;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};

use super::CoefficientField;
use crate::error::{Error, Result};

const FUNCTIONS: [(&str, &str); 7] = [
    ("sin", "math::sin"),
    ("cos", "math::cos"),
    ("tan", "math::tan"),
    ("exp", "math::exp"),
    ("ln", "math::ln"),
    ("sqrt", "math::sqrt"),
    ("abs", "math::abs"),
];

/// Drift and σ given as expression strings; derivatives come from finite differences.
pub struct ExpressionField {
    dim: usize,
    drift: Vec<Node<DefaultNumericTypes>>,
    sigma: Vec<Node<DefaultNumericTypes>>,
    source: (Vec<String>, Vec<Vec<String>>),
}

impl fmt::Debug for ExpressionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpressionField").field("drift", &self.source.0).field("sigma", &self.source.1).finish()
    }
}

fn rewrite_functions(src: &str) -> String {
    let mut out = String::with_capacity(src.len() + 16);
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == ':') {
                i += 1;
            }
            let ident: String = chars[start..i].iter().collect();
            match FUNCTIONS.iter().find(|(short, _)| *short == ident) {
                Some((_, full)) => out.push_str(full),
                None => out.push_str(&ident),
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

fn parse(src: &str) -> Result<Node<DefaultNumericTypes>> {
    build_operator_tree(&rewrite_functions(src)).map_err(|e| Error::Expression(format!("{src:?}: {e}")))
}

impl ExpressionField {
    /// `sigma` is given row by row.
    pub fn new(drift: &[String], sigma: &[Vec<String>]) -> Result<Self> {
        let dim = drift.len();
        if dim == 0 || sigma.len() != dim || sigma.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument(format!("drift has {dim} entries; sigma must be {dim}x{dim}")));
        }
        let field = Self {
            dim,
            drift: drift.iter().map(|s| parse(s)).collect::<Result<_>>()?,
            sigma: sigma.iter().flatten().map(|s| parse(s)).collect::<Result<_>>()?,
            source: (drift.to_vec(), sigma.to_vec()),
        };
        // Surface unknown variables and type errors at construction.
        let mut b = vec![0.0; dim];
        let mut s = vec![0.0; dim * dim];
        field.try_values(&vec![0.25; dim], &mut b, &mut s)?;
        Ok(field)
    }

    fn try_values(&self, y: &[f64], b: &mut [f64], sigma: &mut [f64]) -> Result<()> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let err = |e: evalexpr::EvalexprError<DefaultNumericTypes>| Error::Expression(e.to_string());
        ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI)).map_err(err)?;
        for (i, v) in y.iter().enumerate() {
            ctx.set_value(format!("y{}", i + 1), Value::Float(*v)).map_err(err)?;
        }
        for (out, node) in b.iter_mut().zip(&self.drift) {
            *out = node.eval_number_with_context(&ctx).map_err(err)?;
        }
        for (out, node) in sigma.iter_mut().zip(&self.sigma) {
            *out = node.eval_number_with_context(&ctx).map_err(err)?;
        }
        Ok(())
    }
}

impl CoefficientField for ExpressionField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn values(&self, y: &[f64], b: &mut [f64], sigma: &mut [f64]) {
        if self.try_values(y, b, sigma).is_err() {
            b.fill(f64::NAN);
            sigma.fill(f64::NAN);
        }
    }
}
