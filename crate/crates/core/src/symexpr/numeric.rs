//! Numeric evaluation and randomized identity testing.
//!
//! Symbolic passes in this crate never prove identities algebraically;
//! instead a seeded [`Sampler`] evaluates candidate identities at random
//! points and applies a scale-aware tolerance. The scale of an evaluation is
//! the largest intermediate magnitude encountered, so `x^2 - x^2 + 1e6*y -
//! 1e6*y` still tests as zero even though cancellation leaves f64 noise far
//! above any absolute cutoff.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::symexpr::expr::{Expr, ExprNode, UnaryFn};
use crate::symexpr::table::{VarId, VarKind, VarTable};
use crate::symexpr::SymError;

/// Default RNG seed for derivations and tests.
pub const DEFAULT_SEED: u64 = 0x5EED;

fn domain(op: &str, message: String) -> SymError {
    SymError::Domain {
        context: op.to_string(),
        message,
    }
}

fn eval_rec(
    e: &Expr,
    lookup: &dyn Fn(VarId) -> f64,
    scale: &mut f64,
) -> Result<f64, SymError> {
    let v = match e.node() {
        ExprNode::Const(c) => *c,
        ExprNode::Var(id) => lookup(*id),
        ExprNode::Add(a, b) => eval_rec(a, lookup, scale)? + eval_rec(b, lookup, scale)?,
        ExprNode::Sub(a, b) => eval_rec(a, lookup, scale)? - eval_rec(b, lookup, scale)?,
        ExprNode::Mul(a, b) => eval_rec(a, lookup, scale)? * eval_rec(b, lookup, scale)?,
        ExprNode::Div(a, b) => {
            let num = eval_rec(a, lookup, scale)?;
            let den = eval_rec(b, lookup, scale)?;
            if den == 0.0 {
                return Err(domain("/", "division by zero".to_string()));
            }
            num / den
        }
        ExprNode::Pow(a, b) => {
            let base = eval_rec(a, lookup, scale)?;
            let exp = eval_rec(b, lookup, scale)?;
            if base == 0.0 && exp < 0.0 {
                return Err(domain("^", "zero base with negative exponent".to_string()));
            }
            if base < 0.0 && exp.fract() != 0.0 {
                return Err(domain(
                    "^",
                    "negative base with non-integer exponent".to_string(),
                ));
            }
            base.powf(exp)
        }
        ExprNode::Neg(a) => -eval_rec(a, lookup, scale)?,
        ExprNode::Func(f, a) => {
            let x = eval_rec(a, lookup, scale)?;
            match f {
                UnaryFn::Sin => x.sin(),
                UnaryFn::Cos => x.cos(),
                UnaryFn::Tan => {
                    if x.cos().abs() < 1e-300 {
                        return Err(domain("tan", format!("pole near x = {x}")));
                    }
                    x.tan()
                }
                UnaryFn::Exp => x.exp(),
                UnaryFn::Log => {
                    if x <= 0.0 {
                        return Err(domain("log", format!("non-positive argument {x}")));
                    }
                    x.ln()
                }
                UnaryFn::Sqrt => {
                    if x < 0.0 {
                        return Err(domain("sqrt", format!("negative argument {x}")));
                    }
                    x.sqrt()
                }
            }
        }
    };
    if !v.is_finite() {
        return Err(domain("eval", format!("non-finite intermediate {v}")));
    }
    if v.abs() > *scale {
        *scale = v.abs();
    }
    Ok(v)
}

/// Evaluate `e` with variable values supplied by `lookup`.
///
/// # Errors
///
/// [`SymError::Domain`] on division by zero, invalid `log`/`sqrt`/`tan`/`^`
/// arguments, or any non-finite intermediate.
pub fn eval(e: &Expr, lookup: &dyn Fn(VarId) -> f64) -> Result<f64, SymError> {
    let mut scale = 0.0;
    eval_rec(e, lookup, &mut scale)
}

/// Like [`eval`], but also returns the largest intermediate magnitude, which
/// calibrates relative zero tests.
pub fn eval_with_scale(
    e: &Expr,
    lookup: &dyn Fn(VarId) -> f64,
) -> Result<(f64, f64), SymError> {
    let mut scale = 0.0;
    let v = eval_rec(e, lookup, &mut scale)?;
    Ok((v, scale))
}

/// Evaluate against a dense assignment vector indexed by [`VarId::index`].
pub fn eval_at(e: &Expr, point: &[f64]) -> Result<f64, SymError> {
    eval(e, &|id| point[id.index()])
}

/// Outcome of a randomized zero test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    /// Within tolerance at every valid sample point (at least one).
    True,
    /// Exceeded tolerance at some sample point.
    False,
    /// Every sample point fell outside the expression's domain.
    Undecidable,
}

impl Truth {
    pub fn is_true(self) -> bool {
        matches!(self, Truth::True)
    }
}

/// Configuration for randomized identity testing.
#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    /// Sample points per query.
    pub trials: usize,
    /// Relative tolerance; an evaluation `v` with scale `s` counts as zero
    /// when `|v| <= tol * (1 + s)`.
    pub tol: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            trials: 16,
            tol: 1e-9,
        }
    }
}

/// Seeded random sampler answering identity questions about expressions.
///
/// Coordinates (time, states, velocities, controls, momenta, multipliers,
/// auxiliaries) draw from `U[-1, 1]`. Parameters follow their
/// [`ParamSpec`](crate::symexpr::ParamSpec): an explicit range samples
/// uniformly (re-drawing values too close to zero when the parameter is
/// flagged nonzero), a fixed value is used verbatim, and an unconstrained
/// parameter draws from `U[-1, 1]`.
pub struct Sampler {
    cfg: SamplerConfig,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64, cfg: SamplerConfig) -> Sampler {
        Sampler {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_seed(seed: u64) -> Sampler {
        Sampler::new(seed, SamplerConfig::default())
    }

    pub fn config(&self) -> SamplerConfig {
        self.cfg
    }

    fn sample_param(&mut self, table: &VarTable, id: VarId) -> f64 {
        let spec = table.param_spec(id).cloned().unwrap_or_default();
        if let Some((lo, hi)) = spec.range {
            let cutoff = 1e-3 * f64::max(1.0, (hi - lo).abs());
            for _ in 0..64 {
                let x = self.rng.gen_range(lo..=hi);
                if !spec.nonzero || x.abs() > cutoff {
                    return x;
                }
            }
            // Degenerate range hugging zero; fall back to an endpoint.
            return if hi.abs() >= lo.abs() { hi } else { lo };
        }
        if let Some(v) = spec.value {
            return v;
        }
        if spec.nonzero {
            loop {
                let x: f64 = self.rng.gen_range(-1.0..=1.0);
                if x.abs() > 1e-3 {
                    return x;
                }
            }
        }
        self.rng.gen_range(-1.0..=1.0)
    }

    /// Draw a full assignment for every variable in `table`, indexed by
    /// [`VarId::index`].
    pub fn assignment(&mut self, table: &VarTable) -> Vec<f64> {
        let mut out = Vec::with_capacity(table.len());
        for id in table.ids() {
            let v = match table.kind(id) {
                VarKind::Parameter => self.sample_param(table, id),
                _ => self.rng.gen_range(-1.0..=1.0),
            };
            out.push(v);
        }
        out
    }

    fn within(&self, v: f64, scale: f64) -> bool {
        v.abs() <= self.cfg.tol * (1.0 + scale)
    }

    /// Is `e` zero at every sampled point of its domain?
    pub fn is_zero(&mut self, e: &Expr, table: &VarTable) -> Truth {
        if e.is_zero_const() {
            return Truth::True;
        }
        let mut valid = 0usize;
        for _ in 0..self.cfg.trials {
            let point = self.assignment(table);
            match eval_with_scale(e, &|id| point[id.index()]) {
                Ok((v, scale)) => {
                    valid += 1;
                    if !self.within(v, scale) {
                        return Truth::False;
                    }
                }
                Err(_) => continue,
            }
        }
        if valid == 0 {
            Truth::Undecidable
        } else {
            Truth::True
        }
    }

    /// Is `e` bounded away from zero at *every* sampled point? Used to
    /// certify pivot coefficients before dividing by them; a single domain
    /// error or near-zero evaluation disqualifies the candidate.
    pub fn is_nonvanishing(&mut self, e: &Expr, table: &VarTable) -> bool {
        for _ in 0..self.cfg.trials {
            let point = self.assignment(table);
            match eval_with_scale(e, &|id| point[id.index()]) {
                Ok((v, scale)) => {
                    if self.within(v, scale) {
                        return false;
                    }
                }
                Err(_) => return false,
            }
        }
        true
    }

    /// Test whether `e1 = c * e2` for a single constant `c` across the sample
    /// domain, returning the constant.
    ///
    /// Both identically zero yields `Some(1.0)`; `e1` zero against a nonzero
    /// `e2` yields `Some(0.0)`; a zero `e2` against a nonzero `e1` (or any
    /// point violating proportionality) yields `None`.
    pub fn proportional(&mut self, e1: &Expr, e2: &Expr, table: &VarTable) -> Option<f64> {
        let mut pairs: Vec<(f64, f64, f64)> = Vec::new();
        for _ in 0..self.cfg.trials {
            let point = self.assignment(table);
            let r1 = eval_with_scale(e1, &|id| point[id.index()]);
            let r2 = eval_with_scale(e2, &|id| point[id.index()]);
            if let (Ok((v1, s1)), Ok((v2, s2))) = (r1, r2) {
                pairs.push((v1, v2, f64::max(s1, s2)));
            }
        }
        if pairs.is_empty() {
            return None;
        }
        let zero1 = pairs.iter().all(|&(v1, _, s)| self.within(v1, s));
        let zero2 = pairs.iter().all(|&(_, v2, s)| self.within(v2, s));
        match (zero1, zero2) {
            (true, true) => return Some(1.0),
            (true, false) => return Some(0.0),
            (false, true) => return None,
            (false, false) => {}
        }
        // Anchor the ratio at the sample where e2 is largest relative to its
        // scale, then verify it everywhere.
        let (av1, av2, _) = *pairs
            .iter()
            .max_by(|a, b| {
                let ra = a.1.abs() / (1.0 + a.2);
                let rb = b.1.abs() / (1.0 + b.2);
                ra.partial_cmp(&rb).unwrap()
            })
            .unwrap();
        if av2 == 0.0 {
            return None;
        }
        let c = av1 / av2;
        for &(v1, v2, s) in &pairs {
            let resid = v1 - c * v2;
            let gauge = 1.0 + s + c.abs() * (1.0 + s);
            if resid.abs() > 1e-6 * gauge {
                return None;
            }
        }
        Some(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::parse::parse;
    use crate::symexpr::table::ParamSpec;

    fn table() -> VarTable {
        let mut t = VarTable::new();
        t.register("x", VarKind::State).unwrap();
        t.register("y", VarKind::State).unwrap();
        t.register_param(
            "b3",
            ParamSpec {
                value: Some(1.0),
                range: None,
                nonzero: true,
            },
        )
        .unwrap();
        t
    }

    #[test]
    fn eval_domain_errors() {
        let t = table();
        let e = parse("log(x)", &t).unwrap();
        assert!(eval(&e, &|_| -1.0).is_err());
        assert!(eval(&e, &|_| 2.0).is_ok());
        let e = parse("x / y", &t).unwrap();
        let x = t.lookup("x").unwrap();
        assert!(eval(&e, &|id| if id == x { 1.0 } else { 0.0 }).is_err());
    }

    #[test]
    fn scale_guards_cancellation() {
        let t = table();
        // (x + 1e12) - 1e12 - x is zero but leaves rounding noise ~1e-4.
        let e = parse("(x + 1e12) - 1e12 - x", &t).unwrap();
        let mut s = Sampler::with_seed(7);
        assert_eq!(s.is_zero(&e, &t), Truth::True);
    }

    #[test]
    fn zero_and_nonzero() {
        let t = table();
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        let zero = parse("(x + y)^2 - x^2 - 2*x*y - y^2", &t).unwrap();
        assert_eq!(s.is_zero(&zero, &t), Truth::True);
        let nonzero = parse("x*y - y", &t).unwrap();
        assert_eq!(s.is_zero(&nonzero, &t), Truth::False);
        // sqrt of a negative at every point: undecidable.
        let undec = parse("sqrt(-1 - x^2)", &t).unwrap();
        assert_eq!(s.is_zero(&undec, &t), Truth::Undecidable);
    }

    #[test]
    fn nonvanishing_pivots() {
        let t = table();
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        let b3 = parse("b3", &t).unwrap();
        assert!(s.is_nonvanishing(&b3, &t), "fixed nonzero parameter");
        // A bare coordinate is generically nonzero: random samples land on
        // its zero set with probability zero, so it qualifies as a pivot.
        let x = parse("x", &t).unwrap();
        assert!(s.is_nonvanishing(&x, &t));
        let pos = parse("1 + x^2", &t).unwrap();
        assert!(s.is_nonvanishing(&pos, &t));
        assert!(!s.is_nonvanishing(&Expr::zero(), &t), "identical zero");
        // Partial domain: some samples error out, disqualifying the pivot.
        let partial = parse("sqrt(x)", &t).unwrap();
        assert!(!s.is_nonvanishing(&partial, &t));
    }

    #[test]
    fn proportionality() {
        let t = table();
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        let e1 = parse("2*x + 2*y", &t).unwrap();
        let e2 = parse("x + y", &t).unwrap();
        let c = s.proportional(&e1, &e2, &t).unwrap();
        assert!((c - 2.0).abs() < 1e-9);
        let e3 = parse("x - y", &t).unwrap();
        assert!(s.proportional(&e1, &e3, &t).is_none());
        let z = Expr::zero();
        assert_eq!(s.proportional(&z, &e2, &t), Some(0.0));
    }

    #[test]
    fn determinism_across_samplers() {
        let t = table();
        let mut s1 = Sampler::with_seed(42);
        let mut s2 = Sampler::with_seed(42);
        assert_eq!(s1.assignment(&t), s2.assignment(&t));
        assert_eq!(s1.assignment(&t), s2.assignment(&t));
    }
}
