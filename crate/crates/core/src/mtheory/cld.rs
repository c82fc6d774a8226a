use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CldError {
    #[error("no values supplied for parent {0}")]
    UnknownParentRef(String),
    #[error("cardinality is only defined for single-condition clauses")]
    WrongVariant,
    #[error("probability of {state} is negative ({value})")]
    NegativeProbability { state: String, value: f64 },
    #[error("probabilities cannot be normalized")]
    Unnormalizable,
    #[error("negative variance {0}")]
    NegativeVariance(f64),
    #[error("unknown name {0}")]
    UnknownName(String),
    #[error("expression is not linear-Gaussian")]
    NotLinear,
    #[error("expression must be deterministic")]
    NotDeterministic,
    #[error("parameter theta({0},{1}) has not been learned")]
    Unlearned(u32, u32),
    #[error("division by zero")]
    DivisionByZero,
    #[error("parent {0} has non-numeric values")]
    NotNumeric(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Average,
    Sum,
    Multiply,
}

impl Aggregate {
    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Average => "average",
            Aggregate::Sum => "sum",
            Aggregate::Multiply => "multiply",
        }
    }

    pub fn from_name(s: &str) -> Option<Aggregate> {
        match s {
            "average" => Some(Aggregate::Average),
            "sum" => Some(Aggregate::Sum),
            "multiply" => Some(Aggregate::Multiply),
            _ => None,
        }
    }

    /// Empty bags aggregate to the operator's identity (0 for average).
    pub fn apply(self, xs: &[f64]) -> f64 {
        match self {
            Aggregate::Average if xs.is_empty() => 0.0,
            Aggregate::Average => xs.iter().sum::<f64>() / xs.len() as f64,
            Aggregate::Sum => xs.iter().sum(),
            Aggregate::Multiply => xs.iter().product(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Name(String),
    Theta(u32, u32),
    Cardinality(String),
    Aggregate(Aggregate, String),
    /// `NormalDist(mean, variance)`
    Normal(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn has_theta(&self) -> bool {
        match self {
            Expr::Theta(..) => true,
            Expr::Normal(a, b) | Expr::Binary(_, a, b) => a.has_theta() || b.has_theta(),
            Expr::Neg(a) => a.has_theta(),
            _ => false,
        }
    }

    fn collect_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Name(n) | Expr::Aggregate(_, n) => out.push(n),
            Expr::Normal(a, b) | Expr::Binary(_, a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
            Expr::Neg(a) => a.collect_names(out),
            _ => {}
        }
    }
}

/// Parent-condition clause of a local distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cpc {
    /// `some v have (Parent = state)`
    Some { ovs: Vec<String>, parent: String, state: String },
    /// `some v.t have (A = x, B = y)`: every listed parent takes its state.
    Config { ovs: Vec<String>, conditions: Vec<(String, String)> },
}

impl Cpc {
    /// Single ordinary variable and single condition give `Some`, anything else `Config`.
    pub fn from_parts(ovs: Vec<String>, mut conditions: Vec<(String, String)>) -> Cpc {
        if ovs.len() == 1 && conditions.len() == 1 {
            let (parent, state) = conditions.pop().expect("one condition");
            Cpc::Some { ovs, parent, state }
        } else {
            Cpc::Config { ovs, conditions }
        }
    }

    pub fn ovs(&self) -> &[String] {
        match self {
            Cpc::Some { ovs, .. } | Cpc::Config { ovs, .. } => ovs,
        }
    }

    pub fn conditions(&self) -> Vec<(&str, &str)> {
        match self {
            Cpc::Some { parent, state, .. } => vec![(parent, state)],
            Cpc::Config { conditions, .. } => conditions.iter().map(|(p, s)| (p.as_str(), s.as_str())).collect(),
        }
    }

    /// `Parent=state[,Parent=state...]`
    pub fn label(&self) -> String {
        self.conditions()
            .iter()
            .map(|(p, s)| format!("{p}={s}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// True when every condition is met by at least one instance of its parent.
    pub fn evaluate(&self, a: &ParentAssignment) -> Result<bool, CldError> {
        for (p, s) in self.conditions() {
            let values = a.instances(p)?;
            if !values.iter().any(|v| matches!(v, ParentValue::State(x) if x == s)) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Number of parent instances satisfying a single-condition clause.
    pub fn cardinality(&self, a: &ParentAssignment) -> Result<usize, CldError> {
        match self {
            Cpc::Some { parent, state, .. } => Ok(a
                .instances(parent)?
                .iter()
                .filter(|v| matches!(v, ParentValue::State(x) if x == state))
                .count()),
            Cpc::Config { .. } => Err(CldError::WrongVariant),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParentValue {
    State(String),
    Real(f64),
}

/// Values of every parent instance, grouped by parent name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParentAssignment {
    values: BTreeMap<String, Vec<ParentValue>>,
}

impl ParentAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, parent: impl Into<String>, values: Vec<ParentValue>) -> Self {
        self.set(parent, values);
        self
    }

    pub fn set(&mut self, parent: impl Into<String>, values: Vec<ParentValue>) {
        self.values.insert(parent.into(), values);
    }

    pub fn push(&mut self, parent: &str, value: ParentValue) {
        self.values.entry(parent.to_string()).or_default().push(value);
    }

    pub fn instances(&self, parent: &str) -> Result<&[ParentValue], CldError> {
        self.values
            .get(parent)
            .map(|v| v.as_slice())
            .ok_or_else(|| CldError::UnknownParentRef(parent.to_string()))
    }

    pub fn reals(&self, parent: &str) -> Result<Vec<f64>, CldError> {
        self.instances(parent)?
            .iter()
            .map(|v| match v {
                ParentValue::Real(x) => Ok(*x),
                ParentValue::State(_) => Err(CldError::NotNumeric(parent.to_string())),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalCsd {
    pub entries: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTerm {
    pub parent: String,
    pub coefficient: f64,
    pub aggregate: Option<Aggregate>,
}

/// `intercept + Σ coefficient·parent + NormalDist(0, variance)`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianCsd {
    pub intercept: f64,
    pub terms: Vec<LinearTerm>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormulaCsd {
    Categorical(Vec<(String, Expr)>),
    Continuous(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Csd {
    Categorical(CategoricalCsd),
    LinearGaussian(LinearGaussianCsd),
    Formula(FormulaCsd),
}

/// A concrete distribution for one configuration of parent values.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Categorical(Vec<(String, f64)>),
    Gaussian { mean: f64, variance: f64 },
}

impl Distribution {
    pub fn probability(&self, state: &str) -> Option<f64> {
        match self {
            Distribution::Categorical(e) => e.iter().find(|(s, _)| s == state).map(|(_, p)| *p),
            Distribution::Gaussian { .. } => None,
        }
    }
}

const PROB_TOL: f64 = 1e-9;
// Probabilities written with nine significant digits may be off by a few 1e-9 in total.
const SUM_TOL: f64 = 1e-6;

impl Csd {
    pub fn categorical<S: Into<String>>(entries: impl IntoIterator<Item = (S, f64)>) -> Csd {
        Csd::Categorical(CategoricalCsd {
            entries: entries.into_iter().map(|(s, p)| (s.into(), p)).collect(),
        })
    }

    pub fn gaussian(mean: f64, variance: f64) -> Csd {
        Csd::LinearGaussian(LinearGaussianCsd {
            intercept: mean,
            terms: vec![],
            variance,
        })
    }

    /// States in declaration order, for categorical distributions.
    pub fn states(&self) -> Option<Vec<&str>> {
        match self {
            Csd::Categorical(c) => Some(c.entries.iter().map(|(s, _)| s.as_str()).collect()),
            Csd::Formula(FormulaCsd::Categorical(e)) => Some(e.iter().map(|(s, _)| s.as_str()).collect()),
            _ => None,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, Csd::LinearGaussian(_) | Csd::Formula(FormulaCsd::Continuous(_)))
    }

    pub fn has_theta(&self) -> bool {
        match self {
            Csd::Formula(FormulaCsd::Categorical(e)) => e.iter().any(|(_, x)| x.has_theta()),
            Csd::Formula(FormulaCsd::Continuous(x)) => x.has_theta(),
            _ => false,
        }
    }

    /// Names of parents mentioned by the distribution.
    pub fn parent_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        match self {
            Csd::Categorical(_) => {}
            Csd::LinearGaussian(l) => out.extend(l.terms.iter().map(|t| t.parent.as_str())),
            Csd::Formula(FormulaCsd::Categorical(e)) => e.iter().for_each(|(_, x)| x.collect_names(&mut out)),
            Csd::Formula(FormulaCsd::Continuous(x)) => x.collect_names(&mut out),
        }
        out
    }

    pub fn validate(&self) -> Result<(), CldError> {
        match self {
            Csd::Categorical(c) => {
                for (s, p) in &c.entries {
                    if !(p.is_finite() && *p >= -PROB_TOL && *p <= 1.0 + PROB_TOL) {
                        return Err(CldError::NegativeProbability {
                            state: s.clone(),
                            value: *p,
                        });
                    }
                }
                let sum: f64 = c.entries.iter().map(|(_, p)| p).sum();
                if (sum - 1.0).abs() > SUM_TOL {
                    return Err(CldError::Unnormalizable);
                }
                Ok(())
            }
            Csd::LinearGaussian(l) if !(l.variance >= 0.0 && l.variance.is_finite()) => {
                Err(CldError::NegativeVariance(l.variance))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates the distribution for the given parent values. `cpc` is the clause that
    /// selected this distribution and is used by `CARDINALITY`.
    pub fn evaluate(&self, a: &ParentAssignment, cpc: Option<&Cpc>) -> Result<Distribution, CldError> {
        match self {
            Csd::Categorical(c) => Ok(Distribution::Categorical(c.entries.clone())),
            Csd::LinearGaussian(l) => {
                let mut mean = l.intercept;
                for t in &l.terms {
                    let xs = a.reals(&t.parent)?;
                    mean += t.coefficient * t.aggregate.unwrap_or(Aggregate::Average).apply(&xs);
                }
                Ok(Distribution::Gaussian {
                    mean,
                    variance: l.variance,
                })
            }
            Csd::Formula(FormulaCsd::Continuous(e)) => {
                let ctx = Eval { a, cpc, states: &[] };
                let (mean, variance) = ctx.gauss(e, &mut vec![])?;
                Ok(Distribution::Gaussian { mean, variance })
            }
            Csd::Formula(FormulaCsd::Categorical(entries)) => {
                let ctx = Eval { a, cpc, states: entries };
                let mut probs = Vec::with_capacity(entries.len());
                for (s, e) in entries {
                    let p = ctx.deterministic(e, &mut vec![s.as_str()])?;
                    if p < -PROB_TOL || !p.is_finite() {
                        return Err(CldError::NegativeProbability { state: s.clone(), value: p });
                    }
                    probs.push((s.clone(), p.max(0.0)));
                }
                let sum: f64 = probs.iter().map(|(_, p)| p).sum();
                if !(sum > 0.0 && sum.is_finite()) {
                    return Err(CldError::Unnormalizable);
                }
                Ok(Distribution::Categorical(probs.into_iter().map(|(s, p)| (s, p / sum)).collect()))
            }
        }
    }
}

struct Eval<'a> {
    a: &'a ParentAssignment,
    cpc: Option<&'a Cpc>,
    states: &'a [(String, Expr)],
}

impl<'a> Eval<'a> {
    fn deterministic(&self, e: &'a Expr, stack: &mut Vec<&'a str>) -> Result<f64, CldError> {
        match self.gauss(e, stack)? {
            (m, v) if v == 0.0 => Ok(m),
            _ => Err(CldError::NotDeterministic),
        }
    }

    /// Mean and variance of an expression whose only random part is `NormalDist` terms.
    fn gauss(&self, e: &'a Expr, stack: &mut Vec<&'a str>) -> Result<(f64, f64), CldError> {
        Ok(match e {
            Expr::Number(x) => (*x, 0.0),
            Expr::Theta(i, j) => return Err(CldError::Unlearned(*i, *j)),
            Expr::Name(n) => {
                if let Some((s, x)) = self.states.iter().find(|(s, _)| s == n) {
                    if stack.contains(&s.as_str()) {
                        return Err(CldError::Invalid(format!("state {s} is defined in terms of itself")));
                    }
                    stack.push(s);
                    let v = self.deterministic(x, stack)?;
                    stack.pop();
                    (v, 0.0)
                } else {
                    let xs = self.a.reals(n).map_err(|e| match e {
                        CldError::UnknownParentRef(n) => CldError::UnknownName(n),
                        e => e,
                    })?;
                    (Aggregate::Average.apply(&xs), 0.0)
                }
            }
            Expr::Aggregate(f, n) => (f.apply(&self.a.reals(n)?), 0.0),
            Expr::Cardinality(_) => match self.cpc {
                Some(c) => (c.cardinality(self.a)? as f64, 0.0),
                None => (0.0, 0.0),
            },
            Expr::Normal(m, v) => {
                let m = self.deterministic(m, stack)?;
                let v = self.deterministic(v, stack)?;
                if v < 0.0 || !v.is_finite() {
                    return Err(CldError::NegativeVariance(v));
                }
                (m, v)
            }
            Expr::Neg(x) => {
                let (m, v) = self.gauss(x, stack)?;
                (-m, v)
            }
            Expr::Binary(op, x, y) => {
                let (m1, v1) = self.gauss(x, stack)?;
                let (m2, v2) = self.gauss(y, stack)?;
                match op {
                    BinOp::Add => (m1 + m2, v1 + v2),
                    BinOp::Sub => (m1 - m2, v1 + v2),
                    BinOp::Mul if v1 == 0.0 => (m1 * m2, m1 * m1 * v2),
                    BinOp::Mul if v2 == 0.0 => (m1 * m2, m2 * m2 * v1),
                    BinOp::Mul => return Err(CldError::NotLinear),
                    BinOp::Div if v2 != 0.0 => return Err(CldError::NotLinear),
                    BinOp::Div if m2 == 0.0 => return Err(CldError::DivisionByZero),
                    BinOp::Div => (m1 / m2, v1 / (m2 * m2)),
                }
            }
        })
    }
}

/// A class-level local distribution: clauses tried in order, then the default.
#[derive(Debug, Clone, PartialEq)]
pub struct Cld {
    pub branches: Vec<(Cpc, Csd)>,
    pub default: Csd,
}

impl Cld {
    pub fn default_only(default: Csd) -> Cld {
        Cld {
            branches: vec![],
            default,
        }
    }

    /// Index of the first clause that holds, `None` for the default.
    pub fn select(&self, a: &ParentAssignment) -> Result<Option<usize>, CldError> {
        for (i, (cpc, _)) in self.branches.iter().enumerate() {
            if cpc.evaluate(a)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    pub fn resolve(&self, a: &ParentAssignment) -> Result<Distribution, CldError> {
        match self.select(a)? {
            Some(i) => self.branches[i].1.evaluate(a, Some(&self.branches[i].0)),
            None => self.default.evaluate(a, None),
        }
    }

    pub fn csds(&self) -> impl Iterator<Item = &Csd> {
        self.branches.iter().map(|(_, c)| c).chain(std::iter::once(&self.default))
    }

    pub fn has_theta(&self) -> bool {
        self.csds().any(|c| c.has_theta())
    }

    /// Parents named by clauses or distributions, in first-mention order.
    pub fn parent_names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (cpc, csd) in &self.branches {
            for (p, _) in cpc.conditions() {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
            for p in csd.parent_names() {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        for p in self.default.parent_names() {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), CldError> {
        let continuous = self.default.is_continuous();
        for c in self.csds() {
            c.validate()?;
            if c.is_continuous() != continuous {
                return Err(CldError::Invalid("mixes categorical and continuous distributions".into()));
            }
        }
        if let Some(states) = self.default.states() {
            for c in self.csds() {
                let mut a = c.states().unwrap_or_default();
                let mut b = states.clone();
                a.sort();
                b.sort();
                if a != b {
                    return Err(CldError::Invalid("clauses assign different state sets".into()));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Cpc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
