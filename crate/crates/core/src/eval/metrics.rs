use std::fmt;
use std::str::FromStr;

use super::EvalError;

pub fn mae(predicted: &[f64], observed: &[f64]) -> Result<f64, EvalError> {
    if predicted.len() != observed.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), observed.len()));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    Ok(predicted.iter().zip(observed).map(|(p, y)| (p - y).abs()).sum::<f64>() / predicted.len() as f64)
}

pub fn brier(probability: f64, outcome: bool) -> f64 {
    (probability - outcome as u8 as f64).powi(2)
}

pub fn mean_brier(probabilities: &[f64], outcomes: &[bool]) -> Result<f64, EvalError> {
    if probabilities.len() != outcomes.len() {
        return Err(EvalError::LengthMismatch(probabilities.len(), outcomes.len()));
    }
    if probabilities.is_empty() {
        return Ok(0.0);
    }
    Ok(probabilities.iter().zip(outcomes).map(|(p, o)| brier(*p, *o)).sum::<f64>() / probabilities.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    AvgCrps,
    Mae,
    Brier,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::AvgCrps => "avg_crps",
            Metric::Mae => "mae",
            Metric::Brier => "brier",
        }
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "avg_crps" => Ok(Metric::AvgCrps),
            "mae" => Ok(Metric::Mae),
            "brier" => Ok(Metric::Brier),
            _ => Err(format!("unknown metric {s}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Le,
    Lt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criterion {
    pub metric: Metric,
    pub comparator: Comparator,
    pub threshold: f64,
}

impl Criterion {
    pub fn holds(&self, value: f64) -> bool {
        match self.comparator {
            Comparator::Le => value <= self.threshold,
            Comparator::Lt => value < self.threshold,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.comparator {
            Comparator::Le => "<=",
            Comparator::Lt => "<",
        };
        write!(f, "{} {c} {}", self.metric.name(), crate::script::format_number(self.threshold))
    }
}

/// Measured values; a metric that does not apply stays `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Scores {
    pub avg_crps: Option<f64>,
    pub mae: Option<f64>,
    pub brier: Option<f64>,
}

impl Scores {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::AvgCrps => self.avg_crps,
            Metric::Mae => self.mae,
            Metric::Brier => self.brier,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub criterion: Criterion,
    pub value: Option<f64>,
    pub pass: bool,
}

/// Performance criteria, one `metric comparator threshold` per line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Criteria(pub Vec<Criterion>);

impl Criteria {
    pub fn parse(text: &str) -> Result<Criteria, EvalError> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| EvalError::Criteria { line: i + 1, message: m };
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [metric, cmp, threshold] = parts[..] else {
                return Err(err(format!("expected `metric comparator threshold`, found {line:?}")));
            };
            let metric = metric.parse().map_err(err)?;
            let comparator = match cmp {
                "<=" | "≤" => Comparator::Le,
                "<" => Comparator::Lt,
                _ => return Err(err(format!("unknown comparator {cmp}"))),
            };
            let threshold: f64 = threshold.parse().map_err(|_| err(format!("bad threshold {threshold}")))?;
            if !threshold.is_finite() {
                return Err(err(format!("threshold {threshold} is not finite")));
            }
            out.push(Criterion {
                metric,
                comparator,
                threshold,
            });
        }
        Ok(Criteria(out))
    }

    /// Missing metrics fail their criterion.
    pub fn check(&self, scores: &Scores) -> Vec<CriterionResult> {
        self.0
            .iter()
            .map(|c| {
                let value = scores.get(c.metric);
                CriterionResult {
                    criterion: *c,
                    value,
                    pass: value.is_some_and(|v| c.holds(v)),
                }
            })
            .collect()
    }
}
