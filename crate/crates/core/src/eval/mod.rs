//! Scoring rules, performance criteria, and the heater simulation experiment.

mod crps;
mod heater;
mod metrics;

use crate::learn::LearnError;
use crate::mapper::MapperError;
use crate::relational::RelationalError;
use crate::ssbn::InferError;

pub use crps::{crps_gaussian, crps_mixture};
pub use heater::{
    baseline_forecast, generate_heater_db, run_heater_experiment, CaseScore, HeaterConfig, HeaterData, HeaterReport, HEATER_RULES,
};
pub use metrics::{brier, mae, mean_brier, Comparator, Criteria, Criterion, CriterionResult, Metric, Scores};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions, {1} observations")]
    LengthMismatch(usize, usize),
    #[error("criteria line {line}: {message}")]
    Criteria { line: usize, message: String },
    #[error("invalid heater configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Table(String),
    #[error(transparent)]
    Relational(#[from] RelationalError),
    #[error(transparent)]
    Mapper(#[from] MapperError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Infer(#[from] InferError),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::LengthMismatch(..) => "E_LENGTH_MISMATCH",
            EvalError::Criteria { .. } => "E_CRITERIA",
            EvalError::Config(_) => "E_CONFIG",
            EvalError::Table(_) => "E_EVAL",
            EvalError::Relational(e) => e.code(),
            EvalError::Mapper(e) => e.code(),
            EvalError::Learn(e) => e.code(),
            EvalError::Infer(e) => e.code(),
        }
    }
}

/// Scores a prediction table. Rows carry `case` and either `mean`, `variance` and
/// `actual`, or `probability` and `outcome` (0/1 or True/False). When `truth` is given,
/// its `actual`/`outcome` column is joined on `case`.
pub fn score_table(predictions: &str, truth: Option<&str>) -> Result<Scores, EvalError> {
    let pred = read_table(predictions)?;
    let truth = truth.map(read_table).transpose()?;
    let col = |t: &Table, name: &str| t.header.iter().position(|h| h == name);
    let lookup = |case: &str, name: &str| -> Result<String, EvalError> {
        let (t, key) = match &truth {
            Some(t) => (t, col(t, "case").ok_or_else(|| EvalError::Table("truth has no case column".into()))?),
            None => (&pred, col(&pred, "case").expect("checked")),
        };
        let c = col(t, name).ok_or_else(|| EvalError::Table(format!("no {name} column")))?;
        t.rows
            .iter()
            .find(|r| r[key] == case)
            .map(|r| r[c].clone())
            .ok_or_else(|| EvalError::Table(format!("no observation for case {case}")))
    };
    let num = |s: &str| s.parse::<f64>().map_err(|_| EvalError::Table(format!("not a number: {s}")));
    let case = col(&pred, "case").ok_or_else(|| EvalError::Table("predictions have no case column".into()))?;
    let mut scores = Scores::default();
    if let (Some(m), Some(v)) = (col(&pred, "mean"), col(&pred, "variance")) {
        let (mut crps, mut means, mut ys) = (0.0, vec![], vec![]);
        for r in &pred.rows {
            let y = num(&lookup(&r[case], "actual")?)?;
            let (mean, var) = (num(&r[m])?, num(&r[v])?);
            crps += crps_gaussian(mean, var, y);
            means.push(mean);
            ys.push(y);
        }
        scores.avg_crps = Some(crps / pred.rows.len().max(1) as f64);
        scores.mae = Some(mae(&means, &ys)?);
    } else if let Some(p) = col(&pred, "probability") {
        let (mut ps, mut os) = (vec![], vec![]);
        for r in &pred.rows {
            let o = match lookup(&r[case], "outcome")?.as_str() {
                "1" | "True" | "true" => true,
                "0" | "False" | "false" => false,
                other => return Err(EvalError::Table(format!("outcome {other} is not binary"))),
            };
            ps.push(num(&r[p])?);
            os.push(o);
        }
        scores.brier = Some(mean_brier(&ps, &os)?);
    } else {
        return Err(EvalError::Table("predictions need mean and variance, or probability".into()));
    }
    Ok(scores)
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(text: &str) -> Result<Table, EvalError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| EvalError::Table(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()).map_err(|e| EvalError::Table(e.to_string())))
        .collect::<Result<_, _>>()?;
    Ok(Table { header, rows })
}
