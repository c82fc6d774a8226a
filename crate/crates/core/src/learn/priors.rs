use std::collections::BTreeMap;

use crate::mapper::PriorSpec;

use super::LearnError;

/// Dirichlet pseudo-counts for one resident, per parent-condition label. The label
/// `default` names the default distribution; `*` applies to every row.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPrior {
    pub states: Vec<String>,
    base: Vec<f64>,
    rows: BTreeMap<String, Vec<f64>>,
}

impl DirichletPrior {
    pub fn uniform(states: &[String], alpha: f64) -> Self {
        DirichletPrior {
            states: states.to_vec(),
            base: vec![alpha; states.len()],
            rows: BTreeMap::new(),
        }
    }

    pub fn from_spec(states: &[String], spec: Option<&PriorSpec>) -> Self {
        let mut p = DirichletPrior::uniform(states, 1.0);
        match spec {
            Some(PriorSpec::Uniform(a)) => p.base = vec![*a; states.len()],
            Some(PriorSpec::PerState(list)) => {
                for (s, a) in list {
                    p.set("*", s, *a);
                }
            }
            None => {}
        }
        p
    }

    pub fn set(&mut self, label: &str, state: &str, alpha: f64) {
        let Some(i) = self.states.iter().position(|s| s == state) else { return };
        if label == "*" {
            self.base[i] = alpha;
            for row in self.rows.values_mut() {
                row[i] = alpha;
            }
        } else {
            let base = self.base.clone();
            self.rows.entry(label.to_string()).or_insert(base)[i] = alpha;
        }
    }

    pub fn row(&self, label: &str) -> Vec<f64> {
        self.rows.get(label).cloned().unwrap_or_else(|| self.base.clone())
    }
}

/// Pseudo-count overrides read from a priors file. Each line is
/// `Resident Label State=alpha ...`, where the label is a parent-condition label such
/// as `VehicleType=Tracked`, `default`, or `*`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Priors {
    entries: Vec<(String, String, String, f64)>,
}

impl Priors {
    pub fn parse(text: &str) -> Result<Priors, LearnError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| LearnError::Priors {
                line: i + 1,
                message: m.to_string(),
            };
            let mut parts = line.split_whitespace();
            let resident = parts.next().ok_or_else(|| bad("missing resident"))?;
            let label = parts.next().ok_or_else(|| bad("missing parent-condition label"))?;
            let mut any = false;
            for cell in parts {
                let (state, alpha) = cell.split_once('=').ok_or_else(|| bad("expected State=alpha"))?;
                let alpha: f64 = alpha.parse().map_err(|_| bad("pseudo-count is not a number"))?;
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(bad("pseudo-counts must be positive"));
                }
                entries.push((resident.to_string(), label.to_string(), state.to_string(), alpha));
                any = true;
            }
            if !any {
                return Err(bad("no State=alpha cells"));
            }
        }
        Ok(Priors { entries })
    }

    pub fn apply(&self, resident: &str, prior: &mut DirichletPrior) {
        for (r, label, state, alpha) in &self.entries {
            if r == resident && label == "*" {
                prior.set(label, state, *alpha);
            }
        }
        for (r, label, state, alpha) in &self.entries {
            if r == resident && label != "*" {
                prior.set(label, state, *alpha);
            }
        }
    }
}
